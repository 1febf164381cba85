//! Sample extraction, preprocessing, sequence-consistent augmentation,
//! dataset manifests, and the packed binary formats.
//!
//! A sample is a run of consecutive frames from one video; augmentation
//! draws one transform tuple per sample and applies it to every frame, so
//! it can never inject the inter-frame artifacts the classifier hunts for.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, FormatError, Result};
use crate::rng::{derive, hash_str, CounterRng, Domain};
use crate::synth::SynthSpec;
use crate::tensor::Tensor;

/// Rec.601 luma weights used for frame differencing.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Real,
    Fake,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::Real => 0,
            Label::Fake => 1,
        }
    }
    pub fn from_u8(v: u8) -> Result<Label> {
        match v {
            0 => Ok(Label::Real),
            1 => Ok(Label::Fake),
            other => Err(Error::data(format!("label must be 0 or 1, got {other}"))),
        }
    }
}

impl Serialize for Label {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.as_u8())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = u8::deserialize(d)?;
        Label::from_u8(v).map_err(serde::de::Error::custom)
    }
}

/// One clip: consecutive preprocessed frames plus its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSample {
    /// [T, H, W, 3], values in [0, 1].
    pub frames: Tensor,
    pub label: Label,
    pub video_id: String,
    pub start_frame: usize,
}

impl SequenceSample {
    pub fn seq_len(&self) -> usize {
        self.frames.shape()[0]
    }
}

/// Where a video's frames come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VideoSource {
    /// Packed frames file, relative to the manifest's directory.
    Path(String),
    /// Procedurally generated; regenerated on demand.
    Synth(SynthSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub video_id: String,
    pub source: VideoSource,
    pub label: Label,
    pub frames: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<VideoRecord>,
    pub val: Vec<VideoRecord>,
    pub test: Vec<VideoRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub seq_len: usize,
    pub samples_per_video: usize,
    pub splits: Splits,
}

impl DatasetManifest {
    pub fn split(&self, split: Split) -> &[VideoRecord] {
        match split {
            Split::Train => &self.splits.train,
            Split::Val => &self.splits.val,
            Split::Test => &self.splits.test,
        }
    }

    /// No video may appear in more than one split.
    pub fn validate_disjoint(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for split in Split::ALL {
            for rec in self.split(split) {
                if !seen.insert(rec.video_id.clone()) {
                    return Err(Error::data(format!(
                        "video '{}' appears in more than one split",
                        rec.video_id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<DatasetManifest> {
        Ok(serde_json::from_str(json)?)
    }
}

/// Videos dropped by the equal-class-count policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DroppedVideos {
    pub real: usize,
    pub fake: usize,
}

/// Partition `videos` into disjoint, class-balanced splits.
pub fn make_manifest(
    name: &str,
    videos: &[VideoRecord],
    fractions: (f64, f64, f64),
    seq_len: usize,
    samples_per_video: usize,
    seed: u64,
) -> Result<(DatasetManifest, DroppedVideos)> {
    let (f_train, f_val, f_test) = fractions;
    if f_train <= 0.0 || f_val <= 0.0 || f_test <= 0.0 {
        return Err(Error::config("split fractions must be positive"));
    }
    if (f_train + f_val + f_test - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!(
            "split fractions must sum to 1, got {}",
            f_train + f_val + f_test
        )));
    }
    let mut real: Vec<&VideoRecord> = videos.iter().filter(|v| v.label == Label::Real).collect();
    let mut fake: Vec<&VideoRecord> = videos.iter().filter(|v| v.label == Label::Fake).collect();
    let usable = real.len().min(fake.len());
    let n_train = (f_train * usable as f64).floor() as usize;
    let n_val = (f_val * usable as f64).floor() as usize;
    let n_test = usable - n_train - n_val;
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(Error::data(format!(
            "not enough videos: {} real and {} fake give splits {n_train}/{n_val}/{n_test} per class",
            real.len(),
            fake.len()
        )));
    }
    let dropped = DroppedVideos {
        real: real.len() - usable,
        fake: fake.len() - usable,
    };
    let mut rng = CounterRng::for_domain(seed, Domain::Manifest, &[hash_str(name)]);
    rng.shuffle(&mut real);
    rng.shuffle(&mut fake);

    let mut splits = Splits::default();
    let take = |list: &[&VideoRecord], from: usize, n: usize| -> Vec<VideoRecord> {
        list[from..from + n].iter().map(|r| (*r).clone()).collect()
    };
    for class in [&real, &fake] {
        splits.train.extend(take(class, 0, n_train));
        splits.val.extend(take(class, n_train, n_val));
        splits.test.extend(take(class, n_train + n_val, n_test));
    }
    let manifest = DatasetManifest {
        name: name.to_string(),
        seq_len,
        samples_per_video,
        splits,
    };
    manifest.validate_disjoint()?;
    Ok((manifest, dropped))
}

// ---------------------------------------------------------------------------
// Extraction
// ---------------------------------------------------------------------------

/// Draw `n` clips of `seq_len` consecutive frames. Start indices are
/// distinct when the video is long enough, drawn with replacement otherwise.
pub fn extract_samples(
    video_id: &str,
    label: Label,
    frames: &[Tensor],
    n: usize,
    seq_len: usize,
    seed: u64,
) -> Result<Vec<SequenceSample>> {
    if seq_len == 0 {
        return Err(Error::contract("seq_len must be >= 1"));
    }
    if frames.len() < seq_len {
        return Err(Error::data(format!(
            "video '{video_id}' has {} frames, need at least {seq_len}",
            frames.len()
        )));
    }
    let possible = frames.len() - seq_len + 1;
    let mut rng = CounterRng::for_domain(seed, Domain::Extract, &[hash_str(video_id)]);
    let starts = rng.indices(possible, n);
    starts
        .into_iter()
        .map(|start| {
            let clip = stack_frames(&frames[start..start + seq_len])?;
            Ok(SequenceSample {
                frames: clip,
                label,
                video_id: video_id.to_string(),
                start_frame: start,
            })
        })
        .collect()
}

/// [H,W,3] frames into one [T,H,W,3] tensor.
pub fn stack_frames(frames: &[Tensor]) -> Result<Tensor> {
    let shape = frames[0].shape();
    let mut data = Vec::with_capacity(frames.len() * frames[0].numel());
    for f in frames {
        if f.shape() != shape {
            return Err(Error::dimension(format!(
                "frame shapes differ: {:?} vs {:?}",
                shape,
                f.shape()
            )));
        }
        data.extend_from_slice(f.data());
    }
    let mut s = vec![frames.len()];
    s.extend_from_slice(shape);
    Tensor::new(s, data)
}

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

/// Pixel-space crop box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

/// Corner-aligned bilinear sample of `frame` [H,W,3] at fractional coords.
fn bilinear(frame: &Tensor, y: f64, x: f64) -> [f64; 3] {
    let (h, w) = (frame.shape()[0], frame.shape()[1]);
    let d = frame.data();
    let yc = y.clamp(0.0, (h - 1) as f64);
    let xc = x.clamp(0.0, (w - 1) as f64);
    let y0 = yc.floor() as usize;
    let x0 = xc.floor() as usize;
    let y1 = (y0 + 1).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let fy = yc - y0 as f64;
    let fx = xc - x0 as f64;
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let v00 = d[(y0 * w + x0) * 3 + c];
        let v01 = d[(y0 * w + x1) * 3 + c];
        let v10 = d[(y1 * w + x0) * 3 + c];
        let v11 = d[(y1 * w + x1) * 3 + c];
        *o = v00 * (1.0 - fy) * (1.0 - fx)
            + v01 * (1.0 - fy) * fx
            + v10 * fy * (1.0 - fx)
            + v11 * fy * fx;
    }
    out
}

/// Crop (squared around the box center), resize to `out_hw`, clamp to [0,1].
pub fn preprocess(frame: &Tensor, crop: Option<CropBox>, out_hw: usize) -> Result<Tensor> {
    let s = frame.shape();
    if s.len() != 3 || s[2] != 3 {
        return Err(Error::dimension(format!(
            "preprocess expects [H,W,3], got {s:?}"
        )));
    }
    let (h, w) = (s[0], s[1]);
    let region = match crop {
        Some(c) => {
            if c.w == 0 || c.h == 0 || c.x + c.w > w || c.y + c.h > h {
                return Err(Error::data(format!(
                    "crop {c:?} outside frame bounds {h}x{w}"
                )));
            }
            // Square the box around its center, shifted inside the frame.
            let side = c.w.max(c.h).min(h).min(w);
            let cx = c.x as f64 + c.w as f64 / 2.0;
            let cy = c.y as f64 + c.h as f64 / 2.0;
            let x0 = (cx - side as f64 / 2.0).round().max(0.0) as usize;
            let y0 = (cy - side as f64 / 2.0).round().max(0.0) as usize;
            let x0 = x0.min(w - side);
            let y0 = y0.min(h - side);
            CropBox {
                x: x0,
                y: y0,
                w: side,
                h: side,
            }
        }
        None => CropBox { x: 0, y: 0, w, h }, // whole frame
    };

    let mut out = Vec::with_capacity(out_hw * out_hw * 3);
    let sy = if out_hw > 1 {
        (region.h - 1) as f64 / (out_hw - 1) as f64
    } else {
        0.0
    };
    let sx = if out_hw > 1 {
        (region.w - 1) as f64 / (out_hw - 1) as f64
    } else {
        0.0
    };
    for oy in 0..out_hw {
        for ox in 0..out_hw {
            let v = bilinear(
                frame,
                region.y as f64 + oy as f64 * sy,
                region.x as f64 + ox as f64 * sx,
            );
            for c in v {
                out.push(c.clamp(0.0, 1.0));
            }
        }
    }
    Tensor::new(vec![out_hw, out_hw, 3], out)
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentationSpec {
    /// Multiplicative brightness range: factor in [1-d, 1+d].
    pub brightness_delta: f64,
    /// Additive shift on the 0..255 scale, applied to all channels after
    /// division by 255.
    pub channel_shift: f64,
    /// Zoom range: scale in [1-z, 1+z].
    pub zoom: f64,
    /// Rotation range in degrees.
    pub rotation: f64,
    pub hflip_prob: f64,
    /// Darkening-only brightness variant (factor in [0.7, 1.0]).
    pub darken_only_brightness: bool,
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        AugmentationSpec {
            brightness_delta: 0.30,
            channel_shift: 50.0,
            zoom: 0.20,
            rotation: 30.0,
            hflip_prob: 0.5,
            darken_only_brightness: false,
        }
    }
}

impl AugmentationSpec {
    /// No-op spec, handy in tests.
    pub fn identity() -> Self {
        AugmentationSpec {
            brightness_delta: 0.0,
            channel_shift: 0.0,
            zoom: 0.0,
            rotation: 0.0,
            hflip_prob: 0.0,
            darken_only_brightness: false,
        }
    }
}

/// The transform tuple drawn once per sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrawnTransform {
    pub brightness: f64,
    pub shift: f64,
    pub zoom: f64,
    pub rotation_deg: f64,
    pub hflip: bool,
}

pub fn draw_transform(spec: &AugmentationSpec, seed: u64) -> DrawnTransform {
    let mut rng = CounterRng::for_domain(seed, Domain::Augment, &[]);
    let brightness = if spec.darken_only_brightness {
        rng.range(0.7, 1.0)
    } else {
        1.0 + rng.symmetric(spec.brightness_delta)
    };
    DrawnTransform {
        brightness,
        shift: rng.symmetric(spec.channel_shift) / 255.0,
        zoom: 1.0 + rng.symmetric(spec.zoom),
        rotation_deg: rng.symmetric(spec.rotation),
        hflip: rng.uniform() < spec.hflip_prob,
    }
}

fn transform_frame(frame: &Tensor, t: &DrawnTransform) -> Tensor {
    let s = frame.shape();
    let (h, w) = (s[0], s[1]);
    let cy = (h - 1) as f64 / 2.0;
    let cx = (w - 1) as f64 / 2.0;
    let theta = t.rotation_deg.to_radians();
    let (sin, cos) = theta.sin_cos();
    let mut out = Vec::with_capacity(frame.numel());
    for oy in 0..h {
        for ox in 0..w {
            let mut dx = ox as f64 - cx;
            let dy = oy as f64 - cy;
            if t.hflip {
                dx = -dx;
            }
            // Inverse of rotate-then-zoom about the center; out-of-range
            // coordinates clamp to the nearest edge pixel.
            let ix = cx + (cos * dx + sin * dy) / t.zoom;
            let iy = cy + (-sin * dx + cos * dy) / t.zoom;
            let v = bilinear(frame, iy, ix);
            for c in v {
                out.push((c * t.brightness + t.shift).clamp(0.0, 1.0));
            }
        }
    }
    Tensor::new(s.to_vec(), out).expect("transform shape")
}

/// One transform tuple per sample, applied identically to every frame.
pub fn augment(sample: &SequenceSample, spec: &AugmentationSpec, seed: u64) -> SequenceSample {
    let t = draw_transform(spec, seed);
    let s = sample.frames.shape().to_vec();
    let per = s[1] * s[2] * s[3];
    let mut data = Vec::with_capacity(sample.frames.numel());
    for step in 0..s[0] {
        let frame = Tensor::new(
            vec![s[1], s[2], s[3]],
            sample.frames.data()[step * per..(step + 1) * per].to_vec(),
        )
        .expect("frame view");
        data.extend_from_slice(transform_frame(&frame, &t).data());
    }
    SequenceSample {
        frames: Tensor::new(s, data).expect("augment shape"),
        label: sample.label,
        video_id: sample.video_id.clone(),
        start_frame: sample.start_frame,
    }
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

/// Per-pixel absolute luminance difference of consecutive frames:
/// [T,H,W,3] -> [T-1,H,W].
pub fn frame_difference(sample: &SequenceSample) -> Result<Tensor> {
    let s = sample.frames.shape();
    let t = s[0];
    if t < 2 {
        return Err(Error::contract(
            "frame_difference needs at least two frames",
        ));
    }
    let (h, w) = (s[1], s[2]);
    let d = sample.frames.data();
    let lum = |ti: usize, pi: usize| -> f64 {
        let base = (ti * h * w + pi) * 3;
        LUMA[0] * d[base] + LUMA[1] * d[base + 1] + LUMA[2] * d[base + 2]
    };
    let mut out = Vec::with_capacity((t - 1) * h * w);
    for ti in 0..t - 1 {
        for pi in 0..h * w {
            out.push((lum(ti + 1, pi) - lum(ti, pi)).abs());
        }
    }
    Tensor::new(vec![t - 1, h, w], out)
}

// ---------------------------------------------------------------------------
// Packed binary formats
// ---------------------------------------------------------------------------

pub const SEQS_MAGIC: [u8; 4] = *b"SEQS";
pub const SEQS_VERSION: u32 = 1;
pub const FRMS_MAGIC: [u8; 4] = *b"FRMS";
pub const FRMS_VERSION: u32 = 1;

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn put_tensor_f32(out: &mut Vec<u8>, t: &Tensor) {
    out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in t.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, context: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(FormatError::Truncated {
                context: context.to_string(),
            }
            .into());
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self, c: &str) -> Result<u8> {
        Ok(self.take(1, c)?[0])
    }
    fn u32(&mut self, c: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, c)?.try_into().unwrap()))
    }
    fn u64(&mut self, c: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, c)?.try_into().unwrap()))
    }
    fn string(&mut self, c: &str) -> Result<String> {
        let n = self.u32(c)? as usize;
        String::from_utf8(self.take(n, c)?.to_vec())
            .map_err(|_| Error::from(FormatError::Truncated { context: c.to_string() }))
    }
    fn tensor_f32(&mut self, c: &str) -> Result<Tensor> {
        let rank = self.u32(c)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(self.u64(c)? as usize);
        }
        let numel: usize = shape.iter().product();
        let raw = self.take(numel * 4, c)?;
        let data: Vec<f64> = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        Tensor::new(shape, data)
    }
    fn expect_magic(&mut self, magic: [u8; 4], version: u32) -> Result<()> {
        let found = self.take(4, "magic")?;
        if found != magic {
            return Err(FormatError::BadMagic {
                expected: magic,
                found: found.try_into().unwrap(),
            }
            .into());
        }
        let v = self.u32("version")?;
        if v != version {
            return Err(FormatError::Version {
                found: v,
                supported: version,
            }
            .into());
        }
        Ok(())
    }
}

/// Serialize samples (values narrowed to f32).
pub fn write_packed_samples(samples: &[SequenceSample]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&SEQS_MAGIC);
    out.extend_from_slice(&SEQS_VERSION.to_le_bytes());
    out.extend_from_slice(&(samples.len() as u32).to_le_bytes());
    for s in samples {
        out.push(s.label.as_u8());
        put_str(&mut out, &s.video_id);
        out.extend_from_slice(&(s.start_frame as u32).to_le_bytes());
        put_tensor_f32(&mut out, &s.frames);
    }
    out
}

pub fn read_packed_samples(bytes: &[u8]) -> Result<Vec<SequenceSample>> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    c.expect_magic(SEQS_MAGIC, SEQS_VERSION)?;
    let count = c.u32("sample count")? as usize;
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let ctx = format!("sample {i}");
        let label = Label::from_u8(c.u8(&ctx)?)?;
        let video_id = c.string(&ctx)?;
        let start = c.u32(&ctx)? as usize;
        let frames = c.tensor_f32(&ctx)?;
        out.push(SequenceSample {
            frames,
            label,
            video_id,
            start_frame: start,
        });
    }
    Ok(out)
}

/// Serialize one video's raw frames as a single [T,H,W,3] f32 tensor.
pub fn write_video_frames(video_id: &str, frames: &[Tensor]) -> Result<Vec<u8>> {
    let stacked = stack_frames(frames)?;
    let mut out = Vec::new();
    out.extend_from_slice(&FRMS_MAGIC);
    out.extend_from_slice(&FRMS_VERSION.to_le_bytes());
    put_str(&mut out, video_id);
    put_tensor_f32(&mut out, &stacked);
    Ok(out)
}

pub fn read_video_frames(bytes: &[u8]) -> Result<(String, Vec<Tensor>)> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    c.expect_magic(FRMS_MAGIC, FRMS_VERSION)?;
    let video_id = c.string("video id")?;
    let stacked = c.tensor_f32("frames")?;
    let s = stacked.shape();
    if s.len() != 4 || s[3] != 3 {
        return Err(Error::dimension(format!(
            "frames file must hold [T,H,W,3], got {s:?}"
        )));
    }
    let per = s[1] * s[2] * s[3];
    let frames = (0..s[0])
        .map(|t| {
            Tensor::new(
                vec![s[1], s[2], s[3]],
                stacked.data()[t * per..(t + 1) * per].to_vec(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((video_id, frames))
}

/// Optional per-frame crop sidecar next to a frames file.
pub fn read_crop_sidecar(path: &Path) -> Result<Option<Vec<CropBox>>> {
    let sidecar = path.with_extension("crops.json");
    if !sidecar.exists() {
        return Ok(None);
    }
    let json = std::fs::read_to_string(sidecar)?;
    Ok(Some(serde_json::from_str(&json)?))
}

// ---------------------------------------------------------------------------
// Materialization: manifest records to model-ready samples
// ---------------------------------------------------------------------------

/// Produce the raw frames of one record.
pub fn load_video_frames(record: &VideoRecord, base_dir: Option<&Path>) -> Result<Vec<Tensor>> {
    match &record.source {
        VideoSource::Path(rel) => {
            let path = match base_dir {
                Some(dir) => dir.join(rel),
                None => Path::new(rel).to_path_buf(),
            };
            let bytes = std::fs::read(&path)
                .map_err(|e| Error::data(format!("cannot read '{}': {e}", path.display())))?;
            let (_, frames) = read_video_frames(&bytes)?;
            Ok(frames)
        }
        VideoSource::Synth(spec) => Ok(crate::synth::synth_video(spec)?.frames),
    }
}

/// Extract and preprocess every sample of one split. Deterministic in
/// `seed`; work is parallel over videos with per-video derived streams.
pub fn split_samples(
    manifest: &DatasetManifest,
    split: Split,
    out_hw: usize,
    seed: u64,
    base_dir: Option<&Path>,
) -> Result<Vec<SequenceSample>> {
    use rayon::prelude::*;
    let records = manifest.split(split);
    if records.is_empty() {
        return Err(Error::data(format!(
            "manifest '{}' has an empty {} split",
            manifest.name,
            split.name()
        )));
    }
    let per_video: Vec<Result<Vec<SequenceSample>>> = records
        .par_iter()
        .map(|rec| {
            let frames = load_video_frames(rec, base_dir)?;
            let crops = match &rec.source {
                VideoSource::Path(rel) => {
                    let path = match base_dir {
                        Some(dir) => dir.join(rel),
                        None => Path::new(rel).to_path_buf(),
                    };
                    read_crop_sidecar(&path)?
                }
                VideoSource::Synth(_) => None,
            };
            let processed: Vec<Tensor> = frames
                .iter()
                .enumerate()
                .map(|(i, f)| preprocess(f, crops.as_ref().map(|c| c[i.min(c.len() - 1)]), out_hw))
                .collect::<Result<Vec<_>>>()?;
            extract_samples(
                &rec.video_id,
                rec.label,
                &processed,
                manifest.samples_per_video,
                manifest.seq_len,
                derive(seed, &[hash_str(&rec.video_id)]),
            )
        })
        .collect();
    let mut out = Vec::new();
    for r in per_video {
        out.extend(r?);
    }
    Ok(out)
}
