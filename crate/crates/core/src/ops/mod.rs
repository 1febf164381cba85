//! Pure forward kernels and their hand-derived backward passes.
//!
//! Everything here is a plain function over [`Tensor`](crate::tensor::Tensor)
//! values; the tape in [`crate::tape`] records which of these ran and replays
//! the matching backward functions in reverse order.

pub mod batchnorm;
pub mod conv;
pub mod dense;
pub mod dropout;
pub mod loss;
pub mod pointwise;
pub mod pool;
pub mod lstm_gates;
pub mod structural;

pub use batchnorm::{batch_norm_infer, batch_norm_train, update_moving, BatchStats};
pub use conv::{conv2d, conv_geometry, ConvGeom, Padding};
pub use dense::dense;
pub use dropout::dropout_train;
pub use loss::{bce_loss, BCE_CLAMP};
pub use pointwise::{activation, add, elementwise, hadamard, mul_broadcast_batch, Activation, Elementwise};
pub use pool::{global_avg_pool, max_pool3d};
pub use structural::{concat_last_axis, index_time, slice_last_axis, stack_time, sum_all};
