mod conv;
mod elementwise;
mod layout;
mod linalg;
mod loss;
mod norm;
mod reduce;

pub use conv::{conv2d, grouped_conv1d_mix};
pub use loss::smooth_l1;
pub use norm::{layer_norm, softmax};
pub use reduce::argmax;
