//! From-scratch numerical core shared by the CNN classifier and the LSTM models.

pub mod adam;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod network;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{finite_diff_check, Differentiable, GradCheckReport};
pub use layers::{conv2d_forward, dense_forward, maxpool2_forward, Activation, LayerParams};
pub use loss::{cross_entropy_loss, one_hot, softmax};
pub use network::{Layer, Network, NetworkObjective};
pub use tensor::Tensor;
