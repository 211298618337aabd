//! Dense numerics: tensors, parameter sets and the differentiable layers the
//! classifier is built from. Every layer has a hand-written backward pass.

mod conv;
mod dense;
mod dropout;
mod gradcheck;
mod gru;
mod init;
mod loss;
mod optim;
mod params;
mod tensor;

pub use conv::{conv1d_backward, conv1d_forward, conv1d_out_len, ConvGrads};
pub use dense::{dense_backward, dense_forward, relu, relu_backward, DenseGrads};
pub use dropout::{apply_mask, dropout_mask};
pub use gradcheck::finite_diff_check;
pub use gru::{
    gru_backward, gru_forward, gru_forward_taped, GruGrads, GruTape, GruWeights, GRU_B_HH, GRU_B_IH,
    GRU_W_HH, GRU_W_IH,
};
pub use init::uniform_fan_in;
pub use loss::{softmax_cross_entropy, softmax_cross_entropy_backward, softmax_rows, CrossEntropy};
pub use optim::{sgd_step, sgd_step_in_place};
pub use params::{GradSet, ParamSet};
pub use tensor::Tensor;
