//! Dense tensors, reverse-mode differentiation, the encoder/denoiser
//! networks, Adam, and the weight file format.

pub mod adam;
pub mod io;
pub mod model;
pub mod params;
pub mod tape;
pub mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use io::{decode_params, encode_params, load_params, save_params};
pub use model::{timestep_encoding, LossGroup, LossSample, Model, ModelConfig};
pub use params::ParamSet;
pub use tape::{Gradients, Tape, Var};
pub use tensor::{ConvGeom, Scalar, Tensor};
