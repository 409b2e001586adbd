//! Fixation-while-denoising diffusion policies for top-down pick-and-place.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fddp;
pub mod geometry;
pub mod nn;
pub mod scene;
pub mod schedules;

pub use error::{Error, Result};
pub use geometry::{ActionLayout, ActionVec, CameraTransform, Frame, Window};
pub use nn::{ParamSet, Tensor};
pub use scene::{Demo, Image, SceneSpec, TaskConfig};
pub use schedules::{NoiseVariant, ScheduleFamily, ScheduleSpec};
