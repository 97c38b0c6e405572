//! Conditional diffusion for 3D hand-joint estimation.

// Range checks are written as `!(x > 0.0)` on purpose so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autograd;
pub mod checkpoint;
pub mod conditioning;
pub mod config;
pub mod denoiser;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod init;
mod kernels;
pub mod model;
pub mod optim;
pub mod pose;
pub mod rng;
pub mod sample;
pub mod synth;
pub mod tensor;
pub mod train;

pub use autograd::{Gradients, Graph, Var};
pub use config::{Components, Config, Profile};
pub use diffusion::{DiffusionSchedule, HypothesisSet, ScheduleKind};
pub use error::{Error, Result};
pub use geometry::{CameraIntrinsics, DepthFrame, Point3, PointCloud};
pub use model::{Model, ModelInput};
pub use optim::{AdamW, ParamGrads, ParamId, ParamStore};
pub use pose::Pose;
pub use sample::FrameSample;
pub use tensor::{Tensor, TensorError};
