//! Tri-plane neural fields with differentiable volume rendering and a
//! two-branch inversion pipeline, self-contained and CPU-only.
//!
//! Layer map, bottom to top:
//! - [`tensor`]: dense tensors + reverse-mode autodiff tape.
//! - [`triplane`], [`render`]: the tri-plane representation, cameras, ray
//!   sampling, compositing, and the neural feature renderer.
//! - [`generator`], [`encoders`]: latent-to-tri-plane synthesis and the
//!   latent/offset inversion encoders.
//! - [`losses`], [`metrics`]: training objectives, frozen proxy networks,
//!   and image-quality metrics.
//! - [`engines`], [`scenes`]: optimization/training drivers and the
//!   synthetic multi-view scene oracle they are validated against.
//! - [`ckpt`], [`pngio`], [`report`], [`config`], [`cli`]: persistence and
//!   the command-line surface.

pub mod camera;
pub mod ckpt;
pub mod cli;
pub mod config;
pub mod encoders;
pub mod engines;
pub mod error;
pub mod generator;
pub mod gradcheck;
pub mod init;
pub mod losses;
pub mod metrics;
pub mod optim;
pub mod pngio;
pub mod render;
pub mod report;
pub mod scenes;
pub mod state;
pub mod tensor;
pub mod triplane;

pub use error::{Error, Result};
pub use tensor::{Gradients, Tape, Tensor};
