//! Constraint-conditioned policy optimization for versatile safe RL.
//!
//! Every numeric kernel is generic over [`Real`] (`f32` or `f64`); the
//! aliases at the bottom of this file fix the common `f64` instantiation.

pub mod baselines;
pub mod cmdp;
pub mod config;
pub mod critic;
pub mod cvi;
pub mod error;
pub mod fmt;
pub mod linalg;
pub mod oracle;
pub mod scalar;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Model = cmdp::CmdpModel<f64>;
pub type Model32 = cmdp::CmdpModel<f32>;
pub type VersatilePolicy = cvi::ParametricPolicy<f64>;
pub type VersatilePolicy32 = cvi::ParametricPolicy<f32>;
pub type Critic = critic::CriticPair<f64>;
pub type Critic32 = critic::CriticPair<f32>;
