//! Continual reinforcement-learning building blocks.
//!
//! The crate is organized bottom-up: input normalization and a linear
//! learner with meta-learned step-sizes, generate-and-test feature search,
//! general value functions, a softmax actor-critic, tabular average-reward
//! planning with prioritized sweeping, and option (subtask) models. The
//! [`testbeds`] module provides the supervised stream and the continuing
//! control problems these are evaluated on; [`oracle`] holds exact
//! reference computations.

pub mod control;
pub mod error;
pub mod features;
pub mod gvf;
pub mod learner;
pub mod normalizer;
pub mod oracle;
pub mod planning;
pub mod rng;
pub mod stomp;
pub mod testbeds;

pub use error::{Error, Result};
