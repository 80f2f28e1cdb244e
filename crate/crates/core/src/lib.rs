//! Non-overlapping Schwarz coupling of full-order finite-element models and
//! operator-inference reduced-order models on a 1D elastic bar.

pub mod config;
pub mod error;
pub mod experiment;
pub mod fem1d;
pub mod fom;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod monolithic;
pub mod newmark;
pub mod opinf;
pub mod pod;
pub mod schwarz;
pub mod sweep;
pub mod transmission;

pub use config::ProblemConfig;
pub use error::{Error, Result};
