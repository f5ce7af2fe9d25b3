//! Latent factor regression with pure-variable identification, plug-in
//! estimation of the factor coefficients, asymptotic inference and a Monte
//! Carlo harness.

pub mod align;
pub mod cv;
pub mod error;
pub mod estimation;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod lp;
pub mod model;
pub mod par;
pub mod partition;
pub mod pipeline;
pub mod simulation;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{EssRegError, Result};
pub use model::*;
pub use par::Execution;
pub use partition::{merge, pure_var, PureVarConfig};
