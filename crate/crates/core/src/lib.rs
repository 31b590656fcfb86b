//! Joint Bayesian structure learning for several Gaussian DAG models that
//! share a known variable ordering.
//!
//! Each group's precision matrix is parameterized by its modified Cholesky
//! factor. Parent sets are penalized by size and coupled across groups by a
//! Markov random field term that rewards shared edges. Inference uses the
//! α-fractional likelihood, so the marginal likelihood of a parent set has a
//! closed form.

pub mod error;
pub mod evaluate;
pub mod io;
pub mod likelihood;
pub mod model;
pub mod priors;
pub mod oracle;
pub mod sampler;
pub mod simulate;

pub use error::{Error, Result};
