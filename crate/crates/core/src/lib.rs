//! Optimal designs and model selection for screening experiments with
//! generalized linear models.
//!
//! The crate covers the candidate model space and its parameter prior,
//! binomial-logit and Poisson-log families, information-based design
//! criteria, a simulated-annealing design optimiser, closed-form design
//! constructions, maximum-likelihood and bias-reduced (Firth) estimation,
//! AIC/GIC model selection and the simulation studies built on them.

pub mod construct;
pub mod design;
pub mod error;
pub mod estimation;
pub mod glm;
pub mod linalg;
pub mod modelspace;
pub mod optimize;
pub mod selection;
pub mod simulate;

pub use design::{Design, DesignKind, DesignMeta};
pub use error::{Error, Result};
pub use glm::{Dataset, Family};
pub use modelspace::{CandidateModel, ModelSpace, PriorSpec};
