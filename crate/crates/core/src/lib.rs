//! Regulated measures, convex conjugates and the effective average action on `ℝⁿ`.
//!
//! A base measure `μ` (Gaussian or perturbed Gaussian) is reweighted by a
//! regulator `exp[−½Q_k]`. The regulated cumulant generating function `V_k`
//! is conjugated by mean matching to give `Γ_k(y) = V_k*(y) − ½Q_k(y)`.
//! [`flow`] checks Wetterich's equation for `dΓ_k/dk`, and [`onsager`]
//! compares `lim_{k→∞} Γ_k(y)` with an Onsager-Machlup estimate built from
//! small-ball probabilities.

// `!(a > b)` is used throughout so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conjugate;
pub mod error;
pub mod flow;
pub mod linalg;
pub mod measure;
pub mod onsager;
pub mod regulator;
pub mod rng;

pub use conjugate::{ConjugateResult, Problem, SolveOptions, TiltedState};
pub use error::{Error, NewtonStep, Result};
pub use flow::{FlowGrid, FlowRecord};
pub use measure::{Estimate, EstimatorConfig, MeasureModel, Perturbation};
pub use onsager::{BallSampler, OmEstimate, SmallBallEstimate};
pub use regulator::{RegulatorFamily, Schedule};
