//! Exact-by-construction shallow networks for the homogeneous Maxwell system
//!
//! The source-free Maxwell equations
//!
//! ```text
//!   ∂tE − ∇×B = 0,   ∂tB + ∇×E = 0,   ∇·E = 0,   ∇·B = 0
//! ```
//!
//! admit plane-wave solutions `σ(xᵀz + b)·p(z)` whenever the frequency
//! 4-vector `z = (z0, z1, z2, z3)` lies on the light cone `z0² = z1²+z2²+z3²`
//! and `p(z)` is one of two multiplier polynomials that tie the six field
//! components together. A shallow network built from such neurons therefore
//! satisfies the system *identically*, for any parameter values, and fitting
//! a field reduces to plain regression on observed components.
//!
//! The crate provides:
//!
//! - [`model`]: the parameter container, light-cone frequency lifting, the
//!   multiplier polynomials, batched forward evaluation, and the analytic
//!   Maxwell residual of the network itself (machine-precision zero);
//! - [`train`]: masked-MSE loss, exact analytic gradients through the weight
//!   sharing, AdamW with a cosine schedule, and the full training loop;
//! - [`ground_truth`]: four closed-form benchmark solutions plus a
//!   finite-difference residual oracle that certifies them;
//! - [`sampling`]: initial-condition and boundary-condition observation
//!   protocols with per-component loss masks;
//! - [`metrics`]: relative L2 error and PDE-residual RMSE;
//! - [`exact_init`]: constructive initialization that reproduces
//!   divergence-free trigonometric fields exactly with cosine neurons;
//! - [`verify`]: self-check harnesses (residual exactness, finite-difference
//!   convergence order, gradient checks, multiplier identities);
//! - [`experiment`]: reproducible experiment drivers (race to threshold,
//!   time budget, data budget) with CSV/JSON persistence.
//!
//! All numerics are `f64`. Every randomized component is seeded and
//! deterministic, and batch evaluation reduces worker results in a fixed
//! chunk order, so results are bit-identical regardless of thread count.

pub mod activation;
pub mod checkpoint;
pub mod error;
pub mod exact_init;
pub mod experiment;
pub mod ground_truth;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod sampling;
#[cfg(target_arch = "x86_64")]
pub(crate) mod simd;
pub mod train;
pub mod verify;

pub use activation::Activation;
pub use error::{Error, Result};
pub use model::{
    forward, lift_frequency, model_residual, noetherian_multiplier, BranchParams, FieldSample,
    FrequencyVector, ModelParams, SpacetimePoint,
};
pub use train::{ObservationSet, TrainConfig, TrainLog, TrainOutcome};
