//! Simulation of radial Dunkl processes with multiplicative noise.
//!
//! ```text
//! dX = sigma(t, X) dB + b(t, X) dt + sum_{a in R+} k(t, a) / <a, X> a dt
//! ```
//!
//! The state lives in the Weyl chamber of a positive root system `R+`. Two
//! discretisations are provided: the implicit theta-Euler-Maruyama scheme,
//! whose every state stays inside the chamber, and the truncated scheme, which
//! replaces `1/<a, x>` by `1/max(<a, x>, eps)` and solves each step by a
//! certified fixed-point iteration in `R^d`.
//!
//! - [`root_system`]: root systems, chamber membership, the pairing identity.
//! - [`model`]: coefficients, derived constants (`L_k`, `p*`), assumption checks.
//! - [`implicit_step`]: the per-step nonlinear solves.
//! - [`scheme`]: Brownian drivers on nested grids and full paths.
//! - [`mc_lab`]: Monte Carlo estimators for strong error, negative moments,
//!   increment scaling, chamber exit and the squared-process mean.

pub mod error;
pub mod implicit_step;
pub mod mc_lab;
pub mod model;
pub mod root_system;
pub mod scheme;

pub use error::{Error, Result};
