//! Normal-approximation error bounds and diagnostics for sums of locally
//! dependent random variables.
//!
//! The crate centers on [`model::LocalModel`]: a finite family {X_i} with
//! nested dependency neighborhoods, a seeded sampler for W = Σ X_i, and
//! (when small enough) an exact rational description of the joint law. On
//! top of it sit
//!
//! - [`bounds`]: the third/fourth-moment bound functionals controlling the
//!   Wasserstein-2 distance of W from N(0,1), their chain-sum generalizations
//!   R_m, and closed forms for m-dependent, i.i.d., and subgraph-count sums;
//! - [`moments`]: exact and Monte Carlo mixed moments and cumulants with
//!   batch-mean standard errors;
//! - [`distances`]: empirical Wasserstein-p, Kolmogorov, and smooth-class
//!   lower-bound distance estimators;
//! - [`stein`]: a numerical solver for f′(w) − w f(w) = h(w) − E h(Z),
//!   smoothness diagnostics, and asymptotic-expansion residuals;
//! - [`matching`]: four- and five-point discrete laws matching prescribed
//!   third/fourth cumulants, in exact arithmetic over Q[√n];
//! - [`models`]: builders for moving-average (m-dependent) sums, U-statistics,
//!   and subgraph counts in G(n, p), each with the neighborhood system its
//!   dependency structure dictates.
//!
//! All randomness flows through [`rng`]: every estimate is a deterministic
//! function of (seed, purpose, stream index).

pub mod bounds;
pub mod distances;
pub mod error;
pub mod exact;
pub mod matching;
pub mod model;
pub mod models;
pub mod moments;
pub mod neighborhoods;
pub mod normal;
pub mod quadrature;
pub mod rng;
pub mod stein;

pub use error::{Error, Result};
