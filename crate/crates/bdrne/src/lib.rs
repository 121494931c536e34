//! Bayesian distributionally robust Nash equilibria (BDRNE) over KL-divergence
//! ambiguity sets, applied to multinomial-logit price competition.
//!
//! Each player maximizes the posterior average of a worst-case expected
//! utility, where the worst case ranges over a KL ball centered at a
//! parametric nominal distribution and the posterior over the parameter is
//! updated from observed data. The pieces:
//!
//! - [`stochastics`]: parametric families, conjugate Gamma-rate posteriors,
//!   and KL divergence by adaptive quadrature.
//! - [`kl_dro`]: worst-case expectation over a KL ball around a discrete
//!   nominal, solved through the one-dimensional dual, plus an independent
//!   simplex oracle.
//! - [`bdro`]: scenario sets, the sample-average robust objective, and
//!   single-player best response.
//! - [`equilibrium`]: Gauss-Seidel best-response iteration, the aggregate
//!   equilibrium gap, and model variants.
//! - [`mnl`]: the multinomial-logit market (shares, profits, concavity-safe
//!   price intervals) and game construction.
//! - [`exp`]: configuration-driven experiment runner and result emission.

pub mod bdro;
pub mod equilibrium;
pub mod exp;
pub mod kl_dro;
pub mod mnl;
mod opt;
pub mod stochastics;

pub use bdro::{ActionSet, PlayerSpec, ScenarioSet};
pub use equilibrium::{EquilibriumResult, GameInstance, Variant};
pub use kl_dro::{AmbiguitySpec, DiscreteNominal, DualSolveResult};
pub use mnl::MnlMarket;
pub use stochastics::{DensityGrid, ParametricFamily, PosteriorState};

/// Derives a child seed from a master seed and two stream indices.
///
/// Streams are keyed by fixed multiplicative offsets so that, e.g., adding a
/// firm to a game never perturbs the draws of existing firms.
pub(crate) fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    master
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}
