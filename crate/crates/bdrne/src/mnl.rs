//! Multinomial-logit price competition: market shares with an outside
//! option, firm profits, concavity-safe price intervals, and game
//! construction.
//!
//! With taste draw ξ = (β, α), firm j's share is
//! q_j = e^{β·x_j − α·p_j} / (1 + Σ_k e^{β·x_k − α·p_k}) and its normalized
//! profit is (p_j − c_j)·q_j. Profit is concave in p_j up to the unique
//! root p̄_j of
//!
//!   φ_j(p) = p − c_j − 1 / (α·(1/2 − q_j(p)))
//!
//! on the region where q_j < 1/2, and p̄_j grows with β and shrinks with α.
//! Action intervals are therefore [c_j, p̄_j] evaluated at a pessimistic
//! anchor ξ̂ = (β̲, ᾱ): low-β / high-α quantiles of the nominal distribution
//! of ξ. Intervals are frozen at game construction against anchor rival
//! prices (rival cost + 1/ᾱ) and re-validated at the converged point.

use crate::bdro::{ActionSet, BdroError, PlayerSpec, ScenarioSet};
use crate::equilibrium::{GameInstance, Variant};
use crate::kl_dro::AmbiguitySpec;
use crate::opt;
use crate::stochastics::{gamma_quantile, ParametricFamily, PosteriorState, StochasticsError};
use std::sync::Arc;
use thiserror::Error;

/// Default anchor quantile levels (low β, high α) for Gamma-backed nominals.
///
/// Extreme levels like (0.001, 0.999) make ᾱ so pessimistic that the frozen
/// interval [c_j, c_j + ~2/ᾱ] cuts off the market equilibria; these levels
/// keep the concavity guarantee for the bulk of the scenario mass while
/// leaving the equilibrium interior.
pub const DEFAULT_ANCHOR_QUANTILES: (f64, f64) = (0.01, 0.85);

const PHI_RESIDUAL_TOL: f64 = 1e-10;
const MAX_DOUBLINGS: usize = 60;

#[derive(Debug, Error)]
pub enum MnlError {
    #[error("invalid market: {0}")]
    InvalidMarket(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error(
        "failed to bracket the price bound for firm {firm}: cost {cost}, anchor ({beta_low}, {alpha_high}), last probe {probe}"
    )]
    BracketFailure {
        firm: usize,
        cost: f64,
        beta_low: f64,
        alpha_high: f64,
        probe: f64,
    },
    #[error(transparent)]
    Stochastics(#[from] StochasticsError),
    #[error(transparent)]
    Bdro(#[from] BdroError),
}

/// An n-firm market with scalar product characteristics and marginal costs
/// (prices and costs in thousands of dollars).
#[derive(Debug, Clone, PartialEq)]
pub struct MnlMarket {
    characteristics: Vec<f64>,
    costs: Vec<f64>,
    outside_option: bool,
    /// Default concavity anchor (β̲, ᾱ); game builders recompute per firm.
    xi_hat: (f64, f64),
}

impl MnlMarket {
    pub fn new(
        characteristics: Vec<f64>,
        costs: Vec<f64>,
        xi_hat: (f64, f64),
    ) -> Result<Self, MnlError> {
        if characteristics.is_empty() || characteristics.len() != costs.len() {
            return Err(MnlError::InvalidMarket(
                "need matching nonempty characteristic and cost lists".into(),
            ));
        }
        if characteristics.iter().any(|x| *x < 0.0 || !x.is_finite()) {
            return Err(MnlError::InvalidMarket(
                "characteristics must be nonnegative".into(),
            ));
        }
        if costs.iter().any(|c| *c <= 0.0 || !c.is_finite()) {
            return Err(MnlError::InvalidMarket("costs must be positive".into()));
        }
        if xi_hat.0 <= 0.0 || xi_hat.1 <= 0.0 || !xi_hat.0.is_finite() || !xi_hat.1.is_finite() {
            return Err(MnlError::InvalidMarket(
                "anchor components must be positive".into(),
            ));
        }
        Ok(Self {
            characteristics,
            costs,
            outside_option: true,
            xi_hat,
        })
    }

    pub fn with_outside_option(mut self, enabled: bool) -> Self {
        self.outside_option = enabled;
        self
    }

    pub fn n(&self) -> usize {
        self.characteristics.len()
    }

    pub fn characteristics(&self) -> &[f64] {
        &self.characteristics
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn with_costs(mut self, costs: Vec<f64>) -> Result<Self, MnlError> {
        if costs.len() != self.characteristics.len()
            || costs.iter().any(|c| *c <= 0.0 || !c.is_finite())
        {
            return Err(MnlError::InvalidMarket("costs must be positive".into()));
        }
        self.costs = costs;
        Ok(self)
    }

    pub fn xi_hat(&self) -> (f64, f64) {
        self.xi_hat
    }
}

/// Purchase probability of firm j at prices `p` under taste ξ = (β, α).
/// The denominator carries the outside option's 1 and is stabilized by
/// shifting out the maximum exponent.
pub fn market_share(j: usize, prices: &[f64], xi: &[f64], market: &MnlMarket) -> f64 {
    let (beta, alpha) = (xi[0], xi[1]);
    let exponents: Vec<f64> = market
        .characteristics
        .iter()
        .zip(prices)
        .map(|(x, p)| beta * x - alpha * p)
        .collect();
    let mut shift = exponents.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if market.outside_option {
        shift = shift.max(0.0);
    }
    let mut denom: f64 = exponents.iter().map(|e| (e - shift).exp()).sum();
    if market.outside_option {
        denom += (-shift).exp();
    }
    (exponents[j] - shift).exp() / denom
}

/// No-purchase probability q_0.
pub fn outside_share(prices: &[f64], xi: &[f64], market: &MnlMarket) -> f64 {
    let (beta, alpha) = (xi[0], xi[1]);
    let exponents: Vec<f64> = market
        .characteristics
        .iter()
        .zip(prices)
        .map(|(x, p)| beta * x - alpha * p)
        .collect();
    let shift = exponents
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
        .max(0.0);
    let denom: f64 = exponents.iter().map(|e| (e - shift).exp()).sum::<f64>() + (-shift).exp();
    (-shift).exp() / denom
}

/// Normalized profit (p_j − c_j)·q_j.
pub fn profit(j: usize, prices: &[f64], xi: &[f64], market: &MnlMarket) -> f64 {
    (prices[j] - market.costs[j]) * market_share(j, prices, xi, market)
}

fn phi(
    j: usize,
    c_j: f64,
    p_j: f64,
    p_minus: &[f64],
    xi_hat: (f64, f64),
    market: &MnlMarket,
) -> f64 {
    let prices = insert_price(j, p_j, p_minus);
    let q = market_share(j, &prices, &[xi_hat.0, xi_hat.1], market);
    p_j - c_j - 1.0 / (xi_hat.1 * (0.5 - q))
}

fn insert_price(j: usize, p_j: f64, p_minus: &[f64]) -> Vec<f64> {
    let mut prices = Vec::with_capacity(p_minus.len() + 1);
    prices.extend_from_slice(&p_minus[..j]);
    prices.push(p_j);
    prices.extend_from_slice(&p_minus[j..]);
    prices
}

/// Upper end p̄_j of firm j's concavity interval: the unique root of φ_j on
/// the branch where q_j < 1/2, found by bisection to |φ_j| ≤ 1e-10.
pub fn price_upper_bound(
    j: usize,
    c_j: f64,
    p_minus: &[f64],
    xi_hat: (f64, f64),
    market: &MnlMarket,
) -> Result<f64, MnlError> {
    let (beta_low, alpha_high) = xi_hat;
    let share_at = |p: f64| {
        let prices = insert_price(j, p, p_minus);
        market_share(j, &prices, &[beta_low, alpha_high], market)
    };
    let fail = |probe: f64| MnlError::BracketFailure {
        firm: j,
        cost: c_j,
        beta_low,
        alpha_high,
        probe,
    };

    // Lowest usable price: the smallest probe with q_j < 1/2, walking up by
    // doubled increments from the cost when needed.
    let mut boundary = c_j;
    let mut lo = c_j;
    if share_at(c_j) >= 0.5 {
        let mut step = 1.0 / alpha_high;
        let mut found = None;
        for _ in 0..MAX_DOUBLINGS {
            let probe = c_j + step;
            if share_at(probe) < 0.5 {
                found = Some(probe);
                break;
            }
            boundary = probe;
            step *= 2.0;
        }
        lo = found.ok_or_else(|| fail(c_j))?;
    }
    // Keep φ(lo) < 0; walking back toward the q = 1/2 level set drives φ to
    // −∞, so halving from the boundary always lands a valid bracket end.
    for _ in 0..200 {
        if phi(j, c_j, lo, p_minus, xi_hat, market) < 0.0 {
            break;
        }
        let mid = 0.5 * (boundary + lo);
        if share_at(mid) < 0.5 {
            lo = mid;
        } else {
            boundary = mid;
        }
        if lo - boundary <= f64::EPSILON * lo.abs() {
            return Err(fail(lo));
        }
    }
    if phi(j, c_j, lo, p_minus, xi_hat, market) >= 0.0 {
        return Err(fail(lo));
    }

    let mut hi = lo + 2.0 / alpha_high + c_j;
    let mut bracketed = false;
    for _ in 0..MAX_DOUBLINGS {
        if phi(j, c_j, hi, p_minus, xi_hat, market) > 0.0 {
            bracketed = true;
            break;
        }
        hi *= 2.0;
    }
    if !bracketed {
        return Err(fail(hi));
    }

    let mut f = |p: f64| phi(j, c_j, p, p_minus, xi_hat, market);
    let (root, residual) = opt::bisect_root(&mut f, lo, hi, PHI_RESIDUAL_TOL, 200);
    if residual.abs() > PHI_RESIDUAL_TOL {
        return Err(fail(root));
    }
    Ok(root)
}

/// Per-firm concavity anchor from a posterior: the `q_lo` predictive
/// quantile of β and the `q_hi` predictive quantile of α.
pub fn posterior_anchor(
    posterior: &PosteriorState,
    quantiles: (f64, f64),
) -> Result<(f64, f64), MnlError> {
    let beta_low = posterior.predictive_quantile(0, quantiles.0)?;
    let alpha_high = posterior.predictive_quantile(1, quantiles.1)?;
    Ok((beta_low, alpha_high))
}

/// Anchor from an empirical ξ cloud: sample quantiles of the β and α columns.
pub fn empirical_anchor(cloud: &[Vec<f64>], quantiles: (f64, f64)) -> Result<(f64, f64), MnlError> {
    if cloud.is_empty() || cloud.iter().any(|p| p.len() < 2) {
        return Err(MnlError::LengthMismatch(
            "empirical cloud must hold (β, α) points".into(),
        ));
    }
    let column = |dim: usize| -> Vec<f64> {
        let mut v: Vec<f64> = cloud.iter().map(|p| p[dim]).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    };
    Ok((
        sample_quantile(&column(0), quantiles.0),
        sample_quantile(&column(1), quantiles.1),
    ))
}

fn sample_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = q * (n - 1) as f64;
    let i = h.floor() as usize;
    if i + 1 >= n {
        return sorted[n - 1];
    }
    sorted[i] + (h - i as f64) * (sorted[i + 1] - sorted[i])
}

/// A built market game plus the per-firm anchors its intervals were frozen
/// with, kept for post-convergence re-validation.
#[derive(Debug, Clone)]
pub struct MnlGame {
    pub instance: GameInstance,
    pub anchors: Vec<(f64, f64)>,
}

fn firm_player(
    market: &MnlMarket,
    j: usize,
    anchor: (f64, f64),
    ambiguity: AmbiguitySpec,
    scenarios: Arc<ScenarioSet>,
) -> Result<PlayerSpec, MnlError> {
    // Freeze the interval against anchor rivals: rival cost + 1/ᾱ.
    let rivals: Vec<f64> = market
        .costs
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != j)
        .map(|(_, c)| c + 1.0 / anchor.1)
        .collect();
    let c_j = market.costs[j];
    let upper = price_upper_bound(j, c_j, &rivals, anchor, market)?;
    let shared = market.clone();
    let utility = move |own: &[f64], rivals: &[Vec<f64>], xi: &[f64]| {
        let mut prices = Vec::with_capacity(rivals.len() + 1);
        for r in &rivals[..j] {
            prices.push(r[0]);
        }
        prices.push(own[0]);
        for r in &rivals[j..] {
            prices.push(r[0]);
        }
        profit(j, &prices, xi, &shared)
    };
    Ok(PlayerSpec {
        index: j,
        utility: Arc::new(utility),
        actions: ActionSet::interval(c_j, upper)?,
        ambiguity,
        scenarios,
    })
}

/// Builds the posterior-sampled market game: per-firm scenario sets drawn
/// from each firm's posterior, anchors recomputed from the posterior
/// predictive, and action intervals [c_j, p̄_j(ξ̂_j)].
pub fn build_game(
    market: &MnlMarket,
    posteriors: &[PosteriorState],
    eps: &[AmbiguitySpec],
    n_theta: usize,
    n_xi: usize,
    seed: u64,
    anchor_quantiles: (f64, f64),
) -> Result<MnlGame, MnlError> {
    let n = market.n();
    if posteriors.len() != n || eps.len() != n {
        return Err(MnlError::LengthMismatch(format!(
            "market has {n} firms, got {} posteriors and {} radii",
            posteriors.len(),
            eps.len()
        )));
    }
    let family = ParametricFamily::gamma_known_shape(posteriors[0].likelihood_shape(), 2)?;
    let mut players = Vec::with_capacity(n);
    let mut anchors = Vec::with_capacity(n);
    for j in 0..n {
        let anchor = posterior_anchor(&posteriors[j], anchor_quantiles)?;
        let scenarios = Arc::new(ScenarioSet::generate(
            &family,
            &posteriors[j],
            n_theta,
            n_xi,
            crate::derive_seed(seed, j as u64, 0),
        )?);
        players.push(firm_player(market, j, anchor, eps[j], scenarios)?);
        anchors.push(anchor);
    }
    Ok(MnlGame {
        instance: GameInstance {
            players,
            variant: Variant::Bdrne,
            seed,
            raw_data: None,
        },
        anchors,
    })
}

/// Builds the empirical-nominal game: each firm's cloud is its raw data,
/// radius ε̂_j, anchors from sample quantiles of the data itself.
pub fn build_empirical_game(
    market: &MnlMarket,
    clouds: &[Vec<Vec<f64>>],
    eps_hat: &[AmbiguitySpec],
    seed: u64,
    anchor_quantiles: (f64, f64),
) -> Result<MnlGame, MnlError> {
    let n = market.n();
    if clouds.len() != n || eps_hat.len() != n {
        return Err(MnlError::LengthMismatch(format!(
            "market has {n} firms, got {} clouds and {} radii",
            clouds.len(),
            eps_hat.len()
        )));
    }
    let mut players = Vec::with_capacity(n);
    let mut anchors = Vec::with_capacity(n);
    for j in 0..n {
        let anchor = empirical_anchor(&clouds[j], anchor_quantiles)?;
        let scenarios = Arc::new(ScenarioSet::from_cloud(
            clouds[j].clone(),
            crate::derive_seed(seed, j as u64, 0),
        )?);
        players.push(firm_player(market, j, anchor, eps_hat[j], scenarios)?);
        anchors.push(anchor);
    }
    Ok(MnlGame {
        instance: GameInstance {
            players,
            variant: Variant::DrneEmpirical,
            seed,
            raw_data: Some(clouds.to_vec()),
        },
        anchors,
    })
}

/// Builds the plug-in game at a fixed θ* per firm with a large ξ cloud and
/// radius zero; anchors come from the Gamma(k, θ*) quantiles directly.
pub fn build_plugin_game(
    market: &MnlMarket,
    theta_star: &[Vec<f64>],
    shape: f64,
    n_xi: usize,
    seed: u64,
    anchor_quantiles: (f64, f64),
) -> Result<MnlGame, MnlError> {
    let n = market.n();
    if theta_star.len() != n {
        return Err(MnlError::LengthMismatch(format!(
            "market has {n} firms, got {} truth parameters",
            theta_star.len()
        )));
    }
    let family = ParametricFamily::gamma_known_shape(shape, 2)?;
    let zero = AmbiguitySpec::new(0.0).expect("zero radius is valid");
    let mut players = Vec::with_capacity(n);
    let mut anchors = Vec::with_capacity(n);
    for (j, theta) in theta_star.iter().enumerate() {
        let anchor = (
            gamma_quantile(shape, theta[0], anchor_quantiles.0)?,
            gamma_quantile(shape, theta[1], anchor_quantiles.1)?,
        );
        let scenarios = Arc::new(ScenarioSet::plugin(
            &family,
            theta,
            n_xi,
            crate::derive_seed(seed, j as u64, 0),
        )?);
        players.push(firm_player(market, j, anchor, zero, scenarios)?);
        anchors.push(anchor);
    }
    Ok(MnlGame {
        instance: GameInstance {
            players,
            variant: Variant::EmpiricalNe,
            seed,
            raw_data: None,
        },
        anchors,
    })
}

/// Re-validates frozen intervals at a converged point: recomputes p̄_j
/// against the converged rival prices and checks p*_j still fits.
pub fn revalidate_bounds(
    market: &MnlMarket,
    anchors: &[(f64, f64)],
    point: &[Vec<f64>],
) -> Result<bool, MnlError> {
    for j in 0..market.n() {
        let rivals: Vec<f64> = point
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != j)
            .map(|(_, p)| p[0])
            .collect();
        let bound = price_upper_bound(j, market.costs[j], &rivals, anchors[j], market)?;
        if point[j][0] > bound + 1e-9 {
            return Ok(false);
        }
    }
    Ok(true)
}
