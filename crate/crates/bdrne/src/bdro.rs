//! The posterior-averaged worst-case objective and single-player best
//! response.
//!
//! A [`ScenarioSet`] fixes the Monte-Carlo structure once per equilibrium
//! run: parameter draws θ^i from the posterior and, for each θ^i, a cloud of
//! ξ draws from the nominal Q_{θ^i}. [`bdro_value`] averages the per-θ
//! worst-case expectations over that fixed set, so every evaluation is a
//! deterministic function of the action profile (common random numbers).
//! The inner λ problem is solved independently per θ^i, warm-started from
//! the previous multiplier for the same θ index.

use crate::kl_dro::{self, AmbiguitySpec, DiscreteNominal, KlDroError, LambdaStar, SolveStatus};
use crate::opt;
use crate::stochastics::{ParametricFamily, PosteriorState, StochasticsError};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use std::sync::Arc;
use thiserror::Error;

/// Interval width at which 1-D best-response search stops.
const BR_X_TOL: f64 = 1e-9;
/// Per-sweep improvement threshold for box coordinate ascent.
const BR_SWEEP_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum BdroError {
    #[error("invalid scenario set: {0}")]
    InvalidScenarios(String),
    #[error("invalid action set: {0}")]
    InvalidActionSet(String),
    #[error("action {0:?} outside the player's action set")]
    InfeasibleAction(Vec<f64>),
    #[error("utility evaluation failed at theta sample {theta_index}, xi sample {xi_index}: produced {value}")]
    UtilityFailure {
        theta_index: usize,
        xi_index: usize,
        value: f64,
    },
    #[error(transparent)]
    Stochastics(#[from] StochasticsError),
    #[error(transparent)]
    KlDro(#[from] KlDroError),
}

/// Nested Monte-Carlo draws: θ samples with one ξ cloud per θ.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    theta_samples: Vec<Vec<f64>>,
    xi_samples: Vec<Vec<Vec<f64>>>,
    seed: u64,
}

impl ScenarioSet {
    pub fn new(
        theta_samples: Vec<Vec<f64>>,
        xi_samples: Vec<Vec<Vec<f64>>>,
        seed: u64,
    ) -> Result<Self, BdroError> {
        if theta_samples.is_empty() || theta_samples.len() != xi_samples.len() {
            return Err(BdroError::InvalidScenarios(
                "need one xi cloud per theta sample, at least one theta".into(),
            ));
        }
        let n_xi = xi_samples[0].len();
        if n_xi == 0 || xi_samples.iter().any(|cloud| cloud.len() != n_xi) {
            return Err(BdroError::InvalidScenarios(
                "xi clouds must share a common positive size".into(),
            ));
        }
        Ok(Self {
            theta_samples,
            xi_samples,
            seed,
        })
    }

    /// Draws θ^i from the posterior and a ξ cloud per θ^i from the family.
    pub fn generate(
        family: &ParametricFamily,
        posterior: &PosteriorState,
        n_theta: usize,
        n_xi: usize,
        seed: u64,
    ) -> Result<Self, BdroError> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let theta_samples = posterior.sample(&mut rng, n_theta)?;
        let xi_samples = theta_samples
            .iter()
            .map(|theta| family.sample(theta, &mut rng, n_xi))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            theta_samples,
            xi_samples,
            seed,
        })
    }

    /// Single plugged-in θ with a ξ cloud drawn from its nominal.
    pub fn plugin(
        family: &ParametricFamily,
        theta: &[f64],
        n_xi: usize,
        seed: u64,
    ) -> Result<Self, BdroError> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let cloud = family.sample(theta, &mut rng, n_xi)?;
        Ok(Self {
            theta_samples: vec![theta.to_vec()],
            xi_samples: vec![cloud],
            seed,
        })
    }

    /// Single pseudo-θ whose cloud is raw data: the empirical distribution
    /// as nominal. The θ entry is empty since no parameter is involved.
    pub fn from_cloud(points: Vec<Vec<f64>>, seed: u64) -> Result<Self, BdroError> {
        if points.is_empty() {
            return Err(BdroError::InvalidScenarios(
                "empirical cloud must be nonempty".into(),
            ));
        }
        Ok(Self {
            theta_samples: vec![Vec::new()],
            xi_samples: vec![points],
            seed,
        })
    }

    pub fn n_theta(&self) -> usize {
        self.theta_samples.len()
    }

    pub fn n_xi(&self) -> usize {
        self.xi_samples[0].len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn theta_samples(&self) -> &[Vec<f64>] {
        &self.theta_samples
    }

    pub fn cloud(&self, i: usize) -> &[Vec<f64>] {
        &self.xi_samples[i]
    }
}

/// Closed interval or axis-aligned box of feasible actions.
#[derive(Debug, Clone, PartialEq)]
pub enum ActionSet {
    Interval { lo: f64, hi: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl ActionSet {
    pub fn interval(lo: f64, hi: f64) -> Result<Self, BdroError> {
        if !lo.is_finite() || !hi.is_finite() || lo > hi {
            return Err(BdroError::InvalidActionSet(format!(
                "interval [{lo}, {hi}] must be nonempty and bounded"
            )));
        }
        Ok(Self::Interval { lo, hi })
    }

    pub fn boxed(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, BdroError> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(BdroError::InvalidActionSet(
                "box bounds must be nonempty and of equal length".into(),
            ));
        }
        if lo
            .iter()
            .zip(&hi)
            .any(|(l, h)| !l.is_finite() || !h.is_finite() || l > h)
        {
            return Err(BdroError::InvalidActionSet(
                "box must be nonempty and bounded in every coordinate".into(),
            ));
        }
        Ok(Self::Box { lo, hi })
    }

    pub fn dimension(&self) -> usize {
        match self {
            Self::Interval { .. } => 1,
            Self::Box { lo, .. } => lo.len(),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Self::Interval { lo, hi } => x.len() == 1 && *lo <= x[0] && x[0] <= *hi,
            Self::Box { lo, hi } => {
                x.len() == lo.len()
                    && x.iter()
                        .zip(lo.iter().zip(hi))
                        .all(|(v, (l, h))| l <= v && v <= h)
            }
        }
    }

    pub fn midpoint(&self) -> Vec<f64> {
        match self {
            Self::Interval { lo, hi } => vec![0.5 * (lo + hi)],
            Self::Box { lo, hi } => lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)).collect(),
        }
    }
}

/// Player utility u_j(x_j, x_{−j}, ξ). `rivals` holds the other players'
/// actions in ascending player order with player j removed.
pub trait Utility: Send + Sync {
    fn eval(&self, own: &[f64], rivals: &[Vec<f64>], xi: &[f64]) -> f64;
}

impl<F> Utility for F
where
    F: Fn(&[f64], &[Vec<f64>], &[f64]) -> f64 + Send + Sync,
{
    fn eval(&self, own: &[f64], rivals: &[Vec<f64>], xi: &[f64]) -> f64 {
        self(own, rivals, xi)
    }
}

/// One player's decision problem: utility, feasible actions, KL radius, and
/// the fixed scenario set its objective averages over.
#[derive(Clone)]
pub struct PlayerSpec {
    pub index: usize,
    pub utility: Arc<dyn Utility>,
    pub actions: ActionSet,
    pub ambiguity: AmbiguitySpec,
    pub scenarios: Arc<ScenarioSet>,
}

impl std::fmt::Debug for PlayerSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PlayerSpec")
            .field("index", &self.index)
            .field("actions", &self.actions)
            .field("ambiguity", &self.ambiguity)
            .field("n_theta", &self.scenarios.n_theta())
            .field("n_xi", &self.scenarios.n_xi())
            .finish()
    }
}

fn utility_outcomes(
    player: &PlayerSpec,
    own: &[f64],
    rivals: &[Vec<f64>],
    theta_index: usize,
) -> Result<Vec<f64>, BdroError> {
    player
        .scenarios
        .cloud(theta_index)
        .iter()
        .enumerate()
        .map(|(xi_index, xi)| {
            let value = player.utility.eval(own, rivals, xi);
            if value.is_finite() {
                Ok(value)
            } else {
                Err(BdroError::UtilityFailure {
                    theta_index,
                    xi_index,
                    value,
                })
            }
        })
        .collect()
}

fn per_theta_value(
    player: &PlayerSpec,
    own: &[f64],
    rivals: &[Vec<f64>],
    theta_index: usize,
    warm: &mut Option<f64>,
) -> Result<f64, BdroError> {
    let outcomes = utility_outcomes(player, own, rivals, theta_index)?;
    if player.ambiguity.epsilon() == 0.0 {
        let n = outcomes.len() as f64;
        return Ok(outcomes.iter().sum::<f64>() / n);
    }
    let nominal = DiscreteNominal::uniform(outcomes)?;
    let result = kl_dro::worst_case_expectation_warm(&nominal, &player.ambiguity, *warm);
    if result.status == SolveStatus::Converged {
        if let LambdaStar::Positive(l) = result.lambda_star {
            *warm = Some(l);
        }
    }
    Ok(result.value)
}

fn bdro_value_cached(
    player: &PlayerSpec,
    own: &[f64],
    rivals: &[Vec<f64>],
    warm: &mut [Option<f64>],
) -> Result<f64, BdroError> {
    let n_theta = player.scenarios.n_theta();
    let values: Vec<f64> = (0..n_theta)
        .into_par_iter()
        .zip(warm.par_iter_mut())
        .map(|(i, w)| per_theta_value(player, own, rivals, i, w))
        .collect::<Result<_, _>>()?;
    Ok(values.iter().sum::<f64>() / n_theta as f64)
}

/// The sample-average robust objective
/// (1/N_θ) Σ_i min over the KL ball around the θ^i cloud of E[u_j].
pub fn bdro_value(player: &PlayerSpec, own: &[f64], rivals: &[Vec<f64>]) -> Result<f64, BdroError> {
    if !player.actions.contains(own) {
        return Err(BdroError::InfeasibleAction(own.to_vec()));
    }
    let mut warm = vec![None; player.scenarios.n_theta()];
    bdro_value_cached(player, own, rivals, &mut warm)
}

/// Maximizes the player's objective over its action set for fixed rivals.
///
/// 1-D actions: golden section to interval width 1e-9 plus one bounded
/// quadratic-fit polish, endpoints checked, ties toward the lower endpoint.
/// Boxes: cyclic coordinate ascent of the same 1-D routine.
pub fn best_response(
    player: &PlayerSpec,
    rivals: &[Vec<f64>],
) -> Result<(Vec<f64>, f64), BdroError> {
    let mut warm = vec![None; player.scenarios.n_theta()];
    match player.actions.clone() {
        ActionSet::Interval { lo, hi } => {
            let (x, v) = maximize_1d(player, rivals, &mut warm, lo, hi, |x| vec![x])?;
            Ok((vec![x], v))
        }
        ActionSet::Box { lo, hi } => {
            let mut x = player.actions.midpoint();
            let mut value = bdro_value_cached(player, &x, rivals, &mut warm)?;
            for _ in 0..200 {
                let before = value;
                for d in 0..x.len() {
                    let frame = x.clone();
                    let embed = move |coord: f64| {
                        let mut full = frame.clone();
                        full[d] = coord;
                        full
                    };
                    let (best, v) = maximize_1d(player, rivals, &mut warm, lo[d], hi[d], embed)?;
                    x[d] = best;
                    value = v;
                }
                if value - before < BR_SWEEP_TOL {
                    break;
                }
            }
            Ok((x, value))
        }
    }
}

fn maximize_1d(
    player: &PlayerSpec,
    rivals: &[Vec<f64>],
    warm: &mut [Option<f64>],
    lo: f64,
    hi: f64,
    embed: impl Fn(f64) -> Vec<f64>,
) -> Result<(f64, f64), BdroError> {
    if lo > hi || !lo.is_finite() || !hi.is_finite() {
        return Err(BdroError::InvalidActionSet(format!(
            "interval [{lo}, {hi}] must be nonempty and bounded"
        )));
    }
    let mut failure: Option<BdroError> = None;
    let best = {
        let mut eval = |x: f64| -> f64 {
            if failure.is_some() {
                return f64::INFINITY;
            }
            match bdro_value_cached(player, &embed(x), rivals, warm) {
                Ok(v) => -v,
                Err(e) => {
                    failure = Some(e);
                    f64::INFINITY
                }
            }
        };
        let coarse = opt::golden_min(&mut eval, lo, hi, BR_X_TOL, 0.0);
        let mut max_eval = |x: f64| -eval(x);
        let polished = opt::quadratic_polish_max(&mut max_eval, coarse.x, -coarse.fx, lo, hi);
        // Endpoint guard: prefer the lower endpoint under exact ties.
        let mut best = polished;
        for endpoint in [hi, lo] {
            let fe = max_eval(endpoint);
            if fe > best.1 || (fe == best.1 && endpoint < best.0) {
                best = (endpoint, fe);
            }
        }
        best
    };
    match failure {
        None => Ok(best),
        Some(e) => Err(e),
    }
}
