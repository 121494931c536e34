//! Worst-case expectation over a KL-divergence ball around a discrete
//! nominal distribution.
//!
//! For a nominal with outcomes u_k and weights w_k and radius ε, the inner
//! problem min_{KL(Q‖w) ≤ ε} E_Q[u] equals
//!
//!   −min_{λ>0} { λ·ε + λ·ln Σ_k w_k exp(−u_k/λ) },
//!
//! a strictly convex one-dimensional minimization. [`worst_case_expectation`]
//! solves the dual (golden section on a log-λ bracket, then a safeguarded
//! Newton polish); [`worst_case_simplex_oracle`] solves the primal directly
//! by bisecting the exponential-tilt multiplier onto the KL constraint and is
//! kept independent as a cross-check.

use crate::opt;
use thiserror::Error;

const LAMBDA_MIN: f64 = 1e-8;
const LAMBDA_MAX: f64 = 1e8;
/// Relative tolerance on the dual objective during bracketing.
const DUAL_OBJ_RTOL: f64 = 1e-10;
/// Utility spread below which the nominal is treated as constant.
const CONSTANT_SPREAD: f64 = 1e-14;
/// Simplex-oracle tolerance on the KL residual.
const ORACLE_KL_TOL: f64 = 1e-12;
const ORACLE_SIZE_CAP: usize = 10_000;

#[derive(Debug, Error)]
pub enum KlDroError {
    #[error("invalid nominal distribution: {0}")]
    InvalidNominal(String),
    #[error("invalid ambiguity radius: {0}")]
    InvalidRadius(String),
    #[error("lambda must be positive, got {0}")]
    NonpositiveLambda(f64),
    #[error("simplex oracle supports at most {ORACLE_SIZE_CAP} outcomes, got {0}")]
    OracleSizeCap(usize),
}

/// A finite nominal distribution: utility outcomes with probability weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteNominal {
    outcomes: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscreteNominal {
    pub fn new(outcomes: Vec<f64>, weights: Vec<f64>) -> Result<Self, KlDroError> {
        if outcomes.is_empty() || outcomes.len() != weights.len() {
            return Err(KlDroError::InvalidNominal(
                "need a nonempty outcome list with matching weights".into(),
            ));
        }
        if outcomes.iter().any(|u| !u.is_finite()) {
            return Err(KlDroError::InvalidNominal("outcomes must be finite".into()));
        }
        if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(KlDroError::InvalidNominal(
                "weights must be nonnegative".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(KlDroError::InvalidNominal(format!(
                "weights sum to {sum}, expected 1 within 1e-12"
            )));
        }
        Ok(Self { outcomes, weights })
    }

    /// Equal-weight nominal over the given outcomes.
    pub fn uniform(outcomes: Vec<f64>) -> Result<Self, KlDroError> {
        if outcomes.is_empty() {
            return Err(KlDroError::InvalidNominal(
                "need a nonempty outcome list".into(),
            ));
        }
        if outcomes.iter().any(|u| !u.is_finite()) {
            return Err(KlDroError::InvalidNominal("outcomes must be finite".into()));
        }
        let w = 1.0 / outcomes.len() as f64;
        let weights = vec![w; outcomes.len()];
        Ok(Self { outcomes, weights })
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn mean(&self) -> f64 {
        self.outcomes
            .iter()
            .zip(&self.weights)
            .map(|(u, w)| u * w)
            .sum()
    }

    pub fn min(&self) -> f64 {
        self.outcomes.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Minimum outcome and the total weight carried by atoms attaining it.
    fn min_and_mass(&self) -> (f64, f64) {
        let umin = self.min();
        let mass = self
            .outcomes
            .iter()
            .zip(&self.weights)
            .filter(|(u, _)| **u == umin)
            .map(|(_, w)| w)
            .sum();
        (umin, mass)
    }
}

/// KL ambiguity radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmbiguitySpec {
    epsilon: f64,
}

impl AmbiguitySpec {
    pub fn new(epsilon: f64) -> Result<Self, KlDroError> {
        if epsilon < 0.0 || !epsilon.is_finite() {
            return Err(KlDroError::InvalidRadius(format!(
                "radius must be a nonnegative real, got {epsilon}"
            )));
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    Boundary,
    DegenerateConstant,
}

/// Dual multiplier: a positive value, or the flag for the λ→∞ limit where the
/// worst case degenerates to the nominal expectation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaStar {
    Positive(f64),
    BoundaryLarge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolveResult {
    pub lambda_star: LambdaStar,
    /// The worst-case expectation min_{Q ∈ ball} E_Q[u].
    pub value: f64,
    pub tilted_weights: Vec<f64>,
    pub iterations: usize,
    pub status: SolveStatus,
}

/// Dual objective λ·ε + λ·ln Σ_k w_k exp(−u_k/λ), evaluated with the max
/// exponent shifted out so nothing overflows for |u| ≤ 1e6, λ ≥ 1e-8.
pub fn dual_objective(
    lambda: f64,
    nominal: &DiscreteNominal,
    eps: &AmbiguitySpec,
) -> Result<f64, KlDroError> {
    if lambda <= 0.0 || lambda.is_nan() {
        return Err(KlDroError::NonpositiveLambda(lambda));
    }
    Ok(dual_objective_inner(lambda, nominal, eps.epsilon()))
}

fn dual_objective_inner(lambda: f64, nominal: &DiscreteNominal, epsilon: f64) -> f64 {
    let umin = nominal.min();
    let tilted_sum: f64 = nominal
        .outcomes
        .iter()
        .zip(&nominal.weights)
        .map(|(u, w)| w * (-(u - umin) / lambda).exp())
        .sum();
    lambda * epsilon - umin + lambda * tilted_sum.ln()
}

/// Shifted tilt statistics at λ: (S̃, tilted mean of u−umin, tilted variance).
fn tilt_stats(lambda: f64, nominal: &DiscreteNominal, umin: f64) -> (f64, f64, f64) {
    let mut s = 0.0;
    let mut sv = 0.0;
    let mut svv = 0.0;
    for (u, w) in nominal.outcomes.iter().zip(&nominal.weights) {
        let v = u - umin;
        let z = w * (-v / lambda).exp();
        s += z;
        sv += z * v;
        svv += z * v * v;
    }
    let mean = sv / s;
    let var = (svv / s - mean * mean).max(0.0);
    (s, mean, var)
}

fn tilted_weights(lambda: f64, nominal: &DiscreteNominal, umin: f64) -> Vec<f64> {
    let raw: Vec<f64> = nominal
        .outcomes
        .iter()
        .zip(&nominal.weights)
        .map(|(u, w)| w * (-(u - umin) / lambda).exp())
        .collect();
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|r| r / z).collect()
}

/// Solves the worst-case expectation through the one-dimensional dual.
pub fn worst_case_expectation(nominal: &DiscreteNominal, eps: &AmbiguitySpec) -> DualSolveResult {
    worst_case_expectation_warm(nominal, eps, None)
}

/// Same as [`worst_case_expectation`] but optionally warm-started from a
/// previous multiplier, which shrinks the golden-section bracket.
pub(crate) fn worst_case_expectation_warm(
    nominal: &DiscreteNominal,
    eps: &AmbiguitySpec,
    hint: Option<f64>,
) -> DualSolveResult {
    let epsilon = eps.epsilon();
    let mean = nominal.mean();
    let (umin, min_mass) = nominal.min_and_mass();
    let umax = nominal
        .outcomes
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);

    if umax - umin < CONSTANT_SPREAD {
        return DualSolveResult {
            lambda_star: LambdaStar::BoundaryLarge,
            value: nominal.outcomes[0],
            tilted_weights: nominal.weights.clone(),
            iterations: 0,
            status: SolveStatus::DegenerateConstant,
        };
    }
    if epsilon == 0.0 {
        return DualSolveResult {
            lambda_star: LambdaStar::BoundaryLarge,
            value: mean,
            tilted_weights: nominal.weights.clone(),
            iterations: 0,
            status: SolveStatus::Boundary,
        };
    }
    // Radius large enough to concentrate all mass on the minimizing atoms:
    // the conditional nominal on the min set has KL = ln(1/mass).
    if epsilon >= (1.0 / min_mass).ln() {
        let tilted: Vec<f64> = nominal
            .outcomes
            .iter()
            .zip(&nominal.weights)
            .map(|(u, w)| if *u == umin { w / min_mass } else { 0.0 })
            .collect();
        return DualSolveResult {
            lambda_star: LambdaStar::Positive(LAMBDA_MIN),
            value: umin,
            tilted_weights: tilted,
            iterations: 0,
            status: SolveStatus::Boundary,
        };
    }

    // Golden section over t = ln λ. With a warm hint the bracket starts
    // tight around it and expands only while the minimum sits on an edge.
    let g = |t: f64| dual_objective_inner(t.exp(), nominal, epsilon);
    let (full_lo, full_hi) = (LAMBDA_MIN.ln(), LAMBDA_MAX.ln());
    let (mut tlo, mut thi) = match hint {
        Some(h) if h.is_finite() && h > 0.0 => {
            let t = h.ln();
            ((t - 2.0).max(full_lo), (t + 2.0).min(full_hi))
        }
        _ => (full_lo, full_hi),
    };
    let mut evals = 0usize;
    loop {
        let glo = g(tlo);
        let ghi = g(thi);
        let gin = g(0.5 * (tlo + thi));
        evals += 3;
        let expand_lo = glo < gin && tlo > full_lo;
        let expand_hi = ghi < gin && thi < full_hi;
        if !expand_lo && !expand_hi {
            break;
        }
        if expand_lo {
            tlo = (tlo - 4.0).max(full_lo);
        }
        if expand_hi {
            thi = (thi + 4.0).min(full_hi);
        }
    }
    let mut gt = |t: f64| g(t);
    let bracket = opt::golden_min(&mut gt, tlo, thi, 1e-12, DUAL_OBJ_RTOL);
    evals += bracket.evals;
    let mut lambda = bracket.x.exp();

    // Safeguarded Newton polish on g'(λ) = ε − KL(p_λ ‖ w); g'' = Var/λ³.
    let mut lo = (bracket.x - 1.0).max(full_lo).exp();
    let mut hi = (bracket.x + 1.0).min(full_hi).exp();
    for _ in 0..60 {
        let (s, tmean, tvar) = tilt_stats(lambda, nominal, umin);
        let kl = -s.ln() - tmean / lambda;
        let grad = epsilon - kl;
        evals += 1;
        if grad.abs() <= 1e-11 * epsilon.max(1.0) {
            break;
        }
        // KL decreases in λ, so g' = ε − KL increases in λ.
        if grad > 0.0 {
            hi = lambda;
        } else {
            lo = lambda;
        }
        let curvature = tvar / (lambda * lambda * lambda);
        let newton = lambda - grad / curvature;
        lambda = if curvature > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= f64::EPSILON * lambda {
            break;
        }
    }

    let dual = dual_objective_inner(lambda, nominal, epsilon);
    // The dual estimate can stray below the exact range by the width of the
    // truncated λ bracket; project back onto [min u, nominal mean].
    let value = (-dual).clamp(umin, mean);
    let at_upper = lambda >= 0.99 * LAMBDA_MAX;
    DualSolveResult {
        lambda_star: if at_upper {
            LambdaStar::BoundaryLarge
        } else {
            LambdaStar::Positive(lambda)
        },
        value,
        tilted_weights: tilted_weights(lambda, nominal, umin),
        iterations: evals,
        status: if at_upper {
            SolveStatus::Boundary
        } else {
            SolveStatus::Converged
        },
    }
}

/// KL divergence Σ p_k ln(p_k / q_k) between weight vectors.
pub fn kl_weights(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(pk, qk)| {
            if *pk <= 0.0 {
                0.0
            } else if *qk <= 0.0 {
                f64::INFINITY
            } else {
                pk * (pk / qk).ln()
            }
        })
        .sum()
}

/// Direct primal solve on the simplex: finds the tilt multiplier whose
/// exponentially tilted distribution sits exactly on the KL constraint (or
/// returns the concentrated solution when the constraint cannot bind).
///
/// This is the independent cross-check for [`worst_case_expectation`]; it
/// never evaluates the dual objective.
pub fn worst_case_simplex_oracle(
    nominal: &DiscreteNominal,
    eps: &AmbiguitySpec,
) -> Result<(f64, Vec<f64>), KlDroError> {
    if nominal.len() > ORACLE_SIZE_CAP {
        return Err(KlDroError::OracleSizeCap(nominal.len()));
    }
    let epsilon = eps.epsilon();
    if epsilon == 0.0 {
        return Ok((nominal.mean(), nominal.weights.clone()));
    }
    let (umin, min_mass) = nominal.min_and_mass();
    let umax = nominal
        .outcomes
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    if umax - umin < CONSTANT_SPREAD {
        return Ok((nominal.outcomes[0], nominal.weights.clone()));
    }
    if epsilon >= (1.0 / min_mass).ln() {
        // Full concentration is feasible. Prefer a point mass on the
        // lowest-index minimizing atom when that alone is within the ball;
        // otherwise spread over the whole minimizing set.
        let first = nominal
            .outcomes
            .iter()
            .position(|u| *u == umin)
            .expect("nonempty");
        let mut worst = vec![0.0; nominal.len()];
        if epsilon >= (1.0 / nominal.weights[first]).ln() {
            worst[first] = 1.0;
        } else {
            for (slot, (u, w)) in worst
                .iter_mut()
                .zip(nominal.outcomes.iter().zip(&nominal.weights))
            {
                if *u == umin {
                    *slot = w / min_mass;
                }
            }
        }
        return Ok((umin, worst));
    }

    // KL(p_η ‖ w) decreases from ln(1/min_mass) to 0 as η grows; bisect on
    // ln η until the residual meets ORACLE_KL_TOL.
    let kl_at = |eta: f64| kl_weights(&tilted_weights(eta, nominal, umin), &nominal.weights);
    let spread = umax - umin;
    let mut lo = spread * 1e-6;
    let mut hi = spread;
    while kl_at(lo) <= epsilon {
        lo *= 0.25;
        if lo < 1e-300 {
            break;
        }
    }
    while kl_at(hi) >= epsilon {
        hi *= 4.0;
        if hi > 1e300 {
            break;
        }
    }
    let (mut tlo, mut thi) = (lo.ln(), hi.ln());
    let mut eta = 0.5 * (tlo + thi);
    for _ in 0..200 {
        let mid = 0.5 * (tlo + thi);
        let kl = kl_at(mid.exp());
        if (kl - epsilon).abs() <= ORACLE_KL_TOL {
            eta = mid;
            break;
        }
        if kl > epsilon {
            tlo = mid;
        } else {
            thi = mid;
        }
        eta = mid;
    }
    let worst = tilted_weights(eta.exp(), nominal, umin);
    let value = worst
        .iter()
        .zip(&nominal.outcomes)
        .map(|(p, u)| p * u)
        .sum();
    Ok((value, worst))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn coin() -> DiscreteNominal {
        DiscreteNominal::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap()
    }

    fn random_instance(rng: &mut ChaCha12Rng, max_size: usize) -> DiscreteNominal {
        let n = 2 + (rng.random::<u64>() as usize) % (max_size - 1);
        let outcomes: Vec<f64> = (0..n).map(|_| -5.0 + 10.0 * rng.random::<f64>()).collect();
        let raw: Vec<f64> = (0..n).map(|_| 1e-3 + rng.random::<f64>()).collect();
        let z: f64 = raw.iter().sum();
        DiscreteNominal::new(outcomes, raw.into_iter().map(|w| w / z).collect()).unwrap()
    }

    #[test]
    fn dual_objective_examples() {
        let constant = DiscreteNominal::new(vec![3.0, 3.0], vec![0.5, 0.5]).unwrap();
        let eps = AmbiguitySpec::new(0.7).unwrap();
        for lambda in [0.3, 1.0, 12.0] {
            let v = dual_objective(lambda, &constant, &eps).unwrap();
            assert!((v - (lambda * 0.7 - 3.0)).abs() < 1e-12);
        }

        let v = dual_objective(1.0, &coin(), &AmbiguitySpec::new(0.0).unwrap()).unwrap();
        let expected = ((1.0 + (-1.0f64).exp()) / 2.0).ln();
        assert!((v - expected).abs() < 1e-12);
        assert!((expected + 0.37989).abs() < 1e-4);

        let u = DiscreteNominal::new(vec![2.0, 4.0, 7.0], vec![0.2, 0.5, 0.3]).unwrap();
        let v = dual_objective(1e8, &u, &AmbiguitySpec::new(0.0).unwrap()).unwrap();
        assert!((v + u.mean()).abs() < 1e-6);

        assert!(dual_objective(0.0, &u, &eps).is_err());
        assert!(dual_objective(-1.0, &u, &eps).is_err());
    }

    #[test]
    fn dual_objective_handles_extreme_magnitudes() {
        let big = DiscreteNominal::new(vec![-1e6, 1e6], vec![0.5, 0.5]).unwrap();
        let eps = AmbiguitySpec::new(1.0).unwrap();
        for lambda in [1e-8, 1.0, 1e8] {
            let v = dual_objective(lambda, &big, &eps).unwrap();
            assert!(v.is_finite(), "lambda {lambda} gave {v}");
        }
    }

    #[test]
    fn radius_zero_returns_nominal_mean() {
        let u = DiscreteNominal::new(vec![2.0, 4.0], vec![0.5, 0.5]).unwrap();
        let r = worst_case_expectation(&u, &AmbiguitySpec::new(0.0).unwrap());
        assert_eq!(r.value, 3.0);
        assert_eq!(r.status, SolveStatus::Boundary);
        assert_eq!(r.lambda_star, LambdaStar::BoundaryLarge);
    }

    #[test]
    fn constant_utility_short_circuits() {
        let u = DiscreteNominal::new(vec![1.5, 1.5, 1.5], vec![0.2, 0.3, 0.5]).unwrap();
        let r = worst_case_expectation(&u, &AmbiguitySpec::new(0.3).unwrap());
        assert_eq!(r.value, 1.5);
        assert_eq!(r.status, SolveStatus::DegenerateConstant);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn full_concentration_at_ln_two() {
        let r = worst_case_expectation(&coin(), &AmbiguitySpec::new(2.0f64.ln()).unwrap());
        assert_eq!(r.value, 0.0);
        assert!((r.tilted_weights[0] - 1.0).abs() < 1e-12);
        assert!(r.tilted_weights[1].abs() < 1e-12);
    }

    #[test]
    fn dual_matches_oracle_on_the_coin() {
        let eps = AmbiguitySpec::new(0.1).unwrap();
        let dual = worst_case_expectation(&coin(), &eps);
        let (oracle, worst) = worst_case_simplex_oracle(&coin(), &eps).unwrap();
        assert!(
            (dual.value - oracle).abs() < 1e-6,
            "dual {} vs oracle {oracle}",
            dual.value
        );
        let kl = kl_weights(&worst, coin().weights());
        assert!((kl - 0.1).abs() < 1e-9);
    }

    #[test]
    fn oracle_radius_zero_and_point_mass_branches() {
        let u = DiscreteNominal::new(vec![5.0, 1.0, 3.0], vec![0.25, 0.25, 0.5]).unwrap();
        let (v, w) = worst_case_simplex_oracle(&u, &AmbiguitySpec::new(0.0).unwrap()).unwrap();
        assert_eq!(v, u.mean());
        assert_eq!(w, u.weights());

        // Unique minimum of weight 1/4: concentration feasible once ε ≥ ln 4.
        let eps = AmbiguitySpec::new(4.0f64.ln()).unwrap();
        let (v, w) = worst_case_simplex_oracle(&u, &eps).unwrap();
        assert_eq!(v, 1.0);
        assert_eq!(w, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn oracle_tie_break_prefers_lowest_index() {
        let u = DiscreteNominal::new(vec![1.0, 1.0, 2.0], vec![0.4, 0.4, 0.2]).unwrap();
        let eps = AmbiguitySpec::new((1.0f64 / 0.4).ln() + 0.01).unwrap();
        let (v, w) = worst_case_simplex_oracle(&u, &eps).unwrap();
        assert_eq!(v, 1.0);
        assert_eq!(w, vec![1.0, 0.0, 0.0]);

        // Point mass on one tied atom infeasible, conditional spread is.
        let eps = AmbiguitySpec::new((1.0f64 / 0.8).ln() + 0.01).unwrap();
        let (v, w) = worst_case_simplex_oracle(&u, &eps).unwrap();
        assert_eq!(v, 1.0);
        assert_eq!(w, vec![0.5, 0.5, 0.0]);
    }

    #[test]
    fn dual_and_oracle_agree_on_random_instances() {
        let mut rng = ChaCha12Rng::seed_from_u64(2024);
        for i in 0..100 {
            let nominal = random_instance(&mut rng, 50);
            let epsilon = 1e-3 * (5.0f64 / 1e-3).powf(rng.random::<f64>());
            let eps = AmbiguitySpec::new(epsilon).unwrap();
            let dual = worst_case_expectation(&nominal, &eps);
            let (oracle, _) = worst_case_simplex_oracle(&nominal, &eps).unwrap();
            assert!(
                (dual.value - oracle).abs() <= 1e-6,
                "case {i}: dual {} vs oracle {oracle} at eps {epsilon}",
                dual.value
            );
        }
    }

    #[test]
    fn value_is_monotone_in_radius() {
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        for _ in 0..20 {
            let nominal = random_instance(&mut rng, 30);
            let mut prev = f64::INFINITY;
            for epsilon in [0.0, 1e-3, 1e-2, 0.1, 0.5, 1.0, 3.0] {
                let r = worst_case_expectation(&nominal, &AmbiguitySpec::new(epsilon).unwrap());
                assert!(
                    r.value <= prev + 1e-9,
                    "value rose from {prev} to {} at eps {epsilon}",
                    r.value
                );
                prev = r.value;
            }
        }
    }

    #[test]
    fn sandwich_and_pinsker_bounds_hold() {
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        for _ in 0..100 {
            let nominal = random_instance(&mut rng, 40);
            let epsilon = 1e-3 * (5.0f64 / 1e-3).powf(rng.random::<f64>());
            let r = worst_case_expectation(&nominal, &AmbiguitySpec::new(epsilon).unwrap());
            let mean = nominal.mean();
            assert!(r.value <= mean + 1e-10);
            assert!(r.value >= nominal.min() - 1e-10);
            let range = nominal
                .outcomes()
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max)
                - nominal.min();
            let gap = mean - r.value;
            assert!(gap >= 0.0);
            assert!(
                gap <= range * (epsilon / 2.0).sqrt() + 1e-9,
                "gap {gap} above Pinsker bound"
            );
        }
    }

    #[test]
    fn active_constraint_ties_tilt_to_radius() {
        let mut rng = ChaCha12Rng::seed_from_u64(55);
        for _ in 0..50 {
            let nominal = random_instance(&mut rng, 25);
            let epsilon = 0.01 + 0.5 * rng.random::<f64>();
            let r = worst_case_expectation(&nominal, &AmbiguitySpec::new(epsilon).unwrap());
            if r.status == SolveStatus::Converged && r.value > nominal.min() + 1e-8 {
                let kl = kl_weights(&r.tilted_weights, nominal.weights());
                assert!(
                    (kl - epsilon).abs() < 1e-6,
                    "tilt KL {kl} vs radius {epsilon}"
                );
            }
            let total: f64 = r.tilted_weights.iter().sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn warm_start_agrees_with_cold_start() {
        let mut rng = ChaCha12Rng::seed_from_u64(91);
        for _ in 0..20 {
            let nominal = random_instance(&mut rng, 30);
            let eps = AmbiguitySpec::new(0.2).unwrap();
            let cold = worst_case_expectation(&nominal, &eps);
            let hint = match cold.lambda_star {
                LambdaStar::Positive(l) => Some(l * 1.7),
                LambdaStar::BoundaryLarge => None,
            };
            let warm = worst_case_expectation_warm(&nominal, &eps, hint);
            assert!((cold.value - warm.value).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn translation_shifts_value_exactly(
            shift in -10.0f64..10.0,
            seed in 0u64..1000,
        ) {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let nominal = random_instance(&mut rng, 12);
            let eps = AmbiguitySpec::new(0.25).unwrap();
            let base = worst_case_expectation(&nominal, &eps);
            let shifted = DiscreteNominal::new(
                nominal.outcomes().iter().map(|u| u + shift).collect(),
                nominal.weights().to_vec(),
            ).unwrap();
            let moved = worst_case_expectation(&shifted, &eps);
            prop_assert!((moved.value - (base.value + shift)).abs() < 1e-10);
        }
    }
}
