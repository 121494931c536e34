//! Gauss-Seidel best-response iteration, equilibrium gap certification, and
//! model variants.
//!
//! Each sweep replaces x_j by player j's best response against the rivals'
//! most recent actions (components 1..j−1 already updated within the sweep).
//! Iteration stops once the squared step norm ‖x^k − x^{k−1}‖² falls to the
//! tolerance. A point is certified by the aggregate gap
//! Σ_j (best attainable value − current value), which is zero exactly at an
//! equilibrium and separable across players.

use crate::bdro::{self, BdroError, PlayerSpec, ScenarioSet};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

/// Sweeps without a new best step norm before declaring a cycle.
const CYCLE_PATIENCE: usize = 20;

#[derive(Debug, Error)]
pub enum EquilibriumError {
    #[error("game must have at least one player")]
    NoPlayers,
    #[error("starting point is infeasible for player {0}")]
    InfeasibleStart(usize),
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("best response failed for player {player} in sweep {sweep}: {source}")]
    BestResponse {
        player: usize,
        sweep: usize,
        source: BdroError,
    },
    #[error("player {0}: {1}")]
    Player(usize, BdroError),
    #[error("variant {0:?} needs raw observation data attached to the game")]
    MissingRawData(Variant),
}

/// Which decision model the game instance encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Posterior-sampled nominals with KL radius ε.
    Bdrne,
    /// Posterior-sampled nominals, radius zero.
    Bane,
    /// KL ball of radius ε̂ around the empirical distribution of raw data.
    DrneEmpirical,
    /// Plain sample-average equilibrium on the raw data.
    EmpiricalNe,
}

/// An n-player game: player specifications plus the variant and master seed
/// it was built from. `raw_data` carries each player's observations for the
/// empirical variants.
#[derive(Debug, Clone)]
pub struct GameInstance {
    pub players: Vec<PlayerSpec>,
    pub variant: Variant,
    pub seed: u64,
    pub raw_data: Option<Vec<Vec<Vec<f64>>>>,
}

impl GameInstance {
    pub fn n_players(&self) -> usize {
        self.players.len()
    }

    /// Componentwise midpoint of the action sets; the default start.
    pub fn midpoint(&self) -> Vec<Vec<f64>> {
        self.players.iter().map(|p| p.actions.midpoint()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxIter,
    CycleDetected,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Status::Converged => "converged",
            Status::MaxIter => "max_iter",
            Status::CycleDetected => "cycle_detected",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    pub point: Vec<Vec<f64>>,
    /// Per-player objective values at `point`.
    pub values: Vec<f64>,
    /// Aggregate best-response gap at `point`.
    pub gap: f64,
    pub iterations: usize,
    /// Squared step norms ‖x^k − x^{k−1}‖², one per sweep.
    pub step_norms: Vec<f64>,
    pub status: Status,
}

fn rivals_of(x: &[Vec<f64>], j: usize) -> Vec<Vec<f64>> {
    x.iter()
        .enumerate()
        .filter(|(i, _)| *i != j)
        .map(|(_, v)| v.clone())
        .collect()
}

fn squared_norm_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(av, bv)| av.iter().zip(bv).map(|(x, y)| (x - y) * (x - y)))
        .sum()
}

/// Cyclic best-response iteration from `x0` with squared-step tolerance
/// `tol`. Records the full step-norm trace and certifies the final point
/// with [`ni_gap`].
pub fn gauss_seidel(
    game: &GameInstance,
    x0: &[Vec<f64>],
    tol: f64,
    max_iter: usize,
) -> Result<EquilibriumResult, EquilibriumError> {
    if game.players.is_empty() {
        return Err(EquilibriumError::NoPlayers);
    }
    if tol <= 0.0 || tol.is_nan() {
        return Err(EquilibriumError::InvalidTolerance(tol));
    }
    for (j, player) in game.players.iter().enumerate() {
        if x0.len() != game.players.len() || !player.actions.contains(&x0[j]) {
            return Err(EquilibriumError::InfeasibleStart(j));
        }
    }

    let mut x: Vec<Vec<f64>> = x0.to_vec();
    let mut step_norms = Vec::new();
    let mut status = Status::MaxIter;
    let mut best_norm = f64::INFINITY;
    let mut stale_sweeps = 0usize;
    let mut sweeps = 0usize;

    for sweep in 1..=max_iter {
        sweeps = sweep;
        let previous = x.clone();
        for j in 0..x.len() {
            let rivals = rivals_of(&x, j);
            let (xj, _) = bdro::best_response(&game.players[j], &rivals).map_err(|source| {
                EquilibriumError::BestResponse {
                    player: j,
                    sweep,
                    source,
                }
            })?;
            x[j] = xj;
        }
        let norm = squared_norm_diff(&x, &previous);
        step_norms.push(norm);
        if norm <= tol {
            status = Status::Converged;
            break;
        }
        if norm < best_norm - f64::EPSILON * best_norm.abs() {
            best_norm = norm;
            stale_sweeps = 0;
        } else {
            stale_sweeps += 1;
            if stale_sweeps >= CYCLE_PATIENCE {
                status = Status::CycleDetected;
                break;
            }
        }
    }

    let values = game
        .players
        .iter()
        .enumerate()
        .map(|(j, p)| {
            bdro::bdro_value(p, &x[j], &rivals_of(&x, j)).map_err(|e| EquilibriumError::Player(j, e))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let gap = ni_gap(game, &x)?;

    Ok(EquilibriumResult {
        point: x,
        values,
        gap,
        iterations: sweeps,
        step_norms,
        status,
    })
}

/// Aggregate best-response gap Σ_j [max_y ϑ_j(y, x_{−j}) − ϑ_j(x_j, x_{−j})].
///
/// Zero exactly at an equilibrium; always ≥ 0 up to solver tolerance. The
/// per-player terms are independent and evaluated in parallel.
pub fn ni_gap(game: &GameInstance, x: &[Vec<f64>]) -> Result<f64, EquilibriumError> {
    let terms: Vec<f64> = game
        .players
        .par_iter()
        .enumerate()
        .map(|(j, player)| {
            let rivals = rivals_of(x, j);
            let (_, best) =
                bdro::best_response(player, &rivals).map_err(|e| EquilibriumError::Player(j, e))?;
            let current = bdro::bdro_value(player, &x[j], &rivals)
                .map_err(|e| EquilibriumError::Player(j, e))?;
            Ok(best - current)
        })
        .collect::<Result<_, EquilibriumError>>()?;
    Ok(terms.iter().sum())
}

/// Realizes the game's variant from its ingredients.
///
/// `bane` zeroes every radius and keeps the posterior scenarios;
/// `drne_empirical` swaps each player's scenarios for the raw-data cloud and
/// keeps the configured radius as ε̂; `empirical_ne` does both.
pub fn build_variant(game: &GameInstance) -> Result<GameInstance, EquilibriumError> {
    let mut out = game.clone();
    let zero = crate::kl_dro::AmbiguitySpec::new(0.0).expect("zero radius is valid");
    match game.variant {
        Variant::Bdrne => {}
        Variant::Bane => {
            for p in &mut out.players {
                p.ambiguity = zero;
            }
        }
        Variant::DrneEmpirical | Variant::EmpiricalNe => {
            let data = game
                .raw_data
                .as_ref()
                .ok_or(EquilibriumError::MissingRawData(game.variant))?;
            if data.len() != game.players.len() {
                return Err(EquilibriumError::MissingRawData(game.variant));
            }
            for (j, p) in out.players.iter_mut().enumerate() {
                let cloud = ScenarioSet::from_cloud(data[j].clone(), p.scenarios.seed())
                    .map_err(|e| EquilibriumError::Player(j, e))?;
                p.scenarios = Arc::new(cloud);
                if game.variant == Variant::EmpiricalNe {
                    p.ambiguity = zero;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bdro::{ActionSet, Utility};
    use crate::kl_dro::AmbiguitySpec;

    fn dummy_scenarios() -> Arc<ScenarioSet> {
        Arc::new(ScenarioSet::new(vec![vec![0.0]], vec![vec![vec![0.0]]], 0).unwrap())
    }

    fn deterministic_player(
        index: usize,
        utility: Arc<dyn Utility>,
        lo: f64,
        hi: f64,
    ) -> PlayerSpec {
        PlayerSpec {
            index,
            utility,
            actions: ActionSet::interval(lo, hi).unwrap(),
            ambiguity: AmbiguitySpec::new(0.0).unwrap(),
            scenarios: dummy_scenarios(),
        }
    }

    /// u_j = −(x_j − 0.3 x_{−j} − b_j)²; the fixed point solves the linear
    /// system x1 = 0.3 x2 + 1, x2 = 0.3 x1 + 2.
    fn quadratic_game() -> (GameInstance, [f64; 2]) {
        let u1 = Arc::new(|own: &[f64], rivals: &[Vec<f64>], _: &[f64]| {
            -(own[0] - 0.3 * rivals[0][0] - 1.0).powi(2)
        });
        let u2 = Arc::new(|own: &[f64], rivals: &[Vec<f64>], _: &[f64]| {
            -(own[0] - 0.3 * rivals[0][0] - 2.0).powi(2)
        });
        let game = GameInstance {
            players: vec![
                deterministic_player(0, u1, 0.0, 10.0),
                deterministic_player(1, u2, 0.0, 10.0),
            ],
            variant: Variant::Bdrne,
            seed: 0,
            raw_data: None,
        };
        let x1 = 1.6 / 0.91;
        let x2 = 0.3 * x1 + 2.0;
        (game, [x1, x2])
    }

    #[test]
    fn single_player_game_is_one_best_response() {
        let u = Arc::new(|own: &[f64], _: &[Vec<f64>], _: &[f64]| -(own[0] - 4.0).powi(2));
        let game = GameInstance {
            players: vec![deterministic_player(0, u, 0.0, 10.0)],
            variant: Variant::Bdrne,
            seed: 0,
            raw_data: None,
        };
        let r = gauss_seidel(&game, &game.midpoint(), 1e-12, 50).unwrap();
        assert!((r.point[0][0] - 4.0).abs() < 1e-8);
        assert_eq!(r.status, Status::Converged);
        // Degenerate single-player reduction: the gap is the suboptimality.
        let gap = ni_gap(&game, &[vec![3.0]]).unwrap();
        assert!((gap - 1.0).abs() < 1e-8);
    }

    #[test]
    fn quadratic_game_recovers_the_linear_fixed_point() {
        let (game, [x1, x2]) = quadratic_game();
        let r = gauss_seidel(&game, &game.midpoint(), 1e-20, 30).unwrap();
        assert_eq!(r.status, Status::Converged);
        assert!(r.iterations <= 30);
        assert!(
            (r.point[0][0] - x1).abs() < 1e-8 && (r.point[1][0] - x2).abs() < 1e-8,
            "point {:?} vs ({x1}, {x2})",
            r.point
        );
        assert!(r.gap <= 1e-10 && r.gap >= -1e-10);
        assert!(*r.step_norms.last().unwrap() <= 1e-20);
    }

    #[test]
    fn gap_at_a_perturbed_equilibrium_matches_the_closed_form() {
        let (game, [x1, x2]) = quadratic_game();
        let x = vec![vec![x1 + 0.1], vec![x2]];
        let gap = ni_gap(&game, &x).unwrap();
        // Player 1 loses 0.1²; player 2's target moved by 0.3 · 0.1.
        let expected = 0.01 + 0.0009;
        assert!((gap - expected).abs() < 1e-8, "gap {gap} vs {expected}");
    }

    #[test]
    fn best_response_steps_never_hurt_the_mover() {
        let (game, _) = quadratic_game();
        let mut x = game.midpoint();
        for _ in 0..5 {
            for j in 0..2 {
                let rivals = rivals_of(&x, j);
                let before = bdro::bdro_value(&game.players[j], &x[j], &rivals).unwrap();
                let (xj, after) = bdro::best_response(&game.players[j], &rivals).unwrap();
                assert!(after >= before - 1e-9);
                x[j] = xj;
            }
        }
    }

    #[test]
    fn oscillating_best_responses_are_reported_as_a_cycle() {
        // x1 chases x2 while x2 flees to 1 − x1; steps never shrink.
        let u1 = Arc::new(|own: &[f64], rivals: &[Vec<f64>], _: &[f64]| {
            -(own[0] - rivals[0][0]).powi(2)
        });
        let u2 = Arc::new(|own: &[f64], rivals: &[Vec<f64>], _: &[f64]| {
            -(own[0] - (1.0 - rivals[0][0])).powi(2)
        });
        let game = GameInstance {
            players: vec![
                deterministic_player(0, u1, 0.0, 1.0),
                deterministic_player(1, u2, 0.0, 1.0),
            ],
            variant: Variant::Bdrne,
            seed: 0,
            raw_data: None,
        };
        let r = gauss_seidel(&game, &[vec![0.2], vec![0.9]], 1e-16, 200).unwrap();
        assert_eq!(r.status, Status::CycleDetected);
        assert!(r.iterations < 200);
    }

    #[test]
    fn determinism_of_full_runs() {
        let (game, _) = quadratic_game();
        let a = gauss_seidel(&game, &game.midpoint(), 1e-18, 60).unwrap();
        let b = gauss_seidel(&game, &game.midpoint(), 1e-18, 60).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn variant_construction_rules() {
        let (mut game, _) = quadratic_game();
        game.players[0].ambiguity = AmbiguitySpec::new(0.4).unwrap();
        game.players[1].ambiguity = AmbiguitySpec::new(0.4).unwrap();

        game.variant = Variant::Bane;
        let bane = build_variant(&game).unwrap();
        assert!(bane.players.iter().all(|p| p.ambiguity.epsilon() == 0.0));

        game.variant = Variant::DrneEmpirical;
        assert!(matches!(
            build_variant(&game),
            Err(EquilibriumError::MissingRawData(_))
        ));

        game.raw_data = Some(vec![
            vec![vec![0.1], vec![0.2]],
            vec![vec![0.3], vec![0.4]],
        ]);
        let drne = build_variant(&game).unwrap();
        assert_eq!(drne.players[0].scenarios.n_theta(), 1);
        assert_eq!(drne.players[0].scenarios.cloud(0).len(), 2);
        assert!(drne.players.iter().all(|p| p.ambiguity.epsilon() == 0.4));

        // ε̂ = 0 empirical DRNE coincides with the plain empirical game.
        game.players[0].ambiguity = AmbiguitySpec::new(0.0).unwrap();
        game.players[1].ambiguity = AmbiguitySpec::new(0.0).unwrap();
        let drne_zero = build_variant(&game).unwrap();
        game.variant = Variant::EmpiricalNe;
        let empirical = build_variant(&game).unwrap();
        let ra = gauss_seidel(&drne_zero, &drne_zero.midpoint(), 1e-16, 40).unwrap();
        let rb = gauss_seidel(&empirical, &empirical.midpoint(), 1e-16, 40).unwrap();
        assert_eq!(ra, rb);
    }

    #[test]
    fn infeasible_start_and_bad_tolerance_are_rejected() {
        let (game, _) = quadratic_game();
        assert!(matches!(
            gauss_seidel(&game, &[vec![20.0], vec![1.0]], 1e-10, 10),
            Err(EquilibriumError::InfeasibleStart(0))
        ));
        assert!(matches!(
            gauss_seidel(&game, &game.midpoint(), 0.0, 10),
            Err(EquilibriumError::InvalidTolerance(_))
        ));
    }
}
