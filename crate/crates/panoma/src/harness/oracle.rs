//! Brute-force grid oracle for small instances (N ≤ 2, K ≤ 2).
//!
//! Exhaustive search over PA positions on a uniform grid and a discretized
//! precoder family: per-waveguide power split across users quantized to a
//! fixed number of levels, each user's entry phase aligned to its own
//! channel coefficient. The full rate formula is evaluated exactly per
//! candidate; ordering and rate-floor feasibility are enforced so the
//! search covers the same constraint set as the optimizer.

use nalgebra::DVector;
use num_complex::Complex64;
use thiserror::Error;

use crate::ao::AoScenario;
use crate::phys::{ChannelMatrix, ChannelModel};
use crate::rate::{POWER_TOL, RATE_TOL};

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("instance too large for the grid oracle: N = {n} (≤ 2), K = {k} (≤ 2)")]
    TooLarge { n: usize, k: usize },
}

#[derive(Debug, Clone)]
pub struct OracleOpts {
    /// PA position grid step (m).
    pub position_step: f64,
    /// Power-split quantization levels per waveguide.
    pub power_levels: usize,
    /// Enforce the channel-ordering constraint on candidates.
    pub enforce_ordering: bool,
    /// Enforce the per-user rate floor on candidates.
    pub enforce_rate_floor: bool,
}

impl Default for OracleOpts {
    fn default() -> Self {
        Self {
            position_step: 0.25,
            power_levels: 64,
            enforce_ordering: true,
            enforce_rate_floor: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub best_sum_rate: f64,
    pub best_positions: Vec<f64>,
    /// Per-waveguide share of the budget given to user 0 (K = 2) at the
    /// optimum; empty for K = 1.
    pub best_split: Vec<f64>,
    pub evaluations: u64,
    /// Candidates surviving the feasibility filter.
    pub feasible_candidates: u64,
}

/// Sum-rate of the phase-aligned candidate with user-0 budget shares
/// `split[n]` at the given channels; returns `None` if infeasible.
fn eval_candidate(
    h: &ChannelMatrix,
    budgets: &[f64],
    sigma2: &[f64],
    r_min: f64,
    split0: &[f64],
    opts: &OracleOpts,
) -> Option<f64> {
    let k_users = h.n_users();
    let n_wg = h.n_waveguides();
    // Effective powers g[k][m] = |sum_n h[m][n]^* w[k][n]|^2 with
    // w[k][n] = sqrt(P_n beta_{k,n}) e^{j arg h[k][n]}.
    let mut g = [[0.0_f64; 2]; 2];
    for k in 0..k_users {
        for m in 0..k_users {
            let mut acc = Complex64::new(0.0, 0.0);
            for n in 0..n_wg {
                let share = if k_users == 1 {
                    1.0
                } else if k == 0 {
                    split0[n]
                } else {
                    1.0 - split0[n]
                };
                let mag = (budgets[n] * share).sqrt();
                let phase = h.h[(k, n)].arg();
                let w = Complex64::from_polar(mag, phase);
                acc += h.h[(m, n)].conj() * w;
            }
            g[k][m] = acc.norm_sqr();
        }
    }
    if opts.enforce_ordering && k_users == 2 {
        for m in 0..k_users {
            if g[1][m] > g[0][m] + POWER_TOL {
                return None;
            }
        }
    }
    let mut rates = [0.0_f64; 2];
    if k_users == 1 {
        rates[0] = (1.0 + g[0][0] / sigma2[0]).log2();
    } else {
        let s00 = g[0][0] / (g[1][0] + sigma2[0]);
        let s01 = g[0][1] / (g[1][1] + sigma2[1]);
        rates[0] = (1.0 + s00.min(s01)).log2();
        rates[1] = (1.0 + g[1][1] / sigma2[1]).log2();
    }
    if opts.enforce_rate_floor {
        for k in 0..k_users {
            if rates[k] < r_min - RATE_TOL {
                return None;
            }
        }
    }
    Some(rates[..k_users].iter().sum())
}

/// Exhaustive search; ties broken by the first candidate in scan order
/// (positions outer, splits inner), so results are deterministic.
pub fn oracle_grid(
    scenario: &AoScenario,
    model: &ChannelModel,
    opts: &OracleOpts,
) -> Result<OracleResult, OracleError> {
    let n_wg = scenario.geom.n_waveguides();
    let k_users = scenario.geom.n_users();
    if n_wg > 2 || k_users > 2 {
        return Err(OracleError::TooLarge {
            n: n_wg,
            k: k_users,
        });
    }
    let steps = (scenario.geom.x_max / opts.position_step).floor() as usize + 1;
    let grid_pos = |i: usize| (i as f64 * opts.position_step).min(scenario.geom.x_max);
    let levels = if k_users == 1 { 1 } else { opts.power_levels };
    let split_at = |l: usize| {
        if levels == 1 {
            1.0
        } else {
            l as f64 / (levels - 1) as f64
        }
    };

    let mut best_rate = f64::NEG_INFINITY;
    let mut best_positions = vec![0.0; n_wg];
    let mut best_split = vec![0.0; if k_users == 2 { n_wg } else { 0 }];
    let mut evaluations = 0u64;
    let mut feasible = 0u64;

    let mut pos_idx = vec![0usize; n_wg];
    loop {
        let positions: Vec<f64> = pos_idx.iter().map(|&i| grid_pos(i)).collect();
        let geom = scenario.geom.with_pin_x(positions.clone());
        if let Ok(h) = model.matrix(&geom) {
            let mut split_idx = vec![0usize; if k_users == 2 { n_wg } else { 0 }];
            loop {
                let split0: Vec<f64> = split_idx.iter().map(|&l| split_at(l)).collect();
                evaluations += 1;
                if let Some(rate) = eval_candidate(
                    &h,
                    &scenario.budgets,
                    &scenario.noise.sigma2,
                    scenario.r_min,
                    &split0,
                    opts,
                ) {
                    feasible += 1;
                    if rate > best_rate {
                        best_rate = rate;
                        best_positions = positions.clone();
                        best_split = split0.clone();
                    }
                }
                // Advance the split counter.
                if split_idx.is_empty() {
                    break;
                }
                let mut carry = 0;
                loop {
                    split_idx[carry] += 1;
                    if split_idx[carry] < levels {
                        break;
                    }
                    split_idx[carry] = 0;
                    carry += 1;
                    if carry == split_idx.len() {
                        break;
                    }
                }
                if carry == split_idx.len() {
                    break;
                }
            }
        }
        // Advance the position counter.
        let mut carry = 0;
        loop {
            pos_idx[carry] += 1;
            if pos_idx[carry] < steps {
                break;
            }
            pos_idx[carry] = 0;
            carry += 1;
            if carry == n_wg {
                break;
            }
        }
        if carry == n_wg {
            break;
        }
    }
    Ok(OracleResult {
        best_sum_rate: best_rate,
        best_positions,
        best_split,
        evaluations,
        feasible_candidates: feasible,
    })
}

/// Projects an optimizer solution onto the oracle's candidate family
/// (positions snapped to the grid, precoders replaced by the nearest
/// phase-aligned split) and evaluates it there. Used for the dominance
/// check: the oracle maximum can never be below this value.
pub fn project_and_evaluate(
    scenario: &AoScenario,
    model: &ChannelModel,
    positions: &[f64],
    vectors: &[DVector<Complex64>],
    opts: &OracleOpts,
) -> Option<f64> {
    let n_wg = scenario.geom.n_waveguides();
    let k_users = scenario.geom.n_users();
    if n_wg > 2 || k_users > 2 {
        return None;
    }
    let snapped: Vec<f64> = positions
        .iter()
        .map(|&x| {
            ((x / opts.position_step).round() * opts.position_step)
                .clamp(0.0, scenario.geom.x_max)
        })
        .collect();
    let geom = scenario.geom.with_pin_x(snapped);
    let h = model.matrix(&geom).ok()?;
    let levels = opts.power_levels;
    let split0: Vec<f64> = if k_users == 2 {
        (0..n_wg)
            .map(|n| {
                let p0 = vectors[0][n].norm_sqr();
                let p1 = vectors[1][n].norm_sqr();
                let total = (p0 + p1).max(1e-300);
                let share = p0 / total;
                ((share * (levels - 1) as f64).round() / (levels - 1) as f64).clamp(0.0, 1.0)
            })
            .collect()
    } else {
        vec![]
    };
    eval_candidate(
        &h,
        &scenario.budgets,
        &scenario.noise.sigma2,
        scenario.r_min,
        &split0,
        opts,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phys::{EtaMode, PhysicalConstants, SystemGeometry, WaveguideMaterial};
    use crate::rate::NoiseSpec;

    fn scenario(users: Vec<(f64, f64)>, n_wg: usize, tan_delta: f64) -> AoScenario {
        let material = WaveguideMaterial {
            tan_delta,
            ..WaveguideMaterial::ptfe()
        };
        let constants = PhysicalConstants::new(28e9, material.eta_eff, EtaMode::Paper).unwrap();
        let k = users.len();
        AoScenario {
            geom: SystemGeometry {
                d: 3.0,
                feed_y: (0..n_wg).map(|n| 10.0 * n as f64).collect(),
                pin_x: vec![0.0; n_wg],
                users,
                x_max: 100.0,
            },
            material,
            constants,
            noise: NoiseSpec::uniform(1e-12, k),
            budgets: vec![0.0316 / n_wg as f64; n_wg],
            r_min: 0.5,
        }
    }

    #[test]
    fn too_large_instances_are_refused() {
        let sc = scenario(vec![(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)], 1, 2e-4);
        let model = sc.model(false);
        assert!(matches!(
            oracle_grid(&sc, &model, &OracleOpts::default()),
            Err(OracleError::TooLarge { .. })
        ));
    }

    #[test]
    fn lossless_single_user_argmax_at_user_x() {
        let sc = scenario(vec![(40.0, 1.0)], 1, 0.0);
        let model = sc.model(true);
        let out = oracle_grid(&sc, &model, &OracleOpts::default()).unwrap();
        assert!((out.best_positions[0] - 40.0).abs() <= 0.25 + 1e-12);
    }

    #[test]
    fn loss_shifts_argmax_toward_feed() {
        let sc_lossy = scenario(vec![(40.0, 1.0)], 1, 2e-3);
        let model_lossy = sc_lossy.model(false);
        let lossy = oracle_grid(&sc_lossy, &model_lossy, &OracleOpts::default()).unwrap();
        let model_free = sc_lossy.model(true);
        let free = oracle_grid(&sc_lossy, &model_free, &OracleOpts::default()).unwrap();
        assert!(lossy.best_positions[0] < free.best_positions[0]);
    }

    #[test]
    fn projection_never_beats_oracle() {
        let sc = scenario(vec![(20.0, -2.0), (55.0, 4.0)], 1, 2e-4);
        let model = sc.model(false);
        let opts = OracleOpts::default();
        let oracle = oracle_grid(&sc, &model, &opts).unwrap();
        // A hand-made candidate inside the family.
        let geom = sc.geom.with_pin_x(vec![37.5]);
        let h = model.matrix(&geom).unwrap();
        let w0 = DVector::from_element(1, Complex64::from_polar((0.0316_f64 * 0.75).sqrt(), h.h[(0, 0)].arg()));
        let w1 = DVector::from_element(1, Complex64::from_polar((0.0316_f64 * 0.25).sqrt(), h.h[(1, 0)].arg()));
        let projected = project_and_evaluate(&sc, &model, &[37.5], &[w0, w1], &opts);
        if let Some(v) = projected {
            assert!(oracle.best_sum_rate >= v - 1e-9);
        }
    }
}
