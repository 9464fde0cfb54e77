//! Seeded Monte-Carlo execution: one trial = one (sweep point, drop,
//! scheme) triple. Trials are independent work units on a bounded rayon
//! pool; results are collected in deterministic order.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ao::{conventional_channel, run_scheme, AoCaps, AoHalfStep, AoStatus, SchemeKind};
use crate::phys::ChannelModel;
use crate::rate::{effective_powers, rate_report_from_powers, NoiseSpec, PrecoderSet};

use super::config::{build_scenario, trial_seed, ScenarioConfig};

/// Persisted outcome of one trial. Everything needed to recompute the
/// recorded sum-rate is stored: user drop, final positions, precoders and
/// the evaluation-channel flag.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialResult {
    pub seed: u64,
    pub sweep_value: f64,
    pub scheme: SchemeKind,
    pub f_c_hz: f64,
    pub k_users: usize,
    pub n_waveguides: usize,
    pub p_max_dbm: f64,
    /// Users in the canonical (ascending initial channel norm) order.
    pub users: Vec<(f64, f64)>,
    /// Permutation applied by the scheme before optimizing (identity for
    /// PA schemes; the conventional scheme re-ranks by its own channel).
    pub user_order: Vec<usize>,
    pub sum_rate: f64,
    pub per_user_rates: Vec<f64>,
    pub iterations: usize,
    pub status: AoStatus,
    pub wall_ms: f64,
    pub positions: Vec<f64>,
    /// Precoder vectors as (re, im) pairs, in the scheme's internal user
    /// order.
    pub precoders: Vec<Vec<(f64, f64)>>,
    pub eval_lossless: bool,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub trace: Vec<TraceStep>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceStep {
    pub outer: usize,
    pub phase: String,
    pub sum_rate: f64,
}

impl TrialResult {
    /// Recomputes the recorded sum-rate from the persisted geometry and
    /// precoders alone (the recorded-vs-recomputed invariant).
    pub fn recompute_sum_rate(&self, cfg: &ScenarioConfig) -> f64 {
        let cfg_point = {
            let mut c = cfg.at_sweep_value(self.sweep_value);
            c.f_c_hz = self.f_c_hz;
            c.k_users = self.k_users;
            c.n_waveguides = self.n_waveguides;
            c
        };
        let mut scenario = build_scenario(&cfg_point, self.seed);
        // The persisted users are authoritative (already sorted).
        scenario.geom.users = self.users.clone();
        let vectors: Vec<DVector<Complex64>> = self
            .precoders
            .iter()
            .map(|w| DVector::from_iterator(w.len(), w.iter().map(|&(re, im)| Complex64::new(re, im))))
            .collect();
        let h = if self.scheme == SchemeKind::Conventional {
            let raw = conventional_channel(&scenario);
            crate::phys::ChannelMatrix {
                h: DMatrix::from_fn(self.k_users, raw.n_waveguides(), |k, n| {
                    raw.h[(self.user_order[k], n)]
                }),
                lossless: true,
            }
        } else {
            let geom = scenario.geom.with_pin_x(self.positions.clone());
            let model = ChannelModel::new(
                scenario.material,
                scenario.constants.clone(),
                self.eval_lossless,
            );
            model.matrix(&geom).expect("persisted geometry valid")
        };
        let noise = NoiseSpec {
            sigma2: self
                .user_order
                .iter()
                .map(|&o| scenario.noise.sigma2[o])
                .collect(),
        };
        let p = PrecoderSet::from_vectors(vectors, scenario.budgets.clone());
        effective_powers(&h, &p)
            .map(|g| rate_report_from_powers(&g, &noise).sum_rate)
            .unwrap_or(f64::NAN)
    }
}

/// One trial end to end.
pub fn run_trial(
    cfg: &ScenarioConfig,
    sweep_value: f64,
    drop_index: usize,
    scheme: SchemeKind,
    caps: &AoCaps,
) -> TrialResult {
    let cfg_point = cfg.at_sweep_value(sweep_value);
    let seed = trial_seed(cfg.master_seed, drop_index as u64);
    let scenario = build_scenario(&cfg_point, seed);
    let start = std::time::Instant::now();
    let outcome = run_scheme(&scenario, scheme, caps);
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    match outcome {
        Ok(out) => {
            // The conventional scheme re-ranks internally; reconstruct the
            // permutation it used so persisted precoders stay evaluable.
            let user_order: Vec<usize> = if scheme == SchemeKind::Conventional {
                let raw = conventional_channel(&scenario);
                let mut perm: Vec<usize> = (0..scenario.geom.n_users()).collect();
                perm.sort_by(|&a, &b| {
                    raw.user_norm(a).partial_cmp(&raw.user_norm(b)).unwrap()
                });
                perm
            } else {
                (0..scenario.geom.n_users()).collect()
            };
            TrialResult {
                seed,
                sweep_value,
                scheme,
                f_c_hz: cfg_point.f_c_hz,
                k_users: cfg_point.k_users,
                n_waveguides: cfg_point.n_waveguides,
                p_max_dbm: cfg_point.p_max_dbm,
                users: scenario.geom.users.clone(),
                user_order,
                sum_rate: out.evaluated_sum_rate,
                per_user_rates: out.per_user_rates,
                iterations: out.outer_iterations,
                status: out.status,
                wall_ms,
                positions: out.positions,
                precoders: out
                    .vectors
                    .iter()
                    .map(|w| w.iter().map(|c| (c.re, c.im)).collect())
                    .collect(),
                eval_lossless: out.eval_lossless,
                trace: out
                    .trace
                    .iter()
                    .map(|s: &AoHalfStep| TraceStep {
                        outer: s.outer,
                        phase: format!("{:?}", s.phase).to_lowercase(),
                        sum_rate: s.sum_rate,
                    })
                    .collect(),
            }
        }
        Err(_) => TrialResult {
            seed,
            sweep_value,
            scheme,
            f_c_hz: cfg_point.f_c_hz,
            k_users: cfg_point.k_users,
            n_waveguides: cfg_point.n_waveguides,
            p_max_dbm: cfg_point.p_max_dbm,
            users: scenario.geom.users.clone(),
            user_order: (0..scenario.geom.n_users()).collect(),
            sum_rate: f64::NAN,
            per_user_rates: vec![],
            iterations: 0,
            status: AoStatus::Degraded,
            wall_ms,
            positions: vec![],
            precoders: vec![],
            eval_lossless: false,
            trace: vec![],
        },
    }
}

/// Runs the full sweep: every (sweep value × drop × scheme) triple, in
/// parallel, collected in deterministic order.
pub fn run_sweep(cfg: &ScenarioConfig, caps: &AoCaps) -> Vec<TrialResult> {
    let mut specs = Vec::new();
    for &value in &cfg.sweep_values() {
        for drop_index in 0..cfg.n_trials {
            for &scheme in &cfg.schemes {
                specs.push((value, drop_index, scheme));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(if cfg.workers == 0 {
            rayon::current_num_threads()
        } else {
            cfg.workers
        })
        .build()
        .expect("worker pool");
    pool.install(|| {
        specs
            .par_iter()
            .map(|&(value, drop_index, scheme)| run_trial(cfg, value, drop_index, scheme, caps))
            .collect()
    })
}
