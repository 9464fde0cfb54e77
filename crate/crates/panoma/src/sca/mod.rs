//! Successive convex approximation subproblems for the sum-rate maximizer.
//!
//! Two inner loops alternate under the outer driver in [`crate::ao`]:
//!
//! * [`sub1`] — precoder optimization at fixed PA positions. The bilinear
//!   slack products `ξ·r` are split as `0.5(ξ+r)² − 0.5ξ² − 0.5r²`, the
//!   concave halves are majorized by first-order Taylor expansions at the
//!   current reference, the rank constraint is dropped (semidefinite
//!   relaxation), and the result is a conic program over Hermitian PSD
//!   precoder matrices.
//! * [`sub2`] — PA placement at fixed precoders. Channel-power products are
//!   bracketed by slack variables `τ ≥ g ≥ γ` through log-domain constraints
//!   whose distance terms are linearized at the current positions; a trust
//!   region keeps the linearization honest and step acceptance is gated on
//!   the true sum-rate.
//!
//! [`rank_one`] recovers beamforming vectors from the relaxed PSD matrices.

use serde::Serialize;

use crate::conic::SolverSettings;
use crate::rate::NoiseSpec;

pub mod rank_one;
pub mod sub1;
pub mod sub2;

/// Problem-level constants shared by both subproblems.
#[derive(Debug, Clone)]
pub struct NomaProblem {
    /// Per-waveguide power budgets `P_n^max` (watts).
    pub budgets: Vec<f64>,
    pub noise: NoiseSpec,
    /// Minimum per-user rate `R_min` (bits/s/Hz).
    pub r_min: f64,
    /// Whether the channel-ordering rows are included (the naive scheme
    /// optimizes without them).
    pub include_ordering: bool,
}

pub use rank_one::{extract_precoders, extract_rank_one, ExtractionOutcome, RankOneReport};
pub use sub1::{build_subproblem1, run_algorithm1, Alg1Result, Sub1Program, Sub1State};
pub use sub2::{build_subproblem2, run_algorithm2, Alg2Result, Sub2Program, Sub2State};

/// Evaluates the affine majorant of `−0.5 v²` built at `v_ref`:
/// `−0.5 v_ref² − v_ref (v − v_ref) = 0.5 v_ref² − v_ref·v ≥ −0.5 v²`,
/// with equality iff `v = v_ref`.
pub fn taylor_quadratic_bound(v: f64, v_ref: f64) -> f64 {
    let (c, s) = taylor_quadratic_coeffs(v_ref);
    c + s * v
}

/// `(constant, slope)` of the majorant above, for assembling constraints.
pub fn taylor_quadratic_coeffs(v_ref: f64) -> (f64, f64) {
    (0.5 * v_ref * v_ref, -v_ref)
}

/// Which logarithmic distance term is being linearized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogSign {
    /// `−ln d(x)`, slope `−(x_ref − x_user)/d_ref²`.
    NegLogDistance,
    /// `+ln d(x)`, slope `+(x_ref − x_user)/d_ref²`.
    PosLogDistance,
}

/// First-order expansion `value(x) = constant + slope·(x − x_ref)` of
/// `±ln d(x)` with `d(x) = sqrt((x − x_user)² + cross2)`, where `cross2`
/// collects the x-independent squared offsets (lateral and height).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineInX {
    pub constant: f64,
    pub slope: f64,
    pub x_ref: f64,
}

impl AffineInX {
    pub fn eval(&self, x: f64) -> f64 {
        self.constant + self.slope * (x - self.x_ref)
    }
}

pub fn linearize_log_distance(x_ref: f64, x_user: f64, cross2: f64, sign: LogSign) -> AffineInX {
    let u = x_ref - x_user;
    let d2 = u * u + cross2;
    let d_ref = d2.sqrt();
    match sign {
        LogSign::NegLogDistance => AffineInX {
            constant: -d_ref.ln(),
            slope: -u / d2,
            x_ref,
        },
        LogSign::PosLogDistance => AffineInX {
            constant: d_ref.ln(),
            slope: u / d2,
            x_ref,
        },
    }
}

/// Linearization of `ln γ` at `γ_ref` as `(constant, slope)` in γ:
/// `ln γ_ref + (γ − γ_ref)/γ_ref`, a global overestimator of the concave ln.
pub fn linearize_log_slack(gamma_ref: f64) -> (f64, f64) {
    (gamma_ref.ln() - 1.0, 1.0 / gamma_ref)
}

/// Caps for the inner SCA loops.
#[derive(Debug, Clone)]
pub struct ScaCaps {
    pub max_iters: usize,
    /// Relative change of the true objective that counts as converged.
    pub rel_tol: f64,
    pub solver: SolverSettings,
}

impl Default for ScaCaps {
    fn default() -> Self {
        Self {
            max_iters: 30,
            rel_tol: 1e-4,
            solver: SolverSettings::default(),
        }
    }
}

/// Exit condition of an inner loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaStatus {
    Converged,
    MaxIters,
    /// Solver trouble or a rejected step; the best iterate so far is kept.
    Degraded,
}

/// One accepted inner iteration, exportable as a JSON line.
#[derive(Debug, Clone, Serialize)]
pub struct ScaTraceEntry {
    pub iteration: usize,
    pub surrogate_objective: f64,
    pub true_sum_rate: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trust_radius: Option<f64>,
}

/// Serializes a trace as JSON lines.
pub fn trace_to_jsonl(entries: &[ScaTraceEntry]) -> String {
    entries
        .iter()
        .map(|e| serde_json::to_string(e).expect("trace entries serialize"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Flat storage for the SIC slack variables ξ_{m,k}: for message `k`
/// (0-based, `k < K−1`) the decoders run `m ∈ {k, …, K−2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct XiLayout {
    pub k_users: usize,
    starts: Vec<usize>,
    pub len: usize,
}

impl XiLayout {
    pub fn new(k_users: usize) -> Self {
        let mut starts = Vec::with_capacity(k_users.saturating_sub(1));
        let mut acc = 0usize;
        for k in 0..k_users.saturating_sub(1) {
            starts.push(acc);
            acc += k_users - 1 - k;
        }
        Self {
            k_users,
            starts,
            len: acc,
        }
    }

    /// Number of decoders paired with message `k`.
    pub fn decoders(&self, k: usize) -> usize {
        self.k_users - 1 - k
    }

    pub fn index(&self, k: usize, m: usize) -> usize {
        debug_assert!(k + 1 < self.k_users);
        debug_assert!(m >= k && m + 1 <= self.k_users.saturating_sub(1));
        self.starts[k] + (m - k)
    }
}
