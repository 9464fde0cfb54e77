//! Subproblem 1: precoder optimization at fixed PA positions.
//!
//! With channels fixed, the sum-rate epigraph form maximizes `Σ log2(r_k)`
//! over Hermitian PSD matrices `W_k`, rate slacks `r_k` and SIC slacks
//! `ξ_{m,k}` subject to (0-based user indexing, `K−1` strongest):
//!
//! * ordering rows `Tr(H_k W_m) ≤ Tr(H_k W_{m−1})`,
//! * per-waveguide power `Σ_k W_k[n,n] ≤ P_n`,
//! * `r_k ≥ 2^{R_min}`,
//! * the convexified SIC inequality: `ξ r − ξ ≤ Tr(H_m W_k)` is split via
//!   `ξr = 0.5(ξ+r)² − 0.5ξ² − 0.5r²` and the concave halves replaced by
//!   their Taylor majorants at the reference `(ξ^t, r^t)`, leaving one
//!   rotated-second-order row per `(m, k)`,
//! * `ξ_{m,k} ≥ Σ_{b>k} Tr(H_m W_b) + σ_m²`,
//! * the strongest user's own-SNR row, and the PSD cones (rank dropped).
//!
//! All powers are normalized by the decoder noise variances and budgets
//! inside the builder so the conic data is well scaled; states and
//! extracted matrices stay in watts at the interface.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::conic::{
    solve_with, ConeTag, ConicProgram, HermitianVar, LinExpr, ProgramBuilder, SolveResult,
    SolveStatus, WarmStart,
};
use crate::phys::ChannelMatrix;
use crate::rate::{effective_powers, rate_report_from_powers, PrecoderSet};

use super::{taylor_quadratic_coeffs, NomaProblem, ScaCaps, ScaStatus, ScaTraceEntry, XiLayout};

#[derive(Debug, Error, PartialEq)]
pub enum ScaError {
    #[error("invalid reference state: {0}")]
    BadReference(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("program build failed: {0}")]
    Build(String),
}

/// Reference point of the subproblem-1 surrogate. Slacks are stored in
/// physical units (ξ in watts, r dimensionless ≥ 1).
#[derive(Debug, Clone, PartialEq)]
pub struct Sub1State {
    /// ξ_{m,k} flattened per [`XiLayout`].
    pub xi: Vec<f64>,
    pub r: Vec<f64>,
    pub iter: usize,
}

impl Sub1State {
    /// Builds the reference from the current effective powers: ξ is the
    /// interference-plus-noise each pairing actually sees (padded by
    /// `pad ≥ 1` to keep the first surrogate strictly feasible) and `r` the
    /// implied `1 + SINR`, clamped to the rate floor so the `r ≥ 2^{R_min}`
    /// rows stay satisfiable at the reference.
    pub fn from_powers(
        g: &DMatrix<f64>,
        problem: &NomaProblem,
        pad: f64,
    ) -> Self {
        let k_users = g.nrows();
        let layout = XiLayout::new(k_users);
        let mut xi = vec![0.0; layout.len];
        let mut r = vec![0.0; k_users];
        let r_floor = (2.0_f64).powf(problem.r_min);
        for k in 0..k_users.saturating_sub(1) {
            let mut r_k = f64::INFINITY;
            for m in k..k_users - 1 {
                let interference: f64 = (k + 1..k_users).map(|b| g[(b, m)]).sum();
                let denom = pad * (interference + problem.noise.sigma2[m]);
                xi[layout.index(k, m)] = denom;
                r_k = r_k.min(1.0 + g[(k, m)] / denom);
            }
            r[k] = r_k.max(r_floor);
        }
        let last = k_users - 1;
        r[last] = (1.0 + g[(last, last)] / (pad * problem.noise.sigma2[last])).max(r_floor);
        Self {
            xi,
            r,
            iter: 0,
        }
    }
}

/// Built surrogate program plus the bookkeeping to map solutions back.
pub struct Sub1Program {
    pub program: ConicProgram,
    w_vars: Vec<HermitianVar>,
    xi_off: usize,
    r_off: usize,
    t_vars: Vec<usize>,
    layout: XiLayout,
    power_scale: f64,
    sigma2: Vec<f64>,
}

impl Sub1Program {
    /// Precoder matrices in watts.
    pub fn matrices(&self, res: &SolveResult) -> Vec<DMatrix<Complex64>> {
        self.w_vars
            .iter()
            .map(|w| w.value(&res.x) * Complex64::new(self.power_scale, 0.0))
            .collect()
    }

    /// Next reference state from a solution (slacks un-normalized, clamped
    /// to stay valid references).
    pub fn updated_state(&self, res: &SolveResult, prev: &Sub1State) -> Sub1State {
        let k_users = self.layout.k_users;
        let mut xi = vec![0.0; self.layout.len];
        for k in 0..k_users.saturating_sub(1) {
            for m in k..k_users - 1 {
                let idx = self.layout.index(k, m);
                let v = res.x[self.xi_off + idx] * self.sigma2[m];
                xi[idx] = if v > 0.0 { v } else { prev.xi[idx] };
            }
        }
        let r = (0..k_users)
            .map(|k| res.x[self.r_off + k].max(1.0))
            .collect();
        Sub1State {
            xi,
            r,
            iter: prev.iter + 1,
        }
    }

    /// Σ log2(r_k) at the solution.
    pub fn surrogate_objective(&self, res: &SolveResult) -> f64 {
        self.t_vars.iter().map(|&t| res.x[t]).sum()
    }
}

/// Assembles the convex surrogate at `state`. Fails if the reference
/// violates ξ > 0 or shapes disagree.
pub fn build_subproblem1(
    h: &ChannelMatrix,
    problem: &NomaProblem,
    state: &Sub1State,
) -> Result<Sub1Program, ScaError> {
    let k_users = h.n_users();
    let n_wg = h.n_waveguides();
    let layout = XiLayout::new(k_users);
    if problem.budgets.len() != n_wg {
        return Err(ScaError::Shape(format!(
            "{} budgets for {} waveguides",
            problem.budgets.len(),
            n_wg
        )));
    }
    if problem.noise.sigma2.len() != k_users || state.r.len() != k_users {
        return Err(ScaError::Shape("noise/state length vs users".into()));
    }
    if state.xi.len() != layout.len {
        return Err(ScaError::Shape(format!(
            "xi length {} vs layout {}",
            state.xi.len(),
            layout.len
        )));
    }
    if state.xi.iter().any(|&v| !(v > 0.0)) {
        return Err(ScaError::BadReference("xi must be positive".into()));
    }
    if state.r.iter().any(|&v| !(v > 0.0)) {
        return Err(ScaError::BadReference("r must be positive".into()));
    }

    // Internal normalization: W' = W / p_scale, channels fold the budget
    // scale and the decoder noise so every Tr row is in SINR units.
    let p_scale = problem
        .budgets
        .iter()
        .fold(0.0_f64, |a, &b| a.max(b))
        .max(1e-300);
    // H_m = h'_m h'_m^H with h'_m = h_m sqrt(p_scale) / sigma_m.
    let gram: Vec<DMatrix<Complex64>> = (0..k_users)
        .map(|m| {
            let hm: DVector<Complex64> = h.user_channel(m)
                * Complex64::new((p_scale / problem.noise.sigma2[m]).sqrt(), 0.0);
            &hm * hm.adjoint()
        })
        .collect();

    let mut b = ProgramBuilder::new("subproblem1");
    let w_vars: Vec<HermitianVar> = (0..k_users)
        .map(|k| b.hermitian_psd(format!("W{k}"), n_wg))
        .collect();
    let xi_off = if layout.len > 0 {
        b.vector("xi", layout.len)
    } else {
        0
    };
    let r_off = b.vector("r", k_users);
    let t_vars: Vec<usize> = (0..k_users)
        .map(|k| b.log2_epigraph(format!("rate{k}"), r_off + k))
        .collect();

    let mut objective = LinExpr::default();
    for &t in &t_vars {
        objective.push(t, 1.0);
    }
    b.set_maximize(objective);

    // Ordering rows: Tr(H_k W_{m-1}) - Tr(H_k W_m) >= 0 for all decoders k.
    if problem.include_ordering && k_users > 1 {
        let mut rows = Vec::with_capacity(k_users * (k_users - 1));
        for k in 0..k_users {
            for m in 1..k_users {
                let row = w_vars[m - 1]
                    .trace_expr(&gram[k])
                    .plus(&w_vars[m].trace_expr(&gram[k]).scaled(-1.0));
                rows.push(row);
            }
        }
        b.constraint("ordering", ConeTag::NonNeg, rows);
    }

    // Per-waveguide power: P'_n - sum_k W'_k[n,n] >= 0.
    {
        let mut rows = Vec::with_capacity(n_wg);
        for n in 0..n_wg {
            let mut row = LinExpr::constant(problem.budgets[n] / p_scale);
            for w in &w_vars {
                row.push(w.diag(n), -1.0);
            }
            rows.push(row);
        }
        b.constraint("power", ConeTag::NonNeg, rows);
    }

    // Rate floor: r_k >= 2^{R_min}.
    {
        let floor = (2.0_f64).powf(problem.r_min);
        let rows = (0..k_users)
            .map(|k| LinExpr::term(r_off + k, 1.0).plus(&LinExpr::constant(-floor)))
            .collect();
        b.constraint("rate_floor", ConeTag::NonNeg, rows);
    }

    // SIC slack upper bounds and the convexified bilinear rows.
    for k in 0..k_users.saturating_sub(1) {
        for m in k..k_users - 1 {
            let idx = layout.index(k, m);
            let xi_var = xi_off + idx;
            let xi_ref = state.xi[idx] / problem.noise.sigma2[m];
            let r_ref = state.r[k];

            // xi >= interference + 1 (noise-normalized).
            let mut bound = LinExpr::term(xi_var, 1.0);
            bound.add_const(-1.0);
            for b_idx in k + 1..k_users {
                bound = bound.plus(&w_vars[b_idx].trace_expr(&gram[m]).scaled(-1.0));
            }
            b.nonneg(format!("sic_bound_{m}_{k}"), bound);

            // 0.5 (xi + r)^2 <= L with the Taylor majorants folded into L:
            // L = Tr(H_m W_k) + (1 + xi_ref) xi + r_ref r
            //     - 0.5 xi_ref^2 - 0.5 r_ref^2.
            let (cx, sx) = taylor_quadratic_coeffs(xi_ref);
            let (cr, sr) = taylor_quadratic_coeffs(r_ref);
            let mut l = w_vars[k].trace_expr(&gram[m]);
            l.push(xi_var, 1.0 - sx);
            l.push(r_off + k, -sr);
            l.add_const(-cx - cr);
            let mut s_row = LinExpr::term(xi_var, std::f64::consts::SQRT_2);
            s_row.push(r_off + k, std::f64::consts::SQRT_2);
            b.constraint(
                format!("sic_soc_{m}_{k}"),
                ConeTag::Soc,
                vec![
                    l.clone().plus(&LinExpr::constant(1.0)),
                    l.plus(&LinExpr::constant(-1.0)),
                    s_row,
                ],
            );
        }
    }

    // Strongest user's own-SNR row: Tr(H_K W_K) - r_K + 1 >= 0.
    {
        let last = k_users - 1;
        let mut row = w_vars[last].trace_expr(&gram[last]);
        row.push(r_off + last, -1.0);
        row.add_const(1.0);
        b.nonneg("strongest_snr", row);
    }

    let program = b
        .build()
        .map_err(|e| ScaError::Build(e.to_string()))?;
    Ok(Sub1Program {
        program,
        w_vars,
        xi_off,
        r_off,
        t_vars,
        layout,
        power_scale: p_scale,
        sigma2: problem.noise.sigma2.clone(),
    })
}

#[derive(Debug)]
pub struct Alg1Result {
    pub matrices: Vec<DMatrix<Complex64>>,
    /// Matrix-implied sum-rate of the returned iterate.
    pub sum_rate: f64,
    pub trace: Vec<ScaTraceEntry>,
    pub status: ScaStatus,
    /// Warm-start data of the last accepted solve, reusable by the caller.
    pub warm: Option<WarmStart>,
}

fn matrix_sum_rate(
    h: &ChannelMatrix,
    matrices: &[DMatrix<Complex64>],
    problem: &NomaProblem,
) -> f64 {
    let p = PrecoderSet::from_matrices(matrices.to_vec(), problem.budgets.clone());
    match effective_powers(h, &p) {
        Ok(g) => rate_report_from_powers(&g, &problem.noise).sum_rate,
        Err(_) => f64::NEG_INFINITY,
    }
}

/// Iterative precoder optimization: repeatedly builds and solves the
/// surrogate, accepting iterates whose matrix-implied true sum-rate does not
/// regress, until the relative change falls below `caps.rel_tol`.
pub fn run_algorithm1(
    h: &ChannelMatrix,
    problem: &NomaProblem,
    initial: &PrecoderSet,
    caps: &ScaCaps,
    warm: Option<&WarmStart>,
) -> Result<Alg1Result, ScaError> {
    let g0 = effective_powers(h, initial).map_err(|e| ScaError::Shape(e.to_string()))?;
    let mut state = Sub1State::from_powers(&g0, problem, 1.05);
    let mut best_matrices: Vec<DMatrix<Complex64>> = match &initial.matrices {
        Some(ms) => ms.clone(),
        None => initial
            .vectors
            .as_ref()
            .ok_or_else(|| ScaError::Shape("initial precoders empty".into()))?
            .iter()
            .map(|w| w * w.adjoint())
            .collect(),
    };
    let mut best_rate = rate_report_from_powers(&g0, &problem.noise).sum_rate;
    let mut prev_rate = best_rate;
    let mut trace = Vec::new();
    let mut status = ScaStatus::MaxIters;
    let mut warm_state: Option<WarmStart> = warm.cloned();

    for it in 0..caps.max_iters {
        let prog = build_subproblem1(h, problem, &state)?;
        let res = solve_with(&prog.program, &caps.solver, warm_state.as_ref());
        let usable = matches!(res.status, SolveStatus::Optimal)
            || (matches!(res.status, SolveStatus::MaxIter)
                && res.residuals.primal.max(res.residuals.dual) <= 1e-5);
        if !usable {
            status = ScaStatus::Degraded;
            break;
        }
        let matrices = prog.matrices(&res);
        let true_rate = matrix_sum_rate(h, &matrices, problem);
        if !true_rate.is_finite() || true_rate < best_rate - 1e-9 {
            // The surrogate stopped helping; keep the best iterate.
            status = ScaStatus::Degraded;
            break;
        }
        trace.push(ScaTraceEntry {
            iteration: it,
            surrogate_objective: prog.surrogate_objective(&res),
            true_sum_rate: true_rate,
            primal_residual: res.residuals.primal,
            dual_residual: res.residuals.dual,
            gap: res.residuals.gap,
            trust_radius: None,
        });
        state = prog.updated_state(&res, &state);
        best_matrices = matrices;
        best_rate = true_rate;
        warm_state = Some(WarmStart::from_result(&res));
        let delta = (true_rate - prev_rate).abs();
        prev_rate = true_rate;
        if delta <= caps.rel_tol * true_rate.abs().max(1.0) {
            status = ScaStatus::Converged;
            break;
        }
    }
    Ok(Alg1Result {
        matrices: best_matrices,
        sum_rate: best_rate,
        trace,
        status,
        warm: warm_state,
    })
}
