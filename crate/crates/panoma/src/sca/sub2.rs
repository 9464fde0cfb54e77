//! Subproblem 2: PA placement at fixed precoder matrices.
//!
//! The channel-power products `Tr(h_k h_k^H W_m)` are replaced by entrywise
//! surrogates `Σ_iq τ_{k,i,q} W_m[q,i]` (where the power hurts) and
//! `Σ_iq γ_{k,i,q} W_m[q,i]` (where it helps), with the slacks bracketing
//! the attenuated geometric gain
//!
//! ```text
//! g_{k,i,q}(x) = η e^{−α(x_i + x_q)} / (d_{k,i} d_{k,q})
//! ```
//!
//! through log-domain rows: `τ ≥ g` becomes an exponential-cone row with
//! the `−ln d` terms linearized at the reference positions, and `γ ≤ g` a
//! linear row with both the `ln d` and `ln γ` terms linearized. Since
//! `ln d(x)` has sign-indefinite curvature in `x`, both surrogates are only
//! trusted inside a box `|x_n − x_n^t| ≤ Δ`; the loop accepts a step only
//! if the true sum-rate does not regress, halving Δ otherwise.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::conic::{
    solve_with, ConeTag, ConicProgram, LinExpr, ProgramBuilder, SolveResult, SolveStatus,
    WarmStart,
};
use crate::phys::{ChannelModel, SystemGeometry};
use crate::rate::{effective_powers, rate_report_from_powers, PrecoderSet};

use super::sub1::ScaError;
use super::{
    linearize_log_distance, linearize_log_slack, taylor_quadratic_coeffs, LogSign, NomaProblem,
    ScaCaps, ScaStatus, ScaTraceEntry, XiLayout,
};

/// Reference point of the placement surrogate. `tau`/`gamma` are stored in
/// absolute gain units (the `g` values above), `xi` in watts.
#[derive(Debug, Clone, PartialEq)]
pub struct Sub2State {
    pub x: Vec<f64>,
    /// τ_{k,i,q} flattened as `(k·N + i)·N + q`.
    pub tau: Vec<f64>,
    pub gamma: Vec<f64>,
    pub xi: Vec<f64>,
    pub r: Vec<f64>,
    pub iter: usize,
    pub trust_radius: f64,
}

fn idx3(n_wg: usize, k: usize, i: usize, q: usize) -> usize {
    (k * n_wg + i) * n_wg + q
}

/// Attenuated geometric gain table `g_{k,i,q}` at positions `geom.pin_x`.
pub fn gain_table(geom: &SystemGeometry, model: &ChannelModel) -> Vec<f64> {
    let (k_users, n_wg) = (geom.n_users(), geom.n_waveguides());
    let alpha = model.alpha();
    let eta = model.constants.eta;
    let mut dist = vec![0.0; k_users * n_wg];
    for k in 0..k_users {
        for i in 0..n_wg {
            dist[k * n_wg + i] = crate::phys::user_pa_distance(geom, k, i).expect("valid index");
        }
    }
    let mut g = vec![0.0; k_users * n_wg * n_wg];
    for k in 0..k_users {
        for i in 0..n_wg {
            for q in 0..n_wg {
                g[idx3(n_wg, k, i, q)] = eta
                    * (-alpha * (geom.pin_x[i] + geom.pin_x[q])).exp()
                    / (dist[k * n_wg + i] * dist[k * n_wg + q]);
            }
        }
    }
    g
}

impl Sub2State {
    /// Builds the reference at the current positions: `τ = γ = g` (both
    /// log rows tight), ξ the surrogate interference-plus-noise, and `r`
    /// the implied `1 + SINR`, clamped to positive/rate-floor values.
    pub fn at_reference(
        geom: &SystemGeometry,
        model: &ChannelModel,
        matrices: &[DMatrix<Complex64>],
        problem: &NomaProblem,
        trust_radius: f64,
    ) -> Self {
        let (k_users, n_wg) = (geom.n_users(), geom.n_waveguides());
        let g = gain_table(geom, model);
        let layout = XiLayout::new(k_users);
        // S[m][b] = surrogate signal power of message b at decoder m.
        let mut s = vec![vec![0.0; k_users]; k_users];
        for m in 0..k_users {
            for b in 0..k_users {
                let mut acc = 0.0;
                for i in 0..n_wg {
                    for q in 0..n_wg {
                        acc += g[idx3(n_wg, m, i, q)] * matrices[b][(q, i)].re;
                    }
                }
                s[m][b] = acc;
            }
        }
        let r_floor = (2.0_f64).powf(problem.r_min);
        let mut xi = vec![0.0; layout.len];
        let mut r = vec![0.0; k_users];
        for k in 0..k_users.saturating_sub(1) {
            let mut r_k = f64::INFINITY;
            for m in k..k_users - 1 {
                let interference: f64 = (k + 1..k_users).map(|b| s[m][b]).sum();
                let sigma2 = problem.noise.sigma2[m];
                let denom = (interference + sigma2).max(1e-9 * sigma2);
                xi[layout.index(k, m)] = denom;
                r_k = r_k.min(1.0 + s[m][k].max(0.0) / denom);
            }
            r[k] = r_k.max(r_floor);
        }
        let last = k_users - 1;
        r[last] =
            (1.0 + s[last][last].max(0.0) / problem.noise.sigma2[last]).max(r_floor);
        Self {
            x: geom.pin_x.clone(),
            tau: g.clone(),
            gamma: g,
            xi,
            r,
            iter: 0,
            trust_radius,
        }
    }
}

pub struct Sub2Program {
    pub program: ConicProgram,
    x_off: usize,
    t_vars: Vec<usize>,
    n_wg: usize,
    x_max: f64,
}

impl Sub2Program {
    /// PA positions from a solution, clamped into the travel box.
    pub fn positions(&self, res: &SolveResult) -> Vec<f64> {
        (0..self.n_wg)
            .map(|n| res.x[self.x_off + n].clamp(0.0, self.x_max))
            .collect()
    }

    pub fn surrogate_objective(&self, res: &SolveResult) -> f64 {
        self.t_vars.iter().map(|&t| res.x[t]).sum()
    }
}

/// Assembles the placement surrogate at `state` with trust radius
/// `state.trust_radius` around `state.x`.
pub fn build_subproblem2(
    geom: &SystemGeometry,
    model: &ChannelModel,
    matrices: &[DMatrix<Complex64>],
    problem: &NomaProblem,
    state: &Sub2State,
) -> Result<Sub2Program, ScaError> {
    let (k_users, n_wg) = (geom.n_users(), geom.n_waveguides());
    let layout = XiLayout::new(k_users);
    if matrices.len() != k_users {
        return Err(ScaError::Shape(format!(
            "{} precoder matrices for {k_users} users",
            matrices.len()
        )));
    }
    if state.x.len() != n_wg || state.tau.len() != k_users * n_wg * n_wg {
        return Err(ScaError::Shape("state dimensions".into()));
    }
    if state
        .x
        .iter()
        .any(|&x| !(0.0..=geom.x_max).contains(&x))
    {
        return Err(ScaError::BadReference(
            "reference positions outside the travel box".into(),
        ));
    }
    if state.tau.iter().chain(&state.gamma).any(|&v| !(v > 0.0)) {
        return Err(ScaError::BadReference("tau/gamma must be positive".into()));
    }
    if state.xi.iter().chain(&state.r).any(|&v| !(v > 0.0)) {
        return Err(ScaError::BadReference("xi/r must be positive".into()));
    }

    let alpha = model.alpha();
    let eta = model.constants.eta;
    let re_w: Vec<DMatrix<f64>> = matrices.iter().map(|m| m.map(|v| v.re)).collect();
    // x-independent squared offsets per (user, waveguide).
    let cross2 = |k: usize, i: usize| -> f64 {
        let dy = geom.feed_y[i] - geom.users[k].1;
        dy * dy + geom.d * geom.d
    };

    let mut b = ProgramBuilder::new("subproblem2");
    let x_off = b.vector("x", n_wg);
    let tau_off = b.vector("tau", k_users * n_wg * n_wg);
    let gamma_off = b.vector("gamma", k_users * n_wg * n_wg);
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

    // Log-domain bracketing rows. Variables are normalized per element:
    // tau = state.tau[idx] * tau_hat, gamma = state.gamma[idx] * gamma_hat,
    // so both rows are tight at (x^t, 1, 1).
    for k in 0..k_users {
        for i in 0..n_wg {
            let lin_neg_i =
                linearize_log_distance(state.x[i], geom.users[k].0, cross2(k, i), LogSign::NegLogDistance);
            let lin_pos_i =
                linearize_log_distance(state.x[i], geom.users[k].0, cross2(k, i), LogSign::PosLogDistance);
            for q in 0..n_wg {
                let idx = idx3(n_wg, k, i, q);
                let lin_neg_q = linearize_log_distance(
                    state.x[q],
                    geom.users[k].0,
                    cross2(k, q),
                    LogSign::NegLogDistance,
                );
                let lin_pos_q = linearize_log_distance(
                    state.x[q],
                    geom.users[k].0,
                    cross2(k, q),
                    LogSign::PosLogDistance,
                );
                // tau >= g: affine(x) <= ln(tau), one exp-cone row.
                let mut aff = LinExpr::default();
                aff.push(x_off + i, -alpha + lin_neg_i.slope);
                aff.push(x_off + q, -alpha + lin_neg_q.slope);
                aff.add_const(
                    lin_neg_i.constant - lin_neg_i.slope * lin_neg_i.x_ref
                        + lin_neg_q.constant
                        - lin_neg_q.slope * lin_neg_q.x_ref
                        + eta.ln()
                        - state.tau[idx].ln(),
                );
                b.constraint(
                    format!("tau_bound_{k}_{i}_{q}"),
                    ConeTag::Exp,
                    vec![aff, LinExpr::constant(1.0), LinExpr::var(tau_off + idx)],
                );
                // gamma <= g: fully linearized row (<= 0 rewritten as >= 0).
                let (lg_c, lg_s) = linearize_log_slack(1.0); // in gamma_hat units
                let mut row = LinExpr::default();
                row.push(x_off + i, -(alpha + lin_pos_i.slope));
                row.push(x_off + q, -(alpha + lin_pos_q.slope));
                row.push(gamma_off + idx, -lg_s);
                row.add_const(
                    -(lin_pos_i.constant - lin_pos_i.slope * lin_pos_i.x_ref)
                        - (lin_pos_q.constant - lin_pos_q.slope * lin_pos_q.x_ref)
                        - (state.gamma[idx].ln() + lg_c)
                        + eta.ln(),
                );
                b.nonneg(format!("gamma_bound_{k}_{i}_{q}"), row);
            }
        }
    }

    // gamma_hat >= 0.
    {
        let rows = (0..k_users * n_wg * n_wg)
            .map(|idx| LinExpr::var(gamma_off + idx))
            .collect();
        b.constraint("gamma_nonneg", ConeTag::NonNeg, rows);
    }

    // Ordering rows in the surrogate weights.
    if problem.include_ordering && k_users > 1 {
        let mut rows = Vec::with_capacity(k_users * (k_users - 1));
        for k in 0..k_users {
            let inv_s = 1.0 / problem.noise.sigma2[k];
            for m in 1..k_users {
                let mut row = LinExpr::default();
                for i in 0..n_wg {
                    for q in 0..n_wg {
                        let idx = idx3(n_wg, k, i, q);
                        row.push(
                            gamma_off + idx,
                            state.gamma[idx] * re_w[m - 1][(q, i)] * inv_s,
                        );
                        row.push(tau_off + idx, -state.tau[idx] * re_w[m][(q, i)] * inv_s);
                    }
                }
                rows.push(row);
            }
        }
        b.constraint("ordering", ConeTag::NonNeg, rows);
    }

    // Rate floor.
    {
        let floor = (2.0_f64).powf(problem.r_min);
        let rows = (0..k_users)
            .map(|k| LinExpr::term(r_off + k, 1.0).plus(&LinExpr::constant(-floor)))
            .collect();
        b.constraint("rate_floor", ConeTag::NonNeg, rows);
    }

    // Travel box and trust region on x.
    {
        let mut rows = Vec::with_capacity(4 * n_wg);
        for n in 0..n_wg {
            rows.push(LinExpr::var(x_off + n));
            rows.push(LinExpr::term(x_off + n, -1.0).plus(&LinExpr::constant(geom.x_max)));
            rows.push(
                LinExpr::term(x_off + n, -1.0)
                    .plus(&LinExpr::constant(state.x[n] + state.trust_radius)),
            );
            rows.push(
                LinExpr::term(x_off + n, 1.0)
                    .plus(&LinExpr::constant(state.trust_radius - state.x[n])),
            );
        }
        b.constraint("travel_box", ConeTag::NonNeg, rows);
    }

    // SIC slack bounds and the convexified bilinear rows, noise-normalized.
    for k in 0..k_users.saturating_sub(1) {
        for m in k..k_users - 1 {
            let l_idx = layout.index(k, m);
            let xi_var = xi_off + l_idx;
            let sigma2 = problem.noise.sigma2[m];
            let xi_ref = state.xi[l_idx] / sigma2;
            let r_ref = state.r[k];

            let mut bound = LinExpr::term(xi_var, 1.0);
            bound.add_const(-1.0);
            for b_idx in k + 1..k_users {
                for i in 0..n_wg {
                    for q in 0..n_wg {
                        let idx = idx3(n_wg, m, i, q);
                        bound.push(
                            tau_off + idx,
                            -state.tau[idx] * re_w[b_idx][(q, i)] / sigma2,
                        );
                    }
                }
            }
            b.nonneg(format!("sic_bound_{m}_{k}"), bound);

            let (cx, sx) = taylor_quadratic_coeffs(xi_ref);
            let (cr, sr) = taylor_quadratic_coeffs(r_ref);
            let mut l = LinExpr::default();
            for i in 0..n_wg {
                for q in 0..n_wg {
                    let idx = idx3(n_wg, m, i, q);
                    l.push(
                        gamma_off + idx,
                        state.gamma[idx] * re_w[k][(q, i)] / sigma2,
                    );
                }
            }
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

    // Strongest user's own-SNR row in surrogate weights.
    {
        let last = k_users - 1;
        let sigma2 = problem.noise.sigma2[last];
        let mut row = LinExpr::default();
        for i in 0..n_wg {
            for q in 0..n_wg {
                let idx = idx3(n_wg, last, i, q);
                row.push(
                    gamma_off + idx,
                    state.gamma[idx] * re_w[last][(q, i)] / sigma2,
                );
            }
        }
        row.push(r_off + last, -1.0);
        row.add_const(1.0);
        b.nonneg("strongest_snr", row);
    }

    let program = b.build().map_err(|e| ScaError::Build(e.to_string()))?;
    Ok(Sub2Program {
        program,
        x_off,
        t_vars,
        n_wg,
        x_max: geom.x_max,
    })
}

#[derive(Debug)]
pub struct Alg2Result {
    pub positions: Vec<f64>,
    /// Matrix-implied sum-rate at the returned positions.
    pub sum_rate: f64,
    pub trace: Vec<ScaTraceEntry>,
    pub status: ScaStatus,
}

/// Trust-region options for the placement loop.
#[derive(Debug, Clone, Copy)]
pub struct TrustOpts {
    pub init: f64,
    pub floor: f64,
}

impl Default for TrustOpts {
    fn default() -> Self {
        Self {
            init: 2.0,
            floor: 0.01,
        }
    }
}

fn sum_rate_at(
    geom: &SystemGeometry,
    model: &ChannelModel,
    matrices: &[DMatrix<Complex64>],
    problem: &NomaProblem,
    x: &[f64],
) -> f64 {
    let g = geom.with_pin_x(x.to_vec());
    let h = match model.matrix(&g) {
        Ok(h) => h,
        Err(_) => return f64::NEG_INFINITY,
    };
    let p = PrecoderSet::from_matrices(matrices.to_vec(), problem.budgets.clone());
    match effective_powers(&h, &p) {
        Ok(pow) => rate_report_from_powers(&pow, &problem.noise).sum_rate,
        Err(_) => f64::NEG_INFINITY,
    }
}

/// Iterative PA placement: build/solve the surrogate inside the trust box,
/// accept moves that do not regress the true sum-rate, halve the radius on
/// regression, stop on small relative change, iteration cap, or radius floor.
pub fn run_algorithm2(
    geom0: &SystemGeometry,
    model: &ChannelModel,
    matrices: &[DMatrix<Complex64>],
    problem: &NomaProblem,
    caps: &ScaCaps,
    trust: TrustOpts,
) -> Result<Alg2Result, ScaError> {
    let mut x = geom0.pin_x.clone();
    let mut delta = trust.init;
    let mut best_rate = sum_rate_at(geom0, model, matrices, problem, &x);
    let mut prev_rate = best_rate;
    let mut trace = Vec::new();
    let mut status = ScaStatus::MaxIters;
    let mut warm: Option<WarmStart> = None;

    for it in 0..caps.max_iters {
        let geom_ref = geom0.with_pin_x(x.clone());
        let state = Sub2State::at_reference(&geom_ref, model, matrices, problem, delta);
        let prog = build_subproblem2(&geom_ref, model, matrices, problem, &state)?;
        let res = solve_with(&prog.program, &caps.solver, warm.as_ref());
        let usable = matches!(res.status, SolveStatus::Optimal)
            || (matches!(res.status, SolveStatus::MaxIter)
                && res.residuals.primal.max(res.residuals.dual) <= 1e-5);
        if !usable {
            status = ScaStatus::Degraded;
            break;
        }
        warm = Some(WarmStart::from_result(&res));
        let cand = prog.positions(&res);
        let cand_rate = sum_rate_at(geom0, model, matrices, problem, &cand);
        if cand_rate >= best_rate - 1e-9 {
            let moved: f64 = cand
                .iter()
                .zip(&x)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            x = cand;
            best_rate = best_rate.max(cand_rate);
            trace.push(ScaTraceEntry {
                iteration: it,
                surrogate_objective: prog.surrogate_objective(&res),
                true_sum_rate: cand_rate,
                primal_residual: res.residuals.primal,
                dual_residual: res.residuals.dual,
                gap: res.residuals.gap,
                trust_radius: Some(delta),
            });
            let change = (cand_rate - prev_rate).abs();
            prev_rate = cand_rate;
            // A step pinned to the trust boundary means the surrogate wanted
            // to travel further; only interior steps count as converged.
            if change <= caps.rel_tol * cand_rate.abs().max(1.0) && moved < delta - 1e-9 {
                status = ScaStatus::Converged;
                break;
            }
        } else {
            delta *= 0.5;
            if delta < trust.floor {
                status = ScaStatus::Converged;
                break;
            }
        }
    }
    Ok(Alg2Result {
        positions: x,
        sum_rate: best_rate,
        trace,
        status,
    })
}
