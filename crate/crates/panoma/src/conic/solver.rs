//! First-order conic solver on the homogeneous self-dual embedding (HSDE).
//!
//! The program is compiled to the standard form
//!
//! ```text
//! minimize c·x   s.t.   A x + s = b,  s ∈ K
//! ```
//!
//! and solved by Douglas–Rachford splitting on the HSDE: with
//! `u = (x, y, τ)`, `v = (r, s, κ)` and the skew map
//! `Q = [[0, Aᵀ, c], [−A, 0, b], [−cᵀ, −bᵀ, 0]]`, iterate
//!
//! ```text
//! ũ   = (I + Q)⁻¹ (u + v)
//! ū   = α ũ + (1 − α) u                (over-relaxation)
//! u⁺  = Π_C(ū − v),   C = Rⁿ × K* × R₊
//! v⁺  = v − ū + u⁺
//! ```
//!
//! The linear solve reduces to one Cholesky factorization of `I + AᵀA`
//! computed once per program. Data are Ruiz-equilibrated with per-cone row
//! grouping before iterating. `τ > 0` at convergence yields the primal-dual
//! solution; `κ > 0` yields an infeasibility or unboundedness certificate.
//! Stalls (no residual progress over a window) trigger a re-injection
//! restart; persistent stalls end with `MaxIter` and the best iterate found.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::cones;
use super::{ConeTag, ConicProgram};

/// Compressed sparse row matrix, sufficient for `A·x` and `Aᵀ·y`.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub vals: Vec<f64>,
}

impl CsrMatrix {
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(out.len(), self.nrows);
        for i in 0..self.nrows {
            let mut acc = 0.0;
            for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[idx] * x[self.col_idx[idx]];
            }
            out[i] = acc;
        }
    }

    pub fn matvec_t(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.nrows);
        debug_assert_eq!(out.len(), self.ncols);
        out.iter_mut().for_each(|o| *o = 0.0);
        for i in 0..self.nrows {
            let yi = y[i];
            if yi != 0.0 {
                for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                    out[self.col_idx[idx]] += self.vals[idx] * yi;
                }
            }
        }
    }
}

/// Standard-form problem data with the cone layout, exposed for certificate
/// checks and golden tests.
#[derive(Debug, Clone)]
pub struct StandardForm {
    pub n: usize,
    pub m: usize,
    pub a: CsrMatrix,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    /// `(tag, start_row, len)` blocks in canonical order
    /// (zero, nonneg, soc, psd, exp).
    pub cones: Vec<(ConeTag, usize, usize)>,
    pub maximize: bool,
}

/// Compiles a program into standard form. Constraint rows `(Gx + h) ∈ K`
/// become `A = −G`, `b = h` so that `s = Gx + h`.
pub fn standard_form(p: &ConicProgram) -> StandardForm {
    let order = [
        ConeTag::Zero,
        ConeTag::NonNeg,
        ConeTag::Soc,
        ConeTag::Psd,
        ConeTag::Exp,
    ];
    let mut row_ptr = vec![0usize];
    let mut col_idx = Vec::new();
    let mut vals = Vec::new();
    let mut b = Vec::new();
    let mut cone_layout = Vec::new();
    for tag in order {
        for c in p.constraints.iter().filter(|c| c.cone == tag) {
            let start = b.len();
            for row in &c.rows {
                for &(j, coeff) in &row.terms {
                    col_idx.push(j);
                    vals.push(-coeff);
                }
                row_ptr.push(col_idx.len());
                b.push(row.constant);
            }
            cone_layout.push((tag, start, c.rows.len()));
        }
    }
    let m = b.len();
    let mut c_vec = vec![0.0; p.n_vars];
    for &(j, coeff) in &p.objective.terms {
        c_vec[j] += if p.maximize { -coeff } else { coeff };
    }
    StandardForm {
        n: p.n_vars,
        m,
        a: CsrMatrix {
            nrows: m,
            ncols: p.n_vars,
            row_ptr,
            col_idx,
            vals,
        },
        b,
        c: c_vec,
        cones: cone_layout,
        maximize: p.maximize,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
    NumericalFailure,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Primal solution in the program's variable space.
    pub x: Vec<f64>,
    /// Objective in the program's own sense (maximize reported as maximize).
    pub objective: f64,
    pub residuals: Residuals,
    pub iterations: usize,
    /// Standard-form dual vector (unscaled), for warm starts and duals.
    pub y: Vec<f64>,
    /// Standard-form slack vector (unscaled).
    pub s: Vec<f64>,
    /// Farkas dual certificate `ŷ` with `bᵀŷ = −1`, `Aᵀŷ ≈ 0`, `ŷ ∈ K*`.
    pub infeasibility_certificate: Option<Vec<f64>>,
    /// Unbounded-ray certificate `(x̂, ŝ)` with `cᵀx̂ = −1`, `Ax̂ + ŝ ≈ 0`,
    /// `ŝ ∈ K` (in the internal minimization sense).
    pub unboundedness_certificate: Option<(Vec<f64>, Vec<f64>)>,
}

impl SolveResult {
    pub fn block_values<'a>(&'a self, p: &ConicProgram, name: &str) -> Option<&'a [f64]> {
        p.block(name).map(|b| &self.x[b.offset..b.offset + b.len])
    }
}

/// Warm-start point in the solver's standard-form coordinates.
#[derive(Debug, Clone)]
pub struct WarmStart {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub s: Vec<f64>,
}

impl WarmStart {
    pub fn from_result(r: &SolveResult) -> Self {
        Self {
            x: r.x.clone(),
            y: r.y.clone(),
            s: r.s.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverSettings {
    pub tol_primal: f64,
    pub tol_dual: f64,
    pub tol_gap: f64,
    pub tol_infeasible: f64,
    pub max_iter: usize,
    pub check_interval: usize,
    pub over_relaxation: f64,
    pub ruiz_iters: usize,
    pub stall_window: usize,
    pub stall_improvement: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol_primal: 1e-7,
            tol_dual: 1e-7,
            tol_gap: 1e-8,
            tol_infeasible: 1e-9,
            max_iter: 50_000,
            check_interval: 25,
            over_relaxation: 1.5,
            ruiz_iters: 10,
            stall_window: 500,
            stall_improvement: 1e-10,
        }
    }
}

impl SolverSettings {
    pub fn with_tolerances(tol_primal: f64, tol_dual: f64, tol_gap: f64, max_iter: usize) -> Self {
        Self {
            tol_primal,
            tol_dual,
            tol_gap,
            max_iter,
            ..Default::default()
        }
    }
}

/// Solves with default cold start.
pub fn solve(p: &ConicProgram, settings: &SolverSettings) -> SolveResult {
    solve_with(p, settings, None)
}

struct Scaling {
    d: Vec<f64>,
    e: Vec<f64>,
    sigma: f64,
    rho: f64,
}

/// Ruiz equilibration with shared row factors inside soc/psd/exp blocks.
fn equilibrate(sf: &StandardForm, iters: usize) -> (CsrMatrix, Scaling) {
    let mut a = sf.a.clone();
    let (m, n) = (sf.m, sf.n);
    let mut d = vec![1.0; m];
    let mut e = vec![1.0; n];
    let mut row_norm = vec![0.0_f64; m];
    let mut col_norm = vec![0.0_f64; n];
    for _ in 0..iters {
        row_norm.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..m {
            for idx in a.row_ptr[i]..a.row_ptr[i + 1] {
                row_norm[i] = row_norm[i].max(a.vals[idx].abs());
            }
        }
        // Cone blocks other than zero/nonneg share one factor per block.
        for &(tag, start, len) in &sf.cones {
            if matches!(tag, ConeTag::Soc | ConeTag::Psd | ConeTag::Exp) {
                let shared = row_norm[start..start + len]
                    .iter()
                    .fold(0.0_f64, |acc, &x| acc.max(x));
                row_norm[start..start + len]
                    .iter_mut()
                    .for_each(|x| *x = shared);
            }
        }
        for i in 0..m {
            if row_norm[i] > 1e-12 {
                let f = 1.0 / row_norm[i].sqrt();
                d[i] *= f;
                for idx in a.row_ptr[i]..a.row_ptr[i + 1] {
                    a.vals[idx] *= f;
                }
            }
        }
        col_norm.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..m {
            for idx in a.row_ptr[i]..a.row_ptr[i + 1] {
                let j = a.col_idx[idx];
                col_norm[j] = col_norm[j].max(a.vals[idx].abs());
            }
        }
        for (j, cn) in col_norm.iter().enumerate() {
            if *cn > 1e-12 {
                let f = 1.0 / cn.sqrt();
                e[j] *= f;
            }
        }
        for i in 0..m {
            for idx in a.row_ptr[i]..a.row_ptr[i + 1] {
                let j = a.col_idx[idx];
                if col_norm[j] > 1e-12 {
                    a.vals[idx] /= col_norm[j].sqrt();
                }
            }
        }
    }
    let norm_b: f64 = sf
        .b
        .iter()
        .zip(&d)
        .map(|(bi, di)| (bi * di) * (bi * di))
        .sum::<f64>()
        .sqrt();
    let norm_c: f64 = sf
        .c
        .iter()
        .zip(&e)
        .map(|(cj, ej)| (cj * ej) * (cj * ej))
        .sum::<f64>()
        .sqrt();
    let sigma = if norm_b > 1e-10 {
        (1.0 / norm_b).clamp(1e-6, 1e6)
    } else {
        1.0
    };
    let rho = if norm_c > 1e-10 {
        (1.0 / norm_c).clamp(1e-6, 1e6)
    } else {
        1.0
    };
    (a, Scaling { d, e, sigma, rho })
}

struct Workspace {
    n: usize,
    m: usize,
    chol: Cholesky<f64, Dyn>,
    q_x: Vec<f64>,
    q_y: Vec<f64>,
    denom: f64,
    // scaled data
    a: CsrMatrix,
    b: Vec<f64>,
    c: Vec<f64>,
}

impl Workspace {
    fn new(a: CsrMatrix, b: Vec<f64>, c: Vec<f64>) -> Option<Self> {
        let (m, n) = (a.nrows, a.ncols);
        // M = I + AᵀA, dense.
        let mut mat = DMatrix::<f64>::identity(n, n);
        for i in 0..m {
            for idx1 in a.row_ptr[i]..a.row_ptr[i + 1] {
                let (j1, v1) = (a.col_idx[idx1], a.vals[idx1]);
                for idx2 in a.row_ptr[i]..a.row_ptr[i + 1] {
                    let (j2, v2) = (a.col_idx[idx2], a.vals[idx2]);
                    mat[(j1, j2)] += v1 * v2;
                }
            }
        }
        let chol = Cholesky::new(mat)?;
        let mut ws = Self {
            n,
            m,
            chol,
            q_x: vec![0.0; n],
            q_y: vec![0.0; m],
            denom: 1.0,
            a,
            b,
            c,
        };
        let (qx, qy) = ws.solve_big(&ws.c.clone(), &ws.b.clone());
        ws.denom = 1.0 + dot(&ws.c, &qx) + dot(&ws.b, &qy);
        ws.q_x = qx;
        ws.q_y = qy;
        Some(ws)
    }

    /// Solves `[[I, Aᵀ], [−A, I]] [x; y] = [wx; wy]` via the n×n reduction.
    fn solve_big(&self, wx: &[f64], wy: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut rhs = vec![0.0; self.n];
        self.a.matvec_t(wy, &mut rhs);
        let mut x = DVector::from_iterator(self.n, wx.iter().zip(&rhs).map(|(a, b)| a - b));
        self.chol.solve_mut(&mut x);
        let x: Vec<f64> = x.data.into();
        let mut y = vec![0.0; self.m];
        self.a.matvec(&x, &mut y);
        for (yi, wyi) in y.iter_mut().zip(wy) {
            *yi += wyi;
        }
        (x, y)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |acc, &x| acc.max(x.abs()))
}

struct BestIterate {
    combined: f64,
    x: Vec<f64>,
    y: Vec<f64>,
    s: Vec<f64>,
    residuals: Residuals,
}

/// Solves a program, optionally warm-starting from a previous solution of a
/// program with identical shape.
pub fn solve_with(
    p: &ConicProgram,
    settings: &SolverSettings,
    warm: Option<&WarmStart>,
) -> SolveResult {
    let sf = standard_form(p);
    let (a_scaled, scal) = equilibrate(&sf, settings.ruiz_iters);
    let (m, n) = (sf.m, sf.n);
    let b_scaled: Vec<f64> = sf
        .b
        .iter()
        .zip(&scal.d)
        .map(|(bi, di)| bi * di * scal.sigma)
        .collect();
    let c_scaled: Vec<f64> = sf
        .c
        .iter()
        .zip(&scal.e)
        .map(|(cj, ej)| cj * ej * scal.rho)
        .collect();
    let ws = match Workspace::new(a_scaled, b_scaled, c_scaled) {
        Some(w) => w,
        None => {
            return failure_result(&sf, SolveStatus::NumericalFailure, 0);
        }
    };

    // u = (x, y, tau); v = (r, s, kappa).
    let mut u = vec![0.0; n + m + 1];
    let mut v = vec![0.0; n + m + 1];
    match warm {
        Some(wsrt) if wsrt.x.len() == n && wsrt.y.len() == m && wsrt.s.len() == m => {
            for j in 0..n {
                u[j] = wsrt.x[j] * scal.sigma / scal.e[j];
            }
            for i in 0..m {
                u[n + i] = wsrt.y[i] * scal.rho / scal.d[i];
                v[n + i] = wsrt.s[i] * scal.sigma * scal.d[i];
            }
            u[n + m] = 1.0;
        }
        _ => {
            u[n + m] = 1.0;
            v[n + m] = 1.0;
        }
    }

    let alpha = settings.over_relaxation;
    let mut best: Option<BestIterate> = None;
    let mut last_improve_iter = 0usize;
    let mut best_combined = f64::INFINITY;
    let mut restarts = 0usize;
    let mut u_tilde = vec![0.0; n + m + 1];
    let mut u_bar = vec![0.0; n + m + 1];
    let mut w_buf = vec![0.0; n + m + 1];

    let mut iter = 0usize;
    while iter < settings.max_iter {
        iter += 1;
        // w = u + v
        for i in 0..n + m + 1 {
            w_buf[i] = u[i] + v[i];
        }
        // u_tilde = (I + Q)^{-1} w
        let (px, py) = ws.solve_big(&w_buf[..n], &w_buf[n..n + m]);
        let tau_t = (w_buf[n + m] + dot(&ws.c, &px) + dot(&ws.b, &py)) / ws.denom;
        for j in 0..n {
            u_tilde[j] = px[j] - tau_t * ws.q_x[j];
        }
        for i in 0..m {
            u_tilde[n + i] = py[i] - tau_t * ws.q_y[i];
        }
        u_tilde[n + m] = tau_t;
        // over-relax and project
        for i in 0..n + m + 1 {
            u_bar[i] = alpha * u_tilde[i] + (1.0 - alpha) * u[i];
        }
        for j in 0..n {
            u[j] = u_bar[j] - v[j];
        }
        {
            let y_part = &mut u[n..n + m];
            for i in 0..m {
                y_part[i] = u_bar[n + i] - v[n + i];
            }
            for &(tag, start, len) in &sf.cones {
                cones::project_dual(tag, &mut y_part[start..start + len]);
            }
        }
        u[n + m] = (u_bar[n + m] - v[n + m]).max(0.0);
        for i in 0..n + m + 1 {
            v[i] = v[i] - u_bar[i] + u[i];
        }

        if iter % settings.check_interval != 0 && iter != settings.max_iter {
            continue;
        }
        let tau = u[n + m];
        if !tau.is_finite() || !u[..n].iter().all(|x| x.is_finite()) {
            return failure_result(&sf, SolveStatus::NumericalFailure, iter);
        }

        // Optimality candidate.
        if tau > 1e-12 {
            let mut x_un = vec![0.0; n];
            for j in 0..n {
                x_un[j] = u[j] * scal.e[j] / (tau * scal.sigma);
            }
            let mut y_un = vec![0.0; m];
            let mut s_un = vec![0.0; m];
            for i in 0..m {
                y_un[i] = u[n + i] * scal.d[i] / (tau * scal.rho);
                s_un[i] = v[n + i] / (scal.d[i] * scal.sigma * tau);
            }
            let res = residuals(&sf, &x_un, &y_un, &s_un);
            let combined = res.primal.max(res.dual).max(res.gap);
            if combined < best_combined - settings.stall_improvement {
                best_combined = combined;
                last_improve_iter = iter;
            }
            if best.as_ref().map(|b| combined < b.combined).unwrap_or(true) {
                best = Some(BestIterate {
                    combined,
                    x: x_un.clone(),
                    y: y_un.clone(),
                    s: s_un.clone(),
                    residuals: res,
                });
            }
            if res.primal <= settings.tol_primal
                && res.dual <= settings.tol_dual
                && res.gap <= settings.tol_gap
            {
                return SolveResult {
                    status: SolveStatus::Optimal,
                    objective: p.objective.eval(&x_un),
                    x: x_un,
                    residuals: res,
                    iterations: iter,
                    y: y_un,
                    s: s_un,
                    infeasibility_certificate: None,
                    unboundedness_certificate: None,
                };
            }
        }

        // Certificate candidates (directions, no tau division).
        let mut y_dir = vec![0.0; m];
        for i in 0..m {
            y_dir[i] = u[n + i] * scal.d[i] / scal.rho;
        }
        let bty = dot(&sf.b, &y_dir);
        if bty < -1e-12 {
            let yhat: Vec<f64> = y_dir.iter().map(|yi| yi / (-bty)).collect();
            let mut aty = vec![0.0; n];
            sf.a.matvec_t(&yhat, &mut aty);
            if norm_inf(&aty) <= settings.tol_infeasible * (1.0 + norm_inf(&yhat)) {
                return SolveResult {
                    status: SolveStatus::Infeasible,
                    objective: f64::NAN,
                    x: vec![0.0; n],
                    residuals: best.map(|b| b.residuals).unwrap_or_default(),
                    iterations: iter,
                    y: y_dir,
                    s: vec![0.0; m],
                    infeasibility_certificate: Some(yhat),
                    unboundedness_certificate: None,
                };
            }
        }
        let mut x_dir = vec![0.0; n];
        for j in 0..n {
            x_dir[j] = u[j] * scal.e[j] / scal.sigma;
        }
        let ctx = dot(&sf.c, &x_dir);
        if ctx < -1e-12 {
            let mut s_dir = vec![0.0; m];
            for i in 0..m {
                s_dir[i] = v[n + i] / (scal.d[i] * scal.sigma);
            }
            let xhat: Vec<f64> = x_dir.iter().map(|xi| xi / (-ctx)).collect();
            let shat: Vec<f64> = s_dir.iter().map(|si| si / (-ctx)).collect();
            let mut ax = vec![0.0; m];
            sf.a.matvec(&xhat, &mut ax);
            for i in 0..m {
                ax[i] += shat[i];
            }
            if norm_inf(&ax)
                <= settings.tol_infeasible * (1.0 + norm_inf(&xhat) + norm_inf(&shat))
            {
                let objective = if sf.maximize {
                    f64::INFINITY
                } else {
                    f64::NEG_INFINITY
                };
                return SolveResult {
                    status: SolveStatus::Unbounded,
                    objective,
                    x: x_dir,
                    residuals: best.map(|b| b.residuals).unwrap_or_default(),
                    iterations: iter,
                    y: vec![0.0; m],
                    s: s_dir,
                    infeasibility_certificate: None,
                    unboundedness_certificate: Some((xhat, shat)),
                };
            }
        }

        // Stall handling: re-inject the current candidate as a fresh start.
        if iter.saturating_sub(last_improve_iter) >= settings.stall_window {
            last_improve_iter = iter;
            if restarts < 3 && tau > 1e-8 {
                restarts += 1;
                let tau_cur = u[n + m];
                for j in 0..n {
                    u[j] /= tau_cur;
                    v[j] = 0.0;
                }
                for i in 0..m {
                    u[n + i] /= tau_cur;
                    v[n + i] /= tau_cur;
                }
                u[n + m] = 1.0;
                v[n + m] = 0.0;
            }
        }
    }

    match best {
        Some(b) => SolveResult {
            status: SolveStatus::MaxIter,
            objective: p.objective.eval(&b.x),
            x: b.x,
            residuals: b.residuals,
            iterations: settings.max_iter,
            y: b.y,
            s: b.s,
            infeasibility_certificate: None,
            unboundedness_certificate: None,
        },
        None => failure_result(&sf, SolveStatus::MaxIter, settings.max_iter),
    }
}

fn residuals(sf: &StandardForm, x: &[f64], y: &[f64], s: &[f64]) -> Residuals {
    let mut ax = vec![0.0; sf.m];
    sf.a.matvec(x, &mut ax);
    let mut pr = 0.0;
    for i in 0..sf.m {
        let r = ax[i] + s[i] - sf.b[i];
        pr += r * r;
    }
    let mut aty = vec![0.0; sf.n];
    sf.a.matvec_t(y, &mut aty);
    let mut dr = 0.0;
    for j in 0..sf.n {
        let r = aty[j] + sf.c[j];
        dr += r * r;
    }
    let pobj = dot(&sf.c, x);
    let dobj = dot(&sf.b, y);
    Residuals {
        primal: pr.sqrt() / (1.0 + norm2(&sf.b)),
        dual: dr.sqrt() / (1.0 + norm2(&sf.c)),
        gap: (pobj + dobj).abs() / (1.0 + pobj.abs() + dobj.abs()),
    }
}

fn failure_result(sf: &StandardForm, status: SolveStatus, iterations: usize) -> SolveResult {
    SolveResult {
        status,
        objective: f64::NAN,
        x: vec![0.0; sf.n],
        residuals: Residuals {
            primal: f64::INFINITY,
            dual: f64::INFINITY,
            gap: f64::INFINITY,
        },
        iterations,
        y: vec![0.0; sf.m],
        s: vec![0.0; sf.m],
        infeasibility_certificate: None,
        unboundedness_certificate: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{ConeTag, LinExpr, ProgramBuilder};
    use approx::assert_relative_eq;

    fn solve_default(p: &ConicProgram) -> SolveResult {
        solve(p, &SolverSettings::default())
    }

    #[test]
    fn lp_box() {
        // maximize x s.t. 0 <= x <= 3
        let mut b = ProgramBuilder::new("lp_box");
        let x = b.scalar("x");
        b.set_maximize(LinExpr::var(x));
        b.nonneg("ub", LinExpr::term(x, -1.0).plus(&LinExpr::constant(3.0)));
        b.nonneg("lb", LinExpr::var(x));
        let p = b.build().unwrap();
        let r = solve_default(&p);
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_relative_eq!(r.objective, 3.0, epsilon = 1e-6);
    }

    #[test]
    fn soc_ball() {
        // maximize x + y s.t. ||(x, y)|| <= 1 -> sqrt(2)
        let mut b = ProgramBuilder::new("soc_ball");
        let x = b.scalar("x");
        let y = b.scalar("y");
        b.set_maximize(LinExpr::var(x).plus(&LinExpr::var(y)));
        b.constraint(
            "ball",
            ConeTag::Soc,
            vec![LinExpr::constant(1.0), LinExpr::var(x), LinExpr::var(y)],
        );
        let p = b.build().unwrap();
        let r = solve_default(&p);
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_relative_eq!(r.objective, std::f64::consts::SQRT_2, epsilon = 1e-6);
    }

    #[test]
    fn exp_epigraph() {
        // maximize t s.t. t <= ln r, r <= e  ->  t = 1
        let mut b = ProgramBuilder::new("exp_log");
        let t = b.scalar("t");
        let r = b.scalar("r");
        b.set_maximize(LinExpr::var(t));
        b.constraint(
            "log",
            ConeTag::Exp,
            vec![LinExpr::var(t), LinExpr::constant(1.0), LinExpr::var(r)],
        );
        b.nonneg(
            "rcap",
            LinExpr::term(r, -1.0).plus(&LinExpr::constant(std::f64::consts::E)),
        );
        let p = b.build().unwrap();
        let res = solve_default(&p);
        assert_eq!(res.status, SolveStatus::Optimal);
        assert_relative_eq!(res.objective, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn psd_diagonal() {
        // maximize tr(W) s.t. W psd 2x2 real, W11 <= 2, W22 <= 3, off-diag = 0.
        let mut b = ProgramBuilder::new("psd_diag");
        let w = b.vector("w", 3); // svec of 2x2: [w11, sqrt2*w21, w22]
        b.constraint(
            "psd",
            ConeTag::Psd,
            vec![
                LinExpr::var(w),
                LinExpr::var(w + 1),
                LinExpr::var(w + 2),
            ],
        );
        b.set_maximize(LinExpr::var(w).plus(&LinExpr::var(w + 2)));
        b.nonneg("c11", LinExpr::term(w, -1.0).plus(&LinExpr::constant(2.0)));
        b.nonneg("c22", LinExpr::term(w + 2, -1.0).plus(&LinExpr::constant(3.0)));
        b.constraint("offdiag", ConeTag::Zero, vec![LinExpr::var(w + 1)]);
        let p = b.build().unwrap();
        let r = solve_default(&p);
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_relative_eq!(r.objective, 5.0, epsilon = 1e-6);
    }

    #[test]
    fn infeasible_lp_certificate() {
        // x >= 1 and x <= 0: infeasible.
        let mut b = ProgramBuilder::new("infeasible");
        let x = b.scalar("x");
        b.set_maximize(LinExpr::var(x));
        b.nonneg("lb", LinExpr::term(x, 1.0).plus(&LinExpr::constant(-1.0)));
        b.nonneg("ub", LinExpr::term(x, -1.0));
        let p = b.build().unwrap();
        let r = solve_default(&p);
        assert_eq!(r.status, SolveStatus::Infeasible);
        let cert = r.infeasibility_certificate.as_ref().unwrap();
        let sf = standard_form(&p);
        // Farkas: y in K*, b'y = -1, A'y ~ 0.
        assert_relative_eq!(dot(&sf.b, cert), -1.0, epsilon = 1e-9);
        let mut aty = vec![0.0; sf.n];
        sf.a.matvec_t(cert, &mut aty);
        assert!(norm_inf(&aty) <= 1e-8 * (1.0 + norm_inf(cert)));
        assert!(cert.iter().all(|&yi| yi >= -1e-9));
    }

    #[test]
    fn unbounded_lp_certificate() {
        // maximize x s.t. x >= 0: unbounded above.
        let mut b = ProgramBuilder::new("unbounded");
        let x = b.scalar("x");
        b.set_maximize(LinExpr::var(x));
        b.nonneg("lb", LinExpr::var(x));
        let p = b.build().unwrap();
        let r = solve_default(&p);
        assert_eq!(r.status, SolveStatus::Unbounded);
        assert!(r.objective.is_infinite() && r.objective > 0.0);
        let (xhat, shat) = r.unboundedness_certificate.as_ref().unwrap();
        let sf = standard_form(&p);
        assert_relative_eq!(dot(&sf.c, xhat), -1.0, epsilon = 1e-9);
        let mut ax = vec![0.0; sf.m];
        sf.a.matvec(xhat, &mut ax);
        for i in 0..sf.m {
            ax[i] += shat[i];
        }
        assert!(norm_inf(&ax) <= 1e-8);
    }

    #[test]
    fn warm_start_reaches_same_solution_faster() {
        let build = |ub: f64| {
            let mut b = ProgramBuilder::new("warm");
            let x = b.vector("x", 3);
            b.set_maximize(
                LinExpr::term(x, 1.0)
                    .plus(&LinExpr::term(x + 1, 2.0))
                    .plus(&LinExpr::term(x + 2, 0.5)),
            );
            for j in 0..3 {
                b.nonneg(format!("lb{j}"), LinExpr::var(x + j));
            }
            b.constraint(
                "ball",
                ConeTag::Soc,
                vec![
                    LinExpr::constant(ub),
                    LinExpr::var(x),
                    LinExpr::var(x + 1),
                    LinExpr::var(x + 2),
                ],
            );
            b.build().unwrap()
        };
        let p1 = build(1.0);
        let r1 = solve_default(&p1);
        assert_eq!(r1.status, SolveStatus::Optimal);
        let p2 = build(1.02);
        let warm = WarmStart::from_result(&r1);
        let r2 = solve_with(&p2, &SolverSettings::default(), Some(&warm));
        assert_eq!(r2.status, SolveStatus::Optimal);
        let r2_cold = solve_default(&p2);
        assert_relative_eq!(r2.objective, r2_cold.objective, epsilon = 1e-6);
        assert!(r2.iterations <= r2_cold.iterations);
    }

    #[test]
    fn determinism_same_program_same_result() {
        let mut b = ProgramBuilder::new("det");
        let x = b.scalar("x");
        let y = b.scalar("y");
        b.set_maximize(LinExpr::var(x).plus(&LinExpr::term(y, 0.3)));
        b.constraint(
            "ball",
            ConeTag::Soc,
            vec![LinExpr::constant(2.0), LinExpr::var(x), LinExpr::var(y)],
        );
        let p = b.build().unwrap();
        let json = p.to_json();
        let p1 = ConicProgram::from_json(&json).unwrap();
        let p2 = ConicProgram::from_json(&json).unwrap();
        let r1 = solve_default(&p1);
        let r2 = solve_default(&p2);
        assert_eq!(r1.status, r2.status);
        assert_eq!(r1.iterations, r2.iterations);
        assert!((r1.objective - r2.objective).abs() <= 1e-12 * (1.0 + r1.objective.abs()));
    }

    #[test]
    fn hermitian_psd_variable_solves() {
        // maximize Re W[0,1] s.t. W psd, W00 <= 1, W11 <= 1.
        // Optimum: W = [[1, 1], [1, 1]] -> objective 1.
        let mut b = ProgramBuilder::new("herm");
        let w = b.hermitian_psd("W", 2);
        b.set_maximize(LinExpr::var(w.re(0, 1)));
        b.nonneg(
            "c00",
            LinExpr::term(w.diag(0), -1.0).plus(&LinExpr::constant(1.0)),
        );
        b.nonneg(
            "c11",
            LinExpr::term(w.diag(1), -1.0).plus(&LinExpr::constant(1.0)),
        );
        let p = b.build().unwrap();
        let r = solve_default(&p);
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_relative_eq!(r.objective, 1.0, epsilon = 1e-5);
        let wm = w.value(&r.x);
        // Extracted matrix is Hermitian PSD.
        let eig = nalgebra::SymmetricEigen::new(wm);
        assert!(eig.eigenvalues.iter().all(|&l| l >= -1e-7));
    }
}
