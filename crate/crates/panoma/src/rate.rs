//! SINR, achievable-rate and sum-rate evaluation under NOMA with successive
//! interference cancellation, plus feasibility checking for the sum-rate
//! maximization constraints.
//!
//! Users are indexed `0..K` in ascending channel strength: user `K-1` is the
//! strongest and cancels everyone, user `0` is the weakest and cancels
//! nobody. Decoder `m` decodes message `k` only for `m >= k`, treating
//! messages `b > k` as interference:
//!
//! ```text
//! SINR_m^k = |h_m^H w_k|² / (Σ_{b>k} |h_m^H w_b|² + σ_m²)
//! R_k      = log2(1 + min_{m in k..K} SINR_m^k)      (the min guards SIC)
//! ```
//!
//! All rate logic is written against the "effective power" table
//! `G[k][m] = |h_m^H w_k|²`, so the same code path serves vector precoders
//! and PSD-matrix (semidefinite-relaxation) precoders, where
//! `G[k][m] = Tr(h_m h_m^H W_k)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::phys::{ChannelMatrix, SystemGeometry};

/// Absolute feasibility tolerance on powers and channel gains (watts).
pub const POWER_TOL: f64 = 1e-7;
/// Absolute feasibility tolerance on rates (bits/s/Hz).
pub const RATE_TOL: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum RateError {
    #[error("decoder {m} cannot decode message {k}: SIC requires m >= k")]
    OrderViolation { k: usize, m: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("index out of range: {0}")]
    IndexOutOfRange(usize),
}

/// Per-user precoders, as vectors `w_k`, PSD matrices `W_k`, or both.
#[derive(Debug, Clone)]
pub struct PrecoderSet {
    pub vectors: Option<Vec<DVector<Complex64>>>,
    pub matrices: Option<Vec<DMatrix<Complex64>>>,
    /// Per-waveguide transmit power budgets `P_n^max` (watts).
    pub budgets: Vec<f64>,
}

impl PrecoderSet {
    pub fn from_vectors(vectors: Vec<DVector<Complex64>>, budgets: Vec<f64>) -> Self {
        Self {
            vectors: Some(vectors),
            matrices: None,
            budgets,
        }
    }

    pub fn from_matrices(matrices: Vec<DMatrix<Complex64>>, budgets: Vec<f64>) -> Self {
        Self {
            vectors: None,
            matrices: Some(matrices),
            budgets,
        }
    }

    pub fn n_users(&self) -> usize {
        self.vectors
            .as_ref()
            .map(|v| v.len())
            .or_else(|| self.matrices.as_ref().map(|m| m.len()))
            .unwrap_or(0)
    }

    /// Per-waveguide power consumption `Σ_k |w_{k,n}|²` (diagonal of Σ W_k
    /// when only matrices are present).
    pub fn per_waveguide_power(&self) -> Vec<f64> {
        let n = self.budgets.len();
        let mut p = vec![0.0; n];
        if let Some(vs) = &self.vectors {
            for w in vs {
                for i in 0..n {
                    p[i] += w[i].norm_sqr();
                }
            }
        } else if let Some(ms) = &self.matrices {
            for wm in ms {
                for i in 0..n {
                    p[i] += wm[(i, i)].re;
                }
            }
        }
        p
    }

    /// When both representations are present, checks `W_k ≈ w_k w_k^H`
    /// (Frobenius-relative tolerance).
    pub fn forms_consistent(&self, tol: f64) -> bool {
        match (&self.vectors, &self.matrices) {
            (Some(vs), Some(ms)) => vs.iter().zip(ms).all(|(w, wm)| {
                let outer = w * w.adjoint();
                let denom = wm.norm().max(1e-30);
                (&outer - wm).norm() / denom <= tol
            }),
            _ => true,
        }
    }
}

/// Per-user noise variances σ_k² (watts).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub sigma2: Vec<f64>,
}

impl NoiseSpec {
    pub fn uniform(sigma2: f64, k_users: usize) -> Self {
        Self {
            sigma2: vec![sigma2; k_users],
        }
    }
}

/// Effective power table `G[(k, m)] = |h_m^H w_k|²` (or the Tr form for
/// matrix precoders). Rows index messages, columns index decoders.
pub fn effective_powers(h: &ChannelMatrix, p: &PrecoderSet) -> Result<DMatrix<f64>, RateError> {
    let k_users = h.n_users();
    let n = h.n_waveguides();
    let mut g = DMatrix::zeros(k_users, k_users);
    if let Some(vs) = &p.vectors {
        if vs.len() != k_users {
            return Err(RateError::ShapeMismatch(format!(
                "{} precoders for {} users",
                vs.len(),
                k_users
            )));
        }
        for (k, w) in vs.iter().enumerate() {
            if w.len() != n {
                return Err(RateError::ShapeMismatch(format!(
                    "precoder {k} has length {} for {n} waveguides",
                    w.len()
                )));
            }
            for m in 0..k_users {
                let inner: Complex64 = h
                    .user_channel(m)
                    .iter()
                    .zip(w.iter())
                    .map(|(hm, wk)| hm.conj() * wk)
                    .sum();
                g[(k, m)] = inner.norm_sqr();
            }
        }
    } else if let Some(ms) = &p.matrices {
        if ms.len() != k_users {
            return Err(RateError::ShapeMismatch(format!(
                "{} precoder matrices for {} users",
                ms.len(),
                k_users
            )));
        }
        for (k, wm) in ms.iter().enumerate() {
            if wm.nrows() != n || wm.ncols() != n {
                return Err(RateError::ShapeMismatch(format!(
                    "precoder matrix {k} is {}x{} for {n} waveguides",
                    wm.nrows(),
                    wm.ncols()
                )));
            }
            for m in 0..k_users {
                let hm = h.user_channel(m);
                // h_m^H W_k h_m, real for Hermitian W_k.
                let val = (hm.adjoint() * wm * &hm)[(0, 0)].re;
                g[(k, m)] = val.max(0.0);
            }
        }
    } else {
        return Err(RateError::ShapeMismatch(
            "precoder set carries neither vectors nor matrices".into(),
        ));
    }
    Ok(g)
}

fn sinr_from_powers(g: &DMatrix<f64>, noise: &NoiseSpec, k: usize, m: usize) -> f64 {
    let k_users = g.nrows();
    let interference: f64 = (k + 1..k_users).map(|b| g[(b, m)]).sum();
    g[(k, m)] / (interference + noise.sigma2[m])
}

/// SINR at decoder `m` for message `k` (Eq.-(7) form); requires `m >= k`.
pub fn sinr(
    h: &ChannelMatrix,
    p: &PrecoderSet,
    noise: &NoiseSpec,
    k: usize,
    m: usize,
) -> Result<f64, RateError> {
    if m < k {
        return Err(RateError::OrderViolation { k, m });
    }
    let k_users = h.n_users();
    if k >= k_users || m >= k_users {
        return Err(RateError::IndexOutOfRange(k.max(m)));
    }
    let g = effective_powers(h, p)?;
    Ok(sinr_from_powers(&g, noise, k, m))
}

/// Full rate report computed from a precomputed effective-power table.
pub fn rate_report_from_powers(g: &DMatrix<f64>, noise: &NoiseSpec) -> RateReport {
    let k_users = g.nrows();
    let mut sinr_table = Vec::with_capacity(k_users);
    let mut per_user_rate = Vec::with_capacity(k_users);
    let mut binding_decoder = Vec::with_capacity(k_users);
    for k in 0..k_users {
        let row: Vec<f64> = (k..k_users)
            .map(|m| sinr_from_powers(g, noise, k, m))
            .collect();
        // Ties broken by the smallest decoder index.
        let (arg, min) = row
            .iter()
            .enumerate()
            .fold((0usize, f64::INFINITY), |(ai, av), (i, &v)| {
                if v < av {
                    (i, v)
                } else {
                    (ai, av)
                }
            });
        per_user_rate.push((1.0 + min).log2());
        binding_decoder.push(k + arg);
        sinr_table.push(row);
    }
    let sum_rate = per_user_rate.iter().sum();
    RateReport {
        sinr: sinr_table,
        per_user_rate,
        sum_rate,
        binding_decoder,
    }
}

/// SINR table, per-user rates, sum-rate and binding decoders.
#[derive(Debug, Clone)]
pub struct RateReport {
    /// `sinr[k][j]` is the SINR of message `k` at decoder `m = k + j`.
    pub sinr: Vec<Vec<f64>>,
    pub per_user_rate: Vec<f64>,
    pub sum_rate: f64,
    /// For each message, the decoder index attaining the SINR min.
    pub binding_decoder: Vec<usize>,
}

pub fn rate_report(
    h: &ChannelMatrix,
    p: &PrecoderSet,
    noise: &NoiseSpec,
) -> Result<RateReport, RateError> {
    Ok(rate_report_from_powers(&effective_powers(h, p)?, noise))
}

/// Achievable rate of user `k` (bits/s/Hz).
pub fn user_rate(
    h: &ChannelMatrix,
    p: &PrecoderSet,
    noise: &NoiseSpec,
    k: usize,
) -> Result<f64, RateError> {
    let report = rate_report(h, p, noise)?;
    report
        .per_user_rate
        .get(k)
        .copied()
        .ok_or(RateError::IndexOutOfRange(k))
}

/// System sum-rate `Σ_k R_k` (bits/s/Hz).
pub fn sum_rate(h: &ChannelMatrix, p: &PrecoderSet, noise: &NoiseSpec) -> Result<f64, RateError> {
    Ok(rate_report(h, p, noise)?.sum_rate)
}

/// Channel-ordering check: at every decoder `k` the effective gains
/// `|h_k^H w_m|²` must be nonincreasing in the message index `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderingReport {
    /// For each user, the first adjacent pair `(m-1, m)` whose gains are out
    /// of order (within the additive tolerance), if any.
    pub first_violation: Vec<Option<(usize, usize)>>,
}

impl OrderingReport {
    pub fn satisfied(&self) -> bool {
        self.first_violation.iter().all(Option::is_none)
    }
}

pub fn ordering_satisfied(
    h: &ChannelMatrix,
    p: &PrecoderSet,
    tolerance: f64,
) -> Result<OrderingReport, RateError> {
    let g = effective_powers(h, p)?;
    let k_users = g.nrows();
    let first_violation = (0..k_users)
        .map(|k| {
            (1..k_users).find_map(|m| {
                if g[(m, k)] > g[(m - 1, k)] + tolerance {
                    Some((m - 1, m))
                } else {
                    None
                }
            })
        })
        .collect();
    Ok(OrderingReport { first_violation })
}

/// Per-constraint slack report for the sum-rate problem; negative slack
/// means violation. Report-only: nothing is raised.
#[derive(Debug, Clone)]
pub struct FeasibilityReport {
    /// C1: per user, the worst adjacent gain gap `G[m-1][k] − G[m][k]`.
    pub c1_ordering: Vec<f64>,
    /// C2: per waveguide, `P_n^max − Σ_k |w_{k,n}|²`.
    pub c2_power: Vec<f64>,
    /// C3: per user, `R_k − R_min`.
    pub c3_rate: Vec<f64>,
    /// C4: per waveguide, `min(x_n, x_max − x_n)`.
    pub c4_position: Vec<f64>,
}

impl FeasibilityReport {
    /// All slacks within the default tolerances (powers/gains 1e-7, rates 1e-6).
    pub fn feasible(&self) -> bool {
        self.feasible_except_ordering() && self.c1_ordering.iter().all(|&s| s >= -POWER_TOL)
    }

    /// Feasibility with C1 exempted (used by the naive scheme).
    pub fn feasible_except_ordering(&self) -> bool {
        self.c2_power.iter().all(|&s| s >= -POWER_TOL)
            && self.c3_rate.iter().all(|&s| s >= -RATE_TOL)
            && self.c4_position.iter().all(|&s| s >= -POWER_TOL)
    }
}

pub fn check_feasibility(
    geom: &SystemGeometry,
    h: &ChannelMatrix,
    p: &PrecoderSet,
    noise: &NoiseSpec,
    r_min: f64,
    x_max: f64,
) -> Result<FeasibilityReport, RateError> {
    let g = effective_powers(h, p)?;
    let k_users = g.nrows();
    let c1_ordering = (0..k_users)
        .map(|k| {
            (1..k_users)
                .map(|m| g[(m - 1, k)] - g[(m, k)])
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let used = p.per_waveguide_power();
    let c2_power = p
        .budgets
        .iter()
        .zip(&used)
        .map(|(&b, &u)| b - u)
        .collect();
    let report = rate_report_from_powers(&g, noise);
    let c3_rate = report.per_user_rate.iter().map(|&r| r - r_min).collect();
    let c4_position = geom.pin_x.iter().map(|&x| x.min(x_max - x)).collect();
    Ok(FeasibilityReport {
        c1_ordering,
        c2_power,
        c3_rate,
        c4_position,
    })
}
