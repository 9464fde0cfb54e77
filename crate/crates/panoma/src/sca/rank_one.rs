//! Beamforming-vector recovery from relaxed PSD precoder matrices.
//!
//! The dominant eigenpair is taken first; when the matrix is materially
//! non-rank-one (`λ₂/λ₁` above a threshold) a seeded Gaussian randomization
//! pass draws candidates distributed as `CN(0, W)`, rescales their
//! per-waveguide magnitudes to match `diag(W)` (so per-waveguide power use
//! is identical to the matrix solution), and keeps the best candidate that
//! stays feasible for the ordering and rate-floor constraints.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::phys::ChannelMatrix;
use crate::rate::{rate_report_from_powers, NoiseSpec, POWER_TOL, RATE_TOL};

use super::NomaProblem;

/// Randomization sample count (fixed, seeded: results are reproducible).
const RANDOMIZATION_SAMPLES: usize = 200;
const RANDOMIZATION_SEED: u64 = 0x5eed_a110_c47e;

#[derive(Debug, Clone)]
pub struct RankOneReport {
    /// λ₂/λ₁ of the extracted matrix (0 for exactly rank-one or 1×1).
    pub eigen_ratio: f64,
    pub randomization_used: bool,
    /// Feasible candidates found during randomization.
    pub feasible_candidates: usize,
    /// Whether the matrix was (numerically) zero: a zero vector is returned.
    pub degenerate: bool,
}

/// Context for scoring randomized candidates by sum-rate and feasibility.
pub struct RandomizationContext<'a> {
    pub h: &'a ChannelMatrix,
    pub problem: &'a NomaProblem,
    /// All users' matrices (the candidate replaces entry `user`).
    pub matrices: &'a [DMatrix<Complex64>],
    pub user: usize,
}

fn hermitian_eigen(w: &DMatrix<Complex64>) -> (Vec<f64>, DMatrix<Complex64>) {
    let sym = (w + w.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = nalgebra::SymmetricEigen::new(sym);
    (eig.eigenvalues.iter().cloned().collect(), eig.eigenvectors)
}

/// Deterministic global phase: the largest-magnitude entry is made real
/// positive.
fn normalize_phase(mut w: DVector<Complex64>) -> DVector<Complex64> {
    let mut best = 0usize;
    let mut best_mag = -1.0;
    for (i, v) in w.iter().enumerate() {
        if v.norm() > best_mag + 1e-15 {
            best_mag = v.norm();
            best = i;
        }
    }
    if best_mag > 0.0 {
        let phase = w[best] / Complex64::new(w[best].norm(), 0.0);
        w *= phase.conj();
    }
    w
}

/// Effective-power table with user `ctx.user` replaced by vector `w`.
fn powers_with_candidate(
    ctx: &RandomizationContext,
    w: &DVector<Complex64>,
) -> DMatrix<f64> {
    let k_users = ctx.h.n_users();
    let mut g = DMatrix::zeros(k_users, k_users);
    for m in 0..k_users {
        let hm = ctx.h.user_channel(m);
        for b in 0..k_users {
            g[(b, m)] = if b == ctx.user {
                let inner: Complex64 = hm.iter().zip(w.iter()).map(|(h, w)| h.conj() * w).sum();
                inner.norm_sqr()
            } else {
                (hm.adjoint() * &ctx.matrices[b] * &hm)[(0, 0)].re.max(0.0)
            };
        }
    }
    g
}

fn candidate_feasible(ctx: &RandomizationContext, g: &DMatrix<f64>) -> (bool, f64) {
    let k_users = g.nrows();
    let report = rate_report_from_powers(g, &ctx.problem.noise);
    let rates_ok = report
        .per_user_rate
        .iter()
        .all(|&r| r >= ctx.problem.r_min - RATE_TOL);
    let ordering_ok = !ctx.problem.include_ordering
        || (0..k_users).all(|k| (1..k_users).all(|m| g[(m, k)] <= g[(m - 1, k)] + POWER_TOL));
    (rates_ok && ordering_ok, report.sum_rate)
}

/// Extracts a beamforming vector from one PSD matrix.
///
/// Without a context the dominant eigenpair is returned regardless of the
/// eigen-ratio. With a context, a ratio above `tol_ratio` triggers the
/// Gaussian randomization pass described in the module docs.
pub fn extract_rank_one(
    w: &DMatrix<Complex64>,
    tol_ratio: f64,
    ctx: Option<&RandomizationContext>,
) -> (DVector<Complex64>, RankOneReport) {
    let n = w.nrows();
    let (eigvals, eigvecs) = hermitian_eigen(w);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eigvals[b].partial_cmp(&eigvals[a]).unwrap());
    let lam1 = eigvals[order[0]].max(0.0);
    let scale = w.iter().map(|v| v.norm()).fold(0.0_f64, f64::max);
    if lam1 <= 1e-12 * scale.max(1.0) || scale == 0.0 {
        return (
            DVector::zeros(n),
            RankOneReport {
                eigen_ratio: 0.0,
                randomization_used: false,
                feasible_candidates: 0,
                degenerate: true,
            },
        );
    }
    let lam2 = if n > 1 {
        eigvals[order[1]].max(0.0)
    } else {
        0.0
    };
    let ratio = lam2 / lam1;
    let dominant = normalize_phase(
        eigvecs.column(order[0]).into_owned() * Complex64::new(lam1.sqrt(), 0.0),
    );
    let mut report = RankOneReport {
        eigen_ratio: ratio,
        randomization_used: false,
        feasible_candidates: 0,
        degenerate: false,
    };
    let ctx = match ctx {
        Some(c) if ratio > tol_ratio => c,
        _ => return (dominant, report),
    };

    report.randomization_used = true;
    let mut rng = ChaCha8Rng::seed_from_u64(RANDOMIZATION_SEED ^ ctx.user as u64);
    // Factor W^(1/2) from the eigendecomposition for CN(0, W) sampling.
    let mut half = DMatrix::zeros(n, n);
    for &idx in &order {
        let lam = eigvals[idx].max(0.0);
        if lam > 0.0 {
            let col = eigvecs.column(idx) * Complex64::new(lam.sqrt(), 0.0);
            half.set_column(idx, &col);
        }
    }
    let diag_mags: Vec<f64> = (0..n).map(|i| w[(i, i)].re.max(0.0).sqrt()).collect();
    let mut best_vec = dominant.clone();
    let (dom_ok, dom_rate) = {
        let g = powers_with_candidate(ctx, &dominant);
        candidate_feasible(ctx, &g)
    };
    let mut best_rate = if dom_ok { dom_rate } else { f64::NEG_INFINITY };
    for _ in 0..RANDOMIZATION_SAMPLES {
        let gauss = DVector::from_fn(n, |_, _| {
            Complex64::new(normal_sample(&mut rng), normal_sample(&mut rng))
                * Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0)
        });
        let z = &half * gauss;
        // Keep the sampled phases, match the matrix diagonal magnitudes.
        let cand = DVector::from_fn(n, |i, _| {
            let zi: Complex64 = z[i];
            if zi.norm() > 1e-30 {
                zi / Complex64::new(zi.norm(), 0.0) * Complex64::new(diag_mags[i], 0.0)
            } else {
                Complex64::new(diag_mags[i], 0.0)
            }
        });
        let g = powers_with_candidate(ctx, &cand);
        let (ok, rate) = candidate_feasible(ctx, &g);
        if ok {
            report.feasible_candidates += 1;
            if rate > best_rate {
                best_rate = rate;
                best_vec = cand;
            }
        }
    }
    (normalize_phase(best_vec), report)
}

fn normal_sample(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller on open-interval uniforms.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[derive(Debug)]
pub struct ExtractionOutcome {
    pub vectors: Vec<DVector<Complex64>>,
    pub reports: Vec<RankOneReport>,
    /// Vector-based sum-rate divided by the matrix-implied sum-rate.
    pub retention: f64,
}

/// Extracts every user's vector, randomizing where needed, and reports the
/// objective retention against the matrix-implied sum-rate.
pub fn extract_precoders(
    matrices: &[DMatrix<Complex64>],
    h: &ChannelMatrix,
    problem: &NomaProblem,
    tol_ratio: f64,
) -> ExtractionOutcome {
    let mut vectors = Vec::with_capacity(matrices.len());
    let mut reports = Vec::with_capacity(matrices.len());
    for user in 0..matrices.len() {
        let ctx = RandomizationContext {
            h,
            problem,
            matrices,
            user,
        };
        let (w, rep) = extract_rank_one(&matrices[user], tol_ratio, Some(&ctx));
        vectors.push(w);
        reports.push(rep);
    }
    let pm = crate::rate::PrecoderSet::from_matrices(matrices.to_vec(), problem.budgets.clone());
    let pv = crate::rate::PrecoderSet::from_vectors(vectors.clone(), problem.budgets.clone());
    let matrix_rate = crate::rate::effective_powers(h, &pm)
        .map(|g| rate_report_from_powers(&g, &problem.noise).sum_rate)
        .unwrap_or(f64::NAN);
    let vector_rate = crate::rate::effective_powers(h, &pv)
        .map(|g| rate_report_from_powers(&g, &problem.noise).sum_rate)
        .unwrap_or(f64::NAN);
    let retention = if matrix_rate.abs() < 1e-15 {
        1.0
    } else {
        vector_rate / matrix_rate
    };
    ExtractionOutcome {
        vectors,
        reports,
        retention,
    }
}

/// Noise spec accessor used by tests.
pub fn noise_of(problem: &NomaProblem) -> &NoiseSpec {
    &problem.noise
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn exact_rank_one_recovers_up_to_phase() {
        let w = DVector::from_column_slice(&[c(1.0, 0.5), c(-0.3, 0.8)]);
        let mat = &w * w.adjoint();
        let (got, rep) = extract_rank_one(&mat, 1e-6, None);
        assert!(rep.eigen_ratio < 1e-12);
        assert!(!rep.degenerate);
        // |<w, got>| = ||w|| ||got|| for phase-aligned vectors.
        let inner: Complex64 = w.iter().zip(got.iter()).map(|(a, b)| a.conj() * b).sum();
        assert_relative_eq!(inner.norm(), w.norm() * got.norm(), max_relative = 1e-10);
        assert_relative_eq!(got.norm(), w.norm(), max_relative = 1e-10);
    }

    #[test]
    fn identity_matrix_reports_unit_ratio() {
        let mat = DMatrix::from_diagonal_element(2, 2, c(1.0, 0.0));
        let (_, rep) = extract_rank_one(&mat, 1e-6, None);
        assert_relative_eq!(rep.eigen_ratio, 1.0, max_relative = 1e-12);
        assert!(!rep.randomization_used); // no context supplied
    }

    #[test]
    fn zero_matrix_degenerates_to_zero_vector() {
        let mat = DMatrix::from_element(3, 3, c(0.0, 0.0));
        let (w, rep) = extract_rank_one(&mat, 1e-6, None);
        assert!(rep.degenerate);
        assert_eq!(w, DVector::from_element(3, c(0.0, 0.0)));
    }

    #[test]
    fn randomization_is_deterministic() {
        use crate::rate::NoiseSpec;
        let h = ChannelMatrix {
            h: DMatrix::from_row_slice(2, 2, &[c(1.0, 0.1), c(0.2, -0.5), c(0.4, 0.3), c(-0.6, 0.2)]),
            lossless: true,
        };
        let problem = NomaProblem {
            budgets: vec![1.0, 1.0],
            noise: NoiseSpec::uniform(0.1, 2),
            r_min: 0.0,
            include_ordering: false,
        };
        let mats = vec![
            DMatrix::from_diagonal_element(2, 2, c(0.4, 0.0)),
            DMatrix::from_diagonal_element(2, 2, c(0.3, 0.0)),
        ];
        let a = extract_precoders(&mats, &h, &problem, 1e-6);
        let b = extract_precoders(&mats, &h, &problem, 1e-6);
        assert_eq!(a.vectors, b.vectors);
        assert!(a.reports.iter().all(|r| r.randomization_used));
    }
}
