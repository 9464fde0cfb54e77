//! A minimal conic-program model and first-order solver.
//!
//! Programs are linear objectives over named scalar/vector/Hermitian variable
//! blocks, subject to cone memberships of affine expressions:
//!
//! ```text
//! maximize  c·x + k      s.t.   G_i x + h_i ∈ K_i
//! ```
//!
//! with `K_i` one of: zero (equality), nonnegative orthant, second-order
//! cone, PSD cone (on `svec` of a real symmetric matrix), or the exponential
//! cone. Complex Hermitian matrix variables are represented by their packed
//! real parameters and constrained PSD through the standard real symmetric
//! embedding `[[Re W, −Im W], [Im W, Re W]]` of twice the dimension.
//!
//! The solver ([`solve`], [`solve_with`]) is a first-order operator-splitting
//! method on the homogeneous self-dual embedding with Ruiz diagonal scaling
//! and over-relaxation; see [`solver`] for details. Programs serialize to a
//! plain-text JSON schema (documented in `docs/conic_program_schema.md`) for
//! golden tests and bug reports.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod battery;
pub mod cones;
pub mod solver;

pub use solver::{solve, solve_with, Residuals, SolveResult, SolveStatus, SolverSettings, WarmStart};

#[derive(Debug, Error, PartialEq)]
pub enum BuildError {
    #[error("variable index {0} out of range ({1} declared)")]
    VarOutOfRange(usize, usize),
    #[error("constraint `{name}`: {reason}")]
    BadConstraint { name: String, reason: String },
    #[error("duplicate variable block name `{0}`")]
    DuplicateName(String),
}

/// Cone family of one constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConeTag {
    /// All rows equal zero.
    Zero,
    /// All rows nonnegative.
    NonNeg,
    /// Rows `(t, u…)` with `t ≥ ‖u‖₂`.
    Soc,
    /// Rows are `svec(M)` (column-major lower triangle, off-diagonals scaled
    /// by √2) of a symmetric matrix required to be PSD.
    Psd,
    /// Consecutive triples `(x, y, z)` with `y e^(x/y) ≤ z` (closure).
    Exp,
}

/// Sparse affine expression `Σ coeff·x[var] + constant`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn constant(c: f64) -> Self {
        Self {
            terms: vec![],
            constant: c,
        }
    }

    pub fn var(j: usize) -> Self {
        Self {
            terms: vec![(j, 1.0)],
            constant: 0.0,
        }
    }

    pub fn term(j: usize, coeff: f64) -> Self {
        Self {
            terms: vec![(j, coeff)],
            constant: 0.0,
        }
    }

    pub fn push(&mut self, j: usize, coeff: f64) -> &mut Self {
        if coeff != 0.0 {
            self.terms.push((j, coeff));
        }
        self
    }

    pub fn add_const(&mut self, c: f64) -> &mut Self {
        self.constant += c;
        self
    }

    pub fn plus(mut self, other: &LinExpr) -> Self {
        self.terms.extend_from_slice(&other.terms);
        self.constant += other.constant;
        self
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            terms: self.terms.iter().map(|&(j, c)| (j, c * factor)).collect(),
            constant: self.constant * factor,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|&(j, c)| c * x[j])
            .sum::<f64>()
            + self.constant
    }

    /// Sorts by variable index and merges duplicate terms.
    fn normalize(&mut self) {
        self.terms.sort_by_key(|&(j, _)| j);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(self.terms.len());
        for &(j, c) in &self.terms {
            match out.last_mut() {
                Some((jl, cl)) if *jl == j => *cl += c,
                _ => out.push((j, c)),
            }
        }
        out.retain(|&(_, c)| c != 0.0);
        self.terms = out;
    }
}

/// A named contiguous slice of the primal variable vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarBlock {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

/// One cone membership constraint on a vector of affine rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeConstraint {
    pub name: String,
    pub cone: ConeTag,
    pub rows: Vec<LinExpr>,
}

/// Validated conic program. Construct through [`ProgramBuilder`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConicProgram {
    pub name: String,
    pub n_vars: usize,
    pub vars: Vec<VarBlock>,
    /// `true` to maximize the objective, `false` to minimize.
    pub maximize: bool,
    pub objective: LinExpr,
    pub constraints: Vec<ConeConstraint>,
}

impl ConicProgram {
    pub fn block(&self, name: &str) -> Option<&VarBlock> {
        self.vars.iter().find(|b| b.name == name)
    }

    /// Total constraint rows across all cones.
    pub fn n_rows(&self) -> usize {
        self.constraints.iter().map(|c| c.rows.len()).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("program serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Incremental builder with dimension validation at `build()`.
#[derive(Debug, Default)]
pub struct ProgramBuilder {
    name: String,
    n_vars: usize,
    vars: Vec<VarBlock>,
    maximize: bool,
    objective: LinExpr,
    constraints: Vec<ConeConstraint>,
}

impl ProgramBuilder {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Default::default()
        }
    }

    /// Declares a scalar variable; returns its global index.
    pub fn scalar(&mut self, name: impl Into<String>) -> usize {
        self.vector(name, 1)
    }

    /// Declares a vector block; returns the offset of its first entry.
    pub fn vector(&mut self, name: impl Into<String>, len: usize) -> usize {
        let offset = self.n_vars;
        self.vars.push(VarBlock {
            name: name.into(),
            offset,
            len,
        });
        self.n_vars += len;
        offset
    }

    /// Declares a complex Hermitian `dim×dim` matrix variable in packed real
    /// form and adds its PSD constraint via the real symmetric embedding.
    pub fn hermitian_psd(&mut self, name: impl Into<String>, dim: usize) -> HermitianVar {
        let name = name.into();
        let offset = self.vector(name.clone(), dim * dim);
        let var = HermitianVar { offset, dim };
        self.constraint(format!("{name}_psd"), ConeTag::Psd, var.embedding_svec_rows());
        var
    }

    pub fn set_maximize(&mut self, objective: LinExpr) {
        self.maximize = true;
        self.objective = objective;
    }

    pub fn set_minimize(&mut self, objective: LinExpr) {
        self.maximize = false;
        self.objective = objective;
    }

    pub fn constraint(
        &mut self,
        name: impl Into<String>,
        cone: ConeTag,
        rows: Vec<LinExpr>,
    ) {
        self.constraints.push(ConeConstraint {
            name: name.into(),
            cone,
            rows,
        });
    }

    /// Single nonnegative row `expr ≥ 0`.
    pub fn nonneg(&mut self, name: impl Into<String>, expr: LinExpr) {
        self.constraint(name, ConeTag::NonNeg, vec![expr]);
    }

    /// Epigraph of the base-2 logarithm: declares `t` with `t ≤ log2(r)`
    /// through the exponential-cone row `(t·ln 2, 1, r)`, and returns the
    /// index of `t`. Used to maximize `Σ log2(r_k)` as `Σ t_k`.
    pub fn log2_epigraph(&mut self, name: impl Into<String>, r_var: usize) -> usize {
        let name = name.into();
        let t = self.scalar(format!("{name}_t"));
        self.constraint(
            format!("{name}_exp"),
            ConeTag::Exp,
            vec![
                LinExpr::term(t, std::f64::consts::LN_2),
                LinExpr::constant(1.0),
                LinExpr::var(r_var),
            ],
        );
        t
    }

    pub fn build(self) -> Result<ConicProgram, BuildError> {
        let mut seen = std::collections::HashSet::new();
        for b in &self.vars {
            if !seen.insert(b.name.clone()) {
                return Err(BuildError::DuplicateName(b.name.clone()));
            }
        }
        let mut program = ConicProgram {
            name: self.name,
            n_vars: self.n_vars,
            vars: self.vars,
            maximize: self.maximize,
            objective: self.objective,
            constraints: self.constraints,
        };
        program.objective.normalize();
        for (j, _) in &program.objective.terms {
            if *j >= program.n_vars {
                return Err(BuildError::VarOutOfRange(*j, program.n_vars));
            }
        }
        for c in &mut program.constraints {
            let n_rows = c.rows.len();
            let ok = match c.cone {
                ConeTag::Zero | ConeTag::NonNeg => n_rows >= 1,
                ConeTag::Soc => n_rows >= 2,
                ConeTag::Psd => {
                    // p(p+1)/2 rows for some integer p.
                    let p = ((-1.0 + (1.0 + 8.0 * n_rows as f64).sqrt()) / 2.0).round() as usize;
                    p * (p + 1) / 2 == n_rows && n_rows >= 1
                }
                ConeTag::Exp => n_rows == 3,
            };
            if !ok {
                return Err(BuildError::BadConstraint {
                    name: c.name.clone(),
                    reason: format!("{:?} cone cannot have {} rows", c.cone, n_rows),
                });
            }
            for row in &mut c.rows {
                row.normalize();
                for (j, _) in &row.terms {
                    if *j >= program.n_vars {
                        return Err(BuildError::VarOutOfRange(*j, program.n_vars));
                    }
                }
            }
        }
        Ok(program)
    }
}

/// Packed complex Hermitian matrix variable.
///
/// Layout of the `dim²` real parameters: the `dim` diagonal entries first,
/// then for each pair `i < j` (row-major) the pair `(Re W[i,j], Im W[i,j])`.
#[derive(Debug, Clone, Copy)]
pub struct HermitianVar {
    pub offset: usize,
    pub dim: usize,
}

impl HermitianVar {
    pub fn diag(&self, i: usize) -> usize {
        debug_assert!(i < self.dim);
        self.offset + i
    }

    fn pair_base(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < self.dim);
        // Pairs (0,1), (0,2), ..., (0,n-1), (1,2), ... in row-major order.
        let before = i * self.dim - i * (i + 1) / 2 + (j - i - 1);
        self.offset + self.dim + 2 * before
    }

    pub fn re(&self, i: usize, j: usize) -> usize {
        if i == j {
            self.diag(i)
        } else {
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            self.pair_base(a, b)
        }
    }

    /// Index of `Im W[i,j]` for `i < j`.
    pub fn im(&self, i: usize, j: usize) -> usize {
        debug_assert!(i != j);
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.pair_base(a, b) + 1
    }

    /// `Tr(A W)` as a linear expression in the packed parameters, for
    /// Hermitian `A` (the trace is then real):
    /// `Σ_i A_ii W_ii + Σ_{i<j} 2(Re A_ij · Re W_ij + Im A_ij · Im W_ij)`.
    pub fn trace_expr(&self, a: &DMatrix<Complex64>) -> LinExpr {
        debug_assert_eq!(a.nrows(), self.dim);
        debug_assert_eq!(a.ncols(), self.dim);
        let mut e = LinExpr::default();
        for i in 0..self.dim {
            e.push(self.diag(i), a[(i, i)].re);
        }
        for i in 0..self.dim {
            for j in i + 1..self.dim {
                e.push(self.re(i, j), 2.0 * a[(i, j)].re);
                e.push(self.im(i, j), 2.0 * a[(i, j)].im);
            }
        }
        e
    }

    /// `svec` rows of the real symmetric embedding
    /// `[[Re W, −Im W], [Im W, Re W]]` (dimension `2·dim`), as linear
    /// expressions of the packed parameters. Feeding these to a PSD cone
    /// constrains `W ⪰ 0` in the complex sense.
    pub fn embedding_svec_rows(&self) -> Vec<LinExpr> {
        let n = self.dim;
        let p = 2 * n;
        let sqrt2 = std::f64::consts::SQRT_2;
        // Entry (a, b) of the embedding as a (index, sign) pair, or None for
        // structural zeros (diagonal of the Im block).
        let entry = |a: usize, b: usize| -> Option<(usize, f64)> {
            let (bi, i) = (a / n, a % n);
            let (bj, j) = (b / n, b % n);
            match (bi, bj) {
                (0, 0) | (1, 1) => Some((self.re(i, j), 1.0)),
                // Top-right: −Q with Q = Im W (antisymmetric).
                (0, 1) => {
                    if i == j {
                        None
                    } else if i < j {
                        Some((self.im(i, j), -1.0))
                    } else {
                        Some((self.im(j, i), 1.0))
                    }
                }
                // Bottom-left: Q.
                (1, 0) => {
                    if i == j {
                        None
                    } else if i < j {
                        Some((self.im(i, j), 1.0))
                    } else {
                        Some((self.im(j, i), -1.0))
                    }
                }
                _ => unreachable!(),
            }
        };
        let mut rows = Vec::with_capacity(p * (p + 1) / 2);
        for b in 0..p {
            for a in b..p {
                let scale = if a == b { 1.0 } else { sqrt2 };
                let mut row = LinExpr::default();
                if let Some((idx, sign)) = entry(a, b) {
                    row.push(idx, sign * scale);
                }
                rows.push(row);
            }
        }
        rows
    }

    /// Reconstructs the complex Hermitian matrix from a primal solution.
    pub fn value(&self, x: &[f64]) -> DMatrix<Complex64> {
        let n = self.dim;
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(x[self.diag(i)], 0.0)
            } else if i < j {
                Complex64::new(x[self.re(i, j)], x[self.im(i, j)])
            } else {
                Complex64::new(x[self.re(j, i)], -x[self.im(j, i)])
            }
        })
    }
}

/// `svec` length for a `p×p` symmetric matrix.
pub fn svec_len(p: usize) -> usize {
    p * (p + 1) / 2
}

/// Matrix dimension from an `svec` length (must be triangular).
pub fn svec_dim(len: usize) -> usize {
    let p = ((-1.0 + (1.0 + 8.0 * len as f64).sqrt()) / 2.0).round() as usize;
    debug_assert_eq!(p * (p + 1) / 2, len);
    p
}

/// Unpacks `svec` (column-major lower triangle, √2-scaled off-diagonals)
/// into a dense symmetric matrix.
pub fn svec_to_mat(s: &[f64]) -> DMatrix<f64> {
    let p = svec_dim(s.len());
    let inv_sqrt2 = 1.0 / std::f64::consts::SQRT_2;
    let mut m = DMatrix::zeros(p, p);
    let mut idx = 0;
    for b in 0..p {
        for a in b..p {
            let v = if a == b { s[idx] } else { s[idx] * inv_sqrt2 };
            m[(a, b)] = v;
            m[(b, a)] = v;
            idx += 1;
        }
    }
    m
}

/// Packs a symmetric matrix into `svec` order.
pub fn mat_to_svec(m: &DMatrix<f64>) -> Vec<f64> {
    let p = m.nrows();
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut s = Vec::with_capacity(svec_len(p));
    for b in 0..p {
        for a in b..p {
            s.push(if a == b { m[(a, b)] } else { m[(a, b)] * sqrt2 });
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    #[test]
    fn builder_validates_dimensions() {
        let mut b = ProgramBuilder::new("bad_soc");
        let x = b.scalar("x");
        b.constraint("soc", ConeTag::Soc, vec![LinExpr::var(x)]);
        assert!(matches!(b.build(), Err(BuildError::BadConstraint { .. })));

        let mut b = ProgramBuilder::new("bad_var");
        let x = b.scalar("x");
        b.nonneg("row", LinExpr::term(x + 5, 1.0));
        assert!(matches!(b.build(), Err(BuildError::VarOutOfRange(..))));
    }

    #[test]
    fn trivial_program_builds() {
        let mut b = ProgramBuilder::new("trivial");
        let x = b.scalar("x");
        b.set_maximize(LinExpr::var(x));
        let p = b.build().unwrap();
        assert_eq!(p.n_vars, 1);
        assert_eq!(p.n_rows(), 0);
    }

    #[test]
    fn json_round_trip() {
        let mut b = ProgramBuilder::new("rt");
        let x = b.vector("x", 2);
        b.set_maximize(LinExpr::term(x, 1.0).plus(&LinExpr::term(x + 1, 1.0)));
        b.constraint(
            "ball",
            ConeTag::Soc,
            vec![
                LinExpr::constant(1.0),
                LinExpr::var(x),
                LinExpr::var(x + 1),
            ],
        );
        let p = b.build().unwrap();
        let p2 = ConicProgram::from_json(&p.to_json()).unwrap();
        assert_eq!(p, p2);
    }

    #[test]
    fn hermitian_trace_expr_matches_dense_arithmetic() {
        use num_complex::Complex64 as C;
        let dim = 3;
        let mut b = ProgramBuilder::new("tr");
        let w = b.hermitian_psd("W", dim);
        let p = b.build().unwrap();

        // A Hermitian test pair evaluated both ways.
        let a = DMatrix::from_row_slice(
            dim,
            dim,
            &[
                C::new(2.0, 0.0),
                C::new(1.0, -0.5),
                C::new(0.3, 0.2),
                C::new(1.0, 0.5),
                C::new(-1.0, 0.0),
                C::new(0.0, 1.5),
                C::new(0.3, -0.2),
                C::new(0.0, -1.5),
                C::new(4.0, 0.0),
            ],
        );
        let mut x = vec![0.0; p.n_vars];
        // W with arbitrary Hermitian entries.
        x[w.diag(0)] = 1.0;
        x[w.diag(1)] = 2.0;
        x[w.diag(2)] = 0.5;
        x[w.re(0, 1)] = 0.7;
        x[w.im(0, 1)] = -0.3;
        x[w.re(0, 2)] = -0.2;
        x[w.im(0, 2)] = 0.9;
        x[w.re(1, 2)] = 0.1;
        x[w.im(1, 2)] = 0.4;
        let wm = w.value(&x);
        let dense = (&a * &wm).trace();
        assert_relative_eq!(dense.im, 0.0, epsilon = 1e-14);
        assert_relative_eq!(w.trace_expr(&a).eval(&x), dense.re, max_relative = 1e-14);
    }

    #[test]
    fn embedding_is_psd_iff_hermitian_psd() {
        use num_complex::Complex64 as C;
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let dim = 3;
        let mut b = ProgramBuilder::new("embed");
        let w = b.hermitian_psd("W", dim);
        let program = b.build().unwrap();
        let rows = &program.constraints[0].rows;

        for trial in 0..40 {
            // Random Hermitian, PSD for even trials (Gram matrix).
            let g = DMatrix::from_fn(dim, dim, |_, _| {
                C::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
            });
            let herm = if trial % 2 == 0 {
                &g * g.adjoint()
            } else {
                &g + g.adjoint()
            };
            let mut x = vec![0.0; program.n_vars];
            for i in 0..dim {
                x[w.diag(i)] = herm[(i, i)].re;
                for j in i + 1..dim {
                    x[w.re(i, j)] = herm[(i, j)].re;
                    x[w.im(i, j)] = herm[(i, j)].im;
                }
            }
            let svec: Vec<f64> = rows.iter().map(|r| r.eval(&x)).collect();
            let embedded = svec_to_mat(&svec);
            let complex_eigs = nalgebra::SymmetricEigen::new(herm.clone()).eigenvalues;
            let real_eigs = nalgebra::SymmetricEigen::new(embedded).eigenvalues;
            let min_c = complex_eigs.iter().fold(f64::INFINITY, |a, &b| a.min(b));
            let min_r = real_eigs.iter().fold(f64::INFINITY, |a, &b| a.min(b));
            // Embedding duplicates the spectrum, so the minima agree.
            assert_relative_eq!(min_c, min_r, epsilon = 1e-10, max_relative = 1e-10);
        }
    }

    #[test]
    fn svec_round_trip() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, -1.0, 0.5, 3.0, 0.25, -1.0, 0.25, 1.0]);
        let s = mat_to_svec(&m);
        assert_eq!(s.len(), svec_len(3));
        let m2 = svec_to_mat(&s);
        assert_relative_eq!((m - m2).norm(), 0.0, epsilon = 1e-15);
        // svec preserves inner products: <svec(A), svec(B)> = Tr(AB).
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, -1.0]);
        let b = DMatrix::from_row_slice(2, 2, &[0.5, -0.25, -0.25, 3.0]);
        let dot: f64 = mat_to_svec(&a)
            .iter()
            .zip(mat_to_svec(&b))
            .map(|(x, y)| x * y)
            .sum();
        assert_relative_eq!(dot, (&a * &b).trace(), max_relative = 1e-14);
    }

    #[test]
    fn log2_epigraph_rows_encode_base2() {
        let mut b = ProgramBuilder::new("log");
        let r = b.scalar("r");
        let t = b.log2_epigraph("obj", r);
        let p = b.build().unwrap();
        let c = &p.constraints[0];
        assert_eq!(c.cone, ConeTag::Exp);
        // At r = 2 the tight epigraph value is t = 1: y·e^(x/y) = e^(ln2) = 2.
        let x = {
            let mut v = vec![0.0; p.n_vars];
            v[r] = 2.0;
            v[t] = 1.0;
            v
        };
        let vals: Vec<f64> = c.rows.iter().map(|row| row.eval(&x)).collect();
        assert_relative_eq!(vals[1] * (vals[0] / vals[1]).exp(), vals[2], max_relative = 1e-14);
    }

    #[test]
    fn hermitian_value_round_trip() {
        let mut b = ProgramBuilder::new("val");
        let w = b.hermitian_psd("W", 2);
        let p = b.build().unwrap();
        let mut x = vec![0.0; p.n_vars];
        x[w.diag(0)] = 1.5;
        x[w.diag(1)] = 2.5;
        x[w.re(0, 1)] = -0.25;
        x[w.im(0, 1)] = 0.75;
        let m = w.value(&x);
        assert_eq!(m[(0, 1)], num_complex::Complex64::new(-0.25, 0.75));
        assert_eq!(m[(1, 0)], num_complex::Complex64::new(-0.25, -0.75));
        let v: DVector<num_complex::Complex64> = DVector::from_element(2, num_complex::Complex64::new(1.0, 0.0));
        let q = (v.adjoint() * &m * &v)[(0, 0)];
        assert_relative_eq!(q.im, 0.0, epsilon = 1e-15);
    }
}
