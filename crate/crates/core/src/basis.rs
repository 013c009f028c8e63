//! Polynomial design functions on `[-1,1]²`.
//!
//! A degree-`d` basis has one feature per multi-index `α = (α₁, α₂)` with
//! `α₁ + α₂ ≤ d`. Features are either monomials `x₁^α₁ x₂^α₂` or tensor
//! Legendre products `P_α₁(x₁) P_α₂(x₂)`. Both span the same space, and
//! [`basis_change`] converts coefficient vectors between them exactly.
//!
//! Feature order is graded lexicographic: total degree ascending, then `α₁`
//! descending. For `d = 2` this is `1, x₁, x₂, x₁², x₁x₂, x₂²`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PixelGrid;

/// Name of the feature ordering, written into every coefficient file.
pub const ORDERING: &str = "graded-lex-a1-desc";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    Monomial,
    Legendre,
}

impl BasisKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BasisKind::Monomial => "monomial",
            BasisKind::Legendre => "legendre",
        }
    }
}

impl std::str::FromStr for BasisKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "monomial" => Ok(BasisKind::Monomial),
            "legendre" => Ok(BasisKind::Legendre),
            other => Err(Error::invalid(format!("unknown basis kind '{other}'"))),
        }
    }
}

impl std::fmt::Display for BasisKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Number of features of a total-degree-`d` basis in two variables.
pub fn feature_count(degree: usize) -> usize {
    (degree + 1) * (degree + 2) / 2
}

/// The ordered set of multi-indices `{α : |α| ≤ d}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiIndexSet {
    degree: usize,
    indices: Vec<[usize; 2]>,
}

impl MultiIndexSet {
    pub fn new(degree: usize) -> Self {
        let mut indices = Vec::with_capacity(feature_count(degree));
        for total in 0..=degree {
            for a1 in (0..=total).rev() {
                indices.push([a1, total - a1]);
            }
        }
        MultiIndexSet { degree, indices }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[[usize; 2]] {
        &self.indices
    }

    /// Row of multi-index `alpha`, if `|alpha| ≤ d`.
    pub fn position(&self, alpha: [usize; 2]) -> Option<usize> {
        let total = alpha[0] + alpha[1];
        if total > self.degree {
            return None;
        }
        // Blocks of total degree t start at t(t+1)/2; within a block α₁ runs t, t-1, ..., 0.
        Some(total * (total + 1) / 2 + (total - alpha[0]))
    }
}

/// Legendre polynomial `P_m(t)` by the three-term recurrence.
pub fn legendre_eval(m: usize, t: f64) -> f64 {
    match m {
        0 => 1.0,
        1 => t,
        _ => {
            let (mut prev, mut cur) = (1.0, t);
            for k in 1..m {
                let next = ((2 * k + 1) as f64 * t * cur - k as f64 * prev) / (k + 1) as f64;
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

/// A design function `η : [-1,1]² → ℝ^K`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DesignBasis {
    kind: BasisKind,
    index_set: MultiIndexSet,
}

impl DesignBasis {
    pub fn new(kind: BasisKind, degree: usize) -> Result<Self> {
        if degree == 0 {
            return Err(Error::invalid("polynomial degree must be at least 1"));
        }
        Ok(DesignBasis {
            kind,
            index_set: MultiIndexSet::new(degree),
        })
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn degree(&self) -> usize {
        self.index_set.degree()
    }

    /// Feature dimension `K_d`.
    pub fn dim(&self) -> usize {
        self.index_set.len()
    }

    pub fn index_set(&self) -> &MultiIndexSet {
        &self.index_set
    }

    /// Same kind, different degree.
    pub fn with_degree(&self, degree: usize) -> Result<Self> {
        DesignBasis::new(self.kind, degree)
    }

    pub fn eval(&self, x: [f64; 2]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(x, &mut out);
        out
    }

    pub fn eval_into(&self, x: [f64; 2], out: &mut [f64]) {
        let d = self.degree();
        let mut u = [[0.0f64; 2]; 32];
        let mut tables: Vec<[f64; 2]>;
        let uni: &mut [[f64; 2]] = if d < u.len() {
            &mut u[..=d]
        } else {
            tables = vec![[0.0; 2]; d + 1];
            &mut tables[..]
        };
        for c in 0..2 {
            match self.kind {
                BasisKind::Monomial => {
                    uni[0][c] = 1.0;
                    for k in 1..=d {
                        uni[k][c] = uni[k - 1][c] * x[c];
                    }
                }
                BasisKind::Legendre => {
                    uni[0][c] = 1.0;
                    if d >= 1 {
                        uni[1][c] = x[c];
                    }
                    for k in 1..d {
                        uni[k + 1][c] = ((2 * k + 1) as f64 * x[c] * uni[k][c]
                            - k as f64 * uni[k - 1][c])
                            / (k + 1) as f64;
                    }
                }
            }
        }
        for (slot, alpha) in out.iter_mut().zip(self.index_set.indices()) {
            *slot = uni[alpha[0]][0] * uni[alpha[1]][1];
        }
    }
}

/// Features evaluated at every point of a grid, stored pixel by pixel.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    basis: DesignBasis,
    n_points: usize,
    values: Vec<f64>,
}

impl DesignMatrix {
    pub fn assemble(basis: &DesignBasis, grid: &PixelGrid) -> Result<Self> {
        let k = basis.dim();
        let n = grid.len();
        let len = k
            .checked_mul(n)
            .ok_or(Error::Resource { required_bytes: usize::MAX })?;
        let mut values = Vec::new();
        values.try_reserve_exact(len).map_err(|_| Error::Resource {
            required_bytes: len.saturating_mul(std::mem::size_of::<f64>()),
        })?;
        values.resize(len, 0.0);
        for (col, &x) in values.chunks_exact_mut(k).zip(grid.points()) {
            basis.eval_into(x, col);
        }
        Ok(DesignMatrix {
            basis: basis.clone(),
            n_points: n,
            values,
        })
    }

    pub fn basis(&self) -> &DesignBasis {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// `η(x_j)`.
    pub fn column(&self, j: usize) -> &[f64] {
        let k = self.dim();
        &self.values[j * k..(j + 1) * k]
    }

    pub fn columns(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.dim())
    }

    /// Feature row `alpha_row` across all pixels.
    pub fn row(&self, alpha_row: usize) -> Vec<f64> {
        self.columns().map(|c| c[alpha_row]).collect()
    }

    /// `(1/|Ω|) Σ_x η(x) ⊗ η(x)`.
    pub fn gram(&self) -> DMatrix<f64> {
        let k = self.dim();
        let mut g = DMatrix::<f64>::zeros(k, k);
        for col in self.columns() {
            for a in 0..k {
                for b in a..k {
                    g[(a, b)] += col[a] * col[b];
                }
            }
        }
        let scale = 1.0 / self.n_points.max(1) as f64;
        for a in 0..k {
            for b in a..k {
                let v = g[(a, b)] * scale;
                g[(a, b)] = v;
                g[(b, a)] = v;
            }
        }
        g
    }
}

/// Condition number of the normalised Gram matrix; `+∞` when singular.
pub fn gram_condition(design: &DesignMatrix) -> Result<f64> {
    if design.dim() > design.n_points() {
        return Err(Error::invalid(format!(
            "Gram condition needs at least K_d = {} points, got {}",
            design.dim(),
            design.n_points()
        )));
    }
    let eig = SymmetricEigen::new(design.gram()).eigenvalues;
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= max * f64::EPSILON * design.dim() as f64 {
        return Ok(f64::INFINITY);
    }
    Ok(max / min)
}

/// Exact change of coefficients between the monomial and Legendre bases.
///
/// `to_legendre` maps monomial coefficients `θ` to Legendre coefficients `Tθ`
/// with `θ·η(x) = (Tθ)·η_L(x)`; `to_monomial` is `T⁻¹`. Both are computed in
/// rational arithmetic and rounded once.
#[derive(Debug, Clone)]
pub struct BasisChange {
    degree: usize,
    to_legendre: Vec<f64>,
    to_monomial: Vec<f64>,
}

/// Coefficients of `P_m` in powers of `t`: row `m`, column `k`.
fn legendre_monomial_table(degree: usize) -> Vec<Vec<BigRational>> {
    let zero = BigRational::zero();
    let mut table = vec![vec![zero; degree + 1]; degree + 1];
    table[0][0] = BigRational::one();
    if degree >= 1 {
        table[1][1] = BigRational::one();
    }
    for m in 1..degree {
        // (m+1) P_{m+1} = (2m+1) t P_m - m P_{m-1}
        let a = BigRational::new(BigInt::from(2 * m + 1), BigInt::from(m + 1));
        let b = BigRational::new(BigInt::from(m), BigInt::from(m + 1));
        for k in 0..=degree {
            let mut v = BigRational::zero();
            if k >= 1 {
                v += &a * &table[m][k - 1];
            }
            v -= &b * &table[m - 1][k];
            table[m + 1][k] = v;
        }
    }
    table
}

/// Inverse of the lower-triangular table: `t^k = Σ_m R[k][m] P_m(t)`.
fn monomial_legendre_table(lower: &[Vec<BigRational>]) -> Vec<Vec<BigRational>> {
    let n = lower.len();
    // P = L t  =>  t = L⁻¹ P, where L[m][k] is lower triangular in (m, k).
    let mut inv = vec![vec![BigRational::zero(); n]; n];
    for k in 0..n {
        // Solve Σ_m inv[k][m] L[m][j] = δ_kj for j = k, k-1, ..., 0.
        inv[k][k] = BigRational::one() / &lower[k][k];
        for j in (0..k).rev() {
            let mut acc = BigRational::zero();
            for m in (j + 1)..=k {
                acc += &inv[k][m] * &lower[m][j];
            }
            inv[k][j] = -acc / &lower[j][j];
        }
    }
    inv
}

impl BasisChange {
    pub fn new(degree: usize) -> Self {
        let set = MultiIndexSet::new(degree);
        let k = set.len();
        let l = legendre_monomial_table(degree);
        let r = monomial_legendre_table(&l);
        let mut to_legendre = vec![0.0; k * k];
        let mut to_monomial = vec![0.0; k * k];
        for (ia, a) in set.indices().iter().enumerate() {
            for (ib, b) in set.indices().iter().enumerate() {
                // Legendre coefficient α from monomial β: R[β₁][α₁] R[β₂][α₂].
                let t = &r[b[0]][a[0]] * &r[b[1]][a[1]];
                to_legendre[ia * k + ib] = t.to_f64().unwrap_or(f64::NAN);
                // Monomial coefficient α from Legendre β: L[β₁][α₁] L[β₂][α₂].
                let s = &l[b[0]][a[0]] * &l[b[1]][a[1]];
                to_monomial[ia * k + ib] = s.to_f64().unwrap_or(f64::NAN);
            }
        }
        BasisChange {
            degree,
            to_legendre,
            to_monomial,
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        feature_count(self.degree)
    }

    /// `T` as a dense row-major `K × K` matrix.
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim(), self.dim(), &self.to_legendre)
    }

    /// `T⁻¹` as a dense row-major `K × K` matrix.
    pub fn inverse_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim(), self.dim(), &self.to_monomial)
    }

    pub fn monomial_to_legendre(&self, theta: &[f64]) -> Vec<f64> {
        apply(&self.to_legendre, theta)
    }

    pub fn legendre_to_monomial(&self, theta: &[f64]) -> Vec<f64> {
        apply(&self.to_monomial, theta)
    }
}

fn apply(m: &[f64], v: &[f64]) -> Vec<f64> {
    let k = v.len();
    m.chunks_exact(k)
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

/// The basis-change matrix `T` for degree `d`.
pub fn basis_change(degree: usize) -> BasisChange {
    BasisChange::new(degree)
}
