//! The smoothed multinomial-logistic objective and its derivatives.
//!
//! For costs `h_i(x) = θ_i·η(x)` the soft assignment is
//! `p_i(x) = exp(-h_i/ε) / Σ_j exp(-h_j/ε)` and the objective is the mean
//! log-probability of the true label,
//!
//! ```text
//! Φ(θ) = (1/|Ω|) Σ_x [ -h_G(x)(x)/ε - log Σ_j exp(-h_j(x)/ε) ]  ≤ 0.
//! ```
//!
//! Every per-pixel evaluation subtracts the minimum cost before
//! exponentiating, so the winning term is `exp(0) = 1` and neither overflow
//! nor `log 0` can occur for finite inputs.
//!
//! Reductions over pixels are done in fixed chunks of [`CHUNK`] pixels whose
//! partial sums are combined in chunk order. [`Reduction::Parallel`] computes
//! the chunks on the rayon pool but combines them in the same order, so both
//! modes return bit-identical results.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisKind, DesignBasis, DesignMatrix};
use crate::error::{Error, Result};
use crate::geometry::{argmin_with_ties, GrainMap};

/// Pixels per reduction chunk.
pub const CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Gauge {
    Free,
    LastColumnZero,
}

impl Gauge {
    pub fn as_str(self) -> &'static str {
        match self {
            Gauge::Free => "free",
            Gauge::LastColumnZero => "last-column-zero",
        }
    }
}

/// Coefficients `θ ∈ ℝ^{K×N}`, one contiguous column per grain.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamMatrix {
    basis: DesignBasis,
    n_grains: usize,
    values: Vec<f64>,
    gauge: Gauge,
}

impl ParamMatrix {
    pub fn zeros(basis: &DesignBasis, n_grains: usize, gauge: Gauge) -> Self {
        ParamMatrix {
            basis: basis.clone(),
            n_grains,
            values: vec![0.0; basis.dim() * n_grains],
            gauge,
        }
    }

    pub fn from_columns(basis: &DesignBasis, columns: Vec<Vec<f64>>, gauge: Gauge) -> Result<Self> {
        let k = basis.dim();
        if let Some(c) = columns.iter().find(|c| c.len() != k) {
            return Err(Error::DimensionMismatch {
                what: "theta column length vs basis features",
                expected: k,
                got: c.len(),
            });
        }
        let n_grains = columns.len();
        Self::from_values(basis, n_grains, columns.concat(), gauge)
    }

    /// `values` holds the columns back to back.
    pub fn from_values(basis: &DesignBasis, n_grains: usize, values: Vec<f64>, gauge: Gauge) -> Result<Self> {
        if values.len() != basis.dim() * n_grains {
            return Err(Error::DimensionMismatch {
                what: "theta entries",
                expected: basis.dim() * n_grains,
                got: values.len(),
            });
        }
        let m = ParamMatrix {
            basis: basis.clone(),
            n_grains,
            values,
            gauge,
        };
        if gauge == Gauge::LastColumnZero && n_grains > 0 && m.column(n_grains - 1).iter().any(|&v| v != 0.0) {
            return Err(Error::invalid("gauge last-column-zero requires the last column to be zero"));
        }
        Ok(m)
    }

    pub fn basis(&self) -> &DesignBasis {
        &self.basis
    }

    pub fn kind(&self) -> BasisKind {
        self.basis.kind()
    }

    pub fn degree(&self) -> usize {
        self.basis.degree()
    }

    /// Row count `K_d`.
    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn n_grains(&self) -> usize {
        self.n_grains
    }

    pub fn gauge(&self) -> Gauge {
        self.gauge
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn column(&self, i: usize) -> &[f64] {
        let k = self.dim();
        &self.values[i * k..(i + 1) * k]
    }

    pub fn columns(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.dim())
    }

    /// Raw mutable access; the gauge flag is dropped to `Free`.
    pub fn values_mut(&mut self) -> &mut [f64] {
        self.gauge = Gauge::Free;
        &mut self.values
    }

    pub fn get(&self, row: usize, grain: usize) -> f64 {
        self.values[grain * self.dim() + row]
    }

    /// Costs `h_i = θ_i·η` for every grain.
    #[inline]
    pub fn costs_into(&self, eta: &[f64], out: &mut [f64]) {
        for (c, col) in out.iter_mut().zip(self.columns()) {
            *c = col.iter().zip(eta).map(|(a, b)| a * b).sum();
        }
    }

    /// Subtracts the last column from every column and marks the gauge fixed.
    pub fn regauged(&self) -> ParamMatrix {
        let last = self.column(self.n_grains - 1).to_vec();
        self.shifted(&last.iter().map(|v| -v).collect::<Vec<_>>())
            .with_gauge_unchecked(Gauge::LastColumnZero, true)
    }

    fn with_gauge_unchecked(mut self, gauge: Gauge, zero_last: bool) -> Self {
        if zero_last {
            let k = self.dim();
            let n = self.n_grains;
            self.values[(n - 1) * k..].iter_mut().for_each(|v| *v = 0.0);
        }
        self.gauge = gauge;
        self
    }

    /// `θ + (c, …, c)`. The result is gauge-free.
    pub fn shifted(&self, c: &[f64]) -> ParamMatrix {
        let mut out = self.clone();
        out.gauge = Gauge::Free;
        for col in out.values.chunks_exact_mut(self.dim()) {
            col.iter_mut().zip(c).for_each(|(a, b)| *a += b);
        }
        out
    }

    /// `s·θ`, keeping the gauge (a zero column stays zero).
    pub fn scaled(&self, s: f64) -> ParamMatrix {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// Same coefficients under a different basis label.
    pub(crate) fn with_basis(&self, basis: &DesignBasis, values: Vec<f64>) -> ParamMatrix {
        ParamMatrix {
            basis: basis.clone(),
            n_grains: self.n_grains,
            values,
            gauge: self.gauge,
        }
    }

    /// Embeds into a higher degree of the same basis kind, new rows zero.
    pub fn zero_padded(&self, degree: usize) -> Result<ParamMatrix> {
        if degree < self.degree() {
            return Err(Error::invalid("cannot pad to a lower degree"));
        }
        let basis = self.basis.with_degree(degree)?;
        let mut out = ParamMatrix::zeros(&basis, self.n_grains, self.gauge);
        let k_new = basis.dim();
        for (i, col) in self.columns().enumerate() {
            for (r, alpha) in self.basis.index_set().indices().iter().enumerate() {
                let pos = basis.index_set().position(*alpha).expect("lower degree index");
                out.values[i * k_new + pos] = col[r];
            }
        }
        Ok(out)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Softmax probabilities, stored pixel by pixel (`N` entries per pixel).
#[derive(Debug, Clone)]
pub struct SoftAssignment {
    pub probabilities: Vec<f64>,
    pub n_grains: usize,
    pub epsilon: f64,
}

impl SoftAssignment {
    pub fn pixel(&self, j: usize) -> &[f64] {
        &self.probabilities[j * self.n_grains..(j + 1) * self.n_grains]
    }

    pub fn n_points(&self) -> usize {
        self.probabilities.len() / self.n_grains
    }
}

/// How pixel sums are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    #[default]
    Sequential,
    Parallel,
}

/// Result of one pass over the pixels.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub phi: f64,
    /// Same layout as [`ParamMatrix::values`]; present when requested.
    pub gradient: Option<Vec<f64>>,
    /// Pixels whose hard label differs from the map.
    pub misassigned: usize,
    /// `ℰ_0(θ)`, the mean excess cost of the true label over the cheapest one.
    pub energy_zero: f64,
    pub n_points: usize,
}

impl Evaluation {
    pub fn error(&self) -> f64 {
        self.misassigned as f64 / self.n_points as f64
    }
}

fn check_inputs(theta: &ParamMatrix, design: &DesignMatrix, labels: &[usize], eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid(format!("epsilon must be positive and finite, got {eps}")));
    }
    if theta.dim() != design.dim() {
        return Err(Error::DimensionMismatch {
            what: "theta rows vs design features",
            expected: design.dim(),
            got: theta.dim(),
        });
    }
    if labels.len() != design.n_points() {
        return Err(Error::DimensionMismatch {
            what: "labels vs design points",
            expected: design.n_points(),
            got: labels.len(),
        });
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= theta.n_grains()) {
        return Err(Error::invalid(format!(
            "label {} exceeds theta column count {}",
            l + 1,
            theta.n_grains()
        )));
    }
    if !theta.is_finite() {
        return Err(Error::Numerical("theta has non-finite entries".into()));
    }
    Ok(())
}

struct Partial {
    phi: f64,
    excess: f64,
    grad: Vec<f64>,
    misassigned: usize,
}

fn eval_chunk(
    theta: &ParamMatrix,
    design: &DesignMatrix,
    labels: &[usize],
    eps: f64,
    range: std::ops::Range<usize>,
    want_grad: bool,
) -> Partial {
    let n = theta.n_grains();
    let k = theta.dim();
    let mut costs = vec![0.0; n];
    let mut expo = vec![0.0; n];
    let mut grad = if want_grad { vec![0.0; n * k] } else { Vec::new() };
    let mut phi = 0.0;
    let mut excess = 0.0;
    let mut misassigned = 0;
    let inv_eps = 1.0 / eps;
    for j in range {
        let eta = design.column(j);
        let g = labels[j];
        theta.costs_into(eta, &mut costs);
        let min = costs.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut sum = 0.0;
        for (e, &c) in expo.iter_mut().zip(&costs) {
            *e = (-(c - min) * inv_eps).exp();
            sum += *e;
        }
        excess += costs[g] - min;
        phi += -(costs[g] - min) * inv_eps - sum.ln();
        if argmin_with_ties(&costs) != g {
            misassigned += 1;
        }
        if want_grad {
            let inv_sum = 1.0 / sum;
            for (i, (&e, gcol)) in expo.iter().zip(grad.chunks_exact_mut(k)).enumerate() {
                let coef = e * inv_sum - if i == g { 1.0 } else { 0.0 };
                if coef != 0.0 {
                    gcol.iter_mut().zip(eta).for_each(|(a, b)| *a += coef * b);
                }
            }
        }
    }
    Partial {
        phi,
        excess,
        grad,
        misassigned,
    }
}

/// One pass computing `Φ`, optionally `∇Φ`, and the misassignment count.
pub fn evaluate(
    theta: &ParamMatrix,
    design: &DesignMatrix,
    labels: &[usize],
    eps: f64,
    want_grad: bool,
    reduction: Reduction,
) -> Result<Evaluation> {
    check_inputs(theta, design, labels, eps)?;
    let n_points = design.n_points();
    let ranges: Vec<_> = (0..n_points)
        .step_by(CHUNK)
        .map(|s| s..(s + CHUNK).min(n_points))
        .collect();
    let partials: Vec<Partial> = match reduction {
        Reduction::Sequential => ranges
            .into_iter()
            .map(|r| eval_chunk(theta, design, labels, eps, r, want_grad))
            .collect(),
        Reduction::Parallel => ranges
            .into_par_iter()
            .map(|r| eval_chunk(theta, design, labels, eps, r, want_grad))
            .collect(),
    };
    let mut phi = 0.0;
    let mut excess = 0.0;
    let mut misassigned = 0;
    let mut grad = if want_grad {
        vec![0.0; theta.values().len()]
    } else {
        Vec::new()
    };
    for p in &partials {
        phi += p.phi;
        excess += p.excess;
        misassigned += p.misassigned;
        grad.iter_mut().zip(&p.grad).for_each(|(a, b)| *a += b);
    }
    let inv_n = 1.0 / n_points as f64;
    phi *= inv_n;
    if !phi.is_finite() {
        return Err(Error::Numerical(format!("objective is not finite ({phi})")));
    }
    let gradient = if want_grad {
        let scale = inv_n / eps;
        grad.iter_mut().for_each(|v| *v *= scale);
        if theta.gauge() == Gauge::LastColumnZero {
            let k = theta.dim();
            let len = grad.len();
            grad[len - k..].iter_mut().for_each(|v| *v = 0.0);
        }
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("gradient is not finite".into()));
        }
        Some(grad)
    } else {
        None
    };
    Ok(Evaluation {
        phi,
        gradient,
        misassigned,
        energy_zero: excess * inv_n,
        n_points,
    })
}

/// Softmax of `-h/ε` at every pixel.
pub fn soft_assign(theta: &ParamMatrix, design: &DesignMatrix, eps: f64) -> Result<SoftAssignment> {
    let zeros = vec![0usize; design.n_points()];
    check_inputs(theta, design, &zeros, eps)?;
    let n = theta.n_grains();
    let mut probabilities = vec![0.0; n * design.n_points()];
    probabilities
        .par_chunks_exact_mut(n)
        .zip(design.columns().collect::<Vec<_>>())
        .for_each(|(out, eta)| {
            theta.costs_into(eta, out);
            let min = out.iter().cloned().fold(f64::INFINITY, f64::min);
            let mut sum = 0.0;
            for v in out.iter_mut() {
                *v = (-(*v - min) / eps).exp();
                sum += *v;
            }
            out.iter_mut().for_each(|v| *v /= sum);
        });
    Ok(SoftAssignment {
        probabilities,
        n_grains: n,
        epsilon: eps,
    })
}

/// `Φ_ε^G(θ)`.
pub fn objective(theta: &ParamMatrix, design: &DesignMatrix, map: &GrainMap, eps: f64) -> Result<f64> {
    Ok(evaluate(theta, design, map.labels(), eps, false, Reduction::Sequential)?.phi)
}

/// `∇Φ_ε^G(θ)` as a matrix with the layout of `θ`; the last column is zeroed
/// when `θ` carries the last-column-zero gauge.
pub fn gradient(theta: &ParamMatrix, design: &DesignMatrix, map: &GrainMap, eps: f64) -> Result<ParamMatrix> {
    let eval = evaluate(theta, design, map.labels(), eps, true, Reduction::Sequential)?;
    ParamMatrix::from_values(
        theta.basis(),
        theta.n_grains(),
        eval.gradient.expect("gradient requested"),
        Gauge::Free,
    )
}

/// Hessian block `∂²Φ/∂θ_i∂θ_k`. The Hessian does not depend on the labels.
pub fn hessian_block(
    theta: &ParamMatrix,
    design: &DesignMatrix,
    eps: f64,
    i: usize,
    k: usize,
) -> Result<DMatrix<f64>> {
    let n = theta.n_grains();
    if i >= n || k >= n {
        return Err(Error::invalid(format!("grain index out of range ({i}, {k}) for N = {n}")));
    }
    let soft = soft_assign(theta, design, eps)?;
    let dim = theta.dim();
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    for (j, eta) in design.columns().enumerate() {
        let p = soft.pixel(j);
        let w = p[i] * (if i == k { 1.0 } else { 0.0 } - p[k]);
        if w == 0.0 {
            continue;
        }
        for a in 0..dim {
            let wa = w * eta[a];
            for b in 0..dim {
                h[(a, b)] += wa * eta[b];
            }
        }
    }
    h *= -1.0 / (eps * eps * design.n_points() as f64);
    Ok(h)
}

/// Dense Hessian over the first `n_free` grains, block `(i, k)` at `(i·K, k·K)`.
pub fn hessian_dense(theta: &ParamMatrix, design: &DesignMatrix, eps: f64, n_free: usize) -> Result<DMatrix<f64>> {
    let dim = theta.dim();
    let mut h = DMatrix::<f64>::zeros(dim * n_free, dim * n_free);
    for i in 0..n_free {
        for k in 0..n_free {
            let block = hessian_block(theta, design, eps, i, k)?;
            h.view_mut((i * dim, k * dim), (dim, dim)).copy_from(&block);
        }
    }
    Ok(h)
}

/// `vᵀ ∇²Φ v` without forming the Hessian: minus the mean softmax variance of
/// `v_i·η(x)`, scaled by `1/ε²`.
pub fn directional_curvature(
    theta: &ParamMatrix,
    design: &DesignMatrix,
    eps: f64,
    direction: &[f64],
    reduction: Reduction,
) -> Result<f64> {
    let zeros = vec![0usize; design.n_points()];
    check_inputs(theta, design, &zeros, eps)?;
    if direction.len() != theta.values().len() {
        return Err(Error::DimensionMismatch {
            what: "direction length",
            expected: theta.values().len(),
            got: direction.len(),
        });
    }
    let dir = ParamMatrix::from_values(theta.basis(), theta.n_grains(), direction.to_vec(), Gauge::Free)?;
    let n = theta.n_grains();
    let chunk = |r: std::ops::Range<usize>| {
        let mut costs = vec![0.0; n];
        let mut u = vec![0.0; n];
        let mut acc = 0.0;
        for j in r {
            let eta = design.column(j);
            theta.costs_into(eta, &mut costs);
            dir.costs_into(eta, &mut u);
            let min = costs.iter().cloned().fold(f64::INFINITY, f64::min);
            let (mut s, mut m1, mut m2) = (0.0, 0.0, 0.0);
            for (&c, &ui) in costs.iter().zip(&u) {
                let e = (-(c - min) / eps).exp();
                s += e;
                m1 += e * ui;
                m2 += e * ui * ui;
            }
            let mean = m1 / s;
            acc += (m2 / s - mean * mean).max(0.0);
        }
        acc
    };
    let np = design.n_points();
    let ranges: Vec<_> = (0..np).step_by(CHUNK).map(|s| s..(s + CHUNK).min(np)).collect();
    let parts: Vec<f64> = match reduction {
        Reduction::Sequential => ranges.into_iter().map(chunk).collect(),
        Reduction::Parallel => ranges.into_par_iter().map(chunk).collect(),
    };
    let total: f64 = parts.iter().sum();
    Ok(-total / (eps * eps * np as f64))
}

/// `ℰ_ε = -ε Φ_ε`.
pub fn energy_eps(theta: &ParamMatrix, design: &DesignMatrix, map: &GrainMap, eps: f64) -> Result<f64> {
    Ok(-eps * objective(theta, design, map, eps)?)
}

/// `ℰ_0 = (1/|Ω|) Σ_x (h_G(x)(x) - min_j h_j(x)) ≥ 0`.
pub fn energy_zero(theta: &ParamMatrix, design: &DesignMatrix, map: &GrainMap) -> Result<f64> {
    check_inputs(theta, design, map.labels(), 1.0)?;
    let mut costs = vec![0.0; theta.n_grains()];
    let mut total = 0.0;
    for (eta, &g) in design.columns().zip(map.labels()) {
        theta.costs_into(eta, &mut costs);
        let min = costs.iter().cloned().fold(f64::INFINITY, f64::min);
        total += costs[g] - min;
    }
    Ok(total / design.n_points() as f64)
}
