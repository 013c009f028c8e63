//! Gauge-fixed L-BFGS ascent on the objective.
//!
//! The last grain's column is frozen at zero and the remaining `K × (N−1)`
//! coefficients are optimised directly. Because the columns of a
//! [`ParamMatrix`] are stored back to back, the free unknowns are simply the
//! leading `K·(N−1)` entries.
//!
//! The first step (and any step after a memory reset) uses a steepest-ascent
//! direction scaled by the exact curvature along the gradient. This makes the
//! whole iteration equivariant under `θ ↦ θ/ε`, so a run at `ε` from `θ'`
//! reproduces a run at `ε = 1` from `θ'/ε`.

use std::collections::VecDeque;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::basis::{BasisKind, DesignBasis, DesignMatrix};
use crate::error::{Error, Result};
use crate::geometry::{hard_assign_design, GrainMap};
use crate::heuristics::heuristic_guess;
use crate::metrics::compression;
use crate::objective::{directional_curvature, evaluate, Gauge, ParamMatrix, Reduction};

pub const WOLFE_C1: f64 = 1e-4;
pub const WOLFE_C2: f64 = 0.9;
pub const MAX_LINE_SEARCH_EVALS: usize = 25;

type Sample = (f64, f64, f64);

/// A smooth function to be maximised.
pub trait AscentProblem {
    /// Side information carried with each evaluation.
    type Aux: Clone;

    fn dim(&self) -> usize;

    fn evaluate(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>, Self::Aux)>;

    /// `dᵀ∇²F(x)d`, if available.
    fn curvature(&mut self, _x: &[f64], _d: &[f64]) -> Result<Option<f64>> {
        Ok(None)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(x: &[f64], t: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a + t * b).collect()
}

/// A point accepted by the line search.
#[derive(Debug, Clone)]
pub struct Accepted<A> {
    pub step: f64,
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub aux: A,
}

/// Outcome of a line search; `Failed` corresponds to a step length of zero.
#[derive(Debug, Clone)]
pub enum LineSearch<A> {
    Accepted(Accepted<A>, usize),
    Failed(usize),
}

impl<A> LineSearch<A> {
    pub fn step(&self) -> f64 {
        match self {
            LineSearch::Accepted(a, _) => a.step,
            LineSearch::Failed(_) => 0.0,
        }
    }

    pub fn evaluations(&self) -> usize {
        match self {
            LineSearch::Accepted(_, n) | LineSearch::Failed(n) => *n,
        }
    }
}

/// Minimiser of the cubic interpolating two points with slopes, clamped to
/// the interior of the bracket.
fn cubic_step(t0: f64, f0: f64, d0: f64, t1: f64, f1: f64, d1: f64) -> f64 {
    let (lo, hi) = if t0 < t1 { (t0, t1) } else { (t1, t0) };
    let width = hi - lo;
    let e1 = d0 + d1 - 3.0 * (f0 - f1) / (t0 - t1);
    let disc = e1 * e1 - d0 * d1;
    let candidate = if disc >= 0.0 {
        let e2 = (t1 - t0).signum() * disc.sqrt();
        t1 - (t1 - t0) * (d1 + e2 - e1) / (d1 - d0 + 2.0 * e2)
    } else {
        f64::NAN
    };
    if candidate.is_finite() {
        candidate.clamp(lo + 0.1 * width, hi - 0.1 * width)
    } else {
        0.5 * (lo + hi)
    }
}

/// Strong-Wolfe line search along an ascent direction, starting from `step`.
///
/// Accepts `t` with `F(x+td) ≥ F(x) + c₁t⟨∇F,d⟩` and
/// `|⟨∇F(x+td),d⟩| ≤ c₂⟨∇F(x),d⟩`, using at most
/// [`MAX_LINE_SEARCH_EVALS`] evaluations.
pub fn line_search<P: AscentProblem>(
    problem: &mut P,
    x: &[f64],
    value: f64,
    gradient: &[f64],
    direction: &[f64],
    step: f64,
) -> Result<LineSearch<P::Aux>> {
    // Work with f = −F so the textbook minimisation conditions apply.
    let f0 = -value;
    let d0 = -dot(gradient, direction);
    if d0.is_nan() || d0 >= 0.0 {
        return Ok(LineSearch::Failed(0));
    }
    let mut evals = 0;
    let sample = |problem: &mut P, t: f64, evals: &mut usize| -> Result<(f64, f64, Accepted<P::Aux>)> {
        *evals += 1;
        let xt = axpy(x, t, direction);
        let (v, g, aux) = problem.evaluate(&xt)?;
        let slope = -dot(&g, direction);
        Ok((
            -v,
            slope,
            Accepted {
                step: t,
                x: xt,
                value: v,
                gradient: g,
                aux,
            },
        ))
    };

    let (mut t_prev, mut f_prev, mut d_prev) = (0.0, f0, d0);
    let mut t = step;
    // (step, value, slope) at both ends.
    let mut bracket: Option<(Sample, Sample)> = None;
    while evals < MAX_LINE_SEARCH_EVALS {
        let (ft, dt, acc) = sample(problem, t, &mut evals)?;
        if ft > f0 + WOLFE_C1 * t * d0 || (t_prev > 0.0 && ft >= f_prev) {
            bracket = Some(((t_prev, f_prev, d_prev), (t, ft, dt)));
            break;
        }
        if dt.abs() <= -WOLFE_C2 * d0 {
            return Ok(LineSearch::Accepted(acc, evals));
        }
        if dt >= 0.0 {
            bracket = Some(((t, ft, dt), (t_prev, f_prev, d_prev)));
            break;
        }
        t_prev = t;
        f_prev = ft;
        d_prev = dt;
        t *= 2.0;
    }
    let Some((mut lo, mut hi)) = bracket else {
        return Ok(LineSearch::Failed(evals));
    };
    while evals < MAX_LINE_SEARCH_EVALS {
        let t = cubic_step(lo.0, lo.1, lo.2, hi.0, hi.1, hi.2);
        if !(t.is_finite()) || (hi.0 - lo.0).abs() <= f64::EPSILON * lo.0.abs().max(hi.0.abs()) {
            break;
        }
        let (ft, dt, acc) = sample(problem, t, &mut evals)?;
        if ft > f0 + WOLFE_C1 * t * d0 || ft >= lo.1 {
            hi = (t, ft, dt);
        } else {
            if dt.abs() <= -WOLFE_C2 * d0 {
                return Ok(LineSearch::Accepted(acc, evals));
            }
            if dt * (hi.0 - lo.0) >= 0.0 {
                hi = lo;
            }
            lo = (t, ft, dt);
        }
    }
    Ok(LineSearch::Failed(evals))
}

/// Why an ascent run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    MaxIterations,
    LineSearchFailure,
    Certified,
    ZeroGradient,
}

/// State passed to the per-iteration observer.
pub struct Iterate<'a, A> {
    pub iteration: usize,
    pub x: &'a [f64],
    pub value: f64,
    pub gradient: &'a [f64],
    pub aux: &'a A,
}

#[derive(Debug, Clone)]
pub struct AscentResult<A> {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub aux: A,
    pub iterations: usize,
    pub evaluations: usize,
    pub stop: StopReason,
}

#[derive(Debug, Clone, Copy)]
pub struct LbfgsOptions {
    pub max_iters: usize,
    pub memory: usize,
    /// Stop once the value exceeds this.
    pub value_target: Option<f64>,
}

/// Steepest ascent scaled by the curvature along the gradient, which is
/// invariant under rescaling of the unknowns.
fn scaled_gradient<P: AscentProblem>(problem: &mut P, x: &[f64], g: &[f64]) -> Result<Vec<f64>> {
    let gg = dot(g, g);
    let scale = match problem.curvature(x, g)? {
        Some(c) if c < 0.0 && c.is_finite() => gg / -c,
        _ => 1.0 / gg.sqrt(),
    };
    Ok(g.iter().map(|v| v * scale).collect())
}

/// Limited-memory BFGS ascent from `x0`.
pub fn maximize<P, F>(problem: &mut P, x0: Vec<f64>, opts: &LbfgsOptions, mut observe: F) -> Result<AscentResult<P::Aux>>
where
    P: AscentProblem,
    F: FnMut(&Iterate<'_, P::Aux>) -> Result<()>,
{
    let mut x = x0;
    let (mut value, mut grad, mut aux) = problem.evaluate(&x)?;
    let mut evaluations = 1;
    observe(&Iterate {
        iteration: 0,
        x: &x,
        value,
        gradient: &grad,
        aux: &aux,
    })?;
    // (s, y, 1/(yᵀs)) in minimisation convention: y = ∇f_new − ∇f_old = −(∇F_new − ∇F_old).
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut iterations = 0;
    let stop = loop {
        if opts.value_target.is_some_and(|target| value > target) {
            break StopReason::Certified;
        }
        if iterations >= opts.max_iters {
            break StopReason::MaxIterations;
        }
        if grad.iter().all(|&v| v == 0.0) {
            break StopReason::ZeroGradient;
        }
        let mut direction = if history.is_empty() {
            scaled_gradient(problem, &x, &grad)?
        } else {
            two_loop(&history, &grad)
        };
        let slope = dot(&grad, &direction);
        if slope.is_nan() || slope <= 0.0 {
            history.clear();
            direction = scaled_gradient(problem, &x, &grad)?;
        }
        let ls = line_search(problem, &x, value, &grad, &direction, 1.0)?;
        evaluations += ls.evaluations();
        let LineSearch::Accepted(acc, _) = ls else {
            break StopReason::LineSearchFailure;
        };
        let s: Vec<f64> = acc.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = grad.iter().zip(&acc.gradient).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 0.0 && sy.is_finite() {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        x = acc.x;
        value = acc.value;
        grad = acc.gradient;
        aux = acc.aux;
        iterations += 1;
        observe(&Iterate {
            iteration: iterations,
            x: &x,
            value,
            gradient: &grad,
            aux: &aux,
        })?;
    };
    Ok(AscentResult {
        x,
        value,
        gradient: grad,
        aux,
        iterations,
        evaluations,
        stop,
    })
}

/// `H∇F` for the inverse-Hessian approximation of `f = −F`; the result is an
/// ascent direction for `F`.
fn two_loop(history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>, grad: &[f64]) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alpha = vec![0.0; history.len()];
    for (i, (s, y, rho)) in history.iter().enumerate().rev() {
        alpha[i] = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(a, b)| *a -= alpha[i] * b);
    }
    let (s, y, _) = history.back().expect("non-empty history");
    let gamma = dot(s, y) / dot(y, y);
    q.iter_mut().for_each(|v| *v *= gamma);
    for (i, (s, y, rho)) in history.iter().enumerate() {
        let beta = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(a, b)| *a += (alpha[i] - beta) * b);
    }
    q
}

/// Starting point of a fit.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    Zero,
    Heuristic,
    Explicit(ParamMatrix),
}

impl Init {
    pub fn name(&self) -> &'static str {
        match self {
            Init::Zero => "zero",
            Init::Heuristic => "heuristic",
            Init::Explicit(_) => "explicit",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub eps: f64,
    pub max_iters: usize,
    pub memory: usize,
    pub init: Init,
    pub degree: usize,
    pub basis: BasisKind,
    /// Trajectories keep every `record_every`-th iterate plus the last one.
    pub record_every: usize,
    pub reduction: Reduction,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            eps: 1e-2,
            max_iters: 1000,
            memory: 10,
            init: Init::Zero,
            degree: 1,
            basis: BasisKind::Legendre,
            record_every: 1,
            reduction: Reduction::Sequential,
        }
    }
}

impl FitConfig {
    fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::invalid(format!("epsilon must be positive, got {}", self.eps)));
        }
        if self.memory == 0 || self.record_every == 0 {
            return Err(Error::invalid("memory and record_every must be positive"));
        }
        if self.degree == 0 {
            return Err(Error::invalid("degree must be at least 1"));
        }
        Ok(())
    }
}

/// Checks of the misassignment and ε-gap bounds over the recorded iterates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSummary {
    /// Largest absolute entry of the last column over all iterates.
    pub gauge_residual: f64,
    /// `Φ ≤ −log2·Err` held on every recorded iterate.
    pub phi_err_bound: bool,
    /// `0 ≤ ℰ_ε − ℰ_0 ≤ ε·log N` held on every recorded iterate.
    pub energy_gap_bound: bool,
    pub violations: usize,
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub theta: ParamMatrix,
    /// Iteration numbers of the recorded entries.
    pub recorded_iterations: Vec<usize>,
    pub phi: Vec<f64>,
    pub err: Vec<f64>,
    /// `ℰ_ε − ℰ_0` at the recorded iterates.
    pub energy_gap: Vec<f64>,
    pub phi_final: f64,
    pub acc_final: f64,
    pub err_final: f64,
    pub grad_norm_final: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub stop: StopReason,
    pub wall_clock_seconds: f64,
    pub bounds: BoundSummary,
    /// The features do not span `ℝ^K` on this point set, so maximisers are not unique.
    pub non_unique: bool,
    pub empty_grains: Vec<usize>,
    pub eps: f64,
    pub init: &'static str,
    pub n_grains: usize,
    pub n_points: usize,
    pub compression: f64,
}

#[derive(Debug, Clone, Copy)]
struct FitAux {
    misassigned: usize,
    energy_zero: f64,
}

struct FitProblem<'a> {
    design: &'a DesignMatrix,
    labels: &'a [usize],
    eps: f64,
    reduction: Reduction,
    basis: DesignBasis,
    n_grains: usize,
}

impl FitProblem<'_> {
    fn theta(&self, x: &[f64]) -> ParamMatrix {
        let mut values = x.to_vec();
        values.resize(self.basis.dim() * self.n_grains, 0.0);
        ParamMatrix::from_values(&self.basis, self.n_grains, values, Gauge::LastColumnZero)
            .expect("free unknowns have the right length")
    }
}

impl AscentProblem for FitProblem<'_> {
    type Aux = FitAux;

    fn dim(&self) -> usize {
        self.basis.dim() * (self.n_grains - 1)
    }

    fn evaluate(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>, FitAux)> {
        let theta = self.theta(x);
        let eval = evaluate(&theta, self.design, self.labels, self.eps, true, self.reduction)?;
        let mut g = eval.gradient.expect("gradient requested");
        g.truncate(self.dim());
        let aux = FitAux {
            misassigned: eval.misassigned,
            energy_zero: eval.energy_zero,
        };
        Ok((eval.phi, g, aux))
    }

    fn curvature(&mut self, x: &[f64], d: &[f64]) -> Result<Option<f64>> {
        let theta = self.theta(x);
        let mut dir = d.to_vec();
        dir.resize(theta.values().len(), 0.0);
        Ok(Some(directional_curvature(&theta, self.design, self.eps, &dir, self.reduction)?))
    }
}

/// Smallest Gram eigenvalue relative to the largest below which the design is rank deficient.
const RANK_TOLERANCE: f64 = 1e-12;

fn spans_feature_space(design: &DesignMatrix) -> bool {
    if design.n_points() < design.dim() {
        return false;
    }
    let eig = nalgebra::SymmetricEigen::new(design.gram()).eigenvalues;
    let max = eig.iter().cloned().fold(0.0, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    min > RANK_TOLERANCE * max
}

fn initial_theta(map: &GrainMap, config: &FitConfig, basis: &DesignBasis) -> Result<(ParamMatrix, Vec<usize>)> {
    let n = map.n_grains();
    let sizes = map.grain_sizes();
    let empty: Vec<usize> = (0..n).filter(|&i| sizes[i] == 0).collect();
    let theta = match &config.init {
        Init::Zero => ParamMatrix::zeros(basis, n, Gauge::LastColumnZero),
        Init::Heuristic => heuristic_guess(map, config.degree, config.basis)?.theta,
        Init::Explicit(t) => {
            if t.n_grains() != n {
                return Err(Error::DimensionMismatch {
                    what: "initial theta columns vs grains",
                    expected: n,
                    got: t.n_grains(),
                });
            }
            if t.degree() != config.degree {
                return Err(Error::invalid(format!(
                    "initial theta has degree {}, fit uses degree {}",
                    t.degree(),
                    config.degree
                )));
            }
            crate::conversions::coeffs_to_basis(t, config.basis)?.regauged()
        }
    };
    Ok((theta, empty))
}

/// Maximises the objective for `map` under `config`.
///
/// The run is deterministic for a given input and configuration. It ends
/// after `max_iters` accepted steps, on line-search failure, or once
/// `Φ > −10⁻¹²·log 2/|Ω|`, which certifies zero misassignment.
pub fn fit(map: &GrainMap, config: &FitConfig) -> Result<FitReport> {
    config.validate()?;
    let start = Instant::now();
    let basis = DesignBasis::new(config.basis, config.degree)?;
    let design = DesignMatrix::assemble(&basis, map.grid())?;
    let (theta0, empty_grains) = initial_theta(map, config, &basis)?;
    let n = map.n_grains();
    let n_points = map.len();
    let log_n = (n as f64).ln();
    let ln2 = std::f64::consts::LN_2;
    let eps = config.eps;

    let mut problem = FitProblem {
        design: &design,
        labels: map.labels(),
        eps,
        reduction: config.reduction,
        basis: basis.clone(),
        n_grains: n,
    };
    let x0 = theta0.values()[..problem.dim()].to_vec();

    let mut recorded_iterations = Vec::new();
    let mut phi = Vec::new();
    let mut err = Vec::new();
    let mut energy_gap = Vec::new();
    let mut violations = 0usize;
    let mut phi_err_ok = true;
    let mut gap_ok = true;
    let last_recorded = std::cell::Cell::new(usize::MAX);
    let mut record = |it: usize, value: f64, aux: &FitAux| {
        let e = aux.misassigned as f64 / n_points as f64;
        let gap = -eps * value - aux.energy_zero;
        let phi_bound = value <= -ln2 * e + 1e-12;
        let gap_bound = gap >= -1e-12 && gap <= eps * log_n + 1e-12;
        debug_assert!(phi_bound, "Φ = {value} exceeds −log2·Err = {}", -ln2 * e);
        if !phi_bound {
            phi_err_ok = false;
            violations += 1;
        }
        if !gap_bound {
            gap_ok = false;
            violations += 1;
        }
        recorded_iterations.push(it);
        phi.push(value);
        err.push(e);
        energy_gap.push(gap);
        last_recorded.set(it);
    };

    let opts = LbfgsOptions {
        max_iters: config.max_iters,
        memory: config.memory,
        value_target: Some(-1e-12 * ln2 / n_points as f64),
    };
    let every = config.record_every;
    let result = maximize(&mut problem, x0, &opts, |it| {
        if !(it.value.is_finite() && it.gradient.iter().all(|g| g.is_finite())) {
            let norm = it.x.iter().map(|v| v * v).sum::<f64>().sqrt();
            return Err(Error::Numerical(format!(
                "non-finite state at iteration {}: phi = {}, |theta| = {norm}",
                it.iteration, it.value
            )));
        }
        if it.iteration % every == 0 {
            record(it.iteration, it.value, it.aux);
        }
        Ok(())
    })
    .map_err(|e| match e {
        Error::Numerical(msg) => Error::Numerical(format!("fit aborted: {msg}")),
        other => other,
    })?;
    if last_recorded.get() != result.iterations {
        record(result.iterations, result.value, &result.aux);
    }

    let theta = problem.theta(&result.x);
    let hard = hard_assign_design(&theta, &design)?;
    let wrong = hard.iter().zip(map.labels()).filter(|(a, b)| a != b).count();
    let err_final = wrong as f64 / n_points as f64;
    let grad_norm_final = result.gradient.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(FitReport {
        recorded_iterations,
        phi,
        err,
        energy_gap,
        phi_final: result.value,
        acc_final: 1.0 - err_final,
        err_final,
        grad_norm_final,
        iterations: result.iterations,
        evaluations: result.evaluations,
        stop: result.stop,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        bounds: BoundSummary {
            gauge_residual: theta.column(n - 1).iter().fold(0.0, |m, v| m.max(v.abs())),
            phi_err_bound: phi_err_ok,
            energy_gap_bound: gap_ok,
            violations,
        },
        non_unique: !spans_feature_space(&design),
        empty_grains,
        eps,
        init: config.init.name(),
        n_grains: n,
        n_points,
        compression: compression(config.degree, n, n_points),
        theta,
    })
}

/// Zero initial coefficients in the last-column-zero gauge.
pub fn init_zero(degree: usize, n_grains: usize, kind: BasisKind) -> Result<ParamMatrix> {
    Ok(ParamMatrix::zeros(&DesignBasis::new(kind, degree)?, n_grains, Gauge::LastColumnZero))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate_pd, make_grid, PhysicalPD, PixelGrid};
    use crate::objective::{gradient, objective, soft_assign};

    /// F(x) = −½ Σ a_i (x_i − c_i)².
    struct Quadratic {
        a: Vec<f64>,
        c: Vec<f64>,
    }

    impl AscentProblem for Quadratic {
        type Aux = ();
        fn dim(&self) -> usize {
            self.a.len()
        }
        fn evaluate(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>, ())> {
            let mut v = 0.0;
            let mut g = vec![0.0; x.len()];
            for i in 0..x.len() {
                let r = x[i] - self.c[i];
                v -= 0.5 * self.a[i] * r * r;
                g[i] = -self.a[i] * r;
            }
            Ok((v, g, ()))
        }
    }

    #[test]
    fn newton_step_accepted_first_try() {
        let mut q = Quadratic {
            a: vec![2.0, 2.0, 2.0],
            c: vec![1.0, -2.0, 0.5],
        };
        let x = vec![0.0; 3];
        let (v, g, _) = q.evaluate(&x).unwrap();
        let newton: Vec<f64> = g.iter().map(|gi| gi / 2.0).collect();
        let ls = line_search(&mut q, &x, v, &g, &newton, 1.0).unwrap();
        assert_eq!(ls.evaluations(), 1);
        assert_eq!(ls.step(), 1.0);
    }

    #[test]
    fn accepted_step_satisfies_sufficient_increase() {
        let mut q = Quadratic {
            a: vec![1.0, 10.0, 100.0],
            c: vec![1.0, 1.0, 1.0],
        };
        let x = vec![0.0; 3];
        let (v, g, _) = q.evaluate(&x).unwrap();
        for scale in [1e-3, 0.1, 1.0, 10.0, 1e3] {
            let dir: Vec<f64> = g.iter().map(|gi| gi * scale).collect();
            match line_search(&mut q, &x, v, &g, &dir, 1.0).unwrap() {
                LineSearch::Accepted(acc, n) => {
                    assert!(n <= MAX_LINE_SEARCH_EVALS);
                    assert!(acc.value >= v + WOLFE_C1 * acc.step * dot(&g, &dir));
                    assert!(dot(&acc.gradient, &dir).abs() <= WOLFE_C2 * dot(&g, &dir));
                }
                LineSearch::Failed(_) => panic!("line search failed at scale {scale}"),
            }
        }
    }

    #[test]
    fn descent_direction_is_rejected() {
        let mut q = Quadratic { a: vec![1.0], c: vec![1.0] };
        let (v, g, _) = q.evaluate(&[0.0]).unwrap();
        let ls = line_search(&mut q, &[0.0], v, &g, &[-1.0], 1.0).unwrap();
        assert_eq!(ls.step(), 0.0);
    }

    #[test]
    fn lbfgs_solves_ill_conditioned_quadratic() {
        let mut q = Quadratic {
            a: (0..20).map(|i| 10f64.powf(i as f64 / 5.0)).collect(),
            c: (0..20).map(|i| (i as f64).sin()).collect(),
        };
        let opts = LbfgsOptions {
            max_iters: 500,
            memory: 10,
            value_target: Some(-1e-20),
        };
        let res = maximize(&mut q, vec![0.0; 20], &opts, |_| Ok(())).unwrap();
        assert!(res.value > -1e-12, "{}", res.value);
    }

    #[test]
    fn init_zero_is_fully_ambiguous() {
        let grid = make_grid(3).unwrap();
        let labels = (0..36).map(|i| i % 4).collect();
        let map = GrainMap::new(grid.clone(), labels, 4).unwrap();
        for kind in [BasisKind::Monomial, BasisKind::Legendre] {
            let theta = init_zero(3, 4, kind).unwrap();
            let design = DesignMatrix::assemble(theta.basis(), &grid).unwrap();
            let soft = soft_assign(&theta, &design, 0.01).unwrap();
            assert!(soft.probabilities.iter().all(|&p| p == 0.25));
            let phi = objective(&theta, &design, &map, 0.01).unwrap();
            assert!((phi + 4f64.ln()).abs() < 1e-14);
            let free = ParamMatrix::zeros(theta.basis(), 4, Gauge::Free);
            let g = gradient(&free, &design, &map, 0.01).unwrap();
            for r in 0..g.dim() {
                let s: f64 = (0..4).map(|i| g.get(r, i)).sum();
                assert!(s.abs() < 1e-12);
            }
        }
    }

    fn two_grain_map(m: usize) -> GrainMap {
        let pd = PhysicalPD {
            seeds: vec![[-0.4, 0.1], [0.5, -0.2]],
            weights: vec![0.0, 0.0],
        };
        generate_pd(&pd, &make_grid(m).unwrap()).unwrap()
    }

    #[test]
    fn one_pixel_problem_ascends_to_zero() {
        let grid = PixelGrid::from_points(vec![[0.3, -0.6]]).unwrap();
        let map = GrainMap::new(grid, vec![0], 2).unwrap();
        let config = FitConfig {
            eps: 1.0,
            max_iters: 30,
            basis: BasisKind::Monomial,
            ..FitConfig::default()
        };
        let rep = fit(&map, &config).unwrap();
        assert!(rep.phi.windows(2).all(|w| w[1] >= w[0]));
        assert!(rep.phi_final > rep.phi[0]);
        assert!(rep.phi_final > -1e-3);
        // Cost of the true label decreases relative to the other grain.
        let c = rep.theta.column(0);
        assert!(c[0] + c[1] * 0.3 - c[2] * 0.6 < 0.0);
        assert!(rep.non_unique);
    }

    #[test]
    fn gauge_and_monotonicity_hold() {
        let map = two_grain_map(8);
        let config = FitConfig {
            degree: 2,
            max_iters: 60,
            ..FitConfig::default()
        };
        let rep = fit(&map, &config).unwrap();
        assert_eq!(rep.bounds.gauge_residual, 0.0);
        assert!(rep.phi.windows(2).all(|w| w[1] >= w[0]));
        assert!(rep.bounds.phi_err_bound && rep.bounds.energy_gap_bound);
        assert!((rep.acc_final + rep.err_final - 1.0).abs() < 1e-15);
    }

    #[test]
    fn separable_runaway_stays_finite() {
        let map = two_grain_map(6);
        let config = FitConfig {
            max_iters: 2000,
            ..FitConfig::default()
        };
        let rep = fit(&map, &config).unwrap();
        assert!(rep.theta.is_finite());
        assert_eq!(rep.err_final, 0.0);
        assert!(rep.phi.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn perfect_start_stays_perfect() {
        let map = two_grain_map(8);
        let pd = PhysicalPD {
            seeds: vec![[-0.4, 0.1], [0.5, -0.2]],
            weights: vec![0.0, 0.0],
        };
        let theta = crate::conversions::pd_to_theta(&pd).unwrap();
        let config = FitConfig {
            eps: 0.05,
            max_iters: 40,
            basis: BasisKind::Monomial,
            init: Init::Explicit(theta),
            ..FitConfig::default()
        };
        let rep = fit(&map, &config).unwrap();
        // Intermediate iterates may flip a boundary pixel; the endpoints may not.
        assert_eq!(rep.err[0], 0.0);
        assert_eq!(rep.err_final, 0.0);
        assert!(rep.phi.windows(2).all(|w| w[1] >= w[0]));
        assert!(rep.phi_final > rep.phi[0]);
    }

    #[test]
    fn rejects_bad_config() {
        let map = two_grain_map(2);
        assert!(fit(&map, &FitConfig { eps: 0.0, ..FitConfig::default() }).is_err());
        assert!(fit(&map, &FitConfig { degree: 0, ..FitConfig::default() }).is_err());
        let wrong = init_zero(2, 3, BasisKind::Legendre).unwrap();
        assert!(fit(
            &map,
            &FitConfig {
                init: Init::Explicit(wrong),
                ..FitConfig::default()
            }
        )
        .is_err());
    }
}
