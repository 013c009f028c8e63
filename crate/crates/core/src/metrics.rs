//! Compression ratios, bound checks and degree sweeps.

use serde::{Deserialize, Serialize};

use crate::basis::{feature_count, DesignMatrix};
use crate::error::{Error, Result};
use crate::geometry::{hard_assign_design, GrainMap};
use crate::objective::{evaluate, ParamMatrix, Reduction};
use crate::optimizer::{fit, FitConfig, FitReport, Init};

/// Slack used by every bound check.
pub const BOUND_SLACK: f64 = 1e-12;

/// Stored coefficients relative to a naive `(x₁, x₂, label)` pixel list:
/// `K_d·N / (3|Ω|)`.
pub fn compression(degree: usize, n_grains: usize, n_points: usize) -> f64 {
    (feature_count(degree) * n_grains) as f64 / (3 * n_points) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressionEntry {
    pub d: usize,
    pub n: usize,
    pub omega: usize,
    pub k_d: usize,
    pub ratio: f64,
}

pub fn compression_entry(d: usize, n: usize, omega: usize) -> CompressionEntry {
    CompressionEntry {
        d,
        n,
        omega,
        k_d: feature_count(d),
        ratio: compression(d, n, omega),
    }
}

/// A ratio as a percentage rounded half-to-even to two decimals, e.g. `"0.39%"`.
pub fn format_percent(ratio: f64) -> String {
    let hundredths = (ratio * 1e4).round_ties_even();
    format!("{:.2}%", hundredths / 100.0)
}

/// Results of the misassignment and ε-gap bounds at one `θ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub phi: f64,
    pub err: f64,
    pub energy_eps: f64,
    pub energy_zero: f64,
    /// `Φ ≤ −log 2 · Err`.
    pub phi_err_bound: bool,
    /// `0 ≤ ℰ_ε − ℰ_0 ≤ ε log N`.
    pub energy_gap_bound: bool,
    /// `Φ > −log 2/|Ω|`, which forces `Err = 0`.
    pub certifies_zero_error: bool,
    /// When certified, whether `Err = 0` indeed holds.
    pub certification_holds: bool,
}

impl BoundReport {
    pub fn all_pass(&self) -> bool {
        self.phi_err_bound && self.energy_gap_bound && self.certification_holds
    }
}

pub fn bound_report(theta: &ParamMatrix, map: &GrainMap, design: &DesignMatrix, eps: f64) -> Result<BoundReport> {
    let eval = evaluate(theta, design, map.labels(), eps, false, Reduction::Sequential)?;
    let ln2 = std::f64::consts::LN_2;
    let err = eval.error();
    let energy_eps = -eps * eval.phi;
    let gap = energy_eps - eval.energy_zero;
    let certifies = eval.phi > -ln2 / eval.n_points as f64;
    Ok(BoundReport {
        phi: eval.phi,
        err,
        energy_eps,
        energy_zero: eval.energy_zero,
        phi_err_bound: eval.phi <= -ln2 * err + BOUND_SLACK,
        energy_gap_bound: gap >= -BOUND_SLACK && gap <= eps * (map.n_grains() as f64).ln() + BOUND_SLACK,
        certifies_zero_error: certifies,
        certification_holds: !certifies || eval.misassigned == 0,
    })
}

/// One row of a degree sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub d: usize,
    pub k_d: usize,
    pub phi_final: f64,
    pub acc_final: f64,
    pub err_final: f64,
    pub compr: f64,
}

impl SweepRow {
    pub fn from_report(degree: usize, report: &FitReport) -> Self {
        SweepRow {
            d: degree,
            k_d: feature_count(degree),
            phi_final: report.phi_final,
            acc_final: report.acc_final,
            err_final: report.err_final,
            compr: report.compression,
        }
    }
}

/// Fits every degree in `degrees` with the protocol of `template`.
///
/// With `warm_start`, each degree after the first starts from the previous
/// optimum padded with zero coefficients. Since that point is admissible at
/// the higher degree and the ascent is monotone, the fitted objective can
/// then only grow with the degree.
pub fn degree_sweep(
    map: &GrainMap,
    degrees: &[usize],
    template: &FitConfig,
    warm_start: bool,
) -> Result<Vec<(SweepRow, FitReport)>> {
    if degrees.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("degrees must be strictly increasing"));
    }
    let mut rows: Vec<(SweepRow, FitReport)> = Vec::with_capacity(degrees.len());
    for &d in degrees {
        let init = match rows.last() {
            Some((_, prev)) if warm_start => Init::Explicit(prev.theta.zero_padded(d)?),
            _ => template.init.clone(),
        };
        let config = FitConfig {
            degree: d,
            init,
            ..template.clone()
        };
        let report = fit(map, &config)?;
        rows.push((SweepRow::from_report(d, &report), report));
    }
    Ok(rows)
}

/// `Φ_{d'}(pad(θ)) − Φ_d(θ)` for a target degree `d' ≥ d`; zero up to rounding.
pub fn embedding_gap(theta: &ParamMatrix, map: &GrainMap, eps: f64, degree: usize) -> Result<f64> {
    let low = DesignMatrix::assemble(theta.basis(), map.grid())?;
    let padded = theta.zero_padded(degree)?;
    let high = DesignMatrix::assemble(padded.basis(), map.grid())?;
    let a = evaluate(theta, &low, map.labels(), eps, false, Reduction::Sequential)?.phi;
    let b = evaluate(&padded, &high, map.labels(), eps, false, Reduction::Sequential)?.phi;
    Ok(b - a)
}

/// Hard labels of `θ` together with their accuracy against `map`.
pub fn reconstruction(theta: &ParamMatrix, map: &GrainMap) -> Result<(Vec<usize>, f64)> {
    let design = DesignMatrix::assemble(theta.basis(), map.grid())?;
    let labels = hard_assign_design(theta, &design)?;
    let (acc, _) = crate::geometry::accuracy_and_error(map, &labels)?;
    Ok((labels, acc))
}
