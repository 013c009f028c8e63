//! Moment-based initial guess.
//!
//! Each grain contributes its centroid `y'_i`, its central second-moment
//! matrix `B'_i`, the anisotropy `A'_i = B'_i⁻¹` (identity for degree 1) and
//! the weight `w'_i = √det(A'_i)·|G_i| / (|Ω|π)`. The resulting physical
//! diagram is linearised in the monomial basis, padded with zero
//! higher-degree rows, moved to the requested basis and gauge-fixed.

use crate::basis::{BasisKind, DesignBasis};
use crate::conversions::{apd_to_theta, coeffs_to_basis, pd_to_theta};
use crate::error::{Error, Result};
use crate::geometry::{sym2_eigenvalues, GrainMap, PhysicalAPD, PhysicalPD};
use crate::objective::ParamMatrix;

/// `B'` eigenvalue below which the matrix is regularised before inversion.
pub const DEGENERATE_EIGENVALUE: f64 = 1e-10;
/// Relative size of the ridge added to degenerate second-moment matrices.
pub const RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GrainMoments {
    pub count: usize,
    pub centroid: [f64; 2],
    /// Row-major central second moments; `None` for an empty grain.
    pub second_moment: Option<[f64; 4]>,
}

impl GrainMoments {
    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Singular or nearly singular `B'` (always true for one-pixel grains).
    pub fn is_degenerate(&self) -> bool {
        match self.second_moment {
            Some(b) => sym2_eigenvalues(&b).0 < DEGENERATE_EIGENVALUE,
            None => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentSummary {
    pub grains: Vec<GrainMoments>,
    pub n_points: usize,
}

/// Per-grain pixel counts, centroids and central second-moment matrices.
pub fn moments(map: &GrainMap) -> MomentSummary {
    let n = map.n_grains();
    let mut count = vec![0usize; n];
    let mut sum = vec![[0.0f64; 2]; n];
    for (p, &l) in map.grid().points().iter().zip(map.labels()) {
        count[l] += 1;
        sum[l][0] += p[0];
        sum[l][1] += p[1];
    }
    let centroid: Vec<[f64; 2]> = sum
        .iter()
        .zip(&count)
        .map(|(s, &c)| {
            if c == 0 {
                [0.0, 0.0]
            } else {
                [s[0] / c as f64, s[1] / c as f64]
            }
        })
        .collect();
    let mut second = vec![[0.0f64; 3]; n];
    for (p, &l) in map.grid().points().iter().zip(map.labels()) {
        let (d0, d1) = (p[0] - centroid[l][0], p[1] - centroid[l][1]);
        second[l][0] += d0 * d0;
        second[l][1] += d0 * d1;
        second[l][2] += d1 * d1;
    }
    let grains = (0..n)
        .map(|i| {
            let c = count[i];
            let second_moment = (c > 0).then(|| {
                let s = second[i];
                let k = c as f64;
                [s[0] / k, s[1] / k, s[1] / k, s[2] / k]
            });
            GrainMoments {
                count: c,
                centroid: centroid[i],
                second_moment,
            }
        })
        .collect();
    MomentSummary {
        grains,
        n_points: map.len(),
    }
}

fn invert2(a: &[f64; 4]) -> [f64; 4] {
    let det = a[0] * a[3] - a[1] * a[2];
    [a[3] / det, -a[1] / det, -a[2] / det, a[0] / det]
}

/// `A'_i` from `B'_i`, regularising degenerate matrices with a trace-scaled ridge.
fn anisotropy_guess(g: &GrainMoments) -> [f64; 4] {
    match g.second_moment {
        None => [1.0, 0.0, 0.0, 1.0],
        Some(b) => {
            let b = if sym2_eigenvalues(&b).0 < DEGENERATE_EIGENVALUE {
                let tr = b[0] + b[3];
                let ridge = RIDGE * if tr > 0.0 { tr } else { 1.0 };
                [b[0] + ridge, b[1], b[2], b[3] + ridge]
            } else {
                b
            };
            invert2(&b)
        }
    }
}

/// Initial guess together with diagnostics about degenerate grains.
#[derive(Debug, Clone)]
pub struct HeuristicGuess {
    /// Gauge-fixed coefficients in the requested basis and degree.
    pub theta: ParamMatrix,
    /// The same guess before gauge fixing.
    pub theta_free: ParamMatrix,
    pub moments: MomentSummary,
    /// Zero-based indices of grains without pixels.
    pub empty_grains: Vec<usize>,
    /// Zero-based indices of grains whose `B'` was regularised (degree ≥ 2 only).
    pub regularised_grains: Vec<usize>,
}

pub fn heuristic_guess(map: &GrainMap, degree: usize, kind: BasisKind) -> Result<HeuristicGuess> {
    if degree == 0 {
        return Err(Error::invalid("heuristic initialisation needs degree ≥ 1"));
    }
    let summary = moments(map);
    let omega = summary.n_points as f64;
    let pi = std::f64::consts::PI;
    let empty_grains: Vec<usize> = summary
        .grains
        .iter()
        .enumerate()
        .filter(|(_, g)| g.is_empty())
        .map(|(i, _)| i)
        .collect();
    let seeds: Vec<[f64; 2]> = summary.grains.iter().map(|g| g.centroid).collect();

    let (mono, regularised_grains) = if degree == 1 {
        let weights = summary
            .grains
            .iter()
            .map(|g| g.count as f64 / (omega * pi))
            .collect();
        (pd_to_theta(&PhysicalPD { seeds, weights })?, Vec::new())
    } else {
        let anisotropy: Vec<[f64; 4]> = summary.grains.iter().map(anisotropy_guess).collect();
        let weights = summary
            .grains
            .iter()
            .zip(&anisotropy)
            .map(|(g, a)| {
                let det = a[0] * a[3] - a[1] * a[2];
                det.sqrt() * g.count as f64 / (omega * pi)
            })
            .collect();
        let regularised = summary
            .grains
            .iter()
            .enumerate()
            .filter(|(_, g)| !g.is_empty() && g.is_degenerate())
            .map(|(i, _)| i)
            .collect();
        let apd = PhysicalAPD {
            seeds,
            weights,
            anisotropy,
        };
        (apd_to_theta(&apd)?, regularised)
    };

    let padded = mono.zero_padded(degree)?;
    let theta_free = coeffs_to_basis(&padded, kind)?;
    debug_assert_eq!(theta_free.basis(), &DesignBasis::new(kind, degree)?);
    Ok(HeuristicGuess {
        theta: theta_free.regauged(),
        theta_free,
        moments: summary,
        empty_grains,
        regularised_grains,
    })
}

/// Gauge-fixed moment-based initial coefficients.
pub fn heuristic_theta(map: &GrainMap, degree: usize, kind: BasisKind) -> Result<ParamMatrix> {
    Ok(heuristic_guess(map, degree, kind)?.theta)
}
