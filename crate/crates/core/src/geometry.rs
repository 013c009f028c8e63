//! Pixel domains, grain maps and hard (argmin) assignment.
//!
//! Labels are zero-based grain indices in memory; files use one-based labels.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{DesignBasis, DesignMatrix};
use crate::error::{Error, Result};
use crate::objective::ParamMatrix;

/// Relative tolerance below which two costs count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Sample points in `[-1,1]²`, either a regular `2M × 2M` grid or an
/// unstructured list kept in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelGrid {
    resolution: Option<usize>,
    points: Vec<[f64; 2]>,
}

impl PixelGrid {
    /// Pixel centres `(-1,-1) + (k - ½)/M` for `k ∈ [2M]²`, row-major in `(k₁, k₂)`.
    pub fn regular(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("grid resolution M must be positive"));
        }
        let side = 2 * m;
        let h = 1.0 / m as f64;
        let coord = |k: usize| -1.0 + h * (k as f64 + 0.5);
        let mut points = Vec::with_capacity(side * side);
        for k1 in 0..side {
            for k2 in 0..side {
                points.push([coord(k1), coord(k2)]);
            }
        }
        Ok(PixelGrid {
            resolution: Some(m),
            points,
        })
    }

    pub fn from_points(points: Vec<[f64; 2]>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("point list is empty"));
        }
        if let Some(p) = points
            .iter()
            .find(|p| !(p[0].is_finite() && p[1].is_finite() && p[0].abs() <= 1.0 && p[1].abs() <= 1.0))
        {
            return Err(Error::invalid(format!(
                "point ({}, {}) lies outside [-1,1]²",
                p[0], p[1]
            )));
        }
        Ok(PixelGrid {
            resolution: None,
            points,
        })
    }

    /// Recognises a point list that is exactly a regular grid in canonical order.
    pub fn detect_regular(points: Vec<[f64; 2]>) -> Result<Self> {
        let n = points.len();
        let side = (n as f64).sqrt().round() as usize;
        if side >= 2 && side.is_multiple_of(2) && side * side == n {
            let reg = PixelGrid::regular(side / 2)?;
            let same = reg
                .points
                .iter()
                .zip(&points)
                .all(|(a, b)| (a[0] - b[0]).abs() <= 1e-9 && (a[1] - b[1]).abs() <= 1e-9);
            if same {
                return Ok(reg);
            }
        }
        PixelGrid::from_points(points)
    }

    pub fn resolution(&self) -> Option<usize> {
        self.resolution
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Convenience wrapper matching the grid constructor.
pub fn make_grid(m: usize) -> Result<PixelGrid> {
    PixelGrid::regular(m)
}

/// A labelled point set: the fitting target.
#[derive(Debug, Clone, PartialEq)]
pub struct GrainMap {
    grid: PixelGrid,
    labels: Vec<usize>,
    n_grains: usize,
}

impl GrainMap {
    pub fn new(grid: PixelGrid, labels: Vec<usize>, n_grains: usize) -> Result<Self> {
        if labels.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                what: "labels vs points",
                expected: grid.len(),
                got: labels.len(),
            });
        }
        if n_grains < 2 {
            return Err(Error::invalid("a grain map needs at least two grains"));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= n_grains) {
            return Err(Error::invalid(format!(
                "label {} exceeds grain count {n_grains}",
                l + 1
            )));
        }
        Ok(GrainMap {
            grid,
            labels,
            n_grains,
        })
    }

    pub fn grid(&self) -> &PixelGrid {
        &self.grid
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_grains(&self) -> usize {
        self.n_grains
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn grain_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_grains];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

/// Seeds and weights of a power diagram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalPD {
    pub seeds: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

/// Seeds, weights and symmetric anisotropy matrices of an anisotropic power diagram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalAPD {
    pub seeds: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    /// Row-major `[a11, a12, a21, a22]`.
    pub anisotropy: Vec<[f64; 4]>,
}

impl PhysicalPD {
    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }

    fn validate(&self) -> Result<()> {
        if self.seeds.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                what: "weights vs seeds",
                expected: self.seeds.len(),
                got: self.weights.len(),
            });
        }
        if self.seeds.len() < 2 {
            return Err(Error::invalid("a diagram needs at least two seeds"));
        }
        if self.seeds.iter().flatten().chain(&self.weights).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite seed or weight"));
        }
        Ok(())
    }
}

/// Eigenvalues `(λ_min, λ_max)` of a symmetric 2×2 matrix, in closed form.
pub fn sym2_eigenvalues(a: &[f64; 4]) -> (f64, f64) {
    let (p, q, r) = (a[0], 0.5 * (a[1] + a[2]), a[3]);
    let mean = 0.5 * (p + r);
    let rad = (0.25 * (p - r) * (p - r) + q * q).sqrt();
    (mean - rad, mean + rad)
}

impl PhysicalAPD {
    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }

    pub(crate) fn validate_shape(&self) -> Result<()> {
        PhysicalPD {
            seeds: self.seeds.clone(),
            weights: self.weights.clone(),
        }
        .validate()?;
        if self.anisotropy.len() != self.seeds.len() {
            return Err(Error::DimensionMismatch {
                what: "anisotropy matrices vs seeds",
                expected: self.seeds.len(),
                got: self.anisotropy.len(),
            });
        }
        for (i, a) in self.anisotropy.iter().enumerate() {
            if a.iter().any(|v| !v.is_finite()) || (a[1] - a[2]).abs() > 1e-12 * (1.0 + a[1].abs()) {
                return Err(Error::invalid(format!(
                    "anisotropy matrix of grain {} is not finite and symmetric",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    /// Indices of grains whose matrix is not positive definite.
    pub fn non_positive_definite(&self, tol: f64) -> Vec<usize> {
        self.anisotropy
            .iter()
            .enumerate()
            .filter(|(_, a)| {
                let (lo, hi) = sym2_eigenvalues(a);
                lo <= tol * hi.abs().max(1.0)
            })
            .map(|(i, _)| i)
            .collect()
    }
}

/// Smallest index attaining the minimum, with ties per [`TIE_TOLERANCE`].
#[inline]
pub fn argmin_with_ties(costs: &[f64]) -> usize {
    let min = costs.iter().cloned().fold(f64::INFINITY, f64::min);
    let cut = min + TIE_TOLERANCE * (1.0 + min.abs());
    costs.iter().position(|&c| c <= cut).unwrap_or(0)
}

fn assign_by<F>(points: &[[f64; 2]], n: usize, cost: F) -> Vec<usize>
where
    F: Fn([f64; 2], &mut [f64]) + Sync,
{
    points
        .par_iter()
        .map_init(
            || vec![0.0; n],
            |buf, &x| {
                cost(x, buf);
                argmin_with_ties(buf)
            },
        )
        .collect()
}

/// Labels of the minimisation diagram of `θ` at every grid point.
pub fn hard_assign(theta: &ParamMatrix, basis: &DesignBasis, grid: &PixelGrid) -> Result<Vec<usize>> {
    if theta.dim() != basis.dim() {
        return Err(Error::DimensionMismatch {
            what: "theta rows vs basis features",
            expected: basis.dim(),
            got: theta.dim(),
        });
    }
    let n = theta.n_grains();
    let k = basis.dim();
    Ok(grid
        .points()
        .par_iter()
        .map_init(
            || (vec![0.0; k], vec![0.0; n]),
            |(eta, costs), &x| {
                basis.eval_into(x, eta);
                theta.costs_into(eta, costs);
                argmin_with_ties(costs)
            },
        )
        .collect())
}

/// As [`hard_assign`], reusing an assembled design matrix.
pub fn hard_assign_design(theta: &ParamMatrix, design: &DesignMatrix) -> Result<Vec<usize>> {
    if theta.dim() != design.dim() {
        return Err(Error::DimensionMismatch {
            what: "theta rows vs design features",
            expected: design.dim(),
            got: theta.dim(),
        });
    }
    let n = theta.n_grains();
    let cols: Vec<&[f64]> = design.columns().collect();
    Ok(cols
        .par_iter()
        .map_init(
            || vec![0.0; n],
            |costs, eta| {
                theta.costs_into(eta, costs);
                argmin_with_ties(costs)
            },
        )
        .collect())
}

/// Power diagram labels: `argmin_i ‖x − y_i‖² − w_i`.
pub fn generate_pd(pd: &PhysicalPD, grid: &PixelGrid) -> Result<GrainMap> {
    pd.validate()?;
    let labels = assign_by(grid.points(), pd.len(), |x, out| {
        for ((c, y), w) in out.iter_mut().zip(&pd.seeds).zip(&pd.weights) {
            let (d0, d1) = (x[0] - y[0], x[1] - y[1]);
            *c = d0 * d0 + d1 * d1 - w;
        }
    });
    GrainMap::new(grid.clone(), labels, pd.len())
}

/// Anisotropic power diagram labels: `argmin_i ‖x − y_i‖²_{A_i} − w_i`.
pub fn generate_apd(apd: &PhysicalAPD, grid: &PixelGrid) -> Result<GrainMap> {
    apd.validate_shape()?;
    let bad = apd.non_positive_definite(1e-12);
    if !bad.is_empty() {
        let list: Vec<String> = bad.iter().map(|i| (i + 1).to_string()).collect();
        return Err(Error::invalid(format!(
            "anisotropy matrices not positive definite for grains {}",
            list.join(", ")
        )));
    }
    let labels = assign_by(grid.points(), apd.len(), |x, out| {
        for (((c, y), w), a) in out
            .iter_mut()
            .zip(&apd.seeds)
            .zip(&apd.weights)
            .zip(&apd.anisotropy)
        {
            let (d0, d1) = (x[0] - y[0], x[1] - y[1]);
            *c = d0 * (a[0] * d0 + a[1] * d1) + d1 * (a[2] * d0 + a[3] * d1) - w;
        }
    });
    GrainMap::new(grid.clone(), labels, apd.len())
}

/// Fraction of points where `fitted` agrees with the map, and its complement.
pub fn accuracy_and_error(map: &GrainMap, fitted: &[usize]) -> Result<(f64, f64)> {
    if fitted.len() != map.len() {
        return Err(Error::DimensionMismatch {
            what: "fitted labels vs grain map",
            expected: map.len(),
            got: fitted.len(),
        });
    }
    let hits = map.labels().iter().zip(fitted).filter(|(a, b)| a == b).count();
    let acc = hits as f64 / map.len() as f64;
    Ok((acc, 1.0 - acc))
}
