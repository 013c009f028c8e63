//! Maps between linear coefficients and physical diagram parameters.
//!
//! Degree 1 monomial coefficients correspond to power diagrams
//! `‖x − y‖² − w` up to the common `‖x‖²` term; degree 2 monomial
//! coefficients correspond to anisotropic power diagrams
//! `(x − y)ᵀA(x − y) − w`. The correspondence is only defined up to the
//! gauge shift `θ_i ↦ θ_i + c`, so recovered parameters describe the gauge
//! the coefficients happen to be in.

use serde::{Deserialize, Serialize};

use crate::basis::{basis_change, BasisKind, DesignBasis};
use crate::error::{Error, Result};
use crate::geometry::{sym2_eigenvalues, PhysicalAPD, PhysicalPD};
use crate::objective::{Gauge, ParamMatrix};

const ALPHA_1: [usize; 2] = [0, 0];
const ALPHA_X1: [usize; 2] = [1, 0];
const ALPHA_X2: [usize; 2] = [0, 1];
const ALPHA_X1X1: [usize; 2] = [2, 0];
const ALPHA_X1X2: [usize; 2] = [1, 1];
const ALPHA_X2X2: [usize; 2] = [0, 2];

fn row(basis: &DesignBasis, alpha: [usize; 2]) -> usize {
    basis.index_set().position(alpha).expect("multi-index within degree")
}

/// `θ_i = (‖y_i‖² − w_i, −2y_i)` in feature order `(1, x₁, x₂)`.
pub fn pd_to_theta(pd: &PhysicalPD) -> Result<ParamMatrix> {
    if pd.seeds.len() != pd.weights.len() {
        return Err(Error::DimensionMismatch {
            what: "weights vs seeds",
            expected: pd.seeds.len(),
            got: pd.weights.len(),
        });
    }
    let basis = DesignBasis::new(BasisKind::Monomial, 1)?;
    let columns = pd
        .seeds
        .iter()
        .zip(&pd.weights)
        .map(|(y, w)| {
            let mut c = vec![0.0; 3];
            c[row(&basis, ALPHA_1)] = y[0] * y[0] + y[1] * y[1] - w;
            c[row(&basis, ALPHA_X1)] = -2.0 * y[0];
            c[row(&basis, ALPHA_X2)] = -2.0 * y[1];
            c
        })
        .collect();
    ParamMatrix::from_columns(&basis, columns, Gauge::Free)
}

fn require(theta: &ParamMatrix, degree: usize) -> Result<()> {
    if theta.kind() != BasisKind::Monomial {
        return Err(Error::invalid(
            "physical parameters are read from monomial coefficients; convert the basis first",
        ));
    }
    if theta.degree() != degree {
        return Err(Error::invalid(format!(
            "expected degree {degree} coefficients, got degree {}",
            theta.degree()
        )));
    }
    Ok(())
}

/// Inverse of [`pd_to_theta`]: `y = −½(θ_x₁, θ_x₂)`, `w = ¼θ_x₁² + ¼θ_x₂² − θ_1`.
pub fn theta_to_pd(theta: &ParamMatrix) -> Result<PhysicalPD> {
    require(theta, 1)?;
    let b = theta.basis();
    let (r1, rx1, rx2) = (row(b, ALPHA_1), row(b, ALPHA_X1), row(b, ALPHA_X2));
    let mut seeds = Vec::with_capacity(theta.n_grains());
    let mut weights = Vec::with_capacity(theta.n_grains());
    for c in theta.columns() {
        seeds.push([-0.5 * c[rx1], -0.5 * c[rx2]]);
        weights.push(0.25 * c[rx1] * c[rx1] + 0.25 * c[rx2] * c[rx2] - c[r1]);
    }
    Ok(PhysicalPD { seeds, weights })
}

/// `θ_i = (yᵀAy − w, −2(Ay)₁, −2(Ay)₂, A₁₁, 2A₁₂, A₂₂)` in feature order
/// `(1, x₁, x₂, x₁², x₁x₂, x₂²)`.
pub fn apd_to_theta(apd: &PhysicalAPD) -> Result<ParamMatrix> {
    apd.validate_shape()?;
    let basis = DesignBasis::new(BasisKind::Monomial, 2)?;
    let columns = apd
        .seeds
        .iter()
        .zip(&apd.weights)
        .zip(&apd.anisotropy)
        .map(|((y, w), a)| {
            let ay = [a[0] * y[0] + a[1] * y[1], a[2] * y[0] + a[3] * y[1]];
            let mut c = vec![0.0; 6];
            c[row(&basis, ALPHA_1)] = y[0] * ay[0] + y[1] * ay[1] - w;
            c[row(&basis, ALPHA_X1)] = -2.0 * ay[0];
            c[row(&basis, ALPHA_X2)] = -2.0 * ay[1];
            c[row(&basis, ALPHA_X1X1)] = a[0];
            c[row(&basis, ALPHA_X1X2)] = a[1] + a[2];
            c[row(&basis, ALPHA_X2X2)] = a[3];
            c
        })
        .collect();
    ParamMatrix::from_columns(&basis, columns, Gauge::Free)
}

/// Anisotropic parameters read back from coefficients. Grains whose
/// quadratic block is singular keep their matrix but have no seed or weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveredApd {
    pub seeds: Vec<Option<[f64; 2]>>,
    pub weights: Vec<Option<f64>>,
    /// Row-major `[a11, a12, a21, a22]`.
    pub anisotropy: Vec<[f64; 4]>,
}

impl RecoveredApd {
    /// One-based indices of grains without seed and weight.
    pub fn unrecoverable(&self) -> Vec<usize> {
        self.seeds
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_none())
            .map(|(i, _)| i + 1)
            .collect()
    }

    pub fn into_physical(self) -> Result<PhysicalAPD> {
        let missing = self.unrecoverable();
        if !missing.is_empty() {
            return Err(Error::invalid(format!(
                "singular anisotropy for grains {missing:?}; seeds and weights are undefined"
            )));
        }
        Ok(PhysicalAPD {
            seeds: self.seeds.into_iter().flatten().collect(),
            weights: self.weights.into_iter().flatten().collect(),
            anisotropy: self.anisotropy,
        })
    }
}

/// Quadratic block `A_i` of each grain, from monomial degree 2 coefficients.
pub fn anisotropy_blocks(theta: &ParamMatrix) -> Result<Vec<[f64; 4]>> {
    require(theta, 2)?;
    let b = theta.basis();
    let (r11, r12, r22) = (row(b, ALPHA_X1X1), row(b, ALPHA_X1X2), row(b, ALPHA_X2X2));
    Ok(theta
        .columns()
        .map(|c| [c[r11], 0.5 * c[r12], 0.5 * c[r12], c[r22]])
        .collect())
}

/// Inverse of [`apd_to_theta`]: `y = −½A⁻¹b`, `w = ¼bᵀA⁻¹b − θ_1` with `b = (θ_x₁, θ_x₂)`.
pub fn theta_to_apd(theta: &ParamMatrix) -> Result<RecoveredApd> {
    let anisotropy = anisotropy_blocks(theta)?;
    let bs = theta.basis();
    let (r1, rx1, rx2) = (row(bs, ALPHA_1), row(bs, ALPHA_X1), row(bs, ALPHA_X2));
    let mut seeds = Vec::with_capacity(theta.n_grains());
    let mut weights = Vec::with_capacity(theta.n_grains());
    for (c, a) in theta.columns().zip(&anisotropy) {
        let det = a[0] * a[3] - a[1] * a[2];
        let scale = a.iter().map(|v| v * v).sum::<f64>();
        if det == 0.0 || det.abs() <= 1e-14 * scale {
            seeds.push(None);
            weights.push(None);
            continue;
        }
        let b = [c[rx1], c[rx2]];
        // A⁻¹b
        let inv_b = [(a[3] * b[0] - a[1] * b[1]) / det, (-a[2] * b[0] + a[0] * b[1]) / det];
        seeds.push(Some([-0.5 * inv_b[0], -0.5 * inv_b[1]]));
        weights.push(Some(0.25 * (b[0] * inv_b[0] + b[1] * inv_b[1]) - c[r1]));
    }
    Ok(RecoveredApd {
        seeds,
        weights,
        anisotropy,
    })
}

/// Re-expresses `θ` in the `target` basis of the same degree.
pub fn coeffs_to_basis(theta: &ParamMatrix, target: BasisKind) -> Result<ParamMatrix> {
    if theta.kind() == target {
        return Ok(theta.clone());
    }
    let bc = basis_change(theta.degree());
    let basis = DesignBasis::new(target, theta.degree())?;
    let mut values = Vec::with_capacity(theta.values().len());
    for c in theta.columns() {
        values.extend(match target {
            BasisKind::Legendre => bc.monomial_to_legendre(c),
            BasisKind::Monomial => bc.legendre_to_monomial(c),
        });
    }
    Ok(theta.with_basis(&basis, values))
}

/// Outcome of the positive-definiteness repair.
#[derive(Debug, Clone)]
pub struct PsdRepair {
    /// Coefficients in the input basis with `λI` added to every quadratic block.
    pub theta: ParamMatrix,
    pub lambda: f64,
    pub margin: f64,
    /// Parameters recomputed from the shifted coefficients.
    pub physical: RecoveredApd,
    /// Smallest eigenvalue over all repaired blocks.
    pub min_eigenvalue: f64,
}

/// Default repair margin `1e-3·(1 + max_i ‖A_i‖₂)`.
pub fn default_margin(blocks: &[[f64; 4]]) -> f64 {
    let max_norm = blocks
        .iter()
        .map(|a| {
            let (lo, hi) = sym2_eigenvalues(a);
            lo.abs().max(hi.abs())
        })
        .fold(0.0, f64::max);
    1e-3 * (1.0 + max_norm)
}

/// Adds the common shift `λ(x₁² + x₂²)` to every grain, with
/// `λ = max(0, −min_i λ_min(A_i)) + margin`, so that every `A_i + λI` is
/// positive definite. The diagram is unchanged because the shift is common
/// to all grains.
///
/// With `no_op_if_pd` set and every block already positive definite, `θ` is
/// returned unchanged with `λ = 0`.
pub fn psd_repair(theta: &ParamMatrix, margin: Option<f64>, no_op_if_pd: bool) -> Result<PsdRepair> {
    if theta.degree() != 2 {
        return Err(Error::invalid(format!(
            "positive-definiteness repair needs degree 2 coefficients, got degree {}",
            theta.degree()
        )));
    }
    let mono = coeffs_to_basis(theta, BasisKind::Monomial)?;
    let blocks = anisotropy_blocks(&mono)?;
    let min_eig = blocks
        .iter()
        .map(|a| sym2_eigenvalues(a).0)
        .fold(f64::INFINITY, f64::min);
    let margin = margin.unwrap_or_else(|| default_margin(&blocks));
    if !(margin > 0.0 && margin.is_finite()) {
        return Err(Error::invalid(format!("repair margin must be positive, got {margin}")));
    }
    let lambda = if no_op_if_pd && min_eig > 0.0 {
        0.0
    } else {
        (-min_eig).max(0.0) + margin
    };

    let mono_basis = mono.basis();
    let mut shift = vec![0.0; mono_basis.dim()];
    shift[row(mono_basis, ALPHA_X1X1)] = lambda;
    shift[row(mono_basis, ALPHA_X2X2)] = lambda;
    let native_shift = match theta.kind() {
        BasisKind::Monomial => shift.clone(),
        BasisKind::Legendre => basis_change(2).monomial_to_legendre(&shift),
    };
    let repaired = theta.shifted(&native_shift);
    let mono_repaired = mono.shifted(&shift);
    let physical = theta_to_apd(&mono_repaired)?;
    let min_eigenvalue = physical
        .anisotropy
        .iter()
        .map(|a| sym2_eigenvalues(a).0)
        .fold(f64::INFINITY, f64::min);
    Ok(PsdRepair {
        theta: repaired,
        lambda,
        margin,
        physical,
        min_eigenvalue,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate_apd, hard_assign, make_grid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(rng: &mut ChaCha8Rng) -> [f64; 4] {
        let (l1, l2): (f64, f64) = (rng.gen_range(0.2..3.0), rng.gen_range(0.2..3.0));
        let phi: f64 = rng.gen_range(0.0..std::f64::consts::PI);
        let (c, s) = (phi.cos(), phi.sin());
        let a11 = l1 * c * c + l2 * s * s;
        let a22 = l1 * s * s + l2 * c * c;
        let a12 = (l1 - l2) * c * s;
        [a11, a12, a12, a22]
    }

    #[test]
    fn pd_examples() {
        let theta = pd_to_theta(&PhysicalPD {
            seeds: vec![[0.0, 0.0], [1.0, 2.0]],
            weights: vec![0.0, 1.0],
        })
        .unwrap();
        assert_eq!(theta.column(0), &[0.0, 0.0, 0.0]);
        // (−2y₁, −2y₂, ‖y‖² − w) = (−2, −4, 4), constant feature first here.
        assert_eq!(theta.column(1), &[4.0, -2.0, -4.0]);
        let back = theta_to_pd(&theta).unwrap();
        assert_eq!(back.seeds, vec![[0.0, 0.0], [1.0, 2.0]]);
        assert_eq!(back.weights, vec![0.0, 1.0]);
    }

    #[test]
    fn pd_round_trip_is_exact_on_dyadic_values() {
        let pd = PhysicalPD {
            seeds: vec![[0.25, -0.5], [0.75, 0.125], [-1.0, 0.0]],
            weights: vec![0.0625, -0.5, 2.0],
        };
        assert_eq!(theta_to_pd(&pd_to_theta(&pd).unwrap()).unwrap(), pd);
    }

    #[test]
    fn pd_gauge_changes_parameters_not_diagram() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pd = PhysicalPD {
            seeds: (0..6).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect(),
            weights: (0..6).map(|_| rng.gen_range(0.0..0.1)).collect(),
        };
        let theta = pd_to_theta(&pd).unwrap();
        let shifted = theta.shifted(&[0.3, -0.2, 0.7]);
        assert_ne!(theta_to_pd(&shifted).unwrap(), pd);
        let grid = make_grid(12).unwrap();
        let b = theta.basis().clone();
        assert_eq!(
            hard_assign(&theta, &b, &grid).unwrap(),
            hard_assign(&shifted, &b, &grid).unwrap()
        );
    }

    #[test]
    fn wrong_basis_or_degree_is_rejected() {
        let leg = DesignBasis::new(BasisKind::Legendre, 1).unwrap();
        assert!(theta_to_pd(&ParamMatrix::zeros(&leg, 2, Gauge::Free)).is_err());
        let mono2 = DesignBasis::new(BasisKind::Monomial, 2).unwrap();
        assert!(theta_to_pd(&ParamMatrix::zeros(&mono2, 2, Gauge::Free)).is_err());
        let mono3 = DesignBasis::new(BasisKind::Monomial, 3).unwrap();
        assert!(theta_to_apd(&ParamMatrix::zeros(&mono3, 2, Gauge::Free)).is_err());
        assert!(psd_repair(&ParamMatrix::zeros(&mono3, 2, Gauge::Free), None, false).is_err());
    }

    #[test]
    fn apd_identity_case() {
        let theta = apd_to_theta(&PhysicalAPD {
            seeds: vec![[0.0, 0.0]; 2],
            weights: vec![0.0; 2],
            anisotropy: vec![[1.0, 0.0, 0.0, 1.0]; 2],
        })
        .unwrap();
        let b = theta.basis();
        let mut expect = [0.0; 6];
        expect[b.index_set().position([2, 0]).unwrap()] = 1.0;
        expect[b.index_set().position([0, 2]).unwrap()] = 1.0;
        assert_eq!(theta.column(0), &expect[..]);
    }

    #[test]
    fn apd_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let apd = PhysicalAPD {
            seeds: (0..10).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect(),
            weights: (0..10).map(|_| rng.gen_range(-0.5..0.5)).collect(),
            anisotropy: (0..10).map(|_| random_spd(&mut rng)).collect(),
        };
        let back = theta_to_apd(&apd_to_theta(&apd).unwrap()).unwrap().into_physical().unwrap();
        let dev = apd
            .seeds
            .iter()
            .flatten()
            .zip(back.seeds.iter().flatten())
            .chain(apd.weights.iter().zip(&back.weights))
            .chain(apd.anisotropy.iter().flatten().zip(back.anisotropy.iter().flatten()))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(dev <= 1e-12, "{dev}");
    }

    #[test]
    fn gauge_fixed_last_grain_is_singular() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let apd = PhysicalAPD {
            seeds: (0..4).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect(),
            weights: vec![0.0; 4],
            anisotropy: (0..4).map(|_| random_spd(&mut rng)).collect(),
        };
        let fixed = apd_to_theta(&apd).unwrap().regauged();
        let rec = theta_to_apd(&fixed).unwrap();
        assert_eq!(rec.anisotropy[3], [0.0; 4]);
        assert_eq!(rec.unrecoverable(), vec![4]);
        assert!(rec.clone().into_physical().is_err());
        let grid = make_grid(10).unwrap();
        let labels = hard_assign(&fixed, fixed.basis(), &grid).unwrap();
        assert_eq!(labels, generate_apd(&apd, &grid).unwrap().labels());
    }

    #[test]
    fn repair_examples() {
        let basis = DesignBasis::new(BasisKind::Monomial, 2).unwrap();
        let set = basis.index_set();
        let mut col = vec![0.0; 6];
        col[set.position([2, 0]).unwrap()] = 0.5;
        col[set.position([0, 2]).unwrap()] = 2.0;
        let theta = ParamMatrix::from_columns(&basis, vec![col.clone(), col.clone()], Gauge::Free).unwrap();
        let r = psd_repair(&theta, Some(0.1), false).unwrap();
        assert!((r.lambda - 0.1).abs() < 1e-15);
        let r = psd_repair(&theta, Some(0.1), true).unwrap();
        assert_eq!(r.lambda, 0.0);
        assert_eq!(r.theta, theta);

        let fixed = ParamMatrix::from_columns(&basis, vec![col, vec![0.0; 6]], Gauge::LastColumnZero).unwrap();
        let r = psd_repair(&fixed, Some(1.0), false).unwrap();
        assert!((r.lambda - 1.0).abs() < 1e-15);
        assert_eq!(r.physical.anisotropy[1], [1.0, 0.0, 0.0, 1.0]);
        assert!(r.physical.unrecoverable().is_empty());
    }

    #[test]
    fn repair_preserves_diagram_in_both_bases() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let grid = make_grid(15).unwrap();
        for kind in [BasisKind::Monomial, BasisKind::Legendre] {
            let basis = DesignBasis::new(kind, 2).unwrap();
            let vals: Vec<f64> = (0..6 * 5).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let theta = ParamMatrix::from_values(&basis, 5, vals, Gauge::Free).unwrap().regauged();
            let r = psd_repair(&theta, None, false).unwrap();
            assert!(r.min_eigenvalue >= r.margin - 1e-12);
            assert_eq!(
                hard_assign(&theta, &basis, &grid).unwrap(),
                hard_assign(&r.theta, &basis, &grid).unwrap()
            );
        }
    }

    #[test]
    fn basis_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for d in [1, 2, 5] {
            let basis = DesignBasis::new(BasisKind::Monomial, d).unwrap();
            let vals: Vec<f64> = (0..basis.dim() * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let theta = ParamMatrix::from_values(&basis, 3, vals, Gauge::Free).unwrap();
            let leg = coeffs_to_basis(&theta, BasisKind::Legendre).unwrap();
            assert_eq!(leg.kind(), BasisKind::Legendre);
            let back = coeffs_to_basis(&leg, BasisKind::Monomial).unwrap();
            let dev = theta
                .values()
                .iter()
                .zip(back.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(dev <= 1e-12);
        }
    }
}
