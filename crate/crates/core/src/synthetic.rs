//! Seeded random power and anisotropic power diagrams.
//!
//! Draws come from `ChaCha8Rng` in a fixed order (seeds, weights, then
//! orientation and stretch per grain), so the same seed gives the same
//! diagram on every platform, and a PD and an APD drawn with the same seed
//! share seeds and weights.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{PhysicalAPD, PhysicalPD};

/// Anisotropy level used for the "low anisotropy" test instances.
pub const LOW_ANISOTROPY: f64 = 0.5;

/// `N` seeds uniform in `[-1,1]²`, weights uniform in `[0, 1/N)`, and per
/// grain a matrix `R(φ) diag(e^{su}, e^{−su}) R(φ)ᵀ` with `φ ~ U[0,π)`,
/// `u ~ U[0,1)` and `s` the anisotropy level. Level 0 gives identity matrices.
pub fn random_apd(n: usize, seed: u64, anisotropy: f64) -> Result<PhysicalAPD> {
    if n < 2 {
        return Err(Error::invalid("need at least two grains"));
    }
    if !(anisotropy >= 0.0 && anisotropy.is_finite()) {
        return Err(Error::invalid(format!("anisotropy level must be non-negative, got {anisotropy}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<[f64; 2]> = (0..n)
        .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
        .collect();
    let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0) / n as f64).collect();
    let anisotropy = (0..n)
        .map(|_| {
            let phi: f64 = rng.gen_range(0.0..std::f64::consts::PI);
            let u: f64 = rng.gen_range(0.0..1.0);
            let (l1, l2) = ((anisotropy * u).exp(), (-anisotropy * u).exp());
            let (c, s) = (phi.cos(), phi.sin());
            let off = (l1 - l2) * c * s;
            [l2 + (l1 - l2) * c * c, off, off, l2 + (l1 - l2) * s * s]
        })
        .collect();
    Ok(PhysicalAPD {
        seeds,
        weights,
        anisotropy,
    })
}

/// The seeds and weights of [`random_apd`] with the same arguments.
pub fn random_pd(n: usize, seed: u64) -> Result<PhysicalPD> {
    let apd = random_apd(n, seed, 0.0)?;
    Ok(PhysicalPD {
        seeds: apd.seeds,
        weights: apd.weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate_apd, generate_pd, make_grid, sym2_eigenvalues};

    #[test]
    fn level_zero_is_isotropic() {
        let apd = random_apd(12, 3, 0.0).unwrap();
        assert!(apd.anisotropy.iter().all(|a| *a == [1.0, 0.0, 0.0, 1.0]));
        let grid = make_grid(10).unwrap();
        assert_eq!(
            generate_apd(&apd, &grid).unwrap(),
            generate_pd(&random_pd(12, 3).unwrap(), &grid).unwrap()
        );
    }

    #[test]
    fn matrices_are_spd_with_bounded_stretch() {
        let apd = random_apd(30, 9, 1.5).unwrap();
        for a in &apd.anisotropy {
            let (lo, hi) = sym2_eigenvalues(a);
            assert!(lo > 0.0);
            assert!(hi / lo <= 3f64.exp() * (1.0 + 1e-12));
            assert!(((lo * hi) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn same_seed_same_diagram() {
        assert_eq!(random_apd(7, 1, 0.5).unwrap(), random_apd(7, 1, 0.5).unwrap());
        assert_ne!(random_apd(7, 1, 0.5).unwrap(), random_apd(7, 2, 0.5).unwrap());
    }
}
