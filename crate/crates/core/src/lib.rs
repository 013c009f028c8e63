//! Fitting polynomial minimisation diagrams to labelled grain maps.
//!
//! A grain map assigns each pixel of a regular grid on `[-1,1]²` to one of
//! `N` grains. Each grain gets a polynomial cost `h_i(x) = θ_i·η(x)` of total
//! degree `d` and every pixel goes to the grain of lowest cost. Degree 1
//! recovers power (Laguerre) diagrams and degree 2 anisotropic power
//! diagrams. Coefficients are found by maximising the concave log-softmax
//! objective `Φ_ε` with L-BFGS.
//!
//! ```
//! use polydiagram::{fit, generate_pd, make_grid, random_pd, FitConfig};
//!
//! let grid = make_grid(8).unwrap();
//! let map = generate_pd(&random_pd(4, 1).unwrap(), &grid).unwrap();
//! let report = fit(&map, &FitConfig { max_iters: 50, ..FitConfig::default() }).unwrap();
//! assert!(report.phi_final > -(4f64).ln());
//! ```

pub mod basis;
pub mod cli;
pub mod conversions;
pub mod error;
pub mod geometry;
pub mod heuristics;
pub mod io;
pub mod metrics;
pub mod objective;
pub mod optimizer;
pub mod synthetic;

pub use basis::{basis_change, feature_count, BasisKind, DesignBasis, DesignMatrix, ORDERING};
pub use conversions::{apd_to_theta, coeffs_to_basis, pd_to_theta, psd_repair, theta_to_apd, theta_to_pd};
pub use error::{Error, Result};
pub use geometry::{
    accuracy_and_error, generate_apd, generate_pd, hard_assign, make_grid, GrainMap, PhysicalAPD, PhysicalPD,
    PixelGrid,
};
pub use heuristics::heuristic_guess;
pub use metrics::{bound_report, compression, degree_sweep};
pub use objective::{evaluate, gradient, objective, soft_assign, Gauge, ParamMatrix, Reduction};
pub use optimizer::{fit, init_zero, FitConfig, FitReport, Init, StopReason};
pub use synthetic::{random_apd, random_pd, LOW_ANISOTROPY};
