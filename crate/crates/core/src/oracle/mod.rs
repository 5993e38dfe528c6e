//! Analytic references: Bessel functions, closed-form square and disc
//! spectra, and finite-dimensional eigenvalue perturbation formulas.

pub mod bessel;
pub mod modes;
pub mod perturb;

pub use bessel::{bessel_j, bessel_j_prime, jprime_zero};
pub use modes::{
    disc_modes, eval_disc_mode, eval_square_mode, square_modes, square_modes_oriented, LabelShape,
    ModeLabel, SquareOrientation,
};
pub use perturb::{
    eig_derivatives, finite_differences, near_approaches, random_family_checks, FamilyReport, MatrixFamily, ModeDerivatives,
    NearApproach, PolynomialFamily,
};
