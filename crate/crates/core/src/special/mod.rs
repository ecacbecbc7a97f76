//! Log-space special functions.

pub mod bessel;
pub mod gamma;
pub mod gfc;
pub mod incgamma;
pub mod stable_density;

pub use bessel::{bessel_k1, bessel_k1_scaled};
pub use gamma::{ln_beta, ln_binomial, ln_factorial, ln_gamma, log_rising_factorial};
pub use gfc::{gfc_bruteforce, GfcTable, StirlingTable};
pub use incgamma::{exp_integral_e1, log_upper_incomplete_gamma, log_upper_incomplete_gamma_ext};
pub use stable_density::{integrate_against_stable, log_positive_stable_density, positive_stable_density};
