use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::ibp::FeatureAllocation;

/// `(W ∘ Z) A`.
pub fn feature_mean(z: &FeatureAllocation, w: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, k) = (z.n(), z.num_features());
    if w.nrows() != n || w.ncols() != k || a.nrows() != k {
        return Err(Error::domain(format!(
            "dimension mismatch: Z is {n}x{k}, W is {}x{}, A is {}x{}",
            w.nrows(),
            w.ncols(),
            a.nrows(),
            a.ncols()
        )));
    }
    let masked = DMatrix::from_fn(n, k, |i, c| if z.get(i, c) { w[(i, c)] } else { 0.0 });
    Ok(masked * a)
}

/// `ln p(Y | Z, W, A, σ_Y)` for iid Gaussian noise.
pub fn log_likelihood(y: &DMatrix<f64>, z: &FeatureAllocation, w: &DMatrix<f64>, a: &DMatrix<f64>, sigma_y: f64) -> Result<f64> {
    if !(sigma_y > 0.0) {
        return Err(Error::domain(format!("noise scale must be positive, got {sigma_y}")));
    }
    let mean = feature_mean(z, w, a)?;
    if mean.shape() != y.shape() {
        return Err(Error::domain("data and model mean differ in shape"));
    }
    Ok(gaussian_log_density((y - mean).norm_squared(), y.len(), sigma_y))
}

/// Log density of `count` iid `N(0, σ²)` values with squared norm `ss`.
pub(crate) fn gaussian_log_density(ss: f64, count: usize, sigma: f64) -> f64 {
    let c = count as f64;
    -0.5 * c * (2.0 * std::f64::consts::PI).ln() - c * sigma.ln() - ss / (2.0 * sigma * sigma)
}

/// Scales of the synthetic linear-Gaussian model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scales {
    pub sigma_y: f64,
    pub sigma_w: f64,
    pub sigma_a: f64,
}

/// Generated data with the latent quantities that produced it.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub y: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub a: DMatrix<f64>,
}

pub(crate) fn normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, sd: impl Fn(usize, usize) -> f64, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |i, j| {
        let e: f64 = StandardNormal.sample(rng);
        sd(i, j) * e
    })
}

/// Draws `W`, `A` and noise, returning `Y = (W ∘ Z) A + ε`.
pub fn synthesize_data(z: &FeatureAllocation, p: usize, scales: Scales, seed: u64) -> Result<SyntheticData> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, k) = (z.n(), z.num_features());
    let w = normal_matrix(n, k, |_, _| scales.sigma_w, &mut rng);
    let a = normal_matrix(k, p, |_, _| scales.sigma_a, &mut rng);
    let noise = normal_matrix(n, p, |_, _| scales.sigma_y, &mut rng);
    let y = feature_mean(z, &w, &a)? + noise;
    Ok(SyntheticData { y, w, a })
}

/// Every row holds exactly one of two dense features (alternating); the
/// remaining features are singletons on evenly spaced rows.
pub fn dense_plus_singletons(n: usize, singletons: usize) -> Result<FeatureAllocation> {
    if n < 2 || singletons > n {
        return Err(Error::domain(format!("need n >= 2 and at most n singletons, got n={n}, {singletons}")));
    }
    let mut columns = vec![(0..n).map(|i| i % 2 == 0).collect::<Vec<_>>(), (0..n).map(|i| i % 2 == 1).collect()];
    for s in 0..singletons {
        let row = (2 * s + 1) * n / (2 * singletons.max(1));
        let mut c = vec![false; n];
        c[row.min(n - 1)] = true;
        columns.push(c);
    }
    FeatureAllocation::from_columns(n, columns)
}
