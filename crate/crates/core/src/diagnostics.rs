//! Goodness-of-fit and MCMC summary statistics used by validation code.

use crate::error::{Error, Result};
use crate::special::{ln_gamma, log_upper_incomplete_gamma};

/// Asymptotic Kolmogorov tail `Pr{K > λ}` with `λ` the scaled statistic.
pub fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut total = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        total += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * total).clamp(0.0, 1.0)
}

/// `(D, p-value)` for a sample against a continuous CDF, with the
/// finite-sample scaling `(√n + 0.12 + 0.11/√n) D`.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::domain("KS test needs a non-empty sample"));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let d = xs.iter().enumerate().fold(0.0_f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    });
    let rn = n.sqrt();
    Ok((d, kolmogorov_tail((rn + 0.12 + 0.11 / rn) * d)))
}

/// `(D, p-value)` for two samples.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::domain("KS test needs non-empty samples"));
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len(), ys.len());
    let (mut i, mut j, mut d) = (0, 0, 0.0_f64);
    while i < n && j < m {
        let x = xs[i].min(ys[j]);
        while i < n && xs[i] <= x {
            i += 1;
        }
        while j < m && ys[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let rn = ne.sqrt();
    Ok((d, kolmogorov_tail((rn + 0.12 + 0.11 / rn) * d)))
}

/// Regularized upper incomplete gamma `Q(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> Result<f64> {
    if x <= 0.0 {
        return Ok(1.0);
    }
    Ok((log_upper_incomplete_gamma(x, a)? - ln_gamma(a)).exp().min(1.0))
}

/// CDF of gamma(shape, rate).
pub fn gamma_cdf(shape: f64, rate: f64, x: f64) -> Result<f64> {
    Ok(1.0 - gamma_q(shape, rate * x)?)
}

/// CDF of the inverse gamma law with the given shape and scale.
pub fn inverse_gamma_cdf(shape: f64, scale: f64, x: f64) -> Result<f64> {
    if x <= 0.0 {
        return Ok(0.0);
    }
    gamma_q(shape, scale / x)
}

/// Upper tail of χ² with `dof` degrees of freedom.
pub fn chi_square_sf(stat: f64, dof: usize) -> Result<f64> {
    gamma_q(dof as f64 / 2.0, stat / 2.0)
}

/// Total-variation distance between two probability vectors (shorter padded with 0).
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    let len = p.len().max(q.len());
    let at = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    0.5 * (0..len).map(|i| (at(p, i) - at(q, i)).abs()).sum::<f64>()
}

/// Normalized histogram of non-negative integer draws.
pub fn empirical_pmf(draws: &[usize]) -> Vec<f64> {
    let top = draws.iter().copied().max().unwrap_or(0);
    let mut counts = vec![0.0; top + 1];
    for &d in draws {
        counts[d] += 1.0;
    }
    let n = draws.len().max(1) as f64;
    counts.iter_mut().for_each(|c| *c /= n);
    counts
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Standard error of the mean of a correlated series from `batches` batch means.
pub fn batch_means_se(xs: &[f64], batches: usize) -> Result<f64> {
    if batches < 2 || xs.len() < 2 * batches {
        return Err(Error::domain(format!("need at least {} draws for {batches} batches", 2 * batches)));
    }
    let size = xs.len() / batches;
    let means: Vec<f64> = xs.chunks_exact(size).take(batches).map(mean).collect();
    Ok((variance(&means) / batches as f64).sqrt())
}

/// z-score for equality of means of an iid sample and a correlated chain.
pub fn geweke_z(independent: &[f64], chain: &[f64], batches: usize) -> Result<f64> {
    let se_a = (variance(independent) / independent.len() as f64).sqrt();
    let se_b = batch_means_se(chain, batches)?;
    let se = (se_a * se_a + se_b * se_b).sqrt();
    if !(se > 0.0) {
        return Ok(if mean(independent) == mean(chain) { 0.0 } else { f64::INFINITY });
    }
    Ok((mean(independent) - mean(chain)) / se)
}

/// Equal-tailed empirical interval at the given coverage.
pub fn credible_interval(xs: &[f64], coverage: f64) -> (f64, f64) {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let idx = (p * (v.len() - 1) as f64).round() as usize;
        v[idx.min(v.len() - 1)]
    };
    let tail = (1.0 - coverage) / 2.0;
    (q(tail), q(1.0 - tail))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kolmogorov_reference_values() {
        // Pr{K > 1.36} ≈ 0.05, Pr{K > 1.95} ≈ 0.001
        assert!((kolmogorov_tail(1.358) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_tail(1.949) - 0.001).abs() < 1e-4);
    }

    #[test]
    fn uniform_sample_passes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<f64> = (0..5000).map(|_| rng.random()).collect();
        let (_, p) = ks_one_sample(&xs, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!(p > 0.001);
        let (_, p) = ks_one_sample(&xs, |x| (x * x).clamp(0.0, 1.0)).unwrap();
        assert!(p < 1e-6);
        let ys: Vec<f64> = (0..4000).map(|_| rng.random()).collect();
        assert!(ks_two_sample(&xs, &ys).unwrap().1 > 0.001);
    }

    #[test]
    fn gamma_family_cdfs() {
        assert!((gamma_cdf(1.0, 2.0, 0.5).unwrap() - (1.0 - (-1.0_f64).exp())).abs() < 1e-12);
        assert!((inverse_gamma_cdf(1.0, 1.0, 2.0).unwrap() - (-0.5_f64).exp()).abs() < 1e-12);
        assert!((chi_square_sf(3.841_458_820_694_124, 1).unwrap() - 0.05).abs() < 1e-9);
    }

    #[test]
    fn tv_and_pmf() {
        assert_eq!(total_variation(&[0.5, 0.5], &[0.5, 0.25, 0.25]), 0.25);
        assert_eq!(empirical_pmf(&[0, 2, 2, 1]), vec![0.25, 0.25, 0.5]);
    }

    #[test]
    fn batch_means_match_iid_se() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs: Vec<f64> = (0..20_000).map(|_| rng.random()).collect();
        let se = batch_means_se(&xs, 50).unwrap();
        let iid = (1.0 / 12.0 / 20_000.0_f64).sqrt();
        assert!((se / iid - 1.0).abs() < 0.35);
        assert!(batch_means_se(&xs[..10], 50).is_err());
    }
}
