//! Truncated stick-breaking and Poisson-superposition constructions for the
//! closed-form families, and structural densities for every family.

use rand::Rng;
use rand_distr::{Beta, Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ibp::FeatureAllocation;
use crate::model::{GibbsModel, Variant};
use crate::quadrature::Tolerance;
use crate::special::{bessel_k1_scaled, integrate_against_stable, ln_beta, ln_gamma};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub label: f64,
    /// In `(0, 1]`.
    pub weight: f64,
    /// Outer round (1-based) that produced the atom.
    pub round: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncatedProcess {
    pub atoms: Vec<Atom>,
    pub rounds: usize,
    pub gamma: f64,
}

/// Stick fractions `W_j ~ beta(1−α, θ+jα)`, `j = 1..count`.
struct StickLaws(Vec<Beta<f64>>);

impl StickLaws {
    fn new(model: &GibbsModel, count: usize) -> Result<Self> {
        let (alpha, theta) = model.closed_form_parameters().ok_or_else(|| {
            Error::Unsupported(format!("stick-breaking is implemented for DP and PY only, not {model}"))
        })?;
        let laws = (1..=count)
            .map(|j| {
                Beta::new(1.0 - alpha, theta + j as f64 * alpha)
                    .map_err(|e| Error::Numeric(format!("stick law {j}: {e}")))
            })
            .collect::<Result<_>>()?;
        Ok(StickLaws(laws))
    }

    /// One draw of `P_i = W_i ∏_{j<i} (1 − W_j)`.
    fn stick<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> f64 {
        let mut rest = 1.0;
        for law in &self.0[..i - 1] {
            rest *= 1.0 - law.sample(rng);
        }
        rest * self.0[i - 1].sample(rng)
    }
}

/// First `count` sticks of a single stick-breaking sequence.
pub fn sample_sticks<R: Rng + ?Sized>(model: &GibbsModel, count: usize, rng: &mut R) -> Result<Vec<f64>> {
    let laws = StickLaws::new(model, count)?;
    let mut rest = 1.0;
    Ok(laws
        .0
        .iter()
        .map(|law| {
            let w = law.sample(rng);
            let p = rest * w;
            rest *= 1.0 - w;
            p
        })
        .collect())
}

/// `E[∏_{j≤i}(1−W_j)]`, the expected stick mass left after `i` breaks.
pub fn expected_residual_mass(model: &GibbsModel, i: usize) -> Result<f64> {
    let (alpha, theta) = model
        .closed_form_parameters()
        .ok_or_else(|| Error::Unsupported(format!("no stick-breaking law for {model}")))?;
    Ok((1..=i)
        .map(|j| (theta + j as f64 * alpha) / (1.0 + theta + (j as f64 - 1.0) * alpha))
        .product())
}

/// Smallest number of rounds whose expected residual stick mass is below `tol`.
pub fn truncation_rounds(model: &GibbsModel, tol: f64, max_rounds: usize) -> Result<usize> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::domain(format!("truncation tolerance must lie in (0,1), got {tol}")));
    }
    let (alpha, theta) = model
        .closed_form_parameters()
        .ok_or_else(|| Error::Unsupported(format!("no stick-breaking law for {model}")))?;
    let mut mass = 1.0;
    for i in 1..=max_rounds {
        mass *= (theta + i as f64 * alpha) / (1.0 + theta + (i as f64 - 1.0) * alpha);
        if mass < tol {
            return Ok(i);
        }
    }
    Err(Error::InsufficientDepth { needed: max_rounds + 1, available: max_rounds })
}

/// Rounds `1..=rounds`, each holding Poisson(γ) atoms with independent weights
/// distributed as the stick of that round.
pub fn construct_truncated<R: Rng + ?Sized>(
    model: &GibbsModel,
    gamma: f64,
    rounds: usize,
    rng: &mut R,
) -> Result<TruncatedProcess> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::domain(format!("mass parameter must be finite and >= 0, got {gamma}")));
    }
    let laws = StickLaws::new(model, rounds)?;
    let counts = if gamma > 0.0 {
        Some(Poisson::new(gamma).map_err(|e| Error::Numeric(e.to_string()))?)
    } else {
        None
    };
    let mut atoms = Vec::new();
    for i in 1..=rounds {
        let c = counts.as_ref().map_or(0, |d| d.sample(rng) as usize);
        for _ in 0..c {
            let weight = laws.stick(i, rng);
            if weight > 0.0 {
                atoms.push(Atom { label: rng.random(), weight, round: i });
            }
        }
    }
    Ok(TruncatedProcess { atoms, rounds, gamma })
}

/// Customer `i` takes atom `k` iff `U_{i,k} < p_k`; untaken atoms are dropped.
pub fn draw_bernoulli<R: Rng + ?Sized>(process: &TruncatedProcess, n: usize, rng: &mut R) -> FeatureAllocation {
    let mut alloc = FeatureAllocation::empty(n);
    for atom in &process.atoms {
        let column: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < atom.weight).collect();
        if column.iter().any(|&b| b) {
            alloc.push_column(column, atom.label);
        }
    }
    alloc.canonicalize();
    alloc
}

fn check_unit(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("p must lie in (0,1), got {p}")))
    }
}

/// Density of the structural distribution (law of the first stick).
pub fn structural_density(model: &GibbsModel, p: f64) -> Result<f64> {
    check_unit(p)?;
    model.validate()?;
    match model.variant {
        Variant::Dp { theta } => Ok(beta_density(1.0, theta, p)),
        Variant::Py { alpha, theta } => Ok(beta_density(1.0 - alpha, theta + alpha, p)),
        Variant::Nig { beta } => {
            let rb = beta.sqrt();
            let rs = (beta / (1.0 - p)).sqrt();
            let k1 = bessel_k1_scaled(rs)?;
            Ok(rb / std::f64::consts::PI / (p.sqrt() * (1.0 - p)) * (rb - rs).exp() * k1)
        }
        Variant::Ngg { alpha, beta } => {
            let shift = beta.powf(alpha);
            let scale = beta / (1.0 - p);
            let integral = integrate_against_stable(
                alpha,
                |s| (shift - alpha * s.ln() - scale * s).exp(),
                Tolerance::new(1e-14, 1e-10),
            )?;
            let front = alpha.ln() - ln_gamma(1.0 - alpha) - alpha * p.ln() + (alpha - 1.0) * (1.0 - p).ln();
            Ok(front.exp() * integral)
        }
    }
}

fn beta_density(a: f64, b: f64, p: f64) -> f64 {
    ((a - 1.0) * p.ln() + (b - 1.0) * (1.0 - p).ln() - ln_beta(a, b)).exp()
}

/// Intensity of the depth-`depth` superposition process per unit base mass:
/// `(1−p)^depth` times the structural density.
pub fn superposition_intensity(model: &GibbsModel, depth: usize, p: f64) -> Result<f64> {
    check_unit(p)?;
    let (alpha, theta) = model
        .closed_form_parameters()
        .ok_or_else(|| Error::Unsupported(format!("superposition construction implemented for DP and PY only, not {model}")))?;
    let ln_c = ln_gamma(1.0 + theta) - ln_gamma(1.0 - alpha) - ln_gamma(theta + alpha);
    Ok((ln_c - alpha * p.ln() + (theta + alpha + depth as f64 - 1.0) * (1.0 - p).ln()).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn stick_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dp = GibbsModel::dp(1.0).unwrap();
        let py = GibbsModel::py(0.5, 1.0).unwrap();
        let reps = 40_000;
        let (mut p1, mut w1) = (0.0, 0.0);
        for _ in 0..reps {
            p1 += sample_sticks(&dp, 1, &mut rng).unwrap()[0];
            w1 += sample_sticks(&py, 1, &mut rng).unwrap()[0];
        }
        assert!((p1 / reps as f64 - 0.5).abs() < 0.01);
        assert!((w1 / reps as f64 - 0.25).abs() < 0.01);
        assert!(sample_sticks(&GibbsModel::nig(1.0).unwrap(), 2, &mut rng).is_err());
    }

    #[test]
    fn sticks_sum_below_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = sample_sticks(&GibbsModel::py(0.3, 2.0).unwrap(), 500, &mut rng).unwrap();
        let total: f64 = s.iter().sum();
        assert!(total < 1.0 && total > 0.5);
    }

    #[test]
    fn residual_and_rounds() {
        let dp = GibbsModel::dp(1.0).unwrap();
        assert!((expected_residual_mass(&dp, 3).unwrap() - 0.125).abs() < 1e-15);
        assert_eq!(truncation_rounds(&dp, 1e-3, 100).unwrap(), 10);
        let py = GibbsModel::py(0.5, 1.0).unwrap();
        // telescopes to 3/(i+3)
        assert!((expected_residual_mass(&py, 7).unwrap() - 0.3).abs() < 1e-14);
        assert!(truncation_rounds(&py, 1e-3, 100).is_err());
    }

    #[test]
    fn empty_truncation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = construct_truncated(&GibbsModel::dp(1.0).unwrap(), 2.0, 0, &mut rng).unwrap();
        assert!(p.atoms.is_empty());
        assert_eq!(draw_bernoulli(&p, 10, &mut rng).num_features(), 0);
    }

    #[test]
    fn atom_count_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = GibbsModel::py(0.5, 1.0).unwrap();
        let reps = 2000;
        let total: usize = (0..reps).map(|_| construct_truncated(&m, 1.5, 4, &mut rng).unwrap().atoms.len()).sum();
        let mean = total as f64 / reps as f64;
        assert!((mean - 6.0).abs() < 4.0 * (6.0 / reps as f64).sqrt(), "{mean}");
    }

    #[test]
    fn densities() {
        let py = GibbsModel::py(0.5, 1.0).unwrap();
        assert!((structural_density(&py, 0.5).unwrap() - 2.0 / std::f64::consts::PI).abs() < 1e-12);
        assert!(structural_density(&py, 1.0).is_err());
        // generalized gamma at α = 1/2 matches the Bessel form
        for p in [0.05, 0.4, 0.9] {
            let a = structural_density(&GibbsModel::nig(1.3).unwrap(), p).unwrap();
            let b = structural_density(&GibbsModel::ngg(0.5, 1.3).unwrap(), p).unwrap();
            assert!((a - b).abs() < 1e-7 * a, "{p}: {a} vs {b}");
        }
    }

    #[test]
    fn nig_density_normalizes() {
        let m = GibbsModel::nig(1.0).unwrap();
        let f = |p: f64| structural_density(&m, p).unwrap();
        let lo = integrate(f, 0.0, 0.5, Tolerance::new(1e-13, 1e-11)).unwrap().value;
        let hi = integrate(f, 0.5, 1.0, Tolerance::new(1e-13, 1e-11)).unwrap().value;
        assert!((lo + hi - 1.0).abs() < 1e-6, "{}", lo + hi);
    }

    #[test]
    fn superposition_sums_to_intensity() {
        let py = GibbsModel::py(0.3, 0.7).unwrap();
        for p in [0.1, 0.5, 0.9] {
            let total: f64 = (0..10_000).map(|d| superposition_intensity(&py, d, p).unwrap()).sum();
            let target = structural_density(&py, p).unwrap() / p;
            assert!((total - target).abs() < 1e-6 * target);
        }
        let dp = GibbsModel::dp(2.0).unwrap();
        assert!(superposition_intensity(&dp, 3, 0.2).unwrap() < superposition_intensity(&dp, 2, 0.2).unwrap());
    }
}
