//! Positive α-stable and polynomially tilted positive α-stable variates.
//!
//! Both samplers use Kanter's representation `T = B(U)^{−1/α} E^{−(1−α)/α}`
//! with `U ~ Uniform(0, π)` and `E ~ Exp(1)`. Tilting the law of `T` by
//! `t^{−s}` reweights `(U, E)` by `B(U)^{s/α} E^{s(1−α)/α}`, which keeps the
//! two coordinates independent: `E` becomes a gamma variate and `U` is drawn
//! by rejection from a Gaussian envelope on `ln B(u) − ln B(0) ≤ −c u²`.

use std::f64::consts::PI;

use rand::distr::Open01;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::stable_density::{ln_kanter, ln_kanter_excess};

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("stable index must lie in (0,1), got {alpha}")))
    }
}

/// Positive α-stable law with `E[e^{−λT}] = e^{−λ^α}`.
#[derive(Debug, Clone, Copy)]
pub struct PositiveStable {
    alpha: f64,
}

impl PositiveStable {
    pub fn new(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(PositiveStable { alpha })
    }
}

impl Distribution<f64> for PositiveStable {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = PI * rng.sample::<f64, _>(Open01);
        let e: f64 = rng.sample(Exp1);
        kanter_transform(self.alpha, u, e)
    }
}

#[inline]
fn kanter_transform(alpha: f64, u: f64, e: f64) -> f64 {
    (-ln_kanter(alpha, u) / alpha - (1.0 - alpha) / alpha * e.ln()).exp()
}

/// Density proportional to `x^{−tilt} f_α(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TiltedStableSpec {
    pub alpha: f64,
    pub tilt: f64,
}

impl TiltedStableSpec {
    pub fn new(alpha: f64, tilt: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !(tilt >= 0.0) || !tilt.is_finite() {
            return Err(Error::domain(format!("tilt must be finite and >= 0, got {tilt}")));
        }
        Ok(TiltedStableSpec { alpha, tilt })
    }

    /// `ln` of the normalizing constant `Γ(1 + tilt/α) / Γ(1 + tilt)`, i.e. `ln E[T^{−tilt}]`.
    pub fn ln_normalizer(&self) -> f64 {
        use crate::special::ln_gamma;
        ln_gamma(1.0 + self.tilt / self.alpha) - ln_gamma(1.0 + self.tilt)
    }
}

#[derive(Debug, Clone, Copy)]
enum AngleProposal {
    Uniform,
    HalfNormal { sd: f64 },
}

/// Sampler for [`TiltedStableSpec`] with precomputed envelope constants.
#[derive(Debug, Clone)]
pub struct TiltedStable {
    alpha: f64,
    kappa: f64,
    curvature: f64,
    proposal: AngleProposal,
    energy: Gamma<f64>,
}

impl TiltedStable {
    pub fn new(spec: TiltedStableSpec) -> Result<Self> {
        let spec = TiltedStableSpec::new(spec.alpha, spec.tilt)?;
        let alpha = spec.alpha;
        let kappa = spec.tilt / alpha;
        let curvature = (1.0 - alpha.powi(3) - (1.0 - alpha).powi(3)) / 6.0;
        let proposal = if kappa * curvature * PI * PI < 1.0 {
            AngleProposal::Uniform
        } else {
            AngleProposal::HalfNormal { sd: (2.0 * kappa * curvature).sqrt().recip() }
        };
        let energy = Gamma::new(1.0 + kappa * (1.0 - alpha), 1.0)
            .map_err(|e| Error::domain(format!("tilted stable energy law: {e}")))?;
        Ok(TiltedStable { alpha, kappa, curvature, proposal, energy })
    }

    fn sample_angle<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let (u, log_ratio) = match self.proposal {
                AngleProposal::Uniform => {
                    let u = PI * rng.sample::<f64, _>(Open01);
                    (u, self.kappa * ln_kanter_excess(self.alpha, u))
                }
                AngleProposal::HalfNormal { sd } => {
                    let z: f64 = rng.sample(StandardNormal);
                    let u = z.abs() * sd;
                    if u >= PI || u == 0.0 {
                        continue;
                    }
                    let excess = ln_kanter_excess(self.alpha, u);
                    (u, self.kappa * (excess + self.curvature * u * u))
                }
            };
            if self.kappa == 0.0 {
                return u;
            }
            let v: f64 = rng.sample(Open01);
            if v.ln() < log_ratio {
                return u;
            }
        }
    }
}

impl Distribution<f64> for TiltedStable {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u = self.sample_angle(rng);
        let e = self.energy.sample(rng);
        kanter_transform(self.alpha, u, e)
    }
}

/// One positive α-stable draw.
pub fn sample_positive_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> Result<f64> {
    Ok(PositiveStable::new(alpha)?.sample(rng))
}

/// One draw with density `∝ x^{−tilt} f_α(x)`.
pub fn sample_tilted_stable<R: Rng + ?Sized>(spec: TiltedStableSpec, rng: &mut R) -> Result<f64> {
    Ok(TiltedStable::new(spec)?.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mean_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (v / n).sqrt())
    }

    #[test]
    fn laplace_transform_of_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = PositiveStable::new(0.5).unwrap();
        let draws: Vec<f64> = (0..200_000).map(|_| d.sample(&mut rng)).collect();
        assert!(draws.iter().all(|&t| t > 0.0));
        for &lambda in &[1.0_f64, 2.0] {
            let ys: Vec<f64> = draws.iter().map(|t| (-lambda * t).exp()).collect();
            let (m, se) = mean_se(&ys);
            let expect = (-lambda.sqrt()).exp();
            assert!((m - expect).abs() < 3.0 * se, "lambda={lambda}: {m} vs {expect}");
        }
    }

    #[test]
    fn tilted_mean_at_half() {
        // α = 1/2, tilt 3/2: inverse gamma(2, 1/4) with mean 1/4
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = TiltedStable::new(TiltedStableSpec::new(0.5, 1.5).unwrap()).unwrap();
        let draws: Vec<f64> = (0..200_000).map(|_| d.sample(&mut rng)).collect();
        let (m, se) = mean_se(&draws);
        assert!((m - 0.25).abs() < 3.0 * se, "{m} ± {se}");
    }

    #[test]
    fn tilted_negative_moment_identity() {
        // E_tilted[X^{s}] = E[T^{s−tilt}] / E[T^{−tilt}] with E[T^{−s}] = Γ(1+s/α)/Γ(1+s)
        let alpha = 0.3;
        let tilt = 0.9;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let spec = TiltedStableSpec::new(alpha, tilt).unwrap();
        let d = TiltedStable::new(spec).unwrap();
        let ys: Vec<f64> = (0..200_000).map(|_| d.sample(&mut rng).powf(-0.5)).collect();
        let (m, se) = mean_se(&ys);
        let expect = (TiltedStableSpec::new(alpha, tilt + 0.5).unwrap().ln_normalizer()
            - spec.ln_normalizer())
        .exp();
        assert!((m - expect).abs() < 3.5 * se, "{m} vs {expect} ± {se}");
    }

    #[test]
    fn reproducible() {
        let spec = TiltedStableSpec::new(0.7, 2.1).unwrap();
        let a: Vec<f64> = {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            (0..10).map(|_| sample_tilted_stable(spec, &mut rng).unwrap()).collect()
        };
        let b: Vec<f64> = {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            (0..10).map(|_| sample_tilted_stable(spec, &mut rng).unwrap()).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(TiltedStableSpec::new(0.0, 1.0).is_err());
        assert!(TiltedStableSpec::new(0.5, -1.0).is_err());
        assert!(PositiveStable::new(1.0).is_err());
    }
}
