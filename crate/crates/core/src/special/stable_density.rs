//! Density of the positive α-stable law with Laplace transform `exp(−λ^α)`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quadrature::{integrate, integrate_to_infinity, Tolerance};
use crate::special::gamma::ln_gamma;

/// `ln B(u)` for the Kanter function
/// `B(u) = sin u / (sin(αu)^α sin((1−α)u)^{1−α})`, decreasing on `(0, π)`.
pub fn ln_kanter(alpha: f64, u: f64) -> f64 {
    ln_kanter_at_zero(alpha) + ln_kanter_excess(alpha, u)
}

/// `ln B(0) = −α ln α − (1−α) ln(1−α)`.
pub fn ln_kanter_at_zero(alpha: f64) -> f64 {
    -alpha * alpha.ln() - (1.0 - alpha) * (1.0 - alpha).ln()
}

/// `ln B(u) − ln B(0) ≤ 0`, accurate to full relative precision as `u → 0`.
pub fn ln_kanter_excess(alpha: f64, u: f64) -> f64 {
    ln_sinc(u) - alpha * ln_sinc(alpha * u) - (1.0 - alpha) * ln_sinc((1.0 - alpha) * u)
}

/// `ln(sin x / x)` for `0 ≤ x < π`.
fn ln_sinc(x: f64) -> f64 {
    if x < 0.05 {
        let x2 = x * x;
        -x2 * (1.0 / 6.0 + x2 * (1.0 / 180.0 + x2 * (1.0 / 2835.0 + x2 / 37800.0)))
    } else {
        (x.sin() / x).ln()
    }
}

fn check(alpha: f64, t: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("stable index must lie in (0,1), got {alpha}")));
    }
    if !(t > 0.0) {
        return Err(Error::domain(format!("stable density needs t > 0, got {t}")));
    }
    Ok(())
}

/// `ln f_α(t)`.
pub fn log_positive_stable_density(alpha: f64, t: f64) -> Result<f64> {
    check(alpha, t)?;
    if alpha == 0.5 {
        return Ok(-(2.0 * PI.sqrt()).ln() - 1.5 * t.ln() - 0.25 / t);
    }
    let x = t.powf(-alpha);
    if x <= 0.5 {
        return Ok(log_density_series(alpha, t, x));
    }
    // f(t) = α/((1−α)π) t^{−1/(1−α)} ∫_0^π A(u) exp(−A(u) z) du,
    // A = B^{−1/(1−α)}, z = t^{−α/(1−α)}.
    let r = 1.0 / (1.0 - alpha);
    let ln_z = -alpha * r * t.ln();
    let ln_a0 = -r * ln_kanter_at_zero(alpha);
    let a0z = (ln_a0 + ln_z).exp();
    let integrand = |u: f64| {
        let excess = -r * ln_kanter_excess(alpha, u);
        // A(u) − A(0) = A(0)·expm1(excess), so exp(−A(0) z) factors out exactly
        let v = (ln_a0 + excess - a0z * excess.exp_m1()).exp();
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    // split at the point where the exponent reaches ~1 to help the
    // adaptive rule find the boundary layer near u = 0 for small t
    let split = if a0z > 1.0 { (PI / a0z.sqrt()).min(PI / 2.0) } else { PI / 2.0 };
    let tol = Tolerance::new(0.0, 1e-10);
    let left = integrate(integrand, 0.0, split, tol)?;
    let right = integrate(integrand, split, PI, tol)?;
    let inner = left.value + right.value;
    if !(inner > 0.0) {
        return Ok(f64::NEG_INFINITY);
    }
    Ok((alpha * r / PI).ln() - r * t.ln() - a0z + inner.ln())
}

/// Convergent expansion `f(t) = (1/π) Σ_k (−1)^{k+1} Γ(kα+1)/k! sin(kπα) t^{−kα−1}`;
/// used only where `t^{−α} ≤ 1/2` so the terms shrink geometrically.
fn log_density_series(alpha: f64, t: f64, x: f64) -> f64 {
    let ln_x = x.ln();
    let mut sum = 0.0;
    let mut ln_fact = 0.0;
    for k in 1..200usize {
        let kf = k as f64;
        ln_fact += kf.ln();
        let magnitude = (ln_gamma(kf * alpha + 1.0) - ln_fact + kf * ln_x).exp();
        let term = magnitude * (kf * PI * alpha).sin();
        sum += if k % 2 == 1 { term } else { -term };
        if magnitude < 1e-17 * sum.abs() {
            break;
        }
    }
    (sum / PI).ln() - t.ln()
}

/// `f_α(t)`.
pub fn positive_stable_density(alpha: f64, t: f64) -> Result<f64> {
    Ok(log_positive_stable_density(alpha, t)?.exp())
}

/// `∫_0^∞ g(t) f_α(t) dt` computed on the log-time axis.
pub fn integrate_against_stable<G: FnMut(f64) -> f64>(alpha: f64, mut g: G, tol: Tolerance) -> Result<f64> {
    let mut failure = None;
    let mut body = |s: f64| -> f64 {
        let t = s.exp();
        if !(t > 0.0) || !t.is_finite() {
            return 0.0;
        }
        match log_positive_stable_density(alpha, t) {
            Ok(lf) => {
                let v = g(t) * (lf + s).exp();
                if v.is_finite() {
                    v
                } else {
                    0.0
                }
            }
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        }
    };
    let upper = integrate_to_infinity(&mut body, 0.0, tol)?.value;
    let lower = integrate_to_infinity(|s| body(-s), 0.0, tol)?.value;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(upper + lower)
}
