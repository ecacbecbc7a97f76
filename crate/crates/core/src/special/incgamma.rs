//! Upper incomplete gamma function `Γ(a; x) = ∫_x^∞ s^{a−1} e^{−s} ds` in log space.

use crate::error::{Error, Result};
use crate::special::gamma::ln_gamma;

const EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;
const MAX_ITER: usize = 10_000;
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// `ln Γ(a; x)` for `x ≥ 0`, `a > 0`.
pub fn log_upper_incomplete_gamma(x: f64, a: f64) -> Result<f64> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::domain(format!("incomplete gamma needs a > 0, got {a}")));
    }
    if !(x >= 0.0) {
        return Err(Error::domain(format!("incomplete gamma needs x >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(ln_gamma(a));
    }
    if x < a + 1.0 {
        let p = lower_regularized_series(x, a)?;
        Ok(ln_gamma(a) + (-p).ln_1p())
    } else {
        continued_fraction(x, a)
    }
}

/// `ln Γ(a; x)` for any real shape `a` and `x > 0`.
pub fn log_upper_incomplete_gamma_ext(x: f64, a: f64) -> Result<f64> {
    if a > 0.0 {
        return log_upper_incomplete_gamma(x, a);
    }
    if !(x > 0.0) || !a.is_finite() {
        return Err(Error::domain(format!(
            "incomplete gamma with shape {a} <= 0 needs x > 0, got {x}"
        )));
    }
    if x >= 1.0 {
        return continued_fraction(x, a);
    }
    // Downward recursion on R(s) = Γ(s;x) eˣ x^{−s}: R(s−1) = (x R(s) − 1)/(s−1).
    // Stable for x < 1 since x R(s) stays below one for s ≤ 0.
    let steps = (-a).ceil() as usize;
    let mut shape = a + steps as f64;
    let ln_x = x.ln();
    let mut scaled = if shape > 1e-12 {
        log_upper_incomplete_gamma(x, shape)? + x - shape * ln_x
    } else {
        shape = 0.0;
        exp_integral_e1(x)?.ln() + x
    }
    .exp();
    let remaining = steps;
    for _ in 0..remaining {
        scaled = (x * scaled - 1.0) / (shape - 1.0);
        shape -= 1.0;
    }
    debug_assert!((shape - a).abs() < 1e-9);
    if !(scaled > 0.0) {
        return Err(Error::Numeric(format!("incomplete gamma recursion lost sign at a={a}, x={x}")));
    }
    Ok(scaled.ln() - x + a * ln_x)
}

/// Exponential integral `E₁(x) = Γ(0; x)` for `x > 0`.
pub fn exp_integral_e1(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::domain(format!("E1 needs x > 0, got {x}")));
    }
    if x >= 1.0 {
        return Ok(continued_fraction(x, 0.0)?.exp());
    }
    let mut term = 1.0_f64;
    let mut sum = 0.0_f64;
    for k in 1..MAX_ITER {
        term *= -x / k as f64;
        let add = term / k as f64;
        sum += add;
        if add.abs() < EPS * sum.abs() {
            break;
        }
    }
    Ok(-EULER_GAMMA - x.ln() - sum)
}

/// Regularized lower incomplete gamma `P(a, x)` by its power series.
fn lower_regularized_series(x: f64, a: f64) -> Result<f64> {
    let mut ap = a;
    let mut del = 1.0 / a;
    let mut sum = del;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * EPS {
            return Ok(sum * (-x + a * x.ln() - ln_gamma(a)).exp());
        }
    }
    Err(Error::Numeric(format!("incomplete gamma series did not converge (a={a}, x={x})")))
}

/// Modified Lentz evaluation of the continued fraction for `ln Γ(a; x)`.
fn continued_fraction(x: f64, a: f64) -> Result<f64> {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            return Ok(-x + a * x.ln() + h.ln());
        }
    }
    Err(Error::Numeric(format!("incomplete gamma fraction did not converge (a={a}, x={x})")))
}
