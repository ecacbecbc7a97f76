use crate::error::{Error, Result};
use crate::quadrature::{integrate_to_infinity, Tolerance};

/// Exponentially scaled modified Bessel function `eˣ K₁(x)` from
/// `K₁(x) = ∫_0^∞ e^{−x cosh t} cosh t dt`.
pub fn bessel_k1_scaled(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::domain(format!("K1 needs x > 0, got {x}")));
    }
    let est = integrate_to_infinity(
        |t| {
            let c = t.cosh();
            if !c.is_finite() {
                return 0.0;
            }
            (-x * (c - 1.0)).exp() * c
        },
        0.0,
        Tolerance::new(0.0, 1e-12),
    )?;
    Ok(est.value)
}

/// `K₁(x)`.
pub fn bessel_k1(x: f64) -> Result<f64> {
    Ok(bessel_k1_scaled(x)? * (-x).exp())
}
