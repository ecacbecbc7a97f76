use rand::Rng;

use crate::error::{Error, Result};

/// One univariate slice-sampling update with stepping out and shrinkage.
/// `logf` may return `−∞` outside the support; `(lower, upper)` bound the
/// search interval. Returns the new point and its log density.
pub fn slice_step<R: Rng + ?Sized>(
    x0: f64,
    f0: f64,
    mut logf: impl FnMut(f64) -> f64,
    width: f64,
    (lower, upper): (f64, f64),
    max_steps: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if !f0.is_finite() {
        return Err(Error::Numeric(format!("slice sampler started at a point with log density {f0}")));
    }
    let level = f0 + rng.random::<f64>().ln();
    let mut left = x0 - width * rng.random::<f64>();
    let mut right = left + width;
    let budget = rng.random_range(0..max_steps.max(1));
    let mut steps_left = budget;
    let mut steps_right = max_steps.max(1) - 1 - budget;
    while steps_left > 0 && left > lower && logf(left) > level {
        left -= width;
        steps_left -= 1;
    }
    while steps_right > 0 && right < upper && logf(right) > level {
        right += width;
        steps_right -= 1;
    }
    left = left.max(lower);
    right = right.min(upper);
    for _ in 0..200 {
        let x = left + (right - left) * rng.random::<f64>();
        let fx = logf(x);
        if fx > level {
            return Ok((x, fx));
        }
        if x < x0 {
            left = x;
        } else {
            right = x;
        }
    }
    Ok((x0, f0))
}
