use crate::error::{Error, Result};
use crate::scalar::Real;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma<T: Real>(x: T) -> T {
    debug_assert!(x > T::zero(), "ln_gamma requires a positive argument");
    let half = T::lit(0.5);
    if x < half {
        // reflection: Γ(x)Γ(1−x) = π / sin(πx)
        let pi = T::PI();
        return (pi / (pi * x).sin()).ln() - ln_gamma(T::one() - x);
    }
    let x = x - T::one();
    let mut acc = T::lit(LANCZOS[0]);
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc = acc + T::lit(c) / (x + T::count(i));
    }
    let t = x + T::lit(LANCZOS_G) + half;
    T::lit(0.5 * (2.0 * std::f64::consts::PI).ln()) + (x + half) * t.ln() - t + acc.ln()
}

/// `ln B(a, b)` for positive arguments.
pub fn ln_beta<T: Real>(a: T, b: T) -> T {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// `ln (a)_n = ln Γ(a+n) − ln Γ(a)`.
pub fn log_rising_factorial<T: Real>(a: T, n: usize) -> Result<T> {
    if !(a > T::zero()) {
        return Err(Error::domain(format!("rising factorial needs a > 0, got {a}")));
    }
    Ok(log_rising_factorial_unchecked(a, n))
}

pub(crate) fn log_rising_factorial_unchecked<T: Real>(a: T, n: usize) -> T {
    if n <= 24 {
        (0..n).map(|i| (a + T::count(i)).ln()).fold(T::zero(), |s, v| s + v)
    } else {
        ln_gamma(a + T::count(n)) - ln_gamma(a)
    }
}

/// `ln n!`.
pub fn ln_factorial<T: Real>(n: usize) -> T {
    ln_gamma(T::count(n) + T::one())
}

/// `ln C(n, k)`.
pub fn ln_binomial<T: Real>(n: usize, k: usize) -> T {
    debug_assert!(k <= n);
    ln_factorial::<T>(n) - ln_factorial::<T>(k) - ln_factorial::<T>(n - k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integer_arguments() {
        let mut fact = 1.0_f64;
        for n in 1..=25usize {
            let v = ln_gamma(n as f64);
            assert!((v - fact.ln()).abs() < 1e-12 * fact.ln().max(1.0), "n={n}");
            fact *= n as f64;
        }
    }

    #[test]
    fn half_integer_and_reflection() {
        let sqrt_pi = std::f64::consts::PI.sqrt();
        assert!((ln_gamma(0.5_f64) - sqrt_pi.ln()).abs() < 1e-14);
        assert!((ln_gamma(1.5_f64) - (0.5 * sqrt_pi).ln()).abs() < 1e-14);
        // Γ(0.1) = 9.513507698668731836...
        assert!((ln_gamma(0.1_f64) - 9.513_507_698_668_732_f64.ln()).abs() < 1e-13);
    }

    #[test]
    fn f32_agrees_with_f64() {
        for &x in &[0.3, 1.7, 6.2, 40.0] {
            let a = ln_gamma(x as f32) as f64;
            let b = ln_gamma(x);
            assert!((a - b).abs() < 1e-4 * b.abs().max(1.0));
        }
    }

    #[test]
    fn rising_factorial_examples() {
        assert_eq!(log_rising_factorial(7.3_f64, 0).unwrap(), 0.0);
        assert!((log_rising_factorial(2.0_f64, 3).unwrap() - 24f64.ln()).abs() < 1e-14);
        assert!((log_rising_factorial(0.5_f64, 2).unwrap() - 0.75f64.ln()).abs() < 1e-14);
        assert!(log_rising_factorial(0.0_f64, 2).is_err());
        assert!(log_rising_factorial(-1.0_f64, 2).is_err());
    }

    #[test]
    fn rising_factorial_branches_agree() {
        for &a in &[0.25_f64, 1.0, 3.5, 17.0] {
            let direct: f64 = (0..60).map(|i| (a + i as f64).ln()).sum();
            let via_gamma = log_rising_factorial(a, 60).unwrap();
            assert!((direct - via_gamma).abs() < 1e-11 * direct.abs());
        }
    }

    #[test]
    fn binomial() {
        assert!((ln_binomial::<f64>(10, 3) - 120f64.ln()).abs() < 1e-12);
    }
}
