//! Generalized factorial coefficients and unsigned Stirling numbers of the
//! first kind, both held as lower-triangular tables of logarithms.

use num_bigint::BigInt;
use num_traits::{Float, One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{log_add_exp, Real};

/// `ln 𝒞(n, k; α)` for `1 ≤ k ≤ n ≤ n_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GfcTable<T> {
    n_max: usize,
    alpha: T,
    // rows[n - 1][k - 1]
    rows: Vec<Vec<T>>,
}

impl<T: Real> GfcTable<T> {
    /// Fills the table from the diagonal `𝒞(j,j) = α^j` and first column
    /// using `𝒞(j+1,k) = (j−αk)𝒞(j,k) + α𝒞(j,k−1)`.
    pub fn build(n_max: usize, alpha: T) -> Result<Self> {
        if n_max == 0 {
            return Err(Error::domain("GFC table needs n_max >= 1"));
        }
        if !(alpha > T::zero() && alpha < T::one()) {
            return Err(Error::domain(format!("GFC table needs alpha in (0,1), got {alpha}")));
        }
        let ln_alpha = alpha.ln();
        let mut rows: Vec<Vec<T>> = Vec::with_capacity(n_max);
        rows.push(vec![ln_alpha]);
        for j in 1..n_max {
            let prev = &rows[j - 1];
            let jt = T::count(j);
            let mut next = Vec::with_capacity(j + 1);
            next.push((jt - alpha).ln() + prev[0]);
            for k in 2..=j {
                let stay = (jt - alpha * T::count(k)).ln() + prev[k - 1];
                let grow = ln_alpha + prev[k - 2];
                next.push(log_add_exp(stay, grow));
            }
            next.push(T::count(j + 1) * ln_alpha);
            rows.push(next);
        }
        Ok(GfcTable { n_max, alpha, rows })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    /// `ln 𝒞(n,k;α)`; `-inf` when `k = 0 < n` or `k > n`.
    pub fn ln(&self, n: usize, k: usize) -> T {
        assert!(n <= self.n_max, "GFC row {n} beyond table depth {}", self.n_max);
        match (n, k) {
            (0, 0) => T::zero(),
            (_, 0) => T::neg_infinity(),
            _ if k > n => T::neg_infinity(),
            _ => self.rows[n - 1][k - 1],
        }
    }

    pub fn row(&self, n: usize) -> &[T] {
        &self.rows[n - 1]
    }
}

/// Explicit alternating sum `(1/k!) Σ_i (−1)^i C(k,i) (−iα)_n`, for `n ≤ 15`.
///
/// `α` is a dyadic rational, so every term is summed exactly in big-integer
/// arithmetic and only the final quotient is rounded.
pub fn gfc_bruteforce(n: usize, k: usize, alpha: f64) -> Result<f64> {
    if n > 15 {
        return Err(Error::Precision(format!(
            "alternating GFC sum is unreliable for n = {n} > 15"
        )));
    }
    if !alpha.is_finite() {
        return Err(Error::domain("GFC needs a finite alpha"));
    }
    if k > n {
        return Ok(0.0);
    }
    // α = m · 2^{−q}
    let (mantissa, exponent, sign) = alpha.integer_decode();
    let m = BigInt::from(mantissa) * BigInt::from(sign);
    let (m, q) = if exponent >= 0 {
        (m << exponent as usize, 0usize)
    } else {
        (m, (-exponent) as usize)
    };
    let scale = BigInt::one() << q;
    let mut total = BigInt::zero();
    let mut binom = BigInt::one();
    for i in 0..=k {
        if i > 0 {
            binom = binom * BigInt::from(k - i + 1) / BigInt::from(i);
        }
        // 2^{qn} (−iα)_n = Π_j (j·2^q − i·m)
        let i_m = &m * BigInt::from(i);
        let rising = (0..n).fold(BigInt::one(), |p, j| p * (&scale * BigInt::from(j) - &i_m));
        let term = &binom * rising;
        if i % 2 == 0 {
            total += term;
        } else {
            total -= term;
        }
    }
    let k_fact = (1..=k).fold(BigInt::one(), |p, v| p * BigInt::from(v));
    Ok(big_ratio_to_f64(&total, &k_fact, q * n))
}

/// `num / (den · 2^shift)` rounded to `f64`.
fn big_ratio_to_f64(num: &BigInt, den: &BigInt, shift: usize) -> f64 {
    if num.is_zero() {
        return 0.0;
    }
    // keep 64 significant bits of each operand before converting
    let trim = |v: &BigInt| -> (f64, i64) {
        let bits = v.bits() as i64;
        let drop = (bits - 64).max(0);
        ((v >> drop as usize).to_f64().expect("64-bit value"), drop)
    };
    let (nf, nd) = trim(num);
    let (df, dd) = trim(den);
    let exponent = nd - dd - shift as i64;
    (nf / df) * 2f64.powi(exponent as i32)
}

/// `ln |s(n,k)|`, unsigned Stirling numbers of the first kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StirlingTable<T> {
    n_max: usize,
    rows: Vec<Vec<T>>,
}

impl<T: Real> StirlingTable<T> {
    pub fn build(n_max: usize) -> Self {
        let mut rows: Vec<Vec<T>> = Vec::with_capacity(n_max);
        if n_max > 0 {
            rows.push(vec![T::zero()]);
        }
        for j in 1..n_max {
            let prev = &rows[j - 1];
            let ln_j = T::count(j).ln();
            let mut next = Vec::with_capacity(j + 1);
            next.push(ln_j + prev[0]);
            for k in 2..=j {
                next.push(log_add_exp(ln_j + prev[k - 1], prev[k - 2]));
            }
            next.push(T::zero());
            rows.push(next);
        }
        StirlingTable { n_max, rows }
    }

    pub fn ln(&self, n: usize, k: usize) -> T {
        assert!(n <= self.n_max);
        match (n, k) {
            (0, 0) => T::zero(),
            (_, 0) => T::neg_infinity(),
            _ if k > n => T::neg_infinity(),
            _ => self.rows[n - 1][k - 1],
        }
    }
}
