//! Gibbs weight tables `ln V_{n,k}`.
//!
//! Closed-form families use `V_{n,k} = Π_{ℓ<k}(θ+ℓα) / (θ+1)_{n−1}`. The
//! generalized gamma family estimates its last row by Monte-Carlo and fills
//! earlier rows with `V_{n,k} = (n−αk)V_{n+1,k} + V_{n+1,k+1}`, which only
//! forms convex combinations of the estimated entries.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::GibbsModel;
use crate::scalar::{compensated_sum, log_add_exp, Real};
use crate::special::{ln_binomial, ln_gamma, log_upper_incomplete_gamma_ext};
use crate::stable::{TiltedStable, TiltedStableSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Provenance {
    ClosedForm,
    SmallNSeries,
    MonteCarlo { samples: usize, seed: u64 },
}

/// Uncertainty attached to a Monte-Carlo table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McDiagnostics {
    /// `ln V̂_{1,1}` before renormalization.
    pub raw_ln_v11: f64,
    /// Relative standard errors of the unnormalized entries, `[n−1][k−1]`.
    pub rel_se: Vec<Vec<f64>>,
}

impl McDiagnostics {
    pub fn raw_v11_rel_se(&self) -> f64 {
        self.rel_se[0][0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightTable<T> {
    n_max: usize,
    alpha: T,
    rows: Vec<Vec<T>>,
    provenance: Provenance,
    mc: Option<McDiagnostics>,
}

impl<T: Real> WeightTable<T> {
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn mc_diagnostics(&self) -> Option<&McDiagnostics> {
        self.mc.as_ref()
    }

    /// `ln V_{n,k}`; `-inf` outside `1 ≤ k ≤ n`.
    pub fn ln(&self, n: usize, k: usize) -> T {
        assert!(n >= 1 && n <= self.n_max, "weight row {n} outside 1..={}", self.n_max);
        if k == 0 || k > n {
            T::neg_infinity()
        } else {
            self.rows[n - 1][k - 1]
        }
    }

    pub fn row(&self, n: usize) -> &[T] {
        &self.rows[n - 1]
    }

    /// Unnormalized Monte-Carlo estimate `ln V̂_{n,k}`; equals [`Self::ln`] otherwise.
    pub fn raw_ln(&self, n: usize, k: usize) -> T {
        match &self.mc {
            Some(d) => self.ln(n, k) + T::lit(d.raw_ln_v11),
            None => self.ln(n, k),
        }
    }

    /// Largest `|V_{n,k} − (n−αk)V_{n+1,k} − V_{n+1,k+1}| / V_{n,k}` over the table.
    pub fn recursion_residual(&self) -> T {
        let mut worst = T::zero();
        for n in 1..self.n_max {
            let nt = T::count(n);
            for k in 1..=n {
                let v = self.ln(n, k);
                let a = ((nt - self.alpha * T::count(k)).ln() + self.ln(n + 1, k) - v).exp();
                let b = (self.ln(n + 1, k + 1) - v).exp();
                let r = (a + b - T::one()).abs();
                if r > worst {
                    worst = r;
                }
            }
        }
        worst
    }

    /// Converts entries to another scalar type.
    pub fn cast<U: Real>(&self) -> WeightTable<U> {
        WeightTable {
            n_max: self.n_max,
            alpha: U::lit(self.alpha.as_f64()),
            rows: self.rows.iter().map(|r| r.iter().map(|v| U::lit(v.as_f64())).collect()).collect(),
            provenance: self.provenance,
            mc: self.mc.clone(),
        }
    }
}

fn check_depth(n_max: usize) -> Result<()> {
    if n_max == 0 {
        Err(Error::domain("weight table needs n_max >= 1"))
    } else {
        Ok(())
    }
}

/// Closed-form table for `PY(α, θ)`; `α = 0` gives `DP(θ)`.
pub fn py_weight_table<T: Real>(alpha: T, theta: T, n_max: usize) -> Result<WeightTable<T>> {
    check_depth(n_max)?;
    let valid = alpha >= T::zero() && alpha < T::one() && theta > -alpha && (alpha > T::zero() || theta > T::zero());
    if !valid {
        return Err(Error::domain(format!("closed-form weights need 0 <= alpha < 1, theta > -alpha; got ({alpha}, {theta})")));
    }
    // numer[k−1] = Σ_{ℓ<k} ln(θ+ℓα); denom[n−1] = ln (θ+1)_{n−1}
    let mut numer = Vec::with_capacity(n_max);
    let mut acc = T::zero();
    numer.push(acc);
    for l in 1..n_max {
        acc = acc + (theta + T::count(l) * alpha).ln();
        numer.push(acc);
    }
    let mut rows = Vec::with_capacity(n_max);
    let mut denom = T::zero();
    for n in 1..=n_max {
        if n > 1 {
            denom = denom + (theta + T::count(n - 1)).ln();
        }
        rows.push((1..=n).map(|k| numer[k - 1] - denom).collect());
    }
    Ok(WeightTable { n_max, alpha, rows, provenance: Provenance::ClosedForm, mc: None })
}

/// Monte-Carlo estimate of one row of generalized gamma weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRow {
    pub n: usize,
    pub ln_v: Vec<f64>,
    pub rel_se: Vec<f64>,
}

/// Estimates `V_{n,k}`, `k = 1..n`, as
/// `α^{k−1}Γ(k)/Γ(n) · E[exp(β^α − βX/Y)]` with `X` tilted stable (tilt `kα`)
/// and `Y ~ Beta(kα, n−kα)`. Each `k` uses its own ChaCha stream of `seed`.
pub fn ngg_last_row_mc(alpha: f64, beta: f64, n: usize, samples: usize, seed: u64) -> Result<McRow> {
    if !(alpha > 0.0 && alpha < 1.0 && beta > 0.0 && beta.is_finite()) {
        return Err(Error::domain(format!("NGG weights need alpha in (0,1), beta > 0; got ({alpha}, {beta})")));
    }
    check_depth(n)?;
    if samples < 2 {
        return Err(Error::domain("Monte-Carlo estimate needs at least two samples"));
    }
    let beta_alpha = beta.powf(alpha);
    let mut ln_v = Vec::with_capacity(n);
    let mut rel_se = Vec::with_capacity(n);
    for k in 1..=n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let kf = k as f64;
        let tilted = TiltedStable::new(TiltedStableSpec::new(alpha, kf * alpha)?)?;
        let ratio = Beta::new(kf * alpha, n as f64 - kf * alpha)
            .map_err(|e| Error::domain(format!("NGG beta variate: {e}")))?;
        // streaming log-mean-exp with first and second moments
        let mut shift = f64::NEG_INFINITY;
        let mut s1 = 0.0_f64;
        let mut s2 = 0.0_f64;
        for _ in 0..samples {
            let x = tilted.sample(&mut rng);
            let y = ratio.sample(&mut rng);
            let w = beta_alpha - beta * x / y;
            if !w.is_finite() {
                continue;
            }
            if w > shift {
                let scale = (shift - w).exp();
                s1 *= scale;
                s2 *= scale * scale;
                shift = w;
            }
            let e = (w - shift).exp();
            s1 += e;
            s2 += e * e;
        }
        let m = samples as f64;
        if !(s1 > 0.0) || !shift.is_finite() {
            return Err(Error::McDegenerate(format!(
                "all {samples} weights underflowed for k={k}, n={n}, alpha={alpha}, beta={beta}"
            )));
        }
        let mean = s1 / m;
        let second = s2 / m;
        let rel_var = ((second / (mean * mean) - 1.0) * m / (m - 1.0)).max(0.0) / m;
        let prefactor = (kf - 1.0) * alpha.ln() + ln_gamma(kf) - ln_gamma(n as f64);
        ln_v.push(prefactor + shift + mean.ln());
        rel_se.push(rel_var.sqrt());
    }
    Ok(McRow { n, ln_v, rel_se })
}

/// Fills rows `n−1, …, 1` from a last row, propagates relative standard
/// errors through the linear recursion, and rescales so that `V_{1,1} = 1`.
pub fn table_from_last_row(alpha: f64, row: &McRow, provenance: Provenance) -> Result<WeightTable<f64>> {
    let big_n = row.n;
    check_depth(big_n)?;
    if row.ln_v.len() != big_n || row.rel_se.len() != big_n {
        return Err(Error::domain("last row length does not match its depth"));
    }
    let mut rows: Vec<Vec<f64>> = vec![Vec::new(); big_n];
    let mut se_rows: Vec<Vec<f64>> = vec![Vec::new(); big_n];
    rows[big_n - 1] = row.ln_v.clone();
    se_rows[big_n - 1] = row.rel_se.clone();
    // share[k−1][j] is the fraction of V_{n,k} contributed by last-row entry j
    let mut share: Vec<Vec<f64>> = (0..big_n)
        .map(|k| {
            let mut v = vec![0.0; big_n];
            v[k] = 1.0;
            v
        })
        .collect();
    let se2: Vec<f64> = row.rel_se.iter().map(|s| s * s).collect();
    for n in (1..big_n).rev() {
        let next = &rows[n];
        let mut cur = Vec::with_capacity(n);
        let mut cur_share = Vec::with_capacity(n);
        let mut cur_se = Vec::with_capacity(n);
        for k in 1..=n {
            let a = (n as f64 - alpha * k as f64).ln() + next[k - 1];
            let b = next[k];
            let v = log_add_exp(a, b);
            let (wa, wb) = ((a - v).exp(), (b - v).exp());
            let mixed: Vec<f64> = share[k - 1].iter().zip(&share[k]).map(|(x, y)| wa * x + wb * y).collect();
            let var: f64 = mixed.iter().zip(&se2).map(|(r, s)| r * r * s).sum();
            cur.push(v);
            cur_se.push(var.sqrt());
            cur_share.push(mixed);
        }
        rows[n - 1] = cur;
        se_rows[n - 1] = cur_se;
        share = cur_share;
    }
    let raw_ln_v11 = rows[0][0];
    if !raw_ln_v11.is_finite() {
        return Err(Error::McDegenerate(format!("estimated V_(1,1) is not finite: {raw_ln_v11}")));
    }
    for r in rows.iter_mut() {
        for v in r.iter_mut() {
            *v -= raw_ln_v11;
        }
    }
    Ok(WeightTable {
        n_max: big_n,
        alpha,
        rows,
        provenance,
        mc: Some(McDiagnostics { raw_ln_v11, rel_se: se_rows }),
    })
}

/// Monte-Carlo generalized gamma table of depth `n_max`.
pub fn ngg_weight_table(alpha: f64, beta: f64, n_max: usize, samples: usize, seed: u64) -> Result<WeightTable<f64>> {
    let row = ngg_last_row_mc(alpha, beta, n_max, samples, seed)?;
    table_from_last_row(alpha, &row, Provenance::MonteCarlo { samples, seed })
}

/// Generalized gamma weights from the explicit incomplete-gamma series
/// `V_{n,k} = e^b α^{k−1}/Γ(n) Σ_i C(n−1,i)(−1)^i b^{i/α} Γ(k−i/α; b)` with
/// `b = β^α`, the same tilting `e^{β^α − βt}` as the Monte-Carlo estimator.
/// Alternating, so limited to `n_max ≤ 12`.
pub fn ngg_weights_smalln(alpha: f64, beta: f64, n_max: usize) -> Result<WeightTable<f64>> {
    check_depth(n_max)?;
    if n_max > 12 {
        return Err(Error::Precision(format!("incomplete-gamma series refused for n_max = {n_max} > 12")));
    }
    if !(alpha > 0.0 && alpha < 1.0 && beta > 0.0 && beta.is_finite()) {
        return Err(Error::domain(format!("NGG weights need alpha in (0,1), beta > 0; got ({alpha}, {beta})")));
    }
    let b = beta.powf(alpha);
    let ln_b = b.ln();
    let mut rows = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let mut row = Vec::with_capacity(n);
        for k in 1..=n {
            let mut logs = Vec::with_capacity(n);
            for i in 0..n {
                let shift = i as f64 / alpha;
                logs.push(ln_binomial::<f64>(n - 1, i) + shift * ln_b + log_upper_incomplete_gamma_ext(b, k as f64 - shift)?);
            }
            let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum = compensated_sum(logs.iter().enumerate().map(|(i, l)| {
                let e = (l - top).exp();
                if i % 2 == 0 {
                    e
                } else {
                    -e
                }
            }));
            if !(sum > 0.0) {
                return Err(Error::Precision(format!("series cancelled to {sum} at n={n}, k={k}")));
            }
            row.push(b + (k as f64 - 1.0) * alpha.ln() - ln_gamma(n as f64) + top + sum.ln());
        }
        rows.push(row);
    }
    Ok(WeightTable { n_max, alpha, rows, provenance: Provenance::SmallNSeries, mc: None })
}

/// Weight table of any subclass; generalized gamma tables use `model.mc`.
pub fn build_weight_table<T: Real>(model: &GibbsModel, n_max: usize) -> Result<WeightTable<T>> {
    model.validate()?;
    if let Some((alpha, theta)) = model.closed_form_parameters() {
        return py_weight_table(T::lit(alpha), T::lit(theta), n_max);
    }
    let (alpha, beta) = model.ngg_parameters().expect("non-closed families are generalized gamma");
    Ok(ngg_weight_table(alpha, beta, n_max, model.mc.samples, model.mc.seed)?.cast())
}
