//! Primitives `g_n(z1,z2) = Σ_k V_{n+z1,k+z2} α^{−k} 𝒞(n,k;α)` and the
//! quantities derived from them: block-count laws, expected block counts,
//! persistence probabilities and calibration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Family, GibbsModel, McConfig};
use crate::scalar::{log_sum_exp, Real};
use crate::special::{ln_beta, ln_gamma, log_rising_factorial, GfcTable, StirlingTable};
use crate::weights::{build_weight_table, py_weight_table, Provenance, WeightTable};

/// `ln g_n(z1, z2)` from a weight table and a GFC table.
pub fn ln_primitive<T: Real>(table: &WeightTable<T>, gfc: &GfcTable<T>, n: usize, z1: usize, z2: usize) -> Result<T> {
    if n == 0 {
        return Err(Error::domain("generic primitive needs n >= 1"));
    }
    if table.n_max() < n + z1 {
        return Err(Error::InsufficientDepth { needed: n + z1, available: table.n_max() });
    }
    if gfc.n_max() < n {
        return Err(Error::InsufficientDepth { needed: n, available: gfc.n_max() });
    }
    let ln_alpha = table.alpha().ln();
    Ok(log_sum_exp((1..=n).map(|k| table.ln(n + z1, k + z2) - T::count(k) * ln_alpha + gfc.ln(n, k))))
}

/// `g_n(z1, z2)`.
pub fn primitive<T: Real>(table: &WeightTable<T>, gfc: &GfcTable<T>, n: usize, z1: usize, z2: usize) -> Result<T> {
    Ok(ln_primitive(table, gfc, n, z1, z2)?.exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    /// `g_n(1,0)`
    G10,
    /// `g_n(1,1)`
    G11,
}

/// Closed-form `PY(α, θ)` primitives (`α = 0` gives DP):
/// `g_n(1,0) = 1/(θ+n)`, `g_n(1,1) = Γ(θ+1)Γ(θ+α+n) / (Γ(θ+n+1)Γ(θ+α))`.
pub fn py_primitive_closed<T: Real>(alpha: T, theta: T, n: usize, which: Which) -> Result<T> {
    check_closed(alpha.as_f64(), theta.as_f64())?;
    Ok(ln_py_primitive(alpha, theta, n, which).exp())
}

fn ln_py_primitive<T: Real>(alpha: T, theta: T, n: usize, which: Which) -> T {
    let nt = T::count(n);
    match which {
        Which::G10 => -(theta + nt).ln(),
        Which::G11 => {
            if alpha == T::zero() {
                // θ/(θ+n) avoids Γ(θ) for small θ
                theta.ln() - (theta + nt).ln()
            } else {
                ln_gamma(theta + T::one()) + ln_gamma(theta + alpha + nt) - ln_gamma(theta + nt + T::one()) - ln_gamma(theta + alpha)
            }
        }
    }
}

fn check_closed(alpha: f64, theta: f64) -> Result<()> {
    let ok = (0.0..1.0).contains(&alpha) && theta > -alpha && (alpha > 0.0 || theta > 0.0);
    if ok {
        Ok(())
    } else {
        Err(Error::domain(format!("closed-form primitives need 0 <= alpha < 1, theta > -alpha; got ({alpha}, {theta})")))
    }
}

/// Source of primitives for a model: closed forms for DP/PY, tables otherwise.
#[derive(Debug, Clone)]
pub enum Primitives {
    Closed { alpha: f64, theta: f64 },
    Tabled { weights: WeightTable<f64>, gfc: GfcTable<f64> },
}

impl Primitives {
    /// Primitives valid for datasets of up to `depth` customers.
    pub fn new(model: &GibbsModel, depth: usize) -> Result<Self> {
        model.validate()?;
        if let Some((alpha, theta)) = model.closed_form_parameters() {
            return Ok(Primitives::Closed { alpha, theta });
        }
        let depth = depth.max(1);
        let weights = build_weight_table::<f64>(model, depth)?;
        let gfc = GfcTable::build(depth, model.alpha())?;
        Ok(Primitives::Tabled { weights, gfc })
    }

    /// As [`Self::new`], reading and filling `store` for tabled families.
    pub fn with_store(model: &GibbsModel, depth: usize, store: &crate::store::TableStore) -> Result<Self> {
        model.validate()?;
        if let Some((alpha, theta)) = model.closed_form_parameters() {
            return Ok(Primitives::Closed { alpha, theta });
        }
        let depth = depth.max(1);
        let weights = store.load_or_build(model, depth)?;
        Self::from_tables(weights, GfcTable::build(depth, model.alpha())?)
    }

    pub fn from_tables(weights: WeightTable<f64>, gfc: GfcTable<f64>) -> Result<Self> {
        if (weights.alpha() - gfc.alpha()).abs() > 0.0 {
            return Err(Error::domain("weight and GFC tables disagree on alpha"));
        }
        Ok(Primitives::Tabled { weights, gfc })
    }

    pub fn alpha(&self) -> f64 {
        match self {
            Primitives::Closed { alpha, .. } => *alpha,
            Primitives::Tabled { weights, .. } => weights.alpha(),
        }
    }

    /// Largest `n` for which every primitive of order `n` is available.
    pub fn depth(&self) -> Option<usize> {
        match self {
            Primitives::Closed { .. } => None,
            Primitives::Tabled { weights, .. } => Some(weights.n_max()),
        }
    }

    fn need(&self, n: usize) -> Result<()> {
        match self.depth() {
            Some(d) if n > d => Err(Error::InsufficientDepth { needed: n, available: d }),
            _ => Ok(()),
        }
    }

    /// `ln V_{n,k}`.
    pub fn ln_v(&self, n: usize, k: usize) -> Result<f64> {
        self.need(n)?;
        Ok(match self {
            Primitives::Closed { alpha, theta } => {
                if k == 0 || k > n {
                    f64::NEG_INFINITY
                } else {
                    let num: f64 = (1..k).map(|l| (theta + l as f64 * alpha).ln()).sum();
                    num - log_rising_factorial(theta + 1.0, n - 1)?
                }
            }
            Primitives::Tabled { weights, .. } => weights.ln(n, k),
        })
    }

    /// `ln g_n(1,0)` for `n ≥ 1`.
    pub fn ln_g10(&self, n: usize) -> Result<f64> {
        if n == 0 {
            return Err(Error::domain("g_0(1,0) is not defined"));
        }
        self.need(n + 1)?;
        match self {
            Primitives::Closed { alpha, theta } => Ok(ln_py_primitive(*alpha, *theta, n, Which::G10)),
            Primitives::Tabled { weights, gfc } => ln_primitive(weights, gfc, n, 1, 0),
        }
    }

    /// `ln g_n(1,1)`, with `g_0(1,1) = 1`.
    pub fn ln_g11(&self, n: usize) -> Result<f64> {
        if n == 0 {
            return Ok(0.0);
        }
        self.need(n + 1)?;
        match self {
            Primitives::Closed { alpha, theta } => Ok(ln_py_primitive(*alpha, *theta, n, Which::G11)),
            Primitives::Tabled { weights, gfc } => ln_primitive(weights, gfc, n, 1, 1),
        }
    }

    /// `ln g_{n−s}(s,1)` for `1 ≤ s ≤ n`, with `g_0(n,1) = V_{n,1}`.
    pub fn ln_gs1(&self, n: usize, s: usize) -> Result<f64> {
        if s == 0 || s > n {
            return Err(Error::domain(format!("g_(n-s)(s,1) needs 1 <= s <= n; got n={n}, s={s}")));
        }
        self.need(n)?;
        match self {
            Primitives::Closed { alpha, theta } => {
                // g(n,s) = B(s−α, n−s+θ+α)/B(1−α, θ+α) divided by (1−α)_{s−1}
                let (a, th) = (*alpha, *theta);
                let sf = s as f64;
                let ln_g = ln_beta(sf - a, n as f64 - sf + th + a) - ln_beta(1.0 - a, th + a);
                Ok(ln_g - log_rising_factorial(1.0 - a, s - 1)?)
            }
            Primitives::Tabled { weights, gfc } => {
                if s == n {
                    Ok(weights.ln(n, 1))
                } else {
                    ln_primitive(weights, gfc, n - s, s, 1)
                }
            }
        }
    }

    /// Persistence probability `g(n,s) = (1−α)_{s−1} g_{n−s}(s,1)`.
    pub fn persistence_probability(&self, n: usize, s: usize) -> Result<f64> {
        let ln_gs1 = self.ln_gs1(n, s)?;
        Ok((log_rising_factorial(1.0 - self.alpha(), s - 1)? + ln_gs1).exp())
    }

    /// `ln g(n,s)` for `1 ≤ s ≤ n ≤ depth`, row `n−1`, column `s−1`.
    pub fn ln_persistence_table(&self, depth: usize) -> Result<Vec<Vec<f64>>> {
        let a = self.alpha();
        let mut rising = vec![0.0; depth.max(1)];
        for s in 1..depth {
            rising[s] = rising[s - 1] + (s as f64 - a).ln();
        }
        (1..=depth)
            .map(|n| (1..=n).map(|s| Ok(rising[s - 1] + self.ln_gs1(n, s)?)).collect())
            .collect()
    }

    /// Log-probability that customer `m+1` takes a dish that `s` of the first
    /// `m` customers took: `ln g(m+1,s+1) − ln g(m,s)`. Equals
    /// `ln[(s−α) g_m(1,0)]` for the closed-form families only.
    pub fn ln_take(&self, m: usize, s: usize) -> Result<f64> {
        if s == 0 || s > m {
            return Err(Error::domain(format!("take probability needs 1 <= s <= m; got m={m}, s={s}")));
        }
        let lead = (s as f64 - self.alpha()).ln();
        match self {
            Primitives::Closed { theta, .. } => Ok(lead - (theta + m as f64).ln()),
            Primitives::Tabled { .. } => Ok(lead + self.ln_gs1(m + 1, s + 1)? - self.ln_gs1(m, s)?),
        }
    }

    /// `Σ_{j=1..n} g_{j−1}(1,1)`, the expected number of blocks after `n` customers.
    pub fn sum_g11(&self, n: usize) -> Result<f64> {
        let mut total = 0.0;
        for j in 0..n {
            total += self.ln_g11(j)?.exp();
        }
        Ok(total)
    }

    pub fn cache(&self, model: &GibbsModel, n: usize) -> Result<PrimitiveCache> {
        PrimitiveCache::from_primitives(self, model, n)
    }
}

/// Constants consumed by the sampler and the joint pmf for a dataset of `n` rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveCache {
    pub model: GibbsModel,
    pub n: usize,
    /// `ln g_j(1,0)` for `j = 1..n−1`, at index `j−1`.
    pub ln_g10: Vec<f64>,
    /// `ln g_j(1,1)` for `j = 0..n−1`.
    pub ln_g11: Vec<f64>,
    /// `ln g_{n−s}(s,1)` for `s = 1..n`, at index `s−1`.
    pub ln_gs1: Vec<f64>,
    /// `ln g_{n−1−s}(s,1)` for `s = 1..n−1`, at index `s−1`.
    pub ln_gs1_prev: Vec<f64>,
}

impl PrimitiveCache {
    pub fn new(model: &GibbsModel, n: usize) -> Result<Self> {
        Primitives::new(model, n)?.cache(model, n)
    }

    pub fn from_primitives(p: &Primitives, model: &GibbsModel, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("primitive cache needs n >= 1"));
        }
        let ln_g10 = (1..n).map(|j| p.ln_g10(j)).collect::<Result<Vec<_>>>()?;
        let ln_g11 = (0..n).map(|j| p.ln_g11(j)).collect::<Result<Vec<_>>>()?;
        let ln_gs1 = (1..=n).map(|s| p.ln_gs1(n, s)).collect::<Result<Vec<_>>>()?;
        let ln_gs1_prev = (1..n).map(|s| p.ln_gs1(n - 1, s)).collect::<Result<Vec<_>>>()?;
        let cache = PrimitiveCache { model: *model, n, ln_g10, ln_g11, ln_gs1, ln_gs1_prev };
        cache.check()?;
        Ok(cache)
    }

    fn check(&self) -> Result<()> {
        let bad = self.ln_g10.iter().chain(&self.ln_g11).chain(&self.ln_gs1).chain(&self.ln_gs1_prev).find(|v| !v.is_finite());
        match bad {
            Some(v) => Err(Error::Numeric(format!("non-finite primitive log value {v}"))),
            None => Ok(()),
        }
    }

    pub fn alpha(&self) -> f64 {
        self.model.alpha()
    }

    /// `g_j(1,0)`, `1 ≤ j < n`.
    pub fn g10(&self, j: usize) -> f64 {
        self.ln_g10[j - 1].exp()
    }

    /// `g_j(1,1)`, `0 ≤ j < n`.
    pub fn g11(&self, j: usize) -> f64 {
        self.ln_g11[j].exp()
    }

    /// `ln g_{n−s}(s,1)`.
    pub fn ln_gs1(&self, s: usize) -> f64 {
        self.ln_gs1[s - 1]
    }

    /// `Σ_{j=0..n−1} g_j(1,1)`.
    pub fn sum_g11(&self) -> f64 {
        self.ln_g11.iter().map(|v| v.exp()).sum()
    }

    /// Probability that the last of `n` customers takes a dish that `s` of
    /// the other `n−1` took, `1 ≤ s < n`.
    pub fn take_probability(&self, s: usize) -> f64 {
        ((s as f64 - self.alpha()).ln() + self.ln_gs1[s] - self.ln_gs1_prev[s - 1]).exp()
    }

    /// Largest relative violation over `1 ≤ s < n` of
    /// `(s−α) g_{n−1−s}(s+1,1) + g_{n−s}(s,1) = g_{n−1−s}(s,1)`:
    /// the last customer either takes a size-`s` dish or does not.
    pub fn coherence_residual(&self) -> f64 {
        (1..self.n)
            .map(|s| {
                let take = self.take_probability(s);
                let skip = (self.ln_gs1[s - 1] - self.ln_gs1_prev[s - 1]).exp();
                (take + skip - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Hex SHA-256 of the JSON encoding.
    pub fn content_hash(&self) -> String {
        crate::store::sha256_hex(&serde_json::to_vec(self).expect("cache serializes"))
    }
}

fn closed_tolerance_check(total: f64) -> Result<()> {
    if (total - 1.0).abs() > 1e-8 {
        return Err(Error::Normalization { total, tolerance: 1e-8 });
    }
    Ok(())
}

/// `Pr{B_n = k}`, `k = 1..n`, from tables.
///
/// For Monte-Carlo tables the unnormalized total, which equals `V̂_{1,1}`,
/// must lie within three standard errors of one; the returned vector is then
/// renormalized.
pub fn block_distribution_from_tables(weights: &WeightTable<f64>, gfc: &GfcTable<f64>, n: usize) -> Result<Vec<f64>> {
    if weights.n_max() < n {
        return Err(Error::InsufficientDepth { needed: n, available: weights.n_max() });
    }
    if gfc.n_max() < n {
        return Err(Error::InsufficientDepth { needed: n, available: gfc.n_max() });
    }
    let ln_alpha = weights.alpha().ln();
    let probs: Vec<f64> = (1..=n).map(|k| (weights.ln(n, k) - k as f64 * ln_alpha + gfc.ln(n, k)).exp()).collect();
    let total: f64 = probs.iter().sum();
    match (weights.provenance(), weights.mc_diagnostics()) {
        (Provenance::MonteCarlo { .. }, Some(d)) => {
            let raw_total = total * d.raw_ln_v11.exp();
            let tolerance = 3.0 * d.raw_v11_rel_se() * d.raw_ln_v11.exp() + 1e-12;
            if (raw_total - 1.0).abs() > tolerance {
                return Err(Error::Normalization { total: raw_total, tolerance });
            }
            Ok(probs.into_iter().map(|p| p / total).collect())
        }
        _ => {
            closed_tolerance_check(total)?;
            Ok(probs)
        }
    }
}

/// `Pr{B_n = k}` for DP via `|s(n,k)| θ^k / (θ)_n`.
pub fn dp_block_distribution(theta: f64, n: usize) -> Result<Vec<f64>> {
    if !(theta > 0.0) {
        return Err(Error::domain(format!("DP needs theta > 0, got {theta}")));
    }
    if n == 0 {
        return Err(Error::domain("block distribution needs n >= 1"));
    }
    let stirling = StirlingTable::<f64>::build(n);
    let norm = log_rising_factorial(theta, n)?;
    let probs: Vec<f64> = (1..=n).map(|k| (stirling.ln(n, k) + k as f64 * theta.ln() - norm).exp()).collect();
    closed_tolerance_check(probs.iter().sum())?;
    Ok(probs)
}

/// `Pr{B_n = k}`, `k = 1..n`.
pub fn block_count_distribution(model: &GibbsModel, n: usize) -> Result<Vec<f64>> {
    model.validate()?;
    if n == 0 {
        return Err(Error::domain("block distribution needs n >= 1"));
    }
    if let Some((0.0, theta)) = model.closed_form_parameters() {
        return dp_block_distribution(theta, n);
    }
    let weights = match model.closed_form_parameters() {
        Some((alpha, theta)) => py_weight_table(alpha, theta, n)?,
        None => build_weight_table::<f64>(model, n)?,
    };
    let gfc = GfcTable::build(n, model.alpha())?;
    block_distribution_from_tables(&weights, &gfc, n)
}

/// `E[B_n] = Σ_k k Pr{B_n = k}`.
pub fn expected_blocks(model: &GibbsModel, n: usize) -> Result<f64> {
    let probs = block_count_distribution(model, n)?;
    Ok(probs.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub family: Family,
    pub fitted: Fitted,
    pub alpha: f64,
    /// `θ` (DP/PY) or `β` (NGG/NIG).
    pub parameter: f64,
    pub m: usize,
    pub target: f64,
    pub achieved: f64,
    pub iterations: usize,
}

/// Which parameter a calibration solved for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fitted {
    Free,
    Alpha,
}

/// Bisection tolerance on `E[B_m]`; tighter than the 0.05 contract.
const CALIBRATION_TOL: f64 = 0.01;

/// Finds the free parameter with `E[B_m] = target`, bisecting on a log scale
/// (`θ + α` for DP/PY, `β` for NGG/NIG). Generalized gamma families reuse one
/// Monte-Carlo seed so the objective is a smooth function of `β`.
pub fn calibrate(family: Family, alpha: f64, m: usize, target: f64, mc: McConfig) -> Result<Calibration> {
    if m < 2 {
        return Err(Error::domain("calibration needs m >= 2"));
    }
    if !(target > 1.0 && target < m as f64) {
        return Err(Error::domain(format!("target E[B_{m}] = {target} must lie strictly between 1 and {m}")));
    }
    let a = match family {
        Family::Dp => 0.0,
        Family::Nig => 0.5,
        _ => alpha,
    };
    let to_param = |x: f64| match family {
        Family::Dp | Family::Py => x.exp() - a,
        Family::Ngg | Family::Nig => x.exp(),
    };
    let objective = |x: f64| -> Result<f64> {
        let model = GibbsModel::from_family(family, a, to_param(x))?.with_mc(mc);
        Ok(expected_blocks(&model, m)? - target)
    };
    let mut iterations = 0;
    let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
    let mut f_lo = objective(lo)?;
    let mut f_hi = objective(hi)?;
    while f_lo > 0.0 {
        iterations += 1;
        lo -= 2.0;
        if lo < -40.0 {
            return Err(Error::domain(format!(
                "target E[B_{m}] = {target} is below the reachable range for {family} with alpha = {a} (smallest {})",
                f_lo + target
            )));
        }
        f_lo = objective(lo)?;
    }
    while f_hi < 0.0 {
        iterations += 1;
        hi += 2.0;
        if hi > 40.0 {
            return Err(Error::domain(format!(
                "target E[B_{m}] = {target} is above the reachable range for {family} with alpha = {a} (largest {})",
                f_hi + target
            )));
        }
        f_hi = objective(hi)?;
    }
    let (mut best_x, mut best_f) = if f_lo.abs() < f_hi.abs() { (lo, f_lo) } else { (hi, f_hi) };
    while best_f.abs() >= CALIBRATION_TOL && iterations < 200 {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let f_mid = objective(mid)?;
        if f_mid.abs() < best_f.abs() {
            best_x = mid;
            best_f = f_mid;
        }
        if f_mid < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    if best_f.abs() >= 0.05 {
        return Err(Error::Numeric(format!("calibration stalled at E[B_{m}] = {}", best_f + target)));
    }
    Ok(Calibration { family, fitted: Fitted::Free, alpha: a, parameter: to_param(best_x), m, target, achieved: best_f + target, iterations })
}

/// Finds `α` with `E[B_m] = target` at a fixed free parameter (`θ` for PY,
/// `β` for NGG), by bisection; `E[B_m]` increases in `α`. NGG searches
/// `α ∈ [0.05, 0.95]`.
pub fn calibrate_alpha(family: Family, free: f64, m: usize, target: f64, mc: McConfig) -> Result<Calibration> {
    if !matches!(family, Family::Py | Family::Ngg) {
        return Err(Error::domain(format!("{family} has no free discount to calibrate")));
    }
    if m < 2 || !(target > 1.0 && target < m as f64) {
        return Err(Error::domain(format!("target E[B_{m}] = {target} must lie strictly between 1 and {m} with m >= 2")));
    }
    let objective = |a: f64| -> Result<f64> {
        let model = GibbsModel::from_family(family, a, free)?.with_mc(mc);
        Ok(expected_blocks(&model, m)? - target)
    };
    // Monte-Carlo weights degrade as α approaches 0 or 1
    let (mut lo, mut hi) = match family {
        Family::Py => ((-free).max(0.0) + 1e-6, 1.0 - 1e-6),
        _ => (0.05, 0.95),
    };
    let (f_lo, f_hi) = (objective(lo)?, objective(hi)?);
    if f_lo > 0.0 || f_hi < 0.0 {
        return Err(Error::domain(format!(
            "target E[B_{m}] = {target} is outside [{}, {}] reachable by {family} with free parameter {free}",
            f_lo + target,
            f_hi + target
        )));
    }
    let (mut best_a, mut best_f) = if f_lo.abs() < f_hi.abs() { (lo, f_lo) } else { (hi, f_hi) };
    let mut iterations = 0;
    while best_f.abs() >= CALIBRATION_TOL && hi - lo > 1e-12 {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let f_mid = objective(mid)?;
        if f_mid.abs() < best_f.abs() {
            best_a = mid;
            best_f = f_mid;
        }
        if f_mid < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if best_f.abs() >= 0.05 {
        return Err(Error::Numeric(format!("calibration stalled at E[B_{m}] = {}", best_f + target)));
    }
    Ok(Calibration { family, fitted: Fitted::Alpha, alpha: best_a, parameter: free, m, target, achieved: best_f + target, iterations })
}
