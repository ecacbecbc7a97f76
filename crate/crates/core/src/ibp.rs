//! Sequential buffet scheme, joint pmf and feature statistics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GibbsModel, Variant};
use crate::primitives::{PrimitiveCache, Primitives};
use crate::quadrature::Tolerance;
use crate::special::{bessel_k1_scaled, integrate_against_stable, ln_gamma, log_rising_factorial};

/// Binary customer × dish matrix stored by column, dishes in order of appearance.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureAllocation {
    n: usize,
    columns: Vec<Vec<bool>>,
    /// Atom locations on `[0, 1]` standing in for the diffuse base measure.
    pub labels: Vec<f64>,
}

impl FeatureAllocation {
    pub fn empty(n: usize) -> Self {
        FeatureAllocation { n, columns: Vec::new(), labels: Vec::new() }
    }

    /// Builds from columns; drops empty columns and restores order of appearance.
    pub fn from_columns(n: usize, columns: Vec<Vec<bool>>) -> Result<Self> {
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::domain(format!("every column must have {n} entries")));
        }
        let labels = (0..columns.len()).map(|k| (k as f64 + 0.5) / columns.len().max(1) as f64).collect();
        let mut a = FeatureAllocation { n, columns, labels };
        a.canonicalize();
        Ok(a)
    }

    /// Builds from rows (customers).
    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self> {
        let n = rows.len();
        let k = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::domain("ragged feature matrix"));
        }
        let columns = (0..k).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
        Self::from_columns(n, columns)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_features(&self) -> usize {
        self.columns.len()
    }

    pub fn get(&self, i: usize, k: usize) -> bool {
        self.columns[k][i]
    }

    pub fn set(&mut self, i: usize, k: usize, v: bool) {
        self.columns[k][i] = v;
    }

    pub fn column(&self, k: usize) -> &[bool] {
        &self.columns[k]
    }

    pub fn row(&self, i: usize) -> Vec<bool> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    pub fn rows(&self) -> Vec<Vec<bool>> {
        (0..self.n).map(|i| self.row(i)).collect()
    }

    /// `S_{n,k}`.
    pub fn counts(&self) -> Vec<usize> {
        self.columns.iter().map(|c| c.iter().filter(|&&b| b).count()).collect()
    }

    pub fn push_column(&mut self, column: Vec<bool>, label: f64) {
        assert_eq!(column.len(), self.n);
        self.columns.push(column);
        self.labels.push(label);
    }

    pub fn remove_column(&mut self, k: usize) -> Vec<bool> {
        self.labels.remove(k);
        self.columns.remove(k)
    }

    /// Removes all-zero columns and stably sorts columns by first customer.
    pub fn canonicalize(&mut self) {
        let first = |c: &Vec<bool>| c.iter().position(|&b| b);
        let mut order: Vec<usize> = (0..self.columns.len()).filter(|&k| first(&self.columns[k]).is_some()).collect();
        order.sort_by_key(|&k| first(&self.columns[k]));
        let columns = order.iter().map(|&k| self.columns[k].clone()).collect();
        let labels = order.iter().map(|&k| self.labels[k]).collect();
        self.columns = columns;
        self.labels = labels;
    }

    /// Reorders customers: new row `i` is old row `perm[i]`.
    pub fn permute_rows(&self, perm: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.n];
        if perm.len() != self.n || perm.iter().any(|&p| p >= self.n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::domain("not a permutation of the customers"));
        }
        let columns = self.columns.iter().map(|c| perm.iter().map(|&p| c[p]).collect()).collect();
        let mut a = FeatureAllocation { n: self.n, columns, labels: self.labels.clone() };
        a.canonicalize();
        Ok(a)
    }

    /// First `m` customers, with dishes none of them took removed.
    pub fn prefix(&self, m: usize) -> Self {
        let columns = self.columns.iter().map(|c| c[..m].to_vec()).collect();
        let mut a = FeatureAllocation { n: m, columns, labels: self.labels.clone() };
        a.canonicalize();
        a
    }
}

fn poisson<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> Result<usize> {
    if rate == 0.0 {
        return Ok(0);
    }
    let d = Poisson::new(rate).map_err(|e| Error::Numeric(format!("Poisson rate {rate}: {e}")))?;
    Ok(d.sample(rng) as usize)
}

/// Previous-dish probabilities; tabled primitives are tabulated once since
/// each costs a sum over block counts.
enum TakeRule<'a> {
    Direct(&'a Primitives),
    Table(Vec<Vec<f64>>),
}

impl<'a> TakeRule<'a> {
    fn new(prims: &'a Primitives, n: usize) -> Result<Self> {
        Ok(match prims {
            Primitives::Closed { .. } => TakeRule::Direct(prims),
            Primitives::Tabled { .. } => TakeRule::Table(prims.ln_persistence_table(n)?),
        })
    }

    /// Customer `m+1` takes a dish held by `s` of the first `m`.
    fn probability(&self, m: usize, s: usize) -> Result<f64> {
        match self {
            TakeRule::Direct(p) => Ok(p.ln_take(m, s)?.exp()),
            TakeRule::Table(t) => Ok((t[m][s] - t[m - 1][s - 1]).exp()),
        }
    }
}

/// Runs the buffet with `n` customers.
pub fn simulate_ibp_with<R: Rng + ?Sized>(prims: &Primitives, gamma: f64, n: usize, rng: &mut R) -> Result<FeatureAllocation> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::domain(format!("mass parameter must be finite and >= 0, got {gamma}")));
    }
    let rule = TakeRule::new(prims, n)?;
    let mut columns: Vec<Vec<bool>> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    let mut labels = Vec::new();
    for j in 0..n {
        if j > 0 {
            for k in 0..columns.len() {
                let p = rule.probability(j, counts[k])?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidProbability { value: p, context: format!("dish {k}, customer {}", j + 1) });
                }
                let take = rng.random::<f64>() < p;
                columns[k].push(take);
                counts[k] += take as usize;
            }
        }
        let fresh = poisson(gamma * prims.ln_g11(j)?.exp(), rng)?;
        for _ in 0..fresh {
            let mut c = vec![false; j];
            c.push(true);
            columns.push(c);
            counts.push(1);
            labels.push(rng.random::<f64>());
        }
    }
    Ok(FeatureAllocation { n, columns, labels })
}

pub fn simulate_ibp(model: &GibbsModel, gamma: f64, n: usize, seed: u64) -> Result<FeatureAllocation> {
    let prims = Primitives::new(model, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_ibp_with(&prims, gamma, n, &mut rng)
}

fn k_log_gamma(k: usize, gamma: f64) -> f64 {
    if k == 0 {
        0.0
    } else {
        k as f64 * gamma.ln()
    }
}

/// `K ln γ − γ Σ_j g_{j−1}(1,1) + Σ_k [ln(1−α)_{S_k−1} + ln g_{n−S_k}(S_k,1)]`,
/// base-measure differentials omitted.
pub fn log_joint(alloc: &FeatureAllocation, cache: &PrimitiveCache, gamma: f64) -> Result<f64> {
    if cache.n != alloc.n() {
        return Err(Error::InsufficientDepth { needed: alloc.n(), available: cache.n });
    }
    let a = cache.alpha();
    let mut total = k_log_gamma(alloc.num_features(), gamma) - gamma * cache.sum_g11();
    for s in alloc.counts() {
        if s == 0 {
            return Err(Error::domain("allocation has an empty dish"));
        }
        total += log_rising_factorial(1.0 - a, s - 1)? + cache.ln_gs1(s);
    }
    Ok(total)
}

/// Log-probability that customer `i` (0-based) makes the choices recorded in
/// `alloc` given customers `0..i`; new dishes contribute `K⁺ ln(γ g_i(1,1)) − γ g_i(1,1)`.
pub fn log_customer_transition(alloc: &FeatureAllocation, prims: &Primitives, gamma: f64, i: usize) -> Result<f64> {
    let rate = gamma * prims.ln_g11(i)?.exp();
    let mut total = 0.0;
    let mut fresh = 0;
    for k in 0..alloc.num_features() {
        let c = alloc.column(k);
        let prev = c[..i].iter().filter(|&&b| b).count();
        if prev == 0 {
            fresh += c[i] as usize;
            continue;
        }
        let p = prims.ln_take(i, prev)?.exp();
        total += if c[i] { p.ln() } else { (-p).ln_1p() };
    }
    Ok(total + k_log_gamma(fresh, rate) - rate)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStatistics {
    /// `K_j`, `j = 1..n`.
    pub k_trajectory: Vec<usize>,
    /// `K_{n,j}`: dishes taken exactly `j` times, `j = 1..n`.
    pub multiplicities: Vec<usize>,
    /// `S_{n,k}/n`.
    pub frequencies: Vec<f64>,
}

pub fn feature_statistics(alloc: &FeatureAllocation) -> FeatureStatistics {
    let n = alloc.n();
    let mut new_at = vec![0usize; n];
    for k in 0..alloc.num_features() {
        if let Some(i) = alloc.column(k).iter().position(|&b| b) {
            new_at[i] += 1;
        }
    }
    let k_trajectory = new_at
        .iter()
        .scan(0, |acc, &d| {
            *acc += d;
            Some(*acc)
        })
        .collect();
    let mut multiplicities = vec![0usize; n];
    let counts = alloc.counts();
    for &s in &counts {
        multiplicities[s - 1] += 1;
    }
    let frequencies = counts.iter().map(|&s| s as f64 / n as f64).collect();
    FeatureStatistics { k_trajectory, multiplicities, frequencies }
}

/// `E[K_n] = γ Σ_{j=1..n} g_{j−1}(1,1)`.
pub fn expected_features(prims: &Primitives, gamma: f64, n: usize) -> Result<f64> {
    Ok(gamma * prims.sum_g11(n)?)
}

/// `E[K_{n,1}] = n γ g_{n−1}(1,1)`: each customer's dishes are, by
/// exchangeability, as likely to be singletons as those of the last one.
pub fn expected_singletons(prims: &Primitives, gamma: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Ok(0.0);
    }
    Ok(n as f64 * gamma * prims.ln_g11(n - 1)?.exp())
}

/// Constant `C` with `E[K_n] ~ γ C n^α`; `None` for DP.
pub fn powerlaw_constant(model: &GibbsModel) -> Result<Option<f64>> {
    model.validate()?;
    Ok(match model.variant {
        Variant::Dp { .. } => None,
        Variant::Py { alpha, theta } => Some((ln_gamma(theta + 1.0) - alpha.ln() - ln_gamma(theta + alpha)).exp()),
        Variant::Nig { beta } => {
            let r = beta.sqrt();
            Some(std::f64::consts::FRAC_2_SQRT_PI * r * bessel_k1_scaled(r)?)
        }
        Variant::Ngg { alpha, beta } => {
            let shift = beta.powf(alpha);
            let integral = integrate_against_stable(alpha, |t| (shift - alpha * t.ln() - beta * t).exp(), Tolerance::new(1e-12, 1e-10))?;
            Some(integral)
        }
    })
}
