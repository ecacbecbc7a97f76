use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::likelihood::{feature_mean, gaussian_log_density, normal_matrix};
use super::slice::slice_step;
use crate::error::{Error, Result};
use crate::ibp::{log_joint as ibp_log_joint, simulate_ibp_with, FeatureAllocation};
use crate::model::{GibbsModel, McConfig, Variant};
use crate::primitives::{PrimitiveCache, Primitives};

/// Hyperpriors. Variances are inverse-gamma; `γ` and the free parameter
/// (`θ` for DP, `θ + α` for PY, `β` for NGG/NIG) are gamma with a rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Priors {
    pub gamma_shape: f64,
    pub gamma_rate: f64,
    pub variance_shape: f64,
    pub variance_scale: f64,
    pub free_shape: f64,
    pub free_rate: f64,
}

impl Default for Priors {
    fn default() -> Self {
        Priors { gamma_shape: 1.0, gamma_rate: 1.0, variance_shape: 1.0, variance_scale: 1.0, free_shape: 1.0, free_rate: 1.0 }
    }
}

/// Which blocks of the state a sweep resamples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Updates {
    pub features: bool,
    pub loadings: bool,
    pub gamma: bool,
    pub alpha: bool,
    pub free: bool,
    pub scales: bool,
}

impl Default for Updates {
    fn default() -> Self {
        Updates { features: true, loadings: true, gamma: true, alpha: true, free: true, scales: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub priors: Priors,
    pub updates: Updates,
    /// Hyperparameter moves run on sweeps divisible by this.
    pub hyper_every: usize,
    /// Monte-Carlo draws per weight-table estimate during hyperparameter moves.
    pub mc_samples: usize,
    pub slice_width: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            iterations: 1000,
            burn_in: 500,
            thin: 1,
            seed: 1,
            priors: Priors::default(),
            updates: Updates::default(),
            hyper_every: 1,
            mc_samples: 1000,
            slice_width: 1.0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 || self.hyper_every == 0 {
            return Err(Error::domain("thin and hyper_every must be positive"));
        }
        if self.burn_in > self.iterations {
            return Err(Error::domain("burn-in exceeds the number of iterations"));
        }
        let p = &self.priors;
        if [p.gamma_shape, p.gamma_rate, p.variance_shape, p.variance_scale, p.free_shape, p.free_rate].iter().any(|v| !(*v > 0.0)) {
            return Err(Error::domain("prior parameters must be positive"));
        }
        if !(self.slice_width > 0.0) || self.mc_samples < 2 {
            return Err(Error::domain("slice width must be positive and mc_samples >= 2"));
        }
        Ok(())
    }
}

/// Latent feature model state. Features are an unordered collection: the
/// column order of `z`, `w` and the row order of `a` carry no meaning.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentFactorState {
    pub z: FeatureAllocation,
    /// `n × K`; entries with `Z = 0` are auxiliary draws from the prior.
    pub w: DMatrix<f64>,
    /// `K × p`.
    pub a: DMatrix<f64>,
    pub sigma_y: f64,
    pub sigma_w: f64,
    pub sigma_a: Vec<f64>,
    pub gamma: f64,
    pub model: GibbsModel,
}

fn draw_inverse_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> Result<f64> {
    let g = Gamma::new(shape, 1.0 / scale).map_err(|e| Error::Numeric(e.to_string()))?;
    Ok(1.0 / g.sample(rng))
}

fn draw_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    let g = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::Numeric(e.to_string()))?;
    Ok(g.sample(rng))
}

impl LatentFactorState {
    pub fn n(&self) -> usize {
        self.z.n()
    }

    pub fn num_features(&self) -> usize {
        self.z.num_features()
    }

    pub fn p(&self) -> usize {
        self.a.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, k, p) = (self.n(), self.num_features(), self.sigma_a.len());
        if self.w.shape() != (n, k) || self.a.shape() != (k, p) {
            return Err(Error::domain("state dimensions are inconsistent"));
        }
        let scales_ok = self.sigma_y > 0.0 && self.sigma_w > 0.0 && self.sigma_a.iter().all(|s| *s > 0.0);
        if !scales_ok || !(self.gamma >= 0.0) {
            return Err(Error::domain("scale parameters must be positive"));
        }
        self.model.validate()
    }

    /// Draws every latent quantity from the prior, with `model`'s family and,
    /// where `updates` frees them, `α`, the free parameter and `γ` from their priors.
    pub fn from_prior<R: Rng + ?Sized>(
        model: &GibbsModel,
        n: usize,
        p: usize,
        priors: &Priors,
        updates: &Updates,
        rng: &mut R,
    ) -> Result<Self> {
        let mut model = *model;
        if updates.alpha && model.has_free_alpha() {
            let alpha = rng.random_range(0.0..1.0_f64).max(1e-12);
            let free = model.free_parameter();
            model = model.with_parameters(alpha, free.max(1e-12 - alpha))?;
        }
        if updates.free {
            let draw = draw_gamma(priors.free_shape, priors.free_rate, rng)?.max(1e-300);
            model = match model.variant {
                Variant::Py { alpha, .. } => model.with_parameters(alpha, draw - alpha)?,
                _ => model.with_parameters(model.alpha(), draw)?,
            };
        }
        let gamma = if updates.gamma { draw_gamma(priors.gamma_shape, priors.gamma_rate, rng)? } else { 1.0 };
        let var = |rng: &mut R| draw_inverse_gamma(priors.variance_shape, priors.variance_scale, rng).map(f64::sqrt);
        let sigma_y = var(rng)?;
        let sigma_w = var(rng)?;
        let sigma_a = (0..p).map(|_| var(rng)).collect::<Result<Vec<_>>>()?;
        let prims = Primitives::new(&model, n)?;
        let z = simulate_ibp_with(&prims, gamma, n, rng)?;
        let k = z.num_features();
        let w = normal_matrix(n, k, |_, _| sigma_w, rng);
        let a = normal_matrix(k, p, |_, j| sigma_a[j], rng);
        Ok(LatentFactorState { z, w, a, sigma_y, sigma_w, sigma_a, gamma, model })
    }

    /// Draws `Y` given the state.
    pub fn draw_data<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DMatrix<f64>> {
        let noise = normal_matrix(self.n(), self.p(), |_, _| self.sigma_y, rng);
        Ok(feature_mean(&self.z, &self.w, &self.a)? + noise)
    }
}

/// One retained draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub iteration: usize,
    pub k: usize,
    pub gamma: f64,
    pub alpha: f64,
    pub theta: f64,
    pub sigma_y: f64,
    pub sigma_w: f64,
    pub sigma_a_mean: f64,
    pub log_likelihood: f64,
    pub log_joint: f64,
}

/// Acceptance counts of the singleton Metropolis-Hastings move.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveStats {
    pub proposals: usize,
    pub accepted: usize,
}

/// Black-box Gibbs sampler: the prior enters only through `PrimitiveCache`.
#[derive(Debug, Clone)]
pub struct Sampler {
    y: DMatrix<f64>,
    state: LatentFactorState,
    cache: PrimitiveCache,
    /// `Y − (W ∘ Z) A`, kept in sync by every move.
    resid: DMatrix<f64>,
    rng: ChaCha8Rng,
    config: SamplerConfig,
    sweeps: usize,
    moves: MoveStats,
}

impl Sampler {
    pub fn new(y: DMatrix<f64>, state: LatentFactorState, config: SamplerConfig) -> Result<Self> {
        config.validate()?;
        state.validate()?;
        if y.shape() != (state.n(), state.p()) {
            return Err(Error::domain(format!("data is {}x{}, state expects {}x{}", y.nrows(), y.ncols(), state.n(), state.p())));
        }
        let mut state = state;
        if !state.model.is_closed_form() {
            state.model = state.model.with_mc(McConfig { samples: config.mc_samples, seed: state.model.mc.seed });
        }
        let cache = PrimitiveCache::new(&state.model, state.n())?;
        let resid = &y - feature_mean(&state.z, &state.w, &state.a)?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Sampler { y, state, cache, resid, rng, config, sweeps: 0, moves: MoveStats::default() })
    }

    pub fn state(&self) -> &LatentFactorState {
        &self.state
    }

    pub fn cache(&self) -> &PrimitiveCache {
        &self.cache
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn move_stats(&self) -> MoveStats {
        self.moves
    }

    /// Replaces the data (used by joint-distribution tests).
    pub fn set_data(&mut self, y: DMatrix<f64>) -> Result<()> {
        if y.shape() != self.y.shape() {
            return Err(Error::domain("replacement data has a different shape"));
        }
        self.y = y;
        self.resid = &self.y - feature_mean(&self.state.z, &self.state.w, &self.state.a)?;
        Ok(())
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn sweep(&mut self) -> Result<()> {
        let u = self.config.updates;
        if u.features {
            for i in 0..self.state.n() {
                self.update_row(i)?;
                self.singleton_move(i)?;
            }
        }
        if u.loadings {
            self.update_weights()?;
            self.update_loadings()?;
        }
        if u.gamma {
            self.update_gamma()?;
        }
        if self.sweeps % self.config.hyper_every == 0 && (u.alpha || u.free) {
            self.update_hyper()?;
        }
        if u.scales {
            self.update_scales()?;
        }
        self.sweeps += 1;
        Ok(())
    }

    fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Updates row `i` jointly in `(Z_ik, W_ik)` with `W_ik`
    /// integrated out of the indicator's conditional.
    fn update_row(&mut self, i: usize) -> Result<()> {
        let n = self.state.n();
        let p = self.state.p();
        let sy2 = self.state.sigma_y.powi(2);
        let sw2 = self.state.sigma_w.powi(2);
        let mut counts = self.state.z.counts();
        let mut r = vec![0.0; p];
        for k in 0..self.state.num_features() {
            let on = self.state.z.get(i, k);
            let others = counts[k] - on as usize;
            if others == 0 {
                continue;
            }
            let prior = self.cache.take_probability(others);
            if !(0.0..=1.0).contains(&prior) {
                return Err(Error::InvalidProbability { value: prior, context: format!("feature prior, row {i}, {others} others of {n}") });
            }
            let wik = self.state.w[(i, k)];
            let (mut s, mut t) = (0.0, 0.0);
            for (j, rj) in r.iter_mut().enumerate() {
                let akj = self.state.a[(k, j)];
                *rj = self.resid[(i, j)] + if on { wik * akj } else { 0.0 };
                s += akj * akj;
                t += akj * *rj;
            }
            let v = 1.0 / (1.0 / sw2 + s / sy2);
            let mu = v * t / sy2;
            let log_odds = prior.ln() - (-prior).ln_1p() + 0.5 * (v / sw2).ln() + 0.5 * mu * mu / v;
            let take = self.rng.random::<f64>() * (1.0 + (-log_odds).exp()) < 1.0;
            let w_new = if take { mu + v.sqrt() * self.normal() } else { self.state.sigma_w * self.normal() };
            self.state.z.set(i, k, take);
            self.state.w[(i, k)] = w_new;
            counts[k] = others + take as usize;
            for (j, rj) in r.iter().enumerate() {
                self.resid[(i, j)] = rj - if take { w_new * self.state.a[(k, j)] } else { 0.0 };
            }
        }
        Ok(())
    }

    /// Replaces row `i`'s singletons by a Poisson number of fresh
    /// ones drawn from the prior; accept on the likelihood ratio.
    fn singleton_move(&mut self, i: usize) -> Result<()> {
        let n = self.state.n();
        let p = self.state.p();
        let counts = self.state.z.counts();
        let singles: Vec<usize> = (0..counts.len()).filter(|&k| counts[k] == 1 && self.state.z.get(i, k)).collect();
        let rate = self.state.gamma * self.cache.g11(n - 1);
        let fresh = if rate > 0.0 {
            Poisson::new(rate).map_err(|e| Error::Numeric(e.to_string()))?.sample(&mut self.rng) as usize
        } else {
            0
        };
        if fresh == 0 && singles.is_empty() {
            return Ok(());
        }
        self.moves.proposals += 1;
        let w_new = normal_matrix(n, fresh, |_, _| self.state.sigma_w, &mut self.rng);
        let sigma_a = self.state.sigma_a.clone();
        let a_new = normal_matrix(fresh, p, |_, j| sigma_a[j], &mut self.rng);
        let mut r_new: Vec<f64> = (0..p).map(|j| self.resid[(i, j)]).collect();
        for &k in &singles {
            for (j, rj) in r_new.iter_mut().enumerate() {
                *rj += self.state.w[(i, k)] * self.state.a[(k, j)];
            }
        }
        for t in 0..fresh {
            for (j, rj) in r_new.iter_mut().enumerate() {
                *rj -= w_new[(i, t)] * a_new[(t, j)];
            }
        }
        let r_old: Vec<f64> = (0..p).map(|j| self.resid[(i, j)]).collect();
        let log_accept = residual_log_ratio(&r_old, &r_new, self.state.sigma_y);
        if self.rng.random::<f64>().ln() >= log_accept {
            return Ok(());
        }
        self.moves.accepted += 1;
        let state = &mut self.state;
        let mut w = std::mem::replace(&mut state.w, DMatrix::zeros(0, 0));
        let mut a = std::mem::replace(&mut state.a, DMatrix::zeros(0, 0));
        for &k in singles.iter().rev() {
            state.z.remove_column(k);
            w = w.remove_column(k);
            a = a.remove_row(k);
        }
        for t in 0..fresh {
            let mut column = vec![false; n];
            column[i] = true;
            state.z.push_column(column, self.rng.random());
            let kk = w.ncols();
            w = w.insert_column(kk, 0.0);
            w.set_column(kk, &w_new.column(t));
            a = a.insert_row(kk, 0.0);
            a.set_row(kk, &a_new.row(t));
        }
        state.w = w;
        state.a = a;
        for (j, rj) in r_new.iter().enumerate() {
            self.resid[(i, j)] = *rj;
        }
        Ok(())
    }

    /// Draws `N(P⁻¹b, P⁻¹)` given the precision `P` and `b`.
    fn gaussian_from_precision(&mut self, precision: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>> {
        let chol = precision.cholesky().ok_or_else(|| Error::Numeric("posterior precision is not positive definite".into()))?;
        let mean = chol.solve(&b);
        let xi = DVector::from_fn(mean.len(), |_, _| self.normal());
        let l = chol.l();
        let dev = l.tr_solve_lower_triangular(&xi).ok_or_else(|| Error::Numeric("singular Cholesky factor".into()))?;
        Ok(mean + dev)
    }

    /// Weights, row by row, active entries from the conjugate
    /// Gaussian, inactive entries from the prior.
    fn update_weights(&mut self) -> Result<()> {
        let (n, k) = (self.state.n(), self.state.num_features());
        let sy2 = self.state.sigma_y.powi(2);
        let sw2 = self.state.sigma_w.powi(2);
        for i in 0..n {
            let active: Vec<usize> = (0..k).filter(|&c| self.state.z.get(i, c)).collect();
            for c in 0..k {
                if !self.state.z.get(i, c) {
                    self.state.w[(i, c)] = self.state.sigma_w * self.normal();
                }
            }
            if active.is_empty() {
                continue;
            }
            let m = active.len();
            let a_act = DMatrix::from_fn(m, self.state.p(), |r, j| self.state.a[(active[r], j)]);
            let precision = &a_act * a_act.transpose() / sy2 + DMatrix::identity(m, m) / sw2;
            let b = &a_act * self.y.row(i).transpose() / sy2;
            let draw = self.gaussian_from_precision(precision, b)?;
            for (r, &c) in active.iter().enumerate() {
                self.state.w[(i, c)] = draw[r];
            }
        }
        Ok(())
    }

    /// Loadings, column by column from the conjugate Gaussian.
    fn update_loadings(&mut self) -> Result<()> {
        let (n, k, p) = (self.state.n(), self.state.num_features(), self.state.p());
        if k > 0 {
            let sy2 = self.state.sigma_y.powi(2);
            let m = DMatrix::from_fn(n, k, |i, c| if self.state.z.get(i, c) { self.state.w[(i, c)] } else { 0.0 });
            let gram = m.transpose() * &m / sy2;
            let mty = m.transpose() * &self.y / sy2;
            for j in 0..p {
                let precision = &gram + DMatrix::identity(k, k) / self.state.sigma_a[j].powi(2);
                let draw = self.gaussian_from_precision(precision, mty.column(j).into_owned())?;
                self.state.a.set_column(j, &draw);
            }
        }
        self.resid = &self.y - feature_mean(&self.state.z, &self.state.w, &self.state.a)?;
        Ok(())
    }

    /// Conjugate gamma update of the mass parameter.
    fn update_gamma(&mut self) -> Result<()> {
        let pr = self.config.priors;
        let shape = pr.gamma_shape + self.state.num_features() as f64;
        let rate = pr.gamma_rate + self.cache.sum_g11();
        self.state.gamma = draw_gamma(shape, rate, &mut self.rng)?;
        Ok(())
    }

    fn ln_free_prior(&self, free: f64) -> f64 {
        let pr = self.config.priors;
        (pr.free_shape - 1.0) * free.ln() - pr.free_rate * free
    }

    /// `ln p(Z | γ, model) + ln prior(model)`, `−∞` where undefined.
    fn hyper_target(&self, model: &GibbsModel) -> f64 {
        let Ok(cache) = PrimitiveCache::new(model, self.state.n()) else {
            return f64::NEG_INFINITY;
        };
        let Ok(lj) = ibp_log_joint(&self.state.z, &cache, self.state.gamma) else {
            return f64::NEG_INFINITY;
        };
        let free = match model.variant {
            Variant::Py { alpha, theta } => theta + alpha,
            _ => model.free_parameter(),
        };
        lj + self.ln_free_prior(free)
    }

    /// Slice moves on `α` (uniform prior) and on the log of the
    /// free parameter, holding `θ + α` fixed during `α` moves for PY.
    /// Tabled families draw one Monte-Carlo seed per move so the target is a
    /// fixed function within the move.
    fn update_hyper(&mut self) -> Result<()> {
        // the targets borrow `self`, so the generator is moved out meanwhile
        let mut rng = std::mem::replace(&mut self.rng, ChaCha8Rng::seed_from_u64(0));
        let result = self.hyper_moves(&mut rng);
        self.rng = rng;
        result?;
        self.cache = PrimitiveCache::new(&self.state.model, self.state.n())?;
        Ok(())
    }

    fn reseed(&mut self, rng: &mut ChaCha8Rng) {
        if !self.state.model.is_closed_form() {
            let seed = rng.random();
            self.state.model = self.state.model.with_mc(McConfig { samples: self.config.mc_samples, seed });
        }
    }

    fn hyper_moves(&mut self, rng: &mut ChaCha8Rng) -> Result<()> {
        let u = self.config.updates;
        let width = self.config.slice_width;
        if u.alpha && self.state.model.has_free_alpha() {
            self.reseed(rng);
            let base = self.state.model;
            let anchor = match base.variant {
                Variant::Py { alpha, theta } => theta + alpha,
                _ => base.free_parameter(),
            };
            let at = |x: f64| -> Option<GibbsModel> {
                let free = if matches!(base.variant, Variant::Py { .. }) { anchor - x } else { anchor };
                base.with_parameters(x, free).ok()
            };
            let target = |x: f64| at(x).map_or(f64::NEG_INFINITY, |m| self.hyper_target(&m));
            let x0 = base.alpha();
            let f0 = target(x0);
            let (x, _) = slice_step(x0, f0, target, 0.25 * width, (0.0, 1.0), 10, rng)?;
            self.state.model = at(x).expect("accepted point is admissible");
        }
        if u.free {
            self.reseed(rng);
            let base = self.state.model;
            let alpha = base.alpha();
            let is_py = matches!(base.variant, Variant::Py { .. });
            let at = |ln_free: f64| -> Option<GibbsModel> {
                let f = ln_free.exp();
                base.with_parameters(alpha, if is_py { f - alpha } else { f }).ok()
            };
            // Jacobian of the log transform
            let target = |x: f64| at(x).map_or(f64::NEG_INFINITY, |m| self.hyper_target(&m) + x);
            let x0 = (if is_py { base.free_parameter() + alpha } else { base.free_parameter() }).ln();
            let f0 = target(x0);
            let (x, _) = slice_step(x0, f0, target, width, (-50.0, 50.0), 10, rng)?;
            self.state.model = at(x).expect("accepted point is admissible");
        }
        Ok(())
    }

    /// Slice moves on the log variances under inverse-gamma priors.
    fn update_scales(&mut self) -> Result<()> {
        let pr = self.config.priors;
        let (n, k, p) = (self.state.n(), self.state.num_features(), self.state.p());
        let width = self.config.slice_width;
        let move_variance = |rng: &mut ChaCha8Rng, sigma: f64, count: usize, ss: f64| -> Result<f64> {
            let target = |u: f64| -(pr.variance_shape + 0.5 * count as f64) * u - (pr.variance_scale + 0.5 * ss) * (-u).exp();
            let u0 = 2.0 * sigma.ln();
            let (u, _) = slice_step(u0, target(u0), target, width, (-700.0, 700.0), 20, rng)?;
            Ok((0.5 * u).exp())
        };
        let ss_y = self.resid.norm_squared();
        self.state.sigma_y = move_variance(&mut self.rng, self.state.sigma_y, n * p, ss_y)?;
        let ss_w = self.state.w.norm_squared();
        self.state.sigma_w = move_variance(&mut self.rng, self.state.sigma_w, n * k, ss_w)?;
        for j in 0..p {
            let ss = self.state.a.column(j).norm_squared();
            self.state.sigma_a[j] = move_variance(&mut self.rng, self.state.sigma_a[j], k, ss)?;
        }
        if k > 0 {
            self.rescale_move()?;
        }
        Ok(())
    }

    /// Slice move along `(W, σ_W, A, σ_A) → (cW, cσ_W, A/c, σ_A/c)`. `WA` is
    /// fixed and the Gaussian terms cancel the Jacobian, so only the
    /// variance priors depend on `ln c`.
    fn rescale_move(&mut self) -> Result<()> {
        let pr = self.config.priors;
        let ln_ig = |u: f64| -pr.variance_shape * u - pr.variance_scale * (-u).exp();
        let uw = 2.0 * self.state.sigma_w.ln();
        let ua: Vec<f64> = self.state.sigma_a.iter().map(|s| 2.0 * s.ln()).collect();
        let target = |t: f64| ln_ig(uw + 2.0 * t) + ua.iter().map(|&u| ln_ig(u - 2.0 * t)).sum::<f64>();
        let (t, _) = slice_step(0.0, target(0.0), target, self.config.slice_width, (-350.0, 350.0), 20, &mut self.rng)?;
        let c = t.exp();
        self.state.w *= c;
        self.state.a /= c;
        self.state.sigma_w *= c;
        self.state.sigma_a.iter_mut().for_each(|s| *s /= c);
        Ok(())
    }

    pub fn log_likelihood(&self) -> f64 {
        gaussian_log_density(self.resid.norm_squared(), self.resid.len(), self.state.sigma_y)
    }

    /// Log joint density of data, latent variables and hyperparameters
    /// (variances as coordinates; base-measure terms omitted).
    pub fn log_joint(&self) -> Result<f64> {
        let s = &self.state;
        let pr = self.config.priors;
        let mut total = self.log_likelihood() + ibp_log_joint(&s.z, &self.cache, s.gamma)?;
        total += gaussian_log_density(s.w.norm_squared(), s.w.len(), s.sigma_w);
        for j in 0..s.p() {
            total += gaussian_log_density(s.a.column(j).norm_squared(), s.num_features(), s.sigma_a[j]);
        }
        let ln_ig = |sd: f64| {
            let v = sd * sd;
            pr.variance_shape * pr.variance_scale.ln() - crate::special::ln_gamma(pr.variance_shape) - (pr.variance_shape + 1.0) * v.ln() - pr.variance_scale / v
        };
        total += ln_ig(s.sigma_y) + ln_ig(s.sigma_w) + s.sigma_a.iter().map(|&v| ln_ig(v)).sum::<f64>();
        let ln_gamma_density = |x: f64, a: f64, b: f64| a * b.ln() - crate::special::ln_gamma(a) + (a - 1.0) * x.ln() - b * x;
        if s.gamma > 0.0 {
            total += ln_gamma_density(s.gamma, pr.gamma_shape, pr.gamma_rate);
        }
        let free = match s.model.variant {
            Variant::Py { alpha, theta } => theta + alpha,
            _ => s.model.free_parameter(),
        };
        total += ln_gamma_density(free, pr.free_shape, pr.free_rate);
        if !total.is_finite() {
            return Err(Error::Numeric(format!(
                "log joint is {total} at sweep {} (K={}, sigma_y={}, sigma_w={}, gamma={}, model={})",
                self.sweeps,
                s.num_features(),
                s.sigma_y,
                s.sigma_w,
                s.gamma,
                s.model
            )));
        }
        Ok(total)
    }

    pub fn record(&self, iteration: usize) -> Result<SampleRecord> {
        let s = &self.state;
        let sigma_a_mean = s.sigma_a.iter().sum::<f64>() / s.sigma_a.len().max(1) as f64;
        Ok(SampleRecord {
            iteration,
            k: s.num_features(),
            gamma: s.gamma,
            alpha: s.model.alpha(),
            theta: s.model.free_parameter(),
            sigma_y: s.sigma_y,
            sigma_w: s.sigma_w,
            sigma_a_mean,
            log_likelihood: self.log_likelihood(),
            log_joint: self.log_joint()?,
        })
    }
}

/// Log-likelihood ratio of a row moving from residual `old` to `new`.
fn residual_log_ratio(old: &[f64], new: &[f64], sigma_y: f64) -> f64 {
    let ss = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();
    -(ss(new) - ss(old)) / (2.0 * sigma_y * sigma_y)
}

/// Output of [`run_chain`].
#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub samples: Vec<SampleRecord>,
    pub final_state: LatentFactorState,
    pub cache: PrimitiveCache,
    pub moves: MoveStats,
}

/// Runs `config.iterations` sweeps, retaining iterations `t ≥ burn_in` with
/// `(t − burn_in) % thin == 0`; iteration 0 is the initial state.
pub fn run_chain(y: DMatrix<f64>, init: LatentFactorState, config: SamplerConfig) -> Result<ChainOutput> {
    let mut sampler = Sampler::new(y, init, config)?;
    let mut samples = Vec::new();
    let keep = |t: usize| t >= config.burn_in && (t - config.burn_in) % config.thin == 0;
    if keep(0) {
        samples.push(sampler.record(0)?);
    }
    for t in 1..=config.iterations {
        sampler.sweep()?;
        if keep(t) {
            samples.push(sampler.record(t)?);
        } else if !sampler.log_likelihood().is_finite() {
            return Err(Error::Numeric(format!("log likelihood diverged at sweep {t}")));
        }
    }
    Ok(ChainOutput { samples, final_state: sampler.state.clone(), cache: sampler.cache.clone(), moves: sampler.moves })
}

/// Starting state for a fit: unit scales, `γ = 1`, features from the prior.
pub fn initial_state(y: &DMatrix<f64>, model: &GibbsModel, seed: u64) -> Result<LatentFactorState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, p) = y.shape();
    let prims = Primitives::new(model, n)?;
    let z = simulate_ibp_with(&prims, 1.0, n, &mut rng)?;
    let k = z.num_features();
    let w = normal_matrix(n, k, |_, _| 1.0, &mut rng);
    let a = normal_matrix(k, p, |_, _| 1.0, &mut rng);
    Ok(LatentFactorState { z, w, a, sigma_y: 1.0, sigma_w: 1.0, sigma_a: vec![1.0; p], gamma: 1.0, model: *model })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::likelihood::log_likelihood;

    fn tiny_state(model: GibbsModel) -> (DMatrix<f64>, LatentFactorState) {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = LatentFactorState::from_prior(&model, 4, 3, &Priors::default(), &Updates { alpha: false, free: false, ..Updates::default() }, &mut rng).unwrap();
        let y = s.draw_data(&mut rng).unwrap();
        (y, s)
    }

    #[test]
    fn prior_term_example() {
        // PY(0.5,1), n = 4, two other rows hold the feature: 1.5 g_3(1,0) = 0.375
        let cache = PrimitiveCache::new(&GibbsModel::py(0.5, 1.0).unwrap(), 4).unwrap();
        assert!((cache.take_probability(2) - 0.375).abs() < 1e-14);
    }

    #[test]
    fn gamma_posterior_example() {
        // DP(1), n = 3: Σ g_{j−1}(1,1) = 1 + 1/2 + 1/3
        let cache = PrimitiveCache::new(&GibbsModel::dp(1.0).unwrap(), 3).unwrap();
        assert!((cache.sum_g11() - 11.0 / 6.0).abs() < 1e-14);
    }

    #[test]
    fn zero_iterations_keep_initial_state() {
        let (y, s) = tiny_state(GibbsModel::dp(1.0).unwrap());
        let cfg = SamplerConfig { iterations: 0, burn_in: 0, ..SamplerConfig::default() };
        let out = run_chain(y, s.clone(), cfg).unwrap();
        assert_eq!(out.samples.len(), 1);
        assert_eq!(out.final_state, s);
    }

    #[test]
    fn residual_stays_in_sync() {
        let (y, s) = tiny_state(GibbsModel::py(0.3, 1.0).unwrap());
        let mut sampler = Sampler::new(y.clone(), s, SamplerConfig::default()).unwrap();
        for _ in 0..50 {
            sampler.sweep().unwrap();
            let st = sampler.state();
            st.validate().unwrap();
            let direct = log_likelihood(&y, &st.z, &st.w, &st.a, st.sigma_y).unwrap();
            assert!((direct - sampler.log_likelihood()).abs() < 1e-8);
            assert!(sampler.cache().coherence_residual() < 1e-10);
        }
    }

    #[test]
    fn identical_singleton_proposal_is_accepted() {
        let r = [0.3, -1.2, 2.0];
        assert_eq!(residual_log_ratio(&r, &r, 0.7), 0.0);
        assert!(residual_log_ratio(&r, &[0.0, 0.0, 0.0], 1.0) > 0.0);
    }

    #[test]
    fn deterministic_under_seed() {
        let (y, s) = tiny_state(GibbsModel::py(0.5, 1.0).unwrap());
        let cfg = SamplerConfig { iterations: 20, burn_in: 0, ..SamplerConfig::default() };
        let a = run_chain(y.clone(), s.clone(), cfg).unwrap();
        let b = run_chain(y, s, cfg).unwrap();
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn tabled_family_runs() {
        let (y, s) = tiny_state(GibbsModel::ngg(0.4, 1.0).unwrap());
        let cfg = SamplerConfig { iterations: 5, burn_in: 0, mc_samples: 200, ..SamplerConfig::default() };
        let out = run_chain(y, s, cfg).unwrap();
        assert_eq!(out.samples.len(), 6);
        assert!(out.samples.iter().all(|r| r.alpha > 0.0 && r.alpha < 1.0));
    }
}
