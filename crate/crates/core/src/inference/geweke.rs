//! Joint-distribution test of the sampler: prior draws versus a chain that
//! alternates one sweep with a fresh draw of the data.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sampler::{LatentFactorState, Priors, Sampler, SamplerConfig, Updates};
use crate::diagnostics::geweke_z;
use crate::error::{Error, Result};
use crate::model::GibbsModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GewekeConfig {
    pub model: GibbsModel,
    pub n: usize,
    pub p: usize,
    pub rounds: usize,
    /// Batch count for the chain's standard error; batches must be long
    /// relative to the slowest autocorrelation time.
    pub batches: usize,
    /// Sweeps between successive data redraws.
    pub sweeps_per_round: usize,
    pub seed: u64,
    pub priors: Priors,
    pub updates: Updates,
}

impl GewekeConfig {
    pub fn new(model: GibbsModel, n: usize, p: usize, rounds: usize, seed: u64) -> Self {
        GewekeConfig { model, n, p, rounds, batches: 20, sweeps_per_round: 1, seed, priors: Priors::default(), updates: Updates::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GewekeStatistic {
    pub name: String,
    pub prior_mean: f64,
    pub chain_mean: f64,
    pub z: f64,
}

/// Scalar summaries compared between the two simulators.
fn summaries(s: &LatentFactorState) -> Vec<(&'static str, f64)> {
    let ln_a = s.sigma_a.iter().map(|v| 2.0 * v.ln()).sum::<f64>() / s.sigma_a.len().max(1) as f64;
    let ones: usize = s.z.counts().iter().sum();
    let singletons = s.z.counts().iter().filter(|&&c| c == 1).count();
    vec![
        ("features", s.num_features() as f64),
        ("ones", ones as f64),
        ("singletons", singletons as f64),
        ("gamma", s.gamma),
        ("alpha", s.model.alpha()),
        ("free_parameter", s.model.free_parameter()),
        ("log_var_y", 2.0 * s.sigma_y.ln()),
        ("log_var_w", 2.0 * s.sigma_w.ln()),
        ("mean_log_var_a", ln_a),
    ]
}

/// Per-statistic z-scores; statistics that are constant under both
/// simulators (for example `α` of a DP) are dropped.
pub fn geweke_check(cfg: &GewekeConfig) -> Result<Vec<GewekeStatistic>> {
    if cfg.rounds < 2 * cfg.batches {
        return Err(Error::domain("Geweke test needs at least two draws per batch"));
    }
    if cfg.sweeps_per_round == 0 {
        return Err(Error::domain("Geweke test needs at least one sweep per round"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut prior: Vec<Vec<f64>> = Vec::new();
    for _ in 0..cfg.rounds {
        let s = LatentFactorState::from_prior(&cfg.model, cfg.n, cfg.p, &cfg.priors, &cfg.updates, &mut rng)?;
        prior.push(summaries(&s).into_iter().map(|(_, v)| v).collect());
    }
    let init = LatentFactorState::from_prior(&cfg.model, cfg.n, cfg.p, &cfg.priors, &cfg.updates, &mut rng)?;
    let y = init.draw_data(&mut rng)?;
    let sampler_cfg = SamplerConfig {
        seed: cfg.seed ^ 0x9e37_79b9_7f4a_7c15,
        priors: cfg.priors,
        updates: cfg.updates,
        ..SamplerConfig::default()
    };
    let mut sampler = Sampler::new(y, init, sampler_cfg)?;
    let mut chain: Vec<Vec<f64>> = Vec::new();
    for _ in 0..cfg.rounds {
        for _ in 0..cfg.sweeps_per_round {
            sampler.sweep()?;
        }
        let fresh = sampler.state().draw_data(&mut rng)?;
        sampler.set_data(fresh)?;
        chain.push(summaries(sampler.state()).into_iter().map(|(_, v)| v).collect());
    }
    let names: Vec<&str> = summaries(sampler.state()).into_iter().map(|(n, _)| n).collect();
    let mut out = Vec::new();
    for (j, name) in names.iter().enumerate() {
        let a: Vec<f64> = prior.iter().map(|r| r[j]).collect();
        let b: Vec<f64> = chain.iter().map(|r| r[j]).collect();
        let constant = a.iter().chain(&b).all(|v| *v == a[0]);
        if constant {
            continue;
        }
        out.push(GewekeStatistic {
            name: name.to_string(),
            prior_mean: crate::diagnostics::mean(&a),
            chain_mean: crate::diagnostics::mean(&b),
            z: geweke_z(&a, &b, cfg.batches)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_run_produces_statistics() {
        let cfg = GewekeConfig { batches: 10, ..GewekeConfig::new(GibbsModel::dp(1.0).unwrap(), 4, 2, 200, 3) };
        let stats = geweke_check(&cfg).unwrap();
        assert!(stats.len() >= 6);
        assert!(!stats.iter().any(|s| s.name == "alpha"));
        assert!(stats.iter().all(|s| s.z.is_finite()));
    }
}
