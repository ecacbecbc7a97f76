use std::thread;

use gibbs_ibp::diagnostics::{credible_interval, mean};
use gibbs_ibp::ibp::{feature_statistics, powerlaw_constant, simulate_ibp};
use gibbs_ibp::inference::geweke::{geweke_check, GewekeConfig};
use gibbs_ibp::inference::{dense_plus_singletons, initial_state, run_chain, synthesize_data, Priors, SamplerConfig, Scales, Updates};
use gibbs_ibp::model::{Family, GibbsModel, McConfig};
use gibbs_ibp::partition::sample_partition;
use gibbs_ibp::primitives::{calibrate, calibrate_alpha, Primitives};
use gibbs_ibp::stick::structural_density;
use gibbs_ibp::store::TableStore;
use serde_json::json;

use crate::args::*;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::{allocation_rows, matrix_rows, num, read_matrix, RunOutput};

/// Monte-Carlo draws per table when a subcommand does not say otherwise.
const DEFAULT_MC: usize = 100_000;
/// Inference rebuilds tables at every hyperparameter move, so it uses fewer.
const INFERENCE_MC: usize = 1_000;

pub fn dispatch(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Simulate(a) => simulate(a),
        Command::Partition(a) => partition(a),
        Command::Primitives(a) => primitives(a),
        Command::Stats(a) => stats(a),
        Command::Calibrate(a) => calibrate_cmd(a),
        Command::Synth(a) => synth(a),
        Command::Fit(a) => fit(a),
        Command::Geweke(a) => geweke(a),
        Command::Structural(a) => structural(a),
    }
}

fn positive(n: usize, flag: &str) -> CliResult<()> {
    if n == 0 {
        Err(CliError::usage(format!("--{flag} must be at least 1")))
    } else {
        Ok(())
    }
}

fn simulate(a: SimulateArgs) -> CliResult<()> {
    let model = a.model.build(DEFAULT_MC)?;
    positive(a.n, "n")?;
    if !(a.gamma >= 0.0 && a.gamma.is_finite()) {
        return Err(CliError::usage("--gamma must be finite and non-negative"));
    }
    let alloc = simulate_ibp(&model, a.gamma, a.n, a.seed)?;
    let st = feature_statistics(&alloc);
    let mut out = RunOutput::new(&a.out, RunConfig::from_args("simulate", &a)?)?;
    out.csv("allocation.csv", &["customer", "feature"], allocation_rows(&alloc))?;
    let mut prev = 0;
    let traj = st.k_trajectory.iter().enumerate().map(|(i, &k)| {
        let row = vec![(i + 1).to_string(), k.to_string(), (k - prev).to_string()];
        prev = k;
        row
    });
    out.csv("statistics.csv", &["customer", "features", "new_features"], traj.collect::<Vec<_>>())?;
    let mult = st.multiplicities.iter().enumerate().map(|(j, c)| vec![(j + 1).to_string(), c.to_string()]);
    out.csv("multiplicities.csv", &["multiplicity", "features"], mult)?;
    out.note("model", model)?;
    out.note("num_features", alloc.num_features())?;
    out.finish()
}

fn partition(a: PartitionArgs) -> CliResult<()> {
    let model = a.model.build(DEFAULT_MC)?;
    positive(a.n, "n")?;
    let part = sample_partition(&model, a.n, a.seed)?;
    let mut out = RunOutput::new(&a.out, RunConfig::from_args("partition", &a)?)?;
    let assign = part.assignments.iter().enumerate().map(|(i, b)| vec![(i + 1).to_string(), (b + 1).to_string()]);
    out.csv("partition.csv", &["customer", "block"], assign)?;
    let sizes = part.block_sizes.iter().enumerate().map(|(b, s)| vec![(b + 1).to_string(), s.to_string()]);
    out.csv("blocks.csv", &["block", "size"], sizes)?;
    out.note("model", model)?;
    out.note("num_blocks", part.num_blocks())?;
    out.finish()
}

fn primitives(a: PrimitivesArgs) -> CliResult<()> {
    let model = a.model.build(DEFAULT_MC)?;
    positive(a.n, "n")?;
    let store = a.cache_dir.clone().map(TableStore::new).or_else(TableStore::from_env);
    let prims = match &store {
        Some(s) => Primitives::with_store(&model, a.n, s)?,
        None => Primitives::new(&model, a.n)?,
    };
    let n = a.n;
    let mut rows = Vec::with_capacity(n);
    for m in 0..n {
        let ln_g10 = if m == 0 { None } else { Some(prims.ln_g10(m)?) };
        let ln_g11 = prims.ln_g11(m)?;
        let s = m + 1;
        let ln_gs1 = prims.ln_gs1(n, s)?;
        let opt = |v: Option<f64>, f: fn(f64) -> f64| v.map(|x| num(f(x))).unwrap_or_default();
        rows.push(vec![
            m.to_string(),
            opt(ln_g10, f64::exp),
            num(ln_g11.exp()),
            s.to_string(),
            num(ln_gs1.exp()),
            opt(ln_g10, |x| x),
            num(ln_g11),
            num(ln_gs1),
        ]);
    }
    let mut out = RunOutput::new(&a.out, RunConfig::from_args("primitives", &a)?)?;
    let header = ["m", "g_m_1_0", "g_m_1_1", "s", "g_n_minus_s_s_1", "ln_g_m_1_0", "ln_g_m_1_1", "ln_g_n_minus_s_s_1"];
    out.csv("primitives.csv", &header, rows)?;
    out.note("model", model)?;
    if let Some(s) = &store {
        out.note("cache_dir", s.dir())?;
    }
    out.finish()
}

struct Trajectory {
    rows: Vec<Vec<String>>,
    constant: Option<f64>,
}

fn trajectory(spec: &ModelSpec, model: &GibbsModel, gamma: f64, n_max: usize) -> CliResult<Trajectory> {
    let prims = Primitives::new(model, n_max)?;
    let alpha = model.alpha();
    let mut rows = Vec::with_capacity(n_max);
    let mut cumulative = 0.0;
    for n in 1..=n_max {
        let g = prims.ln_g11(n - 1)?.exp();
        cumulative += g;
        let ek = gamma * cumulative;
        let nf = n as f64;
        rows.push(vec![spec.text.clone(), n.to_string(), num(ek), num(nf * gamma * g), num(ek / nf.powf(alpha))]);
    }
    Ok(Trajectory { rows, constant: powerlaw_constant(model)? })
}

fn stats(a: StatsArgs) -> CliResult<()> {
    positive(a.n_max, "n-max")?;
    if !(a.gamma >= 0.0 && a.gamma.is_finite()) {
        return Err(CliError::usage("--gamma must be finite and non-negative"));
    }
    let mc = McConfig { samples: a.mc_samples, seed: a.mc_seed };
    let models: Vec<GibbsModel> = a.models.iter().map(|s| s.model.with_mc(mc)).collect();
    // one worker per model; results are assembled in input order
    let results: Vec<CliResult<Trajectory>> = thread::scope(|scope| {
        let handles: Vec<_> = a.models.iter().zip(&models).map(|(spec, m)| scope.spawn(move || trajectory(spec, m, a.gamma, a.n_max))).collect();
        handles.into_iter().map(|h| h.join().unwrap_or_else(|_| Err(CliError::other("worker thread panicked")))).collect()
    });
    let mut out = RunOutput::new(&a.out, RunConfig::from_args("stats", &a)?)?;
    let mut rows = Vec::new();
    let mut constants = Vec::new();
    for ((spec, model), r) in a.models.iter().zip(&models).zip(results) {
        let t = r?;
        let alpha = model.alpha();
        let asym = t.constant.map(|c| num(a.gamma * c * (a.n_max as f64).powf(alpha))).unwrap_or_default();
        constants.push(vec![spec.text.clone(), num(alpha), t.constant.map(num).unwrap_or_default(), asym]);
        rows.extend(t.rows);
    }
    out.csv("stats.csv", &["model", "n", "expected_features", "expected_singletons", "features_over_n_alpha"], rows)?;
    out.csv("constants.csv", &["model", "alpha", "powerlaw_constant", "asymptotic_features_at_n_max"], constants)?;
    out.note("models", &models)?;
    out.finish()
}

fn calibrate_cmd(a: CalibrateArgs) -> CliResult<()> {
    let mc = McConfig { samples: a.mc_samples, seed: a.mc_seed };
    let family = Family::from(a.family);
    let cal = match a.fit {
        FitTarget::Free => {
            let alpha = match family {
                Family::Py | Family::Ngg => a.alpha.ok_or_else(|| CliError::usage(format!("calibrating {family} needs --alpha")))?,
                _ => 0.0,
            };
            calibrate(family, alpha, a.m, a.target, mc)?
        }
        FitTarget::Alpha => {
            let free = a.free.ok_or_else(|| CliError::usage("--fit alpha needs --free (theta for py, beta for ngg)"))?;
            calibrate_alpha(family, free, a.m, a.target, mc)?
        }
    };
    let model = GibbsModel::from_family(family, cal.alpha, cal.parameter)?;
    let report = json!({
        "run": RunConfig::from_args("calibrate", &a)?,
        "calibration": cal,
        "model": model,
    });
    let text = serde_json::to_string_pretty(&report)? + "\n";
    match &a.out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn synth(a: SynthArgs) -> CliResult<()> {
    positive(a.p, "p")?;
    for (v, f) in [(a.sigma_y, "sigma-y"), (a.sigma_w, "sigma-w"), (a.sigma_a, "sigma-a")] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(CliError::usage(format!("--{f} must be positive")));
        }
    }
    let z = dense_plus_singletons(a.n, a.singletons).map_err(|e| CliError::usage(e.to_string()))?;
    let data = synthesize_data(&z, a.p, Scales { sigma_y: a.sigma_y, sigma_w: a.sigma_w, sigma_a: a.sigma_a }, a.seed)?;
    let mut out = RunOutput::new(&a.out, RunConfig::from_args("synth", &a)?)?;
    let header: Vec<String> = (1..=a.p).map(|j| format!("y{j}")).collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.csv("data.csv", &header, matrix_rows(&data.y))?;
    out.csv("truth_allocation.csv", &["customer", "feature"], allocation_rows(&z))?;
    let rows_of = |m: &nalgebra::DMatrix<f64>| -> Vec<Vec<f64>> { m.row_iter().map(|r| r.iter().copied().collect()).collect() };
    let truth = json!({
        "features": z.num_features(),
        "sigma_y": a.sigma_y,
        "sigma_w": a.sigma_w,
        "sigma_a": a.sigma_a,
        "weights": rows_of(&data.w),
        "features_by_dimension": rows_of(&data.a),
    });
    out.json("truth.json", &truth)?;
    out.note("true_features", z.num_features())?;
    out.finish()
}

fn priors_and_updates(p: &PriorArgs) -> (Priors, Updates) {
    let priors = Priors {
        gamma_shape: p.gamma_shape,
        gamma_rate: p.gamma_rate,
        variance_shape: p.variance_shape,
        variance_scale: p.variance_scale,
        free_shape: p.free_shape,
        free_rate: p.free_rate,
    };
    let updates = Updates { gamma: !p.fix_gamma, alpha: !p.fix_alpha, free: !p.fix_free, scales: !p.fix_scales, ..Updates::default() };
    (priors, updates)
}

/// Seed of chain `c`; chains share nothing but the base seed.
fn chain_seed(base: u64, c: usize) -> u64 {
    base.wrapping_add((c as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

fn fit(a: FitArgs) -> CliResult<()> {
    let model = a.model.build(INFERENCE_MC)?;
    positive(a.chains, "chains")?;
    let y = read_matrix(&a.data)?;
    let (priors, updates) = priors_and_updates(&a.priors);
    let base = SamplerConfig {
        iterations: a.chain.iterations,
        burn_in: a.chain.burn_in,
        thin: a.chain.thin,
        seed: a.seed,
        priors,
        updates,
        hyper_every: a.chain.hyper_every,
        mc_samples: model.mc.samples,
        slice_width: a.chain.slice_width,
    };
    base.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let results: Vec<CliResult<_>> = thread::scope(|scope| {
        let handles: Vec<_> = (0..a.chains)
            .map(|c| {
                let y = y.clone();
                scope.spawn(move || -> CliResult<_> {
                    let seed = chain_seed(a.seed, c);
                    let init = initial_state(&y, &model, seed)?;
                    Ok(run_chain(y, init, SamplerConfig { seed, ..base })?)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap_or_else(|_| Err(CliError::other("chain thread panicked")))).collect()
    });
    let mut out = RunOutput::new(&a.out, RunConfig::from_args("fit", &a)?)?;
    let mut rows = Vec::new();
    let mut ks = Vec::new();
    let mut chains = Vec::new();
    for (c, r) in results.into_iter().enumerate() {
        let chain = r?;
        for s in &chain.samples {
            ks.push(s.k as f64);
            rows.push(vec![
                c.to_string(),
                s.iteration.to_string(),
                s.k.to_string(),
                num(s.gamma),
                num(s.alpha),
                num(s.theta),
                num(s.sigma_y),
                num(s.sigma_w),
                num(s.sigma_a_mean),
                num(s.log_likelihood),
                num(s.log_joint),
            ]);
        }
        let rate = chain.moves.accepted as f64 / chain.moves.proposals.max(1) as f64;
        chains.push(json!({
            "chain": c,
            "seed": chain_seed(a.seed, c),
            "retained": chain.samples.len(),
            "singleton_acceptance": rate,
            "final_model": chain.final_state.model,
            "primitive_cache_hash": chain.cache.content_hash(),
        }));
    }
    let header = ["chain", "iteration", "k", "gamma", "alpha", "theta", "sigma_y", "sigma_w", "sigma_a_mean", "log_likelihood", "log_joint"];
    out.csv("samples.csv", &header, rows)?;
    out.note("model", model)?;
    out.note("data", json!({ "path": a.data, "rows": y.nrows(), "columns": y.ncols() }))?;
    out.note("sampler", base)?;
    out.note("chains", chains)?;
    if !ks.is_empty() {
        let (lo, hi) = credible_interval(&ks, 0.95);
        out.note("posterior_features", json!({ "mean": mean(&ks), "interval_95": [lo, hi] }))?;
    }
    out.finish()
}

fn geweke(a: GewekeArgs) -> CliResult<()> {
    let model = a.model.build(INFERENCE_MC)?;
    positive(a.n, "n")?;
    positive(a.p, "p")?;
    let (priors, updates) = priors_and_updates(&a.priors);
    let cfg = GewekeConfig { model, n: a.n, p: a.p, rounds: a.rounds, batches: a.batches, sweeps_per_round: a.sweeps_per_round, seed: a.seed, priors, updates };
    let stats = geweke_check(&cfg).map_err(|e| if e.is_numeric() { e.into() } else { CliError::usage(e.to_string()) })?;
    let mut out = RunOutput::new(&a.out, RunConfig::from_args("geweke", &a)?)?;
    let rows = stats.iter().map(|s| vec![s.name.clone(), num(s.prior_mean), num(s.chain_mean), num(s.z)]);
    out.csv("geweke.csv", &["statistic", "prior_mean", "chain_mean", "z"], rows.collect::<Vec<_>>())?;
    out.note("model", model)?;
    out.note("max_abs_z", stats.iter().map(|s| s.z.abs()).fold(0.0, f64::max))?;
    out.finish()
}

fn structural(a: StructuralArgs) -> CliResult<()> {
    positive(a.points, "points")?;
    let mut rows = Vec::new();
    for spec in &a.models {
        for i in 1..=a.points {
            let p = i as f64 / (a.points + 1) as f64;
            rows.push(vec![spec.text.clone(), num(p), num(structural_density(&spec.model, p)?)]);
        }
    }
    let mut out = RunOutput::new(&a.out, RunConfig::from_args("structural", &a)?)?;
    out.csv("structural.csv", &["model", "p", "density"], rows)?;
    out.finish()
}
