use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gibbs-ibp"))
}

fn run_ok(args: &[&str]) {
    let out = bin().args(args).output().unwrap();
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        run_ok(&["simulate", "--model", "ngg", "--alpha", "0.4", "--beta", "2", "--mc-samples", "2000", "--n", "25", "--gamma", "3", "--seed", "11", "--out", p(out)]);
    }
    for f in ["allocation.csv", "statistics.csv", "multiplicities.csv"] {
        assert_eq!(read(&a, f), read(&b, f), "{f}");
    }
    let c = dir.path().join("c");
    run_ok(&["simulate", "--model", "ngg", "--alpha", "0.4", "--beta", "2", "--mc-samples", "2000", "--n", "25", "--gamma", "3", "--seed", "12", "--out", p(&c)]);
    assert_ne!(read(&a, "allocation.csv"), read(&c, "allocation.csv"));
}

#[test]
fn zero_mass_gives_empty_allocation() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&["simulate", "--model", "dp", "--theta", "1", "--gamma", "0", "--n", "7", "--out", p(dir.path())]);
    assert_eq!(read(dir.path(), "allocation.csv").trim(), "customer,feature");
}

#[test]
fn dp_three_customers_average_features() {
    // E[K_3] = gamma * (1 + 1/2 + 1/3) for DP(theta = 1)
    let dir = tempfile::tempdir().unwrap();
    let seeds = 2000;
    let mut total = 0usize;
    for seed in 0..seeds {
        let out = dir.path().join(seed.to_string());
        gibbs_ibp_cli::run(["gibbs-ibp", "simulate", "--model", "dp", "--theta", "1", "--n", "3", "--seed", &seed.to_string(), "--out", p(&out)]).unwrap();
        let stats = read(&out, "statistics.csv");
        let last = stats.lines().last().unwrap();
        total += last.split(',').nth(1).unwrap().parse::<usize>().unwrap();
    }
    let mean = total as f64 / seeds as f64;
    let expected = 1.0 + 0.5 + 1.0 / 3.0;
    // Poisson variance equals the mean
    let se = (expected / seeds as f64).sqrt();
    assert!((mean - expected).abs() < 4.0 * se, "mean {mean}");
}

#[test]
fn primitive_table_values() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let out = dir.path().join("out");
    run_ok(&["primitives", "--model", "py", "--alpha", "0.5", "--theta", "1", "--n", "5", "--cache-dir", p(&cache), "--out", p(&out)]);
    let text = read(&out, "primitives.csv");
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[0][1], "");
    let v = |r: usize, c: usize| rows[r][c].parse::<f64>().unwrap();
    assert!((v(1, 1) - 0.5).abs() < 1e-12);
    assert!((v(1, 2) - 0.75).abs() < 1e-12);
    assert!((v(0, 2) - 1.0).abs() < 1e-12);
    // closed-form families never touch the store
    assert!(!cache.exists());
}

#[test]
fn tabled_primitives_are_stored_and_reused() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let args = |out: &Path| {
        let o = p(out).to_string();
        let c = p(&cache).to_string();
        vec!["primitives", "--model", "ngg", "--alpha", "0.5", "--beta", "1", "--mc-samples", "5000", "--n", "12", "--cache-dir"]
            .into_iter()
            .map(String::from)
            .chain([c, "--out".into(), o])
            .collect::<Vec<_>>()
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_ok(&args(&a).iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(fs::read_dir(&cache).unwrap().count(), 1);
    run_ok(&args(&b).iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(fs::read_dir(&cache).unwrap().count(), 1);
    assert_eq!(read(&a, "primitives.csv"), read(&b, "primitives.csv"));
}

#[test]
fn run_conf_replays_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    run_ok(&["partition", "--model", "py", "--alpha", "0.3", "--theta", "2", "--n", "40", "--seed", "5", "--out", p(&first)]);
    let second = dir.path().join("second");
    run_ok(&["partition", "--config", p(&first.join("run.conf")), "--out", p(&second)]);
    assert_eq!(read(&first, "partition.csv"), read(&second, "partition.csv"));
    assert_eq!(read(&first, "blocks.csv"), read(&second, "blocks.csv"));
}

#[test]
fn fit_is_reproducible_and_records_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    run_ok(&["synth", "--n", "20", "--p", "4", "--singletons", "2", "--seed", "3", "--out", p(&data)]);
    let csv = data.join("data.csv");
    let fit = |name: &str| {
        let out = dir.path().join(name);
        run_ok(&["fit", "--data", p(&csv), "--model", "dp", "--theta", "1", "--iterations", "60", "--burn-in", "20", "--chains", "2", "--seed", "9", "--out", p(&out)]);
        out
    };
    let (a, b) = (fit("a"), fit("b"));
    assert_eq!(read(&a, "samples.csv"), read(&b, "samples.csv"));
    let manifest: serde_json::Value = serde_json::from_str(&read(&a, "manifest.json")).unwrap();
    assert_eq!(manifest["chains"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["chains"][0]["primitive_cache_hash"].as_str().unwrap().len(), 64);
    assert!(manifest["posterior_features"]["mean"].as_f64().unwrap() > 0.0);
}

#[test]
fn missing_data_file_is_a_clean_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["fit", "--data", "/no/such/file.csv", "--model", "dp", "--theta", "1", "--out", p(dir.path())]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("cannot read data file"), "{err}");
    assert!(!err.contains("panicked"));
}

#[test]
fn usage_errors_exit_with_two() {
    let missing = bin().args(["simulate", "--model", "dp", "--theta", "1"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
    let no_param = bin().args(["simulate", "--model", "py", "--theta", "1", "--n", "3"]).output().unwrap();
    assert_eq!(no_param.status.code(), Some(2));
    let bad_domain = bin().args(["simulate", "--model", "py", "--alpha", "1.5", "--theta", "1", "--n", "3"]).output().unwrap();
    assert_eq!(bad_domain.status.code(), Some(2));
}

#[test]
fn calibrate_hits_target_and_refuses_the_unreachable() {
    let out = bin().args(["calibrate", "--family", "py", "--alpha", "0.5", "--target", "25", "--m", "50"]).output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["calibration"]["achieved"].as_f64().unwrap() - 25.0).abs() < 0.05);
    // for DP the per-unit-mass E[K_m] lies strictly between 1 and m
    let bad = bin().args(["calibrate", "--family", "dp", "--target", "60", "--m", "50"]).output().unwrap();
    assert!(!bad.status.success());
    let bad = bin().args(["calibrate", "--family", "dp", "--target", "0.5", "--m", "50"]).output().unwrap();
    assert!(!bad.status.success());
}
