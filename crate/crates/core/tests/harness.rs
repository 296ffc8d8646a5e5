use std::fs;
use std::process::Command;

use metaoc::bench::{independent_config, task_regret};
use metaoc::harness::config::Method;
use metaoc::harness::output::{results_csv, CSV_HEADER, RESULTS_CSV};
use metaoc::harness::{constants_for, generate_task_suite, run_experiment, ExperimentConfig};
use metaoc::meta::hindsight_optimum;
use metaoc::oc::run_oc;

fn small(methods: Vec<Method>) -> ExperimentConfig {
    ExperimentConfig { tasks: 4, seeds: vec![0, 1], methods, ..ExperimentConfig::default() }
}

#[test]
fn single_task_harness_matches_direct_run() {
    let cfg = ExperimentConfig { tasks: 1, seeds: vec![9], methods: vec![Method::IndependentOc], ..ExperimentConfig::default() };
    let t = cfg.horizon_list()[0];
    let report = run_experiment(&cfg).unwrap();
    assert_eq!(report.runs.len(), 1);
    let rep = report.runs[0].report.as_ref().unwrap();
    let consts = constants_for(&cfg, t).unwrap();
    let (tasks, _) = generate_task_suite(&cfg, 9, t).unwrap();
    let oc = independent_config(&tasks[0], 1, &consts).unwrap();
    let mut rec = run_oc(&tasks[0], &oc).unwrap();
    let ctx = rec.context(&tasks[0].sys).unwrap();
    let sol = hindsight_optimum(&ctx, &tasks[0].costs, &oc.domain).unwrap();
    rec.hindsight = Some(sol.params);
    let direct = task_regret(&rec, &tasks[0], cfg.comparator, consts.bounds.kappa).unwrap();
    assert_eq!(rep.regrets(), vec![direct]);
    assert_eq!(rep.meta_regret, direct);
}

#[test]
fn methods_share_each_seed_suite() {
    let report = run_experiment(&small(Method::ALL.to_vec())).unwrap();
    assert!(!report.partial());
    for seed in [0, 1] {
        let hashes: Vec<&str> = report.runs.iter().filter(|r| r.seed == seed).map(|r| r.suite_hash.as_str()).collect();
        assert_eq!(hashes.len(), Method::ALL.len());
        assert!(hashes.windows(2).all(|w| w[0] == w[1]));
    }
    let a = report.runs.iter().find(|r| r.seed == 0).unwrap();
    let b = report.runs.iter().find(|r| r.seed == 1).unwrap();
    assert_ne!(a.suite_hash, b.suite_hash);
}

#[test]
fn csv_has_one_row_per_task() {
    let cfg = small(vec![Method::IndependentOc, Method::Moc1]);
    let report = run_experiment(&cfg).unwrap();
    let text = results_csv(&report).unwrap();
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(rd.headers().unwrap().iter().collect::<Vec<_>>(), CSV_HEADER.to_vec());
    let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 2 * 2 * cfg.tasks);
    for run in &report.runs {
        let rep = run.report.as_ref().unwrap();
        let mine: Vec<&csv::StringRecord> =
            rows.iter().filter(|r| r[0] == *run.method.as_str() && r[1] == *run.seed.to_string()).collect();
        let last: f64 = mine.last().unwrap()[5].parse().unwrap();
        assert_eq!(last, rep.meta_regret);
        for (row, o) in mine.iter().zip(&rep.outcomes) {
            assert_eq!(row[4].parse::<f64>().unwrap(), o.regret);
        }
    }
}

fn metaoc(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_metaoc")).args(args).output().unwrap()
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "N = 3\ncolour = \"red\"\n").unwrap();
    assert_eq!(metaoc(&["run", bad.to_str().unwrap()]).status.code(), Some(1));
    let zero = dir.path().join("zero.toml");
    fs::write(&zero, "N = 0\n").unwrap();
    assert_eq!(metaoc(&["run", zero.to_str().unwrap()]).status.code(), Some(1));
    let missing = dir.path().join("missing.toml");
    assert_eq!(metaoc(&["run", missing.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn cli_run_then_replay_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.toml");
    fs::write(&cfg_path, "N = 3\nT = 20\nseeds = [5, 6]\nmethods = [\"independent-oc\", \"moc1\"]\n").unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    let out = metaoc(&["run", cfg_path.to_str().unwrap(), "--output-dir", first.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let suites = first.join("suites");
    let out = metaoc(&[
        "replay",
        cfg_path.to_str().unwrap(),
        suites.to_str().unwrap(),
        "--output-dir",
        second.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let a = fs::read(first.join(RESULTS_CSV)).unwrap();
    let b = fs::read(second.join(RESULTS_CSV)).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b);
    assert!(first.join("summary.json").exists());
    assert!(first.join("meta_regret_vs_N_T20.svg").exists());

    let stored = dir.path().join("stored");
    let out = metaoc(&["suite", cfg_path.to_str().unwrap(), "--out", stored.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    for seed in [5, 6] {
        let name = format!("suite_T20_seed{seed}.json");
        assert_eq!(fs::read(stored.join(&name)).unwrap(), fs::read(suites.join(&name)).unwrap());
    }
}
