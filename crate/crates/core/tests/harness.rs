use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

use ntlab::harness::output::{read_raw_csv, read_summary_csv, summary_csv};
use ntlab::harness::plot::mse_power_svg;
use ntlab::harness::{run, run_scenario, summarize, PointInput, RunOptions, ScenarioKind, SimulationConfig};
use ntlab::lecam::Law;
use ntlab::numerics::RngStream;
use ntlab::scenario::case_control::{CaseControl, CaseControlConfig, Misspec};
use ntlab::scenario::normal_mean::NormalMean;
use ntlab::scenario::twophase_linear::TwoPhaseLinear;
use ntlab::scenario::{Critical, ReplicateOutcome, Scenario, TestSpec};
use rand::Rng;

fn small(kind: ScenarioKind) -> SimulationConfig {
    let mut cfg = SimulationConfig {
        scenario: Some(kind),
        replicates: 150,
        seed: 11,
        ..Default::default()
    };
    cfg.normal_mean.kappa_grid = vec![0.0, 1.0, 2.0];
    cfg.two_phase_linear.kappa_grid = vec![0.0, 1.5];
    cfg.case_control.kappa_grid = vec![0.0, 1.5];
    cfg.case_control.population_size = 40_000;
    cfg
}

fn small_tilt() -> SimulationConfig {
    let mut cfg = small(ScenarioKind::CaseControl);
    cfg.replicates = 120;
    cfg.case_control.misspec = Misspec::Tilt;
    cfg.case_control.population_size = 20_000;
    cfg.case_control.reference_populations = 2;
    cfg.case_control.concat_replicates = 10;
    cfg
}

fn csv_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv" || e == "svg"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

fn run_in(cfg: &SimulationConfig, threads: usize, dir: &Path) -> ntlab::harness::RunReport {
    let cfg = SimulationConfig {
        threads,
        output_dir: dir.to_path_buf(),
        ..cfg.clone()
    };
    run(&cfg).unwrap()
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    for cfg in [small(ScenarioKind::NormalMean), small(ScenarioKind::TwoPhaseLinear), small(ScenarioKind::CaseControl), small_tilt()] {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        run_in(&cfg, 1, a.path());
        run_in(&cfg, 3, b.path());
        let (fa, fb) = (csv_files(a.path()), csv_files(b.path()));
        assert!(fa.len() >= 3);
        assert_eq!(fa, fb, "{:?}", cfg.scenario);
    }
}

#[test]
fn repeated_run_is_byte_identical() {
    let mut cfg = small(ScenarioKind::NormalMean);
    cfg.replicates = 2000;
    cfg.seed = 1;
    cfg.normal_mean.kappa_grid = vec![0.0];
    let dir = tempfile::tempdir().unwrap();
    run_in(&cfg, 0, dir.path());
    let first = csv_files(dir.path());
    let manifest = std::fs::read(dir.path().join("manifest.json")).unwrap();
    run_in(&cfg, 0, dir.path());
    assert_eq!(first, csv_files(dir.path()));
    assert_eq!(manifest, std::fs::read(dir.path().join("manifest.json")).unwrap());
}

fn close(a: f64, b: f64) -> bool {
    (a.is_nan() && b.is_nan()) || (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

/// Re-aggregate every raw CSV of a finished run and compare with the
/// summary CSV.
fn check_aggregation(dir: &Path, scenario: &str, tests: &[TestSpec]) {
    let summary = read_summary_csv(&std::fs::read_to_string(dir.join(format!("{scenario}_summary.csv"))).unwrap()).unwrap();
    let rows = summary["n_failed"].len();
    for i in 0..rows {
        let raw = read_raw_csv(&std::fs::read_to_string(dir.join(format!("{scenario}_raw_{i:02}.csv"))).unwrap()).unwrap();
        let names: Vec<&'static str> = raw.estimator_names.iter().map(|s| &*s.clone().leak()).collect();
        let s = summarize(&PointInput {
            magnitude: raw.magnitude,
            theta_star: raw.theta_star,
            details: vec![],
            scale_n: raw.scale_n,
            estimator_names: &names,
            tests,
            q: &raw.q,
            p: &raw.p,
        });
        let mut expect: Vec<(String, f64)> = vec![
            ("theta_star".into(), s.theta_star),
            ("n_failed".into(), s.n_failed as f64),
            ("n_used".into(), s.n_used as f64),
            ("kappa_hat".into(), s.kappa_hat),
            ("rho_hat".into(), s.rho_hat),
            ("power_np".into(), s.power_np),
            ("sigma2_hat".into(), s.sigma2_hat),
            ("omega2_hat".into(), s.omega2_hat),
            ("shift_mean".into(), s.shift_mean),
            ("shift_se".into(), s.shift_se),
            ("ks_statistic".into(), s.ks_statistic),
        ];
        for e in &s.estimators {
            expect.push((format!("bias_{}", e.name), e.bias));
            expect.push((format!("mse_{}", e.name), e.mse));
            expect.push((format!("mse_se_{}", e.name), e.mse_se));
        }
        for t in &s.tests {
            expect.push((format!("power_{}", t.name), t.power));
        }
        for (k, v) in expect {
            let got = summary[&k][i];
            assert!(close(got, v), "{scenario} row {i} {k}: summary {got} vs raw {v}");
        }
        assert_eq!(s.n_used + s.n_failed, raw.q.len());
    }
}

#[test]
fn summaries_match_raw_replicates() {
    for (cfg, tests) in [
        (small(ScenarioKind::NormalMean), NormalMean::new(Default::default()).unwrap().tests()),
        (small(ScenarioKind::TwoPhaseLinear), TwoPhaseLinear::new(Default::default()).unwrap().tests()),
        (small(ScenarioKind::CaseControl), CaseControl::new(CaseControlConfig::default()).unwrap().tests()),
        (
            small_tilt(),
            CaseControl::new(CaseControlConfig {
                misspec: Misspec::Tilt,
                ..Default::default()
            })
            .unwrap()
            .tests(),
        ),
    ] {
        let dir = tempfile::tempdir().unwrap();
        let report = run_in(&cfg, 0, dir.path());
        check_aggregation(dir.path(), report.run.scenario, &tests);
        for s in &report.run.summaries {
            assert_eq!(s.n_used + s.n_failed, cfg.replicates);
        }
    }
}

/// Fails a known fraction of replicates.
struct Flaky {
    failure_rate: f64,
}

impl Scenario for Flaky {
    type Point = ();

    fn name(&self) -> &'static str {
        "flaky"
    }
    fn magnitude_label(&self) -> &'static str {
        "kappa"
    }
    fn magnitudes(&self) -> Vec<f64> {
        vec![0.0, 1.0]
    }
    fn estimator_names(&self) -> Vec<&'static str> {
        vec!["a", "b"]
    }
    fn tests(&self) -> Vec<TestSpec> {
        vec![TestSpec {
            name: "t",
            critical: Critical::NullQuantile,
        }]
    }
    fn scale_n(&self) -> f64 {
        100.0
    }
    fn prepare(&self, _index: usize, _magnitude: f64, _seed: u64) -> ntlab::Result<()> {
        Ok(())
    }
    fn theta_star(&self, _point: &()) -> f64 {
        0.0
    }
    fn replicate(&self, _point: &(), law: Law, rng: &mut RngStream) -> ntlab::Result<ReplicateOutcome> {
        let u: f64 = rng.random();
        if u < self.failure_rate {
            return Err(ntlab::Error::Degenerate("planned failure".into()));
        }
        let shift = if law == Law::Q { 0.5 } else { 0.0 };
        let e: f64 = rng.random::<f64>() - 0.5;
        Ok(ReplicateOutcome {
            estimates: vec![e, e + rng.random::<f64>() - 0.5],
            converged: u > 2.0 * self.failure_rate,
            loglik_ratio: shift + rng.random::<f64>(),
            statistics: vec![rng.random()],
            target: None,
        })
    }
}

#[test]
fn failed_replicates_are_counted_and_round_trip() {
    let flaky = Flaky { failure_rate: 0.1 };
    let run = run_scenario(&flaky, &RunOptions { replicates: 400, seed: 3, threads: 2 }).unwrap();
    assert!(run.degraded());
    for (s, point) in run.summaries.iter().zip(&run.points) {
        assert_eq!(s.n_used + s.n_failed, 400);
        let errors = point.q.iter().filter(|o| o.as_ref().is_none_or(|o| !o.converged)).count();
        assert_eq!(s.n_failed, errors);
        assert!(s.n_failed > 40);
    }
    let raw = read_raw_csv(&ntlab::harness::output::raw_csv(&run, 1)).unwrap();
    assert_eq!(raw.q, run.points[1].q);
    assert_eq!(raw.p, run.points[1].p);
    assert!(summary_csv(&run).starts_with("# schema=1\n"));

    let clean = run_scenario(&Flaky { failure_rate: 0.0 }, &RunOptions { replicates: 200, seed: 3, threads: 1 }).unwrap();
    assert!(!clean.degraded());
}

#[test]
fn zero_replicates_is_an_error() {
    let cfg = SimulationConfig {
        replicates: 0,
        ..small(ScenarioKind::NormalMean)
    };
    assert!(run(&cfg).unwrap_err().to_string().contains("replicates must be positive"));
}

#[test]
fn plots_mark_each_estimator() {
    let run = run_scenario(&Flaky { failure_rate: 0.0 }, &RunOptions { replicates: 150, seed: 1, threads: 1 }).unwrap();
    let mut one = run.clone();
    one.summaries.truncate(1);
    let svg = mse_power_svg(&one, "one point").unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    // One data marker per estimator plus the legend's.
    assert_eq!(svg.matches("<circle").count(), 4);
    assert_eq!(svg, mse_power_svg(&one, "one point").unwrap());
    one.summaries.clear();
    assert!(mse_power_svg(&one, "empty").is_err());
}

fn ntlab_cmd() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ntlab"))
}

#[test]
fn cli_predict_prints_the_table() {
    let out = ntlab_cmd()
        .args(["predict", "--sigma2", "1", "--omega2", "1.7", "--rho", "-0.55", "--kappa", "0.5,1,2,3"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for v in ["0.1261", "0.2595", "0.6388", "0.9123", "crossover kappa 1.8182"] {
        assert!(text.contains(v), "{v} missing from\n{text}");
    }
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("nm.toml");
    std::fs::write(&cfg, "replicates = 120\n[normal_mean]\nkappa_grid = [0.0, 1.0]\n").unwrap();
    let out_dir = dir.path().join("out");
    let ok = ntlab_cmd()
        .args(["normal-mean", "--config"])
        .arg(&cfg)
        .args(["--seed", "5", "--threads", "1", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    for f in ["normal_mean_summary.csv", "normal_mean_raw_01.csv", "normal_mean_mse.svg", "normal_mean_density.svg", "manifest.json"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    let embedded = SimulationConfig::parse(manifest["config"].as_str().unwrap()).unwrap();
    assert_eq!(embedded.replicates, 120);

    std::fs::write(&cfg, "replicates = 120\nrepetitions = 3\n[normal_mean]\nsd = 2\n").unwrap();
    let bad = ntlab_cmd().args(["normal-mean", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
    let msg = String::from_utf8_lossy(&bad.stderr);
    assert!(msg.contains("repetitions") && msg.contains("normal_mean.sd"), "{msg}");

    std::fs::write(&cfg, "scenario = \"two_phase_linear\"\n").unwrap();
    let wrong = ntlab_cmd().args(["normal-mean", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(wrong.status.code(), Some(1));

    let zero = ntlab_cmd().args(["two-phase-linear", "--replicates", "0"]).output().unwrap();
    assert_eq!(zero.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&zero.stderr).contains("replicates must be positive"));
}
