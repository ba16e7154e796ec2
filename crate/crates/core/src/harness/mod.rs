//! Orchestration: replicate scheduling, aggregation, and output files.

pub mod config;
pub mod output;
pub mod plot;
pub mod summary;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lecam::Law;
use crate::numerics::{stream_key, RngStream};
use crate::scenario::case_control::CaseControl;
use crate::scenario::normal_mean::NormalMean;
use crate::scenario::twophase_linear::TwoPhaseLinear;
use crate::scenario::{ReplicateOutcome, Scenario, TestSpec};
pub use config::{ScenarioKind, SimulationConfig};
pub use summary::{summarize, EstimatorSummary, PointInput, ReplicationSummary, TestPower};

/// Fraction of failed replicates at any magnitude above which a run is
/// reported as degraded.
pub const DEGRADED_FRACTION: f64 = 0.05;

/// Raw replicate outcomes at one magnitude.
#[derive(Clone, Debug)]
pub struct PointRun {
    pub magnitude: f64,
    pub theta_star: f64,
    pub details: Vec<(String, f64)>,
    pub q: Vec<Option<ReplicateOutcome>>,
    pub p: Vec<Option<ReplicateOutcome>>,
}

#[derive(Clone, Debug)]
pub struct ScenarioRun {
    pub scenario: &'static str,
    pub magnitude_label: &'static str,
    pub estimator_names: Vec<&'static str>,
    pub tests: Vec<TestSpec>,
    /// Sample size putting variances on the `√n` scale.
    pub scale_n: f64,
    pub points: Vec<PointRun>,
    pub summaries: Vec<ReplicationSummary>,
}

impl ScenarioRun {
    pub fn degraded(&self) -> bool {
        self.summaries
            .iter()
            .any(|s| s.n_failed as f64 > DEGRADED_FRACTION * s.replicates as f64)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RunOptions {
    pub replicates: usize,
    pub seed: u64,
    /// Worker threads; 0 picks the rayon default.
    pub threads: usize,
}

fn law_tag(law: Law) -> u64 {
    match law {
        Law::P => 0,
        Law::Q => 1,
    }
}

/// Random stream of replicate `r` under `law` at magnitude index `index`.
pub fn replicate_stream(seed: u64, index: usize, law: Law, r: usize) -> RngStream {
    RngStream::new(seed, stream_key(&[index as u64, law_tag(law), r as u64]))
}

/// Run every magnitude of a scenario. Replicates execute in parallel on a
/// private pool and are gathered in replicate order, so results do not
/// depend on the thread count.
pub fn run_scenario<S: Scenario>(scenario: &S, opts: &RunOptions) -> Result<ScenarioRun> {
    if opts.replicates == 0 {
        return Err(Error::Config("replicates must be positive".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let estimator_names = scenario.estimator_names();
    let tests = scenario.tests();
    let mut points = Vec::new();
    let mut summaries = Vec::new();
    for (index, magnitude) in scenario.magnitudes().into_iter().enumerate() {
        let point = scenario.prepare(index, magnitude, opts.seed)?;
        let sweep = |law: Law| -> Vec<Option<ReplicateOutcome>> {
            pool.install(|| {
                (0..opts.replicates)
                    .into_par_iter()
                    .map(|r| {
                        let mut rng = replicate_stream(opts.seed, index, law, r);
                        scenario.replicate(&point, law, &mut rng).ok()
                    })
                    .collect()
            })
        };
        let q = sweep(Law::Q);
        let p = if magnitude != 0.0 { sweep(Law::P) } else { Vec::new() };
        let details: Vec<(String, f64)> = scenario
            .point_details(&point)
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        let theta_star = scenario.theta_star(&point);
        summaries.push(summarize(&PointInput {
            magnitude,
            theta_star,
            details: details.clone(),
            scale_n: scenario.scale_n(),
            estimator_names: &estimator_names,
            tests: &tests,
            q: &q,
            p: &p,
        }));
        points.push(PointRun {
            magnitude,
            theta_star,
            details,
            q,
            p,
        });
    }
    Ok(ScenarioRun {
        scenario: scenario.name(),
        magnitude_label: scenario.magnitude_label(),
        estimator_names,
        tests,
        scale_n: scenario.scale_n(),
        points,
        summaries,
    })
}

/// A finished run and the files written for it.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub run: ScenarioRun,
    pub files: Vec<std::path::PathBuf>,
}

impl RunReport {
    pub fn degraded(&self) -> bool {
        self.run.degraded()
    }
}

fn run_options(config: &SimulationConfig) -> RunOptions {
    RunOptions {
        replicates: config.replicates,
        seed: config.seed,
        threads: config.threads,
    }
}

/// Simulate the configured scenario without writing anything.
pub fn simulate(config: &SimulationConfig) -> Result<ScenarioRun> {
    config.validate()?;
    let opts = run_options(config);
    match config.scenario {
        Some(ScenarioKind::NormalMean) => run_scenario(&NormalMean::new(config.normal_mean.clone())?, &opts),
        Some(ScenarioKind::CaseControl) => run_scenario(&CaseControl::new(config.case_control.clone())?, &opts),
        Some(ScenarioKind::TwoPhaseLinear) => run_scenario(&TwoPhaseLinear::new(config.two_phase_linear.clone())?, &opts),
        None => Err(Error::Config("no scenario selected".into())),
    }
}

/// Base and tilted densities of the normal-mean scenario at the magnitude
/// where the Neyman–Pearson test has power one half.
fn normal_mean_density(config: &SimulationConfig) -> Result<String> {
    let nm = NormalMean::new(config.normal_mean.clone())?;
    let kappa = summary::z_critical();
    let point = nm.prepare(0, kappa, config.seed)?;
    let base = nm.base();
    let grid: Vec<f64> = (0..=240).map(|i| base.mean - 4.0 + i as f64 / 30.0).collect();
    let f0: Vec<(f64, f64)> = grid.iter().map(|&x| (x, base.log_density(x).exp())).collect();
    let tilted: Vec<(f64, f64)> = match point.density() {
        Some(d) => grid.iter().map(|&x| (x, d.log_density(x).exp())).collect(),
        None => f0.clone(),
    };
    plot::density_svg(
        &[("working model", f0), (&format!("tilted, kappa = {kappa:.3}"), tilted)],
        "Working-model and tilted densities",
        "x",
    )
}

/// Simulate and write the summary CSV, raw replicate CSVs, plots and the
/// manifest into `config.output_dir`.
pub fn run(config: &SimulationConfig) -> Result<RunReport> {
    let run = simulate(config)?;
    let dir = &config.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::Config(format!("{}: {e}", dir.display())))?;
    let mut outputs: Vec<(String, String)> = vec![(format!("{}_summary.csv", run.scenario), output::summary_csv(&run))];
    for index in 0..run.points.len() {
        outputs.push((output::raw_file_name(&run, index), output::raw_csv(&run, index)));
    }
    outputs.push((
        format!("{}_mse.svg", run.scenario),
        plot::mse_power_svg(&run, &format!("{}: MSE against test power", run.scenario))?,
    ));
    if config.scenario == Some(ScenarioKind::NormalMean) {
        outputs.push(("normal_mean_density.svg".into(), normal_mean_density(config)?));
    }
    let names: Vec<String> = outputs.iter().map(|(n, _)| n.clone()).collect();
    outputs.push(("manifest.json".into(), output::manifest_json(config, &run, &names)?));
    let mut files = Vec::new();
    for (name, text) in outputs {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        files.push(path);
    }
    Ok(RunReport { run, files })
}
