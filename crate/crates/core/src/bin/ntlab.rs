use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ntlab::harness::{self, ScenarioKind, SimulationConfig};
use ntlab::lecam::{prediction_table, LeCamPrediction};
use ntlab::scenario::case_control::Misspec;

/// Efficient vs design-based estimators under nearly true models.
#[derive(Parser)]
#[command(name = "ntlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tilted Normal mean with outcome-dependent missingness.
    NormalMean(RunArgs),
    /// Case–control logistic regression.
    CaseControl {
        #[arg(long, value_enum)]
        misspec: Option<MisspecArg>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Two-phase linear regression with a surrogate.
    TwoPhaseLinear(RunArgs),
    /// Closed-form shift, MSEs, crossover and test power.
    Predict {
        #[arg(long)]
        sigma2: f64,
        #[arg(long)]
        omega2: f64,
        #[arg(long, allow_hyphen_values = true)]
        rho: f64,
        /// One or more values, comma separated.
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        kappa: Vec<f64>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<usize>,
    /// 0 uses every core.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MisspecArg {
    Quadratic,
    Tilt,
    Spline,
}

impl From<MisspecArg> for Misspec {
    fn from(m: MisspecArg) -> Self {
        match m {
            MisspecArg::Quadratic => Misspec::Quadratic,
            MisspecArg::Tilt => Misspec::Tilt,
            MisspecArg::Spline => Misspec::Spline,
        }
    }
}

fn resolve(kind: ScenarioKind, args: &RunArgs) -> anyhow::Result<SimulationConfig> {
    let mut cfg = match &args.config {
        Some(path) => SimulationConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
        None => SimulationConfig::default(),
    };
    if let Some(s) = cfg.scenario {
        if s != kind {
            bail!("config is for scenario {} but {} was requested", s.as_str(), kind.as_str());
        }
    }
    cfg.scenario = Some(kind);
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.replicates {
        cfg.replicates = v;
    }
    if let Some(v) = args.threads {
        cfg.threads = v;
    }
    if let Some(v) = &args.out {
        cfg.output_dir = v.clone();
    }
    Ok(cfg)
}

fn simulate(cfg: &SimulationConfig) -> anyhow::Result<ExitCode> {
    let report = harness::run(cfg)?;
    let run = &report.run;
    print!("{:>10} {:>9} {:>9} {:>9}", run.magnitude_label, "kappa_hat", "power_np", "rho_hat");
    for e in &run.estimator_names {
        print!(" {:>14}", format!("mse_{e}"));
    }
    println!(" {:>8}", "n_failed");
    for s in &run.summaries {
        print!("{:>10.4} {:>9.4} {:>9.4} {:>9.4}", s.magnitude, s.kappa_hat, s.power_np, s.rho_hat);
        for e in &s.estimators {
            print!(" {:>14.6e}", e.mse);
        }
        println!(" {:>8}", s.n_failed);
    }
    for f in &report.files {
        println!("wrote {}", f.display());
    }
    if report.degraded() {
        eprintln!(
            "warning: more than {:.0}% of replicates failed at some magnitude; results are degraded",
            100.0 * harness::DEGRADED_FRACTION
        );
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn main_inner(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::NormalMean(args) => simulate(&resolve(ScenarioKind::NormalMean, &args)?),
        Command::CaseControl { misspec, run } => {
            let mut cfg = resolve(ScenarioKind::CaseControl, &run)?;
            if let Some(m) = misspec {
                cfg.case_control.misspec = m.into();
            }
            simulate(&cfg)
        }
        Command::TwoPhaseLinear(args) => simulate(&resolve(ScenarioKind::TwoPhaseLinear, &args)?),
        Command::Predict {
            sigma2,
            omega2,
            rho,
            kappa,
            alpha,
        } => {
            let base = LeCamPrediction::new(sigma2, omega2, rho, kappa[0])?;
            print!("{}", prediction_table(&base, &kappa, alpha)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
