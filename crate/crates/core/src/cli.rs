//! Command-line front end. The binary only calls [`main`].
//!
//! Exit codes: 0 on success, 2 for bad input (unknown preset, bad key,
//! malformed CSV), 1 for runtime failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::env::traces::{gen_binary_traces, BinaryTraceParams, TraceDataset};
use crate::env::DelaySchedule;
use crate::error::{Error, Result};
use crate::gaussian::RewardSpec;
use crate::harness::{self, output, ConfigFile, Overrides, Prepared};
use crate::metrics::{vopf_curve, CurveSummary};
use crate::prior_fit::FittedPrior;
use crate::rng::{stream, Purpose};

/// Environment variable holding the default output root.
pub const OUT_DIR_VAR: &str = "IMPATIENT_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "impatient", version, about = "Bandits that learn from progressively revealed outcomes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a preset or a config file and write regret CSVs.
    Simulate(SimulateArgs),
    /// Fit a per-class Gaussian prior to a trace CSV.
    FitPrior(FitPriorArgs),
    /// Value of progressive feedback over a grid of batch sizes and times.
    Vopf(VopfArgs),
    /// Generate a stand-in binary trace dataset.
    GenTraces(GenTracesArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub preset: Option<String>,
    /// TOML experiment file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (default `$IMPATIENT_OUT_DIR/<preset>` or `out/<preset>`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replication workers; 0 uses every core.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub replications: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Batch size.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    /// Comma-separated roster, e.g. `progressive,delayed`.
    #[arg(long, value_delimiter = ',')]
    pub policies: Option<Vec<String>>,
    #[arg(long)]
    pub n_mc: Option<usize>,
    /// Give every policy its own outcome stream.
    #[arg(long)]
    pub no_crn: bool,
    /// Check every consumed outcome against the visibility rule.
    #[arg(long)]
    pub audit: bool,
}

#[derive(Debug, Args)]
pub struct FitPriorArgs {
    /// Trace CSV with columns arm_id, z, y1..yJ.
    pub traces: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VopfArgs {
    /// Directory written by `fit-prior`.
    #[arg(long, conflicts_with = "preset")]
    pub prior: Option<PathBuf>,
    /// Class to use from the prior directory (default: the first).
    #[arg(long, requires = "prior")]
    pub class: Option<String>,
    /// Use the model of a simulation preset instead of a fitted prior.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long, value_delimiter = ',', default_value = "10,50,200")]
    pub m: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    pub t_max: usize,
    /// `progressive`, `pure` or a comma-separated list of per-outcome delays.
    #[arg(long, default_value = "progressive")]
    pub delays: String,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenTracesArgs {
    #[arg(long, default_value_t = 200)]
    pub arms: usize,
    #[arg(long, default_value_t = 300)]
    pub traces_per_arm: usize,
    #[arg(long, default_value_t = 60)]
    pub outcomes: usize,
    #[arg(long, default_value_t = 1)]
    pub classes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV (default `$IMPATIENT_OUT_DIR/traces.csv`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn out_root() -> PathBuf {
    std::env::var_os(OUT_DIR_VAR)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn simulate(args: SimulateArgs) -> Result<ExitCode> {
    let file = args.config.as_deref().map(ConfigFile::read).transpose()?;
    let flags = Overrides {
        preset: args.preset,
        horizon: args.horizon,
        batch_size: args.m,
        replications: args.replications,
        seed: args.seed,
        jobs: args.jobs,
        n_mc: args.n_mc,
        alpha: args.alpha,
        rho: args.rho,
        policies: args.policies,
        common_random_numbers: args.no_crn.then_some(false),
        audit: args.audit.then_some(true),
        output_dir: args.out,
    };
    let config = harness::load_config(file.as_ref(), &flags)?;
    let dir = config
        .output_dir
        .clone()
        .unwrap_or_else(|| out_root().join(&config.preset));
    log::info!("running {}", config.describe());
    let result = harness::run_replications(&config)?;
    output::write_all(&dir, &result)?;

    for run in &result.policies {
        if run.records.is_empty() {
            continue;
        }
        let s = CurveSummary::cumulative(&run.records)?;
        let t = s.mean.len() - 1;
        println!(
            "{:<22} cumulative regret at T={}: {:.4} ± {:.4} ({} runs)",
            run.name,
            t + 1,
            s.mean[t],
            s.stderr[t],
            run.records.len()
        );
    }
    println!("wrote {}", dir.display());
    if let Some((rep, err)) = result.failures.first() {
        eprintln!(
            "error: {} of {} replications failed; first (replication {rep}): {err}",
            result.failures.len(),
            config.replications
        );
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn fit_prior(args: FitPriorArgs) -> Result<ExitCode> {
    let ds = TraceDataset::read_csv(&args.traces)?;
    let fit = FittedPrior::fit(&ds)?;
    let dir = args.out.unwrap_or_else(|| out_root().join("prior"));
    fit.write_dir(&dir)?;
    for (z, c) in &fit.classes {
        let pooled = if c.pooled_cov { " (pooled covariance)" } else { "" };
        println!("class {z}: {} arms, {} traces{pooled}", c.arms, c.traces);
    }
    println!("wrote {}", dir.display());
    Ok(ExitCode::SUCCESS)
}

fn parse_delays(spec: &str, j: usize) -> Result<DelaySchedule> {
    match spec {
        "progressive" => Ok(DelaySchedule::progressive(j)),
        "pure" => Ok(DelaySchedule::progressive(j).pure_delay()),
        list => {
            let d = list
                .split(',')
                .map(|s| s.trim().parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::config("delays", e.to_string()))?;
            if d.len() != j {
                return Err(Error::config("delays", format!("expected {j} delays, got {}", d.len())));
            }
            DelaySchedule::new(d).map_err(|e| Error::config("delays", e.to_string()))
        }
    }
}

fn vopf(args: VopfArgs) -> Result<ExitCode> {
    if args.m.is_empty() || args.m.contains(&0) {
        return Err(Error::config("m", "batch sizes must be positive"));
    }
    if args.t_max == 0 {
        return Err(Error::config("t-max", "must be at least 1"));
    }
    let fitted = match &args.prior {
        Some(dir) => {
            let fit = FittedPrior::read_dir(dir)?;
            let class = match &args.class {
                Some(z) => fit.class(z)?,
                None => fit
                    .classes
                    .values()
                    .next()
                    .ok_or_else(|| Error::config("prior", "no classes in prior directory"))?,
            };
            let prior = class.prior()?;
            let reward = RewardSpec::sum(prior.dim(), 1.0);
            Some((prior, reward))
        }
        None => None,
    };
    let name = args.preset.as_deref().unwrap_or("genmodel");
    let label = if fitted.is_some() { "prior" } else { name };

    let mut curves = Vec::new();
    for &m in &args.m {
        // Preset models are rebuilt per m: the synthetic noise covariance scales with it.
        let (prior, reward) = match &fitted {
            Some(pr) => pr.clone(),
            None => {
                let mut config = harness::preset(name)?;
                config.batch_size = m;
                if let Some(s) = args.seed {
                    config.seed = s;
                }
                let (prior, reward, _) = Prepared::new(&config)?.vopf_model()?;
                (prior, reward)
            }
        };
        let delays = parse_delays(&args.delays, prior.dim())?;
        curves.push((m, vopf_curve(&prior, &reward, &delays, m, args.t_max)?));
    }
    let path = args.out.unwrap_or_else(|| out_root().join("vopf").join("vopf.csv"));
    output::write_vopf(&path, label, &curves)?;
    println!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn gen_traces(args: GenTracesArgs) -> Result<ExitCode> {
    let params = BinaryTraceParams {
        num_arms: args.arms,
        traces_per_arm: args.traces_per_arm,
        j: args.outcomes,
        num_classes: args.classes,
        ..Default::default()
    };
    params.validate()?;
    let path = args.out.unwrap_or_else(|| out_root().join("traces.csv"));
    let ds = gen_binary_traces(&params, &mut stream(args.seed, 0, "traces", Purpose::Data))?;
    ds.write_csv(&path)?;
    println!("wrote {} ({} arms, {} traces)", path.display(), ds.arms().len(), ds.num_traces());
    Ok(ExitCode::SUCCESS)
}

/// Runs one parsed invocation.
pub fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::FitPrior(a) => fit_prior(a),
        Command::Vopf(a) => vopf(a),
        Command::GenTraces(a) => gen_traces(a),
    }
}

/// Maps an error to its exit code after printing it.
pub fn report(err: &Error) -> ExitCode {
    eprintln!("error: {err}");
    if err.is_config_error() {
        ExitCode::from(2)
    } else {
        ExitCode::from(1)
    }
}

pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => report(&e),
    }
}
