use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tomo_bench::{reproduce_figure, run_experiment, ExperimentConfig, FigureName, FigureOptions};
use tomo_core::asymptotics;
use tomo_core::design::{pauli_design, random_bases_design, DesignJson, MeasurementDesign};
use tomo_core::estimators::{estimate, CvMetric, EstimatorConfig, LinearModel, Method};
use tomo_core::linalg::MatrixJson;
use tomo_core::qstate::{random_rank_r_state, DensityMatrix, StateJson};
use tomo_core::sampling::{simulate_counts, CountsDataset, DatasetMeta};

/// Quantum state tomography estimators and Monte-Carlo benchmarks.
#[derive(Parser)]
#[command(name = "tomo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a measurement design as JSON.
    Design(DesignArgs),
    /// Simulate count data for a state under a design.
    Simulate(SimulateArgs),
    /// Estimate a state from count data.
    Estimate(EstimateArgs),
    /// Evaluate a closed-form risk prediction.
    Predict(PredictArgs),
    /// Monte-Carlo experiments and figure tables.
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Run the experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Same as the top-level `predict`.
    Predict(PredictArgs),
    /// Regenerate the table behind a reference figure.
    Reproduce(ReproduceArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum DesignKindArg {
    Pauli,
    Random,
}

#[derive(Args)]
struct DesignArgs {
    #[arg(long, value_enum)]
    kind: DesignKindArg,
    /// Number of qubits (Pauli).
    #[arg(long)]
    qubits: Option<usize>,
    /// Dimension (random bases).
    #[arg(long)]
    d: Option<usize>,
    /// Number of bases (random bases).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    design: PathBuf,
    /// State JSON; a random rank-`r` state is drawn when absent.
    #[arg(long, conflicts_with = "rank")]
    state: Option<PathBuf>,
    #[arg(long)]
    rank: Option<usize>,
    /// Shots per setting in each batch.
    #[arg(long)]
    m: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Independent batches, written as `<stem>.<i>.csv`.
    #[arg(long, default_value_t = 1)]
    batches: usize,
    #[arg(long)]
    out: PathBuf,
    /// Also write the true state as JSON.
    #[arg(long)]
    state_out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    method: Method,
    /// Count CSV; repeat once per batch (TLS/TGLS need at least 5).
    #[arg(long, required = true)]
    data: Vec<PathBuf>,
    #[arg(long)]
    design: PathBuf,
    #[arg(long, default_value = "frobenius")]
    cv_metric: CvMetric,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Formula {
    LsFrobenius,
    LsNorms,
    BlockVariances,
    Epsilon,
    PlsFrobenius,
    PlsBures,
    PlsNormBounds,
    MlBuresMixed,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long, value_enum)]
    formula: Formula,
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 1)]
    r: usize,
    #[arg(long = "N", alias = "n", default_value_t = 1.0)]
    n: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReproduceArgs {
    #[arg(long)]
    figure: String,
    #[arg(long)]
    d: Option<usize>,
    /// Total samples `N` (covariant figures) or shots per setting `m` (Pauli figures).
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, value_delimiter = ',')]
    ranks: Option<Vec<usize>>,
    #[arg(long, env = tomo_bench::config::SEED_ENV, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn write_json(path: Option<&Path>, value: &impl serde::Serialize) -> Result<()> {
    let mut w = output(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))
}

fn load_design(path: &Path) -> Result<MeasurementDesign> {
    Ok(MeasurementDesign::from_json(&read_json::<DesignJson>(path)?)?)
}

fn batch_path(out: &Path, i: usize, batches: usize) -> PathBuf {
    if batches == 1 {
        return out.to_path_buf();
    }
    let stem = out.file_stem().unwrap_or_default().to_string_lossy();
    out.with_file_name(format!("{stem}.{i}.csv"))
}

fn design(args: DesignArgs) -> Result<()> {
    let design = match args.kind {
        DesignKindArg::Pauli => pauli_design(args.qubits.context("--qubits is required for a Pauli design")?)?,
        DesignKindArg::Random => {
            let d = args.d.context("--d is required for random bases")?;
            let k = args.k.context("--k is required for random bases")?;
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            random_bases_design(d, k, &mut rng)?.with_seed(args.seed)
        }
    };
    write_json(args.out.as_deref(), &design.to_json())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let design = load_design(&args.design)?;
    if args.batches == 0 {
        bail!("--batches must be positive");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let rho = match (&args.state, args.rank) {
        (Some(path), _) => DensityMatrix::new(read_json::<StateJson>(path)?.0.to_matrix()?)?,
        (None, Some(r)) => random_rank_r_state(design.dim(), r, &mut rng)?,
        (None, None) => bail!("give --state or --rank"),
    };
    for i in 0..args.batches {
        let data = simulate_counts(&rho, &design, args.m, &mut rng)?;
        let path = batch_path(&args.out, i, args.batches);
        data.write_csv(BufWriter::new(File::create(&path)?))?;
        let meta = path.with_extension("meta.json");
        write_json(Some(&meta), &DatasetMeta::describe(&data, &design))?;
    }
    if let Some(path) = args.state_out {
        write_json(Some(&path), &StateJson(MatrixJson::from_matrix(rho.matrix())))?;
    }
    Ok(())
}

fn estimate_cmd(args: EstimateArgs) -> Result<()> {
    let design = load_design(&args.design)?;
    let batches = args
        .data
        .iter()
        .map(|p| {
            let file = File::open(p).with_context(|| format!("opening {}", p.display()))?;
            Ok(CountsDataset::read_csv(BufReader::new(file), design.dim(), design.num_settings())?)
        })
        .collect::<Result<Vec<_>>>()?;
    let model = LinearModel::new(&design)?;
    let est = estimate(args.method, &model, &batches, args.cv_metric, &EstimatorConfig::default())?;
    let mut out = json!({
        "method": est.method,
        "matrix": MatrixJson::from_matrix(&est.matrix),
    });
    if let Some(it) = est.iterations {
        out["iterations"] = json!(it);
    }
    if let Some(c) = est.converged {
        out["converged"] = json!(c);
    }
    if let Some(c) = est.threshold_constant {
        out["threshold_constant"] = json!(c);
    }
    write_json(args.out.as_deref(), &out)
}

fn predict(args: PredictArgs) -> Result<()> {
    let PredictArgs { formula, d, r, n, .. } = args;
    let value: Value = match formula {
        Formula::LsFrobenius => {
            let scaled = asymptotics::ls_risk_frobenius(d, r)?;
            json!({"value": scaled / n, "scaled": scaled, "leading": asymptotics::ls_risk_frobenius_leading(d) / n})
        }
        Formula::LsNorms => serde_json::to_value(asymptotics::ls_norm_asymptotes(d, n)?)?,
        Formula::BlockVariances => serde_json::to_value(asymptotics::ls_block_variances(d, r)?)?,
        Formula::Epsilon => json!({"value": asymptotics::solve_epsilon(r, d)?}),
        Formula::PlsFrobenius => serde_json::to_value(asymptotics::pls_risk_frobenius(d, r, n)?)?,
        Formula::PlsBures => serde_json::to_value(asymptotics::pls_risk_bures(d, r, n)?)?,
        Formula::PlsNormBounds => serde_json::to_value(asymptotics::pls_norm_lower_bounds(d, r, n)?)?,
        Formula::MlBuresMixed => json!({"value": asymptotics::ml_bures_mixed(d, n)?}),
    };
    let name = formula.to_possible_value().map(|v| v.get_name().to_owned()).unwrap_or_default();
    let mut out = json!({"formula": name, "d": d, "r": r, "N": n});
    if let (Value::Object(o), Value::Object(v)) = (&mut out, value) {
        o.extend(v);
    }
    write_json(args.out.as_deref(), &out)
}

fn bench(command: BenchCommand) -> Result<()> {
    match command {
        BenchCommand::Run { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = run_experiment(&cfg)?;
            for s in &report.skipped {
                log::warn!("skipped {}/{}: {}", s.estimator, s.metric, s.reason);
            }
            report.write_csv(output(out.as_deref())?)?;
        }
        BenchCommand::Predict(args) => predict(args)?,
        BenchCommand::Reproduce(args) => {
            let name: FigureName = args.figure.parse()?;
            let opts = FigureOptions {
                d: args.d,
                samples: args.samples,
                trials: args.trials,
                ranks: args.ranks,
                seed: args.seed,
            };
            reproduce_figure(name, &opts)?.write_csv(output(args.out.as_deref())?)?;
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Design(args) => design(args),
        Command::Simulate(args) => simulate(args),
        Command::Estimate(args) => estimate_cmd(args),
        Command::Predict(args) => predict(args),
        Command::Bench(command) => bench(command),
    }
}
