//! Command-line front end: lift point clouds to simplicial complexes, dump
//! geometric invariants, simulate charged-particle datasets, train and
//! evaluate models, check their symmetries, and benchmark construction
//! times.
//!
//! Seeds passed via `--seed` can be overridden globally with the
//! `EMPSN_SEED` environment variable.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use empsn::bench::{qm9like_clouds, run_bench, write_bench_csv, BenchReport};
use empsn::complex::{build_adjacency, vietoris_rips, AdjacencyKind, Simplex, SimplicialComplex};
use empsn::geometry::Point;
use empsn::harness::{
    check_equivariance, evaluate, load_pointcloud, nbody_profile, qm9_profile, save_pointcloud,
    simulate_dataset, train, GeometricSample, HarnessError, Metric, ModelPredictor, NBodyConfig,
    Normalization,
};
use empsn::invariants::{all_invariants, write_invariants_csv};
use empsn::model::{EmpsnConfig, EmpsnModel};

#[derive(Parser)]
#[command(name = "empsn", version, about = "Simplicial message passing over point clouds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lift point clouds to Vietoris-Rips complexes
    Lift(LiftArgs),
    /// Write a complex's geometric invariants as CSV
    Invariants(InvariantsArgs),
    /// Simulate charged-particle trajectory datasets
    Simulate(SimulateArgs),
    /// Train a model on a dataset
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset
    Eval(EvalArgs),
    /// Check a checkpoint's invariance/equivariance under rigid motions
    CheckEquivariance(CheckArgs),
    /// Print the trainable parameter count of a model config
    ParamsCount(ParamsArgs),
    /// Time radius-graph versus full-lift construction
    Bench(BenchArgs),
}

#[derive(Args)]
struct LiftArgs {
    /// JSON-lines input; each line needs a "pos" array of points
    #[arg(long)]
    input: PathBuf,
    /// Lift radius: points within delta get connected
    #[arg(long)]
    delta: f64,
    /// Highest simplex dimension to keep
    #[arg(long)]
    max_dim: usize,
    /// Output path; one complex JSON per line
    #[arg(long)]
    output: PathBuf,
    /// Also include every pairwise edge (complete graph at dimension 1)
    #[arg(long)]
    augment_fc_edges: bool,
}

#[derive(Args)]
struct InvariantsArgs {
    /// A single complex as JSON (as written by `lift`)
    #[arg(long)]
    input: PathBuf,
    /// CSV output: kind,sender_dim,sender_idx,receiver_dim,receiver_idx,values...
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 5)]
    bodies: usize,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    /// Output stem: writes <stem>.train/.val/.test siblings
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Scales the default 3000/2000/2000 split sizes
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = 0.1)]
    softening: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    /// Trajectory regression with the constant-lr profile
    Nbody,
    /// Graph regression with the cosine-annealed profile
    Graph,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    task: TaskArg,
    /// Model config JSON
    #[arg(long)]
    config: PathBuf,
    /// Dataset file or stem with .train/.val siblings
    #[arg(long)]
    data: PathBuf,
    /// Output directory for model.json and metrics.csv
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    /// Override the profile's learning rate
    #[arg(long)]
    lr: Option<f64>,
    /// Override the profile's batch size
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Mae,
    Mse,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint written by `train`
    #[arg(long)]
    model: PathBuf,
    /// Dataset file or stem with a .test sibling
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    metric: MetricArg,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 1e-8)]
    threshold: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ParamsArgs {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum PointsArg {
    /// Molecule-sized clouds: 5-29 points uniform in [-5,5]^3
    Qm9like,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated radii, e.g. 4,8,12,16,20
    #[arg(long, value_delimiter = ',', required = true)]
    deltas: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    repeats: usize,
    #[arg(long, value_enum, default_value_t = PointsArg::Qm9like)]
    points: PointsArg,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of clouds in the timed set
    #[arg(long, default_value_t = 20)]
    clouds: usize,
    #[arg(long, default_value_t = 2)]
    max_dim: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

type CliError = Box<dyn std::error::Error>;

fn run(command: Command) -> Result<ExitCode, CliError> {
    match command {
        Command::Lift(a) => lift(a),
        Command::Invariants(a) => invariants(a),
        Command::Simulate(a) => simulate(a),
        Command::Train(a) => run_train(a),
        Command::Eval(a) => eval(a),
        Command::CheckEquivariance(a) => check(a),
        Command::ParamsCount(a) => params_count(a),
        Command::Bench(a) => bench(a),
    }
}

/// `EMPSN_SEED`, when set, wins over any `--seed` flag.
fn effective_seed(flag: u64) -> Result<u64, CliError> {
    match std::env::var("EMPSN_SEED") {
        Ok(text) => text
            .trim()
            .parse()
            .map_err(|_| format!("EMPSN_SEED is not an integer seed: {text:?}").into()),
        Err(_) => Ok(flag),
    }
}

/// `nbody.jsonl` -> `nbody.train.jsonl` and friends.
fn split_path(out: &Path, split: &str) -> PathBuf {
    let ext = out
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("jsonl")
        .to_string();
    let stem = out
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("data")
        .to_string();
    out.with_file_name(format!("{stem}.{split}.{ext}"))
}

fn lift(a: LiftArgs) -> Result<ExitCode, CliError> {
    #[derive(Deserialize)]
    struct PosOnly {
        pos: Vec<Vec<f64>>,
    }
    let text = fs::read_to_string(&a.input)?;
    let mut out = BufWriter::new(fs::File::create(&a.output)?);
    let mut count = 0usize;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cloud: PosOnly = serde_json::from_str(line)
            .map_err(|e| format!("{}:{}: {e}", a.input.display(), i + 1))?;
        let points: Vec<Point<f64>> = cloud.pos.into_iter().map(Point::new).collect();
        let mut complex = vietoris_rips(&points, a.delta, a.max_dim)?;
        if a.augment_fc_edges {
            complex = with_complete_edges(&complex)?;
        }
        writeln!(out, "{}", complex.to_json_string()?)?;
        count += 1;
    }
    out.flush()?;
    println!("lifted {count} clouds -> {}", a.output.display());
    Ok(ExitCode::SUCCESS)
}

/// Unions the complete graph into dimension 1, leaving other dimensions as
/// lifted.
fn with_complete_edges(
    complex: &SimplicialComplex<f64>,
) -> Result<SimplicialComplex<f64>, CliError> {
    let n = complex.num_points();
    let mut dims: Vec<Vec<Simplex>> = (0..=complex.max_dim())
        .map(|d| complex.simplices(d))
        .collect();
    if dims.len() < 2 {
        dims.resize(2, Vec::new());
    }
    for i in 0..n {
        for j in i + 1..n {
            dims[1].push(Simplex::new(vec![i, j])?);
        }
    }
    Ok(SimplicialComplex::from_parts(
        complex.positions().to_vec(),
        dims,
    )?)
}

fn invariants(a: InvariantsArgs) -> Result<ExitCode, CliError> {
    let text = fs::read_to_string(&a.input)?;
    let complex = SimplicialComplex::<f64>::from_json_str(&text).or_else(|first_err| {
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        match lines.as_slice() {
            [one] => SimplicialComplex::from_json_str(one),
            [] => Err(first_err),
            many => Err(empsn::complex::ComplexError::InvalidInput(format!(
                "{} holds {} complexes; pass a single-complex file",
                a.input.display(),
                many.len()
            ))),
        }
    })?;
    let adj = build_adjacency(
        &complex,
        &[
            AdjacencyKind::Upper,
            AdjacencyKind::Boundary,
            AdjacencyKind::Coboundary,
        ],
        None,
    )?;
    let set = all_invariants(&complex, &adj, None)?;
    let mut out = BufWriter::new(fs::File::create(&a.output)?);
    write_invariants_csv(&adj, &set, &mut out)?;
    out.flush()?;
    println!(
        "wrote {} invariant rows -> {}",
        adj.total_pairs(),
        a.output.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn simulate(a: SimulateArgs) -> Result<ExitCode, CliError> {
    let cfg = NBodyConfig {
        num_bodies: a.bodies,
        num_steps: a.steps,
        dt: a.dt,
        softening: a.softening,
        seed: effective_seed(a.seed)?,
        ..NBodyConfig::default()
    }
    .scaled(a.scale)?;
    let data = simulate_dataset(&cfg)?;
    for (split, samples) in [
        ("train", &data.train),
        ("val", &data.val),
        ("test", &data.test),
    ] {
        let path = split_path(&a.out, split);
        save_pointcloud(&path, samples)?;
        println!("{split}: {} trajectories -> {}", samples.len(), path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn load_model_config(path: &Path) -> Result<EmpsnConfig, CliError> {
    let text = fs::read_to_string(path)?;
    let cfg: EmpsnConfig = serde_json::from_str(&text)
        .map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(cfg)
}

/// Prefers `.train`/`.val` siblings of `data`; otherwise loads the file
/// and splits it 80/20 in order.
fn resolve_train_val(
    data: &Path,
) -> Result<(Vec<GeometricSample>, Vec<GeometricSample>), CliError> {
    let train_p = split_path(data, "train");
    let val_p = split_path(data, "val");
    if train_p.exists() && val_p.exists() {
        return Ok((load_pointcloud(&train_p)?, load_pointcloud(&val_p)?));
    }
    let all = load_pointcloud(data)?;
    if all.len() < 2 {
        return Err(HarnessError::Invalid(
            "need at least two samples to split into train and val".into(),
        )
        .into());
    }
    let cut = (all.len() * 4).div_ceil(5);
    Ok((all[..cut].to_vec(), all[cut..].to_vec()))
}

fn run_train(a: TrainArgs) -> Result<ExitCode, CliError> {
    let seed = effective_seed(a.seed)?;
    let cfg = load_model_config(&a.config)?;
    match a.task {
        TaskArg::Graph if cfg.target_width == 0 => {
            return Err("graph training needs a config with target_width > 0".into())
        }
        TaskArg::Nbody if cfg.target_width != 0 => {
            return Err("trajectory training needs a config with target_width = 0".into())
        }
        _ => {}
    }
    let mut tc = match a.task {
        TaskArg::Nbody => nbody_profile(a.epochs),
        TaskArg::Graph => qm9_profile(a.epochs),
    };
    if let Some(lr) = a.lr {
        tc.lr = lr;
    }
    if let Some(bs) = a.batch_size {
        tc.batch_size = bs;
    }
    tc.seed = seed;
    let (train_set, val_set) = resolve_train_val(&a.data)?;
    let mut model = EmpsnModel::new(cfg, seed)?;
    println!(
        "training on {} samples ({} validation), {} trainable parameters",
        train_set.len(),
        val_set.len(),
        model.num_trainable_scalars()
    );
    let report = train(&mut model, &train_set, &val_set, &tc, &a.out)?;
    println!(
        "best val {:.6e} at epoch {} -> {}",
        report.best_val,
        report.best_epoch,
        report.checkpoint.display()
    );
    println!("metrics -> {}", a.out.join("metrics.csv").display());
    Ok(ExitCode::SUCCESS)
}

fn metric_of(m: MetricArg) -> Metric {
    match m {
        MetricArg::Mae => Metric::Mae,
        MetricArg::Mse => Metric::Mse,
    }
}

fn resolve_eval_set(data: &Path) -> Result<Vec<GeometricSample>, CliError> {
    let test_p = split_path(data, "test");
    if test_p.exists() {
        return Ok(load_pointcloud(&test_p)?);
    }
    Ok(load_pointcloud(data)?)
}

fn eval(a: EvalArgs) -> Result<ExitCode, CliError> {
    let (mut model, meta) = EmpsnModel::load_with_meta(&a.model)?;
    let norm: Option<Normalization> = match meta.get("normalization") {
        Some(v) => Some(serde_json::from_value(v.clone())?),
        None => None,
    };
    let samples = resolve_eval_set(&a.data)?;
    let value = evaluate(&mut model, &samples, metric_of(a.metric), norm.as_ref())?;
    let name = match a.metric {
        MetricArg::Mae => "mae",
        MetricArg::Mse => "mse",
    };
    println!("{name} {value}");
    Ok(ExitCode::SUCCESS)
}

fn check(a: CheckArgs) -> Result<ExitCode, CliError> {
    let mut model = EmpsnModel::load(&a.model)?;
    let samples = resolve_eval_set(&a.data)?;
    let seed = effective_seed(a.seed)?;
    let mut predictor = ModelPredictor::new(&mut model);
    let report = check_equivariance(&mut predictor, &samples, a.trials, seed, a.threshold)?;
    println!("{}", serde_json::to_string(&report)?);
    if report.passed {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("symmetry check failed");
        Ok(ExitCode::FAILURE)
    }
}

fn params_count(a: ParamsArgs) -> Result<ExitCode, CliError> {
    let cfg = load_model_config(&a.config)?;
    let model = EmpsnModel::new(cfg, 0)?;
    println!("{}", model.num_trainable_scalars());
    Ok(ExitCode::SUCCESS)
}

fn print_bench_table(report: &BenchReport) {
    println!("delta  radius_ms  vr_ms  ratio");
    for row in &report.rows {
        let ratio = if row.radius_ms.mean > 0.0 {
            row.vr_ms.mean / row.radius_ms.mean
        } else {
            f64::NAN
        };
        println!(
            "{:<6} {:<10.4} {:<6.4} {ratio:.2}",
            row.delta, row.radius_ms.mean, row.vr_ms.mean
        );
    }
}

fn bench(a: BenchArgs) -> Result<ExitCode, CliError> {
    let seed = effective_seed(a.seed)?;
    let clouds = match a.points {
        PointsArg::Qm9like => qm9like_clouds(a.clouds, seed),
    };
    let report = run_bench(&clouds, &a.deltas, a.repeats, a.max_dim)?;
    write_bench_csv(&a.out, &report)?;
    print_bench_table(&report);
    println!("csv -> {}", a.out.display());
    Ok(ExitCode::SUCCESS)
}
