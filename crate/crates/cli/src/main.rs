//! Command-line front end for fitting, applying and evaluating
//! reconstruction trees, and for running the experiment harness.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use rectree::codebook;
use rectree::data::read_csv_rows;
use rectree::data_gen::{sample, GeneratorSpec};
use rectree::experiment::{
    geometric_etas, grid_distribution, run_approximation_trend, run_baseline_comparison,
    run_eta_sweep_experiment, run_rate_experiment, RateExperimentConfig,
};
use rectree::oracle::DiscreteDistribution;
use rectree::reconstruction::{
    distortion_with_stderr, empirical_distortion, fit, sweep, DEFAULT_BETA, DEFAULT_GAMMA,
};
use rectree::{normalize, CellId, Dataset, RateSchedule};

#[derive(Parser)]
#[command(
    name = "rectree",
    version,
    about = "Reconstruction trees for vector quantization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic dataset.
    Sample(SampleArgs),
    /// Rescale a CSV file into the unit cube and store it as a dataset file.
    Normalize(NormalizeArgs),
    /// Fit a quantizer and write its codebook.
    Fit(FitArgs),
    /// Map points to leaf cells.
    Encode(EncodeArgs),
    /// Map leaf cells back to code vectors.
    Decode(DecodeArgs),
    /// Mean squared quantization error on a dataset.
    Distortion(DistortionArgs),
    /// Distortion and leaf count over a grid of thresholds.
    Sweep(SweepArgs),
    /// Distortion against sample size under the default threshold schedule.
    RateExperiment(RateArgs),
    /// Exact distortion against threshold for a discrete distribution.
    ApproxTrend(ApproxArgs),
    /// Reconstruction tree against k-means at matched codebook sizes.
    Baseline(BaselineArgs),
}

#[derive(Args)]
struct ScheduleArgs {
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    gamma: f64,
    #[arg(long, default_value_t = DEFAULT_BETA)]
    beta: f64,
}

#[derive(Args)]
struct SampleArgs {
    /// TOML file describing the generator.
    #[arg(long)]
    generator: PathBuf,
    #[arg(long)]
    n: usize,
    /// Overrides the generator seed.
    #[arg(long)]
    seed: Option<u64>,
    /// `.csv` for text, anything else for the binary dataset format.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct NormalizeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    input: PathBuf,
    /// Threshold; defaults to the schedule value for the sample size.
    #[arg(long)]
    eta: Option<f64>,
    #[command(flatten)]
    schedule: ScheduleArgs,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long)]
    codebook: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    codebook: PathBuf,
    /// CSV produced by `encode`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct DistortionArgs {
    #[arg(long)]
    codebook: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// TOML sweep configuration with a generator; alternative to `--input`.
    #[arg(long, conflicts_with = "input")]
    config: Option<PathBuf>,
    #[arg(long, requires = "holdout")]
    input: Option<PathBuf>,
    #[arg(long)]
    holdout: Option<PathBuf>,
    /// Comma-separated thresholds, overriding the configuration.
    #[arg(long, value_delimiter = ',')]
    etas: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    schedule: ScheduleArgs,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct RateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Per-trial rows before aggregation.
    #[arg(long)]
    trials_output: Option<PathBuf>,
}

#[derive(Args)]
struct ApproxArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_delimiter = ',')]
    etas: Option<Vec<f64>>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_delimiter = ',')]
    etas: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Debug, Deserialize)]
struct EtaGrid {
    hi: f64,
    lo: f64,
    count: usize,
}

fn resolve_etas(
    explicit: Option<Vec<f64>>,
    listed: Option<Vec<f64>>,
    grid: Option<EtaGrid>,
) -> Result<Vec<f64>> {
    if let Some(etas) = explicit.or(listed) {
        return Ok(etas);
    }
    match grid {
        Some(g) => Ok(geometric_etas(g.hi, g.lo, g.count)),
        None => bail!("no thresholds given: set `etas` or `eta_grid`"),
    }
}

#[derive(Debug, Deserialize)]
struct SweepConfig {
    generator: GeneratorSpec,
    n: usize,
    holdout_n: usize,
    etas: Option<Vec<f64>>,
    eta_grid: Option<EtaGrid>,
    #[serde(default = "default_gamma")]
    gamma: f64,
    #[serde(default = "default_beta")]
    beta: f64,
}

#[derive(Debug, Deserialize)]
struct BaselineConfig {
    generator: GeneratorSpec,
    n: usize,
    holdout_n: usize,
    etas: Option<Vec<f64>>,
    eta_grid: Option<EtaGrid>,
    #[serde(default = "default_gamma")]
    gamma: f64,
    #[serde(default = "default_beta")]
    beta: f64,
    #[serde(default)]
    kmeans_seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum DistributionSource {
    /// Equal-weight atoms at the centers of a regular grid.
    Grid { dim: usize, per_axis: usize },
    /// CSV rows of atom coordinates followed by a weight column.
    Csv { path: PathBuf },
}

#[derive(Debug, Deserialize)]
struct ApproxConfig {
    distribution: DistributionSource,
    etas: Option<Vec<f64>>,
    eta_grid: Option<EtaGrid>,
}

fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}

fn default_beta() -> f64 {
    DEFAULT_BETA
}

#[derive(Serialize)]
struct EncodedRow {
    row: usize,
    depth: u32,
    /// Lattice coordinates separated by spaces.
    index: String,
}

#[derive(Deserialize)]
struct EncodedRecord {
    depth: u32,
    index: String,
}

#[derive(Serialize)]
struct DistortionRow {
    n: usize,
    distortion: f64,
    stderr: f64,
}

#[derive(Serialize)]
struct FitSummary {
    n: usize,
    eta: f64,
    leaf_count: usize,
    train_distortion: f64,
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// CSV inputs must already lie in the unit cube; binary dataset files are
/// checked on load.
fn load_dataset(path: &Path) -> Result<Dataset> {
    let data = if is_csv(path) {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        Dataset::from_rows(&read_csv_rows(file)?)?
    } else {
        Dataset::load(path)?
    };
    Ok(data)
}

fn save_dataset(data: &Dataset, path: &Path) -> Result<()> {
    if is_csv(path) {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record((0..data.dim()).map(|k| format!("x{k}")))?;
        for x in data.iter() {
            w.write_record(x.iter().map(f64::to_string))?;
        }
        w.flush()?;
    } else {
        data.save(path)?;
    }
    Ok(())
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_rows<T: Serialize>(path: Option<&Path>, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink(path)?);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn load_distribution(source: DistributionSource) -> Result<DiscreteDistribution> {
    Ok(match source {
        DistributionSource::Grid { dim, per_axis } => grid_distribution(dim, per_axis)?,
        DistributionSource::Csv { path } => {
            let rows = read_csv_rows(File::open(&path)?)?;
            let width = rows.first().map_or(0, Vec::len);
            if width < 2 {
                bail!("{}: need coordinates and a weight column", path.display());
            }
            let mut atoms = Vec::new();
            let mut weights = Vec::new();
            for row in &rows {
                if row.len() != width {
                    bail!("{}: ragged rows", path.display());
                }
                atoms.extend_from_slice(&row[..width - 1]);
                weights.push(row[width - 1]);
            }
            DiscreteDistribution::new(width - 1, atoms, weights)?
        }
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sample(a) => {
            let mut spec: GeneratorSpec = read_toml(&a.generator)?;
            if let Some(seed) = a.seed {
                spec.seed = seed;
            }
            save_dataset(&sample(&spec, a.n)?, &a.output)?;
        }
        Command::Normalize(a) => {
            let rows = read_csv_rows(File::open(&a.input)?)?;
            save_dataset(&normalize(&rows)?, &a.output)?;
        }
        Command::Fit(a) => {
            let data = load_dataset(&a.input)?;
            let schedule = RateSchedule::new(a.schedule.gamma, a.schedule.beta, data.dim())?;
            let eta = a.eta.unwrap_or_else(|| schedule.eta(data.len()));
            let q = fit(&data, eta, &schedule)?;
            codebook::save(&q, &a.output)?;
            let summary = FitSummary {
                n: data.len(),
                eta,
                leaf_count: q.leaf_count(),
                train_distortion: empirical_distortion(&q, &data)?,
            };
            write_rows(None, &[summary])?;
        }
        Command::Encode(a) => {
            let q = codebook::load(&a.codebook)?;
            let data = load_dataset(&a.input)?;
            let rows = data
                .iter()
                .enumerate()
                .map(|(row, x)| {
                    let id = q.encode(x)?;
                    Ok(EncodedRow {
                        row,
                        depth: id.depth,
                        index: id
                            .index
                            .iter()
                            .map(u64::to_string)
                            .collect::<Vec<_>>()
                            .join(" "),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            write_rows(a.output.as_deref(), &rows)?;
        }
        Command::Decode(a) => {
            let q = codebook::load(&a.codebook)?;
            let mut reader = csv::Reader::from_path(&a.input)?;
            let mut w = csv::Writer::from_writer(sink(a.output.as_deref())?);
            w.write_record((0..q.dim()).map(|k| format!("x{k}")))?;
            for record in reader.deserialize() {
                let record: EncodedRecord = record?;
                let index = record
                    .index
                    .split_whitespace()
                    .map(str::parse)
                    .collect::<std::result::Result<Vec<u64>, _>>()
                    .context("malformed cell index")?;
                let code = q.decode(&CellId::new(record.depth, index)?)?;
                w.write_record(code.iter().map(f64::to_string))?;
            }
            w.flush()?;
        }
        Command::Distortion(a) => {
            let q = codebook::load(&a.codebook)?;
            let data = load_dataset(&a.input)?;
            let (distortion, stderr) = distortion_with_stderr(&q, &data)?;
            write_rows(
                a.output.as_deref(),
                &[DistortionRow {
                    n: data.len(),
                    distortion,
                    stderr,
                }],
            )?;
        }
        Command::Sweep(a) => {
            if let Some(path) = a.config {
                let cfg: SweepConfig = read_toml(&path)?;
                let mut generator = cfg.generator;
                if let Some(seed) = a.seed {
                    generator.seed = seed;
                }
                let etas = resolve_etas(a.etas, cfg.etas, cfg.eta_grid)?;
                let schedule = RateSchedule::new(cfg.gamma, cfg.beta, generator.ambient_dim)?;
                let rows =
                    run_eta_sweep_experiment(&generator, cfg.n, &etas, &schedule, cfg.holdout_n)?;
                write_rows(a.output.as_deref(), &rows)?;
            } else {
                let (Some(input), Some(holdout)) = (a.input, a.holdout) else {
                    bail!("sweep needs either --config or --input with --holdout");
                };
                let Some(etas) = a.etas else {
                    bail!("sweep over a dataset needs --etas");
                };
                let train = load_dataset(&input)?;
                let holdout = load_dataset(&holdout)?;
                let schedule = RateSchedule::new(a.schedule.gamma, a.schedule.beta, train.dim())?;
                let rows = sweep(&train, &etas, &schedule)?
                    .into_iter()
                    .map(|r| {
                        Ok(rectree::experiment::EtaSweepRow {
                            eta: r.eta,
                            leaf_count: r.leaf_count,
                            train_distortion: r.train_distortion,
                            holdout_distortion: empirical_distortion(&r.quantizer, &holdout)?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                write_rows(a.output.as_deref(), &rows)?;
            }
        }
        Command::RateExperiment(a) => {
            let mut cfg: RateExperimentConfig = read_toml(&a.config)?;
            if let Some(seed) = a.seed {
                cfg.seed = seed;
            }
            if let Some(gamma) = a.gamma {
                cfg.gamma = gamma;
            }
            if let Some(beta) = a.beta {
                cfg.beta = beta;
            }
            if let Some(trials) = a.trials {
                cfg.trials = trials;
            }
            let result = run_rate_experiment(&cfg)?;
            if let Some(path) = &a.trials_output {
                write_rows(Some(path), &result.trials)?;
            }
            write_rows(a.output.as_deref(), &result.rows)?;
            report_slope(a.output.is_some(), result.fitted_slope);
        }
        Command::ApproxTrend(a) => {
            let cfg: ApproxConfig = read_toml(&a.config)?;
            let etas = resolve_etas(a.etas, cfg.etas, cfg.eta_grid)?;
            let dist = load_distribution(cfg.distribution)?;
            let result = run_approximation_trend(&dist, &etas)?;
            write_rows(a.output.as_deref(), &result.rows)?;
            report_slope(a.output.is_some(), result.fitted_slope);
        }
        Command::Baseline(a) => {
            let cfg: BaselineConfig = read_toml(&a.config)?;
            let etas = resolve_etas(a.etas, cfg.etas, cfg.eta_grid)?;
            let mut generator = cfg.generator;
            if let Some(seed) = a.seed {
                generator.seed = seed;
            }
            let schedule = RateSchedule::new(cfg.gamma, cfg.beta, generator.ambient_dim)?;
            let rows = run_baseline_comparison(
                &generator,
                cfg.n,
                &etas,
                &schedule,
                cfg.holdout_n,
                cfg.kmeans_seed,
            )?;
            write_rows(a.output.as_deref(), &rows)?;
        }
    }
    Ok(())
}

/// The slope goes to stdout when the table went to a file, else stderr.
fn report_slope(table_in_file: bool, slope: Option<f64>) {
    let line = match slope {
        Some(s) => format!("fitted_slope,{s}"),
        None => "fitted_slope,".to_string(),
    };
    if table_in_file {
        println!("{line}");
    } else {
        eprintln!("{line}");
    }
}

fn main() -> Result<()> {
    run(Cli::parse())
}
