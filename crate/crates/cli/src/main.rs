//! `gwaug`: estimate graphons, sample and augment graph datasets, and run
//! augmentation experiments from the command line.
//!
//! Exit status is 0 on success, 1 for invalid flags, inputs or configs, and
//! 2 for file-system errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gwaug::augment::{augment_dataset, AugmentationPlan};
use gwaug::estimators::{estimate, EstimatorConfig, EstimatorMethod};
use gwaug::eval::{run_experiment, synthetic_benchmark, BenchmarkSpec, ExperimentConfig};
use gwaug::graph::{load_dataset, save_dataset, DatasetFormat, GraphDataset, NodeMeasurePolicy};
use gwaug::graphon::{graphon_distance, graphon_heatmap, load_graphon, sample_graph, save_graphon};
use gwaug::ot::{GwOrder, GwParams};
use gwaug::rng::{derive_seed, rng_from_seed};
use gwaug::{Error, Graph, Result, StepGraphonF64};

#[derive(Debug, Parser)]
#[command(name = "gwaug", version, about = "Graphon estimation and graph data augmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate the graphon of one class of a dataset and write it as GMX.
    Estimate(EstimateArgs),
    /// Sample graphs from a GMX graphon into a JSONL dataset.
    Sample(SampleArgs),
    /// Add graphs sampled from per-class graphons to a training set.
    Augment(AugmentArgs),
    /// Print the Gromov-Wasserstein discrepancy between two GMX graphons.
    Distance(DistanceArgs),
    /// Run an augmentation experiment described by a JSON config.
    Evaluate(EvaluateArgs),
    /// Write a GMX graphon as a PGM heatmap.
    Heatmap(HeatmapArgs),
    /// Generate a labelled synthetic dataset from a JSON spec.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Args)]
struct GwFlags {
    /// Proximal step strength
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    /// Proximal steps per distance, alternations per barycenter
    #[arg(long, default_value_t = 50)]
    outer_iterations: usize,
    /// Sinkhorn sweeps per proximal step
    #[arg(long, default_value_t = 300)]
    sinkhorn_iterations: usize,
    /// Stop once the objective improves by less than this
    #[arg(long, default_value_t = 1e-7)]
    tolerance: f64,
}

impl GwFlags {
    fn params(&self, order: GwOrder, seed: u64) -> GwParams<f64> {
        GwParams {
            order,
            epsilon: self.epsilon,
            outer_iterations: self.outer_iterations,
            sinkhorn_iterations: self.sinkhorn_iterations,
            tolerance: self.tolerance,
            seed,
            ..GwParams::default()
        }
    }
}

#[derive(Debug, Args)]
struct EstimatorFlags {
    /// GB, SGB, SAS, SBA, LG, MC or ORACLE
    #[arg(long)]
    method: String,
    /// Output resolution, or `auto` for min(median node count, 64)
    #[arg(long, default_value = "auto")]
    k: String,
    /// Box-filter side for SGB and SAS (odd)
    #[arg(long, default_value_t = 3)]
    window: usize,
    /// SBA normalized row-distance threshold
    #[arg(long, default_value_t = 0.2)]
    sba_threshold: f64,
    /// LG group count, or `auto` for ceil(log2 N) + 1
    #[arg(long, default_value = "auto")]
    lg_groups: String,
    /// MC singular-value threshold scale
    #[arg(long, default_value_t = 2.02)]
    mc_scale: f64,
    /// Node measure for GB and SGB: degree or uniform
    #[arg(long, default_value = "degree")]
    node_measure: String,
    #[command(flatten)]
    gw: GwFlags,
}

fn auto_or_count(flag: &str, value: &str) -> Result<Option<usize>> {
    if value == "auto" {
        return Ok(None);
    }
    match value.parse::<usize>() {
        Ok(v) if v >= 1 => Ok(Some(v)),
        _ => Err(Error::Config(format!(
            "--{flag} expects a positive integer or `auto`, got {value:?}"
        ))),
    }
}

impl EstimatorFlags {
    fn config(&self, seed: u64) -> Result<EstimatorConfig<f64>> {
        let method: EstimatorMethod = self.method.parse()?;
        let node_measure = match self.node_measure.as_str() {
            "degree" => NodeMeasurePolicy::Degree,
            "uniform" => NodeMeasurePolicy::Uniform,
            other => {
                return Err(Error::Config(format!(
                    "--node-measure expects degree or uniform, got {other:?}"
                )))
            }
        };
        let config = EstimatorConfig {
            method,
            resolution: auto_or_count("k", &self.k)?,
            gw: self.gw.params(GwOrder::Two, seed),
            smoothing_window: self.window,
            sba_threshold: self.sba_threshold,
            lg_groups: auto_or_count("lg-groups", &self.lg_groups)?,
            mc_threshold_scale: self.mc_scale,
            node_measure,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// JSONL dataset
    #[arg(long)]
    dataset: PathBuf,
    /// Class label whose graphs are used
    #[arg(long)]
    label: u32,
    #[command(flatten)]
    estimator: EstimatorFlags,
    /// Seed of the solver's initial perturbations
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output GMX file
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SampleArgs {
    /// Input GMX graphon
    #[arg(long)]
    graphon: PathBuf,
    /// Number of graphs
    #[arg(long)]
    count: usize,
    /// Fixed node count
    #[arg(long, required_unless_present = "nodes_from", conflicts_with = "nodes_from")]
    nodes: Option<usize>,
    /// Draw node counts from the graph sizes of this JSONL dataset
    #[arg(long)]
    nodes_from: Option<PathBuf>,
    /// Label given to every sampled graph
    #[arg(long)]
    label: Option<u32>,
    /// Seed of the sampled graphs
    #[arg(long)]
    seed: u64,
    /// Output JSONL file
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AugmentArgs {
    /// Labelled JSONL training set
    #[arg(long)]
    train: PathBuf,
    /// Synthetic graphs as a fraction of the training-set size
    #[arg(long)]
    rate: f64,
    #[command(flatten)]
    estimator: EstimatorFlags,
    /// Seed of the sampled graphs and the solver
    #[arg(long)]
    seed: u64,
    /// Receives augmented.jsonl and class-<label>.gmx
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct DistanceArgs {
    /// First GMX graphon
    #[arg(long)]
    a: PathBuf,
    /// Second GMX graphon
    #[arg(long)]
    b: PathBuf,
    /// 1 prints d_gw1; 2 prints the squared d_gw2
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(1..=2))]
    order: u8,
    #[command(flatten)]
    gw: GwFlags,
    /// Seed of the solver's initial perturbations
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// JSON experiment config
    #[arg(long)]
    config: PathBuf,
    /// Output CSV report
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct HeatmapArgs {
    /// Input GMX graphon
    #[arg(long)]
    graphon: PathBuf,
    /// Output PGM image
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BenchmarkArgs {
    /// JSON benchmark spec
    #[arg(long)]
    spec: PathBuf,
    /// Seed of the generated dataset
    #[arg(long)]
    seed: u64,
    /// Receives dataset.jsonl and truth-class-<label>.gmx
    #[arg(long)]
    out_dir: PathBuf,
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn run_estimate(args: &EstimateArgs) -> Result<()> {
    let dataset = load_dataset(&args.dataset, DatasetFormat::Jsonl)?;
    let graphs: Vec<Graph> = dataset.class_members(args.label).into_iter().cloned().collect();
    if graphs.is_empty() {
        return Err(Error::Validation(format!("no graph has label {}", args.label)));
    }
    let config = args.estimator.config(args.seed)?;
    save_graphon(&estimate(&graphs, &config)?, &args.out)
}

fn run_sample(args: &SampleArgs) -> Result<()> {
    use rand::Rng as _;
    let graphon: StepGraphonF64 = load_graphon(&args.graphon)?;
    let sizes: Vec<usize> = match (&args.nodes, &args.nodes_from) {
        (Some(n), _) => vec![*n],
        (None, Some(path)) => load_dataset(path, DatasetFormat::Jsonl)?
            .graphs()
            .iter()
            .map(Graph::node_count)
            .collect(),
        (None, None) => unreachable!("clap requires one of --nodes and --nodes-from"),
    };
    if sizes.is_empty() {
        return Err(Error::Validation("--nodes-from dataset is empty".into()));
    }
    let graphs = (0..args.count)
        .map(|j| {
            let seed = derive_seed(args.seed, &[j as u64]);
            let n = sizes[rng_from_seed(seed).gen_range(0..sizes.len())];
            Ok(sample_graph(&graphon, n, derive_seed(seed, &[1]))?
                .with_id(format!("sample-{j}"))
                .with_label(args.label))
        })
        .collect::<Result<Vec<_>>>()?;
    save_dataset(&GraphDataset::new(graphs)?, &args.out)
}

fn run_augment(args: &AugmentArgs) -> Result<()> {
    let train = load_dataset(&args.train, DatasetFormat::Jsonl)?;
    let plan = AugmentationPlan::new(args.rate, args.estimator.config(args.seed)?, args.seed);
    let (augmented, graphons) = augment_dataset(&train, &plan)?;
    create_dir(&args.out_dir)?;
    save_dataset(&augmented, args.out_dir.join("augmented.jsonl"))?;
    for (label, graphon) in &graphons {
        save_graphon(graphon, args.out_dir.join(format!("class-{label}.gmx")))?;
    }
    Ok(())
}

fn run_distance(args: &DistanceArgs) -> Result<()> {
    let a: StepGraphonF64 = load_graphon(&args.a)?;
    let b: StepGraphonF64 = load_graphon(&args.b)?;
    let order = if args.order == 1 { GwOrder::One } else { GwOrder::Two };
    let value = graphon_distance(&a, &b, &args.gw.params(order, args.seed))?;
    println!("{value:.6}");
    Ok(())
}

fn run_evaluate(args: &EvaluateArgs) -> Result<()> {
    let config = ExperimentConfig::load(&args.config)?;
    let base = args.config.parent().unwrap_or(Path::new("."));
    let report = run_experiment(&config, base)?;
    write_file(&args.out, report.to_csv()?)
}

fn run_heatmap(args: &HeatmapArgs) -> Result<()> {
    let graphon: StepGraphonF64 = load_graphon(&args.graphon)?;
    graphon_heatmap(&graphon, &args.out)
}

fn run_benchmark(args: &BenchmarkArgs) -> Result<()> {
    let spec: BenchmarkSpec = serde_json::from_str(&read_file(&args.spec)?)
        .map_err(|e| Error::Config(format!("benchmark spec: {e}")))?;
    let (dataset, truths) = synthetic_benchmark(&spec, args.seed)?;
    create_dir(&args.out_dir)?;
    save_dataset(&dataset, args.out_dir.join("dataset.jsonl"))?;
    for (c, truth) in truths.iter().enumerate() {
        save_graphon(truth, args.out_dir.join(format!("truth-class-{c}.gmx")))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Estimate(a) => run_estimate(a),
        Command::Sample(a) => run_sample(a),
        Command::Augment(a) => run_augment(a),
        Command::Distance(a) => run_distance(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::Heatmap(a) => run_heatmap(a),
        Command::Benchmark(a) => run_benchmark(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.to_string();
            let message: Vec<&str> = rendered
                .lines()
                .take_while(|l| !l.trim().is_empty())
                .map(str::trim)
                .collect();
            eprintln!("{}", message.join(" "));
            return ExitCode::from(1);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
