//! Command-line interface: topology generation, training, evaluation,
//! phase comparison, throughput benchmarking, and the two-spin demo.
//!
//! Every run resolves its full configuration into a manifest JSON under the
//! output directory; `train --from-manifest` replays a manifest and
//! reproduces its outputs bit-for-bit.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::dataset::{
    binarize_all, idx, on_probabilities, subsample, synthetic, EncodedExample,
};
use crate::meanfield::{hmft_solve, nmft_correlations, nmft_solve, MftConfig};
use crate::metrics::{
    self, classify_all, correlation_histogram, exact_moments, log_likelihood,
    relative_error, InferenceConfig, Method,
};
use crate::sampler::{
    benchmark_fps, run_chain, BenchMode, BenchParallelism, ChainParams, MomentEstimates,
    SparseIsingModel, SpinState,
};
use crate::topology::{generate_sparse_dbm_with_labels, load_topology, Topology};
use crate::training::{
    self, init_model, load_checkpoint, train, write_checkpoint, Checkpoint, LearningRate,
    TrainConfig, TrainHooks,
};

/// Exit codes: 0 success, 2 usage, 3 data/format, 4 numerical.
const EXIT_DATA: i32 = 3;
const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Data(_) => EXIT_DATA,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn data_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

impl From<crate::topology::TopologyError> for CliError {
    fn from(e: crate::topology::TopologyError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<crate::training::TrainError> for CliError {
    fn from(e: crate::training::TrainError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<crate::sampler::ModelError> for CliError {
    fn from(e: crate::sampler::ModelError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<crate::metrics::MetricsError> for CliError {
    fn from(e: crate::metrics::MetricsError) -> Self {
        match e {
            metrics::MetricsError::ZeroReference => CliError::Numerical(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<crate::dataset::DatasetError> for CliError {
    fn from(e: crate::dataset::DatasetError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "spinforge",
    version,
    about = "Sparse deep Boltzmann machine engine: chromatic Gibbs sampling, mean-field solvers, contrastive-divergence training"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a random layered sparse topology file
    Gen(GenArgs),
    /// Train a sparse deep Boltzmann machine
    Train(Box<TrainArgs>),
    /// Evaluate a checkpoint: accuracy and log-likelihood
    Eval(EvalArgs),
    /// Compare mean-field and Gibbs moments in both CD phases
    ComparePhases(CompareArgs),
    /// Measure sampler throughput in flips per second
    Bench(BenchArgs),
    /// Two-spin demo: exact vs NMFT vs HMFT vs Gibbs correlations
    Toy(ToyArgs),
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// Run directory for manifests, logs and other outputs
    #[arg(long, default_value = "spinforge-out", env = "SPINFORGE_OUT_DIR")]
    out_dir: PathBuf,
    /// Worker threads (0 = all cores)
    #[arg(long, default_value_t = 0, env = "SPINFORGE_THREADS")]
    threads: usize,
    /// Master random seed
    #[arg(long, default_value_t = 0, env = "SPINFORGE_SEED")]
    seed: u64,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Total visible nodes (pixels plus label bits)
    #[arg(long, default_value_t = 834)]
    visible: usize,
    /// Hidden layer sizes, comma-separated
    #[arg(long, value_delimiter = ',', default_values_t = vec![863, 863])]
    hidden: Vec<usize>,
    /// Degree cap per node
    #[arg(long, default_value_t = 15)]
    max_degree: usize,
    /// Label replica sets (10 label nodes each)
    #[arg(long, default_value_t = 5)]
    label_replicas: usize,
    /// Output topology file
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct DataArgs {
    /// IDX image file
    #[arg(long, requires = "labels", conflicts_with = "synthetic")]
    images: Option<PathBuf>,
    /// IDX label file
    #[arg(long, requires = "images")]
    labels: Option<PathBuf>,
    /// Generate a deterministic synthetic corpus of this many examples
    #[arg(long)]
    synthetic: Option<usize>,
    /// Extra synthetic examples reserved as a test split
    #[arg(long, default_value_t = 0)]
    synthetic_test: usize,
    /// Synthetic pixel-flip noise rate
    #[arg(long, default_value_t = 0.02)]
    synthetic_noise: f64,
    /// Corpus seed; fixed separately from --seed so training and later
    /// evaluations see the same examples
    #[arg(long, default_value_t = 0)]
    synthetic_seed: u64,
    /// IDX test image file
    #[arg(long, requires = "test_labels")]
    test_images: Option<PathBuf>,
    /// IDX test label file
    #[arg(long, requires = "test_images")]
    test_labels: Option<PathBuf>,
    /// Binarization threshold: +1 iff intensity > threshold
    #[arg(long, default_value_t = 127)]
    threshold: u8,
    /// Restrict training to a random subsample of this size
    #[arg(long)]
    subsample: Option<usize>,
    /// Draw the subsample class-balanced (count / 10 per digit)
    #[arg(long, default_value_t = false)]
    balanced: bool,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Topology file
    #[arg(long, required_unless_present = "from_manifest")]
    topology: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    /// Positive-phase estimator
    #[arg(long, default_value = "gibbs")]
    positive: Method,
    /// Negative-phase sweeps per batch
    #[arg(long, default_value_t = 100_000)]
    neg_sweeps: u64,
    /// Positive-phase sweeps per item (Gibbs mode)
    #[arg(long, default_value_t = 10_000)]
    pos_sweeps: u64,
    #[arg(long, default_value_t = 50)]
    batch_size: usize,
    /// Batches per epoch (0 = as many as the dataset allows)
    #[arg(long, default_value_t = 0)]
    batches_per_epoch: usize,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    /// Learning rate (start value if --lr-end is given)
    #[arg(long, default_value_t = 0.003)]
    lr: f64,
    /// Final learning rate for a log-linear schedule
    #[arg(long)]
    lr_end: Option<f64>,
    #[arg(long, default_value_t = 0.6)]
    momentum: f64,
    /// Mean-field convergence tolerance
    #[arg(long, default_value_t = 1e-2)]
    mft_tol: f64,
    /// Mean-field damping factor
    #[arg(long, default_value_t = 0.5)]
    mft_lambda: f64,
    #[arg(long, default_value_t = 1000)]
    mft_max_iter: usize,
    /// Persistent negative chains
    #[arg(long, default_value_t = 1)]
    chains: usize,
    /// Evaluate accuracy every N epochs (0 = never)
    #[arg(long, default_value_t = 0)]
    eval_every: usize,
    /// Inference sweeps for evaluation
    #[arg(long, default_value_t = 2000)]
    eval_sweeps: u64,
    /// Stop once train accuracy reaches this value
    #[arg(long)]
    stop_at_accuracy: Option<f64>,
    /// Write a checkpoint every N epochs (0 = only the final one)
    #[arg(long, default_value_t = 0)]
    checkpoint_every: usize,
    /// Replay a previous run's manifest verbatim
    #[arg(long)]
    from_manifest: Option<PathBuf>,
    /// Print a progress line on each evaluation epoch
    #[arg(long, default_value_t = false)]
    quiet: bool,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    topology: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Inference method
    #[arg(long, default_value = "gibbs")]
    method: Method,
    /// Inference sweeps per example (Gibbs)
    #[arg(long, default_value_t = 2000)]
    sweeps: u64,
    #[arg(long, default_value_t = 1e-2)]
    mft_tol: f64,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    topology: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Images per positive-phase batch
    #[arg(long, default_value_t = 10)]
    batch_size: usize,
    /// Gibbs reference sweeps in each phase
    #[arg(long, default_value_t = 10_000)]
    sweeps: u64,
    /// Histogram bins
    #[arg(long, default_value_t = 20)]
    bins: usize,
    #[arg(long, default_value_t = 1e-2)]
    mft_tol: f64,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    topology: PathBuf,
    /// Thread counts to measure, comma-separated
    #[arg(long, value_delimiter = ',', default_values_t = vec![1, 2, 4])]
    threads_list: Vec<usize>,
    /// Wall-clock seconds per measurement
    #[arg(long, default_value_t = 2.0, conflicts_with = "sweeps")]
    duration: f64,
    /// Fixed sweep count instead of a wall-clock budget
    #[arg(long)]
    sweeps: Option<u64>,
    /// Thread budget use: `chains` (one chain per thread) or `sweep`
    /// (threads split each color class of a single chain)
    #[arg(long, default_value = "chains")]
    mode: String,
}

#[derive(Args, Debug)]
struct ToyArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Gibbs sweeps for the sampled estimate
    #[arg(long, default_value_t = 1_000_000)]
    sweeps: u64,
}

/// Fully resolved run description written next to every run's outputs.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub seed: u64,
    pub threads: usize,
    pub topology_hash: Option<String>,
    pub artifacts: Vec<String>,
    pub params: serde_json::Value,
}

fn write_manifest(out_dir: &Path, manifest: &RunManifest) -> CliResult<PathBuf> {
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(manifest)?)?;
    Ok(path)
}

/// Resolved dataset description; everything needed to rebuild the examples.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct DataSpec {
    source: DataSource,
    threshold: u8,
    subsample: Option<usize>,
    balanced: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum DataSource {
    Idx {
        images: PathBuf,
        labels: PathBuf,
        test_images: Option<PathBuf>,
        test_labels: Option<PathBuf>,
    },
    Synthetic {
        count: usize,
        test_count: usize,
        seed: u64,
        noise: f64,
    },
}

impl DataSpec {
    fn from_args(args: &DataArgs) -> CliResult<Self> {
        let source = match (&args.images, &args.labels, args.synthetic) {
            (Some(images), Some(labels), None) => DataSource::Idx {
                images: images.clone(),
                labels: labels.clone(),
                test_images: args.test_images.clone(),
                test_labels: args.test_labels.clone(),
            },
            (None, None, Some(count)) => DataSource::Synthetic {
                count,
                test_count: args.synthetic_test,
                seed: args.synthetic_seed,
                noise: args.synthetic_noise,
            },
            _ => {
                return Err(CliError::Data(
                    "provide either --images/--labels or --synthetic N".into(),
                ))
            }
        };
        Ok(DataSpec {
            source,
            threshold: args.threshold,
            subsample: args.subsample,
            balanced: args.balanced,
        })
    }

    /// Loads (train, test) examples encoded against the topology's label
    /// replica count.
    fn load(
        &self,
        topology: &Topology,
        seed: u64,
    ) -> CliResult<(Vec<EncodedExample>, Vec<EncodedExample>)> {
        let replicas = topology.label_replicas();
        let (raw_train, raw_test) = match &self.source {
            DataSource::Idx {
                images,
                labels,
                test_images,
                test_labels,
            } => {
                let open = |p: &PathBuf| -> CliResult<BufReader<File>> {
                    Ok(BufReader::new(File::open(p).map_err(|e| {
                        CliError::Data(format!("{}: {e}", p.display()))
                    })?))
                };
                let train = idx::load_idx(open(images)?, open(labels)?).map_err(data_err)?;
                let test = match (test_images, test_labels) {
                    (Some(ti), Some(tl)) => idx::load_idx(open(ti)?, open(tl)?).map_err(data_err)?,
                    _ => Vec::new(),
                };
                (train, test)
            }
            DataSource::Synthetic {
                count,
                test_count,
                seed,
                noise,
            } => {
                let config = synthetic::SyntheticConfig {
                    seed: *seed,
                    noise: *noise,
                };
                let all = synthetic::synthetic_raw(count + test_count, &config);
                let test = all[*count..].to_vec();
                let train = {
                    let mut t = all;
                    t.truncate(*count);
                    t
                };
                (train, test)
            }
        };
        let mut train = binarize_all(&raw_train, self.threshold, replicas);
        let test = binarize_all(&raw_test, self.threshold, replicas);
        if let Some(count) = self.subsample {
            train = subsample(&train, count, seed, self.balanced)?;
        }
        for ex in train.iter().chain(&test) {
            if ex.pixel_spins.len() != topology.pixel_count() {
                return Err(CliError::Data(format!(
                    "example has {} pixels, topology expects {}",
                    ex.pixel_spins.len(),
                    topology.pixel_count()
                )));
            }
        }
        Ok((train, test))
    }
}

fn read_topology(path: &Path) -> CliResult<Arc<Topology>> {
    let file = File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(Arc::new(load_topology(BufReader::new(file))?))
}

fn load_model(checkpoint: &Path, topology: &Path) -> CliResult<(SparseIsingModel, Checkpoint)> {
    let topology = read_topology(topology)?;
    let checkpoint = load_checkpoint(checkpoint)?;
    let model = checkpoint.into_model(topology)?;
    Ok((model, checkpoint))
}

fn thread_pool(threads: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Data(e.to_string()))
}

pub fn run() -> i32 {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Train(args) => cmd_train(*args),
        Command::Eval(args) => cmd_eval(args),
        Command::ComparePhases(args) => cmd_compare_phases(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Toy(args) => cmd_toy(args),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn cmd_gen(args: GenArgs) -> CliResult<()> {
    let topology = generate_sparse_dbm_with_labels(
        args.visible,
        args.label_replicas,
        &args.hidden,
        args.max_degree,
        args.common.seed,
    )?;
    if let Some(parent) = args.output.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    topology.save(BufWriter::new(File::create(&args.output)?))?;
    println!(
        "nodes={} edges={} max_degree={} colors={} density={:.5} hash={}",
        topology.node_count(),
        topology.edge_count(),
        topology.max_degree(),
        topology.color_count(),
        topology.density(),
        topology.hash()
    );
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        command: "gen".into(),
        seed: args.common.seed,
        threads: args.common.threads,
        topology_hash: Some(topology.hash()),
        artifacts: vec![args.output.display().to_string()],
        params: serde_json::json!({
            "visible": args.visible,
            "hidden": args.hidden,
            "max_degree": args.max_degree,
            "label_replicas": args.label_replicas,
        }),
    };
    write_manifest(&args.common.out_dir, &manifest)?;
    Ok(())
}

/// Everything `train` needs, fully resolved; serialized into the manifest
/// and consumed verbatim by `--from-manifest`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrainRunSpec {
    topology: PathBuf,
    data: DataSpec,
    config: TrainConfig,
    eval_every: usize,
    eval_sweeps: u64,
    stop_at_accuracy: Option<f64>,
    checkpoint_every: usize,
}

fn train_spec_from_args(args: &TrainArgs) -> CliResult<TrainRunSpec> {
    let topology_path = args
        .topology
        .clone()
        .expect("clap enforces --topology unless --from-manifest");
    let data = DataSpec::from_args(&args.data)?;
    let learning_rate = match args.lr_end {
        Some(end) => LearningRate::LogLinear {
            start: args.lr,
            end,
        },
        None => LearningRate::Constant(args.lr),
    };
    let config = TrainConfig {
        positive_method: args.positive,
        negative_sweeps: args.neg_sweeps,
        positive_sweeps: args.pos_sweeps,
        batch_size: args.batch_size,
        batches_per_epoch: args.batches_per_epoch,
        epochs: args.epochs,
        learning_rate,
        momentum: args.momentum,
        mft: MftConfig {
            damping: args.mft_lambda,
            tolerance: args.mft_tol,
            max_iterations: args.mft_max_iter,
            ..MftConfig::default()
        },
        negative_chains: args.chains,
        seed: args.common.seed,
    };
    Ok(TrainRunSpec {
        topology: topology_path,
        data,
        config,
        eval_every: args.eval_every,
        eval_sweeps: args.eval_sweeps,
        stop_at_accuracy: args.stop_at_accuracy,
        checkpoint_every: args.checkpoint_every,
    })
}

fn cmd_train(args: TrainArgs) -> CliResult<()> {
    let spec: TrainRunSpec = match &args.from_manifest {
        Some(path) => {
            let manifest: RunManifest = serde_json::from_str(&fs::read_to_string(path)?)?;
            if manifest.command != "train" {
                return Err(CliError::Data(format!(
                    "manifest describes `{}`, not `train`",
                    manifest.command
                )));
            }
            serde_json::from_value(manifest.params)?
        }
        None => train_spec_from_args(&args)?,
    };
    let pool = thread_pool(args.common.threads)?;
    pool.install(|| run_train(&spec, &args.common, !args.quiet))
}

fn run_train(spec: &TrainRunSpec, common: &CommonArgs, verbose: bool) -> CliResult<()> {
    let out_dir = &common.out_dir;
    fs::create_dir_all(out_dir)?;
    let topology = read_topology(&spec.topology)?;
    let (train_examples, test_examples) = spec.data.load(&topology, spec.config.seed)?;
    if train_examples.is_empty() {
        return Err(CliError::Data("no training examples".into()));
    }

    let mut config = spec.config;
    if config.batches_per_epoch == 0 {
        config.batches_per_epoch = (train_examples.len() / config.batch_size).max(1);
    }

    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        command: "train".into(),
        seed: config.seed,
        threads: common.threads,
        topology_hash: Some(topology.hash()),
        artifacts: vec![
            out_dir.join("checkpoint-final.json").display().to_string(),
            out_dir.join("training-log.csv").display().to_string(),
        ],
        params: serde_json::to_value(TrainRunSpec {
            config,
            ..spec.clone()
        })?,
    };
    write_manifest(out_dir, &manifest)?;

    let stats = on_probabilities(&train_examples);
    let model = init_model(topology.clone(), &stats, config.seed)?;

    let hooks = TrainHooks {
        eval_every: spec.eval_every,
        eval_inference: Some(InferenceConfig {
            method: config.positive_method,
            gibbs_sweeps: spec.eval_sweeps,
            mft: config.mft,
            seed: 0,
        }),
        test_examples,
        stop_at_train_accuracy: spec.stop_at_accuracy,
        checkpoint_every: spec.checkpoint_every,
        checkpoint_dir: Some(out_dir.clone()),
        verbose,
    };
    let result = train(model, &train_examples, config, &hooks)?;

    let final_path = out_dir.join("checkpoint-final.json");
    write_checkpoint(&final_path, &Checkpoint::from_state(&result.state))?;

    let mut log = BufWriter::new(File::create(out_dir.join("training-log.csv"))?);
    writeln!(log, "epoch,learning_rate,train_accuracy,test_accuracy")?;
    for entry in &result.log {
        writeln!(
            log,
            "{},{},{},{}",
            entry.epoch,
            entry.learning_rate,
            entry.train_accuracy.map_or(String::new(), |a| a.to_string()),
            entry.test_accuracy.map_or(String::new(), |a| a.to_string()),
        )?;
    }
    log.flush()?;

    let trained_epochs = result.state.epoch();
    let last_acc = result
        .log
        .iter()
        .rev()
        .find_map(|e| e.train_accuracy)
        .map_or("-".into(), |a| format!("{a:.4}"));
    println!(
        "trained epochs={trained_epochs} final_train_accuracy={last_acc} checkpoint={}",
        final_path.display()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> CliResult<()> {
    let pool = thread_pool(args.common.threads)?;
    pool.install(|| {
        let (model, checkpoint) = load_model(&args.checkpoint, &args.topology)?;
        let data = DataSpec::from_args(&args.data)?;
        let (train_examples, test_examples) = data.load(model.topology(), args.common.seed)?;
        let inference = InferenceConfig {
            method: args.method,
            gibbs_sweeps: args.sweeps,
            mft: MftConfig {
                tolerance: args.mft_tol,
                ..MftConfig::default()
            },
            seed: args.common.seed,
        };

        let mut report = String::new();
        for (split, examples) in [("train", &train_examples), ("test", &test_examples)] {
            if examples.is_empty() {
                continue;
            }
            let predictions = classify_all(&model, examples, &inference);
            let digits: Vec<u8> = examples.iter().map(|e| e.digit).collect();
            let correct = predictions
                .iter()
                .zip(&digits)
                .filter(|(p, &d)| p.predicted_digit == d)
                .count();
            let acc = correct as f64 / examples.len() as f64;
            let ll = log_likelihood(&predictions, &digits);
            report.push_str(&format!(
                "{split}_examples={} {split}_accuracy={acc:.4} {split}_log_likelihood={ll:.4}\n",
                examples.len()
            ));
        }
        print!("{report}");

        fs::create_dir_all(&args.common.out_dir)?;
        fs::write(args.common.out_dir.join("eval.txt"), &report)?;
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command: "eval".into(),
            seed: args.common.seed,
            threads: args.common.threads,
            topology_hash: Some(checkpoint.topology_hash.clone()),
            artifacts: vec![args.common.out_dir.join("eval.txt").display().to_string()],
            params: serde_json::json!({
                "checkpoint": args.checkpoint,
                "epoch": checkpoint.epoch,
                "method": args.method.to_string(),
                "sweeps": args.sweeps,
                "data": data,
            }),
        };
        write_manifest(&args.common.out_dir, &manifest)?;
        Ok(())
    })
}

/// Batch-mean positive-phase moments for one estimation method.
fn positive_moments(
    model: &SparseIsingModel,
    batch: &[&EncodedExample],
    method: Method,
    sweeps: u64,
    mft: &MftConfig,
    seed: u64,
) -> MomentEstimates {
    use rayon::prelude::*;
    let per_item: Vec<MomentEstimates> = batch
        .par_iter()
        .enumerate()
        .map(|(item, example)| {
            let item_seed = crate::sampler::rng::derive_seed(seed, item as u64);
            let clamps = training::clamps_for_example(model.topology(), example);
            match method {
                Method::Gibbs => {
                    let mut state = SpinState::random(model.topology().node_count(), item_seed);
                    for (v, c) in clamps.iter().enumerate() {
                        if let Some(s) = c {
                            state.clamp(v, *s);
                        }
                    }
                    run_chain(model, &mut state, ChainParams::fresh(sweeps))
                }
                Method::Nmft => {
                    let solution = nmft_solve(model, &clamps, mft, item_seed);
                    nmft_correlations(&solution, model.topology())
                }
                Method::Hmft => hmft_solve(model, &clamps, mft, item_seed).moments,
            }
        })
        .collect();
    MomentEstimates::mean_of(&per_item)
}

/// Unclamped (negative-phase) moments for one estimation method.
fn negative_moments(
    model: &SparseIsingModel,
    method: Method,
    sweeps: u64,
    mft: &MftConfig,
    seed: u64,
) -> MomentEstimates {
    let n = model.topology().node_count();
    let clamps = vec![None; n];
    match method {
        Method::Gibbs => {
            let mut state = SpinState::random(n, seed);
            run_chain(model, &mut state, ChainParams::fresh(sweeps))
        }
        Method::Nmft => {
            let solution = nmft_solve(model, &clamps, mft, seed);
            nmft_correlations(&solution, model.topology())
        }
        Method::Hmft => hmft_solve(model, &clamps, mft, seed).moments,
    }
}

fn cmd_compare_phases(args: CompareArgs) -> CliResult<()> {
    let pool = thread_pool(args.common.threads)?;
    pool.install(|| {
        let (model, checkpoint) = load_model(&args.checkpoint, &args.topology)?;
        let data = DataSpec::from_args(&args.data)?;
        let (train_examples, _) = data.load(model.topology(), args.common.seed)?;
        if train_examples.len() < args.batch_size {
            return Err(CliError::Data(format!(
                "need at least {} examples, have {}",
                args.batch_size,
                train_examples.len()
            )));
        }
        let batch: Vec<&EncodedExample> = train_examples[..args.batch_size].iter().collect();
        let mft = MftConfig {
            tolerance: args.mft_tol,
            ..MftConfig::default()
        };
        let seed = args.common.seed;

        let pos_ref = positive_moments(&model, &batch, Method::Gibbs, args.sweeps, &mft, seed);
        let neg_ref = negative_moments(&model, Method::Gibbs, args.sweeps, &mft, seed);

        let out_dir = &args.common.out_dir;
        fs::create_dir_all(out_dir)?;
        let mut table = String::from("phase,method,averages_error,correlations_error\n");
        let mut artifacts = Vec::new();
        for method in [Method::Nmft, Method::Hmft] {
            let pos = positive_moments(&model, &batch, method, args.sweeps, &mft, seed);
            let neg = negative_moments(&model, method, args.sweeps, &mft, seed);
            for (phase, estimate, reference) in
                [("positive", &pos, &pos_ref), ("negative", &neg, &neg_ref)]
            {
                let err = relative_error(estimate, reference)?;
                table.push_str(&format!(
                    "{phase},{method},{:.6},{:.6}\n",
                    err.averages, err.correlations
                ));
                let histogram =
                    correlation_histogram(estimate, reference, model.topology(), args.bins);
                let pairs_path = out_dir.join(format!("{phase}-{method}-pairs.csv"));
                let hist_path = out_dir.join(format!("{phase}-{method}-histogram.csv"));
                histogram.write_pairs_csv(BufWriter::new(File::create(&pairs_path)?))?;
                histogram.write_histogram_csv(BufWriter::new(File::create(&hist_path)?))?;
                artifacts.push(pairs_path.display().to_string());
                artifacts.push(hist_path.display().to_string());
            }
        }
        print!("{table}");
        let table_path = out_dir.join("phase-errors.csv");
        fs::write(&table_path, &table)?;
        artifacts.push(table_path.display().to_string());

        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command: "compare-phases".into(),
            seed,
            threads: args.common.threads,
            topology_hash: Some(checkpoint.topology_hash.clone()),
            artifacts,
            params: serde_json::json!({
                "checkpoint": args.checkpoint,
                "epoch": checkpoint.epoch,
                "batch_size": args.batch_size,
                "sweeps": args.sweeps,
                "bins": args.bins,
            }),
        };
        write_manifest(out_dir, &manifest)?;
        Ok(())
    })
}

fn cmd_bench(args: BenchArgs) -> CliResult<()> {
    let topology = read_topology(&args.topology)?;
    // Representative weights: same scale the trainer starts from.
    let stats = vec![0.5; topology.visible_count()];
    let model = init_model(topology, &stats, args.common.seed)?;
    let mode = match args.sweeps {
        Some(sweeps) => BenchMode::FixedSweeps(sweeps),
        None => BenchMode::WallClock(Duration::from_secs_f64(args.duration)),
    };
    let parallelism = match args.mode.as_str() {
        "chains" => BenchParallelism::IndependentChains,
        "sweep" => BenchParallelism::WithinSweep,
        other => {
            return Err(CliError::Data(format!(
                "unknown bench mode `{other}` (expected chains or sweep)"
            )))
        }
    };
    let report = benchmark_fps(&model, args.common.seed, &args.threads_list, mode, parallelism);
    print!("{report}");
    fs::create_dir_all(&args.common.out_dir)?;
    let report_path = args.common.out_dir.join("bench.txt");
    fs::write(&report_path, report.to_string())?;
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        command: "bench".into(),
        seed: args.common.seed,
        threads: args.common.threads,
        topology_hash: Some(model.topology().hash()),
        artifacts: vec![report_path.display().to_string()],
        params: serde_json::json!({
            "threads_list": args.threads_list,
            "duration": args.duration,
            "sweeps": args.sweeps,
            "mode": args.mode,
        }),
    };
    write_manifest(&args.common.out_dir, &manifest)?;
    Ok(())
}

fn cmd_toy(args: ToyArgs) -> CliResult<()> {
    use crate::topology::NodeRole;
    let topology = Arc::new(
        Topology::from_parts(vec![NodeRole::Hidden { layer: 0 }; 2], vec![(0, 1)])
            .expect("two-node topology"),
    );
    let model = SparseIsingModel::new(topology.clone(), vec![-1.0], vec![0.0; 2], args.beta)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    let clamps = vec![None; 2];
    let config = MftConfig::default();

    let exact = exact_moments(&model)?;
    let nmft = {
        let solution = nmft_solve(&model, &clamps, &config, args.common.seed);
        nmft_correlations(&solution, &topology)
    };
    let hmft = hmft_solve(&model, &clamps, &config, args.common.seed);
    let gibbs = {
        let mut state = SpinState::random(2, args.common.seed);
        run_chain(&model, &mut state, ChainParams::new(args.sweeps))
    };

    println!("two-spin antiferromagnet: W = -1, h = 0, beta = {}", args.beta);
    println!("exact correlation: {:+.6}", exact.correlations()[0]);
    println!("nmft  correlation: {:+.6}", nmft.correlations()[0]);
    println!("hmft  correlation: {:+.6}", hmft.moments.correlations()[0]);
    println!(
        "gibbs correlation: {:+.6}  ({} sweeps)",
        gibbs.correlations()[0],
        args.sweeps
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn method_rejects_unknown_names() {
        let err = "magic".parse::<Method>().unwrap_err();
        assert!(err.contains("gibbs"));
        assert!(err.contains("hmft"));
    }

    #[test]
    fn data_spec_requires_a_source() {
        let args = DataArgs {
            images: None,
            labels: None,
            synthetic: None,
            synthetic_test: 0,
            synthetic_noise: 0.02,
            synthetic_seed: 0,
            test_images: None,
            test_labels: None,
            threshold: 127,
            subsample: None,
            balanced: false,
        };
        assert!(DataSpec::from_args(&args).is_err());
    }
}
