//! `hypercca` command-line tool.
//!
//! Exit codes: 0 on success, 1 on a runtime failure, 2 on a usage error or
//! unreadable input. Log verbosity comes from `HYPERCCA_LOG` (env_logger
//! syntax, default `warn`).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

use hypercca::encoder::embed;
use hypercca::eval::{
    cluster_quality, linear_probe, read_embeddings_csv, write_embeddings_csv, EvalReport, ProbeConfig, SplitSpec,
};
use hypercca::membership::build_index;
use hypercca::objectives::sample_membership_batch;
use hypercca::rng::{stream, Purpose};
use hypercca::trainer::Checkpoint;
use hypercca::{load_hypergraph, train, DatasetFormat, Error, Hypergraph, TrainConfig};

#[derive(Parser)]
#[command(name = "hypercca", version, about = "Self-supervised hypergraph node embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    /// Single JSON document.
    Json,
    /// Directory with features.csv, hyperedges.txt and labels.csv.
    TwoFile,
}

#[derive(clap::Args)]
struct DataArgs {
    /// Dataset path: a JSON file or a two-file directory.
    #[arg(long)]
    data: PathBuf,
    /// Dataset layout; detected from the path when omitted.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Task {
    Classify,
    Cluster,
}

#[derive(Subcommand)]
enum Command {
    /// Train an encoder and print the training report as JSON.
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// JSON file with any subset of the training configuration fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_checkpoint: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Override one configuration field, e.g. `--set lambda2=0`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Write node and hyperedge embeddings as CSV.
    Embed {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Output directory; receives nodes.csv and hyperedges.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score node embeddings against the dataset labels.
    Evaluate {
        /// Node embedding CSV written by `embed`.
        #[arg(long)]
        embeddings: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum)]
        task: Task,
        #[arg(long, default_value_t = 20)]
        repeats: usize,
        /// k-means runs.
        #[arg(long, default_value_t = 5)]
        runs: usize,
        /// Cluster count; defaults to the number of classes.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print k-hop membership sets.
    Hops {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long = "K", default_value_t = 1)]
        hops: usize,
        /// Restrict output to one node.
        #[arg(long)]
        node: Option<usize>,
    },
    /// Count discriminator evaluations of one membership-loss pass.
    Bench {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long = "K", default_value_t = 1)]
        hops: usize,
        #[arg(long, default_value_t = 10)]
        d: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// An error tagged with its exit code.
struct Failure {
    code: u8,
    error: Error,
}

fn usage(error: Error) -> Failure {
    Failure { code: 2, error }
}

fn runtime(error: Error) -> Failure {
    Failure { code: 1, error }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn load(args: &DataArgs) -> CliResult<Hypergraph> {
    let format = match args.format {
        Some(Format::Json) => DatasetFormat::Json,
        Some(Format::TwoFile) => DatasetFormat::TwoFile,
        None => DatasetFormat::detect(&args.data),
    };
    load_hypergraph(&args.data, format).map_err(usage)
}

fn print_json<T: Serialize>(value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| runtime(Error::Parse(e.to_string())))?;
    writeln!(std::io::stdout(), "{text}").map_err(|e| {
        runtime(Error::Io {
            path: PathBuf::from("<stdout>"),
            source: e,
        })
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| runtime(Error::Parse(e.to_string())))?;
    std::fs::write(path, text).map_err(|e| {
        runtime(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn build_config(
    file: Option<&Path>,
    seed: Option<u64>,
    epochs: Option<usize>,
    overrides: &[String],
) -> CliResult<TrainConfig> {
    let base = match file {
        Some(p) => TrainConfig::load(p).map_err(usage)?,
        None => TrainConfig::default(),
    };
    let mut doc = serde_json::to_value(&base).expect("config serializes");
    let fields = doc.as_object_mut().expect("config is an object");
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| usage(Error::Parse(format!("--set expects KEY=VALUE, got {item:?}"))))?;
        if !fields.contains_key(key) {
            return Err(usage(Error::Parse(format!("unknown config field {key:?}"))));
        }
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        fields.insert(key.to_string(), value);
    }
    if let Some(s) = seed {
        fields.insert("seed".into(), s.into());
    }
    if let Some(e) = epochs {
        fields.insert("epochs".into(), e.into());
    }
    let cfg: TrainConfig = serde_json::from_value(doc).map_err(|e| usage(Error::Parse(format!("config: {e}"))))?;
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn cmd_train(data: &DataArgs, cfg: TrainConfig, out: Option<&Path>) -> CliResult<()> {
    let h = load(data)?;
    let outcome = train(&h, &cfg).map_err(runtime)?;
    let mut report = outcome.report;
    if let Some(path) = out {
        outcome.checkpoint.save(path).map_err(runtime)?;
        report.checkpoint = Some(path.display().to_string());
    }
    print_json(&report)
}

fn cmd_embed(checkpoint: &Path, data: &DataArgs, out: &Path) -> CliResult<()> {
    let ck = Checkpoint::load(checkpoint).map_err(usage)?;
    let h = load(data)?;
    ck.check_shapes(h.num_features(), None).map_err(runtime)?;
    let emb = embed(&h, &ck.encoder).map_err(runtime)?;
    std::fs::create_dir_all(out).map_err(|e| {
        runtime(Error::Io {
            path: out.to_path_buf(),
            source: e,
        })
    })?;
    write_embeddings_csv(&out.join("nodes.csv"), &emb.nodes).map_err(runtime)?;
    write_embeddings_csv(&out.join("hyperedges.csv"), &emb.hyperedges).map_err(runtime)?;
    log::info!(
        "wrote {} node and {} hyperedge rows",
        emb.nodes.rows(),
        emb.hyperedges.rows()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_evaluate(
    embeddings: &Path,
    data: &DataArgs,
    task: Task,
    repeats: usize,
    runs: usize,
    k: Option<usize>,
    seed: u64,
    out: Option<&Path>,
) -> CliResult<()> {
    let z = read_embeddings_csv(embeddings).map_err(usage)?;
    let h = load(data)?;
    let labels = h.labels();
    let classes = h.num_classes().ok_or_else(|| runtime(Error::MissingLabels))?;
    let mut report = EvalReport::default();
    match task {
        Task::Classify => {
            let spec = SplitSpec {
                repeats,
                seed,
                ..Default::default()
            };
            report.classification =
                Some(linear_probe(&z, labels, classes, &spec, &ProbeConfig::default()).map_err(runtime)?);
        }
        Task::Cluster => {
            report.clustering = Some(cluster_quality(&z, labels, k.unwrap_or(classes), runs, seed).map_err(runtime)?);
        }
    }
    if let Some(path) = out {
        write_json(path, &report)?;
    }
    print_json(&report)
}

#[derive(Serialize)]
struct NodeSets {
    node: usize,
    sets: BTreeMap<usize, Vec<usize>>,
}

#[derive(Serialize)]
struct HopsReport {
    hops: usize,
    nodes: Vec<NodeSets>,
}

fn cmd_hops(data: &DataArgs, hops: usize, node: Option<usize>) -> CliResult<()> {
    let h = load(data)?;
    if let Some(v) = node {
        if v >= h.num_nodes() {
            return Err(usage(Error::NodeOutOfRange {
                id: v,
                num_nodes: h.num_nodes(),
            }));
        }
    }
    let index = build_index(&h, hops).map_err(usage)?;
    let nodes = match node {
        Some(v) => vec![v],
        None => (0..h.num_nodes()).collect(),
    };
    print_json(&HopsReport {
        hops,
        nodes: nodes
            .into_iter()
            .map(|v| NodeSets {
                node: v,
                sets: index.sets_of(v),
            })
            .collect(),
    })
}

#[derive(Serialize)]
struct BenchReport {
    num_nodes: usize,
    num_hyperedges: usize,
    hops: usize,
    samples: usize,
    discriminator_calls: usize,
    bound: usize,
    all_pairs: usize,
    active_terms: usize,
    skipped_terms: usize,
    index_build_secs: f64,
}

fn cmd_bench(data: &DataArgs, hops: usize, d: usize, seed: u64) -> CliResult<()> {
    let h = load(data)?;
    if d == 0 {
        return Err(usage(Error::InvalidArgument("--d must be >= 1".into())));
    }
    let clock = Instant::now();
    let index = build_index(&h, hops).map_err(usage)?;
    let index_build_secs = clock.elapsed().as_secs_f64();
    let batch =
        sample_membership_batch(&index, d, false, &mut stream(seed, Purpose::Membership, 0)).map_err(runtime)?;
    let report = BenchReport {
        num_nodes: h.num_nodes(),
        num_hyperedges: h.num_hyperedges(),
        hops,
        samples: d,
        discriminator_calls: batch.discriminator_calls(),
        bound: h.num_nodes() * hops * 2 * d,
        all_pairs: h.num_nodes() * h.num_hyperedges(),
        active_terms: batch.active_terms(),
        skipped_terms: batch.skipped_terms,
        index_build_secs,
    };
    if report.discriminator_calls > report.bound {
        return Err(runtime(Error::InvalidArgument(format!(
            "{} discriminator calls exceed the bound {}",
            report.discriminator_calls, report.bound
        ))));
    }
    print_json(&report)
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train {
            data,
            config,
            out_checkpoint,
            seed,
            epochs,
            overrides,
        } => {
            let cfg = build_config(config.as_deref(), seed, epochs, &overrides)?;
            cmd_train(&data, cfg, out_checkpoint.as_deref())
        }
        Command::Embed { checkpoint, data, out } => cmd_embed(&checkpoint, &data, &out),
        Command::Evaluate {
            embeddings,
            data,
            task,
            repeats,
            runs,
            k,
            seed,
            out,
        } => cmd_evaluate(&embeddings, &data, task, repeats, runs, k, seed, out.as_deref()),
        Command::Hops { data, hops, node } => cmd_hops(&data, hops, node),
        Command::Bench { data, hops, d, seed } => cmd_bench(&data, hops, d, seed),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HYPERCCA_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.error);
            ExitCode::from(f.code)
        }
    }
}
