//! The `conpack` command line.
//!
//! Every subcommand writes its outputs into the `--output` directory together
//! with `config.json`, an echo of the arguments that produced them. Feeding
//! that file to `conpack replay` re-runs the command and reproduces the same
//! bytes. The echo leaves out `--output` and `--threads`, since neither
//! affects what is written.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::balance::{self, BalanceReport, WeightMode};
use crate::concepts::{self, ConceptAssignment, ConceptVocabulary};
use crate::error::{Error, Result};
use crate::manifest::{self, LengthDistribution, SynthConfig};
use crate::packing::{self, PackingConfig, PackingStats, Strategy};
use crate::rng::GENERATOR_NAME;

pub const CONFIG_ECHO: &str = "config.json";

#[derive(Debug, Parser)]
#[command(name = "conpack", version, about = "Concept-balanced sampling and offline sequence packing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Default)]
pub struct Common {
    /// Output directory (created if missing).
    #[arg(long)]
    pub output: PathBuf,
    /// Worker threads; 0 uses all cores. Never changes output bytes.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Command {
    /// Generate a synthetic manifest and concept assignments.
    Synth(SynthArgs),
    /// Assign top-K concepts to image embeddings.
    Assign(AssignArgs),
    /// Compute inverse-frequency sample weights.
    Weigh(WeighArgs),
    /// Draw a weighted subset of sample indices.
    Sample(SampleArgs),
    /// Pack a manifest into fixed-capacity sequences.
    Pack(PackArgs),
    /// Recompute statistics for an existing plan.
    Stats(StatsArgs),
    /// Report concept entropy, Gini, and coverage.
    Coverage(CoverageArgs),
    /// Run synth, assign, weigh, sample, pack, and report in one go.
    Pipeline(PipelineArgs),
    /// Re-run a command from its config echo.
    #[serde(skip)]
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CorpusArgs {
    /// Zipf exponent of the concept marginal.
    #[arg(long = "zipf", default_value_t = 1.5)]
    pub zipf: f64,
    #[arg(long = "vocab-size", default_value_t = 1000)]
    pub vocab_size: usize,
    /// Concepts per sample.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Log-normal location of sample lengths (default ln 700).
    #[arg(long = "length-mu", default_value_t = 700f64.ln())]
    pub length_mu: f64,
    #[arg(long = "length-sigma", default_value_t = 0.35)]
    pub length_sigma: f64,
    #[arg(long = "length-min", default_value_t = 32)]
    pub length_min: u32,
    #[arg(long = "length-max", default_value_t = 8192)]
    pub length_max: u32,
    /// Source mixture entry `tag=probability`; repeat for each source.
    #[arg(long = "source", value_parser = parse_source)]
    pub sources: Vec<(String, f64)>,
    /// Also write synthetic embeddings of this dimension (0 = none).
    #[arg(long = "embed-dim", default_value_t = 0)]
    pub embed_dim: usize,
    /// Per-coordinate noise added to synthetic image embeddings.
    #[arg(long = "embed-noise", default_value_t = 0.05)]
    pub embed_noise: f64,
}

fn parse_source(s: &str) -> std::result::Result<(String, f64), String> {
    let (tag, p) = s
        .split_once('=')
        .ok_or_else(|| format!("expected tag=probability, got {s:?}"))?;
    let p: f64 = p.parse().map_err(|_| format!("bad probability in {s:?}"))?;
    Ok((tag.to_string(), p))
}

impl CorpusArgs {
    fn synth_config(&self, n_samples: usize, seed: u64) -> SynthConfig {
        let sources = if self.sources.is_empty() {
            SynthConfig::default().sources
        } else {
            self.sources.iter().cloned().collect::<BTreeMap<_, _>>()
        };
        SynthConfig {
            n_samples,
            zipf_exponent: self.zipf,
            vocab_size: self.vocab_size,
            k: self.k,
            length: LengthDistribution {
                mu: self.length_mu,
                sigma: self.length_sigma,
                min: self.length_min,
                max: self.length_max,
            },
            sources,
            seed,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
    /// Number of samples to generate.
    #[arg(long, default_value_t = 100_000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub corpus: CorpusArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct AssignArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
    /// Image embeddings (EMB1 binary).
    #[arg(long)]
    pub input: PathBuf,
    /// Concept names, `index<TAB>name` per line.
    #[arg(long)]
    pub vocab: PathBuf,
    /// Concept embeddings (EMB1 binary), rows in index order.
    #[arg(long = "vocab-embeddings")]
    pub vocab_embeddings: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Also write pseudo-captions.
    #[arg(long)]
    pub captions: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct WeighArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
    /// Assignments JSONL.
    #[arg(long)]
    pub input: PathBuf,
    /// Vocabulary size; defaults to the largest concept index + 1.
    #[arg(long = "vocab-size")]
    pub vocab_size: Option<usize>,
    #[arg(long, value_enum, default_value_t = WeightModeArg::Mean)]
    pub mode: WeightModeArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum WeightModeArg {
    Mean,
    Sum,
}

impl From<WeightModeArg> for WeightMode {
    fn from(m: WeightModeArg) -> Self {
        match m {
            WeightModeArg::Mean => WeightMode::Mean,
            WeightModeArg::Sum => WeightMode::Sum,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SampleArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
    /// Weights JSONL.
    #[arg(long)]
    pub input: PathBuf,
    /// Number of indices to draw.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Draw with replacement.
    #[arg(long)]
    pub replacement: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PackingArgs {
    #[arg(long, default_value_t = packing::DEFAULT_CAPACITY)]
    pub capacity: u32,
    #[arg(long, value_enum, default_value_t = Strategy::Bucket)]
    pub strategy: Strategy,
    #[arg(long, default_value_t = packing::DEFAULT_NUM_BUCKETS)]
    pub buckets: u32,
    #[arg(long = "min-utilization", default_value_t = packing::DEFAULT_MIN_UTILIZATION)]
    pub min_utilization: f64,
    #[arg(long = "max-samples-per-pack")]
    pub max_samples_per_pack: Option<usize>,
    #[arg(long = "max-sources-per-pack")]
    pub max_sources_per_pack: Option<usize>,
    /// Hash shards packed independently.
    #[arg(long, default_value_t = packing::DEFAULT_SHARDS)]
    pub shards: usize,
}

impl PackingArgs {
    fn config(&self, seed: u64) -> PackingConfig {
        PackingConfig {
            capacity: self.capacity,
            strategy: self.strategy,
            num_buckets: self.buckets,
            max_samples_per_pack: self.max_samples_per_pack,
            min_utilization: self.min_utilization,
            max_sources_per_pack: self.max_sources_per_pack,
            shards: self.shards,
            seed,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PackArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
    /// Manifest JSONL (full records or `{"id","source","length"}`).
    #[arg(long)]
    pub input: PathBuf,
    /// Restrict packing to the indices listed in a sample file.
    #[arg(long)]
    pub subset: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub packing: PackingArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct StatsArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
    /// Plan JSONL.
    #[arg(long)]
    pub input: PathBuf,
    /// Success threshold; defaults to the one recorded in the plan.
    #[arg(long = "min-utilization")]
    pub min_utilization: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CoverageArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
    /// Assignments JSONL.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long = "vocab-size")]
    pub vocab_size: Option<usize>,
    /// Only count the samples listed in this sample file.
    #[arg(long)]
    pub subset: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PipelineArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
    /// Synthetic corpus size.
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    /// Balanced subset size; defaults to 10% of the corpus.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub replacement: bool,
    #[arg(long, value_enum, default_value_t = WeightModeArg::Mean)]
    pub mode: WeightModeArg,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub packing: PackingArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    #[command(flatten)]
    pub common: Common,
    /// A `config.json` written by an earlier run.
    #[arg(long)]
    pub config: PathBuf,
}

/// Failure surfaced to the user as a JSON object on stderr.
#[derive(Debug, Serialize)]
pub struct CliError {
    pub stage: String,
    pub kind: String,
    pub message: String,
}

impl CliError {
    fn new(stage: &str, err: Error) -> Self {
        CliError {
            stage: stage.to_string(),
            kind: err.kind().to_string(),
            message: err.to_string(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}

#[derive(Serialize, Deserialize)]
struct ConfigEcho {
    tool: String,
    version: String,
    rng: String,
    #[serde(flatten)]
    command: Command,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Assign(_) => "assign",
            Command::Weigh(_) => "weigh",
            Command::Sample(_) => "sample",
            Command::Pack(_) => "pack",
            Command::Stats(_) => "stats",
            Command::Coverage(_) => "coverage",
            Command::Pipeline(_) => "pipeline",
            Command::Replay(_) => "replay",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Synth(a) => &a.common,
            Command::Assign(a) => &a.common,
            Command::Weigh(a) => &a.common,
            Command::Sample(a) => &a.common,
            Command::Pack(a) => &a.common,
            Command::Stats(a) => &a.common,
            Command::Coverage(a) => &a.common,
            Command::Pipeline(a) => &a.common,
            Command::Replay(a) => &a.common,
        }
    }

    fn common_mut(&mut self) -> &mut Common {
        match self {
            Command::Synth(a) => &mut a.common,
            Command::Assign(a) => &mut a.common,
            Command::Weigh(a) => &mut a.common,
            Command::Sample(a) => &mut a.common,
            Command::Pack(a) => &mut a.common,
            Command::Stats(a) => &mut a.common,
            Command::Coverage(a) => &mut a.common,
            Command::Pipeline(a) => &mut a.common,
            Command::Replay(a) => &mut a.common,
        }
    }
}

/// Run one command on a thread pool of the requested size.
pub fn run(command: Command) -> std::result::Result<(), CliError> {
    let threads = command.common().threads;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::new(command.name(), Error::Config(e.to_string())))?;
    pool.install(|| dispatch(command))
}

fn dispatch(command: Command) -> std::result::Result<(), CliError> {
    let stage = command.name();
    let wrap = |e: Error| CliError::new(stage, e);
    match &command {
        Command::Replay(args) => {
            let text = fs::read_to_string(&args.config)
                .map_err(|e| wrap(Error::io(&args.config, e)))?;
            let echo: ConfigEcho = serde_json::from_str(&text).map_err(|e| {
                wrap(Error::Parse {
                    line: e.line(),
                    message: e.to_string(),
                })
            })?;
            let mut replayed = echo.command;
            *replayed.common_mut() = args.common.clone();
            return dispatch(replayed);
        }
        Command::Pipeline(args) => return cmd_pipeline(args, &command),
        _ => {}
    }
    let out = &command.common().output;
    fs::create_dir_all(out).map_err(|e| wrap(Error::io(out, e)))?;
    match &command {
        Command::Synth(a) => cmd_synth(a),
        Command::Assign(a) => cmd_assign(a),
        Command::Weigh(a) => cmd_weigh(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Pack(a) => cmd_pack(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Coverage(a) => cmd_coverage(a),
        Command::Pipeline(_) | Command::Replay(_) => unreachable!(),
    }
    .and_then(|()| write_echo(out, &command))
    .map_err(wrap)
}

fn write_echo(dir: &Path, command: &Command) -> Result<()> {
    let echo = ConfigEcho {
        tool: "conpack".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        rng: GENERATOR_NAME.into(),
        command: command.clone(),
    };
    write_json(&dir.join(CONFIG_ECHO), &echo)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(std::io::Error::from)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn infer_vocab_size(assignments: &[ConceptAssignment], given: Option<usize>) -> Result<usize> {
    match given {
        Some(m) => Ok(m),
        None => assignments
            .iter()
            .flat_map(|a| a.indices())
            .max()
            .map(|m| m + 1)
            .ok_or(Error::Empty("assignments")),
    }
}

fn select<'a>(assignments: &'a [ConceptAssignment], subset: &[usize]) -> Result<Vec<&'a ConceptAssignment>> {
    subset
        .iter()
        .map(|&i| {
            assignments.get(i).ok_or_else(|| {
                Error::Config(format!("subset index {i} exceeds corpus of {}", assignments.len()))
            })
        })
        .collect()
}

fn write_synth_outputs(
    dir: &Path,
    cfg: &SynthConfig,
    corpus_args: &CorpusArgs,
) -> Result<manifest::SynthCorpus> {
    let corpus = manifest::synth_corpus(cfg)?;
    manifest::save_manifest(dir.join("manifest.jsonl"), &corpus.records)?;
    concepts::save_assignments(dir.join("assignments.jsonl"), &corpus.assignments)?;
    write_json(&dir.join("synth_config.json"), cfg)?;
    if corpus_args.embed_dim > 0 && !corpus.assignments.is_empty() {
        let e = manifest::synth_embeddings(
            &corpus.assignments,
            cfg.vocab_size,
            corpus_args.embed_dim,
            corpus_args.embed_noise,
            cfg.seed,
        )?;
        concepts::save_embeddings(dir.join("images.emb"), &e.images)?;
        concepts::save_embeddings(dir.join("concepts.emb"), &e.concepts)?;
        concepts::write_vocab_tsv(create(&dir.join("vocab.tsv"))?, &e.names)?;
    }
    Ok(corpus)
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let cfg = args.corpus.synth_config(args.n, args.seed);
    let corpus = write_synth_outputs(&args.common.output, &cfg, &args.corpus)?;
    println!(
        "synth: {} samples, {} concepts, k={} -> {}",
        corpus.records.len(),
        cfg.vocab_size,
        cfg.k,
        args.common.output.display()
    );
    Ok(())
}

pub fn cmd_assign(args: &AssignArgs) -> Result<()> {
    let images = concepts::load_embeddings(&args.input)?;
    let vocab = ConceptVocabulary::load(&args.vocab, &args.vocab_embeddings)?;
    let assignments = concepts::topk_concepts(&images, &vocab, args.k)?;
    let out = &args.common.output;
    concepts::save_assignments(out.join("assignments.jsonl"), &assignments)?;
    if args.captions {
        let mut w = create(&out.join("captions.jsonl"))?;
        for a in &assignments {
            let caption = concepts::build_pseudo_caption(a, &vocab)?;
            serde_json::to_writer(&mut w, &serde_json::json!({ "i": a.sample_index(), "caption": caption }))
                .map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    println!("assign: {} images, top-{} of {} concepts", images.rows(), args.k, vocab.size());
    Ok(())
}

pub fn cmd_weigh(args: &WeighArgs) -> Result<()> {
    let assignments = concepts::load_assignments(&args.input)?;
    let m = infer_vocab_size(&assignments, args.vocab_size)?;
    let freqs = balance::concept_frequencies(&assignments, m)?;
    let weights = balance::image_weights(&assignments, &freqs, args.mode.into())?;
    balance::save_weights(args.common.output.join("weights.jsonl"), &weights)?;
    println!("weigh: {} samples over {m} concepts", weights.len());
    Ok(())
}

pub fn cmd_sample(args: &SampleArgs) -> Result<()> {
    let weights = balance::load_weights(&args.input)?;
    let picked = balance::sample_balanced(&weights, args.n, args.seed, args.replacement)?;
    let w = create(&args.common.output.join("sample.txt"))?;
    balance::write_subset(w, &picked, args.seed, args.replacement)?;
    println!("sample: drew {} of {}", picked.len(), weights.len());
    Ok(())
}

#[derive(Serialize)]
struct StatsFile<'a> {
    stats: &'a PackingStats,
    config: Option<&'a PackingConfig>,
    seed: Option<u64>,
}

pub fn cmd_pack(args: &PackArgs) -> Result<()> {
    let mut items = manifest::load_pack_items(&args.input)?;
    if let Some(subset) = &args.subset {
        let idx = balance::load_subset(subset)?;
        items = idx
            .iter()
            .map(|&i| {
                items.get(i).cloned().ok_or_else(|| {
                    Error::Config(format!("subset index {i} exceeds manifest of {}", items.len()))
                })
            })
            .collect::<Result<_>>()?;
    }
    let cfg = args.packing.config(args.seed);
    let plan = packing::pack(&items, &cfg)?;
    let stats = packing::packing_stats(&plan, cfg.min_utilization);
    let out = &args.common.output;
    packing::save_plan(out.join("plan.jsonl"), &plan, cfg.min_utilization)?;
    write_json(
        &out.join("stats.json"),
        &StatsFile {
            stats: &stats,
            config: Some(&cfg),
            seed: Some(args.seed),
        },
    )?;
    print_pack_summary(&stats);
    Ok(())
}

fn print_pack_summary(s: &PackingStats) {
    let f = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    println!(
        "pack: {} samples -> {} packs (ratio {}, utilization {}, success {}), {} overflow",
        s.num_samples,
        s.num_packs,
        f(s.compression_ratio),
        f(s.utilization),
        f(s.success_rate),
        s.overflow_count
    );
}

pub fn cmd_stats(args: &StatsArgs) -> Result<()> {
    let (plan, recorded) = packing::load_plan_with_stats(&args.input)?;
    let u = args.min_utilization.unwrap_or(recorded.min_utilization);
    let stats = packing::packing_stats(&plan, u);
    write_json(
        &args.common.output.join("stats.json"),
        &StatsFile {
            stats: &stats,
            config: None,
            seed: None,
        },
    )?;
    print_pack_summary(&stats);
    Ok(())
}

pub fn cmd_coverage(args: &CoverageArgs) -> Result<()> {
    let assignments = concepts::load_assignments(&args.input)?;
    let m = infer_vocab_size(&assignments, args.vocab_size)?;
    let report = match &args.subset {
        Some(path) => {
            let idx = balance::load_subset(path)?;
            balance::balance_report(select(&assignments, &idx)?, m)?
        }
        None => balance::balance_report(&assignments, m)?,
    };
    write_report(&args.common.output, "report", &report)?;
    println!(
        "coverage: entropy {:.4} bits, gini {:.4}, coverage {:.4}",
        report.entropy_bits, report.gini, report.coverage
    );
    Ok(())
}

fn write_report(dir: &Path, stem: &str, report: &BalanceReport) -> Result<()> {
    write_json(&dir.join(format!("{stem}.json")), report)?;
    balance::write_sorted_counts_csv(create(&dir.join(format!("{stem}_sorted_counts.csv")))?, report)
}

/// Combined output of the one-shot pipeline.
#[derive(Debug, Serialize, Deserialize)]
pub struct PipelineReport {
    pub seed: u64,
    pub rng: String,
    pub num_samples: usize,
    pub subset_size: usize,
    pub replacement: bool,
    /// "embedding" when concepts were re-assigned from synthetic embeddings,
    /// "synthetic" when the generated assignments were used directly.
    pub assign_route: String,
    pub corpus: BalanceReport,
    /// Uniform random subset of the same size.
    pub unbalanced: BalanceReport,
    pub balanced: BalanceReport,
    pub entropy_gain_bits: f64,
    pub coverage_gain: f64,
    pub packing: PackingStats,
}

fn at(stage: &'static str) -> impl Fn(Error) -> CliError {
    move |e| CliError::new(stage, e)
}

pub fn cmd_pipeline(args: &PipelineArgs, command: &Command) -> std::result::Result<(), CliError> {
    let n = args.n.unwrap_or(args.samples / 10);
    if n == 0 {
        return Err(CliError::new(
            "validate",
            Error::Config("--n must be at least 1".into()),
        ));
    }
    if !args.replacement && n > args.samples {
        return Err(CliError::new(
            "validate",
            Error::SampleBound {
                requested: n,
                available: args.samples,
            },
        ));
    }
    let synth_cfg = args.corpus.synth_config(args.samples, args.seed);
    synth_cfg.validate().map_err(at("validate"))?;
    let pack_cfg = args.packing.config(args.seed);
    pack_cfg.validate().map_err(at("validate"))?;

    let out = &args.common.output;
    fs::create_dir_all(out).map_err(|e| CliError::new("validate", Error::io(out, e)))?;

    let corpus = write_synth_outputs(out, &synth_cfg, &args.corpus).map_err(at("synth"))?;
    println!("pipeline: synthesized {} samples", corpus.records.len());

    let m = synth_cfg.vocab_size;
    let (assignments, route) = if args.corpus.embed_dim > 0 {
        let images = concepts::load_embeddings(out.join("images.emb")).map_err(at("assign"))?;
        let vocab = ConceptVocabulary::load(out.join("vocab.tsv"), out.join("concepts.emb"))
            .map_err(at("assign"))?;
        let a = concepts::topk_concepts(&images, &vocab, synth_cfg.k).map_err(at("assign"))?;
        concepts::save_assignments(out.join("assigned.jsonl"), &a).map_err(at("assign"))?;
        println!("pipeline: assigned top-{} concepts from embeddings", synth_cfg.k);
        (a, "embedding")
    } else {
        (corpus.assignments, "synthetic")
    };

    let freqs = balance::concept_frequencies(&assignments, m).map_err(at("weigh"))?;
    let weights =
        balance::image_weights(&assignments, &freqs, args.mode.into()).map_err(at("weigh"))?;
    balance::save_weights(out.join("weights.jsonl"), &weights).map_err(at("weigh"))?;

    let balanced = balance::sample_balanced(&weights, n, args.seed, args.replacement)
        .map_err(at("sample"))?;
    let uniform = balance::sample_balanced(
        &balance::ImageWeightVector::uniform(assignments.len()).map_err(at("sample"))?,
        n,
        args.seed,
        args.replacement,
    )
    .map_err(at("sample"))?;
    let subset_file = create(&out.join("sample.txt")).map_err(at("sample"))?;
    balance::write_subset(subset_file, &balanced, args.seed, args.replacement)
        .map_err(at("sample"))?;
    println!("pipeline: drew {n} balanced samples");

    let mut seen = std::collections::HashSet::new();
    let all_items = manifest::to_pack_items(&corpus.records).map_err(at("pack"))?;
    let items: Vec<_> = balanced
        .iter()
        .filter(|&&i| seen.insert(i))
        .map(|&i| all_items[i].clone())
        .collect();
    let plan = packing::pack(&items, &pack_cfg).map_err(at("pack"))?;
    let pstats = packing::packing_stats(&plan, pack_cfg.min_utilization);
    packing::save_plan(out.join("plan.jsonl"), &plan, pack_cfg.min_utilization)
        .map_err(at("pack"))?;
    print_pack_summary(&pstats);

    let corpus_report = balance::balance_report(&assignments, m).map_err(at("report"))?;
    let unbalanced =
        balance::balance_report(select(&assignments, &uniform).map_err(at("report"))?, m)
            .map_err(at("report"))?;
    let balanced_report =
        balance::balance_report(select(&assignments, &balanced).map_err(at("report"))?, m)
            .map_err(at("report"))?;
    let report = PipelineReport {
        seed: args.seed,
        rng: GENERATOR_NAME.into(),
        num_samples: assignments.len(),
        subset_size: n,
        replacement: args.replacement,
        assign_route: route.into(),
        entropy_gain_bits: balanced_report.entropy_bits - unbalanced.entropy_bits,
        coverage_gain: balanced_report.coverage - unbalanced.coverage,
        corpus: corpus_report,
        unbalanced,
        balanced: balanced_report,
        packing: pstats,
    };
    write_json(&out.join("report.json"), &report).map_err(at("report"))?;
    write_echo(out, command).map_err(at("report"))?;
    println!(
        "pipeline: entropy {:.4} -> {:.4} bits, coverage {:.4} -> {:.4}",
        report.unbalanced.entropy_bits,
        report.balanced.entropy_bits,
        report.unbalanced.coverage,
        report.balanced.coverage
    );
    Ok(())
}
