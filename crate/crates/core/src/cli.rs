//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on domain errors (parse, integrity, undefined
//! metric), 2 on usage errors.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::dataset::{
    drop_nei, exclude_subsets, load_canonical, load_pairs, verify_split, write_pairs,
    AdapterManifest, DatasetFormat, DatasetSplit, SourcePair,
};
use crate::kb::{
    kb_stats, load_descriptions, load_kb, DescriptionStore, KnowledgeBase, LoadOptions,
};
use crate::mask::MaskOptions;
use crate::metrics::{
    category_ablation, correlate, evaluate_classification, join_scores, read_predictions,
    ClassificationReport, CorrelationRow, PValueMethod, ScoreSource, ALL_GROUP, UNTAGGED_GROUP,
};
use crate::pipeline::{emit_corpus, CorpusSummary, EmitOptions};
use crate::synth::{
    DeadEndPolicy, DocumentSource, EntityWiki, Evidence, KnowledgeWalk, Strategy, SynthConfig,
};

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "KBFACT_WORKERS";

#[derive(Debug, Parser)]
#[command(
    name = "kbfact",
    version,
    about = "Knowledge-base factuality pretraining corpora and factuality evaluation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print knowledge-base statistics as one JSON object.
    Stats {
        /// Tab-separated triples file.
        #[arg(long)]
        kb: PathBuf,
        /// Materialize reverse edges with relation surface "inverse <relation>".
        #[arg(long)]
        add_inverse: bool,
    },
    /// Generate a masked pretraining corpus.
    Synth {
        #[command(subcommand)]
        strategy: SynthCommand,
    },
    /// Prepare and check factuality datasets.
    Dataset {
        #[command(subcommand)]
        command: DatasetCommand,
    },
    /// Score classifier predictions.
    Eval {
        #[command(subcommand)]
        command: EvalCommand,
    },
}

#[derive(Debug, Subcommand)]
pub enum SynthCommand {
    /// One document per entity listing its one-hop facts.
    EntityWiki(SynthArgs),
    /// Sampled triples with the object masked, followed by the subject description.
    Evidence(SynthArgs),
    /// Verbalized K-hop random walks.
    Walk(SynthArgs),
}

impl SynthCommand {
    fn parts(&self) -> (Strategy, &SynthArgs) {
        match self {
            SynthCommand::EntityWiki(a) => (Strategy::EntityWiki, a),
            SynthCommand::Evidence(a) => (Strategy::Evidence, a),
            SynthCommand::Walk(a) => (Strategy::KnowledgeWalk, a),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DeadEndArg {
    Truncate,
    Resample,
}

impl From<DeadEndArg> for DeadEndPolicy {
    fn from(v: DeadEndArg) -> Self {
        match v {
            DeadEndArg::Truncate => DeadEndPolicy::Truncate,
            DeadEndArg::Resample => DeadEndPolicy::Resample,
        }
    }
}

fn parse_probability(s: &str) -> Result<f64, String> {
    let p: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(format!("{p} is outside [0, 1]"))
    }
}

/// Synthesis flags. Unset flags fall back to the config file, then to defaults.
#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Config file of `key = value` lines using the flag names below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Tab-separated triples file.
    #[arg(long)]
    pub kb: Option<PathBuf>,
    /// `entity<TAB>paragraph` file (evidence only).
    #[arg(long)]
    pub descriptions: Option<PathBuf>,
    /// Output corpus file; metadata goes to `<out>.meta.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Documents to generate (evidence, walk) [default: 100000].
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: Option<u64>,
    /// Walk length in hops [default: 5].
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: Option<u64>,
    /// Per-unit masking probability [default: 0.15].
    #[arg(long, value_parser = parse_probability)]
    pub mask_prob: Option<f64>,
    /// Master seed; when absent one is drawn from OS entropy and recorded.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Entity-wiki unit cap per document [default: 480].
    #[arg(long, value_parser = clap::value_parser!(u64).range(3..))]
    pub max_units: Option<u64>,
    /// What a walk does at an entity without out-edges [default: resample].
    #[arg(long, value_enum)]
    pub dead_end: Option<DeadEndArg>,
    /// Restarts allowed per walk under `resample` or `--no-revisit` [default: 8].
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_walk_attempts: Option<u64>,
    /// Sample evidence triples without replacement.
    #[arg(long)]
    pub no_replacement: bool,
    /// Reject walks that revisit an entity.
    #[arg(long)]
    pub no_revisit: bool,
    /// Allow documents with no mask when the mask probability is positive.
    #[arg(long)]
    pub allow_unmasked: bool,
    /// On evidence documents, mask only the object slot.
    #[arg(long)]
    pub evidence_forced_only: bool,
    /// Materialize reverse edges with relation surface "inverse <relation>".
    #[arg(long)]
    pub add_inverse: bool,
    /// Worker threads; output does not depend on it [default: $KBFACT_WORKERS or 1].
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub workers: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Convert a source dataset into canonical pairs.
    Prepare {
        #[arg(long)]
        format: DatasetFormat,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// TOML adapter manifest replacing the built-in column mapping.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Remove NEI records and binarize support/refute labels.
        #[arg(long)]
        drop_nei: bool,
        /// Drop pairs with this subset tag (repeatable).
        #[arg(long)]
        exclude_subset: Vec<String>,
    },
    /// Check split sizes, id disjointness and label balance of canonical files.
    Verify {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Expected sizes as `train,dev,test`.
        #[arg(long, value_parser = parse_counts)]
        expected: Option<[usize; 3]>,
    },
    /// Print the built-in adapter manifest of a format.
    Manifest {
        #[arg(long)]
        format: DatasetFormat,
    },
}

fn parse_counts(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| format!("`{p}` is not a count"))
        })
        .collect::<Result<_, _>>()?;
    parts
        .try_into()
        .map_err(|_| "expected three comma-separated counts".to_owned())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GroupBy {
    Subset,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Balanced accuracy and micro F1 against canonical gold pairs.
    Classify {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, value_enum)]
        group_by: Option<GroupBy>,
    },
    /// Pearson and Spearman correlation with human scores.
    Correlate {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// Correlate binary predictions instead of factual-class probabilities.
        #[arg(long)]
        binary: bool,
        /// Report coefficient changes after removing each error category.
        #[arg(long)]
        ablation: bool,
        #[arg(long, value_enum)]
        group_by: Option<GroupBy>,
        /// Exact permutation p-values (n <= 9).
        #[arg(long)]
        exact_p: bool,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Domain(String),
}

type Outcome = Result<(), Failure>;

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::Domain(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Domain(format!("{}: {e}", path.display())))
}

/// Runs the CLI with explicit output streams; returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                2
            } else {
                let _ = write!(stdout, "{text}");
                0
            };
        }
    };
    let result = match cli.command {
        Command::Stats { kb, add_inverse } => cmd_stats(&kb, add_inverse, stdout),
        Command::Synth { strategy } => cmd_synth(&strategy, stdout, stderr),
        Command::Dataset { command } => cmd_dataset(command, stdout, stderr),
        Command::Eval { command } => cmd_eval(command, stdout, stderr),
    };
    match result {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            2
        }
        Err(Failure::Domain(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            1
        }
    }
}

fn load_kb_file(path: &Path, add_inverse: bool) -> Result<KnowledgeBase, Failure> {
    load_kb(open(path)?, LoadOptions { add_inverse })
        .map_err(|e| Failure::Domain(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Outcome {
    serde_json::to_writer_pretty(&mut *out, value).map_err(|e| Failure::Domain(e.to_string()))?;
    writeln!(out).map_err(|e| Failure::Domain(e.to_string()))
}

fn cmd_stats(kb: &Path, add_inverse: bool, stdout: &mut dyn Write) -> Outcome {
    let kb_data = load_kb_file(kb, add_inverse)?;
    let stats = kb_stats(&kb_data);
    serde_json::to_writer(&mut *stdout, &stats).map_err(|e| Failure::Domain(e.to_string()))?;
    writeln!(stdout).map_err(|e| Failure::Domain(e.to_string()))
}

/// Fully resolved synthesis settings, echoed into the corpus metadata.
/// Field names mirror the `synth` flags.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub kb: PathBuf,
    pub descriptions: Option<PathBuf>,
    pub out: PathBuf,
    pub n: usize,
    pub k: usize,
    pub mask_prob: f64,
    pub seed: u64,
    pub max_units: usize,
    pub dead_end: DeadEndPolicy,
    pub max_walk_attempts: usize,
    pub no_replacement: bool,
    pub no_revisit: bool,
    pub allow_unmasked: bool,
    pub evidence_forced_only: bool,
    pub add_inverse: bool,
    pub workers: usize,
}

/// Where the master seed came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedSource {
    Flag,
    Config,
    Entropy,
}

impl RunConfig {
    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            n: self.n,
            k: self.k,
            mask_prob: self.mask_prob,
            seed: self.seed,
            max_units_per_doc: self.max_units,
            dead_end_policy: self.dead_end,
            max_walk_attempts: self.max_walk_attempts,
            no_revisit: self.no_revisit,
            sample_with_replacement: !self.no_replacement,
        }
    }

    pub fn mask_options(&self) -> MaskOptions {
        MaskOptions {
            p: self.mask_prob,
            allow_unmasked: self.allow_unmasked,
            evidence_forced_only: self.evidence_forced_only,
        }
    }
}

/// Parses `key = value` lines; `#` starts a comment line.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, (usize, String)>, String> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(format!("line {line_no}: expected `key = value`"));
        };
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        let value = value
            .strip_prefix('"')
            .and_then(|v| v.strip_suffix('"'))
            .unwrap_or(value);
        if out
            .insert(key.clone(), (line_no, value.to_owned()))
            .is_some()
        {
            return Err(format!("line {line_no}: duplicate key `{key}`"));
        }
    }
    Ok(out)
}

const CONFIG_KEYS: [&str; 16] = [
    "kb",
    "descriptions",
    "out",
    "n",
    "k",
    "mask_prob",
    "seed",
    "max_units",
    "dead_end",
    "max_walk_attempts",
    "no_replacement",
    "no_revisit",
    "allow_unmasked",
    "evidence_forced_only",
    "add_inverse",
    "workers",
];

struct ConfigFile {
    path: PathBuf,
    entries: BTreeMap<String, (usize, String)>,
}

impl ConfigFile {
    fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Domain(format!("{}: {e}", path.display())))?;
        let entries = parse_config_file(&text)
            .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        for (key, (line, _)) in &entries {
            if !CONFIG_KEYS.contains(&key.as_str()) {
                return Err(Failure::Usage(format!(
                    "{}: line {line}: unknown key `{key}`",
                    path.display()
                )));
            }
        }
        Ok(ConfigFile {
            path: path.to_owned(),
            entries,
        })
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, Failure> {
        let Some((line, value)) = self.entries.get(key) else {
            return Ok(None);
        };
        value.parse().map(Some).map_err(|_| {
            Failure::Usage(format!(
                "{}: line {line}: invalid value `{value}` for `{key}`",
                self.path.display()
            ))
        })
    }
}

fn resolve<T: std::str::FromStr>(
    flag: Option<T>,
    config: Option<&ConfigFile>,
    key: &str,
) -> Result<Option<T>, Failure> {
    match flag {
        Some(v) => Ok(Some(v)),
        None => match config {
            Some(c) => c.get(key),
            None => Ok(None),
        },
    }
}

fn resolve_flag(flag: bool, config: Option<&ConfigFile>, key: &str) -> Result<bool, Failure> {
    Ok(flag || resolve::<bool>(None, config, key)?.unwrap_or(false))
}

/// Applies flag > config file > default precedence.
pub fn resolve_run_config(args: &SynthArgs) -> Result<(RunConfig, SeedSource), String> {
    resolve_inner(args).map_err(|f| match f {
        Failure::Usage(m) | Failure::Domain(m) => m,
    })
}

fn resolve_inner(args: &SynthArgs) -> Result<(RunConfig, SeedSource), Failure> {
    let config = args.config.as_deref().map(ConfigFile::load).transpose()?;
    let cfg = config.as_ref();
    let defaults = SynthConfig::default();

    let kb = resolve(args.kb.clone(), cfg, "kb")?
        .ok_or_else(|| Failure::Usage("--kb is required".into()))?;
    let out = resolve(args.out.clone(), cfg, "out")?
        .ok_or_else(|| Failure::Usage("--out is required".into()))?;
    let n = resolve(args.n, cfg, "n")?.unwrap_or(defaults.n as u64);
    let k = resolve(args.k, cfg, "k")?.unwrap_or(defaults.k as u64);
    let mask_prob = resolve(args.mask_prob, cfg, "mask_prob")?.unwrap_or(defaults.mask_prob);
    let max_units =
        resolve(args.max_units, cfg, "max_units")?.unwrap_or(defaults.max_units_per_doc as u64);
    let max_walk_attempts = resolve(args.max_walk_attempts, cfg, "max_walk_attempts")?
        .unwrap_or(defaults.max_walk_attempts as u64);
    let dead_end = match args.dead_end {
        Some(d) => d.into(),
        None => match cfg {
            Some(c) => c.get::<DeadEndPolicy>("dead_end")?,
            None => None,
        }
        .unwrap_or(defaults.dead_end_policy),
    };
    let workers = match resolve(args.workers, cfg, "workers")? {
        Some(w) => w,
        None => match std::env::var(WORKERS_ENV) {
            Ok(v) => v.trim().parse().map_err(|_| {
                Failure::Usage(format!("{WORKERS_ENV}=`{v}` is not a worker count"))
            })?,
            Err(_) => 1,
        },
    };

    let (seed, source) = match (
        args.seed,
        cfg.map(|c| c.get::<u64>("seed")).transpose()?.flatten(),
    ) {
        (Some(s), _) => (s, SeedSource::Flag),
        (None, Some(s)) => (s, SeedSource::Config),
        (None, None) => (rand::random::<u64>(), SeedSource::Entropy),
    };

    let run = RunConfig {
        kb,
        descriptions: resolve(args.descriptions.clone(), cfg, "descriptions")?,
        out,
        n: n as usize,
        k: k as usize,
        mask_prob,
        seed,
        max_units: max_units as usize,
        dead_end,
        max_walk_attempts: max_walk_attempts as usize,
        no_replacement: resolve_flag(args.no_replacement, cfg, "no_replacement")?,
        no_revisit: resolve_flag(args.no_revisit, cfg, "no_revisit")?,
        allow_unmasked: resolve_flag(args.allow_unmasked, cfg, "allow_unmasked")?,
        evidence_forced_only: resolve_flag(args.evidence_forced_only, cfg, "evidence_forced_only")?,
        add_inverse: resolve_flag(args.add_inverse, cfg, "add_inverse")?,
        workers: workers.max(1) as usize,
    };
    run.synth_config()
        .validate()
        .map_err(|e| Failure::Usage(e.to_string()))?;
    Ok((run, source))
}

#[derive(Serialize)]
struct CorpusMetadata<'a> {
    strategy: Strategy,
    config: &'a RunConfig,
    seed_source: SeedSource,
    kb: crate::kb::KbStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    eligible_triples: Option<usize>,
    corpus: CorpusSummary,
}

fn cmd_synth(command: &SynthCommand, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Outcome {
    let (strategy, args) = command.parts();
    let (run, seed_source) = resolve_inner(args)?;
    if seed_source == SeedSource::Entropy {
        let _ = writeln!(
            stderr,
            "kbfact: no seed given; using entropy seed {}",
            run.seed
        );
    }
    let kb = load_kb_file(&run.kb, run.add_inverse)?;
    let cfg = run.synth_config();

    let descriptions: DescriptionStore;
    let mut eligible = None;
    let source: Box<dyn DocumentSource + '_> = match strategy {
        Strategy::EntityWiki => {
            Box::new(EntityWiki::new(&kb, &cfg).map_err(|e| Failure::Usage(e.to_string()))?)
        }
        Strategy::Evidence => {
            let path = run
                .descriptions
                .as_deref()
                .ok_or_else(|| Failure::Usage("evidence synthesis needs --descriptions".into()))?;
            descriptions = load_descriptions(open(path)?, &kb)
                .map_err(|e| Failure::Domain(format!("{}: {e}", path.display())))?;
            if descriptions.skipped_unknown > 0 {
                let _ = writeln!(
                    stderr,
                    "kbfact: {}: skipped {} descriptions of entities not in the knowledge base",
                    path.display(),
                    descriptions.skipped_unknown
                );
            }
            let source = Evidence::new(&kb, &descriptions, &cfg)
                .map_err(|e| Failure::Usage(e.to_string()))?;
            if source.eligible_count() == 0 {
                let _ = writeln!(
                    stderr,
                    "kbfact: warning: no triple has a described subject; the corpus is empty"
                );
            }
            eligible = Some(source.eligible_count());
            Box::new(source)
        }
        Strategy::KnowledgeWalk => Box::new(
            KnowledgeWalk::new(&kb, &cfg)
                .map_err(|e| Failure::Domain(format!("{}: {e}", run.kb.display())))?,
        ),
    };

    let options = EmitOptions {
        mask: run.mask_options(),
        seed: run.seed,
        workers: run.workers,
    };
    let summary = emit_corpus(source.as_ref(), &options, create(&run.out)?)
        .map_err(|e| Failure::Domain(format!("{}: {e}", run.out.display())))?;

    let meta = CorpusMetadata {
        strategy,
        config: &run,
        seed_source,
        kb: kb_stats(&kb),
        eligible_triples: eligible,
        corpus: summary.clone(),
    };
    let meta_path = metadata_path(&run.out);
    let mut meta_file = create(&meta_path)?;
    write_json(&mut meta_file, &meta)?;
    meta_file
        .flush()
        .map_err(|e| Failure::Domain(format!("{}: {e}", meta_path.display())))?;

    let _ = writeln!(
        stdout,
        "wrote {} {} documents to {} (duplicate rate {:.4})",
        summary.documents,
        strategy,
        run.out.display(),
        summary.duplicate_rate
    );
    Ok(())
}

/// `<corpus>.meta.json`
pub fn metadata_path(corpus: &Path) -> PathBuf {
    let mut name = corpus.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

fn cmd_dataset(command: DatasetCommand, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Outcome {
    match command {
        DatasetCommand::Prepare {
            format,
            input,
            out,
            manifest,
            drop_nei: drop,
            exclude_subset,
        } => {
            let manifest = match manifest {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)
                        .map_err(|e| Failure::Domain(format!("{}: {e}", path.display())))?;
                    let m = AdapterManifest::from_toml_str(&text)
                        .map_err(|e| Failure::Domain(format!("{}: {e}", path.display())))?;
                    if m.format != format {
                        return Err(Failure::Usage(format!(
                            "{}: manifest is for `{}`, not `{format}`",
                            path.display(),
                            m.format
                        )));
                    }
                    m
                }
                None => AdapterManifest::builtin(format),
            };
            let raw = load_pairs(open(&input)?, &manifest)
                .map_err(|e| Failure::Domain(format!("{}: {e}", input.display())))?;
            let loaded = raw.len();
            let pairs = if drop {
                drop_nei(raw)
            } else {
                raw.into_iter()
                    .map(SourcePair::into_labeled)
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| Failure::Domain(format!("{}: {e}", input.display())))?
            };
            let after_nei = pairs.len();
            let pairs = exclude_subsets(pairs, &exclude_subset);
            let n = write_pairs(&pairs, create(&out)?)
                .map_err(|e| Failure::Domain(format!("{}: {e}", out.display())))?;
            let _ = writeln!(
                stderr,
                "kbfact: loaded {loaded}, dropped {} NEI, excluded {} by subset",
                loaded - after_nei,
                after_nei - n
            );
            let _ = writeln!(stdout, "wrote {n} pairs to {}", out.display());
            Ok(())
        }
        DatasetCommand::Verify {
            train,
            dev,
            test,
            expected,
        } => {
            let load = |p: &Path| {
                load_canonical(open(p)?)
                    .map_err(|e| Failure::Domain(format!("{}: {e}", p.display())))
            };
            let split = DatasetSplit {
                train: load(&train)?,
                dev: load(&dev)?,
                test: load(&test)?,
                expected_counts: expected,
            };
            let report = verify_split(&split);
            write_json(stdout, &report)?;
            if report.passed {
                Ok(())
            } else {
                let mut reasons = Vec::new();
                if !report.sizes_match {
                    reasons.push("split sizes differ from expected".to_owned());
                }
                if let Some(first) = report.overlapping_ids.first() {
                    reasons.push(format!(
                        "{} ids shared across splits (first: `{}` in {})",
                        report.overlapping_ids.len(),
                        first.id,
                        first.splits.join(", ")
                    ));
                }
                Err(Failure::Domain(reasons.join("; ")))
            }
        }
        DatasetCommand::Manifest { format } => {
            let _ = write!(
                stdout,
                "{}",
                AdapterManifest::builtin(format).to_toml_string()
            );
            Ok(())
        }
    }
}

fn classification_table(report: &ClassificationReport) -> String {
    let mut out = format!("{:<16} {:>8} {:>8} {:>8}\n", "group", "n", "BACC", "F1");
    for row in &report.rows {
        let bacc = row
            .bacc
            .map(|b| format!("{:.4}", b))
            .unwrap_or_else(|| "undef".into());
        let _ = writeln!(
            out,
            "{:<16} {:>8} {:>8} {:>8.4}",
            row.group, row.n, bacc, row.f1
        );
    }
    out
}

fn correlation_table(rows: &[CorrelationRow]) -> String {
    let mut out = format!(
        "{:<16} {:>6} {:>9} {:>10} {:>9} {:>10}\n",
        "group", "n", "pearson", "p", "spearman", "p"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<16} {:>6} {:>9.4} {:>10.3e} {:>9.4} {:>10.3e}",
            r.group,
            r.n,
            r.pearson.coefficient,
            r.pearson.p_value,
            r.spearman.coefficient,
            r.spearman.p_value
        );
    }
    out
}

#[derive(Serialize)]
struct CorrelationReport {
    score_source: ScoreSource,
    p_value_method: PValueMethod,
    rows: Vec<CorrelationRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ablation: Option<crate::metrics::AblationReport>,
}

fn cmd_eval(command: EvalCommand, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Outcome {
    let load_gold = |p: &Path| {
        load_canonical(open(p)?).map_err(|e| Failure::Domain(format!("{}: {e}", p.display())))
    };
    let load_pred = |p: &Path| {
        read_predictions(open(p)?).map_err(|e| Failure::Domain(format!("{}: {e}", p.display())))
    };
    match command {
        EvalCommand::Classify {
            gold,
            pred,
            group_by,
        } => {
            let gold_pairs = load_gold(&gold)?;
            let preds = load_pred(&pred)?;
            let report =
                evaluate_classification(&gold_pairs, &preds, group_by.is_some()).map_err(|e| {
                    Failure::Domain(format!("{} vs {}: {e}", gold.display(), pred.display()))
                })?;
            write_json(stdout, &report)?;
            let _ = write!(stderr, "{}", classification_table(&report));
            Ok(())
        }
        EvalCommand::Correlate {
            gold,
            pred,
            binary,
            ablation,
            group_by,
            exact_p,
        } => {
            let gold_pairs = load_gold(&gold)?;
            let preds = load_pred(&pred)?;
            let source = if binary {
                ScoreSource::Binary
            } else {
                ScoreSource::Probability
            };
            let method = if exact_p {
                PValueMethod::ExactPermutation
            } else {
                PValueMethod::StudentT
            };
            let context = format!("{} vs {}", gold.display(), pred.display());
            let scored = join_scores(&gold_pairs, &preds, source)
                .map_err(|e| Failure::Domain(format!("{context}: {e}")))?;
            let mut rows = vec![correlate(&scored, ALL_GROUP, method)
                .map_err(|e| Failure::Domain(format!("{context}: {e}")))?];
            if group_by.is_some() {
                let mut groups: BTreeMap<String, Vec<_>> = BTreeMap::new();
                for s in &scored {
                    let key = s
                        .subset
                        .clone()
                        .unwrap_or_else(|| UNTAGGED_GROUP.to_owned());
                    groups.entry(key).or_default().push(s.clone());
                }
                for (name, members) in &groups {
                    rows.push(
                        correlate(members, name, method).map_err(|e| {
                            Failure::Domain(format!("{context}: group `{name}`: {e}"))
                        })?,
                    );
                }
            }
            let ablation = if ablation {
                Some(
                    category_ablation(&scored)
                        .map_err(|e| Failure::Domain(format!("{context}: {e}")))?,
                )
            } else {
                None
            };
            let report = CorrelationReport {
                score_source: source,
                p_value_method: method,
                rows,
                ablation,
            };
            write_json(stdout, &report)?;
            let _ = write!(stderr, "{}", correlation_table(&report.rows));
            if let Some(ab) = &report.ablation {
                let _ = writeln!(
                    stderr,
                    "{:<24} {:>8} {:>10} {:>10}",
                    "removed category", "removed", "d_pearson", "d_spearman"
                );
                for c in &ab.categories {
                    let fmt = |v: Option<f64>| {
                        v.map(|d| format!("{d:+.4}"))
                            .unwrap_or_else(|| "undef".into())
                    };
                    let _ = writeln!(
                        stderr,
                        "{:<24} {:>8} {:>10} {:>10}",
                        c.category.as_str(),
                        c.removed,
                        fmt(c.pearson_delta),
                        fmt(c.spearman_delta)
                    );
                }
            }
            Ok(())
        }
    }
}
