//! The `xling` command line: one subcommand per pipeline stage.
//!
//! Results go to standard output, diagnostics to standard error. Every file
//! written is accompanied by a run manifest (see [`manifest`]).

pub mod manifest;

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use xling_core::alignment::{
    adversarial_align, mutual_csls_score, procrustes, rcsls_align, refine_report, AdversarialConfig,
    LinearMap, RcslsConfig,
};
use xling_core::corpus::{
    build_vocabulary, clean_corpus, corpus_stats, load_lexicon, read_sentences, write_lexicon,
    BilingualLexicon, CleanRules, Sentence,
};
use xling_core::embedding::{
    normalize, read_embedding_with, train_cbow, write_embedding, CbowConfig, EmbeddingMatrix,
    NormScheme, ReadOptions,
};
use xling_core::retrieval::{evaluate, random_baseline, retrieve, Method, DEFAULT_CSLS_K};
use xling_core::synth::{generate_with, SynthConfig, LEXICON_FILE, SOURCE_FILE, TARGET_FILE, TRUTH_FILE};

use manifest::{manifest_path, RunManifest};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

pub const SYNTH_MANIFEST: &str = "synth.manifest";
pub const TRAIN_LEXICON_FILE: &str = "lexicon.train.txt";
pub const TEST_LEXICON_FILE: &str = "lexicon.test.txt";

#[derive(Debug, Parser)]
#[command(name = "xling", version, about = "Cross-lingual word embeddings: train, align, evaluate")]
pub struct Cli {
    /// Worker threads for CBOW training and neighbour search (1 is bit-reproducible).
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,

    /// More logging on standard error (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Lowercase, strip punctuation and drop duplicate sentences.
    Clean(CleanArgs),
    /// Sentence, token and unique-word counts of a corpus.
    Stats(StatsArgs),
    /// Train CBOW vectors, optionally warm-started from a pretrained embedding.
    TrainEmbed(TrainArgs),
    /// Learn a source→target linear map.
    Align(AlignArgs),
    /// Word-translation precision of a map against a lexicon.
    Eval(EvalArgs),
    /// Ranked translations of individual words.
    Translate(TranslateArgs),
    /// Generate a synthetic embedding pair with a known rotation.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct CleanArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub keep_case: bool,
    #[arg(long)]
    pub keep_punctuation: bool,
    #[arg(long)]
    pub keep_duplicates: bool,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Apply the default cleaning rules before counting.
    #[arg(long)]
    pub clean: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Cleaned corpus, one whitespace-tokenized sentence per line.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Pretrained embedding to copy rows from for shared words.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Vector size (defaults to the warm-start dimension, else 300).
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    #[arg(long, default_value_t = 8)]
    pub negatives: usize,
    #[arg(long, default_value_t = 5)]
    pub window: usize,
    #[arg(long, default_value_t = 3000)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.025)]
    pub lr: f64,
    #[arg(long, default_value_t = 1)]
    pub min_count: u64,
    /// Frequent-word subsampling threshold (e.g. 1e-3).
    #[arg(long)]
    pub sample: Option<f64>,
    /// Keep rows copied from --init fixed during training.
    #[arg(long)]
    pub freeze_init: bool,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AlignMethod {
    Procrustes,
    Adversarial,
    Rcsls,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Normalization {
    None,
    Unit,
    CenterUnit,
}

impl From<Normalization> for NormScheme {
    fn from(n: Normalization) -> Self {
        match n {
            Normalization::None => NormScheme::None,
            Normalization::Unit => NormScheme::Unit,
            Normalization::CenterUnit => NormScheme::CenterUnit,
        }
    }
}

#[derive(Debug, Args)]
pub struct EmbeddingInputs {
    #[arg(long)]
    pub src: PathBuf,
    #[arg(long)]
    pub tgt: PathBuf,
    /// Read at most this many words of each embedding file.
    #[arg(long)]
    pub max_words: Option<usize>,
    #[arg(long, value_enum, default_value_t = Normalization::Unit)]
    pub normalize: Normalization,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    #[command(flatten)]
    pub emb: EmbeddingInputs,
    #[arg(long, value_enum)]
    pub method: AlignMethod,
    /// Training dictionary (required for procrustes and rcsls).
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long)]
    pub output: PathBuf,
    /// Procrustes refinement iterations on a synthetic dictionary after the main method.
    #[arg(long, default_value_t = 0)]
    pub refine: usize,
    /// CSLS neighbourhood size for refinement and model selection.
    #[arg(long, default_value_t = DEFAULT_CSLS_K)]
    pub csls_k: usize,
    /// Most frequent words per side considered for synthetic dictionaries.
    #[arg(long, default_value_t = 15_000)]
    pub max_rank: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Starting map for rcsls (defaults to the Procrustes solution).
    #[arg(long)]
    pub init_map: Option<PathBuf>,

    #[arg(long, default_value_t = 2048)]
    pub disc_hidden: usize,
    #[arg(long, default_value_t = 2)]
    pub disc_layers: usize,
    #[arg(long, default_value_t = 0.1)]
    pub disc_dropout: f64,
    #[arg(long, default_value_t = 0.2)]
    pub smoothing: f64,
    #[arg(long, default_value_t = 0.1)]
    pub map_lr: f64,
    #[arg(long, default_value_t = 0.1)]
    pub disc_lr: f64,
    #[arg(long, default_value_t = 5)]
    pub adv_epochs: usize,
    #[arg(long, default_value_t = 100_000)]
    pub epoch_size: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 5)]
    pub disc_steps: usize,
    #[arg(long, default_value_t = 0.01)]
    pub ortho_beta: f64,
    #[arg(long, default_value_t = 50_000)]
    pub vocab_cap: usize,
    /// Train only from the identity, not also from its reflection.
    #[arg(long)]
    pub single_orientation: bool,

    #[arg(long, default_value_t = 10)]
    pub rcsls_k: usize,
    #[arg(long, default_value_t = 1.0)]
    pub rcsls_lr: f64,
    #[arg(long, default_value_t = 20)]
    pub rcsls_epochs: usize,
    #[arg(long, default_value_t = 1)]
    pub neighborhood_refresh: usize,
    /// Skip the projection onto the unit spectral ball.
    #[arg(long)]
    pub no_spectral: bool,
    #[arg(long, default_value_t = 200_000)]
    pub max_neighbors: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EvalMethod {
    Nn,
    Csls,
    Both,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub emb: EmbeddingInputs,
    #[arg(long)]
    pub map: PathBuf,
    #[arg(long)]
    pub lexicon: PathBuf,
    #[arg(long, value_enum, default_value_t = EvalMethod::Both)]
    pub method: EvalMethod,
    #[arg(long, default_value_t = DEFAULT_CSLS_K)]
    pub csls_k: usize,
    /// Write one line per query (prediction, correctness, references) here.
    #[arg(long)]
    pub details: Option<PathBuf>,
    /// Monte-Carlo trials for the random-selection baseline (0 skips it).
    #[arg(long, default_value_t = 0)]
    pub baseline_trials: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TranslateArgs {
    #[command(flatten)]
    pub emb: EmbeddingInputs,
    #[arg(long)]
    pub map: PathBuf,
    /// Source words to translate.
    #[arg(long = "word", required = true)]
    pub words: Vec<String>,
    #[arg(long, default_value_t = 10)]
    pub top: usize,
    #[arg(long, value_enum, default_value_t = EvalMethod::Csls)]
    pub method: EvalMethod,
    #[arg(long, default_value_t = DEFAULT_CSLS_K)]
    pub csls_k: usize,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub d: usize,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write disjoint train/test lexicons of these sizes.
    #[arg(long, default_value_t = 0)]
    pub train: usize,
    #[arg(long, default_value_t = 0)]
    pub test: usize,
    #[arg(long, default_value_t = 0)]
    pub clusters: usize,
    #[arg(long, default_value_t = 0.5)]
    pub cluster_spread: f64,
    #[arg(long, default_value_t = 0.0)]
    pub spectrum_decay: f64,
    #[arg(long, default_value_t = 0.0)]
    pub mean_shift: f64,
}

/// Failure of one invocation, carrying its exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io { path: PathBuf, source: io::Error },
    Core(xling_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(xling_core::Error::Argument(_)) => EXIT_USAGE,
            CliError::Core(e) if e.is_numerical() => EXIT_NUMERICAL,
            _ => EXIT_DATA,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<xling_core::Error> for CliError {
    fn from(e: xling_core::Error) -> Self {
        CliError::Core(e)
    }
}

type CliResult<T> = Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_owned(),
        source,
    }
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(io_err(path))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    match execute(&cli, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("xling: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli, out: &mut dyn Write) -> CliResult<()> {
    if cli.threads == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    // Fails only if a pool was already installed (repeated in-process runs).
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global();
    let result = match &cli.command {
        Command::Clean(a) => cmd_clean(a, out),
        Command::Stats(a) => cmd_stats(a, out),
        Command::TrainEmbed(a) => cmd_train(a, cli.threads, out),
        Command::Align(a) => cmd_align(a, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Translate(a) => cmd_translate(a, out),
        Command::Synth(a) => cmd_synth(a, out),
    };
    out.flush().map_err(io_err(Path::new("<stdout>")))?;
    result
}

fn say(out: &mut dyn Write, line: impl std::fmt::Display) -> CliResult<()> {
    writeln!(out, "{line}").map_err(io_err(Path::new("<stdout>")))
}

fn finish_manifest(m: &mut RunManifest, output: &Path) -> CliResult<()> {
    m.output(output).map_err(io_err(output))?;
    let path = manifest_path(output);
    m.write_to(&path).map_err(io_err(&path))
}

fn add_input(m: &mut RunManifest, role: &str, path: &Path) -> CliResult<()> {
    m.input(role, path).map_err(io_err(path))?;
    Ok(())
}

fn cmd_clean(a: &CleanArgs, out: &mut dyn Write) -> CliResult<()> {
    let rules = CleanRules {
        lowercase: !a.keep_case,
        strip_punctuation: !a.keep_punctuation,
        dedup: !a.keep_duplicates,
    };
    let mut sink = create(&a.output)?;
    let mut n = 0usize;
    for s in clean_corpus(open(&a.input)?, rules.clone()) {
        writeln!(sink, "{}", s?.to_line()).map_err(io_err(&a.output))?;
        n += 1;
    }
    sink.flush().map_err(io_err(&a.output))?;
    drop(sink);
    let mut m = RunManifest::new("clean");
    m.param("lowercase", rules.lowercase)
        .param("strip_punctuation", rules.strip_punctuation)
        .param("dedup", rules.dedup);
    add_input(&mut m, "corpus", &a.input)?;
    finish_manifest(&mut m, &a.output)?;
    say(out, format_args!("sentences\t{n}"))
}

fn load_sentences(path: &Path, clean: bool) -> CliResult<Vec<Sentence>> {
    if clean {
        Ok(clean_corpus(open(path)?, CleanRules::default()).collect::<Result<_, _>>()?)
    } else {
        Ok(read_sentences(open(path)?)?)
    }
}

fn cmd_stats(a: &StatsArgs, out: &mut dyn Write) -> CliResult<()> {
    let sentences = load_sentences(&a.corpus, a.clean)?;
    let stats = corpus_stats(&sentences);
    say(out, format_args!("sentences\t{}", stats.n_sentences))?;
    say(out, format_args!("tokens\t{}", stats.n_tokens))?;
    say(out, format_args!("unique_words\t{}", stats.n_unique_words))
}

fn read_emb(path: &Path, max_words: Option<usize>) -> CliResult<EmbeddingMatrix> {
    let opts = ReadOptions { max_words };
    let (emb, dups) = read_embedding_with(open(path)?, &opts)?;
    if dups > 0 {
        log::warn!("{}: {dups} duplicate words ignored", path.display());
    }
    Ok(emb)
}

fn write_emb(path: &Path, emb: &EmbeddingMatrix) -> CliResult<()> {
    let mut sink = create(path)?;
    write_embedding(emb, &mut sink)?;
    sink.flush().map_err(io_err(path))
}

fn cmd_train(a: &TrainArgs, threads: usize, out: &mut dyn Write) -> CliResult<()> {
    let corpus = read_sentences(open(&a.corpus)?)?;
    let init = a.init.as_deref().map(|p| read_emb(p, None)).transpose()?;
    let dim = a.dim.or(init.as_ref().map(|e| e.dim())).unwrap_or(300);
    let config = CbowConfig {
        dim,
        epochs: a.epochs,
        negatives: a.negatives,
        window: a.window,
        batch_size: a.batch_size,
        learning_rate: a.lr,
        min_count: a.min_count,
        seed: a.seed,
        sample: a.sample,
        freeze_init: a.freeze_init,
        threads,
    };
    let vocab = build_vocabulary(corpus.iter(), a.min_count)?;
    log::info!("vocabulary: {} words", vocab.len());
    let result = train_cbow(&corpus, &config, init.as_ref())?;
    write_emb(&a.output, &result.embedding)?;

    let mut m = RunManifest::new("train-embed");
    m.seed(a.seed)
        .param("dim", dim)
        .param("epochs", a.epochs)
        .param("negatives", a.negatives)
        .param("window", a.window)
        .param("batch_size", a.batch_size)
        .param("lr", a.lr)
        .param("min_count", a.min_count)
        .param("sample", a.sample.map_or("none".to_string(), |s| s.to_string()))
        .param("freeze_init", a.freeze_init)
        .param("threads", threads);
    add_input(&mut m, "corpus", &a.corpus)?;
    if let Some(p) = &a.init {
        add_input(&mut m, "init", p)?;
    }
    finish_manifest(&mut m, &a.output)?;

    say(out, format_args!("words\t{}", result.embedding.len()))?;
    if let Some(c) = result.coverage {
        say(out, format_args!("init_coverage\t{c:.4}"))?;
    }
    for (i, l) in result.epoch_losses.iter().enumerate() {
        say(out, format_args!("epoch {}\tloss {l:.6}", i + 1))?;
    }
    Ok(())
}

/// Reads both embeddings and applies the requested normalization.
fn load_pair(e: &EmbeddingInputs) -> CliResult<(EmbeddingMatrix, EmbeddingMatrix)> {
    let scheme = NormScheme::from(e.normalize);
    let src = normalize(&read_emb(&e.src, e.max_words)?, scheme);
    let tgt = normalize(&read_emb(&e.tgt, e.max_words)?, scheme);
    if src.dim() != tgt.dim() {
        return Err(CliError::Core(xling_core::Error::Format {
            line: 1,
            msg: format!("source dimension {} differs from target dimension {}", src.dim(), tgt.dim()),
        }));
    }
    Ok((src, tgt))
}

fn embedding_params(m: &mut RunManifest, e: &EmbeddingInputs) -> CliResult<()> {
    m.param("normalize", format!("{:?}", e.normalize).to_lowercase())
        .param("max_words", e.max_words.map_or("all".to_string(), |n| n.to_string()));
    add_input(m, "src", &e.src)?;
    add_input(m, "tgt", &e.tgt)
}

fn read_lexicon(path: &Path) -> CliResult<BilingualLexicon> {
    Ok(load_lexicon(open(path)?)?)
}

fn read_map(path: &Path) -> CliResult<LinearMap> {
    Ok(LinearMap::read(open(path)?)?)
}

fn cmd_align(a: &AlignArgs, out: &mut dyn Write) -> CliResult<()> {
    let (src, tgt) = load_pair(&a.emb)?;
    let lexicon = match (&a.lexicon, a.method) {
        (Some(p), _) => Some(read_lexicon(p)?),
        (None, AlignMethod::Adversarial) => None,
        (None, m) => {
            return Err(CliError::Usage(format!("--method {m:?} requires --lexicon").to_lowercase()))
        }
    };
    let mut m = RunManifest::new("align");
    m.seed(a.seed)
        .param("method", format!("{:?}", a.method).to_lowercase())
        .param("refine", a.refine)
        .param("csls_k", a.csls_k)
        .param("max_rank", a.max_rank);
    embedding_params(&mut m, &a.emb)?;
    if let Some(p) = &a.lexicon {
        add_input(&mut m, "lexicon", p)?;
    }

    let map = match a.method {
        AlignMethod::Procrustes => procrustes(&src, &tgt, lexicon.as_ref().expect("lexicon"))?,
        AlignMethod::Adversarial => {
            let config = AdversarialConfig {
                disc_hidden: a.disc_hidden,
                disc_layers: a.disc_layers,
                disc_dropout: a.disc_dropout,
                smoothing: a.smoothing,
                map_lr: a.map_lr,
                disc_lr: a.disc_lr,
                epochs: a.adv_epochs,
                epoch_size: a.epoch_size,
                batch_size: a.batch_size,
                disc_steps: a.disc_steps,
                ortho_beta: a.ortho_beta,
                vocab_cap: a.vocab_cap,
                proxy_k: a.csls_k,
                proxy_max_rank: a.max_rank,
                both_orientations: !a.single_orientation,
                seed: a.seed,
                ..AdversarialConfig::default()
            };
            m.param("disc_hidden", config.disc_hidden)
                .param("disc_layers", config.disc_layers)
                .param("disc_dropout", config.disc_dropout)
                .param("smoothing", config.smoothing)
                .param("map_lr", config.map_lr)
                .param("disc_lr", config.disc_lr)
                .param("adv_epochs", config.epochs)
                .param("epoch_size", config.epoch_size)
                .param("batch_size", config.batch_size)
                .param("disc_steps", config.disc_steps)
                .param("ortho_beta", config.ortho_beta)
                .param("vocab_cap", config.vocab_cap)
                .param("both_orientations", config.both_orientations);
            adversarial_align(&src, &tgt, &config)?
        }
        AlignMethod::Rcsls => {
            let config = RcslsConfig {
                k: a.rcsls_k,
                lr: a.rcsls_lr,
                epochs: a.rcsls_epochs,
                neighborhood_refresh: a.neighborhood_refresh,
                spectral: !a.no_spectral,
                max_neighbors: a.max_neighbors,
                seed: a.seed,
            };
            m.param("rcsls_k", config.k)
                .param("rcsls_lr", config.lr)
                .param("rcsls_epochs", config.epochs)
                .param("neighborhood_refresh", config.neighborhood_refresh)
                .param("spectral", config.spectral)
                .param("max_neighbors", config.max_neighbors);
            let init = a.init_map.as_deref().map(read_map).transpose()?;
            if let Some(p) = &a.init_map {
                add_input(&mut m, "init_map", p)?;
            }
            let lex = lexicon.as_ref().expect("lexicon");
            let result = rcsls_align(&src, &tgt, lex, &config, init.as_ref())?;
            say(out, format_args!("rcsls_objective\t{:.6}", result.objectives[result.best]))?;
            result.map
        }
    };
    let map = if a.refine > 0 {
        let report = refine_report(&src, &tgt, &map, a.refine, a.csls_k, a.max_rank)?;
        for (i, size) in report.lexicon_sizes.iter().enumerate() {
            log::info!("refinement {}: {size} synthetic pairs, proxy {:.5}", i + 1, report.scores[i + 1]);
        }
        report.map
    } else {
        map
    };

    let mut sink = create(&a.output)?;
    map.write(&mut sink)?;
    drop(sink);
    finish_manifest(&mut m, &a.output)?;

    let proxy = mutual_csls_score(&map, &src, &tgt, a.csls_k, a.max_rank)?;
    say(out, format_args!("orthogonal\t{}", map.is_orthogonal()))?;
    say(out, format_args!("orthogonality_error\t{:.3e}", map.orthogonality_error()))?;
    say(out, format_args!("proxy_csls\t{proxy:.6}"))
}

fn methods(m: EvalMethod) -> Vec<Method> {
    match m {
        EvalMethod::Nn => vec![Method::Nn],
        EvalMethod::Csls => vec![Method::Csls],
        EvalMethod::Both => vec![Method::Nn, Method::Csls],
    }
}

fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> CliResult<()> {
    let (src, tgt) = load_pair(&a.emb)?;
    let map = read_map(&a.map)?;
    let lex = read_lexicon(&a.lexicon)?;
    let mut detail_lines = Vec::new();
    for method in methods(a.method) {
        let report = evaluate(&map, &lex, &src, &tgt, method, a.csls_k)?;
        say(out, format_args!("{method}\t{}", report.summary_line()))?;
        detail_lines.extend(report.query_lines().into_iter().map(|l| format!("{method}\t{l}")));
    }
    if a.baseline_trials > 0 {
        let b = random_baseline(&lex, a.baseline_trials, a.seed)?;
        say(
            out,
            format_args!("random\tP@1 {:.4} monte_carlo {:.4} trials {}", b.analytic, b.monte_carlo, a.baseline_trials),
        )?;
    }
    if let Some(path) = &a.details {
        let mut sink = create(path)?;
        for l in &detail_lines {
            writeln!(sink, "{l}").map_err(io_err(path))?;
        }
        sink.flush().map_err(io_err(path))?;
        drop(sink);
        let mut m = RunManifest::new("eval");
        m.seed(a.seed)
            .param("method", format!("{:?}", a.method).to_lowercase())
            .param("csls_k", a.csls_k)
            .param("baseline_trials", a.baseline_trials);
        embedding_params(&mut m, &a.emb)?;
        add_input(&mut m, "map", &a.map)?;
        add_input(&mut m, "lexicon", &a.lexicon)?;
        finish_manifest(&mut m, path)?;
    }
    Ok(())
}

fn cmd_translate(a: &TranslateArgs, out: &mut dyn Write) -> CliResult<()> {
    let (src, tgt) = load_pair(&a.emb)?;
    let map = read_map(&a.map)?;
    for method in methods(a.method) {
        for word in &a.words {
            let ranked = retrieve(word, &map, &src, &tgt, method, a.csls_k, a.top)?;
            for (rank, (cand, score)) in ranked.iter().enumerate() {
                say(out, format_args!("{method}\t{word}\t{}\t{cand}\t{score:.6}", rank + 1))?;
            }
        }
    }
    Ok(())
}

fn cmd_synth(a: &SynthArgs, out: &mut dyn Write) -> CliResult<()> {
    let config = SynthConfig {
        n: a.n,
        d: a.d,
        noise_sigma: a.noise,
        seed: a.seed,
        clusters: a.clusters,
        cluster_spread: a.cluster_spread,
        spectrum_decay: a.spectrum_decay,
        mean_shift: a.mean_shift,
    };
    let inst = generate_with(&config)?;
    inst.write_to(&a.out)?;
    let mut files = vec![SOURCE_FILE, TARGET_FILE, LEXICON_FILE, TRUTH_FILE];
    if a.train > 0 || a.test > 0 {
        let (train, test) = inst.train_test(a.train, a.test, a.seed)?;
        for (lex, name) in [(&train, TRAIN_LEXICON_FILE), (&test, TEST_LEXICON_FILE)] {
            let path = a.out.join(name);
            let mut sink = create(&path)?;
            write_lexicon(lex, &mut sink)?;
            sink.flush().map_err(io_err(&path))?;
        }
        files.extend([TRAIN_LEXICON_FILE, TEST_LEXICON_FILE]);
    }
    let mut m = RunManifest::new("synth");
    m.seed(a.seed)
        .param("n", a.n)
        .param("d", a.d)
        .param("noise", a.noise)
        .param("train", a.train)
        .param("test", a.test)
        .param("clusters", a.clusters)
        .param("cluster_spread", a.cluster_spread)
        .param("spectrum_decay", a.spectrum_decay)
        .param("mean_shift", a.mean_shift);
    for f in &files {
        let p = a.out.join(f);
        m.output(&p).map_err(io_err(&p))?;
    }
    let mpath = a.out.join(SYNTH_MANIFEST);
    m.write_to(&mpath).map_err(io_err(&mpath))?;
    say(out, format_args!("pairs\t{}", inst.lexicon.len()))?;
    say(out, format_args!("dim\t{}", a.d))
}

/// Reads a whole text file into lines; used by tests and tooling.
pub fn read_lines(path: &Path) -> io::Result<Vec<String>> {
    BufReader::new(File::open(path)?).lines().collect()
}
