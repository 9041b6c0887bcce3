//! The `vektor` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data, format or I/O error,
//! 3 numeric failure.

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use vektor::corpus::{read_corpus, Sentence, Vocabulary};
use vektor::distill::{aggregate_parallel, x2static_train, Pooling, TokenVectorStream, X2StaticConfig};
use vektor::embio::{self, nearest_neighbors, pca_project, Query};
use vektor::eval::{analogy_query, mrr_evaluate, similarity_evaluate, AnalogyDataset, SimilarityDataset};
use vektor::glove::{accumulate_cooccurrence_parallel, glove_train, GloveConfig};
use vektor::sgns::{self, SgnsConfig, SgnsMode};
use vektor::WordEmbeddings;

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] vektor::Error),
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(e) if e.is_numeric() => EXIT_NUMERIC,
            _ => EXIT_DATA,
        }
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "vektor", version, about = "Train, convert and evaluate static word embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Count tokens and write a frequency-sorted vocabulary
    BuildVocab(BuildVocabArgs),
    /// Train embeddings on a tokenized corpus
    Train(TrainArgs),
    /// Turn contextual token vectors into static embeddings
    Convert(ConvertArgs),
    /// Element-wise mean of two embedding files
    Average(AverageArgs),
    /// Analogy evaluation by mean reciprocal rank
    EvalAnalogy(EvalAnalogyArgs),
    /// Word-similarity evaluation by Pearson and Spearman correlation
    EvalSim(EvalSimArgs),
    /// Nearest neighbours and analogy lookups
    Query(QueryArgs),
    /// Two-dimensional PCA projection of selected words
    Project(ProjectArgs),
}

#[derive(Args, Debug)]
struct BuildVocabArgs {
    /// Corpus, one sentence per line (optionally gzip-compressed)
    #[arg(long)]
    corpus: PathBuf,
    /// Output vocabulary file
    #[arg(short, long)]
    output: PathBuf,
    /// Drop words seen fewer times than this
    #[arg(long, default_value_t = 5)]
    min_count: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModelKind {
    #[value(name = "w2v-sg")]
    SkipGram,
    #[value(name = "w2v-cbow")]
    Cbow,
    #[value(name = "fasttext")]
    FastText,
    #[value(name = "glove")]
    Glove,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long, value_enum)]
    model: ModelKind,
    /// Corpus, one sentence per line (optionally gzip-compressed)
    #[arg(long)]
    corpus: PathBuf,
    /// Output embeddings; `.bin` selects the binary format
    #[arg(short, long)]
    output: PathBuf,
    /// Prebuilt vocabulary (otherwise built from the corpus)
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    min_count: u64,
    #[arg(long, default_value_t = 300)]
    dim: usize,
    #[arg(long, default_value_t = 5)]
    window: usize,
    /// Negative samples per positive pair
    #[arg(long, default_value_t = 5)]
    negatives: usize,
    /// Passes over the corpus (word2vec and fastText)
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    /// Passes over the co-occurrence matrix (GloVe)
    #[arg(long, default_value_t = 100)]
    iterations: usize,
    /// Initial learning rate [default: 0.025 w2v-sg/fasttext, 0.05 w2v-cbow/glove]
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, default_value_t = 3)]
    min_n: usize,
    #[arg(long, default_value_t = 6)]
    max_n: usize,
    /// Hash buckets for character n-grams
    #[arg(long, default_value_t = 2_000_000)]
    buckets: u32,
    #[arg(long, default_value_t = 100.0)]
    x_max: f64,
    #[arg(long, default_value_t = 0.75)]
    alpha: f64,
    /// Also write the GloVe co-occurrence matrix here
    #[arg(long)]
    cooc_output: Option<PathBuf>,
    #[arg(long, env = "VEKTOR_SEED", default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Print per-epoch progress to stderr
    #[arg(short, long)]
    verbose: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Method {
    Aggregate,
    X2static,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum PoolingArg {
    Mean,
    Max,
}

#[derive(Args, Debug)]
struct ConvertArgs {
    #[arg(long, value_enum)]
    method: Method,
    /// Token vector file (`#dim=<d>` header, `token<TAB>values` lines)
    #[arg(long)]
    vectors: PathBuf,
    /// Output embeddings; `.bin` selects the binary format
    #[arg(short, long)]
    output: PathBuf,
    /// Corpus aligned with the token vectors (required for x2static)
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Prebuilt vocabulary
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Frequency floor when building the vocabulary
    #[arg(long, default_value_t = 1)]
    min_count: u64,
    #[arg(long, value_enum, default_value_t = PoolingArg::Mean)]
    pooling: PoolingArg,
    /// Student dimension (x2static)
    #[arg(long, default_value_t = 300)]
    dim: usize,
    #[arg(long, default_value_t = 5)]
    negatives: usize,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long, default_value_t = 0.025)]
    lr: f64,
    /// Weight of the alignment penalty between student and projected teacher
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
    #[arg(long, env = "VEKTOR_SEED", default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(short, long)]
    verbose: bool,
}

#[derive(Args, Debug)]
struct AverageArgs {
    first: PathBuf,
    second: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// Keep only words present in both files instead of requiring equal vocabularies
    #[arg(long)]
    intersect: bool,
}

#[derive(Args, Debug)]
struct EvalAnalogyArgs {
    #[arg(long)]
    embeddings: PathBuf,
    /// Analogy file with `: category` headers and `a b c d` lines
    #[arg(long)]
    dataset: PathBuf,
    /// Ranks beyond this cutoff score zero
    #[arg(long, default_value_t = 10)]
    top_k: usize,
    /// Tab-separated output
    #[arg(long)]
    tsv: bool,
}

#[derive(Args, Debug)]
struct EvalSimArgs {
    #[arg(long)]
    embeddings: PathBuf,
    /// `w1<TAB>w2<TAB>score` file
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    tsv: bool,
}

#[derive(Args, Debug)]
struct QueryArgs {
    #[command(subcommand)]
    kind: QueryKind,
}

#[derive(Subcommand, Debug)]
enum QueryKind {
    /// Words closest to WORD
    Nn {
        #[arg(long)]
        embeddings: PathBuf,
        word: String,
        #[arg(short, long, default_value_t = 10)]
        k: usize,
    },
    /// Words closest to b - a + c
    Analogy {
        #[arg(long)]
        embeddings: PathBuf,
        a: String,
        b: String,
        c: String,
        #[arg(short, long, default_value_t = 10)]
        k: usize,
    },
}

#[derive(Args, Debug)]
struct ProjectArgs {
    #[arg(long)]
    embeddings: PathBuf,
    /// File with one word per line
    #[arg(long, conflicts_with = "words")]
    word_file: Option<PathBuf>,
    /// Words to project
    words: Vec<String>,
    /// Output TSV (stdout when absent)
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn require_file(path: &Path) -> CliResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(io::Error::new(io::ErrorKind::NotFound, format!("{}: no such file", path.display())).into())
    }
}

fn require_writable(path: &Path) -> CliResult {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    if parent.is_dir() {
        Ok(())
    } else {
        Err(io::Error::new(
            io::ErrorKind::NotFound,
            format!("{}: output directory does not exist", path.display()),
        )
        .into())
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn load_vocab(path: Option<&Path>, corpus: &[Sentence], min_count: u64, workers: usize) -> CliResult<Vocabulary> {
    Ok(match path {
        Some(p) => Vocabulary::load(p)?,
        None => Vocabulary::from_sentences_parallel(corpus, min_count, workers)?,
    })
}

fn build_vocab(a: BuildVocabArgs, err: &mut dyn Write) -> CliResult {
    require_file(&a.corpus)?;
    require_writable(&a.output)?;
    let corpus = read_corpus(&a.corpus)?;
    let vocab = Vocabulary::from_sentences_parallel(&corpus, a.min_count, a.workers)?;
    vocab.save(&a.output)?;
    writeln!(err, "{} words, {} tokens", vocab.len(), vocab.total_tokens())?;
    Ok(())
}

fn train(a: TrainArgs) -> CliResult {
    require_file(&a.corpus)?;
    if let Some(v) = &a.vocab {
        require_file(v)?;
    }
    require_writable(&a.output)?;
    if let Some(c) = &a.cooc_output {
        require_writable(c)?;
    }
    let corpus = read_corpus(&a.corpus)?;
    let vocab = load_vocab(a.vocab.as_deref(), &corpus, a.min_count, a.workers)?;

    let embeddings = if a.model == ModelKind::Glove {
        let cfg = GloveConfig {
            dim: a.dim,
            window: a.window,
            x_max: a.x_max,
            alpha: a.alpha,
            iterations: a.iterations,
            initial_lr: a.lr.unwrap_or(GloveConfig::default().initial_lr),
            seed: a.seed,
            workers: a.workers,
            verbose: a.verbose,
        };
        cfg.validate()?;
        let matrix = accumulate_cooccurrence_parallel(&corpus, &vocab, a.window, a.workers)?;
        if let Some(path) = &a.cooc_output {
            matrix.save(path)?;
        }
        glove_train(&matrix, &vocab, &cfg)?.embeddings
    } else {
        let mode = match a.model {
            ModelKind::SkipGram => SgnsMode::SkipGram,
            ModelKind::Cbow => SgnsMode::Cbow,
            _ => SgnsMode::FastText,
        };
        let cfg = SgnsConfig {
            dim: a.dim,
            window: a.window,
            negatives: a.negatives,
            epochs: a.epochs,
            initial_lr: a.lr.unwrap_or(mode.default_lr()),
            mode,
            min_n: a.min_n,
            max_n: a.max_n,
            bucket_count: a.buckets,
            seed: a.seed,
            workers: a.workers,
            verbose: a.verbose,
        };
        sgns::train(&corpus, &vocab, &cfg)?.embeddings
    };
    embio::save(&embeddings, &a.output)?;
    Ok(())
}

fn convert(a: ConvertArgs) -> CliResult {
    require_file(&a.vectors)?;
    if let Some(p) = &a.corpus {
        require_file(p)?;
    }
    if let Some(p) = &a.vocab {
        require_file(p)?;
    }
    require_writable(&a.output)?;
    let embeddings = match a.method {
        Method::Aggregate => {
            let stream = TokenVectorStream::load(&a.vectors)?;
            let vocab = match &a.vocab {
                Some(p) => Vocabulary::load(p)?,
                None => {
                    let sentences: Vec<Sentence> = stream.sentences.iter().map(|s| Sentence::new(s.tokens.clone())).collect();
                    Vocabulary::from_sentences(&sentences, a.min_count)?
                }
            };
            let pooling = match a.pooling {
                PoolingArg::Mean => Pooling::Mean,
                PoolingArg::Max => Pooling::Max,
            };
            aggregate_parallel(&stream, &vocab, pooling, a.workers)?
        }
        Method::X2static => {
            let corpus_path = a.corpus.as_ref().ok_or_else(|| usage("--method x2static requires --corpus"))?;
            let corpus = read_corpus(corpus_path)?;
            let stream = TokenVectorStream::load(&a.vectors)?;
            let vocab = load_vocab(a.vocab.as_deref(), &corpus, a.min_count, a.workers)?;
            let cfg = X2StaticConfig {
                dim: a.dim,
                negatives: a.negatives,
                epochs: a.epochs,
                initial_lr: a.lr,
                alignment_weight: a.lambda,
                seed: a.seed,
                workers: a.workers,
                verbose: a.verbose,
            };
            x2static_train(&corpus, &stream, &vocab, &cfg)?.embeddings
        }
    };
    embio::save(&embeddings, &a.output)?;
    Ok(())
}

fn average(a: AverageArgs) -> CliResult {
    require_file(&a.first)?;
    require_file(&a.second)?;
    require_writable(&a.output)?;
    let x = embio::load(&a.first)?;
    let y = embio::load(&a.second)?;
    embio::save(&x.average(&y, a.intersect)?, &a.output)?;
    Ok(())
}

fn load_embeddings(path: &Path) -> CliResult<WordEmbeddings> {
    require_file(path)?;
    Ok(embio::load(path)?)
}

fn eval_analogy(a: EvalAnalogyArgs, out: &mut dyn Write) -> CliResult {
    require_file(&a.dataset)?;
    if a.top_k == 0 {
        return Err(usage("--top-k must be at least 1"));
    }
    let emb = load_embeddings(&a.embeddings)?;
    let ds = AnalogyDataset::load(&a.dataset)?;
    let report = mrr_evaluate(&emb, &ds, a.top_k)?;
    if a.tsv {
        report.write_tsv(out)?;
    } else {
        report.write_table(out)?;
    }
    Ok(())
}

fn eval_sim(a: EvalSimArgs, out: &mut dyn Write) -> CliResult {
    require_file(&a.dataset)?;
    let emb = load_embeddings(&a.embeddings)?;
    let ds = SimilarityDataset::load(&a.dataset)?;
    let report = similarity_evaluate(&emb, &ds)?;
    let name = a
        .dataset
        .file_stem()
        .map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned());
    if a.tsv {
        report.write_tsv(&name, out)?;
    } else {
        report.write_table(&name, out)?;
    }
    Ok(())
}

fn query(a: QueryArgs, out: &mut dyn Write) -> CliResult {
    let hits = match a.kind {
        QueryKind::Nn { embeddings, word, k } => {
            let emb = load_embeddings(&embeddings)?;
            nearest_neighbors(&emb, Query::Word(&word), k)?
        }
        QueryKind::Analogy { embeddings, a, b, c, k } => {
            let emb = load_embeddings(&embeddings)?;
            analogy_query(&emb, &a, &b, &c, k)?
        }
    };
    for n in hits {
        writeln!(out, "{}\t{:.6}", n.word, n.similarity)?;
    }
    Ok(())
}

fn project(a: ProjectArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult {
    if let Some(p) = &a.word_file {
        require_file(p)?;
    }
    if let Some(p) = &a.output {
        require_writable(p)?;
    }
    let emb = load_embeddings(&a.embeddings)?;
    let words: Vec<String> = match &a.word_file {
        Some(p) => {
            let mut ws = Vec::new();
            for line in vektor::corpus::open_text(p)?.lines() {
                let line = line?;
                let w = line.trim();
                if !w.is_empty() {
                    ws.push(w.to_owned());
                }
            }
            ws
        }
        None => a.words,
    };
    if words.is_empty() {
        return Err(usage("no words to project"));
    }
    let result = pca_project(&emb, &words)?;
    if !result.skipped.is_empty() {
        writeln!(err, "skipped (not in vocabulary): {}", result.skipped.join(" "))?;
    }
    match &a.output {
        Some(p) => {
            let mut w = BufWriter::new(fs::File::create(p)?);
            result.write_tsv(&mut w)?;
            w.flush()?;
        }
        None => result.write_tsv(out)?,
    }
    Ok(())
}

/// Parse `argv` (including the program name) and run the command.
/// Returns the process exit code.
pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{text}");
                0
            };
        }
    };
    let result = match cli.command {
        Command::BuildVocab(a) => build_vocab(a, err),
        Command::Train(a) => train(a),
        Command::Convert(a) => convert(a),
        Command::Average(a) => average(a),
        Command::EvalAnalogy(a) => eval_analogy(a, out),
        Command::EvalSim(a) => eval_sim(a, out),
        Command::Query(a) => query(a, out),
        Command::Project(a) => project(a, out, err),
    };
    match result.and_then(|()| out.flush().map_err(CliError::from)) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
