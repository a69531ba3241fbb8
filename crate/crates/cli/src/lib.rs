//! The `hctm` command line.
//!
//! Exit codes: 0 on success, 1 on a runtime failure (one `error: <Kind>: ...`
//! line on stderr), 2 on a usage error.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use hctm_core::concepts::{read_concept_rows, ConceptHierarchy, Finding, Severity};
use hctm_core::corpus::{build_vocabulary, split_train_test, Corpus, Vocabulary, VocabularyMode};
use hctm_core::eval::{
    evaluate, fold_in, generate_synthetic, rows_to_csv, run_sweep, DocLength, EvalOptions, SweepGrid,
    SweepSettings, SyntheticSpec, DEFAULT_FOLDIN_FRACTION, FOLDIN_SWEEPS,
};
use hctm_core::model::{ModelConfig, ModelKind, TrainedModel, DEFAULT_BETA, DEFAULT_CHAINS, DEFAULT_ITERATIONS};
use hctm_core::report::{avg_min_path_length, marginal_concept_distribution, tag_document, top_concept_subtree};
use hctm_core::rng::derive_seed;
use hctm_core::sampler::train;
use hctm_core::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "hctm", version, about = "Topic, concept-topic and hierarchical concept-topic models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model and write its directory.
    Train(TrainArgs),
    /// Heldout perplexity of a trained model.
    Eval(EvalArgs),
    /// Tag document words with their most likely topic or concept.
    Tag(TagArgs),
    /// Concept marginals, top-k subtree and path proximity.
    Report(ReportArgs),
    /// Generate a synthetic corpus and concept hierarchy.
    Synth(SynthArgs),
    /// Train and evaluate a grid of configurations; writes CSV.
    Sweep(SweepArgs),
    /// Check a concept file (and optionally its fit to a corpus and model).
    ValidateConcepts(ValidateArgs),
    /// Build a vocabulary from a corpus and concept word lists.
    BuildVocab(BuildVocabArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    concepts: Option<PathBuf>,
    /// Model kind: tm, cm, ctm, hcm or hctm.
    #[arg(long)]
    model: ModelKind,
    #[arg(long, default_value_t = 0)]
    topics: usize,
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    iterations: usize,
    #[arg(long, default_value_t = DEFAULT_CHAINS)]
    chains: usize,
    #[arg(long, default_value_t = DEFAULT_BETA)]
    beta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Vocabulary file; defaults to the corpus words.
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Trained model directory.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long, default_value_t = DEFAULT_FOLDIN_FRACTION)]
    foldin_fraction: f64,
    /// Fold-in Gibbs sweeps per document and chain.
    #[arg(long, default_value_t = FOLDIN_SWEEPS)]
    sweeps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct TagArgs {
    #[arg(long)]
    model: PathBuf,
    /// Documents to tag, in corpus format.
    #[arg(long)]
    corpus: PathBuf,
    /// Number of ranked components that get letters.
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long, default_value_t = 10)]
    top_words: usize,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[arg(long, default_value_t = FOLDIN_SWEEPS)]
    sweeps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// Concepts selected for the subtree.
    #[arg(long, default_value_t = 8)]
    k: usize,
    /// Size of the per-document concept set for the path-length metric.
    #[arg(long, default_value_t = 5)]
    path_set: usize,
    #[arg(long, default_value_t = 10)]
    top_words: usize,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[arg(long, default_value_t = FOLDIN_SWEEPS)]
    sweeps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    docs: usize,
    /// Extra documents written to `test.tsv`.
    #[arg(long, default_value_t = 0)]
    test_docs: usize,
    #[arg(long, default_value_t = 1000)]
    vocab_size: usize,
    #[arg(long, default_value_t = 10)]
    topics: usize,
    #[arg(long, default_value_t = 3)]
    branching: usize,
    #[arg(long, default_value_t = 3)]
    depth: usize,
    /// Mean tokens per document (Poisson).
    #[arg(long, default_value_t = 50.0)]
    doc_length: f64,
    /// Expected share of concept-generated tokens.
    #[arg(long, default_value_t = 0.6)]
    concept_fraction: f64,
    /// Symmetric prior on every node's children and exit.
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    /// Symmetric prior of each concept's word distribution.
    #[arg(long, default_value_t = 0.5)]
    concept_beta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Test corpus; without it the corpus is split by `--train-fraction`.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    concepts: Option<PathBuf>,
    /// e.g. `models=tm,ctm,hctm;topics=0,5,10;fractions=0.25,0.5,1;seeds=1,2`
    #[arg(long)]
    grid: String,
    #[arg(long, default_value_t = 0.9)]
    train_fraction: f64,
    #[arg(long)]
    train_genre: Option<String>,
    #[arg(long)]
    test_genre: Option<String>,
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    iterations: usize,
    #[arg(long, default_value_t = DEFAULT_CHAINS)]
    chains: usize,
    #[arg(long, default_value_t = DEFAULT_BETA)]
    beta: f64,
    #[arg(long, default_value_t = DEFAULT_FOLDIN_FRACTION)]
    foldin_fraction: f64,
    /// Seed for the train/test split and for grids without `seeds=`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    concepts: PathBuf,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Model kind to check coverage for.
    #[arg(long)]
    model: Option<ModelKind>,
}

#[derive(Debug, Args)]
struct BuildVocabArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Concept files; repeat for several collections.
    #[arg(long)]
    concepts: Vec<PathBuf>,
    /// intersection, union or corpus-only.
    #[arg(long, default_value = "intersection")]
    mode: VocabularyMode,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Coverage and structure checks before training.
///
/// Concept-only models get a fatal finding for every corpus word in no
/// concept; other findings are warnings (empty concepts, concepts none of
/// whose words occur in the corpus).
pub fn validate_inputs(config: &ModelConfig, corpus: &Corpus, hierarchy: Option<&ConceptHierarchy>) -> Vec<Finding> {
    let mut out = Vec::new();
    let Some(h) = hierarchy else {
        if config.kind.uses_concepts() && config.num_concepts > 0 {
            out.push(Finding::fatal(format!("model {} needs a concept hierarchy", config.kind)));
        }
        return out;
    };
    out.extend(h.findings());
    let used: BTreeSet<u32> = corpus.documents.iter().flat_map(|d| d.tokens.iter().copied()).collect();
    for node in h.nodes() {
        if !node.words.is_empty() && node.words.is_disjoint(&used) {
            out.push(Finding::warning(format!(
                "concept `{}` ({}) has no word that occurs in the corpus",
                node.id, node.name
            )));
        }
    }
    let covered = h.covered_words();
    let uncovered: Vec<u32> = used.iter().copied().filter(|w| !covered.contains(w)).collect();
    if uncovered.is_empty() {
        return out;
    }
    if config.num_topics == 0 && config.kind.uses_concepts() {
        for w in uncovered {
            out.push(Finding::fatal(format!(
                "word `{}` belongs to no concept and model {} has no topics",
                corpus.vocabulary.word(w),
                config.kind
            )));
        }
    } else if config.kind.uses_concepts() {
        out.push(Finding::warning(format!(
            "{} corpus words belong to no concept and can only be generated by topics",
            uncovered.len()
        )));
    }
    out
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let mut text = e.render().to_string();
            if code == 2 && !text.contains("Usage:") {
                text = format!("{}\n{}\n", text.trim_end(), Cli::command().render_usage());
            }
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    let result = match cli.command {
        Command::Train(a) => cmd_train(a, out, err),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Tag(a) => cmd_tag(a, out),
        Command::Report(a) => cmd_report(a, out),
        Command::Synth(a) => cmd_synth(a, out),
        Command::Sweep(a) => cmd_sweep(a, out),
        Command::ValidateConcepts(a) => return cmd_validate(a, out, err),
        Command::BuildVocab(a) => cmd_build_vocab(a, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            let _ = writeln!(err, "error: {}: {msg}", e.kind());
            1
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_output(path: Option<&Path>, text: &str, out: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(io_err(p)),
        None => out.write_all(text.as_bytes()).map_err(io_err(Path::new("<stdout>"))),
    }
}

fn load_hierarchy(path: &Path, vocab: &Vocabulary) -> Result<ConceptHierarchy> {
    Ok(ConceptHierarchy::load(path, vocab)?.propagated())
}

fn cmd_train(a: TrainArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let corpus = match &a.vocab {
        Some(v) => Corpus::read(&a.corpus, Some(&Vocabulary::read(v)?))?,
        None => Corpus::read(&a.corpus, None)?,
    };
    let hierarchy = match (&a.concepts, a.model.uses_concepts()) {
        (Some(p), true) => Some(load_hierarchy(p, &corpus.vocabulary)?),
        (None, true) if a.model != ModelKind::Ctm => {
            return Err(Error::ConfigMismatch(format!("model {} needs --concepts", a.model)))
        }
        _ => None,
    };
    let config = ModelConfig {
        iterations: a.iterations,
        chains: a.chains,
        beta_phi: a.beta,
        beta_psi: a.beta,
        seed: a.seed,
        ..ModelConfig::new(a.model, a.topics, hierarchy.as_ref().map_or(0, ConceptHierarchy::len))
    };
    config.validate()?;
    let findings = validate_inputs(&config, &corpus, hierarchy.as_ref());
    for f in &findings {
        let _ = writeln!(err, "{f}");
    }
    if let Some(f) = findings.iter().find(|f| f.severity == Severity::Fatal) {
        return Err(Error::ConfigMismatch(f.message.clone()));
    }
    let model = train(&corpus, &config, hierarchy.as_ref())?;
    model.save(&a.out)?;
    let _ = writeln!(out, "documents={}", corpus.len());
    let _ = writeln!(out, "tokens={}", corpus.num_tokens());
    let _ = writeln!(out, "vocabulary={}", corpus.vocabulary.len());
    let _ = writeln!(out, "concepts={}", config.num_concepts);
    let _ = writeln!(out, "model_dir={}", a.out.display());
    Ok(())
}

fn load_model_and_corpus(model: &Path, corpus: &Path) -> Result<(TrainedModel, Corpus)> {
    let m = TrainedModel::load(model)?;
    let c = Corpus::read(corpus, Some(&m.vocabulary))?;
    Ok((m, c))
}

fn cmd_eval(a: EvalArgs, out: &mut dyn Write) -> Result<()> {
    let (model, test) = load_model_and_corpus(&a.model, &a.test)?;
    let opts = EvalOptions {
        foldin_fraction: a.foldin_fraction,
        sweeps: a.sweeps,
        seed: a.seed,
    };
    let ev = evaluate(&model, &test, &opts)?;
    let _ = writeln!(out, "model={}", model.config.kind);
    let _ = writeln!(out, "documents={}", ev.docs.len());
    let _ = writeln!(out, "eval_tokens={}", ev.num_tokens);
    let _ = writeln!(out, "log_likelihood={}", ev.log_likelihood);
    let _ = writeln!(out, "perplexity={}", ev.perplexity);
    Ok(())
}

/// Fold-in on chain 0 over all in-vocabulary words of every document.
fn fold_in_all(model: &TrainedModel, corpus: &Corpus, sweeps: usize, seed: u64) -> Result<Vec<hctm_core::model::DocDistributions>> {
    let chain = &model.chains[0];
    corpus
        .documents
        .iter()
        .enumerate()
        .map(|(d, doc)| {
            fold_in(
                &chain.estimates,
                &chain.hyper,
                model.index.as_deref(),
                &doc.tokens,
                sweeps,
                derive_seed(seed, d as u64),
            )
        })
        .collect()
}

fn cmd_tag(a: TagArgs, out: &mut dyn Write) -> Result<()> {
    let (model, corpus) = load_model_and_corpus(&a.model, &a.corpus)?;
    let fits = fold_in_all(&model, &corpus, a.sweeps, a.seed)?;
    let est = &model.chains[0].estimates;
    let mut text = String::new();
    for (n, (doc, fit)) in corpus.documents.iter().zip(&fits).enumerate() {
        let tagged = tag_document(est, model.index.as_deref(), fit, doc, &model.vocabulary, a.k, a.top_words);
        match a.format {
            Format::Text => {
                if n > 0 {
                    text.push('\n');
                }
                text.push_str(&tagged.to_text());
            }
            Format::Csv => text.push_str(&tagged.to_csv(n == 0)),
        }
    }
    write_output(a.out.as_deref(), &text, out)
}

fn cmd_report(a: ReportArgs, out: &mut dyn Write) -> Result<()> {
    let (model, corpus) = load_model_and_corpus(&a.model, &a.corpus)?;
    let (Some(index), Some(h)) = (model.index.as_deref(), model.hierarchy.as_ref()) else {
        return Err(Error::ConfigMismatch("report needs a model with concepts".into()));
    };
    let fits = fold_in_all(&model, &corpus, a.sweeps, a.seed)?;
    let est = &model.chains[0].estimates;
    let report = marginal_concept_distribution(est, index, &fits, a.top_words);
    let subtree = top_concept_subtree(&report, h, a.k);
    let path_len = avg_min_path_length(h, &report.per_doc, a.path_set).ok();
    let mean_route = report.concept_route.iter().sum::<f64>() / report.concept_route.len().max(1) as f64;
    let text = match a.format {
        Format::Text => {
            let mut s = format!("documents={}\nconcept_route={mean_route}\n", corpus.len());
            if let Some(p) = path_len {
                s.push_str(&format!("avg_min_path_length={p}\n"));
            }
            s.push_str(&format!("\ntop {} concepts with ancestors:\n", a.k));
            s.push_str(&subtree.to_text(&report, &model.vocabulary));
            s
        }
        Format::Csv => {
            let mut s = report.to_csv(&model.vocabulary);
            s.push('\n');
            s.push_str(&subtree.to_csv(&report, h, &model.vocabulary));
            s
        }
    };
    write_output(a.out.as_deref(), &text, out)
}

fn cmd_synth(a: SynthArgs, out: &mut dyn Write) -> Result<()> {
    if !(0.0..=1.0).contains(&a.concept_fraction) {
        return Err(Error::InvalidFraction(a.concept_fraction));
    }
    let fraction = a.concept_fraction.clamp(1e-6, 1.0 - 1e-6);
    let spec = SyntheticSpec {
        docs: a.docs + a.test_docs,
        vocab_size: a.vocab_size,
        topics: a.topics,
        branching: a.branching,
        depth: a.depth,
        doc_length: DocLength::Poisson(a.doc_length),
        gamma: SyntheticSpec::switch_prior(fraction, 10.0),
        tau: a.tau,
        concept_beta: a.concept_beta,
        seed: a.seed,
        ..SyntheticSpec::default()
    };
    let data = generate_synthetic(&spec)?;
    fs::create_dir_all(&a.out).map_err(io_err(&a.out))?;
    let mut train = data.corpus.clone();
    let test_docs = train.documents.split_off(a.docs);
    train.write(a.out.join("corpus.tsv"))?;
    if !test_docs.is_empty() {
        Corpus::new(test_docs, data.corpus.vocabulary.clone()).write(a.out.join("test.tsv"))?;
    }
    data.corpus.vocabulary.write(a.out.join("vocab.txt"))?;
    let concepts = a.out.join("concepts.tsv");
    fs::write(&concepts, data.hierarchy.to_tsv(&data.corpus.vocabulary)).map_err(io_err(&concepts))?;
    let concept_tokens = data
        .truth
        .assignments
        .iter()
        .flatten()
        .filter(|&&z| z as usize >= a.topics)
        .count();
    let _ = writeln!(out, "documents={}", a.docs);
    let _ = writeln!(out, "test_documents={}", a.test_docs);
    let _ = writeln!(out, "concepts={}", data.hierarchy.len());
    let _ = writeln!(out, "tokens={}", data.corpus.num_tokens());
    let _ = writeln!(out, "concept_tokens={concept_tokens}");
    Ok(())
}

fn stem(p: &Path) -> String {
    p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn cmd_sweep(a: SweepArgs, out: &mut dyn Write) -> Result<()> {
    let mut grid: SweepGrid = a.grid.parse()?;
    if !a.grid.contains("seeds") {
        grid.seeds = vec![a.seed];
    }
    let corpus = Corpus::read(&a.corpus, None)?;
    let (mut train_c, mut test_c, train_name, test_name) = match &a.test {
        Some(t) => (corpus.clone(), Corpus::read(t, Some(&corpus.vocabulary))?, stem(&a.corpus), stem(t)),
        None => {
            let (tr, te) = split_train_test(&corpus, a.train_fraction, a.seed)?;
            (tr, te, format!("{}-train", stem(&a.corpus)), format!("{}-test", stem(&a.corpus)))
        }
    };
    let mut settings = SweepSettings {
        iterations: a.iterations,
        chains: a.chains,
        beta: a.beta,
        foldin_fraction: a.foldin_fraction,
        train_set: train_name,
        test_set: test_name,
        ..SweepSettings::default()
    };
    if let Some(g) = &a.train_genre {
        train_c = train_c.filter_genre(g);
        settings.train_set = g.clone();
    }
    if let Some(g) = &a.test_genre {
        test_c = test_c.filter_genre(g);
        settings.test_set = g.clone();
    }
    if train_c.is_empty() || test_c.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let hierarchy = match &a.concepts {
        Some(p) => Some(load_hierarchy(p, &corpus.vocabulary)?),
        None => None,
    };
    if hierarchy.is_none() && grid.models.iter().any(|m| m.uses_concepts()) {
        return Err(Error::ConfigMismatch("concept models in the grid need --concepts".into()));
    }
    let rows = run_sweep(&grid, &train_c, &test_c, hierarchy.as_ref(), &settings)?;
    write_output(a.out.as_deref(), &rows_to_csv(&rows), out)
}

fn cmd_validate(a: ValidateArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = (|| -> Result<Vec<Finding>> {
        let corpus = match (&a.corpus, &a.vocab) {
            (Some(c), Some(v)) => Some(Corpus::read(c, Some(&Vocabulary::read(v)?))?),
            (Some(c), None) => Some(Corpus::read(c, None)?),
            _ => None,
        };
        let vocab = match (&corpus, &a.vocab) {
            (Some(c), _) => c.vocabulary.clone(),
            (None, Some(v)) => Vocabulary::read(v)?,
            (None, None) => Vocabulary::from_words(hctm_core::concepts::concept_word_collection(
                &read_concept_rows(&a.concepts)?,
            )),
        };
        let h = match load_hierarchy(&a.concepts, &vocab) {
            Ok(h) => h,
            Err(e @ (Error::Io { .. } | Error::MalformedLine { .. })) => return Err(e),
            Err(e) => return Ok(vec![Finding::fatal(e.to_string())]),
        };
        Ok(match (&corpus, a.model) {
            (Some(c), Some(kind)) => {
                let topics = usize::from(!matches!(kind, ModelKind::Cm | ModelKind::Hcm));
                let config = ModelConfig::new(kind, topics, h.len());
                validate_inputs(&config, c, Some(&h))
            }
            _ => h.findings(),
        })
    })();
    match result {
        Ok(findings) => {
            for f in &findings {
                let _ = writeln!(out, "{f}");
            }
            let fatal = findings.iter().filter(|f| f.severity == Severity::Fatal).count();
            let _ = writeln!(out, "findings={} fatal={fatal}", findings.len());
            i32::from(fatal > 0)
        }
        Err(e) => {
            let _ = writeln!(err, "error: {}: {}", e.kind(), e.to_string().replace('\n', " "));
            1
        }
    }
}

fn cmd_build_vocab(a: BuildVocabArgs, out: &mut dyn Write) -> Result<()> {
    let corpus = Corpus::read(&a.corpus, None)?;
    let sets = a
        .concepts
        .iter()
        .map(|p| Ok(hctm_core::concepts::concept_word_collection(&read_concept_rows(p)?)))
        .collect::<Result<Vec<_>>>()?;
    let vocab = build_vocabulary(&corpus, &sets, a.mode)?;
    let mut text = vocab.words().join("\n");
    text.push('\n');
    write_output(a.out.as_deref(), &text, out)
}
