//! Experiment grids: model kinds x topic counts x training fractions x seeds.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use crate::concepts::ConceptHierarchy;
use crate::corpus::{split_train_test, Corpus};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelKind, DEFAULT_BETA, DEFAULT_CHAINS, DEFAULT_ITERATIONS};
use crate::sampler::train;

use super::{evaluate, EvalOptions, DEFAULT_FOLDIN_FRACTION, FOLDIN_SWEEPS};

pub const CSV_HEADER: &str = "model,T,train_fraction,train_set,test_set,seed,perplexity,seconds";

/// Parsed from `models=tm,ctm;topics=0,5,10;fractions=0.25,1;seeds=1,2`.
/// `fractions` defaults to `1` and `seeds` to `0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub models: Vec<ModelKind>,
    pub topics: Vec<usize>,
    pub train_fractions: Vec<f64>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCell {
    /// Kind actually trained: concept-topic kinds become their topic-free
    /// forms at `T = 0`.
    pub model: ModelKind,
    pub topics: usize,
    pub train_fraction: f64,
    pub seed: u64,
}

impl SweepGrid {
    /// Grid cells in canonical order. Topic models at `T = 0` are skipped.
    pub fn cells(&self) -> Vec<SweepCell> {
        let mut out = Vec::new();
        for &kind in &self.models {
            for &t in &self.topics {
                let Some(model) = kind.with_topics(t) else { continue };
                for &train_fraction in &self.train_fractions {
                    for &seed in &self.seeds {
                        out.push(SweepCell {
                            model,
                            topics: t,
                            train_fraction,
                            seed,
                        });
                    }
                }
            }
        }
        out
    }
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| Error::InvalidGrid(format!("bad value {v:?} for `{key}`")))
        })
        .collect()
}

impl FromStr for SweepGrid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut grid = SweepGrid {
            models: Vec::new(),
            topics: Vec::new(),
            train_fractions: vec![1.0],
            seeds: vec![0],
        };
        for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::InvalidGrid(format!("expected key=value, found {part:?}")))?;
            match key.trim() {
                "models" => grid.models = list(key, value)?,
                "topics" => grid.topics = list(key, value)?,
                "fractions" => grid.train_fractions = list(key, value)?,
                "seeds" => grid.seeds = list(key, value)?,
                other => return Err(Error::InvalidGrid(format!("unknown key `{other}`"))),
            }
        }
        if grid.models.is_empty() || grid.topics.is_empty() || grid.seeds.is_empty() || grid.train_fractions.is_empty()
        {
            return Err(Error::InvalidGrid("models and topics must be non-empty".into()));
        }
        if let Some(f) = grid.train_fractions.iter().find(|&&f| !(f > 0.0 && f <= 1.0)) {
            return Err(Error::InvalidFraction(*f));
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSettings {
    pub iterations: usize,
    pub chains: usize,
    pub beta: f64,
    pub foldin_fraction: f64,
    pub foldin_sweeps: usize,
    pub optimize_hyperparameters: bool,
    /// Labels for the `train_set` and `test_set` columns.
    pub train_set: String,
    pub test_set: String,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            iterations: DEFAULT_ITERATIONS,
            chains: DEFAULT_CHAINS,
            beta: DEFAULT_BETA,
            foldin_fraction: DEFAULT_FOLDIN_FRACTION,
            foldin_sweeps: FOLDIN_SWEEPS,
            optimize_hyperparameters: true,
            train_set: "train".into(),
            test_set: "test".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub cell: SweepCell,
    pub train_set: String,
    pub test_set: String,
    pub perplexity: f64,
    pub seconds: f64,
}

/// Trains and evaluates every grid cell in order.
///
/// A fraction below one trains on a seeded random subset of `train`. The
/// test corpus must share `train`'s vocabulary.
pub fn run_sweep(
    grid: &SweepGrid,
    train_corpus: &Corpus,
    test: &Corpus,
    hierarchy: Option<&ConceptHierarchy>,
    settings: &SweepSettings,
) -> Result<Vec<SweepRow>> {
    grid.cells()
        .into_iter()
        .map(|cell| {
            let start = Instant::now();
            let subset;
            let data = if cell.train_fraction < 1.0 {
                subset = split_train_test(train_corpus, cell.train_fraction, cell.seed)?.0;
                &subset
            } else {
                train_corpus
            };
            let concepts = if cell.model.uses_concepts() {
                hierarchy.map_or(0, ConceptHierarchy::len)
            } else {
                0
            };
            let config = ModelConfig {
                iterations: settings.iterations,
                chains: settings.chains,
                beta_phi: settings.beta,
                beta_psi: settings.beta,
                seed: cell.seed,
                optimize_hyperparameters: settings.optimize_hyperparameters,
                ..ModelConfig::new(cell.model, cell.topics, concepts)
            };
            let model = train(data, &config, hierarchy.filter(|_| concepts > 0))?;
            let opts = EvalOptions {
                foldin_fraction: settings.foldin_fraction,
                sweeps: settings.foldin_sweeps,
                seed: cell.seed,
            };
            let ev = evaluate(&model, test, &opts)?;
            Ok(SweepRow {
                cell,
                train_set: settings.train_set.clone(),
                test_set: settings.test_set.clone(),
                perplexity: ev.perplexity,
                seconds: start.elapsed().as_secs_f64(),
            })
        })
        .collect()
}

/// CSV text with [`CSV_HEADER`]; `seconds` is the only column that varies
/// between identical runs.
pub fn rows_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{:.3}",
            r.cell.model, r.cell.topics, r.cell.train_fraction, r.train_set, r.test_set, r.cell.seed, r.perplexity, r.seconds
        );
    }
    out
}
