//! Plain-text model files.
//!
//! A single-estimate directory holds:
//!
//! * `config.txt`: `key=value` lines, starting with `format` and `version`
//! * `phi.txt`: header `phi <T> <V>`, then one line of `V` probabilities per topic
//! * `psi.txt`: header `psi <C>`, then one line per concept of `word:prob` pairs
//! * `hyper.txt`: `alpha <n> ...`, `gamma <g0> <g1>`, `tau <C>` then one line per concept
//! * `docs.txt`: header `docs <D>`, an `offsets` line for zeta blocks, then one line
//!   per document: `xi0 xi1 | theta... | zeta...`
//!
//! A trained model directory has the chain average in that layout at the top
//! level, `vocab.txt`, `concepts.tsv` for concept models, and one
//! `chain-<s>/` subdirectory per chain in the same layout.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use crate::concepts::{ConceptHierarchy, ConceptIndex};
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};

use super::{ConceptWords, DocDistributions, Hyperparameters, ModelConfig, ModelKind, PointEstimates};

pub const FORMAT_NAME: &str = "hctm-model";
pub const FORMAT_VERSION: &str = "1";

/// Estimates and final hyperparameters of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainModel {
    pub estimates: PointEstimates,
    pub hyper: Hyperparameters,
}

/// Everything needed to evaluate or report on a trained model.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub config: ModelConfig,
    pub vocabulary: Vocabulary,
    pub hierarchy: Option<ConceptHierarchy>,
    pub index: Option<Arc<ConceptIndex>>,
    pub chains: Vec<ChainModel>,
}

impl TrainedModel {
    /// Element-wise mean of all chains' estimates and hyperparameters.
    ///
    /// Concept distributions are identified by their word sets, so averaging
    /// them is meaningful; topics are not aligned across chains.
    pub fn averaged(&self) -> ChainModel {
        let s = self.chains.len() as f64;
        let mut out = self.chains[0].clone();
        for chain in &self.chains[1..] {
            let (e, h) = (&chain.estimates, &chain.hyper);
            add_nested(&mut out.estimates.phi, &e.phi);
            for (a, b) in out.estimates.psi.iter_mut().zip(&e.psi) {
                add(&mut a.probs, &b.probs);
            }
            for (a, b) in out.estimates.docs.iter_mut().zip(&e.docs) {
                add(&mut a.xi, &b.xi);
                add(&mut a.theta, &b.theta);
                add(&mut a.zeta, &b.zeta);
            }
            add(&mut out.hyper.alpha, &h.alpha);
            add(&mut out.hyper.gamma, &h.gamma);
            add_nested(&mut out.hyper.tau, &h.tau);
        }
        let scale = |v: &mut [f64]| v.iter_mut().for_each(|x| *x /= s);
        out.estimates.phi.iter_mut().for_each(|r| scale(r));
        out.estimates.psi.iter_mut().for_each(|c| scale(&mut c.probs));
        for d in &mut out.estimates.docs {
            scale(&mut d.xi);
            scale(&mut d.theta);
            scale(&mut d.zeta);
        }
        scale(&mut out.hyper.alpha);
        scale(&mut out.hyper.gamma);
        out.hyper.tau.iter_mut().for_each(|r| scale(r));
        out
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let avg = self.averaged();
        save_model(dir, &avg.estimates, &self.config, &avg.hyper)?;
        self.vocabulary.write(dir.join("vocab.txt"))?;
        if let Some(h) = &self.hierarchy {
            let path = dir.join("concepts.tsv");
            fs::write(&path, h.to_tsv(&self.vocabulary)).map_err(|e| Error::io(&path, e))?;
        }
        for (s, chain) in self.chains.iter().enumerate() {
            save_model(dir.join(format!("chain-{s}")), &chain.estimates, &self.config, &chain.hyper)?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let config = read_config(&dir.join("config.txt"))?;
        let vocabulary = Vocabulary::read(dir.join("vocab.txt"))?;
        let hierarchy = if config.num_concepts > 0 {
            Some(ConceptHierarchy::load(dir.join("concepts.tsv"), &vocabulary)?)
        } else {
            None
        };
        let index = super::concept_index(&config, hierarchy.as_ref(), vocabulary.len())?;
        let chains = (0..config.chains)
            .map(|s| {
                let (estimates, _, hyper) = load_model(dir.join(format!("chain-{s}")))?;
                Ok(ChainModel { estimates, hyper })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            vocabulary,
            hierarchy,
            index,
            chains,
        })
    }
}

fn add(a: &mut [f64], b: &[f64]) {
    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
}

fn add_nested(a: &mut [Vec<f64>], b: &[Vec<f64>]) {
    a.iter_mut().zip(b).for_each(|(x, y)| add(x, y));
}

fn join(values: &[f64]) -> String {
    let mut out = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{v}");
    }
    out
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn save_model(
    dir: impl AsRef<Path>,
    estimates: &PointEstimates,
    config: &ModelConfig,
    hyper: &Hyperparameters,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut cfg = String::new();
    let _ = writeln!(cfg, "format={FORMAT_NAME}");
    let _ = writeln!(cfg, "version={FORMAT_VERSION}");
    let _ = writeln!(cfg, "model={}", config.kind);
    let _ = writeln!(cfg, "topics={}", config.num_topics);
    let _ = writeln!(cfg, "concepts={}", config.num_concepts);
    let _ = writeln!(cfg, "words={}", estimates.num_words);
    let _ = writeln!(cfg, "iterations={}", config.iterations);
    let _ = writeln!(cfg, "chains={}", config.chains);
    let _ = writeln!(cfg, "beta_phi={}", config.beta_phi);
    let _ = writeln!(cfg, "beta_psi={}", config.beta_psi);
    let _ = writeln!(cfg, "seed={}", config.seed);
    let _ = writeln!(cfg, "optimize_hyperparameters={}", config.optimize_hyperparameters);
    write_file(&dir.join("config.txt"), &cfg)?;

    let mut phi = format!("phi {} {}\n", estimates.phi.len(), estimates.num_words);
    for row in &estimates.phi {
        phi.push_str(&join(row));
        phi.push('\n');
    }
    write_file(&dir.join("phi.txt"), &phi)?;

    let mut psi = format!("psi {}\n", estimates.psi.len());
    for cw in &estimates.psi {
        for (i, (w, p)) in cw.words.iter().zip(&cw.probs).enumerate() {
            if i > 0 {
                psi.push(' ');
            }
            let _ = write!(psi, "{w}:{p}");
        }
        psi.push('\n');
    }
    write_file(&dir.join("psi.txt"), &psi)?;

    let mut hy = format!("alpha {}", hyper.alpha.len());
    for a in &hyper.alpha {
        let _ = write!(hy, " {a}");
    }
    let _ = writeln!(hy, "\ngamma {} {}", hyper.gamma[0], hyper.gamma[1]);
    let _ = writeln!(hy, "tau {}", hyper.tau.len());
    for row in &hyper.tau {
        hy.push_str(&join(row));
        hy.push('\n');
    }
    write_file(&dir.join("hyper.txt"), &hy)?;

    let mut docs = format!("docs {}\noffsets", estimates.docs.len());
    for o in &estimates.option_offsets {
        let _ = write!(docs, " {o}");
    }
    docs.push('\n');
    for d in &estimates.docs {
        let _ = writeln!(docs, "{} | {} | {}", join(&d.xi), join(&d.theta), join(&d.zeta));
    }
    write_file(&dir.join("docs.txt"), &docs)?;
    Ok(())
}

pub fn load_model(dir: impl AsRef<Path>) -> Result<(PointEstimates, ModelConfig, Hyperparameters)> {
    let dir = dir.as_ref();
    let config = read_config(&dir.join("config.txt"))?;
    let words = read_config_map(&dir.join("config.txt"))?
        .get("words")
        .ok_or_else(|| Error::schema("config.txt", "missing key `words`"))?
        .parse::<usize>()
        .map_err(|_| Error::schema("config.txt", "invalid `words`"))?;

    let phi = parse_phi(&read(&dir.join("phi.txt"))?, config.num_topics, words)?;
    let psi = parse_psi(&read(&dir.join("psi.txt"))?)?;
    let hyper = parse_hyper(&read(&dir.join("hyper.txt"))?)?;
    let (option_offsets, docs) = parse_docs(&read(&dir.join("docs.txt"))?)?;
    let estimates = PointEstimates {
        kind: config.kind,
        num_topics: config.num_topics,
        num_words: words,
        phi,
        psi,
        docs,
        option_offsets,
    };
    Ok((estimates, config, hyper))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn read_config_map(path: &Path) -> Result<HashMap<String, String>> {
    let text = read(path)?;
    let mut map = HashMap::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::schema("config.txt", format!("not a key=value line: {line:?}")))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn read_config(path: &Path) -> Result<ModelConfig> {
    let map = read_config_map(path)?;
    let get = |key: &str| -> Result<&str> {
        map.get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::schema("config.txt", format!("missing key `{key}`")))
    };
    fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
        v.parse()
            .map_err(|_| Error::schema("config.txt", format!("invalid value for `{key}`: {v:?}")))
    }
    if get("format")? != FORMAT_NAME {
        return Err(Error::schema("config.txt", format!("unknown format `{}`", get("format")?)));
    }
    let version = get("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version.to_string(),
            expected: FORMAT_VERSION.to_string(),
        });
    }
    let kind: ModelKind = get("model")?
        .parse()
        .map_err(|e: String| Error::schema("config.txt", e))?;
    Ok(ModelConfig {
        kind,
        num_topics: num("topics", get("topics")?)?,
        num_concepts: num("concepts", get("concepts")?)?,
        iterations: num("iterations", get("iterations")?)?,
        chains: num("chains", get("chains")?)?,
        beta_phi: num("beta_phi", get("beta_phi")?)?,
        beta_psi: num("beta_psi", get("beta_psi")?)?,
        seed: num("seed", get("seed")?)?,
        optimize_hyperparameters: num("optimize_hyperparameters", get("optimize_hyperparameters")?)?,
    })
}

fn floats(file: &str, text: &str) -> Result<Vec<f64>> {
    text.split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::schema(file, format!("not a number: {t:?}")))
        })
        .collect()
}

fn header<'a>(file: &str, line: Option<&'a str>, tag: &str) -> Result<Vec<&'a str>> {
    let line = line.ok_or_else(|| Error::schema(file, "missing header"))?;
    let parts: Vec<&str> = line.split_whitespace().collect();
    if parts.first() != Some(&tag) {
        return Err(Error::schema(file, format!("expected `{tag}` header, found {line:?}")));
    }
    Ok(parts[1..].to_vec())
}

fn count(file: &str, s: Option<&&str>) -> Result<usize> {
    s.and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::schema(file, "invalid count in header"))
}

fn parse_phi(text: &str, topics: usize, words: usize) -> Result<Vec<Vec<f64>>> {
    const F: &str = "phi.txt";
    let mut lines = text.lines();
    let h = header(F, lines.next(), "phi")?;
    if count(F, h.first())? != topics || count(F, h.get(1))? != words {
        return Err(Error::schema(F, "dimensions disagree with config.txt"));
    }
    let rows = lines.map(|l| floats(F, l)).collect::<Result<Vec<_>>>()?;
    if rows.len() != topics || rows.iter().any(|r| r.len() != words) {
        return Err(Error::schema(F, "row count or length mismatch"));
    }
    Ok(rows)
}

fn parse_psi(text: &str) -> Result<Vec<ConceptWords>> {
    const F: &str = "psi.txt";
    let mut lines = text.lines();
    let n = count(F, header(F, lines.next(), "psi")?.first())?;
    let rows: Vec<ConceptWords> = lines
        .map(|l| {
            let mut words = Vec::new();
            let mut probs = Vec::new();
            for pair in l.split_whitespace() {
                let (w, p) = pair
                    .split_once(':')
                    .ok_or_else(|| Error::schema(F, format!("expected word:prob, found {pair:?}")))?;
                words.push(w.parse().map_err(|_| Error::schema(F, format!("bad word id {w:?}")))?);
                probs.push(p.parse().map_err(|_| Error::schema(F, format!("bad probability {p:?}")))?);
            }
            Ok(ConceptWords { words, probs })
        })
        .collect::<Result<_>>()?;
    if rows.len() != n {
        return Err(Error::schema(F, format!("expected {n} concepts, found {}", rows.len())));
    }
    Ok(rows)
}

fn parse_hyper(text: &str) -> Result<Hyperparameters> {
    const F: &str = "hyper.txt";
    let mut lines = text.lines();
    let a = header(F, lines.next(), "alpha")?;
    let n = count(F, a.first())?;
    let alpha = floats(F, &a[1..].join(" "))?;
    if alpha.len() != n {
        return Err(Error::schema(F, "alpha length mismatch"));
    }
    let g = floats(F, &header(F, lines.next(), "gamma")?.join(" "))?;
    let gamma: [f64; 2] = g
        .try_into()
        .map_err(|_| Error::schema(F, "gamma needs two values"))?;
    let c = count(F, header(F, lines.next(), "tau")?.first())?;
    let tau = lines.map(|l| floats(F, l)).collect::<Result<Vec<_>>>()?;
    if tau.len() != c {
        return Err(Error::schema(F, "tau row count mismatch"));
    }
    Ok(Hyperparameters { alpha, gamma, tau })
}

fn parse_docs(text: &str) -> Result<(Vec<usize>, Vec<DocDistributions>)> {
    const F: &str = "docs.txt";
    let mut lines = text.lines();
    let n = count(F, header(F, lines.next(), "docs")?.first())?;
    let offsets = header(F, lines.next(), "offsets")?
        .iter()
        .map(|s| s.parse().map_err(|_| Error::schema(F, "bad offset")))
        .collect::<Result<Vec<usize>>>()?;
    let docs = lines
        .map(|l| {
            let parts: Vec<&str> = l.split('|').collect();
            if parts.len() != 3 {
                return Err(Error::schema(F, "document line needs three `|`-separated parts"));
            }
            let xi: [f64; 2] = floats(F, parts[0])?
                .try_into()
                .map_err(|_| Error::schema(F, "xi needs two values"))?;
            Ok(DocDistributions {
                xi,
                theta: floats(F, parts[1])?,
                zeta: floats(F, parts[2])?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if docs.len() != n {
        return Err(Error::schema(F, format!("expected {n} documents, found {}", docs.len())));
    }
    Ok((offsets, docs))
}
