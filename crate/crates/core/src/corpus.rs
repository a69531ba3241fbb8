//! Documents, vocabularies and the corpus file format.
//!
//! A corpus file holds one document per line:
//!
//! ```text
//! doc_id<TAB>genre<TAB>space separated tokens
//! ```
//!
//! The genre field may be empty. Input is expected to be tokenized already;
//! no case folding or stemming happens here.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::seeded;

/// Ordered word list with reverse lookup. Word ids are positions in the list.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a vocabulary from words in order; repeated words keep their first id.
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Self::new();
        for w in words {
            vocab.insert(w.into());
        }
        vocab
    }

    /// Returns the id of `word`, adding it if absent.
    pub fn insert(&mut self, word: String) -> u32 {
        if let Some(&id) = self.index.get(&word) {
            return id;
        }
        let id = self.words.len() as u32;
        self.index.insert(word.clone(), id);
        self.words.push(word);
        id
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: u32) -> &str {
        &self.words[id as usize]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Reads a vocabulary file: one word per line, line number is the id.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut vocab = Self::new();
        for (lineno, line) in text.lines().enumerate() {
            let word = line.trim_end_matches('\r');
            if word.is_empty() || word.contains(char::is_whitespace) {
                return Err(Error::MalformedLine {
                    line: lineno + 1,
                    reason: format!("invalid vocabulary entry {word:?}"),
                });
            }
            if vocab.id(word).is_some() {
                return Err(Error::MalformedLine {
                    line: lineno + 1,
                    reason: format!("duplicate vocabulary entry {word:?}"),
                });
            }
            vocab.insert(word.to_string());
        }
        Ok(vocab)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        for w in &self.words {
            out.push_str(w);
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub genre: Option<String>,
    /// In-vocabulary word ids, in text order.
    pub tokens: Vec<u32>,
    /// Original tokens including out-of-vocabulary ones, kept for display.
    pub raw_tokens: Option<Vec<String>>,
}

impl Document {
    pub fn new(id: impl Into<String>, genre: Option<String>, tokens: Vec<u32>) -> Self {
        Self {
            id: id.into(),
            genre,
            tokens,
            raw_tokens: None,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub vocabulary: Vocabulary,
}

/// How concept word lists combine with corpus words when building a vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VocabularyMode {
    /// Words in the corpus and in every concept collection.
    Intersection,
    /// Corpus words followed by any concept words not already present.
    Union,
    CorpusOnly,
}

impl std::str::FromStr for VocabularyMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "intersection" => Ok(Self::Intersection),
            "union" => Ok(Self::Union),
            "corpus-only" => Ok(Self::CorpusOnly),
            other => Err(format!("unknown vocabulary mode `{other}`")),
        }
    }
}

impl Corpus {
    pub fn new(documents: Vec<Document>, vocabulary: Vocabulary) -> Self {
        Self {
            documents,
            vocabulary,
        }
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn num_tokens(&self) -> usize {
        self.documents.iter().map(Document::len).sum()
    }

    /// Reads a corpus file. With `vocabulary` given, tokens outside it are kept
    /// only in `raw_tokens`; otherwise the vocabulary is built from the file in
    /// first-occurrence order.
    pub fn read(path: impl AsRef<Path>, vocabulary: Option<&Vocabulary>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, vocabulary)
    }

    pub fn parse(text: &str, vocabulary: Option<&Vocabulary>) -> Result<Self> {
        let mut vocab = vocabulary.cloned().unwrap_or_default();
        let mut seen = HashSet::new();
        let mut documents = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::MalformedLine {
                    line: lineno + 1,
                    reason: format!("expected 3 tab-separated fields, found {}", fields.len()),
                });
            }
            let id = fields[0].to_string();
            if id.is_empty() {
                return Err(Error::MalformedLine {
                    line: lineno + 1,
                    reason: "empty document id".into(),
                });
            }
            if !seen.insert(id.clone()) {
                return Err(Error::DuplicateDocId(id));
            }
            let genre = (!fields[1].is_empty()).then(|| fields[1].to_string());
            let raw: Vec<String> = fields[2].split_whitespace().map(str::to_string).collect();
            let tokens = raw
                .iter()
                .filter_map(|w| match vocabulary {
                    Some(v) => v.id(w),
                    None => Some(vocab.insert(w.clone())),
                })
                .collect();
            documents.push(Document {
                id,
                genre,
                tokens,
                raw_tokens: Some(raw),
            });
        }
        if documents.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        Ok(Self::new(documents, vocab))
    }

    /// Serializes in the corpus file format using in-vocabulary tokens only.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for doc in &self.documents {
            let _ = write!(out, "{}\t{}\t", doc.id, doc.genre.as_deref().unwrap_or(""));
            for (i, &t) in doc.tokens.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                out.push_str(self.vocabulary.word(t));
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    /// Remaps every document onto `vocabulary`, dropping tokens it lacks.
    pub fn restrict_to(&self, vocabulary: &Vocabulary) -> Corpus {
        let documents = self
            .documents
            .iter()
            .map(|doc| {
                let tokens = doc
                    .tokens
                    .iter()
                    .filter_map(|&t| vocabulary.id(self.vocabulary.word(t)))
                    .collect();
                let raw = doc.raw_tokens.clone().unwrap_or_else(|| {
                    doc.tokens
                        .iter()
                        .map(|&t| self.vocabulary.word(t).to_string())
                        .collect()
                });
                Document {
                    id: doc.id.clone(),
                    genre: doc.genre.clone(),
                    tokens,
                    raw_tokens: Some(raw),
                }
            })
            .collect();
        Corpus::new(documents, vocabulary.clone())
    }

    /// Documents whose genre equals `genre`.
    pub fn filter_genre(&self, genre: &str) -> Corpus {
        let documents = self
            .documents
            .iter()
            .filter(|d| d.genre.as_deref() == Some(genre))
            .cloned()
            .collect();
        Corpus::new(documents, self.vocabulary.clone())
    }
}

/// Builds a vocabulary from corpus words and concept word collections.
///
/// Each entry of `concept_word_sets` is one concept collection (all words of
/// one concept set). Corpus words keep their corpus order; in union mode the
/// extra concept words follow in collection order.
pub fn build_vocabulary(
    corpus: &Corpus,
    concept_word_sets: &[Vec<String>],
    mode: VocabularyMode,
) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let corpus_words = corpus_word_order(corpus);
    let vocab = match mode {
        VocabularyMode::CorpusOnly => Vocabulary::from_words(corpus_words),
        VocabularyMode::Union => {
            let extra = concept_word_sets.iter().flatten().map(String::as_str);
            Vocabulary::from_words(corpus_words.into_iter().chain(extra))
        }
        VocabularyMode::Intersection => {
            let sets: Vec<HashSet<&str>> = concept_word_sets
                .iter()
                .map(|ws| ws.iter().map(String::as_str).collect())
                .collect();
            Vocabulary::from_words(
                corpus_words
                    .into_iter()
                    .filter(|w| sets.iter().all(|s| s.contains(w))),
            )
        }
    };
    if vocab.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    Ok(vocab)
}

/// Distinct corpus words in order of first occurrence (raw tokens when kept).
fn corpus_word_order(corpus: &Corpus) -> Vec<&str> {
    let mut seen = HashSet::new();
    let mut order = Vec::new();
    for doc in &corpus.documents {
        match &doc.raw_tokens {
            Some(raw) => {
                for w in raw {
                    if seen.insert(w.as_str()) {
                        order.push(w.as_str());
                    }
                }
            }
            None => {
                for &t in &doc.tokens {
                    let w = corpus.vocabulary.word(t);
                    if seen.insert(w) {
                        order.push(w);
                    }
                }
            }
        }
    }
    order
}

/// Random document-level split into `(train, test)`.
///
/// The train part holds `round(train_fraction * D)` documents; both parts keep
/// the original document order.
pub fn split_train_test(corpus: &Corpus, train_fraction: f64, seed: u64) -> Result<(Corpus, Corpus)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidFraction(train_fraction));
    }
    let n = corpus.len();
    let n_train = (train_fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded(seed));
    let mut in_train = vec![false; n];
    for &i in &order[..n_train] {
        in_train[i] = true;
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (doc, keep) in corpus.documents.iter().zip(in_train) {
        if keep {
            train.push(doc.clone());
        } else {
            test.push(doc.clone());
        }
    }
    Ok((
        Corpus::new(train, corpus.vocabulary.clone()),
        Corpus::new(test, corpus.vocabulary.clone()),
    ))
}

/// Random token-level split of one document into `(fold_in, eval)` halves.
///
/// The fold-in half receives `ceil(foldin_fraction * N_d)` tokens. Both halves
/// keep the original relative order.
pub fn split_document_words(doc: &Document, foldin_fraction: f64, seed: u64) -> (Document, Document) {
    let fraction = foldin_fraction.clamp(0.0, 1.0);
    let n = doc.len();
    let n_fold = ((fraction * n as f64).ceil() as usize).min(n);
    let mut positions: Vec<usize> = (0..n).collect();
    positions.shuffle(&mut seeded(seed));
    let mut in_fold = vec![false; n];
    for &p in &positions[..n_fold] {
        in_fold[p] = true;
    }
    let (mut fold, mut eval) = (Vec::with_capacity(n_fold), Vec::with_capacity(n - n_fold));
    for (&t, f) in doc.tokens.iter().zip(in_fold) {
        if f {
            fold.push(t);
        } else {
            eval.push(t);
        }
    }
    (
        Document::new(doc.id.clone(), doc.genre.clone(), fold),
        Document::new(doc.id.clone(), doc.genre.clone(), eval),
    )
}
