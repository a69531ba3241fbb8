//! Concept hierarchies: loading, validation, word propagation and tree queries.
//!
//! Concept file format, one node per line:
//!
//! ```text
//! concept_id<TAB>parent_id<TAB>name<TAB>comma,separated,words
//! ```
//!
//! The root uses parent id `-1`. Only rooted trees are supported.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::{self, Write as _};
use std::fs;
use std::ops::Range;
use std::path::Path;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};

pub const ROOT_PARENT: &str = "-1";

/// One parsed line of a concept file, words still as strings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConceptRow {
    pub id: String,
    pub parent: Option<String>,
    pub name: String,
    pub words: Vec<String>,
}

pub fn parse_concept_rows(text: &str) -> Result<Vec<ConceptRow>> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::MalformedLine {
                line: lineno + 1,
                reason: format!("expected 4 tab-separated fields, found {}", fields.len()),
            });
        }
        if fields[0].is_empty() {
            return Err(Error::MalformedLine {
                line: lineno + 1,
                reason: "empty concept id".into(),
            });
        }
        let parent = (fields[1] != ROOT_PARENT).then(|| fields[1].to_string());
        let words = fields[3]
            .split(',')
            .map(str::trim)
            .filter(|w| !w.is_empty())
            .map(str::to_string)
            .collect();
        rows.push(ConceptRow {
            id: fields[0].to_string(),
            parent,
            name: fields[2].to_string(),
            words,
        });
    }
    Ok(rows)
}

pub fn read_concept_rows(path: impl AsRef<Path>) -> Result<Vec<ConceptRow>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_concept_rows(&text)
}

/// All distinct words named anywhere in `rows`, in file order.
pub fn concept_word_collection(rows: &[ConceptRow]) -> Vec<String> {
    let mut seen = HashSet::new();
    rows.iter()
        .flat_map(|r| r.words.iter())
        .filter(|w| seen.insert(w.as_str()))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConceptNode {
    pub id: String,
    pub name: String,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub words: BTreeSet<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Warning,
    Fatal,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    pub severity: Severity,
    pub message: String,
}

impl Finding {
    pub fn warning(message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Warning,
            message: message.into(),
        }
    }

    pub fn fatal(message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Fatal,
            message: message.into(),
        }
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Warning => "warning",
            Severity::Fatal => "fatal",
        };
        write!(f, "{tag}: {}", self.message)
    }
}

/// A validated rooted tree of concepts. Nodes keep file order; indices into
/// `nodes` are the concept numbers used throughout the models.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConceptHierarchy {
    nodes: Vec<ConceptNode>,
    root: usize,
    by_id: HashMap<String, usize>,
}

impl ConceptHierarchy {
    pub fn load(path: impl AsRef<Path>, vocabulary: &Vocabulary) -> Result<Self> {
        Self::from_rows(&read_concept_rows(path)?, vocabulary)
    }

    pub fn parse(text: &str, vocabulary: &Vocabulary) -> Result<Self> {
        Self::from_rows(&parse_concept_rows(text)?, vocabulary)
    }

    /// Validates the tree structure and maps words onto `vocabulary`,
    /// silently dropping words the vocabulary lacks.
    pub fn from_rows(rows: &[ConceptRow], vocabulary: &Vocabulary) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyHierarchy);
        }
        let mut by_id = HashMap::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            if by_id.insert(row.id.clone(), i).is_some() {
                return Err(Error::DuplicateConceptId(row.id.clone()));
            }
        }
        let mut parents = Vec::with_capacity(rows.len());
        let mut root: Option<usize> = None;
        for (i, row) in rows.iter().enumerate() {
            match &row.parent {
                None => {
                    if let Some(r) = root {
                        return Err(Error::MultipleRoots(rows[r].id.clone(), row.id.clone()));
                    }
                    root = Some(i);
                    parents.push(None);
                }
                Some(p) => match by_id.get(p) {
                    Some(&pi) => parents.push(Some(pi)),
                    None => {
                        return Err(Error::MissingParent {
                            child: row.id.clone(),
                            parent: p.clone(),
                        })
                    }
                },
            }
        }
        check_acyclic(&parents, rows)?;
        let root = match root {
            Some(r) => r,
            // a finite parent map without a root must contain a cycle
            None => return Err(Error::CycleDetected(rows[0].id.clone())),
        };
        let mut nodes: Vec<ConceptNode> = rows
            .iter()
            .zip(&parents)
            .map(|(row, &parent)| ConceptNode {
                id: row.id.clone(),
                name: row.name.clone(),
                parent,
                children: Vec::new(),
                words: row.words.iter().filter_map(|w| vocabulary.id(w)).collect(),
            })
            .collect();
        for (i, p) in parents.iter().enumerate() {
            if let Some(p) = *p {
                nodes[p].children.push(i);
            }
        }
        Ok(Self { nodes, root, by_id })
    }

    /// Builds a hierarchy directly from parent links and word sets. Used by
    /// the synthetic generator and tests.
    pub fn from_parts(
        ids: Vec<String>,
        names: Vec<String>,
        parents: Vec<Option<usize>>,
        words: Vec<BTreeSet<u32>>,
    ) -> Result<Self> {
        let rows: Vec<ConceptRow> = ids
            .iter()
            .zip(&names)
            .zip(&parents)
            .map(|((id, name), p)| ConceptRow {
                id: id.clone(),
                parent: p.map(|p| ids[p].clone()),
                name: name.clone(),
                words: Vec::new(),
            })
            .collect();
        let mut h = Self::from_rows(&rows, &Vocabulary::new())?;
        for (node, w) in h.nodes.iter_mut().zip(words) {
            node.words = w;
        }
        Ok(h)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn nodes(&self) -> &[ConceptNode] {
        &self.nodes
    }

    pub fn node(&self, c: usize) -> &ConceptNode {
        &self.nodes[c]
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.by_id
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownConcept(id.to_string()))
    }

    fn check(&self, c: usize) -> Result<()> {
        if c < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::UnknownConcept(c.to_string()))
        }
    }

    /// Unions every node's words with those of all its descendants.
    pub fn propagate_words_upward(&mut self) {
        for c in self.post_order() {
            if let Some(p) = self.nodes[c].parent {
                let child_words = std::mem::take(&mut self.nodes[c].words);
                self.nodes[p].words.extend(child_words.iter().copied());
                self.nodes[c].words = child_words;
            }
        }
    }

    pub fn propagated(&self) -> Self {
        let mut h = self.clone();
        h.propagate_words_upward();
        h
    }

    /// Nodes ordered so every child precedes its parent.
    pub fn post_order(&self) -> Vec<usize> {
        let mut order = self.pre_order();
        order.reverse();
        order
    }

    /// Nodes ordered so every parent precedes its children.
    pub fn pre_order(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![self.root];
        while let Some(c) = stack.pop() {
            order.push(c);
            stack.extend(self.nodes[c].children.iter().rev().copied());
        }
        order
    }

    pub fn depth(&self, c: usize) -> usize {
        let mut depth = 0;
        let mut cur = c;
        while let Some(p) = self.nodes[cur].parent {
            depth += 1;
            cur = p;
        }
        depth
    }

    pub fn max_depth(&self) -> usize {
        (0..self.len()).map(|c| self.depth(c)).max().unwrap_or(0)
    }

    /// `[root, ..., c]`.
    pub fn path_to_root(&self, c: usize) -> Result<Vec<usize>> {
        self.check(c)?;
        let mut path = vec![c];
        let mut cur = c;
        while let Some(p) = self.nodes[cur].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        Ok(path)
    }

    /// Number of edges on the tree path between `a` and `b`.
    pub fn tree_distance(&self, a: usize, b: usize) -> Result<usize> {
        self.check(a)?;
        self.check(b)?;
        let (mut a, mut b) = (a, b);
        let (mut da, mut db) = (self.depth(a), self.depth(b));
        let mut dist = 0;
        while da > db {
            a = self.nodes[a].parent.expect("depth > 0 implies a parent");
            da -= 1;
            dist += 1;
        }
        while db > da {
            b = self.nodes[b].parent.expect("depth > 0 implies a parent");
            db -= 1;
            dist += 1;
        }
        while a != b {
            a = self.nodes[a].parent.expect("distinct nodes below the root");
            b = self.nodes[b].parent.expect("distinct nodes below the root");
            dist += 2;
        }
        Ok(dist)
    }

    /// Non-fatal structural diagnostics: concepts left without words.
    pub fn findings(&self) -> Vec<Finding> {
        self.nodes
            .iter()
            .filter(|n| n.words.is_empty())
            .map(|n| Finding::warning(format!("concept `{}` ({}) has no in-vocabulary words", n.id, n.name)))
            .collect()
    }

    /// Every word id that belongs to at least one concept.
    pub fn covered_words(&self) -> BTreeSet<u32> {
        self.nodes.iter().flat_map(|n| n.words.iter().copied()).collect()
    }

    pub fn to_tsv(&self, vocabulary: &Vocabulary) -> String {
        let mut out = String::new();
        for node in &self.nodes {
            let parent = node.parent.map_or(ROOT_PARENT, |p| self.nodes[p].id.as_str());
            let _ = write!(out, "{}\t{}\t{}\t", node.id, parent, node.name);
            for (i, &w) in node.words.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(vocabulary.word(w));
            }
            out.push('\n');
        }
        out
    }
}

fn check_acyclic(parents: &[Option<usize>], rows: &[ConceptRow]) -> Result<()> {
    // 0 = unvisited, 1 = on current walk, 2 = known to reach the root
    let mut state = vec![0u8; parents.len()];
    for start in 0..parents.len() {
        let mut walk = Vec::new();
        let mut cur = Some(start);
        while let Some(c) = cur {
            match state[c] {
                2 => break,
                1 => return Err(Error::CycleDetected(rows[c].id.clone())),
                _ => {
                    state[c] = 1;
                    walk.push(c);
                    cur = parents[c];
                }
            }
        }
        for c in walk {
            state[c] = 2;
        }
    }
    Ok(())
}

/// Flattened, sampler-friendly view of a hierarchy over a fixed vocabulary.
///
/// Each concept `c` owns a block of option slots `options(c)`: one per child in
/// order, then the exit slot. Concept word sets are stored as sorted member
/// lists; `members(c)` covers slots `member_range(c)` of every per-member array.
#[derive(Debug, Clone)]
pub struct ConceptIndex {
    root: usize,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    child_slot: Vec<usize>,
    option_offset: Vec<usize>,
    admissible: Vec<bool>,
    member_offset: Vec<usize>,
    members: Vec<u32>,
    by_word: Vec<Vec<(u32, u32)>>,
    names: Vec<String>,
}

impl ConceptIndex {
    pub fn new(h: &ConceptHierarchy, vocab_size: usize) -> Self {
        let n = h.len();
        let parent: Vec<Option<usize>> = h.nodes.iter().map(|nd| nd.parent).collect();
        let children: Vec<Vec<usize>> = h.nodes.iter().map(|nd| nd.children.clone()).collect();
        let mut option_offset = Vec::with_capacity(n + 1);
        let mut total = 0;
        for ch in &children {
            option_offset.push(total);
            total += ch.len() + 1;
        }
        option_offset.push(total);

        let mut child_slot = vec![usize::MAX; n];
        for (p, ch) in children.iter().enumerate() {
            for (k, &c) in ch.iter().enumerate() {
                child_slot[c] = option_offset[p] + k;
            }
        }

        // a subtree is reachable-worthwhile iff some node in it has words
        let mut subtree_words = vec![false; n];
        for c in h.post_order() {
            subtree_words[c] =
                !h.nodes[c].words.is_empty() || children[c].iter().any(|&k| subtree_words[k]);
        }
        let mut admissible = vec![false; total];
        for c in 0..n {
            for (k, &ch) in children[c].iter().enumerate() {
                admissible[option_offset[c] + k] = subtree_words[ch];
            }
            admissible[option_offset[c + 1] - 1] = !h.nodes[c].words.is_empty();
        }

        let mut member_offset = Vec::with_capacity(n + 1);
        let mut members = Vec::new();
        let mut by_word = vec![Vec::new(); vocab_size];
        for (c, node) in h.nodes.iter().enumerate() {
            member_offset.push(members.len());
            for &w in &node.words {
                by_word[w as usize].push((c as u32, members.len() as u32));
                members.push(w);
            }
        }
        member_offset.push(members.len());

        Self {
            root: h.root,
            parent,
            children,
            child_slot,
            option_offset,
            admissible,
            member_offset,
            members,
            by_word,
            names: h.nodes.iter().map(|nd| nd.name.clone()).collect(),
        }
    }

    pub fn num_concepts(&self) -> usize {
        self.parent.len()
    }

    pub fn num_options(&self) -> usize {
        self.admissible.len()
    }

    pub fn num_members(&self) -> usize {
        self.members.len()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn parent(&self, c: usize) -> Option<usize> {
        self.parent[c]
    }

    pub fn children(&self, c: usize) -> &[usize] {
        &self.children[c]
    }

    pub fn name(&self, c: usize) -> &str {
        &self.names[c]
    }

    /// Option slots of `c`: children in order, then exit.
    pub fn options(&self, c: usize) -> Range<usize> {
        self.option_offset[c]..self.option_offset[c + 1]
    }

    pub fn option_offsets(&self) -> &[usize] {
        &self.option_offset
    }

    pub fn exit_slot(&self, c: usize) -> usize {
        self.option_offset[c + 1] - 1
    }

    /// Slot in the parent's option block that leads to `c`; `None` for the root.
    pub fn slot_from_parent(&self, c: usize) -> Option<usize> {
        self.parent[c].map(|_| self.child_slot[c])
    }

    /// False for options that can never produce a word (empty subtree or an
    /// exit from a concept without words).
    pub fn is_admissible(&self, slot: usize) -> bool {
        self.admissible[slot]
    }

    pub fn member_range(&self, c: usize) -> Range<usize> {
        self.member_offset[c]..self.member_offset[c + 1]
    }

    pub fn member_offsets(&self) -> &[usize] {
        &self.member_offset
    }

    pub fn members(&self, c: usize) -> &[u32] {
        &self.members[self.member_range(c)]
    }

    pub fn concept_size(&self, c: usize) -> usize {
        self.member_offset[c + 1] - self.member_offset[c]
    }

    /// `(concept, member slot)` for every concept containing `word`.
    pub fn concepts_of(&self, word: u32) -> &[(u32, u32)] {
        &self.by_word[word as usize]
    }

    /// Member slot of `word` in concept `c`.
    pub fn member_slot(&self, c: usize, word: u32) -> Option<usize> {
        let range = self.member_range(c);
        self.members[range.clone()]
            .binary_search(&word)
            .ok()
            .map(|p| range.start + p)
    }

    /// `[root, ..., c]`.
    pub fn path(&self, c: usize) -> Vec<usize> {
        let mut path = vec![c];
        let mut cur = c;
        while let Some(p) = self.parent[cur] {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }
}
