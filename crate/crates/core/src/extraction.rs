//! Analogy extraction from definition graphs.
//!
//! For every pair of senses from distinct words, both definitions are
//! expanded, compared, and when they differ in exactly one concept node the
//! two `(word, concept)` pairs form a [`ConceptAnalogy`]. The left concept is
//! then expanded into synonym words (one [`Analogy`] each) and the right
//! concept into the answer synset. Words must be common and concepts must
//! sit under the concrete taxonomy root at every step.
//!
//! Sense pairs are not enumerated exhaustively. Two graphs that differ in
//! one node become isomorphic once that node is masked on both sides, so
//! each graph is indexed under one masked structure key per label node and
//! only graphs sharing a key are compared.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::{self, Write as _};
use std::io::{self, BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{VerdictBook, VerdictPolicy};
use crate::defparser::{ConceptId, DefGraph, DefNode, NodeId};
use crate::lexicon::{FrequencyTable, Lexicon, Sense, Taxonomy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    /// Words and concepts must lie under this concept. `None` disables the
    /// filter.
    pub concrete_root: Option<ConceptId>,
    pub min_freq: u64,
    pub expansion_depth_limit: usize,
    /// Compare function arguments as a multiset instead of by position.
    pub unordered_function_args: bool,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            concrete_root: Some(ConceptId::new("physical", "物質").expect("valid concept")),
            min_freq: 5,
            expansion_depth_limit: 8,
            unordered_function_args: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CompareOptions {
    pub unordered_function_args: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cost {
    Zero,
    /// Exactly one differing pair of label nodes.
    One(NodeId, NodeId),
    Many,
}

impl Cost {
    fn plus(self, other: Cost) -> Cost {
        match (self, other) {
            (Cost::Zero, x) | (x, Cost::Zero) => x,
            _ => Cost::Many,
        }
    }
}

struct Matcher<'a> {
    graphs: [&'a DefGraph; 2],
    adj: [Vec<Vec<usize>>; 2],
    keys: [Vec<String>; 2],
    unordered_args: bool,
}

struct Children<'a> {
    attrs: BTreeMap<&'a str, Vec<NodeId>>,
    args: Vec<(usize, NodeId)>,
}

impl<'a> Matcher<'a> {
    fn new(g1: &'a DefGraph, g2: &'a DefGraph, opts: CompareOptions) -> Self {
        let adj = [g1.adjacency(), g2.adjacency()];
        let keys = [
            (0..g1.node_count())
                .map(|n| g1.subtree_key(&adj[0], n, opts.unordered_function_args, None))
                .collect(),
            (0..g2.node_count())
                .map(|n| g2.subtree_key(&adj[1], n, opts.unordered_function_args, None))
                .collect(),
        ];
        Matcher {
            graphs: [g1, g2],
            adj,
            keys,
            unordered_args: opts.unordered_function_args,
        }
    }

    fn children(&self, side: usize, node: NodeId) -> Children<'a> {
        let g = self.graphs[side];
        let mut attrs: BTreeMap<&'a str, Vec<NodeId>> = BTreeMap::new();
        let mut args = Vec::new();
        for &e in &self.adj[side][node] {
            let (_, edge, child) = &g.edges()[e];
            match edge {
                crate::defparser::DefEdge::Attribute(label) => {
                    attrs.entry(label.as_str()).or_default().push(*child)
                }
                crate::defparser::DefEdge::Arg(i) => args.push((*i, *child)),
            }
        }
        args.sort_unstable();
        Children { attrs, args }
    }

    /// Minimum number of differing label nodes over all structure-preserving
    /// correspondences between the two subtrees, saturating at two.
    fn cost(&self, u: NodeId, v: NodeId) -> Cost {
        use DefNode::*;
        let local = match (self.graphs[0].node(u), self.graphs[1].node(v)) {
            (Concept(a), Concept(b)) if a == b => Cost::Zero,
            (Word(a), Word(b)) if a == b => Cost::Zero,
            (Concept(_) | Word(_), Concept(_) | Word(_)) => Cost::One(u, v),
            (Function(a), Function(b)) if a == b => Cost::Zero,
            (SelfRef, SelfRef) => Cost::Zero,
            _ => return Cost::Many,
        };
        let left = self.children(0, u);
        let right = self.children(1, v);
        if left.args.len() != right.args.len()
            || left.attrs.len() != right.attrs.len()
            || left
                .attrs
                .iter()
                .zip(&right.attrs)
                .any(|((la, a), (lb, b))| la != lb || a.len() != b.len())
        {
            return Cost::Many;
        }
        let mut total = local;
        for (a, b) in left.attrs.values().zip(right.attrs.values()) {
            total = total.plus(self.group_cost(a, b));
            if total == Cost::Many {
                return total;
            }
        }
        if self.unordered_args {
            let a: Vec<NodeId> = left.args.iter().map(|x| x.1).collect();
            let b: Vec<NodeId> = right.args.iter().map(|x| x.1).collect();
            total = total.plus(self.group_cost(&a, &b));
        } else {
            for (a, b) in left.args.iter().zip(&right.args) {
                total = total.plus(self.cost(a.1, b.1));
                if total == Cost::Many {
                    return total;
                }
            }
        }
        total
    }

    /// Cost of the best bijection between two equally sized sibling groups.
    ///
    /// Isomorphic subtrees pair up at zero cost, so a bijection of cost at
    /// most one exists only if the subtree-key multisets differ in at most
    /// one element per side.
    fn group_cost(&self, a: &[NodeId], b: &[NodeId]) -> Cost {
        if let ([x], [y]) = (a, b) {
            return self.cost(*x, *y);
        }
        let mut balance: HashMap<&str, i64> = HashMap::new();
        for &x in a {
            *balance.entry(self.keys[0][x].as_str()).or_default() += 1;
        }
        for &y in b {
            *balance.entry(self.keys[1][y].as_str()).or_default() -= 1;
        }
        let surplus: Vec<(&str, i64)> = balance.into_iter().filter(|(_, n)| *n != 0).collect();
        match surplus.as_slice() {
            [] => Cost::Zero,
            [(k1, n1), (k2, n2)] if n1.abs() == 1 && n2.abs() == 1 && n1 + n2 == 0 => {
                let (ka, kb) = if *n1 > 0 { (*k1, *k2) } else { (*k2, *k1) };
                let x = a.iter().find(|&&x| self.keys[0][x] == ka).copied();
                let y = b.iter().find(|&&y| self.keys[1][y] == kb).copied();
                match (x, y) {
                    (Some(x), Some(y)) => self.cost(x, y),
                    _ => Cost::Many,
                }
            }
            _ => Cost::Many,
        }
    }
}

/// Node ids of the single differing concept pair, if `g1` and `g2` differ in
/// exactly one concept node.
pub fn diff_nodes(g1: &DefGraph, g2: &DefGraph, opts: CompareOptions) -> Option<(NodeId, NodeId)> {
    if g1.validate().is_err() || g2.validate().is_err() {
        return None;
    }
    let matcher = Matcher::new(g1, g2, opts);
    match matcher.cost(g1.root(), g2.root()) {
        Cost::One(u, v) => match (g1.node(u), g2.node(v)) {
            (DefNode::Concept(_), DefNode::Concept(_)) => Some((u, v)),
            _ => None,
        },
        _ => None,
    }
}

/// The differing concepts when the graphs have the same shape and differ in
/// exactly one concept node.
pub fn compare_graphs(g1: &DefGraph, g2: &DefGraph) -> Option<(ConceptId, ConceptId)> {
    compare_graphs_with(g1, g2, CompareOptions::default())
}

pub fn compare_graphs_with(
    g1: &DefGraph,
    g2: &DefGraph,
    opts: CompareOptions,
) -> Option<(ConceptId, ConceptId)> {
    let (u, v) = diff_nodes(g1, g2, opts)?;
    Some((g1.node(u).concept()?.clone(), g2.node(v).concept()?.clone()))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExpansionError {
    #[error("expansion cycle: {}", render_chain(.0))]
    Cycle(Vec<ConceptId>),
}

fn render_chain(chain: &[ConceptId]) -> String {
    chain
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(" -> ")
}

/// Replaces a single-concept definition by the concept's own definition,
/// repeatedly, up to `limit` replacements.
pub fn expand_definition(
    sense: &Sense,
    lex: &Lexicon,
    limit: usize,
) -> Result<DefGraph, ExpansionError> {
    let mut graph = &sense.definition;
    let mut seen: Vec<ConceptId> = Vec::new();
    for _ in 0..limit {
        let Some(concept) = graph.single_concept() else {
            break;
        };
        let Some(def) = lex.concept(concept).and_then(|e| e.definition.as_ref()) else {
            break;
        };
        if seen.contains(concept) {
            seen.push(concept.clone());
            return Err(ExpansionError::Cycle(seen));
        }
        seen.push(concept.clone());
        graph = def;
    }
    Ok(graph.clone())
}

/// One side of a concept analogy.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SenseRef {
    pub word: String,
    pub sense_index: u32,
    pub concept: ConceptId,
}

/// `left.word : left.concept = right.word : right.concept`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConceptAnalogy {
    pub left: SenseRef,
    pub right: SenseRef,
}

/// `w1 : w2 = w3 : synset`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Analogy {
    pub w1: String,
    pub w2: String,
    pub w3: String,
    pub synset: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalogyError {
    #[error("w1 and w2 are both {0:?}")]
    SameWord(String),
    #[error("w3 {0:?} repeats a question word")]
    RepeatedWord(String),
    #[error("empty synset")]
    EmptySynset,
}

impl Analogy {
    /// Validates the question words and sorts/deduplicates the synset.
    pub fn new(
        w1: impl Into<String>,
        w2: impl Into<String>,
        w3: impl Into<String>,
        synset: impl IntoIterator<Item = String>,
    ) -> Result<Self, AnalogyError> {
        let (w1, w2, w3) = (w1.into(), w2.into(), w3.into());
        if w1 == w2 {
            return Err(AnalogyError::SameWord(w1));
        }
        if w3 == w1 || w3 == w2 {
            return Err(AnalogyError::RepeatedWord(w3));
        }
        let synset: Vec<String> = synset.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        if synset.is_empty() {
            return Err(AnalogyError::EmptySynset);
        }
        Ok(Analogy { w1, w2, w3, synset })
    }
}

impl fmt::Display for Analogy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}={}:{{{}}}",
            self.w1,
            self.w2,
            self.w3,
            self.synset.join(",")
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedSense {
    pub word: String,
    pub sense_index: u32,
    pub reason: String,
    /// Candidate partners this sense was never compared with.
    pub pairs_skipped: usize,
}

/// Counts per pipeline stage.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub senses_total: usize,
    pub senses_rare: usize,
    pub senses_single_node: usize,
    pub senses_abstract: usize,
    pub candidate_senses: usize,
    /// Concept analogies found by graph comparison.
    pub concept_candidates: usize,
    /// After the concrete-concept and common-word filters.
    pub post_filter: usize,
    pub post_verdict: usize,
    pub analogies: usize,
    pub skipped: Vec<SkippedSense>,
}

impl ExtractionReport {
    pub fn write<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "senses_total\t{}", self.senses_total)?;
        writeln!(out, "senses_rare\t{}", self.senses_rare)?;
        writeln!(out, "senses_single_node\t{}", self.senses_single_node)?;
        writeln!(out, "senses_abstract\t{}", self.senses_abstract)?;
        writeln!(out, "candidate_senses\t{}", self.candidate_senses)?;
        writeln!(out, "concept_candidates\t{}", self.concept_candidates)?;
        writeln!(out, "post_filter\t{}", self.post_filter)?;
        writeln!(out, "post_verdict\t{}", self.post_verdict)?;
        writeln!(out, "final\t{}", self.analogies)?;
        writeln!(out, "skipped_senses\t{}", self.skipped.len())?;
        for s in &self.skipped {
            writeln!(
                out,
                "skip\t{}#{}\t{}\tpairs={}",
                s.word, s.sense_index, s.reason, s.pairs_skipped
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExtractionOutput {
    pub analogies: Vec<Analogy>,
    /// Concept analogies that passed the filters, before verdicts.
    pub concept_analogies: Vec<ConceptAnalogy>,
    pub report: ExtractionReport,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractionError {
    #[error("concrete root {0} is not in the taxonomy")]
    UnknownConcreteRoot(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

struct Candidate<'a> {
    sense: &'a Sense,
    graph: DefGraph,
}

struct Filters<'a> {
    tax: &'a Taxonomy,
    freq: &'a FrequencyTable,
    cfg: &'a ExtractionConfig,
}

impl Filters<'_> {
    fn concrete(&self, c: &ConceptId) -> bool {
        match &self.cfg.concrete_root {
            None => true,
            Some(root) => self.tax.is_under(c, root).unwrap_or(false),
        }
    }

    fn common(&self, w: &str) -> bool {
        self.freq.is_common(w, self.cfg.min_freq)
    }

    /// Synonym words of `c` that pass both filters.
    fn synonyms(&self, lex: &Lexicon, c: &ConceptId) -> Vec<String> {
        if !self.concrete(c) {
            return Vec::new();
        }
        lex.synset_of(c)
            .into_iter()
            .filter(|w| self.common(w))
            .collect()
    }
}

/// Runs the full extraction pipeline.
pub fn extract_analogies(
    lex: &Lexicon,
    tax: &Taxonomy,
    freq: &FrequencyTable,
    cfg: &ExtractionConfig,
    verdicts: Option<(&VerdictBook, &VerdictPolicy)>,
) -> Result<ExtractionOutput, ExtractionError> {
    if cfg.expansion_depth_limit == 0 {
        return Err(ExtractionError::Config(
            "expansion_depth_limit must be at least 1".into(),
        ));
    }
    if let Some(root) = &cfg.concrete_root {
        if !tax.contains(root) {
            return Err(ExtractionError::UnknownConcreteRoot(root.to_string()));
        }
    }
    let filters = Filters { tax, freq, cfg };
    let opts = CompareOptions {
        unordered_function_args: cfg.unordered_function_args,
    };
    let mut report = ExtractionReport::default();

    let mut candidates = Vec::new();
    let mut failed = Vec::new();
    for sense in lex.senses() {
        report.senses_total += 1;
        if !filters.common(&sense.word) {
            report.senses_rare += 1;
            continue;
        }
        let graph = match expand_definition(sense, lex, cfg.expansion_depth_limit) {
            Ok(g) => g,
            Err(e) => {
                failed.push((sense, e.to_string()));
                continue;
            }
        };
        if graph.node_count() < 2 {
            report.senses_single_node += 1;
            continue;
        }
        let head_ok = graph
            .root_node()
            .concept()
            .is_some_and(|c| filters.concrete(c));
        if !head_ok {
            report.senses_abstract += 1;
            continue;
        }
        candidates.push(Candidate { sense, graph });
    }
    report.candidate_senses = candidates.len();
    report.skipped = failed
        .into_iter()
        .map(|(sense, reason)| SkippedSense {
            word: sense.word.clone(),
            sense_index: sense.sense_index,
            reason,
            pairs_skipped: candidates
                .iter()
                .filter(|c| c.sense.word != sense.word)
                .count(),
        })
        .collect();

    // Isomorphic graphs form one class; only class representatives are compared.
    let mut by_key: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, c) in candidates.iter().enumerate() {
        by_key
            .entry(c.graph.structure_key(opts.unordered_function_args, None))
            .or_default()
            .push(i);
    }
    let classes: Vec<Vec<usize>> = by_key.into_values().collect();

    let mut buckets: HashMap<String, Vec<usize>> = HashMap::new();
    for (k, members) in classes.iter().enumerate() {
        let graph = &candidates[members[0]].graph;
        for (node, n) in graph.nodes().iter().enumerate() {
            if matches!(n, DefNode::Concept(_) | DefNode::Word(_)) {
                buckets
                    .entry(graph.structure_key(opts.unordered_function_args, Some(node)))
                    .or_default()
                    .push(k);
            }
        }
    }
    let mut class_pairs = BTreeSet::new();
    for members in buckets.values() {
        for (i, &a) in members.iter().enumerate() {
            for &b in &members[i + 1..] {
                if a != b {
                    class_pairs.insert((a.min(b), a.max(b)));
                }
            }
        }
    }
    let hits: Vec<(usize, usize, ConceptId, ConceptId)> = class_pairs
        .into_par_iter()
        .filter_map(|(a, b)| {
            let ga = &candidates[classes[a][0]].graph;
            let gb = &candidates[classes[b][0]].graph;
            compare_graphs_with(ga, gb, opts).map(|(ca, cb)| (a, b, ca, cb))
        })
        .collect();

    let mut concept_analogies = BTreeSet::new();
    for (a, b, ca, cb) in hits {
        for &i in &classes[a] {
            for &j in &classes[b] {
                let (si, sj) = (candidates[i].sense, candidates[j].sense);
                if si.word == sj.word {
                    continue;
                }
                let ri = SenseRef {
                    word: si.word.clone(),
                    sense_index: si.sense_index,
                    concept: ca.clone(),
                };
                let rj = SenseRef {
                    word: sj.word.clone(),
                    sense_index: sj.sense_index,
                    concept: cb.clone(),
                };
                let (left, right) = if (&si.word, si.sense_index) < (&sj.word, sj.sense_index) {
                    (ri, rj)
                } else {
                    (rj, ri)
                };
                concept_analogies.insert(ConceptAnalogy { left, right });
            }
        }
    }
    report.concept_candidates = concept_analogies.len();

    let mut passed = Vec::new();
    for ca in concept_analogies {
        if !filters.concrete(&ca.left.concept) || !filters.concrete(&ca.right.concept) {
            continue;
        }
        let left_words: Vec<String> = filters
            .synonyms(lex, &ca.left.concept)
            .into_iter()
            .filter(|w| *w != ca.left.word && *w != ca.right.word)
            .collect();
        let synset = filters.synonyms(lex, &ca.right.concept);
        if left_words.is_empty() || synset.is_empty() {
            continue;
        }
        passed.push((ca, left_words, synset));
    }
    report.post_filter = passed.len();

    let mut analogies = BTreeSet::new();
    let mut concept_out = Vec::with_capacity(passed.len());
    for (ca, left_words, mut synset) in passed {
        concept_out.push(ca.clone());
        if let Some((book, policy)) = verdicts {
            if !book.keeps(&ca, policy) {
                continue;
            }
            synset.retain(|w| !book.is_removed(&ca.right.concept, w));
        }
        report.post_verdict += 1;
        if synset.is_empty() {
            continue;
        }
        for w2 in left_words {
            let analogy = Analogy::new(
                ca.left.word.clone(),
                w2,
                ca.right.word.clone(),
                synset.iter().cloned(),
            )
            .expect("question words filtered above");
            analogies.insert(analogy);
        }
    }
    report.analogies = analogies.len();
    Ok(ExtractionOutput {
        analogies: analogies.into_iter().collect(),
        concept_analogies: concept_out,
        report,
    })
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new() -> Self {
        UnionFind {
            parent: Vec::new(),
            size: Vec::new(),
        }
    }

    fn add(&mut self) -> usize {
        self.parent.push(self.parent.len());
        self.size.push(1);
        self.parent.len() - 1
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
    }
}

/// A set of word pairs that analogies link together.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct RelationClass {
    pub pairs: BTreeSet<(String, String)>,
}

/// Connected components of word pairs, where each analogy links `(w1, w2)`
/// with `(w3, s)` for every synset member `s`. Classes are ordered by their
/// smallest pair.
pub fn group_relations(analogies: &[Analogy]) -> Vec<RelationClass> {
    let mut ids: HashMap<(String, String), usize> = HashMap::new();
    let mut pairs = Vec::new();
    let mut uf = UnionFind::new();
    let mut intern = |pair: (String, String), uf: &mut UnionFind| {
        *ids.entry(pair.clone()).or_insert_with(|| {
            pairs.push(pair);
            uf.add()
        })
    };
    for a in analogies {
        let head = intern((a.w1.clone(), a.w2.clone()), &mut uf);
        for s in &a.synset {
            let other = intern((a.w3.clone(), s.clone()), &mut uf);
            uf.union(head, other);
        }
    }
    let mut groups: BTreeMap<usize, BTreeSet<(String, String)>> = BTreeMap::new();
    for (id, pair) in pairs.into_iter().enumerate() {
        groups.entry(uf.find(id)).or_default().insert(pair);
    }
    let mut classes: Vec<RelationClass> = groups
        .into_values()
        .map(|pairs| RelationClass { pairs })
        .collect();
    classes.sort();
    classes
}

#[derive(Debug, Error)]
pub enum TsvError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Row { line: usize, message: String },
}

/// Writes `w1 w2 w3 synset` rows, synset members joined by `|`.
pub fn write_analogies<W: Write>(mut out: W, analogies: &[Analogy]) -> io::Result<()> {
    for a in analogies {
        writeln!(out, "{}\t{}\t{}\t{}", a.w1, a.w2, a.w3, a.synset.join("|"))?;
    }
    Ok(())
}

pub fn read_analogies<R: BufRead>(reader: R) -> Result<Vec<Analogy>, TsvError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
        let row_err = |message: String| TsvError::Row {
            line: i + 1,
            message,
        };
        if cols.len() != 4 {
            return Err(row_err(format!("expected 4 columns, found {}", cols.len())));
        }
        let synset = cols[3]
            .split('|')
            .filter(|s| !s.is_empty())
            .map(str::to_string);
        out.push(Analogy::new(cols[0], cols[1], cols[2], synset).map_err(|e| row_err(e.to_string()))?);
    }
    Ok(out)
}

pub fn write_concept_analogies<W: Write>(mut out: W, items: &[ConceptAnalogy]) -> io::Result<()> {
    for ca in items {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            ca.left.word,
            ca.left.sense_index,
            ca.left.concept,
            ca.right.word,
            ca.right.sense_index,
            ca.right.concept
        )?;
    }
    Ok(())
}

pub fn read_concept_analogies<R: BufRead>(reader: R) -> Result<Vec<ConceptAnalogy>, TsvError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row_err = |message: String| TsvError::Row {
            line: i + 1,
            message,
        };
        let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
        if cols.len() != 6 {
            return Err(row_err(format!("expected 6 columns, found {}", cols.len())));
        }
        let side = |w: &str, s: &str, c: &str| -> Result<SenseRef, TsvError> {
            Ok(SenseRef {
                word: w.to_string(),
                sense_index: s
                    .parse()
                    .map_err(|_| row_err(format!("invalid sense index {s:?}")))?,
                concept: c.parse().map_err(|e| row_err(format!("{e}")))?,
            })
        };
        out.push(ConceptAnalogy {
            left: side(cols[0], cols[1], cols[2])?,
            right: side(cols[3], cols[4], cols[5])?,
        });
    }
    Ok(out)
}

/// Writes `class_id word_a word_b` rows.
pub fn write_relations<W: Write>(mut out: W, classes: &[RelationClass]) -> io::Result<()> {
    let mut buf = String::new();
    for (id, class) in classes.iter().enumerate() {
        for (a, b) in &class.pairs {
            buf.clear();
            let _ = write!(buf, "{id}\t{a}\t{b}");
            writeln!(out, "{buf}")?;
        }
    }
    Ok(())
}
