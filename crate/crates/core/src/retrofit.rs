//! Knowledge-graph construction from the taxonomy and retrofitting of word
//! vectors against it.
//!
//! Each pass visits words in ascending row order and replaces `q_i` by
//!
//! ```text
//! q_i = (α_i q̂_i + Σ_j β_ij q_j) / (α_i + Σ_j β_ij),   β_ij = w_ij / deg(i)
//! ```
//!
//! where `deg(i)` counts the in-vocabulary neighbours of `i` and `w_ij` is
//! the edge-type weight. This is the exact minimiser over `q_i` of
//!
//! ```text
//! J(q) = Σ_i deg(i) α_i ‖q_i − q̂_i‖² + Σ_{i<j} w_ij ‖q_i − q_j‖²
//! ```
//!
//! so `J` never increases from one pass to the next. It is the value
//! recorded in [`RetrofitReport::objective_per_pass`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::{Embedding, EmbeddingError};
use crate::lexicon::{Lexicon, Taxonomy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    SameTaxon,
    HypoHyper,
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeKind::SameTaxon => "same_taxon",
            EdgeKind::HypoHyper => "hypo_hyper",
        })
    }
}

impl FromStr for EdgeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "same_taxon" => Ok(EdgeKind::SameTaxon),
            "hypo_hyper" => Ok(EdgeKind::HypoHyper),
            other => Err(format!("unknown edge type {other:?}")),
        }
    }
}

/// Undirected, typed word edges without self-loops. Each edge is stored with
/// its endpoints in sorted order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeGraph {
    edges: BTreeSet<(String, String, EdgeKind)>,
}

#[derive(Debug, Error)]
pub enum KgError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Row { line: usize, message: String },
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an edge; returns false for self-loops and existing edges.
    pub fn insert(&mut self, a: &str, b: &str, kind: EdgeKind) -> bool {
        if a == b {
            return false;
        }
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        self.edges.insert((a.to_string(), b.to_string(), kind))
    }

    pub fn contains(&self, a: &str, b: &str, kind: EdgeKind) -> bool {
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        self.edges.contains(&(a.to_string(), b.to_string(), kind))
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str, EdgeKind)> {
        self.edges.iter().map(|(a, b, k)| (a.as_str(), b.as_str(), *k))
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Reads `word_a word_b edge_type` rows.
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, KgError> {
        let mut kg = KnowledgeGraph::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row_err = |message: String| KgError::Row {
                line: i + 1,
                message,
            };
            let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
            if cols.len() != 3 {
                return Err(row_err(format!("expected 3 columns, found {}", cols.len())));
            }
            let kind: EdgeKind = cols[2].parse().map_err(row_err)?;
            if cols[0] == cols[1] {
                return Err(row_err(format!("self-loop on {:?}", cols[0])));
            }
            kg.insert(cols[0], cols[1], kind);
        }
        Ok(kg)
    }

    pub fn write<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (a, b, k) in self.edges() {
            writeln!(out, "{a}\t{b}\t{k}")?;
        }
        Ok(())
    }
}

pub fn load_knowledge_graph(path: impl AsRef<Path>) -> Result<KnowledgeGraph, KgError> {
    KnowledgeGraph::from_reader(BufReader::new(File::open(path)?))
}

/// Same-taxon edges between the words of each taxonomy concept, and
/// hypo-hyper edges from each of them to every word of the parent concept.
/// A concept's words are those with a sense defined by that concept alone.
pub fn build_knowledge_graph(tax: &Taxonomy, lex: &Lexicon) -> KnowledgeGraph {
    let words: BTreeMap<_, Vec<String>> = tax.concepts().map(|c| (c, lex.synset_of(c))).collect();
    let mut kg = KnowledgeGraph::new();
    for (concept, ws) in &words {
        for (i, a) in ws.iter().enumerate() {
            for b in &ws[i + 1..] {
                kg.insert(a, b, EdgeKind::SameTaxon);
            }
        }
        if let Some(parent) = tax.parent(concept) {
            for a in ws {
                for b in &words[parent] {
                    kg.insert(a, b, EdgeKind::HypoHyper);
                }
            }
        }
    }
    kg
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrofitConfig {
    /// Anchor weight for every word without an override.
    pub alpha: f64,
    pub word_alpha: BTreeMap<String, f64>,
    pub iterations: usize,
    /// Stop once the mean per-word change of a pass falls below this.
    pub convergence_eps: f64,
    pub same_taxon_weight: f64,
    pub hypo_hyper_weight: f64,
}

impl Default for RetrofitConfig {
    fn default() -> Self {
        RetrofitConfig {
            alpha: 1.0,
            word_alpha: BTreeMap::new(),
            iterations: 10,
            convergence_eps: 1e-6,
            same_taxon_weight: 1.0,
            hypo_hyper_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrofitReport {
    /// Objective before the first pass, then after each pass.
    pub objective_per_pass: Vec<f64>,
    pub passes_run: usize,
    /// Mean per-word change of each pass.
    pub mean_change_per_pass: Vec<f64>,
    pub converged: bool,
    pub words_updated: usize,
    pub edges_used: usize,
}

impl RetrofitReport {
    pub fn write_tsv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "pass\tobjective\tmean_change")?;
        for (pass, obj) in self.objective_per_pass.iter().enumerate() {
            match pass.checked_sub(1).and_then(|p| self.mean_change_per_pass.get(p)) {
                Some(change) => writeln!(out, "{pass}\t{obj}\t{change}")?,
                None => writeln!(out, "{pass}\t{obj}\t-")?,
            }
        }
        writeln!(
            out,
            "# passes_run={} converged={} words_updated={} edges_used={}",
            self.passes_run, self.converged, self.words_updated, self.edges_used
        )
    }
}

#[derive(Debug, Error)]
pub enum RetrofitError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("initial vectors have shape {found:?}, embedding has {expected:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

impl RetrofitConfig {
    fn validate(&self) -> Result<(), RetrofitError> {
        let bad = |m: &str| Err(RetrofitError::Config(m.to_string()));
        if self.iterations == 0 {
            return bad("iterations must be at least 1");
        }
        let nonneg = |x: f64| x.is_finite() && x >= 0.0;
        if !nonneg(self.alpha) || !self.word_alpha.values().all(|&a| nonneg(a)) {
            return bad("alpha must be finite and non-negative");
        }
        if !nonneg(self.convergence_eps) {
            return bad("convergence_eps must be finite and non-negative");
        }
        if !(self.same_taxon_weight > 0.0 && self.same_taxon_weight.is_finite())
            || !(self.hypo_hyper_weight > 0.0 && self.hypo_hyper_weight.is_finite())
        {
            return bad("edge weights must be finite and positive");
        }
        Ok(())
    }

    fn weight(&self, kind: EdgeKind) -> f64 {
        match kind {
            EdgeKind::SameTaxon => self.same_taxon_weight,
            EdgeKind::HypoHyper => self.hypo_hyper_weight,
        }
    }
}

/// Neighbour lists over embedding rows. A pair joined by both edge kinds
/// keeps the larger weight.
pub(crate) fn neighbours(e: &Embedding, kg: &KnowledgeGraph, cfg: &RetrofitConfig) -> Vec<Vec<(usize, f64)>> {
    let mut adj: Vec<HashMap<usize, f64>> = vec![HashMap::new(); e.len()];
    for (a, b, kind) in kg.edges() {
        let (Some(i), Some(j)) = (e.index(a), e.index(b)) else {
            continue;
        };
        let w = cfg.weight(kind);
        for (x, y) in [(i, j), (j, i)] {
            let slot = adj[x].entry(y).or_insert(w);
            *slot = slot.max(w);
        }
    }
    adj.into_iter()
        .map(|m| {
            let mut v: Vec<(usize, f64)> = m.into_iter().collect();
            v.sort_by_key(|p| p.0);
            v
        })
        .collect()
}

fn alphas(e: &Embedding, cfg: &RetrofitConfig) -> Vec<f64> {
    e.words()
        .iter()
        .map(|w| cfg.word_alpha.get(w).copied().unwrap_or(cfg.alpha))
        .collect()
}

fn objective(q: &Array2<f64>, q_hat: &Array2<f64>, adj: &[Vec<(usize, f64)>], alpha: &[f64]) -> f64 {
    let mut total = 0.0;
    for (i, nbrs) in adj.iter().enumerate() {
        let deg = nbrs.len().max(1) as f64;
        let d = &q.row(i) - &q_hat.row(i);
        total += deg * alpha[i] * d.dot(&d);
        for &(j, w) in nbrs {
            if j > i {
                let d = &q.row(i) - &q.row(j);
                total += w * d.dot(&d);
            }
        }
    }
    total
}

/// Retrofits `e` starting from its own vectors.
pub fn retrofit(
    e: &Embedding,
    kg: &KnowledgeGraph,
    cfg: &RetrofitConfig,
) -> Result<(Embedding, RetrofitReport), RetrofitError> {
    retrofit_from(e, e.matrix(), kg, cfg)
}

/// Retrofits `e` with the iteration started at `init` instead of `e`'s own
/// vectors; `e` remains the anchor.
pub fn retrofit_from(
    e: &Embedding,
    init: &Array2<f64>,
    kg: &KnowledgeGraph,
    cfg: &RetrofitConfig,
) -> Result<(Embedding, RetrofitReport), RetrofitError> {
    cfg.validate()?;
    if init.dim() != e.matrix().dim() {
        return Err(RetrofitError::DimensionMismatch {
            expected: e.matrix().dim(),
            found: init.dim(),
        });
    }
    let q_hat = e.matrix();
    let adj = neighbours(e, kg, cfg);
    let alpha = alphas(e, cfg);
    let updated: Vec<usize> = (0..e.len()).filter(|&i| !adj[i].is_empty()).collect();
    let mut q = init.clone();
    let mut report = RetrofitReport {
        objective_per_pass: vec![objective(&q, q_hat, &adj, &alpha)],
        passes_run: 0,
        mean_change_per_pass: Vec::new(),
        converged: false,
        words_updated: updated.len(),
        edges_used: adj.iter().map(Vec::len).sum::<usize>() / 2,
    };
    if updated.is_empty() {
        report.converged = true;
        return Ok((e.with_matrix(q)?, report));
    }
    let dim = e.dim();
    for _ in 0..cfg.iterations {
        let mut change = 0.0;
        for &i in &updated {
            let deg = adj[i].len() as f64;
            let mut num: Array1<f64> = q_hat.row(i).to_owned() * alpha[i];
            let mut den = alpha[i];
            for &(j, w) in &adj[i] {
                let beta = w / deg;
                num.scaled_add(beta, &q.row(j));
                den += beta;
            }
            num /= den;
            let mut row = q.row_mut(i);
            let mut sq = 0.0;
            for k in 0..dim {
                let d = num[k] - row[k];
                sq += d * d;
            }
            change += sq.sqrt();
            row.assign(&num);
        }
        let mean = change / updated.len() as f64;
        report.passes_run += 1;
        report.mean_change_per_pass.push(mean);
        report.objective_per_pass.push(objective(&q, q_hat, &adj, &alpha));
        if mean < cfg.convergence_eps {
            report.converged = true;
            break;
        }
    }
    debug_assert_eq!(q.len_of(Axis(1)), dim);
    Ok((e.with_matrix(q)?, report))
}
