//! Word embeddings, 3CosAdd analogy answering, and synset-aware scoring.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use log::warn;
use ndarray::{Array1, Array2, ArrayView1, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extraction::Analogy;

/// Analogy questions share the [`Analogy`] representation; the synset is the
/// answer set.
pub type AnalogyQuestion = Analogy;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("empty embedding file")]
    Empty,
    #[error("line {line}: expected {expected} components, found {found}")]
    Dimension {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: {token:?} is not a number")]
    NotANumber { line: usize, token: String },
    #[error("line {line}: word without vector")]
    MissingVector { line: usize },
    #[error("header declares dimension {declared}, rows have {found}")]
    HeaderDimension { declared: usize, found: usize },
    #[error("matrix has {rows} rows for {words} words")]
    Shape { rows: usize, words: usize },
    #[error("duplicate word {0:?}")]
    DuplicateWord(String),
}

/// The text a loaded embedding was parsed from, kept so unchanged rows can
/// be written back verbatim.
#[derive(Debug, Clone, PartialEq)]
struct Source {
    header: Option<String>,
    lines: Vec<String>,
    original: Array2<f64>,
}

/// A dense embedding: one row per vocabulary word.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    words: Vec<String>,
    vocab: HashMap<String, usize>,
    matrix: Array2<f64>,
    norms: Vec<f64>,
    source: Option<Source>,
}

fn row_norms(m: &Array2<f64>) -> Vec<f64> {
    m.axis_iter(Axis(0)).map(|r| r.dot(&r).sqrt()).collect()
}

impl Embedding {
    /// Builds an embedding, rejecting duplicate words. Zero rows are allowed
    /// here and have cosine 0 with everything.
    pub fn new(words: Vec<String>, matrix: Array2<f64>) -> Result<Self, EmbeddingError> {
        if words.len() != matrix.nrows() {
            return Err(EmbeddingError::Shape {
                rows: matrix.nrows(),
                words: words.len(),
            });
        }
        let mut vocab = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if vocab.insert(w.clone(), i).is_some() {
                return Err(EmbeddingError::DuplicateWord(w.clone()));
            }
        }
        let norms = row_norms(&matrix);
        Ok(Embedding {
            words,
            vocab,
            matrix,
            norms,
            source: None,
        })
    }

    /// Same vocabulary with a new matrix of the same shape.
    pub fn with_matrix(&self, matrix: Array2<f64>) -> Result<Self, EmbeddingError> {
        if matrix.dim() != self.matrix.dim() {
            return Err(EmbeddingError::Shape {
                rows: matrix.nrows(),
                words: self.words.len(),
            });
        }
        let norms = row_norms(&matrix);
        Ok(Embedding {
            words: self.words.clone(),
            vocab: self.vocab.clone(),
            matrix,
            norms,
            source: self.source.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn index(&self, word: &str) -> Option<usize> {
        self.vocab.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.vocab.contains_key(word)
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn vector(&self, word: &str) -> Option<ArrayView1<'_, f64>> {
        self.index(word).map(|i| self.matrix.row(i))
    }

    /// Parses the whitespace-delimited text format. A first line of exactly
    /// two integers is a `V d` header. Duplicate words keep their first
    /// vector; all-zero rows are dropped. Both emit a warning.
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, EmbeddingError> {
        let mut header = None;
        let mut declared_dim = None;
        let mut words = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        let mut lines = Vec::new();
        let mut vocab = HashMap::new();
        let mut dim = None;
        let mut first = true;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens.is_empty() {
                continue;
            }
            if std::mem::take(&mut first)
                && tokens.len() == 2
                && tokens.iter().all(|t| t.parse::<u64>().is_ok())
            {
                declared_dim = tokens[1].parse::<usize>().ok();
                header = Some(line);
                continue;
            }
            if tokens.len() < 2 {
                return Err(EmbeddingError::MissingVector { line: lineno });
            }
            let row: Vec<f64> = tokens[1..]
                .iter()
                .map(|t| {
                    t.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| EmbeddingError::NotANumber {
                            line: lineno,
                            token: t.to_string(),
                        })
                })
                .collect::<Result<_, _>>()?;
            let expected = *dim.get_or_insert(row.len());
            if row.len() != expected {
                return Err(EmbeddingError::Dimension {
                    line: lineno,
                    expected,
                    found: row.len(),
                });
            }
            let word = tokens[0];
            if vocab.contains_key(word) {
                warn!("line {lineno}: duplicate word {word:?}, keeping the first vector");
                continue;
            }
            if row.iter().all(|&v| v == 0.0) {
                warn!("line {lineno}: word {word:?} has an all-zero vector, dropped");
                continue;
            }
            vocab.insert(word.to_string(), words.len());
            words.push(word.to_string());
            values.extend(row);
            lines.push(line);
        }
        let dim = dim.ok_or(EmbeddingError::Empty)?;
        if let Some(declared) = declared_dim {
            if declared != dim {
                return Err(EmbeddingError::HeaderDimension {
                    declared,
                    found: dim,
                });
            }
        }
        let matrix =
            Array2::from_shape_vec((words.len(), dim), values).expect("rows checked for dimension");
        let mut e = Embedding::new(words, matrix)?;
        e.source = Some(Source {
            header,
            lines,
            original: e.matrix.clone(),
        });
        Ok(e)
    }

    /// Writes the text format. Rows whose values are bit-identical to the
    /// loaded ones are copied verbatim; other rows use the shortest
    /// round-trip decimal form. A header is written when the input had one.
    pub fn write<W: Write>(&self, mut out: W) -> io::Result<()> {
        if let Some(header) = self.source.as_ref().and_then(|s| s.header.as_ref()) {
            let counts: Vec<usize> = header
                .split_whitespace()
                .filter_map(|t| t.parse().ok())
                .collect();
            if counts == [self.len(), self.dim()] {
                writeln!(out, "{header}")?;
            } else {
                writeln!(out, "{} {}", self.len(), self.dim())?;
            }
        }
        for (i, word) in self.words.iter().enumerate() {
            let row = self.matrix.row(i);
            if let Some(src) = &self.source {
                let orig = src.original.row(i);
                if row.iter().zip(orig.iter()).all(|(a, b)| a.to_bits() == b.to_bits()) {
                    writeln!(out, "{}", src.lines[i])?;
                    continue;
                }
            }
            write!(out, "{word}")?;
            for v in row {
                write!(out, " {v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Cosine similarity, 0 when either vector is zero.
    pub fn cosine(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
        let na = a.dot(&a).sqrt();
        let nb = b.dot(&b).sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            a.dot(&b) / (na * nb)
        }
    }
}

pub fn load_embedding(path: impl AsRef<Path>) -> Result<Embedding, EmbeddingError> {
    Embedding::from_reader(BufReader::new(File::open(path)?))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Require every synset member, not just one, to be in the vocabulary.
    pub require_full_synset: bool,
}

/// Whether the embedding can represent the question and one of its answers.
pub fn is_covered(e: &Embedding, q: &AnalogyQuestion, cfg: &EvalConfig) -> bool {
    let words = [&q.w1, &q.w2, &q.w3].into_iter().all(|w| e.contains(w));
    let synset = if cfg.require_full_synset {
        q.synset.iter().all(|w| e.contains(w))
    } else {
        q.synset.iter().any(|w| e.contains(w))
    };
    words && synset
}

/// The word with the highest cosine similarity to `v3 + v2 - v1`, excluding
/// the question words; ties go to the lower row index. `None` when the
/// question is not covered.
pub fn answer_question(e: &Embedding, q: &AnalogyQuestion) -> Option<String> {
    answer_question_with(e, q, &EvalConfig::default())
}

pub fn answer_question_with(e: &Embedding, q: &AnalogyQuestion, cfg: &EvalConfig) -> Option<String> {
    if !is_covered(e, q, cfg) {
        return None;
    }
    let (i1, i2, i3) = (e.index(&q.w1)?, e.index(&q.w2)?, e.index(&q.w3)?);
    nearest(e, i1, i2, i3).map(|i| e.words[i].clone())
}

fn nearest(e: &Embedding, i1: usize, i2: usize, i3: usize) -> Option<usize> {
    let m = &e.matrix;
    let target: Array1<f64> = &(&m.row(i3) + &m.row(i2)) - &m.row(i1);
    let tn = target.dot(&target).sqrt();
    let scores = m.dot(&target);
    let mut best: Option<(usize, f64)> = None;
    for (i, &dot) in scores.iter().enumerate() {
        if i == i1 || i == i2 || i == i3 {
            continue;
        }
        let denom = tn * e.norms[i];
        let cos = if denom == 0.0 { 0.0 } else { dot / denom };
        if best.is_none_or(|(_, b)| cos > b) {
            best = Some((i, cos));
        }
    }
    best.map(|(i, _)| i)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionResult {
    pub question: AnalogyQuestion,
    pub covered: bool,
    pub answer: Option<String>,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `correct / covered`; `None` when nothing is covered.
    pub accuracy: Option<f64>,
    pub correct: usize,
    pub covered: usize,
    pub total: usize,
    pub per_question: Vec<QuestionResult>,
}

impl EvalReport {
    pub fn summary_line(&self) -> String {
        self.to_string()
    }

    /// Per-question rows: the question, coverage, answer and correctness.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "w1\tw2\tw3\tsynset\tcovered\tanswer\tcorrect")?;
        for r in &self.per_question {
            let q = &r.question;
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                q.w1,
                q.w2,
                q.w3,
                q.synset.join("|"),
                r.covered,
                r.answer.as_deref().unwrap_or("-"),
                r.correct
            )?;
        }
        writeln!(out, "{self}")
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.accuracy {
            Some(a) => write!(f, "accuracy={a}")?,
            None => write!(f, "accuracy=n/a")?,
        }
        write!(f, " covered={} total={}", self.covered, self.total)
    }
}

pub fn evaluate(e: &Embedding, questions: &[AnalogyQuestion]) -> EvalReport {
    evaluate_with(e, questions, &EvalConfig::default())
}

/// Scores questions in parallel; an answer is correct when it is a synset
/// member.
pub fn evaluate_with(e: &Embedding, questions: &[AnalogyQuestion], cfg: &EvalConfig) -> EvalReport {
    let per_question: Vec<QuestionResult> = questions
        .par_iter()
        .map(|q| {
            let covered = is_covered(e, q, cfg);
            let answer = if covered { answer_question_with(e, q, cfg) } else { None };
            let correct = answer.as_ref().is_some_and(|a| q.synset.contains(a));
            QuestionResult {
                question: q.clone(),
                covered,
                answer,
                correct,
            }
        })
        .collect();
    let covered = per_question.iter().filter(|r| r.covered).count();
    let correct = per_question.iter().filter(|r| r.correct).count();
    EvalReport {
        accuracy: (covered > 0).then(|| correct as f64 / covered as f64),
        correct,
        covered,
        total: questions.len(),
        per_question,
    }
}

#[derive(Debug, Error)]
pub enum BenchmarkError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Row { line: usize, message: String },
}

/// Reads analogy questions. Tab-separated rows take a `|`-joined synset in
/// the fourth column; other rows are four whitespace-separated words with a
/// singleton synset. Lines starting with `:` are section headers. Rows that
/// repeat a question word are skipped with a warning.
pub fn read_benchmark<R: BufRead>(reader: R) -> Result<Vec<AnalogyQuestion>, BenchmarkError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with(':') {
            continue;
        }
        let cols: Vec<&str> = if trimmed.contains('\t') {
            trimmed.split('\t').map(str::trim).collect()
        } else {
            trimmed.split_whitespace().collect()
        };
        if cols.len() != 4 {
            return Err(BenchmarkError::Row {
                line: lineno,
                message: format!("expected 4 columns, found {}", cols.len()),
            });
        }
        let synset = cols[3]
            .split('|')
            .filter(|s| !s.is_empty())
            .map(str::to_string);
        match Analogy::new(cols[0], cols[1], cols[2], synset) {
            Ok(q) => out.push(q),
            Err(e) => warn!("line {lineno}: skipped question: {e}"),
        }
    }
    Ok(out)
}

pub fn load_benchmark(path: impl AsRef<Path>) -> Result<Vec<AnalogyQuestion>, BenchmarkError> {
    read_benchmark(BufReader::new(File::open(path)?))
}
