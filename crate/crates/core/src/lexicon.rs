//! In-memory ontology: word senses, concept definitions, the concept
//! taxonomy, and corpus frequencies.
//!
//! File formats (UTF-8, tab separated, LF line endings, blank lines skipped):
//!
//! * `lexicon.tsv`: `token  kind  sense_index  definition  english_gloss`,
//!   where `kind` is `word`, `concept` or `attribute`. Concept and attribute
//!   rows leave `sense_index` empty; attribute rows leave every column after
//!   `kind` empty.
//! * `taxonomy.tsv`: `child_concept  parent_concept`; the root row has an
//!   empty parent.
//! * `freq.tsv`: `word  count`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::defparser::{
    classify_token, parse_definition, serialize_definition, ConceptId, DefGraph, ParseError,
    TokenKind,
};

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Row { line: usize, message: String },
    #[error("line {line}: definition error at {source}")]
    Definition {
        line: usize,
        #[source]
        source: ParseError,
    },
    #[error("line {line}: duplicate entry {what}")]
    Duplicate { line: usize, what: String },
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
}

impl LexiconError {
    fn row(line: usize, message: impl Into<String>) -> Self {
        LexiconError::Row {
            line,
            message: message.into(),
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>, LexiconError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| LexiconError::Io {
            path: path.to_path_buf(),
            source,
        })
}

/// Non-blank lines with 1-based line numbers.
fn rows<R: BufRead>(reader: R) -> impl Iterator<Item = Result<(usize, String), LexiconError>> {
    reader
        .lines()
        .enumerate()
        .map(|(i, line)| {
            line.map(|l| (i + 1, l)).map_err(|source| LexiconError::Io {
                path: PathBuf::new(),
                source,
            })
        })
        .filter(|r| !matches!(r, Ok((_, l)) if l.trim().is_empty()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sense {
    pub word: String,
    pub sense_index: u32,
    pub definition: DefGraph,
    pub english_gloss: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConceptEntry {
    pub id: ConceptId,
    /// Taxonomy roots may be undefined.
    pub definition: Option<DefGraph>,
    pub english_gloss: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lexicon {
    words: BTreeMap<String, Vec<Sense>>,
    concepts: BTreeMap<ConceptId, ConceptEntry>,
    attributes: BTreeSet<String>,
    synsets: BTreeMap<ConceptId, BTreeSet<String>>,
}

impl Lexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a word sense. Fails if the word already has this sense index.
    pub fn add_sense(&mut self, sense: Sense) -> Result<(), Sense> {
        let senses = self.words.entry(sense.word.clone()).or_default();
        let at = match senses.binary_search_by_key(&sense.sense_index, |s| s.sense_index) {
            Ok(_) => return Err(sense),
            Err(at) => at,
        };
        if let Some(c) = sense.definition.single_concept() {
            self.synsets
                .entry(c.clone())
                .or_default()
                .insert(sense.word.clone());
        }
        senses.insert(at, sense);
        Ok(())
    }

    #[allow(clippy::result_large_err)]
    pub fn add_concept(&mut self, entry: ConceptEntry) -> Result<(), ConceptEntry> {
        if self.concepts.contains_key(&entry.id) {
            return Err(entry);
        }
        self.concepts.insert(entry.id.clone(), entry);
        Ok(())
    }

    pub fn add_attribute(&mut self, name: &str) -> bool {
        self.attributes.insert(name.to_string())
    }

    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    pub fn sense_count(&self) -> usize {
        self.words.values().map(Vec::len).sum()
    }

    pub fn concept_count(&self) -> usize {
        self.concepts.len()
    }

    pub fn attributes(&self) -> impl Iterator<Item = &str> {
        self.attributes.iter().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty() && self.concepts.is_empty() && self.attributes.is_empty()
    }

    pub fn senses_of(&self, word: &str) -> &[Sense] {
        self.words.get(word).map(Vec::as_slice).unwrap_or(&[])
    }

    /// All senses, ordered by word (codepoint order) then sense index.
    pub fn senses(&self) -> impl Iterator<Item = &Sense> {
        self.words.values().flatten()
    }

    pub fn concept(&self, id: &ConceptId) -> Option<&ConceptEntry> {
        self.concepts.get(id)
    }

    pub fn concepts(&self) -> impl Iterator<Item = &ConceptEntry> {
        self.concepts.values()
    }

    /// Words with a sense defined by exactly `concept`, sorted by codepoint.
    pub fn synset_of(&self, concept: &ConceptId) -> Vec<String> {
        self.synsets
            .get(concept)
            .map(|s| s.iter().cloned().collect())
            .unwrap_or_default()
    }

    /// Reads the `lexicon.tsv` format.
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, LexiconError> {
        let mut lex = Lexicon::new();
        for row in rows(reader) {
            let (line, text) = row?;
            lex.add_row(line, &text)?;
        }
        Ok(lex)
    }

    pub fn parse_str(text: &str) -> Result<Self, LexiconError> {
        Self::from_reader(text.as_bytes())
    }

    fn add_row(&mut self, line: usize, text: &str) -> Result<(), LexiconError> {
        let cols: Vec<&str> = text.split('\t').collect();
        if cols.len() != 5 {
            return Err(LexiconError::row(
                line,
                format!("expected 5 columns, found {}", cols.len()),
            ));
        }
        let token = cols[0].trim();
        let kind: TokenKind = cols[1]
            .trim()
            .parse()
            .map_err(|e| LexiconError::row(line, format!("{e}")))?;
        let actual = classify_token(token).map_err(|e| LexiconError::row(line, e.to_string()))?;
        if actual != kind {
            return Err(LexiconError::row(
                line,
                format!("token {token:?} is a {actual}, not a {kind}"),
            ));
        }
        let index_col = cols[2].trim();
        let def_col = cols[3].trim();
        let gloss = Some(cols[4].trim())
            .filter(|g| !g.is_empty())
            .map(str::to_string);
        let definition = if def_col.is_empty() {
            None
        } else {
            Some(
                parse_definition(def_col)
                    .map_err(|source| LexiconError::Definition { line, source })?,
            )
        };
        match kind {
            TokenKind::Attribute => {
                if !index_col.is_empty() || definition.is_some() || gloss.is_some() {
                    return Err(LexiconError::row(line, "attribute rows take no definition"));
                }
                if !self.add_attribute(token) {
                    return Err(LexiconError::Duplicate {
                        line,
                        what: format!("attribute {token}"),
                    });
                }
            }
            TokenKind::Concept => {
                if !index_col.is_empty() {
                    return Err(LexiconError::row(line, "concept rows take no sense index"));
                }
                let id: ConceptId = token.parse().expect("classified as concept");
                self.add_concept(ConceptEntry {
                    id,
                    definition,
                    english_gloss: gloss,
                })
                .map_err(|e| LexiconError::Duplicate {
                    line,
                    what: format!("concept {}", e.id),
                })?;
            }
            TokenKind::Word => {
                let sense_index: u32 = index_col
                    .parse()
                    .ok()
                    .filter(|&i| i > 0)
                    .ok_or_else(|| {
                        LexiconError::row(line, format!("invalid sense index {index_col:?}"))
                    })?;
                let definition = definition
                    .ok_or_else(|| LexiconError::row(line, "word sense without definition"))?;
                self.add_sense(Sense {
                    word: token.to_string(),
                    sense_index,
                    definition,
                    english_gloss: gloss,
                })
                .map_err(|s| LexiconError::Duplicate {
                    line,
                    what: format!("sense {}#{}", s.word, s.sense_index),
                })?;
            }
        }
        Ok(())
    }

    /// Writes the `lexicon.tsv` format with canonical definitions.
    pub fn write<W: Write>(&self, mut out: W) -> io::Result<()> {
        let def = |g: &DefGraph| serialize_definition(g).map_err(io::Error::other);
        for attr in &self.attributes {
            writeln!(out, "{attr}\tattribute\t\t\t")?;
        }
        for entry in self.concepts.values() {
            let d = entry.definition.as_ref().map(def).transpose()?;
            writeln!(
                out,
                "{}\tconcept\t\t{}\t{}",
                entry.id,
                d.unwrap_or_default(),
                entry.english_gloss.as_deref().unwrap_or("")
            )?;
        }
        for sense in self.senses() {
            writeln!(
                out,
                "{}\tword\t{}\t{}\t{}",
                sense.word,
                sense.sense_index,
                def(&sense.definition)?,
                sense.english_gloss.as_deref().unwrap_or("")
            )?;
        }
        Ok(())
    }
}

pub fn load_lexicon(path: impl AsRef<Path>) -> Result<Lexicon, LexiconError> {
    Lexicon::from_reader(open(path.as_ref())?).map_err(|e| with_path(e, path.as_ref()))
}

fn with_path(e: LexiconError, path: &Path) -> LexiconError {
    match e {
        LexiconError::Io { source, .. } => LexiconError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TaxonomyError {
    #[error("unknown concept {0}")]
    UnknownConcept(String),
    #[error("taxonomy has no root")]
    NoRoot,
    #[error("taxonomy has several roots: {0} and {1}")]
    MultipleRoots(String, String),
    #[error("concept {0} is listed twice")]
    DuplicateConcept(String),
    #[error("parent {parent} of {child} is not in the taxonomy")]
    UnknownParent { child: String, parent: String },
    #[error("cycle through {0}")]
    Cycle(String),
    #[error("line {line}: {message}")]
    Row { line: usize, message: String },
}

/// The concept tree, plus the words attached to each node (words having a
/// sense defined trivially by that node's concept).
#[derive(Debug, Clone, PartialEq)]
pub struct Taxonomy {
    parents: BTreeMap<ConceptId, Option<ConceptId>>,
    root: ConceptId,
    attached: BTreeMap<ConceptId, Vec<String>>,
}

impl Taxonomy {
    /// Builds a tree from `(child, parent)` pairs; the root has no parent.
    pub fn from_edges<I>(edges: I) -> Result<Self, TaxonomyError>
    where
        I: IntoIterator<Item = (ConceptId, Option<ConceptId>)>,
    {
        let mut parents = BTreeMap::new();
        let mut root: Option<ConceptId> = None;
        for (child, parent) in edges {
            if parent.is_none() {
                if let Some(r) = &root {
                    return Err(TaxonomyError::MultipleRoots(r.to_string(), child.to_string()));
                }
                root = Some(child.clone());
            }
            if parents.contains_key(&child) {
                return Err(TaxonomyError::DuplicateConcept(child.to_string()));
            }
            parents.insert(child, parent);
        }
        let root = root.ok_or(TaxonomyError::NoRoot)?;
        for (child, parent) in &parents {
            if let Some(p) = parent {
                if !parents.contains_key(p) {
                    return Err(TaxonomyError::UnknownParent {
                        child: child.to_string(),
                        parent: p.to_string(),
                    });
                }
            }
        }
        let tax = Taxonomy {
            parents,
            root,
            attached: BTreeMap::new(),
        };
        for c in tax.parents.keys() {
            let mut steps = 0;
            let mut cur = c;
            while let Some(Some(p)) = tax.parents.get(cur) {
                cur = p;
                steps += 1;
                if steps > tax.parents.len() {
                    return Err(TaxonomyError::Cycle(c.to_string()));
                }
            }
        }
        Ok(tax)
    }

    /// Reads the `taxonomy.tsv` format.
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, LexiconError> {
        let mut edges = Vec::new();
        for row in rows(reader) {
            let (line, text) = row?;
            let cols: Vec<&str> = text.split('\t').collect();
            if cols.len() > 2 {
                return Err(LexiconError::row(
                    line,
                    format!("expected 2 columns, found {}", cols.len()),
                ));
            }
            let parse = |s: &str| -> Result<ConceptId, LexiconError> {
                s.trim()
                    .parse()
                    .map_err(|e| LexiconError::row(line, format!("{e}")))
            };
            let child = parse(cols[0])?;
            let parent = match cols.get(1).map(|s| s.trim()) {
                Some(p) if !p.is_empty() => Some(parse(p)?),
                _ => None,
            };
            edges.push((child, parent));
        }
        Ok(Taxonomy::from_edges(edges)?)
    }

    pub fn write<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (child, parent) in &self.parents {
            match parent {
                Some(p) => writeln!(out, "{child}\t{p}")?,
                None => writeln!(out, "{child}\t")?,
            }
        }
        Ok(())
    }

    /// Attaches every word whose sense is trivially defined by a taxonomy
    /// concept to that concept's node.
    pub fn attach_words(&mut self, lex: &Lexicon) {
        self.attached = self
            .parents
            .keys()
            .map(|c| (c.clone(), lex.synset_of(c)))
            .filter(|(_, words)| !words.is_empty())
            .collect();
    }

    pub fn attached_words(&self, concept: &ConceptId) -> &[String] {
        self.attached
            .get(concept)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn root(&self) -> &ConceptId {
        &self.root
    }

    pub fn contains(&self, concept: &ConceptId) -> bool {
        self.parents.contains_key(concept)
    }

    pub fn parent(&self, concept: &ConceptId) -> Option<&ConceptId> {
        self.parents.get(concept).and_then(Option::as_ref)
    }

    pub fn concepts(&self) -> impl Iterator<Item = &ConceptId> {
        self.parents.keys()
    }

    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parents.is_empty()
    }

    /// True iff `ancestor` lies on the path from `concept` to the root.
    /// Reflexive.
    pub fn is_under(&self, concept: &ConceptId, ancestor: &ConceptId) -> Result<bool, TaxonomyError> {
        for c in [concept, ancestor] {
            if !self.contains(c) {
                return Err(TaxonomyError::UnknownConcept(c.to_string()));
            }
        }
        let mut cur = Some(concept);
        while let Some(c) = cur {
            if c == ancestor {
                return Ok(true);
            }
            cur = self.parent(c);
        }
        Ok(false)
    }
}

pub fn load_taxonomy(path: impl AsRef<Path>) -> Result<Taxonomy, LexiconError> {
    Taxonomy::from_reader(open(path.as_ref())?).map_err(|e| with_path(e, path.as_ref()))
}

/// Word occurrence counts from a segmented corpus. Absent words count 0.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrequencyTable {
    counts: HashMap<String, u64>,
}

impl FrequencyTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, word: &str, count: u64) {
        self.counts.insert(word.to_string(), count);
    }

    pub fn count(&self, word: &str) -> u64 {
        self.counts.get(word).copied().unwrap_or(0)
    }

    pub fn is_common(&self, word: &str, threshold: u64) -> bool {
        self.count(word) >= threshold
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Reads `word<TAB>count` rows. Repeated words are summed.
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, LexiconError> {
        let mut table = FrequencyTable::new();
        for row in rows(reader) {
            let (line, text) = row?;
            let (word, count) = text
                .split_once('\t')
                .ok_or_else(|| LexiconError::row(line, "expected word<TAB>count"))?;
            let count: u64 = count
                .trim()
                .parse()
                .map_err(|_| LexiconError::row(line, format!("invalid count {count:?}")))?;
            *table.counts.entry(word.trim().to_string()).or_insert(0) += count;
        }
        Ok(table)
    }
}

pub fn load_frequencies(path: impl AsRef<Path>) -> Result<FrequencyTable, LexiconError> {
    FrequencyTable::from_reader(open(path.as_ref())?).map_err(|e| with_path(e, path.as_ref()))
}
