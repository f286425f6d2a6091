//! Annotation sessions over concept analogies and synsets.
//!
//! A [`Session`] holds the tasks, one seeded queue per annotator, and the
//! latest verdict per (task, annotator). [`SessionStore`] persists it as an
//! append-only verdict log plus periodic snapshots. Agreement is reported as
//! Fleiss' κ over concept-analogy tasks that every annotator labelled, with
//! mean pairwise Cohen's κ alongside.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::defparser::{ConceptId, DefGraph, NodeId};
use crate::extraction::{diff_nodes, expand_definition, CompareOptions, ConceptAnalogy};
use crate::lexicon::Lexicon;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskId(String);

impl TaskId {
    fn of(content: &str) -> Self {
        let digest = Sha256::digest(content.as_bytes());
        TaskId(digest[..8].iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for TaskId {
    fn from(s: &str) -> Self {
        TaskId(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum TaskKind {
    ConceptAnalogy {
        analogy: ConceptAnalogy,
        left_graph: DefGraph,
        right_graph: DefGraph,
        /// Node ids of the differing concept in each graph.
        highlight: Option<(NodeId, NodeId)>,
    },
    Synset {
        concept: ConceptId,
        candidates: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub id: TaskId,
    #[serde(flatten)]
    pub kind: TaskKind,
}

impl AnnotationTask {
    pub fn concept_analogy(analogy: ConceptAnalogy, left_graph: DefGraph, right_graph: DefGraph) -> Self {
        let content = format!(
            "analogy\t{}\t{}\t{}\t{}\t{}\t{}",
            analogy.left.word,
            analogy.left.sense_index,
            analogy.left.concept.canonical(),
            analogy.right.word,
            analogy.right.sense_index,
            analogy.right.concept.canonical()
        );
        let highlight = diff_nodes(&left_graph, &right_graph, CompareOptions::default());
        AnnotationTask {
            id: TaskId::of(&content),
            kind: TaskKind::ConceptAnalogy {
                analogy,
                left_graph,
                right_graph,
                highlight,
            },
        }
    }

    /// Candidates are sorted and deduplicated.
    pub fn synset(concept: ConceptId, candidates: impl IntoIterator<Item = String>) -> Self {
        let candidates: Vec<String> = candidates
            .into_iter()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let content = format!("synset\t{}\t{}", concept.canonical(), candidates.join("\t"));
        AnnotationTask {
            id: TaskId::of(&content),
            kind: TaskKind::Synset {
                concept,
                candidates,
            },
        }
    }
}

/// One concept-analogy task per item, then one synset task per distinct
/// right-hand concept with the words returned by `candidates`. Concepts with
/// no candidates get no synset task.
pub fn build_tasks<F>(
    lex: &Lexicon,
    items: &[ConceptAnalogy],
    expansion_depth_limit: usize,
    candidates: F,
) -> Result<Vec<AnnotationTask>, AnnotationError>
where
    F: Fn(&ConceptId) -> Vec<String>,
{
    let graph_of = |word: &str, index: u32| -> Result<DefGraph, AnnotationError> {
        let sense = lex
            .senses_of(word)
            .iter()
            .find(|s| s.sense_index == index)
            .ok_or_else(|| AnnotationError::UnknownSense(format!("{word}#{index}")))?;
        expand_definition(sense, lex, expansion_depth_limit)
            .map_err(|e| AnnotationError::UnknownSense(format!("{word}#{index}: {e}")))
    };
    let mut tasks = Vec::new();
    let mut concepts = BTreeSet::new();
    for item in items {
        let left = graph_of(&item.left.word, item.left.sense_index)?;
        let right = graph_of(&item.right.word, item.right.sense_index)?;
        tasks.push(AnnotationTask::concept_analogy(item.clone(), left, right));
        concepts.insert(item.right.concept.clone());
    }
    for concept in concepts {
        let words = candidates(&concept);
        if !words.is_empty() {
            tasks.push(AnnotationTask::synset(concept, words));
        }
    }
    Ok(tasks)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalogyDecision {
    Correct,
    Incorrect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WordDecision {
    Keep,
    Remove,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Analogy(AnalogyDecision),
    Synset(BTreeMap<String, WordDecision>),
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Decision::Analogy(AnalogyDecision::Correct) => f.write_str("correct"),
            Decision::Analogy(AnalogyDecision::Incorrect) => f.write_str("incorrect"),
            Decision::Synset(words) => {
                let parts: Vec<String> = words
                    .iter()
                    .map(|(w, d)| {
                        let d = match d {
                            WordDecision::Keep => "keep",
                            WordDecision::Remove => "remove",
                        };
                        format!("{w}={d}")
                    })
                    .collect();
                f.write_str(&parts.join(";"))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub task_id: TaskId,
    pub annotator: String,
    pub decision: Decision,
    /// Milliseconds since the Unix epoch.
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ack {
    Stored,
    Overwritten,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub task_id: TaskId,
    pub annotator: String,
    pub previous: Decision,
    pub previous_timestamp_ms: u64,
    pub replaced_at_ms: u64,
}

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("session needs at least one task")]
    NoTasks,
    #[error("session needs at least one annotator")]
    NoAnnotators,
    #[error("duplicate task id {0}")]
    DuplicateTask(TaskId),
    #[error("duplicate annotator {0:?}")]
    DuplicateAnnotator(String),
    #[error("unknown task {0}")]
    UnknownTask(TaskId),
    #[error("unknown annotator {0:?}")]
    UnknownAnnotator(String),
    #[error("decision kind does not match task {0}")]
    DecisionMismatch(TaskId),
    #[error("word {word:?} is not a candidate of task {task}")]
    UnknownWord { task: TaskId, word: String },
    #[error("unknown sense {0}")]
    UnknownSense(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: snapshot covers {covered} log entries but the log has {found}")]
    Corrupt {
        path: PathBuf,
        covered: usize,
        found: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    tasks: Vec<AnnotationTask>,
    index: HashMap<TaskId, usize>,
    annotators: Vec<String>,
    seed: u64,
    queues: BTreeMap<String, Vec<usize>>,
    verdicts: BTreeMap<(TaskId, String), Verdict>,
    audit: Vec<AuditEntry>,
}

fn annotator_seed(seed: u64, annotator: &str) -> u64 {
    let digest = Sha256::digest(annotator.as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    seed ^ u64::from_le_bytes(bytes)
}

/// Creates a session. Each annotator's queue is the task list shuffled with
/// a generator seeded from `seed` and the annotator id.
pub fn create_session(
    tasks: Vec<AnnotationTask>,
    annotators: Vec<String>,
    seed: u64,
) -> Result<Session, AnnotationError> {
    if tasks.is_empty() {
        return Err(AnnotationError::NoTasks);
    }
    if annotators.is_empty() {
        return Err(AnnotationError::NoAnnotators);
    }
    let mut index = HashMap::new();
    for (i, t) in tasks.iter().enumerate() {
        if index.insert(t.id.clone(), i).is_some() {
            return Err(AnnotationError::DuplicateTask(t.id.clone()));
        }
    }
    let mut queues = BTreeMap::new();
    for a in &annotators {
        let mut order: Vec<usize> = (0..tasks.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(annotator_seed(seed, a)));
        if queues.insert(a.clone(), order).is_some() {
            return Err(AnnotationError::DuplicateAnnotator(a.clone()));
        }
    }
    Ok(Session {
        tasks,
        index,
        annotators,
        seed,
        queues,
        verdicts: BTreeMap::new(),
        audit: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub tasks: usize,
    pub concept_analogy_tasks: usize,
    pub synset_tasks: usize,
    pub annotators: Vec<String>,
    pub verdicts: usize,
    /// Labelled task count per annotator.
    pub progress: BTreeMap<String, usize>,
}

impl Session {
    pub fn tasks(&self) -> &[AnnotationTask] {
        &self.tasks
    }

    pub fn task(&self, id: &TaskId) -> Option<&AnnotationTask> {
        self.index.get(id).map(|&i| &self.tasks[i])
    }

    pub fn annotators(&self) -> &[String] {
        &self.annotators
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn queue(&self, annotator: &str) -> Option<Vec<&TaskId>> {
        self.queues
            .get(annotator)
            .map(|q| q.iter().map(|&i| &self.tasks[i].id).collect())
    }

    /// First task in the annotator's queue they have not labelled yet.
    pub fn next_task(&self, annotator: &str) -> Result<Option<&AnnotationTask>, AnnotationError> {
        let queue = self
            .queues
            .get(annotator)
            .ok_or_else(|| AnnotationError::UnknownAnnotator(annotator.to_string()))?;
        Ok(queue
            .iter()
            .map(|&i| &self.tasks[i])
            .find(|t| !self.verdicts.contains_key(&(t.id.clone(), annotator.to_string()))))
    }

    pub fn verdict(&self, task: &TaskId, annotator: &str) -> Option<&Verdict> {
        self.verdicts.get(&(task.clone(), annotator.to_string()))
    }

    /// Latest verdicts ordered by task id, then annotator.
    pub fn verdicts(&self) -> impl Iterator<Item = &Verdict> {
        self.verdicts.values()
    }

    pub fn audit(&self) -> &[AuditEntry] {
        &self.audit
    }

    pub fn summary(&self) -> SessionSummary {
        let concept_analogy_tasks = self
            .tasks
            .iter()
            .filter(|t| matches!(t.kind, TaskKind::ConceptAnalogy { .. }))
            .count();
        let mut progress: BTreeMap<String, usize> =
            self.annotators.iter().map(|a| (a.clone(), 0)).collect();
        for (_, a) in self.verdicts.keys() {
            *progress.entry(a.clone()).or_default() += 1;
        }
        SessionSummary {
            tasks: self.tasks.len(),
            concept_analogy_tasks,
            synset_tasks: self.tasks.len() - concept_analogy_tasks,
            annotators: self.annotators.clone(),
            verdicts: self.verdicts.len(),
            progress,
        }
    }

    /// Checks that the verdict names a known task and annotator and that its
    /// decision fits the task.
    pub fn check(&self, v: &Verdict) -> Result<(), AnnotationError> {
        let task = self
            .task(&v.task_id)
            .ok_or_else(|| AnnotationError::UnknownTask(v.task_id.clone()))?;
        if !self.queues.contains_key(&v.annotator) {
            return Err(AnnotationError::UnknownAnnotator(v.annotator.clone()));
        }
        match (&task.kind, &v.decision) {
            (TaskKind::ConceptAnalogy { .. }, Decision::Analogy(_)) => Ok(()),
            (TaskKind::Synset { candidates, .. }, Decision::Synset(words)) => {
                match words.keys().find(|w| !candidates.contains(w)) {
                    Some(w) => Err(AnnotationError::UnknownWord {
                        task: v.task_id.clone(),
                        word: w.clone(),
                    }),
                    None => Ok(()),
                }
            }
            _ => Err(AnnotationError::DecisionMismatch(v.task_id.clone())),
        }
    }

    /// Stores the verdict, replacing and auditing any earlier verdict by the
    /// same annotator on the same task.
    pub fn submit(&mut self, v: Verdict) -> Result<Ack, AnnotationError> {
        self.check(&v)?;
        let key = (v.task_id.clone(), v.annotator.clone());
        let replaced_at_ms = v.timestamp_ms;
        match self.verdicts.insert(key, v) {
            None => Ok(Ack::Stored),
            Some(old) => {
                self.audit.push(AuditEntry {
                    task_id: old.task_id,
                    annotator: old.annotator,
                    previous: old.decision,
                    previous_timestamp_ms: old.timestamp_ms,
                    replaced_at_ms,
                });
                Ok(Ack::Overwritten)
            }
        }
    }

    /// Verdicts as `task_id annotator decision` rows.
    pub fn export_tsv<W: Write>(&self, mut out: W) -> io::Result<()> {
        for v in self.verdicts() {
            writeln!(out, "{}\t{}\t{}", v.task_id, v.annotator, v.decision)?;
        }
        Ok(())
    }

    /// Agreement over concept-analogy tasks labelled by every annotator.
    pub fn agreement(&self) -> AgreementReport {
        let mut rows = Vec::new();
        for task in &self.tasks {
            if !matches!(task.kind, TaskKind::ConceptAnalogy { .. }) {
                continue;
            }
            let row: Option<Vec<AnalogyDecision>> = self
                .annotators
                .iter()
                .map(|a| match self.verdict(&task.id, a).map(|v| &v.decision) {
                    Some(Decision::Analogy(d)) => Some(*d),
                    _ => None,
                })
                .collect();
            if let Some(row) = row {
                rows.push(row);
            }
        }
        let kappa = fleiss_kappa(&rows).ok();
        let mean_pairwise_cohen = mean_pairwise_cohen_kappa(&rows);
        AgreementReport {
            kappa,
            mean_pairwise_cohen,
            n_items: rows.len(),
            n_annotators: self.annotators.len(),
        }
    }

    pub fn verdict_book(&self) -> VerdictBook {
        let mut book = VerdictBook::default();
        for v in self.verdicts() {
            match (&self.tasks[self.index[&v.task_id]].kind, &v.decision) {
                (TaskKind::ConceptAnalogy { analogy, .. }, Decision::Analogy(d)) => {
                    book.vote(analogy.clone(), *d)
                }
                (TaskKind::Synset { concept, .. }, Decision::Synset(words)) => {
                    for (w, d) in words {
                        if *d == WordDecision::Remove {
                            book.remove_word(concept.clone(), w.clone());
                        }
                    }
                }
                _ => {}
            }
        }
        book
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    /// Fleiss' κ; `None` when no item was labelled by every annotator.
    pub kappa: Option<f64>,
    pub mean_pairwise_cohen: Option<f64>,
    pub n_items: usize,
    pub n_annotators: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KappaError {
    #[error("no items")]
    NoItems,
    #[error("item {0} has fewer than two labels")]
    TooFewRaters(usize),
    #[error("item {item} has {found} labels, expected {expected}")]
    Ragged {
        item: usize,
        found: usize,
        expected: usize,
    },
}

/// Fleiss' κ for an item × rater label matrix.
///
/// Computed from integer category counts, so complete agreement yields
/// exactly 1.0.
pub fn fleiss_kappa<L: Ord>(labels: &[Vec<L>]) -> Result<f64, KappaError> {
    let n = labels.first().ok_or(KappaError::NoItems)?.len();
    if n < 2 {
        return Err(KappaError::TooFewRaters(0));
    }
    let mut totals: BTreeMap<&L, i128> = BTreeMap::new();
    let mut sum_sq: i128 = 0;
    for (i, row) in labels.iter().enumerate() {
        if row.len() != n {
            return Err(KappaError::Ragged {
                item: i,
                found: row.len(),
                expected: n,
            });
        }
        let mut counts: BTreeMap<&L, i128> = BTreeMap::new();
        for l in row {
            *counts.entry(l).or_default() += 1;
        }
        for (l, c) in counts {
            sum_sq += c * c;
            *totals.entry(l).or_default() += c;
        }
    }
    let n = n as i128;
    let m = labels.len() as i128 * n;
    let t: i128 = totals.values().map(|c| c * c).sum();
    let denom = (n - 1) * (m * m - t);
    if sum_sq == m * n || denom == 0 {
        return Ok(1.0);
    }
    let numer = (sum_sq - m) * m - t * (n - 1);
    Ok(numer as f64 / denom as f64)
}

/// Cohen's κ between two raters; 1.0 when both use a single shared category.
pub fn cohen_kappa<L: Ord>(a: &[L], b: &[L]) -> Option<f64> {
    if a.len() != b.len() || a.is_empty() {
        return None;
    }
    let n = a.len() as f64;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let mut ca: BTreeMap<&L, f64> = BTreeMap::new();
    let mut cb: BTreeMap<&L, f64> = BTreeMap::new();
    for (x, y) in a.iter().zip(b) {
        *ca.entry(x).or_default() += 1.0;
        *cb.entry(y).or_default() += 1.0;
    }
    let expected: f64 = ca
        .iter()
        .map(|(l, c)| c / n * cb.get(l).copied().unwrap_or(0.0) / n)
        .sum();
    if agree == 1.0 {
        return Some(1.0);
    }
    if expected >= 1.0 {
        return None;
    }
    Some((agree - expected) / (1.0 - expected))
}

pub fn mean_pairwise_cohen_kappa<L: Ord + Clone>(labels: &[Vec<L>]) -> Option<f64> {
    let raters = labels.first()?.len();
    let mut sum = 0.0;
    let mut pairs = 0;
    for i in 0..raters {
        for j in i + 1..raters {
            let a: Vec<L> = labels.iter().map(|r| r[i].clone()).collect();
            let b: Vec<L> = labels.iter().map(|r| r[j].clone()).collect();
            sum += cohen_kappa(&a, &b)?;
            pairs += 1;
        }
    }
    (pairs > 0).then(|| sum / pairs as f64)
}

/// How unlabelled concept analogies are treated when verdicts are applied.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictPolicy {
    /// Unlabelled items are kept.
    #[default]
    Permissive,
    /// Unlabelled items are dropped.
    Strict,
}

/// Aggregated verdicts: vote counts per concept analogy and removed words
/// per synset concept.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerdictBook {
    votes: HashMap<ConceptAnalogy, (u32, u32)>,
    removed: HashMap<ConceptId, BTreeSet<String>>,
}

impl VerdictBook {
    pub fn vote(&mut self, analogy: ConceptAnalogy, decision: AnalogyDecision) {
        let entry = self.votes.entry(analogy).or_default();
        match decision {
            AnalogyDecision::Correct => entry.0 += 1,
            AnalogyDecision::Incorrect => entry.1 += 1,
        }
    }

    pub fn remove_word(&mut self, concept: ConceptId, word: String) {
        self.removed.entry(concept).or_default().insert(word);
    }

    /// Majority of Correct votes keeps an item; a tie drops it.
    pub fn keeps(&self, analogy: &ConceptAnalogy, policy: &VerdictPolicy) -> bool {
        match self.votes.get(analogy) {
            None | Some((0, 0)) => *policy == VerdictPolicy::Permissive,
            Some((correct, incorrect)) => correct > incorrect,
        }
    }

    pub fn is_removed(&self, concept: &ConceptId, word: &str) -> bool {
        self.removed.get(concept).is_some_and(|s| s.contains(word))
    }
}

/// Filters concept analogies and synset members by the verdicts.
pub fn apply_verdicts(
    concept_analogies: &[ConceptAnalogy],
    synsets: &[(ConceptId, Vec<String>)],
    book: &VerdictBook,
    policy: &VerdictPolicy,
) -> (Vec<ConceptAnalogy>, Vec<(ConceptId, Vec<String>)>) {
    let kept = concept_analogies
        .iter()
        .filter(|ca| book.keeps(ca, policy))
        .cloned()
        .collect();
    let pruned = synsets
        .iter()
        .map(|(c, words)| {
            let words = words
                .iter()
                .filter(|w| !book.is_removed(c, w))
                .cloned()
                .collect();
            (c.clone(), words)
        })
        .collect();
    (kept, pruned)
}

#[derive(Serialize, Deserialize)]
struct SessionFile {
    seed: u64,
    annotators: Vec<String>,
    tasks: Vec<AnnotationTask>,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    log_entries: usize,
    verdicts: Vec<Verdict>,
    audit: Vec<AuditEntry>,
}

/// A session persisted in a directory.
///
/// `session.json` holds the tasks, annotators and seed. Every accepted
/// verdict is appended to `verdicts.log` as one JSON line before it is
/// applied. `snapshot.json` records the state after the first
/// `log_entries` log lines; opening the store loads it and replays the rest.
#[derive(Debug)]
pub struct SessionStore {
    dir: PathBuf,
    session: Session,
    log: File,
    log_entries: usize,
    snapshot_at: usize,
    snapshot_every: usize,
}

const SESSION_FILE: &str = "session.json";
const LOG_FILE: &str = "verdicts.log";
const SNAPSHOT_FILE: &str = "snapshot.json";

fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<(), AnnotationError> {
    let tmp = path.with_extension("json.tmp");
    let bytes = serde_json::to_vec_pretty(value).map_err(|source| AnnotationError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, AnnotationError> {
    let file = File::open(path)?;
    serde_json::from_reader(BufReader::new(file)).map_err(|source| AnnotationError::Json {
        path: path.to_path_buf(),
        source,
    })
}

impl SessionStore {
    pub const DEFAULT_SNAPSHOT_EVERY: usize = 64;

    pub fn create(dir: impl AsRef<Path>, session: Session) -> Result<Self, AnnotationError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let file = SessionFile {
            seed: session.seed,
            annotators: session.annotators.clone(),
            tasks: session.tasks.clone(),
        };
        write_json_atomic(&dir.join(SESSION_FILE), &file)?;
        let log = File::create(dir.join(LOG_FILE))?;
        let mut store = SessionStore {
            dir,
            session,
            log,
            log_entries: 0,
            snapshot_at: 0,
            snapshot_every: Self::DEFAULT_SNAPSHOT_EVERY,
        };
        for v in store.session.verdicts.values() {
            writeln!(store.log, "{}", serde_json::to_string(v).expect("verdict serializes"))?;
            store.log_entries += 1;
        }
        store.log.flush()?;
        store.snapshot()?;
        Ok(store)
    }

    pub fn open(dir: impl AsRef<Path>) -> Result<Self, AnnotationError> {
        let dir = dir.as_ref().to_path_buf();
        let file: SessionFile = read_json(&dir.join(SESSION_FILE))?;
        let mut session = create_session(file.tasks, file.annotators, file.seed)?;
        let snapshot_path = dir.join(SNAPSHOT_FILE);
        let snapshot: Snapshot = if snapshot_path.exists() {
            read_json(&snapshot_path)?
        } else {
            Snapshot {
                log_entries: 0,
                verdicts: Vec::new(),
                audit: Vec::new(),
            }
        };
        for v in snapshot.verdicts {
            session.check(&v)?;
            session.verdicts.insert((v.task_id.clone(), v.annotator.clone()), v);
        }
        session.audit = snapshot.audit;

        let log_path = dir.join(LOG_FILE);
        let mut entries = 0;
        if log_path.exists() {
            let reader = BufReader::new(File::open(&log_path)?);
            for line in reader.lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                entries += 1;
                if entries <= snapshot.log_entries {
                    continue;
                }
                let v: Verdict =
                    serde_json::from_str(&line).map_err(|source| AnnotationError::Json {
                        path: log_path.clone(),
                        source,
                    })?;
                session.submit(v)?;
            }
        }
        if entries < snapshot.log_entries {
            return Err(AnnotationError::Corrupt {
                path: log_path,
                covered: snapshot.log_entries,
                found: entries,
            });
        }
        let log = OpenOptions::new().create(true).append(true).open(&log_path)?;
        Ok(SessionStore {
            dir,
            session,
            log,
            log_entries: entries,
            snapshot_at: snapshot.log_entries,
            snapshot_every: Self::DEFAULT_SNAPSHOT_EVERY,
        })
    }

    /// Snapshot after this many new log entries; 0 disables periodic
    /// snapshots.
    pub fn set_snapshot_every(&mut self, n: usize) {
        self.snapshot_every = n;
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    /// Validates, appends to the log, then applies the verdict.
    pub fn submit(&mut self, v: Verdict) -> Result<Ack, AnnotationError> {
        self.session.check(&v)?;
        writeln!(self.log, "{}", serde_json::to_string(&v).expect("verdict serializes"))?;
        self.log.flush()?;
        self.log_entries += 1;
        let ack = self.session.submit(v)?;
        if self.snapshot_every > 0 && self.log_entries - self.snapshot_at >= self.snapshot_every {
            self.snapshot()?;
        }
        Ok(ack)
    }

    pub fn snapshot(&mut self) -> Result<(), AnnotationError> {
        self.log.sync_data()?;
        let snapshot = Snapshot {
            log_entries: self.log_entries,
            verdicts: self.session.verdicts.values().cloned().collect(),
            audit: self.session.audit.clone(),
        };
        write_json_atomic(&self.dir.join(SNAPSHOT_FILE), &snapshot)?;
        self.snapshot_at = self.log_entries;
        Ok(())
    }
}
