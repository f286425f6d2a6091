//! Command-line pipeline: parse, extract, evaluate, retrofit, relations,
//! annotate-serve and stats.

pub mod config;
pub mod serve;

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use lexanalogy::annotation::{build_tasks, create_session, SessionStore, VerdictBook, VerdictPolicy};
use lexanalogy::evaluation::{evaluate_with, load_benchmark, load_embedding};
use lexanalogy::extraction::{
    extract_analogies, group_relations, read_analogies, read_concept_analogies, write_analogies,
    write_concept_analogies, write_relations,
};
use lexanalogy::lexicon::{load_frequencies, load_lexicon, load_taxonomy};
use lexanalogy::retrofit::{build_knowledge_graph, load_knowledge_graph, retrofit_from};
use lexanalogy::{parse_definition, DefEdge, DefGraph, DefNode};

use crate::config::{check_exist, require, Config};

#[derive(Debug, Parser)]
#[command(name = "lexanalogy", version, about = "Word analogies from a definition lexicon")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse one definition and print its graph.
    Parse {
        definition: String,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Extract analogies from the lexicon.
    Extract {
        #[arg(long)]
        min_freq: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Session directory whose verdicts gate the output.
        #[arg(long)]
        verdicts: Option<PathBuf>,
        #[arg(long, value_enum)]
        policy: Option<PolicyArg>,
    },
    /// Answer an analogy benchmark with an embedding.
    Evaluate {
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        benchmark: Option<PathBuf>,
        /// Per-question TSV.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Count a question as covered only if every synset member is in
        /// the vocabulary.
        #[arg(long)]
        full_synset: bool,
    },
    /// Retrofit an embedding to a knowledge graph.
    Retrofit {
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Edge list; built from the lexicon and taxonomy when absent.
        #[arg(long)]
        kg: Option<PathBuf>,
        /// Start the iteration from these vectors instead.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Group analogies into relation classes.
    Relations {
        /// Analogies TSV (default: analogies.tsv in the output directory).
        analogies: Option<PathBuf>,
        /// Write here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the annotation API and UI.
    AnnotateServe {
        #[arg(long)]
        host: Option<String>,
        #[arg(long)]
        port: Option<u16>,
        /// Session directory.
        #[arg(long)]
        session: Option<PathBuf>,
        /// Concept analogies to annotate when creating a new session.
        #[arg(long)]
        tasks: Option<PathBuf>,
    },
    /// Print lexicon, taxonomy and frequency statistics.
    Stats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Dot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Permissive,
    Strict,
}

impl From<PolicyArg> for VerdictPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Permissive => VerdictPolicy::Permissive,
            PolicyArg::Strict => VerdictPolicy::Strict,
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            bail!("--jobs must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Parse { definition, format } => cmd_parse(&definition, format, &mut out),
        Command::Extract {
            min_freq,
            out: dir,
            verdicts,
            policy,
        } => {
            if let Some(m) = min_freq {
                cfg.extraction.min_freq = m;
            }
            if let Some(p) = policy {
                cfg.annotation.policy = p.into();
            }
            if let Some(v) = verdicts {
                cfg.paths.session_dir = Some(v);
                cfg.annotation.apply_verdicts = true;
            }
            cmd_extract(&cfg, dir.unwrap_or_else(|| cfg.output_dir()), &mut out)
        }
        Command::Evaluate {
            embeddings,
            benchmark,
            out: tsv,
            full_synset,
        } => {
            let embeddings = embeddings.or(cfg.paths.embeddings.clone());
            let benchmark = benchmark
                .or(cfg.paths.benchmark.clone())
                .unwrap_or_else(|| cfg.output_dir().join("analogies.tsv"));
            let tsv = tsv.unwrap_or_else(|| cfg.output_dir().join("evaluation.tsv"));
            if full_synset {
                cfg.evaluation.require_full_synset = true;
            }
            cmd_evaluate(&cfg, require(&embeddings, "embeddings")?, &benchmark, &tsv, &mut out)
        }
        Command::Retrofit {
            embeddings,
            kg,
            init,
            out: emb_out,
            report,
        } => {
            let embeddings = embeddings.or(cfg.paths.embeddings.clone());
            let kg = kg.or(cfg.paths.kg.clone());
            let emb_out = emb_out.unwrap_or_else(|| cfg.output_dir().join("retrofitted.txt"));
            let report = report.unwrap_or_else(|| cfg.output_dir().join("retrofit_report.tsv"));
            cmd_retrofit(
                &cfg,
                require(&embeddings, "embeddings")?,
                kg.as_deref(),
                init.as_deref(),
                &emb_out,
                &report,
                &mut out,
            )
        }
        Command::Relations { analogies, out: dest } => {
            let src = analogies.unwrap_or_else(|| cfg.output_dir().join("analogies.tsv"));
            match dest {
                Some(p) => {
                    let mut f = create_file(&p)?;
                    cmd_relations(&src, &mut f)?;
                    f.flush()?;
                    Ok(())
                }
                None => cmd_relations(&src, &mut out),
            }
        }
        Command::AnnotateServe {
            host,
            port,
            session,
            tasks,
        } => {
            if let Some(h) = host {
                cfg.server.host = h;
            }
            if let Some(p) = port {
                cfg.server.port = p;
            }
            if let Some(s) = session {
                cfg.paths.session_dir = Some(s);
            }
            cmd_annotate_serve(&cfg, tasks)
        }
        Command::Stats => cmd_stats(&cfg, &mut out),
    }
}

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn open_file(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(f))
}

pub fn cmd_parse(definition: &str, format: Format, out: &mut impl Write) -> Result<()> {
    let g = parse_definition(definition)?;
    match format {
        Format::Text => write_listing(&g, out)?,
        Format::Dot => write_dot(&g, out)?,
    }
    Ok(())
}

fn node_kind(n: &DefNode) -> &'static str {
    match n {
        DefNode::Concept(_) => "concept",
        DefNode::Word(_) => "word",
        DefNode::Function(_) => "function",
        DefNode::SelfRef => "self",
    }
}

fn edge_label(e: &DefEdge) -> String {
    match e {
        DefEdge::Attribute(a) => a.clone(),
        DefEdge::Arg(i) => format!("arg{i}"),
    }
}

/// `node <id> <kind> <label>` lines, then `edge <src> <tgt> <label>` lines.
pub fn write_listing(g: &DefGraph, out: &mut impl Write) -> io::Result<()> {
    for (i, n) in g.nodes().iter().enumerate() {
        writeln!(out, "node\t{i}\t{}\t{}", node_kind(n), n.label())?;
    }
    for (s, e, t) in g.edges() {
        writeln!(out, "edge\t{s}\t{t}\t{}", edge_label(e))?;
    }
    Ok(())
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

pub fn write_dot(g: &DefGraph, out: &mut impl Write) -> io::Result<()> {
    writeln!(out, "digraph definition {{")?;
    for (i, n) in g.nodes().iter().enumerate() {
        let shape = match n {
            DefNode::Concept(_) => "box",
            DefNode::Word(_) => "plaintext",
            DefNode::Function(_) => "ellipse",
            DefNode::SelfRef => "circle",
        };
        writeln!(out, "  n{i} [label=\"{}\", shape={shape}];", dot_escape(&n.label()))?;
    }
    for (s, e, t) in g.edges() {
        writeln!(out, "  n{s} -> n{t} [label=\"{}\"];", dot_escape(&edge_label(e)))?;
    }
    writeln!(out, "}}")
}

pub fn cmd_extract(cfg: &Config, dir: PathBuf, out: &mut impl Write) -> Result<()> {
    let lex_path = require(&cfg.paths.lexicon, "lexicon")?;
    let tax_path = require(&cfg.paths.taxonomy, "taxonomy")?;
    let freq_path = require(&cfg.paths.freq, "freq")?;
    let session_dir = cfg.session_dir();
    let mut needed = vec![lex_path, tax_path, freq_path];
    if cfg.annotation.apply_verdicts {
        needed.push(&session_dir);
    }
    check_exist(needed)?;
    let ex_cfg = cfg.extraction.to_config()?;

    let lex = load_lexicon(lex_path)?;
    let tax = load_taxonomy(tax_path)?;
    let freq = load_frequencies(freq_path)?;
    log::info!(
        "loaded {} senses, {} concepts, {} taxonomy nodes",
        lex.sense_count(),
        lex.concept_count(),
        tax.len()
    );

    let book: Option<VerdictBook> = if cfg.annotation.apply_verdicts {
        let store = SessionStore::open(&session_dir)?;
        Some(store.session().verdict_book())
    } else {
        None
    };
    let result = extract_analogies(
        &lex,
        &tax,
        &freq,
        &ex_cfg,
        book.as_ref().map(|b| (b, &cfg.annotation.policy)),
    )?;

    let mut f = create_file(&dir.join("analogies.tsv"))?;
    write_analogies(&mut f, &result.analogies)?;
    f.flush()?;
    let mut f = create_file(&dir.join("concept_analogies.tsv"))?;
    write_concept_analogies(&mut f, &result.concept_analogies)?;
    f.flush()?;
    let mut f = create_file(&dir.join("extraction_report.txt"))?;
    result.report.write(&mut f)?;
    f.flush()?;
    writeln!(
        out,
        "analogies={} concept_analogies={} skipped={}",
        result.analogies.len(),
        result.concept_analogies.len(),
        result.report.skipped.len()
    )?;
    Ok(())
}

pub fn cmd_evaluate(
    cfg: &Config,
    embeddings: &Path,
    benchmark: &Path,
    tsv: &Path,
    out: &mut impl Write,
) -> Result<()> {
    check_exist([embeddings, benchmark])?;
    let e = load_embedding(embeddings).with_context(|| embeddings.display().to_string())?;
    let questions = load_benchmark(benchmark).with_context(|| benchmark.display().to_string())?;
    let report = evaluate_with(&e, &questions, &cfg.evaluation);
    let mut f = create_file(tsv)?;
    report.write_tsv(&mut f)?;
    f.flush()?;
    writeln!(out, "{}", report.summary_line())?;
    Ok(())
}

pub fn cmd_retrofit(
    cfg: &Config,
    embeddings: &Path,
    kg: Option<&Path>,
    init: Option<&Path>,
    emb_out: &Path,
    report_out: &Path,
    out: &mut impl Write,
) -> Result<()> {
    let mut needed = vec![embeddings];
    needed.extend(kg);
    needed.extend(init);
    let built_from = match kg {
        Some(_) => None,
        None => {
            let lex = require(&cfg.paths.lexicon, "lexicon")
                .context("no knowledge graph given and none can be built")?;
            let tax = require(&cfg.paths.taxonomy, "taxonomy")
                .context("no knowledge graph given and none can be built")?;
            needed.extend([lex, tax]);
            Some((lex, tax))
        }
    };
    check_exist(needed)?;

    let e = load_embedding(embeddings).with_context(|| embeddings.display().to_string())?;
    let graph = match (kg, built_from) {
        (Some(p), _) => load_knowledge_graph(p).with_context(|| p.display().to_string())?,
        (None, Some((lex, tax))) => {
            let g = build_knowledge_graph(&load_taxonomy(tax)?, &load_lexicon(lex)?);
            let path = cfg.output_dir().join("kg.tsv");
            let mut f = create_file(&path)?;
            g.write(&mut f)?;
            f.flush()?;
            log::info!("built knowledge graph with {} edges at {}", g.len(), path.display());
            g
        }
        (None, None) => unreachable!(),
    };
    let start = match init {
        Some(p) => {
            let other = load_embedding(p).with_context(|| p.display().to_string())?;
            if other.dim() != e.dim() {
                bail!(
                    "{}: dimension {} does not match the embedding's {}",
                    p.display(),
                    other.dim(),
                    e.dim()
                );
            }
            // Words missing from the initial vectors start at their anchor.
            let mut m = e.matrix().clone();
            for (i, w) in e.words().iter().enumerate() {
                if let Some(v) = other.vector(w) {
                    m.row_mut(i).assign(&v);
                }
            }
            m
        }
        None => e.matrix().clone(),
    };
    let (q, report) = retrofit_from(&e, &start, &graph, &cfg.retrofit)?;
    let mut f = create_file(emb_out)?;
    q.write(&mut f)?;
    f.flush()?;
    let mut f = create_file(report_out)?;
    report.write_tsv(&mut f)?;
    f.flush()?;
    writeln!(
        out,
        "passes={} converged={} words_updated={} edges_used={}",
        report.passes_run, report.converged, report.words_updated, report.edges_used
    )?;
    Ok(())
}

pub fn cmd_relations(analogies: &Path, out: &mut impl Write) -> Result<()> {
    check_exist([analogies])?;
    let items = read_analogies(open_file(analogies)?)
        .with_context(|| analogies.display().to_string())?;
    let classes = group_relations(&items);
    write_relations(out, &classes)?;
    log::info!("{} relation classes", classes.len());
    Ok(())
}

pub fn cmd_stats(cfg: &Config, out: &mut impl Write) -> Result<()> {
    let lex_path = require(&cfg.paths.lexicon, "lexicon")?;
    let mut needed = vec![lex_path];
    needed.extend(cfg.paths.taxonomy.as_deref());
    needed.extend(cfg.paths.freq.as_deref());
    check_exist(needed)?;
    let lex = load_lexicon(lex_path)?;
    writeln!(out, "words\t{}", lex.word_count())?;
    writeln!(out, "senses\t{}", lex.sense_count())?;
    writeln!(out, "concepts\t{}", lex.concept_count())?;
    writeln!(out, "attributes\t{}", lex.attributes().count())?;
    let single = lex.senses().filter(|s| s.definition.node_count() == 1).count();
    writeln!(out, "single_node_senses\t{single}")?;
    if let Some(p) = &cfg.paths.taxonomy {
        writeln!(out, "taxonomy_nodes\t{}", load_taxonomy(p)?.len())?;
    }
    if let Some(p) = &cfg.paths.freq {
        let freq = load_frequencies(p)?;
        let min = cfg.extraction.min_freq;
        let mut words: Vec<&str> = lex.senses().map(|s| s.word.as_str()).collect();
        words.dedup();
        let common = words.iter().filter(|w| freq.is_common(w, min)).count();
        writeln!(out, "frequency_entries\t{}", freq.len())?;
        writeln!(out, "common_words\t{common}")?;
    }
    Ok(())
}

/// Opens the session directory, creating the session from concept analogies
/// first if it does not exist yet.
pub fn open_or_create_session(cfg: &Config, tasks: Option<PathBuf>) -> Result<SessionStore> {
    let dir = cfg.session_dir();
    if dir.join("session.json").exists() {
        let mut store = SessionStore::open(&dir)?;
        store.set_snapshot_every(cfg.annotation.snapshot_every);
        return Ok(store);
    }
    let tasks_path = tasks.unwrap_or_else(|| cfg.output_dir().join("concept_analogies.tsv"));
    let lex_path = require(&cfg.paths.lexicon, "lexicon")?;
    let freq_path = require(&cfg.paths.freq, "freq")?;
    check_exist([tasks_path.as_path(), lex_path, freq_path])?;
    if cfg.annotation.annotators.is_empty() {
        bail!("annotation.annotators is empty");
    }
    let items = read_concept_analogies(open_file(&tasks_path)?)
        .with_context(|| tasks_path.display().to_string())?;
    let lex = load_lexicon(lex_path)?;
    let freq = load_frequencies(freq_path)?;
    let min = cfg.extraction.min_freq;
    let tasks = build_tasks(&lex, &items, cfg.extraction.expansion_depth_limit, |c| {
        lex.synset_of(c)
            .into_iter()
            .filter(|w| freq.is_common(w, min))
            .collect()
    })?;
    let session = create_session(tasks, cfg.annotation.annotators.clone(), cfg.seed)?;
    let mut store = SessionStore::create(&dir, session)?;
    store.set_snapshot_every(cfg.annotation.snapshot_every);
    log::info!("created session in {}", dir.display());
    Ok(store)
}

pub fn cmd_annotate_serve(cfg: &Config, tasks: Option<PathBuf>) -> Result<()> {
    if let Some(ui) = &cfg.paths.ui_dir {
        check_exist([ui.as_path()])?;
    }
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    runtime.block_on(async {
        let addr = format!("{}:{}", cfg.server.host, cfg.server.port);
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        let store = open_or_create_session(cfg, tasks)?;
        let local = listener.local_addr()?;
        println!("listening on http://{local}");
        io::stdout().flush()?;
        serve::serve(listener, Arc::new(Mutex::new(store)), cfg.paths.ui_dir.clone()).await
    })
}
