use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::Duration;

use tempfile::TempDir;

const LAB: &str = "{InstitutePlace|場所:telic={or({experiment|實驗:location={~}},{research|研究:location={~}})}}";

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/steeds")
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lexanalogy"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let f = fixture();
    let text = format!(
        "[paths]\nlexicon = {:?}\ntaxonomy = {:?}\nfreq = {:?}\noutput_dir = \"out\"\n{extra}",
        f.join("lexicon.tsv"),
        f.join("taxonomy.tsv"),
        f.join("freq.tsv"),
    );
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

fn lines(path: &Path) -> BTreeSet<String> {
    fs::read_to_string(path).unwrap().lines().map(str::to_string).collect()
}

#[test]
fn parse_lists_the_laboratory_graph() {
    let tmp = TempDir::new().unwrap();
    let o = run(tmp.path(), &["parse", LAB]);
    assert!(o.status.success());
    let text = stdout(&o);
    let nodes: Vec<&str> = text.lines().filter(|l| l.starts_with("node\t")).collect();
    let edges: Vec<&str> = text.lines().filter(|l| l.starts_with("edge\t")).collect();
    assert_eq!(nodes.len(), 6);
    assert_eq!(edges.len(), 5);
    assert_eq!(nodes[0], "node\t0\tconcept\tInstitutePlace|場所");
    let labelled: BTreeSet<&str> = nodes.iter().map(|l| l.rsplit('\t').next().unwrap()).collect();
    for label in ["InstitutePlace|場所", "or", "experiment|實驗", "research|研究", "~"] {
        assert!(labelled.contains(label), "{label} missing");
    }
}

#[test]
fn parse_malformed_exits_1() {
    let tmp = TempDir::new().unwrap();
    let o = run(tmp.path(), &["parse", "{a|甲:"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(o.stdout.is_empty());
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn dot_output_has_the_same_graph() {
    let tmp = TempDir::new().unwrap();
    let text = stdout(&run(tmp.path(), &["parse", LAB]));
    let o = run(tmp.path(), &["parse", "--format", "dot", LAB]);
    assert!(o.status.success());
    let dot = stdout(&o);
    assert!(dot.starts_with("digraph"));

    let want_nodes: BTreeSet<(String, String)> = text
        .lines()
        .filter_map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            (f[0] == "node").then(|| (f[1].to_string(), f[3].to_string()))
        })
        .collect();
    let want_edges: BTreeSet<(String, String, String)> = text
        .lines()
        .filter_map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            (f[0] == "edge").then(|| (f[1].to_string(), f[2].to_string(), f[3].to_string()))
        })
        .collect();
    let mut got_nodes = BTreeSet::new();
    let mut got_edges = BTreeSet::new();
    for l in dot.lines().map(str::trim) {
        let label = l.split('"').nth(1).map(str::to_string);
        if let Some((src, rest)) = l.split_once(" -> ") {
            let tgt = rest.split_whitespace().next().unwrap();
            got_edges.insert((src[1..].to_string(), tgt[1..].to_string(), label.unwrap()));
        } else if l.starts_with('n') {
            let id = l.split_whitespace().next().unwrap();
            got_nodes.insert((id[1..].to_string(), label.unwrap()));
        }
    }
    assert_eq!(got_nodes, want_nodes);
    assert_eq!(got_edges, want_edges);
}

#[test]
fn extract_finds_the_timber_analogy() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "");
    let o = run(tmp.path(), &["--config", cfg.to_str().unwrap(), "extract"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = tmp.path().join("out");
    let analogies = fs::read_to_string(out.join("analogies.tsv")).unwrap();
    let row: Vec<&str> = analogies
        .lines()
        .find(|l| l.starts_with("良材\t木頭\t駿馬\t"))
        .expect("analogy present")
        .split('\t')
        .collect();
    assert!(row[3].split('|').any(|w| w == "馬"));
    assert!(fs::read_to_string(out.join("concept_analogies.tsv")).unwrap().contains("良材\t2\t"));
    let report = fs::read_to_string(out.join("extraction_report.txt")).unwrap();
    assert!(report.contains("final\t1\n"));
}

#[test]
fn raising_min_freq_gives_a_subset() {
    let tmp = TempDir::new().unwrap();
    let freq = fs::read_to_string(fixture().join("freq.tsv"))
        .unwrap()
        .replace("駙\t12", "駙\t20")
        .replace("山馬\t12", "山馬\t30");
    fs::write(tmp.path().join("freq.tsv"), freq).unwrap();
    let f = fixture();
    let text = format!(
        "[paths]\nlexicon = {:?}\ntaxonomy = {:?}\nfreq = \"freq.tsv\"\noutput_dir = \"base\"\n",
        f.join("lexicon.tsv"),
        f.join("taxonomy.tsv"),
    );
    fs::write(tmp.path().join("c.toml"), text).unwrap();
    let base = run(tmp.path(), &["--config", "c.toml", "extract"]);
    assert!(base.status.success());
    let base = lines(&tmp.path().join("base/analogies.tsv"));
    assert!(!base.is_empty());
    for m in ["1", "12", "13", "25", "100"] {
        let dir = format!("m{m}");
        let o = run(tmp.path(), &["--config", "c.toml", "extract", "--min-freq", m, "--out", &dir]);
        assert!(o.status.success());
        // Synsets may shrink, so compare on the question words.
        let key = |l: &String| l.split('\t').take(3).collect::<Vec<_>>().join("\t");
        let base_keys: BTreeSet<String> = base.iter().map(key).collect();
        let raised = lines(&tmp.path().join(&dir).join("analogies.tsv"));
        for l in &raised {
            assert!(base_keys.contains(&key(l)), "min_freq {m}: {l} not in base output");
        }
    }
}

#[test]
fn missing_lexicon_exits_before_work() {
    let tmp = TempDir::new().unwrap();
    let text = "[paths]\nlexicon = \"nope.tsv\"\ntaxonomy = \"nope.tsv\"\nfreq = \"nope.tsv\"\noutput_dir = \"out\"\n";
    fs::write(tmp.path().join("c.toml"), text).unwrap();
    let o = run(tmp.path(), &["--config", "c.toml", "extract"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.tsv"));
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn bad_config_exits_1() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("c.toml"), "[paths]\nlexcon = \"x\"\n").unwrap();
    assert_eq!(run(tmp.path(), &["--config", "c.toml", "stats"]).status.code(), Some(1));
    assert_eq!(run(tmp.path(), &["--config", "absent.toml", "stats"]).status.code(), Some(1));
    assert_eq!(run(tmp.path(), &["--jobs", "0", "parse", "{a|甲}"]).status.code(), Some(1));
}

#[test]
fn stats_counts_the_fixture() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "");
    let o = run(tmp.path(), &["--config", cfg.to_str().unwrap(), "stats"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("senses\t14\n"));
    assert!(text.contains("concepts\t1\n"));
    assert!(text.contains("attributes\t3\n"));
}

const EMBEDDING: &str = "4 3\n甲 0.5 0.25 -1\n乙 0.1 0.9 0.3\n丙 -0.7 0.2 0.4\n丁 0.3 -0.3 0.8\n";

#[test]
fn retrofit_with_empty_kg_is_byte_identical() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("emb.txt"), EMBEDDING).unwrap();
    fs::write(tmp.path().join("kg.tsv"), "").unwrap();
    let o = run(
        tmp.path(),
        &["retrofit", "--embeddings", "emb.txt", "--kg", "kg.tsv", "--out", "r.txt", "--report", "r.tsv"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(tmp.path().join("r.txt")).unwrap(), EMBEDDING.as_bytes());
}

#[test]
fn retrofit_report_objective_never_increases() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("emb.txt"), EMBEDDING).unwrap();
    fs::write(
        tmp.path().join("kg.tsv"),
        "甲\t乙\tsame_taxon\n乙\t丙\thypo_hyper\n甲\t丙\tsame_taxon\n",
    )
    .unwrap();
    fs::write(tmp.path().join("c.toml"), "[retrofit]\niterations = 25\nconvergence_eps = 0.0\n").unwrap();
    let o = run(
        tmp.path(),
        &["--config", "c.toml", "retrofit", "--embeddings", "emb.txt", "--kg", "kg.tsv", "--out", "r.txt", "--report", "r.tsv"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = fs::read_to_string(tmp.path().join("r.tsv")).unwrap();
    let objective: Vec<f64> = report
        .lines()
        .skip(1)
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split('\t').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(objective.len(), 26);
    assert!(objective[0] > 0.0 && objective[25] < objective[0]);
    for w in objective.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-12), "objective rose: {} -> {}", w[0], w[1]);
    }
    // 丁 has no edges and keeps its row.
    let out = fs::read_to_string(tmp.path().join("r.txt")).unwrap();
    assert!(out.lines().any(|l| l == "丁 0.3 -0.3 0.8"));
}

#[test]
fn retrofit_bad_dimension_exits_1() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("bad.txt"), "2 3\n甲 0.1 0.2 0.3\n乙 0.1 0.2\n").unwrap();
    fs::write(tmp.path().join("emb.txt"), EMBEDDING).unwrap();
    fs::write(tmp.path().join("init.txt"), "1 2\n甲 0.1 0.2\n").unwrap();
    fs::write(tmp.path().join("kg.tsv"), "").unwrap();
    let o = run(tmp.path(), &["retrofit", "--embeddings", "bad.txt", "--kg", "kg.tsv", "--out", "r.txt"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!tmp.path().join("r.txt").exists());
    let o = run(
        tmp.path(),
        &["retrofit", "--embeddings", "emb.txt", "--kg", "kg.tsv", "--init", "init.txt", "--out", "r.txt"],
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn retrofit_builds_kg_from_config() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "");
    fs::write(
        tmp.path().join("emb.txt"),
        "3 2\n山馬 1 0\n馬 0 1\n木頭 1 1\n",
    )
    .unwrap();
    let o = run(
        tmp.path(),
        &["--config", cfg.to_str().unwrap(), "retrofit", "--embeddings", "emb.txt"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let kg = fs::read_to_string(tmp.path().join("out/kg.tsv")).unwrap();
    assert!(kg.lines().any(|l| l == "山馬\t馬\tsame_taxon"), "{kg}");
    assert!(tmp.path().join("out/retrofitted.txt").exists());
    assert!(tmp.path().join("out/retrofit_report.tsv").exists());
}

#[test]
fn evaluate_prints_summary_and_writes_tsv() {
    let tmp = TempDir::new().unwrap();
    fs::write(
        tmp.path().join("emb.txt"),
        "5 2\nman 1 0\nwoman 1 1\nking 3 0\nqueen 3 1\napple -1 -1\n",
    )
    .unwrap();
    fs::write(
        tmp.path().join("bench.tsv"),
        "man\twoman\tking\tqueen\nman\twoman\tking\tprincess\n",
    )
    .unwrap();
    let o = run(
        tmp.path(),
        &["evaluate", "--embeddings", "emb.txt", "--benchmark", "bench.tsv", "--out", "e.tsv"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o), "accuracy=1 covered=1 total=2\n");
    let tsv = fs::read_to_string(tmp.path().join("e.tsv")).unwrap();
    assert!(tsv.contains("queen"));

    fs::write(tmp.path().join("none.tsv"), "man\twoman\tking\tprincess\n").unwrap();
    let o = run(
        tmp.path(),
        &["evaluate", "--embeddings", "emb.txt", "--benchmark", "none.tsv", "--out", "e.tsv"],
    );
    assert!(o.status.success());
    assert_eq!(stdout(&o), "accuracy=n/a covered=0 total=1\n");

    let o = run(tmp.path(), &["evaluate", "--embeddings", "emb.txt", "--benchmark", "absent.tsv"]);
    assert_eq!(o.status.code(), Some(1));
}

fn class_of(output: &str) -> Vec<(String, String)> {
    output
        .lines()
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            (f[0].to_string(), format!("{}:{}", f[1], f[2]))
        })
        .collect()
}

#[test]
fn relations_join_the_juvenile_adult_chain() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("a.tsv"), "樹苗\t樹\t蝌蚪\t青蛙\n蝌蚪\t青蛙\t孑孓\t蚊\n").unwrap();
    let o = run(tmp.path(), &["relations", "a.tsv"]);
    assert!(o.status.success());
    let rows = class_of(&stdout(&o));
    let ids: BTreeSet<&String> = rows.iter().map(|(id, _)| id).collect();
    assert_eq!(ids.len(), 1);
    let pairs: BTreeSet<&str> = rows.iter().map(|(_, p)| p.as_str()).collect();
    assert_eq!(pairs, BTreeSet::from(["樹苗:樹", "蝌蚪:青蛙", "孑孓:蚊"]));
}

#[test]
fn relations_of_empty_input_is_empty() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("a.tsv"), "").unwrap();
    let o = run(tmp.path(), &["relations", "a.tsv", "--out", "r.tsv"]);
    assert!(o.status.success());
    assert_eq!(fs::read(tmp.path().join("r.tsv")).unwrap(), b"");
}

#[test]
fn relations_of_k_chains_form_one_class() {
    let tmp = TempDir::new().unwrap();
    for k in 1..=8usize {
        let text: String = (0..k)
            .map(|i| format!("x{i}\ty{i}\tx{}\ty{}\n", i + 1, i + 1))
            .collect();
        fs::write(tmp.path().join("a.tsv"), text).unwrap();
        let o = run(tmp.path(), &["relations", "a.tsv"]);
        assert!(o.status.success());
        let rows = class_of(&stdout(&o));
        let ids: BTreeSet<&String> = rows.iter().map(|(id, _)| id).collect();
        assert_eq!(ids.len(), 1, "k={k}");
        assert_eq!(rows.len(), k + 1, "k={k}");
    }
}

fn http(addr: &str, method: &str, path: &str, body: &str) -> String {
    let mut s = TcpStream::connect(addr).unwrap();
    s.set_read_timeout(Some(Duration::from_secs(10))).unwrap();
    write!(
        s,
        "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut out = String::new();
    s.read_to_string(&mut out).unwrap();
    out
}

fn extracted_session_config(tmp: &Path, port: u16) -> PathBuf {
    let cfg = write_config(tmp, &format!("[annotation]\nannotators = [\"a\", \"b\"]\n[server]\nport = {port}\n"));
    let o = run(tmp, &["--config", cfg.to_str().unwrap(), "extract"]);
    assert!(o.status.success());
    cfg
}

#[test]
fn annotate_serve_port_in_use_exits_1() {
    let tmp = TempDir::new().unwrap();
    let taken = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port();
    let cfg = extracted_session_config(tmp.path(), port);
    let o = run(tmp.path(), &["--config", cfg.to_str().unwrap(), "annotate-serve"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("binding"));
}

#[cfg(unix)]
#[test]
fn annotate_serve_answers_and_flushes_on_shutdown() {
    let tmp = TempDir::new().unwrap();
    let cfg = extracted_session_config(tmp.path(), 0);
    let mut child = bin()
        .current_dir(tmp.path())
        .args(["--config", cfg.to_str().unwrap(), "annotate-serve"])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on http://").expect("address line").to_string();

    let resp = http(&addr, "GET", "/api/session", "");
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    assert!(resp.contains("\"tasks\":2"));

    let resp = http(&addr, "GET", "/api/tasks/next?annotator=a", "");
    let body = &resp[resp.find("\r\n\r\n").unwrap() + 4..];
    let id_at = body.find("\"id\":\"").unwrap() + 6;
    let id = &body[id_at..id_at + 16];
    let verdict = if body.contains("\"type\":\"synset\"") {
        r#"{"annotator":"a","words":{}}"#
    } else {
        r#"{"annotator":"a","decision":"correct"}"#
    };
    let resp = http(&addr, "POST", &format!("/api/tasks/{id}/verdict"), verdict);
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");

    Command::new("kill").args(["-TERM", &child.id().to_string()]).status().unwrap();
    let status = child.wait().unwrap();
    assert!(status.success());
    let snapshot = fs::read_to_string(tmp.path().join("out/session/snapshot.json")).unwrap();
    assert!(snapshot.contains(id));
    assert!(snapshot.contains("\"log_entries\": 1"));
}
