mod common;

use ndarray::Array2;
use proptest::prelude::*;

use lexanalogy::annotation::{
    apply_verdicts, create_session, fleiss_kappa, AnalogyDecision, AnnotationTask, Decision,
    SessionStore, Verdict, VerdictBook, VerdictPolicy,
};
use lexanalogy::defparser::DefNode;
use lexanalogy::evaluation::{answer_question, evaluate, Embedding};
use lexanalogy::extraction::{compare_graphs, ConceptAnalogy, SenseRef};
use lexanalogy::retrofit::{retrofit, EdgeKind, KnowledgeGraph, RetrofitConfig};
use lexanalogy::{parse_definition, serialize_definition, Analogy, ConceptId};

const CONCEPTS: [&str; 6] = ["human|人", "馬|horse", "wood|木", "a|甲", "b|乙", "HighQuality|優質"];
const WORDS: [&str; 3] = ["木頭", "馬匹", "山"];
const ATTRS: [&str; 3] = ["telic", "location", "x"];

fn head() -> impl Strategy<Value = String> {
    prop_oneof![
        4 => prop::sample::select(&CONCEPTS[..]).prop_map(str::to_string),
        1 => prop::sample::select(&WORDS[..]).prop_map(str::to_string),
    ]
}

/// Random definition text, with self references only as leaves.
fn definition() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        4 => head().prop_map(|h| format!("{{{h}}}")),
        1 => Just("{~}".to_string()),
    ];
    leaf.prop_recursive(3, 12, 3, |inner| {
        prop_oneof![
            (head(), prop::collection::vec((prop::sample::select(&ATTRS[..]), inner.clone()), 1..3)).prop_map(
                |(h, attrs)| {
                    let body: Vec<String> = attrs.iter().map(|(a, d)| format!("{a}={d}")).collect();
                    format!("{{{h}:{}}}", body.join(","))
                }
            ),
            (prop::sample::select(&["or", "and"][..]), prop::collection::vec(inner, 1..3))
                .prop_map(|(f, args)| format!("{{{f}({})}}", args.join(","))),
        ]
    })
}

proptest! {
    #[test]
    fn serialization_round_trips(text in definition()) {
        let g = parse_definition(&text).unwrap();
        let s = serialize_definition(&g).unwrap();
        let back = parse_definition(&s).unwrap();
        prop_assert_eq!(&back, &g);
        prop_assert_eq!(serialize_definition(&back).unwrap(), s);
    }

    #[test]
    fn parser_is_total(text in "\\PC{0,40}") {
        if let Err(e) = parse_definition(&text) {
            prop_assert!(e.offset <= text.len());
        }
    }

    #[test]
    fn parser_is_total_on_near_definitions(text in "[{}():=,~ |a-z甲乙]{0,30}") {
        let _ = parse_definition(&text);
    }

    #[test]
    fn compare_is_symmetric(a in definition(), b in definition()) {
        let g = parse_definition(&a).unwrap();
        let h = parse_definition(&b).unwrap();
        let forward = compare_graphs(&g, &h);
        let backward = compare_graphs(&h, &g).map(|(x, y)| (y, x));
        prop_assert_eq!(forward.clone(), backward);
        prop_assert_eq!(forward, common::brute_force_diff(&g, &h));
        prop_assert_eq!(compare_graphs(&g, &g), None);
    }

    #[test]
    fn relabelling_one_concept_is_detected(text in definition(), pick in any::<prop::sample::Index>()) {
        let g = parse_definition(&text).unwrap();
        let concepts: Vec<usize> = (0..g.node_count())
            .filter(|&i| matches!(g.node(i), DefNode::Concept(_)))
            .collect();
        prop_assume!(!concepts.is_empty());
        let at = concepts[pick.index(concepts.len())];
        let fresh: ConceptId = "fresh|新".parse().unwrap();
        let h = common::relabel(
            &g,
            |i, n| if i == at { DefNode::Concept(fresh.clone()) } else { n.clone() },
            |_, e| e.clone(),
        );
        let old = g.node(at).concept().unwrap().clone();
        prop_assert_eq!(compare_graphs(&g, &h), Some((old, fresh)));
    }
}

fn embedding_and_questions() -> impl Strategy<Value = (Embedding, Vec<Analogy>)> {
    (4usize..20, 1usize..5).prop_flat_map(|(v, d)| {
        let values = prop::collection::vec(-1.0f64..1.0, v * d);
        let question = (0..v, 0..v, 0..v, prop::collection::vec(0..v + 2, 1..3));
        (values, prop::collection::vec(question, 1..10)).prop_map(move |(values, qs)| {
            let words: Vec<String> = (0..v).map(|i| format!("w{i}")).collect();
            let e = Embedding::new(words, Array2::from_shape_vec((v, d), values).unwrap()).unwrap();
            let qs = qs
                .into_iter()
                .filter_map(|(a, b, c, s)| {
                    Analogy::new(
                        format!("w{a}"),
                        format!("w{b}"),
                        format!("w{c}"),
                        s.into_iter().map(|i| format!("w{i}")),
                    )
                    .ok()
                })
                .collect();
            (e, qs)
        })
    })
}

proptest! {
    #[test]
    fn answers_exclude_question_words((e, qs) in embedding_and_questions()) {
        for q in &qs {
            if let Some(a) = answer_question(&e, q) {
                prop_assert!(a != q.w1 && a != q.w2 && a != q.w3);
            }
            prop_assert_eq!(answer_question(&e, q), common::naive_answer(&e, q));
        }
    }

    #[test]
    fn duplication_keeps_accuracy((e, qs) in embedding_and_questions()) {
        let once = evaluate(&e, &qs);
        let doubled: Vec<Analogy> = qs.iter().chain(&qs).cloned().collect();
        let twice = evaluate(&e, &doubled);
        prop_assert_eq!(twice.covered, 2 * once.covered);
        prop_assert_eq!(twice.accuracy, once.accuracy);
        prop_assert!(once.covered <= once.total);
        if let Some(a) = once.accuracy {
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }

    #[test]
    fn scaling_keeps_answers((e, qs) in embedding_and_questions(), scale in 0.01f64..100.0) {
        let scaled = e.with_matrix(e.matrix() * scale).unwrap();
        for q in &qs {
            prop_assert_eq!(answer_question(&e, q), answer_question(&scaled, q));
        }
    }
}

fn retrofit_instance() -> impl Strategy<Value = (Embedding, KnowledgeGraph)> {
    (2usize..12, 1usize..4).prop_flat_map(|(n, d)| {
        (
            prop::collection::vec(-2.0f64..2.0, n * d),
            prop::collection::vec((0..n, 0..n, any::<bool>()), 0..2 * n),
        )
            .prop_map(move |(values, edges)| {
                let words: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
                let e = Embedding::new(words.clone(), Array2::from_shape_vec((n, d), values).unwrap()).unwrap();
                let mut kg = KnowledgeGraph::new();
                for (a, b, same) in edges {
                    let kind = if same { EdgeKind::SameTaxon } else { EdgeKind::HypoHyper };
                    kg.insert(&words[a], &words[b], kind);
                }
                (e, kg)
            })
    })
}

proptest! {
    #[test]
    fn retrofit_objective_never_rises((e, kg) in retrofit_instance()) {
        let cfg = RetrofitConfig { iterations: 50, ..Default::default() };
        let (_, report) = retrofit(&e, &kg, &cfg).unwrap();
        for w in report.objective_per_pass.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
        }
    }

    #[test]
    fn isolated_words_are_unchanged((e, kg) in retrofit_instance()) {
        let (out, _) = retrofit(&e, &kg, &RetrofitConfig::default()).unwrap();
        let linked: std::collections::BTreeSet<&str> = kg.edges().flat_map(|(a, b, _)| [a, b]).collect();
        for (i, w) in e.words().iter().enumerate() {
            if !linked.contains(w.as_str()) {
                prop_assert_eq!(out.matrix().row(i), e.matrix().row(i));
            }
        }
    }

    #[test]
    fn fixed_point_is_stable((e, kg) in retrofit_instance()) {
        let cfg = RetrofitConfig { iterations: 20_000, convergence_eps: 1e-15, ..Default::default() };
        let (out, _) = retrofit(&e, &kg, &cfg).unwrap();
        let again = lexanalogy::retrofit::retrofit_from(&e, out.matrix(), &kg, &RetrofitConfig { iterations: 1, ..Default::default() }).unwrap().0;
        for (a, b) in again.matrix().iter().zip(out.matrix()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}

fn label_matrix() -> impl Strategy<Value = Vec<Vec<u8>>> {
    (1usize..15, 2usize..6).prop_flat_map(|(items, raters)| {
        prop::collection::vec(prop::collection::vec(0u8..3, raters), items)
    })
}

proptest! {
    #[test]
    fn kappa_is_permutation_invariant(labels in label_matrix(), seed in any::<u64>()) {
        let k = fleiss_kappa(&labels).unwrap();
        let mut rows = labels.clone();
        rows.reverse();
        let shift = (seed as usize) % labels[0].len();
        let rotated: Vec<Vec<u8>> = rows
            .iter()
            .map(|r| r.iter().cycle().skip(shift).take(r.len()).copied().collect())
            .collect();
        prop_assert_eq!(fleiss_kappa(&rotated).unwrap().to_bits(), k.to_bits());
        let unanimous = labels.iter().all(|r| r.iter().all(|l| *l == r[0]));
        prop_assert_eq!(k == 1.0, unanimous);
        prop_assert!((-1.0..=1.0).contains(&k));
    }

    #[test]
    fn apply_verdicts_is_a_filter_and_idempotent(
        votes in prop::collection::vec((0usize..6, any::<bool>()), 0..20),
        removals in prop::collection::vec((0usize..3, 0usize..4), 0..6),
        strict in any::<bool>(),
    ) {
        let item = |i: usize| ConceptAnalogy {
            left: SenseRef { word: format!("左{i}"), sense_index: 1, concept: "wood|木".parse().unwrap() },
            right: SenseRef { word: format!("右{i}"), sense_index: 1, concept: "馬|horse".parse().unwrap() },
        };
        let concept = |i: usize| -> ConceptId { format!("c{i}|概{i}").parse().unwrap() };
        let word = |j: usize| format!("字{j}");
        let items: Vec<ConceptAnalogy> = (0..6).map(item).collect();
        let synsets: Vec<(ConceptId, Vec<String>)> =
            (0..3).map(|i| (concept(i), (0..4).map(word).collect())).collect();
        let mut book = VerdictBook::default();
        for (i, ok) in votes {
            book.vote(item(i), if ok { AnalogyDecision::Correct } else { AnalogyDecision::Incorrect });
        }
        for (c, w) in removals {
            book.remove_word(concept(c), word(w));
        }
        let policy = if strict { VerdictPolicy::Strict } else { VerdictPolicy::Permissive };
        let (kept, pruned) = apply_verdicts(&items, &synsets, &book, &policy);
        prop_assert!(kept.iter().all(|k| items.contains(k)));
        for ((c, words), (c2, all)) in pruned.iter().zip(&synsets) {
            prop_assert_eq!(c, c2);
            prop_assert!(words.iter().all(|w| all.contains(w)));
        }
        let (kept2, pruned2) = apply_verdicts(&kept, &pruned, &book, &policy);
        prop_assert_eq!(kept2, kept);
        prop_assert_eq!(pruned2, pruned);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn store_reopens_to_the_same_session(
        submissions in prop::collection::vec((0usize..4, 0usize..3, any::<bool>()), 0..25),
        every in 0usize..5,
        seed in any::<u64>(),
    ) {
        let tasks: Vec<AnnotationTask> = (0..4)
            .map(|i| AnnotationTask::synset(format!("c{i}|概{i}").parse().unwrap(), [format!("字{i}")]))
            .chain((0..4).map(|i| {
                let g = parse_definition("{wood|木}").unwrap();
                AnnotationTask::concept_analogy(
                    ConceptAnalogy {
                        left: SenseRef { word: format!("左{i}"), sense_index: 1, concept: "wood|木".parse().unwrap() },
                        right: SenseRef { word: format!("右{i}"), sense_index: 1, concept: "馬|horse".parse().unwrap() },
                    },
                    g.clone(),
                    g,
                )
            }))
            .collect();
        let annotators: Vec<String> = ["甲", "乙", "丙"].map(String::from).to_vec();
        let session = create_session(tasks.clone(), annotators.clone(), seed).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let mut store = SessionStore::create(dir.path(), session).unwrap();
        store.set_snapshot_every(every);
        for (t, (task, who, ok)) in submissions.into_iter().enumerate() {
            let decision = if ok { AnalogyDecision::Correct } else { AnalogyDecision::Incorrect };
            store
                .submit(Verdict {
                    task_id: tasks[4 + task].id.clone(),
                    annotator: annotators[who].clone(),
                    decision: Decision::Analogy(decision),
                    timestamp_ms: t as u64,
                })
                .unwrap();
        }
        let expected = store.session().clone();
        drop(store);
        let reopened = SessionStore::open(dir.path()).unwrap();
        prop_assert_eq!(reopened.session(), &expected);
        for a in &annotators {
            prop_assert_eq!(reopened.session().queue(a), expected.queue(a));
        }
    }
}
