mod common;

use std::collections::{HashMap, HashSet};

use coqe_core::align::{align_oracle, AlignmentConfig};
use coqe_core::augment::{
    augment_corpus, augment_record, collect_word_sets, record_rng, AugmentConfig, BalanceMode,
};
use coqe_core::csi::{
    binary_scores, cosine, featurize, filter_unannotated, loss_and_gradient, train,
    LinearHead, SimilarityConfig, TrainConfig,
};
use coqe_core::eval::{match_counts, micro_counts, Prf};
use coqe_core::{align_quintuple, full_grid, normalize_text, write_record, ElementCombination, Field};
use rand::Rng;

#[test]
fn branch_and_bound_matches_exhaustive_search() {
    let cfg = AlignmentConfig::default();
    let mut rng = common::rng(7);
    let mut aligned = 0;
    for _ in 0..2000 {
        let (tokens, bare) = common::planted_case(&mut rng);
        let fast = align_quintuple(&tokens, &bare, &cfg);
        assert_eq!(fast, align_oracle(&tokens, &bare, &cfg), "{tokens:?} {bare:?}");
        aligned += usize::from(fast.is_ok());
    }
    assert!(aligned > 1000, "too few successful cases: {aligned}");
}

#[test]
fn gold_spans_are_recovered_by_text() {
    let cfg = AlignmentConfig::default();
    for r in common::synthetic_corpus(200, 3) {
        for q in &r.quintuples {
            let back = align_quintuple(&r.tokens, &q.to_bare(), &cfg).unwrap();
            assert_eq!(back.to_bare(), q.to_bare());
        }
    }
}

#[test]
fn multiset_intersection_is_a_maximum_matching() {
    let mut rng = common::rng(11);
    for _ in 0..500 {
        let pair = common::random_pair(&mut rng);
        for comb in ElementCombination::all() {
            let fields: Vec<Field> = comb.fields().collect();
            let expected = common::max_matching(&pair.predicted, &pair.gold, |a, b| {
                common::equal_on(a, b, &fields)
            });
            let c = match_counts(&pair.predicted, &pair.gold, comb);
            assert_eq!(c.tp, expected, "{comb}");
            assert_eq!((c.n_pred, c.n_gold), (pair.predicted.len(), pair.gold.len()));
        }
    }
}

#[test]
fn coarser_combinations_match_at_least_as_often() {
    let mut rng = common::rng(12);
    let all = ElementCombination::all();
    for _ in 0..300 {
        let pair = common::random_pair(&mut rng);
        let tp: HashMap<u8, usize> = all
            .iter()
            .map(|c| (c.mask(), match_counts(&pair.predicted, &pair.gold, *c).tp))
            .collect();
        for a in &all {
            for b in &all {
                if a.is_subset_of(*b) {
                    assert!(tp[&a.mask()] >= tp[&b.mask()], "{a} vs {b}");
                }
            }
        }
    }
}

#[test]
fn adding_a_correct_prediction_never_lowers_tp() {
    let mut rng = common::rng(13);
    for _ in 0..300 {
        let mut pair = common::random_pair(&mut rng);
        if pair.gold.is_empty() {
            continue;
        }
        let before: Vec<usize> = ElementCombination::all()
            .into_iter()
            .map(|c| micro_counts(std::slice::from_ref(&pair), c).tp)
            .collect();
        let g = pair.gold[rng.gen_range(0..pair.gold.len())].clone();
        pair.predicted.push(g);
        let after: Vec<usize> = ElementCombination::all()
            .into_iter()
            .map(|c| micro_counts(std::slice::from_ref(&pair), c).tp)
            .collect();
        assert!(before.iter().zip(&after).all(|(b, a)| a >= b));
    }
}

#[test]
fn report_scores_agree_with_report_counts() {
    let mut rng = common::rng(14);
    let pairs: Vec<_> = (0..50).map(|_| common::random_pair(&mut rng)).collect();
    let report = full_grid(&pairs);
    for comb in ElementCombination::all() {
        let c = report.counts(comb).total;
        let p = if c.n_pred == 0 { 0.0 } else { c.tp as f64 / c.n_pred as f64 };
        let r = if c.n_gold == 0 { 0.0 } else { c.tp as f64 / c.n_gold as f64 };
        let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        let s = report.scores(comb).micro;
        assert!((s.precision - p).abs() < 1e-12);
        assert!((s.recall - r).abs() < 1e-12);
        assert!((s.f1 - f).abs() < 1e-12);
        for v in [s.precision, s.recall, s.f1, report.scores(comb).macro_avg.f1] {
            assert!((0.0..=1.0).contains(&v));
        }
    }
}

#[test]
fn binary_scores_match_confusion_matrix() {
    let mut rng = common::rng(15);
    for _ in 0..200 {
        let n = rng.gen_range(0..20);
        let pred: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
        let gold: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
        let mut tp = 0;
        let mut fp = 0;
        let mut fn_ = 0;
        for (p, g) in pred.iter().zip(&gold) {
            match (p, g) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
        let expected = Prf::from_counts(coqe_core::eval::Counts {
            tp,
            n_pred: tp + fp,
            n_gold: tp + fn_,
        });
        let s = binary_scores(&pred, &gold);
        assert_eq!((s.tp, s.fp, s.fn_), (tp, fp, fn_));
        assert!((s.precision - expected.precision).abs() < 1e-12);
        assert!((s.recall - expected.recall).abs() < 1e-12);
        assert!((s.f1 - expected.f1).abs() < 1e-12);
    }
}

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

#[test]
fn analytic_gradient_matches_finite_differences() {
    let mut rng = common::rng(16);
    let h = 1e-5;
    for _ in 0..100 {
        let dimension = rng.gen_range(1..=6);
        let head = common::random_head(&mut rng, dimension);
        let n = rng.gen_range(1..=5);
        let examples = common::random_examples(&mut rng, dimension, n);
        let l2 = rng.gen_range(0.0..0.5);
        let (loss, grad) = loss_and_gradient(&head, &examples, l2);
        assert!((loss - common::reference_loss(&head, &examples, l2)).abs() < 1e-10);
        let numeric = |perturb: &dyn Fn(&mut LinearHead, f64)| {
            let mut plus = head.clone();
            perturb(&mut plus, h);
            let mut minus = head.clone();
            perturb(&mut minus, -h);
            (common::reference_loss(&plus, &examples, l2)
                - common::reference_loss(&minus, &examples, l2))
                / (2.0 * h)
        };
        for k in 0..2 {
            let fd = numeric(&|m: &mut LinearHead, d| m.bias[k] += d);
            assert!(relative_error(grad.bias[k], fd) < 1e-5, "bias {k}: {} vs {fd}", grad.bias[k]);
            for i in 0..dimension {
                let fd = numeric(&|m: &mut LinearHead, d| m.weights[k][i] += d);
                assert!(
                    relative_error(grad.weights[k][i], fd) < 1e-5,
                    "w[{k}][{i}]: {} vs {fd}",
                    grad.weights[k][i]
                );
            }
        }
    }
}

#[test]
fn training_loss_does_not_increase() {
    let examples = common::separable_toy();
    let cfg = TrainConfig::default();
    let (_, report) = train(&examples, &cfg).unwrap();
    for w in report.losses.windows(2) {
        assert!(w[1] <= w[0] + 1e-6, "{} -> {}", w[0], w[1]);
    }
    let mut rng = common::rng(17);
    let random = common::random_examples(&mut rng, 8, 40);
    let (_, report) = train(&random, &cfg).unwrap();
    for w in report.losses.windows(2) {
        assert!(w[1] <= w[0] + 1e-6, "{} -> {}", w[0], w[1]);
    }
}

#[test]
fn filter_is_monotone_in_threshold() {
    let corpus = common::near_duplicate_corpus();
    let mut previous: Option<HashSet<String>> = None;
    for t in [0.3, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99, 1.0] {
        let cfg = SimilarityConfig { threshold: t, ..Default::default() };
        let removed: HashSet<String> = filter_unannotated(&corpus, &cfg, None)
            .unwrap()
            .removed_ids
            .into_iter()
            .collect();
        if let Some(prev) = &previous {
            assert!(removed.is_subset(prev), "threshold {t}");
        }
        previous = Some(removed);
    }
}

#[test]
fn lexical_similarity_matches_dense_cosine() {
    let corpus = common::near_duplicate_corpus();
    let dense = |text: &str| {
        let fv = featurize(text);
        (0..fv.dimension() as u32).map(|i| fv.get(i)).collect::<Vec<f64>>()
    };
    let anchor = dense(&corpus[0].text);
    for r in &corpus[1..] {
        let expected = common::dense_cosine(&anchor, &dense(&r.text));
        let got = cosine(&featurize(&corpus[0].text), &featurize(&r.text)).unwrap();
        assert!((expected - got).abs() < 1e-12, "{}", r.id);
    }
    // One changed token out of fifteen stays above the default threshold.
    let one = cosine(&featurize(&corpus[0].text), &featurize(&corpus[2].text)).unwrap();
    assert!(one >= 0.8, "{one}");
}

#[test]
fn external_vectors_drive_the_filter() {
    let corpus = common::near_duplicate_corpus();
    let mut vectors: HashMap<String, Vec<f64>> = HashMap::new();
    for (i, r) in corpus.iter().enumerate() {
        let v = if r.id == "n3" { vec![1.0, 0.1] } else { vec![0.0, 1.0 + i as f64] };
        vectors.insert(r.id.clone(), v);
    }
    vectors.insert("c0".into(), vec![1.0, 0.0]);
    let cfg = SimilarityConfig {
        threshold: 0.8,
        backend: coqe_core::csi::SimilarityBackend::ExternalVectors,
    };
    let out = filter_unannotated(&corpus, &cfg, Some(&vectors)).unwrap();
    assert_eq!(out.removed_ids, ["n3"]);
    let expected = common::dense_cosine(&[1.0, 0.0], &[1.0, 0.1]);
    assert!((out.removed_scores[0] - expected).abs() < 1e-12);
    vectors.remove("n5");
    assert!(filter_unannotated(&corpus, &cfg, Some(&vectors)).is_err());
}

#[test]
fn augmentation_is_deterministic_per_record() {
    let corpus = common::synthetic_corpus(30, 21);
    let sets = collect_word_sets(&corpus);
    let cfg = AugmentConfig { per_record_samples: 5, ..Default::default() };
    for (i, r) in corpus.iter().enumerate() {
        let a = augment_record(r, &sets, &cfg, &mut record_rng(cfg.seed, i)).unwrap();
        let b = augment_record(r, &sets, &cfg, &mut record_rng(cfg.seed, i)).unwrap();
        assert_eq!(a, b);
    }
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| augment_corpus(&corpus, &cfg, &AlignmentConfig::default()))
            .records
            .iter()
            .map(write_record)
            .collect::<Vec<_>>()
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn augmented_records_validate_and_keep_pairs_coupled() {
    let corpus = common::synthetic_corpus(40, 22);
    let sets = collect_word_sets(&corpus);
    let cfg = AugmentConfig {
        per_record_samples: 10,
        replace_probability: 0.7,
        balance: BalanceMode::Off,
        ..Default::default()
    };
    for (i, r) in corpus.iter().enumerate() {
        let original = &r.quintuples[0];
        let original_pair = (normalize_text(&original.predicate.text()), original.label);
        for v in augment_record(r, &sets, &cfg, &mut record_rng(cfg.seed, i)).unwrap() {
            v.validate().unwrap();
            let q = &v.quintuples[0];
            let pair = (normalize_text(&q.predicate.text()), q.label);
            assert!(pair == original_pair || sets.contains_pair(&pair.0, pair.1), "{pair:?}");
        }
    }
}
