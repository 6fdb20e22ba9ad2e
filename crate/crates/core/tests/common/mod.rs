#![allow(dead_code)]

use std::collections::HashMap;

use coqe_core::csi::{featurize, Example, FeatureVector, LinearHead};
use coqe_core::{
    BareQuintuple, ComparisonLabel, CorpusRecord, ElementSpan, Field, Quintuple, RecordPair,
};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const IPHONE: &str = r#"{"id":"ex1","text":"iPhone 14 Pro Max has a better battery life compared to its competitors","quintuples":[{"subject":["1&&iPhone","2&&14","3&&Pro","4&&Max"],"object":["12&&its","13&&competitors"],"aspect":["8&&battery","9&&life"],"predicate":["7&&better"],"label":"COM+"}]}"#;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn positions(span: &ElementSpan) -> Vec<usize> {
    span.items().iter().map(|(i, _)| *i).collect()
}

// ---- fuzzed element texts -------------------------------------------------

const WORD_CHARS: &[char] = &[
    'a', 'b', 'c', 'd', 'e', 'g', 'h', 'i', 'k', 'l', 'm', 'n', 'o', 'p', 'r', 's', 't', 'u',
    'v', 'x', 'y', 'A', 'S', 'X', '0', '1', '4', '9', 'ă', 'â', 'đ', 'ê', 'ô', 'ơ', 'ư', 'ố',
    'ệ', 'ữ', 'Đ', '.', ',', '-', '+', '%', '\'', '"', '(', ')', '/', ':',
];

fn fuzz_word(rng: &mut impl Rng) -> String {
    let len = rng.gen_range(1..=7);
    (0..len)
        .map(|_| *WORD_CHARS.choose(rng).unwrap())
        .collect()
}

/// A non-empty phrase free of template syntax that does not read as the
/// absent-marker.
pub fn fuzz_phrase(rng: &mut impl Rng) -> String {
    loop {
        let n = rng.gen_range(1..=4);
        let phrase = (0..n).map(|_| fuzz_word(rng)).collect::<Vec<_>>().join(" ");
        if !phrase.eq_ignore_ascii_case("none") {
            return phrase;
        }
    }
}

pub fn fuzz_bare(rng: &mut impl Rng) -> BareQuintuple {
    let opt = |rng: &mut ChaCha8Rng| rng.gen_bool(0.7).then(|| fuzz_phrase(rng));
    let mut r = ChaCha8Rng::seed_from_u64(rng.gen());
    BareQuintuple {
        subject: opt(&mut r),
        object: opt(&mut r),
        aspect: opt(&mut r),
        predicate: Some(fuzz_phrase(&mut r)),
        label: *ComparisonLabel::ALL.choose(rng).unwrap(),
    }
}

pub fn fuzz_bare_list(rng: &mut impl Rng) -> Vec<BareQuintuple> {
    let n = rng.gen_range(1..=3);
    (0..n).map(|_| fuzz_bare(rng)).collect()
}

// ---- synthetic corpora ----------------------------------------------------

const FILLER: &[&str] = &[
    "the", "and", "really", "with", "when", "for", "i", "think", "overall", "is", "has", "than",
    "this", "on", "so",
];
const SUBJECTS: &[&str] = &["iPhone 14", "Galaxy S23", "Pixel 8 Pro", "Xiaomi 13", "Oppo", "Vsmart Joy 4"];
const OBJECTS: &[&str] = &["its rivals", "Nokia", "the old model", "Redmi Note 12", "Vivo"];
const ASPECTS: &[&str] = &["battery life", "camera", "screen", "price", "charging speed"];
const PREDICATES: &[(&str, ComparisonLabel)] = &[
    ("better", ComparisonLabel::ComPlus),
    ("worse", ComparisonLabel::ComMinus),
    ("best", ComparisonLabel::SupPlus),
    ("worst", ComparisonLabel::SupMinus),
    ("similar", ComparisonLabel::Eql),
    ("different", ComparisonLabel::Dif),
    ("faster", ComparisonLabel::Com),
    ("top", ComparisonLabel::Sup),
];

fn build(
    id: String,
    parts: Vec<(Option<Field>, Vec<String>)>,
    label: ComparisonLabel,
) -> CorpusRecord {
    let mut tokens: Vec<String> = Vec::new();
    let mut spans: HashMap<Field, ElementSpan> = HashMap::new();
    for (field, words) in parts {
        let start = tokens.len() + 1;
        tokens.extend(words.iter().cloned());
        if let Some(f) = field {
            let items = words
                .iter()
                .enumerate()
                .map(|(k, w)| (start + k, w.clone()))
                .collect();
            spans.insert(f, ElementSpan::new(items).unwrap());
        }
    }
    let q = Quintuple {
        subject: spans.remove(&Field::Subject),
        object: spans.remove(&Field::Object),
        aspect: spans.remove(&Field::Aspect),
        predicate: spans.remove(&Field::Predicate).unwrap(),
        label,
    };
    CorpusRecord::new(id, &tokens.join(" "), vec![q]).unwrap()
}

fn words(s: &str) -> Vec<String> {
    s.split(' ').map(str::to_string).collect()
}

fn filler(rng: &mut impl Rng, max: usize) -> Vec<String> {
    let n = rng.gen_range(0..=max);
    (0..n)
        .map(|_| FILLER.choose(rng).unwrap().to_string())
        .collect()
}

/// Comparative records built from disjoint element vocabularies, with a
/// random subset of subject/object/aspect present.
pub fn synthetic_comparative(rng: &mut impl Rng, id: String) -> CorpusRecord {
    let (pred, label) = *PREDICATES.choose(rng).unwrap();
    let mut elements: Vec<(Field, Vec<String>)> = vec![(Field::Predicate, words(pred))];
    if rng.gen_bool(0.8) {
        elements.push((Field::Subject, words(SUBJECTS.choose(rng).unwrap())));
    }
    if rng.gen_bool(0.6) {
        elements.push((Field::Object, words(OBJECTS.choose(rng).unwrap())));
    }
    if rng.gen_bool(0.6) {
        elements.push((Field::Aspect, words(ASPECTS.choose(rng).unwrap())));
    }
    elements.shuffle(rng);
    let mut parts = vec![(None, filler(rng, 2))];
    for (f, w) in elements {
        parts.push((Some(f), w));
        parts.push((None, filler(rng, 2)));
    }
    parts.retain(|(f, w)| f.is_some() || !w.is_empty());
    build(id, parts, label)
}

pub fn synthetic_noncomparative(rng: &mut impl Rng, id: String) -> CorpusRecord {
    let mut w = filler(rng, 6);
    w.push(ASPECTS.choose(rng).unwrap().to_string());
    CorpusRecord::new(id, &w.join(" "), vec![]).unwrap()
}

pub fn synthetic_corpus(n: usize, seed: u64) -> Vec<CorpusRecord> {
    let mut rng = rng(seed);
    (0..n)
        .map(|i| synthetic_comparative(&mut rng, format!("r{i}")))
        .collect()
}

// ---- alignment cases ------------------------------------------------------

const SMALL_VOCAB: &[&str] = &["a", "b", "ab", "ba", "xa", "good", "goods", "phone", "phones", "x"];

/// A sentence of at most 12 tokens from a tiny vocabulary, so duplicated
/// and near-duplicated phrases are common, plus a bare quintuple whose
/// elements are copied (sometimes perturbed) from it.
pub fn planted_case(rng: &mut impl Rng) -> (Vec<String>, BareQuintuple) {
    let n = rng.gen_range(1..=12);
    let tokens: Vec<String> = (0..n)
        .map(|_| SMALL_VOCAB.choose(rng).unwrap().to_string())
        .collect();
    let phrase = |rng: &mut ChaCha8Rng| -> String {
        let len = rng.gen_range(1..=n.min(3));
        let start = rng.gen_range(0..=n - len);
        let mut p = tokens[start..start + len].join(" ");
        if rng.gen_bool(0.2) {
            p = SMALL_VOCAB.choose(rng).unwrap().to_string();
        } else if rng.gen_bool(0.1) {
            p.push('s');
        }
        p
    };
    let mut r = ChaCha8Rng::seed_from_u64(rng.gen());
    let bare = BareQuintuple {
        subject: r.gen_bool(0.7).then(|| phrase(&mut r)),
        object: r.gen_bool(0.6).then(|| phrase(&mut r)),
        aspect: r.gen_bool(0.4).then(|| phrase(&mut r)),
        predicate: Some(phrase(&mut r)),
        label: ComparisonLabel::Com,
    };
    (tokens, bare)
}

// ---- eval fixtures --------------------------------------------------------

/// A quintuple over a fixed 8-token sentence; positions and labels are
/// drawn from small ranges so random predictions often match gold.
pub fn random_quintuple(rng: &mut impl Rng) -> Quintuple {
    let tokens: Vec<String> = (1..=8).map(|i| format!("t{i}")).collect();
    let span = |rng: &mut ChaCha8Rng| {
        let start = rng.gen_range(1..=3);
        let len = rng.gen_range(1..=2);
        ElementSpan::from_window(&tokens, start, len)
    };
    let mut r = ChaCha8Rng::seed_from_u64(rng.gen());
    Quintuple {
        subject: r.gen_bool(0.7).then(|| span(&mut r)),
        object: r.gen_bool(0.5).then(|| span(&mut r)),
        aspect: r.gen_bool(0.5).then(|| span(&mut r)),
        predicate: span(&mut r),
        label: ComparisonLabel::ALL[r.gen_range(0..3)],
    }
}

pub fn random_pair(rng: &mut impl Rng) -> RecordPair {
    let np = rng.gen_range(0..=4);
    let ng = rng.gen_range(0..=4);
    let gold: Vec<Quintuple> = (0..ng).map(|_| random_quintuple(rng)).collect();
    let predicted = (0..np)
        .map(|_| {
            if !gold.is_empty() && rng.gen_bool(0.5) {
                gold.choose(rng).unwrap().clone()
            } else {
                random_quintuple(rng)
            }
        })
        .collect();
    RecordPair {
        id: String::new(),
        predicted,
        gold,
    }
}

/// Maximum bipartite matching by augmenting paths, edges where `eq` holds.
pub fn max_matching<T>(pred: &[T], gold: &[T], eq: impl Fn(&T, &T) -> bool) -> usize {
    fn try_assign(
        p: usize,
        adj: &[Vec<usize>],
        seen: &mut [bool],
        owner: &mut [Option<usize>],
    ) -> bool {
        for &g in &adj[p] {
            if seen[g] {
                continue;
            }
            seen[g] = true;
            if owner[g].is_none() || try_assign(owner[g].unwrap(), adj, seen, owner) {
                owner[g] = Some(p);
                return true;
            }
        }
        false
    }
    let adj: Vec<Vec<usize>> = pred
        .iter()
        .map(|p| (0..gold.len()).filter(|&g| eq(p, &gold[g])).collect())
        .collect();
    let mut owner = vec![None; gold.len()];
    (0..pred.len())
        .filter(|&p| try_assign(p, &adj, &mut vec![false; gold.len()], &mut owner))
        .count()
}

/// Field-by-field equality restricted to `fields`, written independently of
/// the crate's key projection.
pub fn equal_on(a: &Quintuple, b: &Quintuple, fields: &[Field]) -> bool {
    fields.iter().all(|f| match f.element() {
        Some(e) => a.element(e) == b.element(e),
        None => a.label == b.label,
    })
}

// ---- classifier helpers ---------------------------------------------------

pub fn dense_vector(values: &[f64]) -> FeatureVector {
    FeatureVector::from_dense(values).unwrap()
}

pub fn random_head(rng: &mut impl Rng, dimension: usize) -> LinearHead {
    let mut head = LinearHead::zeros(dimension);
    for k in 0..2 {
        for w in head.weights[k].iter_mut() {
            *w = rng.gen_range(-1.0..1.0);
        }
        head.bias[k] = rng.gen_range(-1.0..1.0);
    }
    head
}

pub fn random_examples(rng: &mut impl Rng, dimension: usize, n: usize) -> Vec<Example> {
    (0..n)
        .map(|i| {
            let values: Vec<f64> = (0..dimension)
                .map(|_| {
                    if rng.gen_bool(0.6) {
                        rng.gen_range(-2.0..2.0)
                    } else {
                        0.0
                    }
                })
                .collect();
            Example {
                features: dense_vector(&values),
                comparative: i % 2 == 0,
            }
        })
        .collect()
}

/// Objective computed from scratch: mean cross-entropy of the two-way
/// softmax plus `l2 / 2 · ‖W‖²`.
pub fn reference_loss(head: &LinearHead, examples: &[Example], l2: f64) -> f64 {
    let mut total = 0.0;
    for ex in examples {
        let dense: Vec<f64> = (0..head.dimension)
            .map(|i| ex.features.get(i as u32))
            .collect();
        let z: Vec<f64> = (0..2)
            .map(|k| {
                head.bias[k]
                    + head.weights[k]
                        .iter()
                        .zip(&dense)
                        .map(|(w, x)| w * x)
                        .sum::<f64>()
            })
            .collect();
        let y = if ex.comparative { 0 } else { 1 };
        let log_norm = (z[0].exp() + z[1].exp()).ln();
        total += log_norm - z[y];
    }
    let reg: f64 = head.weights.iter().flatten().map(|w| w * w).sum();
    total / examples.len() as f64 + 0.5 * l2 * reg
}

pub fn dense_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Near-duplicate filter fixture: one comparative review and
/// non-comparative copies of it with 0, 1, 2, ... tokens changed.
pub fn near_duplicate_corpus() -> Vec<CorpusRecord> {
    let base = "the camera of this phone is much better than the old model in low light";
    let toks: Vec<&str> = base.split(' ').collect();
    let pred = toks.iter().position(|t| *t == "better").unwrap() + 1;
    let q = Quintuple {
        subject: None,
        object: None,
        aspect: Some(ElementSpan::new(vec![(2, "camera".into())]).unwrap()),
        predicate: ElementSpan::new(vec![(pred, "better".into())]).unwrap(),
        label: ComparisonLabel::ComPlus,
    };
    let mut out = vec![CorpusRecord::new("c0", base, vec![q]).unwrap()];
    let replacements = ["screen", "tablet", "cheaper", "new", "dim", "bright", "zoom"];
    let slots = [1, 4, 7, 11, 14, 13, 10];
    for changed in 0..=replacements.len() {
        let mut t: Vec<String> = toks.iter().map(|s| s.to_string()).collect();
        for k in 0..changed {
            t[slots[k]] = replacements[k].to_string();
        }
        out.push(CorpusRecord::new(format!("n{changed}"), &t.join(" "), vec![]).unwrap());
    }
    out.push(CorpusRecord::new("far", "delivery was quick and the box arrived intact", vec![]).unwrap());
    out
}

/// Ten short reviews, half comparative, separable by their words.
pub fn separable_toy() -> Vec<Example> {
    let comparative = [
        "battery is better than before",
        "this phone is faster than that one",
        "camera is worse than the old model",
        "the best screen on the market",
        "price is higher than expected",
    ];
    let plain = [
        "delivery was quick",
        "nice box and good packing",
        "the seller replied fast",
        "i bought it yesterday",
        "colour looks nice",
    ];
    comparative
        .iter()
        .map(|s| (s, true))
        .chain(plain.iter().map(|s| (s, false)))
        .map(|(s, c)| Example {
            features: featurize(s),
            comparative: c,
        })
        .collect()
}
