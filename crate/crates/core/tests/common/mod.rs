#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng;

use zhsnacs::corpus::NpSpan;
use zhsnacs::{
    parse_document, AnnotatedDocument, Construal, Hierarchy, Label, Language, Sentence,
    TargetAnnotation, TargetKind,
};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("fixtures")
        .join(name)
}

pub fn fixture_text(name: &str) -> String {
    std::fs::read_to_string(fixture_path(name)).unwrap()
}

pub fn fixture(name: &str, h: &Hierarchy) -> AnnotatedDocument {
    parse_document(&fixture_text(name), h).unwrap_or_else(|e| panic!("{name}: {e}"))
}

const FORMS: &[&str] = &[
    "在", "对", "上", "中", "里面", "来说", "他", "学术", "书", "in", "the", "book", "_", "a b",
    "#", "T1", "—", "《", "20,000",
];
const POS: &[&str] = &["P", "LC", "NN", "VV", "PN", "PU", "IN", "DT"];
const ANNOTATORS: &[&str] = &["a1", "a2", "gold", "注释者"];

/// A random valid document: non-overlapping targets per annotator,
/// multi-token targets with gaps, specials, and NP spans.
pub fn random_document<R: Rng>(rng: &mut R, h: &Hierarchy) -> AnnotatedDocument {
    let language = if rng.gen_bool(0.5) { Language::Zh } else { Language::En };
    let mut doc = AnnotatedDocument::new(&format!("doc{}", rng.gen_range(0..1000)), language);
    let n_sentences = rng.gen_range(0..5);
    for s in 0..n_sentences {
        let n_tokens = rng.gen_range(1..8);
        let tagged: Vec<(&str, &str)> = (0..n_tokens)
            .map(|_| (*FORMS.choose(rng).unwrap(), *POS.choose(rng).unwrap()))
            .collect();
        let sentence = Sentence::from_tagged(&format!("zh_s.{s}"), &tagged);

        for annotator in ANNOTATORS {
            if rng.gen_bool(0.4) {
                continue;
            }
            let mut free: Vec<usize> = (1..=n_tokens).collect();
            free.shuffle(rng);
            let mut groups: BTreeSet<u32> = BTreeSet::new();
            while !free.is_empty() && rng.gen_bool(0.6) {
                let take = rng.gen_range(1..=free.len().min(3));
                let mut indices: Vec<usize> = free.drain(..take).collect();
                indices.sort_unstable();
                let mut group = rng.gen_range(1..50);
                while !groups.insert(group) {
                    group += 1;
                }
                let all_pos = |p: &str| {
                    indices
                        .iter()
                        .all(|&i| sentence.token(i).unwrap().pos == p)
                };
                let kind = if all_pos("P") && rng.gen_bool(0.7) {
                    TargetKind::Coverb
                } else if all_pos("LC") && rng.gen_bool(0.7) {
                    TargetKind::Localizer
                } else {
                    TargetKind::Other
                };
                let label = if rng.gen_bool(0.1) {
                    Label::Special("DISCOURSE".into())
                } else {
                    let pick = |rng: &mut R| h.nodes()[rng.gen_range(0..h.len())].name.clone();
                    let scene = pick(rng);
                    let function = if rng.gen_bool(0.5) { scene.clone() } else { pick(rng) };
                    Label::Construal(Construal { scene, function })
                };
                let np_span = rng.gen_bool(0.3).then(|| {
                    let start = rng.gen_range(1..=n_tokens);
                    NpSpan {
                        start,
                        end: rng.gen_range(start..=n_tokens),
                    }
                });
                doc.annotations.push(TargetAnnotation {
                    sentence_id: sentence.id.clone(),
                    token_indices: indices,
                    kind,
                    label,
                    annotator: annotator.to_string(),
                    group,
                    np_span,
                });
            }
        }
        doc.sentences.push(sentence);
    }
    doc.canonicalize();
    doc
}

/// Synthetic bitext: `units` sentence pairs where every target carries an NP
/// span, plus random word links.
pub struct Bitext {
    pub en: AnnotatedDocument,
    pub zh: AnnotatedDocument,
    pub links: zhsnacs::alignment::WordLinks,
}

pub fn random_bitext<R: Rng>(rng: &mut R, units: usize) -> Bitext {
    let mut en = AnnotatedDocument::new("en", Language::En);
    let mut zh = AnnotatedDocument::new("zh", Language::Zh);
    let mut links = zhsnacs::alignment::WordLinks::new();
    for u in 0..units {
        let unit = format!("syn.{u}");
        let en_len = rng.gen_range(2..10);
        let zh_len = rng.gen_range(2..10);
        for (doc, prefix, len, pos) in [(&mut en, "en_", en_len, "IN"), (&mut zh, "zh_", zh_len, "P")] {
            let tagged: Vec<(String, String)> = (0..len)
                .map(|i| (format!("w{i}"), if i % 3 == 0 { pos.to_string() } else { "NN".to_string() }))
                .collect();
            let sid = format!("{prefix}{unit}");
            doc.sentences.push(Sentence::from_tagged(&sid, &tagged));
            let n_targets = rng.gen_range(0..=3.min(len));
            let mut idx: Vec<usize> = (1..=len).collect();
            idx.shuffle(rng);
            for (g, &i) in idx.iter().take(n_targets).enumerate() {
                let start = rng.gen_range(1..=len);
                let end = rng.gen_range(start..=len.min(start + 3));
                doc.annotations.push(TargetAnnotation {
                    sentence_id: sid.clone(),
                    token_indices: vec![i],
                    kind: TargetKind::Other,
                    label: Label::Construal(Construal::new("Locus", "Locus")),
                    annotator: "gold".into(),
                    group: g as u32 + 1,
                    np_span: Some(NpSpan { start, end }),
                });
            }
        }
        for _ in 0..rng.gen_range(0..6) {
            links.insert(&unit, rng.gen_range(1..=en_len), rng.gen_range(1..=zh_len));
        }
    }
    en.canonicalize();
    zh.canonicalize();
    Bitext { en, zh, links }
}

/// Every (unit, en group, zh group) whose NP spans are connected by at
/// least one link, found by checking all target pairs against all links.
pub fn brute_force_pairs(b: &Bitext) -> BTreeSet<(String, u32, u32)> {
    let mut out = BTreeSet::new();
    for s in &b.en.sentences {
        let unit = s.id.trim_start_matches("en_").to_string();
        let zh_sid = format!("zh_{unit}");
        for et in b.en.annotations.iter().filter(|t| t.sentence_id == s.id) {
            for zt in b.zh.annotations.iter().filter(|t| t.sentence_id == zh_sid) {
                let (Some(es), Some(zs)) = (et.np_span, zt.np_span) else {
                    continue;
                };
                let connected = b.links.get(&unit).iter().any(|&(e, z)| {
                    es.start <= e && e <= es.end && zs.start <= z && z <= zs.end
                });
                if connected {
                    out.insert((unit.clone(), et.group, zt.group));
                }
            }
        }
    }
    out
}

/// Cohen's kappa from a float confusion matrix.
pub fn kappa_oracle(a: &[u32], b: &[u32]) -> f64 {
    let n = a.len() as f64;
    let mut confusion: HashMap<(u32, u32), f64> = HashMap::new();
    let mut labels = BTreeSet::new();
    for (&x, &y) in a.iter().zip(b) {
        *confusion.entry((x, y)).or_default() += 1.0;
        labels.insert(x);
        labels.insert(y);
    }
    let po: f64 = labels
        .iter()
        .map(|&l| confusion.get(&(l, l)).copied().unwrap_or(0.0))
        .sum::<f64>()
        / n;
    let pe: f64 = labels
        .iter()
        .map(|&l| {
            let row: f64 = labels.iter().map(|&m| confusion.get(&(l, m)).copied().unwrap_or(0.0)).sum();
            let col: f64 = labels.iter().map(|&m| confusion.get(&(m, l)).copied().unwrap_or(0.0)).sum();
            row * col
        })
        .sum::<f64>()
        / (n * n);
    (po - pe) / (1.0 - pe)
}
