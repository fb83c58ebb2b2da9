//! Adposition alignment across a sentence-aligned English–Chinese bitext.
//!
//! Sentence ids pair up by their shared unit id: `en_lpp_1943.2` and
//! `zh_lpp_1943.2` both belong to unit `lpp_1943.2`. Pairs are either read
//! from a manual alignment file or proposed from the NPs the two targets
//! govern, matched through token-level word links.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AnnotatedDocument, Language, Sentence, TargetAnnotation, TargetKind, Token};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitextUnit {
    pub unit_id: String,
    pub en_sentence_id: String,
    pub zh_sentence_id: String,
}

/// Unit id of a sentence id: the language prefix (`en_`, `eng_`, `zh_`,
/// `zho_`, `cmn_`) is dropped, anything else is kept as is.
pub fn unit_id_of(sentence_id: &str, language: Language) -> &str {
    let prefixes: &[&str] = match language {
        Language::En => &["en_", "eng_"],
        Language::Zh => &["zh_", "zho_", "cmn_"],
    };
    prefixes
        .iter()
        .find_map(|p| sentence_id.strip_prefix(p))
        .unwrap_or(sentence_id)
}

/// Units present in both documents, in English document order.
pub fn bitext_units(en: &AnnotatedDocument, zh: &AnnotatedDocument) -> Vec<BitextUnit> {
    let zh_ids: HashMap<&str, &str> = zh
        .sentences
        .iter()
        .map(|s| (unit_id_of(&s.id, Language::Zh), s.id.as_str()))
        .collect();
    en.sentences
        .iter()
        .filter_map(|s| {
            let unit = unit_id_of(&s.id, Language::En);
            zh_ids.get(unit).map(|zh_id| BitextUnit {
                unit_id: unit.to_string(),
                en_sentence_id: s.id.clone(),
                zh_sentence_id: zh_id.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairSource {
    Manual,
    Heuristic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentPair {
    pub unit_id: String,
    pub en_target: TargetAnnotation,
    pub zh_target: TargetAnnotation,
    pub source: PairSource,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evidence: Option<String>,
}

impl AlignmentPair {
    /// The same pair seen from the other side; used to check rate symmetry.
    pub fn swapped(&self) -> AlignmentPair {
        AlignmentPair {
            en_target: self.zh_target.clone(),
            zh_target: self.en_target.clone(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AlignmentError {
    #[error("line {line}: expected {expected} tab-separated fields, found {found}")]
    BadColumnCount {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: unknown unit '{unit}'")]
    UnknownUnit { line: usize, unit: String },
    #[error("line {line}: bad target group '{group}'")]
    BadGroup { line: usize, group: String },
    #[error("line {line}: no {language} target {annotator}/{group} in unit '{unit}'")]
    DanglingTarget {
        line: usize,
        language: Language,
        unit: String,
        annotator: String,
        group: String,
    },
    #[error("line {line}: bad word link '{link}'")]
    BadLink { line: usize, link: String },
    #[error("heuristic alignment needs NP spans or word alignments")]
    NoEvidence,
}

fn parse_group(s: &str) -> Option<u32> {
    s.strip_prefix('T')?.parse().ok()
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.trim_end_matches('\r');
        (!l.trim().is_empty() && !l.starts_with('#')).then_some((i + 1, l))
    })
}

/// Read a manual alignment file of
/// `unit_id <TAB> en_annotator <TAB> en_group <TAB> zh_annotator <TAB> zh_group` lines.
pub fn load_manual_alignments(
    text: &str,
    en: &AnnotatedDocument,
    zh: &AnnotatedDocument,
) -> Result<Vec<AlignmentPair>, AlignmentError> {
    let units: HashMap<String, BitextUnit> = bitext_units(en, zh)
        .into_iter()
        .map(|u| (u.unit_id.clone(), u))
        .collect();
    let mut out = Vec::new();
    for (line, l) in data_lines(text) {
        let f: Vec<&str> = l.split('\t').collect();
        if f.len() != 5 {
            return Err(AlignmentError::BadColumnCount {
                line,
                expected: 5,
                found: f.len(),
            });
        }
        let unit = units.get(f[0]).ok_or_else(|| AlignmentError::UnknownUnit {
            line,
            unit: f[0].to_string(),
        })?;
        let resolve = |doc: &AnnotatedDocument, sid: &str, annotator: &str, group: &str| {
            let g = parse_group(group).ok_or_else(|| AlignmentError::BadGroup {
                line,
                group: group.to_string(),
            })?;
            doc.target(sid, annotator, g)
                .cloned()
                .ok_or_else(|| AlignmentError::DanglingTarget {
                    line,
                    language: doc.language,
                    unit: unit.unit_id.clone(),
                    annotator: annotator.to_string(),
                    group: group.to_string(),
                })
        };
        let en_target = resolve(en, &unit.en_sentence_id, f[1], f[2])?;
        let zh_target = resolve(zh, &unit.zh_sentence_id, f[3], f[4])?;
        out.push(AlignmentPair {
            unit_id: unit.unit_id.clone(),
            en_target,
            zh_target,
            source: PairSource::Manual,
            evidence: None,
        });
    }
    Ok(out)
}

/// Token-level links per unit, as `(en_index, zh_index)` pairs of 1-based
/// token indices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WordLinks {
    links: BTreeMap<String, Vec<(usize, usize)>>,
}

impl WordLinks {
    pub fn new() -> WordLinks {
        WordLinks::default()
    }

    pub fn insert(&mut self, unit_id: &str, en_index: usize, zh_index: usize) {
        let v = self.links.entry(unit_id.to_string()).or_default();
        if !v.contains(&(en_index, zh_index)) {
            v.push((en_index, zh_index));
        }
    }

    pub fn get(&self, unit_id: &str) -> &[(usize, usize)] {
        self.links.get(unit_id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Parse `unit_id <TAB> e-z e-z ...` lines.
    pub fn parse(text: &str) -> Result<WordLinks, AlignmentError> {
        let mut out = WordLinks::new();
        for (line, l) in data_lines(text) {
            let f: Vec<&str> = l.split('\t').collect();
            if f.len() != 2 {
                return Err(AlignmentError::BadColumnCount {
                    line,
                    expected: 2,
                    found: f.len(),
                });
            }
            for link in f[1].split_whitespace() {
                let parsed = link.split_once('-').and_then(|(e, z)| {
                    let e: usize = e.parse().ok()?;
                    let z: usize = z.parse().ok()?;
                    (e > 0 && z > 0).then_some((e, z))
                });
                let (e, z) = parsed.ok_or_else(|| AlignmentError::BadLink {
                    line,
                    link: link.to_string(),
                })?;
                out.insert(f[0], e, z);
            }
        }
        Ok(out)
    }
}

fn is_nominal(tok: &Token, language: Language) -> bool {
    let p = tok.pos.as_str();
    match language {
        Language::En => p.starts_with("NN") || p == "PRP" || p == "CD",
        Language::Zh => p.starts_with("NN") || p == "NR" || p == "NT" || p == "PN",
    }
}

/// Head of the NP a target governs, found from POS tags alone.
///
/// English prepositions take the first nominal after them. A Chinese
/// localizer takes the nearest nominal before it. A Chinese coverb takes the
/// last nominal before a following localizer; with no localizer ahead (up to
/// the next preposition), the NP ends at the first verb.
pub fn governed_head(sentence: &Sentence, target: &TargetAnnotation, language: Language) -> Option<usize> {
    let first = *target.token_indices.first()?;
    let last = *target.token_indices.last()?;
    let nominal = |t: &&Token| is_nominal(t, language);
    let after = || sentence.tokens.iter().filter(move |t| t.index > last);
    match language {
        Language::En => after()
            .take_while(|t| !t.pos.starts_with('V') && t.pos != "IN" && t.pos != "TO")
            .find(nominal)
            .map(|t| t.index),
        Language::Zh => {
            let last_pos = sentence.token(last).map(|t| t.pos.as_str()).unwrap_or("");
            let localizer = target.kind == TargetKind::Localizer
                || (target.kind == TargetKind::Other && last_pos == "LC");
            if localizer {
                return sentence
                    .tokens
                    .iter()
                    .rev()
                    .filter(|t| t.index < first)
                    .find(nominal)
                    .map(|t| t.index);
            }
            let scope: Vec<&Token> = after().take_while(|t| t.pos != "P").collect();
            match scope.iter().position(|t| t.pos == "LC") {
                Some(lc) => scope[..lc].iter().rev().find(|t| nominal(t)),
                None => scope
                    .iter()
                    .take_while(|t| !t.pos.starts_with('V'))
                    .filter(|t| nominal(t))
                    .last(),
            }
            .map(|t| t.index)
        }
    }
}

/// Tokens standing for the NP a target governs: its NP span when annotated,
/// else the POS-derived head.
fn mention(sentence: &Sentence, target: &TargetAnnotation, language: Language) -> Vec<usize> {
    match target.np_span {
        Some(np) => (np.start..=np.end).collect(),
        None => governed_head(sentence, target, language).into_iter().collect(),
    }
}

/// Propose pairs of targets whose governed NPs correspond.
///
/// With word links, an English and a Chinese target pair up when some link
/// connects their NP mentions. Without links, every pair of targets that
/// both carry NP spans is proposed.
pub fn heuristic_align(
    en: &AnnotatedDocument,
    zh: &AnnotatedDocument,
    units: &[BitextUnit],
    links: Option<&WordLinks>,
) -> Result<Vec<AlignmentPair>, AlignmentError> {
    let has_spans = en
        .annotations
        .iter()
        .chain(&zh.annotations)
        .any(|t| t.np_span.is_some());
    if links.is_none() && !has_spans {
        return Err(AlignmentError::NoEvidence);
    }

    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for unit in units {
        let (Some(en_s), Some(zh_s)) = (
            en.sentence(&unit.en_sentence_id),
            zh.sentence(&unit.zh_sentence_id),
        ) else {
            continue;
        };
        let en_targets: Vec<&TargetAnnotation> = en
            .annotations
            .iter()
            .filter(|t| t.sentence_id == en_s.id)
            .collect();
        let zh_targets: Vec<&TargetAnnotation> = zh
            .annotations
            .iter()
            .filter(|t| t.sentence_id == zh_s.id)
            .collect();
        if en_targets.is_empty() || zh_targets.is_empty() {
            continue;
        }

        let linked: HashMap<usize, Vec<usize>> = links
            .map(|l| {
                let mut m: HashMap<usize, Vec<usize>> = HashMap::new();
                for &(e, z) in l.get(&unit.unit_id) {
                    m.entry(e).or_default().push(z);
                }
                m
            })
            .unwrap_or_default();

        for et in &en_targets {
            let en_mention = mention(en_s, et, Language::En);
            // zh token -> the en link that reached it
            let mut reached: BTreeMap<usize, usize> = BTreeMap::new();
            for &e in &en_mention {
                for &z in linked.get(&e).into_iter().flatten() {
                    reached.entry(z).or_insert(e);
                }
            }
            for zt in &zh_targets {
                let evidence = if links.is_some() {
                    mention(zh_s, zt, Language::Zh)
                        .into_iter()
                        .find_map(|z| reached.get(&z).map(|e| format!("link {e}-{z}")))
                } else if et.np_span.is_some() && zt.np_span.is_some() {
                    Some("np-spans".to_string())
                } else {
                    None
                };
                let Some(evidence) = evidence else { continue };
                let key = (
                    unit.unit_id.clone(),
                    et.annotator.clone(),
                    et.group,
                    zt.annotator.clone(),
                    zt.group,
                );
                if seen.insert(key) {
                    out.push(AlignmentPair {
                        unit_id: unit.unit_id.clone(),
                        en_target: (*et).clone(),
                        zh_target: (*zt).clone(),
                        source: PairSource::Heuristic,
                        evidence: Some(evidence),
                    });
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCounts {
    pub n: usize,
    pub scene_matches: usize,
    pub function_matches: usize,
    /// Absent when `n` is 0.
    pub scene_match_rate: Option<f64>,
    pub function_match_rate: Option<f64>,
}

impl RateCounts {
    fn new(n: usize, scene_matches: usize, function_matches: usize) -> RateCounts {
        let rate = |k: usize| (n > 0).then(|| k as f64 / n as f64);
        RateCounts {
            n,
            scene_matches,
            function_matches,
            scene_match_rate: rate(scene_matches),
            function_match_rate: rate(function_matches),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    /// Pairs whose two sides both carry construals.
    pub n_pairs: usize,
    pub scene_match_rate: Option<f64>,
    pub function_match_rate: Option<f64>,
    /// Pairs dropped because a side carries a special label.
    pub excluded_special: usize,
    /// Every pair counted once.
    pub per_pair: RateCounts,
    /// Pairs sharing an English target counted once; the group matches when
    /// every Chinese partner matches.
    pub per_en_target: RateCounts,
}

pub fn match_rates(pairs: &[AlignmentPair]) -> MatchReport {
    let mut n = 0;
    let mut scene = 0;
    let mut function = 0;
    let mut excluded = 0;
    let mut groups: BTreeMap<(&str, &str, &str, u32), (bool, bool)> = BTreeMap::new();
    for p in pairs {
        let (Some(e), Some(z)) = (p.en_target.label.construal(), p.zh_target.label.construal()) else {
            excluded += 1;
            continue;
        };
        n += 1;
        let s_ok = e.scene == z.scene;
        let f_ok = e.function == z.function;
        scene += usize::from(s_ok);
        function += usize::from(f_ok);
        let key = (
            p.unit_id.as_str(),
            p.en_target.sentence_id.as_str(),
            p.en_target.annotator.as_str(),
            p.en_target.group,
        );
        let g = groups.entry(key).or_insert((true, true));
        g.0 &= s_ok;
        g.1 &= f_ok;
    }
    let per_pair = RateCounts::new(n, scene, function);
    let per_en_target = RateCounts::new(
        groups.len(),
        groups.values().filter(|g| g.0).count(),
        groups.values().filter(|g| g.1).count(),
    );
    MatchReport {
        n_pairs: n,
        scene_match_rate: per_pair.scene_match_rate,
        function_match_rate: per_pair.function_match_rate,
        excluded_special: excluded,
        per_pair,
        per_en_target,
    }
}
