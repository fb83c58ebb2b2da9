//! Finding coverb and localizer annotation targets in POS-tagged Chinese.
//!
//! Localizers (`LC`) are always targets. Coverbs (`P`) are targets only in
//! pre-verbal position: some verb-tagged token must follow them in the same
//! sentence. Sentence stands in for clause since no clause segmentation is
//! available.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Sentence, TargetAnnotation, Token};

const DEFAULT_LEXICON: &str = include_str!("../data/lexicon.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicons {
    pub coverbs: BTreeSet<String>,
    pub localizers: BTreeSet<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LexiconError {
    #[error("line {0}: form listed before any [coverbs] or [localizers] section")]
    NoSection(usize),
    #[error("line {line}: unknown section '{name}'")]
    UnknownSection { line: usize, name: String },
    #[error("lexicon section [{0}] is empty")]
    EmptySection(&'static str),
}

impl Lexicons {
    /// Forms from the worked examples: 在, 对; 上, 中, 里面, 来说.
    pub fn builtin() -> Lexicons {
        Lexicons::parse(DEFAULT_LEXICON).expect("bundled lexicon is valid")
    }

    pub fn parse(text: &str) -> Result<Lexicons, LexiconError> {
        enum Section {
            None,
            Coverbs,
            Localizers,
        }
        let mut section = Section::None;
        let mut coverbs = BTreeSet::new();
        let mut localizers = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = match name.trim() {
                    "coverbs" => Section::Coverbs,
                    "localizers" => Section::Localizers,
                    other => {
                        return Err(LexiconError::UnknownSection {
                            line: line_no,
                            name: other.to_string(),
                        })
                    }
                };
                continue;
            }
            match section {
                Section::None => return Err(LexiconError::NoSection(line_no)),
                Section::Coverbs => coverbs.insert(line.to_string()),
                Section::Localizers => localizers.insert(line.to_string()),
            };
        }
        if coverbs.is_empty() {
            return Err(LexiconError::EmptySection("coverbs"));
        }
        if localizers.is_empty() {
            return Err(LexiconError::EmptySection("localizers"));
        }
        Ok(Lexicons {
            coverbs,
            localizers,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateKind {
    Coverb,
    Localizer,
}

/// Why a token was proposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rationale {
    /// `P` token from the coverb lexicon with a later verb.
    PPreverbal,
    /// `LC` token from the localizer lexicon.
    LcLexicon,
    /// `LC` token not listed in the lexicon.
    LcPosOnly,
}

impl Rationale {
    pub fn as_str(self) -> &'static str {
        match self {
            Rationale::PPreverbal => "p-preverbal",
            Rationale::LcLexicon => "lc-lexicon",
            Rationale::LcPosOnly => "lc-pos-only",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetCandidate {
    pub sentence_id: String,
    pub token_indices: Vec<usize>,
    pub kind: CandidateKind,
    pub rationale: Rationale,
}

fn is_verbal(tok: &Token) -> bool {
    tok.pos.starts_with('V')
}

/// True iff a verb-tagged token occurs after `index` in the sentence.
pub fn is_preverbal(sentence: &Sentence, index: usize) -> bool {
    sentence
        .tokens
        .iter()
        .filter(|t| t.index > index)
        .any(is_verbal)
}

pub fn identify_targets(sentence: &Sentence, lex: &Lexicons) -> Vec<TargetCandidate> {
    let mut out = Vec::new();
    for tok in &sentence.tokens {
        let found = match tok.pos.as_str() {
            "LC" if lex.localizers.contains(&tok.form) => {
                Some((CandidateKind::Localizer, Rationale::LcLexicon))
            }
            "LC" => Some((CandidateKind::Localizer, Rationale::LcPosOnly)),
            "P" if lex.coverbs.contains(&tok.form) && is_preverbal(sentence, tok.index) => {
                Some((CandidateKind::Coverb, Rationale::PPreverbal))
            }
            _ => None,
        };
        if let Some((kind, rationale)) = found {
            out.push(TargetCandidate {
                sentence_id: sentence.id.clone(),
                token_indices: vec![tok.index],
                kind,
                rationale,
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub sentence_id: String,
    pub token_indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetDiff {
    pub n_gold: usize,
    pub n_predicted: usize,
    pub n_matched: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold spans that were not predicted.
    pub missed: Vec<Span>,
    /// Predicted spans absent from gold.
    pub spurious: Vec<Span>,
}

/// Span-exact comparison of predicted candidates against gold targets.
/// A ratio with an empty denominator is 1.0; F1 is 0 when precision and
/// recall are both 0.
pub fn diff_targets(gold: &[&TargetAnnotation], predicted: &[TargetCandidate]) -> TargetDiff {
    let gold: BTreeSet<Span> = gold
        .iter()
        .map(|t| Span {
            sentence_id: t.sentence_id.clone(),
            token_indices: t.token_indices.clone(),
        })
        .collect();
    let predicted: BTreeSet<Span> = predicted
        .iter()
        .map(|c| Span {
            sentence_id: c.sentence_id.clone(),
            token_indices: c.token_indices.clone(),
        })
        .collect();
    let matched: HashSet<&Span> = gold.intersection(&predicted).collect();
    let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    let precision = ratio(matched.len(), predicted.len());
    let recall = ratio(matched.len(), gold.len());
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    TargetDiff {
        n_gold: gold.len(),
        n_predicted: predicted.len(),
        n_matched: matched.len(),
        precision,
        recall,
        f1,
        missed: gold.iter().filter(|s| !matched.contains(s)).cloned().collect(),
        spurious: predicted
            .iter()
            .filter(|s| !matched.contains(s))
            .cloned()
            .collect(),
    }
}
