//! Inter-annotator agreement: raw agreement and Cohen's kappa over the
//! scene, function, and full-construal projections of target labels.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::hash::Hash;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AnnotatedDocument, Label};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Projection {
    SceneRole,
    Function,
    Construal,
}

impl Projection {
    pub const ALL: [Projection; 3] = [Projection::SceneRole, Projection::Function, Projection::Construal];

    pub fn as_str(self) -> &'static str {
        match self {
            Projection::SceneRole => "scene",
            Projection::Function => "function",
            Projection::Construal => "construal",
        }
    }

    /// The category a label falls into under this projection. Special labels
    /// are their own category in every projection.
    pub fn key(self, label: &Label) -> String {
        match (self, label) {
            (_, Label::Special(s)) => s.clone(),
            (Projection::SceneRole, Label::Construal(c)) => c.scene.clone(),
            (Projection::Function, Label::Construal(c)) => c.function.clone(),
            (Projection::Construal, Label::Construal(c)) => c.to_string(),
        }
    }
}

impl fmt::Display for Projection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Projection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "scene" | "scene-role" => Ok(Projection::SceneRole),
            "function" => Ok(Projection::Function),
            "construal" | "full" => Ok(Projection::Construal),
            other => Err(format!("unknown projection '{other}'")),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AgreementError {
    #[error("agreement needs at least 2 annotators, got {0}")]
    TooFewAnnotators(usize),
    #[error("no comparable items")]
    NoItems,
    #[error("annotator '{0}' is not part of this comparison")]
    UnknownAnnotator(String),
}

/// A target span marked identically by every annotator, with each one's label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Item {
    pub sentence_id: String,
    pub token_indices: Vec<usize>,
    /// One label per annotator, in [`ComparableItems::annotators`] order.
    pub labels: Vec<Label>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparableItems {
    pub annotators: Vec<String>,
    pub items: Vec<Item>,
    /// Spans marked by some but not all of the annotators.
    pub excluded: usize,
}

impl ComparableItems {
    fn column(&self, annotator: &str) -> Result<usize, AgreementError> {
        self.annotators
            .iter()
            .position(|a| a == annotator)
            .ok_or_else(|| AgreementError::UnknownAnnotator(annotator.to_string()))
    }

    fn projected(&self, col: usize, projection: Projection) -> Vec<String> {
        self.items
            .iter()
            .map(|it| projection.key(&it.labels[col]))
            .collect()
    }

    fn pairs(&self) -> Vec<(usize, usize)> {
        let n = self.annotators.len();
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect()
    }
}

/// Collect the spans every listed annotator marked with exactly the same tokens.
pub fn comparable_items(
    doc: &AnnotatedDocument,
    annotators: &[&str],
) -> Result<ComparableItems, AgreementError> {
    let mut unique: Vec<&str> = Vec::new();
    for a in annotators {
        if !unique.contains(a) {
            unique.push(a);
        }
    }
    if unique.len() < 2 {
        return Err(AgreementError::TooFewAnnotators(unique.len()));
    }

    // span -> label per annotator column
    let mut spans: BTreeMap<(usize, &str, &[usize]), Vec<Option<&Label>>> = BTreeMap::new();
    let order: HashMap<&str, usize> = doc
        .sentences
        .iter()
        .enumerate()
        .map(|(i, s)| (s.id.as_str(), i))
        .collect();
    for t in &doc.annotations {
        let Some(col) = unique.iter().position(|a| *a == t.annotator) else {
            continue;
        };
        let pos = order.get(t.sentence_id.as_str()).copied().unwrap_or(usize::MAX);
        let entry = spans
            .entry((pos, t.sentence_id.as_str(), t.token_indices.as_slice()))
            .or_insert_with(|| vec![None; unique.len()]);
        entry[col] = Some(&t.label);
    }

    let mut items = Vec::new();
    let mut excluded = 0;
    for ((_, sid, indices), labels) in spans {
        if labels.iter().all(Option::is_some) {
            items.push(Item {
                sentence_id: sid.to_string(),
                token_indices: indices.to_vec(),
                labels: labels.into_iter().map(|l| l.cloned().unwrap()).collect(),
            });
        } else {
            excluded += 1;
        }
    }
    Ok(ComparableItems {
        annotators: unique.iter().map(|s| s.to_string()).collect(),
        items,
        excluded,
    })
}

/// Fraction of positions where two label sequences agree.
pub fn observed_agreement<T: Eq>(a: &[T], b: &[T]) -> Option<f64> {
    if a.is_empty() || a.len() != b.len() {
        return None;
    }
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count();
    Some(agree as f64 / a.len() as f64)
}

/// Cohen's kappa of two label sequences: (p_o - p_e) / (1 - p_e), with p_e
/// from the two marginal distributions. Returns 1.0 when both raters used
/// one and the same label throughout.
///
/// Computed as a single ratio of exact integer counts, so kappa <= p_o holds
/// after rounding too.
pub fn kappa<T: Eq + Hash>(a: &[T], b: &[T]) -> Option<f64> {
    if a.is_empty() || a.len() != b.len() {
        return None;
    }
    let n = a.len() as i128;
    let mut agree = 0i128;
    let mut counts: HashMap<&T, (i128, i128)> = HashMap::new();
    for (x, y) in a.iter().zip(b) {
        if x == y {
            agree += 1;
        }
        counts.entry(x).or_default().0 += 1;
        counts.entry(y).or_default().1 += 1;
    }
    let chance: i128 = counts.values().map(|(ca, cb)| ca * cb).sum();
    let denom = n * n - chance;
    if denom == 0 {
        return Some(1.0);
    }
    Some((n * agree - chance) as f64 / denom as f64)
}

/// Mean over annotator pairs of the pairwise exact-match fraction.
pub fn raw_agreement(items: &ComparableItems, projection: Projection) -> Result<f64, AgreementError> {
    let pairs = check(items)?;
    let total: f64 = pairs
        .iter()
        .map(|&(i, j)| {
            observed_agreement(&items.projected(i, projection), &items.projected(j, projection))
                .expect("non-empty, equal length")
        })
        .sum();
    Ok(total / pairs.len() as f64)
}

/// Fraction of items on which all annotators agree.
pub fn all_agree(items: &ComparableItems, projection: Projection) -> Result<f64, AgreementError> {
    check(items)?;
    let n = items
        .items
        .iter()
        .filter(|it| {
            let first = projection.key(&it.labels[0]);
            it.labels[1..].iter().all(|l| projection.key(l) == first)
        })
        .count();
    Ok(n as f64 / items.items.len() as f64)
}

pub fn cohen_kappa(
    items: &ComparableItems,
    annotator_a: &str,
    annotator_b: &str,
    projection: Projection,
) -> Result<f64, AgreementError> {
    check(items)?;
    let a = items.column(annotator_a)?;
    let b = items.column(annotator_b)?;
    Ok(kappa(&items.projected(a, projection), &items.projected(b, projection))
        .expect("non-empty, equal length"))
}

pub fn average_pairwise_kappa(
    items: &ComparableItems,
    projection: Projection,
) -> Result<f64, AgreementError> {
    let pairs = check(items)?;
    let total: f64 = pairs
        .iter()
        .map(|&(i, j)| {
            kappa(&items.projected(i, projection), &items.projected(j, projection))
                .expect("non-empty, equal length")
        })
        .sum();
    Ok(total / pairs.len() as f64)
}

fn check(items: &ComparableItems) -> Result<Vec<(usize, usize)>, AgreementError> {
    if items.annotators.len() < 2 {
        return Err(AgreementError::TooFewAnnotators(items.annotators.len()));
    }
    if items.items.is_empty() {
        return Err(AgreementError::NoItems);
    }
    Ok(items.pairs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairKappa {
    pub a: String,
    pub b: String,
    pub raw: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub projection: Projection,
    pub n_items: usize,
    pub excluded_items: usize,
    /// Mean pairwise raw agreement.
    pub raw: f64,
    /// Fraction of items where every annotator agrees.
    pub raw_all_agree: f64,
    pub kappa_pairwise: Vec<PairKappa>,
    pub kappa_mean: f64,
}

pub fn agreement_report(
    items: &ComparableItems,
    projection: Projection,
) -> Result<AgreementReport, AgreementError> {
    let pairs = check(items)?;
    let kappa_pairwise = pairs
        .iter()
        .map(|&(i, j)| {
            let a = items.projected(i, projection);
            let b = items.projected(j, projection);
            PairKappa {
                a: items.annotators[i].clone(),
                b: items.annotators[j].clone(),
                raw: observed_agreement(&a, &b).expect("checked"),
                kappa: kappa(&a, &b).expect("checked"),
            }
        })
        .collect::<Vec<_>>();
    let kappa_mean =
        kappa_pairwise.iter().map(|p| p.kappa).sum::<f64>() / kappa_pairwise.len() as f64;
    Ok(AgreementReport {
        projection,
        n_items: items.items.len(),
        excluded_items: items.excluded,
        raw: raw_agreement(items, projection)?,
        raw_all_agree: all_agree(items, projection)?,
        kappa_pairwise,
        kappa_mean,
    })
}
