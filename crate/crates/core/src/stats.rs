//! Distributional statistics over one annotation layer: scene/function
//! identity rate, the function × scene subhierarchy crosstab, per-form
//! divergence, and the construal inventory.
//!
//! Special-label targets count toward token totals but never toward
//! identity, the crosstab, or construal types.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotatedDocument, Construal, Label, TargetAnnotation};
use crate::hierarchy::{Hierarchy, Subhierarchy};

/// The targets of one annotator (or the adjudicated layer) in a document.
#[derive(Debug, Clone)]
pub struct Layer<'a> {
    pub doc: &'a AnnotatedDocument,
    pub targets: Vec<&'a TargetAnnotation>,
}

impl<'a> Layer<'a> {
    pub fn new(doc: &'a AnnotatedDocument, annotator: &str) -> Layer<'a> {
        Layer {
            doc,
            targets: doc
                .annotations
                .iter()
                .filter(|t| t.annotator == annotator)
                .collect(),
        }
    }

    /// Every target regardless of annotator; meant for single-layer documents.
    pub fn all(doc: &'a AnnotatedDocument) -> Layer<'a> {
        Layer {
            doc,
            targets: doc.annotations.iter().collect(),
        }
    }

    fn construals(&self) -> impl Iterator<Item = &'a Construal> + '_ {
        self.targets.iter().filter_map(|t| t.label.construal())
    }
}

/// Integer percentage, rounded half up.
pub fn percent(part: usize, total: usize) -> Option<u32> {
    (total > 0).then(|| ((200 * part + total) / (2 * total)) as u32)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityRate {
    pub same: usize,
    pub total: usize,
    pub rate: Option<f64>,
    pub percent: Option<u32>,
}

pub fn identity_rate(layer: &Layer) -> IdentityRate {
    let total = layer.targets.len();
    let same = layer.construals().filter(|c| c.is_identity()).count();
    IdentityRate {
        same,
        total,
        rate: (total > 0).then(|| same as f64 / total as f64),
        percent: percent(same, total),
    }
}

/// Counts indexed `[function subhierarchy][scene subhierarchy]` in
/// CIRC, PART, CONF order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossTab {
    pub counts: [[usize; 3]; 3],
    /// Construal targets whose labels did not resolve in the hierarchy.
    pub unresolved: usize,
}

impl CrossTab {
    pub fn cell(&self, function: Subhierarchy, scene: Subhierarchy) -> usize {
        self.counts[function.ordinal()][scene.ordinal()]
    }

    pub fn row_totals(&self) -> [usize; 3] {
        self.counts.map(|row| row.iter().sum())
    }

    pub fn column_totals(&self) -> [usize; 3] {
        let mut out = [0; 3];
        for row in &self.counts {
            for (j, c) in row.iter().enumerate() {
                out[j] += c;
            }
        }
        out
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn diagonal_total(&self) -> usize {
        (0..3).map(|i| self.counts[i][i]).sum()
    }

    pub fn offdiagonal_total(&self) -> usize {
        self.total() - self.diagonal_total()
    }
}

impl AddAssign<&CrossTab> for CrossTab {
    fn add_assign(&mut self, rhs: &CrossTab) {
        for i in 0..3 {
            for j in 0..3 {
                self.counts[i][j] += rhs.counts[i][j];
            }
        }
        self.unresolved += rhs.unresolved;
    }
}

pub fn subhierarchy_crosstab(layer: &Layer, h: &Hierarchy) -> CrossTab {
    let mut tab = CrossTab::default();
    for c in layer.construals() {
        match (h.lookup(&c.function), h.lookup(&c.scene)) {
            (Some(f), Some(s)) => {
                let fi = h.subhierarchy_of(f).ordinal();
                let si = h.subhierarchy_of(s).ordinal();
                tab.counts[fi][si] += 1;
            }
            _ => tab.unresolved += 1,
        }
    }
    tab
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCount {
    pub label: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormReport {
    pub form: String,
    pub tokens: usize,
    pub divergent: usize,
    pub special: usize,
    pub construals: Vec<LabelCount>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub forms: Vec<FormReport>,
    pub divergent_tokens: usize,
    pub identity_tokens: usize,
    /// Distinct forms among tokens whose scene differs from the function.
    pub divergent_forms: usize,
    /// Distinct forms among tokens whose scene equals the function.
    pub identity_forms: usize,
}

pub fn divergence_by_adposition(layer: &Layer) -> DivergenceReport {
    #[derive(Default)]
    struct Acc {
        tokens: usize,
        divergent: usize,
        special: usize,
        construals: BTreeMap<String, usize>,
    }
    let mut by_form: BTreeMap<String, Acc> = BTreeMap::new();
    let mut divergent_forms = BTreeSet::new();
    let mut identity_forms = BTreeSet::new();
    let (mut divergent_tokens, mut identity_tokens) = (0, 0);
    for t in &layer.targets {
        let form = layer.doc.target_form(t);
        let acc = by_form.entry(form.clone()).or_default();
        acc.tokens += 1;
        match &t.label {
            Label::Special(_) => acc.special += 1,
            Label::Construal(c) => {
                *acc.construals.entry(c.to_string()).or_default() += 1;
                if c.is_identity() {
                    identity_tokens += 1;
                    identity_forms.insert(form);
                } else {
                    acc.divergent += 1;
                    divergent_tokens += 1;
                    divergent_forms.insert(form);
                }
            }
        }
    }
    DivergenceReport {
        forms: by_form
            .into_iter()
            .map(|(form, acc)| FormReport {
                form,
                tokens: acc.tokens,
                divergent: acc.divergent,
                special: acc.special,
                construals: ranked(acc.construals),
            })
            .collect(),
        divergent_tokens,
        identity_tokens,
        divergent_forms: divergent_forms.len(),
        identity_forms: identity_forms.len(),
    }
}

fn ranked(map: BTreeMap<String, usize>) -> Vec<LabelCount> {
    let mut v: Vec<LabelCount> = map
        .into_iter()
        .map(|(label, count)| LabelCount { label, count })
        .collect();
    v.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.label.cmp(&b.label)));
    v
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConstrualInventory {
    counts: BTreeMap<Construal, usize>,
    specials: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InventorySummary {
    pub n_tokens: usize,
    pub n_construal_types: usize,
    pub n_distinct_scene_labels: usize,
    pub n_distinct_function_labels: usize,
    /// Construal counts, most frequent first, ties by label.
    pub construals: Vec<LabelCount>,
    pub specials: Vec<LabelCount>,
}

impl ConstrualInventory {
    pub fn count(&self, c: &Construal) -> usize {
        self.counts.get(c).copied().unwrap_or(0)
    }

    pub fn n_tokens(&self) -> usize {
        self.counts.values().sum::<usize>() + self.specials.values().sum::<usize>()
    }

    pub fn n_construal_types(&self) -> usize {
        self.counts.values().filter(|&&n| n > 0).count()
    }

    pub fn n_distinct_scene_labels(&self) -> usize {
        self.counts.keys().map(|c| &c.scene).collect::<BTreeSet<_>>().len()
    }

    pub fn n_distinct_function_labels(&self) -> usize {
        self.counts.keys().map(|c| &c.function).collect::<BTreeSet<_>>().len()
    }

    pub fn summary(&self) -> InventorySummary {
        InventorySummary {
            n_tokens: self.n_tokens(),
            n_construal_types: self.n_construal_types(),
            n_distinct_scene_labels: self.n_distinct_scene_labels(),
            n_distinct_function_labels: self.n_distinct_function_labels(),
            construals: ranked(
                self.counts
                    .iter()
                    .map(|(c, &n)| (c.to_string(), n))
                    .collect(),
            ),
            specials: ranked(self.specials.clone()),
        }
    }
}

impl AddAssign<&ConstrualInventory> for ConstrualInventory {
    fn add_assign(&mut self, rhs: &ConstrualInventory) {
        for (c, n) in &rhs.counts {
            *self.counts.entry(c.clone()).or_default() += n;
        }
        for (s, n) in &rhs.specials {
            *self.specials.entry(s.clone()).or_default() += n;
        }
    }
}

pub fn construal_inventory(layer: &Layer) -> ConstrualInventory {
    let mut inv = ConstrualInventory::default();
    for t in &layer.targets {
        match &t.label {
            Label::Construal(c) => *inv.counts.entry(c.clone()).or_default() += 1,
            Label::Special(s) => *inv.specials.entry(s.clone()).or_default() += 1,
        }
    }
    inv
}

/// Everything the `stats` report shows for one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub identity: IdentityRate,
    pub crosstab: CrossTab,
    pub diagonal_total: usize,
    pub offdiagonal_total: usize,
    pub inventory: InventorySummary,
    pub divergence: DivergenceReport,
}

pub fn stats_report(layer: &Layer, h: &Hierarchy) -> StatsReport {
    let crosstab = subhierarchy_crosstab(layer, h);
    StatsReport {
        identity: identity_rate(layer),
        diagonal_total: crosstab.diagonal_total(),
        offdiagonal_total: crosstab.offdiagonal_total(),
        crosstab,
        inventory: construal_inventory(layer).summary(),
        divergence: divergence_by_adposition(layer),
    }
}
