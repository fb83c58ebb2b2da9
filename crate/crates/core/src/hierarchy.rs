//! The SNACS supersense hierarchy.
//!
//! The hierarchy is read from a small tab-separated data file (one node per
//! line: `label <TAB> parent-or-"-" <TAB> CIRC|PART|CONF`). A copy of the
//! v2.1 inventory ships with the crate and is available through
//! [`Hierarchy::builtin`].

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of supersenses in the SNACS inventory.
pub const SUPERSENSE_COUNT: usize = 50;

/// Labels that every loaded hierarchy must define.
pub const REQUIRED_LABELS: [&str; 10] = [
    "Locus",
    "Goal",
    "Direction",
    "Time",
    "Manner",
    "Circumstance",
    "Topic",
    "Stimulus",
    "Experiencer",
    "Recipient",
];

const BUILTIN: &str = include_str!("../data/snacs-2.1.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Subhierarchy {
    Circumstance,
    Participant,
    Configuration,
}

impl Subhierarchy {
    pub const ALL: [Subhierarchy; 3] = [
        Subhierarchy::Circumstance,
        Subhierarchy::Participant,
        Subhierarchy::Configuration,
    ];

    /// Short code used in the data file and in tables.
    pub fn code(self) -> &'static str {
        match self {
            Subhierarchy::Circumstance => "CIRC",
            Subhierarchy::Participant => "PART",
            Subhierarchy::Configuration => "CONF",
        }
    }

    /// Position in [`Subhierarchy::ALL`].
    pub fn ordinal(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Subhierarchy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Subhierarchy {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "CIRC" => Ok(Subhierarchy::Circumstance),
            "PART" => Ok(Subhierarchy::Participant),
            "CONF" => Ok(Subhierarchy::Configuration),
            _ => Err(()),
        }
    }
}

/// One node of the hierarchy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Supersense {
    pub name: String,
    pub parent: Option<String>,
    pub subhierarchy: Subhierarchy,
    pub depth: usize,
    #[serde(skip)]
    id: usize,
    #[serde(skip)]
    parent_id: Option<usize>,
}

impl Supersense {
    /// Index of this node in [`Hierarchy::nodes`].
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn is_root(&self) -> bool {
        self.parent_id.is_none()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HierarchyError {
    #[error("line {line}: expected 3 tab-separated fields, found {found}")]
    BadColumnCount { line: usize, found: usize },
    #[error("line {line}: empty label")]
    EmptyLabel { line: usize },
    #[error("line {line}: unknown subhierarchy code '{code}' for '{label}'")]
    BadSubhierarchy {
        line: usize,
        label: String,
        code: String,
    },
    #[error("missing '# version:' header")]
    MissingVersion,
    #[error("line {line}: duplicate label '{label}'")]
    DuplicateLabel { line: usize, label: String },
    #[error("line {line}: '{label}' has unknown parent '{parent}'")]
    UnknownParent {
        line: usize,
        label: String,
        parent: String,
    },
    #[error("cyclic parent chain through '{label}'")]
    Cycle { label: String },
    #[error("expected {expected} nodes, found {found}")]
    NodeCount { expected: usize, found: usize },
    #[error("'{label}' is declared {declared} but its root '{root}' is {actual}")]
    SubhierarchyMismatch {
        label: String,
        root: String,
        declared: Subhierarchy,
        actual: Subhierarchy,
    },
    #[error("subhierarchy {subhierarchy} has {found} roots, expected exactly one")]
    RootCount {
        subhierarchy: Subhierarchy,
        found: usize,
    },
    #[error("required label '{label}' is missing")]
    MissingLabel { label: String },
}

/// The loaded, immutable supersense hierarchy.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    version: String,
    nodes: Vec<Supersense>,
    by_name: HashMap<String, usize>,
}

impl Hierarchy {
    /// The SNACS v2.1 hierarchy bundled with the crate.
    pub fn builtin() -> Hierarchy {
        Hierarchy::parse(BUILTIN).expect("bundled hierarchy is valid")
    }

    /// Raw text of the bundled hierarchy file.
    pub fn builtin_source() -> &'static str {
        BUILTIN
    }

    pub fn from_reader<R: std::io::Read>(mut reader: R) -> Result<Hierarchy, LoadError> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        Ok(Hierarchy::parse(&text)?)
    }

    /// Parse and validate a hierarchy file.
    pub fn parse(text: &str) -> Result<Hierarchy, HierarchyError> {
        let mut version = None;
        // (line, label, parent, declared subhierarchy)
        let mut rows: Vec<(usize, String, Option<String>, Subhierarchy)> = Vec::new();
        let mut by_name: HashMap<String, usize> = HashMap::new();

        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let raw = raw.trim_end_matches('\r');
            if let Some(comment) = raw.strip_prefix('#') {
                if let Some(v) = comment.trim().strip_prefix("version:") {
                    version = Some(v.trim().to_string());
                }
                continue;
            }
            if raw.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = raw.split('\t').collect();
            if fields.len() != 3 {
                return Err(HierarchyError::BadColumnCount {
                    line,
                    found: fields.len(),
                });
            }
            let label = fields[0].trim();
            if label.is_empty() {
                return Err(HierarchyError::EmptyLabel { line });
            }
            let parent = match fields[1].trim() {
                "-" => None,
                p => Some(p.to_string()),
            };
            let sub = fields[2]
                .trim()
                .parse::<Subhierarchy>()
                .map_err(|_| HierarchyError::BadSubhierarchy {
                    line,
                    label: label.to_string(),
                    code: fields[2].trim().to_string(),
                })?;
            let key = normalize(label);
            if by_name.contains_key(&key) {
                return Err(HierarchyError::DuplicateLabel {
                    line,
                    label: label.to_string(),
                });
            }
            by_name.insert(key, rows.len());
            rows.push((line, label.to_string(), parent, sub));
        }

        let version = version.ok_or(HierarchyError::MissingVersion)?;

        let mut parent_ids = Vec::with_capacity(rows.len());
        for (line, label, parent, _) in &rows {
            let pid = match parent {
                None => None,
                Some(p) => Some(*by_name.get(&normalize(p)).ok_or_else(|| {
                    HierarchyError::UnknownParent {
                        line: *line,
                        label: label.clone(),
                        parent: p.clone(),
                    }
                })?),
            };
            parent_ids.push(pid);
        }

        // Walk each parent chain; a chain longer than the node count revisits a node.
        let mut roots = vec![0usize; rows.len()];
        let mut depths = vec![0usize; rows.len()];
        for start in 0..rows.len() {
            let mut cur = start;
            let mut depth = 0;
            while let Some(p) = parent_ids[cur] {
                depth += 1;
                if p == start || depth > rows.len() {
                    return Err(HierarchyError::Cycle {
                        label: rows[start].1.clone(),
                    });
                }
                cur = p;
            }
            roots[start] = cur;
            depths[start] = depth;
        }

        for sub in Subhierarchy::ALL {
            let found = (0..rows.len())
                .filter(|&i| parent_ids[i].is_none() && rows[i].3 == sub)
                .count();
            if found != 1 {
                return Err(HierarchyError::RootCount {
                    subhierarchy: sub,
                    found,
                });
            }
        }

        for (i, (_, label, _, declared)) in rows.iter().enumerate() {
            let root = &rows[roots[i]];
            if *declared != root.3 {
                return Err(HierarchyError::SubhierarchyMismatch {
                    label: label.clone(),
                    root: root.1.clone(),
                    declared: *declared,
                    actual: root.3,
                });
            }
        }

        if rows.len() != SUPERSENSE_COUNT {
            return Err(HierarchyError::NodeCount {
                expected: SUPERSENSE_COUNT,
                found: rows.len(),
            });
        }

        for label in REQUIRED_LABELS {
            if !by_name.contains_key(&normalize(label)) {
                return Err(HierarchyError::MissingLabel {
                    label: label.to_string(),
                });
            }
        }

        let nodes = rows
            .iter()
            .enumerate()
            .map(|(i, (_, label, _, sub))| Supersense {
                name: label.clone(),
                parent: parent_ids[i].map(|p| rows[p].1.clone()),
                subhierarchy: *sub,
                depth: depths[i],
                id: i,
                parent_id: parent_ids[i],
            })
            .collect();

        Ok(Hierarchy {
            version,
            nodes,
            by_name,
        })
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn nodes(&self) -> &[Supersense] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Find a node by label, ignoring case (`LOCUS`, `locus` and `Locus` all match).
    pub fn lookup(&self, label: &str) -> Option<&Supersense> {
        self.by_name
            .get(&normalize(label))
            .map(|&i| &self.nodes[i])
    }

    pub fn parent(&self, s: &Supersense) -> Option<&Supersense> {
        s.parent_id.map(|p| &self.nodes[p])
    }

    pub fn subhierarchy_of(&self, s: &Supersense) -> Subhierarchy {
        self.root_of(s).subhierarchy
    }

    pub fn root_of<'a>(&'a self, s: &'a Supersense) -> &'a Supersense {
        let mut cur = s;
        while let Some(p) = self.parent(cur) {
            cur = p;
        }
        cur
    }

    /// Path from the parent of `s` up to its subhierarchy root.
    pub fn ancestors(&self, s: &Supersense) -> Vec<&Supersense> {
        let mut out = Vec::with_capacity(s.depth);
        let mut cur = s;
        while let Some(p) = self.parent(cur) {
            out.push(p);
            cur = p;
        }
        out
    }

    /// Number of edges on the path between `a` and `b` through their lowest
    /// common ancestor, or `None` when they sit in different subhierarchies.
    pub fn tree_distance(&self, a: &Supersense, b: &Supersense) -> Option<usize> {
        if self.subhierarchy_of(a) != self.subhierarchy_of(b) {
            return None;
        }
        let mut a = a;
        let mut b = b;
        let mut steps = 0;
        while a.depth > b.depth {
            a = self.parent(a)?;
            steps += 1;
        }
        while b.depth > a.depth {
            b = self.parent(b)?;
            steps += 1;
        }
        while a.id != b.id {
            a = self.parent(a)?;
            b = self.parent(b)?;
            steps += 2;
        }
        Some(steps)
    }

    /// All nodes belonging to one subhierarchy, in file order.
    pub fn members(&self, sub: Subhierarchy) -> impl Iterator<Item = &Supersense> {
        self.nodes.iter().filter(move |n| n.subhierarchy == sub)
    }
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Invalid(#[from] HierarchyError),
}

fn normalize(label: &str) -> String {
    label.trim().to_lowercase()
}
