//! Annotated documents: POS-tagged sentences carrying construal-labelled
//! adposition targets, the TSV format they are stored in, and validation
//! against a [`Hierarchy`].
//!
//! File layout:
//!
//! ```text
//! # doc_id = lpp_zh_ch1
//! # language = zh
//!
//! # sent_id = zh_lpp_1943.2
//! 1	在	P	a1	T1	COVERB	Locus	Locus
//! 2	书	NN	_	_	_	_	_
//! 3	中	LC	a1	T2	LOCALIZER	Locus	Locus	1-2
//! ```
//!
//! Token lines carry `index form pos annotator group kind scene function`
//! and an optional ninth column holding the governed NP span (`start-end`,
//! inclusive) on a target's first line. A token annotated by several
//! annotators is repeated once per annotator.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hierarchy::Hierarchy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Zh,
    En,
}

impl Language {
    pub fn code(self) -> &'static str {
        match self {
            Language::Zh => "zh",
            Language::En => "en",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Language {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "zh" => Ok(Language::Zh),
            "en" => Ok(Language::En),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub index: usize,
    pub form: String,
    pub pos: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub id: String,
    pub tokens: Vec<Token>,
}

impl Sentence {
    /// Build a sentence from `(form, pos)` pairs, numbering tokens from 1.
    pub fn from_tagged<S: AsRef<str>>(id: &str, tagged: &[(S, S)]) -> Sentence {
        Sentence {
            id: id.to_string(),
            tokens: tagged
                .iter()
                .enumerate()
                .map(|(i, (form, pos))| Token {
                    index: i + 1,
                    form: form.as_ref().to_string(),
                    pos: pos.as_ref().to_string(),
                })
                .collect(),
        }
    }

    pub fn token(&self, index: usize) -> Option<&Token> {
        index.checked_sub(1).and_then(|i| self.tokens.get(i))
    }
}

/// Scene role and function of one adposition token.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Construal {
    pub scene: String,
    pub function: String,
}

impl Construal {
    pub fn new(scene: &str, function: &str) -> Construal {
        Construal {
            scene: scene.to_string(),
            function: function.to_string(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.scene == self.function
    }
}

impl fmt::Display for Construal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}~>{}", self.scene, self.function)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Construal(Construal),
    Special(String),
}

impl Label {
    pub fn construal(&self) -> Option<&Construal> {
        match self {
            Label::Construal(c) => Some(c),
            Label::Special(_) => None,
        }
    }

    pub fn is_special(&self) -> bool {
        matches!(self, Label::Special(_))
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Construal(c) => c.fmt(f),
            Label::Special(s) => f.write_str(s),
        }
    }
}

/// Closed set of non-construal labels such as `DISCOURSE`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpecialLabels(BTreeSet<String>);

impl SpecialLabels {
    pub fn new<I, S>(labels: I) -> SpecialLabels
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        SpecialLabels(labels.into_iter().map(Into::into).collect())
    }

    /// Canonical spelling of `label` if it is a member (case-insensitive).
    pub fn resolve(&self, label: &str) -> Option<&str> {
        self.0
            .iter()
            .find(|s| s.eq_ignore_ascii_case(label))
            .map(String::as_str)
    }

    pub fn contains(&self, label: &str) -> bool {
        self.0.contains(label)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}

impl Default for SpecialLabels {
    fn default() -> Self {
        SpecialLabels::new(["DISCOURSE"])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    Coverb,
    Localizer,
    Other,
}

impl TargetKind {
    pub fn code(self) -> &'static str {
        match self {
            TargetKind::Coverb => "COVERB",
            TargetKind::Localizer => "LOCALIZER",
            TargetKind::Other => "OTHER",
        }
    }

    /// POS tag every token of a target of this kind must carry.
    pub fn required_pos(self) -> Option<&'static str> {
        match self {
            TargetKind::Coverb => Some("P"),
            TargetKind::Localizer => Some("LC"),
            TargetKind::Other => None,
        }
    }
}

impl FromStr for TargetKind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "COVERB" => Ok(TargetKind::Coverb),
            "LOCALIZER" => Ok(TargetKind::Localizer),
            "OTHER" => Ok(TargetKind::Other),
            _ => Err(()),
        }
    }
}

/// Inclusive token range of the NP a target governs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NpSpan {
    pub start: usize,
    pub end: usize,
}

impl NpSpan {
    pub fn contains(&self, index: usize) -> bool {
        self.start <= index && index <= self.end
    }
}

impl fmt::Display for NpSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.start, self.end)
    }
}

impl FromStr for NpSpan {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        let (a, b) = s.split_once('-').ok_or(())?;
        let start = parse_index(a).ok_or(())?;
        let end = parse_index(b).ok_or(())?;
        if start > end {
            return Err(());
        }
        Ok(NpSpan { start, end })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TargetAnnotation {
    pub sentence_id: String,
    pub token_indices: Vec<usize>,
    pub kind: TargetKind,
    pub label: Label,
    pub annotator: String,
    /// Target group number, unique per (sentence, annotator); written as `T<group>`.
    pub group: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub np_span: Option<NpSpan>,
}

impl TargetAnnotation {
    pub fn first_index(&self) -> usize {
        self.token_indices.first().copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedDocument {
    pub doc_id: String,
    pub language: Language,
    pub sentences: Vec<Sentence>,
    pub annotations: Vec<TargetAnnotation>,
}

impl AnnotatedDocument {
    pub fn new(doc_id: &str, language: Language) -> AnnotatedDocument {
        AnnotatedDocument {
            doc_id: doc_id.to_string(),
            language,
            sentences: Vec::new(),
            annotations: Vec::new(),
        }
    }

    pub fn sentence(&self, id: &str) -> Option<&Sentence> {
        self.sentences.iter().find(|s| s.id == id)
    }

    /// Distinct annotator ids, sorted.
    pub fn annotators(&self) -> Vec<&str> {
        let set: BTreeSet<&str> = self
            .annotations
            .iter()
            .map(|a| a.annotator.as_str())
            .collect();
        set.into_iter().collect()
    }

    /// All targets of one annotator.
    pub fn layer<'a>(&'a self, annotator: &'a str) -> impl Iterator<Item = &'a TargetAnnotation> {
        self.annotations
            .iter()
            .filter(move |a| a.annotator == annotator)
    }

    pub fn target(&self, sentence_id: &str, annotator: &str, group: u32) -> Option<&TargetAnnotation> {
        self.annotations.iter().find(|a| {
            a.sentence_id == sentence_id && a.annotator == annotator && a.group == group
        })
    }

    /// Surface form of a target: token forms joined by spaces, `…` marking gaps.
    pub fn target_form(&self, target: &TargetAnnotation) -> String {
        let Some(sentence) = self.sentence(&target.sentence_id) else {
            return String::new();
        };
        let mut out = String::new();
        let mut prev: Option<usize> = None;
        for &i in &target.token_indices {
            if let Some(p) = prev {
                out.push_str(if i == p + 1 { " " } else { " … " });
            }
            out.push_str(sentence.token(i).map(|t| t.form.as_str()).unwrap_or("?"));
            prev = Some(i);
        }
        out
    }

    /// Sort annotations by sentence order, first token, then annotator.
    /// Parsing always yields this order.
    pub fn canonicalize(&mut self) {
        let order: HashMap<&str, usize> = self
            .sentences
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.as_str(), i))
            .collect();
        let mut annotations = std::mem::take(&mut self.annotations);
        annotations.sort_by(|a, b| {
            let ka = (order.get(a.sentence_id.as_str()), a.first_index(), &a.annotator, a.group);
            let kb = (order.get(b.sentence_id.as_str()), b.first_index(), &b.annotator, b.group);
            ka.cmp(&kb)
        });
        self.annotations = annotations;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub kind: ParseErrorKind,
}

impl ParseError {
    pub fn code(&self) -> &'static str {
        self.kind.code()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("input is not valid UTF-8")]
    InvalidUtf8,
    #[error("expected 8 or 9 tab-separated fields, found {0}")]
    BadColumnCount(usize),
    #[error("missing '# {0} = ...' header")]
    MissingHeader(&'static str),
    #[error("unknown language '{0}'")]
    UnknownLanguage(String),
    #[error("token line outside a sentence block")]
    TokenOutsideSentence,
    #[error("duplicate sentence id '{0}'")]
    DuplicateSentence(String),
    #[error("bad token index '{0}'")]
    BadIndex(String),
    #[error("token index {found} out of sequence, expected {expected}")]
    IndexSequence { expected: usize, found: usize },
    #[error("token {0} repeats with a different form or POS")]
    InconsistentToken(usize),
    #[error("empty {0}")]
    EmptyField(&'static str),
    #[error("bad target group '{0}'")]
    BadGroup(String),
    #[error("bad target kind '{0}'")]
    BadKind(String),
    #[error("unknown supersense '{0}'")]
    UnknownSupersense(String),
    #[error("'{0}' is a special label and takes '_' as function")]
    SpecialWithFunction(String),
    #[error("construal scene '{0}' has no function")]
    MissingFunction(String),
    #[error("annotation fields without a target group")]
    MissingGroup,
    #[error("target group {annotator}/T{group} has no label on its first token")]
    DanglingGroup { annotator: String, group: u32 },
    #[error("target group {annotator}/T{group} repeats its label on a later token")]
    LabelOnContinuation { annotator: String, group: u32 },
    #[error("token {index} belongs to two targets of annotator '{annotator}'")]
    Overlap { index: usize, annotator: String },
    #[error("unannotated token line must stand alone and use '_' throughout")]
    BadUnannotated,
    #[error("bad NP span '{0}'")]
    BadNpSpan(String),
}

impl ParseErrorKind {
    pub fn code(&self) -> &'static str {
        use ParseErrorKind::*;
        match self {
            InvalidUtf8 => "invalid-utf8",
            BadColumnCount(_) => "bad-column-count",
            MissingHeader(_) => "missing-header",
            UnknownLanguage(_) => "unknown-language",
            TokenOutsideSentence => "token-outside-sentence",
            DuplicateSentence(_) => "duplicate-sentence",
            BadIndex(_) => "bad-index",
            IndexSequence { .. } => "index-sequence",
            InconsistentToken(_) => "inconsistent-token",
            EmptyField(_) => "empty-field",
            BadGroup(_) => "bad-group",
            BadKind(_) => "bad-kind",
            UnknownSupersense(_) => "unknown-supersense",
            SpecialWithFunction(_) => "special-with-function",
            MissingFunction(_) => "missing-function",
            MissingGroup => "missing-group",
            DanglingGroup { .. } => "dangling-group",
            LabelOnContinuation { .. } => "label-on-continuation",
            Overlap { .. } => "overlap",
            BadUnannotated => "bad-unannotated",
            BadNpSpan(_) => "bad-np-span",
        }
    }
}

/// Source line numbers of the parsed items, for error reporting.
#[derive(Debug, Clone, Default)]
pub struct SourceMap {
    sentences: HashMap<String, usize>,
    targets: HashMap<(String, String, u32), usize>,
}

impl SourceMap {
    pub fn sentence_line(&self, sentence_id: &str) -> Option<usize> {
        self.sentences.get(sentence_id).copied()
    }

    pub fn target_line(&self, sentence_id: &str, annotator: &str, group: u32) -> Option<usize> {
        self.targets
            .get(&(sentence_id.to_string(), annotator.to_string(), group))
            .copied()
    }

    /// Best line for a violation: its target, else its sentence.
    pub fn locate(&self, v: &Violation) -> Option<usize> {
        let sid = v.sentence_id.as_deref()?;
        if let (Some(a), Some(g)) = (v.annotator.as_deref(), v.group) {
            if let Some(l) = self.target_line(sid, a, g) {
                return Some(l);
            }
        }
        self.sentence_line(sid)
    }
}

/// Parse a document with the default special labels.
pub fn parse_document(text: &str, h: &Hierarchy) -> Result<AnnotatedDocument, ParseError> {
    Parser::new(h).parse(text).map(|(d, _)| d)
}

/// Serialize a document to the canonical TSV form.
pub fn write_document(d: &AnnotatedDocument) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# doc_id = {}", d.doc_id);
    let _ = writeln!(out, "# language = {}", d.language);

    // (sentence, token) -> [(annotator, target, is_first)]
    let mut by_token: HashMap<(&str, usize), Vec<(&str, &TargetAnnotation, bool)>> =
        HashMap::new();
    for t in &d.annotations {
        for (k, &i) in t.token_indices.iter().enumerate() {
            by_token
                .entry((t.sentence_id.as_str(), i))
                .or_default()
                .push((t.annotator.as_str(), t, k == 0));
        }
    }

    for s in &d.sentences {
        out.push('\n');
        let _ = writeln!(out, "# sent_id = {}", s.id);
        for tok in &s.tokens {
            let prefix = format!("{}\t{}\t{}", tok.index, tok.form, tok.pos);
            match by_token.get_mut(&(s.id.as_str(), tok.index)) {
                None => {
                    let _ = writeln!(out, "{prefix}\t_\t_\t_\t_\t_");
                }
                Some(entries) => {
                    entries.sort_by(|a, b| a.0.cmp(b.0));
                    for (annotator, t, first) in entries.iter() {
                        let _ = write!(out, "{prefix}\t{annotator}\tT{}", t.group);
                        if *first {
                            let (scene, function) = match &t.label {
                                Label::Construal(c) => (c.scene.as_str(), c.function.as_str()),
                                Label::Special(s) => (s.as_str(), "_"),
                            };
                            let _ = write!(out, "\t{}\t{scene}\t{function}", t.kind.code());
                            if let Some(np) = t.np_span {
                                let _ = write!(out, "\t{np}");
                            }
                        } else {
                            out.push_str("\t_\t_\t_");
                        }
                        out.push('\n');
                    }
                }
            }
        }
    }
    out
}

/// Configurable parser; see [`parse_document`] for the common case.
pub struct Parser<'h> {
    hierarchy: &'h Hierarchy,
    specials: SpecialLabels,
}

struct PendingToken {
    index: usize,
    form: String,
    pos: String,
    annotators: HashSet<String>,
    unannotated: bool,
}

impl<'h> Parser<'h> {
    pub fn new(hierarchy: &'h Hierarchy) -> Parser<'h> {
        Parser {
            hierarchy,
            specials: SpecialLabels::default(),
        }
    }

    pub fn with_specials(mut self, specials: SpecialLabels) -> Self {
        self.specials = specials;
        self
    }

    pub fn specials(&self) -> &SpecialLabels {
        &self.specials
    }

    /// Parse raw bytes; invalid UTF-8 is reported at the offending line.
    pub fn parse_bytes(&self, bytes: &[u8]) -> Result<(AnnotatedDocument, SourceMap), ParseError> {
        match std::str::from_utf8(bytes) {
            Ok(text) => self.parse(text),
            Err(e) => {
                let line = bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() + 1;
                Err(ParseError {
                    line,
                    kind: ParseErrorKind::InvalidUtf8,
                })
            }
        }
    }

    pub fn parse(&self, text: &str) -> Result<(AnnotatedDocument, SourceMap), ParseError> {
        let mut doc_id: Option<String> = None;
        let mut language: Option<Language> = None;
        let mut sentences: Vec<Sentence> = Vec::new();
        let mut annotations: Vec<TargetAnnotation> = Vec::new();
        let mut map = SourceMap::default();
        let mut seen_sentences: HashSet<String> = HashSet::new();

        // Per-sentence state.
        let mut current: Option<Sentence> = None;
        let mut pending: Option<PendingToken> = None;
        let mut groups: HashMap<(String, u32), usize> = HashMap::new();

        let mut last_line = 0;
        for (i, raw) in text.split('\n').enumerate() {
            let line = i + 1;
            last_line = line;
            let err = |kind| ParseError { line, kind };
            let raw = raw.strip_suffix('\r').unwrap_or(raw);

            if raw.is_empty() {
                continue;
            }
            if let Some(comment) = raw.strip_prefix('#') {
                let Some((key, value)) = comment.split_once('=') else {
                    continue;
                };
                let value = value.trim();
                match key.trim() {
                    "doc_id" if current.is_none() && sentences.is_empty() => {
                        if value.is_empty() {
                            return Err(err(ParseErrorKind::EmptyField("doc_id")));
                        }
                        doc_id = Some(value.to_string())
                    }
                    "language" if current.is_none() && sentences.is_empty() => {
                        language = Some(value.parse().map_err(|_| {
                            err(ParseErrorKind::UnknownLanguage(value.to_string()))
                        })?)
                    }
                    "sent_id" => {
                        if doc_id.is_none() {
                            return Err(err(ParseErrorKind::MissingHeader("doc_id")));
                        }
                        if language.is_none() {
                            return Err(err(ParseErrorKind::MissingHeader("language")));
                        }
                        if value.is_empty() {
                            return Err(err(ParseErrorKind::EmptyField("sentence id")));
                        }
                        if !seen_sentences.insert(value.to_string()) {
                            return Err(err(ParseErrorKind::DuplicateSentence(value.to_string())));
                        }
                        if let Some(s) = current.take() {
                            sentences.push(s);
                        }
                        pending = None;
                        groups.clear();
                        map.sentences.insert(value.to_string(), line);
                        current = Some(Sentence {
                            id: value.to_string(),
                            tokens: Vec::new(),
                        });
                    }
                    _ => {}
                }
                continue;
            }

            let Some(sentence) = current.as_mut() else {
                return Err(err(ParseErrorKind::TokenOutsideSentence));
            };
            let fields: Vec<&str> = raw.split('\t').collect();
            if fields.len() != 8 && fields.len() != 9 {
                return Err(err(ParseErrorKind::BadColumnCount(fields.len())));
            }
            let index = parse_index(fields[0])
                .ok_or_else(|| err(ParseErrorKind::BadIndex(fields[0].to_string())))?;
            let (form, pos, annotator) = (fields[1], fields[2], fields[3]);
            let (group, kind, scene, function) = (fields[4], fields[5], fields[6], fields[7]);
            let np = fields.get(8).copied().unwrap_or("_");
            if form.is_empty() {
                return Err(err(ParseErrorKind::EmptyField("form")));
            }
            if pos.is_empty() {
                return Err(err(ParseErrorKind::EmptyField("pos")));
            }
            if annotator.is_empty() {
                return Err(err(ParseErrorKind::EmptyField("annotator")));
            }

            match pending.as_mut() {
                Some(p) if p.index == index => {
                    if p.form != form || p.pos != pos {
                        return Err(err(ParseErrorKind::InconsistentToken(index)));
                    }
                    if p.unannotated || annotator == "_" {
                        return Err(err(ParseErrorKind::BadUnannotated));
                    }
                }
                _ => {
                    let expected = sentence.tokens.len() + 1;
                    if index != expected {
                        return Err(err(ParseErrorKind::IndexSequence {
                            expected,
                            found: index,
                        }));
                    }
                    sentence.tokens.push(Token {
                        index,
                        form: form.to_string(),
                        pos: pos.to_string(),
                    });
                    pending = Some(PendingToken {
                        index,
                        form: form.to_string(),
                        pos: pos.to_string(),
                        annotators: HashSet::new(),
                        unannotated: false,
                    });
                }
            }
            let p = pending.as_mut().expect("pending token set above");

            if annotator == "_" {
                if [group, kind, scene, function, np].iter().any(|f| *f != "_") {
                    return Err(err(ParseErrorKind::BadUnannotated));
                }
                p.unannotated = true;
                continue;
            }
            if !p.annotators.insert(annotator.to_string()) {
                return Err(err(ParseErrorKind::Overlap {
                    index,
                    annotator: annotator.to_string(),
                }));
            }
            if group == "_" {
                return Err(err(ParseErrorKind::MissingGroup));
            }
            let group_no = group
                .strip_prefix('T')
                .and_then(|g| g.parse::<u32>().ok())
                .filter(|g| g.to_string() == group[1..])
                .ok_or_else(|| err(ParseErrorKind::BadGroup(group.to_string())))?;

            let key = (annotator.to_string(), group_no);
            if let Some(&at) = groups.get(&key) {
                if kind != "_" || scene != "_" || function != "_" || np != "_" {
                    return Err(err(ParseErrorKind::LabelOnContinuation {
                        annotator: annotator.to_string(),
                        group: group_no,
                    }));
                }
                annotations[at].token_indices.push(index);
                continue;
            }

            if kind == "_" || scene == "_" {
                return Err(err(ParseErrorKind::DanglingGroup {
                    annotator: annotator.to_string(),
                    group: group_no,
                }));
            }
            let kind: TargetKind = kind
                .parse()
                .map_err(|_| err(ParseErrorKind::BadKind(kind.to_string())))?;
            let label = self.parse_label(scene, function).map_err(err)?;
            let np_span = match np {
                "_" => None,
                s => Some(
                    s.parse::<NpSpan>()
                        .map_err(|_| err(ParseErrorKind::BadNpSpan(s.to_string())))?,
                ),
            };

            groups.insert(key, annotations.len());
            map.targets
                .insert((sentence.id.clone(), annotator.to_string(), group_no), line);
            annotations.push(TargetAnnotation {
                sentence_id: sentence.id.clone(),
                token_indices: vec![index],
                kind,
                label,
                annotator: annotator.to_string(),
                group: group_no,
                np_span,
            });
        }

        if let Some(s) = current.take() {
            sentences.push(s);
        }
        let line = last_line.max(1);
        let doc_id = doc_id.ok_or(ParseError {
            line,
            kind: ParseErrorKind::MissingHeader("doc_id"),
        })?;
        let language = language.ok_or(ParseError {
            line,
            kind: ParseErrorKind::MissingHeader("language"),
        })?;

        let mut doc = AnnotatedDocument {
            doc_id,
            language,
            sentences,
            annotations,
        };
        doc.canonicalize();
        Ok((doc, map))
    }

    fn parse_label(&self, scene: &str, function: &str) -> Result<Label, ParseErrorKind> {
        if let Some(special) = self.specials.resolve(scene) {
            if function != "_" {
                return Err(ParseErrorKind::SpecialWithFunction(special.to_string()));
            }
            return Ok(Label::Special(special.to_string()));
        }
        let scene = self
            .hierarchy
            .lookup(scene)
            .ok_or_else(|| ParseErrorKind::UnknownSupersense(scene.to_string()))?;
        if function == "_" {
            return Err(ParseErrorKind::MissingFunction(scene.name.clone()));
        }
        let function = self
            .hierarchy
            .lookup(function)
            .ok_or_else(|| ParseErrorKind::UnknownSupersense(function.to_string()))?;
        Ok(Label::Construal(Construal::new(&scene.name, &function.name)))
    }
}

fn parse_index(s: &str) -> Option<usize> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) || s.starts_with('0') {
        return None;
    }
    s.parse().ok()
}

/// One problem found by [`validate_document`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sentence_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub annotator: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub token: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationCode {
    DuplicateSentence,
    TokenSequence,
    BadTokenText,
    BadIdentifier,
    UnknownSentence,
    EmptyTarget,
    UnsortedIndices,
    IndexOutOfRange,
    Overlap,
    DuplicateGroup,
    KindPosMismatch,
    UnknownLabel,
    UnknownSpecial,
    BadNpSpan,
}

impl ViolationCode {
    pub fn as_str(self) -> &'static str {
        use ViolationCode::*;
        match self {
            DuplicateSentence => "duplicate-sentence",
            TokenSequence => "token-sequence",
            BadTokenText => "bad-token-text",
            BadIdentifier => "bad-identifier",
            UnknownSentence => "unknown-sentence",
            EmptyTarget => "empty-target",
            UnsortedIndices => "unsorted-indices",
            IndexOutOfRange => "index-out-of-range",
            Overlap => "overlap",
            DuplicateGroup => "duplicate-group",
            KindPosMismatch => "kind-pos-mismatch",
            UnknownLabel => "unknown-label",
            UnknownSpecial => "unknown-special",
            BadNpSpan => "bad-np-span",
        }
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Violation {
    fn new(code: ViolationCode, message: String) -> Violation {
        Violation {
            code,
            message,
            sentence_id: None,
            annotator: None,
            group: None,
            token: None,
        }
    }

    fn in_sentence(mut self, id: &str) -> Self {
        self.sentence_id = Some(id.to_string());
        self
    }

    fn for_target(mut self, t: &TargetAnnotation) -> Self {
        self.sentence_id = Some(t.sentence_id.clone());
        self.annotator = Some(t.annotator.clone());
        self.group = Some(t.group);
        self
    }

    fn at_token(mut self, index: usize) -> Self {
        self.token = Some(index);
        self
    }
}

/// Validate with the default special labels.
pub fn validate_document(d: &AnnotatedDocument, h: &Hierarchy) -> Vec<Violation> {
    validate_document_with(d, h, &SpecialLabels::default())
}

/// Check every document invariant plus the coverb/localizer POS constraints.
/// The result is sorted, so it does not depend on annotation order.
pub fn validate_document_with(
    d: &AnnotatedDocument,
    h: &Hierarchy,
    specials: &SpecialLabels,
) -> Vec<Violation> {
    use ViolationCode::*;
    let mut out = Vec::new();

    let mut sentences: HashMap<&str, &Sentence> = HashMap::new();
    for s in &d.sentences {
        if bad_text(&s.id) {
            out.push(Violation::new(BadIdentifier, format!("bad sentence id {:?}", s.id)));
        }
        if sentences.insert(s.id.as_str(), s).is_some() {
            out.push(
                Violation::new(DuplicateSentence, format!("duplicate sentence id '{}'", s.id))
                    .in_sentence(&s.id),
            );
        }
        for (i, tok) in s.tokens.iter().enumerate() {
            if tok.index != i + 1 {
                out.push(
                    Violation::new(
                        TokenSequence,
                        format!("token at position {} has index {}", i + 1, tok.index),
                    )
                    .in_sentence(&s.id)
                    .at_token(tok.index),
                );
            }
            if bad_text(&tok.form) || bad_text(&tok.pos) {
                out.push(
                    Violation::new(BadTokenText, format!("token {} has an unusable form or POS", tok.index))
                        .in_sentence(&s.id)
                        .at_token(tok.index),
                );
            }
        }
    }

    let mut owner: HashMap<(&str, &str, usize), u32> = HashMap::new();
    let mut group_ids: HashSet<(&str, &str, u32)> = HashSet::new();
    for t in &d.annotations {
        if bad_text(&t.annotator) || t.annotator == "_" {
            out.push(
                Violation::new(BadIdentifier, format!("bad annotator id {:?}", t.annotator))
                    .for_target(t),
            );
        }
        if !group_ids.insert((&t.sentence_id, &t.annotator, t.group)) {
            out.push(
                Violation::new(
                    DuplicateGroup,
                    format!("annotator '{}' uses group T{} twice", t.annotator, t.group),
                )
                .for_target(t),
            );
        }

        match &t.label {
            Label::Construal(c) => {
                for (role, name) in [("scene", &c.scene), ("function", &c.function)] {
                    match h.lookup(name) {
                        Some(s) if s.name == *name => {}
                        _ => out.push(
                            Violation::new(UnknownLabel, format!("unknown {role} supersense '{name}'"))
                                .for_target(t),
                        ),
                    }
                }
            }
            Label::Special(s) => {
                if !specials.contains(s) {
                    out.push(
                        Violation::new(UnknownSpecial, format!("unknown special label '{s}'"))
                            .for_target(t),
                    );
                }
            }
        }

        let Some(sentence) = sentences.get(t.sentence_id.as_str()) else {
            out.push(
                Violation::new(UnknownSentence, format!("no sentence '{}'", t.sentence_id))
                    .for_target(t),
            );
            continue;
        };
        if t.token_indices.is_empty() {
            out.push(Violation::new(EmptyTarget, "target has no tokens".into()).for_target(t));
            continue;
        }
        if t.token_indices.windows(2).any(|w| w[0] >= w[1]) {
            out.push(
                Violation::new(UnsortedIndices, "token indices must be strictly increasing".into())
                    .for_target(t),
            );
        }
        if let Some(np) = t.np_span {
            if np.start == 0 || np.start > np.end || np.end > sentence.tokens.len() {
                out.push(
                    Violation::new(BadNpSpan, format!("NP span {np} outside the sentence"))
                        .for_target(t),
                );
            }
        }
        for &i in &t.token_indices {
            let Some(tok) = sentence.token(i) else {
                out.push(
                    Violation::new(IndexOutOfRange, format!("token {i} does not exist"))
                        .for_target(t)
                        .at_token(i),
                );
                continue;
            };
            if let Some(prev) = owner.insert((&t.sentence_id, &t.annotator, i), t.group) {
                if prev != t.group {
                    let (a, b) = (prev.min(t.group), prev.max(t.group));
                    let mut v = Violation::new(
                        Overlap,
                        format!("token {i} is in targets T{a} and T{b} of '{}'", t.annotator),
                    )
                    .for_target(t)
                    .at_token(i);
                    v.group = Some(b);
                    out.push(v);
                }
            }
            if let Some(required) = t.kind.required_pos() {
                if tok.pos != required {
                    out.push(
                        Violation::new(
                            KindPosMismatch,
                            format!(
                                "{} target on token {i} '{}' tagged {}, expected {required}",
                                t.kind.code(),
                                tok.form,
                                tok.pos
                            ),
                        )
                        .for_target(t)
                        .at_token(i),
                    );
                }
            }
        }
    }

    out.sort();
    out.dedup();
    out
}

fn bad_text(s: &str) -> bool {
    s.is_empty() || s.contains(['\t', '\n', '\r']) || s.trim() != s
}

/// Group a document's targets per annotator; handy for per-layer statistics.
pub fn layers(d: &AnnotatedDocument) -> BTreeMap<&str, Vec<&TargetAnnotation>> {
    let mut out: BTreeMap<&str, Vec<&TargetAnnotation>> = BTreeMap::new();
    for t in &d.annotations {
        out.entry(t.annotator.as_str()).or_default().push(t);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const EX2: &str = "# doc_id = ex2\n# language = zh\n\n# sent_id = ex2\n\
1\t他\tPN\t_\t_\t_\t_\t_\n\
2\t在\tP\ta1\tT1\tCOVERB\tLocus\tLocus\n\
3\t学术\tNN\t_\t_\t_\t_\t_\n\
4\t上\tLC\ta1\tT2\tLOCALIZER\tTopic\tLocus\n\
5\t有所作为\tVV\t_\t_\t_\t_\t_\n";

    fn h() -> Hierarchy {
        Hierarchy::builtin()
    }

    #[test]
    fn parses_example_two() {
        let d = parse_document(EX2, &h()).unwrap();
        assert_eq!(d.sentences[0].tokens.len(), 5);
        assert_eq!(d.annotations.len(), 2);
        assert_eq!(d.annotations[1].label, Label::Construal(Construal::new("Topic", "Locus")));
        assert_eq!(d.annotations[0].kind, TargetKind::Coverb);
        assert!(validate_document(&d, &h()).is_empty());
        assert_eq!(write_document(&d), EX2);
    }

    #[test]
    fn upper_case_labels_are_canonicalized() {
        let text = EX2.replace("Topic\tLocus", "TOPIC\tLOCUS");
        let d = parse_document(&text, &h()).unwrap();
        assert_eq!(d.annotations[1].label.to_string(), "Topic~>Locus");
    }

    #[test]
    fn unknown_function_is_rejected() {
        let text = EX2.replace("Topic\tLocus", "Locus\tBogus");
        let e = parse_document(&text, &h()).unwrap_err();
        assert_eq!(e.line, 8);
        assert_eq!(e.kind, ParseErrorKind::UnknownSupersense("Bogus".into()));
    }

    #[test]
    fn empty_document() {
        let text = "# doc_id = empty\n# language = en\n";
        let d = parse_document(text, &h()).unwrap();
        assert!(d.sentences.is_empty());
        assert_eq!(write_document(&d), text);
    }

    #[test]
    fn missing_header() {
        let e = parse_document("# language = zh\n\n# sent_id = a\n", &h()).unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::MissingHeader("doc_id"));
        let e = parse_document("", &h()).unwrap_err();
        assert_eq!(e.code(), "missing-header");
    }

    #[test]
    fn bad_column_count() {
        let text = EX2.replace("3\t学术\tNN\t_\t_\t_\t_\t_", "3\t学术\tNN\t_\t_");
        let e = parse_document(&text, &h()).unwrap_err();
        assert_eq!((e.line, e.kind), (7, ParseErrorKind::BadColumnCount(5)));
    }

    #[test]
    fn dangling_group() {
        let text = EX2.replace("a1\tT2\tLOCALIZER\tTopic\tLocus", "a1\tT2\t_\t_\t_");
        let e = parse_document(&text, &h()).unwrap_err();
        assert_eq!(e.code(), "dangling-group");
    }

    #[test]
    fn overlap_in_file() {
        let text = EX2.replace(
            "4\t上\tLC\ta1\tT2\tLOCALIZER\tTopic\tLocus\n",
            "4\t上\tLC\ta1\tT2\tLOCALIZER\tTopic\tLocus\n4\t上\tLC\ta1\tT3\tLOCALIZER\tLocus\tLocus\n",
        );
        let e = parse_document(&text, &h()).unwrap_err();
        assert_eq!(e.code(), "overlap");
        assert_eq!(e.line, 9);
    }

    #[test]
    fn discontinuous_target_and_specials() {
        let text = "# doc_id = d\n# language = en\n\n# sent_id = s1\n\
1\tas\tIN\tx\tT1\tOTHER\tComparisonRef\tComparisonRef\t3-3\n\
2\tbig\tJJ\t_\t_\t_\t_\t_\n\
3\tas\tIN\tx\tT1\t_\t_\t_\n\
4\tso\tRB\tx\tT2\tOTHER\tDISCOURSE\t_\n";
        let d = parse_document(text, &h()).unwrap();
        assert_eq!(d.annotations[0].token_indices, vec![1, 3]);
        assert_eq!(d.annotations[0].np_span, Some(NpSpan { start: 3, end: 3 }));
        assert_eq!(d.annotations[1].label, Label::Special("DISCOURSE".into()));
        assert_eq!(d.target_form(&d.annotations[0]), "as … as");
        assert_eq!(write_document(&d), text);
        let bad = text.replace("DISCOURSE\t_", "DISCOURSE\tLocus");
        assert_eq!(parse_document(&bad, &h()).unwrap_err().code(), "special-with-function");
    }

    #[test]
    fn multi_annotator_lines() {
        let text = EX2.replace(
            "2\t在\tP\ta1\tT1\tCOVERB\tLocus\tLocus\n",
            "2\t在\tP\ta1\tT1\tCOVERB\tLocus\tLocus\n2\t在\tP\ta2\tT1\tCOVERB\tLocus\tLocus\n",
        );
        let d = parse_document(&text, &h()).unwrap();
        assert_eq!(d.annotators(), vec!["a1", "a2"]);
        assert_eq!(write_document(&d), text);
        let inconsistent = text.replace("2\t在\tP\ta2", "2\t在\tVV\ta2");
        assert_eq!(
            parse_document(&inconsistent, &h()).unwrap_err().code(),
            "inconsistent-token"
        );
    }

    #[test]
    fn non_utf8_is_located() {
        let mut bytes = EX2.as_bytes().to_vec();
        bytes.extend_from_slice(b"6\t\xff\tPU\t_\t_\t_\t_\t_\n");
        let e = Parser::new(&h()).parse_bytes(&bytes).unwrap_err();
        assert_eq!((e.line, e.kind), (10, ParseErrorKind::InvalidUtf8));
    }

    #[test]
    fn kind_pos_mismatch_and_overlap_violations() {
        let hier = h();
        let mut d = parse_document(EX2, &hier).unwrap();
        d.sentences[0].tokens[3].pos = "VV".into();
        let v = validate_document(&d, &hier);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].code, ViolationCode::KindPosMismatch);

        let mut d = parse_document(EX2, &hier).unwrap();
        d.annotations[1].token_indices = vec![2, 4];
        d.annotations[1].kind = TargetKind::Other;
        let v = validate_document(&d, &hier);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].code, ViolationCode::Overlap);
        assert_eq!(v[0].token, Some(2));
    }

    #[test]
    fn validation_ignores_annotation_order() {
        let hier = h();
        let mut d = parse_document(EX2, &hier).unwrap();
        d.annotations[0].label = Label::Construal(Construal::new("Locus", "Nowhere"));
        d.annotations[1].token_indices = vec![9];
        let a = validate_document(&d, &hier);
        d.annotations.reverse();
        assert_eq!(a, validate_document(&d, &hier));
        assert_eq!(a.len(), 2);
    }
}
