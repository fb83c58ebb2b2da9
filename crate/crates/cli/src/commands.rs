//! Command-line front end. Every subcommand writes to caller-supplied
//! streams and returns an exit status, so tests can drive it in-process.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use zhsnacs::agreement::{agreement_report, comparable_items, AgreementReport, Projection};
use zhsnacs::alignment::{
    bitext_units, heuristic_align, load_manual_alignments, match_rates, AlignmentPair,
    MatchReport, PairSource, WordLinks,
};
use zhsnacs::corpus::{validate_document, SourceMap};
use zhsnacs::stats::{stats_report, Layer, StatsReport};
use zhsnacs::targets::{
    diff_targets, identify_targets, CandidateKind, Lexicons, Rationale, TargetDiff,
};
use zhsnacs::{AnnotatedDocument, Hierarchy, Subhierarchy, TargetAnnotation};

use crate::config::{self, Config};

#[derive(Debug, Parser)]
#[command(name = "zhsnacs", version, about = "SNACS adposition supersense annotation tools")]
pub struct Cli {
    /// Hierarchy TSV to use instead of the built-in inventory.
    #[arg(long, global = true, value_name = "PATH")]
    pub hierarchy: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check annotation files; prints `file:line: code: message` per problem.
    Validate {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// List coverb/localizer target candidates.
    Targets {
        file: PathBuf,
        #[arg(long, value_name = "PATH")]
        lexicon: Option<PathBuf>,
        /// Compare candidates with the targets annotated in FILE.
        #[arg(long)]
        gold: bool,
        /// Annotator whose targets serve as gold.
        #[arg(long, requires = "gold")]
        annotator: Option<String>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Inter-annotator agreement.
    Iaa {
        file: PathBuf,
        /// Restrict to one projection; all three by default.
        #[arg(long, value_enum)]
        projection: Option<ProjectionArg>,
        /// Comma-separated annotators; all annotators in FILE by default.
        #[arg(long, value_delimiter = ',')]
        annotators: Vec<String>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Pair English and Chinese targets and report construal match rates.
    Align {
        en: PathBuf,
        zh: PathBuf,
        /// Manual alignment file.
        #[arg(long, conflicts_with = "links", value_name = "PATH")]
        manual: Option<PathBuf>,
        /// Word-link file for the heuristic aligner.
        #[arg(long, value_name = "PATH")]
        links: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Construal statistics for one annotation layer.
    Stats {
        file: PathBuf,
        /// Layer to report; every layer pooled by default.
        #[arg(long)]
        annotator: Option<String>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Run the HTTP/JSON service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// JSON config file; flags below override its fields.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub data_dir: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub lexicon: Option<PathBuf>,
    #[arg(long, value_name = "ADDR")]
    pub listen: Option<std::net::SocketAddr>,
    #[arg(long)]
    pub annotator: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Text,
    /// JSON
    Structured,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProjectionArg {
    Scene,
    Function,
    Construal,
}

impl From<ProjectionArg> for Projection {
    fn from(p: ProjectionArg) -> Projection {
        match p {
            ProjectionArg::Scene => Projection::SceneRole,
            ProjectionArg::Function => Projection::Function,
            ProjectionArg::Construal => Projection::Construal,
        }
    }
}

/// Exit statuses.
pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_UNREADABLE: i32 = 2;

#[derive(Debug)]
pub enum CommandError {
    Unreadable { path: PathBuf, error: std::io::Error },
    Failed(anyhow::Error),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Unreadable { .. } => EXIT_UNREADABLE,
            CommandError::Failed(_) => EXIT_FAILURE,
        }
    }
}

impl fmt::Display for CommandError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CommandError::Unreadable { path, error } => {
                write!(f, "{}: cannot read: {error}", path.display())
            }
            CommandError::Failed(e) => write!(f, "{e:#}"),
        }
    }
}

impl<E: Into<anyhow::Error>> From<E> for CommandError {
    fn from(e: E) -> Self {
        CommandError::Failed(e.into())
    }
}

type CmdResult = Result<i32, CommandError>;

fn read_bytes(path: &Path) -> Result<Vec<u8>, CommandError> {
    std::fs::read(path).map_err(|error| CommandError::Unreadable {
        path: path.to_path_buf(),
        error,
    })
}

fn read_text(path: &Path) -> Result<String, CommandError> {
    let bytes = read_bytes(path)?;
    String::from_utf8(bytes)
        .map_err(|_| anyhow::anyhow!("{}: not valid UTF-8", path.display()).into())
}

fn read_document(path: &Path, h: &Hierarchy) -> Result<(AnnotatedDocument, SourceMap), CommandError> {
    let bytes = read_bytes(path)?;
    zhsnacs::corpus::Parser::new(h)
        .parse_bytes(&bytes)
        .map_err(|e| anyhow::anyhow!("{}:{}: {}: {}", path.display(), e.line, e.code(), e.kind).into())
}

fn emit_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), CommandError> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

/// Parse `args` and run the command. Returns the process exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_UNREADABLE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    match execute(cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> CmdResult {
    if let Command::Serve(args) = cli.command {
        return serve(cli.hierarchy, args);
    }
    let h = config::load_hierarchy(cli.hierarchy.as_deref())?;
    match cli.command {
        Command::Validate { files, format } => validate(&files, &h, format, out),
        Command::Targets {
            file,
            lexicon,
            gold,
            annotator,
            format,
        } => targets(&file, lexicon.as_deref(), gold, annotator.as_deref(), &h, format, out),
        Command::Iaa {
            file,
            projection,
            annotators,
            format,
        } => iaa(&file, projection.map(Into::into), &annotators, &h, format, out),
        Command::Align {
            en,
            zh,
            manual,
            links,
            format,
        } => align(&en, &zh, manual.as_deref(), links.as_deref(), &h, format, out),
        Command::Stats {
            file,
            annotator,
            format,
        } => stats(&file, annotator.as_deref(), &h, format, out),
        Command::Serve(_) => unreachable!(),
    }
}

// validate

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    pub line: usize,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileReport {
    pub path: String,
    /// Absent when the file could be read.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unreadable: Option<String>,
    pub problems: Vec<Problem>,
}

pub fn check_file(path: &Path, h: &Hierarchy) -> FileReport {
    let mut report = FileReport {
        path: path.display().to_string(),
        unreadable: None,
        problems: Vec::new(),
    };
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) => {
            report.unreadable = Some(e.to_string());
            return report;
        }
    };
    report.problems = check_bytes(&bytes, h);
    report
}

/// Parse errors and validation violations for one file, with line numbers.
pub fn check_bytes(bytes: &[u8], h: &Hierarchy) -> Vec<Problem> {
    match zhsnacs::corpus::Parser::new(h).parse_bytes(bytes) {
        Err(e) => vec![Problem {
            line: e.line,
            code: e.code().to_string(),
            message: e.kind.to_string(),
        }],
        Ok((doc, map)) => validate_document(&doc, h)
            .into_iter()
            .map(|v| Problem {
                // document-level problems point at the header
                line: map.locate(&v).unwrap_or(1),
                code: v.code.to_string(),
                message: v.message,
            })
            .collect(),
    }
}

fn validate(files: &[PathBuf], h: &Hierarchy, format: Format, out: &mut dyn Write) -> CmdResult {
    let reports: Vec<FileReport> = files.iter().map(|f| check_file(f, h)).collect();
    match format {
        Format::Structured => emit_json(out, &reports)?,
        Format::Text => {
            for r in &reports {
                if let Some(e) = &r.unreadable {
                    writeln!(out, "{}: cannot read: {e}", r.path)?;
                }
                for p in &r.problems {
                    writeln!(out, "{}:{}: {}: {}", r.path, p.line, p.code, p.message)?;
                }
            }
        }
    }
    Ok(if reports.iter().any(|r| r.unreadable.is_some()) {
        EXIT_UNREADABLE
    } else if reports.iter().any(|r| !r.problems.is_empty()) {
        EXIT_FAILURE
    } else {
        EXIT_OK
    })
}

// targets

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateRow {
    pub sentence_id: String,
    pub token_indices: Vec<usize>,
    pub form: String,
    pub kind: CandidateKind,
    pub rationale: Rationale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetsOutput {
    pub candidates: Vec<CandidateRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diff: Option<TargetDiff>,
}

pub fn gold_layer<'a>(
    doc: &'a AnnotatedDocument,
    annotator: Option<&'a str>,
) -> Result<Vec<&'a TargetAnnotation>, CommandError> {
    let annotators = doc.annotators();
    let chosen = match annotator {
        Some(a) if annotators.contains(&a) => a,
        Some(a) => return Err(anyhow::anyhow!("no annotations by '{a}'").into()),
        None if annotators.len() > 1 => {
            return Err(anyhow::anyhow!(
                "several annotators ({}); pick one with --annotator",
                annotators.join(", ")
            )
            .into())
        }
        None => match annotators.first() {
            Some(a) => a,
            None => return Ok(Vec::new()),
        },
    };
    Ok(doc.layer(chosen).collect())
}

/// Candidates for every sentence, diffed against `gold` when given.
pub fn targets_output(
    doc: &AnnotatedDocument,
    lex: &Lexicons,
    gold: Option<&[&TargetAnnotation]>,
) -> TargetsOutput {
    let mut candidates = Vec::new();
    let mut rows = Vec::new();
    for s in &doc.sentences {
        for c in identify_targets(s, lex) {
            let form = c
                .token_indices
                .iter()
                .filter_map(|&i| s.token(i).map(|t| t.form.as_str()))
                .collect::<Vec<_>>()
                .join(" ");
            rows.push(CandidateRow {
                sentence_id: c.sentence_id.clone(),
                token_indices: c.token_indices.clone(),
                form,
                kind: c.kind,
                rationale: c.rationale,
            });
            candidates.push(c);
        }
    }
    TargetsOutput {
        candidates: rows,
        diff: gold.map(|g| diff_targets(g, &candidates)),
    }
}

fn targets(
    file: &Path,
    lexicon: Option<&Path>,
    gold: bool,
    annotator: Option<&str>,
    h: &Hierarchy,
    format: Format,
    out: &mut dyn Write,
) -> CmdResult {
    let lex = config::load_lexicons(lexicon)?;
    let (doc, _) = read_document(file, h)?;
    let gold = if gold { Some(gold_layer(&doc, annotator)?) } else { None };
    let output = targets_output(&doc, &lex, gold.as_deref());
    match format {
        Format::Structured => emit_json(out, &output)?,
        Format::Text => {
            for r in &output.candidates {
                let idx: Vec<String> = r.token_indices.iter().map(usize::to_string).collect();
                let kind = match r.kind {
                    CandidateKind::Coverb => "coverb",
                    CandidateKind::Localizer => "localizer",
                };
                writeln!(
                    out,
                    "{}\t{}\t{}\t{kind}\t{}",
                    r.sentence_id,
                    idx.join(","),
                    r.form,
                    r.rationale.as_str()
                )?;
            }
            if let Some(d) = &output.diff {
                writeln!(
                    out,
                    "gold {} predicted {} matched {}: precision {:.3} recall {:.3} f1 {:.3}",
                    d.n_gold, d.n_predicted, d.n_matched, d.precision, d.recall, d.f1
                )?;
                for (what, spans) in [("missed", &d.missed), ("spurious", &d.spurious)] {
                    for s in spans {
                        writeln!(out, "{what}\t{}\t{:?}", s.sentence_id, s.token_indices)?;
                    }
                }
            }
        }
    }
    Ok(EXIT_OK)
}

// iaa

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IaaOutput {
    pub doc_id: String,
    pub annotators: Vec<String>,
    /// One record per projection.
    pub reports: Vec<AgreementReport>,
}

pub fn iaa_output(
    doc: &AnnotatedDocument,
    projection: Option<Projection>,
    annotators: &[String],
) -> anyhow::Result<IaaOutput> {
    let names: Vec<&str> = if annotators.is_empty() {
        doc.annotators()
    } else {
        annotators.iter().map(String::as_str).collect()
    };
    let items = comparable_items(doc, &names)?;
    let projections: Vec<Projection> = match projection {
        Some(p) => vec![p],
        None => Projection::ALL.to_vec(),
    };
    let reports = projections
        .into_iter()
        .map(|p| agreement_report(&items, p))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(IaaOutput {
        doc_id: doc.doc_id.clone(),
        annotators: items.annotators.clone(),
        reports,
    })
}

fn iaa(
    file: &Path,
    projection: Option<Projection>,
    annotators: &[String],
    h: &Hierarchy,
    format: Format,
    out: &mut dyn Write,
) -> CmdResult {
    let (doc, _) = read_document(file, h)?;
    let output = iaa_output(&doc, projection, annotators)?;
    match format {
        Format::Structured => emit_json(out, &output)?,
        Format::Text => {
            let first = &output.reports[0];
            writeln!(
                out,
                "annotators {}; {} items, {} excluded",
                output.annotators.join(" "),
                first.n_items,
                first.excluded_items
            )?;
            writeln!(out, "{:<10} {:>6} {:>9} {:>6}", "projection", "raw", "all-agree", "kappa")?;
            for r in &output.reports {
                writeln!(
                    out,
                    "{:<10} {:>6.3} {:>9.3} {:>6.3}",
                    r.projection.as_str(),
                    r.raw,
                    r.raw_all_agree,
                    r.kappa_mean
                )?;
                for pk in &r.kappa_pairwise {
                    writeln!(out, "  {}/{}: raw {:.3} kappa {:.3}", pk.a, pk.b, pk.raw, pk.kappa)?;
                }
            }
        }
    }
    Ok(EXIT_OK)
}

// align

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRow {
    pub unit_id: String,
    pub en_group: u32,
    pub zh_group: u32,
    pub en_form: String,
    pub zh_form: String,
    pub en_label: String,
    pub zh_label: String,
    pub source: PairSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignOutput {
    pub pairs: Vec<PairRow>,
    pub rates: MatchReport,
}

fn pair_row(p: &AlignmentPair, en: &AnnotatedDocument, zh: &AnnotatedDocument) -> PairRow {
    PairRow {
        unit_id: p.unit_id.clone(),
        en_group: p.en_target.group,
        zh_group: p.zh_target.group,
        en_form: en.target_form(&p.en_target),
        zh_form: zh.target_form(&p.zh_target),
        en_label: p.en_target.label.to_string(),
        zh_label: p.zh_target.label.to_string(),
        source: p.source,
        evidence: p.evidence.clone(),
    }
}

fn align(
    en_path: &Path,
    zh_path: &Path,
    manual: Option<&Path>,
    links: Option<&Path>,
    h: &Hierarchy,
    format: Format,
    out: &mut dyn Write,
) -> CmdResult {
    let (en, _) = read_document(en_path, h)?;
    let (zh, _) = read_document(zh_path, h)?;
    let pairs = match manual {
        Some(m) => load_manual_alignments(&read_text(m)?, &en, &zh)?,
        None => {
            let links = links.map(read_text).transpose()?;
            let links = links.as_deref().map(WordLinks::parse).transpose()?;
            heuristic_align(&en, &zh, &bitext_units(&en, &zh), links.as_ref())?
        }
    };
    let output = AlignOutput {
        pairs: pairs.iter().map(|p| pair_row(p, &en, &zh)).collect(),
        rates: match_rates(&pairs),
    };
    match format {
        Format::Structured => emit_json(out, &output)?,
        Format::Text => {
            for p in &output.pairs {
                writeln!(
                    out,
                    "{}\tT{} {} {}\tT{} {} {}",
                    p.unit_id, p.en_group, p.en_form, p.en_label, p.zh_group, p.zh_form, p.zh_label
                )?;
            }
            let r = &output.rates;
            let pct = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{:.1}%", v * 100.0));
            writeln!(
                out,
                "{} pairs ({} with special labels excluded): scene match {}, function match {}",
                r.n_pairs,
                r.excluded_special,
                pct(r.scene_match_rate),
                pct(r.function_match_rate)
            )?;
            let g = &r.per_en_target;
            writeln!(
                out,
                "per English target ({}): scene match {}, function match {}",
                g.n,
                pct(g.scene_match_rate),
                pct(g.function_match_rate)
            )?;
        }
    }
    Ok(EXIT_OK)
}

// stats

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsOutput {
    pub doc_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotator: Option<String>,
    pub report: StatsReport,
}

pub fn stats_output(
    doc: &AnnotatedDocument,
    annotator: Option<&str>,
    h: &Hierarchy,
) -> StatsOutput {
    let layer = match annotator {
        Some(a) => Layer::new(doc, a),
        None => Layer::all(doc),
    };
    StatsOutput {
        doc_id: doc.doc_id.clone(),
        annotator: annotator.map(str::to_string),
        report: stats_report(&layer, h),
    }
}

fn stats(
    file: &Path,
    annotator: Option<&str>,
    h: &Hierarchy,
    format: Format,
    out: &mut dyn Write,
) -> CmdResult {
    let (doc, _) = read_document(file, h)?;
    if let Some(a) = annotator {
        if !doc.annotators().contains(&a) {
            return Err(anyhow::anyhow!("no annotations by '{a}'").into());
        }
    }
    let output = stats_output(&doc, annotator, h);
    match format {
        Format::Structured => emit_json(out, &output)?,
        Format::Text => write_stats_text(&output.report, out)?,
    }
    Ok(EXIT_OK)
}

fn write_stats_text(r: &StatsReport, out: &mut dyn Write) -> std::io::Result<()> {
    let id = &r.identity;
    let pct = id.percent.map_or("n/a".to_string(), |p| format!("{p}%"));
    writeln!(out, "identity construals {}/{} ({pct})", id.same, id.total)?;
    writeln!(out, "function \\ scene  CIRC  PART  CONF")?;
    for f in Subhierarchy::ALL {
        let row = r.crosstab.counts[f.ordinal()];
        writeln!(out, "{:<16} {:>5} {:>5} {:>5}", f.code(), row[0], row[1], row[2])?;
    }
    writeln!(
        out,
        "diagonal {} off-diagonal {}",
        r.diagonal_total, r.offdiagonal_total
    )?;
    if r.crosstab.unresolved > 0 {
        writeln!(out, "unresolved labels {}", r.crosstab.unresolved)?;
    }
    let inv = &r.inventory;
    writeln!(
        out,
        "{} tokens, {} construal types, {} scene labels, {} function labels",
        inv.n_tokens, inv.n_construal_types, inv.n_distinct_scene_labels, inv.n_distinct_function_labels
    )?;
    let d = &r.divergence;
    writeln!(
        out,
        "divergent tokens {} over {} forms; identity tokens {} over {} forms",
        d.divergent_tokens, d.divergent_forms, d.identity_tokens, d.identity_forms
    )?;
    for f in &d.forms {
        let labels: Vec<String> = f.construals.iter().map(|c| format!("{} {}", c.label, c.count)).collect();
        writeln!(
            out,
            "  {}\t{} tokens, {} divergent\t{}",
            f.form,
            f.tokens,
            f.divergent,
            labels.join(", ")
        )?;
    }
    Ok(())
}

// serve

fn serve(hierarchy: Option<PathBuf>, args: ServeArgs) -> CmdResult {
    let mut config = match &args.config {
        Some(p) => Config::from_file(p)?,
        None => match &args.data_dir {
            Some(d) => Config::new(d),
            None => return Err(anyhow::anyhow!("serve needs --config or --data-dir").into()),
        },
    };
    if let Some(d) = args.data_dir {
        config.data_dir = d;
    }
    if hierarchy.is_some() {
        config.hierarchy_path = hierarchy;
    }
    if args.lexicon.is_some() {
        config.lexicon_path = args.lexicon;
    }
    if let Some(l) = args.listen {
        config.listen_address = l;
    }
    if let Some(a) = args.annotator {
        config.default_annotator = a;
    }
    config.check()?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(crate::service::serve(config))?;
    Ok(EXIT_OK)
}
