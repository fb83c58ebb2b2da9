//! HTTP/JSON service backing the annotation UI.
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/hierarchy` | supersense inventory and special labels |
//! | GET | `/documents` | document summaries |
//! | GET | `/documents/:id` | document with its version token |
//! | GET | `/documents/:id/targets` | target candidates, `?annotator=` adds a diff |
//! | POST | `/documents/:id/annotations` | add or relabel one target |
//! | POST | `/validate` | check TSV text without storing it |
//! | GET | `/documents/:id/stats` | construal statistics, `?annotator=` |
//! | GET | `/iaa` | agreement, `?doc=&projection=&annotators=` |

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use zhsnacs::agreement::Projection;
use zhsnacs::corpus::{NpSpan, SpecialLabels, Violation};
use zhsnacs::targets::Lexicons;
use zhsnacs::{
    AnnotatedDocument, Construal, Hierarchy, Label, Language, Supersense, TargetAnnotation,
    TargetKind,
};

use crate::commands::{self, Problem};
use crate::config::{self, Config};
use crate::store::{Store, UpdateError};

pub struct AppState {
    pub hierarchy: Hierarchy,
    pub lexicons: Lexicons,
    pub specials: SpecialLabels,
    pub default_annotator: String,
    pub store: Store,
}

impl AppState {
    pub fn from_config(config: &Config) -> anyhow::Result<AppState> {
        let hierarchy = config::load_hierarchy(config.hierarchy_path.as_deref())?;
        let lexicons = config::load_lexicons(config.lexicon_path.as_deref())?;
        let (store, skipped) = Store::open(&config.data_dir, &hierarchy)?;
        for (path, why) in skipped {
            eprintln!("skipping {}: {why}", path.display());
        }
        Ok(AppState {
            hierarchy,
            lexicons,
            specials: SpecialLabels::default(),
            default_annotator: config.default_annotator.clone(),
            store,
        })
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/hierarchy", get(hierarchy))
        .route("/documents", get(list_documents))
        .route("/documents/:id", get(get_document))
        .route("/documents/:id/targets", get(document_targets))
        .route("/documents/:id/annotations", post(post_annotation))
        .route("/documents/:id/stats", get(document_stats))
        .route("/validate", post(validate))
        .route("/iaa", get(iaa))
        .with_state(state)
}

pub async fn serve(config: Config) -> anyhow::Result<()> {
    let state = Arc::new(AppState::from_config(&config)?);
    let listener = tokio::net::TcpListener::bind(config.listen_address).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await?;
    Ok(())
}

/// Error body: a message and, for rejected edits, the violations found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<Violation>,
    /// Current version token, on 409.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
}

pub struct ApiError(StatusCode, ErrorBody);

impl ApiError {
    fn new(status: StatusCode, error: impl Into<String>) -> ApiError {
        ApiError(
            status,
            ErrorBody {
                error: error.into(),
                violations: Vec::new(),
                version: None,
            },
        )
    }

    fn not_found(what: &str) -> ApiError {
        ApiError::new(StatusCode::NOT_FOUND, format!("no document '{what}'"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> ApiError {
        ApiError::new(r.status(), r.body_text())
    }
}

impl From<UpdateError> for ApiError {
    fn from(e: UpdateError) -> ApiError {
        match e {
            UpdateError::NotFound => ApiError::new(StatusCode::NOT_FOUND, "no such document"),
            UpdateError::Conflict { current } => {
                let mut err = ApiError::new(StatusCode::CONFLICT, "document changed since it was read");
                err.1.version = Some(current);
                err
            }
            UpdateError::Rejected(why) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, why),
            UpdateError::Invalid(violations) => {
                let mut err = ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "annotation rejected");
                err.1.violations = violations;
                err
            }
            UpdateError::Io(e) => {
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("could not save: {e}"))
            }
        }
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyBody {
    pub version: String,
    pub nodes: Vec<HierarchyNode>,
    pub specials: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyNode {
    pub name: String,
    pub parent: Option<String>,
    pub subhierarchy: zhsnacs::Subhierarchy,
    pub depth: usize,
}

impl From<&Supersense> for HierarchyNode {
    fn from(s: &Supersense) -> HierarchyNode {
        HierarchyNode {
            name: s.name.clone(),
            parent: s.parent.clone(),
            subhierarchy: s.subhierarchy,
            depth: s.depth,
        }
    }
}

async fn hierarchy(State(st): State<Arc<AppState>>) -> Json<HierarchyBody> {
    Json(HierarchyBody {
        version: st.hierarchy.version().to_string(),
        nodes: st.hierarchy.nodes().iter().map(HierarchyNode::from).collect(),
        specials: st.specials.iter().map(str::to_string).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentSummary {
    pub id: String,
    pub doc_id: String,
    pub language: Language,
    pub sentences: usize,
    pub targets: usize,
    pub annotators: Vec<String>,
    pub version: String,
}

async fn list_documents(State(st): State<Arc<AppState>>) -> Json<Vec<DocumentSummary>> {
    Json(
        st.store
            .list()
            .iter()
            .map(|s| DocumentSummary {
                id: s.id.clone(),
                doc_id: s.doc.doc_id.clone(),
                language: s.doc.language,
                sentences: s.doc.sentences.len(),
                targets: s.doc.annotations.len(),
                annotators: s.doc.annotators().into_iter().map(str::to_string).collect(),
                version: s.version.clone(),
            })
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentBody {
    pub id: String,
    pub version: String,
    pub document: AnnotatedDocument,
}

async fn get_document(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<DocumentBody> {
    let snap = st.store.get(&id).ok_or_else(|| ApiError::not_found(&id))?;
    Ok(Json(DocumentBody {
        id: snap.id.clone(),
        version: snap.version.clone(),
        document: snap.doc.clone(),
    }))
}

#[derive(Debug, Default, Deserialize)]
struct AnnotatorQuery {
    annotator: Option<String>,
}

async fn document_targets(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<AnnotatorQuery>,
) -> ApiResult<commands::TargetsOutput> {
    let snap = st.store.get(&id).ok_or_else(|| ApiError::not_found(&id))?;
    let gold: Option<Vec<&TargetAnnotation>> =
        q.annotator.as_deref().map(|a| snap.doc.layer(a).collect());
    Ok(Json(commands::targets_output(&snap.doc, &st.lexicons, gold.as_deref())))
}

async fn document_stats(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<AnnotatorQuery>,
) -> ApiResult<commands::StatsOutput> {
    let snap = st.store.get(&id).ok_or_else(|| ApiError::not_found(&id))?;
    Ok(Json(commands::stats_output(&snap.doc, q.annotator.as_deref(), &st.hierarchy)))
}

/// Body of `POST /documents/:id/annotations`. A target the annotator already
/// has over exactly these tokens is relabelled; otherwise a new one is added.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationRequest {
    pub sentence_id: String,
    pub token_indices: Vec<usize>,
    /// Inferred from the tokens' POS tags when absent.
    #[serde(default)]
    pub kind: Option<TargetKind>,
    /// Scene role, or a special label such as `DISCOURSE`.
    pub scene: String,
    /// Absent or `_` for special labels.
    #[serde(default)]
    pub function: Option<String>,
    #[serde(default)]
    pub annotator: Option<String>,
    pub version: String,
    #[serde(default)]
    pub np_span: Option<NpSpan>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationResponse {
    pub version: String,
    pub target: TargetAnnotation,
}

impl AppState {
    /// Canonical casing for known names; unknown ones pass through so that
    /// validation reports them.
    fn canonical(&self, name: &str) -> String {
        self.hierarchy
            .lookup(name)
            .map(|s| s.name.clone())
            .unwrap_or_else(|| name.to_string())
    }

    fn label_of(&self, req: &AnnotationRequest) -> Result<Label, UpdateError> {
        let function = req.function.as_deref().filter(|f| *f != "_");
        match (self.specials.resolve(&req.scene), function) {
            (Some(s), None) => Ok(Label::Special(s.to_string())),
            (Some(s), Some(_)) => Err(UpdateError::Rejected(format!("{s} takes no function"))),
            (None, None) => Err(UpdateError::Rejected(format!("construal '{}' has no function", req.scene))),
            (None, Some(f)) => Ok(Label::Construal(Construal {
                scene: self.canonical(&req.scene),
                function: self.canonical(f),
            })),
        }
    }
}

fn infer_kind(doc: &AnnotatedDocument, sentence_id: &str, indices: &[usize]) -> TargetKind {
    let Some(s) = doc.sentence(sentence_id) else {
        return TargetKind::Other;
    };
    for kind in [TargetKind::Coverb, TargetKind::Localizer] {
        let pos = kind.required_pos();
        if !indices.is_empty() && indices.iter().all(|&i| s.token(i).map(|t| t.pos.as_str()) == pos) {
            return kind;
        }
    }
    TargetKind::Other
}

async fn post_annotation(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    payload: Result<Json<AnnotationRequest>, JsonRejection>,
) -> ApiResult<AnnotationResponse> {
    let Json(req) = payload?;
    let annotator = req.annotator.clone().unwrap_or_else(|| st.default_annotator.clone());
    let label = st.label_of(&req).map_err(ApiError::from)?;
    let (snap, target) = st.store.update(&id, &req.version, &st.hierarchy, |doc| {
        let kind = req
            .kind
            .unwrap_or_else(|| infer_kind(doc, &req.sentence_id, &req.token_indices));
        let existing = doc.annotations.iter_mut().find(|t| {
            t.sentence_id == req.sentence_id
                && t.annotator == annotator
                && t.token_indices == req.token_indices
        });
        let target = match existing {
            Some(t) => {
                t.kind = kind;
                t.label = label;
                t.np_span = req.np_span;
                t.clone()
            }
            None => {
                let group = doc
                    .annotations
                    .iter()
                    .filter(|t| t.sentence_id == req.sentence_id && t.annotator == annotator)
                    .map(|t| t.group)
                    .max()
                    .unwrap_or(0)
                    + 1;
                let t = TargetAnnotation {
                    sentence_id: req.sentence_id.clone(),
                    token_indices: req.token_indices.clone(),
                    kind,
                    label,
                    annotator: annotator.clone(),
                    group,
                    np_span: req.np_span,
                };
                doc.annotations.push(t.clone());
                t
            }
        };
        Ok(target)
    })?;
    Ok(Json(AnnotationResponse {
        version: snap.version.clone(),
        target,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateRequest {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateResponse {
    pub valid: bool,
    pub problems: Vec<Problem>,
}

async fn validate(
    State(st): State<Arc<AppState>>,
    payload: Result<Json<ValidateRequest>, JsonRejection>,
) -> ApiResult<ValidateResponse> {
    let Json(req) = payload?;
    let problems = commands::check_bytes(req.text.as_bytes(), &st.hierarchy);
    Ok(Json(ValidateResponse {
        valid: problems.is_empty(),
        problems,
    }))
}

#[derive(Debug, Deserialize)]
struct IaaQuery {
    doc: String,
    #[serde(default)]
    projection: Option<String>,
    /// Comma-separated.
    #[serde(default)]
    annotators: Option<String>,
}

async fn iaa(
    State(st): State<Arc<AppState>>,
    q: Result<Query<IaaQuery>, axum::extract::rejection::QueryRejection>,
) -> ApiResult<commands::IaaOutput> {
    let Query(q) = q.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.body_text()))?;
    let snap = st.store.get(&q.doc).ok_or_else(|| ApiError::not_found(&q.doc))?;
    let projection = q
        .projection
        .as_deref()
        .map(|p| {
            p.parse::<Projection>()
                .map_err(|_| ApiError::new(StatusCode::BAD_REQUEST, format!("unknown projection '{p}'")))
        })
        .transpose()?;
    let annotators: Vec<String> = q
        .annotators
        .as_deref()
        .map(|a| a.split(',').filter(|s| !s.is_empty()).map(str::to_string).collect())
        .unwrap_or_default();
    commands::iaa_output(&snap.doc, projection, &annotators)
        .map(Json)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))
}
