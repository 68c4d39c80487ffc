//! `/v1` JSON endpoints. Each handler loads the current snapshot once and
//! answers entirely from it.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use litknow_core::extractor::RelationTriple;
use litknow_core::lexicon::{ConceptCategory, ConceptId};
use litknow_core::semantics::{self, QueryError};
use litknow_core::store::{EvidenceOrder, Ratio, RelatedSort, RelationKey, RelationSummary, Snapshot, StoreError};

use crate::state::{SnapshotCell, Updater};

#[derive(Clone)]
pub struct AppState {
    pub cell: Arc<SnapshotCell>,
    pub updater: Option<Arc<Updater>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    NotFound,
    BadRequest,
    DegenerateQuery,
    Updating,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: ErrorCode,
    pub message: String,
}

impl ApiError {
    pub fn not_found(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::NOT_FOUND,
            code: ErrorCode::NotFound,
            message: message.into(),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            code: ErrorCode::BadRequest,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::InvalidTriple(m) => ApiError::bad_request(m),
            other => ApiError::not_found(other.to_string()),
        }
    }
}

impl From<QueryError> for ApiError {
    fn from(e: QueryError) -> Self {
        match e {
            QueryError::NotFound(_) => ApiError::not_found(e.to_string()),
            QueryError::Degenerate => ApiError {
                status: StatusCode::UNPROCESSABLE_ENTITY,
                code: ErrorCode::DegenerateQuery,
                message: e.to_string(),
            },
            QueryError::Empty | QueryError::Connected(..) => ApiError::bad_request(e.to_string()),
        }
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;
type Params = Query<HashMap<String, String>>;

fn param<T: std::str::FromStr>(params: &HashMap<String, String>, name: &str, default: T) -> Result<T, ApiError> {
    match params.get(name) {
        None => Ok(default),
        Some(v) => v
            .parse()
            .map_err(|_| ApiError::bad_request(format!("invalid value {v:?} for {name}"))),
    }
}

const MAX_LIMIT: usize = 1000;

fn page(params: &HashMap<String, String>, default_limit: usize) -> Result<(usize, usize), ApiError> {
    let limit = param(params, "limit", default_limit)?;
    if limit > MAX_LIMIT {
        return Err(ApiError::bad_request(format!("limit may not exceed {MAX_LIMIT}")));
    }
    Ok((limit, param(params, "offset", 0usize)?))
}

/// Exact ratio alongside its display string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Probability {
    pub display: String,
    pub numerator: u64,
    pub denominator: u64,
}

impl From<Ratio> for Probability {
    fn from(r: Ratio) -> Self {
        Probability {
            display: r.display(),
            numerator: r.numerator,
            denominator: r.denominator,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptBody {
    pub id: ConceptId,
    pub name: String,
    pub category: Option<ConceptCategory>,
    pub total_relations: u64,
}

fn concept_body(snap: &Snapshot, id: &ConceptId) -> ConceptBody {
    let entry = snap.catalog().get(id);
    ConceptBody {
        id: id.clone(),
        name: entry.map_or_else(|| id.to_string(), |e| e.name.clone()),
        category: entry.map(|e| e.category),
        total_relations: snap.total_relations(id),
    }
}

fn by_total_desc(a: &ConceptBody, b: &ConceptBody) -> std::cmp::Ordering {
    b.total_relations.cmp(&a.total_relations).then_with(|| a.id.cmp(&b.id))
}

async fn search_concepts(State(st): State<AppState>, Query(params): Params) -> ApiResult<Vec<ConceptBody>> {
    let q = params.get("q").map(|s| s.trim().to_lowercase()).unwrap_or_default();
    if q.is_empty() {
        return Err(ApiError::bad_request("query parameter q is required"));
    }
    let limit = param(&params, "limit", 20usize)?.min(MAX_LIMIT);
    let snap = st.cell.load();
    let mut hits: Vec<ConceptBody> = snap
        .catalog()
        .iter()
        .filter(|e| e.name.to_lowercase().contains(&q) || e.synonyms.iter().any(|s| s.to_lowercase().contains(&q)))
        .map(|e| concept_body(&snap, &e.id))
        .collect();
    hits.sort_by(by_total_desc);
    hits.truncate(limit);
    Ok(Json(hits))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryPage {
    pub category: ConceptCategory,
    pub total: usize,
    pub offset: usize,
    pub items: Vec<ConceptBody>,
}

async fn category_concepts(
    State(st): State<AppState>,
    Path(category): Path<String>,
    Query(params): Params,
) -> ApiResult<CategoryPage> {
    let category: ConceptCategory = category
        .parse()
        .map_err(|_| ApiError::not_found(format!("unknown category {category:?}")))?;
    let (limit, offset) = page(&params, 50)?;
    let snap = st.cell.load();
    let mut items: Vec<ConceptBody> = snap
        .catalog()
        .iter()
        .filter(|e| e.category == category && snap.total_relations(&e.id) > 0)
        .map(|e| concept_body(&snap, &e.id))
        .collect();
    items.sort_by(by_total_desc);
    let total = items.len();
    let items = items.into_iter().skip(offset).take(limit).collect();
    Ok(Json(CategoryPage {
        category,
        total,
        offset,
        items,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationBody {
    pub summary: RelationSummary,
    pub p_a_given_b: Probability,
    pub p_b_given_a: Probability,
    pub evidence: Vec<RelationTriple>,
}

fn evidence_order(params: &HashMap<String, String>) -> Result<EvidenceOrder, ApiError> {
    match params.get("order").map(String::as_str) {
        None | Some("asc") | Some("pub_date_asc") => Ok(EvidenceOrder::PubDateAsc),
        Some("desc") | Some("pub_date_desc") => Ok(EvidenceOrder::PubDateDesc),
        Some(other) => Err(ApiError::bad_request(format!("invalid order {other:?}"))),
    }
}

async fn relation(
    State(st): State<AppState>,
    Path((a, b)): Path<(String, String)>,
    Query(params): Params,
) -> ApiResult<RelationBody> {
    let order = evidence_order(&params)?;
    let (limit, offset) = page(&params, 50)?;
    let key = RelationKey::new(ConceptId(a), ConceptId(b)).ok_or_else(|| ApiError::not_found("a concept is not related to itself"))?;
    let snap = st.cell.load();
    let summary = snap
        .summary(&key)
        .ok_or_else(|| ApiError::not_found(format!("no relation between {} and {}", key.a, key.b)))?;
    let p = snap.conditional_probability(&key.a, &key.b)?;
    let evidence = snap.evidence(&key, order, limit, offset)?;
    Ok(Json(RelationBody {
        summary,
        p_a_given_b: p.p_a_given_b().into(),
        p_b_given_a: p.p_b_given_a().into(),
        evidence,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelatedRowBody {
    pub concept: ConceptId,
    pub name: String,
    pub category: Option<ConceptCategory>,
    pub count: u64,
    pub p_a_given_b: Probability,
    pub p_b_given_a: Probability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelatedBody {
    pub concept: ConceptBody,
    pub rows: Vec<RelatedRowBody>,
}

async fn related(State(st): State<AppState>, Path(id): Path<String>, Query(params): Params) -> ApiResult<RelatedBody> {
    let category = match params.get("category") {
        None => None,
        Some(c) => Some(
            c.parse::<ConceptCategory>()
                .map_err(|_| ApiError::bad_request(format!("unknown category {c:?}")))?,
        ),
    };
    let sort = match params.get("sort").map(String::as_str) {
        None | Some("count") => RelatedSort::Count,
        Some("p_a_given_b") => RelatedSort::PAGivenB,
        Some("p_b_given_a") => RelatedSort::PBGivenA,
        Some(other) => return Err(ApiError::bad_request(format!("invalid sort {other:?}"))),
    };
    let (limit, offset) = page(&params, 50)?;
    let id = ConceptId(id);
    let snap = st.cell.load();
    let rows = snap.related_concepts(&id, category, sort, limit, offset)?;
    let rows = rows
        .into_iter()
        .map(|r| {
            let c = concept_body(&snap, &r.concept);
            RelatedRowBody {
                concept: r.concept,
                name: c.name,
                category: c.category,
                count: r.count,
                p_a_given_b: r.p_a_given_b.into(),
                p_b_given_a: r.p_b_given_a.into(),
            }
        })
        .collect();
    Ok(Json(RelatedBody {
        concept: concept_body(&snap, &id),
        rows,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticRequest {
    pub concepts: Vec<ConceptId>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub exclude_direct: bool,
}

fn default_k() -> usize {
    semantics::DEFAULT_TOP_K
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticHitBody {
    pub concept: ConceptId,
    pub name: String,
    pub category: Option<ConceptCategory>,
    pub score: f64,
    pub directly_related: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticBody {
    pub concepts: Vec<ConceptId>,
    pub k: usize,
    pub exclude_direct: bool,
    pub hits: Vec<SemanticHitBody>,
}

async fn semantic_related(State(st): State<AppState>, body: Bytes) -> ApiResult<SemanticBody> {
    let req: SemanticRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))?;
    if req.concepts.is_empty() {
        return Err(QueryError::Empty.into());
    }
    if req.k > MAX_LIMIT {
        return Err(ApiError::bad_request(format!("k may not exceed {MAX_LIMIT}")));
    }
    let snap = st.cell.load();
    let model = snap
        .embedding
        .as_deref()
        .ok_or_else(|| ApiError::not_found("no embedding has been published yet"))?;
    let hits = if req.exclude_direct {
        semantics::related_not_connected_multi(&req.concepts, req.k, model, &snap.graph)?
    } else {
        let q = semantics::combine(&req.concepts, model)?;
        semantics::top_k_related(&q, req.k, &HashSet::new(), model, &snap.graph)
    };
    let hits = hits
        .into_iter()
        .map(|h| {
            let c = concept_body(&snap, &h.concept);
            SemanticHitBody {
                concept: h.concept,
                name: c.name,
                category: c.category,
                score: h.score,
                directly_related: h.directly_related,
            }
        })
        .collect();
    Ok(Json(SemanticBody {
        concepts: req.concepts,
        k: req.k,
        exclude_direct: req.exclude_direct,
        hits,
    }))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsBody {
    pub concepts: usize,
    pub relations: usize,
    pub triples: u64,
    pub articles: usize,
    pub snapshot_id: u64,
    pub last_update: Option<chrono::DateTime<chrono::Utc>>,
}

async fn stats(State(st): State<AppState>) -> Json<StatsBody> {
    let snap = st.cell.load();
    Json(StatsBody {
        concepts: snap.concept_count(),
        relations: snap.relation_count(),
        triples: snap.triple_count(),
        articles: snap.article_count(),
        snapshot_id: snap.id,
        last_update: (snap.id > 0).then_some(snap.created_at),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateAccepted {
    pub accepted: bool,
    pub snapshot_building: u64,
}

async fn admin_update(State(st): State<AppState>) -> Result<(StatusCode, Json<UpdateAccepted>), ApiError> {
    let updater = st
        .updater
        .as_ref()
        .ok_or_else(|| ApiError::bad_request("updates are not enabled on this server"))?;
    match updater.trigger() {
        Ok(id) => Ok((
            StatusCode::ACCEPTED,
            Json(UpdateAccepted {
                accepted: true,
                snapshot_building: id,
            }),
        )),
        Err(_) => Err(ApiError {
            status: StatusCode::CONFLICT,
            code: ErrorCode::Updating,
            message: "an update is already running".into(),
        }),
    }
}

async fn fallback() -> ApiError {
    ApiError::not_found("no such endpoint")
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/concepts", get(search_concepts))
        .route("/v1/categories/{category}/concepts", get(category_concepts))
        .route("/v1/relations/{a}/{b}", get(relation))
        .route("/v1/concepts/{id}/related", get(related))
        .route("/v1/semantic/related", post(semantic_related))
        .route("/v1/stats", get(stats))
        .route("/v1/admin/update", post(admin_update))
        .fallback(fallback)
        .with_state(state)
}
