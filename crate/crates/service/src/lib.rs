//! HTTP reconciliation service over an indexed dataset: manifest, batched
//! reconcile endpoint returning per-field feature scores alongside the
//! global score, suggest endpoints, entity previews, and data extension.
//!
//! All shared state is immutable after startup, so handlers run lock-free
//! and identical requests always produce identical responses.

pub mod wire;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use axum::extract::{Form, Path, Query, Request, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{Html, IntoResponse, Json, Response};
use axum::routing::{get, post};
use axum::Router;
use recon_core::datamodel::{Dataset, ReconciliationQuery, TypeDef, ValueLiteral};
use recon_core::fieldscore::{feature_catalog, score_fields, FeatureDoc, FeatureScore};
use recon_core::globalscore::{auto_match, linear_score, rank_candidates, LinearModel};
use recon_core::index::{retrieve_candidates, IndexedDataset};
use recon_core::textproc::normalize;
use serde::Deserialize;
use serde_json::json;

use wire::{
    ExtendCell, ExtendColumn, ExtendRequest, ExtendResponse, PreviewSettings, QueryResult,
    ServiceManifest, SuggestEndpoint, SuggestItem, SuggestSettings, ViewTemplate, WireCandidate,
    WireQuery,
};

/// Default decision threshold when no model file is supplied.
pub const DEFAULT_THRESHOLD: f64 = 0.8;
/// Default ambiguity gap when no model file is supplied.
pub const DEFAULT_GAP: f64 = 0.05;
/// Retrieval over-fetch factor: candidates fetched per query before
/// scoring, as a multiple of the query limit.
pub const OVERFETCH: usize = 4;
/// Page size of the suggest endpoints.
pub const SUGGEST_PAGE: usize = 10;

/// Immutable per-process state shared by all request handlers.
pub struct ServiceState {
    index: IndexedDataset,
    model: Option<LinearModel>,
    catalog: Vec<FeatureDoc>,
    manifest: ServiceManifest,
}

impl ServiceState {
    /// Builds the shared state. `model` replaces the built-in weighted-sum
    /// model when given; it must be linear so that candidate scores stay
    /// explainable as a weighted sum of the reported features.
    pub fn new(index: IndexedDataset, model: Option<LinearModel>) -> ServiceState {
        let catalog = feature_catalog(index.dataset());
        let manifest = build_manifest(index.dataset(), &catalog);
        ServiceState {
            index,
            model,
            catalog,
            manifest,
        }
    }

    pub fn index(&self) -> &IndexedDataset {
        &self.index
    }

    pub fn dataset(&self) -> &Dataset {
        self.index.dataset()
    }

    pub fn model(&self) -> Option<&LinearModel> {
        self.model.as_ref()
    }

    pub fn catalog(&self) -> &[FeatureDoc] {
        &self.catalog
    }

    pub fn manifest(&self) -> &ServiceManifest {
        &self.manifest
    }

    /// The model used to score one query: the configured model if any,
    /// otherwise the built-in weights extended with an equal share of 0.15
    /// for each property the query constrains.
    pub fn effective_model(&self, query: &ReconciliationQuery) -> LinearModel {
        match &self.model {
            Some(m) => m.clone(),
            None => default_model(query),
        }
    }
}

/// The built-in weighted-sum model: name similarity dominates, type
/// agreement and popularity contribute, and constrained properties share a
/// fixed budget equally.
pub fn default_model(query: &ReconciliationQuery) -> LinearModel {
    let mut weights: BTreeMap<String, f64> = [
        ("name_softtfidf", 0.5),
        ("name_levenshtein", 0.2),
        ("type_match", 0.1),
        ("popularity", 0.05),
    ]
    .into_iter()
    .map(|(id, w)| (id.to_owned(), w))
    .collect();
    let mut pids: Vec<&str> = Vec::new();
    for (pid, _) in &query.constraints {
        if !pids.contains(&pid.as_str()) {
            pids.push(pid);
        }
    }
    if !pids.is_empty() {
        let share = 0.15 / pids.len() as f64;
        for pid in pids {
            weights.insert(format!("prop:{pid}"), share);
        }
    }
    LinearModel {
        weights,
        bias: 0.0,
        threshold: DEFAULT_THRESHOLD,
        gap: DEFAULT_GAP,
    }
}

/// Feature ids a linear model references that the catalog does not list;
/// such features always read as 0.
pub fn unknown_model_features(model: &LinearModel, catalog: &[FeatureDoc]) -> Vec<String> {
    model
        .weights
        .keys()
        .filter(|id| !catalog.iter().any(|doc| &doc.id == *id))
        .cloned()
        .collect()
}

fn build_manifest(dataset: &Dataset, catalog: &[FeatureDoc]) -> ServiceManifest {
    let md = dataset.metadata();
    let default_types = md
        .default_types
        .iter()
        .map(|id| {
            dataset.type_def(id).cloned().unwrap_or_else(|| TypeDef {
                id: id.clone(),
                name: id.clone(),
            })
        })
        .collect();
    ServiceManifest {
        name: md.name.clone(),
        identifier_space: md.identifier_space.clone(),
        schema_space: md.schema_space.clone(),
        default_types,
        view: ViewTemplate {
            url: md.view_url_template.clone(),
        },
        preview: PreviewSettings {
            url: "/preview?id={{id}}".to_owned(),
            width: 430,
            height: 100,
        },
        suggest: SuggestSettings {
            entity: SuggestEndpoint {
                service_path: "/suggest/entity".to_owned(),
            },
            type_suggest: SuggestEndpoint {
                service_path: "/suggest/type".to_owned(),
            },
            property: SuggestEndpoint {
                service_path: "/suggest/property".to_owned(),
            },
        },
        extend: wire::ExtendSettings::default(),
        feature_catalog: catalog.to_vec(),
    }
}

/// Answers a full batch given the raw JSON text of the `queries` field.
/// Returns an error only when the batch itself cannot be parsed; failures
/// of individual queries are reported per key.
pub fn reconcile_queries(
    state: &ServiceState,
    raw: &str,
) -> Result<BTreeMap<String, QueryResult>, String> {
    let parsed: BTreeMap<String, WireQuery> =
        serde_json::from_str(raw).map_err(|e| format!("malformed queries JSON: {e}"))?;
    Ok(parsed
        .into_iter()
        .map(|(key, wq)| (key, answer_query(state, wq)))
        .collect())
}

fn answer_query(state: &ServiceState, wq: WireQuery) -> QueryResult {
    let query = match wq.into_query() {
        Ok(q) => q,
        Err(message) => {
            return QueryResult {
                error: Some(message),
                ..QueryResult::default()
            }
        }
    };
    let model = state.effective_model(&query);
    let k = query.limit.saturating_mul(OVERFETCH);
    let hits = retrieve_candidates(&state.index, &query, k);

    let mut warnings: BTreeSet<String> = BTreeSet::new();
    let mut scores: Vec<(String, f64)> = Vec::with_capacity(hits.len());
    let mut features: HashMap<String, Vec<FeatureScore>> = HashMap::with_capacity(hits.len());
    for id in hits {
        let entity = state
            .dataset()
            .get_entity(&id)
            .expect("retrieved ids exist in the dataset");
        match score_fields(&query, entity, &state.index) {
            Ok(scored) => {
                warnings.extend(scored.warnings);
                scores.push((id.clone(), linear_score(&scored.features, &model)));
                features.insert(id, scored.features);
            }
            Err(err) => {
                return QueryResult {
                    error: Some(err.to_string()),
                    ..QueryResult::default()
                }
            }
        }
    }

    let mut ranked = rank_candidates(scores);
    ranked.truncate(query.limit);
    let best = auto_match(&ranked, &model).map(str::to_owned);

    let result = ranked
        .into_iter()
        .map(|(id, score)| {
            let entity = state.dataset().get_entity(&id).expect("ranked ids exist");
            let types = entity
                .types
                .iter()
                .map(|t| {
                    state.dataset().type_def(t).cloned().unwrap_or_else(|| TypeDef {
                        id: t.clone(),
                        name: t.clone(),
                    })
                })
                .collect();
            WireCandidate {
                name: entity.name.clone(),
                types,
                score,
                matched: best.as_deref() == Some(id.as_str()),
                features: features.remove(&id).unwrap_or_default(),
                id,
            }
        })
        .collect();
    QueryResult {
        result,
        error: None,
        warnings: warnings.into_iter().collect(),
    }
}

/// Builds the HTTP router over shared state. All routes are wrapped in a
/// permissive cross-origin layer.
pub fn build_router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/", get(manifest_handler).post(reconcile_handler))
        .route(
            "/reconcile",
            get(reconcile_handler).post(reconcile_handler),
        )
        .route("/suggest/{kind}", get(suggest_handler))
        .route("/preview", get(preview_handler))
        .route("/extend", post(extend_handler))
        .layer(middleware::from_fn(cross_origin))
        .with_state(state)
}

/// Serves the router on an already-bound listener until the task is
/// dropped or the connection loop fails.
pub async fn serve_on(
    listener: tokio::net::TcpListener,
    state: Arc<ServiceState>,
) -> std::io::Result<()> {
    axum::serve(listener, build_router(state)).await
}

async fn cross_origin(req: Request, next: Next) -> Response {
    if req.method() == Method::OPTIONS {
        return (
            StatusCode::NO_CONTENT,
            [
                (header::ACCESS_CONTROL_ALLOW_ORIGIN, "*"),
                (header::ACCESS_CONTROL_ALLOW_METHODS, "GET, POST, OPTIONS"),
                (header::ACCESS_CONTROL_ALLOW_HEADERS, "Content-Type"),
            ],
        )
            .into_response();
    }
    let mut response = next.run(req).await;
    response.headers_mut().insert(
        header::ACCESS_CONTROL_ALLOW_ORIGIN,
        HeaderValue::from_static("*"),
    );
    response
}

fn protocol_error(message: impl Into<String>) -> Response {
    (
        StatusCode::BAD_REQUEST,
        Json(json!({ "error": message.into() })),
    )
        .into_response()
}

async fn manifest_handler(State(state): State<Arc<ServiceState>>) -> Json<ServiceManifest> {
    Json(state.manifest().clone())
}

#[derive(Debug, Deserialize)]
struct ReconcileForm {
    queries: Option<String>,
}

async fn reconcile_handler(
    State(state): State<Arc<ServiceState>>,
    Form(form): Form<ReconcileForm>,
) -> Response {
    let Some(raw) = form.queries else {
        return protocol_error("missing \"queries\" parameter");
    };
    match reconcile_queries(&state, &raw) {
        Ok(results) => Json(results).into_response(),
        Err(message) => protocol_error(message),
    }
}

#[derive(Debug, Deserialize)]
struct SuggestParams {
    #[serde(default)]
    prefix: String,
    #[serde(default)]
    cursor: usize,
}

async fn suggest_handler(
    State(state): State<Arc<ServiceState>>,
    Path(kind): Path<String>,
    Query(params): Query<SuggestParams>,
) -> Response {
    let dataset = state.dataset();
    let items: Vec<(String, String)> = match kind.as_str() {
        "entity" => dataset
            .entities()
            .map(|e| (e.id.clone(), e.name.clone()))
            .collect(),
        "type" => dataset
            .types()
            .map(|t| (t.id.clone(), t.name.clone()))
            .collect(),
        "property" => dataset
            .properties()
            .map(|p| (p.id.clone(), p.name.clone()))
            .collect(),
        _ => return protocol_error(format!("unknown suggest kind \"{kind}\"")),
    };
    let needle = normalize(&params.prefix);
    let mut hits: Vec<(String, String)> = items
        .into_iter()
        .filter(|(_, name)| normalize(name).starts_with(&needle))
        .collect();
    hits.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let page: Vec<SuggestItem> = hits
        .into_iter()
        .skip(params.cursor)
        .take(SUGGEST_PAGE)
        .map(|(id, name)| SuggestItem { id, name })
        .collect();
    Json(json!({ "result": page })).into_response()
}

#[derive(Debug, Deserialize)]
struct PreviewParams {
    #[serde(default)]
    id: String,
}

async fn preview_handler(
    State(state): State<Arc<ServiceState>>,
    Query(params): Query<PreviewParams>,
) -> Response {
    let Some(entity) = state.dataset().get_entity(&params.id) else {
        let body = format!(
            "<div style=\"width:430px;height:100px;font-family:sans-serif\">\
             No entity with id {}</div>",
            escape_html(&params.id)
        );
        return (StatusCode::NOT_FOUND, Html(body)).into_response();
    };
    let dataset = state.dataset();
    let type_names: Vec<String> = entity
        .types
        .iter()
        .map(|t| {
            let name = dataset.type_def(t).map(|d| d.name.as_str()).unwrap_or(t);
            escape_html(name)
        })
        .collect();
    let mut lines: Vec<String> = Vec::new();
    for (pid, values) in &entity.properties {
        let label = dataset
            .property_def(pid)
            .map(|d| d.name.as_str())
            .unwrap_or(pid);
        for value in values {
            if lines.len() >= 5 {
                break;
            }
            let shown = match value {
                ValueLiteral::Text(s) => s.clone(),
                ValueLiteral::EntityRef(id) => dataset
                    .get_entity(id)
                    .map(|e| e.name.clone())
                    .unwrap_or_else(|| id.clone()),
            };
            lines.push(format!(
                "{}: {}",
                escape_html(label),
                escape_html(&shown)
            ));
        }
    }
    let body = format!(
        "<div style=\"width:430px;height:100px;overflow:hidden;\
         font-family:sans-serif;font-size:12px\">\
         <strong>{}</strong> <span>({})</span><br>{}</div>",
        escape_html(&entity.name),
        type_names.join(", "),
        lines.join("<br>")
    );
    Html(body).into_response()
}

#[derive(Debug, Deserialize)]
struct ExtendForm {
    extend: Option<String>,
}

async fn extend_handler(
    State(state): State<Arc<ServiceState>>,
    Form(form): Form<ExtendForm>,
) -> Response {
    let Some(raw) = form.extend else {
        return protocol_error("missing \"extend\" parameter");
    };
    let request: ExtendRequest = match serde_json::from_str(&raw) {
        Ok(r) => r,
        Err(e) => return protocol_error(format!("malformed extend JSON: {e}")),
    };
    let dataset = state.dataset();
    let unknown: Vec<&str> = request
        .properties
        .iter()
        .map(|p| p.id.as_str())
        .filter(|pid| dataset.property_def(pid).is_none())
        .collect();
    if !unknown.is_empty() {
        return protocol_error(format!("unknown property ids: {}", unknown.join(", ")));
    }
    let meta: Vec<ExtendColumn> = request
        .properties
        .iter()
        .map(|p| ExtendColumn {
            id: p.id.clone(),
            name: dataset
                .property_def(&p.id)
                .map(|d| d.name.clone())
                .unwrap_or_else(|| p.id.clone()),
        })
        .collect();
    let mut rows: BTreeMap<String, BTreeMap<String, Vec<ExtendCell>>> = BTreeMap::new();
    for id in &request.ids {
        let mut row: BTreeMap<String, Vec<ExtendCell>> = BTreeMap::new();
        for p in &request.properties {
            let cells = match dataset.eval(id, &p.id) {
                Ok(values) => values
                    .iter()
                    .map(|v| match v {
                        ValueLiteral::Text(s) => ExtendCell::Text { str: s.clone() },
                        ValueLiteral::EntityRef(target) => ExtendCell::Reference {
                            id: target.clone(),
                            name: dataset
                                .get_entity(target)
                                .map(|e| e.name.clone())
                                .unwrap_or_else(|| target.clone()),
                        },
                    })
                    .collect(),
                Err(_) => Vec::new(),
            };
            row.insert(p.id.clone(), cells);
        }
        rows.insert(id.clone(), row);
    }
    Json(ExtendResponse { meta, rows }).into_response()
}

/// Escapes text for embedding in HTML content and attributes.
fn escape_html(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}
