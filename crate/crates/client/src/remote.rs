//! HTTP access to a reconciliation service: manifest fetch with model
//! validation, and batched reconcile calls with bounded retries.

use std::collections::BTreeMap;
use std::time::Duration;

use recon_core::fieldscore::{FeatureDoc, FeatureScore};
use recon_core::globalscore::DecisionModel;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::table::UserTable;
use crate::ClientError;

/// Retries after the first failed attempt at a batch.
pub const MAX_RETRIES: usize = 3;
/// Delay before the first retry; later retries double it.
pub const RETRY_BASE_DELAY: Duration = Duration::from_millis(100);

/// A reconciliation service endpoint.
#[derive(Debug, Clone)]
pub struct Remote {
    http: reqwest::Client,
    base: String,
}

/// The subset of the service manifest the client consumes.
#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ServiceInfo {
    pub name: String,
    #[serde(default)]
    pub feature_catalog: Vec<FeatureDoc>,
}

/// One candidate as returned over the wire.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct RemoteCandidate {
    pub id: String,
    pub name: String,
    pub score: f64,
    #[serde(default, rename = "match")]
    pub matched: bool,
    #[serde(default)]
    pub features: Vec<FeatureScore>,
}

impl RemoteCandidate {
    /// The value of one feature; absent features read as 0.
    pub fn feature(&self, id: &str) -> f64 {
        self.features
            .iter()
            .find(|f| f.id == id)
            .map_or(0.0, |f| f.value)
    }
}

/// The per-key payload of a reconcile response.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct RemoteResult {
    #[serde(default)]
    pub result: Vec<RemoteCandidate>,
    #[serde(default)]
    pub error: Option<String>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl Remote {
    pub fn new(base: &str) -> Remote {
        Remote {
            http: reqwest::Client::builder()
                .timeout(Duration::from_secs(30))
                .build()
                .expect("default client configuration is valid"),
            base: base.trim_end_matches('/').to_owned(),
        }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    /// Fetches the manifest and checks the model's feature ids against the
    /// advertised catalog. Unknown ids are returned as warnings: they are
    /// not fatal, but they will read as 0 in every candidate.
    pub async fn fetch_manifest_and_validate(
        &self,
        model: &DecisionModel,
    ) -> Result<(ServiceInfo, Vec<String>), ClientError> {
        let response = self
            .http
            .get(&self.base)
            .send()
            .await
            .map_err(|e| ClientError::Service(format!("cannot reach {}: {e}", self.base)))?;
        if !response.status().is_success() {
            return Err(ClientError::Service(format!(
                "manifest request failed with status {}",
                response.status()
            )));
        }
        let info: ServiceInfo = response
            .json()
            .await
            .map_err(|e| ClientError::Service(format!("malformed manifest: {e}")))?;
        let warnings = model
            .feature_ids()
            .into_iter()
            .filter(|id| !info.feature_catalog.iter().any(|doc| doc.id == *id))
            .map(|id| format!("model feature {id:?} is not in the service catalog"))
            .collect();
        Ok((info, warnings))
    }

    /// Sends one batch of queries, retrying transient failures with
    /// doubling delays before giving up.
    pub async fn reconcile_batch(
        &self,
        queries: &BTreeMap<String, Value>,
    ) -> Result<BTreeMap<String, RemoteResult>, ClientError> {
        let payload = serde_json::to_string(queries).expect("query JSON serializes");
        let mut delay = RETRY_BASE_DELAY;
        let mut last_error = String::new();
        for attempt in 0..=MAX_RETRIES {
            if attempt > 0 {
                tokio::time::sleep(delay).await;
                delay *= 2;
            }
            match self.try_batch(&payload).await {
                Ok(results) => return Ok(results),
                Err(message) => last_error = message,
            }
        }
        Err(ClientError::Service(format!(
            "batch failed after {} attempts: {last_error}",
            MAX_RETRIES + 1
        )))
    }

    async fn try_batch(&self, payload: &str) -> Result<BTreeMap<String, RemoteResult>, String> {
        let response = self
            .http
            .post(format!("{}/reconcile", self.base))
            .form(&[("queries", payload)])
            .send()
            .await
            .map_err(|e| e.to_string())?;
        let status = response.status();
        if !status.is_success() {
            let body = response.text().await.unwrap_or_default();
            return Err(format!("status {status}: {body}"));
        }
        response.json().await.map_err(|e| format!("malformed response: {e}"))
    }
}

/// Builds the wire query for row `i` of the table.
pub fn query_for_row(table: &UserTable, i: usize) -> Value {
    let mut query = json!({ "query": table.name_of(i) });
    if let Some(type_id) = &table.columns().type_id {
        query["type"] = json!(type_id);
    }
    let constraints = table.constraints_of(i);
    if !constraints.is_empty() {
        let properties: Vec<Value> = constraints
            .into_iter()
            .map(|(pid, v)| json!({ "pid": pid, "v": v }))
            .collect();
        query["properties"] = Value::Array(properties);
    }
    query
}

/// The response key used for row `i`.
pub fn row_key(i: usize) -> String {
    format!("r{i}")
}
