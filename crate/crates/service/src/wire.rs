//! Serde shapes for the HTTP protocol: the reconcile request and response,
//! the service manifest, suggest entries, and the data-extension payload.
//! Field names follow the de-facto reconciliation wire format; candidates
//! additionally carry the per-field feature scores.

use std::collections::BTreeMap;

use recon_core::datamodel::{
    ReconciliationQuery, TypeDef, ValueLiteral, DEFAULT_QUERY_LIMIT,
};
use recon_core::fieldscore::{FeatureDoc, FeatureScore};
use serde::{Deserialize, Serialize};

/// One entry of the `queries` map sent to the reconcile endpoint.
#[derive(Debug, Clone, Deserialize)]
pub struct WireQuery {
    /// Query text; missing is treated as empty, which yields no candidates.
    #[serde(default)]
    pub query: String,
    /// Type constraint: a single id or a list of ids.
    #[serde(default, rename = "type")]
    pub type_constraint: Option<TypeSpec>,
    /// Maximum number of candidates to return; must be at least 1.
    #[serde(default)]
    pub limit: Option<u64>,
    /// Property constraints.
    #[serde(default)]
    pub properties: Vec<WireConstraint>,
}

/// A type constraint, accepted both as `"type": "company"` and as
/// `"type": ["company", "ngo"]`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum TypeSpec {
    One(String),
    Many(Vec<String>),
}

/// One property constraint: property id plus the queried value.
#[derive(Debug, Clone, Deserialize)]
pub struct WireConstraint {
    pub pid: String,
    pub v: WireValue,
}

/// A constraint value. Objects with an `id` key reference entities; plain
/// strings are text; numbers and booleans are carried as their text form.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum WireValue {
    Reference { id: String },
    Text(String),
    Number(f64),
    Flag(bool),
}

impl WireValue {
    pub fn into_literal(self) -> ValueLiteral {
        match self {
            WireValue::Reference { id } => ValueLiteral::EntityRef(id),
            WireValue::Text(s) => ValueLiteral::Text(s),
            WireValue::Number(n) => ValueLiteral::Text(format_number(n)),
            WireValue::Flag(b) => ValueLiteral::Text(b.to_string()),
        }
    }
}

/// Formats a JSON number the way it would appear in a CSV cell: integral
/// values without a trailing `.0`.
fn format_number(n: f64) -> String {
    if n.fract() == 0.0 && n.abs() < 9.0e15 {
        format!("{}", n as i64)
    } else {
        n.to_string()
    }
}

impl WireQuery {
    /// Validates the wire form and converts it into a core query.
    pub fn into_query(self) -> Result<ReconciliationQuery, String> {
        let limit = match self.limit {
            None => DEFAULT_QUERY_LIMIT,
            Some(0) => return Err("limit must be at least 1".to_owned()),
            Some(n) => n as usize,
        };
        let types = match self.type_constraint {
            None => Vec::new(),
            Some(TypeSpec::One(t)) => vec![t],
            Some(TypeSpec::Many(ts)) => ts,
        };
        let constraints = self
            .properties
            .into_iter()
            .map(|c| (c.pid, c.v.into_literal()))
            .collect();
        Ok(ReconciliationQuery {
            text: self.query,
            types,
            constraints,
            limit,
        })
    }
}

/// One scored candidate in a reconcile response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireCandidate {
    pub id: String,
    pub name: String,
    #[serde(rename = "type")]
    pub types: Vec<TypeDef>,
    pub score: f64,
    #[serde(rename = "match")]
    pub matched: bool,
    pub features: Vec<FeatureScore>,
}

/// The per-key payload of a reconcile response. A query that failed yields
/// an empty result plus an error note; its key is never dropped.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct QueryResult {
    pub result: Vec<WireCandidate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// The service manifest served at the root endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ServiceManifest {
    pub name: String,
    pub identifier_space: String,
    pub schema_space: String,
    pub default_types: Vec<TypeDef>,
    pub view: ViewTemplate,
    pub preview: PreviewSettings,
    pub suggest: SuggestSettings,
    pub extend: ExtendSettings,
    /// Every feature id the scorer can emit, with documentation.
    pub feature_catalog: Vec<FeatureDoc>,
}

/// Template for linking to an entity; contains the `{{id}}` placeholder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewTemplate {
    pub url: String,
}

/// Location and dimensions of the HTML preview endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreviewSettings {
    pub url: String,
    pub width: u32,
    pub height: u32,
}

/// Paths of the three suggest endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestSettings {
    pub entity: SuggestEndpoint,
    #[serde(rename = "type")]
    pub type_suggest: SuggestEndpoint,
    pub property: SuggestEndpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestEndpoint {
    pub service_path: String,
}

/// Data-extension settings; present to signal the capability.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExtendSettings {
    pub property_settings: Vec<serde_json::Value>,
}

/// One suggest hit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestItem {
    pub id: String,
    pub name: String,
}

/// The body of the `extend` form field.
#[derive(Debug, Clone, Deserialize)]
pub struct ExtendRequest {
    pub ids: Vec<String>,
    pub properties: Vec<ExtendProperty>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ExtendProperty {
    pub id: String,
}

/// Column metadata echoed in an extend response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtendColumn {
    pub id: String,
    pub name: String,
}

/// One value cell: a text value or an entity reference with its name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExtendCell {
    Reference { id: String, name: String },
    Text { str: String },
}

/// Rows of an extend response, keyed by entity id then property id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtendResponse {
    pub meta: Vec<ExtendColumn>,
    pub rows: BTreeMap<String, BTreeMap<String, Vec<ExtendCell>>>,
}
