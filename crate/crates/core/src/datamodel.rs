//! Entity data model and dataset ingestion.
//!
//! A dataset is an immutable, id-keyed table of entity records plus the type
//! and property tables they reference. Ingestion reads a CSV package: one
//! entities file whose columns are mapped by a JSON schema descriptor, and
//! optional CSV files for type and property display names. Rows with bad
//! cell values are rejected individually and reported; violations that would
//! corrupt cross-row integrity (duplicate ids, dangling references, unknown
//! type ids) fail the whole load.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default candidate-list length for a reconciliation query.
pub const DEFAULT_QUERY_LIMIT: usize = 5;

/// Value datatype of a property, fixed at ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Datatype {
    Text,
    Date,
    Number,
    Entity,
}

impl Datatype {
    pub fn as_str(self) -> &'static str {
        match self {
            Datatype::Text => "text",
            Datatype::Date => "date",
            Datatype::Number => "number",
            Datatype::Entity => "entity",
        }
    }
}

/// An entity type: identifier plus human-readable name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeDef {
    pub id: String,
    pub name: String,
}

/// A property: identifier, human-readable name, and value datatype.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PropertyDef {
    pub id: String,
    pub name: String,
    pub datatype: Datatype,
}

/// A stored or queried property value: either a character string or a
/// reference to another entity of the dataset. Dates and numbers travel as
/// text and are parsed against the property's datatype when compared.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValueLiteral {
    Text(String),
    EntityRef(String),
}

impl ValueLiteral {
    /// The raw string content: the text itself, or the referenced id.
    pub fn raw(&self) -> &str {
        match self {
            ValueLiteral::Text(s) => s,
            ValueLiteral::EntityRef(id) => id,
        }
    }
}

/// One entity of the dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityRecord {
    pub id: String,
    pub name: String,
    /// Type ids; possibly empty, in which case the entity matches only
    /// type-unconstrained queries.
    pub types: BTreeSet<String>,
    /// Property id to stored values. Absent keys mean "no values".
    pub properties: BTreeMap<String, Vec<ValueLiteral>>,
    /// Salience signal (revenue, linkage degree, ...). `None` means unknown,
    /// which downstream scoring treats as neutral rather than as zero.
    pub popularity: Option<f64>,
}

/// Dataset-level descriptive fields carried into the service manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetMetadata {
    pub name: String,
    pub identifier_space: String,
    pub schema_space: String,
    /// URL template for viewing an entity; always contains `{{id}}`.
    pub view_url_template: String,
    /// Type ids suggested to clients as query defaults.
    pub default_types: Vec<String>,
}

/// An immutable collection of entities with their type and property tables.
/// Safe to share across threads once loaded.
#[derive(Debug, Clone)]
pub struct Dataset {
    entities: BTreeMap<String, EntityRecord>,
    types: BTreeMap<String, TypeDef>,
    properties: BTreeMap<String, PropertyDef>,
    metadata: DatasetMetadata,
    max_popularity: f64,
}

impl Dataset {
    /// Looks an entity up by id; absence is a normal return, not an error.
    pub fn get_entity(&self, id: &str) -> Option<&EntityRecord> {
        self.entities.get(id)
    }

    /// Returns the stored values of property `p` on entity `e`; the empty
    /// slice when the entity has no value for it.
    pub fn eval(&self, e: &str, p: &str) -> Result<&[ValueLiteral], LookupError> {
        let entity = self
            .entities
            .get(e)
            .ok_or_else(|| LookupError::UnknownEntity(e.to_owned()))?;
        if !self.properties.contains_key(p) {
            return Err(LookupError::UnknownProperty(p.to_owned()));
        }
        Ok(entity
            .properties
            .get(p)
            .map(Vec::as_slice)
            .unwrap_or_default())
    }

    /// Entities in ascending id order.
    pub fn entities(&self) -> impl Iterator<Item = &EntityRecord> {
        self.entities.values()
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn type_def(&self, id: &str) -> Option<&TypeDef> {
        self.types.get(id)
    }

    /// Type definitions in ascending id order.
    pub fn types(&self) -> impl Iterator<Item = &TypeDef> {
        self.types.values()
    }

    pub fn property_def(&self, id: &str) -> Option<&PropertyDef> {
        self.properties.get(id)
    }

    /// Property definitions in ascending id order.
    pub fn properties(&self) -> impl Iterator<Item = &PropertyDef> {
        self.properties.values()
    }

    pub fn metadata(&self) -> &DatasetMetadata {
        &self.metadata
    }

    /// Largest popularity value in the dataset; 0.0 when no entity has one.
    pub fn max_popularity(&self) -> f64 {
        self.max_popularity
    }
}

/// A reconciliation query: the name searched for, an optional type
/// constraint, property constraints, and the number of candidates wanted.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconciliationQuery {
    /// Query text; may be empty, which yields an empty result.
    pub text: String,
    /// Type ids the candidate must intersect; empty means unconstrained.
    pub types: Vec<String>,
    /// Property constraints as (property id, queried value) pairs.
    pub constraints: Vec<(String, ValueLiteral)>,
    /// Maximum candidates to return; at least 1.
    pub limit: usize,
}

impl ReconciliationQuery {
    pub fn for_name(text: &str) -> Self {
        ReconciliationQuery {
            text: text.to_owned(),
            types: Vec::new(),
            constraints: Vec::new(),
            limit: DEFAULT_QUERY_LIMIT,
        }
    }
}

/// Mapping from CSV columns to the data model, read from a JSON document.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaDescriptor {
    pub id_column: String,
    pub name_column: String,
    #[serde(default)]
    pub type_columns: Vec<String>,
    #[serde(default)]
    pub property_columns: Vec<PropertyColumn>,
    #[serde(default)]
    pub popularity_column: Option<String>,
    /// Display name of the dataset.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub identifier_space: Option<String>,
    #[serde(default)]
    pub schema_space: Option<String>,
    /// Must contain the `{{id}}` placeholder when given.
    #[serde(default)]
    pub view_url_template: Option<String>,
    /// Type ids offered to clients as defaults; must exist in the type table.
    #[serde(default)]
    pub default_types: Vec<String>,
    /// Separator for multi-valued cells.
    #[serde(default = "default_delimiter")]
    pub multi_value_delimiter: String,
    /// Optional CSV of type display names, relative to the schema file.
    #[serde(default)]
    pub types_file: Option<String>,
    /// Optional CSV of property display names, relative to the schema file.
    #[serde(default)]
    pub properties_file: Option<String>,
}

/// One property-bearing column of the entities CSV.
#[derive(Debug, Clone, Deserialize)]
pub struct PropertyColumn {
    pub column: String,
    pub property_id: String,
    pub datatype: Datatype,
}

fn default_delimiter() -> String {
    "|".to_owned()
}

impl SchemaDescriptor {
    pub fn from_reader<R: Read>(reader: R) -> Result<Self, DataError> {
        serde_json::from_reader(reader)
            .map_err(|e| DataError::Schema(format!("descriptor does not parse: {e}")))
    }
}

/// Outcome summary of a load: how many rows became entities and which rows
/// were rejected, with reasons.
#[derive(Debug, Clone, Default)]
pub struct LoadReport {
    pub loaded: usize,
    pub rejected: Vec<RejectedRow>,
}

/// A rejected entity row. `line` is the 1-based line in the entities CSV.
#[derive(Debug, Clone)]
pub struct RejectedRow {
    pub line: u64,
    pub id: Option<String>,
    pub reason: String,
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("schema descriptor: {0}")]
    Schema(String),
    #[error("CSV parse error at line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("duplicate entity id \"{0}\"")]
    DuplicateId(String),
    #[error("entity \"{entity}\" references unknown type \"{type_id}\"")]
    UnknownType { entity: String, type_id: String },
    #[error("entity \"{entity}\" property \"{property}\" references unknown entity \"{target}\"")]
    DanglingRef {
        entity: String,
        property: String,
        target: String,
    },
    #[error("duplicate {table} id \"{id}\"")]
    DuplicateDefinition { table: &'static str, id: String },
    #[error("I/O while reading dataset: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LookupError {
    #[error("unknown entity id \"{0}\"")]
    UnknownEntity(String),
    #[error("unknown property id \"{0}\"")]
    UnknownProperty(String),
}

/// Reads the dataset package: the entities CSV (mapped by `schema`) plus
/// optional type and property name CSVs. Row-local problems reject the row
/// and are listed in the returned report; integrity problems that span rows
/// fail the load.
pub fn load_dataset<E, T, P>(
    entities_csv: E,
    types_csv: Option<T>,
    properties_csv: Option<P>,
    schema: &SchemaDescriptor,
) -> Result<(Dataset, LoadReport), DataError>
where
    E: Read,
    T: Read,
    P: Read,
{
    let delimiter = &schema.multi_value_delimiter;
    if delimiter.is_empty() {
        return Err(DataError::Schema(
            "multi_value_delimiter must not be empty".to_owned(),
        ));
    }
    if let Some(template) = &schema.view_url_template {
        if !template.contains("{{id}}") {
            return Err(DataError::Schema(
                "view_url_template must contain the {{id}} placeholder".to_owned(),
            ));
        }
    }

    let properties = property_table(properties_csv, schema)?;
    let declared_types = types_csv.map(read_type_table).transpose()?;

    let mut reader = csv::ReaderBuilder::new().from_reader(entities_csv);
    let headers = reader.headers().map_err(csv_error)?.clone();
    let column_index = |name: &str| -> Result<usize, DataError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::Schema(format!("entities CSV has no column \"{name}\"")))
    };

    let id_col = column_index(&schema.id_column)?;
    let name_col = column_index(&schema.name_column)?;
    let type_cols: Vec<usize> = schema
        .type_columns
        .iter()
        .map(|c| column_index(c))
        .collect::<Result<_, _>>()?;
    let mut property_cols: Vec<(usize, &PropertyColumn)> = Vec::new();
    for pc in &schema.property_columns {
        property_cols.push((column_index(&pc.column)?, pc));
    }
    let popularity_col = schema
        .popularity_column
        .as_deref()
        .map(column_index)
        .transpose()?;

    let mut entities: BTreeMap<String, EntityRecord> = BTreeMap::new();
    let mut report = LoadReport::default();

    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record
            .position()
            .map(csv::Position::line)
            .unwrap_or_default();
        let cell = |i: usize| record.get(i).unwrap_or("").trim();

        let id = cell(id_col).to_owned();
        let mut reject = |id: &str, reason: String| {
            report.rejected.push(RejectedRow {
                line,
                id: (!id.is_empty()).then(|| id.to_owned()),
                reason,
            });
        };
        if id.is_empty() {
            reject("", "empty id".to_owned());
            continue;
        }
        let name = cell(name_col).to_owned();
        if name.is_empty() {
            reject(&id, "empty name".to_owned());
            continue;
        }

        let popularity = match popularity_col.map(cell).filter(|c| !c.is_empty()) {
            None => None,
            Some(raw) => match raw.parse::<f64>() {
                Ok(p) if p.is_finite() && p >= 0.0 => Some(p),
                Ok(_) => {
                    reject(&id, format!("popularity \"{raw}\" must be finite and non-negative"));
                    continue;
                }
                Err(_) => {
                    reject(&id, format!("popularity \"{raw}\" is not a number"));
                    continue;
                }
            },
        };

        let mut types = BTreeSet::new();
        for &col in &type_cols {
            for token in split_cell(cell(col), delimiter) {
                types.insert(token.to_owned());
            }
        }

        let mut props: BTreeMap<String, Vec<ValueLiteral>> = BTreeMap::new();
        let mut bad_cell = None;
        for &(col, pc) in &property_cols {
            let mut values = Vec::new();
            for part in split_cell(cell(col), delimiter) {
                match parse_value(part, pc.datatype) {
                    Ok(v) => values.push(v),
                    Err(why) => {
                        bad_cell = Some(format!("property \"{}\": {why}", pc.property_id));
                        break;
                    }
                }
            }
            if bad_cell.is_some() {
                break;
            }
            if !values.is_empty() {
                props.entry(pc.property_id.clone()).or_default().extend(values);
            }
        }
        if let Some(why) = bad_cell {
            reject(&id, why);
            continue;
        }

        if entities.contains_key(&id) {
            return Err(DataError::DuplicateId(id));
        }
        entities.insert(
            id.clone(),
            EntityRecord {
                id,
                name,
                types,
                properties: props,
                popularity,
            },
        );
    }
    report.loaded = entities.len();

    // Cross-row integrity: type references, then the type table itself, then
    // entity-valued property references.
    let types = match declared_types {
        Some(table) => {
            for e in entities.values() {
                for t in &e.types {
                    if !table.contains_key(t) {
                        return Err(DataError::UnknownType {
                            entity: e.id.clone(),
                            type_id: t.clone(),
                        });
                    }
                }
            }
            for t in &schema.default_types {
                if !table.contains_key(t) {
                    return Err(DataError::Schema(format!(
                        "default type \"{t}\" is not in the type table"
                    )));
                }
            }
            table
        }
        // No type names supplied: synthesize definitions from the ids in use.
        None => entities
            .values()
            .flat_map(|e| e.types.iter())
            .chain(schema.default_types.iter())
            .map(|t| {
                (
                    t.clone(),
                    TypeDef {
                        id: t.clone(),
                        name: t.clone(),
                    },
                )
            })
            .collect(),
    };

    for e in entities.values() {
        for (pid, values) in &e.properties {
            for v in values {
                if let ValueLiteral::EntityRef(target) = v {
                    if !entities.contains_key(target) {
                        return Err(DataError::DanglingRef {
                            entity: e.id.clone(),
                            property: pid.clone(),
                            target: target.clone(),
                        });
                    }
                }
            }
        }
    }

    let max_popularity = entities
        .values()
        .filter_map(|e| e.popularity)
        .fold(0.0, f64::max);

    let metadata = DatasetMetadata {
        name: schema.name.clone().unwrap_or_else(|| "Reconciliation dataset".to_owned()),
        identifier_space: schema
            .identifier_space
            .clone()
            .unwrap_or_else(|| "urn:recon:entity".to_owned()),
        schema_space: schema
            .schema_space
            .clone()
            .unwrap_or_else(|| "urn:recon:schema".to_owned()),
        view_url_template: schema
            .view_url_template
            .clone()
            .unwrap_or_else(|| "/entity/{{id}}".to_owned()),
        default_types: schema.default_types.clone(),
    };

    Ok((
        Dataset {
            entities,
            types,
            properties,
            metadata,
            max_popularity,
        },
        report,
    ))
}

/// Parses one delimited part of a property cell against the datatype. Dates
/// and numbers stay textual; parsing only validates them.
pub fn parse_value(part: &str, datatype: Datatype) -> Result<ValueLiteral, String> {
    match datatype {
        Datatype::Text => Ok(ValueLiteral::Text(part.to_owned())),
        Datatype::Entity => Ok(ValueLiteral::EntityRef(part.to_owned())),
        Datatype::Number => match part.parse::<f64>() {
            Ok(n) if n.is_finite() => Ok(ValueLiteral::Text(part.to_owned())),
            _ => Err(format!("\"{part}\" is not a finite number")),
        },
        Datatype::Date => match NaiveDate::parse_from_str(part, "%Y-%m-%d") {
            Ok(_) => Ok(ValueLiteral::Text(part.to_owned())),
            Err(_) => Err(format!("\"{part}\" is not a YYYY-MM-DD date")),
        },
    }
}

fn split_cell<'a>(cell: &'a str, delimiter: &'a str) -> impl Iterator<Item = &'a str> + 'a {
    cell.split(delimiter).map(str::trim).filter(|p| !p.is_empty())
}

fn csv_error(e: csv::Error) -> DataError {
    let line = e.position().map(csv::Position::line).unwrap_or_default();
    DataError::Parse {
        line,
        message: e.to_string(),
    }
}

fn read_type_table<R: Read>(reader: R) -> Result<BTreeMap<String, TypeDef>, DataError> {
    let mut csv_reader = csv::ReaderBuilder::new().from_reader(reader);
    let headers = csv_reader.headers().map_err(csv_error)?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::Schema(format!("types CSV has no column \"{name}\"")))
    };
    let id_col = find("id")?;
    let name_col = find("name")?;
    let mut table = BTreeMap::new();
    for record in csv_reader.records() {
        let record = record.map_err(csv_error)?;
        let id = record.get(id_col).unwrap_or("").trim().to_owned();
        let name = record.get(name_col).unwrap_or("").trim().to_owned();
        if id.is_empty() {
            continue;
        }
        let display = if name.is_empty() { id.clone() } else { name };
        if table
            .insert(id.clone(), TypeDef { id: id.clone(), name: display })
            .is_some()
        {
            return Err(DataError::DuplicateDefinition { table: "type", id });
        }
    }
    Ok(table)
}

fn property_table<P: Read>(
    properties_csv: Option<P>,
    schema: &SchemaDescriptor,
) -> Result<BTreeMap<String, PropertyDef>, DataError> {
    let mut names: BTreeMap<String, String> = BTreeMap::new();
    if let Some(reader) = properties_csv {
        let mut csv_reader = csv::ReaderBuilder::new().from_reader(reader);
        let headers = csv_reader.headers().map_err(csv_error)?.clone();
        let find = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| DataError::Schema(format!("properties CSV has no column \"{name}\"")))
        };
        let id_col = find("id")?;
        let name_col = find("name")?;
        for record in csv_reader.records() {
            let record = record.map_err(csv_error)?;
            let id = record.get(id_col).unwrap_or("").trim().to_owned();
            let name = record.get(name_col).unwrap_or("").trim().to_owned();
            if id.is_empty() || name.is_empty() {
                continue;
            }
            if !schema.property_columns.iter().any(|pc| pc.property_id == id) {
                return Err(DataError::Schema(format!(
                    "properties CSV names \"{id}\", which no schema column maps"
                )));
            }
            if names.insert(id.clone(), name).is_some() {
                return Err(DataError::DuplicateDefinition { table: "property", id });
            }
        }
    }

    let mut table = BTreeMap::new();
    for pc in &schema.property_columns {
        let def = PropertyDef {
            id: pc.property_id.clone(),
            name: names
                .get(&pc.property_id)
                .cloned()
                .unwrap_or_else(|| pc.property_id.clone()),
            datatype: pc.datatype,
        };
        if let Some(previous) = table.insert(pc.property_id.clone(), def) {
            // Two columns may feed one multi-source property, but only with
            // one datatype.
            if previous.datatype != table[&pc.property_id].datatype {
                return Err(DataError::Schema(format!(
                    "property \"{}\" is mapped with two datatypes",
                    pc.property_id
                )));
            }
        }
    }
    Ok(table)
}
