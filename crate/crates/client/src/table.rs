//! The user's input table: a CSV with a designated name column and optional
//! type, property-binding, and truth columns.

use std::io::Read;

use crate::ClientError;

/// How table columns map onto reconciliation queries.
#[derive(Debug, Clone, Default)]
pub struct ColumnMap {
    /// Column holding the name to reconcile; must exist in every row.
    pub name_column: String,
    /// Optional type id every query is constrained to.
    pub type_id: Option<String>,
    /// Pairs of (column, property id): non-empty cells become property
    /// constraints.
    pub bindings: Vec<(String, String)>,
    /// Optional column holding the known correct entity id.
    pub truth_column: Option<String>,
}

/// An input table held as raw cells, preserving column order and content
/// for the output echo.
#[derive(Debug, Clone)]
pub struct UserTable {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
    columns: ColumnMap,
    name_index: usize,
    truth_index: Option<usize>,
    binding_indices: Vec<(usize, String)>,
}

impl UserTable {
    /// Reads a CSV table and checks that every column the map references
    /// actually exists.
    pub fn from_reader<R: Read>(reader: R, columns: ColumnMap) -> Result<UserTable, ClientError> {
        let mut csv_reader = csv::Reader::from_reader(reader);
        let headers: Vec<String> = csv_reader
            .headers()
            .map_err(|e| ClientError::Table(format!("cannot read header row: {e}")))?
            .iter()
            .map(str::to_owned)
            .collect();

        let find = |label: &str, col: &str| -> Result<usize, ClientError> {
            headers.iter().position(|h| h == col).ok_or_else(|| {
                ClientError::Table(format!("{label} column {col:?} is not in the header"))
            })
        };
        let name_index = find("name", &columns.name_column)?;
        let truth_index = match &columns.truth_column {
            Some(col) => Some(find("truth", col)?),
            None => None,
        };
        let mut binding_indices = Vec::new();
        for (col, pid) in &columns.bindings {
            binding_indices.push((find("bound", col)?, pid.clone()));
        }

        let mut rows = Vec::new();
        for record in csv_reader.records() {
            let record =
                record.map_err(|e| ClientError::Table(format!("cannot read row: {e}")))?;
            rows.push(record.iter().map(str::to_owned).collect());
        }
        Ok(UserTable {
            headers,
            rows,
            columns,
            name_index,
            truth_index,
            binding_indices,
        })
    }

    pub fn headers(&self) -> &[String] {
        &self.headers
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn columns(&self) -> &ColumnMap {
        &self.columns
    }

    /// The name cell of row `i`.
    pub fn name_of(&self, i: usize) -> &str {
        self.rows[i].get(self.name_index).map_or("", String::as_str)
    }

    /// The trimmed truth id of row `i`, if a truth column was mapped and
    /// the cell is non-empty.
    pub fn truth_of(&self, i: usize) -> Option<&str> {
        let idx = self.truth_index?;
        let cell = self.rows[i].get(idx)?.trim();
        (!cell.is_empty()).then_some(cell)
    }

    /// Property constraints of row `i`: bound columns with non-empty cells.
    pub fn constraints_of(&self, i: usize) -> Vec<(String, String)> {
        self.binding_indices
            .iter()
            .filter_map(|(idx, pid)| {
                let cell = self.rows[i].get(*idx).map_or("", String::as_str).trim();
                (!cell.is_empty()).then(|| (pid.clone(), cell.to_owned()))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE: &str = "\
name,country,truth
Acme,us,e4
Foo,,
";

    #[test]
    fn maps_columns_and_reads_rows() {
        let table = UserTable::from_reader(
            TABLE.as_bytes(),
            ColumnMap {
                name_column: "name".to_owned(),
                type_id: None,
                bindings: vec![("country".to_owned(), "jurisdiction".to_owned())],
                truth_column: Some("truth".to_owned()),
            },
        )
        .unwrap();
        assert_eq!(table.len(), 2);
        assert_eq!(table.name_of(0), "Acme");
        assert_eq!(table.truth_of(0), Some("e4"));
        assert_eq!(table.truth_of(1), None);
        assert_eq!(
            table.constraints_of(0),
            vec![("jurisdiction".to_owned(), "us".to_owned())]
        );
        assert!(table.constraints_of(1).is_empty());
    }

    #[test]
    fn missing_columns_are_reported_by_role() {
        let err = UserTable::from_reader(
            TABLE.as_bytes(),
            ColumnMap {
                name_column: "label".to_owned(),
                ..ColumnMap::default()
            },
        )
        .unwrap_err();
        assert!(err.to_string().contains("label"));

        let err = UserTable::from_reader(
            TABLE.as_bytes(),
            ColumnMap {
                name_column: "name".to_owned(),
                bindings: vec![("region".to_owned(), "jurisdiction".to_owned())],
                ..ColumnMap::default()
            },
        )
        .unwrap_err();
        assert!(err.to_string().contains("region"));
    }
}
