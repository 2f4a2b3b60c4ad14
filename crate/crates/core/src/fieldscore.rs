//! Per-field similarity scores, each normalized to [0,1] so downstream
//! decision models can treat them as features: edit distance and q-gram
//! overlap for names, TF-IDF-weighted token similarity (SoftTFIDF), property
//! value agreement by datatype, and a popularity prior.

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datamodel::{
    Datatype, Dataset, EntityRecord, ReconciliationQuery, ValueLiteral,
};
use crate::index::IndexedDataset;
use crate::textproc::{normalize, qgrams, tokenize};

/// Inner word-similarity threshold for the extended SoftTFIDF: token pairs
/// below it contribute nothing. 1.0 degenerates to exact token overlap.
pub const DEFAULT_THETA: f64 = 0.9;

/// Relative difference under which two numeric values count as equal.
pub const NUMBER_TOLERANCE: f64 = 1e-3;

/// One field-level score: a stable feature identifier, a human-readable
/// name, and a value in [0,1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScore {
    pub id: String,
    pub name: String,
    pub value: f64,
}

/// Feature vector for one (query, candidate) pair plus any warnings raised
/// while producing it (currently: unknown property ids in the query).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredFields {
    pub features: Vec<FeatureScore>,
    pub warnings: Vec<String>,
}

/// Catalog entry documenting one feature id the scorer can emit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDoc {
    pub id: String,
    pub name: String,
    pub documentation: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("value \"{raw}\" does not parse as {datatype}")]
    ValueParse { raw: String, datatype: &'static str },
}

/// Unit-cost edit distance (insert, delete, replace) between the normalized
/// forms of `a` and `b`, by dynamic programming in two rows.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = normalize(a).chars().collect();
    let b: Vec<char> = normalize(b).chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.iter().enumerate() {
        let mut diagonal = row[0];
        row[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let substitution = diagonal + usize::from(ca != cb);
            diagonal = row[j + 1];
            row[j + 1] = substitution.min(row[j] + 1).min(row[j + 1] + 1);
        }
    }
    row[b.len()]
}

/// Edit distance rescaled to a similarity: 1 − d / max(len); two strings
/// that both normalize to empty count as identical.
pub fn levenshtein_similarity(a: &str, b: &str) -> f64 {
    let na = normalize(a);
    let nb = normalize(b);
    let longest = na.chars().count().max(nb.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein(&na, &nb) as f64 / longest as f64
}

/// Dice coefficient over the q-gram multisets of the two strings:
/// 2·|A ∩ B| / (|A| + |B|), with multiset intersection. Two empty bags
/// (both strings shorter than `q`) count as identical.
pub fn qgram_similarity(a: &str, b: &str, q: usize) -> Result<f64, FieldError> {
    if q < 1 {
        return Err(FieldError::InvalidArgument(
            "q-gram width must be at least 1".to_owned(),
        ));
    }
    let bag_a = qgrams(a, q);
    let bag_b = qgrams(b, q);
    if bag_a.is_empty() && bag_b.is_empty() {
        return Ok(1.0);
    }
    let mut counts: std::collections::HashMap<&str, usize> = std::collections::HashMap::new();
    for gram in &bag_a {
        *counts.entry(gram).or_insert(0) += 1;
    }
    let mut common = 0usize;
    for gram in &bag_b {
        if let Some(c) = counts.get_mut(gram.as_str()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    Ok(2.0 * common as f64 / (bag_a.len() + bag_b.len()) as f64)
}

/// Euclidean-normalized TF-IDF weight of token `w` within `doc`, using the
/// index's corpus statistics. Zero when the whole document weighs zero
/// (every token has idf 0).
pub fn tfidf_weight(w: &str, doc: &[String], ix: &IndexedDataset) -> Result<f64, FieldError> {
    if !doc.iter().any(|t| t == w) {
        return Err(FieldError::InvalidArgument(format!(
            "token \"{w}\" is not in the document"
        )));
    }
    let mut squared_norm = 0.0;
    let mut target = 0.0;
    let mut seen: Vec<&str> = Vec::new();
    for token in doc {
        if seen.contains(&token.as_str()) {
            continue;
        }
        seen.push(token);
        let tf = doc.iter().filter(|t| *t == token).count() as f64;
        let raw = tf * ix.idf(token);
        squared_norm += raw * raw;
        if token == w {
            target = raw;
        }
    }
    if squared_norm == 0.0 {
        return Ok(0.0);
    }
    Ok(target / squared_norm.sqrt())
}

/// TF-IDF-weighted token similarity of two strings over the index's corpus.
///
/// With `theta` = 1 this is the plain SoftTFIDF sum over exactly-shared
/// tokens, Σ t(w,A)·t(w,B). Below 1, near-matching token pairs also count:
/// pairs are taken greedily by descending `inner` similarity (ties in token
/// order), each token used at most once, and each accepted pair contributes
/// t(w,A)·t(v,B)·inner(w,v) when inner(w,v) ≥ theta. The result is clamped
/// to [0,1].
///
/// # Panics
///
/// Panics if `theta` is outside [0,1].
pub fn soft_tfidf(
    a: &str,
    b: &str,
    ix: &IndexedDataset,
    theta: f64,
    inner: fn(&str, &str) -> f64,
) -> f64 {
    assert!(
        (0.0..=1.0).contains(&theta),
        "theta must be within [0,1], got {theta}"
    );
    let doc_a = tokenize(a);
    let doc_b = tokenize(b);
    let distinct = |doc: &[String]| {
        let mut seen: Vec<String> = Vec::new();
        for t in doc {
            if !seen.contains(t) {
                seen.push(t.clone());
            }
        }
        seen
    };
    let tokens_a = distinct(&doc_a);
    let tokens_b = distinct(&doc_b);

    let weight = |w: &str, doc: &[String]| tfidf_weight(w, doc, ix).unwrap_or(0.0);

    let mut total = 0.0;
    if theta >= 1.0 {
        for w in &tokens_a {
            if tokens_b.contains(w) {
                total += weight(w, &doc_a) * weight(w, &doc_b);
            }
        }
    } else {
        let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
        for (i, w) in tokens_a.iter().enumerate() {
            for (j, v) in tokens_b.iter().enumerate() {
                let sim = inner(w, v);
                if sim >= theta {
                    pairs.push((i, j, sim));
                }
            }
        }
        pairs.sort_by(|x, y| y.2.total_cmp(&x.2).then(x.0.cmp(&y.0)).then(x.1.cmp(&y.1)));
        let mut used_a = vec![false; tokens_a.len()];
        let mut used_b = vec![false; tokens_b.len()];
        for (i, j, sim) in pairs {
            if used_a[i] || used_b[j] {
                continue;
            }
            used_a[i] = true;
            used_b[j] = true;
            total += weight(&tokens_a[i], &doc_a) * weight(&tokens_b[j], &doc_b) * sim;
        }
    }
    total.clamp(0.0, 1.0)
}

/// Compares a queried value against an entity's stored values under the
/// property's datatype and returns the best per-value score: text values by
/// normalized equality or edit similarity, entity references by id
/// equality, numbers within a relative tolerance, dates by day/month/year
/// agreement buckets. No stored values scores 0. An unparseable queried
/// value is an error; an unparseable stored value scores 0.
pub fn property_score(
    qval: &ValueLiteral,
    vals: &[ValueLiteral],
    datatype: Datatype,
) -> Result<f64, FieldError> {
    let best = |scores: Vec<f64>| scores.into_iter().fold(0.0, f64::max);
    match datatype {
        Datatype::Text => {
            let query = text_value(qval, "text")?;
            Ok(best(
                vals.iter()
                    .map(|v| {
                        if normalize(query) == normalize(v.raw()) {
                            1.0
                        } else {
                            levenshtein_similarity(query, v.raw())
                        }
                    })
                    .collect(),
            ))
        }
        Datatype::Entity => Ok(best(
            vals.iter()
                .map(|v| f64::from(qval.raw() == v.raw()))
                .collect(),
        )),
        Datatype::Number => {
            let raw = text_value(qval, "number")?;
            let query: f64 = raw.trim().parse().map_err(|_| FieldError::ValueParse {
                raw: raw.to_owned(),
                datatype: "number",
            })?;
            if !query.is_finite() {
                return Err(FieldError::ValueParse {
                    raw: raw.to_owned(),
                    datatype: "number",
                });
            }
            Ok(best(
                vals.iter()
                    .map(|v| match v.raw().trim().parse::<f64>() {
                        Ok(stored) if stored.is_finite() => {
                            f64::from(numbers_match(query, stored))
                        }
                        _ => 0.0,
                    })
                    .collect(),
            ))
        }
        Datatype::Date => {
            let raw = text_value(qval, "date")?;
            let query = parse_date(raw).ok_or_else(|| FieldError::ValueParse {
                raw: raw.to_owned(),
                datatype: "date",
            })?;
            Ok(best(
                vals.iter()
                    .map(|v| match parse_date(v.raw()) {
                        Some(stored) => date_score(query, stored),
                        None => 0.0,
                    })
                    .collect(),
            ))
        }
    }
}

fn text_value<'a>(qval: &'a ValueLiteral, datatype: &'static str) -> Result<&'a str, FieldError> {
    match qval {
        ValueLiteral::Text(s) => Ok(s),
        ValueLiteral::EntityRef(id) => Err(FieldError::ValueParse {
            raw: format!("entity reference \"{id}\""),
            datatype,
        }),
    }
}

fn numbers_match(a: f64, b: f64) -> bool {
    if a == b {
        return true;
    }
    (a - b).abs() / a.abs().max(b.abs()) <= NUMBER_TOLERANCE
}

fn parse_date(raw: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(raw.trim(), "%Y-%m-%d").ok()
}

fn date_score(a: NaiveDate, b: NaiveDate) -> f64 {
    if a == b {
        1.0
    } else if a.year() == b.year() && a.month() == b.month() {
        0.9
    } else if a.year() == b.year() {
        0.7
    } else {
        0.0
    }
}

/// Logarithmically scaled popularity relative to the dataset maximum:
/// ln(1 + pop) / ln(1 + max_pop). Unknown popularity scores a neutral 0.5
/// so that absence of the signal never dominates ranking.
pub fn popularity_score(e: &EntityRecord, max_pop: f64) -> f64 {
    let Some(pop) = e.popularity else {
        return 0.5;
    };
    debug_assert!(pop >= 0.0, "negative popularity is rejected at ingestion");
    if max_pop <= 0.0 {
        return 0.0;
    }
    ((1.0 + pop).ln() / (1.0 + max_pop).ln()).clamp(0.0, 1.0)
}

/// Scores every field of one (query, candidate) pair and returns the
/// feature vector in a fixed order: the three name scores, one `prop:<id>`
/// feature per constrained property (first-occurrence order, best score
/// when a property is constrained twice), popularity, and type agreement.
/// A constraint on a property the dataset does not define yields feature
/// value 0 plus a warning instead of an error; a constraint value that does
/// not parse under the property's datatype is an error.
pub fn score_fields(
    query: &ReconciliationQuery,
    e: &EntityRecord,
    ix: &IndexedDataset,
) -> Result<ScoredFields, FieldError> {
    let mut features = Vec::new();
    let mut warnings = Vec::new();
    let feature = |id: &str, name: &str, value: f64| FeatureScore {
        id: id.to_owned(),
        name: name.to_owned(),
        value,
    };

    features.push(feature(
        "name_softtfidf",
        "Name similarity (SoftTFIDF)",
        soft_tfidf(&query.text, &e.name, ix, DEFAULT_THETA, levenshtein_similarity),
    ));
    features.push(feature(
        "name_levenshtein",
        "Name similarity (Levenshtein)",
        levenshtein_similarity(&query.text, &e.name),
    ));
    features.push(feature(
        "name_qgram",
        "Name similarity (q-gram)",
        qgram_similarity(&query.text, &e.name, ix.q())
            .expect("index q-gram width is at least 1"),
    ));

    let dataset = ix.dataset();
    let mut constrained: Vec<(&str, Vec<&ValueLiteral>)> = Vec::new();
    for (pid, qval) in &query.constraints {
        match constrained.iter_mut().find(|(p, _)| p == pid) {
            Some((_, qvals)) => qvals.push(qval),
            None => constrained.push((pid, vec![qval])),
        }
    }
    for (pid, qvals) in constrained {
        let feature_id = format!("prop:{pid}");
        let Some(def) = dataset.property_def(pid) else {
            warnings.push(format!("query constrains unknown property \"{pid}\""));
            features.push(feature(&feature_id, &format!("Property match: {pid}"), 0.0));
            continue;
        };
        let stored = e.properties.get(pid).map(Vec::as_slice).unwrap_or_default();
        let mut value = 0.0f64;
        for qval in qvals {
            value = value.max(property_score(qval, stored, def.datatype)?);
            // A textual constraint on an entity-valued property can also
            // mean the referenced entity's name; take the better reading.
            if def.datatype == Datatype::Entity {
                if let ValueLiteral::Text(text) = qval {
                    value = value.max(referenced_name_score(text, stored, dataset));
                }
            }
        }
        features.push(feature(
            &feature_id,
            &format!("Property match: {}", def.name),
            value,
        ));
    }

    features.push(feature(
        "popularity",
        "Popularity",
        popularity_score(e, dataset.max_popularity()),
    ));
    let type_ok =
        query.types.is_empty() || query.types.iter().any(|t| e.types.contains(t));
    features.push(feature("type_match", "Type agreement", f64::from(type_ok)));

    Ok(ScoredFields { features, warnings })
}

fn referenced_name_score(text: &str, stored: &[ValueLiteral], dataset: &Dataset) -> f64 {
    stored
        .iter()
        .filter_map(|v| match v {
            ValueLiteral::EntityRef(id) => dataset.get_entity(id),
            ValueLiteral::Text(_) => None,
        })
        .map(|target| {
            if normalize(text) == normalize(&target.name) {
                1.0
            } else {
                levenshtein_similarity(text, &target.name)
            }
        })
        .fold(0.0, f64::max)
}

/// Documents every feature id `score_fields` can emit for this dataset, in
/// emission order: the name scores, one `prop:<id>` per defined property,
/// popularity, and type agreement.
pub fn feature_catalog(d: &Dataset) -> Vec<FeatureDoc> {
    let doc = |id: &str, name: &str, documentation: &str| FeatureDoc {
        id: id.to_owned(),
        name: name.to_owned(),
        documentation: documentation.to_owned(),
    };
    let mut catalog = vec![
        doc(
            "name_softtfidf",
            "Name similarity (SoftTFIDF)",
            "TF-IDF-weighted token overlap between the query and the entity name; \
             near-matching tokens are paired by edit-distance similarity.",
        ),
        doc(
            "name_levenshtein",
            "Name similarity (Levenshtein)",
            "One minus the edit distance between query and entity name, divided by \
             the longer length.",
        ),
        doc(
            "name_qgram",
            "Name similarity (q-gram)",
            "Dice overlap of the character q-gram bags of query and entity name.",
        ),
    ];
    for p in d.properties() {
        catalog.push(doc(
            &format!("prop:{}", p.id),
            &format!("Property match: {}", p.name),
            &format!(
                "Agreement between the query's \"{}\" constraint and the entity's \
                 stored values ({}); the best stored value wins.",
                p.name,
                p.datatype.as_str()
            ),
        ));
    }
    catalog.push(doc(
        "popularity",
        "Popularity",
        "Logarithm of the entity's popularity relative to the most popular entity; \
         0.5 when popularity is unknown.",
    ));
    catalog.push(doc(
        "type_match",
        "Type agreement",
        "1 when the query carries no type constraint or the entity has one of the \
         requested types, else 0.",
    ));
    catalog
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{load_dataset, SchemaDescriptor};
    use crate::index::build_index;

    fn fixture_index() -> IndexedDataset {
        let schema = r#"{
            "id_column": "id",
            "name_column": "name",
            "type_columns": ["type"],
            "property_columns": [
                {"column": "jurisdiction", "property_id": "jurisdiction", "datatype": "text"},
                {"column": "parent", "property_id": "parent", "datatype": "entity"},
                {"column": "founded", "property_id": "founded", "datatype": "date"},
                {"column": "employees", "property_id": "employees", "datatype": "number"}
            ],
            "popularity_column": "popularity"
        }"#;
        let entities = "\
id,name,type,jurisdiction,parent,founded,employees,popularity
e1,greentech distribution,company,gb,,2004-03-01,120,
e2,greentech services,company,fr,e1,2010-07-15,40,
e3,globafrik distribution,company|distributor,fr,,1999-01-01,800,
e4,acme distribution,company,us,,2004-11-20,65,
e5,foo distribution,company,gb,,2021-02-02,5,
";
        let schema = SchemaDescriptor::from_reader(schema.as_bytes()).unwrap();
        let (dataset, report) =
            load_dataset(entities.as_bytes(), None::<&[u8]>, None::<&[u8]>, &schema).unwrap();
        assert!(report.rejected.is_empty());
        build_index(dataset, 3)
    }

    #[test]
    fn levenshtein_reference_distances() {
        assert_eq!(levenshtein("abc", "abc"), 0);
        assert_eq!(levenshtein("kitten", "sitting"), 3);
        assert_eq!(levenshtein("will", "wil"), 1);
        assert_eq!(levenshtein("", "abc"), 3);
        assert_eq!(levenshtein("", ""), 0);
        // Distances run over normalized text.
        assert_eq!(levenshtein("O'Neill", "oneill"), 1);
    }

    #[test]
    fn levenshtein_similarity_rescales_distance() {
        assert_eq!(levenshtein_similarity("will", "wil"), 0.75);
        assert_eq!(levenshtein_similarity("same", "same"), 1.0);
        assert_eq!(levenshtein_similarity("", "abc"), 0.0);
        assert_eq!(levenshtein_similarity("", ""), 1.0);
        assert_eq!(levenshtein_similarity("!!!", "..."), 1.0);
    }

    #[test]
    fn qgram_similarity_reference_values() {
        assert_eq!(qgram_similarity("warehouse", "warehouse", 3).unwrap(), 1.0);
        assert_eq!(qgram_similarity("night", "nacht", 2).unwrap(), 0.25);
        assert_eq!(qgram_similarity("ab", "cd", 3).unwrap(), 1.0);
        assert_eq!(qgram_similarity("abc", "xyz", 3).unwrap(), 0.0);
        assert!(matches!(
            qgram_similarity("a", "b", 0),
            Err(FieldError::InvalidArgument(_))
        ));
    }

    #[test]
    fn qgram_similarity_counts_multiset_overlap() {
        // "aaaa" has bag {aa,aa,aa}; "aa" has bag {aa}: one shared copy.
        let sim = qgram_similarity("aaaa", "aa", 2).unwrap();
        assert!((sim - 2.0 * 1.0 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn tfidf_weight_normalizes_within_the_document() {
        let ix = fixture_index();
        let doc = tokenize("greentech distribution");
        let w = tfidf_weight("greentech", &doc, &ix).unwrap();
        assert!((w - 0.9716).abs() < 5e-4, "got {w}");

        let single = tokenize("globafrik");
        assert_eq!(tfidf_weight("globafrik", &single, &ix).unwrap(), 1.0);

        assert!(matches!(
            tfidf_weight("absent", &doc, &ix),
            Err(FieldError::InvalidArgument(_))
        ));
    }

    #[test]
    fn tfidf_weight_zero_for_zero_idf_document() {
        // Build a corpus where the token appears in every name, so its idf
        // and hence the whole document vector is zero.
        let everywhere = build_index(
            crate::testutil::dataset_from_rows(&[
                ("a", "acme co", ""),
                ("b", "bold co", ""),
            ]),
            3,
        );
        let doc = tokenize("co");
        assert_eq!(tfidf_weight("co", &doc, &everywhere).unwrap(), 0.0);
    }

    #[test]
    fn soft_tfidf_reproduces_fixture_values() {
        let ix = fixture_index();
        let simple = |a: &str, b: &str| soft_tfidf(a, b, &ix, 1.0, levenshtein_similarity);
        let d1 = "greentech distribution";
        let s12 = simple(d1, "greentech services");
        let s13 = simple(d1, "globafrik distribution");
        assert!((s12 - 0.4808).abs() <= 1e-3, "got {s12}");
        assert!((s13 - 0.0325).abs() <= 1e-3, "got {s13}");
        assert!(s12 > s13);
        assert_eq!(simple(d1, d1), 1.0);
        assert_eq!(simple("greentech", "acme"), 0.0);
    }

    #[test]
    fn soft_tfidf_extended_mode_pairs_near_tokens() {
        let ix = fixture_index();
        let extended = |a: &str, b: &str| soft_tfidf(a, b, &ix, 0.9, levenshtein_similarity);
        let d1 = "greentech distribution";
        // The fixture values survive theta 0.9: no cross pair reaches 0.9.
        assert!((extended(d1, "greentech services") - 0.4808).abs() <= 1e-3);
        assert!((extended(d1, "globafrik distribution") - 0.0325).abs() <= 1e-3);

        // In a corpus where two near-identical tokens both occur with
        // positive idf ("distribution" vs "distributio", similarity 11/12),
        // the extended mode credits the pair and the strict mode does not.
        let near = build_index(
            crate::testutil::dataset_from_rows(&[
                ("a", "distribution co", ""),
                ("b", "distributio co", ""),
                ("c", "acme ltd", ""),
            ]),
            3,
        );
        let a = "distribution co";
        let b = "distributio co";
        let loose = soft_tfidf(a, b, &near, 0.9, levenshtein_similarity);
        let strict = soft_tfidf(a, b, &near, 1.0, levenshtein_similarity);
        assert!(loose > strict, "loose {loose} vs strict {strict}");
    }

    #[test]
    #[should_panic(expected = "theta")]
    fn soft_tfidf_rejects_theta_out_of_range() {
        let ix = fixture_index();
        soft_tfidf("a", "b", &ix, 1.5, levenshtein_similarity);
    }

    #[test]
    fn property_score_text_values() {
        let gb = ValueLiteral::Text("gb".to_owned());
        let stored = [ValueLiteral::Text("GB".to_owned())];
        assert_eq!(property_score(&gb, &stored, Datatype::Text).unwrap(), 1.0);
        let fr = [ValueLiteral::Text("fr".to_owned())];
        assert_eq!(property_score(&gb, &fr, Datatype::Text).unwrap(), 0.0);
        assert_eq!(property_score(&gb, &[], Datatype::Text).unwrap(), 0.0);
        // Best of several stored values wins.
        let multi = [
            ValueLiteral::Text("fr".to_owned()),
            ValueLiteral::Text("gb".to_owned()),
        ];
        assert_eq!(property_score(&gb, &multi, Datatype::Text).unwrap(), 1.0);
    }

    #[test]
    fn property_score_dates_bucket_by_agreement() {
        let q = ValueLiteral::Text("2004-03-01".to_owned());
        let stored = |s: &str| [ValueLiteral::Text(s.to_owned())];
        let score = |s: &str| property_score(&q, &stored(s), Datatype::Date).unwrap();
        assert_eq!(score("2004-03-01"), 1.0);
        assert_eq!(score("2004-03-15"), 0.9);
        assert_eq!(score("2004-09-15"), 0.7);
        assert_eq!(score("1999-03-01"), 0.0);
        let bad = ValueLiteral::Text("March 2004".to_owned());
        assert!(matches!(
            property_score(&bad, &stored("2004-03-01"), Datatype::Date),
            Err(FieldError::ValueParse { .. })
        ));
        // Unparseable stored values score 0 instead of failing.
        assert_eq!(
            property_score(&q, &stored("whenever"), Datatype::Date).unwrap(),
            0.0
        );
    }

    #[test]
    fn property_score_numbers_use_relative_tolerance() {
        let q = ValueLiteral::Text("1000".to_owned());
        let stored = |s: &str| [ValueLiteral::Text(s.to_owned())];
        let score = |s: &str| property_score(&q, &stored(s), Datatype::Number).unwrap();
        assert_eq!(score("1000"), 1.0);
        assert_eq!(score("1000.5"), 1.0);
        assert_eq!(score("1002"), 0.0);
        assert_eq!(score("0"), 0.0);
        assert!(matches!(
            property_score(
                &ValueLiteral::Text("many".to_owned()),
                &stored("1"),
                Datatype::Number
            ),
            Err(FieldError::ValueParse { .. })
        ));
    }

    #[test]
    fn property_score_entities_compare_ids() {
        let q = ValueLiteral::EntityRef("e1".to_owned());
        let stored = [ValueLiteral::EntityRef("e1".to_owned())];
        assert_eq!(property_score(&q, &stored, Datatype::Entity).unwrap(), 1.0);
        let other = [ValueLiteral::EntityRef("e2".to_owned())];
        assert_eq!(property_score(&q, &other, Datatype::Entity).unwrap(), 0.0);
        // A text query value still matches on the id.
        let text = ValueLiteral::Text("e1".to_owned());
        assert_eq!(property_score(&text, &stored, Datatype::Entity).unwrap(), 1.0);
    }

    #[test]
    fn popularity_score_is_logarithmic_with_neutral_absence() {
        let entity = |pop: Option<f64>| EntityRecord {
            id: "x".to_owned(),
            name: "x".to_owned(),
            types: Default::default(),
            properties: Default::default(),
            popularity: pop,
        };
        assert_eq!(popularity_score(&entity(None), 100.0), 0.5);
        assert_eq!(popularity_score(&entity(Some(0.0)), 100.0), 0.0);
        assert_eq!(popularity_score(&entity(Some(1e6)), 1e6), 1.0);
        let half = popularity_score(&entity(Some(999.0)), 1e6);
        assert!((half - 0.5).abs() < 1e-3, "got {half}");
        assert_eq!(popularity_score(&entity(Some(0.0)), 0.0), 0.0);
    }

    #[test]
    fn score_fields_emits_fixed_order_and_ids() {
        let ix = fixture_index();
        let mut query = ReconciliationQuery::for_name("greentech distribution");
        query.constraints.push((
            "jurisdiction".to_owned(),
            ValueLiteral::Text("gb".to_owned()),
        ));
        let e1 = ix.dataset().get_entity("e1").unwrap().clone();
        let scored = score_fields(&query, &e1, &ix).unwrap();
        let ids: Vec<&str> = scored.features.iter().map(|f| f.id.as_str()).collect();
        assert_eq!(
            ids,
            [
                "name_softtfidf",
                "name_levenshtein",
                "name_qgram",
                "prop:jurisdiction",
                "popularity",
                "type_match"
            ]
        );
        assert_eq!(scored.features[0].value, 1.0);
        assert_eq!(scored.features[1].value, 1.0);
        assert_eq!(scored.features[2].value, 1.0);
        assert_eq!(scored.features[3].value, 1.0);
        assert!(scored.warnings.is_empty());
    }

    #[test]
    fn score_fields_mismatched_property_and_type() {
        let ix = fixture_index();
        let mut query = ReconciliationQuery::for_name("greentech distribution");
        query.constraints.push((
            "jurisdiction".to_owned(),
            ValueLiteral::Text("gb".to_owned()),
        ));
        let e2 = ix.dataset().get_entity("e2").unwrap().clone();
        let scored = score_fields(&query, &e2, &ix).unwrap();
        let prop = scored
            .features
            .iter()
            .find(|f| f.id == "prop:jurisdiction")
            .unwrap();
        // "gb" vs "fr": two substitutions over length two.
        assert_eq!(prop.value, 0.0);

        let mut typed = ReconciliationQuery::for_name("greentech distribution");
        typed.types = vec!["plant".to_owned()];
        let e1 = ix.dataset().get_entity("e1").unwrap().clone();
        let scored = score_fields(&typed, &e1, &ix).unwrap();
        let tm = scored.features.iter().find(|f| f.id == "type_match").unwrap();
        assert_eq!(tm.value, 0.0);
    }

    #[test]
    fn score_fields_unknown_property_warns_instead_of_failing() {
        let ix = fixture_index();
        let mut query = ReconciliationQuery::for_name("greentech");
        query
            .constraints
            .push(("bogus".to_owned(), ValueLiteral::Text("x".to_owned())));
        let e1 = ix.dataset().get_entity("e1").unwrap().clone();
        let scored = score_fields(&query, &e1, &ix).unwrap();
        let prop = scored.features.iter().find(|f| f.id == "prop:bogus").unwrap();
        assert_eq!(prop.value, 0.0);
        assert_eq!(scored.warnings.len(), 1);
        assert!(scored.warnings[0].contains("bogus"));
    }

    #[test]
    fn score_fields_duplicate_constraints_merge_by_best() {
        let ix = fixture_index();
        let mut query = ReconciliationQuery::for_name("greentech distribution");
        query.constraints.push((
            "jurisdiction".to_owned(),
            ValueLiteral::Text("fr".to_owned()),
        ));
        query.constraints.push((
            "jurisdiction".to_owned(),
            ValueLiteral::Text("gb".to_owned()),
        ));
        let e1 = ix.dataset().get_entity("e1").unwrap().clone();
        let scored = score_fields(&query, &e1, &ix).unwrap();
        let props: Vec<_> = scored
            .features
            .iter()
            .filter(|f| f.id.starts_with("prop:"))
            .collect();
        assert_eq!(props.len(), 1);
        assert_eq!(props[0].value, 1.0);
    }

    #[test]
    fn score_fields_entity_constraint_matches_by_id_or_name() {
        let ix = fixture_index();
        let e2 = ix.dataset().get_entity("e2").unwrap().clone();

        let mut by_id = ReconciliationQuery::for_name("greentech services");
        by_id
            .constraints
            .push(("parent".to_owned(), ValueLiteral::EntityRef("e1".to_owned())));
        let scored = score_fields(&by_id, &e2, &ix).unwrap();
        let prop = scored.features.iter().find(|f| f.id == "prop:parent").unwrap();
        assert_eq!(prop.value, 1.0);

        let mut by_name = ReconciliationQuery::for_name("greentech services");
        by_name.constraints.push((
            "parent".to_owned(),
            ValueLiteral::Text("Greentech Distribution".to_owned()),
        ));
        let scored = score_fields(&by_name, &e2, &ix).unwrap();
        let prop = scored.features.iter().find(|f| f.id == "prop:parent").unwrap();
        assert_eq!(prop.value, 1.0);
    }

    #[test]
    fn score_fields_bad_constraint_value_is_an_error() {
        let ix = fixture_index();
        let mut query = ReconciliationQuery::for_name("greentech");
        query.constraints.push((
            "founded".to_owned(),
            ValueLiteral::Text("March 2004".to_owned()),
        ));
        let e1 = ix.dataset().get_entity("e1").unwrap().clone();
        assert!(matches!(
            score_fields(&query, &e1, &ix),
            Err(FieldError::ValueParse { .. })
        ));
    }

    #[test]
    fn feature_catalog_covers_every_emittable_id() {
        let ix = fixture_index();
        let catalog = feature_catalog(ix.dataset());
        let ids: Vec<&str> = catalog.iter().map(|d| d.id.as_str()).collect();
        assert_eq!(
            ids,
            [
                "name_softtfidf",
                "name_levenshtein",
                "name_qgram",
                "prop:employees",
                "prop:founded",
                "prop:jurisdiction",
                "prop:parent",
                "popularity",
                "type_match"
            ]
        );
        assert!(catalog.iter().all(|d| !d.documentation.is_empty()));
    }
}
