//! Blocking structures over entity names and candidate retrieval.
//!
//! Three complementary blocking keys are indexed per entity name: word
//! tokens, character q-grams, and the Soundex code of the leading token.
//! Retrieval unions the token hits and falls back to the fuzzier q-gram and
//! phonetic blocks only while the hit count stays below the requested list
//! length, so exact-token matches keep the short list precise and the
//! fuzzier keys catch misspellings when nothing better is available.

use std::collections::{BTreeMap, BTreeSet};

use crate::datamodel::{Dataset, EntityRecord, ReconciliationQuery};
use crate::textproc::{normalize, qgrams, soundex, tokenize};

/// A dataset wrapped with its inverted indices and corpus statistics.
/// Immutable after build; shares freely across threads.
#[derive(Debug, Clone)]
pub struct IndexedDataset {
    dataset: Dataset,
    q: usize,
    token_postings: BTreeMap<String, BTreeSet<String>>,
    qgram_postings: BTreeMap<String, BTreeSet<String>>,
    phonetic_blocks: BTreeMap<String, BTreeSet<String>>,
}

impl IndexedDataset {
    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    /// Q-gram width the index was built with.
    pub fn q(&self) -> usize {
        self.q
    }

    pub fn entity_count(&self) -> usize {
        self.dataset.entity_count()
    }

    /// Number of entities whose name contains the token.
    pub fn doc_freq(&self, token: &str) -> usize {
        self.token_postings.get(token).map_or(0, BTreeSet::len)
    }

    /// Inverse document frequency ln(N / doc_freq); 0 for unseen tokens.
    pub fn idf(&self, token: &str) -> f64 {
        let df = self.doc_freq(token);
        if df == 0 {
            return 0.0;
        }
        (self.entity_count() as f64 / df as f64).ln()
    }

    pub fn token_postings(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.token_postings
    }

    pub fn qgram_postings(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.qgram_postings
    }

    pub fn phonetic_blocks(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.phonetic_blocks
    }
}

/// Indexes every entity name under its tokens, q-grams, and Soundex code.
///
/// # Panics
///
/// Panics if `q` is zero.
pub fn build_index(dataset: Dataset, q: usize) -> IndexedDataset {
    assert!(q >= 1, "q-gram width must be at least 1");
    let mut token_postings: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut qgram_postings: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut phonetic_blocks: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for e in dataset.entities() {
        for token in tokenize(&e.name) {
            token_postings.entry(token).or_default().insert(e.id.clone());
        }
        for gram in qgrams(&e.name, q) {
            qgram_postings.entry(gram).or_default().insert(e.id.clone());
        }
        phonetic_blocks
            .entry(soundex(&e.name))
            .or_default()
            .insert(e.id.clone());
    }
    IndexedDataset {
        dataset,
        q,
        token_postings,
        qgram_postings,
        phonetic_blocks,
    }
}

fn passes_type_filter(e: &EntityRecord, constraint: &[String]) -> bool {
    constraint.is_empty() || constraint.iter().any(|t| e.types.contains(t))
}

/// Retrieves up to `k` candidate entity ids for the query.
///
/// Token-posting hits come first; q-gram blocks are consulted only while the
/// hit count is below `k`, and the phonetic block only while it still is
/// after that. Hits are filtered by the query's type constraint and ranked
/// by the retrieval route that found them (tokens before q-grams before
/// phonetics), then by descending sum of idf over tokens shared with the
/// query, then by ascending entity id. The ranking does not depend on `k`,
/// so the result for a smaller `k` is always a prefix of the result for a
/// larger one.
///
/// # Panics
///
/// Panics if `k` is zero.
pub fn retrieve_candidates(
    ix: &IndexedDataset,
    query: &ReconciliationQuery,
    k: usize,
) -> Vec<String> {
    assert!(k >= 1, "candidate count must be at least 1");
    if normalize(&query.text).is_empty() {
        return Vec::new();
    }

    let mut query_tokens: Vec<String> = tokenize(&query.text);
    query_tokens.sort();
    query_tokens.dedup();

    // Route rank per entity: 0 token hit, 1 q-gram hit, 2 phonetic hit.
    let mut hits: BTreeMap<&str, u8> = BTreeMap::new();
    for token in &query_tokens {
        if let Some(posting) = ix.token_postings.get(token) {
            for id in posting {
                hits.entry(id).or_insert(0);
            }
        }
    }
    if hits.len() < k {
        for gram in qgrams(&query.text, ix.q) {
            if let Some(posting) = ix.qgram_postings.get(&gram) {
                for id in posting {
                    hits.entry(id).or_insert(1);
                }
            }
        }
    }
    if hits.len() < k {
        let code = soundex(&query.text);
        // "0000" marks a letterless leading token, not a phonetic class.
        if code != "0000" {
            if let Some(block) = ix.phonetic_blocks.get(code.as_str()) {
                for id in block {
                    hits.entry(id).or_insert(2);
                }
            }
        }
    }

    let mut ranked: Vec<(u8, f64, &str)> = hits
        .iter()
        .filter(|(id, _)| {
            let e = ix.dataset.get_entity(id).expect("posted id exists");
            passes_type_filter(e, &query.types)
        })
        .map(|(id, &route)| {
            let idf_sum: f64 = query_tokens
                .iter()
                .filter(|t| ix.token_postings.get(*t).is_some_and(|p| p.contains(*id)))
                .map(|t| ix.idf(t))
                .sum();
            (route, idf_sum, *id)
        })
        .collect();
    ranked.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then(b.1.total_cmp(&a.1))
            .then(a.2.cmp(b.2))
    });
    ranked.truncate(k);
    ranked.into_iter().map(|(_, _, id)| id.to_owned()).collect()
}

/// Returns every entity passing the type filter, in ascending id order, for
/// configurations that skip candidate retrieval and compare all records.
pub fn exhaustive_retrieve(d: &Dataset, query: &ReconciliationQuery) -> Vec<String> {
    d.entities()
        .filter(|e| passes_type_filter(e, &query.types))
        .map(|e| e.id.clone())
        .collect()
}
