//! Batch reconciliation client: reads a user table, queries a service in
//! batches, re-scores the returned candidates with a client-side decision
//! model over their feature vectors, and writes the matched table plus an
//! optional threshold-sweep evaluation.

pub mod remote;
pub mod table;

use std::collections::BTreeMap;
use std::io::Write;

use futures::stream::{self, StreamExt};
use recon_core::fieldscore::FeatureDoc;
use recon_core::globalscore::{
    auto_match, linear_score, rank_candidates, tree_decide, DecisionModel, LinearModel,
};
use serde::Serialize;
use thiserror::Error;

use remote::{query_for_row, row_key, Remote, RemoteCandidate, RemoteResult};
use table::UserTable;

/// Batches in flight at once.
pub const CONCURRENT_BATCHES: usize = 4;
/// Default rows per reconcile request.
pub const DEFAULT_BATCH_SIZE: usize = 10;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("table error: {0}")]
    Table(String),
    #[error("service error: {0}")]
    Service(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("output error: {0}")]
    Output(#[from] std::io::Error),
}

/// How a row was decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decision {
    /// The top candidate cleared the threshold and the ambiguity gap.
    Auto,
    /// Candidates exist but the best score is under the threshold.
    BelowThreshold,
    /// The best score clears the threshold but the runner-up is too close.
    Ambiguous,
    /// No candidate was returned, or the query failed outright.
    NoCandidate,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Auto => "auto",
            Decision::BelowThreshold => "below-threshold",
            Decision::Ambiguous => "ambiguous",
            Decision::NoCandidate => "no-candidate",
        }
    }
}

/// The outcome for one input row: the partial-mapping entry (present only
/// for auto decisions), the top candidate's score, and the full candidate
/// list in client ranking order.
#[derive(Debug, Clone)]
pub struct RowOutcome {
    pub matched_id: Option<String>,
    pub matched_name: Option<String>,
    pub top_score: Option<f64>,
    pub decision: Decision,
    /// Candidates ordered by the client model (service order for trees).
    pub candidates: Vec<RemoteCandidate>,
    /// Transport or per-query error, when any.
    pub note: Option<String>,
    /// Warnings passed through from the service.
    pub warnings: Vec<String>,
}

impl RowOutcome {
    fn failed(note: String) -> RowOutcome {
        RowOutcome {
            matched_id: None,
            matched_name: None,
            top_score: None,
            decision: Decision::NoCandidate,
            candidates: Vec::new(),
            note: Some(note),
            warnings: Vec::new(),
        }
    }
}

/// Decides one row from a service response using the client model. Linear
/// models re-rank the candidates by their feature vectors; tree models
/// accept or reject the service's top candidate.
pub fn decide_row(response: RemoteResult, model: &DecisionModel) -> RowOutcome {
    let RemoteResult {
        result: candidates,
        error,
        warnings,
    } = response;
    if candidates.is_empty() {
        let mut outcome = RowOutcome::failed(error.unwrap_or_default());
        if outcome.note.as_deref() == Some("") {
            outcome.note = None;
        }
        outcome.warnings = warnings;
        return outcome;
    }
    match model {
        DecisionModel::Linear(m) => {
            let rescored: Vec<(String, f64)> = candidates
                .iter()
                .map(|c| (c.id.clone(), linear_score(&c.features, m)))
                .collect();
            let ranked = rank_candidates(rescored);
            let by_id: BTreeMap<&str, &RemoteCandidate> =
                candidates.iter().map(|c| (c.id.as_str(), c)).collect();
            let reordered: Vec<RemoteCandidate> = ranked
                .iter()
                .map(|(id, _)| (*by_id[id.as_str()]).clone())
                .collect();
            let top_score = ranked[0].1;
            let decision = match auto_match(&ranked, m) {
                Some(_) => Decision::Auto,
                None if top_score < m.threshold => Decision::BelowThreshold,
                None => Decision::Ambiguous,
            };
            let (matched_id, matched_name) = if decision == Decision::Auto {
                (
                    Some(reordered[0].id.clone()),
                    Some(reordered[0].name.clone()),
                )
            } else {
                (None, None)
            };
            RowOutcome {
                matched_id,
                matched_name,
                top_score: Some(top_score),
                decision,
                candidates: reordered,
                note: error,
                warnings,
            }
        }
        DecisionModel::Tree(tree) => {
            let top = &candidates[0];
            let accepted = tree_decide(&top.features, tree);
            RowOutcome {
                matched_id: accepted.then(|| top.id.clone()),
                matched_name: accepted.then(|| top.name.clone()),
                top_score: Some(top.score),
                decision: if accepted {
                    Decision::Auto
                } else {
                    Decision::BelowThreshold
                },
                candidates,
                note: error,
                warnings,
            }
        }
    }
}

/// Reconciles every table row against the service: rows are grouped into
/// batches in input order, up to four batches travel concurrently, and a
/// batch that keeps failing marks only its own rows as no-candidate.
pub async fn run_reconcile(
    table: &UserTable,
    remote: &Remote,
    model: &DecisionModel,
    batch_size: usize,
) -> Result<Vec<RowOutcome>, ClientError> {
    if batch_size == 0 {
        return Err(ClientError::InvalidArgument(
            "batch size must be at least 1".to_owned(),
        ));
    }
    let indices: Vec<usize> = (0..table.len()).collect();
    let batches = stream::iter(indices.chunks(batch_size).map(|chunk| {
        let queries: BTreeMap<String, serde_json::Value> = chunk
            .iter()
            .map(|&i| (row_key(i), query_for_row(table, i)))
            .collect();
        async move { (chunk, remote.reconcile_batch(&queries).await) }
    }))
    .buffered(CONCURRENT_BATCHES)
    .collect::<Vec<_>>()
    .await;

    let mut outcomes: Vec<RowOutcome> = Vec::with_capacity(table.len());
    for (chunk, outcome) in batches {
        match outcome {
            Ok(mut results) => {
                for &i in chunk {
                    let row = match results.remove(&row_key(i)) {
                        Some(response) => decide_row(response, model),
                        None => RowOutcome::failed(format!(
                            "response is missing key {:?}",
                            row_key(i)
                        )),
                    };
                    outcomes.push(row);
                }
            }
            Err(err) => {
                for _ in chunk {
                    outcomes.push(RowOutcome::failed(err.to_string()));
                }
            }
        }
    }
    Ok(outcomes)
}

/// One threshold's tallies in a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry {
    pub threshold: f64,
    pub matched: usize,
    pub unmatched: usize,
    pub ambiguous: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precision: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
}

/// The threshold sweep: per-threshold decision tallies, with precision and
/// recall when truth ids are available.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
}

/// Re-runs the linear decision locally at each threshold, without further
/// network calls. Precision is taken over matched rows that carry a truth
/// id; recall over all rows that carry one. Empty denominators leave the
/// metric absent.
pub fn sweep(
    results: &[RowOutcome],
    truths: &[Option<String>],
    model: &LinearModel,
    thresholds: &[f64],
) -> SweepReport {
    let with_truth = truths.iter().flatten().count();
    let entries = thresholds
        .iter()
        .map(|&threshold| {
            let model_at = LinearModel {
                threshold,
                ..model.clone()
            };
            let mut matched = 0;
            let mut unmatched = 0;
            let mut ambiguous = 0;
            let mut matched_with_truth = 0;
            let mut correct = 0;
            for (i, row) in results.iter().enumerate() {
                if row.candidates.is_empty() {
                    unmatched += 1;
                    continue;
                }
                let rescored: Vec<(String, f64)> = row
                    .candidates
                    .iter()
                    .map(|c| (c.id.clone(), linear_score(&c.features, &model_at)))
                    .collect();
                let ranked = rank_candidates(rescored);
                match auto_match(&ranked, &model_at) {
                    Some(id) => {
                        matched += 1;
                        if let Some(truth) = truths.get(i).and_then(Option::as_ref) {
                            matched_with_truth += 1;
                            if truth == id {
                                correct += 1;
                            }
                        }
                    }
                    None if ranked[0].1 < threshold => unmatched += 1,
                    None => ambiguous += 1,
                }
            }
            SweepEntry {
                threshold,
                matched,
                unmatched,
                ambiguous,
                precision: (matched_with_truth > 0)
                    .then(|| correct as f64 / matched_with_truth as f64),
                recall: (with_truth > 0).then(|| correct as f64 / with_truth as f64),
            }
        })
        .collect();
    SweepReport { entries }
}

/// Writes the input table with the reconciliation verdict appended: the
/// matched id, name and score, the decision label, and one column per
/// catalog feature holding the top candidate's value.
pub fn write_output<W: Write>(
    results: &[RowOutcome],
    table: &UserTable,
    catalog: &[FeatureDoc],
    writer: W,
) -> Result<(), ClientError> {
    let mut out = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = table.headers().to_vec();
    header.extend(
        ["matched_id", "matched_name", "matched_score", "decision"]
            .iter()
            .map(|s| (*s).to_owned()),
    );
    header.extend(catalog.iter().map(|doc| format!("feature:{}", doc.id)));
    out.write_record(&header)
        .map_err(|e| ClientError::Table(format!("cannot write output: {e}")))?;

    for (row, outcome) in table.rows().iter().zip(results) {
        let mut record: Vec<String> = row.clone();
        record.push(outcome.matched_id.clone().unwrap_or_default());
        record.push(outcome.matched_name.clone().unwrap_or_default());
        record.push(outcome.top_score.map(|s| s.to_string()).unwrap_or_default());
        record.push(outcome.decision.as_str().to_owned());
        let top = outcome.candidates.first();
        for doc in catalog {
            record.push(match top {
                Some(c) => c.feature(&doc.id).to_string(),
                None => String::new(),
            });
        }
        out.write_record(&record)
            .map_err(|e| ClientError::Table(format!("cannot write output: {e}")))?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use recon_core::fieldscore::FeatureScore;

    fn candidate(id: &str, soft: f64) -> RemoteCandidate {
        RemoteCandidate {
            id: id.to_owned(),
            name: id.to_uppercase(),
            score: soft,
            matched: false,
            features: vec![FeatureScore {
                id: "name_softtfidf".to_owned(),
                name: "Name similarity (SoftTFIDF)".to_owned(),
                value: soft,
            }],
        }
    }

    fn one_hot(threshold: f64, gap: f64) -> DecisionModel {
        DecisionModel::Linear(LinearModel {
            weights: [("name_softtfidf".to_owned(), 1.0)].into_iter().collect(),
            bias: 0.0,
            threshold,
            gap,
        })
    }

    fn response(cands: Vec<RemoteCandidate>) -> RemoteResult {
        RemoteResult {
            result: cands,
            error: None,
            warnings: Vec::new(),
        }
    }

    #[test]
    fn linear_decisions_cover_all_four_labels() {
        let auto = decide_row(response(vec![candidate("a", 0.95), candidate("b", 0.5)]), &one_hot(0.8, 0.1));
        assert_eq!(auto.decision, Decision::Auto);
        assert_eq!(auto.matched_id.as_deref(), Some("a"));
        assert_eq!(auto.top_score, Some(0.95));

        let low = decide_row(response(vec![candidate("a", 0.6)]), &one_hot(0.8, 0.1));
        assert_eq!(low.decision, Decision::BelowThreshold);
        assert!(low.matched_id.is_none());
        assert_eq!(low.top_score, Some(0.6));

        let close = decide_row(
            response(vec![candidate("a", 0.95), candidate("b", 0.9)]),
            &one_hot(0.8, 0.1),
        );
        assert_eq!(close.decision, Decision::Ambiguous);
        assert!(close.matched_id.is_none());

        let none = decide_row(response(vec![]), &one_hot(0.8, 0.1));
        assert_eq!(none.decision, Decision::NoCandidate);
        assert!(none.top_score.is_none());
    }

    #[test]
    fn linear_reranking_overrides_service_order() {
        let mut weaker = candidate("served_first", 0.4);
        weaker.score = 0.99;
        let row = decide_row(
            response(vec![weaker, candidate("served_second", 0.9)]),
            &one_hot(0.8, 0.1),
        );
        assert_eq!(row.candidates[0].id, "served_second");
        assert_eq!(row.matched_id.as_deref(), Some("served_second"));
        assert_eq!(row.top_score, Some(0.9));
    }

    #[test]
    fn tree_decisions_accept_or_reject_the_top_candidate() {
        let tree: DecisionModel = DecisionModel::parse(
            r#"{"tree": {"feature": "name_softtfidf", "threshold": 0.8,
                 "low": {"match": false}, "high": {"match": true}}}"#,
        )
        .unwrap();
        let accepted = decide_row(
            response(vec![candidate("a", 0.9), candidate("b", 0.95)]),
            &tree,
        );
        assert_eq!(accepted.decision, Decision::Auto);
        assert_eq!(accepted.matched_id.as_deref(), Some("a"));

        let rejected = decide_row(response(vec![candidate("a", 0.5)]), &tree);
        assert_eq!(rejected.decision, Decision::BelowThreshold);
        assert!(rejected.matched_id.is_none());
    }

    #[test]
    fn per_query_errors_become_no_candidate_notes() {
        let row = decide_row(
            RemoteResult {
                result: vec![],
                error: Some("limit must be at least 1".to_owned()),
                warnings: vec![],
            },
            &one_hot(0.8, 0.1),
        );
        assert_eq!(row.decision, Decision::NoCandidate);
        assert!(row.note.as_deref().unwrap().contains("limit"));
    }

    #[test]
    fn sweep_counts_are_monotone_and_metrics_respect_truth() {
        let results = vec![
            decide_row(response(vec![candidate("e1", 1.0), candidate("x", 0.3)]), &one_hot(0.8, 0.05)),
            decide_row(response(vec![candidate("e2", 0.9)]), &one_hot(0.8, 0.05)),
            decide_row(response(vec![candidate("e3", 0.6)]), &one_hot(0.8, 0.05)),
            decide_row(response(vec![]), &one_hot(0.8, 0.05)),
        ];
        let truths = vec![
            Some("e1".to_owned()),
            Some("wrong".to_owned()),
            Some("e3".to_owned()),
            None,
        ];
        let model = LinearModel {
            weights: [("name_softtfidf".to_owned(), 1.0)].into_iter().collect(),
            bias: 0.0,
            threshold: 0.8,
            gap: 0.05,
        };
        let report = sweep(&results, &truths, &model, &[0.0, 0.5, 0.8, 0.95, 1.01]);
        let matched: Vec<usize> = report.entries.iter().map(|e| e.matched).collect();
        assert_eq!(matched, vec![3, 3, 2, 1, 0]);
        for pair in matched.windows(2) {
            assert!(pair[0] >= pair[1]);
        }

        let at_08 = &report.entries[2];
        assert_eq!(at_08.unmatched, 2);
        assert_eq!(at_08.ambiguous, 0);
        assert_eq!(at_08.precision, Some(0.5));
        assert!((at_08.recall.unwrap() - 1.0 / 3.0).abs() < 1e-12);

        let at_101 = &report.entries[4];
        assert_eq!(at_101.matched, 0);
        assert!(at_101.precision.is_none());
        assert_eq!(at_101.recall, Some(0.0));
    }

    #[test]
    fn sweep_handles_rows_without_any_truth() {
        let results = vec![decide_row(
            response(vec![candidate("e1", 1.0)]),
            &one_hot(0.8, 0.05),
        )];
        let model = LinearModel {
            weights: [("name_softtfidf".to_owned(), 1.0)].into_iter().collect(),
            bias: 0.0,
            threshold: 0.8,
            gap: 0.05,
        };
        let report = sweep(&results, &[None], &model, &[0.8]);
        assert_eq!(report.entries[0].matched, 1);
        assert!(report.entries[0].precision.is_none());
        assert!(report.entries[0].recall.is_none());
    }
}
