//! Global score aggregation and matching decisions: weighted linear models
//! with a match threshold and an ambiguity gap, and decision trees walked
//! over the feature vector. Models serialize as JSON so services and
//! clients can exchange them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fieldscore::FeatureScore;

/// Weighted sum of features with a bias, plus the decision constants: a
/// score threshold and the minimum lead over the runner-up required for an
/// unambiguous match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: BTreeMap<String, f64>,
    #[serde(default)]
    pub bias: f64,
    pub threshold: f64,
    #[serde(default)]
    pub gap: f64,
}

impl LinearModel {
    /// Checks the structural invariants: at least one nonzero weight, all
    /// numbers finite, gap non-negative.
    pub fn validate(&self) -> Result<(), ModelError> {
        if !self.weights.values().any(|w| *w != 0.0) {
            return Err(ModelError::Invalid(
                "linear model needs at least one nonzero weight".to_owned(),
            ));
        }
        if self.weights.values().any(|w| !w.is_finite()) || !self.bias.is_finite() {
            return Err(ModelError::Invalid(
                "linear model weights and bias must be finite".to_owned(),
            ));
        }
        if !self.threshold.is_finite() {
            return Err(ModelError::Invalid("threshold must be finite".to_owned()));
        }
        if !(self.gap.is_finite() && self.gap >= 0.0) {
            return Err(ModelError::Invalid(
                "gap must be finite and non-negative".to_owned(),
            ));
        }
        Ok(())
    }
}

/// Binary decision tree over feature values. At an internal node the walk
/// goes low when the feature value is strictly below the node threshold and
/// high otherwise; leaves carry the match verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DecisionTree {
    Internal {
        feature: String,
        threshold: f64,
        low: Box<DecisionTree>,
        high: Box<DecisionTree>,
    },
    Leaf {
        #[serde(rename = "match")]
        matches: bool,
    },
}

impl DecisionTree {
    fn collect_features<'a>(&'a self, out: &mut Vec<&'a str>) {
        if let DecisionTree::Internal {
            feature, low, high, ..
        } = self
        {
            if !out.contains(&feature.as_str()) {
                out.push(feature);
            }
            low.collect_features(out);
            high.collect_features(out);
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            DecisionTree::Leaf { .. } => Ok(()),
            DecisionTree::Internal {
                threshold,
                low,
                high,
                feature,
            } => {
                if feature.is_empty() {
                    return Err(ModelError::Invalid(
                        "tree node with empty feature id".to_owned(),
                    ));
                }
                if !threshold.is_finite() {
                    return Err(ModelError::Invalid(format!(
                        "tree node on \"{feature}\" has a non-finite threshold"
                    )));
                }
                low.validate()?;
                high.validate()
            }
        }
    }
}

/// A decision model a service or client can apply to feature vectors.
/// Serializes as `{"linear": {...}}` or `{"tree": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecisionModel {
    Linear(LinearModel),
    Tree(DecisionTree),
}

impl DecisionModel {
    pub fn parse(json: &str) -> Result<Self, ModelError> {
        let model: DecisionModel =
            serde_json::from_str(json).map_err(|e| ModelError::Parse(e.to_string()))?;
        match &model {
            DecisionModel::Linear(m) => m.validate()?,
            DecisionModel::Tree(t) => t.validate()?,
        }
        Ok(model)
    }

    /// Every feature id the model reads, for validation against a catalog.
    pub fn feature_ids(&self) -> Vec<&str> {
        match self {
            DecisionModel::Linear(m) => m.weights.keys().map(String::as_str).collect(),
            DecisionModel::Tree(t) => {
                let mut out = Vec::new();
                t.collect_features(&mut out);
                out
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model does not parse: {0}")]
    Parse(String),
    #[error("invalid model: {0}")]
    Invalid(String),
}

fn feature_value(features: &[FeatureScore], id: &str) -> f64 {
    features
        .iter()
        .find(|f| f.id == id)
        .map(|f| f.value)
        .unwrap_or(0.0)
}

/// Bias plus the weighted sum of feature values. Features without a weight
/// are ignored; weighted features missing from the vector read as 0.
pub fn linear_score(features: &[FeatureScore], m: &LinearModel) -> f64 {
    m.bias
        + m.weights
            .iter()
            .map(|(id, w)| w * feature_value(features, id))
            .sum::<f64>()
}

/// Walks the tree over the feature vector and returns the leaf's verdict.
/// Missing features read as value 0 and therefore go low.
pub fn tree_decide(features: &[FeatureScore], tree: &DecisionTree) -> bool {
    match tree {
        DecisionTree::Leaf { matches } => *matches,
        DecisionTree::Internal {
            feature,
            threshold,
            low,
            high,
        } => {
            if feature_value(features, feature) < *threshold {
                tree_decide(features, low)
            } else {
                tree_decide(features, high)
            }
        }
    }
}

/// Orders candidates by descending score, breaking ties by ascending entity
/// id so equal-scored lists are deterministic.
pub fn rank_candidates(mut cands: Vec<(String, f64)>) -> Vec<(String, f64)> {
    cands.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    cands
}

/// Returns the top candidate's id when it clears the model's threshold and
/// leads the runner-up by at least the model's gap; `None` otherwise. Input
/// must already be ranked.
pub fn auto_match<'a>(ranked: &'a [(String, f64)], m: &LinearModel) -> Option<&'a str> {
    let (top_id, top_score) = ranked.first()?;
    if *top_score < m.threshold {
        return None;
    }
    if let Some((_, second)) = ranked.get(1) {
        if top_score - second < m.gap {
            return None;
        }
    }
    Some(top_id)
}
