//! Multinomial naive Bayes over case-folded unicode tokens.
//!
//! Serialized as one JSON document:
//!
//! ```json
//! {
//!   "format": "coherelab-multinomial-nb/1",
//!   "tokenizer": "unicode-casefold-alnum/1",
//!   "max_tokens": 128,
//!   "smoothing": 1.0,
//!   "labels": ["positive", "negative", "neutral", "mixed"],
//!   "log_priors": [..4 values..],
//!   "vocabulary": ["sorted", "tokens"],
//!   "log_likelihoods": [[..|V| values..], ..4 rows..]
//! }
//! ```
//!
//! Row `k` of `log_likelihoods` and entry `k` of `log_priors` belong to
//! `labels[k]`; column `j` belongs to `vocabulary[j]`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::tokenize::{tokenize, TOKENIZER_ID};
use super::{LabelingError, TrainingExample};
use crate::model::{EmotionLabel, LabelScores};

pub const MODEL_FORMAT: &str = "coherelab-multinomial-nb/1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub smoothing: f64,
    pub max_tokens: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            smoothing: 1.0,
            max_tokens: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineModel {
    pub format: String,
    pub tokenizer: String,
    pub max_tokens: usize,
    pub smoothing: f64,
    pub labels: [EmotionLabel; 4],
    pub log_priors: [f64; 4],
    /// Lexicographically sorted.
    pub vocabulary: Vec<String>,
    pub log_likelihoods: Vec<Vec<f64>>,
}

/// Fits the model. Priors and token likelihoods are both additively smoothed,
/// so a class absent from training keeps nonzero mass.
pub fn train_baseline(
    examples: &[TrainingExample],
    config: &BaselineConfig,
) -> Result<BaselineModel, LabelingError> {
    if examples.is_empty() {
        return Err(LabelingError::NoTrainingData);
    }
    let alpha = config.smoothing;
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(LabelingError::InvalidSmoothing(alpha));
    }

    let mut doc_counts = [0u64; 4];
    let mut token_counts: [BTreeMap<String, u64>; 4] = Default::default();
    let mut vocabulary = BTreeSet::new();
    for ex in examples {
        let k = ex.label.index();
        doc_counts[k] += 1;
        for tok in tokenize(&ex.text, config.max_tokens) {
            vocabulary.insert(tok.clone());
            *token_counts[k].entry(tok).or_default() += 1;
        }
    }
    let vocabulary: Vec<String> = vocabulary.into_iter().collect();
    let v = vocabulary.len() as f64;

    let n_docs = examples.len() as f64;
    let log_priors = std::array::from_fn(|k| {
        ((doc_counts[k] as f64 + alpha) / (n_docs + 4.0 * alpha)).ln()
    });

    let log_likelihoods = (0..4)
        .map(|k| {
            let total: u64 = token_counts[k].values().sum();
            let denom = total as f64 + alpha * v;
            vocabulary
                .iter()
                .map(|w| {
                    let c = token_counts[k].get(w).copied().unwrap_or(0) as f64;
                    ((c + alpha) / denom).ln()
                })
                .collect()
        })
        .collect();

    Ok(BaselineModel {
        format: MODEL_FORMAT.to_owned(),
        tokenizer: TOKENIZER_ID.to_owned(),
        max_tokens: config.max_tokens,
        smoothing: alpha,
        labels: EmotionLabel::ALL,
        log_priors,
        vocabulary,
        log_likelihoods,
    })
}

impl BaselineModel {
    fn token_index(&self, token: &str) -> Option<usize> {
        self.vocabulary
            .binary_search_by(|w| w.as_str().cmp(token))
            .ok()
    }

    /// Unnormalized log posteriors. Out-of-vocabulary tokens contribute nothing.
    pub fn log_posteriors(&self, text: &str) -> [f64; 4] {
        let mut lp = self.log_priors;
        for tok in tokenize(text, self.max_tokens) {
            if let Some(j) = self.token_index(&tok) {
                for (k, row) in self.log_likelihoods.iter().enumerate() {
                    lp[k] += row[j];
                }
            }
        }
        lp
    }

    /// Label and normalized posterior scores.
    pub fn predict(&self, text: &str) -> (EmotionLabel, LabelScores) {
        let lp = self.log_posteriors(text);
        let max = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let unnorm = lp.map(|v| (v - max).exp());
        let z: f64 = unnorm.iter().sum();
        let scores = LabelScores(unnorm.map(|v| v / z));
        (scores.argmax(), scores)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, LabelingError> {
        let model: BaselineModel =
            serde_json::from_str(text).map_err(|e| LabelingError::ModelFormat(e.to_string()))?;
        model.check()?;
        Ok(model)
    }

    fn check(&self) -> Result<(), LabelingError> {
        let bad = |m: String| Err(LabelingError::ModelFormat(m));
        if self.format != MODEL_FORMAT {
            return bad(format!("unsupported format {:?}", self.format));
        }
        if self.tokenizer != TOKENIZER_ID {
            return bad(format!("unsupported tokenizer {:?}", self.tokenizer));
        }
        if self.labels != EmotionLabel::ALL {
            return bad("labels must be positive, negative, neutral, mixed".into());
        }
        if self.log_likelihoods.len() != 4
            || self
                .log_likelihoods
                .iter()
                .any(|row| row.len() != self.vocabulary.len())
        {
            return bad("log_likelihoods must be 4 rows of vocabulary length".into());
        }
        if self.vocabulary.windows(2).any(|w| w[0] >= w[1]) {
            return bad("vocabulary must be strictly sorted".into());
        }
        Ok(())
    }
}
