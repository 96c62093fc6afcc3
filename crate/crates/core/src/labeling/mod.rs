//! Emotion labels for client utterances from gold annotations, an external
//! prediction file, or the built-in baseline classifier.

mod balance;
mod baseline;
mod tokenize;

pub use balance::{balance_classes, balance_target};
pub use baseline::{train_baseline, BaselineConfig, BaselineModel, MODEL_FORMAT};
pub use tokenize::{tokenize, TOKENIZER_ID};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::CorpusBundle;
use crate::model::{EmotionLabel, SessionRecord};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabelingError {
    #[error("INCOMPLETE_SOURCE: {source_name} cannot label session {session_id} utterance {utterance_index}")]
    IncompleteSource {
        source_name: &'static str,
        session_id: String,
        utterance_index: usize,
    },
    #[error("NO_TRAINING_DATA: no gold-labeled client utterances")]
    NoTrainingData,
    #[error("INVALID_SMOOTHING: smoothing must be positive, got {0}")]
    InvalidSmoothing(f64),
    #[error("INVALID_BALANCE_RATIO: ratio must lie in (0, 1], got {0}")]
    InvalidBalanceRatio(f64),
    #[error("MODEL_FORMAT: {0}")]
    ModelFormat(String),
}

impl LabelingError {
    pub fn code(&self) -> &'static str {
        match self {
            LabelingError::IncompleteSource { .. } => "INCOMPLETE_SOURCE",
            LabelingError::NoTrainingData => "NO_TRAINING_DATA",
            LabelingError::InvalidSmoothing(_) => "INVALID_SMOOTHING",
            LabelingError::InvalidBalanceRatio(_) => "INVALID_BALANCE_RATIO",
            LabelingError::ModelFormat(_) => "MODEL_FORMAT",
        }
    }
}

/// A labeled text, the unit of classifier training.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub text: String,
    pub label: EmotionLabel,
}

#[derive(Debug, Clone)]
pub enum LabelerSource {
    Gold,
    /// Predictions already attached by [`crate::ingest::load_predictions`].
    ExternalPredictions,
    Baseline(Box<BaselineModel>),
}

impl LabelerSource {
    pub fn name(&self) -> &'static str {
        match self {
            LabelerSource::Gold => "gold",
            LabelerSource::ExternalPredictions => "external",
            LabelerSource::Baseline(_) => "baseline",
        }
    }
}

/// True when every client utterance carries a gold label.
pub fn has_complete_gold(session: &SessionRecord) -> bool {
    session.client_utterances().all(|u| u.gold_label.is_some())
}

/// Gold-labeled client utterances of the given sessions, in corpus order.
pub fn training_examples<'a>(sessions: impl IntoIterator<Item = &'a SessionRecord>) -> Vec<TrainingExample> {
    sessions
        .into_iter()
        .flat_map(|s| s.client_utterances())
        .filter_map(|u| {
            u.gold_label.map(|label| TrainingExample {
                text: u.text.clone(),
                label,
            })
        })
        .collect()
}

/// Sets `predicted_label` on every client utterance; therapist turns are
/// never touched. Checks coverage before writing anything, so a failed call
/// leaves no partial labels. Idempotent.
pub fn label_corpus(mut bundle: CorpusBundle, source: &LabelerSource) -> Result<CorpusBundle, LabelingError> {
    let missing = |s: &SessionRecord, i: usize| LabelingError::IncompleteSource {
        source_name: source.name(),
        session_id: s.session_id.clone(),
        utterance_index: i,
    };
    match source {
        LabelerSource::Gold => {
            for s in &bundle.sessions {
                if let Some(u) = s.client_utterances().find(|u| u.gold_label.is_none()) {
                    return Err(missing(s, u.utterance_index));
                }
            }
            for u in bundle.sessions.iter_mut().flat_map(|s| s.utterances.iter_mut()) {
                if u.is_client() {
                    u.predicted_label = u.gold_label;
                    u.prediction_scores = None;
                }
            }
        }
        LabelerSource::ExternalPredictions => {
            for s in &bundle.sessions {
                if let Some(u) = s.client_utterances().find(|u| u.predicted_label.is_none()) {
                    return Err(missing(s, u.utterance_index));
                }
            }
        }
        LabelerSource::Baseline(model) => {
            bundle.sessions.par_iter_mut().for_each(|s| {
                for u in s.utterances.iter_mut().filter(|u| u.is_client()) {
                    let (label, scores) = model.predict(&u.text);
                    u.predicted_label = Some(label);
                    u.prediction_scores = Some(scores);
                }
            });
        }
    }
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Speaker, Utterance};

    fn bundle() -> CorpusBundle {
        let mk = |i, speaker, gold: Option<EmotionLabel>, text: &str| Utterance {
            session_id: "s1".into(),
            utterance_index: i,
            speaker,
            text: text.into(),
            gold_label: gold,
            predicted_label: None,
            prediction_scores: None,
        };
        CorpusBundle::from_sessions(vec![SessionRecord {
            session_id: "s1".into(),
            client_id: "c1".into(),
            session_index: 0,
            utterances: vec![
                mk(0, Speaker::Therapist, None, "hello"),
                mk(1, Speaker::Client, Some(EmotionLabel::Positive), "good great"),
                mk(2, Speaker::Client, Some(EmotionLabel::Negative), "bad awful"),
                mk(3, Speaker::Client, Some(EmotionLabel::Neutral), ""),
            ],
            poms: None,
            ors: None,
        }])
    }

    #[test]
    fn gold_copies_labels() {
        let out = label_corpus(bundle(), &LabelerSource::Gold).unwrap();
        for u in &out.sessions[0].utterances {
            assert_eq!(u.predicted_label, u.gold_label);
        }
        let again = label_corpus(out.clone(), &LabelerSource::Gold).unwrap();
        assert_eq!(again, out);
    }

    #[test]
    fn gold_requires_coverage() {
        let mut b = bundle();
        b.sessions[0].utterances[2].gold_label = None;
        assert_eq!(
            label_corpus(b, &LabelerSource::Gold).unwrap_err(),
            LabelingError::IncompleteSource {
                source_name: "gold",
                session_id: "s1".into(),
                utterance_index: 2
            }
        );
    }

    #[test]
    fn external_requires_every_client_utterance() {
        let mut b = bundle();
        b.sessions[0].utterances[1].predicted_label = Some(EmotionLabel::Mixed);
        b.sessions[0].utterances[3].predicted_label = Some(EmotionLabel::Mixed);
        assert!(matches!(
            label_corpus(b, &LabelerSource::ExternalPredictions),
            Err(LabelingError::IncompleteSource { utterance_index: 2, .. })
        ));
    }

    #[test]
    fn baseline_labels_clients_only() {
        let b = bundle();
        let model = train_baseline(&training_examples(&b.sessions), &BaselineConfig::default()).unwrap();
        let out = label_corpus(b, &LabelerSource::Baseline(Box::new(model.clone()))).unwrap();
        let utts = &out.sessions[0].utterances;
        assert!(utts[0].predicted_label.is_none() && utts[0].prediction_scores.is_none());
        assert_eq!(utts[1].predicted_label, Some(EmotionLabel::Positive));
        assert_eq!(utts[2].predicted_label, Some(EmotionLabel::Negative));
        // Empty text: argmax of the priors alone (three classes tie, Positive first).
        let prior_argmax = crate::model::argmax_label(&model.log_priors);
        assert_eq!(utts[3].predicted_label, Some(prior_argmax));
        for u in &utts[1..] {
            assert!((u.prediction_scores.unwrap().sum() - 1.0).abs() < 1e-9);
        }
    }
}
