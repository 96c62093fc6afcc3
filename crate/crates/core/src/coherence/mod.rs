//! Emotional coherence: per-session label shares against POMS totals,
//! pooled across sessions, and per-client coherence against well-being.

mod report;

pub use report::{
    association_report, coherence_report, AssociationReport, AssociationRow, ClientRow,
    CoherenceReport, CoherenceRow, InputRef, REPORT_NOTES,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    AnalysisConfig, CoherenceResult, EmotionCounts, EmotionProportions, Polarity, PomsAggregate,
    SessionRecord,
};
use crate::num::Real;
use crate::stats::{self, PairedSeries, StatsError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoherenceError {
    #[error("NO_LABELED_UTTERANCES: session {0} has no labeled client utterances")]
    NoLabeledUtterances(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

impl CoherenceError {
    pub fn code(&self) -> &'static str {
        match self {
            CoherenceError::NoLabeledUtterances(_) => "NO_LABELED_UTTERANCES",
            CoherenceError::Stats(e) => e.code(),
        }
    }
}

/// Which label of an utterance is counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelField {
    Gold,
    Predicted,
}

/// Label counts over the session's client utterances; therapist turns never count.
pub fn emotion_counts(session: &SessionRecord, field: LabelField) -> EmotionCounts {
    EmotionCounts::from_labels(session.client_utterances().filter_map(|u| match field {
        LabelField::Gold => u.gold_label,
        LabelField::Predicted => u.predicted_label,
    }))
}

/// Share of each label among the session's labeled client utterances.
pub fn emotion_proportions<T: Real>(
    session: &SessionRecord,
    field: LabelField,
) -> Result<EmotionProportions<T>, CoherenceError> {
    EmotionProportions::from_counts(&emotion_counts(session, field))
        .ok_or_else(|| CoherenceError::NoLabeledUtterances(session.session_id.clone()))
}

pub fn poms_aggregate<T: Real>(report: &crate::model::PomsReport) -> PomsAggregate<T> {
    PomsAggregate::from_report(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionFeatures<T> {
    pub session_id: String,
    pub client_id: String,
    pub session_index: u32,
    pub counts: EmotionCounts,
    pub proportions: EmotionProportions<T>,
    pub poms: PomsAggregate<T>,
    pub ors_total: Option<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DropReason {
    NoPoms,
    NoLabeledUtterances,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedSession {
    pub session_id: String,
    pub client_id: String,
    pub reason: DropReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet<T> {
    pub features: Vec<SessionFeatures<T>>,
    pub dropped: Vec<DroppedSession>,
}

impl<T: Real> FeatureSet<T> {
    pub fn dropped_count(&self, reason: DropReason) -> usize {
        self.dropped.iter().filter(|d| d.reason == reason).count()
    }
}

/// Joins label shares and POMS totals per session. Sessions lacking either
/// are dropped (not imputed) and listed.
pub fn build_features<T: Real>(sessions: &[SessionRecord], field: LabelField) -> FeatureSet<T> {
    let mut features = Vec::new();
    let mut dropped = Vec::new();
    for s in sessions {
        let drop = |reason| DroppedSession {
            session_id: s.session_id.clone(),
            client_id: s.client_id.clone(),
            reason,
        };
        let counts = emotion_counts(s, field);
        let Some(proportions) = EmotionProportions::from_counts(&counts) else {
            dropped.push(drop(DropReason::NoLabeledUtterances));
            continue;
        };
        let Some(poms) = &s.poms else {
            dropped.push(drop(DropReason::NoPoms));
            continue;
        };
        features.push(SessionFeatures {
            session_id: s.session_id.clone(),
            client_id: s.client_id.clone(),
            session_index: s.session_index,
            counts,
            proportions,
            poms: PomsAggregate::from_report(poms),
            ors_total: s.ors.map(|o| T::lit(o.total)),
        });
    }
    FeatureSet { features, dropped }
}

fn polarity_series<T: Real>(features: &[&SessionFeatures<T>], polarity: Polarity) -> (Vec<T>, Vec<T>) {
    features
        .iter()
        .map(|f| (f.proportions.polarity(polarity), f.poms.polarity(polarity)))
        .unzip()
}

/// Pearson correlation of `U_e` against `P_e` over all sessions, pooled across clients.
pub fn sessionwide_coherence<T: Real>(
    features: &[SessionFeatures<T>],
    polarity: Polarity,
    alpha: f64,
) -> Result<CoherenceResult<T>, StatsError> {
    let refs: Vec<&SessionFeatures<T>> = features.iter().collect();
    series_coherence(&refs, polarity, alpha)
}

fn series_coherence<T: Real>(
    features: &[&SessionFeatures<T>],
    polarity: Polarity,
    alpha: f64,
) -> Result<CoherenceResult<T>, StatsError> {
    let (us, ps) = polarity_series(features, polarity);
    let c = stats::pearson_with_p(&PairedSeries::new(&us, &ps)?)?;
    Ok(CoherenceResult::from_correlation(c, alpha))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientSummary<T> {
    pub client_id: String,
    pub n_sessions: usize,
    pub coherence_pos: Option<CoherenceResult<T>>,
    pub coherence_neg: Option<CoherenceResult<T>>,
    /// Mean total ORS over the client's analysed sessions that have one.
    pub mean_ors: Option<T>,
    pub n_ors: usize,
}

impl<T: Real> ClientSummary<T> {
    pub fn coherence(&self, polarity: Polarity) -> Option<&CoherenceResult<T>> {
        match polarity {
            Polarity::Pos => self.coherence_pos.as_ref(),
            Polarity::Neg => self.coherence_neg.as_ref(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ExclusionReason {
    TooFewSessions,
    ZeroVariance,
    NoOrs,
    StatsFailure,
}

/// A client left out of (part of) the association analysis.
///
/// `polarity = None` means the client is out of both rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientExclusion {
    pub client_id: String,
    pub polarity: Option<Polarity>,
    pub reason: ExclusionReason,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientAnalysis<T> {
    pub summaries: Vec<ClientSummary<T>>,
    pub exclusions: Vec<ClientExclusion>,
}

/// One coherence per client over that client's own sessions, plus the
/// client's mean ORS. Degenerate clients are excluded and recorded.
pub fn client_summaries<T: Real>(features: &[SessionFeatures<T>], config: &AnalysisConfig) -> ClientAnalysis<T> {
    let mut by_client: BTreeMap<&str, Vec<&SessionFeatures<T>>> = BTreeMap::new();
    for f in features {
        by_client.entry(f.client_id.as_str()).or_default().push(f);
    }

    let mut summaries = Vec::new();
    let mut exclusions = Vec::new();
    for (client_id, mut sessions) in by_client {
        sessions.sort_by(|a, b| (a.session_index, &a.session_id).cmp(&(b.session_index, &b.session_id)));
        let exclude = |polarity, reason, detail: String| ClientExclusion {
            client_id: client_id.to_owned(),
            polarity,
            reason,
            detail,
        };
        let n = sessions.len();
        if n < config.min_sessions_per_client {
            exclusions.push(exclude(
                None,
                ExclusionReason::TooFewSessions,
                format!("{n} sessions, minimum {}", config.min_sessions_per_client),
            ));
            continue;
        }

        let mut per_polarity = [None, None];
        for (slot, polarity) in per_polarity.iter_mut().zip(Polarity::BOTH) {
            match series_coherence(&sessions, polarity, config.alpha) {
                Ok(c) => *slot = Some(c),
                Err(e) => {
                    let reason = match e {
                        StatsError::ZeroVariance(_) => ExclusionReason::ZeroVariance,
                        StatsError::TooShort { .. } => ExclusionReason::TooFewSessions,
                        _ => ExclusionReason::StatsFailure,
                    };
                    exclusions.push(exclude(Some(polarity), reason, e.to_string()));
                }
            }
        }
        let [coherence_pos, coherence_neg] = per_polarity;
        if coherence_pos.is_none() && coherence_neg.is_none() {
            continue;
        }

        let ors: Vec<T> = sessions.iter().filter_map(|f| f.ors_total).collect();
        let mean_ors = stats::mean(&ors).ok();
        if mean_ors.is_none() {
            exclusions.push(exclude(None, ExclusionReason::NoOrs, "no ORS reports".into()));
        }
        summaries.push(ClientSummary {
            client_id: client_id.to_owned(),
            n_sessions: n,
            coherence_pos,
            coherence_neg,
            mean_ors,
            n_ors: ors.len(),
        });
    }
    ClientAnalysis { summaries, exclusions }
}

/// Pearson correlation, across clients, of per-client coherence `r` with mean ORS.
pub fn coherence_ors_association<T: Real>(
    summaries: &[ClientSummary<T>],
    polarity: Polarity,
    alpha: f64,
) -> Result<CoherenceResult<T>, StatsError> {
    let (xs, ys): (Vec<T>, Vec<T>) = summaries
        .iter()
        .filter_map(|s| Some((s.coherence(polarity)?.r, s.mean_ors?)))
        .unzip();
    let c = stats::pearson_with_p(&PairedSeries::new(&xs, &ys)?)?;
    Ok(CoherenceResult::from_correlation(c, alpha))
}
