//! Domain vocabulary: labels, utterances, sessions, self-report instruments.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::num::Real;
use crate::stats::Correlation;

/// Utterance-level emotion code.
///
/// The declaration order is the tie-break order used everywhere an argmax
/// over labels is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmotionLabel {
    Positive,
    Negative,
    Neutral,
    /// Both positive and negative emotion in the same utterance.
    Mixed,
}

impl EmotionLabel {
    pub const ALL: [EmotionLabel; 4] = [
        EmotionLabel::Positive,
        EmotionLabel::Negative,
        EmotionLabel::Neutral,
        EmotionLabel::Mixed,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EmotionLabel::Positive => "positive",
            EmotionLabel::Negative => "negative",
            EmotionLabel::Neutral => "neutral",
            EmotionLabel::Mixed => "mixed",
        }
    }
}

impl fmt::Display for EmotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownVariant(pub String);

impl fmt::Display for UnknownVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown value {:?}", self.0)
    }
}

impl std::error::Error for UnknownVariant {}

impl FromStr for EmotionLabel {
    type Err = UnknownVariant;

    /// Case-sensitive: only the lowercase names parse.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| UnknownVariant(s.to_owned()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Client,
    Therapist,
}

impl Speaker {
    pub fn as_str(self) -> &'static str {
        match self {
            Speaker::Client => "client",
            Speaker::Therapist => "therapist",
        }
    }
}

impl FromStr for Speaker {
    type Err = UnknownVariant;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "client" => Ok(Speaker::Client),
            "therapist" => Ok(Speaker::Therapist),
            other => Err(UnknownVariant(other.to_owned())),
        }
    }
}

/// Emotion polarity analysed for coherence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Pos,
    Neg,
}

impl Polarity {
    pub const BOTH: [Polarity; 2] = [Polarity::Pos, Polarity::Neg];

    pub fn label(self) -> EmotionLabel {
        match self {
            Polarity::Pos => EmotionLabel::Positive,
            Polarity::Neg => EmotionLabel::Negative,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Pos => "pos",
            Polarity::Neg => "neg",
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Tolerance on the sum of a probability vector.
pub const SCORE_SUM_TOLERANCE: f64 = 1e-6;

/// Per-label probabilities, serialized as `{"positive": .., "negative": .., ..}`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LabelScores(pub [f64; 4]);

impl LabelScores {
    pub fn get(&self, label: EmotionLabel) -> f64 {
        self.0[label.index()]
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn in_unit_range(&self) -> bool {
        self.0.iter().all(|v| (0.0..=1.0).contains(v))
    }

    pub fn is_normalized(&self) -> bool {
        self.in_unit_range() && (self.sum() - 1.0).abs() <= SCORE_SUM_TOLERANCE
    }

    /// First label (in [`EmotionLabel::ALL`] order) holding the maximum score.
    pub fn argmax(&self) -> EmotionLabel {
        argmax_label(&self.0)
    }
}

/// Argmax over four per-label values; ties go to the earlier label.
pub fn argmax_label<T: PartialOrd + Copy>(values: &[T; 4]) -> EmotionLabel {
    let mut best = 0;
    for i in 1..4 {
        if values[i] > values[best] {
            best = i;
        }
    }
    EmotionLabel::ALL[best]
}

impl Serialize for LabelScores {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = serializer.serialize_map(Some(4))?;
        for label in EmotionLabel::ALL {
            map.serialize_entry(label.as_str(), &self.get(label))?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for LabelScores {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let map = BTreeMap::<EmotionLabel, f64>::deserialize(deserializer)?;
        let mut scores = [0.0; 4];
        for label in EmotionLabel::ALL {
            scores[label.index()] = *map
                .get(&label)
                .ok_or_else(|| serde::de::Error::missing_field(label.as_str()))?;
        }
        Ok(LabelScores(scores))
    }
}

/// One speaker turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub session_id: String,
    pub utterance_index: usize,
    pub speaker: Speaker,
    pub text: String,
    pub gold_label: Option<EmotionLabel>,
    pub predicted_label: Option<EmotionLabel>,
    pub prediction_scores: Option<LabelScores>,
}

impl Utterance {
    pub fn is_client(&self) -> bool {
        self.speaker == Speaker::Client
    }
}

/// Post-session mood self-report, six subscale totals.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PomsReport {
    pub calmness: f64,
    pub contentment: f64,
    pub vigor: f64,
    pub anger: f64,
    pub sad: f64,
    pub anxiety: f64,
}

impl PomsReport {
    pub const SUBSCALES: [&'static str; 6] =
        ["calmness", "contentment", "vigor", "anger", "sad", "anxiety"];

    pub fn values(&self) -> [f64; 6] {
        [
            self.calmness,
            self.contentment,
            self.vigor,
            self.anger,
            self.sad,
            self.anxiety,
        ]
    }

    pub fn from_values(v: [f64; 6]) -> Self {
        Self {
            calmness: v[0],
            contentment: v[1],
            vigor: v[2],
            anger: v[3],
            sad: v[4],
            anxiety: v[5],
        }
    }
}

/// Upper bound of one well-being visual analog scale.
pub const ORS_SCALE_MAX: f64 = 10.0;

/// Pre-session well-being rating: four 0..=10 scales and their total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrsReport {
    pub scales: [f64; 4],
    pub total: f64,
}

impl OrsReport {
    pub fn new(scales: [f64; 4]) -> Self {
        Self {
            scales,
            total: scales.iter().sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub client_id: String,
    pub session_index: u32,
    pub utterances: Vec<Utterance>,
    pub poms: Option<PomsReport>,
    pub ors: Option<OrsReport>,
}

impl SessionRecord {
    pub fn client_utterances(&self) -> impl Iterator<Item = &Utterance> {
        self.utterances.iter().filter(|u| u.is_client())
    }
}

/// Per-label utterance counts of one session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EmotionCounts {
    pub counts: [usize; 4],
    pub total_labeled: usize,
}

impl EmotionCounts {
    pub fn from_labels(labels: impl IntoIterator<Item = EmotionLabel>) -> Self {
        let mut counts = [0; 4];
        for l in labels {
            counts[l.index()] += 1;
        }
        Self {
            counts,
            total_labeled: counts.iter().sum(),
        }
    }

    pub fn get(&self, label: EmotionLabel) -> usize {
        self.counts[label.index()]
    }
}

/// Share of each label among a session's labeled client utterances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmotionProportions<T> {
    pub u_pos: T,
    pub u_neg: T,
    pub u_neu: T,
    pub u_mix: T,
}

impl<T: Real> EmotionProportions<T> {
    /// `None` when nothing is labeled.
    pub fn from_counts(counts: &EmotionCounts) -> Option<Self> {
        if counts.total_labeled == 0 {
            return None;
        }
        let total = T::count(counts.total_labeled);
        let share = |l: EmotionLabel| T::count(counts.get(l)) / total;
        Some(Self {
            u_pos: share(EmotionLabel::Positive),
            u_neg: share(EmotionLabel::Negative),
            u_neu: share(EmotionLabel::Neutral),
            u_mix: share(EmotionLabel::Mixed),
        })
    }

    pub fn get(&self, label: EmotionLabel) -> T {
        match label {
            EmotionLabel::Positive => self.u_pos,
            EmotionLabel::Negative => self.u_neg,
            EmotionLabel::Neutral => self.u_neu,
            EmotionLabel::Mixed => self.u_mix,
        }
    }

    pub fn polarity(&self, polarity: Polarity) -> T {
        self.get(polarity.label())
    }

    pub fn sum(&self) -> T {
        self.u_pos + self.u_neg + self.u_neu + self.u_mix
    }
}

/// Positive and negative mood totals of one self-report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PomsAggregate<T> {
    pub p_pos: T,
    pub p_neg: T,
}

impl<T: Real> PomsAggregate<T> {
    /// `p_pos = calmness + contentment + vigor`, `p_neg = anger + sad + anxiety`,
    /// summed in that order in `f64`.
    pub fn from_report(report: &PomsReport) -> Self {
        let p_pos = report.calmness + report.contentment + report.vigor;
        let p_neg = report.anger + report.sad + report.anxiety;
        Self {
            p_pos: T::lit(p_pos),
            p_neg: T::lit(p_neg),
        }
    }

    pub fn polarity(&self, polarity: Polarity) -> T {
        match polarity {
            Polarity::Pos => self.p_pos,
            Polarity::Neg => self.p_neg,
        }
    }
}

/// Correlation between two emotion channels with its significance verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherenceResult<T> {
    pub r: T,
    pub p_value: T,
    pub n: usize,
    pub significant: bool,
}

impl<T: Real> CoherenceResult<T> {
    pub fn from_correlation(c: Correlation<T>, alpha: f64) -> Self {
        Self {
            r: c.r,
            p_value: c.p_value,
            n: c.n,
            significant: c.p_value < T::lit(alpha),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub alpha: f64,
    pub poms_subscale_max: f64,
    pub min_sessions_per_client: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            poms_subscale_max: 8.0,
            min_sessions_per_client: 3,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.poms_subscale_max.is_finite() && self.poms_subscale_max > 0.0) {
            return Err(format!(
                "poms_subscale_max must be positive, got {}",
                self.poms_subscale_max
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    TherapistLabeled,
    NoncontiguousIndex,
    DuplicateIndex,
    SessionMismatch,
    EmptySession,
    ScoresNotNormalized,
    PredictionNotArgmax,
    ScoresWithoutLabel,
    PomsOutOfRange,
    OrsOutOfRange,
    OrsTotalMismatch,
    DuplicateSessionKey,
}

impl ViolationCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationCode::TherapistLabeled => "THERAPIST_LABELED",
            ViolationCode::NoncontiguousIndex => "NONCONTIGUOUS_INDEX",
            ViolationCode::DuplicateIndex => "DUPLICATE_INDEX",
            ViolationCode::SessionMismatch => "SESSION_MISMATCH",
            ViolationCode::EmptySession => "EMPTY_SESSION",
            ViolationCode::ScoresNotNormalized => "SCORES_NOT_NORMALIZED",
            ViolationCode::PredictionNotArgmax => "PREDICTION_NOT_ARGMAX",
            ViolationCode::ScoresWithoutLabel => "SCORES_WITHOUT_LABEL",
            ViolationCode::PomsOutOfRange => "POMS_OUT_OF_RANGE",
            ViolationCode::OrsOutOfRange => "ORS_OUT_OF_RANGE",
            ViolationCode::OrsTotalMismatch => "ORS_TOTAL_MISMATCH",
            ViolationCode::DuplicateSessionKey => "DUPLICATE_SESSION_KEY",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub session_id: String,
    pub utterance_index: Option<usize>,
    pub code: ViolationCode,
    pub message: String,
}

/// Every invariant violation of a single session. Empty means valid.
pub fn validate_session(record: &SessionRecord, config: &AnalysisConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |utterance_index: Option<usize>, code: ViolationCode, message: String| {
        out.push(Violation {
            session_id: record.session_id.clone(),
            utterance_index,
            code,
            message,
        })
    };

    if record.utterances.is_empty() {
        push(None, ViolationCode::EmptySession, "session has no utterances".into());
    }

    let mut indices: Vec<usize> = record.utterances.iter().map(|u| u.utterance_index).collect();
    indices.sort_unstable();
    for w in indices.windows(2) {
        if w[0] == w[1] {
            push(
                Some(w[0]),
                ViolationCode::DuplicateIndex,
                format!("utterance index {} appears more than once", w[0]),
            );
        }
    }
    indices.dedup();
    if let Some(missing) = (0..indices.len()).find(|i| indices[*i] != *i) {
        push(
            None,
            ViolationCode::NoncontiguousIndex,
            format!("utterance indices are not contiguous from 0; first gap at {missing}"),
        );
    }

    for u in &record.utterances {
        let idx = Some(u.utterance_index);
        if u.session_id != record.session_id {
            push(
                idx,
                ViolationCode::SessionMismatch,
                format!("utterance belongs to session {:?}", u.session_id),
            );
        }
        if u.speaker == Speaker::Therapist
            && (u.gold_label.is_some() || u.predicted_label.is_some() || u.prediction_scores.is_some())
        {
            push(
                idx,
                ViolationCode::TherapistLabeled,
                "therapist utterance carries an emotion label".into(),
            );
        }
        if let Some(scores) = &u.prediction_scores {
            if !scores.is_normalized() {
                push(
                    idx,
                    ViolationCode::ScoresNotNormalized,
                    format!("prediction scores sum to {}", scores.sum()),
                );
            }
            match u.predicted_label {
                None => push(
                    idx,
                    ViolationCode::ScoresWithoutLabel,
                    "prediction scores present without a predicted label".into(),
                ),
                Some(label) if label != scores.argmax() => push(
                    idx,
                    ViolationCode::PredictionNotArgmax,
                    format!("predicted {label} but scores peak at {}", scores.argmax()),
                ),
                Some(_) => {}
            }
        }
    }

    if let Some(poms) = &record.poms {
        for (name, v) in PomsReport::SUBSCALES.iter().zip(poms.values()) {
            if !(v >= 0.0 && v <= config.poms_subscale_max) {
                push(
                    None,
                    ViolationCode::PomsOutOfRange,
                    format!("POMS {name} = {v} outside [0, {}]", config.poms_subscale_max),
                );
            }
        }
    }

    if let Some(ors) = &record.ors {
        for (i, v) in ors.scales.iter().enumerate() {
            if !(*v >= 0.0 && *v <= ORS_SCALE_MAX) {
                push(
                    None,
                    ViolationCode::OrsOutOfRange,
                    format!("ORS scale {} = {v} outside [0, {ORS_SCALE_MAX}]", i + 1),
                );
            }
        }
        let sum: f64 = ors.scales.iter().sum();
        if !((ors.total - sum).abs() <= 1e-9) {
            push(
                None,
                ViolationCode::OrsTotalMismatch,
                format!("ORS total {} differs from scale sum {sum}", ors.total),
            );
        }
    }

    out
}

/// Per-session validation plus corpus-wide key uniqueness.
pub fn validate_corpus(sessions: &[SessionRecord], config: &AnalysisConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen: BTreeMap<(&str, u32), &str> = BTreeMap::new();
    for s in sessions {
        out.extend(validate_session(s, config));
        if let Some(first) = seen.insert((s.client_id.as_str(), s.session_index), &s.session_id) {
            out.push(Violation {
                session_id: s.session_id.clone(),
                utterance_index: None,
                code: ViolationCode::DuplicateSessionKey,
                message: format!(
                    "client {} session index {} also used by session {first}",
                    s.client_id, s.session_index
                ),
            });
        }
    }
    out
}
