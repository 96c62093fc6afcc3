//! Emotional-coherence analytics for therapy dialogue.
//!
//! Transcripts with per-utterance emotion labels are paired with session
//! self-reports (POMS mood subscales and ORS well-being scales). The crate
//! loads and validates those inputs, labels client utterances, evaluates
//! labelers by session-level cross-validation, and computes session-wide and
//! per-client Pearson correlations between label shares and mood totals.
//!
//! The numeric code is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which is what the reports and the CLI use.

pub mod coherence;
pub mod eval;
pub mod ingest;
pub mod labeling;
pub mod model;
pub mod num;
pub mod stats;
pub mod synth;

pub use num::Real;

use thiserror::Error;

pub type Proportions = model::EmotionProportions<f64>;
pub type PomsTotals = model::PomsAggregate<f64>;
pub type Coherence = model::CoherenceResult<f64>;
pub type Correlation = stats::Correlation<f64>;
pub type Features = coherence::SessionFeatures<f64>;
pub type FeatureSet = coherence::FeatureSet<f64>;
pub type ClientSummary = coherence::ClientSummary<f64>;
pub type ClientAnalysis = coherence::ClientAnalysis<f64>;

pub type Proportions32 = model::EmotionProportions<f32>;
pub type Coherence32 = model::CoherenceResult<f32>;
pub type Features32 = coherence::SessionFeatures<f32>;

/// Broad failure class, used by the CLI to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad or inconsistent input.
    Data,
    /// A numerical routine failed on valid input.
    Numerics,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Ingest(#[from] ingest::IngestError),
    #[error(transparent)]
    Labeling(#[from] labeling::LabelingError),
    #[error(transparent)]
    Eval(#[from] eval::EvalError),
    #[error(transparent)]
    Stats(#[from] stats::StatsError),
    #[error(transparent)]
    Coherence(#[from] coherence::CoherenceError),
    #[error(transparent)]
    Synth(#[from] synth::SynthError),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::Ingest(e) => e.code(),
            Error::Labeling(e) => e.code(),
            Error::Eval(e) => e.code(),
            Error::Stats(e) => e.code(),
            Error::Coherence(e) => e.code(),
            Error::Synth(e) => e.code(),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Stats(e) | Error::Coherence(coherence::CoherenceError::Stats(e)) if e.is_numerical() => {
                ErrorClass::Numerics
            }
            _ => ErrorClass::Data,
        }
    }
}
