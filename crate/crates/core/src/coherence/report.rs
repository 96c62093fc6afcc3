//! Report documents for the two coherence analyses, as JSON and as text tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{
    client_summaries, coherence_ors_association, sessionwide_coherence, ClientExclusion,
    DropReason, DroppedSession, FeatureSet,
};
use crate::ingest::SourceFile;
use crate::model::{AnalysisConfig, CoherenceResult, Polarity};

/// Interpretation notes carried in every coherence and association report.
pub const REPORT_NOTES: [&str; 3] = [
    "Per-client coherence is one Pearson correlation over the client's sessions; averaging that single value per client is the identity.",
    "Well-being is the total ORS (sum of the four scales) averaged over each client's analysed sessions; the same series is correlated against positive and negative coherence.",
    "Sessions without a POMS report or without labeled client utterances are dropped, not imputed; see the dropped-session counts.",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputRef {
    pub role: String,
    pub file: String,
    pub sha256: String,
}

impl From<&SourceFile> for InputRef {
    fn from(s: &SourceFile) -> Self {
        Self {
            role: s.role.clone(),
            file: s.file_name(),
            sha256: s.sha256.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceRow {
    pub polarity: Polarity,
    pub pair: String,
    pub n: usize,
    pub r: Option<f64>,
    pub p_value: Option<f64>,
    pub significant: Option<bool>,
    pub error: Option<String>,
}

impl CoherenceRow {
    fn new(polarity: Polarity, pair: String, n: usize, result: Result<CoherenceResult<f64>, String>) -> Self {
        match result {
            Ok(c) => Self {
                polarity,
                pair,
                n: c.n,
                r: Some(c.r),
                p_value: Some(c.p_value),
                significant: Some(c.significant),
                error: None,
            },
            Err(e) => Self {
                polarity,
                pair,
                n,
                r: None,
                p_value: None,
                significant: None,
                error: Some(e),
            },
        }
    }
}

/// Session-wide correlation between POMS totals and utterance label shares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport {
    pub kind: String,
    pub manifest: String,
    pub label_source: String,
    pub alpha: f64,
    pub inputs: Vec<InputRef>,
    pub n_sessions_total: usize,
    pub n_sessions_analysed: usize,
    pub n_dropped_no_poms: usize,
    pub n_dropped_no_labels: usize,
    pub dropped_sessions: Vec<DroppedSession>,
    pub rows: Vec<CoherenceRow>,
    pub notes: Vec<String>,
}

pub fn coherence_report(
    features: &FeatureSet<f64>,
    config: &AnalysisConfig,
    label_source: &str,
    inputs: &[SourceFile],
) -> CoherenceReport {
    let rows = Polarity::BOTH
        .iter()
        .map(|&p| {
            CoherenceRow::new(
                p,
                format!("(P_{p}, U_{p})"),
                features.features.len(),
                sessionwide_coherence(&features.features, p, config.alpha).map_err(|e| e.to_string()),
            )
        })
        .collect();
    CoherenceReport {
        kind: "session_coherence".into(),
        manifest: "manifest.json".into(),
        label_source: label_source.into(),
        alpha: config.alpha,
        inputs: inputs.iter().map(InputRef::from).collect(),
        n_sessions_total: features.features.len() + features.dropped.len(),
        n_sessions_analysed: features.features.len(),
        n_dropped_no_poms: features.dropped_count(DropReason::NoPoms),
        n_dropped_no_labels: features.dropped_count(DropReason::NoLabeledUtterances),
        dropped_sessions: features.dropped.clone(),
        rows,
        notes: REPORT_NOTES.iter().map(|s| s.to_string()).collect(),
    }
}

fn fmt_opt(v: Option<f64>, f: impl Fn(f64) -> String) -> String {
    v.map(f).unwrap_or_else(|| "-".into())
}

fn render_rows(out: &mut String, head: &str, rows: &[CoherenceRow]) {
    let _ = writeln!(out, "{head:<28} {:>5} {:>8} {:>10} {:>4}", "n", "r", "p", "sig");
    for row in rows {
        let sig = match row.significant {
            Some(true) => "*",
            Some(false) => "",
            None => "-",
        };
        let _ = writeln!(
            out,
            "{:<28} {:>5} {:>8} {:>10} {:>4}",
            row.pair,
            row.n,
            fmt_opt(row.r, |v| format!("{v:.4}")),
            fmt_opt(row.p_value, |v| format!("{v:.2e}")),
            sig
        );
        if let Some(e) = &row.error {
            let _ = writeln!(out, "  error: {e}");
        }
    }
}

impl CoherenceReport {
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "Session-wide correlation between POMS and utterance emotion labels (labels: {}, alpha = {})",
            self.label_source, self.alpha
        );
        render_rows(&mut out, "pair", &self.rows);
        let _ = writeln!(
            out,
            "sessions analysed: {} of {} (dropped: {} without POMS, {} without labels)",
            self.n_sessions_analysed, self.n_sessions_total, self.n_dropped_no_poms, self.n_dropped_no_labels
        );
        for note in &self.notes {
            let _ = writeln!(out, "note: {note}");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientRow {
    pub client_id: String,
    pub n_sessions: usize,
    pub coherence_pos_r: Option<f64>,
    pub coherence_pos_p: Option<f64>,
    pub coherence_neg_r: Option<f64>,
    pub coherence_neg_p: Option<f64>,
    pub mean_ors: Option<f64>,
}

pub type AssociationRow = CoherenceRow;

/// Client-level correlation between coherence and well-being.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationReport {
    pub kind: String,
    pub manifest: String,
    pub label_source: String,
    pub alpha: f64,
    pub min_sessions_per_client: usize,
    pub inputs: Vec<InputRef>,
    pub n_sessions_analysed: usize,
    pub n_dropped_no_poms: usize,
    pub n_dropped_no_labels: usize,
    pub n_clients_total: usize,
    pub clients: Vec<ClientRow>,
    pub exclusions: Vec<ClientExclusion>,
    pub rows: Vec<AssociationRow>,
    pub notes: Vec<String>,
}

pub fn association_report(
    features: &FeatureSet<f64>,
    config: &AnalysisConfig,
    label_source: &str,
    inputs: &[SourceFile],
) -> AssociationReport {
    let analysis = client_summaries(&features.features, config);
    let mut all_clients: Vec<&str> = features.features.iter().map(|f| f.client_id.as_str()).collect();
    all_clients.sort_unstable();
    all_clients.dedup();

    let rows = Polarity::BOTH
        .iter()
        .map(|&p| {
            let usable = analysis
                .summaries
                .iter()
                .filter(|s| s.coherence(p).is_some() && s.mean_ors.is_some())
                .count();
            CoherenceRow::new(
                p,
                format!("(Cohr(U_{p}, P_{p}), ORS)"),
                usable,
                coherence_ors_association(&analysis.summaries, p, config.alpha).map_err(|e| e.to_string()),
            )
        })
        .collect();
    let clients = analysis
        .summaries
        .iter()
        .map(|s| ClientRow {
            client_id: s.client_id.clone(),
            n_sessions: s.n_sessions,
            coherence_pos_r: s.coherence_pos.map(|c| c.r),
            coherence_pos_p: s.coherence_pos.map(|c| c.p_value),
            coherence_neg_r: s.coherence_neg.map(|c| c.r),
            coherence_neg_p: s.coherence_neg.map(|c| c.p_value),
            mean_ors: s.mean_ors,
        })
        .collect();
    AssociationReport {
        kind: "coherence_ors_association".into(),
        manifest: "manifest.json".into(),
        label_source: label_source.into(),
        alpha: config.alpha,
        min_sessions_per_client: config.min_sessions_per_client,
        inputs: inputs.iter().map(InputRef::from).collect(),
        n_sessions_analysed: features.features.len(),
        n_dropped_no_poms: features.dropped_count(DropReason::NoPoms),
        n_dropped_no_labels: features.dropped_count(DropReason::NoLabeledUtterances),
        n_clients_total: all_clients.len(),
        clients,
        exclusions: analysis.exclusions,
        rows,
        notes: REPORT_NOTES.iter().map(|s| s.to_string()).collect(),
    }
}

impl AssociationReport {
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "Client-level correlation between emotional coherence and ORS (labels: {}, alpha = {})",
            self.label_source, self.alpha
        );
        render_rows(&mut out, "pair", &self.rows);
        let _ = writeln!(
            out,
            "clients: {} with coherence of {} (minimum {} sessions each); exclusions: {}",
            self.clients.len(),
            self.n_clients_total,
            self.min_sessions_per_client,
            self.exclusions.len()
        );
        for e in &self.exclusions {
            let scope = e.polarity.map(|p| p.as_str()).unwrap_or("both");
            let _ = writeln!(out, "  excluded {} ({scope}): {:?} {}", e.client_id, e.reason, e.detail);
        }
        let _ = writeln!(
            out,
            "{:<12} {:>5} {:>8} {:>8} {:>8}",
            "client", "n", "cohr_pos", "cohr_neg", "mean_ors"
        );
        for c in &self.clients {
            let _ = writeln!(
                out,
                "{:<12} {:>5} {:>8} {:>8} {:>8}",
                c.client_id,
                c.n_sessions,
                fmt_opt(c.coherence_pos_r, |v| format!("{v:.4}")),
                fmt_opt(c.coherence_neg_r, |v| format!("{v:.4}")),
                fmt_opt(c.mean_ors, |v| format!("{v:.2}")),
            );
        }
        for note in &self.notes {
            let _ = writeln!(out, "note: {note}");
        }
        out
    }
}
