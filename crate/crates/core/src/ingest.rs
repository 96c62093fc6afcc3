//! Reading and writing the interchange files.
//!
//! * `transcripts.jsonl`, one utterance per line.
//! * `self_reports.csv`, one row per session with POMS subscales and ORS scales.
//! * `predictions.jsonl`, one predicted label per client utterance.
//!
//! Loading is order-insensitive: sessions are keyed by `session_id` and
//! utterances sorted by `utterance_index`, so any permutation of input lines
//! produces the same bundle.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{
    AnalysisConfig, EmotionLabel, LabelScores, OrsReport, PomsReport, SessionRecord, Speaker,
    Utterance, ORS_SCALE_MAX,
};

pub const SELF_REPORT_HEADER: [&str; 13] = [
    "session_id",
    "client_id",
    "session_index",
    "poms_calmness",
    "poms_contentment",
    "poms_vigor",
    "poms_anger",
    "poms_sad",
    "poms_anxiety",
    "ors_1",
    "ors_2",
    "ors_3",
    "ors_4",
];

const TRANSCRIPT_FIELDS: [&str; 7] = [
    "session_id",
    "client_id",
    "session_index",
    "utterance_index",
    "speaker",
    "text",
    "gold_label",
];

const PREDICTION_FIELDS: [&str; 4] = ["session_id", "utterance_index", "label", "scores"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("IO: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("MALFORMED_LINE: line {line}: {detail}")]
    MalformedLine { line: usize, detail: String },
    #[error("SCHEMA_VIOLATION: line {line}, field `{field}`: {detail}")]
    SchemaViolation {
        line: usize,
        field: String,
        detail: String,
    },
    #[error("DUPLICATE_UTTERANCE: session {session_id} utterance {index}")]
    DuplicateUtterance { session_id: String, index: usize },
    #[error("INCONSISTENT_SESSION: line {line}: session {session_id} has conflicting `{field}`")]
    InconsistentSession {
        line: usize,
        session_id: String,
        field: &'static str,
    },
    #[error("UNKNOWN_SESSION: row {row}: no transcript for session {session_id}")]
    UnknownSession { row: usize, session_id: String },
    #[error("DUPLICATE_REPORT: row {row}: session {session_id} already has a self-report")]
    DuplicateReport { row: usize, session_id: String },
    #[error("REPORT_MISMATCH: row {row}: `{field}` disagrees with the transcript of session {session_id}")]
    ReportMismatch {
        row: usize,
        session_id: String,
        field: &'static str,
    },
    #[error("RANGE_VIOLATION: row {row}, field `{field}`: {value} out of range")]
    RangeViolation {
        row: usize,
        field: String,
        value: f64,
    },
    #[error("UNKNOWN_UTTERANCE: row {row}: session {session_id} has no utterance {index}")]
    UnknownUtterance {
        row: usize,
        session_id: String,
        index: usize,
    },
    #[error("TARGETS_THERAPIST: row {row}: session {session_id} utterance {index} is a therapist turn")]
    TargetsTherapist {
        row: usize,
        session_id: String,
        index: usize,
    },
    #[error("SCORES_NOT_NORMALIZED: row {row}: scores sum to {sum}")]
    ScoresNotNormalized { row: usize, sum: f64 },
    #[error("LABEL_NOT_ARGMAX: row {row}: label {label} but scores peak at {argmax}")]
    LabelNotArgmax {
        row: usize,
        label: EmotionLabel,
        argmax: EmotionLabel,
    },
    #[error("DUPLICATE_PREDICTION: row {row}: session {session_id} utterance {index} predicted twice")]
    DuplicatePrediction {
        row: usize,
        session_id: String,
        index: usize,
    },
}

impl IngestError {
    pub fn code(&self) -> &'static str {
        match self {
            IngestError::Io { .. } => "IO",
            IngestError::MalformedLine { .. } => "MALFORMED_LINE",
            IngestError::SchemaViolation { .. } => "SCHEMA_VIOLATION",
            IngestError::DuplicateUtterance { .. } => "DUPLICATE_UTTERANCE",
            IngestError::InconsistentSession { .. } => "INCONSISTENT_SESSION",
            IngestError::UnknownSession { .. } => "UNKNOWN_SESSION",
            IngestError::DuplicateReport { .. } => "DUPLICATE_REPORT",
            IngestError::ReportMismatch { .. } => "REPORT_MISMATCH",
            IngestError::RangeViolation { .. } => "RANGE_VIOLATION",
            IngestError::UnknownUtterance { .. } => "UNKNOWN_UTTERANCE",
            IngestError::TargetsTherapist { .. } => "TARGETS_THERAPIST",
            IngestError::ScoresNotNormalized { .. } => "SCORES_NOT_NORMALIZED",
            IngestError::LabelNotArgmax { .. } => "LABEL_NOT_ARGMAX",
            IngestError::DuplicatePrediction { .. } => "DUPLICATE_PREDICTION",
        }
    }
}

/// An input file as consumed: where it came from and what it contained.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceFile {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

impl SourceFile {
    pub fn file_name(&self) -> String {
        Path::new(&self.path)
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.path.clone())
    }
}

/// Sessions assembled from the interchange files.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CorpusBundle {
    /// Sorted by `session_id`.
    pub sessions: Vec<SessionRecord>,
    pub source_manifest: Vec<SourceFile>,
    pub warnings: Vec<String>,
}

impl CorpusBundle {
    pub fn from_sessions(mut sessions: Vec<SessionRecord>) -> Self {
        sessions.sort_by(|a, b| a.session_id.cmp(&b.session_id));
        for s in &mut sessions {
            s.utterances.sort_by_key(|u| u.utterance_index);
        }
        Self {
            sessions,
            ..Default::default()
        }
    }

    pub fn session(&self, session_id: &str) -> Option<&SessionRecord> {
        self.sessions
            .binary_search_by(|s| s.session_id.as_str().cmp(session_id))
            .ok()
            .map(|i| &self.sessions[i])
    }

    fn session_mut(&mut self, session_id: &str) -> Option<&mut SessionRecord> {
        self.sessions
            .binary_search_by(|s| s.session_id.as_str().cmp(session_id))
            .ok()
            .map(move |i| &mut self.sessions[i])
    }

    /// SHA-256 over the canonical interchange serialization of the sessions.
    pub fn canonical_hash(&self) -> String {
        let mut buf = Vec::new();
        write_transcripts(&self.sessions, &mut buf).expect("in-memory write");
        write_self_reports(&self.sessions, &mut buf).expect("in-memory write");
        write_predictions(&self.sessions, &mut buf).expect("in-memory write");
        sha256_hex(&buf)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn read_file(path: &Path, role: &str) -> Result<(Vec<u8>, SourceFile), IngestError> {
    let bytes = fs::read(path).map_err(|source| IngestError::Io {
        path: path.to_owned(),
        source,
    })?;
    let source = SourceFile {
        role: role.to_owned(),
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    };
    Ok((bytes, source))
}

/// Counts unknown fields so warnings do not depend on line order.
#[derive(Default)]
struct UnknownFields(BTreeMap<String, usize>);

impl UnknownFields {
    fn note(&mut self, obj: &Map<String, Value>, known: &[&str]) {
        for key in obj.keys() {
            if !known.contains(&key.as_str()) {
                *self.0.entry(key.clone()).or_default() += 1;
            }
        }
    }

    fn into_warnings(self, file: &str) -> Vec<String> {
        self.0
            .into_iter()
            .map(|(k, n)| format!("{file}: unknown field `{k}` ignored ({n} occurrences)"))
            .collect()
    }
}

fn schema(line: usize, field: &str, detail: impl Into<String>) -> IngestError {
    IngestError::SchemaViolation {
        line,
        field: field.to_owned(),
        detail: detail.into(),
    }
}

fn parse_object(line_no: usize, line: &str) -> Result<Map<String, Value>, IngestError> {
    let value: Value = serde_json::from_str(line).map_err(|e| IngestError::MalformedLine {
        line: line_no,
        detail: e.to_string(),
    })?;
    match value {
        Value::Object(map) => Ok(map),
        other => Err(schema(line_no, "<line>", format!("expected an object, found {other}"))),
    }
}

fn get_str<'a>(obj: &'a Map<String, Value>, line: usize, field: &str) -> Result<&'a str, IngestError> {
    match obj.get(field) {
        Some(Value::String(s)) => Ok(s),
        Some(other) => Err(schema(line, field, format!("expected a string, found {other}"))),
        None => Err(schema(line, field, "missing")),
    }
}

fn get_index(obj: &Map<String, Value>, line: usize, field: &str) -> Result<u64, IngestError> {
    match obj.get(field) {
        Some(Value::Number(n)) => n
            .as_u64()
            .ok_or_else(|| schema(line, field, format!("expected a nonnegative integer, found {n}"))),
        Some(other) => Err(schema(line, field, format!("expected an integer, found {other}"))),
        None => Err(schema(line, field, "missing")),
    }
}

fn get_label(obj: &Map<String, Value>, line: usize, field: &str) -> Result<Option<EmotionLabel>, IngestError> {
    match obj.get(field) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => s
            .parse::<EmotionLabel>()
            .map(Some)
            .map_err(|e| schema(line, field, e.to_string())),
        Some(other) => Err(schema(line, field, format!("expected a label string, found {other}"))),
    }
}

fn non_blank_lines(bytes: &[u8]) -> Result<Vec<(usize, &str)>, IngestError> {
    let text = std::str::from_utf8(bytes).map_err(|e| IngestError::MalformedLine {
        line: 1 + bytes[..e.valid_up_to()].iter().filter(|b| **b == b'\n').count(),
        detail: "invalid UTF-8".into(),
    })?;
    Ok(text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
        .collect())
}

/// Reads a transcripts file into a fresh bundle.
pub fn load_transcripts(path: &Path) -> Result<CorpusBundle, IngestError> {
    let (bytes, source) = read_file(path, "transcripts")?;
    let mut bundle = parse_transcripts(&bytes)?;
    bundle.source_manifest.push(source);
    Ok(bundle)
}

/// Parses transcript JSONL bytes.
pub fn parse_transcripts(bytes: &[u8]) -> Result<CorpusBundle, IngestError> {
    let mut sessions: BTreeMap<String, SessionRecord> = BTreeMap::new();
    let mut unknown = UnknownFields::default();

    for (line_no, line) in non_blank_lines(bytes)? {
        let obj = parse_object(line_no, line)?;
        unknown.note(&obj, &TRANSCRIPT_FIELDS);

        let session_id = get_str(&obj, line_no, "session_id")?.to_owned();
        let client_id = get_str(&obj, line_no, "client_id")?.to_owned();
        let session_index = u32::try_from(get_index(&obj, line_no, "session_index")?)
            .map_err(|_| schema(line_no, "session_index", "out of range"))?;
        let utterance_index = usize::try_from(get_index(&obj, line_no, "utterance_index")?)
            .map_err(|_| schema(line_no, "utterance_index", "out of range"))?;
        let speaker: Speaker = get_str(&obj, line_no, "speaker")?
            .parse()
            .map_err(|e: crate::model::UnknownVariant| schema(line_no, "speaker", e.to_string()))?;
        let text = get_str(&obj, line_no, "text")?.to_owned();
        let gold_label = get_label(&obj, line_no, "gold_label")?;

        let record = sessions.entry(session_id.clone()).or_insert_with(|| SessionRecord {
            session_id: session_id.clone(),
            client_id: client_id.clone(),
            session_index,
            utterances: Vec::new(),
            poms: None,
            ors: None,
        });
        if record.client_id != client_id {
            return Err(IngestError::InconsistentSession {
                line: line_no,
                session_id,
                field: "client_id",
            });
        }
        if record.session_index != session_index {
            return Err(IngestError::InconsistentSession {
                line: line_no,
                session_id,
                field: "session_index",
            });
        }
        record.utterances.push(Utterance {
            session_id,
            utterance_index,
            speaker,
            text,
            gold_label,
            predicted_label: None,
            prediction_scores: None,
        });
    }

    let mut out = Vec::with_capacity(sessions.len());
    for (_, mut s) in sessions {
        s.utterances.sort_by_key(|u| u.utterance_index);
        if let Some(w) = s.utterances.windows(2).find(|w| w[0].utterance_index == w[1].utterance_index) {
            return Err(IngestError::DuplicateUtterance {
                session_id: s.session_id.clone(),
                index: w[0].utterance_index,
            });
        }
        out.push(s);
    }

    Ok(CorpusBundle {
        sessions: out,
        source_manifest: Vec::new(),
        warnings: unknown.into_warnings("transcripts"),
    })
}

/// Attaches self-reports from a CSV file.
pub fn load_self_reports(
    path: &Path,
    mut bundle: CorpusBundle,
    config: &AnalysisConfig,
) -> Result<CorpusBundle, IngestError> {
    let (bytes, source) = read_file(path, "self_reports")?;
    apply_self_reports(&bytes, &mut bundle, config)?;
    bundle.source_manifest.push(source);
    Ok(bundle)
}

fn parse_cell(row: usize, field: &str, cell: &str) -> Result<Option<f64>, IngestError> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    cell.parse::<f64>()
        .map(Some)
        .map_err(|_| schema(row, field, format!("expected a number, found {cell:?}")))
}

/// Parses six or four cells that must be all present or all empty.
fn parse_group<const N: usize>(
    row: usize,
    record: &csv::StringRecord,
    offset: usize,
    group: &str,
) -> Result<Option<[f64; N]>, IngestError> {
    let mut values = [0.0; N];
    let mut present = 0;
    for i in 0..N {
        let field = SELF_REPORT_HEADER[offset + i];
        if let Some(v) = parse_cell(row, field, &record[offset + i])? {
            values[i] = v;
            present += 1;
        }
    }
    match present {
        0 => Ok(None),
        p if p == N => Ok(Some(values)),
        _ => Err(schema(row, group, "partially filled; give all cells or none")),
    }
}

pub fn apply_self_reports(
    bytes: &[u8],
    bundle: &mut CorpusBundle,
    config: &AnalysisConfig,
) -> Result<(), IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(bytes);
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| IngestError::MalformedLine {
            line: 1,
            detail: e.to_string(),
        })?,
        None => return Err(schema(1, "<header>", "empty file")),
    };
    if header.iter().ne(SELF_REPORT_HEADER.iter().copied()) {
        return Err(schema(
            1,
            "<header>",
            format!("expected `{}`", SELF_REPORT_HEADER.join(",")),
        ));
    }

    let mut seen = BTreeSet::new();
    for record in records {
        let record = record.map_err(|e| IngestError::MalformedLine {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            detail: e.to_string(),
        })?;
        let row = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != SELF_REPORT_HEADER.len() {
            return Err(schema(
                row,
                "<row>",
                format!("expected {} cells, found {}", SELF_REPORT_HEADER.len(), record.len()),
            ));
        }
        let session_id = record[0].to_owned();
        let client_id = &record[1];
        let session_index: u32 = record[2]
            .trim()
            .parse()
            .map_err(|_| schema(row, "session_index", "expected a nonnegative integer"))?;

        let poms = parse_group::<6>(row, &record, 3, "poms")?;
        let ors = parse_group::<4>(row, &record, 9, "ors")?;

        if let Some(values) = &poms {
            for (i, v) in values.iter().enumerate() {
                if !(*v >= 0.0 && *v <= config.poms_subscale_max) {
                    return Err(IngestError::RangeViolation {
                        row,
                        field: SELF_REPORT_HEADER[3 + i].to_owned(),
                        value: *v,
                    });
                }
            }
        }
        if let Some(values) = &ors {
            for (i, v) in values.iter().enumerate() {
                if !(*v >= 0.0 && *v <= ORS_SCALE_MAX) {
                    return Err(IngestError::RangeViolation {
                        row,
                        field: SELF_REPORT_HEADER[9 + i].to_owned(),
                        value: *v,
                    });
                }
            }
        }

        if !seen.insert(session_id.clone()) {
            return Err(IngestError::DuplicateReport { row, session_id });
        }
        let Some(session) = bundle.session_mut(&session_id) else {
            return Err(IngestError::UnknownSession { row, session_id });
        };
        if session.client_id != client_id {
            return Err(IngestError::ReportMismatch {
                row,
                session_id,
                field: "client_id",
            });
        }
        if session.session_index != session_index {
            return Err(IngestError::ReportMismatch {
                row,
                session_id,
                field: "session_index",
            });
        }
        session.poms = poms.map(PomsReport::from_values);
        session.ors = ors.map(OrsReport::new);
    }
    Ok(())
}

/// Attaches externally produced predictions.
pub fn load_predictions(path: &Path, mut bundle: CorpusBundle) -> Result<CorpusBundle, IngestError> {
    let (bytes, source) = read_file(path, "predictions")?;
    apply_predictions(&bytes, &mut bundle)?;
    bundle.source_manifest.push(source);
    Ok(bundle)
}

fn parse_scores(obj: &Map<String, Value>, line: usize) -> Result<Option<LabelScores>, IngestError> {
    let map = match obj.get("scores") {
        None | Some(Value::Null) => return Ok(None),
        Some(Value::Object(m)) => m,
        Some(other) => return Err(schema(line, "scores", format!("expected an object, found {other}"))),
    };
    let mut scores = [0.0; 4];
    for (key, value) in map {
        let label: EmotionLabel = key
            .parse()
            .map_err(|e: crate::model::UnknownVariant| schema(line, "scores", e.to_string()))?;
        scores[label.index()] = value
            .as_f64()
            .ok_or_else(|| schema(line, "scores", format!("score for {key} is not a number")))?;
    }
    if let Some(missing) = EmotionLabel::ALL.iter().find(|l| !map.contains_key(l.as_str())) {
        return Err(schema(line, "scores", format!("missing score for {missing}")));
    }
    Ok(Some(LabelScores(scores)))
}

pub fn apply_predictions(bytes: &[u8], bundle: &mut CorpusBundle) -> Result<(), IngestError> {
    let mut unknown = UnknownFields::default();
    let mut seen = BTreeSet::new();
    for (row, line) in non_blank_lines(bytes)? {
        let obj = parse_object(row, line)?;
        unknown.note(&obj, &PREDICTION_FIELDS);
        let session_id = get_str(&obj, row, "session_id")?.to_owned();
        let index = usize::try_from(get_index(&obj, row, "utterance_index")?)
            .map_err(|_| schema(row, "utterance_index", "out of range"))?;
        let label = get_label(&obj, row, "label")?.ok_or_else(|| schema(row, "label", "missing"))?;
        let scores = parse_scores(&obj, row)?;

        if let Some(s) = &scores {
            if !s.is_normalized() {
                return Err(IngestError::ScoresNotNormalized { row, sum: s.sum() });
            }
            if s.argmax() != label {
                return Err(IngestError::LabelNotArgmax {
                    row,
                    label,
                    argmax: s.argmax(),
                });
            }
        }

        let utterance = bundle
            .session_mut(&session_id)
            .and_then(|s| s.utterances.iter_mut().find(|u| u.utterance_index == index))
            .ok_or_else(|| IngestError::UnknownUtterance {
                row,
                session_id: session_id.clone(),
                index,
            })?;
        if utterance.speaker == Speaker::Therapist {
            return Err(IngestError::TargetsTherapist {
                row,
                session_id,
                index,
            });
        }
        if !seen.insert((session_id.clone(), index)) {
            return Err(IngestError::DuplicatePrediction {
                row,
                session_id,
                index,
            });
        }
        utterance.predicted_label = Some(label);
        utterance.prediction_scores = scores;
    }
    bundle.warnings.extend(unknown.into_warnings("predictions"));
    Ok(())
}

#[derive(Serialize)]
struct TranscriptLine<'a> {
    session_id: &'a str,
    client_id: &'a str,
    session_index: u32,
    utterance_index: usize,
    speaker: Speaker,
    text: &'a str,
    gold_label: Option<EmotionLabel>,
}

#[derive(Serialize)]
struct PredictionLine<'a> {
    session_id: &'a str,
    utterance_index: usize,
    label: EmotionLabel,
    #[serde(skip_serializing_if = "Option::is_none")]
    scores: Option<LabelScores>,
}

fn json_line<W: Write, T: Serialize>(out: &mut W, value: &T) -> io::Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")
}

pub fn write_transcripts<W: Write>(sessions: &[SessionRecord], mut out: W) -> io::Result<()> {
    for s in sessions {
        for u in &s.utterances {
            json_line(
                &mut out,
                &TranscriptLine {
                    session_id: &s.session_id,
                    client_id: &s.client_id,
                    session_index: s.session_index,
                    utterance_index: u.utterance_index,
                    speaker: u.speaker,
                    text: &u.text,
                    gold_label: u.gold_label,
                },
            )?;
        }
    }
    Ok(())
}

/// Writes the client utterances that carry a predicted label.
pub fn write_predictions<W: Write>(sessions: &[SessionRecord], mut out: W) -> io::Result<()> {
    for s in sessions {
        for u in s.client_utterances() {
            if let Some(label) = u.predicted_label {
                json_line(
                    &mut out,
                    &PredictionLine {
                        session_id: &s.session_id,
                        utterance_index: u.utterance_index,
                        label,
                        scores: u.prediction_scores,
                    },
                )?;
            }
        }
    }
    Ok(())
}

/// Writes one row per session that has a POMS or ORS report.
pub fn write_self_reports<W: Write>(sessions: &[SessionRecord], out: W) -> io::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(SELF_REPORT_HEADER)?;
    for s in sessions.iter().filter(|s| s.poms.is_some() || s.ors.is_some()) {
        let mut row = vec![s.session_id.clone(), s.client_id.clone(), s.session_index.to_string()];
        match &s.poms {
            Some(p) => row.extend(p.values().iter().map(|v| v.to_string())),
            None => row.extend(std::iter::repeat_n(String::new(), 6)),
        }
        match &s.ors {
            Some(o) => row.extend(o.scales.iter().map(|v| v.to_string())),
            None => row.extend(std::iter::repeat_n(String::new(), 4)),
        }
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}
