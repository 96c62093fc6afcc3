//! Session-level k-fold cross-validation with a per-fold dev split,
//! micro-F1 and confusion matrices.
//!
//! `EvalReport` JSON fields:
//! `labeler`, `k`, `seed`, `dev_fraction`, `balance_ratio`, `labels`,
//! `folds[]` (`index`, `n_train_sessions`, `n_dev_sessions`,
//! `n_test_sessions`, `n_train_examples`, `n_test_utterances`, `micro_f1`,
//! `selected_smoothing`, `dev_micro_f1`, `confusion`), `mean_micro_f1`,
//! `std_micro_f1`, `pooled_micro_f1`, `pooled_confusion`.
//! Confusion matrices are 4x4, rows = gold, columns = predicted, both in
//! `labels` order.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::Command;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{self, CorpusBundle, IngestError};
use crate::labeling::{
    balance_classes, has_complete_gold, train_baseline, training_examples, BaselineConfig,
    BaselineModel, LabelingError, TrainingExample,
};
use crate::model::{EmotionLabel, SessionRecord, Speaker, Utterance};

pub const DEFAULT_SMOOTHING_GRID: [f64; 4] = [0.1, 0.5, 1.0, 2.0];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("TOO_FEW_SESSIONS: {n} sessions cannot form {k} folds (k must be at least 2 and at most the session count)")]
    TooFewSessions { n: usize, k: usize },
    #[error("INVALID_DEV_FRACTION: {0} not in [0, 1)")]
    InvalidDevFraction(f64),
    #[error("EMPTY_INPUT: no prediction pairs")]
    EmptyInput,
    #[error("INCOMPLETE_GOLD: session {0} has unlabeled client utterances")]
    IncompleteGold(String),
    #[error("UNKNOWN_SESSION: fold plan references session {0}")]
    UnknownSession(String),
    #[error("DUPLICATE_SESSION: session {0} listed twice")]
    DuplicateSession(String),
    #[error("fold {index} failed: {source}")]
    Fold {
        index: usize,
        #[source]
        source: Box<EvalError>,
    },
    #[error(transparent)]
    Labeling(#[from] LabelingError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("ADAPTER: {0}")]
    Adapter(String),
}

impl EvalError {
    pub fn code(&self) -> &'static str {
        match self {
            EvalError::TooFewSessions { .. } => "TOO_FEW_SESSIONS",
            EvalError::InvalidDevFraction(_) => "INVALID_DEV_FRACTION",
            EvalError::EmptyInput => "EMPTY_INPUT",
            EvalError::IncompleteGold(_) => "INCOMPLETE_GOLD",
            EvalError::UnknownSession(_) => "UNKNOWN_SESSION",
            EvalError::DuplicateSession(_) => "DUPLICATE_SESSION",
            EvalError::Fold { source, .. } => source.code(),
            EvalError::Labeling(e) => e.code(),
            EvalError::Ingest(e) => e.code(),
            EvalError::Adapter(_) => "ADAPTER",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub index: usize,
    pub train: Vec<String>,
    pub dev: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub dev_fraction: f64,
    pub folds: Vec<Fold>,
}

/// Splits sessions into `k` folds. Test sets partition the sessions; the
/// dev set of each fold holds `round(dev_fraction * n)` sessions drawn from
/// the non-test side (capped so at least one training session remains).
pub fn make_folds(
    session_ids: &[String],
    k: usize,
    dev_fraction: f64,
    seed: u64,
) -> Result<FoldPlan, EvalError> {
    let n = session_ids.len();
    if k < 2 || n < k {
        return Err(EvalError::TooFewSessions { n, k });
    }
    if !(0.0..1.0).contains(&dev_fraction) {
        return Err(EvalError::InvalidDevFraction(dev_fraction));
    }
    let mut ids = session_ids.to_vec();
    ids.sort();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(EvalError::DuplicateSession(w[0].clone()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);

    let dev_target = (dev_fraction * n as f64).round() as usize;
    let folds = (0..k)
        .map(|f| {
            let mut test = Vec::new();
            let mut rest = Vec::new();
            for (i, id) in ids.iter().enumerate() {
                if i % k == f {
                    test.push(id.clone());
                } else {
                    rest.push(id.clone());
                }
            }
            let mut fold_rng = ChaCha8Rng::seed_from_u64(seed);
            fold_rng.set_stream(f as u64 + 1);
            rest.shuffle(&mut fold_rng);
            let n_dev = dev_target.min(rest.len().saturating_sub(1));
            let mut dev: Vec<String> = rest.drain(..n_dev).collect();
            let mut train = rest;
            train.sort();
            dev.sort();
            test.sort();
            Fold {
                index: f,
                train,
                dev,
                test,
            }
        })
        .collect();
    Ok(FoldPlan {
        k,
        seed,
        dev_fraction,
        folds,
    })
}

/// 4x4 counts, rows = gold label, columns = predicted label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix(pub [[u64; 4]; 4]);

impl ConfusionMatrix {
    pub fn from_pairs(pairs: &[(EmotionLabel, EmotionLabel)]) -> Self {
        let mut m = Self::default();
        for &(g, p) in pairs {
            m.add(g, p);
        }
        m
    }

    pub fn add(&mut self, gold: EmotionLabel, predicted: EmotionLabel) {
        self.0[gold.index()][predicted.index()] += 1;
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for i in 0..4 {
            for j in 0..4 {
                self.0[i][j] += other.0[i][j];
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..4).map(|i| self.0[i][i]).sum()
    }

    pub fn gold_counts(&self) -> [u64; 4] {
        self.0.map(|row| row.iter().sum())
    }

    /// Micro-averaged F1, `2 TP / (2 TP + FP + FN)` with counts pooled over
    /// the four classes.
    pub fn micro_f1(&self) -> Option<f64> {
        let total = self.total();
        if total == 0 {
            return None;
        }
        let tp = self.correct();
        let (mut fp, mut fn_) = (0u64, 0u64);
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    // gold i predicted j: a false negative for i, a false positive for j
                    fn_ += self.0[i][j];
                    fp += self.0[i][j];
                }
            }
        }
        Some((2 * tp) as f64 / (2 * tp + fp + fn_) as f64)
    }

    pub fn accuracy(&self) -> Option<f64> {
        let total = self.total();
        (total > 0).then(|| self.correct() as f64 / total as f64)
    }
}

/// Micro-F1 over single-label predictions. Equal to accuracy in this setting.
pub fn micro_f1(pairs: &[(EmotionLabel, EmotionLabel)]) -> Result<f64, EvalError> {
    ConfusionMatrix::from_pairs(pairs)
        .micro_f1()
        .ok_or(EvalError::EmptyInput)
}

/// Utterance key: `(session_id, utterance_index)`.
pub type UtteranceKey = (String, usize);

/// A fitted classifier for one fold.
pub trait Labeler: Send + Sync {
    /// Predicted label for every client utterance of `sessions`.
    fn predict(&self, sessions: &[&SessionRecord]) -> Result<BTreeMap<UtteranceKey, EmotionLabel>, EvalError>;
}

/// Everything a trainer may look at for one fold.
#[derive(Debug)]
pub struct FoldData<'a> {
    pub index: usize,
    pub seed: u64,
    pub train_sessions: Vec<&'a SessionRecord>,
    pub dev_sessions: Vec<&'a SessionRecord>,
    /// Balanced: the raw training examples followed by the oversampled duplicates.
    pub train_examples: Vec<TrainingExample>,
    pub n_oversampled: usize,
    pub dev_examples: Vec<TrainingExample>,
}

impl FoldData<'_> {
    pub fn oversampled(&self) -> &[TrainingExample] {
        &self.train_examples[self.train_examples.len() - self.n_oversampled..]
    }
}

pub struct Fitted {
    pub labeler: Box<dyn Labeler>,
    pub selected_smoothing: Option<f64>,
    pub dev_micro_f1: Option<f64>,
}

pub trait LabelerFactory: Sync {
    fn name(&self) -> String;
    fn fit(&self, fold: &FoldData<'_>) -> Result<Fitted, EvalError>;
    /// Whether folds may be fitted concurrently.
    fn parallel_folds(&self) -> bool {
        true
    }
}

impl Labeler for BaselineModel {
    fn predict(&self, sessions: &[&SessionRecord]) -> Result<BTreeMap<UtteranceKey, EmotionLabel>, EvalError> {
        Ok(sessions
            .iter()
            .flat_map(|s| s.client_utterances())
            .map(|u| {
                (
                    (u.session_id.clone(), u.utterance_index),
                    BaselineModel::predict(self, &u.text).0,
                )
            })
            .collect())
    }
}

/// Naive Bayes baseline with smoothing picked on the dev split.
#[derive(Debug, Clone)]
pub struct BaselineFactory {
    pub grid: Vec<f64>,
    pub max_tokens: usize,
}

impl Default for BaselineFactory {
    fn default() -> Self {
        Self {
            grid: DEFAULT_SMOOTHING_GRID.to_vec(),
            max_tokens: BaselineConfig::default().max_tokens,
        }
    }
}

impl LabelerFactory for BaselineFactory {
    fn name(&self) -> String {
        "baseline".into()
    }

    fn fit(&self, fold: &FoldData<'_>) -> Result<Fitted, EvalError> {
        let config = |smoothing| BaselineConfig {
            smoothing,
            max_tokens: self.max_tokens,
        };
        if fold.dev_examples.is_empty() || self.grid.is_empty() {
            let model = train_baseline(&fold.train_examples, &config(BaselineConfig::default().smoothing))?;
            return Ok(Fitted {
                selected_smoothing: Some(model.smoothing),
                labeler: Box::new(model),
                dev_micro_f1: None,
            });
        }
        let mut best: Option<(f64, BaselineModel)> = None;
        for &alpha in &self.grid {
            let model = train_baseline(&fold.train_examples, &config(alpha))?;
            let pairs: Vec<_> = fold
                .dev_examples
                .iter()
                .map(|ex| (ex.label, model.predict(&ex.text).0))
                .collect();
            let f1 = micro_f1(&pairs)?;
            // strict improvement keeps the earliest grid value on ties
            if best.as_ref().is_none_or(|(b, _)| f1 > *b) {
                best = Some((f1, model));
            }
        }
        let (f1, model) = best.expect("grid is nonempty");
        Ok(Fitted {
            selected_smoothing: Some(model.smoothing),
            dev_micro_f1: Some(f1),
            labeler: Box::new(model),
        })
    }
}

/// Delegates training and prediction to an external program speaking the
/// interchange formats:
///
/// ```text
/// <program> [args..] finetune --train train.jsonl --dev dev.jsonl --out <checkpoint-dir> --seed <n>
/// <program> [args..] predict --checkpoint <checkpoint-dir> --transcripts test.jsonl --out predictions.jsonl
/// ```
///
/// `train.jsonl` holds the fold's training sessions plus one extra session,
/// `__oversampled__`, with the duplicated minority examples. `test.jsonl` has
/// gold labels stripped. The predictions file must cover every client
/// utterance of the test sessions.
#[derive(Debug, Clone)]
pub struct CommandFactory {
    pub program: PathBuf,
    pub args: Vec<String>,
    pub work_dir: PathBuf,
}

struct CommandLabeler {
    program: PathBuf,
    args: Vec<String>,
    fold_dir: PathBuf,
}

fn run_command(program: &PathBuf, args: &[String], extra: &[String]) -> Result<(), EvalError> {
    let output = Command::new(program)
        .args(args)
        .args(extra)
        .output()
        .map_err(|e| EvalError::Adapter(format!("cannot run {}: {e}", program.display())))?;
    if !output.status.success() {
        return Err(EvalError::Adapter(format!(
            "{} {} exited with {}: {}",
            program.display(),
            extra.first().map(String::as_str).unwrap_or(""),
            output.status,
            String::from_utf8_lossy(&output.stderr).trim()
        )));
    }
    Ok(())
}

fn write_file(path: &PathBuf, bytes: &[u8]) -> Result<(), EvalError> {
    fs::write(path, bytes).map_err(|e| EvalError::Adapter(format!("cannot write {}: {e}", path.display())))
}

fn sessions_jsonl(sessions: &[SessionRecord]) -> Vec<u8> {
    let mut buf = Vec::new();
    ingest::write_transcripts(sessions, &mut buf).expect("in-memory write");
    buf
}

impl LabelerFactory for CommandFactory {
    fn name(&self) -> String {
        let program = self.program.file_name().map(|n| n.to_string_lossy().into_owned());
        format!("external:{}", program.unwrap_or_else(|| self.program.display().to_string()))
    }

    fn parallel_folds(&self) -> bool {
        false
    }

    fn fit(&self, fold: &FoldData<'_>) -> Result<Fitted, EvalError> {
        let fold_dir = self.work_dir.join(format!("fold{:02}", fold.index));
        fs::create_dir_all(&fold_dir)
            .map_err(|e| EvalError::Adapter(format!("cannot create {}: {e}", fold_dir.display())))?;

        let mut train: Vec<SessionRecord> = fold.train_sessions.iter().map(|s| (*s).clone()).collect();
        if fold.n_oversampled > 0 {
            let session_id = "__oversampled__".to_owned();
            train.push(SessionRecord {
                session_id: session_id.clone(),
                client_id: session_id.clone(),
                session_index: 0,
                utterances: fold
                    .oversampled()
                    .iter()
                    .enumerate()
                    .map(|(i, ex)| Utterance {
                        session_id: session_id.clone(),
                        utterance_index: i,
                        speaker: Speaker::Client,
                        text: ex.text.clone(),
                        gold_label: Some(ex.label),
                        predicted_label: None,
                        prediction_scores: None,
                    })
                    .collect(),
                poms: None,
                ors: None,
            });
        }
        let dev: Vec<SessionRecord> = fold.dev_sessions.iter().map(|s| (*s).clone()).collect();
        let train_path = fold_dir.join("train.jsonl");
        let dev_path = fold_dir.join("dev.jsonl");
        let checkpoint = fold_dir.join("checkpoint");
        write_file(&train_path, &sessions_jsonl(&train))?;
        write_file(&dev_path, &sessions_jsonl(&dev))?;
        run_command(
            &self.program,
            &self.args,
            &[
                "finetune".into(),
                "--train".into(),
                train_path.display().to_string(),
                "--dev".into(),
                dev_path.display().to_string(),
                "--out".into(),
                checkpoint.display().to_string(),
                "--seed".into(),
                fold.seed.to_string(),
            ],
        )?;
        Ok(Fitted {
            labeler: Box::new(CommandLabeler {
                program: self.program.clone(),
                args: self.args.clone(),
                fold_dir,
            }),
            selected_smoothing: None,
            dev_micro_f1: None,
        })
    }
}

impl Labeler for CommandLabeler {
    fn predict(&self, sessions: &[&SessionRecord]) -> Result<BTreeMap<UtteranceKey, EmotionLabel>, EvalError> {
        let stripped: Vec<SessionRecord> = sessions
            .iter()
            .map(|s| {
                let mut s = (*s).clone();
                for u in &mut s.utterances {
                    u.gold_label = None;
                    u.predicted_label = None;
                    u.prediction_scores = None;
                }
                s
            })
            .collect();
        let test_path = self.fold_dir.join("test.jsonl");
        let out_path = self.fold_dir.join("predictions.jsonl");
        write_file(&test_path, &sessions_jsonl(&stripped))?;
        run_command(
            &self.program,
            &self.args,
            &[
                "predict".into(),
                "--checkpoint".into(),
                self.fold_dir.join("checkpoint").display().to_string(),
                "--transcripts".into(),
                test_path.display().to_string(),
                "--out".into(),
                out_path.display().to_string(),
            ],
        )?;
        let mut bundle = CorpusBundle::from_sessions(stripped);
        let bytes = fs::read(&out_path)
            .map_err(|e| EvalError::Adapter(format!("cannot read {}: {e}", out_path.display())))?;
        ingest::apply_predictions(&bytes, &mut bundle)?;
        let mut out = BTreeMap::new();
        for s in &bundle.sessions {
            for u in s.client_utterances() {
                let label = u.predicted_label.ok_or_else(|| {
                    EvalError::Labeling(LabelingError::IncompleteSource {
                        source_name: "external",
                        session_id: s.session_id.clone(),
                        utterance_index: u.utterance_index,
                    })
                })?;
                out.insert((s.session_id.clone(), u.utterance_index), label);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub index: usize,
    pub n_train_sessions: usize,
    pub n_dev_sessions: usize,
    pub n_test_sessions: usize,
    pub n_train_examples: usize,
    pub n_test_utterances: usize,
    pub micro_f1: f64,
    pub selected_smoothing: Option<f64>,
    pub dev_micro_f1: Option<f64>,
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub labeler: String,
    pub k: usize,
    pub seed: u64,
    pub dev_fraction: f64,
    pub balance_ratio: f64,
    pub labels: [EmotionLabel; 4],
    pub folds: Vec<FoldResult>,
    pub mean_micro_f1: f64,
    /// Sample standard deviation over folds.
    pub std_micro_f1: f64,
    pub pooled_micro_f1: f64,
    pub pooled_confusion: ConfusionMatrix,
}

fn fold_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn run_fold(
    by_id: &BTreeMap<&str, &SessionRecord>,
    fold: &Fold,
    factory: &dyn LabelerFactory,
    balance_ratio: f64,
    seed: u64,
) -> Result<FoldResult, EvalError> {
    let lookup = |ids: &[String]| -> Result<Vec<&SessionRecord>, EvalError> {
        ids.iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| EvalError::UnknownSession(id.clone()))
            })
            .collect()
    };
    let train_sessions = lookup(&fold.train)?;
    let dev_sessions = lookup(&fold.dev)?;
    let test_sessions = lookup(&fold.test)?;

    let seed = fold_seed(seed, fold.index);
    let raw = training_examples(train_sessions.iter().copied());
    let n_raw = raw.len();
    let train_examples = balance_classes(&raw, |ex| ex.label, balance_ratio, seed)?;
    let data = FoldData {
        index: fold.index,
        seed,
        n_oversampled: train_examples.len() - n_raw,
        train_examples,
        dev_examples: training_examples(dev_sessions.iter().copied()),
        train_sessions,
        dev_sessions,
    };
    let fitted = factory.fit(&data)?;
    let predictions = fitted.labeler.predict(&test_sessions)?;

    let mut confusion = ConfusionMatrix::default();
    for s in &test_sessions {
        for u in s.client_utterances() {
            let gold = u.gold_label.expect("gold coverage checked");
            let predicted = predictions
                .get(&(s.session_id.clone(), u.utterance_index))
                .copied()
                .ok_or_else(|| {
                    EvalError::Labeling(LabelingError::IncompleteSource {
                        source_name: "fold labeler",
                        session_id: s.session_id.clone(),
                        utterance_index: u.utterance_index,
                    })
                })?;
            confusion.add(gold, predicted);
        }
    }
    let micro_f1 = confusion.micro_f1().ok_or(EvalError::EmptyInput)?;
    Ok(FoldResult {
        index: fold.index,
        n_train_sessions: fold.train.len(),
        n_dev_sessions: fold.dev.len(),
        n_test_sessions: fold.test.len(),
        n_train_examples: data.train_examples.len(),
        n_test_utterances: confusion.total() as usize,
        micro_f1,
        selected_smoothing: fitted.selected_smoothing,
        dev_micro_f1: fitted.dev_micro_f1,
        confusion,
    })
}

/// Runs the cross-validation protocol: per fold, balance the training
/// examples, fit (tuning on dev), score the test sessions.
pub fn run_cv(
    sessions: &[SessionRecord],
    factory: &dyn LabelerFactory,
    plan: &FoldPlan,
    balance_ratio: f64,
    seed: u64,
) -> Result<EvalReport, EvalError> {
    if let Some(s) = sessions.iter().find(|s| !has_complete_gold(s)) {
        return Err(EvalError::IncompleteGold(s.session_id.clone()));
    }
    if !(balance_ratio > 0.0 && balance_ratio <= 1.0) {
        return Err(LabelingError::InvalidBalanceRatio(balance_ratio).into());
    }
    let by_id: BTreeMap<&str, &SessionRecord> = sessions.iter().map(|s| (s.session_id.as_str(), s)).collect();

    let run = |fold: &Fold| {
        run_fold(&by_id, fold, factory, balance_ratio, seed).map_err(|e| EvalError::Fold {
            index: fold.index,
            source: Box::new(e),
        })
    };
    let results: Vec<Result<FoldResult, EvalError>> = if factory.parallel_folds() {
        plan.folds.par_iter().map(run).collect()
    } else {
        plan.folds.iter().map(run).collect()
    };
    // par_iter collect keeps fold order, so the first error is the lowest index
    let folds = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let f1s: Vec<f64> = folds.iter().map(|f| f.micro_f1).collect();
    let k = f1s.len() as f64;
    let mean = f1s.iter().sum::<f64>() / k;
    let var = f1s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0).max(1.0);
    let mut pooled = ConfusionMatrix::default();
    for f in &folds {
        pooled.merge(&f.confusion);
    }
    Ok(EvalReport {
        labeler: factory.name(),
        k: plan.k,
        seed,
        dev_fraction: plan.dev_fraction,
        balance_ratio,
        labels: EmotionLabel::ALL,
        mean_micro_f1: mean,
        std_micro_f1: var.sqrt(),
        pooled_micro_f1: pooled.micro_f1().ok_or(EvalError::EmptyInput)?,
        pooled_confusion: pooled,
        folds,
    })
}

impl EvalReport {
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "Cross-validation: {} ({} folds, seed {}, dev fraction {}, balance ratio {})",
            self.labeler, self.k, self.seed, self.dev_fraction, self.balance_ratio
        );
        let _ = writeln!(out, "{:>4}  {:>6}  {:>8}  {:>9}", "fold", "n_test", "micro_f1", "smoothing");
        for f in &self.folds {
            let smoothing = f.selected_smoothing.map(|s| s.to_string()).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{:>4}  {:>6}  {:>8.4}  {:>9}",
                f.index, f.n_test_utterances, f.micro_f1, smoothing
            );
        }
        let _ = writeln!(
            out,
            "mean micro-F1 {:.4} (sd {:.4}); pooled micro-F1 {:.4}",
            self.mean_micro_f1, self.std_micro_f1, self.pooled_micro_f1
        );
        let _ = writeln!(out, "pooled confusion (rows gold, columns predicted)");
        let _ = write!(out, "{:>9}", "");
        for l in EmotionLabel::ALL {
            let _ = write!(out, " {:>9}", l.as_str());
        }
        out.push('\n');
        for (i, row) in self.pooled_confusion.0.iter().enumerate() {
            let _ = write!(out, "{:>9}", EmotionLabel::ALL[i].as_str());
            for v in row {
                let _ = write!(out, " {v:>9}");
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use EmotionLabel::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i:03}")).collect()
    }

    #[test]
    fn twenty_sessions_ten_folds() {
        let plan = make_folds(&ids(20), 10, 0.1, 1).unwrap();
        assert_eq!(plan.folds.len(), 10);
        for f in &plan.folds {
            assert_eq!(f.test.len(), 2);
            assert_eq!(f.dev.len(), 2);
            assert_eq!(f.train.len(), 16);
        }
    }

    #[test]
    fn too_few_sessions() {
        assert!(matches!(make_folds(&ids(5), 10, 0.1, 1), Err(EvalError::TooFewSessions { n: 5, k: 10 })));
        assert!(matches!(make_folds(&ids(5), 1, 0.1, 1), Err(EvalError::TooFewSessions { k: 1, .. })));
    }

    #[test]
    fn seeds_control_assignment() {
        let a = make_folds(&ids(23), 5, 0.1, 7).unwrap();
        let b = make_folds(&ids(23), 5, 0.1, 7).unwrap();
        let c = make_folds(&ids(23), 5, 0.1, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let sizes = |p: &FoldPlan| p.folds.iter().map(|f| (f.train.len(), f.dev.len(), f.test.len())).collect::<Vec<_>>();
        assert_eq!(sizes(&a), sizes(&c));
    }

    #[test]
    fn micro_f1_examples() {
        let all = [(Positive, Positive), (Negative, Negative)];
        assert_eq!(micro_f1(&all).unwrap(), 1.0);
        let none = [(Positive, Negative), (Mixed, Neutral)];
        assert_eq!(micro_f1(&none).unwrap(), 0.0);
        let three = [(Positive, Positive), (Negative, Negative), (Neutral, Neutral), (Mixed, Positive)];
        assert_eq!(micro_f1(&three).unwrap(), 0.75);
        assert!(matches!(micro_f1(&[]), Err(EvalError::EmptyInput)));
    }

    #[test]
    fn confusion_rows_are_gold_counts() {
        let pairs = [(Positive, Negative), (Positive, Positive), (Mixed, Neutral)];
        let m = ConfusionMatrix::from_pairs(&pairs);
        assert_eq!(m.gold_counts(), [2, 0, 0, 1]);
        assert_eq!(m.0[0][1], 1);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn micro_f1_is_accuracy(raw in prop::collection::vec((0usize..4, 0usize..4), 1..400)) {
                let pairs: Vec<_> = raw.iter().map(|(g, p)| (EmotionLabel::ALL[*g], EmotionLabel::ALL[*p])).collect();
                let correct = pairs.iter().filter(|(g, p)| g == p).count();
                let accuracy = correct as f64 / pairs.len() as f64;
                prop_assert_eq!(micro_f1(&pairs).unwrap(), accuracy);
            }

            #[test]
            fn folds_partition_without_leakage(n in 2usize..80, k in 2usize..12, dev in 0.0f64..0.5, seed in any::<u64>()) {
                prop_assume!(n >= k);
                let all = ids(n);
                let plan = make_folds(&all, k, dev, seed).unwrap();
                let mut tests: Vec<String> = plan.folds.iter().flat_map(|f| f.test.clone()).collect();
                tests.sort();
                prop_assert_eq!(&tests, &all);
                for f in &plan.folds {
                    prop_assert!(!f.train.is_empty());
                    for id in &f.test {
                        prop_assert!(!f.train.contains(id) && !f.dev.contains(id));
                    }
                    for id in &f.dev {
                        prop_assert!(!f.train.contains(id));
                    }
                    prop_assert_eq!(f.train.len() + f.dev.len() + f.test.len(), n);
                }
            }
        }
    }
}
