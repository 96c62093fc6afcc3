use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use coherelab::coherence::{
    association_report, build_features, coherence_report, AssociationReport, CoherenceReport, CoherenceRow,
    InputRef, LabelField,
};
use coherelab::eval::{make_folds, run_cv, BaselineFactory, CommandFactory, EvalReport, LabelerFactory};
use coherelab::ingest::{
    load_predictions, load_self_reports, load_transcripts, write_predictions, write_self_reports, write_transcripts,
    CorpusBundle, SourceFile,
};
use coherelab::labeling::{
    balance_classes, has_complete_gold, label_corpus, train_baseline, training_examples, BaselineModel, LabelerSource,
};
use coherelab::model::{validate_corpus, Violation};
use coherelab::synth::{generate, SynthSpec};
use serde::{Deserialize, Serialize};

use crate::config::{AdapterCommand, Format, Settings, Source};
use crate::manifest::{manifest_file, to_json, Artifacts};
use crate::{CliError, Inputs};

pub const VALIDATION_FILE: &str = "validation_report.json";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const MODEL_FILE: &str = "model.json";
pub const EVAL_FILE: &str = "eval_report.json";
pub const COHERENCE_FILE: &str = "coherence_report.json";
pub const ASSOCIATION_FILE: &str = "association_report.json";
pub const SUMMARY_FILE: &str = "summary.txt";

pub struct Context {
    pub settings: Settings,
    pub inputs: Inputs,
    pub seed_flag: Option<u64>,
}

fn required<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    path.as_deref()
        .ok_or_else(|| CliError::Usage(format!("{flag} is required for this subcommand")))
}

fn load(ctx: &Context, need_reports: bool) -> Result<CorpusBundle, CliError> {
    let mut bundle = load_transcripts(required(&ctx.inputs.transcripts, "--transcripts")?)?;
    match &ctx.inputs.self_reports {
        Some(path) => bundle = load_self_reports(path, bundle, &ctx.settings.analysis())?,
        None if need_reports => return Err(CliError::Usage("--self-reports is required for this subcommand".into())),
        None => {}
    }
    if let Some(path) = &ctx.inputs.predictions {
        bundle = load_predictions(path, bundle)?;
    }
    for w in &bundle.warnings {
        eprintln!("warning: {w}");
    }
    Ok(bundle)
}

fn emit(ctx: &Context, json: &[u8], table: String) {
    match ctx.settings.format {
        Format::Json => print!("{}", String::from_utf8_lossy(json)),
        Format::Table => print!("{table}"),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub kind: String,
    pub manifest: String,
    pub inputs: Vec<InputRef>,
    pub n_sessions: usize,
    pub n_utterances: usize,
    pub warnings: Vec<String>,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "Validation: {} sessions, {} utterances, {} violations, {} warnings",
            self.n_sessions,
            self.n_utterances,
            self.violations.len(),
            self.warnings.len()
        );
        for v in &self.violations {
            let at = v.utterance_index.map(|i| format!(" utterance {i}")).unwrap_or_default();
            let _ = writeln!(out, "  {} session {}{at}: {}", v.code.as_str(), v.session_id, v.message);
        }
        for w in &self.warnings {
            let _ = writeln!(out, "  warning: {w}");
        }
        out
    }
}

pub fn validate(ctx: &Context) -> Result<(), CliError> {
    let bundle = load(ctx, false)?;
    let report = ValidationReport {
        kind: "validation".into(),
        manifest: manifest_file("validate"),
        inputs: bundle.source_manifest.iter().map(InputRef::from).collect(),
        n_sessions: bundle.sessions.len(),
        n_utterances: bundle.sessions.iter().map(|s| s.utterances.len()).sum(),
        warnings: bundle.warnings.clone(),
        violations: validate_corpus(&bundle.sessions, &ctx.settings.analysis()),
    };
    let json = to_json(&report);
    let mut artifacts = Artifacts::new(&ctx.inputs.out_dir);
    artifacts.add(VALIDATION_FILE, json.clone());
    artifacts.write("validate", &ctx.settings, bundle.source_manifest.clone(), None)?;
    emit(ctx, &json, report.render_table());
    match report.violations.len() {
        0 => Ok(()),
        n => Err(CliError::Violations(n)),
    }
}

/// Trains the baseline on every gold-labeled client utterance, after partial balancing.
fn train_on_gold(bundle: &CorpusBundle, settings: &Settings) -> Result<BaselineModel, CliError> {
    let raw = training_examples(&bundle.sessions);
    let balanced = balance_classes(&raw, |ex| ex.label, settings.balance_ratio, settings.seed)?;
    Ok(train_baseline(&balanced, &settings.baseline())?)
}

/// Applies the configured label source. Returns the labeled bundle and the
/// trained model when one was fitted here.
fn apply_source(ctx: &Context, bundle: CorpusBundle) -> Result<(CorpusBundle, Option<BaselineModel>), CliError> {
    match ctx.settings.source {
        Source::Gold => Ok((label_corpus(bundle, &LabelerSource::Gold)?, None)),
        Source::External => {
            required(&ctx.inputs.predictions, "--predictions")?;
            Ok((label_corpus(bundle, &LabelerSource::ExternalPredictions)?, None))
        }
        Source::Baseline => {
            let (model, fitted) = match &ctx.inputs.model {
                Some(path) => {
                    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                    (BaselineModel::from_json(&text)?, false)
                }
                None => (train_on_gold(&bundle, &ctx.settings)?, true),
            };
            let labeled = label_corpus(bundle, &LabelerSource::Baseline(Box::new(model.clone())))?;
            Ok((labeled, fitted.then_some(model)))
        }
    }
}

fn source_name(source: Source) -> &'static str {
    match source {
        Source::Gold => "gold",
        Source::External => "external",
        Source::Baseline => "baseline",
    }
}

fn model_input(ctx: &Context, inputs: &mut Vec<SourceFile>) -> Result<(), CliError> {
    if let (Source::Baseline, Some(path)) = (ctx.settings.source, &ctx.inputs.model) {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        inputs.push(SourceFile {
            role: "model".into(),
            path: path.display().to_string(),
            sha256: coherelab::ingest::sha256_hex(&bytes),
        });
    }
    Ok(())
}

pub fn label(ctx: &Context) -> Result<(), CliError> {
    let bundle = load(ctx, false)?;
    let mut inputs = bundle.source_manifest.clone();
    model_input(ctx, &mut inputs)?;
    let (labeled, model) = apply_source(ctx, bundle)?;
    let mut predictions = Vec::new();
    write_predictions(&labeled.sessions, &mut predictions).map_err(|e| CliError::io(Path::new(PREDICTIONS_FILE), e))?;
    let n_rows = predictions.iter().filter(|b| **b == b'\n').count();

    let mut artifacts = Artifacts::new(&ctx.inputs.out_dir);
    artifacts.add(PREDICTIONS_FILE, predictions);
    if let Some(model) = &model {
        let mut json = model.to_json().into_bytes();
        json.push(b'\n');
        artifacts.add(MODEL_FILE, json);
    }
    let dir = artifacts.dir().display().to_string();
    artifacts.write("label", &ctx.settings, inputs, None)?;
    println!(
        "labeled {n_rows} client utterances with source {} -> {dir}/{PREDICTIONS_FILE}",
        source_name(ctx.settings.source)
    );
    Ok(())
}

pub fn evaluate(ctx: &Context, adapter: Option<String>, adapter_args: Vec<String>) -> Result<(), CliError> {
    let bundle = load(ctx, false)?;
    let s = &ctx.settings;
    let gold: Vec<_> = bundle.sessions.iter().filter(|x| has_complete_gold(x)).cloned().collect();
    let n_skipped = bundle.sessions.len() - gold.len();
    if n_skipped > 0 {
        eprintln!("note: {n_skipped} session(s) without complete gold labels left out of evaluation");
    }
    let ids: Vec<String> = gold.iter().map(|x| x.session_id.clone()).collect();
    let plan = make_folds(&ids, s.k_folds, s.dev_fraction, s.seed)?;

    let adapter = match adapter {
        Some(program) => Some(AdapterCommand {
            program,
            args: adapter_args,
        }),
        None => s.adapter.clone(),
    };
    let factory: Box<dyn LabelerFactory> = match &adapter {
        Some(cmd) => Box::new(CommandFactory {
            program: PathBuf::from(&cmd.program),
            args: cmd.args.clone(),
            work_dir: ctx.inputs.out_dir.join("adapter-work"),
        }),
        None => Box::new(BaselineFactory {
            grid: s.smoothing_grid.clone(),
            max_tokens: s.max_tokens,
        }),
    };
    let report: EvalReport = run_cv(&gold, factory.as_ref(), &plan, s.balance_ratio, s.seed)?;

    let json = to_json(&report);
    let mut artifacts = Artifacts::new(&ctx.inputs.out_dir);
    artifacts.add(EVAL_FILE, json.clone());
    artifacts.add("fold_plan.json", to_json(&plan));
    let extra = serde_json::json!({ "n_gold_sessions": gold.len(), "n_sessions_skipped": n_skipped });
    artifacts.write("evaluate", s, bundle.source_manifest.clone(), Some(extra))?;
    emit(ctx, &json, report.render_table());
    Ok(())
}

fn numerics_failure(rows: &[CoherenceRow]) -> Option<String> {
    rows.iter()
        .filter_map(|r| r.error.as_deref())
        .find(|e| e.starts_with("NONCONVERGENCE"))
        .map(str::to_string)
}

fn labeled_features(ctx: &Context) -> Result<(coherelab::FeatureSet, Vec<SourceFile>), CliError> {
    let bundle = load(ctx, true)?;
    let mut inputs = bundle.source_manifest.clone();
    model_input(ctx, &mut inputs)?;
    let (labeled, _) = apply_source(ctx, bundle)?;
    Ok((build_features::<f64>(&labeled.sessions, LabelField::Predicted), inputs))
}

pub fn coherence(ctx: &Context) -> Result<(), CliError> {
    let (features, inputs) = labeled_features(ctx)?;
    let mut report: CoherenceReport =
        coherence_report(&features, &ctx.settings.analysis(), source_name(ctx.settings.source), &inputs);
    report.manifest = manifest_file("coherence");
    let json = to_json(&report);
    let mut artifacts = Artifacts::new(&ctx.inputs.out_dir);
    artifacts.add(COHERENCE_FILE, json.clone());
    artifacts.write("coherence", &ctx.settings, inputs, None)?;
    emit(ctx, &json, report.render_table());
    match numerics_failure(&report.rows) {
        Some(e) => Err(CliError::Numerics(e)),
        None => Ok(()),
    }
}

pub fn associate(ctx: &Context) -> Result<(), CliError> {
    let (features, inputs) = labeled_features(ctx)?;
    let mut report: AssociationReport =
        association_report(&features, &ctx.settings.analysis(), source_name(ctx.settings.source), &inputs);
    report.manifest = manifest_file("associate");
    let json = to_json(&report);
    let mut artifacts = Artifacts::new(&ctx.inputs.out_dir);
    artifacts.add(ASSOCIATION_FILE, json.clone());
    artifacts.write("associate", &ctx.settings, inputs, None)?;
    emit(ctx, &json, report.render_table());
    match numerics_failure(&report.rows) {
        Some(e) => Err(CliError::Numerics(e)),
        None => Ok(()),
    }
}

pub fn synth(ctx: &Context, spec_path: Option<&Path>) -> Result<(), CliError> {
    let mut inputs = Vec::new();
    let mut spec = match spec_path {
        Some(path) => {
            let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
            inputs.push(SourceFile {
                role: "synth_spec".into(),
                path: path.display().to_string(),
                sha256: coherelab::ingest::sha256_hex(&bytes),
            });
            serde_json::from_slice::<SynthSpec>(&bytes)
                .map_err(|e| CliError::Usage(format!("spec {}: {e}", path.display())))?
        }
        None => SynthSpec::default(),
    };
    if let Some(seed) = ctx.seed_flag {
        spec.seed = seed;
    }
    let (bundle, truth) = generate(&spec)?;

    let io = |e| CliError::io(&ctx.inputs.out_dir, e);
    let mut transcripts = Vec::new();
    write_transcripts(&bundle.sessions, &mut transcripts).map_err(io)?;
    let mut reports = Vec::new();
    write_self_reports(&bundle.sessions, &mut reports).map_err(io)?;

    let mut artifacts = Artifacts::new(&ctx.inputs.out_dir);
    artifacts.add("transcripts.jsonl", transcripts);
    artifacts.add("self_reports.csv", reports);
    artifacts.add("ground_truth.json", to_json(&truth));
    let mut settings = ctx.settings.clone();
    settings.seed = spec.seed;
    let extra = serde_json::to_value(&spec).ok().map(|v| serde_json::json!({ "synth_spec": v }));
    artifacts.write("synth", &settings, inputs, extra)?;
    println!(
        "generated {} sessions for {} clients (seed {}) -> {}",
        bundle.sessions.len(),
        spec.n_clients,
        spec.seed,
        ctx.inputs.out_dir.display()
    );
    Ok(())
}

fn read_report<T: for<'de> Deserialize<'de>>(dir: &Path, name: &str) -> Result<Option<T>, CliError> {
    let path = dir.join(name);
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    serde_json::from_str(&text).map(Some).map_err(|e| CliError::Data {
        code: "MALFORMED_REPORT".into(),
        message: format!("{}: {e}", path.display()),
    })
}

pub fn report(ctx: &Context, run_dir: &Path) -> Result<(), CliError> {
    let mut sections = Vec::new();
    if let Some(r) = read_report::<ValidationReport>(run_dir, VALIDATION_FILE)? {
        sections.push(r.render_table());
    }
    if let Some(r) = read_report::<EvalReport>(run_dir, EVAL_FILE)? {
        sections.push(r.render_table());
    }
    if let Some(r) = read_report::<CoherenceReport>(run_dir, COHERENCE_FILE)? {
        sections.push(r.render_table());
    }
    if let Some(r) = read_report::<AssociationReport>(run_dir, ASSOCIATION_FILE)? {
        sections.push(r.render_table());
    }
    if sections.is_empty() {
        return Err(CliError::Usage(format!("no reports found in {}", run_dir.display())));
    }
    let summary = sections.join("\n");

    let mut inputs = Vec::new();
    for name in [VALIDATION_FILE, EVAL_FILE, COHERENCE_FILE, ASSOCIATION_FILE] {
        let path = run_dir.join(name);
        if let Ok(bytes) = std::fs::read(&path) {
            inputs.push(SourceFile {
                role: name.trim_end_matches(".json").into(),
                path: path.display().to_string(),
                sha256: coherelab::ingest::sha256_hex(&bytes),
            });
        }
    }
    let mut artifacts = Artifacts::new(&ctx.inputs.out_dir);
    artifacts.add(SUMMARY_FILE, summary.clone().into_bytes());
    artifacts.write("report", &ctx.settings, inputs, None)?;
    print!("{summary}");
    Ok(())
}
