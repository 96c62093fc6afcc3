use coherelab::coherence::{
    association_report, build_features, client_summaries, coherence_report, emotion_proportions,
    sessionwide_coherence, LabelField,
};
use coherelab::ingest::{apply_self_reports, parse_transcripts, write_self_reports, write_transcripts, CorpusBundle};
use coherelab::labeling::{label_corpus, LabelerSource};
use coherelab::model::{AnalysisConfig, EmotionLabel, Polarity, PomsReport, Speaker, Utterance};
use coherelab::synth::{generate, realized_correlations, GroundTruth, SynthSpec};

/// Generates, writes to the interchange formats, reloads and gold-labels.
fn through_files(spec: &SynthSpec) -> (CorpusBundle, GroundTruth) {
    let (bundle, truth) = generate(spec).unwrap();
    let mut transcripts = Vec::new();
    write_transcripts(&bundle.sessions, &mut transcripts).unwrap();
    let mut reports = Vec::new();
    write_self_reports(&bundle.sessions, &mut reports).unwrap();
    let mut loaded = parse_transcripts(&transcripts).unwrap();
    apply_self_reports(&reports, &mut loaded, &AnalysisConfig::default()).unwrap();
    (label_corpus(loaded, &LabelerSource::Gold).unwrap(), truth)
}

fn session_r(bundle: &CorpusBundle, polarity: Polarity) -> f64 {
    let features = build_features::<f64>(&bundle.sessions, LabelField::Predicted);
    sessionwide_coherence(&features.features, polarity, 0.05).unwrap().r
}

#[test]
fn gold_pipeline_reproduces_ground_truth() {
    let spec = SynthSpec {
        a_pos: 0.5,
        a_neg: -0.3,
        missing_poms_rate: 0.1,
        ..Default::default()
    };
    let (bundle, truth) = through_files(&spec);
    let config = AnalysisConfig::default();
    let features = build_features::<f64>(&bundle.sessions, LabelField::Predicted);
    let realized = realized_correlations(&truth);

    let report = coherence_report(&features, &config, "gold", &[]);
    let expected_dropped = truth.sessions.iter().filter(|s| s.p_pos.is_none()).count();
    assert_eq!(report.n_dropped_no_poms, expected_dropped);
    assert!(expected_dropped > 0);
    for (row, truth_r) in report.rows.iter().zip([realized.session_pos, realized.session_neg]) {
        assert!((row.r.unwrap() - truth_r.unwrap()).abs() < 1e-10);
    }

    let assoc = association_report(&features, &config, "gold", &[]);
    for (row, truth_r) in assoc.rows.iter().zip([realized.association_pos, realized.association_neg]) {
        assert!((row.r.unwrap() - truth_r.unwrap()).abs() < 1e-10, "{row:?} vs {truth_r:?}");
    }
    let analysis = client_summaries(&features.features, &config);
    for (summary, planted) in analysis.summaries.iter().zip(&truth.clients) {
        assert_eq!(summary.client_id, planted.client_id);
        let got = summary.coherence_pos.map(|c| c.r);
        assert!((got.unwrap() - planted.realized_coherence_pos.unwrap()).abs() < 1e-12);
    }
}

#[test]
fn perfect_plant_is_recovered_exactly() {
    let spec = SynthSpec {
        r_pos: 1.0,
        r_neg: -1.0,
        coherence_spread: 0.0,
        ..Default::default()
    };
    let (bundle, _) = through_files(&spec);
    // Subscales are rounded to 1e-6 when written, hence not bit-exact.
    assert!((session_r(&bundle, Polarity::Pos) - 1.0).abs() < 1e-9);
    assert!((session_r(&bundle, Polarity::Neg) + 1.0).abs() < 1e-9);
}

#[test]
fn null_plant_stays_within_sampling_bound() {
    let runs = 100;
    let mut inside = 0;
    for seed in 1..=runs {
        let spec = SynthSpec {
            r_pos: 0.0,
            seed,
            ..Default::default()
        };
        let (bundle, truth) = generate(&spec).unwrap();
        let bundle = label_corpus(bundle, &LabelerSource::Gold).unwrap();
        let bound = 2.0 / (truth.sessions.len() as f64).sqrt();
        if session_r(&bundle, Polarity::Pos).abs() < bound {
            inside += 1;
        }
    }
    println!("null plant: {inside}/{runs} inside 2/sqrt(n)");
    assert!(inside >= 95, "{inside}/{runs}");
}

#[test]
fn realized_sign_follows_planted_sign() {
    let mut agree = 0;
    for seed in 1..=100 {
        let spec = SynthSpec {
            r_pos: 0.2,
            r_neg: -0.2,
            seed,
            ..Default::default()
        };
        let (_, truth) = generate(&spec).unwrap();
        let r = truth.realized;
        if r.session_pos.unwrap() > 0.0 && r.session_neg.unwrap() < 0.0 {
            agree += 1;
        }
    }
    assert!(agree >= 99, "{agree}/100");
}

#[test]
fn scaling_poms_leaves_coherence_unchanged() {
    let (bundle, _) = through_files(&SynthSpec::default());
    let mut scaled = bundle.clone();
    for s in &mut scaled.sessions {
        s.poms = s.poms.map(|p| PomsReport::from_values(p.values().map(|v| v * 3.7)));
    }
    for p in Polarity::BOTH {
        assert!((session_r(&bundle, p) - session_r(&scaled, p)).abs() < 1e-10);
    }
}

#[test]
fn therapist_turns_do_not_change_proportions() {
    let (bundle, _) = through_files(&SynthSpec {
        n_clients: 3,
        ..Default::default()
    });
    let mut padded = bundle.clone();
    for s in &mut padded.sessions {
        let next = s.utterances.len();
        for k in 0..5 {
            s.utterances.push(Utterance {
                session_id: s.session_id.clone(),
                utterance_index: next + k,
                speaker: Speaker::Therapist,
                text: "pos1 pos2 neg3".into(),
                gold_label: None,
                predicted_label: None,
                prediction_scores: None,
            });
        }
    }
    for (a, b) in bundle.sessions.iter().zip(&padded.sessions) {
        assert_eq!(
            emotion_proportions::<f64>(a, LabelField::Predicted),
            emotion_proportions::<f64>(b, LabelField::Predicted)
        );
    }
}

#[test]
fn swapping_polarities_swaps_rows() {
    let (bundle, _) = through_files(&SynthSpec {
        r_pos: 0.4,
        r_neg: 0.1,
        ..Default::default()
    });
    let mut swapped = bundle.clone();
    for s in &mut swapped.sessions {
        for u in &mut s.utterances {
            u.predicted_label = u.predicted_label.map(|l| match l {
                EmotionLabel::Positive => EmotionLabel::Negative,
                EmotionLabel::Negative => EmotionLabel::Positive,
                other => other,
            });
        }
        s.poms = s.poms.map(|p| {
            let v = p.values();
            PomsReport::from_values([v[3], v[4], v[5], v[0], v[1], v[2]])
        });
    }
    assert_eq!(session_r(&bundle, Polarity::Pos), session_r(&swapped, Polarity::Neg));
    assert_eq!(session_r(&bundle, Polarity::Neg), session_r(&swapped, Polarity::Pos));
}

#[test]
fn session_order_does_not_matter() {
    let (bundle, _) = through_files(&SynthSpec::default());
    let mut reversed = bundle.clone();
    reversed.sessions.reverse();
    let config = AnalysisConfig::default();
    let fa = build_features::<f64>(&bundle.sessions, LabelField::Predicted);
    let fb = build_features::<f64>(&reversed.sessions, LabelField::Predicted);
    for p in Polarity::BOTH {
        let a = sessionwide_coherence(&fa.features, p, 0.05).unwrap().r;
        let b = sessionwide_coherence(&fb.features, p, 0.05).unwrap().r;
        assert!((a - b).abs() < 1e-12);
    }
    let ra = association_report(&fa, &config, "gold", &[]);
    let rb = association_report(&fb, &config, "gold", &[]);
    assert_eq!(ra.clients, rb.clients);
    for (a, b) in ra.rows.iter().zip(&rb.rows) {
        assert!((a.r.unwrap() - b.r.unwrap()).abs() < 1e-12);
    }
}

#[test]
fn single_precision_pipeline_agrees() {
    let (bundle, _) = through_files(&SynthSpec::default());
    let f32s = build_features::<f32>(&bundle.sessions, LabelField::Predicted);
    let r32 = sessionwide_coherence(&f32s.features, Polarity::Pos, 0.05).unwrap().r;
    assert!((r32 as f64 - session_r(&bundle, Polarity::Pos)).abs() < 1e-4);
}

#[test]
fn ground_truth_json_round_trips() {
    let (_, truth) = generate(&SynthSpec::default()).unwrap();
    let text = serde_json::to_string(&truth).unwrap();
    let back: GroundTruth = serde_json::from_str(&text).unwrap();
    assert_eq!(back, truth);
}
