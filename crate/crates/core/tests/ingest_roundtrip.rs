use coherelab::ingest::{
    apply_predictions, apply_self_reports, parse_transcripts, write_predictions, write_self_reports,
    write_transcripts, CorpusBundle,
};
use coherelab::model::{
    argmax_label, AnalysisConfig, EmotionLabel, LabelScores, OrsReport, PomsReport, SessionRecord, Speaker,
    Utterance,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn label() -> impl Strategy<Value = EmotionLabel> {
    (0usize..4).prop_map(|i| EmotionLabel::ALL[i])
}

fn scores() -> impl Strategy<Value = LabelScores> {
    prop::array::uniform4(0.001f64..1.0).prop_map(|w| {
        let total: f64 = w.iter().sum();
        LabelScores(w.map(|v| v / total))
    })
}

#[derive(Debug, Clone)]
struct Turn {
    client: bool,
    text: String,
    gold: Option<EmotionLabel>,
    prediction: Option<Option<LabelScores>>,
    fallback: EmotionLabel,
}

fn turn() -> impl Strategy<Value = Turn> {
    (
        any::<bool>(),
        "[a-zA-Z0-9 ,.'\"!?éü\\\\-]{0,24}",
        prop::option::of(label()),
        prop::option::of(prop::option::of(scores())),
        label(),
    )
        .prop_map(|(client, text, gold, prediction, fallback)| Turn {
            client,
            text,
            gold,
            prediction,
            fallback,
        })
}

fn session(i: usize) -> impl Strategy<Value = SessionRecord> {
    (
        0usize..3,
        prop::collection::vec(turn(), 1..8),
        prop::option::of(prop::array::uniform6(0.0f64..=8.0)),
        prop::option::of(prop::array::uniform4(0.0f64..=10.0)),
    )
        .prop_map(move |(client, turns, poms, ors)| {
            let session_id = format!("s{i:02}");
            let utterances = turns
                .into_iter()
                .enumerate()
                .map(|(k, t)| {
                    let (predicted_label, prediction_scores) = match (t.client, t.prediction) {
                        (true, Some(Some(s))) => (Some(argmax_label(&s.0)), Some(s)),
                        (true, Some(None)) => (Some(t.fallback), None),
                        _ => (None, None),
                    };
                    Utterance {
                        session_id: session_id.clone(),
                        utterance_index: k,
                        speaker: if t.client { Speaker::Client } else { Speaker::Therapist },
                        text: t.text,
                        gold_label: if t.client { t.gold } else { None },
                        predicted_label,
                        prediction_scores,
                    }
                })
                .collect();
            SessionRecord {
                session_id,
                client_id: format!("c{client}"),
                session_index: i as u32,
                utterances,
                poms: poms.map(PomsReport::from_values),
                ors: ors.map(OrsReport::new),
            }
        })
}

fn corpus() -> impl Strategy<Value = Vec<SessionRecord>> {
    (1usize..6).prop_flat_map(|n| (0..n).map(session).collect::<Vec<_>>())
}

struct Files {
    transcripts: Vec<u8>,
    reports: Vec<u8>,
    predictions: Vec<u8>,
}

fn write_all(sessions: &[SessionRecord]) -> Files {
    let mut f = Files {
        transcripts: Vec::new(),
        reports: Vec::new(),
        predictions: Vec::new(),
    };
    write_transcripts(sessions, &mut f.transcripts).unwrap();
    write_self_reports(sessions, &mut f.reports).unwrap();
    write_predictions(sessions, &mut f.predictions).unwrap();
    f
}

fn load_all(f: &Files) -> CorpusBundle {
    let mut bundle = parse_transcripts(&f.transcripts).unwrap();
    apply_self_reports(&f.reports, &mut bundle, &AnalysisConfig::default()).unwrap();
    apply_predictions(&f.predictions, &mut bundle).unwrap();
    bundle
}

fn shuffle_lines(bytes: &[u8], keep_header: bool, seed: u64) -> Vec<u8> {
    let text = std::str::from_utf8(bytes).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    let header = if keep_header && !lines.is_empty() { Some(lines.remove(0)) } else { None };
    lines.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = String::new();
    for l in header.into_iter().chain(lines) {
        out.push_str(l);
        out.push('\n');
    }
    out.into_bytes()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn write_then_load_is_identity(sessions in corpus()) {
        let original = CorpusBundle::from_sessions(sessions);
        let loaded = load_all(&write_all(&original.sessions));
        prop_assert_eq!(&loaded.sessions, &original.sessions);
        prop_assert_eq!(loaded.canonical_hash(), original.canonical_hash());
        prop_assert!(loaded.warnings.is_empty());
    }

    #[test]
    fn line_order_does_not_matter(sessions in corpus(), seed in any::<u64>()) {
        let files = write_all(&CorpusBundle::from_sessions(sessions).sessions);
        let shuffled = Files {
            transcripts: shuffle_lines(&files.transcripts, false, seed),
            reports: shuffle_lines(&files.reports, true, seed ^ 1),
            predictions: shuffle_lines(&files.predictions, false, seed ^ 2),
        };
        prop_assert_eq!(load_all(&files), load_all(&shuffled));
    }
}

#[test]
fn unknown_fields_warn_once_per_field() {
    let text = concat!(
        r#"{"session_id":"a","client_id":"c","session_index":0,"utterance_index":0,"speaker":"client","text":"x","gold_label":null,"mood":1}"#,
        "\n",
        r#"{"session_id":"a","client_id":"c","session_index":0,"utterance_index":1,"speaker":"therapist","text":"y","gold_label":null,"mood":2}"#,
        "\n"
    );
    let b = parse_transcripts(text.as_bytes()).unwrap();
    assert_eq!(b.warnings.len(), 1, "{:?}", b.warnings);
    assert!(b.warnings[0].contains("mood"));
}
