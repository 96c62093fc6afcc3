//! Synthetic corpora with planted coherence and well-being association.
//!
//! Per session a latent Gaussian draw sets the positive and negative label
//! shares; shares are discretized to whole utterances by largest-remainder
//! rounding. POMS totals are built from the *realized* shares through a
//! Gaussian copula, `z_P = c * z_U + sqrt(1 - c^2) * eps`, where `c` is the
//! client's planted within-client coherence. Client coherences are spread
//! evenly around the session-wide target so the pooled population
//! correlation equals the target.
//!
//! Well-being (ORS) is planted on the realized per-client coherence values,
//! again through a Gaussian copula, so the population correlation between a
//! client's coherence and mean ORS equals the association target.
//!
//! Client utterance text is drawn from a per-label vocabulary (optionally
//! mixed with shared filler tokens) so the baseline classifier can learn it.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::CorpusBundle;
use crate::model::{EmotionLabel, OrsReport, PomsReport, SessionRecord, Speaker, Utterance};
use crate::stats::{self, PairedSeries};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("INVALID_SPEC: {0}")]
    InvalidSpec(String),
    #[error("INFEASIBLE_SPEC: {0}")]
    InfeasibleSpec(String),
}

impl SynthError {
    pub fn code(&self) -> &'static str {
        match self {
            SynthError::InvalidSpec(_) => "INVALID_SPEC",
            SynthError::InfeasibleSpec(_) => "INFEASIBLE_SPEC",
        }
    }
}

/// Fewest client utterances per session for which a nonzero coherence target
/// is accepted; below this the label shares are too coarse to carry it.
pub const MIN_UTTERANCES_FOR_PLANTING: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_clients: usize,
    pub sessions_per_client: usize,
    /// Inclusive range of client utterances per session.
    pub utterances_per_session: [usize; 2],
    /// Inclusive range of tokens per client utterance.
    pub tokens_per_utterance: [usize; 2],
    /// Planted session-wide coherence, positive and negative.
    pub r_pos: f64,
    pub r_neg: f64,
    /// Planted client-level association of coherence with mean ORS.
    pub a_pos: f64,
    pub a_neg: f64,
    /// Half-width of the even spread of within-client coherence around `r_*`.
    pub coherence_spread: f64,
    /// Expected label distribution (positive, negative, neutral, mixed).
    pub label_skew: [f64; 4],
    /// Distinct tokens per label vocabulary.
    pub vocab_size: usize,
    /// Fraction of client tokens drawn from a label-independent vocabulary.
    pub shared_token_rate: f64,
    /// Fraction of sessions generated without a POMS report.
    pub missing_poms_rate: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_clients: 25,
            sessions_per_client: 8,
            utterances_per_session: [20, 40],
            tokens_per_utterance: [4, 10],
            r_pos: 0.3,
            r_neg: 0.3,
            a_pos: 0.0,
            a_neg: 0.0,
            coherence_spread: 0.3,
            label_skew: [0.25, 0.35, 0.30, 0.10],
            vocab_size: 50,
            shared_token_rate: 0.3,
            missing_poms_rate: 0.0,
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let invalid = |m: String| Err(SynthError::InvalidSpec(m));
        if self.n_clients == 0 || self.sessions_per_client == 0 || self.vocab_size == 0 {
            return invalid("n_clients, sessions_per_client and vocab_size must be positive".into());
        }
        let [u_lo, u_hi] = self.utterances_per_session;
        if u_lo == 0 || u_lo > u_hi {
            return invalid(format!("utterances_per_session {:?} must be a positive range", self.utterances_per_session));
        }
        let [t_lo, t_hi] = self.tokens_per_utterance;
        if t_lo == 0 || t_lo > t_hi {
            return invalid(format!("tokens_per_utterance {:?} must be a positive range", self.tokens_per_utterance));
        }
        for (name, v) in [("r_pos", self.r_pos), ("r_neg", self.r_neg), ("a_pos", self.a_pos), ("a_neg", self.a_neg)] {
            if !(-1.0..=1.0).contains(&v) {
                return invalid(format!("{name} = {v} outside [-1, 1]"));
            }
        }
        if !(self.coherence_spread >= 0.0) {
            return invalid("coherence_spread must be nonnegative".into());
        }
        for (name, v) in [("shared_token_rate", self.shared_token_rate), ("missing_poms_rate", self.missing_poms_rate)] {
            if !(0.0..=1.0).contains(&v) {
                return invalid(format!("{name} = {v} outside [0, 1]"));
            }
        }
        if self.label_skew.iter().any(|v| !(*v >= 0.0)) || self.label_skew.iter().sum::<f64>() <= 0.0 {
            return invalid("label_skew must be nonnegative with a positive sum".into());
        }

        let infeasible = |m: String| Err(SynthError::InfeasibleSpec(m));
        let skew = self.normalized_skew();
        for (name, r, share) in [("r_pos", self.r_pos, skew[0]), ("r_neg", self.r_neg, skew[1])] {
            if r.abs() + self.coherence_spread > 1.0 {
                return infeasible(format!("|{name}| + coherence_spread exceeds 1"));
            }
            if r != 0.0 && u_lo < MIN_UTTERANCES_FOR_PLANTING {
                return infeasible(format!(
                    "{name} = {r} needs at least {MIN_UTTERANCES_FOR_PLANTING} utterances per session, got {u_lo}"
                ));
            }
            if r != 0.0 && (share <= 0.0 || share >= 1.0) {
                return infeasible(format!("{name} = {r} needs a label share strictly between 0 and 1"));
            }
        }
        if self.a_pos * self.a_pos + self.a_neg * self.a_neg > 1.0 {
            return infeasible("a_pos^2 + a_neg^2 exceeds 1".into());
        }
        if (self.a_pos != 0.0 || self.a_neg != 0.0) && (self.n_clients < 3 || self.sessions_per_client < 3) {
            return infeasible("association targets need at least 3 clients with 3 sessions".into());
        }
        Ok(())
    }

    fn normalized_skew(&self) -> [f64; 4] {
        let total: f64 = self.label_skew.iter().sum();
        self.label_skew.map(|v| v / total)
    }
}

/// The planted values of one session, as the analysis pipeline will see them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSession {
    pub session_id: String,
    pub client_id: String,
    pub session_index: u32,
    pub latent_pos: f64,
    pub latent_neg: f64,
    pub counts: [usize; 4],
    pub u_pos: f64,
    pub u_neg: f64,
    pub p_pos: Option<f64>,
    pub p_neg: Option<f64>,
    pub ors_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedClient {
    pub client_id: String,
    pub planted_coherence_pos: f64,
    pub planted_coherence_neg: f64,
    /// Coherence of the generated series; `None` when degenerate.
    pub realized_coherence_pos: Option<f64>,
    pub realized_coherence_neg: Option<f64>,
    pub ors_level: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealizedCorrelations {
    pub session_pos: Option<f64>,
    pub session_neg: Option<f64>,
    pub association_pos: Option<f64>,
    pub association_neg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: SynthSpec,
    pub sessions: Vec<PlantedSession>,
    pub clients: Vec<PlantedClient>,
    pub realized: RealizedCorrelations,
}

/// Pearson r by its definition; `None` for fewer than two points or a constant side.
fn direct_pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let vx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let vy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if xs.iter().all(|x| *x == xs[0]) || ys.iter().all(|y| *y == ys[0]) || vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some((cov / (vx.sqrt() * vy.sqrt())).clamp(-1.0, 1.0))
}

/// Exact empirical correlations of the planted series: session-wide over
/// sessions with POMS, and client-level over clients with a realized coherence.
pub fn realized_correlations(truth: &GroundTruth) -> RealizedCorrelations {
    let session = |pick: fn(&PlantedSession) -> (f64, Option<f64>)| {
        let (us, ps): (Vec<f64>, Vec<f64>) = truth
            .sessions
            .iter()
            .filter_map(|s| {
                let (u, p) = pick(s);
                Some((u, p?))
            })
            .unzip();
        direct_pearson(&us, &ps)
    };
    let association = |pick: fn(&PlantedClient) -> Option<f64>| {
        let (cs, ors): (Vec<f64>, Vec<f64>) = truth
            .clients
            .iter()
            .filter_map(|c| {
                let coherence = pick(c)?;
                let totals: Vec<f64> = truth
                    .sessions
                    .iter()
                    .filter(|s| s.client_id == c.client_id && s.p_pos.is_some())
                    .map(|s| s.ors_total)
                    .collect();
                (!totals.is_empty()).then(|| (coherence, totals.iter().sum::<f64>() / totals.len() as f64))
            })
            .unzip();
        direct_pearson(&cs, &ors)
    };
    RealizedCorrelations {
        session_pos: session(|s| (s.u_pos, s.p_pos)),
        session_neg: session(|s| (s.u_neg, s.p_neg)),
        association_pos: association(|c| c.realized_coherence_pos),
        association_neg: association(|c| c.realized_coherence_neg),
    }
}

/// Rounds `shares * total` to integers summing exactly to `total`; leftover
/// units go to the largest fractional parts, ties to the earlier label.
pub fn largest_remainder(shares: [f64; 4], total: usize) -> [usize; 4] {
    let raw = shares.map(|s| s * total as f64);
    let mut counts = raw.map(|v| v.floor() as usize);
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &k in order.iter().take(total.saturating_sub(assigned)) {
        counts[k] += 1;
    }
    counts
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn round_to(v: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    (v * f).round() / f
}

/// Splits `total` into `n` nonnegative parts of at most `cap`, jittered around `total / n`.
fn split_total<const N: usize>(rng: &mut ChaCha8Rng, total: f64, cap: f64, decimals: i32) -> [f64; N] {
    let base = total / N as f64;
    let amp = 0.5f64.min(cap - base).min(base).max(0.0);
    let mut jitter: [f64; N] = std::array::from_fn(|_| rng.random_range(-1.0..=1.0));
    let mean = jitter.iter().sum::<f64>() / N as f64;
    let spread = jitter.iter().map(|j| (j - mean).abs()).fold(0.0, f64::max).max(1e-12);
    for j in &mut jitter {
        *j = (*j - mean) / spread * amp;
    }
    jitter.map(|j| round_to(base + j, decimals).clamp(0.0, cap))
}

struct Shares {
    mean: [f64; 2],
    sd: [f64; 2],
    rest_split: f64,
}

impl Shares {
    fn new(skew: [f64; 4]) -> Self {
        let sd = |m: f64| 0.1f64.min(m / 3.0).min((1.0 - m) / 3.0).max(0.0);
        let rest = skew[2] + skew[3];
        Self {
            mean: [skew[0], skew[1]],
            sd: [sd(skew[0]), sd(skew[1])],
            rest_split: if rest > 0.0 { skew[2] / rest } else { 1.0 },
        }
    }

    fn targets(&self, z: [f64; 2]) -> [f64; 4] {
        let mut pos = (self.mean[0] + self.sd[0] * z[0]).clamp(0.0, 1.0);
        let mut neg = (self.mean[1] + self.sd[1] * z[1]).clamp(0.0, 1.0);
        if pos + neg > 1.0 {
            let s = pos + neg;
            pos /= s;
            neg /= s;
        }
        let rest = (1.0 - pos - neg).max(0.0);
        [pos, neg, rest * self.rest_split, rest * (1.0 - self.rest_split)]
    }

    /// Standardized position of a realized share on the latent scale.
    fn standardize(&self, k: usize, share: f64) -> f64 {
        if self.sd[k] > 0.0 {
            (share - self.mean[k]) / self.sd[k]
        } else {
            0.0
        }
    }
}

const POMS_CENTER: f64 = 12.0;
const POMS_SCALE: f64 = 2.5;
const ORS_CENTER: f64 = 20.0;
const ORS_SCALE: f64 = 4.5;
const ORS_SESSION_NOISE: f64 = 1.5;

/// Evenly spaced offsets in `[-1, 1]` with mean exactly zero, shuffled.
fn even_offsets(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut q: Vec<f64> = (0..n)
        .map(|i| if n == 1 { 0.0 } else { -1.0 + 2.0 * i as f64 / (n - 1) as f64 })
        .collect();
    q.shuffle(rng);
    q
}

fn standardize(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    values
        .iter()
        .map(|v| if sd > 0.0 { (v - mean) / sd } else { 0.0 })
        .collect()
}

fn utterance_text(rng: &mut ChaCha8Rng, spec: &SynthSpec, prefix: &str) -> String {
    let n = rng.random_range(spec.tokens_per_utterance[0]..=spec.tokens_per_utterance[1]);
    (0..n)
        .map(|_| {
            let idx = rng.random_range(0..spec.vocab_size);
            if rng.random_bool(spec.shared_token_rate) {
                format!("w{idx}")
            } else {
                format!("{prefix}{idx}")
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn vocab_prefix(label: EmotionLabel) -> &'static str {
    match label {
        EmotionLabel::Positive => "pos",
        EmotionLabel::Negative => "neg",
        EmotionLabel::Neutral => "neu",
        EmotionLabel::Mixed => "mix",
    }
}

/// Generates a corpus and its ground truth. Deterministic per spec (including seed).
pub fn generate(spec: &SynthSpec) -> Result<(CorpusBundle, GroundTruth), SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let shares = Shares::new(spec.normalized_skew());

    let offsets_pos = even_offsets(&mut rng, spec.n_clients);
    let offsets_neg = even_offsets(&mut rng, spec.n_clients);
    let coherence = |r: f64, q: f64| if spec.coherence_spread == 0.0 { r } else { r + spec.coherence_spread * q };

    let mut sessions = Vec::new();
    let mut planted = Vec::new();
    let mut clients = Vec::new();

    for l in 0..spec.n_clients {
        let client_id = format!("c{l:03}");
        let c = [coherence(spec.r_pos, offsets_pos[l]), coherence(spec.r_neg, offsets_neg[l])];
        for m in 0..spec.sessions_per_client {
            let session_id = format!("{client_id}-s{m:02}");
            let n_client = rng.random_range(spec.utterances_per_session[0]..=spec.utterances_per_session[1]);
            let z = [normal(&mut rng), normal(&mut rng)];
            let counts = largest_remainder(shares.targets(z), n_client);
            let u = [
                counts[0] as f64 / n_client as f64,
                counts[1] as f64 / n_client as f64,
            ];

            let mut p = [0.0; 2];
            for k in 0..2 {
                let z_u = shares.standardize(k, u[k]);
                let eps = normal(&mut rng);
                let z_p = c[k] * z_u + (1.0 - c[k] * c[k]).max(0.0).sqrt() * eps;
                p[k] = (POMS_CENTER + POMS_SCALE * z_p).clamp(0.0, 24.0);
            }
            let pos_parts: [f64; 3] = split_total(&mut rng, p[0], 8.0, 6);
            let neg_parts: [f64; 3] = split_total(&mut rng, p[1], 8.0, 6);
            let poms = PomsReport::from_values([
                pos_parts[0],
                pos_parts[1],
                pos_parts[2],
                neg_parts[0],
                neg_parts[1],
                neg_parts[2],
            ]);
            let has_poms = !rng.random_bool(spec.missing_poms_rate);

            let mut labels: Vec<EmotionLabel> = EmotionLabel::ALL
                .iter()
                .flat_map(|l| std::iter::repeat_n(*l, counts[l.index()]))
                .collect();
            labels.shuffle(&mut rng);
            let mut utterances = Vec::with_capacity(2 * n_client);
            for label in labels {
                let therapist = utterance_text(&mut rng, spec, "t");
                let client = utterance_text(&mut rng, spec, vocab_prefix(label));
                for (speaker, text, gold) in [(Speaker::Therapist, therapist, None), (Speaker::Client, client, Some(label))] {
                    utterances.push(Utterance {
                        session_id: session_id.clone(),
                        utterance_index: utterances.len(),
                        speaker,
                        text,
                        gold_label: gold,
                        predicted_label: None,
                        prediction_scores: None,
                    });
                }
            }

            planted.push(PlantedSession {
                session_id: session_id.clone(),
                client_id: client_id.clone(),
                session_index: m as u32,
                latent_pos: z[0],
                latent_neg: z[1],
                counts,
                u_pos: u[0],
                u_neg: u[1],
                p_pos: has_poms.then(|| poms.calmness + poms.contentment + poms.vigor),
                p_neg: has_poms.then(|| poms.anger + poms.sad + poms.anxiety),
                ors_total: 0.0,
            });
            sessions.push(SessionRecord {
                session_id,
                client_id: client_id.clone(),
                session_index: m as u32,
                utterances,
                poms: has_poms.then_some(poms),
                ors: None,
            });
        }
        clients.push(PlantedClient {
            client_id,
            planted_coherence_pos: c[0],
            planted_coherence_neg: c[1],
            realized_coherence_pos: None,
            realized_coherence_neg: None,
            ors_level: 0.0,
        });
    }

    // Realized per-client coherence, computed as the pipeline computes it.
    for (l, client) in clients.iter_mut().enumerate() {
        let rows: Vec<&PlantedSession> = planted[l * spec.sessions_per_client..(l + 1) * spec.sessions_per_client]
            .iter()
            .filter(|s| s.p_pos.is_some())
            .collect();
        let realized = |pick: fn(&PlantedSession) -> (f64, f64)| {
            let (us, ps): (Vec<f64>, Vec<f64>) = rows.iter().map(|s| pick(s)).unzip();
            PairedSeries::new(&us, &ps).ok().and_then(|s| stats::pearson_r(&s).ok())
        };
        client.realized_coherence_pos = realized(|s| (s.u_pos, s.p_pos.unwrap_or_default()));
        client.realized_coherence_neg = realized(|s| (s.u_neg, s.p_neg.unwrap_or_default()));
    }

    // Well-being planted on the standardized realized coherence.
    let zc_pos = standardize(&clients.iter().map(|c| c.realized_coherence_pos.unwrap_or(0.0)).collect::<Vec<_>>());
    let zc_neg = standardize(&clients.iter().map(|c| c.realized_coherence_neg.unwrap_or(0.0)).collect::<Vec<_>>());
    let n = spec.n_clients as f64;
    let rho = zc_pos.iter().zip(&zc_neg).map(|(a, b)| a * b).sum::<f64>() / n;
    let (w, b) = if 1.0 - rho * rho > 1e-9 {
        let s = (1.0 - rho * rho).sqrt();
        let w: Vec<f64> = zc_pos.iter().zip(&zc_neg).map(|(p, q)| (q - rho * p) / s).collect();
        (w, (spec.a_neg - spec.a_pos * rho) / s)
    } else if (spec.a_neg - spec.a_pos * rho).abs() <= 1e-9 {
        (vec![0.0; spec.n_clients], 0.0)
    } else {
        return Err(SynthError::InfeasibleSpec(
            "realized positive and negative coherence are collinear; association targets cannot both hold".into(),
        ));
    };
    let resid = 1.0 - spec.a_pos * spec.a_pos - b * b;
    if resid < -1e-12 {
        return Err(SynthError::InfeasibleSpec(format!(
            "association targets a_pos = {}, a_neg = {} unreachable given realized coherence correlation {rho:.3}",
            spec.a_pos, spec.a_neg
        )));
    }
    let resid = resid.max(0.0).sqrt();

    for (l, client) in clients.iter_mut().enumerate() {
        let latent = spec.a_pos * zc_pos[l] + b * w[l] + resid * normal(&mut rng);
        client.ors_level = (ORS_CENTER + ORS_SCALE * latent).clamp(2.0, 38.0);
        let range = l * spec.sessions_per_client..(l + 1) * spec.sessions_per_client;
        let noise: Vec<f64> = range.clone().map(|_| ORS_SESSION_NOISE * normal(&mut rng)).collect();
        let noise_mean = noise.iter().sum::<f64>() / noise.len() as f64;
        for (i, idx) in range.enumerate() {
            let total = (client.ors_level + noise[i] - noise_mean).clamp(0.0, 40.0);
            let scales: [f64; 4] = split_total(&mut rng, total, 10.0, 2);
            let ors = OrsReport::new(scales);
            planted[idx].ors_total = ors.total;
            sessions[idx].ors = Some(ors);
        }
    }

    let mut truth = GroundTruth {
        spec: spec.clone(),
        sessions: planted,
        clients,
        realized: RealizedCorrelations {
            session_pos: None,
            session_neg: None,
            association_pos: None,
            association_neg: None,
        },
    };
    truth.realized = realized_correlations(&truth);
    Ok((CorpusBundle::from_sessions(sessions), truth))
}
