//! Seeded generators for synthetic sessions and simulated proctors.
//!
//! Every generator owns a [`ChaCha8Rng`] built by [`entity_rng`] from an
//! explicit `(seed, stream)` pair. Distinct concerns draw from distinct
//! streams so that, for example, changing the ML noise level never moves the
//! ground-truth events:
//!
//! | entity             | stream | draws                                   |
//! |--------------------|--------|-----------------------------------------|
//! | session events     | 0      | event count, durations, starts, offsets |
//! | session gaze       | 1      | on-screen noise per frame               |
//! | session ML noise   | 2      | prediction perturbation per frame       |
//! | session face loss  | 3      | face dropout per frame                  |
//! | proctor detections | 10     | keep/jitter per event, false alarms     |
//! | proctor verifying  | 11     | hybrid verification of ML intervals     |
//! | proctor voting     | 12     | review-interval judgments               |
//!
//! Child seeds for per-session entities come from [`derive_seed`] (numeric
//! index) or [`derive_seed_for`] (string key).

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, FieldError, Result};
use crate::eval::{IntervalVote, ReviewSet};
use crate::geometry::{angles_to_unit_vector, GazeAngles, GazeVector};
use crate::session::{
    extract_positive_intervals, frame_to_ms, intervals_to_labels, GazePrediction, LabelSequence,
    PositiveInterval, Session, SystemKind,
};

const EVENT_STREAM: u64 = 0;
const GAZE_STREAM: u64 = 1;
const ML_STREAM: u64 = 2;
const FACE_STREAM: u64 = 3;
const DETECT_STREAM: u64 = 10;
const VERIFY_STREAM: u64 = 11;
const VOTE_STREAM: u64 = 12;

/// Attempts per event before giving up on placing it without overlap.
const MAX_PLACEMENT_ATTEMPTS: usize = 100;

pub fn entity_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer applied to `base + (index + 1) * golden`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// First 8 bytes (little-endian) of `sha256(base_le || key)`.
pub fn derive_seed_for(base: u64, key: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update(key.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

fn minutes(frame_count: usize, fps: f64) -> f64 {
    frame_count as f64 / (fps * 60.0)
}

fn poisson_count(rng: &mut impl Rng, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("positive finite mean");
    let n: f64 = d.sample(rng);
    n as usize
}

/// Rotates `dir` by a half-normal angle of scale `sigma` about a uniformly
/// random axis perpendicular to it. Always consumes two draws.
fn perturb(rng: &mut impl Rng, dir: GazeVector, sigma: f64) -> GazeVector {
    let azimuth = rng.random::<f64>() * TAU;
    let z: f64 = StandardNormal.sample(rng);
    dir.tilted(azimuth, (z * sigma).abs())
}

fn default_screen_ref() -> GazeAngles {
    GazeAngles { pitch: 0.0, yaw: 0.0 }
}

/// Generative parameters for one synthetic session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub frame_count: usize,
    pub fps: f64,
    /// Angular noise while looking at the screen, radians.
    pub sigma_on: f64,
    /// Look-away events per minute.
    pub lookaway_rate: f64,
    /// Inclusive event length range in frames.
    pub duration_range: [usize; 2],
    /// Inclusive offset range from the screen direction, radians.
    pub lookaway_angle_range: [f64; 2],
    /// ML prediction noise, radians.
    pub sigma_ml: f64,
    pub seed: u64,
    /// Probability that a frame has no detected face.
    #[serde(default)]
    pub face_dropout: f64,
    #[serde(default = "default_screen_ref")]
    pub screen_ref: GazeAngles,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let mut check = |ok: bool, field: &str, msg: String| {
            if !ok {
                errs.push(FieldError::new(field, msg));
            }
        };
        check(self.frame_count > 0, "frame_count", "must be positive".into());
        check(
            self.fps.is_finite() && self.fps > 0.0,
            "fps",
            format!("must be positive, got {}", self.fps),
        );
        check(
            self.sigma_on.is_finite() && self.sigma_on >= 0.0,
            "sigma_on",
            format!("must be non-negative, got {}", self.sigma_on),
        );
        check(
            self.sigma_ml.is_finite() && self.sigma_ml >= 0.0,
            "sigma_ml",
            format!("must be non-negative, got {}", self.sigma_ml),
        );
        check(
            self.lookaway_rate.is_finite() && self.lookaway_rate >= 0.0,
            "lookaway_rate",
            format!("must be non-negative, got {}", self.lookaway_rate),
        );
        let [d_min, d_max] = self.duration_range;
        check(
            d_min >= 1 && d_min <= d_max,
            "duration_range",
            format!("need 1 <= d_min <= d_max, got [{d_min}, {d_max}]"),
        );
        let [a_min, a_max] = self.lookaway_angle_range;
        check(
            a_min.is_finite() && a_max.is_finite() && a_min > self.sigma_on && a_min <= a_max && a_max < PI,
            "lookaway_angle_range",
            format!("need sigma_on < a_min <= a_max < pi, got [{a_min}, {a_max}]"),
        );
        check(
            (0.0..=1.0).contains(&self.face_dropout),
            "face_dropout",
            format!("must lie in [0, 1], got {}", self.face_dropout),
        );
        if let Err(e) = self.screen_ref.validate() {
            errs.push(FieldError::new("screen_ref", e.to_string()));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub fn expected_event_count(&self) -> f64 {
        self.lookaway_rate * minutes(self.frame_count, self.fps)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

/// True look-away events of a synthetic session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub frame_count: usize,
    pub events: Vec<PositiveInterval>,
}

impl GroundTruth {
    pub fn from_labels(labels: &[bool]) -> Self {
        Self {
            frame_count: labels.len(),
            events: extract_positive_intervals(labels),
        }
    }

    pub fn labels(&self) -> Vec<bool> {
        intervals_to_labels(&self.events, self.frame_count).expect("events within bounds")
    }

    /// Whether `interval` touches any true event.
    pub fn overlaps(&self, interval: &PositiveInterval) -> bool {
        let idx = self.events.partition_point(|e| e.end < interval.start);
        self.events.get(idx).is_some_and(|e| e.overlaps(interval))
    }
}

fn place_events(rng: &mut ChaCha8Rng, cfg: &ScenarioConfig) -> Vec<PositiveInterval> {
    let t = cfg.frame_count;
    let n = poisson_count(rng, cfg.expected_event_count());
    let [d_min, d_max] = cfg.duration_range;
    let mut events: Vec<PositiveInterval> = Vec::with_capacity(n);
    for _ in 0..n {
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let d = rng.random_range(d_min..=d_max).min(t);
            let start = rng.random_range(0..=t - d);
            let candidate = PositiveInterval::new(start, start + d - 1);
            // a one-frame gap keeps events distinct after rasterization
            let clash = events
                .iter()
                .any(|e| candidate.start <= e.end + 1 && e.start <= candidate.end + 1);
            if !clash {
                events.push(candidate);
                break;
            }
        }
    }
    events.sort_unstable();
    events
}

/// Generates a session and its ground truth. Pure in `(id, cfg)`.
pub fn generate_session(id: &str, cfg: &ScenarioConfig) -> Result<(Session, GroundTruth)> {
    cfg.validate()?;
    let t = cfg.frame_count;
    let [d_min, d_max] = cfg.duration_range;
    let mean_len = (d_min + d_max) as f64 / 2.0;
    if d_min > t || cfg.expected_event_count() * mean_len > t as f64 {
        return Err(Error::domain(format!(
            "expected look-away frames ({:.1} events x {mean_len} frames) exceed session length {t}",
            cfg.expected_event_count()
        )));
    }

    let screen = angles_to_unit_vector(cfg.screen_ref)?;
    let mut event_rng = entity_rng(cfg.seed, EVENT_STREAM);
    let events = place_events(&mut event_rng, cfg);
    let [a_min, a_max] = cfg.lookaway_angle_range;
    let event_dirs: Vec<GazeVector> = events
        .iter()
        .map(|_| {
            let azimuth = event_rng.random::<f64>() * TAU;
            let angle = if a_min < a_max {
                event_rng.random_range(a_min..=a_max)
            } else {
                a_min
            };
            screen.tilted(azimuth, angle)
        })
        .collect();

    let mut gaze_rng = entity_rng(cfg.seed, GAZE_STREAM);
    let mut ml_rng = entity_rng(cfg.seed, ML_STREAM);
    let mut face_rng = entity_rng(cfg.seed, FACE_STREAM);
    let mut predictions = Vec::with_capacity(t);
    let mut next_event = 0;
    for frame in 0..t {
        while next_event < events.len() && events[next_event].end < frame {
            next_event += 1;
        }
        let on_screen = perturb(&mut gaze_rng, screen, cfg.sigma_on);
        let truth = match events.get(next_event) {
            Some(e) if e.contains(frame) => event_dirs[next_event],
            _ => on_screen,
        };
        let predicted = perturb(&mut ml_rng, truth, cfg.sigma_ml).to_angles();
        let face_detected = face_rng.random::<f64>() >= cfg.face_dropout;
        predictions.push(GazePrediction {
            frame,
            t_ms: frame_to_ms(frame, cfg.fps),
            pitch: predicted.pitch,
            yaw: predicted.yaw,
            face_detected,
            confidence: if face_detected { 1.0 } else { 0.0 },
        });
    }
    let session = Session::new(id, cfg.fps, predictions, Vec::new())?;
    Ok((
        session,
        GroundTruth {
            frame_count: t,
            events,
        },
    ))
}

fn default_false_alarm_max_len() -> usize {
    10
}

/// Behavioral parameters of one simulated proctor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProctorProfile {
    /// Probability a true event is flagged.
    pub p_detect: f64,
    /// Spurious flagged events per minute.
    pub p_false_alarm: f64,
    /// Maximum start/end error in frames.
    pub boundary_jitter: usize,
    /// Probability of judging a presented interval correctly.
    pub p_verify_correct: f64,
    pub seed: u64,
    /// Spurious events last between 1 and this many frames.
    #[serde(default = "default_false_alarm_max_len")]
    pub false_alarm_max_len: usize,
}

impl ProctorProfile {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        for (name, p) in [
            ("p_detect", self.p_detect),
            ("p_verify_correct", self.p_verify_correct),
        ] {
            if !(0.0..=1.0).contains(&p) {
                errs.push(FieldError::new(name, format!("must lie in [0, 1], got {p}")));
            }
        }
        if !(self.p_false_alarm.is_finite() && self.p_false_alarm >= 0.0) {
            errs.push(FieldError::new(
                "p_false_alarm",
                format!("must be non-negative, got {}", self.p_false_alarm),
            ));
        }
        if self.false_alarm_max_len == 0 {
            errs.push(FieldError::new("false_alarm_max_len", "must be at least 1"));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

fn proctor_intervals(
    gt: &GroundTruth,
    profile: &ProctorProfile,
    frame_count: usize,
    fps: f64,
) -> Vec<PositiveInterval> {
    let mut rng = entity_rng(profile.seed, DETECT_STREAM);
    let j = profile.boundary_jitter as i64;
    let last = frame_count as i64 - 1;
    let mut out = Vec::new();
    for e in &gt.events {
        let keep = rng.random::<f64>() < profile.p_detect;
        let ds = rng.random_range(-j..=j);
        let de = rng.random_range(-j..=j);
        if keep {
            let s = (e.start as i64 + ds).clamp(0, last);
            let t = (e.end as i64 + de).clamp(0, last);
            out.push(PositiveInterval::new(s.min(t) as usize, s.max(t) as usize));
        }
    }
    let n = poisson_count(&mut rng, profile.p_false_alarm * minutes(frame_count, fps));
    for _ in 0..n {
        let len = rng.random_range(1..=profile.false_alarm_max_len).min(frame_count);
        let start = rng.random_range(0..=frame_count - len);
        out.push(PositiveInterval::new(start, start + len - 1));
    }
    out
}

/// Human-only labeling: each true event kept with `p_detect`, endpoints
/// jittered, plus Poisson false alarms.
pub fn simulate_proctor(
    gt: &GroundTruth,
    profile: &ProctorProfile,
    frame_count: usize,
    fps: f64,
) -> Result<LabelSequence> {
    profile.validate()?;
    check_truth(gt, frame_count)?;
    let ivs = proctor_intervals(gt, profile, frame_count, fps);
    Ok(LabelSequence::new(
        SystemKind::HumanOnly,
        intervals_to_labels(&ivs, frame_count)?,
    ))
}

/// Hybrid labeling: the proctor's own detections (same draws as
/// [`simulate_proctor`] with this profile) plus every ML-positive interval
/// the proctor confirms after inspecting it.
pub fn simulate_hybrid_proctor(
    gt: &GroundTruth,
    ml: &LabelSequence,
    profile: &ProctorProfile,
    frame_count: usize,
    fps: f64,
) -> Result<LabelSequence> {
    profile.validate()?;
    check_truth(gt, frame_count)?;
    if ml.len() != frame_count {
        return Err(Error::domain(format!(
            "ML labels have {} frames, expected {frame_count}",
            ml.len()
        )));
    }
    let mut ivs = proctor_intervals(gt, profile, frame_count, fps);
    let mut rng = entity_rng(profile.seed, VERIFY_STREAM);
    for iv in ml.intervals() {
        if judge(&mut rng, gt.overlaps(&iv), profile.p_verify_correct) {
            ivs.push(iv);
        }
    }
    Ok(LabelSequence::new(
        SystemKind::Hybrid,
        intervals_to_labels(&ivs, frame_count)?,
    ))
}

fn judge(rng: &mut impl Rng, truly_positive: bool, p_correct: f64) -> bool {
    let correct = rng.random::<f64>() < p_correct;
    truly_positive == correct
}

/// One judgment per (proctor, review interval). An interval is truly
/// positive iff it overlaps a ground-truth event.
pub fn simulate_votes(
    review_set: &ReviewSet,
    gt: &GroundTruth,
    profiles: &[ProctorProfile],
) -> Result<Vec<IntervalVote>> {
    if profiles.is_empty() {
        return Err(Error::domain("at least one voting proctor is required"));
    }
    for p in profiles {
        p.validate()?;
    }
    check_truth(gt, review_set.frame_count)?;
    let mut votes: Vec<IntervalVote> = review_set
        .intervals
        .iter()
        .map(|&interval| IntervalVote {
            interval,
            votes: Vec::with_capacity(profiles.len()),
        })
        .collect();
    for p in profiles {
        let mut rng = entity_rng(p.seed, VOTE_STREAM);
        for v in &mut votes {
            let truth = gt.overlaps(&v.interval);
            v.votes.push(judge(&mut rng, truth, p.p_verify_correct));
        }
    }
    Ok(votes)
}

fn check_truth(gt: &GroundTruth, frame_count: usize) -> Result<()> {
    if gt.frame_count != frame_count {
        return Err(Error::domain(format!(
            "ground truth has {} frames, expected {frame_count}",
            gt.frame_count
        )));
    }
    Ok(())
}
