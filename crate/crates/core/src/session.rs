//! Sessions, per-frame predictions, label sequences and the interval algebra
//! over them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{angles_to_unit_vector, GazeAngles, GazeVector};

/// One labeling system whose output is a [`LabelSequence`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    HumanOnly,
    MlOnly,
    Hybrid,
    Reference,
}

impl SystemKind {
    /// The three systems compared by the evaluation.
    pub const EVALUATED: [SystemKind; 3] =
        [SystemKind::HumanOnly, SystemKind::MlOnly, SystemKind::Hybrid];

    pub fn as_str(&self) -> &'static str {
        match self {
            SystemKind::HumanOnly => "human_only",
            SystemKind::MlOnly => "ml_only",
            SystemKind::Hybrid => "hybrid",
            SystemKind::Reference => "reference",
        }
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SystemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "human_only" => Ok(SystemKind::HumanOnly),
            "ml_only" => Ok(SystemKind::MlOnly),
            "hybrid" => Ok(SystemKind::Hybrid),
            "reference" => Ok(SystemKind::Reference),
            other => Err(Error::invalid(
                "system",
                format!("unknown system {other:?}, expected human_only|ml_only|hybrid|reference"),
            )),
        }
    }
}

/// An inclusive frame range `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PositiveInterval {
    pub start: usize,
    pub end: usize,
}

impl PositiveInterval {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, frame: usize) -> bool {
        self.start <= frame && frame <= self.end
    }

    pub fn overlaps(&self, other: &PositiveInterval) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    pub fn validate(&self, frame_count: usize) -> Result<()> {
        if self.start > self.end || self.end >= frame_count {
            return Err(Error::domain(format!(
                "interval ({}, {}) outside [0, {frame_count})",
                self.start, self.end
            )));
        }
        Ok(())
    }
}

/// A binary per-frame labeling produced by one system.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSequence {
    pub system: SystemKind,
    pub labels: Vec<bool>,
}

impl LabelSequence {
    pub fn new(system: SystemKind, labels: Vec<bool>) -> Self {
        Self { system, labels }
    }

    pub fn zeros(system: SystemKind, frame_count: usize) -> Self {
        Self::new(system, vec![false; frame_count])
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn count_positive(&self) -> usize {
        self.labels.iter().filter(|&&b| b).count()
    }

    pub fn intervals(&self) -> Vec<PositiveInterval> {
        extract_positive_intervals(&self.labels)
    }
}

/// A notable moment shown on the timeline's event lane.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventMarker {
    pub frame: usize,
    pub kind: String,
    pub note: String,
}

/// One line of ingested model output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazePrediction {
    pub frame: usize,
    pub t_ms: u64,
    pub pitch: f64,
    pub yaw: f64,
    #[serde(rename = "face")]
    pub face_detected: bool,
    #[serde(rename = "conf")]
    pub confidence: f64,
}

impl GazePrediction {
    pub fn angles(&self) -> GazeAngles {
        GazeAngles {
            pitch: self.pitch,
            yaw: self.yaw,
        }
    }

    /// Frames without a detected face keep their angles but are untrusted.
    pub fn is_trusted(&self) -> bool {
        self.face_detected
    }

    pub fn direction(&self) -> Result<GazeVector> {
        angles_to_unit_vector(self.angles())
    }
}

/// Frame timestamp in milliseconds, `round(frame * 1000 / fps)`.
pub fn frame_to_ms(frame: usize, fps: f64) -> u64 {
    (frame as f64 * 1000.0 / fps).round() as u64
}

/// A recorded exam session as seen by the review tooling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub fps: f64,
    pub predictions: Vec<GazePrediction>,
    #[serde(default)]
    pub events: Vec<EventMarker>,
}

impl Session {
    pub fn new(
        id: impl Into<String>,
        fps: f64,
        predictions: Vec<GazePrediction>,
        events: Vec<EventMarker>,
    ) -> Result<Self> {
        let session = Self {
            id: id.into(),
            fps,
            predictions,
            events,
        };
        session.validate()?;
        Ok(session)
    }

    pub fn frame_count(&self) -> usize {
        self.predictions.len()
    }

    /// Checks frame contiguity, timestamps, angle ranges and marker bounds.
    pub fn validate(&self) -> Result<()> {
        validate_id(&self.id)?;
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::invalid("fps", format!("must be positive, got {}", self.fps)));
        }
        if self.predictions.is_empty() {
            return Err(Error::invalid("predictions", "session must contain at least one frame"));
        }
        for (i, p) in self.predictions.iter().enumerate() {
            if p.frame != i {
                return Err(Error::invalid(
                    format!("predictions[{i}].frame"),
                    format!("expected frame {i}, got {}", p.frame),
                ));
            }
            let expected = frame_to_ms(i, self.fps);
            if p.t_ms.abs_diff(expected) > 1 {
                return Err(Error::invalid(
                    format!("predictions[{i}].t_ms"),
                    format!("expected {expected} +/- 1 ms at {} fps, got {}", self.fps, p.t_ms),
                ));
            }
            if let Err(e) = p.angles().validate() {
                return Err(Error::invalid(format!("predictions[{i}]"), e.to_string()));
            }
            if !(0.0..=1.0).contains(&p.confidence) {
                return Err(Error::invalid(
                    format!("predictions[{i}].conf"),
                    format!("confidence {} outside [0, 1]", p.confidence),
                ));
            }
        }
        let t = self.frame_count();
        for (i, e) in self.events.iter().enumerate() {
            if e.frame >= t {
                return Err(Error::invalid(
                    format!("events[{i}].frame"),
                    format!("frame {} beyond session length {t}", e.frame),
                ));
            }
        }
        Ok(())
    }
}

/// Identifiers double as directory names, so they are restricted to
/// `[A-Za-z0-9._-]`, non-empty, at most 128 bytes and not starting with `.`.
pub fn validate_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-'));
    if ok {
        Ok(())
    } else {
        Err(Error::invalid("id", format!("invalid identifier {id:?}")))
    }
}

/// Maximal runs of `true`, in order.
pub fn extract_positive_intervals(labels: &[bool]) -> Vec<PositiveInterval> {
    let mut out = Vec::new();
    let mut run_start = None;
    for (t, &b) in labels.iter().enumerate() {
        match (b, run_start) {
            (true, None) => run_start = Some(t),
            (false, Some(s)) => {
                out.push(PositiveInterval::new(s, t - 1));
                run_start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = run_start {
        out.push(PositiveInterval::new(s, labels.len() - 1));
    }
    out
}

/// Rasterizes intervals (possibly overlapping, any order) into a label vector.
pub fn intervals_to_labels(intervals: &[PositiveInterval], frame_count: usize) -> Result<Vec<bool>> {
    let mut labels = vec![false; frame_count];
    for iv in intervals {
        iv.validate(frame_count)?;
        labels[iv.start..=iv.end].fill(true);
    }
    Ok(labels)
}

/// Union of interval lists, coalescing overlapping and abutting ranges.
pub fn merge_interval_sets<'a, I>(sets: I) -> Vec<PositiveInterval>
where
    I: IntoIterator<Item = &'a [PositiveInterval]>,
{
    let mut all: Vec<PositiveInterval> = sets
        .into_iter()
        .flat_map(|s| s.iter().copied())
        .collect();
    all.sort_unstable();
    let mut out: Vec<PositiveInterval> = Vec::with_capacity(all.len());
    for iv in all {
        match out.last_mut() {
            Some(last) if iv.start <= last.end.saturating_add(1) => {
                last.end = last.end.max(iv.end);
            }
            _ => out.push(iv),
        }
    }
    out
}
