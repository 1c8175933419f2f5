//! The ML-only labeling system: per-frame angular thresholding of predicted
//! gaze directions against a screen reference direction.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, FieldError, Result};
use crate::geometry::{angles_to_unit_vector, classify_frame, GazeAngles, GazeVector};
use crate::session::{extract_positive_intervals, LabelSequence, Session, SystemKind};

/// How frames without a detected face are labeled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingFacePolicy {
    #[default]
    TreatNegative,
    TreatPositive,
    /// Repeat the previous frame's label; leading untrusted frames are negative.
    CarryForward,
}

impl std::str::FromStr for MissingFacePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "treat_negative" | "negative" => Ok(Self::TreatNegative),
            "treat_positive" | "positive" => Ok(Self::TreatPositive),
            "carry_forward" => Ok(Self::CarryForward),
            other => Err(Error::invalid(
                "missing_face_policy",
                format!("unknown policy {other:?}"),
            )),
        }
    }
}

fn default_min_run() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlLabelerConfig {
    #[serde(default = "default_screen_ref")]
    pub screen_ref: GazeVector,
    pub theta: f64,
    #[serde(default = "default_min_run")]
    pub min_run: usize,
    #[serde(default)]
    pub missing_face_policy: MissingFacePolicy,
}

fn default_screen_ref() -> GazeVector {
    GazeVector::CAMERA
}

impl MlLabelerConfig {
    /// Camera-axis reference, no smoothing, untrusted frames negative.
    pub fn with_theta(theta: f64) -> Self {
        Self {
            screen_ref: GazeVector::CAMERA,
            theta,
            min_run: default_min_run(),
            missing_face_policy: MissingFacePolicy::TreatNegative,
        }
    }

    pub fn with_reference_angles(mut self, angles: GazeAngles) -> Result<Self> {
        self.screen_ref = angles_to_unit_vector(angles)?;
        Ok(self)
    }

    /// `theta` must lie in `(0, pi]`; `pi` gives an all-negative labeler.
    pub fn validate(&self) -> Result<()> {
        if !(self.theta.is_finite() && self.theta > 0.0 && self.theta <= PI) {
            return Err(Error::Validation(vec![FieldError::new(
                "theta",
                format!("must lie in (0, pi], got {}", self.theta),
            )]));
        }
        Ok(())
    }
}

/// Labels every frame of `session` and applies run-length smoothing.
pub fn label_session_ml(session: &Session, cfg: &MlLabelerConfig) -> Result<LabelSequence> {
    cfg.validate()?;
    let mut labels = Vec::with_capacity(session.frame_count());
    let mut previous = false;
    for p in &session.predictions {
        let label = if p.is_trusted() {
            classify_frame(p.direction()?, cfg.screen_ref, cfg.theta)
        } else {
            match cfg.missing_face_policy {
                MissingFacePolicy::TreatNegative => false,
                MissingFacePolicy::TreatPositive => true,
                MissingFacePolicy::CarryForward => previous,
            }
        };
        labels.push(label);
        previous = label;
    }
    erase_short_runs(&mut labels, cfg.min_run);
    Ok(LabelSequence::new(SystemKind::MlOnly, labels))
}

/// Clears every positive run shorter than `min_run` frames.
pub fn erase_short_runs(labels: &mut [bool], min_run: usize) {
    if min_run <= 1 {
        return;
    }
    for iv in extract_positive_intervals(labels) {
        if iv.len() < min_run {
            labels[iv.start..=iv.end].fill(false);
        }
    }
}
