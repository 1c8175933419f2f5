//! Line-delimited prediction files.
//!
//! One JSON object per line, keys in this order:
//!
//! ```text
//! {"frame":0,"t_ms":0,"pitch":0.012,"yaw":-0.31,"face":true,"conf":0.97}
//! ```
//!
//! Angles are radians. Numbers are written in the shortest decimal form
//! that parses back to the identical `f64` (up to 17 significant digits).
//! Blank lines are ignored on input.

use std::io::{BufRead, Write};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::session::GazePrediction;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Line {
    frame: usize,
    t_ms: u64,
    pitch: f64,
    yaw: f64,
    face: bool,
    conf: f64,
}

/// Parses and validates a prediction stream.
pub fn parse_predictions<R: BufRead>(reader: R) -> Result<Vec<GazePrediction>> {
    let mut out: Vec<GazePrediction> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Line = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if let Some(prev) = out.last() {
            if rec.frame <= prev.frame {
                let what = if rec.frame == prev.frame {
                    "duplicated"
                } else {
                    "out-of-order"
                };
                return Err(Error::invalid(
                    format!("line {line_no}: frame"),
                    format!("{what} frame {} after frame {}", rec.frame, prev.frame),
                ));
            }
        }
        let pred = GazePrediction {
            frame: rec.frame,
            t_ms: rec.t_ms,
            pitch: rec.pitch,
            yaw: rec.yaw,
            face_detected: rec.face,
            confidence: rec.conf,
        };
        if let Err(e) = pred.angles().validate() {
            return Err(Error::invalid(format!("line {line_no}: angles"), e.to_string()));
        }
        if !(0.0..=1.0).contains(&pred.confidence) {
            return Err(Error::invalid(
                format!("line {line_no}: conf"),
                format!("confidence {} outside [0, 1]", pred.confidence),
            ));
        }
        out.push(pred);
    }
    Ok(out)
}

pub fn write_predictions<W: Write>(mut w: W, predictions: &[GazePrediction]) -> Result<()> {
    for p in predictions {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn predictions_to_bytes(predictions: &[GazePrediction]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(predictions.len() * 80);
    write_predictions(&mut buf, predictions).expect("writing to memory");
    buf
}
