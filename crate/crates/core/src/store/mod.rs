//! On-disk persistence.
//!
//! Layout under the store root:
//!
//! ```text
//! sessions/<id>/manifest.json
//! sessions/<id>/predictions.jsonl
//! sessions/<id>/events.json
//! sessions/<id>/ground_truth.json        (synthetic sessions only)
//! sessions/<id>/labels/<system>.json
//! sessions/<id>/labels/history/<system>.v<version>.json
//! sessions/<id>/votes.json
//! reports/<report_id>.json
//! ```
//!
//! JSON files are pretty-printed with a trailing newline. Every write goes
//! to a temporary file in the target directory and is renamed into place.
//! Predictions are immutable once a session exists; label writes are
//! versioned and superseded versions move to `labels/history/`.

pub mod predictions;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, FieldError, Result};
use crate::eval::{EvalReport, IntervalVote};
use crate::session::{
    extract_positive_intervals, intervals_to_labels, validate_id, EventMarker, LabelSequence,
    PositiveInterval, Session, SystemKind,
};
use crate::sim::GroundTruth;

pub use predictions::{parse_predictions, predictions_to_bytes, write_predictions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionSource {
    Ingested,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionManifest {
    pub id: String,
    pub frame_count: usize,
    pub fps: f64,
    pub video_uri: Option<String>,
    pub created_at: DateTime<Utc>,
    pub source: SessionSource,
    /// Hex SHA-256 of `predictions.jsonl`.
    pub predictions_sha256: String,
}

/// Metadata supplied when a session is first stored.
#[derive(Debug, Clone, PartialEq)]
pub struct NewSession {
    pub video_uri: Option<String>,
    pub created_at: DateTime<Utc>,
    pub source: SessionSource,
}

impl NewSession {
    /// Synthetic sessions carry the Unix epoch as creation time so that
    /// replayed simulations produce identical manifests.
    pub fn synthetic() -> Self {
        Self {
            video_uri: None,
            created_at: DateTime::<Utc>::UNIX_EPOCH,
            source: SessionSource::Synthetic,
        }
    }

    pub fn ingested(video_uri: Option<String>, created_at: DateTime<Utc>) -> Self {
        Self {
            video_uri,
            created_at,
            source: SessionSource::Ingested,
        }
    }
}

/// Interval-form labels as persisted. `version` starts at 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredLabels {
    pub session_id: String,
    pub system: SystemKind,
    pub frame_count: usize,
    pub version: u64,
    pub intervals: Vec<PositiveInterval>,
}

impl StoredLabels {
    pub fn to_sequence(&self) -> Result<LabelSequence> {
        Ok(LabelSequence::new(
            self.system,
            intervals_to_labels(&self.intervals, self.frame_count)?,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredVotes {
    pub session_id: String,
    pub frame_count: usize,
    pub k: usize,
    pub votes: Vec<IntervalVote>,
}

/// Checks `K >= 1`, uniform judgment counts, in-range unique intervals.
pub fn validate_votes(votes: &[IntervalVote], k: usize, frame_count: usize) -> Result<()> {
    let mut errs = Vec::new();
    if k == 0 {
        errs.push(FieldError::new("k", "must be at least 1"));
    }
    let mut seen = std::collections::BTreeSet::new();
    for (i, v) in votes.iter().enumerate() {
        if v.votes.len() != k {
            errs.push(FieldError::new(
                format!("votes[{i}].votes"),
                format!("expected {k} judgments, got {}", v.votes.len()),
            ));
        }
        if let Err(e) = v.interval.validate(frame_count) {
            errs.push(FieldError::new(format!("votes[{i}].interval"), e.to_string()));
        }
        if !seen.insert(v.interval) {
            errs.push(FieldError::new(
                format!("votes[{i}].interval"),
                "duplicate interval",
            ));
        }
    }
    if errs.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(errs))
    }
}

fn to_pretty_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().expect("store paths have a parent");
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A store rooted at one directory.
#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    /// Opens (creating if needed) a store at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("sessions"))?;
        fs::create_dir_all(root.join("reports"))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn session_dir(&self, id: &str) -> Result<PathBuf> {
        validate_id(id)?;
        Ok(self.root.join("sessions").join(id))
    }

    fn labels_path(&self, id: &str, system: SystemKind) -> Result<PathBuf> {
        Ok(self
            .session_dir(id)?
            .join("labels")
            .join(format!("{system}.json")))
    }

    fn read_json<T: DeserializeOwned>(&self, path: &Path, what: &str) -> Result<T> {
        let bytes = match fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(Error::NotFound(what.to_string()))
            }
            Err(e) => return Err(e.into()),
        };
        serde_json::from_slice(&bytes).map_err(|e| Error::Corrupt {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    pub fn session_exists(&self, id: &str) -> bool {
        self.session_dir(id)
            .map(|d| d.join("manifest.json").is_file())
            .unwrap_or(false)
    }

    /// Stores a new session. Re-storing identical content is a no-op;
    /// anything else under an existing id is rejected.
    pub fn persist_session(&self, session: &Session, meta: NewSession) -> Result<SessionManifest> {
        session.validate()?;
        let dir = self.session_dir(&session.id)?;
        let pred_bytes = predictions_to_bytes(&session.predictions);
        let manifest = SessionManifest {
            id: session.id.clone(),
            frame_count: session.frame_count(),
            fps: session.fps,
            video_uri: meta.video_uri,
            created_at: meta.created_at,
            source: meta.source,
            predictions_sha256: sha256_hex(&pred_bytes),
        };
        if self.session_exists(&session.id) {
            let existing = self.load_manifest(&session.id)?;
            let same_events = self.load_events(&session.id)? == session.events;
            if existing.predictions_sha256 == manifest.predictions_sha256
                && existing.fps == manifest.fps
                && existing.source == manifest.source
                && same_events
            {
                return Ok(existing);
            }
            return Err(Error::AlreadyExists(format!("session {}", session.id)));
        }
        write_atomic(&dir.join("predictions.jsonl"), &pred_bytes)?;
        write_atomic(&dir.join("events.json"), &to_pretty_bytes(&session.events)?)?;
        // manifest last: its presence marks the session as complete
        write_atomic(&dir.join("manifest.json"), &to_pretty_bytes(&manifest)?)?;
        Ok(manifest)
    }

    pub fn load_manifest(&self, id: &str) -> Result<SessionManifest> {
        let path = self.session_dir(id)?.join("manifest.json");
        self.read_json(&path, &format!("session {id}"))
    }

    fn load_events(&self, id: &str) -> Result<Vec<EventMarker>> {
        let path = self.session_dir(id)?.join("events.json");
        match self.read_json(&path, "events") {
            Err(Error::NotFound(_)) => Ok(Vec::new()),
            other => other,
        }
    }

    pub fn load_session(&self, id: &str) -> Result<Session> {
        let manifest = self.load_manifest(id)?;
        let path = self.session_dir(id)?.join("predictions.jsonl");
        let bytes = fs::read(&path)?;
        if sha256_hex(&bytes) != manifest.predictions_sha256 {
            return Err(Error::Corrupt {
                path,
                reason: "checksum mismatch".into(),
            });
        }
        let predictions = parse_predictions(&bytes[..]).map_err(|e| Error::Corrupt {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        let session = Session::new(id, manifest.fps, predictions, self.load_events(id)?)
            .map_err(|e| Error::Corrupt {
                path: path.clone(),
                reason: e.to_string(),
            })?;
        if session.frame_count() != manifest.frame_count {
            return Err(Error::Corrupt {
                path,
                reason: format!(
                    "manifest declares {} frames, file has {}",
                    manifest.frame_count,
                    session.frame_count()
                ),
            });
        }
        Ok(session)
    }

    /// All manifests, ordered by id.
    pub fn list_manifests(&self) -> Result<Vec<SessionManifest>> {
        let mut ids: Vec<String> = fs::read_dir(self.root.join("sessions"))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().join("manifest.json").is_file())
            .filter_map(|e| e.file_name().into_string().ok())
            .collect();
        ids.sort();
        ids.iter().map(|id| self.load_manifest(id)).collect()
    }

    /// Writes labels if `expected_version` matches the stored version (0 when
    /// none exist). Writing intervals identical to the current version
    /// returns it unchanged.
    pub fn persist_labels(
        &self,
        session_id: &str,
        labels: &LabelSequence,
        expected_version: u64,
    ) -> Result<StoredLabels> {
        let manifest = self.load_manifest(session_id)?;
        if labels.len() != manifest.frame_count {
            return Err(Error::invalid(
                "labels",
                format!(
                    "{} frames given, session {session_id} has {}",
                    labels.len(),
                    manifest.frame_count
                ),
            ));
        }
        let intervals = extract_positive_intervals(&labels.labels);
        let current = match self.load_labels(session_id, labels.system) {
            Ok(c) => Some(c),
            Err(Error::NotFound(_)) => None,
            Err(e) => return Err(e),
        };
        if let Some(c) = &current {
            if c.intervals == intervals {
                return Ok(c.clone());
            }
        }
        let actual = current.as_ref().map_or(0, |c| c.version);
        if actual != expected_version {
            return Err(Error::Conflict {
                resource: format!("labels {session_id}/{}", labels.system),
                expected: expected_version,
                actual,
            });
        }
        let path = self.labels_path(session_id, labels.system)?;
        if let Some(c) = &current {
            let archived = path
                .parent()
                .expect("labels dir")
                .join("history")
                .join(format!("{}.v{}.json", labels.system, c.version));
            write_atomic(&archived, &to_pretty_bytes(c)?)?;
        }
        let stored = StoredLabels {
            session_id: session_id.to_string(),
            system: labels.system,
            frame_count: manifest.frame_count,
            version: actual + 1,
            intervals,
        };
        write_atomic(&path, &to_pretty_bytes(&stored)?)?;
        Ok(stored)
    }

    pub fn load_labels(&self, session_id: &str, system: SystemKind) -> Result<StoredLabels> {
        let path = self.labels_path(session_id, system)?;
        let stored: StoredLabels =
            self.read_json(&path, &format!("labels {session_id}/{system}"))?;
        let canonical = intervals_to_labels(&stored.intervals, stored.frame_count)
            .map(|l| extract_positive_intervals(&l) == stored.intervals)
            .unwrap_or(false);
        if !canonical || stored.system != system {
            return Err(Error::Corrupt {
                path,
                reason: "labels are not a sorted, coalesced interval list for this system".into(),
            });
        }
        Ok(stored)
    }

    pub fn persist_votes(&self, session_id: &str, k: usize, votes: Vec<IntervalVote>) -> Result<StoredVotes> {
        let manifest = self.load_manifest(session_id)?;
        validate_votes(&votes, k, manifest.frame_count)?;
        let mut votes = votes;
        votes.sort_by_key(|v| v.interval);
        let stored = StoredVotes {
            session_id: session_id.to_string(),
            frame_count: manifest.frame_count,
            k,
            votes,
        };
        let path = self.session_dir(session_id)?.join("votes.json");
        write_atomic(&path, &to_pretty_bytes(&stored)?)?;
        Ok(stored)
    }

    pub fn load_votes(&self, session_id: &str) -> Result<StoredVotes> {
        let path = self.session_dir(session_id)?.join("votes.json");
        self.read_json(&path, &format!("votes {session_id}"))
    }

    pub fn persist_ground_truth(&self, session_id: &str, truth: &GroundTruth) -> Result<()> {
        let manifest = self.load_manifest(session_id)?;
        if truth.frame_count != manifest.frame_count {
            return Err(Error::invalid("ground_truth", "frame count does not match session"));
        }
        let path = self.session_dir(session_id)?.join("ground_truth.json");
        write_atomic(&path, &to_pretty_bytes(truth)?)
    }

    pub fn load_ground_truth(&self, session_id: &str) -> Result<GroundTruth> {
        let path = self.session_dir(session_id)?.join("ground_truth.json");
        self.read_json(&path, &format!("ground truth {session_id}"))
    }

    /// Reports are write-once; re-writing identical bytes is allowed.
    pub fn persist_report(&self, report_id: &str, report: &EvalReport) -> Result<()> {
        validate_id(report_id)?;
        let path = self.root.join("reports").join(format!("{report_id}.json"));
        let bytes = to_pretty_bytes(report)?;
        match fs::read(&path) {
            Ok(existing) if existing == bytes => Ok(()),
            Ok(_) => Err(Error::AlreadyExists(format!("report {report_id}"))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => write_atomic(&path, &bytes),
            Err(e) => Err(e.into()),
        }
    }

    pub fn load_report(&self, report_id: &str) -> Result<EvalReport> {
        validate_id(report_id)?;
        let path = self.root.join("reports").join(format!("{report_id}.json"));
        self.read_json(&path, &format!("report {report_id}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::{frame_to_ms, GazePrediction};

    fn session(id: &str, n: usize) -> Session {
        let preds = (0..n)
            .map(|i| GazePrediction {
                frame: i,
                t_ms: frame_to_ms(i, 30.0),
                pitch: 0.01 * (i % 100) as f64,
                yaw: -0.02 * (i % 100) as f64,
                face_detected: i % 7 != 3,
                confidence: 0.5,
            })
            .collect();
        Session::new(id, 30.0, preds, vec![]).unwrap()
    }

    fn labels(kind: SystemKind, v: &[u8]) -> LabelSequence {
        LabelSequence::new(kind, v.iter().map(|&b| b == 1).collect())
    }

    #[test]
    fn session_round_trip_and_not_found() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let s = session("abc", 20);
        let m = store.persist_session(&s, NewSession::synthetic()).unwrap();
        assert_eq!(m.frame_count, 20);
        assert_eq!(store.load_session("abc").unwrap(), s);
        assert!(matches!(store.load_session("nope"), Err(Error::NotFound(_))));
        assert_eq!(store.list_manifests().unwrap(), vec![m.clone()]);
        // identical re-persist is a no-op, different content is rejected
        assert_eq!(store.persist_session(&s, NewSession::synthetic()).unwrap(), m);
        assert!(matches!(
            store.persist_session(&session("abc", 21), NewSession::synthetic()),
            Err(Error::AlreadyExists(_))
        ));
    }

    #[test]
    fn checksum_mismatch_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        store.persist_session(&session("s", 5), NewSession::synthetic()).unwrap();
        let path = dir.path().join("sessions/s/predictions.jsonl");
        let text = fs::read_to_string(&path).unwrap().replace("\"conf\":0.5", "\"conf\":0.6");
        fs::write(&path, text).unwrap();
        assert!(matches!(store.load_session("s"), Err(Error::Corrupt { .. })));
    }

    #[test]
    fn labels_versioning() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        store.persist_session(&session("s", 6), NewSession::synthetic()).unwrap();
        let a = labels(SystemKind::HumanOnly, &[0, 1, 1, 0, 1, 0]);
        let v1 = store.persist_labels("s", &a, 0).unwrap();
        assert_eq!(v1.version, 1);
        assert_eq!(
            v1.intervals,
            vec![PositiveInterval::new(1, 2), PositiveInterval::new(4, 4)]
        );
        assert_eq!(store.load_labels("s", SystemKind::HumanOnly).unwrap(), v1);
        assert_eq!(store.load_labels("s", SystemKind::HumanOnly).unwrap().to_sequence().unwrap(), a);

        // same content: idempotent
        assert_eq!(store.persist_labels("s", &a, 0).unwrap(), v1);
        let b = labels(SystemKind::HumanOnly, &[1, 1, 1, 0, 0, 0]);
        assert!(matches!(
            store.persist_labels("s", &b, 0),
            Err(Error::Conflict { expected: 0, actual: 1, .. })
        ));
        let v2 = store.persist_labels("s", &b, 1).unwrap();
        assert_eq!(v2.version, 2);
        assert!(dir.path().join("sessions/s/labels/history/human_only.v1.json").is_file());

        assert!(matches!(
            store.load_labels("s", SystemKind::Hybrid),
            Err(Error::NotFound(_))
        ));
        assert!(matches!(
            store.persist_labels("s", &labels(SystemKind::Hybrid, &[1]), 0),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn votes_and_reports() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        store.persist_session(&session("s", 10), NewSession::synthetic()).unwrap();
        let votes = vec![
            IntervalVote {
                interval: PositiveInterval::new(5, 6),
                votes: vec![true, false, true],
            },
            IntervalVote {
                interval: PositiveInterval::new(1, 2),
                votes: vec![false, false, true],
            },
        ];
        let stored = store.persist_votes("s", 3, votes.clone()).unwrap();
        assert_eq!(stored.votes[0].interval, PositiveInterval::new(1, 2));
        assert_eq!(store.load_votes("s").unwrap(), stored);
        assert!(store.persist_votes("s", 2, votes.clone()).is_err());
        let mut out_of_range = votes;
        out_of_range[0].interval = PositiveInterval::new(9, 10);
        assert!(store.persist_votes("s", 3, out_of_range).is_err());

        let report: EvalReport = serde_json::from_str(
            r#"{"n_sessions":1,"per_system":{},"complementarity":{"holds_precision":false,"holds_recall":false}}"#,
        )
        .unwrap();
        store.persist_report("r1", &report).unwrap();
        store.persist_report("r1", &report).unwrap();
        assert_eq!(store.load_report("r1").unwrap(), report);
        let other = EvalReport {
            n_sessions: 2,
            ..report
        };
        assert!(matches!(store.persist_report("r1", &other), Err(Error::AlreadyExists(_))));
        assert!(matches!(store.load_report("r2"), Err(Error::NotFound(_))));
    }

    #[test]
    fn label_round_trip_large() {
        use rand::{Rng, SeedableRng};
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let t = 10_000;
        store.persist_session(&session("big", t), NewSession::synthetic()).unwrap();
        for round in 0..5u64 {
            let density = 0.02 + 0.2 * round as f64;
            let mut labels = vec![false; t];
            let mut on = false;
            for l in labels.iter_mut() {
                if rng.random::<f64>() < density {
                    on = !on;
                }
                *l = on;
            }
            let seq = LabelSequence::new(SystemKind::MlOnly, labels);
            let stored = store.persist_labels("big", &seq, round).unwrap();
            assert_eq!(stored.intervals, seq.intervals());
            assert_eq!(
                store.load_labels("big", SystemKind::MlOnly).unwrap().to_sequence().unwrap(),
                seq
            );
        }
    }

    #[test]
    fn rejects_path_like_ids() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        assert!(store.load_manifest("../etc").is_err());
        assert!(store.load_report("a/b").is_err());
    }
}
