//! Evaluation over stored sessions, shared by the CLI and the HTTP service.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, FieldError, Result};
use crate::eval::{build_reference, evaluate, EvalReport, SessionEvaluation};
use crate::labeler::{label_session_ml, MlLabelerConfig};
use crate::session::SystemKind;
use crate::store::Store;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRequest {
    pub session_ids: Vec<String>,
    /// When present, ML labels are recomputed with this configuration
    /// instead of read from the store.
    #[serde(default)]
    pub ml_config: Option<MlLabelerConfig>,
    #[serde(rename = "K", alias = "k")]
    pub k: usize,
}

impl EvaluationRequest {
    /// Content-derived id: 16 hex digits of SHA-256 over the request JSON.
    pub fn report_id(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("request serializes");
        hex::encode(&Sha256::digest(&bytes)[..8])
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.session_ids.is_empty() {
            errs.push(FieldError::new("session_ids", "at least one session is required"));
        }
        if self.k == 0 {
            errs.push(FieldError::new("K", "must be at least 1"));
        }
        if let Some(cfg) = &self.ml_config {
            if let Err(Error::Validation(mut f)) = cfg.validate() {
                for e in &mut f {
                    e.field = format!("ml_config.{}", e.field);
                }
                errs.extend(f);
            }
        }
        let mut sorted = self.session_ids.clone();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            errs.push(FieldError::new("session_ids", "duplicate session id"));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }
}

/// Loads labels and votes for every requested session.
pub fn collect_dataset(store: &Store, req: &EvaluationRequest) -> Result<Vec<SessionEvaluation>> {
    req.validate()?;
    req.session_ids
        .iter()
        .map(|id| {
            let human = store.load_labels(id, SystemKind::HumanOnly)?.to_sequence()?;
            let hybrid = store.load_labels(id, SystemKind::Hybrid)?.to_sequence()?;
            let ml = match &req.ml_config {
                Some(cfg) => label_session_ml(&store.load_session(id)?, cfg)?,
                None => store.load_labels(id, SystemKind::MlOnly)?.to_sequence()?,
            };
            let votes = store.load_votes(id)?;
            if votes.k != req.k {
                return Err(Error::invalid(
                    "K",
                    format!("session {id} was voted by {} proctors, request says {}", votes.k, req.k),
                ));
            }
            let entry = SessionEvaluation {
                session_id: id.clone(),
                human,
                ml,
                hybrid,
                votes: votes.votes,
            };
            let review = entry.review_set()?;
            if let Err(Error::Domain(msg)) = build_reference(&review, &entry.votes, entry.frame_count()) {
                return Err(Error::invalid(format!("votes[{id}]"), msg));
            }
            Ok(entry)
        })
        .collect()
}

/// Evaluates stored sessions and persists the report under its id.
pub fn evaluate_stored(store: &Store, req: &EvaluationRequest) -> Result<(String, EvalReport)> {
    let dataset = collect_dataset(store, req)?;
    let report = evaluate(&dataset)?;
    let id = req.report_id();
    store.persist_report(&id, &report)?;
    Ok((id, report))
}
