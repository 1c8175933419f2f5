//! Simulated end-to-end studies: synthetic sessions, the ML labeler, and a
//! panel of simulated proctors producing every input the evaluation needs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{build_review_set, IntervalVote, SessionEvaluation};
use crate::labeler::{label_session_ml, MlLabelerConfig};
use crate::session::{LabelSequence, Session};
use crate::sim::{
    derive_seed, derive_seed_for, generate_session, simulate_hybrid_proctor, simulate_proctor,
    simulate_votes, GroundTruth, ProctorProfile, ScenarioConfig,
};

/// The proctors of a study. Per-session seeds are derived from each
/// profile's seed and the session id, so results do not depend on which
/// other sessions are evaluated alongside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProctorPanel {
    pub human: ProctorProfile,
    pub hybrid: ProctorProfile,
    /// Either exactly `K` voter profiles, or one profile replicated `K`
    /// times with derived seeds.
    pub voters: Vec<ProctorProfile>,
}

impl ProctorPanel {
    pub fn validate(&self) -> Result<()> {
        self.human.validate()?;
        self.hybrid.validate()?;
        if self.voters.is_empty() {
            return Err(Error::invalid("voters", "at least one voter profile is required"));
        }
        for v in &self.voters {
            v.validate()?;
        }
        Ok(())
    }

    pub fn voters_for(&self, session_id: &str, k: usize) -> Result<Vec<ProctorProfile>> {
        if k == 0 {
            return Err(Error::invalid("k", "must be at least 1"));
        }
        let base: Vec<ProctorProfile> = match self.voters.len() {
            1 => (0..k as u64)
                .map(|j| self.voters[0].with_seed(derive_seed(self.voters[0].seed, j)))
                .collect(),
            n if n == k => self.voters.clone(),
            n => {
                return Err(Error::invalid(
                    "voters",
                    format!("{n} voter profiles given for K = {k}; give 1 or {k}"),
                ))
            }
        };
        Ok(base
            .into_iter()
            .map(|p| {
                let seed = derive_seed_for(p.seed, session_id);
                p.with_seed(seed)
            })
            .collect())
    }

    /// Human-only and hybrid labelings of one session.
    pub fn label(
        &self,
        session: &Session,
        truth: &GroundTruth,
        ml: &LabelSequence,
    ) -> Result<(LabelSequence, LabelSequence)> {
        let t = session.frame_count();
        let human = self.human.with_seed(derive_seed_for(self.human.seed, &session.id));
        let hybrid = self.hybrid.with_seed(derive_seed_for(self.hybrid.seed, &session.id));
        Ok((
            simulate_proctor(truth, &human, t, session.fps)?,
            simulate_hybrid_proctor(truth, ml, &hybrid, t, session.fps)?,
        ))
    }

    /// Full evaluation input for one session given its ML labels.
    pub fn fabricate(
        &self,
        session: &Session,
        truth: &GroundTruth,
        ml: LabelSequence,
        k: usize,
    ) -> Result<SessionEvaluation> {
        let (human, hybrid) = self.label(session, truth, &ml)?;
        let review = build_review_set(&session.id, &human, &ml, &hybrid)?;
        let votes: Vec<IntervalVote> =
            simulate_votes(&review, truth, &self.voters_for(&session.id, k)?)?;
        Ok(SessionEvaluation {
            session_id: session.id.clone(),
            human,
            ml,
            hybrid,
            votes,
        })
    }
}

pub fn synthetic_session_id(seed: u64, index: usize) -> String {
    format!("sim-{seed}-{index:04}")
}

/// `n` sessions; session `i` uses scenario seed `derive_seed(seed, i)`.
pub fn simulate_sessions(
    scenario: &ScenarioConfig,
    n: usize,
    seed: u64,
) -> Result<Vec<(Session, GroundTruth)>> {
    (0..n)
        .map(|i| {
            let cfg = scenario.with_seed(derive_seed(seed, i as u64));
            generate_session(&synthetic_session_id(seed, i), &cfg)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub scenario: ScenarioConfig,
    pub ml: MlLabelerConfig,
    pub panel: ProctorPanel,
    pub k: usize,
}

#[derive(Debug, Clone)]
pub struct SimulatedSession {
    pub session: Session,
    pub truth: GroundTruth,
    pub evaluation: SessionEvaluation,
}

pub fn simulate_study(cfg: &StudyConfig, n: usize, seed: u64) -> Result<Vec<SimulatedSession>> {
    cfg.panel.validate()?;
    cfg.ml.validate()?;
    simulate_sessions(&cfg.scenario, n, seed)?
        .into_iter()
        .map(|(session, truth)| {
            let ml = label_session_ml(&session, &cfg.ml)?;
            let evaluation = cfg.panel.fabricate(&session, &truth, ml, cfg.k)?;
            Ok(SimulatedSession {
                session,
                truth,
                evaluation,
            })
        })
        .collect()
}
