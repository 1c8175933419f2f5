//! Comparison of the human-only, ML-only and hybrid labeling systems.
//!
//! For each session the positive intervals of all three systems are merged
//! into a review set. A panel of `K` proctors judges every review interval,
//! the per-interval majority becomes the reference labeling, and each
//! system is scored frame-wise against that reference inside the review
//! set. Frames outside the review set were never re-judged, so recall is
//! only an upper bound on true recall.
//!
//! Dataset-level scores are per-metric means over sessions where the metric
//! is defined (a session with no relevant positives has no precision or no
//! recall). Undefined sessions are counted, never imputed.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::session::{
    intervals_to_labels, merge_interval_sets, LabelSequence,
    PositiveInterval, SystemKind,
};

/// Union of the three systems' positive intervals for one session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewSet {
    pub session_id: String,
    pub frame_count: usize,
    pub intervals: Vec<PositiveInterval>,
}

/// `K` binary judgments of one review interval.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalVote {
    pub interval: PositiveInterval,
    pub votes: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceLabeling {
    pub labels: LabelSequence,
    pub covered: ReviewSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionScore {
    pub precision: Option<f64>,
    pub recall_ub: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemSummary {
    pub mean_precision: Option<f64>,
    pub mean_recall_ub: Option<f64>,
    pub n_defined_precision: usize,
    pub n_defined_recall: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Complementarity {
    pub holds_precision: bool,
    pub holds_recall: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_sessions: usize,
    pub per_system: BTreeMap<SystemKind, SystemSummary>,
    pub complementarity: Complementarity,
}

/// Everything the evaluation needs for one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvaluation {
    pub session_id: String,
    pub human: LabelSequence,
    pub ml: LabelSequence,
    pub hybrid: LabelSequence,
    pub votes: Vec<IntervalVote>,
}

impl SessionEvaluation {
    pub fn frame_count(&self) -> usize {
        self.human.len()
    }

    pub fn system(&self, kind: SystemKind) -> Option<&LabelSequence> {
        match kind {
            SystemKind::HumanOnly => Some(&self.human),
            SystemKind::MlOnly => Some(&self.ml),
            SystemKind::Hybrid => Some(&self.hybrid),
            SystemKind::Reference => None,
        }
    }

    pub fn review_set(&self) -> Result<ReviewSet> {
        build_review_set(&self.session_id, &self.human, &self.ml, &self.hybrid)
    }
}

pub fn build_review_set(
    session_id: &str,
    human: &LabelSequence,
    ml: &LabelSequence,
    hybrid: &LabelSequence,
) -> Result<ReviewSet> {
    let t = human.len();
    if ml.len() != t || hybrid.len() != t {
        return Err(Error::domain(format!(
            "session {session_id}: label lengths differ (human {t}, ml {}, hybrid {})",
            ml.len(),
            hybrid.len()
        )));
    }
    let sets = [human.intervals(), ml.intervals(), hybrid.intervals()];
    Ok(ReviewSet {
        session_id: session_id.to_string(),
        frame_count: t,
        intervals: merge_interval_sets(sets.iter().map(Vec::as_slice)),
    })
}

/// Strict majority; ties (even `K`) are negative.
pub fn majority_vote(vote: &IntervalVote) -> Result<bool> {
    if vote.votes.is_empty() {
        return Err(Error::domain("an interval vote needs at least one judgment"));
    }
    let yes = vote.votes.iter().filter(|&&v| v).count();
    Ok(2 * yes > vote.votes.len())
}

pub fn build_reference(
    review_set: &ReviewSet,
    votes: &[IntervalVote],
    frame_count: usize,
) -> Result<ReferenceLabeling> {
    if review_set.frame_count != frame_count {
        return Err(Error::domain(format!(
            "review set covers {} frames, expected {frame_count}",
            review_set.frame_count
        )));
    }
    let expected: BTreeSet<PositiveInterval> = review_set.intervals.iter().copied().collect();
    let mut seen = BTreeSet::new();
    let k = votes.first().map(|v| v.votes.len());
    let mut positive = Vec::new();
    for vote in votes {
        let iv = vote.interval;
        if !expected.contains(&iv) {
            return Err(Error::domain(format!(
                "vote for ({}, {}) which is not in the review set",
                iv.start, iv.end
            )));
        }
        if !seen.insert(iv) {
            return Err(Error::domain(format!(
                "duplicate vote for ({}, {})",
                iv.start, iv.end
            )));
        }
        if Some(vote.votes.len()) != k {
            return Err(Error::domain("all intervals must be judged by the same K proctors"));
        }
        if majority_vote(vote)? {
            positive.push(iv);
        }
    }
    if let Some(missing) = expected.difference(&seen).next() {
        return Err(Error::domain(format!(
            "missing vote for review interval ({}, {})",
            missing.start, missing.end
        )));
    }
    Ok(ReferenceLabeling {
        labels: LabelSequence::new(
            SystemKind::Reference,
            intervals_to_labels(&positive, frame_count)?,
        ),
        covered: review_set.clone(),
    })
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Frame-level precision and upper-bounded recall inside the review set.
pub fn score_session(a: &LabelSequence, reference: &ReferenceLabeling) -> Result<SessionScore> {
    let t = reference.labels.len();
    if a.len() != t {
        return Err(Error::domain(format!(
            "label length {} does not match reference length {t}",
            a.len()
        )));
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for iv in &reference.covered.intervals {
        for f in iv.start..=iv.end {
            match (a.labels[f], reference.labels.labels[f]) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
    }
    Ok(SessionScore {
        precision: ratio(tp, tp + fp),
        recall_ub: ratio(tp, tp + fn_),
        tp,
        fp,
        fn_,
    })
}

/// Per-system scores for one session.
pub fn score_session_evaluation(
    session: &SessionEvaluation,
) -> Result<BTreeMap<SystemKind, SessionScore>> {
    let review = session.review_set()?;
    let reference = build_reference(&review, &session.votes, session.frame_count())?;
    SystemKind::EVALUATED
        .iter()
        .map(|&kind| {
            let labels = session.system(kind).expect("evaluated system");
            Ok((kind, score_session(labels, &reference)?))
        })
        .collect()
}

/// Mean of the values, summed in sorted order so the result does not depend
/// on session order.
fn order_free_mean(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    Some(values.iter().sum::<f64>() / values.len() as f64)
}

fn summarize(scores: &[SessionScore]) -> SystemSummary {
    let precisions: Vec<f64> = scores.iter().filter_map(|s| s.precision).collect();
    let recalls: Vec<f64> = scores.iter().filter_map(|s| s.recall_ub).collect();
    SystemSummary {
        n_defined_precision: precisions.len(),
        n_defined_recall: recalls.len(),
        mean_precision: order_free_mean(precisions),
        mean_recall_ub: order_free_mean(recalls),
    }
}

/// `hybrid > max(human, ml)`; false when any of the three is undefined.
fn strictly_best(hybrid: Option<f64>, human: Option<f64>, ml: Option<f64>) -> bool {
    match (hybrid, human, ml) {
        (Some(h), Some(a), Some(b)) => h > a.max(b),
        _ => false,
    }
}

pub fn evaluate(dataset: &[SessionEvaluation]) -> Result<EvalReport> {
    if dataset.is_empty() {
        return Err(Error::domain("cannot evaluate an empty dataset"));
    }
    let mut by_system: BTreeMap<SystemKind, Vec<SessionScore>> = BTreeMap::new();
    for session in dataset {
        for (kind, score) in score_session_evaluation(session)? {
            by_system.entry(kind).or_default().push(score);
        }
    }
    let per_system: BTreeMap<SystemKind, SystemSummary> = by_system
        .iter()
        .map(|(&k, scores)| (k, summarize(scores)))
        .collect();
    let get = |k: SystemKind| per_system[&k];
    let (h, m, hm) = (
        get(SystemKind::HumanOnly),
        get(SystemKind::MlOnly),
        get(SystemKind::Hybrid),
    );
    Ok(EvalReport {
        n_sessions: dataset.len(),
        complementarity: Complementarity {
            holds_precision: strictly_best(hm.mean_precision, h.mean_precision, m.mean_precision),
            holds_recall: strictly_best(hm.mean_recall_ub, h.mean_recall_ub, m.mean_recall_ub),
        },
        per_system,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"))
}

impl EvalReport {
    /// Plain-text table for terminals.
    pub fn render_text(&self) -> String {
        let mut out = format!("sessions: {}\n", self.n_sessions);
        out.push_str(&format!(
            "{:<12} {:>10} {:>10} {:>8} {:>8}\n",
            "system", "precision", "recall_ub", "n_prec", "n_rec"
        ));
        for (kind, s) in &self.per_system {
            out.push_str(&format!(
                "{:<12} {:>10} {:>10} {:>8} {:>8}\n",
                kind.as_str(),
                fmt_opt(s.mean_precision),
                fmt_opt(s.mean_recall_ub),
                s.n_defined_precision,
                s.n_defined_recall
            ));
        }
        out.push_str(&format!(
            "complementarity: precision={} recall={}\n",
            self.complementarity.holds_precision, self.complementarity.holds_recall
        ));
        out
    }
}
