//! Hidden and visible collapse onset detection over recorded trajectories.

use serde::{Deserialize, Serialize};

use super::run::TrajectoryRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OnsetReport {
    pub hidden_onset: Option<usize>,
    pub visible_onset: Option<usize>,
    /// `visible − hidden` when both exist; may be negative if visible
    /// degradation ever led.
    pub lead_time: Option<i64>,
}

impl OnsetReport {
    pub fn new(hidden: Option<usize>, visible: Option<usize>) -> Self {
        let lead_time = match (hidden, visible) {
            (Some(h), Some(v)) => Some(v as i64 - h as i64),
            _ => None,
        };
        OnsetReport { hidden_onset: hidden, visible_onset: visible, lead_time }
    }
}

/// First generation with `H_g/H_0 < entropy_threshold` (strict). If
/// entropy never triggers, fall back to drift: first generation with
/// `S_g/S_ref < drift_threshold`, where `S_ref` is the first defined
/// drift value.
pub fn detect_hidden_onset(
    records: &[TrajectoryRecord],
    entropy_threshold: f64,
    drift_threshold: f64,
) -> Option<usize> {
    let h0 = records.first()?.snapshot.entropy;
    if h0 <= 0.0 {
        return None;
    }
    for (g, r) in records.iter().enumerate() {
        if r.snapshot.entropy / h0 < entropy_threshold {
            return Some(g);
        }
    }
    let s_ref = records.iter().find_map(|r| r.snapshot.drift)?;
    if s_ref <= 0.0 {
        return None;
    }
    for (g, r) in records.iter().enumerate() {
        if let Some(s) = r.snapshot.drift {
            if s / s_ref < drift_threshold {
                return Some(g);
            }
        }
    }
    None
}

/// First generation where perplexity exceeds `factor` times the running
/// minimum and never afterwards drops back below that frozen threshold.
pub fn detect_visible_onset(records: &[TrajectoryRecord], factor: f64) -> Option<usize> {
    let ppl: Vec<f64> = records.iter().map(|r| r.snapshot.perplexity).collect();
    let mut running_min = f64::INFINITY;
    for (g, &p) in ppl.iter().enumerate() {
        running_min = running_min.min(p);
        let threshold = factor * running_min;
        if p > threshold && ppl[g..].iter().all(|&later| later > threshold) {
            return Some(g);
        }
    }
    None
}
