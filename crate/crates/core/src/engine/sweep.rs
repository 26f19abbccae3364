//! Multi-run aggregation: baseline sweeps and the precursor lead-time
//! study.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regulator::ScheduleMode;

use super::onset::OnsetReport;
use super::run::{run_recursive, RunResult, RunSpec};
use super::stats::{iqr, mean, median, quartiles, sample_std};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub seed: u64,
    pub mode: ScheduleMode,
    pub final_perplexity: f64,
    pub final_entropy: f64,
    pub mean_alpha_eff: f64,
    pub onsets: OnsetReport,
    pub diverged: bool,
}

impl RunSummary {
    pub fn from_run(run: &RunResult) -> Self {
        let last = run.final_record();
        RunSummary {
            run_id: run.spec.run_id.clone(),
            seed: run.spec.seed,
            mode: run.spec.schedule.mode,
            final_perplexity: last.snapshot.perplexity,
            final_entropy: last.snapshot.entropy,
            mean_alpha_eff: run.mean_alpha_eff(),
            onsets: run.onsets,
            diverged: run.diverged_at.is_some(),
        }
    }

    pub fn collapsed(&self) -> bool {
        self.onsets.visible_onset.is_some()
    }
}

/// Per-mode aggregate in the shape of the paper's baseline tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeAggregate {
    pub mode: ScheduleMode,
    pub n_runs: usize,
    pub single_sample: bool,
    pub final_perplexity_mean: f64,
    pub final_perplexity_std: f64,
    pub final_entropy_mean: f64,
    pub final_entropy_std: f64,
    pub mean_alpha_mean: f64,
    pub mean_alpha_std: f64,
    pub collapse_fraction: f64,
    pub hidden_onset_median: Option<f64>,
    pub hidden_onset_iqr: Option<(f64, f64)>,
    pub visible_onset_median: Option<f64>,
    pub visible_onset_iqr: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub runs: Vec<RunSummary>,
    pub aggregates: Vec<ModeAggregate>,
}

pub fn aggregate_mode(mode: ScheduleMode, runs: &[RunSummary]) -> ModeAggregate {
    let ppl: Vec<f64> = runs.iter().map(|r| r.final_perplexity).collect();
    let h: Vec<f64> = runs.iter().map(|r| r.final_entropy).collect();
    let alpha: Vec<f64> = runs.iter().map(|r| r.mean_alpha_eff).collect();
    let collapsed = runs.iter().filter(|r| r.collapsed()).count();
    let hidden: Vec<f64> = runs.iter().filter_map(|r| r.onsets.hidden_onset).map(|g| g as f64).collect();
    let visible: Vec<f64> = runs.iter().filter_map(|r| r.onsets.visible_onset).map(|g| g as f64).collect();
    ModeAggregate {
        mode,
        n_runs: runs.len(),
        single_sample: runs.len() < 2,
        final_perplexity_mean: mean(&ppl),
        final_perplexity_std: sample_std(&ppl),
        final_entropy_mean: mean(&h),
        final_entropy_std: sample_std(&h),
        mean_alpha_mean: mean(&alpha),
        mean_alpha_std: sample_std(&alpha),
        collapse_fraction: collapsed as f64 / runs.len().max(1) as f64,
        hidden_onset_median: (!hidden.is_empty()).then(|| median(&hidden)),
        hidden_onset_iqr: (!hidden.is_empty()).then(|| quartiles(&hidden)),
        visible_onset_median: (!visible.is_empty()).then(|| median(&visible)),
        visible_onset_iqr: (!visible.is_empty()).then(|| quartiles(&visible)),
    }
}

/// Execute every spec and aggregate per mode, preserving first-seen mode
/// order.
pub fn sweep(specs: &[RunSpec]) -> Result<(Vec<RunResult>, SweepReport)> {
    if specs.is_empty() {
        return Err(Error::EmptyData("sweep needs at least one run spec".into()));
    }
    let mut results = Vec::with_capacity(specs.len());
    for spec in specs {
        results.push(run_recursive(spec)?);
    }
    let report = summarize_runs(&results);
    Ok((results, report))
}

pub fn summarize_runs(results: &[RunResult]) -> SweepReport {
    let runs: Vec<RunSummary> = results.iter().map(RunSummary::from_run).collect();
    let mut mode_order: Vec<ScheduleMode> = Vec::new();
    for r in &runs {
        if !mode_order.contains(&r.mode) {
            mode_order.push(r.mode);
        }
    }
    let aggregates = mode_order
        .into_iter()
        .map(|mode| {
            let members: Vec<RunSummary> = runs.iter().filter(|r| r.mode == mode).cloned().collect();
            aggregate_mode(mode, &members)
        })
        .collect();
    SweepReport { runs, aggregates }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeadTimeReport {
    pub per_seed: Vec<RunSummary>,
    /// Seeds where hidden onset strictly precedes visible onset, over
    /// seeds where both exist.
    pub ordering_count: usize,
    pub both_onsets_count: usize,
    pub lead_time_median: Option<f64>,
    pub lead_time_iqr: Option<f64>,
    /// Seeds with no visible onset, excluded from the lead-time median.
    pub no_visible_seeds: Vec<u64>,
}

/// Open-loop runs across `n_seeds` consecutive seeds starting from the
/// base spec's seed.
pub fn lead_time_study(base: &RunSpec, n_seeds: usize) -> Result<(Vec<RunResult>, LeadTimeReport)> {
    if n_seeds == 0 {
        return Err(Error::InvalidParameter("lead-time study needs at least one seed".into()));
    }
    let mut results = Vec::with_capacity(n_seeds);
    for i in 0..n_seeds as u64 {
        let seed = base.seed + i;
        let mut spec = base.clone();
        spec.seed = seed;
        spec.run_id = format!("{}_s{seed}", spec.schedule.mode.as_str());
        results.push(run_recursive(&spec)?);
    }
    let report = lead_time_report(&results);
    Ok((results, report))
}

pub fn lead_time_report(results: &[RunResult]) -> LeadTimeReport {
    let per_seed: Vec<RunSummary> = results.iter().map(RunSummary::from_run).collect();
    let mut leads = Vec::new();
    let mut ordering = 0usize;
    let mut both = 0usize;
    let mut no_visible = Vec::new();
    for s in &per_seed {
        match (s.onsets.hidden_onset, s.onsets.visible_onset) {
            (Some(h), Some(v)) => {
                both += 1;
                if h < v {
                    ordering += 1;
                }
                leads.push(v as f64 - h as f64);
            }
            _ => {
                if s.onsets.visible_onset.is_none() {
                    no_visible.push(s.seed);
                }
            }
        }
    }
    LeadTimeReport {
        per_seed,
        ordering_count: ordering,
        both_onsets_count: both,
        lead_time_median: (!leads.is_empty()).then(|| median(&leads)),
        lead_time_iqr: (!leads.is_empty()).then(|| iqr(&leads)),
        no_visible_seeds: no_visible,
    }
}
