//! TOML run configuration. Unknown keys are rejected; every default is
//! resolved here so a loaded config fully determines its runs.

use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::engine::{GenParams, LearnerParams, RecoveryBudget, RunSpec, DEFAULT_CHECKPOINT_GENS};
use crate::error::{Error, Result};
use crate::monitor::MonitorConfig;
use crate::regulator::{MixingSchedule, ScheduleMode, DEFAULT_PLANNED_ALPHA};

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigFile {
    pub learner: LearnerSection,
    pub run: RunSection,
    pub gen: GenSection,
    pub schedule: ScheduleSection,
    pub monitor: MonitorConfig,
    pub recovery: RecoverySection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnerSection {
    pub kind: String,
    pub vocab: usize,
    pub order: usize,
    pub lambda: f64,
    pub epochs: usize,
    pub classes: usize,
    pub dim: usize,
    pub eta: f64,
    pub steps: usize,
    pub sharpen_temperature: f64,
}

impl Default for LearnerSection {
    fn default() -> Self {
        LearnerSection {
            kind: "markov".into(),
            vocab: 64,
            order: 2,
            lambda: 0.02,
            epochs: 16,
            classes: 10,
            dim: 8,
            eta: 0.5,
            steps: 80,
            sharpen_temperature: 0.1,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: Option<u64>,
    pub seeds: Option<Vec<u64>>,
    pub generations: usize,
    pub train_size: usize,
    pub pool_size: usize,
    pub real_pool_size: usize,
    pub validation_size: usize,
    pub sequence_len: usize,
    pub anchor_count: usize,
    pub truth_decay: f64,
    pub start_decay: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: None,
            seeds: None,
            generations: 12,
            train_size: 350,
            pool_size: 350,
            real_pool_size: 700,
            validation_size: 100,
            sequence_len: 10,
            anchor_count: 4,
            truth_decay: 0.15,
            start_decay: 0.3,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenSection {
    pub top_p: f64,
    pub temperature: f64,
    pub max_len: usize,
}

impl Default for GenSection {
    fn default() -> Self {
        // Same knobs as `GenParams::default`, but sequences as short as the
        // default training data so validation scoring matches generation.
        let g = GenParams::default();
        GenSection { top_p: g.top_p, temperature: g.temperature, max_len: 10 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSection {
    pub mode: Option<String>,
    pub modes: Option<Vec<String>>,
    pub planned_alpha: Vec<f64>,
    pub fixed_alpha: f64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        ScheduleSection {
            mode: None,
            modes: None,
            planned_alpha: DEFAULT_PLANNED_ALPHA.to_vec(),
            fixed_alpha: 0.27,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecoverySection {
    pub checkpoint_gens: Vec<usize>,
    pub real_fractions: Vec<f64>,
    pub steps: Vec<usize>,
}

impl Default for RecoverySection {
    fn default() -> Self {
        RecoverySection {
            checkpoint_gens: DEFAULT_CHECKPOINT_GENS.to_vec(),
            real_fractions: vec![0.005, 0.02, 0.10],
            steps: vec![400, 800, 1600],
        }
    }
}

/// A validated experiment plan.
#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub specs: Vec<RunSpec>,
    pub recovery_checkpoints: Vec<usize>,
    pub recovery_budgets: Vec<RecoveryBudget>,
}

impl ConfigFile {
    pub fn parse_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::parse_str(&text)
    }

    fn learner_params(&self) -> Result<LearnerParams> {
        match self.learner.kind.as_str() {
            "markov" => Ok(LearnerParams::Markov {
                order: self.learner.order,
                vocab: self.learner.vocab,
                lambda: self.learner.lambda,
                epochs: self.learner.epochs,
            }),
            "classifier" => Ok(LearnerParams::Classifier {
                classes: self.learner.classes,
                dim: self.learner.dim,
                eta: self.learner.eta,
                steps: self.learner.steps,
                sharpen_temperature: self.learner.sharpen_temperature,
            }),
            other => Err(Error::Config(format!(
                "learner.kind must be 'markov' or 'classifier', got '{other}'"
            ))),
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        match (&self.run.seeds, self.run.seed) {
            (Some(seeds), _) if !seeds.is_empty() => seeds.clone(),
            (_, Some(seed)) => vec![seed],
            _ => vec![0],
        }
    }

    fn modes(&self, default_all: bool) -> Result<Vec<ScheduleMode>> {
        if let Some(modes) = &self.schedule.modes {
            return modes.iter().map(|m| ScheduleMode::parse(m)).collect();
        }
        if let Some(mode) = &self.schedule.mode {
            return Ok(vec![ScheduleMode::parse(mode)?]);
        }
        Ok(if default_all {
            vec![
                ScheduleMode::OpenLoop,
                ScheduleMode::Mtr,
                ScheduleMode::FixedAlpha,
                ScheduleMode::RandomTau,
            ]
        } else {
            vec![ScheduleMode::OpenLoop]
        })
    }

    /// Expand to one spec per (mode, seed). `default_all_modes` controls
    /// what an unspecified schedule means: every baseline (sweep) or
    /// open-loop only (single run).
    pub fn plan(&self, default_all_modes: bool) -> Result<ExperimentPlan> {
        if !(0.0..=1.0).contains(&self.schedule.fixed_alpha) {
            return Err(Error::Config(format!(
                "schedule.fixed_alpha must lie in [0,1], got {}",
                self.schedule.fixed_alpha
            )));
        }
        if self.recovery.real_fractions.len() != self.recovery.steps.len() {
            return Err(Error::Config(
                "recovery.real_fractions and recovery.steps must pair up one-to-one".into(),
            ));
        }
        for f in &self.recovery.real_fractions {
            if !(*f > 0.0 && *f <= 1.0) {
                return Err(Error::Config(format!(
                    "recovery.real_fractions entries must lie in (0,1], got {f}"
                )));
            }
        }
        let learner = self.learner_params()?;
        let mut specs = Vec::new();
        for mode in self.modes(default_all_modes)? {
            let schedule = MixingSchedule::new(
                mode,
                self.schedule.planned_alpha.clone(),
                self.schedule.fixed_alpha,
            )?;
            for seed in self.seeds() {
                let spec = RunSpec {
                    run_id: format!("{}_s{seed}", mode.as_str()),
                    seed,
                    learner: learner.clone(),
                    generations: self.run.generations,
                    train_size: self.run.train_size,
                    pool_size: self.run.pool_size,
                    real_pool_size: self.run.real_pool_size,
                    validation_size: self.run.validation_size,
                    sequence_len: self.run.sequence_len,
                    anchor_count: self.run.anchor_count,
                    truth_decay: self.run.truth_decay,
                    start_decay: self.run.start_decay,
                    gen_params: GenParams {
                        top_p: self.gen.top_p,
                        temperature: self.gen.temperature,
                        max_len: self.gen.max_len,
                    },
                    schedule: schedule.clone(),
                    monitor: self.monitor.clone(),
                };
                spec.validate()?;
                specs.push(spec);
            }
        }
        let recovery_budgets = self
            .recovery
            .real_fractions
            .iter()
            .zip(&self.recovery.steps)
            .map(|(&real_fraction, &steps)| RecoveryBudget { real_fraction, steps })
            .collect();
        Ok(ExperimentPlan {
            specs,
            recovery_checkpoints: self.recovery.checkpoint_gens.clone(),
            recovery_budgets,
        })
    }
}

/// Load, validate and expand a config file into run specs.
pub fn load_config(path: &Path, default_all_modes: bool) -> Result<ExperimentPlan> {
    ConfigFile::load(path)?.plan(default_all_modes)
}
