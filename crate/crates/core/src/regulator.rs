//! Trust dynamics and mixing schedules: open-loop, entropy-regulated
//! (MTR), fixed-alpha and shuffled-trust baselines, plus mixture
//! construction.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TAU_FLOOR: f64 = 0.2;
pub const TAU_CEILING: f64 = 1.0;

/// `τ_g = max(0.2, min(1.0, (H_{g-1}/H_0)^2))`.
pub fn update_trust(h_prev: f64, h0: f64) -> Result<f64> {
    if h0 <= 0.0 {
        return Err(Error::InvalidBaseline(h0));
    }
    let ratio = h_prev / h0;
    Ok((ratio * ratio).clamp(TAU_FLOOR, TAU_CEILING))
}

/// Regulator state owned by a single run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustState {
    pub h0: f64,
    pub tau: f64,
}

impl TrustState {
    pub fn new(h0: f64) -> Result<Self> {
        if h0 <= 0.0 {
            return Err(Error::InvalidBaseline(h0));
        }
        Ok(TrustState { h0, tau: TAU_CEILING })
    }

    pub fn update(&mut self, h_prev: f64) -> Result<f64> {
        self.tau = update_trust(h_prev, self.h0)?;
        Ok(self.tau)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    OpenLoop,
    Mtr,
    FixedAlpha,
    RandomTau,
}

impl ScheduleMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScheduleMode::OpenLoop => "open_loop",
            ScheduleMode::Mtr => "mtr",
            ScheduleMode::FixedAlpha => "fixed_alpha",
            ScheduleMode::RandomTau => "random_tau",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "open_loop" => Ok(ScheduleMode::OpenLoop),
            "mtr" => Ok(ScheduleMode::Mtr),
            "fixed_alpha" => Ok(ScheduleMode::FixedAlpha),
            "random_tau" => Ok(ScheduleMode::RandomTau),
            other => Err(Error::Config(format!(
                "unknown schedule mode '{other}' (expected open_loop, mtr, fixed_alpha or random_tau)"
            ))),
        }
    }
}

pub const DEFAULT_PLANNED_ALPHA: [f64; 6] = [0.0, 0.25, 0.5, 0.75, 1.0, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingSchedule {
    pub mode: ScheduleMode,
    /// Planned per-generation synthetic fraction; the last value repeats.
    pub planned: Vec<f64>,
    pub fixed_alpha: f64,
    /// Shuffled trust sequence for random_tau, indexed by generation - 1.
    pub tau_source: Option<Vec<f64>>,
}

impl MixingSchedule {
    pub fn new(mode: ScheduleMode, planned: Vec<f64>, fixed_alpha: f64) -> Result<Self> {
        if planned.is_empty() {
            return Err(Error::Config("planned alpha list must be non-empty".into()));
        }
        if planned.iter().any(|&a| !(0.0..=1.0).contains(&a)) {
            return Err(Error::Config("planned alpha values must lie in [0,1]".into()));
        }
        if !(0.0..=1.0).contains(&fixed_alpha) {
            return Err(Error::Config(format!(
                "schedule.fixed_alpha must lie in [0,1], got {fixed_alpha}"
            )));
        }
        Ok(MixingSchedule { mode, planned, fixed_alpha, tau_source: None })
    }

    pub fn with_defaults(mode: ScheduleMode) -> Self {
        MixingSchedule {
            mode,
            planned: DEFAULT_PLANNED_ALPHA.to_vec(),
            fixed_alpha: 0.27,
            tau_source: None,
        }
    }

    /// Planned schedule lookup with last-value extension.
    pub fn planned_alpha(&self, g: usize) -> f64 {
        self.planned[g.min(self.planned.len() - 1)]
    }

    /// Install a shuffled copy of a recorded MTR trust sequence.
    pub fn set_tau_source(&mut self, recorded: &[f64], rng: &mut ChaCha8Rng) {
        let mut shuffled = recorded.to_vec();
        shuffled.shuffle(rng);
        self.tau_source = Some(shuffled);
    }

    /// Effective synthetic fraction for generation `g` given the current
    /// trust value. MTR scales the plan by τ; random_tau uses the
    /// shuffled recorded trust instead.
    pub fn effective_alpha(&self, g: usize, tau: f64) -> Result<f64> {
        Ok(match self.mode {
            ScheduleMode::OpenLoop => self.planned_alpha(g),
            ScheduleMode::FixedAlpha => {
                if g == 0 {
                    0.0
                } else {
                    self.fixed_alpha
                }
            }
            ScheduleMode::Mtr => tau * self.planned_alpha(g),
            ScheduleMode::RandomTau => {
                let source = self.tau_source.as_ref().ok_or(Error::MissingTauSource)?;
                if g == 0 {
                    0.0
                } else {
                    let tau_shuffled = source[(g - 1).min(source.len().saturating_sub(1))];
                    tau_shuffled * self.planned_alpha(g)
                }
            }
        })
    }
}

/// A shuffled mixture of real and synthetic items with its realized
/// synthetic fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture<T> {
    pub items: Vec<T>,
    pub synthetic_fraction: f64,
}

/// Draw `round(alpha·n)` synthetic and the rest real items, shuffle with
/// the run rng. Pools smaller than their quota are sampled with
/// replacement.
pub fn mix<T: Clone>(
    real_pool: &[T],
    synthetic_pool: &[T],
    alpha: f64,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Mixture<T>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!("mixing alpha must lie in [0,1], got {alpha}")));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("mixture size must be positive".into()));
    }
    let n_synth = (alpha * n as f64).round() as usize;
    let n_real = n - n_synth;
    if n_synth > 0 && synthetic_pool.is_empty() {
        return Err(Error::EmptyPool("synthetic pool is empty but alpha > 0".into()));
    }
    if n_real > 0 && real_pool.is_empty() {
        return Err(Error::EmptyPool("real pool is empty but alpha < 1".into()));
    }
    let mut items = Vec::with_capacity(n);
    draw(real_pool, n_real, rng, &mut items);
    draw(synthetic_pool, n_synth, rng, &mut items);
    items.shuffle(rng);
    Ok(Mixture {
        items,
        synthetic_fraction: n_synth as f64 / n as f64,
    })
}

fn draw<T: Clone>(pool: &[T], count: usize, rng: &mut ChaCha8Rng, out: &mut Vec<T>) {
    if count == 0 {
        return;
    }
    if pool.len() >= count {
        // Without replacement: sample a prefix of a shuffled index set.
        let mut idx: Vec<usize> = (0..pool.len()).collect();
        idx.shuffle(rng);
        out.extend(idx[..count].iter().map(|&i| pool[i].clone()));
    } else {
        out.extend((0..count).map(|_| pool[rng.random_range(0..pool.len())].clone()));
    }
}
