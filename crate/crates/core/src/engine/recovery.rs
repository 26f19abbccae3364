//! Fixed-budget recovery: restore a checkpoint, fine-tune on a mixture
//! of its frozen synthetic pool and a small real fraction, and re-measure.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{Corpus, Origin};
use crate::monitor::{anchor_entropy, perplexity};
use crate::regulator::mix;

use super::run::{LearnerParams, RunResult};

pub const DEFAULT_CHECKPOINT_GENS: [usize; 4] = [2, 4, 6, 8];

/// One intervention budget: a real-data fraction and a step count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryBudget {
    pub real_fraction: f64,
    pub steps: usize,
}

impl RecoveryBudget {
    /// Weak / medium / strong budgets.
    pub fn defaults() -> Vec<RecoveryBudget> {
        vec![
            RecoveryBudget { real_fraction: 0.005, steps: 400 },
            RecoveryBudget { real_fraction: 0.02, steps: 800 },
            RecoveryBudget { real_fraction: 0.10, steps: 1600 },
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoverySpec {
    pub checkpoint_generation: usize,
    pub budget: RecoveryBudget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    pub spec: RecoverySpec,
    pub perplexity: f64,
    pub entropy: f64,
}

/// Restore the checkpoint at the requested generation, fine-tune for
/// `steps` sequences drawn as (real_fraction real, rest frozen pool) and
/// evaluate on the source run's validation set and anchors.
pub fn recover(source: &RunResult, spec: &RecoverySpec) -> Result<RecoveryResult> {
    if !(spec.budget.real_fraction > 0.0 && spec.budget.real_fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "recovery real_fraction must lie in (0,1], got {}",
            spec.budget.real_fraction
        )));
    }
    let g = spec.checkpoint_generation;
    let ckpt = source.checkpoint_at(g)?;
    let mut learner = ckpt.markov()?.clone();

    if spec.budget.steps > 0 {
        let frozen_pool = source
            .pools
            .get(g)
            .ok_or_else(|| Error::CheckpointNotFound(format!("frozen synthetic pool for generation {g}")))?;
        // Budgets are deterministic sub-experiments of the source run.
        let mut rng = ChaCha8Rng::seed_from_u64(
            source.spec.seed ^ (g as u64).wrapping_mul(0x100_0000_01b3) ^ spec.budget.steps as u64,
        );
        let mixture = mix(
            &source.real_pool.sequences,
            &frozen_pool.sequences,
            1.0 - spec.budget.real_fraction,
            spec.budget.steps,
            &mut rng,
        )?;
        let epochs = match source.spec.learner {
            LearnerParams::Markov { epochs, .. } => epochs,
            _ => return Err(Error::Config("recovery is defined for text runs".into())),
        };
        learner.train(&Corpus::new(mixture.items, Origin::Mixed), epochs)?;
    }

    Ok(RecoveryResult {
        spec: spec.clone(),
        perplexity: perplexity(&learner, &source.validation)?,
        entropy: anchor_entropy(&learner, &source.anchors)?,
    })
}

/// The checkpoints × budgets grid of the recovery protocol.
pub fn recovery_grid(
    source: &RunResult,
    checkpoint_gens: &[usize],
    budgets: &[RecoveryBudget],
) -> Result<Vec<RecoveryResult>> {
    let mut out = Vec::with_capacity(checkpoint_gens.len() * budgets.len());
    for &g in checkpoint_gens {
        for &budget in budgets {
            out.push(recover(source, &RecoverySpec { checkpoint_generation: g, budget })?);
        }
    }
    Ok(out)
}
