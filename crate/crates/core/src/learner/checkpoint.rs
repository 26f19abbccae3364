//! Checkpoint serialization: learner parameters plus rng state, round-
//! tripping bit-exactly through a versioned JSON document.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::classifier::SoftmaxClassifierLearner;
use crate::learner::markov::MarkovTextLearner;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerSnapshot {
    Markov(MarkovTextLearner),
    Classifier(SoftmaxClassifierLearner),
}

/// Full snapshot of a learner at generation `generation`, including the
/// run rng so restored runs continue on the same random stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub generation: usize,
    pub learner: LearnerSnapshot,
    pub rng: ChaCha8Rng,
}

impl Checkpoint {
    pub fn of_markov(learner: &MarkovTextLearner, generation: usize, rng: &ChaCha8Rng) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            generation,
            learner: LearnerSnapshot::Markov(learner.clone()),
            rng: rng.clone(),
        }
    }

    pub fn of_classifier(learner: &SoftmaxClassifierLearner, generation: usize, rng: &ChaCha8Rng) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            generation,
            learner: LearnerSnapshot::Classifier(learner.clone()),
            rng: rng.clone(),
        }
    }

    pub fn encode(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serialization cannot fail")
    }

    pub fn decode(text: &str) -> Result<Self> {
        let ckpt: Checkpoint =
            serde_json::from_str(text).map_err(|e| Error::Decode(e.to_string()))?;
        if ckpt.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Decode(format!(
                "unsupported checkpoint format version {} (expected {})",
                ckpt.format_version, CHECKPOINT_FORMAT_VERSION
            )));
        }
        Ok(ckpt)
    }

    pub fn markov(&self) -> Result<&MarkovTextLearner> {
        match &self.learner {
            LearnerSnapshot::Markov(m) => Ok(m),
            _ => Err(Error::Decode("checkpoint does not hold a markov learner".into())),
        }
    }

    pub fn classifier(&self) -> Result<&SoftmaxClassifierLearner> {
        match &self.learner {
            LearnerSnapshot::Classifier(c) => Ok(c),
            _ => Err(Error::Decode("checkpoint does not hold a classifier".into())),
        }
    }
}
