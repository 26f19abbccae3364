//! The recursive text-training loop.
//!
//! Generation 0 trains on real data only. Each later generation samples a
//! synthetic pool from its predecessor, lets the regulator pick the
//! effective synthetic fraction, trains a fresh learner on the mixture
//! and records a full trajectory snapshot. Everything is driven by one
//! seeded rng, so a run is a pure function of its spec.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{AnchorSet, Checkpoint, Corpus, MarkovTextLearner, Origin, TruthChain};
use crate::monitor::{snapshot_all, MonitorConfig, SnapshotInputs, TrajectorySnapshot};
use crate::regulator::{mix, update_trust, MixingSchedule, ScheduleMode};

use super::onset::{detect_hidden_onset, detect_visible_onset, OnsetReport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenParams {
    pub top_p: f64,
    pub temperature: f64,
    pub max_len: usize,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams { top_p: 0.9, temperature: 0.7, max_len: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerParams {
    Markov {
        order: usize,
        vocab: usize,
        lambda: f64,
        epochs: usize,
    },
    Classifier {
        classes: usize,
        dim: usize,
        eta: f64,
        steps: usize,
        sharpen_temperature: f64,
    },
}

impl LearnerParams {
    pub fn default_markov() -> Self {
        LearnerParams::Markov { order: 2, vocab: 64, lambda: 0.1, epochs: 1 }
    }

    pub fn default_classifier() -> Self {
        LearnerParams::Classifier { classes: 10, dim: 8, eta: 0.5, steps: 80, sharpen_temperature: 0.1 }
    }
}

/// Everything needed to reproduce a run bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub run_id: String,
    pub seed: u64,
    pub learner: LearnerParams,
    pub generations: usize,
    /// Training mixture size per generation, in sequences (or examples).
    pub train_size: usize,
    /// Synthetic pool emitted per generation.
    pub pool_size: usize,
    pub real_pool_size: usize,
    pub validation_size: usize,
    pub sequence_len: usize,
    pub anchor_count: usize,
    /// Geometric decay ratio of the ground-truth conditional rows;
    /// smaller values give peakier conditionals and a thinner genuine tail.
    pub truth_decay: f64,
    /// Geometric decay ratio of the chain's initial distribution; small
    /// values mean the process reuses a handful of openings.
    pub start_decay: f64,
    pub gen_params: GenParams,
    pub schedule: MixingSchedule,
    pub monitor: MonitorConfig,
}

impl RunSpec {
    pub fn toy_default(mode: ScheduleMode, seed: u64) -> Self {
        RunSpec {
            run_id: format!("{}_s{seed}", mode.as_str()),
            seed,
            learner: LearnerParams::Markov { order: 2, vocab: 64, lambda: 0.02, epochs: 16 },
            generations: 12,
            train_size: 350,
            pool_size: 350,
            real_pool_size: 700,
            validation_size: 100,
            sequence_len: 10,
            anchor_count: 4,
            truth_decay: 0.15,
            start_decay: 0.3,
            gen_params: GenParams { max_len: 10, ..GenParams::default() },
            schedule: MixingSchedule::with_defaults(mode),
            monitor: MonitorConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.generations < 1 {
            return Err(Error::Config("run.generations must be >= 1".into()));
        }
        for (name, v) in [
            ("run.train_size", self.train_size),
            ("run.pool_size", self.pool_size),
            ("run.real_pool_size", self.real_pool_size),
            ("run.validation_size", self.validation_size),
            ("run.sequence_len", self.sequence_len),
            ("run.anchor_count", self.anchor_count),
        ] {
            if v < 1 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        match &self.learner {
            LearnerParams::Markov { order, vocab, lambda, epochs } => {
                if *order < 1 || *vocab < 2 {
                    return Err(Error::Config("learner.order must be >= 1 and learner.vocab >= 2".into()));
                }
                if *lambda <= 0.0 {
                    return Err(Error::Config("learner.lambda must be positive".into()));
                }
                if *epochs < 1 {
                    return Err(Error::Config("learner.epochs must be >= 1".into()));
                }
                if self.sequence_len <= *order {
                    return Err(Error::Config("run.sequence_len must exceed learner.order".into()));
                }
            }
            LearnerParams::Classifier { classes, dim, eta, steps, sharpen_temperature } => {
                if *classes < 2 || *dim < 1 {
                    return Err(Error::Config("learner.classes must be >= 2 and learner.dim >= 1".into()));
                }
                if *eta <= 0.0 || *sharpen_temperature <= 0.0 {
                    return Err(Error::Config("learner.eta and learner.sharpen_temperature must be positive".into()));
                }
                if *steps < 1 {
                    return Err(Error::Config("learner.steps must be >= 1".into()));
                }
            }
        }
        for (name, r) in [("run.truth_decay", self.truth_decay), ("run.start_decay", self.start_decay)] {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1)")));
            }
        }
        if !(self.gen_params.top_p > 0.0 && self.gen_params.top_p <= 1.0) {
            return Err(Error::Config("gen.top_p must be in (0,1]".into()));
        }
        if self.gen_params.temperature <= 0.0 {
            return Err(Error::Config("gen.temperature must be positive".into()));
        }
        self.monitor.validate()?;
        Ok(())
    }
}

/// One row of a trajectory: the monitored snapshot plus regulation state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub snapshot: TrajectorySnapshot,
    pub tau: f64,
    pub alpha_planned: f64,
    pub alpha_eff: f64,
    pub realized_synth_frac: f64,
    pub hidden_flag: bool,
    pub visible_flag: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub spec: RunSpec,
    pub records: Vec<TrajectoryRecord>,
    pub onsets: OnsetReport,
    pub checkpoints: Vec<Checkpoint>,
    /// Synthetic pool emitted by each generation's learner.
    pub pools: Vec<Corpus>,
    pub real_pool: Corpus,
    pub validation: Corpus,
    pub anchors: AnchorSet,
    /// Trust values τ_1..τ_G actually applied (MTR semantics even in
    /// other modes, for the shuffled-trust baseline to draw from).
    pub tau_sequence: Vec<f64>,
    /// Generation at which parameters or metrics stopped being finite.
    pub diverged_at: Option<usize>,
}

impl RunResult {
    pub fn final_record(&self) -> &TrajectoryRecord {
        self.records.last().expect("runs always hold at least generation 0")
    }

    pub fn mean_alpha_eff(&self) -> f64 {
        let later: Vec<f64> = self.records.iter().skip(1).map(|r| r.alpha_eff).collect();
        if later.is_empty() {
            0.0
        } else {
            later.iter().sum::<f64>() / later.len() as f64
        }
    }

    pub fn checkpoint_at(&self, generation: usize) -> Result<&Checkpoint> {
        self.checkpoints
            .iter()
            .find(|c| c.generation == generation)
            .ok_or_else(|| Error::CheckpointNotFound(format!("generation {generation} of run {}", self.spec.run_id)))
    }
}

/// Serializable mid-run state; a run checkpointed after generation g and
/// resumed produces the same record stream as an uninterrupted run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub spec: RunSpec,
    rng: ChaCha8Rng,
    chain: TruthChain,
    real_pool: Corpus,
    validation: Corpus,
    anchors: AnchorSet,
    next_generation: usize,
    records: Vec<TrajectoryRecord>,
    z_history: Vec<Vec<f64>>,
    pools: Vec<Corpus>,
    checkpoints: Vec<Checkpoint>,
    tau_sequence: Vec<f64>,
    diverged_at: Option<usize>,
}

impl RunState {
    pub fn init(spec: &RunSpec) -> Result<Self> {
        spec.validate()?;
        let mut spec = spec.clone();
        let vocab = match spec.learner {
            LearnerParams::Markov { vocab, .. } => vocab,
            LearnerParams::Classifier { .. } => {
                return Err(Error::Config("RunState drives text runs; use run_recursive_classifier".into()))
            }
        };
        let order = match spec.learner {
            LearnerParams::Markov { order, .. } => order,
            _ => unreachable!(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let chain = TruthChain::sample(vocab, spec.truth_decay, spec.start_decay, &mut rng)?;
        let real_pool = chain.sample_corpus(spec.real_pool_size, spec.sequence_len, &mut rng);
        let validation = chain.sample_corpus(spec.validation_size, spec.sequence_len, &mut rng);
        let anchors = AnchorSet::from_corpus(&real_pool, order, vocab, spec.anchor_count, &mut rng)?;

        // The shuffled-trust baseline replays a permutation of the trust
        // sequence an MTR run would have produced under this spec.
        if spec.schedule.mode == ScheduleMode::RandomTau && spec.schedule.tau_source.is_none() {
            let mut companion = spec.clone();
            companion.run_id = format!("{}_mtr_source", spec.run_id);
            companion.schedule.mode = ScheduleMode::Mtr;
            let source = run_recursive(&companion)?;
            let mut shuffle_rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9e37_79b9_7f4a_7c15);
            spec.schedule.set_tau_source(&source.tau_sequence, &mut shuffle_rng);
        }

        Ok(RunState {
            spec,
            rng,
            chain,
            real_pool,
            validation,
            anchors,
            next_generation: 0,
            records: Vec::new(),
            z_history: Vec::new(),
            pools: Vec::new(),
            checkpoints: Vec::new(),
            tau_sequence: Vec::new(),
            diverged_at: None,
        })
    }

    pub fn is_done(&self) -> bool {
        self.next_generation > self.spec.generations || self.diverged_at.is_some()
    }

    /// Execute one generation.
    pub fn step(&mut self) -> Result<()> {
        let g = self.next_generation;
        let (order, vocab, lambda, epochs) = match self.spec.learner {
            LearnerParams::Markov { order, vocab, lambda, epochs } => (order, vocab, lambda, epochs),
            _ => unreachable!(),
        };

        let (tau, alpha_planned, alpha_eff) = if g == 0 {
            (1.0, self.spec.schedule.planned_alpha(0), 0.0)
        } else {
            let h0 = self.records[0].snapshot.entropy;
            let h_prev = self.records[g - 1].snapshot.entropy;
            let tau = update_trust(h_prev, h0)?;
            let alpha = self.spec.schedule.effective_alpha(g, tau)?;
            (tau, self.spec.schedule.planned_alpha(g), alpha)
        };

        let synth_pool: &[crate::learner::TokenSequence] =
            if g == 0 { &[] } else { &self.pools[g - 1].sequences };
        let mixture = mix(
            &self.real_pool.sequences,
            synth_pool,
            alpha_eff,
            self.spec.train_size,
            &mut self.rng,
        )?;
        let origin = if mixture.synthetic_fraction == 0.0 {
            Origin::Real
        } else if mixture.synthetic_fraction == 1.0 {
            Origin::Synthetic
        } else {
            Origin::Mixed
        };
        let train_corpus = Corpus::new(mixture.items, origin);

        let mut learner = MarkovTextLearner::new(order, vocab, lambda)?;
        learner.train(&train_corpus, epochs)?;

        let pool = learner.generate(
            self.spec.pool_size,
            self.spec.gen_params.max_len,
            self.spec.gen_params.top_p,
            self.spec.gen_params.temperature,
            &mut self.rng,
        )?;

        let train_freq = train_corpus.type_frequencies(vocab);
        let snapshot = snapshot_all(
            &learner,
            g,
            &SnapshotInputs {
                anchors: &self.anchors,
                validation: &self.validation,
                sample: &pool,
                train_freq: &train_freq,
                config: &self.spec.monitor,
                z_history: &self.z_history,
            },
        )?;

        let finite = snapshot.entropy.is_finite()
            && snapshot.perplexity.is_finite()
            && snapshot.representation.iter().all(|x| x.is_finite());
        if !finite {
            self.diverged_at = Some(g);
        }

        self.z_history.push(snapshot.representation.clone());
        if g >= 1 {
            self.tau_sequence.push(tau);
        }
        self.records.push(TrajectoryRecord {
            snapshot,
            tau,
            alpha_planned,
            alpha_eff,
            realized_synth_frac: mixture.synthetic_fraction,
            hidden_flag: false,
            visible_flag: false,
        });
        self.pools.push(pool);
        self.checkpoints.push(Checkpoint::of_markov(&learner, g, &self.rng));
        self.next_generation = g + 1;
        Ok(())
    }

    pub fn finish(mut self) -> RunResult {
        // Divergence counts as visible collapse at the generation it
        // occurred.
        let hidden = detect_hidden_onset(&self.records, 0.5, 0.5);
        let visible = detect_visible_onset(&self.records, 5.0).or(self.diverged_at);
        let onsets = OnsetReport::new(hidden, visible);
        for (g, r) in self.records.iter_mut().enumerate() {
            r.hidden_flag = hidden.is_some_and(|h| g >= h);
            r.visible_flag = visible.is_some_and(|v| g >= v);
        }
        RunResult {
            spec: self.spec,
            records: self.records,
            onsets,
            checkpoints: self.checkpoints,
            pools: self.pools,
            real_pool: self.real_pool,
            validation: self.validation,
            anchors: self.anchors,
            tau_sequence: self.tau_sequence,
            diverged_at: self.diverged_at,
        }
    }

    pub fn encode(&self) -> String {
        serde_json::to_string(self).expect("run state serialization cannot fail")
    }

    pub fn decode(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Decode(e.to_string()))
    }

    /// Run the remaining generations to completion.
    pub fn run_to_end(mut self) -> Result<RunResult> {
        while !self.is_done() {
            self.step()?;
        }
        Ok(self.finish())
    }
}

/// Execute a full recursive run for `spec`.
pub fn run_recursive(spec: &RunSpec) -> Result<RunResult> {
    match spec.learner {
        LearnerParams::Markov { .. } => RunState::init(spec)?.run_to_end(),
        LearnerParams::Classifier { .. } => super::classify::run_recursive_classifier(spec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec(mode: ScheduleMode, seed: u64) -> RunSpec {
        let mut spec = RunSpec::toy_default(mode, seed);
        spec.generations = 3;
        spec.train_size = 40;
        spec.pool_size = 40;
        spec.real_pool_size = 60;
        spec.validation_size = 10;
        spec.sequence_len = 24;
        spec.anchor_count = 40;
        spec.learner = LearnerParams::Markov { order: 1, vocab: 16, lambda: 0.1, epochs: 1 };
        spec
    }

    #[test]
    fn single_generation_run_shape() {
        let mut spec = tiny_spec(ScheduleMode::OpenLoop, 0);
        spec.generations = 1;
        let result = run_recursive(&spec).unwrap();
        assert_eq!(result.records.len(), 2);
        assert!(result.records[0].snapshot.drift.is_none());
        assert_eq!(result.records[0].alpha_eff, 0.0);
        assert_eq!(result.records[0].realized_synth_frac, 0.0);
    }

    #[test]
    fn identical_specs_identical_records() {
        let spec = tiny_spec(ScheduleMode::Mtr, 7);
        let a = run_recursive(&spec).unwrap();
        let b = run_recursive(&spec).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.onsets, b.onsets);
        assert_eq!(a.pools, b.pools);
    }

    #[test]
    fn checkpoint_resume_matches_straight_through() {
        let spec = tiny_spec(ScheduleMode::OpenLoop, 3);
        let straight = run_recursive(&spec).unwrap();

        let mut state = RunState::init(&spec).unwrap();
        state.step().unwrap();
        state.step().unwrap();
        let resumed = RunState::decode(&state.encode()).unwrap().run_to_end().unwrap();
        assert_eq!(straight.records, resumed.records);
        assert_eq!(straight.pools, resumed.pools);
        assert_eq!(straight.checkpoints, resumed.checkpoints);
    }

    #[test]
    fn random_tau_draws_permuted_mtr_trust() {
        let spec = tiny_spec(ScheduleMode::RandomTau, 5);
        let result = run_recursive(&spec).unwrap();
        let mtr_spec = RunSpec {
            run_id: "mtr_ref".into(),
            schedule: MixingSchedule::with_defaults(ScheduleMode::Mtr),
            ..spec.clone()
        };
        let mtr = run_recursive(&mtr_spec).unwrap();
        let mut used = result.spec.schedule.tau_source.clone().unwrap();
        let mut recorded = mtr.tau_sequence.clone();
        used.sort_by(|a, b| a.partial_cmp(b).unwrap());
        recorded.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(used, recorded);
    }

    #[test]
    fn mtr_with_constant_entropy_equals_open_loop_alphas() {
        // τ stays 1 while entropy holds at H_0, so MTR follows the plan.
        let spec = tiny_spec(ScheduleMode::Mtr, 1);
        let result = run_recursive(&spec).unwrap();
        for (g, r) in result.records.iter().enumerate().skip(1) {
            if r.tau == 1.0 {
                assert_eq!(r.alpha_eff, spec.schedule.planned_alpha(g));
            }
        }
    }

    #[test]
    fn mid_run_state_survives_encode_decode_exactly() {
        let spec = tiny_spec(ScheduleMode::OpenLoop, 3);
        let mut state = RunState::init(&spec).unwrap();
        state.step().unwrap();
        state.step().unwrap();
        let rt = RunState::decode(&state.encode()).unwrap();
        assert_eq!(state, rt);
    }
}
