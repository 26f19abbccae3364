//! Recursive pseudo-labeling loop for the softmax classifier, mirroring
//! the text pipeline: each generation pseudo-labels a fresh feature pool
//! with its predecessor, sharpens the labels, mixes with ground truth and
//! trains from scratch.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::learner::{
    sharpen, BlobSource, Checkpoint, FeatureExample, Label, SoftLabel, SoftmaxClassifierLearner,
};
use crate::learner::{AnchorSet, Corpus, Origin, TokenSequence};
use crate::monitor::{drift, ece, entropy_nats, tail_coverage, TrajectorySnapshot};
use crate::regulator::{mix, update_trust};

use super::onset::{detect_hidden_onset, detect_visible_onset, OnsetReport};
use super::run::{LearnerParams, RunResult, RunSpec, TrajectoryRecord};

/// Run the recursive pseudo-labeling variant of `spec`.
///
/// The shared `RunResult` shape is text-oriented; classifier runs leave
/// the corpus fields as empty placeholders and report every metric
/// through the record stream.
pub fn run_recursive_classifier(spec: &RunSpec) -> Result<RunResult> {
    spec.validate()?;
    let (classes, dim, eta, steps, sharpen_t) = match spec.learner {
        LearnerParams::Classifier { classes, dim, eta, steps, sharpen_temperature } => {
            (classes, dim, eta, steps, sharpen_temperature)
        }
        _ => return Err(Error::Config("run_recursive_classifier needs a classifier learner".into())),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let source = BlobSource::sample(classes, dim, 1.0, 2, 0.1, &mut rng)?;
    let real_pool = source.sample_examples(spec.real_pool_size, &mut rng);
    let validation = source.sample_examples(spec.validation_size, &mut rng);
    let anchor_features: Vec<Vec<f64>> = source
        .sample_examples(spec.anchor_count, &mut rng)
        .into_iter()
        .map(|e| e.features)
        .collect();
    let low_support = source.low_support_classes();
    let real_label_freq = label_frequencies(&real_pool, classes);

    let mut records: Vec<TrajectoryRecord> = Vec::new();
    let mut z_history: Vec<Vec<f64>> = Vec::new();
    let mut checkpoints = Vec::new();
    let mut tau_sequence = Vec::new();
    let mut diverged_at = None;
    let mut prev_learner: Option<SoftmaxClassifierLearner> = None;
    let mut schedule = spec.schedule.clone();

    if schedule.mode == crate::regulator::ScheduleMode::RandomTau && schedule.tau_source.is_none() {
        let mut companion = spec.clone();
        companion.run_id = format!("{}_mtr_source", spec.run_id);
        companion.schedule.mode = crate::regulator::ScheduleMode::Mtr;
        let mtr = run_recursive_classifier(&companion)?;
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9e37_79b9_7f4a_7c15);
        schedule.set_tau_source(&mtr.tau_sequence, &mut shuffle_rng);
    }

    for g in 0..=spec.generations {
        let (tau, alpha_planned, alpha_eff) = if g == 0 {
            (1.0, schedule.planned_alpha(0), 0.0)
        } else {
            let h0 = records[0].snapshot.entropy;
            let tau = update_trust(records[g - 1].snapshot.entropy, h0)?;
            (tau, schedule.planned_alpha(g), schedule.effective_alpha(g, tau)?)
        };

        // Pseudo-labeled pool from the previous generation's learner.
        let synthetic: Vec<FeatureExample> = if g == 0 {
            Vec::new()
        } else {
            let prev = prev_learner.as_ref().expect("previous generation exists");
            source
                .sample_examples(spec.pool_size, &mut rng)
                .into_iter()
                .map(|e| {
                    let soft = SoftLabel(prev.predict_dist(&e.features)?);
                    Ok(FeatureExample {
                        features: e.features,
                        label: Label::Soft(sharpen(&soft, sharpen_t)?),
                    })
                })
                .collect::<Result<_>>()?
        };

        let mixture = mix(&real_pool, &synthetic, alpha_eff, spec.train_size, &mut rng)?;
        let mut learner = SoftmaxClassifierLearner::new(classes, dim, eta)?;
        learner.train(&mixture.items, steps)?;

        let snapshot = classifier_snapshot(
            &learner,
            g,
            spec,
            &anchor_features,
            &validation,
            &synthetic,
            &low_support,
            &real_label_freq,
            &z_history,
        )?;

        if !learner.params_finite() || !snapshot.perplexity.is_finite() {
            diverged_at = Some(g);
        }

        z_history.push(snapshot.representation.clone());
        if g >= 1 {
            tau_sequence.push(tau);
        }
        records.push(TrajectoryRecord {
            snapshot,
            tau,
            alpha_planned,
            alpha_eff,
            realized_synth_frac: mixture.synthetic_fraction,
            hidden_flag: false,
            visible_flag: false,
        });
        checkpoints.push(Checkpoint::of_classifier(&learner, g, &rng));
        prev_learner = Some(learner);
        if diverged_at.is_some() {
            break;
        }
    }

    let hidden = detect_hidden_onset(&records, 0.5, 0.5);
    let visible = detect_visible_onset(&records, 5.0).or(diverged_at);
    for (g, r) in records.iter_mut().enumerate() {
        r.hidden_flag = hidden.is_some_and(|h| g >= h);
        r.visible_flag = visible.is_some_and(|v| g >= v);
    }
    let empty = Corpus::new(Vec::new(), Origin::Real);
    Ok(RunResult {
        spec: spec.clone(),
        records,
        onsets: OnsetReport::new(hidden, visible),
        checkpoints,
        pools: Vec::new(),
        real_pool: empty.clone(),
        validation: empty.clone(),
        anchors: AnchorSet::new(vec![vec![0]])?,
        tau_sequence,
        diverged_at,
    })
}

fn label_frequencies(examples: &[FeatureExample], classes: usize) -> Vec<f64> {
    let mut freq = vec![0.0; classes];
    for e in examples {
        match &e.label {
            Label::Hard(y) => freq[*y] += 1.0,
            Label::Soft(s) => {
                for (f, p) in freq.iter_mut().zip(s.probs()) {
                    *f += p;
                }
            }
        }
    }
    freq
}

#[allow(clippy::too_many_arguments)]
fn classifier_snapshot(
    learner: &SoftmaxClassifierLearner,
    g: usize,
    spec: &RunSpec,
    anchors: &[Vec<f64>],
    validation: &[FeatureExample],
    synthetic: &[FeatureExample],
    low_support: &[usize],
    real_label_freq: &[f64],
    z_history: &[Vec<f64>],
) -> Result<TrajectorySnapshot> {
    let cfg = &spec.monitor;
    let entropy = anchors
        .iter()
        .map(|a| learner.predict_dist(a).map(|p| entropy_nats(&p)))
        .sum::<Result<f64>>()?
        / anchors.len() as f64;
    let representation = learner.representation(anchors)?;

    // Validation NLL of the true labels, exponentiated like perplexity.
    let mut nll = 0.0;
    let mut preds = Vec::new();
    let mut labels = Vec::new();
    for ex in validation {
        let p = learner.predict_dist(&ex.features)?;
        if let Label::Hard(y) = ex.label {
            nll -= p[y].max(1e-300).ln();
            labels.push(y);
            preds.push(SoftLabel(p));
        }
    }
    let perplexity = (nll / validation.len() as f64).exp();
    let ece_value = ece(&preds, &labels, cfg.ece_bins)?;

    // Rare-"token" mass: fraction of pseudo-label argmaxes falling in
    // classes below the rare percentile of real label frequency.
    let rare_token_mass = if synthetic.is_empty() {
        0.0
    } else {
        let argmaxes: Vec<u32> = synthetic
            .iter()
            .map(|e| match &e.label {
                Label::Hard(y) => *y as u32,
                Label::Soft(s) => {
                    s.probs()
                        .iter()
                        .enumerate()
                        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                        .map(|(i, _)| i as u32)
                        .unwrap_or(0)
                }
            })
            .collect();
        let sample = Corpus::new(vec![TokenSequence(argmaxes)], Origin::Synthetic);
        crate::monitor::rare_token_mass(&sample, real_label_freq, cfg.rare_percentile)?
    };

    let mut mean_probs = vec![0.0; learner.c];
    for ex in validation {
        for (m, p) in mean_probs.iter_mut().zip(learner.predict_dist(&ex.features)?) {
            *m += p;
        }
    }
    for m in &mut mean_probs {
        *m /= validation.len() as f64;
    }
    let tail = tail_coverage(&mean_probs, low_support, cfg.tail_threshold)?;

    let drift_value = if g >= cfg.window {
        let mut hist = z_history[..g].to_vec();
        hist.push(representation.clone());
        Some(drift(&hist, g, cfg.window, cfg.epsilon)?)
    } else {
        None
    };

    Ok(TrajectorySnapshot {
        generation: g,
        entropy,
        drift: drift_value,
        perplexity,
        rare_token_mass,
        tail_coverage: tail,
        ece: ece_value,
        representation,
    })
}
