//! Linear softmax classifier with analytic cross-entropy gradients, plus
//! soft pseudo-labels and the sharpening rule used by the recursive
//! pseudo-labeling loop.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A probability vector over `C` classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftLabel(pub Vec<f64>);

impl SoftLabel {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::EmptyData("soft label must be non-empty".into()));
        }
        if probs.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Error::MalformedInput("soft label entries must be finite and nonnegative".into()));
        }
        let s: f64 = probs.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::MalformedInput(format!("soft label sums to {s}, expected 1")));
        }
        Ok(SoftLabel(probs))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Label {
    Hard(usize),
    Soft(SoftLabel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureExample {
    pub features: Vec<f64>,
    pub label: Label,
}

/// `probs_i ∝ probs_i^(1/temperature)`, renormalized. Temperature below 1
/// sharpens toward the argmax.
pub fn sharpen(label: &SoftLabel, temperature: f64) -> Result<SoftLabel> {
    if temperature <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "sharpening temperature must be positive, got {temperature}"
        )));
    }
    let probs = crate::learner::markov::apply_temperature(label.probs(), temperature);
    SoftLabel::new(probs)
}

/// Multinomial logistic regression trained by plain gradient descent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxClassifierLearner {
    pub c: usize,
    pub d: usize,
    pub eta: f64,
    /// Row-major C×d weight matrix.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl SoftmaxClassifierLearner {
    pub fn new(c: usize, d: usize, eta: f64) -> Result<Self> {
        if c == 0 || d == 0 {
            return Err(Error::InvalidParameter("class count and feature dim must be positive".into()));
        }
        if eta <= 0.0 {
            return Err(Error::InvalidParameter("learning rate must be positive".into()));
        }
        Ok(SoftmaxClassifierLearner {
            c,
            d,
            eta,
            weights: vec![0.0; c * d],
            bias: vec![0.0; c],
        })
    }

    pub fn logits(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.d {
            return Err(Error::MalformedInput(format!(
                "feature dim {} does not match d={}",
                features.len(),
                self.d
            )));
        }
        let mut out = self.bias.clone();
        for (c, o) in out.iter_mut().enumerate() {
            let row = &self.weights[c * self.d..(c + 1) * self.d];
            *o += row.iter().zip(features).map(|(w, x)| w * x).sum::<f64>();
        }
        Ok(out)
    }

    pub fn predict_dist(&self, features: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(features)?))
    }

    /// Mean pre-softmax logit vector over the anchor feature set.
    pub fn representation(&self, anchors: &[Vec<f64>]) -> Result<Vec<f64>> {
        if anchors.is_empty() {
            return Err(Error::EmptyData("anchor set is empty".into()));
        }
        let mut z = vec![0.0; self.c];
        for a in anchors {
            for (zi, li) in z.iter_mut().zip(self.logits(a)?) {
                *zi += li;
            }
        }
        let n = anchors.len() as f64;
        for zi in &mut z {
            *zi /= n;
        }
        Ok(z)
    }

    /// Mean cross-entropy over `data` against hard or soft labels.
    pub fn loss(&self, data: &[FeatureExample]) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::EmptyData("loss over empty data".into()));
        }
        let mut total = 0.0;
        for ex in data {
            let p = self.predict_dist(&ex.features)?;
            total += match &ex.label {
                Label::Hard(y) => -p[*y].max(1e-300).ln(),
                Label::Soft(s) => -s
                    .probs()
                    .iter()
                    .zip(&p)
                    .map(|(&t, &pi)| if t > 0.0 { t * pi.max(1e-300).ln() } else { 0.0 })
                    .sum::<f64>(),
            };
        }
        Ok(total / data.len() as f64)
    }

    /// Analytic gradient of the mean cross-entropy: `(p − t) ⊗ x` averaged
    /// over the batch. Returns (weight grad, bias grad).
    pub fn gradient(&self, data: &[FeatureExample]) -> Result<(Vec<f64>, Vec<f64>)> {
        if data.is_empty() {
            return Err(Error::EmptyData("gradient over empty data".into()));
        }
        let mut gw = vec![0.0; self.c * self.d];
        let mut gb = vec![0.0; self.c];
        for ex in data {
            if ex.features.len() != self.d {
                return Err(Error::MalformedInput(format!(
                    "feature dim {} does not match d={}",
                    ex.features.len(),
                    self.d
                )));
            }
            let p = self.predict_dist(&ex.features)?;
            for c in 0..self.c {
                let target = match &ex.label {
                    Label::Hard(y) => {
                        if *y >= self.c {
                            return Err(Error::MalformedInput(format!("label {y} out of range for C={}", self.c)));
                        }
                        if *y == c {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    Label::Soft(s) => {
                        if s.probs().len() != self.c {
                            return Err(Error::MalformedInput("soft label length mismatch".into()));
                        }
                        s.probs()[c]
                    }
                };
                let delta = p[c] - target;
                gb[c] += delta;
                for (g, x) in gw[c * self.d..(c + 1) * self.d].iter_mut().zip(&ex.features) {
                    *g += delta * x;
                }
            }
        }
        let n = data.len() as f64;
        for g in gw.iter_mut().chain(gb.iter_mut()) {
            *g /= n;
        }
        Ok((gw, gb))
    }

    /// Full-batch gradient descent for `steps` steps.
    pub fn train(&mut self, data: &[FeatureExample], steps: usize) -> Result<()> {
        for _ in 0..steps {
            let (gw, gb) = self.gradient(data)?;
            for (w, g) in self.weights.iter_mut().zip(&gw) {
                *w -= self.eta * g;
            }
            for (b, g) in self.bias.iter_mut().zip(&gb) {
                *b -= self.eta * g;
            }
        }
        Ok(())
    }

    pub fn params_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|x| x.is_finite())
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut out: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let s: f64 = out.iter().sum();
    for x in &mut out {
        *x /= s;
    }
    out
}

/// Gaussian class blobs standing in for a small image dataset; class
/// weights can be skewed to create genuinely low-support classes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlobSource {
    pub c: usize,
    pub d: usize,
    pub spread: f64,
    means: Vec<Vec<f64>>,
    class_weights: Vec<f64>,
}

impl BlobSource {
    pub fn sample(c: usize, d: usize, spread: f64, tail_classes: usize, tail_weight: f64, rng: &mut ChaCha8Rng) -> Result<Self> {
        if c == 0 || d == 0 {
            return Err(Error::InvalidParameter("class count and dim must be positive".into()));
        }
        let normal = Normal::new(0.0, 1.0).unwrap();
        let means = (0..c)
            .map(|_| (0..d).map(|_| 2.0 * normal.sample(rng)).collect())
            .collect();
        let mut class_weights = vec![1.0; c];
        for w in class_weights.iter_mut().rev().take(tail_classes.min(c)) {
            *w = tail_weight;
        }
        Ok(BlobSource { c, d, spread, means, class_weights })
    }

    /// Classes with below-average sampling weight.
    pub fn low_support_classes(&self) -> Vec<usize> {
        let mean_w: f64 = self.class_weights.iter().sum::<f64>() / self.c as f64;
        (0..self.c).filter(|&c| self.class_weights[c] < mean_w).collect()
    }

    pub fn sample_examples(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<FeatureExample> {
        let normal = Normal::new(0.0, 1.0).unwrap();
        (0..n)
            .map(|_| {
                let y = crate::learner::data::sample_index(&self.class_weights, rng);
                let features = self.means[y]
                    .iter()
                    .map(|&m| m + self.spread * normal.sample(rng))
                    .collect();
                FeatureExample { features, label: Label::Hard(y) }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn zero_parameters_predict_uniform() {
        let m = SoftmaxClassifierLearner::new(5, 3, 0.1).unwrap();
        let p = m.predict_dist(&[1.0, -2.0, 0.5]).unwrap();
        assert!(p.iter().all(|&x| (x - 0.2).abs() < 1e-12));
    }

    #[test]
    fn sharpen_hand_case() {
        // (0.6, 0.4) at T=0.5 -> (0.36, 0.16)/0.52.
        let s = sharpen(&SoftLabel::new(vec![0.6, 0.4]).unwrap(), 0.5).unwrap();
        assert!((s.probs()[0] - 0.36 / 0.52).abs() < 1e-12);
        assert!((s.probs()[1] - 0.16 / 0.52).abs() < 1e-12);
    }

    #[test]
    fn sharpen_identity_and_limit() {
        let l = SoftLabel::new(vec![0.3, 0.2, 0.5]).unwrap();
        let same = sharpen(&l, 1.0).unwrap();
        for (a, b) in same.probs().iter().zip(l.probs()) {
            assert!((a - b).abs() < 1e-12);
        }
        let hot = sharpen(&l, 1e-4).unwrap();
        assert!(hot.probs()[2] > 0.999999);
        assert!(matches!(sharpen(&l, 0.0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let normal = Normal::new(0.0, 1.0).unwrap();
        for trial in 0..10 {
            let (c, d) = (4, 3);
            let mut m = SoftmaxClassifierLearner::new(c, d, 0.1).unwrap();
            for w in m.weights.iter_mut().chain(m.bias.iter_mut()) {
                *w = normal.sample(&mut rng);
            }
            let data: Vec<FeatureExample> = (0..6)
                .map(|i| FeatureExample {
                    features: (0..d).map(|_| normal.sample(&mut rng)).collect(),
                    label: if i % 2 == 0 {
                        Label::Hard(i % c)
                    } else {
                        Label::Soft(SoftLabel::new(softmax(
                            &(0..c).map(|_| normal.sample(&mut rng)).collect::<Vec<_>>(),
                        )).unwrap())
                    },
                })
                .collect();
            let (gw, gb) = m.gradient(&data).unwrap();
            let h = 1e-6;
            for idx in 0..(c * d + c) {
                let mut plus = m.clone();
                let mut minus = m.clone();
                if idx < c * d {
                    plus.weights[idx] += h;
                    minus.weights[idx] -= h;
                } else {
                    plus.bias[idx - c * d] += h;
                    minus.bias[idx - c * d] -= h;
                }
                let fd = (plus.loss(&data).unwrap() - minus.loss(&data).unwrap()) / (2.0 * h);
                let analytic = if idx < c * d { gw[idx] } else { gb[idx - c * d] };
                let scale = fd.abs().max(analytic.abs()).max(1.0);
                assert!(
                    (fd - analytic).abs() / scale < 1e-5,
                    "trial {trial} idx {idx}: fd={fd} analytic={analytic}"
                );
            }
        }
    }

    #[test]
    fn single_example_probability_monotone() {
        let mut m = SoftmaxClassifierLearner::new(3, 2, 0.5).unwrap();
        let data = vec![FeatureExample { features: vec![1.0, -1.0], label: Label::Hard(1) }];
        let mut prev = m.predict_dist(&[1.0, -1.0]).unwrap()[1];
        for _ in 0..20 {
            m.train(&data, 1).unwrap();
            let p = m.predict_dist(&[1.0, -1.0]).unwrap()[1];
            assert!(p > prev);
            prev = p;
        }
    }

    #[test]
    fn zero_steps_identity() {
        let mut m = SoftmaxClassifierLearner::new(3, 2, 0.5).unwrap();
        let before = m.clone();
        m.train(&[FeatureExample { features: vec![1.0, 0.0], label: Label::Hard(0) }], 0).unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut m = SoftmaxClassifierLearner::new(3, 2, 0.5).unwrap();
        let err = m
            .train(&[FeatureExample { features: vec![1.0], label: Label::Hard(0) }], 1)
            .unwrap_err();
        assert!(matches!(err, Error::MalformedInput(_)));
    }

    #[test]
    fn representation_mean_logits() {
        let mut m = SoftmaxClassifierLearner::new(2, 2, 0.1).unwrap();
        m.weights = vec![1.0, 0.0, 0.0, 1.0];
        let anchors = vec![vec![1.0, 0.0], vec![0.0, 3.0]];
        let z = m.representation(&anchors).unwrap();
        assert!((z[0] - 0.5).abs() < 1e-15);
        assert!((z[1] - 1.5).abs() < 1e-15);
    }
}
