//! Token sequences, corpora, anchor sets and the synthetic "real world"
//! data sources the toy runs train against.

use crate::error::{Error, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use serde::{Deserialize, Serialize};

pub type TokenId = u32;

/// A non-empty sequence of token ids, each in `[0, V)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence(pub Vec<TokenId>);

impl TokenSequence {
    pub fn new(tokens: Vec<TokenId>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::EmptyData("token sequence must be non-empty".into()));
        }
        Ok(TokenSequence(tokens))
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Real,
    Synthetic,
    Mixed,
}

/// A pool of token sequences with a provenance tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub sequences: Vec<TokenSequence>,
    pub origin: Origin,
}

impl Corpus {
    pub fn new(sequences: Vec<TokenSequence>, origin: Origin) -> Self {
        Corpus { sequences, origin }
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.sequences.iter().map(|s| s.len()).sum()
    }

    /// Per-type occurrence counts over a vocabulary of size `v`.
    pub fn type_frequencies(&self, v: usize) -> Vec<f64> {
        let mut freq = vec![0.0; v];
        for seq in &self.sequences {
            for &t in seq.tokens() {
                if (t as usize) < v {
                    freq[t as usize] += 1.0;
                }
            }
        }
        freq
    }

    pub fn validate_vocab(&self, v: usize) -> Result<()> {
        for seq in &self.sequences {
            for &t in seq.tokens() {
                if t as usize >= v {
                    return Err(Error::MalformedCorpus(format!(
                        "token id {t} out of range for vocabulary size {v}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Fixed evaluation contexts, identical across every generation of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorSet {
    contexts: Vec<Vec<TokenId>>,
}

impl AnchorSet {
    pub fn new(contexts: Vec<Vec<TokenId>>) -> Result<Self> {
        if contexts.is_empty() {
            return Err(Error::EmptyData("anchor set must be non-empty".into()));
        }
        Ok(AnchorSet { contexts })
    }

    pub fn contexts(&self) -> &[Vec<TokenId>] {
        &self.contexts
    }

    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }

    /// Collect up to `count` distinct length-`k` sequence prefixes
    /// ("prompts") in order of first appearance in `corpus`, topping up
    /// with random contexts from `rng` if the corpus is too small.
    pub fn from_corpus(corpus: &Corpus, k: usize, v: usize, count: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        let mut contexts = Vec::new();
        for seq in &corpus.sequences {
            if seq.len() < k {
                continue;
            }
            let prefix = seq.tokens()[..k].to_vec();
            if seen.insert(prefix.clone()) {
                contexts.push(prefix);
                if contexts.len() == count {
                    break;
                }
            }
        }
        while contexts.len() < count {
            let ctx: Vec<TokenId> = (0..k).map(|_| rng.random_range(0..v as TokenId)).collect();
            contexts.push(ctx);
        }
        AnchorSet::new(contexts)
    }
}

/// Ground-truth order-1 Markov chain used as the "real" data source.
///
/// Every conditional row carries the same geometric mass profile — a few
/// dominant continuations plus a genuine low-frequency tail — assigned to
/// a random permutation of the vocabulary. That tail is what the
/// recursive loop erodes, and giving all rows the same shape keeps the
/// erosion schedule comparable across contexts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthChain {
    pub v: usize,
    initial: Vec<f64>,
    rows: Vec<Vec<f64>>,
}

impl TruthChain {
    /// `row_decay` is the geometric ratio of each conditional row
    /// (smaller = peakier); `start_decay` plays the same role for the
    /// initial distribution and controls how few distinct openings the
    /// process uses (sequences of the same source start alike).
    pub fn sample(v: usize, row_decay: f64, start_decay: f64, rng: &mut ChaCha8Rng) -> Result<Self> {
        if v == 0 {
            return Err(Error::InvalidParameter("vocabulary size must be positive".into()));
        }
        if !(0.0..1.0).contains(&row_decay)
            || !(0.0..1.0).contains(&start_decay)
            || row_decay <= 0.0
            || start_decay <= 0.0
        {
            return Err(Error::InvalidParameter("decay ratio must lie in (0, 1)".into()));
        }
        let draw_row = |decay: f64, rng: &mut ChaCha8Rng| -> Vec<f64> {
            let mut perm: Vec<usize> = (0..v).collect();
            // Fisher-Yates so the heavy tokens differ per row.
            for i in (1..v).rev() {
                let j = rng.random_range(0..=i);
                perm.swap(i, j);
            }
            let mut row = vec![0.0; v];
            let mut mass = 1.0 - decay;
            let mut total = 0.0;
            for &t in &perm {
                row[t] = mass;
                total += mass;
                mass *= decay;
            }
            for x in &mut row {
                *x /= total;
            }
            row
        };
        let initial = draw_row(start_decay, rng);
        let rows = (0..v).map(|_| draw_row(row_decay, rng)).collect();
        Ok(TruthChain { v, initial, rows })
    }

    pub fn sample_sequence(&self, len: usize, rng: &mut ChaCha8Rng) -> TokenSequence {
        let mut tokens = Vec::with_capacity(len);
        let mut t = sample_index(&self.initial, rng);
        tokens.push(t as TokenId);
        for _ in 1..len {
            t = sample_index(&self.rows[t], rng);
            tokens.push(t as TokenId);
        }
        TokenSequence(tokens)
    }

    pub fn sample_corpus(&self, n: usize, len: usize, rng: &mut ChaCha8Rng) -> Corpus {
        let sequences = (0..n).map(|_| self.sample_sequence(len, rng)).collect();
        Corpus::new(sequences, Origin::Real)
    }
}

/// Draw an index from an (unnormalized is fine) probability row.
pub(crate) fn sample_index(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = probs.iter().sum();
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}
