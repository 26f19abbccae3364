//! Desk-scale learners: an order-k Markov text model and a linear softmax
//! classifier, plus the data pools, anchor sets and checkpoints they share.

pub mod checkpoint;
pub mod classifier;
pub mod data;
pub mod markov;

pub use checkpoint::{Checkpoint, LearnerSnapshot, CHECKPOINT_FORMAT_VERSION};
pub use classifier::{sharpen, softmax, BlobSource, FeatureExample, Label, SoftLabel, SoftmaxClassifierLearner};
pub use data::{AnchorSet, Corpus, Origin, TokenId, TokenSequence, TruthChain};
pub use markov::{apply_temperature, nucleus_filter, MarkovTextLearner};
