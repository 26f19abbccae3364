//! A desk-scale laboratory for silent collapse in recursive self-training.
//!
//! Small analytic learners (an order-k Markov text model, a softmax
//! classifier) are trained recursively on their own output under
//! different mixing schedules. Each generation is monitored through
//! anchor entropy, representation drift, validation perplexity,
//! rare-token mass, tail coverage and calibration error; onset detectors
//! locate hidden contraction and visible collapse, and a recovery
//! protocol probes how much real data a degraded checkpoint needs.

pub mod engine;
pub mod error;
pub mod learner;
pub mod monitor;
pub mod regulator;
pub mod report;

pub use error::{Error, Result};
