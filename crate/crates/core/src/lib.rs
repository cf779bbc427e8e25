//! Unsupervised evaluation of textual style transfer.
//!
//! Three complementary metrics score a batch of transfer outputs:
//!
//! * **Acc**: the fraction of transferred sentences a frozen style
//!   classifier assigns to the target style ([`classifier`]).
//! * **Sim**: the mean cosine between idf-weighted embedding sums of each
//!   original and transferred sentence ([`similarity`]).
//! * **PP**: the perplexity of the transferred sentences under an n-gram
//!   language model trained on both style corpora ([`lm`]).
//!
//! [`aggregate`] folds them into one adjusted geometric mean, fits its
//! thresholds to pairwise human preferences and picks checkpoints along a
//! training trajectory. [`validation`] holds the statistics used to check
//! metrics against human judgments, plus corpus BLEU.
//!
//! ```
//! use styleval::aggregate::{gm_score, GmParams, Granularity, MetricTriple};
//!
//! let m = MetricTriple::new(0.818, 0.805, 29.0, Granularity::Corpus)?;
//! let gm = gm_score(&m, &GmParams::default());
//! assert!((gm - 22.8).abs() < 0.05);
//! # Ok::<(), styleval::Error>(())
//! ```

pub mod aggregate;
pub mod classifier;
pub mod error;
pub mod lm;
pub mod similarity;
pub mod synth;
pub mod text;
pub mod validation;

pub use error::{Error, Result};
