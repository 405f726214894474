//! Application-driven fine-grained dataset design.
//!
//! Samples carry a fine category (clear positive, clear negative, or one of
//! several ambiguity subsets). A *design* chooses which ambiguity subsets
//! are pulled out into a third, uncertain class instead of being forced onto
//! their binary fallback label. The toolkit generates synthetic data, applies
//! designs, trains a small softmax MLP with Adam and cosine decay, and
//! measures the false alarm rate (negatives predicted positive) of every
//! design in an ablation table.
//!
//! Pipeline: [`synthgen`] → [`manifest`] → [`design`] → [`trainer`] →
//! [`metrics`], orchestrated by [`ablation`] and exposed through [`cli`].

pub mod ablation;
pub mod cli;
pub mod design;
pub mod error;
pub mod manifest;
pub mod metrics;
pub mod synthgen;
pub mod trainer;

pub use error::{Error, Result};
