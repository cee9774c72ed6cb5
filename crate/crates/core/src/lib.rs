//! Story generation from sequences of independent short descriptions.
//!
//! The crate bundles everything the `d2s` workbench needs: corpus ingestion and
//! statistics, a small reverse-mode tensor kernel, the bidirectional-GRU
//! encoder / attentive two-layer GRU decoder, Adam training with checkpoints,
//! greedy and beam decoding, the BLEU-4 / METEOR / TER / ROUGE-L evaluation
//! stack, and an interpolated Kneser-Ney n-gram language model.

pub mod corpus;
pub mod generator;
pub mod metrics;
pub mod model;
pub mod ngram_lm;
pub mod numkernel;
pub mod trainer;
