//! Desk-scale textless translation lab over discrete unit sequences.
//!
//! The pipeline mirrors a speech translation stack with the audio ends cut
//! off: feature frames are quantized into unit sequences (`quantizer`),
//! tokenized with BPE (`tokenizer`), and modeled by a small encoder-decoder
//! trained with the pretrain / finetune / backtranslate recipe (`training`).
//! A synthetic cipher-language generator (`synth`) provides paired corpora
//! and exact references so the whole recipe is testable in minutes, and
//! `eval` scores translations with corpus token-BLEU.
//!
//! With the default `parallel` feature, data-parallel inner loops (frame
//! assignment, batch decoding, matrix products, n-gram counting) run on
//! rayon; disabling it falls back to sequential loops with bit-identical
//! results.

pub mod ablation;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod model;
pub mod noising;
pub mod par;
pub mod quantizer;
pub mod rng;
pub mod synth;
pub mod tokenizer;
pub mod training;
pub mod types;

pub use error::{Error, Result};
pub use types::{Language, TokenSequence, UnitSequence};
