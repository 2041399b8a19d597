//! Consumer-side toolkit for tagged document-parsing model output.
//!
//! - [`doc_model`]: blocks, boxes on the 1024 × 1280 grid, classes and prompt configurations.
//! - [`grammar`]: tokenizer, batch and streaming parsers, serializer.
//! - [`jsonl`]: the JSONL document interchange format.
//! - [`reading_order`]: canonical and natural reading-order policies.
//! - [`tables`]: span-aware table model with LaTeX and HTML parsers and emitters.
//! - [`metrics`]: normalization, WER, F1, edit distance, BLEU, tree edit distance and TEDS.
//! - [`mtp`]: dense simulation of chained multi-token prediction heads.

pub mod doc_model;
pub mod grammar;
pub mod jsonl;
pub mod metrics;
pub mod mtp;
pub mod reading_order;
pub mod tables;

pub use doc_model::{
    dequantize, quantize, valid_prompt_combinations, Axis, BBox, Block, Document, ModelError,
    PageSize, PromptConfig, SemanticClass, TextMode,
};
pub use grammar::{
    make_serializable, parse_output, parse_output_with, serialize, tokenize, ParseError,
    ParseOptions,
};
