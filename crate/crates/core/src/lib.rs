//! Desk-scale dual-encoder training and bias diagnostics for long-caption
//! contrastive learning.
//!
//! The crate covers the full loop: caption splitting and tokenization,
//! summary-dropping augmentation with pad redistribution, positional table
//! stretching, a toy transformer dual encoder with analytic gradients, the
//! weighted two-branch contrastive objective with a PCA alignment operator,
//! a deterministic training harness, and retrieval/probe/attention
//! diagnostics.
//!
//! Core numerics are generic over the scalar type via [`num::Scalar`]
//! (`f32` or `f64`); the harness and CLI run everything at [`Real`]
//! precision.

pub mod augmentation;
pub mod corpus;
pub mod encoder;
pub mod evaluation;
pub mod manifest;
pub mod num;
pub mod objective;
pub mod pos_embed;
pub mod report;
pub mod text_pipeline;
pub mod training;

/// Scalar type used by the training harness and CLI.
pub type Real = f64;
