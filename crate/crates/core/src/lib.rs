//! Function-level vulnerability detection for C/C++ source.
//!
//! The pipeline lexes functions into a 156-symbol vocabulary, removes
//! duplicates, labels functions from static-analyzer findings, learns
//! convolutional features with a small network and classifies the pooled
//! features with a random forest.

pub mod corpus;
pub mod forest;
pub mod labels;
pub mod lexer;
pub mod metrics;
pub mod nn;
pub mod synthetic;

pub use corpus::{FunctionRecord, Origin, SplitAssignment};
pub use lexer::{lex, render, LexError, LexedFunction, TokenId, TokenTable};
pub use metrics::{Confusion, EvalReport};
pub use nn::{Hyperparams, Model};
