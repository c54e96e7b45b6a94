//! Long-form text generation from unordered content items, with a plan
//! scorer that mixes per-item conditioned language models at every step.

pub mod augment;
pub mod autograd;
pub mod content;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod mixed_lm;
pub mod par;
pub mod preprocess;
pub mod synthetic;
pub mod tensor;
pub mod text;

pub use error::{Error, Result};
