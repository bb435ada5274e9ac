//! Minimal reverse-mode differentiation tape.

mod tape;

pub use tape::{spectrum_of, Gradients, OpKind, Tape, Var};
