use std::fmt;

use crate::event_stream::Violation;

#[derive(Debug, thiserror::Error)]
pub enum FdgnnError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid stream: {}", ViolationList(.0))]
    Invalid(Vec<Violation>),

    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    Shape {
        what: String,
        expected: usize,
        got: usize,
    },

    #[error("event seq={seq} (kind {kind}) has zero intensity under the current state")]
    Forbidden { seq: u64, kind: u8 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("no events to {0}")]
    NoEvents(&'static str),

    #[error("bad model file: {0}")]
    Model(String),

    #[error("bad config: {0}")]
    Config(String),
}

pub type Result<T, E = FdgnnError> = std::result::Result<T, E>;

struct ViolationList<'a>(&'a [Violation]);

impl fmt::Display for ViolationList<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}
