use std::path::PathBuf;

use thiserror::Error;

use crate::dfo::SolveTrace;
use crate::problem::Violation;

pub type Result<T, E = FalconError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum FalconError {
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid instance: {}", join(.0))]
    InvalidInstance(Vec<Violation>),

    #[error("domain error: {0}")]
    Domain(String),

    /// The KKT feasibility subproblem could not be satisfied at the given dual point.
    #[error("certificate error: {0}")]
    Certificate(String),

    #[error("instance too large for exhaustive search: p = {p} > {max}")]
    Size { p: usize, max: usize },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("format error in {}: {}", .path.display(), .problems.join("; "))]
    Format {
        path: PathBuf,
        problems: Vec<String>,
    },

    #[error("stage provider failed: {0}")]
    Provider(String),

    #[error("stage {stage} failed after {} completed stage(s): {source}", .completed.len())]
    Stage {
        stage: usize,
        completed: Vec<SolveTrace>,
        #[source]
        source: Box<FalconError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl FalconError {
    pub(crate) fn format(path: impl Into<PathBuf>, problem: impl Into<String>) -> Self {
        FalconError::Format {
            path: path.into(),
            problems: vec![problem.into()],
        }
    }
}

fn join(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(FalconError::Dimension {
            what,
            expected,
            found,
        })
    }
}
