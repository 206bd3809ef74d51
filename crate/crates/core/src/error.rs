use std::fmt;

use thiserror::Error;

/// Index list rendered 1-based, the way stations and classes are named in reports.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Indices(pub Vec<usize>);

impl fmt::Display for Indices {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, idx) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}", idx + 1)?;
        }
        f.write_str("}")
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QnError {
    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A station's per-instance utilization is at or above 1.
    #[error("overloaded station(s) {stations}: residence time undefined at utilization >= 1")]
    OverloadedStation { stations: Indices },

    /// The configuration sits at or below the capacity floor of the listed stations.
    #[error("infeasible configuration: station(s) {stations} at or below the capacity floor")]
    InfeasibleConfiguration { stations: Indices },

    #[error("unattainable SLA for class {}: threshold {threshold} does not exceed the demand floor {floor}", class + 1)]
    UnattainableSla {
        class: usize,
        threshold: f64,
        floor: f64,
    },

    #[error("iteration cap of {cap} exceeded")]
    IterationCap { cap: u64 },
}

impl QnError {
    pub(crate) fn overloaded(stations: Vec<usize>) -> Self {
        QnError::OverloadedStation {
            stations: Indices(stations),
        }
    }

    pub(crate) fn infeasible(stations: Vec<usize>) -> Self {
        QnError::InfeasibleConfiguration {
            stations: Indices(stations),
        }
    }
}

pub type Result<T, E = QnError> = std::result::Result<T, E>;

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(QnError::DimensionMismatch {
            what,
            expected,
            got,
        })
    }
}
