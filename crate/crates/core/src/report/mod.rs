//! Run artifacts on disk and the power-model energy/carbon estimate.

mod artifacts;
mod energy;
mod recs;

pub use artifacts::{
    check_name, read_manifest, sha256_hex, verify_artifacts, write_artifacts, ArtifactBundle, ArtifactEntry,
    FailureRecord, RunInfo, RunManifest, MANIFEST_FILE,
};
pub use energy::{
    track_energy, EnergyMonitor, EnergyReport, EnergySample, EnergySummary, PowerModel, DEFAULT_CARBON_INTENSITY,
};
pub use recs::{read_recommendations, render_recommendations, write_recommendations};

use std::fmt;
use std::path::PathBuf;

use crate::models::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("cannot access {0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: digest {found} does not match manifest {expected}")]
    DigestMismatch {
        path: String,
        expected: String,
        found: String,
    },
    #[error("artifact {0} listed in the manifest is missing")]
    Missing(String),
    #[error("`{0}` is not usable as a file name (letters, digits, `_`, `-`, `.`)")]
    InvalidName(String),
    #[error("id {0:?} contains a tab or line break")]
    UnwritableId(String),
    #[error("unknown id {0}")]
    UnknownId(String),
    #[error("recommendations need user and item id maps")]
    MissingIdMaps,
    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: usize, msg: String },
}

/// Shortest round-trip text for a float, in exponent form when very small or large.
pub(crate) struct Num(pub f64);

impl fmt::Display for Num {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = self.0.abs();
        if a != 0.0 && a.is_finite() && !(1e-5..1e16).contains(&a) {
            write!(f, "{:e}", self.0)
        } else {
            write!(f, "{}", self.0)
        }
    }
}

#[cfg(test)]
mod num_tests {
    use super::Num;

    #[test]
    fn round_trips() {
        for x in [
            0.0,
            0.5,
            -3.25,
            2.4485775262779257e-22,
            1e300,
            123456.789,
            f64::MIN_POSITIVE,
        ] {
            let s = Num(x).to_string();
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(Num(2.5e-22).to_string(), "2.5e-22");
        assert_eq!(Num(0.25).to_string(), "0.25");
    }
}
