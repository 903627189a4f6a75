//! Calibration and quality diagnostics: SBC, expected coverage (TARP and the
//! density-rank variant) and the classifier two-sample test.

mod c2st;
mod coverage;
mod sbc;

pub use c2st::{c2st, C2stConfig, C2stResult};
pub use coverage::{coverage_levels, expected_coverage_rank, run_tarp, CoverageCurve, TarpReference};
pub use sbc::{ks_uniform_ranks, run_sbc, SbcResult};

use serde::{Deserialize, Serialize};

/// Serializable outcome of one diagnostic with its verdict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub method: String,
    /// `pass` or `fail`.
    pub verdict: String,
    /// Scalar the verdict is based on (min p-value, max deviation, accuracy).
    pub statistic: f64,
    pub threshold: f64,
    pub details: serde_json::Value,
}

impl DiagnosticReport {
    pub fn passed(&self) -> bool {
        self.verdict == "pass"
    }

    pub(crate) fn new(method: &str, pass: bool, statistic: f64, threshold: f64, details: serde_json::Value) -> Self {
        Self {
            method: method.to_string(),
            verdict: if pass { "pass" } else { "fail" }.to_string(),
            statistic,
            threshold,
            details,
        }
    }
}
