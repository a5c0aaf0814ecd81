//! Self-checks behind `derev verify`: finite-difference gradients, DSP and
//! convolution identities and loss closed forms, each compared against an
//! independent reference computation.

mod dsp;
mod gradients;
mod losses;
mod reverb;

pub use dsp::dsp_suite;
pub use gradients::{gradient_suite, FD_EPSILON, MAX_REL_ERROR, PROBES};
pub use losses::{losses_suite, LOSS_SAMPLES, LOSS_TOL};
pub use reverb::reverb_suite;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// A named group of self-checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Gradcheck,
    Dsp,
    Reverb,
    Losses,
    All,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gradcheck" | "gradients" => Ok(Suite::Gradcheck),
            "dsp" => Ok(Suite::Dsp),
            "reverb" => Ok(Suite::Reverb),
            "losses" => Ok(Suite::Losses),
            "all" => Ok(Suite::All),
            other => Err(Error::Config(format!(
                "unknown suite '{other}' (gradcheck, dsp, reverb, losses, all)"
            ))),
        }
    }
}

/// Runs one suite, or every suite in a fixed order.
pub fn run_suite(suite: Suite) -> Vec<CheckOutcome> {
    match suite {
        Suite::Gradcheck => gradient_suite(),
        Suite::Dsp => dsp_suite(),
        Suite::Reverb => reverb_suite(),
        Suite::Losses => losses_suite(),
        Suite::All => [Suite::Gradcheck, Suite::Dsp, Suite::Reverb, Suite::Losses]
            .into_iter()
            .flat_map(run_suite)
            .collect(),
    }
}

/// Result of one named check.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    pub fn at_most(name: &str, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        CheckOutcome {
            name: name.to_string(),
            value,
            threshold,
            passed: value <= threshold,
            detail: detail.into(),
        }
    }

    pub fn exact(name: &str, ok: bool, detail: impl Into<String>) -> Self {
        CheckOutcome {
            name: name.to_string(),
            value: if ok { 0.0 } else { 1.0 },
            threshold: 0.0,
            passed: ok,
            detail: detail.into(),
        }
    }

    pub fn failed(name: &str, detail: impl Into<String>) -> Self {
        CheckOutcome {
            name: name.to_string(),
            value: f64::INFINITY,
            threshold: 0.0,
            passed: false,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {:.3e} (limit {:.1e}) {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.threshold,
            self.detail
        )
    }
}
