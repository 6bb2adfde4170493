//! Scenario files.
//!
//! A scenario is one JSON object:
//!
//! ```text
//! {
//!   "users":     [{"id": 1, "supplier": 1, "p2p": true}, ...],
//!   "suppliers": [1, 2, ...],
//!   "schedule":  {"fit": "0.05", "tp": "0.1", "rp": "0.2"},
//!   "slots":     [[{"user": 1, "committed": "3", "reading": "4",
//!                   "bid_accepted": true, "bid_type": "buy"}, ...], ...],
//!   "slots_per_billing_period": 10
//! }
//! ```
//!
//! Every quantity is a decimal string in kWh or currency per kWh with at
//! most six fractional digits.

use std::fs;
use std::path::Path;

use ppbsp_core::decimal::Fixed;
use ppbsp_core::market::{Scenario, Violation};

#[derive(Debug, thiserror::Error)]
pub enum FileError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("{path}: {} scenario violation(s), first: {first:?}", count)]
    Invalid { path: String, count: usize, first: Violation },
}

pub fn scenario_to_json(s: &Scenario) -> String {
    let mut out = serde_json::to_string_pretty(s).expect("scenario serializes");
    out.push('\n');
    out
}

pub fn save_scenario(path: &Path, s: &Scenario) -> Result<(), FileError> {
    fs::write(path, scenario_to_json(s)).map_err(|source| FileError::Io { path: path.display().to_string(), source })
}

/// Read and validate a scenario.
pub fn load_scenario(path: &Path) -> Result<Scenario, FileError> {
    let p = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| FileError::Io { path: p.clone(), source })?;
    let s: Scenario = serde_json::from_str(&text).map_err(|source| FileError::Json { path: p.clone(), source })?;
    let violations = s.validate();
    if let Some(first) = violations.first() {
        return Err(FileError::Invalid { path: p, count: violations.len(), first: first.clone() });
    }
    Ok(s)
}

/// Headline counts printed after `generate`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioSummary {
    pub users: usize,
    pub suppliers: usize,
    pub slots: usize,
    pub p2p_users: usize,
    pub accepted_bids: usize,
    /// Largest `|InDev|` over accepted bids.
    pub max_abs_deviation: Fixed,
    pub violations: usize,
}

impl ScenarioSummary {
    pub fn of(s: &Scenario) -> Self {
        let accepted = s.slots.iter().flatten().filter(|t| t.bid_accepted);
        ScenarioSummary {
            users: s.users.len(),
            suppliers: s.suppliers.len(),
            slots: s.slots.len(),
            p2p_users: s.users.iter().filter(|u| u.p2p).count(),
            accepted_bids: accepted.clone().count(),
            max_abs_deviation: accepted.map(|t| t.deviation().abs()).max().unwrap_or(Fixed::ZERO),
            violations: s.validate().len(),
        }
    }

    pub fn all_deviations_zero(&self) -> bool {
        self.max_abs_deviation.is_zero()
    }
}

impl std::fmt::Display for ScenarioSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "users: {}", self.users)?;
        writeln!(f, "suppliers: {}", self.suppliers)?;
        writeln!(f, "slots: {}", self.slots)?;
        writeln!(f, "p2p users: {}", self.p2p_users)?;
        writeln!(f, "accepted bids: {}", self.accepted_bids)?;
        writeln!(f, "max |deviation|: {}", self.max_abs_deviation)?;
        writeln!(f, "all deviations zero: {}", if self.all_deviations_zero() { "yes" } else { "no" })?;
        write!(f, "violations: {}", self.violations)
    }
}
