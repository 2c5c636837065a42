//! Run reports and their structured (JSON) and tabular (CSV) forms.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::scenario::{OutputFormat, ScenarioConfig};
use crate::auction::{AuctionOutcome, BidAudit};
use crate::error::{Error, Result};
use crate::mechanism::{DeviationAudit, Transcript};
use crate::menu::{ShareProfile, ShareScope};
use crate::utility::RegularityReport;
use crate::welfare::WelfareResult;

pub const SCHEMA: &str = "pnc-report/1";
pub const STRUCTURED_FILE: &str = "report.json";
pub const TABULAR_FILE: &str = "payoffs.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub points: usize,
    pub resolution: u32,
    pub scope: ShareScope,
    pub classes: usize,
    pub diameter: f64,
    /// Whether `diameter` is exact or an upper bound.
    pub diameter_exact: bool,
    pub probe_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormSummary {
    pub weights: Vec<f64>,
    pub lambda: f64,
    pub tilt_gap: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRow {
    pub agent: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub kind: String,
    /// Grid average of the reference-prior value.
    pub avg: f64,
    /// Grid average of the agent's own value (worst case for max-min).
    pub under_avg: f64,
    /// Mechanism payoff.
    pub g: f64,
    /// Mechanism payoff plus auction transfer.
    pub final_payoff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionSection {
    pub outcome: AuctionOutcome,
    /// Mechanism run with the auction winner moving first.
    pub transcript: Transcript,
    pub final_payoffs: Vec<f64>,
    pub winner_invariance_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "audit", rename_all = "kebab-case")]
pub enum Audit {
    Regularity(RegularityReport),
    FirstMover(DeviationAudit),
    Bids(BidAudit),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantCheck {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl InvariantCheck {
    pub fn new(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            value,
            tolerance,
            passed: value.is_finite() && value <= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: String,
    pub engine_version: String,
    pub scenario: ScenarioConfig,
    pub grid: GridSummary,
    pub lipschitz: f64,
    pub w_max: f64,
    pub eta: f64,
    pub welfare: WelfareResult,
    pub welfare_shares: Option<ShareProfile>,
    pub closed_form: Option<ClosedFormSummary>,
    pub transcript: Transcript,
    pub agents: Vec<AgentRow>,
    /// Absent for audit-only runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auction: Option<AuctionSection>,
    pub audits: Vec<Audit>,
    pub invariants: Vec<InvariantCheck>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.invariants.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&InvariantCheck> {
        self.invariants.iter().filter(|c| !c.passed).collect()
    }

    pub fn check(&self, name: &str) -> Option<&InvariantCheck> {
        self.invariants.iter().find(|c| c.name == name)
    }

    /// Number of non-finite numbers among the computed fields.
    pub fn non_finite_fields(&self) -> usize {
        let mut vals: Vec<f64> = vec![self.lipschitz, self.w_max, self.eta, self.grid.diameter];
        vals.push(self.welfare.value);
        vals.extend(&self.welfare.per_agent_values);
        for row in self.welfare.allocation.rows() {
            vals.extend(row);
        }
        let transcripts =
            std::iter::once(&self.transcript).chain(self.auction.as_ref().map(|a| &a.transcript));
        for t in transcripts {
            vals.extend(&t.payoffs);
            vals.extend(&t.utilities);
            for p in &t.schedules {
                vals.extend(&p.values);
            }
        }
        for a in &self.agents {
            vals.extend([a.avg, a.under_avg, a.g]);
            vals.extend(a.final_payoff);
        }
        if let Some(a) = &self.auction {
            vals.extend(&a.final_payoffs);
            vals.extend(&a.outcome.bids);
            vals.extend(&a.outcome.transfers);
            vals.push(a.outcome.eta);
        }
        vals.extend(self.invariants.iter().map(|c| c.value));
        vals.iter().filter(|v| !v.is_finite()).count()
    }
}

/// Pretty JSON with a trailing newline.
pub fn render_json(report: &RunReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report).map_err(|e| Error::Parse(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

#[derive(Serialize)]
struct TabRow {
    agent: usize,
    avg: f64,
    under_avg: f64,
    g: f64,
    #[serde(rename = "final")]
    final_payoff: Option<f64>,
}

/// One CSV row per agent: `agent,avg,under_avg,g,final`.
pub fn render_tabular(report: &RunReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for a in &report.agents {
        w.serialize(TabRow {
            agent: a.agent,
            avg: a.avg,
            under_avg: a.under_avg,
            g: a.g,
            final_payoff: a.final_payoff,
        })
        .map_err(|e| Error::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

/// Writes the requested files into `dir`, returning their paths.
pub fn emit_report(report: &RunReport, dir: &Path, format: OutputFormat) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    if matches!(format, OutputFormat::Structured | OutputFormat::Both) {
        let path = dir.join(STRUCTURED_FILE);
        fs::write(&path, render_json(report)?)?;
        written.push(path);
    }
    if matches!(format, OutputFormat::Tabular | OutputFormat::Both) {
        let path = dir.join(TABULAR_FILE);
        fs::write(&path, render_tabular(report)?)?;
        written.push(path);
    }
    Ok(written)
}

pub fn read_report(path: &Path) -> Result<RunReport> {
    let text = fs::read_to_string(path)?;
    let report: RunReport = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
    if report.schema != SCHEMA {
        return Err(Error::Parse(format!(
            "schema {} is not {SCHEMA}",
            report.schema
        )));
    }
    Ok(report)
}
