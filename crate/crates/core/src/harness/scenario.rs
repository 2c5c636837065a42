//! Scenario files: a single TOML document describing the space, the agents
//! and the run parameters.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::mechanism::{Mode, DEFAULT_IOTA};
use crate::menu::{grid_size, GridConfig, GridWeights, ShareScope, DEFAULT_GRID_BUDGET};
use crate::space::{aggregate_risk, EndowmentProfile, RandomVariable, StateSpace, PROB_SUM_TOL};
use crate::utility::{CredalSet, EntropicUtility, MaxMinUtility, Utility, UtilityProfile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub space: SpaceSpec,
    pub agents: Vec<AgentSpec>,
    pub grid: GridSpec,
    #[serde(default)]
    pub mechanism: MechanismSpec,
    #[serde(default)]
    pub audit: AuditSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSpec {
    /// State labels; defaults to `s0, s1, ...`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<Vec<String>>,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub endowment: Vec<f64>,
    pub utility: UtilitySpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UtilityKind {
    Entropic,
    Maxmin,
    Neutral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilitySpec {
    pub kind: UtilityKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Priors besides the reference probability (max-min only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub priors: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lip_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub resolution: u32,
    #[serde(default)]
    pub scope: ShareScope,
    #[serde(default)]
    pub weights: GridWeights,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric_terms: Option<usize>,
}

fn default_budget() -> usize {
    DEFAULT_GRID_BUDGET
}

impl GridSpec {
    pub fn config(&self) -> GridConfig {
        GridConfig {
            resolution: self.resolution,
            scope: self.scope,
            weights: self.weights,
            budget: self.budget,
            metric_terms: self.metric_terms,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ModeKind {
    #[default]
    Exact,
    Perturbed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismSpec {
    #[serde(default)]
    pub mode: ModeKind,
    /// Override for `L`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default = "default_iota")]
    pub iota: f64,
    /// Refine the welfare maximizer off the grid.
    #[serde(default)]
    pub refine: bool,
    /// Skip the auction stage.
    #[serde(default)]
    pub audit_only: bool,
}

fn default_iota() -> f64 {
    DEFAULT_IOTA
}

impl Default for MechanismSpec {
    fn default() -> Self {
        Self {
            mode: ModeKind::Exact,
            lipschitz: None,
            epsilon: None,
            iota: DEFAULT_IOTA,
            refine: false,
            audit_only: false,
        }
    }
}

impl MechanismSpec {
    pub fn mode(&self) -> Mode {
        match self.mode {
            ModeKind::Exact => Mode::Exact,
            ModeKind::Perturbed => Mode::Perturbed {
                epsilon: self.epsilon,
                iota: self.iota,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditSpec {
    #[serde(default = "yes")]
    pub regularity: bool,
    /// Sampled first-mover deviations; 0 disables the audit.
    #[serde(default = "default_deviations")]
    pub deviations: usize,
    #[serde(default = "yes")]
    pub bids: bool,
    /// Probe pairs used by the regularity spot checks.
    #[serde(default = "default_pairs")]
    pub max_pairs: usize,
}

fn yes() -> bool {
    true
}

fn default_deviations() -> usize {
    100
}

fn default_pairs() -> usize {
    20_000
}

impl Default for AuditSpec {
    fn default() -> Self {
        Self {
            regularity: true,
            deviations: default_deviations(),
            bids: true,
            max_pairs: default_pairs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    #[default]
    Structured,
    Tabular,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_dir")]
    pub dir: String,
    #[serde(default)]
    pub format: OutputFormat,
}

fn default_dir() -> String {
    "out".into()
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            format: OutputFormat::Structured,
        }
    }
}

/// Failure to load a scenario.
#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error("{} validation error(s):\n  {}", .0.len(), .0.join("\n  "))]
    Invalid(Vec<String>),
}

impl LoadError {
    pub fn issues(&self) -> Vec<String> {
        match self {
            LoadError::Invalid(v) => v.clone(),
            other => vec![other.to_string()],
        }
    }
}

/// Reads, parses and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig, LoadError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| LoadError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let config = parse_scenario(&text)?;
    config.validate().map_err(LoadError::Invalid)?;
    Ok(config)
}

/// Parses without validating.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, LoadError> {
    toml::from_str(text).map_err(|e| LoadError::Parse(e.to_string()))
}

fn check_prob_vector(v: &[f64], what: &str, width: usize, issues: &mut Vec<String>) {
    if v.len() != width {
        issues.push(format!("{what} has {} entries, expected {width}", v.len()));
        return;
    }
    for (i, &p) in v.iter().enumerate() {
        if !p.is_finite() || p <= 0.0 {
            issues.push(format!(
                "{what}[{i}] = {p}, expected a positive finite probability"
            ));
        }
    }
    let total: f64 = v.iter().sum();
    if (total - 1.0).abs() > PROB_SUM_TOL {
        issues.push(format!("{what} sums to {total}, expected 1"));
    }
}

impl ScenarioConfig {
    /// Every problem found, not just the first.
    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut issues = Vec::new();
        let m = self.space.probs.len();
        if m == 0 {
            issues.push("space.probs is empty".into());
        }
        check_prob_vector(&self.space.probs, "space.probs", m, &mut issues);
        if let Some(states) = &self.space.states {
            if states.len() != m {
                issues.push(format!(
                    "space.states has {} labels, space.probs has {m} entries",
                    states.len()
                ));
            }
        }
        if self.agents.len() < 2 {
            issues.push(format!("need at least 2 agents, got {}", self.agents.len()));
        }
        for (i, agent) in self.agents.iter().enumerate() {
            let at = format!("agents[{i}]");
            if agent.endowment.len() != m {
                issues.push(format!(
                    "{at}.endowment has {} entries, expected {m}",
                    agent.endowment.len()
                ));
            }
            if agent.endowment.iter().any(|v| !v.is_finite()) {
                issues.push(format!("{at}.endowment has a non-finite entry"));
            }
            let u = &agent.utility;
            match (u.kind, u.gamma) {
                (UtilityKind::Neutral, Some(_)) => {
                    issues.push(format!("{at}.utility: neutral utilities take no gamma"))
                }
                (UtilityKind::Neutral, None) => {}
                (_, None) => issues.push(format!("{at}.utility.gamma is missing")),
                (_, Some(g)) if !(g.is_finite() && g > 0.0) => {
                    issues.push(format!("{at}.utility.gamma = {g}, expected > 0"))
                }
                _ => {}
            }
            if u.kind != UtilityKind::Maxmin && !u.priors.is_empty() {
                issues.push(format!("{at}.utility: only maxmin utilities take priors"));
            }
            for (k, prior) in u.priors.iter().enumerate() {
                check_prob_vector(prior, &format!("{at}.utility.priors[{k}]"), m, &mut issues);
            }
            if let Some(l) = u.lip_bound {
                if !(l.is_finite() && l > 0.0) {
                    issues.push(format!("{at}.utility.lip_bound = {l}, expected > 0"));
                }
            }
        }
        if self.grid.resolution == 0 {
            issues.push("grid.resolution must be at least 1".into());
        }
        let mech = &self.mechanism;
        if !(mech.iota > 0.0 && mech.iota < 1.0) {
            issues.push(format!(
                "mechanism.iota = {}, expected in (0, 1)",
                mech.iota
            ));
        }
        if let Some(e) = mech.epsilon {
            if !(e.is_finite() && e > 0.0) {
                issues.push(format!("mechanism.epsilon = {e}, expected > 0"));
            }
        }
        if let Some(l) = mech.lipschitz {
            if !(l.is_finite() && l > 0.0) {
                issues.push(format!("mechanism.lipschitz = {l}, expected > 0"));
            }
        }
        if issues.is_empty() {
            let x = self.aggregate().expect("dimensions checked");
            let size = grid_size(&x, self.agents.len(), &self.grid.config());
            if size > self.grid.budget as u128 {
                issues.push(
                    Error::GridBudget {
                        size,
                        budget: self.grid.budget,
                    }
                    .to_string(),
                );
            }
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(issues)
        }
    }

    pub fn state_space(&self) -> crate::Result<StateSpace> {
        match &self.space.states {
            Some(s) => StateSpace::new(s.clone(), self.space.probs.clone()),
            None => StateSpace::from_probs(self.space.probs.clone()),
        }
    }

    pub fn endowments(&self) -> crate::Result<EndowmentProfile> {
        EndowmentProfile::from_rows(self.agents.iter().map(|a| a.endowment.clone()).collect())
    }

    pub fn aggregate(&self) -> crate::Result<RandomVariable> {
        aggregate_risk(&self.endowments()?)
    }

    pub fn utility_profile(&self) -> crate::Result<UtilityProfile> {
        let probs = &self.space.probs;
        let utilities = self
            .agents
            .iter()
            .map(|a| {
                let u = &a.utility;
                match u.kind {
                    UtilityKind::Neutral => Ok(Utility::Neutral),
                    UtilityKind::Entropic => Ok(Utility::Entropic(EntropicUtility::new(
                        u.gamma.unwrap_or(0.0),
                    )?)),
                    UtilityKind::Maxmin => {
                        let credal = CredalSet::new(probs, u.priors.clone(), u.lip_bound)?;
                        Ok(Utility::MaxMin(MaxMinUtility::new(
                            u.gamma.unwrap_or(0.0),
                            credal,
                        )?))
                    }
                }
            })
            .collect::<crate::Result<Vec<_>>>()?;
        UtilityProfile::new(probs.clone(), utilities)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }
}
