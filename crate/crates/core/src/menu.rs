//! The feasible menu: sign-matched allocations of the aggregate risk.
//!
//! An allocation assigns each agent a payoff per state. It is feasible when
//! the payoffs sum to the aggregate risk `X`, every payoff carries the sign
//! of `X` in its state, and payoffs vanish where `X` does. Feasible points
//! are parameterized by a point of the share simplex per nonzero state,
//! `xi_i(w) = q_i(w) X(w)`.
//!
//! [`MenuGrid`] discretizes the menu with simplex compositions, attaches a
//! full-support probability over its points and a weak*-style metric built
//! from a finite family of integrable test functions.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{sign_partition, RandomVariable, StateSpace};

/// Absolute tolerance for column sums and simplex membership.
pub const FEASIBILITY_TOL: f64 = 1e-12;

/// Default cap on the number of grid points.
pub const DEFAULT_GRID_BUDGET: usize = 200_000;

/// Payoff matrix, one row per agent and one column per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    agents: usize,
    states: usize,
    payoff: Vec<f64>,
}

impl Allocation {
    pub fn new(agents: usize, states: usize, payoff: Vec<f64>) -> Result<Self> {
        if payoff.len() != agents * states {
            return Err(Error::Structure(format!(
                "allocation of {agents}x{states} needs {} entries, got {}",
                agents * states,
                payoff.len()
            )));
        }
        if payoff.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("allocation entry".into()));
        }
        Ok(Self {
            agents,
            states,
            payoff,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let states = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != states) {
            return Err(Error::Structure("ragged allocation rows".into()));
        }
        Self::new(rows.len(), states, rows.concat())
    }

    pub fn zeros(agents: usize, states: usize) -> Self {
        Self {
            agents,
            states,
            payoff: vec![0.0; agents * states],
        }
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn get(&self, agent: usize, state: usize) -> f64 {
        self.payoff[agent * self.states + state]
    }

    pub fn set(&mut self, agent: usize, state: usize, value: f64) {
        self.payoff[agent * self.states + state] = value;
    }

    /// Agent `agent`'s payoff across states.
    pub fn row(&self, agent: usize) -> &[f64] {
        &self.payoff[agent * self.states..(agent + 1) * self.states]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.agents).map(|i| self.row(i).to_vec()).collect()
    }

    /// Convex combination `t * self + (1 - t) * other`.
    pub fn mix(&self, other: &Allocation, t: f64) -> Allocation {
        let payoff = self
            .payoff
            .iter()
            .zip(&other.payoff)
            .map(|(a, b)| t * a + (1.0 - t) * b)
            .collect();
        Allocation {
            agents: self.agents,
            states: self.states,
            payoff,
        }
    }

    /// Same allocation with agent rows reordered: row `k` of the result is
    /// row `order[k]` of `self`.
    pub fn permute_agents(&self, order: &[usize]) -> Allocation {
        let payoff = order
            .iter()
            .flat_map(|&i| self.row(i).iter().copied())
            .collect();
        Allocation {
            agents: self.agents,
            states: self.states,
            payoff,
        }
    }
}

/// Per-state points of the share simplex; `None` on states where `X = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareProfile {
    shares: Vec<Option<Vec<f64>>>,
}

impl ShareProfile {
    pub fn new(shares: Vec<Option<Vec<f64>>>) -> Self {
        Self { shares }
    }

    /// The same share vector on every nonzero state of `x`.
    pub fn constant(x: &RandomVariable, q: &[f64]) -> Self {
        let shares = x
            .values()
            .iter()
            .map(|&v| (v != 0.0).then(|| q.to_vec()))
            .collect();
        Self { shares }
    }

    pub fn state(&self, state: usize) -> Option<&[f64]> {
        self.shares.get(state).and_then(|s| s.as_deref())
    }

    pub fn states(&self) -> usize {
        self.shares.len()
    }
}

/// Maps shares to payoffs, `xi_i(w) = q_i(w) X(w)` on nonzero states.
pub fn shares_to_allocation(q: &ShareProfile, x: &RandomVariable) -> Result<Allocation> {
    if q.states() != x.len() {
        return Err(Error::Structure(format!(
            "share profile covers {} states, X has {}",
            q.states(),
            x.len()
        )));
    }
    let mut agents = None;
    for (state, &xv) in x.values().iter().enumerate() {
        if xv == 0.0 {
            continue;
        }
        let shares = q.state(state).ok_or_else(|| {
            Error::Validation(format!("no shares given for nonzero state {state}"))
        })?;
        check_simplex(shares).map_err(|msg| Error::Validation(format!("state {state}: {msg}")))?;
        match agents {
            None => agents = Some(shares.len()),
            Some(n) if n != shares.len() => {
                return Err(Error::Structure(format!(
                    "state {state} has {} shares, expected {n}",
                    shares.len()
                )))
            }
            _ => {}
        }
    }
    let n = agents.ok_or_else(|| {
        Error::Validation("X vanishes everywhere; agent count is not determined by shares".into())
    })?;
    let mut alloc = Allocation::zeros(n, x.len());
    for (state, &xv) in x.values().iter().enumerate() {
        if let Some(shares) = q.state(state).filter(|_| xv != 0.0) {
            for (agent, &s) in shares.iter().enumerate() {
                alloc.set(agent, state, s * xv);
            }
        }
    }
    Ok(alloc)
}

fn check_simplex(q: &[f64]) -> std::result::Result<(), String> {
    if q.is_empty() {
        return Err("empty share vector".into());
    }
    if let Some(v) = q.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(format!("share {v} outside [0, 1]"));
    }
    let total: f64 = q.iter().sum();
    if (total - 1.0).abs() > FEASIBILITY_TOL {
        return Err(format!("shares sum to {total}"));
    }
    Ok(())
}

/// Outcome of [`validate_feasible`], listing offending indices per rule.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// States whose column sum misses `X`.
    pub sum: Vec<usize>,
    /// `(agent, state)` with `xi * X < 0`.
    pub sign: Vec<(usize, usize)>,
    /// `(agent, state)` with a nonzero payoff where `X = 0`.
    pub anchored_zero: Vec<(usize, usize)>,
    /// `(agent, state)` with `|xi| > |X|`.
    pub bound: Vec<(usize, usize)>,
    /// Shape mismatch between the allocation and `X`.
    pub shape: bool,
}

impl FeasibilityReport {
    pub fn passes(&self) -> bool {
        !self.shape
            && self.sum.is_empty()
            && self.sign.is_empty()
            && self.anchored_zero.is_empty()
            && self.bound.is_empty()
    }
}

/// Checks every menu invariant and reports all violations.
pub fn validate_feasible(xi: &Allocation, x: &RandomVariable) -> FeasibilityReport {
    let mut report = FeasibilityReport::default();
    if xi.states() != x.len() {
        report.shape = true;
        return report;
    }
    for (state, &xv) in x.values().iter().enumerate() {
        let mut column = 0.0;
        for agent in 0..xi.agents() {
            let v = xi.get(agent, state);
            column += v;
            if v * xv < 0.0 {
                report.sign.push((agent, state));
            }
            if xv == 0.0 && v != 0.0 {
                report.anchored_zero.push((agent, state));
            }
            if v.abs() > xv.abs() + FEASIBILITY_TOL {
                report.bound.push((agent, state));
            }
        }
        if (column - xv).abs() > FEASIBILITY_TOL {
            report.sum.push(state);
        }
    }
    report
}

/// Per-agent sharing functions tabulated on the realized values of `X`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharingRule {
    /// Realized values of `X`.
    pub levels: Vec<f64>,
    /// `values[i][k]` is `f_i(levels[k])`.
    pub values: Vec<Vec<f64>>,
}

impl SharingRule {
    /// Linear rule `f_i(x) = w_i x`.
    pub fn proportional(levels: &[f64], weights: &[f64]) -> Self {
        let values = weights
            .iter()
            .map(|w| levels.iter().map(|x| w * x).collect())
            .collect();
        Self {
            levels: levels.to_vec(),
            values,
        }
    }

    fn lookup(&self, agent: usize, level: f64) -> Option<f64> {
        self.levels
            .iter()
            .position(|&l| l == level)
            .map(|k| self.values[agent][k])
    }

    /// Allocation `xi_i = f_i(X)`; fails when `X` takes a value missing
    /// from the table.
    pub fn induced_allocation(&self, x: &RandomVariable) -> Result<Allocation> {
        let n = self.values.len();
        let mut alloc = Allocation::zeros(n, x.len());
        for (state, &xv) in x.values().iter().enumerate() {
            for agent in 0..n {
                let v = self.lookup(agent, xv).ok_or_else(|| {
                    Error::Validation(format!("level {xv} missing from sharing rule"))
                })?;
                alloc.set(agent, state, v);
            }
        }
        Ok(alloc)
    }
}

/// True when every `f_i` is nondecreasing, vanishes at zero and the
/// functions add up to the identity on the realized levels.
///
/// Zero is treated as an implicit level with `f_i(0) = 0` when `X` never
/// vanishes, so a `true` answer always yields a feasible allocation.
pub fn is_anchored_comonotone(rule: &SharingRule) -> bool {
    let n = rule.values.len();
    if n == 0 || rule.values.iter().any(|r| r.len() != rule.levels.len()) {
        return false;
    }
    let mut table: Vec<(f64, Vec<f64>)> = rule
        .levels
        .iter()
        .enumerate()
        .map(|(k, &x)| (x, rule.values.iter().map(|r| r[k]).collect()))
        .collect();
    if !table.iter().any(|(x, _)| *x == 0.0) {
        table.push((0.0, vec![0.0; n]));
    }
    table.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (x, fs) in &table {
        if fs.iter().any(|v| !v.is_finite()) {
            return false;
        }
        if *x == 0.0 && fs.iter().any(|&v| v != 0.0) {
            return false;
        }
        let total: f64 = fs.iter().sum();
        if (total - x).abs() > FEASIBILITY_TOL {
            return false;
        }
    }
    table
        .windows(2)
        .all(|w| w[0].1.iter().zip(&w[1].1).all(|(a, b)| a <= b))
}

/// How share vectors are tied across nonzero states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ShareScope {
    /// An independent share vector per nonzero state.
    #[default]
    PerState,
    /// One share vector per distinct nonzero value of `X`.
    PerLevel,
    /// One share vector for all nonzero states (proportional rules).
    Uniform,
}

/// Probability placed on the grid points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GridWeights {
    #[default]
    Uniform,
    /// `2^-(k+1)` on the k-th point, remainder on the last.
    Geometric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub resolution: u32,
    #[serde(default)]
    pub scope: ShareScope,
    #[serde(default)]
    pub weights: GridWeights,
    #[serde(default = "default_budget")]
    pub budget: usize,
    /// Truncation of the metric's test-function family.
    #[serde(default)]
    pub metric_terms: Option<usize>,
}

fn default_budget() -> usize {
    DEFAULT_GRID_BUDGET
}

impl GridConfig {
    pub fn new(resolution: u32) -> Self {
        Self {
            resolution,
            scope: ShareScope::PerState,
            weights: GridWeights::Uniform,
            budget: DEFAULT_GRID_BUDGET,
            metric_terms: None,
        }
    }

    pub fn with_scope(mut self, scope: ShareScope) -> Self {
        self.scope = scope;
        self
    }
}

/// What a metric test function pairs against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TestFunction {
    /// `e_i (x) 1`: pairs to `E_P[xi_i]`.
    AgentMass { agent: usize },
    /// `e_i (x) 1_{w} / P(w)`: pairs to `xi_i(w)`.
    Coordinate { agent: usize, state: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTerm {
    pub weight: f64,
    pub function: TestFunction,
}

/// Truncated weak*-style metric `d(a, b) = sum_m w_m |<a - b, h_m>|`.
///
/// Every test function has unit `L^1(P)` norm. The first `n` terms are the
/// agent-mass functions, so `|E_P[a_i - b_i]| <= c_i d(a, b)` with
/// `c_i = 1 / w_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakStarMetric {
    probs: Vec<f64>,
    terms: Vec<MetricTerm>,
}

impl WeakStarMetric {
    /// Agent-mass terms followed by coordinate terms on `coordinate_states`
    /// (state-major), weights `2^-m`, truncated to `max_terms` (never below
    /// the `n` mandatory terms).
    pub fn standard(
        probs: &[f64],
        agents: usize,
        coordinate_states: &[usize],
        max_terms: Option<usize>,
    ) -> Self {
        let mut functions: Vec<TestFunction> = (0..agents)
            .map(|agent| TestFunction::AgentMass { agent })
            .collect();
        for &state in coordinate_states {
            for agent in 0..agents {
                functions.push(TestFunction::Coordinate { agent, state });
            }
        }
        let keep = max_terms
            .map_or(functions.len(), |m| m.max(agents))
            .min(functions.len());
        functions.truncate(keep);
        let terms = functions
            .into_iter()
            .enumerate()
            .map(|(m, function)| MetricTerm {
                weight: 0.5f64.powi(m as i32 + 1),
                function,
            })
            .collect();
        Self {
            probs: probs.to_vec(),
            terms,
        }
    }

    pub fn terms(&self) -> &[MetricTerm] {
        &self.terms
    }

    /// Constant `c_i` with `|E_P[a_i - b_i]| <= c_i d(a, b)`.
    pub fn mass_constant(&self, agent: usize) -> f64 {
        self.terms
            .iter()
            .find(|t| t.function == TestFunction::AgentMass { agent })
            .map_or(f64::INFINITY, |t| 1.0 / t.weight)
    }

    fn pairing(&self, function: TestFunction, alloc: &Allocation) -> f64 {
        match function {
            TestFunction::AgentMass { agent } => alloc
                .row(agent)
                .iter()
                .zip(&self.probs)
                .map(|(v, p)| v * p)
                .sum(),
            TestFunction::Coordinate { agent, state } => alloc.get(agent, state),
        }
    }

    /// Weighted pairings `w_m <xi, h_m>`; the metric is the L1 distance of
    /// these vectors.
    pub fn features(&self, alloc: &Allocation) -> Vec<f64> {
        self.terms
            .iter()
            .map(|t| t.weight * self.pairing(t.function, alloc))
            .collect()
    }

    pub fn distance(&self, a: &Allocation, b: &Allocation) -> f64 {
        self.terms
            .iter()
            .map(|t| t.weight * (self.pairing(t.function, a) - self.pairing(t.function, b)).abs())
            .sum()
    }
}

/// Lexicographic compositions of `total` into `parts` nonnegative parts.
pub fn compositions(total: u32, parts: usize) -> Vec<Vec<u32>> {
    fn rec(remaining: u32, parts: usize, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if parts == 1 {
            prefix.push(remaining);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in 0..=remaining {
            prefix.push(first);
            rec(remaining - first, parts - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if parts > 0 {
        rec(total, parts, &mut Vec::with_capacity(parts), &mut out);
    }
    out
}

/// `C(total + parts - 1, parts - 1)`, saturating.
pub fn composition_count(total: u32, parts: usize) -> u128 {
    let k = parts.saturating_sub(1) as u128;
    let n = total as u128 + k;
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul(n - i) {
            Some(v) => v / (i + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Finite discretization of the menu with a full-support probability.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MenuGrid {
    probs: Vec<f64>,
    x: RandomVariable,
    agents: usize,
    resolution: u32,
    scope: ShareScope,
    weight_scheme: GridWeights,
    /// States sharing one share vector, per class.
    classes: Vec<Vec<usize>>,
    points: Vec<Allocation>,
    weights: Vec<f64>,
    metric: WeakStarMetric,
    #[serde(skip)]
    embedding: Vec<f64>,
}

/// Groups of nonzero states that share one share vector under `scope`.
pub fn share_classes(x: &RandomVariable, scope: ShareScope) -> Vec<Vec<usize>> {
    let nonzero = sign_partition(x).nonzero();
    match scope {
        ShareScope::PerState => nonzero.iter().map(|&s| vec![s]).collect(),
        ShareScope::Uniform if nonzero.is_empty() => Vec::new(),
        ShareScope::Uniform => vec![nonzero],
        ShareScope::PerLevel => {
            let mut by_level: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
            for &s in &nonzero {
                by_level.entry(x.get(s).to_bits()).or_default().push(s);
            }
            let mut cls: Vec<Vec<usize>> = by_level.into_values().collect();
            cls.sort();
            cls
        }
    }
}

fn class_grid_size(classes: usize, resolution: u32, agents: usize) -> u128 {
    let per_class = composition_count(resolution, agents);
    (0..classes).fold(1u128, |acc, _| acc.saturating_mul(per_class))
}

/// Number of points [`enumerate_grid`] would produce, without building them.
pub fn grid_size(x: &RandomVariable, agents: usize, config: &GridConfig) -> u128 {
    class_grid_size(
        share_classes(x, config.scope).len(),
        config.resolution,
        agents,
    )
}

/// Enumerates all grid points for `agents` sharing `x`.
///
/// Share vectors are compositions of `resolution` into `agents` parts,
/// one per class of nonzero states (see [`ShareScope`]); points are the
/// cartesian product over classes in lexicographic order of composition
/// indices, first class most significant.
pub fn enumerate_grid(
    space: &StateSpace,
    x: &RandomVariable,
    agents: usize,
    config: &GridConfig,
) -> Result<MenuGrid> {
    if config.resolution == 0 {
        return Err(Error::Parameter(
            "grid resolution must be at least 1".into(),
        ));
    }
    if agents < 2 {
        return Err(Error::Validation("need at least 2 agents".into()));
    }
    if x.len() != space.len() {
        return Err(Error::Structure(format!(
            "X has {} states, space has {}",
            x.len(),
            space.len()
        )));
    }
    let nonzero = sign_partition(x).nonzero();
    let classes = share_classes(x, config.scope);
    let size = class_grid_size(classes.len(), config.resolution, agents);
    if size > config.budget as u128 {
        return Err(Error::GridBudget {
            size,
            budget: config.budget,
        });
    }
    let size = size as usize;
    let comps = compositions(config.resolution, agents);
    let r = config.resolution as f64;

    let mut points = Vec::with_capacity(size);
    let mut digits = vec![0usize; classes.len()];
    for _ in 0..size {
        let mut alloc = Allocation::zeros(agents, x.len());
        for (class, &d) in classes.iter().zip(&digits) {
            let comp = &comps[d];
            for &state in class {
                let xv = x.get(state);
                for (agent, &c) in comp.iter().enumerate() {
                    alloc.set(agent, state, c as f64 / r * xv);
                }
            }
        }
        points.push(alloc);
        // advance mixed-radix counter, last class fastest
        for d in digits.iter_mut().rev() {
            *d += 1;
            if *d < comps.len() {
                break;
            }
            *d = 0;
        }
    }

    let weights = match config.weights {
        GridWeights::Uniform => vec![1.0 / size as f64; size],
        GridWeights::Geometric => geometric_weights(size)?,
    };
    let metric = WeakStarMetric::standard(space.probs(), agents, &nonzero, config.metric_terms);
    let mut grid = MenuGrid {
        probs: space.probs().to_vec(),
        x: x.clone(),
        agents,
        resolution: config.resolution,
        scope: config.scope,
        weight_scheme: config.weights,
        classes,
        points,
        weights,
        metric,
        embedding: Vec::new(),
    };
    grid.rebuild_embedding();
    Ok(grid)
}

fn geometric_weights(size: usize) -> Result<Vec<f64>> {
    if size > 1000 {
        return Err(Error::Configuration(format!(
            "geometric weights underflow on {size} points; use uniform weights"
        )));
    }
    let mut w: Vec<f64> = (0..size).map(|k| 0.5f64.powi(k as i32 + 1)).collect();
    if let Some(last) = w.last_mut() {
        // remainder keeps the total at exactly one
        *last *= 2.0;
    }
    Ok(w)
}

impl MenuGrid {
    fn rebuild_embedding(&mut self) {
        let m = self.metric.terms().len();
        let mut emb = Vec::with_capacity(self.points.len() * m);
        for p in &self.points {
            emb.extend(self.metric.features(p));
        }
        self.embedding = emb;
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn scope(&self) -> ShareScope {
        self.scope
    }

    pub fn weight_scheme(&self) -> GridWeights {
        self.weight_scheme
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn aggregate(&self) -> &RandomVariable {
        &self.x
    }

    pub fn classes(&self) -> &[Vec<usize>] {
        &self.classes
    }

    pub fn points(&self) -> &[Allocation] {
        &self.points
    }

    pub fn point(&self, k: usize) -> &Allocation {
        &self.points[k]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn metric(&self) -> &WeakStarMetric {
        &self.metric
    }

    fn features(&self, k: usize) -> &[f64] {
        let m = self.metric.terms().len();
        &self.embedding[k * m..(k + 1) * m]
    }

    /// Metric distance between grid points `a` and `b`.
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        self.features(a)
            .iter()
            .zip(self.features(b))
            .map(|(x, y)| (x - y).abs())
            .sum()
    }

    /// Distance from grid point `k` to an arbitrary allocation.
    pub fn distance_to(&self, k: usize, other: &Allocation) -> f64 {
        self.features(k)
            .iter()
            .zip(self.metric.features(other))
            .map(|(x, y)| (x - y).abs())
            .sum()
    }

    /// Share vectors of point `k`, recovered from its payoffs.
    pub fn shares(&self, k: usize) -> ShareProfile {
        allocation_shares(&self.points[k], &self.x)
    }

    /// Upper bound on the metric diameter: sum over test functions of the
    /// spread of their weighted pairings.
    pub fn diameter_bound(&self) -> f64 {
        let m = self.metric.terms().len();
        (0..m)
            .map(|j| {
                let (lo, hi) =
                    (0..self.len()).fold((f64::INFINITY, f64::NEG_INFINITY), |acc, k| {
                        let v = self.features(k)[j];
                        (acc.0.min(v), acc.1.max(v))
                    });
                if self.is_empty() {
                    0.0
                } else {
                    hi - lo
                }
            })
            .sum()
    }

    /// Writes one CSV row per (point, state, agent).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["point", "state", "agent", "payoff", "weight"])
            .map_err(|e| Error::Io(e.to_string()))?;
        for (k, (p, weight)) in self.points.iter().zip(&self.weights).enumerate() {
            for state in 0..p.states() {
                for agent in 0..p.agents() {
                    w.write_record([
                        k.to_string(),
                        state.to_string(),
                        agent.to_string(),
                        p.get(agent, state).to_string(),
                        weight.to_string(),
                    ])
                    .map_err(|e| Error::Io(e.to_string()))?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Shares `xi_i(w) / X(w)` on nonzero states.
pub fn allocation_shares(alloc: &Allocation, x: &RandomVariable) -> ShareProfile {
    let shares = x
        .values()
        .iter()
        .enumerate()
        .map(|(state, &xv)| {
            (xv != 0.0).then(|| {
                (0..alloc.agents())
                    .map(|i| alloc.get(i, state) / xv)
                    .collect()
            })
        })
        .collect();
    ShareProfile { shares }
}

/// `sum_k w_k f_k` in index order.
pub fn integrate(grid: &MenuGrid, f: &[f64]) -> f64 {
    assert_eq!(f.len(), grid.len(), "integrand length must match grid size");
    // Neumaier compensated sum, fixed order
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for (w, v) in grid.weights().iter().zip(f) {
        let term = w * v;
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Grid point pairs used for empirical Lipschitz estimates.
///
/// Small grids use every unordered pair. Larger grids use index-adjacent
/// pairs (which are unit share moves in the last class) plus a seeded
/// random sample. Pairs at distance zero are dropped.
#[derive(Debug, Clone)]
pub struct PairProbe {
    pairs: Vec<(u32, u32)>,
    distances: Vec<f64>,
    exhaustive: bool,
    diameter: f64,
}

/// Grids up to this size are probed on all pairs.
pub const EXHAUSTIVE_PAIR_LIMIT: usize = 2_000;
/// Random pairs drawn for larger grids.
pub const SAMPLED_PAIRS: usize = 200_000;

impl PairProbe {
    pub fn new(grid: &MenuGrid, seed: u64) -> Self {
        Self::with_limits(grid, seed, EXHAUSTIVE_PAIR_LIMIT, SAMPLED_PAIRS)
    }

    pub fn with_limits(
        grid: &MenuGrid,
        seed: u64,
        exhaustive_limit: usize,
        samples: usize,
    ) -> Self {
        let k = grid.len();
        let mut pairs = Vec::new();
        let exhaustive = k <= exhaustive_limit;
        if exhaustive {
            for a in 0..k {
                for b in a + 1..k {
                    pairs.push((a as u32, b as u32));
                }
            }
        } else {
            for a in 0..k - 1 {
                pairs.push((a as u32, a as u32 + 1));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..samples {
                let a = rng.gen_range(0..k);
                let b = rng.gen_range(0..k);
                if a != b {
                    pairs.push((a.min(b) as u32, a.max(b) as u32));
                }
            }
        }
        let mut kept = Vec::with_capacity(pairs.len());
        let mut distances = Vec::with_capacity(pairs.len());
        for (a, b) in pairs {
            let d = grid.distance(a as usize, b as usize);
            if d > 0.0 {
                kept.push((a, b));
                distances.push(d);
            }
        }
        let diameter = if exhaustive {
            distances.iter().copied().fold(0.0, f64::max)
        } else {
            grid.diameter_bound()
        };
        Self {
            pairs: kept,
            distances,
            exhaustive,
            diameter,
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn is_exhaustive(&self) -> bool {
        self.exhaustive
    }

    /// Exact diameter for exhaustive probes, an upper bound otherwise.
    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.pairs
            .iter()
            .zip(&self.distances)
            .map(|(&(a, b), &d)| (a as usize, b as usize, d))
    }

    /// Largest ratio `|f(a) - f(b)| / d(a, b)` over the probe.
    pub fn lipschitz(&self, f: &[f64]) -> f64 {
        self.pairs()
            .map(|(a, b, d)| (f[a] - f[b]).abs() / d)
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rv(v: &[f64]) -> RandomVariable {
        RandomVariable::new(v.to_vec()).unwrap()
    }

    #[test]
    fn shares_map_to_payoffs() {
        let x = rv(&[-1.0]);
        let q = ShareProfile::new(vec![Some(vec![0.25, 0.75])]);
        let a = shares_to_allocation(&q, &x).unwrap();
        assert_eq!(a.rows(), vec![vec![-0.25], vec![-0.75]]);

        let q = ShareProfile::new(vec![Some(vec![1.0, 0.0, 0.0])]);
        let a = shares_to_allocation(&q, &rv(&[-3.0])).unwrap();
        assert_eq!(a.rows(), vec![vec![-3.0], vec![0.0], vec![0.0]]);
    }

    #[test]
    fn three_agent_share_arithmetic() {
        let l = 1.5;
        let x = rv(&[-2.0 * l]);
        let q = ShareProfile::new(vec![Some(vec![4.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0])]);
        let a = shares_to_allocation(&q, &x).unwrap();
        let expect = [-8.0 * l / 7.0, -4.0 * l / 7.0, -2.0 * l / 7.0];
        for (i, e) in expect.iter().enumerate() {
            assert!((a.get(i, 0) - e).abs() < 1e-15);
        }
        let col: f64 = (0..3).map(|i| a.get(i, 0)).sum();
        assert!((col + 2.0 * l).abs() < 1e-12);
    }

    #[test]
    fn simplex_violations_rejected() {
        let x = rv(&[-1.0]);
        let q = ShareProfile::new(vec![Some(vec![0.5, 0.6])]);
        assert!(matches!(
            shares_to_allocation(&q, &x),
            Err(Error::Validation(_))
        ));
        let q = ShareProfile::new(vec![Some(vec![1.5, -0.5])]);
        assert!(shares_to_allocation(&q, &x).is_err());
        let q = ShareProfile::new(vec![None]);
        assert!(shares_to_allocation(&q, &x).is_err());
    }

    #[test]
    fn validate_feasible_diagnostics() {
        let x = rv(&[3.0]);
        let ok = Allocation::from_rows(&[vec![2.0], vec![1.0]]).unwrap();
        assert!(validate_feasible(&ok, &x).passes());

        let bad = Allocation::from_rows(&[vec![4.0], vec![-1.0]]).unwrap();
        let r = validate_feasible(&bad, &x);
        assert_eq!(r.sign, vec![(1, 0)]);
        assert_eq!(r.bound, vec![(0, 0)]);
        assert!(r.sum.is_empty());

        let x = rv(&[3.0, 0.0]);
        let bad = Allocation::from_rows(&[vec![2.0, 1.0], vec![1.0, -1.0]]).unwrap();
        let r = validate_feasible(&bad, &x);
        assert_eq!(r.anchored_zero, vec![(0, 1), (1, 1)]);
        assert!(!r.passes());

        let short = Allocation::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        assert!(validate_feasible(&short, &x).shape);
    }

    #[test]
    fn comonotone_rules() {
        let levels = [0.0, -1.0, -2.0];
        assert!(is_anchored_comonotone(&SharingRule::proportional(
            &levels,
            &[0.3, 0.7]
        )));

        // positive payoff on a loss
        let bad = SharingRule {
            levels: vec![0.0, -1.0],
            values: vec![vec![0.0, 1.0], vec![0.0, -2.0]],
        };
        assert!(!is_anchored_comonotone(&bad));

        // tranche: f1 = max(x, -1), f2 = x - f1
        let f1: Vec<f64> = levels.iter().map(|&x: &f64| x.max(-1.0)).collect();
        let f2: Vec<f64> = levels.iter().zip(&f1).map(|(x, a)| x - a).collect();
        let tranche = SharingRule {
            levels: levels.to_vec(),
            values: vec![f1, f2],
        };
        assert!(is_anchored_comonotone(&tranche));
        let x = rv(&[0.0, -1.0, -2.0, -1.0]);
        let a = tranche.induced_allocation(&x).unwrap();
        assert!(validate_feasible(&a, &x).passes());
        assert_eq!(a.row(0), &[0.0, -1.0, -1.0, -1.0]);
        assert_eq!(a.row(1), &[0.0, 0.0, -1.0, 0.0]);
    }

    #[test]
    fn comonotone_without_zero_level_checks_sign() {
        // nondecreasing on {-2, -1} but positive at -1: not anchorable at 0
        let rule = SharingRule {
            levels: vec![-2.0, -1.0],
            values: vec![vec![-3.0, 0.5], vec![1.0, -1.5]],
        };
        assert!(!is_anchored_comonotone(&rule));
    }

    #[test]
    fn composition_counts() {
        assert_eq!(compositions(2, 2), vec![vec![0, 2], vec![1, 1], vec![2, 0]]);
        assert_eq!(compositions(2, 3).len(), 6);
        assert_eq!(composition_count(2, 3), 6);
        assert_eq!(composition_count(70, 3), 2556);
        for (r, n) in [(1, 2), (5, 3), (4, 4), (7, 2)] {
            assert_eq!(compositions(r, n).len() as u128, composition_count(r, n));
        }
    }

    fn one_state(x: f64, n: usize, r: u32) -> MenuGrid {
        let space = StateSpace::from_probs(vec![1.0]).unwrap();
        enumerate_grid(&space, &rv(&[x]), n, &GridConfig::new(r)).unwrap()
    }

    #[test]
    fn small_grids() {
        let g = one_state(-1.0, 2, 2);
        assert_eq!(g.len(), 3);
        assert!(g.weights().iter().all(|w| (w - 1.0 / 3.0).abs() < 1e-15));
        // lexicographic: agent 1 share 0, 1/2, 1
        assert_eq!(g.point(0).rows(), vec![vec![0.0], vec![-1.0]]);
        assert_eq!(g.point(1).rows(), vec![vec![-0.5], vec![-0.5]]);
        assert_eq!(g.point(2).rows(), vec![vec![-1.0], vec![0.0]]);

        assert_eq!(one_state(-1.0, 3, 2).len(), 6);

        let space = StateSpace::from_probs(vec![0.5, 0.5]).unwrap();
        let g = enumerate_grid(&space, &RandomVariable::zeros(2), 3, &GridConfig::new(4)).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.point(0), &Allocation::zeros(3, 2));
        assert_eq!(g.weights(), &[1.0]);
    }

    #[test]
    fn grid_budget_is_enforced() {
        let space = StateSpace::from_probs(vec![0.25; 4]).unwrap();
        let x = rv(&[-1.0, -2.0, 1.0, -1.0]);
        let mut cfg = GridConfig::new(10);
        cfg.budget = 1000;
        match enumerate_grid(&space, &x, 3, &cfg) {
            Err(Error::GridBudget { size, .. }) => assert_eq!(size, 66u128.pow(4)),
            other => panic!("expected budget error, got {other:?}"),
        }
        assert!(matches!(
            enumerate_grid(&space, &x, 3, &GridConfig::new(0)),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn scopes_change_grid_dimension() {
        let space = StateSpace::from_probs(vec![0.25; 4]).unwrap();
        let x = rv(&[-1.0, -2.0, 0.0, -1.0]);
        let per_state = enumerate_grid(&space, &x, 2, &GridConfig::new(2)).unwrap();
        assert_eq!(per_state.len(), 27);
        let per_level = enumerate_grid(
            &space,
            &x,
            2,
            &GridConfig::new(2).with_scope(ShareScope::PerLevel),
        )
        .unwrap();
        assert_eq!(per_level.len(), 9);
        assert_eq!(per_level.classes(), &[vec![0, 3], vec![1]]);
        let uniform = enumerate_grid(
            &space,
            &x,
            2,
            &GridConfig::new(2).with_scope(ShareScope::Uniform),
        )
        .unwrap();
        assert_eq!(uniform.len(), 3);
        for g in [&per_state, &per_level, &uniform] {
            for p in g.points() {
                assert!(validate_feasible(p, &x).passes());
            }
        }
    }

    #[test]
    fn geometric_weights_sum_to_one() {
        let space = StateSpace::from_probs(vec![1.0]).unwrap();
        let mut cfg = GridConfig::new(5);
        cfg.weights = GridWeights::Geometric;
        let g = enumerate_grid(&space, &rv(&[-1.0]), 2, &cfg).unwrap();
        let total: f64 = g.weights().iter().sum();
        assert_eq!(total, 1.0);
        assert!(g.weights().iter().all(|w| *w > 0.0));
    }

    #[test]
    fn integrate_cases() {
        let g = one_state(-1.0, 2, 2);
        assert!((integrate(&g, &[2.5; 3]) - 2.5).abs() < 1e-15);
        assert!((integrate(&g, &[1.0, 0.0, 0.0]) - g.weights()[0]).abs() < 1e-15);
        let u2: Vec<f64> = g.points().iter().map(|p| p.get(1, 0)).collect();
        assert_eq!(u2, vec![-1.0, -0.5, 0.0]);
        assert!((integrate(&g, &u2) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn metric_basics() {
        let space = StateSpace::from_probs(vec![0.3, 0.7]).unwrap();
        let x = rv(&[-1.0, -2.0]);
        let g = enumerate_grid(&space, &x, 2, &GridConfig::new(3)).unwrap();
        let m = g.metric();
        assert_eq!(m.terms().len(), 2 + 4);
        for k in 0..g.len() {
            assert_eq!(g.distance(k, k), 0.0);
            assert_eq!(m.distance(g.point(k), g.point(k)), 0.0);
        }
        // agent-mass bound
        for a in 0..g.len() {
            for b in 0..g.len() {
                let d = g.distance(a, b);
                assert!((d - m.distance(g.point(a), g.point(b))).abs() < 1e-15);
                for agent in 0..2 {
                    let gap = space.expectation(g.point(a).row(agent))
                        - space.expectation(g.point(b).row(agent));
                    assert!(gap.abs() <= m.mass_constant(agent) * d + 1e-15);
                }
            }
        }
    }

    #[test]
    fn swapped_rows_are_separated() {
        let space = StateSpace::from_probs(vec![0.5, 0.5]).unwrap();
        let x = rv(&[-1.0, -1.0]);
        let a = Allocation::from_rows(&[vec![-0.75, -0.25], vec![-0.25, -0.75]]).unwrap();
        let b = a.permute_agents(&[1, 0]);
        let m = WeakStarMetric::standard(space.probs(), 2, &[0, 1], None);
        // mass terms cancel (both agents expect -0.5); coordinates do not
        let expected = 0.5 * (0.5f64.powi(3) + 0.5f64.powi(4) + 0.5f64.powi(5) + 0.5f64.powi(6));
        assert!((m.distance(&a, &b) - expected).abs() < 1e-15);
        assert!(validate_feasible(&b, &x).passes());
    }

    #[test]
    fn metric_separates_grid_points() {
        let space = StateSpace::from_probs(vec![0.2, 0.3, 0.5]).unwrap();
        let x = rv(&[-1.0, 2.0, -3.0]);
        let g = enumerate_grid(&space, &x, 3, &GridConfig::new(3)).unwrap();
        for a in 0..g.len() {
            for b in a + 1..g.len() {
                assert!(g.distance(a, b) > 0.0, "points {a} and {b} not separated");
            }
        }
    }

    #[test]
    fn grid_csv_rows() {
        let g = one_state(-1.0, 2, 2);
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "point,state,agent,payoff,weight");
        assert_eq!(lines.len(), 1 + 3 * 2);
        assert!(lines[2].starts_with("0,0,1,-1,"));
    }

    #[test]
    fn probe_diameter_and_lipschitz() {
        let g = one_state(-1.0, 2, 4);
        let probe = PairProbe::new(&g, 1);
        assert!(probe.is_exhaustive());
        assert_eq!(probe.len(), 10);
        let f = vec![0.0; g.len()];
        assert_eq!(probe.lipschitz(&f), 0.0);
        assert!(probe.diameter() <= g.diameter_bound() + 1e-15);
        let sampled = PairProbe::with_limits(&g, 1, 2, 50);
        assert!(!sampled.is_exhaustive());
        assert!(sampled.diameter() >= probe.diameter() - 1e-15);
    }

    proptest! {
        #[test]
        fn simplex_shares_are_feasible(
            raw in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 3), 4),
            xs in proptest::collection::vec(-5.0f64..5.0, 4),
        ) {
            let x = rv(&xs);
            let shares = raw.iter().zip(&xs).map(|(r, &xv)| {
                let t: f64 = r.iter().sum::<f64>() + 1e-9;
                let mut q: Vec<f64> = r.iter().map(|v| (v + 1e-9 / 3.0) / t).collect();
                let head: f64 = q[..2].iter().sum();
                q[2] = (1.0 - head).max(0.0);
                (xv != 0.0).then_some(q)
            }).collect();
            let q = ShareProfile::new(shares);
            if xs.iter().any(|v| *v != 0.0) {
                let a = shares_to_allocation(&q, &x).unwrap();
                prop_assert!(validate_feasible(&a, &x).passes());
            }
        }

        #[test]
        fn metric_triangle_inequality(seed in 0u64..200) {
            let space = StateSpace::from_probs(vec![0.2, 0.3, 0.5]).unwrap();
            let x = rv(&[-1.0, 2.0, -3.0]);
            let g = enumerate_grid(&space, &x, 3, &GridConfig::new(2)).unwrap();
            let k = g.len() as u64;
            let (a, b, c) = ((seed % k) as usize, (seed * 7 % k) as usize, (seed * 13 % k) as usize);
            prop_assert!(g.distance(a, c) <= g.distance(a, b) + g.distance(b, c) + 1e-15);
            prop_assert!((g.distance(a, b) - g.distance(b, a)).abs() == 0.0);
        }
    }
}
