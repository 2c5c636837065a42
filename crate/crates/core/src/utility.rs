//! Monetary utilities: entropic certainty equivalents and their max-min
//! extension over a finite credal set.
//!
//! All evaluators are cash invariant, monotone, concave and normalized so
//! that a sure payoff `c` is worth exactly `c`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::menu::{integrate, Allocation, MenuGrid, PairProbe};
use crate::space::{check_probability_vector, PROB_SUM_TOL};

/// Entropic certainty equivalent `-(1/g) log E[exp(-g xi)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropicUtility {
    gamma: f64,
}

impl EntropicUtility {
    pub fn new(gamma: f64) -> Result<Self> {
        if !gamma.is_finite() || gamma <= 0.0 {
            return Err(Error::Validation(format!(
                "risk aversion must be > 0, got {gamma}"
            )));
        }
        Ok(Self { gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Value of `payoff` under probability `probs`.
    pub fn value(&self, payoff: &[f64], probs: &[f64]) -> f64 {
        entropic_value(self.gamma, payoff, probs)
    }
}

/// Log-sum-exp evaluation of the entropic certainty equivalent.
///
/// Constant payoffs short-circuit to their value, which makes `U(0) = 0`
/// and `U(c) = c` exact.
pub fn entropic_value(gamma: f64, payoff: &[f64], probs: &[f64]) -> f64 {
    if let Some(&first) = payoff.first() {
        if payoff.iter().all(|&v| v == first) {
            return first;
        }
    }
    let mut top = f64::NEG_INFINITY;
    for (&v, &p) in payoff.iter().zip(probs) {
        if p > 0.0 {
            top = top.max(-gamma * v);
        }
    }
    let mass: f64 = payoff
        .iter()
        .zip(probs)
        .filter(|(_, &p)| p > 0.0)
        .map(|(&v, &p)| p * (-gamma * v - top).exp())
        .sum();
    -(top + mass.ln()) / gamma
}

/// Finite set of priors; index 0 is always the reference probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CredalSet {
    priors: Vec<Vec<f64>>,
    /// Declared Lipschitz constant `L_i` for the agent's utility.
    lip_bound: Option<f64>,
}

impl CredalSet {
    /// Builds `{P} ∪ extra`; copies of `P` in `extra` are dropped.
    pub fn new(reference: &[f64], extra: Vec<Vec<f64>>, lip_bound: Option<f64>) -> Result<Self> {
        check_probability_vector(reference, "reference probability")?;
        let mut priors = vec![reference.to_vec()];
        for (k, prior) in extra.into_iter().enumerate() {
            if prior.len() != reference.len() {
                return Err(Error::Structure(format!(
                    "prior {k} has {} entries, space has {}",
                    prior.len(),
                    reference.len()
                )));
            }
            check_probability_vector(&prior, &format!("prior {k}"))?;
            let duplicate = priors.iter().any(|q| {
                q.iter()
                    .zip(&prior)
                    .all(|(a, b)| (a - b).abs() <= PROB_SUM_TOL)
            });
            if !duplicate {
                priors.push(prior);
            }
        }
        if let Some(l) = lip_bound {
            if !l.is_finite() || l <= 0.0 {
                return Err(Error::Validation(format!(
                    "Lipschitz bound must be > 0, got {l}"
                )));
            }
        }
        Ok(Self { priors, lip_bound })
    }

    pub fn singleton(reference: &[f64]) -> Result<Self> {
        Self::new(reference, Vec::new(), None)
    }

    pub fn priors(&self) -> &[Vec<f64>] {
        &self.priors
    }

    pub fn reference(&self) -> &[f64] {
        &self.priors[0]
    }

    pub fn lip_bound(&self) -> Option<f64> {
        self.lip_bound
    }

    pub fn len(&self) -> usize {
        self.priors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.priors.is_empty()
    }
}

/// Worst case of the entropic value over a credal set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxMinUtility {
    pub entropic: EntropicUtility,
    pub credal: CredalSet,
}

impl MaxMinUtility {
    pub fn new(gamma: f64, credal: CredalSet) -> Result<Self> {
        Ok(Self {
            entropic: EntropicUtility::new(gamma)?,
            credal,
        })
    }

    /// Index of a minimizing prior and the minimum; ties go to the lowest
    /// index.
    pub fn worst_case(&self, payoff: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (k, prior) in self.credal.priors().iter().enumerate() {
            let v = self.entropic.value(payoff, prior);
            if v < best.1 {
                best = (k, v);
            }
        }
        best
    }

    pub fn value(&self, payoff: &[f64]) -> f64 {
        self.worst_case(payoff).1
    }
}

/// One agent's monetary utility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Utility {
    Entropic(EntropicUtility),
    MaxMin(MaxMinUtility),
    /// Expected value under the reference probability (the `gamma -> 0`
    /// limit of the entropic utility).
    Neutral,
}

impl Utility {
    pub fn entropic(gamma: f64) -> Result<Self> {
        Ok(Utility::Entropic(EntropicUtility::new(gamma)?))
    }

    /// Value of `payoff`; `reference` is used by the single-prior kinds.
    pub fn value(&self, payoff: &[f64], reference: &[f64]) -> f64 {
        match self {
            Utility::Entropic(u) => u.value(payoff, reference),
            Utility::MaxMin(u) => u.value(payoff),
            Utility::Neutral => {
                if let Some(&first) = payoff.first() {
                    if payoff.iter().all(|&v| v == first) {
                        return first;
                    }
                }
                payoff.iter().zip(reference).map(|(v, p)| v * p).sum()
            }
        }
    }

    /// Value under the reference probability alone, ignoring any other
    /// priors.
    pub fn reference_value(&self, payoff: &[f64], reference: &[f64]) -> f64 {
        match self {
            Utility::MaxMin(u) => u.entropic.value(payoff, reference),
            other => other.value(payoff, reference),
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match self {
            Utility::Entropic(u) => Some(u.gamma()),
            Utility::MaxMin(u) => Some(u.entropic.gamma()),
            Utility::Neutral => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Utility::Entropic(_) => "entropic",
            Utility::MaxMin(_) => "maxmin",
            Utility::Neutral => "neutral",
        }
    }
}

/// Utilities of all agents over a common reference probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityProfile {
    probs: Vec<f64>,
    utilities: Vec<Utility>,
}

impl UtilityProfile {
    pub fn new(probs: Vec<f64>, utilities: Vec<Utility>) -> Result<Self> {
        check_probability_vector(&probs, "reference probability")?;
        if utilities.len() < 2 {
            return Err(Error::Validation("need at least 2 agents".into()));
        }
        for (i, u) in utilities.iter().enumerate() {
            if let Utility::MaxMin(m) = u {
                let p = m.credal.reference();
                if p.len() != probs.len()
                    || p.iter()
                        .zip(&probs)
                        .any(|(a, b)| (a - b).abs() > PROB_SUM_TOL)
                {
                    return Err(Error::Validation(format!(
                        "agent {i}: credal set does not contain the reference probability"
                    )));
                }
            }
        }
        Ok(Self { probs, utilities })
    }

    pub fn entropic(probs: Vec<f64>, gammas: &[f64]) -> Result<Self> {
        let utilities = gammas
            .iter()
            .map(|&g| Utility::entropic(g))
            .collect::<Result<_>>()?;
        Self::new(probs, utilities)
    }

    pub fn agents(&self) -> usize {
        self.utilities.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn utilities(&self) -> &[Utility] {
        &self.utilities
    }

    pub fn utility(&self, agent: usize) -> &Utility {
        &self.utilities[agent]
    }

    /// `U_agent(xi_agent)`.
    pub fn evaluate(&self, xi: &Allocation, agent: usize) -> Result<f64> {
        if agent >= self.agents() || xi.agents() != self.agents() {
            return Err(Error::Structure(format!(
                "agent {agent} of a {}-agent allocation, profile has {}",
                xi.agents(),
                self.agents()
            )));
        }
        if xi.states() != self.probs.len() {
            return Err(Error::Structure("allocation/state count mismatch".into()));
        }
        let row = xi.row(agent);
        if row.iter().any(|v| v.is_nan()) {
            return Err(Error::NonFinite(format!("NaN payoff for agent {agent}")));
        }
        Ok(self.utilities[agent].value(row, &self.probs))
    }

    fn value(&self, xi: &Allocation, agent: usize) -> f64 {
        self.utilities[agent].value(xi.row(agent), &self.probs)
    }

    /// Utility of every agent at every grid point.
    pub fn tabulate(&self, grid: &MenuGrid) -> UtilityTable {
        self.tabulate_with(grid, |u, row| u.value(row, &self.probs))
    }

    /// Values under the reference probability only (`Avg_i` rather than
    /// the worst-case average).
    pub fn tabulate_reference(&self, grid: &MenuGrid) -> UtilityTable {
        self.tabulate_with(grid, |u, row| u.reference_value(row, &self.probs))
    }

    fn tabulate_with<F>(&self, grid: &MenuGrid, f: F) -> UtilityTable
    where
        F: Fn(&Utility, &[f64]) -> f64 + Sync,
    {
        let rows = self
            .utilities
            .iter()
            .enumerate()
            .map(|(i, u)| grid.points().par_iter().map(|p| f(u, p.row(i))).collect())
            .collect();
        UtilityTable::from_rows(rows)
    }

    pub fn sum(&self, xi: &Allocation) -> f64 {
        (0..self.agents()).map(|i| self.value(xi, i)).sum()
    }
}

/// Index of a worst-case prior for `agent` at `xi`; single-prior agents
/// always return 0.
pub fn worst_case_prior(profile: &UtilityProfile, xi: &Allocation, agent: usize) -> usize {
    match profile.utility(agent) {
        Utility::MaxMin(u) => u.worst_case(xi.row(agent)).0,
        _ => 0,
    }
}

/// `|U(xi + c) - U(xi) - c|` for one agent.
pub fn check_cash_invariance(
    profile: &UtilityProfile,
    xi: &Allocation,
    agent: usize,
    c: f64,
) -> f64 {
    let row = xi.row(agent);
    let shifted: Vec<f64> = row.iter().map(|v| v + c).collect();
    let u = profile.utility(agent);
    (u.value(&shifted, profile.probs()) - u.value(row, profile.probs()) - c).abs()
}

/// Empirical Lipschitz constant of `agent`'s utility on the grid metric.
pub fn estimate_lipschitz(table: &UtilityTable, agent: usize, probe: &PairProbe) -> f64 {
    probe.lipschitz(table.row(agent))
}

/// `integral of U_agent d mu` over the grid.
pub fn avg_utility(table: &UtilityTable, grid: &MenuGrid, agent: usize) -> f64 {
    integrate(grid, table.row(agent))
}

/// Utility values, one row per agent and one column per grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityTable {
    rows: Vec<Vec<f64>>,
}

impl UtilityTable {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        Self { rows }
    }

    pub fn agents(&self) -> usize {
        self.rows.len()
    }

    pub fn points(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn row(&self, agent: usize) -> &[f64] {
        &self.rows[agent]
    }

    pub fn get(&self, agent: usize, point: usize) -> f64 {
        self.rows[agent][point]
    }

    /// `sum_{j in agents} U_j` per point.
    pub fn sum_over(&self, agents: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; self.points()];
        for &j in agents {
            for (o, v) in out.iter_mut().zip(&self.rows[j]) {
                *o += v;
            }
        }
        out
    }

    /// Total utility per point.
    pub fn total(&self) -> Vec<f64> {
        self.sum_over(&(0..self.agents()).collect::<Vec<_>>())
    }
}

/// Results of the regularity checks over a grid.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub cash_residual: f64,
    pub monotonicity_violations: usize,
    pub monotone_pairs: usize,
    /// Largest `t U(a) + (1-t) U(b) - U(t a + (1-t) b)` seen.
    pub concavity_gap: f64,
    /// Largest `|U(a) - U(b)| - ||a_i - b_i||_inf` seen.
    pub sup_lipschitz_excess: f64,
    /// Points where a max-min value exceeds its reference-prior value.
    pub dominance_violations: usize,
}

pub const CASH_SWEEP: [f64; 5] = [-10.0, -1.0, 0.0, 1.0, 10.0];
pub const CASH_TOL: f64 = 1e-9;
pub const MONOTONE_TOL: f64 = 1e-12;
pub const CONCAVITY_TOL: f64 = 1e-9;
pub const SUP_LIPSCHITZ_TOL: f64 = 1e-9;

impl RegularityReport {
    pub fn passes(&self) -> bool {
        self.cash_residual <= CASH_TOL
            && self.monotonicity_violations == 0
            && self.concavity_gap <= CONCAVITY_TOL
            && self.sup_lipschitz_excess <= SUP_LIPSCHITZ_TOL
            && self.dominance_violations == 0
    }
}

/// Cash invariance on every point, and monotonicity, concavity and sup-norm
/// Lipschitz checks on up to `max_pairs` probe pairs.
pub fn regularity_checks(
    profile: &UtilityProfile,
    grid: &MenuGrid,
    probe: &PairProbe,
    max_pairs: usize,
) -> RegularityReport {
    let mut rep = RegularityReport::default();
    for p in grid.points() {
        for agent in 0..profile.agents() {
            for c in CASH_SWEEP {
                rep.cash_residual = rep
                    .cash_residual
                    .max(check_cash_invariance(profile, p, agent, c));
            }
            let u = profile.utility(agent);
            if u.value(p.row(agent), profile.probs())
                > u.reference_value(p.row(agent), profile.probs())
            {
                rep.dominance_violations += 1;
            }
        }
    }
    let probs = profile.probs();
    for (a, b, _) in probe.pairs().take(max_pairs) {
        let (pa, pb) = (grid.point(a), grid.point(b));
        for agent in 0..profile.agents() {
            let u = profile.utility(agent);
            let (ra, rb) = (pa.row(agent), pb.row(agent));
            let (ua, ub) = (u.value(ra, probs), u.value(rb, probs));
            let sup = ra
                .iter()
                .zip(rb)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            rep.sup_lipschitz_excess = rep.sup_lipschitz_excess.max((ua - ub).abs() - sup);
            if ra.iter().zip(rb).all(|(x, y)| x <= y) {
                rep.monotone_pairs += 1;
                if ua > ub + MONOTONE_TOL {
                    rep.monotonicity_violations += 1;
                }
            }
            if rb.iter().zip(ra).all(|(x, y)| x <= y) {
                rep.monotone_pairs += 1;
                if ub > ua + MONOTONE_TOL {
                    rep.monotonicity_violations += 1;
                }
            }
            for t in [0.25, 0.5, 0.75] {
                let mixed: Vec<f64> = ra
                    .iter()
                    .zip(rb)
                    .map(|(x, y)| t * x + (1.0 - t) * y)
                    .collect();
                let gap = t * ua + (1.0 - t) * ub - u.value(&mixed, probs);
                rep.concavity_gap = rep.concavity_gap.max(gap);
            }
        }
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::menu::{enumerate_grid, GridConfig};
    use crate::space::{RandomVariable, StateSpace};
    use proptest::prelude::*;

    const HALF: [f64; 2] = [0.5, 0.5];

    fn maxmin(gamma: f64, probs: &[f64], extra: Vec<Vec<f64>>) -> Utility {
        Utility::MaxMin(
            MaxMinUtility::new(gamma, CredalSet::new(probs, extra, None).unwrap()).unwrap(),
        )
    }

    #[test]
    fn constants_are_worth_themselves() {
        for u in [
            Utility::entropic(2.0).unwrap(),
            maxmin(1.0, &HALF, vec![vec![0.9, 0.1]]),
            Utility::Neutral,
        ] {
            assert_eq!(u.value(&[3.25, 3.25], &HALF), 3.25);
            assert_eq!(u.value(&[0.0, 0.0], &HALF), 0.0);
        }
    }

    #[test]
    fn small_gamma_tends_to_expectation() {
        let v = entropic_value(1e-6, &[0.0, -1.0], &HALF);
        assert!((v + 0.5).abs() < 1e-4);
    }

    #[test]
    fn entropic_unit_gamma_closed_form() {
        // -(1/1) log(0.5 (1 + e)); frozen value from a 30-digit evaluation
        let oracle = -(0.5 * (1.0 + 1f64.exp())).ln();
        assert!((entropic_value(1.0, &[0.0, -1.0], &HALF) - oracle).abs() < 1e-15);
        assert!((oracle - (-0.620_114_506_958_277_5)).abs() < 1e-15);
    }

    #[test]
    fn large_exponents_stay_finite() {
        let v = entropic_value(50.0, &[-20.0, 0.0], &HALF);
        assert!(v.is_finite());
        // dominated by the loss state: -20 + ln(2)/50 up to negligible terms
        assert!((v - (-20.0 + 2f64.ln() / 50.0)).abs() < 1e-12);
    }

    #[test]
    fn nan_rejected() {
        let prof = UtilityProfile::entropic(HALF.to_vec(), &[1.0, 1.0]).unwrap();
        let xi = Allocation::new(2, 2, vec![f64::NAN, 0.0, 0.0, 0.0]);
        assert!(xi.is_err());
        let xi = Allocation::zeros(2, 2);
        assert_eq!(prof.evaluate(&xi, 1).unwrap(), 0.0);
        assert!(prof.evaluate(&xi, 2).is_err());
    }

    #[test]
    fn worst_case_prior_cases() {
        let probs = [0.5, 0.5];
        let prof = UtilityProfile::new(
            probs.to_vec(),
            vec![
                maxmin(1.0, &probs, vec![vec![0.2, 0.8]]),
                Utility::entropic(1.0).unwrap(),
            ],
        )
        .unwrap();
        let xi = Allocation::from_rows(&[vec![0.0, -1.0], vec![0.0, 0.0]]).unwrap();
        // prior 1 loads the loss state more heavily
        assert_eq!(worst_case_prior(&prof, &xi, 0), 1);
        let (a, b) = (
            entropic_value(1.0, &[0.0, -1.0], &[0.5, 0.5]),
            entropic_value(1.0, &[0.0, -1.0], &[0.2, 0.8]),
        );
        assert!(b < a);
        assert_eq!(prof.evaluate(&xi, 0).unwrap(), b);

        let sure = Allocation::from_rows(&[vec![-1.0, -1.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(worst_case_prior(&prof, &sure, 0), 0);
        assert_eq!(worst_case_prior(&prof, &xi, 1), 0);

        let single = UtilityProfile::new(
            probs.to_vec(),
            vec![maxmin(1.0, &probs, vec![]), Utility::Neutral],
        )
        .unwrap();
        assert_eq!(worst_case_prior(&single, &xi, 0), 0);
    }

    #[test]
    fn credal_set_validation() {
        assert!(CredalSet::new(&HALF, vec![vec![0.5, 0.4]], None).is_err());
        assert!(CredalSet::new(&HALF, vec![vec![1.0, 0.0]], None).is_err());
        assert!(CredalSet::new(&HALF, vec![vec![1.0]], None).is_err());
        let c = CredalSet::new(&HALF, vec![vec![0.5, 0.5], vec![0.3, 0.7]], Some(2.0)).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.reference(), &HALF);
    }

    #[test]
    fn cash_invariance_residuals() {
        let probs = [0.2, 0.3, 0.5];
        let prof = UtilityProfile::new(
            probs.to_vec(),
            vec![
                Utility::entropic(1.7).unwrap(),
                maxmin(0.8, &probs, vec![vec![0.6, 0.3, 0.1], vec![0.1, 0.1, 0.8]]),
            ],
        )
        .unwrap();
        let xi = Allocation::from_rows(&[vec![-1.0, -0.3, 0.0], vec![-2.0, -0.7, 0.0]]).unwrap();
        assert_eq!(check_cash_invariance(&prof, &xi, 0, 0.0), 0.0);
        assert!(check_cash_invariance(&prof, &xi, 0, 5.0) <= 1e-9);
        assert!(check_cash_invariance(&prof, &xi, 1, -2.0) <= 1e-9);
    }

    fn two_state_grid() -> (StateSpace, MenuGrid) {
        let space = StateSpace::from_probs(vec![0.4, 0.6]).unwrap();
        let x = RandomVariable::new(vec![-2.0, -1.0]).unwrap();
        let g = enumerate_grid(&space, &x, 2, &GridConfig::new(6)).unwrap();
        (space, g)
    }

    #[test]
    fn lipschitz_of_constant_and_neutral() {
        let (space, g) = two_state_grid();
        let probe = PairProbe::new(&g, 0);
        let constant = UtilityTable::from_rows(vec![vec![1.0; g.len()], vec![1.0; g.len()]]);
        assert_eq!(estimate_lipschitz(&constant, 0, &probe), 0.0);

        let prof = UtilityProfile::new(
            space.probs().to_vec(),
            vec![Utility::Neutral, Utility::Neutral],
        )
        .unwrap();
        let table = prof.tabulate(&g);
        let again = prof.tabulate(&g);
        let probe2 = PairProbe::new(&g, 0);
        for agent in 0..2 {
            let est = estimate_lipschitz(&table, agent, &probe);
            assert_eq!(est, estimate_lipschitz(&again, agent, &probe2));
            // expectation is controlled by the agent-mass term
            assert!(est <= g.metric().mass_constant(agent) + 1e-12);
        }
    }

    #[test]
    fn averages() {
        let (space, g) = two_state_grid();
        let probs = space.probs().to_vec();
        let prof = UtilityProfile::new(
            probs.clone(),
            vec![
                maxmin(1.0, &probs, vec![vec![0.7, 0.3]]),
                Utility::entropic(1.0).unwrap(),
            ],
        )
        .unwrap();
        let worst = prof.tabulate(&g);
        let reference = prof.tabulate_reference(&g);
        assert!(avg_utility(&worst, &g, 0) <= avg_utility(&reference, &g, 0));
        assert_eq!(avg_utility(&worst, &g, 1), avg_utility(&reference, &g, 1));

        let constant = UtilityTable::from_rows(vec![vec![-0.25; g.len()]; 2]);
        assert!((avg_utility(&constant, &g, 1) + 0.25).abs() < 1e-15);
    }

    #[test]
    fn regularity_on_grid() {
        let space = StateSpace::from_probs(vec![0.2, 0.3, 0.5]).unwrap();
        let x = RandomVariable::new(vec![-2.0, 1.0, -1.0]).unwrap();
        let g = enumerate_grid(&space, &x, 2, &GridConfig::new(4)).unwrap();
        let probs = space.probs().to_vec();
        let prof = UtilityProfile::new(
            probs.clone(),
            vec![
                maxmin(2.0, &probs, vec![vec![0.5, 0.25, 0.25]]),
                Utility::entropic(0.5).unwrap(),
            ],
        )
        .unwrap();
        let probe = PairProbe::new(&g, 3);
        let rep = regularity_checks(&prof, &g, &probe, usize::MAX);
        assert!(rep.passes(), "{rep:?}");
        assert!(rep.monotone_pairs > 0);
    }

    proptest! {
        #[test]
        fn monotone_and_cash_invariant(
            a in proptest::collection::vec(-5.0f64..5.0, 3),
            bump in proptest::collection::vec(0.0f64..2.0, 3),
            gamma in 0.05f64..5.0,
            c in -10.0f64..10.0,
        ) {
            let probs = [0.2, 0.3, 0.5];
            let u = maxmin(gamma, &probs, vec![vec![0.1, 0.1, 0.8]]);
            let b: Vec<f64> = a.iter().zip(&bump).map(|(x, d)| x + d).collect();
            prop_assert!(u.value(&a, &probs) <= u.value(&b, &probs) + 1e-12);
            let shifted: Vec<f64> = a.iter().map(|v| v + c).collect();
            prop_assert!((u.value(&shifted, &probs) - u.value(&a, &probs) - c).abs() <= 1e-9);
        }
    }
}
