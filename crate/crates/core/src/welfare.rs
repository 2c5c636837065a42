//! Welfare maximization over the menu.
//!
//! The optimizer scans the grid exhaustively and can then refine the grid
//! winner by coordinate ascent over per-state shares. For entropic agents
//! sharing one prior the optimum is proportional, `xi_i = w_i X` with
//! `w_i ∝ 1/gamma_i`, which gives an independent benchmark.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::menu::{
    allocation_shares, shares_to_allocation, validate_feasible, Allocation, MenuGrid, ShareProfile,
};
use crate::space::RandomVariable;
use crate::utility::{entropic_value, Utility, UtilityProfile, UtilityTable};

/// Slack separating strict improvements from float noise in dominance scans.
pub const PARETO_SLACK: f64 = 1e-12;
/// Tolerance for "attains the grid maximum".
pub const WELFARE_TOL: f64 = 1e-9;
/// Refinement stops once a full sweep gains less than this.
pub const REFINE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WelfareMethod {
    Grid,
    ClosedForm,
    Refined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelfareResult {
    /// Grid index of the maximizer, when it is a grid point.
    pub point: Option<usize>,
    pub allocation: Allocation,
    pub value: f64,
    pub per_agent_values: Vec<f64>,
    pub method: WelfareMethod,
}

/// `W_from(xi) = sum_{j >= from} U_j(xi_j)` (agents indexed from 0).
pub fn welfare(profile: &UtilityProfile, xi: &Allocation, from: usize) -> Result<f64> {
    if from >= profile.agents() {
        return Err(Error::Parameter(format!(
            "welfare tail starts at agent {from} of {}",
            profile.agents()
        )));
    }
    (from..profile.agents())
        .map(|j| profile.evaluate(xi, j))
        .sum()
}

/// Lowest index attaining the maximum of `values`.
pub fn argmax_lowest(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((k, v)),
        }
    }
    best.map(|(k, _)| k)
}

/// Exhaustive grid argmax of `W_from`, ties to the lowest index.
pub fn grid_argmax(table: &UtilityTable, from: usize) -> (usize, f64) {
    let tail: Vec<usize> = (from..table.agents()).collect();
    let w = table.sum_over(&tail);
    let k = argmax_lowest(&w).expect("grid is nonempty");
    (k, w[k])
}

/// Maximizes `W_from` over the grid, optionally refining the winner off
/// the grid.
pub fn maximize_welfare(
    profile: &UtilityProfile,
    grid: &MenuGrid,
    table: &UtilityTable,
    from: usize,
    refine: bool,
) -> Result<WelfareResult> {
    if grid.is_empty() {
        return Err(Error::Validation("empty grid".into()));
    }
    let (k, _) = grid_argmax(table, from);
    let allocation = grid.point(k).clone();
    let per_agent_values: Vec<f64> = (0..profile.agents()).map(|i| table.get(i, k)).collect();
    let value = per_agent_values[from..].iter().sum();
    let grid_result = WelfareResult {
        point: Some(k),
        allocation,
        value,
        per_agent_values,
        method: WelfareMethod::Grid,
    };
    if !refine {
        return Ok(grid_result);
    }
    let refined = refine_allocation(profile, grid.aggregate(), &grid_result.allocation, from)?;
    let per_agent_values = (0..profile.agents())
        .map(|i| profile.evaluate(&refined, i))
        .collect::<Result<Vec<_>>>()?;
    let value: f64 = per_agent_values[from..].iter().sum();
    if value < grid_result.value || !validate_feasible(&refined, grid.aggregate()).passes() {
        return Ok(grid_result);
    }
    Ok(WelfareResult {
        point: None,
        allocation: refined,
        value,
        per_agent_values,
        method: WelfareMethod::Refined,
    })
}

/// Pairwise share transfers within each nonzero state, each solved by a
/// golden-section line search, until a sweep gains less than
/// [`REFINE_TOL`].
pub fn refine_allocation(
    profile: &UtilityProfile,
    x: &RandomVariable,
    start: &Allocation,
    from: usize,
) -> Result<Allocation> {
    let n = profile.agents();
    let states = x.len();
    let nonzero: Vec<usize> = (0..states).filter(|&s| x.get(s) != 0.0).collect();
    let start_shares = allocation_shares(start, x);
    let mut q: Vec<Vec<f64>> = (0..states)
        .map(|s| {
            start_shares.state(s).map_or_else(
                || vec![0.0; n],
                |v| {
                    let clipped: Vec<f64> = v.iter().map(|s| s.clamp(0.0, 1.0)).collect();
                    let t: f64 = clipped.iter().sum();
                    clipped.iter().map(|c| c / t).collect()
                },
            )
        })
        .collect();
    let mut rows: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..states).map(|s| q[s][i] * x.get(s)).collect())
        .collect();
    let probs = profile.probs();
    let weight = |i: usize| if i >= from { 1.0 } else { 0.0 };
    let value_of = |i: usize, row: &[f64]| profile.utility(i).value(row, probs);

    for _sweep in 0..500 {
        let mut gained = 0.0;
        for &s in &nonzero {
            let xs = x.get(s);
            for i in 0..n {
                for j in i + 1..n {
                    if weight(i) == 0.0 && weight(j) == 0.0 {
                        continue;
                    }
                    let (qi, qj) = (q[s][i], q[s][j]);
                    let objective = |t: f64, ri: &mut Vec<f64>, rj: &mut Vec<f64>| {
                        ri[s] = (qi - t) * xs;
                        rj[s] = (qj + t) * xs;
                        weight(i) * value_of(i, ri) + weight(j) * value_of(j, rj)
                    };
                    let mut ri = rows[i].clone();
                    let mut rj = rows[j].clone();
                    let base = objective(0.0, &mut ri, &mut rj);
                    let t = golden_max(-qj, qi, |t| objective(t, &mut ri, &mut rj));
                    let best = objective(t, &mut ri, &mut rj);
                    if best > base {
                        gained += best - base;
                        q[s][i] = (qi - t).max(0.0);
                        q[s][j] = 1.0
                            - q[s][i]
                            - (0..n)
                                .filter(|&k| k != i && k != j)
                                .map(|k| q[s][k])
                                .sum::<f64>();
                        q[s][j] = q[s][j].max(0.0);
                        rows[i][s] = q[s][i] * xs;
                        rows[j][s] = q[s][j] * xs;
                    }
                }
            }
        }
        if gained < REFINE_TOL {
            break;
        }
    }
    let profile_shares = ShareProfile::new(
        (0..states)
            .map(|s| (x.get(s) != 0.0).then(|| q[s].clone()))
            .collect(),
    );
    if nonzero.is_empty() {
        return Ok(Allocation::zeros(n, states));
    }
    shares_to_allocation(&profile_shares, x)
}

fn golden_max<F: FnMut(f64) -> f64>(lo: f64, hi: f64, mut f: F) -> f64 {
    if hi - lo <= 0.0 {
        return lo;
    }
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() < 1e-13 {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    // endpoints matter when the optimum is a vertex
    let mid = 0.5 * (a + b);
    [lo, hi, mid]
        .into_iter()
        .map(|t| (t, f(t)))
        .fold((mid, f64::NEG_INFINITY), |acc, (t, v)| {
            if v > acc.1 {
                (t, v)
            } else {
                acc
            }
        })
        .0
}

/// Proportional optimum of an entropic single-prior profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormSolution {
    pub weights: Vec<f64>,
    /// Common tilt parameter `(sum_j 1/gamma_j)^-1`.
    pub lambda: f64,
    /// `dQ*/dP` per state.
    pub tilt_density: Vec<f64>,
    /// Tilted probability `Q*` per state.
    pub tilted_probs: Vec<f64>,
    /// `max_i |gamma_i w_i - lambda|`.
    pub tilt_gap: f64,
    pub result: WelfareResult,
}

/// `w_i = (1/gamma_i) / sum_j (1/gamma_j)`, `xi_i = w_i X`, value
/// `-(1/lambda) log E[exp(-lambda X)]`.
pub fn closed_form_entropic(
    gammas: &[f64],
    x: &RandomVariable,
    probs: &[f64],
) -> Result<ClosedFormSolution> {
    if gammas.len() < 2 {
        return Err(Error::Validation("need at least 2 agents".into()));
    }
    if let Some(g) = gammas.iter().find(|g| !g.is_finite() || **g <= 0.0) {
        return Err(Error::Validation(format!(
            "risk aversion must be > 0, got {g}"
        )));
    }
    if x.len() != probs.len() {
        return Err(Error::Structure("X and P lengths differ".into()));
    }
    let tolerance: f64 = gammas.iter().map(|g| 1.0 / g).sum();
    let lambda = 1.0 / tolerance;
    let weights: Vec<f64> = gammas.iter().map(|g| (1.0 / g) / tolerance).collect();
    let tilt_gap = gammas
        .iter()
        .zip(&weights)
        .map(|(g, w)| (g * w - lambda).abs())
        .fold(0.0, f64::max);

    let n = gammas.len();
    let mut alloc = Allocation::zeros(n, x.len());
    for (i, w) in weights.iter().enumerate() {
        for s in 0..x.len() {
            alloc.set(i, s, w * x.get(s));
        }
    }
    let per_agent_values: Vec<f64> = (0..n)
        .map(|i| entropic_value(gammas[i], alloc.row(i), probs))
        .collect();
    let value = entropic_value(lambda, x.values(), probs);

    let exps: Vec<f64> = x.values().iter().map(|v| (-lambda * v).exp()).collect();
    let norm: f64 = exps.iter().zip(probs).map(|(e, p)| e * p).sum();
    let tilt_density: Vec<f64> = exps.iter().map(|e| e / norm).collect();
    let tilted_probs = tilt_density.iter().zip(probs).map(|(d, p)| d * p).collect();

    Ok(ClosedFormSolution {
        weights,
        lambda,
        tilt_density,
        tilted_probs,
        tilt_gap,
        result: WelfareResult {
            point: None,
            allocation: alloc,
            value,
            per_agent_values,
            method: WelfareMethod::ClosedForm,
        },
    })
}

/// Closed form for a profile; fails unless every agent is entropic under
/// the reference prior alone.
pub fn closed_form_for_profile(
    profile: &UtilityProfile,
    x: &RandomVariable,
) -> Result<ClosedFormSolution> {
    let gammas = profile
        .utilities()
        .iter()
        .enumerate()
        .map(|(i, u)| match u {
            Utility::Entropic(e) => Ok(e.gamma()),
            Utility::MaxMin(m) if m.credal.len() == 1 => Ok(m.entropic.gamma()),
            other => Err(Error::UnsupportedProfile(format!(
                "agent {i} is {}; closed form needs single-prior entropic agents",
                other.kind()
            ))),
        })
        .collect::<Result<Vec<_>>>()?;
    closed_form_entropic(&gammas, x, profile.probs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoReport {
    /// Grid point weakly better for all and strictly better for one.
    pub dominated_by: Option<usize>,
    /// `W_max - sum_i U_i(xi)` over the grid.
    pub welfare_gap: f64,
    pub attains_max: bool,
}

impl ParetoReport {
    pub fn optimal(&self) -> bool {
        self.dominated_by.is_none()
    }
}

/// Brute-force dominance scan of `values` (one utility per agent) against
/// every grid point, plus the welfare comparison with the grid maximum.
pub fn pareto_check(table: &UtilityTable, values: &[f64]) -> ParetoReport {
    let n = table.agents();
    let dominated_by = (0..table.points()).find(|&k| {
        let weakly = (0..n).all(|i| table.get(i, k) >= values[i] - PARETO_SLACK);
        weakly && (0..n).any(|i| table.get(i, k) > values[i] + PARETO_SLACK)
    });
    let (_, w_max) = grid_argmax(table, 0);
    let total: f64 = values.iter().sum();
    let welfare_gap = w_max - total;
    ParetoReport {
        dominated_by,
        welfare_gap,
        attains_max: welfare_gap <= WELFARE_TOL,
    }
}

/// Pareto check of an allocation that may lie off the grid.
pub fn pareto_check_allocation(
    profile: &UtilityProfile,
    table: &UtilityTable,
    xi: &Allocation,
) -> Result<ParetoReport> {
    let values = (0..profile.agents())
        .map(|i| profile.evaluate(xi, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(pareto_check(table, &values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::menu::{enumerate_grid, GridConfig, ShareScope};
    use crate::space::StateSpace;

    #[test]
    fn welfare_tails() {
        let prof = UtilityProfile::entropic(vec![0.5, 0.5], &[1.0, 2.0, 3.0]).unwrap();
        let xi =
            Allocation::from_rows(&[vec![-1.0, 0.0], vec![-0.5, 0.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(welfare(&prof, &xi, 2).unwrap(), 0.0);
        let u1 = prof.evaluate(&xi, 1).unwrap();
        assert_eq!(welfare(&prof, &xi, 1).unwrap(), u1);
        assert_eq!(welfare(&prof, &Allocation::zeros(3, 2), 0).unwrap(), 0.0);
        assert!(welfare(&prof, &xi, 3).is_err());
    }

    #[test]
    fn single_point_grid() {
        let space = StateSpace::from_probs(vec![0.5, 0.5]).unwrap();
        let x = RandomVariable::zeros(2);
        let g = enumerate_grid(&space, &x, 2, &GridConfig::new(3)).unwrap();
        let prof = UtilityProfile::entropic(space.probs().to_vec(), &[1.0, 2.0]).unwrap();
        let t = prof.tabulate(&g);
        let r = maximize_welfare(&prof, &g, &t, 0, true).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(pareto_check(&t, &[0.0, 0.0]).optimal());
    }

    #[test]
    fn risk_neutral_agent_takes_the_loss() {
        let space = StateSpace::from_probs(vec![0.5, 0.5]).unwrap();
        let x = RandomVariable::new(vec![0.0, -1.0]).unwrap();
        let g = enumerate_grid(&space, &x, 2, &GridConfig::new(2)).unwrap();
        let prof = UtilityProfile::new(
            space.probs().to_vec(),
            vec![Utility::entropic(2.0).unwrap(), Utility::Neutral],
        )
        .unwrap();
        let t = prof.tabulate(&g);
        // brute force over the three points
        let totals: Vec<f64> = (0..3).map(|k| t.get(0, k) + t.get(1, k)).collect();
        assert!(totals[0] > totals[1] && totals[1] > totals[2]);
        let r = maximize_welfare(&prof, &g, &t, 0, false).unwrap();
        assert_eq!(r.point, Some(0));
        assert_eq!(r.allocation.row(1), &[0.0, -1.0]);
        let refined = maximize_welfare(&prof, &g, &t, 0, true).unwrap();
        assert!((refined.value - r.value).abs() < 1e-12);
    }

    #[test]
    fn closed_form_weights() {
        let x = RandomVariable::new(vec![0.0, -1.0, -2.0]).unwrap();
        let probs = [0.5, 0.3, 0.2];
        let cf = closed_form_entropic(&[1.0, 2.0, 4.0], &x, &probs).unwrap();
        let expect = [4.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0];
        for (w, e) in cf.weights.iter().zip(expect) {
            assert!((w - e).abs() < 1e-15);
        }
        assert!((cf.lambda - 4.0 / 7.0).abs() < 1e-15);
        assert!(cf.tilt_gap <= 1e-12);
        // three-agent form: w_1 = g2 g3 / (g1 g2 + g2 g3 + g3 g1), denominator 14
        let (g1, g2, g3) = (1.0, 2.0, 4.0);
        assert_eq!(g1 * g2 + g2 * g3 + g3 * g1, 14.0);
        assert!((cf.weights[0] - g2 * g3 / 14.0).abs() < 1e-15);
        let total: f64 = cf.result.per_agent_values.iter().sum();
        assert!((total - cf.result.value).abs() < 1e-9);
        let q: f64 = cf.tilted_probs.iter().sum();
        assert!((q - 1.0).abs() < 1e-12);

        let eq = closed_form_entropic(&[3.0; 4], &x, &probs).unwrap();
        assert!(eq.weights.iter().all(|w| (w - 0.25).abs() < 1e-15));
    }

    #[test]
    fn closed_form_rejects_ambiguity() {
        let probs = vec![0.5, 0.5];
        let credal = crate::utility::CredalSet::new(&probs, vec![vec![0.2, 0.8]], None).unwrap();
        let prof = UtilityProfile::new(
            probs,
            vec![
                Utility::MaxMin(crate::utility::MaxMinUtility::new(1.0, credal).unwrap()),
                Utility::entropic(1.0).unwrap(),
            ],
        )
        .unwrap();
        let x = RandomVariable::new(vec![-1.0, 0.0]).unwrap();
        assert!(matches!(
            closed_form_for_profile(&prof, &x),
            Err(Error::UnsupportedProfile(_))
        ));
    }

    #[test]
    fn grid_and_refinement_match_closed_form() {
        let space = StateSpace::from_probs(vec![0.3, 0.45, 0.25]).unwrap();
        let x = RandomVariable::new(vec![-1.0, -2.0, 0.5]).unwrap();
        let gammas = [1.0, 2.0, 4.0];
        let prof = UtilityProfile::entropic(space.probs().to_vec(), &gammas).unwrap();
        let g = enumerate_grid(&space, &x, 3, &GridConfig::new(6)).unwrap();
        let t = prof.tabulate(&g);
        let cf = closed_form_for_profile(&prof, &x).unwrap();
        let grid = maximize_welfare(&prof, &g, &t, 0, false).unwrap();
        let refined = maximize_welfare(&prof, &g, &t, 0, true).unwrap();
        assert!(grid.value <= cf.result.value + 1e-12);
        assert!(refined.value >= grid.value);
        assert!(
            (refined.value - cf.result.value).abs() < 1e-3,
            "{} vs {}",
            refined.value,
            cf.result.value
        );
        assert!(validate_feasible(&refined.allocation, &x).passes());
        // welfare() on the proportional allocation reproduces the closed form
        let via_sum = welfare(&prof, &cf.result.allocation, 0).unwrap();
        assert!((via_sum - cf.result.value).abs() < 1e-12);
    }

    #[test]
    fn uniform_scope_hits_proportional_point() {
        let space = StateSpace::from_probs(vec![0.5, 0.5]).unwrap();
        let x = RandomVariable::new(vec![-1.0, -3.0]).unwrap();
        let prof = UtilityProfile::entropic(space.probs().to_vec(), &[1.0, 2.0, 4.0]).unwrap();
        let g = enumerate_grid(
            &space,
            &x,
            3,
            &GridConfig::new(7).with_scope(ShareScope::Uniform),
        )
        .unwrap();
        let t = prof.tabulate(&g);
        let r = maximize_welfare(&prof, &g, &t, 0, false).unwrap();
        let q = g.shares(r.point.unwrap());
        let q0 = q.state(0).unwrap();
        assert!((q0[0] - 4.0 / 7.0).abs() < 1e-12 && (q0[2] - 1.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn dominated_vertex_has_witness() {
        let space = StateSpace::from_probs(vec![0.5, 0.5]).unwrap();
        let x = RandomVariable::new(vec![-1.0, -2.0]).unwrap();
        let prof = UtilityProfile::entropic(space.probs().to_vec(), &[1.0, 1.0]).unwrap();
        let g = enumerate_grid(&space, &x, 2, &GridConfig::new(4)).unwrap();
        let t = prof.tabulate(&g);
        let best = maximize_welfare(&prof, &g, &t, 0, false).unwrap();
        let at_best = pareto_check(&t, &best.per_agent_values);
        assert!(at_best.optimal() && at_best.attains_max);

        // agent 1 keeps everything in state 0, agent 2 everything in state 1
        let vertex = Allocation::from_rows(&[vec![-1.0, 0.0], vec![0.0, -2.0]]).unwrap();
        let rep = pareto_check_allocation(&prof, &t, &vertex).unwrap();
        let k = rep.dominated_by.expect("vertex is dominated");
        assert!(rep.welfare_gap > 0.0);
        let vals = [
            prof.evaluate(&vertex, 0).unwrap(),
            prof.evaluate(&vertex, 1).unwrap(),
        ];
        assert!(t.get(0, k) >= vals[0] - PARETO_SLACK && t.get(1, k) >= vals[1] - PARETO_SLACK);
    }

    #[test]
    fn argmax_ties_take_lowest_index() {
        assert_eq!(argmax_lowest(&[1.0, 3.0, 3.0, 2.0]), Some(1));
        assert_eq!(argmax_lowest(&[]), None);
    }
}
