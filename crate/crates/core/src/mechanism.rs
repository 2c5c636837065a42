//! The sequential price-and-choose mechanism on a menu grid.
//!
//! Movers `1..n-1` each post a price schedule on the menu; mover `n`
//! chooses a point and the posted transfers are triggered. Mover `k`
//! receives `g_k = U_k - p^k + p^{k+1}` with `p^1 = p^{n+1} = 0`.
//!
//! On the equilibrium path, the schedule posted at stage `i` is the
//! equalizing schedule `p^{i+1} = W_{i+1} - avg(W_{i+1})`, which leaves the
//! continuation movers indifferent over the whole menu. Under exact
//! indifference the terminal choice is resolved by the subgame-perfect
//! selection (a welfare maximizer); perturbed mode instead tilts every
//! schedule by a small bump centered on the welfare maximizer so that the
//! choice is unique.
//!
//! Movers are positions in an `order` of agents; `order[0]` moves first.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::menu::{integrate, MenuGrid, PairProbe};
use crate::utility::UtilityTable;
use crate::welfare::argmax_lowest;

/// Tolerance for zero mean, Lipschitz caps and indifference.
pub const PRICE_TOL: f64 = 1e-9;
/// Headroom factor applied to the largest estimated utility Lipschitz
/// constant when choosing `L`.
pub const LIPSCHITZ_HEADROOM: f64 = 1.5;
pub const DEFAULT_IOTA: f64 = 0.1;
/// Default `epsilon` as a fraction of its admissible maximum.
pub const DEFAULT_EPSILON_FRACTION: f64 = 0.5;

/// A price per grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSchedule {
    pub values: Vec<f64>,
    /// Lipschitz constant claimed by the poster (the stage cap).
    pub declared_lip: f64,
}

/// Admissibility diagnostics for a schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceCheck {
    pub mean: f64,
    pub lipschitz: f64,
    pub cap: f64,
    pub sup_norm: f64,
    /// `cap * diam(grid)`.
    pub sup_bound: f64,
}

impl PriceCheck {
    pub fn zero_mean(&self) -> bool {
        self.mean.abs() <= PRICE_TOL
    }

    pub fn within_cap(&self) -> bool {
        self.lipschitz <= self.cap + PRICE_TOL
    }

    pub fn within_sup_bound(&self) -> bool {
        self.sup_norm <= self.sup_bound + PRICE_TOL
    }

    pub fn passes(&self) -> bool {
        self.zero_mean() && self.within_cap() && self.within_sup_bound()
    }
}

impl PriceSchedule {
    pub fn zero(points: usize) -> Self {
        Self {
            values: vec![0.0; points],
            declared_lip: 0.0,
        }
    }

    pub fn check(&self, grid: &MenuGrid, probe: &PairProbe, cap: f64) -> PriceCheck {
        PriceCheck {
            mean: integrate(grid, &self.values),
            lipschitz: probe.lipschitz(&self.values),
            cap,
            sup_norm: self.values.iter().fold(0.0, |m, v| m.max(v.abs())),
            sup_bound: cap * probe.diameter(),
        }
    }

    /// Same schedule shifted by a constant.
    pub fn shifted(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v + c).collect(),
            declared_lip: self.declared_lip,
        }
    }
}

/// Default `L`: headroom times the largest estimated Lipschitz constant of
/// any utility, or 1 when every utility is flat on the grid.
pub fn default_lipschitz(table: &UtilityTable, probe: &PairProbe) -> f64 {
    let max = (0..table.agents())
        .map(|i| probe.lipschitz(table.row(i)))
        .fold(0.0, f64::max);
    if max > 0.0 {
        LIPSCHITZ_HEADROOM * max
    } else {
        1.0
    }
}

/// Lipschitz cap `(n-1) L` on every posted schedule.
pub fn stage_cap(agents: usize, lipschitz: f64) -> f64 {
    (agents - 1) as f64 * lipschitz
}

/// `W_{i+1}` per point for stage `stage` (1-based, `1..n-1`): the total
/// utility of the movers after position `stage`.
pub fn continuation_welfare(table: &UtilityTable, order: &[usize], stage: usize) -> Vec<f64> {
    table.sum_over(&order[stage..])
}

/// `p^{i+1} = W_{i+1} - avg(W_{i+1})`; errors when the result breaks the
/// Lipschitz cap.
pub fn equalizing_price(
    table: &UtilityTable,
    grid: &MenuGrid,
    probe: &PairProbe,
    order: &[usize],
    stage: usize,
    cap: f64,
) -> Result<PriceSchedule> {
    if stage == 0 || stage >= order.len() {
        return Err(Error::Parameter(format!(
            "stage {stage} outside 1..{}",
            order.len() - 1
        )));
    }
    let tail = continuation_welfare(table, order, stage);
    let schedule = equalizing_from_values(&tail, grid, cap);
    let lip = probe.lipschitz(&schedule.values);
    if lip > cap + PRICE_TOL {
        return Err(Error::Configuration(format!(
            "stage {stage} equalizing schedule has Lipschitz ratio {lip} above cap {cap}; raise L"
        )));
    }
    Ok(schedule)
}

/// Equalizing schedule for arbitrary continuation values.
pub fn equalizing_from_values(tail: &[f64], grid: &MenuGrid, cap: f64) -> PriceSchedule {
    let avg = integrate(grid, tail);
    PriceSchedule {
        values: tail.iter().map(|w| w - avg).collect(),
        declared_lip: cap,
    }
}

/// The bump `psi = iota / (iota + d(., target))` and its mean `beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub target: usize,
    pub iota: f64,
    pub psi: Vec<f64>,
    pub beta: f64,
}

impl Bump {
    pub fn new(grid: &MenuGrid, target: usize, iota: f64) -> Result<Self> {
        if !(iota > 0.0 && iota < 1.0) {
            return Err(Error::Parameter(format!(
                "iota must lie in (0, 1), got {iota}"
            )));
        }
        if target >= grid.len() {
            return Err(Error::Parameter(format!("target {target} outside grid")));
        }
        let psi: Vec<f64> = (0..grid.len())
            .map(|k| iota / (iota + grid.distance(k, target)))
            .collect();
        let beta = integrate(grid, &psi);
        Ok(Self {
            target,
            iota,
            psi,
            beta,
        })
    }
}

/// Largest admissible `epsilon` for perturbing `base`:
/// `iota * (cap - Lip(base))`.
pub fn epsilon_ceiling(base: &PriceSchedule, probe: &PairProbe, cap: f64, iota: f64) -> f64 {
    iota * (cap - probe.lipschitz(&base.values))
}

/// `p_eps = base - eps psi + eps beta`.
pub fn perturbed_price(
    base: &PriceSchedule,
    bump: &Bump,
    probe: &PairProbe,
    epsilon: f64,
    cap: f64,
) -> Result<PriceSchedule> {
    let ceiling = epsilon_ceiling(base, probe, cap, bump.iota);
    if !(epsilon > 0.0 && epsilon <= ceiling) {
        return Err(Error::Parameter(format!(
            "epsilon {epsilon} outside (0, {ceiling}]"
        )));
    }
    Ok(PriceSchedule {
        values: base
            .values
            .iter()
            .zip(&bump.psi)
            .map(|(p, s)| p - epsilon * s + epsilon * bump.beta)
            .collect(),
        declared_lip: base.declared_lip,
    })
}

/// How the terminal mover resolves ties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionRule {
    /// First index attaining the maximum net value.
    LowestIndex,
    /// Among points within [`PRICE_TOL`] of the best net value, the one
    /// with the highest total welfare (lowest index on ties).
    WelfareSelection,
}

/// Best response of a follower with continuation values `tail` facing
/// `price`.
pub fn follower_best_response(
    tail: &[f64],
    price: &PriceSchedule,
    rule: SelectionRule,
    welfare: &[f64],
) -> usize {
    let net: Vec<f64> = tail.iter().zip(&price.values).map(|(w, p)| w - p).collect();
    match rule {
        SelectionRule::LowestIndex => argmax_lowest(&net).expect("grid is nonempty"),
        SelectionRule::WelfareSelection => {
            let top = net.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut best: Option<usize> = None;
            for (k, &v) in net.iter().enumerate() {
                if v >= top - PRICE_TOL && best.is_none_or(|b| welfare[k] > welfare[b]) {
                    best = Some(k);
                }
            }
            best.expect("grid is nonempty")
        }
    }
}

/// `max - min` of `tail - price` over the grid.
pub fn indifference_spread(tail: &[f64], price: &PriceSchedule) -> f64 {
    let (lo, hi) = tail
        .iter()
        .zip(&price.values)
        .map(|(w, p)| w - p)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
    hi - lo
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Mode {
    /// Equalizing schedules with the subgame-perfect welfare selection.
    Exact,
    /// Equalizing schedules tilted toward the welfare maximizer.
    Perturbed { epsilon: Option<f64>, iota: f64 },
}

impl Mode {
    pub fn perturbed_default() -> Self {
        Mode::Perturbed {
            epsilon: None,
            iota: DEFAULT_IOTA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub epsilon: f64,
    pub iota: f64,
    pub beta: f64,
    pub target: usize,
}

/// Record of one mechanism run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub mode: Mode,
    /// Agents by move position.
    pub order: Vec<usize>,
    /// `L`; each schedule is capped at `(n-1) L`.
    pub lipschitz: f64,
    /// `p^2, ..., p^n`.
    pub schedules: Vec<PriceSchedule>,
    pub chosen: usize,
    pub selection: SelectionRule,
    pub perturbation: Option<Perturbation>,
    /// `U` at the chosen point, by position.
    pub utilities: Vec<f64>,
    /// `g` by position.
    pub payoffs: Vec<f64>,
}

impl Transcript {
    /// Payoff of `agent` (not position).
    pub fn payoff_of(&self, agent: usize) -> f64 {
        let pos = self
            .order
            .iter()
            .position(|&a| a == agent)
            .expect("agent in order");
        self.payoffs[pos]
    }

    /// `|sum g - sum U|`.
    pub fn budget_gap(&self) -> f64 {
        (self.payoffs.iter().sum::<f64>() - self.utilities.iter().sum::<f64>()).abs()
    }

    /// Largest deviation from `g_k = U_k - p^k + p^{k+1}`.
    pub fn payoff_identity_gap(&self) -> f64 {
        let prices = schedule_values_at(&self.schedules, self.chosen);
        (0..self.payoffs.len())
            .map(|k| (self.payoffs[k] - (self.utilities[k] - prices[k] + prices[k + 1])).abs())
            .fold(0.0, f64::max)
    }
}

/// `[p^1, p^2, ..., p^n, p^{n+1}]` at point `k`, with the zero ends.
fn schedule_values_at(schedules: &[PriceSchedule], k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(schedules.len() + 2);
    out.push(0.0);
    out.extend(schedules.iter().map(|p| p.values[k]));
    out.push(0.0);
    out
}

/// Inputs shared by every stage of a run.
#[derive(Debug, Clone, Copy)]
pub struct MechanismContext<'a> {
    pub grid: &'a MenuGrid,
    pub table: &'a UtilityTable,
    pub probe: &'a PairProbe,
    pub lipschitz: f64,
}

impl MechanismContext<'_> {
    pub fn cap(&self) -> f64 {
        stage_cap(self.table.agents(), self.lipschitz)
    }
}

/// Identity move order `0, 1, ..., n-1`.
pub fn identity_order(agents: usize) -> Vec<usize> {
    (0..agents).collect()
}

/// Runs the mechanism along its equilibrium path.
pub fn run_pnc(ctx: &MechanismContext<'_>, mode: Mode, order: &[usize]) -> Result<Transcript> {
    let n = ctx.table.agents();
    if n < 2 || order.len() != n {
        return Err(Error::Structure(format!(
            "order of {} movers for {n} agents",
            order.len()
        )));
    }
    let mut seen = vec![false; n];
    for &a in order {
        if a >= n || std::mem::replace(&mut seen[a], true) {
            return Err(Error::Structure(format!(
                "order {order:?} is not a permutation"
            )));
        }
    }
    let cap = ctx.cap();
    let mut schedules = (1..n)
        .map(|stage| equalizing_price(ctx.table, ctx.grid, ctx.probe, order, stage, cap))
        .collect::<Result<Vec<_>>>()?;
    let total = ctx.table.total();
    let last_tail = ctx.table.row(order[n - 1]).to_vec();

    let (chosen, selection, perturbation) = match mode {
        Mode::Exact => {
            let last = schedules.last().expect("n >= 2");
            let k =
                follower_best_response(&last_tail, last, SelectionRule::WelfareSelection, &total);
            (k, SelectionRule::WelfareSelection, None)
        }
        Mode::Perturbed { epsilon, iota } => {
            let target = argmax_lowest(&total).expect("grid is nonempty");
            let bump = Bump::new(ctx.grid, target, iota)?;
            let ceiling = schedules
                .iter()
                .map(|p| epsilon_ceiling(p, ctx.probe, cap, iota))
                .fold(f64::INFINITY, f64::min);
            let eps = epsilon.unwrap_or(DEFAULT_EPSILON_FRACTION * ceiling);
            schedules = schedules
                .iter()
                .map(|p| perturbed_price(p, &bump, ctx.probe, eps, cap))
                .collect::<Result<Vec<_>>>()?;
            let last = schedules.last().expect("n >= 2");
            let k = follower_best_response(&last_tail, last, SelectionRule::LowestIndex, &total);
            let pert = Perturbation {
                epsilon: eps,
                iota,
                beta: bump.beta,
                target,
            };
            (k, SelectionRule::LowestIndex, Some(pert))
        }
    };

    let utilities: Vec<f64> = order.iter().map(|&a| ctx.table.get(a, chosen)).collect();
    let prices = schedule_values_at(&schedules, chosen);
    let payoffs = (0..n)
        .map(|k| utilities[k] - prices[k] + prices[k + 1])
        .collect();
    Ok(Transcript {
        mode,
        order: order.to_vec(),
        lipschitz: ctx.lipschitz,
        schedules,
        chosen,
        selection,
        perturbation,
        utilities,
        payoffs,
    })
}

/// Outcome of one probed first-mover deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonDeviation {
    pub epsilon: f64,
    pub response: usize,
    pub payoff: f64,
    /// `W_max - avg(W_2) - eps (1 - beta)`.
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationAudit {
    pub equilibrium_payoff: f64,
    /// Random admissible deviations evaluated.
    pub samples: usize,
    /// Best gain over all evaluated deviations; `None` when nothing was
    /// evaluated.
    pub max_gain: Option<f64>,
    pub epsilon_sweep: Vec<EpsilonDeviation>,
}

impl DeviationAudit {
    pub fn passes(&self) -> bool {
        self.max_gain.is_none_or(|g| g <= PRICE_TOL)
    }
}

/// Samples admissible first-mover schedules and checks that none beats the
/// equilibrium payoff. The continuation responds with
/// `argmax (W_2 - p)`, lowest index on ties.
///
/// Deviations are `p* + delta` re-centered to zero mean, where `delta` is a
/// random combination of distance functions and bumps around random grid
/// points whose total Lipschitz constant fits in the slack left by `p*`.
/// A deterministic `p_eps` sweep is added for the same check.
pub fn audit_first_mover_bound(
    ctx: &MechanismContext<'_>,
    transcript: &Transcript,
    num_deviations: usize,
    seed: u64,
) -> Result<DeviationAudit> {
    if transcript.mode != Mode::Exact {
        return Err(Error::Parameter(
            "deviation audit needs an exact-mode transcript".into(),
        ));
    }
    let order = &transcript.order;
    let n = order.len();
    let cap = ctx.cap();
    let grid = ctx.grid;
    let leader = ctx.table.row(order[0]);
    let tail = continuation_welfare(ctx.table, order, 1);
    let base = &transcript.schedules[0];
    let equilibrium = transcript.payoffs[0];
    let slack = (cap - ctx.probe.lipschitz(&base.values)).max(0.0);

    let evaluate = |p: &PriceSchedule| {
        let k = follower_best_response(&tail, p, SelectionRule::LowestIndex, &[]);
        (k, leader[k] + p.values[k])
    };

    let mut max_gain: Option<f64> = None;
    let mut record = |gain: f64| {
        max_gain = Some(max_gain.map_or(gain, |g: f64| g.max(gain)));
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = 0;
    for _ in 0..num_deviations {
        let terms = rng.gen_range(1..=4);
        let mut delta = vec![0.0; grid.len()];
        let mut lip_total = 0.0;
        let mut pieces: Vec<(f64, Vec<f64>, f64)> = Vec::with_capacity(terms);
        for _ in 0..terms {
            let anchor = rng.gen_range(0..grid.len());
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let weight: f64 = rng.gen_range(0.1..1.0);
            if rng.gen_bool(0.5) {
                let f: Vec<f64> = (0..grid.len()).map(|k| grid.distance(k, anchor)).collect();
                pieces.push((sign * weight, f, 1.0));
            } else {
                let iota: f64 = rng.gen_range(0.01..0.9);
                let f: Vec<f64> = (0..grid.len())
                    .map(|k| iota / (iota + grid.distance(k, anchor)))
                    .collect();
                pieces.push((sign * weight, f, 1.0 / iota));
            }
        }
        for (c, _, l) in &pieces {
            lip_total += c.abs() * l;
        }
        let budget = slack * rng.gen_range(0.05..1.0);
        let scale = if lip_total > 0.0 {
            budget / lip_total
        } else {
            0.0
        };
        for (c, f, _) in &pieces {
            for (d, v) in delta.iter_mut().zip(f) {
                *d += scale * c * v;
            }
        }
        let raw: Vec<f64> = base.values.iter().zip(&delta).map(|(p, d)| p + d).collect();
        let mean = integrate(grid, &raw);
        let candidate = PriceSchedule {
            values: raw.iter().map(|v| v - mean).collect(),
            declared_lip: cap,
        };
        if !candidate.check(grid, ctx.probe, cap).within_cap() {
            continue;
        }
        samples += 1;
        let (_, payoff) = evaluate(&candidate);
        record(payoff - equilibrium);
    }

    let mut epsilon_sweep = Vec::new();
    if n >= 2 && slack > 0.0 {
        let target = argmax_lowest(&ctx.table.total()).expect("grid is nonempty");
        let bump = Bump::new(grid, target, DEFAULT_IOTA)?;
        let w_max = ctx.table.total()[target];
        let avg_tail = integrate(grid, &tail);
        let ceiling = epsilon_ceiling(base, ctx.probe, cap, bump.iota);
        for frac in [1.0, 0.5, 0.25, 0.1, 0.01] {
            let epsilon = frac * ceiling;
            let p = perturbed_price(base, &bump, ctx.probe, epsilon, cap)?;
            let (response, payoff) = evaluate(&p);
            record(payoff - equilibrium);
            epsilon_sweep.push(EpsilonDeviation {
                epsilon,
                response,
                payoff,
                predicted: w_max - avg_tail - epsilon * (1.0 - bump.beta),
            });
        }
    }

    Ok(DeviationAudit {
        equilibrium_payoff: equilibrium,
        samples,
        max_gain,
        epsilon_sweep,
    })
}
