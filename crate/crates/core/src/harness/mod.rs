//! Scenario ingestion, experiment orchestration and deterministic reports.

pub mod generate;
pub mod report;
pub mod scenario;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::auction::{
    audit_bid_deviation, default_bid_grid, efficient_surplus, equilibrium_bid,
    run_auction_then_pnc, winner_invariance_gap, AUCTION_TOL,
};
use crate::error::Error;
use crate::mechanism::{
    audit_first_mover_bound, continuation_welfare, default_lipschitz, identity_order,
    indifference_spread, run_pnc, MechanismContext, Mode, Transcript, PRICE_TOL,
};
use crate::menu::{enumerate_grid, validate_feasible, MenuGrid, PairProbe};
use crate::utility::{avg_utility, regularity_checks, UtilityTable};
use crate::welfare::{closed_form_for_profile, maximize_welfare, WELFARE_TOL};

pub use report::{
    emit_report, read_report, render_json, render_tabular, AgentRow, AuctionSection, Audit,
    ClosedFormSummary, GridSummary, InvariantCheck, RunReport, SCHEMA,
};
pub use scenario::{load_scenario, parse_scenario, LoadError, OutputFormat, ScenarioConfig};

/// Pipeline stage an error came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Build,
    Grid,
    Welfare,
    Mechanism,
    Auction,
    Audit,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Build => "build",
            Stage::Grid => "grid",
            Stage::Welfare => "welfare",
            Stage::Mechanism => "mechanism",
            Stage::Auction => "auction",
            Stage::Audit => "audit",
            Stage::Output => "output",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{stage}: {source}")]
pub struct RunError {
    pub stage: Stage,
    pub source: Error,
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, RunError>;
}

impl<T> AtStage<T> for crate::Result<T> {
    fn at(self, stage: Stage) -> Result<T, RunError> {
        self.map_err(|source| RunError { stage, source })
    }
}

/// Sub-seed for a named component.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    // FNV-1a of the label, mixed into the base seed
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Command-line style overrides applied on top of a scenario file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub resolution: Option<u32>,
    pub mode: Option<scenario::ModeKind>,
    pub epsilon: Option<f64>,
    pub iota: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<String>,
    pub format: Option<OutputFormat>,
    pub audit_only: bool,
}

impl Overrides {
    pub fn apply(&self, config: &mut ScenarioConfig) {
        if let Some(r) = self.resolution {
            config.grid.resolution = r;
        }
        if let Some(m) = self.mode {
            config.mechanism.mode = m;
        }
        if let Some(e) = self.epsilon {
            config.mechanism.epsilon = Some(e);
        }
        if let Some(i) = self.iota {
            config.mechanism.iota = i;
        }
        if let Some(s) = self.seed {
            config.seed = s;
        }
        if let Some(o) = &self.out {
            config.output.dir = o.clone();
        }
        if let Some(f) = self.format {
            config.output.format = f;
        }
        if self.audit_only {
            config.mechanism.audit_only = true;
        }
    }
}

/// Reads a scenario, applies `overrides`, then validates the result.
pub fn load_with_overrides(
    path: impl AsRef<std::path::Path>,
    overrides: &Overrides,
) -> Result<ScenarioConfig, LoadError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| LoadError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let mut config = parse_scenario(&text)?;
    overrides.apply(&mut config);
    config.validate().map_err(LoadError::Invalid)?;
    Ok(config)
}

/// Everything a run computes before it is folded into a report.
pub struct Prepared {
    pub grid: MenuGrid,
    pub table: UtilityTable,
    pub reference_table: UtilityTable,
    pub probe: PairProbe,
    pub lipschitz: f64,
}

impl Prepared {
    pub fn context(&self) -> MechanismContext<'_> {
        MechanismContext {
            grid: &self.grid,
            table: &self.table,
            probe: &self.probe,
            lipschitz: self.lipschitz,
        }
    }
}

/// Builds the grid, the utility tables, the pair probe and `L`.
pub fn prepare(config: &ScenarioConfig) -> Result<Prepared, RunError> {
    let space = config.state_space().at(Stage::Build)?;
    let x = config.aggregate().at(Stage::Build)?;
    let profile = config.utility_profile().at(Stage::Build)?;
    let grid =
        enumerate_grid(&space, &x, config.agents.len(), &config.grid.config()).at(Stage::Grid)?;
    let table = profile.tabulate(&grid);
    let reference_table = profile.tabulate_reference(&grid);
    let probe = PairProbe::new(&grid, derive_seed(config.seed, "probe"));
    let lipschitz = config
        .mechanism
        .lipschitz
        .unwrap_or_else(|| default_lipschitz(&table, &probe));
    Ok(Prepared {
        grid,
        table,
        reference_table,
        probe,
        lipschitz,
    })
}

/// Runs welfare, mechanism, auction and audits for a validated scenario.
pub fn run_experiment(config: &ScenarioConfig) -> Result<RunReport, RunError> {
    let profile = config.utility_profile().at(Stage::Build)?;
    let x = config.aggregate().at(Stage::Build)?;
    let prep = prepare(config)?;
    let ctx = prep.context();
    let grid = &prep.grid;
    let table = &prep.table;
    let n = table.agents();
    let order = identity_order(n);
    let cap = ctx.cap();

    let welfare =
        maximize_welfare(&profile, grid, table, 0, config.mechanism.refine).at(Stage::Welfare)?;
    let closed_form = closed_form_for_profile(&profile, &x)
        .ok()
        .map(|s| ClosedFormSummary {
            weights: s.weights,
            lambda: s.lambda,
            tilt_gap: s.tilt_gap,
            value: s.result.value,
        });
    let welfare_shares = welfare.point.map(|k| grid.shares(k));

    let exact = run_pnc(&ctx, Mode::Exact, &order).at(Stage::Mechanism)?;
    let transcript = match config.mechanism.mode() {
        Mode::Exact => exact.clone(),
        mode => run_pnc(&ctx, mode, &order).at(Stage::Mechanism)?,
    };

    let total = table.total();
    let w_max = total.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let under_avg: Vec<f64> = (0..n).map(|i| avg_utility(table, grid, i)).collect();
    let avg: Vec<f64> = (0..n)
        .map(|i| avg_utility(&prep.reference_table, grid, i))
        .collect();

    let mut checks = Vec::new();
    let mut check = |name: &str, value: f64, tolerance: f64| {
        checks.push(InvariantCheck::new(name, value, tolerance));
    };

    let feas = validate_feasible(&welfare.allocation, &x);
    check(
        "welfare.feasible",
        if feas.passes() { 0.0 } else { 1.0 },
        0.0,
    );
    check(
        "welfare.attains_grid_max",
        (w_max - welfare.value).max(0.0),
        WELFARE_TOL,
    );

    for (s, p) in exact.schedules.iter().enumerate() {
        let tail = continuation_welfare(table, &order, s + 1);
        check(
            &format!("exact.stage{}.indifference", s + 1),
            indifference_spread(&tail, p),
            PRICE_TOL,
        );
    }
    for (label, t) in [("exact", &exact), ("run", &transcript)] {
        for (s, p) in t.schedules.iter().enumerate() {
            let c = p.check(grid, &prep.probe, cap);
            let at = format!("{label}.p{}", s + 2);
            check(&format!("{at}.zero_mean"), c.mean.abs(), PRICE_TOL);
            check(
                &format!("{at}.lipschitz_excess"),
                (c.lipschitz - c.cap).max(0.0),
                PRICE_TOL,
            );
            check(
                &format!("{at}.sup_excess"),
                (c.sup_norm - c.sup_bound).max(0.0),
                PRICE_TOL,
            );
        }
        check(&format!("{label}.budget_balance"), t.budget_gap(), 1e-12);
        check(
            &format!("{label}.payoff_identity"),
            t.payoff_identity_gap(),
            1e-12,
        );
    }
    check("exact.efficient", w_max - total[exact.chosen], WELFARE_TOL);
    let tail_avg: f64 = under_avg[1..].iter().sum();
    check(
        "exact.leader_payoff",
        (exact.payoffs[0] - (w_max - tail_avg)).abs(),
        PRICE_TOL,
    );
    let follower_gap = (1..n)
        .map(|k| (exact.payoffs[k] - under_avg[order[k]]).abs())
        .fold(0.0, f64::max);
    check("exact.follower_payoffs", follower_gap, PRICE_TOL);
    if let Some(pert) = &transcript.perturbation {
        check(
            "perturbed.selects_target",
            (transcript.chosen != pert.target) as u8 as f64,
            0.0,
        );
        let last = transcript.schedules.last().expect("n >= 2");
        let follower = table.row(order[n - 1]);
        let net: Vec<f64> = follower
            .iter()
            .zip(&last.values)
            .map(|(u, p)| u - p)
            .collect();
        let top = net.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ties = net.iter().filter(|&&v| v >= top - 1e-12).count();
        check("perturbed.unique_response", (ties - 1) as f64, 0.0);
        let predicted = w_max - tail_avg - pert.epsilon * (1.0 - pert.beta);
        check(
            "perturbed.leader_payoff",
            (transcript.payoffs[0] - predicted).abs(),
            PRICE_TOL,
        );
    }

    let mut audits = Vec::new();
    if config.audit.regularity {
        let rep = regularity_checks(&profile, grid, &prep.probe, config.audit.max_pairs);
        check("regularity", if rep.passes() { 0.0 } else { 1.0 }, 0.0);
        audits.push(Audit::Regularity(rep));
    }
    if config.audit.deviations > 0 {
        let dev = audit_first_mover_bound(
            &ctx,
            &exact,
            config.audit.deviations,
            derive_seed(config.seed, "deviation"),
        )
        .at(Stage::Audit)?;
        check(
            "deviation.max_gain",
            dev.max_gain.unwrap_or(0.0).max(0.0),
            PRICE_TOL,
        );
        audits.push(Audit::FirstMover(dev));
    }

    let mut auction = None;
    if !config.mechanism.audit_only {
        let eta = efficient_surplus(table, grid);
        let combined =
            run_auction_then_pnc(&ctx, derive_seed(config.seed, "auction")).at(Stage::Auction)?;
        let invariance = winner_invariance_gap(&ctx).at(Stage::Auction)?;
        check(
            "auction.transfer_sum",
            combined.auction.transfer_sum().abs(),
            1e-12,
        );
        check(
            "auction.winner_top_bid",
            (!combined.auction.winner_has_top_bid()) as u8 as f64,
            0.0,
        );
        check(
            "auction.equal_split",
            combined.equal_split_gap(),
            AUCTION_TOL,
        );
        check("auction.winner_invariance", invariance, AUCTION_TOL);
        check(
            "auction.efficient",
            w_max - total[combined.transcript.chosen],
            WELFARE_TOL,
        );
        check(
            "auction.total",
            (combined.final_payoffs.iter().sum::<f64>() - w_max).abs(),
            AUCTION_TOL,
        );
        if config.audit.bids {
            let bid = equilibrium_bid(eta, n).at(Stage::Auction)?;
            let bids = audit_bid_deviation(&ctx, &default_bid_grid(eta, bid)).at(Stage::Audit)?;
            check("auction.bid_deviation", bids.max_gain.max(0.0), AUCTION_TOL);
            audits.push(Audit::Bids(bids));
        }
        auction = Some(AuctionSection {
            outcome: combined.auction,
            transcript: combined.transcript,
            final_payoffs: combined.final_payoffs,
            winner_invariance_gap: invariance,
        });
    }

    let agents = (0..n)
        .map(|i| AgentRow {
            agent: i,
            name: config.agents[i].name.clone(),
            kind: profile.utility(i).kind().to_string(),
            avg: avg[i],
            under_avg: under_avg[i],
            g: transcript.payoff_of(i),
            final_payoff: auction.as_ref().map(|a| a.final_payoffs[i]),
        })
        .collect();

    let mut report = RunReport {
        schema: SCHEMA.to_string(),
        engine_version: env!("CARGO_PKG_VERSION").to_string(),
        scenario: config.clone(),
        grid: GridSummary {
            points: grid.len(),
            resolution: grid.resolution(),
            scope: grid.scope(),
            classes: grid.classes().len(),
            diameter: prep.probe.diameter(),
            diameter_exact: prep.probe.is_exhaustive(),
            probe_pairs: prep.probe.len(),
        },
        lipschitz: prep.lipschitz,
        w_max,
        eta: efficient_surplus(table, grid),
        welfare,
        welfare_shares,
        closed_form,
        transcript,
        agents,
        auction,
        audits,
        invariants: checks,
    };
    let finite = report.non_finite_fields();
    report
        .invariants
        .push(InvariantCheck::new("report.finite", finite as f64, 0.0));
    Ok(report)
}

/// The mechanism transcript alone, for callers that do not need a report.
pub fn run_transcript(config: &ScenarioConfig) -> Result<Transcript, RunError> {
    let prep = prepare(config)?;
    run_pnc(
        &prep.context(),
        config.mechanism.mode(),
        &identity_order(config.agents.len()),
    )
    .at(Stage::Mechanism)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ_by_label() {
        let a = derive_seed(1, "probe");
        assert_ne!(a, derive_seed(1, "auction"));
        assert_ne!(a, derive_seed(2, "probe"));
        assert_eq!(a, derive_seed(1, "probe"));
    }

    #[test]
    fn stage_appears_in_errors() {
        let e = RunError {
            stage: Stage::Grid,
            source: Error::Parameter("x".into()),
        };
        assert_eq!(e.to_string(), "grid: parameter out of range: x");
    }
}
