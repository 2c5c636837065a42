//! First-mover auction in front of the mechanism.
//!
//! Every agent bids for the right to move first. The highest bidder (drawn
//! uniformly among ties) pays its bid, which the others share equally, and
//! then leads the mechanism in exact mode. At the symmetric equilibrium bid
//! `b* = (n-1) eta / n` each agent ends at its own average utility plus an
//! equal share `eta / n` of the efficient surplus.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanism::{run_pnc, MechanismContext, Mode, Transcript};
use crate::menu::MenuGrid;
use crate::utility::{avg_utility, UtilityTable};

/// Tolerance for payoff identities.
pub const AUCTION_TOL: f64 = 1e-9;
/// Negative surplus down to this value is rounding noise and clamps to 0.
pub const SURPLUS_FLOOR: f64 = -1e-9;

/// `W_max - sum_i Avg_i`, with each average taken under the agent's own
/// evaluator (the worst-case value for max-min agents).
pub fn efficient_surplus(table: &UtilityTable, grid: &MenuGrid) -> f64 {
    let w_max = table.total().into_iter().fold(f64::NEG_INFINITY, f64::max);
    let avgs: f64 = (0..table.agents())
        .map(|i| avg_utility(table, grid, i))
        .sum();
    w_max - avgs
}

/// `b* = (n-1) eta / n`.
pub fn equilibrium_bid(eta: f64, agents: usize) -> Result<f64> {
    if agents < 2 {
        return Err(Error::Domain(format!(
            "auction needs at least 2 agents, got {agents}"
        )));
    }
    if eta < SURPLUS_FLOOR {
        return Err(Error::Domain(format!(
            "efficient surplus {eta} is negative; refine the grid"
        )));
    }
    let eta = eta.max(0.0);
    Ok((agents - 1) as f64 * eta / agents as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionOutcome {
    pub eta: f64,
    pub bids: Vec<f64>,
    pub winner: usize,
    /// Net transfer per agent: `-b` for the winner, `b/(n-1)` otherwise.
    pub transfers: Vec<f64>,
    pub seed: u64,
}

impl AuctionOutcome {
    pub fn transfer_sum(&self) -> f64 {
        self.transfers.iter().sum()
    }

    pub fn winner_has_top_bid(&self) -> bool {
        let top = self.bids.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        self.bids[self.winner] == top
    }
}

/// Transfers when `winner` pays `bid`.
pub fn auction_transfers(agents: usize, winner: usize, bid: f64) -> Vec<f64> {
    let share = bid / (agents - 1) as f64;
    (0..agents)
        .map(|i| if i == winner { -bid } else { share })
        .collect()
}

/// Winner first, the rest in index order.
pub fn winner_first_order(agents: usize, winner: usize) -> Vec<usize> {
    std::iter::once(winner)
        .chain((0..agents).filter(|&i| i != winner))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedRun {
    pub auction: AuctionOutcome,
    pub transcript: Transcript,
    /// Own-evaluator averages by agent.
    pub under_avg: Vec<f64>,
    /// Mechanism payoff plus transfer, by agent.
    pub final_payoffs: Vec<f64>,
}

impl CombinedRun {
    /// `max_i |final_i - (Avg_i + eta/n)|`.
    pub fn equal_split_gap(&self) -> f64 {
        let share = self.auction.eta.max(0.0) / self.final_payoffs.len() as f64;
        self.final_payoffs
            .iter()
            .zip(&self.under_avg)
            .map(|(f, a)| (f - (a + share)).abs())
            .fold(0.0, f64::max)
    }
}

/// Mechanism and auction outcome when `winner` leads.
pub fn branch_for_winner(
    ctx: &MechanismContext<'_>,
    winner: usize,
    bid: f64,
    seed: u64,
) -> Result<CombinedRun> {
    let n = ctx.table.agents();
    let eta = efficient_surplus(ctx.table, ctx.grid);
    let transcript = run_pnc(ctx, Mode::Exact, &winner_first_order(n, winner))?;
    let transfers = auction_transfers(n, winner, bid);
    let final_payoffs = (0..n)
        .map(|i| transcript.payoff_of(i) + transfers[i])
        .collect();
    let under_avg = (0..n)
        .map(|i| avg_utility(ctx.table, ctx.grid, i))
        .collect();
    Ok(CombinedRun {
        auction: AuctionOutcome {
            eta,
            bids: vec![bid; n],
            winner,
            transfers,
            seed,
        },
        transcript,
        under_avg,
        final_payoffs,
    })
}

/// Everyone bids `b*`; the winner is drawn uniformly from all agents.
pub fn run_auction_then_pnc(ctx: &MechanismContext<'_>, seed: u64) -> Result<CombinedRun> {
    let n = ctx.table.agents();
    let eta = efficient_surplus(ctx.table, ctx.grid);
    let bid = equilibrium_bid(eta, n)?;
    let winner = ChaCha8Rng::seed_from_u64(seed).gen_range(0..n);
    branch_for_winner(ctx, winner, bid, seed)
}

/// Largest spread of final payoffs across all possible winners.
pub fn winner_invariance_gap(ctx: &MechanismContext<'_>) -> Result<f64> {
    let n = ctx.table.agents();
    let bid = equilibrium_bid(efficient_surplus(ctx.table, ctx.grid), n)?;
    let branches = (0..n)
        .map(|w| branch_for_winner(ctx, w, bid, 0))
        .collect::<Result<Vec<_>>>()?;
    let mut gap: f64 = 0.0;
    for b in &branches[1..] {
        for (x, y) in b.final_payoffs.iter().zip(&branches[0].final_payoffs) {
            gap = gap.max((x - y).abs());
        }
    }
    Ok(gap)
}

/// `101` evenly spaced bids on `[0, eta]` plus `b*` and `b* +/- delta`.
pub fn default_bid_grid(eta: f64, bid: f64) -> Vec<f64> {
    let eta = eta.max(0.0);
    let delta = 1e-3 * eta.max(1e-3);
    let mut grid: Vec<f64> = (0..=100).map(|k| eta * k as f64 / 100.0).collect();
    grid.extend([bid, (bid - delta).max(0.0), bid + delta]);
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidAudit {
    pub equilibrium_bid: f64,
    /// Equilibrium expected payoff by agent.
    pub equilibrium_payoffs: Vec<f64>,
    pub deviations_checked: usize,
    pub max_gain: f64,
}

impl BidAudit {
    pub fn passes(&self) -> bool {
        self.max_gain <= AUCTION_TOL
    }
}

/// Exact expected payoff gains of unilateral bid deviations.
///
/// With the others at `b*`, a higher bid wins outright, a lower bid loses
/// to a uniform draw among the others, and `b*` ties with everyone.
pub fn audit_bid_deviation(ctx: &MechanismContext<'_>, bid_grid: &[f64]) -> Result<BidAudit> {
    let n = ctx.table.agents();
    let eta = efficient_surplus(ctx.table, ctx.grid);
    let bid = equilibrium_bid(eta, n)?;
    // mechanism payoff of agent i when w leads
    let lead: Vec<Transcript> = (0..n)
        .map(|w| run_pnc(ctx, Mode::Exact, &winner_first_order(n, w)))
        .collect::<Result<_>>()?;
    let share = bid / (n - 1) as f64;
    let as_leader = |i: usize, b: f64| lead[i].payoff_of(i) - b;
    let as_follower = |i: usize| {
        (0..n)
            .filter(|&w| w != i)
            .map(|w| lead[w].payoff_of(i) + share)
            .sum::<f64>()
            / (n - 1) as f64
    };
    let equilibrium: Vec<f64> = (0..n)
        .map(|i| (as_leader(i, bid) + (n - 1) as f64 * as_follower(i)) / n as f64)
        .collect();

    let mut max_gain = f64::NEG_INFINITY;
    let mut checked = 0;
    for (i, &eq) in equilibrium.iter().enumerate() {
        for &b in bid_grid {
            let payoff = if b > bid {
                as_leader(i, b)
            } else if b < bid {
                as_follower(i)
            } else {
                eq
            };
            max_gain = max_gain.max(payoff - eq);
            checked += 1;
        }
    }
    Ok(BidAudit {
        equilibrium_bid: bid,
        equilibrium_payoffs: equilibrium,
        deviations_checked: checked,
        max_gain: if checked == 0 { 0.0 } else { max_gain },
    })
}
