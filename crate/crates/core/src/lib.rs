//! Price-and-choose risk sharing on finite probability spaces.
//!
//! The crate computes welfare-optimal splits of an aggregate loss among
//! agents with monetary (entropic or max-min) utilities, builds the
//! equalizing price schedules of the sequential price-and-choose
//! mechanism, runs its equilibrium path, and audits the equilibrium and
//! first-mover auction identities on a finite discretization of the menu.

pub mod auction;
pub mod error;
pub mod harness;
pub mod mechanism;
pub mod menu;
pub mod space;
pub mod utility;
pub mod welfare;

pub use error::{Error, Result};
pub use mechanism::{run_pnc, MechanismContext, Mode, PriceSchedule, Transcript};
pub use menu::{
    enumerate_grid, integrate, shares_to_allocation, validate_feasible, Allocation, GridConfig,
    MenuGrid, PairProbe, ShareProfile, ShareScope, WeakStarMetric,
};
pub use space::{aggregate_risk, sign_partition, EndowmentProfile, RandomVariable, StateSpace};
pub use utility::{CredalSet, MaxMinUtility, Utility, UtilityProfile, UtilityTable};
pub use welfare::{maximize_welfare, pareto_check, welfare, WelfareResult};
