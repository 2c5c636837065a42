//! Seeded random scenarios for property tests and sweeps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::scenario::{
    AgentSpec, AuditSpec, GridSpec, MechanismSpec, OutputSpec, ScenarioConfig, SpaceSpec,
    UtilityKind, UtilitySpec,
};
use crate::menu::{grid_size, GridConfig, GridWeights, ShareScope, DEFAULT_GRID_BUDGET};
use crate::space::RandomVariable;

/// Bounds for [`random_scenario`].
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorLimits {
    pub agents: (usize, usize),
    pub max_states: usize,
    pub max_points: u128,
    pub max_resolution: u32,
    pub gamma: (f64, f64),
    /// Chance that an agent is max-min.
    pub maxmin_share: f64,
}

impl Default for GeneratorLimits {
    fn default() -> Self {
        Self {
            agents: (2, 4),
            max_states: 4,
            max_points: 20_000,
            max_resolution: 12,
            gamma: (0.2, 3.0),
            maxmin_share: 0.5,
        }
    }
}

fn random_simplex(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    let w: Vec<u32> = (0..m).map(|_| rng.gen_range(1..=9)).collect();
    let total: u32 = w.iter().sum();
    let mut p: Vec<f64> = w.iter().map(|&v| v as f64 / total as f64).collect();
    // put the rounding remainder on the last state
    let head: f64 = p[..m - 1].iter().sum();
    p[m - 1] = 1.0 - head;
    p
}

/// Largest resolution whose per-state grid fits `max_points`.
pub fn fitting_resolution(x: &RandomVariable, agents: usize, limits: &GeneratorLimits) -> u32 {
    (1..=limits.max_resolution)
        .rev()
        .find(|&r| grid_size(x, agents, &GridConfig::new(r)) <= limits.max_points)
        .unwrap_or(1)
}

/// A random valid scenario: integer endowments in `-2..=1` with a nonzero
/// aggregate, mixed entropic and max-min agents.
pub fn random_scenario(seed: u64, limits: &GeneratorLimits) -> ScenarioConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(limits.agents.0..=limits.agents.1);
    let m = rng.gen_range(1..=limits.max_states);
    let probs = random_simplex(&mut rng, m);
    let endowments = loop {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..m).map(|_| rng.gen_range(-2i32..=1) as f64).collect())
            .collect();
        let nonzero = (0..m).any(|s| rows.iter().map(|r| r[s]).sum::<f64>() != 0.0);
        if nonzero {
            break rows;
        }
    };
    let agents: Vec<AgentSpec> = endowments
        .into_iter()
        .map(|endowment| {
            let gamma = rng.gen_range(limits.gamma.0..limits.gamma.1);
            let utility = if rng.gen_bool(limits.maxmin_share) {
                let extra = rng.gen_range(1..=2);
                UtilitySpec {
                    kind: UtilityKind::Maxmin,
                    gamma: Some(gamma),
                    priors: (0..extra).map(|_| random_simplex(&mut rng, m)).collect(),
                    lip_bound: None,
                }
            } else {
                UtilitySpec {
                    kind: UtilityKind::Entropic,
                    gamma: Some(gamma),
                    priors: Vec::new(),
                    lip_bound: None,
                }
            };
            AgentSpec {
                name: None,
                endowment,
                utility,
            }
        })
        .collect();
    let mut config = ScenarioConfig {
        name: format!("random-{seed}"),
        seed,
        space: SpaceSpec {
            states: None,
            probs,
        },
        agents,
        grid: GridSpec {
            resolution: 1,
            scope: ShareScope::PerState,
            weights: GridWeights::Uniform,
            budget: DEFAULT_GRID_BUDGET,
            metric_terms: None,
        },
        mechanism: MechanismSpec::default(),
        audit: AuditSpec::default(),
        output: OutputSpec::default(),
    };
    let x = config.aggregate().expect("consistent dimensions");
    config.grid.resolution = fitting_resolution(&x, n, limits);
    config
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_scenarios_validate_and_fit() {
        let limits = GeneratorLimits::default();
        for seed in 0..40 {
            let c = random_scenario(seed, &limits);
            c.validate()
                .unwrap_or_else(|e| panic!("seed {seed}: {e:?}"));
            let x = c.aggregate().unwrap();
            assert!(grid_size(&x, c.agents.len(), &c.grid.config()) <= limits.max_points);
            assert!(x.values().iter().any(|v| *v != 0.0));
            assert_eq!(c, random_scenario(seed, &limits));
        }
    }
}
