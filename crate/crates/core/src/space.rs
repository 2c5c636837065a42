//! Finite probability spaces, random variables and endowments.
//!
//! States with zero reference probability are rejected when a space is
//! built, so "almost surely" and "in every state" coincide inside the engine.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the total mass of a probability vector.
pub const PROB_SUM_TOL: f64 = 1e-12;

/// A finite state space with a full-support reference probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpace {
    states: Vec<String>,
    probs: Vec<f64>,
}

impl StateSpace {
    pub fn new(states: Vec<String>, probs: Vec<f64>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::Validation("state space is empty".into()));
        }
        if states.len() != probs.len() {
            return Err(Error::Structure(format!(
                "{} states but {} probabilities",
                states.len(),
                probs.len()
            )));
        }
        check_probability_vector(&probs, "reference probability")?;
        Ok(Self { states, probs })
    }

    /// Space with states named `s0, s1, ...`.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        let states = (0..probs.len()).map(|i| format!("s{i}")).collect();
        Self::new(states, probs)
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, state: usize) -> f64 {
        self.probs[state]
    }

    pub fn expectation(&self, rv: &[f64]) -> f64 {
        rv.iter().zip(&self.probs).map(|(x, p)| x * p).sum()
    }
}

/// Checks that `probs` is strictly positive, finite and sums to one.
pub fn check_probability_vector(probs: &[f64], what: &str) -> Result<()> {
    for (i, &p) in probs.iter().enumerate() {
        if !p.is_finite() {
            return Err(Error::NonFinite(format!("{what}: entry {i} is {p}")));
        }
        if p <= 0.0 {
            return Err(Error::Validation(format!(
                "{what}: entry {i} is {p}, expected strictly positive"
            )));
        }
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > PROB_SUM_TOL {
        return Err(Error::Validation(format!(
            "{what}: entries sum to {total}, expected 1"
        )));
    }
    Ok(())
}

/// A real-valued random variable on a finite space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RandomVariable {
    values: Vec<f64>,
}

impl RandomVariable {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "random variable entry {i} is {v}"
            )));
        }
        Ok(Self { values })
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![0.0; len],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, state: usize) -> f64 {
        self.values[state]
    }

    /// Distinct nonzero values, ascending.
    pub fn nonzero_levels(&self) -> Vec<f64> {
        let mut levels: Vec<f64> = self.values.iter().copied().filter(|v| *v != 0.0).collect();
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        levels
    }
}

/// Initial risk positions of `n >= 2` agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndowmentProfile {
    endowments: Vec<RandomVariable>,
}

impl EndowmentProfile {
    pub fn new(endowments: Vec<RandomVariable>) -> Result<Self> {
        if endowments.len() < 2 {
            return Err(Error::Validation(format!(
                "need at least 2 agents, got {}",
                endowments.len()
            )));
        }
        Ok(Self { endowments })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let endowments = rows
            .into_iter()
            .map(RandomVariable::new)
            .collect::<Result<Vec<_>>>()?;
        Self::new(endowments)
    }

    pub fn agents(&self) -> usize {
        self.endowments.len()
    }

    pub fn endowments(&self) -> &[RandomVariable] {
        &self.endowments
    }
}

/// Total risk `X = sum_i X_i`.
pub fn aggregate_risk(profile: &EndowmentProfile) -> Result<RandomVariable> {
    let width = profile.endowments[0].len();
    let mut total = vec![0.0; width];
    for (agent, rv) in profile.endowments.iter().enumerate() {
        if rv.len() != width {
            return Err(Error::Structure(format!(
                "agent {agent} has {} states, agent 0 has {width}",
                rv.len()
            )));
        }
        for (t, v) in total.iter_mut().zip(rv.values()) {
            *t += v;
        }
    }
    Ok(RandomVariable { values: total })
}

/// State indices split by the sign of the aggregate risk.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SignPartition {
    pub positive: Vec<usize>,
    pub negative: Vec<usize>,
    pub zero: Vec<usize>,
}

impl SignPartition {
    /// States carrying decision variables, in index order.
    pub fn nonzero(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .positive
            .iter()
            .chain(&self.negative)
            .copied()
            .collect();
        out.sort_unstable();
        out
    }
}

/// Exact sign read of `x`; zero means exactly `0.0`.
pub fn sign_partition(x: &RandomVariable) -> SignPartition {
    let mut part = SignPartition::default();
    for (i, &v) in x.values().iter().enumerate() {
        if v > 0.0 {
            part.positive.push(i);
        } else if v < 0.0 {
            part.negative.push(i);
        } else {
            part.zero.push(i);
        }
    }
    part
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hurricane_aggregate_takes_four_levels() {
        let l = 1.0;
        // states enumerate hit patterns of three farmers
        let mut rows = vec![Vec::new(); 3];
        for pattern in 0..8u32 {
            for (farmer, row) in rows.iter_mut().enumerate() {
                let hit = pattern >> farmer & 1 == 1;
                row.push(if hit { -l } else { 0.0 });
            }
        }
        let profile = EndowmentProfile::from_rows(rows).unwrap();
        let x = aggregate_risk(&profile).unwrap();
        let levels: Vec<f64> = {
            let mut v = x.values().to_vec();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        assert_eq!(levels, vec![-3.0 * l, -2.0 * l, -l, 0.0]);
    }

    #[test]
    fn aggregate_of_zero_and_small_case() {
        let zero = EndowmentProfile::from_rows(vec![vec![0.0; 3], vec![0.0; 3]]).unwrap();
        assert_eq!(aggregate_risk(&zero).unwrap().values(), &[0.0, 0.0, 0.0]);

        let p = EndowmentProfile::from_rows(vec![vec![1.0, -2.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(aggregate_risk(&p).unwrap().values(), &[1.0, -1.0]);
    }

    #[test]
    fn mismatched_rows_are_structural_errors() {
        let p = EndowmentProfile::from_rows(vec![vec![1.0, 2.0], vec![1.0]]).unwrap();
        assert!(matches!(aggregate_risk(&p), Err(Error::Structure(_))));
    }

    #[test]
    fn single_agent_rejected() {
        assert!(EndowmentProfile::from_rows(vec![vec![1.0]]).is_err());
    }

    #[test]
    fn sign_partition_cases() {
        let x = RandomVariable::new(vec![1.0, -1.0, 0.0]).unwrap();
        let p = sign_partition(&x);
        assert_eq!(
            (p.positive, p.negative, p.zero),
            (vec![0], vec![1], vec![2])
        );

        let p = sign_partition(&RandomVariable::zeros(3));
        assert!(p.positive.is_empty() && p.negative.is_empty());
        assert_eq!(p.zero, vec![0, 1, 2]);

        let p = sign_partition(&RandomVariable::new(vec![-3.0, -1.0]).unwrap());
        assert_eq!(p.negative, vec![0, 1]);
        assert!(p.positive.is_empty() && p.zero.is_empty());
    }

    #[test]
    fn zero_probability_states_rejected() {
        assert!(StateSpace::from_probs(vec![0.5, 0.5, 0.0]).is_err());
        assert!(StateSpace::from_probs(vec![0.5, 0.4]).is_err());
        assert!(StateSpace::from_probs(vec![0.25; 4]).is_ok());
    }

    proptest! {
        #[test]
        fn aggregate_is_linear(
            a in proptest::collection::vec(-8i32..8, 6),
            b in proptest::collection::vec(-8i32..8, 6),
        ) {
            // small integers keep float sums exact
            let rows = |v: &[i32]| vec![
                v[..3].iter().map(|&x| x as f64).collect::<Vec<_>>(),
                v[3..].iter().map(|&x| x as f64).collect::<Vec<_>>(),
            ];
            let sum: Vec<i32> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            let xa = aggregate_risk(&EndowmentProfile::from_rows(rows(&a)).unwrap()).unwrap();
            let xb = aggregate_risk(&EndowmentProfile::from_rows(rows(&b)).unwrap()).unwrap();
            let xs = aggregate_risk(&EndowmentProfile::from_rows(rows(&sum)).unwrap()).unwrap();
            for s in 0..3 {
                prop_assert_eq!(xs.get(s), xa.get(s) + xb.get(s));
            }
        }

        #[test]
        fn sign_partition_is_exhaustive(v in proptest::collection::vec(-3i32..4, 1..10)) {
            let x = RandomVariable::new(v.iter().map(|&x| x as f64).collect()).unwrap();
            let p = sign_partition(&x);
            let mut all: Vec<usize> = p.positive.iter().chain(&p.negative).chain(&p.zero).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..v.len()).collect::<Vec<_>>());
        }
    }
}
