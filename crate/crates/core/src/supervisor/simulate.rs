//! Regulated simulation runs.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use super::ZaDfa;
use crate::model::{History, Pomdp};
use crate::pctl::{BoundedUntilSpec, FormulaError};

#[derive(Debug, Error, PartialEq)]
pub enum SimulationError {
    #[error("no enabled action at step {step} after history {history}")]
    Blocking { step: usize, history: String },
}

/// `states[i]`, `observations[i]` for i in 0..=k; `actions[i]` for i in 0..k.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trace {
    pub states: Vec<usize>,
    pub observations: Vec<usize>,
    pub actions: Vec<usize>,
}

impl Trace {
    pub fn history(&self) -> History {
        History {
            initial_observation: Some(self.observations[0]),
            steps: self.actions.iter().copied().zip(self.observations[1..].iter().copied()).collect(),
        }
    }

    /// Whether the state sequence satisfies `phi1 U<=k phi2`.
    pub fn satisfies(&self, pomdp: &Pomdp, spec: &BoundedUntilSpec) -> Result<bool, FormulaError> {
        for &s in self.states.iter().take(spec.k + 1) {
            if pomdp.satisfies(s, &spec.phi2)? {
                return Ok(true);
            }
            if !pomdp.satisfies(s, &spec.phi1)? {
                return Ok(false);
            }
        }
        Ok(false)
    }
}

fn sample(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    WeightedIndex::new(weights).expect("distribution with positive mass").sample(rng)
}

/// One run with uniform choice among enabled actions.
pub fn simulate(pomdp: &Pomdp, dfa: &ZaDfa, k: usize, seed: u64) -> Result<Trace, SimulationError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_with(pomdp, dfa, k, &mut rng, &mut |_, enabled, rng| enabled[rng.gen_range(0..enabled.len())])
}

/// One run; `pick` resolves the permissive choice among enabled actions.
pub fn simulate_with(
    pomdp: &Pomdp,
    dfa: &ZaDfa,
    k: usize,
    rng: &mut ChaCha8Rng,
    pick: &mut dyn FnMut(&History, &[usize], &mut ChaCha8Rng) -> usize,
) -> Result<Trace, SimulationError> {
    let mut s = pomdp.initial;
    let z0 = sample(&pomdp.observation[s], rng);
    let mut trace = Trace { states: vec![s], observations: vec![z0], actions: Vec::new() };
    let mut h = History::new(z0);
    for step in 0..k {
        let enabled = dfa.enabled_actions(&h);
        if enabled.is_empty() {
            return Err(SimulationError::Blocking {
                step,
                history: dfa.alphabet.format_word(&h.word(&dfa.alphabet))
                    + &format!(" then {}", pomdp.observations[h.last_observation().unwrap_or(0)]),
            });
        }
        let a = pick(&h, &enabled, rng);
        let succ = pomdp.successors(s, a);
        let weights: Vec<f64> = succ.iter().map(|&(_, p)| p).collect();
        s = succ[sample(&weights, rng)].0;
        let z = sample(&pomdp.observation[s], rng);
        trace.states.push(s);
        trace.observations.push(z);
        trace.actions.push(a);
        h = h.extended(a, z);
    }
    Ok(trace)
}
