//! za-DFA supervisors: construction, routing, and language queries.

mod dot;
mod product;
mod simulate;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

pub use dot::{DotOptions, ToDot};
pub use product::{dark_state_pruning, nonblocking_check, product, BlockedReport, ProductEdge, ProductMdp, ProductState};
pub use simulate::{simulate, simulate_with, SimulationError, Trace};

use crate::alphabet::{Alphabet, Symbol, Word};
use crate::exact::Adversary;
use crate::model::History;

#[derive(Debug, Error, PartialEq)]
pub enum SupervisorError {
    #[error("supervisor alphabet does not match the model (expected {expected}, found {found})")]
    AlphabetMismatch { expected: String, found: String },
    #[error("a policy string must be non-empty")]
    EmptyPolicy,
}

/// Deterministic automaton over Σ = Z×A. Missing transitions and
/// transitions into rejecting states both mean "disabled".
#[derive(Clone, Debug, PartialEq)]
pub struct ZaDfa {
    pub alphabet: Alphabet,
    pub initial: usize,
    pub accepting: Vec<bool>,
    /// `delta[q][symbol]`.
    pub delta: Vec<Vec<Option<usize>>>,
}

impl ZaDfa {
    /// `n` states, no transitions, all accepting.
    pub fn with_states(alphabet: Alphabet, n: usize) -> Self {
        let width = alphabet.len();
        ZaDfa {
            alphabet,
            initial: 0,
            accepting: vec![true; n],
            delta: vec![vec![None; width]; n],
        }
    }

    pub fn num_states(&self) -> usize {
        self.accepting.len()
    }

    /// One accepting state with a self-loop on every symbol.
    pub fn trivial_full(alphabet: Alphabet) -> Self {
        let mut d = ZaDfa::with_states(alphabet, 1);
        for s in d.alphabet.symbols().collect::<Vec<_>>() {
            d.delta[0][s.0] = Some(0);
        }
        d
    }

    /// Accepts only ε.
    pub fn empty(alphabet: Alphabet) -> Self {
        ZaDfa::with_states(alphabet, 1)
    }

    /// Chain automaton accepting exactly the prefixes of `y`.
    pub fn from_policy_string(alphabet: Alphabet, y: &[Symbol]) -> Result<Self, SupervisorError> {
        if y.is_empty() {
            return Err(SupervisorError::EmptyPolicy);
        }
        let mut d = ZaDfa::with_states(alphabet, y.len() + 1);
        for (i, s) in y.iter().enumerate() {
            d.delta[i][s.0] = Some(i + 1);
        }
        Ok(d)
    }

    pub fn set(&mut self, q: usize, s: Symbol, to: usize) {
        self.delta[q][s.0] = Some(to);
    }

    /// Effective step: defined and landing in an accepting state.
    pub fn step(&self, q: usize, s: Symbol) -> Option<usize> {
        self.delta[q][s.0].filter(|&t| self.accepting[t])
    }

    /// State reached through accepting states only.
    pub fn run(&self, w: &[Symbol]) -> Option<usize> {
        if !self.accepting[self.initial] {
            return None;
        }
        w.iter().try_fold(self.initial, |q, &s| self.step(q, s))
    }

    pub fn accepts(&self, w: &[Symbol]) -> bool {
        self.run(w).is_some()
    }

    /// Actions enabled after history `h`; empty if `h` is not accepted.
    pub fn enabled_actions(&self, h: &History) -> Vec<usize> {
        let Some(z) = h.last_observation() else { return Vec::new() };
        let Some(q) = self.run(&h.word(&self.alphabet)) else { return Vec::new() };
        (0..self.alphabet.actions.len())
            .filter(|&a| self.step(q, self.alphabet.symbol(z, a)).is_some())
            .collect()
    }

    /// Accepted words of length at most `k`, shortest first then lexicographic.
    pub fn language_up_to(&self, k: usize) -> Vec<Word> {
        let mut out = Vec::new();
        let Some(q0) = self.run(&[]) else { return out };
        let mut layer = vec![(Vec::new(), q0)];
        for depth in 0..=k {
            out.extend(layer.iter().map(|(w, _)| w.clone()));
            if depth == k || layer.is_empty() {
                break;
            }
            layer = layer
                .iter()
                .flat_map(|(w, q)| {
                    self.alphabet.symbols().filter_map(move |s| {
                        self.step(*q, s).map(|t| {
                            let mut w2 = w.clone();
                            w2.push(s);
                            (w2, t)
                        })
                    })
                })
                .collect();
        }
        out
    }

    pub fn equivalent_up_to(&self, other: &ZaDfa, k: usize) -> bool {
        self.language_up_to(k) == other.language_up_to(k)
    }

    /// Drops rejecting states; the accepted language is unchanged.
    pub fn prune_rejecting(&self) -> ZaDfa {
        if !self.accepting[self.initial] {
            return ZaDfa::with_states(self.alphabet.clone(), 1).into_rejecting();
        }
        let mut map = vec![None; self.num_states()];
        let mut next = 0;
        for (slot, &acc) in map.iter_mut().zip(&self.accepting) {
            if acc {
                *slot = Some(next);
                next += 1;
            }
        }
        let mut d = ZaDfa::with_states(self.alphabet.clone(), next);
        d.initial = map[self.initial].unwrap_or(0);
        for q in 0..self.num_states() {
            let Some(nq) = map[q] else { continue };
            for s in self.alphabet.symbols() {
                if let Some(t) = self.step(q, s) {
                    d.delta[nq][s.0] = map[t];
                }
            }
        }
        d
    }

    fn into_rejecting(mut self) -> ZaDfa {
        self.accepting = vec![false; self.num_states()];
        self
    }
}

/// Tree-shaped automaton of an adversary's history-action strings up to
/// length `k`, with equal subtrees shared.
pub fn adversary_to_dfa(adv: &Adversary, alphabet: &Alphabet, k: usize) -> ZaDfa {
    // trie over words
    let mut children: Vec<BTreeMap<Symbol, usize>> = vec![BTreeMap::new()];
    for (h, &a) in adv.iter() {
        if h.depth() + 1 > k {
            continue;
        }
        let Some(z) = h.last_observation() else { continue };
        let mut w = h.word(alphabet);
        w.push(alphabet.symbol(z, a));
        let mut node = 0;
        for s in w {
            node = match children[node].get(&s) {
                Some(&c) => c,
                None => {
                    children.push(BTreeMap::new());
                    let c = children.len() - 1;
                    children[node].insert(s, c);
                    c
                }
            };
        }
    }
    // share equal subtrees: children are created after parents, so walk backwards
    let mut class_of = vec![0usize; children.len()];
    let mut classes: BTreeMap<Vec<(Symbol, usize)>, usize> = BTreeMap::new();
    for node in (0..children.len()).rev() {
        let sig: Vec<(Symbol, usize)> = children[node].iter().map(|(&s, &c)| (s, class_of[c])).collect();
        let next = classes.len();
        class_of[node] = *classes.entry(sig).or_insert(next);
    }
    // renumber so the root is state 0 and states appear in breadth-first order
    let mut order: Vec<usize> = Vec::new();
    let mut index: BTreeMap<usize, usize> = BTreeMap::new();
    let mut queue = std::collections::VecDeque::from([0usize]);
    let mut seen = BTreeSet::new();
    while let Some(node) = queue.pop_front() {
        let c = class_of[node];
        if !seen.insert(c) {
            continue;
        }
        index.insert(c, order.len());
        order.push(node);
        queue.extend(children[node].values().copied());
    }
    let mut d = ZaDfa::with_states(alphabet.clone(), order.len());
    for (q, &node) in order.iter().enumerate() {
        for (&s, &c) in &children[node] {
            d.delta[q][s.0] = Some(index[&class_of[c]]);
        }
    }
    d
}
