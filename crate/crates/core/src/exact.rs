//! Exact finite-horizon checking by belief-tree dynamic programming.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use thiserror::Error;

use crate::alphabet::{Alphabet, Symbol, Word};
use crate::model::{Belief, History, Pomdp, TOL};
use crate::pctl::{BoundedUntilSpec, FormulaError};
use crate::supervisor::ZaDfa;

/// Belief-tree nodes visited before the DP gives up.
pub const NODE_LIMIT: usize = 2_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Max,
    Min,
}

#[derive(Debug, Error, PartialEq)]
pub enum CheckError {
    #[error("blocking: no enabled action after history {word} (depth {depth})")]
    Blocking { history: History, word: String, depth: usize },
    #[error("belief tree exceeds {0} nodes")]
    Resource(usize),
    #[error(transparent)]
    Formula(#[from] FormulaError),
}

/// Pure observation-based adversary on the histories it reaches.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Adversary {
    map: BTreeMap<History, usize>,
}

impl Adversary {
    pub fn insert(&mut self, h: History, a: usize) {
        self.map.insert(h, a);
    }

    pub fn get(&self, h: &History) -> Option<usize> {
        self.map.get(h).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&History, &usize)> {
        self.map.iter()
    }

    /// Every action of `w` is this adversary's choice on the matching history prefix.
    pub fn consistent_with(&self, w: &[Symbol], ab: &Alphabet) -> bool {
        let Some(&first) = w.first() else { return true };
        let mut h = History::new(ab.observation(first));
        for (i, &s) in w.iter().enumerate() {
            if i > 0 {
                h = h.extended(ab.action(w[i - 1]), ab.observation(s));
            }
            if self.get(&h) != Some(ab.action(s)) {
                return false;
            }
        }
        true
    }

    /// History-action strings of length at most `k`, shortest then lexicographic.
    pub fn strings(&self, ab: &Alphabet, k: usize) -> Vec<Word> {
        let mut out: Vec<Word> = self
            .map
            .iter()
            .filter(|(h, _)| h.depth() < k)
            .filter_map(|(h, &a)| {
                let z = h.last_observation()?;
                let mut w = h.word(ab);
                w.push(ab.symbol(z, a));
                Some(w)
            })
            .collect();
        out.sort_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)));
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckReport {
    pub satisfied: bool,
    pub p_c: f64,
    pub witness: Adversary,
}

/// A POMDP made absorbing for a spec, with the φ2 mask precomputed.
#[derive(Clone, Debug)]
pub struct Checker {
    pub model: Pomdp,
    pub phi2: Vec<bool>,
    pub spec: BoundedUntilSpec,
}

type Enabled<'a> = &'a dyn Fn(&History) -> Vec<usize>;

enum Aggregate {
    Opt(Mode),
    Uniform,
}

impl Checker {
    pub fn new(pomdp: &Pomdp, spec: &BoundedUntilSpec) -> Result<Self, FormulaError> {
        let model = pomdp.make_absorbing(&spec.phi1, &spec.phi2)?;
        let phi2 = model.mask(&spec.phi2)?;
        Ok(Checker { model, phi2, spec: spec.clone() })
    }

    pub fn alphabet(&self) -> Alphabet {
        self.model.alphabet()
    }

    fn phi2_mass(&self, mass: &[f64]) -> f64 {
        mass.iter().zip(&self.phi2).filter(|(_, &m)| m).map(|(p, _)| p).sum()
    }

    /// Initial observations with positive probability at s̄.
    pub fn root_branches(&self) -> Vec<usize> {
        let s0 = self.model.initial;
        (0..self.model.num_observations()).filter(|&z| self.model.observation[s0][z] > 0.0).collect()
    }

    /// Optimum over observation-based adversaries restricted to `enabled`.
    /// Each initial-observation branch has weight 1 and the root takes the
    /// worst branch (max) in both modes.
    pub fn optimal_value(&self, mode: Mode, enabled: Enabled) -> Result<(f64, Adversary), CheckError> {
        let mut choice = HashMap::new();
        let mut nodes = 0;
        let n = self.model.num_states();
        let mut best: Option<f64> = None;
        for z0 in self.root_branches() {
            let v = self.value(
                &History::new(z0),
                &Belief::dirac(n, self.model.initial),
                &Aggregate::Opt(mode),
                enabled,
                &mut choice,
                &mut nodes,
            )?;
            best = Some(best.map_or(v, |b: f64| b.max(v)));
        }
        let adv = self.reachable_adversary(&choice);
        Ok((best.unwrap_or(0.0), adv))
    }

    /// Expected value when every enabled action is picked uniformly at random
    /// and the first observation is drawn from O(s̄,·).
    pub fn uniform_value(&self, enabled: Enabled) -> Result<f64, CheckError> {
        let mut choice = HashMap::new();
        let mut nodes = 0;
        let n = self.model.num_states();
        let s0 = self.model.initial;
        let mut total = 0.0;
        for z0 in self.root_branches() {
            let v = self.value(
                &History::new(z0),
                &Belief::dirac(n, s0),
                &Aggregate::Uniform,
                enabled,
                &mut choice,
                &mut nodes,
            )?;
            total += self.model.observation[s0][z0] * v;
        }
        Ok(total)
    }

    fn value(
        &self,
        h: &History,
        b: &Belief,
        agg: &Aggregate,
        enabled: Enabled,
        choice: &mut HashMap<History, usize>,
        nodes: &mut usize,
    ) -> Result<f64, CheckError> {
        *nodes += 1;
        if *nodes > NODE_LIMIT {
            return Err(CheckError::Resource(NODE_LIMIT));
        }
        if h.depth() >= self.spec.k {
            return Ok(b.mass_on(&self.phi2));
        }
        let acts = enabled(h);
        if acts.is_empty() {
            let ab = self.alphabet();
            return Err(CheckError::Blocking {
                history: h.clone(),
                word: format!(
                    "{} then {}",
                    ab.format_word(&h.word(&ab)),
                    self.model.observations[h.last_observation().unwrap_or(0)]
                ),
                depth: h.depth(),
            });
        }
        let mut best: Option<(f64, usize)> = None;
        let mut sum = 0.0;
        for &a in &acts {
            let mut v = 0.0;
            for z in 0..self.model.num_observations() {
                let (b2, ev) = self.model.belief_update(b, a, z);
                if ev <= 0.0 {
                    continue;
                }
                v += ev * self.value(&h.extended(a, z), &b2, agg, enabled, choice, nodes)?;
            }
            sum += v;
            best = match (best, agg) {
                (None, _) => Some((v, a)),
                (Some((bv, _)), Aggregate::Opt(Mode::Max)) if v > bv + TOL => Some((v, a)),
                (Some((bv, _)), Aggregate::Opt(Mode::Min)) if v < bv - TOL => Some((v, a)),
                (keep, _) => keep,
            };
        }
        match agg {
            Aggregate::Uniform => Ok(sum / acts.len() as f64),
            Aggregate::Opt(_) => {
                let (v, a) = best.expect("non-empty action set");
                choice.insert(h.clone(), a);
                Ok(v)
            }
        }
    }

    /// Restricts a choice table to the histories it reaches itself.
    fn reachable_adversary(&self, choice: &HashMap<History, usize>) -> Adversary {
        let mut adv = Adversary::default();
        let n = self.model.num_states();
        let mut stack: Vec<(History, Belief)> = self
            .root_branches()
            .into_iter()
            .map(|z0| (History::new(z0), Belief::dirac(n, self.model.initial)))
            .collect();
        while let Some((h, b)) = stack.pop() {
            let Some(&a) = choice.get(&h) else { continue };
            adv.insert(h.clone(), a);
            for z in 0..self.model.num_observations() {
                let (b2, ev) = self.model.belief_update(&b, a, z);
                if ev > 0.0 {
                    stack.push((h.extended(a, z), b2));
                }
            }
        }
        adv
    }

    /// Violation mass of the single policy encoded by `y`, truncated to `k`
    /// symbols. Branches whose observation leaves `y` keep only the φ2 mass
    /// absorbed so far.
    pub fn policy_string_value(&self, y: &[Symbol]) -> f64 {
        let ab = self.alphabet();
        let y = &y[..y.len().min(self.spec.k)];
        let s0 = self.model.initial;
        let mut start = vec![0.0; self.model.num_states()];
        start[s0] = 1.0;
        let Some(&first) = y.first() else { return self.phi2_mass(&start) };
        if self.model.observation[s0][ab.observation(first)] <= 0.0 {
            return self.phi2_mass(&start);
        }
        let mut total = 0.0;
        let mut stack = vec![(start, 0usize)];
        while let Some((mass, i)) = stack.pop() {
            if i == y.len() {
                total += self.phi2_mass(&mass);
                continue;
            }
            let a = ab.action(y[i]);
            for z in 0..self.model.num_observations() {
                let next = self.model.propagate(&mass, a, z);
                if next.iter().all(|&p| p == 0.0) {
                    continue;
                }
                if i + 1 < y.len() && ab.observation(y[i + 1]) != z {
                    total += self.phi2_mass(&next);
                } else {
                    stack.push((next, i + 1));
                }
            }
        }
        total
    }

    pub fn check_supervisor(&self, dfa: &ZaDfa) -> Result<CheckReport, CheckError> {
        let (p_c, witness) = self.optimal_value(Mode::Max, &|h| dfa.enabled_actions(h))?;
        Ok(CheckReport { satisfied: self.spec.holds(p_c), p_c, witness })
    }

    /// History DTMC under `adv`. φ2 mass moves to the sink the first time it
    /// appears on a path; only the remaining mass continues.
    pub fn build_derived_dtmc(&self, adv: &Adversary) -> DerivedDtmc {
        let ab = self.alphabet();
        let n = self.model.num_states();
        let mut d = DerivedDtmc { nodes: Vec::new(), roots: Vec::new() };
        for z0 in self.root_branches() {
            let mut start = vec![0.0; n];
            start[self.model.initial] = 1.0;
            let root = self.derived_node(&mut d, History::new(z0), start, &ab, adv);
            d.roots.push(root);
        }
        d
    }

    fn derived_node(
        &self,
        d: &mut DerivedDtmc,
        h: History,
        mass: Vec<f64>,
        ab: &Alphabet,
        adv: &Adversary,
    ) -> usize {
        let total: f64 = mass.iter().sum();
        let exit = self.phi2_mass(&mass);
        let belief = Belief { probs: mass.iter().map(|p| p / total).collect() };
        let idx = d.nodes.len();
        d.nodes.push(DerivedNode { history: h.clone(), belief, exit: exit / total, children: Vec::new() });
        if h.depth() >= self.spec.k {
            return idx;
        }
        let rest: Vec<f64> = mass.iter().zip(&self.phi2).map(|(&p, &f)| if f { 0.0 } else { p }).collect();
        if rest.iter().all(|&p| p == 0.0) {
            return idx;
        }
        let Some(a) = adv.get(&h) else { return idx };
        let z = h.last_observation().expect("rooted history");
        let symbol = ab.symbol(z, a);
        for z2 in 0..self.model.num_observations() {
            let next = self.model.propagate(&rest, a, z2);
            let child_mass: f64 = next.iter().sum();
            if child_mass <= 0.0 {
                continue;
            }
            let c = self.derived_node(d, h.extended(a, z2), next, ab, adv);
            d.nodes[idx].children.push(DerivedEdge { target: c, symbol, weight: child_mass / total });
        }
        idx
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DerivedEdge {
    pub target: usize,
    pub symbol: Symbol,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DerivedNode {
    pub history: History,
    /// Normalized belief over the mass that has not yet exited.
    pub belief: Belief,
    /// Weight of the edge to the sink h_d.
    pub exit: f64,
    pub children: Vec<DerivedEdge>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DerivedDtmc {
    pub nodes: Vec<DerivedNode>,
    /// One root per initial observation, each with weight 1.
    pub roots: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evidence {
    pub word: Word,
    pub mass: f64,
}

#[derive(Debug)]
struct Frontier {
    key: i64,
    mass: f64,
    word: Word,
    node: Option<usize>,
}

impl PartialEq for Frontier {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Frontier {}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Frontier {
    // max-heap: larger mass first, then the lexicographically smaller word;
    // a finished path beats a partial one with the same word
    fn cmp(&self, other: &Self) -> Ordering {
        self.key
            .cmp(&other.key)
            .then_with(|| other.word.cmp(&self.word))
            .then_with(|| other.node.is_some().cmp(&self.node.is_some()))
    }
}

fn quantize(mass: f64) -> i64 {
    (mass * 1e12).round() as i64
}

/// Root-to-sink paths in non-increasing mass order.
pub struct EvidencePaths<'a> {
    dtmc: &'a DerivedDtmc,
    heap: BinaryHeap<Frontier>,
}

impl DerivedDtmc {
    pub fn paths(&self) -> EvidencePaths<'_> {
        let heap = self
            .roots
            .iter()
            .map(|&r| Frontier { key: quantize(1.0), mass: 1.0, word: Vec::new(), node: Some(r) })
            .collect();
        EvidencePaths { dtmc: self, heap }
    }

    /// Total mass reaching the sink from one root.
    pub fn sink_mass(&self, root: usize) -> f64 {
        let node = &self.nodes[root];
        node.exit + node.children.iter().map(|e| e.weight * self.sink_mass(e.target)).sum::<f64>()
    }
}

impl Iterator for EvidencePaths<'_> {
    type Item = Evidence;

    fn next(&mut self) -> Option<Evidence> {
        while let Some(f) = self.heap.pop() {
            let Some(i) = f.node else {
                return Some(Evidence { word: f.word, mass: f.mass });
            };
            let node = &self.dtmc.nodes[i];
            if node.exit > 0.0 {
                let mass = f.mass * node.exit;
                self.heap.push(Frontier { key: quantize(mass), mass, word: f.word.clone(), node: None });
            }
            for e in &node.children {
                let mass = f.mass * e.weight;
                let mut word = f.word.clone();
                word.push(e.symbol);
                self.heap.push(Frontier { key: quantize(mass), mass, word, node: Some(e.target) });
            }
        }
        None
    }
}

/// Most probable violating path whose string is not skipped.
pub fn strongest_evidence(d: &DerivedDtmc, skip: &dyn Fn(&[Symbol]) -> bool) -> Option<Evidence> {
    d.paths().find(|e| !skip(&e.word))
}

pub fn optimal_value(
    pomdp: &Pomdp,
    spec: &BoundedUntilSpec,
    mode: Mode,
    enabled: Enabled,
) -> Result<(f64, Adversary), CheckError> {
    Checker::new(pomdp, spec)?.optimal_value(mode, enabled)
}

pub fn policy_string_value(pomdp: &Pomdp, spec: &BoundedUntilSpec, y: &[Symbol]) -> Result<f64, FormulaError> {
    Ok(Checker::new(pomdp, spec)?.policy_string_value(y))
}

pub fn check_supervisor(pomdp: &Pomdp, dfa: &ZaDfa, spec: &BoundedUntilSpec) -> Result<CheckReport, CheckError> {
    Checker::new(pomdp, spec)?.check_supervisor(dfa)
}

pub fn build_derived_dtmc(pomdp: &Pomdp, spec: &BoundedUntilSpec, adv: &Adversary) -> Result<DerivedDtmc, FormulaError> {
    Ok(Checker::new(pomdp, spec)?.build_derived_dtmc(adv))
}
