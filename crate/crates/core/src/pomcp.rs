//! Monte-Carlo tree search estimate of the extreme violation probability
//! under a supervisor.

use std::collections::HashMap;
use std::io::Write;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::exact::{Adversary, CheckError, Checker, Mode};
use crate::model::{Belief, History};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rollout {
    /// Uniform over enabled actions.
    Uniform,
    /// Always the lowest enabled action.
    Lowest,
}

#[derive(Clone, Debug)]
pub struct PomcpConfig {
    pub n_simulations: usize,
    pub ucb_c: f64,
    pub seed: u64,
    pub rollout: Rollout,
    pub n_init: u64,
    pub v_init: f64,
    /// Record the running root estimate every this many simulations.
    pub record_every: Option<usize>,
}

impl Default for PomcpConfig {
    fn default() -> Self {
        PomcpConfig {
            n_simulations: 100_000,
            ucb_c: 1.0,
            seed: 0,
            rollout: Rollout::Uniform,
            n_init: 0,
            v_init: 0.0,
            record_every: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActionStat {
    pub action: usize,
    pub visits: u64,
    pub value: f64,
}

#[derive(Clone, Debug)]
pub struct SearchNode {
    pub history: History,
    pub visits: u64,
    pub actions: Vec<ActionStat>,
    /// Particle counts per state.
    pub particles: Vec<u64>,
    children: HashMap<(usize, usize), usize>,
    returns: f64,
    returned: u64,
}

impl SearchNode {
    /// Greedy action and its value; ties go to the lowest action.
    pub fn best(&self) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for st in self.actions.iter().filter(|st| st.visits > 0) {
            if best.is_none_or(|(_, v)| st.value > v) {
                best = Some((st.action, st.value));
            }
        }
        best
    }

    fn estimate(&self) -> f64 {
        match self.best() {
            Some((_, v)) => v,
            None if self.returned > 0 => self.returns / self.returned as f64,
            None => 0.0,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct SearchTree {
    pub nodes: Vec<SearchNode>,
    /// Node of each initial observation.
    pub roots: HashMap<usize, usize>,
    /// Simulations that sampled each initial observation.
    pub root_visits: Vec<u64>,
}

#[derive(Clone, Debug)]
pub struct PomcpResult {
    pub p_hat: f64,
    /// Greedy action at every tree node with visited actions.
    pub policy: Adversary,
    pub tree: SearchTree,
    pub convergence: Vec<(usize, f64)>,
}

impl PomcpResult {
    /// CSV of `(simulation, estimate)` pairs.
    pub fn write_convergence_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "simulation,estimate")?;
        for (i, v) in &self.convergence {
            writeln!(w, "{},{}", i, v)?;
        }
        Ok(())
    }
}

struct Search<'a> {
    checker: &'a Checker,
    enabled: &'a dyn Fn(&History) -> Vec<usize>,
    cfg: &'a PomcpConfig,
    sign: f64,
    rng: ChaCha8Rng,
    tree: SearchTree,
}

fn sample(weights: impl IntoIterator<Item = f64>, rng: &mut ChaCha8Rng) -> usize {
    WeightedIndex::new(weights).expect("distribution with positive mass").sample(rng)
}

impl Search<'_> {
    fn leaf(&self, b: &Belief) -> f64 {
        self.sign * b.mass_on(&self.checker.phi2)
    }

    fn blocking(&self, h: &History) -> CheckError {
        let ab = self.checker.alphabet();
        CheckError::Blocking {
            history: h.clone(),
            word: ab.format_word(&h.word(&ab)),
            depth: h.depth(),
        }
    }

    fn new_node(&mut self, h: History) -> Result<usize, CheckError> {
        let acts = (self.enabled)(&h);
        if acts.is_empty() {
            return Err(self.blocking(&h));
        }
        self.tree.nodes.push(SearchNode {
            history: h,
            visits: 0,
            actions: acts
                .into_iter()
                .map(|action| ActionStat { action, visits: self.cfg.n_init, value: self.cfg.v_init })
                .collect(),
            particles: vec![0; self.checker.model.num_states()],
            children: HashMap::new(),
            returns: 0.0,
            returned: 0,
        });
        Ok(self.tree.nodes.len() - 1)
    }

    fn step(&mut self, s: usize, a: usize) -> (usize, usize) {
        let m = &self.checker.model;
        let succ = m.successors(s, a);
        let s2 = succ[sample(succ.iter().map(|&(_, p)| p), &mut self.rng)].0;
        let z = sample(m.observation[s2].iter().copied(), &mut self.rng);
        (s2, z)
    }

    fn rollout(&mut self, mut s: usize, mut h: History, mut b: Belief) -> Result<f64, CheckError> {
        while h.depth() < self.checker.spec.k {
            let acts = (self.enabled)(&h);
            if acts.is_empty() {
                return Err(self.blocking(&h));
            }
            let a = match self.cfg.rollout {
                Rollout::Uniform => acts[self.rng.gen_range(0..acts.len())],
                Rollout::Lowest => acts[0],
            };
            let (s2, z) = self.step(s, a);
            b = self.checker.model.belief_update(&b, a, z).0;
            s = s2;
            h = h.extended(a, z);
        }
        Ok(self.leaf(&b))
    }

    fn select(&self, node: usize) -> usize {
        let n = &self.tree.nodes[node];
        let log_n = (n.visits.max(1) as f64).ln();
        let mut best = (0, f64::NEG_INFINITY);
        for (i, st) in n.actions.iter().enumerate() {
            let score = if st.visits == 0 {
                f64::INFINITY
            } else {
                st.value + self.cfg.ucb_c * (log_n / st.visits as f64).sqrt()
            };
            if score > best.1 {
                best = (i, score);
            }
        }
        best.0
    }

    fn simulate(&mut self, s: usize, node: usize, b: &Belief) -> Result<f64, CheckError> {
        let depth = self.tree.nodes[node].history.depth();
        if depth > self.checker.spec.k {
            return Ok(0.0);
        }
        if depth == self.checker.spec.k {
            return Ok(self.leaf(b));
        }
        let i = self.select(node);
        let a = self.tree.nodes[node].actions[i].action;
        let (s2, z) = self.step(s, a);
        let b2 = self.checker.model.belief_update(b, a, z).0;
        let child = self.tree.nodes[node].children.get(&(a, z)).copied();
        let r = match child {
            Some(c) => self.simulate(s2, c, &b2)?,
            None => {
                let h2 = self.tree.nodes[node].history.extended(a, z);
                if h2.depth() >= self.checker.spec.k {
                    self.leaf(&b2)
                } else {
                    let c = self.new_node(h2.clone())?;
                    self.tree.nodes[node].children.insert((a, z), c);
                    self.tree.nodes[c].particles[s2] += 1;
                    let r = self.rollout(s2, h2, b2)?;
                    self.tree.nodes[c].returns += r;
                    self.tree.nodes[c].returned += 1;
                    r
                }
            }
        };
        let n = &mut self.tree.nodes[node];
        n.particles[s] += 1;
        n.visits += 1;
        n.returns += r;
        n.returned += 1;
        let st = &mut n.actions[i];
        st.visits += 1;
        st.value += (r - st.value) / st.visits as f64;
        Ok(r)
    }

    fn episode(&mut self) -> Result<(), CheckError> {
        let m = &self.checker.model;
        let s0 = m.initial;
        let z0 = sample(m.observation[s0].iter().copied(), &mut self.rng);
        self.tree.root_visits[z0] += 1;
        let b = Belief::dirac(m.num_states(), s0);
        match self.tree.roots.get(&z0).copied() {
            Some(node) => {
                self.simulate(s0, node, &b)?;
            }
            None => {
                let node = self.new_node(History::new(z0))?;
                self.tree.roots.insert(z0, node);
                self.tree.nodes[node].particles[s0] += 1;
                let r = self.rollout(s0, History::new(z0), b)?;
                self.tree.nodes[node].returns += r;
                self.tree.nodes[node].returned += 1;
            }
        }
        Ok(())
    }

    fn root_value(&self, done: usize) -> f64 {
        let mut v = 0.0;
        for (&z0, &node) in &self.tree.roots {
            v += self.tree.root_visits[z0] as f64 / done as f64 * self.tree.nodes[node].estimate();
        }
        self.sign * v
    }
}

fn run(
    checker: &Checker,
    enabled: &dyn Fn(&History) -> Vec<usize>,
    cfg: &PomcpConfig,
    mode: Mode,
) -> Result<PomcpResult, CheckError> {
    let sign = if mode == Mode::Max { 1.0 } else { -1.0 };
    let mut search = Search {
        checker,
        enabled,
        cfg,
        sign,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        tree: SearchTree {
            root_visits: vec![0; checker.model.num_observations()],
            ..SearchTree::default()
        },
    };
    if checker.spec.k == 0 {
        let b = Belief::dirac(checker.model.num_states(), checker.model.initial);
        return Ok(PomcpResult {
            p_hat: b.mass_on(&checker.phi2),
            policy: Adversary::default(),
            tree: search.tree,
            convergence: Vec::new(),
        });
    }
    let mut convergence = Vec::new();
    for i in 1..=cfg.n_simulations.max(1) {
        search.episode()?;
        if cfg.record_every.is_some_and(|every| every > 0 && i % every == 0) {
            convergence.push((i, search.root_value(i)));
        }
    }
    let p_hat = search.root_value(cfg.n_simulations.max(1));
    let mut policy = Adversary::default();
    for node in &search.tree.nodes {
        if let Some((a, _)) = node.best() {
            policy.insert(node.history.clone(), a);
        }
    }
    Ok(PomcpResult { p_hat, policy, tree: search.tree, convergence })
}

/// Estimated maximum violation probability under `enabled`.
pub fn estimate_max(
    checker: &Checker,
    enabled: &dyn Fn(&History) -> Vec<usize>,
    cfg: &PomcpConfig,
) -> Result<PomcpResult, CheckError> {
    run(checker, enabled, cfg, Mode::Max)
}

/// Estimated minimum, searching on negated leaf rewards.
pub fn estimate_min(
    checker: &Checker,
    enabled: &dyn Fn(&History) -> Vec<usize>,
    cfg: &PomcpConfig,
) -> Result<PomcpResult, CheckError> {
    run(checker, enabled, cfg, Mode::Min)
}
