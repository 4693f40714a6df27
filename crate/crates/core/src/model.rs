//! POMDP/DTMC data model, beliefs, histories, and path probabilities.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::alphabet::{Alphabet, Symbol, Word};
use crate::pctl::{FormulaError, StateFormula};

pub const TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("duplicate {kind} id `{id}`")]
    DuplicateId { kind: &'static str, id: String },
    #[error("unknown {kind} `{id}`")]
    UnknownId { kind: &'static str, id: String },
    #[error("{0}")]
    Shape(String),
    #[error(transparent)]
    Formula(#[from] FormulaError),
}

/// One broken invariant, with the offending row and its residual.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    TransitionRowSum { state: String, action: String, sum: f64 },
    TransitionEntry { state: String, action: String, target: String, value: f64 },
    ObservationRowSum { state: String, sum: f64 },
    ObservationEntry { state: String, observation: String, value: f64 },
    UndeclaredProposition { state: String, proposition: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TransitionRowSum { state, action, sum } => {
                write!(f, "T row ({},{}) sums to {}", state, action, round_for_display(*sum))
            }
            Violation::TransitionEntry { state, action, target, value } => {
                write!(f, "T({},{},{}) = {} is outside [0,1]", state, action, target, value)
            }
            Violation::ObservationRowSum { state, sum } => {
                write!(f, "O row {} sums to {}", state, round_for_display(*sum))
            }
            Violation::ObservationEntry { state, observation, value } => {
                write!(f, "O({},{}) = {} is outside [0,1]", state, observation, value)
            }
            Violation::UndeclaredProposition { state, proposition } => {
                write!(f, "label `{}` on {} is not a declared proposition", proposition, state)
            }
        }
    }
}

fn round_for_display(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

/// A finite POMDP with dense kernels. A missing transition row means the
/// action is undefined at that state; taking it leaves the state unchanged.
#[derive(Clone, Debug, PartialEq)]
pub struct Pomdp {
    pub states: Vec<String>,
    pub initial: usize,
    pub actions: Vec<String>,
    pub observations: Vec<String>,
    /// `transition[s][a]`, a distribution over states when defined.
    pub transition: Vec<Vec<Option<Vec<f64>>>>,
    /// `observation[s][z]`.
    pub observation: Vec<Vec<f64>>,
    pub labels: Vec<BTreeSet<String>>,
    pub propositions: BTreeSet<String>,
}

impl Pomdp {
    /// Checks dimensions and ids; numeric invariants are left to [`Pomdp::validate`].
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        states: Vec<String>,
        initial: usize,
        actions: Vec<String>,
        observations: Vec<String>,
        transition: Vec<Vec<Option<Vec<f64>>>>,
        observation: Vec<Vec<f64>>,
        labels: Vec<BTreeSet<String>>,
        propositions: BTreeSet<String>,
    ) -> Result<Self, ModelError> {
        for (kind, ids) in [("state", &states), ("action", &actions), ("observation", &observations)] {
            let mut seen = BTreeSet::new();
            for id in ids {
                if !seen.insert(id) {
                    return Err(ModelError::DuplicateId { kind, id: id.clone() });
                }
            }
        }
        let n = states.len();
        if n == 0 || actions.is_empty() || observations.is_empty() {
            return Err(ModelError::Shape("states, actions and observations must be non-empty".into()));
        }
        if initial >= n {
            return Err(ModelError::Shape(format!("initial state index {} out of range", initial)));
        }
        let shape_ok = transition.len() == n
            && transition.iter().all(|row| {
                row.len() == actions.len() && row.iter().flatten().all(|dist| dist.len() == n)
            })
            && observation.len() == n
            && observation.iter().all(|row| row.len() == observations.len())
            && labels.len() == n;
        if !shape_ok {
            return Err(ModelError::Shape("kernel dimensions do not match the id lists".into()));
        }
        Ok(Pomdp {
            states,
            initial,
            actions,
            observations,
            transition,
            observation,
            labels,
            propositions,
        })
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn num_observations(&self) -> usize {
        self.observations.len()
    }

    pub fn alphabet(&self) -> Alphabet {
        Alphabet::new(self.observations.clone(), self.actions.clone())
    }

    pub fn state_index(&self, id: &str) -> Result<usize, ModelError> {
        self.states
            .iter()
            .position(|s| s == id)
            .ok_or_else(|| ModelError::UnknownId { kind: "state", id: id.to_string() })
    }

    pub fn is_defined(&self, s: usize, a: usize) -> bool {
        self.transition[s][a].is_some()
    }

    /// Positive-probability successors, with undefined actions as a self-loop.
    pub fn successors(&self, s: usize, a: usize) -> Vec<(usize, f64)> {
        match &self.transition[s][a] {
            Some(row) => row
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > 0.0)
                .map(|(t, &p)| (t, p))
                .collect(),
            None => vec![(s, 1.0)],
        }
    }

    /// Effective transition probability (undefined actions stay put).
    pub fn prob(&self, s: usize, a: usize, t: usize) -> f64 {
        match &self.transition[s][a] {
            Some(row) => row[t],
            None => {
                if s == t {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for s in 0..self.num_states() {
            for a in 0..self.num_actions() {
                let Some(row) = &self.transition[s][a] else { continue };
                for (t, &v) in row.iter().enumerate() {
                    if !(0.0..=1.0).contains(&v) {
                        out.push(Violation::TransitionEntry {
                            state: self.states[s].clone(),
                            action: self.actions[a].clone(),
                            target: self.states[t].clone(),
                            value: v,
                        });
                    }
                }
                let sum: f64 = row.iter().sum();
                if row.iter().any(|&v| v > 0.0) && (sum - 1.0).abs() > TOL {
                    out.push(Violation::TransitionRowSum {
                        state: self.states[s].clone(),
                        action: self.actions[a].clone(),
                        sum,
                    });
                }
            }
            let row = &self.observation[s];
            for (z, &v) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    out.push(Violation::ObservationEntry {
                        state: self.states[s].clone(),
                        observation: self.observations[z].clone(),
                        value: v,
                    });
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > TOL {
                out.push(Violation::ObservationRowSum { state: self.states[s].clone(), sum });
            }
            for ap in &self.labels[s] {
                if !self.propositions.contains(ap) {
                    out.push(Violation::UndeclaredProposition {
                        state: self.states[s].clone(),
                        proposition: ap.clone(),
                    });
                }
            }
        }
        out
    }

    pub fn satisfies(&self, s: usize, f: &StateFormula) -> Result<bool, FormulaError> {
        f.eval(&self.labels[s])
    }

    /// States satisfying a propositional formula, as a mask.
    pub fn mask(&self, f: &StateFormula) -> Result<Vec<bool>, FormulaError> {
        (0..self.num_states()).map(|s| self.satisfies(s, f)).collect()
    }

    /// T*: every state with ¬phi1 ∨ phi2 self-loops under every action.
    pub fn make_absorbing(&self, phi1: &StateFormula, phi2: &StateFormula) -> Result<Pomdp, FormulaError> {
        let mut out = self.clone();
        let n = self.num_states();
        for s in 0..n {
            if !self.satisfies(s, phi1)? || self.satisfies(s, phi2)? {
                let mut dirac = vec![0.0; n];
                dirac[s] = 1.0;
                for a in 0..self.num_actions() {
                    out.transition[s][a] = Some(dirac.clone());
                }
            }
        }
        Ok(out)
    }

    /// Bayes filter step. Returns the normalized posterior and the evidence
    /// (pre-normalization mass); zero evidence yields the empty belief.
    pub fn belief_update(&self, b: &Belief, a: usize, z: usize) -> (Belief, f64) {
        let joint = self.propagate(&b.probs, a, z);
        let evidence: f64 = joint.iter().sum();
        if evidence <= 0.0 {
            return (Belief::empty(self.num_states()), 0.0);
        }
        let probs = joint.iter().map(|p| p / evidence).collect();
        (Belief { probs }, evidence)
    }

    /// Unnormalized one-step propagation of a (possibly sub-stochastic) mass vector.
    pub fn propagate(&self, mass: &[f64], a: usize, z: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.num_states()];
        for (s, &p) in mass.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (t, q) in self.successors(s, a) {
                out[t] += p * q;
            }
        }
        for (t, v) in out.iter_mut().enumerate() {
            *v *= self.observation[t][z];
        }
        out
    }

    /// Probability of the cylinder set of `path` with history `h`. The
    /// leading factor is O(s0,z0), or 1 when the first observation is `Init`.
    pub fn cylinder_probability(&self, path: &[usize], h: &History) -> Result<f64, ModelError> {
        if path.is_empty() {
            return Ok(1.0);
        }
        if path.len() != h.steps.len() + 1 {
            return Err(ModelError::Shape(format!(
                "path of {} states needs {} steps, history has {}",
                path.len(),
                path.len() - 1,
                h.steps.len()
            )));
        }
        for &s in path {
            if s >= self.num_states() {
                return Err(ModelError::UnknownId { kind: "state", id: s.to_string() });
            }
        }
        let mut p = match h.initial_observation {
            Some(z) => *self
                .observation
                .get(path[0])
                .and_then(|r| r.get(z))
                .ok_or_else(|| ModelError::UnknownId { kind: "observation", id: z.to_string() })?,
            None => 1.0,
        };
        for (i, &(a, z)) in h.steps.iter().enumerate() {
            if a >= self.num_actions() || z >= self.num_observations() {
                return Err(ModelError::UnknownId { kind: "action/observation", id: format!("({},{})", a, z) });
            }
            p *= self.prob(path[i], a, path[i + 1]) * self.observation[path[i + 1]][z];
        }
        Ok(p)
    }

    /// The state chain induced by a memoryless choice of action per state.
    pub fn induced_dtmc(&self, choice: &[usize]) -> Dtmc {
        let n = self.num_states();
        let transition = (0..n)
            .map(|s| {
                let mut row = vec![0.0; n];
                for (t, p) in self.successors(s, choice[s]) {
                    row[t] += p;
                }
                row
            })
            .collect();
        Dtmc { initial: self.initial, transition, labels: self.labels.clone() }
    }
}

/// Posterior over states.
#[derive(Clone, Debug, PartialEq)]
pub struct Belief {
    pub probs: Vec<f64>,
}

impl Belief {
    pub fn dirac(n: usize, s: usize) -> Self {
        let mut probs = vec![0.0; n];
        probs[s] = 1.0;
        Belief { probs }
    }

    pub fn empty(n: usize) -> Self {
        Belief { probs: vec![0.0; n] }
    }

    pub fn is_empty(&self) -> bool {
        self.probs.iter().all(|&p| p == 0.0)
    }

    pub fn mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn mass_on(&self, mask: &[bool]) -> f64 {
        self.probs.iter().zip(mask).filter(|(_, &m)| m).map(|(p, _)| p).sum()
    }

    pub fn support(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.probs.iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(s, &p)| (s, p))
    }
}

/// `z0 a0 z1 a1 ... zd`. `initial_observation == None` is the `Init` symbol.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct History {
    pub initial_observation: Option<usize>,
    pub steps: Vec<(usize, usize)>,
}

impl History {
    pub fn new(z0: usize) -> Self {
        History { initial_observation: Some(z0), steps: Vec::new() }
    }

    pub fn depth(&self) -> usize {
        self.steps.len()
    }

    pub fn last_observation(&self) -> Option<usize> {
        self.steps.last().map(|&(_, z)| z).or(self.initial_observation)
    }

    pub fn extended(&self, a: usize, z: usize) -> History {
        let mut h = self.clone();
        h.steps.push((a, z));
        h
    }

    /// The za-string read so far: `⟨z0,a0⟩⟨z1,a1⟩…`, without the last observation.
    pub fn word(&self, alphabet: &Alphabet) -> Word {
        let Some(z0) = self.initial_observation else { return Vec::new() };
        let mut z = z0;
        let mut w = Vec::with_capacity(self.steps.len());
        for &(a, next) in &self.steps {
            w.push(alphabet.symbol(z, a));
            z = next;
        }
        w
    }

    /// Rebuilds `z0 a0 … z_{n-1}` from a za-string; the last action is dropped.
    pub fn from_word(w: &[Symbol], alphabet: &Alphabet) -> Option<History> {
        let first = *w.first()?;
        let mut h = History::new(alphabet.observation(first));
        for pair in w.windows(2) {
            h.steps.push((alphabet.action(pair[0]), alphabet.observation(pair[1])));
        }
        Some(h)
    }
}

/// Possibly sub-stochastic chain over dense state indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Dtmc {
    pub initial: usize,
    pub transition: Vec<Vec<f64>>,
    pub labels: Vec<BTreeSet<String>>,
}

impl Dtmc {
    /// Rows whose mass exceeds one.
    pub fn validate(&self) -> Vec<(usize, f64)> {
        self.transition
            .iter()
            .enumerate()
            .map(|(s, row)| (s, row.iter().sum::<f64>()))
            .filter(|&(_, sum)| sum > 1.0 + TOL)
            .collect()
    }

    /// P[phi1 U<=k phi2] from the initial state.
    pub fn bounded_until(&self, phi1: &[bool], phi2: &[bool], k: usize) -> f64 {
        let n = self.transition.len();
        let mut x: Vec<f64> = (0..n).map(|s| if phi2[s] { 1.0 } else { 0.0 }).collect();
        for _ in 0..k {
            x = (0..n)
                .map(|s| {
                    if phi2[s] {
                        1.0
                    } else if !phi1[s] {
                        0.0
                    } else {
                        self.transition[s].iter().zip(&x).map(|(p, v)| p * v).sum()
                    }
                })
                .collect();
        }
        x[self.initial]
    }
}
