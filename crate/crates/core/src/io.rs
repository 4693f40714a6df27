//! JSON file formats for models and supervisors.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alphabet::Alphabet;
use crate::model::{ModelError, Pomdp};
use crate::supervisor::ZaDfa;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub states: Vec<String>,
    pub initial: String,
    pub actions: Vec<String>,
    pub observations: Vec<String>,
    /// state → action → successor → probability; a missing action is undefined.
    pub transitions: BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>>,
    pub observation_fn: BTreeMap<String, BTreeMap<String, f64>>,
    #[serde(default)]
    pub labels: BTreeMap<String, Vec<String>>,
    /// Declared atomic propositions; defaults to those used in `labels`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub propositions: Option<Vec<String>>,
}

fn position(ids: &[String], id: &str, kind: &'static str) -> Result<usize, ModelError> {
    ids.iter()
        .position(|x| x == id)
        .ok_or_else(|| ModelError::UnknownId { kind, id: id.to_string() })
}

impl ModelFile {
    pub fn into_pomdp(self) -> Result<Pomdp, FormatError> {
        let n = self.states.len();
        let st = |id: &str| position(&self.states, id, "state");
        let mut transition = vec![vec![None; self.actions.len()]; n];
        for (s, by_action) in &self.transitions {
            let si = st(s)?;
            for (a, succ) in by_action {
                let ai = position(&self.actions, a, "action")?;
                let mut row = vec![0.0; n];
                for (t, &p) in succ {
                    row[st(t)?] = p;
                }
                transition[si][ai] = Some(row);
            }
        }
        let mut observation = vec![vec![0.0; self.observations.len()]; n];
        for (s, row) in &self.observation_fn {
            let si = st(s)?;
            for (z, &p) in row {
                observation[si][position(&self.observations, z, "observation")?] = p;
            }
        }
        let mut labels = vec![BTreeSet::new(); n];
        for (s, aps) in &self.labels {
            labels[st(s)?].extend(aps.iter().cloned());
        }
        let propositions = match &self.propositions {
            Some(p) => p.iter().cloned().collect(),
            None => labels.iter().flatten().cloned().collect(),
        };
        let initial = st(&self.initial)?;
        Ok(Pomdp::new(
            self.states,
            initial,
            self.actions,
            self.observations,
            transition,
            observation,
            labels,
            propositions,
        )?)
    }

    pub fn from_pomdp(m: &Pomdp) -> Self {
        let mut transitions = BTreeMap::new();
        for (s, rows) in m.transition.iter().enumerate() {
            let mut by_action = BTreeMap::new();
            for (a, row) in rows.iter().enumerate() {
                if let Some(row) = row {
                    let succ = row
                        .iter()
                        .enumerate()
                        .filter(|(_, &p)| p != 0.0)
                        .map(|(t, &p)| (m.states[t].clone(), p))
                        .collect();
                    by_action.insert(m.actions[a].clone(), succ);
                }
            }
            if !by_action.is_empty() {
                transitions.insert(m.states[s].clone(), by_action);
            }
        }
        let observation_fn = m
            .observation
            .iter()
            .enumerate()
            .map(|(s, row)| {
                let r = row
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p != 0.0)
                    .map(|(z, &p)| (m.observations[z].clone(), p))
                    .collect();
                (m.states[s].clone(), r)
            })
            .collect();
        let labels = m
            .labels
            .iter()
            .enumerate()
            .filter(|(_, l)| !l.is_empty())
            .map(|(s, l)| (m.states[s].clone(), l.iter().cloned().collect()))
            .collect();
        ModelFile {
            states: m.states.clone(),
            initial: m.states[m.initial].clone(),
            actions: m.actions.clone(),
            observations: m.observations.clone(),
            transitions,
            observation_fn,
            labels,
            propositions: Some(m.propositions.iter().cloned().collect()),
        }
    }
}

pub fn parse_model(text: &str) -> Result<Pomdp, FormatError> {
    serde_json::from_str::<ModelFile>(text)?.into_pomdp()
}

pub fn model_to_json(m: &Pomdp) -> String {
    serde_json::to_string_pretty(&ModelFile::from_pomdp(m)).expect("serializable") + "\n"
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransitionEntry {
    pub from: usize,
    pub z: String,
    pub a: String,
    pub to: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DfaFile {
    pub alphabet: Alphabet,
    pub states: usize,
    pub initial: usize,
    pub accepting: Vec<usize>,
    pub transitions: Vec<TransitionEntry>,
}

impl DfaFile {
    pub fn into_dfa(self) -> Result<ZaDfa, FormatError> {
        let n = self.states;
        if n == 0 || self.initial >= n {
            return Err(FormatError::Invalid("initial state out of range".into()));
        }
        let mut d = ZaDfa::with_states(self.alphabet.clone(), n);
        d.initial = self.initial;
        d.accepting = vec![false; n];
        for q in self.accepting {
            *d.accepting
                .get_mut(q)
                .ok_or_else(|| FormatError::Invalid(format!("accepting state {} out of range", q)))? = true;
        }
        for t in self.transitions {
            let z = position(&self.alphabet.observations, &t.z, "observation")?;
            let a = position(&self.alphabet.actions, &t.a, "action")?;
            if t.from >= n || t.to >= n {
                return Err(FormatError::Invalid(format!("transition {} -> {} out of range", t.from, t.to)));
            }
            let s = self.alphabet.symbol(z, a);
            if d.delta[t.from][s.0].is_some_and(|old| old != t.to) {
                return Err(FormatError::Invalid(format!(
                    "nondeterministic transition from {} on {}:{}",
                    t.from, t.z, t.a
                )));
            }
            d.set(t.from, s, t.to);
        }
        Ok(d)
    }

    pub fn from_dfa(d: &ZaDfa) -> Self {
        let ab = &d.alphabet;
        let mut transitions = Vec::new();
        for q in 0..d.num_states() {
            for s in ab.symbols() {
                if let Some(to) = d.delta[q][s.0] {
                    transitions.push(TransitionEntry {
                        from: q,
                        z: ab.observations[ab.observation(s)].clone(),
                        a: ab.actions[ab.action(s)].clone(),
                        to,
                    });
                }
            }
        }
        DfaFile {
            alphabet: ab.clone(),
            states: d.num_states(),
            initial: d.initial,
            accepting: (0..d.num_states()).filter(|&q| d.accepting[q]).collect(),
            transitions,
        }
    }
}

pub fn parse_dfa(text: &str) -> Result<ZaDfa, FormatError> {
    serde_json::from_str::<DfaFile>(text)?.into_dfa()
}

pub fn dfa_to_json(d: &ZaDfa) -> String {
    serde_json::to_string_pretty(&DfaFile::from_dfa(d)).expect("serializable") + "\n"
}
