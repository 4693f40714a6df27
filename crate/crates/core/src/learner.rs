//! L* observation tables.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write;

use thiserror::Error;

use crate::alphabet::{Alphabet, Symbol, Word};
use crate::supervisor::ZaDfa;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LearnerError {
    #[error("table is not closed: row of {0} has no representative")]
    NotClosed(String),
    #[error("table is not consistent: distinguishing suffix {0}")]
    NotConsistent(String),
}

/// Membership oracle.
pub trait Membership {
    fn member(&mut self, w: &[Symbol]) -> bool;
}

impl<F: FnMut(&[Symbol]) -> bool> Membership for F {
    fn member(&mut self, w: &[Symbol]) -> bool {
        self(w)
    }
}

/// Blocking (C_B) and violation (C_S) counterexample strings.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CexSets {
    pub blocking: BTreeSet<Word>,
    pub violation: BTreeSet<Word>,
}

impl CexSets {
    /// Some non-empty prefix of `w` (including `w`) is a counterexample.
    pub fn bans(&self, w: &[Symbol]) -> bool {
        (1..=w.len()).any(|i| self.blocking.contains(&w[..i]) || self.violation.contains(&w[..i]))
    }

    pub fn is_empty(&self) -> bool {
        self.blocking.is_empty() && self.violation.is_empty()
    }

    /// Both sets contain their counterparts in `older`.
    pub fn contains(&self, older: &CexSets) -> bool {
        self.blocking.is_superset(&older.blocking) && self.violation.is_superset(&older.violation)
    }
}

#[derive(Clone, Debug)]
pub struct ObservationTable {
    pub alphabet: Alphabet,
    /// Access strings, prefix-closed, in insertion order.
    pub y: Vec<Word>,
    /// Distinguishing suffixes, in insertion order.
    pub e: Vec<Word>,
    g: HashMap<Word, bool>,
    /// Entries that ever went from 0 to 1; must stay zero.
    pub upward_flips: usize,
    pub queries: usize,
}

fn concat(a: &[Symbol], b: &[Symbol]) -> Word {
    let mut w = a.to_vec();
    w.extend_from_slice(b);
    w
}

impl ObservationTable {
    pub fn new(alphabet: Alphabet) -> Self {
        ObservationTable {
            alphabet,
            y: vec![Vec::new()],
            e: vec![Vec::new()],
            g: HashMap::new(),
            upward_flips: 0,
            queries: 0,
        }
    }

    pub fn g(&self, w: &[Symbol]) -> Option<bool> {
        self.g.get(w).copied()
    }

    /// Rows of Y·Σ that are not already in Y, in Y-then-Σ order.
    pub fn boundary(&self) -> Vec<Word> {
        let ys: BTreeSet<&Word> = self.y.iter().collect();
        let mut out = Vec::new();
        for y in &self.y {
            for s in self.alphabet.symbols() {
                let w = concat(y, &[s]);
                if !ys.contains(&w) && !out.contains(&w) {
                    out.push(w);
                }
            }
        }
        out
    }

    fn fill(&mut self, m: &mut dyn Membership) {
        let rows: Vec<Word> = self.y.iter().cloned().chain(self.boundary()).collect();
        for r in rows {
            for e in self.e.clone() {
                let w = concat(&r, &e);
                if !self.g.contains_key(&w) {
                    let v = m.member(&w);
                    self.queries += 1;
                    self.g.insert(w, v);
                }
            }
        }
    }

    /// Row of a string that is already filled.
    pub fn row(&self, y: &[Symbol]) -> Vec<bool> {
        self.e.iter().map(|e| self.g[&concat(y, e)]).collect()
    }

    pub fn find_unclosed(&self) -> Option<Word> {
        let rows: BTreeSet<Vec<bool>> = self.y.iter().map(|y| self.row(y)).collect();
        for y in &self.y {
            for s in self.alphabet.symbols() {
                let w = concat(y, &[s]);
                if !rows.contains(&self.row(&w)) {
                    return Some(w);
                }
            }
        }
        None
    }

    pub fn find_inconsistent(&self) -> Option<Word> {
        for (i, y1) in self.y.iter().enumerate() {
            for y2 in &self.y[i + 1..] {
                if self.row(y1) != self.row(y2) {
                    continue;
                }
                for s in self.alphabet.symbols() {
                    for e in &self.e {
                        let a = self.g[&concat(&concat(y1, &[s]), e)];
                        let b = self.g[&concat(&concat(y2, &[s]), e)];
                        if a != b {
                            return Some(concat(&[s], e));
                        }
                    }
                }
            }
        }
        None
    }

    /// Fixes closedness and consistency until both hold.
    pub fn extend(&mut self, m: &mut dyn Membership) {
        loop {
            self.fill(m);
            if let Some(w) = self.find_unclosed() {
                self.y.push(w);
                continue;
            }
            if let Some(e) = self.find_inconsistent() {
                self.e.push(e);
                continue;
            }
            return;
        }
    }

    fn add_prefixes(&mut self, y: &[Symbol]) {
        for i in 1..=y.len() {
            if !self.y.iter().any(|w| w[..] == y[..i]) {
                self.y.push(y[..i].to_vec());
            }
        }
    }

    /// Adds `y` and its prefixes to Y, then re-extends.
    pub fn add_counterexample(&mut self, y: &[Symbol], m: &mut dyn Membership) {
        self.add_prefixes(y);
        self.extend(m);
    }

    /// Like [`add_counterexample`](Self::add_counterexample), and also adds
    /// the proper suffixes of `y` to E, shortest first.
    pub fn add_positive_counterexample(&mut self, y: &[Symbol], m: &mut dyn Membership) {
        self.add_prefixes(y);
        for i in (1..y.len()).rev() {
            if !self.e.iter().any(|e| e[..] == y[i..]) {
                self.e.push(y[i..].to_vec());
            }
        }
        self.extend(m);
    }

    /// Forces every banned entry to 0 and returns how many changed.
    /// Never sets an entry to 1; the caller re-extends afterwards.
    pub fn refine(&mut self, cex: &CexSets) -> usize {
        let mut changed = 0;
        for (w, v) in self.g.iter_mut() {
            if *v && cex.bans(w) {
                *v = false;
                changed += 1;
            }
        }
        changed
    }

    /// Overwrites one entry, auditing upward flips.
    pub fn set(&mut self, w: Word, v: bool) {
        if let Some(false) = self.g.insert(w, v) {
            if v {
                self.upward_flips += 1;
            }
        }
    }

    /// One state per distinct Y-row; accepting rows are numbered first.
    pub fn make_acceptor(&self) -> Result<ZaDfa, LearnerError> {
        if let Some(w) = self.find_unclosed() {
            return Err(LearnerError::NotClosed(self.alphabet.format_word(&w)));
        }
        if let Some(e) = self.find_inconsistent() {
            return Err(LearnerError::NotConsistent(self.alphabet.format_word(&e)));
        }
        let mut reps: Vec<(Vec<bool>, &Word)> = Vec::new();
        for y in &self.y {
            let r = self.row(y);
            if !reps.iter().any(|(x, _)| *x == r) {
                reps.push((r, y));
            }
        }
        // column 0 is ε, so r[0] is G(y)
        let (acc, rej): (Vec<_>, Vec<_>) = reps.into_iter().partition(|(r, _)| r[0]);
        let ordered: Vec<(Vec<bool>, &Word)> = acc.into_iter().chain(rej).collect();
        let index = |r: &Vec<bool>| ordered.iter().position(|(x, _)| x == r).expect("closed table");
        let mut d = ZaDfa::with_states(self.alphabet.clone(), ordered.len());
        d.initial = index(&self.row(&[]));
        for (q, (r, y)) in ordered.iter().enumerate() {
            d.accepting[q] = r[0];
            for s in self.alphabet.symbols() {
                d.set(q, s, index(&self.row(&concat(y, &[s]))));
            }
        }
        Ok(d)
    }

    /// Text grid: Y rows, a rule, then the boundary rows.
    pub fn dump(&self) -> String {
        let ab = &self.alphabet;
        let names: Vec<String> = self.e.iter().map(|e| ab.format_word(e)).collect();
        let mut out = String::new();
        let label_width = self
            .y
            .iter()
            .chain(self.boundary().iter())
            .map(|w| ab.format_word(w).chars().count())
            .max()
            .unwrap_or(1)
            .max(1);
        let _ = write!(out, "{:<label_width$} |", "G");
        for n in &names {
            let _ = write!(out, " {}", n);
        }
        out.push('\n');
        let line = |out: &mut String, w: &Word| {
            let _ = write!(out, "{:<label_width$} |", ab.format_word(w));
            for (n, e) in names.iter().zip(&self.e) {
                let v = self.g.get(&concat(w, e)).map_or("?", |&b| if b { "1" } else { "0" });
                let _ = write!(out, " {:>width$}", v, width = n.chars().count());
            }
            out.push('\n');
        };
        for y in &self.y {
            line(&mut out, y);
        }
        let _ = writeln!(out, "{}", "-".repeat(label_width + 2 + names.iter().map(|n| n.chars().count() + 1).sum::<usize>()));
        for w in self.boundary() {
            line(&mut out, &w);
        }
        out
    }
}
