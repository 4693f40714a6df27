//! Product of a POMDP with a za-DFA, blocking analysis, and dark-state pruning.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};

use super::{SupervisorError, ZaDfa};
use crate::alphabet::{Symbol, Word};
use crate::model::Pomdp;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProductState {
    /// s̄q̄, before the first observation.
    Initial,
    Obs { s: usize, z: usize, q: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProductEdge {
    pub symbol: Symbol,
    pub action: usize,
    /// `(successor, O(s',z')·T(s,a,s'))`
    pub successors: Vec<(usize, f64)>,
}

/// Reachable part of the parallel composition. State 0 is s̄q̄.
#[derive(Clone, Debug)]
pub struct ProductMdp {
    pub states: Vec<ProductState>,
    pub names: Vec<String>,
    /// Edges in symbol order.
    pub edges: Vec<Vec<ProductEdge>>,
    /// Underlying POMDP state of each product state.
    pub pomdp_state: Vec<usize>,
}

pub fn product(pomdp: &Pomdp, dfa: &ZaDfa) -> Result<ProductMdp, SupervisorError> {
    let expected = pomdp.alphabet();
    if expected != dfa.alphabet {
        return Err(SupervisorError::AlphabetMismatch {
            expected: format!("{:?} x {:?}", expected.observations, expected.actions),
            found: format!("{:?} x {:?}", dfa.alphabet.observations, dfa.alphabet.actions),
        });
    }
    let ab = &dfa.alphabet;
    let s0 = pomdp.initial;
    let q0 = dfa.initial;
    let mut prod = ProductMdp {
        states: vec![ProductState::Initial],
        names: vec![format!("{}q{}", pomdp.states[s0], q0)],
        edges: vec![Vec::new()],
        pomdp_state: vec![s0],
    };
    let mut index: HashMap<ProductState, usize> = HashMap::from([(ProductState::Initial, 0)]);
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        let (s, gates, q) = match prod.states[i] {
            ProductState::Initial => {
                if !dfa.accepting[q0] {
                    continue;
                }
                let gates: Vec<usize> =
                    (0..pomdp.num_observations()).filter(|&z| pomdp.observation[s0][z] > 0.0).collect();
                (s0, gates, q0)
            }
            ProductState::Obs { s, z, q } => (s, vec![z], q),
        };
        let mut edges = Vec::new();
        for z in gates {
            for a in 0..pomdp.num_actions() {
                let symbol = ab.symbol(z, a);
                let Some(q2) = dfa.step(q, symbol) else { continue };
                let mut successors = Vec::new();
                for (s2, p) in pomdp.successors(s, a) {
                    for z2 in 0..pomdp.num_observations() {
                        let o = pomdp.observation[s2][z2];
                        if o <= 0.0 {
                            continue;
                        }
                        let st = ProductState::Obs { s: s2, z: z2, q: q2 };
                        let j = *index.entry(st).or_insert_with(|| {
                            prod.states.push(st);
                            prod.names.push(format!("{}{}q{}", pomdp.states[s2], pomdp.observations[z2], q2));
                            prod.edges.push(Vec::new());
                            prod.pomdp_state.push(s2);
                            queue.push_back(prod.states.len() - 1);
                            prod.states.len() - 1
                        });
                        successors.push((j, o * p));
                    }
                }
                edges.push(ProductEdge { symbol, action: a, successors });
            }
        }
        prod.edges[i] = edges;
    }
    Ok(prod)
}

impl ProductMdp {
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    /// Largest outgoing mass of any (state, action) row.
    pub fn max_row_mass(&self) -> f64 {
        self.edges
            .iter()
            .flatten()
            .map(|e| e.successors.iter().map(|(_, p)| p).sum::<f64>())
            .fold(0.0, f64::max)
    }

    fn edge_successors(&self, i: usize, e: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges[i][e].successors.iter().map(|&(j, _)| j)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockedReport {
    pub state: usize,
    pub name: String,
    pub depth: usize,
    /// Shortest, then lexicographically least, string reaching the state.
    pub word: Word,
}

/// Depth layers of (state → least word, mass along it).
fn layers(prod: &ProductMdp, k: usize) -> Vec<BTreeMap<usize, (Word, f64)>> {
    let mut out = vec![BTreeMap::from([(0usize, (Vec::new(), 1.0))])];
    for _ in 0..k {
        let mut next: BTreeMap<usize, (Word, f64)> = BTreeMap::new();
        for (&i, (w, m)) in out.last().unwrap() {
            for e in &prod.edges[i] {
                let mut w2 = w.clone();
                w2.push(e.symbol);
                for &(j, p) in &e.successors {
                    match next.get_mut(&j) {
                        Some((best, mass)) if *best == w2 => *mass += m * p,
                        Some((best, _)) if *best < w2 => {}
                        _ => {
                            next.insert(j, (w2.clone(), m * p));
                        }
                    }
                }
            }
        }
        out.push(next);
    }
    out
}

/// Breadth-first blocking check; depth-`k` states are exempt.
pub fn nonblocking_check(prod: &ProductMdp, k: usize) -> Result<(), BlockedReport> {
    for (depth, layer) in layers(prod, k).into_iter().enumerate().take(k) {
        let blocked = layer
            .into_iter()
            .filter(|(i, _)| prod.edges[*i].is_empty())
            .min_by(|(i, (w, m)), (j, (w2, m2))| {
                w.cmp(w2)
                    .then(m2.partial_cmp(m).unwrap_or(std::cmp::Ordering::Equal))
                    .then(prod.states[*i].cmp(&prod.states[*j]))
            });
        if let Some((state, (word, _))) = blocked {
            return Err(BlockedReport { state, name: prod.names[state].clone(), depth, word });
        }
    }
    Ok(())
}

/// Marks dark states on the depth-unrolled product and returns the banned
/// strings: every trace string ending in a symbol that can land in a dark state.
pub fn dark_state_pruning(prod: &ProductMdp, k: usize) -> BTreeSet<Word> {
    let reach: Vec<BTreeSet<usize>> = layers(prod, k).into_iter().map(|l| l.into_keys().collect()).collect();
    let mut dark: HashSet<(usize, usize)> = HashSet::new();
    let mut removed: HashSet<(usize, usize, usize)> = HashSet::new();
    // darkness at depth d only depends on depth d+1, so one backward sweep is the fixpoint
    for d in (0..k).rev() {
        for &i in &reach[d] {
            let mut live = 0;
            for e in 0..prod.edges[i].len() {
                if prod.edge_successors(i, e).any(|j| dark.contains(&(d + 1, j))) {
                    removed.insert((d, i, e));
                } else {
                    live += 1;
                }
            }
            if live == 0 {
                dark.insert((d, i));
            }
        }
    }
    let mut banned = BTreeSet::new();
    let mut layer: BTreeSet<(Word, usize)> = BTreeSet::from([(Vec::new(), 0usize)]);
    for d in 0..k {
        let mut next = BTreeSet::new();
        for (w, i) in &layer {
            for (e, edge) in prod.edges[*i].iter().enumerate() {
                let mut w2 = w.clone();
                w2.push(edge.symbol);
                if removed.contains(&(d, *i, e)) {
                    banned.insert(w2);
                } else {
                    for j in prod.edge_successors(*i, e) {
                        next.insert((w2.clone(), j));
                    }
                }
            }
        }
        layer = next;
    }
    banned
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::TOL;

    #[test]
    fn policy_two_product() {
        let m = fixtures::worked_example();
        let ab = m.alphabet();
        let d = ZaDfa::from_policy_string(ab.clone(), &ab.parse_word("2").unwrap()).unwrap();
        let p = product(&m, &d).unwrap();
        assert_eq!(p.edges[0].len(), 1);
        let mut succ: Vec<(String, f64)> =
            p.edges[0][0].successors.iter().map(|&(j, pr)| (p.names[j].clone(), pr)).collect();
        succ.sort_by(|a, b| a.0.cmp(&b.0));
        let want = [("s1z1q1", 0.05), ("s1z2q1", 0.05), ("s4z2q1", 0.9)];
        assert_eq!(succ.len(), 3);
        for ((n, pr), (wn, wp)) in succ.iter().zip(want) {
            assert_eq!(n, wn);
            assert!((pr - wp).abs() < TOL);
        }
    }

    #[test]
    fn empty_dfa_product_is_a_single_state() {
        let m = fixtures::worked_example();
        let p = product(&m, &ZaDfa::empty(m.alphabet())).unwrap();
        assert_eq!(p.num_states(), 1);
        assert!(p.edges[0].is_empty());
        assert!(dark_state_pruning(&p, 3).is_empty());
    }

    #[test]
    fn trivial_full_lifts_rows() {
        let m = fixtures::worked_example();
        let p = product(&m, &ZaDfa::trivial_full(m.alphabet())).unwrap();
        for (i, edges) in p.edges.iter().enumerate() {
            for e in edges {
                let sum: f64 = e.successors.iter().map(|(_, x)| x).sum();
                assert!((sum - 1.0).abs() < TOL, "{} {:?}", p.names[i], e.symbol);
            }
        }
        assert!(nonblocking_check(&p, 3).is_ok());
    }

    #[test]
    fn alphabet_mismatch() {
        let m = fixtures::worked_example();
        let mut ab = m.alphabet();
        ab.actions.pop();
        assert!(matches!(product(&m, &ZaDfa::trivial_full(ab)), Err(SupervisorError::AlphabetMismatch { .. })));
    }

    #[test]
    fn horizon_one_needs_only_the_root() {
        let m = fixtures::worked_example();
        let ab = m.alphabet();
        let y = ab.parse_word("1").unwrap();
        let p = product(&m, &ZaDfa::from_policy_string(ab.clone(), &y).unwrap()).unwrap();
        assert!(nonblocking_check(&p, 1).is_ok());
        let r = nonblocking_check(&p, 2).unwrap_err();
        assert_eq!(r.depth, 1);
        assert_eq!(r.word, y);
    }

    #[test]
    fn chain_blocked_early_bans_the_chain() {
        let m = fixtures::worked_example();
        let ab = m.alphabet();
        let y = ab.parse_word("1").unwrap();
        let p = product(&m, &ZaDfa::from_policy_string(ab, &y).unwrap()).unwrap();
        assert_eq!(dark_state_pruning(&p, 3), BTreeSet::from([y]));
    }
}
