//! Random instances and brute-force reference values shared by the
//! integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use pomdp_supervisor::alphabet::{Alphabet, Word};
use pomdp_supervisor::exact::{Checker, Mode};
use pomdp_supervisor::fixtures;
use pomdp_supervisor::learner::{CexSets, ObservationTable};
use pomdp_supervisor::model::{Belief, History, Pomdp};
use pomdp_supervisor::pctl::{parse_spec, BoundedUntilSpec};
use pomdp_supervisor::supervisor::{product, simulate, ZaDfa};
use pomdp_supervisor::synthesis::{
    audit_supervisor, iteration_budget, synthesize, MembershipOracle, Outcome, SynthesisConfig, SynthesisResult,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub pomdp: Pomdp,
    pub spec: BoundedUntilSpec,
}

fn distribution(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let w: Vec<u32> = (0..n).map(|_| if rng.gen_bool(0.3) { 0 } else { rng.gen_range(1..10) }).collect();
        let total: u32 = w.iter().sum();
        if total > 0 {
            return w.into_iter().map(|x| x as f64 / total as f64).collect();
        }
    }
}

/// A POMDP with at most `max_s` states, `max_a` actions and `max_z`
/// observations, a "goal" target label (never on the initial state) and an
/// optional "trap" label that breaks the until.
pub fn random_instance_with(rng: &mut ChaCha8Rng, max_s: usize, max_a: usize, max_z: usize, max_k: usize) -> Instance {
    let n = rng.gen_range(2..=max_s);
    let na = if rng.gen_bool(0.8) { max_a } else { rng.gen_range(1..=max_a) };
    let nz = if rng.gen_bool(0.8) { max_z } else { rng.gen_range(1..=max_z) };
    let k = rng.gen_range(1..=max_k);
    let transition = (0..n)
        .map(|_| (0..na).map(|_| rng.gen_bool(0.85).then(|| distribution(rng, n))).collect())
        .collect();
    let observation = (0..n).map(|_| distribution(rng, nz)).collect();
    let mut labels = vec![BTreeSet::new(); n];
    let forced_goal = rng.gen_range(1..n);
    for (s, l) in labels.iter_mut().enumerate() {
        if s == forced_goal || (s > 0 && rng.gen_bool(0.25)) {
            l.insert("goal".to_string());
        }
        if rng.gen_bool(0.15) {
            l.insert("trap".to_string());
        }
    }
    let pomdp = Pomdp::new(
        (0..n).map(|i| format!("s{}", i)).collect(),
        0,
        (0..na).map(|i| format!("a{}", i + 1)).collect(),
        (0..nz).map(|i| format!("z{}", i + 1)).collect(),
        transition,
        observation,
        labels,
        ["goal", "trap"].iter().map(|s| s.to_string()).collect(),
    )
    .expect("well-shaped");
    assert!(pomdp.validate().is_empty());
    let phi1 = if rng.gen_bool(0.5) { "true" } else { "!\"trap\"" };
    let spec = parse_spec(&format!("P<=0.5 [ {} U<={} \"goal\" ]", phi1, k)).unwrap();
    Instance { pomdp, spec }
}

/// At most 2 actions and 2 observations.
pub fn random_instance(rng: &mut ChaCha8Rng, max_s: usize, max_k: usize) -> Instance {
    random_instance_with(rng, max_s, 2, 2, max_k)
}

/// Random instance with the bound set halfway between the extreme values,
/// so preprocessing neither short-circuits.
pub fn solvable_instance(rng: &mut ChaCha8Rng, max_s: usize, max_a: usize, max_z: usize, max_k: usize) -> (Instance, f64, f64) {
    loop {
        let mut inst = random_instance_with(rng, max_s, max_a, max_z, max_k);
        let c = Checker::new(&inst.pomdp, &inst.spec).unwrap();
        let all: Vec<usize> = (0..inst.pomdp.num_actions()).collect();
        let (p_max, _) = c.optimal_value(Mode::Max, &|_| all.clone()).unwrap();
        let (p_min, _) = c.optimal_value(Mode::Min, &|_| all.clone()).unwrap();
        if p_max - p_min > 1e-3 {
            inst.spec.p = (p_min + p_max) / 2.0;
            return (inst, p_min, p_max);
        }
    }
}

/// Raw successor distribution; an undefined action leaves the state unchanged.
fn raw_successors(m: &Pomdp, s: usize, a: usize) -> Vec<(usize, f64)> {
    match &m.transition[s][a] {
        Some(row) => row.iter().copied().enumerate().filter(|&(_, p)| p > 0.0).collect(),
        None => vec![(s, 1.0)],
    }
}

/// A complete policy tree: an action and one subtree per observation.
#[derive(Clone, Debug)]
pub enum Tree {
    Leaf,
    Node(usize, Vec<Tree>),
}

pub fn trees(depth: usize, na: usize, nz: usize) -> Vec<Tree> {
    if depth == 0 {
        return vec![Tree::Leaf];
    }
    let sub = trees(depth - 1, na, nz);
    let mut out = Vec::new();
    for a in 0..na {
        // every assignment of a subtree to each observation
        let mut combos: Vec<Vec<Tree>> = vec![Vec::new()];
        for _ in 0..nz {
            combos = combos
                .into_iter()
                .flat_map(|c| {
                    sub.iter().map(move |t| {
                        let mut c2 = c.clone();
                        c2.push(t.clone());
                        c2
                    })
                })
                .collect();
        }
        out.extend(combos.into_iter().map(|c| Tree::Node(a, c)));
    }
    out
}

/// Probability that the state path satisfies `phi1 U<=k phi2` under `tree`,
/// summed path by path on the raw model.
fn tree_value(m: &Pomdp, phi1: &[bool], phi2: &[bool], s: usize, tree: &Tree) -> f64 {
    if phi2[s] {
        return 1.0;
    }
    if !phi1[s] {
        return 0.0;
    }
    let Tree::Node(a, children) = tree else { return 0.0 };
    let mut v = 0.0;
    for (t, p) in raw_successors(m, s, *a) {
        for (z, child) in children.iter().enumerate() {
            let q = m.observation[t][z];
            if q > 0.0 {
                v += p * q * tree_value(m, phi1, phi2, t, child);
            }
        }
    }
    v
}

/// Extreme value over all pure observation-based adversaries; each initial
/// observation branch is optimized separately and the worst branch counts.
pub fn brute_force_optimum(m: &Pomdp, spec: &BoundedUntilSpec, mode: Mode) -> f64 {
    let phi1 = m.mask(&spec.phi1).unwrap();
    let phi2 = m.mask(&spec.phi2).unwrap();
    let all = trees(spec.k, m.num_actions(), m.num_observations());
    let mut worst: Option<f64> = None;
    for z0 in 0..m.num_observations() {
        if m.observation[m.initial][z0] <= 0.0 {
            continue;
        }
        let values = all.iter().map(|t| tree_value(m, &phi1, &phi2, m.initial, t));
        let v = match mode {
            Mode::Max => values.fold(f64::NEG_INFINITY, f64::max),
            Mode::Min => values.fold(f64::INFINITY, f64::min),
        };
        worst = Some(worst.map_or(v, |w| w.max(v)));
    }
    worst.unwrap_or(0.0)
}

/// Mass of paths that follow the `(z, a)` pairs of `y` and reach the target;
/// a path whose observation leaves `y` stops and counts only if it is
/// already on target.
pub fn brute_force_string_value(m: &Pomdp, spec: &BoundedUntilSpec, y: &[(usize, usize)]) -> f64 {
    let phi1 = m.mask(&spec.phi1).unwrap();
    let phi2 = m.mask(&spec.phi2).unwrap();
    let y = &y[..y.len().min(spec.k)];
    let s0 = m.initial;
    if y.is_empty() || m.observation[s0][y[0].0] <= 0.0 {
        return if phi2[s0] { 1.0 } else { 0.0 };
    }
    fn go(m: &Pomdp, phi1: &[bool], phi2: &[bool], y: &[(usize, usize)], s: usize, i: usize) -> f64 {
        if phi2[s] {
            return 1.0;
        }
        if !phi1[s] || i == y.len() {
            return 0.0;
        }
        let mut v = 0.0;
        for (t, p) in raw_successors(m, s, y[i].1) {
            for z in 0..m.num_observations() {
                let q = p * m.observation[t][z];
                if q <= 0.0 {
                    continue;
                }
                if i + 1 < y.len() && y[i + 1].0 != z {
                    v += if phi2[t] { q } else { 0.0 };
                } else {
                    v += q * go(m, phi1, phi2, y, t, i + 1);
                }
            }
        }
        v
    }
    go(m, &phi1, &phi2, y, s0, 0)
}

fn prefix_closed(d: &ZaDfa, k: usize) -> Result<(), String> {
    let lang: BTreeSet<Word> = d.language_up_to(k).into_iter().collect();
    for w in &lang {
        if !w.is_empty() && !lang.contains(&w[..w.len() - 1]) {
            return Err(format!("{} accepted without its parent", d.alphabet.format_word(w)));
        }
    }
    Ok(())
}

/// Posteriors sum to one and the per-step evidences multiply out to the
/// summed cylinder probabilities of every state path.
pub fn check_beliefs(m: &Pomdp, rng: &mut ChaCha8Rng, k: usize) -> Result<(), String> {
    let n = m.num_states();
    let mut b = Belief::dirac(n, m.initial);
    let mut product_of_evidence = 1.0;
    let mut h = History { initial_observation: None, steps: Vec::new() };
    for _ in 0..k {
        let a = rng.gen_range(0..m.num_actions());
        let zs: Vec<usize> = (0..m.num_observations()).filter(|&z| m.belief_update(&b, a, z).1 > 0.0).collect();
        let z = zs[rng.gen_range(0..zs.len())];
        let (b2, ev) = m.belief_update(&b, a, z);
        if (b2.mass() - 1.0).abs() > 1e-9 {
            return Err(format!("posterior mass {}", b2.mass()));
        }
        product_of_evidence *= ev;
        h.steps.push((a, z));
        b = b2;
    }
    let mut paths: Vec<Vec<usize>> = vec![vec![m.initial]];
    for _ in 0..h.steps.len() {
        paths = paths.into_iter().flat_map(|p| (0..n).map(move |t| [p.clone(), vec![t]].concat())).collect();
    }
    let total: f64 = paths.iter().map(|p| m.cylinder_probability(p, &h).unwrap()).sum();
    if (total - product_of_evidence).abs() > 1e-9 {
        return Err(format!("evidence product {} vs path sum {}", product_of_evidence, total));
    }
    Ok(())
}

/// The property suite for one synthesis run.
pub fn check_run(inst: &Instance, r: &SynthesisResult, seed: u64) -> Result<(), String> {
    let k = inst.spec.k;
    let c = Checker::new(&inst.pomdp, &inst.spec).unwrap();
    let budget = iteration_budget(&inst.pomdp.alphabet(), k);
    if r.iterations > budget {
        return Err(format!("{} iterations over budget {}", r.iterations, budget));
    }
    for d in r.conjectures.iter().chain([r.outcome.dfa()]) {
        prefix_closed(d, k)?;
        let p = product(&c.model, d).map_err(|e| e.to_string())?;
        if p.max_row_mass() > 1.0 + 1e-9 {
            return Err(format!("product row mass {}", p.max_row_mass()));
        }
    }
    if r.audit.upward_flips != 0 {
        return Err(format!("{} entries flipped from 0 to 1", r.audit.upward_flips));
    }
    for pair in r.trace.windows(2) {
        let grows = |a: &[String], b: &[String]| a.iter().all(|w| b.contains(w));
        if !grows(&pair[0].blocking, &pair[1].blocking) || !grows(&pair[0].violation, &pair[1].violation) {
            return Err(format!("counterexample sets shrank at iteration {}", pair[1].iteration));
        }
    }
    if let Outcome::Supervisor(d) = &r.outcome {
        let (sound, p) = audit_supervisor(&inst.pomdp, &inst.spec, d).map_err(|e| e.to_string())?;
        if !sound || !r.audit.sound || (p - r.p_final).abs() > 1e-9 {
            return Err(format!("unsound supervisor: re-checked {} vs {}", p, r.p_final));
        }
        if !r.audit.complete {
            return Err("minimizing strings missing from the supervisor".into());
        }
        for s in 0..5 {
            let t = simulate(&inst.pomdp, d, k, seed.wrapping_mul(31).wrapping_add(s)).map_err(|e| e.to_string())?;
            if !d.accepts(&t.history().word(&d.alphabet)) {
                return Err("simulated run not accepted on replay".into());
            }
        }
    }
    let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
    check_beliefs(&inst.pomdp, &mut rng, k)
}

pub fn run_and_check(inst: &Instance, seed: u64) -> Result<SynthesisResult, String> {
    let r = synthesize(&inst.pomdp, &inst.spec, &SynthesisConfig::default()).map_err(|e| e.to_string())?;
    check_run(inst, &r, seed)?;
    Ok(r)
}

fn words(ab: &Alphabet, list: &[&str]) -> Vec<Word> {
    list.iter().map(|s| if *s == "ε" { Vec::new() } else { ab.parse_word(s).unwrap() }).collect()
}

fn expand(ab: &Alphabet, rows: &[(&str, &str)]) -> Vec<(Word, Vec<bool>)> {
    // "2*" stands for the six one-symbol extensions of "2"
    let mut out = Vec::new();
    for (w, bits) in rows {
        let bits: Vec<bool> = bits.chars().map(|c| c == '1').collect();
        match w.strip_suffix('*') {
            Some(stem) => {
                for d in 1..=6 {
                    out.push((ab.parse_word(&format!("{}{}", stem, d)).unwrap(), bits.clone()));
                }
            }
            None => out.push((words(ab, &[w])[0].clone(), bits)),
        }
    }
    out
}

pub fn first_tables() -> (ObservationTable, ObservationTable) {
    let c = Checker::new(&fixtures::worked_example(), &fixtures::spec()).unwrap();
    let oracle = MembershipOracle::new(&c);
    let cex = CexSets::default();
    let mut member = |w: &[_]| oracle.member(w, &cex);
    let mut t = ObservationTable::new(c.alphabet());
    t.extend(&mut member);
    let first = t.clone();
    t.add_positive_counterexample(&c.alphabet().parse_word("13").unwrap(), &mut member);
    (first, t)
}

pub struct ExpectedTable {
    pub y: &'static [&'static str],
    pub e: &'static [&'static str],
    pub rows: &'static [(&'static str, &'static str)],
}

pub const TABLE_1: ExpectedTable = ExpectedTable {
    y: &["ε", "2"],
    e: &["ε"],
    rows: &[("ε", "1"), ("2", "0"), ("1", "1"), ("3", "0"), ("4", "1"), ("5", "0"), ("6", "0"), ("2*", "0")],
};

pub const TABLE_2: ExpectedTable = ExpectedTable {
    y: &["ε", "2", "1", "13", "11"],
    e: &["ε", "3", "13"],
    rows: &[
        ("ε", "101"),
        ("2", "000"),
        ("1", "110"),
        ("13", "111"),
        ("11", "100"),
        ("3", "000"),
        ("4", "110"),
        ("5", "000"),
        ("6", "000"),
        ("2*", "000"),
        ("12", "111"),
        ("14", "100"),
        ("15", "111"),
        ("16", "111"),
        ("13*", "111"),
        ("111", "000"),
        ("112", "000"),
        ("113", "000"),
        ("114", "111"),
        ("115", "111"),
        ("116", "111"),
    ],
};

/// Y, E, the full row set and every G bit agree with `want`.
pub fn table_matches(t: &ObservationTable, want: &ExpectedTable) -> Result<(), String> {
    let ab = &t.alphabet;
    if t.y != words(ab, want.y) || t.e != words(ab, want.e) {
        return Err(format!("Y or E differ\n{}", t.dump()));
    }
    let expected = expand(ab, want.rows);
    let listed: Vec<&Word> = expected.iter().map(|(w, _)| w).collect();
    let mut all: Vec<Word> = t.y.clone();
    all.extend(t.boundary());
    all.sort();
    let mut listed_sorted: Vec<Word> = listed.into_iter().cloned().collect();
    listed_sorted.sort();
    if all != listed_sorted {
        return Err(format!("row set differs\n{}", t.dump()));
    }
    for (w, bits) in expected {
        if t.row(&w) != bits {
            return Err(format!("row {} differs\n{}", ab.format_word(&w), t.dump()));
        }
    }
    Ok(())
}

