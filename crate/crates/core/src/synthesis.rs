//! Counterexample-guided supervisor synthesis: preprocessing, the
//! membership oracle, and the P, B, S equivalence oracles around L*.

use std::cell::RefCell;
use std::collections::{BTreeSet, HashMap};

use log::{debug, info};
use serde::Serialize;
use thiserror::Error;

use crate::alphabet::{Alphabet, Symbol, Word};
use crate::exact::{strongest_evidence, Adversary, CheckError, CheckReport, Checker, Mode};
use crate::learner::{CexSets, ObservationTable};
use crate::model::{Belief, History, Pomdp};
use crate::pctl::BoundedUntilSpec;
use crate::pomcp::{self, PomcpConfig};
use crate::supervisor::{dark_state_pruning, nonblocking_check, product, SupervisorError, ZaDfa};

#[derive(Clone, Debug)]
pub enum Engine {
    Exact,
    /// POMCP value, replaced by the exact one when it lands within
    /// `margin` of the threshold.
    Pomcp { config: PomcpConfig, margin: f64 },
}

#[derive(Clone, Debug)]
pub struct SynthesisConfig {
    pub engine: Engine,
    /// Overrides the 2·|Σ|^k iteration budget.
    pub max_iterations: Option<usize>,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig { engine: Engine::Exact, max_iterations: None }
    }
}

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error(transparent)]
    Check(#[from] CheckError),
    #[error(transparent)]
    Supervisor(#[from] SupervisorError),
    #[error("iteration budget of {budget} exhausted")]
    Budget { budget: usize, trace: Vec<IterationRecord> },
    #[error("every violating path is consistent with the minimizing adversary")]
    Contradiction,
}

#[derive(Clone, Debug)]
pub enum Preprocess {
    Continue { sigma_min: Adversary, sigma_max: Adversary, p_min: f64, p_max: f64 },
    TriviallyAll { dfa: ZaDfa, p_max: f64 },
    Unrealizable { dfa: ZaDfa, p_min: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    Supervisor(ZaDfa),
    TriviallyAll(ZaDfa),
    Unrealizable(ZaDfa),
}

impl Outcome {
    pub fn name(&self) -> &'static str {
        match self {
            Outcome::Supervisor(_) => "supervisor",
            Outcome::TriviallyAll(_) => "trivially-all",
            Outcome::Unrealizable(_) => "unrealizable",
        }
    }

    pub fn dfa(&self) -> &ZaDfa {
        match self {
            Outcome::Supervisor(d) | Outcome::TriviallyAll(d) | Outcome::Unrealizable(d) => d,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    PositiveCex,
    TableCex,
    NegativeCex,
}

/// One learning iteration, serialized as a JSON line.
#[derive(Clone, Debug, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub rows: usize,
    pub columns: Vec<String>,
    pub states: usize,
    pub accepting: usize,
    pub oracle_p: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_b: Option<Verdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_s: Option<Verdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evidence: Option<f64>,
    pub blocking: Vec<String>,
    pub violation: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Audit {
    pub upward_flips: usize,
    /// Every counterexample set contained its predecessor.
    pub monotone: bool,
    /// Independent re-check: non-blocking and the bound holds.
    pub sound: bool,
    /// The result accepts every minimizing-adversary string.
    pub complete: bool,
}

#[derive(Clone, Debug)]
pub struct SynthesisResult {
    pub outcome: Outcome,
    pub p_final: f64,
    pub iterations: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub trace: Vec<IterationRecord>,
    pub cex: CexSets,
    pub audit: Audit,
    /// Every distinct acceptor the loop conjectured, in order.
    pub conjectures: Vec<ZaDfa>,
    pub table: Option<ObservationTable>,
}

/// `2·|Σ|^k`.
pub fn iteration_budget(alphabet: &Alphabet, k: usize) -> usize {
    let k = u32::try_from(k).unwrap_or(u32::MAX);
    alphabet.len().checked_pow(k).and_then(|n| n.checked_mul(2)).unwrap_or(usize::MAX)
}

fn all_actions(n: usize) -> impl Fn(&History) -> Vec<usize> {
    move |_| (0..n).collect()
}

pub fn preprocess(checker: &Checker) -> Result<Preprocess, CheckError> {
    let all = all_actions(checker.model.num_actions());
    let (p_max, sigma_max) = checker.optimal_value(Mode::Max, &all)?;
    let (p_min, sigma_min) = checker.optimal_value(Mode::Min, &all)?;
    info!("p_min = {}, p_max = {}", p_min, p_max);
    let ab = checker.alphabet();
    if checker.spec.holds(p_max) {
        return Ok(Preprocess::TriviallyAll { dfa: ZaDfa::trivial_full(ab), p_max });
    }
    if !checker.spec.holds(p_min) {
        return Ok(Preprocess::Unrealizable { dfa: ZaDfa::empty(ab), p_min });
    }
    Ok(Preprocess::Continue { sigma_min, sigma_max, p_min, p_max })
}

/// Membership oracle with a value cache keyed by the truncated string.
pub struct MembershipOracle<'a> {
    checker: &'a Checker,
    cache: RefCell<HashMap<Word, f64>>,
}

impl<'a> MembershipOracle<'a> {
    pub fn new(checker: &'a Checker) -> Self {
        MembershipOracle { checker, cache: RefCell::new(HashMap::new()) }
    }

    pub fn value(&self, y: &[Symbol]) -> f64 {
        let y = &y[..y.len().min(self.checker.spec.k)];
        if let Some(&v) = self.cache.borrow().get(y) {
            return v;
        }
        let v = self.checker.policy_string_value(y);
        self.cache.borrow_mut().insert(y.to_vec(), v);
        v
    }

    pub fn member(&self, y: &[Symbol], cex: &CexSets) -> bool {
        if y.is_empty() {
            return true;
        }
        !cex.bans(y) && self.checker.spec.holds(self.value(y))
    }
}

/// Shortest, then least, minimizing-adversary string the acceptor rejects.
pub fn oracle_p(dfa: &ZaDfa, sigma_min: &Adversary, k: usize) -> Option<Word> {
    sigma_min.strings(&dfa.alphabet, k).into_iter().find(|w| !dfa.accepts(w))
}

#[derive(Clone, Debug, PartialEq)]
pub enum OracleB {
    Pass,
    TableCex(Word),
    NegativeCex { word: Word, blocking: BTreeSet<Word> },
}

pub fn oracle_b(model: &Pomdp, dfa: &ZaDfa, k: usize, table: &ObservationTable, cex: &CexSets) -> Result<OracleB, SupervisorError> {
    let prod = product(model, dfa)?;
    let Err(blocked) = nonblocking_check(&prod, k) else { return Ok(OracleB::Pass) };
    debug!("blocked at {} via {:?}", blocked.name, blocked.word);
    if !table.y.contains(&blocked.word) {
        return Ok(OracleB::TableCex(blocked.word));
    }
    let mut blocking = cex.blocking.clone();
    blocking.extend(dark_state_pruning(&prod, k));
    let word = blocking
        .iter()
        .min_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)))
        .cloned()
        .unwrap_or(blocked.word);
    Ok(OracleB::NegativeCex { word, blocking })
}

#[derive(Clone, Debug, PartialEq)]
pub enum OracleS {
    Pass { p_c: f64 },
    NegativeCex { word: Word, mass: f64, p_c: f64 },
}

/// Fills the adversary in on every reachable history it leaves open with
/// the lowest enabled action.
fn complete_adversary(checker: &Checker, adv: &Adversary, enabled: &dyn Fn(&History) -> Vec<usize>) -> Adversary {
    let mut out = adv.clone();
    let n = checker.model.num_states();
    let mut stack: Vec<(History, Belief)> =
        checker.root_branches().into_iter().map(|z0| (History::new(z0), Belief::dirac(n, checker.model.initial))).collect();
    while let Some((h, b)) = stack.pop() {
        if h.depth() >= checker.spec.k {
            continue;
        }
        let a = match out.get(&h) {
            Some(a) => a,
            None => match enabled(&h).first() {
                Some(&a) => {
                    out.insert(h.clone(), a);
                    a
                }
                None => continue,
            },
        };
        for z in 0..checker.model.num_observations() {
            let (b2, ev) = checker.model.belief_update(&b, a, z);
            if ev > 0.0 {
                stack.push((h.extended(a, z), b2));
            }
        }
    }
    out
}

pub fn supervisor_value(checker: &Checker, dfa: &ZaDfa, engine: &Engine) -> Result<CheckReport, CheckError> {
    match engine {
        Engine::Exact => checker.check_supervisor(dfa),
        Engine::Pomcp { config, margin } => {
            let enabled = |h: &History| dfa.enabled_actions(h);
            let est = pomcp::estimate_max(checker, &enabled, config)?;
            if (est.p_hat - checker.spec.p).abs() <= *margin {
                debug!("estimate {} within margin, falling back to the exact check", est.p_hat);
                return checker.check_supervisor(dfa);
            }
            Ok(CheckReport {
                satisfied: checker.spec.holds(est.p_hat),
                p_c: est.p_hat,
                witness: complete_adversary(checker, &est.policy, &enabled),
            })
        }
    }
}

pub fn oracle_s(checker: &Checker, dfa: &ZaDfa, sigma_min: &Adversary, engine: &Engine) -> Result<OracleS, SynthesisError> {
    let report = supervisor_value(checker, dfa, engine)?;
    if report.satisfied {
        return Ok(OracleS::Pass { p_c: report.p_c });
    }
    let d = checker.build_derived_dtmc(&report.witness);
    let ab = checker.alphabet();
    let ev = strongest_evidence(&d, &|w| sigma_min.consistent_with(w, &ab)).ok_or(SynthesisError::Contradiction)?;
    Ok(OracleS::NegativeCex { word: ev.word, mass: ev.mass, p_c: report.p_c })
}

/// Non-blocking and within the bound, re-derived from scratch.
pub fn audit_supervisor(pomdp: &Pomdp, spec: &BoundedUntilSpec, dfa: &ZaDfa) -> Result<(bool, f64), SynthesisError> {
    let checker = Checker::new(pomdp, spec).map_err(CheckError::from)?;
    let prod = product(&checker.model, dfa)?;
    if nonblocking_check(&prod, spec.k).is_err() {
        return Ok((false, f64::NAN));
    }
    let report = checker.check_supervisor(dfa)?;
    Ok((report.satisfied, report.p_c))
}

fn names(ab: &Alphabet, ws: &BTreeSet<Word>) -> Vec<String> {
    let mut v: Vec<&Word> = ws.iter().collect();
    v.sort_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)));
    v.into_iter().map(|w| ab.format_word(w)).collect()
}

pub fn synthesize(pomdp: &Pomdp, spec: &BoundedUntilSpec, config: &SynthesisConfig) -> Result<SynthesisResult, SynthesisError> {
    let checker = Checker::new(pomdp, spec).map_err(CheckError::from)?;
    let ab = checker.alphabet();
    let k = spec.k;
    let (sigma_min, p_min, p_max) = match preprocess(&checker)? {
        Preprocess::TriviallyAll { dfa, p_max } => {
            return Ok(SynthesisResult {
                outcome: Outcome::TriviallyAll(dfa),
                p_final: p_max,
                iterations: 0,
                p_min: checker.optimal_value(Mode::Min, &all_actions(pomdp.num_actions()))?.0,
                p_max,
                trace: Vec::new(),
                cex: CexSets::default(),
                audit: Audit { upward_flips: 0, monotone: true, sound: true, complete: true },
                conjectures: Vec::new(),
                table: None,
            });
        }
        Preprocess::Unrealizable { dfa, p_min } => {
            return Ok(SynthesisResult {
                outcome: Outcome::Unrealizable(dfa),
                p_final: p_min,
                iterations: 0,
                p_min,
                p_max: checker.optimal_value(Mode::Max, &all_actions(pomdp.num_actions()))?.0,
                trace: Vec::new(),
                cex: CexSets::default(),
                audit: Audit { upward_flips: 0, monotone: true, sound: true, complete: true },
                conjectures: Vec::new(),
                table: None,
            });
        }
        Preprocess::Continue { sigma_min, p_min, p_max, .. } => (sigma_min, p_min, p_max),
    };

    let oracle = MembershipOracle::new(&checker);
    let cex = RefCell::new(CexSets::default());
    let mut member = |w: &[Symbol]| oracle.member(w, &cex.borrow());
    let mut table = ObservationTable::new(ab.clone());
    table.extend(&mut member);

    let budget = config.max_iterations.unwrap_or_else(|| iteration_budget(&ab, k));
    let mut trace = Vec::new();
    let mut conjectures: Vec<ZaDfa> = Vec::new();
    let mut monotone = true;
    for iteration in 1..=budget {
        let dfa = table.make_acceptor().expect("extended table is closed and consistent");
        let mut rec = IterationRecord {
            iteration,
            rows: table.y.len(),
            columns: table.e.iter().map(|e| ab.format_word(e)).collect(),
            states: dfa.num_states(),
            accepting: dfa.accepting.iter().filter(|&&a| a).count(),
            oracle_p: Verdict::Pass,
            oracle_b: None,
            oracle_s: None,
            p_c: None,
            counterexample: None,
            evidence: None,
            blocking: Vec::new(),
            violation: Vec::new(),
        };
        conjectures.push(dfa.clone());
        let before = cex.borrow().clone();
        let mut finished = None;

        if let Some(w) = oracle_p(&dfa, &sigma_min, k) {
            rec.oracle_p = Verdict::PositiveCex;
            rec.counterexample = Some(ab.format_word(&w));
            table.add_positive_counterexample(&w, &mut member);
        } else {
            let b = oracle_b(&checker.model, &dfa, k, &table, &cex.borrow())?;
            match b {
                OracleB::TableCex(w) => {
                    rec.oracle_b = Some(Verdict::TableCex);
                    rec.counterexample = Some(ab.format_word(&w));
                    table.add_counterexample(&w, &mut member);
                }
                OracleB::NegativeCex { word, blocking } => {
                    rec.oracle_b = Some(Verdict::NegativeCex);
                    rec.counterexample = Some(ab.format_word(&word));
                    cex.borrow_mut().blocking = blocking;
                    table.refine(&cex.borrow());
                    table.add_counterexample(&word, &mut member);
                }
                OracleB::Pass => {
                    rec.oracle_b = Some(Verdict::Pass);
                    match oracle_s(&checker, &dfa, &sigma_min, &config.engine)? {
                        OracleS::Pass { p_c } => {
                            rec.oracle_s = Some(Verdict::Pass);
                            rec.p_c = Some(p_c);
                            finished = Some(dfa);
                        }
                        OracleS::NegativeCex { word, mass, p_c } => {
                            rec.oracle_s = Some(Verdict::NegativeCex);
                            rec.p_c = Some(p_c);
                            rec.counterexample = Some(ab.format_word(&word));
                            rec.evidence = Some(mass);
                            cex.borrow_mut().violation.insert(word.clone());
                            table.refine(&cex.borrow());
                            table.add_counterexample(&word, &mut member);
                        }
                    }
                }
            }
        }
        monotone &= cex.borrow().contains(&before);
        rec.blocking = names(&ab, &cex.borrow().blocking);
        rec.violation = names(&ab, &cex.borrow().violation);
        info!(
            "iteration {}: P {:?} B {:?} S {:?} cex {:?}",
            iteration, rec.oracle_p, rec.oracle_b, rec.oracle_s, rec.counterexample
        );
        trace.push(rec);

        if let Some(dfa) = finished {
            let dfa = dfa.prune_rejecting();
            let (sound, p_final) = audit_supervisor(pomdp, spec, &dfa)?;
            let complete = oracle_p(&dfa, &sigma_min, k).is_none();
            let cex = cex.into_inner();
            return Ok(SynthesisResult {
                outcome: Outcome::Supervisor(dfa),
                p_final,
                iterations: iteration,
                p_min,
                p_max,
                trace,
                cex,
                audit: Audit { upward_flips: table.upward_flips, monotone, sound, complete },
                conjectures,
                table: Some(table),
            });
        }
    }
    Err(SynthesisError::Budget { budget, trace })
}

/// The iteration trace as JSON lines.
pub fn trace_jsonl(trace: &[IterationRecord]) -> String {
    trace.iter().map(|r| serde_json::to_string(r).expect("serializable") + "\n").collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::pctl::parse_spec;

    fn w(ab: &Alphabet, s: &str) -> Word {
        ab.parse_word(s).unwrap()
    }

    #[test]
    fn membership_examples() {
        let c = Checker::new(&fixtures::worked_example(), &fixtures::spec()).unwrap();
        let ab = c.alphabet();
        let m = MembershipOracle::new(&c);
        let mut cex = CexSets::default();
        assert!(!m.member(&w(&ab, "2"), &cex));
        assert!(m.member(&w(&ab, "13"), &cex));
        assert!(m.member(&w(&ab, "1241"), &cex) == m.member(&w(&ab, "124"), &cex));
        cex.violation.insert(w(&ab, "124"));
        assert!(!m.member(&w(&ab, "1246"), &cex));
        assert!(m.member(&[], &cex));
    }

    #[test]
    fn trivially_all_when_bound_is_one() {
        let m = fixtures::worked_example();
        let spec = parse_spec(r#"P<=1 [ true U<=3 "fail" ]"#).unwrap();
        let r = synthesize(&m, &spec, &SynthesisConfig::default()).unwrap();
        assert!(matches!(r.outcome, Outcome::TriviallyAll(_)));
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn unrealizable_when_failing_at_start() {
        let mut m = fixtures::worked_example();
        m.labels[0].insert("fail".into());
        let spec = parse_spec(r#"P<0 [ true U<=3 "fail" ]"#).unwrap();
        let r = synthesize(&m, &spec, &SynthesisConfig::default()).unwrap();
        match r.outcome {
            Outcome::Unrealizable(d) => assert_eq!(d.language_up_to(3), vec![Word::new()]),
            o => panic!("{:?}", o),
        }
    }

    #[test]
    fn budget_of_worked_example() {
        assert_eq!(iteration_budget(&fixtures::worked_example().alphabet(), 3), 432);
    }

    #[test]
    fn oracle_p_passes_on_supersets() {
        let c = Checker::new(&fixtures::worked_example(), &fixtures::spec()).unwrap();
        let (_, smin) = c.optimal_value(Mode::Min, &|_| vec![0, 1, 2]).unwrap();
        assert_eq!(oracle_p(&ZaDfa::trivial_full(c.alphabet()), &smin, 3), None);
        assert_eq!(oracle_p(&fixtures::fmin(), &smin, 2), None);
        assert!(oracle_p(&ZaDfa::empty(c.alphabet()), &smin, 3).is_some());
    }

    #[test]
    fn oracle_b_asks_for_missing_rows_first() {
        let c = Checker::new(&fixtures::worked_example(), &fixtures::spec()).unwrap();
        let ab = c.alphabet();
        let mut t = ObservationTable::new(ab.clone());
        let f2 = fixtures::f2();
        let none = CexSets::default();
        assert_eq!(oracle_b(&c.model, &f2, 3, &t, &none).unwrap(), OracleB::TableCex(w(&ab, "11")));
        t.y.extend([w(&ab, "1"), w(&ab, "11")]);
        let OracleB::NegativeCex { word, blocking } = oracle_b(&c.model, &f2, 3, &t, &none).unwrap() else { panic!() };
        assert_eq!(word, w(&ab, "11"));
        let names: Vec<String> = blocking.iter().map(|b| ab.format_word(b)).collect();
        assert_eq!(names, ["11", "14", "41", "44"]);
        assert_eq!(oracle_b(&c.model, &fixtures::f5(), 3, &t, &none).unwrap(), OracleB::Pass);
    }

    #[test]
    fn trace_lines_parse() {
        let r = synthesize(&fixtures::worked_example(), &fixtures::spec(), &SynthesisConfig::default()).unwrap();
        let text = trace_jsonl(&r.trace);
        assert_eq!(text.lines().count(), r.iterations);
        for line in text.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert!(v["iteration"].is_u64());
        }
    }
}
