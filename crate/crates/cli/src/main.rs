use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use pomdp_supervisor::alphabet::Alphabet;
use pomdp_supervisor::exact::{Adversary, CheckError, Checker};
use pomdp_supervisor::io::{dfa_to_json, parse_dfa, parse_model};
use pomdp_supervisor::model::{History, Pomdp};
use pomdp_supervisor::pctl::{parse_spec, BoundedUntilSpec};
use pomdp_supervisor::pomcp::PomcpConfig;
use pomdp_supervisor::supervisor::{
    adversary_to_dfa, nonblocking_check, product, simulate_with, DotOptions, SimulationError, ToDot, ZaDfa,
};
use pomdp_supervisor::synthesis::{supervisor_value, synthesize, trace_jsonl, Engine, Outcome, SynthesisConfig, SynthesisError};

const EXIT_INVALID: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_UNREALIZABLE: u8 = 3;
const EXIT_BUDGET: u8 = 4;
const EXIT_BLOCKING: u8 = 5;

/// Synthesize and check observation-based supervisors for POMDPs.
#[derive(Parser)]
#[command(name = "supsynth", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check that a model file is well formed and stochastic.
    Validate {
        #[arg(long)]
        model: PathBuf,
    },
    /// Learn a supervisor for a bounded-until bound.
    Synthesize {
        #[arg(long)]
        model: PathBuf,
        /// Formula text or a file containing it.
        #[arg(long)]
        spec: String,
        /// Output directory for supervisor.json, supervisor.dot and result.json.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        engine: EngineArgs,
        /// Write the iteration trace as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Stop after this many iterations instead of 2·|Σ|^k.
        #[arg(long)]
        max_iterations: Option<usize>,
    },
    /// Compute the worst-case probability under a supervisor or one policy.
    Check {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        spec: String,
        #[arg(long, conflicts_with = "policy", required_unless_present = "policy")]
        supervisor: Option<PathBuf>,
        /// Digit coding ("124") or explicit pairs ("z1:a1,z1:a2").
        #[arg(long)]
        policy: Option<String>,
        #[command(flatten)]
        engine: EngineArgs,
        /// Write the witness adversary as a DOT tree.
        #[arg(long)]
        witness_dot: Option<PathBuf>,
    },
    /// Sample regulated runs with uniform choice among enabled actions.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        supervisor: PathBuf,
        /// Supplies the horizon and the labels counted as violations.
        #[arg(long)]
        spec: String,
        /// Overrides the horizon of the formula.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        runs: usize,
    },
    /// Render a supervisor file as Graphviz.
    ExportDot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Label edges with digits instead of z/a pairs.
        #[arg(long)]
        digits: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineKind {
    Exact,
    Pomcp,
}

#[derive(Args)]
struct EngineArgs {
    #[arg(long, value_enum, default_value = "exact")]
    engine: EngineKind,
    #[arg(long, default_value_t = 100_000)]
    sims: usize,
    #[arg(long, default_value_t = 1.0)]
    ucb_c: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Distance from the bound below which the exact checker decides.
    #[arg(long, default_value_t = 0.05)]
    margin: f64,
}

impl EngineArgs {
    fn engine(&self) -> Engine {
        match self.engine {
            EngineKind::Exact => Engine::Exact,
            EngineKind::Pomcp => Engine::Pomcp {
                config: PomcpConfig { n_simulations: self.sims, ucb_c: self.ucb_c, seed: self.seed, ..PomcpConfig::default() },
                margin: self.margin,
            },
        }
    }
}

/// An error that maps to a specific exit code.
#[derive(Debug)]
struct Exit(u8, anyhow::Error);

fn input<T>(r: Result<T>) -> Result<T, Exit> {
    r.map_err(|e| Exit(EXIT_INPUT, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_model(path: &Path) -> Result<Pomdp, Exit> {
    input(read(path).and_then(|t| parse_model(&t).with_context(|| format!("parsing {}", path.display()))))
}

fn load_spec(arg: &str) -> Result<BoundedUntilSpec, Exit> {
    let text = if Path::new(arg).is_file() { input(read(Path::new(arg)))? } else { arg.to_string() };
    input(parse_spec(&text).map_err(|e| anyhow!("invalid formula: {}", e)))
}

fn load_dfa(path: &Path) -> Result<ZaDfa, Exit> {
    input(read(path).and_then(|t| parse_dfa(&t).with_context(|| format!("parsing {}", path.display()))))
}

fn write(path: &Path, text: &str) -> Result<(), Exit> {
    input(fs::write(path, text).with_context(|| format!("writing {}", path.display())))
}

fn validated(model: &Path) -> Result<Pomdp, Exit> {
    let m = load_model(model)?;
    let violations = m.validate();
    if violations.is_empty() {
        return Ok(m);
    }
    let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
    Err(Exit(EXIT_INVALID, anyhow!("invalid model:\n  {}", list.join("\n  "))))
}

fn blocking(e: CheckError) -> Exit {
    match e {
        CheckError::Blocking { .. } => Exit(EXIT_BLOCKING, e.into()),
        e => Exit(EXIT_INPUT, e.into()),
    }
}

fn cmd_validate(model: &Path) -> Result<(), Exit> {
    let m = validated(model)?;
    println!("ok: {} states, {} actions, {} observations", m.num_states(), m.num_actions(), m.num_observations());
    Ok(())
}

fn cmd_synthesize(
    model: &Path,
    spec: &str,
    out: &Path,
    engine: &EngineArgs,
    trace: Option<&Path>,
    max_iterations: Option<usize>,
) -> Result<(), Exit> {
    let m = validated(model)?;
    let spec = load_spec(spec)?;
    input(fs::create_dir_all(out).with_context(|| format!("creating {}", out.display())))?;
    let config = SynthesisConfig { engine: engine.engine(), max_iterations };
    let r = match synthesize(&m, &spec, &config) {
        Ok(r) => r,
        Err(SynthesisError::Budget { budget, trace: records }) => {
            if let Some(path) = trace {
                write(path, &trace_jsonl(&records))?;
            }
            return Err(Exit(EXIT_BUDGET, anyhow!("iteration budget of {} exhausted", budget)));
        }
        Err(SynthesisError::Check(e)) => return Err(blocking(e)),
        Err(e) => return Err(Exit(EXIT_INPUT, e.into())),
    };
    if let Some(path) = trace {
        write(path, &trace_jsonl(&r.trace))?;
    }
    let dfa = r.outcome.dfa();
    write(&out.join("supervisor.json"), &dfa_to_json(dfa))?;
    write(&out.join("supervisor.dot"), &dfa.to_dot(DotOptions::default()))?;
    let summary = json!({
        "outcome": r.outcome.name(),
        "p_final": r.p_final,
        "iterations": r.iterations,
        "p_min": r.p_min,
        "p_max": r.p_max,
        "states": dfa.num_states(),
        "audit": r.audit,
    });
    let text = serde_json::to_string_pretty(&summary).expect("serializable");
    write(&out.join("result.json"), &(text.clone() + "\n"))?;
    println!("{}", text);
    match r.outcome {
        Outcome::Unrealizable(_) => Err(Exit(EXIT_UNREALIZABLE, anyhow!("no supervisor can meet the bound"))),
        _ => Ok(()),
    }
}

fn witness_json(adv: &Adversary, ab: &Alphabet, m: &Pomdp) -> serde_json::Value {
    adv.iter()
        .map(|(h, &a)| {
            let z = h.last_observation().map_or("", |z| m.observations[z].as_str());
            json!({ "history": ab.format_word(&h.word(ab)), "observation": z, "action": m.actions[a] })
        })
        .collect()
}

fn policy_adversary(y: &[pomdp_supervisor::alphabet::Symbol], ab: &Alphabet) -> Adversary {
    let mut adv = Adversary::default();
    let Some(&first) = y.first() else { return adv };
    let mut h = History::new(ab.observation(first));
    for (i, &s) in y.iter().enumerate() {
        adv.insert(h.clone(), ab.action(s));
        if let Some(&next) = y.get(i + 1) {
            h = h.extended(ab.action(s), ab.observation(next));
        }
    }
    adv
}

fn cmd_check(
    model: &Path,
    spec: &str,
    supervisor: Option<&Path>,
    policy: Option<&str>,
    engine: &EngineArgs,
    witness_dot: Option<&Path>,
) -> Result<(), Exit> {
    let m = validated(model)?;
    let spec = load_spec(spec)?;
    let checker = input(Checker::new(&m, &spec).map_err(anyhow::Error::from))?;
    let ab = m.alphabet();
    let (report, adv) = if let Some(text) = policy {
        let y = input(ab.parse_word(text).map_err(anyhow::Error::from))?;
        let value = checker.policy_string_value(&y);
        let adv = policy_adversary(&y[..y.len().min(spec.k)], &ab);
        let evidence: Vec<serde_json::Value> = checker
            .build_derived_dtmc(&adv)
            .paths()
            .map(|e| json!({ "path": ab.format_word(&e.word), "mass": e.mass }))
            .collect();
        let report = json!({
            "policy": ab.format_word(&y),
            "value": value,
            "satisfied": spec.holds(value),
            "evidence": evidence,
        });
        (report, adv)
    } else {
        let path = supervisor.expect("clap requires one of --supervisor or --policy");
        let dfa = load_dfa(path)?;
        let prod = input(product(&checker.model, &dfa).map_err(anyhow::Error::from))?;
        if let Err(b) = nonblocking_check(&prod, spec.k) {
            return Err(Exit(
                EXIT_BLOCKING,
                anyhow!("supervisor blocks at {} after history {} (depth {})", b.name, ab.format_word(&b.word), b.depth),
            ));
        }
        let r = supervisor_value(&checker, &dfa, &engine.engine()).map_err(blocking)?;
        let report = json!({
            "p_max_obs": r.p_c,
            "satisfied": r.satisfied,
            "witness": witness_json(&r.witness, &ab, &m),
        });
        (report, r.witness)
    };
    if let Some(path) = witness_dot {
        write(path, &adversary_to_dfa(&adv, &ab, spec.k).to_dot(DotOptions::default()))?;
    }
    println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
    Ok(())
}

fn cmd_simulate(model: &Path, supervisor: &Path, spec: &str, k: Option<usize>, seed: u64, runs: usize) -> Result<(), Exit> {
    let m = validated(model)?;
    let mut spec = load_spec(spec)?;
    if let Some(k) = k {
        spec.k = k;
    }
    let dfa = load_dfa(supervisor)?;
    if dfa.alphabet != m.alphabet() {
        return Err(Exit(EXIT_INPUT, anyhow!("supervisor alphabet does not match the model")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pick = |_: &History, en: &[usize], rng: &mut ChaCha8Rng| en[rand::Rng::gen_range(rng, 0..en.len())];
    let mut violations = 0usize;
    for run in 0..runs {
        let t = simulate_with(&m, &dfa, spec.k, &mut rng, &mut pick).map_err(|e| match e {
            SimulationError::Blocking { .. } => Exit(EXIT_BLOCKING, e.into()),
        })?;
        let violated = input(t.satisfies(&m, &spec).map_err(anyhow::Error::from))?;
        violations += usize::from(violated);
        let line = json!({
            "run": run,
            "states": t.states.iter().map(|&s| &m.states[s]).collect::<Vec<_>>(),
            "observations": t.observations.iter().map(|&z| &m.observations[z]).collect::<Vec<_>>(),
            "actions": t.actions.iter().map(|&a| &m.actions[a]).collect::<Vec<_>>(),
            "violated": violated,
        });
        println!("{}", line);
    }
    if runs > 0 {
        let checker = input(Checker::new(&m, &spec).map_err(anyhow::Error::from))?;
        let expected = checker.uniform_value(&|h| dfa.enabled_actions(h)).map_err(blocking)?;
        eprintln!(
            "violations: {}/{} (frequency {:.4}, expected {:.4})",
            violations,
            runs,
            violations as f64 / runs as f64,
            expected
        );
    }
    Ok(())
}

fn cmd_export_dot(input_path: &Path, out: &Path, digits: bool) -> Result<(), Exit> {
    let dfa = load_dfa(input_path)?;
    write(out, &dfa.to_dot(DotOptions { digits }))
}

fn run(cli: Cli) -> Result<(), Exit> {
    match cli.command {
        Command::Validate { model } => cmd_validate(&model),
        Command::Synthesize { model, spec, out, engine, trace, max_iterations } => {
            info!("synthesizing for {}", model.display());
            cmd_synthesize(&model, &spec, &out, &engine, trace.as_deref(), max_iterations)
        }
        Command::Check { model, spec, supervisor, policy, engine, witness_dot } => {
            cmd_check(&model, &spec, supervisor.as_deref(), policy.as_deref(), &engine, witness_dot.as_deref())
        }
        Command::Simulate { model, supervisor, spec, k, seed, runs } => cmd_simulate(&model, &supervisor, &spec, k, seed, runs),
        Command::ExportDot { input, out, digits } => cmd_export_dot(&input, &out, digits),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Exit(code, e)) => {
            eprintln!("error: {:#}", e);
            ExitCode::from(code)
        }
    }
}
