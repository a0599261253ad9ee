//! `hyperabm`: build scenarios, run simulations, calibrate, evolve
//! stabilizers, train gated policies and evaluate solutions.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use hyperabm::hybrid::toy::{toy_learner, toy_registry, TOY_EXPERT};
use hyperabm::hybrid::train::write_curve;
use hyperabm::hybrid::{evaluate, train, Critic, Expert, GateMode, GatedPolicy, Learner, ToyMarket, TrainConfig};
use hyperabm::icofm::build::{synthetic_factors, Layout};
use hyperabm::icofm::factors::write_prices;
use hyperabm::icofm::sim::{write_days, write_trades};
use hyperabm::icofm::solutions::{calibrate_factors, evolve_close_rule, quarters_for, RunReport};
use hyperabm::icofm::{load_factors, load_prices, paired_runs, shock_fixture, IcofmConfig, MarketSetup, Simulation, SHOCK_HORIZON};
use hyperabm::protocol::SolutionFile;
use hyperabm::scenario::ScenarioFile;
use hyperabm::scheduler::{stream_seed, write_events};
use hyperabm::symbolic::EvolutionConfig;
use hyperabm::Error;

#[derive(Parser)]
#[command(name = "hyperabm", version, about = "Hypergraph agent-based market simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Write a market scenario file and synthetic factor data.
    BuildScenario,
    /// Run a scenario and export daily, quarterly, trade and event CSVs.
    Simulate,
    /// Search factor activation masks that reproduce a reference price series.
    Calibrate,
    /// Evolve close-market rules and write the best-ranked solution.
    EvolveMechanism,
    /// Train gated expert/neural policies on the toy market.
    TrainHybrid,
    /// Compare a solution against the baseline on identical seeds.
    EvaluateSolution,
}

/// Lower and upper price-band ratios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Ratios(f64, f64);

fn parse_ratios(s: &str) -> Result<Ratios, String> {
    let parts: Vec<&str> = s.split(',').collect();
    let [lo, hi] = parts.as_slice() else { return Err("expected LOWER,UPPER".into()) };
    let lo: f64 = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("{e}"))?;
    Ok(Ratios(lo, hi))
}

/// Agent counts per role.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Roles(usize, usize, usize);

fn parse_roles(s: &str) -> Result<Roles, String> {
    let n: Vec<usize> = s.split(',').map(|x| x.trim().parse::<usize>().map_err(|e| format!("{e}"))).collect::<Result<_, _>>()?;
    match n.as_slice() {
        [p, c, s] => Ok(Roles(*p, *c, *s)),
        _ => Err("expected PRODUCERS,CONSUMERS,SPECULATORS".into()),
    }
}

/// Flags shared by every command. Each may also come from the `--config`
/// JSON file under the same name; flags win.
#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct Flags {
    /// JSON run configuration.
    #[arg(long, global = true)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Scenario file (JSON).
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Trading days; rollout steps per update for train-hybrid.
    #[arg(long, global = true)]
    horizon: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Generations of evolution.
    #[arg(long, global = true)]
    budget: Option<usize>,
    /// Price-band ratios as LOWER,UPPER (e.g. 0.9,1.1).
    #[arg(long, global = true, value_parser = parse_ratios)]
    bounds: Option<Ratios>,
    #[arg(long, global = true)]
    mu: Option<usize>,
    #[arg(long, global = true)]
    lambda: Option<usize>,
    /// Policy updates for train-hybrid.
    #[arg(long, global = true)]
    train_steps: Option<usize>,
    /// Factor CSV replacing synthetic factors.
    #[arg(long, global = true)]
    factors: Option<PathBuf>,
    /// Reference quarterly prices for calibrate.
    #[arg(long, global = true)]
    reference: Option<PathBuf>,
    /// Solution file to install (simulate, evaluate-solution).
    #[arg(long, global = true)]
    solution: Option<PathBuf>,
    /// Genome columns for evolve-mechanism.
    #[arg(long, global = true)]
    cols: Option<usize>,
    /// Agents per role as PRODUCERS,CONSUMERS,SPECULATORS.
    #[arg(long, global = true, value_parser = parse_roles)]
    agents: Option<Roles>,
}

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default)]
struct FileConfig {
    #[serde(flatten)]
    flags: Flags,
    market: Option<IcofmConfig>,
    train: Option<TrainConfig>,
    mutation_rate: Option<f64>,
}

const CONFIG_KEYS: &[&str] = &[
    "scenario",
    "seed",
    "horizon",
    "out",
    "budget",
    "bounds",
    "mu",
    "lambda",
    "train_steps",
    "factors",
    "reference",
    "solution",
    "cols",
    "agents",
    "market",
    "train",
    "mutation_rate",
];

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn invalid(message: impl std::fmt::Display) -> Self {
        Failure { code: 1, message: message.to_string() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Reference(_) | Error::Contract(_) | Error::Cycle(_) | Error::Decode { .. } | Error::Load { .. } | Error::Domain(_) => 1,
            _ => 2,
        };
        Failure { code, message: e.to_string() }
    }
}

type Outcome<T> = Result<T, Failure>;

/// Reading user-supplied input: every failure is a validation failure.
fn input<T>(what: &Path, r: hyperabm::Result<T>) -> Outcome<T> {
    r.map_err(|e| Failure::invalid(format!("{}: {e}", what.display())))
}

fn output<T>(what: &Path, r: hyperabm::Result<T>) -> Outcome<T> {
    r.map_err(|e| Failure { code: 2, message: format!("{}: {e}", what.display()) })
}

/// Flags merged over the config file.
struct Run {
    flags: Flags,
    market: Option<IcofmConfig>,
    train: Option<TrainConfig>,
    mutation_rate: Option<f64>,
}

impl Run {
    fn resolve(flags: Flags) -> Outcome<Self> {
        let file = match &flags.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Failure::invalid(format!("{}: {e}", p.display())))?;
                let raw: serde_json::Map<String, serde_json::Value> =
                    serde_json::from_str(&text).map_err(|e| Failure::invalid(format!("{}: {e}", p.display())))?;
                if let Some(k) = raw.keys().find(|k| !CONFIG_KEYS.contains(&k.as_str())) {
                    return Err(Failure::invalid(format!("{}: unknown key `{k}`", p.display())));
                }
                serde_json::from_value::<FileConfig>(serde_json::Value::Object(raw))
                    .map_err(|e| Failure::invalid(format!("{}: {e}", p.display())))?
            }
            None => FileConfig::default(),
        };
        let f = file.flags;
        let merged = Flags {
            config: flags.config,
            scenario: flags.scenario.or(f.scenario),
            seed: flags.seed.or(f.seed),
            horizon: flags.horizon.or(f.horizon),
            out: flags.out.or(f.out),
            budget: flags.budget.or(f.budget),
            bounds: flags.bounds.or(f.bounds),
            mu: flags.mu.or(f.mu),
            lambda: flags.lambda.or(f.lambda),
            train_steps: flags.train_steps.or(f.train_steps),
            factors: flags.factors.or(f.factors),
            reference: flags.reference.or(f.reference),
            solution: flags.solution.or(f.solution),
            cols: flags.cols.or(f.cols),
            agents: flags.agents.or(f.agents),
        };
        Ok(Run { flags: merged, market: file.market, train: file.train, mutation_rate: file.mutation_rate })
    }

    fn seed(&self) -> u64 {
        self.flags.seed.unwrap_or(0)
    }

    fn horizon(&self, default: u64) -> u64 {
        self.flags.horizon.unwrap_or(default)
    }

    fn out(&self) -> Outcome<PathBuf> {
        let dir = self.flags.out.clone().unwrap_or_else(|| PathBuf::from("out"));
        std::fs::create_dir_all(&dir).map_err(|e| Failure { code: 2, message: format!("{}: {e}", dir.display()) })?;
        Ok(dir)
    }

    fn evolution(&self) -> EvolutionConfig {
        let d = EvolutionConfig::default();
        EvolutionConfig {
            mu: self.flags.mu.unwrap_or(d.mu),
            lambda: self.flags.lambda.unwrap_or(d.lambda),
            mutation_rate: self.mutation_rate.unwrap_or(d.mutation_rate),
            max_generations: self.flags.budget.unwrap_or(50),
            seed: self.seed(),
            ..d
        }
    }

    /// Market configuration for commands that build the scenario themselves.
    fn market_config(&self, default: IcofmConfig) -> Outcome<IcofmConfig> {
        let mut cfg = self.market.clone().unwrap_or(default);
        if let Some(Roles(p, c, s)) = self.flags.agents {
            cfg.producers = p;
            cfg.consumers = c;
            cfg.speculators = s;
        }
        if let Some(Ratios(lo, hi)) = self.flags.bounds {
            cfg.lower_ratio = lo;
            cfg.upper_ratio = hi;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn scenario(&self, default: IcofmConfig) -> Outcome<ScenarioFile> {
        let Some(path) = &self.flags.scenario else { return Ok(ScenarioFile::market(&self.market_config(default)?)?) };
        if self.flags.agents.is_some() {
            return Err(Failure::invalid("--agents only applies when the scenario is built, not loaded"));
        }
        let mut file = input(path, ScenarioFile::load(path))?;
        let market =
            file.market.as_mut().ok_or_else(|| Failure::invalid(format!("{}: scenario has no market configuration", path.display())))?;
        if let Some(Ratios(lo, hi)) = self.flags.bounds {
            market.lower_ratio = lo;
            market.upper_ratio = hi;
        }
        market.validate()?;
        Ok(file)
    }

    fn setup(&self, default: IcofmConfig, days: u64) -> Outcome<MarketSetup> {
        let file = self.scenario(default)?;
        let frame = match &self.flags.factors {
            Some(p) => Some(input(p, load_factors(p))?),
            None => None,
        };
        Ok(MarketSetup::from_scenario(&file, frame, self.seed(), days)?)
    }

    fn solution(&self) -> Outcome<Option<SolutionFile>> {
        match &self.flags.solution {
            Some(p) => Ok(Some(input(p, SolutionFile::load(p))?)),
            None => Ok(None),
        }
    }
}

fn create(path: &Path) -> Outcome<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Failure { code: 2, message: format!("{}: {e}", path.display()) })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Outcome<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure { code: 2, message: e.to_string() })?;
    std::fs::write(path, text + "\n").map_err(|e| Failure { code: 2, message: format!("{}: {e}", path.display()) })
}

fn write_text(path: &Path, text: &str) -> Outcome<()> {
    std::fs::write(path, text).map_err(|e| Failure { code: 2, message: format!("{}: {e}", path.display()) })
}

fn export_run(dir: &Path, prefix: &str, sim: &Simulation) -> Outcome<()> {
    let p = dir.join(format!("{prefix}daily.csv"));
    output(&p, write_days(&sim.host.days, create(&p)?))?;
    let p = dir.join(format!("{prefix}trades.csv"));
    output(&p, write_trades(&sim.host.trades, create(&p)?))
}

const DEFAULT_DAYS: u64 = 60;

fn build_scenario(run: &Run) -> Outcome<String> {
    let cfg = run.market_config(IcofmConfig::default())?;
    let file = ScenarioFile::market(&cfg)?;
    let dir = run.out()?;
    let p = dir.join("scenario.json");
    output(&p, file.save(&p))?;
    let frame = synthetic_factors(&cfg, quarters_for(&cfg, run.horizon(DEFAULT_DAYS)), run.seed());
    let p = dir.join("factors.csv");
    output(&p, frame.write_csv(create(&p)?))?;
    Ok(format!("wrote scenario with {} properties and {} mechanisms", file.properties.len(), file.mechanisms.len()))
}

fn simulate(run: &Run) -> Outcome<String> {
    let days = run.horizon(DEFAULT_DAYS);
    let setup = run.setup(IcofmConfig::default(), days)?;
    let solution = run.solution()?;
    let sim = setup.run(solution.as_ref(), days)?;
    let dir = run.out()?;
    export_run(&dir, "", &sim)?;
    let p = dir.join("prices.csv");
    output(&p, write_prices(&sim.quarterly_prices(), create(&p)?))?;
    let p = dir.join("events.csv");
    output(&p, write_events(&sim.events, create(&p)?))?;
    let report = RunReport::from_days(&sim.host.days, sim.host.trades.len());
    write_json(&dir.join("summary.json"), &report)?;
    Ok(format!("simulated {} days: {} trades, {} breaches", report.days, report.trades, report.breaches))
}

#[derive(Serialize)]
struct MaskReport<'a> {
    factors: Vec<&'a str>,
    mask: &'a [bool],
    fitness: f64,
}

fn calibrate(run: &Run) -> Outcome<String> {
    let path = run.flags.reference.as_ref().ok_or_else(|| Failure::invalid("calibrate needs --reference"))?;
    let reference = input(path, load_prices(path))?;
    // by default the run spans exactly the reference quarters
    let per_quarter = run.scenario(IcofmConfig::default())?.market.map_or(IcofmConfig::default().days_per_quarter, |m| m.days_per_quarter);
    let days = run.horizon(reference.len() as u64 * per_quarter as u64);
    let setup = run.setup(IcofmConfig::default(), days)?;
    let result = calibrate_factors(&setup, &reference, days, &run.evolution())?;
    let dir = run.out()?;
    let layout = Layout::resolve(&setup.graph)?;
    let names = layout.factor_props.iter().map(|p| setup.graph.properties()[p.0].name.as_str()).collect();
    write_json(&dir.join("mask.json"), &MaskReport { factors: names, mask: &result.mask, fitness: result.fitness })?;
    let history: String = std::iter::once("generation,fitness\n".to_string())
        .chain(result.history.iter().enumerate().map(|(g, f)| format!("{g},{f:?}\n")))
        .collect();
    write_text(&dir.join("history.csv"), &history)?;
    let solution = SolutionFile { genome: None, fitness: Some(result.fitness), complexity: None, operations: vec![result.operation] };
    let p = dir.join("solution.txt");
    output(&p, solution.save(&p))?;
    let kept = result.mask.iter().filter(|b| **b).count();
    Ok(format!("kept {kept} of {} factors, fitness {:?}", result.mask.len(), result.fitness))
}

fn evolve_mechanism(run: &Run) -> Outcome<String> {
    let days = run.horizon(SHOCK_HORIZON);
    let setup = run.setup(shock_fixture(), days)?;
    let cols = run.flags.cols.unwrap_or(8);
    if cols == 0 {
        return Err(Failure::invalid("--cols must be positive"));
    }
    let (solution, ranking, history) = evolve_close_rule(&setup, days, cols, &run.evolution())?;
    let dir = run.out()?;
    let p = dir.join("solution.txt");
    output(&p, solution.save(&p))?;
    let mut table = String::from("rank,index,fitness,complexity,needs_expert_review\n");
    for (rank, r) in ranking.iter().enumerate() {
        table.push_str(&format!("{rank},{},{:?},{:?},{}\n", r.index, r.candidate.fitness, r.candidate.complexity, r.needs_expert_review));
    }
    write_text(&dir.join("ranking.csv"), &table)?;
    let history: String =
        std::iter::once("generation,score\n".to_string()).chain(history.iter().enumerate().map(|(g, f)| format!("{g},{f:?}\n"))).collect();
    write_text(&dir.join("history.csv"), &history)?;
    Ok(format!("best rule: fitness {:?}, complexity {:?}", solution.fitness.unwrap_or(f64::NAN), solution.complexity.unwrap_or(f64::NAN)))
}

#[derive(Serialize)]
struct TrainReport {
    updates: usize,
    expert_baseline: f64,
    initial: f64,
    trained: f64,
    evaluation_episodes: usize,
}

const EPISODE_LEN: usize = 25;
const EVAL_EPISODES: usize = 50;
const HIDDEN: [usize; 2] = [32, 32];

fn train_hybrid(run: &Run) -> Outcome<String> {
    let base = run.train.clone().unwrap_or(TrainConfig { agents: 2, minibatch: 100, horizon: 500, ..TrainConfig::default() });
    let cfg = TrainConfig { seed: run.seed(), horizon: run.flags.horizon.map_or(base.horizon, |h| h as usize), ..base };
    cfg.validate()?;
    let updates = run.flags.train_steps.unwrap_or(150);
    let mut env = ToyMarket::new(cfg.agents, EPISODE_LEN)?;
    let expert = Expert::from_registry(&toy_registry()?, TOY_EXPERT)?;
    let make = |gate: GateMode| -> hyperabm::Result<Vec<Learner>> {
        (0..cfg.agents).map(|i| toy_learner(&env, expert.clone(), gate, &HIDDEN, &cfg, i)).collect()
    };
    let score = |env: &mut ToyMarket, learners: &[Learner]| {
        let p: Vec<&GatedPolicy> = learners.iter().map(|l| &l.policy).collect();
        let c: Vec<&Critic> = learners.iter().map(|l| &l.critic).collect();
        evaluate(env, &p, &c, EVAL_EPISODES, EPISODE_LEN, stream_seed(&[cfg.seed, 0xe7a1]))
    };
    let expert_only = make(GateMode::Fixed(0.0))?;
    let mut learners = make(GateMode::Learned)?;
    let expert_baseline = score(&mut env, &expert_only)?;
    let initial = score(&mut env, &learners)?;
    let curve = train(&mut env, &mut learners, &cfg, updates)?;
    let trained = score(&mut env, &learners)?;
    if !trained.is_finite() {
        return Err(Failure { code: 2, message: format!("training diverged: evaluation reward {trained}") });
    }
    let dir = run.out()?;
    let p = dir.join("curve.csv");
    output(&p, write_curve(&curve, create(&p)?))?;
    let ck = dir.join("checkpoints");
    std::fs::create_dir_all(&ck).map_err(|e| Failure { code: 2, message: format!("{}: {e}", ck.display()) })?;
    for (i, l) in learners.iter().enumerate() {
        let p = ck.join(format!("agent{i}_actor"));
        output(&p, l.policy.net.actor.save(&p))?;
        let p = ck.join(format!("agent{i}_critic"));
        output(&p, l.critic.net.save(&p))?;
        write_json(&ck.join(format!("agent{i}_actor_normalizer.json")), &l.policy.net.normalizer)?;
        write_json(&ck.join(format!("agent{i}_critic_normalizer.json")), &l.critic.normalizer)?;
    }
    write_json(&dir.join("report.json"), &TrainReport { updates, expert_baseline, initial, trained, evaluation_episodes: EVAL_EPISODES })?;
    Ok(format!("mean episode reward: expert {expert_baseline:.4}, initial {initial:.4}, trained {trained:.4}"))
}

fn evaluate_solution(run: &Run) -> Outcome<String> {
    let solution = run.solution()?.ok_or_else(|| Failure::invalid("evaluate-solution needs --solution"))?;
    let days = run.horizon(SHOCK_HORIZON);
    let setup = run.setup(shock_fixture(), days)?;
    let (base, treated, report) = paired_runs(&setup, &solution, days)?;
    let dir = run.out()?;
    export_run(&dir, "baseline_", &base)?;
    export_run(&dir, "solution_", &treated)?;
    write_json(&dir.join("report.json"), &report)?;
    Ok(format!(
        "breaches {} -> {}, volume {} -> {}",
        report.baseline.breaches, report.solution.breaches, report.baseline.volume, report.solution.volume
    ))
}

fn dispatch(command: Command, run: &Run) -> Outcome<String> {
    match command {
        Command::BuildScenario => build_scenario(run),
        Command::Simulate => simulate(run),
        Command::Calibrate => calibrate(run),
        Command::EvolveMechanism => evolve_mechanism(run),
        Command::TrainHybrid => train_hybrid(run),
        Command::EvaluateSolution => evaluate_solution(run),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match Run::resolve(cli.flags).and_then(|run| dispatch(cli.command, &run)) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
