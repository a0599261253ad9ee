//! Stabilizer candidates and paired baseline/treated runs.

use serde::{Deserialize, Serialize};

use super::build::{close_market_ops, limit_context, synthetic_factors, Layout};
use super::factors::FactorFrame;
use super::host::DayRecord;
use super::sim::Simulation;
use super::{IcofmConfig, Shock, Side};
use crate::error::{Error, Result};
use crate::hypergraph::Hypergraph;
use crate::metrics::{
    rank_solutions, reproduction_fitness, BollingerConfig, Candidate, Ranked, ReproductionFitConfig, StabilizationConfig,
};
use crate::protocol::ComponentType;
use crate::protocol::{OperationVector, SolutionFile};
use crate::registry::{FnEntry, FnId};
use crate::scenario::ScenarioFile;
use crate::scheduler::Scheduler;
use crate::symbolic::{
    decode_genome, evolve, evolve_activation_mask, structural_complexity, CgpGenome, EvolutionConfig, GenomeShape, MaskResult, Operator,
};

/// Name under which a solution's genome is registered.
pub const SOLUTION_FN: &str = "solution_program";

/// Trading days of the scripted-shock fixture: one settle cycle.
pub const SHOCK_HORIZON: u64 = 20;

/// Default market plus a 50-contract sell order at 80% of the open on day 2.
pub fn shock_fixture() -> IcofmConfig {
    IcofmConfig {
        shocks: vec![Shock { day: 2, round: 1, side: Side::Ask, price_ratio: Some(0.8), quantity: 50 }],
        ..IcofmConfig::default()
    }
}

/// Quarters of factor data needed for `days` trading days.
pub fn quarters_for(cfg: &IcofmConfig, days: u64) -> usize {
    (days as usize).div_ceil(cfg.days_per_quarter).max(1)
}

/// Market model ready to run: scenario, its factor frame and the seed.
#[derive(Debug, Clone)]
pub struct MarketSetup {
    pub cfg: IcofmConfig,
    pub graph: Hypergraph,
    pub scheduler: Scheduler,
    pub frame: FactorFrame,
    pub seed: u64,
}

impl MarketSetup {
    /// From a scenario file; synthetic factors are drawn from `seed` unless a
    /// frame is given.
    pub fn from_scenario(file: &ScenarioFile, frame: Option<FactorFrame>, seed: u64, days: u64) -> Result<Self> {
        let cfg = file.market.clone().ok_or_else(|| Error::Contract("scenario has no market configuration".into()))?;
        let (graph, scheduler) = file.to_model()?;
        let frame = frame.unwrap_or_else(|| synthetic_factors(&cfg, quarters_for(&cfg, days), seed));
        Ok(MarketSetup { cfg, graph, scheduler, frame, seed })
    }

    pub fn new(cfg: &IcofmConfig, seed: u64, days: u64) -> Result<Self> {
        Self::from_scenario(&ScenarioFile::market(cfg)?, None, seed, days)
    }

    /// Registers a program function from genome integers under [`SOLUTION_FN`].
    pub fn register_genome(&mut self, genome: &[i64]) -> Result<FnId> {
        let program = decode_genome(&CgpGenome::from_ints(genome)?)?;
        self.graph.register_fn(FnEntry::program(SOLUTION_FN, program, limit_context(&self.cfg)?))
    }

    /// Applies a solution (genome first, then its operations) and runs it.
    pub fn run(&self, solution: Option<&SolutionFile>, days: u64) -> Result<Simulation> {
        let mut setup = self.clone();
        if let Some(genome) = solution.and_then(|s| s.genome.as_ref()) {
            setup.register_genome(genome)?;
        }
        let mut sim = Simulation::from_parts(setup.graph, setup.scheduler, setup.cfg, setup.frame, setup.seed)?;
        if let Some(s) = solution {
            sim.apply_all(&s.operations)?;
        }
        sim.run(days)?;
        Ok(sim)
    }
}

/// Aggregates of one run, as reported by `evaluate-solution`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub days: usize,
    pub trades: usize,
    pub volume: u64,
    pub breaches: usize,
    pub halted_days: usize,
    /// Stabilization fitness (larger is better); absent for runs shorter
    /// than the band window.
    pub fitness: Option<f64>,
}

impl RunReport {
    pub fn from_days(days: &[DayRecord], trades: usize) -> Self {
        let closes: Vec<f64> = days.iter().map(|d| d.close as f64).collect();
        let volumes: Vec<f64> = days.iter().map(|d| d.volume as f64).collect();
        RunReport {
            days: days.len(),
            trades,
            volume: days.iter().map(|d| d.volume).sum(),
            breaches: days.iter().map(|d| d.breaches).sum(),
            halted_days: days.iter().filter(|d| d.halted).count(),
            fitness: stabilization(&closes, &volumes),
        }
    }
}

pub fn stabilization(closes: &[f64], volumes: &[f64]) -> Option<f64> {
    crate::metrics::stabilization_fitness(closes, volumes, &BollingerConfig::default(), &StabilizationConfig::default()).ok()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedReport {
    pub baseline: RunReport,
    pub solution: RunReport,
    pub complexity: Option<f64>,
    pub delta_breaches: i64,
    pub delta_fitness: Option<f64>,
    pub delta_volume: i64,
}

impl PairedReport {
    pub fn new(baseline: RunReport, solution: RunReport, complexity: Option<f64>) -> Self {
        PairedReport {
            delta_breaches: solution.breaches as i64 - baseline.breaches as i64,
            delta_fitness: baseline.fitness.zip(solution.fitness).map(|(b, s)| s - b),
            delta_volume: solution.volume as i64 - baseline.volume as i64,
            baseline,
            solution,
            complexity,
        }
    }
}

/// Structural complexity of a solution's genome, if it carries one.
pub fn solution_complexity(solution: &SolutionFile) -> Result<Option<f64>> {
    match &solution.genome {
        Some(g) => Ok(Some(structural_complexity(&decode_genome(&CgpGenome::from_ints(g)?)?))),
        None => Ok(None),
    }
}

/// Baseline and treated runs on identical seeds and factor data.
pub fn paired_runs(setup: &MarketSetup, solution: &SolutionFile, days: u64) -> Result<(Simulation, Simulation, PairedReport)> {
    let base = setup.run(None, days)?;
    let treated = setup.run(Some(solution), days)?;
    let report = PairedReport::new(
        RunReport::from_days(&base.host.days, base.host.trades.len()),
        RunReport::from_days(&treated.host.days, treated.host.trades.len()),
        solution_complexity(solution)?,
    );
    Ok((base, treated, report))
}

/// Genome layout for evolved close-market rules: inputs (live price,
/// opening price), one Boolean output.
pub fn close_rule_shape(cols: usize) -> GenomeShape {
    let ops = vec![
        Operator::LimUp,
        Operator::LimDown,
        Operator::Or,
        Operator::And,
        Operator::Not,
        Operator::Gt,
        Operator::Lt,
        Operator::Add,
        Operator::Sub,
        Operator::Mul,
        Operator::Const1,
        Operator::Const01,
    ];
    GenomeShape::new(2, 1, 1, cols, ops)
}

/// Solution installing `genome` as the close-market rule.
pub fn close_rule_solution(setup: &MarketSetup, genome: &CgpGenome) -> Result<SolutionFile> {
    let mut probe = setup.clone();
    let fid = probe.register_genome(&genome.to_ints())?;
    let operations: Vec<OperationVector> = close_market_ops(&probe.graph, Some(fid))?;
    Ok(SolutionFile { genome: Some(genome.to_ints()), fitness: None, complexity: None, operations })
}

/// Minimized score of a close-market genome: the negated stabilization
/// fitness of the treated run; undecodable or failing genomes score +inf.
pub fn close_rule_score(setup: &MarketSetup, genome: &CgpGenome, days: u64) -> f64 {
    let run = || -> Result<f64> {
        let sol = close_rule_solution(setup, genome)?;
        let sim = setup.run(Some(&sol), days)?;
        let r = RunReport::from_days(&sim.host.days, sim.host.trades.len());
        r.fitness.map(|f| -f).ok_or_else(|| Error::Contract("horizon shorter than the band window".into()))
    };
    run().unwrap_or(f64::INFINITY)
}

/// Evolves a close-market rule and returns the best-ranked final parent as
/// a solution carrying its fitness and complexity, plus the full ranking.
pub fn evolve_close_rule(
    setup: &MarketSetup,
    days: u64,
    cols: usize,
    config: &EvolutionConfig,
) -> Result<(SolutionFile, Vec<Ranked>, Vec<f64>)> {
    let shape = close_rule_shape(cols);
    let result = evolve(config, &shape, |g| close_rule_score(setup, g, days), None)?;
    let candidates = result
        .population
        .iter()
        .map(|(g, score)| -> Result<Candidate> { Ok(Candidate { fitness: -score, complexity: structural_complexity(&decode_genome(g)?) }) })
        .collect::<Result<Vec<_>>>()?;
    let ranking = rank_solutions(&candidates);
    let top = &ranking[0];
    let mut solution = close_rule_solution(setup, &result.population[top.index].0)?;
    solution.fitness = Some(top.candidate.fitness);
    solution.complexity = Some(top.candidate.complexity);
    Ok((solution, ranking, result.history))
}

/// Quarterly mean closes of a run on `graph` with the setup's plan and data.
pub fn quarterly_run(setup: &MarketSetup, graph: &Hypergraph, days: u64) -> Result<Vec<f64>> {
    let mut sim = Simulation::from_parts(graph.clone(), setup.scheduler.clone(), setup.cfg.clone(), setup.frame.clone(), setup.seed)?;
    sim.run(days)?;
    Ok(sim.quarterly_prices())
}

/// Searches which factor properties to keep so that simulated quarterly
/// prices track `reference` (compared over the simulated quarters).
pub fn calibrate_factors(setup: &MarketSetup, reference: &[f64], days: u64, config: &EvolutionConfig) -> Result<MaskResult> {
    let eligible: Vec<usize> = Layout::resolve(&setup.graph)?.factor_props.iter().map(|p| p.0).collect();
    let quarters = quarterly_run(setup, &setup.graph, days)?.len();
    if quarters < 2 {
        return Err(Error::Contract("calibration needs at least two simulated quarters".into()));
    }
    if reference.len() < quarters {
        return Err(Error::Contract(format!("reference has {} quarters, the run needs {quarters}", reference.len())));
    }
    let reference = &reference[..quarters];
    evolve_activation_mask(&setup.graph, ComponentType::Node, &eligible, config, |g| {
        reproduction_fitness(reference, &quarterly_run(setup, g, days)?, &ReproductionFitConfig::default())
    })
}
