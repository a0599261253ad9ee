//! Elitist μ+λ evolution over genomes and activation masks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::genome::{decode_genome, run_program, CgpGenome, GenomeShape, DEFAULT_LOOP_CAP};
use super::operators::{Datum, Operator, OperatorContext};
use crate::error::{Error, Result};
use crate::hypergraph::Hypergraph;
use crate::protocol::{apply_mask, ComponentType, OperationVector};
use crate::scalar::at_or_above;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub mu: usize,
    pub lambda: usize,
    pub mutation_rate: f64,
    pub max_generations: usize,
    pub loop_cap: usize,
    pub seed: u64,
    /// Stop as soon as the best fitness reaches this value.
    #[serde(default)]
    pub target_fitness: Option<f64>,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            mu: 4,
            lambda: 16,
            mutation_rate: 0.05,
            max_generations: 200,
            loop_cap: DEFAULT_LOOP_CAP,
            seed: 0,
            target_fitness: None,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mu == 0 {
            return Err(Error::Contract("mu must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return Err(Error::Contract(format!("mutation rate {} outside [0, 1]", self.mutation_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionResult<C> {
    pub best: C,
    pub best_fitness: f64,
    /// Best fitness after initialization and after each generation.
    pub history: Vec<f64>,
    pub generations: usize,
    /// Final parents with their fitness, best first.
    pub population: Vec<(C, f64)>,
}

fn sanitize(f: f64) -> f64 {
    if f.is_nan() {
        f64::INFINITY
    } else {
        f
    }
}

/// Generic elitist μ+λ loop; lower fitness is better. Offspring are drawn
/// from uniformly chosen parents. On ties parents rank ahead of offspring, so a
/// parent is only displaced by a strictly better child.
pub fn mu_lambda<C, M, F>(config: &EvolutionConfig, initial: Vec<C>, mut mutate: M, fitness: F) -> Result<EvolutionResult<C>>
where
    C: Clone + Send + Sync,
    M: FnMut(&C, &mut ChaCha8Rng) -> C,
    F: Fn(&C) -> f64 + Sync,
{
    config.validate()?;
    if initial.is_empty() {
        return Err(Error::Contract("initial population is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_0f_e70);
    let scores: Vec<f64> = initial.par_iter().map(|c| sanitize(fitness(c))).collect();
    let mut pop: Vec<(C, f64)> = initial.into_iter().zip(scores).collect();
    pop.sort_by(|a, b| a.1.total_cmp(&b.1));
    pop.truncate(config.mu);
    let mut history = vec![pop[0].1];
    let reached = |f: f64| config.target_fitness.is_some_and(|t| f <= t);
    let mut generations = 0;
    while generations < config.max_generations && config.lambda > 0 && !reached(pop[0].1) {
        let children: Vec<C> = (0..config.lambda)
            .map(|_| {
                let parent = &pop[rng.random_range(0..pop.len())].0;
                mutate(parent, &mut rng)
            })
            .collect();
        let scores: Vec<f64> = children.par_iter().map(|c| sanitize(fitness(c))).collect();
        pop.extend(children.into_iter().zip(scores));
        // Stable: parents stay ahead of equally fit children.
        pop.sort_by(|a, b| a.1.total_cmp(&b.1));
        pop.truncate(config.mu);
        history.push(pop[0].1);
        generations += 1;
    }
    let (best, best_fitness) = pop[0].clone();
    Ok(EvolutionResult { best, best_fitness, history, generations, population: pop })
}

/// μ+λ over CGP genomes. The population is seeded with `initial` (when
/// given) and filled up with random decodable genomes.
pub fn evolve<F>(
    config: &EvolutionConfig,
    shape: &GenomeShape,
    fitness: F,
    initial: Option<CgpGenome>,
) -> Result<EvolutionResult<CgpGenome>>
where
    F: Fn(&CgpGenome) -> f64 + Sync,
{
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut pop = Vec::with_capacity(config.mu);
    if let Some(g) = initial {
        if &g.shape != shape {
            return Err(Error::Contract("initial genome has a different shape".into()));
        }
        decode_genome(&g)?;
        pop.push(g);
    }
    while pop.len() < config.mu {
        pop.push(CgpGenome::random(shape, &mut rng)?);
    }
    let rate = config.mutation_rate;
    let cfg = EvolutionConfig { seed: rng.random(), ..config.clone() };
    mu_lambda(&cfg, pop, |g, rng| g.mutate(rate, rng), fitness)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskResult {
    /// One bit per eligible component.
    pub mask: Vec<bool>,
    pub fitness: f64,
    pub history: Vec<f64>,
    /// Elimination op that installs the mask on the original graph.
    pub operation: OperationVector,
}

/// Searches activation states of the `eligible` components. Each candidate is
/// applied as an elimination to a private copy of `graph` and scored by
/// `evaluate`; failing candidates score +∞. Starts from the all-active mask.
pub fn evolve_activation_mask<F>(
    graph: &Hypergraph,
    component: ComponentType,
    eligible: &[usize],
    config: &EvolutionConfig,
    evaluate: F,
) -> Result<MaskResult>
where
    F: Fn(&Hypergraph) -> Result<f64> + Sync,
{
    config.validate()?;
    let base = match component {
        ComponentType::Node => graph.node_mask(),
        ComponentType::Hyperedge => graph.edge_mask(),
    };
    if let Some(i) = eligible.iter().find(|i| **i >= base.len()) {
        return Err(Error::Reference(format!("component {i} is not in the graph")));
    }
    let full_mask = |bits: &[bool]| {
        let mut m = base.clone();
        for (slot, bit) in eligible.iter().zip(bits) {
            m[*slot] = *bit;
        }
        m
    };
    let score = |bits: &Vec<bool>| {
        let mut g = graph.clone();
        apply_mask(&mut g, component, &full_mask(bits)).and_then(|_| evaluate(&g)).unwrap_or(f64::INFINITY)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut pop = vec![vec![true; eligible.len()]];
    while pop.len() < config.mu {
        pop.push((0..eligible.len()).map(|_| rng.random_bool(0.5)).collect());
    }
    let rate = config.mutation_rate;
    let cfg = EvolutionConfig { seed: rng.random(), ..config.clone() };
    let flip = |bits: &Vec<bool>, rng: &mut ChaCha8Rng| bits.iter().map(|b| if rng.random_bool(rate) { !b } else { *b }).collect();
    let r = mu_lambda(&cfg, pop, flip, score)?;
    let mask = full_mask(&r.best);
    Ok(MaskResult { mask: r.best, fitness: r.best_fitness, history: r.history, operation: OperationVector::Eliminate { component, mask } })
}

/// Operator set for the threshold recovery task: everything except the
/// threshold operators themselves and the control-flow markers.
pub fn threshold_recovery_shape(cols: usize) -> GenomeShape {
    let ops = vec![
        Operator::Add,
        Operator::Sub,
        Operator::Mul,
        Operator::Div,
        Operator::X01,
        Operator::Neg,
        Operator::Const1,
        Operator::Const01,
        Operator::Gt,
        Operator::Lt,
        Operator::Not,
    ];
    GenomeShape::new(2, 1, 1, cols, ops)
}

/// Grid of the threshold recovery task. Values start at 10 so that small
/// ratios are not reproduced by a bare `x > y`.
pub const RECOVERY_GRID: std::ops::RangeInclusive<i32> = 10..=19;

/// Misclassifications of the upper-limit rule `x >= y * (1 + r)` (inclusive,
/// as the limit operator compares) over the 100-point grid
/// [`RECOVERY_GRID`] squared. A positive output means "fires".
pub fn threshold_recovery_fitness(genome: &CgpGenome, ratio: f64) -> f64 {
    let Ok(program) = decode_genome(genome) else { return f64::INFINITY };
    let ctx = OperatorContext::default();
    let mut errors = 0usize;
    for x in RECOVERY_GRID {
        for y in RECOVERY_GRID {
            let (x, y) = (f64::from(x), f64::from(y));
            let want = at_or_above(x, y * (1.0 + ratio));
            let inputs = [Datum::Scalar(x), Datum::Scalar(y)];
            let got = match run_program(&program, &inputs, &ctx, DEFAULT_LOOP_CAP) {
                Ok(out) => out.outputs[0].to_scalar() > 0.0,
                Err(_) => return f64::INFINITY,
            };
            errors += usize::from(got != want);
        }
    }
    errors as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_lambda_keeps_initial_best() {
        let cfg = EvolutionConfig { lambda: 0, ..Default::default() };
        let r = mu_lambda(&cfg, vec![3.0_f64, 1.0, 2.0], |x, _| *x, |x| *x).unwrap();
        assert_eq!(r.best, 1.0);
        assert_eq!(r.history, vec![1.0]);
    }

    #[test]
    fn history_is_non_increasing() {
        let cfg = EvolutionConfig { max_generations: 50, ..Default::default() };
        let r = mu_lambda(&cfg, vec![100i64; 4], |x, rng| x + rng.random_range(-3..=3), |x| (*x as f64).abs()).unwrap();
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
        assert!(r.best_fitness < 100.0);
    }

    #[test]
    fn nan_fitness_ranks_last() {
        let cfg = EvolutionConfig { lambda: 0, mu: 2, ..Default::default() };
        let r = mu_lambda(&cfg, vec![f64::NAN, 5.0], |x, _| *x, |x| *x).unwrap();
        assert_eq!(r.best_fitness, 5.0);
    }

    #[test]
    fn exact_threshold_program_scores_zero() {
        let shape = threshold_recovery_shape(4);
        let idx = |op| shape.operators.iter().position(|o| *o == op).unwrap();
        let node = |op, a, b| super::super::NodeGene { function: idx(op), inputs: vec![a, b, 0] };
        // Not(Lt(x, Add(y, x01(y))))  <=>  x >= 1.1 y
        let inclusive = CgpGenome {
            nodes: vec![node(Operator::X01, 1, 0), node(Operator::Add, 1, 2), node(Operator::Lt, 0, 3), node(Operator::Not, 4, 0)],
            outputs: vec![5],
            shape: shape.clone(),
        };
        assert_eq!(threshold_recovery_fitness(&inclusive, 0.1), 0.0);
        // Sub(x, Add(y, x01(y))) > 0 misses only the boundary point (11, 10).
        let strict = CgpGenome {
            outputs: vec![4],
            nodes: vec![node(Operator::X01, 1, 0), node(Operator::Add, 1, 2), node(Operator::Sub, 0, 3), node(Operator::Not, 4, 0)],
            shape: shape.clone(),
        };
        assert_eq!(threshold_recovery_fitness(&strict, 0.1), 1.0);
        // A bare comparison is not enough on this grid.
        let bare = CgpGenome {
            outputs: vec![2],
            nodes: vec![node(Operator::Gt, 0, 1), node(Operator::Not, 2, 0), node(Operator::Not, 3, 0), node(Operator::Not, 4, 0)],
            shape,
        };
        assert!(threshold_recovery_fitness(&bare, 0.1) > 0.0);
    }
}
