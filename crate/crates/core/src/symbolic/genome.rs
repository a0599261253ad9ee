//! Cartesian genomes, their decoding into executable programs, and the
//! program interpreter with `If-else` / `While` control flow.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::operators::{eval_operator, Datum, Operator, OperatorContext, FAULT_SENTINEL};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_LOOP_CAP: usize = 1000;

/// Grid geometry and operator set shared by a population.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenomeShape {
    pub n_inputs: usize,
    pub n_outputs: usize,
    pub rows: usize,
    pub cols: usize,
    pub levels_back: usize,
    /// Connection genes per node; `Comb` consumes all of them.
    pub max_arity: usize,
    pub operators: Vec<Operator>,
}

impl GenomeShape {
    pub fn new(n_inputs: usize, n_outputs: usize, rows: usize, cols: usize, operators: Vec<Operator>) -> Self {
        GenomeShape { n_inputs, n_outputs, rows, cols, levels_back: cols, max_arity: 3, operators }
    }

    pub fn n_nodes(&self) -> usize {
        self.rows * self.cols
    }

    fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 || self.levels_back == 0 || self.operators.is_empty() {
            return Err(Error::Contract("genome grid and operator set must be non-empty".into()));
        }
        if self.n_outputs == 0 {
            return Err(Error::Contract("genome needs at least one output".into()));
        }
        if self.n_inputs == 0 && self.operators.iter().all(|o| o.used_inputs(self.max_arity) > 0) {
            return Err(Error::Contract("no inputs and no constant operators".into()));
        }
        Ok(())
    }

    /// Admissible connection addresses of node `j` (inputs come first).
    fn connection_ranges(&self, j: usize) -> (usize, std::ops::Range<usize>) {
        let col = j / self.rows;
        let lo = col.saturating_sub(self.levels_back) * self.rows;
        let hi = col * self.rows;
        (self.n_inputs, self.n_inputs + lo..self.n_inputs + hi)
    }

    fn connection_valid(&self, j: usize, addr: usize) -> bool {
        let (inputs, nodes) = self.connection_ranges(j);
        addr < inputs || nodes.contains(&addr)
    }

    fn sample_connection(&self, j: usize, rng: &mut impl Rng) -> usize {
        let (inputs, nodes) = self.connection_ranges(j);
        let total = inputs + nodes.len();
        if total == 0 {
            return 0;
        }
        let k = rng.random_range(0..total);
        if k < inputs {
            k
        } else {
            nodes.start + (k - inputs)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeGene {
    /// Index into `GenomeShape::operators`.
    pub function: usize,
    pub inputs: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CgpGenome {
    pub shape: GenomeShape,
    pub nodes: Vec<NodeGene>,
    pub outputs: Vec<usize>,
}

impl CgpGenome {
    /// Uniform sample; not necessarily decodable.
    pub fn random_unchecked(shape: &GenomeShape, rng: &mut impl Rng) -> Self {
        let nodes = (0..shape.n_nodes())
            .map(|j| NodeGene {
                function: rng.random_range(0..shape.operators.len()),
                inputs: (0..shape.max_arity).map(|_| shape.sample_connection(j, rng)).collect(),
            })
            .collect();
        let addr_space = shape.n_inputs + shape.n_nodes();
        let outputs = (0..shape.n_outputs).map(|_| rng.random_range(0..addr_space)).collect();
        CgpGenome { shape: shape.clone(), nodes, outputs }
    }

    /// Samples until the genome decodes.
    pub fn random(shape: &GenomeShape, rng: &mut impl Rng) -> Result<Self> {
        shape.validate()?;
        for _ in 0..10_000 {
            let g = Self::random_unchecked(shape, rng);
            if decode_genome(&g).is_ok() {
                return Ok(g);
            }
        }
        Err(Error::Contract("could not sample a decodable genome".into()))
    }

    /// Checks gene ranges and feed-forward ordering.
    pub fn validate(&self) -> Result<()> {
        let s = &self.shape;
        s.validate()?;
        if self.nodes.len() != s.n_nodes() || self.outputs.len() != s.n_outputs {
            return Err(Error::Contract("gene count does not match shape".into()));
        }
        for (j, n) in self.nodes.iter().enumerate() {
            if n.function >= s.operators.len() || n.inputs.len() != s.max_arity {
                return Err(Error::Contract(format!("node {j} has malformed genes")));
            }
            if let Some(a) = n.inputs.iter().find(|a| !s.connection_valid(j, **a)) {
                return Err(Error::Contract(format!("node {j} connects to {a} outside levels-back")));
            }
        }
        if let Some(a) = self.outputs.iter().find(|a| **a >= s.n_inputs + s.n_nodes()) {
            return Err(Error::Contract(format!("output gene {a} out of range")));
        }
        Ok(())
    }

    /// Resamples each gene with probability `rate`, without any decodability check.
    pub fn mutate_unchecked(&self, rate: f64, rng: &mut impl Rng) -> Self {
        let s = &self.shape;
        let mut child = self.clone();
        for (j, node) in child.nodes.iter_mut().enumerate() {
            if rng.random_bool(rate) {
                node.function = rng.random_range(0..s.operators.len());
            }
            for a in node.inputs.iter_mut() {
                if rng.random_bool(rate) {
                    *a = s.sample_connection(j, rng);
                }
            }
        }
        let addr_space = s.n_inputs + s.n_nodes();
        for o in child.outputs.iter_mut() {
            if rng.random_bool(rate) {
                *o = rng.random_range(0..addr_space);
            }
        }
        child
    }

    /// Point mutation. Mutants that fail to decode (unbalanced loops) are
    /// redrawn; after repeated failures the parent is returned unchanged.
    pub fn mutate(&self, rate: f64, rng: &mut impl Rng) -> Self {
        let rate = rate.clamp(0.0, 1.0);
        for _ in 0..100 {
            let child = self.mutate_unchecked(rate, rng);
            if decode_genome(&child).is_ok() {
                return child;
            }
        }
        self.clone()
    }

    /// Flat integer form: shape header, operator codes, node genes, outputs.
    pub fn to_ints(&self) -> Vec<i64> {
        let s = &self.shape;
        let mut out = vec![
            s.n_inputs as i64,
            s.n_outputs as i64,
            s.rows as i64,
            s.cols as i64,
            s.levels_back as i64,
            s.max_arity as i64,
            s.operators.len() as i64,
        ];
        out.extend(s.operators.iter().map(|o| o.code() as i64));
        for n in &self.nodes {
            out.push(n.function as i64);
            out.extend(n.inputs.iter().map(|a| *a as i64));
        }
        out.extend(self.outputs.iter().map(|a| *a as i64));
        out
    }

    pub fn from_ints(ints: &[i64]) -> Result<Self> {
        let mut pos = 0usize;
        let mut next = || -> Result<usize> {
            let v = *ints.get(pos).ok_or(Error::Decode { offset: pos, reason: "genome truncated".into() })?;
            let u = usize::try_from(v).map_err(|_| Error::Decode { offset: pos, reason: "negative gene".into() })?;
            pos += 1;
            Ok(u)
        };
        let (n_inputs, n_outputs, rows, cols, levels_back, max_arity, n_ops) =
            (next()?, next()?, next()?, next()?, next()?, next()?, next()?);
        if rows.saturating_mul(cols) > 1 << 20 || n_ops > 1 << 10 || max_arity > 64 {
            return Err(Error::Decode { offset: 0, reason: "implausible genome header".into() });
        }
        let mut operators = Vec::with_capacity(n_ops);
        for _ in 0..n_ops {
            let c = next()?;
            operators.push(Operator::from_code(c).ok_or(Error::Decode { offset: 0, reason: format!("operator code {c}") })?);
        }
        let shape = GenomeShape { n_inputs, n_outputs, rows, cols, levels_back, max_arity, operators };
        let mut nodes = Vec::with_capacity(shape.n_nodes());
        for _ in 0..shape.n_nodes() {
            let function = next()?;
            let inputs = (0..max_arity).map(|_| next()).collect::<Result<Vec<_>>>()?;
            nodes.push(NodeGene { function, inputs });
        }
        let outputs = (0..n_outputs).map(|_| next()).collect::<Result<Vec<_>>>()?;
        if pos != ints.len() {
            return Err(Error::Decode { offset: pos, reason: "trailing genes".into() });
        }
        let g = CgpGenome { shape, nodes, outputs };
        g.validate().map_err(|e| Error::Decode { offset: 0, reason: e.to_string() })?;
        Ok(g)
    }
}

/// Where a program operand comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Address {
    Input(usize),
    /// Position in `Program::nodes`.
    Node(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramNode {
    /// Index of the node in the genome grid.
    pub gene: usize,
    pub op: Operator,
    pub args: Vec<Address>,
}

/// Control-flow link attached to a program position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Link {
    None,
    /// Positions of the then/else branches, when present.
    Branch {
        then: Option<usize>,
        otherwise: Option<usize>,
    },
    LoopStart {
        end: usize,
    },
    LoopEnd {
        start: usize,
    },
}

/// Decoded genome: the active nodes in execution order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Program {
    pub n_inputs: usize,
    pub nodes: Vec<ProgramNode>,
    pub outputs: Vec<Address>,
    pub links: Vec<Link>,
}

/// Keeps only nodes reachable from output genes and pairs control-flow markers.
pub fn decode_genome(genome: &CgpGenome) -> Result<Program> {
    genome.validate()?;
    let s = &genome.shape;
    let n = s.n_nodes();
    let mut active = vec![false; n];
    let mut stack: Vec<usize> = genome.outputs.iter().filter(|a| **a >= s.n_inputs).map(|a| a - s.n_inputs).collect();
    while let Some(j) = stack.pop() {
        if active[j] {
            continue;
        }
        active[j] = true;
        let node = &genome.nodes[j];
        let op = s.operators[node.function];
        for a in &node.inputs[..op.used_inputs(s.max_arity)] {
            if *a >= s.n_inputs {
                stack.push(a - s.n_inputs);
            }
        }
    }
    let order: Vec<usize> = (0..n).filter(|j| active[*j]).collect();
    let mut position = vec![usize::MAX; n];
    for (k, j) in order.iter().enumerate() {
        position[*j] = k;
    }
    let addr = |a: usize| if a < s.n_inputs { Address::Input(a) } else { Address::Node(position[a - s.n_inputs]) };
    let nodes: Vec<ProgramNode> = order
        .iter()
        .map(|&j| {
            let g = &genome.nodes[j];
            let op = s.operators[g.function];
            ProgramNode { gene: j, op, args: g.inputs[..op.used_inputs(s.max_arity)].iter().map(|a| addr(*a)).collect() }
        })
        .collect();
    let outputs = genome.outputs.iter().map(|a| addr(*a)).collect();
    let links = pair_control_flow(&nodes)?;
    Ok(Program { n_inputs: s.n_inputs, nodes, outputs, links })
}

fn pair_control_flow(nodes: &[ProgramNode]) -> Result<Vec<Link>> {
    let mut links = vec![Link::None; nodes.len()];
    let mut open: Vec<usize> = Vec::new();
    for (k, node) in nodes.iter().enumerate() {
        match node.op {
            Operator::WhileStart => open.push(k),
            Operator::WhileEnd => {
                let start = open.pop().ok_or(Error::Decode { offset: node.gene, reason: "While_end without While_start".into() })?;
                links[start] = Link::LoopStart { end: k };
                links[k] = Link::LoopEnd { start };
            }
            Operator::IfElse => {
                let branch = |p: usize| nodes.get(p).map(|_| p);
                let (then, otherwise) = (branch(k + 1), branch(k + 2));
                for b in [then, otherwise].into_iter().flatten() {
                    if matches!(nodes[b].op, Operator::WhileStart | Operator::WhileEnd) {
                        return Err(Error::Decode { offset: nodes[b].gene, reason: "If-else branch lands on a loop marker".into() });
                    }
                }
                links[k] = Link::Branch { then, otherwise };
            }
            _ => {}
        }
    }
    if let Some(k) = open.pop() {
        return Err(Error::Decode { offset: nodes[k].gene, reason: "While_start without While_end".into() });
    }
    Ok(links)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput<T> {
    pub outputs: Vec<Datum<T>>,
    /// A loop hit `loop_cap` or the global step budget ran out.
    pub capped: bool,
    /// Some operator produced a sentinel or a non-finite value.
    pub faulted: bool,
}

impl Program {
    pub fn active_len(&self) -> usize {
        self.nodes.len()
    }

    /// Human-readable expression per output.
    pub fn pretty(&self) -> String {
        let mut out = String::new();
        for (i, o) in self.outputs.iter().enumerate() {
            let _ = writeln!(out, "y{i} = {}", self.expr(*o, 0));
        }
        out
    }

    fn expr(&self, a: Address, depth: usize) -> String {
        match a {
            Address::Input(i) => format!("x{i}"),
            Address::Node(k) if depth > 32 => format!("n{k}"),
            Address::Node(k) => {
                let node = &self.nodes[k];
                if node.args.is_empty() {
                    node.op.name().to_string()
                } else {
                    let args: Vec<_> = node.args.iter().map(|a| self.expr(*a, depth + 1)).collect();
                    format!("{}({})", node.op.name(), args.join(", "))
                }
            }
        }
    }
}

/// Executes a program. Loops run at most `loop_cap` times each, and the whole
/// run at most `loop_cap * active nodes` node evaluations.
pub fn run_program<T: Scalar>(program: &Program, inputs: &[Datum<T>], ctx: &OperatorContext<T>, loop_cap: usize) -> Result<RunOutput<T>> {
    if inputs.len() != program.n_inputs {
        return Err(Error::Contract(format!("program takes {} inputs, got {}", program.n_inputs, inputs.len())));
    }
    let n = program.nodes.len();
    let mut values: Vec<Datum<T>> = vec![Datum::Scalar(T::zero()); n];
    let mut skip = vec![false; n];
    let mut iterations = vec![0usize; n];
    let budget = loop_cap.max(1).saturating_mul(n.max(1));
    let (mut capped, mut faulted) = (false, false);
    let mut steps = 0usize;
    let mut pc = 0usize;

    let fetch = |values: &[Datum<T>], a: &Address| match a {
        Address::Input(i) => inputs[*i].clone(),
        Address::Node(k) => values[*k].clone(),
    };

    while pc < n {
        steps += 1;
        if steps > budget {
            capped = true;
            break;
        }
        if skip[pc] {
            skip[pc] = false;
            values[pc] = Datum::Scalar(T::zero());
            pc += 1;
            continue;
        }
        let node = &program.nodes[pc];
        let args: Vec<Datum<T>> = node.args.iter().map(|a| fetch(&values, a)).collect();
        match (node.op, program.links[pc]) {
            (Operator::IfElse, Link::Branch { then, otherwise }) => {
                let c = args[0].truthy();
                values[pc] = Datum::Scalar(if c { T::one() } else { T::zero() });
                let skipped = if c { otherwise } else { then };
                if let Some(b) = skipped {
                    skip[b] = true;
                }
                pc += 1;
            }
            (Operator::WhileStart, Link::LoopStart { end }) => {
                // Entered from above: evaluate the entry condition.
                iterations[pc] = 0;
                values[pc] = Datum::Scalar(T::zero());
                if args[0].truthy() {
                    iterations[pc] = 1;
                    pc += 1;
                } else {
                    pc = end + 1;
                }
            }
            (Operator::WhileEnd, Link::LoopEnd { start }) => {
                let c = args[0].truthy();
                values[pc] = Datum::Scalar(if c { T::one() } else { T::zero() });
                if c {
                    if iterations[start] >= loop_cap {
                        capped = true;
                        pc += 1;
                    } else {
                        values[start] = Datum::Scalar(T::from_usize(iterations[start]).unwrap_or_else(T::zero));
                        iterations[start] += 1;
                        pc = start + 1;
                    }
                } else {
                    pc += 1;
                }
            }
            (op, _) => {
                let e = eval_operator(op, &args, ctx)?;
                faulted |= e.fault;
                values[pc] = e.value;
                pc += 1;
            }
        }
    }

    let outputs = program
        .outputs
        .iter()
        .map(|a| {
            let d = fetch(&values, a);
            if d.is_finite() {
                d
            } else {
                faulted = true;
                let fix = |x: T| {
                    if x.is_finite() {
                        x
                    } else if x < T::zero() {
                        -T::lit(FAULT_SENTINEL)
                    } else {
                        T::lit(FAULT_SENTINEL)
                    }
                };
                match d {
                    Datum::Scalar(x) => Datum::Scalar(fix(x)),
                    Datum::Vector(v) => Datum::Vector(v.into_iter().map(fix).collect()),
                }
            }
        })
        .collect();
    Ok(RunOutput { outputs, capped, faulted })
}

/// Node count times average out-degree over active nodes. Out-degree counts
/// edges into active consumers and output genes.
pub fn structural_complexity(program: &Program) -> f64 {
    let n = program.nodes.len();
    if n == 0 {
        return 0.0;
    }
    let mut out_degree = vec![0usize; n];
    let refs = program.nodes.iter().flat_map(|node| node.args.iter()).chain(program.outputs.iter());
    for a in refs {
        if let Address::Node(k) = a {
            out_degree[*k] += 1;
        }
    }
    let avg = out_degree.iter().sum::<usize>() as f64 / n as f64;
    n as f64 * avg
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn shape(ops: Vec<Operator>, n_inputs: usize, cols: usize) -> GenomeShape {
        GenomeShape::new(n_inputs, 1, 1, cols, ops)
    }

    /// Builds a single-row genome from (operator, inputs) pairs.
    fn genome(ops: &[Operator], n_inputs: usize, nodes: &[(Operator, [usize; 3])], output: usize) -> CgpGenome {
        let s = shape(ops.to_vec(), n_inputs, nodes.len());
        let nodes =
            nodes.iter().map(|(op, ins)| NodeGene { function: ops.iter().position(|o| o == op).unwrap(), inputs: ins.to_vec() }).collect();
        CgpGenome { shape: s, nodes, outputs: vec![output] }
    }

    fn run1(p: &Program, xs: &[f64], cap: usize) -> RunOutput<f64> {
        let inputs: Vec<_> = xs.iter().map(|x| Datum::Scalar(*x)).collect();
        run_program(p, &inputs, &OperatorContext::default(), cap).unwrap()
    }

    #[test]
    fn passthrough_has_no_active_nodes() {
        let g = genome(&[Operator::Add], 2, &[(Operator::Add, [0, 1, 0])], 0);
        let p = decode_genome(&g).unwrap();
        assert!(p.nodes.is_empty());
        assert_eq!(run1(&p, &[7.0, 1.0], 10).outputs, vec![Datum::Scalar(7.0)]);
        assert_eq!(structural_complexity(&p), 0.0);
    }

    #[test]
    fn single_add_node() {
        let g = genome(&[Operator::Add], 2, &[(Operator::Add, [0, 1, 0])], 2);
        let p = decode_genome(&g).unwrap();
        assert_eq!(p.nodes.len(), 1);
        assert_eq!(run1(&p, &[2.0, 3.5], 10).outputs, vec![Datum::Scalar(5.5)]);
    }

    #[test]
    fn nested_arithmetic() {
        let ops = [Operator::Add, Operator::Mul];
        let g = genome(&ops, 3, &[(Operator::Mul, [0, 1, 0]), (Operator::Add, [3, 2, 0])], 4);
        let p = decode_genome(&g).unwrap();
        assert_eq!(run1(&p, &[2.0, 3.0, 4.0], 10).outputs, vec![Datum::Scalar(10.0)]);
        assert_eq!(p.pretty().trim(), "y0 = Add(Mul(x0, x1), x2)");
    }

    #[test]
    fn complexity_of_neg_abs_chain() {
        let ops = [Operator::Neg, Operator::Abs];
        let g = genome(&ops, 1, &[(Operator::Neg, [0, 0, 0]), (Operator::Abs, [1, 0, 0])], 2);
        let p = decode_genome(&g).unwrap();
        assert_eq!(p.nodes.len(), 2);
        assert_eq!(structural_complexity(&p), 2.0);
    }

    #[test]
    fn complexity_is_nodes_times_average_out_degree() {
        // Five nodes: a fan-out of one Add into four consumers plus the output edge.
        let ops = [Operator::Add, Operator::Neg, Operator::Sum3];
        let g = genome(
            &ops,
            1,
            &[
                (Operator::Add, [0, 0, 0]),  // n1
                (Operator::Neg, [1, 0, 0]),  // n2 <- n1
                (Operator::Add, [1, 2, 0]),  // n3 <- n1, n2
                (Operator::Add, [1, 3, 0]),  // n4 <- n1, n3
                (Operator::Sum3, [4, 4, 4]), // n5 <- n4 x3
            ],
            5,
        );
        let p = decode_genome(&g).unwrap();
        assert_eq!(p.nodes.len(), 5);
        // out-degrees: n1=3, n2=1, n3=1, n4=3, n5=1 (output) -> 9 edges
        assert!((structural_complexity(&p) - 9.0).abs() < 1e-12);
    }

    #[test]
    fn while_with_false_entry_skips_body() {
        // x0 = 0 -> While_start(x0) ... body Add ... While_end(Const1)
        let ops = [Operator::WhileStart, Operator::Add, Operator::Const1, Operator::WhileEnd, Operator::Comb];
        let g = genome(
            &ops,
            1,
            &[
                (Operator::WhileStart, [0, 0, 0]), // n1
                (Operator::Add, [1, 1, 0]),        // n2 body: counter*2
                (Operator::Const1, [0, 0, 0]),     // n3
                (Operator::WhileEnd, [3, 0, 0]),   // n4
                (Operator::Comb, [2, 4, 0]),       // n5 keeps both reachable
            ],
            5,
        );
        let p = decode_genome(&g).unwrap();
        assert_eq!(p.links[0], Link::LoopStart { end: 3 });
        let out = run1(&p, &[0.0], 1000);
        assert!(!out.capped);
        assert_eq!(out.outputs, vec![Datum::Vector(vec![0.0, 0.0, 0.0])]);
    }

    #[test]
    fn endless_loop_is_capped() {
        let ops = [Operator::WhileStart, Operator::Add, Operator::Const1, Operator::WhileEnd, Operator::Comb];
        let g = genome(
            &ops,
            1,
            &[
                (Operator::WhileStart, [0, 0, 0]),
                (Operator::Add, [1, 1, 0]),
                (Operator::Const1, [0, 0, 0]),
                (Operator::WhileEnd, [3, 0, 0]),
                (Operator::Comb, [2, 4, 0]),
            ],
            5,
        );
        let p = decode_genome(&g).unwrap();
        let out = run1(&p, &[1.0], 1000);
        assert!(out.capped);
        // The last completed pass ran with counter 999.
        assert_eq!(out.outputs, vec![Datum::Vector(vec![1998.0, 1.0, 1.0])]);
    }

    #[test]
    fn if_else_routes_one_branch() {
        let ops = [Operator::IfElse, Operator::Const1, Operator::Const01, Operator::Comb];
        let g = genome(
            &ops,
            1,
            &[
                (Operator::IfElse, [0, 0, 0]),  // n1
                (Operator::Const1, [0, 0, 0]),  // n2 then
                (Operator::Const01, [0, 0, 0]), // n3 else
                (Operator::Comb, [2, 3, 1]),    // n4
            ],
            4,
        );
        let p = decode_genome(&g).unwrap();
        assert_eq!(run1(&p, &[1.0], 10).outputs, vec![Datum::Vector(vec![1.0, 0.0, 1.0])]);
        assert_eq!(run1(&p, &[0.0], 10).outputs, vec![Datum::Vector(vec![0.0, 0.1, 0.0])]);
    }

    #[test]
    fn unbalanced_while_fails_to_decode() {
        let ops = [Operator::WhileStart, Operator::Neg];
        let g = genome(&ops, 1, &[(Operator::WhileStart, [0, 0, 0]), (Operator::Neg, [1, 0, 0])], 2);
        assert!(matches!(decode_genome(&g), Err(Error::Decode { .. })));
    }

    #[test]
    fn division_fault_is_flagged() {
        let g = genome(&[Operator::Div], 2, &[(Operator::Div, [0, 1, 0])], 2);
        let p = decode_genome(&g).unwrap();
        let out = run1(&p, &[1.0, 0.0], 10);
        assert!(out.faulted);
        assert_eq!(out.outputs, vec![Datum::Scalar(FAULT_SENTINEL)]);
    }

    #[test]
    fn wrong_input_count_is_contract_error() {
        let g = genome(&[Operator::Add], 2, &[(Operator::Add, [0, 1, 0])], 2);
        let p = decode_genome(&g).unwrap();
        let r = run_program(&p, &[Datum::Scalar(1.0)], &OperatorContext::default(), 10);
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn integer_form_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = GenomeShape::new(3, 2, 2, 6, Operator::ALL.to_vec());
        for _ in 0..50 {
            let g = CgpGenome::random(&s, &mut rng).unwrap();
            assert_eq!(CgpGenome::from_ints(&g.to_ints()).unwrap(), g);
        }
        let g = CgpGenome::random(&s, &mut rng).unwrap();
        let ints = g.to_ints();
        assert!(CgpGenome::from_ints(&ints[..ints.len() - 1]).is_err());
    }

    #[test]
    fn zero_rate_mutation_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = GenomeShape::new(2, 1, 1, 10, Operator::ALL.to_vec());
        let g = CgpGenome::random(&s, &mut rng).unwrap();
        assert_eq!(g.mutate(0.0, &mut rng), g);
        let all = g.mutate(1.0, &mut rng);
        all.validate().unwrap();
    }
}
