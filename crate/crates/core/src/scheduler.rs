//! Execution order of mechanisms and the object allocator.
//!
//! A [`ScheduleDag`] is built from slots rather than bare mechanism ids so that
//! a rescheduled plan with repetitions can be represented as its induced chain.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypergraph::{Hypergraph, InstanceId, KindId, MechanismId};
use crate::registry::{FnBody, RuleCtx};
use crate::symbolic::{run_program, Datum};
use crate::value::{Value, ValueKey};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleDag {
    slots: Vec<MechanismId>,
    /// (before, after) pairs of slot indices.
    edges: BTreeSet<(usize, usize)>,
}

impl ScheduleDag {
    pub fn new() -> Self {
        Self::default()
    }

    /// One slot per distinct mechanism, with ordering constraints between them.
    pub fn from_edges(nodes: &[MechanismId], edges: &[(MechanismId, MechanismId)]) -> Result<Self> {
        let mut dag = ScheduleDag::new();
        let mut slot_of = BTreeMap::new();
        for m in nodes.iter().chain(edges.iter().flat_map(|(a, b)| [a, b])) {
            slot_of.entry(*m).or_insert_with(|| dag.add_slot(*m));
        }
        for (a, b) in edges {
            dag.add_edge(slot_of[a], slot_of[b])?;
        }
        Ok(dag)
    }

    /// The chain `ids[0] → ids[1] → …`, repetitions kept as separate slots.
    pub fn chain(ids: &[MechanismId]) -> Self {
        let mut dag = ScheduleDag::new();
        for (i, m) in ids.iter().enumerate() {
            dag.add_slot(*m);
            if i > 0 {
                dag.edges.insert((i - 1, i));
            }
        }
        dag
    }

    pub fn add_slot(&mut self, m: MechanismId) -> usize {
        self.slots.push(m);
        self.slots.len() - 1
    }

    pub fn add_edge(&mut self, before: usize, after: usize) -> Result<()> {
        if before >= self.slots.len() || after >= self.slots.len() {
            return Err(Error::Reference(format!("schedule slot {before} or {after}")));
        }
        self.edges.insert((before, after));
        Ok(())
    }

    pub fn slots(&self) -> &[MechanismId] {
        &self.slots
    }

    pub fn edges(&self) -> impl Iterator<Item = (MechanismId, MechanismId)> + '_ {
        self.edges.iter().map(|(a, b)| (self.slots[*a], self.slots[*b]))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionPlan {
    pub steps: Vec<MechanismId>,
}

impl ExecutionPlan {
    pub fn new(steps: Vec<MechanismId>) -> Self {
        ExecutionPlan { steps }
    }

    pub fn validate(&self, graph: &Hypergraph) -> Result<()> {
        for m in &self.steps {
            graph.mechanism(*m)?;
        }
        Ok(())
    }
}

/// Topological order; ready slots are taken by ascending mechanism id.
pub fn build_plan(dag: &ScheduleDag) -> Result<ExecutionPlan> {
    let n = dag.slots.len();
    let mut indegree = vec![0usize; n];
    let mut succ = vec![Vec::new(); n];
    for (a, b) in &dag.edges {
        indegree[*b] += 1;
        succ[*a].push(*b);
    }
    let mut ready: BinaryHeap<Reverse<(MechanismId, usize)>> =
        (0..n).filter(|s| indegree[*s] == 0).map(|s| Reverse((dag.slots[s], s))).collect();
    let mut steps = Vec::with_capacity(n);
    while let Some(Reverse((m, s))) = ready.pop() {
        steps.push(m);
        for t in &succ[s] {
            indegree[*t] -= 1;
            if indegree[*t] == 0 {
                ready.push(Reverse((dag.slots[*t], *t)));
            }
        }
    }
    if steps.len() < n {
        return Err(Error::Cycle(find_cycle(dag, &indegree, &succ)));
    }
    Ok(ExecutionPlan { steps })
}

/// Walks backwards through unresolved slots until one repeats.
fn find_cycle(dag: &ScheduleDag, indegree: &[usize], succ: &[Vec<usize>]) -> Vec<usize> {
    let n = dag.slots.len();
    let mut pred = vec![Vec::new(); n];
    for (a, targets) in succ.iter().enumerate() {
        for b in targets {
            if indegree[a] > 0 && indegree[*b] > 0 {
                pred[*b].push(a);
            }
        }
    }
    let Some(mut cur) = (0..n).find(|s| indegree[*s] > 0) else { return Vec::new() };
    let mut seen = vec![usize::MAX; n];
    let mut path = Vec::new();
    while seen[cur] == usize::MAX {
        seen[cur] = path.len();
        path.push(cur);
        cur = pred[cur][0];
    }
    let mut cycle: Vec<usize> = path[seen[cur]..].iter().map(|s| dag.slots[*s].0).collect();
    cycle.reverse();
    cycle
}

/// Replaces the plan verbatim after checking that every id exists.
pub fn reschedule(graph: &Hypergraph, indices: &[MechanismId]) -> Result<ExecutionPlan> {
    let plan = ExecutionPlan::new(indices.to_vec());
    plan.validate(graph)?;
    Ok(plan)
}

/// Plan plus a pending replacement that is swapped in at the start of the
/// next full pass.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scheduler {
    pub dag: ScheduleDag,
    pub plan: ExecutionPlan,
    pub pending: Option<ExecutionPlan>,
}

impl Scheduler {
    pub fn from_dag(dag: ScheduleDag) -> Result<Self> {
        let plan = build_plan(&dag)?;
        Ok(Scheduler { dag, plan, pending: None })
    }

    pub fn from_steps(steps: &[MechanismId]) -> Self {
        Scheduler { dag: ScheduleDag::chain(steps), plan: ExecutionPlan::new(steps.to_vec()), pending: None }
    }

    /// Queues a new plan for the next pass.
    pub fn reschedule(&mut self, graph: &Hypergraph, indices: &[MechanismId]) -> Result<()> {
        self.pending = Some(reschedule(graph, indices)?);
        Ok(())
    }

    /// Installs a pending plan, if any. Called between passes.
    pub fn begin_pass(&mut self) {
        if let Some(p) = self.pending.take() {
            self.dag = ScheduleDag::chain(&p.steps);
            self.plan = p;
        }
    }

    /// The plan that the next pass will run.
    pub fn effective_plan(&self) -> &ExecutionPlan {
        self.pending.as_ref().unwrap_or(&self.plan)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationGroup {
    pub mechanism: MechanismId,
    /// Grouping-key tuple and member instances, in key order.
    pub groups: Vec<(Vec<Value>, Vec<InstanceId>)>,
}

/// Partitions the mechanism's subject instances by their grouping-key values.
pub fn allocate_groups(graph: &Hypergraph, mechanism: MechanismId) -> Result<AllocationGroup> {
    let m = graph.mechanism(mechanism)?;
    let Some(kind) = graph.subject_kind(mechanism)? else {
        return Ok(AllocationGroup { mechanism, groups: Vec::new() });
    };
    let mut groups: BTreeMap<Vec<ValueKey>, Vec<InstanceId>> = BTreeMap::new();
    for inst in graph.instances_of(kind) {
        let key = m.grouping_keys.iter().map(|p| graph.value(inst, *p).map(Value::key)).collect::<Result<Vec<_>>>()?;
        groups.entry(key).or_default().push(inst);
    }
    Ok(AllocationGroup { mechanism, groups: groups.into_iter().map(|(k, v)| (k.into_iter().map(|k| k.0).collect(), v)).collect() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub step: u64,
    pub mechanism_id: usize,
    pub instance_count: usize,
}

/// What a host routine sees besides the graph.
pub struct HostCtx<'a> {
    pub plan: &'a ExecutionPlan,
    pub position: usize,
    pub pass: u64,
    pub seed: u64,
}

/// Implements the functions registered as host routines.
pub trait Host {
    /// Runs the host function `name` bound to `mechanism`; returns how many
    /// instances it touched.
    fn call(&mut self, name: &str, mechanism: MechanismId, graph: &mut Hypergraph, ctx: &HostCtx) -> Result<usize>;
}

/// Host that knows no routines.
pub struct NoHost;

impl Host for NoHost {
    fn call(&mut self, name: &str, mechanism: MechanismId, _: &mut Hypergraph, _: &HostCtx) -> Result<usize> {
        Err(Error::Step { mechanism: mechanism.0, reason: format!("no host routine `{name}`") })
    }
}

/// Mixes a tuple of integers into one seed (splitmix64 finalizer per word).
pub fn stream_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9e37_79b9_7f4a_7c15;
    for p in parts {
        h ^= p.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(h << 6).wrapping_add(h >> 2);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h = z ^ (z >> 31);
    }
    h
}

fn rule_rng(seed: u64, pass: u64, m: MechanismId, inst: InstanceId) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(&[seed, pass, m.0 as u64, inst.0 as u64]))
}

/// Source values of `mechanism` seen from `inst`; sources on other kinds
/// must live on singletons.
fn gather(graph: &Hypergraph, mechanism: MechanismId, subject: KindId, inst: InstanceId) -> Result<Vec<Value>> {
    let m = graph.mechanism(mechanism)?;
    m.sources
        .iter()
        .map(|p| {
            let kind = graph.property(*p)?.kind;
            let owner = if kind == subject {
                inst
            } else {
                graph.singleton(kind).ok_or_else(|| Error::Step {
                    mechanism: mechanism.0,
                    reason: format!("source {p} belongs to non-singleton kind {kind}"),
                })?
            };
            graph.value(owner, *p).cloned()
        })
        .collect()
}

fn to_datum(v: &Value) -> Datum<f64> {
    match v {
        Value::RealSeq(xs) => Datum::Vector(xs.clone()),
        other => Datum::Scalar(other.as_f64()),
    }
}

fn from_datum(d: Datum<f64>) -> Value {
    match d {
        Datum::Scalar(x) => Value::Real(x),
        Datum::Vector(xs) => Value::RealSeq(xs),
    }
}

/// Evaluates the non-host function of `mechanism` for one instance.
pub fn eval_instance(
    graph: &Hypergraph,
    mechanism: MechanismId,
    inputs: &[Value],
    inst: InstanceId,
    seed: u64,
    pass: u64,
) -> Result<Vec<Value>> {
    let entry = graph.fn_entry(mechanism)?;
    let fail = |reason: String| Error::Step { mechanism: mechanism.0, reason };
    let out = match &entry.body {
        FnBody::Rule(f) => {
            let mut ctx = RuleCtx { rng: rule_rng(seed, pass, mechanism, inst), pass, instance: inst };
            f(inputs, &mut ctx).map_err(|e| fail(e.to_string()))?
        }
        FnBody::Program { program, ctx, loop_cap } => {
            let args: Vec<_> = inputs.iter().map(to_datum).collect();
            let r = run_program(program, &args, ctx, *loop_cap).map_err(|e| fail(e.to_string()))?;
            r.outputs.into_iter().map(from_datum).collect()
        }
        FnBody::Host => return Err(fail("host routine evaluated per instance".into())),
    };
    if out.len() != entry.outputs {
        return Err(fail(format!("function `{}` returned {} values, expected {}", entry.name, out.len(), entry.outputs)));
    }
    Ok(out)
}

fn write_targets(graph: &mut Hypergraph, mechanism: MechanismId, inst: InstanceId, out: Vec<Value>) -> Result<()> {
    let targets = graph.mechanism(mechanism)?.targets.clone();
    for (t, v) in targets.into_iter().zip(out) {
        graph.set_value(inst, t, v).map_err(|e| Error::Step { mechanism: mechanism.0, reason: e.to_string() })?;
    }
    Ok(())
}

/// Runs one mechanism over its subject instances, group by group. When the
/// function is deterministic and reads nothing but grouping keys and
/// singleton values, it is evaluated once per group.
pub fn run_mechanism(graph: &mut Hypergraph, mechanism: MechanismId, seed: u64, pass: u64) -> Result<usize> {
    let Some(subject) = graph.subject_kind(mechanism)? else { return Ok(0) };
    let alloc = allocate_groups(graph, mechanism)?;
    let m = graph.mechanism(mechanism)?.clone();
    let deterministic = graph.fn_entry(mechanism)?.deterministic;
    let shared_inputs = deterministic
        && m.sources.iter().all(|p| m.grouping_keys.contains(p) || graph.property(*p).map(|pp| pp.kind != subject).unwrap_or(false));
    let mut touched = 0;
    for (_, members) in alloc.groups {
        if shared_inputs {
            let first = members[0];
            let inputs = gather(graph, mechanism, subject, first)?;
            let out = eval_instance(graph, mechanism, &inputs, first, seed, pass)?;
            for inst in &members {
                write_targets(graph, mechanism, *inst, out.clone())?;
            }
        } else {
            for inst in &members {
                let inputs = gather(graph, mechanism, subject, *inst)?;
                let out = eval_instance(graph, mechanism, &inputs, *inst, seed, pass)?;
                write_targets(graph, mechanism, *inst, out)?;
            }
        }
        touched += members.len();
    }
    Ok(touched)
}

/// Per-instance reference executor: no grouping, instance-id order.
pub fn run_mechanism_sequential(graph: &mut Hypergraph, mechanism: MechanismId, seed: u64, pass: u64) -> Result<usize> {
    let Some(subject) = graph.subject_kind(mechanism)? else { return Ok(0) };
    let members = graph.instances_of(subject);
    for inst in &members {
        let inputs = gather(graph, mechanism, subject, *inst)?;
        let out = eval_instance(graph, mechanism, &inputs, *inst, seed, pass)?;
        write_targets(graph, mechanism, *inst, out)?;
    }
    Ok(members.len())
}

/// Applies the plan once, in order. Inactive mechanisms are skipped and do
/// not appear in the log.
pub fn execute_step(graph: &mut Hypergraph, plan: &ExecutionPlan, host: &mut dyn Host, seed: u64, pass: u64) -> Result<Vec<Event>> {
    let mut log = Vec::new();
    for (position, m) in plan.steps.iter().enumerate() {
        let mech = graph.mechanism(*m)?;
        if !mech.active {
            continue;
        }
        let entry = graph.functions().get(mech.fn_ref)?;
        let count = if entry.is_host() {
            let name = entry.name.clone();
            let ctx = HostCtx { plan, position, pass, seed };
            host.call(&name, *m, graph, &ctx).map_err(|e| match e {
                Error::Step { .. } => e,
                other => Error::Step { mechanism: m.0, reason: other.to_string() },
            })?
        } else {
            run_mechanism(graph, *m, seed, pass)?
        };
        log.push(Event { step: pass, mechanism_id: m.0, instance_count: count });
    }
    Ok(log)
}

/// Writes an event log as `step,mechanism_id,instance_count` CSV.
pub fn write_events<W: std::io::Write>(events: &[Event], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for e in events {
        w.serialize(e)?;
    }
    if events.is_empty() {
        w.write_record(["step", "mechanism_id", "instance_count"])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_events<R: std::io::Read>(input: R) -> Result<Vec<Event>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
