//! Scenario construction: kinds, properties, instances, mechanisms and the
//! daily plan, plus the operation lists that install the stabilizers.

use super::factors::{factor_name, FactorFrame, CATEGORIES};
use super::rules::{self, expert_order, Role, ORDER_INPUTS, ORDER_OUTPUTS};
use super::IcofmConfig;
use crate::error::{Error, Result};
use crate::hypergraph::{Hypergraph, KindId, MechanismDef, MechanismId, PropertyId};
use crate::protocol::{ComponentType, OperationVector};
use crate::registry::{FnEntry, FnId, FunctionRegistry};
use crate::scheduler::Scheduler;
use crate::symbolic::{decode_genome, CgpGenome, GenomeShape, NodeGene, Operator, OperatorContext};
use crate::value::{Value, ValueKind};

pub const INTERVENTIONIST_FN: &str = "interventionist";
pub const RESTRICT_FN: &str = "restrict_order_type";
pub const CLOSE_MARKET_FN: &str = "close_market";

/// Properties declared by the interventionist role.
pub const INTERVENTIONIST_STATE: usize = 3;

const MARKET: [(&str, ValueKind); 14] = [
    ("day", ValueKind::Integer),
    ("phase", ValueKind::Categorical),
    ("opening_price", ValueKind::Real),
    ("closing_price", ValueKind::Real),
    ("previous_close", ValueKind::Real),
    ("last_price", ValueKind::Real),
    ("live_price", ValueKind::Real),
    ("best_bid", ValueKind::Real),
    ("best_ask", ValueKind::Real),
    ("volume", ValueKind::Integer),
    ("sentiment", ValueKind::Real),
    ("fundamental", ValueKind::Real),
    ("total_supply", ValueKind::Real),
    ("imbalance", ValueKind::Real),
];

const REGION: [(&str, ValueKind); 10] = [
    ("production", ValueKind::Real),
    ("consumption", ValueKind::Real),
    ("base_production", ValueKind::Real),
    ("base_consumption", ValueKind::Real),
    ("supply_effect", ValueKind::Real),
    ("demand_effect", ValueKind::Real),
    ("stance", ValueKind::Real),
    ("economy", ValueKind::Real),
    ("market_share", ValueKind::Real),
    ("reward", ValueKind::Real),
];

const ENTERPRISE: [(&str, ValueKind); 14] = [
    ("role", ValueKind::Categorical),
    ("cash", ValueKind::Real),
    ("inventory", ValueKind::Real),
    ("position", ValueKind::Integer),
    ("task_target", ValueKind::Real),
    ("task_done", ValueKind::Real),
    ("expectation", ValueKind::Real),
    ("order_flag", ValueKind::Boolean),
    ("order_side", ValueKind::Categorical),
    ("order_type", ValueKind::Categorical),
    ("order_price", ValueKind::Integer),
    ("order_qty", ValueKind::Integer),
    ("profit", ValueKind::Real),
    ("reward", ValueKind::Real),
];

/// Resolved kind and property ids of a built scenario.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub factors: KindId,
    pub market: KindId,
    pub region: KindId,
    pub enterprise: KindId,
    pub factor_props: Vec<PropertyId>,
}

impl Layout {
    pub fn resolve(graph: &Hypergraph) -> Result<Self> {
        let factors = graph.kind_by_name("factors")?;
        let factor_props = graph.kind(factors)?.properties.iter().copied().collect();
        Ok(Layout {
            factors,
            market: graph.kind_by_name("market")?,
            region: graph.kind_by_name("region")?,
            enterprise: graph.kind_by_name("enterprise")?,
            factor_props,
        })
    }

    pub fn market(&self, graph: &Hypergraph, name: &str) -> Result<PropertyId> {
        graph.property_by_name(self.market, name)
    }

    pub fn region(&self, graph: &Hypergraph, name: &str) -> Result<PropertyId> {
        graph.property_by_name(self.region, name)
    }

    pub fn enterprise(&self, graph: &Hypergraph, name: &str) -> Result<PropertyId> {
        graph.property_by_name(self.enterprise, name)
    }
}

fn factor_names(cfg: &IcofmConfig) -> Vec<(usize, String)> {
    CATEGORIES.iter().enumerate().flat_map(|(c, cat)| (0..cfg.factors_per_category).map(move |k| (c, factor_name(cat, k)))).collect()
}

/// Accumulator a factor category feeds: region supply, region demand or
/// market sentiment.
fn factor_target(category: usize) -> (&'static str, &'static str) {
    match CATEGORIES[category] {
        "supply" | "geopolitics" => ("region", "supply_effect"),
        "demand" | "macro" => ("region", "demand_effect"),
        _ => ("market", "sentiment"),
    }
}

fn real(x: &Value) -> f64 {
    x.as_f64()
}

/// The expert close-market rule: `Or(LimUp(live, open), LimDown(live, open))`.
pub fn close_market_genome() -> CgpGenome {
    let shape = GenomeShape::new(2, 1, 1, 3, vec![Operator::LimUp, Operator::LimDown, Operator::Or]);
    CgpGenome {
        shape,
        nodes: vec![
            NodeGene { function: 0, inputs: vec![0, 1, 0] },
            NodeGene { function: 1, inputs: vec![0, 1, 0] },
            NodeGene { function: 2, inputs: vec![2, 3, 0] },
        ],
        outputs: vec![4],
    }
}

/// Limit ratios of the threshold operators for the configured bounds.
pub fn limit_context(cfg: &IcofmConfig) -> Result<OperatorContext<f64>> {
    OperatorContext::new(cfg.upper_ratio - 1.0, 1.0 - cfg.lower_ratio)
}

/// Every function the scenario can reference, registered in a fixed order.
pub fn function_registry(cfg: &IcofmConfig) -> Result<FunctionRegistry> {
    cfg.validate()?;
    let mut reg = FunctionRegistry::new();
    let nf = CATEGORIES.len() * cfg.factors_per_category;
    reg.register(FnEntry::host("ingest_factors", 0, nf + 3))?;
    reg.register(FnEntry::host("aggregate_regions", 2, 2))?;
    reg.register(FnEntry::host("sync_accounts", 0, 6))?;
    reg.register(FnEntry::host("call_auction", 5, 6))?;
    reg.register(FnEntry::host("continuous_trading", 5, 6))?;
    reg.register(FnEntry::host("mark_to_market", 2, 4))?;
    reg.register(FnEntry::host("delivery", 2, 3))?;
    reg.register(FnEntry::rule("reset_region", 0, 2, |_, _| Ok(vec![Value::Real(0.0), Value::Real(0.0)])).deterministic())?;
    reg.register(FnEntry::rule("reset_sentiment", 0, 1, |_, _| Ok(vec![Value::Real(0.0)])).deterministic())?;
    for (_, name) in factor_names(cfg) {
        let k: usize = name.rsplit('_').next().and_then(|s| s.parse().ok()).unwrap_or(0);
        let w = rules::factor_weight(cfg.factor_scale, k);
        reg.register(
            FnEntry::rule(&format!("accumulate_{name}"), 2, 1, move |x, _| Ok(vec![Value::Real(real(&x[1]) + w * real(&x[0]))]))
                .deterministic(),
        )?;
    }
    reg.register(
        FnEntry::rule("relation_update", 3, 1, |x, _| Ok(vec![Value::Real(rules::relation_update(real(&x[0]), real(&x[1]), real(&x[2])))]))
            .deterministic(),
    )?;
    reg.register(
        FnEntry::rule("production_adjust", 3, 1, |x, _| {
            let v = real(&x[0]) * (1.0 + real(&x[1])).max(0.0) * (1.0 + 0.05 * real(&x[2])).max(0.0);
            Ok(vec![Value::Real(v)])
        })
        .deterministic(),
    )?;
    reg.register(
        FnEntry::rule("consumption_adjust", 3, 1, |x, _| {
            let v = real(&x[0]) * (1.0 + real(&x[1])).max(0.0) * (1.0 + 0.05 * real(&x[2])).max(0.0);
            Ok(vec![Value::Real(v)])
        })
        .deterministic(),
    )?;
    let w = cfg.rewards;
    reg.register(
        FnEntry::rule("region_outcome", 6, 3, move |x, _| {
            let (share, economy) = rules::region_outcome(real(&x[0]), real(&x[1]), real(&x[2]), real(&x[3]));
            let r = rules::region_reward(share, economy, real(&x[4]), real(&x[5]), &w).total();
            Ok(vec![Value::Real(share), Value::Real(economy), Value::Real(r)])
        })
        .deterministic(),
    )?;
    reg.register(
        FnEntry::rule("fundamental_price", 4, 1, |x, _| {
            Ok(vec![Value::Real(rules::fundamental_price(real(&x[0]), real(&x[1]), real(&x[2]), real(&x[3])))])
        })
        .deterministic(),
    )?;
    let limit = cfg.speculator_position_limit;
    reg.register(FnEntry::rule("order_decision", ORDER_INPUTS.len(), ORDER_OUTPUTS.len(), move |x, ctx| {
        let obs: Vec<f64> = x.iter().map(real).collect();
        Ok(expert_order(&obs, limit, &mut ctx.rng).to_vec().into_iter().map(Value::Real).collect())
    }))?;
    let scale = cfg.initial_price as f64;
    reg.register(
        FnEntry::rule("enterprise_reward", 3, 1, move |x, _| {
            Ok(vec![Value::Real(rules::enterprise_reward(real(&x[0]), real(&x[1]), real(&x[2]), scale, &w).total())])
        })
        .deterministic(),
    )?;
    reg.register(FnEntry::host(INTERVENTIONIST_FN, 1, INTERVENTIONIST_STATE))?;
    reg.register(FnEntry::rule(RESTRICT_FN, 0, 1, |_, _| Ok(vec![Value::Boolean(true)])).deterministic())?;
    let program = decode_genome(&close_market_genome())?;
    reg.register(FnEntry::program(CLOSE_MARKET_FN, program, limit_context(cfg)?))?;
    Ok(reg)
}

struct Builder<'a> {
    g: &'a mut Hypergraph,
    plan: Vec<MechanismId>,
}

impl Builder<'_> {
    fn mech(&mut self, fn_name: &str, sources: Vec<PropertyId>, targets: Vec<PropertyId>, keys: Vec<PropertyId>) -> Result<MechanismId> {
        let fn_ref = self.g.functions().lookup(fn_name)?;
        self.g.add_mechanism(MechanismDef { sources, targets, fn_ref, grouping_keys: keys })
    }

    fn props(&self, kind: KindId, names: &[&str]) -> Result<Vec<PropertyId>> {
        names.iter().map(|n| self.g.property_by_name(kind, n)).collect()
    }
}

/// Builds the market scenario and its daily plan. Factor values are loaded
/// each day from `frame`, so only the frame's column names matter here.
pub fn build(cfg: &IcofmConfig) -> Result<(Hypergraph, Scheduler)> {
    let mut g = Hypergraph::with_functions(function_registry(cfg)?);
    let factors = g.add_kind("factors");
    let market = g.add_kind("market");
    let region = g.add_kind("region");
    let enterprise = g.add_kind("enterprise");
    let mut factor_props = Vec::new();
    for (_, name) in factor_names(cfg) {
        factor_props.push(g.add_property(factors, &name, ValueKind::Real)?);
    }
    for (name, vk) in MARKET {
        g.add_property(market, name, vk)?;
    }
    for (name, vk) in REGION {
        g.add_property(region, name, vk)?;
    }
    for (name, vk) in ENTERPRISE {
        g.add_property(enterprise, name, vk)?;
    }
    g.add_instance(factors)?;
    let m = g.add_instance(market)?;
    let p0 = cfg.initial_price as f64;
    for name in ["opening_price", "closing_price", "previous_close", "last_price", "fundamental"] {
        let p = g.property_by_name(market, name)?;
        g.set_value(m, p, Value::Real(p0))?;
    }
    g.set_value(m, g.property_by_name(market, "phase")?, Value::Categorical(2))?;
    let mid = (cfg.regions as f64 - 1.0) / 2.0;
    for i in 0..cfg.regions {
        let r = g.add_instance(region)?;
        let tilt = 0.1 * (i as f64 - mid);
        for (name, base) in
            [("base_production", cfg.base_production * (1.0 + tilt)), ("base_consumption", cfg.base_consumption * (1.0 - tilt))]
        {
            g.set_value(r, g.property_by_name(region, name)?, Value::Real(base))?;
        }
        for (name, base) in [("production", cfg.base_production * (1.0 + tilt)), ("consumption", cfg.base_consumption * (1.0 - tilt))] {
            g.set_value(r, g.property_by_name(region, name)?, Value::Real(base))?;
        }
    }
    let roles = std::iter::repeat_n(Role::Producer, cfg.producers)
        .chain(std::iter::repeat_n(Role::Consumer, cfg.consumers))
        .chain(std::iter::repeat_n(Role::Speculator, cfg.speculators));
    for role in roles {
        let e = g.add_instance(enterprise)?;
        g.set_value(e, g.property_by_name(enterprise, "role")?, Value::Categorical(role.code()))?;
        g.set_value(e, g.property_by_name(enterprise, "cash")?, Value::Real(cfg.initial_cash as f64))?;
    }

    let mut b = Builder { g: &mut g, plan: Vec::new() };
    let mp = |b: &Builder, n: &[&str]| b.props(market, n);
    let rp = |b: &Builder, n: &[&str]| b.props(region, n);
    let ep = |b: &Builder, n: &[&str]| b.props(enterprise, n);

    let mut ingest_targets = factor_props.clone();
    ingest_targets.extend(mp(&b, &["day", "phase", "previous_close"])?);
    let ingest = b.mech("ingest_factors", vec![], ingest_targets, vec![])?;
    let reset_region = b.mech("reset_region", vec![], rp(&b, &["supply_effect", "demand_effect"])?, vec![])?;
    let reset_sentiment = b.mech("reset_sentiment", vec![], mp(&b, &["sentiment"])?, vec![])?;
    let mut accumulate = Vec::new();
    for ((category, name), prop) in factor_names(cfg).into_iter().zip(&factor_props) {
        let (kind, acc) = factor_target(category);
        let acc = b.g.property_by_name(b.g.kind_by_name(kind)?, acc)?;
        accumulate.push(b.mech(&format!("accumulate_{name}"), vec![*prop, acc], vec![acc], vec![])?);
    }
    let relation = b.mech(
        "relation_update",
        [rp(&b, &["stance"])?, mp(&b, &["fundamental", "previous_close"])?].concat(),
        rp(&b, &["stance"])?,
        vec![],
    )?;
    let production =
        b.mech("production_adjust", rp(&b, &["base_production", "supply_effect", "stance"])?, rp(&b, &["production"])?, vec![])?;
    let consumption =
        b.mech("consumption_adjust", rp(&b, &["base_consumption", "demand_effect", "economy"])?, rp(&b, &["consumption"])?, vec![])?;
    let aggregate =
        b.mech("aggregate_regions", rp(&b, &["production", "consumption"])?, mp(&b, &["total_supply", "imbalance"])?, vec![])?;
    let fundamental = b.mech(
        "fundamental_price",
        mp(&b, &["fundamental", "previous_close", "imbalance", "sentiment"])?,
        mp(&b, &["fundamental"])?,
        vec![],
    )?;
    let sync =
        b.mech("sync_accounts", vec![], ep(&b, &["cash", "inventory", "position", "task_target", "task_done", "profit"])?, vec![])?;
    let order_sources: Vec<PropertyId> = ORDER_INPUTS
        .iter()
        .map(|n| b.g.property_by_name(enterprise, n).or_else(|_| b.g.property_by_name(market, n)))
        .collect::<Result<_>>()?;
    let role_key = ep(&b, &["role"])?;
    let decide = b.mech("order_decision", order_sources, ep(&b, &ORDER_OUTPUTS)?, role_key)?;
    let order_fields = ep(&b, &["order_flag", "order_side", "order_type", "order_price", "order_qty"])?;
    let auction = b.mech(
        "call_auction",
        order_fields.clone(),
        mp(&b, &["opening_price", "last_price", "phase", "best_bid", "best_ask", "volume"])?,
        vec![],
    )?;
    let trading = b.mech(
        "continuous_trading",
        order_fields,
        mp(&b, &["last_price", "best_bid", "best_ask", "volume", "phase", "live_price"])?,
        vec![],
    )?;
    let mtm = b.mech(
        "mark_to_market",
        mp(&b, &["last_price", "previous_close"])?,
        [mp(&b, &["closing_price"])?, ep(&b, &["cash", "position", "profit"])?].concat(),
        vec![],
    )?;
    let delivery = b.mech("delivery", mp(&b, &["closing_price", "day"])?, ep(&b, &["cash", "inventory", "position"])?, vec![])?;
    let outcome = b.mech(
        "region_outcome",
        [rp(&b, &["production", "consumption", "economy"])?, mp(&b, &["total_supply", "closing_price", "previous_close"])?].concat(),
        rp(&b, &["market_share", "economy", "reward"])?,
        vec![],
    )?;
    let reward = b.mech("enterprise_reward", ep(&b, &["profit", "task_done", "task_target"])?, ep(&b, &["reward"])?, vec![])?;

    b.plan.extend([ingest, reset_region, reset_sentiment]);
    b.plan.extend(accumulate);
    b.plan.extend([relation, production, consumption, aggregate, fundamental, sync, decide, auction]);
    for _ in 0..cfg.rounds_per_day {
        b.plan.extend([decide, trading]);
    }
    b.plan.extend([mtm, delivery, outcome, reward]);
    let plan = std::mem::take(&mut b.plan);
    Ok((g, Scheduler::from_steps(&plan)))
}

/// Factor frame with the scenario's column layout, synthetic values.
pub fn synthetic_factors(cfg: &IcofmConfig, quarters: usize, seed: u64) -> FactorFrame {
    FactorFrame::synthetic(cfg.factors_per_category, quarters, seed)
}

fn next_property(graph: &Hypergraph, offset: usize) -> PropertyId {
    PropertyId(graph.properties().len() + offset)
}

/// AddNode + AddEdge installing the close-market stabilizer. The new Boolean
/// market property receives the rule's verdict for each would-be trade.
pub fn close_market_ops(graph: &Hypergraph, fn_ref: Option<FnId>) -> Result<Vec<OperationVector>> {
    let layout = Layout::resolve(graph)?;
    let fn_ref = match fn_ref {
        Some(f) => f,
        None => graph.functions().lookup(CLOSE_MARKET_FN)?,
    };
    let flag = next_property(graph, 0);
    Ok(vec![
        OperationVector::AddNode { kind: layout.market, value_kind: ValueKind::Boolean },
        OperationVector::AddEdge(MechanismDef {
            sources: vec![layout.market(graph, "live_price")?, layout.market(graph, "opening_price")?],
            targets: vec![flag],
            fn_ref,
            grouping_keys: vec![],
        }),
    ])
}

/// AddNode + AddEdge installing the order-type restriction.
pub fn restrict_order_type_ops(graph: &Hypergraph) -> Result<Vec<OperationVector>> {
    let layout = Layout::resolve(graph)?;
    Ok(vec![
        OperationVector::AddNode { kind: layout.market, value_kind: ValueKind::Boolean },
        OperationVector::AddEdge(MechanismDef {
            sources: vec![],
            targets: vec![next_property(graph, 0)],
            fn_ref: graph.functions().lookup(RESTRICT_FN)?,
            grouping_keys: vec![],
        }),
    ])
}

/// Installs the interventionist role: its state properties, its mechanism and
/// a plan that runs it before every continuous-trading step.
pub fn install_interventionist_ops(graph: &Hypergraph, scheduler: &Scheduler) -> Result<Vec<OperationVector>> {
    let layout = Layout::resolve(graph)?;
    let mut ops: Vec<OperationVector> =
        (0..INTERVENTIONIST_STATE).map(|_| OperationVector::AddNode { kind: layout.market, value_kind: ValueKind::Integer }).collect();
    let targets = (0..INTERVENTIONIST_STATE).map(|i| next_property(graph, i)).collect();
    ops.push(OperationVector::AddEdge(MechanismDef {
        sources: vec![layout.market(graph, "opening_price")?],
        targets,
        fn_ref: graph.functions().lookup(INTERVENTIONIST_FN)?,
        grouping_keys: vec![],
    }));
    let new_mech = MechanismId(graph.mechanisms().len());
    let trading = graph.functions().lookup("continuous_trading")?;
    let mut steps = Vec::new();
    for m in &scheduler.effective_plan().steps {
        if graph.mechanism(*m)?.fn_ref == trading {
            steps.push(new_mech);
        }
        steps.push(*m);
    }
    ops.push(OperationVector::Reschedule(steps));
    Ok(ops)
}

/// Elimination op over the factor properties: `mask[i]` keeps factor `i`.
pub fn factor_mask_op(graph: &Hypergraph, mask: &[bool]) -> Result<OperationVector> {
    let layout = Layout::resolve(graph)?;
    if mask.len() != layout.factor_props.len() {
        return Err(Error::Contract(format!("{} bits for {} factors", mask.len(), layout.factor_props.len())));
    }
    let mut full = graph.node_mask();
    for (p, bit) in layout.factor_props.iter().zip(mask) {
        full[p.0] = *bit;
    }
    Ok(OperationVector::Eliminate { component: ComponentType::Node, mask: full })
}
