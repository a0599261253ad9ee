//! JSON scenario files: kinds, properties, instances with their values,
//! mechanisms bound by function name, program functions given as genomes,
//! and the execution plan.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypergraph::{ComponentRef, Hypergraph, KindId, MechanismDef, MechanismId, PropertyId};
use crate::icofm::{self, IcofmConfig};
use crate::registry::{FnEntry, FunctionRegistry};
use crate::scheduler::Scheduler;
use crate::symbolic::{decode_genome, CgpGenome, OperatorContext};
use crate::value::{Value, ValueKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertySpec {
    pub kind: usize,
    pub name: String,
    pub value_kind: ValueKind,
    #[serde(default = "yes")]
    pub active: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub kind: usize,
    /// (property id, value); omitted properties start at zero.
    #[serde(default)]
    pub values: Vec<(usize, Value)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismSpec {
    pub sources: Vec<usize>,
    pub targets: Vec<usize>,
    pub function: String,
    #[serde(default)]
    pub grouping_keys: Vec<usize>,
    #[serde(default = "yes")]
    pub active: bool,
}

/// A program function registered from its genome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramSpec {
    pub name: String,
    pub genome: Vec<i64>,
    pub upper_limit_ratio: f64,
    pub lower_limit_ratio: f64,
}

impl ProgramSpec {
    pub fn entry(&self) -> Result<FnEntry> {
        let program = decode_genome(&CgpGenome::from_ints(&self.genome)?)?;
        Ok(FnEntry::program(&self.name, program, OperatorContext::new(self.upper_limit_ratio, self.lower_limit_ratio)?))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    /// Market configuration; when present the market's native functions are
    /// registered before `programs`.
    #[serde(default)]
    pub market: Option<IcofmConfig>,
    #[serde(default)]
    pub programs: Vec<ProgramSpec>,
    pub kinds: Vec<String>,
    pub properties: Vec<PropertySpec>,
    #[serde(default)]
    pub instances: Vec<InstanceSpec>,
    #[serde(default)]
    pub mechanisms: Vec<MechanismSpec>,
    #[serde(default)]
    pub plan: Vec<usize>,
}

impl ScenarioFile {
    pub fn registry(&self) -> Result<FunctionRegistry> {
        let mut reg = match &self.market {
            Some(cfg) => icofm::function_registry(cfg)?,
            None => FunctionRegistry::default(),
        };
        for p in &self.programs {
            reg.register(p.entry()?)?;
        }
        Ok(reg)
    }

    /// Rebuilds the model. Ids follow list order, so loading is deterministic.
    pub fn to_model(&self) -> Result<(Hypergraph, Scheduler)> {
        let mut g = Hypergraph::with_functions(self.registry()?);
        for k in &self.kinds {
            g.add_kind(k);
        }
        for p in &self.properties {
            g.add_property(KindId(p.kind), &p.name, p.value_kind)?;
        }
        for inst in &self.instances {
            let id = g.add_instance(KindId(inst.kind))?;
            for (p, v) in &inst.values {
                g.set_value(id, PropertyId(*p), v.clone())?;
            }
        }
        for m in &self.mechanisms {
            let fn_ref = g.functions().lookup(&m.function)?;
            g.add_mechanism(MechanismDef {
                sources: m.sources.iter().map(|p| PropertyId(*p)).collect(),
                targets: m.targets.iter().map(|p| PropertyId(*p)).collect(),
                fn_ref,
                grouping_keys: m.grouping_keys.iter().map(|p| PropertyId(*p)).collect(),
            })?;
        }
        for (i, p) in self.properties.iter().enumerate() {
            if !p.active {
                g.set_activation(ComponentRef::Node(PropertyId(i)), false)?;
            }
        }
        for (i, m) in self.mechanisms.iter().enumerate() {
            if !m.active {
                g.set_activation(ComponentRef::Edge(MechanismId(i)), false)?;
            }
        }
        let steps: Vec<MechanismId> = self.plan.iter().map(|m| MechanismId(*m)).collect();
        let scheduler = Scheduler::from_steps(&steps);
        scheduler.plan.validate(&g)?;
        Ok((g, scheduler))
    }

    /// Captures a model. Every program function used by a mechanism must be
    /// described in `programs` or come from the market registry.
    pub fn from_model(graph: &Hypergraph, scheduler: &Scheduler, market: Option<IcofmConfig>, programs: Vec<ProgramSpec>) -> Result<Self> {
        let file = ScenarioFile {
            market,
            programs,
            kinds: graph.kinds().iter().map(|k| k.name.clone()).collect(),
            properties: graph
                .properties()
                .iter()
                .map(|p| PropertySpec { kind: p.kind.0, name: p.name.clone(), value_kind: p.value_kind, active: p.active })
                .collect(),
            instances: graph
                .instances()
                .iter()
                .map(|i| InstanceSpec {
                    kind: i.kind.0,
                    values: i
                        .state
                        .iter()
                        .filter(|(p, v)| **v != Value::zero(graph.properties()[p.0].value_kind))
                        .map(|(p, v)| (p.0, v.clone()))
                        .collect(),
                })
                .collect(),
            mechanisms: graph
                .mechanisms()
                .iter()
                .map(|m| -> Result<MechanismSpec> {
                    Ok(MechanismSpec {
                        sources: m.sources.iter().map(|p| p.0).collect(),
                        targets: m.targets.iter().map(|p| p.0).collect(),
                        function: graph.functions().get(m.fn_ref)?.name.clone(),
                        grouping_keys: m.grouping_keys.iter().map(|p| p.0).collect(),
                        active: m.active,
                    })
                })
                .collect::<Result<_>>()?,
            plan: scheduler.effective_plan().steps.iter().map(|m| m.0).collect(),
        };
        let reg = file.registry()?;
        for m in &file.mechanisms {
            if reg.lookup(&m.function).is_err() {
                return Err(Error::Reference(format!("function `{}` cannot be restored from the scenario file", m.function)));
            }
        }
        Ok(file)
    }

    /// The market scenario with its default plan.
    pub fn market(cfg: &IcofmConfig) -> Result<Self> {
        let (g, s) = icofm::build(cfg)?;
        Self::from_model(&g, &s, Some(cfg.clone()), Vec::new())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Load { row: e.line(), reason: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}
