//! Directed hypergraph model: properties are nodes, mechanisms are directed
//! hyperedges from source properties to target properties.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registry::{FnEntry, FnId, FunctionRegistry};
use crate::value::{Value, ValueKind};

macro_rules! id_type {
    ($name:ident, $tag:literal) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub usize);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($tag, "{}"), self.0)
            }
        }
    };
}

id_type!(KindId, "k");
id_type!(PropertyId, "p");
id_type!(MechanismId, "m");
id_type!(InstanceId, "i");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Property {
    pub id: PropertyId,
    pub kind: KindId,
    pub name: String,
    pub value_kind: ValueKind,
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mechanism {
    pub id: MechanismId,
    pub sources: Vec<PropertyId>,
    pub targets: Vec<PropertyId>,
    pub fn_ref: FnId,
    /// Subset of `sources` used by the object allocator to batch instances.
    pub grouping_keys: Vec<PropertyId>,
    pub active: bool,
}

/// Everything needed to insert a mechanism.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MechanismDef {
    pub sources: Vec<PropertyId>,
    pub targets: Vec<PropertyId>,
    pub fn_ref: FnId,
    #[serde(default)]
    pub grouping_keys: Vec<PropertyId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectKind {
    pub id: KindId,
    pub name: String,
    pub properties: BTreeSet<PropertyId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub id: InstanceId,
    pub kind: KindId,
    pub state: BTreeMap<PropertyId, Value>,
}

/// A node or hyperedge reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ComponentRef {
    Node(PropertyId),
    Edge(MechanismId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// Two mechanisms with identical sources, targets and function.
    Overlap(MechanismId, MechanismId),
    /// Two mechanisms whose source and target sets coincide.
    Dependency(MechanismId, MechanismId),
    /// A mechanism's function invokes the function of another mechanism.
    CrossCall { caller: MechanismId, callee: MechanismId },
}

#[derive(Debug, Clone, Default)]
pub struct Hypergraph {
    kinds: Vec<ObjectKind>,
    properties: Vec<Property>,
    mechanisms: Vec<Mechanism>,
    instances: Vec<ObjectInstance>,
    functions: FunctionRegistry,
}

impl Hypergraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_functions(functions: FunctionRegistry) -> Self {
        Hypergraph { functions, ..Self::default() }
    }

    // ---- accessors ----

    pub fn functions(&self) -> &FunctionRegistry {
        &self.functions
    }

    pub fn functions_mut(&mut self) -> &mut FunctionRegistry {
        &mut self.functions
    }

    pub fn register_fn(&mut self, entry: FnEntry) -> Result<FnId> {
        self.functions.register(entry)
    }

    pub fn kinds(&self) -> &[ObjectKind] {
        &self.kinds
    }

    pub fn properties(&self) -> &[Property] {
        &self.properties
    }

    pub fn mechanisms(&self) -> &[Mechanism] {
        &self.mechanisms
    }

    pub fn instances(&self) -> &[ObjectInstance] {
        &self.instances
    }

    pub fn kind(&self, id: KindId) -> Result<&ObjectKind> {
        self.kinds.get(id.0).ok_or_else(|| Error::Reference(format!("kind {id}")))
    }

    pub fn property(&self, id: PropertyId) -> Result<&Property> {
        self.properties.get(id.0).ok_or_else(|| Error::Reference(format!("property {id}")))
    }

    pub fn mechanism(&self, id: MechanismId) -> Result<&Mechanism> {
        self.mechanisms.get(id.0).ok_or_else(|| Error::Reference(format!("mechanism {id}")))
    }

    pub fn instance(&self, id: InstanceId) -> Result<&ObjectInstance> {
        self.instances.get(id.0).ok_or_else(|| Error::Reference(format!("instance {id}")))
    }

    pub fn kind_by_name(&self, name: &str) -> Result<KindId> {
        self.kinds.iter().find(|k| k.name == name).map(|k| k.id).ok_or_else(|| Error::Reference(format!("kind `{name}`")))
    }

    pub fn property_by_name(&self, kind: KindId, name: &str) -> Result<PropertyId> {
        self.kind(kind)?
            .properties
            .iter()
            .copied()
            .find(|p| self.properties[p.0].name == name)
            .ok_or_else(|| Error::Reference(format!("property `{name}` of kind {kind}")))
    }

    pub fn active_property_count(&self) -> usize {
        self.properties.iter().filter(|p| p.active).count()
    }

    pub fn active_mechanism_count(&self) -> usize {
        self.mechanisms.iter().filter(|m| m.active).count()
    }

    pub fn instances_of(&self, kind: KindId) -> Vec<InstanceId> {
        self.instances.iter().filter(|i| i.kind == kind).map(|i| i.id).collect()
    }

    /// The sole instance of `kind`, if it has exactly one.
    pub fn singleton(&self, kind: KindId) -> Option<InstanceId> {
        let mut it = self.instances.iter().filter(|i| i.kind == kind);
        match (it.next(), it.next()) {
            (Some(i), None) => Some(i.id),
            _ => None,
        }
    }

    pub fn fn_entry(&self, mechanism: MechanismId) -> Result<&FnEntry> {
        self.functions.get(self.mechanism(mechanism)?.fn_ref)
    }

    /// Kind whose instances a per-instance mechanism iterates over.
    pub fn subject_kind(&self, mechanism: MechanismId) -> Result<Option<KindId>> {
        let m = self.mechanism(mechanism)?;
        match m.targets.first() {
            Some(p) => Ok(Some(self.property(*p)?.kind)),
            None => Ok(None),
        }
    }

    // ---- construction ----

    pub fn add_kind(&mut self, name: &str) -> KindId {
        let id = KindId(self.kinds.len());
        self.kinds.push(ObjectKind { id, name: name.to_string(), properties: BTreeSet::new() });
        id
    }

    /// Adds an active property; every existing instance of the kind gets the
    /// zero value of `value_kind`.
    pub fn add_property(&mut self, kind: KindId, name: &str, value_kind: ValueKind) -> Result<PropertyId> {
        self.kind(kind)?;
        let id = PropertyId(self.properties.len());
        let name = if name.is_empty() { format!("p{}", id.0) } else { name.to_string() };
        self.properties.push(Property { id, kind, name, value_kind, active: true });
        self.kinds[kind.0].properties.insert(id);
        for inst in self.instances.iter_mut().filter(|i| i.kind == kind) {
            inst.state.insert(id, Value::zero(value_kind));
        }
        Ok(id)
    }

    pub fn add_instance(&mut self, kind: KindId) -> Result<InstanceId> {
        let props = self.kind(kind)?.properties.clone();
        let id = InstanceId(self.instances.len());
        let state = props.iter().map(|p| (*p, Value::zero(self.properties[p.0].value_kind))).collect();
        self.instances.push(ObjectInstance { id, kind, state });
        Ok(id)
    }

    fn check_mechanism_def(&self, def: &MechanismDef) -> Result<()> {
        for p in def.sources.iter().chain(&def.targets).chain(&def.grouping_keys) {
            self.property(*p)?;
        }
        let entry = self.functions.get(def.fn_ref)?;
        let distinct = |v: &[PropertyId]| v.iter().collect::<BTreeSet<_>>().len() == v.len();
        if !distinct(&def.sources) || !distinct(&def.targets) {
            return Err(Error::Contract("source and target lists must not repeat a property".into()));
        }
        if entry.inputs != def.sources.len() || entry.outputs != def.targets.len() {
            return Err(Error::Contract(format!(
                "function `{}` takes {}→{} values but mechanism declares {}→{}",
                entry.name,
                entry.inputs,
                entry.outputs,
                def.sources.len(),
                def.targets.len()
            )));
        }
        if let Some(k) = def.grouping_keys.iter().find(|k| !def.sources.contains(k)) {
            return Err(Error::Contract(format!("grouping key {k} is not a source")));
        }
        if !entry.is_host() {
            let Some(first) = def.targets.first() else {
                return Err(Error::Contract("per-instance mechanisms need at least one target".into()));
            };
            let subject = self.properties[first.0].kind;
            if def.targets.iter().any(|t| self.properties[t.0].kind != subject) {
                return Err(Error::Contract("targets of a per-instance mechanism must share one kind".into()));
            }
            if def.grouping_keys.iter().any(|k| self.properties[k.0].kind != subject) {
                return Err(Error::Contract("grouping keys must belong to the subject kind".into()));
            }
        }
        Ok(())
    }

    pub fn add_mechanism(&mut self, def: MechanismDef) -> Result<MechanismId> {
        self.check_mechanism_def(&def)?;
        let id = MechanismId(self.mechanisms.len());
        self.mechanisms.push(Mechanism {
            id,
            sources: def.sources,
            targets: def.targets,
            fn_ref: def.fn_ref,
            grouping_keys: def.grouping_keys,
            active: true,
        });
        Ok(id)
    }

    // ---- state ----

    pub fn value(&self, instance: InstanceId, property: PropertyId) -> Result<&Value> {
        self.instance(instance)?.state.get(&property).ok_or_else(|| Error::Reference(format!("property {property} on instance {instance}")))
    }

    /// Stores a value, converted to the property's kind.
    pub fn set_value(&mut self, instance: InstanceId, property: PropertyId, value: Value) -> Result<()> {
        let kind = self.property(property)?.value_kind;
        let value = coerce(value, kind)?;
        let inst = self.instances.get_mut(instance.0).ok_or_else(|| Error::Reference(format!("instance {instance}")))?;
        let slot = inst.state.get_mut(&property).ok_or_else(|| Error::Reference(format!("property {property} on instance {instance}")))?;
        *slot = value;
        Ok(())
    }

    /// Reads a property of a singleton kind.
    pub fn global(&self, property: PropertyId) -> Result<&Value> {
        let kind = self.property(property)?.kind;
        let inst = self.singleton(kind).ok_or_else(|| Error::Contract(format!("kind {kind} is not a singleton")))?;
        self.value(inst, property)
    }

    pub fn set_global(&mut self, property: PropertyId, value: Value) -> Result<()> {
        let kind = self.property(property)?.kind;
        let inst = self.singleton(kind).ok_or_else(|| Error::Contract(format!("kind {kind} is not a singleton")))?;
        self.set_value(inst, property, value)
    }

    // ---- plasticity ----

    /// Sets a component's activation. Deactivating a node deactivates every
    /// mechanism that reads it, and a mechanism with an inactive source stays
    /// off. Returns every component whose state changed.
    pub fn set_activation(&mut self, component: ComponentRef, active: bool) -> Result<BTreeSet<ComponentRef>> {
        let mut changed = BTreeSet::new();
        match component {
            ComponentRef::Node(p) => {
                self.property(p)?;
                if self.properties[p.0].active != active {
                    self.properties[p.0].active = active;
                    changed.insert(component);
                }
                if !active {
                    for m in self.mechanisms.iter_mut().filter(|m| m.active && m.sources.contains(&p)) {
                        m.active = false;
                        changed.insert(ComponentRef::Edge(m.id));
                    }
                }
            }
            ComponentRef::Edge(m) => {
                let blocked = self.mechanism(m)?.sources.iter().any(|p| !self.properties[p.0].active);
                if self.mechanisms[m.0].active != active && !(active && blocked) {
                    self.mechanisms[m.0].active = active;
                    changed.insert(component);
                }
            }
        }
        Ok(changed)
    }

    pub fn node_mask(&self) -> Vec<bool> {
        self.properties.iter().map(|p| p.active).collect()
    }

    pub fn edge_mask(&self) -> Vec<bool> {
        self.mechanisms.iter().map(|m| m.active).collect()
    }

    // ---- alteration ----

    /// Moves a property to another kind and/or changes its value kind.
    pub fn alter_property(&mut self, id: PropertyId, new_kind: Option<KindId>, new_value_kind: Option<ValueKind>) -> Result<bool> {
        let prop = self.property(id)?.clone();
        if let Some(k) = new_kind {
            self.kind(k)?;
        }
        let target_kind = new_kind.unwrap_or(prop.kind);
        let target_vk = new_value_kind.unwrap_or(prop.value_kind);
        if target_kind == prop.kind && target_vk == prop.value_kind {
            return Ok(false);
        }
        if target_kind == prop.kind {
            // Convert in place, all or nothing.
            let mut converted = Vec::new();
            for inst in self.instances.iter().filter(|i| i.kind == prop.kind) {
                let v = inst.state[&id]
                    .convert(target_vk)
                    .ok_or_else(|| Error::Contract(format!("value on instance {} cannot become {target_vk:?}", inst.id)))?;
                converted.push((inst.id, v));
            }
            for (inst, v) in converted {
                self.instances[inst.0].state.insert(id, v);
            }
        } else {
            for inst in self.instances.iter_mut() {
                if inst.kind == prop.kind {
                    inst.state.remove(&id);
                } else if inst.kind == target_kind {
                    inst.state.insert(id, Value::zero(target_vk));
                }
            }
            self.kinds[prop.kind.0].properties.remove(&id);
            self.kinds[target_kind.0].properties.insert(id);
        }
        let p = &mut self.properties[id.0];
        p.kind = target_kind;
        p.value_kind = target_vk;
        Ok(true)
    }

    /// Points a mechanism at another function of the same arity.
    pub fn alter_mechanism_fn(&mut self, id: MechanismId, fn_ref: FnId) -> Result<bool> {
        let m = self.mechanism(id)?.clone();
        if m.fn_ref == fn_ref {
            return Ok(false);
        }
        self.check_mechanism_def(&MechanismDef { sources: m.sources, targets: m.targets, fn_ref, grouping_keys: m.grouping_keys })?;
        self.mechanisms[id.0].fn_ref = fn_ref;
        Ok(true)
    }

    // ---- validation ----

    /// Structural diagnostics for the independence and single-responsibility
    /// principles. Never fails.
    pub fn validate_principles(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let set = |v: &[PropertyId]| v.iter().copied().collect::<BTreeSet<_>>();
        let sigs: Vec<_> = self.mechanisms.iter().map(|m| (set(&m.sources), set(&m.targets))).collect();
        for a in 0..self.mechanisms.len() {
            for b in a + 1..self.mechanisms.len() {
                if sigs[a] == sigs[b] {
                    let (ma, mb) = (&self.mechanisms[a], &self.mechanisms[b]);
                    if ma.fn_ref == mb.fn_ref {
                        out.push(Violation::Overlap(ma.id, mb.id));
                    } else {
                        out.push(Violation::Dependency(ma.id, mb.id));
                    }
                }
            }
        }
        for caller in &self.mechanisms {
            let Ok(entry) = self.functions.get(caller.fn_ref) else { continue };
            for name in &entry.calls {
                let Ok(callee_fn) = self.functions.lookup(name) else { continue };
                for callee in self.mechanisms.iter().filter(|m| m.fn_ref == callee_fn && m.id != caller.id) {
                    out.push(Violation::CrossCall { caller: caller.id, callee: callee.id });
                }
            }
        }
        out
    }

    /// Checks every cross-reference and instance state invariant.
    pub fn validate_structure(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (i, p) in self.properties.iter().enumerate() {
            if p.id.0 != i || !seen.insert(p.id) {
                return Err(Error::Contract(format!("property id {} out of place", p.id)));
            }
            if !self.kind(p.kind)?.properties.contains(&p.id) {
                return Err(Error::Contract(format!("property {} missing from kind {}", p.id, p.kind)));
            }
        }
        for k in &self.kinds {
            for p in &k.properties {
                if self.property(*p)?.kind != k.id {
                    return Err(Error::Contract(format!("kind {} lists foreign property {p}", k.id)));
                }
            }
        }
        for (i, m) in self.mechanisms.iter().enumerate() {
            if m.id.0 != i {
                return Err(Error::Contract(format!("mechanism id {} out of place", m.id)));
            }
            for p in m.sources.iter().chain(&m.targets) {
                self.property(*p)?;
            }
            let e = self.functions.get(m.fn_ref)?;
            if e.inputs != m.sources.len() || e.outputs != m.targets.len() {
                return Err(Error::Contract(format!("mechanism {} arity mismatch", m.id)));
            }
        }
        for inst in &self.instances {
            let kind = self.kind(inst.kind)?;
            if inst.state.len() != kind.properties.len() {
                return Err(Error::Contract(format!("instance {} state size mismatch", inst.id)));
            }
            for (p, v) in &inst.state {
                if !kind.properties.contains(p) || self.properties[p.0].value_kind != v.kind() {
                    return Err(Error::Contract(format!("instance {} holds bad value for {p}", inst.id)));
                }
            }
        }
        Ok(())
    }
}

/// Converts a function output to the kind of the property receiving it.
pub fn coerce(value: Value, kind: ValueKind) -> Result<Value> {
    if value.kind() == kind {
        return Ok(value);
    }
    match (&value, kind) {
        (Value::RealSeq(_), ValueKind::RealSeq) => Ok(value),
        (Value::RealSeq(v), _) if v.len() != 1 => {
            Err(Error::Contract(format!("sequence of length {} cannot fill a {kind:?} property", v.len())))
        }
        _ => Ok(Value::from_f64(kind, value.as_f64())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::FnEntry;

    fn graph_with_identity() -> (Hypergraph, FnId) {
        let mut g = Hypergraph::new();
        let f = g.register_fn(FnEntry::rule("id", 1, 1, |v, _| Ok(v.to_vec())).deterministic()).unwrap();
        (g, f)
    }

    #[test]
    fn first_property_gets_id_zero() {
        let mut g = Hypergraph::new();
        let k = g.add_kind("agent");
        let p = g.add_property(k, "x", ValueKind::Real).unwrap();
        assert_eq!(p, PropertyId(0));
        assert_eq!(g.properties().len(), 1);
    }

    #[test]
    fn unknown_kind_is_reference_error() {
        let mut g = Hypergraph::new();
        for i in 0..4 {
            g.add_kind(&format!("k{i}"));
        }
        assert!(matches!(g.add_property(KindId(99), "x", ValueKind::Real), Err(Error::Reference(_))));
    }

    #[test]
    fn new_property_backfills_instances_with_zero() {
        let mut g = Hypergraph::new();
        let k = g.add_kind("agent");
        let i = g.add_instance(k).unwrap();
        let p = g.add_property(k, "flag", ValueKind::Boolean).unwrap();
        assert_eq!(g.value(i, p).unwrap(), &Value::Boolean(false));
    }

    #[test]
    fn self_loops_accepted_and_dangling_ids_rejected() {
        let (mut g, f) = graph_with_identity();
        let k = g.add_kind("agent");
        let p = g.add_property(k, "x", ValueKind::Real).unwrap();
        let def = MechanismDef { sources: vec![p], targets: vec![p], fn_ref: f, grouping_keys: vec![] };
        assert!(g.add_mechanism(def).is_ok());
        let bad = MechanismDef { sources: vec![p, PropertyId(999)], targets: vec![p], fn_ref: f, grouping_keys: vec![] };
        assert!(matches!(g.add_mechanism(bad), Err(Error::Reference(_))));
    }

    #[test]
    fn arity_mismatch_is_contract_error() {
        let (mut g, f) = graph_with_identity();
        let k = g.add_kind("agent");
        let a = g.add_property(k, "a", ValueKind::Real).unwrap();
        let b = g.add_property(k, "b", ValueKind::Real).unwrap();
        let def = MechanismDef { sources: vec![a, b], targets: vec![a], fn_ref: f, grouping_keys: vec![] };
        assert!(matches!(g.add_mechanism(def), Err(Error::Contract(_))));
    }

    #[test]
    fn deactivation_cascades_to_readers_only() {
        let (mut g, f) = graph_with_identity();
        let k = g.add_kind("agent");
        let p = g.add_property(k, "p", ValueKind::Real).unwrap();
        let q = g.add_property(k, "q", ValueKind::Real).unwrap();
        let lonely = g.add_property(k, "r", ValueKind::Real).unwrap();
        let m = g.add_mechanism(MechanismDef { sources: vec![p], targets: vec![q], fn_ref: f, grouping_keys: vec![] }).unwrap();

        let changed = g.set_activation(ComponentRef::Node(p), false).unwrap();
        assert_eq!(changed, BTreeSet::from([ComponentRef::Node(p), ComponentRef::Edge(m)]));
        assert!(!g.mechanism(m).unwrap().active);

        let changed = g.set_activation(ComponentRef::Node(lonely), false).unwrap();
        assert_eq!(changed, BTreeSet::from([ComponentRef::Node(lonely)]));

        // Reactivation leaves the cascaded mechanism off.
        let changed = g.set_activation(ComponentRef::Node(p), true).unwrap();
        assert_eq!(changed, BTreeSet::from([ComponentRef::Node(p)]));
        assert!(!g.mechanism(m).unwrap().active);

        // Deactivating a target does not cascade.
        g.set_activation(ComponentRef::Edge(m), true).unwrap();
        assert!(g.mechanism(m).unwrap().active);
        let changed = g.set_activation(ComponentRef::Node(q), false).unwrap();
        assert_eq!(changed, BTreeSet::from([ComponentRef::Node(q)]));
    }

    #[test]
    fn mechanism_with_inactive_source_stays_off() {
        let (mut g, f) = graph_with_identity();
        let k = g.add_kind("agent");
        let p = g.add_property(k, "p", ValueKind::Real).unwrap();
        let q = g.add_property(k, "q", ValueKind::Real).unwrap();
        let m = g.add_mechanism(MechanismDef { sources: vec![p], targets: vec![q], fn_ref: f, grouping_keys: vec![] }).unwrap();
        g.set_activation(ComponentRef::Node(p), false).unwrap();
        assert!(g.set_activation(ComponentRef::Edge(m), true).unwrap().is_empty());
        assert!(!g.mechanism(m).unwrap().active);
    }

    #[test]
    fn principle_violations() {
        let (mut g, f) = graph_with_identity();
        assert!(g.validate_principles().is_empty());
        let other = g.register_fn(FnEntry::rule("neg", 1, 1, |v, _| Ok(vec![Value::Real(-v[0].as_f64())]))).unwrap();
        let k = g.add_kind("agent");
        let a = g.add_property(k, "a", ValueKind::Real).unwrap();
        let b = g.add_property(k, "b", ValueKind::Real).unwrap();
        let def = |fn_ref| MechanismDef { sources: vec![a], targets: vec![b], fn_ref, grouping_keys: vec![] };
        let m1 = g.add_mechanism(def(f)).unwrap();
        let m2 = g.add_mechanism(def(other)).unwrap();
        assert_eq!(g.validate_principles(), vec![Violation::Dependency(m1, m2)]);

        let (mut g, f) = graph_with_identity();
        let k = g.add_kind("agent");
        let a = g.add_property(k, "a", ValueKind::Real).unwrap();
        let b = g.add_property(k, "b", ValueKind::Real).unwrap();
        let def = MechanismDef { sources: vec![a], targets: vec![b], fn_ref: f, grouping_keys: vec![] };
        let m1 = g.add_mechanism(def.clone()).unwrap();
        let m2 = g.add_mechanism(def).unwrap();
        assert_eq!(g.validate_principles(), vec![Violation::Overlap(m1, m2)]);
    }

    #[test]
    fn cross_call_metadata_is_reported() {
        let mut g = Hypergraph::new();
        let callee = g.register_fn(FnEntry::rule("inner", 1, 1, |v, _| Ok(v.to_vec()))).unwrap();
        let caller = g.register_fn(FnEntry::rule("outer", 1, 1, |v, _| Ok(v.to_vec())).calling(&["inner"])).unwrap();
        let k = g.add_kind("agent");
        let a = g.add_property(k, "a", ValueKind::Real).unwrap();
        let b = g.add_property(k, "b", ValueKind::Real).unwrap();
        let c = g.add_property(k, "c", ValueKind::Real).unwrap();
        let m1 = g.add_mechanism(MechanismDef { sources: vec![a], targets: vec![b], fn_ref: caller, grouping_keys: vec![] }).unwrap();
        let m2 = g.add_mechanism(MechanismDef { sources: vec![b], targets: vec![c], fn_ref: callee, grouping_keys: vec![] }).unwrap();
        assert_eq!(g.validate_principles(), vec![Violation::CrossCall { caller: m1, callee: m2 }]);
    }

    #[test]
    fn alter_value_kind_checks_stored_values() {
        let mut g = Hypergraph::new();
        let k = g.add_kind("agent");
        let p = g.add_property(k, "x", ValueKind::Real).unwrap();
        let i = g.add_instance(k).unwrap();
        g.set_value(i, p, Value::Real(2.0)).unwrap();
        assert!(g.alter_property(p, None, Some(ValueKind::Integer)).unwrap());
        assert_eq!(g.value(i, p).unwrap(), &Value::Integer(2));
        g.set_value(i, p, Value::Integer(7)).unwrap();
        assert!(matches!(g.alter_property(p, None, Some(ValueKind::Boolean)), Err(Error::Contract(_))));
        assert_eq!(g.property(p).unwrap().value_kind, ValueKind::Integer);
        g.validate_structure().unwrap();
    }

    #[test]
    fn moving_property_between_kinds_keeps_structure() {
        let mut g = Hypergraph::new();
        let a = g.add_kind("a");
        let b = g.add_kind("b");
        let p = g.add_property(a, "x", ValueKind::Real).unwrap();
        let ia = g.add_instance(a).unwrap();
        let ib = g.add_instance(b).unwrap();
        g.alter_property(p, Some(b), None).unwrap();
        assert!(g.value(ia, p).is_err());
        assert_eq!(g.value(ib, p).unwrap(), &Value::Real(0.0));
        g.validate_structure().unwrap();
    }
}
