//! The four standard graph operations and their flat integer encoding.
//!
//! Wire layout of one operation: `[type, component, len, payload...]` where
//! `len` counts the payload integers.
//!
//! | type | component | payload |
//! |------|-----------|---------|
//! | 0 alteration | 0 node | `pid, has_kind, kind, has_vk, vk` |
//! | 0 alteration | 1 hyperedge | `mid, fn` |
//! | 1 addition | 0 node | `kind, vk` |
//! | 1 addition | 1 hyperedge | `fn, ns, src.., nt, tgt.., nk, keys..` |
//! | 2 elimination | 0/1 | activation bits in ascending id order |
//! | 3 rescheduling | 1 hyperedge | mechanism ids |

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypergraph::{ComponentRef, Hypergraph, KindId, MechanismDef, MechanismId, PropertyId};
use crate::registry::FnId;
use crate::scheduler::Scheduler;
use crate::value::ValueKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OperationType {
    Alteration,
    Addition,
    Elimination,
    Rescheduling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ComponentType {
    Node,
    Hyperedge,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum OperationVector {
    AlterNode { property: PropertyId, new_kind: Option<KindId>, new_value_kind: Option<ValueKind> },
    AlterEdge { mechanism: MechanismId, fn_ref: FnId },
    AddNode { kind: KindId, value_kind: ValueKind },
    AddEdge(MechanismDef),
    Eliminate { component: ComponentType, mask: Vec<bool> },
    Reschedule(Vec<MechanismId>),
}

impl OperationVector {
    pub fn operation_type(&self) -> OperationType {
        match self {
            OperationVector::AlterNode { .. } | OperationVector::AlterEdge { .. } => OperationType::Alteration,
            OperationVector::AddNode { .. } | OperationVector::AddEdge(_) => OperationType::Addition,
            OperationVector::Eliminate { .. } => OperationType::Elimination,
            OperationVector::Reschedule(_) => OperationType::Rescheduling,
        }
    }

    pub fn component_type(&self) -> ComponentType {
        match self {
            OperationVector::AlterNode { .. } | OperationVector::AddNode { .. } => ComponentType::Node,
            OperationVector::Eliminate { component, .. } => *component,
            _ => ComponentType::Hyperedge,
        }
    }
}

fn type_tag(t: OperationType) -> i64 {
    match t {
        OperationType::Alteration => 0,
        OperationType::Addition => 1,
        OperationType::Elimination => 2,
        OperationType::Rescheduling => 3,
    }
}

fn component_tag(c: ComponentType) -> i64 {
    match c {
        ComponentType::Node => 0,
        ComponentType::Hyperedge => 1,
    }
}

fn push_list(out: &mut Vec<i64>, ids: impl ExactSizeIterator<Item = usize>) {
    out.push(ids.len() as i64);
    out.extend(ids.map(|i| i as i64));
}

pub fn encode(op: &OperationVector) -> Vec<i64> {
    let mut payload = Vec::new();
    match op {
        OperationVector::AlterNode { property, new_kind, new_value_kind } => {
            payload.push(property.0 as i64);
            payload.push(i64::from(new_kind.is_some()));
            payload.push(new_kind.map_or(0, |k| k.0 as i64));
            payload.push(i64::from(new_value_kind.is_some()));
            payload.push(new_value_kind.map_or(0, ValueKind::code));
        }
        OperationVector::AlterEdge { mechanism, fn_ref } => {
            payload.extend([mechanism.0 as i64, fn_ref.0 as i64]);
        }
        OperationVector::AddNode { kind, value_kind } => {
            payload.extend([kind.0 as i64, value_kind.code()]);
        }
        OperationVector::AddEdge(def) => {
            payload.push(def.fn_ref.0 as i64);
            push_list(&mut payload, def.sources.iter().map(|p| p.0));
            push_list(&mut payload, def.targets.iter().map(|p| p.0));
            push_list(&mut payload, def.grouping_keys.iter().map(|p| p.0));
        }
        OperationVector::Eliminate { mask, .. } => payload.extend(mask.iter().map(|b| i64::from(*b))),
        OperationVector::Reschedule(ids) => payload.extend(ids.iter().map(|m| m.0 as i64)),
    }
    let mut out = vec![type_tag(op.operation_type()), component_tag(op.component_type()), payload.len() as i64];
    out.extend(payload);
    out
}

/// Cursor over an integer sequence that reports absolute offsets.
struct Reader<'a> {
    seq: &'a [i64],
    pos: usize,
    end: usize,
}

impl Reader<'_> {
    fn err(&self, offset: usize, reason: impl Into<String>) -> Error {
        Error::Decode { offset, reason: reason.into() }
    }

    fn int(&mut self) -> Result<i64> {
        if self.pos >= self.end {
            return Err(self.err(self.pos, "payload ended early"));
        }
        self.pos += 1;
        Ok(self.seq[self.pos - 1])
    }

    fn index(&mut self) -> Result<usize> {
        let at = self.pos;
        let v = self.int()?;
        usize::try_from(v).map_err(|_| self.err(at, format!("negative index {v}")))
    }

    fn flag(&mut self) -> Result<bool> {
        let at = self.pos;
        match self.int()? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(self.err(at, format!("expected 0 or 1, found {v}"))),
        }
    }

    fn value_kind(&mut self) -> Result<ValueKind> {
        let at = self.pos;
        let v = self.int()?;
        ValueKind::from_code(v).ok_or_else(|| self.err(at, format!("unknown value kind {v}")))
    }

    fn list(&mut self) -> Result<Vec<PropertyId>> {
        let n = self.index()?;
        if n > self.end - self.pos {
            return Err(self.err(self.pos - 1, format!("list of {n} overruns the payload")));
        }
        (0..n).map(|_| self.index().map(PropertyId)).collect()
    }
}

/// Decodes exactly one operation occupying the whole of `seq`.
pub fn decode(seq: &[i64]) -> Result<OperationVector> {
    let (op, used) = decode_prefix(seq)?;
    if used != seq.len() {
        return Err(Error::Decode { offset: used, reason: "trailing integers after operation".into() });
    }
    Ok(op)
}

/// Decodes the operation at the start of `seq`; returns it and its length.
pub fn decode_prefix(seq: &[i64]) -> Result<(OperationVector, usize)> {
    let head = |i: usize| seq.get(i).copied().ok_or(Error::Decode { offset: i, reason: "header truncated".into() });
    let (t, c, len) = (head(0)?, head(1)?, head(2)?);
    let len = usize::try_from(len).map_err(|_| Error::Decode { offset: 2, reason: format!("negative length {len}") })?;
    if seq.len() - 3 < len {
        return Err(Error::Decode { offset: seq.len(), reason: format!("payload of {len} truncated") });
    }
    let component = match c {
        0 => ComponentType::Node,
        1 => ComponentType::Hyperedge,
        _ => return Err(Error::Decode { offset: 1, reason: format!("component tag {c}") }),
    };
    let mut r = Reader { seq, pos: 3, end: 3 + len };
    let op = match (t, component) {
        (0, ComponentType::Node) => {
            let property = PropertyId(r.index()?);
            let has_kind = r.flag()?;
            let kind = r.index()?;
            let has_vk = r.flag()?;
            let vk_at = r.pos;
            let vk = r.int()?;
            let new_value_kind =
                if has_vk { Some(ValueKind::from_code(vk).ok_or_else(|| r.err(vk_at, format!("unknown value kind {vk}")))?) } else { None };
            OperationVector::AlterNode { property, new_kind: has_kind.then_some(KindId(kind)), new_value_kind }
        }
        (0, ComponentType::Hyperedge) => OperationVector::AlterEdge { mechanism: MechanismId(r.index()?), fn_ref: FnId(r.index()?) },
        (1, ComponentType::Node) => OperationVector::AddNode { kind: KindId(r.index()?), value_kind: r.value_kind()? },
        (1, ComponentType::Hyperedge) => {
            let fn_ref = FnId(r.index()?);
            let sources = r.list()?;
            let targets = r.list()?;
            let grouping_keys = r.list()?;
            OperationVector::AddEdge(MechanismDef { sources, targets, fn_ref, grouping_keys })
        }
        (2, _) => {
            let mask = (0..len).map(|_| r.flag()).collect::<Result<Vec<_>>>()?;
            OperationVector::Eliminate { component, mask }
        }
        (3, ComponentType::Hyperedge) => {
            OperationVector::Reschedule((0..len).map(|_| r.index().map(MechanismId)).collect::<Result<Vec<_>>>()?)
        }
        (3, ComponentType::Node) => return Err(Error::Decode { offset: 1, reason: "rescheduling applies to hyperedges".into() }),
        _ => return Err(Error::Decode { offset: 0, reason: format!("operation tag {t}") }),
    };
    if r.pos != r.end {
        return Err(Error::Decode { offset: r.pos, reason: "payload longer than its content".into() });
    }
    Ok((op, 3 + len))
}

/// What an applied operation changed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChangeReport {
    pub activation: BTreeSet<ComponentRef>,
    pub altered: Vec<ComponentRef>,
    pub added: Vec<ComponentRef>,
    pub rescheduled: bool,
}

impl ChangeReport {
    pub fn is_empty(&self) -> bool {
        self.activation.is_empty() && self.altered.is_empty() && self.added.is_empty() && !self.rescheduled
    }
}

/// Sets every component's activation to `mask` (ascending id order). Cascades
/// from deactivated nodes apply after all bits are set.
pub fn apply_mask(graph: &mut Hypergraph, component: ComponentType, mask: &[bool]) -> Result<BTreeSet<ComponentRef>> {
    let current = match component {
        ComponentType::Node => graph.node_mask(),
        ComponentType::Hyperedge => graph.edge_mask(),
    };
    if mask.len() != current.len() {
        return Err(Error::Contract(format!("mask has {} bits for {} components", mask.len(), current.len())));
    }
    let mut changed = BTreeSet::new();
    // Activations first so a node switched back on cannot undo a cascade
    // triggered by another bit of the same mask.
    for pass_active in [true, false] {
        for (i, bit) in mask.iter().enumerate() {
            if *bit != pass_active || current[i] == *bit {
                continue;
            }
            let r = match component {
                ComponentType::Node => ComponentRef::Node(PropertyId(i)),
                ComponentType::Hyperedge => ComponentRef::Edge(MechanismId(i)),
            };
            changed.extend(graph.set_activation(r, *bit)?);
        }
    }
    Ok(changed)
}

pub fn apply_operation(graph: &mut Hypergraph, scheduler: &mut Scheduler, op: &OperationVector) -> Result<ChangeReport> {
    let mut report = ChangeReport::default();
    match op {
        OperationVector::AlterNode { property, new_kind, new_value_kind } => {
            if graph.alter_property(*property, *new_kind, *new_value_kind)? {
                report.altered.push(ComponentRef::Node(*property));
            }
        }
        OperationVector::AlterEdge { mechanism, fn_ref } => {
            if graph.alter_mechanism_fn(*mechanism, *fn_ref)? {
                report.altered.push(ComponentRef::Edge(*mechanism));
            }
        }
        OperationVector::AddNode { kind, value_kind } => {
            let id = graph.add_property(*kind, "", *value_kind)?;
            report.added.push(ComponentRef::Node(id));
        }
        OperationVector::AddEdge(def) => {
            let id = graph.add_mechanism(def.clone())?;
            report.added.push(ComponentRef::Edge(id));
        }
        OperationVector::Eliminate { component, mask } => {
            report.activation = apply_mask(graph, *component, mask)?;
        }
        OperationVector::Reschedule(ids) => {
            scheduler.reschedule(graph, ids)?;
            report.rescheduled = true;
        }
    }
    Ok(report)
}

/// A replayable list of operations with optional provenance fields.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolutionFile {
    pub genome: Option<Vec<i64>>,
    pub fitness: Option<f64>,
    pub complexity: Option<f64>,
    pub operations: Vec<OperationVector>,
}

impl SolutionFile {
    /// `#key value...` header lines, then one encoded operation per line.
    pub fn to_text(&self) -> String {
        let join = |v: &[i64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        let mut s = String::new();
        if let Some(g) = &self.genome {
            let _ = writeln!(s, "#genome {}", join(g));
        }
        if let Some(f) = self.fitness {
            let _ = writeln!(s, "#fitness {f:?}");
        }
        if let Some(c) = self.complexity {
            let _ = writeln!(s, "#complexity {c:?}");
        }
        for op in &self.operations {
            let _ = writeln!(s, "{}", join(&encode(op)));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut out = SolutionFile::default();
        for (n, line) in text.lines().enumerate() {
            let row = n + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bad = |reason: String| Error::Load { row, reason };
            if let Some(rest) = line.strip_prefix('#') {
                let mut parts = rest.split_whitespace();
                let key = parts.next().unwrap_or("");
                let rest: Vec<&str> = parts.collect();
                let real = || -> Result<f64> { rest.first().and_then(|x| x.parse().ok()).ok_or_else(|| bad(format!("bad `{key}` value"))) };
                match key {
                    "genome" => {
                        let g = rest.iter().map(|x| x.parse::<i64>()).collect::<std::result::Result<Vec<_>, _>>();
                        out.genome = Some(g.map_err(|e| bad(e.to_string()))?);
                    }
                    "fitness" => out.fitness = Some(real()?),
                    "complexity" => out.complexity = Some(real()?),
                    _ => {}
                }
                continue;
            }
            let ints = line
                .split_whitespace()
                .map(|x| x.parse::<i64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| bad(e.to_string()))?;
            out.operations.push(decode(&ints).map_err(|e| bad(e.to_string()))?);
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eliminate_layout() {
        let op = OperationVector::Eliminate { component: ComponentType::Node, mask: vec![true, false, true] };
        assert_eq!(encode(&op), vec![2, 0, 3, 1, 0, 1]);
        assert_eq!(decode(&encode(&op)).unwrap(), op);
    }

    #[test]
    fn empty_reschedule() {
        let op = OperationVector::Reschedule(vec![]);
        assert_eq!(encode(&op), vec![3, 1, 0]);
        assert_eq!(decode(&[3, 1, 0]).unwrap(), op);
    }

    #[test]
    fn malformed_sequences() {
        assert!(matches!(decode(&[9, 0, 0]), Err(Error::Decode { offset: 0, .. })));
        assert!(matches!(decode(&[2, 0, 3, 1, 0]), Err(Error::Decode { .. })));
        assert!(matches!(decode(&[2, 0, 1, 5]), Err(Error::Decode { offset: 3, .. })));
        assert!(matches!(decode(&[0, 1]), Err(Error::Decode { offset: 2, .. })));
        assert!(matches!(decode(&[1, 1, 2, 0, 5]), Err(Error::Decode { .. })));
    }

    #[test]
    fn alter_edge_fixture() {
        assert_eq!(decode(&[0, 1, 2, 4, 7]).unwrap(), OperationVector::AlterEdge { mechanism: MechanismId(4), fn_ref: FnId(7) });
    }

    #[test]
    fn solution_text_round_trip() {
        let sol = SolutionFile {
            genome: Some(vec![1, 2, 3]),
            fitness: Some(-0.125),
            complexity: Some(6.0),
            operations: vec![
                OperationVector::AddNode { kind: KindId(1), value_kind: ValueKind::Boolean },
                OperationVector::Reschedule(vec![MechanismId(2), MechanismId(0)]),
            ],
        };
        assert_eq!(SolutionFile::parse(&sol.to_text()).unwrap(), sol);
        assert!(matches!(SolutionFile::parse("1 2\n"), Err(Error::Load { row: 1, .. })));
    }
}
