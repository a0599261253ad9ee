//! Function registry backing mechanism `fn_ref`s.
//!
//! A mechanism's function is one of: a native rule evaluated per instance,
//! a decoded CGP program, or a host routine that operates on the whole model
//! (order matching, settlement, data ingestion).

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypergraph::InstanceId;
use crate::symbolic::{OperatorContext, Program, DEFAULT_LOOP_CAP};
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FnId(pub usize);

/// Per-invocation context handed to native rules.
pub struct RuleCtx {
    /// Stream derived from (seed, pass, mechanism, instance): independent of
    /// the order instances are visited in.
    pub rng: ChaCha8Rng,
    pub pass: u64,
    pub instance: InstanceId,
}

pub type RuleFn = Arc<dyn Fn(&[Value], &mut RuleCtx) -> Result<Vec<Value>> + Send + Sync>;

#[derive(Clone)]
pub enum FnBody {
    Rule(RuleFn),
    Program { program: Program, ctx: OperatorContext<f64>, loop_cap: usize },
    Host,
}

impl fmt::Debug for FnBody {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FnBody::Rule(_) => f.write_str("Rule"),
            FnBody::Program { program, .. } => write!(f, "Program({} nodes)", program.nodes.len()),
            FnBody::Host => f.write_str("Host"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FnEntry {
    pub name: String,
    pub inputs: usize,
    pub outputs: usize,
    pub body: FnBody,
    /// Names of other registered functions this one invokes internally.
    pub calls: Vec<String>,
    /// True when the output depends only on the inputs (no RNG draws).
    pub deterministic: bool,
}

impl FnEntry {
    pub fn rule<F>(name: &str, inputs: usize, outputs: usize, f: F) -> Self
    where
        F: Fn(&[Value], &mut RuleCtx) -> Result<Vec<Value>> + Send + Sync + 'static,
    {
        FnEntry { name: name.to_string(), inputs, outputs, body: FnBody::Rule(Arc::new(f)), calls: Vec::new(), deterministic: false }
    }

    pub fn host(name: &str, inputs: usize, outputs: usize) -> Self {
        FnEntry { name: name.to_string(), inputs, outputs, body: FnBody::Host, calls: Vec::new(), deterministic: false }
    }

    pub fn program(name: &str, program: Program, ctx: OperatorContext<f64>) -> Self {
        FnEntry {
            name: name.to_string(),
            inputs: program.n_inputs,
            outputs: program.outputs.len(),
            body: FnBody::Program { program, ctx, loop_cap: DEFAULT_LOOP_CAP },
            calls: Vec::new(),
            deterministic: true,
        }
    }

    pub fn deterministic(mut self) -> Self {
        self.deterministic = true;
        self
    }

    pub fn calling(mut self, names: &[&str]) -> Self {
        self.calls = names.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn is_host(&self) -> bool {
        matches!(self.body, FnBody::Host)
    }
}

#[derive(Debug, Clone, Default)]
pub struct FunctionRegistry {
    entries: Vec<FnEntry>,
    by_name: BTreeMap<String, FnId>,
}

impl FunctionRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a function; names are unique.
    pub fn register(&mut self, entry: FnEntry) -> Result<FnId> {
        if self.by_name.contains_key(&entry.name) {
            return Err(Error::Contract(format!("function `{}` already registered", entry.name)));
        }
        let id = FnId(self.entries.len());
        self.by_name.insert(entry.name.clone(), id);
        self.entries.push(entry);
        Ok(id)
    }

    pub fn get(&self, id: FnId) -> Result<&FnEntry> {
        self.entries.get(id.0).ok_or_else(|| Error::Reference(format!("function {}", id.0)))
    }

    pub fn lookup(&self, name: &str) -> Result<FnId> {
        self.by_name.get(name).copied().ok_or_else(|| Error::Reference(format!("function `{name}`")))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (FnId, &FnEntry)> {
        self.entries.iter().enumerate().map(|(i, e)| (FnId(i), e))
    }
}
