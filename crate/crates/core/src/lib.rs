//! Hypergraph agent-based modelling engine with a standard graph-operation
//! protocol, CGP mechanism search, gated hybrid policies and a futures market
//! scenario.

pub mod error;
pub mod hybrid;
pub mod hypergraph;
pub mod icofm;
pub mod metrics;
pub mod protocol;
pub mod registry;
pub mod scalar;
pub mod scenario;
pub mod scheduler;
pub mod symbolic;
pub mod value;

pub use error::{Error, Result};
pub use hypergraph::{ComponentRef, Hypergraph, InstanceId, KindId, MechanismDef, MechanismId, PropertyId};
pub use scalar::Scalar;
pub use value::{Value, ValueKind};

pub type Datum64 = symbolic::Datum<f64>;
pub type Bollinger64 = metrics::Bollinger<f64>;
