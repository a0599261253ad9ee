//! Property values and their kinds.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Real,
    Integer,
    Boolean,
    RealSeq,
    Categorical,
}

impl ValueKind {
    pub const ALL: [ValueKind; 5] = [ValueKind::Real, ValueKind::Integer, ValueKind::Boolean, ValueKind::RealSeq, ValueKind::Categorical];

    pub fn code(self) -> i64 {
        match self {
            ValueKind::Real => 0,
            ValueKind::Integer => 1,
            ValueKind::Boolean => 2,
            ValueKind::RealSeq => 3,
            ValueKind::Categorical => 4,
        }
    }

    pub fn from_code(code: i64) -> Option<Self> {
        Self::ALL.get(usize::try_from(code).ok()?).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Value {
    Real(f64),
    Integer(i64),
    Boolean(bool),
    RealSeq(Vec<f64>),
    Categorical(u32),
}

impl Value {
    /// Zero element of a kind; used when a property is created.
    pub fn zero(kind: ValueKind) -> Self {
        match kind {
            ValueKind::Real => Value::Real(0.0),
            ValueKind::Integer => Value::Integer(0),
            ValueKind::Boolean => Value::Boolean(false),
            ValueKind::RealSeq => Value::RealSeq(Vec::new()),
            ValueKind::Categorical => Value::Categorical(0),
        }
    }

    pub fn kind(&self) -> ValueKind {
        match self {
            Value::Real(_) => ValueKind::Real,
            Value::Integer(_) => ValueKind::Integer,
            Value::Boolean(_) => ValueKind::Boolean,
            Value::RealSeq(_) => ValueKind::RealSeq,
            Value::Categorical(_) => ValueKind::Categorical,
        }
    }

    /// Scalar view. Sequences collapse to their sum.
    pub fn as_f64(&self) -> f64 {
        match self {
            Value::Real(x) => *x,
            Value::Integer(i) => *i as f64,
            Value::Boolean(b) => f64::from(u8::from(*b)),
            Value::RealSeq(v) => v.iter().sum(),
            Value::Categorical(c) => f64::from(*c),
        }
    }

    pub fn as_bool(&self) -> bool {
        match self {
            Value::Boolean(b) => *b,
            other => other.as_f64() != 0.0,
        }
    }

    /// Builds a value of `kind` from a scalar produced by a function.
    pub fn from_f64(kind: ValueKind, x: f64) -> Self {
        match kind {
            ValueKind::Real => Value::Real(x),
            ValueKind::Integer => Value::Integer(if x.is_finite() { x.round() as i64 } else { 0 }),
            ValueKind::Boolean => Value::Boolean(x != 0.0 && !x.is_nan()),
            ValueKind::RealSeq => Value::RealSeq(vec![x]),
            ValueKind::Categorical => Value::Categorical(if x.is_finite() && x > 0.0 { x.round().min(u32::MAX as f64) as u32 } else { 0 }),
        }
    }

    /// Lossless conversion to another kind, if one exists for this value.
    pub fn convert(&self, kind: ValueKind) -> Option<Value> {
        if self.kind() == kind {
            return Some(self.clone());
        }
        let exact_int = |x: f64| x.is_finite() && x.fract() == 0.0 && x.abs() < 9.0e15;
        match (self, kind) {
            (Value::RealSeq(_), _) => None,
            (_, ValueKind::RealSeq) => Some(Value::RealSeq(vec![self.as_f64()])),
            (_, ValueKind::Real) => Some(Value::Real(self.as_f64())),
            (_, ValueKind::Integer) => {
                let x = self.as_f64();
                exact_int(x).then(|| Value::Integer(x as i64))
            }
            (_, ValueKind::Boolean) => {
                let x = self.as_f64();
                (x == 0.0 || x == 1.0).then_some(Value::Boolean(x == 1.0))
            }
            (_, ValueKind::Categorical) => {
                let x = self.as_f64();
                (exact_int(x) && x >= 0.0 && x <= u32::MAX as f64).then(|| Value::Categorical(x as u32))
            }
        }
    }

    pub fn key(&self) -> ValueKey {
        ValueKey(self.clone())
    }
}

/// Totally ordered wrapper so values can key a grouping map.
#[derive(Debug, Clone)]
pub struct ValueKey(pub Value);

impl ValueKey {
    fn rank(&self) -> u8 {
        self.0.kind().code() as u8
    }
}

impl PartialEq for ValueKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for ValueKey {}

impl PartialOrd for ValueKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ValueKey {
    fn cmp(&self, other: &Self) -> Ordering {
        match (&self.0, &other.0) {
            (Value::Real(a), Value::Real(b)) => a.total_cmp(b),
            (Value::Integer(a), Value::Integer(b)) => a.cmp(b),
            (Value::Boolean(a), Value::Boolean(b)) => a.cmp(b),
            (Value::Categorical(a), Value::Categorical(b)) => a.cmp(b),
            (Value::RealSeq(a), Value::RealSeq(b)) => {
                for (x, y) in a.iter().zip(b) {
                    match x.total_cmp(y) {
                        Ordering::Equal => continue,
                        o => return o,
                    }
                }
                a.len().cmp(&b.len())
            }
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_matches_kind() {
        for kind in ValueKind::ALL {
            assert_eq!(Value::zero(kind).kind(), kind);
            assert_eq!(ValueKind::from_code(kind.code()), Some(kind));
        }
        assert_eq!(ValueKind::from_code(5), None);
        assert_eq!(ValueKind::from_code(-1), None);
    }

    #[test]
    fn conversions_refuse_lossy_changes() {
        assert_eq!(Value::Real(2.0).convert(ValueKind::Integer), Some(Value::Integer(2)));
        assert_eq!(Value::Real(2.5).convert(ValueKind::Integer), None);
        assert_eq!(Value::Integer(3).convert(ValueKind::Boolean), None);
        assert_eq!(Value::Integer(1).convert(ValueKind::Boolean), Some(Value::Boolean(true)));
        assert_eq!(Value::Integer(-1).convert(ValueKind::Categorical), None);
        assert_eq!(Value::RealSeq(vec![1.0]).convert(ValueKind::Real), None);
        assert_eq!(Value::Boolean(true).convert(ValueKind::Real), Some(Value::Real(1.0)));
    }

    #[test]
    fn keys_order_reals_totally() {
        let mut keys = [Value::Real(1.0), Value::Real(-0.5), Value::Real(1.0)].map(|v| v.key()).to_vec();
        keys.sort();
        assert_eq!(keys[0].0, Value::Real(-0.5));
        assert_eq!(keys[1], keys[2]);
    }
}
