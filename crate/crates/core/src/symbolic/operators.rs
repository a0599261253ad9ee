//! The symbol operator library: arithmetic, logical and conditional operators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{at_or_above, at_or_below, Scalar};

/// Magnitude written in place of a division-by-zero result.
pub const FAULT_SENTINEL: f64 = 1.0e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Operator {
    Add,
    Sub,
    Mul,
    Div,
    Max,
    Min,
    Max1,
    Min1,
    Sign,
    X01,
    Inv,
    Neg,
    Abs,
    Sum,
    Sum3,
    LimUp,
    LimDown,
    Const0,
    Const01,
    Const1,
    Comb,
    And,
    Or,
    Eq,
    Gt,
    Lt,
    Not,
    IfElse,
    WhileStart,
    WhileEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Arithmetic,
    Logical,
    Conditional,
}

/// Declared input count of an operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arity {
    Fixed(usize),
    /// `Comb`: takes however many inputs the genome gives a node.
    Variadic,
}

/// Static description of one library entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OperatorDef {
    pub op: Operator,
    pub name: &'static str,
    pub arity: Arity,
    pub vector_input: bool,
    pub category: Category,
}

impl Operator {
    pub const ALL: [Operator; 30] = [
        Operator::Add,
        Operator::Sub,
        Operator::Mul,
        Operator::Div,
        Operator::Max,
        Operator::Min,
        Operator::Max1,
        Operator::Min1,
        Operator::Sign,
        Operator::X01,
        Operator::Inv,
        Operator::Neg,
        Operator::Abs,
        Operator::Sum,
        Operator::Sum3,
        Operator::LimUp,
        Operator::LimDown,
        Operator::Const0,
        Operator::Const01,
        Operator::Const1,
        Operator::Comb,
        Operator::And,
        Operator::Or,
        Operator::Eq,
        Operator::Gt,
        Operator::Lt,
        Operator::Not,
        Operator::IfElse,
        Operator::WhileStart,
        Operator::WhileEnd,
    ];

    pub fn code(self) -> usize {
        Self::ALL.iter().position(|o| *o == self).expect("listed")
    }

    pub fn from_code(code: usize) -> Option<Self> {
        Self::ALL.get(code).copied()
    }

    pub fn def(self) -> OperatorDef {
        use Category::*;
        use Operator::*;
        let (name, arity, vector_input, category) = match self {
            Add => ("Add", Arity::Fixed(2), false, Arithmetic),
            Sub => ("Sub", Arity::Fixed(2), false, Arithmetic),
            Mul => ("Mul", Arity::Fixed(2), false, Arithmetic),
            Div => ("Div", Arity::Fixed(2), false, Arithmetic),
            Max => ("MAX", Arity::Fixed(1), true, Arithmetic),
            Min => ("MIN", Arity::Fixed(1), true, Arithmetic),
            Max1 => ("Max1", Arity::Fixed(1), true, Arithmetic),
            Min1 => ("Min1", Arity::Fixed(1), true, Arithmetic),
            Sign => ("Sign", Arity::Fixed(1), false, Arithmetic),
            X01 => ("x01", Arity::Fixed(1), false, Arithmetic),
            Inv => ("Inv", Arity::Fixed(1), false, Arithmetic),
            Neg => ("Neg", Arity::Fixed(1), false, Arithmetic),
            Abs => ("Abs", Arity::Fixed(1), false, Arithmetic),
            Sum => ("Sum", Arity::Fixed(1), true, Arithmetic),
            Sum3 => ("Sum3", Arity::Fixed(3), true, Arithmetic),
            LimUp => ("LimUp", Arity::Fixed(2), false, Arithmetic),
            LimDown => ("LimDown", Arity::Fixed(2), false, Arithmetic),
            Const0 => ("Const0", Arity::Fixed(0), false, Arithmetic),
            Const01 => ("Const01", Arity::Fixed(0), false, Arithmetic),
            Const1 => ("Const1", Arity::Fixed(0), false, Arithmetic),
            Comb => ("Comb", Arity::Variadic, false, Arithmetic),
            And => ("And", Arity::Fixed(2), false, Logical),
            Or => ("Or", Arity::Fixed(2), false, Logical),
            Eq => ("Eq", Arity::Fixed(2), false, Logical),
            Gt => ("Gt", Arity::Fixed(2), false, Logical),
            Lt => ("Lt", Arity::Fixed(2), false, Logical),
            Not => ("Not", Arity::Fixed(1), false, Logical),
            IfElse => ("If-else", Arity::Fixed(1), false, Conditional),
            WhileStart => ("While_start", Arity::Fixed(1), false, Conditional),
            WhileEnd => ("While_end", Arity::Fixed(1), false, Conditional),
        };
        OperatorDef { op: self, name, arity, vector_input, category }
    }

    pub fn name(self) -> &'static str {
        self.def().name
    }

    /// Number of connection genes this operator reads when a node offers `max_arity`.
    pub fn used_inputs(self, max_arity: usize) -> usize {
        match self.def().arity {
            Arity::Fixed(n) => n,
            Arity::Variadic => max_arity,
        }
    }

    pub fn is_control(self) -> bool {
        self.def().category == Category::Conditional
    }
}

/// Ratios consulted by `LimUp` / `LimDown`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorContext<T> {
    pub upper_limit_ratio: T,
    pub lower_limit_ratio: T,
}

impl<T: Scalar> Default for OperatorContext<T> {
    fn default() -> Self {
        OperatorContext { upper_limit_ratio: T::lit(0.1), lower_limit_ratio: T::lit(0.1) }
    }
}

impl<T: Scalar> OperatorContext<T> {
    pub fn new(upper_limit_ratio: T, lower_limit_ratio: T) -> Result<Self> {
        if !(upper_limit_ratio >= T::zero()) || !(lower_limit_ratio >= T::zero()) {
            return Err(Error::Contract("limit ratios must be non-negative".into()));
        }
        Ok(OperatorContext { upper_limit_ratio, lower_limit_ratio })
    }
}

/// Operand: scalar or vector.
#[derive(Debug, Clone, PartialEq)]
pub enum Datum<T> {
    Scalar(T),
    Vector(Vec<T>),
}

impl<T: Scalar> Datum<T> {
    pub fn scalar(x: T) -> Self {
        Datum::Scalar(x)
    }

    pub fn as_slice(&self) -> &[T] {
        match self {
            Datum::Scalar(x) => std::slice::from_ref(x),
            Datum::Vector(v) => v,
        }
    }

    /// Scalars are themselves; vectors collapse to their sum.
    pub fn to_scalar(&self) -> T {
        match self {
            Datum::Scalar(x) => *x,
            Datum::Vector(v) => v.iter().copied().sum(),
        }
    }

    pub fn truthy(&self) -> bool {
        self.as_slice().iter().any(|x| *x != T::zero())
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|x| x.is_finite())
    }

    fn map(&self, f: impl Fn(T) -> T) -> Self {
        match self {
            Datum::Scalar(x) => Datum::Scalar(f(*x)),
            Datum::Vector(v) => Datum::Vector(v.iter().map(|x| f(*x)).collect()),
        }
    }
}

/// Result of one operator application.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluated<T> {
    pub value: Datum<T>,
    /// Set when a sentinel replaced an undefined result.
    pub fault: bool,
}

fn bool_val<T: Scalar>(b: bool) -> T {
    if b {
        T::one()
    } else {
        T::zero()
    }
}

fn sentinel<T: Scalar>(sign_of: T) -> T {
    let s = T::lit(FAULT_SENTINEL);
    if sign_of < T::zero() {
        -s
    } else {
        s
    }
}

/// Element-wise binary application with scalar broadcasting. Vectors of
/// different lengths fault.
fn zip<T: Scalar>(a: &Datum<T>, b: &Datum<T>, f: impl Fn(T, T) -> (T, bool)) -> Evaluated<T> {
    let mut fault = false;
    let mut g = |x, y| {
        let (v, bad) = f(x, y);
        fault |= bad;
        v
    };
    let value = match (a, b) {
        (Datum::Scalar(x), Datum::Scalar(y)) => Datum::Scalar(g(*x, *y)),
        (Datum::Scalar(x), Datum::Vector(v)) => Datum::Vector(v.iter().map(|y| g(*x, *y)).collect()),
        (Datum::Vector(v), Datum::Scalar(y)) => Datum::Vector(v.iter().map(|x| g(*x, *y)).collect()),
        (Datum::Vector(u), Datum::Vector(v)) => {
            if u.len() != v.len() {
                return Evaluated { value: Datum::Scalar(T::zero()), fault: true };
            }
            Datum::Vector(u.iter().zip(v).map(|(x, y)| g(*x, *y)).collect())
        }
    };
    Evaluated { value, fault }
}

fn ok<T>(value: Datum<T>) -> Result<Evaluated<T>> {
    Ok(Evaluated { value, fault: false })
}

/// Applies one library operator.
pub fn eval_operator<T: Scalar>(op: Operator, args: &[Datum<T>], ctx: &OperatorContext<T>) -> Result<Evaluated<T>> {
    if let Arity::Fixed(n) = op.def().arity {
        if args.len() != n {
            return Err(Error::Contract(format!("{} takes {n} argument(s), got {}", op.name(), args.len())));
        }
    }
    use Operator::*;
    let plain = |f: fn(T, T) -> T| move |x, y| (f(x, y), false);
    match op {
        Add => Ok(zip(&args[0], &args[1], plain(|x, y| x + y))),
        Sub => Ok(zip(&args[0], &args[1], plain(|x, y| x - y))),
        Mul => Ok(zip(&args[0], &args[1], plain(|x, y| x * y))),
        Div => Ok(zip(&args[0], &args[1], |x, y| if y == T::zero() { (sentinel(x), true) } else { (x / y, false) })),
        Max | Min => {
            let v = args[0].as_slice();
            if v.is_empty() {
                return Ok(Evaluated { value: Datum::Scalar(T::zero()), fault: true });
            }
            let pick = if op == Max { T::max } else { T::min };
            ok(Datum::Scalar(v[1..].iter().fold(v[0], |acc, x| pick(acc, *x))))
        }
        Max1 => ok(args[0].map(|x| x.max(T::zero()))),
        Min1 => ok(args[0].map(|x| x.min(T::zero()))),
        Sign => ok(args[0].map(|x| {
            if x > T::zero() {
                T::one()
            } else if x < T::zero() {
                -T::one()
            } else {
                T::zero()
            }
        })),
        X01 => ok(args[0].map(|x| x * T::lit(0.1))),
        Inv => {
            let e = zip(&Datum::Scalar(T::one()), &args[0], |x, y| if y == T::zero() { (sentinel(x), true) } else { (x / y, false) });
            Ok(e)
        }
        Neg => ok(args[0].map(|x| -x)),
        Abs => ok(args[0].map(|x| x.abs())),
        Sum => ok(Datum::Scalar(args[0].as_slice().iter().copied().sum())),
        Sum3 => {
            let (x, y, z) = (args[0].as_slice(), args[1].as_slice(), args[2].to_scalar());
            if x.len() != y.len() {
                return Ok(Evaluated { value: Datum::Scalar(T::zero()), fault: true });
            }
            ok(Datum::Scalar(x.iter().zip(y).filter(|(xi, _)| **xi >= z).map(|(_, yi)| *yi).sum()))
        }
        LimUp => {
            let r = ctx.upper_limit_ratio;
            Ok(zip(&args[0], &args[1], move |x, y| (bool_val(at_or_above(x, y + y * r)), false)))
        }
        LimDown => {
            let r = ctx.lower_limit_ratio;
            Ok(zip(&args[0], &args[1], move |x, y| (bool_val(at_or_below(x, y - y * r)), false)))
        }
        Const0 => ok(Datum::Scalar(T::zero())),
        Const01 => ok(Datum::Scalar(T::lit(0.1))),
        Const1 => ok(Datum::Scalar(T::one())),
        Comb => ok(Datum::Vector(args.iter().flat_map(|a| a.as_slice().iter().copied()).collect())),
        And => Ok(zip(&args[0], &args[1], |x, y| (bool_val(x != T::zero() && y != T::zero()), false))),
        Or => Ok(zip(&args[0], &args[1], |x, y| (bool_val(x != T::zero() || y != T::zero()), false))),
        Eq => Ok(zip(&args[0], &args[1], |x, y| (bool_val(x == y), false))),
        Gt => Ok(zip(&args[0], &args[1], |x, y| (bool_val(x > y), false))),
        Lt => Ok(zip(&args[0], &args[1], |x, y| (bool_val(x < y), false))),
        Not => ok(args[0].map(|x| bool_val(x == T::zero()))),
        IfElse | WhileStart | WhileEnd => ok(Datum::Scalar(bool_val(args[0].truthy()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(x: f64) -> Datum<f64> {
        Datum::Scalar(x)
    }

    fn v(x: &[f64]) -> Datum<f64> {
        Datum::Vector(x.to_vec())
    }

    fn ev(op: Operator, args: &[Datum<f64>]) -> Datum<f64> {
        eval_operator(op, args, &OperatorContext::default()).unwrap().value
    }

    #[test]
    fn library_has_thirty_entries_with_unique_codes() {
        assert_eq!(Operator::ALL.len(), 30);
        for (i, op) in Operator::ALL.iter().enumerate() {
            assert_eq!(op.code(), i);
            assert_eq!(Operator::from_code(i), Some(*op));
        }
        assert_eq!(Operator::from_code(30), None);
    }

    #[test]
    fn arithmetic_rows() {
        assert_eq!(ev(Operator::Add, &[s(2.0), s(3.0)]), s(5.0));
        assert_eq!(ev(Operator::Add, &[v(&[1.0, 2.0]), v(&[3.0, 4.0])]), v(&[4.0, 6.0]));
        assert_eq!(ev(Operator::Sub, &[s(2.0), s(3.0)]), s(-1.0));
        assert_eq!(ev(Operator::Sub, &[v(&[1.0, 2.0]), s(1.0)]), v(&[0.0, 1.0]));
        assert_eq!(ev(Operator::Mul, &[s(2.0), s(3.0)]), s(6.0));
        assert_eq!(ev(Operator::Mul, &[v(&[1.0, 2.0]), v(&[3.0, 4.0])]), v(&[3.0, 8.0]));
        assert_eq!(ev(Operator::Div, &[s(3.0), s(2.0)]), s(1.5));
        assert_eq!(ev(Operator::Div, &[v(&[3.0, 8.0]), v(&[3.0, 4.0])]), v(&[1.0, 2.0]));
        assert_eq!(ev(Operator::Max, &[v(&[1.0, 7.0, -2.0])]), s(7.0));
        assert_eq!(ev(Operator::Min, &[v(&[1.0, 7.0, -2.0])]), s(-2.0));
        assert_eq!(ev(Operator::Max1, &[v(&[-1.0, 2.0])]), v(&[0.0, 2.0]));
        assert_eq!(ev(Operator::Min1, &[v(&[-1.0, 2.0])]), v(&[-1.0, 0.0]));
        assert_eq!(ev(Operator::Sign, &[s(4.0)]), s(1.0));
        assert_eq!(ev(Operator::Sign, &[s(0.0)]), s(0.0));
        assert_eq!(ev(Operator::Sign, &[s(-0.3)]), s(-1.0));
        assert_eq!(ev(Operator::X01, &[s(5.0)]), s(0.5));
        assert_eq!(ev(Operator::Inv, &[s(4.0)]), s(0.25));
        assert_eq!(ev(Operator::Neg, &[s(4.0)]), s(-4.0));
        assert_eq!(ev(Operator::Abs, &[s(-4.0)]), s(4.0));
        assert_eq!(ev(Operator::Sum, &[v(&[1.0, 2.0, 3.5])]), s(6.5));
        assert_eq!(ev(Operator::Const0, &[]), s(0.0));
        assert_eq!(ev(Operator::Const01, &[]), s(0.1));
        assert_eq!(ev(Operator::Const1, &[]), s(1.0));
        assert_eq!(ev(Operator::Comb, &[s(1.0), v(&[2.0, 3.0]), s(4.0)]), v(&[1.0, 2.0, 3.0, 4.0]));
    }

    #[test]
    fn sum3_selects_by_threshold() {
        assert_eq!(ev(Operator::Sum3, &[v(&[1.0, 5.0, 2.0]), v(&[10.0, 20.0, 30.0]), s(2.0)]), s(50.0));
        let e = eval_operator(Operator::Sum3, &[v(&[1.0]), v(&[1.0, 2.0]), s(0.0)], &OperatorContext::default()).unwrap();
        assert!(e.fault);
    }

    #[test]
    fn limit_operators_are_boundary_inclusive() {
        assert_eq!(ev(Operator::LimUp, &[s(110.0), s(100.0)]), s(1.0));
        assert_eq!(ev(Operator::LimUp, &[s(109.9), s(100.0)]), s(0.0));
        assert_eq!(ev(Operator::LimDown, &[s(90.0), s(100.0)]), s(1.0));
        assert_eq!(ev(Operator::LimDown, &[s(90.1), s(100.0)]), s(0.0));
        let wide = OperatorContext::new(0.5, 0.5).unwrap();
        let e = eval_operator(Operator::LimUp, &[s(149.0), s(100.0)], &wide).unwrap();
        assert_eq!(e.value, s(0.0));
        assert!(OperatorContext::new(-0.1, 0.1).is_err());
    }

    #[test]
    fn logical_rows() {
        assert_eq!(ev(Operator::And, &[s(1.0), s(0.0)]), s(0.0));
        assert_eq!(ev(Operator::And, &[s(2.0), s(-1.0)]), s(1.0));
        assert_eq!(ev(Operator::Or, &[s(0.0), s(0.0)]), s(0.0));
        assert_eq!(ev(Operator::Or, &[s(0.0), s(3.0)]), s(1.0));
        assert_eq!(ev(Operator::Eq, &[s(3.0), s(3.0)]), s(1.0));
        assert_eq!(ev(Operator::Gt, &[s(3.0), s(2.0)]), s(1.0));
        assert_eq!(ev(Operator::Gt, &[s(2.0), s(2.0)]), s(0.0));
        assert_eq!(ev(Operator::Lt, &[s(1.0), s(2.0)]), s(1.0));
        assert_eq!(ev(Operator::Not, &[s(0.0)]), s(1.0));
        assert_eq!(ev(Operator::Not, &[s(5.0)]), s(0.0));
    }

    #[test]
    fn conditional_rows_report_truthiness() {
        for op in [Operator::IfElse, Operator::WhileStart, Operator::WhileEnd] {
            assert_eq!(ev(op, &[s(0.0)]), s(0.0));
            assert_eq!(ev(op, &[s(-2.0)]), s(1.0));
            assert_eq!(op.def().category, Category::Conditional);
        }
    }

    #[test]
    fn division_by_zero_yields_flagged_sentinel() {
        let ctx = OperatorContext::default();
        let e = eval_operator(Operator::Div, &[s(-3.0), s(0.0)], &ctx).unwrap();
        assert!(e.fault);
        assert_eq!(e.value, s(-FAULT_SENTINEL));
        let e = eval_operator(Operator::Inv, &[s(0.0)], &ctx).unwrap();
        assert!(e.fault);
        assert_eq!(e.value, s(FAULT_SENTINEL));
    }

    #[test]
    fn arity_mismatch_is_contract_error() {
        let r = eval_operator(Operator::Add, &[s(1.0)], &OperatorContext::default());
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn works_in_single_precision() {
        let e = eval_operator(Operator::X01, &[Datum::Scalar(5.0_f32)], &OperatorContext::default()).unwrap();
        assert_eq!(e.value, Datum::Scalar(0.5_f32));
    }
}
