use std::fmt;

use serde::{Deserialize, Serialize};

use super::value::Value;

/// Names a built-in semiring, or marks a user-supplied one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemiringKind {
    /// (ℝ, +, ·)
    SumProduct,
    /// (ℕ, +, ·), exact counting.
    Counting,
    /// (ℝ ∪ {-∞}, max, +)
    MaxPlus,
    /// ({false, true}, ∨, ∧)
    BoolOrAnd,
    Custom,
}

impl SemiringKind {
    pub fn name(self) -> &'static str {
        match self {
            SemiringKind::SumProduct => "sum_product",
            SemiringKind::Counting => "count",
            SemiringKind::MaxPlus => "max_plus",
            SemiringKind::BoolOrAnd => "bool",
            SemiringKind::Custom => "custom",
        }
    }

    pub fn parse_name(s: &str) -> Option<SemiringKind> {
        match s {
            "sum_product" | "sum" => Some(SemiringKind::SumProduct),
            "count" | "counting" => Some(SemiringKind::Counting),
            "max_plus" => Some(SemiringKind::MaxPlus),
            "bool" | "boolean" | "bool_or_and" => Some(SemiringKind::BoolOrAnd),
            _ => None,
        }
    }

    /// True when ⊕ is idempotent, so duplicate tuples collapse freely.
    pub fn plus_idempotent(self) -> bool {
        matches!(self, SemiringKind::MaxPlus | SemiringKind::BoolOrAnd)
    }
}

impl fmt::Display for SemiringKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Ground set of a semiring's elements.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroundKind {
    Integer,
    Float,
    Boolean,
}

/// A commutative semiring over `Elem`.
///
/// Implementations must keep both operations commutative and associative,
/// with ⊗ distributing over ⊕ and `zero` annihilating under ⊗.
pub trait Semiring: Send + Sync + 'static {
    type Elem: Clone + PartialEq + fmt::Debug + fmt::Display + Send + Sync;

    const KIND: SemiringKind;
    const GROUND: GroundKind;

    fn zero() -> Self::Elem;
    fn one() -> Self::Elem;
    fn plus(a: &Self::Elem, b: &Self::Elem) -> Self::Elem;
    fn times(a: &Self::Elem, b: &Self::Elem) -> Self::Elem;

    fn plus_idempotent() -> bool {
        Self::KIND.plus_idempotent()
    }

    /// Equality used when comparing results.
    fn approx_eq(a: &Self::Elem, b: &Self::Elem) -> bool {
        a == b
    }

    /// Reads an annotation from a data column.
    fn from_value(v: &Value) -> Option<Self::Elem>;
}

/// Relative tolerance for float-valued semirings.
pub const FLOAT_RTOL: f64 = 1e-9;

fn float_close(a: f64, b: f64) -> bool {
    if a == b {
        return true;
    }
    if !a.is_finite() || !b.is_finite() {
        return false;
    }
    (a - b).abs() <= FLOAT_RTOL * a.abs().max(b.abs())
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SumProduct;

impl Semiring for SumProduct {
    type Elem = f64;
    const KIND: SemiringKind = SemiringKind::SumProduct;
    const GROUND: GroundKind = GroundKind::Float;

    fn zero() -> f64 {
        0.0
    }
    fn one() -> f64 {
        1.0
    }
    fn plus(a: &f64, b: &f64) -> f64 {
        a + b
    }
    fn times(a: &f64, b: &f64) -> f64 {
        a * b
    }
    fn approx_eq(a: &f64, b: &f64) -> bool {
        float_close(*a, *b)
    }
    fn from_value(v: &Value) -> Option<f64> {
        v.as_f64()
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Counting;

impl Semiring for Counting {
    type Elem = u64;
    const KIND: SemiringKind = SemiringKind::Counting;
    const GROUND: GroundKind = GroundKind::Integer;

    fn zero() -> u64 {
        0
    }
    fn one() -> u64 {
        1
    }
    fn plus(a: &u64, b: &u64) -> u64 {
        a.wrapping_add(*b)
    }
    fn times(a: &u64, b: &u64) -> u64 {
        a.wrapping_mul(*b)
    }
    fn from_value(v: &Value) -> Option<u64> {
        match v {
            Value::Int(i) => u64::try_from(*i).ok(),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct MaxPlus;

impl Semiring for MaxPlus {
    type Elem = f64;
    const KIND: SemiringKind = SemiringKind::MaxPlus;
    const GROUND: GroundKind = GroundKind::Float;

    fn zero() -> f64 {
        f64::NEG_INFINITY
    }
    fn one() -> f64 {
        0.0
    }
    fn plus(a: &f64, b: &f64) -> f64 {
        a.max(*b)
    }
    fn times(a: &f64, b: &f64) -> f64 {
        a + b
    }
    fn approx_eq(a: &f64, b: &f64) -> bool {
        float_close(*a, *b)
    }
    fn from_value(v: &Value) -> Option<f64> {
        v.as_f64()
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct BoolOrAnd;

impl Semiring for BoolOrAnd {
    type Elem = bool;
    const KIND: SemiringKind = SemiringKind::BoolOrAnd;
    const GROUND: GroundKind = GroundKind::Boolean;

    fn zero() -> bool {
        false
    }
    fn one() -> bool {
        true
    }
    fn plus(a: &bool, b: &bool) -> bool {
        *a || *b
    }
    fn times(a: &bool, b: &bool) -> bool {
        *a && *b
    }
    fn from_value(v: &Value) -> Option<bool> {
        match v {
            Value::Int(i) => Some(*i != 0),
            Value::Str(s) => match s.to_ascii_lowercase().as_str() {
                "true" | "t" => Some(true),
                "false" | "f" => Some(false),
                _ => None,
            },
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn laws<S: Semiring>(a: S::Elem, b: S::Elem, c: S::Elem) {
        let eq = S::approx_eq;
        assert!(eq(&S::plus(&a, &b), &S::plus(&b, &a)));
        assert!(eq(&S::times(&a, &b), &S::times(&b, &a)));
        assert!(eq(&S::plus(&S::plus(&a, &b), &c), &S::plus(&a, &S::plus(&b, &c))));
        assert!(eq(&S::times(&S::times(&a, &b), &c), &S::times(&a, &S::times(&b, &c))));
        assert!(eq(
            &S::times(&a, &S::plus(&b, &c)),
            &S::plus(&S::times(&a, &b), &S::times(&a, &c))
        ));
        assert!(eq(&S::plus(&S::zero(), &a), &a));
        assert!(eq(&S::times(&S::one(), &a), &a));
        assert!(eq(&S::times(&S::zero(), &a), &S::zero()));
    }

    proptest! {
        // Small integers keep float arithmetic exact enough for the tolerance.
        #[test]
        fn sum_product_laws(a in -1000i32..1000, b in -1000i32..1000, c in -1000i32..1000) {
            laws::<SumProduct>(a as f64 / 8.0, b as f64 / 8.0, c as f64 / 8.0);
        }

        #[test]
        fn max_plus_laws(a in -1000i32..1000, b in -1000i32..1000, c in -1000i32..1000) {
            laws::<MaxPlus>(a as f64, b as f64, c as f64);
        }

        #[test]
        fn counting_laws(a in 0u64..1 << 20, b in 0u64..1 << 20, c in 0u64..1 << 20) {
            laws::<Counting>(a, b, c);
        }

        #[test]
        fn bool_laws(a: bool, b: bool, c: bool) {
            laws::<BoolOrAnd>(a, b, c);
        }
    }

    #[test]
    fn max_plus_zero_is_neg_infinity() {
        assert!(MaxPlus::approx_eq(&MaxPlus::plus(&MaxPlus::zero(), &-3.0), &-3.0));
        assert_eq!(MaxPlus::times(&MaxPlus::zero(), &5.0), f64::NEG_INFINITY);
    }

    #[test]
    fn float_tolerance_is_relative() {
        assert!(SumProduct::approx_eq(&1e12, &(1e12 + 1e2)));
        assert!(!SumProduct::approx_eq(&1.0, &1.001));
    }
}
