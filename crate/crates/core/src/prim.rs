//! The fixed primitive set and its concrete transfer functions.

use std::fmt;

use crate::datum::Datum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Prim {
    Add,
    Sub,
    Mul,
    NumEq,
    Lt,
    IsPair,
    IsNull,
    IsNumber,
    Cons,
    Car,
    Cdr,
    Not,
}

pub const ALL_PRIMS: [Prim; 12] = [
    Prim::Add,
    Prim::Sub,
    Prim::Mul,
    Prim::NumEq,
    Prim::Lt,
    Prim::IsPair,
    Prim::IsNull,
    Prim::IsNumber,
    Prim::Cons,
    Prim::Car,
    Prim::Cdr,
    Prim::Not,
];

impl Prim {
    pub fn from_name(name: &str) -> Option<Prim> {
        ALL_PRIMS.iter().copied().find(|p| p.name() == name)
    }

    pub fn name(self) -> &'static str {
        match self {
            Prim::Add => "+",
            Prim::Sub => "-",
            Prim::Mul => "*",
            Prim::NumEq => "=",
            Prim::Lt => "<",
            Prim::IsPair => "pair?",
            Prim::IsNull => "null?",
            Prim::IsNumber => "number?",
            Prim::Cons => "cons",
            Prim::Car => "car",
            Prim::Cdr => "cdr",
            Prim::Not => "not",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Prim::Add | Prim::Sub | Prim::Mul | Prim::NumEq | Prim::Lt | Prim::Cons => 2,
            _ => 1,
        }
    }

    /// Applies the primitive to first-order arguments. `None` means the
    /// primitive is stuck (type error or arithmetic overflow).
    pub fn apply(self, args: &[Datum]) -> Option<Datum> {
        if args.len() != self.arity() {
            return None;
        }
        let int = |d: &Datum| match d {
            Datum::Int(n) => Some(*n),
            _ => None,
        };
        Some(match self {
            Prim::Add => Datum::Int(int(&args[0])?.checked_add(int(&args[1])?)?),
            Prim::Sub => Datum::Int(int(&args[0])?.checked_sub(int(&args[1])?)?),
            Prim::Mul => Datum::Int(int(&args[0])?.checked_mul(int(&args[1])?)?),
            Prim::NumEq => Datum::Bool(int(&args[0])? == int(&args[1])?),
            Prim::Lt => Datum::Bool(int(&args[0])? < int(&args[1])?),
            Prim::IsPair => Datum::Bool(args[0].is_pair()),
            Prim::IsNull => Datum::Bool(args[0] == Datum::Nil),
            Prim::IsNumber => Datum::Bool(matches!(args[0], Datum::Int(_))),
            Prim::Cons => Datum::pair(args[0].clone(), args[1].clone()),
            Prim::Car => match &args[0] {
                Datum::Pair(a, _) => (**a).clone(),
                _ => return None,
            },
            Prim::Cdr => match &args[0] {
                Datum::Pair(_, d) => (**d).clone(),
                _ => return None,
            },
            Prim::Not => Datum::Bool(!args[0].is_truthy()),
        })
    }
}

impl fmt::Display for Prim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for p in ALL_PRIMS {
            assert_eq!(Prim::from_name(p.name()), Some(p));
        }
        assert_eq!(Prim::from_name("set!"), None);
    }

    #[test]
    fn type_errors_are_stuck() {
        assert_eq!(Prim::Cdr.apply(&[Datum::Nil]), None);
        assert_eq!(Prim::Add.apply(&[Datum::Int(1), Datum::Bool(true)]), None);
        assert_eq!(Prim::Add.apply(&[Datum::Int(i64::MAX), Datum::Int(1)]), None);
        assert_eq!(Prim::IsPair.apply(&[Datum::Nil]), Some(Datum::Bool(false)));
        assert_eq!(Prim::Not.apply(&[Datum::Int(0)]), Some(Datum::Bool(false)));
    }
}
