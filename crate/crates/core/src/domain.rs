//! Abstract values shared by every analysis: finite sets of user lambdas,
//! exact literals and per-type tops.

use std::collections::BTreeSet;
use std::fmt;

use crate::cps::{CpsProgram, Label};
use crate::datum::Datum;
use crate::prim::Prim;

/// Exact literals of one type kept in a set before collapsing to the top.
pub const TYPE_CAP: usize = 4;

/// Integers up to this magnitude stay exact even if the program never
/// mentions them.
pub const SMALL_INT: i64 = 8;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Atom {
    Lam(Label),
    Lit(Datum),
    NumTop,
    BoolTop,
    StrTop,
    PairTop,
    NilTop,
    /// A pair that may hold procedures somewhere inside it.
    ProcPair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ty {
    Num,
    Bool,
    Str,
    Pair,
    Nil,
}

fn ty(d: &Datum) -> Ty {
    match d {
        Datum::Int(_) => Ty::Num,
        Datum::Str(_) => Ty::Str,
        Datum::Bool(_) => Ty::Bool,
        Datum::Nil => Ty::Nil,
        Datum::Pair(..) => Ty::Pair,
    }
}

fn top(t: Ty) -> Atom {
    match t {
        Ty::Num => Atom::NumTop,
        Ty::Bool => Atom::BoolTop,
        Ty::Str => Atom::StrTop,
        Ty::Pair => Atom::PairTop,
        Ty::Nil => Atom::NilTop,
    }
}

impl Atom {
    fn covers(&self, other: &Atom) -> bool {
        match other {
            Atom::Lit(d) if d.is_pair() => matches!(self, Atom::PairTop | Atom::ProcPair),
            Atom::Lit(d) => *self == top(ty(d)),
            Atom::PairTop => *self == Atom::ProcPair,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ValueSet(BTreeSet<Atom>);

impl ValueSet {
    pub fn empty() -> Self {
        ValueSet(BTreeSet::new())
    }

    pub fn singleton(a: Atom) -> Self {
        ValueSet([a].into_iter().collect())
    }

    pub fn lam(l: Label) -> Self {
        Self::singleton(Atom::Lam(l))
    }

    pub fn from_atoms(atoms: impl IntoIterator<Item = Atom>) -> Self {
        let mut v = ValueSet(atoms.into_iter().collect());
        v.normalize();
        v
    }

    /// Every non-closure value.
    pub fn any_datum() -> Self {
        Self::from_atoms([Atom::NumTop, Atom::BoolTop, Atom::StrTop, Atom::PairTop, Atom::NilTop])
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Atom> {
        self.0.iter()
    }

    pub fn contains(&self, a: &Atom) -> bool {
        self.0.contains(a)
    }

    pub fn lams(&self) -> impl Iterator<Item = Label> + '_ {
        self.0.iter().filter_map(|a| match a {
            Atom::Lam(l) => Some(*l),
            _ => None,
        })
    }

    /// Joins `other` into `self`; returns whether `self` grew.
    pub fn join(&mut self, other: &ValueSet) -> bool {
        if other.le(self) {
            return false;
        }
        self.0.extend(other.0.iter().cloned());
        self.normalize();
        true
    }

    pub fn joined(&self, other: &ValueSet) -> ValueSet {
        let mut out = self.clone();
        out.join(other);
        out
    }

    fn normalize(&mut self) {
        for t in [Ty::Num, Ty::Str, Ty::Pair] {
            let n = self
                .0
                .iter()
                .filter(|a| matches!(a, Atom::Lit(d) if ty(d) == t))
                .count();
            if n > TYPE_CAP {
                self.0.retain(|a| !matches!(a, Atom::Lit(d) if ty(d) == t));
                self.0.insert(top(t));
            }
        }
        let tops: Vec<Atom> = self
            .0
            .iter()
            .filter(|a| !matches!(a, Atom::Lit(_) | Atom::Lam(_)))
            .cloned()
            .collect();
        self.0.retain(|a| !tops.iter().any(|t| t.covers(a)));
    }

    /// `self ⊑ other`: every atom is in `other` or covered by one of its tops.
    pub fn le(&self, other: &ValueSet) -> bool {
        self.0
            .iter()
            .all(|a| other.0.contains(a) || other.0.iter().any(|t| t.covers(a)))
    }

    /// The literal this set denotes, if it is a single exact non-pair datum.
    pub fn as_constant(&self) -> Option<&Datum> {
        match self.0.iter().next() {
            Some(Atom::Lit(d)) if self.0.len() == 1 && !d.is_pair() => Some(d),
            _ => None,
        }
    }

    pub fn may_be_true(&self) -> bool {
        self.0.iter().any(|a| *a != Atom::Lit(Datum::Bool(false)))
    }

    pub fn may_be_false(&self) -> bool {
        self.0.contains(&Atom::Lit(Datum::Bool(false))) || self.0.contains(&Atom::BoolTop)
    }

    fn single_exact(&self) -> Option<&Datum> {
        match self.0.iter().next() {
            Some(Atom::Lit(d)) if self.0.len() == 1 => Some(d),
            _ => None,
        }
    }

    fn may_be_number(&self) -> bool {
        self.0
            .iter()
            .any(|a| matches!(a, Atom::NumTop | Atom::Lit(Datum::Int(_))))
    }
}

impl FromIterator<Atom> for ValueSet {
    fn from_iter<I: IntoIterator<Item = Atom>>(iter: I) -> Self {
        Self::from_atoms(iter)
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Lam(l) => write!(f, "λ{l}"),
            Atom::Lit(d) => write!(f, "{d}"),
            Atom::NumTop => write!(f, "number"),
            Atom::BoolTop => write!(f, "boolean"),
            Atom::StrTop => write!(f, "string"),
            Atom::PairTop => write!(f, "pair"),
            Atom::NilTop => write!(f, "nil"),
            Atom::ProcPair => write!(f, "pair*"),
        }
    }
}

impl fmt::Display for ValueSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, "}}")
    }
}

/// The data a program can denote exactly: every literal in its text and
/// all of their sub-data. Anything else is abstracted to its type's top,
/// which keeps the abstract domain finite.
#[derive(Debug, Clone, Default)]
pub struct Universe {
    data: BTreeSet<Datum>,
    lams: Vec<Label>,
}

impl Universe {
    pub fn of_program(p: &CpsProgram) -> Self {
        let mut data = BTreeSet::new();
        for d in p.literals() {
            d.for_each_subdatum(&mut |s| {
                data.insert(s.clone());
            });
        }
        Universe {
            data,
            lams: p.ulams().collect(),
        }
    }

    pub fn intern(&self, d: Datum) -> Atom {
        match &d {
            Datum::Bool(_) | Datum::Nil => Atom::Lit(d),
            Datum::Int(n) if n.abs() <= SMALL_INT => Atom::Lit(d),
            _ if self.data.contains(&d) => Atom::Lit(d),
            _ => top(ty(&d)),
        }
    }

    pub fn value(&self, d: Datum) -> ValueSet {
        ValueSet::singleton(self.intern(d))
    }

    /// Abstract transfer function of a primitive. An empty result means
    /// every concrete application is stuck.
    pub fn apply_prim(&self, op: Prim, args: &[ValueSet]) -> ValueSet {
        if args.len() != op.arity() || args.iter().any(ValueSet::is_empty) {
            return ValueSet::empty();
        }
        let bools = || ValueSet::from_atoms([Atom::Lit(Datum::Bool(true)), Atom::Lit(Datum::Bool(false))]);
        match op {
            Prim::Add | Prim::Sub | Prim::Mul | Prim::NumEq | Prim::Lt => {
                if let (Some(a), Some(b)) = (args[0].single_exact(), args[1].single_exact()) {
                    return match op.apply(&[a.clone(), b.clone()]) {
                        Some(d) => self.value(d),
                        None => ValueSet::empty(),
                    };
                }
                if !args[0].may_be_number() || !args[1].may_be_number() {
                    return ValueSet::empty();
                }
                match op {
                    Prim::NumEq | Prim::Lt => bools(),
                    _ => ValueSet::singleton(Atom::NumTop),
                }
            }
            Prim::Car | Prim::Cdr => {
                if let Some(d) = args[0].single_exact() {
                    return match op.apply(std::slice::from_ref(d)) {
                        Some(r) => self.value(r),
                        None => ValueSet::empty(),
                    };
                }
                let mut out = ValueSet::empty();
                if args[0]
                    .iter()
                    .any(|a| matches!(a, Atom::PairTop | Atom::Lit(Datum::Pair(..))))
                {
                    out.join(&ValueSet::any_datum());
                }
                if args[0].contains(&Atom::ProcPair) {
                    out.join(&ValueSet::any_datum());
                    out.join(
                        &self
                            .lams
                            .iter()
                            .map(|l| Atom::Lam(*l))
                            .chain([Atom::ProcPair])
                            .collect(),
                    );
                }
                out
            }
            Prim::IsPair | Prim::IsNull | Prim::IsNumber | Prim::Not => args[0]
                .iter()
                .flat_map(|a| unary_test(op, a))
                .map(|b| Atom::Lit(Datum::Bool(b)))
                .collect(),
            Prim::Cons => {
                let holds_procs = |v: &ValueSet| v.iter().any(|a| matches!(a, Atom::Lam(_) | Atom::ProcPair));
                if holds_procs(&args[0]) || holds_procs(&args[1]) {
                    return ValueSet::singleton(Atom::ProcPair);
                }
                ValueSet::singleton(Atom::PairTop)
            }
        }
    }
}

fn unary_test(op: Prim, a: &Atom) -> Vec<bool> {
    let datum_test = |d: &Datum| match op.apply(std::slice::from_ref(d)) {
        Some(Datum::Bool(b)) => b,
        other => unreachable!("type test returned {other:?}"),
    };
    match a {
        Atom::Lit(d) => vec![datum_test(d)],
        Atom::Lam(_) => vec![false],
        Atom::BoolTop if op == Prim::Not => vec![true, false],
        Atom::NumTop => vec![op == Prim::IsNumber],
        Atom::PairTop | Atom::ProcPair => vec![op == Prim::IsPair],
        Atom::NilTop => vec![op == Prim::IsNull],
        Atom::BoolTop | Atom::StrTop => vec![false],
    }
}
