//! First-order data shared by the concrete interpreter and the abstract
//! domains: numbers, strings, booleans, the empty list and immutable pairs.

use std::fmt;
use std::rc::Rc;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Datum {
    Int(i64),
    Str(Rc<str>),
    Bool(bool),
    Nil,
    Pair(Rc<Datum>, Rc<Datum>),
}

impl Datum {
    pub fn pair(car: Datum, cdr: Datum) -> Datum {
        Datum::Pair(Rc::new(car), Rc::new(cdr))
    }

    pub fn list<I: IntoIterator<Item = Datum>>(items: I) -> Datum
    where
        I::IntoIter: DoubleEndedIterator,
    {
        items.into_iter().rev().fold(Datum::Nil, |acc, d| Datum::pair(d, acc))
    }

    pub fn is_pair(&self) -> bool {
        matches!(self, Datum::Pair(..))
    }

    /// Scheme truthiness: only `#f` is false.
    pub fn is_truthy(&self) -> bool {
        !matches!(self, Datum::Bool(false))
    }

    /// Calls `f` on this datum and every datum reachable through pairs.
    pub fn for_each_subdatum(&self, f: &mut impl FnMut(&Datum)) {
        f(self);
        if let Datum::Pair(a, d) = self {
            a.for_each_subdatum(f);
            d.for_each_subdatum(f);
        }
    }
}

impl fmt::Display for Datum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Datum::Int(n) => write!(f, "{n}"),
            Datum::Str(s) => write!(f, "{s:?}"),
            Datum::Bool(true) => write!(f, "#t"),
            Datum::Bool(false) => write!(f, "#f"),
            Datum::Nil => write!(f, "()"),
            Datum::Pair(a, d) => {
                write!(f, "({a}")?;
                let mut rest: &Datum = d;
                loop {
                    match rest {
                        Datum::Nil => break,
                        Datum::Pair(a, d) => {
                            write!(f, " {a}")?;
                            rest = d;
                        }
                        other => {
                            write!(f, " . {other}")?;
                            break;
                        }
                    }
                }
                write!(f, ")")
            }
        }
    }
}
