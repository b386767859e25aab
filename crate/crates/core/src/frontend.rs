//! Direct-style mini-Scheme front end: parsing, alphatization and labeling.
//!
//! The surface language is lambda, application, `if`, `let`, `let*`,
//! top-level `define`/`letrec`, `begin`, `quote`, integer/string/boolean
//! literals and a fixed set of primitives. `and`, `or` and `cond` are
//! accepted as sugar for nested `if`s.

use std::collections::{HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::datum::Datum;
use crate::prim::Prim;
use crate::sexpr::{self, Pos, Sexp, SexpKind, SyntaxError};

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Var(String),
    /// Self-evaluating literal or quoted datum.
    Lit(Datum),
    Lambda {
        params: Vec<String>,
        body: Box<Expr>,
    },
    App {
        func: Box<Expr>,
        args: Vec<Expr>,
    },
    Prim {
        op: Prim,
        args: Vec<Expr>,
    },
    If {
        test: Box<Expr>,
        then: Box<Expr>,
        alt: Box<Expr>,
    },
    Let {
        bindings: Vec<(String, Expr)>,
        body: Box<Expr>,
    },
    Begin(Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub label: u32,
    pub pos: Pos,
}

/// A whole program: a recursive group of top-level definitions and a body.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceProgram {
    pub definitions: Vec<(String, Expr)>,
    pub body: Expr,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrontendError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("{pos}: unknown special form `{name}`")]
    UnknownForm { name: String, pos: Pos },
    #[error("{pos}: malformed `{form}`: {reason}")]
    Malformed { form: String, reason: String, pos: Pos },
    #[error("{pos}: unbound variable `{name}` (label {label})")]
    Unbound { name: String, label: u32, pos: Pos },
    #[error("{pos}: primitive `{op}` expects {expected} argument(s), got {got}")]
    PrimArity {
        op: Prim,
        expected: usize,
        got: usize,
        pos: Pos,
    },
    #[error("{pos}: duplicate binder `{name}`")]
    DuplicateBinder { name: String, pos: Pos },
}

const UNSUPPORTED_FORMS: &[&str] = &[
    "set!",
    "call/cc",
    "call-with-current-continuation",
    "define-syntax",
    "let-syntax",
    "letrec-syntax",
    "syntax-rules",
    "case",
    "do",
    "delay",
    "quasiquote",
    "unquote",
    "when",
    "unless",
    "define",
    "letrec",
    "letrec*",
    "else",
];

fn mk(kind: ExprKind, pos: Pos) -> Expr {
    Expr { kind, label: 0, pos }
}

fn malformed<T>(form: &str, reason: &str, pos: Pos) -> Result<T, FrontendError> {
    Err(FrontendError::Malformed {
        form: form.into(),
        reason: reason.into(),
        pos,
    })
}

/// Parses program text. Top-level `define`s and a top-level `letrec` form
/// one recursive binding group; the remaining forms are the body.
pub fn parse(source: &str) -> Result<SourceProgram, FrontendError> {
    let forms = sexpr::read_all(source)?;
    let mut definitions = Vec::new();
    let mut body = Vec::new();
    for form in &forms {
        match head_symbol(form) {
            Some("define") => definitions.push(parse_define(form)?),
            Some("letrec") if forms.len() == 1 => {
                let items = form.as_list().unwrap();
                if items.len() < 3 {
                    return malformed("letrec", "expected bindings and a body", form.pos);
                }
                for b in parse_bindings("letrec", &items[1])? {
                    definitions.push(b);
                }
                body.push(parse_body("letrec", &items[2..], form.pos)?);
            }
            _ => body.push(parse_expr(form)?),
        }
    }
    let pos = forms.first().map(|f| f.pos).unwrap_or(Pos { line: 1, col: 1 });
    let body = match body.len() {
        0 => return malformed("program", "no body expression", pos),
        1 => body.pop().unwrap(),
        _ => mk(ExprKind::Begin(body), pos),
    };
    let mut prog = SourceProgram { definitions, body };
    label(&mut prog);
    Ok(prog)
}

fn head_symbol(s: &Sexp) -> Option<&str> {
    s.as_list()?.first()?.as_symbol()
}

fn parse_define(form: &Sexp) -> Result<(String, Expr), FrontendError> {
    let items = form.as_list().unwrap();
    if items.len() < 3 {
        return malformed("define", "expected a name and a value", form.pos);
    }
    match &items[1].kind {
        SexpKind::Symbol(name) => {
            if items.len() != 3 {
                return malformed("define", "expected exactly one value", form.pos);
            }
            Ok((name.clone(), parse_expr(&items[2])?))
        }
        SexpKind::List(sig) => {
            let names = symbols("define", sig, items[1].pos)?;
            let (name, params) = names
                .split_first()
                .ok_or(())
                .or_else(|_| malformed("define", "empty signature", form.pos))?;
            let body = parse_body("define", &items[2..], form.pos)?;
            let lam = mk(
                ExprKind::Lambda {
                    params: params.to_vec(),
                    body: Box::new(body),
                },
                form.pos,
            );
            Ok((name.clone(), lam))
        }
        _ => malformed("define", "expected a name or signature", form.pos),
    }
}

fn symbols(form: &str, items: &[Sexp], pos: Pos) -> Result<Vec<String>, FrontendError> {
    items
        .iter()
        .map(|s| match s.as_symbol() {
            Some(name) => Ok(name.to_string()),
            None => malformed(form, "expected an identifier", pos),
        })
        .collect()
}

fn parse_bindings(form: &str, s: &Sexp) -> Result<Vec<(String, Expr)>, FrontendError> {
    let Some(items) = s.as_list() else {
        return malformed(form, "expected a binding list", s.pos);
    };
    items
        .iter()
        .map(|b| match b.as_list() {
            Some([name, value]) => match name.as_symbol() {
                Some(n) => Ok((n.to_string(), parse_expr(value)?)),
                None => malformed(form, "binding name must be an identifier", b.pos),
            },
            _ => malformed(form, "binding must be (name expr)", b.pos),
        })
        .collect()
}

fn parse_body(form: &str, items: &[Sexp], pos: Pos) -> Result<Expr, FrontendError> {
    let mut exprs = items.iter().map(parse_expr).collect::<Result<Vec<_>, _>>()?;
    match exprs.len() {
        0 => malformed(form, "empty body", pos),
        1 => Ok(exprs.pop().unwrap()),
        _ => Ok(mk(ExprKind::Begin(exprs), pos)),
    }
}

fn parse_datum(s: &Sexp) -> Result<Datum, FrontendError> {
    Ok(match &s.kind {
        SexpKind::Int(n) => Datum::Int(*n),
        SexpKind::Str(v) => Datum::Str(v.clone()),
        SexpKind::Bool(b) => Datum::Bool(*b),
        SexpKind::Symbol(_) => return malformed("quote", "symbols are not supported as data", s.pos),
        SexpKind::List(items) => {
            let items = items.iter().map(parse_datum).collect::<Result<Vec<_>, _>>()?;
            Datum::list(items)
        }
    })
}

fn parse_expr(s: &Sexp) -> Result<Expr, FrontendError> {
    let pos = s.pos;
    let items = match &s.kind {
        SexpKind::Int(n) => return Ok(mk(ExprKind::Lit(Datum::Int(*n)), pos)),
        SexpKind::Str(v) => return Ok(mk(ExprKind::Lit(Datum::Str(v.clone())), pos)),
        SexpKind::Bool(b) => return Ok(mk(ExprKind::Lit(Datum::Bool(*b)), pos)),
        SexpKind::Symbol(name) => return Ok(mk(ExprKind::Var(name.clone()), pos)),
        SexpKind::List(items) => items,
    };
    let Some(head) = items.first() else {
        return malformed("application", "empty combination `()`", pos);
    };
    let kind = match head.as_symbol() {
        Some("lambda" | "λ") => {
            let Some(params) = items.get(1).and_then(|p| p.as_list()) else {
                return malformed("lambda", "expected a parameter list", pos);
            };
            ExprKind::Lambda {
                params: symbols("lambda", params, pos)?,
                body: Box::new(parse_body("lambda", &items[2..], pos)?),
            }
        }
        Some("quote") => match items.as_slice() {
            [_, d] => ExprKind::Lit(parse_datum(d)?),
            _ => return malformed("quote", "expected one datum", pos),
        },
        Some("if") => match items.as_slice() {
            [_, c, t, e] => ExprKind::If {
                test: Box::new(parse_expr(c)?),
                then: Box::new(parse_expr(t)?),
                alt: Box::new(parse_expr(e)?),
            },
            _ => return malformed("if", "expected test, then and else", pos),
        },
        Some("let") => {
            if items.len() < 3 {
                return malformed("let", "expected bindings and a body", pos);
            }
            ExprKind::Let {
                bindings: parse_bindings("let", &items[1])?,
                body: Box::new(parse_body("let", &items[2..], pos)?),
            }
        }
        Some("let*") => {
            if items.len() < 3 {
                return malformed("let*", "expected bindings and a body", pos);
            }
            let bindings = parse_bindings("let*", &items[1])?;
            let body = parse_body("let*", &items[2..], pos)?;
            if bindings.is_empty() {
                ExprKind::Let {
                    bindings,
                    body: Box::new(body),
                }
            } else {
                return Ok(bindings.into_iter().rev().fold(body, |body, b| {
                    mk(
                        ExprKind::Let {
                            bindings: vec![b],
                            body: Box::new(body),
                        },
                        pos,
                    )
                }));
            }
        }
        Some("begin") => {
            return parse_body("begin", &items[1..], pos);
        }
        Some("and") => return desugar_and(&items[1..], pos),
        Some("or") => return desugar_or(&items[1..], pos),
        Some("cond") => return desugar_cond(&items[1..], pos),
        Some(name) if UNSUPPORTED_FORMS.contains(&name) => {
            return Err(FrontendError::UnknownForm {
                name: name.to_string(),
                pos,
            })
        }
        _ => ExprKind::App {
            func: Box::new(parse_expr(head)?),
            args: items[1..].iter().map(parse_expr).collect::<Result<_, _>>()?,
        },
    };
    Ok(mk(kind, pos))
}

fn desugar_and(items: &[Sexp], pos: Pos) -> Result<Expr, FrontendError> {
    match items {
        [] => Ok(mk(ExprKind::Lit(Datum::Bool(true)), pos)),
        [e] => parse_expr(e),
        [e, rest @ ..] => Ok(mk(
            ExprKind::If {
                test: Box::new(parse_expr(e)?),
                then: Box::new(desugar_and(rest, pos)?),
                alt: Box::new(mk(ExprKind::Lit(Datum::Bool(false)), pos)),
            },
            pos,
        )),
    }
}

// `(or a b)` is `(if a a b)`; duplicating `a` is safe in a pure language.
fn desugar_or(items: &[Sexp], pos: Pos) -> Result<Expr, FrontendError> {
    match items {
        [] => Ok(mk(ExprKind::Lit(Datum::Bool(false)), pos)),
        [e] => parse_expr(e),
        [e, rest @ ..] => Ok(mk(
            ExprKind::If {
                test: Box::new(parse_expr(e)?),
                then: Box::new(parse_expr(e)?),
                alt: Box::new(desugar_or(rest, pos)?),
            },
            pos,
        )),
    }
}

fn desugar_cond(clauses: &[Sexp], pos: Pos) -> Result<Expr, FrontendError> {
    let Some((first, rest)) = clauses.split_first() else {
        return malformed("cond", "no else clause", pos);
    };
    let Some(items) = first.as_list().filter(|i| i.len() >= 2) else {
        return malformed("cond", "clause must be (test expr ...)", first.pos);
    };
    if items[0].as_symbol() == Some("else") {
        if !rest.is_empty() {
            return malformed("cond", "else must be the last clause", first.pos);
        }
        return parse_body("cond", &items[1..], first.pos);
    }
    Ok(mk(
        ExprKind::If {
            test: Box::new(parse_expr(&items[0])?),
            then: Box::new(parse_body("cond", &items[1..], first.pos)?),
            alt: Box::new(desugar_cond(rest, pos)?),
        },
        first.pos,
    ))
}

/// Assigns labels 1..n in pre-order: definitions first, then the body.
pub fn label(p: &mut SourceProgram) {
    fn walk(e: &mut Expr, next: &mut u32) {
        e.label = *next;
        *next += 1;
        match &mut e.kind {
            ExprKind::Var(_) | ExprKind::Lit(_) => {}
            ExprKind::Lambda { body, .. } => walk(body, next),
            ExprKind::App { func, args } => {
                walk(func, next);
                args.iter_mut().for_each(|a| walk(a, next));
            }
            ExprKind::Prim { args, .. } => args.iter_mut().for_each(|a| walk(a, next)),
            ExprKind::If { test, then, alt } => {
                walk(test, next);
                walk(then, next);
                walk(alt, next);
            }
            ExprKind::Let { bindings, body } => {
                bindings.iter_mut().for_each(|(_, v)| walk(v, next));
                walk(body, next);
            }
            ExprKind::Begin(es) => es.iter_mut().for_each(|x| walk(x, next)),
        }
    }
    let mut next = 1;
    for (_, e) in &mut p.definitions {
        walk(e, &mut next);
    }
    walk(&mut p.body, &mut next);
}

struct Alpha {
    used: HashSet<String>,
    counter: u32,
    scopes: Vec<HashMap<String, String>>,
}

impl Alpha {
    fn fresh(&mut self, name: &str) -> String {
        if self.used.insert(name.to_string()) {
            return name.to_string();
        }
        loop {
            self.counter += 1;
            let candidate = format!("{name}_{}", self.counter);
            if self.used.insert(candidate.clone()) {
                return candidate;
            }
        }
    }

    fn lookup(&self, name: &str) -> Option<&String> {
        self.scopes.iter().rev().find_map(|s| s.get(name))
    }

    fn bind_scope(&mut self, names: &[String], pos: Pos) -> Result<Vec<String>, FrontendError> {
        let mut scope = HashMap::new();
        let mut renamed = Vec::with_capacity(names.len());
        for n in names {
            if scope.contains_key(n) {
                return Err(FrontendError::DuplicateBinder { name: n.clone(), pos });
            }
            let fresh = self.fresh(n);
            scope.insert(n.clone(), fresh.clone());
            renamed.push(fresh);
        }
        self.scopes.push(scope);
        Ok(renamed)
    }

    fn expr(&mut self, e: &Expr) -> Result<Expr, FrontendError> {
        let pos = e.pos;
        let kind = match &e.kind {
            ExprKind::Var(name) => match self.lookup(name) {
                Some(n) => ExprKind::Var(n.clone()),
                None => match Prim::from_name(name) {
                    Some(op) => return Ok(self.eta_prim(op, pos)),
                    None => {
                        return Err(FrontendError::Unbound {
                            name: name.clone(),
                            label: e.label,
                            pos,
                        })
                    }
                },
            },
            ExprKind::Lit(d) => ExprKind::Lit(d.clone()),
            ExprKind::Lambda { params, body } => {
                let params = self.bind_scope(params, pos)?;
                let body = self.expr(body)?;
                self.scopes.pop();
                ExprKind::Lambda {
                    params,
                    body: Box::new(body),
                }
            }
            ExprKind::App { func, args } => {
                let prim = match &func.kind {
                    ExprKind::Var(name) if self.lookup(name).is_none() => Prim::from_name(name),
                    _ => None,
                };
                match prim {
                    Some(op) => self.prim_app(op, args, pos)?,
                    None => ExprKind::App {
                        func: Box::new(self.expr(func)?),
                        args: args.iter().map(|a| self.expr(a)).collect::<Result<_, _>>()?,
                    },
                }
            }
            ExprKind::Prim { op, args } => self.prim_app(*op, args, pos)?,
            ExprKind::If { test, then, alt } => ExprKind::If {
                test: Box::new(self.expr(test)?),
                then: Box::new(self.expr(then)?),
                alt: Box::new(self.expr(alt)?),
            },
            ExprKind::Let { bindings, body } => {
                let values = bindings
                    .iter()
                    .map(|(_, v)| self.expr(v))
                    .collect::<Result<Vec<_>, _>>()?;
                let names: Vec<String> = bindings.iter().map(|(n, _)| n.clone()).collect();
                let names = self.bind_scope(&names, pos)?;
                let body = self.expr(body)?;
                self.scopes.pop();
                ExprKind::Let {
                    bindings: names.into_iter().zip(values).collect(),
                    body: Box::new(body),
                }
            }
            ExprKind::Begin(es) => ExprKind::Begin(es.iter().map(|x| self.expr(x)).collect::<Result<_, _>>()?),
        };
        Ok(Expr {
            kind,
            label: e.label,
            pos,
        })
    }

    fn prim_app(&mut self, op: Prim, args: &[Expr], pos: Pos) -> Result<ExprKind, FrontendError> {
        if args.len() != op.arity() {
            return Err(FrontendError::PrimArity {
                op,
                expected: op.arity(),
                got: args.len(),
                pos,
            });
        }
        Ok(ExprKind::Prim {
            op,
            args: args.iter().map(|a| self.expr(a)).collect::<Result<_, _>>()?,
        })
    }

    /// A primitive used as a value becomes `(lambda (a ...) (op a ...))`.
    fn eta_prim(&mut self, op: Prim, pos: Pos) -> Expr {
        let params: Vec<String> = (0..op.arity()).map(|i| self.fresh(&format!("{op}.arg{i}"))).collect();
        let args = params.iter().map(|p| mk(ExprKind::Var(p.clone()), pos)).collect();
        mk(
            ExprKind::Lambda {
                params,
                body: Box::new(mk(ExprKind::Prim { op, args }, pos)),
            },
            pos,
        )
    }
}

/// Renames every binder to a globally unique name and resolves primitive
/// references. Names are kept when unique and otherwise suffixed with a
/// counter.
pub fn alphatize(p: &SourceProgram) -> Result<SourceProgram, FrontendError> {
    let mut alpha = Alpha {
        used: HashSet::new(),
        counter: 0,
        scopes: Vec::new(),
    };
    let names: Vec<String> = p.definitions.iter().map(|(n, _)| n.clone()).collect();
    let renamed = alpha.bind_scope(&names, p.body.pos)?;
    let mut definitions = Vec::with_capacity(names.len());
    for (name, (_, e)) in renamed.into_iter().zip(&p.definitions) {
        if !matches!(e.kind, ExprKind::Lambda { .. } | ExprKind::Lit(_)) {
            return malformed("define", "value must be a lambda or a literal", e.pos);
        }
        definitions.push((name, alpha.expr(e)?));
    }
    let body = alpha.expr(&p.body)?;
    let mut out = SourceProgram { definitions, body };
    label(&mut out);
    Ok(out)
}

/// Parses, alphatizes and labels in one go.
pub fn load(source: &str) -> Result<SourceProgram, FrontendError> {
    alphatize(&parse(source)?)
}

impl SourceProgram {
    /// All binder names in the program, in definition/pre-order.
    pub fn binders(&self) -> Vec<&str> {
        fn walk<'a>(e: &'a Expr, out: &mut Vec<&'a str>) {
            match &e.kind {
                ExprKind::Var(_) | ExprKind::Lit(_) => {}
                ExprKind::Lambda { params, body } => {
                    out.extend(params.iter().map(String::as_str));
                    walk(body, out);
                }
                ExprKind::App { func, args } => {
                    walk(func, out);
                    args.iter().for_each(|a| walk(a, out));
                }
                ExprKind::Prim { args, .. } => args.iter().for_each(|a| walk(a, out)),
                ExprKind::If { test, then, alt } => {
                    walk(test, out);
                    walk(then, out);
                    walk(alt, out);
                }
                ExprKind::Let { bindings, body } => {
                    for (n, v) in bindings {
                        out.push(n);
                        walk(v, out);
                    }
                    walk(body, out);
                }
                ExprKind::Begin(es) => es.iter().for_each(|x| walk(x, out)),
            }
        }
        let mut out: Vec<&str> = self.definitions.iter().map(|(n, _)| n.as_str()).collect();
        for (_, e) in &self.definitions {
            walk(e, &mut out);
        }
        walk(&self.body, &mut out);
        out
    }

    /// Copy with positions and labels zeroed, for structural comparison.
    pub fn without_positions(&self) -> SourceProgram {
        fn strip(e: &Expr) -> Expr {
            let kind = match &e.kind {
                ExprKind::Var(v) => ExprKind::Var(v.clone()),
                ExprKind::Lit(d) => ExprKind::Lit(d.clone()),
                ExprKind::Lambda { params, body } => ExprKind::Lambda {
                    params: params.clone(),
                    body: Box::new(strip(body)),
                },
                ExprKind::App { func, args } => ExprKind::App {
                    func: Box::new(strip(func)),
                    args: args.iter().map(strip).collect(),
                },
                ExprKind::Prim { op, args } => ExprKind::Prim {
                    op: *op,
                    args: args.iter().map(strip).collect(),
                },
                ExprKind::If { test, then, alt } => ExprKind::If {
                    test: Box::new(strip(test)),
                    then: Box::new(strip(then)),
                    alt: Box::new(strip(alt)),
                },
                ExprKind::Let { bindings, body } => ExprKind::Let {
                    bindings: bindings.iter().map(|(n, v)| (n.clone(), strip(v))).collect(),
                    body: Box::new(strip(body)),
                },
                ExprKind::Begin(es) => ExprKind::Begin(es.iter().map(strip).collect()),
            };
            Expr {
                kind,
                label: 0,
                pos: Pos::default(),
            }
        }
        SourceProgram {
            definitions: self.definitions.iter().map(|(n, e)| (n.clone(), strip(e))).collect(),
            body: strip(&self.body),
        }
    }
}

fn fmt_lit(d: &Datum, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match d {
        Datum::Pair(..) | Datum::Nil => write!(f, "'{d}"),
        _ => write!(f, "{d}"),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ExprKind::Var(v) => write!(f, "{v}"),
            ExprKind::Lit(d) => fmt_lit(d, f),
            ExprKind::Lambda { params, body } => {
                write!(f, "(lambda ({}) {body})", params.join(" "))
            }
            ExprKind::App { func, args } => {
                write!(f, "({func}")?;
                for a in args {
                    write!(f, " {a}")?;
                }
                write!(f, ")")
            }
            ExprKind::Prim { op, args } => {
                write!(f, "({op}")?;
                for a in args {
                    write!(f, " {a}")?;
                }
                write!(f, ")")
            }
            ExprKind::If { test, then, alt } => write!(f, "(if {test} {then} {alt})"),
            ExprKind::Let { bindings, body } => {
                write!(f, "(let (")?;
                for (i, (n, v)) in bindings.iter().enumerate() {
                    if i > 0 {
                        write!(f, " ")?;
                    }
                    write!(f, "({n} {v})")?;
                }
                write!(f, ") {body})")
            }
            ExprKind::Begin(es) => {
                write!(f, "(begin")?;
                for x in es {
                    write!(f, " {x}")?;
                }
                write!(f, ")")
            }
        }
    }
}

impl fmt::Display for SourceProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (n, e) in &self.definitions {
            writeln!(f, "(define {n} {e})")?;
        }
        match &self.body.kind {
            ExprKind::Begin(es) => {
                for x in es {
                    writeln!(f, "{x}")?;
                }
                Ok(())
            }
            _ => writeln!(f, "{}", self.body),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LEN: &str = "(define (len l)
  (if (pair? l)
      (+ 1 (len (cdr l)))
      0))
(len '(3))";

    #[test]
    fn parses_let() {
        let p = parse("(let ((x 1)) x)").unwrap();
        match &p.body.kind {
            ExprKind::Let { bindings, body } => {
                assert_eq!(bindings.len(), 1);
                assert_eq!(bindings[0].0, "x");
                assert_eq!(body.kind, ExprKind::Var("x".into()));
            }
            k => panic!("expected let, got {k:?}"),
        }
    }

    #[test]
    fn parses_len_program() {
        let p = parse(LEN).unwrap();
        assert_eq!(p.definitions.len(), 1);
        assert_eq!(p.definitions[0].0, "len");
        assert!(matches!(p.definitions[0].1.kind, ExprKind::Lambda { .. }));
        assert!(matches!(p.body.kind, ExprKind::App { .. }));
    }

    #[test]
    fn unbalanced_source_is_a_syntax_error() {
        assert!(matches!(parse("((λ"), Err(FrontendError::Syntax(_))));
    }

    #[test]
    fn unknown_special_forms_are_rejected() {
        assert!(matches!(parse("(set! x 1)"), Err(FrontendError::UnknownForm { .. })));
        assert!(matches!(
            parse("(lambda (x) (call/cc x))"),
            Err(FrontendError::UnknownForm { .. })
        ));
    }

    #[test]
    fn shadowed_binder_is_renamed() {
        let p = load("(lambda (x) (lambda (x) x))").unwrap();
        assert_eq!(p.binders(), vec!["x", "x_1"]);
        match &p.body.kind {
            ExprKind::Lambda { body, .. } => match &body.kind {
                ExprKind::Lambda { body, .. } => assert_eq!(body.kind, ExprKind::Var("x_1".into())),
                k => panic!("{k:?}"),
            },
            k => panic!("{k:?}"),
        }
    }

    #[test]
    fn unshadowed_names_are_kept() {
        let src = "(lambda (a b) (a b))";
        let p = load(src).unwrap();
        assert_eq!(p.without_positions(), parse(src).unwrap().without_positions());
    }

    #[test]
    fn unbound_reference_is_reported() {
        match load("(lambda (x) y)") {
            Err(FrontendError::Unbound { name, label, .. }) => {
                assert_eq!(name, "y");
                assert_eq!(label, 2);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn primitive_values_are_eta_expanded() {
        let p = load("(lambda (f) (f car))").unwrap();
        let printed = p.to_string();
        assert!(printed.contains("(lambda (car.arg0) (car car.arg0))"), "{printed}");
        assert!(matches!(load("(car 1 2)"), Err(FrontendError::PrimArity { .. })));
    }

    #[test]
    fn labels_are_deterministic_and_distinct() {
        let mut a = load(LEN).unwrap();
        let before = a.clone();
        label(&mut a);
        assert_eq!(a, before);
        let mut seen = HashSet::new();
        fn collect(e: &Expr, seen: &mut HashSet<u32>) {
            assert!(seen.insert(e.label), "duplicate label {}", e.label);
            match &e.kind {
                ExprKind::Lambda { body, .. } => collect(body, seen),
                ExprKind::App { func, args } => {
                    collect(func, seen);
                    args.iter().for_each(|x| collect(x, seen));
                }
                ExprKind::Prim { args, .. } => args.iter().for_each(|x| collect(x, seen)),
                ExprKind::If { test, then, alt } => {
                    collect(test, seen);
                    collect(then, seen);
                    collect(alt, seen);
                }
                ExprKind::Let { bindings, body } => {
                    bindings.iter().for_each(|(_, v)| collect(v, seen));
                    collect(body, seen);
                }
                ExprKind::Begin(es) => es.iter().for_each(|x| collect(x, seen)),
                _ => {}
            }
        }
        for (_, e) in &a.definitions {
            collect(e, &mut seen);
        }
        collect(&a.body, &mut seen);
        let mut def_labels = HashSet::new();
        collect(&a.definitions[0].1, &mut def_labels);
        assert_eq!(a.body.label as usize, def_labels.len() + 1);
    }

    #[test]
    fn single_call_program_labels_in_traversal_order() {
        let p = load("((lambda (x) x) 1)").unwrap();
        assert_eq!(p.body.label, 1);
        match &p.body.kind {
            ExprKind::App { func, args } => {
                assert_eq!(func.label, 2);
                assert_eq!(args[0].label, 4);
            }
            k => panic!("{k:?}"),
        }
    }

    #[test]
    fn print_then_parse_is_identity() {
        for src in [
            LEN,
            "(let* ((a 1) (b (+ a 1))) (cons a '(2 \"s\" #f)))",
            "(define x 3) (lambda (y) (if y x '())) 7",
            "(or 1 2) (and #t (cond ((null? '()) 1) (else 2)))",
        ] {
            let p = parse(src).unwrap();
            let again = parse(&p.to_string()).unwrap();
            assert_eq!(again.without_positions(), p.without_positions(), "{src}");
        }
    }

    #[test]
    fn letrec_only_at_top_level() {
        let p = parse("(letrec ((f (lambda (n) (f n)))) (f 1))").unwrap();
        assert_eq!(p.definitions.len(), 1);
        assert!(parse("(lambda (x) (letrec ((f x)) f))").is_err());
    }
}
