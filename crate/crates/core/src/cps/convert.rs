//! One-pass CPS conversion with static (meta) continuations.
//!
//! Conversion first builds an owned term tree, then flattens it into the
//! label arena in pre-order.

use std::collections::{HashMap, HashSet};

use super::{CExp, Call, CpsProgram, Label, Node, UExp, Var, VarInfo, VarKind};
use crate::datum::Datum;
use crate::frontend::{Expr, ExprKind, SourceProgram};
use crate::prim::Prim;

#[derive(Clone)]
enum TU {
    Lam(Box<TULam>),
    Var(Var),
    Lit(Datum),
    Prim(Prim),
}

#[derive(Clone)]
struct TULam {
    params: Vec<Var>,
    k: Var,
    body: TCall,
}

#[derive(Clone)]
struct TCLam {
    param: Var,
    body: TCall,
}

#[derive(Clone)]
enum TC {
    Lam(Box<TCLam>),
    Var(Var),
}

#[derive(Clone)]
enum TCall {
    U {
        f: TU,
        args: Vec<TU>,
        q: TC,
    },
    C {
        q: TC,
        arg: TU,
    },
    Branch {
        test: TU,
        then: Box<TCLam>,
        alt: Box<TCLam>,
    },
}

type Meta<'a> = Box<dyn FnOnce(&mut Conv, TU) -> TCall + 'a>;
type MetaN<'a> = Box<dyn FnOnce(&mut Conv, Vec<TU>) -> TCall + 'a>;

enum Cont<'a> {
    Var(Var),
    Lam(TCLam),
    Meta(Meta<'a>),
}

struct Conv {
    vars: Vec<VarInfo>,
    used: HashSet<String>,
    counter: u32,
    env: HashMap<String, Var>,
}

impl Conv {
    fn fresh(&mut self, base: &str, kind: VarKind) -> Var {
        let mut name = base.to_string();
        while !self.used.insert(name.clone()) {
            self.counter += 1;
            name = match base {
                "_" => format!("_{}", self.counter),
                _ => format!("{base}_{}", self.counter),
            };
        }
        self.vars.push(VarInfo {
            name,
            kind,
            binder: None,
        });
        Var(self.vars.len() as u32 - 1)
    }

    fn bind_source(&mut self, name: &str) -> Var {
        // Source names were registered as used up front; reuse them verbatim
        // on first binding.
        let v = if self.env.contains_key(name) {
            self.fresh(name, VarKind::User)
        } else {
            self.used.remove(name);
            self.fresh(name, VarKind::User)
        };
        self.env.insert(name.to_string(), v);
        v
    }

    fn lookup(&self, name: &str) -> Var {
        *self
            .env
            .get(name)
            .unwrap_or_else(|| panic!("unbound `{name}` after alphatization"))
    }

    fn apply(&mut self, cont: Cont<'_>, atom: TU) -> TCall {
        match cont {
            Cont::Var(k) => TCall::C {
                q: TC::Var(k),
                arg: atom,
            },
            Cont::Lam(c) => TCall::C {
                q: TC::Lam(Box::new(c)),
                arg: atom,
            },
            Cont::Meta(f) => f(self, atom),
        }
    }

    fn reify_lam(&mut self, f: Meta<'_>) -> TCLam {
        let u = self.fresh("u", VarKind::User);
        TCLam {
            param: u,
            body: f(self, TU::Var(u)),
        }
    }

    fn reify(&mut self, cont: Cont<'_>) -> TC {
        match cont {
            Cont::Var(k) => TC::Var(k),
            Cont::Lam(c) => TC::Lam(Box::new(c)),
            Cont::Meta(f) => TC::Lam(Box::new(self.reify_lam(f))),
        }
    }

    fn trivial(&mut self, e: &Expr) -> Option<TU> {
        Some(match &e.kind {
            ExprKind::Var(n) => TU::Var(self.lookup(n)),
            ExprKind::Lit(d) => TU::Lit(d.clone()),
            ExprKind::Lambda { params, body } => TU::Lam(Box::new(self.lambda(params, body))),
            _ => return None,
        })
    }

    fn lambda(&mut self, params: &[String], body: &Expr) -> TULam {
        let params = params.iter().map(|p| self.bind_source(p)).collect();
        let k = self.fresh("k", VarKind::Cont);
        let body = self.convert(body, Cont::Var(k));
        TULam { params, k, body }
    }

    fn convert<'a>(&mut self, e: &'a Expr, cont: Cont<'a>) -> TCall {
        if let Some(atom) = self.trivial(e) {
            return self.apply(cont, atom);
        }
        match &e.kind {
            ExprKind::Var(_) | ExprKind::Lit(_) | ExprKind::Lambda { .. } => unreachable!(),
            ExprKind::App { func, args } => {
                let operands: Vec<&Expr> = std::iter::once(&**func).chain(args.iter()).collect();
                self.atoms(
                    operands,
                    Vec::new(),
                    Box::new(move |c: &mut Conv, mut atoms: Vec<TU>| {
                        let f = atoms.remove(0);
                        let q = c.reify(cont);
                        TCall::U { f, args: atoms, q }
                    }),
                )
            }
            ExprKind::Prim { op, args } => {
                let op = *op;
                self.atoms(
                    args.iter().collect(),
                    Vec::new(),
                    Box::new(move |c: &mut Conv, atoms: Vec<TU>| {
                        let q = c.reify(cont);
                        TCall::U {
                            f: TU::Prim(op),
                            args: atoms,
                            q,
                        }
                    }),
                )
            }
            ExprKind::If { test, then, alt } => self.convert(
                test,
                Cont::Meta(Box::new(move |c: &mut Conv, t: TU| {
                    let (c1, c2) = c.split(cont);
                    let p1 = c.fresh("_", VarKind::User);
                    let b1 = c.convert(then, c1);
                    let p2 = c.fresh("_", VarKind::User);
                    let b2 = c.convert(alt, c2);
                    TCall::Branch {
                        test: t,
                        then: Box::new(TCLam { param: p1, body: b1 }),
                        alt: Box::new(TCLam { param: p2, body: b2 }),
                    }
                })),
            ),
            ExprKind::Let { bindings, body } => {
                let vars: Vec<Var> = bindings.iter().map(|(n, _)| self.bind_source(n)).collect();
                let mut call = self.convert(body, cont);
                for ((_, value), x) in bindings.iter().zip(vars).rev() {
                    call = self.convert(value, Cont::Lam(TCLam { param: x, body: call }));
                }
                call
            }
            ExprKind::Begin(es) => {
                let (last, init) = es.split_last().expect("empty begin");
                let mut call = self.convert(last, cont);
                for e in init.iter().rev() {
                    let u = self.fresh("u", VarKind::User);
                    call = self.convert(e, Cont::Lam(TCLam { param: u, body: call }));
                }
                call
            }
        }
    }

    fn atoms<'a>(&mut self, es: Vec<&'a Expr>, mut acc: Vec<TU>, k: MetaN<'a>) -> TCall {
        let mut rest = es.into_iter();
        while let Some(e) = rest.next() {
            if let Some(a) = self.trivial(e) {
                acc.push(a);
                continue;
            }
            let rest: Vec<&'a Expr> = rest.collect();
            return self.convert(
                e,
                Cont::Meta(Box::new(move |c: &mut Conv, a: TU| {
                    acc.push(a);
                    c.atoms(rest, acc, k)
                })),
            );
        }
        k(self, acc)
    }

    /// Two copies of a continuation for the arms of a branch.
    fn split<'a>(&mut self, cont: Cont<'a>) -> (Cont<'a>, Cont<'a>) {
        match cont {
            Cont::Var(k) => (Cont::Var(k), Cont::Var(k)),
            Cont::Lam(c) => (Cont::Lam(self.freshen(&c)), Cont::Lam(c)),
            Cont::Meta(f) => {
                let c = self.reify_lam(f);
                (Cont::Lam(self.freshen(&c)), Cont::Lam(c))
            }
        }
    }

    /// Copies a continuation lambda, renaming every binder inside it.
    fn freshen(&mut self, c: &TCLam) -> TCLam {
        let mut map = HashMap::new();
        self.fr_clam(c, &mut map)
    }

    fn fr_var(&mut self, v: Var, map: &mut HashMap<Var, Var>) -> Var {
        let info = self.vars[v.0 as usize].clone();
        let base = info.name.split('_').next().filter(|b| !b.is_empty()).unwrap_or("_");
        let fresh = self.fresh(base, info.kind);
        map.insert(v, fresh);
        fresh
    }

    fn fr_clam(&mut self, c: &TCLam, map: &mut HashMap<Var, Var>) -> TCLam {
        let param = self.fr_var(c.param, map);
        TCLam {
            param,
            body: self.fr_call(&c.body, map),
        }
    }

    fn fr_u(&mut self, e: &TU, map: &mut HashMap<Var, Var>) -> TU {
        match e {
            TU::Lam(l) => {
                let params = l.params.iter().map(|p| self.fr_var(*p, map)).collect();
                let k = self.fr_var(l.k, map);
                TU::Lam(Box::new(TULam {
                    params,
                    k,
                    body: self.fr_call(&l.body, map),
                }))
            }
            TU::Var(v) => TU::Var(*map.get(v).unwrap_or(v)),
            other => other.clone(),
        }
    }

    fn fr_c(&mut self, q: &TC, map: &mut HashMap<Var, Var>) -> TC {
        match q {
            TC::Lam(c) => TC::Lam(Box::new(self.fr_clam(c, map))),
            TC::Var(v) => TC::Var(*map.get(v).unwrap_or(v)),
        }
    }

    fn fr_call(&mut self, call: &TCall, map: &mut HashMap<Var, Var>) -> TCall {
        match call {
            TCall::U { f, args, q } => TCall::U {
                f: self.fr_u(f, map),
                args: args.iter().map(|a| self.fr_u(a, map)).collect(),
                q: self.fr_c(q, map),
            },
            TCall::C { q, arg } => {
                let arg = self.fr_u(arg, map);
                TCall::C {
                    q: self.fr_c(q, map),
                    arg,
                }
            }
            TCall::Branch { test, then, alt } => TCall::Branch {
                test: self.fr_u(test, map),
                then: Box::new(self.fr_clam(then, map)),
                alt: Box::new(self.fr_clam(alt, map)),
            },
        }
    }
}

struct Flat {
    nodes: Vec<Node>,
    vars: Vec<VarInfo>,
}

impl Flat {
    fn reserve(&mut self) -> Label {
        self.nodes.push(Node::Call(Call::C {
            q: CExp::Var(Var(0)),
            arg: UExp::Lit(Datum::Nil),
        }));
        self.nodes.len() as Label - 1
    }

    fn bind(&mut self, v: Var, l: Label) {
        self.vars[v.0 as usize].binder = Some(l);
    }

    fn ulam(&mut self, t: TULam) -> Label {
        let l = self.reserve();
        for p in &t.params {
            self.bind(*p, l);
        }
        self.bind(t.k, l);
        let body = self.call(t.body);
        self.nodes[l as usize] = Node::ULam {
            params: t.params,
            k: t.k,
            body,
        };
        l
    }

    fn clam(&mut self, t: TCLam) -> Label {
        let l = self.reserve();
        self.bind(t.param, l);
        let body = self.call(t.body);
        self.nodes[l as usize] = Node::CLam { param: t.param, body };
        l
    }

    fn uexp(&mut self, e: TU) -> UExp {
        match e {
            TU::Lam(l) => UExp::Lam(self.ulam(*l)),
            TU::Var(v) => UExp::Var(v),
            TU::Lit(d) => UExp::Lit(d),
            TU::Prim(p) => UExp::Prim(p),
        }
    }

    fn cexp(&mut self, q: TC) -> CExp {
        match q {
            TC::Lam(c) => CExp::Lam(self.clam(*c)),
            TC::Var(v) => CExp::Var(v),
        }
    }

    fn call(&mut self, c: TCall) -> Label {
        let l = self.reserve();
        let call = match c {
            TCall::U { f, args, q } => {
                let f = self.uexp(f);
                let args = args.into_iter().map(|a| self.uexp(a)).collect();
                Call::U {
                    f,
                    args,
                    q: self.cexp(q),
                }
            }
            TCall::C { q, arg } => {
                let q = self.cexp(q);
                Call::C { q, arg: self.uexp(arg) }
            }
            TCall::Branch { test, then, alt } => Call::Branch {
                test: self.uexp(test),
                then: self.clam(*then),
                alt: self.clam(*alt),
            },
        };
        self.nodes[l as usize] = Node::Call(call);
        l
    }
}

fn is_value(e: &Expr) -> bool {
    matches!(e.kind, ExprKind::Lambda { .. } | ExprKind::Lit(_))
}

/// Converts an alphatized program to Partitioned CPS.
///
/// A program without definitions whose body applies an explicit lambda to
/// values becomes that lambda applied to those values by the initial state;
/// a body that is itself a lambda becomes the root with no input. Otherwise
/// the root is `(λ(k) body)`.
pub fn cps_convert(p: &SourceProgram) -> CpsProgram {
    let mut conv = Conv {
        vars: Vec::new(),
        used: p.binders().into_iter().map(String::from).collect(),
        counter: 0,
        env: HashMap::new(),
    };
    let globals: Vec<Var> = p.definitions.iter().map(|(n, _)| conv.bind_source(n)).collect();
    let global_values: Vec<TU> = p
        .definitions
        .iter()
        .map(|(_, e)| conv.trivial(e).expect("definitions must bind lambdas or literals"))
        .collect();

    let (root, input) = match &p.body.kind {
        ExprKind::App { func, args }
            if p.definitions.is_empty()
                && matches!(func.kind, ExprKind::Lambda { .. })
                && args.iter().all(is_value) =>
        {
            let ExprKind::Lambda { params, body } = &func.kind else {
                unreachable!()
            };
            if params.len() == args.len() {
                let root = conv.lambda(params, body);
                let input = args.iter().map(|a| conv.trivial(a).unwrap()).collect();
                (root, input)
            } else {
                wrapped_root(&mut conv, &p.body)
            }
        }
        ExprKind::Lambda { params, body } if p.definitions.is_empty() => (conv.lambda(params, body), Vec::new()),
        _ => wrapped_root(&mut conv, &p.body),
    };

    let mut flat = Flat {
        nodes: Vec::new(),
        vars: conv.vars,
    };
    let root = flat.ulam(root);
    let input = input.into_iter().map(|e| flat.uexp(e)).collect();
    let globals = globals
        .into_iter()
        .zip(global_values)
        .map(|(g, e)| (g, flat.uexp(e)))
        .collect();
    CpsProgram {
        nodes: flat.nodes,
        vars: flat.vars,
        root,
        input,
        globals,
    }
}

fn wrapped_root(conv: &mut Conv, body: &Expr) -> (TULam, Vec<TU>) {
    let k = conv.fresh("k", VarKind::Cont);
    let body = conv.convert(body, Cont::Var(k));
    (
        TULam {
            params: Vec::new(),
            k,
            body,
        },
        Vec::new(),
    )
}
