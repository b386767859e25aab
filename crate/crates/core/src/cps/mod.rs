//! Partitioned CPS: terms, syntactic maps, reference classification,
//! validation and a labeled printer.
//!
//! Terms live in an arena indexed by [`Label`]. User lambdas take any number
//! of user parameters plus one continuation parameter; continuation lambdas
//! take exactly one user parameter.

mod convert;

pub use convert::cps_convert;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use crate::datum::Datum;
use crate::prim::Prim;

pub type Label = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarKind {
    User,
    Cont,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarInfo {
    pub name: String,
    pub kind: VarKind,
    /// The lambda binding this variable; `None` for letrec globals.
    pub binder: Option<Label>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UExp {
    Lam(Label),
    Var(Var),
    Lit(Datum),
    Prim(Prim),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CExp {
    Lam(Label),
    Var(Var),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Call {
    /// `(f e ... q)`
    U { f: UExp, args: Vec<UExp>, q: CExp },
    /// `(q e)`
    C { q: CExp, arg: UExp },
    /// `(if test then alt)`; both branches are continuation lambdas that
    /// receive the test value and ignore it.
    Branch { test: UExp, then: Label, alt: Label },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Node {
    ULam { params: Vec<Var>, k: Var, body: Label },
    CLam { param: Var, body: Label },
    Call(Call),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RefKind {
    Stack,
    Heap,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CpsProgram {
    pub(crate) nodes: Vec<Node>,
    pub(crate) vars: Vec<VarInfo>,
    pub root: Label,
    /// Arguments passed to the root lambda by the initial state.
    pub input: Vec<UExp>,
    /// Letrec bindings, seeded before the initial state.
    pub globals: Vec<(Var, UExp)>,
}

impl CpsProgram {
    pub fn node(&self, l: Label) -> &Node {
        &self.nodes[l as usize]
    }

    pub fn num_labels(&self) -> usize {
        self.nodes.len()
    }

    pub fn labels(&self) -> impl Iterator<Item = Label> {
        0..self.nodes.len() as Label
    }

    pub fn var(&self, v: Var) -> &VarInfo {
        &self.vars[v.0 as usize]
    }

    pub fn var_name(&self, v: Var) -> &str {
        &self.vars[v.0 as usize].name
    }

    pub fn vars(&self) -> impl Iterator<Item = Var> {
        (0..self.vars.len() as u32).map(Var)
    }

    pub fn var_by_name(&self, name: &str) -> Option<Var> {
        self.vars().find(|v| self.var_name(*v) == name)
    }

    pub fn is_user_var(&self, v: Var) -> bool {
        self.var(v).kind == VarKind::User
    }

    pub fn ulam(&self, l: Label) -> (&[Var], Var, Label) {
        match self.node(l) {
            Node::ULam { params, k, body } => (params, *k, *body),
            n => panic!("label {l} is not a user lambda: {n:?}"),
        }
    }

    pub fn clam(&self, l: Label) -> (Var, Label) {
        match self.node(l) {
            Node::CLam { param, body } => (*param, *body),
            n => panic!("label {l} is not a continuation lambda: {n:?}"),
        }
    }

    pub fn call(&self, l: Label) -> &Call {
        match self.node(l) {
            Node::Call(c) => c,
            n => panic!("label {l} is not a call: {n:?}"),
        }
    }

    pub fn is_call(&self, l: Label) -> bool {
        matches!(self.node(l), Node::Call(_))
    }

    pub fn ulams(&self) -> impl Iterator<Item = Label> + '_ {
        self.labels().filter(|l| matches!(self.node(*l), Node::ULam { .. }))
    }

    pub fn calls(&self) -> impl Iterator<Item = Label> + '_ {
        self.labels().filter(|l| self.is_call(*l))
    }

    /// Variables referenced directly (not inside nested lambdas) by a call.
    pub fn call_refs(&self, l: Label) -> Vec<Var> {
        let mut out = Vec::new();
        let mut u = |e: &UExp| {
            if let UExp::Var(v) = e {
                out.push(*v);
            }
        };
        match self.call(l) {
            Call::U { f, args, q } => {
                u(f);
                args.iter().for_each(&mut u);
                if let CExp::Var(k) = q {
                    out.push(*k);
                }
            }
            Call::C { q, arg } => {
                u(arg);
                if let CExp::Var(k) = q {
                    out.push(*k);
                }
            }
            Call::Branch { test, .. } => u(test),
        }
        out
    }

    /// Every `(call label, variable)` reference site in the program.
    pub fn ref_sites(&self) -> Vec<(Label, Var)> {
        let mut out = Vec::new();
        for l in self.calls() {
            let mut refs = self.call_refs(l);
            refs.sort();
            refs.dedup();
            out.extend(refs.into_iter().map(|v| (l, v)));
        }
        out
    }

    /// All literal data appearing in the program text, including the input
    /// and letrec seeds.
    pub fn literals(&self) -> Vec<Datum> {
        let mut out = Vec::new();
        let mut push = |e: &UExp| {
            if let UExp::Lit(d) = e {
                out.push(d.clone());
            }
        };
        for n in &self.nodes {
            match n {
                Node::Call(Call::U { f, args, .. }) => {
                    push(f);
                    args.iter().for_each(&mut push);
                }
                Node::Call(Call::C { arg, .. }) => push(arg),
                Node::Call(Call::Branch { test, .. }) => push(test),
                _ => {}
            }
        }
        self.input.iter().for_each(&mut push);
        self.globals.iter().for_each(|(_, e)| push(e));
        out
    }

    /// Replaces the input passed to the root lambda.
    pub fn with_input(mut self, input: Vec<Datum>) -> Self {
        self.input = input.into_iter().map(UExp::Lit).collect();
        self
    }

    /// Returns a copy where the given reference sites are replaced by
    /// literals. Continuation variables are never folded.
    pub fn substitute(&self, folds: &HashMap<(Label, Var), Datum>) -> CpsProgram {
        let mut out = self.clone();
        let sub = |l: Label, e: &mut UExp| {
            if let UExp::Var(v) = e {
                if let Some(d) = folds.get(&(l, *v)) {
                    *e = UExp::Lit(d.clone());
                }
            }
        };
        for l in self.calls() {
            if let Node::Call(c) = &mut out.nodes[l as usize] {
                match c {
                    Call::U { f, args, .. } => {
                        sub(l, f);
                        args.iter_mut().for_each(|a| sub(l, a));
                    }
                    Call::C { arg, .. } => sub(l, arg),
                    Call::Branch { test, .. } => sub(l, test),
                }
            }
        }
        out
    }
}

/// Label-indexed syntactic maps: owner (innermost user lambda), LV, LL and
/// the heap-variable set.
#[derive(Debug, Clone)]
pub struct SyntaxMaps {
    owner: Vec<Option<Label>>,
    lv: HashMap<Label, BTreeSet<Var>>,
    binder_owner: Vec<Option<Label>>,
    heap_vars: BTreeSet<Var>,
    s_refs: usize,
    h_refs: usize,
}

pub fn compute_maps(p: &CpsProgram) -> SyntaxMaps {
    let mut owner = vec![None; p.num_labels()];
    let mut stack: Vec<(Label, Option<Label>)> = Vec::new();
    stack.push((p.root, None));
    let roots = p
        .input
        .iter()
        .chain(p.globals.iter().map(|(_, e)| e))
        .filter_map(|e| match e {
            UExp::Lam(l) => Some(*l),
            _ => None,
        });
    for l in roots {
        stack.push((l, None));
    }
    while let Some((l, cur)) = stack.pop() {
        if owner[l as usize].is_some() {
            continue;
        }
        let cur = match p.node(l) {
            Node::ULam { .. } => l,
            _ => cur.expect("non-lambda node reached outside a user lambda"),
        };
        owner[l as usize] = Some(cur);
        for c in children(p.node(l)) {
            stack.push((c, Some(cur)));
        }
    }
    let mut lv: HashMap<Label, BTreeSet<Var>> = HashMap::new();
    let mut binder_owner = vec![None; p.vars.len()];
    for v in p.vars() {
        if let Some(b) = p.var(v).binder {
            if let Some(o) = owner[b as usize] {
                binder_owner[v.0 as usize] = Some(o);
                lv.entry(o).or_default().insert(v);
            }
        }
    }
    let mut maps = SyntaxMaps {
        owner,
        lv,
        binder_owner,
        heap_vars: BTreeSet::new(),
        s_refs: 0,
        h_refs: 0,
    };
    for (l, v) in p.ref_sites() {
        if maps.owner[l as usize].is_none() {
            continue;
        }
        match maps.classify_ref(l, v) {
            RefKind::Stack => maps.s_refs += 1,
            RefKind::Heap => {
                maps.h_refs += 1;
                maps.heap_vars.insert(v);
            }
        }
    }
    maps
}

pub(crate) fn children(n: &Node) -> Vec<Label> {
    match n {
        Node::ULam { body, .. } | Node::CLam { body, .. } => vec![*body],
        Node::Call(c) => {
            let mut out = Vec::new();
            let mut u = |e: &UExp| {
                if let UExp::Lam(l) = e {
                    out.push(*l);
                }
            };
            let q = match c {
                Call::U { f, args, q } => {
                    u(f);
                    args.iter().for_each(&mut u);
                    Some(*q)
                }
                Call::C { q, arg } => {
                    u(arg);
                    Some(*q)
                }
                Call::Branch { test, then, alt } => {
                    u(test);
                    out.push(*then);
                    out.push(*alt);
                    None
                }
            };
            if let Some(CExp::Lam(l)) = q {
                out.push(l);
            }
            out
        }
    }
}

impl SyntaxMaps {
    /// Innermost enclosing user lambda of a label (a user lambda owns itself).
    pub fn owner(&self, l: Label) -> Label {
        self.owner[l as usize].unwrap_or_else(|| panic!("label {l} is unreachable"))
    }

    pub fn lv(&self, l: Label) -> &BTreeSet<Var> {
        static EMPTY: BTreeSet<Var> = BTreeSet::new();
        self.lv.get(&self.owner(l)).unwrap_or(&EMPTY)
    }

    pub fn ll(&self, l: Label) -> BTreeSet<Label> {
        let o = self.owner(l);
        (0..self.owner.len() as Label)
            .filter(|m| self.owner[*m as usize] == Some(o))
            .collect()
    }

    /// `S?(ψ, v)`: `v` is bound in the same partition class as `ψ`.
    pub fn is_stack(&self, l: Label, v: Var) -> bool {
        self.binder_owner[v.0 as usize].is_some_and(|o| Some(o) == self.owner[l as usize])
    }

    pub fn classify_ref(&self, l: Label, v: Var) -> RefKind {
        if self.is_stack(l, v) {
            RefKind::Stack
        } else {
            RefKind::Heap
        }
    }

    pub fn heap_vars(&self) -> &BTreeSet<Var> {
        &self.heap_vars
    }

    /// `H?(u)`: some reference to `u` is a heap reference.
    pub fn is_heap_var(&self, v: Var) -> bool {
        self.heap_vars.contains(&v)
    }

    pub fn s_refs(&self) -> usize {
        self.s_refs
    }

    pub fn h_refs(&self) -> usize {
        self.h_refs
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    LabelNotUnique(Label),
    FreeContinuationVariable { label: Label, var: String },
    UnboundVariable { label: Label, var: String },
    DuplicateBinder(String),
    Grammar { label: Label, reason: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::LabelNotUnique(l) => write!(f, "label not unique: {l}"),
            Violation::FreeContinuationVariable { label, var } => {
                write!(f, "free continuation variable `{var}` at {label}")
            }
            Violation::UnboundVariable { label, var } => {
                write!(f, "unbound variable `{var}` at {label}")
            }
            Violation::DuplicateBinder(v) => write!(f, "duplicate binder `{v}`"),
            Violation::Grammar { label, reason } => write!(f, "grammar at {label}: {reason}"),
        }
    }
}

struct Validator<'a> {
    p: &'a CpsProgram,
    seen: HashSet<Label>,
    bound: HashSet<Var>,
    out: Vec<Violation>,
}

impl Validator<'_> {
    fn bind(&mut self, v: Var, kind: VarKind, l: Label) {
        if !self.bound.insert(v) {
            self.out.push(Violation::DuplicateBinder(self.p.var_name(v).into()));
        }
        if self.p.var(v).kind != kind {
            self.grammar(l, format!("`{}` bound with the wrong kind", self.p.var_name(v)));
        }
    }

    fn grammar(&mut self, label: Label, reason: String) {
        self.out.push(Violation::Grammar { label, reason });
    }

    fn enter(&mut self, l: Label) -> bool {
        if l as usize >= self.p.num_labels() {
            self.grammar(l, "dangling label".into());
            return false;
        }
        if !self.seen.insert(l) {
            self.out.push(Violation::LabelNotUnique(l));
            return false;
        }
        true
    }

    fn ulam(&mut self, l: Label, scope: &mut Vec<Var>) {
        if !self.enter(l) {
            return;
        }
        let Node::ULam { params, k, body } = self.p.node(l) else {
            return self.grammar(l, "expected a user lambda".into());
        };
        let depth = scope.len();
        for u in params {
            self.bind(*u, VarKind::User, l);
            scope.push(*u);
        }
        self.bind(*k, VarKind::Cont, l);
        self.call(*body, scope, *k);
        scope.truncate(depth);
    }

    fn clam(&mut self, l: Label, scope: &mut Vec<Var>, k: Var) {
        if !self.enter(l) {
            return;
        }
        let Node::CLam { param, body } = self.p.node(l) else {
            return self.grammar(l, "expected a continuation lambda".into());
        };
        self.bind(*param, VarKind::User, l);
        scope.push(*param);
        self.call(*body, scope, k);
        scope.pop();
    }

    fn uexp(&mut self, l: Label, e: &UExp, scope: &mut Vec<Var>) {
        match e {
            UExp::Lam(m) => self.ulam(*m, scope),
            UExp::Var(v) => {
                if !self.p.is_user_var(*v) {
                    self.grammar(l, format!("`{}` used as a user value", self.p.var_name(*v)));
                } else if !scope.contains(v) && !self.p.globals.iter().any(|(g, _)| g == v) {
                    self.out.push(Violation::UnboundVariable {
                        label: l,
                        var: self.p.var_name(*v).into(),
                    });
                }
            }
            UExp::Lit(_) | UExp::Prim(_) => {}
        }
    }

    fn cexp(&mut self, l: Label, q: &CExp, scope: &mut Vec<Var>, k: Var) {
        match q {
            CExp::Lam(m) => self.clam(*m, scope, k),
            CExp::Var(v) if *v == k => {}
            CExp::Var(v) if self.p.is_user_var(*v) => {
                self.grammar(l, format!("`{}` used as a continuation", self.p.var_name(*v)))
            }
            CExp::Var(v) => self.out.push(Violation::FreeContinuationVariable {
                label: l,
                var: self.p.var_name(*v).into(),
            }),
        }
    }

    fn call(&mut self, l: Label, scope: &mut Vec<Var>, k: Var) {
        if !self.enter(l) {
            return;
        }
        let Node::Call(c) = self.p.node(l) else {
            return self.grammar(l, "expected a call".into());
        };
        match c {
            Call::U { f, args, q } => {
                if let UExp::Prim(op) = f {
                    if op.arity() != args.len() {
                        self.grammar(l, format!("`{op}` applied to {} argument(s)", args.len()));
                    }
                }
                if let UExp::Lam(m) = f {
                    if let Node::ULam { params, .. } = self.p.node(*m) {
                        if params.len() != args.len() {
                            self.grammar(l, "arity mismatch in direct application".into());
                        }
                    }
                }
                self.uexp(l, f, scope);
                for a in args {
                    self.uexp(l, a, scope);
                }
                self.cexp(l, q, scope, k);
            }
            Call::C { q, arg } => {
                self.uexp(l, arg, scope);
                self.cexp(l, q, scope, k);
            }
            Call::Branch { test, then, alt } => {
                self.uexp(l, test, scope);
                self.clam(*then, scope, k);
                self.clam(*alt, scope, k);
            }
        }
    }
}

/// Checks the grammar, label uniqueness, the free-continuation-variable
/// constraint, scoping and distinct binders.
pub fn validate(p: &CpsProgram) -> Result<(), Vec<Violation>> {
    let mut v = Validator {
        p,
        seen: HashSet::new(),
        bound: HashSet::new(),
        out: Vec::new(),
    };
    for (g, _) in &p.globals {
        if !v.bound.insert(*g) {
            v.out.push(Violation::DuplicateBinder(p.var_name(*g).into()));
        }
    }
    let mut scope = Vec::new();
    v.ulam(p.root, &mut scope);
    for e in p.input.iter().chain(p.globals.iter().map(|(_, e)| e)) {
        v.uexp(p.root, e, &mut scope);
    }
    if v.out.is_empty() {
        Ok(())
    } else {
        Err(v.out)
    }
}

/// Incremental construction of CPS terms, mainly for tests and hand-written
/// examples. Labels are allocated in construction order.
#[derive(Debug, Default)]
pub struct CpsBuilder {
    nodes: Vec<Node>,
    vars: Vec<VarInfo>,
}

impl CpsBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn user_var(&mut self, name: &str) -> Var {
        self.var(name, VarKind::User)
    }

    pub fn cont_var(&mut self, name: &str) -> Var {
        self.var(name, VarKind::Cont)
    }

    fn var(&mut self, name: &str, kind: VarKind) -> Var {
        self.vars.push(VarInfo {
            name: name.into(),
            kind,
            binder: None,
        });
        Var(self.vars.len() as u32 - 1)
    }

    fn push(&mut self, n: Node) -> Label {
        self.nodes.push(n);
        self.nodes.len() as Label - 1
    }

    pub fn ucall(&mut self, f: UExp, args: Vec<UExp>, q: CExp) -> Label {
        self.push(Node::Call(Call::U { f, args, q }))
    }

    pub fn ccall(&mut self, q: CExp, arg: UExp) -> Label {
        self.push(Node::Call(Call::C { q, arg }))
    }

    pub fn branch(&mut self, test: UExp, then: Label, alt: Label) -> Label {
        self.push(Node::Call(Call::Branch { test, then, alt }))
    }

    pub fn ulam(&mut self, params: Vec<Var>, k: Var, body: Label) -> Label {
        let l = self.push(Node::ULam {
            params: params.clone(),
            k,
            body,
        });
        for v in params.into_iter().chain([k]) {
            self.vars[v.0 as usize].binder = Some(l);
        }
        l
    }

    pub fn clam(&mut self, param: Var, body: Label) -> Label {
        let l = self.push(Node::CLam { param, body });
        self.vars[param.0 as usize].binder = Some(l);
        l
    }

    pub fn finish(self, root: Label, input: Vec<UExp>, globals: Vec<(Var, UExp)>) -> CpsProgram {
        CpsProgram {
            nodes: self.nodes,
            vars: self.vars,
            root,
            input,
            globals,
        }
    }
}

/// Displays a term in labeled notation: `(λ3(x k) (k x)^4)`.
pub struct Show<'a> {
    pub prog: &'a CpsProgram,
    pub label: Label,
}

impl CpsProgram {
    pub fn show(&self, label: Label) -> Show<'_> {
        Show { prog: self, label }
    }

    fn fmt_uexp(&self, e: &UExp, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match e {
            UExp::Lam(l) => write!(f, "{}", self.show(*l)),
            UExp::Var(v) => write!(f, "{}", self.var_name(*v)),
            UExp::Lit(d @ (Datum::Pair(..) | Datum::Nil)) => write!(f, "'{d}"),
            UExp::Lit(d) => write!(f, "{d}"),
            UExp::Prim(op) => write!(f, "{op}"),
        }
    }

    fn fmt_cexp(&self, q: &CExp, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match q {
            CExp::Lam(l) => write!(f, "{}", self.show(*l)),
            CExp::Var(v) => write!(f, "{}", self.var_name(*v)),
        }
    }

    pub fn fmt_label(&self, l: Label, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node(l) {
            Node::ULam { params, k, body } => {
                write!(f, "(λ{l}(")?;
                for u in params {
                    write!(f, "{} ", self.var_name(*u))?;
                }
                write!(f, "{}) {})", self.var_name(*k), self.show(*body))
            }
            Node::CLam { param, body } => {
                write!(f, "(λ{l}({}) {})", self.var_name(*param), self.show(*body))
            }
            Node::Call(Call::U { f: op, args, q }) => {
                write!(f, "(")?;
                self.fmt_uexp(op, f)?;
                for a in args {
                    write!(f, " ")?;
                    self.fmt_uexp(a, f)?;
                }
                write!(f, " ")?;
                self.fmt_cexp(q, f)?;
                write!(f, ")^{l}")
            }
            Node::Call(Call::C { q, arg }) => {
                write!(f, "(")?;
                self.fmt_cexp(q, f)?;
                write!(f, " ")?;
                self.fmt_uexp(arg, f)?;
                write!(f, ")^{l}")
            }
            Node::Call(Call::Branch { test, then, alt }) => {
                write!(f, "(if ")?;
                self.fmt_uexp(test, f)?;
                write!(f, " {} {})^{l}", self.show(*then), self.show(*alt))
            }
        }
    }
}

impl fmt::Display for Show<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.prog.fmt_label(self.label, f)
    }
}

impl fmt::Display for CpsProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (g, e) in &self.globals {
            write!(f, "(define {} ", self.var_name(*g))?;
            self.fmt_uexp(e, f)?;
            writeln!(f, ")")?;
        }
        write!(f, "({}", self.show(self.root))?;
        for e in &self.input {
            write!(f, " ")?;
            self.fmt_uexp(e, f)?;
        }
        write!(f, " halt)")
    }
}

#[cfg(test)]
mod tests;
