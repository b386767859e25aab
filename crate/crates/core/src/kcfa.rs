//! k-CFA for k ∈ {0, 1} over the same CPS programs: a workset abstract
//! interpreter with a global store and flat environments. The contour (the
//! most recent user call site) doubles as the environment; a lambda's free
//! variables are copied into the new contour when it is entered.
//! Continuations live in the store like any other value, so returns can
//! reach the wrong caller.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use crate::cps::{children, CExp, Call, CpsProgram, Label, Node, UExp, Var, VarKind};
use crate::domain::{Atom, Universe, ValueSet};

/// Call-site string of length at most k.
pub type Contour = Vec<Label>;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum KCont {
    Lam(Label, Contour),
    Halt,
}

/// A user value: basic atoms plus closures.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct KValue {
    basic: ValueSet,
    clos: BTreeSet<(Label, Contour)>,
}

impl KValue {
    fn join(&mut self, other: &KValue) -> bool {
        let a = self.basic.join(&other.basic);
        let before = self.clos.len();
        self.clos.extend(other.clos.iter().cloned());
        a || self.clos.len() != before
    }

    fn project(&self) -> ValueSet {
        let mut v = self.basic.clone();
        v.join(&self.clos.iter().map(|(l, _)| Atom::Lam(*l)).collect());
        v
    }
}

#[derive(Debug, Clone, Default)]
struct Store {
    user: HashMap<(Var, Contour), KValue>,
    cont: HashMap<(Var, Contour), BTreeSet<KCont>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct KState {
    call: Label,
    time: Contour,
}

#[derive(Debug, Clone)]
pub struct KcfaResult {
    pub k: usize,
    /// Distinct `(call, contour)` states inserted into the workset.
    pub visited: usize,
    pub passes: usize,
    pub flows: BTreeMap<(Label, Var), ValueSet>,
    pub finals: ValueSet,
    /// User lambdas applied at each call site.
    pub callees: BTreeMap<Label, BTreeSet<Label>>,
}

impl KcfaResult {
    pub fn flow(&self, l: Label, v: Var) -> ValueSet {
        self.flows.get(&(l, v)).cloned().unwrap_or_default()
    }
}

/// Free variables of every user lambda, globals excluded.
fn free_vars(prog: &CpsProgram) -> HashMap<Label, Vec<Var>> {
    fn go(prog: &CpsProgram, l: Label, memo: &mut HashMap<Label, BTreeSet<Var>>) -> BTreeSet<Var> {
        if let Some(fv) = memo.get(&l) {
            return fv.clone();
        }
        let node = prog.node(l);
        let mut fv: BTreeSet<Var> = match node {
            Node::Call(_) => prog.call_refs(l).into_iter().collect(),
            _ => BTreeSet::new(),
        };
        for c in children(node) {
            fv.extend(go(prog, c, memo));
        }
        match node {
            Node::ULam { params, k, .. } => {
                for p in params {
                    fv.remove(p);
                }
                fv.remove(k);
            }
            Node::CLam { param, .. } => {
                fv.remove(param);
            }
            Node::Call(_) => {}
        }
        fv.retain(|v| prog.var(*v).binder.is_some());
        memo.insert(l, fv.clone());
        fv
    }
    let mut memo = HashMap::new();
    prog.ulams()
        .map(|l| (l, go(prog, l, &mut memo).into_iter().collect()))
        .collect()
}

struct Kcfa<'p> {
    prog: &'p CpsProgram,
    universe: Universe,
    k: usize,
    branch_pruning: bool,
    free: HashMap<Label, Vec<Var>>,
    store: Store,
    grew: bool,
    finals: ValueSet,
    callees: BTreeMap<Label, BTreeSet<Label>>,
}

impl<'p> Kcfa<'p> {
    fn tick(&self, l: Label, t: &Contour) -> Contour {
        let mut c: Contour = std::iter::once(l).chain(t.iter().copied()).collect();
        c.truncate(self.k);
        c
    }

    /// Store key of `v` looked up at contour `t`; globals live at the
    /// empty contour.
    fn key(&self, v: Var, t: &Contour) -> (Var, Contour) {
        if self.prog.var(v).binder.is_none() {
            (v, Contour::new())
        } else {
            (v, t.clone())
        }
    }

    fn bind_user(&mut self, v: Var, t: &Contour, d: &KValue) {
        let slot = self.store.user.entry((v, t.clone())).or_default();
        self.grew |= slot.join(d);
    }

    fn bind_cont(&mut self, v: Var, t: &Contour, c: KCont) {
        self.grew |= self.store.cont.entry((v, t.clone())).or_default().insert(c);
    }

    fn lookup_user(&self, v: Var, t: &Contour) -> KValue {
        self.store.user.get(&self.key(v, t)).cloned().unwrap_or_default()
    }

    fn eval_u(&self, e: &UExp, t: &Contour) -> KValue {
        match e {
            UExp::Lam(l) => KValue {
                basic: ValueSet::empty(),
                clos: [(*l, t.clone())].into(),
            },
            UExp::Lit(d) => KValue {
                basic: self.universe.value(d.clone()),
                clos: BTreeSet::new(),
            },
            UExp::Var(v) => self.lookup_user(*v, t),
            UExp::Prim(_) => KValue::default(),
        }
    }

    fn eval_k(&self, q: &CExp, t: &Contour) -> BTreeSet<KCont> {
        match q {
            CExp::Lam(l) => [KCont::Lam(*l, t.clone())].into(),
            CExp::Var(k) => self.store.cont.get(&self.key(*k, t)).cloned().unwrap_or_default(),
        }
    }

    fn apply_cont(&mut self, c: &KCont, d: &KValue, out: &mut Vec<KState>) {
        match c {
            KCont::Halt => {
                self.finals.join(&d.project());
            }
            KCont::Lam(clam, t) => {
                let (u, body) = self.prog.clam(*clam);
                self.bind_user(u, t, d);
                out.push(KState {
                    call: body,
                    time: t.clone(),
                });
            }
        }
    }

    /// Copies the free variables of `lam` from the closure's contour into `t`.
    fn copy_free(&mut self, lam: Label, from: &Contour, t: &Contour) {
        if from == t {
            return;
        }
        for v in self.free[&lam].clone() {
            match self.prog.var(v).kind {
                VarKind::User => {
                    let d = self.lookup_user(v, from);
                    self.bind_user(v, t, &d);
                }
                VarKind::Cont => {
                    let cs = self.store.cont.get(&(v, from.clone())).cloned().unwrap_or_default();
                    for c in cs {
                        self.bind_cont(v, t, c);
                    }
                }
            }
        }
    }

    fn step(&mut self, s: &KState) -> Vec<KState> {
        let mut out = Vec::new();
        let l = s.call;
        match self.prog.call(l).clone() {
            Call::U {
                f: UExp::Prim(op),
                args,
                q,
            } => {
                let ds: Vec<ValueSet> = args.iter().map(|a| self.eval_u(a, &s.time).project()).collect();
                let r = self.universe.apply_prim(op, &ds);
                if r.is_empty() {
                    return out;
                }
                let r = KValue {
                    basic: r,
                    clos: BTreeSet::new(),
                };
                for c in self.eval_k(&q, &s.time) {
                    self.apply_cont(&c, &r, &mut out);
                }
            }
            Call::U { f, args, q } => {
                let fs = self.eval_u(&f, &s.time);
                let ds: Vec<KValue> = args.iter().map(|a| self.eval_u(a, &s.time)).collect();
                let cs = self.eval_k(&q, &s.time);
                let t = self.tick(l, &s.time);
                for (lam, from) in fs.clos {
                    let (params, k, body) = self.prog.ulam(lam);
                    if params.len() != ds.len() {
                        continue;
                    }
                    self.callees.entry(l).or_default().insert(lam);
                    self.copy_free(lam, &from, &t);
                    for (p, d) in params.iter().zip(&ds) {
                        self.bind_user(*p, &t, d);
                    }
                    for c in &cs {
                        self.bind_cont(k, &t, c.clone());
                    }
                    out.push(KState {
                        call: body,
                        time: t.clone(),
                    });
                }
            }
            Call::C { q, arg } => {
                let d = self.eval_u(&arg, &s.time);
                for c in self.eval_k(&q, &s.time) {
                    self.apply_cont(&c, &d, &mut out);
                }
            }
            Call::Branch { test, then, alt } => {
                let d = self.eval_u(&test, &s.time);
                let v = d.project();
                let (t, e) = if v.is_empty() {
                    (false, false)
                } else if self.branch_pruning {
                    (v.may_be_true(), v.may_be_false())
                } else {
                    (true, true)
                };
                for (taken, arm) in [(t, then), (e, alt)] {
                    if taken {
                        self.apply_cont(&KCont::Lam(arm, s.time.clone()), &d, &mut out);
                    }
                }
            }
        }
        out
    }
}

/// Runs k-CFA with `k ∈ {0, 1}`.
pub fn kcfa_analyze(prog: &CpsProgram, k: usize) -> KcfaResult {
    kcfa_analyze_with(prog, k, true)
}

pub fn kcfa_analyze_with(prog: &CpsProgram, k: usize, branch_pruning: bool) -> KcfaResult {
    assert!(k <= 1, "only k = 0 and k = 1 are supported");
    let mut a = Kcfa {
        prog,
        universe: Universe::of_program(prog),
        k,
        branch_pruning,
        free: free_vars(prog),
        store: Store::default(),
        grew: false,
        finals: ValueSet::empty(),
        callees: BTreeMap::new(),
    };
    let t0 = Contour::new();
    for (g, e) in &prog.globals {
        let d = a.eval_u(e, &t0);
        a.bind_user(*g, &t0, &d);
    }
    let (params, kv, body) = prog.ulam(prog.root);
    let inputs: Vec<KValue> = prog.input.iter().map(|e| a.eval_u(e, &t0)).collect();
    for (p, d) in params.iter().zip(&inputs) {
        a.bind_user(*p, &t0, d);
    }
    a.bind_cont(kv, &t0, KCont::Halt);
    let init = KState { call: body, time: t0 };

    let mut seen: HashSet<KState> = HashSet::new();
    let mut order: Vec<KState> = Vec::new();
    seen.insert(init.clone());
    order.push(init);
    let mut passes = 0;
    loop {
        passes += 1;
        a.grew = false;
        let mut i = 0;
        while i < order.len() {
            let s = order[i].clone();
            for n in a.step(&s) {
                if seen.insert(n.clone()) {
                    order.push(n);
                }
            }
            i += 1;
        }
        if !a.grew {
            break;
        }
    }

    let mut flows: BTreeMap<(Label, Var), ValueSet> = prog
        .ref_sites()
        .into_iter()
        .filter(|(_, v)| prog.is_user_var(*v))
        .map(|site| (site, ValueSet::empty()))
        .collect();
    for s in &order {
        for v in prog.call_refs(s.call) {
            if prog.is_user_var(v) {
                let d = a.lookup_user(v, &s.time).project();
                flows.entry((s.call, v)).or_default().join(&d);
            }
        }
    }
    KcfaResult {
        k,
        visited: order.len(),
        passes,
        flows,
        finals: a.finals,
        callees: a.callees,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cps::cps_convert;
    use crate::datum::Datum;
    use crate::frontend;

    fn prog(src: &str) -> CpsProgram {
        cps_convert(&frontend::load(src).unwrap())
    }

    fn int(n: i64) -> ValueSet {
        ValueSet::singleton(Atom::Lit(Datum::Int(n)))
    }

    #[test]
    fn double_identity_merges_under_zero_cfa() {
        let p = prog("((lambda (id) (id 1) (id 2)) (lambda (x) x))");
        let r = kcfa_analyze(&p, 0);
        assert_eq!(r.finals, int(1).joined(&int(2)));
    }

    #[test]
    fn double_identity_is_precise_under_one_cfa() {
        let p = prog("((lambda (id) (let* ((n1 (id 1)) (n2 (id 2))) n2)) (lambda (x) x))");
        let r = kcfa_analyze(&p, 1);
        assert_eq!(r.finals, int(2));
    }

    #[test]
    fn single_use_identity_is_a_constant() {
        let p = prog("(let ((id (lambda (x) x))) (id 5))");
        let r = kcfa_analyze(&p, 0);
        assert_eq!(r.finals, int(5));
    }

    #[test]
    fn len_finishes() {
        let p = prog("(define (len l) (if (pair? l) (+ 1 (len (cdr l))) 0)) (len '(3))");
        for k in [0, 1] {
            let r = kcfa_analyze(&p, k);
            assert!(r.finals.contains(&Atom::Lit(Datum::Int(1))) || r.finals.contains(&Atom::NumTop));
        }
    }
}
