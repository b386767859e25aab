//! Abstract semantics with explicit frame stacks, the map from concrete to
//! abstract states, and the approximation order between abstract states.

use std::collections::BTreeMap;
use std::fmt;

use crate::concrete::{ContValue, Denotable, Env, Machine, State, Value};
use crate::cps::{compute_maps, CExp, Call, CpsProgram, Label, SyntaxMaps, UExp, Var};
use crate::domain::{Universe, ValueSet};

/// Switches shared by the abstract, local and summarization semantics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct AnalyzerConfig {
    /// Strong update of a stack-referenced operator to the lambda called.
    pub stack_filtering: bool,
    /// One global heap instead of a heap per state.
    pub heap_widening: bool,
    /// Skip branches a definite test value rules out.
    pub branch_pruning: bool,
}

impl Default for AnalyzerConfig {
    fn default() -> Self {
        AnalyzerConfig {
            stack_filtering: true,
            heap_widening: false,
            branch_pruning: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ACont {
    Lam(Label),
    Halt,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Slot {
    User(ValueSet),
    Cont(ACont),
}

pub type Frame = BTreeMap<Var, Slot>;
pub type Heap = BTreeMap<Var, ValueSet>;

/// Stacks are stored bottom first; the top frame is the last element.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AState {
    Eval {
        call: Label,
        stack: Vec<Frame>,
        heap: Heap,
    },
    UApply {
        lam: Label,
        args: Vec<ValueSet>,
        cont: ACont,
        stack: Vec<Frame>,
        heap: Heap,
    },
    CApply {
        cont: ACont,
        arg: ValueSet,
        stack: Vec<Frame>,
        heap: Heap,
    },
}

impl AState {
    pub fn stack(&self) -> &[Frame] {
        match self {
            AState::Eval { stack, .. } | AState::UApply { stack, .. } | AState::CApply { stack, .. } => stack,
        }
    }

    pub fn heap(&self) -> &Heap {
        match self {
            AState::Eval { heap, .. } | AState::UApply { heap, .. } | AState::CApply { heap, .. } => heap,
        }
    }

    pub fn is_final(&self) -> bool {
        matches!(self, AState::CApply { cont: ACont::Halt, .. })
    }
}

/// `h ⊔ [u ↦ d]`.
pub fn heap_join(h: &mut Heap, u: Var, d: &ValueSet) -> bool {
    match h.get_mut(&u) {
        Some(old) => old.join(d),
        None => {
            h.insert(u, d.clone());
            true
        }
    }
}

pub fn frame_user(f: &Frame, v: Var) -> Option<&ValueSet> {
    match f.get(&v) {
        Some(Slot::User(d)) => Some(d),
        _ => None,
    }
}

fn frame_cont(f: &Frame, v: Var) -> Option<ACont> {
    match f.get(&v) {
        Some(Slot::Cont(c)) => Some(*c),
        _ => None,
    }
}

/// The program together with everything the abstract semantics needs.
#[derive(Debug, Clone)]
pub struct Semantics<'p> {
    pub prog: &'p CpsProgram,
    pub maps: SyntaxMaps,
    pub universe: Universe,
    pub config: AnalyzerConfig,
}

impl<'p> Semantics<'p> {
    pub fn new(prog: &'p CpsProgram, config: AnalyzerConfig) -> Self {
        Semantics {
            prog,
            maps: compute_maps(prog),
            universe: Universe::of_program(prog),
            config,
        }
    }

    /// Value of a closed user expression: a lambda or a literal.
    pub fn closed_value(&self, e: &UExp) -> ValueSet {
        match e {
            UExp::Lam(l) => ValueSet::lam(*l),
            UExp::Lit(d) => self.universe.value(d.clone()),
            UExp::Var(_) | UExp::Prim(_) => ValueSet::empty(),
        }
    }

    /// `Âu(e, ψ, tf, h)` against a single frame.
    pub fn eval_u_in(&self, e: &UExp, psi: Label, top: Option<&Frame>, heap: &Heap) -> ValueSet {
        match e {
            UExp::Var(v) if self.maps.is_stack(psi, *v) => {
                top.and_then(|f| frame_user(f, *v)).cloned().unwrap_or_default()
            }
            UExp::Var(v) => heap.get(v).cloned().unwrap_or_default(),
            other => self.closed_value(other),
        }
    }

    pub fn aeval_u(&self, e: &UExp, psi: Label, stack: &[Frame], heap: &Heap) -> ValueSet {
        self.eval_u_in(e, psi, stack.last(), heap)
    }

    pub fn aeval_k(&self, q: &CExp, stack: &[Frame]) -> Option<ACont> {
        match q {
            CExp::Lam(l) => Some(ACont::Lam(*l)),
            CExp::Var(k) => stack.last().and_then(|f| frame_cont(f, *k)),
        }
    }

    /// The abstract initial state.
    pub fn initial(&self) -> AState {
        let mut heap = Heap::new();
        for (g, e) in &self.prog.globals {
            if self.maps.is_heap_var(*g) {
                heap_join(&mut heap, *g, &self.closed_value(e));
            }
        }
        AState::UApply {
            lam: self.prog.root,
            args: self.prog.input.iter().map(|e| self.closed_value(e)).collect(),
            cont: ACont::Halt,
            stack: Vec::new(),
            heap,
        }
    }

    /// Whether a branch on `d` may take the then/else arm.
    pub fn branch_arms(&self, d: &ValueSet) -> (bool, bool) {
        if d.is_empty() {
            (false, false)
        } else if self.config.branch_pruning {
            (d.may_be_true(), d.may_be_false())
        } else {
            (true, true)
        }
    }

    /// Binds a lambda's parameters into the heap for those that are heap
    /// variables.
    pub fn join_heap_params(&self, heap: &mut Heap, params: &[Var], args: &[ValueSet]) {
        for (u, d) in params.iter().zip(args) {
            if self.maps.is_heap_var(*u) {
                heap_join(heap, *u, d);
            }
        }
    }

    /// All successors of an abstract state.
    pub fn step(&self, s: &AState) -> Vec<AState> {
        let mut out = Vec::new();
        match s {
            AState::Eval { call, stack, heap } => {
                let l = *call;
                let pop = |st: &[Frame]| st[..st.len().saturating_sub(1)].to_vec();
                match self.prog.call(l) {
                    Call::U {
                        f: UExp::Prim(op),
                        args,
                        q,
                    } => {
                        let ds: Vec<ValueSet> = args.iter().map(|a| self.aeval_u(a, l, stack, heap)).collect();
                        let r = self.universe.apply_prim(*op, &ds);
                        let Some(c) = self.aeval_k(q, stack) else { return out };
                        if r.is_empty() {
                            return out;
                        }
                        let st = match q {
                            CExp::Var(_) => pop(stack),
                            CExp::Lam(_) => stack.clone(),
                        };
                        out.push(AState::CApply {
                            cont: c,
                            arg: r,
                            stack: st,
                            heap: heap.clone(),
                        });
                    }
                    Call::U { f, args, q } => {
                        let fs = self.aeval_u(f, l, stack, heap);
                        let ds: Vec<ValueSet> = args.iter().map(|a| self.aeval_u(a, l, stack, heap)).collect();
                        let Some(c) = self.aeval_k(q, stack) else { return out };
                        for ulam in fs.lams() {
                            if self.prog.ulam(ulam).0.len() != ds.len() {
                                continue;
                            }
                            let st = match (q, f) {
                                (CExp::Var(_), _) => pop(stack),
                                (CExp::Lam(_), UExp::Var(fv))
                                    if self.config.stack_filtering && self.maps.is_stack(l, *fv) =>
                                {
                                    let mut st = stack.clone();
                                    if let Some(top) = st.last_mut() {
                                        top.insert(*fv, Slot::User(ValueSet::lam(ulam)));
                                    }
                                    st
                                }
                                _ => stack.clone(),
                            };
                            out.push(AState::UApply {
                                lam: ulam,
                                args: ds.clone(),
                                cont: c,
                                stack: st,
                                heap: heap.clone(),
                            });
                        }
                    }
                    Call::C { q, arg } => {
                        let d = self.aeval_u(arg, l, stack, heap);
                        let Some(c) = self.aeval_k(q, stack) else { return out };
                        let st = match q {
                            CExp::Var(_) => pop(stack),
                            CExp::Lam(_) => stack.clone(),
                        };
                        out.push(AState::CApply {
                            cont: c,
                            arg: d,
                            stack: st,
                            heap: heap.clone(),
                        });
                    }
                    Call::Branch { test, then, alt } => {
                        let d = self.aeval_u(test, l, stack, heap);
                        let (t, e) = self.branch_arms(&d);
                        for (taken, arm) in [(t, *then), (e, *alt)] {
                            if taken {
                                out.push(AState::CApply {
                                    cont: ACont::Lam(arm),
                                    arg: d.clone(),
                                    stack: stack.clone(),
                                    heap: heap.clone(),
                                });
                            }
                        }
                    }
                }
            }
            AState::UApply {
                lam,
                args,
                cont,
                stack,
                heap,
            } => {
                let (params, k, body) = self.prog.ulam(*lam);
                if params.len() != args.len() {
                    return out;
                }
                let mut frame: Frame = params
                    .iter()
                    .zip(args)
                    .map(|(u, d)| (*u, Slot::User(d.clone())))
                    .collect();
                frame.insert(k, Slot::Cont(*cont));
                let mut heap = heap.clone();
                self.join_heap_params(&mut heap, params, args);
                let mut stack = stack.clone();
                stack.push(frame);
                out.push(AState::Eval {
                    call: body,
                    stack,
                    heap,
                });
            }
            AState::CApply { cont: ACont::Halt, .. } => {}
            AState::CApply {
                cont: ACont::Lam(clam),
                arg,
                stack,
                heap,
            } => {
                let (u, body) = self.prog.clam(*clam);
                let mut stack = stack.clone();
                let Some(top) = stack.last_mut() else { return out };
                top.insert(u, Slot::User(arg.clone()));
                let mut heap = heap.clone();
                self.join_heap_params(&mut heap, &[u], std::slice::from_ref(arg));
                out.push(AState::Eval {
                    call: body,
                    stack,
                    heap,
                });
            }
        }
        out
    }

    pub fn abstract_value(&self, v: &Value) -> ValueSet {
        match v {
            Value::Clos(l, _) => ValueSet::lam(*l),
            Value::Basic(d) => self.universe.value(d.clone()),
        }
    }

    pub fn abstract_cont(c: &ContValue) -> ACont {
        match c {
            ContValue::Clos(l, _) => ACont::Lam(*l),
            ContValue::Halt => ACont::Halt,
        }
    }

    /// `toStack(LV(ψ), β, ve)`.
    pub fn to_stack(&self, m: &Machine<'_>, psi: Label, env: &Env) -> Vec<Frame> {
        let mut frames = Vec::new();
        let mut next = Some((psi, env.clone()));
        while let Some((psi, env)) = next.take() {
            let mut frame = Frame::new();
            for v in self.maps.lv(psi) {
                let Some(t) = env.get(v) else { continue };
                match m.lookup(*v, *t) {
                    Some(Denotable::User(val)) => {
                        frame.insert(*v, Slot::User(self.abstract_value(val)));
                    }
                    Some(Denotable::Cont(c)) => {
                        frame.insert(*v, Slot::Cont(Self::abstract_cont(c)));
                        if let ContValue::Clos(g, genv) = c {
                            next = Some((*g, genv.clone()));
                        }
                    }
                    None => {}
                }
            }
            frames.push(frame);
        }
        frames.reverse();
        frames
    }

    fn cont_stack(&self, m: &Machine<'_>, c: &ContValue) -> Vec<Frame> {
        match c {
            ContValue::Halt => Vec::new(),
            ContValue::Clos(g, env) => self.to_stack(m, *g, env),
        }
    }

    /// `|ve|ca` for the bindings visible to a state.
    pub fn abstract_heap(&self, m: &Machine<'_>, mark: usize) -> Heap {
        let mut heap = Heap::new();
        self.extend_heap(&mut heap, m, 0, mark);
        heap
    }

    /// Joins the bindings created between two marks into `heap`.
    pub fn extend_heap(&self, heap: &mut Heap, m: &Machine<'_>, from: usize, to: usize) {
        for ((u, _), d) in &m.ve_prefix(to)[from..] {
            if let Denotable::User(v) = d {
                if self.maps.is_heap_var(*u) {
                    heap_join(heap, *u, &self.abstract_value(v));
                }
            }
        }
    }

    /// `|ς|ca`.
    pub fn abstract_state(&self, m: &Machine<'_>, s: &State) -> AState {
        let heap = self.abstract_heap(m, s.mark());
        self.abstract_state_with_heap(m, s, heap)
    }

    /// `|ς|ca` with a precomputed `|ve|ca`.
    pub fn abstract_state_with_heap(&self, m: &Machine<'_>, s: &State, heap: Heap) -> AState {
        match s {
            State::Eval { call, env, .. } => AState::Eval {
                call: *call,
                stack: self.to_stack(m, *call, env),
                heap,
            },
            State::UApply { lam, args, cont, .. } => AState::UApply {
                lam: *lam,
                args: args.iter().map(|a| self.abstract_value(a)).collect(),
                cont: Self::abstract_cont(cont),
                stack: self.cont_stack(m, cont),
                heap,
            },
            State::CApply { cont, arg, .. } => AState::CApply {
                cont: Self::abstract_cont(cont),
                arg: self.abstract_value(arg),
                stack: self.cont_stack(m, cont),
                heap,
            },
        }
    }

    pub fn show_state(&self, s: &AState) -> String {
        ShowState { sem: self, s }.to_string()
    }
}

fn le_frame(a: &Frame, b: &Frame) -> bool {
    a.iter().all(|(v, slot)| match (slot, b.get(v)) {
        (Slot::User(x), Some(Slot::User(y))) => x.le(y),
        (Slot::User(x), None) => x.is_empty(),
        (Slot::Cont(c), Some(Slot::Cont(d))) => c == d,
        _ => false,
    })
}

pub fn le_heap(a: &Heap, b: &Heap) -> bool {
    a.iter().all(|(v, x)| b.get(v).map_or(x.is_empty(), |y| x.le(y)))
}

fn le_stack(a: &[Frame], b: &[Frame]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| le_frame(x, y))
}

/// The approximation order `ς̂1 ⊑ ς̂2`.
pub fn le_state(a: &AState, b: &AState) -> bool {
    match (a, b) {
        (
            AState::Eval {
                call: c1,
                stack: s1,
                heap: h1,
            },
            AState::Eval {
                call: c2,
                stack: s2,
                heap: h2,
            },
        ) => c1 == c2 && le_stack(s1, s2) && le_heap(h1, h2),
        (
            AState::UApply {
                lam: l1,
                args: a1,
                cont: k1,
                stack: s1,
                heap: h1,
            },
            AState::UApply {
                lam: l2,
                args: a2,
                cont: k2,
                stack: s2,
                heap: h2,
            },
        ) => {
            l1 == l2
                && k1 == k2
                && a1.len() == a2.len()
                && a1.iter().zip(a2).all(|(x, y)| x.le(y))
                && le_stack(s1, s2)
                && le_heap(h1, h2)
        }
        (
            AState::CApply {
                cont: k1,
                arg: a1,
                stack: s1,
                heap: h1,
            },
            AState::CApply {
                cont: k2,
                arg: a2,
                stack: s2,
                heap: h2,
            },
        ) => k1 == k2 && a1.le(a2) && le_stack(s1, s2) && le_heap(h1, h2),
        _ => false,
    }
}

struct ShowState<'a, 'p> {
    sem: &'a Semantics<'p>,
    s: &'a AState,
}

impl ShowState<'_, '_> {
    fn frame(&self, f: &Frame, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(out, "[")?;
        for (i, (v, slot)) in f.iter().enumerate() {
            if i > 0 {
                write!(out, " ")?;
            }
            let name = self.sem.prog.var_name(*v);
            match slot {
                Slot::User(d) => write!(out, "{name}↦{d}")?,
                Slot::Cont(c) => write!(out, "{name}↦{}", ShowCont(*c))?,
            }
        }
        write!(out, "]")
    }

    fn stack_heap(&self, st: &[Frame], h: &Heap, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(out, "⟨")?;
        for (i, f) in st.iter().rev().enumerate() {
            if i > 0 {
                write!(out, " :: ")?;
            }
            self.frame(f, out)?;
        }
        write!(out, "⟩, ")?;
        write!(out, "{{")?;
        for (i, (v, d)) in h.iter().enumerate() {
            if i > 0 {
                write!(out, " ")?;
            }
            write!(out, "{}↦{d}", self.sem.prog.var_name(*v))?;
        }
        write!(out, "}}")
    }
}

struct ShowCont(ACont);

impl fmt::Display for ShowCont {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            ACont::Lam(l) => write!(f, "λ{l}"),
            ACont::Halt => write!(f, "halt"),
        }
    }
}

impl fmt::Display for ShowState<'_, '_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.s {
            AState::Eval { call, stack, heap } => {
                write!(f, "({}, ", self.sem.prog.show(*call))?;
                self.stack_heap(stack, heap, f)?;
            }
            AState::UApply {
                lam,
                args,
                cont,
                stack,
                heap,
            } => {
                write!(f, "(λ{lam}, ")?;
                for d in args {
                    write!(f, "{d}, ")?;
                }
                write!(f, "{}, ", ShowCont(*cont))?;
                self.stack_heap(stack, heap, f)?;
            }
            AState::CApply { cont, arg, stack, heap } => {
                write!(f, "({}, {arg}, ", ShowCont(*cont))?;
                self.stack_heap(stack, heap, f)?;
            }
        }
        write!(f, ")")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cps::cps_convert;
    use crate::datum::Datum;
    use crate::domain::Atom;
    use crate::frontend;

    fn prog(src: &str) -> CpsProgram {
        cps_convert(&frontend::load(src).unwrap())
    }

    /// Follows the unique abstract path; panics on branching.
    fn run_deterministic(sem: &Semantics<'_>) -> Vec<AState> {
        let mut states = vec![sem.initial()];
        loop {
            let next = sem.step(states.last().unwrap());
            match next.len() {
                0 => return states,
                1 => states.push(next.into_iter().next().unwrap()),
                n => panic!("{n} successors"),
            }
        }
    }

    #[test]
    fn double_identity_trace() {
        let p = prog("((lambda (id) (let* ((n1 (id 1)) (n2 (id 2))) n2)) (lambda (x) x))");
        let sem = Semantics::new(&p, AnalyzerConfig::default());
        let trace = run_deterministic(&sem);
        assert_eq!(trace.len(), 11);
        let last = trace.last().unwrap();
        assert!(last.is_final());
        match last {
            AState::CApply { arg, stack, heap, .. } => {
                assert_eq!(*arg, ValueSet::singleton(Atom::Lit(Datum::Int(2))));
                assert!(stack.is_empty() && heap.is_empty());
            }
            s => panic!("{s:?}"),
        }
        let max_depth = trace.iter().map(|s| s.stack().len()).max().unwrap();
        assert_eq!(max_depth, 2);
    }

    fn final_value(src: &str) -> ValueSet {
        let p = prog(src);
        let sem = Semantics::new(&p, AnalyzerConfig::default());
        let mut frontier = vec![sem.initial()];
        let mut finals = ValueSet::empty();
        while let Some(s) = frontier.pop() {
            if let AState::CApply {
                cont: ACont::Halt, arg, ..
            } = &s
            {
                finals.join(arg);
            }
            frontier.extend(sem.step(&s));
        }
        finals
    }

    #[test]
    fn eta_expansion_keeps_precision() {
        let v = final_value("((lambda (id) (let* ((n1 (id 1)) (n2 (id 2))) n2)) (lambda (x) ((lambda (y) y) x)))");
        assert_eq!(v, ValueSet::singleton(Atom::Lit(Datum::Int(2))));
    }

    #[test]
    fn heap_reference_merges() {
        let v = final_value("((lambda (id) (let* ((n1 (id 1)) (n2 (id 2))) n2)) (lambda (x) ((lambda (y) x) x)))");
        assert_eq!(
            v,
            ValueSet::from_atoms([Atom::Lit(Datum::Int(1)), Atom::Lit(Datum::Int(2))])
        );
    }

    #[test]
    fn capply_eval_is_deterministic() {
        let p = prog("((lambda (id) (id 1) (id 2)) (lambda (x) x))");
        let sem = Semantics::new(&p, AnalyzerConfig::default());
        for s in run_deterministic(&sem) {
            if let AState::Eval { call, .. } = &s {
                if matches!(p.call(*call), Call::C { .. }) {
                    assert_eq!(sem.step(&s).len(), 1);
                }
            }
        }
    }

    #[test]
    fn order_basics() {
        let p = prog("((lambda (id) (id 1) (id 2)) (lambda (x) x))");
        let sem = Semantics::new(&p, AnalyzerConfig::default());
        let s = sem.initial();
        assert!(le_state(&s, &s));
        let AState::UApply {
            lam, args, cont, heap, ..
        } = s.clone()
        else {
            panic!()
        };
        let deeper = AState::UApply {
            lam,
            args: args.clone(),
            cont,
            stack: vec![Frame::new()],
            heap: heap.clone(),
        };
        assert!(!le_state(&s, &deeper));
        let bigger = AState::UApply {
            lam,
            args: args.iter().map(|d| d.joined(&ValueSet::lam(99))).collect(),
            cont,
            stack: vec![],
            heap,
        };
        assert!(le_state(&s, &bigger));
        assert!(!le_state(&bigger, &s));
    }

    #[test]
    fn heap_join_accumulates() {
        let mut h = Heap::new();
        let x = Var(0);
        assert!(heap_join(&mut h, x, &ValueSet::lam(3)));
        assert!(heap_join(&mut h, x, &ValueSet::lam(4)));
        assert!(!heap_join(&mut h, x, &ValueSet::lam(4)));
        assert_eq!(h[&x].lams().collect::<Vec<_>>(), vec![3, 4]);
    }

    #[test]
    fn abstraction_of_initial_state() {
        let p = prog("((lambda (id) (id 1) (id 2)) (lambda (x) x))");
        let sem = Semantics::new(&p, AnalyzerConfig::default());
        let mut m = Machine::new(&p);
        let init = m.inject();
        assert_eq!(sem.abstract_state(&m, &init), sem.initial());
    }
}
