//! The summarization workset algorithm over local states.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};

use crate::abstract_sem::{heap_join, AnalyzerConfig, Heap, Semantics};
use crate::cps::{CpsProgram, Label, UExp, Var};
use crate::domain::ValueSet;
use crate::local::{LState, StateKind};

pub type StateId = usize;
pub type Edge = (StateId, StateId);

/// Everything the algorithm computed. States are interned; edges and
/// triples refer to them by index.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub config: AnalyzerConfig,
    pub states: Vec<LState>,
    pub initial: StateId,
    pub seen: BTreeSet<Edge>,
    pub summary: BTreeSet<Edge>,
    pub callers: BTreeSet<(StateId, StateId, StateId)>,
    pub tcallers: BTreeSet<(StateId, StateId, StateId)>,
    /// Values (with heaps) that reach `halt`.
    pub finals: BTreeSet<(ValueSet, Heap)>,
    /// `(call site, callee, return state)` for every return built by `Update`.
    pub returns: BTreeSet<(Label, Label, StateId)>,
    /// The global heap under heap widening; empty otherwise.
    pub global_heap: Heap,
    /// Edges inserted into Work, summed over restarts.
    pub visited: usize,
    pub iterations: usize,
    pub passes: usize,
    pub flows: BTreeMap<(Label, Var), ValueSet>,
}

impl Analysis {
    pub fn state(&self, id: StateId) -> &LState {
        &self.states[id]
    }

    pub fn final_value(&self) -> ValueSet {
        let mut v = ValueSet::empty();
        for (d, _) in &self.finals {
            v.join(d);
        }
        v
    }

    /// Targets of Seen edges.
    pub fn seen_targets(&self) -> BTreeSet<&LState> {
        self.seen.iter().map(|(_, t)| &self.states[*t]).collect()
    }

    pub fn seen_states(&self) -> BTreeSet<(&LState, &LState)> {
        self.seen
            .iter()
            .map(|(a, b)| (&self.states[*a], &self.states[*b]))
            .collect()
    }

    /// Flow set at a reference site; empty if never reached.
    pub fn flow(&self, l: Label, v: Var) -> ValueSet {
        self.flows.get(&(l, v)).cloned().unwrap_or_default()
    }
}

struct Run<'s, 'p> {
    sem: &'s Semantics<'p>,
    states: Vec<LState>,
    index: HashMap<LState, StateId>,
    seen: HashSet<Edge>,
    seen_order: Vec<Edge>,
    work: VecDeque<Edge>,
    summary: HashSet<Edge>,
    summary_by_entry: HashMap<StateId, Vec<StateId>>,
    callers: HashSet<(StateId, StateId, StateId)>,
    callers_by_entry: HashMap<StateId, Vec<(StateId, StateId)>>,
    tcallers: HashSet<(StateId, StateId, StateId)>,
    tcallers_by_entry: HashMap<StateId, Vec<(StateId, StateId)>>,
    finals: BTreeSet<(ValueSet, Heap)>,
    returns: BTreeSet<(Label, Label, StateId)>,
    succ_cache: HashMap<StateId, Vec<StateId>>,
    heap: Heap,
    heap_grew: bool,
    initial: StateId,
    visited: usize,
    iterations: usize,
}

impl<'s, 'p> Run<'s, 'p> {
    fn new(sem: &'s Semantics<'p>, heap: Heap) -> Self {
        let mut run = Run {
            sem,
            states: Vec::new(),
            index: HashMap::new(),
            seen: HashSet::new(),
            seen_order: Vec::new(),
            work: VecDeque::new(),
            summary: HashSet::new(),
            summary_by_entry: HashMap::new(),
            callers: HashSet::new(),
            callers_by_entry: HashMap::new(),
            tcallers: HashSet::new(),
            tcallers_by_entry: HashMap::new(),
            finals: BTreeSet::new(),
            returns: BTreeSet::new(),
            succ_cache: HashMap::new(),
            heap,
            heap_grew: false,
            initial: 0,
            visited: 0,
            iterations: 0,
        };
        let init = sem.localize(&sem.initial()).expect("initial state is an entry");
        run.initial = run.intern(init);
        run.propagate(run.initial, run.initial);
        run
    }

    fn intern(&mut self, s: LState) -> StateId {
        if let Some(id) = self.index.get(&s) {
            return *id;
        }
        let id = self.states.len();
        self.states.push(s.clone());
        self.index.insert(s, id);
        id
    }

    fn propagate(&mut self, a: StateId, b: StateId) {
        if self.seen.insert((a, b)) {
            self.seen_order.push((a, b));
            self.work.push_back((a, b));
            self.visited += 1;
        }
    }

    fn lookup_heap<'a>(&'a self, s: &'a LState) -> &'a Heap {
        if self.sem.config.heap_widening {
            &self.heap
        } else {
            s.heap()
        }
    }

    fn succ(&mut self, id: StateId) -> Vec<StateId> {
        let widening = self.sem.config.heap_widening;
        if !widening {
            if let Some(ids) = self.succ_cache.get(&id) {
                return ids.clone();
            }
        }
        let mut writes = Vec::new();
        let s = &self.states[id];
        let next = self.sem.lsucc(s, self.lookup_heap(s), &mut writes);
        if widening {
            for (u, d) in &writes {
                self.heap_grew |= heap_join(&mut self.heap, *u, d);
            }
        }
        let ids: Vec<StateId> = next.into_iter().map(|n| self.intern(n)).collect();
        if !widening {
            self.succ_cache.insert(id, ids.clone());
        }
        ids
    }

    fn exit_value(&self, exit: StateId) -> Option<ValueSet> {
        let s = &self.states[exit];
        self.sem.exit_value(s, self.lookup_heap(s))
    }

    fn update(&mut self, s1: StateId, s2: StateId, s3: StateId, s4: StateId) {
        let Some(d) = self.exit_value(s4) else { return };
        let LState::Entry { lam: callee, .. } = self.states[s3] else {
            panic!("callee state is not an entry")
        };
        let ret = self
            .sem
            .return_state(&self.states[s2], callee, d, self.states[s4].heap());
        let LState::Eval { call, .. } = self.states[s2] else {
            unreachable!()
        };
        let id = self.intern(ret);
        self.returns.insert((call, callee, id));
        self.propagate(s1, id);
    }

    fn final_state(&mut self, s: StateId) {
        if let Some(d) = self.exit_value(s) {
            let h = self.states[s].heap().clone();
            self.finals.insert((d, h));
        }
    }

    fn run(&mut self) {
        while let Some((s1, s2)) = self.work.pop_front() {
            self.iterations += 1;
            match self.sem.classify(&self.states[s2]) {
                StateKind::Entry | StateKind::CApply | StateKind::Inner => {
                    for s3 in self.succ(s2) {
                        self.propagate(s1, s3);
                    }
                }
                StateKind::Call => {
                    for s3 in self.succ(s2) {
                        self.propagate(s3, s3);
                        if self.callers.insert((s1, s2, s3)) {
                            self.callers_by_entry.entry(s3).or_default().push((s1, s2));
                        }
                        let exits = self.summary_by_entry.get(&s3).cloned().unwrap_or_default();
                        for s4 in exits {
                            self.update(s1, s2, s3, s4);
                        }
                    }
                }
                StateKind::ExitCEval => {
                    if s1 == self.initial {
                        self.final_state(s2);
                    } else if self.summary.insert((s1, s2)) {
                        self.summary_by_entry.entry(s1).or_default().push(s2);
                    }
                    let callers = self.callers_by_entry.get(&s1).cloned().unwrap_or_default();
                    for (s3, s4) in callers {
                        self.update(s3, s4, s1, s2);
                    }
                    let tcallers = self.tcallers_by_entry.get(&s1).cloned().unwrap_or_default();
                    for (s3, _) in tcallers {
                        self.propagate(s3, s2);
                    }
                }
                StateKind::ExitTC => {
                    for s3 in self.succ(s2) {
                        self.propagate(s3, s3);
                        if self.tcallers.insert((s1, s2, s3)) {
                            self.tcallers_by_entry.entry(s3).or_default().push((s1, s2));
                        }
                        let exits = self.summary_by_entry.get(&s3).cloned().unwrap_or_default();
                        for s4 in exits {
                            self.propagate(s1, s4);
                        }
                    }
                }
            }
        }
    }
}

/// Runs the summarization algorithm on a program.
pub fn analyze(prog: &CpsProgram, config: AnalyzerConfig) -> Analysis {
    let sem = Semantics::new(prog, config);
    analyze_with(&sem)
}

pub fn analyze_with(sem: &Semantics<'_>) -> Analysis {
    let mut heap = Heap::new();
    if sem.config.heap_widening {
        if let crate::abstract_sem::AState::UApply { heap: h, .. } = sem.initial() {
            heap = h;
        }
    }
    let mut visited = 0;
    let mut passes = 0;
    let mut iterations = 0;
    loop {
        let mut run = Run::new(sem, heap);
        run.run();
        visited += run.visited;
        iterations += run.iterations;
        passes += 1;
        if run.heap_grew {
            heap = run.heap;
            continue;
        }
        let flows = flow_map(sem, &run);
        let finals = if sem.config.heap_widening {
            run.finals.into_iter().map(|(d, _)| (d, run.heap.clone())).collect()
        } else {
            run.finals
        };
        return Analysis {
            config: sem.config,
            initial: run.initial,
            seen: run.seen_order.iter().copied().collect(),
            summary: run.summary.into_iter().collect(),
            callers: run.callers.into_iter().collect(),
            tcallers: run.tcallers.into_iter().collect(),
            finals,
            returns: run.returns,
            global_heap: run.heap,
            states: run.states,
            visited,
            iterations,
            passes,
            flows,
        };
    }
}

fn flow_map(sem: &Semantics<'_>, run: &Run<'_, '_>) -> BTreeMap<(Label, Var), ValueSet> {
    let prog = sem.prog;
    let mut flows: BTreeMap<(Label, Var), ValueSet> = prog
        .ref_sites()
        .into_iter()
        .filter(|(_, v)| prog.is_user_var(*v))
        .map(|site| (site, ValueSet::empty()))
        .collect();
    let targets: BTreeSet<StateId> = run.seen_order.iter().map(|(_, t)| *t).collect();
    for t in targets {
        let s = &run.states[t];
        let LState::Eval { call, frame, .. } = s else { continue };
        let heap = run.lookup_heap(s);
        for v in prog.call_refs(*call) {
            if prog.is_user_var(v) {
                let d = sem.leval_u(&UExp::Var(v), *call, frame, heap);
                flows.entry((*call, v)).or_default().join(&d);
            }
        }
    }
    flows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cps::cps_convert;
    use crate::datum::Datum;
    use crate::domain::Atom;
    use crate::frontend;
    use crate::local::UFrame;

    fn prog(src: &str) -> CpsProgram {
        cps_convert(&frontend::load(src).unwrap())
    }

    fn int(n: i64) -> ValueSet {
        ValueSet::singleton(Atom::Lit(Datum::Int(n)))
    }

    #[test]
    fn double_identity_golden_run() {
        let p = prog("((lambda (id) (id 1) (id 2)) (lambda (x) x))");
        let a = analyze(&p, AnalyzerConfig::default());
        let id = p.var_by_name("id").unwrap();
        let u = p.var_by_name("u").unwrap();
        let x = p.var_by_name("x").unwrap();
        let (_, _, body) = p.ulam(p.root);
        let crate::cps::Call::U { args, q, .. } = p.call(body).clone() else {
            panic!()
        };
        let crate::cps::CExp::Lam(clam) = q else { panic!() };
        assert!(matches!(args[0], UExp::Lit(_)));
        let UExp::Lam(ident) = p.input[0] else { panic!() };
        let (_, _, ident_body) = p.ulam(ident);
        let (_, tail_call) = p.clam(clam);
        let h = Heap::new();
        let frame = |pairs: Vec<(Var, ValueSet)>| pairs.into_iter().collect::<UFrame>();
        let s_i = LState::Entry {
            lam: p.root,
            args: vec![ValueSet::lam(ident)],
            heap: h.clone(),
        };
        let s1 = LState::Eval {
            call: body,
            frame: frame(vec![(id, ValueSet::lam(ident))]),
            heap: h.clone(),
        };
        let s2 = LState::Entry {
            lam: ident,
            args: vec![int(1)],
            heap: h.clone(),
        };
        let s3 = LState::Eval {
            call: ident_body,
            frame: frame(vec![(x, int(1))]),
            heap: h.clone(),
        };
        let s4 = LState::CApply {
            cont: clam,
            arg: int(1),
            frame: frame(vec![(id, ValueSet::lam(ident))]),
            heap: h.clone(),
        };
        let s5 = LState::Eval {
            call: tail_call,
            frame: frame(vec![(id, ValueSet::lam(ident)), (u, int(1))]),
            heap: h.clone(),
        };
        let s6 = LState::Entry {
            lam: ident,
            args: vec![int(2)],
            heap: h.clone(),
        };
        let s7 = LState::Eval {
            call: ident_body,
            frame: frame(vec![(x, int(2))]),
            heap: h.clone(),
        };

        let st = |i: StateId| a.state(i).clone();
        let seen: BTreeSet<(LState, LState)> = a.seen.iter().map(|(x, y)| (st(*x), st(*y))).collect();
        let expected: BTreeSet<(LState, LState)> = [
            (&s_i, &s_i),
            (&s_i, &s1),
            (&s2, &s2),
            (&s2, &s3),
            (&s_i, &s4),
            (&s_i, &s5),
            (&s6, &s6),
            (&s6, &s7),
            (&s_i, &s7),
        ]
        .into_iter()
        .map(|(x, y)| (x.clone(), y.clone()))
        .collect();
        assert_eq!(seen, expected);
        assert_eq!(a.visited, 9);

        let summary: BTreeSet<(LState, LState)> = a.summary.iter().map(|(x, y)| (st(*x), st(*y))).collect();
        assert_eq!(summary, [(s2.clone(), s3), (s6.clone(), s7)].into_iter().collect());
        let callers: Vec<_> = a.callers.iter().map(|(x, y, z)| (st(*x), st(*y), st(*z))).collect();
        assert_eq!(callers, vec![(s_i.clone(), s1, s2)]);
        let tcallers: Vec<_> = a.tcallers.iter().map(|(x, y, z)| (st(*x), st(*y), st(*z))).collect();
        assert_eq!(tcallers, vec![(s_i, s5, s6)]);
        assert_eq!(a.finals, [(int(2), Heap::new())].into_iter().collect());
    }

    #[test]
    fn let_star_double_identity_returns_two() {
        let p = prog("((lambda (id) (let* ((n1 (id 1)) (n2 (id 2))) n2)) (lambda (x) x))");
        let a = analyze(&p, AnalyzerConfig::default());
        assert_eq!(a.final_value(), int(2));
    }

    #[test]
    fn len_of_singleton_list() {
        let p = prog("(define (len l) (if (pair? l) (+ 1 (len (cdr l))) 0)) (len '(3))");
        let a = analyze(&p, AnalyzerConfig::default());
        assert_eq!(a.final_value(), int(1));
    }

    #[test]
    fn flows_join_over_entries() {
        let p = prog("((lambda (id) (id 1) (id 2)) (lambda (x) x))");
        let a = analyze(&p, AnalyzerConfig::default());
        let x = p.var_by_name("x").unwrap();
        let UExp::Lam(ident) = p.input[0] else { panic!() };
        let body = p.ulam(ident).2;
        assert_eq!(a.flow(body, x), int(1).joined(&int(2)));
    }

    #[test]
    fn heap_widening_terminates_and_covers_default() {
        let src = "(define (len l) (if (pair? l) (+ 1 (len (cdr l))) 0)) (len '(1 2 3))";
        let p = prog(src);
        let d = analyze(&p, AnalyzerConfig::default());
        let w = analyze(
            &p,
            AnalyzerConfig {
                heap_widening: true,
                ..Default::default()
            },
        );
        assert!(d.final_value().le(&w.final_value()));
        assert!(w.passes >= 1);
    }
}
