//! Cross-checks between the concrete machine, the abstract semantics and the
//! summarization algorithm, a random program generator, and the stress run
//! on the witness family.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::abstract_sem::{AState, AnalyzerConfig, Heap, Semantics};
use crate::concrete::{Machine, Outcome, State};
use crate::cps::{CExp, Call, CpsProgram, Label, UExp};
use crate::domain::ValueSet;
use crate::local::{le_local, local_key, LState, StateKind};
use crate::report::compile;
use crate::summarize::{analyze_with, Analysis};

/// Fuel used for concrete traces in differential checks.
pub const CHECK_FUEL: u64 = 10_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counterexample {
    pub check: &'static str,
    pub step: usize,
    pub detail: String,
}

impl fmt::Display for Counterexample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} failed at step {}: {}", self.check, self.step, self.detail)
    }
}

impl std::error::Error for Counterexample {}

/// Abstracts every state of a concrete trace, reusing the heap between
/// consecutive states.
fn abstract_trace(sem: &Semantics<'_>, m: &Machine<'_>, trace: &[State]) -> Vec<AState> {
    let mut heap = Heap::new();
    let mut mark = 0;
    trace
        .iter()
        .map(|s| {
            if s.mark() < mark {
                heap = sem.abstract_heap(m, s.mark());
            } else {
                sem.extend_heap(&mut heap, m, mark, s.mark());
            }
            mark = s.mark();
            sem.abstract_state_with_heap(m, s, heap.clone())
        })
        .collect()
}

fn concrete_trace<'p>(prog: &'p CpsProgram, fuel: u64) -> (Machine<'p>, Vec<State>, Outcome) {
    let mut m = Machine::new(prog);
    let (trace, outcome) = m.trace(fuel);
    (m, trace, outcome)
}

/// Checks that every concrete step is matched by an abstract step from the
/// abstraction of its source. `step` is the abstract transition relation
/// under test. Returns the number of steps checked.
pub fn check_simulation_with(
    sem: &Semantics<'_>,
    fuel: u64,
    step: impl Fn(&Semantics<'_>, &AState) -> Vec<AState>,
) -> Result<usize, Counterexample> {
    let (m, trace, _) = concrete_trace(sem.prog, fuel);
    let abs = abstract_trace(sem, &m, &trace);
    for (i, pair) in abs.windows(2).enumerate() {
        let succs = step(sem, &pair[0]);
        if !succs.iter().any(|s| crate::abstract_sem::le_state(&pair[1], s)) {
            return Err(Counterexample {
                check: "simulation",
                step: i,
                detail: format!(
                    "{} steps to {}, but no abstract successor covers it (successors: {})",
                    sem.show_state(&pair[0]),
                    sem.show_state(&pair[1]),
                    succs.iter().map(|s| sem.show_state(s)).collect::<Vec<_>>().join("; ")
                ),
            });
        }
    }
    Ok(abs.len().saturating_sub(1))
}

pub fn check_simulation(sem: &Semantics<'_>, fuel: u64) -> Result<usize, Counterexample> {
    check_simulation_with(sem, fuel, |s, a| s.step(a))
}

/// Seen targets indexed by syntactic component.
struct TargetIndex<'a> {
    exact: HashSet<&'a LState>,
    by_key: HashMap<(u8, Label), Vec<&'a LState>>,
}

impl<'a> TargetIndex<'a> {
    fn new(a: &'a Analysis) -> Self {
        let mut exact = HashSet::new();
        let mut by_key: HashMap<(u8, Label), Vec<&LState>> = HashMap::new();
        for t in a.seen_targets() {
            exact.insert(t);
            by_key.entry(local_key(t)).or_default().push(t);
        }
        TargetIndex { exact, by_key }
    }

    fn covers(&self, s: &LState) -> bool {
        self.exact.contains(s)
            || self
                .by_key
                .get(&local_key(s))
                .is_some_and(|ts| ts.iter().any(|t| le_local(s, t)))
    }
}

/// Counts from a soundness check.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SoundnessStats {
    pub states: usize,
    pub exact: usize,
    pub finals: usize,
}

/// Checks that the local image of every concrete state is covered by a Seen
/// target, and that final values are covered by Finals.
pub fn check_soundness(sem: &Semantics<'_>, a: &Analysis, fuel: u64) -> Result<SoundnessStats, Counterexample> {
    let (m, trace, _) = concrete_trace(sem.prog, fuel);
    let abs = abstract_trace(sem, &m, &trace);
    let index = TargetIndex::new(a);
    let mut stats = SoundnessStats::default();
    for (i, s) in abs.iter().enumerate() {
        stats.states += 1;
        match sem.localize(s) {
            Some(ls) => {
                if index.exact.contains(&ls) {
                    stats.exact += 1;
                } else if !index.covers(&ls) {
                    return Err(Counterexample {
                        check: "soundness",
                        step: i,
                        detail: format!("{} is not covered by any Seen target", sem.show_local(&ls)),
                    });
                }
            }
            None => {
                let AState::CApply { arg, heap, .. } = s else {
                    unreachable!()
                };
                let heap_ok = |h: &Heap| {
                    let h = if sem.config.heap_widening { &a.global_heap } else { h };
                    heap.iter().all(|(v, d)| h.get(v).is_some_and(|e| d.le(e)))
                };
                if !a.finals.iter().any(|(d, h)| arg.le(d) && heap_ok(h)) {
                    return Err(Counterexample {
                        check: "soundness",
                        step: i,
                        detail: format!("final value {arg} is not covered by Finals"),
                    });
                }
                stats.finals += 1;
            }
        }
    }
    Ok(stats)
}

/// Result of exhaustively exploring the abstract semantics.
#[derive(Debug, Clone)]
pub struct Exploration {
    /// Pairs `(corresponding entry, state)` in local form.
    pub edges: BTreeSet<(LState, LState)>,
    pub finals: BTreeSet<(ValueSet, Heap)>,
    /// Whether the bound cut the exploration short.
    pub truncated: bool,
    pub states: usize,
}

/// Explores every abstract state reachable from the initial one, tracking
/// for each frame the chain of entries linked by tail calls. States deeper
/// than `max_depth` frames are not expanded, and at most `max_states`
/// states are visited.
pub fn explore(sem: &Semantics<'_>, max_depth: usize, max_states: usize) -> Exploration {
    type Chains = Vec<Vec<LState>>;
    let init = sem.initial();
    let init_local = sem.localize(&init).expect("initial state is an entry");
    let mut seen: HashSet<(AState, Chains)> = HashSet::new();
    let mut queue: VecDeque<(AState, Chains)> = VecDeque::new();
    let start = (init, vec![vec![init_local]]);
    seen.insert(start.clone());
    queue.push_back(start);
    let mut out = Exploration {
        edges: BTreeSet::new(),
        finals: BTreeSet::new(),
        truncated: false,
        states: 0,
    };
    while let Some((s, chains)) = queue.pop_front() {
        out.states += 1;
        let Some(ls) = sem.localize(&s) else {
            if let AState::CApply { arg, heap, .. } = &s {
                out.finals.insert((arg.clone(), heap.clone()));
            }
            continue;
        };
        let chain = chains.last().expect("nonempty chain stack");
        if sem.classify(&ls) == StateKind::ExitCEval {
            for e in chain {
                out.edges.insert((e.clone(), ls.clone()));
            }
        } else {
            out.edges.insert((chain.last().unwrap().clone(), ls.clone()));
        }
        if s.stack().len() > max_depth {
            out.truncated = true;
            continue;
        }
        for next in sem.step(&s) {
            let mut c = chains.clone();
            match (&s, &next) {
                (AState::Eval { call, .. }, AState::UApply { .. }) => {
                    let entry = sem.localize(&next).unwrap();
                    match sem.prog.call(*call) {
                        Call::U { q: CExp::Lam(_), .. } => c.push(vec![entry]),
                        _ => {
                            let top = c.last_mut().unwrap();
                            top.retain(|e| *e != entry);
                            top.push(entry);
                        }
                    }
                }
                (AState::Eval { call, .. }, AState::CApply { .. }) => {
                    let returns = matches!(
                        sem.prog.call(*call),
                        Call::C { q: CExp::Var(_), .. }
                            | Call::U {
                                f: UExp::Prim(_),
                                q: CExp::Var(_),
                                ..
                            }
                    );
                    if returns && c.len() > 1 {
                        c.pop();
                    }
                }
                _ => {}
            }
            let key = (next, c);
            if !seen.contains(&key) {
                if seen.len() >= max_states {
                    out.truncated = true;
                    continue;
                }
                seen.insert(key.clone());
                queue.push_back(key);
            }
        }
    }
    out
}

/// Compares the Seen set and Finals against an exhaustive exploration.
/// Every explored edge must be in Seen; when the exploration is complete,
/// Seen must contain nothing else.
pub fn check_completeness(
    sem: &Semantics<'_>,
    a: &Analysis,
    max_depth: usize,
    max_states: usize,
) -> Result<Exploration, Counterexample> {
    let ex = explore(sem, max_depth, max_states);
    let seen: BTreeSet<(LState, LState)> = a
        .seen_states()
        .into_iter()
        .map(|(x, y)| (x.clone(), y.clone()))
        .collect();
    if let Some((e, s)) = ex.edges.iter().find(|edge| !seen.contains(*edge)) {
        return Err(Counterexample {
            check: "soundness (exhaustive)",
            step: 0,
            detail: format!(
                "reachable edge ({}, {}) missing from Seen",
                sem.show_local(e),
                sem.show_local(s)
            ),
        });
    }
    if !ex.truncated {
        if let Some((e, s)) = seen.iter().find(|edge| !ex.edges.contains(*edge)) {
            return Err(Counterexample {
                check: "completeness",
                step: 0,
                detail: format!(
                    "Seen edge ({}, {}) is not reachable",
                    sem.show_local(e),
                    sem.show_local(s)
                ),
            });
        }
        if ex.finals != a.finals {
            return Err(Counterexample {
                check: "completeness",
                step: 0,
                detail: "Finals differ from the reachable final states".into(),
            });
        }
    }
    Ok(ex)
}

/// Types used by the well-typed generator. Functions take numbers and
/// return a number; `Hof` takes a unary function and a number.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ty {
    Num,
    Bool,
    Str,
    Pair,
    Fn(usize),
    Hof,
}

/// Writes random closed programs of roughly `max_size` nodes.
pub struct ProgramGen {
    rng: StdRng,
    fresh: usize,
}

const LITERALS: [&str; 6] = ["0", "1", "2", "\"a\"", "#t", "#f"];
const PRIMS: [(&str, usize); 9] = [
    ("+", 2),
    ("-", 2),
    ("<", 2),
    ("pair?", 1),
    ("null?", 1),
    ("number?", 1),
    ("not", 1),
    ("cons", 2),
    ("car", 1),
];

impl ProgramGen {
    pub fn new(seed: u64) -> Self {
        ProgramGen {
            rng: StdRng::seed_from_u64(seed),
            fresh: 0,
        }
    }

    fn name(&mut self) -> String {
        self.fresh += 1;
        format!("v{}", self.fresh)
    }

    fn leaf(&mut self, scope: &[String]) -> String {
        if !scope.is_empty() && self.rng.gen_bool(0.6) {
            scope[self.rng.gen_range(0..scope.len())].clone()
        } else {
            LITERALS[self.rng.gen_range(0..LITERALS.len())].to_string()
        }
    }

    fn lambda(&mut self, n: usize, scope: &mut Vec<String>, budget: &mut i32) -> String {
        let params: Vec<String> = (0..n).map(|_| self.name()).collect();
        let depth = scope.len();
        scope.extend(params.iter().cloned());
        let body = self.expr(scope, budget);
        scope.truncate(depth);
        format!("(lambda ({}) {body})", params.join(" "))
    }

    fn expr(&mut self, scope: &mut Vec<String>, budget: &mut i32) -> String {
        *budget -= 1;
        if *budget <= 0 {
            return self.leaf(scope);
        }
        match self.rng.gen_range(0..10) {
            0 | 1 => self.leaf(scope),
            2 | 3 => {
                let n = self.rng.gen_range(1..=2);
                self.lambda(n, scope, budget)
            }
            4 | 5 => {
                let n = self.rng.gen_range(1..=2);
                let f = if self.rng.gen_bool(0.5) && !scope.is_empty() {
                    scope[self.rng.gen_range(0..scope.len())].clone()
                } else {
                    self.lambda(n, scope, budget)
                };
                let args: Vec<String> = (0..n).map(|_| self.expr(scope, budget)).collect();
                format!("({f} {})", args.join(" "))
            }
            6 => {
                let (op, n) = PRIMS[self.rng.gen_range(0..PRIMS.len())];
                let args: Vec<String> = (0..n).map(|_| self.expr(scope, budget)).collect();
                format!("({op} {})", args.join(" "))
            }
            7 => {
                let t = self.expr(scope, budget);
                let a = self.expr(scope, budget);
                let b = self.expr(scope, budget);
                format!("(if {t} {a} {b})")
            }
            _ => {
                let x = self.name();
                let e = self.expr(scope, budget);
                scope.push(x.clone());
                let body = self.expr(scope, budget);
                scope.pop();
                format!("(let (({x} {e})) {body})")
            }
        }
    }

    fn typed_leaf(&mut self, ty: Ty, scope: &[(String, Ty)]) -> Option<String> {
        let vars: Vec<&String> = scope.iter().filter(|(_, t)| *t == ty).map(|(n, _)| n).collect();
        if !vars.is_empty() && self.rng.gen_bool(0.6) {
            return Some(vars[self.rng.gen_range(0..vars.len())].clone());
        }
        let lits: &[&str] = match ty {
            Ty::Num => &["0", "1", "2"],
            Ty::Bool => &["#t", "#f"],
            Ty::Str => &["\"a\""],
            _ => return None,
        };
        Some(lits[self.rng.gen_range(0..lits.len())].to_string())
    }

    fn typed_lambda(&mut self, params: Vec<Ty>, scope: &mut Vec<(String, Ty)>, budget: &mut i32) -> String {
        let names: Vec<String> = params.iter().map(|_| self.name()).collect();
        let depth = scope.len();
        scope.extend(names.iter().cloned().zip(params));
        let body = self.typed(Ty::Num, scope, budget);
        scope.truncate(depth);
        format!("(lambda ({}) {body})", names.join(" "))
    }

    /// An expression of type `ty` that never gets stuck.
    fn typed(&mut self, ty: Ty, scope: &mut Vec<(String, Ty)>, budget: &mut i32) -> String {
        *budget -= 1;
        if *budget <= 0 || self.rng.gen_bool(0.2) {
            if let Some(leaf) = self.typed_leaf(ty, scope) {
                return leaf;
            }
        }
        if self.rng.gen_bool(0.15) {
            let bound = [Ty::Num, Ty::Bool, Ty::Pair, Ty::Fn(1), Ty::Fn(2), Ty::Hof][self.rng.gen_range(0..6)];
            let x = self.name();
            let e = self.typed(bound, scope, budget);
            scope.push((x.clone(), bound));
            let body = self.typed(ty, scope, budget);
            scope.pop();
            return format!("(let (({x} {e})) {body})");
        }
        if self.rng.gen_bool(0.1) {
            let t = self.typed(Ty::Bool, scope, budget);
            let a = self.typed(ty, scope, budget);
            let b = self.typed(ty, scope, budget);
            return format!("(if {t} {a} {b})");
        }
        match ty {
            Ty::Num => match self.rng.gen_range(0..5) {
                0 => {
                    let op = if self.rng.gen_bool(0.5) { "+" } else { "-" };
                    let a = self.typed(Ty::Num, scope, budget);
                    let b = self.typed(Ty::Num, scope, budget);
                    format!("({op} {a} {b})")
                }
                1 => {
                    let p = self.typed(Ty::Pair, scope, budget);
                    let op = if self.rng.gen_bool(0.5) { "car" } else { "cdr" };
                    format!("({op} {p})")
                }
                2 | 3 => {
                    let n = self.rng.gen_range(1..=2);
                    let f = self.typed(Ty::Fn(n), scope, budget);
                    let args: Vec<String> = (0..n).map(|_| self.typed(Ty::Num, scope, budget)).collect();
                    format!("({f} {})", args.join(" "))
                }
                _ => {
                    let h = self.typed(Ty::Hof, scope, budget);
                    let f = self.typed(Ty::Fn(1), scope, budget);
                    let x = self.typed(Ty::Num, scope, budget);
                    format!("({h} {f} {x})")
                }
            },
            Ty::Bool => match self.rng.gen_range(0..3) {
                0 => {
                    let a = self.typed(Ty::Num, scope, budget);
                    let b = self.typed(Ty::Num, scope, budget);
                    format!("(< {a} {b})")
                }
                1 => {
                    let b = self.typed(Ty::Bool, scope, budget);
                    format!("(not {b})")
                }
                _ => {
                    let t = [Ty::Num, Ty::Bool, Ty::Pair, Ty::Str][self.rng.gen_range(0..4)];
                    let e = self.typed(t, scope, budget);
                    let op = ["pair?", "null?", "number?"][self.rng.gen_range(0..3)];
                    format!("({op} {e})")
                }
            },
            Ty::Str => "\"a\"".to_string(),
            Ty::Pair => {
                if let Some(v) = self.typed_leaf(Ty::Pair, scope) {
                    return v;
                }
                let a = self.typed(Ty::Num, scope, budget);
                let b = self.typed(Ty::Num, scope, budget);
                format!("(cons {a} {b})")
            }
            Ty::Fn(n) => {
                if let Some(v) = self.typed_leaf(ty, scope) {
                    return v;
                }
                self.typed_lambda(vec![Ty::Num; n], scope, budget)
            }
            Ty::Hof => {
                if let Some(v) = self.typed_leaf(ty, scope) {
                    return v;
                }
                self.typed_lambda(vec![Ty::Fn(1), Ty::Num], scope, budget)
            }
        }
    }

    /// A program text; every variable is bound. Most programs are well
    /// typed and run to completion; the rest may get stuck.
    pub fn program(&mut self, max_size: usize) -> String {
        let mut budget = self.rng.gen_range(1..=max_size.max(1)) as i32;
        if self.rng.gen_bool(0.75) {
            let ty = [Ty::Num, Ty::Bool, Ty::Pair][self.rng.gen_range(0..3)];
            self.typed(ty, &mut Vec::new(), &mut budget)
        } else {
            self.expr(&mut Vec::new(), &mut budget)
        }
    }
}

/// Totals over a batch of random programs.
#[derive(Debug, Clone, Default)]
pub struct BatchSummary {
    pub cases: usize,
    pub simulation_steps: usize,
    pub soundness_states: usize,
    pub exact_hits: usize,
    pub failures: Vec<(String, Counterexample)>,
}

/// Checks one program under a configuration: simulation and soundness
/// against a concrete trace.
pub fn check_program(
    prog: &CpsProgram,
    config: AnalyzerConfig,
    fuel: u64,
) -> Result<(usize, SoundnessStats), Counterexample> {
    let sem = Semantics::new(prog, config);
    let steps = check_simulation(&sem, fuel)?;
    let a = analyze_with(&sem);
    let stats = check_soundness(&sem, &a, fuel)?;
    Ok((steps, stats))
}

/// Generates and checks `cases` random programs.
pub fn run_random(seed: u64, cases: usize, max_size: usize, fuel: u64, config: AnalyzerConfig) -> BatchSummary {
    let mut gen = ProgramGen::new(seed);
    let mut out = BatchSummary::default();
    for _ in 0..cases {
        let src = gen.program(max_size);
        let prog = compile(&src).unwrap_or_else(|e| panic!("generated program does not compile: {e}\n{src}"));
        out.cases += 1;
        match check_program(&prog, config, fuel) {
            Ok((steps, stats)) => {
                out.simulation_steps += steps;
                out.soundness_states += stats.states;
                out.exact_hits += stats.exact;
            }
            Err(c) => out.failures.push((src, c)),
        }
    }
    out
}

/// Visited counts of the default analysis on witness sizes `1..=n`.
pub fn stress_exponential(n: usize) -> Vec<(usize, usize)> {
    (1..=n)
        .map(|i| {
            let prog = compile(&crate::corpus::witness(i)).expect("witness compiles");
            let a = crate::summarize::analyze(&prog, AnalyzerConfig::default());
            (i, a.visited)
        })
        .collect()
}

/// Flow of every user variable reference, keyed by variable name and label,
/// for printing.
pub fn named_flows(
    prog: &CpsProgram,
    flows: &BTreeMap<(Label, crate::cps::Var), ValueSet>,
) -> Vec<(String, Label, ValueSet)> {
    flows
        .iter()
        .map(|((l, v), d)| (prog.var_name(*v).to_string(), *l, d.clone()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sem_of(src: &str) -> CpsProgram {
        compile(src).unwrap()
    }

    const DOUBLE_ID: &str = "((lambda (id) (id 1) (id 2)) (lambda (x) x))";

    #[test]
    fn simulation_holds_on_double_identity() {
        let p = sem_of(DOUBLE_ID);
        let sem = Semantics::new(&p, AnalyzerConfig::default());
        assert!(check_simulation(&sem, CHECK_FUEL).unwrap() > 5);
    }

    #[test]
    fn exploration_matches_seen_exactly() {
        let p = sem_of(DOUBLE_ID);
        let sem = Semantics::new(&p, AnalyzerConfig::default());
        let a = analyze_with(&sem);
        let ex = check_completeness(&sem, &a, 64, 100_000).unwrap();
        assert!(!ex.truncated);
        assert_eq!(ex.edges.len(), 9);
    }

    #[test]
    fn generator_is_deterministic_and_closed() {
        let a: Vec<String> = {
            let mut g = ProgramGen::new(7);
            (0..20).map(|_| g.program(30)).collect()
        };
        let mut g = ProgramGen::new(7);
        for src in &a {
            assert_eq!(&g.program(30), src);
            compile(src).unwrap();
        }
    }

    #[test]
    fn mutated_step_is_caught() {
        let p = sem_of(DOUBLE_ID);
        let sem = Semantics::new(&p, AnalyzerConfig::default());
        // Keep the callee's frame on returns.
        let broken = |s: &Semantics<'_>, a: &AState| {
            let mut out = s.step(a);
            if let AState::Eval { call, stack, .. } = a {
                if matches!(s.prog.call(*call), Call::C { q: CExp::Var(_), .. }) {
                    for n in &mut out {
                        if let AState::CApply { stack: st, .. } = n {
                            *st = stack.clone();
                        }
                    }
                }
            }
            out
        };
        let err = check_simulation_with(&sem, CHECK_FUEL, broken).unwrap_err();
        assert_eq!(err.check, "simulation");
    }
}
