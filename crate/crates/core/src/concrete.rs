//! Concrete Eval/Apply machine for Partitioned CPS.
//!
//! Times are call-label sequences, interned as [`Time`] ids. The variable
//! environment is append-only and shared by all states of one run; each
//! state records how much of it existed when the state was created.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::rc::Rc;

use crate::cps::{CExp, Call, CpsProgram, Label, Node, UExp, Var};
use crate::datum::Datum;

pub const DEFAULT_FUEL: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Time(u32);

impl Time {
    pub const EMPTY: Time = Time(0);
}

pub type Env = Rc<BTreeMap<Var, Time>>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Clos(Label, Env),
    Basic(Datum),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ContValue {
    Clos(Label, Env),
    Halt,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Denotable {
    User(Value),
    Cont(ContValue),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum State {
    Eval {
        call: Label,
        env: Env,
        time: Time,
        mark: usize,
    },
    UApply {
        lam: Label,
        lam_env: Env,
        args: Vec<Value>,
        cont: ContValue,
        time: Time,
        mark: usize,
    },
    CApply {
        cont: ContValue,
        arg: Value,
        time: Time,
        mark: usize,
    },
}

impl State {
    pub fn time(&self) -> Time {
        match self {
            State::Eval { time, .. } | State::UApply { time, .. } | State::CApply { time, .. } => *time,
        }
    }

    /// Length of the variable-environment prefix visible to this state.
    pub fn mark(&self) -> usize {
        match self {
            State::Eval { mark, .. } | State::UApply { mark, .. } | State::CApply { mark, .. } => *mark,
        }
    }

    pub fn is_eval(&self) -> bool {
        matches!(self, State::Eval { .. })
    }

    pub fn is_final(&self) -> bool {
        matches!(
            self,
            State::CApply {
                cont: ContValue::Halt,
                ..
            }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Finished(Value),
    OutOfFuel,
    Stuck { reason: String, state: State },
}

#[derive(Debug)]
pub struct Machine<'p> {
    pub prog: &'p CpsProgram,
    times: Vec<(Label, Time, u32)>,
    ve: Vec<((Var, Time), Denotable)>,
    index: HashMap<(Var, Time), usize>,
}

impl<'p> Machine<'p> {
    pub fn new(prog: &'p CpsProgram) -> Self {
        Machine {
            prog,
            times: vec![(0, Time::EMPTY, 0)],
            ve: Vec::new(),
            index: HashMap::new(),
        }
    }

    fn tick(&mut self, l: Label, t: Time) -> Time {
        let len = self.times[t.0 as usize].2 + 1;
        self.times.push((l, t, len));
        Time(self.times.len() as u32 - 1)
    }

    /// The label sequence of a time, most recent first.
    pub fn time_labels(&self, mut t: Time) -> Vec<Label> {
        let mut out = Vec::new();
        while t != Time::EMPTY {
            let (l, parent, _) = self.times[t.0 as usize];
            out.push(l);
            t = parent;
        }
        out
    }

    pub fn time_len(&self, t: Time) -> usize {
        self.times[t.0 as usize].2 as usize
    }

    fn bind(&mut self, v: Var, t: Time, d: Denotable) {
        let key = (v, t);
        debug_assert!(!self.index.contains_key(&key), "rebinding {v:?} at {t:?}");
        self.index.insert(key, self.ve.len());
        self.ve.push((key, d));
    }

    pub fn lookup(&self, v: Var, t: Time) -> Option<&Denotable> {
        self.index.get(&(v, t)).map(|i| &self.ve[*i].1)
    }

    /// Bindings `((var, time), value)` in creation order, up to a mark.
    pub fn ve_prefix(&self, mark: usize) -> &[((Var, Time), Denotable)] {
        &self.ve[..mark]
    }

    /// The initial state: the root closure applied to the input, with
    /// letrec bindings seeded at the empty time.
    pub fn inject(&mut self) -> State {
        let genv: Env = Rc::new(self.prog.globals.iter().map(|(g, _)| (*g, Time::EMPTY)).collect());
        for (g, e) in &self.prog.globals {
            let v = match e {
                UExp::Lam(l) => Value::Clos(*l, genv.clone()),
                UExp::Lit(d) => Value::Basic(d.clone()),
                other => panic!("unsupported letrec value {other:?}"),
            };
            self.bind(*g, Time::EMPTY, Denotable::User(v));
        }
        let args = self
            .prog
            .input
            .iter()
            .map(|e| match e {
                UExp::Lam(l) => Value::Clos(*l, genv.clone()),
                UExp::Lit(d) => Value::Basic(d.clone()),
                other => panic!("unsupported input {other:?}"),
            })
            .collect();
        State::UApply {
            lam: self.prog.root,
            lam_env: genv,
            args,
            cont: ContValue::Halt,
            time: Time::EMPTY,
            mark: self.ve.len(),
        }
    }

    fn eval_u(&self, e: &UExp, env: &Env) -> Result<Value, String> {
        match e {
            UExp::Lam(l) => Ok(Value::Clos(*l, env.clone())),
            UExp::Lit(d) => Ok(Value::Basic(d.clone())),
            UExp::Var(v) => match self.var_value(*v, env)? {
                Denotable::User(u) => Ok(u.clone()),
                Denotable::Cont(_) => Err(format!("`{}` is a continuation", self.prog.var_name(*v))),
            },
            UExp::Prim(op) => Err(format!("primitive `{op}` used as a value")),
        }
    }

    fn eval_k(&self, q: &CExp, env: &Env) -> Result<ContValue, String> {
        match q {
            CExp::Lam(l) => Ok(ContValue::Clos(*l, env.clone())),
            CExp::Var(v) => match self.var_value(*v, env)? {
                Denotable::Cont(c) => Ok(c.clone()),
                Denotable::User(_) => Err(format!("`{}` is not a continuation", self.prog.var_name(*v))),
            },
        }
    }

    fn var_value(&self, v: Var, env: &Env) -> Result<&Denotable, String> {
        let name = self.prog.var_name(v);
        let t = env
            .get(&v)
            .ok_or_else(|| format!("`{name}` is not in the environment"))?;
        self.lookup(v, *t)
            .ok_or_else(|| format!("`{name}` is unbound at time {:?}", self.time_labels(*t)))
    }

    /// One transition. `Ok(None)` means the state is final.
    pub fn step(&mut self, s: &State) -> Result<Option<State>, String> {
        Ok(Some(match s {
            State::Eval { call, env, time, .. } => {
                let t = self.tick(*call, *time);
                let mark = self.ve.len();
                match self.prog.call(*call) {
                    Call::U {
                        f: UExp::Prim(op),
                        args,
                        q,
                    } => {
                        let mut data = Vec::with_capacity(args.len());
                        for a in args {
                            match self.eval_u(a, env)? {
                                Value::Basic(d) => data.push(d),
                                Value::Clos(..) => return Err(format!("`{op}` applied to a procedure")),
                            }
                        }
                        let r = op
                            .apply(&data)
                            .ok_or_else(|| format!("`{op}` is undefined on {data:?}"))?;
                        State::CApply {
                            cont: self.eval_k(q, env)?,
                            arg: Value::Basic(r),
                            time: t,
                            mark,
                        }
                    }
                    Call::U { f, args, q } => {
                        let (lam, lam_env) = match self.eval_u(f, env)? {
                            Value::Clos(l, e) => (l, e),
                            Value::Basic(d) => return Err(format!("applying non-procedure {d}")),
                        };
                        let args: Vec<Value> = args.iter().map(|a| self.eval_u(a, env)).collect::<Result<_, _>>()?;
                        let arity = self.prog.ulam(lam).0.len();
                        if arity != args.len() {
                            return Err(format!("λ{lam} expects {arity} argument(s), got {}", args.len()));
                        }
                        State::UApply {
                            lam,
                            lam_env,
                            args,
                            cont: self.eval_k(q, env)?,
                            time: t,
                            mark,
                        }
                    }
                    Call::C { q, arg } => State::CApply {
                        cont: self.eval_k(q, env)?,
                        arg: self.eval_u(arg, env)?,
                        time: t,
                        mark,
                    },
                    Call::Branch { test, then, alt } => {
                        let v = self.eval_u(test, env)?;
                        let truthy = !matches!(v, Value::Basic(Datum::Bool(false)));
                        State::CApply {
                            cont: ContValue::Clos(if truthy { *then } else { *alt }, env.clone()),
                            arg: v,
                            time: t,
                            mark,
                        }
                    }
                }
            }
            State::UApply {
                lam,
                lam_env,
                args,
                cont,
                time,
                ..
            } => {
                let Node::ULam { params, k, body } = self.prog.node(*lam) else {
                    return Err(format!("label {lam} is not a user lambda"));
                };
                if params.len() != args.len() {
                    return Err(format!(
                        "λ{lam} expects {} argument(s), got {}",
                        params.len(),
                        args.len()
                    ));
                }
                let mut env = (**lam_env).clone();
                for (u, a) in params.iter().zip(args) {
                    env.insert(*u, *time);
                    self.bind(*u, *time, Denotable::User(a.clone()));
                }
                env.insert(*k, *time);
                self.bind(*k, *time, Denotable::Cont(cont.clone()));
                State::Eval {
                    call: *body,
                    env: Rc::new(env),
                    time: *time,
                    mark: self.ve.len(),
                }
            }
            State::CApply {
                cont: ContValue::Halt, ..
            } => return Ok(None),
            State::CApply {
                cont: ContValue::Clos(clam, cenv),
                arg,
                time,
                ..
            } => {
                let (u, body) = self.prog.clam(*clam);
                let mut env = (**cenv).clone();
                env.insert(u, *time);
                self.bind(u, *time, Denotable::User(arg.clone()));
                State::Eval {
                    call: body,
                    env: Rc::new(env),
                    time: *time,
                    mark: self.ve.len(),
                }
            }
        }))
    }

    /// Runs from the initial state, keeping at most `fuel` transitions.
    /// The returned trace starts with the initial state.
    pub fn trace(&mut self, fuel: u64) -> (Vec<State>, Outcome) {
        let init = self.inject();
        let mut states = vec![init.clone()];
        let outcome = self.drive(fuel, |s| states.push(s.clone()), init);
        (states, outcome)
    }

    pub fn run(&mut self, fuel: u64) -> Outcome {
        let init = self.inject();
        self.drive(fuel, |_| {}, init)
    }

    fn drive(&mut self, fuel: u64, mut sink: impl FnMut(&State), mut s: State) -> Outcome {
        for _ in 0..fuel {
            match self.step(&s) {
                Ok(Some(next)) => {
                    sink(&next);
                    s = next;
                }
                Ok(None) => return self.finish(s),
                Err(reason) => return Outcome::Stuck { reason, state: s },
            }
        }
        if s.is_final() {
            return self.finish(s);
        }
        Outcome::OutOfFuel
    }

    fn finish(&self, s: State) -> Outcome {
        match s {
            State::CApply { arg, .. } => Outcome::Finished(arg),
            _ => unreachable!(),
        }
    }

    /// For every closure in the state, its environment binds none of the
    /// lambda's own binders.
    pub fn envs_have_no_junk(&self, s: &State) -> bool {
        let ok = |l: Label, env: &Env| -> bool {
            let bound: Vec<Var> = match self.prog.node(l) {
                Node::ULam { params, k, .. } => params.iter().copied().chain([*k]).collect(),
                Node::CLam { param, .. } => vec![*param],
                Node::Call(_) => return false,
            };
            bound.iter().all(|v| !env.contains_key(v))
        };
        let value_ok = |v: &Value| match v {
            Value::Clos(l, e) => ok(*l, e),
            Value::Basic(_) => true,
        };
        let cont_ok = |c: &ContValue| match c {
            ContValue::Clos(l, e) => ok(*l, e),
            ContValue::Halt => true,
        };
        let state_ok = match s {
            State::Eval { .. } => true,
            State::UApply {
                lam,
                lam_env,
                args,
                cont,
                ..
            } => ok(*lam, lam_env) && args.iter().all(value_ok) && cont_ok(cont),
            State::CApply { cont, arg, .. } => cont_ok(cont) && value_ok(arg),
        };
        state_ok
            && self.ve[..s.mark()].iter().all(|(_, d)| match d {
                Denotable::User(v) => value_ok(v),
                Denotable::Cont(c) => cont_ok(c),
            })
    }
}

/// Runs a program with the given fuel.
pub fn run(prog: &CpsProgram, fuel: u64) -> Outcome {
    Machine::new(prog).run(fuel)
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Clos(l, _) => write!(f, "#<procedure λ{l}>"),
            Value::Basic(d) => write!(f, "{d}"),
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Finished(v) => write!(f, "{v}"),
            Outcome::OutOfFuel => write!(f, "out of fuel"),
            Outcome::Stuck { reason, .. } => write!(f, "stuck: {reason}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cps::cps_convert;
    use crate::frontend;

    fn prog(src: &str) -> CpsProgram {
        cps_convert(&frontend::load(src).unwrap())
    }

    fn finished(src: &str) -> Datum {
        match run(&prog(src), DEFAULT_FUEL) {
            Outcome::Finished(Value::Basic(d)) => d,
            other => panic!("{src}: {other:?}"),
        }
    }

    #[test]
    fn double_identity_evaluates_to_two() {
        assert_eq!(finished("((lambda (id) (id 1) (id 2)) (lambda (x) x))"), Datum::Int(2));
    }

    #[test]
    fn len_of_singleton_list() {
        assert_eq!(
            finished("(define (len l) (if (pair? l) (+ 1 (len (cdr l))) 0)) (len '(3))"),
            Datum::Int(1)
        );
    }

    #[test]
    fn app_id_sum() {
        assert_eq!(
            finished(
                "(let* ((app (lambda (f e) (f e))) (id (lambda (x) x))
                        (n1 (app id 1)) (n2 (app id 2)))
                   (+ n1 n2))"
            ),
            Datum::Int(3)
        );
    }

    #[test]
    fn omega_runs_out_of_fuel() {
        let p = prog("((lambda (x) (x x)) (lambda (x) (x x)))");
        assert_eq!(run(&p, 1000), Outcome::OutOfFuel);
    }

    #[test]
    fn zero_is_truthy() {
        assert_eq!(finished("(if 0 1 2)"), Datum::Int(1));
        assert_eq!(finished("(if #f 1 2)"), Datum::Int(2));
    }

    #[test]
    fn type_errors_are_stuck() {
        assert!(matches!(run(&prog("(car 1)"), 100), Outcome::Stuck { .. }));
        assert!(matches!(run(&prog("(1 2)"), 100), Outcome::Stuck { .. }));
        assert!(matches!(
            run(&prog("(cons (lambda (x) x) 1)"), 100),
            Outcome::Stuck { .. }
        ));
    }

    #[test]
    fn initial_state_shape() {
        let p = prog("((lambda (id) (id 1) (id 2)) (lambda (x) x))");
        let mut m = Machine::new(&p);
        match m.inject() {
            State::UApply {
                lam, args, cont, time, ..
            } => {
                assert_eq!(lam, p.root);
                assert_eq!(args.len(), 1);
                assert_eq!(cont, ContValue::Halt);
                assert_eq!(time, Time::EMPTY);
                assert!(m.time_labels(time).is_empty());
            }
            s => panic!("{s:?}"),
        }
    }

    #[test]
    fn trace_alternates_and_grows_time() {
        let p = prog("(define (len l) (if (pair? l) (+ 1 (len (cdr l))) 0)) (len '(1 2 3))");
        let mut m = Machine::new(&p);
        let (trace, outcome) = m.trace(DEFAULT_FUEL);
        assert_eq!(outcome, Outcome::Finished(Value::Basic(Datum::Int(3))));
        for w in trace.windows(2) {
            assert_ne!(w[0].is_eval(), w[1].is_eval());
            let (t0, t1) = (m.time_len(w[0].time()), m.time_len(w[1].time()));
            if w[0].is_eval() {
                assert_eq!(t1, t0 + 1);
            } else {
                assert_eq!(w[0].time(), w[1].time());
            }
        }
        assert!(trace.iter().all(|s| m.envs_have_no_junk(s)));
    }

    #[test]
    fn trace_respects_fuel() {
        let p = prog("((lambda (x) (x x)) (lambda (x) (x x)))");
        let (trace, _) = Machine::new(&p).trace(50);
        assert!(trace.len() <= 51);
    }
}
