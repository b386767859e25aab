//! Local semantics: states that keep only the top frame, their classification,
//! and the projection from abstract states.

use std::collections::BTreeMap;

use crate::abstract_sem::{heap_join, ACont, AState, Frame, Heap, Semantics, Slot};
use crate::cps::{CExp, Call, Label, UExp, Var};
use crate::domain::ValueSet;

/// The user bindings of a frame.
pub type UFrame = BTreeMap<Var, ValueSet>;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LState {
    Eval {
        call: Label,
        frame: UFrame,
        heap: Heap,
    },
    Entry {
        lam: Label,
        args: Vec<ValueSet>,
        heap: Heap,
    },
    CApply {
        cont: Label,
        arg: ValueSet,
        frame: UFrame,
        heap: Heap,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StateKind {
    Entry,
    ExitCEval,
    ExitTC,
    Call,
    Inner,
    CApply,
}

impl LState {
    pub fn heap(&self) -> &Heap {
        match self {
            LState::Eval { heap, .. } | LState::Entry { heap, .. } | LState::CApply { heap, .. } => heap,
        }
    }

    pub fn frame(&self) -> Option<&UFrame> {
        match self {
            LState::Eval { frame, .. } | LState::CApply { frame, .. } => Some(frame),
            LState::Entry { .. } => None,
        }
    }
}

fn user_bindings(stack: &[Frame]) -> UFrame {
    stack
        .last()
        .map(|f| {
            f.iter()
                .filter_map(|(v, s)| match s {
                    Slot::User(d) => Some((*v, d.clone())),
                    Slot::Cont(_) => None,
                })
                .collect()
        })
        .unwrap_or_default()
}

impl<'p> Semantics<'p> {
    /// `|ς̂|al`. Final states have no local counterpart.
    pub fn localize(&self, s: &AState) -> Option<LState> {
        let heap = |h: &Heap| {
            if self.config.heap_widening {
                Heap::new()
            } else {
                h.clone()
            }
        };
        Some(match s {
            AState::Eval { call, stack, heap: h } => LState::Eval {
                call: *call,
                frame: user_bindings(stack),
                heap: heap(h),
            },
            AState::UApply { lam, args, heap: h, .. } => LState::Entry {
                lam: *lam,
                args: args.clone(),
                heap: heap(h),
            },
            AState::CApply {
                cont: ACont::Lam(c),
                arg,
                stack,
                heap: h,
            } => LState::CApply {
                cont: *c,
                arg: arg.clone(),
                frame: user_bindings(stack),
                heap: heap(h),
            },
            AState::CApply { cont: ACont::Halt, .. } => return None,
        })
    }

    pub fn classify(&self, s: &LState) -> StateKind {
        match s {
            LState::Entry { .. } => StateKind::Entry,
            LState::CApply { .. } => StateKind::CApply,
            LState::Eval { call, .. } => match self.prog.call(*call) {
                Call::U {
                    f: UExp::Prim(_),
                    q: CExp::Var(_),
                    ..
                } => StateKind::ExitCEval,
                Call::U {
                    f: UExp::Prim(_),
                    q: CExp::Lam(_),
                    ..
                } => StateKind::Inner,
                Call::U { q: CExp::Var(_), .. } => StateKind::ExitTC,
                Call::U { q: CExp::Lam(_), .. } => StateKind::Call,
                Call::C { q: CExp::Var(_), .. } => StateKind::ExitCEval,
                Call::C { q: CExp::Lam(_), .. } | Call::Branch { .. } => StateKind::Inner,
            },
        }
    }

    /// `Ãu(e, ψ, tf, h)`.
    pub fn leval_u(&self, e: &UExp, psi: Label, frame: &UFrame, heap: &Heap) -> ValueSet {
        match e {
            UExp::Var(v) if self.maps.is_stack(psi, *v) => frame.get(v).cloned().unwrap_or_default(),
            UExp::Var(v) => heap.get(v).cloned().unwrap_or_default(),
            other => self.closed_value(other),
        }
    }

    fn prim_result(&self, call: Label, frame: &UFrame, heap: &Heap) -> Option<ValueSet> {
        let Call::U {
            f: UExp::Prim(op),
            args,
            ..
        } = self.prog.call(call)
        else {
            return None;
        };
        let ds: Vec<ValueSet> = args.iter().map(|a| self.leval_u(a, call, frame, heap)).collect();
        Some(self.universe.apply_prim(*op, &ds))
    }

    /// Value an exit state returns to its caller, or `None` if it returns
    /// nothing.
    pub fn exit_value(&self, s: &LState, heap: &Heap) -> Option<ValueSet> {
        let LState::Eval { call, frame, .. } = s else {
            return None;
        };
        match self.prog.call(*call) {
            Call::C { arg, .. } => Some(self.leval_u(arg, *call, frame, heap)),
            Call::U { f: UExp::Prim(_), .. } => self.prim_result(*call, frame, heap).filter(|r| !r.is_empty()),
            _ => None,
        }
    }

    fn next_heap(&self, heap: &Heap, writes: &[(Var, ValueSet)]) -> Heap {
        if self.config.heap_widening {
            return Heap::new();
        }
        let mut h = heap.clone();
        for (u, d) in writes {
            heap_join(&mut h, *u, d);
        }
        h
    }

    /// Local successors. `heap` is used for lookups: the state's own heap, or
    /// the global one when widening. Heap-variable bindings made by the step
    /// are appended to `writes`.
    pub fn lsucc(&self, s: &LState, heap: &Heap, writes: &mut Vec<(Var, ValueSet)>) -> Vec<LState> {
        let mut out = Vec::new();
        match s {
            LState::Entry { lam, args, .. } => {
                let (params, _, body) = self.prog.ulam(*lam);
                if params.len() != args.len() {
                    return out;
                }
                let start = writes.len();
                for (u, d) in params.iter().zip(args) {
                    if self.maps.is_heap_var(*u) {
                        writes.push((*u, d.clone()));
                    }
                }
                out.push(LState::Eval {
                    call: body,
                    frame: params.iter().copied().zip(args.iter().cloned()).collect(),
                    heap: self.next_heap(heap, &writes[start..]),
                });
            }
            LState::CApply { cont, arg, frame, .. } => {
                let (u, body) = self.prog.clam(*cont);
                let mut frame = frame.clone();
                frame.insert(u, arg.clone());
                let start = writes.len();
                if self.maps.is_heap_var(u) {
                    writes.push((u, arg.clone()));
                }
                out.push(LState::Eval {
                    call: body,
                    frame,
                    heap: self.next_heap(heap, &writes[start..]),
                });
            }
            LState::Eval { call, frame, heap: own } => {
                let l = *call;
                match self.prog.call(l) {
                    Call::U {
                        f: UExp::Prim(_), q, ..
                    } => {
                        let CExp::Lam(c) = q else { return out };
                        let r = self.prim_result(l, frame, heap).unwrap_or_default();
                        if !r.is_empty() {
                            out.push(LState::CApply {
                                cont: *c,
                                arg: r,
                                frame: frame.clone(),
                                heap: own.clone(),
                            });
                        }
                    }
                    Call::U { f, args, .. } => {
                        let fs = self.leval_u(f, l, frame, heap);
                        let ds: Vec<ValueSet> = args.iter().map(|a| self.leval_u(a, l, frame, heap)).collect();
                        for ulam in fs.lams() {
                            if self.prog.ulam(ulam).0.len() == ds.len() {
                                out.push(LState::Entry {
                                    lam: ulam,
                                    args: ds.clone(),
                                    heap: own.clone(),
                                });
                            }
                        }
                    }
                    Call::C { q: CExp::Lam(c), arg } => out.push(LState::CApply {
                        cont: *c,
                        arg: self.leval_u(arg, l, frame, heap),
                        frame: frame.clone(),
                        heap: own.clone(),
                    }),
                    Call::C { q: CExp::Var(_), .. } => {}
                    Call::Branch { test, then, alt } => {
                        let d = self.leval_u(test, l, frame, heap);
                        let (t, e) = self.branch_arms(&d);
                        for (taken, arm) in [(t, *then), (e, *alt)] {
                            if taken {
                                out.push(LState::CApply {
                                    cont: arm,
                                    arg: d.clone(),
                                    frame: frame.clone(),
                                    heap: own.clone(),
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Return state for a call `ς2` whose callee `callee` exits through `ς4`.
    pub fn return_state(&self, call_state: &LState, callee: Label, exit_val: ValueSet, exit_heap: &Heap) -> LState {
        let LState::Eval { call, frame, .. } = call_state else {
            panic!("return to a non-call state")
        };
        let Call::U { f, q: CExp::Lam(c), .. } = self.prog.call(*call) else {
            panic!("return to a call without a continuation lambda")
        };
        let mut frame = frame.clone();
        if let UExp::Var(fv) = f {
            if self.config.stack_filtering && self.maps.is_stack(*call, *fv) {
                frame.insert(*fv, ValueSet::lam(callee));
            }
        }
        LState::CApply {
            cont: *c,
            arg: exit_val,
            frame,
            heap: if self.config.heap_widening {
                Heap::new()
            } else {
                exit_heap.clone()
            },
        }
    }

    pub fn show_local(&self, s: &LState) -> String {
        let prog = self.prog;
        let frame = |f: &UFrame| {
            let parts: Vec<String> = f.iter().map(|(v, d)| format!("{}↦{d}", prog.var_name(*v))).collect();
            format!("[{}]", parts.join(" "))
        };
        match s {
            LState::Eval { call, frame: f, heap } => {
                format!("({}, {}, {})", prog.show(*call), frame(f), frame(heap))
            }
            LState::Entry { lam, args, heap } => {
                let ds: Vec<String> = args.iter().map(|d| d.to_string()).collect();
                format!("(λ{lam}, {}, {})", ds.join(", "), frame(heap))
            }
            LState::CApply {
                cont,
                arg,
                frame: f,
                heap,
            } => {
                format!("(λ{cont}, {arg}, {}, {})", frame(f), frame(heap))
            }
        }
    }
}

fn le_frame(a: &UFrame, b: &UFrame) -> bool {
    a.iter().all(|(v, x)| b.get(v).map_or(x.is_empty(), |y| x.le(y)))
}

/// The approximation order on local states.
pub fn le_local(a: &LState, b: &LState) -> bool {
    match (a, b) {
        (
            LState::Eval {
                call: c1,
                frame: f1,
                heap: h1,
            },
            LState::Eval {
                call: c2,
                frame: f2,
                heap: h2,
            },
        ) => c1 == c2 && le_frame(f1, f2) && le_frame(h1, h2),
        (
            LState::Entry {
                lam: l1,
                args: a1,
                heap: h1,
            },
            LState::Entry {
                lam: l2,
                args: a2,
                heap: h2,
            },
        ) => l1 == l2 && a1.len() == a2.len() && a1.iter().zip(a2).all(|(x, y)| x.le(y)) && le_frame(h1, h2),
        (
            LState::CApply {
                cont: c1,
                arg: a1,
                frame: f1,
                heap: h1,
            },
            LState::CApply {
                cont: c2,
                arg: a2,
                frame: f2,
                heap: h2,
            },
        ) => c1 == c2 && a1.le(a2) && le_frame(f1, f2) && le_frame(h1, h2),
        _ => false,
    }
}

/// Syntactic component of a local state, for indexing.
pub fn local_key(s: &LState) -> (u8, Label) {
    match s {
        LState::Eval { call, .. } => (0, *call),
        LState::Entry { lam, .. } => (1, *lam),
        LState::CApply { cont, .. } => (2, *cont),
    }
}
