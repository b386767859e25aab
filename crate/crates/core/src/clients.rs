//! Constant propagation and folding on top of any flow map.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::cps::{CExp, Call, CpsProgram, Label, UExp, Var};
use crate::datum::Datum;
use crate::domain::ValueSet;
use crate::kcfa::KcfaResult;
use crate::local::LState;
use crate::summarize::Analysis;

pub type FlowMap = BTreeMap<(Label, Var), ValueSet>;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Constant {
    pub label: Label,
    pub var: Var,
    pub value: Datum,
}

/// Reference sites whose flow is a single exact non-pair literal.
pub fn propagate_constants(flows: &FlowMap) -> Vec<Constant> {
    flows
        .iter()
        .filter_map(|((label, var), d)| {
            d.as_constant().map(|value| Constant {
                label: *label,
                var: *var,
                value: value.clone(),
            })
        })
        .collect()
}

/// Replaces every reported reference by its literal.
pub fn fold_constants(prog: &CpsProgram, constants: &[Constant]) -> CpsProgram {
    let folds: HashMap<(Label, Var), Datum> = constants.iter().map(|c| ((c.label, c.var), c.value.clone())).collect();
    prog.substitute(&folds)
}

/// For a call `(f e (λ(u) (g u k)))`, the call the continuation makes next.
fn next_call(prog: &CpsProgram, site: Label) -> Option<Label> {
    match prog.call(site) {
        Call::U { q: CExp::Lam(c), .. } => {
            let body = prog.clam(*c).1;
            matches!(prog.call(body), Call::U { f: UExp::Var(_), .. }).then_some(body)
        }
        _ => None,
    }
}

/// Pairs `(callee at site, callee at the following call)` that CFA2 examines
/// for two calls in sequence, read off the return states.
pub fn operator_pairs_cfa2(prog: &CpsProgram, a: &Analysis, site: Label) -> BTreeSet<(Label, Label)> {
    let mut out = BTreeSet::new();
    let Some(next) = next_call(prog, site) else { return out };
    let Call::U { f: UExp::Var(g), .. } = prog.call(next) else {
        return out;
    };
    for (s, callee, ret) in &a.returns {
        if *s != site {
            continue;
        }
        let LState::CApply { frame, heap, .. } = a.state(*ret) else {
            continue;
        };
        let gs = frame
            .get(g)
            .or_else(|| heap.get(g))
            .or_else(|| a.global_heap.get(g))
            .cloned()
            .unwrap_or_default();
        out.extend(gs.lams().map(|l| (*callee, l)));
    }
    out
}

/// The same pairs for k-CFA, which keeps no correlation between the two
/// calls.
pub fn operator_pairs_kcfa(prog: &CpsProgram, r: &KcfaResult, site: Label) -> BTreeSet<(Label, Label)> {
    let Some(next) = next_call(prog, site) else {
        return BTreeSet::new();
    };
    let empty = BTreeSet::new();
    let first = r.callees.get(&site).unwrap_or(&empty);
    let second = r.callees.get(&next).unwrap_or(&empty);
    first
        .iter()
        .flat_map(|a| second.iter().map(move |b| (*a, *b)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abstract_sem::AnalyzerConfig;
    use crate::concrete::{self, Outcome};
    use crate::cps::cps_convert;
    use crate::frontend;
    use crate::kcfa::kcfa_analyze;
    use crate::summarize::analyze;

    fn prog(src: &str) -> CpsProgram {
        cps_convert(&frontend::load(src).unwrap())
    }

    const APP_ID: &str =
        "(let* ((app (lambda (f e) (f e))) (id (lambda (x) x)) (n1 (app id 1)) (n2 (app id 2))) (+ n1 n2))";

    fn named(p: &CpsProgram, cs: &[Constant]) -> Vec<(String, Datum)> {
        cs.iter()
            .map(|c| (p.var_name(c.var).to_string(), c.value.clone()))
            .collect()
    }

    #[test]
    fn cfa2_finds_n2_and_zero_cfa_does_not() {
        let p = prog(APP_ID);
        let a = analyze(&p, AnalyzerConfig::default());
        let cfa2 = named(&p, &propagate_constants(&a.flows));
        assert!(cfa2.contains(&("n2".into(), Datum::Int(2))), "{cfa2:?}");
        let r = kcfa_analyze(&p, 0);
        let zero = named(&p, &propagate_constants(&r.flows));
        assert!(!zero.iter().any(|(n, _)| n == "n2"), "{zero:?}");
    }

    #[test]
    fn folding_preserves_the_result() {
        let p = prog(APP_ID);
        let a = analyze(&p, AnalyzerConfig::default());
        let cs = propagate_constants(&a.flows);
        let folded = fold_constants(&p, &cs);
        crate::cps::validate(&folded).unwrap();
        let before = concrete::run(&p, 10_000);
        let after = concrete::run(&folded, 10_000);
        match (before, after) {
            (Outcome::Finished(x), Outcome::Finished(y)) => assert_eq!(x, y),
            other => panic!("{other:?}"),
        }
        assert_eq!(
            analyze(&folded, AnalyzerConfig::default()).final_value(),
            a.final_value()
        );
    }

    #[test]
    fn no_literals_no_constants() {
        let p = prog("(lambda (x) (x x))");
        let a = analyze(&p, AnalyzerConfig::default());
        assert!(propagate_constants(&a.flows).is_empty());
        assert_eq!(fold_constants(&p, &[]).to_string(), p.to_string());
    }
}
