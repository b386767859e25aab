use super::*;
use crate::frontend;

fn convert(src: &str) -> CpsProgram {
    cps_convert(&frontend::load(src).unwrap())
}

/// Drops label annotations so shapes can be compared up to renaming.
fn unlabeled(s: &str) -> String {
    let mut out = String::new();
    let mut chars = s.chars().peekable();
    while let Some(c) = chars.next() {
        if c != '^' {
            out.push(c);
        }
        if c == '^' || c == 'λ' {
            while chars.peek().is_some_and(|d| d.is_ascii_digit()) {
                chars.next();
            }
        }
    }
    out
}

fn call_with_text(p: &CpsProgram, text: &str) -> Label {
    p.calls()
        .find(|l| unlabeled(&p.show(*l).to_string()) == text)
        .unwrap_or_else(|| panic!("no call `{text}` in {p}"))
}

#[test]
fn nested_lambda_converts_to_the_textbook_shape() {
    let p = convert("(lambda (x) (lambda (y) (x (x y))))");
    assert_eq!(
        unlabeled(&p.show(p.root).to_string()),
        "(λ(x k) (k (λ(y k_1) (x y (λ(u) (x u k_1))))))"
    );
    validate(&p).unwrap();
}

#[test]
fn lv_and_ll_follow_the_user_lambda_partition() {
    let p = convert("(lambda (x) (lambda (y) (x (x y))))");
    let m = compute_maps(&p);
    let name = |v: &Var| p.var_name(*v).to_string();
    let inner = call_with_text(&p, "(x y (λ(u) (x u k_1)))");
    let outer = p.ulam(p.root).2;
    let lv: Vec<String> = m.lv(inner).iter().map(name).collect();
    assert_eq!(lv, vec!["y", "k_1", "u"]);
    let lv: Vec<String> = m.lv(outer).iter().map(name).collect();
    assert_eq!(lv, vec!["x", "k"]);

    let inner_lam = m.owner(inner);
    let class = m.ll(inner);
    assert_eq!(class.len(), 4);
    assert!(class.contains(&inner_lam) && class.contains(&inner));
    assert_eq!(m.ll(outer), [p.root, outer].into_iter().collect());
}

#[test]
fn stack_and_heap_references() {
    let p = convert("(lambda (x) (lambda (y) (x (x y))))");
    let m = compute_maps(&p);
    let x = p.var_by_name("x").unwrap();
    let y = p.var_by_name("y").unwrap();
    let site = call_with_text(&p, "(x y (λ(u) (x u k_1)))");
    assert_eq!(m.classify_ref(site, y), RefKind::Stack);
    assert_eq!(m.classify_ref(site, x), RefKind::Heap);
    assert_eq!(m.heap_vars().iter().copied().collect::<Vec<_>>(), vec![x]);
}

#[test]
fn double_identity_program_shape() {
    let p = convert("((lambda (id) (id 1) (id 2)) (lambda (x) x))");
    assert_eq!(
        unlabeled(&p.to_string()),
        "((λ(id k) (id 1 (λ(u) (id 2 k)))) (λ(x k_1) (k_1 x)) halt)"
    );
    assert!(compute_maps(&p).heap_vars().is_empty());
}

#[test]
fn constant_program_calls_its_continuation() {
    let p = convert("1");
    assert_eq!(unlabeled(&p.show(p.root).to_string()), "(λ(k) (k 1))");
    let m = compute_maps(&p);
    let body = p.ulam(p.root).2;
    assert_eq!(m.lv(body).len(), 1);
}

#[test]
fn single_lambda_has_one_partition() {
    let mut b = CpsBuilder::new();
    let u = b.user_var("u");
    let k = b.cont_var("k");
    let body = b.ccall(CExp::Var(k), UExp::Var(u));
    let root = b.ulam(vec![u], k, body);
    let p = b.finish(root, vec![], vec![]);
    let m = compute_maps(&p);
    assert_eq!(m.lv(body), &[u, k].into_iter().collect());
    assert_eq!(m.classify_ref(body, u), RefKind::Stack);
    assert!(validate(&p).is_ok());
}

#[test]
fn len_converts_with_branch_and_primitive_calls() {
    let p = convert(
        "(define (len l) (if (pair? l) (+ 1 (len (cdr l))) 0))
         (len '(3))",
    );
    validate(&p).unwrap();
    let len = p.globals[0].1.clone();
    let UExp::Lam(len) = len else { panic!() };
    assert_eq!(
        unlabeled(&p.show(len).to_string()),
        "(λ(l k) (pair? l (λ(u) (if u (λ(_) (cdr l (λ(u_1) (len u_1 (λ(u_2) (+ 1 u_2 k)))))) (λ(_3) (k 0))))))",
        "{p}"
    );
}

#[test]
fn transform_temporaries_are_stack_references() {
    let p = convert(
        "(define (len l) (if (pair? l) (+ 1 (len (cdr l))) 0))
         (let* ((a (len '(1 2))) (b (+ a (if (null? '()) a 0)))) (cons a b))",
    );
    let m = compute_maps(&p);
    let src = frontend::load(
        "(define (len l) (if (pair? l) (+ 1 (len (cdr l))) 0))
         (let* ((a (len '(1 2))) (b (+ a (if (null? '()) a 0)))) (cons a b))",
    )
    .unwrap();
    let source_names: HashSet<&str> = src.binders().into_iter().collect();
    for (l, v) in p.ref_sites() {
        if !source_names.contains(p.var_name(v)) {
            assert_eq!(m.classify_ref(l, v), RefKind::Stack, "{} at {l}", p.var_name(v));
        }
    }
    for v in m.heap_vars() {
        assert!(p.is_user_var(*v));
    }
}

#[test]
fn branch_in_argument_position_duplicates_the_continuation() {
    let p = convert("(lambda (a) (+ 1 (if a 2 3)))");
    validate(&p).unwrap();
    let text = unlabeled(&p.to_string());
    assert_eq!(text.matches("(+ 1").count(), 2, "{text}");
}

#[test]
fn free_continuation_variable_is_a_violation() {
    let mut b = CpsBuilder::new();
    let x = b.user_var("x");
    let k_outer = b.cont_var("k'");
    let y = b.user_var("y");
    let k = b.cont_var("k");
    let inner_body = b.ccall(CExp::Var(k_outer), UExp::Var(y));
    let inner = b.ulam(vec![y], k, inner_body);
    let body = b.ccall(CExp::Var(k_outer), UExp::Lam(inner));
    let root = b.ulam(vec![x], k_outer, body);
    let p = b.finish(root, vec![], vec![]);
    let errs = validate(&p).unwrap_err();
    assert!(
        errs.iter()
            .any(|e| e.to_string().contains("free continuation variable")),
        "{errs:?}"
    );
}

#[test]
fn shared_subterm_is_a_duplicate_label() {
    let mut b = CpsBuilder::new();
    let x = b.user_var("x");
    let k = b.cont_var("k");
    let y = b.user_var("y");
    let k2 = b.cont_var("k2");
    let inner_body = b.ccall(CExp::Var(k2), UExp::Var(y));
    let inner = b.ulam(vec![y], k2, inner_body);
    let body = b.ucall(UExp::Var(x), vec![UExp::Lam(inner), UExp::Lam(inner)], CExp::Var(k));
    let root = b.ulam(vec![x], k, body);
    let p = b.finish(root, vec![], vec![]);
    let errs = validate(&p).unwrap_err();
    assert!(
        errs.iter().any(|e| e.to_string().contains("label not unique")),
        "{errs:?}"
    );
}

#[test]
fn labels_are_preorder() {
    let p = convert("((lambda (id) (id 1) (id 2)) (lambda (x) x))");
    assert_eq!(p.root, 0);
    assert_eq!(p.ulam(p.root).2, 1);
}
