//! SMT-LIB 2 (QF_BV) export of path conditions.

use std::collections::HashMap;
use std::fmt::Write as _;

use super::expr::{cmp_smt_name, postorder, Kind, SymExpr};
use super::PathCondition;
use crate::wasm::CmpOp;

fn literal(width: u8, v: u64) -> String {
    if width % 4 == 0 {
        format!("#x{:0w$x}", v, w = width as usize / 4)
    } else {
        format!("#b{:0w$b}", v, w = width as usize)
    }
}

fn symbol(name: &str) -> String {
    let simple = !name.is_empty()
        && !name.starts_with(|c: char| c.is_ascii_digit())
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || "~!@$%^&*_-+=<>.?/".contains(c));
    if simple {
        name.to_string()
    } else {
        format!("|{}|", name.replace(['|', '\\'], "_"))
    }
}

/// Renders `pc` as a self-contained script ending in `(check-sat)` and
/// `(get-model)`.
///
/// Subterms referenced more than once are bound with `define-fun` so the
/// script stays linear in the DAG size.
pub fn export_smtlib(pc: &PathCondition) -> String {
    let mut out = String::from("(set-logic QF_BV)\n");
    for (name, w) in pc.vars() {
        let _ = writeln!(out, "(declare-fun {} () (_ BitVec {}))", symbol(&name), w);
    }
    let roots: Vec<SymExpr> = pc.conjuncts().iter().map(|c| c.expr.clone()).collect();
    let order = postorder(&roots);
    let mut refs: HashMap<usize, usize> = HashMap::new();
    for n in &order {
        for c in n.children() {
            *refs.entry(c.id()).or_default() += 1;
        }
    }
    let mut text: HashMap<usize, String> = HashMap::with_capacity(order.len());
    let mut defs = 0usize;
    for n in &order {
        let t = |e: &SymExpr| text[&e.id()].clone();
        let w = n.width();
        let s = match n.kind() {
            Kind::Const(v) => literal(w, *v),
            Kind::Var(name) => symbol(name),
            Kind::Eqz(a) => format!(
                "(ite (= {} {}) {} {})",
                t(a),
                literal(a.width(), 0),
                literal(w, 1),
                literal(w, 0)
            ),
            Kind::Bin(op, a, b) => format!("({} {} {})", op.smt_name(), t(a), t(b)),
            Kind::Cmp(op, a, b) => {
                let test = match op {
                    CmpOp::Ne => format!("(not (= {} {}))", t(a), t(b)),
                    _ => format!("({} {} {})", cmp_smt_name(*op), t(a), t(b)),
                };
                format!("(ite {} {} {})", test, literal(w, 1), literal(w, 0))
            }
            Kind::Extract { hi, lo, arg } => format!("((_ extract {hi} {lo}) {})", t(arg)),
            Kind::Extend { signed, arg } => format!(
                "((_ {} {}) {})",
                if *signed { "sign_extend" } else { "zero_extend" },
                w - arg.width(),
                t(arg)
            ),
            Kind::Concat(h, l) => format!("(concat {} {})", t(h), t(l)),
            Kind::Ite(c, a, b) => format!(
                "(ite (not (= {} {})) {} {})",
                t(c),
                literal(c.width(), 0),
                t(a),
                t(b)
            ),
        };
        let shared = refs.get(&n.id()).copied().unwrap_or(0) >= 2;
        let atomic = matches!(n.kind(), Kind::Const(_) | Kind::Var(_));
        let s = if shared && !atomic {
            let name = format!("%t{defs}");
            defs += 1;
            let _ = writeln!(out, "(define-fun {} () (_ BitVec {}) {})", symbol(&name), w, s);
            symbol(&name)
        } else {
            s
        };
        text.insert(n.id(), s);
    }
    if pc.conjuncts().is_empty() {
        out.push_str("(assert true)\n");
    }
    for c in pc.conjuncts() {
        let e = &text[&c.expr.id()];
        let zero = literal(c.expr.width(), 0);
        if c.nonzero {
            let _ = writeln!(out, "(assert (not (= {e} {zero})))");
        } else {
            let _ = writeln!(out, "(assert (= {e} {zero}))");
        }
    }
    out.push_str("(check-sat)\n(get-model)\n");
    out
}
