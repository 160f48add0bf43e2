//! Satisfiability of path conditions.
//!
//! The procedure is sound but incomplete. After simplification the conjuncts
//! are split into independent groups (no shared variables). Each group is
//! decided by, in order:
//!
//! 1. per-variable interval domains from comparisons against constants, and
//!    point solutions obtained by inverting `f(x) == c` for invertible `f`;
//! 2. a demanded-bits analysis that pins bits no conjunct can observe to 0;
//! 3. a small candidate product built from domain endpoints and constants;
//! 4. exhaustive enumeration of the remaining domain product, if it fits in
//!    the enumeration budget.
//!
//! `Unsat` is only returned when a domain became empty or enumeration was
//! exhaustive. Every `Sat` model is re-checked against the original
//! conjuncts with the tree evaluator before being returned.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::time::{Duration, Instant};

use super::domain::IntervalSet;
use super::expr::{eval_bv, eval_cmp, mask, postorder, sign_extend, BvOp, Kind, SymExpr};
use super::simplify::simplify_all;
use super::{CheckBudget, Conjunct, Model, PathCondition, SatResult, UnknownReason};
use crate::wasm::CmpOp;

/// Straight-line evaluation program for a group of conjuncts.
struct Tape {
    ops: Vec<Step>,
    regs: Vec<u64>,
    roots: Vec<(usize, bool)>,
}

enum Step {
    Const(u64),
    Var(usize),
    Eqz(usize),
    Bin(BvOp, u8, usize, usize),
    Cmp(CmpOp, u8, usize, usize),
    Extract(u8, u64, usize),
    Extend(bool, u8, u64, usize),
    Concat(u8, usize, usize),
    Ite(usize, usize, usize),
}

impl Tape {
    fn compile(conjuncts: &[Conjunct], var_index: &HashMap<String, usize>) -> Tape {
        let roots: Vec<SymExpr> = conjuncts.iter().map(|c| c.expr.clone()).collect();
        let order = postorder(&roots);
        let mut slot: HashMap<usize, usize> = HashMap::with_capacity(order.len());
        let mut ops = Vec::with_capacity(order.len());
        for n in &order {
            let s = |e: &SymExpr| slot[&e.id()];
            let step = match n.kind() {
                Kind::Const(v) => Step::Const(*v),
                Kind::Var(name) => Step::Var(var_index[&**name]),
                Kind::Eqz(a) => Step::Eqz(s(a)),
                Kind::Bin(op, a, b) => Step::Bin(*op, n.width(), s(a), s(b)),
                Kind::Cmp(op, a, b) => Step::Cmp(*op, a.width(), s(a), s(b)),
                Kind::Extract { hi, lo, arg } => Step::Extract(*lo, mask(hi - lo + 1), s(arg)),
                Kind::Extend { signed, arg } => Step::Extend(*signed, arg.width(), mask(n.width()), s(arg)),
                Kind::Concat(h, l) => Step::Concat(l.width(), s(h), s(l)),
                Kind::Ite(c, t, e) => Step::Ite(s(c), s(t), s(e)),
            };
            slot.insert(n.id(), ops.len());
            ops.push(step);
        }
        Tape {
            regs: vec![0; ops.len()],
            roots: conjuncts.iter().map(|c| (slot[&c.expr.id()], c.nonzero)).collect(),
            ops,
        }
    }

    fn holds(&mut self, vars: &[u64]) -> bool {
        for i in 0..self.ops.len() {
            let r = &self.regs;
            let v = match self.ops[i] {
                Step::Const(c) => c,
                Step::Var(k) => vars[k],
                Step::Eqz(a) => (r[a] == 0) as u64,
                Step::Bin(op, w, a, b) => eval_bv(op, w, r[a], r[b]),
                Step::Cmp(op, w, a, b) => eval_cmp(op, w, r[a], r[b]) as u64,
                Step::Extract(lo, m, a) => (r[a] >> lo) & m,
                Step::Extend(signed, from, m, a) => {
                    if signed {
                        sign_extend(r[a], from) as u64 & m
                    } else {
                        r[a]
                    }
                }
                Step::Concat(lw, h, l) => (r[h] << lw) | r[l],
                Step::Ite(c, t, e) => {
                    if r[c] != 0 {
                        r[t]
                    } else {
                        r[e]
                    }
                }
            };
            self.regs[i] = v;
        }
        self.roots.iter().all(|&(s, nz)| (self.regs[s] != 0) == nz)
    }
}

/// Per-variable bits that can influence some conjunct. Bits outside the
/// mask may be fixed to 0 without changing any conjunct's truth value.
pub(crate) fn demanded_bits(conjuncts: &[Conjunct]) -> BTreeMap<String, u64> {
    let roots: Vec<SymExpr> = conjuncts.iter().map(|c| c.expr.clone()).collect();
    let order = postorder(&roots);
    let mut demand: HashMap<usize, u64> = HashMap::with_capacity(order.len());
    for r in &roots {
        *demand.entry(r.id()).or_default() |= mask(r.width());
    }
    let fill_up = |d: u64| -> u64 {
        if d == 0 {
            0
        } else {
            mask(64 - d.leading_zeros() as u8)
        }
    };
    let mut out: BTreeMap<String, u64> = BTreeMap::new();
    for n in order.iter().rev() {
        let d = demand.get(&n.id()).copied().unwrap_or(0);
        let w = n.width();
        let full = |e: &SymExpr| if d != 0 { mask(e.width()) } else { 0 };
        let mut push: Vec<(&SymExpr, u64)> = Vec::new();
        match n.kind() {
            Kind::Const(_) => {}
            Kind::Var(name) => *out.entry(name.to_string()).or_default() |= d,
            Kind::Eqz(a) => push.push((a, full(a))),
            Kind::Cmp(_, a, b) => {
                push.push((a, full(a)));
                push.push((b, full(b)));
            }
            Kind::Bin(op, a, b) => {
                let cb = b.as_const();
                match op {
                    BvOp::Add | BvOp::Sub | BvOp::Mul => {
                        push.push((a, fill_up(d)));
                        push.push((b, fill_up(d)));
                    }
                    BvOp::And => match cb {
                        Some(c) => push.push((a, d & c)),
                        None => {
                            push.push((a, d));
                            push.push((b, d));
                        }
                    },
                    BvOp::Or => match cb {
                        Some(c) => push.push((a, d & !c)),
                        None => {
                            push.push((a, d));
                            push.push((b, d));
                        }
                    },
                    BvOp::Xor => {
                        push.push((a, d));
                        push.push((b, d));
                    }
                    BvOp::Shl => match cb {
                        Some(k) if k >= w as u64 => {}
                        Some(k) => push.push((a, d >> k)),
                        None => {
                            push.push((a, fill_up(d)));
                            push.push((b, full(b)));
                        }
                    },
                    BvOp::LShr => match cb {
                        Some(k) if k >= w as u64 => {}
                        Some(k) => push.push((a, (d << k) & mask(w))),
                        None => {
                            push.push((a, full(a)));
                            push.push((b, full(b)));
                        }
                    },
                    BvOp::AShr => match cb {
                        Some(k) => {
                            let k = k.min(w as u64 - 1);
                            let mut m = (d << k) & mask(w);
                            if d & !(mask(w) >> k) != 0 {
                                m |= 1 << (w - 1);
                            }
                            push.push((a, m));
                        }
                        None => {
                            push.push((a, full(a)));
                            push.push((b, full(b)));
                        }
                    },
                    BvOp::UDiv | BvOp::SDiv | BvOp::URem | BvOp::SRem => {
                        push.push((a, full(a)));
                        push.push((b, full(b)));
                    }
                }
            }
            Kind::Extract { lo, arg, .. } => push.push((arg, (d << lo) & mask(arg.width()))),
            Kind::Extend { signed, arg } => {
                let aw = arg.width();
                let mut m = d & mask(aw);
                if *signed && d & !mask(aw) != 0 {
                    m |= 1 << (aw - 1);
                }
                push.push((arg, m));
            }
            Kind::Concat(h, l) => {
                push.push((l, d & mask(l.width())));
                push.push((h, d >> l.width()));
            }
            Kind::Ite(c, t, e) => {
                push.push((c, full(c)));
                push.push((t, d));
                push.push((e, d));
            }
        }
        for (child, m) in push {
            *demand.entry(child.id()).or_default() |= m;
        }
    }
    out
}

fn negate(op: CmpOp) -> CmpOp {
    match op {
        CmpOp::Eq => CmpOp::Ne,
        CmpOp::Ne => CmpOp::Eq,
        CmpOp::LtS => CmpOp::GeS,
        CmpOp::LtU => CmpOp::GeU,
        CmpOp::GtS => CmpOp::LeS,
        CmpOp::GtU => CmpOp::LeU,
        CmpOp::LeS => CmpOp::GtS,
        CmpOp::LeU => CmpOp::GtU,
        CmpOp::GeS => CmpOp::LtS,
        CmpOp::GeU => CmpOp::LtU,
    }
}

/// Reads a conjunct as `lhs op rhs`.
fn as_relation(c: &Conjunct) -> (CmpOp, SymExpr, SymExpr) {
    let zero = |e: &SymExpr| SymExpr::constant(e.width(), 0);
    match c.expr.kind() {
        Kind::Cmp(op, a, b) => {
            let op = if c.nonzero { *op } else { negate(*op) };
            (op, a.clone(), b.clone())
        }
        Kind::Eqz(a) => {
            let op = if c.nonzero { CmpOp::Eq } else { CmpOp::Ne };
            (op, a.clone(), zero(a))
        }
        _ => {
            let op = if c.nonzero { CmpOp::Ne } else { CmpOp::Eq };
            (op, c.expr.clone(), zero(&c.expr))
        }
    }
}

fn inverse_odd(c: u64) -> u64 {
    let mut inv = c;
    for _ in 0..6 {
        inv = inv.wrapping_mul(2u64.wrapping_sub(c.wrapping_mul(inv)));
    }
    inv
}

enum Inversion {
    /// `var == value` is equivalent to the relation.
    Point(String, u64),
    /// No value satisfies the relation.
    Empty,
}

/// Solves `e == t` for the single variable occurrence in `e`, when every
/// operation on the path is a bijection or a checkable extension.
fn invert(mut e: SymExpr, mut t: u64) -> Option<Inversion> {
    loop {
        let w = e.width();
        let m = mask(w);
        t &= m;
        let next = match e.kind() {
            Kind::Var(name) => return Some(Inversion::Point(name.to_string(), t)),
            Kind::Bin(op, a, b) => {
                let (var_side, c, const_left) = match (a.as_const(), b.as_const()) {
                    (None, Some(c)) => (a.clone(), c, false),
                    (Some(c), None) => (b.clone(), c, true),
                    _ => return None,
                };
                t = match (op, const_left) {
                    (BvOp::Add, _) => t.wrapping_sub(c),
                    (BvOp::Sub, false) => t.wrapping_add(c),
                    (BvOp::Sub, true) => c.wrapping_sub(t),
                    (BvOp::Xor, _) => t ^ c,
                    (BvOp::Mul, _) if c & 1 == 1 => t.wrapping_mul(inverse_odd(c)),
                    _ => return None,
                };
                var_side
            }
            Kind::Extend { signed, arg } => {
                let aw = arg.width();
                let low = t & mask(aw);
                let back = if *signed {
                    sign_extend(low, aw) as u64 & m
                } else {
                    low
                };
                if back != t {
                    return Some(Inversion::Empty);
                }
                t = low;
                arg.clone()
            }
            Kind::Eqz(a) if t == 1 => {
                t = 0;
                a.clone()
            }
            Kind::Eqz(_) if t > 1 => return Some(Inversion::Empty),
            _ => return None,
        };
        e = next;
    }
}

fn union_find_groups(conjuncts: &[Conjunct]) -> Vec<(Vec<Conjunct>, BTreeMap<String, u8>)> {
    let per: Vec<BTreeMap<String, u8>> = conjuncts.iter().map(|c| c.expr.vars()).collect();
    let names: Vec<String> = per
        .iter()
        .flat_map(|m| m.keys().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let mut parent: Vec<usize> = (0..names.len()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for vars in &per {
        let mut it = vars.keys().map(|n| index[n.as_str()]);
        if let Some(first) = it.next() {
            for other in it {
                let (a, b) = (find(&mut parent, first), find(&mut parent, other));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, (Vec<Conjunct>, BTreeMap<String, u8>)> = BTreeMap::new();
    for (c, vars) in conjuncts.iter().zip(per) {
        let Some(first) = vars.keys().next() else {
            continue;
        };
        let root = find(&mut parent, index[first.as_str()]);
        let g = groups.entry(root).or_default();
        g.0.push(c.clone());
        g.1.extend(vars);
    }
    groups.into_values().collect()
}

enum GroupResult {
    Sat(Model),
    Unsat,
    Unknown(UnknownReason),
}

/// Enumerates values of one variable: either an explicit domain or all
/// patterns over the demanded bits.
enum Values {
    Domain(IntervalSet),
    Bits(u64),
}

impl Values {
    fn count(&self) -> u128 {
        match self {
            Values::Domain(d) => d.count(),
            Values::Bits(m) => 1u128 << m.count_ones(),
        }
    }

    /// The `i`-th value in enumeration order.
    fn nth_bits(mask: u64, mut i: u64) -> u64 {
        let mut out = 0;
        let mut m = mask;
        while m != 0 && i != 0 {
            let low = m & m.wrapping_neg();
            if i & 1 == 1 {
                out |= low;
            }
            i >>= 1;
            m &= m - 1;
        }
        out
    }
}

struct Deadline {
    at: Instant,
}

impl Deadline {
    fn passed(&self) -> bool {
        Instant::now() >= self.at
    }
}

fn solve_group(
    conjuncts: &[Conjunct],
    vars: &BTreeMap<String, u8>,
    budget: &CheckBudget,
    deadline: &Deadline,
) -> GroupResult {
    let names: Vec<&String> = vars.keys().collect();
    let widths: Vec<u8> = vars.values().copied().collect();
    let index: HashMap<String, usize> = names.iter().enumerate().map(|(i, n)| ((*n).clone(), i)).collect();

    let mut domains: Vec<IntervalSet> = widths.iter().map(|w| IntervalSet::full(*w)).collect();
    let mut constants: BTreeSet<u64> = BTreeSet::new();
    for c in conjuncts {
        for n in postorder(std::slice::from_ref(&c.expr)) {
            if let Some(v) = n.as_const() {
                constants.insert(v);
            }
        }
        let (op, lhs, rhs) = as_relation(c);
        let Some(k) = rhs.as_const() else { continue };
        if let Some(name) = lhs.as_var() {
            let i = index[name];
            domains[i] = domains[i].intersect(&IntervalSet::satisfying(op, widths[i], k));
            continue;
        }
        if matches!(op, CmpOp::Eq | CmpOp::Ne) {
            match invert(lhs, k) {
                Some(Inversion::Empty) if op == CmpOp::Eq => return GroupResult::Unsat,
                Some(Inversion::Point(name, v)) => {
                    let i = index[&name];
                    domains[i] = if op == CmpOp::Eq {
                        domains[i].intersect(&IntervalSet::point(widths[i], v))
                    } else {
                        domains[i].remove(v)
                    };
                    constants.insert(v);
                }
                _ => {}
            }
        }
    }
    if domains.iter().any(IntervalSet::is_empty) {
        return GroupResult::Unsat;
    }

    let demanded = demanded_bits(conjuncts);
    let values: Vec<Values> = names
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let d = demanded.get(*n).copied().unwrap_or(0) & mask(widths[i]);
            if domains[i].is_full() {
                Values::Bits(d)
            } else {
                Values::Domain(domains[i].clone())
            }
        })
        .collect();

    let mut tape = Tape::compile(conjuncts, &index);
    let model_of = |assign: &[u64]| -> Model {
        names
            .iter()
            .zip(assign)
            .map(|(n, v)| ((*n).clone(), *v))
            .collect()
    };

    // Candidate phase.
    let candidates: Vec<Vec<u64>> = values
        .iter()
        .enumerate()
        .map(|(i, vals)| {
            let m = mask(widths[i]);
            let mut raw: Vec<u64> = vec![0, 1, m, m >> 1, (m >> 1) + 1];
            for c in &constants {
                raw.extend([*c, c.wrapping_add(1), c.wrapping_sub(1), c.wrapping_neg()]);
            }
            if let Values::Domain(d) = vals {
                raw.extend(d.endpoints());
            }
            let mut seen = BTreeSet::new();
            raw.into_iter()
                .map(|v| v & m)
                .filter(|v| match vals {
                    Values::Domain(d) => d.contains(*v),
                    Values::Bits(dm) => v & !dm == 0,
                })
                .filter(|v| seen.insert(*v))
                .take(24)
                .collect()
        })
        .collect();
    let product: u128 = candidates.iter().map(|c| c.len() as u128).product();
    if product <= 4096 && candidates.iter().all(|c| !c.is_empty()) {
        let mut assign = vec![0u64; names.len()];
        let mut idx = vec![0usize; names.len()];
        loop {
            for (k, i) in idx.iter().enumerate() {
                assign[k] = candidates[k][*i];
            }
            if tape.holds(&assign) {
                return GroupResult::Sat(model_of(&assign));
            }
            if !advance(&mut idx, |k| candidates[k].len() as u128) {
                break;
            }
        }
    }

    // Exhaustive phase.
    let total: u128 = values.iter().map(Values::count).product();
    if total > budget.max_enumeration as u128 {
        return GroupResult::Unknown(UnknownReason::Budget);
    }
    let lists: Vec<Option<Vec<u64>>> = values
        .iter()
        .map(|v| match v {
            Values::Domain(d) => Some(d.iter().collect()),
            Values::Bits(_) => None,
        })
        .collect();
    let nth = |k: usize, i: u128| -> u64 {
        match (&lists[k], &values[k]) {
            (Some(list), _) => list[i as usize],
            (None, Values::Bits(m)) => Values::nth_bits(*m, i as u64),
            _ => unreachable!(),
        }
    };
    let mut idx = vec![0usize; names.len()];
    let mut assign = vec![0u64; names.len()];
    let mut steps: u64 = 0;
    loop {
        for k in 0..names.len() {
            assign[k] = nth(k, idx[k] as u128);
        }
        if tape.holds(&assign) {
            return GroupResult::Sat(model_of(&assign));
        }
        steps += 1;
        if steps % 4096 == 0 && deadline.passed() {
            return GroupResult::Unknown(UnknownReason::Budget);
        }
        if !advance(&mut idx, |k| values[k].count()) {
            return GroupResult::Unsat;
        }
    }
}

/// Odometer increment; false once every combination has been visited.
fn advance(idx: &mut [usize], len: impl Fn(usize) -> u128) -> bool {
    for k in (0..idx.len()).rev() {
        if ((idx[k] + 1) as u128) < len(k) {
            idx[k] += 1;
            return true;
        }
        idx[k] = 0;
    }
    false
}

/// Relation in a normal form where `x > y` is written `y < x` and equality
/// operands are ordered, so a literal and its negation meet as
/// `(op, a, b)` and `(negate(op) normalized, ...)`.
fn normalized(op: CmpOp, a: SymExpr, b: SymExpr) -> (CmpOp, SymExpr, SymExpr) {
    match op {
        CmpOp::GtS => (CmpOp::LtS, b, a),
        CmpOp::GtU => (CmpOp::LtU, b, a),
        CmpOp::GeS => (CmpOp::LeS, b, a),
        CmpOp::GeU => (CmpOp::LeU, b, a),
        CmpOp::Eq | CmpOp::Ne if order_key(&a) > order_key(&b) => (op, b, a),
        _ => (op, a, b),
    }
}

/// Hash order; a collision only costs a missed detection.
fn order_key(e: &SymExpr) -> u64 {
    use std::hash::{Hash, Hasher};
    let mut h = std::collections::hash_map::DefaultHasher::new();
    e.hash(&mut h);
    h.finish()
}

/// True if some conjunct is the negation of another.
fn has_complementary_literals(conjuncts: &[Conjunct]) -> bool {
    let mut seen: HashSet<(CmpOp, SymExpr, SymExpr)> = HashSet::new();
    for c in conjuncts {
        let (op, a, b) = as_relation(c);
        let (nop, na, nb) = normalized(negate(op), a.clone(), b.clone());
        if seen.contains(&(nop, na, nb)) {
            return true;
        }
        seen.insert(normalized(op, a, b));
    }
    false
}

/// Decides a path condition within `budget`.
pub fn check_sat(pc: &PathCondition, budget: &CheckBudget) -> SatResult {
    let deadline = Deadline {
        at: Instant::now() + Duration::from_millis(budget.max_millis),
    };
    let original = pc.conjuncts();
    let exprs: Vec<SymExpr> = original.iter().map(|c| c.expr.clone()).collect();
    let simplified = simplify_all(&exprs);
    let mut live = Vec::new();
    for (c, e) in original.iter().zip(simplified) {
        match e.as_const() {
            Some(v) if (v != 0) != c.nonzero => return SatResult::Unsat,
            Some(_) => {}
            None => live.push(Conjunct {
                expr: e,
                nonzero: c.nonzero,
            }),
        }
    }
    if has_complementary_literals(&live) {
        return SatResult::Unsat;
    }

    let mut model: Model = pc.vars().into_keys().map(|n| (n, 0)).collect();
    let mut unknown = None;
    for (group, vars) in union_find_groups(&live) {
        if deadline.passed() {
            unknown.get_or_insert(UnknownReason::Budget);
            continue;
        }
        match solve_group(&group, &vars, budget, &deadline) {
            GroupResult::Sat(m) => model.extend(m),
            GroupResult::Unsat => return SatResult::Unsat,
            GroupResult::Unknown(r) => {
                unknown.get_or_insert(r);
            }
        }
    }
    if let Some(r) = unknown {
        return SatResult::Unknown(r);
    }
    if !pc.holds_under(&model) {
        log::error!("solver model failed re-verification; reporting unknown");
        return SatResult::Unknown(UnknownReason::Unsupported);
    }
    SatResult::Sat(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::simplify::{bin, cmp};

    fn x() -> SymExpr {
        SymExpr::var("x", 32)
    }

    fn c(v: u64) -> SymExpr {
        SymExpr::constant(32, v)
    }

    fn budget() -> CheckBudget {
        CheckBudget::default()
    }

    fn pc(items: Vec<(SymExpr, bool)>) -> PathCondition {
        let mut p = PathCondition::new();
        for (e, nz) in items {
            p.push(e, nz);
        }
        p
    }

    #[test]
    fn wraparound_solution() {
        let p = pc(vec![(SymExpr::raw_cmp(CmpOp::Eq, SymExpr::raw_bin(BvOp::Add, x(), c(1)), c(0)), true)]);
        match check_sat(&p, &budget()) {
            SatResult::Sat(m) => assert_eq!(m["x"], 4_294_967_295),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn contradictory_signed_bounds() {
        let p = pc(vec![
            (SymExpr::raw_cmp(CmpOp::LtS, x(), c(0)), true),
            (SymExpr::raw_cmp(CmpOp::GtS, x(), c(0)), true),
        ]);
        assert_eq!(check_sat(&p, &budget()), SatResult::Unsat);
    }

    #[test]
    fn linear_equation() {
        let lhs = SymExpr::raw_bin(BvOp::Add, SymExpr::raw_bin(BvOp::Mul, c(3), x()), c(2));
        let p = pc(vec![(SymExpr::raw_cmp(CmpOp::Eq, lhs, c(17)), true)]);
        match check_sat(&p, &budget()) {
            SatResult::Sat(m) => assert_eq!(m["x"], 5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn masked_variables_enumerate_exhaustively() {
        let y = SymExpr::var("y", 32);
        let xm = bin(BvOp::And, x(), c(0xFF));
        let ym = bin(BvOp::And, y, c(0xFF));
        // x*y == 251 (prime) over bytes has solutions 1*251 and 251*1.
        let prod = bin(BvOp::Mul, xm.clone(), ym.clone());
        let p = pc(vec![
            (cmp(CmpOp::Eq, prod.clone(), c(251)), true),
            (cmp(CmpOp::GtU, xm.clone(), c(1)), true),
            (cmp(CmpOp::GtU, ym.clone(), c(1)), true),
        ]);
        assert_eq!(check_sat(&p, &budget()), SatResult::Unsat);
        let p = pc(vec![(cmp(CmpOp::Eq, prod, c(6)), true), (cmp(CmpOp::GtU, xm, c(2)), true)]);
        match check_sat(&p, &budget()) {
            SatResult::Sat(m) => assert_eq!((m["x"] & 0xFF) * (m["y"] & 0xFF), 6),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unbounded_nonlinear_is_unknown() {
        let y = SymExpr::var("y", 32);
        let p = pc(vec![(
            cmp(CmpOp::Eq, bin(BvOp::Mul, x(), y), c(0x1234_5679)),
            true,
        ), (cmp(CmpOp::GtU, x(), c(0x1000)), true)]);
        let r = check_sat(&p, &budget());
        if let SatResult::Sat(m) = &r {
            assert!(p.holds_under(m));
        } else {
            assert_eq!(r, SatResult::Unknown(UnknownReason::Budget));
        }
    }

    #[test]
    fn independent_groups_and_empty() {
        assert!(matches!(check_sat(&PathCondition::new(), &budget()), SatResult::Sat(_)));
        let y = SymExpr::var("y", 64);
        let p = pc(vec![
            (cmp(CmpOp::Eq, x(), c(7)), true),
            (cmp(CmpOp::GtU, y.clone(), SymExpr::constant(64, 1 << 40)), true),
        ]);
        match check_sat(&p, &budget()) {
            SatResult::Sat(m) => {
                assert_eq!(m["x"], 7);
                assert!(m["y"] > 1 << 40);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn complementary_relations_are_unsat() {
        let y = SymExpr::var("y", 32);
        let p = pc(vec![
            (cmp(CmpOp::GtS, y.clone(), x()), true),
            (cmp(CmpOp::GtS, y.clone(), x()), false),
        ]);
        assert_eq!(check_sat(&p, &budget()), SatResult::Unsat);
        let p = pc(vec![
            (cmp(CmpOp::LtU, x(), y.clone()), true),
            (cmp(CmpOp::GeU, x(), y.clone()), true),
        ]);
        assert_eq!(check_sat(&p, &budget()), SatResult::Unsat);
        let p = pc(vec![
            (cmp(CmpOp::Eq, x(), y.clone()), true),
            (cmp(CmpOp::Ne, y, x()), true),
        ]);
        assert_eq!(check_sat(&p, &budget()), SatResult::Unsat);
    }

    #[test]
    fn demanded_bits_of_masked_compare() {
        let conj = Conjunct {
            expr: cmp(CmpOp::LtU, bin(BvOp::And, x(), c(0xF0)), c(3)),
            nonzero: true,
        };
        assert_eq!(demanded_bits(&[conj])["x"], 0xF0);
    }
}
