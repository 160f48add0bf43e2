//! Rewriting constructors. Each assumes its operands are already in normal
//! form and returns a normal form, so `simplify` is a single bottom-up pass
//! and its result is a fixed point.

use std::collections::HashMap;

use super::expr::{eval_bv, eval_cmp, mask, postorder, sign_extend, BvOp, Kind, SymExpr, BOOL_WIDTH};
use crate::wasm::CmpOp;

fn konst(width: u8, v: u64) -> SymExpr {
    SymExpr::constant(width, v)
}

fn boolean(b: bool) -> SymExpr {
    konst(BOOL_WIDTH, b as u64)
}

/// True when `e` only ever evaluates to 0 or 1.
fn is_boolean(e: &SymExpr) -> bool {
    match e.kind() {
        Kind::Cmp(..) | Kind::Eqz(_) => true,
        Kind::Const(v) => *v <= 1,
        _ => false,
    }
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

fn swap(op: CmpOp) -> CmpOp {
    match op {
        CmpOp::Eq => CmpOp::Eq,
        CmpOp::Ne => CmpOp::Ne,
        CmpOp::LtS => CmpOp::GtS,
        CmpOp::LtU => CmpOp::GtU,
        CmpOp::GtS => CmpOp::LtS,
        CmpOp::GtU => CmpOp::LtU,
        CmpOp::LeS => CmpOp::GeS,
        CmpOp::LeU => CmpOp::GeU,
        CmpOp::GeS => CmpOp::LeS,
        CmpOp::GeU => CmpOp::LeU,
    }
}

pub fn eqz(a: SymExpr) -> SymExpr {
    if let Some(v) = a.as_const() {
        return boolean(v == 0);
    }
    match a.kind() {
        Kind::Cmp(op, x, y) => return cmp(negate(*op), x.clone(), y.clone()),
        Kind::Eqz(inner) if is_boolean(inner) => return inner.clone(),
        _ => {}
    }
    SymExpr::raw_eqz(a)
}

pub fn bin(op: BvOp, a: SymExpr, b: SymExpr) -> SymExpr {
    let w = a.width();
    let m = mask(w);
    let (ca, cb) = (a.as_const(), b.as_const());
    if let (Some(x), Some(y)) = (ca, cb) {
        return konst(w, eval_bv(op, w, x, y));
    }
    // Constants go right for commutative operators.
    if op.is_commutative() && ca.is_some() {
        return bin(op, b, a);
    }
    let zero = || konst(w, 0);
    match (op, cb) {
        (BvOp::Add | BvOp::Sub | BvOp::Or | BvOp::Xor | BvOp::Shl | BvOp::LShr | BvOp::AShr, Some(0)) => return a,
        (BvOp::Mul, Some(0)) | (BvOp::And, Some(0)) => return zero(),
        (BvOp::Mul | BvOp::UDiv | BvOp::SDiv, Some(1)) => return a,
        (BvOp::URem | BvOp::SRem, Some(1)) => return zero(),
        (BvOp::And, Some(c)) if c == m => return a,
        (BvOp::Or, Some(c)) if c == m => return konst(w, m),
        (BvOp::Shl | BvOp::LShr, Some(c)) if c >= w as u64 => return zero(),
        (BvOp::Sub, Some(c)) => return bin(BvOp::Add, a, konst(w, c.wrapping_neg())),
        _ => {}
    }
    if ca == Some(0) && matches!(op, BvOp::Shl | BvOp::LShr | BvOp::AShr) {
        return zero();
    }
    if a == b {
        match op {
            BvOp::Sub | BvOp::Xor => return zero(),
            BvOp::And | BvOp::Or => return a,
            _ => {}
        }
    }
    match (op, a.kind(), cb) {
        // (x + c1) + c2  ->  x + (c1 + c2)
        (BvOp::Add, Kind::Bin(BvOp::Add, x, c1), Some(c2)) if c1.is_const() => {
            return bin(BvOp::Add, x.clone(), konst(w, c1.as_const().unwrap().wrapping_add(c2)));
        }
        (BvOp::Mul, Kind::Bin(BvOp::Mul, x, c1), Some(c2)) if c1.is_const() => {
            return bin(BvOp::Mul, x.clone(), konst(w, c1.as_const().unwrap().wrapping_mul(c2)));
        }
        (BvOp::And, Kind::Bin(BvOp::And, x, c1), Some(c2)) if c1.is_const() => {
            return bin(BvOp::And, x.clone(), konst(w, c1.as_const().unwrap() & c2));
        }
        (BvOp::Or, Kind::Bin(BvOp::Or, x, c1), Some(c2)) if c1.is_const() => {
            return bin(BvOp::Or, x.clone(), konst(w, c1.as_const().unwrap() | c2));
        }
        (BvOp::Xor, Kind::Bin(BvOp::Xor, x, c1), Some(c2)) if c1.is_const() => {
            return bin(BvOp::Xor, x.clone(), konst(w, c1.as_const().unwrap() ^ c2));
        }
        _ => {}
    }
    // xor(xor(p, q), q) -> p and xor(xor(p, q), p) -> q
    if op == BvOp::Xor {
        if let Kind::Bin(BvOp::Xor, p, q) = a.kind() {
            if *q == b {
                return p.clone();
            }
            if *p == b {
                return q.clone();
            }
        }
        if let Kind::Bin(BvOp::Xor, p, q) = b.kind() {
            if *q == a {
                return p.clone();
            }
            if *p == a {
                return q.clone();
            }
        }
    }
    // (x + y) - y -> x
    if op == BvOp::Sub {
        if let Kind::Bin(BvOp::Add, x, y) = a.kind() {
            if *y == b {
                return x.clone();
            }
            if *x == b {
                return y.clone();
            }
        }
    }
    SymExpr::raw_bin(op, a, b)
}

pub fn cmp(op: CmpOp, a: SymExpr, b: SymExpr) -> SymExpr {
    let w = a.width();
    if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
        return boolean(eval_cmp(op, w, x, y));
    }
    if a.is_const() {
        return cmp(swap(op), b, a);
    }
    if a == b {
        return boolean(matches!(
            op,
            CmpOp::Eq | CmpOp::LeS | CmpOp::LeU | CmpOp::GeS | CmpOp::GeU
        ));
    }
    let m = mask(w);
    let smin = 1u64 << (w - 1);
    let smax = smin - 1;
    match (op, b.as_const()) {
        (CmpOp::LtU, Some(0)) => return boolean(false),
        (CmpOp::GtU, Some(c)) if c == m => return boolean(false),
        (CmpOp::GeU, Some(0)) => return boolean(true),
        (CmpOp::LeU, Some(c)) if c == m => return boolean(true),
        (CmpOp::LtS, Some(c)) if c == smin => return boolean(false),
        (CmpOp::GeS, Some(c)) if c == smin => return boolean(true),
        (CmpOp::GtS, Some(c)) if c == smax => return boolean(false),
        (CmpOp::LeS, Some(c)) if c == smax => return boolean(true),
        _ => {}
    }
    // A boolean compared with 0 or 1 is itself or its negation.
    if is_boolean(&a) && w == BOOL_WIDTH {
        match (op, b.as_const()) {
            (CmpOp::Ne, Some(0)) | (CmpOp::Eq, Some(1)) => return a,
            (CmpOp::Eq, Some(0)) | (CmpOp::Ne, Some(1)) => return eqz(a),
            _ => {}
        }
    }
    SymExpr::raw_cmp(op, a, b)
}

pub fn extract(hi: u8, lo: u8, arg: SymExpr) -> SymExpr {
    let w = hi - lo + 1;
    if lo == 0 && w == arg.width() {
        return arg;
    }
    if let Some(v) = arg.as_const() {
        return konst(w, v >> lo);
    }
    match arg.kind() {
        Kind::Extract { lo: inner_lo, arg: inner, .. } => {
            return extract(hi + inner_lo, lo + inner_lo, inner.clone());
        }
        Kind::Concat(h, l) => {
            let lw = l.width();
            if hi < lw {
                return extract(hi, lo, l.clone());
            }
            if lo >= lw {
                return extract(hi - lw, lo - lw, h.clone());
            }
        }
        Kind::Extend { arg: inner, .. } if hi < inner.width() => {
            return extract(hi, lo, inner.clone());
        }
        _ => {}
    }
    SymExpr::raw_extract(hi, lo, arg)
}

pub fn extend(signed: bool, width: u8, arg: SymExpr) -> SymExpr {
    if width == arg.width() {
        return arg;
    }
    if let Some(v) = arg.as_const() {
        let v = if signed {
            sign_extend(v, arg.width()) as u64
        } else {
            v
        };
        return konst(width, v);
    }
    if !signed {
        if let Kind::Extend { signed: false, arg: inner } = arg.kind() {
            return extend(false, width, inner.clone());
        }
    }
    SymExpr::raw_extend(signed, width, arg)
}

pub fn concat(high: SymExpr, low: SymExpr) -> SymExpr {
    if let (Some(h), Some(l)) = (high.as_const(), low.as_const()) {
        return konst(high.width() + low.width(), (h << low.width()) | l);
    }
    if let (
        Kind::Extract { hi: h_hi, lo: h_lo, arg: ha },
        Kind::Extract { hi: l_hi, lo: l_lo, arg: la },
    ) = (high.kind(), low.kind())
    {
        if *h_lo == l_hi + 1 && ha == la {
            return extract(*h_hi, *l_lo, ha.clone());
        }
    }
    // concat(x[hi:k], concat(x[k-1:lo], rest)) -> concat(x[hi:lo], rest)
    if let (Kind::Extract { hi: h_hi, lo: h_lo, arg: ha }, Kind::Concat(mid, rest)) = (high.kind(), low.kind()) {
        if let Kind::Extract { hi: m_hi, lo: m_lo, arg: ma } = mid.kind() {
            if *h_lo == m_hi + 1 && ha == ma {
                return concat(extract(*h_hi, *m_lo, ha.clone()), rest.clone());
            }
        }
    }
    if high.as_const() == Some(0) {
        return extend(false, high.width() + low.width(), low);
    }
    SymExpr::raw_concat(high, low)
}

pub fn ite(c: SymExpr, t: SymExpr, e: SymExpr) -> SymExpr {
    if let Some(v) = c.as_const() {
        return if v != 0 { t } else { e };
    }
    if t == e {
        return t;
    }
    if let Kind::Eqz(inner) = c.kind() {
        return ite(inner.clone(), e, t);
    }
    SymExpr::raw_ite(c, t, e)
}

/// Rebuilds `e` bottom-up through the rewriting constructors.
pub fn simplify(e: &SymExpr) -> SymExpr {
    simplify_all(std::slice::from_ref(e)).pop().unwrap()
}

/// Simplifies several roots, sharing work across common subterms.
pub fn simplify_all(roots: &[SymExpr]) -> Vec<SymExpr> {
    let mut memo: HashMap<usize, SymExpr> = HashMap::new();
    for n in postorder(roots) {
        let get = |c: &SymExpr| memo[&c.id()].clone();
        let out = match n.kind() {
            Kind::Const(_) | Kind::Var(_) => n.clone(),
            Kind::Eqz(a) => eqz(get(a)),
            Kind::Bin(op, a, b) => bin(*op, get(a), get(b)),
            Kind::Cmp(op, a, b) => cmp(*op, get(a), get(b)),
            Kind::Extract { hi, lo, arg } => extract(*hi, *lo, get(arg)),
            Kind::Extend { signed, arg } => extend(*signed, n.width(), get(arg)),
            Kind::Concat(h, l) => concat(get(h), get(l)),
            Kind::Ite(c, t, e) => ite(get(c), get(t), get(e)),
        };
        memo.insert(n.id(), out);
    }
    roots.iter().map(|r| memo[&r.id()].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn x() -> SymExpr {
        SymExpr::var("x", 32)
    }

    fn c(v: u64) -> SymExpr {
        SymExpr::constant(32, v)
    }

    #[test]
    fn folds_constants() {
        assert_eq!(simplify(&SymExpr::raw_bin(BvOp::Add, c(2), c(3))), c(5));
        assert_eq!(simplify(&SymExpr::raw_bin(BvOp::Add, c(0xFFFF_FFFF), c(1))), c(0));
        assert_eq!(simplify(&SymExpr::raw_bin(BvOp::Xor, x(), c(0))), x());
    }

    #[test]
    fn algebraic_identities() {
        let a = bin(BvOp::Add, bin(BvOp::Add, x(), c(3)), c(4));
        assert_eq!(a, SymExpr::raw_bin(BvOp::Add, x(), c(7)));
        let y = SymExpr::var("y", 32);
        assert_eq!(bin(BvOp::Xor, bin(BvOp::Xor, x(), y.clone()), y), x());
        assert_eq!(bin(BvOp::Sub, x(), x()), c(0));
        assert_eq!(eqz(eqz(cmp(CmpOp::LtU, x(), c(3)))), cmp(CmpOp::LtU, x(), c(3)));
        assert_eq!(cmp(CmpOp::Eq, c(3), x()), SymExpr::raw_cmp(CmpOp::Eq, x(), c(3)));
    }

    #[test]
    fn byte_split_and_rejoin_is_identity() {
        let bytes: Vec<SymExpr> = (0..4).map(|i| extract(i * 8 + 7, i * 8, x())).collect();
        let joined = concat(
            bytes[3].clone(),
            concat(bytes[2].clone(), concat(bytes[1].clone(), bytes[0].clone())),
        );
        assert_eq!(joined, x());
        let low16 = concat(bytes[1].clone(), bytes[0].clone());
        assert_eq!(low16, SymExpr::raw_extract(15, 0, x()));
    }

    #[test]
    fn simplify_is_idempotent_and_sound_on_sample() {
        let y = SymExpr::var("y", 32);
        let e = SymExpr::raw_ite(
            SymExpr::raw_eqz(SymExpr::raw_cmp(CmpOp::GtS, x(), y.clone())),
            SymExpr::raw_bin(BvOp::Sub, SymExpr::raw_bin(BvOp::Add, x(), y.clone()), y.clone()),
            SymExpr::raw_bin(BvOp::Mul, y.clone(), c(1)),
        );
        let s = simplify(&e);
        assert_eq!(simplify(&s), s);
        for (xv, yv) in [(0u64, 0u64), (5, 3), (3, 5), (0x8000_0000, 1)] {
            let env = BTreeMap::from([("x".to_owned(), xv), ("y".to_owned(), yv)]);
            assert_eq!(e.eval(&env), s.eval(&env));
        }
    }
}
