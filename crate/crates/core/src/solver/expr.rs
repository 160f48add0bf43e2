//! Bitvector expressions. Nodes are immutable and shared through `Arc`, so
//! an expression is a DAG; every traversal here is iterative and memoized by
//! node identity.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use crate::wasm::CmpOp;

/// Bitvector operators with SMT-LIB `QF_BV` semantics: division by zero is
/// defined and shifts by at least the width saturate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BvOp {
    Add,
    Sub,
    Mul,
    UDiv,
    SDiv,
    URem,
    SRem,
    And,
    Or,
    Xor,
    Shl,
    LShr,
    AShr,
}

impl BvOp {
    pub const ALL: [BvOp; 13] = [
        BvOp::Add,
        BvOp::Sub,
        BvOp::Mul,
        BvOp::UDiv,
        BvOp::SDiv,
        BvOp::URem,
        BvOp::SRem,
        BvOp::And,
        BvOp::Or,
        BvOp::Xor,
        BvOp::Shl,
        BvOp::LShr,
        BvOp::AShr,
    ];

    pub fn smt_name(self) -> &'static str {
        match self {
            BvOp::Add => "bvadd",
            BvOp::Sub => "bvsub",
            BvOp::Mul => "bvmul",
            BvOp::UDiv => "bvudiv",
            BvOp::SDiv => "bvsdiv",
            BvOp::URem => "bvurem",
            BvOp::SRem => "bvsrem",
            BvOp::And => "bvand",
            BvOp::Or => "bvor",
            BvOp::Xor => "bvxor",
            BvOp::Shl => "bvshl",
            BvOp::LShr => "bvlshr",
            BvOp::AShr => "bvashr",
        }
    }

    pub fn is_commutative(self) -> bool {
        matches!(self, BvOp::Add | BvOp::Mul | BvOp::And | BvOp::Or | BvOp::Xor)
    }
}

pub fn mask(width: u8) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

pub fn sign_extend(v: u64, width: u8) -> i64 {
    if width >= 64 {
        v as i64
    } else {
        let s = 64 - width as u32;
        ((v << s) as i64) >> s
    }
}

/// Evaluates a binary operator on `width`-bit operands.
pub fn eval_bv(op: BvOp, width: u8, a: u64, b: u64) -> u64 {
    let m = mask(width);
    let (a, b) = (a & m, b & m);
    let neg = |v: u64| v.wrapping_neg() & m;
    let msb = |v: u64| (v >> (width - 1)) & 1 == 1;
    let r = match op {
        BvOp::Add => a.wrapping_add(b),
        BvOp::Sub => a.wrapping_sub(b),
        BvOp::Mul => a.wrapping_mul(b),
        BvOp::UDiv => {
            if b == 0 {
                m
            } else {
                a / b
            }
        }
        BvOp::URem => {
            if b == 0 {
                a
            } else {
                a % b
            }
        }
        BvOp::SDiv => {
            let udiv = |x: u64, y: u64| eval_bv(BvOp::UDiv, width, x, y);
            match (msb(a), msb(b)) {
                (false, false) => udiv(a, b),
                (true, false) => neg(udiv(neg(a), b)),
                (false, true) => neg(udiv(a, neg(b))),
                (true, true) => udiv(neg(a), neg(b)),
            }
        }
        BvOp::SRem => {
            let urem = |x: u64, y: u64| eval_bv(BvOp::URem, width, x, y);
            match (msb(a), msb(b)) {
                (false, false) => urem(a, b),
                (true, false) => neg(urem(neg(a), b)),
                (false, true) => urem(a, neg(b)),
                (true, true) => neg(urem(neg(a), neg(b))),
            }
        }
        BvOp::And => a & b,
        BvOp::Or => a | b,
        BvOp::Xor => a ^ b,
        BvOp::Shl => {
            if b >= width as u64 {
                0
            } else {
                a << b
            }
        }
        BvOp::LShr => {
            if b >= width as u64 {
                0
            } else {
                a >> b
            }
        }
        BvOp::AShr => {
            let s = sign_extend(a, width);
            if b >= width as u64 {
                (s >> 63) as u64
            } else {
                (s >> b) as u64
            }
        }
    };
    r & m
}

pub fn eval_cmp(op: CmpOp, width: u8, a: u64, b: u64) -> bool {
    let m = mask(width);
    let (a, b) = (a & m, b & m);
    let (sa, sb) = (sign_extend(a, width), sign_extend(b, width));
    match op {
        CmpOp::Eq => a == b,
        CmpOp::Ne => a != b,
        CmpOp::LtS => sa < sb,
        CmpOp::LtU => a < b,
        CmpOp::GtS => sa > sb,
        CmpOp::GtU => a > b,
        CmpOp::LeS => sa <= sb,
        CmpOp::LeU => a <= b,
        CmpOp::GeS => sa >= sb,
        CmpOp::GeU => a >= b,
    }
}

pub fn cmp_smt_name(op: CmpOp) -> &'static str {
    match op {
        CmpOp::Eq | CmpOp::Ne => "=",
        CmpOp::LtS => "bvslt",
        CmpOp::LtU => "bvult",
        CmpOp::GtS => "bvsgt",
        CmpOp::GtU => "bvugt",
        CmpOp::LeS => "bvsle",
        CmpOp::LeU => "bvule",
        CmpOp::GeS => "bvsge",
        CmpOp::GeU => "bvuge",
    }
}

/// Width of the boolean-valued results of comparisons and `eqz`.
pub const BOOL_WIDTH: u8 = 32;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Kind {
    Const(u64),
    Var(Arc<str>),
    /// 1 if the operand is zero, else 0.
    Eqz(SymExpr),
    Bin(BvOp, SymExpr, SymExpr),
    /// 1 if the comparison holds, else 0.
    Cmp(CmpOp, SymExpr, SymExpr),
    Extract { hi: u8, lo: u8, arg: SymExpr },
    /// Extension of `arg` to the node's width.
    Extend { signed: bool, arg: SymExpr },
    /// `high` occupies the most significant bits.
    Concat(SymExpr, SymExpr),
    /// `cond != 0 ? then : else`.
    Ite(SymExpr, SymExpr, SymExpr),
}

#[derive(Debug)]
pub struct Node {
    kind: Kind,
    width: u8,
    hash: u64,
}

/// Shared handle to an expression node.
#[derive(Clone)]
pub struct SymExpr(Arc<Node>);

impl PartialEq for SymExpr {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
            || (self.0.hash == other.0.hash
                && self.0.width == other.0.width
                && self.0.kind == other.0.kind)
    }
}

impl Eq for SymExpr {}

impl Hash for SymExpr {
    fn hash<H: Hasher>(&self, state: &mut H) {
        state.write_u64(self.0.hash);
    }
}

impl fmt::Debug for SymExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

fn structural_hash(kind: &Kind, width: u8) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    width.hash(&mut h);
    std::mem::discriminant(kind).hash(&mut h);
    match kind {
        Kind::Const(v) => v.hash(&mut h),
        Kind::Var(n) => n.hash(&mut h),
        Kind::Eqz(a) => a.0.hash.hash(&mut h),
        Kind::Bin(op, a, b) => (op, a.0.hash, b.0.hash).hash(&mut h),
        Kind::Cmp(op, a, b) => (op, a.0.hash, b.0.hash).hash(&mut h),
        Kind::Extract { hi, lo, arg } => (hi, lo, arg.0.hash).hash(&mut h),
        Kind::Extend { signed, arg } => (signed, arg.0.hash).hash(&mut h),
        Kind::Concat(a, b) => (a.0.hash, b.0.hash).hash(&mut h),
        Kind::Ite(c, t, e) => (c.0.hash, t.0.hash, e.0.hash).hash(&mut h),
    }
    h.finish()
}

impl SymExpr {
    fn make(kind: Kind, width: u8) -> SymExpr {
        assert!((1..=64).contains(&width), "width {width} out of range");
        let hash = structural_hash(&kind, width);
        SymExpr(Arc::new(Node { kind, width, hash }))
    }

    pub fn constant(width: u8, value: u64) -> SymExpr {
        SymExpr::make(Kind::Const(value & mask(width)), width)
    }

    pub fn var(name: &str, width: u8) -> SymExpr {
        SymExpr::make(Kind::Var(Arc::from(name)), width)
    }

    /// The constructors below build nodes verbatim; see `simplify` for the
    /// rewriting constructors.
    pub fn raw_eqz(a: SymExpr) -> SymExpr {
        SymExpr::make(Kind::Eqz(a), BOOL_WIDTH)
    }

    pub fn raw_bin(op: BvOp, a: SymExpr, b: SymExpr) -> SymExpr {
        assert_eq!(a.width(), b.width(), "{op:?} operand widths differ");
        let w = a.width();
        SymExpr::make(Kind::Bin(op, a, b), w)
    }

    pub fn raw_cmp(op: CmpOp, a: SymExpr, b: SymExpr) -> SymExpr {
        assert_eq!(a.width(), b.width(), "{op:?} operand widths differ");
        SymExpr::make(Kind::Cmp(op, a, b), BOOL_WIDTH)
    }

    pub fn raw_extract(hi: u8, lo: u8, arg: SymExpr) -> SymExpr {
        assert!(lo <= hi && hi < arg.width(), "bad extract [{hi}:{lo}]");
        SymExpr::make(Kind::Extract { hi, lo, arg }, hi - lo + 1)
    }

    pub fn raw_extend(signed: bool, width: u8, arg: SymExpr) -> SymExpr {
        assert!(width >= arg.width(), "extension narrows");
        SymExpr::make(Kind::Extend { signed, arg }, width)
    }

    pub fn raw_concat(high: SymExpr, low: SymExpr) -> SymExpr {
        let w = high.width() + low.width();
        SymExpr::make(Kind::Concat(high, low), w)
    }

    pub fn raw_ite(c: SymExpr, t: SymExpr, e: SymExpr) -> SymExpr {
        assert_eq!(t.width(), e.width(), "ite arm widths differ");
        let w = t.width();
        SymExpr::make(Kind::Ite(c, t, e), w)
    }

    pub fn kind(&self) -> &Kind {
        &self.0.kind
    }

    pub fn width(&self) -> u8 {
        self.0.width
    }

    pub fn as_const(&self) -> Option<u64> {
        match self.0.kind {
            Kind::Const(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_var(&self) -> Option<&str> {
        match &self.0.kind {
            Kind::Var(n) => Some(n),
            _ => None,
        }
    }

    pub fn is_const(&self) -> bool {
        self.as_const().is_some()
    }

    /// Identity of the shared node, for memo tables.
    pub fn id(&self) -> usize {
        Arc::as_ptr(&self.0) as usize
    }

    pub fn ptr_eq(&self, other: &SymExpr) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    pub fn children(&self) -> Vec<&SymExpr> {
        match &self.0.kind {
            Kind::Const(_) | Kind::Var(_) => vec![],
            Kind::Eqz(a) | Kind::Extract { arg: a, .. } | Kind::Extend { arg: a, .. } => vec![a],
            Kind::Bin(_, a, b) | Kind::Cmp(_, a, b) | Kind::Concat(a, b) => vec![a, b],
            Kind::Ite(c, t, e) => vec![c, t, e],
        }
    }

    /// Free variables with their widths, sorted by name.
    pub fn vars(&self) -> BTreeMap<String, u8> {
        vars_of(std::slice::from_ref(self))
    }

    /// Number of distinct nodes.
    pub fn dag_size(&self) -> usize {
        postorder(std::slice::from_ref(self)).len()
    }

    /// Evaluates under `env`; unbound variables read as zero.
    pub fn eval(&self, env: &BTreeMap<String, u64>) -> u64 {
        let order = postorder(std::slice::from_ref(self));
        let mut vals: HashMap<usize, u64> = HashMap::with_capacity(order.len());
        for n in &order {
            let get = |e: &SymExpr| vals[&e.id()];
            let w = n.width();
            let v = match n.kind() {
                Kind::Const(c) => *c,
                Kind::Var(name) => env.get(&**name).copied().unwrap_or(0) & mask(w),
                Kind::Eqz(a) => (get(a) == 0) as u64,
                Kind::Bin(op, a, b) => eval_bv(*op, w, get(a), get(b)),
                Kind::Cmp(op, a, b) => eval_cmp(*op, a.width(), get(a), get(b)) as u64,
                Kind::Extract { hi, lo, arg } => (get(arg) >> lo) & mask(hi - lo + 1),
                Kind::Extend { signed, arg } => {
                    if *signed {
                        sign_extend(get(arg), arg.width()) as u64 & mask(w)
                    } else {
                        get(arg)
                    }
                }
                Kind::Concat(h, l) => (get(h) << l.width()) | get(l),
                Kind::Ite(c, t, e) => {
                    if get(c) != 0 {
                        get(t)
                    } else {
                        get(e)
                    }
                }
            };
            vals.insert(n.id(), v);
        }
        vals[&self.id()]
    }
}

/// Distinct nodes reachable from `roots`, children before parents.
pub fn postorder(roots: &[SymExpr]) -> Vec<SymExpr> {
    let mut seen: HashSet<usize> = HashSet::new();
    let mut out = Vec::new();
    let mut stack: Vec<(SymExpr, bool)> = roots.iter().rev().map(|r| (r.clone(), false)).collect();
    while let Some((n, expanded)) = stack.pop() {
        if expanded {
            out.push(n);
            continue;
        }
        if !seen.insert(n.id()) {
            continue;
        }
        stack.push((n.clone(), true));
        for c in n.children().into_iter().rev() {
            if !seen.contains(&c.id()) {
                stack.push((c.clone(), false));
            }
        }
    }
    out
}

pub fn vars_of(roots: &[SymExpr]) -> BTreeMap<String, u8> {
    postorder(roots)
        .iter()
        .filter_map(|n| n.as_var().map(|v| (v.to_owned(), n.width())))
        .collect()
}

impl fmt::Display for SymExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind() {
            Kind::Const(v) => write!(f, "{v}:{}", self.width()),
            Kind::Var(n) => write!(f, "{n}"),
            Kind::Eqz(a) => write!(f, "(eqz {a})"),
            Kind::Bin(op, a, b) => write!(f, "({} {a} {b})", op.smt_name()),
            Kind::Cmp(op, a, b) => write!(f, "({} {a} {b})", op.suffix()),
            Kind::Extract { hi, lo, arg } => write!(f, "(extract[{hi}:{lo}] {arg})"),
            Kind::Extend { signed, arg } => {
                let s = if *signed { "sext" } else { "zext" };
                write!(f, "({s}{} {arg})", self.width())
            }
            Kind::Concat(h, l) => write!(f, "(concat {h} {l})"),
            Kind::Ite(c, t, e) => write!(f, "(ite {c} {t} {e})"),
        }
    }
}
