//! Seeded generators shared by the integration tests: small programs whose
//! entry arguments are masked to 8 bits, and path conditions over 8-bit
//! bounded variables that carry their own evaluator.
#![allow(dead_code)]

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tcpa_core::interp::{eval_binary, eval_compare};
use tcpa_core::solver::{self, BvOp, Model, PathCondition, SymExpr};
use tcpa_core::wasm::{BinOp, CmpOp, IntType};

pub const ASSERT_IMPORT: &str = r#"(import "env" "tcpa_assert" (func $assert (param i32)))"#;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A generated program: one export `f` taking `params` i32 arguments, each
/// masked to its low 8 bits before use. Local `params` is a scratch slot.
#[derive(Debug, Clone)]
pub struct GenProgram {
    pub source: String,
    pub params: usize,
}

impl GenProgram {
    /// Every argument vector the program can distinguish.
    pub fn inputs(&self) -> Vec<Vec<i64>> {
        let mut all = vec![Vec::new()];
        for _ in 0..self.params {
            all = all
                .into_iter()
                .flat_map(|v: Vec<i64>| {
                    (0..256i64).map(move |x| {
                        let mut w = v.clone();
                        w.push(x);
                        w
                    })
                })
                .collect();
        }
        all
    }
}

struct ProgGen<'r> {
    rng: &'r mut ChaCha8Rng,
    out: String,
    locals: u32,
    indent: usize,
}

impl ProgGen<'_> {
    fn line(&mut self, s: &str) {
        let _ = writeln!(self.out, "{:w$}{s}", "", w = 4 + 2 * self.indent);
    }

    fn leaf(&mut self) {
        if self.rng.gen_bool(0.6) {
            let l = self.rng.gen_range(0..self.locals);
            self.line(&format!("local.get {l}"));
        } else {
            let c: i32 = *[0, 1, 2, 3, 7, 16, 100, 127, 128, 200, 255, 256, -1]
                .choose(self.rng)
                .unwrap();
            self.line(&format!("i32.const {c}"));
        }
    }

    /// Pushes one i32.
    fn expr(&mut self, depth: u32) {
        if depth == 0 || self.rng.gen_bool(0.3) {
            return self.leaf();
        }
        match self.rng.gen_range(0..10) {
            0..=5 => {
                self.expr(depth - 1);
                self.expr(depth - 1);
                let op = ["add", "sub", "mul", "and", "or", "xor", "shl", "shr_u", "shr_s"]
                    .choose(self.rng)
                    .unwrap();
                self.line(&format!("i32.{op}"));
            }
            6 => {
                // Divisor may be zero; the `or 1` variant never is.
                self.expr(depth - 1);
                self.expr(depth - 1);
                if self.rng.gen_bool(0.5) {
                    self.line("i32.const 1");
                    self.line("i32.or");
                }
                let op = ["div_u", "rem_u", "div_s", "rem_s"].choose(self.rng).unwrap();
                self.line(&format!("i32.{op}"));
            }
            7 | 8 => self.cond(depth - 1),
            _ => {
                self.expr(depth - 1);
                self.line("i32.eqz");
            }
        }
    }

    /// Pushes an i32 comparison result.
    fn cond(&mut self, depth: u32) {
        self.expr(depth);
        self.expr(depth);
        let op = ["eq", "ne", "lt_u", "lt_s", "gt_u", "gt_s", "le_u", "le_s", "ge_u", "ge_s"]
            .choose(self.rng)
            .unwrap();
        self.line(&format!("i32.{op}"));
    }

    fn stmt(&mut self, depth: u32, params: u32) {
        match self.rng.gen_range(0..10) {
            0..=3 => {
                self.expr(3);
                self.line(&format!("local.set {params}"));
            }
            4 | 5 if depth > 0 => {
                self.cond(2);
                self.line("if");
                self.indent += 1;
                for _ in 0..self.rng.gen_range(1..=2) {
                    self.stmt(depth - 1, params);
                }
                self.indent -= 1;
                if self.rng.gen_bool(0.5) {
                    self.line("else");
                    self.indent += 1;
                    self.stmt(depth - 1, params);
                    self.indent -= 1;
                }
                self.line("end");
            }
            6 | 7 => {
                // Half the assertions are tautologies over masked inputs.
                if self.rng.gen_bool(0.5) {
                    let l = self.rng.gen_range(0..params);
                    self.line(&format!("local.get {l}"));
                    self.line("i32.const 256");
                    self.line("i32.lt_u");
                } else {
                    self.cond(2);
                }
                self.line("call $assert");
            }
            _ => {
                self.expr(2);
                self.line("drop");
            }
        }
    }
}

pub fn gen_program(seed: u64) -> GenProgram {
    let mut r = rng(seed);
    let params = r.gen_range(1..=2u32);
    let mut g = ProgGen {
        rng: &mut r,
        out: String::new(),
        locals: params + 1,
        indent: 0,
    };
    for l in 0..params {
        g.line(&format!("local.get {l}"));
        g.line("i32.const 255");
        g.line("i32.and");
        g.line(&format!("local.set {l}"));
    }
    let stmts = g.rng.gen_range(2..=5);
    for _ in 0..stmts {
        g.stmt(2, params);
    }
    g.line(&format!("local.get {params}"));
    let sig = vec!["i32"; params as usize].join(" ");
    let source = format!(
        "(module\n  {ASSERT_IMPORT}\n  (func (export \"f\") (param {sig}) (result i32)\n    (local i32)\n{}  ))\n",
        g.out
    );
    GenProgram {
        source,
        params: params as usize,
    }
}

/// Integer term over i32 variables, mirrored into a solver expression and an
/// evaluator that uses the interpreter's arithmetic.
#[derive(Debug, Clone)]
pub enum Term {
    Var(usize),
    Const(u32),
    Bin(BinOp, Box<Term>, Box<Term>),
    Eqz(Box<Term>),
}

fn bv(op: BinOp) -> BvOp {
    match op {
        BinOp::Add => BvOp::Add,
        BinOp::Sub => BvOp::Sub,
        BinOp::Mul => BvOp::Mul,
        BinOp::DivS => BvOp::SDiv,
        BinOp::DivU => BvOp::UDiv,
        BinOp::RemS => BvOp::SRem,
        BinOp::RemU => BvOp::URem,
        BinOp::And => BvOp::And,
        BinOp::Or => BvOp::Or,
        BinOp::Xor => BvOp::Xor,
        BinOp::Shl => BvOp::Shl,
        BinOp::ShrS => BvOp::AShr,
        BinOp::ShrU => BvOp::LShr,
    }
}

pub fn var_name(i: usize) -> String {
    format!("x{i}")
}

impl Term {
    pub fn sym(&self) -> SymExpr {
        match self {
            Term::Var(i) => SymExpr::var(&var_name(*i), 32),
            Term::Const(c) => SymExpr::constant(32, *c as u64),
            Term::Bin(op, a, b) => solver::bin(bv(*op), a.sym(), b.sym()),
            Term::Eqz(a) => solver::eqz(a.sym()),
        }
    }

    pub fn eval(&self, env: &[u64]) -> u64 {
        match self {
            Term::Var(i) => env[*i],
            Term::Const(c) => *c as u64,
            Term::Bin(op, a, b) => eval_binary(IntType::I32, *op, a.eval(env), b.eval(env))
                .expect("generated divisors are nonzero constants"),
            Term::Eqz(a) => (a.eval(env) == 0) as u64,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Atom {
    Cmp(CmpOp, Term, Term),
    Truthy(Term),
}

#[derive(Debug, Clone)]
pub struct GenCondition {
    pub vars: usize,
    /// `(atom, required truth value)`
    pub atoms: Vec<(Atom, bool)>,
}

impl GenCondition {
    /// Each variable is bounded to 8 bits by a leading `x <=u 255` conjunct.
    pub fn path_condition(&self) -> PathCondition {
        let mut pc = PathCondition::new();
        for v in 0..self.vars {
            pc.push(
                solver::cmp(CmpOp::LeU, Term::Var(v).sym(), SymExpr::constant(32, 255)),
                true,
            );
        }
        for (a, want) in &self.atoms {
            let e = match a {
                Atom::Cmp(op, l, r) => solver::cmp(*op, l.sym(), r.sym()),
                Atom::Truthy(t) => t.sym(),
            };
            pc.push(e, *want);
        }
        pc
    }

    pub fn holds(&self, env: &[u64]) -> bool {
        env.iter().all(|&x| x <= 255)
            && self.atoms.iter().all(|(a, want)| {
                let v = match a {
                    Atom::Cmp(op, l, r) => eval_compare(IntType::I32, *op, l.eval(env), r.eval(env)),
                    Atom::Truthy(t) => t.eval(env) != 0,
                };
                v == *want
            })
    }

    /// Exhaustive search over the 8-bit box.
    pub fn satisfiable(&self) -> bool {
        let n = 256u64.pow(self.vars as u32);
        (0..n).any(|i| {
            let env: Vec<u64> = (0..self.vars).map(|v| (i >> (8 * v)) & 0xFF).collect();
            self.holds(&env)
        })
    }

    pub fn model_env(&self, m: &Model) -> Vec<u64> {
        (0..self.vars)
            .map(|v| m.get(&var_name(v)).copied().unwrap_or(0))
            .collect()
    }
}

fn gen_term(r: &mut ChaCha8Rng, vars: usize, depth: u32) -> Term {
    if depth == 0 || r.gen_bool(0.35) {
        return if r.gen_bool(0.6) {
            Term::Var(r.gen_range(0..vars))
        } else {
            Term::Const(*[0u32, 1, 2, 3, 5, 7, 8, 15, 16, 64, 100, 127, 128, 200, 255, 256, 0xFFFF_FFFF]
                .choose(r)
                .unwrap())
        };
    }
    let a = Box::new(gen_term(r, vars, depth - 1));
    match r.gen_range(0..12) {
        0..=7 => {
            let op = *[BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::And, BinOp::Or, BinOp::Xor]
                .choose(r)
                .unwrap();
            Term::Bin(op, a, Box::new(gen_term(r, vars, depth - 1)))
        }
        8 => {
            let op = *[BinOp::Shl, BinOp::ShrU, BinOp::ShrS].choose(r).unwrap();
            Term::Bin(op, a, Box::new(Term::Const(r.gen_range(0..32))))
        }
        9 | 10 => {
            let op = *[BinOp::DivU, BinOp::RemU, BinOp::DivS, BinOp::RemS].choose(r).unwrap();
            Term::Bin(op, a, Box::new(Term::Const(r.gen_range(1..=255))))
        }
        _ => Term::Eqz(a),
    }
}

pub fn gen_condition(seed: u64) -> GenCondition {
    let mut r = rng(seed);
    let vars = r.gen_range(1..=2);
    let n = r.gen_range(1..=4);
    let atoms = (0..n)
        .map(|_| {
            let atom = if r.gen_bool(0.75) {
                let op = *CmpOp::ALL.choose(&mut r).unwrap();
                Atom::Cmp(op, gen_term(&mut r, vars, 2), gen_term(&mut r, vars, 2))
            } else {
                Atom::Truthy(gen_term(&mut r, vars, 3))
            };
            (atom, r.gen_bool(0.6))
        })
        .collect();
    GenCondition { vars, atoms }
}
