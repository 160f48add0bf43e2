//! Bitvector constraint solving for path conditions.

mod domain;
mod expr;
mod sat;
mod simplify;
mod smtlib;

use std::collections::BTreeMap;
use std::fmt;

pub use domain::IntervalSet;
pub use expr::{eval_bv, eval_cmp, mask, postorder, sign_extend, vars_of, BvOp, Kind, SymExpr, BOOL_WIDTH};
pub use sat::check_sat;
pub use simplify::{bin, cmp, concat, eqz, extend, extract, ite, simplify, simplify_all};
pub use smtlib::export_smtlib;
pub use crate::wasm::CmpOp;

/// Variable assignment. Values are masked to the variable's width.
pub type Model = BTreeMap<String, u64>;

/// One constraint: `expr != 0` when `nonzero`, else `expr == 0`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Conjunct {
    pub expr: SymExpr,
    pub nonzero: bool,
}

impl Conjunct {
    pub fn holds(&self, model: &Model) -> bool {
        (self.expr.eval(model) != 0) == self.nonzero
    }
}

/// Conjunction of branch decisions along one path.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct PathCondition {
    conjuncts: Vec<Conjunct>,
}

impl PathCondition {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, expr: SymExpr, nonzero: bool) {
        self.conjuncts.push(Conjunct { expr, nonzero });
    }

    /// A copy extended with one more conjunct.
    pub fn with(&self, expr: SymExpr, nonzero: bool) -> Self {
        let mut pc = self.clone();
        pc.push(expr, nonzero);
        pc
    }

    pub fn conjuncts(&self) -> &[Conjunct] {
        &self.conjuncts
    }

    pub fn len(&self) -> usize {
        self.conjuncts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conjuncts.is_empty()
    }

    pub fn vars(&self) -> BTreeMap<String, u8> {
        let roots: Vec<SymExpr> = self.conjuncts.iter().map(|c| c.expr.clone()).collect();
        vars_of(&roots)
    }

    /// True if every conjunct holds; unassigned variables read as 0.
    pub fn holds_under(&self, model: &Model) -> bool {
        self.conjuncts.iter().all(|c| c.holds(model))
    }
}

impl fmt::Display for PathCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.conjuncts.is_empty() {
            return f.write_str("true");
        }
        for (i, c) in self.conjuncts.iter().enumerate() {
            if i > 0 {
                f.write_str(" && ")?;
            }
            if c.nonzero {
                write!(f, "{} != 0", c.expr)?;
            } else {
                write!(f, "{} == 0", c.expr)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckBudget {
    pub max_millis: u64,
    /// Largest domain product that may be enumerated exhaustively.
    pub max_enumeration: u64,
}

impl Default for CheckBudget {
    fn default() -> Self {
        CheckBudget {
            max_millis: 1000,
            max_enumeration: 65536,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnknownReason {
    /// Time or enumeration budget exhausted.
    Budget,
    /// A model was produced but failed independent re-verification.
    Unsupported,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SatResult {
    Sat(Model),
    Unsat,
    Unknown(UnknownReason),
}

impl SatResult {
    pub fn is_sat(&self) -> bool {
        matches!(self, SatResult::Sat(_))
    }

    pub fn is_unsat(&self) -> bool {
        matches!(self, SatResult::Unsat)
    }
}
