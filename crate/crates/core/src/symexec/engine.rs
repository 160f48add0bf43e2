//! Configurations and the single-step transition relation.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use super::graph::{DepKind, SemanticGraph, Vertex};
use super::{ExploreBounds, SymexecError};
use crate::interp::{TrapKind, MAX_CALL_DEPTH};
use crate::solver::{
    self, check_sat, BvOp, CheckBudget, Model, PathCondition, SatResult, SymExpr,
};
use crate::wasm::{BinOp, CmpOp, IntType, Module, Op, SourceLocation, SourceMap, ValType};

/// Vertices a value was computed from.
pub type Deps = Arc<BTreeSet<Vertex>>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymValue {
    pub expr: SymExpr,
    pub deps: Deps,
}

impl SymValue {
    fn new(expr: SymExpr, deps: Deps) -> Self {
        SymValue { expr, deps }
    }

    fn constant(width: u8, v: u64) -> Self {
        SymValue::new(SymExpr::constant(width, v), Deps::default())
    }

    fn joined(expr: SymExpr, parts: &[&SymValue]) -> Self {
        let mut set = BTreeSet::new();
        for p in parts {
            set.extend(p.deps.iter().copied());
        }
        SymValue::new(expr, Arc::new(set))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UnknownCause {
    /// A loop exceeded the unrolling bound.
    LoopBound,
    /// The path exceeded `max_depth` steps.
    DepthBound,
    /// A solver query returned unknown.
    Solver,
    /// A symbolic address had more feasible values than may be concretized.
    Concretization,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PathStatus {
    Running,
    Returned(Vec<SymExpr>),
    /// Reached a trap; feasibility is decided by the explorer.
    Trapped { kind: TrapKind, offset: u32 },
    Unknown(UnknownCause),
}

#[derive(Debug, Clone)]
struct Label {
    height: usize,
    arity: usize,
    start: usize,
    is_loop: bool,
    /// Branch conditions guarding the rest of this construct.
    guards: Vec<Vertex>,
    iterations: u32,
    /// Path-condition length at the last loop entry or back-edge.
    pc_len: usize,
}

#[derive(Debug, Clone)]
pub struct Frame {
    pub func: u32,
    pub pc: usize,
    pub locals: Vec<SymValue>,
    labels: Vec<Label>,
    base: usize,
    arity: usize,
    is_start: bool,
    /// Guards inherited from the caller plus those targeting the function label.
    guards: Vec<Vertex>,
}

/// Per-module state `⟨memory, globals⟩`; locals live in frames.
#[derive(Debug, Clone)]
pub struct ModuleState {
    /// Byte-granular memory; absent addresses hold 0.
    pub memory: Arc<BTreeMap<u32, SymExpr>>,
    pub memory_len: u64,
    pub globals: Vec<SymValue>,
}

/// One symbolic execution state.
#[derive(Debug, Clone)]
pub struct Configuration {
    /// Source position of the next instruction, when mapped.
    pub src: Option<SourceLocation>,
    pub frames: Vec<Frame>,
    pub stack: Vec<SymValue>,
    pub module_states: Vec<ModuleState>,
    pub path_condition: PathCondition,
    pub graph: Arc<SemanticGraph>,
    pub status: PathStatus,
    pub steps: u64,
    /// A model known to satisfy some prefix of the path condition.
    pub hint: Option<Arc<Model>>,
}

impl Configuration {
    /// `(function index, instruction index)` of the next instruction.
    pub fn pc(&self) -> Option<(u32, usize)> {
        self.frames.last().map(|f| (f.func, f.pc))
    }

    fn frame(&mut self) -> &mut Frame {
        self.frames.last_mut().expect("running configuration has a frame")
    }

    fn pop(&mut self) -> SymValue {
        self.stack.pop().expect("validated stack")
    }

    fn push(&mut self, v: SymValue) {
        self.stack.push(v);
    }

    /// Adds `expr != 0` (or `== 0`). Returns `None` when the conjunct
    /// simplifies to false.
    fn assume(mut self, expr: &SymExpr, nonzero: bool) -> Option<Self> {
        let e = solver::simplify(expr);
        match e.as_const() {
            Some(v) => ((v != 0) == nonzero).then_some(self),
            None => {
                self.path_condition.push(e, nonzero);
                Some(self)
            }
        }
    }

    fn trapped(mut self, kind: TrapKind, offset: u32) -> Self {
        self.status = PathStatus::Trapped { kind, offset };
        self
    }

    fn active_guards(&self) -> Vec<Vertex> {
        let Some(f) = self.frames.last() else {
            return Vec::new();
        };
        let mut g = f.guards.clone();
        for l in &f.labels {
            g.extend(l.guards.iter().copied());
        }
        g.sort_unstable();
        g.dedup();
        g
    }

    /// Records that `target` was assigned from `value`.
    fn assign(&mut self, target: Vertex, deps: &[&Deps]) {
        let guards = self.active_guards();
        let g = Arc::make_mut(&mut self.graph);
        g.add_vertex(target);
        for d in deps {
            for v in d.iter() {
                g.add_edge(*v, target, DepKind::Data);
            }
        }
        for v in guards {
            g.add_edge(v, target, DepKind::Control);
        }
    }

    fn branch_vertex(&mut self, offset: u32, cond: &SymValue) -> Vertex {
        let v = Vertex::Branch(offset);
        let g = Arc::make_mut(&mut self.graph);
        g.add_vertex(v);
        for d in cond.deps.iter() {
            g.add_edge(*d, v, DepKind::Data);
        }
        v
    }

    /// Guards the remainder of the construct `depth` labels out.
    fn guard_until(&mut self, depth: u32, v: Vertex) {
        let f = self.frame();
        let depth = depth as usize;
        if depth >= f.labels.len() {
            f.guards.push(v);
        } else {
            let i = f.labels.len() - 1 - depth;
            f.labels[i].guards.push(v);
        }
    }

    fn call_depth(&self) -> usize {
        let in_start = self.frames.get(1).is_some_and(|f| f.is_start);
        self.frames.len() - in_start as usize
    }

    fn leave(&mut self) {
        let f = self.frames.pop().unwrap();
        let results = self.stack.split_off(self.stack.len() - f.arity);
        self.stack.truncate(f.base);
        self.stack.extend(results);
        if self.frames.is_empty() {
            let values = self.stack.iter().map(|v| v.expr.clone()).collect();
            self.status = PathStatus::Returned(values);
        }
    }

    /// Takes the branch to `depth`. Back-edges that follow new path
    /// constraints count towards the unrolling bound.
    fn branch(&mut self, module: &Module, depth: u32, unroll: u32) {
        let pc_len = self.path_condition.len();
        let frame = self.frames.last_mut().unwrap();
        let depth = depth as usize;
        if depth >= frame.labels.len() {
            self.leave();
            return;
        }
        let idx = frame.labels.len() - 1 - depth;
        let control = &module.defined(frame.func).unwrap().control;
        let label = &mut frame.labels[idx];
        if label.is_loop {
            if pc_len > label.pc_len {
                label.pc_len = pc_len;
                label.iterations += 1;
                if label.iterations > unroll {
                    self.status = PathStatus::Unknown(UnknownCause::LoopBound);
                    return;
                }
            }
            let (height, start) = (label.height, label.start);
            frame.pc = start + 1;
            frame.labels.truncate(idx + 1);
            self.stack.truncate(height);
        } else {
            let (height, arity, start) = (label.height, label.arity, label.start);
            frame.pc = control.end_of(start).unwrap() + 1;
            frame.labels.truncate(idx);
            let keep = self.stack.split_off(self.stack.len() - arity);
            self.stack.truncate(height);
            self.stack.extend(keep);
        }
    }
}

/// Width-matched solver operator for a WASM binary operator.
fn bv_op(op: BinOp) -> BvOp {
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

fn width_of(t: ValType) -> u8 {
    if t == ValType::I64 {
        64
    } else {
        32
    }
}

/// Symbolic entry argument `i`.
pub fn arg_name(i: usize) -> String {
    format!("arg{i}")
}

/// Transition relation over configurations of one module.
pub struct Engine<'a> {
    pub module: &'a Module,
    pub src_map: &'a SourceMap,
    pub solver_calls: &'a AtomicU64,
}

impl<'a> Engine<'a> {
    pub(crate) fn check(&self, pc: &PathCondition, budget: &CheckBudget) -> SatResult {
        self.solver_calls.fetch_add(1, Ordering::Relaxed);
        check_sat(pc, budget)
    }

    fn location(&self, c: &Configuration) -> Option<SourceLocation> {
        let (func, pc) = c.pc()?;
        let offset = self.module.defined(func)?.body.get(pc)?.offset;
        self.src_map.location(offset)
    }

    /// Entry configuration for `func` with fresh symbolic arguments, zeroed
    /// memory and initialised globals. A start function, if any, runs first.
    pub fn entry_configuration(&self, func: u32) -> Result<Configuration, SymexecError> {
        let m = self.module;
        let ty = m
            .func_type(func)
            .ok_or(SymexecError::PcOutOfBounds)?;
        if m.defined(func).is_none() || !ty.params.iter().chain(&ty.results).all(|t| t.is_int()) {
            return Err(SymexecError::UnsupportedEntry(ty.to_string()));
        }
        let globals = m
            .globals
            .iter()
            .map(|g| SymValue::constant(width_of(g.ty), g.init))
            .collect();
        let mut c = Configuration {
            src: None,
            frames: Vec::new(),
            stack: Vec::new(),
            module_states: vec![ModuleState {
                memory: Arc::default(),
                memory_len: m.memory_bytes() as u64,
                globals,
            }],
            path_condition: PathCondition::new(),
            graph: Arc::default(),
            status: PathStatus::Running,
            steps: 0,
            hint: Some(Arc::default()),
        };
        for (i, t) in ty.params.iter().enumerate() {
            let v = Vertex::Local { func, index: i as u32 };
            Arc::make_mut(&mut c.graph).add_vertex(v);
            c.push(SymValue::new(SymExpr::var(&arg_name(i), width_of(*t)), Deps::default()));
        }
        self.push_frame(&mut c, func, false);
        if let Some(start) = m.start {
            self.push_frame(&mut c, start, true);
        }
        c.src = self.location(&c);
        Ok(c)
    }

    fn push_frame(&self, c: &mut Configuration, func: u32, is_start: bool) {
        let m = self.module;
        let ty = m.func_type(func).unwrap();
        let def = m.defined(func).unwrap();
        let n = ty.params.len();
        let guards = c.active_guards();
        let mut locals = c.stack.split_off(c.stack.len() - n);
        for (i, l) in locals.iter_mut().enumerate() {
            let target = Vertex::Local { func, index: i as u32 };
            let deps = l.deps.clone();
            c.assign(target, &[&deps]);
            l.deps = Arc::new(BTreeSet::from([target]));
        }
        locals.extend(def.locals.iter().map(|t| SymValue::constant(width_of(*t), 0)));
        c.frames.push(Frame {
            func,
            pc: 0,
            locals,
            labels: Vec::new(),
            base: c.stack.len(),
            arity: ty.results.len(),
            is_start,
            guards,
        });
    }

    /// Calls `func` with arguments on the stack; may fork for the assertion hook.
    fn call(&self, mut c: Configuration, func: u32, offset: u32) -> Vec<Configuration> {
        if self.module.is_assert_import(func) {
            let v = c.pop();
            let mut out = Vec::new();
            if let Some(t) = c.clone().assume(&v.expr, false) {
                out.push(t.trapped(TrapKind::AssertFailed, offset));
            }
            out.extend(c.assume(&v.expr, true));
            return out;
        }
        if c.call_depth() >= MAX_CALL_DEPTH {
            return vec![c.trapped(TrapKind::CallStackExhausted, offset)];
        }
        self.push_frame(&mut c, func, false);
        vec![c]
    }

    /// Up to four feasible values of `e` under `pc`, or the reason none
    /// can be listed.
    fn concretize(
        &self,
        pc: &PathCondition,
        e: &SymExpr,
        budget: &CheckBudget,
    ) -> Result<Vec<u64>, UnknownCause> {
        if let Some(v) = e.as_const() {
            return Ok(vec![v]);
        }
        let mut values = Vec::new();
        let mut q = pc.clone();
        while values.len() <= 4 {
            match self.check(&q, budget) {
                SatResult::Sat(model) => {
                    let v = e.eval(&model);
                    values.push(v);
                    q.push(solver::cmp(CmpOp::Eq, e.clone(), SymExpr::constant(e.width(), v)), false);
                }
                SatResult::Unsat => return Ok(values),
                SatResult::Unknown(_) => return Err(UnknownCause::Solver),
            }
        }
        Err(UnknownCause::Concretization)
    }

    /// Forks on the bounds check for an access of `bytes` at `addr + offset`,
    /// then concretizes the in-bounds address. Each result carries the
    /// concrete effective address.
    fn memory_access(
        &self,
        c: Configuration,
        addr: &SymExpr,
        mem_offset: u32,
        bytes: u8,
        offset: u32,
        budget: &CheckBudget,
    ) -> Vec<(Configuration, Option<u32>)> {
        let len = c.module_states[0].memory_len;
        let ea = solver::bin(
            BvOp::Add,
            solver::extend(false, 64, addr.clone()),
            SymExpr::constant(64, mem_offset as u64 + bytes as u64),
        );
        let oob = solver::cmp(CmpOp::GtU, ea, SymExpr::constant(64, len));
        let mut out = Vec::new();
        if let Some(t) = c.clone().assume(&oob, true) {
            out.push((t.trapped(TrapKind::MemoryOutOfBounds, offset), None));
        }
        let Some(inb) = c.assume(&oob, false) else {
            return out;
        };
        match self.concretize(&inb.path_condition, addr, budget) {
            Ok(values) => {
                for v in values {
                    let pinned = if addr.is_const() {
                        Some(inb.clone())
                    } else {
                        inb.clone().assume(
                            &solver::cmp(CmpOp::Eq, addr.clone(), SymExpr::constant(32, v)),
                            true,
                        )
                    };
                    if let Some(p) = pinned {
                        out.push((p, Some((v + mem_offset as u64) as u32)));
                    }
                }
            }
            Err(cause) => {
                let mut u = inb;
                u.status = PathStatus::Unknown(cause);
                out.push((u, None));
            }
        }
        out
    }

    /// Successor configurations of `c`. Terminal configurations have none.
    pub fn step(&self, c: &Configuration, bounds: &ExploreBounds) -> Result<Vec<Configuration>, SymexecError> {
        if c.status != PathStatus::Running {
            return Ok(Vec::new());
        }
        let m = self.module;
        let (func, pc) = c.pc().ok_or(SymexecError::PcOutOfBounds)?;
        let def = m.defined(func).ok_or(SymexecError::PcOutOfBounds)?;
        let instr = def.body.get(pc).ok_or(SymexecError::PcOutOfBounds)?;
        let offset = instr.offset;
        let mut n = c.clone();
        n.steps += 1;
        n.frame().pc += 1;
        let unroll = bounds.loop_unroll;
        let mut out = match &instr.op {
            Op::Unreachable => vec![n.trapped(TrapKind::Unreachable, offset)],
            Op::Nop => vec![n],
            Op::Block(bt) | Op::Loop(bt) => {
                let is_loop = matches!(instr.op, Op::Loop(_));
                let height = n.stack.len();
                let pc_len = n.path_condition.len();
                n.frame().labels.push(Label {
                    height,
                    arity: if is_loop { 0 } else { bt.arity() },
                    start: pc,
                    is_loop,
                    guards: Vec::new(),
                    iterations: 0,
                    pc_len,
                });
                vec![n]
            }
            Op::If(bt) => {
                let cond = n.pop();
                let guard = n.branch_vertex(offset, &cond);
                let height = n.stack.len();
                let pc_len = n.path_condition.len();
                n.frame().labels.push(Label {
                    height,
                    arity: bt.arity(),
                    start: pc,
                    is_loop: false,
                    guards: vec![guard],
                    iterations: 0,
                    pc_len,
                });
                let mut out = Vec::new();
                if let Some(mut f) = n.clone().assume(&cond.expr, false) {
                    f.frame().pc = match def.control.else_of(pc) {
                        Some(e) => e + 1,
                        None => def.control.end_of(pc).unwrap(),
                    };
                    out.push(f);
                }
                out.extend(n.assume(&cond.expr, true));
                out
            }
            Op::Else => {
                n.frame().labels.pop();
                n.frame().pc = def.control.end_of(pc).unwrap() + 1;
                vec![n]
            }
            Op::End => {
                if n.frame().labels.pop().is_none() {
                    n.leave();
                }
                vec![n]
            }
            Op::Br(d) => {
                n.branch(m, *d, unroll);
                vec![n]
            }
            Op::BrIf(d) => {
                let cond = n.pop();
                let guard = n.branch_vertex(offset, &cond);
                let mut out = Vec::new();
                if let Some(mut f) = n.clone().assume(&cond.expr, false) {
                    f.guard_until(*d, guard);
                    out.push(f);
                }
                if let Some(mut t) = n.assume(&cond.expr, true) {
                    t.branch(m, *d, unroll);
                    out.push(t);
                }
                out
            }
            Op::BrTable { targets, default } => {
                let idx = n.pop();
                let guard = n.branch_vertex(offset, &idx);
                let count = targets.len() as u64;
                let mut out = Vec::new();
                for (i, d) in targets.iter().enumerate() {
                    let hit = solver::cmp(CmpOp::Eq, idx.expr.clone(), SymExpr::constant(32, i as u64));
                    if let Some(mut s) = n.clone().assume(&hit, true) {
                        s.guard_until(*d, guard);
                        s.branch(m, *d, unroll);
                        out.push(s);
                    }
                }
                let miss = solver::cmp(CmpOp::GeU, idx.expr.clone(), SymExpr::constant(32, count));
                if let Some(mut s) = n.assume(&miss, true) {
                    s.guard_until(*default, guard);
                    s.branch(m, *default, unroll);
                    out.push(s);
                }
                out
            }
            Op::Return => {
                n.leave();
                vec![n]
            }
            Op::Call(f) => self.call(n, *f, offset),
            Op::CallIndirect { type_index, .. } => {
                let idx = n.pop();
                let slots = m.table_slots();
                let want = m.types.get(*type_index as usize);
                let mut out = Vec::new();
                let miss = solver::cmp(
                    CmpOp::GeU,
                    idx.expr.clone(),
                    SymExpr::constant(32, slots.len() as u64),
                );
                if let Some(t) = n.clone().assume(&miss, true) {
                    out.push(t.trapped(TrapKind::UndefinedElement, offset));
                }
                for (i, slot) in slots.iter().enumerate() {
                    let hit = solver::cmp(CmpOp::Eq, idx.expr.clone(), SymExpr::constant(32, i as u64));
                    let Some(s) = n.clone().assume(&hit, true) else {
                        continue;
                    };
                    match slot {
                        None => out.push(s.trapped(TrapKind::UndefinedElement, offset)),
                        Some(f) if m.func_type(*f) != want => {
                            out.push(s.trapped(TrapKind::IndirectCallTypeMismatch, offset))
                        }
                        Some(f) => out.extend(self.call(s, *f, offset)),
                    }
                }
                out
            }
            Op::Drop => {
                n.pop();
                vec![n]
            }
            Op::Select => {
                let cond = n.pop();
                let b = n.pop();
                let a = n.pop();
                let e = solver::ite(cond.expr.clone(), a.expr.clone(), b.expr.clone());
                n.push(SymValue::joined(e, &[&cond, &a, &b]));
                vec![n]
            }
            Op::LocalGet(i) => {
                let v = Vertex::Local { func, index: *i };
                let expr = n.frame().locals[*i as usize].expr.clone();
                n.push(SymValue::new(expr, Arc::new(BTreeSet::from([v]))));
                vec![n]
            }
            Op::LocalSet(i) | Op::LocalTee(i) => {
                let val = if matches!(instr.op, Op::LocalSet(_)) {
                    n.pop()
                } else {
                    n.stack.last().unwrap().clone()
                };
                let target = Vertex::Local { func, index: *i };
                n.assign(target, &[&val.deps]);
                n.frame().locals[*i as usize] = val;
                vec![n]
            }
            Op::GlobalGet(i) => {
                let expr = n.module_states[0].globals[*i as usize].expr.clone();
                n.push(SymValue::new(expr, Arc::new(BTreeSet::from([Vertex::Global(*i)]))));
                vec![n]
            }
            Op::GlobalSet(i) => {
                let val = n.pop();
                n.assign(Vertex::Global(*i), &[&val.deps]);
                n.module_states[0].globals[*i as usize] = val;
                vec![n]
            }
            Op::Load { ty, bytes, signed, mem } => {
                let addr = n.pop();
                let budget = bounds.per_path_solver_budget;
                let mut out = Vec::new();
                for (mut s, ea) in self.memory_access(n, &addr.expr, mem.offset, *bytes, offset, &budget) {
                    if let Some(ea) = ea {
                        let state = &s.module_states[0];
                        let mut value: Option<SymExpr> = None;
                        let mut deps: BTreeSet<Vertex> = addr.deps.iter().copied().collect();
                        for k in 0..*bytes as u32 {
                            let cell = ea + k;
                            let byte = state
                                .memory
                                .get(&cell)
                                .cloned()
                                .unwrap_or_else(|| SymExpr::constant(8, 0));
                            deps.insert(Vertex::Memory(cell));
                            value = Some(match value {
                                None => byte,
                                Some(low) => solver::concat(byte, low),
                            });
                        }
                        let mut e = value.unwrap();
                        if e.width() < ty.bits() {
                            e = solver::extend(*signed, ty.bits(), e);
                        }
                        s.push(SymValue::new(e, Arc::new(deps)));
                    }
                    out.push(s);
                }
                out
            }
            Op::Store { bytes, mem, .. } => {
                let val = n.pop();
                let addr = n.pop();
                let budget = bounds.per_path_solver_budget;
                let mut out = Vec::new();
                for (mut s, ea) in self.memory_access(n, &addr.expr, mem.offset, *bytes, offset, &budget) {
                    if let Some(ea) = ea {
                        for k in 0..*bytes as u32 {
                            let byte = solver::extract(8 * k as u8 + 7, 8 * k as u8, val.expr.clone());
                            s.assign(Vertex::Memory(ea + k), &[&val.deps, &addr.deps]);
                            Arc::make_mut(&mut s.module_states[0].memory).insert(ea + k, byte);
                        }
                    }
                    out.push(s);
                }
                out
            }
            Op::I32Const(v) => {
                n.push(SymValue::constant(32, *v as u32 as u64));
                vec![n]
            }
            Op::I64Const(v) => {
                n.push(SymValue::constant(64, *v as u64));
                vec![n]
            }
            Op::Eqz(_) => {
                let a = n.pop();
                n.push(SymValue::joined(solver::eqz(a.expr.clone()), &[&a]));
                vec![n]
            }
            Op::Compare(_, op) => {
                let b = n.pop();
                let a = n.pop();
                let e = solver::cmp(*op, a.expr.clone(), b.expr.clone());
                n.push(SymValue::joined(e, &[&a, &b]));
                vec![n]
            }
            Op::Binary(ty, op) => {
                let b = n.pop();
                let a = n.pop();
                self.binary(n, *ty, *op, a, b, offset)
            }
        };
        for s in &mut out {
            if s.status == PathStatus::Running {
                s.src = self.location(s);
            }
        }
        Ok(out)
    }

    fn binary(
        &self,
        n: Configuration,
        ty: IntType,
        op: BinOp,
        a: SymValue,
        b: SymValue,
        offset: u32,
    ) -> Vec<Configuration> {
        let w = ty.bits();
        let rhs = match op {
            BinOp::Shl | BinOp::ShrS | BinOp::ShrU => {
                solver::bin(BvOp::And, b.expr.clone(), SymExpr::constant(w, (w - 1) as u64))
            }
            _ => b.expr.clone(),
        };
        let result = |mut c: Configuration| {
            let e = solver::bin(bv_op(op), a.expr.clone(), rhs.clone());
            c.push(SymValue::joined(e, &[&a, &b]));
            c
        };
        if !op.may_trap() {
            return vec![result(n)];
        }
        let mut out = Vec::new();
        if let Some(t) = n.clone().assume(&b.expr, false) {
            out.push(t.trapped(TrapKind::DivByZero, offset));
        }
        let Some(mut ok) = n.assume(&b.expr, true) else {
            return out;
        };
        if op == BinOp::DivS {
            let min = SymExpr::constant(w, 1u64 << (w - 1));
            let neg1 = SymExpr::constant(w, solver::mask(w));
            let a_min = solver::cmp(CmpOp::Eq, a.expr.clone(), min);
            let b_neg1 = solver::cmp(CmpOp::Eq, b.expr.clone(), neg1);
            if let Some(t) = ok
                .clone()
                .assume(&a_min, true)
                .and_then(|t| t.assume(&b_neg1, true))
            {
                out.push(t.trapped(TrapKind::IntegerOverflow, offset));
            }
            let no_overflow = solver::bin(BvOp::Or, solver::eqz(a_min), solver::eqz(b_neg1));
            match ok.assume(&no_overflow, true) {
                Some(c) => ok = c,
                None => return out,
            }
        }
        out.push(result(ok));
        out
    }
}
