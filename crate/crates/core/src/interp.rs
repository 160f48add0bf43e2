//! Deterministic concrete interpreter for the supported subset. It is the
//! brute-force oracle that symbolic verdicts are checked against.

use std::fmt;

use thiserror::Error;

use crate::wasm::{BinOp, CmpOp, IntType, Module, Op, ValType};

/// Maximum number of simultaneously active frames; shared with symbolic
/// execution so both report `CallStackExhausted` at the same depth.
pub const MAX_CALL_DEPTH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Value {
    I32(u32),
    I64(u64),
}

impl Value {
    pub fn zero(t: ValType) -> Value {
        match t {
            ValType::I64 => Value::I64(0),
            _ => Value::I32(0),
        }
    }

    /// Bit pattern zero-extended to 64 bits.
    pub fn bits(self) -> u64 {
        match self {
            Value::I32(v) => v as u64,
            Value::I64(v) => v,
        }
    }

    fn of(ty: IntType, bits: u64) -> Value {
        match ty {
            IntType::I32 => Value::I32(bits as u32),
            IntType::I64 => Value::I64(bits),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::I32(v) => write!(f, "{v}:i32"),
            Value::I64(v) => write!(f, "{v}:i64"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TrapKind {
    Unreachable,
    DivByZero,
    IntegerOverflow,
    MemoryOutOfBounds,
    AssertFailed,
    UndefinedElement,
    IndirectCallTypeMismatch,
    CallStackExhausted,
}

impl TrapKind {
    pub const ALL: [TrapKind; 8] = [
        TrapKind::Unreachable,
        TrapKind::DivByZero,
        TrapKind::IntegerOverflow,
        TrapKind::MemoryOutOfBounds,
        TrapKind::AssertFailed,
        TrapKind::UndefinedElement,
        TrapKind::IndirectCallTypeMismatch,
        TrapKind::CallStackExhausted,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TrapKind::Unreachable => "unreachable",
            TrapKind::DivByZero => "div_by_zero",
            TrapKind::IntegerOverflow => "integer_overflow",
            TrapKind::MemoryOutOfBounds => "memory_out_of_bounds",
            TrapKind::AssertFailed => "assert_failed",
            TrapKind::UndefinedElement => "undefined_element",
            TrapKind::IndirectCallTypeMismatch => "indirect_call_type_mismatch",
            TrapKind::CallStackExhausted => "call_stack_exhausted",
        }
    }

    pub fn from_name(s: &str) -> Option<TrapKind> {
        TrapKind::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn code(self) -> u8 {
        TrapKind::ALL.iter().position(|k| *k == self).unwrap() as u8
    }

    pub fn from_code(c: u8) -> Option<TrapKind> {
        TrapKind::ALL.get(c as usize).copied()
    }
}

impl fmt::Display for TrapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceResult {
    Terminated(Vec<Value>),
    /// `offset` is the absolute byte offset of the trapping instruction.
    Trapped { kind: TrapKind, offset: u32 },
    OutOfFuel,
}

impl TraceResult {
    pub fn is_trap(&self) -> bool {
        matches!(self, TraceResult::Trapped { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InterpError {
    #[error("no exported function named {0:?}")]
    NoSuchExport(String),
    #[error("arity mismatch: entry takes {expected} arguments, {found} given")]
    ArityMismatch { expected: usize, found: usize },
    #[error("entry signature {0} uses non-integer types")]
    UnsupportedSignature(String),
}

/// Integer binary operator semantics. Division traps follow the WASM rules.
pub fn eval_binary(ty: IntType, op: BinOp, a: u64, b: u64) -> Result<u64, TrapKind> {
    let bits = ty.bits() as u32;
    let mask = if bits == 64 { u64::MAX } else { (1u64 << bits) - 1 };
    let (a, b) = (a & mask, b & mask);
    let sext = |v: u64| -> i64 {
        if bits == 64 {
            v as i64
        } else {
            ((v << (64 - bits)) as i64) >> (64 - bits)
        }
    };
    let min_signed = 1u64 << (bits - 1);
    let r = match op {
        BinOp::Add => a.wrapping_add(b),
        BinOp::Sub => a.wrapping_sub(b),
        BinOp::Mul => a.wrapping_mul(b),
        BinOp::DivU | BinOp::RemU | BinOp::DivS | BinOp::RemS if b == 0 => {
            return Err(TrapKind::DivByZero)
        }
        BinOp::DivU => a / b,
        BinOp::RemU => a % b,
        BinOp::DivS => {
            if a == min_signed && b == mask {
                return Err(TrapKind::IntegerOverflow);
            }
            sext(a).wrapping_div(sext(b)) as u64
        }
        BinOp::RemS => sext(a).wrapping_rem(sext(b)) as u64,
        BinOp::And => a & b,
        BinOp::Or => a | b,
        BinOp::Xor => a ^ b,
        BinOp::Shl => a << (b as u32 % bits),
        BinOp::ShrU => a >> (b as u32 % bits),
        BinOp::ShrS => (sext(a) >> (b as u32 % bits)) as u64,
    };
    Ok(r & mask)
}

pub fn eval_compare(ty: IntType, op: CmpOp, a: u64, b: u64) -> bool {
    let bits = ty.bits() as u32;
    let (a, b) = if bits == 64 {
        (a, b)
    } else {
        (a & 0xFFFF_FFFF, b & 0xFFFF_FFFF)
    };
    let s = |v: u64| -> i64 {
        if bits == 64 {
            v as i64
        } else {
            v as u32 as i32 as i64
        }
    };
    match op {
        CmpOp::Eq => a == b,
        CmpOp::Ne => a != b,
        CmpOp::LtS => s(a) < s(b),
        CmpOp::LtU => a < b,
        CmpOp::GtS => s(a) > s(b),
        CmpOp::GtU => a > b,
        CmpOp::LeS => s(a) <= s(b),
        CmpOp::LeU => a <= b,
        CmpOp::GeS => s(a) >= s(b),
        CmpOp::GeU => a >= b,
    }
}

struct Label {
    /// Operand-stack height when the construct was entered.
    height: usize,
    arity: usize,
    /// Instruction index of the construct's opening instruction.
    start: usize,
    is_loop: bool,
}

struct Frame {
    func: u32,
    pc: usize,
    locals: Vec<Value>,
    labels: Vec<Label>,
    base: usize,
    arity: usize,
}

/// Instantiated module state.
pub struct ConcreteState<'m> {
    module: &'m Module,
    pub stack: Vec<Value>,
    pub memory: Vec<u8>,
    pub globals: Vec<Value>,
    pub fuel: u64,
    frames: Vec<Frame>,
    table: Vec<Option<u32>>,
}

enum Flow {
    Continue,
    Done,
    Trap(TrapKind),
}

impl<'m> ConcreteState<'m> {
    pub fn new(module: &'m Module, fuel: u64) -> Self {
        ConcreteState {
            module,
            stack: Vec::new(),
            memory: vec![0; module.memory_bytes()],
            globals: module
                .globals
                .iter()
                .map(|g| match g.ty {
                    ValType::I64 => Value::I64(g.init),
                    _ => Value::I32(g.init as u32),
                })
                .collect(),
            fuel,
            frames: Vec::new(),
            table: module.table_slots(),
        }
    }

    fn pop(&mut self) -> Value {
        self.stack.pop().expect("validated stack")
    }

    fn pop_bits(&mut self) -> u64 {
        self.pop().bits()
    }

    fn effective(&self, addr: u64, offset: u32, bytes: u8) -> Result<usize, TrapKind> {
        let ea = (addr & 0xFFFF_FFFF) + offset as u64;
        if ea + bytes as u64 > self.memory.len() as u64 {
            return Err(TrapKind::MemoryOutOfBounds);
        }
        Ok(ea as usize)
    }

    /// Pushes a frame for `func`, consuming its arguments from the stack.
    fn enter(&mut self, func: u32) -> Flow {
        let m = self.module;
        let ty = m.func_type(func).expect("validated call target");
        if m.is_assert_import(func) {
            return if self.pop_bits() as u32 == 0 {
                Flow::Trap(TrapKind::AssertFailed)
            } else {
                Flow::Continue
            };
        }
        if self.frames.len() >= MAX_CALL_DEPTH {
            return Flow::Trap(TrapKind::CallStackExhausted);
        }
        let def = m.defined(func).expect("non-import function");
        let n = ty.params.len();
        let mut locals: Vec<Value> = self.stack.split_off(self.stack.len() - n);
        locals.extend(def.locals.iter().map(|t| Value::zero(*t)));
        self.frames.push(Frame {
            func,
            pc: 0,
            locals,
            labels: Vec::new(),
            base: self.stack.len(),
            arity: ty.results.len(),
        });
        Flow::Continue
    }

    fn leave(&mut self) {
        let f = self.frames.pop().unwrap();
        let results = self.stack.split_off(self.stack.len() - f.arity);
        self.stack.truncate(f.base);
        self.stack.extend(results);
    }

    fn branch(&mut self, depth: u32) {
        let frame = self.frames.last_mut().unwrap();
        let depth = depth as usize;
        if depth >= frame.labels.len() {
            self.leave();
            return;
        }
        let idx = frame.labels.len() - 1 - depth;
        let label = &frame.labels[idx];
        let control = &self.module.defined(frame.func).unwrap().control;
        if label.is_loop {
            self.stack.truncate(label.height);
            frame.pc = label.start + 1;
            frame.labels.truncate(idx + 1);
        } else {
            let keep = self.stack.split_off(self.stack.len() - label.arity);
            self.stack.truncate(label.height);
            self.stack.extend(keep);
            frame.pc = control.end_of(label.start).unwrap() + 1;
            frame.labels.truncate(idx);
        }
    }

    fn step(&mut self) -> Flow {
        let m = self.module;
        let frame = self.frames.last_mut().unwrap();
        let func = m.defined(frame.func).unwrap();
        let pc = frame.pc;
        let op = &func.body[pc].op;
        frame.pc += 1;
        match op {
            Op::Unreachable => return Flow::Trap(TrapKind::Unreachable),
            Op::Nop => {}
            Op::Block(bt) | Op::Loop(bt) => {
                let height = self.stack.len();
                let is_loop = matches!(op, Op::Loop(_));
                frame.labels.push(Label {
                    height,
                    arity: if is_loop { 0 } else { bt.arity() },
                    start: pc,
                    is_loop,
                });
            }
            Op::If(bt) => {
                let c = self.stack.pop().unwrap().bits() as u32;
                frame.labels.push(Label {
                    height: self.stack.len(),
                    arity: bt.arity(),
                    start: pc,
                    is_loop: false,
                });
                if c == 0 {
                    frame.pc = match func.control.else_of(pc) {
                        Some(e) => e + 1,
                        None => func.control.end_of(pc).unwrap(),
                    };
                }
            }
            Op::Else => {
                frame.labels.pop();
                frame.pc = func.control.end_of(pc).unwrap() + 1;
            }
            Op::End => {
                if frame.labels.pop().is_none() {
                    self.leave();
                    if self.frames.is_empty() {
                        return Flow::Done;
                    }
                }
            }
            Op::Br(d) => {
                let d = *d;
                self.branch(d);
                if self.frames.is_empty() {
                    return Flow::Done;
                }
            }
            Op::BrIf(d) => {
                let d = *d;
                if self.pop_bits() as u32 != 0 {
                    self.branch(d);
                    if self.frames.is_empty() {
                        return Flow::Done;
                    }
                }
            }
            Op::BrTable { targets, default } => {
                let i = self.pop_bits() as u32 as usize;
                let d = targets.get(i).copied().unwrap_or(*default);
                self.branch(d);
                if self.frames.is_empty() {
                    return Flow::Done;
                }
            }
            Op::Return => {
                self.leave();
                if self.frames.is_empty() {
                    return Flow::Done;
                }
            }
            Op::Call(f) => return self.enter(*f),
            Op::CallIndirect { type_index, .. } => {
                let i = self.pop_bits() as u32 as usize;
                let Some(Some(f)) = self.table.get(i).copied() else {
                    return Flow::Trap(TrapKind::UndefinedElement);
                };
                if m.func_type(f) != m.types.get(*type_index as usize) {
                    return Flow::Trap(TrapKind::IndirectCallTypeMismatch);
                }
                return self.enter(f);
            }
            Op::Drop => {
                self.pop();
            }
            Op::Select => {
                let c = self.pop_bits() as u32;
                let b = self.pop();
                let a = self.pop();
                self.stack.push(if c != 0 { a } else { b });
            }
            Op::LocalGet(i) => {
                let v = frame.locals[*i as usize];
                self.stack.push(v);
            }
            Op::LocalSet(i) => {
                let v = self.stack.pop().unwrap();
                self.frames.last_mut().unwrap().locals[*i as usize] = v;
            }
            Op::LocalTee(i) => {
                let v = *self.stack.last().unwrap();
                frame.locals[*i as usize] = v;
            }
            Op::GlobalGet(i) => self.stack.push(self.globals[*i as usize]),
            Op::GlobalSet(i) => {
                let v = self.pop();
                self.globals[*i as usize] = v;
            }
            Op::Load {
                ty,
                bytes,
                signed,
                mem,
            } => {
                let addr = self.pop_bits();
                let ea = match self.effective(addr, mem.offset, *bytes) {
                    Ok(ea) => ea,
                    Err(t) => return Flow::Trap(t),
                };
                let mut raw = [0u8; 8];
                raw[..*bytes as usize].copy_from_slice(&self.memory[ea..ea + *bytes as usize]);
                let mut v = u64::from_le_bytes(raw);
                let width = *bytes as u32 * 8;
                if *signed && width < 64 {
                    v = (((v << (64 - width)) as i64) >> (64 - width)) as u64;
                }
                self.stack.push(Value::of(*ty, v));
            }
            Op::Store { bytes, mem, .. } => {
                let v = self.pop_bits();
                let addr = self.pop_bits();
                let ea = match self.effective(addr, mem.offset, *bytes) {
                    Ok(ea) => ea,
                    Err(t) => return Flow::Trap(t),
                };
                self.memory[ea..ea + *bytes as usize]
                    .copy_from_slice(&v.to_le_bytes()[..*bytes as usize]);
            }
            Op::I32Const(v) => self.stack.push(Value::I32(*v as u32)),
            Op::I64Const(v) => self.stack.push(Value::I64(*v as u64)),
            Op::Eqz(_) => {
                let v = self.pop_bits();
                self.stack.push(Value::I32((v == 0) as u32));
            }
            Op::Binary(ty, bop) => {
                let b = self.pop_bits();
                let a = self.pop_bits();
                match eval_binary(*ty, *bop, a, b) {
                    Ok(r) => self.stack.push(Value::of(*ty, r)),
                    Err(t) => return Flow::Trap(t),
                }
            }
            Op::Compare(ty, cop) => {
                let b = self.pop_bits();
                let a = self.pop_bits();
                self.stack.push(Value::I32(eval_compare(*ty, *cop, a, b) as u32));
            }
        }
        Flow::Continue
    }

    fn current_offset(&self) -> u32 {
        let f = self.frames.last().unwrap();
        self.module.defined(f.func).unwrap().body[f.pc].offset
    }

    /// Runs `func` to completion with arguments already on the stack.
    fn run(&mut self, func: u32, args: Vec<Value>) -> TraceResult {
        self.stack.extend(args);
        let offset_of_call = |s: &Self| s.frames.last().map(|_| s.current_offset());
        if self.fuel == 0 {
            return TraceResult::OutOfFuel;
        }
        if let Flow::Trap(kind) = self.enter(func) {
            return TraceResult::Trapped { kind, offset: 0 };
        }
        if self.frames.is_empty() {
            return TraceResult::Terminated(std::mem::take(&mut self.stack));
        }
        loop {
            if self.fuel == 0 {
                return TraceResult::OutOfFuel;
            }
            self.fuel -= 1;
            let offset = offset_of_call(self).unwrap();
            match self.step() {
                Flow::Continue => {}
                Flow::Done => return TraceResult::Terminated(std::mem::take(&mut self.stack)),
                Flow::Trap(kind) => return TraceResult::Trapped { kind, offset },
            }
        }
    }
}

fn convert_args(module: &Module, func: u32, args: &[i64]) -> Result<Vec<Value>, InterpError> {
    let ty = module.func_type(func).expect("validated export");
    if ty.params.len() != args.len() {
        return Err(InterpError::ArityMismatch {
            expected: ty.params.len(),
            found: args.len(),
        });
    }
    if !ty.params.iter().chain(&ty.results).all(|t| t.is_int()) {
        return Err(InterpError::UnsupportedSignature(ty.to_string()));
    }
    Ok(ty
        .params
        .iter()
        .zip(args)
        .map(|(t, a)| match t {
            ValType::I64 => Value::I64(*a as u64),
            _ => Value::I32(*a as u32),
        })
        .collect())
}

/// Instantiates `module`, runs its start function, then calls `entry`.
/// Fuel is one unit per executed instruction across both calls.
pub fn run_concrete(
    module: &Module,
    entry: &str,
    args: &[i64],
    fuel: u64,
) -> Result<TraceResult, InterpError> {
    let func = module
        .exported_function(entry)
        .ok_or_else(|| InterpError::NoSuchExport(entry.to_owned()))?;
    let args = convert_args(module, func, args)?;
    let mut state = ConcreteState::new(module, fuel);
    if let Some(start) = module.start {
        match state.run(start, Vec::new()) {
            TraceResult::Terminated(_) => {}
            other => return Ok(other),
        }
    }
    Ok(state.run(func, args))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wasm::{assemble_text, parse_module};
    use proptest::prelude::*;

    fn module(src: &str) -> Module {
        parse_module(&assemble_text(src).unwrap().0).unwrap()
    }

    fn offset_of(m: &Module, func: usize, index: usize) -> u32 {
        m.functions[func].body[index].offset
    }

    #[test]
    fn constant_seven() {
        let m = module("(func (export \"f\") (result i32) i32.const 7)");
        assert_eq!(
            run_concrete(&m, "f", &[], 100).unwrap(),
            TraceResult::Terminated(vec![Value::I32(7)])
        );
    }

    #[test]
    fn division_by_zero_reports_offset() {
        let m = module(
            "(func (export \"f\") (param i32) (result i32) i32.const 10 local.get 0 i32.div_u)",
        );
        assert_eq!(
            run_concrete(&m, "f", &[2], 100).unwrap(),
            TraceResult::Terminated(vec![Value::I32(5)])
        );
        assert_eq!(
            run_concrete(&m, "f", &[0], 100).unwrap(),
            TraceResult::Trapped {
                kind: TrapKind::DivByZero,
                offset: offset_of(&m, 0, 2)
            }
        );
    }

    #[test]
    fn assert_zero_traps_at_call() {
        let m = module(
            r#"(import "env" "tcpa_assert" (func $a (param i32)))
               (func (export "f") i32.const 0 call $a)"#,
        );
        assert_eq!(
            run_concrete(&m, "f", &[], 100).unwrap(),
            TraceResult::Trapped {
                kind: TrapKind::AssertFailed,
                offset: offset_of(&m, 0, 1)
            }
        );
    }

    #[test]
    fn errors() {
        let m = module("(func (export \"f\") (param i32))");
        assert_eq!(
            run_concrete(&m, "g", &[], 10),
            Err(InterpError::NoSuchExport("g".into()))
        );
        assert_eq!(
            run_concrete(&m, "f", &[], 10),
            Err(InterpError::ArityMismatch {
                expected: 1,
                found: 0
            })
        );
    }

    #[test]
    fn loops_calls_and_fuel() {
        let m = module(
            r#"(func $sum (export "sum") (param $n i32) (result i32) (local $acc i32)
                 block $done
                   loop $top
                     local.get $n i32.eqz br_if $done
                     local.get $acc local.get $n i32.add local.set $acc
                     local.get $n i32.const 1 i32.sub local.set $n
                     br $top
                   end
                 end
                 local.get $acc)
               (func (export "twice") (param i32) (result i32)
                 local.get 0 call $sum i32.const 2 i32.mul)
               (func $rec (export "rec") call $rec)"#,
        );
        assert_eq!(
            run_concrete(&m, "sum", &[10], 10_000).unwrap(),
            TraceResult::Terminated(vec![Value::I32(55)])
        );
        assert_eq!(
            run_concrete(&m, "twice", &[4], 10_000).unwrap(),
            TraceResult::Terminated(vec![Value::I32(20)])
        );
        assert_eq!(run_concrete(&m, "sum", &[1000], 50).unwrap(), TraceResult::OutOfFuel);
        assert!(matches!(
            run_concrete(&m, "rec", &[], 100_000).unwrap(),
            TraceResult::Trapped {
                kind: TrapKind::CallStackExhausted,
                ..
            }
        ));
    }

    #[test]
    fn memory_tables_and_globals() {
        let m = module(
            r#"(type $t (func (result i32)))
               (memory 1)
               (global $g (mut i32) (i32.const 3))
               (table 3 funcref)
               (elem (i32.const 0) $one $two)
               (func $one (result i32) i32.const 1)
               (func $two (param i32) (result i32) local.get 0)
               (func (export "dispatch") (param i32) (result i32)
                 local.get 0 call_indirect (type $t))
               (func (export "mem") (param i32) (result i32)
                 local.get 0 i32.const -2 i32.store16 offset=1
                 local.get 0 i32.load8_s offset=2
                 global.get $g i32.add)
               (func (export "start_effect") (result i32) global.get $g)
               (func $init global.get $g i32.const 1 i32.add global.set $g)
               (start $init)"#,
        );
        let run = |f: &str, a: &[i64]| run_concrete(&m, f, a, 1000).unwrap();
        assert_eq!(run("dispatch", &[0]), TraceResult::Terminated(vec![Value::I32(1)]));
        assert!(matches!(
            run("dispatch", &[1]),
            TraceResult::Trapped {
                kind: TrapKind::IndirectCallTypeMismatch,
                ..
            }
        ));
        assert!(matches!(
            run("dispatch", &[2]),
            TraceResult::Trapped {
                kind: TrapKind::UndefinedElement,
                ..
            }
        ));
        assert!(matches!(
            run("dispatch", &[7]),
            TraceResult::Trapped {
                kind: TrapKind::UndefinedElement,
                ..
            }
        ));
        // 0xFFFE stored at 1..3, byte 2 is 0xFF (-1); start bumped g to 4.
        assert_eq!(run("mem", &[0]), TraceResult::Terminated(vec![Value::I32(3)]));
        assert!(matches!(
            run("mem", &[65_534]),
            TraceResult::Trapped {
                kind: TrapKind::MemoryOutOfBounds,
                ..
            }
        ));
        assert_eq!(run("start_effect", &[]), TraceResult::Terminated(vec![Value::I32(4)]));
    }

    #[test]
    fn signed_division_edge_cases() {
        assert_eq!(
            eval_binary(IntType::I32, BinOp::DivS, 0x8000_0000, 0xFFFF_FFFF),
            Err(TrapKind::IntegerOverflow)
        );
        assert_eq!(eval_binary(IntType::I32, BinOp::RemS, 0x8000_0000, 0xFFFF_FFFF), Ok(0));
        assert_eq!(eval_binary(IntType::I32, BinOp::DivS, (-7i32) as u32 as u64, 2), Ok((-3i32) as u32 as u64));
        assert_eq!(eval_binary(IntType::I32, BinOp::RemS, (-7i32) as u32 as u64, 2), Ok((-1i32) as u32 as u64));
        assert_eq!(eval_binary(IntType::I32, BinOp::Shl, 1, 33), Ok(2));
        assert_eq!(eval_binary(IntType::I64, BinOp::ShrS, u64::MAX, 63), Ok(u64::MAX));
    }

    proptest! {
        #[test]
        fn i32_add_wraps(x: u32, y: u32) {
            let m = module("(func (export \"add\") (param i32 i32) (result i32) local.get 0 local.get 1 i32.add)");
            let r = run_concrete(&m, "add", &[x as i64, y as i64], 10).unwrap();
            prop_assert_eq!(r, TraceResult::Terminated(vec![Value::I32(((x as u64 + y as u64) % (1u64 << 32)) as u32)]));
        }

        #[test]
        fn runs_are_deterministic(x in 0i64..256) {
            let m = module("(func (export \"f\") (param i32) (result i32) i32.const 100 local.get 0 i32.const 3 i32.sub i32.div_s)");
            prop_assert_eq!(run_concrete(&m, "f", &[x], 50), run_concrete(&m, "f", &[x], 50));
        }
    }
}
