//! Module-level checks and a typed operand-stack validator for function
//! bodies. Float-typed values are rejected wherever they would be computed.

use std::collections::HashSet;

use super::ops::{BlockType, Instruction, Op};
use super::reader::ParseError;
use super::types::{ExportKind, FuncType, Function, Module, ValType};
use super::{ASSERT_MODULE, ASSERT_NAME, MAX_PAGES};

type Result<T> = std::result::Result<T, ParseError>;

fn fail<T>(invariant: impl Into<String>, offset: Option<u32>) -> Result<T> {
    Err(ParseError::invalid(invariant, offset))
}

pub(crate) fn validate_module(m: &Module) -> Result<()> {
    let ntypes = m.types.len() as u32;
    for t in &m.types {
        if t.results.len() > 1 {
            return fail("function types return at most one value", None);
        }
    }
    for imp in &m.imports {
        if imp.module != ASSERT_MODULE || imp.name != ASSERT_NAME {
            return fail(
                format!("import {}.{} is not the assertion hook", imp.module, imp.name),
                None,
            );
        }
        let ok = m.types.get(imp.type_index as usize)
            == Some(&FuncType::new(vec![ValType::I32], vec![]));
        if !ok {
            return fail("assertion hook must have type [i32] -> []", None);
        }
    }
    for f in &m.functions {
        if f.type_index >= ntypes {
            return fail(
                format!("function type index {} out of bounds", f.type_index),
                f.body.first().map(|i| i.offset),
            );
        }
    }
    if let Some(t) = m.table {
        if t.max.is_some_and(|max| max < t.min) {
            return fail("table maximum below minimum", None);
        }
    }
    if m.memories.len() > 1 {
        return fail("at most one memory", None);
    }
    for mem in &m.memories {
        if mem.min_pages > MAX_PAGES || mem.max_pages.is_some_and(|p| p > MAX_PAGES) {
            return fail(format!("memory exceeds {MAX_PAGES} pages"), None);
        }
        if mem.max_pages.is_some_and(|p| p < mem.min_pages) {
            return fail("memory maximum below minimum", None);
        }
    }
    let nfuncs = m.function_count();
    let mut names = HashSet::new();
    for e in &m.exports {
        if !names.insert(e.name.as_str()) {
            return fail(format!("duplicate export name {:?}", e.name), None);
        }
        let in_range = match e.kind {
            ExportKind::Func => e.index < nfuncs,
            ExportKind::Table => e.index == 0 && m.table.is_some(),
            ExportKind::Memory => (e.index as usize) < m.memories.len(),
            ExportKind::Global => (e.index as usize) < m.globals.len(),
        };
        if !in_range {
            return fail(format!("export {:?} index out of bounds", e.name), None);
        }
    }
    if let Some(s) = m.start {
        match m.func_type(s) {
            Some(t) if t.params.is_empty() && t.results.is_empty() => {}
            Some(_) => return fail("start function must have type [] -> []", None),
            None => return fail("start function index out of bounds", None),
        }
    }
    for seg in &m.elements {
        let Some(table) = m.table else {
            return fail("element segment without a table", None);
        };
        if seg.offset as u64 + seg.functions.len() as u64 > table.min as u64 {
            return fail("element segment exceeds table size", None);
        }
        if seg.functions.iter().any(|f| *f >= nfuncs) {
            return fail("element function index out of bounds", None);
        }
    }
    for f in &m.functions {
        validate_body(m, f)?;
    }
    Ok(())
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    Block,
    Loop,
    If,
    Else,
    Function,
}

struct Frame {
    kind: Kind,
    result: Option<ValType>,
    height: usize,
    unreachable: bool,
}

impl Frame {
    /// Operand types consumed by a branch to this label.
    fn label(&self) -> Option<ValType> {
        if self.kind == Kind::Loop {
            None
        } else {
            self.result
        }
    }
}

struct Checker<'m> {
    m: &'m Module,
    locals: Vec<ValType>,
    results: Option<ValType>,
    /// `None` is the unknown type of a polymorphic (unreachable) stack.
    vals: Vec<Option<ValType>>,
    frames: Vec<Frame>,
    at: u32,
}

fn int_only(t: ValType, at: u32) -> Result<ValType> {
    if t.is_int() {
        Ok(t)
    } else {
        fail(
            format!("{t} values are outside the executable subset"),
            Some(at),
        )
    }
}

impl<'m> Checker<'m> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        fail(msg, Some(self.at))
    }

    fn push(&mut self, t: ValType) {
        self.vals.push(Some(t));
    }

    fn pop_any(&mut self) -> Result<Option<ValType>> {
        let frame = self.frames.last().unwrap();
        if self.vals.len() == frame.height {
            if frame.unreachable {
                return Ok(None);
            }
            return self.err("operand stack underflow");
        }
        Ok(self.vals.pop().unwrap())
    }

    fn pop(&mut self, expect: ValType) -> Result<()> {
        match self.pop_any()? {
            None => Ok(()),
            Some(t) if t == expect => Ok(()),
            Some(t) => self.err(format!("type mismatch: expected {expect}, found {t}")),
        }
    }

    fn pop_opt(&mut self, t: Option<ValType>) -> Result<()> {
        match t {
            Some(t) => self.pop(t),
            None => Ok(()),
        }
    }

    fn block_result(&self, bt: BlockType) -> Result<Option<ValType>> {
        match bt {
            BlockType::Empty => Ok(None),
            BlockType::Value(t) => int_only(t, self.at).map(Some),
        }
    }

    fn open(&mut self, kind: Kind, result: Option<ValType>) {
        self.frames.push(Frame {
            kind,
            result,
            height: self.vals.len(),
            unreachable: false,
        });
    }

    /// Pops the frame's results and checks the stack is back at its height.
    fn close(&mut self) -> Result<Frame> {
        let result = self.frames.last().unwrap().result;
        self.pop_opt(result)?;
        let frame = self.frames.last().unwrap();
        if self.vals.len() != frame.height {
            return self.err("values left on the stack at block end");
        }
        Ok(self.frames.pop().unwrap())
    }

    fn set_unreachable(&mut self) {
        let frame = self.frames.last_mut().unwrap();
        self.vals.truncate(frame.height);
        frame.unreachable = true;
    }

    fn label(&self, depth: u32) -> Result<Option<ValType>> {
        let n = self.frames.len();
        if depth as usize >= n {
            return self.err(format!("branch depth {depth} exceeds nesting"));
        }
        Ok(self.frames[n - 1 - depth as usize].label())
    }

    fn local(&self, idx: u32) -> Result<ValType> {
        match self.locals.get(idx as usize) {
            Some(t) => int_only(*t, self.at),
            None => self.err(format!("local index {idx} out of bounds")),
        }
    }

    fn global(&self, idx: u32) -> Result<(ValType, bool)> {
        match self.m.globals.get(idx as usize) {
            Some(g) => Ok((int_only(g.ty, self.at)?, g.mutable)),
            None => self.err(format!("global index {idx} out of bounds")),
        }
    }

    fn call_sig(&self, t: &FuncType) -> Result<(Vec<ValType>, Option<ValType>)> {
        let params = t
            .params
            .iter()
            .map(|p| int_only(*p, self.at))
            .collect::<Result<Vec<_>>>()?;
        let result = match t.results.first() {
            Some(r) => Some(int_only(*r, self.at)?),
            None => None,
        };
        Ok((params, result))
    }

    fn apply_call(&mut self, t: &FuncType) -> Result<()> {
        let (params, result) = self.call_sig(t)?;
        for p in params.iter().rev() {
            self.pop(*p)?;
        }
        if let Some(r) = result {
            self.push(r);
        }
        Ok(())
    }

    fn memory(&self, bytes: u8, align: u32) -> Result<()> {
        if self.m.memories.is_empty() {
            return self.err("memory access without a memory");
        }
        if align >= 32 || (1u64 << align) > bytes as u64 {
            return self.err("alignment exceeds natural alignment");
        }
        Ok(())
    }

    fn step(&mut self, ins: &Instruction) -> Result<()> {
        self.at = ins.offset;
        match &ins.op {
            Op::Unreachable => self.set_unreachable(),
            Op::Nop => {}
            Op::Block(bt) => {
                let r = self.block_result(*bt)?;
                self.open(Kind::Block, r);
            }
            Op::Loop(bt) => {
                let r = self.block_result(*bt)?;
                self.open(Kind::Loop, r);
            }
            Op::If(bt) => {
                let r = self.block_result(*bt)?;
                self.pop(ValType::I32)?;
                self.open(Kind::If, r);
            }
            Op::Else => {
                if self.frames.last().map(|f| f.kind) != Some(Kind::If) {
                    return self.err("else without if");
                }
                let f = self.close()?;
                self.open(Kind::Else, f.result);
            }
            Op::End => {
                let f = self.close()?;
                if f.kind == Kind::If && f.result.is_some() {
                    return self.err("if with a result requires an else arm");
                }
                if f.kind != Kind::Function {
                    if let Some(r) = f.result {
                        self.push(r);
                    }
                }
            }
            Op::Br(d) => {
                let l = self.label(*d)?;
                self.pop_opt(l)?;
                self.set_unreachable();
            }
            Op::BrIf(d) => {
                let l = self.label(*d)?;
                self.pop(ValType::I32)?;
                self.pop_opt(l)?;
                if let Some(t) = l {
                    self.push(t);
                }
            }
            Op::BrTable { targets, default } => {
                self.pop(ValType::I32)?;
                let l = self.label(*default)?;
                for t in targets {
                    if self.label(*t)? != l {
                        return self.err("br_table targets disagree on arity");
                    }
                }
                self.pop_opt(l)?;
                self.set_unreachable();
            }
            Op::Return => {
                self.pop_opt(self.results)?;
                self.set_unreachable();
            }
            Op::Call(f) => {
                let Some(t) = self.m.func_type(*f) else {
                    return self.err(format!("call target {f} out of bounds"));
                };
                self.apply_call(&t.clone())?;
            }
            Op::CallIndirect { type_index, table } => {
                if *table != 0 || self.m.table.is_none() {
                    return self.err("call_indirect requires table 0");
                }
                let Some(t) = self.m.types.get(*type_index as usize) else {
                    return self.err(format!("type index {type_index} out of bounds"));
                };
                let t = t.clone();
                self.pop(ValType::I32)?;
                self.apply_call(&t)?;
            }
            Op::Drop => {
                self.pop_any()?;
            }
            Op::Select => {
                self.pop(ValType::I32)?;
                let a = self.pop_any()?;
                let b = self.pop_any()?;
                match (a, b) {
                    (Some(x), Some(y)) if x != y => return self.err("select operands differ in type"),
                    (Some(t), _) | (_, Some(t)) => self.push(t),
                    (None, None) => self.vals.push(None),
                }
            }
            Op::LocalGet(i) => {
                let t = self.local(*i)?;
                self.push(t);
            }
            Op::LocalSet(i) => {
                let t = self.local(*i)?;
                self.pop(t)?;
            }
            Op::LocalTee(i) => {
                let t = self.local(*i)?;
                self.pop(t)?;
                self.push(t);
            }
            Op::GlobalGet(i) => {
                let (t, _) = self.global(*i)?;
                self.push(t);
            }
            Op::GlobalSet(i) => {
                let (t, mutable) = self.global(*i)?;
                if !mutable {
                    return self.err(format!("global {i} is immutable"));
                }
                self.pop(t)?;
            }
            Op::Load { ty, bytes, mem, .. } => {
                self.memory(*bytes, mem.align)?;
                self.pop(ValType::I32)?;
                self.push(ty.val_type());
            }
            Op::Store { ty, bytes, mem } => {
                self.memory(*bytes, mem.align)?;
                self.pop(ty.val_type())?;
                self.pop(ValType::I32)?;
            }
            Op::I32Const(_) => self.push(ValType::I32),
            Op::I64Const(_) => self.push(ValType::I64),
            Op::Eqz(ty) => {
                self.pop(ty.val_type())?;
                self.push(ValType::I32);
            }
            Op::Binary(ty, _) => {
                self.pop(ty.val_type())?;
                self.pop(ty.val_type())?;
                self.push(ty.val_type());
            }
            Op::Compare(ty, _) => {
                self.pop(ty.val_type())?;
                self.pop(ty.val_type())?;
                self.push(ValType::I32);
            }
        }
        Ok(())
    }
}

fn validate_body(m: &Module, f: &Function) -> Result<()> {
    let ty = &m.types[f.type_index as usize];
    let mut locals = ty.params.clone();
    locals.extend_from_slice(&f.locals);
    let mut c = Checker {
        m,
        locals,
        results: ty.results.first().copied(),
        vals: Vec::new(),
        frames: Vec::new(),
        at: f.body.first().map(|i| i.offset).unwrap_or(0),
    };
    if let Some(r) = c.results {
        int_only(r, c.at)?;
    }
    c.open(Kind::Function, c.results);
    for (i, ins) in f.body.iter().enumerate() {
        if c.frames.is_empty() {
            return fail("instructions after the final end", Some(ins.offset));
        }
        c.step(ins)?;
        if c.frames.is_empty() && i + 1 != f.body.len() {
            return fail("instructions after the final end", Some(f.body[i + 1].offset));
        }
    }
    if !c.frames.is_empty() {
        return fail("unclosed block at end of body", f.body.last().map(|i| i.offset));
    }
    Ok(())
}
