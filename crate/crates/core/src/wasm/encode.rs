//! Canonical binary serialization: minimal LEB128, sections in order, empty
//! sections omitted, locals run-length compressed.

use super::ops::{BlockType, Instruction, MemArg, Op};
use super::types::{Module, ValType};
use super::{MAGIC, VERSION};

fn leb_u32(out: &mut Vec<u8>, mut v: u32) {
    loop {
        let b = (v & 0x7F) as u8;
        v >>= 7;
        if v == 0 {
            out.push(b);
            return;
        }
        out.push(b | 0x80);
    }
}

fn leb_s64(out: &mut Vec<u8>, mut v: i64) {
    loop {
        let b = (v & 0x7F) as u8;
        v >>= 7;
        let done = (v == 0 && b & 0x40 == 0) || (v == -1 && b & 0x40 != 0);
        if done {
            out.push(b);
            return;
        }
        out.push(b | 0x80);
    }
}

fn name(out: &mut Vec<u8>, s: &str) {
    leb_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

fn limits(out: &mut Vec<u8>, min: u32, max: Option<u32>) {
    match max {
        None => {
            out.push(0x00);
            leb_u32(out, min);
        }
        Some(max) => {
            out.push(0x01);
            leb_u32(out, min);
            leb_u32(out, max);
        }
    }
}

fn block_type(out: &mut Vec<u8>, bt: BlockType) {
    match bt {
        BlockType::Empty => out.push(0x40),
        BlockType::Value(t) => out.push(t.byte()),
    }
}

fn mem_arg(out: &mut Vec<u8>, m: MemArg) {
    leb_u32(out, m.align);
    leb_u32(out, m.offset);
}

fn const_expr(out: &mut Vec<u8>, ty: ValType, value: u64) {
    match ty {
        ValType::I64 => {
            out.push(0x42);
            leb_s64(out, value as i64);
        }
        _ => {
            out.push(0x41);
            leb_s64(out, value as u32 as i32 as i64);
        }
    }
    out.push(0x0B);
}

pub(crate) fn encode_op(out: &mut Vec<u8>, op: &Op) {
    out.push(op.opcode());
    match op {
        Op::Block(bt) | Op::Loop(bt) | Op::If(bt) => block_type(out, *bt),
        Op::Br(d) | Op::BrIf(d) => leb_u32(out, *d),
        Op::BrTable { targets, default } => {
            leb_u32(out, targets.len() as u32);
            for t in targets {
                leb_u32(out, *t);
            }
            leb_u32(out, *default);
        }
        Op::Call(f) => leb_u32(out, *f),
        Op::CallIndirect { type_index, table } => {
            leb_u32(out, *type_index);
            leb_u32(out, *table);
        }
        Op::LocalGet(i)
        | Op::LocalSet(i)
        | Op::LocalTee(i)
        | Op::GlobalGet(i)
        | Op::GlobalSet(i) => leb_u32(out, *i),
        Op::Load { mem, .. } | Op::Store { mem, .. } => mem_arg(out, *mem),
        Op::I32Const(v) => leb_s64(out, *v as i64),
        Op::I64Const(v) => leb_s64(out, *v),
        _ => {}
    }
}

fn section(out: &mut Vec<u8>, id: u8, content: &[u8]) -> usize {
    out.push(id);
    leb_u32(out, content.len() as u32);
    let start = out.len();
    out.extend_from_slice(content);
    start
}

fn vec_section<T>(out: &mut Vec<u8>, id: u8, items: &[T], mut f: impl FnMut(&mut Vec<u8>, &T)) {
    if items.is_empty() {
        return;
    }
    let mut c = Vec::new();
    leb_u32(&mut c, items.len() as u32);
    for it in items {
        f(&mut c, it);
    }
    section(out, id, &c);
}

/// Encodes a module, returning the bytes and the absolute offset of every
/// instruction (indexed by defined function, then body position).
pub fn encode_with_offsets(m: &Module) -> (Vec<u8>, Vec<Vec<u32>>) {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());

    vec_section(&mut out, 1, &m.types, |c, t| {
        c.push(0x60);
        leb_u32(c, t.params.len() as u32);
        c.extend(t.params.iter().map(|p| p.byte()));
        leb_u32(c, t.results.len() as u32);
        c.extend(t.results.iter().map(|r| r.byte()));
    });
    vec_section(&mut out, 2, &m.imports, |c, i| {
        name(c, &i.module);
        name(c, &i.name);
        c.push(0x00);
        leb_u32(c, i.type_index);
    });
    vec_section(&mut out, 3, &m.functions, |c, f| leb_u32(c, f.type_index));
    let tables: Vec<_> = m.table.iter().collect();
    vec_section(&mut out, 4, &tables, |c, t| {
        c.push(0x70);
        limits(c, t.min, t.max);
    });
    vec_section(&mut out, 5, &m.memories, |c, mem| limits(c, mem.min_pages, mem.max_pages));
    vec_section(&mut out, 6, &m.globals, |c, g| {
        c.push(g.ty.byte());
        c.push(g.mutable as u8);
        const_expr(c, g.ty, g.init);
    });
    vec_section(&mut out, 7, &m.exports, |c, e| {
        name(c, &e.name);
        c.push(e.kind.byte());
        leb_u32(c, e.index);
    });
    if let Some(s) = m.start {
        let mut c = Vec::new();
        leb_u32(&mut c, s);
        section(&mut out, 8, &c);
    }
    vec_section(&mut out, 9, &m.elements, |c, seg| {
        leb_u32(c, 0);
        const_expr(c, ValType::I32, seg.offset as u64);
        leb_u32(c, seg.functions.len() as u32);
        for f in &seg.functions {
            leb_u32(c, *f);
        }
    });

    let mut offsets = Vec::with_capacity(m.functions.len());
    if !m.functions.is_empty() {
        let mut c = Vec::new();
        let mut relative = Vec::with_capacity(m.functions.len());
        leb_u32(&mut c, m.functions.len() as u32);
        for f in &m.functions {
            let mut body = Vec::new();
            let mut runs: Vec<(u32, ValType)> = Vec::new();
            for t in &f.locals {
                match runs.last_mut() {
                    Some((n, rt)) if rt == t => *n += 1,
                    _ => runs.push((1, *t)),
                }
            }
            leb_u32(&mut body, runs.len() as u32);
            for (n, t) in runs {
                leb_u32(&mut body, n);
                body.push(t.byte());
            }
            let mut at = Vec::with_capacity(f.body.len());
            for ins in &f.body {
                at.push(body.len());
                encode_op(&mut body, &ins.op);
            }
            leb_u32(&mut c, body.len() as u32);
            let base = c.len();
            relative.push(at.into_iter().map(|a| a + base).collect::<Vec<_>>());
            c.extend_from_slice(&body);
        }
        let start = section(&mut out, 10, &c);
        for rel in relative {
            offsets.push(rel.into_iter().map(|r| (start + r) as u32).collect());
        }
    }
    (out, offsets)
}

/// Canonical re-serialization of a module.
pub fn encode_module(m: &Module) -> Vec<u8> {
    encode_with_offsets(m).0
}

/// Copies instruction offsets from an encoding back into a module.
pub(crate) fn assign_offsets(m: &mut Module, offsets: &[Vec<u32>]) {
    for (f, offs) in m.functions.iter_mut().zip(offsets) {
        for (ins, off) in f.body.iter_mut().zip(offs) {
            *ins = Instruction::new(ins.op.clone(), *off);
        }
    }
}
