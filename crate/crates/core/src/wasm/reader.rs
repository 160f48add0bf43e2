//! Binary decoder for the supported subset.

use thiserror::Error;

use super::cfg::{build_cfg, control_table};
use super::ops::{BlockType, Instruction, MemArg, Op, LOADS, STORES};
use super::types::{
    ElementSegment, Export, ExportKind, FuncType, Function, GlobalSpec, Import, MemorySpec,
    Module, TableSpec, ValType,
};
use super::validate::validate_module;
use super::{MAGIC, VERSION};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("bad module header: expected \\0asm version 1")]
    BadMagic,
    #[error("unsupported section id {id} at byte {offset}")]
    UnsupportedSection { id: u8, offset: u32 },
    #[error("unsupported opcode 0x{opcode:02X} at byte {offset}")]
    UnsupportedOpcode { opcode: u8, offset: u32 },
    #[error("truncated input at byte {offset}: {detail}")]
    TruncatedInput { offset: u32, detail: &'static str },
    #[error("validation failure: {invariant}{}", offset.map(|o| format!(" (at byte {o})")).unwrap_or_default())]
    ValidationFailure {
        invariant: String,
        offset: Option<u32>,
    },
}

impl ParseError {
    pub(crate) fn invalid(invariant: impl Into<String>, offset: Option<u32>) -> Self {
        ParseError::ValidationFailure {
            invariant: invariant.into(),
            offset,
        }
    }
}

type Result<T> = std::result::Result<T, ParseError>;

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn offset(&self) -> u32 {
        self.pos as u32
    }

    fn truncated(&self, detail: &'static str) -> ParseError {
        ParseError::TruncatedInput {
            offset: self.offset(),
            detail,
        }
    }

    fn byte(&mut self) -> Result<u8> {
        let b = *self
            .data
            .get(self.pos)
            .ok_or_else(|| self.truncated("unexpected end of input"))?;
        self.pos += 1;
        Ok(b)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.data.len())
            .ok_or_else(|| self.truncated("length exceeds remaining input"))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let mut result = 0u32;
        for i in 0..5 {
            let b = self.byte()?;
            if i == 4 && (b & 0xF0) != 0 {
                return Err(self.truncated("unsigned LEB128 wider than 32 bits"));
            }
            result |= ((b & 0x7F) as u32) << (7 * i);
            if b & 0x80 == 0 {
                return Ok(result);
            }
        }
        unreachable!()
    }

    fn s32(&mut self) -> Result<i32> {
        let mut result = 0i64;
        for i in 0..5 {
            let b = self.byte()?;
            if i == 4 {
                let sign_ok = if b & 0x08 != 0 {
                    b & 0x70 == 0x70
                } else {
                    b & 0x70 == 0
                };
                if b & 0x80 != 0 || !sign_ok {
                    return Err(self.truncated("signed LEB128 wider than 32 bits"));
                }
            }
            result |= ((b & 0x7F) as i64) << (7 * i);
            if b & 0x80 == 0 {
                let shift = 64 - 7 * (i + 1);
                let v = if shift > 0 {
                    (result << shift) >> shift
                } else {
                    result
                };
                return Ok(v as i32);
            }
        }
        unreachable!()
    }

    fn s64(&mut self) -> Result<i64> {
        let mut result = 0i128;
        for i in 0..10 {
            let b = self.byte()?;
            if i == 9 && b != 0x00 && b != 0x7F {
                return Err(self.truncated("signed LEB128 wider than 64 bits"));
            }
            result |= ((b & 0x7F) as i128) << (7 * i);
            if b & 0x80 == 0 {
                let shift = 128 - 7 * (i + 1);
                return Ok(((result << shift) >> shift) as i64);
            }
        }
        unreachable!()
    }

    fn name(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let at = self.offset();
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec())
            .map_err(|_| ParseError::invalid("names must be valid UTF-8", Some(at)))
    }

    fn val_type(&mut self) -> Result<ValType> {
        let at = self.offset();
        let b = self.byte()?;
        ValType::from_byte(b).ok_or_else(|| ParseError::invalid(format!("unknown value type 0x{b:02X}"), Some(at)))
    }

    fn limits(&mut self) -> Result<(u32, Option<u32>)> {
        let at = self.offset();
        match self.byte()? {
            0x00 => Ok((self.u32()?, None)),
            0x01 => {
                let min = self.u32()?;
                Ok((min, Some(self.u32()?)))
            }
            f => Err(ParseError::invalid(format!("unknown limits flag 0x{f:02X}"), Some(at))),
        }
    }

    fn block_type(&mut self) -> Result<BlockType> {
        let at = self.offset();
        let b = self.byte()?;
        if b == 0x40 {
            return Ok(BlockType::Empty);
        }
        ValType::from_byte(b)
            .map(BlockType::Value)
            .ok_or_else(|| ParseError::invalid("block signatures by type index are outside the subset", Some(at)))
    }

    fn mem_arg(&mut self) -> Result<MemArg> {
        Ok(MemArg {
            align: self.u32()?,
            offset: self.u32()?,
        })
    }

    /// Decodes one `i32.const n end` / `i64.const n end` constant expression.
    fn const_expr(&mut self) -> Result<(ValType, u64)> {
        let at = self.offset();
        let op = self.byte()?;
        let value = match op {
            0x41 => (ValType::I32, self.s32()? as u32 as u64),
            0x42 => (ValType::I64, self.s64()? as u64),
            other => return Err(ParseError::UnsupportedOpcode { opcode: other, offset: at }),
        };
        let end_at = self.offset();
        if self.byte()? != 0x0B {
            return Err(ParseError::invalid("constant expression must be a single const then end", Some(end_at)));
        }
        Ok(value)
    }

    fn instruction(&mut self) -> Result<Instruction> {
        let offset = self.offset();
        let opcode = self.byte()?;
        let op = match opcode {
            0x02 => Op::Block(self.block_type()?),
            0x03 => Op::Loop(self.block_type()?),
            0x04 => Op::If(self.block_type()?),
            0x0C => Op::Br(self.u32()?),
            0x0D => Op::BrIf(self.u32()?),
            0x0E => {
                let n = self.u32()? as usize;
                if n > self.data.len() {
                    return Err(self.truncated("br_table length exceeds input"));
                }
                let targets = (0..n).map(|_| self.u32()).collect::<Result<Vec<_>>>()?;
                Op::BrTable {
                    targets,
                    default: self.u32()?,
                }
            }
            0x10 => Op::Call(self.u32()?),
            0x11 => Op::CallIndirect {
                type_index: self.u32()?,
                table: self.u32()?,
            },
            0x20 => Op::LocalGet(self.u32()?),
            0x21 => Op::LocalSet(self.u32()?),
            0x22 => Op::LocalTee(self.u32()?),
            0x23 => Op::GlobalGet(self.u32()?),
            0x24 => Op::GlobalSet(self.u32()?),
            0x41 => Op::I32Const(self.s32()?),
            0x42 => Op::I64Const(self.s64()?),
            _ => {
                if let Some(&(_, ty, bytes, signed)) = LOADS.iter().find(|l| l.0 == opcode) {
                    Op::Load {
                        ty,
                        bytes,
                        signed,
                        mem: self.mem_arg()?,
                    }
                } else if let Some(&(_, ty, bytes)) = STORES.iter().find(|s| s.0 == opcode) {
                    Op::Store {
                        ty,
                        bytes,
                        mem: self.mem_arg()?,
                    }
                } else {
                    Op::from_simple_opcode(opcode)
                        .ok_or(ParseError::UnsupportedOpcode { opcode, offset })?
                }
            }
        };
        Ok(Instruction { op, offset })
    }
}

const SECTION_ORDER: [u8; 10] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];

/// Decodes and validates a module of the supported subset.
pub fn parse_module(bytes: &[u8]) -> Result<Module> {
    if bytes.len() < 8 || bytes[..4] != MAGIC {
        return Err(ParseError::BadMagic);
    }
    if u32::from_le_bytes(bytes[4..8].try_into().unwrap()) != VERSION {
        return Err(ParseError::BadMagic);
    }
    let mut r = Reader { data: bytes, pos: 8 };
    let mut m = Module::default();
    let mut func_types: Vec<u32> = Vec::new();
    let mut bodies: Vec<(Vec<ValType>, Vec<Instruction>, u32)> = Vec::new();
    let mut last_rank: Option<usize> = None;

    while r.pos < bytes.len() {
        let section_at = r.offset();
        let id = r.byte()?;
        let rank = SECTION_ORDER
            .iter()
            .position(|s| *s == id)
            .ok_or(ParseError::UnsupportedSection { id, offset: section_at })?;
        if last_rank.is_some_and(|l| rank <= l) {
            return Err(ParseError::invalid(
                format!("section {id} is duplicated or out of order"),
                Some(section_at),
            ));
        }
        last_rank = Some(rank);
        let size = r.u32()? as usize;
        let body_start = r.pos;
        r.take(size)?;
        let end = r.pos;
        let mut s = Reader {
            data: &bytes[..end],
            pos: body_start,
        };
        match id {
            1 => {
                let n = s.u32()?;
                for _ in 0..n {
                    let at = s.offset();
                    if s.byte()? != 0x60 {
                        return Err(ParseError::invalid("function type must start with 0x60", Some(at)));
                    }
                    let np = s.u32()?;
                    let params = (0..np).map(|_| s.val_type()).collect::<Result<Vec<_>>>()?;
                    let nr = s.u32()?;
                    let results = (0..nr).map(|_| s.val_type()).collect::<Result<Vec<_>>>()?;
                    m.types.push(FuncType { params, results });
                }
            }
            2 => {
                let n = s.u32()?;
                for _ in 0..n {
                    let at = s.offset();
                    let module = s.name()?;
                    let name = s.name()?;
                    if s.byte()? != 0x00 {
                        return Err(ParseError::invalid("only function imports are supported", Some(at)));
                    }
                    let type_index = s.u32()?;
                    m.imports.push(Import {
                        module,
                        name,
                        type_index,
                    });
                }
            }
            3 => {
                let n = s.u32()?;
                for _ in 0..n {
                    func_types.push(s.u32()?);
                }
            }
            4 => {
                let n = s.u32()?;
                for _ in 0..n {
                    let at = s.offset();
                    if s.byte()? != 0x70 {
                        return Err(ParseError::invalid("tables must hold funcref", Some(at)));
                    }
                    let (min, max) = s.limits()?;
                    if m.table.is_some() {
                        return Err(ParseError::invalid("at most one table", Some(at)));
                    }
                    m.table = Some(TableSpec { min, max });
                }
            }
            5 => {
                let n = s.u32()?;
                for _ in 0..n {
                    let (min_pages, max_pages) = s.limits()?;
                    m.memories.push(MemorySpec {
                        min_pages,
                        max_pages,
                    });
                }
            }
            6 => {
                let n = s.u32()?;
                for _ in 0..n {
                    let at = s.offset();
                    let ty = s.val_type()?;
                    let mutable = match s.byte()? {
                        0 => false,
                        1 => true,
                        _ => return Err(ParseError::invalid("bad global mutability flag", Some(at))),
                    };
                    let (init_ty, init) = s.const_expr()?;
                    if init_ty != ty {
                        return Err(ParseError::invalid("global initializer type mismatch", Some(at)));
                    }
                    m.globals.push(GlobalSpec { ty, mutable, init });
                }
            }
            7 => {
                let n = s.u32()?;
                for _ in 0..n {
                    let at = s.offset();
                    let name = s.name()?;
                    let kind = match s.byte()? {
                        0 => ExportKind::Func,
                        1 => ExportKind::Table,
                        2 => ExportKind::Memory,
                        3 => ExportKind::Global,
                        k => return Err(ParseError::invalid(format!("unknown export kind {k}"), Some(at))),
                    };
                    m.exports.push(Export {
                        name,
                        kind,
                        index: s.u32()?,
                    });
                }
            }
            8 => m.start = Some(s.u32()?),
            9 => {
                let n = s.u32()?;
                for _ in 0..n {
                    let at = s.offset();
                    if s.u32()? != 0 {
                        return Err(ParseError::invalid(
                            "only active table-0 element segments are supported",
                            Some(at),
                        ));
                    }
                    let (ty, offset) = s.const_expr()?;
                    if ty != ValType::I32 {
                        return Err(ParseError::invalid("element offset must be i32", Some(at)));
                    }
                    let count = s.u32()?;
                    let functions = (0..count).map(|_| s.u32()).collect::<Result<Vec<_>>>()?;
                    m.elements.push(ElementSegment {
                        offset: offset as u32,
                        functions,
                    });
                }
            }
            10 => {
                let n = s.u32()?;
                for _ in 0..n {
                    let size = s.u32()? as usize;
                    let body_at = s.offset();
                    let body_end = s.pos + size;
                    if body_end > end {
                        return Err(s.truncated("function body exceeds section"));
                    }
                    let mut b = Reader {
                        data: &bytes[..body_end],
                        pos: s.pos,
                    };
                    let mut locals = Vec::new();
                    let groups = b.u32()?;
                    for _ in 0..groups {
                        let count = b.u32()?;
                        let ty = b.val_type()?;
                        if locals.len() + count as usize > 50_000 {
                            return Err(ParseError::invalid("too many locals", Some(body_at)));
                        }
                        locals.extend(std::iter::repeat(ty).take(count as usize));
                    }
                    let mut body = Vec::new();
                    while b.pos < body_end {
                        body.push(b.instruction()?);
                    }
                    if body.last().map(|i| &i.op) != Some(&Op::End) {
                        return Err(ParseError::invalid("function body must end with end", Some(body_at)));
                    }
                    bodies.push((locals, body, body_at));
                    s.pos = body_end;
                }
            }
            _ => unreachable!(),
        }
        if s.pos != end {
            return Err(ParseError::invalid(
                format!("section {id} size does not match its contents"),
                Some(section_at),
            ));
        }
    }

    if func_types.len() != bodies.len() {
        return Err(ParseError::invalid(
            "function and code section counts differ",
            None,
        ));
    }
    for (type_index, (locals, body, at)) in func_types.into_iter().zip(bodies) {
        let control = control_table(&body).map_err(|e| ParseError::invalid(e.to_string(), Some(at)))?;
        let cfg = build_cfg(&body).map_err(|e| ParseError::invalid(e.to_string(), Some(at)))?;
        m.functions.push(Function {
            type_index,
            locals,
            body,
            cfg,
            control,
        });
    }
    validate_module(&m)?;
    Ok(m)
}
