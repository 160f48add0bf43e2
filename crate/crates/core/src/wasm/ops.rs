use std::fmt;

use super::types::ValType;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IntType {
    I32,
    I64,
}

impl IntType {
    pub fn bits(self) -> u8 {
        match self {
            IntType::I32 => 32,
            IntType::I64 => 64,
        }
    }

    pub fn val_type(self) -> ValType {
        match self {
            IntType::I32 => ValType::I32,
            IntType::I64 => ValType::I64,
        }
    }

    pub fn prefix(self) -> &'static str {
        match self {
            IntType::I32 => "i32",
            IntType::I64 => "i64",
        }
    }
}

/// Arithmetic and bitwise binary operators, shared by both integer widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    DivS,
    DivU,
    RemS,
    RemU,
    And,
    Or,
    Xor,
    Shl,
    ShrS,
    ShrU,
}

impl BinOp {
    pub const ALL: [BinOp; 13] = [
        BinOp::Add,
        BinOp::Sub,
        BinOp::Mul,
        BinOp::DivS,
        BinOp::DivU,
        BinOp::RemS,
        BinOp::RemU,
        BinOp::And,
        BinOp::Or,
        BinOp::Xor,
        BinOp::Shl,
        BinOp::ShrS,
        BinOp::ShrU,
    ];

    pub fn suffix(self) -> &'static str {
        match self {
            BinOp::Add => "add",
            BinOp::Sub => "sub",
            BinOp::Mul => "mul",
            BinOp::DivS => "div_s",
            BinOp::DivU => "div_u",
            BinOp::RemS => "rem_s",
            BinOp::RemU => "rem_u",
            BinOp::And => "and",
            BinOp::Or => "or",
            BinOp::Xor => "xor",
            BinOp::Shl => "shl",
            BinOp::ShrS => "shr_s",
            BinOp::ShrU => "shr_u",
        }
    }

    pub fn may_trap(self) -> bool {
        matches!(self, BinOp::DivS | BinOp::DivU | BinOp::RemS | BinOp::RemU)
    }
}

/// Comparisons; all produce an `i32` holding 0 or 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CmpOp {
    Eq,
    Ne,
    LtS,
    LtU,
    GtS,
    GtU,
    LeS,
    LeU,
    GeS,
    GeU,
}

impl CmpOp {
    pub const ALL: [CmpOp; 10] = [
        CmpOp::Eq,
        CmpOp::Ne,
        CmpOp::LtS,
        CmpOp::LtU,
        CmpOp::GtS,
        CmpOp::GtU,
        CmpOp::LeS,
        CmpOp::LeU,
        CmpOp::GeS,
        CmpOp::GeU,
    ];

    pub fn suffix(self) -> &'static str {
        match self {
            CmpOp::Eq => "eq",
            CmpOp::Ne => "ne",
            CmpOp::LtS => "lt_s",
            CmpOp::LtU => "lt_u",
            CmpOp::GtS => "gt_s",
            CmpOp::GtU => "gt_u",
            CmpOp::LeS => "le_s",
            CmpOp::LeU => "le_u",
            CmpOp::GeS => "ge_s",
            CmpOp::GeU => "ge_u",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockType {
    Empty,
    Value(ValType),
}

impl BlockType {
    pub fn arity(self) -> usize {
        match self {
            BlockType::Empty => 0,
            BlockType::Value(_) => 1,
        }
    }
}

/// Memory immediate. `align` is the log2 exponent as encoded in the binary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct MemArg {
    pub align: u32,
    pub offset: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Op {
    Unreachable,
    Nop,
    Block(BlockType),
    Loop(BlockType),
    If(BlockType),
    Else,
    End,
    Br(u32),
    BrIf(u32),
    BrTable { targets: Vec<u32>, default: u32 },
    Return,
    Call(u32),
    CallIndirect { type_index: u32, table: u32 },
    Drop,
    Select,
    LocalGet(u32),
    LocalSet(u32),
    LocalTee(u32),
    GlobalGet(u32),
    GlobalSet(u32),
    /// `bytes` is the access width (1, 2, 4 or 8).
    Load {
        ty: IntType,
        bytes: u8,
        signed: bool,
        mem: MemArg,
    },
    Store {
        ty: IntType,
        bytes: u8,
        mem: MemArg,
    },
    I32Const(i32),
    I64Const(i64),
    Eqz(IntType),
    Binary(IntType, BinOp),
    Compare(IntType, CmpOp),
}

pub(crate) const LOADS: [(u8, IntType, u8, bool); 12] = [
    (0x28, IntType::I32, 4, false),
    (0x29, IntType::I64, 8, false),
    (0x2C, IntType::I32, 1, true),
    (0x2D, IntType::I32, 1, false),
    (0x2E, IntType::I32, 2, true),
    (0x2F, IntType::I32, 2, false),
    (0x30, IntType::I64, 1, true),
    (0x31, IntType::I64, 1, false),
    (0x32, IntType::I64, 2, true),
    (0x33, IntType::I64, 2, false),
    (0x34, IntType::I64, 4, true),
    (0x35, IntType::I64, 4, false),
];

pub(crate) const STORES: [(u8, IntType, u8); 7] = [
    (0x36, IntType::I32, 4),
    (0x37, IntType::I64, 8),
    (0x3A, IntType::I32, 1),
    (0x3B, IntType::I32, 2),
    (0x3C, IntType::I64, 1),
    (0x3D, IntType::I64, 2),
    (0x3E, IntType::I64, 4),
];

fn cmp_base(ty: IntType) -> u8 {
    match ty {
        IntType::I32 => 0x46,
        IntType::I64 => 0x51,
    }
}

fn bin_base(ty: IntType) -> u8 {
    match ty {
        IntType::I32 => 0x6A,
        IntType::I64 => 0x7C,
    }
}

impl Op {
    /// The opcode byte this instruction is encoded with.
    pub fn opcode(&self) -> u8 {
        match self {
            Op::Unreachable => 0x00,
            Op::Nop => 0x01,
            Op::Block(_) => 0x02,
            Op::Loop(_) => 0x03,
            Op::If(_) => 0x04,
            Op::Else => 0x05,
            Op::End => 0x0B,
            Op::Br(_) => 0x0C,
            Op::BrIf(_) => 0x0D,
            Op::BrTable { .. } => 0x0E,
            Op::Return => 0x0F,
            Op::Call(_) => 0x10,
            Op::CallIndirect { .. } => 0x11,
            Op::Drop => 0x1A,
            Op::Select => 0x1B,
            Op::LocalGet(_) => 0x20,
            Op::LocalSet(_) => 0x21,
            Op::LocalTee(_) => 0x22,
            Op::GlobalGet(_) => 0x23,
            Op::GlobalSet(_) => 0x24,
            Op::Load {
                ty, bytes, signed, ..
            } => {
                LOADS
                    .iter()
                    .find(|(_, t, b, s)| t == ty && b == bytes && (s == signed || *b == ty.bits() / 8))
                    .expect("load shape outside the subset")
                    .0
            }
            Op::Store { ty, bytes, .. } => {
                STORES
                    .iter()
                    .find(|(_, t, b)| t == ty && b == bytes)
                    .expect("store shape outside the subset")
                    .0
            }
            Op::I32Const(_) => 0x41,
            Op::I64Const(_) => 0x42,
            Op::Eqz(IntType::I32) => 0x45,
            Op::Eqz(IntType::I64) => 0x50,
            Op::Compare(ty, op) => {
                cmp_base(*ty) + CmpOp::ALL.iter().position(|c| c == op).unwrap() as u8
            }
            Op::Binary(ty, op) => {
                bin_base(*ty) + BinOp::ALL.iter().position(|b| b == op).unwrap() as u8
            }
        }
    }

    pub(crate) fn from_simple_opcode(byte: u8) -> Option<Op> {
        let op = match byte {
            0x00 => Op::Unreachable,
            0x01 => Op::Nop,
            0x05 => Op::Else,
            0x0B => Op::End,
            0x0F => Op::Return,
            0x1A => Op::Drop,
            0x1B => Op::Select,
            0x45 => Op::Eqz(IntType::I32),
            0x50 => Op::Eqz(IntType::I64),
            0x46..=0x4F => Op::Compare(IntType::I32, CmpOp::ALL[(byte - 0x46) as usize]),
            0x51..=0x5A => Op::Compare(IntType::I64, CmpOp::ALL[(byte - 0x51) as usize]),
            0x6A..=0x76 => Op::Binary(IntType::I32, BinOp::ALL[(byte - 0x6A) as usize]),
            0x7C..=0x88 => Op::Binary(IntType::I64, BinOp::ALL[(byte - 0x7C) as usize]),
            _ => return None,
        };
        Some(op)
    }

    /// Text-format mnemonic.
    pub fn mnemonic(&self) -> String {
        match self {
            Op::Unreachable => "unreachable".into(),
            Op::Nop => "nop".into(),
            Op::Block(_) => "block".into(),
            Op::Loop(_) => "loop".into(),
            Op::If(_) => "if".into(),
            Op::Else => "else".into(),
            Op::End => "end".into(),
            Op::Br(_) => "br".into(),
            Op::BrIf(_) => "br_if".into(),
            Op::BrTable { .. } => "br_table".into(),
            Op::Return => "return".into(),
            Op::Call(_) => "call".into(),
            Op::CallIndirect { .. } => "call_indirect".into(),
            Op::Drop => "drop".into(),
            Op::Select => "select".into(),
            Op::LocalGet(_) => "local.get".into(),
            Op::LocalSet(_) => "local.set".into(),
            Op::LocalTee(_) => "local.tee".into(),
            Op::GlobalGet(_) => "global.get".into(),
            Op::GlobalSet(_) => "global.set".into(),
            Op::Load {
                ty, bytes, signed, ..
            } => {
                if *bytes == ty.bits() / 8 {
                    format!("{}.load", ty.prefix())
                } else {
                    let sign = if *signed { "s" } else { "u" };
                    format!("{}.load{}_{}", ty.prefix(), *bytes as u32 * 8, sign)
                }
            }
            Op::Store { ty, bytes, .. } => {
                if *bytes == ty.bits() / 8 {
                    format!("{}.store", ty.prefix())
                } else {
                    format!("{}.store{}", ty.prefix(), *bytes as u32 * 8)
                }
            }
            Op::I32Const(_) => "i32.const".into(),
            Op::I64Const(_) => "i64.const".into(),
            Op::Eqz(ty) => format!("{}.eqz", ty.prefix()),
            Op::Binary(ty, op) => format!("{}.{}", ty.prefix(), op.suffix()),
            Op::Compare(ty, op) => format!("{}.{}", ty.prefix(), op.suffix()),
        }
    }

    /// Instructions after which execution never falls through.
    pub fn is_terminator(&self) -> bool {
        matches!(
            self,
            Op::Br(_) | Op::BrTable { .. } | Op::Return | Op::Unreachable
        )
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.mnemonic())?;
        match self {
            Op::Block(bt) | Op::Loop(bt) | Op::If(bt) => {
                if let BlockType::Value(t) = bt {
                    write!(f, " (result {t})")?;
                }
            }
            Op::Br(d) | Op::BrIf(d) => write!(f, " {d}")?,
            Op::BrTable { targets, default } => {
                for t in targets {
                    write!(f, " {t}")?;
                }
                write!(f, " {default}")?;
            }
            Op::Call(i) => write!(f, " {i}")?,
            Op::CallIndirect { type_index, .. } => write!(f, " (type {type_index})")?,
            Op::LocalGet(i)
            | Op::LocalSet(i)
            | Op::LocalTee(i)
            | Op::GlobalGet(i)
            | Op::GlobalSet(i) => write!(f, " {i}")?,
            Op::Load { mem, .. } | Op::Store { mem, .. } => {
                if mem.offset != 0 {
                    write!(f, " offset={}", mem.offset)?;
                }
                write!(f, " align={}", 1u64 << mem.align)?;
            }
            Op::I32Const(v) => write!(f, " {v}")?,
            Op::I64Const(v) => write!(f, " {v}")?,
            _ => {}
        }
        Ok(())
    }
}

/// A decoded instruction with the absolute byte offset of its opcode
/// within the module binary.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Instruction {
    pub op: Op,
    pub offset: u32,
}

impl Instruction {
    pub fn new(op: Op, offset: u32) -> Self {
        Instruction { op, offset }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_opcodes_roundtrip() {
        for byte in 0u8..=0xFF {
            if let Some(op) = Op::from_simple_opcode(byte) {
                assert_eq!(op.opcode(), byte, "{op}");
            }
        }
    }

    #[test]
    fn memory_opcodes_match_tables() {
        for (byte, ty, bytes, signed) in LOADS {
            let op = Op::Load {
                ty,
                bytes,
                signed,
                mem: MemArg::default(),
            };
            assert_eq!(op.opcode(), byte);
        }
        for (byte, ty, bytes) in STORES {
            let op = Op::Store {
                ty,
                bytes,
                mem: MemArg::default(),
            };
            assert_eq!(op.opcode(), byte);
        }
    }

    #[test]
    fn mnemonics() {
        assert_eq!(Op::Binary(IntType::I64, BinOp::ShrU).mnemonic(), "i64.shr_u");
        assert_eq!(Op::Compare(IntType::I32, CmpOp::GeS).mnemonic(), "i32.ge_s");
        let load = Op::Load {
            ty: IntType::I32,
            bytes: 1,
            signed: true,
            mem: MemArg::default(),
        };
        assert_eq!(load.mnemonic(), "i32.load8_s");
    }
}
