//! The supported WebAssembly subset: binary decoding, canonical encoding,
//! the text assembler, per-function control-flow graphs and source maps.
//!
//! Only integer (`i32`/`i64`) computation is executable. Float value types
//! may appear in signatures, but any float instruction is rejected with
//! [`ParseError::UnsupportedOpcode`]. The only permitted import is the
//! assertion hook `env.tcpa_assert : [i32] -> []`.

mod cfg;
mod encode;
mod ops;
mod reader;
mod srcmap;
mod text;
mod types;
mod validate;

pub use cfg::{build_cfg, BasicBlock, Cfg, CfgError, ControlTable, Edge, EdgeKind};
pub use encode::{encode_module, encode_with_offsets};
pub use ops::{BinOp, BlockType, CmpOp, Instruction, IntType, MemArg, Op};
pub use reader::{parse_module, ParseError};
pub use srcmap::{SourceLocation, SourceMap, SourceMapError};
pub use text::{assemble_text, AssembleError};
pub use types::{
    ElementSegment, Export, ExportKind, FuncType, Function, GlobalSpec, Import, MemorySpec,
    Module, TableSpec, ValType,
};

/// `\0asm`
pub const MAGIC: [u8; 4] = [0x00, 0x61, 0x73, 0x6D];
pub const VERSION: u32 = 1;
pub const PAGE_SIZE: u32 = 65_536;
/// Desk-scale cap on declared linear memory.
pub const MAX_PAGES: u32 = 1024;

pub const ASSERT_MODULE: &str = "env";
pub const ASSERT_NAME: &str = "tcpa_assert";

/// Total decoded instructions across all function bodies, `end` included.
pub fn count_instructions(m: &Module) -> usize {
    m.functions.iter().map(|f| f.body.len()).sum()
}
