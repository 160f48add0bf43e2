use std::fmt;

use super::cfg::{Cfg, ControlTable};
use super::ops::Instruction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ValType {
    I32,
    I64,
    F32,
    F64,
}

impl ValType {
    pub fn from_byte(b: u8) -> Option<ValType> {
        match b {
            0x7F => Some(ValType::I32),
            0x7E => Some(ValType::I64),
            0x7D => Some(ValType::F32),
            0x7C => Some(ValType::F64),
            _ => None,
        }
    }

    pub fn byte(self) -> u8 {
        match self {
            ValType::I32 => 0x7F,
            ValType::I64 => 0x7E,
            ValType::F32 => 0x7D,
            ValType::F64 => 0x7C,
        }
    }

    pub fn is_int(self) -> bool {
        matches!(self, ValType::I32 | ValType::I64)
    }

    pub fn bits(self) -> u8 {
        match self {
            ValType::I32 | ValType::F32 => 32,
            ValType::I64 | ValType::F64 => 64,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ValType::I32 => "i32",
            ValType::I64 => "i64",
            ValType::F32 => "f32",
            ValType::F64 => "f64",
        }
    }
}

impl fmt::Display for ValType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct FuncType {
    pub params: Vec<ValType>,
    pub results: Vec<ValType>,
}

impl FuncType {
    pub fn new(params: Vec<ValType>, results: Vec<ValType>) -> Self {
        FuncType { params, results }
    }
}

impl fmt::Display for FuncType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[ValType]| v.iter().map(|t| t.name()).collect::<Vec<_>>().join(" ");
        write!(f, "[{}] -> [{}]", join(&self.params), join(&self.results))
    }
}

/// A function import. Validation restricts these to the assertion hook.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Import {
    pub module: String,
    pub name: String,
    pub type_index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Function {
    pub type_index: u32,
    /// Declared locals, excluding parameters.
    pub locals: Vec<ValType>,
    pub body: Vec<Instruction>,
    pub cfg: Cfg,
    pub control: ControlTable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TableSpec {
    pub min: u32,
    pub max: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemorySpec {
    pub min_pages: u32,
    pub max_pages: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GlobalSpec {
    pub ty: ValType,
    pub mutable: bool,
    /// Initial value, already truncated to the global's width.
    pub init: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExportKind {
    Func,
    Table,
    Memory,
    Global,
}

impl ExportKind {
    pub fn byte(self) -> u8 {
        match self {
            ExportKind::Func => 0,
            ExportKind::Table => 1,
            ExportKind::Memory => 2,
            ExportKind::Global => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Export {
    pub name: String,
    pub kind: ExportKind,
    pub index: u32,
}

/// An active element segment for table 0 with a constant offset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElementSegment {
    pub offset: u32,
    pub functions: Vec<u32>,
}

/// A validated module of the supported subset.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Module {
    pub types: Vec<FuncType>,
    pub imports: Vec<Import>,
    pub functions: Vec<Function>,
    pub table: Option<TableSpec>,
    pub memories: Vec<MemorySpec>,
    pub globals: Vec<GlobalSpec>,
    pub exports: Vec<Export>,
    pub start: Option<u32>,
    pub elements: Vec<ElementSegment>,
}

impl Module {
    pub fn imported_function_count(&self) -> u32 {
        self.imports.len() as u32
    }

    /// Size of the function index space (imports first, then definitions).
    pub fn function_count(&self) -> u32 {
        self.imported_function_count() + self.functions.len() as u32
    }

    /// Signature of any function in the index space.
    pub fn func_type(&self, func_index: u32) -> Option<&FuncType> {
        let imported = self.imported_function_count();
        let type_index = if func_index < imported {
            self.imports[func_index as usize].type_index
        } else {
            self.functions
                .get((func_index - imported) as usize)?
                .type_index
        };
        self.types.get(type_index as usize)
    }

    /// Definition for an index-space function, `None` for imports.
    pub fn defined(&self, func_index: u32) -> Option<&Function> {
        func_index
            .checked_sub(self.imported_function_count())
            .and_then(|i| self.functions.get(i as usize))
    }

    pub fn is_assert_import(&self, func_index: u32) -> bool {
        self.imports
            .get(func_index as usize)
            .is_some_and(|i| i.module == super::ASSERT_MODULE && i.name == super::ASSERT_NAME)
    }

    pub fn exported_function(&self, name: &str) -> Option<u32> {
        self.exports
            .iter()
            .find(|e| e.kind == ExportKind::Func && e.name == name)
            .map(|e| e.index)
    }

    /// Table contents after applying element segments; `None` marks an
    /// uninitialised slot.
    pub fn table_slots(&self) -> Vec<Option<u32>> {
        let Some(table) = self.table else {
            return Vec::new();
        };
        let mut slots = vec![None; table.min as usize];
        for seg in &self.elements {
            for (i, f) in seg.functions.iter().enumerate() {
                if let Some(slot) = slots.get_mut(seg.offset as usize + i) {
                    *slot = Some(*f);
                }
            }
        }
        slots
    }

    pub fn memory_bytes(&self) -> usize {
        self.memories
            .first()
            .map(|m| m.min_pages as usize * super::PAGE_SIZE as usize)
            .unwrap_or(0)
    }
}
