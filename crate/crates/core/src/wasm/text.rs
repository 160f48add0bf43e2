//! Assembler for the text subset (flat WAT instruction syntax).
//! The grammar is described in `docs/text-format.md`.

use std::collections::HashMap;
use std::sync::OnceLock;

use thiserror::Error;

use super::encode::{assign_offsets, encode_with_offsets};
use super::ops::{BinOp, BlockType, CmpOp, Instruction, IntType, MemArg, Op, LOADS, STORES};
use super::reader::{parse_module, ParseError};
use super::srcmap::{SourceLocation, SourceMap};
use super::types::{
    ElementSegment, Export, ExportKind, FuncType, Function, GlobalSpec, Import, MemorySpec,
    Module, TableSpec, ValType,
};
use super::{ASSERT_MODULE, ASSERT_NAME};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AssembleError {
    #[error("syntax error at {line}:{col}: {message}")]
    SyntaxError { line: u32, col: u32, message: String },
    #[error("unsupported construct at {line}:{col}: {construct}")]
    UnsupportedConstruct {
        line: u32,
        col: u32,
        construct: String,
    },
}

type Pos = SourceLocation;
type Result<T> = std::result::Result<T, AssembleError>;

fn syntax<T>(pos: Pos, message: impl Into<String>) -> Result<T> {
    Err(AssembleError::SyntaxError {
        line: pos.line,
        col: pos.col,
        message: message.into(),
    })
}

fn unsupported<T>(pos: Pos, construct: impl Into<String>) -> Result<T> {
    Err(AssembleError::UnsupportedConstruct {
        line: pos.line,
        col: pos.col,
        construct: construct.into(),
    })
}

#[derive(Debug, Clone, PartialEq)]
enum Sexp {
    List { items: Vec<Sexp>, open: Pos, close: Pos },
    Atom { text: String, pos: Pos },
    Str { bytes: Vec<u8>, pos: Pos },
}

impl Sexp {
    fn pos(&self) -> Pos {
        match self {
            Sexp::List { open, .. } => *open,
            Sexp::Atom { pos, .. } | Sexp::Str { pos, .. } => *pos,
        }
    }

    fn atom(&self) -> Option<&str> {
        match self {
            Sexp::Atom { text, .. } => Some(text),
            _ => None,
        }
    }

    /// Head keyword of a list, e.g. `func` for `(func ...)`.
    fn head(&self) -> Option<&str> {
        match self {
            Sexp::List { items, .. } => items.first().and_then(Sexp::atom),
            _ => None,
        }
    }

    fn items(&self) -> &[Sexp] {
        match self {
            Sexp::List { items, .. } => items,
            _ => &[],
        }
    }
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: u32,
    col: u32,
}

impl<'a> Lexer<'a> {
    fn pos(&self) -> Pos {
        Pos {
            line: self.line,
            col: self.col,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn skip_trivia(&mut self) -> Result<()> {
        loop {
            match self.chars.peek().copied() {
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some(';') => {
                    let at = self.pos();
                    self.bump();
                    if self.bump() != Some(';') {
                        return syntax(at, "stray `;`");
                    }
                    while let Some(c) = self.bump() {
                        if c == '\n' {
                            break;
                        }
                    }
                }
                Some('(') => {
                    let mut ahead = self.chars.clone();
                    ahead.next();
                    if ahead.next() != Some(';') {
                        return Ok(());
                    }
                    let at = self.pos();
                    self.bump();
                    self.bump();
                    let mut depth = 1;
                    let mut prev = '\0';
                    while depth > 0 {
                        let Some(c) = self.bump() else {
                            return syntax(at, "unterminated block comment");
                        };
                        if prev == '(' && c == ';' {
                            depth += 1;
                            prev = '\0';
                        } else if prev == ';' && c == ')' {
                            depth -= 1;
                            prev = '\0';
                        } else {
                            prev = c;
                        }
                    }
                }
                _ => return Ok(()),
            }
        }
    }

    fn string(&mut self) -> Result<Vec<u8>> {
        let at = self.pos();
        self.bump();
        let mut out = Vec::new();
        loop {
            let Some(c) = self.bump() else {
                return syntax(at, "unterminated string");
            };
            match c {
                '"' => return Ok(out),
                '\\' => {
                    let esc_at = self.pos();
                    match self.bump() {
                        Some('n') => out.push(b'\n'),
                        Some('t') => out.push(b'\t'),
                        Some('r') => out.push(b'\r'),
                        Some('\\') => out.push(b'\\'),
                        Some('"') => out.push(b'"'),
                        Some('\'') => out.push(b'\''),
                        Some(h) if h.is_ascii_hexdigit() => {
                            let l = self.bump().filter(char::is_ascii_hexdigit);
                            let Some(l) = l else {
                                return syntax(esc_at, "bad hex escape");
                            };
                            let hi = h.to_digit(16).unwrap() as u8;
                            out.push(hi * 16 + l.to_digit(16).unwrap() as u8);
                        }
                        _ => return syntax(esc_at, "bad string escape"),
                    }
                }
                c => {
                    let mut buf = [0u8; 4];
                    out.extend_from_slice(c.encode_utf8(&mut buf).as_bytes());
                }
            }
        }
    }

    /// Parses a sequence of s-expressions until `)` or end of input.
    fn sequence(&mut self, open: Option<Pos>) -> Result<(Vec<Sexp>, Pos)> {
        let mut items = Vec::new();
        loop {
            self.skip_trivia()?;
            let at = self.pos();
            match self.chars.peek().copied() {
                None => {
                    return match open {
                        Some(o) => syntax(o, "unclosed parenthesis"),
                        None => Ok((items, at)),
                    }
                }
                Some(')') => {
                    if open.is_none() {
                        return syntax(at, "unexpected `)`");
                    }
                    self.bump();
                    return Ok((items, at));
                }
                Some('(') => {
                    self.bump();
                    let (inner, close) = self.sequence(Some(at))?;
                    items.push(Sexp::List {
                        items: inner,
                        open: at,
                        close,
                    });
                }
                Some('"') => {
                    let bytes = self.string()?;
                    items.push(Sexp::Str { bytes, pos: at });
                }
                Some(_) => {
                    let mut text = String::new();
                    while let Some(&c) = self.chars.peek() {
                        if c.is_whitespace() || c == '(' || c == ')' || c == '"' || c == ';' {
                            break;
                        }
                        text.push(c);
                        self.bump();
                    }
                    items.push(Sexp::Atom { text, pos: at });
                }
            }
        }
    }
}

fn parse_sexps(source: &str) -> Result<Vec<Sexp>> {
    let mut lx = Lexer {
        chars: source.chars().peekable(),
        line: 1,
        col: 1,
    };
    Ok(lx.sequence(None)?.0)
}

/// Parses an integer literal of the given width. Both signed and unsigned
/// spellings are accepted; the result is the two's-complement bit pattern.
fn parse_int(text: &str, bits: u32) -> Option<u64> {
    let (neg, rest) = match text.as_bytes().first() {
        Some(b'-') => (true, &text[1..]),
        Some(b'+') => (false, &text[1..]),
        _ => (false, text),
    };
    if rest.is_empty() || rest.starts_with('_') || rest.ends_with('_') || rest.contains("__") {
        return None;
    }
    let digits: String = rest.chars().filter(|c| *c != '_').collect();
    let magnitude = match digits.strip_prefix("0x") {
        Some(hex) if !hex.is_empty() => u128::from_str_radix(hex, 16).ok()?,
        Some(_) => return None,
        None => {
            if !digits.bytes().all(|b| b.is_ascii_digit()) {
                return None;
            }
            digits.parse::<u128>().ok()?
        }
    };
    let mask = (1u128 << bits) - 1;
    if neg {
        if magnitude > 1u128 << (bits - 1) {
            return None;
        }
        Some((magnitude.wrapping_neg() & mask) as u64)
    } else if magnitude <= mask {
        Some(magnitude as u64)
    } else {
        None
    }
}

fn parse_u32(node: &Sexp) -> Option<u32> {
    let text = node.atom()?;
    if text.starts_with('-') || text.starts_with('+') {
        return None;
    }
    parse_int(text, 32).map(|v| v as u32)
}

#[derive(Clone, Copy)]
enum Template {
    Plain,
    Load(IntType, u8, bool),
    Store(IntType, u8),
}

/// Mnemonic table for every instruction without structured immediates.
fn templates() -> &'static HashMap<String, (Op, Template)> {
    static TABLE: OnceLock<HashMap<String, (Op, Template)>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = HashMap::new();
        let mut plain = |op: Op| {
            t.insert(op.mnemonic(), (op, Template::Plain));
        };
        for op in [Op::Unreachable, Op::Nop, Op::Return, Op::Drop, Op::Select] {
            plain(op);
        }
        for ty in [IntType::I32, IntType::I64] {
            plain(Op::Eqz(ty));
            for b in BinOp::ALL {
                plain(Op::Binary(ty, b));
            }
            for c in CmpOp::ALL {
                plain(Op::Compare(ty, c));
            }
        }
        for (_, ty, bytes, signed) in LOADS {
            let op = Op::Load {
                ty,
                bytes,
                signed,
                mem: MemArg::default(),
            };
            t.insert(op.mnemonic(), (op, Template::Load(ty, bytes, signed)));
        }
        for (_, ty, bytes) in STORES {
            let op = Op::Store {
                ty,
                bytes,
                mem: MemArg::default(),
            };
            t.insert(op.mnemonic(), (op, Template::Store(ty, bytes)));
        }
        t
    })
}

/// Recognizable WebAssembly instructions that fall outside the subset.
fn is_foreign_instruction(m: &str) -> bool {
    const PREFIXES: [&str; 9] = [
        "i32.", "i64.", "f32.", "f64.", "v128.", "memory.", "table.", "ref.", "i8x16.",
    ];
    const WORDS: [&str; 10] = [
        "return_call",
        "return_call_indirect",
        "try",
        "catch",
        "throw",
        "rethrow",
        "delegate",
        "select_t",
        "data.drop",
        "elem.drop",
    ];
    PREFIXES.iter().any(|p| m.starts_with(p)) || WORDS.contains(&m)
}

fn val_type(node: &Sexp) -> Result<ValType> {
    match node.atom() {
        Some("i32") => Ok(ValType::I32),
        Some("i64") => Ok(ValType::I64),
        Some("f32") => Ok(ValType::F32),
        Some("f64") => Ok(ValType::F64),
        Some(other @ ("v128" | "funcref" | "externref")) => unsupported(node.pos(), format!("value type {other}")),
        _ => syntax(node.pos(), "expected a value type"),
    }
}

fn name_of(node: Option<&Sexp>) -> Option<String> {
    node.and_then(Sexp::atom)
        .filter(|a| a.starts_with('$') && a.len() > 1)
        .map(str::to_owned)
}

fn string_of(node: Option<&Sexp>, at: Pos, what: &str) -> Result<String> {
    match node {
        Some(Sexp::Str { bytes, pos }) => {
            String::from_utf8(bytes.clone()).or_else(|_| syntax(*pos, format!("{what} must be UTF-8")))
        }
        Some(n) => syntax(n.pos(), format!("expected {what} string")),
        None => syntax(at, format!("expected {what} string")),
    }
}

/// Named index space.
#[derive(Default)]
struct Space {
    names: HashMap<String, u32>,
    len: u32,
}

impl Space {
    fn add(&mut self, name: Option<String>, at: Pos) -> Result<u32> {
        let idx = self.len;
        if let Some(n) = name {
            if self.names.insert(n.clone(), idx).is_some() {
                return syntax(at, format!("duplicate identifier {n}"));
            }
        }
        self.len += 1;
        Ok(idx)
    }

    fn resolve(&self, node: Option<&Sexp>, at: Pos, what: &str) -> Result<u32> {
        let Some(node) = node else {
            return syntax(at, format!("expected {what} index"));
        };
        let Some(text) = node.atom() else {
            return syntax(node.pos(), format!("expected {what} index"));
        };
        let idx = if text.starts_with('$') {
            self.names.get(text).copied()
        } else {
            parse_u32(node)
        };
        match idx {
            Some(i) if i < self.len => Ok(i),
            Some(i) if !text.starts_with('$') => syntax(node.pos(), format!("undefined {what} {i}")),
            _ => syntax(node.pos(), format!("undefined {what} {text}")),
        }
    }
}

struct FuncDecl<'s> {
    node: &'s Sexp,
    /// Index of the first body item within the list.
    body_start: usize,
    type_index: u32,
    param_names: Vec<Option<String>>,
    locals: Vec<(Option<String>, ValType)>,
}

#[derive(Default)]
struct Assembler {
    module: Module,
    type_space: Space,
    func_space: Space,
    global_space: Space,
    table_space: Space,
    memory_space: Space,
}

impl Assembler {
    fn func_type(&mut self, t: FuncType) -> u32 {
        if let Some(i) = self.module.types.iter().position(|x| *x == t) {
            return i as u32;
        }
        self.module.types.push(t);
        self.type_space.len += 1;
        self.module.types.len() as u32 - 1
    }

    /// Parses `(param ...)`/`(result ...)` lists starting at `items[i]`.
    /// Returns the signature, parameter names and the next unconsumed index.
    fn signature(items: &[Sexp], mut i: usize) -> Result<(FuncType, Vec<Option<String>>, usize)> {
        let mut ft = FuncType::default();
        let mut names = Vec::new();
        while let Some(node) = items.get(i) {
            match node.head() {
                Some("param") => {
                    if !ft.results.is_empty() {
                        return syntax(node.pos(), "param after result");
                    }
                    let inner = &node.items()[1..];
                    if let Some(n) = name_of(inner.first()) {
                        if inner.len() != 2 {
                            return syntax(node.pos(), "named param takes exactly one type");
                        }
                        ft.params.push(val_type(&inner[1])?);
                        names.push(Some(n));
                    } else {
                        for t in inner {
                            ft.params.push(val_type(t)?);
                            names.push(None);
                        }
                    }
                }
                Some("result") => {
                    for t in &node.items()[1..] {
                        ft.results.push(val_type(t)?);
                    }
                    if ft.results.len() > 1 {
                        return unsupported(node.pos(), "multiple results");
                    }
                }
                _ => break,
            }
            i += 1;
        }
        Ok((ft, names, i))
    }

    /// Optional `(type X)` followed by inline signature lists.
    fn type_use(&mut self, items: &[Sexp], mut i: usize) -> Result<(u32, Vec<Option<String>>, usize)> {
        let mut explicit = None;
        if let Some(node) = items.get(i).filter(|n| n.head() == Some("type")) {
            let idx = self.type_space.resolve(node.items().get(1), node.pos(), "type")?;
            explicit = Some((idx, node.pos()));
            i += 1;
        }
        let (ft, names, next) = Self::signature(items, i)?;
        match explicit {
            Some((idx, at)) => {
                let declared = &self.module.types[idx as usize];
                let inline = next > i;
                if inline && *declared != ft {
                    return syntax(at, "inline signature does not match the referenced type");
                }
                let names = if inline {
                    names
                } else {
                    vec![None; declared.params.len()]
                };
                Ok((idx, names, next))
            }
            None => Ok((self.func_type(ft), names, next)),
        }
    }

    fn assemble(mut self, fields: &[Sexp]) -> Result<(Module, Vec<Vec<Pos>>, Vec<Pos>)> {
        // Explicit types first so inline signatures reuse them.
        for f in fields {
            if f.head() == Some("type") {
                let items = f.items();
                let name = name_of(items.get(1));
                let def = items.get(if name.is_some() { 2 } else { 1 });
                let Some(def) = def.filter(|d| d.head() == Some("func")) else {
                    return syntax(f.pos(), "expected (type $name? (func ...))");
                };
                let (ft, _, used) = Self::signature(def.items(), 1)?;
                if used != def.items().len() {
                    return syntax(def.items()[used].pos(), "unexpected item in function type");
                }
                self.type_space.add(name, f.pos())?;
                self.module.types.push(ft);
            }
        }

        let mut decls: Vec<FuncDecl> = Vec::new();
        let mut pending_exports: Vec<(String, ExportKind, u32, Pos)> = Vec::new();
        let mut pending_elems: Vec<&Sexp> = Vec::new();
        let mut pending_globals: Vec<&Sexp> = Vec::new();
        let mut start: Option<&Sexp> = None;

        for f in fields {
            let at = f.pos();
            let Some(head) = f.head() else {
                return syntax(at, "expected a module field");
            };
            let items = f.items();
            match head {
                "type" => {}
                "import" => {
                    if !decls.is_empty() {
                        return syntax(at, "imports must precede function definitions");
                    }
                    let module = string_of(items.get(1), at, "module name")?;
                    let name = string_of(items.get(2), at, "import name")?;
                    let Some(desc) = items.get(3).filter(|d| d.head() == Some("func")) else {
                        return unsupported(at, "non-function import");
                    };
                    if items.len() != 4 {
                        return syntax(at, "unexpected item in import");
                    }
                    let di = desc.items();
                    let fname = name_of(di.get(1));
                    let first = if fname.is_some() { 2 } else { 1 };
                    let (type_index, _, used) = self.type_use(di, first)?;
                    if used != di.len() {
                        return syntax(di[used].pos(), "unexpected item in import");
                    }
                    self.import(module, name, type_index, fname, at)?;
                }
                "func" => {
                    let fname = name_of(items.get(1));
                    let mut i = if fname.is_some() { 2 } else { 1 };
                    let mut exports = Vec::new();
                    let mut import = None;
                    loop {
                        match items.get(i).and_then(Sexp::head) {
                            Some("export") => {
                                let n = &items[i];
                                exports.push((string_of(n.items().get(1), n.pos(), "export name")?, n.pos()));
                                i += 1;
                            }
                            Some("import") => {
                                let n = &items[i];
                                let m = string_of(n.items().get(1), n.pos(), "module name")?;
                                let nm = string_of(n.items().get(2), n.pos(), "import name")?;
                                import = Some((m, nm));
                                i += 1;
                            }
                            _ => break,
                        }
                    }
                    let (type_index, param_names, mut i) = self.type_use(items, i)?;
                    let index = if let Some((m, nm)) = import {
                        if !decls.is_empty() {
                            return syntax(at, "imports must precede function definitions");
                        }
                        if i != items.len() {
                            return syntax(items[i].pos(), "imported functions have no body");
                        }
                        self.import(m, nm, type_index, fname, at)?
                    } else {
                        let mut locals = Vec::new();
                        while let Some(node) = items.get(i).filter(|n| n.head() == Some("local")) {
                            let inner = &node.items()[1..];
                            if let Some(n) = name_of(inner.first()) {
                                if inner.len() != 2 {
                                    return syntax(node.pos(), "named local takes exactly one type");
                                }
                                locals.push((Some(n), val_type(&inner[1])?));
                            } else {
                                for t in inner {
                                    locals.push((None, val_type(t)?));
                                }
                            }
                            i += 1;
                        }
                        let index = self.func_space.add(fname, at)?;
                        decls.push(FuncDecl {
                            node: f,
                            body_start: i,
                            type_index,
                            param_names,
                            locals,
                        });
                        index
                    };
                    for (name, pos) in exports {
                        pending_exports.push((name, ExportKind::Func, index, pos));
                    }
                }
                "table" => self.table(f, &mut pending_exports, &mut pending_elems)?,
                "memory" => self.memory(f, &mut pending_exports)?,
                "global" => {
                    let gname = name_of(items.get(1));
                    let idx = self.global_space.add(gname, at)?;
                    let mut i = if name_of(items.get(1)).is_some() { 2 } else { 1 };
                    while let Some(n) = items.get(i).filter(|n| n.head() == Some("export")) {
                        pending_exports.push((
                            string_of(n.items().get(1), n.pos(), "export name")?,
                            ExportKind::Global,
                            idx,
                            n.pos(),
                        ));
                        i += 1;
                    }
                    pending_globals.push(f);
                }
                "export" => {
                    let name = string_of(items.get(1), at, "export name")?;
                    let Some(desc) = items.get(2) else {
                        return syntax(at, "expected export descriptor");
                    };
                    let kind = match desc.head() {
                        Some("func") => ExportKind::Func,
                        Some("table") => ExportKind::Table,
                        Some("memory") => ExportKind::Memory,
                        Some("global") => ExportKind::Global,
                        _ => return syntax(desc.pos(), "expected (func|table|memory|global X)"),
                    };
                    // Resolved after all definitions are known.
                    pending_exports.push((name, kind, u32::MAX, desc.pos()));
                }
                "start" => start = Some(f),
                "elem" => pending_elems.push(f),
                "data" => return unsupported(at, "data segment"),
                other => return syntax(at, format!("unknown module field `{other}`")),
            }
        }

        for g in pending_globals {
            self.global(g)?;
        }

        // Explicit export descriptors are resolved in source order.
        let explicit: Vec<&Sexp> = fields.iter().filter(|f| f.head() == Some("export")).collect();
        let mut explicit = explicit.into_iter();
        for e in pending_exports.iter_mut().filter(|e| e.2 == u32::MAX) {
            let f = explicit.next().expect("one pending entry per export field");
            let target = f.items()[2].items().get(1);
            e.2 = match e.1 {
                ExportKind::Func => self.func_space.resolve(target, e.3, "function")?,
                ExportKind::Table => self.table_space.resolve(target, e.3, "table")?,
                ExportKind::Memory => self.memory_space.resolve(target, e.3, "memory")?,
                ExportKind::Global => self.global_space.resolve(target, e.3, "global")?,
            };
        }
        let mut seen = HashMap::new();
        for (name, kind, index, pos) in pending_exports {
            if seen.insert(name.clone(), ()).is_some() {
                return syntax(pos, format!("duplicate export name {name:?}"));
            }
            self.module.exports.push(Export { name, kind, index });
        }

        if let Some(s) = start {
            self.module.start = Some(self.func_space.resolve(s.items().get(1), s.pos(), "function")?);
        }
        for e in pending_elems {
            self.elem(e)?;
        }

        let mut positions = Vec::with_capacity(decls.len());
        let mut closes = Vec::with_capacity(decls.len());
        for d in &decls {
            let (func, pos) = self.function(d)?;
            self.module.functions.push(func);
            positions.push(pos);
            if let Sexp::List { close, .. } = d.node {
                closes.push(*close);
            }
        }
        Ok((self.module, positions, closes))
    }

    fn import(&mut self, module: String, name: String, type_index: u32, fname: Option<String>, at: Pos) -> Result<u32> {
        if module != ASSERT_MODULE || name != ASSERT_NAME {
            return unsupported(at, format!("import {module}.{name}; only {ASSERT_MODULE}.{ASSERT_NAME} is available"));
        }
        let idx = self.func_space.add(fname, at)?;
        self.module.imports.push(Import {
            module,
            name,
            type_index,
        });
        Ok(idx)
    }

    fn limits(items: &[Sexp], at: Pos) -> Result<(u32, Option<u32>, usize)> {
        let Some(min) = items.first().and_then(parse_u32) else {
            return syntax(items.first().map(Sexp::pos).unwrap_or(at), "expected a size");
        };
        match items.get(1).and_then(parse_u32) {
            Some(max) => Ok((min, Some(max), 2)),
            None => Ok((min, None, 1)),
        }
    }

    fn table<'s>(
        &mut self,
        f: &'s Sexp,
        exports: &mut Vec<(String, ExportKind, u32, Pos)>,
        elems: &mut Vec<&'s Sexp>,
    ) -> Result<()> {
        let at = f.pos();
        if self.module.table.is_some() {
            return unsupported(at, "multiple tables");
        }
        let items = f.items();
        let name = name_of(items.get(1));
        let mut i = if name.is_some() { 2 } else { 1 };
        self.table_space.add(name, at)?;
        while let Some(n) = items.get(i).filter(|n| n.head() == Some("export")) {
            exports.push((string_of(n.items().get(1), n.pos(), "export name")?, ExportKind::Table, 0, n.pos()));
            i += 1;
        }
        if items.get(i).and_then(Sexp::atom) == Some("funcref") {
            // Inline form: (table funcref (elem $f ...))
            let Some(el) = items.get(i + 1).filter(|e| e.head() == Some("elem")) else {
                return syntax(at, "expected (elem ...) after funcref");
            };
            let n = el.items().len() as u32 - 1;
            self.module.table = Some(TableSpec { min: n, max: Some(n) });
            elems.push(el);
            return Ok(());
        }
        let (min, max, used) = Self::limits(&items[i..], at)?;
        match items.get(i + used).and_then(Sexp::atom) {
            Some("funcref") | Some("anyfunc") => {}
            Some("externref") => return unsupported(at, "externref table"),
            _ => return syntax(at, "expected funcref"),
        }
        if i + used + 1 != items.len() {
            return syntax(items[i + used + 1].pos(), "unexpected item in table");
        }
        self.module.table = Some(TableSpec { min, max });
        Ok(())
    }

    fn memory(&mut self, f: &Sexp, exports: &mut Vec<(String, ExportKind, u32, Pos)>) -> Result<()> {
        let at = f.pos();
        if !self.module.memories.is_empty() {
            return unsupported(at, "multiple memories");
        }
        let items = f.items();
        let name = name_of(items.get(1));
        let mut i = if name.is_some() { 2 } else { 1 };
        self.memory_space.add(name, at)?;
        while let Some(n) = items.get(i).filter(|n| n.head() == Some("export")) {
            exports.push((string_of(n.items().get(1), n.pos(), "export name")?, ExportKind::Memory, 0, n.pos()));
            i += 1;
        }
        if items.get(i).and_then(Sexp::head) == Some("data") {
            return unsupported(items[i].pos(), "data segment");
        }
        let (min_pages, max_pages, used) = Self::limits(&items[i..], at)?;
        if i + used != items.len() {
            return syntax(items[i + used].pos(), "unexpected item in memory");
        }
        self.module.memories.push(MemorySpec { min_pages, max_pages });
        Ok(())
    }

    fn const_expr(node: Option<&Sexp>, ty: ValType, at: Pos) -> Result<u64> {
        let Some(node) = node else {
            return syntax(at, "expected a constant expression");
        };
        let want = match ty {
            ValType::I32 => "i32.const",
            ValType::I64 => "i64.const",
            _ => return unsupported(at, format!("{ty} constant")),
        };
        if node.head() != Some(want) || node.items().len() != 2 {
            if node.head().is_some_and(|h| h.starts_with('f')) {
                return unsupported(node.pos(), "float constant");
            }
            return syntax(node.pos(), format!("expected ({want} N)"));
        }
        let lit = &node.items()[1];
        let bits = ty.bits() as u32;
        lit.atom()
            .and_then(|t| parse_int(t, bits))
            .map_or_else(|| syntax(lit.pos(), "integer literal out of range"), Ok)
    }

    fn global(&mut self, f: &Sexp) -> Result<()> {
        let items = f.items();
        let mut i = if name_of(items.get(1)).is_some() { 2 } else { 1 };
        while items.get(i).and_then(Sexp::head) == Some("export") {
            i += 1;
        }
        let Some(tnode) = items.get(i) else {
            return syntax(f.pos(), "expected global type");
        };
        let (ty, mutable) = if tnode.head() == Some("mut") {
            let Some(inner) = tnode.items().get(1) else {
                return syntax(tnode.pos(), "expected (mut type)");
            };
            (val_type(inner)?, true)
        } else {
            (val_type(tnode)?, false)
        };
        if !ty.is_int() {
            return unsupported(tnode.pos(), format!("{ty} global"));
        }
        let init = Self::const_expr(items.get(i + 1), ty, f.pos())?;
        if items.len() != i + 2 {
            return syntax(f.pos(), "unexpected item in global");
        }
        self.module.globals.push(GlobalSpec { ty, mutable, init });
        Ok(())
    }

    fn elem(&mut self, f: &Sexp) -> Result<()> {
        let items = f.items();
        let (offset, mut i) = if items.get(1).and_then(Sexp::head).is_some() {
            let mut node = items.get(1);
            if node.and_then(Sexp::head) == Some("offset") {
                node = node.unwrap().items().get(1);
            }
            (Self::const_expr(node, ValType::I32, f.pos())? as u32, 2)
        } else {
            (0, 1)
        };
        if items.get(i).and_then(Sexp::atom) == Some("func") {
            i += 1;
        }
        let functions = items[i..]
            .iter()
            .map(|n| self.func_space.resolve(Some(n), n.pos(), "function"))
            .collect::<Result<Vec<_>>>()?;
        self.module.elements.push(ElementSegment { offset, functions });
        Ok(())
    }

    fn function(&self, d: &FuncDecl) -> Result<(Function, Vec<Pos>)> {
        let ft = &self.module.types[d.type_index as usize];
        let mut locals = Space::default();
        for (k, _) in ft.params.iter().enumerate() {
            let name = d.param_names.get(k).cloned().flatten();
            locals.add(name, d.node.pos())?;
        }
        for (name, _) in &d.locals {
            locals.add(name.clone(), d.node.pos())?;
        }
        let items = d.node.items();
        let close = match d.node {
            Sexp::List { close, .. } => *close,
            _ => unreachable!(),
        };
        let mut body = Vec::new();
        let mut positions = Vec::new();
        let mut labels: Vec<Option<String>> = Vec::new();
        let mut i = d.body_start;
        while i < items.len() {
            let node = &items[i];
            let at = node.pos();
            let mnemonic = match node {
                Sexp::Atom { text, .. } => text.as_str(),
                Sexp::List { .. } => {
                    return unsupported(at, "folded expression; write instructions in flat form")
                }
                Sexp::Str { .. } => return syntax(at, "unexpected string in function body"),
            };
            i += 1;
            let label_depth = |node: Option<&Sexp>, labels: &[Option<String>]| -> Result<u32> {
                let Some(n) = node.filter(|n| n.atom().is_some()) else {
                    return syntax(at, "expected a label");
                };
                let text = n.atom().unwrap();
                if text.starts_with('$') {
                    match labels.iter().rev().position(|l| l.as_deref() == Some(text)) {
                        Some(d) => Ok(d as u32),
                        None => syntax(n.pos(), format!("undefined label {text}")),
                    }
                } else {
                    match parse_u32(n) {
                        Some(d) if d as usize <= labels.len() => Ok(d),
                        _ => syntax(n.pos(), format!("branch depth {text} out of range")),
                    }
                }
            };
            let op = match mnemonic {
                "block" | "loop" | "if" => {
                    let label = name_of(items.get(i));
                    if label.is_some() {
                        i += 1;
                    }
                    let mut bt = BlockType::Empty;
                    while let Some(n) = items.get(i).filter(|n| n.head().is_some()) {
                        match n.head() {
                            Some("result") => {
                                let r = &n.items()[1..];
                                if r.len() != 1 || bt != BlockType::Empty {
                                    return unsupported(n.pos(), "multi-value block");
                                }
                                bt = BlockType::Value(val_type(&r[0])?);
                            }
                            Some("param") | Some("type") => {
                                return unsupported(n.pos(), "block parameters")
                            }
                            _ => break,
                        }
                        i += 1;
                    }
                    labels.push(label);
                    match mnemonic {
                        "block" => Op::Block(bt),
                        "loop" => Op::Loop(bt),
                        _ => Op::If(bt),
                    }
                }
                "else" | "end" => {
                    if labels.is_empty() {
                        return syntax(at, format!("`{mnemonic}` without an open block"));
                    }
                    if let Some(l) = name_of(items.get(i)) {
                        if labels.last().unwrap().as_deref() != Some(l.as_str()) {
                            return syntax(items[i].pos(), format!("mismatched label {l}"));
                        }
                        i += 1;
                    }
                    if mnemonic == "end" {
                        labels.pop();
                        Op::End
                    } else {
                        Op::Else
                    }
                }
                "br" | "br_if" => {
                    let depth = label_depth(items.get(i), &labels)?;
                    i += 1;
                    if mnemonic == "br" {
                        Op::Br(depth)
                    } else {
                        Op::BrIf(depth)
                    }
                }
                "br_table" => {
                    let mut depths = Vec::new();
                    while let Some(n) = items.get(i).filter(|n| n.atom().is_some_and(|t| t.starts_with('$') || parse_u32(n).is_some())) {
                        depths.push(label_depth(Some(n), &labels)?);
                        i += 1;
                    }
                    let Some(default) = depths.pop() else {
                        return syntax(at, "br_table needs at least a default label");
                    };
                    Op::BrTable {
                        targets: depths,
                        default,
                    }
                }
                "call" => {
                    let f = self.func_space.resolve(items.get(i), at, "function")?;
                    i += 1;
                    Op::Call(f)
                }
                "call_indirect" => {
                    let mut table = 0;
                    if let Some(n) = items.get(i).filter(|n| n.atom().is_some()) {
                        table = self.table_space.resolve(Some(n), n.pos(), "table")?;
                        i += 1;
                    }
                    let Some(tu) = items.get(i).filter(|n| n.head() == Some("type")) else {
                        return unsupported(at, "call_indirect without (type X)");
                    };
                    let type_index = self.type_space.resolve(tu.items().get(1), tu.pos(), "type")?;
                    i += 1;
                    if items.get(i).and_then(Sexp::head).is_some_and(|h| h == "param" || h == "result") {
                        return unsupported(items[i].pos(), "inline call_indirect signature");
                    }
                    Op::CallIndirect { type_index, table }
                }
                "local.get" | "local.set" | "local.tee" => {
                    let idx = locals.resolve(items.get(i), at, "local")?;
                    i += 1;
                    match mnemonic {
                        "local.get" => Op::LocalGet(idx),
                        "local.set" => Op::LocalSet(idx),
                        _ => Op::LocalTee(idx),
                    }
                }
                "global.get" | "global.set" => {
                    let idx = self.global_space.resolve(items.get(i), at, "global")?;
                    i += 1;
                    if mnemonic == "global.get" {
                        Op::GlobalGet(idx)
                    } else {
                        Op::GlobalSet(idx)
                    }
                }
                "i32.const" | "i64.const" => {
                    let bits = if mnemonic == "i32.const" { 32 } else { 64 };
                    let Some(lit) = items.get(i) else {
                        return syntax(at, "expected an integer literal");
                    };
                    let Some(v) = lit.atom().and_then(|t| parse_int(t, bits)) else {
                        return syntax(lit.pos(), "integer literal out of range");
                    };
                    i += 1;
                    if bits == 32 {
                        Op::I32Const(v as u32 as i32)
                    } else {
                        Op::I64Const(v as i64)
                    }
                }
                m => match templates().get(m) {
                    Some((op, Template::Plain)) => op.clone(),
                    Some((_, t @ (Template::Load(..) | Template::Store(..)))) => {
                        let natural = match t {
                            Template::Load(_, b, _) | Template::Store(_, b) => *b,
                            Template::Plain => unreachable!(),
                        };
                        let mut mem = MemArg {
                            align: natural.trailing_zeros(),
                            offset: 0,
                        };
                        while let Some(n) = items.get(i) {
                            let Some(text) = n.atom() else { break };
                            if let Some(v) = text.strip_prefix("offset=") {
                                mem.offset = parse_int(v, 32)
                                    .filter(|_| !v.starts_with('-'))
                                    .map_or_else(|| syntax(n.pos(), "bad offset"), |v| Ok(v as u32))?;
                            } else if let Some(v) = text.strip_prefix("align=") {
                                let a = parse_int(v, 32).filter(|a| a.is_power_of_two() && !v.starts_with('-'));
                                let Some(a) = a else {
                                    return syntax(n.pos(), "alignment must be a power of two");
                                };
                                mem.align = a.trailing_zeros();
                            } else {
                                break;
                            }
                            i += 1;
                        }
                        match *t {
                            Template::Load(ty, bytes, signed) => Op::Load { ty, bytes, signed, mem },
                            Template::Store(ty, bytes) => Op::Store { ty, bytes, mem },
                            Template::Plain => unreachable!(),
                        }
                    }
                    None if is_foreign_instruction(m) => {
                        return unsupported(at, format!("instruction {m}"))
                    }
                    None => return syntax(at, format!("unknown instruction `{m}`")),
                },
            };
            body.push(Instruction::new(op, 0));
            positions.push(at);
        }
        if !labels.is_empty() {
            return syntax(close, "function body ends inside an open block");
        }
        body.push(Instruction::new(Op::End, 0));
        positions.push(close);
        let func = Function {
            type_index: d.type_index,
            locals: d.locals.iter().map(|(_, t)| *t).collect(),
            body,
            cfg: Default::default(),
            control: Default::default(),
        };
        Ok((func, positions))
    }
}

/// Assembles source text into a canonical binary plus its source map.
/// Identical input yields identical bytes.
pub fn assemble_text(source: &str) -> std::result::Result<(Vec<u8>, SourceMap), AssembleError> {
    let top = parse_sexps(source)?;
    let fields: Vec<Sexp> = match top.as_slice() {
        [] => Vec::new(),
        [m] if m.head() == Some("module") => {
            let items = m.items();
            let skip = if name_of(items.get(1)).is_some() { 2 } else { 1 };
            items[skip..].to_vec()
        }
        _ => top,
    };
    let (mut module, positions, _) = Assembler::default().assemble(&fields)?;
    let (bytes, offsets) = encode_with_offsets(&module);
    assign_offsets(&mut module, &offsets);

    let mut map = SourceMap::new();
    for (offs, locs) in offsets.iter().zip(&positions) {
        for (o, l) in offs.iter().zip(locs) {
            map.insert(*o, *l).map_err(|e| AssembleError::SyntaxError {
                line: l.line,
                col: l.col,
                message: e.to_string(),
            })?;
        }
    }

    match parse_module(&bytes) {
        Ok(_) => Ok((bytes, map)),
        Err(ParseError::ValidationFailure { invariant, offset }) => {
            let at = offset
                .and_then(|o| map.nearest(o))
                .unwrap_or(SourceLocation { line: 1, col: 1 });
            syntax(at, invariant)
        }
        Err(other) => syntax(SourceLocation { line: 1, col: 1 }, other.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn err_line(src: &str) -> (u32, String) {
        match assemble_text(src).unwrap_err() {
            AssembleError::SyntaxError { line, message, .. } => (line, message),
            e => panic!("expected syntax error, got {e}"),
        }
    }

    #[test]
    fn empty_text_is_header_only() {
        let (bytes, map) = assemble_text("").unwrap();
        assert_eq!(bytes, [0x00, 0x61, 0x73, 0x6D, 0x01, 0x00, 0x00, 0x00]);
        assert!(map.is_empty());
        let (bytes, _) = assemble_text("(module)").unwrap();
        assert_eq!(bytes.len(), 8);
    }

    #[test]
    fn constant_seven() {
        let src = "(module\n  (func (export \"f\") (result i32)\n    i32.const 7))\n";
        let (bytes, map) = assemble_text(src).unwrap();
        let m = parse_module(&bytes).unwrap();
        assert_eq!(m.functions[0].body.len(), 2);
        assert_eq!(map.len(), 2);
        let first = m.functions[0].body[0].offset;
        assert_eq!(map.location(first), Some(SourceLocation { line: 3, col: 5 }));
        let end = m.functions[0].body[1].offset;
        assert_eq!(map.location(end), Some(SourceLocation { line: 3, col: 16 }));
    }

    #[test]
    fn deterministic() {
        let src = "(func $f (param $x i32) (result i32) local.get $x i32.const 1 i32.add)";
        assert_eq!(assemble_text(src).unwrap(), assemble_text(src).unwrap());
    }

    #[test]
    fn undefined_local_reports_line() {
        let src = "(module\n (func (result i32)\n   local.get $nope))";
        let (line, msg) = err_line(src);
        assert_eq!(line, 3);
        assert!(msg.contains("$nope"));
    }

    #[test]
    fn type_errors_map_to_source() {
        let src = "(module\n (func (result i32)\n   i64.const 1))";
        let (line, msg) = err_line(src);
        assert!(msg.contains("type mismatch"), "{msg}");
        assert_eq!(line, 3);
    }

    #[test]
    fn unsupported_constructs() {
        for src in [
            "(func (result i32) (i32.add (i32.const 1) (i32.const 2)))",
            "(memory 1) (data (i32.const 0) \"hi\")",
            "(func f32.const 1 drop)",
            "(func i32.const 1 i32.clz drop)",
        ] {
            assert!(
                matches!(assemble_text(src), Err(AssembleError::UnsupportedConstruct { .. })),
                "{src}"
            );
        }
    }

    #[test]
    fn labels_memory_and_tables() {
        let src = r#"
(module
  (type $un (func (param i32) (result i32)))
  (import "env" "tcpa_assert" (func $assert (param i32)))
  (memory 1)
  (global $g (mut i64) (i64.const -1))
  (table 2 funcref)
  (elem (i32.const 0) $inc $inc)
  (func $inc (type $un) (param $x i32) (result i32)
    local.get $x i32.const 1 i32.add)
  (func (export "main") (param $a i32) (result i32) (local $t i32)
    block $out
      loop $top
        local.get $a
        i32.eqz
        br_if $out
        local.get $a
        i32.const 1
        i32.sub
        local.set $a
        br $top
      end
    end
    i32.const 8
    local.get $a
    i32.store offset=4 align=4
    i32.const 8
    i32.load8_u offset=4
    i32.const 0
    call_indirect (type $un)
    local.tee $t
    i32.const 0
    i32.ge_u
    call $assert
    local.get $t))
"#;
        let (bytes, map) = assemble_text(src).unwrap();
        let m = parse_module(&bytes).unwrap();
        assert_eq!(m.functions.len(), 2);
        assert_eq!(m.exported_function("main"), Some(2));
        assert_eq!(m.globals[0].init, u64::MAX);
        let total: usize = m.functions.iter().map(|f| f.body.len()).sum();
        assert_eq!(map.len(), total);
        let body = &m.functions[1].body;
        assert_eq!(body[4].op, Op::BrIf(1));
        assert_eq!(body[9].op, Op::Br(0));
    }

    #[test]
    fn int_literals() {
        assert_eq!(parse_int("-1", 32), Some(0xFFFF_FFFF));
        assert_eq!(parse_int("0xFFFF_FFFF", 32), Some(0xFFFF_FFFF));
        assert_eq!(parse_int("4294967296", 32), None);
        assert_eq!(parse_int("-2147483648", 32), Some(0x8000_0000));
        assert_eq!(parse_int("-2147483649", 32), None);
        assert_eq!(parse_int("1__0", 32), None);
    }
}
