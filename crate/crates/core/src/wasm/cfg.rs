//! Basic-block control-flow graphs over structured WASM bodies.

use thiserror::Error;

use super::ops::{Instruction, Op};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CfgError {
    #[error("malformed nesting at instruction {index}: {detail}")]
    MalformedNesting { index: usize, detail: &'static str },
}

/// Matching structure for `block`/`loop`/`if`/`else`/`end`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ControlTable {
    end: Vec<Option<u32>>,
    else_: Vec<Option<u32>>,
}

impl ControlTable {
    /// Matching `end` for a `block`, `loop`, `if` or `else` at `index`.
    pub fn end_of(&self, index: usize) -> Option<usize> {
        self.end.get(index).copied().flatten().map(|e| e as usize)
    }

    /// Matching `else` for an `if` at `index`.
    pub fn else_of(&self, index: usize) -> Option<usize> {
        self.else_.get(index).copied().flatten().map(|e| e as usize)
    }
}

/// Matches structured control instructions. The final `end` closes the
/// function body and must be the last instruction.
pub fn control_table(body: &[Instruction]) -> Result<ControlTable, CfgError> {
    let mut table = ControlTable {
        end: vec![None; body.len()],
        else_: vec![None; body.len()],
    };
    let mut open: Vec<(usize, Option<usize>)> = Vec::new();
    let mut closed = false;
    for (i, ins) in body.iter().enumerate() {
        match ins.op {
            Op::Block(_) | Op::Loop(_) | Op::If(_) => open.push((i, None)),
            Op::Else => {
                let top = open.last_mut().ok_or(CfgError::MalformedNesting {
                    index: i,
                    detail: "else outside if",
                })?;
                if !matches!(body[top.0].op, Op::If(_)) || top.1.is_some() {
                    return Err(CfgError::MalformedNesting {
                        index: i,
                        detail: "else without matching if",
                    });
                }
                top.1 = Some(i);
                table.else_[top.0] = Some(i as u32);
            }
            Op::End => match open.pop() {
                Some((start, else_at)) => {
                    table.end[start] = Some(i as u32);
                    if let Some(e) = else_at {
                        table.end[e] = Some(i as u32);
                    }
                }
                None if i + 1 == body.len() => closed = true,
                None => {
                    return Err(CfgError::MalformedNesting {
                        index: i,
                        detail: "end closes the function before the last instruction",
                    })
                }
            },
            _ => {}
        }
    }
    if !closed {
        return Err(CfgError::MalformedNesting {
            index: body.len(),
            detail: "unclosed block",
        });
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeKind {
    Fallthrough,
    BranchTaken,
    BranchNotTaken,
    /// `br_table` case; the default target uses the case count as index.
    TableCase(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub kind: EdgeKind,
}

/// Half-open instruction range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BasicBlock {
    pub start: usize,
    pub end: usize,
}

impl BasicBlock {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Cfg {
    pub blocks: Vec<BasicBlock>,
    pub edges: Vec<Edge>,
}

impl Cfg {
    /// Block 0 is always the entry.
    pub fn entry(&self) -> usize {
        0
    }

    pub fn block_of(&self, instr: usize) -> Option<usize> {
        self.blocks
            .binary_search_by(|b| {
                if instr < b.start {
                    std::cmp::Ordering::Greater
                } else if instr >= b.end {
                    std::cmp::Ordering::Less
                } else {
                    std::cmp::Ordering::Equal
                }
            })
            .ok()
    }

    pub fn successors(&self, block: usize) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.from == block)
    }
}

/// Resolves the branch target instruction for each relative label depth.
/// Branches to a `loop` land on the loop instruction; branches to any other
/// construct (or to the function body) land on its `end`.
fn branch_targets(body: &[Instruction], table: &ControlTable) -> Vec<Vec<usize>> {
    let mut targets = vec![Vec::new(); body.len()];
    let mut open: Vec<usize> = Vec::new();
    let function_end = body.len() - 1;
    let resolve = |open: &[usize], depth: u32| -> usize {
        let depth = depth as usize;
        if depth >= open.len() {
            return function_end;
        }
        let start = open[open.len() - 1 - depth];
        match body[start].op {
            Op::Loop(_) => start,
            _ => table.end_of(start).unwrap_or(function_end),
        }
    };
    for (i, ins) in body.iter().enumerate() {
        match &ins.op {
            Op::Block(_) | Op::Loop(_) | Op::If(_) => open.push(i),
            Op::End => {
                open.pop();
            }
            Op::Br(d) | Op::BrIf(d) => targets[i].push(resolve(&open, *d)),
            Op::BrTable { targets: cases, default } => {
                for d in cases.iter().chain(std::iter::once(default)) {
                    let t = resolve(&open, *d);
                    targets[i].push(t);
                }
            }
            _ => {}
        }
    }
    targets
}

/// Builds the basic-block graph of a function body.
pub fn build_cfg(body: &[Instruction]) -> Result<Cfg, CfgError> {
    let table = control_table(body)?;
    let targets = branch_targets(body, &table);
    let n = body.len();
    let mut leader = vec![false; n];
    leader[0] = true;
    let mut mark = |i: usize| {
        if i < n {
            leader[i] = true;
        }
    };
    for (i, ins) in body.iter().enumerate() {
        match &ins.op {
            Op::If(_) => {
                mark(i + 1);
                match table.else_of(i) {
                    Some(e) => mark(e + 1),
                    None => mark(table.end_of(i).unwrap()),
                }
            }
            Op::Else => {
                mark(table.end_of(i).unwrap());
                mark(i + 1);
            }
            Op::Br(_) | Op::BrIf(_) | Op::BrTable { .. } => {
                for t in &targets[i] {
                    mark(*t);
                }
                mark(i + 1);
            }
            Op::Return | Op::Unreachable => mark(i + 1),
            _ => {}
        }
    }

    let starts: Vec<usize> = (0..n).filter(|i| leader[*i]).collect();
    let blocks: Vec<BasicBlock> = starts
        .iter()
        .enumerate()
        .map(|(k, s)| BasicBlock {
            start: *s,
            end: starts.get(k + 1).copied().unwrap_or(n),
        })
        .collect();
    let mut block_at = vec![0usize; n];
    for (b, blk) in blocks.iter().enumerate() {
        for slot in &mut block_at[blk.start..blk.end] {
            *slot = b;
        }
    }

    let mut edges = Vec::new();
    for (b, blk) in blocks.iter().enumerate() {
        let last = blk.end - 1;
        let mut edge = |to_instr: usize, kind: EdgeKind| {
            edges.push(Edge {
                from: b,
                to: block_at[to_instr],
                kind,
            })
        };
        match &body[last].op {
            Op::If(_) => {
                edge(last + 1, EdgeKind::BranchTaken);
                let not_taken = match table.else_of(last) {
                    Some(e) => e + 1,
                    None => table.end_of(last).unwrap(),
                };
                edge(not_taken, EdgeKind::BranchNotTaken);
            }
            Op::Else => edge(table.end_of(last).unwrap(), EdgeKind::BranchTaken),
            Op::Br(_) => edge(targets[last][0], EdgeKind::BranchTaken),
            Op::BrIf(_) => {
                edge(targets[last][0], EdgeKind::BranchTaken);
                edge(last + 1, EdgeKind::BranchNotTaken);
            }
            Op::BrTable { .. } => {
                for (case, t) in targets[last].iter().enumerate() {
                    edge(*t, EdgeKind::TableCase(case as u32));
                }
            }
            Op::Return | Op::Unreachable => {}
            _ if last + 1 == n => {}
            _ => edge(last + 1, EdgeKind::Fallthrough),
        }
    }
    Ok(Cfg { blocks, edges })
}
