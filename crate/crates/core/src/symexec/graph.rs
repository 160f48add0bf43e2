//! Variable dependency graph with data-flow and control-flow edges.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Vertex {
    Local { func: u32, index: u32 },
    Global(u32),
    /// One byte of linear memory.
    Memory(u32),
    /// Condition of the branch instruction at this byte offset.
    Branch(u32),
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Vertex::Local { func, index } => write!(f, "f{func}.local{index}"),
            Vertex::Global(i) => write!(f, "global{i}"),
            Vertex::Memory(a) => write!(f, "mem[{a}]"),
            Vertex::Branch(o) => write!(f, "branch@{o}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DepKind {
    /// `b` is computed from `a`.
    Data,
    /// `b` is assigned in a region guarded by condition `a`.
    Control,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("vertex {0} is not in the graph")]
    UnknownVertex(Vertex),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SemanticGraph {
    vertices: BTreeSet<Vertex>,
    edges: BTreeSet<(Vertex, Vertex, DepKind)>,
}

impl SemanticGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_vertex(&mut self, v: Vertex) {
        self.vertices.insert(v);
    }

    pub fn add_edge(&mut self, from: Vertex, to: Vertex, kind: DepKind) {
        self.vertices.insert(from);
        self.vertices.insert(to);
        self.edges.insert((from, to, kind));
    }

    pub fn vertices(&self) -> impl Iterator<Item = &Vertex> {
        self.vertices.iter()
    }

    pub fn edges(&self) -> impl Iterator<Item = &(Vertex, Vertex, DepKind)> {
        self.edges.iter()
    }

    pub fn contains(&self, v: &Vertex) -> bool {
        self.vertices.contains(v)
    }

    pub fn merge(&mut self, other: &SemanticGraph) {
        self.vertices.extend(other.vertices.iter().copied());
        self.edges.extend(other.edges.iter().copied());
    }

    /// Everything `v` transitively depends on. A vertex is labelled `Data`
    /// when reachable through data edges alone and `Control` when some path
    /// to it crosses a control edge; it may carry both labels.
    pub fn dependencies_of(&self, v: Vertex) -> Result<BTreeSet<(Vertex, DepKind)>, GraphError> {
        if !self.vertices.contains(&v) {
            return Err(GraphError::UnknownVertex(v));
        }
        let mut incoming: BTreeMap<Vertex, Vec<(Vertex, DepKind)>> = BTreeMap::new();
        for (a, b, k) in &self.edges {
            incoming.entry(*b).or_default().push((*a, *k));
        }
        let mut seen: BTreeSet<(Vertex, DepKind)> = BTreeSet::new();
        let mut queue: VecDeque<(Vertex, DepKind)> = VecDeque::new();
        queue.push_back((v, DepKind::Data));
        let mut out = BTreeSet::new();
        while let Some((at, label)) = queue.pop_front() {
            for (src, k) in incoming.get(&at).into_iter().flatten() {
                let next = if label == DepKind::Control || *k == DepKind::Control {
                    DepKind::Control
                } else {
                    DepKind::Data
                };
                if seen.insert((*src, next)) {
                    if *src != v {
                        out.insert((*src, next));
                    }
                    queue.push_back((*src, next));
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closure_labels_paths_through_control_edges() {
        let l0 = Vertex::Local { func: 0, index: 0 };
        let l1 = Vertex::Local { func: 0, index: 1 };
        let l2 = Vertex::Local { func: 0, index: 2 };
        let b = Vertex::Branch(10);
        let mut g = SemanticGraph::new();
        g.add_edge(l0, l1, DepKind::Data);
        g.add_edge(l0, b, DepKind::Data);
        g.add_edge(b, l2, DepKind::Control);
        g.add_edge(l1, l2, DepKind::Data);
        let deps = g.dependencies_of(l2).unwrap();
        assert!(deps.contains(&(l0, DepKind::Data)));
        assert!(deps.contains(&(l0, DepKind::Control)));
        assert!(deps.contains(&(b, DepKind::Control)));
        assert_eq!(g.dependencies_of(l1).unwrap(), BTreeSet::from([(l0, DepKind::Data)]));
        assert_eq!(
            g.dependencies_of(Vertex::Global(3)),
            Err(GraphError::UnknownVertex(Vertex::Global(3)))
        );
    }

    #[test]
    fn cycles_terminate() {
        let a = Vertex::Global(0);
        let b = Vertex::Global(1);
        let mut g = SemanticGraph::new();
        g.add_edge(a, b, DepKind::Data);
        g.add_edge(b, a, DepKind::Data);
        assert_eq!(g.dependencies_of(a).unwrap(), BTreeSet::from([(b, DepKind::Data)]));
    }
}
