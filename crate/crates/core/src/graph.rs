//! Explicit undirected graphs with deterministic shortest-path queries.
//!
//! Shortest paths are computed with a Dijkstra sweep from the goal followed
//! by a greedy forward walk from the start. At every vertex the walk takes the
//! smallest-id edge that stays on some optimal path, which yields the
//! lexicographically smallest edge-id sequence among all equal-length optima.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub type VertexId = usize;
pub type EdgeId = usize;

/// Relative tolerance used when comparing path lengths.
pub const LENGTH_TOLERANCE: f64 = 1e-9;

/// `a <= b` up to [`LENGTH_TOLERANCE`].
pub fn length_le(a: f64, b: f64) -> bool {
    a <= b + LENGTH_TOLERANCE * b.abs().max(1.0)
}

/// `a == b` up to [`LENGTH_TOLERANCE`].
pub fn length_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= LENGTH_TOLERANCE * a.abs().max(b.abs()).max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub id: EdgeId,
    pub u: VertexId,
    pub v: VertexId,
    pub length: f64,
}

impl Edge {
    /// The endpoint opposite `w`.
    pub fn other(&self, w: VertexId) -> VertexId {
        if w == self.u {
            self.v
        } else {
            self.u
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub vertices: Vec<VertexId>,
    pub edges: Vec<EdgeId>,
    pub length: f64,
}

impl Path {
    pub fn contains(&self, edge: EdgeId) -> bool {
        self.edges.contains(&edge)
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct ExplicitGraph {
    num_vertices: usize,
    edges: Vec<Edge>,
    start: VertexId,
    goal: VertexId,
    labels: Vec<String>,
    /// Incident `(neighbour, edge)` pairs, sorted by edge id.
    adjacency: Vec<Vec<(VertexId, EdgeId)>>,
}

#[derive(Clone, Copy, PartialEq)]
struct HeapEntry {
    dist: f64,
    vertex: VertexId,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl ExplicitGraph {
    /// Builds a graph from `(u, v, length)` triples; edge ids follow input order.
    pub fn new(
        num_vertices: usize,
        edges: &[(VertexId, VertexId, f64)],
        start: VertexId,
        goal: VertexId,
    ) -> Result<Self> {
        if num_vertices == 0 {
            return Err(Error::InvalidGraph("graph has no vertices".into()));
        }
        if start >= num_vertices || goal >= num_vertices {
            return Err(Error::InvalidGraph("start or goal out of range".into()));
        }
        if start == goal {
            return Err(Error::InvalidGraph("start equals goal".into()));
        }
        let mut adjacency = vec![Vec::new(); num_vertices];
        let mut out = Vec::with_capacity(edges.len());
        for (id, &(u, v, length)) in edges.iter().enumerate() {
            if u >= num_vertices || v >= num_vertices {
                return Err(Error::InvalidGraph(format!("edge {id} has an endpoint out of range")));
            }
            if u == v {
                return Err(Error::InvalidGraph(format!("edge {id} is a self-loop")));
            }
            if !(length.is_finite() && length > 0.0) {
                return Err(Error::InvalidGraph(format!(
                    "edge {id} has non-positive or non-finite length {length}"
                )));
            }
            adjacency[u].push((v, id));
            adjacency[v].push((u, id));
            out.push(Edge { id, u, v, length });
        }
        Ok(Self {
            num_vertices,
            edges: out,
            start,
            goal,
            labels: Vec::new(),
            adjacency,
        })
    }

    /// Attaches human-readable edge names, one per edge id.
    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.edges.len() {
            return Err(Error::InvalidGraph(format!(
                "{} labels for {} edges",
                labels.len(),
                self.edges.len()
            )));
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id]
    }

    pub fn start(&self) -> VertexId {
        self.start
    }

    pub fn goal(&self) -> VertexId {
        self.goal
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Looks up an edge by label.
    pub fn edge_by_label(&self, label: &str) -> Option<EdgeId> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn neighbours(&self, v: VertexId) -> &[(VertexId, EdgeId)] {
        &self.adjacency[v]
    }

    /// Sum of all edge lengths; bounds the length of any simple path.
    pub fn total_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).sum()
    }

    pub fn path_length(&self, edges: &[EdgeId]) -> f64 {
        edges.iter().map(|&e| self.edges[e].length).sum()
    }

    /// Distance from every vertex to the goal using only non-excluded edges.
    pub fn distances_to_goal<F>(&self, excluded: F) -> Vec<f64>
    where
        F: Fn(EdgeId) -> bool,
    {
        let mut dist = vec![f64::INFINITY; self.num_vertices];
        let mut heap = BinaryHeap::new();
        dist[self.goal] = 0.0;
        heap.push(HeapEntry {
            dist: 0.0,
            vertex: self.goal,
        });
        while let Some(HeapEntry { dist: d, vertex }) = heap.pop() {
            if d > dist[vertex] {
                continue;
            }
            for &(next, e) in &self.adjacency[vertex] {
                if excluded(e) {
                    continue;
                }
                let nd = d + self.edges[e].length;
                if nd < dist[next] {
                    dist[next] = nd;
                    heap.push(HeapEntry {
                        dist: nd,
                        vertex: next,
                    });
                }
            }
        }
        dist
    }

    /// Minimum-length start-goal path avoiding every edge for which
    /// `excluded` returns true. Ties resolve to the lexicographically
    /// smallest edge-id sequence. Returns `None` when the goal is unreachable.
    pub fn shortest_path<F>(&self, excluded: F) -> Option<Path>
    where
        F: Fn(EdgeId) -> bool,
    {
        let dist = self.distances_to_goal(&excluded);
        if !dist[self.start].is_finite() {
            return None;
        }
        let mut vertices = vec![self.start];
        let mut edges = Vec::new();
        let mut at = self.start;
        while at != self.goal {
            // Adjacency is sorted by edge id, so the first tight edge is the
            // lexicographically smallest continuation.
            let (next, e) = self.adjacency[at]
                .iter()
                .copied()
                .filter(|&(next, e)| !excluded(e) && dist[next] < dist[at])
                .find(|&(next, e)| length_eq(dist[at], self.edges[e].length + dist[next]))
                .expect("an optimal continuation exists at every reachable vertex");
            edges.push(e);
            vertices.push(next);
            at = next;
        }
        let length = self.path_length(&edges);
        Some(Path {
            vertices,
            edges,
            length,
        })
    }

    /// Convenience wrapper excluding an explicit list of edge ids.
    pub fn shortest_path_avoiding(&self, excluded: &[EdgeId]) -> Option<Path> {
        let mask = self.mask(excluded);
        self.shortest_path(|e| mask[e])
    }

    /// Boolean mask over edge ids with `ids` set.
    pub fn mask(&self, ids: &[EdgeId]) -> Vec<bool> {
        let mut mask = vec![false; self.edges.len()];
        for &e in ids {
            mask[e] = true;
        }
        mask
    }

    /// Every simple start-goal path of length at most `bound` that avoids
    /// the excluded edges, in depth-first order over ascending edge ids.
    ///
    /// Fails with [`Error::PathCapExceeded`] once more than `cap` paths are found.
    pub fn enumerate_paths_shorter_than<F>(
        &self,
        bound: f64,
        excluded: F,
        cap: usize,
    ) -> Result<Vec<Path>>
    where
        F: Fn(EdgeId) -> bool,
    {
        let dist = self.distances_to_goal(&excluded);
        let mut out = Vec::new();
        if !dist[self.start].is_finite() || !length_le(dist[self.start], bound) {
            return Ok(out);
        }
        let mut on_path = vec![false; self.num_vertices];
        let mut vertices = vec![self.start];
        let mut edges = Vec::new();
        on_path[self.start] = true;
        self.enumerate_from(
            self.start,
            0.0,
            bound,
            &excluded,
            &dist,
            cap,
            &mut on_path,
            &mut vertices,
            &mut edges,
            &mut out,
        )?;
        Ok(out)
    }

    #[allow(clippy::too_many_arguments)]
    fn enumerate_from<F>(
        &self,
        at: VertexId,
        so_far: f64,
        bound: f64,
        excluded: &F,
        dist: &[f64],
        cap: usize,
        on_path: &mut [bool],
        vertices: &mut Vec<VertexId>,
        edges: &mut Vec<EdgeId>,
        out: &mut Vec<Path>,
    ) -> Result<()>
    where
        F: Fn(EdgeId) -> bool,
    {
        if at == self.goal {
            if out.len() >= cap {
                return Err(Error::PathCapExceeded { cap });
            }
            out.push(Path {
                vertices: vertices.clone(),
                edges: edges.clone(),
                length: self.path_length(edges),
            });
            return Ok(());
        }
        for &(next, e) in &self.adjacency[at] {
            if on_path[next] || excluded(e) {
                continue;
            }
            let len = so_far + self.edges[e].length;
            if !length_le(len + dist[next], bound) {
                continue;
            }
            on_path[next] = true;
            vertices.push(next);
            edges.push(e);
            self.enumerate_from(next, len, bound, excluded, dist, cap, on_path, vertices, edges, out)?;
            edges.pop();
            vertices.pop();
            on_path[next] = false;
        }
        Ok(())
    }

    /// SHA-256 over the canonical graph contents, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.num_vertices as u64).to_le_bytes());
        h.update((self.start as u64).to_le_bytes());
        h.update((self.goal as u64).to_le_bytes());
        for e in &self.edges {
            h.update((e.u as u64).to_le_bytes());
            h.update((e.v as u64).to_le_bytes());
            h.update(e.length.to_bits().to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

pub const GRAPH_FORMAT: &str = "lazysp-graph";
pub const GRAPH_FORMAT_VERSION: u32 = 1;

/// On-disk JSON layout of a graph.
///
/// ```json
/// {"format": "lazysp-graph", "version": 1,
///  "vertices": [0, 1, 2], "edges": [[0, 0, 1, 1.0], [1, 1, 2, 1.5]],
///  "start": 0, "goal": 2, "labels": ["a", "b"]}
/// ```
///
/// Vertex ids must be exactly `0..n` and edge ids exactly `0..m` in order.
/// `labels` is optional.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub format: String,
    pub version: u32,
    pub vertices: Vec<VertexId>,
    pub edges: Vec<(EdgeId, VertexId, VertexId, f64)>,
    pub start: VertexId,
    pub goal: VertexId,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub labels: Vec<String>,
}

impl From<&ExplicitGraph> for GraphFile {
    fn from(g: &ExplicitGraph) -> Self {
        GraphFile {
            format: GRAPH_FORMAT.to_string(),
            version: GRAPH_FORMAT_VERSION,
            vertices: (0..g.num_vertices).collect(),
            edges: g.edges.iter().map(|e| (e.id, e.u, e.v, e.length)).collect(),
            start: g.start,
            goal: g.goal,
            labels: g.labels.clone(),
        }
    }
}

impl TryFrom<GraphFile> for ExplicitGraph {
    type Error = Error;

    fn try_from(f: GraphFile) -> Result<Self> {
        let bad = |msg: String| Error::Format { kind: "graph", msg };
        if f.format != GRAPH_FORMAT {
            return Err(bad(format!("unexpected format tag {:?}", f.format)));
        }
        if f.version != GRAPH_FORMAT_VERSION {
            return Err(bad(format!("unsupported version {}", f.version)));
        }
        if f.vertices.iter().enumerate().any(|(i, &v)| i != v) {
            return Err(bad("vertex ids must be 0..n in order".into()));
        }
        if f.edges.iter().enumerate().any(|(i, e)| i != e.0) {
            return Err(bad("edge ids must be 0..m in order".into()));
        }
        let triples: Vec<_> = f.edges.iter().map(|&(_, u, v, l)| (u, v, l)).collect();
        let g = ExplicitGraph::new(f.vertices.len(), &triples, f.start, f.goal)?;
        if f.labels.is_empty() {
            Ok(g)
        } else {
            g.with_labels(f.labels)
        }
    }
}

impl ExplicitGraph {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&GraphFile::from(self)).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(text)?;
        file.try_into()
    }

    pub fn save(&self, path: impl AsRef<FsPath>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<FsPath>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// s=0, a=1, b=2, g=3; edges s-a, a-g, s-b, b-g.
    pub(crate) fn diamond() -> ExplicitGraph {
        ExplicitGraph::new(
            4,
            &[(0, 1, 1.0), (1, 3, 1.0), (0, 2, 1.1), (2, 3, 1.1)],
            0,
            3,
        )
        .unwrap()
    }

    fn none(_: EdgeId) -> bool {
        false
    }

    #[test]
    fn diamond_shortest_path() {
        let g = diamond();
        let p = g.shortest_path(none).unwrap();
        assert_eq!(p.vertices, vec![0, 1, 3]);
        assert_eq!(p.edges, vec![0, 1]);
        assert_eq!(p.length, 2.0);
    }

    #[test]
    fn diamond_with_exclusion() {
        let g = diamond();
        let p = g.shortest_path_avoiding(&[1]).unwrap();
        assert_eq!(p.vertices, vec![0, 2, 3]);
        assert!((p.length - 2.2).abs() < 1e-12);
    }

    #[test]
    fn disconnected_single_edge() {
        let g = ExplicitGraph::new(2, &[(0, 1, 5.0)], 0, 1).unwrap();
        assert!(g.shortest_path(|e| e == 0).is_none());
    }

    #[test]
    fn ties_pick_smallest_edge_sequence() {
        // Two equal routes; the one through edges {1,3} has smaller first id
        // than the one through {2,0}.
        let g = ExplicitGraph::new(
            4,
            &[(2, 3, 1.0), (0, 1, 1.0), (0, 2, 1.0), (1, 3, 1.0)],
            0,
            3,
        )
        .unwrap();
        let p = g.shortest_path(none).unwrap();
        assert_eq!(p.edges, vec![1, 3]);
    }

    #[test]
    fn enumerate_diamond() {
        let g = diamond();
        let all = g.enumerate_paths_shorter_than(2.2, none, 100).unwrap();
        let mut seqs: Vec<_> = all.iter().map(|p| p.vertices.clone()).collect();
        seqs.sort();
        assert_eq!(seqs, vec![vec![0, 1, 3], vec![0, 2, 3]]);

        assert!(g.enumerate_paths_shorter_than(1.9, none, 100).unwrap().is_empty());

        let only: Vec<_> = g
            .enumerate_paths_shorter_than(2.2, |e| e == 2, 100)
            .unwrap()
            .into_iter()
            .map(|p| p.vertices)
            .collect();
        assert_eq!(only, vec![vec![0, 1, 3]]);
    }

    #[test]
    fn enumerate_cap() {
        let g = diamond();
        let err = g.enumerate_paths_shorter_than(10.0, none, 1).unwrap_err();
        assert!(matches!(err, Error::PathCapExceeded { cap: 1 }));
    }

    #[test]
    fn rejects_bad_graphs() {
        assert!(ExplicitGraph::new(2, &[(0, 1, 0.0)], 0, 1).is_err());
        assert!(ExplicitGraph::new(2, &[(0, 1, 1.0)], 0, 0).is_err());
        assert!(ExplicitGraph::new(2, &[(0, 2, 1.0)], 0, 1).is_err());
        assert!(ExplicitGraph::new(2, &[(0, 1, f64::NAN)], 0, 1).is_err());
    }

    #[test]
    fn json_round_trip() {
        let g = diamond()
            .with_labels(vec!["sa".into(), "ag".into(), "sb".into(), "bg".into()])
            .unwrap();
        let back = ExplicitGraph::from_json(&g.to_json()).unwrap();
        assert_eq!(back.edges(), g.edges());
        assert_eq!(back.labels(), g.labels());
        assert_eq!(back.content_hash(), g.content_hash());
    }

    #[test]
    fn json_rejects_wrong_tag() {
        let text = GraphFile::from(&diamond());
        let mut text = serde_json::to_value(text).unwrap();
        text["format"] = "other".into();
        assert!(ExplicitGraph::from_json(&text.to_string()).is_err());
    }
}
