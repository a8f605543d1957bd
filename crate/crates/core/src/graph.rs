//! Combinatorial and metric graph representation: incidence structure and the
//! deterministic vertex trace layout.
//!
//! Each edge `e` is a directed interval `[0, ℓ_e]` carrying a `k_e`-dimensional
//! unknown. The initial endpoint (`x = 0`) is the tail vertex, the terminal
//! endpoint (`x = ℓ_e`) the head. Trace blocks at a vertex are ordered by
//! ascending edge index, i.e. by the declaration order of the edges; this
//! fixes the meaning of every vertex matrix in a config file.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("edge {0}: length must be positive")]
    NonPositiveLength(String),
    #[error("edge {0}: self-loops are rejected; subdivide the loop with an artificial vertex")]
    SelfLoop(String),
    #[error("edge {edge}: endpoint {vertex} is not a declared vertex")]
    DanglingEndpoint { edge: String, vertex: String },
    #[error("edge {0}: fiber dimension must be at least 1")]
    ZeroFiberDimension(String),
    #[error("duplicate edge id {0}")]
    DuplicateEdge(String),
    #[error("duplicate vertex id {0}")]
    DuplicateVertex(String),
    #[error("unknown vertex {0}")]
    UnknownVertex(String),
}

/// Which endpoint of an edge a trace value is taken at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum End {
    Initial,
    Terminal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: String,
    pub tail: usize,
    pub head: usize,
    pub length: f64,
    pub fiber_dim: usize,
}

/// One block of a vertex trace: the values of edge `edge` at endpoint `end`,
/// occupying `fiber_dim` slots starting at `offset` inside `ℂ^{k_v}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceBlock {
    pub edge: usize,
    pub offset: usize,
    pub end: End,
}

#[derive(Debug, Clone)]
pub struct IncidenceMatrices {
    pub iota_plus: Array2<f64>,
    pub iota_minus: Array2<f64>,
    pub iota: Array2<f64>,
}

/// Validated metric graph.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricGraph {
    vertices: Vec<String>,
    edges: Vec<Edge>,
    /// k-offsets: start of each edge block inside ℂ^k.
    edge_offsets: Vec<usize>,
    /// per-vertex trace layouts, blocks ascending in edge index
    layouts: Vec<Vec<TraceBlock>>,
}

/// Raw edge description used when building a graph.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub id: String,
    pub tail: String,
    pub head: String,
    pub length: f64,
    pub fiber_dim: usize,
}

impl MetricGraph {
    pub fn build(vertices: Vec<String>, edges: Vec<EdgeSpec>) -> Result<Self, GraphError> {
        let mut seen = std::collections::HashSet::new();
        for v in &vertices {
            if !seen.insert(v.clone()) {
                return Err(GraphError::DuplicateVertex(v.clone()));
            }
        }
        let index_of = |id: &str| vertices.iter().position(|v| v == id);
        let mut built = Vec::with_capacity(edges.len());
        let mut edge_ids = std::collections::HashSet::new();
        for spec in &edges {
            if !edge_ids.insert(spec.id.clone()) {
                return Err(GraphError::DuplicateEdge(spec.id.clone()));
            }
            if !(spec.length > 0.0) || !spec.length.is_finite() {
                return Err(GraphError::NonPositiveLength(spec.id.clone()));
            }
            if spec.fiber_dim == 0 {
                return Err(GraphError::ZeroFiberDimension(spec.id.clone()));
            }
            let tail = index_of(&spec.tail).ok_or_else(|| GraphError::DanglingEndpoint {
                edge: spec.id.clone(),
                vertex: spec.tail.clone(),
            })?;
            let head = index_of(&spec.head).ok_or_else(|| GraphError::DanglingEndpoint {
                edge: spec.id.clone(),
                vertex: spec.head.clone(),
            })?;
            if tail == head {
                return Err(GraphError::SelfLoop(spec.id.clone()));
            }
            built.push(Edge {
                id: spec.id.clone(),
                tail,
                head,
                length: spec.length,
                fiber_dim: spec.fiber_dim,
            });
        }
        let mut edge_offsets = Vec::with_capacity(built.len());
        let mut acc = 0;
        for e in &built {
            edge_offsets.push(acc);
            acc += e.fiber_dim;
        }
        let mut layouts = vec![Vec::new(); vertices.len()];
        for (ei, e) in built.iter().enumerate() {
            layouts[e.tail].push(TraceBlock {
                edge: ei,
                offset: 0,
                end: End::Initial,
            });
            layouts[e.head].push(TraceBlock {
                edge: ei,
                offset: 0,
                end: End::Terminal,
            });
        }
        for blocks in &mut layouts {
            blocks.sort_by_key(|b| b.edge);
            let mut off = 0;
            for b in blocks.iter_mut() {
                b.offset = off;
                off += built[b.edge].fiber_dim;
            }
        }
        Ok(Self {
            vertices,
            edges: built,
            edge_offsets,
            layouts,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn vertices(&self) -> &[String] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> &Edge {
        &self.edges[e]
    }

    pub fn vertex_index(&self, id: &str) -> Option<usize> {
        self.vertices.iter().position(|v| v == id)
    }

    pub fn edge_index(&self, id: &str) -> Option<usize> {
        self.edges.iter().position(|e| e.id == id)
    }

    /// Total fiber dimension `k = Σ_e k_e`.
    pub fn k(&self) -> usize {
        self.edges.iter().map(|e| e.fiber_dim).sum()
    }

    /// `k_v = Σ_{e ∈ E_v} k_e`.
    pub fn k_v(&self, v: usize) -> usize {
        self.layouts[v]
            .iter()
            .map(|b| self.edges[b.edge].fiber_dim)
            .sum()
    }

    /// Start of edge `e`'s block inside `ℂ^k`.
    pub fn edge_offset(&self, e: usize) -> usize {
        self.edge_offsets[e]
    }

    /// Trace layout of vertex `v`, blocks ascending in edge index.
    pub fn trace_layout(&self, v: usize) -> &[TraceBlock] {
        &self.layouts[v]
    }

    pub fn trace_layout_by_id(&self, id: &str) -> Result<&[TraceBlock], GraphError> {
        let v = self
            .vertex_index(id)
            .ok_or_else(|| GraphError::UnknownVertex(id.to_string()))?;
        Ok(self.trace_layout(v))
    }

    /// Signed incidence `ι = ι⁺ − ι⁻`; `ι⁺[v][e] = 1` iff `v` is the terminal
    /// endpoint of `e`.
    pub fn incidence(&self) -> IncidenceMatrices {
        let nv = self.vertex_count();
        let ne = self.edge_count();
        let mut plus = Array2::zeros((nv, ne));
        let mut minus = Array2::zeros((nv, ne));
        for (ei, e) in self.edges.iter().enumerate() {
            plus[[e.head, ei]] = 1.0;
            minus[[e.tail, ei]] = 1.0;
        }
        let iota = &plus - &minus;
        IncidenceMatrices {
            iota_plus: plus,
            iota_minus: minus,
            iota,
        }
    }

    /// Incidence sign of edge `e` at vertex `v` (+1 terminal, −1 initial, 0 not incident).
    pub fn iota(&self, v: usize, e: usize) -> f64 {
        let edge = &self.edges[e];
        if edge.head == v {
            1.0
        } else if edge.tail == v {
            -1.0
        } else {
            0.0
        }
    }

    /// Vertices with no outgoing edge (sinks) or no incoming edge (sources).
    pub fn has_sink_or_source(&self) -> bool {
        (0..self.vertex_count()).any(|v| {
            let outgoing = self.edges.iter().any(|e| e.tail == v);
            let incoming = self.edges.iter().any(|e| e.head == v);
            !outgoing || !incoming
        })
    }
}
