//! Edge coefficient fields, vertex-condition data, and assembly of the
//! boundary-flux matrices `T_v` and the global `T`.
//!
//! Coefficient fields are either constant matrices or tables of samples at
//! uniform nodes with piecewise-linear interpolation. Vertex conditions store
//! orthonormal bases for the admissible trace space `Y` and its dynamic part
//! `Y^(d)`, together with the ambient (compressed) operators `B`, `C` and the
//! boundary weight `Q`.

use crate::graph::{End, GraphError, MetricGraph};
use crate::linalg::{
    adjoint, asymmetry, ceye, containment_residual, czeros, eig_min, frobenius, hermitian_part,
    orthonormalize_exact, projector, CMat, CVec,
};
use ndarray::s;
use ndarray_linalg::{Determinant, Inverse, Scalar};
#[cfg(test)]
use ndarray_linalg::c64;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SystemError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("edge {edge}: field {field} has dimension {got}, expected {expected}")]
    FieldDimension {
        edge: String,
        field: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("edge {edge}: sampled field {field} needs at least 2 samples")]
    TooFewSamples { edge: String, field: &'static str },
    #[error("vertex condition at {site}: supplied {what} columns are rank deficient (rank {rank})")]
    RankDeficientSubspace {
        site: String,
        what: &'static str,
        rank: usize,
    },
    #[error("vertex condition at {site}: Y^(d) is not contained in Y (residual {residual:.3e})")]
    SubspaceNotContained { site: String, residual: f64 },
    #[error("vertex condition at {site}: matrix {what} has dimension {got}, expected {expected}")]
    ConditionDimension {
        site: String,
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("vertex condition at {site}: Q_v is not Hermitian positive definite on Y^(d) (min eig {min_eig:.3e})")]
    WeightNotPositive { site: String, min_eig: f64 },
    #[error("system has {got} coefficient records for {expected} edges")]
    CoefficientCount { got: usize, expected: usize },
    #[error("unknown vertex {0}")]
    UnknownVertex(String),
}

/// Numerical tolerances used by validation and the certificate engine.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Tolerances {
    /// relative Frobenius tolerance for Hermitian-symmetry checks
    pub sym: f64,
    /// absolute floor for `min |det M_e|`
    pub det: f64,
    /// relative Frobenius tolerance for subspace containment/compression
    pub sub: f64,
    /// relative singular-value cutoff for rank decisions
    pub rank: f64,
    /// eigenvalue tolerance for cone checks
    pub eig: f64,
    /// internal residual bound for the stationary solver
    pub res: f64,
    /// constraint residual bound for time stepping
    pub proj: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            sym: 1e-10,
            det: 1e-12,
            sub: 1e-10,
            rank: 1e-9,
            eig: 1e-10,
            res: 1e-6,
            proj: 1e-9,
        }
    }
}

/// Matrix-valued field on `[0, ℓ]`, constant or piecewise linear between
/// uniform sample nodes.
#[derive(Debug, Clone, PartialEq)]
pub enum MatrixField {
    Constant(CMat),
    Sampled(Vec<CMat>),
}

impl MatrixField {
    pub fn dim(&self) -> usize {
        match self {
            MatrixField::Constant(m) => m.nrows(),
            MatrixField::Sampled(v) => v[0].nrows(),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, MatrixField::Constant(_))
    }

    pub fn sample_count(&self) -> usize {
        match self {
            MatrixField::Constant(_) => 1,
            MatrixField::Sampled(v) => v.len(),
        }
    }

    /// Evaluate at normalized coordinate `t ∈ [0, 1]`.
    pub fn eval(&self, t: f64) -> CMat {
        match self {
            MatrixField::Constant(m) => m.clone(),
            MatrixField::Sampled(v) => {
                let m = v.len() - 1;
                let s = (t.clamp(0.0, 1.0)) * m as f64;
                let i = (s.floor() as usize).min(m.saturating_sub(1));
                let w = s - i as f64;
                if m == 0 {
                    return v[0].clone();
                }
                let a = &v[i];
                let b = &v[i + 1];
                a.mapv(|z| z * (1.0 - w)) + b.mapv(|z| z * w)
            }
        }
    }

    /// Derivative of the interpolant with respect to the physical coordinate.
    /// At interior sample nodes the two one-sided slopes are averaged.
    pub fn eval_deriv(&self, t: f64, length: f64) -> CMat {
        match self {
            MatrixField::Constant(m) => czeros(m.nrows(), m.ncols()),
            MatrixField::Sampled(v) => {
                let m = v.len() - 1;
                if m == 0 {
                    return czeros(v[0].nrows(), v[0].ncols());
                }
                let h = length / m as f64;
                let slope = |i: usize| (&v[i + 1] - &v[i]).mapv(|z| z / h);
                let s = (t.clamp(0.0, 1.0)) * m as f64;
                let i = s.floor() as usize;
                let frac = s - i as f64;
                if i >= m {
                    slope(m - 1)
                } else if frac < 1e-12 && i > 0 {
                    (slope(i - 1) + slope(i)).mapv(|z| z * 0.5)
                } else {
                    slope(i)
                }
            }
        }
    }
}

/// Per-edge coefficient record: `M`, `N`, `Q` and an optional exact table for
/// `(Q M)'`.
#[derive(Debug, Clone)]
pub struct EdgeCoefficients {
    pub m: MatrixField,
    pub n: MatrixField,
    pub q: MatrixField,
    pub qm_derivative: Option<MatrixField>,
}

impl EdgeCoefficients {
    pub fn constant(m: CMat, n: CMat, q: CMat) -> Self {
        Self {
            m: MatrixField::Constant(m),
            n: MatrixField::Constant(n),
            q: MatrixField::Constant(q),
            qm_derivative: None,
        }
    }

    pub fn qm_at(&self, t: f64) -> CMat {
        self.q.eval(t).dot(&self.m.eval(t))
    }

    pub fn qm_deriv_at(&self, t: f64, length: f64) -> CMat {
        if let Some(d) = &self.qm_derivative {
            return d.eval(t);
        }
        if self.q.is_constant() && self.m.is_constant() {
            let d = self.m.dim();
            return czeros(d, d);
        }
        // product rule on the interpolants
        self.q.eval_deriv(t, length).dot(&self.m.eval(t))
            + self.q.eval(t).dot(&self.m.eval_deriv(t, length))
    }
}

/// Vertex (or global) boundary condition in compressed ambient form.
#[derive(Debug, Clone)]
pub struct VertexCondition {
    /// orthonormal basis of the admissible trace space `Y`
    pub y: CMat,
    /// orthonormal basis of the dynamic subspace `Y^(d) ⊆ Y`
    pub yd: CMat,
    /// ambient `B` with `B = P^(d) B P_Y`
    pub b: CMat,
    /// ambient `C` with `C = P^(d) C P^(d)`
    pub c: CMat,
    /// ambient boundary weight with `Q = P^(d) Q P^(d)`, positive definite on `Y^(d)`
    pub q: CMat,
}

impl VertexCondition {
    /// Unconstrained vertex: `Y = ℂ^dim`, no dynamic part.
    pub fn free(dim: usize) -> Self {
        Self {
            y: ceye(dim),
            yd: czeros(dim, 0),
            b: czeros(dim, dim),
            c: czeros(dim, dim),
            q: czeros(dim, dim),
        }
    }

    /// Purely stationary condition `γ_v(u) ∈ span(y_cols)`.
    pub fn stationary(site: &str, dim: usize, y_cols: &CMat, tol: &Tolerances) -> Result<Self, SystemError> {
        Self::new(site, dim, y_cols, &czeros(dim, 0), None, None, None, tol).map(|(vc, _)| vc)
    }

    /// Ingest user-supplied data: spanning columns are re-orthonormalized,
    /// operators are compressed to their canonical supports. Returns warnings
    /// when a compression changed a matrix by more than `tol.sub`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        site: &str,
        dim: usize,
        y_cols: &CMat,
        yd_cols: &CMat,
        b: Option<&CMat>,
        c: Option<&CMat>,
        q: Option<&CMat>,
        tol: &Tolerances,
    ) -> Result<(Self, Vec<String>), SystemError> {
        let mut warnings = Vec::new();
        let check_dim = |m: &CMat, what: &'static str| -> Result<(), SystemError> {
            if m.nrows() != dim {
                return Err(SystemError::ConditionDimension {
                    site: site.to_string(),
                    what,
                    got: m.nrows(),
                    expected: dim,
                });
            }
            Ok(())
        };
        check_dim(y_cols, "Y basis")?;
        check_dim(yd_cols, "Yd basis")?;
        let y = orthonormalize_exact(y_cols, tol.rank).map_err(|rank| {
            SystemError::RankDeficientSubspace {
                site: site.to_string(),
                what: "Y",
                rank,
            }
        })?;
        let yd = orthonormalize_exact(yd_cols, tol.rank).map_err(|rank| {
            SystemError::RankDeficientSubspace {
                site: site.to_string(),
                what: "Yd",
                rank,
            }
        })?;
        let resid = containment_residual(&yd, &y);
        if resid > tol.sub {
            return Err(SystemError::SubspaceNotContained {
                site: site.to_string(),
                residual: resid,
            });
        }
        let p_y = projector(&y);
        let p_d = projector(&yd);
        let compress = |m: Option<&CMat>,
                        left: &CMat,
                        right: &CMat,
                        what: &'static str,
                        warnings: &mut Vec<String>|
         -> Result<CMat, SystemError> {
            match m {
                None => Ok(czeros(dim, dim)),
                Some(m) => {
                    if m.nrows() != dim || m.ncols() != dim {
                        return Err(SystemError::ConditionDimension {
                            site: site.to_string(),
                            what,
                            got: m.nrows(),
                            expected: dim,
                        });
                    }
                    let comp = left.dot(&m.dot(right));
                    let change = frobenius(&(&comp - m)) / frobenius(m).max(1.0);
                    if change > tol.sub {
                        warnings.push(format!(
                            "{site}: {what} changed by compression to its canonical support (relative change {change:.3e})"
                        ));
                    }
                    Ok(comp)
                }
            }
        };
        let b = compress(b, &p_d, &p_y, "B", &mut warnings)?;
        let c = compress(c, &p_d, &p_d, "C", &mut warnings)?;
        let q_raw = compress(q, &p_d, &p_d, "Q", &mut warnings)?;
        let q_herm = hermitian_part(&q_raw);
        if yd.ncols() > 0 {
            let q_dd = adjoint(&yd).dot(&q_herm.dot(&yd));
            let min_eig = eig_min(&q_dd);
            if !(min_eig > 0.0) {
                return Err(SystemError::WeightNotPositive {
                    site: site.to_string(),
                    min_eig,
                });
            }
        }
        Ok((
            Self {
                y,
                yd,
                b,
                c,
                q: q_herm,
            },
            warnings,
        ))
    }

    pub fn dim(&self) -> usize {
        self.y.nrows()
    }

    pub fn dim_y(&self) -> usize {
        self.y.ncols()
    }

    pub fn dim_yd(&self) -> usize {
        self.yd.ncols()
    }

    /// Moore–Penrose inverse of `Q` on `Y^(d)` (zero off the subspace).
    pub fn q_pinv(&self) -> CMat {
        if self.dim_yd() == 0 {
            return czeros(self.dim(), self.dim());
        }
        let q_dd = adjoint(&self.yd).dot(&self.q.dot(&self.yd));
        let inv = q_dd.inv().expect("Q_v positive definite on Yd");
        self.yd.dot(&inv.dot(&adjoint(&self.yd)))
    }
}

/// Identifier of a boundary-condition site.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiteId {
    Vertex(usize),
    Global,
}

impl SiteId {
    pub fn label(&self, graph: &MetricGraph) -> String {
        match self {
            SiteId::Vertex(v) => graph.vertices()[*v].clone(),
            SiteId::Global => "global".to_string(),
        }
    }
}

/// One coordinate of a site trace: component `comp` of edge `edge` at `end`.
#[derive(Debug, Clone, Copy)]
pub struct TraceCoord {
    pub edge: usize,
    pub end: End,
    pub comp: usize,
}

/// A boundary-condition site together with its trace coordinate map.
#[derive(Debug, Clone)]
pub struct Site {
    pub id: SiteId,
    pub coords: Vec<TraceCoord>,
}

impl Site {
    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

#[derive(Debug, Clone)]
pub enum Conditions {
    /// one condition per vertex, indexed like `graph.vertices()`
    PerVertex(Vec<VertexCondition>),
    /// a single condition coupling all `2k` endpoint traces
    Global(VertexCondition),
}

/// The assembled problem: graph, coefficients, boundary conditions.
#[derive(Debug, Clone)]
pub struct HyperbolicSystem {
    pub graph: MetricGraph,
    pub coefficients: Vec<EdgeCoefficients>,
    pub conditions: Conditions,
    pub tol: Tolerances,
}

#[derive(Debug, Clone, Serialize)]
pub struct AssumptionItem {
    pub name: String,
    pub passed: bool,
    pub witness: f64,
    pub threshold: f64,
    pub location: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AssumptionsReport {
    pub passed: bool,
    pub items: Vec<AssumptionItem>,
}

impl HyperbolicSystem {
    pub fn new(
        graph: MetricGraph,
        coefficients: Vec<EdgeCoefficients>,
        conditions: Conditions,
        tol: Tolerances,
    ) -> Result<Self, SystemError> {
        if coefficients.len() != graph.edge_count() {
            return Err(SystemError::CoefficientCount {
                got: coefficients.len(),
                expected: graph.edge_count(),
            });
        }
        for (ei, coeff) in coefficients.iter().enumerate() {
            let ke = graph.edge(ei).fiber_dim;
            for (field, name) in [(&coeff.m, "M"), (&coeff.n, "N"), (&coeff.q, "Q")] {
                if field.dim() != ke {
                    return Err(SystemError::FieldDimension {
                        edge: graph.edge(ei).id.clone(),
                        field: name,
                        got: field.dim(),
                        expected: ke,
                    });
                }
                if let MatrixField::Sampled(v) = field {
                    if v.len() < 2 {
                        return Err(SystemError::TooFewSamples {
                            edge: graph.edge(ei).id.clone(),
                            field: name,
                        });
                    }
                }
            }
        }
        match &conditions {
            Conditions::PerVertex(vcs) => {
                if vcs.len() != graph.vertex_count() {
                    return Err(SystemError::CoefficientCount {
                        got: vcs.len(),
                        expected: graph.vertex_count(),
                    });
                }
                for (v, vc) in vcs.iter().enumerate() {
                    if vc.dim() != graph.k_v(v) {
                        return Err(SystemError::ConditionDimension {
                            site: graph.vertices()[v].clone(),
                            what: "condition",
                            got: vc.dim(),
                            expected: graph.k_v(v),
                        });
                    }
                }
            }
            Conditions::Global(vc) => {
                if vc.dim() != 2 * graph.k() {
                    return Err(SystemError::ConditionDimension {
                        site: "global".to_string(),
                        what: "condition",
                        got: vc.dim(),
                        expected: 2 * graph.k(),
                    });
                }
            }
        }
        Ok(Self {
            graph,
            coefficients,
            conditions,
            tol,
        })
    }

    /// All boundary-condition sites of this system.
    pub fn sites(&self) -> Vec<Site> {
        match &self.conditions {
            Conditions::PerVertex(_) => (0..self.graph.vertex_count())
                .map(|v| {
                    let coords = self
                        .graph
                        .trace_layout(v)
                        .iter()
                        .flat_map(|b| {
                            let ke = self.graph.edge(b.edge).fiber_dim;
                            (0..ke).map(move |comp| TraceCoord {
                                edge: b.edge,
                                end: b.end,
                                comp,
                            })
                        })
                        .collect();
                    Site {
                        id: SiteId::Vertex(v),
                        coords,
                    }
                })
                .collect(),
            Conditions::Global(_) => {
                let mut coords = Vec::with_capacity(2 * self.graph.k());
                for end in [End::Initial, End::Terminal] {
                    for (ei, e) in self.graph.edges().iter().enumerate() {
                        for comp in 0..e.fiber_dim {
                            coords.push(TraceCoord {
                                edge: ei,
                                end,
                                comp,
                            });
                        }
                    }
                }
                vec![Site {
                    id: SiteId::Global,
                    coords,
                }]
            }
        }
    }

    pub fn condition(&self, site: &Site) -> &VertexCondition {
        match (&self.conditions, site.id) {
            (Conditions::PerVertex(vcs), SiteId::Vertex(v)) => &vcs[v],
            (Conditions::Global(vc), SiteId::Global) => vc,
            _ => panic!("site does not belong to this system"),
        }
    }

    /// Q_e(v) M_e(v) at the endpoint of `edge` given by `end`.
    pub fn qm_at_end(&self, edge: usize, end: End) -> CMat {
        let t = match end {
            End::Initial => 0.0,
            End::Terminal => 1.0,
        };
        self.coefficients[edge].qm_at(t)
    }

    /// Boundary-flux matrix of a site: block diagonal `Q_e(v) M_e(v) ι_{ve}`
    /// in the trace layout (for the global site: `diag(−QM(0)) ⊕ diag(QM(ℓ))`).
    pub fn t_matrix(&self, site: &Site) -> CMat {
        let dim = site.dim();
        let mut t = czeros(dim, dim);
        let mut pos = 0;
        while pos < dim {
            let coord = site.coords[pos];
            let ke = self.graph.edge(coord.edge).fiber_dim;
            let sign = match coord.end {
                End::Initial => -1.0,
                End::Terminal => 1.0,
            };
            let block = self.qm_at_end(coord.edge, coord.end);
            let scaled = block.mapv(|z| z * sign);
            t.slice_mut(s![pos..pos + ke, pos..pos + ke]).assign(&scaled);
            pos += ke;
        }
        t
    }

    /// `T_v` for a single vertex (vertex-condition mode layout).
    pub fn assemble_tv(&self, vertex: &str) -> Result<CMat, SystemError> {
        let v = self
            .graph
            .vertex_index(vertex)
            .ok_or_else(|| SystemError::UnknownVertex(vertex.to_string()))?;
        let site = Site {
            id: SiteId::Vertex(v),
            coords: self
                .graph
                .trace_layout(v)
                .iter()
                .flat_map(|b| {
                    let ke = self.graph.edge(b.edge).fiber_dim;
                    (0..ke).map(move |comp| TraceCoord {
                        edge: b.edge,
                        end: b.end,
                        comp,
                    })
                })
                .collect(),
        };
        Ok(self.t_matrix(&site))
    }

    /// Global `2k×2k` boundary matrix: all initial endpoints then all terminal
    /// endpoints, edges ascending.
    pub fn assemble_t_global(&self) -> CMat {
        let k = self.graph.k();
        let mut t = czeros(2 * k, 2 * k);
        for (ei, e) in self.graph.edges().iter().enumerate() {
            let off = self.graph.edge_offset(ei);
            let ke = e.fiber_dim;
            let qm0 = self.qm_at_end(ei, End::Initial).mapv(|z| -z);
            let qml = self.qm_at_end(ei, End::Terminal);
            t.slice_mut(s![off..off + ke, off..off + ke]).assign(&qm0);
            t.slice_mut(s![k + off..k + off + ke, k + off..k + off + ke])
                .assign(&qml);
        }
        t
    }

    /// Extend a site-trace vector to `ℂ^k` by the per-edge zero extension (for
    /// the global site the two endpoint blocks of an edge are summed).
    pub fn extend_to_k(&self, site: &Site, w: &CVec) -> CVec {
        let mut out = CVec::zeros(self.graph.k());
        for (i, coord) in site.coords.iter().enumerate() {
            let idx = self.graph.edge_offset(coord.edge) + coord.comp;
            out[idx] += w[i];
        }
        out
    }

    /// Validation grid resolution for a coefficient record.
    fn validation_nodes(&self, edge: usize) -> usize {
        let c = &self.coefficients[edge];
        c.m.sample_count()
            .max(c.n.sample_count())
            .max(c.q.sample_count())
            .max(9)
    }

    /// Check the standing assumptions; failures are reported, not raised.
    pub fn validate_assumptions(&self) -> AssumptionsReport {
        let mut items = Vec::new();
        let mut push = |name: String, passed: bool, witness: f64, threshold: f64, loc: Option<String>| {
            items.push(AssumptionItem {
                name,
                passed,
                witness,
                threshold,
                location: loc,
            });
        };

        for (ei, coeff) in self.coefficients.iter().enumerate() {
            let id = &self.graph.edge(ei).id;
            let nodes = self.validation_nodes(ei);
            let mut worst_qasym = (0.0f64, 0usize);
            let mut worst_qeig = (f64::INFINITY, 0usize);
            let mut worst_qmasym = (0.0f64, 0usize);
            let mut worst_det = (f64::INFINITY, 0usize);
            for i in 0..nodes {
                let t = i as f64 / (nodes - 1) as f64;
                let q = coeff.q.eval(t);
                let qa = asymmetry(&q);
                if qa > worst_qasym.0 {
                    worst_qasym = (qa, i);
                }
                let qe = eig_min(&q);
                if qe < worst_qeig.0 {
                    worst_qeig = (qe, i);
                }
                let qm = coeff.qm_at(t);
                let qma = asymmetry(&qm);
                if qma > worst_qmasym.0 {
                    worst_qmasym = (qma, i);
                }
                let det = coeff.m.eval(t).det().map(|d| d.abs()).unwrap_or(0.0);
                if det < worst_det.0 {
                    worst_det = (det, i);
                }
            }
            push(
                format!("Q_e Hermitian ({id})"),
                worst_qasym.0 <= self.tol.sym,
                worst_qasym.0,
                self.tol.sym,
                Some(format!("{id} node {}", worst_qasym.1)),
            );
            push(
                format!("Q_e uniformly positive definite ({id})"),
                worst_qeig.0 > self.tol.eig,
                worst_qeig.0,
                self.tol.eig,
                Some(format!("{id} node {}", worst_qeig.1)),
            );
            push(
                format!("Q_e M_e Hermitian ({id})"),
                worst_qmasym.0 <= self.tol.sym,
                worst_qmasym.0,
                self.tol.sym,
                Some(format!("{id} node {}", worst_qmasym.1)),
            );
            push(
                format!("M_e invertible ({id})"),
                worst_det.0 > self.tol.det,
                worst_det.0,
                self.tol.det,
                Some(format!("{id} node {}", worst_det.1)),
            );
        }

        for site in self.sites() {
            let vc = self.condition(&site);
            let label = site.id.label(&self.graph);
            let contain = containment_residual(&vc.yd, &vc.y);
            push(
                format!("Y^(d) ⊆ Y ({label})"),
                contain <= self.tol.sub,
                contain,
                self.tol.sub,
                Some(label.clone()),
            );
            let p_y = projector(&vc.y);
            let p_d = projector(&vc.yd);
            let b_res = frobenius(&(&p_d.dot(&vc.b.dot(&p_y)) - &vc.b)) / frobenius(&vc.b).max(1.0);
            push(
                format!("B = P^(d) B P_Y ({label})"),
                b_res <= self.tol.sub,
                b_res,
                self.tol.sub,
                Some(label.clone()),
            );
            let c_res = frobenius(&(&p_d.dot(&vc.c.dot(&p_d)) - &vc.c)) / frobenius(&vc.c).max(1.0);
            push(
                format!("C = P^(d) C P^(d) ({label})"),
                c_res <= self.tol.sub,
                c_res,
                self.tol.sub,
                Some(label.clone()),
            );
            let q_asym = asymmetry(&vc.q);
            push(
                format!("Q_v Hermitian ({label})"),
                q_asym <= self.tol.sym,
                q_asym,
                self.tol.sym,
                Some(label.clone()),
            );
            if vc.dim_yd() > 0 {
                let q_dd = adjoint(&vc.yd).dot(&vc.q.dot(&vc.yd));
                let me = eig_min(&q_dd);
                push(
                    format!("Q_v positive definite on Y^(d) ({label})"),
                    me > self.tol.eig,
                    me,
                    self.tol.eig,
                    Some(label),
                );
            }
        }

        let passed = items.iter().all(|i| i.passed);
        AssumptionsReport { passed, items }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::EdgeSpec;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn c(re: f64, im: f64) -> c64 {
        c64::new(re, im)
    }

    fn offdiag() -> CMat {
        array![[c(0.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]]
    }

    fn single_edge_system() -> HyperbolicSystem {
        let graph = MetricGraph::build(
            vec!["v1".into(), "v2".into()],
            vec![EdgeSpec {
                id: "e1".into(),
                tail: "v1".into(),
                head: "v2".into(),
                length: 1.0,
                fiber_dim: 2,
            }],
        )
        .unwrap();
        let coeff = EdgeCoefficients::constant(offdiag(), czeros(2, 2), ceye(2));
        let conditions = Conditions::PerVertex(vec![
            VertexCondition::free(2),
            VertexCondition::free(2),
        ]);
        HyperbolicSystem::new(graph, vec![coeff], conditions, Tolerances::default()).unwrap()
    }

    #[test]
    fn tv_signs_single_edge() {
        let sys = single_edge_system();
        let t1 = sys.assemble_tv("v1").unwrap();
        let t2 = sys.assemble_tv("v2").unwrap();
        assert_abs_diff_eq!(t1[[0, 1]].re(), -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(t2[[0, 1]].re(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn t_global_single_edge() {
        let sys = single_edge_system();
        let t = sys.assemble_t_global();
        assert_abs_diff_eq!(t[[0, 1]].re(), -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(t[[2, 3]].re(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn t_global_scales_with_q() {
        let mut sys = single_edge_system();
        let t1 = sys.assemble_t_global();
        sys.coefficients[0].q = MatrixField::Constant(ceye(2).mapv(|z| z * 2.0));
        let t2 = sys.assemble_t_global();
        assert_abs_diff_eq!(frobenius(&(t2 - t1.mapv(|z| z * 2.0))), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn sampled_constant_agree() {
        let mut sys = single_edge_system();
        let t_const = sys.assemble_tv("v1").unwrap();
        sys.coefficients[0].m = MatrixField::Sampled(vec![offdiag(); 5]);
        sys.coefficients[0].q = MatrixField::Sampled(vec![ceye(2); 5]);
        let t_sampled = sys.assemble_tv("v1").unwrap();
        assert!(frobenius(&(&t_const - &t_sampled)) < 1e-14);
    }

    #[test]
    fn zero_qm_gives_zero_tv() {
        let mut sys = single_edge_system();
        sys.coefficients[0].m = MatrixField::Constant(czeros(2, 2));
        let t = sys.assemble_tv("v1").unwrap();
        assert_eq!(frobenius(&t), 0.0);
    }

    #[test]
    fn validate_flags_singular_m() {
        let mut sys = single_edge_system();
        sys.coefficients[0].m =
            MatrixField::Constant(array![[c(0.0, 0.0), c(1.0, 0.0)], [c(0.0, 0.0), c(0.0, 0.0)]]);
        let report = sys.validate_assumptions();
        assert!(!report.passed);
        let item = report
            .items
            .iter()
            .find(|i| i.name.starts_with("M_e invertible"))
            .unwrap();
        assert!(!item.passed);
        assert_eq!(item.witness, 0.0);
    }

    #[test]
    fn validate_dirac_coefficients_pass() {
        let mut sys = single_edge_system();
        sys.coefficients[0].m =
            MatrixField::Constant(array![[c(0.0, 0.0), c(0.0, 1.0)], [c(0.0, -1.0), c(0.0, 0.0)]]);
        let report = sys.validate_assumptions();
        assert!(report.passed, "{:?}", report.items);
    }

    #[test]
    fn second_sound_qm_is_tridiagonal() {
        // unit parameters: QM has off-diagonals (1, -1, -1)
        let m = array![
            [c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
            [c(1.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0), c(0.0, 0.0)],
            [c(0.0, 0.0), c(-1.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)],
            [c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0), c(0.0, 0.0)]
        ];
        let coeff = EdgeCoefficients::constant(m.clone(), czeros(4, 4), ceye(4));
        let qm = coeff.qm_at(0.3);
        assert!(frobenius(&(&qm - &m)) < 1e-14);
        assert!(asymmetry(&qm) < 1e-14);
    }

    #[test]
    fn b_compression_warns() {
        let y = ceye(2);
        let yd_cols = array![[c(1.0, 0.0)], [c(0.0, 0.0)]];
        let b_full = ceye(2); // not supported on Yd rows only: compression changes it
        let (vc, warnings) = VertexCondition::new(
            "v",
            2,
            &y,
            &yd_cols,
            Some(&b_full),
            None,
            Some(&projector(&yd_cols)),
            &Tolerances::default(),
        )
        .unwrap();
        assert!(!warnings.is_empty());
        // compressed to P^(d) B P_Y = e1 e1^T
        assert_abs_diff_eq!(vc.b[[0, 0]].re(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(vc.b[[1, 1]].re(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn yd_outside_y_rejected() {
        let y_cols = array![[c(1.0, 0.0)], [c(0.0, 0.0)]];
        let yd_cols = array![[c(0.0, 0.0)], [c(1.0, 0.0)]];
        let err = VertexCondition::new(
            "v",
            2,
            &y_cols,
            &yd_cols,
            None,
            None,
            Some(&ceye(2)),
            &Tolerances::default(),
        )
        .unwrap_err();
        assert!(matches!(err, SystemError::SubspaceNotContained { .. }));
    }

    #[test]
    fn permuting_edges_conjugates_tv() {
        // two edges with distinct QM blocks meeting at w; swapping the edge
        // declaration order must permute the T_w blocks accordingly
        let build = |order: [usize; 2]| {
            let specs = [
                EdgeSpec {
                    id: "a".into(),
                    tail: "u".into(),
                    head: "w".into(),
                    length: 1.0,
                    fiber_dim: 1,
                },
                EdgeSpec {
                    id: "b".into(),
                    tail: "w".into(),
                    head: "z".into(),
                    length: 1.0,
                    fiber_dim: 1,
                },
            ];
            let coeffs = [
                EdgeCoefficients::constant(
                    array![[c(2.0, 0.0)]],
                    czeros(1, 1),
                    array![[c(1.0, 0.0)]],
                ),
                EdgeCoefficients::constant(
                    array![[c(3.0, 0.0)]],
                    czeros(1, 1),
                    array![[c(1.0, 0.0)]],
                ),
            ];
            let graph = MetricGraph::build(
                vec!["u".into(), "w".into(), "z".into()],
                order.iter().map(|&i| specs[i].clone()).collect(),
            )
            .unwrap();
            let conditions = Conditions::PerVertex(vec![
                VertexCondition::free(1),
                VertexCondition::free(2),
                VertexCondition::free(1),
            ]);
            let sys = HyperbolicSystem::new(
                graph,
                order.iter().map(|&i| coeffs[i].clone()).collect(),
                conditions,
                Tolerances::default(),
            )
            .unwrap();
            sys.assemble_tv("w").unwrap()
        };
        let t_ab = build([0, 1]);
        let t_ba = build([1, 0]);
        // permutation matrix for the swapped block order
        let p = array![[c(0.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]];
        let conj = p.dot(&t_ab.dot(&adjoint(&p)));
        assert!(frobenius(&(&conj - &t_ba)) < 1e-14);
    }
}
