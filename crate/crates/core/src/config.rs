//! JSON configuration documents: graph, coefficient and vertex-condition
//! sections, with complex entries serialized as `[re, im]` pairs and matrices
//! as row-major nested arrays. Subspaces are supplied as lists of spanning
//! vectors and re-orthonormalized on ingestion.

use crate::graph::{EdgeSpec, MetricGraph};
use crate::linalg::{czeros, CMat};
use crate::system::{
    Conditions, EdgeCoefficients, HyperbolicSystem, MatrixField, SystemError, Tolerances,
    VertexCondition,
};
use ndarray_linalg::{c64, Scalar};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("edge {0} has no coefficient record")]
    MissingCoefficients(String),
    #[error("coefficient record for unknown edge {0}")]
    UnknownEdge(String),
    #[error("vertex condition for unknown vertex {0}")]
    UnknownVertex(String),
    #[error("matrix in {context} is not rectangular")]
    RaggedMatrix { context: String },
    #[error("{context}: expected a {rows}x{cols} matrix, got {got_rows}x{got_cols}")]
    MatrixShape {
        context: String,
        rows: usize,
        cols: usize,
        got_rows: usize,
        got_cols: usize,
    },
    #[error("config declares both vertex_conditions and global_condition")]
    MixedConditionModes,
    #[error(transparent)]
    Graph(#[from] crate::graph::GraphError),
    #[error(transparent)]
    System(#[from] SystemError),
}

pub type Cpx = [f64; 2];
pub type JsonMatrix = Vec<Vec<Cpx>>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphSection {
    pub vertices: Vec<String>,
    pub edges: Vec<EdgeSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldSection {
    Constant(JsonMatrix),
    Samples(Vec<JsonMatrix>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoefficientSection {
    pub m: FieldSection,
    pub n: FieldSection,
    pub q: FieldSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qm_derivative: Option<FieldSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionSection {
    /// spanning vectors of Y, one vector per entry
    pub y_span: Vec<Vec<Cpx>>,
    #[serde(default)]
    pub yd_span: Vec<Vec<Cpx>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<JsonMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<JsonMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<JsonMatrix>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VertexConditionSection {
    pub vertex: String,
    #[serde(flatten)]
    pub condition: ConditionSection,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, Default)]
pub struct ToleranceSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sym: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub det: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sub: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eig: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub res: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proj: Option<f64>,
}

impl ToleranceSection {
    pub fn apply(&self, base: Tolerances) -> Tolerances {
        Tolerances {
            sym: self.sym.unwrap_or(base.sym),
            det: self.det.unwrap_or(base.det),
            sub: self.sub.unwrap_or(base.sub),
            rank: self.rank.unwrap_or(base.rank),
            eig: self.eig.unwrap_or(base.eig),
            res: self.res.unwrap_or(base.res),
            proj: self.proj.unwrap_or(base.proj),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationSection {
    #[serde(default = "default_cells")]
    pub cells: usize,
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "default_method")]
    pub method: String,
    #[serde(default = "default_outputs")]
    pub outputs: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_cells() -> usize {
    64
}
fn default_t_final() -> f64 {
    1.0
}
fn default_method() -> String {
    "expm".into()
}
fn default_outputs() -> usize {
    64
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            cells: default_cells(),
            t_final: default_t_final(),
            dt: None,
            method: default_method(),
            outputs: default_outputs(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigDocument {
    pub graph: GraphSection,
    pub coefficients: BTreeMap<String, CoefficientSection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub vertex_conditions: Vec<VertexConditionSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub global_condition: Option<ConditionSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<ToleranceSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSection>,
}

fn matrix_from_json(m: &JsonMatrix, context: &str) -> Result<CMat, ConfigError> {
    let rows = m.len();
    let cols = m.first().map(|r| r.len()).unwrap_or(0);
    if m.iter().any(|r| r.len() != cols) {
        return Err(ConfigError::RaggedMatrix {
            context: context.to_string(),
        });
    }
    let mut out = czeros(rows, cols);
    for (i, row) in m.iter().enumerate() {
        for (j, &[re, im]) in row.iter().enumerate() {
            out[[i, j]] = c64::new(re, im);
        }
    }
    Ok(out)
}

fn matrix_to_json(m: &CMat) -> JsonMatrix {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[[i, j]].re(), m[[i, j]].im()]).collect())
        .collect()
}

/// Columns from a list of spanning vectors.
fn span_from_json(vectors: &[Vec<Cpx>], dim: usize, context: &str) -> Result<CMat, ConfigError> {
    let mut out = czeros(dim, vectors.len());
    for (j, vec) in vectors.iter().enumerate() {
        if vec.len() != dim {
            return Err(ConfigError::MatrixShape {
                context: context.to_string(),
                rows: dim,
                cols: vectors.len(),
                got_rows: vec.len(),
                got_cols: vectors.len(),
            });
        }
        for (i, &[re, im]) in vec.iter().enumerate() {
            out[[i, j]] = c64::new(re, im);
        }
    }
    Ok(out)
}

fn span_to_json(m: &CMat) -> Vec<Vec<Cpx>> {
    (0..m.ncols())
        .map(|j| (0..m.nrows()).map(|i| [m[[i, j]].re(), m[[i, j]].im()]).collect())
        .collect()
}

fn field_from_json(
    f: &FieldSection,
    dim: usize,
    context: &str,
) -> Result<MatrixField, ConfigError> {
    let check = |m: &CMat| -> Result<(), ConfigError> {
        if m.nrows() != dim || m.ncols() != dim {
            return Err(ConfigError::MatrixShape {
                context: context.to_string(),
                rows: dim,
                cols: dim,
                got_rows: m.nrows(),
                got_cols: m.ncols(),
            });
        }
        Ok(())
    };
    match f {
        FieldSection::Constant(m) => {
            let mat = matrix_from_json(m, context)?;
            check(&mat)?;
            Ok(MatrixField::Constant(mat))
        }
        FieldSection::Samples(list) => {
            let samples: Vec<CMat> = list
                .iter()
                .map(|m| {
                    let mat = matrix_from_json(m, context)?;
                    check(&mat)?;
                    Ok(mat)
                })
                .collect::<Result<_, ConfigError>>()?;
            Ok(MatrixField::Sampled(samples))
        }
    }
}

fn field_to_json(f: &MatrixField) -> FieldSection {
    match f {
        MatrixField::Constant(m) => FieldSection::Constant(matrix_to_json(m)),
        MatrixField::Sampled(list) => {
            FieldSection::Samples(list.iter().map(matrix_to_json).collect())
        }
    }
}

fn condition_from_json(
    section: &ConditionSection,
    label: &str,
    dim: usize,
    tol: &Tolerances,
    warnings: &mut Vec<String>,
) -> Result<VertexCondition, ConfigError> {
    let y = span_from_json(&section.y_span, dim, &format!("{label}.y_span"))?;
    let yd = span_from_json(&section.yd_span, dim, &format!("{label}.yd_span"))?;
    let b = section
        .b
        .as_ref()
        .map(|m| matrix_from_json(m, &format!("{label}.b")))
        .transpose()?;
    let c = section
        .c
        .as_ref()
        .map(|m| matrix_from_json(m, &format!("{label}.c")))
        .transpose()?;
    let q = section
        .q
        .as_ref()
        .map(|m| matrix_from_json(m, &format!("{label}.q")))
        .transpose()?;
    let (vc, mut warn) = VertexCondition::new(
        label,
        dim,
        &y,
        &yd,
        b.as_ref(),
        c.as_ref(),
        q.as_ref(),
        tol,
    )?;
    warnings.append(&mut warn);
    Ok(vc)
}

fn condition_to_json(vc: &VertexCondition) -> ConditionSection {
    ConditionSection {
        y_span: span_to_json(&vc.y),
        yd_span: span_to_json(&vc.yd),
        b: Some(matrix_to_json(&vc.b)),
        c: Some(matrix_to_json(&vc.c)),
        q: Some(matrix_to_json(&vc.q)),
    }
}

/// Build a validated system from a parsed document. Returns ingestion
/// warnings (compressions that changed a supplied matrix).
pub fn to_system(doc: &ConfigDocument) -> Result<(HyperbolicSystem, Vec<String>), ConfigError> {
    let graph = MetricGraph::build(doc.graph.vertices.clone(), doc.graph.edges.clone())?;
    for id in doc.coefficients.keys() {
        if graph.edge_index(id).is_none() {
            return Err(ConfigError::UnknownEdge(id.clone()));
        }
    }
    let tol = doc
        .tolerances
        .unwrap_or_default()
        .apply(Tolerances::default());
    let mut coefficients = Vec::with_capacity(graph.edge_count());
    for edge in graph.edges() {
        let section = doc
            .coefficients
            .get(&edge.id)
            .ok_or_else(|| ConfigError::MissingCoefficients(edge.id.clone()))?;
        let ke = edge.fiber_dim;
        coefficients.push(EdgeCoefficients {
            m: field_from_json(&section.m, ke, &format!("coefficients.{}.m", edge.id))?,
            n: field_from_json(&section.n, ke, &format!("coefficients.{}.n", edge.id))?,
            q: field_from_json(&section.q, ke, &format!("coefficients.{}.q", edge.id))?,
            qm_derivative: section
                .qm_derivative
                .as_ref()
                .map(|f| field_from_json(f, ke, &format!("coefficients.{}.qm_derivative", edge.id)))
                .transpose()?,
        });
    }
    let mut warnings = Vec::new();
    let conditions = match (&doc.global_condition, doc.vertex_conditions.is_empty()) {
        (Some(_), false) => return Err(ConfigError::MixedConditionModes),
        (Some(global), true) => {
            let vc = condition_from_json(global, "global", 2 * graph.k(), &tol, &mut warnings)?;
            Conditions::Global(vc)
        }
        (None, _) => {
            let mut vcs: Vec<VertexCondition> = (0..graph.vertex_count())
                .map(|v| VertexCondition::free(graph.k_v(v)))
                .collect();
            for section in &doc.vertex_conditions {
                let v = graph
                    .vertex_index(&section.vertex)
                    .ok_or_else(|| ConfigError::UnknownVertex(section.vertex.clone()))?;
                vcs[v] = condition_from_json(
                    &section.condition,
                    &section.vertex,
                    graph.k_v(v),
                    &tol,
                    &mut warnings,
                )?;
            }
            Conditions::PerVertex(vcs)
        }
    };
    let system = HyperbolicSystem::new(graph, coefficients, conditions, tol)?;
    Ok((system, warnings))
}

/// Serialize a system back into a document (used by `models dump`).
pub fn from_system(sys: &HyperbolicSystem) -> ConfigDocument {
    let graph = GraphSection {
        vertices: sys.graph.vertices().to_vec(),
        edges: sys
            .graph
            .edges()
            .iter()
            .map(|e| EdgeSpec {
                id: e.id.clone(),
                tail: sys.graph.vertices()[e.tail].clone(),
                head: sys.graph.vertices()[e.head].clone(),
                length: e.length,
                fiber_dim: e.fiber_dim,
            })
            .collect(),
    };
    let coefficients = sys
        .graph
        .edges()
        .iter()
        .enumerate()
        .map(|(ei, e)| {
            let c = &sys.coefficients[ei];
            (
                e.id.clone(),
                CoefficientSection {
                    m: field_to_json(&c.m),
                    n: field_to_json(&c.n),
                    q: field_to_json(&c.q),
                    qm_derivative: c.qm_derivative.as_ref().map(field_to_json),
                },
            )
        })
        .collect();
    let (vertex_conditions, global_condition) = match &sys.conditions {
        Conditions::PerVertex(vcs) => (
            vcs.iter()
                .enumerate()
                .map(|(v, vc)| VertexConditionSection {
                    vertex: sys.graph.vertices()[v].clone(),
                    condition: condition_to_json(vc),
                })
                .collect(),
            None,
        ),
        Conditions::Global(vc) => (Vec::new(), Some(condition_to_json(vc))),
    };
    ConfigDocument {
        graph,
        coefficients,
        vertex_conditions,
        global_condition,
        tolerances: Some(ToleranceSection {
            sym: Some(sys.tol.sym),
            det: Some(sys.tol.det),
            sub: Some(sys.tol.sub),
            rank: Some(sys.tol.rank),
            eig: Some(sys.tol.eig),
            res: Some(sys.tol.res),
            proj: Some(sys.tol.proj),
        }),
        simulation: Some(SimulationSection::default()),
    }
}

pub fn parse(text: &str) -> Result<ConfigDocument, ConfigError> {
    Ok(serde_json::from_str(text)?)
}

pub fn render(doc: &ConfigDocument) -> String {
    serde_json::to_string_pretty(doc).expect("config serialization cannot fail")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::instantiate;
    use crate::wellposed::classify;
    use serde_json::json;

    #[test]
    fn dump_then_parse_round_trips_classification() {
        for name in crate::models::MODEL_NAMES {
            let preset = instantiate(name, &json!({})).unwrap();
            let doc = from_system(&preset.system);
            let text = render(&doc);
            let parsed = parse(&text).unwrap();
            let (sys, warnings) = to_system(&parsed).unwrap();
            assert!(warnings.is_empty(), "{name}: {warnings:?}");
            let before = classify(&preset.system);
            let after = classify(&sys);
            assert_eq!(before.verdict, after.verdict, "{name}");
            assert_eq!(before.route, after.route, "{name}");
            assert_eq!(before.basis.dim_span, after.basis.dim_span, "{name}");
        }
    }

    #[test]
    fn render_is_deterministic() {
        let preset = instantiate("maxwell_two_intervals", &json!({})).unwrap();
        let a = render(&from_system(&preset.system));
        let b = render(&from_system(&preset.system));
        assert_eq!(a, b);
    }

    #[test]
    fn mixed_condition_modes_rejected() {
        let preset = instantiate("transport", &json!({})).unwrap();
        let mut doc = from_system(&preset.system);
        doc.vertex_conditions.push(VertexConditionSection {
            vertex: "v0".into(),
            condition: doc.global_condition.clone().unwrap(),
        });
        let text = render(&doc);
        let parsed = parse(&text).unwrap();
        assert!(matches!(
            to_system(&parsed),
            Err(ConfigError::MixedConditionModes)
        ));
    }

    #[test]
    fn missing_coefficients_named() {
        let preset = instantiate("maxwell_two_intervals", &json!({})).unwrap();
        let mut doc = from_system(&preset.system);
        doc.coefficients.remove("e2");
        let err = to_system(&doc).unwrap_err();
        assert!(matches!(err, ConfigError::MissingCoefficients(ref e) if e == "e2"));
    }
}
