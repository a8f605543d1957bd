//! Factory for the example systems: transport networks with dynamic vertex
//! integrators, the two-interval Maxwell system, telegrapher's equations on a
//! Y-network with the improved Kirchhoff condition, second sound, wave stars
//! with a point mass, and the Dirac network.
//!
//! Boundary weights are stored in ambient compressed form. Where the source
//! material states a scalar weight with respect to an unnormalized basis
//! vector, the ambient matrix carries the corresponding Gram factor so that
//! the weighted energy is the physical one (e.g. `Q = ½ P^(d)` for the
//! Maxwell center vertex whose dynamic direction is `(1,0,1,0)ᵀ`).

use crate::graph::{EdgeSpec, MetricGraph};
use crate::linalg::{ceye, czeros, projector, CVec};
use crate::system::{
    Conditions, EdgeCoefficients, HyperbolicSystem, SystemError, Tolerances, VertexCondition,
};
use crate::wellposed::{Route, Verdict};
use ndarray::array;
use ndarray_linalg::c64;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown model {0}")]
    UnknownModel(String),
    #[error("invalid parameter {name}: {constraint}")]
    InvalidParameter { name: String, constraint: String },
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Graph(#[from] crate::graph::GraphError),
}

/// What the classification is expected to certify for a preset.
#[derive(Debug, Clone, Serialize)]
pub struct ExpectedClassification {
    pub verdict: Verdict,
    pub route: Route,
    pub basis_holds: bool,
}

#[derive(Debug)]
pub struct ModelPreset {
    pub name: String,
    pub params: Value,
    pub system: HyperbolicSystem,
    pub expected: ExpectedClassification,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelSchema {
    pub name: &'static str,
    pub description: &'static str,
    pub parameters: Value,
}

pub const MODEL_NAMES: [&str; 6] = [
    "transport",
    "maxwell_two_intervals",
    "telegrapher_y",
    "second_sound",
    "wave_star",
    "dirac_network",
];

pub fn list_models() -> Vec<ModelSchema> {
    vec![
        ModelSchema {
            name: "transport",
            description: "first-order transport on a network with weighted junctions and a dynamic vertex integrator",
            parameters: json!({
                "edges": "list of [tail, head] vertex indices; default two-cycle [[0,1],[1,0]]; no sinks or sources",
                "velocities": "positive speed per edge; default 1",
                "c_matrix": "|V|x|V| real coupling matrix of the vertex integrators; default [[-1.5,0.25],[0.25,-1.5]]",
            }),
        },
        ModelSchema {
            name: "maxwell_two_intervals",
            description: "1D Maxwell system on two adjacent intervals with a dynamic continuity condition at the shared vertex",
            parameters: json!({}),
        },
        ModelSchema {
            name: "telegrapher_y",
            description: "telegrapher's equations on a Y-network with the improved Kirchhoff condition at the junction",
            parameters: json!({
                "p": "positive line constant; default 1",
                "l": "positive line constant; default 1",
                "l_matrix": "symmetric positive definite 2x2 junction inductance; default [[2,1],[1,2]]",
            }),
        },
        ModelSchema {
            name: "second_sound",
            description: "thermoelasticity with second sound on an interval; the heat-flux condition at 0 becomes a dynamic vertex law",
            parameters: json!({
                "alpha": "> 0; default 1", "beta": "> 0; default 1", "gamma": "> 0; default 1",
                "delta": "> 0; default 1", "tau0": "> 0; default 1", "kappa": "> 0; default 1",
                "length": "> 0; default 1",
            }),
        },
        ModelSchema {
            name: "wave_star",
            description: "wave-type equations on a star with J >= 2 edges joined by a point mass; one clamped outer end, the others free",
            parameters: json!({
                "j": "number of edges, >= 2; default 3",
                "delta": "point mass, > 0; default 1",
                "alpha": "first-order damping coefficient; default 0",
                "beta": "zeroth-order velocity damping; default -0.3",
                "gamma": "zeroth-order strain coupling; default 0",
            }),
        },
        ModelSchema {
            name: "dirac_network",
            description: "1D Dirac equation on two parallel edges with continuity of the first spinor component and a dynamic Kirchhoff-type law",
            parameters: json!({
                "c": "speed, > 0; default 1",
                "mass": ">= 0; default 1",
                "hbar": "> 0; default 1",
                "theta": "vertex phase rate; C^(1) = i*theta*I; default 0",
            }),
        },
    ]
}

fn r(x: f64) -> c64 {
    c64::new(x, 0.0)
}

fn im(x: f64) -> c64 {
    c64::new(0.0, x)
}

fn get_f64(params: &Value, key: &str, default: f64) -> f64 {
    params.get(key).and_then(Value::as_f64).unwrap_or(default)
}

fn require_positive(name: &str, value: f64) -> Result<f64, ModelError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(ModelError::InvalidParameter {
            name: name.to_string(),
            constraint: "must be a positive finite number".to_string(),
        })
    }
}

pub fn instantiate(name: &str, params: &Value) -> Result<ModelPreset, ModelError> {
    match name {
        "transport" => transport(params),
        "maxwell_two_intervals" => maxwell_two_intervals(params),
        "telegrapher_y" => telegrapher_y(params),
        "second_sound" => second_sound(params),
        "wave_star" => wave_star(params),
        "dirac_network" => dirac_network(params),
        other => Err(ModelError::UnknownModel(other.to_string())),
    }
}

/// Transport network in the global boundary formalism. Each vertex stores one
/// dynamic value fed by the outflow sums of its outgoing edges; inflow traces
/// are tied to that value through the junction weights. The source convention
/// places the inflow condition at the coordinate-1 endpoint; remapped to this
/// crate's layout the inflow end is the terminal endpoint and the velocities
/// enter with a positive sign.
fn transport(params: &Value) -> Result<ModelPreset, ModelError> {
    let edges_spec: Vec<(usize, usize)> = match params.get("edges") {
        None => vec![(0, 1), (1, 0)],
        Some(v) => v
            .as_array()
            .ok_or_else(|| ModelError::InvalidParameter {
                name: "edges".into(),
                constraint: "must be a list of [tail, head] pairs".into(),
            })?
            .iter()
            .map(|pair| {
                let arr = pair.as_array().filter(|a| a.len() == 2);
                arr.and_then(|a| {
                    Some((a[0].as_u64()? as usize, a[1].as_u64()? as usize))
                })
                .ok_or_else(|| ModelError::InvalidParameter {
                    name: "edges".into(),
                    constraint: "each entry must be [tail, head] indices".into(),
                })
            })
            .collect::<Result<_, _>>()?,
    };
    let nv = edges_spec
        .iter()
        .map(|&(t, h)| t.max(h) + 1)
        .max()
        .unwrap_or(0);
    let ne = edges_spec.len();
    let velocities: Vec<f64> = match params.get("velocities") {
        None => vec![1.0; ne],
        Some(v) => v
            .as_array()
            .map(|a| a.iter().filter_map(Value::as_f64).collect())
            .unwrap_or_default(),
    };
    if velocities.len() != ne || velocities.iter().any(|&c| !(c > 0.0)) {
        return Err(ModelError::InvalidParameter {
            name: "velocities".into(),
            constraint: "one positive speed per edge".into(),
        });
    }
    let c_matrix: Vec<Vec<f64>> = match params.get("c_matrix") {
        None => {
            let mut m = vec![vec![0.0; nv]; nv];
            for (i, row) in m.iter_mut().enumerate() {
                for (j, entry) in row.iter_mut().enumerate() {
                    *entry = if i == j { -1.5 } else { 0.25 / (nv - 1).max(1) as f64 };
                }
            }
            m
        }
        Some(v) => serde_json::from_value(v.clone()).map_err(|_| ModelError::InvalidParameter {
            name: "c_matrix".into(),
            constraint: "must be a |V|x|V| real matrix".into(),
        })?,
    };
    if c_matrix.len() != nv || c_matrix.iter().any(|row| row.len() != nv) {
        return Err(ModelError::InvalidParameter {
            name: "c_matrix".into(),
            constraint: format!("must be {nv}x{nv}"),
        });
    }

    let vertices: Vec<String> = (0..nv).map(|i| format!("v{i}")).collect();
    let specs: Vec<EdgeSpec> = edges_spec
        .iter()
        .enumerate()
        .map(|(i, &(t, h))| EdgeSpec {
            id: format!("e{i}"),
            tail: format!("v{t}"),
            head: format!("v{h}"),
            length: 1.0,
            fiber_dim: 1,
        })
        .collect();
    let graph = MetricGraph::build(vertices, specs)?;
    if graph.has_sink_or_source() {
        return Err(ModelError::InvalidParameter {
            name: "edges".into(),
            constraint: "graph must contain neither sinks nor sources".into(),
        });
    }

    let coeffs: Vec<EdgeCoefficients> = velocities
        .iter()
        .map(|&c| {
            EdgeCoefficients::constant(array![[r(c)]], czeros(1, 1), ceye(1))
        })
        .collect();

    // junction weights: uniform split over the incoming edges of each vertex
    let k = graph.k();
    let mut omega = vec![0.0f64; ne];
    for v in 0..nv {
        let incoming: Vec<usize> = (0..ne).filter(|&e| graph.edge(e).head == v).collect();
        for &e in &incoming {
            omega[e] = 1.0 / incoming.len() as f64;
        }
    }
    // a_v: terminal-block weight pattern of vertex v (ambient in C^{2k})
    let a_vec = |v: usize| -> CVec {
        let mut a = CVec::zeros(2 * k);
        for e in 0..ne {
            if graph.edge(e).head == v {
                a[k + graph.edge_offset(e)] = r(omega[e]);
            }
        }
        a
    };
    let a_norm: Vec<f64> = (0..nv)
        .map(|v| {
            let a = a_vec(v);
            crate::linalg::dot(&a, &a).re.sqrt()
        })
        .collect();

    // Y = (initial block free) ⊕ span{a_v}; Y^(d) = span{a_v}
    let mut y_cols = czeros(2 * k, k + nv);
    for i in 0..k {
        y_cols[[i, i]] = r(1.0);
    }
    for v in 0..nv {
        let a = a_vec(v);
        for i in 0..2 * k {
            y_cols[[i, k + v]] = a[i] / r(a_norm[v]);
        }
    }
    let mut yd_cols = czeros(2 * k, nv);
    for v in 0..nv {
        let a = a_vec(v);
        for i in 0..2 * k {
            yd_cols[[i, v]] = a[i] / r(a_norm[v]);
        }
    }

    // B: dynamic value of v integrates the outflow sum of its outgoing edges
    let mut b = czeros(2 * k, 2 * k);
    for ep in 0..ne {
        let v = graph.edge(ep).head;
        for e in 0..ne {
            if graph.edge(e).tail == v {
                b[[k + graph.edge_offset(ep), graph.edge_offset(e)]] = r(omega[ep]);
            }
        }
    }
    // C: inter-vertex coupling of the dynamic values
    let mut c_amb = czeros(2 * k, 2 * k);
    for v in 0..nv {
        for w in 0..nv {
            let cvw = c_matrix[v][w];
            if cvw == 0.0 {
                continue;
            }
            for ep in 0..ne {
                if graph.edge(ep).head != v {
                    continue;
                }
                for eq in 0..ne {
                    if graph.edge(eq).head != w {
                        continue;
                    }
                    c_amb[[k + graph.edge_offset(ep), k + graph.edge_offset(eq)]] +=
                        r(cvw * omega[ep] * omega[eq] / (a_norm[w] * a_norm[w]));
                }
            }
        }
    }
    let q_amb = projector(&yd_cols);

    let tol = Tolerances::default();
    let (vc, _warn) = VertexCondition::new(
        "global",
        2 * k,
        &y_cols,
        &yd_cols,
        Some(&b),
        Some(&c_amb),
        Some(&q_amb),
        &tol,
    )?;
    let system = HyperbolicSystem::new(graph, coeffs, Conditions::Global(vc), tol)?;
    let resolved = json!({
        "edges": edges_spec.iter().map(|&(t, h)| vec![t, h]).collect::<Vec<_>>(),
        "velocities": velocities,
        "c_matrix": c_matrix,
        "omega": omega,
    });
    Ok(ModelPreset {
        name: "transport".into(),
        params: resolved,
        system,
        expected: ExpectedClassification {
            verdict: Verdict::ContractiveSemigroup,
            route: Route::Basis,
            basis_holds: true,
        },
    })
}

/// Two adjacent unit intervals carrying the 1D Maxwell system, electric
/// condition on the left end, magnetic on the right, continuity of `p` at the
/// center plus the dynamic law `d/dt p(0) = q₂(0) − q₁(0)`.
fn maxwell_two_intervals(_params: &Value) -> Result<ModelPreset, ModelError> {
    let graph = MetricGraph::build(
        vec!["v-1".into(), "v0".into(), "v1".into()],
        vec![
            EdgeSpec {
                id: "e1".into(),
                tail: "v-1".into(),
                head: "v0".into(),
                length: 1.0,
                fiber_dim: 2,
            },
            EdgeSpec {
                id: "e2".into(),
                tail: "v0".into(),
                head: "v1".into(),
                length: 1.0,
                fiber_dim: 2,
            },
        ],
    )?;
    let m = array![[r(0.0), r(1.0)], [r(1.0), r(0.0)]];
    let coeff = || EdgeCoefficients::constant(m.clone(), czeros(2, 2), ceye(2));
    let tol = Tolerances::default();

    // outer vertices: p(-1) = 0 and q(1) = 0
    let vc_left = VertexCondition::stationary("v-1", 2, &array![[r(0.0)], [r(1.0)]], &tol)?;
    let vc_right = VertexCondition::stationary("v1", 2, &array![[r(1.0)], [r(0.0)]], &tol)?;

    // center: trace (p1, q1, p2, q2); Y = {p1 = p2}, Yd = span{(1,0,1,0)}
    let y_cols = array![
        [r(1.0), r(0.0), r(0.0)],
        [r(0.0), r(1.0), r(0.0)],
        [r(1.0), r(0.0), r(0.0)],
        [r(0.0), r(0.0), r(1.0)]
    ];
    let yd_cols = array![[r(1.0)], [r(0.0)], [r(1.0)], [r(0.0)]];
    let b = array![
        [r(0.0), r(-1.0), r(0.0), r(1.0)],
        [r(0.0), r(0.0), r(0.0), r(0.0)],
        [r(0.0), r(-1.0), r(0.0), r(1.0)],
        [r(0.0), r(0.0), r(0.0), r(0.0)]
    ];
    // scalar weight 1 on the coefficient of (1,0,1,0)ᵀ: ambient ½ P^(d)
    let q = projector(&crate::linalg::orthonormal_span(&yd_cols, 1e-12)).mapv(|z| z * 0.5);
    let (vc_center, _) = VertexCondition::new(
        "v0",
        4,
        &y_cols,
        &yd_cols,
        Some(&b),
        None,
        Some(&q),
        &tol,
    )?;

    let system = HyperbolicSystem::new(
        graph,
        vec![coeff(), coeff()],
        Conditions::PerVertex(vec![vc_left, vc_center, vc_right]),
        tol,
    )?;
    Ok(ModelPreset {
        name: "maxwell_two_intervals".into(),
        params: json!({}),
        system,
        expected: ExpectedClassification {
            verdict: Verdict::UnitaryGroup,
            route: Route::Basis,
            basis_holds: true,
        },
    })
}

/// Telegrapher's equations on a Y-network: three unit edges leaving the common
/// vertex, improved Kirchhoff condition there, shorted/open outer ends.
fn telegrapher_y(params: &Value) -> Result<ModelPreset, ModelError> {
    let p = require_positive("p", get_f64(params, "p", 1.0))?;
    let l = require_positive("l", get_f64(params, "l", 1.0))?;
    let l_matrix: Vec<Vec<f64>> = match params.get("l_matrix") {
        None => vec![vec![2.0, 1.0], vec![1.0, 2.0]],
        Some(v) => serde_json::from_value(v.clone()).map_err(|_| ModelError::InvalidParameter {
            name: "l_matrix".into(),
            constraint: "must be a 2x2 real matrix".into(),
        })?,
    };
    if l_matrix.len() != 2
        || l_matrix[0].len() != 2
        || (l_matrix[0][1] - l_matrix[1][0]).abs() > 1e-12
        || l_matrix[0][0] <= 0.0
        || l_matrix[0][0] * l_matrix[1][1] - l_matrix[0][1] * l_matrix[1][0] <= 0.0
    {
        return Err(ModelError::InvalidParameter {
            name: "l_matrix".into(),
            constraint: "must be symmetric positive definite".into(),
        });
    }
    let det = l_matrix[0][0] * l_matrix[1][1] - l_matrix[0][1] * l_matrix[1][0];
    // inverse entries a_ij of the junction inductance
    let a11 = l_matrix[1][1] / det;
    let a12 = -l_matrix[0][1] / det;
    let a22 = l_matrix[0][0] / det;

    let graph = MetricGraph::build(
        vec!["v1".into(), "v2".into(), "v3".into(), "v4".into()],
        vec![
            EdgeSpec {
                id: "e0".into(),
                tail: "v1".into(),
                head: "v2".into(),
                length: 1.0,
                fiber_dim: 2,
            },
            EdgeSpec {
                id: "e1".into(),
                tail: "v1".into(),
                head: "v3".into(),
                length: 1.0,
                fiber_dim: 2,
            },
            EdgeSpec {
                id: "e2".into(),
                tail: "v1".into(),
                head: "v4".into(),
                length: 1.0,
                fiber_dim: 2,
            },
        ],
    )?;
    // per-edge unknowns (V, I): M = -[[0, L],[P, 0]], Q = diag(P, L)
    let m = array![[r(0.0), r(-l)], [r(-p), r(0.0)]];
    let q_e = array![[r(p), r(0.0)], [r(0.0), r(l)]];
    let coeff = || EdgeCoefficients::constant(m.clone(), czeros(2, 2), q_e.clone());
    let tol = Tolerances::default();

    // junction trace layout: (V0, I0, V1, I1, V2, I2)
    const V0: usize = 0;
    const I0: usize = 1;
    const V1: usize = 2;
    const I1: usize = 3;
    const V2: usize = 4;
    const I2: usize = 5;
    let y_cols = ceye(6);
    let mut yd_cols = czeros(6, 3);
    yd_cols[[I1, 0]] = r(1.0);
    yd_cols[[I2, 1]] = r(1.0);
    yd_cols[[V0, 2]] = r(1.0);
    let mut b = czeros(6, 6);
    // L jk dI_k/dt = V0 - V_j  =>  dI_j/dt = Σ a_jk (V0 - V_k)
    b[[I1, V1]] = r(-a11);
    b[[I1, V2]] = r(-a12);
    b[[I1, V0]] = r(a11 + a12);
    b[[I2, V1]] = r(-a12);
    b[[I2, V2]] = r(-a22);
    b[[I2, V0]] = r(a12 + a22);
    // dV0/dt = -(I0 + I1 + I2)
    b[[V0, I0]] = r(-1.0);
    b[[V0, I1]] = r(-1.0);
    b[[V0, I2]] = r(-1.0);
    // Q = P*L*diag(Lmat, 1) on the (I1, I2, V0) coordinates
    let mut q_v = czeros(6, 6);
    q_v[[I1, I1]] = r(p * l * l_matrix[0][0]);
    q_v[[I1, I2]] = r(p * l * l_matrix[0][1]);
    q_v[[I2, I1]] = r(p * l * l_matrix[1][0]);
    q_v[[I2, I2]] = r(p * l * l_matrix[1][1]);
    q_v[[V0, V0]] = r(p * l);
    let (vc_junction, _) =
        VertexCondition::new("v1", 6, &y_cols, &yd_cols, Some(&b), None, Some(&q_v), &tol)?;

    // outer ends: I0(1) = 0 on e0; V(1) = 0 on e1, e2
    let vc_i0 = VertexCondition::stationary("v2", 2, &array![[r(1.0)], [r(0.0)]], &tol)?;
    let vc_v = |label: &str| {
        VertexCondition::stationary(label, 2, &array![[r(0.0)], [r(1.0)]], &tol)
    };
    let system = HyperbolicSystem::new(
        graph,
        vec![coeff(), coeff(), coeff()],
        Conditions::PerVertex(vec![vc_junction, vc_i0, vc_v("v3")?, vc_v("v4")?]),
        tol,
    )?;
    Ok(ModelPreset {
        name: "telegrapher_y".into(),
        params: json!({"p": p, "l": l, "l_matrix": l_matrix}),
        system,
        expected: ExpectedClassification {
            verdict: Verdict::UnitaryGroup,
            route: Route::Adjoint,
            basis_holds: false,
        },
    })
}

/// Second sound on an interval: unknowns `(z', ż, θ, q)`; stationary traction
/// and Dirichlet conditions plus the dynamic heat-flux law `q̇(0) = −q(0)/τ₀`.
fn second_sound(params: &Value) -> Result<ModelPreset, ModelError> {
    let alpha = require_positive("alpha", get_f64(params, "alpha", 1.0))?;
    let beta = require_positive("beta", get_f64(params, "beta", 1.0))?;
    let gamma = require_positive("gamma", get_f64(params, "gamma", 1.0))?;
    let delta = require_positive("delta", get_f64(params, "delta", 1.0))?;
    let tau0 = require_positive("tau0", get_f64(params, "tau0", 1.0))?;
    let kappa = require_positive("kappa", get_f64(params, "kappa", 1.0))?;
    let length = require_positive("length", get_f64(params, "length", 1.0))?;

    let graph = MetricGraph::build(
        vec!["v1".into(), "v2".into()],
        vec![EdgeSpec {
            id: "e".into(),
            tail: "v1".into(),
            head: "v2".into(),
            length,
            fiber_dim: 4,
        }],
    )?;
    let m = array![
        [r(0.0), r(1.0), r(0.0), r(0.0)],
        [r(alpha), r(0.0), r(-beta), r(0.0)],
        [r(0.0), r(-delta), r(0.0), r(-gamma)],
        [r(0.0), r(0.0), r(-kappa / tau0), r(0.0)]
    ];
    let q_e = array![
        [r(alpha * delta), r(0.0), r(0.0), r(0.0)],
        [r(0.0), r(delta), r(0.0), r(0.0)],
        [r(0.0), r(0.0), r(beta), r(0.0)],
        [r(0.0), r(0.0), r(0.0), r(beta * gamma * tau0 / kappa)]
    ];
    let mut n = czeros(4, 4);
    n[[3, 3]] = r(-1.0 / tau0);
    let coeff = EdgeCoefficients::constant(m, n, q_e);
    let tol = Tolerances::default();

    // v1 (x = 0): α z'(0) = β θ(0) stationary, q dynamic
    let y1 = array![
        [r(beta / alpha), r(0.0), r(0.0)],
        [r(0.0), r(1.0), r(0.0)],
        [r(1.0), r(0.0), r(0.0)],
        [r(0.0), r(0.0), r(1.0)]
    ];
    let mut yd1 = czeros(4, 1);
    yd1[[3, 0]] = r(1.0);
    let mut c1 = czeros(4, 4);
    c1[[3, 3]] = r(-1.0 / tau0);
    let mut q1 = czeros(4, 4);
    q1[[3, 3]] = r(tau0 * beta);
    let (vc1, _) = VertexCondition::new("v1", 4, &y1, &yd1, None, Some(&c1), Some(&q1), &tol)?;

    // v2 (x = ℓ): ż(ℓ) = θ(ℓ) = 0
    let y2 = array![
        [r(1.0), r(0.0)],
        [r(0.0), r(0.0)],
        [r(0.0), r(0.0)],
        [r(0.0), r(1.0)]
    ];
    let vc2 = VertexCondition::stationary("v2", 4, &y2, &tol)?;

    let system = HyperbolicSystem::new(
        graph,
        vec![coeff],
        Conditions::PerVertex(vec![vc1, vc2]),
        tol,
    )?;
    Ok(ModelPreset {
        name: "second_sound".into(),
        params: json!({
            "alpha": alpha, "beta": beta, "gamma": gamma,
            "delta": delta, "tau0": tau0, "kappa": kappa, "length": length
        }),
        system,
        expected: ExpectedClassification {
            verdict: Verdict::Semigroup,
            route: Route::Adjoint,
            basis_holds: true,
        },
    })
}

/// Wave star with a point mass: `J` unit edges, edge 1 incoming, the others
/// outgoing; state `(u', u̇)` per edge; continuity of `u̇` at the center and
/// the point-mass law `δ ü = −Σ ι u'`. Outer ends: edge 1 clamped, the rest
/// free (Neumann).
fn wave_star(params: &Value) -> Result<ModelPreset, ModelError> {
    let j = params.get("j").and_then(Value::as_u64).unwrap_or(3) as usize;
    if j < 2 {
        return Err(ModelError::InvalidParameter {
            name: "j".into(),
            constraint: "stars need J >= 2 edges".into(),
        });
    }
    let delta = require_positive("delta", get_f64(params, "delta", 1.0))?;
    let alpha = get_f64(params, "alpha", 0.0);
    let beta = get_f64(params, "beta", -0.3);
    let gamma = get_f64(params, "gamma", 0.0);

    let mut vertices = vec!["v0".to_string()];
    vertices.extend((1..=j).map(|i| format!("v{i}")));
    let mut specs = vec![EdgeSpec {
        id: "e1".into(),
        tail: "v1".into(),
        head: "v0".into(),
        length: 1.0,
        fiber_dim: 2,
    }];
    specs.extend((2..=j).map(|i| EdgeSpec {
        id: format!("e{i}"),
        tail: "v0".into(),
        head: format!("v{i}"),
        length: 1.0,
        fiber_dim: 2,
    }));
    let graph = MetricGraph::build(vertices, specs)?;

    let m = array![[r(0.0), r(1.0)], [r(1.0), r(alpha)]];
    let n = array![[r(0.0), r(0.0)], [r(gamma), r(beta)]];
    let coeff = || EdgeCoefficients::constant(m.clone(), n.clone(), ceye(2));
    let tol = Tolerances::default();

    // center: trace (u'_1, u̇_1, ..., u'_J, u̇_J); continuity of u̇
    let kv = 2 * j;
    let mut y_cols = czeros(kv, j + 1);
    for e in 0..j {
        y_cols[[2 * e, e]] = r(1.0); // u' free per edge
    }
    for e in 0..j {
        y_cols[[2 * e + 1, j]] = r(1.0 / (j as f64).sqrt()); // common u̇
    }
    let mut yd_cols = czeros(kv, 1);
    for e in 0..j {
        yd_cols[[2 * e + 1, 0]] = r(1.0 / (j as f64).sqrt());
    }
    // point-mass law: each u̇-slot row integrates −(1/δ) Σ ι_e u'_e
    let mut b = czeros(kv, kv);
    for ep in 0..j {
        for e in 0..j {
            let iota = graph.iota(0, e);
            b[[2 * ep + 1, 2 * e]] = r(-iota / delta);
        }
    }
    // scalar weight δ against the all-ones u̇-pattern: ambient (δ/J) P^(d)
    let q = projector(&yd_cols).mapv(|z| z * (delta / j as f64));
    let (vc_center, _) =
        VertexCondition::new("v0", kv, &y_cols, &yd_cols, Some(&b), None, Some(&q), &tol)?;

    // outer: clamped (u̇ = 0) on edge 1, free (u' = 0) on the others
    let mut conditions = vec![vc_center];
    conditions.push(VertexCondition::stationary(
        "v1",
        2,
        &array![[r(1.0)], [r(0.0)]],
        &tol,
    )?);
    for i in 2..=j {
        conditions.push(VertexCondition::stationary(
            &format!("v{i}"),
            2,
            &array![[r(0.0)], [r(1.0)]],
            &tol,
        )?);
    }
    let system = HyperbolicSystem::new(
        graph,
        (0..j).map(|_| coeff()).collect(),
        Conditions::PerVertex(conditions),
        tol,
    )?;
    Ok(ModelPreset {
        name: "wave_star".into(),
        params: json!({"j": j, "delta": delta, "alpha": alpha, "beta": beta, "gamma": gamma}),
        system,
        expected: ExpectedClassification {
            verdict: Verdict::Group,
            route: Route::Basis,
            basis_holds: true,
        },
    })
}

/// Dirac equation on two parallel edges: continuity of the first spinor
/// component at both vertices, dynamic Kirchhoff-type law driven by the second
/// component, skew-Hermitian vertex phase `C^(1) = iθ`.
fn dirac_network(params: &Value) -> Result<ModelPreset, ModelError> {
    let c = require_positive("c", get_f64(params, "c", 1.0))?;
    let mass = get_f64(params, "mass", 1.0);
    if mass < 0.0 {
        return Err(ModelError::InvalidParameter {
            name: "mass".into(),
            constraint: "must be nonnegative".into(),
        });
    }
    let hbar = require_positive("hbar", get_f64(params, "hbar", 1.0))?;
    let theta = get_f64(params, "theta", 0.0);

    let graph = MetricGraph::build(
        vec!["v1".into(), "v2".into()],
        vec![
            EdgeSpec {
                id: "e1".into(),
                tail: "v1".into(),
                head: "v2".into(),
                length: 1.0,
                fiber_dim: 2,
            },
            EdgeSpec {
                id: "e2".into(),
                tail: "v1".into(),
                head: "v2".into(),
                length: 1.0,
                fiber_dim: 2,
            },
        ],
    )?;
    let m = array![[r(0.0), im(c)], [im(-c), r(0.0)]];
    let rate = mass * c * c / hbar;
    let n = array![[im(-rate), r(0.0)], [r(0.0), im(rate)]];
    let coeff = || EdgeCoefficients::constant(m.clone(), n.clone(), ceye(2));
    let tol = Tolerances::default();

    // trace (ψ¹_1, ψ²_1, ψ¹_2, ψ²_2); Y = {ψ¹ continuous}, Yd = span{(1,0,1,0)}
    let s = 1.0 / 2.0f64.sqrt();
    let y_cols = array![
        [r(s), r(0.0), r(0.0)],
        [r(0.0), r(1.0), r(0.0)],
        [r(s), r(0.0), r(0.0)],
        [r(0.0), r(0.0), r(1.0)]
    ];
    let yd_cols = array![[r(s)], [r(0.0)], [r(s)], [r(0.0)]];
    let make_vc = |label: &str, iota: f64| -> Result<VertexCondition, ModelError> {
        // B γ = −i (Σ_e ι_{ve} ψ²_e) (1,0,1,0)ᵀ; both edges carry the same
        // incidence sign at each vertex of the parallel pair
        let mut b = czeros(4, 4);
        for e in 0..2 {
            b[[0, 2 * e + 1]] = im(-iota);
            b[[2, 2 * e + 1]] = im(-iota);
        }
        // C = iθ on Y^(d); Q = c with respect to the printed (1,0,1,0)ᵀ
        // basis, i.e. ambient (c/2) P^(d)
        let p_d = projector(&yd_cols);
        let c_amb = p_d.mapv(|z| z * im(theta));
        let q = p_d.mapv(|z| z * (c / 2.0));
        let (vc, _) = VertexCondition::new(
            label,
            4,
            &y_cols,
            &yd_cols,
            Some(&b),
            Some(&c_amb),
            Some(&q),
            &tol,
        )?;
        Ok(vc)
    };
    let conditions = Conditions::PerVertex(vec![make_vc("v1", -1.0)?, make_vc("v2", 1.0)?]);
    let system = HyperbolicSystem::new(graph, vec![coeff(), coeff()], conditions, tol)?;
    Ok(ModelPreset {
        name: "dirac_network".into(),
        params: json!({"c": c, "mass": mass, "hbar": hbar, "theta": theta}),
        system,
        expected: ExpectedClassification {
            verdict: Verdict::UnitaryGroup,
            route: Route::Adjoint,
            basis_holds: false,
        },
    })
}
