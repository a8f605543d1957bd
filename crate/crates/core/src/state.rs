//! Sampled states of the coupled system: per-edge grid functions plus the
//! boundary vector, with helpers for traces and domain-membership residuals.

use crate::linalg::{dot, projector, CVec};
use crate::spline::CubicSpline;
use crate::system::{HyperbolicSystem, Site};
use crate::graph::End;
use ndarray::{Array1, Array2};
use ndarray_linalg::{c64, Scalar};
use rand::Rng;

/// A state of the coupled system on a known grid: `edge_values[e]` holds the
/// `k_e`-vector at the `n_e + 1` uniform nodes of edge `e` (row per node), and
/// `boundary[s]` the ambient dynamic vector `x_s ∈ Y^(d)` of each site.
#[derive(Debug, Clone)]
pub struct StateVector {
    pub edge_values: Vec<Array2<c64>>,
    pub edge_derivs: Option<Vec<Array2<c64>>>,
    pub boundary: Vec<CVec>,
}

impl StateVector {
    pub fn zero(sys: &HyperbolicSystem, n_cells: &[usize]) -> Self {
        let edge_values = (0..sys.graph.edge_count())
            .map(|e| Array2::zeros((n_cells[e] + 1, sys.graph.edge(e).fiber_dim)))
            .collect();
        let boundary = sys
            .sites()
            .iter()
            .map(|s| CVec::zeros(s.dim()))
            .collect();
        Self {
            edge_values,
            edge_derivs: None,
            boundary,
        }
    }

    pub fn n_cells(&self) -> Vec<usize> {
        self.edge_values.iter().map(|v| v.nrows() - 1).collect()
    }
}

/// Stack the endpoint values of a site's incident edges into its trace vector.
pub fn site_trace(_sys: &HyperbolicSystem, site: &Site, edge_values: &[Array2<c64>]) -> CVec {
    let mut out = CVec::zeros(site.dim());
    for (i, coord) in site.coords.iter().enumerate() {
        let vals = &edge_values[coord.edge];
        let row = match coord.end {
            End::Initial => 0,
            End::Terminal => vals.nrows() - 1,
        };
        out[i] = vals[[row, coord.comp]];
    }
    out
}

/// Worst violation of the domain constraints `γ_s(u) ∈ Y_s` and
/// `x_s = P^(d) γ_s(u)` over all sites (absolute, scaled by the state norm).
pub fn domain_residual(sys: &HyperbolicSystem, state: &StateVector) -> f64 {
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 1.0;
    for (si, site) in sys.sites().iter().enumerate() {
        let vc = sys.condition(site);
        let gamma = site_trace(sys, site, &state.edge_values);
        scale = scale.max(dot(&gamma, &gamma).re().sqrt());
        let p_y = projector(&vc.y);
        let off_y = &gamma - &p_y.dot(&gamma);
        worst = worst.max(dot(&off_y, &off_y).re().sqrt());
        let p_d = projector(&vc.yd);
        let diff = &state.boundary[si] - &p_d.dot(&gamma);
        worst = worst.max(dot(&diff, &diff).re().sqrt());
    }
    worst / scale
}

/// Smooth random state in the operator domain: spline data per edge with the
/// endpoint values drawn from the admissible trace spaces, `x = P^(d) γ`.
/// Derivative samples are taken from the interpolating spline.
pub fn random_domain_state(
    sys: &HyperbolicSystem,
    n_cells: &[usize],
    rng: &mut impl Rng,
) -> StateVector {
    let sites = sys.sites();
    // draw admissible traces first
    let mut traces: Vec<CVec> = Vec::with_capacity(sites.len());
    for site in &sites {
        let vc = sys.condition(site);
        let coeffs: CVec = (0..vc.dim_y())
            .map(|_| c64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        traces.push(vc.y.dot(&coeffs));
    }
    // per-edge smooth data through a handful of control values
    let mut edge_values = Vec::new();
    let mut edge_derivs = Vec::new();
    for (ei, edge) in sys.graph.edges().iter().enumerate() {
        let n = n_cells[ei];
        let ke = edge.fiber_dim;
        let h = edge.length / n as f64;
        let mut vals = Array2::zeros((n + 1, ke));
        let mut ders = Array2::zeros((n + 1, ke));
        for comp in 0..ke {
            // coarse control polygon, then endpoint overrides from the traces
            let n_ctrl = 5;
            let ctrl: CVec = (0..=n_ctrl)
                .map(|_| c64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let coarse = CubicSpline::natural(&ctrl, edge.length / n_ctrl as f64);
            let mut nodal: CVec = Array1::from_iter((0..=n).map(|i| coarse.eval(i as f64 * h)));
            for (si, site) in sites.iter().enumerate() {
                for (pos, coord) in site.coords.iter().enumerate() {
                    if coord.edge == ei && coord.comp == comp {
                        let row = match coord.end {
                            End::Initial => 0,
                            End::Terminal => n,
                        };
                        nodal[row] = traces[si][pos];
                    }
                }
            }
            let fine = CubicSpline::natural(&nodal, h);
            for i in 0..=n {
                vals[[i, comp]] = nodal[i];
                ders[[i, comp]] = fine.deriv(i as f64 * h);
            }
        }
        edge_values.push(vals);
        edge_derivs.push(ders);
    }
    let boundary = sites
        .iter()
        .enumerate()
        .map(|(si, site)| {
            let p_d = projector(&sys.condition(site).yd);
            p_d.dot(&traces[si])
        })
        .collect();
    StateVector {
        edge_values,
        edge_derivs: Some(edge_derivs),
        boundary,
    }
}

/// Project arbitrary samples onto the domain: traces moved into `Y_s`,
/// boundary vector reset to `P^(d) γ`. Returns the projected state and the
/// size of the correction.
pub fn project_to_domain(sys: &HyperbolicSystem, state: &StateVector) -> (StateVector, f64) {
    let mut out = state.clone();
    out.edge_derivs = None;
    let mut correction: f64 = 0.0;
    let sites = sys.sites();
    for (si, site) in sites.iter().enumerate() {
        let vc = sys.condition(site);
        let gamma = site_trace(sys, site, &state.edge_values);
        let p_y = projector(&vc.y);
        let fixed = p_y.dot(&gamma);
        let delta = &fixed - &gamma;
        correction = correction.max(dot(&delta, &delta).re().sqrt());
        for (i, coord) in site.coords.iter().enumerate() {
            let vals = &mut out.edge_values[coord.edge];
            let row = match coord.end {
                End::Initial => 0,
                End::Terminal => vals.nrows() - 1,
            };
            vals[[row, coord.comp]] = fixed[i];
        }
        let p_d = projector(&vc.yd);
        let x_new = p_d.dot(&fixed);
        let dx = &x_new - &state.boundary[si];
        correction = correction.max(dot(&dx, &dx).re().sqrt());
        out.boundary[si] = x_new;
    }
    (out, correction)
}

/// d-inner product of two states on the same grid (trapezoid in space).
pub fn inner_product_d(sys: &HyperbolicSystem, a: &StateVector, b: &StateVector) -> c64 {
    let mut acc = c64::new(0.0, 0.0);
    for (ei, edge) in sys.graph.edges().iter().enumerate() {
        let va = &a.edge_values[ei];
        let vb = &b.edge_values[ei];
        let n = va.nrows() - 1;
        let h = edge.length / n as f64;
        for i in 0..=n {
            let w = if i == 0 || i == n { 0.5 * h } else { h };
            let t = i as f64 / n as f64;
            let q = sys.coefficients[ei].q.eval(t);
            let ua = va.row(i).to_owned();
            let ub = vb.row(i).to_owned();
            acc += dot(&q.dot(&ua), &ub) * w;
        }
    }
    for (si, site) in sys.sites().iter().enumerate() {
        let vc = sys.condition(site);
        acc += dot(&vc.q.dot(&a.boundary[si]), &b.boundary[si]);
    }
    acc
}

/// Weighted norm `‖·‖_d`.
pub fn norm_d(sys: &HyperbolicSystem, state: &StateVector) -> f64 {
    inner_product_d(sys, state, state).re().max(0.0).sqrt()
}
