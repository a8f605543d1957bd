//! Exact solution of the stationary boundary problem
//! `M_e u'_e = f_e`, `B_v γ_v(u) − P^{(d,0)}_v x_v = g_v`, `γ_v(u) ∈ Y_v`,
//! by the constructive reduction to a `k×k` linear system in the edgewise
//! constants `K_e`, plus the application of the full operator to a state.

use crate::linalg::{cond2, czeros, dot, projector, CMat, CVec};
use crate::spline::CubicSpline;
use crate::state::{site_trace, StateVector};
use crate::system::HyperbolicSystem;
use crate::wellposed::{build_wv, projectors};
use ndarray::{Array1, Array2, Axis};
use ndarray_linalg::{c64, Inverse, Scalar, Solve};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ResolventError {
    #[error("boundary system is singular: {0}")]
    SingularBoundarySystem(String),
    #[error("edge {edge}: right-hand side has {got} sample rows, expected {expected}")]
    GridMismatch {
        edge: String,
        got: usize,
        expected: usize,
    },
    #[error("state violates the operator domain (residual {residual:.3e} > {tol:.3e})")]
    DomainViolation { residual: f64, tol: f64 },
    #[error("internal residual {residual:.3e} exceeds tol_res {tol:.3e}")]
    ResidualCheckFailed { residual: f64, tol: f64 },
}

/// The `k×k` boundary matrix whose rows are the conjugated extensions of the
/// spanning vectors `W_v`, with bookkeeping for right-hand-side assembly.
#[derive(Debug, Clone)]
pub struct BoundaryProblem {
    pub matrix: CMat,
    pub cond: f64,
    rows: Vec<RowKind>,
}

#[derive(Debug, Clone)]
enum RowKind {
    /// `γ ∈ Y` test row: site index, trace-space vector
    YPerp { site: usize, w: CVec },
    /// `Ran B` test row: site, `w = B* y_j`, and the `Ran B` basis vector `y_j`
    RanBstar { site: usize, w: CVec, y: CVec },
    /// `Ker B*` test row: site, vector inside `Ker B* ∩ Y^(d)`
    KerBstar { site: usize, w: CVec },
}

/// Assemble the boundary problem. The matrix is square iff `Σ_v |W_v| = k`.
pub fn boundary_problem(sys: &HyperbolicSystem) -> BoundaryProblem {
    let k = sys.graph.k();
    let sites = sys.sites();
    let mut rows = Vec::new();
    for (si, site) in sites.iter().enumerate() {
        let wv = build_wv(sys, site);
        let mut col = 0;
        for _ in 0..wv.dim_y_perp {
            rows.push(RowKind::YPerp {
                site: si,
                w: wv.vectors.column(col).to_owned(),
            });
            col += 1;
        }
        // the Ran B basis used to form w = B* y
        let ran_b = crate::linalg::orthonormal_span(&sys.condition(site).b, sys.tol.rank);
        for j in 0..wv.dim_ran_bstar {
            rows.push(RowKind::RanBstar {
                site: si,
                w: wv.vectors.column(col).to_owned(),
                y: ran_b.column(j).to_owned(),
            });
            col += 1;
        }
        for _ in 0..wv.dim_ker_bstar {
            rows.push(RowKind::KerBstar {
                site: si,
                w: wv.vectors.column(col).to_owned(),
            });
            col += 1;
        }
    }
    let mut matrix = czeros(rows.len(), k);
    for (ri, row) in rows.iter().enumerate() {
        let (si, w) = match row {
            RowKind::YPerp { site, w }
            | RowKind::RanBstar { site, w, .. }
            | RowKind::KerBstar { site, w } => (*site, w),
        };
        let ext = sys.extend_to_k(&sites[si], w);
        for j in 0..k {
            matrix[[ri, j]] = ext[j].conj();
        }
    }
    let cond = if matrix.nrows() == k {
        cond2(&matrix)
    } else {
        f64::INFINITY
    };
    BoundaryProblem { matrix, cond, rows }
}

/// Solve `𝔸₀ (u, x)ᵀ = (f, g)ᵀ` where `𝔸₀` is the operator with `N = 0` and
/// `C = −P^{(d,0)}`. `f` is sampled per edge on uniform grids, `g` is the
/// per-site boundary datum inside `Y^(d)` (ambient coordinates).
pub fn solve_a0(
    sys: &HyperbolicSystem,
    f: &[Array2<c64>],
    g: &[CVec],
) -> Result<StateVector, ResolventError> {
    let sites = sys.sites();
    // u_nh(x) = ∫_0^x M^{-1} f  by composite trapezoid on the sample grid
    let mut u_nh: Vec<Array2<c64>> = Vec::with_capacity(sys.graph.edge_count());
    let mut integrands: Vec<Array2<c64>> = Vec::with_capacity(sys.graph.edge_count());
    for (ei, edge) in sys.graph.edges().iter().enumerate() {
        let samples = &f[ei];
        if samples.ncols() != edge.fiber_dim || samples.nrows() < 2 {
            return Err(ResolventError::GridMismatch {
                edge: edge.id.clone(),
                got: samples.nrows(),
                expected: 2,
            });
        }
        let n = samples.nrows() - 1;
        let h = edge.length / n as f64;
        let mut w = Array2::zeros((n + 1, edge.fiber_dim));
        for i in 0..=n {
            let t = i as f64 / n as f64;
            let m_inv = sys.coefficients[ei]
                .m
                .eval(t)
                .inv()
                .map_err(|e| ResolventError::SingularBoundarySystem(format!("M_e singular: {e}")))?;
            let fi = samples.row(i).to_owned();
            w.row_mut(i).assign(&m_inv.dot(&fi));
        }
        let mut acc = Array2::zeros((n + 1, edge.fiber_dim));
        for i in 1..=n {
            let prev = acc.row(i - 1).to_owned();
            let trap = (&w.row(i - 1).to_owned() + &w.row(i).to_owned()).mapv(|z| z * (0.5 * h));
            acc.row_mut(i).assign(&(&prev + &trap));
        }
        u_nh.push(acc);
        integrands.push(w);
    }

    let problem = boundary_problem(sys);
    let k = sys.graph.k();
    if problem.matrix.nrows() != k {
        return Err(ResolventError::SingularBoundarySystem(format!(
            "spanning set has {} vectors, need k = {}",
            problem.matrix.nrows(),
            k
        )));
    }
    if problem.cond > 1.0 / sys.tol.rank {
        return Err(ResolventError::SingularBoundarySystem(format!(
            "condition number {:.3e} exceeds {:.3e}",
            problem.cond,
            1.0 / sys.tol.rank
        )));
    }

    // right-hand side per row
    let traces_nh: Vec<CVec> = sites
        .iter()
        .map(|site| site_trace(sys, site, &u_nh))
        .collect();
    let mut rhs = CVec::zeros(k);
    for (ri, row) in problem.rows.iter().enumerate() {
        rhs[ri] = match row {
            RowKind::YPerp { site, w } => -dot(&traces_nh[*site], w),
            RowKind::RanBstar { site, w, y } => dot(&g[*site], y) - dot(&traces_nh[*site], w),
            RowKind::KerBstar { site, w } => -dot(&g[*site], w) - dot(&traces_nh[*site], w),
        };
    }
    let constants = problem
        .matrix
        .solve(&rhs)
        .map_err(|e| ResolventError::SingularBoundarySystem(e.to_string()))?;

    // reassemble u = K + u_nh, derivatives are the exact integrands
    let mut edge_values = u_nh;
    for (ei, edge) in sys.graph.edges().iter().enumerate() {
        let off = sys.graph.edge_offset(ei);
        for mut row in edge_values[ei].axis_iter_mut(Axis(0)) {
            for comp in 0..edge.fiber_dim {
                row[comp] += constants[off + comp];
            }
        }
    }
    let boundary: Vec<CVec> = sites
        .iter()
        .map(|site| {
            let gamma = site_trace(sys, site, &edge_values);
            projector(&sys.condition(site).yd).dot(&gamma)
        })
        .collect();
    let state = StateVector {
        edge_values,
        edge_derivs: Some(integrands),
        boundary,
    };

    // internal residual check against the defining equations
    let residual = a0_residual(sys, &state, f, g);
    let scale = pair_norm_d(sys, f, g).max(1e-12);
    if residual > sys.tol.res * scale.max(1.0) {
        return Err(ResolventError::ResidualCheckFailed {
            residual,
            tol: sys.tol.res * scale.max(1.0),
        });
    }
    Ok(state)
}

/// Residual `‖𝔸₀(u, x) − (f, g)‖_d`-ish (edge part in the weighted L² norm,
/// vertex part Euclidean).
fn a0_residual(
    sys: &HyperbolicSystem,
    state: &StateVector,
    f: &[Array2<c64>],
    g: &[CVec],
) -> f64 {
    let mut acc = 0.0f64;
    let derivs = state.edge_derivs.as_ref().expect("solver stores derivatives");
    for (ei, edge) in sys.graph.edges().iter().enumerate() {
        let n = derivs[ei].nrows() - 1;
        let h = edge.length / n as f64;
        for i in 0..=n {
            let t = i as f64 / n as f64;
            let m = sys.coefficients[ei].m.eval(t);
            let du = derivs[ei].row(i).to_owned();
            let resid = &m.dot(&du) - &f[ei].row(i).to_owned();
            let w = if i == 0 || i == n { 0.5 * h } else { h };
            acc += w * dot(&resid, &resid).re();
        }
    }
    let sites = sys.sites();
    for (si, site) in sites.iter().enumerate() {
        let vc = sys.condition(site);
        let p = projectors(vc, sys.tol.rank);
        let gamma = site_trace(sys, site, &state.edge_values);
        let resid = vc.b.dot(&gamma) - p.p_d0.dot(&state.boundary[si]) - &g[si];
        acc += dot(&resid, &resid).re();
    }
    acc.sqrt()
}

/// Weighted size of a right-hand-side pair, used for relative residuals.
pub fn pair_norm_d(sys: &HyperbolicSystem, f: &[Array2<c64>], g: &[CVec]) -> f64 {
    let mut acc = 0.0f64;
    for (ei, edge) in sys.graph.edges().iter().enumerate() {
        let n = f[ei].nrows() - 1;
        let h = edge.length / n as f64;
        for i in 0..=n {
            let t = i as f64 / n as f64;
            let q = sys.coefficients[ei].q.eval(t);
            let fi = f[ei].row(i).to_owned();
            let w = if i == 0 || i == n { 0.5 * h } else { h };
            acc += w * dot(&q.dot(&fi), &fi).re();
        }
    }
    for (si, site) in sys.sites().iter().enumerate() {
        let vc = sys.condition(site);
        acc += dot(&vc.q.dot(&g[si]), &g[si]).re();
    }
    acc.sqrt()
}

/// Apply the full operator `𝔸` to a smooth state: edge part `M u' + N u`,
/// vertex part `B γ_v(u) + C x_v`. Derivative samples are taken from the
/// state or spline-differentiated.
pub fn apply_a(
    sys: &HyperbolicSystem,
    state: &StateVector,
) -> Result<(Vec<Array2<c64>>, Vec<CVec>), ResolventError> {
    let resid = crate::state::domain_residual(sys, state);
    if resid > sys.tol.sub.max(1e-8) {
        return Err(ResolventError::DomainViolation {
            residual: resid,
            tol: sys.tol.sub.max(1e-8),
        });
    }
    let derivs: Vec<Array2<c64>> = match &state.edge_derivs {
        Some(d) => d.clone(),
        None => spline_derivatives(sys, state),
    };
    let mut edge_part = Vec::with_capacity(sys.graph.edge_count());
    for (ei, edge) in sys.graph.edges().iter().enumerate() {
        let vals = &state.edge_values[ei];
        let n = vals.nrows() - 1;
        let mut out = Array2::zeros((n + 1, edge.fiber_dim));
        for i in 0..=n {
            let t = i as f64 / n as f64;
            let m = sys.coefficients[ei].m.eval(t);
            let nn = sys.coefficients[ei].n.eval(t);
            let u = vals.row(i).to_owned();
            let du = derivs[ei].row(i).to_owned();
            out.row_mut(i).assign(&(&m.dot(&du) + &nn.dot(&u)));
        }
        edge_part.push(out);
    }
    let sites = sys.sites();
    let mut vertex_part = Vec::with_capacity(sites.len());
    for (si, site) in sites.iter().enumerate() {
        let vc = sys.condition(site);
        let gamma = site_trace(sys, site, &state.edge_values);
        vertex_part.push(vc.b.dot(&gamma) + vc.c.dot(&state.boundary[si]));
    }
    Ok((edge_part, vertex_part))
}

fn spline_derivatives(sys: &HyperbolicSystem, state: &StateVector) -> Vec<Array2<c64>> {
    let mut out = Vec::with_capacity(state.edge_values.len());
    for (ei, edge) in sys.graph.edges().iter().enumerate() {
        let vals = &state.edge_values[ei];
        let n = vals.nrows() - 1;
        let h = edge.length / n as f64;
        let mut d = Array2::zeros((n + 1, edge.fiber_dim));
        for comp in 0..edge.fiber_dim {
            let col: CVec = Array1::from_iter(vals.column(comp).iter().cloned());
            let spline = CubicSpline::natural(&col, h);
            for i in 0..=n {
                d[[i, comp]] = spline.deriv(i as f64 * h);
            }
        }
        out.push(d);
    }
    out
}

/// Rank of the boundary matrix (consistency hook against the basis report).
pub fn boundary_rank(sys: &HyperbolicSystem) -> usize {
    let problem = boundary_problem(sys);
    crate::linalg::rank(&problem.matrix, sys.tol.rank)
}

/// Convenience: the residual `‖apply_a(solve_a0(f,g)) − (f,g)‖_d` relative to
/// `‖(f,g)‖_d`, for systems whose `𝔸` equals `𝔸₀` (`N = 0`, `C = −P^{(d,0)}`).
pub fn round_trip_residual(
    sys: &HyperbolicSystem,
    f: &[Array2<c64>],
    g: &[CVec],
) -> Result<f64, ResolventError> {
    let state = solve_a0(sys, f, g)?;
    let (edge_part, vertex_part) = apply_a(sys, &state)?;
    let mut acc = 0.0f64;
    for (ei, edge) in sys.graph.edges().iter().enumerate() {
        let n = edge_part[ei].nrows() - 1;
        let h = edge.length / n as f64;
        for i in 0..=n {
            let t = i as f64 / n as f64;
            let q = sys.coefficients[ei].q.eval(t);
            let resid = &edge_part[ei].row(i).to_owned() - &f[ei].row(i).to_owned();
            let w = if i == 0 || i == n { 0.5 * h } else { h };
            acc += w * dot(&q.dot(&resid), &resid).re();
        }
    }
    for (si, site) in sys.sites().iter().enumerate() {
        let vc = sys.condition(site);
        let resid = &vertex_part[si] - &g[si];
        let scaled = vc.q.dot(&resid);
        acc += dot(&scaled, &resid).re().abs();
    }
    Ok(acc.sqrt() / pair_norm_d(sys, f, g).max(1e-300))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EdgeSpec, MetricGraph};
    use crate::linalg::ceye;
    use crate::system::{Conditions, EdgeCoefficients, Tolerances, VertexCondition};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn r(x: f64) -> c64 {
        c64::new(x, 0.0)
    }

    /// Maxwell-style two-interval system with purely stationary, basis-valid
    /// conditions (p(−1)=0, q(1)=0, continuity of p and q at the center).
    fn stationary_maxwell() -> HyperbolicSystem {
        let graph = MetricGraph::build(
            vec!["vm".into(), "v0".into(), "vp".into()],
            vec![
                EdgeSpec {
                    id: "e1".into(),
                    tail: "vm".into(),
                    head: "v0".into(),
                    length: 1.0,
                    fiber_dim: 2,
                },
                EdgeSpec {
                    id: "e2".into(),
                    tail: "v0".into(),
                    head: "vp".into(),
                    length: 1.0,
                    fiber_dim: 2,
                },
            ],
        )
        .unwrap();
        let m = array![[r(0.0), r(1.0)], [r(1.0), r(0.0)]];
        let coeff = || EdgeCoefficients::constant(m.clone(), czeros(2, 2), ceye(2));
        let tol = Tolerances::default();
        let y_m = array![[r(0.0)], [r(1.0)]];
        let y_p = array![[r(1.0)], [r(0.0)]];
        // full continuity at the center: span{(1,0,1,0),(0,1,0,1)}
        let y_0 = array![
            [r(1.0), r(0.0)],
            [r(0.0), r(1.0)],
            [r(1.0), r(0.0)],
            [r(0.0), r(1.0)]
        ];
        let conditions = Conditions::PerVertex(vec![
            VertexCondition::stationary("vm", 2, &y_m, &tol).unwrap(),
            VertexCondition::stationary("v0", 4, &y_0, &tol).unwrap(),
            VertexCondition::stationary("vp", 2, &y_p, &tol).unwrap(),
        ]);
        HyperbolicSystem::new(graph, vec![coeff(), coeff()], conditions, tol).unwrap()
    }

    #[test]
    fn homogeneous_solution_is_zero() {
        let sys = stationary_maxwell();
        let n = 64;
        let f = vec![Array2::zeros((n + 1, 2)), Array2::zeros((n + 1, 2))];
        let g = vec![CVec::zeros(2), CVec::zeros(4), CVec::zeros(2)];
        let state = solve_a0(&sys, &f, &g).unwrap();
        let norm = crate::state::norm_d(&sys, &state);
        assert_abs_diff_eq!(norm, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn round_trip_identity() {
        let sys = stationary_maxwell();
        let n = 256;
        let mk = |freq: f64| {
            let mut f = Array2::zeros((n + 1, 2));
            for i in 0..=n {
                let x = i as f64 / n as f64;
                f[[i, 0]] = c64::new((freq * x).sin(), 0.2 * x);
                f[[i, 1]] = c64::new((freq * x).cos(), -0.1);
            }
            f
        };
        let f = vec![mk(2.0), mk(3.0)];
        let g = vec![CVec::zeros(2), CVec::zeros(4), CVec::zeros(2)];
        let resid = round_trip_residual(&sys, &f, &g).unwrap();
        assert!(resid < 1e-5, "round trip residual {resid:.3e}");
    }

    #[test]
    fn linearity_of_solve() {
        let sys = stationary_maxwell();
        let n = 128;
        let mk = |a: f64, b: f64| {
            let mut f = Array2::zeros((n + 1, 2));
            for i in 0..=n {
                let x = i as f64 / n as f64;
                f[[i, 0]] = c64::new(a * (x * 3.0).sin(), b * x);
                f[[i, 1]] = c64::new(b, a * x * x);
            }
            f
        };
        let f1 = vec![mk(1.0, 0.3), mk(0.5, -0.2)];
        let f2 = vec![mk(-0.7, 1.1), mk(0.2, 0.9)];
        let zeros_g = vec![CVec::zeros(2), CVec::zeros(4), CVec::zeros(2)];
        let s1 = solve_a0(&sys, &f1, &zeros_g).unwrap();
        let s2 = solve_a0(&sys, &f2, &zeros_g).unwrap();
        let f_sum: Vec<Array2<c64>> = f1.iter().zip(&f2).map(|(a, b)| a + b).collect();
        let s_sum = solve_a0(&sys, &f_sum, &zeros_g).unwrap();
        for ei in 0..2 {
            let diff = &s_sum.edge_values[ei] - &s1.edge_values[ei] - &s2.edge_values[ei];
            let err: f64 = diff.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let scale: f64 = s_sum.edge_values[ei]
                .iter()
                .map(|z| z.norm())
                .fold(1.0, f64::max);
            assert!(err / scale < 1e-10, "superposition error {err:.3e}");
        }
    }

    #[test]
    fn boundary_rank_matches_basis_report() {
        let sys = stationary_maxwell();
        let basis = crate::wellposed::basis_condition(&sys);
        assert_eq!(boundary_rank(&sys), basis.dim_span);
        assert!(basis.holds);
    }

    #[test]
    fn constant_state_maps_to_zero() {
        let sys = stationary_maxwell();
        // u ≡ c with continuity satisfied, N = 0, B = 0 → edge part zero
        let n = 16;
        let mut vals = Array2::zeros((n + 1, 2));
        for i in 0..=n {
            vals[[i, 0]] = r(0.0);
            vals[[i, 1]] = r(0.7);
        }
        // p must vanish at vm, q at vp; choose p ≡ 0, q ≡ 0.7 on edge 1 and
        // q ≡ 0 on edge 2 to stay in the domain
        let mut vals2 = Array2::zeros((n + 1, 2));
        for i in 0..=n {
            vals2[[i, 0]] = r(0.0);
            vals2[[i, 1]] = r(0.7);
        }
        // continuity at center holds (same values)
        let state = StateVector {
            edge_values: vec![vals, vals2],
            edge_derivs: None,
            boundary: vec![CVec::zeros(2), CVec::zeros(4), CVec::zeros(2)],
        };
        // q(1) = 0.7 violates Y at vp; expect DomainViolation
        let err = apply_a(&sys, &state);
        assert!(matches!(err, Err(ResolventError::DomainViolation { .. })));
    }
}
