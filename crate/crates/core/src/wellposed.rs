//! The certificate engine: projectors, quadratic-form cone tests, the
//! `W_v`/`Z_v` construction with the basis condition, the adjoint boundary
//! space, and the overall generator classification.
//!
//! All checks are sufficient conditions; `inconclusive` is a legal verdict.

use crate::linalg::{
    adjoint, ceye, czeros, dot, eig_max, eigh, frobenius, hermitian_part, min_shift, null_space,
    orthonormal_span, projector, rank, CMat, CVec,
};
use crate::system::{HyperbolicSystem, Site, VertexCondition};
use ndarray::{concatenate, s, Axis};
use ndarray_linalg::{c64, Scalar};
use serde::Serialize;

/// The four orthogonal projectors attached to a vertex condition:
/// onto `Y^(d)`, onto `Ker B* ∩ Y^(d)`, onto `(Y^(d))^{⊥_y}`, and onto `Y`.
#[derive(Debug, Clone)]
pub struct Projectors {
    pub p_d: CMat,
    pub p_d0: CMat,
    pub p_d_perp: CMat,
    pub p_y: CMat,
}

pub fn projectors(vc: &VertexCondition, tol_rank: f64) -> Projectors {
    let p_d = projector(&vc.yd);
    let p_y = projector(&vc.y);
    let p_d_perp = &p_y - &p_d;
    let p_d0 = projector(&ker_bstar_in_yd(vc, tol_rank));
    Projectors {
        p_d,
        p_d0,
        p_d_perp,
        p_y,
    }
}

/// Orthonormal basis of `Ker B* ∩ Y^(d)`.
fn ker_bstar_in_yd(vc: &VertexCondition, tol_rank: f64) -> CMat {
    if vc.dim_yd() == 0 {
        return czeros(vc.dim(), 0);
    }
    let bstar_on_yd = adjoint(&vc.b).dot(&vc.yd);
    let coords = null_space(&bstar_on_yd, tol_rank);
    vc.yd.dot(&coords)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConeMode {
    Nonpositive,
    Null,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConeCheckResult {
    pub holds: bool,
    pub mode: ConeMode,
    /// largest eigenvalue of the compressed Hermitian form (largest absolute
    /// eigenvalue in null mode)
    pub extremal_value: f64,
    /// unit vector achieving the extremal value, in ambient coordinates
    #[serde(skip)]
    pub witness: CVec,
    /// subspace dimension that was checked
    pub dim: usize,
}

/// Compress the Hermitian form `f` to the subspace spanned by the orthonormal
/// columns of `s` and test membership in the nonpositive or null isotropic
/// cone. An empty subspace holds trivially.
pub fn cone_check(f: &CMat, sub: &CMat, mode: ConeMode, tol: f64) -> ConeCheckResult {
    let dim = sub.ncols();
    if dim == 0 {
        return ConeCheckResult {
            holds: true,
            mode,
            extremal_value: 0.0,
            witness: CVec::zeros(f.nrows()),
            dim,
        };
    }
    let compressed = hermitian_part(&adjoint(sub).dot(&f.dot(sub)));
    let (w, v) = eigh(&compressed);
    let scale = frobenius(f).max(1.0);
    let threshold = tol * scale;
    let (extremal, idx) = match mode {
        ConeMode::Nonpositive => (w[w.len() - 1], w.len() - 1),
        ConeMode::Null => {
            if w[w.len() - 1].abs() >= w[0].abs() {
                (w[w.len() - 1], w.len() - 1)
            } else {
                (w[0], 0)
            }
        }
    };
    let holds = match mode {
        ConeMode::Nonpositive => extremal <= threshold,
        ConeMode::Null => extremal.abs() <= threshold,
    };
    let witness = sub.dot(&v.column(idx).to_owned());
    ConeCheckResult {
        holds,
        mode,
        extremal_value: extremal,
        witness,
        dim,
    }
}

/// `T + Q B + B* Q` of a site (the semigroup/group boundary form).
pub fn boundary_form(sys: &HyperbolicSystem, site: &Site) -> CMat {
    let vc = sys.condition(site);
    let t = sys.t_matrix(site);
    let qb = vc.q.dot(&vc.b);
    &t + &qb + adjoint(&qb)
}

/// Boundary form with the `C`-term folded in: `T + QB + B*Q + QC + C*Q`.
pub fn boundary_form_with_c(sys: &HyperbolicSystem, site: &Site) -> CMat {
    let vc = sys.condition(site);
    let qc = vc.q.dot(&vc.c);
    boundary_form(sys, site) + &qc + adjoint(&qc)
}

/// Smallest `λ ≥ 0` making `T + QB + B*Q − λ P^(d) Q P^(d) ⪯ 0` on the given
/// subspace; `f64::INFINITY` when no finite shift works.
pub fn min_lambda_on(sys: &HyperbolicSystem, site: &Site, sub: &CMat) -> f64 {
    let f = boundary_form(sys, site);
    let g = &sys.condition(site).q; // equals P^(d) Q P^(d) by construction
    let f_c = adjoint(sub).dot(&f.dot(sub));
    let g_c = adjoint(sub).dot(&g.dot(sub));
    min_shift(&f_c, &g_c, sys.tol.eig).unwrap_or(f64::INFINITY)
}

/// `min_lambda` on the full admissible trace space `Y` (theorem cone).
pub fn min_lambda(sys: &HyperbolicSystem, site: &Site) -> f64 {
    let y = sys.condition(site).y.clone();
    min_lambda_on(sys, site, &y)
}

/// The spanning set `W_v` and the space `Z_v`.
#[derive(Debug, Clone)]
pub struct WvBasis {
    /// columns: orthonormal basis of `Y^⊥`, then `B* y_j` for an orthonormal
    /// basis of `Ran B`, then an orthonormal basis of `Ker B* ∩ Y^(d)`
    pub vectors: CMat,
    pub dim_y_perp: usize,
    pub dim_ran_bstar: usize,
    pub dim_ker_bstar: usize,
    /// `dim Z = dim span(vectors)`
    pub dim_z: usize,
}

pub fn build_wv(sys: &HyperbolicSystem, site: &Site) -> WvBasis {
    let vc = sys.condition(site);
    let tol = sys.tol.rank;
    let y_perp = null_space(&adjoint(&vc.y), tol);
    let ran_b = orthonormal_span(&vc.b, tol);
    let bstar = adjoint(&vc.b);
    let w_rb = bstar.dot(&ran_b);
    let ker_b = ker_bstar_in_yd(vc, tol);
    let vectors = concatenate(
        Axis(1),
        &[y_perp.view(), w_rb.view(), ker_b.view()],
    )
    .expect("concatenate W_v columns");
    let dim_z = rank(&vectors, tol);
    WvBasis {
        vectors,
        dim_y_perp: y_perp.ncols(),
        dim_ran_bstar: w_rb.ncols(),
        dim_ker_bstar: ker_b.ncols(),
        dim_z,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SiteDims {
    pub site: String,
    pub dim_y_perp: usize,
    pub dim_ran_bstar: usize,
    pub dim_ker_bstar: usize,
    pub dim_z: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisShortcut {
    None,
    Stationary,
    SurjectiveB,
}

#[derive(Debug, Clone, Serialize)]
pub struct BasisConditionResult {
    pub holds: bool,
    pub dim_span: usize,
    pub k: usize,
    pub count_total: usize,
    pub per_site: Vec<SiteDims>,
    pub shortcut_used: BasisShortcut,
    /// when the shortcut applies: whether its integer identity agrees
    pub shortcut_identity: Option<bool>,
}

/// Stack the zero-extensions of every `W_v` and test for a basis of `ℂ^k`.
pub fn basis_condition(sys: &HyperbolicSystem) -> BasisConditionResult {
    let k = sys.graph.k();
    let sites = sys.sites();
    let mut columns: Vec<CVec> = Vec::new();
    let mut per_site = Vec::new();
    let mut all_stationary = true;
    let mut all_surjective = true;
    for site in &sites {
        let vc = sys.condition(site);
        let wv = build_wv(sys, site);
        for col in wv.vectors.axis_iter(Axis(1)) {
            columns.push(sys.extend_to_k(site, &col.to_owned()));
        }
        if vc.dim_yd() > 0 {
            all_stationary = false;
        }
        if wv.dim_ran_bstar != vc.dim_yd() {
            all_surjective = false;
        }
        per_site.push(SiteDims {
            site: site.id.label(&sys.graph),
            dim_y_perp: wv.dim_y_perp,
            dim_ran_bstar: wv.dim_ran_bstar,
            dim_ker_bstar: wv.dim_ker_bstar,
            dim_z: wv.dim_z,
        });
    }
    let count_total = columns.len();
    let mut stacked = czeros(k, count_total);
    for (j, col) in columns.iter().enumerate() {
        stacked.column_mut(j).assign(col);
    }
    let dim_span = rank(&stacked, sys.tol.rank);
    let holds = dim_span == k && count_total == k;

    let (shortcut_used, shortcut_identity) = if all_stationary {
        // Remark: stationary case reduces to Σ dim Y_v = k
        let sum_dim_y: usize = sites
            .iter()
            .map(|s| sys.condition(s).dim_y())
            .sum();
        (BasisShortcut::Stationary, Some(sum_dim_y == k))
    } else if all_surjective {
        // surjective B: Σ (dim Y_v − dim Y_v^(d)) = k
        let sum: usize = sites
            .iter()
            .map(|s| {
                let vc = sys.condition(s);
                vc.dim_y() - vc.dim_yd()
            })
            .sum();
        (BasisShortcut::SurjectiveB, Some(sum == k))
    } else {
        (BasisShortcut::None, None)
    };

    BasisConditionResult {
        holds,
        dim_span,
        k,
        count_total,
        per_site,
        shortcut_used,
        shortcut_identity,
    }
}

/// Orthonormal basis of the adjoint boundary space
/// `𝕐*_v = Ker ( P^{(d),⊥} T   P^{(d),⊥} B* Q )` inside `ℂ^{k_v} ⊕ Y^(d)`.
/// The `Y^(d)`-part is returned in `yd`-basis coordinates, so the result has
/// `k_v + dim Y^(d)` rows.
pub fn adjoint_space(sys: &HyperbolicSystem, site: &Site) -> CMat {
    let vc = sys.condition(site);
    let projs = projectors(vc, sys.tol.rank);
    let t = sys.t_matrix(site);
    let left = projs.p_d_perp.dot(&t);
    let right = projs
        .p_d_perp
        .dot(&adjoint(&vc.b).dot(&vc.q.dot(&vc.yd)));
    let block = concatenate(Axis(1), &[left.view(), right.view()]).expect("adjoint block");
    null_space(&block, sys.tol.rank)
}

/// The (non-Hermitian) adjoint-route block form at shift `μ`, in the same
/// `ℂ^{k_v} ⊕ Y^(d)`-coordinates as [`adjoint_space`]. With `include_c` the
/// dissipation contribution of `C` is added to the boundary block.
pub fn adjoint_form(sys: &HyperbolicSystem, site: &Site, mu: f64, include_c: bool) -> CMat {
    let vc = sys.condition(site);
    let kv = vc.dim();
    let dd = vc.dim_yd();
    let t = sys.t_matrix(site);
    let p_d = projector(&vc.yd);
    let mut f = czeros(kv + dd, kv + dd);
    // (1,1): −T − 2μ I
    let mut tl = t.mapv(|z| -z);
    for i in 0..kv {
        tl[[i, i]] -= c64::new(2.0 * mu, 0.0);
    }
    f.slice_mut(s![..kv, ..kv]).assign(&tl);
    if dd > 0 {
        let t_yd = t.dot(&vc.yd);
        f.slice_mut(s![..kv, kv..]).assign(&t_yd);
        let bl = adjoint(&vc.yd).dot(&p_d.dot(&t));
        f.slice_mut(s![kv.., ..kv]).assign(&bl);
        let q_dd = adjoint(&vc.yd).dot(&vc.q.dot(&vc.yd));
        let pb_q = p_d.dot(&adjoint(&vc.b).dot(&vc.q));
        let qb = vc.q.dot(&vc.b);
        let mut br = adjoint(&vc.yd).dot(&(&pb_q + &qb).dot(&vc.yd));
        br = br - q_dd.mapv(|z| z * 2.0 * mu);
        if include_c {
            let qc = vc.q.dot(&vc.c);
            let c_part = &qc + &adjoint(&qc);
            br = br + adjoint(&vc.yd).dot(&c_part.dot(&vc.yd));
        }
        f.slice_mut(s![kv.., kv..]).assign(&br);
    }
    f
}

/// Cone check of the adjoint block form on `𝕐*_v`.
pub fn adjoint_cone_check(
    sys: &HyperbolicSystem,
    site: &Site,
    mu: f64,
    mode: ConeMode,
) -> ConeCheckResult {
    let space = adjoint_space(sys, site);
    let form = adjoint_form(sys, site, mu, false);
    cone_check(&form, &space, mode, sys.tol.eig)
}

/// Smallest `μ ≥ 0` making the Hermitian part of the adjoint block form `⪯ 0`
/// on `𝕐*_v`; infinity when infeasible.
pub fn min_mu_on_adjoint(sys: &HyperbolicSystem, site: &Site, include_c: bool) -> f64 {
    let space = adjoint_space(sys, site);
    if space.ncols() == 0 {
        return 0.0;
    }
    let vc = sys.condition(site);
    let kv = vc.dim();
    let dd = vc.dim_yd();
    let f0 = hermitian_part(&adjoint_form(sys, site, 0.0, include_c));
    // weight of the μ terms: diag(2 I, 2 Q|Yd)
    let mut w = czeros(kv + dd, kv + dd);
    w.slice_mut(s![..kv, ..kv]).assign(&ceye(kv).mapv(|z| z * 2.0));
    if dd > 0 {
        let q_dd = adjoint(&vc.yd).dot(&vc.q.dot(&vc.yd));
        w.slice_mut(s![kv.., kv..]).assign(&q_dd.mapv(|z| z * 2.0));
    }
    let f_c = adjoint(&space).dot(&f0.dot(&space));
    let w_c = adjoint(&space).dot(&w.dot(&space));
    min_shift(&f_c, &w_c, sys.tol.eig).unwrap_or(f64::INFINITY)
}

/// `Q N + N* Q − (Q M)'` at a normalized edge coordinate.
pub fn edge_dissipation_form(sys: &HyperbolicSystem, edge: usize, t: f64) -> CMat {
    let coeff = &sys.coefficients[edge];
    let length = sys.graph.edge(edge).length;
    let q = coeff.q.eval(t);
    let n = coeff.n.eval(t);
    let qn = q.dot(&n);
    &qn + &adjoint(&qn) - &coeff.qm_deriv_at(t, length)
}

#[derive(Debug, Clone, Serialize)]
pub struct SiteValue {
    pub site: String,
    /// `None` encodes an unbounded/infeasible shift
    pub value: Option<f64>,
}

fn opt(v: f64) -> Option<f64> {
    if v.is_finite() {
        Some(v)
    } else {
        None
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SiteCheck {
    pub site: String,
    pub holds: bool,
    pub extremal_value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AdjointRouteReport {
    /// per-site minimal λ for the `Y^(d)` cone
    pub yd_cone_lambda: Vec<SiteValue>,
    /// per-site minimal μ for the adjoint block form
    pub adjoint_cone_mu: Vec<SiteValue>,
    /// null cones at λ = μ = 0 (group case)
    pub yd_null: Vec<SiteCheck>,
    pub ystar_null: Vec<SiteCheck>,
    pub holds_semigroup: bool,
    pub holds_group: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BasisRouteReport {
    pub per_site_lambda: Vec<SiteValue>,
    /// max over sites when all finite
    pub lambda: Option<f64>,
    pub null_cones: Vec<SiteCheck>,
    pub holds_semigroup: bool,
    pub holds_group: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Semigroup,
    Group,
    ContractiveSemigroup,
    UnitaryGroup,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Basis,
    Adjoint,
    None,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContractiveDetail {
    pub edge_semidefinite: bool,
    pub edge_form_max: f64,
    pub c_cone_nonpositive: bool,
    pub zero_shift_feasible: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct UnitaryDetail {
    pub edge_equality: bool,
    pub edge_equality_residual: f64,
    pub c_null: bool,
    pub ystar_c_null: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassificationReport {
    pub assumptions_ok: bool,
    pub basis: BasisConditionResult,
    pub basis_route: BasisRouteReport,
    pub adjoint_route: AdjointRouteReport,
    pub contractive: bool,
    pub contractive_detail: ContractiveDetail,
    pub unitary: bool,
    pub unitary_detail: UnitaryDetail,
    /// certified growth rate: `‖exp(t𝔸)‖_d ≤ exp(ω t)` by the route that
    /// produced the verdict (paper-style composition of the edge form and the
    /// vertex shifts)
    pub growth_omega: Option<f64>,
    pub verdict: Verdict,
    pub route: Route,
}

/// Evaluate every certificate and return the strongest certified statement.
pub fn classify(sys: &HyperbolicSystem) -> ClassificationReport {
    let assumptions = sys.validate_assumptions();
    let sites = sys.sites();
    let basis = basis_condition(sys);

    // ---- basis route (theorem cone on Y) ----
    let mut per_site_lambda = Vec::new();
    let mut null_cones = Vec::new();
    let mut lambda_max: f64 = 0.0;
    let mut all_lambda_finite = true;
    let mut all_null = true;
    for site in &sites {
        let label = site.id.label(&sys.graph);
        let lam = min_lambda(sys, site);
        if !lam.is_finite() {
            all_lambda_finite = false;
        }
        lambda_max = lambda_max.max(lam);
        per_site_lambda.push(SiteValue {
            site: label.clone(),
            value: opt(lam),
        });
        let form = boundary_form(sys, site);
        let check = cone_check(&form, &sys.condition(site).y, ConeMode::Null, sys.tol.eig);
        if !check.holds {
            all_null = false;
        }
        null_cones.push(SiteCheck {
            site: label,
            holds: check.holds,
            extremal_value: check.extremal_value,
        });
    }
    let basis_route = BasisRouteReport {
        per_site_lambda,
        lambda: if all_lambda_finite {
            Some(lambda_max)
        } else {
            None
        },
        null_cones,
        holds_semigroup: basis.holds && all_lambda_finite,
        holds_group: basis.holds && all_null,
    };

    // ---- adjoint route ----
    let mut yd_lambda = Vec::new();
    let mut mu_values = Vec::new();
    let mut yd_null = Vec::new();
    let mut ystar_null = Vec::new();
    let mut adj_sg = true;
    let mut adj_group = true;
    let mut mu_max: f64 = 0.0;
    for site in &sites {
        let label = site.id.label(&sys.graph);
        let vc = sys.condition(site);
        let lam = min_lambda_on(sys, site, &vc.yd.clone());
        if !lam.is_finite() {
            adj_sg = false;
        }
        yd_lambda.push(SiteValue {
            site: label.clone(),
            value: opt(lam),
        });
        let mu = min_mu_on_adjoint(sys, site, false);
        if !mu.is_finite() {
            adj_sg = false;
        }
        mu_max = mu_max.max(mu);
        mu_values.push(SiteValue {
            site: label.clone(),
            value: opt(mu),
        });
        let form = boundary_form(sys, site);
        let ydn = cone_check(&form, &vc.yd, ConeMode::Null, sys.tol.eig);
        let ysn = adjoint_cone_check(sys, site, 0.0, ConeMode::Null);
        if !(ydn.holds && ysn.holds) {
            adj_group = false;
        }
        yd_null.push(SiteCheck {
            site: label.clone(),
            holds: ydn.holds,
            extremal_value: ydn.extremal_value,
        });
        ystar_null.push(SiteCheck {
            site: label,
            holds: ysn.holds,
            extremal_value: ysn.extremal_value,
        });
    }
    let adjoint_route = AdjointRouteReport {
        yd_cone_lambda: yd_lambda,
        adjoint_cone_mu: mu_values,
        yd_null,
        ystar_null,
        holds_semigroup: adj_sg,
        holds_group: adj_group,
    };

    // ---- contractivity / unitarity add-ons ----
    let mut edge_form_max = f64::NEG_INFINITY;
    let mut edge_eq_residual: f64 = 0.0;
    for ei in 0..sys.graph.edge_count() {
        let nodes = sys.coefficients[ei]
            .m
            .sample_count()
            .max(sys.coefficients[ei].n.sample_count())
            .max(sys.coefficients[ei].q.sample_count())
            .max(9);
        for i in 0..nodes {
            let t = i as f64 / (nodes - 1) as f64;
            let e = edge_dissipation_form(sys, ei, t);
            edge_form_max = edge_form_max.max(eig_max(&e));
            edge_eq_residual = edge_eq_residual.max(frobenius(&e));
        }
    }
    if !edge_form_max.is_finite() {
        edge_form_max = 0.0;
    }
    let edge_scale: f64 = (0..sys.graph.edge_count())
        .map(|e| frobenius(&sys.coefficients[e].qm_at(0.0)))
        .fold(1.0, f64::max);
    let edge_semidefinite = edge_form_max <= sys.tol.eig * edge_scale;
    let edge_equality = edge_eq_residual <= sys.tol.sym * edge_scale.max(1.0);

    let mut c_nonpos = true;
    let mut c_null = true;
    let mut ystar_c_null = true;
    for site in &sites {
        let vc = sys.condition(site);
        let qc = vc.q.dot(&vc.c);
        let c_form = &qc + &adjoint(&qc);
        let nonpos = cone_check(&c_form, &vc.yd, ConeMode::Nonpositive, sys.tol.eig);
        let null = cone_check(&c_form, &vc.yd, ConeMode::Null, sys.tol.eig);
        c_nonpos &= nonpos.holds;
        c_null &= null.holds;
        // unitarity via the adjoint route additionally needs the C block to
        // vanish on the adjoint boundary space
        let kv = vc.dim();
        let dd = vc.dim_yd();
        let mut big = czeros(kv + dd, kv + dd);
        if dd > 0 {
            let c_dd = adjoint(&vc.yd).dot(&c_form.dot(&vc.yd));
            big.slice_mut(s![kv.., kv..]).assign(&c_dd);
        }
        let space = adjoint_space(sys, site);
        let check = cone_check(&big, &space, ConeMode::Null, sys.tol.eig);
        ystar_c_null &= check.holds;
    }

    // zero-shift feasibility (λ = μ = 0) for plain contractivity; the C-term
    // is folded into the vertex forms, which is exactly the combination the
    // dissipation identity bounds (the split conditions imply it)
    let zero_shift_basis = basis.holds
        && sites.iter().all(|site| {
            let form = boundary_form_with_c(sys, site);
            cone_check(&form, &sys.condition(site).y, ConeMode::Nonpositive, sys.tol.eig).holds
        });
    let zero_shift_adj = sites.iter().all(|site| {
        let vc = sys.condition(site);
        let yd_ok = cone_check(
            &boundary_form_with_c(sys, site),
            &vc.yd,
            ConeMode::Nonpositive,
            sys.tol.eig,
        )
        .holds;
        let space = adjoint_space(sys, site);
        let form = adjoint_form(sys, site, 0.0, true);
        let ystar_ok = cone_check(&form, &space, ConeMode::Nonpositive, sys.tol.eig).holds;
        yd_ok && ystar_ok
    });
    let zero_shift = zero_shift_basis || zero_shift_adj;
    let contractive = edge_semidefinite && zero_shift;

    let group_ok = basis_route.holds_group || adjoint_route.holds_group;
    let sg_ok = basis_route.holds_semigroup || adjoint_route.holds_semigroup || group_ok;
    let unitary_basis = basis_route.holds_group && edge_equality && c_null;
    let unitary_adjoint = adjoint_route.holds_group && edge_equality && c_null && ystar_c_null;
    let unitary = unitary_basis || unitary_adjoint;

    let verdict = if unitary {
        Verdict::UnitaryGroup
    } else if group_ok {
        Verdict::Group
    } else if sg_ok && contractive {
        Verdict::ContractiveSemigroup
    } else if sg_ok {
        Verdict::Semigroup
    } else {
        Verdict::Inconclusive
    };
    let route = match verdict {
        Verdict::UnitaryGroup => {
            if unitary_basis {
                Route::Basis
            } else {
                Route::Adjoint
            }
        }
        Verdict::Group => {
            if basis_route.holds_group {
                Route::Basis
            } else {
                Route::Adjoint
            }
        }
        Verdict::ContractiveSemigroup | Verdict::Semigroup => {
            if basis_route.holds_semigroup {
                Route::Basis
            } else {
                Route::Adjoint
            }
        }
        Verdict::Inconclusive => Route::None,
    };

    // certified growth rate
    let edge_growth = edge_growth_rate(sys);
    let omega_basis = if basis.holds {
        let mut worst: f64 = 0.0;
        let mut ok = true;
        for site in &sites {
            let f = boundary_form_with_c(sys, site);
            let vc = sys.condition(site);
            let f_c = adjoint(&vc.y).dot(&f.dot(&vc.y));
            let g_c = adjoint(&vc.y).dot(&vc.q.dot(&vc.y));
            match min_shift(&f_c, &g_c, sys.tol.eig) {
                Some(l) => worst = worst.max(l / 2.0),
                None => ok = false,
            }
        }
        if ok {
            Some(edge_growth.max(worst))
        } else {
            None
        }
    } else {
        None
    };
    let omega_adjoint = {
        let mut worst: f64 = 0.0;
        let mut ok = true;
        for site in &sites {
            let mu = min_mu_on_adjoint(sys, site, true);
            if mu.is_finite() {
                worst = worst.max(mu);
            } else {
                ok = false;
            }
        }
        if ok {
            Some(edge_growth.max(worst))
        } else {
            None
        }
    };
    let growth_omega = match (sg_ok, omega_basis, omega_adjoint) {
        (false, _, _) => None,
        (true, Some(a), Some(b)) => Some(a.min(b)),
        (true, Some(a), None) => Some(a),
        (true, None, Some(b)) => Some(b),
        (true, None, None) => None,
    };

    ClassificationReport {
        assumptions_ok: assumptions.passed,
        basis,
        basis_route,
        adjoint_route,
        contractive,
        contractive_detail: ContractiveDetail {
            edge_semidefinite,
            edge_form_max,
            c_cone_nonpositive: c_nonpos,
            zero_shift_feasible: zero_shift,
        },
        unitary,
        unitary_detail: UnitaryDetail {
            edge_equality,
            edge_equality_residual: edge_eq_residual,
            c_null,
            ystar_c_null,
        },
        growth_omega,
        verdict,
        route,
    }
}

/// Largest eigenvalue of the edge dissipation form relative to `2Q`, maximized
/// over sample nodes (the L²-growth contribution of the edge terms).
fn edge_growth_rate(sys: &HyperbolicSystem) -> f64 {
    let mut worst: f64 = 0.0;
    for ei in 0..sys.graph.edge_count() {
        let nodes = sys.coefficients[ei].q.sample_count().max(9);
        for i in 0..nodes {
            let t = i as f64 / (nodes - 1) as f64;
            let e = edge_dissipation_form(sys, ei, t);
            let q = sys.coefficients[ei].q.eval(t);
            // λmax(E, 2Q) = λmax(Q^{-1/2} E Q^{-1/2}) / 2
            let (w, u) = eigh(&q);
            let mut q_isqrt = czeros(q.nrows(), q.ncols());
            for (j, &wj) in w.iter().enumerate() {
                let col = u.column(j).to_owned();
                let scale = c64::new(1.0 / wj.max(1e-300).sqrt(), 0.0);
                let outer_col = col.mapv(|z| z * scale);
                for a in 0..q.nrows() {
                    for b in 0..q.ncols() {
                        q_isqrt[[a, b]] += outer_col[a] * col[b].conj();
                    }
                }
            }
            let sym = q_isqrt.dot(&e.dot(&q_isqrt));
            worst = worst.max(eig_max(&sym) / 2.0);
        }
    }
    worst.max(0.0)
}

/// Sampling oracle used by tests: `Re ⟨F s, s⟩ ≤ tol` for random unit vectors
/// in the span of `sub`.
pub fn sample_cone(
    f: &CMat,
    sub: &CMat,
    samples: usize,
    rng: &mut impl rand::Rng,
) -> f64 {
    use rand::distributions::Distribution;
    let normal = rand::distributions::Uniform::new(-1.0, 1.0);
    let mut worst = f64::NEG_INFINITY;
    if sub.ncols() == 0 {
        return 0.0;
    }
    for _ in 0..samples {
        let coeffs: CVec = (0..sub.ncols())
            .map(|_| c64::new(normal.sample(rng), normal.sample(rng)))
            .collect();
        let v = sub.dot(&coeffs);
        let norm = dot(&v, &v).re().sqrt();
        if norm < 1e-12 {
            continue;
        }
        let v = v.mapv(|z| z / norm);
        worst = worst.max(dot(&f.dot(&v), &v).re());
    }
    worst
}
