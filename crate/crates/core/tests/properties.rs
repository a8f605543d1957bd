//! Cross-module property tests: relabeling invariance, weight-scaling laws,
//! the stationary-only specialization, verdict monotonicity, and an
//! independent finite-difference oracle for the stationary solver.

use hypnet_core::graph::{EdgeSpec, MetricGraph};
use hypnet_core::linalg::{ceye, czeros, CVec};
use hypnet_core::models::instantiate;
use hypnet_core::resolvent::solve_a0;
use hypnet_core::state::random_domain_state;
use hypnet_core::system::MatrixField;
use hypnet_core::wellposed::{
    basis_condition, boundary_form, classify, cone_check, min_lambda, ConeMode, Verdict,
};
use hypnet_core::{
    Conditions, EdgeCoefficients, HyperbolicSystem, Tolerances, VertexCondition,
};
use ndarray::{array, Array2};
use ndarray_linalg::{c64, LeastSquaresSvd, Scalar};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

fn r(x: f64) -> c64 {
    c64::new(x, 0.0)
}

/// Second-sound-like single-edge family with `B = 0`, used for the weight
/// scaling laws.
fn b_zero_system(q_weight: f64) -> HyperbolicSystem {
    let preset = instantiate("second_sound", &json!({})).unwrap();
    let mut sys = preset.system;
    if let Conditions::PerVertex(vcs) = &mut sys.conditions {
        vcs[0].q = vcs[0].q.mapv(|z| z * q_weight);
    }
    sys
}

#[test]
fn scaling_qv_preserves_cones_and_rescales_lambda() {
    // B = 0: the semigroup form is Q-independent, the C form scales linearly,
    // and the minimal shift rescales by the inverse factor
    let base = b_zero_system(1.0);
    let scaled = b_zero_system(4.0);
    let sites = base.sites();
    for (site_a, site_b) in sites.iter().zip(scaled.sites().iter()) {
        let fa = boundary_form(&base, site_a);
        let fb = boundary_form(&scaled, site_b);
        let ya = &base.condition(site_a).y;
        let ca = cone_check(&fa, ya, ConeMode::Null, base.tol.eig);
        let cb = cone_check(&fb, ya, ConeMode::Null, scaled.tol.eig);
        assert_eq!(ca.holds, cb.holds);
    }
    // Yd-cone shift at v1 rescales by 1/4 (checked on the adjoint-route cone,
    // where the second-sound shift is finite)
    let la = min_lambda_on_yd(&base, 0);
    let lb = min_lambda_on_yd(&scaled, 0);
    assert!(la.is_finite() && lb.is_finite());
    if la > 0.0 {
        assert!((lb - la / 4.0).abs() <= 1e-6 * la.max(1.0), "{la} vs {lb}");
    }
    // the full-Y theorem cone stays infeasible under scaling
    assert!(min_lambda(&base, &sites[0]).is_infinite());
    assert!(min_lambda(&scaled, &sites[0]).is_infinite());
}

fn min_lambda_on_yd(sys: &HyperbolicSystem, site_idx: usize) -> f64 {
    let sites = sys.sites();
    let vc = sys.condition(&sites[site_idx]);
    hypnet_core::wellposed::min_lambda_on(sys, &sites[site_idx], &vc.yd.clone())
}

#[test]
fn basis_condition_invariant_under_relabeling() {
    // build the Maxwell system with edges and vertices declared in a
    // different order; the basis verdict and dimensions must not change
    let m = array![[r(0.0), r(1.0)], [r(1.0), r(0.0)]];
    let coeff = || EdgeCoefficients::constant(m.clone(), czeros(2, 2), ceye(2));
    let tol = Tolerances::default();
    let build = |flip: bool| {
        let mut vertices = vec!["vm".to_string(), "v0".into(), "vp".into()];
        let mut edges = vec![
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
        ];
        if flip {
            vertices.reverse();
            edges.reverse();
        }
        let graph = MetricGraph::build(vertices, edges).unwrap();
        // conditions: p = 0 at vm, q = 0 at vp, full continuity at v0
        let vm = graph.vertex_index("vm").unwrap();
        let v0 = graph.vertex_index("v0").unwrap();
        let vp = graph.vertex_index("vp").unwrap();
        let mut vcs = vec![VertexCondition::free(1); 3];
        vcs[vm] = VertexCondition::stationary("vm", 2, &array![[r(0.0)], [r(1.0)]], &tol).unwrap();
        vcs[vp] = VertexCondition::stationary("vp", 2, &array![[r(1.0)], [r(0.0)]], &tol).unwrap();
        // v0 trace layout is (e1-block, e2-block) in declaration order either way
        let y0 = array![
            [r(1.0), r(0.0)],
            [r(0.0), r(1.0)],
            [r(1.0), r(0.0)],
            [r(0.0), r(1.0)]
        ];
        vcs[v0] = VertexCondition::stationary("v0", 4, &y0, &tol).unwrap();
        let sys = HyperbolicSystem::new(
            graph,
            vec![coeff(), coeff()],
            Conditions::PerVertex(vcs),
            tol,
        )
        .unwrap();
        basis_condition(&sys)
    };
    let a = build(false);
    let b = build(true);
    assert_eq!(a.holds, b.holds);
    assert_eq!(a.dim_span, b.dim_span);
    assert_eq!(a.count_total, b.count_total);
}

#[test]
fn stationary_specialization_matches_dimension_identity() {
    // all Y^(d) = {0}: W_v reduces to a basis of Y^⊥ and the identity
    // Σ dim Y_v = k is the counting part of the basis condition
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..10 {
        let k_dims = [1usize, 2];
        let ke = k_dims[rng.gen_range(0..2)];
        let graph = MetricGraph::build(
            vec!["a".into(), "b".into()],
            vec![EdgeSpec {
                id: "e".into(),
                tail: "a".into(),
                head: "b".into(),
                length: 1.0,
                fiber_dim: ke,
            }],
        )
        .unwrap();
        let mut h = czeros(ke, ke);
        for i in 0..ke {
            for j in 0..ke {
                h[[i, j]] = c64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
        }
        let m = (&h + &hypnet_core::linalg::adjoint(&h)).mapv(|z| z * 0.5)
            + ceye(ke).mapv(|z| z * 2.0);
        let coeff = EdgeCoefficients::constant(m, czeros(ke, ke), ceye(ke));
        let tol = Tolerances::default();
        let d_a = rng.gen_range(0..=ke);
        let d_b = rng.gen_range(0..=ke);
        let rand_span = |d: usize, rng: &mut ChaCha8Rng| {
            let mut s = czeros(ke, d);
            for i in 0..ke {
                for j in 0..d {
                    s[[i, j]] = c64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                }
            }
            s
        };
        let sa = rand_span(d_a, &mut rng);
        let sb = rand_span(d_b, &mut rng);
        let vca = match VertexCondition::stationary("a", ke, &sa, &tol) {
            Ok(v) => v,
            Err(_) => continue,
        };
        let vcb = match VertexCondition::stationary("b", ke, &sb, &tol) {
            Ok(v) => v,
            Err(_) => continue,
        };
        let sys = HyperbolicSystem::new(
            graph,
            vec![coeff],
            Conditions::PerVertex(vec![vca, vcb]),
            tol,
        )
        .unwrap();
        let basis = basis_condition(&sys);
        assert_eq!(
            basis.shortcut_used,
            hypnet_core::wellposed::BasisShortcut::Stationary
        );
        let sum_dim_y = d_a + d_b;
        assert_eq!(basis.shortcut_identity, Some(sum_dim_y == sys.graph.k()));
        // counting part of the basis condition is exactly the identity
        assert_eq!(basis.count_total == basis.k, sum_dim_y == sys.graph.k());
        for site in basis.per_site {
            assert_eq!(site.dim_ran_bstar, 0);
            assert_eq!(site.dim_ker_bstar, 0);
        }
    }
}

#[test]
fn verdict_monotone_under_addon_removal() {
    // stripping the contractive/unitary add-ons may only downgrade
    // unitary_group -> group and contractive_semigroup -> semigroup
    for name in hypnet_core::models::MODEL_NAMES {
        let preset = instantiate(name, &json!({})).unwrap();
        let report = classify(&preset.system);
        match report.verdict {
            Verdict::UnitaryGroup => {
                assert!(report.basis_route.holds_group || report.adjoint_route.holds_group)
            }
            Verdict::ContractiveSemigroup => {
                assert!(
                    report.basis_route.holds_semigroup || report.adjoint_route.holds_semigroup
                );
                assert!(!report.basis_route.holds_group && !report.adjoint_route.holds_group);
            }
            Verdict::Group => {
                assert!(report.basis_route.holds_group || report.adjoint_route.holds_group)
            }
            Verdict::Semigroup => {
                assert!(
                    report.basis_route.holds_semigroup || report.adjoint_route.holds_semigroup
                )
            }
            Verdict::Inconclusive => {}
        }
    }
}

#[test]
fn transport_energy_nonincreasing() {
    let preset = instantiate("transport", &json!({})).unwrap();
    let sys = preset.system;
    let gen = hypnet_core::evolve::assemble_discrete_generator(&sys, &[48, 48]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let init = random_domain_state(&sys, &[48, 48], &mut rng);
    let traj = hypnet_core::evolve::simulate(
        &sys,
        &gen,
        &init,
        &hypnet_core::evolve::SimOptions {
            t_final: 2.0,
            method: hypnet_core::evolve::Method::Expm,
            dt: None,
            n_outputs: 32,
            cfl: 0.4,
        },
    )
    .unwrap();
    for pair in traj.energies.windows(2) {
        assert!(
            pair[1] <= pair[0] * (1.0 + 1e-10),
            "energy increased: {} -> {}",
            pair[0],
            pair[1]
        );
    }
}

/// Independent finite-difference oracle for the stationary solve on the
/// Maxwell two-interval system: the raw boundary-value problem is assembled
/// with central differences and raw transmission rows, then solved by least
/// squares. Nothing of the constructive `K_e` machinery is reused.
#[test]
fn stationary_solve_matches_finite_difference_oracle() {
    let preset = instantiate("maxwell_two_intervals", &json!({})).unwrap();
    let sys = preset.system;
    let n = 2000usize;
    let mut f: Vec<Array2<c64>> = Vec::new();
    for _ in 0..2 {
        let mut arr = Array2::zeros((n + 1, 2));
        for i in 0..=n {
            arr[[i, 0]] = r(0.4); // constant forcing
            arr[[i, 1]] = r(-0.25);
        }
        f.push(arr);
    }
    let g = vec![CVec::zeros(2), CVec::zeros(4), CVec::zeros(2)];
    let state = solve_a0(&sys, &f, &g).unwrap();

    // oracle: unknowns are the stacked nodal values of both edges
    let nn = 2 * (n + 1) * 2;
    let h = 1.0 / n as f64;
    let m_inv = array![[r(0.0), r(1.0)], [r(1.0), r(0.0)]]; // M^{-1} = M here
    let idx = |edge: usize, node: usize, comp: usize| edge * (n + 1) * 2 + node * 2 + comp;
    let mut rows: Vec<(Vec<(usize, c64)>, c64)> = Vec::new();
    for edge in 0..2 {
        for node in 0..=n {
            let rhs = m_inv.dot(&f[edge].row(node).to_owned());
            for comp in 0..2 {
                let mut row = Vec::new();
                if node == 0 {
                    row.push((idx(edge, 0, comp), r(-1.5 / h)));
                    row.push((idx(edge, 1, comp), r(2.0 / h)));
                    row.push((idx(edge, 2, comp), r(-0.5 / h)));
                } else if node == n {
                    row.push((idx(edge, n, comp), r(1.5 / h)));
                    row.push((idx(edge, n - 1, comp), r(-2.0 / h)));
                    row.push((idx(edge, n - 2, comp), r(0.5 / h)));
                } else {
                    row.push((idx(edge, node - 1, comp), r(-0.5 / h)));
                    row.push((idx(edge, node + 1, comp), r(0.5 / h)));
                }
                rows.push((row, rhs[comp]));
            }
        }
    }
    let w = r(100.0); // constraint rows enforced strongly
    // p1(-1) = 0 and q2(1) = 0
    rows.push((vec![(idx(0, 0, 0), w)], r(0.0)));
    rows.push((vec![(idx(1, n, 1), w)], r(0.0)));
    // continuity of p at the center
    rows.push((
        vec![(idx(0, n, 0), w), (idx(1, 0, 0), -w)],
        r(0.0),
    ));
    // dynamic row of the solved operator: B γ − P^{(d,0)} x = 0 with
    // surjective B, i.e. q2(0) − q1(0) = 0
    rows.push((
        vec![(idx(1, 0, 1), w), (idx(0, n, 1), -w)],
        r(0.0),
    ));
    let mut a = czeros(rows.len(), nn);
    let mut b: CVec = CVec::zeros(rows.len());
    for (i, (row, rhs)) in rows.iter().enumerate() {
        for &(j, v) in row {
            a[[i, j]] = v;
        }
        b[i] = *rhs;
    }
    let sol = a.least_squares(&b).unwrap().solution;

    let mut worst: f64 = 0.0;
    for edge in 0..2 {
        for node in (0..=n).step_by(97) {
            for comp in 0..2 {
                let diff = (sol[idx(edge, node, comp)]
                    - state.edge_values[edge][[node, comp]])
                .norm();
                worst = worst.max(diff);
            }
        }
    }
    assert!(
        worst < 5e-4,
        "finite-difference oracle disagrees by {worst:.3e}"
    );
}

#[test]
fn sampled_vs_constant_coefficients_same_classification() {
    let preset = instantiate("maxwell_two_intervals", &json!({})).unwrap();
    let mut sys = preset.system;
    for coeff in &mut sys.coefficients {
        let m0 = coeff.m.eval(0.0);
        let q0 = coeff.q.eval(0.0);
        coeff.m = MatrixField::Sampled(vec![m0; 9]);
        coeff.q = MatrixField::Sampled(vec![q0; 9]);
    }
    let report = classify(&sys);
    assert_eq!(report.verdict, Verdict::UnitaryGroup);
}

#[test]
fn cone_check_agrees_with_sampling_oracle() {
    use hypnet_core::wellposed::sample_cone;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..20 {
        let dim = rng.gen_range(2..6);
        let mut h = czeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                h[[i, j]] = c64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
        }
        let f = (&h + &hypnet_core::linalg::adjoint(&h)).mapv(|z| z * 0.5);
        let d = rng.gen_range(1..=dim);
        let mut span = czeros(dim, d);
        for i in 0..dim {
            for j in 0..d {
                span[[i, j]] = c64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
        }
        let basis = hypnet_core::linalg::orthonormal_span(&span, 1e-9);
        let res = cone_check(&f, &basis, ConeMode::Nonpositive, 1e-10);
        let worst = sample_cone(&f, &basis, 10_000, &mut rng);
        if res.holds {
            assert!(worst <= 1e-8, "sampling found {worst:.3e} on a certified cone");
        } else {
            // the witness really achieves a positive value
            let v = &res.witness;
            let quad = hypnet_core::linalg::form(&f, v);
            assert!(quad > 0.0);
        }
    }
}

#[test]
fn projector_identities() {
    // the four projectors satisfy P_Y = P_d + P_d_perp and P_d0 ⊆ P_d
    for name in hypnet_core::models::MODEL_NAMES {
        let preset = instantiate(name, &json!({})).unwrap();
        let sys = preset.system;
        for site in sys.sites() {
            let vc = sys.condition(&site);
            let p = hypnet_core::wellposed::projectors(vc, sys.tol.rank);
            let sum = &p.p_d + &p.p_d_perp;
            let diff = &sum - &p.p_y;
            assert!(hypnet_core::linalg::frobenius(&diff) < 1e-10, "{name}");
            let comp = p.p_d.dot(&p.p_d0);
            let diff0 = &comp - &p.p_d0;
            assert!(hypnet_core::linalg::frobenius(&diff0) < 1e-10, "{name}");
            // idempotent and Hermitian
            for proj in [&p.p_d, &p.p_d0, &p.p_d_perp, &p.p_y] {
                let sq = proj.dot(proj);
                assert!(hypnet_core::linalg::frobenius(&(&sq - proj)) < 1e-10);
                assert!(hypnet_core::linalg::asymmetry(proj) < 1e-10);
            }
        }
    }
}

#[test]
fn telegrapher_boundary_term_on_random_traces() {
    // the junction boundary term vanishes on 1000 random admissible traces
    let preset = instantiate("telegrapher_y", &json!({})).unwrap();
    let sys = preset.system;
    let sites = sys.sites();
    let form = boundary_form(&sys, &sites[0]);
    let vc = sys.condition(&sites[0]);
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    for _ in 0..1000 {
        let coeffs: CVec = (0..vc.dim_y())
            .map(|_| c64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let gamma = vc.y.dot(&coeffs);
        let value = hypnet_core::linalg::form(&form, &gamma);
        assert!(value.abs() <= 1e-12 * 10.0, "boundary term {value:.3e}");
    }
}

#[test]
fn wave_star_center_dimensions() {
    for j in [2usize, 3, 5] {
        let preset = instantiate("wave_star", &json!({"j": j})).unwrap();
        let basis = basis_condition(&preset.system);
        assert_eq!(basis.per_site[0].dim_z, j, "dim Z at the center is J");
        assert_eq!(basis.k, 2 * j);
        assert!(basis.holds);
        // B is surjective onto the one-dimensional Y^(d)
        assert_eq!(basis.per_site[0].dim_ran_bstar, 1);
    }
}

#[test]
fn dirac_imaginary_part_develops_from_real_data() {
    // the Dirac semigroup is not real: real initial data grows an imaginary
    // component
    let preset = instantiate("dirac_network", &json!({})).unwrap();
    let sys = preset.system;
    let gen = hypnet_core::evolve::assemble_discrete_generator(&sys, &[32, 32]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let mut init = random_domain_state(&sys, &[32, 32], &mut rng);
    for vals in &mut init.edge_values {
        vals.mapv_inplace(|z| c64::new(z.re(), 0.0));
    }
    let (init, _) = hypnet_core::state::project_to_domain(&sys, &init);
    let traj = hypnet_core::evolve::simulate(
        &sys,
        &gen,
        &init,
        &hypnet_core::evolve::SimOptions {
            t_final: 0.5,
            method: hypnet_core::evolve::Method::Expm,
            dt: None,
            n_outputs: 8,
            cfl: 0.4,
        },
    )
    .unwrap();
    let final_state = traj.snapshots.last().unwrap();
    let max_im = final_state
        .edge_values
        .iter()
        .flat_map(|v| v.iter())
        .map(|z| z.im().abs())
        .fold(0.0f64, f64::max);
    assert!(max_im > 1e-3, "imaginary part should develop, got {max_im:.3e}");
}

#[test]
fn zero_edge_state_dissipation_residual_tiny() {
    // u = 0 forces x = 0 and both identity sides collapse to the C term
    let preset = instantiate("second_sound", &json!({})).unwrap();
    let sys = preset.system;
    let state = hypnet_core::StateVector::zero(&sys, &[32]);
    let rep = hypnet_core::evolve::dissipativity_residual(&sys, &state).unwrap();
    assert!(rep.residual <= 1e-12);
}

#[test]
fn maxwell_dynamic_solve_matches_between_grids() {
    // grid-convergence of the constructive solver on the dynamic preset:
    // quadrature is the only discretization, so refinement converges at
    // second order
    let preset = instantiate("maxwell_two_intervals", &json!({})).unwrap();
    let sys = preset.system;
    let solve_at = |n: usize| {
        let mut f = Vec::new();
        for _ in 0..2 {
            let mut arr = Array2::zeros((n + 1, 2));
            for i in 0..=n {
                let x = i as f64 / n as f64;
                arr[[i, 0]] = r((std::f64::consts::PI * x).sin());
                arr[[i, 1]] = r(0.3 - 0.2 * x);
            }
            f.push(arr);
        }
        let g = vec![CVec::zeros(2), CVec::zeros(4), CVec::zeros(2)];
        solve_a0(&sys, &f, &g).unwrap()
    };
    let coarse = solve_at(250);
    let fine = solve_at(2000);
    let mut worst: f64 = 0.0;
    for edge in 0..2 {
        for i in 0..=250 {
            for comp in 0..2 {
                let diff =
                    (coarse.edge_values[edge][[i, comp]] - fine.edge_values[edge][[8 * i, comp]]).norm();
                worst = worst.max(diff);
            }
        }
    }
    assert!(worst < 5e-5, "grid gap {worst:.3e}");
}

