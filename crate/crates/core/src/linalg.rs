//! Dense complex linear algebra helpers shared by every module.
//!
//! Everything here operates on small matrices (trace spaces, vertex blocks,
//! discrete generators at desk scale), so dense LAPACK routines are used
//! throughout.

use ndarray::{s, Array1, Array2, Axis};
use ndarray_linalg::{c64, Eigh, OperationNorm, Scalar, Solve, SVD, UPLO};

pub type CMat = Array2<c64>;
pub type CVec = Array1<c64>;

extern "C" {
    fn openblas_set_num_threads(num_threads: std::os::raw::c_int);
}

/// Pin the BLAS backend to a single thread. Worker pools would make results
/// depend on reduction order (the reports are specified to be deterministic)
/// and their stacks are not sized for this environment.
pub fn ensure_deterministic_blas() {
    static ONCE: std::sync::Once = std::sync::Once::new();
    ONCE.call_once(|| unsafe {
        openblas_set_num_threads(1);
    });
}

/// Zero complex matrix of the given shape.
pub fn czeros(rows: usize, cols: usize) -> CMat {
    CMat::zeros((rows, cols))
}

/// Complex identity.
pub fn ceye(n: usize) -> CMat {
    CMat::eye(n)
}

/// Real matrix lifted to complex entries.
pub fn lift(real: &Array2<f64>) -> CMat {
    real.mapv(|x| c64::new(x, 0.0))
}

/// Conjugate transpose.
pub fn adjoint(a: &CMat) -> CMat {
    a.t().mapv(|z| z.conj())
}

/// Hermitian part (A + A*)/2.
pub fn hermitian_part(a: &CMat) -> CMat {
    let ad = adjoint(a);
    (a + &ad).mapv(|z| z * 0.5)
}

pub fn frobenius(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Deviation from Hermitian symmetry, relative to the Frobenius norm.
pub fn asymmetry(a: &CMat) -> f64 {
    let scale = frobenius(a).max(1.0);
    let ad = adjoint(a);
    frobenius(&(a - &ad)) / scale
}

/// Operator infinity norm (max absolute row sum).
pub fn inf_norm(a: &CMat) -> f64 {
    a.axis_iter(Axis(0))
        .map(|row| row.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Inner product `⟨a, b⟩ = Σ a_i conj(b_i)` (linear in the first argument).
pub fn dot(a: &CVec, b: &CVec) -> c64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y.conj()).sum()
}

/// Quadratic form `⟨F v, v⟩` of a (usually Hermitian) matrix; real part returned.
pub fn form(f: &CMat, v: &CVec) -> f64 {
    dot(&f.dot(v), v).re()
}

/// Eigenvalues and eigenvectors of a Hermitian matrix, ascending.
pub fn eigh(a: &CMat) -> (Array1<f64>, CMat) {
    ensure_deterministic_blas();
    hermitian_part(a)
        .eigh(UPLO::Lower)
        .expect("hermitian eigendecomposition failed")
}

pub fn eig_max(a: &CMat) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    let (w, _) = eigh(a);
    w[w.len() - 1]
}

pub fn eig_min(a: &CMat) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    let (w, _) = eigh(a);
    w[0]
}

/// Singular values, descending.
pub fn singular_values(a: &CMat) -> Array1<f64> {
    ensure_deterministic_blas();
    let (_, s, _) = a.svd(false, false).expect("svd failed");
    s
}

/// Numerical rank with a tolerance relative to the largest singular value.
pub fn rank(a: &CMat, tol_rel: f64) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let s = singular_values(a);
    let cut = s[0] * tol_rel;
    if s[0] == 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > cut).count()
}

/// Orthonormal basis of the column span (rank revealed by SVD).
pub fn orthonormal_span(a: &CMat, tol_rel: f64) -> CMat {
    if a.ncols() == 0 || a.nrows() == 0 {
        return czeros(a.nrows(), 0);
    }
    ensure_deterministic_blas();
    let (u, s, _) = a.svd(true, false).expect("svd failed");
    let u = u.expect("svd requested u");
    if s.len() == 0 || s[0] == 0.0 {
        return czeros(a.nrows(), 0);
    }
    let r = s.iter().filter(|&&x| x > s[0] * tol_rel).count();
    // materialize with fresh strides: sliced singleton views can carry zero
    // strides, which the LAPACK wrappers reject downstream
    let mut out = czeros(a.nrows(), r);
    out.assign(&u.slice(s![.., ..r]));
    out
}

/// Orthonormalize user-supplied spanning columns; rank deficiency is an error.
pub fn orthonormalize_exact(a: &CMat, tol_rel: f64) -> Result<CMat, usize> {
    let span = orthonormal_span(a, tol_rel);
    if span.ncols() != a.ncols() {
        Err(span.ncols())
    } else {
        Ok(span)
    }
}

/// Orthonormal basis of the null space of `a` (right singular vectors with
/// singular value below `tol_rel * sigma_max`).
pub fn null_space(a: &CMat, tol_rel: f64) -> CMat {
    let n = a.ncols();
    if n == 0 {
        return czeros(0, 0);
    }
    if a.nrows() == 0 {
        return ceye(n);
    }
    ensure_deterministic_blas();
    let (_, s, vt) = a.svd(false, true).expect("svd failed");
    let vt = vt.expect("svd requested vt");
    let smax = if s.len() == 0 { 0.0 } else { s[0] };
    if smax == 0.0 {
        return ceye(n);
    }
    let r = s.iter().filter(|&&x| x > smax * tol_rel).count();
    // rows r.. of V^H span the kernel; transpose-conjugate them into columns
    let mut rows = czeros(n - r, n);
    rows.assign(&vt.slice(s![r.., ..]));
    adjoint(&rows)
}

/// Orthogonal projector onto the span of orthonormal columns.
pub fn projector(basis: &CMat) -> CMat {
    if basis.ncols() == 0 {
        return czeros(basis.nrows(), basis.nrows());
    }
    basis.dot(&adjoint(basis))
}

/// Residual of `sub ⊆ span(space_basis)`: `‖(I - P) sub‖ / max(1, ‖sub‖)`.
pub fn containment_residual(sub: &CMat, space_basis: &CMat) -> f64 {
    if sub.ncols() == 0 {
        return 0.0;
    }
    let p = projector(space_basis);
    let resid = sub - &p.dot(sub);
    frobenius(&resid) / frobenius(sub).max(1.0)
}

/// 2-norm condition number estimate via singular values.
pub fn cond2(a: &CMat) -> f64 {
    let s = singular_values(a);
    if s.len() == 0 || s[s.len() - 1] == 0.0 {
        f64::INFINITY
    } else {
        s[0] / s[s.len() - 1]
    }
}

/// Linear solve (LU with partial pivoting).
pub fn solve(a: &CMat, b: &CVec) -> Result<CVec, String> {
    ensure_deterministic_blas();
    a.solve(b).map_err(|e| e.to_string())
}

/// Matrix exponential by Padé(13) scaling and squaring.
///
/// Follows Higham's 2005 algorithm with the standard theta constants; good to
/// machine precision for the moderate norms that arise here.
pub fn expm(a: &CMat) -> CMat {
    ensure_deterministic_blas();
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    if n == 0 {
        return czeros(0, 0);
    }
    let norm = a.opnorm_one().expect("opnorm");
    let theta13 = 5.371920351148152;
    let mut squarings = 0usize;
    let a_scaled = if norm > theta13 {
        squarings = ((norm / theta13).log2().ceil()) as usize;
        let factor = c64::new(0.5f64.powi(squarings as i32), 0.0);
        a.mapv(|z| z * factor)
    } else {
        a.clone()
    };

    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];

    let ident = ceye(n);
    let a2 = a_scaled.dot(&a_scaled);
    let a4 = a2.dot(&a2);
    let a6 = a4.dot(&a2);

    let u_inner = a6.mapv(|z| z * B[13])
        + a4.mapv(|z| z * B[11])
        + a2.mapv(|z| z * B[9]);
    let u_part = a6.dot(&u_inner)
        + a6.mapv(|z| z * B[7])
        + a4.mapv(|z| z * B[5])
        + a2.mapv(|z| z * B[3])
        + ident.mapv(|z| z * B[1]);
    let u = a_scaled.dot(&u_part);

    let v_inner = a6.mapv(|z| z * B[12])
        + a4.mapv(|z| z * B[10])
        + a2.mapv(|z| z * B[8]);
    let v = a6.dot(&v_inner)
        + a6.mapv(|z| z * B[6])
        + a4.mapv(|z| z * B[4])
        + a2.mapv(|z| z * B[2])
        + ident.mapv(|z| z * B[0]);

    let lhs = &v - &u;
    let rhs = &v + &u;
    let mut result = solve_matrix(&lhs, &rhs);
    for _ in 0..squarings {
        result = result.dot(&result);
    }
    result
}

/// Solve `A X = B` with a single LU factorization (avoids the large
/// scratch frames of the matrix-inverse path).
pub fn solve_matrix(a: &CMat, b: &CMat) -> CMat {
    use ndarray_linalg::Factorize;
    ensure_deterministic_blas();
    let f = a.factorize().expect("LU factorization failed");
    let n = a.nrows();
    let mut out = czeros(n, b.ncols());
    for (j, col) in b.axis_iter(Axis(1)).enumerate() {
        let x = f.solve(&col.to_owned()).expect("linear solve failed");
        out.column_mut(j).assign(&x);
    }
    out
}

/// Smallest `λ ≥ 0` with `F − λ G ⪯ tol` on the whole space, or `None` when no
/// finite shift works. `F` Hermitian, `G` Hermitian positive semidefinite.
///
/// A finite shift exists iff `F ⪯ 0` on `ker G` and the near-null directions
/// of `F` inside `ker G` do not couple to `ran G`; the shift itself is found
/// by bisection on `λ ↦ λ_max(F − λG)`, which is convex.
pub fn min_shift(f: &CMat, g: &CMat, tol: f64) -> Option<f64> {
    let n = f.nrows();
    if n == 0 {
        return Some(0.0);
    }
    let scale = frobenius(f).max(frobenius(g)).max(1.0);
    let threshold = tol * scale + tol;
    let feasible = |lambda: f64| -> bool {
        let shifted = f - &g.mapv(|z| z * c64::new(lambda, 0.0));
        eig_max(&shifted) <= threshold
    };
    if feasible(0.0) {
        return Some(0.0);
    }
    let (gw, gv) = eigh(g);
    let g_max = gw[gw.len() - 1].max(0.0);
    if g_max <= threshold {
        return None; // G vanishes and F is not nonpositive
    }
    let cut = g_max * 1e-9;
    let zero_idx: Vec<usize> = (0..n).filter(|&i| gw[i] <= cut).collect();
    let pos_idx: Vec<usize> = (0..n).filter(|&i| gw[i] > cut).collect();
    if !zero_idx.is_empty() {
        let v0 = select_columns(&gv, &zero_idx);
        let f00 = adjoint(&v0).dot(&f.dot(&v0));
        if eig_max(&f00) > threshold {
            return None;
        }
        // near-null directions of F inside ker G must not couple to ran G
        let (fw, fv) = eigh(&f00);
        let null_idx: Vec<usize> = (0..fw.len()).filter(|&i| fw[i] > -threshold).collect();
        if !null_idx.is_empty() && !pos_idx.is_empty() {
            let nmat = v0.dot(&select_columns(&fv, &null_idx));
            let vp = select_columns(&gv, &pos_idx);
            let cross = adjoint(&nmat).dot(&f.dot(&vp));
            if frobenius(&cross) > threshold {
                return None;
            }
        }
    }
    let hi_start = (2.0 * frobenius(f) / g_max.max(1e-300)).max(1.0);
    let mut hi = hi_start;
    let mut found = None;
    for _ in 0..60 {
        if feasible(hi) {
            found = Some(hi);
            break;
        }
        hi *= 4.0;
        if hi > 1e12 * hi_start {
            break;
        }
    }
    let mut hi = found?;
    let mut lo = 0.0;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

fn select_columns(a: &CMat, idx: &[usize]) -> CMat {
    let mut out = czeros(a.nrows(), idx.len());
    for (j, &i) in idx.iter().enumerate() {
        out.column_mut(j).assign(&a.column(i));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn c(re: f64, im: f64) -> c64 {
        c64::new(re, im)
    }

    #[test]
    fn hermitian_eigenvalues_of_pauli_y() {
        let a = array![[c(0.0, 0.0), c(0.0, -1.0)], [c(0.0, 1.0), c(0.0, 0.0)]];
        let (w, _) = eigh(&a);
        assert_abs_diff_eq!(w[0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn null_space_of_rank_one() {
        let a = array![[c(1.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(1.0, 0.0)]];
        let ns = null_space(&a, 1e-12);
        assert_eq!(ns.ncols(), 1);
        let residual = a.dot(&ns);
        assert!(frobenius(&residual) < 1e-12);
    }

    #[test]
    fn expm_matches_rotation() {
        // exp(t [[0,-1],[1,0]]) is a rotation by t
        let t = 0.7;
        let a = array![[c(0.0, 0.0), c(-t, 0.0)], [c(t, 0.0), c(0.0, 0.0)]];
        let e = expm(&a);
        assert_abs_diff_eq!(e[[0, 0]].re(), t.cos(), epsilon = 1e-12);
        assert_abs_diff_eq!(e[[1, 0]].re(), t.sin(), epsilon = 1e-12);
    }

    #[test]
    fn expm_scaling_branch() {
        // norm above theta13 forces squaring steps
        let a = array![[c(0.0, 20.0), c(0.0, 0.0)], [c(0.0, 0.0), c(0.0, -20.0)]];
        let e = expm(&a);
        assert_abs_diff_eq!(e[[0, 0]].re(), 20.0f64.cos(), epsilon = 1e-10);
        assert_abs_diff_eq!(e[[0, 0]].im(), 20.0f64.sin(), epsilon = 1e-10);
    }

    #[test]
    fn min_shift_diagonal() {
        // F = diag(1, -1), G = diag(1, 1): smallest shift is 1
        let f = array![[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(-1.0, 0.0)]];
        let g = ceye(2);
        let lam = min_shift(&f, &g, 1e-12).unwrap();
        assert_abs_diff_eq!(lam, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn min_shift_infeasible_cross_term() {
        // F couples ker(G) to ran(G): no finite shift can help
        let f = array![[c(0.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]];
        let g = array![[c(0.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]];
        assert!(min_shift(&f, &g, 1e-12).is_none());
    }

    #[test]
    fn orthonormalize_rejects_rank_deficient() {
        let a = array![
            [c(1.0, 0.0), c(2.0, 0.0)],
            [c(1.0, 0.0), c(2.0, 0.0)],
            [c(0.0, 0.0), c(0.0, 0.0)]
        ];
        assert!(orthonormalize_exact(&a, 1e-9).is_err());
    }
}
