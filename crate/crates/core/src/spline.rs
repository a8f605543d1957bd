//! Natural cubic spline interpolation on a uniform grid, for complex-valued
//! samples. Used to manufacture smooth states in the operator domain and to
//! differentiate sampled states.

use crate::linalg::CVec;
use ndarray_linalg::c64;

/// Natural cubic spline through `values[i]` at `x_i = i·h`.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    h: f64,
    values: Vec<c64>,
    /// second derivatives at the nodes (natural: zero at both ends)
    m: Vec<c64>,
}

impl CubicSpline {
    pub fn natural(values: &CVec, h: f64) -> Self {
        let n = values.len();
        assert!(n >= 2, "spline needs at least two nodes");
        let mut m = vec![c64::new(0.0, 0.0); n];
        if n > 2 {
            // tridiagonal system for the interior second derivatives
            let dim = n - 2;
            let mut diag = vec![4.0; dim];
            let mut rhs: Vec<c64> = (1..n - 1)
                .map(|i| (values[i + 1] - values[i] * 2.0 + values[i - 1]) * (6.0 / (h * h)))
                .collect();
            // Thomas algorithm (sub/super diagonals are all 1)
            for i in 1..dim {
                let w = 1.0 / diag[i - 1];
                diag[i] -= w;
                let prev = rhs[i - 1];
                rhs[i] -= prev * w;
            }
            m[n - 2] = rhs[dim - 1] / diag[dim - 1];
            for i in (0..dim - 1).rev() {
                m[i + 1] = (rhs[i] - m[i + 2]) / diag[i];
            }
        }
        Self {
            h,
            values: values.to_vec(),
            m,
        }
    }

    fn segment(&self, x: f64) -> (usize, f64) {
        let n = self.values.len() - 1;
        let s = (x / self.h).clamp(0.0, n as f64);
        let i = (s.floor() as usize).min(n - 1);
        (i, x - i as f64 * self.h)
    }

    pub fn eval(&self, x: f64) -> c64 {
        let (i, dx) = self.segment(x);
        let h = self.h;
        let a = (self.values[i + 1] - self.values[i]) / h
            - (self.m[i + 1] + self.m[i] * 2.0) * (h / 6.0);
        self.values[i]
            + a * dx
            + self.m[i] * (dx * dx / 2.0)
            + (self.m[i + 1] - self.m[i]) * (dx * dx * dx / (6.0 * h))
    }

    pub fn deriv(&self, x: f64) -> c64 {
        let (i, dx) = self.segment(x);
        let h = self.h;
        let a = (self.values[i + 1] - self.values[i]) / h
            - (self.m[i + 1] + self.m[i] * 2.0) * (h / 6.0);
        a + self.m[i] * dx + (self.m[i + 1] - self.m[i]) * (dx * dx / (2.0 * h))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::Array1;
    use ndarray_linalg::Scalar;

    #[test]
    fn reproduces_linear_data_exactly() {
        let values: CVec = Array1::from_iter((0..5).map(|i| c64::new(2.0 * i as f64 + 1.0, 0.0)));
        let s = CubicSpline::natural(&values, 0.5);
        assert_abs_diff_eq!(s.eval(0.8).re(), 2.0 * (0.8 / 0.5) + 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.deriv(1.3).re(), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn interpolates_nodes() {
        let values: CVec = Array1::from_iter(
            (0..7).map(|i| c64::new((i as f64).sin(), (i as f64).cos())),
        );
        let s = CubicSpline::natural(&values, 1.0);
        for i in 0..7 {
            let v = s.eval(i as f64);
            assert_abs_diff_eq!(v.re(), values[i].re(), epsilon = 1e-12);
            assert_abs_diff_eq!(v.im(), values[i].im(), epsilon = 1e-12);
        }
    }

    #[test]
    fn derivative_converges_on_smooth_data() {
        // away from the boundary closures the nodal derivative is O(h^2);
        // at the ends the natural condition limits it to O(h)
        let err = |n: usize| -> f64 {
            let h = 1.0 / n as f64;
            let values: CVec =
                Array1::from_iter((0..=n).map(|i| c64::new((i as f64 * h).sin(), 0.0)));
            let s = CubicSpline::natural(&values, h);
            (n / 4..=3 * n / 4)
                .map(|i| (s.deriv(i as f64 * h).re() - (i as f64 * h).cos()).abs())
                .fold(0.0, f64::max)
        };
        let e32 = err(32);
        let e64 = err(64);
        assert!(e64 < e32 / 3.0, "e32={e32:.3e} e64={e64:.3e}");
    }
}
