//! Dense Hermitian solves for the small per-bin systems of the beamformer.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use num_complex::Complex64;

/// Lower-triangular Cholesky factor of a Hermitian positive definite matrix.
///
/// Returns `None` when a pivot falls to or below `tol` times the largest
/// diagonal entry.
pub(crate) fn cholesky(a: ArrayView2<'_, Complex64>, tol: f64) -> Option<Array2<Complex64>> {
    let n = a.nrows();
    let scale = (0..n).map(|i| a[[i, i]].re).fold(0.0f64, f64::max);
    if !scale.is_finite() || scale <= 0.0 {
        return None;
    }
    let mut l = Array2::<Complex64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]].re;
        for k in 0..j {
            d -= l[[j, k]].norm_sqr();
        }
        if d <= tol * scale || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        l[[j, j]] = Complex64::new(d, 0.0);
        for i in j + 1..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]].conj();
            }
            l[[i, j]] = s / d;
        }
    }
    Some(l)
}

/// Solve `L L^H x = b` given the Cholesky factor `L`.
pub(crate) fn cholesky_solve(l: &Array2<Complex64>, b: ArrayView1<'_, Complex64>) -> Array1<Complex64> {
    let n = l.nrows();
    let mut y = Array1::<Complex64>::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    let mut x = Array1::<Complex64>::zeros(n);
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[[k, i]].conj() * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    x
}

/// `x^H A x` for Hermitian `A`, real by construction up to rounding.
pub(crate) fn quadratic_form(a: ArrayView2<'_, Complex64>, x: ArrayView1<'_, Complex64>) -> Complex64 {
    let n = x.len();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += x[i].conj() * a[[i, j]] * x[j];
        }
    }
    acc
}
