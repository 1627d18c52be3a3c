//! Dense complex helpers shared by the state, channel and measure modules.
//!
//! Hermitian spectral work is delegated to `nalgebra`; everything else stays on
//! `ndarray` so that the hot matrix products go through `matrixmultiply`.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2, Zip};

use crate::C64;

pub type CMat = Array2<C64>;

pub fn dagger(m: &ArrayView2<'_, C64>) -> CMat {
    m.t().mapv(|x| x.conj())
}

pub fn trace(m: &ArrayView2<'_, C64>) -> C64 {
    m.diag().sum()
}

/// Largest entrywise modulus.
pub fn max_abs(m: &ArrayView2<'_, C64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.norm()))
}

pub fn max_abs_diff(a: &ArrayView2<'_, C64>, b: &ArrayView2<'_, C64>) -> f64 {
    let mut worst = 0.0_f64;
    Zip::from(a)
        .and(b)
        .for_each(|x, y| worst = worst.max((x - y).norm()));
    worst
}

/// Entrywise distance from Hermiticity, `max |m - m†|`.
pub fn hermiticity_defect(m: &ArrayView2<'_, C64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[[i, j]] - m[[j, i]].conj()).norm());
        }
    }
    worst
}

/// Relative size below which matrix entries are flushed before eigen-solving.
const FLUSH_RATIO: f64 = 1e-60;

fn to_nalgebra(m: &ArrayView2<'_, C64>) -> DMatrix<C64> {
    let n = m.nrows();
    let scale = m.iter().fold(0.0_f64, |a, x| a.max(x.norm()));
    // entries this far below the largest cannot move the spectrum, but their
    // products underflow inside the Householder steps and poison it with NaN
    let floor = scale * FLUSH_RATIO;
    // average with the adjoint so the solver sees an exactly Hermitian input
    DMatrix::from_fn(n, n, |i, j| {
        let x = (m[[i, j]] + m[[j, i]].conj()) * 0.5;
        if x.norm() < floor {
            C64::new(0.0, 0.0)
        } else {
            x
        }
    })
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigenvalues(m: &ArrayView2<'_, C64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut values: Vec<f64> = to_nalgebra(m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect();
    values.sort_by(f64::total_cmp);
    values
}

/// Eigen-decomposition `m = V diag(w) V†` of a Hermitian matrix.
///
/// Columns of the returned matrix are orthonormal eigenvectors, in the same
/// (unsorted) order as the eigenvalues.
pub fn hermitian_eigen(m: &ArrayView2<'_, C64>) -> (Array1<f64>, CMat) {
    let n = m.nrows();
    let eig = to_nalgebra(m).symmetric_eigen();
    let values = Array1::from_iter(eig.eigenvalues.iter().copied());
    let vectors = Array2::from_shape_fn((n, n), |(i, j)| eig.eigenvectors[(i, j)]);
    (values, vectors)
}

/// `exp(g)` for anti-Hermitian `g`, via the spectrum of the Hermitian `i·g`.
///
/// The result is unitary to working precision regardless of `‖g‖`.
pub fn expm_anti_hermitian(g: &ArrayView2<'_, C64>) -> CMat {
    let h = g.mapv(|x| x * C64::i());
    let (w, v) = hermitian_eigen(&h.view());
    let phases = w.mapv(|x| C64::from_polar(1.0, -x));
    let scaled = &v * &phases.view().insert_axis(ndarray::Axis(0));
    scaled.dot(&dagger(&v.view()))
}

/// Trace norm `Σ|w_i|` of a Hermitian matrix.
pub fn hermitian_trace_norm(m: &ArrayView2<'_, C64>) -> f64 {
    if is_diagonal(m) {
        return m.diag().iter().map(|x| x.re.abs()).sum();
    }
    hermitian_eigenvalues(m).iter().map(|x| x.abs()).sum()
}

fn is_diagonal(m: &ArrayView2<'_, C64>) -> bool {
    m.indexed_iter()
        .all(|((i, j), x)| i == j || (x.re == 0.0 && x.im == 0.0))
}

pub fn identity(n: usize) -> CMat {
    Array2::from_diag_elem(n, C64::new(1.0, 0.0))
}
