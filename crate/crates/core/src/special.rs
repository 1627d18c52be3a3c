//! Laguerre polynomials and the q-Pochhammer symbol.

use crate::error::{Error, Result};

/// `L_n(x) = Σ_{j=0}^n C(n, j) (−x)^j / j!` by the explicit binomial sum.
pub fn laguerre(n: usize, x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for j in 0..n {
        term *= (n - j) as f64 / (j + 1) as f64 * (-x) / (j + 1) as f64;
        sum += term;
    }
    sum
}

/// `(a; q)_∞ = Π_{k≥0} (1 − a q^k)`.
///
/// Factors are multiplied while `|a q^k| ≥ rel_tol (1 − |q|)`; the omitted
/// tail then perturbs the product by a relative amount below `rel_tol`.
pub fn q_pochhammer(a: f64, q: f64, rel_tol: f64) -> Result<f64> {
    q_pochhammer_with_terms(a, q, rel_tol).map(|(v, _)| v)
}

/// As [`q_pochhammer`], also returning the number of factors used.
pub fn q_pochhammer_with_terms(a: f64, q: f64, rel_tol: f64) -> Result<(f64, usize)> {
    if !(q.abs() < 1.0) {
        return Err(Error::Domain(format!(
            "q-Pochhammer needs |q| < 1, got q = {q}"
        )));
    }
    if !(rel_tol > 0.0) {
        return Err(Error::param(
            "rel_tol",
            format!("must be positive, got {rel_tol}"),
        ));
    }
    let cutoff = rel_tol * (1.0 - q.abs());
    let mut term = a;
    let mut product = 1.0;
    let mut terms = 0;
    while term.abs() >= cutoff {
        product *= 1.0 - term;
        term *= q;
        terms += 1;
    }
    Ok((product, terms))
}
