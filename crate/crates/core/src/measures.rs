//! Purity, von Neumann entropy, trace distance and the quadrature coherence
//! scale.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{mode_operators, DensityMatrix};
use crate::gaussian::GaussianState;
use crate::linalg::{self, CMat};
use crate::{fmt_num, C64};

/// Eigenvalues below this contribute nothing to the entropy.
pub const ENTROPY_FLOOR: f64 = 1e-14;
/// More negative eigenvalues make the entropy undefined.
pub const NEGATIVITY_LIMIT: f64 = 1e-8;
pub const QCS_GUARD_LEVELS: usize = 4;
pub const QCS_GUARD_LIMIT: f64 = 1e-8;

/// `Tr ρ²`, clamped to `(0, 1 + 1e-10]`.
pub fn purity(rho: &DensityMatrix) -> f64 {
    let p: f64 = rho.entries().iter().map(|x| x.norm_sqr()).sum();
    p.clamp(f64::MIN_POSITIVE, 1.0 + 1e-10)
}

/// `−Σ p ln p` over the spectrum of `ρ`.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> Result<f64> {
    let eig = linalg::hermitian_eigenvalues(&rho.view());
    if let Some(&low) = eig.first() {
        if low < -NEGATIVITY_LIMIT {
            return Err(Error::Unphysical(format!(
                "eigenvalue {low:.3e} below −{NEGATIVITY_LIMIT:.0e}"
            )));
        }
    }
    let s: f64 = eig
        .iter()
        .filter(|&&p| p >= ENTROPY_FLOOR)
        .map(|&p| -p * p.ln())
        .sum();
    Ok(s.max(0.0))
}

/// `½ ‖ρ₁ − ρ₂‖₁`.
pub fn trace_distance(rho1: &DensityMatrix, rho2: &DensityMatrix) -> Result<f64> {
    if rho1.layout() != rho2.layout() {
        return Err(Error::Shape(format!(
            "trace distance between states of dimension {} and {}",
            rho1.dim(),
            rho2.dim()
        )));
    }
    Ok(trace_distance_unchecked(&rho1.view(), &rho2.view()))
}

pub(crate) fn trace_distance_unchecked(a: &ArrayView2<'_, C64>, b: &ArrayView2<'_, C64>) -> f64 {
    let diff = a.to_owned() - b;
    0.5 * linalg::hermitian_trace_norm(&diff.view())
}

fn frobenius_sq(m: &CMat) -> f64 {
    m.iter().map(|x| x.norm_sqr()).sum()
}

/// Quadrature coherence scale `C²(ρ) = (‖[ρ,X]‖² + ‖[ρ,P]‖²) / (2 Tr ρ²)` with
/// Frobenius norms, `X = (a† + a)/√2` and `P = i(a† − a)/√2`.
pub fn qcs_squared(rho: &DensityMatrix) -> Result<f64> {
    let cutoff = rho.single_mode_cutoff()?;
    rho.tail_guard(QCS_GUARD_LEVELS, QCS_GUARD_LIMIT, None)
        .map_err(|e| match e {
            Error::TailGuard { occupation, .. } => Error::CutoffTooSmall {
                n_max: cutoff.n_max(),
                reason: format!(
                    "top {QCS_GUARD_LEVELS} levels hold {occupation:.3e} (limit {QCS_GUARD_LIMIT:.0e}) for the coherence scale"
                ),
            },
            other => other,
        })?;
    let ops = mode_operators(cutoff);
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let x = (&ops.create + &ops.annihilate) * C64::new(r, 0.0);
    let p = (&ops.create - &ops.annihilate) * C64::new(0.0, r);
    let m = rho.entries();
    let cx = m.dot(&x) - x.dot(m);
    let cp = m.dot(&p) - p.dot(m);
    Ok((frobenius_sq(&cx) + frobenius_sq(&cp)) / (2.0 * purity(rho)))
}

/// `C²` of a Gaussian state, `½ Tr V⁻¹`.
pub fn qcs_gaussian(g: &GaussianState) -> Result<f64> {
    let v = g.covariance();
    let det = v[0][0] * v[1][1] - v[0][1] * v[1][0];
    if !(det >= 1.0 - 1e-9) {
        return Err(Error::Unphysical(format!(
            "covariance determinant {det} below 1"
        )));
    }
    Ok(0.5 * (v[0][0] + v[1][1]) / det)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureReport {
    pub purity: f64,
    pub entropy: f64,
    pub qcs_squared: f64,
    pub mean_photon: f64,
}

impl MeasureReport {
    pub const CSV_HEADER: &'static str = "purity,entropy,qcs_squared,mean_photon";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{}",
            fmt_num(self.purity),
            fmt_num(self.entropy),
            fmt_num(self.qcs_squared),
            fmt_num(self.mean_photon)
        )
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }
}

pub fn measure_report(rho: &DensityMatrix) -> Result<MeasureReport> {
    rho.validate()?;
    Ok(MeasureReport {
        purity: purity(rho),
        entropy: von_neumann_entropy(rho)?,
        qcs_squared: qcs_squared(rho)?,
        mean_photon: rho.mean_photon_number().max(0.0),
    })
}
