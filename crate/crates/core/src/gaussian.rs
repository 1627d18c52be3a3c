//! Single-mode Gaussian states.
//!
//! Stored as the quadrature covariance `V` and mean `d` for
//! `X = (a† + a)/√2`, `P = i(a† − a)/√2`, with `V = 2 Cov_sym(X, P)` so that
//! the vacuum has `V = I`. The ladder-operator form used by the characteristic
//! function is `A = 2 Cov` in the `(b, b†)` ordering and `Δ = (⟨b⟩, ⟨b†⟩)`:
//!
//! ```text
//! A₀₀ = ½(V₁₁ − V₂₂) + i V₁₂    A₀₁ = A₁₀ = ½(V₁₁ + V₂₂)    A₁₁ = A₀₀*
//! ⟨b⟩ = (d₁ + i d₂)/√2
//! ```

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::fock::{beta_for_mean_photon, mode_operators, DensityMatrix, TAIL_MASS_LIMIT};
use crate::C64;

/// Slack on the uncertainty bound `det V ≥ 1`.
pub const DET_TOL: f64 = 1e-9;
pub const THERMAL_MATCH_TOL: f64 = 1e-7;
/// Tolerance on the `(A, Δ)` structural constraints when importing.
const STRUCTURE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianState {
    v: [[f64; 2]; 2],
    d: [f64; 2],
}

impl GaussianState {
    pub fn new(v: [[f64; 2]; 2], d: [f64; 2]) -> Result<Self> {
        if v.iter().flatten().chain(&d).any(|x| !x.is_finite()) {
            return Err(Error::Unphysical("non-finite Gaussian parameters".into()));
        }
        if (v[0][1] - v[1][0]).abs() > STRUCTURE_TOL * (1.0 + v[0][1].abs()) {
            return Err(Error::Unphysical(format!(
                "V is not symmetric: {} vs {}",
                v[0][1], v[1][0]
            )));
        }
        let sym = 0.5 * (v[0][1] + v[1][0]);
        let g = GaussianState {
            v: [[v[0][0], sym], [sym, v[1][1]]],
            d,
        };
        let det = g.det_v();
        if !(det >= 1.0 - DET_TOL) || v[0][0] <= 0.0 {
            return Err(Error::Unphysical(format!(
                "det V = {det} violates det V ≥ 1"
            )));
        }
        Ok(g)
    }

    /// From the ladder form `(A, Δ)`; checks the structural constraints.
    pub fn from_ladder(a: [[C64; 2]; 2], delta: [C64; 2]) -> Result<Self> {
        let scale = 1.0 + a[0][1].norm();
        let bad = (a[0][1] - a[1][0]).norm() > STRUCTURE_TOL * scale
            || a[0][1].im.abs() > STRUCTURE_TOL * scale
            || (a[1][1] - a[0][0].conj()).norm() > STRUCTURE_TOL * scale
            || (delta[1] - delta[0].conj()).norm() > STRUCTURE_TOL * (1.0 + delta[0].norm());
        if bad {
            return Err(Error::Unphysical(
                "A must have real equal off-diagonals and A₁₁ = A₀₀*, Δ must be (⟨b⟩, ⟨b⟩*)".into(),
            ));
        }
        let (a00, a01) = (a[0][0], a[0][1].re);
        let v = [[a01 + a00.re, a00.im], [a00.im, a01 - a00.re]];
        let d = [SQRT_2 * delta[0].re, SQRT_2 * delta[0].im];
        Self::new(v, d)
    }

    pub fn vacuum() -> Self {
        GaussianState {
            v: [[1.0, 0.0], [0.0, 1.0]],
            d: [0.0, 0.0],
        }
    }

    /// Thermal state with mean photon number `n_bar`: `V = (2n̄ + 1) I`.
    pub fn thermal(n_bar: f64) -> Result<Self> {
        if !(n_bar >= 0.0) || !n_bar.is_finite() {
            return Err(Error::param(
                "n_bar",
                format!("must be finite and nonnegative, got {n_bar}"),
            ));
        }
        let x = 2.0 * n_bar + 1.0;
        Self::new([[x, 0.0], [0.0, x]], [0.0, 0.0])
    }

    pub fn covariance(&self) -> [[f64; 2]; 2] {
        self.v
    }

    pub fn quadrature_mean(&self) -> [f64; 2] {
        self.d
    }

    pub fn det_v(&self) -> f64 {
        self.v[0][0] * self.v[1][1] - self.v[0][1] * self.v[1][0]
    }

    /// `A` in the `(b, b†)` ordering.
    pub fn ladder_covariance(&self) -> [[C64; 2]; 2] {
        let a00 = C64::new(0.5 * (self.v[0][0] - self.v[1][1]), self.v[0][1]);
        let a01 = C64::new(0.5 * (self.v[0][0] + self.v[1][1]), 0.0);
        [[a00, a01], [a01, a00.conj()]]
    }

    /// `Δ = (⟨b⟩, ⟨b†⟩)`.
    pub fn ladder_mean(&self) -> [C64; 2] {
        let b = C64::new(self.d[0], self.d[1]) / SQRT_2;
        [b, b.conj()]
    }

    pub fn mean_photon_number(&self) -> f64 {
        0.25 * (self.v[0][0] + self.v[1][1]) - 0.5
            + 0.5 * (self.d[0] * self.d[0] + self.d[1] * self.d[1])
    }

    /// `G(z) = ¼ (ΩZ)ᵀ A (ΩZ) − Δᵀ Ω Z` with `Z = (z, z*)` and `ΩZ = (z*, −z)`.
    pub fn log_charfn(&self, z: C64) -> C64 {
        let a = self.ladder_covariance();
        let delta = self.ladder_mean();
        let w = [z.conj(), -z];
        let quad =
            a[0][0] * w[0] * w[0] + (a[0][1] + a[1][0]) * w[0] * w[1] + a[1][1] * w[1] * w[1];
        quad * 0.25 - (delta[0] * w[0] + delta[1] * w[1])
    }

    pub fn charfn(&self, z: C64) -> C64 {
        self.log_charfn(z).exp()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(&GaussianJson::from(self))
            .map_err(|e| Error::Serialization(e.to_string()))
    }

    /// Reads the canonical `V`, `d` fields; the ladder fields must agree.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: GaussianJson =
            serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))?;
        let g = Self::new(raw.v, raw.d)?;
        let a = g.ladder_covariance();
        let delta = g.ladder_mean();
        let tol = 1e-9 * (1.0 + g.v[0][0].abs() + g.v[1][1].abs());
        for i in 0..2 {
            for (j, &aij) in a[i].iter().enumerate() {
                if (aij - C64::new(raw.a_re[i][j], raw.a_im[i][j])).norm() > tol {
                    return Err(Error::Serialization(format!(
                        "A[{i}][{j}] disagrees with V"
                    )));
                }
            }
            if (delta[i] - C64::new(raw.delta_re[i], raw.delta_im[i])).norm() > tol {
                return Err(Error::Serialization(format!("Delta[{i}] disagrees with d")));
            }
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GaussianJson {
    #[serde(rename = "A_re")]
    a_re: [[f64; 2]; 2],
    #[serde(rename = "A_im")]
    a_im: [[f64; 2]; 2],
    #[serde(rename = "Delta_re")]
    delta_re: [f64; 2],
    #[serde(rename = "Delta_im")]
    delta_im: [f64; 2],
    #[serde(rename = "V")]
    v: [[f64; 2]; 2],
    d: [f64; 2],
}

impl From<&GaussianState> for GaussianJson {
    fn from(g: &GaussianState) -> Self {
        let a = g.ladder_covariance();
        let delta = g.ladder_mean();
        GaussianJson {
            a_re: [[a[0][0].re, a[0][1].re], [a[1][0].re, a[1][1].re]],
            a_im: [[a[0][0].im, a[0][1].im], [a[1][0].im, a[1][1].im]],
            delta_re: [delta[0].re, delta[1].re],
            delta_im: [delta[0].im, delta[1].im],
            v: g.v,
            d: g.d,
        }
    }
}

/// Fixed point of the collision channel for a Gaussian reservoir: the
/// covariance is unchanged and the mean is scaled by `s/(1−c)`.
pub fn asymptotic_gaussian(g: &GaussianState, params: &ChannelParams) -> GaussianState {
    let k = params.displacement_gain();
    GaussianState {
        v: g.v,
        d: [k * g.d[0], k * g.d[1]],
    }
}

/// Gaussian state with the first and second moments of `rho`.
pub fn gaussian_from_moments(rho: &DensityMatrix) -> Result<GaussianState> {
    let cutoff = rho.single_mode_cutoff()?;
    let top = rho.top_occupation(2);
    if top > TAIL_MASS_LIMIT {
        return Err(Error::CutoffTooSmall {
            n_max: cutoff.n_max(),
            reason: format!("top two levels hold {top:.3e}, moments unreliable"),
        });
    }
    let ops = mode_operators(cutoff);
    let m = rho.entries();
    let expect = |op: &ndarray::Array2<C64>| (m * &op.t()).sum();
    let a = expect(&ops.annihilate);
    let a2 = expect(&ops.annihilate.dot(&ops.annihilate));
    let n = expect(&ops.number).re;
    let cov_bb = a2 - a * a;
    let cov_sym = n + 0.5 - a.norm_sqr();
    let a_mat = [
        [cov_bb * 2.0, C64::new(2.0 * cov_sym, 0.0)],
        [C64::new(2.0 * cov_sym, 0.0), (cov_bb * 2.0).conj()],
    ];
    GaussianState::from_ladder(a_mat, [a, a.conj()])
}

/// `g(x) = ((x+1)/2) ln((x+1)/2) − ((x−1)/2) ln((x−1)/2)`, with `g(1) = 0`.
pub fn entropy_function(x: f64) -> f64 {
    let up = 0.5 * (x + 1.0);
    let down = 0.5 * (x - 1.0);
    let lower = if down > 0.0 { down * down.ln() } else { 0.0 };
    (up * up.ln() - lower).max(0.0)
}

fn checked_det(g: &GaussianState) -> Result<f64> {
    let det = g.det_v();
    if det < 1.0 - DET_TOL {
        return Err(Error::Unphysical(format!("det V = {det} below 1")));
    }
    Ok(det.max(1.0))
}

/// `Tr ρ² = (det V)^{−1/2}`.
pub fn gaussian_purity(g: &GaussianState) -> Result<f64> {
    Ok(checked_det(g)?.sqrt().recip())
}

/// `S = g(√det V)`.
pub fn gaussian_entropy(g: &GaussianState) -> Result<f64> {
    Ok(entropy_function(checked_det(g)?.sqrt()))
}

/// Inverse temperature of the thermal state equal to `g`, if `g` is centered
/// with phase-invariant covariance. `tol` is relative to `A₀₁`. Returns
/// `f64::INFINITY` for the vacuum.
pub fn thermal_match(g: &GaussianState, tol: f64) -> Result<Option<f64>> {
    let a = g.ladder_covariance();
    let a01 = a[0][1].re;
    if a01 < 1.0 - tol {
        return Err(Error::Unphysical(format!("A₀₁ = {a01} below 1")));
    }
    let delta = g.ladder_mean()[0];
    if a[0][0].norm() > tol * a01 || delta.norm() > tol * a01.sqrt() {
        return Ok(None);
    }
    let n_bar = (0.5 * (a01 - 1.0)).max(0.0);
    Ok(Some(beta_for_mean_photon(n_bar)))
}
