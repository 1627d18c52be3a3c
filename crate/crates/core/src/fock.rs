//! Truncated Fock-space states and operators.
//!
//! Every mode lives on `span{|0⟩, …, |n_max⟩}`. Operators are built on that
//! truncated space and exponentiated there. Two-mode states use the index
//! `a_index · (n_max_b + 1) + b_index` (the a-mode is the slow index).

use std::f64::consts::LN_2;

use ndarray::{linalg::kron, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::C64;

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-10;
pub const POSITIVITY_TOL: f64 = 1e-10;
/// Largest untruncated probability mass a constructor may discard.
pub const TAIL_MASS_LIMIT: f64 = 1e-8;

pub const DEFAULT_MAX_JOINT_DIM: usize = 4096;
pub const MAX_DIM_ENV: &str = "REPSCATTER_MAX_DIM";

/// Joint-dimension ceiling for two-mode matrices, overridable through
/// `REPSCATTER_MAX_DIM`.
pub fn max_joint_dim() -> usize {
    std::env::var(MAX_DIM_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_MAX_JOINT_DIM)
}

/// Highest retained Fock level of a mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct FockCutoff(usize);

impl FockCutoff {
    pub fn new(n_max: usize) -> Result<Self> {
        if n_max < 1 {
            return Err(Error::InvalidCutoff(n_max));
        }
        Ok(FockCutoff(n_max))
    }

    pub fn n_max(self) -> usize {
        self.0
    }

    pub fn dim(self) -> usize {
        self.0 + 1
    }
}

impl TryFrom<usize> for FockCutoff {
    type Error = Error;
    fn try_from(n: usize) -> Result<Self> {
        FockCutoff::new(n)
    }
}

impl From<FockCutoff> for usize {
    fn from(c: FockCutoff) -> usize {
        c.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeLayout {
    Single(FockCutoff),
    /// `(a-mode, b-mode)` cutoffs.
    Two(FockCutoff, FockCutoff),
}

impl ModeLayout {
    pub fn dim(self) -> usize {
        match self {
            ModeLayout::Single(c) => c.dim(),
            ModeLayout::Two(a, b) => a.dim() * b.dim(),
        }
    }

    pub fn mode_count(self) -> usize {
        match self {
            ModeLayout::Single(_) => 1,
            ModeLayout::Two(..) => 2,
        }
    }
}

/// Ladder operators of one truncated mode.
#[derive(Debug, Clone)]
pub struct ModeOperators {
    pub annihilate: CMat,
    pub create: CMat,
    pub number: CMat,
}

pub fn mode_operators(cutoff: FockCutoff) -> ModeOperators {
    let d = cutoff.dim();
    let mut annihilate = Array2::zeros((d, d));
    for n in 1..d {
        annihilate[[n - 1, n]] = C64::new((n as f64).sqrt(), 0.0);
    }
    let create = linalg::dagger(&annihilate.view());
    let number = create.dot(&annihilate);
    ModeOperators {
        annihilate,
        create,
        number,
    }
}

/// Cached spectral data for `D(z) = exp(z a† − z* a)` on a fixed cutoff.
///
/// With `z = r e^{iθ}` one has `D(z) = R(θ) exp(r (a† − a)) R(θ)†` where
/// `R(θ) = e^{iθ a†a}`, so a single eigen-decomposition of the Hermitian
/// `i (a† − a)` serves every `z`.
#[derive(Debug, Clone)]
pub struct DisplacementKernel {
    cutoff: FockCutoff,
    eigenvalues: Array1<f64>,
    eigenvectors: CMat,
}

impl DisplacementKernel {
    pub fn new(cutoff: FockCutoff) -> Self {
        let ops = mode_operators(cutoff);
        let h = (&ops.create - &ops.annihilate).mapv(|x| x * C64::i());
        let (eigenvalues, eigenvectors) = linalg::hermitian_eigen(&h.view());
        DisplacementKernel {
            cutoff,
            eigenvalues,
            eigenvectors,
        }
    }

    pub fn cutoff(&self) -> FockCutoff {
        self.cutoff
    }

    fn radial_phases(&self, r: f64) -> Array1<C64> {
        self.eigenvalues.mapv(|w| C64::from_polar(1.0, -r * w))
    }

    pub fn matrix(&self, z: C64) -> CMat {
        let (r, theta) = z.to_polar();
        let v = &self.eigenvectors;
        let scaled = v * &self.radial_phases(r).view().insert_axis(Axis(0));
        let mut m = scaled.dot(&linalg::dagger(&v.view()));
        if theta != 0.0 {
            for ((i, j), x) in m.indexed_iter_mut() {
                *x *= C64::from_polar(1.0, theta * (i as f64 - j as f64));
            }
        }
        m
    }

    /// `Tr(ρ D(z))` without forming `D(z)`.
    pub fn expectation(&self, rho: &ArrayView2<'_, C64>, z: C64) -> C64 {
        let (r, theta) = z.to_polar();
        let rotated = if theta == 0.0 {
            rho.to_owned()
        } else {
            Array2::from_shape_fn(rho.raw_dim(), |(n, m)| {
                rho[[n, m]] * C64::from_polar(1.0, theta * (m as f64 - n as f64))
            })
        };
        let v = &self.eigenvectors;
        let w = rotated.dot(v);
        let phases = self.radial_phases(r);
        let mut acc = C64::new(0.0, 0.0);
        for k in 0..v.ncols() {
            let mut diag = C64::new(0.0, 0.0);
            for n in 0..v.nrows() {
                diag += v[[n, k]].conj() * w[[n, k]];
            }
            acc += diag * phases[k];
        }
        acc
    }
}

/// `exp(z a† − z* a)` on the truncated space.
pub fn displacement_matrix(z: C64, cutoff: FockCutoff) -> CMat {
    DisplacementKernel::new(cutoff).matrix(z)
}

/// Dense, validated density matrix of one or two truncated modes.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    entries: CMat,
    layout: ModeLayout,
}

/// Numerical health of a density matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateCheck {
    pub hermiticity_defect: f64,
    pub trace_error: f64,
    pub min_eigenvalue: f64,
}

impl StateCheck {
    pub fn is_valid(&self) -> bool {
        self.hermiticity_defect <= HERMITIAN_TOL
            && self.trace_error <= TRACE_TOL
            && self.min_eigenvalue >= -POSITIVITY_TOL
    }
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity. Nothing is repaired.
    pub fn from_matrix(entries: CMat, layout: ModeLayout) -> Result<Self> {
        let rho = Self::from_parts(entries, layout)?;
        rho.validate()?;
        Ok(rho)
    }

    fn from_parts(entries: CMat, layout: ModeLayout) -> Result<Self> {
        let d = layout.dim();
        if entries.nrows() != d || entries.ncols() != d {
            return Err(Error::Shape(format!(
                "matrix is {}x{}, layout requires {d}x{d}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        Ok(DensityMatrix { entries, layout })
    }

    pub(crate) fn from_matrix_unchecked(entries: CMat, layout: ModeLayout) -> Self {
        debug_assert_eq!(entries.nrows(), layout.dim());
        DensityMatrix { entries, layout }
    }

    /// Projector onto the normalized `amplitudes`.
    pub fn from_pure(amplitudes: &[C64], cutoff: FockCutoff) -> Result<Self> {
        if amplitudes.len() != cutoff.dim() {
            return Err(Error::Shape(format!(
                "{} amplitudes for a cutoff of dimension {}",
                amplitudes.len(),
                cutoff.dim()
            )));
        }
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidState(
                "zero or non-finite state vector".into(),
            ));
        }
        let psi = Array1::from_iter(amplitudes.iter().map(|a| a / norm));
        let entries =
            Array2::from_shape_fn((psi.len(), psi.len()), |(i, j)| psi[i] * psi[j].conj());
        Ok(Self::from_matrix_unchecked(
            entries,
            ModeLayout::Single(cutoff),
        ))
    }

    /// Mixture `Σ p_n |n⟩⟨n|`; `weights` are renormalized.
    pub fn from_populations(weights: &[f64], cutoff: FockCutoff) -> Result<Self> {
        if weights.len() != cutoff.dim() {
            return Err(Error::Shape(format!(
                "{} populations for a cutoff of dimension {}",
                weights.len(),
                cutoff.dim()
            )));
        }
        if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidState(
                "populations must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidState("populations sum to zero".into()));
        }
        let diag = Array1::from_iter(weights.iter().map(|w| C64::new(w / total, 0.0)));
        Ok(Self::from_matrix_unchecked(
            Array2::from_diag(&diag),
            ModeLayout::Single(cutoff),
        ))
    }

    pub fn maximally_mixed(cutoff: FockCutoff) -> Self {
        let d = cutoff.dim();
        Self::from_populations(&vec![1.0; d], cutoff).expect("uniform populations are valid")
    }

    pub fn entries(&self) -> &CMat {
        &self.entries
    }

    pub fn view(&self) -> ArrayView2<'_, C64> {
        self.entries.view()
    }

    pub fn into_entries(self) -> CMat {
        self.entries
    }

    pub fn layout(&self) -> ModeLayout {
        self.layout
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn mode_count(&self) -> usize {
        self.layout.mode_count()
    }

    /// Cutoff of the (first) a-mode.
    pub fn cutoff(&self) -> FockCutoff {
        match self.layout {
            ModeLayout::Single(c) | ModeLayout::Two(c, _) => c,
        }
    }

    pub fn single_mode_cutoff(&self) -> Result<FockCutoff> {
        match self.layout {
            ModeLayout::Single(c) => Ok(c),
            ModeLayout::Two(..) => Err(Error::Shape("expected a single-mode state".into())),
        }
    }

    pub fn trace(&self) -> C64 {
        linalg::trace(&self.view())
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::hermitian_eigenvalues(&self.view())
            .first()
            .copied()
            .unwrap_or(0.0)
    }

    pub fn check(&self) -> StateCheck {
        StateCheck {
            hermiticity_defect: linalg::hermiticity_defect(&self.view()),
            trace_error: (self.trace() - C64::new(1.0, 0.0)).norm(),
            min_eigenvalue: self.min_eigenvalue(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self
            .entries
            .iter()
            .any(|x| !x.re.is_finite() || !x.im.is_finite())
        {
            return Err(Error::InvalidState("non-finite entries".into()));
        }
        let check = self.check();
        if check.hermiticity_defect > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!(
                "Hermiticity defect {:.3e}",
                check.hermiticity_defect
            )));
        }
        if check.trace_error > TRACE_TOL {
            return Err(Error::InvalidState(format!(
                "|Tr - 1| = {:.3e}",
                check.trace_error
            )));
        }
        if check.min_eigenvalue < -POSITIVITY_TOL {
            return Err(Error::InvalidState(format!(
                "minimum eigenvalue {:.3e}",
                check.min_eigenvalue
            )));
        }
        Ok(())
    }

    /// Diagonal of a single-mode state.
    pub fn populations(&self) -> Vec<f64> {
        self.entries.diag().iter().map(|x| x.re).collect()
    }

    pub fn mean_photon_number(&self) -> f64 {
        self.populations()
            .iter()
            .enumerate()
            .map(|(n, p)| n as f64 * p)
            .sum()
    }

    /// Occupation of the highest `levels` Fock levels of the a-mode.
    pub fn top_occupation(&self, levels: usize) -> f64 {
        let c = self.cutoff();
        let first = c.dim().saturating_sub(levels);
        match self.layout {
            ModeLayout::Single(_) => self.entries.diag().iter().skip(first).map(|x| x.re).sum(),
            ModeLayout::Two(_, b) => {
                let db = b.dim();
                (first * db..self.dim())
                    .map(|i| self.entries[[i, i]].re)
                    .sum()
            }
        }
    }

    pub(crate) fn tail_guard(&self, levels: usize, limit: f64, step: Option<usize>) -> Result<()> {
        let occupation = self.top_occupation(levels);
        if occupation > limit {
            return Err(Error::TailGuard {
                occupation,
                levels,
                limit,
                step,
            });
        }
        Ok(())
    }

    /// Same state on a larger single-mode cutoff, padded with zeros.
    pub fn embed(&self, cutoff: FockCutoff) -> Result<Self> {
        let own = self.single_mode_cutoff()?;
        if cutoff < own {
            return Err(Error::Shape(format!(
                "cannot embed n_max = {} into n_max = {}",
                own.n_max(),
                cutoff.n_max()
            )));
        }
        let mut entries = Array2::zeros((cutoff.dim(), cutoff.dim()));
        entries
            .slice_mut(ndarray::s![..own.dim(), ..own.dim()])
            .assign(&self.entries);
        Ok(Self::from_matrix_unchecked(
            entries,
            ModeLayout::Single(cutoff),
        ))
    }

    /// `D(z) ρ D(z)†` on the state's own cutoff.
    pub fn displaced(&self, z: C64) -> Result<Self> {
        let cutoff = self.single_mode_cutoff()?;
        let d = displacement_matrix(z, cutoff);
        let out = d.dot(&self.entries).dot(&linalg::dagger(&d.view()));
        Ok(Self::from_matrix_unchecked(out, self.layout))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(&StateJson::from(self))
            .map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: StateJson =
            serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))?;
        raw.try_into()
    }
}

/// Serialized form: full row-major real and imaginary parts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateJson {
    pub dim: usize,
    pub mode_count: usize,
    pub n_max: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max_b: Option<usize>,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl From<&DensityMatrix> for StateJson {
    fn from(rho: &DensityMatrix) -> Self {
        let (n_max, n_max_b) = match rho.layout {
            ModeLayout::Single(c) => (c.n_max(), None),
            ModeLayout::Two(a, b) => (a.n_max(), Some(b.n_max())),
        };
        let rows = |f: fn(&C64) -> f64| {
            rho.entries
                .outer_iter()
                .map(|row| row.iter().map(f).collect())
                .collect()
        };
        StateJson {
            dim: rho.dim(),
            mode_count: rho.mode_count(),
            n_max,
            n_max_b,
            re: rows(|x| x.re),
            im: rows(|x| x.im),
        }
    }
}

impl TryFrom<StateJson> for DensityMatrix {
    type Error = Error;

    fn try_from(raw: StateJson) -> Result<Self> {
        let a = FockCutoff::new(raw.n_max)?;
        let layout = match (raw.mode_count, raw.n_max_b) {
            (1, None) => ModeLayout::Single(a),
            (2, b) => ModeLayout::Two(a, FockCutoff::new(b.unwrap_or(raw.n_max))?),
            (m, _) => return Err(Error::Serialization(format!("unsupported mode_count {m}"))),
        };
        if layout.dim() != raw.dim || raw.re.len() != raw.dim || raw.im.len() != raw.dim {
            return Err(Error::Serialization("dimension fields disagree".into()));
        }
        let mut entries = Array2::zeros((raw.dim, raw.dim));
        for (i, (re, im)) in raw.re.iter().zip(&raw.im).enumerate() {
            if re.len() != raw.dim || im.len() != raw.dim {
                return Err(Error::Serialization(format!(
                    "row {i} has the wrong length"
                )));
            }
            for j in 0..raw.dim {
                entries[[i, j]] = C64::new(re[j], im[j]);
            }
        }
        DensityMatrix::from_matrix(entries, layout)
    }
}

pub fn fock_state(n: usize, cutoff: FockCutoff) -> Result<DensityMatrix> {
    if n > cutoff.n_max() {
        return Err(Error::InvalidLevel {
            level: n,
            n_max: cutoff.n_max(),
        });
    }
    let mut entries = Array2::zeros((cutoff.dim(), cutoff.dim()));
    entries[[n, n]] = C64::new(1.0, 0.0);
    Ok(DensityMatrix::from_matrix_unchecked(
        entries,
        ModeLayout::Single(cutoff),
    ))
}

/// `Z⁻¹ exp(−β a†a)` renormalized on the truncated space.
pub fn thermal_state(beta: f64, cutoff: FockCutoff) -> Result<DensityMatrix> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::param(
            "beta",
            format!("must be positive and finite, got {beta}"),
        ));
    }
    // untruncated geometric tail beyond n_max is e^{-β(n_max+1)}
    let tail = (-beta * (cutoff.n_max() as f64 + 1.0)).exp();
    if tail > TAIL_MASS_LIMIT {
        return Err(Error::CutoffTooSmall {
            n_max: cutoff.n_max(),
            reason: format!("thermal tail mass {tail:.3e} at beta = {beta}"),
        });
    }
    let weights: Vec<f64> = (0..cutoff.dim())
        .map(|n| (-beta * n as f64).exp())
        .collect();
    DensityMatrix::from_populations(&weights, cutoff)
}

/// Inverse temperature of the thermal state with mean occupation `n_bar`.
pub fn beta_for_mean_photon(n_bar: f64) -> f64 {
    if n_bar <= 1e-12 {
        f64::INFINITY
    } else if n_bar == 1.0 {
        LN_2
    } else {
        (1.0 + 1.0 / n_bar).ln()
    }
}

/// Thermal state parametrized by its mean photon number.
pub fn thermal_state_with_mean(n_bar: f64, cutoff: FockCutoff) -> Result<DensityMatrix> {
    if !(n_bar >= 0.0) || !n_bar.is_finite() {
        return Err(Error::param(
            "n_bar",
            format!("must be finite and nonnegative, got {n_bar}"),
        ));
    }
    let beta = beta_for_mean_photon(n_bar);
    if beta.is_infinite() {
        return fock_state(0, cutoff);
    }
    thermal_state(beta, cutoff)
}

pub fn coherent_state(alpha: C64, cutoff: FockCutoff) -> Result<DensityMatrix> {
    let mean = alpha.norm_sqr();
    let n_max = cutoff.n_max();
    if mean > n_max as f64 / 4.0 {
        return Err(Error::CutoffTooSmall {
            n_max,
            reason: format!("|alpha|^2 = {mean} exceeds n_max/4"),
        });
    }
    // amplitudes e^{-|α|²/2} αⁿ/√(n!) by recurrence
    let mut amps = Vec::with_capacity(cutoff.dim());
    let mut a = C64::new((-mean / 2.0).exp(), 0.0);
    amps.push(a);
    for n in 1..cutoff.dim() {
        a = a * alpha / (n as f64).sqrt();
        amps.push(a);
    }
    let kept: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
    let tail = poisson_tail(mean, n_max).max(1.0 - kept);
    if tail > TAIL_MASS_LIMIT {
        return Err(Error::CutoffTooSmall {
            n_max,
            reason: format!("coherent tail mass {tail:.3e}"),
        });
    }
    DensityMatrix::from_pure(&amps, cutoff)
}

/// `P(N > n_max)` for `N ~ Poisson(mean)`, summed directly to avoid cancellation.
fn poisson_tail(mean: f64, n_max: usize) -> f64 {
    if mean == 0.0 {
        return 0.0;
    }
    // log p_n via ln Γ recurrence
    let mut log_p = -mean;
    for n in 1..=n_max + 1 {
        log_p += mean.ln() - (n as f64).ln();
    }
    let mut tail = 0.0;
    let mut n = n_max + 1;
    loop {
        let p = log_p.exp();
        tail += p;
        if p < 1e-18 * tail.max(1e-300) || n > n_max + 10_000 {
            break;
        }
        n += 1;
        log_p += mean.ln() - (n as f64).ln();
    }
    tail
}

pub fn tensor_product(rho_a: &DensityMatrix, rho_b: &DensityMatrix) -> Result<DensityMatrix> {
    tensor_product_with_limit(rho_a, rho_b, max_joint_dim())
}

pub fn tensor_product_with_limit(
    rho_a: &DensityMatrix,
    rho_b: &DensityMatrix,
    max_dim: usize,
) -> Result<DensityMatrix> {
    let ca = rho_a.single_mode_cutoff()?;
    let cb = rho_b.single_mode_cutoff()?;
    let dim = ca.dim() * cb.dim();
    if dim > max_dim {
        return Err(Error::Resource { dim, max: max_dim });
    }
    let entries = kron(rho_a.entries(), rho_b.entries());
    Ok(DensityMatrix::from_matrix_unchecked(
        entries,
        ModeLayout::Two(ca, cb),
    ))
}

pub fn partial_trace_b(rho_ab: &DensityMatrix) -> Result<DensityMatrix> {
    let (ca, cb) = match rho_ab.layout() {
        ModeLayout::Two(a, b) => (a, b),
        ModeLayout::Single(_) => {
            return Err(Error::Shape("partial trace needs a two-mode state".into()))
        }
    };
    let (da, db) = (ca.dim(), cb.dim());
    let m = rho_ab.entries();
    let out = Array2::from_shape_fn((da, da), |(i, k)| {
        (0..db).map(|j| m[[i * db + j, k * db + j]]).sum::<C64>()
    });
    Ok(DensityMatrix::from_matrix_unchecked(
        out,
        ModeLayout::Single(ca),
    ))
}
