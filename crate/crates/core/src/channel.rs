//! Beam-splitter collisions and the reduced single-mode channel
//! `L(ρ) = Tr_b[S (ρ ⊗ σ) S†]` with `S = exp(λ (a†b − a b†))`.
//!
//! `S` conserves `a†a + b†b`, so it is block diagonal over the total photon
//! number `N`. Each block is the exponential of `λ J_N`, a real antisymmetric
//! tridiagonal matrix, and is computed from a per-cutoff spectral cache. On
//! sectors with `N ≤ n_max` the truncated blocks are exact.

use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;

use ndarray::{linalg::general_mat_mul, Array1, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::fock::{
    max_joint_dim, mode_operators, partial_trace_b, tensor_product, DensityMatrix, FockCutoff,
    ModeLayout,
};
use crate::linalg::{self, CMat};
use crate::measures;
use crate::{fmt_num, C64};

/// Highest Fock levels watched by the truncation guard.
pub const TAIL_GUARD_LEVELS: usize = 2;
pub const TAIL_GUARD_LIMIT: f64 = 1e-6;
pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_STEPS: usize = 10_000;

/// Off-diagonal magnitude below which a reservoir state counts as stationary.
const STATIONARY_TOL: f64 = 1e-14;
/// Reservoir eigenvalues below this are dropped from the Kraus expansion.
const KRAUS_WEIGHT_FLOOR: f64 = 1e-14;
/// Reservoir levels whose amplitude `√σ_jj` is below this are treated as empty.
const AMPLITUDE_FLOOR: f64 = 1e-16;

/// Coupling angle and cutoff of one beam splitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    lambda: f64,
    sin: f64,
    cos: f64,
    cutoff: FockCutoff,
}

impl ChannelParams {
    /// `0 < λ ≤ π/2`; `λ = 0` is the identity channel and is rejected.
    pub fn new(lambda: f64, cutoff: FockCutoff) -> Result<Self> {
        if !(lambda > 0.0 && lambda <= FRAC_PI_2) {
            return Err(Error::param(
                "lambda",
                format!("must lie in (0, π/2], got {lambda}"),
            ));
        }
        Ok(Self::unchecked(lambda, cutoff))
    }

    pub(crate) fn unchecked(lambda: f64, cutoff: FockCutoff) -> Self {
        let cos = if lambda == FRAC_PI_2 {
            0.0
        } else {
            lambda.cos()
        };
        ChannelParams {
            lambda,
            sin: lambda.sin(),
            cos,
            cutoff,
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn sin(&self) -> f64 {
        self.sin
    }

    pub fn cos(&self) -> f64 {
        self.cos
    }

    /// Beam-splitter transmittance `τ = cos λ`.
    pub fn transmittance(&self) -> f64 {
        self.cos
    }

    pub fn cutoff(&self) -> FockCutoff {
        self.cutoff
    }

    /// `sin λ / (1 − cos λ)`, the factor relating asymptotic and reservoir means.
    pub fn displacement_gain(&self) -> f64 {
        self.sin / (1.0 - self.cos)
    }
}

/// Joint states `|k, N−k⟩` of the sector with total photon number `N`,
/// for `k` in `lo..=hi`.
#[derive(Debug, Clone, Copy)]
struct Sector {
    lo: usize,
    hi: usize,
}

impl Sector {
    fn new(total: usize, n_max: usize) -> Self {
        Sector {
            lo: total.saturating_sub(n_max),
            hi: total.min(n_max),
        }
    }

    fn len(&self) -> usize {
        self.hi - self.lo + 1
    }
}

/// Spectra of the sector generators `J_N = a†b − a b†`, reusable for any λ.
#[derive(Debug, Clone)]
pub struct BeamSplitterSpectrum {
    cutoff: FockCutoff,
    sectors: Vec<(Sector, Array1<f64>, CMat)>,
}

impl BeamSplitterSpectrum {
    pub fn new(cutoff: FockCutoff) -> Self {
        let n_max = cutoff.n_max();
        let sectors = (0..=2 * n_max)
            .map(|total| {
                let sector = Sector::new(total, n_max);
                let m = sector.len();
                // i·J_N is Hermitian; J_N[k+1, k] = √((k+1)(N−k))
                let mut h = Array2::<C64>::zeros((m, m));
                for i in 0..m - 1 {
                    let k = sector.lo + i;
                    let amp = (((k + 1) * (total - k)) as f64).sqrt();
                    h[[i + 1, i]] = C64::new(0.0, amp);
                    h[[i, i + 1]] = C64::new(0.0, -amp);
                }
                let (w, v) = linalg::hermitian_eigen(&h.view());
                (sector, w, v)
            })
            .collect();
        BeamSplitterSpectrum { cutoff, sectors }
    }

    pub fn cutoff(&self) -> FockCutoff {
        self.cutoff
    }

    /// Sector blocks of `S` at coupling `lambda`.
    pub fn beam_splitter(&self, lambda: f64) -> BeamSplitter {
        let params = ChannelParams::unchecked(lambda, self.cutoff);
        let blocks = self
            .sectors
            .iter()
            .map(|(sector, w, v)| {
                let phases = w.mapv(|x| C64::from_polar(1.0, -lambda * x));
                let scaled = v * &phases.view().insert_axis(ndarray::Axis(0));
                let full = scaled.dot(&linalg::dagger(&v.view()));
                (*sector, full.mapv(|x| x.re))
            })
            .collect();
        BeamSplitter { params, blocks }
    }
}

/// Block-diagonal beam-splitter unitary.
#[derive(Debug, Clone)]
pub struct BeamSplitter {
    params: ChannelParams,
    blocks: Vec<(Sector, Array2<f64>)>,
}

impl BeamSplitter {
    pub fn new(params: ChannelParams) -> Self {
        BeamSplitterSpectrum::new(params.cutoff).beam_splitter(params.lambda)
    }

    pub fn params(&self) -> &ChannelParams {
        &self.params
    }

    /// `⟨k_out, N−k_out| S |k_in, N−k_in⟩` with `N = total`.
    #[inline]
    pub fn amplitude(&self, total: usize, k_out: usize, k_in: usize) -> f64 {
        let (sector, block) = &self.blocks[total];
        block[[k_out - sector.lo, k_in - sector.lo]]
    }

    /// Dense two-mode matrix in the `a_index · (n_max+1) + b_index` basis.
    pub fn to_dense(&self, max_dim: usize) -> Result<CMat> {
        let d = self.params.cutoff.dim();
        let dim = d * d;
        if dim > max_dim {
            return Err(Error::Resource { dim, max: max_dim });
        }
        let mut s = Array2::zeros((dim, dim));
        for (total, (sector, block)) in self.blocks.iter().enumerate() {
            for i in 0..sector.len() {
                for j in 0..sector.len() {
                    let (k_out, k_in) = (sector.lo + i, sector.lo + j);
                    let row = k_out * d + (total - k_out);
                    let col = k_in * d + (total - k_in);
                    s[[row, col]] = C64::new(block[[i, j]], 0.0);
                }
            }
        }
        Ok(s)
    }
}

/// Two-mode unitary `S = exp(λ (a†b − a b†))` on the truncated space.
pub fn beam_splitter_unitary(params: &ChannelParams) -> Result<CMat> {
    BeamSplitter::new(*params).to_dense(max_joint_dim())
}

/// `max |S†(a⊗I)S − (c a⊗I + s I⊗b)|` over joint states with total photon
/// number at most `n_max − 1`, where the truncated relation is exact.
pub fn heisenberg_check(params: &ChannelParams) -> Result<f64> {
    heisenberg_residual(params, false)
}

/// As [`heisenberg_check`], over the whole truncated two-mode space. Boundary
/// levels break the relation, so this value is informative only.
pub fn heisenberg_residual_full_space(params: &ChannelParams) -> Result<f64> {
    heisenberg_residual(params, true)
}

fn heisenberg_residual(params: &ChannelParams, full_space: bool) -> Result<f64> {
    let cutoff = params.cutoff;
    let d = cutoff.dim();
    let s = beam_splitter_unitary(params)?;
    let ops = mode_operators(cutoff);
    let eye = linalg::identity(d);
    let a = ndarray::linalg::kron(&ops.annihilate, &eye);
    let b = ndarray::linalg::kron(&eye, &ops.annihilate);
    let lhs = linalg::dagger(&s.view()).dot(&a).dot(&s);
    let rhs = &a * C64::new(params.cos, 0.0) + &b * C64::new(params.sin, 0.0);
    let keep: Vec<usize> = (0..d * d)
        .filter(|idx| full_space || idx / d + idx % d < cutoff.n_max())
        .collect();
    let mut worst = 0.0_f64;
    for &i in &keep {
        for &j in &keep {
            worst = worst.max((lhs[[i, j]] - rhs[[i, j]]).norm());
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone)]
enum Kernel {
    /// Stationary σ: coherence order `d = k − k'` is conserved. `blocks[d]`
    /// maps the `d`-th superdiagonal of the input onto that of the output.
    PhaseCovariant {
        blocks: Vec<Array2<f64>>,
    },
    Kraus {
        ops: Vec<KrausOp>,
    },
}

/// `L` for a fixed reservoir state and coupling, precomputed for iteration.
#[derive(Debug, Clone)]
pub struct CollisionChannel {
    params: ChannelParams,
    kernel: Kernel,
}

impl CollisionChannel {
    pub fn new(sigma: &DensityMatrix, params: ChannelParams) -> Result<Self> {
        let spectrum = BeamSplitterSpectrum::new(params.cutoff);
        Self::with_spectrum(sigma, params, &spectrum)
    }

    pub(crate) fn with_spectrum(
        sigma: &DensityMatrix,
        params: ChannelParams,
        spectrum: &BeamSplitterSpectrum,
    ) -> Result<Self> {
        let cs = sigma.single_mode_cutoff()?;
        if cs != params.cutoff || spectrum.cutoff() != params.cutoff {
            return Err(Error::Shape(format!(
                "reservoir cutoff {} does not match channel cutoff {}",
                cs.n_max(),
                params.cutoff.n_max()
            )));
        }
        let bs = spectrum.beam_splitter(params.lambda);
        let kernel = if is_stationary(sigma) {
            phase_covariant_kernel(sigma, &bs)
        } else {
            kraus_kernel(sigma, &bs)
        };
        Ok(CollisionChannel { params, kernel })
    }

    pub fn params(&self) -> &ChannelParams {
        &self.params
    }

    /// True when the reservoir state is diagonal and the fast path is used.
    pub fn is_phase_covariant(&self) -> bool {
        matches!(self.kernel, Kernel::PhaseCovariant { .. })
    }

    /// One collision, without the truncation guard.
    pub fn apply_unguarded(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        let c = rho.single_mode_cutoff()?;
        if c != self.params.cutoff {
            return Err(Error::Shape(format!(
                "state cutoff {} does not match channel cutoff {}",
                c.n_max(),
                self.params.cutoff.n_max()
            )));
        }
        let out = match &self.kernel {
            Kernel::PhaseCovariant { blocks } => apply_phase_covariant(blocks, &rho.view()),
            Kernel::Kraus { ops } => apply_kraus(ops, &rho.view()),
        };
        Ok(DensityMatrix::from_matrix_unchecked(
            out,
            ModeLayout::Single(c),
        ))
    }

    /// One collision; fails if the output populates the top Fock levels.
    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        let out = self.apply_unguarded(rho)?;
        out.tail_guard(TAIL_GUARD_LEVELS, TAIL_GUARD_LIMIT, None)?;
        Ok(out)
    }
}

fn is_stationary(sigma: &DensityMatrix) -> bool {
    sigma
        .entries()
        .indexed_iter()
        .all(|((i, j), x)| i == j || x.norm() <= STATIONARY_TOL)
}

fn phase_covariant_kernel(sigma: &DensityMatrix, bs: &BeamSplitter) -> Kernel {
    let d_all = bs.params.cutoff.dim();
    let n_max = d_all - 1;
    let pops = sigma.populations();
    let blocks = (0..d_all)
        .map(|d| {
            let len = d_all - d;
            // output |k⟩⟨k−d| from input |p⟩⟨p−d|, k, p ∈ d..=n_max; the
            // reservoir keeps level j and is traced at level m = p + j − k
            Array2::from_shape_fn((len, len), |(ik, ip)| {
                let (k, p) = (ik + d, ip + d);
                let j_lo = k.saturating_sub(p);
                let j_hi = (n_max + k).saturating_sub(p).min(n_max);
                (j_lo..=j_hi)
                    .map(|j| {
                        let w = pops[j];
                        if w == 0.0 {
                            return 0.0;
                        }
                        w * bs.amplitude(p + j, k, p) * bs.amplitude(p + j - d, k - d, p - d)
                    })
                    .sum()
            })
        })
        .collect();
    Kernel::PhaseCovariant { blocks }
}

fn apply_phase_covariant(blocks: &[Array2<f64>], rho: &ArrayView2<'_, C64>) -> CMat {
    let dim = rho.nrows();
    let mut out = Array2::<C64>::zeros((dim, dim));
    for (d, block) in blocks.iter().enumerate() {
        let len = dim - d;
        let input: Vec<C64> = (0..len).map(|i| rho[[i + d, i]]).collect();
        if input.iter().all(|x| x.re == 0.0 && x.im == 0.0) {
            continue;
        }
        for ik in 0..len {
            let row = block.row(ik);
            let mut acc = C64::new(0.0, 0.0);
            for (w, x) in row.iter().zip(&input) {
                acc += x * *w;
            }
            out[[ik + d, ik]] = acc;
            if d > 0 {
                out[[ik, ik + d]] = acc.conj();
            }
        }
    }
    out
}

/// Kraus operator. Reservoir amplitudes that vanish beyond some level make
/// every row's support one contiguous run, stored as `(first column, run)`.
#[derive(Debug, Clone)]
enum KrausOp {
    Dense { op: CMat, adjoint: CMat },
    Banded { rows: Vec<(usize, Vec<C64>)> },
}

impl KrausOp {
    /// `None` for an operator that is identically zero.
    fn new(op: CMat) -> Option<Self> {
        let is_zero = |x: &C64| x.re == 0.0 && x.im == 0.0;
        let rows: Vec<(usize, Vec<C64>)> = op
            .outer_iter()
            .map(|row| {
                match (
                    row.iter().position(|x| !is_zero(x)),
                    row.iter().rposition(|x| !is_zero(x)),
                ) {
                    (Some(lo), Some(hi)) => {
                        (lo, row.iter().skip(lo).take(hi - lo + 1).copied().collect())
                    }
                    _ => (0, Vec::new()),
                }
            })
            .collect();
        let stored: usize = rows.iter().map(|(_, r)| r.len()).sum();
        if stored == 0 {
            None
        } else if 2 * stored <= op.len() {
            Some(KrausOp::Banded { rows })
        } else {
            let adjoint = linalg::dagger(&op.view());
            Some(KrausOp::Dense { op, adjoint })
        }
    }
}

fn kraus_kernel(sigma: &DensityMatrix, bs: &BeamSplitter) -> Kernel {
    let d_all = bs.params.cutoff.dim();
    let n_max = d_all - 1;
    let (weights, vectors) = linalg::hermitian_eigen(&sigma.view());
    let pops = sigma.populations();
    let mut ops = Vec::new();
    for (r, &w) in weights.iter().enumerate() {
        if !(w > KRAUS_WEIGHT_FLOOR) {
            continue;
        }
        let amp = w.sqrt();
        // σ_jj = Σ_r w_r |ψ_rj|² bounds every weighted amplitude at level j,
        // so levels the reservoir does not reach are exact zeros; this keeps
        // the operators banded where eigen-solver noise would fill them
        let col = vectors.column(r);
        let psi: Vec<C64> = col
            .iter()
            .zip(&pops)
            .map(|(x, &pj)| {
                if pj.max(0.0).sqrt() <= AMPLITUDE_FLOOR {
                    C64::new(0.0, 0.0)
                } else {
                    *x
                }
            })
            .collect();
        for m in 0..d_all {
            // K[k, p] = √w Σ_j ψ_j ⟨k, m| S |p, j⟩ with j = k + m − p
            let op = Array2::from_shape_fn((d_all, d_all), |(k, p)| {
                let j = k + m;
                if j < p || j - p > n_max {
                    return C64::new(0.0, 0.0);
                }
                let a = psi[j - p];
                if a.re == 0.0 && a.im == 0.0 {
                    return a;
                }
                a * (amp * bs.amplitude(k + m, k, p))
            });
            ops.extend(KrausOp::new(op));
        }
    }
    Kernel::Kraus { ops }
}

fn apply_kraus(ops: &[KrausOp], rho: &ArrayView2<'_, C64>) -> CMat {
    let dim = rho.nrows();
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    let mut out = Array2::<C64>::zeros((dim, dim));
    let mut tmp = Array2::<C64>::zeros((dim, dim));
    for k in ops {
        match k {
            KrausOp::Dense { op, adjoint } => {
                general_mat_mul(one, op, rho, zero, &mut tmp);
                general_mat_mul(one, &tmp, adjoint, one, &mut out);
            }
            KrausOp::Banded { rows } => {
                // tmp = K ρ, then the lower triangle of tmp K†
                tmp.fill(zero);
                let mut live = vec![false; dim];
                for (i, (lo, run)) in rows.iter().enumerate() {
                    if run.is_empty() {
                        continue;
                    }
                    live[i] = true;
                    let mut t = tmp.row_mut(i);
                    for (q, &v) in run.iter().enumerate() {
                        t.scaled_add(v, &rho.row(lo + q));
                    }
                }
                for i in (0..dim).filter(|&i| live[i]) {
                    let t = tmp.row(i);
                    let t = t.as_slice().expect("standard layout");
                    for (j, (lo, run)) in rows.iter().enumerate().take(i + 1) {
                        let acc = t[*lo..lo + run.len()]
                            .iter()
                            .zip(run)
                            .fold(zero, |a, (x, v)| a + x * v.conj());
                        out[[i, j]] += acc;
                    }
                }
            }
        }
    }
    if ops.iter().any(|k| matches!(k, KrausOp::Banded { .. })) {
        // banded terms filled only the lower triangle; the sum is Hermitian
        for i in 0..dim {
            for j in i + 1..dim {
                out[[i, j]] = out[[j, i]].conj();
            }
        }
    }
    out
}

/// Single collision `L(ρ)` through the precomputed block route.
pub fn apply_channel(
    rho: &DensityMatrix,
    sigma: &DensityMatrix,
    params: &ChannelParams,
) -> Result<DensityMatrix> {
    check_same_cutoff(rho, sigma, params)?;
    CollisionChannel::new(sigma, *params)?.apply(rho)
}

/// `L(ρ)` by the literal definition: tensor, conjugate by the dense `S`,
/// trace out the reservoir mode. Quadratic in the joint dimension; meant for
/// small cutoffs and for cross-checking [`apply_channel`].
pub fn apply_channel_dense(
    rho: &DensityMatrix,
    sigma: &DensityMatrix,
    params: &ChannelParams,
) -> Result<DensityMatrix> {
    check_same_cutoff(rho, sigma, params)?;
    let joint = tensor_product(rho, sigma)?;
    let s = beam_splitter_unitary(params)?;
    let evolved = s.dot(joint.entries()).dot(&linalg::dagger(&s.view()));
    partial_trace_b(&DensityMatrix::from_matrix_unchecked(
        evolved,
        joint.layout(),
    ))
}

fn check_same_cutoff(
    rho: &DensityMatrix,
    sigma: &DensityMatrix,
    params: &ChannelParams,
) -> Result<()> {
    let (cr, cs) = (rho.single_mode_cutoff()?, sigma.single_mode_cutoff()?);
    if cr != cs || cr != params.cutoff {
        return Err(Error::Shape(format!(
            "cutoff mismatch: rho n_max = {}, sigma n_max = {}, channel n_max = {}",
            cr.n_max(),
            cs.n_max(),
            params.cutoff.n_max()
        )));
    }
    Ok(())
}

/// Which iterates a trajectory keeps in memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Retention {
    /// First and last state only.
    #[default]
    Endpoints,
    /// Every iterate `ρ_0 … ρ_K`.
    All,
}

/// Iterates of `L` together with per-step diagnostics.
///
/// `distances[k]` is the trace distance between `ρ_k` and `ρ_{k+1}`;
/// `mean_photon` and `purity` are indexed by state. With
/// [`Retention::All`], `states.len() == distances.len() + 1`.
#[derive(Debug, Clone)]
pub struct RelaxationTrajectory {
    pub states: Vec<DensityMatrix>,
    pub distances: Vec<f64>,
    pub mean_photon: Vec<f64>,
    pub purity: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub converged_at: Option<usize>,
    pub retention: Retention,
}

impl RelaxationTrajectory {
    fn start(rho0: &DensityMatrix, retention: Retention) -> Self {
        RelaxationTrajectory {
            states: vec![rho0.clone()],
            distances: Vec::new(),
            mean_photon: vec![rho0.mean_photon_number()],
            purity: vec![measures::purity(rho0)],
            lambdas: Vec::new(),
            converged_at: None,
            retention,
        }
    }

    fn push(&mut self, prev: &DensityMatrix, next: DensityMatrix, lambda: f64) -> f64 {
        let dist = measures::trace_distance_unchecked(&prev.view(), &next.view());
        self.distances.push(dist);
        self.mean_photon.push(next.mean_photon_number());
        self.purity.push(measures::purity(&next));
        self.lambdas.push(lambda);
        match self.retention {
            Retention::All => self.states.push(next),
            Retention::Endpoints => {
                if self.states.len() == 2 {
                    self.states[1] = next;
                } else {
                    self.states.push(next);
                }
            }
        }
        dist
    }

    /// Number of collisions applied.
    pub fn steps(&self) -> usize {
        self.distances.len()
    }

    pub fn initial_state(&self) -> &DensityMatrix {
        &self.states[0]
    }

    pub fn final_state(&self) -> &DensityMatrix {
        self.states
            .last()
            .expect("trajectory holds at least the initial state")
    }

    /// CSV with columns `step, trace_distance_to_next, mean_photon_number, purity`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,trace_distance_to_next,mean_photon_number,purity\n");
        for k in 0..=self.steps() {
            let dist = self
                .distances
                .get(k)
                .map(|d| fmt_num(*d))
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "{k},{dist},{},{}",
                fmt_num(self.mean_photon[k]),
                fmt_num(self.purity[k])
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterateOptions {
    pub tol: f64,
    pub max_steps: usize,
    pub retention: Retention,
}

impl Default for IterateOptions {
    fn default() -> Self {
        IterateOptions {
            tol: DEFAULT_TOL,
            max_steps: DEFAULT_MAX_STEPS,
            retention: Retention::Endpoints,
        }
    }
}

/// Applies `L` until consecutive iterates are closer than `tol` in trace
/// distance or `max_steps` collisions have been made. Hitting the step limit
/// is not an error; `converged_at` stays `None`.
pub fn iterate_to_fixed_point(
    rho0: &DensityMatrix,
    sigma: &DensityMatrix,
    params: &ChannelParams,
    tol: f64,
    max_steps: usize,
) -> Result<RelaxationTrajectory> {
    iterate_with(
        rho0,
        sigma,
        params,
        IterateOptions {
            tol,
            max_steps,
            retention: Retention::Endpoints,
        },
    )
}

pub fn iterate_with(
    rho0: &DensityMatrix,
    sigma: &DensityMatrix,
    params: &ChannelParams,
    options: IterateOptions,
) -> Result<RelaxationTrajectory> {
    if !(options.tol >= 1e-12) {
        return Err(Error::param(
            "tol",
            format!("must be at least 1e-12, got {}", options.tol),
        ));
    }
    if options.max_steps == 0 {
        return Err(Error::param("max_steps", "must be positive"));
    }
    check_same_cutoff(rho0, sigma, params)?;
    let channel = CollisionChannel::new(sigma, *params)?;
    let mut traj = RelaxationTrajectory::start(rho0, options.retention);
    let mut current = rho0.clone();
    for step in 1..=options.max_steps {
        let next = channel.apply_unguarded(&current)?;
        next.tail_guard(TAIL_GUARD_LEVELS, TAIL_GUARD_LIMIT, Some(step))?;
        let dist = traj.push(&current, next.clone(), params.lambda);
        current = next;
        if dist < options.tol {
            traj.converged_at = Some(step);
            break;
        }
    }
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Constant,
    /// `λ_k = 1/√K` for `k = 1..=K`.
    VanHoveFixedK,
    /// `λ_k = 1/√(k+1)` for `k = 1..=K`.
    VanHoveRunning,
}

/// Per-collision couplings `λ_1, …, λ_K`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSchedule {
    kind: ScheduleKind,
    values: Vec<f64>,
}

impl CouplingSchedule {
    pub fn constant(lambda: f64, steps: usize) -> Result<Self> {
        if !(lambda > 0.0 && lambda <= FRAC_PI_2) {
            return Err(Error::param(
                "lambda",
                format!("must lie in (0, π/2], got {lambda}"),
            ));
        }
        Self::build(ScheduleKind::Constant, vec![lambda; steps])
    }

    pub fn van_hove_fixed(k: usize) -> Result<Self> {
        let lambda = 1.0 / (k as f64).sqrt();
        Self::build(ScheduleKind::VanHoveFixedK, vec![lambda; k])
    }

    pub fn van_hove_running(steps: usize) -> Result<Self> {
        let values = (1..=steps).map(|k| 1.0 / ((k + 1) as f64).sqrt()).collect();
        Self::build(ScheduleKind::VanHoveRunning, values)
    }

    fn build(kind: ScheduleKind, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::param("schedule", "must contain at least one step"));
        }
        Ok(CouplingSchedule { kind, values })
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Applies one collision per schedule entry, the k-th with coupling `λ_k`.
pub fn run_schedule(
    rho0: &DensityMatrix,
    sigma: &DensityMatrix,
    schedule: &CouplingSchedule,
    cutoff: FockCutoff,
) -> Result<RelaxationTrajectory> {
    run_schedule_with(rho0, sigma, schedule, cutoff, Retention::Endpoints)
}

pub fn run_schedule_with(
    rho0: &DensityMatrix,
    sigma: &DensityMatrix,
    schedule: &CouplingSchedule,
    cutoff: FockCutoff,
    retention: Retention,
) -> Result<RelaxationTrajectory> {
    let first = ChannelParams::new(schedule.values[0], cutoff)?;
    check_same_cutoff(rho0, sigma, &first)?;
    let spectrum = BeamSplitterSpectrum::new(cutoff);
    let mut traj = RelaxationTrajectory::start(rho0, retention);
    let mut current = rho0.clone();
    let mut channel: Option<CollisionChannel> = None;
    for (idx, &lambda) in schedule.values.iter().enumerate() {
        let reuse = channel.as_ref().is_some_and(|c| c.params.lambda == lambda);
        if !reuse {
            let params = ChannelParams::new(lambda, cutoff)?;
            channel = Some(CollisionChannel::with_spectrum(sigma, params, &spectrum)?);
        }
        let ch = channel.as_ref().expect("channel built above");
        let next = ch.apply_unguarded(&current)?;
        next.tail_guard(TAIL_GUARD_LEVELS, TAIL_GUARD_LIMIT, Some(idx + 1))?;
        traj.push(&current, next.clone(), lambda);
        current = next;
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{coherent_state, fock_state, thermal_state};
    use crate::linalg::max_abs_diff;
    use std::f64::consts::FRAC_PI_4;

    fn cut(n: usize) -> FockCutoff {
        FockCutoff::new(n).unwrap()
    }

    #[test]
    fn params_domain() {
        assert!(ChannelParams::new(0.0, cut(3)).is_err());
        assert!(ChannelParams::new(-0.1, cut(3)).is_err());
        assert!(ChannelParams::new(1.6, cut(3)).is_err());
        let p = ChannelParams::new(FRAC_PI_2, cut(3)).unwrap();
        assert_eq!(p.cos(), 0.0);
        assert_eq!(p.displacement_gain(), 1.0);
        let p = ChannelParams::new(0.37, cut(3)).unwrap();
        assert!((p.sin().powi(2) + p.cos().powi(2) - 1.0).abs() < 1e-15);
        assert_eq!(p.transmittance(), p.cos());
    }

    #[test]
    fn unitary_is_identity_at_zero_coupling() {
        let bs = BeamSplitter::new(ChannelParams::unchecked(0.0, cut(4)));
        let s = bs.to_dense(1000).unwrap();
        assert!(max_abs_diff(&s.view(), &linalg::identity(25).view()) < 1e-14);
    }

    #[test]
    fn unitary_structure() {
        let c = cut(6);
        let d = c.dim();
        for &lambda in &[0.2, FRAC_PI_4, 1.3, FRAC_PI_2] {
            let p = ChannelParams::new(lambda, c).unwrap();
            let s = beam_splitter_unitary(&p).unwrap();
            let sds = linalg::dagger(&s.view()).dot(&s);
            assert!(max_abs_diff(&sds.view(), &linalg::identity(d * d).view()) <= 1e-10);
            // commutes with total number
            let ops = mode_operators(c);
            let eye = linalg::identity(d);
            let n_tot =
                ndarray::linalg::kron(&ops.number, &eye) + ndarray::linalg::kron(&eye, &ops.number);
            let comm = s.dot(&n_tot) - n_tot.dot(&s);
            assert!(linalg::max_abs(&comm.view()) < 1e-12);
        }
    }

    #[test]
    fn unitary_matches_dense_exponential() {
        let c = cut(4);
        let d = c.dim();
        let lambda = 0.83;
        let ops = mode_operators(c);
        let eye = linalg::identity(d);
        let gen = (ndarray::linalg::kron(&ops.create, &ops.annihilate)
            - ndarray::linalg::kron(&ops.annihilate, &ops.create))
            * C64::new(lambda, 0.0);
        let reference = nalgebra::DMatrix::from_fn(d * d, d * d, |i, j| gen[[i, j]]).exp();
        let ours = beam_splitter_unitary(&ChannelParams::new(lambda, c).unwrap()).unwrap();
        for i in 0..d * d {
            for j in 0..d * d {
                assert!((ours[[i, j]] - reference[(i, j)]).norm() < 1e-12);
            }
        }
        let _ = eye;
    }

    #[test]
    fn single_photon_amplitudes() {
        let c = cut(3);
        let d = c.dim();
        let s = beam_splitter_unitary(&ChannelParams::new(FRAC_PI_4, c).unwrap()).unwrap();
        let ten = d; // |1,0⟩
        assert!((s[[ten, ten]].re - 0.5f64.sqrt()).abs() < 1e-12);

        let s = beam_splitter_unitary(&ChannelParams::new(FRAC_PI_2, c).unwrap()).unwrap();
        let one = 1; // |0,1⟩
        assert!((s[[one, ten]].norm() - 1.0).abs() < 1e-12);
        assert!(s[[ten, ten]].norm() < 1e-12);
    }

    #[test]
    fn heisenberg_relation_on_exact_sectors() {
        let r = heisenberg_check(&ChannelParams::new(0.5, cut(20)).unwrap()).unwrap();
        assert!(r <= 1e-9, "{r}");
        let r = heisenberg_check(&ChannelParams::new(FRAC_PI_2, cut(10)).unwrap()).unwrap();
        assert!(r <= 1e-9, "{r}");
        // boundary levels spoil the relation; not asserted beyond being finite
        let full =
            heisenberg_residual_full_space(&ChannelParams::new(0.5, cut(8)).unwrap()).unwrap();
        assert!(full.is_finite());
    }

    #[test]
    fn block_routes_match_dense_definition() {
        let c = cut(8);
        let rho = coherent_state(C64::new(0.5, 0.3), c).unwrap();
        let sigmas = [
            fock_state(1, c).unwrap(),
            thermal_state(2.5, c).unwrap(),
            coherent_state(C64::new(-0.2, 0.4), c).unwrap(),
        ];
        for sigma in &sigmas {
            for &lambda in &[0.3, 1.1, FRAC_PI_2] {
                let p = ChannelParams::new(lambda, c).unwrap();
                let fast = CollisionChannel::new(sigma, p)
                    .unwrap()
                    .apply_unguarded(&rho)
                    .unwrap();
                let slow = apply_channel_dense(&rho, sigma, &p).unwrap();
                assert!(max_abs_diff(&fast.view(), &slow.view()) < 1e-12);
            }
        }
    }

    #[test]
    fn banded_kraus_route_matches_dense_definition() {
        // coherent reservoir amplitudes vanish to machine precision high up,
        // so the Kraus operators are stored as bands at this cutoff
        let c = cut(30);
        let rho = coherent_state(C64::new(0.9, 0.2), c).unwrap();
        let sigma = coherent_state(C64::new(0.3, -0.4), c).unwrap();
        let p = ChannelParams::new(0.4, c).unwrap();
        let ch = CollisionChannel::new(&sigma, p).unwrap();
        match &ch.kernel {
            Kernel::Kraus { ops } => {
                assert!(ops.iter().any(|k| matches!(k, KrausOp::Banded { .. })))
            }
            Kernel::PhaseCovariant { .. } => panic!("coherent reservoir is not stationary"),
        }
        let fast = ch.apply_unguarded(&rho).unwrap();
        let slow = apply_channel_dense(&rho, &sigma, &p).unwrap();
        assert!(max_abs_diff(&fast.view(), &slow.view()) < 1e-12);
    }

    #[test]
    fn full_swap_returns_reservoir_state() {
        // sectors above n_max are truncated, so keep both states far from it
        let c = cut(30);
        let rho = coherent_state(C64::new(0.7, -0.1), c).unwrap();
        let sigma = thermal_state(1.5, c).unwrap();
        let p = ChannelParams::new(FRAC_PI_2, c).unwrap();
        let out = apply_channel(&rho, &sigma, &p).unwrap();
        assert!(max_abs_diff(&out.view(), &sigma.view()) < 1e-12);

        let sigma = fock_state(2, cut(6)).unwrap();
        let rho = fock_state(0, cut(6)).unwrap();
        let out = apply_channel_dense(
            &rho,
            &sigma,
            &ChannelParams::new(FRAC_PI_2, cut(6)).unwrap(),
        )
        .unwrap();
        assert!(max_abs_diff(&out.view(), &sigma.view()) < 1e-12);
    }

    #[test]
    fn thermal_reservoir_fixes_thermal_state() {
        let c = cut(40);
        let th = thermal_state(1.0, c).unwrap();
        let out = apply_channel(&th, &th, &ChannelParams::new(0.6, c).unwrap()).unwrap();
        assert!(max_abs_diff(&out.view(), &th.view()) < 1e-8);
    }

    #[test]
    fn photon_number_transfer() {
        let c = cut(20);
        let rho = fock_state(2, c).unwrap();
        let vac = fock_state(0, c).unwrap();
        let p = ChannelParams::new(0.3, c).unwrap();
        let out = apply_channel(&rho, &vac, &p).unwrap();
        assert!((out.mean_photon_number() - 2.0 * 0.3_f64.cos().powi(2)).abs() < 1e-12);
        assert!((out.mean_photon_number() - 1.825_335_61).abs() < 1e-8);
    }

    #[test]
    fn cutoff_mismatch_is_a_shape_error() {
        let rho = fock_state(0, cut(5)).unwrap();
        let sigma = fock_state(0, cut(6)).unwrap();
        let p = ChannelParams::new(0.3, cut(5)).unwrap();
        assert!(matches!(
            apply_channel(&rho, &sigma, &p),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn tail_guard_trips_near_the_boundary() {
        let c = cut(6);
        let rho = fock_state(0, c).unwrap();
        let sigma = fock_state(6, c).unwrap();
        let p = ChannelParams::new(1.2, c).unwrap();
        assert!(matches!(
            apply_channel(&rho, &sigma, &p),
            Err(Error::TailGuard { .. })
        ));
    }

    #[test]
    fn schedules() {
        let s = CouplingSchedule::van_hove_fixed(16).unwrap();
        assert_eq!(s.len(), 16);
        assert!(s.values().iter().all(|&l| (l - 0.25).abs() < 1e-15));
        let r = CouplingSchedule::van_hove_running(3).unwrap();
        let expect = [1.0 / 2f64.sqrt(), 1.0 / 3f64.sqrt(), 0.5];
        for (a, b) in r.values().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(CouplingSchedule::constant(0.3, 0).is_err());
        assert!(CouplingSchedule::van_hove_fixed(0).is_err());
    }

    #[test]
    fn constant_schedule_equals_repeated_application() {
        let c = cut(15);
        let rho = coherent_state(C64::new(0.4, 0.2), c).unwrap();
        let sigma = fock_state(1, c).unwrap();
        let p = ChannelParams::new(0.45, c).unwrap();
        let sched = CouplingSchedule::constant(0.45, 5).unwrap();
        let traj = run_schedule(&rho, &sigma, &sched, c).unwrap();
        let mut manual = rho.clone();
        for _ in 0..5 {
            manual = apply_channel(&manual, &sigma, &p).unwrap();
        }
        assert_eq!(traj.steps(), 5);
        assert!(max_abs_diff(&traj.final_state().view(), &manual.view()) < 1e-14);
    }

    #[test]
    fn trajectory_bookkeeping_and_csv() {
        let c = cut(20);
        let rho = fock_state(3, c).unwrap();
        let sigma = thermal_state(1.0, c).unwrap();
        let p = ChannelParams::new(0.9, c).unwrap();
        let traj = iterate_with(
            &rho,
            &sigma,
            &p,
            IterateOptions {
                tol: 1e-6,
                max_steps: 200,
                retention: Retention::All,
            },
        )
        .unwrap();
        assert_eq!(traj.states.len(), traj.distances.len() + 1);
        assert!(traj.distances.iter().all(|d| *d >= 0.0));
        assert_eq!(traj.converged_at, Some(traj.steps()));
        let ch = CollisionChannel::new(&sigma, p).unwrap();
        for k in 0..traj.steps() {
            let next = ch.apply_unguarded(&traj.states[k]).unwrap();
            assert!(max_abs_diff(&next.view(), &traj.states[k + 1].view()) == 0.0);
        }
        let csv = traj.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next(),
            Some("step,trace_distance_to_next,mean_photon_number,purity")
        );
        assert_eq!(csv.lines().count(), traj.steps() + 2);
        assert!(csv.lines().last().unwrap().split(',').nth(1) == Some(""));
    }

    #[test]
    fn step_limit_is_not_an_error() {
        let c = cut(20);
        let rho = fock_state(3, c).unwrap();
        let sigma = thermal_state(1.0, c).unwrap();
        let p = ChannelParams::new(0.1, c).unwrap();
        let traj = iterate_to_fixed_point(&rho, &sigma, &p, 1e-9, 5).unwrap();
        assert_eq!(traj.converged_at, None);
        assert_eq!(traj.steps(), 5);
        assert!(iterate_to_fixed_point(&rho, &sigma, &p, 1e-13, 5).is_err());
    }
}
