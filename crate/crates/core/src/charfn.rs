//! Characteristic functions `χ(z) = Tr(ρ D(z))`, the infinite product giving
//! the fixed point of the collision channel, and moment extraction.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::fock::{DensityMatrix, DisplacementKernel, FockCutoff};
use crate::gaussian::GaussianState;
use crate::linalg::CMat;
use crate::special::laguerre;
use crate::{fmt_num, C64};

/// Extra Fock levels added before evaluating `Tr(ρ D(z))`, so that the
/// truncated displacement is accurate on the support of `ρ`.
pub fn charfn_padding(n_max: usize) -> usize {
    (n_max / 2).max(40)
}

/// Factors with modulus below this are multiplied directly instead of being
/// accumulated through their logarithm.
const LOG_SPACE_FLOOR: f64 = 1e-3;
const UNDERFLOW_FLOOR: f64 = 1e-300;
const C0_SAMPLES: usize = 64;
const C0_SAFETY: f64 = 1.5;
const MAX_FACTORS: usize = 10_000_000;
/// Radius on which the product kind fixes its number of factors.
const PRODUCT_REFERENCE_RADIUS: f64 = 2.0;
const PRODUCT_REFERENCE_RAYS: usize = 16;
pub const PRODUCT_DEFAULT_TOL: f64 = 1e-12;
pub const MIN_PRODUCT_TOL: f64 = 1e-12;

pub const FD_STEP: f64 = 1e-3;
pub const RICHARDSON_LIMIT: f64 = 1e-5;
pub const QUARTIC_FIT_LIMIT: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub enum CharFnKind {
    MatrixBacked,
    Thermal { beta: f64 },
    Fock { n: usize },
    Coherent { alpha: C64 },
    Gaussian(GaussianState),
    ProductAsymptotic,
}

#[derive(Debug, Clone)]
enum Inner {
    Matrix {
        rho: Arc<CMat>,
        kernel: Arc<DisplacementKernel>,
    },
    Thermal(f64),
    Fock(usize),
    Coherent(C64),
    Gaussian(GaussianState),
    Product {
        sigma: Box<CharFn>,
        params: ChannelParams,
        factors: usize,
    },
}

/// A characteristic function together with a description of its origin.
#[derive(Debug, Clone)]
pub struct CharFn {
    inner: Inner,
}

impl CharFn {
    /// `exp(−½|z|² coth(β/2))`; `β = ∞` gives the vacuum.
    pub fn thermal(beta: f64) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(Error::param(
                "beta",
                format!("must be positive, got {beta}"),
            ));
        }
        Ok(CharFn {
            inner: Inner::Thermal(beta),
        })
    }

    pub fn fock(n: usize) -> Self {
        CharFn {
            inner: Inner::Fock(n),
        }
    }

    pub fn coherent(alpha: C64) -> Self {
        CharFn {
            inner: Inner::Coherent(alpha),
        }
    }

    pub fn gaussian(g: GaussianState) -> Self {
        CharFn {
            inner: Inner::Gaussian(g),
        }
    }

    pub fn of_state(rho: &DensityMatrix) -> Result<Self> {
        let cutoff = rho.single_mode_cutoff()?;
        let padded = FockCutoff::new(cutoff.n_max() + charfn_padding(cutoff.n_max()))?;
        let kernel = Arc::new(DisplacementKernel::new(padded));
        Self::of_state_with_kernel(rho, kernel)
    }

    /// Uses a caller-supplied kernel, which must be at least as large as the
    /// state's cutoff. Lets many states share one eigen-decomposition.
    pub fn of_state_with_kernel(
        rho: &DensityMatrix,
        kernel: Arc<DisplacementKernel>,
    ) -> Result<Self> {
        let embedded = rho.embed(kernel.cutoff())?;
        Ok(CharFn {
            inner: Inner::Matrix {
                rho: Arc::new(embedded.into_entries()),
                kernel,
            },
        })
    }

    /// `Π_k χ_σ(s c^k z)` with a number of factors certified on `|z| ≤ 2`.
    pub fn product_asymptotic(sigma: CharFn, params: ChannelParams) -> Result<Self> {
        let mut factors = 1;
        for j in 0..PRODUCT_REFERENCE_RAYS {
            let theta = 2.0 * PI * j as f64 / PRODUCT_REFERENCE_RAYS as f64;
            let z = C64::from_polar(PRODUCT_REFERENCE_RADIUS, theta);
            let (k, _) = certified_factor_count(&sigma, &params, z, PRODUCT_DEFAULT_TOL)?;
            factors = factors.max(k);
        }
        Ok(CharFn {
            inner: Inner::Product {
                sigma: Box::new(sigma),
                params,
                factors,
            },
        })
    }

    pub fn kind(&self) -> CharFnKind {
        match &self.inner {
            Inner::Matrix { .. } => CharFnKind::MatrixBacked,
            Inner::Thermal(beta) => CharFnKind::Thermal { beta: *beta },
            Inner::Fock(n) => CharFnKind::Fock { n: *n },
            Inner::Coherent(alpha) => CharFnKind::Coherent { alpha: *alpha },
            Inner::Gaussian(g) => CharFnKind::Gaussian(*g),
            Inner::Product { .. } => CharFnKind::ProductAsymptotic,
        }
    }

    pub fn eval(&self, z: C64) -> Result<C64> {
        self.value(z)
    }

    /// Value and a bound on the log of any omitted product tail (zero for
    /// every kind but the product).
    pub fn eval_with_bound(&self, z: C64) -> Result<(C64, f64)> {
        let value = match &self.inner {
            Inner::Matrix { rho, kernel } => kernel.expectation(&rho.view(), z),
            Inner::Thermal(beta) => {
                let coth = if beta.is_infinite() {
                    1.0
                } else {
                    1.0 / (beta / 2.0).tanh()
                };
                C64::new((-0.5 * z.norm_sqr() * coth).exp(), 0.0)
            }
            Inner::Fock(n) => {
                let x = z.norm_sqr();
                C64::new((-0.5 * x).exp() * laguerre(*n, x), 0.0)
            }
            Inner::Coherent(alpha) => {
                (-0.5 * z.norm_sqr() + z * alpha.conj() - z.conj() * alpha).exp()
            }
            Inner::Gaussian(g) => g.charfn(z),
            Inner::Product {
                sigma,
                params,
                factors,
            } => {
                let c0 = estimate_c0(sigma, params, z)?;
                let p = product_with_factors(sigma, params, z, *factors)?;
                return Ok((p.value, tail_bound(c0, params.cos(), *factors)));
            }
        };
        Ok((value, 0.0))
    }

    fn value(&self, z: C64) -> Result<C64> {
        match &self.inner {
            Inner::Product {
                sigma,
                params,
                factors,
            } => product_with_factors(sigma, params, z, *factors).map(|p| p.value),
            _ => self.eval_with_bound(z).map(|(v, _)| v),
        }
    }
}

pub fn charfn_of_state(rho: &DensityMatrix) -> Result<CharFn> {
    CharFn::of_state(rho)
}

pub fn charfn_fock(n: usize) -> CharFn {
    CharFn::fock(n)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProductTruncation {
    pub k_terms: usize,
    /// Bound on the modulus of the log of the omitted factors.
    pub tail_bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProductValue {
    pub value: C64,
    pub truncation: ProductTruncation,
    /// A factor fell below `1e-300`; the value is reported as zero.
    pub underflow: bool,
}

struct RawProduct {
    value: C64,
    underflow: bool,
}

/// `1.5 × max_x |d/dx χ_σ(x s z)|` over 64 points of `x ∈ [0, 1]`.
fn estimate_c0(sigma: &CharFn, params: &ChannelParams, z: C64) -> Result<f64> {
    let w = z * params.sin();
    if w.norm() == 0.0 {
        return Ok(0.0);
    }
    let h = 1e-5;
    let mut worst = 0.0_f64;
    for i in 0..C0_SAMPLES {
        let x = i as f64 / (C0_SAMPLES - 1) as f64;
        let deriv = (sigma.eval(w * (x + h))? - sigma.eval(w * (x - h))?) / (2.0 * h);
        worst = worst.max(deriv.norm());
    }
    if !worst.is_finite() {
        return Err(Error::Estimation(format!(
            "derivative bound is not finite at z = {z}"
        )));
    }
    Ok(C0_SAFETY * worst)
}

fn tail_bound(c0: f64, c: f64, k: usize) -> f64 {
    if c == 0.0 {
        return 0.0;
    }
    2.0 * c0 * c.powi(k as i32) / (1.0 - c)
}

/// Smallest `K ≥ 1` with `2 C₀ c^K/(1−c) ≤ rel_tol` and `C₀ c^K ≤ ½`.
fn certified_factor_count(
    sigma: &CharFn,
    params: &ChannelParams,
    z: C64,
    rel_tol: f64,
) -> Result<(usize, f64)> {
    let c = params.cos();
    if c == 0.0 {
        return Ok((1, 0.0));
    }
    let c0 = estimate_c0(sigma, params, z)?;
    if c0 == 0.0 {
        return Ok((1, 0.0));
    }
    let need_tail = (rel_tol * (1.0 - c) / (2.0 * c0)).ln() / c.ln();
    let need_small = (0.5 / c0).ln() / c.ln();
    let k = need_tail.max(need_small).ceil().max(1.0);
    if !(k <= MAX_FACTORS as f64) {
        return Err(Error::Estimation(format!(
            "product needs more than {MAX_FACTORS} factors at z = {z} (c = {c})"
        )));
    }
    let k = k as usize;
    Ok((k, tail_bound(c0, c, k)))
}

fn product_with_factors(
    sigma: &CharFn,
    params: &ChannelParams,
    z: C64,
    k_terms: usize,
) -> Result<RawProduct> {
    let (s, c) = (params.sin(), params.cos());
    if k_terms == 1 {
        let value = sigma.eval(z * s)?;
        let underflow = value.norm() < UNDERFLOW_FLOOR;
        return Ok(RawProduct {
            value: if underflow { C64::new(0.0, 0.0) } else { value },
            underflow,
        });
    }
    let mut log_sum = C64::new(0.0, 0.0);
    let mut direct = C64::new(1.0, 0.0);
    let mut scale = s;
    for _ in 0..k_terms {
        let f = sigma.eval(z * scale)?;
        let m = f.norm();
        if m < UNDERFLOW_FLOOR {
            return Ok(RawProduct {
                value: C64::new(0.0, 0.0),
                underflow: true,
            });
        }
        if m < LOG_SPACE_FLOOR {
            direct *= f;
        } else {
            log_sum += f.ln();
        }
        scale *= c;
    }
    let value = direct * log_sum.exp();
    let underflow = value.norm() < UNDERFLOW_FLOOR;
    Ok(RawProduct {
        value: if underflow { C64::new(0.0, 0.0) } else { value },
        underflow,
    })
}

/// `Π_{k<K} χ_σ(s c^k z)` with `K` chosen so the omitted tail is below `rel_tol`.
pub fn asymptotic_product(
    chi_sigma: &CharFn,
    params: &ChannelParams,
    z: C64,
    rel_tol: f64,
) -> Result<ProductValue> {
    if !(rel_tol >= MIN_PRODUCT_TOL) {
        return Err(Error::param(
            "rel_tol",
            format!("must be at least {MIN_PRODUCT_TOL:e}, got {rel_tol}"),
        ));
    }
    let (k_terms, tail) = certified_factor_count(chi_sigma, params, z, rel_tol)?;
    asymptotic_product_with_terms(chi_sigma, params, z, k_terms).map(|mut p| {
        p.truncation.tail_bound = tail;
        p
    })
}

/// As [`asymptotic_product`] with an explicit number of factors.
pub fn asymptotic_product_with_terms(
    chi_sigma: &CharFn,
    params: &ChannelParams,
    z: C64,
    k_terms: usize,
) -> Result<ProductValue> {
    if k_terms == 0 {
        return Err(Error::param("k_terms", "must be positive"));
    }
    let c0 = estimate_c0(chi_sigma, params, z)?;
    let raw = product_with_factors(chi_sigma, params, z, k_terms)?;
    Ok(ProductValue {
        value: raw.value,
        truncation: ProductTruncation {
            k_terms,
            tail_bound: tail_bound(c0, params.cos(), k_terms),
        },
        underflow: raw.underflow,
    })
}

/// First and second moments recovered from derivatives of `χ` at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharFnMoments {
    /// `⟨a⟩`
    pub mean_a: C64,
    /// `⟨a†a⟩`
    pub mean_number: f64,
    /// Symmetrized `Cov[a†, a] = ½⟨a†a + a a†⟩ − |⟨a⟩|²`.
    pub cov_adag_a: f64,
    /// `Cov[a, a] = ⟨a²⟩ − ⟨a⟩²`.
    pub cov_aa: C64,
}

struct Stencil<'a> {
    chi: &'a CharFn,
}

impl Stencil<'_> {
    fn at(&self, x: f64, y: f64) -> Result<C64> {
        self.chi.eval(C64::new(x, y))
    }

    fn dx(&self, h: f64) -> Result<C64> {
        Ok((self.at(h, 0.0)? - self.at(-h, 0.0)?) / (2.0 * h))
    }

    fn dy(&self, h: f64) -> Result<C64> {
        Ok((self.at(0.0, h)? - self.at(0.0, -h)?) / (2.0 * h))
    }

    fn dxx(&self, h: f64) -> Result<C64> {
        Ok((self.at(h, 0.0)? - self.at(0.0, 0.0)? * 2.0 + self.at(-h, 0.0)?) / (h * h))
    }

    fn dyy(&self, h: f64) -> Result<C64> {
        Ok((self.at(0.0, h)? - self.at(0.0, 0.0)? * 2.0 + self.at(0.0, -h)?) / (h * h))
    }

    fn dxy(&self, h: f64) -> Result<C64> {
        Ok((self.at(h, h)? - self.at(h, -h)? - self.at(-h, h)? + self.at(-h, -h)?) / (4.0 * h * h))
    }
}

fn richardson(name: &str, f: impl Fn(f64) -> Result<C64>) -> Result<C64> {
    let coarse = f(FD_STEP)?;
    let fine = f(FD_STEP / 2.0)?;
    let gap = (coarse - fine).norm();
    // relative for large derivatives, whose step error scales with them
    if !(gap <= RICHARDSON_LIMIT * fine.norm().max(1.0)) {
        return Err(Error::NumericalInstability(format!(
            "finite-difference {name} changes by {gap:.3e} when halving the step"
        )));
    }
    Ok((fine * 4.0 - coarse) / 3.0)
}

/// Moments from Wirtinger derivatives of `χ` at 0, with `∂_z = ½(∂_x − i∂_y)`:
/// `⟨a⟩ = −∂_{z*}χ`, `⟨a†a⟩ + ½ = −∂_z∂_{z*}χ`, `⟨a²⟩ = ∂²_{z*}χ`.
pub fn moments_from_charfn(chi: &CharFn) -> Result<CharFnMoments> {
    let st = Stencil { chi };
    let dx = richardson("∂x", |h| st.dx(h))?;
    let dy = richardson("∂y", |h| st.dy(h))?;
    let dxx = richardson("∂xx", |h| st.dxx(h))?;
    let dyy = richardson("∂yy", |h| st.dyy(h))?;
    let dxy = richardson("∂xy", |h| st.dxy(h))?;
    let i = C64::i();
    let mean_a = -(dx + i * dy) * 0.5;
    let mean_number = -0.25 * (dxx + dyy).re - 0.5;
    let a2 = (dxx - dyy + i * dxy * 2.0) * 0.25;
    Ok(CharFnMoments {
        mean_a,
        mean_number,
        cov_adag_a: mean_number + 0.5 - mean_a.norm_sqr(),
        cov_aa: a2 - mean_a * mean_a,
    })
}

/// Coefficient of `t⁴` in `ln χ(t)` for real `t`, from a least-squares fit of
/// `c₂t² + c₄t⁴ + c₆t⁶` to `ln|χ|` at `t = 0, ±0.1, …, ±0.4`.
pub fn log_charfn_quartic_coeff(chi: &CharFn) -> Result<f64> {
    let ts: Vec<f64> = (-4..=4).map(|k| 0.1 * k as f64).collect();
    let mut ys = Vec::with_capacity(ts.len());
    for &t in &ts {
        let v = chi.eval(C64::new(t, 0.0))?;
        if v.norm() == 0.0 {
            return Err(Error::Domain(format!("χ vanishes at t = {t}")));
        }
        ys.push(v.norm().ln());
    }
    let design = DMatrix::from_fn(ts.len(), 3, |r, c| ts[r].powi(2 * (c as i32 + 1)));
    let rhs = DVector::from_vec(ys);
    let coeffs = design
        .clone()
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::NumericalInstability(e.to_string()))?;
    let residual = (&design * &coeffs - &rhs).amax();
    if !(residual <= QUARTIC_FIT_LIMIT) {
        return Err(Error::NumericalInstability(format!(
            "even-polynomial fit of ln χ leaves residual {residual:.3e}"
        )));
    }
    Ok(coeffs[1])
}

pub const GRID_POINTS: usize = 25;
pub const GRID_RADIUS: f64 = 2.0;

/// Golden-angle spiral filling the disc `|z| ≤ r_max`:
/// `z_j = r_max √(j/(n−1)) e^{i j φ}` with `φ = π(3 − √5)`.
pub fn z_grid(n_points: usize, r_max: f64) -> Vec<C64> {
    let golden = PI * (3.0 - 5f64.sqrt());
    let denom = n_points.saturating_sub(1).max(1) as f64;
    (0..n_points)
        .map(|j| C64::from_polar(r_max * (j as f64 / denom).sqrt(), golden * j as f64))
        .collect()
}

/// CSV with columns `re_z, im_z, re_chi, im_chi, abs_chi, tail_bound`.
pub fn grid_csv(chi: &CharFn, grid: &[C64]) -> Result<String> {
    let mut out = String::from("re_z,im_z,re_chi,im_chi,abs_chi,tail_bound\n");
    for &z in grid {
        let (v, tail) = chi.eval_with_bound(z)?;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_num(z.re),
            fmt_num(z.im),
            fmt_num(v.re),
            fmt_num(v.im),
            fmt_num(v.norm()),
            fmt_num(tail)
        );
    }
    Ok(out)
}
