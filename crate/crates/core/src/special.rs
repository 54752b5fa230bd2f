//! Fresnel-type integrals, the elementary kernel functions and the free
//! propagator.
//!
//! Notation: `F(w) = ∫₀^w e^{iz²} dz`, `M(w) = ∫₀^w z² e^{iz²} dz`,
//! `w_jl(t,τ) = |y_j(t) − y_l(τ)| / (2√(t−τ))`, `B = F(w)/w` and
//! `A = P·M(w)/w³` with `P = (y_j(t) − y_l(τ))·ẏ_l(τ) / (2(t−τ))`.

use std::f64::consts::{FRAC_PI_4, PI};
use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::quadrature::{adaptive_gk, GaussLegendre};
use crate::trajectories::TrajectorySet;
use crate::Vec3;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Upper end of the power-series regime of `F`, `M` and their ratios.
const SERIES_LIMIT: f64 = 1.5;
/// Start of the asymptotic regime of `F`.
const ASYMPTOTIC_LIMIT: f64 = 8.0;
const TABLE_STEP: f64 = 0.125;

/// Branches of `√(−i)` and of `(4πit)^{3/2}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchConvention {
    pub sqrt_minus_i: Complex64,
}

impl Default for BranchConvention {
    fn default() -> Self {
        Self::standard()
    }
}

impl BranchConvention {
    /// `√(−i) = e^{−iπ/4}`.
    pub fn standard() -> Self {
        Self { sqrt_minus_i: Complex64::from_polar(1.0, -FRAC_PI_4) }
    }

    /// The other square root of `−i`. Only useful as a negative control.
    pub fn flipped() -> Self {
        Self { sqrt_minus_i: -Self::standard().sqrt_minus_i }
    }

    pub fn is_standard(&self) -> bool {
        (self.sqrt_minus_i - Self::standard().sqrt_minus_i).norm() < 1e-15
    }

    /// `√i`, taken as the conjugate of `√(−i)`.
    pub fn sqrt_i(&self) -> Complex64 {
        self.sqrt_minus_i.conj()
    }

    /// `(4πit)^{3/2} = (4π|t|)^{3/2} e^{i·3π/4·sign t}`.
    pub fn propagator_phase(&self, t: f64) -> Complex64 {
        let modulus = (4.0 * PI * t.abs()).powf(1.5);
        Complex64::from_polar(modulus, 3.0 * FRAC_PI_4 * t.signum())
    }

    /// `U₀(t; x) = e^{i|x|²/(4t)} / (4πit)^{3/2}`.
    pub fn propagator_u0(&self, t: f64, x: &Vec3) -> Result<Complex64> {
        if t == 0.0 || !t.is_finite() {
            return Err(Error::invalid(format!("propagator needs a finite nonzero time, got {t}")));
        }
        Ok(Complex64::from_polar(1.0, x.norm_squared() / (4.0 * t)) / self.propagator_phase(t))
    }
}

/// Free propagator under the standard branch.
pub fn propagator_u0(t: f64, x: &Vec3) -> Result<Complex64> {
    BranchConvention::standard().propagator_u0(t, x)
}

fn check_argument(w: f64) -> Result<()> {
    if w >= 0.0 && w.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("Fresnel argument must be finite and nonnegative, got {w}")))
    }
}

/// `F(∞) = (√π/2) e^{iπ/4}`.
pub fn fresnel_limit() -> Complex64 {
    Complex64::from_polar(0.5 * PI.sqrt(), FRAC_PI_4)
}

/// `F(w) = ∫₀^w e^{iz²} dz`.
pub fn fresnel_f(w: f64) -> Result<Complex64> {
    check_argument(w)?;
    Ok(fresnel_f_unchecked(w))
}

/// `∫_w^∞ e^{iz²} dz = F(∞) − F(w)`.
pub fn fresnel_tail(w: f64) -> Result<Complex64> {
    check_argument(w)?;
    Ok(fresnel_tail_unchecked(w))
}

/// `M(w) = ∫₀^w z² e^{iz²} dz`.
pub fn fresnel_moment2(w: f64) -> Result<Complex64> {
    check_argument(w)?;
    Ok(moment2_unchecked(w))
}

pub(crate) fn fresnel_f_unchecked(w: f64) -> Complex64 {
    if w <= SERIES_LIMIT {
        w * series(w * w, 1)
    } else if w <= ASYMPTOTIC_LIMIT {
        fresnel_mid(w)
    } else {
        fresnel_limit() - asymptotic_tail(w)
    }
}

pub(crate) fn fresnel_tail_unchecked(w: f64) -> Complex64 {
    if w > ASYMPTOTIC_LIMIT {
        asymptotic_tail(w)
    } else {
        fresnel_limit() - fresnel_f_unchecked(w)
    }
}

pub(crate) fn moment2_unchecked(w: f64) -> Complex64 {
    if w <= SERIES_LIMIT {
        w * w * w * series(w * w, 3)
    } else {
        (w * expi(w * w) - fresnel_f_unchecked(w)) / (2.0 * I)
    }
}

#[inline]
pub(crate) fn expi(phase: f64) -> Complex64 {
    let (s, c) = phase.sin_cos();
    Complex64::new(c, s)
}

/// `Σ_n (i x)^n / (n! (2n + offset))`.
fn series(x: f64, offset: u32) -> Complex64 {
    let mut term = Complex64::new(1.0, 0.0);
    let mut sum = Complex64::new(1.0 / offset as f64, 0.0);
    for n in 1..80u32 {
        term *= I * (x / n as f64);
        let add = term / (2 * n + offset) as f64;
        sum += add;
        if add.norm() < 1e-18 * sum.norm() {
            break;
        }
    }
    sum
}

/// `e^{iw²}/(2w) Σ_k i^{k+1} (−1)^k (1/2)_k w^{−2k}`, summed to the
/// smallest term.
fn asymptotic_tail(w: f64) -> Complex64 {
    let inv = 1.0 / (w * w);
    let mut coeff = I;
    let mut sum = coeff;
    let mut last = f64::INFINITY;
    for k in 0..200 {
        let next = coeff * (-I) * ((k as f64 + 0.5) * inv);
        let size = next.norm();
        if size >= last || size < 1e-18 {
            break;
        }
        sum += next;
        coeff = next;
        last = size;
    }
    expi(w * w) * sum / (2.0 * w)
}

fn fresnel_table() -> &'static Vec<Complex64> {
    static TABLE: OnceLock<Vec<Complex64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = ((ASYMPTOTIC_LIMIT - SERIES_LIMIT) / TABLE_STEP).round() as usize;
        let mut table = Vec::with_capacity(n + 1);
        let mut acc = SERIES_LIMIT * series(SERIES_LIMIT * SERIES_LIMIT, 1);
        table.push(acc);
        for i in 0..n {
            let a = SERIES_LIMIT + TABLE_STEP * i as f64;
            let (piece, _) = adaptive_gk(|z| expi(z * z), a, a + TABLE_STEP, 1e-17, 1e-16, 64);
            acc += piece;
            table.push(acc);
        }
        table
    })
}

fn short_rule() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(20))
}

fn fresnel_mid(w: f64) -> Complex64 {
    let table = fresnel_table();
    let idx = (((w - SERIES_LIMIT) / TABLE_STEP).round() as usize).min(table.len() - 1);
    let z0 = SERIES_LIMIT + TABLE_STEP * idx as f64;
    table[idx] + short_rule().integrate_complex(z0, w, |z| expi(z * z))
}

/// `B(w) = F(w)/w`, with `B(0) = 1`.
pub fn b_of_w(w: f64) -> Complex64 {
    if w <= SERIES_LIMIT {
        series(w * w, 1)
    } else {
        fresnel_f_unchecked(w) / w
    }
}

/// `M(w)/w³`, with limit `1/3` at zero.
pub fn m3_of_w(w: f64) -> Complex64 {
    if w <= SERIES_LIMIT {
        series(w * w, 3)
    } else {
        moment2_unchecked(w) / (w * w * w)
    }
}

/// `(B(w) − 1)/w²`, with limit `i/3` at zero.
pub fn b1_of_w(w: f64) -> Complex64 {
    if w <= SERIES_LIMIT {
        // Σ_{n≥1} i^n w^{2n−2} / (n!(2n+1))
        let x = w * w;
        let mut term = I;
        let mut sum = I / 3.0;
        for n in 2..80u32 {
            term *= I * (x / n as f64);
            let add = term / (2 * n + 1) as f64;
            sum += add;
            if add.norm() < 1e-18 * sum.norm() {
                break;
            }
        }
        sum
    } else {
        (b_of_w(w) - 1.0) / (w * w)
    }
}

/// `dB/dw = (e^{iw²} − B)/w = 2iw·M(w)/w³`.
pub fn db_dw(w: f64) -> Complex64 {
    2.0 * I * w * m3_of_w(w)
}

/// Geometry of a kernel evaluation at `(t, τ)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Pair {
    /// `y_j(t) − y_l(τ)`
    pub d: Vec3,
    /// `t − τ`
    pub delta: f64,
    /// `ẏ_l(τ)`
    pub vel_l: Vec3,
    pub w: f64,
}

/// Displacement and `w` for `(j, l, t, τ)`. On the diagonal the difference
/// `y_j(t) − y_j(τ)` is replaced by its third-order Taylor polynomial once
/// `w` drops below `threshold`, to avoid cancellation.
pub(crate) fn pair(set: &TrajectorySet, j: usize, l: usize, t: f64, tau: f64, threshold: f64) -> Result<Pair> {
    if !(t > tau) {
        return Err(Error::invalid(format!("kernel needs t > τ, got t = {t}, τ = {tau}")));
    }
    let sj = set.state(j, t)?;
    let sl = set.state(l, tau)?;
    let delta = t - tau;
    let mut d = sj.position - sl.position;
    let mut w = d.norm() / (2.0 * delta.sqrt());
    if j == l && w < threshold {
        d = sl.velocity * delta + sl.acceleration * (0.5 * delta * delta) + sl.jerk * (delta * delta * delta / 6.0);
        w = d.norm() / (2.0 * delta.sqrt());
    }
    Ok(Pair { d, delta, vel_l: sl.velocity, w })
}

pub(crate) const DEFAULT_THRESHOLD: f64 = 1e-3;

/// `w_jl(t, τ) = |y_j(t) − y_l(τ)| / (2√(t−τ))`.
pub fn w_jl(set: &TrajectorySet, j: usize, l: usize, t: f64, tau: f64) -> Result<f64> {
    Ok(pair(set, j, l, t, tau, DEFAULT_THRESHOLD)?.w)
}

/// `B_jl(t, τ) = F(w)/w`, equal to 1 at `w = 0`.
pub fn kernel_b(set: &TrajectorySet, j: usize, l: usize, t: f64, tau: f64) -> Result<Complex64> {
    Ok(b_of_w(w_jl(set, j, l, t, tau)?))
}

pub(crate) fn a_from_pair(p: &Pair) -> Complex64 {
    let prefactor = p.d.dot(&p.vel_l) / (2.0 * p.delta);
    prefactor * m3_of_w(p.w)
}

/// `A_jl(t, τ) = P·w⁻³∫₀^w z²e^{iz²}dz`, `P = (y_j(t) − y_l(τ))·ẏ_l(τ)/(2(t−τ))`.
pub fn kernel_a(set: &TrajectorySet, j: usize, l: usize, t: f64, tau: f64) -> Result<Complex64> {
    Ok(a_from_pair(&pair(set, j, l, t, tau, DEFAULT_THRESHOLD)?))
}

/// `∂w/∂τ` times `dB/dw`, written through `M/w³` so that it stays finite at
/// `w = 0`:
/// `dB/dτ = 2i·(M/w³)·[−d·ẏ(τ)/(4δ) + |d|²/(8δ²)]`.
pub(crate) fn db_dtau_from_pair(p: &Pair) -> Complex64 {
    let g = -p.d.dot(&p.vel_l) / (4.0 * p.delta) + p.d.norm_squared() / (8.0 * p.delta * p.delta);
    2.0 * I * m3_of_w(p.w) * g
}

/// `∂B_jj(σ, τ)/∂τ`.
pub fn db_dtau_diag(set: &TrajectorySet, j: usize, sigma: f64, tau: f64) -> Result<Complex64> {
    Ok(db_dtau_from_pair(&pair(set, j, j, sigma, tau, DEFAULT_THRESHOLD)?))
}

/// `(B_jj(σ,τ) − 1)/(2(σ−τ))`.
pub(crate) fn b_minus_one_over_2delta(p: &Pair) -> Complex64 {
    b1_of_w(p.w) * (p.d.norm_squared() / (8.0 * p.delta * p.delta))
}
