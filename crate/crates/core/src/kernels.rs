//! The composite Volterra kernels.
//!
//! `C_j(t,τ)` collects the self-interaction of a moving center and
//! `D_jl(t,τ)` the coupling between two distinct centers. Both are inner
//! integrals over an intermediate time `σ ∈ [τ, t]`:
//!
//! ```text
//! C_j(t,τ)  = −(1/π) ∫ dσ [(t−σ)(σ−τ)]^{−1/2} [ iA_jj + ∂_τB_jj + (B_jj − 1)/(2(σ−τ)) ](σ,τ)
//! D_jl(t,τ) = κ ∫ dσ (t−σ)^{−1/2} U₀(σ−τ; y_j(σ) − y_l(τ)),      κ = −4i√π/√(−i)
//! ```
//!
//! The endpoint `σ → τ` of `D` carries the conditionally convergent factor
//! `(σ−τ)^{−3/2} e^{i|d|²/(4(σ−τ))}`; it is integrated in the variable
//! `z = |d|/(2√(σ−τ))` by [`oscillatory`], which is shared with the solver.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::OnceLock;

use nalgebra::{Matrix5, Vector5};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::quadrature::{adaptive_gk, GaussLegendre};
use crate::special::{self, expi, fresnel_f_unchecked, fresnel_tail_unchecked, BranchConvention};
use crate::trajectories::TrajectorySet;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelOptions {
    /// Gauss–Legendre nodes for the inner integral of `C`.
    pub inner_nodes: usize,
    /// Filon panels per octave of `z` for the oscillatory endpoint of `D`.
    pub filon_panels: usize,
    /// Below this `w` the diagonal displacement is taken from its Taylor
    /// polynomial.
    pub diag_series_threshold: f64,
    pub branch: BranchConvention,
}

impl Default for KernelOptions {
    fn default() -> Self {
        Self {
            inner_nodes: 32,
            filon_panels: 24,
            diag_series_threshold: 1e-3,
            branch: BranchConvention::standard(),
        }
    }
}

impl KernelOptions {
    pub fn validate(&self) -> Result<()> {
        if self.inner_nodes < 4 {
            return Err(Error::invalid(format!("inner_nodes must be at least 4, got {}", self.inner_nodes)));
        }
        if self.filon_panels < 4 {
            return Err(Error::invalid(format!("filon_panels must be at least 4, got {}", self.filon_panels)));
        }
        if !(self.diag_series_threshold > 0.0 && self.diag_series_threshold < 1.0) {
            return Err(Error::invalid("diag_series_threshold must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// `α·4√π/√(−i)` under the standard branch, i.e. `α·4√π·e^{iπ/4}`.
pub fn abel_coefficient(alpha: f64) -> Complex64 {
    abel_coefficient_with(alpha, &BranchConvention::standard())
}

pub fn abel_coefficient_with(alpha: f64, branch: &BranchConvention) -> Complex64 {
    alpha * 4.0 * PI.sqrt() / branch.sqrt_minus_i
}

/// Prefactor `κ = −4i√π/√(−i)` of the cross kernel.
pub fn cross_coefficient(branch: &BranchConvention) -> Complex64 {
    -4.0 * I * PI.sqrt() / branch.sqrt_minus_i
}

/// The bracket of the `C` integrand at `(σ, τ)`.
pub(crate) fn c_bracket(set: &TrajectorySet, j: usize, sigma: f64, tau: f64, threshold: f64) -> Result<Complex64> {
    let p = special::pair(set, j, j, sigma, tau, threshold)?;
    Ok(I * special::a_from_pair(&p) + special::db_dtau_from_pair(&p) + special::b_minus_one_over_2delta(&p))
}

fn inner_rule(n: usize) -> GaussLegendre {
    static DEFAULT: OnceLock<GaussLegendre> = OnceLock::new();
    if n == 32 {
        DEFAULT.get_or_init(|| GaussLegendre::new(32)).clone()
    } else {
        GaussLegendre::new(n)
    }
}

/// Evaluates `C_j` against a prepared rule; used by the solver to avoid
/// rebuilding nodes.
pub(crate) fn kernel_c_with_rule(
    set: &TrajectorySet,
    j: usize,
    t: f64,
    tau: f64,
    rule: &GaussLegendre,
    threshold: f64,
) -> Result<Complex64> {
    if !(t > tau) {
        return Err(Error::invalid(format!("kernel_C needs t > τ, got t = {t}, τ = {tau}")));
    }
    let curve = set.curve(j)?;
    if curve.is_static() {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let span = t - tau;
    let mut acc = Complex64::new(0.0, 0.0);
    for (theta, weight) in rule.mapped(0.0, FRAC_PI_2) {
        let s = theta.sin();
        let sigma = tau + span * s * s;
        if sigma <= tau {
            continue;
        }
        acc += c_bracket(set, j, sigma, tau, threshold)? * weight;
    }
    Ok(acc * (-2.0 / PI))
}

/// `C_j(t, τ)` for `t > τ`, by Gauss–Legendre in `θ` after
/// `σ = τ + (t−τ) sin²θ`.
pub fn kernel_c(set: &TrajectorySet, j: usize, t: f64, tau: f64, opts: &KernelOptions) -> Result<Complex64> {
    opts.validate()?;
    let rule = inner_rule(opts.inner_nodes);
    kernel_c_with_rule(set, j, t, tau, &rule, opts.diag_series_threshold)
}

/// The diagonal value `C_j(t, t) = −i|ẏ_j(t)|²/8`.
pub fn kernel_c_diagonal(set: &TrajectorySet, j: usize, t: f64) -> Result<Complex64> {
    let v = set.velocity(j, t)?;
    Ok(-I * v.norm_squared() / 8.0)
}

/// `D_jl(t, τ)` for `j ≠ l` and `t > τ`.
pub fn kernel_d(set: &TrajectorySet, j: usize, l: usize, t: f64, tau: f64, opts: &KernelOptions) -> Result<Complex64> {
    opts.validate()?;
    if j == l {
        return Err(Error::invalid("kernel_D couples distinct centers only"));
    }
    if !(t > tau) {
        return Err(Error::invalid(format!("kernel_D needs t > τ, got t = {t}, τ = {tau}")));
    }
    let yl = set.position(l, tau)?;
    let sj = set.state(j, tau)?;
    set.state(j, t)?;
    let r0 = (sj.position - yl).norm();
    if set.len() >= 2 && r0 < set.separation() {
        return Err(Error::SeparationViolation {
            first: j.min(l),
            second: j.max(l),
            time: tau,
            distance: r0,
            required: set.separation(),
        });
    }
    let span = t - tau;
    let curve = set.curve(j)?;
    let geom = |delta: f64| {
        let s = curve.state(tau + delta);
        let d = s.position - yl;
        let r = d.norm();
        (r, d.dot(&s.velocity) / r)
    };
    let mut vmax: f64 = 0.0;
    for k in 0..=8 {
        vmax = vmax.max(curve.state(tau + span * k as f64 / 8.0).velocity.norm());
    }
    let split = (0.25 * span).min(r0 / (8.0 * 1.25 * vmax + 1e-300));

    // near part: amplitude (T−δ)^{−1/2} on [0, split]
    let [near] = oscillatory(0.0, split, &geom, |delta| [(span - delta).powf(-0.5)], opts.filon_panels);

    // far part: δ = T − v², v ∈ [0, √(T − split)]
    let vmax_sub = (span - split).sqrt();
    // rounding in the phase r²/4δ sets a noise floor
    let phase_max = (r0 + vmax * span).powi(2) / (4.0 * split);
    let noise = 4.0 * f64::EPSILON * phase_max.max(1.0) * 2.0 * split.powf(-1.5) * vmax_sub;
    let far = adaptive_gk(
        |v| {
            let delta = span - v * v;
            let (r, _) = geom(delta);
            expi(r * r / (4.0 * delta)) * (2.0 * delta.powf(-1.5))
        },
        0.0,
        vmax_sub,
        1e-15 * span.powf(-0.5) + noise,
        1e-13,
        1 << 20,
    )
    .0;
    let prefactor = cross_coefficient(&opts.branch) / opts.branch.propagator_phase(1.0);
    Ok(prefactor * (near + far))
}

// ---------------------------------------------------------------------------
// oscillatory endpoint integrals

/// Fraction of the upper limit below which the analytic tail takes over.
const TAIL_FRACTION: f64 = 1e-6;

fn gauss10() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(10))
}

fn lobatto_fractions() -> [f64; 5] {
    let mut out = [0.0; 5];
    for (k, o) in out.iter_mut().enumerate() {
        *o = 0.5 * (1.0 - (PI * k as f64 / 4.0).cos());
    }
    out
}

/// `∫_lo^hi p_k(δ) δ^{−3/2} e^{i r(δ)²/(4δ)} dδ` for `K` real amplitudes at
/// once.
///
/// `geom(δ)` returns `(r, dr/dδ)` with `r > 0`; `amp(δ)` the amplitudes.
/// With `lo = 0` the range `[0, 10⁻⁶·hi]` is summed analytically from the
/// Fresnel tail, using the two-term behavior `G∞ + G₁/z²` of the amplitude
/// in `z = r/(2√δ)`. The rest is cut into panels geometric in `δ`
/// (`panels_per_octave` per octave of `z`); strongly oscillating panels get
/// a degree-4 Filon rule in `z`, mild ones plain Gauss–Legendre, and panels
/// where `z` is not monotone fall back to adaptive quadrature.
pub(crate) fn oscillatory<const K: usize, G, A>(
    lo: f64,
    hi: f64,
    geom: &G,
    amp: A,
    panels_per_octave: usize,
) -> [Complex64; K]
where
    G: Fn(f64) -> (f64, f64),
    A: Fn(f64) -> [f64; K],
{
    let mut out = [Complex64::new(0.0, 0.0); K];
    if !(hi > lo) {
        return out;
    }
    let mut start = lo;
    if lo == 0.0 {
        start = hi * TAIL_FRACTION;
        let (r, _) = geom(start);
        let z = r / (2.0 * start.sqrt());
        let (r0, _) = geom(0.0);
        let a0 = amp(0.0);
        let az = amp(start);
        let gz = jacobian(start, geom);
        let tail = fresnel_tail_unchecked(z);
        // ∫_Z^∞ z^{−2} e^{iz²} dz
        let inv2 = expi(z * z) / z + 2.0 * I * tail;
        for k in 0..K {
            let g_inf = 4.0 * a0[k] / r0;
            let g_z = az[k] * gz;
            out[k] += g_inf * tail + (g_z - g_inf) * z * z * inv2;
        }
    }
    let octaves = (hi / start).ln() / 4f64.ln();
    let n = ((panels_per_octave as f64 * octaves).ceil() as usize).max(1);
    let ratio = (hi / start).powf(1.0 / n as f64);
    let mut a = start;
    for i in 0..n {
        let b = if i + 1 == n { hi } else { a * ratio };
        let piece = panel(a, b, geom, &amp);
        for k in 0..K {
            out[k] += piece[k];
        }
        a = b;
    }
    out
}

/// `G/p = (4/r)/(1 − 2δr'/r)`, the factor turning `δ^{−3/2}dδ` into `dz`.
fn jacobian<G: Fn(f64) -> (f64, f64)>(delta: f64, geom: &G) -> f64 {
    let (r, dr) = geom(delta);
    4.0 / (r - 2.0 * delta * dr)
}

fn panel<const K: usize, G, A>(a: f64, b: f64, geom: &G, amp: &A) -> [Complex64; K]
where
    G: Fn(f64) -> (f64, f64),
    A: Fn(f64) -> [f64; K],
{
    let (ra, dra) = geom(a);
    let (rb, drb) = geom(b);
    let za = ra / (2.0 * a.sqrt());
    let zb = rb / (2.0 * b.sqrt());
    let phase_change = (za * za - zb * zb).abs();
    if phase_change <= 2.0 && b <= 2.0 * a {
        return smooth_panel(a, b, geom, amp);
    }
    let monotone_end = |delta: f64, r: f64, dr: f64| r - 2.0 * delta * dr > 0.25 * r;
    if monotone_end(a, ra, dra) && monotone_end(b, rb, drb) {
        if let Some(v) = filon_panel(a, b, geom, amp) {
            return v;
        }
    }
    fallback_panel(a, b, geom, amp)
}

fn integrand(delta: f64, r: f64) -> Complex64 {
    expi(r * r / (4.0 * delta)) * delta.powf(-1.5)
}

fn smooth_panel<const K: usize, G, A>(a: f64, b: f64, geom: &G, amp: &A) -> [Complex64; K]
where
    G: Fn(f64) -> (f64, f64),
    A: Fn(f64) -> [f64; K],
{
    let mut out = [Complex64::new(0.0, 0.0); K];
    for (x, w) in gauss10().mapped(a, b) {
        let (r, _) = geom(x);
        let base = integrand(x, r) * w;
        let p = amp(x);
        for k in 0..K {
            out[k] += base * p[k];
        }
    }
    out
}

fn fallback_panel<const K: usize, G, A>(a: f64, b: f64, geom: &G, amp: &A) -> [Complex64; K]
where
    G: Fn(f64) -> (f64, f64),
    A: Fn(f64) -> [f64; K],
{
    let mut out = [Complex64::new(0.0, 0.0); K];
    for (k, o) in out.iter_mut().enumerate() {
        *o = adaptive_gk(
            |x| {
                let (r, _) = geom(x);
                integrand(x, r) * amp(x)[k]
            },
            a,
            b,
            1e-16,
            1e-13,
            1 << 16,
        )
        .0;
    }
    out
}

/// Degree-4 Filon rule in `z` on one panel; `None` if the nodes are not
/// strictly ordered in `z`.
fn filon_panel<const K: usize, G, A>(a: f64, b: f64, geom: &G, amp: &A) -> Option<[Complex64; K]>
where
    G: Fn(f64) -> (f64, f64),
    A: Fn(f64) -> [f64; K],
{
    let frac = lobatto_fractions();
    let log_ratio = (b / a).ln();
    let mut z = [0.0; 5];
    let mut g = [[0.0; K]; 5];
    for i in 0..5 {
        let delta = if i == 0 {
            a
        } else if i == 4 {
            b
        } else {
            a * (frac[i] * log_ratio).exp()
        };
        let (r, dr) = geom(delta);
        let jac = r - 2.0 * delta * dr;
        if jac <= 0.25 * r {
            return None;
        }
        z[i] = r / (2.0 * delta.sqrt());
        let p = amp(delta);
        for k in 0..K {
            g[i][k] = p[k] * 4.0 / jac;
        }
    }
    if z.windows(2).any(|w| !(w[1] < w[0])) {
        return None;
    }
    let (z_hi, z_lo) = (z[0], z[4]);
    let c = 0.5 * (z_hi + z_lo);
    let h = 0.5 * (z_hi - z_lo);
    let vander = Matrix5::from_fn(|i, p| ((z[i] - c) / h).powi(p as i32));
    let lu = vander.lu();
    let m = moments(z_lo, z_hi, c, h);
    let mut out = [Complex64::new(0.0, 0.0); K];
    for k in 0..K {
        let rhs = Vector5::from_fn(|i, _| g[i][k]);
        let coef = lu.solve(&rhs)?;
        out[k] = (0..5).map(|p| m[p] * coef[p]).sum();
    }
    Some(out)
}

/// `m_p = ∫_{z_lo}^{z_hi} x^p e^{iz²} dz` with `x = (z − c)/h`, `p = 0..4`.
fn moments(z_lo: f64, z_hi: f64, c: f64, h: f64) -> [Complex64; 5] {
    let mut m = [Complex64::new(0.0, 0.0); 5];
    m[0] = if z_lo > 8.0 {
        fresnel_tail_unchecked(z_lo) - fresnel_tail_unchecked(z_hi)
    } else {
        fresnel_f_unchecked(z_hi) - fresnel_f_unchecked(z_lo)
    };
    let e_hi = expi(z_hi * z_hi);
    let e_lo = expi(z_lo * z_lo);
    for p in 0..4 {
        let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
        let boundary = (e_hi - sign * e_lo) / (2.0 * I);
        let lower = if p == 0 { Complex64::new(0.0, 0.0) } else { m[p - 1] * (p as f64) / (2.0 * I * h) };
        m[p + 1] = (boundary - lower - m[p] * c) / h;
    }
    m
}
