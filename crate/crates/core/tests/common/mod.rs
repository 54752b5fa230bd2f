//! Shared oracles and configurations for the integration tests.
//!
//! The quadrature here is deliberately separate from the library's own
//! rules so that it can serve as an independent reference.

#![allow(dead_code)]

use std::f64::consts::PI;

use movpi_core::volterra::{ChargeSolution, TimeGrid};
use movpi_core::wavefunction::reconstruct;
use movpi_core::*;

pub type C64 = Complex64;

const XK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn kronrod<F: Fn(f64) -> C64>(f: &F, a: f64, b: f64) -> (C64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut k = f(c) * WK[7];
    let mut g = f(c) * WG[3];
    for i in 0..7 {
        let pair = f(c - h * XK[i]) + f(c + h * XK[i]);
        k += pair * WK[i];
        if i % 2 == 1 {
            g += pair * WG[i / 2];
        }
    }
    (k * h, ((k - g) * h).norm())
}

fn refine<F: Fn(f64) -> C64>(f: &F, a: f64, b: f64, whole: C64, err: f64, tol: f64, depth: u32) -> C64 {
    let floor = 1e-15 * whole.norm();
    if err <= tol.max(floor) || depth == 0 || (b - a) < 1e-14 * (1.0 + a.abs()) {
        return whole;
    }
    let m = 0.5 * (a + b);
    let (l, el) = kronrod(f, a, m);
    let (r, er) = kronrod(f, m, b);
    if el + er >= err && err < 1e-12 * whole.norm() {
        // rounding noise
        return l + r;
    }
    refine(f, a, m, l, el, 0.5 * tol, depth - 1) + refine(f, m, b, r, er, 0.5 * tol, depth - 1)
}

/// Recursive bisection with a 7/15-point Gauss–Kronrod pair.
pub fn adaptive<F: Fn(f64) -> C64>(f: F, a: f64, b: f64, tol: f64) -> C64 {
    let (v, e) = kronrod(&f, a, b);
    refine(&f, a, b, v, e, tol, 40)
}

/// [`adaptive`] over `pieces` equal sub-intervals.
pub fn adaptive_split<F: Fn(f64) -> C64>(f: F, a: f64, b: f64, pieces: usize, tol: f64) -> C64 {
    let h = (b - a) / pieces as f64;
    (0..pieces).map(|i| adaptive(&f, a + h * i as f64, a + h * (i + 1) as f64, tol / pieces as f64)).sum()
}

pub fn expi(x: f64) -> C64 {
    C64::new(0.0, x).exp()
}

/// `∫_0^w e^{iz²} dz`: direct for moderate `w`, otherwise the limit minus
/// the tail integrated along the rotated path `z = w + iy`.
pub fn fresnel_oracle(w: f64) -> C64 {
    if w <= 4.0 {
        let pieces = (w * w).ceil().max(1.0) as usize;
        adaptive_split(|z| expi(z * z), 0.0, w, pieces, 1e-15)
    } else {
        let limit = expi(PI / 4.0) * (PI.sqrt() / 2.0);
        let reach = 40.0 / w;
        let tail = adaptive(|y| expi(-y * y) * (-2.0 * w * y).exp(), 0.0, reach, 1e-16);
        limit - C64::new(0.0, 1.0) * expi(w * w) * tail
    }
}

/// `∫_0^w g(z) e^{iz²} dz` over panels of width `1/256`. Panel centers
/// have exactly representable squares, so the large phase `e^{ic²}` is
/// exact and only the small local phase `2cu + u²` varies inside a panel.
pub fn chirp_integral<G: Fn(f64) -> C64>(g: G, w: f64) -> C64 {
    let width = 1.0 / 256.0;
    let full = (w / width).floor() as usize;
    let mut total = C64::new(0.0, 0.0);
    let mut panel = |a: f64, b: f64| {
        let c = 0.5 * (a + b);
        let local = adaptive(|u| g(c + u) * expi(u * (2.0 * c + u)), a - c, b - c, 1e-16 * (1.0 + g(c).norm()));
        total += expi(c * c) * local;
    };
    for i in 0..full {
        panel(i as f64 * width, (i + 1) as f64 * width);
    }
    if w > full as f64 * width {
        panel(full as f64 * width, w);
    }
    total
}

/// `∫_0^w z² e^{iz²} dz` by direct quadrature.
pub fn moment2_oracle(w: f64) -> C64 {
    chirp_integral(|z| C64::new(z * z, 0.0), w)
}

// ---------------------------------------------------------------------------
// configurations

/// Center on the unit circle in the `xy`-plane, angular velocity 1.
pub fn orbit_set() -> TrajectorySet {
    let c = Trajectory::circular(Vec3::zeros(), 1.0, 1.0, 0.0, Vec3::z()).unwrap();
    TrajectorySet::new(vec![c], 1.0).unwrap()
}

/// Six packets converging on the orbiting center from the coordinate
/// directions, phased to meet in step at the orbit point they aim for.
pub fn converging_datum() -> InitialDatum {
    let (width, distance, speed): (f64, f64, f64) = (0.25, 1.75, 6.0);
    let arrival = distance / (2.0 * speed);
    let target = Vec3::new(arrival.cos(), arrival.sin(), 0.0);
    let dirs = [Vec3::x(), -Vec3::x(), Vec3::y(), -Vec3::y(), Vec3::z(), -Vec3::z()];
    InitialDatum::new(
        dirs.iter()
            .map(|e| {
                let phase = speed * e.dot(&target);
                GaussianPacket::new(target + e * distance, width, -e * speed, C64::from_polar(1.0, phase)).unwrap()
            })
            .collect(),
    )
}

/// A broad probe near the orbit, used as final datum.
pub fn probe_datum() -> InitialDatum {
    InitialDatum::single(GaussianPacket::new(Vec3::new(0.5, 0.5, 0.0), 0.5, Vec3::new(0.5, 0.0, 0.0), C64::new(1.0, 0.0)).unwrap())
}

pub const ORBIT_STEPS: usize = 400;
pub const ORBIT_EXTENT: f64 = 22.0;
pub const ORBIT_POINTS: usize = 48;

pub fn orbit_grid() -> TimeGrid {
    TimeGrid::new(0.0, 1.0, ORBIT_STEPS).unwrap()
}

pub fn orbit_kgrid() -> KGrid {
    KGrid::new(ORBIT_EXTENT, ORBIT_POINTS).unwrap()
}

/// `(relative gate error at s, max relative norm drift)` sampled every
/// `stride` nodes.
pub fn norm_drift(f: &InitialDatum, sol: &ChargeSolution, set: &TrajectorySet, grid: KGrid, stride: usize) -> (f64, f64) {
    let reference = f.norm();
    let start = reconstruct(f, sol, set, grid, sol.grid.start()).unwrap();
    let gate = (start.norm - reference).abs() / reference;
    let mut drift: f64 = 0.0;
    for k in (0..=sol.grid.steps()).step_by(stride) {
        let field = reconstruct(f, sol, set, grid, sol.grid.node(k)).unwrap();
        drift = drift.max((field.norm - start.norm).abs() / start.norm);
    }
    (gate, drift)
}

/// Observed orders `log2(e_i / e_{i+1})`.
pub fn orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}
