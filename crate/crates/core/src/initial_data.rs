//! Gaussian packet superpositions.
//!
//! A packet with center `x₀`, width `σ₀`, momentum `k₀` and complex weight
//! `c` is
//!
//! ```text
//! c · (2πσ₀²)^{−3/4} exp(−|x − x₀|²/(4σ₀²) + i k₀·x)
//! ```
//!
//! and has unit norm for `|c| = 1`. Free evolution under `i∂ψ/∂t = −Δψ`,
//! the Fourier transform `(2π)^{−3/2}∫e^{−ik·x}ψ(x)dx` and all overlaps are
//! closed-form.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::trajectories::TrajectorySet;
use crate::Vec3;

/// Clearance below which a datum is reported as touching a center.
pub const CLEARANCE_WARNING: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPacket {
    pub center: Vec3,
    pub width: f64,
    pub momentum: Vec3,
    pub weight: Complex64,
}

impl GaussianPacket {
    pub fn new(center: Vec3, width: f64, momentum: Vec3, weight: Complex64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::invalid(format!("packet width must be positive, got {width}")));
        }
        if !(center.iter().chain(momentum.iter()).all(|x| x.is_finite()) && weight.is_finite()) {
            return Err(Error::invalid("packet parameters must be finite"));
        }
        Ok(Self { center, width, momentum, weight })
    }

    /// Unit-weight packet at rest.
    pub fn at_rest(center: Vec3, width: f64) -> Result<Self> {
        Self::new(center, width, Vec3::zeros(), Complex64::new(1.0, 0.0))
    }

    fn peak(&self) -> f64 {
        (2.0 * PI * self.width * self.width).powf(-0.75)
    }

    pub fn evaluate(&self, x: &Vec3) -> Complex64 {
        let s2 = self.width * self.width;
        let d = x - self.center;
        let exponent = Complex64::new(-d.norm_squared() / (4.0 * s2), self.momentum.dot(x));
        self.weight * self.peak() * exponent.exp()
    }

    /// `(e^{iΔt} ψ)(x)`, valid for any real `t`.
    pub fn free_evolution(&self, t: f64, x: &Vec3) -> Complex64 {
        let s2 = self.width * self.width;
        let complex_width = Complex64::new(s2, t);
        let ratio = Complex64::new(self.width, 0.0) / complex_width.sqrt();
        let d = x - self.center - self.momentum * (2.0 * t);
        let exponent = Complex64::new(0.0, self.momentum.dot(x) - self.momentum.norm_squared() * t)
            - d.norm_squared() / (4.0 * complex_width);
        self.weight * self.peak() * ratio * ratio * ratio * exponent.exp()
    }

    pub fn fourier_transform(&self, k: &Vec3) -> Complex64 {
        let s2 = self.width * self.width;
        let dk = k - self.momentum;
        let exponent = Complex64::new(-s2 * dk.norm_squared(), -dk.dot(&self.center));
        self.weight * (2.0 * s2 / PI).powf(0.75) * exponent.exp()
    }

    /// `⟨self, other⟩ = ∫ conj(self)·other`.
    pub fn overlap(&self, other: &GaussianPacket) -> Complex64 {
        let (sa, sb) = (self.width * self.width, other.width * other.width);
        let a = sa + sb;
        let b = (self.momentum * (2.0 * sa) + other.momentum * (2.0 * sb)).map(|x| Complex64::new(x, 0.0))
            + (self.center - other.center).map(|x| Complex64::new(0.0, x));
        let c = Complex64::new(
            -sa * self.momentum.norm_squared() - sb * other.momentum.norm_squared(),
            -self.momentum.dot(&self.center) + other.momentum.dot(&other.center),
        );
        let bb: Complex64 = b.iter().map(|x| x * x).sum();
        let prefactor = (2.0 * sa / PI).powf(0.75) * (2.0 * sb / PI).powf(0.75) * (PI / a).powf(1.5);
        self.weight.conj() * other.weight * prefactor * (bb / (4.0 * a) + c).exp()
    }

    /// Packet whose value is the complex conjugate of this one.
    pub fn conjugated(&self) -> GaussianPacket {
        GaussianPacket { center: self.center, width: self.width, momentum: -self.momentum, weight: self.weight.conj() }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct InitialDatum {
    pub packets: Vec<GaussianPacket>,
}

/// Distance of the datum from the interaction centers, in packet widths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClearanceReport {
    /// `min over packets p and centers j of |x₀(p) − y_j(s)|/σ₀(p)`.
    pub clearance: f64,
    /// `(packet, center)` attaining the minimum.
    pub nearest: Option<(usize, usize)>,
    pub warning: bool,
}

impl InitialDatum {
    pub fn new(packets: Vec<GaussianPacket>) -> Self {
        Self { packets }
    }

    pub fn single(packet: GaussianPacket) -> Self {
        Self { packets: vec![packet] }
    }

    pub fn is_zero(&self) -> bool {
        self.packets.iter().all(|p| p.weight == Complex64::new(0.0, 0.0))
    }

    pub fn evaluate(&self, x: &Vec3) -> Complex64 {
        self.packets.iter().map(|p| p.evaluate(x)).sum()
    }

    pub fn free_evolution(&self, t: f64, x: &Vec3) -> Complex64 {
        if t == 0.0 {
            return self.evaluate(x);
        }
        self.packets.iter().map(|p| p.free_evolution(t, x)).sum()
    }

    pub fn fourier_transform(&self, k: &Vec3) -> Complex64 {
        self.packets.iter().map(|p| p.fourier_transform(k)).sum()
    }

    pub fn inner_product(&self, other: &InitialDatum) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for a in &self.packets {
            for b in &other.packets {
                acc += a.overlap(b);
            }
        }
        acc
    }

    /// `L²` norm from the pairwise overlaps.
    pub fn norm(&self) -> f64 {
        self.inner_product(self).re.max(0.0).sqrt()
    }

    pub fn scaled(&self, c: Complex64) -> InitialDatum {
        InitialDatum { packets: self.packets.iter().map(|p| GaussianPacket { weight: p.weight * c, ..*p }).collect() }
    }

    pub fn conjugated(&self) -> InitialDatum {
        InitialDatum { packets: self.packets.iter().map(GaussianPacket::conjugated).collect() }
    }

    /// `(U₀(τ − s) f)(y_j(τ))`.
    pub fn boundary_trace(&self, set: &TrajectorySet, j: usize, s: f64, tau: f64) -> Result<Complex64> {
        let y = set.position(j, tau)?;
        Ok(self.free_evolution(tau - s, &y))
    }

    pub fn support_clearance(&self, set: &TrajectorySet, s: f64) -> Result<ClearanceReport> {
        let mut report = ClearanceReport { clearance: f64::INFINITY, nearest: None, warning: false };
        for j in 0..set.len() {
            let y = set.position(j, s)?;
            for (p, packet) in self.packets.iter().enumerate() {
                let c = (packet.center - y).norm() / packet.width;
                if c < report.clearance {
                    report.clearance = c;
                    report.nearest = Some((p, j));
                }
            }
        }
        report.warning = report.clearance < CLEARANCE_WARNING;
        Ok(report)
    }
}

/// Packet value by spectral quadrature of the free flow, axis by axis.
#[cfg(test)]
fn free_packet_by_quadrature(p: &GaussianPacket, t: f64, x: &Vec3) -> Complex64 {
    // separable: the 3D free flow is the product of three 1D flows
    use crate::quadrature::adaptive_gk;
    let s2 = p.width * p.width;
    let mut out = p.weight * p.peak();
    for a in 0..3 {
        let (x0, k0, xa) = (p.center[a], p.momentum[a], x[a]);
        // (2π)^{-1/2} ∫ φ̃(k) e^{ikx − ik²t} dk with φ̃ the 1D transform
        let val = adaptive_gk(
            |k| {
                let dk = k - k0;
                let ft = Complex64::new(-s2 * dk * dk, -dk * x0).exp() * (2.0 * s2).sqrt();
                ft * Complex64::new(0.0, k * xa - k * k * t).exp()
            },
            k0 - 12.0 / p.width,
            k0 + 12.0 / p.width,
            1e-15,
            1e-14,
            5000,
        )
        .0;
        out *= val / (2.0 * PI).sqrt();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectories::Trajectory;
    use proptest::prelude::*;

    fn packet() -> GaussianPacket {
        GaussianPacket::new(Vec3::new(0.5, -1.0, 2.0), 0.7, Vec3::new(1.0, 0.3, -0.5), Complex64::new(0.6, 0.8)).unwrap()
    }

    #[test]
    fn evaluate_examples() {
        let p = GaussianPacket::at_rest(Vec3::new(1.0, 2.0, 3.0), 0.5).unwrap();
        let f = InitialDatum::single(p);
        let peak = (2.0 * PI * 0.25).powf(-0.75);
        assert!((f.evaluate(&p.center) - peak).norm() < 1e-14);
        let far = p.center + Vec3::new(10.0 * 0.5, 0.0, 0.0);
        assert!(f.evaluate(&far).norm() <= 1e-10 * peak);
        let cancel = InitialDatum::new(vec![packet(), GaussianPacket { weight: -packet().weight, ..packet() }]);
        assert_eq!(cancel.evaluate(&Vec3::new(0.3, 0.1, 0.0)), Complex64::new(0.0, 0.0));
        assert!(GaussianPacket::at_rest(Vec3::zeros(), 0.0).is_err());
    }

    #[test]
    fn norms_are_unit_and_overlaps_hermitian() {
        let p = packet();
        assert!((InitialDatum::single(p).norm() - 1.0).abs() < 1e-14);
        let q = GaussianPacket::new(Vec3::new(0.0, 0.2, 1.5), 1.1, Vec3::new(-0.4, 0.0, 0.2), Complex64::new(1.0, -0.3))
            .unwrap();
        assert!((p.overlap(&q) - q.overlap(&p).conj()).norm() < 1e-15);
    }

    #[test]
    fn free_flow_matches_spectral_quadrature() {
        let p = packet();
        for &t in &[0.0, 0.4, -1.3] {
            let x = Vec3::new(1.1, -0.2, 1.4);
            let closed = p.free_evolution(t, &x);
            let quad = free_packet_by_quadrature(&p, t, &x);
            assert!((closed - quad).norm() < 1e-12, "t = {t}: {closed} vs {quad}");
        }
    }

    #[test]
    fn packet_drifts_with_group_velocity() {
        let p = GaussianPacket::new(Vec3::zeros(), 0.6, Vec3::new(1.5, 0.0, 0.0), Complex64::new(1.0, 0.0)).unwrap();
        let t = 0.8;
        let expected = 2.0 * 1.5 * t;
        // the modulus along the x axis peaks at x₀ + 2k₀t
        let m = |x: f64| p.free_evolution(t, &Vec3::new(x, 0.0, 0.0)).norm();
        let h = 1e-3;
        assert!(m(expected) > m(expected + h) && m(expected) > m(expected - h));
    }

    #[test]
    fn clearance_reports() {
        let f = InitialDatum::single(GaussianPacket::at_rest(Vec3::new(5.0, 0.0, 0.0), 0.5).unwrap());
        let one = TrajectorySet::new(vec![Trajectory::fixed(Vec3::zeros())], 1.0).unwrap();
        let r = f.support_clearance(&one, 0.0).unwrap();
        assert!((r.clearance - 10.0).abs() < 1e-14 && !r.warning);
        let on = TrajectorySet::new(vec![Trajectory::fixed(Vec3::new(5.0, 0.0, 0.0))], 1.0).unwrap();
        let r = f.support_clearance(&on, 0.0).unwrap();
        assert!(r.clearance == 0.0 && r.warning);
        let two = TrajectorySet::new(
            vec![Trajectory::fixed(Vec3::zeros()), Trajectory::fixed(Vec3::new(4.0, 0.0, 0.0))],
            1.0,
        )
        .unwrap();
        let r = f.support_clearance(&two, 0.0).unwrap();
        assert!((r.clearance - 2.0).abs() < 1e-14);
        assert_eq!(r.nearest, Some((0, 1)));
    }

    proptest! {
        #[test]
        fn free_flow_is_time_reversal_symmetric(t in -3.0f64..3.0, x in -2.0f64..2.0, y in -2.0f64..2.0) {
            let p = packet();
            let at = Vec3::new(x, y, 0.3);
            let fwd = p.free_evolution(t, &at);
            let back = p.conjugated().free_evolution(-t, &at);
            prop_assert!((fwd - back.conj()).norm() < 1e-14);
        }

        #[test]
        fn free_flow_there_and_back(t in -2.0f64..2.0, x in -2.0f64..2.0) {
            // U₀(−t)U₀(t) through the spectral side, one axis at a time
            let p = packet();
            let at = Vec3::new(x, 0.4, 1.9);
            let there = free_packet_by_quadrature(&p, t, &at);
            let and_back = free_packet_by_quadrature(&p, 0.0, &at);
            prop_assert!((p.free_evolution(t, &at) - there).norm() < 1e-12);
            prop_assert!((and_back - p.evaluate(&at)).norm() < 1e-12);
        }

        #[test]
        fn fourier_shift_theorem(dx in -2.0f64..2.0, kx in -3.0f64..3.0) {
            let p = GaussianPacket::at_rest(Vec3::zeros(), 0.8).unwrap();
            let shifted = GaussianPacket { center: Vec3::new(dx, 0.0, 0.0), ..p };
            let k = Vec3::new(kx, 0.5, -0.2);
            let ratio = shifted.fourier_transform(&k) / p.fourier_transform(&k);
            prop_assert!((ratio - Complex64::new(0.0, -kx * dx).exp()).norm() < 1e-12);
            let v = p.fourier_transform(&k);
            prop_assert!(v.im.abs() < 1e-16 && v.re > 0.0);
        }
    }
}
