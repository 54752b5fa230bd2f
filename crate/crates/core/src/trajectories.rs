//! Interaction-center curves.
//!
//! Every curve is given analytically so that velocities, accelerations and
//! jerks never come from numerical differentiation. A [`TrajectorySet`]
//! carries the declared minimum pairwise separation; [`TrajectorySet::validate`]
//! checks it on a uniform sample of the run interval.

use crate::error::{Error, Result};
use crate::Vec3;

/// Position and its first three time derivatives at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State {
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
    pub jerk: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Trajectory {
    Static {
        position: Vec3,
    },
    /// `y(t) = origin + velocity·t`
    Uniform {
        origin: Vec3,
        velocity: Vec3,
    },
    /// `y(t) = center + radius·(cos(ωt+φ)·e₁ + sin(ωt+φ)·e₂)`
    Circular {
        center: Vec3,
        radius: f64,
        omega: f64,
        phase: f64,
        axis1: Vec3,
        axis2: Vec3,
    },
    /// `y(t) = Σ_k c_k t^k`
    Polynomial {
        coefficients: Vec<Vec3>,
    },
    Spline(ClampedSpline),
}

impl Trajectory {
    pub fn fixed(position: Vec3) -> Self {
        Trajectory::Static { position }
    }

    pub fn uniform(origin: Vec3, velocity: Vec3) -> Self {
        Trajectory::Uniform { origin, velocity }
    }

    /// Circular orbit in the plane orthogonal to `normal`. For `normal = ẑ` the
    /// orbit starts (at `t = 0`, `phase = 0`) on the positive x axis and turns
    /// toward positive y.
    pub fn circular(center: Vec3, radius: f64, omega: f64, phase: f64, normal: Vec3) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid(format!("circular radius must be positive, got {radius}")));
        }
        if !omega.is_finite() || !phase.is_finite() {
            return Err(Error::invalid("circular omega and phase must be finite"));
        }
        let n = normal
            .try_normalize(1e-12)
            .ok_or_else(|| Error::invalid("circular orbit normal must be nonzero"))?;
        let x = Vec3::x();
        let seed = if n.dot(&x).abs() > 0.9 { Vec3::y() } else { x };
        let axis1 = (seed - n * n.dot(&seed)).normalize();
        let axis2 = n.cross(&axis1);
        Ok(Trajectory::Circular { center, radius, omega, phase, axis1, axis2 })
    }

    pub fn polynomial(coefficients: Vec<Vec3>) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::invalid("polynomial trajectory needs at least one coefficient"));
        }
        Ok(Trajectory::Polynomial { coefficients })
    }

    pub fn spline(times: Vec<f64>, points: Vec<Vec3>, start_velocity: Vec3, end_velocity: Vec3) -> Result<Self> {
        ClampedSpline::new(times, points, start_velocity, end_velocity).map(Trajectory::Spline)
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Trajectory::Static { .. } => "static",
            Trajectory::Uniform { .. } => "uniform",
            Trajectory::Circular { .. } => "circular",
            Trajectory::Polynomial { .. } => "polynomial",
            Trajectory::Spline(_) => "spline",
        }
    }

    /// Time range on which the curve is defined; `None` means all of R.
    pub fn support(&self) -> Option<(f64, f64)> {
        match self {
            Trajectory::Spline(s) => Some((s.times[0], *s.times.last().unwrap())),
            _ => None,
        }
    }

    /// Whether the parametrization has three continuous derivatives.
    pub fn is_c3(&self) -> bool {
        !matches!(self, Trajectory::Spline(_))
    }

    pub fn is_static(&self) -> bool {
        match self {
            Trajectory::Static { .. } => true,
            Trajectory::Uniform { velocity, .. } => velocity.norm() == 0.0,
            _ => false,
        }
    }

    /// True when `|y(σ) − y(τ)|` and `(y(σ) − y(τ))·ẏ(τ)` depend on `σ − τ` only,
    /// which makes the self-interaction kernel a function of the lag.
    pub fn is_lag_invariant(&self) -> bool {
        matches!(
            self,
            Trajectory::Static { .. } | Trajectory::Uniform { .. } | Trajectory::Circular { .. }
        )
    }

    /// Full kinematic state at `t`. Splines are extended beyond their support
    /// by their end cubics; callers that need the support check use
    /// [`Trajectory::checked_state`].
    pub fn state(&self, t: f64) -> State {
        match self {
            Trajectory::Static { position } => State {
                position: *position,
                velocity: Vec3::zeros(),
                acceleration: Vec3::zeros(),
                jerk: Vec3::zeros(),
            },
            Trajectory::Uniform { origin, velocity } => State {
                position: origin + velocity * t,
                velocity: *velocity,
                acceleration: Vec3::zeros(),
                jerk: Vec3::zeros(),
            },
            Trajectory::Circular { center, radius, omega, phase, axis1, axis2 } => {
                let (s, c) = (omega * t + phase).sin_cos();
                let radial = axis1 * c + axis2 * s;
                let tangent = axis2 * c - axis1 * s;
                let w = *omega;
                State {
                    position: center + radial * *radius,
                    velocity: tangent * (radius * w),
                    acceleration: -radial * (radius * w * w),
                    jerk: -tangent * (radius * w * w * w),
                }
            }
            Trajectory::Polynomial { coefficients } => {
                let mut d = [Vec3::zeros(); 4];
                // Horner on value and derivatives
                for c in coefficients.iter().rev() {
                    d[3] = d[3] * t + d[2] * 3.0;
                    d[2] = d[2] * t + d[1] * 2.0;
                    d[1] = d[1] * t + d[0];
                    d[0] = d[0] * t + c;
                }
                State { position: d[0], velocity: d[1], acceleration: d[2], jerk: d[3] }
            }
            Trajectory::Spline(s) => s.state(t),
        }
    }

    pub fn checked_state(&self, t: f64) -> Result<State> {
        if !t.is_finite() {
            return Err(Error::invalid(format!("non-finite time {t}")));
        }
        if let Some((a, b)) = self.support() {
            let slack = 1e-12 * (1.0 + a.abs().max(b.abs()));
            if t < a - slack || t > b + slack {
                return Err(Error::OutsideSupport { time: t, start: a, end: b });
            }
        }
        Ok(self.state(t))
    }

    /// The curve traversed backwards in time, `t ↦ y(−t)`.
    pub fn reversed(&self) -> Trajectory {
        match self {
            Trajectory::Static { .. } => self.clone(),
            Trajectory::Uniform { origin, velocity } => Trajectory::Uniform { origin: *origin, velocity: -velocity },
            Trajectory::Circular { center, radius, omega, phase, axis1, axis2 } => Trajectory::Circular {
                center: *center,
                radius: *radius,
                omega: -omega,
                phase: *phase,
                axis1: *axis1,
                axis2: *axis2,
            },
            Trajectory::Polynomial { coefficients } => Trajectory::Polynomial {
                coefficients: coefficients
                    .iter()
                    .enumerate()
                    .map(|(k, c)| if k % 2 == 1 { -c } else { *c })
                    .collect(),
            },
            Trajectory::Spline(s) => Trajectory::Spline(s.reversed()),
        }
    }
}

/// Cubic spline through samples, with prescribed end velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct ClampedSpline {
    times: Vec<f64>,
    points: Vec<Vec3>,
    /// second derivatives at the knots
    moments: Vec<Vec3>,
    start_velocity: Vec3,
    end_velocity: Vec3,
}

impl ClampedSpline {
    pub fn new(times: Vec<f64>, points: Vec<Vec3>, start_velocity: Vec3, end_velocity: Vec3) -> Result<Self> {
        let n = times.len();
        if n < 2 || points.len() != n {
            return Err(Error::invalid("spline needs at least two samples and one point per time"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("spline sample times must be finite and strictly increasing"));
        }
        // Tridiagonal system for the knot moments with clamped ends.
        let h: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        let mut lower = vec![0.0; n];
        let mut rhs = vec![Vec3::zeros(); n];
        diag[0] = h[0] / 3.0;
        upper[0] = h[0] / 6.0;
        rhs[0] = (points[1] - points[0]) / h[0] - start_velocity;
        for i in 1..n - 1 {
            lower[i] = h[i - 1] / 6.0;
            diag[i] = (h[i - 1] + h[i]) / 3.0;
            upper[i] = h[i] / 6.0;
            rhs[i] = (points[i + 1] - points[i]) / h[i] - (points[i] - points[i - 1]) / h[i - 1];
        }
        lower[n - 1] = h[n - 2] / 6.0;
        diag[n - 1] = h[n - 2] / 3.0;
        rhs[n - 1] = end_velocity - (points[n - 1] - points[n - 2]) / h[n - 2];
        // Thomas algorithm
        for i in 1..n {
            let m = lower[i] / diag[i - 1];
            diag[i] -= m * upper[i - 1];
            let prev = rhs[i - 1];
            rhs[i] -= prev * m;
        }
        let mut moments = vec![Vec3::zeros(); n];
        moments[n - 1] = rhs[n - 1] / diag[n - 1];
        for i in (0..n - 1).rev() {
            moments[i] = (rhs[i] - moments[i + 1] * upper[i]) / diag[i];
        }
        Ok(Self { times, points, moments, start_velocity, end_velocity })
    }

    fn state(&self, t: f64) -> State {
        let n = self.times.len();
        let i = match self.times.partition_point(|&x| x <= t) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        };
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let h = t1 - t0;
        let (m0, m1) = (self.moments[i], self.moments[i + 1]);
        let (p0, p1) = (self.points[i], self.points[i + 1]);
        let a = t1 - t;
        let b = t - t0;
        let c0 = p0 / h - m0 * (h / 6.0);
        let c1 = p1 / h - m1 * (h / 6.0);
        State {
            position: m0 * (a * a * a / (6.0 * h)) + m1 * (b * b * b / (6.0 * h)) + c0 * a + c1 * b,
            velocity: -m0 * (a * a / (2.0 * h)) + m1 * (b * b / (2.0 * h)) - c0 + c1,
            acceleration: m0 * (a / h) + m1 * (b / h),
            jerk: (m1 - m0) / h,
        }
    }

    fn reversed(&self) -> ClampedSpline {
        let times: Vec<f64> = self.times.iter().rev().map(|t| -t).collect();
        let points: Vec<Vec3> = self.points.iter().rev().copied().collect();
        ClampedSpline::new(times, points, -self.end_velocity, -self.start_velocity)
            .expect("reversal of a valid spline is valid")
    }
}

/// Result of sampling a [`TrajectorySet`] over a run interval.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparationCertificate {
    /// Smallest sampled pairwise distance (`+∞` with fewer than two centers).
    pub min_separation: f64,
    /// Pair and time attaining `min_separation`.
    pub closest_pair: Option<(usize, usize, f64)>,
    pub max_speed: f64,
    pub max_acceleration: f64,
    /// Upper bound on how far the true minimum can sit below the sampled one.
    pub lipschitz_slack: f64,
    /// Set when some curve is only C² (splines).
    pub below_c3: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    curves: Vec<Trajectory>,
    separation: f64,
}

impl TrajectorySet {
    pub fn new(curves: Vec<Trajectory>, separation: f64) -> Result<Self> {
        if curves.len() >= 2 && !(separation > 0.0 && separation.is_finite()) {
            return Err(Error::invalid(format!("separation must be positive, got {separation}")));
        }
        Ok(Self { curves, separation })
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    pub fn separation(&self) -> f64 {
        self.separation
    }

    pub fn curves(&self) -> &[Trajectory] {
        &self.curves
    }

    pub fn curve(&self, j: usize) -> Result<&Trajectory> {
        self.curves.get(j).ok_or(Error::IndexOutOfRange { index: j, len: self.curves.len() })
    }

    pub fn position(&self, j: usize, t: f64) -> Result<Vec3> {
        Ok(self.curve(j)?.checked_state(t)?.position)
    }

    pub fn velocity(&self, j: usize, t: f64) -> Result<Vec3> {
        Ok(self.curve(j)?.checked_state(t)?.velocity)
    }

    pub fn acceleration(&self, j: usize, t: f64) -> Result<Vec3> {
        Ok(self.curve(j)?.checked_state(t)?.acceleration)
    }

    pub fn state(&self, j: usize, t: f64) -> Result<State> {
        self.curve(j)?.checked_state(t)
    }

    pub fn time_reversed(&self) -> TrajectorySet {
        TrajectorySet {
            curves: self.curves.iter().map(Trajectory::reversed).collect(),
            separation: self.separation,
        }
    }

    /// Samples `[start, end]` at `n_samples` uniform points and certifies the
    /// declared separation.
    pub fn validate(&self, start: f64, end: f64, n_samples: usize) -> Result<SeparationCertificate> {
        if n_samples < 2 {
            return Err(Error::invalid("validation needs at least two samples"));
        }
        if !(end >= start) || !start.is_finite() || !end.is_finite() {
            return Err(Error::invalid(format!("bad validation interval [{start}, {end}]")));
        }
        for c in &self.curves {
            if let Some((a, b)) = c.support() {
                let slack = 1e-12 * (1.0 + a.abs().max(b.abs()));
                if start < a - slack {
                    return Err(Error::OutsideSupport { time: start, start: a, end: b });
                }
                if end > b + slack {
                    return Err(Error::OutsideSupport { time: end, start: a, end: b });
                }
            }
        }
        let step = (end - start) / (n_samples - 1) as f64;
        let mut cert = SeparationCertificate {
            min_separation: f64::INFINITY,
            closest_pair: None,
            max_speed: 0.0,
            max_acceleration: 0.0,
            lipschitz_slack: 0.0,
            below_c3: self.curves.iter().any(|c| !c.is_c3()),
        };
        for i in 0..n_samples {
            let t = start + step * i as f64;
            let states: Vec<State> = self.curves.iter().map(|c| c.state(t)).collect();
            for (j, sj) in states.iter().enumerate() {
                if !(sj.position.iter().chain(sj.velocity.iter()).chain(sj.acceleration.iter()).chain(sj.jerk.iter()))
                    .all(|x| x.is_finite())
                {
                    return Err(Error::invalid(format!("center {j} has non-finite kinematics at t = {t}")));
                }
                cert.max_speed = cert.max_speed.max(sj.velocity.norm());
                cert.max_acceleration = cert.max_acceleration.max(sj.acceleration.norm());
                for (l, sl) in states.iter().enumerate().skip(j + 1) {
                    let d = (sj.position - sl.position).norm();
                    if d < cert.min_separation {
                        cert.min_separation = d;
                        cert.closest_pair = Some((j, l, t));
                    }
                }
            }
        }
        cert.lipschitz_slack = cert.max_speed * step;
        if self.curves.len() >= 2 && cert.min_separation < self.separation {
            let (first, second, time) = cert.closest_pair.expect("pair exists for n >= 2");
            return Err(Error::SeparationViolation {
                first,
                second,
                time,
                distance: cert.min_separation,
                required: self.separation,
            });
        }
        Ok(cert)
    }
}
