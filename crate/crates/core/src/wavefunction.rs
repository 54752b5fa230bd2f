//! Wavefunctions on a momentum grid, reconstructed from charges.
//!
//! Forward charges on `[s, t_max]` with datum `f` at `s` give, at a node `t`,
//!
//! ```text
//! ψ̃(k,t) = e^{−ik²(t−s)} f̃(k) + i(2π)^{−3/2} Σ_j ∫_s^t e^{−ik²(t−τ)} e^{−ik·y_j(τ)} q_j(τ) dτ
//! ```
//!
//! and backward charges with datum `g` at `t_max` give
//!
//! ```text
//! ψ̃(k,t) = e^{ik²(t_max−t)} g̃(k) − i(2π)^{−3/2} Σ_j ∫_t^{t_max} e^{ik²(τ−t)} e^{−ik·y_j(τ)} q̃_j(τ) dτ.
//! ```
//!
//! The τ-integrals interpolate `e^{−ik·y_j} q_j` linearly on each step and
//! integrate the `e^{ik²τ}` factor exactly.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::initial_data::InitialDatum;
use crate::trajectories::TrajectorySet;
use crate::volterra::{ChargeSolution, Direction};
use crate::Vec3;

const MAGIC: &[u8; 5] = b"MPIW1";

/// Tolerance of the grid adequacy check at the initial time.
pub const GATE_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Momentum,
    Position,
}

/// Cubic grid `k_i = −K + i·2K/M`, `i = 0..M`, per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KGrid {
    extent: f64,
    points: usize,
}

impl KGrid {
    pub fn new(extent: f64, points: usize) -> Result<Self> {
        if !(extent > 0.0 && extent.is_finite()) {
            return Err(Error::invalid(format!("grid extent must be positive, got {extent}")));
        }
        if points < 8 || points % 2 != 0 {
            return Err(Error::invalid(format!("points per axis must be even and at least 8, got {points}")));
        }
        Ok(Self { extent, points })
    }

    /// Extent at which every packet spectrum has dropped below `10⁻⁸`,
    /// widened by twice the largest packet momentum.
    pub fn for_datum(f: &InitialDatum, points: usize) -> Result<Self> {
        let mut reach: f64 = 0.0;
        let mut fastest: f64 = 0.0;
        for p in &f.packets {
            let s2 = p.width * p.width;
            let peak = p.weight.norm() * (2.0 * s2 / PI).powf(0.75);
            let radius = if peak > 1e-8 { ((peak / 1e-8).ln() / s2).sqrt() } else { 0.0 };
            let speed = p.momentum.norm();
            reach = reach.max(speed + radius);
            fastest = fastest.max(speed);
        }
        if reach == 0.0 {
            reach = 1.0;
        }
        Self::new(reach + 2.0 * fastest, points)
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.extent / self.points as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        -self.extent + self.spacing() * i as f64
    }

    /// Per-axis position nodes of the dual grid, spacing `π/K`.
    pub fn position_node(&self, i: usize) -> f64 {
        let dx = PI / self.extent;
        dx * (i as f64 - (self.points / 2) as f64)
    }

    pub fn len(&self) -> usize {
        self.points.pow(3)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `(i_x, i_y, i_z)` of a flat index; `k_x` varies fastest.
    pub fn unflatten(&self, idx: usize) -> (usize, usize, usize) {
        let m = self.points;
        (idx % m, (idx / m) % m, idx / (m * m))
    }

    pub fn k_vector(&self, idx: usize) -> Vec3 {
        let (a, b, c) = self.unflatten(idx);
        Vec3::new(self.node(a), self.node(b), self.node(c))
    }

    pub fn x_vector(&self, idx: usize) -> Vec3 {
        let (a, b, c) = self.unflatten(idx);
        Vec3::new(self.position_node(a), self.position_node(b), self.position_node(c))
    }

    fn cell(&self, domain: Domain) -> f64 {
        match domain {
            Domain::Momentum => self.spacing().powi(3),
            Domain::Position => (PI / self.extent).powi(3),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveField {
    pub grid: KGrid,
    pub domain: Domain,
    pub time: f64,
    pub samples: Vec<Complex64>,
    pub norm: f64,
    pub metadata: BTreeMap<String, String>,
}

impl WaveField {
    pub fn new(grid: KGrid, domain: Domain, time: f64, samples: Vec<Complex64>) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::invalid(format!("{} samples for a grid of {}", samples.len(), grid.len())));
        }
        let norm = (samples.iter().map(|z| z.norm_sqr()).sum::<f64>() * grid.cell(domain)).sqrt();
        Ok(Self { grid, domain, time, samples, norm, metadata: BTreeMap::new() })
    }

    /// Samples of `f̃` (or `f`) on the grid.
    pub fn from_datum(f: &InitialDatum, grid: KGrid, domain: Domain, time: f64) -> Result<Self> {
        let samples = (0..grid.len())
            .into_par_iter()
            .map(|idx| match domain {
                Domain::Momentum => f.fourier_transform(&grid.k_vector(idx)),
                Domain::Position => f.evaluate(&grid.x_vector(idx)),
            })
            .collect();
        Self::new(grid, domain, time, samples)
    }

    /// Whether the discrete norm matches `reference` to [`GATE_TOLERANCE`],
    /// relative.
    pub fn passes_gate(&self, reference: f64) -> bool {
        (self.norm - reference).abs() <= GATE_TOLERANCE * reference
    }

    /// `Σ conj(a)·b` times the cell volume.
    pub fn inner_product(&self, other: &WaveField) -> Result<Complex64> {
        if self.grid != other.grid || self.domain != other.domain || self.time != other.time {
            return Err(Error::GridMismatch);
        }
        let sum: Complex64 = self.samples.iter().zip(&other.samples).map(|(a, b)| a.conj() * b).sum();
        Ok(sum * self.grid.cell(self.domain))
    }

    /// `ψ(x) = (2π)^{−3/2} ∫ e^{ik·x} ψ̃(k) dk` on the dual grid.
    pub fn to_position_space(&self) -> Result<WaveField> {
        self.transform(Domain::Momentum, Domain::Position)
    }

    pub fn to_momentum_space(&self) -> Result<WaveField> {
        self.transform(Domain::Position, Domain::Momentum)
    }

    fn transform(&self, from: Domain, to: Domain) -> Result<WaveField> {
        if self.domain != from {
            return Err(Error::invalid(format!("field is already in {:?} space", self.domain)));
        }
        let m = self.grid.points;
        let inverse = to == Domain::Position;
        let sign = |i: usize| if i % 2 == 0 { 1.0 } else { -1.0 };
        // per axis, (−1)^{M/2}(−1)^{i+n}; both ends of the chain carry (−1)^i
        let global = sign(3 * m / 2) * (self.grid.cell(from) / (2.0 * PI).powi(3).sqrt());
        let mut data: Vec<Complex64> = self
            .samples
            .iter()
            .enumerate()
            .map(|(idx, z)| {
                let (a, b, c) = self.grid.unflatten(idx);
                z * sign(a + b + c)
            })
            .collect();
        fft3(&mut data, m, inverse);
        for (idx, z) in data.iter_mut().enumerate() {
            let (a, b, c) = self.grid.unflatten(idx);
            *z *= global * sign(a + b + c);
        }
        let mut out = WaveField::new(self.grid, to, self.time, data)?;
        out.metadata = self.metadata.clone();
        Ok(out)
    }

    /// `MPIW1`, `u32 M`, `f64 K`, `f64 time`, then `M³` pairs `(Re, Im)`,
    /// all little-endian, `k_x` fastest.
    pub fn write_binary<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&(self.grid.points as u32).to_le_bytes())?;
        out.write_all(&self.grid.extent.to_le_bytes())?;
        out.write_all(&self.time.to_le_bytes())?;
        let mut buf = Vec::with_capacity(16 * self.samples.len());
        for z in &self.samples {
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
        out.write_all(&buf)
    }

    pub fn read_binary<R: Read>(mut input: R, domain: Domain) -> Result<WaveField> {
        let mut magic = [0u8; 5];
        input.read_exact(&mut magic).map_err(io_format)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic bytes".into()));
        }
        let mut u = [0u8; 4];
        input.read_exact(&mut u).map_err(io_format)?;
        let mut f = [0u8; 8];
        input.read_exact(&mut f).map_err(io_format)?;
        let extent = f64::from_le_bytes(f);
        input.read_exact(&mut f).map_err(io_format)?;
        let time = f64::from_le_bytes(f);
        let grid = KGrid::new(extent, u32::from_le_bytes(u) as usize)?;
        let mut bytes = vec![0u8; 16 * grid.len()];
        input.read_exact(&mut bytes).map_err(io_format)?;
        let samples = bytes
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().unwrap());
                let im = f64::from_le_bytes(c[8..].try_into().unwrap());
                Complex64::new(re, im)
            })
            .collect();
        WaveField::new(grid, domain, time, samples)
    }
}

fn io_format(e: std::io::Error) -> Error {
    Error::Format(e.to_string())
}

fn fft3(data: &mut [Complex64], m: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft = if inverse { planner.plan_fft_inverse(m) } else { planner.plan_fft_forward(m) };
    // x lines are contiguous
    data.par_chunks_mut(m).for_each(|line| fft.process(line));
    let mut line = vec![Complex64::new(0.0, 0.0); m];
    for stride in [m, m * m] {
        for base in 0..m * m * m {
            if (base / stride) % m != 0 {
                continue;
            }
            for (i, v) in line.iter_mut().enumerate() {
                *v = data[base + i * stride];
            }
            fft.process(&mut line);
            for (i, v) in line.iter().enumerate() {
                data[base + i * stride] = *v;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// reconstruction

/// `(∫_0^1 e^{iθx}(1−x) dx, ∫_0^1 e^{iθx} x dx)`.
fn filon_linear(theta: f64) -> (Complex64, Complex64) {
    if theta.abs() < 0.5 {
        let mut a = Complex64::new(0.0, 0.0);
        let mut b = Complex64::new(0.0, 0.0);
        let mut term = Complex64::new(1.0, 0.0);
        for n in 0..20 {
            let nf = n as f64;
            a += term / ((nf + 1.0) * (nf + 2.0));
            b += term / (nf + 2.0);
            term *= Complex64::new(0.0, theta) / (nf + 1.0);
        }
        (a, b)
    } else {
        let e = Complex64::new(0.0, theta).exp();
        let i_theta = Complex64::new(0.0, theta);
        let b = e / i_theta + (e - 1.0) / (theta * theta);
        let whole = (e - 1.0) / i_theta;
        (whole - b, b)
    }
}

/// Time window, sign and free term of the representation at node `p`.
struct Window {
    first: usize,
    last: usize,
    sign: f64,
}

fn window(sol: &ChargeSolution, t: f64) -> Result<(usize, Window)> {
    let p = sol.grid.index_of(t)?;
    let w = match sol.direction {
        Direction::Forward => Window { first: 0, last: p, sign: 1.0 },
        Direction::Backward => Window { first: p, last: sol.grid.steps(), sign: -1.0 },
    };
    Ok((p, w))
}

fn free_term(f: &InitialDatum, sol: &ChargeSolution, k: &Vec3, t: f64) -> Complex64 {
    let omega = k.norm_squared();
    let elapsed = match sol.direction {
        Direction::Forward => t - sol.grid.start(),
        Direction::Backward => t - sol.grid.end(),
    };
    Complex64::new(0.0, -omega * elapsed).exp() * f.fourier_transform(k)
}

fn check_sizes(sol: &ChargeSolution, set: &TrajectorySet) -> Result<()> {
    if sol.q.len() != set.len() {
        return Err(Error::invalid("solution and trajectory set disagree on the number of centers"));
    }
    Ok(())
}

/// `ψ̃(k, t)` at a single momentum.
pub fn psi_fourier(f: &InitialDatum, sol: &ChargeSolution, set: &TrajectorySet, k: &Vec3, t: f64) -> Result<Complex64> {
    check_sizes(sol, set)?;
    let (_, w) = window(sol, t)?;
    let h = sol.grid.step();
    let omega = k.norm_squared();
    let (phi0, phi1) = filon_linear(omega * h);
    let mut total = Complex64::new(0.0, 0.0);
    for (j, qj) in sol.q.iter().enumerate() {
        let g = |m: usize| -> Result<Complex64> {
            let y = set.position(j, sol.grid.node(m))?;
            let shift = omega * (sol.grid.node(m) - t);
            Ok(Complex64::new(0.0, shift - k.dot(&y)).exp() * qj[m])
        };
        for m in w.first..w.last {
            total += g(m)? * phi0 + g(m + 1)? * phi1 * Complex64::new(0.0, -omega * h).exp();
        }
    }
    let pref = Complex64::new(0.0, w.sign * h) / (2.0 * PI).powf(1.5);
    Ok(free_term(f, sol, k, t) + pref * total)
}

/// `ψ̃(·, t)` on the whole grid.
pub fn reconstruct(f: &InitialDatum, sol: &ChargeSolution, set: &TrajectorySet, grid: KGrid, t: f64) -> Result<WaveField> {
    check_sizes(sol, set)?;
    let (_, w) = window(sol, t)?;
    let h = sol.grid.step();
    let m_axis = grid.points();
    let steps: Vec<usize> = (w.first..=w.last).collect();
    // per center and node: q and the three axis phase tables e^{−i k_a y_a}
    let tables: Vec<(Vec<Complex64>, Vec<[Vec<Complex64>; 3]>)> = sol
        .q
        .iter()
        .enumerate()
        .map(|(j, qj)| -> Result<_> {
            let mut phases = Vec::with_capacity(steps.len());
            for &m in &steps {
                let y = set.position(j, sol.grid.node(m))?;
                let axis = |a: usize| -> Vec<Complex64> {
                    (0..m_axis).map(|i| Complex64::new(0.0, -grid.node(i) * y[a]).exp()).collect()
                };
                phases.push([axis(0), axis(1), axis(2)]);
            }
            Ok((steps.iter().map(|&m| qj[m]).collect(), phases))
        })
        .collect::<Result<_>>()?;
    let pref = Complex64::new(0.0, w.sign * h) / (2.0 * PI).powf(1.5);
    let offset = sol.grid.node(w.first) - t;
    let samples: Vec<Complex64> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let k = grid.k_vector(idx);
            let (a, b, c) = grid.unflatten(idx);
            let omega = k.norm_squared();
            let (phi0, phi1) = filon_linear(omega * h);
            let step = Complex64::new(0.0, omega * h).exp();
            let back = step.conj();
            let mut total = Complex64::new(0.0, 0.0);
            for (q, phases) in &tables {
                let mut rot = Complex64::new(0.0, omega * offset).exp();
                let mut prev = Complex64::new(0.0, 0.0);
                for (i, (qm, ph)) in q.iter().zip(phases).enumerate() {
                    let g = rot * ph[0][a] * ph[1][b] * ph[2][c] * qm;
                    if i > 0 {
                        total += prev * phi0 + g * back * phi1;
                    }
                    prev = g;
                    rot *= step;
                }
            }
            free_term(f, sol, &k, t) + pref * total
        })
        .collect();
    let mut field = WaveField::new(grid, Domain::Momentum, t, samples)?;
    field.metadata.insert("direction".into(), format!("{:?}", sol.direction).to_lowercase());
    field.metadata.insert("steps".into(), sol.grid.steps().to_string());
    field.metadata.insert("centers".into(), sol.q.len().to_string());
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::initial_data::GaussianPacket;
    use crate::trajectories::Trajectory;
    use crate::volterra::{solve_forward, SolverOptions, TimeGrid};
    use crate::quadrature::adaptive_gk;

    fn packet() -> InitialDatum {
        InitialDatum::single(
            GaussianPacket::new(Vec3::new(0.3, -0.2, 0.1), 0.7, Vec3::new(0.5, 0.0, -0.4), Complex64::new(1.0, 0.0))
                .unwrap(),
        )
    }

    #[test]
    fn grid_rules() {
        assert!(KGrid::new(1.0, 7).is_err());
        assert!(KGrid::new(1.0, 6).is_err());
        assert!(KGrid::new(0.0, 8).is_err());
        let g = KGrid::new(2.0, 8).unwrap();
        assert_eq!(g.spacing(), 0.5);
        assert_eq!(g.node(0), -2.0);
        assert_eq!(g.unflatten(1 + 8 * 2 + 64 * 3), (1, 2, 3));
    }

    #[test]
    fn filon_weights_match_quadrature() {
        for &theta in &[0.0, 1e-3, 0.3, 0.49, 0.51, 2.0, 40.0] {
            let (a, b) = filon_linear(theta);
            let (qa, _) = adaptive_gk(|x| Complex64::new(0.0, theta * x).exp() * (1.0 - x), 0.0, 1.0, 1e-15, 1e-14, 200);
            let (qb, _) = adaptive_gk(|x| Complex64::new(0.0, theta * x).exp() * x, 0.0, 1.0, 1e-15, 1e-14, 200);
            assert!((a - qa).norm() < 1e-13 && (b - qb).norm() < 1e-13, "{theta}");
        }
    }

    #[test]
    fn sampled_datum_norm_and_round_trip() {
        let f = packet();
        let grid = KGrid::for_datum(&f, 32).unwrap();
        let field = WaveField::from_datum(&f, grid, Domain::Momentum, 0.0).unwrap();
        assert!(field.passes_gate(f.norm()), "{}", field.norm);
        let inner = field.inner_product(&field).unwrap();
        assert!((inner.re - field.norm * field.norm).abs() < 1e-12 && inner.im.abs() < 1e-14);

        let x = field.to_position_space().unwrap();
        assert!((x.norm - field.norm).abs() < 1e-12);
        let back = x.to_momentum_space().unwrap();
        let err = back.samples.iter().zip(&field.samples).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
        // position samples against the closed form
        for idx in [0, 1234, grid.len() / 2 + grid.points() / 2 + grid.points() * grid.points() / 2, 20000] {
            let exact = f.evaluate(&grid.x_vector(idx));
            assert!((x.samples[idx] - exact).norm() < 1e-6, "{idx}");
        }
    }

    #[test]
    fn binary_round_trip() {
        let f = packet();
        let grid = KGrid::new(4.0, 8).unwrap();
        let field = WaveField::from_datum(&f, grid, Domain::Momentum, 0.25).unwrap();
        let mut buf = Vec::new();
        field.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..5], b"MPIW1");
        assert_eq!(buf.len(), 5 + 4 + 8 + 8 + 16 * 512);
        let read = WaveField::read_binary(buf.as_slice(), Domain::Momentum).unwrap();
        assert_eq!(read.samples, field.samples);
        assert_eq!(read.time, 0.25);
        assert!(WaveField::read_binary(&b"MPIW2"[..], Domain::Momentum).is_err());
    }

    #[test]
    fn mismatched_inner_product() {
        let f = packet();
        let a = WaveField::from_datum(&f, KGrid::new(4.0, 8).unwrap(), Domain::Momentum, 0.0).unwrap();
        let b = WaveField::from_datum(&f, KGrid::new(5.0, 8).unwrap(), Domain::Momentum, 0.0).unwrap();
        assert!(matches!(a.inner_product(&b), Err(Error::GridMismatch)));
    }

    #[test]
    fn reconstruction_agrees_with_pointwise_evaluation() {
        let f = InitialDatum::single(GaussianPacket::at_rest(Vec3::new(4.0, 0.0, 0.0), 0.5).unwrap());
        let set = TrajectorySet::new(
            vec![Trajectory::circular(Vec3::zeros(), 1.0, 1.0, 0.0, Vec3::z()).unwrap()],
            1.0,
        )
        .unwrap();
        let grid = TimeGrid::new(0.0, 0.5, 40).unwrap();
        let opts = SolverOptions { residuals: false, ..Default::default() };
        let sol = solve_forward(&f, &set, &[1.0], &grid, &opts).unwrap();
        let kg = KGrid::new(6.0, 8).unwrap();
        let field = reconstruct(&f, &sol, &set, kg, 0.5).unwrap();
        for idx in [0, 77, 300, 511] {
            let direct = psi_fourier(&f, &sol, &set, &kg.k_vector(idx), 0.5).unwrap();
            assert!((direct - field.samples[idx]).norm() < 1e-12);
        }
        let start = reconstruct(&f, &sol, &set, kg, 0.0).unwrap();
        let exact = WaveField::from_datum(&f, kg, Domain::Momentum, 0.0).unwrap();
        assert_eq!(start.samples, exact.samples);
        assert!(matches!(reconstruct(&f, &sol, &set, kg, 0.3333), Err(Error::NotOnGrid(_))));
    }
}
