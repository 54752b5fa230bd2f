//! The charge equations and their discretization.
//!
//! Forward charges solve, for `t > s`,
//!
//! ```text
//! q_j(t) + α_j c₀ ∫_s^t q_j(τ)/√(t−τ) dτ + ∫_s^t q_j C_j(t,τ) dτ + Σ_{l≠j} ∫_s^t q_l D_jl(t,τ) dτ = h_j(t)
//! h_j(t) = c₀ ∫_s^t (U₀(τ−s)f)(y_j(τ)) / √(t−τ) dτ,        c₀ = 4√π/√(−i)
//! ```
//!
//! All `(t−τ)^{−1/2}` convolutions use the product trapezoidal rule: the
//! smooth factor is interpolated linearly and the weight is integrated
//! exactly. The cross term is evaluated in the reordered form
//! `κ ∫ (t−σ)^{−1/2} V_jl(σ) dσ` with the field
//! `V_jl(σ) = ∫_s^σ U₀(σ−τ; y_j(σ) − y_l(τ)) q_l(τ) dτ`, whose oscillatory
//! endpoint is integrated by the Filon rules of the kernel module.
//!
//! Backward charges are obtained by time reversal: with `y^R(t) = y(−t)`
//! and datum `conj(g)`, the forward charges `q^R` on `[−t_max, −s]` give
//! `q̃(τ) = conj(q^R(−τ))`.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::initial_data::InitialDatum;
use crate::kernels::{self, cross_coefficient, KernelOptions};
use crate::quadrature::GaussLegendre;
use crate::special::{self, BranchConvention};
use crate::trajectories::TrajectorySet;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Uniform grid `t_k = s + k·h`, `k = 0..=N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    start: f64,
    end: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(start: f64, end: f64, steps: usize) -> Result<Self> {
        if steps < 2 {
            return Err(Error::invalid(format!("a time grid needs at least 2 steps, got {steps}")));
        }
        if !(start.is_finite() && end.is_finite() && end > start) {
            return Err(Error::invalid(format!("time grid needs finite s < t_max, got [{start}, {end}]")));
        }
        Ok(Self { start, end, steps })
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of nodes, `N + 1`.
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        (self.end - self.start) / self.steps as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        if k == self.steps {
            self.end
        } else {
            self.start + self.step() * k as f64
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.node(k)).collect()
    }

    /// Index of the node at `t`, to within `10⁻⁹·h`.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let x = (t - self.start) / self.step();
        let k = x.round();
        if k < 0.0 || k > self.steps as f64 || (x - k).abs() > 1e-9 {
            return Err(Error::NotOnGrid(t));
        }
        Ok(k as usize)
    }

    /// The first `steps` steps of this grid.
    pub fn truncated(&self, steps: usize) -> Result<TimeGrid> {
        if steps > self.steps {
            return Err(Error::invalid("truncation cannot extend a grid"));
        }
        TimeGrid::new(self.start, self.node(steps), steps)
    }

    /// The mirror grid on `[−t_max, −s]`.
    pub fn reversed(&self) -> TimeGrid {
        TimeGrid { start: -self.end, end: -self.start, steps: self.steps }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

pub const MAX_DATUM_SUBSTEPS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub kernel: KernelOptions,
    /// Target panel length of the datum quadrature. Each step is split
    /// into `⌈h/δ⌉` panels, at most [`MAX_DATUM_SUBSTEPS`]; grids whose step
    /// is a multiple of `δ` share one datum.
    pub datum_fine_step: f64,
    /// Compute both residuals after the solve.
    pub residuals: bool,
    /// Upper bound on staggered residual points when kernels have to be
    /// evaluated off the grid.
    pub residual_points: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { kernel: KernelOptions::default(), datum_fine_step: 1.0 / 64_000.0, residuals: true, residual_points: 64 }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if !(self.datum_fine_step > 0.0 && self.datum_fine_step.is_finite()) {
            return Err(Error::invalid("datum_fine_step must be positive"));
        }
        if self.residual_points == 0 {
            return Err(Error::invalid("residual_points must be positive"));
        }
        Ok(())
    }

    pub fn branch(&self) -> &BranchConvention {
        &self.kernel.branch
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChargeSolution {
    pub grid: TimeGrid,
    /// `q[j][k]` is the charge of center `j` at node `k`.
    pub q: Vec<Vec<Complex64>>,
    pub alphas: Vec<f64>,
    pub direction: Direction,
    /// Staggered plug-back defect of the charge equation (max norm).
    pub residual_16: Option<f64>,
    /// Defect of the integro-differential form at interior nodes (max norm).
    pub residual_33: Option<f64>,
    pub options: SolverOptions,
}

impl ChargeSolution {
    pub fn centers(&self) -> usize {
        self.q.len()
    }

    pub fn charge(&self, j: usize) -> Result<&[Complex64]> {
        self.q.get(j).map(|v| v.as_slice()).ok_or(Error::IndexOutOfRange { index: j, len: self.q.len() })
    }

    /// `max_{j,k} |q_j(t_k)|`.
    pub fn max_modulus(&self) -> f64 {
        self.q.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// CSV with columns `t, Re q_1, Im q_1, …`; values use the shortest
    /// representation that round-trips.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "t")?;
        for j in 1..=self.q.len() {
            write!(out, ",re_q{j},im_q{j}")?;
        }
        writeln!(out)?;
        for k in 0..self.grid.len() {
            write!(out, "{:?}", self.grid.node(k))?;
            for qj in &self.q {
                write!(out, ",{:?},{:?}", qj[k].re, qj[k].im)?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// The same charges seen as a forward solution of the time-reversed
    /// problem.
    fn mirrored(&self) -> Vec<Vec<Complex64>> {
        self.q.iter().map(|qj| qj.iter().rev().map(|z| z.conj()).collect()).collect()
    }
}

// ---------------------------------------------------------------------------
// product trapezoidal weights

/// Weights of `∫_{a}^{b} (T−τ)^{−1/2} φ(τ) dτ` for the two hats of a
/// panel, in terms of `u_a = T − a > u_b = T − b ≥ 0`. Returns
/// `(weight of the node at a, weight of the node at b)`.
pub(crate) fn panel_weights(ua: f64, ub: f64) -> (f64, f64) {
    let delta = ua - ub;
    let s = ua.sqrt() + ub.sqrt();
    let early = 2.0 * delta / (3.0 * s) * (1.0 + ub.sqrt() / s);
    (early, 2.0 * delta / s - early)
}

/// Lag tables of the product trapezoidal rule on a uniform grid.
#[derive(Debug, Clone)]
pub(crate) struct AbelWeights {
    early: Vec<f64>,
    late: Vec<f64>,
}

impl AbelWeights {
    pub(crate) fn new(steps: usize, h: f64) -> Self {
        let scale = h.sqrt();
        let mut early = vec![0.0; steps + 2];
        let mut late = vec![0.0; steps + 2];
        for lag in 1..=steps + 1 {
            let (e, l) = panel_weights(lag as f64, (lag - 1) as f64);
            early[lag] = e * scale;
            late[lag] = l * scale;
        }
        Self { early, late }
    }

    /// Weight of node `k` when evaluating at node `m`.
    #[inline]
    pub(crate) fn weight(&self, m: usize, k: usize) -> f64 {
        debug_assert!(k <= m);
        if m == 0 {
            0.0
        } else if k == m {
            self.late[1]
        } else if k == 0 {
            self.early[m]
        } else {
            self.early[m - k] + self.late[m - k + 1]
        }
    }

    /// `Σ_{k=0}^{m} w(m,k) values[k]`.
    pub(crate) fn apply(&self, m: usize, values: &[Complex64]) -> Complex64 {
        let mut acc = ZERO;
        for (k, v) in values.iter().enumerate().take(m + 1) {
            acc += *v * self.weight(m, k);
        }
        acc
    }
}

/// `(Lη)(t_m) = (1/√(−iπ)) ∫_s^{t_m} η(τ)/√(t_m−τ) dτ` at every node.
pub fn abel_apply(eta: &[Complex64], grid: &TimeGrid) -> Result<Vec<Complex64>> {
    abel_apply_with(eta, grid, &BranchConvention::standard())
}

pub fn abel_apply_with(eta: &[Complex64], grid: &TimeGrid, branch: &BranchConvention) -> Result<Vec<Complex64>> {
    if eta.len() != grid.len() {
        return Err(Error::invalid(format!("series has {} values for {} grid nodes", eta.len(), grid.len())));
    }
    let weights = AbelWeights::new(grid.steps(), grid.step());
    let norm = 1.0 / (branch.sqrt_minus_i * PI.sqrt());
    Ok((0..grid.len()).map(|m| weights.apply(m, eta) * norm).collect())
}

/// Max-norm defect of `d/dt (L²η) = iη` at interior nodes, with the time
/// derivative taken by central differences.
pub fn abel_identity_check(eta: &[Complex64], grid: &TimeGrid) -> Result<f64> {
    let once = abel_apply(eta, grid)?;
    let twice = abel_apply(&once, grid)?;
    let h = grid.step();
    let i = Complex64::new(0.0, 1.0);
    Ok((1..grid.steps())
        .map(|m| ((twice[m + 1] - twice[m - 1]) / (2.0 * h) - i * eta[m]).norm())
        .fold(0.0, f64::max))
}

/// Max-norm defect of `d/dt (Lη) = L η̇` at interior nodes, for `η(s) = 0`.
pub fn abel_derivative_check(eta: &[Complex64], eta_dot: &[Complex64], grid: &TimeGrid) -> Result<f64> {
    let l_eta = abel_apply(eta, grid)?;
    let l_dot = abel_apply(eta_dot, grid)?;
    let h = grid.step();
    Ok((1..grid.steps())
        .map(|m| ((l_eta[m + 1] - l_eta[m - 1]) / (2.0 * h) - l_dot[m]).norm())
        .fold(0.0, f64::max))
}

// ---------------------------------------------------------------------------
// datum

/// `h_j` at the grid nodes, using the default refinement and branch.
pub fn assemble_datum(f: &InitialDatum, set: &TrajectorySet, grid: &TimeGrid, j: usize) -> Result<Vec<Complex64>> {
    let opts = SolverOptions::default();
    assemble_datum_with(f, set, grid, j, opts.datum_fine_step, opts.branch())
}

pub fn assemble_datum_with(
    f: &InitialDatum,
    set: &TrajectorySet,
    grid: &TimeGrid,
    j: usize,
    fine_step: f64,
    branch: &BranchConvention,
) -> Result<Vec<Complex64>> {
    set.curve(j)?;
    let substeps = ((grid.step() / fine_step) * (1.0 - 1e-12)).ceil().clamp(1.0, MAX_DATUM_SUBSTEPS as f64) as usize;
    let fine_steps = grid.steps() * substeps;
    let fine_h = grid.step() / substeps as f64;
    let s = grid.start();
    let trace: Vec<Complex64> = (0..=fine_steps)
        .map(|i| {
            let tau = if i == fine_steps { grid.end() } else { s + fine_h * i as f64 };
            f.boundary_trace(set, j, s, tau)
        })
        .collect::<Result<_>>()?;
    let weights = AbelWeights::new(fine_steps, fine_h);
    let c0 = 4.0 * PI.sqrt() / branch.sqrt_minus_i;
    Ok((0..grid.len())
        .into_par_iter()
        .map(|m| if m == 0 { ZERO } else { weights.apply(m * substeps, &trace) * c0 })
        .collect())
}

// ---------------------------------------------------------------------------
// kernel tables

/// Values of `C_j(t_m, t_k)`.
enum CTable {
    Zero,
    /// indexed by lag `m − k`; entry 0 is the diagonal
    Lag(Vec<Complex64>),
    /// evaluated row by row during the march
    Rows,
}

fn c_table(set: &TrajectorySet, j: usize, grid: &TimeGrid, rule: &GaussLegendre, opts: &KernelOptions) -> Result<CTable> {
    let curve = set.curve(j)?;
    if curve.is_static() {
        return Ok(CTable::Zero);
    }
    if !curve.is_lag_invariant() {
        return Ok(CTable::Rows);
    }
    let s = grid.start();
    let h = grid.step();
    let mut table: Vec<Complex64> = (1..=grid.steps())
        .into_par_iter()
        .map(|lag| kernels::kernel_c_with_rule(set, j, s + h * lag as f64, s, rule, opts.diag_series_threshold))
        .collect::<Result<_>>()?;
    table.insert(0, kernels::kernel_c_diagonal(set, j, s)?);
    Ok(CTable::Lag(table))
}

fn c_row(set: &TrajectorySet, j: usize, grid: &TimeGrid, m: usize, rule: &GaussLegendre, opts: &KernelOptions) -> Result<Vec<Complex64>> {
    let tm = grid.node(m);
    let mut row: Vec<Complex64> = (0..m)
        .into_par_iter()
        .map(|k| {
            if k == 0 {
                Ok(ZERO)
            } else {
                kernels::kernel_c_with_rule(set, j, tm, grid.node(k), rule, opts.diag_series_threshold)
            }
        })
        .collect::<Result<_>>()?;
    row.push(kernels::kernel_c_diagonal(set, j, tm)?);
    Ok(row)
}

/// `∫_lo^hi U₀(δ; y_j(σ) − y_l(σ−δ)) p(δ) dδ` for two affine amplitudes
/// `p(δ) = a + bδ`.
pub(crate) fn field_panel(
    set: &TrajectorySet,
    j: usize,
    l: usize,
    sigma: f64,
    lo: f64,
    hi: f64,
    amps: [(f64, f64); 2],
    opts: &KernelOptions,
) -> [Complex64; 2] {
    let target = set.curves()[j].state(sigma).position;
    let source = &set.curves()[l];
    let geom = |delta: f64| {
        let s = source.state(sigma - delta);
        let d = target - s.position;
        let r = d.norm();
        let dr = if r > 0.0 { d.dot(&s.velocity) / r } else { 0.0 };
        (r.max(f64::MIN_POSITIVE), dr)
    };
    let amp = |delta: f64| [amps[0].0 + amps[0].1 * delta, amps[1].0 + amps[1].1 * delta];
    let [a, b] = kernels::oscillatory(lo, hi, &geom, amp, opts.filon_panels);
    let u0 = Complex64::new(1.0, 0.0) / opts.branch.propagator_phase(1.0);
    [a * u0, b * u0]
}

/// Field integrals over one coarse panel `δ ∈ [lo, lo + h]`: weights of
/// the earlier node (`δ = lo + h`) and the later node (`δ = lo`).
fn field_panel_hats(set: &TrajectorySet, j: usize, l: usize, sigma: f64, lo: f64, h: f64, opts: &KernelOptions) -> [Complex64; 2] {
    let hi = lo + h;
    field_panel(set, j, l, sigma, lo, hi, [(-lo / h, 1.0 / h), (hi / h, -1.0 / h)], opts)
}

/// Field weights `W_{m,k}` of one ordered pair.
enum FieldTable {
    /// both centers fixed: per-lag (early, late) panel integrals
    Lag(Vec<[Complex64; 2]>),
    Rows,
}

fn field_lag_table(set: &TrajectorySet, j: usize, l: usize, grid: &TimeGrid, offset: f64, opts: &KernelOptions) -> Vec<[Complex64; 2]> {
    let h = grid.step();
    let sigma = grid.start();
    let mut table: Vec<[Complex64; 2]> = (1..=grid.steps())
        .into_par_iter()
        .map(|lag| field_panel_hats(set, j, l, sigma, offset + h * (lag - 1) as f64, h, opts))
        .collect();
    table.insert(0, [ZERO; 2]);
    table
}

/// Row `m` of the field weights: entry `k` multiplies `q_l(t_k)`.
fn field_row(set: &TrajectorySet, j: usize, l: usize, grid: &TimeGrid, m: usize, table: &FieldTable, opts: &KernelOptions) -> Vec<Complex64> {
    let h = grid.step();
    let sigma = grid.node(m);
    let panels: Vec<[Complex64; 2]> = match table {
        FieldTable::Lag(t) => (1..=m).map(|lag| t[lag]).collect(),
        FieldTable::Rows => (1..=m)
            .into_par_iter()
            .map(|lag| field_panel_hats(set, j, l, sigma, h * (lag - 1) as f64, h, opts))
            .collect(),
    };
    let mut row = vec![ZERO; m + 1];
    for (idx, [early, late]) in panels.iter().enumerate() {
        let lag = idx + 1;
        row[m - lag] += *early;
        row[m - lag + 1] += *late;
    }
    row
}

// ---------------------------------------------------------------------------
// solver

struct Problem<'a> {
    f: &'a InitialDatum,
    set: &'a TrajectorySet,
    alphas: &'a [f64],
    grid: TimeGrid,
    opts: SolverOptions,
    c0: Complex64,
    kappa: Complex64,
}

impl<'a> Problem<'a> {
    fn new(f: &'a InitialDatum, set: &'a TrajectorySet, alphas: &'a [f64], grid: &TimeGrid, opts: &SolverOptions) -> Result<Self> {
        opts.validate()?;
        if alphas.len() != set.len() {
            return Err(Error::invalid(format!("{} strengths for {} centers", alphas.len(), set.len())));
        }
        if let Some(a) = alphas.iter().find(|a| !a.is_finite()) {
            return Err(Error::invalid(format!("strength {a} is not finite")));
        }
        if !set.is_empty() {
            set.validate(grid.start(), grid.end(), (4 * grid.steps() + 1).max(1001))?;
        }
        let branch = opts.branch();
        Ok(Self {
            f,
            set,
            alphas,
            grid: *grid,
            opts: *opts,
            c0: 4.0 * PI.sqrt() / branch.sqrt_minus_i,
            kappa: cross_coefficient(branch),
        })
    }

    fn n(&self) -> usize {
        self.set.len()
    }

    fn datum(&self) -> Result<Vec<Vec<Complex64>>> {
        (0..self.n())
            .map(|j| assemble_datum_with(self.f, self.set, &self.grid, j, self.opts.datum_fine_step, self.opts.branch()))
            .collect()
    }

    fn pairs(&self) -> Vec<(usize, usize)> {
        let n = self.n();
        (0..n).flat_map(|j| (0..n).filter(move |&l| l != j).map(move |l| (j, l))).collect()
    }

    fn field_table(&self, j: usize, l: usize, offset: f64) -> FieldTable {
        let curves = self.set.curves();
        if curves[j].is_static() && curves[l].is_static() {
            FieldTable::Lag(field_lag_table(self.set, j, l, &self.grid, offset, &self.opts.kernel))
        } else {
            FieldTable::Rows
        }
    }

    fn march(&self, datum: &[Vec<Complex64>]) -> Result<Vec<Vec<Complex64>>> {
        let n = self.n();
        if n == 0 {
            return Ok(Vec::new());
        }
        let steps = self.grid.steps();
        let h = self.grid.step();
        let abel = AbelWeights::new(steps, h);
        let rule = GaussLegendre::new(self.opts.kernel.inner_nodes);
        let c_tables: Vec<CTable> =
            (0..n).map(|j| c_table(self.set, j, &self.grid, &rule, &self.opts.kernel)).collect::<Result<_>>()?;
        let pairs = self.pairs();
        let f_tables: Vec<FieldTable> = pairs.iter().map(|&(j, l)| self.field_table(j, l, 0.0)).collect();
        let mut q = vec![vec![ZERO; steps + 1]; n];
        // field history V_jl(t_i) per ordered pair
        let mut fields = vec![vec![ZERO; steps + 1]; pairs.len()];

        for m in 1..=steps {
            let diag_abel = abel.weight(m, m);
            let mut matrix = DMatrix::<Complex64>::zeros(n, n);
            let mut rhs = nalgebra::DVector::<Complex64>::zeros(n);
            for j in 0..n {
                let qj = &q[j];
                let mut explicit = ZERO;
                for k in 1..m {
                    explicit += qj[k] * abel.weight(m, k);
                }
                let mut acc = self.c0 * self.alphas[j] * explicit;
                let c_diag = match &c_tables[j] {
                    CTable::Zero => ZERO,
                    CTable::Lag(t) => {
                        let mut c = ZERO;
                        for k in 1..m {
                            c += t[m - k] * qj[k];
                        }
                        acc += c * h;
                        t[0]
                    }
                    CTable::Rows => {
                        let row = c_row(self.set, j, &self.grid, m, &rule, &self.opts.kernel)?;
                        let mut c = ZERO;
                        for k in 1..m {
                            c += row[k] * qj[k];
                        }
                        acc += c * h;
                        row[m]
                    }
                };
                matrix[(j, j)] = Complex64::new(1.0, 0.0) + self.c0 * self.alphas[j] * diag_abel + c_diag * (0.5 * h);
                rhs[j] = datum[j][m] - acc;
            }
            let mut rows = Vec::with_capacity(pairs.len());
            for (p, &(j, l)) in pairs.iter().enumerate() {
                let row = field_row(self.set, j, l, &self.grid, m, &f_tables[p], &self.opts.kernel);
                let mut partial = ZERO;
                for k in 1..m {
                    partial += row[k] * q[l][k];
                }
                let mut history = ZERO;
                for i in 1..m {
                    history += fields[p][i] * abel.weight(m, i);
                }
                rhs[j] -= self.kappa * (history + partial * diag_abel);
                matrix[(j, l)] += self.kappa * diag_abel * row[m];
                rows.push((partial, row[m]));
            }
            let solution = matrix.lu().solve(&rhs).ok_or(Error::SingularStep { step: m })?;
            if solution.iter().any(|z| !z.is_finite()) {
                return Err(Error::SingularStep { step: m });
            }
            for j in 0..n {
                q[j][m] = solution[j];
            }
            for (p, &(_, l)) in pairs.iter().enumerate() {
                let (partial, diag) = rows[p];
                fields[p][m] = partial + diag * q[l][m];
            }
        }
        Ok(q)
    }
}

/// Forward charges on `grid` for initial datum `f` at `s = grid.start()`.
pub fn solve_forward(
    f: &InitialDatum,
    set: &TrajectorySet,
    alphas: &[f64],
    grid: &TimeGrid,
    opts: &SolverOptions,
) -> Result<ChargeSolution> {
    let problem = Problem::new(f, set, alphas, grid, opts)?;
    let datum = problem.datum()?;
    let q = problem.march(&datum)?;
    let (residual_16, residual_33) = if opts.residuals {
        (Some(staggered_residual(&problem, &q, &datum)?), Some(integro_differential_residual(&problem, &q)?))
    } else {
        (None, None)
    };
    Ok(ChargeSolution {
        grid: *grid,
        q,
        alphas: alphas.to_vec(),
        direction: Direction::Forward,
        residual_16,
        residual_33,
        options: *opts,
    })
}

/// Backward charges `q̃` on `grid` for final datum `g` at `grid.end()`.
pub fn solve_backward(
    g: &InitialDatum,
    set: &TrajectorySet,
    alphas: &[f64],
    grid: &TimeGrid,
    opts: &SolverOptions,
) -> Result<ChargeSolution> {
    let mirrored_set = set.time_reversed();
    let mirrored = solve_forward(&g.conjugated(), &mirrored_set, alphas, &grid.reversed(), opts)?;
    let q = mirrored.q.iter().map(|qj| qj.iter().rev().map(|z| z.conj()).collect()).collect();
    Ok(ChargeSolution { grid: *grid, q, direction: Direction::Backward, ..mirrored })
}

// ---------------------------------------------------------------------------
// residuals

/// Plug-back defect of the charge equation at the midpoints `t_m + h/2`.
///
/// Charges and datum are continued by linear interpolation; the Abel term
/// is then exact, the `C` term uses three Gauss points per panel and the
/// cross term the field on the half-step grid.
pub fn residual_volterra(sol: &ChargeSolution, f: &InitialDatum, set: &TrajectorySet) -> Result<f64> {
    with_forward_view(sol, f, set, |problem, q| {
        let datum = problem.datum()?;
        staggered_residual(problem, q, &datum)
    })
}

/// Defect of the integro-differential form of the charge equation at
/// interior nodes.
pub fn residual_integrodifferential(sol: &ChargeSolution, f: &InitialDatum, set: &TrajectorySet) -> Result<f64> {
    with_forward_view(sol, f, set, integro_differential_residual)
}

fn with_forward_view<T>(
    sol: &ChargeSolution,
    f: &InitialDatum,
    set: &TrajectorySet,
    body: impl FnOnce(&Problem, &[Vec<Complex64>]) -> Result<T>,
) -> Result<T> {
    if sol.q.len() != set.len() {
        return Err(Error::invalid("solution and trajectory set disagree on the number of centers"));
    }
    match sol.direction {
        Direction::Forward => {
            let problem = Problem::new(f, set, &sol.alphas, &sol.grid, &sol.options)?;
            body(&problem, &sol.q)
        }
        Direction::Backward => {
            let g = f.conjugated();
            let mirrored_set = set.time_reversed();
            let problem = Problem::new(&g, &mirrored_set, &sol.alphas, &sol.grid.reversed(), &sol.options)?;
            body(&problem, &sol.mirrored())
        }
    }
}

fn staggered_residual(problem: &Problem, q: &[Vec<Complex64>], datum: &[Vec<Complex64>]) -> Result<f64> {
    let n = problem.n();
    if n == 0 {
        return Ok(0.0);
    }
    let grid = &problem.grid;
    let steps = grid.steps();
    let h = grid.step();
    let s = grid.start();
    let kopts = &problem.opts.kernel;
    let rule = GaussLegendre::new(kopts.inner_nodes);
    let gauss3: Vec<(f64, f64)> = GaussLegendre::new(3).mapped(0.0, 1.0).collect();

    let moving_c = problem.set.curves().iter().any(|c| !c.is_lag_invariant());
    let moving_d = n >= 2 && problem.set.curves().iter().any(|c| !c.is_static());
    let points: Vec<usize> = if moving_c || moving_d {
        let count = problem.opts.residual_points.min(steps);
        let mut v: Vec<usize> = (0..count).map(|i| ((i as f64 + 0.5) * steps as f64 / count as f64) as usize).collect();
        v.dedup();
        v
    } else {
        (0..steps).collect()
    };

    // fields on the half-step grid σ_p = s + p·h/2
    let pairs = problem.pairs();
    let half_fields: Vec<Vec<Complex64>> = pairs
        .iter()
        .map(|&(j, l)| half_step_fields(problem, j, l, &q[l]))
        .collect();
    let half_abel = AbelWeights::new(2 * steps, 0.5 * h);

    // C at the Gauss points, by panel distance, for lag-invariant curves;
    // distance 0 is the half panel ending at t*
    let lag_c: Vec<Option<Vec<[Complex64; 3]>>> = (0..n)
        .map(|j| -> Result<_> {
            let curve = &problem.set.curves()[j];
            if curve.is_static() || !curve.is_lag_invariant() {
                return Ok(None);
            }
            let table = (0..=steps)
                .into_par_iter()
                .map(|p| -> Result<[Complex64; 3]> {
                    let mut row = [ZERO; 3];
                    for (g, &(x, _)) in gauss3.iter().enumerate() {
                        let lag = if p == 0 { 0.5 * h * (1.0 - x) } else { h * (p as f64 + 0.5 - x) };
                        row[g] = kernels::kernel_c_with_rule(problem.set, j, s + lag, s, &rule, kopts.diag_series_threshold)?;
                    }
                    Ok(row)
                })
                .collect::<Result<_>>()?;
            Ok(Some(table))
        })
        .collect::<Result<_>>()?;

    let defects: Vec<f64> = points
        .par_iter()
        .map(|&m| -> Result<f64> {
            let t_star = s + (m as f64 + 0.5) * h;
            let mut worst: f64 = 0.0;
            for j in 0..n {
                let qj = &q[j];
                let q_star = 0.5 * (qj[m] + qj[m + 1]);
                let h_star = 0.5 * (datum[j][m] + datum[j][m + 1]);
                // Abel term on the nodes t_0..t_m, t*
                let mut abel = ZERO;
                for k in 0..m {
                    let (e, l) = panel_weights((m - k) as f64 + 0.5, (m - k) as f64 - 0.5);
                    abel += (qj[k] * e + qj[k + 1] * l) * h.sqrt();
                }
                let (e, l) = panel_weights(0.5, 0.0);
                abel += (qj[m] * e + q_star * l) * h.sqrt();
                let mut total = q_star - h_star + problem.c0 * problem.alphas[j] * abel;

                // C term
                if !problem.set.curves()[j].is_static() {
                    let mut c_term = ZERO;
                    for k in 0..=m {
                        let (a, b, qa, qb) = if k < m {
                            (grid.node(k), grid.node(k + 1), qj[k], qj[k + 1])
                        } else {
                            (grid.node(m), t_star, qj[m], q_star)
                        };
                        for (g, &(x, w)) in gauss3.iter().enumerate() {
                            let tau = a + (b - a) * x;
                            let qv = qa + (qb - qa) * x;
                            let c = match &lag_c[j] {
                                Some(table) => table[m - k][g],
                                None => kernels::kernel_c_with_rule(problem.set, j, t_star, tau, &rule, kopts.diag_series_threshold)?,
                            };
                            c_term += c * qv * (w * (b - a));
                        }
                    }
                    total += c_term;
                }

                // cross term
                for (p, &(jj, _)) in pairs.iter().enumerate() {
                    if jj != j {
                        continue;
                    }
                    total += problem.kappa * half_abel.apply(2 * m + 1, &half_fields[p]);
                }
                worst = worst.max(total.norm());
            }
            Ok(worst)
        })
        .collect::<Result<_>>()?;
    Ok(defects.into_iter().fold(0.0, f64::max))
}

/// `V_jl` at `σ_p = s + p·h/2` for the piecewise-linear continuation of `q_l`.
fn half_step_fields(problem: &Problem, j: usize, l: usize, ql: &[Complex64]) -> Vec<Complex64> {
    let grid = &problem.grid;
    let steps = grid.steps();
    let h = grid.step();
    let s = grid.start();
    let kopts = &problem.opts.kernel;
    let both_static = problem.set.curves()[j].is_static() && problem.set.curves()[l].is_static();
    let whole = if both_static { Some(field_lag_table(problem.set, j, l, grid, 0.0, kopts)) } else { None };
    let shifted = if both_static { Some(field_lag_table(problem.set, j, l, grid, 0.5 * h, kopts)) } else { None };
    let head = if both_static {
        // partial panel δ ∈ [0, h/2]: hats of q_i (value (h/2+δ)/h) and q_{i+1} ((h/2−δ)/h)
        Some(field_panel(problem.set, j, l, s, 0.0, 0.5 * h, [(0.5, 1.0 / h), (0.5, -1.0 / h)], kopts))
    } else {
        None
    };
    (0..=2 * steps)
        .into_par_iter()
        .map(|p| {
            if p == 0 {
                return ZERO;
            }
            let sigma = s + 0.5 * h * p as f64;
            let mut v = ZERO;
            if p % 2 == 0 {
                let i = p / 2;
                for lag in 1..=i {
                    let [e, lt] = match &whole {
                        Some(t) => t[lag],
                        None => field_panel_hats(problem.set, j, l, sigma, h * (lag - 1) as f64, h, kopts),
                    };
                    v += e * ql[i - lag] + lt * ql[i - lag + 1];
                }
            } else {
                let i = p / 2;
                let [a, b] = match head {
                    Some(x) => x,
                    None => field_panel(problem.set, j, l, sigma, 0.0, 0.5 * h, [(0.5, 1.0 / h), (0.5, -1.0 / h)], kopts),
                };
                v += a * ql[i] + b * ql[i + 1];
                for lag in 1..=i {
                    let [e, lt] = match &shifted {
                        Some(t) => t[lag],
                        None => field_panel_hats(problem.set, j, l, sigma, 0.5 * h + h * (lag - 1) as f64, h, kopts),
                    };
                    v += e * ql[i - lag] + lt * ql[i - lag + 1];
                }
            }
            v
        })
        .collect()
}

fn integro_differential_residual(problem: &Problem, q: &[Vec<Complex64>]) -> Result<f64> {
    let n = problem.n();
    let grid = &problem.grid;
    let steps = grid.steps();
    let h = grid.step();
    let s = grid.start();
    let set = problem.set;
    let branch = problem.opts.branch();
    let sqrt_i = branch.sqrt_i();
    let sqrt_pi = PI.sqrt();
    let thr = problem.opts.kernel.diag_series_threshold;
    if n == 0 {
        return Ok(0.0);
    }
    let defects: Vec<f64> = (1..steps)
        .into_par_iter()
        .map(|m| -> Result<f64> {
            let tm = grid.node(m);
            let mut worst: f64 = 0.0;
            for j in 0..n {
                let yj = set.position(j, tm)?;
                let mut total = 4.0 * PI * problem.alphas[j] * q[j][m] - 4.0 * PI * problem.f.free_evolution(tm - s, &yj);
                for l in 0..n {
                    if l != j {
                        let yl = set.position(l, tm)?;
                        total -= q[l][m] / (yj - yl).norm();
                    }
                    // B and A at (t_m, t_k), k = 0..m
                    let mut b = vec![ZERO; m + 1];
                    let mut a = vec![ZERO; m + 1];
                    for k in 0..m {
                        let p = special::pair(set, j, l, tm, grid.node(k), thr)?;
                        b[k] = special::b_of_w(p.w);
                        a[k] = special::a_from_pair(&p);
                    }
                    if l == j {
                        b[m] = Complex64::new(1.0, 0.0);
                        a[m] = Complex64::new(set.velocity(j, tm)?.norm_squared() / 6.0, 0.0);
                    }
                    // q̇ is constant on each panel; B is linear between its nodes
                    let mut qdot_term = ZERO;
                    for k in 0..m {
                        let slope = (q[l][k + 1] - q[l][k]) / h;
                        let (e, lt) = panel_weights((m - k) as f64, (m - k - 1) as f64);
                        qdot_term += slope * (b[k] * e + b[k + 1] * lt) * h.sqrt();
                    }
                    let mut a_term = ZERO;
                    for k in 0..=m {
                        let w = if k == m {
                            panel_weights(1.0, 0.0).1
                        } else if k == 0 {
                            panel_weights(m as f64, m as f64 - 1.0).0
                        } else {
                            panel_weights((m - k) as f64, (m - k - 1) as f64).0
                                + panel_weights((m - k + 1) as f64, (m - k) as f64).1
                        };
                        a_term += q[l][k] * a[k] * (w * h.sqrt());
                    }
                    total += qdot_term / (sqrt_i * sqrt_pi) - a_term * (sqrt_i / sqrt_pi);
                }
                worst = worst.max(total.norm());
            }
            Ok(worst)
        })
        .collect::<Result<_>>()?;
    Ok(defects.into_iter().fold(0.0, f64::max))
}
