//! Run manifests: a TOML document describing one run.

use std::path::{Path, PathBuf};

use movpi_core::{
    BranchConvention, Complex64, GaussianPacket, InitialDatum, KGrid, KernelOptions, SolverOptions, TimeGrid, Trajectory,
    TrajectorySet, Vec3,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Forward,
    Backward,
    RoundtripAdjoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CurveSpec {
    Fixed {
        position: [f64; 3],
    },
    Uniform {
        origin: [f64; 3],
        velocity: [f64; 3],
    },
    Circular {
        center: [f64; 3],
        radius: f64,
        omega: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default = "z_axis")]
        normal: [f64; 3],
    },
    Polynomial {
        coefficients: Vec<[f64; 3]>,
    },
    Spline {
        times: Vec<f64>,
        points: Vec<[f64; 3]>,
        start_velocity: [f64; 3],
        end_velocity: [f64; 3],
    },
}

fn z_axis() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketSpec {
    pub center: [f64; 3],
    pub width: f64,
    #[serde(default)]
    pub momentum: [f64; 3],
    /// `[re, im]`.
    #[serde(default = "unit_weight")]
    pub weight: [f64; 2],
}

fn unit_weight() -> [f64; 2] {
    [1.0, 0.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default)]
    pub start: f64,
    pub end: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KGridSpec {
    /// Half-width of the momentum box; chosen from the datum when absent.
    pub extent: Option<f64>,
    #[serde(default = "default_points")]
    pub points: usize,
}

fn default_points() -> usize {
    48
}

impl Default for KGridSpec {
    fn default() -> Self {
        Self { extent: None, points: default_points() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    #[serde(default = "yes")]
    pub charges: bool,
    #[serde(default = "yes")]
    pub fields: bool,
    /// Also write each field on the dual position grid.
    #[serde(default)]
    pub position_fields: bool,
}

fn default_directory() -> PathBuf {
    PathBuf::from("movpi-out")
}

fn yes() -> bool {
    true
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { directory: default_directory(), charges: true, fields: true, position_fields: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BranchSpec {
    #[default]
    Standard,
    /// Negative control only.
    Flipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_fine_step")]
    pub datum_fine_step: f64,
    #[serde(default = "yes")]
    pub residuals: bool,
    #[serde(default = "default_residual_points")]
    pub residual_points: usize,
    #[serde(default = "default_inner_nodes")]
    pub inner_nodes: usize,
    #[serde(default = "default_filon_panels")]
    pub filon_panels: usize,
    #[serde(default)]
    pub branch: BranchSpec,
}

fn default_fine_step() -> f64 {
    SolverOptions::default().datum_fine_step
}

fn default_residual_points() -> usize {
    SolverOptions::default().residual_points
}

fn default_inner_nodes() -> usize {
    KernelOptions::default().inner_nodes
}

fn default_filon_panels() -> usize {
    KernelOptions::default().filon_panels
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            datum_fine_step: default_fine_step(),
            residuals: true,
            residual_points: default_residual_points(),
            inner_nodes: default_inner_nodes(),
            filon_panels: default_filon_panels(),
            branch: BranchSpec::Standard,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    /// Bound on the staggered residual relative to `max |q|`.
    #[serde(default = "default_residual_tol")]
    pub residual_tolerance: f64,
    #[serde(default = "default_norm_tol")]
    pub norm_tolerance: f64,
    #[serde(default = "default_norm_tol")]
    pub adjoint_tolerance: f64,
    /// Reconstruct every `norm_stride`-th node for the norm check.
    #[serde(default = "default_stride")]
    pub norm_stride: usize,
}

fn default_residual_tol() -> f64 {
    1e-4
}

fn default_norm_tol() -> f64 {
    1e-2
}

fn default_stride() -> usize {
    10
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self {
            residual_tolerance: default_residual_tol(),
            norm_tolerance: default_norm_tol(),
            adjoint_tolerance: default_norm_tol(),
            norm_stride: default_stride(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// Same coupling on every center.
    Alpha,
    Steps,
    End,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    #[serde(default)]
    pub mode: Mode,
    /// Minimal distance the centers promise to keep.
    #[serde(default = "default_separation")]
    pub separation: f64,
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub trajectories: Vec<CurveSpec>,
    #[serde(default)]
    pub initial_data: Vec<PacketSpec>,
    /// Datum at the final time for backward and adjoint runs.
    #[serde(default)]
    pub final_data: Vec<PacketSpec>,
    pub grid: GridSpec,
    #[serde(default)]
    pub kgrid: KGridSpec,
    #[serde(default)]
    pub outputs: OutputSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub verify: VerifySpec,
    pub sweep: Option<SweepSpec>,
}

fn default_separation() -> f64 {
    1.0
}

fn vec3(v: &[f64; 3]) -> Vec3 {
    Vec3::new(v[0], v[1], v[2])
}

fn datum(packets: &[PacketSpec], what: &str) -> Result<InitialDatum, CliError> {
    packets
        .iter()
        .enumerate()
        .map(|(i, p)| {
            GaussianPacket::new(vec3(&p.center), p.width, vec3(&p.momentum), Complex64::new(p.weight[0], p.weight[1]))
                .map_err(|e| CliError::Manifest(format!("{what}[{i}]: {e}")))
        })
        .collect::<Result<_, _>>()
        .map(InitialDatum::new)
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Manifest(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let manifest: RunManifest = toml::from_str(text).map_err(|e| CliError::Manifest(e.to_string()))?;
        manifest.check_shape()?;
        Ok(manifest)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    fn check_shape(&self) -> Result<(), CliError> {
        if self.alphas.len() != self.trajectories.len() {
            return Err(CliError::Manifest(format!(
                "{} alphas for {} trajectories",
                self.alphas.len(),
                self.trajectories.len()
            )));
        }
        if let Some((i, a)) = self.alphas.iter().enumerate().find(|(_, a)| !a.is_finite()) {
            return Err(CliError::Manifest(format!("alphas[{i}] = {a} is not finite")));
        }
        if !(self.grid.end > self.grid.start) {
            return Err(CliError::Manifest(format!("grid.end {} must exceed grid.start {}", self.grid.end, self.grid.start)));
        }
        if self.mode != Mode::Forward && self.final_data.is_empty() {
            return Err(CliError::Manifest("backward and adjoint modes need final_data".into()));
        }
        if self.mode != Mode::Backward && self.initial_data.is_empty() {
            return Err(CliError::Manifest("initial_data is empty".into()));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(CliError::Manifest("sweep.values is empty".into()));
            }
        }
        Ok(())
    }

    pub fn trajectory_set(&self) -> Result<TrajectorySet, CliError> {
        let curves = self
            .trajectories
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let curve = match c {
                    CurveSpec::Fixed { position } => Ok(Trajectory::fixed(vec3(position))),
                    CurveSpec::Uniform { origin, velocity } => Ok(Trajectory::uniform(vec3(origin), vec3(velocity))),
                    CurveSpec::Circular { center, radius, omega, phase, normal } => {
                        Trajectory::circular(vec3(center), *radius, *omega, *phase, vec3(normal))
                    }
                    CurveSpec::Polynomial { coefficients } => Trajectory::polynomial(coefficients.iter().map(vec3).collect()),
                    CurveSpec::Spline { times, points, start_velocity, end_velocity } => Trajectory::spline(
                        times.clone(),
                        points.iter().map(vec3).collect(),
                        vec3(start_velocity),
                        vec3(end_velocity),
                    ),
                };
                curve.map_err(|e| CliError::Manifest(format!("trajectories[{i}]: {e}")))
            })
            .collect::<Result<_, _>>()?;
        TrajectorySet::new(curves, self.separation).map_err(|e| CliError::Manifest(e.to_string()))
    }

    pub fn initial(&self) -> Result<InitialDatum, CliError> {
        datum(&self.initial_data, "initial_data")
    }

    pub fn final_datum(&self) -> Result<InitialDatum, CliError> {
        datum(&self.final_data, "final_data")
    }

    pub fn time_grid(&self) -> Result<TimeGrid, CliError> {
        TimeGrid::new(self.grid.start, self.grid.end, self.grid.steps).map_err(|e| CliError::Manifest(format!("grid: {e}")))
    }

    /// The momentum grid, sized from `f` when no extent is given.
    pub fn k_grid(&self, f: &InitialDatum) -> Result<KGrid, CliError> {
        let grid = match self.kgrid.extent {
            Some(extent) => KGrid::new(extent, self.kgrid.points),
            None => KGrid::for_datum(f, self.kgrid.points),
        };
        grid.map_err(|e| CliError::Manifest(format!("kgrid: {e}")))
    }

    pub fn solver_options(&self) -> Result<SolverOptions, CliError> {
        let s = &self.solver;
        let branch = match s.branch {
            BranchSpec::Standard => BranchConvention::standard(),
            BranchSpec::Flipped => BranchConvention::flipped(),
        };
        let opts = SolverOptions {
            kernel: KernelOptions { inner_nodes: s.inner_nodes, filon_panels: s.filon_panels, branch, ..Default::default() },
            datum_fine_step: s.datum_fine_step,
            residuals: s.residuals,
            residual_points: s.residual_points,
        };
        opts.validate().map_err(|e| CliError::Manifest(format!("solver: {e}")))?;
        Ok(opts)
    }

    /// Copy with one sweep coordinate applied.
    pub fn with_parameter(&self, parameter: SweepParameter, value: f64) -> Result<RunManifest, CliError> {
        let mut m = self.clone();
        m.sweep = None;
        match parameter {
            SweepParameter::Alpha => m.alphas.iter_mut().for_each(|a| *a = value),
            SweepParameter::Steps => {
                if !(value >= 0.0 && value.fract() == 0.0) {
                    return Err(CliError::Manifest(format!("steps = {value} is not a whole number")));
                }
                m.grid.steps = value as usize;
            }
            SweepParameter::End => m.grid.end = value,
        }
        m.check_shape()?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
alphas = [1.0]

[[trajectories]]
kind = "fixed"
position = [0.0, 0.0, 0.0]

[[initial_data]]
center = [4.0, 0.0, 0.0]
width = 0.5

[grid]
end = 1.0
steps = 100
"#;

    #[test]
    fn minimal_manifest_gets_defaults() {
        let m = RunManifest::parse(MINIMAL).unwrap();
        assert_eq!(m.mode, Mode::Forward);
        assert_eq!(m.grid.start, 0.0);
        assert_eq!(m.initial_data[0].weight, [1.0, 0.0]);
        assert_eq!(m.solver, SolverSpec::default());
        assert_eq!(m.trajectory_set().unwrap().len(), 1);
    }

    #[test]
    fn resolved_copy_round_trips() {
        let m = RunManifest::parse(MINIMAL).unwrap();
        assert_eq!(RunManifest::parse(&m.to_toml()).unwrap(), m);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let typo = MINIMAL.replace("width = 0.5", "width = 0.5\nwidht = 0.5");
        assert!(matches!(RunManifest::parse(&typo), Err(CliError::Manifest(_))));
        let top = format!("alpha = 2.0\n{MINIMAL}");
        assert!(RunManifest::parse(&top).is_err());
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let text = MINIMAL.replace("alphas = [1.0]", "alphas = [1.0, 2.0]");
        let err = RunManifest::parse(&text).unwrap_err();
        assert!(err.to_string().contains("2 alphas for 1 trajectories"), "{err}");
    }

    #[test]
    fn sweep_coordinates_apply() {
        let m = RunManifest::parse(MINIMAL).unwrap();
        assert_eq!(m.with_parameter(SweepParameter::Alpha, 3.0).unwrap().alphas, vec![3.0]);
        assert_eq!(m.with_parameter(SweepParameter::Steps, 40.0).unwrap().grid.steps, 40);
        assert!(m.with_parameter(SweepParameter::Steps, 2.5).is_err());
        assert!(m.with_parameter(SweepParameter::End, -1.0).is_err());
    }
}
