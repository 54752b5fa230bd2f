//! Solving a manifest and writing its artifacts.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use movpi_core::volterra::{solve_backward, solve_forward};
use movpi_core::wavefunction::reconstruct;
use movpi_core::{
    ChargeSolution, ClearanceReport, Direction, Domain, InitialDatum, KGrid, SeparationCertificate, TimeGrid,
    TrajectorySet, WaveField,
};
use serde_json::{json, Value};

use crate::error::CliError;
use crate::manifest::{Mode, RunManifest};

pub const VERSION: &str = concat!("movpi ", env!("CARGO_PKG_VERSION"));

/// An output directory stamped with the resolved manifest and the tool version.
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path, manifest: &RunManifest) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::output(root, e))?;
        let dir = Self { root: root.to_path_buf() };
        dir.write("manifest.toml", manifest.to_toml().as_bytes())?;
        dir.write("VERSION", format!("{VERSION}\n").as_bytes())?;
        Ok(dir)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.path(name);
        fs::write(&path, bytes).map_err(|e| CliError::output(&path, e))
    }

    pub fn write_json(&self, name: &str, value: &Value) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("json values serialize");
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn write_charges(&self, name: &str, sol: &ChargeSolution) -> Result<(), CliError> {
        let path = self.path(name);
        let file = fs::File::create(&path).map_err(|e| CliError::output(&path, e))?;
        sol.write_csv(BufWriter::new(file)).map_err(|e| CliError::output(&path, e))
    }

    /// Binary samples plus a JSON sidecar.
    pub fn write_field(&self, stem: &str, field: &WaveField, extra: Value) -> Result<(), CliError> {
        let path = self.path(&format!("{stem}.mpiw"));
        let file = fs::File::create(&path).map_err(|e| CliError::output(&path, e))?;
        field.write_binary(BufWriter::new(file)).map_err(|e| CliError::output(&path, e))?;
        let mut sidecar = json!({
            "format": "MPIW1",
            "domain": domain_name(field.domain),
            "time": field.time,
            "points": field.grid.points(),
            "extent": field.grid.extent(),
            "norm": field.norm,
            "metadata": field.metadata,
        });
        if let (Some(obj), Value::Object(more)) = (sidecar.as_object_mut(), extra) {
            obj.extend(more);
        }
        self.write_json(&format!("{stem}.json"), &sidecar)
    }
}

pub fn domain_name(d: Domain) -> &'static str {
    match d {
        Domain::Momentum => "momentum",
        Domain::Position => "position",
    }
}

pub fn direction_name(d: Direction) -> &'static str {
    match d {
        Direction::Forward => "forward",
        Direction::Backward => "backward",
    }
}

/// One solved direction together with the datum that drove it.
pub struct Solved {
    pub datum: InitialDatum,
    pub solution: ChargeSolution,
    pub clearance: ClearanceReport,
}

impl Solved {
    pub fn name(&self) -> &'static str {
        direction_name(self.solution.direction)
    }

    pub fn summary(&self) -> Value {
        json!({
            "direction": self.name(),
            "residual_16": self.solution.residual_16,
            "residual_33": self.solution.residual_33,
            "max_modulus": self.solution.max_modulus(),
            "clearance": clearance_json(&self.clearance),
        })
    }

    /// Field at `t`, on the grid and in the direction of this run.
    pub fn field(&self, set: &TrajectorySet, kg: KGrid, t: f64) -> Result<WaveField, CliError> {
        Ok(reconstruct(&self.datum, &self.solution, set, kg, t)?)
    }

    /// The time at which the datum is prescribed.
    pub fn datum_time(&self) -> f64 {
        match self.solution.direction {
            Direction::Forward => self.solution.grid.start(),
            Direction::Backward => self.solution.grid.end(),
        }
    }
}

fn clearance_json(c: &ClearanceReport) -> Value {
    json!({ "clearance": c.clearance, "nearest": c.nearest, "warning": c.warning })
}

pub fn certificate_json(c: &SeparationCertificate) -> Value {
    json!({
        "min_separation": if c.min_separation.is_finite() { json!(c.min_separation) } else { Value::Null },
        "closest_pair": c.closest_pair,
        "max_speed": c.max_speed,
        "max_acceleration": c.max_acceleration,
        "lipschitz_slack": c.lipschitz_slack,
        "below_c3": c.below_c3,
    })
}

pub struct Run {
    pub set: TrajectorySet,
    pub grid: TimeGrid,
    pub certificate: SeparationCertificate,
    pub forward: Option<Solved>,
    pub backward: Option<Solved>,
}

impl Run {
    pub fn execute(m: &RunManifest) -> Result<Run, CliError> {
        let set = m.trajectory_set()?;
        let grid = m.time_grid()?;
        let opts = m.solver_options()?;
        let samples = (4 * grid.steps() + 1).max(1001);
        let certificate = set.validate(grid.start(), grid.end(), samples)?;
        let forward = match m.mode {
            Mode::Backward => None,
            _ => {
                let f = m.initial()?;
                let clearance = f.support_clearance(&set, grid.start())?;
                let solution = solve_forward(&f, &set, &m.alphas, &grid, &opts)?;
                Some(Solved { datum: f, solution, clearance })
            }
        };
        let backward = match m.mode {
            Mode::Forward => None,
            _ => {
                let g = m.final_datum()?;
                let clearance = g.support_clearance(&set, grid.end())?;
                let solution = solve_backward(&g, &set, &m.alphas, &grid, &opts)?;
                Some(Solved { datum: g, solution, clearance })
            }
        };
        Ok(Run { set, grid, certificate, forward, backward })
    }

    pub fn solved(&self) -> impl Iterator<Item = &Solved> {
        self.forward.iter().chain(self.backward.iter())
    }

    pub fn report(&self, m: &RunManifest) -> Value {
        json!({
            "version": VERSION,
            "mode": m.mode,
            "steps": self.grid.steps(),
            "start": self.grid.start(),
            "end": self.grid.end(),
            "centers": self.set.len(),
            "certificate": certificate_json(&self.certificate),
            "runs": self.solved().map(Solved::summary).collect::<Vec<_>>(),
        })
    }

    /// `charges_<direction>.csv` for each solved direction and `report.json`.
    pub fn write(&self, m: &RunManifest, out: &OutDir) -> Result<(), CliError> {
        if m.outputs.charges {
            for s in self.solved() {
                out.write_charges(&format!("charges_{}.csv", s.name()), &s.solution)?;
            }
        }
        out.write_json("report.json", &self.report(m))
    }
}

/// Norm of the sampled datum, the reference for drift and the grid gate.
pub fn sampled_norm(s: &Solved, kg: KGrid) -> Result<f64, CliError> {
    Ok(WaveField::from_datum(&s.datum, kg, Domain::Momentum, s.datum_time())?.norm)
}
