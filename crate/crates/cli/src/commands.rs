use std::fmt::Write as _;
use std::path::Path;

use movpi_core::special::{fresnel_f, fresnel_moment2};
use movpi_core::volterra::{abel_identity_check, solve_forward};
use movpi_core::{Complex64, Domain, GaussianPacket, InitialDatum, SolverOptions, TimeGrid, Trajectory, TrajectorySet, Vec3, WaveField};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::error::CliError;
use crate::manifest::{Mode, RunManifest};
use crate::run::{sampled_norm, OutDir, Run, Solved};

pub fn solve(m: &RunManifest, out: &Path) -> Result<Run, CliError> {
    let dir = OutDir::create(out, m)?;
    let run = Run::execute(m)?;
    run.write(m, &dir)?;
    Ok(run)
}

pub fn reconstruct(m: &RunManifest, times: Option<&[f64]>, out: &Path) -> Result<(), CliError> {
    let dir = OutDir::create(out, m)?;
    let run = Run::execute(m)?;
    run.write(m, &dir)?;
    let default = [run.grid.start(), run.grid.end()];
    let times = times.unwrap_or(&default);
    for s in run.solved() {
        let kg = m.k_grid(&s.datum)?;
        let reference = sampled_norm(s, kg)?;
        let resolved = (reference - s.datum.norm()).abs() <= movpi_core::wavefunction::GATE_TOLERANCE * s.datum.norm();
        let mut series = String::from("time,norm,relative_drift\n");
        for (i, &t) in times.iter().enumerate() {
            let field = s.field(&run.set, kg, t)?;
            let drift = (field.norm - reference) / reference;
            let _ = writeln!(series, "{t:?},{:?},{drift:?}", field.norm);
            let extra = json!({ "datum_norm": s.datum.norm(), "sampled_datum_norm": reference, "resolved": resolved });
            let stem = format!("field_{}_{i:03}", s.name());
            if m.outputs.fields {
                dir.write_field(&stem, &field, extra.clone())?;
            }
            if m.outputs.position_fields {
                dir.write_field(&format!("{stem}_x"), &field.to_position_space()?, extra)?;
            }
        }
        dir.write(&format!("norms_{}.csv", s.name()), series.as_bytes())?;
        if !resolved {
            eprintln!(
                "warning: {} datum under-resolved on the momentum grid, norms are advisory (sampled {reference:.6e}, exact {:.6e})",
                s.name(),
                s.datum.norm()
            );
        }
    }
    Ok(())
}

struct Check {
    name: &'static str,
    pass: bool,
    detail: String,
}

impl Check {
    fn new(name: &'static str, pass: bool, detail: String) -> Self {
        Self { name, pass, detail }
    }
}

fn check_special_functions() -> Result<Check, CliError> {
    let mut worst: f64 = 0.0;
    for w in [0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 100.0] {
        let f = fresnel_f(w)?;
        let m = fresnel_moment2(w)?;
        let identity = (Complex64::new(0.0, w * w).exp() * w - f) / Complex64::new(0.0, 2.0);
        worst = worst.max((m - identity).norm() / m.norm().max(1.0));
    }
    // leading terms at small and large argument
    let small = 1e-3;
    let series = Complex64::new(small, small.powi(3) / 3.0);
    worst = worst.max((fresnel_f(small)? - series).norm() / small);
    let big = 1e4;
    let limit = Complex64::from_polar(std::f64::consts::PI.sqrt() / 2.0, std::f64::consts::FRAC_PI_4);
    let tail = Complex64::new(0.0, 1.0) * Complex64::new(0.0, big * big).exp() / (2.0 * big);
    worst = worst.max((fresnel_f(big)? - (limit - tail)).norm());
    Ok(Check::new("special functions", worst <= 1e-10, format!("worst identity defect {worst:.2e} (tol 1e-10)")))
}

fn check_abel() -> Result<Check, CliError> {
    let mut worst = f64::INFINITY;
    for power in [1, 2] {
        let defects = [200usize, 400, 800]
            .iter()
            .map(|&n| {
                let grid = TimeGrid::new(0.0, 1.0, n)?;
                let eta: Vec<Complex64> = grid.nodes().iter().map(|t| Complex64::new(t.powi(power), 0.0)).collect();
                abel_identity_check(&eta, &grid)
            })
            .collect::<Result<Vec<f64>, _>>()?;
        for w in defects.windows(2) {
            worst = worst.min((w[0] / w[1]).log2());
        }
    }
    Ok(Check::new("abel identity", worst >= 1.0, format!("lowest observed order {worst:.2} (min 1.0)")))
}

fn quiet() -> SolverOptions {
    SolverOptions { residuals: false, ..Default::default() }
}

fn check_symmetry() -> Result<Check, CliError> {
    let set = TrajectorySet::new(
        vec![Trajectory::fixed(Vec3::new(-1.0, 0.0, 0.0)), Trajectory::fixed(Vec3::new(1.0, 0.0, 0.0))],
        1.0,
    )?;
    let f = InitialDatum::single(GaussianPacket::new(
        Vec3::new(0.0, 2.5, 1.0),
        0.4,
        Vec3::new(0.0, -1.5, 0.0),
        Complex64::new(1.0, 0.0),
    )?);
    let sol = solve_forward(&f, &set, &[1.0, 1.0], &TimeGrid::new(0.0, 1.0, 400)?, &quiet())?;
    let gap = sol.q[0].iter().zip(&sol.q[1]).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    Ok(Check::new("swap symmetry", gap <= 1e-10, format!("max |q1 - q2| {gap:.2e} (tol 1e-10)")))
}

fn check_galilean() -> Result<Check, CliError> {
    let v = Vec3::new(1.0, 0.0, 0.0);
    let (x0, k0) = (Vec3::new(2.5, 0.0, 0.0), Vec3::new(-1.0, 0.0, 0.0));
    let grid = TimeGrid::new(0.0, 1.0, 1000)?;
    let rest = TrajectorySet::new(vec![Trajectory::fixed(Vec3::zeros())], 1.0)?;
    let moving = TrajectorySet::new(vec![Trajectory::uniform(Vec3::zeros(), v)], 1.0)?;
    let f = InitialDatum::single(GaussianPacket::new(x0, 0.5, k0, Complex64::new(1.0, 0.0))?);
    let fv = InitialDatum::single(GaussianPacket::new(x0, 0.5, k0 + v * 0.5, Complex64::new(1.0, 0.0))?);
    let q0 = solve_forward(&f, &rest, &[1.0], &grid, &quiet())?;
    let qv = solve_forward(&fv, &moving, &[1.0], &grid, &quiet())?;
    let gap = q0.q[0].iter().zip(&qv.q[0]).map(|(a, b)| (a.norm() - b.norm()).abs()).fold(0.0, f64::max);
    let rel = gap / q0.max_modulus();
    Ok(Check::new("galilean modulus", rel <= 1e-2, format!("relative modulus gap {rel:.2e} (tol 1e-2)")))
}

fn check_residuals(m: &RunManifest, run: &Run) -> Vec<Check> {
    run.solved()
        .filter_map(|s| {
            let r = s.solution.residual_16?;
            let scale = s.solution.max_modulus();
            let rel = if scale > 0.0 { r / scale } else { r };
            let tol = m.verify.residual_tolerance;
            Some(Check::new(
                if s.name() == "forward" { "forward residual" } else { "backward residual" },
                rel <= tol,
                format!("staggered residual {r:.2e}, relative {rel:.2e} (tol {tol:.0e})"),
            ))
        })
        .collect()
}

fn check_norm(m: &RunManifest, run: &Run, s: &Solved) -> Result<Check, CliError> {
    let kg = m.k_grid(&s.datum)?;
    let reference = sampled_norm(s, kg)?;
    let gate = (reference - s.datum.norm()).abs() / s.datum.norm();
    let stride = m.verify.norm_stride.max(1);
    let steps = run.grid.steps();
    let mut nodes: Vec<usize> = (0..=steps).step_by(stride).collect();
    if nodes.last() != Some(&steps) {
        nodes.push(steps);
    }
    let mut drift: f64 = 0.0;
    for k in nodes {
        let field = s.field(&run.set, kg, run.grid.node(k))?;
        drift = drift.max((field.norm - reference).abs() / reference);
    }
    let tol = m.verify.norm_tolerance;
    let gate_ok = gate <= movpi_core::wavefunction::GATE_TOLERANCE;
    Ok(Check::new(
        if s.name() == "forward" { "forward norm conservation" } else { "backward norm conservation" },
        gate_ok && drift <= tol,
        format!("drift {drift:.2e} (tol {tol:.0e}), grid gate {gate:.1e} (tol 1e-4)"),
    ))
}

fn check_adjoint(m: &RunManifest, run: &Run, fw: &Solved, bw: &Solved) -> Result<Check, CliError> {
    let kg = m.k_grid(&fw.datum)?;
    let uf = fw.field(&run.set, kg, run.grid.end())?;
    let ug = bw.field(&run.set, kg, run.grid.start())?;
    let g_end = WaveField::from_datum(&bw.datum, kg, Domain::Momentum, run.grid.end())?;
    let f_start = WaveField::from_datum(&fw.datum, kg, Domain::Momentum, run.grid.start())?;
    let lhs = g_end.inner_product(&uf)?;
    let rhs = ug.inner_product(&f_start)?;
    let defect = (lhs - rhs).norm() / (fw.datum.norm() * bw.datum.norm());
    let tol = m.verify.adjoint_tolerance;
    Ok(Check::new("adjointness", defect <= tol, format!("relative defect {defect:.2e} (tol {tol:.0e})")))
}

pub fn verify(m: &RunManifest, out: &Path) -> Result<(), CliError> {
    let dir = OutDir::create(out, m)?;
    let run = Run::execute(m)?;
    run.write(m, &dir)?;
    let mut checks = vec![check_special_functions()?, check_abel()?, check_symmetry()?, check_galilean()?];
    checks.extend(check_residuals(m, &run));
    for s in run.solved() {
        checks.push(check_norm(m, &run, s)?);
    }
    if let (Mode::RoundtripAdjoint, Some(fw), Some(bw)) = (m.mode, &run.forward, &run.backward) {
        checks.push(check_adjoint(m, &run, fw, bw)?);
    }
    for c in &checks {
        println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let report: Vec<Value> = checks.iter().map(|c| json!({ "check": c.name, "pass": c.pass, "detail": c.detail })).collect();
    dir.write_json("verify.json", &json!({ "checks": report }))?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(failed.join(", ")))
    }
}

/// Refinement study against the finest run, compared on the coarsest nodes.
pub fn converge(m: &RunManifest, n_list: Option<&[usize]>, out: &Path) -> Result<(), CliError> {
    let dir = OutDir::create(out, m)?;
    let base = m.grid.steps;
    let default = [base, 2 * base, 4 * base];
    let mut levels = n_list.unwrap_or(&default).to_vec();
    levels.sort_unstable();
    levels.dedup();
    if levels.len() < 2 {
        return Err(CliError::Manifest("the N list needs at least two distinct values".into()));
    }
    let finest = *levels.last().unwrap();
    if let Some(n) = levels.iter().find(|&&n| n == 0 || finest % n != 0) {
        return Err(CliError::Manifest(format!("N = {n} does not divide the finest N = {finest}")));
    }
    let coarsest = levels[0];
    let runs = levels
        .iter()
        .map(|&n| {
            let mut mm = m.clone();
            mm.grid.steps = n;
            let run = Run::execute(&mm)?;
            Ok(run.forward.or(run.backward).expect("every mode solves a direction"))
        })
        .collect::<Result<Vec<Solved>, CliError>>()?;
    let sample = |s: &Solved, n: usize| -> Vec<Complex64> {
        let stride = n / coarsest;
        s.solution.q.iter().flat_map(|q| (0..=coarsest).map(move |k| q[k * stride])).collect()
    };
    let reference = sample(runs.last().unwrap(), finest);
    let scale = reference.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let errors: Vec<Option<f64>> = levels
        .iter()
        .zip(&runs)
        .map(|(&n, s)| {
            (n != finest).then(|| sample(s, n).iter().zip(&reference).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / scale)
        })
        .collect();
    let mut table = String::from("n,residual_16,residual_33,error,order\n");
    let cell = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
    for (i, (&n, s)) in levels.iter().zip(&runs).enumerate() {
        let order = match (errors[i], errors.get(i + 1).copied().flatten()) {
            (Some(a), Some(b)) if levels[i + 1] == 2 * n && b > 0.0 => Some((a / b).log2()),
            _ => None,
        };
        let _ = writeln!(
            table,
            "{n},{},{},{},{}",
            cell(s.solution.residual_16),
            cell(s.solution.residual_33),
            cell(errors[i]),
            cell(order)
        );
    }
    print!("{table}");
    dir.write("converge.csv", table.as_bytes())
}

/// Runs every point of the sweep axis concurrently; failures are recorded
/// per point.
pub fn sweep(m: &RunManifest, out: &Path) -> Result<(), CliError> {
    let spec = m.sweep.clone().ok_or_else(|| CliError::Manifest("no [sweep] table".into()))?;
    if spec.values.is_empty() {
        return Err(CliError::Manifest("sweep.values is empty".into()));
    }
    let dir = OutDir::create(out, m)?;
    let outcomes: Vec<Result<Run, CliError>> = spec
        .values
        .par_iter()
        .enumerate()
        .map(|(i, &v)| {
            let point = m.with_parameter(spec.parameter, v)?;
            solve(&point, &dir.path(&format!("point_{i:03}")))
        })
        .collect();
    let parameter = serde_json::to_value(spec.parameter).expect("parameter serializes");
    let mut summary = String::from("index,parameter,value,status,residual_16,residual_33,max_modulus,error\n");
    let mut failed = 0;
    for (i, (v, outcome)) in spec.values.iter().zip(&outcomes).enumerate() {
        let name = parameter.as_str().unwrap_or_default();
        match outcome {
            Ok(run) => {
                let s = run.solved().next().expect("every mode solves a direction");
                let cell = |x: Option<f64>| x.map(|x| format!("{x:?}")).unwrap_or_default();
                let _ = writeln!(
                    summary,
                    "{i},{name},{v:?},ok,{},{},{:?},",
                    cell(s.solution.residual_16),
                    cell(s.solution.residual_33),
                    s.solution.max_modulus()
                );
            }
            Err(e) => {
                failed += 1;
                let message = e.to_string().replace('"', "'");
                let _ = writeln!(summary, "{i},{name},{v:?},failed,,,,\"{message}\"");
                eprintln!("{}", json!({ "sweep_point": i, "value": v, "failure": e.to_json() }));
            }
        }
    }
    dir.write("summary.csv", summary.as_bytes())?;
    println!("sweep: {} points, {failed} failed", spec.values.len());
    Ok(())
}
