use criterion::{criterion_group, criterion_main, Criterion};
use movpi_core::volterra::{assemble_datum, solve_forward};
use movpi_core::wavefunction::reconstruct;
use movpi_core::{GaussianPacket, InitialDatum, KGrid, SolverOptions, TimeGrid, Trajectory, TrajectorySet, Vec3};

fn configuration(moving: bool) -> (TrajectorySet, InitialDatum) {
    let curve = if moving {
        Trajectory::circular(Vec3::zeros(), 1.0, 1.0, 0.0, Vec3::z()).unwrap()
    } else {
        Trajectory::fixed(Vec3::zeros())
    };
    let set = TrajectorySet::new(vec![curve], 1.0).unwrap();
    let f = InitialDatum::single(GaussianPacket::at_rest(Vec3::new(0.0, 0.0, 4.0), 0.5).unwrap());
    (set, f)
}

fn quiet() -> SolverOptions {
    SolverOptions { residuals: false, ..Default::default() }
}

fn solver(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_forward");
    group.sample_size(10);
    for moving in [false, true] {
        let (set, f) = configuration(moving);
        for n in [200, 800] {
            let grid = TimeGrid::new(0.0, 1.0, n).unwrap();
            let name = format!("{}/N={n}", if moving { "circular" } else { "fixed" });
            group.bench_function(name, |b| b.iter(|| solve_forward(&f, &set, &[1.0], &grid, &quiet()).unwrap()));
        }
    }
    group.finish();

    let (set, f) = configuration(true);
    let grid = TimeGrid::new(0.0, 1.0, 400).unwrap();
    let mut group = c.benchmark_group("pipeline");
    group.sample_size(10);
    group.bench_function("datum/N=400", |b| b.iter(|| assemble_datum(&f, &set, &grid, 0).unwrap()));
    let sol = solve_forward(&f, &set, &[1.0], &grid, &quiet()).unwrap();
    let kg = KGrid::new(12.0, 32).unwrap();
    group.bench_function("reconstruct/M=32,N=400", |b| b.iter(|| reconstruct(&f, &sol, &set, kg, 1.0).unwrap()));
    group.bench_function("residuals/N=400", |b| {
        b.iter(|| solve_forward(&f, &set, &[1.0], &grid, &SolverOptions::default()).unwrap())
    });
    group.finish();
}

criterion_group!(benches, solver);
criterion_main!(benches);
