mod common;

use std::f64::consts::PI;

use common::*;
use movpi_core::volterra::{residual_integrodifferential, solve_backward, solve_forward};
use movpi_core::wavefunction::{psi_fourier, reconstruct};
use movpi_core::*;
use proptest::prelude::*;

fn fixed(points: &[Vec3]) -> TrajectorySet {
    TrajectorySet::new(points.iter().map(|p| Trajectory::fixed(*p)).collect(), 1.0).unwrap()
}

/// At rest, eight widths from the origin.
fn distant_packet() -> InitialDatum {
    InitialDatum::single(GaussianPacket::at_rest(Vec3::new(0.0, 0.0, 4.0), 0.5).unwrap())
}

fn moving_packet() -> InitialDatum {
    InitialDatum::single(
        GaussianPacket::new(Vec3::new(2.5, 0.5, 0.0), 0.5, Vec3::new(-2.0, 0.0, 0.5), C64::new(0.8, 0.3)).unwrap(),
    )
}

fn quiet() -> SolverOptions {
    SolverOptions { residuals: false, ..Default::default() }
}

fn grid(n: usize) -> TimeGrid {
    TimeGrid::new(0.0, 1.0, n).unwrap()
}

fn max_gap(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn max_norm(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[test]
fn zero_datum_gives_exactly_zero() {
    let set = orbit_set();
    let f = InitialDatum::new(vec![]);
    let sol = solve_forward(&f, &set, &[1.0], &grid(50), &SolverOptions::default()).unwrap();
    assert!(sol.q[0].iter().all(|z| *z == C64::new(0.0, 0.0)));
}

#[test]
fn charges_are_linear_in_the_datum() {
    let set = fixed(&[Vec3::zeros(), Vec3::new(1.5, 0.0, 0.0)]);
    let f1 = moving_packet();
    let f2 = distant_packet();
    let c = C64::new(-0.7, 1.9);
    let both = InitialDatum::new(f1.scaled(c).packets.iter().chain(&f2.packets).cloned().collect());
    let g = grid(200);
    let a = solve_forward(&f1, &set, &[1.0, 0.5], &g, &quiet()).unwrap();
    let b = solve_forward(&f2, &set, &[1.0, 0.5], &g, &quiet()).unwrap();
    let ab = solve_forward(&both, &set, &[1.0, 0.5], &g, &quiet()).unwrap();
    for j in 0..2 {
        let expected: Vec<C64> = a.q[j].iter().zip(&b.q[j]).map(|(x, y)| x * c + y).collect();
        assert!(max_gap(&ab.q[j], &expected) <= 1e-12 * max_norm(&expected));
    }
}

#[test]
fn solutions_are_causal() {
    let set = orbit_set();
    let f = moving_packet();
    let long = grid(300);
    let short = long.truncated(120).unwrap();
    let full = solve_forward(&f, &set, &[1.0], &long, &quiet()).unwrap();
    let head = solve_forward(&f, &set, &[1.0], &short, &quiet()).unwrap();
    let gap = max_gap(&full.q[0][..=120], &head.q[0]);
    assert!(gap <= 1e-13 * max_norm(&head.q[0]).max(1e-300), "{gap}");
}

#[test]
fn backward_datum_matches_quadrature() {
    // with α = 0 the backward charge is the conjugate-branch datum
    // (4√π/√i) ∫_τ^T g(σ − T)(y) (σ − τ)^{−1/2} dσ
    let set = fixed(&[Vec3::zeros()]);
    let g = moving_packet();
    let grid = grid(400);
    let sol = solve_backward(&g, &set, &[0.0], &grid, &quiet()).unwrap();
    let c = 4.0 * PI.sqrt() * C64::from_polar(1.0, -PI / 4.0);
    let end = grid.end();
    let scale = sol.max_modulus();
    for k in [0, 100, 250, 360] {
        let tau = grid.node(k);
        let oracle = adaptive(|u| g.free_evolution(tau + u * u - end, &Vec3::zeros()) * 2.0, 0.0, (end - tau).sqrt(), 1e-14) * c;
        assert!((sol.q[0][k] - oracle).norm() <= 1e-8 * scale, "τ={tau}: {} vs {oracle}", sol.q[0][k]);
    }
    assert_eq!(sol.q[0][400], C64::new(0.0, 0.0));
}

#[test]
fn backward_solve_is_the_time_reflection_of_the_forward_solve() {
    let set = fixed(&[Vec3::zeros()]);
    let f = moving_packet();
    let g = grid(200);
    let forward = solve_forward(&f, &set, &[1.0], &g, &quiet()).unwrap();
    let backward = solve_backward(&f.conjugated(), &set, &[1.0], &g, &quiet()).unwrap();
    let reflected: Vec<C64> = forward.q[0].iter().rev().map(|z| z.conj()).collect();
    assert!(max_gap(&backward.q[0], &reflected) <= 1e-12 * max_norm(&reflected));
}

#[test]
fn backward_charges_respect_mirror_symmetry() {
    let set = fixed(&[Vec3::new(-1.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0)]);
    let g = InitialDatum::single(
        GaussianPacket::new(Vec3::new(0.0, 2.0, -1.0), 0.4, Vec3::new(0.0, 1.0, 0.5), C64::new(1.0, 0.0)).unwrap(),
    );
    let sol = solve_backward(&g, &set, &[1.0, 1.0], &grid(300), &quiet()).unwrap();
    assert!(max_gap(&sol.q[0], &sol.q[1]) <= 1e-10 * sol.max_modulus());
}

#[test]
fn staggered_residual_converges_at_second_order() {
    let set = fixed(&[Vec3::zeros()]);
    let f = distant_packet();
    let r: Vec<f64> = [500, 1000, 2000]
        .iter()
        .map(|&n| solve_forward(&f, &set, &[1.0], &grid(n), &SolverOptions::default()).unwrap().residual_16.unwrap())
        .collect();
    assert!(r.windows(2).all(|w| w[1] <= 0.5 * w[0]), "{r:?}");
    assert!(r[2] <= 1e-6, "{r:?}");
}

#[test]
fn integro_differential_residual_decreases_for_moving_and_fixed_centers() {
    let f = distant_packet();
    let fixed_set = fixed(&[Vec3::zeros()]);
    let orbit = orbit_set();
    let mut last = (f64::INFINITY, f64::INFINITY);
    for n in [250, 500, 1000] {
        let a = solve_forward(&f, &fixed_set, &[1.0], &grid(n), &SolverOptions::default()).unwrap();
        let b = solve_forward(&f, &orbit, &[1.0], &grid(n), &SolverOptions::default()).unwrap();
        let (ra, rb) = (a.residual_33.unwrap(), b.residual_33.unwrap());
        assert_eq!(ra, residual_integrodifferential(&a, &f, &fixed_set).unwrap());
        assert!(ra <= 0.5 * last.0 && rb <= 0.5 * last.1, "N={n}: {ra} {rb} after {last:?}");
        // the moving center is no harder than the fixed one
        assert!(rb <= 3.0 * ra && ra <= 3.0 * rb, "N={n}: {ra} vs {rb}");
        last = (ra, rb);
    }
}

// ---------------------------------------------------------------------------
// reconstruction

#[test]
fn free_flow_keeps_its_norm() {
    let set = TrajectorySet::new(vec![], 0.0).unwrap();
    let f = moving_packet();
    let kg = KGrid::for_datum(&f, 48).unwrap();
    let sol = solve_forward(&f, &set, &[], &grid(20), &quiet()).unwrap();
    for t in [0.0, 0.35, 1.0] {
        let field = reconstruct(&f, &sol, &set, kg, t).unwrap();
        assert!((field.norm - f.norm()).abs() <= 1e-6 * f.norm(), "t={t}: {} vs {}", field.norm, f.norm());
    }
}

#[test]
fn start_field_is_the_sampled_datum() {
    let set = orbit_set();
    let f = moving_packet();
    let kg = KGrid::new(10.0, 16).unwrap();
    let sol = solve_forward(&f, &set, &[1.0], &grid(40), &quiet()).unwrap();
    let field = reconstruct(&f, &sol, &set, kg, 0.0).unwrap();
    let sampled = WaveField::from_datum(&f, kg, Domain::Momentum, 0.0).unwrap();
    assert_eq!(field.samples, sampled.samples);
}

#[test]
fn reconstruction_only_sees_the_past() {
    let set = orbit_set();
    let f = moving_packet();
    let kg = KGrid::new(10.0, 16).unwrap();
    let long = solve_forward(&f, &set, &[1.0], &grid(200), &quiet()).unwrap();
    let short = solve_forward(&f, &set, &[1.0], &grid(200).truncated(100).unwrap(), &quiet()).unwrap();
    let a = reconstruct(&f, &long, &set, kg, 0.5).unwrap();
    let b = reconstruct(&f, &short, &set, kg, 0.5).unwrap();
    assert!(max_gap(&a.samples, &b.samples) <= 1e-12 * max_norm(&a.samples));
}

#[test]
fn zero_momentum_is_a_plain_charge_integral() {
    let set = fixed(&[Vec3::zeros(), Vec3::new(0.0, 1.5, 0.0)]);
    let f = moving_packet();
    let g = grid(120);
    let sol = solve_forward(&f, &set, &[1.0, 2.0], &g, &quiet()).unwrap();
    let t = g.node(90);
    let h = g.step();
    let trapezoid: C64 = sol.q.iter().map(|q| (0..90).map(|m| (q[m] + q[m + 1]) * (0.5 * h)).sum::<C64>()).sum();
    let expected = f.fourier_transform(&Vec3::zeros()) + C64::new(0.0, 1.0) * trapezoid / (2.0 * PI).powf(1.5);
    let got = psi_fourier(&f, &sol, &set, &Vec3::zeros(), t).unwrap();
    assert!((got - expected).norm() <= 1e-13 * expected.norm(), "{got} vs {expected}");
}

#[test]
fn position_space_matches_free_evolution() {
    let f = moving_packet();
    let kg = KGrid::new(12.0, 64).unwrap();
    let t = 0.15;
    let sampled = WaveField::from_datum(&f, kg, Domain::Momentum, t).unwrap();
    let evolved: Vec<C64> = (0..kg.len())
        .map(|i| sampled.samples[i] * C64::new(0.0, -kg.k_vector(i).norm_squared() * t).exp())
        .collect();
    let field = WaveField::new(kg, Domain::Momentum, t, evolved).unwrap();
    let x = field.to_position_space().unwrap();
    assert!((x.norm - field.norm).abs() <= 1e-12 * field.norm);
    let expected: Vec<C64> = (0..kg.len()).map(|i| f.free_evolution(t, &kg.x_vector(i))).collect();
    let err = max_gap(&x.samples, &expected) / max_norm(&expected);
    assert!(err <= 1e-8, "{err}");
}

#[test]
fn inner_product_is_hermitian() {
    let kg = KGrid::new(10.0, 16).unwrap();
    let a = WaveField::from_datum(&moving_packet(), kg, Domain::Momentum, 0.0).unwrap();
    let b = WaveField::from_datum(&distant_packet(), kg, Domain::Momentum, 0.0).unwrap();
    let ab = a.inner_product(&b).unwrap();
    let ba = b.inner_product(&a).unwrap();
    assert!((ab - ba.conj()).norm() <= 1e-15 * a.norm * b.norm);
    let aa = a.inner_product(&a).unwrap();
    assert!((aa.re - a.norm * a.norm).abs() <= 1e-13 * aa.re && aa.im.abs() <= 1e-15 * aa.re);
}

// ---------------------------------------------------------------------------
// randomized invariants

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn scaling_the_datum_scales_the_charges(re in -3.0..3.0f64, im in -3.0..3.0f64, x in 2.0..4.0f64, alpha in 0.2..3.0f64) {
        let set = fixed(&[Vec3::zeros()]);
        let f = InitialDatum::single(GaussianPacket::new(Vec3::new(x, 0.3, -0.2), 0.5, Vec3::new(-1.0, 0.0, 0.0), C64::new(1.0, 0.0)).unwrap());
        let c = C64::new(re, im);
        let g = grid(80);
        let a = solve_forward(&f, &set, &[alpha], &g, &quiet()).unwrap();
        let b = solve_forward(&f.scaled(c), &set, &[alpha], &g, &quiet()).unwrap();
        let expected: Vec<C64> = a.q[0].iter().map(|z| z * c).collect();
        prop_assert!(max_gap(&b.q[0], &expected) <= 1e-12 * max_norm(&expected).max(1e-300));
    }

    #[test]
    fn mirror_symmetric_configurations_give_equal_charges(d in 0.6..2.0f64, y in 1.5..3.0f64, z in -1.0..1.0f64, alpha in 0.2..3.0f64) {
        let set = fixed(&[Vec3::new(-d, 0.0, 0.0), Vec3::new(d, 0.0, 0.0)]);
        let f = InitialDatum::single(GaussianPacket::new(Vec3::new(0.0, y, z), 0.4, Vec3::new(0.0, -1.0, 0.3), C64::new(1.0, 0.0)).unwrap());
        let sol = solve_forward(&f, &set, &[alpha, alpha], &grid(80), &quiet()).unwrap();
        prop_assert!(max_gap(&sol.q[0], &sol.q[1]) <= 1e-10 * sol.max_modulus().max(1e-300));
    }
}
