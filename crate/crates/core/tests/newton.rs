use std::f64::consts::PI;
use std::sync::OnceLock;

use adiaflow::criticals::{find_critical_points, CriticalPoint};
use adiaflow::fields::ScalarField;
use adiaflow::flows::*;
use adiaflow::grid::{NormKind, TangentField, TimeGrid};
use adiaflow::linops::random::*;
use adiaflow::linops::*;
use adiaflow::newton::*;
use adiaflow::problem::{unit_sphere, ProblemSetup};
use adiaflow::Error;
use nalgebra::DVector;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn ring(a: f64, b: f64, n: usize) -> Vec<DVector<f64>> {
    (0..n)
        .map(|k| {
            let t = 2.0 * PI * (k as f64 + 0.3) / n as f64;
            DVector::from_vec(vec![a * t.cos(), b * t.sin()])
        })
        .collect()
}

fn height_circle() -> ProblemSetup {
    let f = ScalarField::from_terms(2, &[(&[0, 1], 1.0)]).unwrap();
    ProblemSetup::new("height", f, unit_sphere(2).unwrap()).unwrap().with_seeds(ring(1.0, 1.0, 12))
}

/// H = x⁴ + x² + y² − 1, F = y: a constraint of degree four with
/// nondegenerate extrema of y at (0, ±1).
fn quartic() -> ProblemSetup {
    let f = ScalarField::from_terms(2, &[(&[0, 1], 1.0)]).unwrap();
    let h = ScalarField::from_terms(2, &[(&[4, 0], 1.0), (&[2, 0], 1.0), (&[0, 2], 1.0), (&[0, 0], -1.0)]).unwrap();
    ProblemSetup::new("quartic", f, h).unwrap().with_seeds(ring(1.0, 1.0, 24))
}

fn ends(setup: &ProblemSetup) -> (CriticalPoint, CriticalPoint) {
    let c = find_critical_points(setup, &setup.seeds).unwrap();
    (c[0].clone(), c[c.len() - 1].clone())
}

fn connecting(setup: &ProblemSetup, t: f64, n: usize, sign: f64) -> BasePath {
    let (a, b) = ends(setup);
    let opts = BaseFlowOptions {
        sign,
        ..Default::default()
    };
    integrate_base_flow_with(setup, &a, &b, TimeGrid::new(t, n).unwrap(), &opts).unwrap()
}

fn circle() -> &'static (ProblemSetup, BasePath) {
    static C: OnceLock<(ProblemSetup, BasePath)> = OnceLock::new();
    C.get_or_init(|| {
        let setup = ProblemSetup::builtin("circle").unwrap();
        let p = connecting(&setup, 12.0, 1200, 1.0);
        (setup, p)
    })
}

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(11)
}

fn opts() -> NewtonOptions {
    NewtonOptions::default()
}

#[test]
fn section_derivative_at_origin_is_the_linearized_operator() {
    let (setup, p) = circle();
    let sigma = p.multipliers().unwrap();
    let mut r = rng();
    for eps in [1.0, 0.1] {
        let op = assemble_deps(setup, p, eps, Variant::Operator).unwrap();
        for _ in 0..3 {
            let dir = random_ambient_field(p.grid, 2, &mut r);
            let h = 1e-6;
            let plus = trivialized_section(setup, p, &sigma, eps, &dir.scaled(h)).unwrap().to_flat();
            let minus = trivialized_section(setup, p, &sigma, eps, &dir.scaled(-h)).unwrap().to_flat();
            let fd = (plus - minus) / (2.0 * h);
            let exact = op.apply(&dir.to_flat());
            let err = op.norm_codomain(&(&fd - &exact)) / op.norm_codomain(&exact);
            assert!(err <= 1e-6, "eps {eps}: {err:.3e}");
        }
    }
}

#[test]
fn section_derivative_away_from_origin() {
    let (setup, p) = circle();
    let sigma = p.multipliers().unwrap();
    let mut r = rng();
    let eps = 0.2;
    let z = random_ambient_field(p.grid, 2, &mut r).scaled(0.05);
    let at = assemble_deps_at(setup, &displaced_path(p, &sigma, &z).unwrap(), eps, Variant::Operator).unwrap();
    let dir = random_ambient_field(p.grid, 2, &mut r);
    let h = 1e-6;
    let plus = trivialized_section(setup, p, &sigma, eps, &z.sub(&dir.scaled(-h))).unwrap().to_flat();
    let minus = trivialized_section(setup, p, &sigma, eps, &z.sub(&dir.scaled(h))).unwrap().to_flat();
    let fd = (plus - minus) / (2.0 * h);
    let exact = at.apply(&dir.to_flat());
    assert!(at.norm_codomain(&(&fd - &exact)) <= 1e-6 * at.norm_codomain(&exact));
}

#[test]
fn section_at_origin_on_the_height_circle() {
    // χ = −y/2 and ∂_s q = −tan(0, 1), so dχ(q)∂_s q = x²/2; at (±1, 0) it is 1/2.
    let setup = height_circle();
    let p = connecting(&setup, 12.0, 1200, 1.0);
    let sigma = p.multipliers().unwrap();
    let z = TangentField::zeros(p.grid, 2, adiaflow::grid::Placement::HalfNodes);
    let r = trivialized_section(&setup, &p, &sigma, 0.1, &z).unwrap();
    assert!(r.v.iter().all(|v| v.norm() <= 1e-10));
    let mid = (1..p.grid.n)
        .min_by(|&a, &b| p.points[a][1].abs().total_cmp(&p.points[b][1].abs()))
        .unwrap();
    assert!((p.points[mid][0].abs() - 1.0).abs() < 1e-3);
    for j in 1..p.grid.n {
        let x = p.points[j][0];
        assert!((r.h[j] - 0.5 * x * x).abs() <= 1e-3, "node {j}: {} vs {}", r.h[j], 0.5 * x * x);
    }
    assert!((r.h[mid] - 0.5).abs() <= 1e-3);
}

#[test]
fn section_vanishes_on_a_stationary_path() {
    let setup = ProblemSetup::builtin("circle").unwrap();
    let (a, _) = ends(&setup);
    let p = BasePath::stationary(&setup, TimeGrid::new(5.0, 100).unwrap(), &a).unwrap();
    let sigma = p.multipliers().unwrap();
    let z = TangentField::zeros(p.grid, 2, adiaflow::grid::Placement::HalfNodes);
    let r = trivialized_section(&setup, &p, &sigma, 0.3, &z).unwrap();
    assert!(r.norm(0.3) <= 1e-14);
}

#[test]
fn section_reports_domain_exit() {
    let (setup, p) = circle();
    let sigma = p.multipliers().unwrap();
    let mut z = TangentField::zeros(p.grid, 2, adiaflow::grid::Placement::HalfNodes);
    z.x[17][0] = 10.0;
    assert!(matches!(trivialized_section(setup, p, &sigma, 0.1, &z), Err(Error::DomainExit(17))));
}

#[test]
fn right_inverse_identity_zero_and_minimum_norm() {
    let (setup, p) = circle();
    let eps = 0.1;
    let op = assemble_deps(setup, p, eps, Variant::Operator).unwrap();
    let ri = RightInverse::new(&op).unwrap();
    assert!(!ri.jitter_used);
    let mut r = rng();
    let rhs = random_residual_field(p.grid, 2, &mut r).to_flat();
    let zeta = ri.apply(&rhs);
    assert!(op.norm_codomain(&(op.apply(&zeta) - &rhs)) <= 1e-10 * op.norm_codomain(&rhs));
    assert!(op.norm_domain(&(op.project(&zeta) - &zeta)) <= 1e-12 * op.norm_domain(&zeta));
    assert_eq!(ri.apply(&DVector::zeros(op.codomain_dim())).norm(), 0.0);

    // Any other admissible preimage is at least as long.
    let fred = fredholm_index_estimate(&op, DEFAULT_RANK_TOL).unwrap();
    let k = fred.kernel.unwrap();
    assert!(op.dot_domain(&zeta, &k).abs() <= 1e-8 * op.norm_domain(&zeta) * op.norm_domain(&k));
    for _ in 0..100 {
        let z0 = op.project(&random_vector(op.domain_dim(), &mut r));
        let z = ri.apply(&op.apply(&z0));
        assert!(op.norm_domain(&z) <= op.norm_domain(&z0) * (1.0 + 1e-12));
        let alt = &z + &k * (random_vector(1, &mut r)[0] * op.norm_domain(&z));
        assert!(op.norm_domain(&z) <= op.norm_domain(&alt) * (1.0 + 1e-12));
    }
}

#[test]
fn reversed_pair_is_not_surjective() {
    let (setup, p) = circle();
    let points = p.points.iter().rev().cloned().collect();
    let rev = BasePath::new(setup, p.grid, points, p.x_plus.clone(), p.x_minus.clone()).unwrap();
    let op = assemble_deps(setup, &rev, 0.2, Variant::Operator).unwrap();
    assert!(matches!(RightInverse::new(&op), Err(Error::NotSurjective(_))));
    assert!(matches!(newton_iterate(setup, &rev, 0.2, &opts()), Err(Error::NotSurjective(_))));
    assert!(matches!(RightInverse::new(&op.adjoint()), Err(Error::Config(_))));
}

#[test]
fn newton_converges_geometrically_on_the_circle() {
    let (setup, p) = circle();
    let rep = newton_iterate(setup, p, 0.1, &opts()).unwrap();
    assert!(rep.converged && rep.residual_final <= 1e-10);
    assert!(rep.iterations.len() <= 6);
    for s in &rep.iterations[1..] {
        assert!(s.contraction_factor <= 0.5);
    }
    // The limit is a sum of adjoint-range corrections, hence orthogonal to
    // the kernel of the frozen operator.
    let op = assemble_deps(setup, p, 0.1, Variant::Operator).unwrap();
    let k = fredholm_index_estimate(&op, DEFAULT_RANK_TOL).unwrap().kernel.unwrap();
    let z = rep.z_final.to_flat();
    assert!(op.dot_domain(&z, &k).abs() <= 1e-8 * op.norm_domain(&z) * op.norm_domain(&k));
    assert_eq!(rep.norm_z_12eps, rep.z_final.eps_norm(0.1, NormKind::N12));

    let big = newton_iterate(setup, p, 1.0, &opts()).unwrap();
    assert!(big.converged && big.norm_z_12eps > 10.0 * rep.norm_z_12eps);
}

#[test]
fn full_newton_reaches_a_zero_too() {
    let (setup, p) = circle();
    let o = NewtonOptions {
        full_newton: true,
        ..opts()
    };
    let rep = newton_iterate(setup, p, 0.5, &o).unwrap();
    assert!(rep.converged);
    assert!(rep.iterations.len() <= newton_iterate(setup, p, 0.5, &opts()).unwrap().iterations.len());
}

#[test]
fn newton_rejects_a_malformed_start() {
    let (setup, p) = circle();
    let o = NewtonOptions {
        initial: Some(DVector::zeros(5)),
        ..opts()
    };
    assert!(matches!(newton_iterate(setup, p, 0.1, &o), Err(Error::Config(_))));
}

#[test]
fn t_eps_output_is_an_eps_trajectory_with_the_right_energy() {
    let setup = ProblemSetup::builtin("circle").unwrap();
    let p = connecting(&setup, 14.0, 1400, 1.0);
    let (z, rep) = t_eps(&setup, &p, 0.1, &opts()).unwrap();
    let c_star = p.x_minus.f_value - p.x_plus.f_value;
    assert!((c_star - 2.0).abs() < 1e-12);
    assert!((eps_energy(&setup, 0.1, &z).unwrap() - 2.0).abs() <= 1e-3);
    assert!(residual_section_eps(&setup, 0.1, &z).unwrap().norm(0.1) <= 1e-10);
    let (l, r) = z.boundary_deviation();
    assert!(l <= BOUNDARY_TOL && r <= BOUNDARY_TOL, "{l:.3e} {r:.3e}");
    let sigma = p.multipliers().unwrap();
    for j in 0..p.grid.n {
        assert!((z.tau[j] - sigma[j] - rep.z_final.ell[j]).abs() <= 1e-15);
    }
}

#[test]
fn t_eps_commutes_with_time_shift() {
    let setup = ProblemSetup::builtin("circle").unwrap();
    let long = connecting(&setup, 14.0, 1400, 1.0);
    let a = long.window(&setup, 100, 1200).unwrap();
    let (za, _) = t_eps(&setup, &a, 0.1, &opts()).unwrap();
    for k in [10, 40] {
        let b = long.window(&setup, 100 + k, 1200).unwrap();
        let (zb, _) = t_eps(&setup, &b, 0.1, &opts()).unwrap();
        let worst = (100..=1100 - k).map(|j| (&za.u[j + k] - &zb.u[j]).norm()).fold(0.0, f64::max);
        assert!(worst <= 1e-9, "shift {k}: {worst:.3e}");
    }
}

#[test]
fn t_eps_agrees_with_the_integrated_eps_flow() {
    let (setup, p) = circle();
    for eps in [1.0, 0.5] {
        let (z, _) = t_eps(setup, p, eps, &opts()).unwrap();
        let flow = integrate_eps_flow(setup, &p.x_minus, &p.x_plus, eps, p.grid, &EpsFlowOptions::default()).unwrap();
        let d = flow_agreement(setup, &z, &flow.dense).unwrap();
        assert!(d <= 1e-3, "eps {eps}: {d:.3e}");
    }
}

#[test]
fn correction_scales_like_eps_squared() {
    let (setup, p) = circle();
    let s = scaling_study(setup, p, &[0.2, 0.1, 0.05, 0.025, 0.0125], &opts()).unwrap();
    assert!(s.slope_z_12eps >= 1.8, "{}", s.slope_z_12eps);
    assert!(s.slope_x_inf >= 1.5 && s.slope_ell_inf >= 0.5);
    assert_eq!(s.rows.len(), 5);
    assert!(s.to_csv().starts_with("eps,norm_Z_12eps,norm_X_inf,norm_ell_inf,iterations,residual\n"));
    assert_eq!(s.to_csv().lines().count(), 6);
}

#[test]
fn scaling_study_needs_data() {
    let (setup, p) = circle();
    let short = scaling_study(setup, p, &[0.1], &opts());
    assert!(matches!(short, Err(Error::InsufficientData(_))));
    let narrow = scaling_study(setup, p, &[0.2, 0.1, 0.05], &opts());
    assert!(matches!(narrow, Err(Error::InsufficientData(_))));
    let (a, _) = ends(setup);
    let still = BasePath::stationary(setup, TimeGrid::new(5.0, 100).unwrap(), &a).unwrap();
    assert!(matches!(scaling_study(setup, &still, &[0.5, 0.05], &opts()), Err(Error::InsufficientData(_))));
}

#[test]
fn loglog_slope_of_a_power() {
    let x = [1.0, 0.5, 0.25];
    let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.7)).collect();
    assert!((loglog_slope(&x, &y) - 1.7).abs() < 1e-12);
}

#[test]
fn perturbed_starts_return_to_the_same_zero() {
    let (setup, p) = circle();
    let rep = uniqueness_probe(setup, p, 0.1, 20, 0.05, &opts(), &mut rng()).unwrap();
    assert_eq!(rep.distances.len(), 20);
    assert!(rep.max_distance <= UNIQUENESS_TOL);
    let radius = 0.05 * 0.1f64.sqrt();
    assert!(rep.start_offsets.iter().all(|&o| o > 0.4 * radius && o <= radius * (1.0 + 1e-12)));

    let zero = uniqueness_probe(setup, p, 0.1, 3, 0.0, &opts(), &mut rng()).unwrap();
    assert!(zero.distances.iter().all(|d| *d == Some(0.0)));

    // Far outside the ball nothing is claimed; only the outcome is logged.
    match uniqueness_probe(setup, p, 0.1, 3, 10.0, &opts(), &mut rng()) {
        Ok(r) => eprintln!("far starts: max distance {:.3e}", r.max_distance),
        Err(e) => eprintln!("far starts: {e}"),
    }
}

#[test]
fn quadratic_constraint_gives_exact_quadratic_remainder() {
    // H = |x|² − 1: the constraint row of the remainder is |X̂|²/ε² and that
    // of the derivative difference 2⟨X, X̂⟩/ε².
    let (setup, p) = circle();
    let rep = quadratic_remainder_check(setup, p, 0.1, 5, 0.1, &mut rng()).unwrap();
    for s in &rep.constraint_row_slopes {
        assert!((s - 2.0).abs() <= 1e-6, "{s}");
    }
    assert!(rep.min_remainder_slope() >= 1.9);
    assert!(rep.min_derivative_slope() >= 0.9);
    assert!(rep.remainder_constant <= 1.0 + 1e-9);
    assert!(rep.derivative_constant <= 2.0 + 1e-9);
}

#[test]
fn remainder_vanishes_for_zero_step() {
    let (setup, p) = circle();
    let mut r = rng();
    let z = random_ambient_field(p.grid, 2, &mut r).scaled(0.05);
    let zero = z.scaled(0.0);
    assert_eq!(quadratic_remainder(setup, p, 0.2, &z, &zero).unwrap().norm(0.2), 0.0);
    assert_eq!(derivative_difference(setup, p, 0.2, &zero, &z).unwrap().norm(0.2), 0.0);
}

#[test]
fn quartic_constraint_remainders_and_newton() {
    let setup = quartic();
    let p = connecting(&setup, 12.0, 1200, 1.0);
    let rep = quadratic_remainder_check(&setup, &p, 0.1, 5, 0.05, &mut rng()).unwrap();
    assert!(rep.min_remainder_slope() >= 1.9, "{:?}", rep.remainder_slopes);
    assert!(rep.min_derivative_slope() >= 0.9, "{:?}", rep.derivative_slopes);
    let n = newton_iterate(&setup, &p, 0.1, &opts()).unwrap();
    assert!(n.converged);
}

#[test]
fn distinct_orbits_stay_distinct() {
    let setup = height_circle();
    let a = connecting(&setup, 12.0, 1200, 1.0);
    let b = connecting(&setup, 12.0, 1200, -1.0);
    assert!(a.points[600][0] * b.points[600][0] < 0.0);
    let rep = injectivity_check(&setup, &a, &b, 0.1, &opts()).unwrap();
    assert!(rep.distinct, "{rep:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn right_inverse_solves_random_equations(seed in any::<u64>(), eps in 0.02f64..1.0) {
        let (setup, p) = circle();
        let op = assemble_deps(setup, p, eps, Variant::Operator).unwrap();
        let ri = RightInverse::new(&op).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let rhs = random_vector(op.codomain_dim(), &mut r);
        let z = ri.apply(&rhs);
        prop_assert!(op.norm_codomain(&(op.apply(&z) - &rhs)) <= 1e-10 * op.norm_codomain(&rhs));
    }
}
