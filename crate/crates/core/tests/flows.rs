use std::f64::consts::PI;

use adiaflow::criticals::{find_critical_points, CriticalPoint};
use adiaflow::fields::ScalarField;
use adiaflow::flows::*;
use adiaflow::grid::TimeGrid;
use adiaflow::problem::{unit_sphere, ProblemSetup};
use adiaflow::Error;
use nalgebra::DVector;

fn height_circle() -> ProblemSetup {
    let f = ScalarField::from_terms(2, &[(&[0, 1], 1.0)]).unwrap();
    let seeds = (0..12)
        .map(|k| {
            let a = 2.0 * PI * (k as f64 + 0.3) / 12.0;
            DVector::from_vec(vec![a.cos(), a.sin()])
        })
        .collect();
    ProblemSetup::new("height", f, unit_sphere(2).unwrap()).unwrap().with_seeds(seeds)
}

fn max_and_min(setup: &ProblemSetup) -> (CriticalPoint, CriticalPoint) {
    let c = find_critical_points(setup, &setup.seeds).unwrap();
    (c[0].clone(), c[c.len() - 1].clone())
}

fn base(setup: &ProblemSetup, t: f64, n: usize) -> BasePath {
    let (a, b) = max_and_min(setup);
    integrate_base_flow(setup, &a, &b, TimeGrid::new(t, n).unwrap(), 1e-5).unwrap()
}

#[test]
fn height_circle_matches_closed_form() {
    let setup = height_circle();
    let p = base(&setup, 12.0, 1200);
    let side = p.points[p.grid.mid()][0].signum();
    let mut err: f64 = 0.0;
    for (j, q) in p.points.iter().enumerate() {
        let phi = 2.0 * p.grid.node(j).exp().atan();
        err = err.max((q[0] - side * phi.sin()).abs().max((q[1] - phi.cos()).abs()));
    }
    assert!(err < 1e-3, "deviation from 2 arctan e^s: {err:e}");
    let q0 = &p.points[p.grid.mid()];
    assert!((q0[0].abs() - 1.0).abs() < 1e-8 && q0[1].abs() < 1e-8);
}

#[test]
fn base_energy_identity_converges_quadratically() {
    let setup = ProblemSetup::builtin("circle").unwrap();
    let errs: Vec<f64> = [1200, 2400]
        .iter()
        .map(|&n| (base_energy(&base(&setup, 12.0, n)) - 2.0).abs())
        .collect();
    assert!(errs[0] <= 1e-3, "E0 residual {:e}", errs[0]);
    assert!(errs[0] / errs[1] >= 3.5, "refinement ratio {}", errs[0] / errs[1]);
}

#[test]
fn base_flow_descends_and_respects_oscillation() {
    // The ellipse decays at rate 1/4 near its critical points and needs a
    // longer window.
    for (name, t) in [("circle", 14.0), ("ellipse", 40.0)] {
        let setup = ProblemSetup::builtin(name).unwrap();
        let p = base(&setup, t, 100 * t as usize);
        let f: Vec<f64> = p.points.iter().map(|q| setup.f.eval(q.as_slice()).unwrap()).collect();
        assert!(f.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{name}: f increases");
        let h = p.points.iter().map(|q| setup.h.eval(q.as_slice()).unwrap().abs()).fold(0.0, f64::max);
        assert!(h <= 1e-10, "{name}: |H| = {h:e}");
        let (l, r) = p.boundary_deviation();
        assert!(l <= BOUNDARY_TOL && r <= BOUNDARY_TOL, "{name}: boundary {l:e} {r:e}");
        let osc = p.x_minus.f_value - p.x_plus.f_value;
        let rep = energy_identity_residual(base_energy(&p), &p.x_minus, &p.x_plus, Some(osc));
        assert!(rep.residual <= 1e-3, "{name}: residual {:e}", rep.residual);
        assert!(rep.oscillation_ok);
    }
}

#[test]
fn same_endpoints_have_no_connection() {
    let setup = ProblemSetup::builtin("circle").unwrap();
    let (a, _) = max_and_min(&setup);
    let g = TimeGrid::new(12.0, 200).unwrap();
    assert!(matches!(integrate_base_flow(&setup, &a, &a, g, 1e-5), Err(Error::NoConnection(_))));
}

#[test]
fn stationary_paths_have_zero_energy_and_residual() {
    let setup = ProblemSetup::builtin("circle").unwrap();
    let (a, _) = max_and_min(&setup);
    let g = TimeGrid::new(12.0, 200).unwrap();
    let p = BasePath::stationary(&setup, g, &a).unwrap();
    assert!(base_energy(&p).abs() < 1e-24);
    assert!(residual_section_base(&p).x_inf() < 1e-12);
    let z = AmbientPath::embed_chi(&p);
    assert!(eps_energy(&setup, 0.5, &z).unwrap().abs() < 1e-24);
    assert!(residual_section_eps(&setup, 0.5, &z).unwrap().norm(0.5) < 1e-12);
    let rep = energy_identity_residual(0.0, &a, &a, None);
    assert_eq!(rep.residual, 0.0);
}

#[test]
fn doubled_speed_path_has_five_quarters_energy() {
    // q(2s) doubles |q'| and halves the time spent: ½∫(4|q'|² + |∇f|²)(2s) ds
    // = (2 + ½)·½∫|∇f|² = 5/4·E⁰ for a flow line.
    let setup = height_circle();
    let p = base(&setup, 12.0, 1200);
    let n = p.grid.n as i64;
    let points = (0..=n)
        .map(|j| p.points[(n / 2 + 2 * (j - n / 2)).clamp(0, n) as usize].clone())
        .collect();
    let fast = BasePath::new(&setup, p.grid, points, p.x_minus.clone(), p.x_plus.clone()).unwrap();
    let e = base_energy(&fast);
    assert!((e - 2.5).abs() < 1e-2, "E0 of q(2s) = {e}");
}

#[test]
fn base_residual_section_is_second_order() {
    let setup = ProblemSetup::builtin("circle").unwrap();
    let r: Vec<f64> = [600, 1200]
        .iter()
        .map(|&n| residual_section_base(&base(&setup, 12.0, n)).x_l2_sq().sqrt())
        .collect();
    assert!(r[1] < 1e-3, "residual {:e}", r[1]);
    assert!(r[0] / r[1] > 3.0, "ratio {}", r[0] / r[1]);
}

#[test]
fn embedded_path_section_is_derivative_of_chi() {
    // On the height circle χ(q) = −y/2, so along q' = (0, −1) at q = (1, 0)
    // the second row equals 1/2 and the first row vanishes. With the discrete
    // multipliers σ the first row vanishes to roundoff, with averaged χ to
    // O(ds²).
    let setup = height_circle();
    let p = base(&setup, 12.0, 1200);
    let first_row = |z: &AmbientPath, eps: f64| {
        let r = residual_section_eps(&setup, eps, z).unwrap();
        assert!((r.h[p.grid.mid()] - 0.5).abs() < 1e-3, "{}", r.h[p.grid.mid()]);
        r.v.iter().map(|v| v.amax()).fold(0.0, f64::max)
    };
    let by_chi = AmbientPath::embed_chi(&p);
    let by_sigma = AmbientPath::embedded(&p, p.multipliers().unwrap()).unwrap();
    for eps in [1.0, 0.1] {
        let (c, s) = (first_row(&by_chi, eps), first_row(&by_sigma, eps));
        assert!(c < 1e-4, "first row {c:e}");
        assert!(s < 1e-11, "first row {s:e}");
    }
}

#[test]
fn embedded_energy_adds_chi_variation() {
    // E^ε(q, χ(q)) = E⁰ + ε²/2·∫((χ∘q)')², and (χ∘q)' = sin²φ/2 along
    // φ' = sin φ, so the extra term is ε²/8·∫₀^π sin³φ dφ = ε²/6.
    let setup = height_circle();
    let p = base(&setup, 12.0, 1200);
    let z = AmbientPath::embed_chi(&p);
    for eps in [1.0, 0.5] {
        let e = eps_energy(&setup, eps, &z).unwrap();
        assert!((e - 2.0 - eps * eps / 6.0).abs() < 1e-3, "eps {eps}: {e}");
    }
}

#[test]
fn eps_flow_energy_identity() {
    let setup = ProblemSetup::builtin("circle").unwrap();
    let (a, b) = max_and_min(&setup);
    let g = TimeGrid::new(12.0, 1200).unwrap();
    let mut bounds = Vec::new();
    for eps in [1.0, 0.5, 0.3] {
        let r = integrate_eps_flow(&setup, &a, &b, eps, g, &EpsFlowOptions::default()).unwrap();
        assert!(r.defect < 1e-10);
        let e = eps_energy(&setup, eps, &r.path).unwrap();
        let rep = energy_identity_residual(e, &a, &b, None);
        assert!(rep.residual <= 1e-3, "eps {eps}: E = {e}");
        let h = r.path.u.iter().map(|u| setup.h.eval(u.as_slice()).unwrap().abs()).fold(0.0, f64::max);
        assert!(h <= eps * eps, "eps {eps}: sup |H| = {h:e}");
        let tau = r.path.tau.iter().fold(0.0f64, |m, t| m.max(t.abs()));
        let du = r.path.u.windows(2).map(|w| (&w[1] - &w[0]).norm() / g.ds()).fold(0.0, f64::max);
        bounds.push((tau, du));
    }
    let (tau_max, du_max) = bounds.iter().fold((0.0f64, 0.0f64), |m, b| (m.0.max(b.0), m.1.max(b.1)));
    assert!(tau_max < 2.0 && du_max < 2.0, "a priori bounds {bounds:?}");
}

#[test]
fn eps_flow_starts_on_mean_level() {
    let setup = ProblemSetup::builtin("circle").unwrap();
    let (a, b) = max_and_min(&setup);
    let g = TimeGrid::new(12.0, 1200).unwrap();
    let r = integrate_eps_flow(&setup, &a, &b, 1.0, g, &EpsFlowOptions::default()).unwrap();
    let z0 = &r.dense.z[2 * g.mid()];
    let level = setup.lagrangian(&z0.as_slice()[..2], z0[2]).unwrap();
    assert!((level - 0.5 * (a.f_value + b.f_value)).abs() < 1e-10);
    assert_eq!(r.dense.z.len(), 2 * g.n + 1);
}

#[test]
fn eps_flow_of_constant_objective_is_frozen() {
    let f = ScalarField::from_terms(2, &[(&[0, 0], 0.0)]).unwrap();
    let setup = ProblemSetup::new("flat", f, unit_sphere(2).unwrap()).unwrap();
    let x = CriticalPoint::analyze(&setup, &DVector::from_vec(vec![1.0, 0.0])).unwrap();
    let g = TimeGrid::new(12.0, 100).unwrap();
    let r = integrate_eps_flow(&setup, &x, &x, 1.0, g, &EpsFlowOptions::default()).unwrap();
    assert!(r.path.u.iter().all(|u| (u - &x.x).norm() == 0.0));
    assert_eq!(eps_energy(&setup, 1.0, &r.path).unwrap(), 0.0);
}

#[test]
fn eps_flow_rejects_wrong_direction() {
    let setup = ProblemSetup::builtin("circle").unwrap();
    let (a, b) = max_and_min(&setup);
    let g = TimeGrid::new(12.0, 200).unwrap();
    let r = integrate_eps_flow(&setup, &b, &a, 1.0, g, &EpsFlowOptions::default());
    assert!(matches!(r, Err(Error::NoConnection(_))));
    let r = integrate_eps_flow(&setup, &a, &b, 0.0, g, &EpsFlowOptions::default());
    assert!(matches!(r, Err(Error::Config(_))));
}
