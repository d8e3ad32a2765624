use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use super::config::{ExperimentConfig, Suite};
use crate::criticals::{find_critical_points, verify_crit_correspondence, CriticalPoint};
use crate::error::{Error, Result};
use crate::flows::{
    base_energy, eps_energy, integrate_base_flow_with, integrate_eps_flow, AmbientPath, BaseFlowOptions, BasePath,
    EpsFlowOptions,
};
use crate::grid::NormKind;
use crate::hypersurface::{canonical_embed, m_h_estimate, sample_sigma, SurfaceFrame};
use crate::linops::random::{random_node_field, random_tangent_field, random_vector};
use crate::linops::{
    assemble_d0_with, assemble_deps, assemble_deps_at, b_inverse_norms, domain_correlation, embed_tangent,
    estimate_probe, fredholm_index_estimate, pi_eps, LinearOperator, PathGeometry, PiParams, ProbeKind,
    ProbeOptions, ProbeReport, Variant, DEFAULT_RANK_TOL,
};
use crate::newton::{flow_agreement, scaling_study, t_eps, uniqueness_probe, NewtonOptions, NewtonReport, ScalingReport};
use crate::problem::{ProblemSetup, BUILTINS};

/// ε-flows are integrated directly only down to this ε; below it the
/// multiple-shooting segments become too numerous for a desk run.
pub const DIRECT_FLOW_MIN_EPS: f64 = 0.25;
const GEOMETRY_SAMPLES: usize = 200;
const GEOMETRY_TOL: f64 = 1e-10;
const IDENTITY_TOL: f64 = 1e-12;
const BASE_ENERGY_TOL: f64 = 1e-3;
const EPS_ENERGY_TOL: f64 = 1e-2;
const KERNEL_CORRELATION: f64 = 0.999;
const CONTRACTION_MAX: f64 = 0.6;
const SMALL_EPS: f64 = 0.2;
const SMALL_EPS_MAX_ITER: usize = 10;
const FLOW_AGREEMENT_TOL: f64 = 1e-3;
const SCALING_SLOPE_MIN: f64 = 1.8;
const RANDOM_FIELDS: usize = 200;

/// Outcome of one suite; `measured` is free-form JSON.
#[derive(Clone, Debug, Serialize)]
pub struct SuiteResult {
    pub suite: String,
    pub passed: bool,
    pub failures: Vec<String>,
    pub measured: Value,
}

/// Files a suite asks to have written, keyed by path relative to the output
/// directory.
pub type Artifacts = BTreeMap<String, String>;

struct Checks {
    failures: Vec<String>,
    measured: serde_json::Map<String, Value>,
}

impl Checks {
    fn new() -> Self {
        Self {
            failures: Vec::new(),
            measured: serde_json::Map::new(),
        }
    }

    fn record(&mut self, key: &str, v: impl Serialize) {
        self.measured.insert(key.into(), serde_json::to_value(v).unwrap_or(Value::Null));
    }

    fn require(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.failures.push(what());
        }
    }

    fn finish(self, suite: Suite) -> SuiteResult {
        SuiteResult {
            suite: suite.name().into(),
            passed: self.failures.is_empty(),
            failures: self.failures,
            measured: Value::Object(self.measured),
        }
    }
}

/// Data shared between suites, computed on first use.
pub struct Context<'a> {
    pub cfg: &'a ExperimentConfig,
    pub setup: ProblemSetup,
    crits: Option<Vec<CriticalPoint>>,
    path: Option<BasePath>,
    newton: BTreeMap<u64, (AmbientPath, NewtonReport)>,
}

fn eps_key(eps: f64) -> u64 {
    eps.to_bits()
}

/// File-name fragment for an ε value.
pub fn eps_label(eps: f64) -> String {
    format!("{eps}").replace('.', "p")
}

impl<'a> Context<'a> {
    pub fn new(cfg: &'a ExperimentConfig) -> Result<Self> {
        Ok(Self {
            cfg,
            setup: cfg.problem.setup()?,
            crits: None,
            path: None,
            newton: BTreeMap::new(),
        })
    }

    fn seed(&self, salt: u64) -> ChaCha8Rng {
        ctx_seed(self.cfg, salt)
    }

    pub fn criticals(&mut self) -> Result<&[CriticalPoint]> {
        if self.crits.is_none() {
            let c = find_critical_points(&self.setup, &[])?;
            if c.len() < 2 {
                return Err(Error::NoConnection(format!("{} critical points found", c.len())));
            }
            self.crits = Some(c);
        }
        Ok(self.crits.as_deref().expect("just computed"))
    }

    /// Base orbit from the highest to the lowest critical point.
    pub fn path(&mut self) -> Result<&BasePath> {
        if self.path.is_none() {
            let c = self.criticals()?;
            let (a, b) = (c[0].clone(), c[c.len() - 1].clone());
            let opts = BaseFlowOptions {
                sign: self.cfg.orbit_sign,
                ..Default::default()
            };
            self.path = Some(integrate_base_flow_with(&self.setup, &a, &b, self.cfg.time_grid(), &opts)?);
        }
        Ok(self.path.as_ref().expect("just computed"))
    }

    fn expected_index(&mut self) -> Result<i64> {
        let p = self.path()?;
        Ok(p.x_minus.index_f as i64 - p.x_plus.index_f as i64)
    }

    /// T^ε for every listed ε, solved concurrently and cached.
    fn newton_runs(&mut self) -> Result<Vec<(f64, Result<(AmbientPath, NewtonReport)>)>> {
        let eps_list = self.cfg.eps_list.clone();
        let path = self.path()?.clone();
        let setup = &self.setup;
        let missing: Vec<f64> = eps_list.iter().copied().filter(|e| !self.newton.contains_key(&eps_key(*e))).collect();
        let fresh: Vec<(f64, Result<(AmbientPath, NewtonReport)>)> = missing
            .par_iter()
            .map(|&eps| (eps, t_eps(setup, &path, eps, &NewtonOptions::default())))
            .collect();
        let mut out = Vec::new();
        for (eps, r) in fresh {
            match r {
                Ok(v) => {
                    self.newton.insert(eps_key(eps), v);
                }
                Err(e) => out.push((eps, Err(e))),
            }
        }
        for &eps in &eps_list {
            if let Some(v) = self.newton.get(&eps_key(eps)) {
                out.push((eps, Ok(v.clone())));
            }
        }
        out.sort_by(|a, b| b.0.total_cmp(&a.0));
        Ok(out)
    }
}

pub fn run_suite(ctx: &mut Context, suite: Suite, files: &mut Artifacts) -> SuiteResult {
    let mut c = Checks::new();
    let outcome = match suite {
        Suite::Geometry => geometry(ctx, &mut c),
        Suite::Criticals => criticals(ctx, &mut c),
        Suite::Flows => flows(ctx, &mut c, files),
        Suite::Operators => operators(ctx, &mut c, files),
        Suite::Newton => newton(ctx, &mut c, files),
        Suite::Scaling => scaling(ctx, &mut c, files),
        Suite::Uniqueness => uniqueness(ctx, &mut c),
    };
    if let Err(e) = outcome {
        c.failures.push(e.to_string());
    }
    c.finish(suite)
}

fn geometry(ctx: &mut Context, c: &mut Checks) -> Result<()> {
    let setup = &ctx.setup;
    let pts = sample_sigma(setup, GEOMETRY_SAMPLES, &mut ctx.seed(1));
    c.record("samples", pts.len());
    c.require(!pts.is_empty(), || "no points of the hypersurface sampled".into());
    let (mut frame, mut chi_def, mut sff, mut on_surface): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for q in &pts {
        let fr = SurfaceFrame::at(setup, q)?;
        let k = fr.frame.ncols();
        frame = frame
            .max((fr.frame.tr_mul(&fr.frame) - DMatrix::identity(k, k)).amax())
            .max(fr.frame.tr_mul(&fr.normal_u).amax());
        let tangential = &fr.grad_f_ambient + &fr.grad_h * fr.chi;
        chi_def = chi_def.max(tangential.dot(&fr.normal_u).abs() / fr.grad_f_ambient.norm().max(1.0));
        on_surface = on_surface.max((canonical_embed(setup, q)?.1 - fr.chi).abs());
        for a in 0..k {
            for b in 0..k {
                let (x, y) = (fr.frame.column(a).into_owned(), fr.frame.column(b).into_owned());
                let d = fr.second_fundamental_form(&x, &y)? - fr.second_fundamental_form(&y, &x)?;
                sff = sff.max(d.amax());
            }
        }
    }
    c.record("max_frame_defect", frame);
    c.record("max_normal_component_of_grad_f_sigma", chi_def);
    c.record("max_second_form_asymmetry", sff);
    c.record("max_embedding_defect", on_surface);
    c.record("m_H", m_h_estimate(setup, GEOMETRY_SAMPLES)?);
    for (name, v) in [("frame", frame), ("chi", chi_def), ("second form", sff), ("embedding", on_surface)] {
        c.require(v <= GEOMETRY_TOL, || format!("{name} defect {v:.3e} above {GEOMETRY_TOL:e}"));
    }
    Ok(())
}

fn criticals(ctx: &mut Context, c: &mut Checks) -> Result<()> {
    let crits = ctx.criticals()?.to_vec();
    c.record("critical_points", &crits);
    for x in &crits {
        c.require(x.nondegenerate && x.index_fh == x.index_f + 1, || {
            format!("index shift fails at {:?}: f {} FH {}", x.x.as_slice(), x.index_f, x.index_fh)
        });
    }
    if let Some(info) = BUILTINS.iter().find(|b| b.name == ctx.setup.name) {
        c.require(info.critical_points == crits.len(), || {
            format!("{} critical points, expected {}", crits.len(), info.critical_points)
        });
    }
    let corr = verify_crit_correspondence(&ctx.setup, &crits)?;
    c.record("max_tau_deviation", corr.max_tau_deviation);
    c.record("unmatched_lagrange_points", corr.unmatched_lagrange_points);
    c.require(corr.pass, || "critical point correspondence failed".into());
    Ok(())
}

fn path_csv(s: &[f64], cols: &[&str], rows: impl Iterator<Item = Vec<f64>>) -> String {
    let mut out = format!("s,{}\n", cols.join(","));
    for (s, r) in s.iter().zip(rows) {
        out.push_str(&format!("{s:e}"));
        for v in r {
            out.push_str(&format!(",{v:e}"));
        }
        out.push('\n');
    }
    out
}

fn coordinate_names(m: usize, last: &str) -> Vec<String> {
    (0..m).map(|i| format!("x{i}")).chain(std::iter::once(last.to_string())).collect()
}

fn ambient_csv(z: &AmbientPath) -> String {
    let s: Vec<f64> = (0..=z.grid.n).map(|j| z.grid.node(j)).collect();
    let names = coordinate_names(z.u[0].len(), "tau");
    let cols: Vec<&str> = names.iter().map(String::as_str).collect();
    let tau = z.tau_nodes();
    path_csv(&s, &cols, z.u.iter().zip(tau).map(|(u, t)| u.iter().copied().chain([t]).collect()))
}

fn flows(ctx: &mut Context, c: &mut Checks, files: &mut Artifacts) -> Result<()> {
    let path = ctx.path()?.clone();
    let c_star = path.x_minus.f_value - path.x_plus.f_value;
    let e0 = base_energy(&path);
    let (dl, dr) = path.boundary_deviation();
    c.record("c_star", c_star);
    c.record("base_energy", e0);
    c.record("base_boundary_deviation", [dl, dr]);
    c.require((e0 - c_star).abs() <= BASE_ENERGY_TOL, || {
        format!("base energy {e0} differs from {c_star} by more than {BASE_ENERGY_TOL:e}")
    });
    let s: Vec<f64> = (0..=path.grid.n).map(|j| path.grid.node(j)).collect();
    let names = coordinate_names(path.dim(), "chi");
    let cols: Vec<&str> = names.iter().map(String::as_str).collect();
    files.insert(
        "paths/base.csv".into(),
        path_csv(&s, &cols, path.points.iter().zip(path.chi()).map(|(q, x)| q.iter().copied().chain([x]).collect())),
    );
    let direct: Vec<f64> = ctx.cfg.eps_list.iter().copied().filter(|e| *e >= DIRECT_FLOW_MIN_EPS).collect();
    let setup = &ctx.setup;
    let runs: Vec<(f64, Result<(AmbientPath, f64, f64)>)> = direct
        .par_iter()
        .map(|&eps| {
            let r = integrate_eps_flow(setup, &path.x_minus, &path.x_plus, eps, path.grid, &EpsFlowOptions::default())
                .and_then(|f| {
                    let e = eps_energy(setup, eps, &f.path)?;
                    Ok((f.path, e, f.defect))
                });
            (eps, r)
        })
        .collect();
    let mut table = Vec::new();
    for (eps, r) in runs {
        match r {
            Ok((z, e, defect)) => {
                table.push(json!({"eps": eps, "energy": e, "defect": defect}));
                c.require((e - c_star).abs() <= EPS_ENERGY_TOL, || format!("eps-flow energy {e} at eps = {eps}"));
                files.insert(format!("paths/eps_flow_{}.csv", eps_label(eps)), ambient_csv(&z));
            }
            Err(e) => c.failures.push(format!("eps-flow at eps = {eps}: {e}")),
        }
    }
    c.record("eps_flows", table);
    Ok(())
}

/// Largest relative defect of ⟨Y, AZ⟩ = ⟨A*Y, Z⟩ over random pairs.
fn adjoint_defect(a: &LinearOperator, rng: &mut ChaCha8Rng) -> f64 {
    let star = a.adjoint();
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let z = a.project(&random_vector(a.domain_dim(), rng));
        let y = random_vector(a.codomain_dim(), rng);
        let az = a.apply(&z);
        let d = (a.dot_codomain(&y, &az) - a.dot_domain(&star.apply(&y), &z)).abs();
        worst = worst.max(d / (a.norm_codomain(&y) * a.norm_codomain(&az)));
    }
    worst
}

fn operators(ctx: &mut Context, c: &mut Checks, files: &mut Artifacts) -> Result<()> {
    let expected = ctx.expected_index()?;
    let path = ctx.path()?.clone();
    let cfg = ctx.cfg;
    let setup = &ctx.setup;
    let pi = PiParams {
        alpha: cfg.alpha,
        beta: cfg.beta,
    };
    let want = (expected.max(0) as usize, (-expected).max(0) as usize, expected);
    c.record("expected_index", expected);

    let geo = PathGeometry::new(&path)?;
    let d0 = assemble_d0_with(setup, &path, &geo)?;
    let f0 = fredholm_index_estimate(&d0, DEFAULT_RANK_TOL)?;
    c.record("D0", &f0);
    c.require((f0.dim_ker, f0.dim_coker, f0.index) == want, || {
        format!("D0 has (ker, coker, index) = ({}, {}, {})", f0.dim_ker, f0.dim_coker, f0.index)
    });
    if let (1, Some(k)) = (f0.dim_ker, &f0.kernel) {
        let corr = domain_correlation(&d0, k, &geo.node_coords(&path.velocity()));
        c.record("D0_kernel_correlation", corr);
        c.require(corr > KERNEL_CORRELATION, || format!("D0 kernel correlation {corr}"));
    }
    let mut rng = ctx_seed(cfg, 2);
    let mut adj: f64 = adjoint_defect(&d0, &mut rng);

    let per_eps: Vec<(f64, Result<Value>)> = cfg
        .eps_list
        .par_iter()
        .map(|&eps| {
            let r = (|| -> Result<Value> {
                let d = assemble_deps(setup, &path, eps, Variant::Operator)?;
                let f = fredholm_index_estimate(&d, DEFAULT_RANK_TOL)?;
                let mut v = json!({"eps": eps, "fredholm": f});
                if let (1, Some(k)) = (f.dim_ker, &f.kernel) {
                    let (z, _) = t_eps(setup, &path, eps, &NewtonOptions::default())?;
                    let at = assemble_deps_at(setup, &z, eps, Variant::Operator)?;
                    let fz = fredholm_index_estimate(&at, DEFAULT_RANK_TOL)?;
                    v["kernel_correlation_at_base"] = json!(domain_correlation(&d, k, &base_velocity(&path)));
                    if let Some(kz) = &fz.kernel {
                        v["kernel_correlation_at_output"] =
                            json!(domain_correlation(&at, kz, &z.velocity().to_flat()));
                    }
                    v["fredholm_at_output"] = serde_json::to_value(&fz)?;
                }
                let mut r = ChaCha8Rng::seed_from_u64(cfg.seed ^ eps.to_bits());
                v["adjoint_defect"] = json!(adjoint_defect(&d, &mut r));
                let b = b_inverse_norms(&path, eps, cfg.alpha, 20, &mut r);
                v["b_inverse"] = serde_json::to_value(&b)?;
                Ok(v)
            })();
            (eps, r)
        })
        .collect();
    let mut table = Vec::new();
    for (eps, r) in per_eps {
        let v = match r {
            Ok(v) => v,
            Err(e) => {
                c.failures.push(format!("operators at eps = {eps}: {e}"));
                continue;
            }
        };
        let f = &v["fredholm"];
        let got = (f["dim_ker"].as_u64(), f["dim_coker"].as_u64(), f["index"].as_i64());
        c.require(got == (Some(want.0 as u64), Some(want.1 as u64), Some(want.2)), || {
            format!("D^eps at eps = {eps} has (ker, coker, index) = {got:?}")
        });
        if let Some(corr) = v["kernel_correlation_at_output"].as_f64() {
            c.require(corr > KERNEL_CORRELATION, || format!("D^eps kernel correlation {corr} at eps = {eps}"));
        }
        adj = adj.max(v["adjoint_defect"].as_f64().unwrap_or(f64::INFINITY));
        let b = &v["b_inverse"];
        for (key, bound) in [("b_inv", 1.0), ("b_inv_p", 1.0), ("b_inv_sqrt_shift", 0.5), ("b_inv_shift", 1.0)] {
            let x = b[key].as_f64().unwrap_or(f64::INFINITY);
            c.require(x <= bound + IDENTITY_TOL, || format!("{key} = {x} above {bound} at eps = {eps}"));
        }
        table.push(v);
    }
    c.record("per_eps", table);
    c.record("max_adjoint_defect", adj);
    c.require(adj <= IDENTITY_TOL, || format!("adjoint defect {adj:.3e}"));

    // π_ε∘I_q = id (only when α = β), ‖I_qπ_εZ‖ ≤ 2‖Z‖ and the Sobolev bound.
    let (mut ident, mut bound, mut sobolev): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for k in 0..RANDOM_FIELDS {
        let eps = cfg.eps_list[k % cfg.eps_list.len()];
        if cfg.alpha == cfg.beta {
            let xi = random_tangent_field(&path, &mut rng);
            let back = pi_eps(&path, &embed_tangent(&path, &xi), eps, pi);
            ident = ident.max(back.sub(&xi).x_inf() / xi.x_inf());
        }
        let z = random_node_field(path.grid, path.dim(), &mut rng);
        let ipz = embed_tangent(&path, &pi_eps(&path, &z, eps, pi));
        bound = bound.max(ipz.eps_norm(eps, NormKind::N02) / z.eps_norm(eps, NormKind::N02));
        sobolev = sobolev.max(eps.sqrt() * z.eps_norm(eps, NormKind::N0Inf) / z.eps_norm(eps, NormKind::N12));
    }
    c.record("projection_identity_defect", ident);
    c.record("projection_bound_ratio", bound);
    c.record("sobolev_ratio", sobolev);
    c.require(ident <= IDENTITY_TOL, || format!("projection identity defect {ident:.3e}"));
    c.require(bound <= 2.0, || format!("projection bound ratio {bound}"));
    c.require(sobolev <= 3.0, || format!("Sobolev ratio {sobolev}"));

    let popts = ProbeOptions {
        n_random: cfg.probe_fields,
        pi,
        seed: cfg.seed,
    };
    let mut probes: Vec<ProbeReport> = Vec::new();
    for kind in ProbeKind::ALL {
        probes.extend(estimate_probe(setup, &path, &cfg.eps_list, kind, &popts)?);
    }
    for p in &probes {
        files.insert(format!("probes/{}.json", p.inequality_id), serde_json::to_string_pretty(p)?);
        c.require(p.uniformly_bounded, || format!("probe {} grows: {:?}", p.inequality_id, p.max_ratio_per_eps));
    }
    c.record(
        "probes",
        probes.iter().map(|p| json!({"id": p.inequality_id, "max_ratio_per_eps": p.max_ratio_per_eps})).collect::<Vec<_>>(),
    );
    Ok(())
}

fn ctx_seed(cfg: &ExperimentConfig, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(salt))
}

/// I_q ∂_s q in the staggered domain layout: ∂_s q at the nodes and
/// dχ(q)∂_s q averaged onto the half-nodes.
pub fn base_velocity(path: &BasePath) -> DVector<f64> {
    let v = path.velocity();
    let lifted: Vec<f64> = path.frames.iter().zip(&v).map(|(f, x)| f.dchi(x)).collect();
    let mut z = crate::grid::TangentField::zeros(path.grid, path.dim(), crate::grid::Placement::HalfNodes);
    z.x = v;
    z.ell = lifted.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    z.to_flat()
}

fn newton(ctx: &mut Context, c: &mut Checks, files: &mut Artifacts) -> Result<()> {
    let runs = ctx.newton_runs()?;
    let path = ctx.path()?.clone();
    let c_star = path.x_minus.f_value - path.x_plus.f_value;
    let mut table = Vec::new();
    for (eps, r) in runs {
        let (z, rep) = match r {
            Ok(v) => v,
            Err(e) => {
                c.failures.push(format!("Newton at eps = {eps}: {e}"));
                continue;
            }
        };
        let e = eps_energy(&ctx.setup, eps, &z)?;
        c.require((e - c_star).abs() <= EPS_ENERGY_TOL, || format!("T^eps energy {e} at eps = {eps}"));
        if eps <= SMALL_EPS {
            c.require(rep.iterations.len() <= SMALL_EPS_MAX_ITER, || {
                format!("{} iterations at eps = {eps}", rep.iterations.len())
            });
            if let Some(s) = rep.iterations.iter().skip(1).find(|s| s.contraction_factor > CONTRACTION_MAX) {
                c.failures.push(format!("contraction {} at step {} for eps = {eps}", s.contraction_factor, s.nu));
            }
        }
        let mut row = json!({"eps": eps, "energy": e, "report": &rep});
        if eps >= 0.5 {
            let flow = integrate_eps_flow(&ctx.setup, &path.x_minus, &path.x_plus, eps, path.grid, &EpsFlowOptions::default())?;
            let d = flow_agreement(&ctx.setup, &z, &flow.dense)?;
            row["flow_agreement"] = json!(d);
            c.require(d <= FLOW_AGREEMENT_TOL, || format!("T^eps and eps-flow differ by {d:.3e} at eps = {eps}"));
        }
        files.insert(format!("newton/eps_{}.json", eps_label(eps)), serde_json::to_string_pretty(&rep)?);
        files.insert(format!("paths/teps_{}.csv", eps_label(eps)), ambient_csv(&z));
        table.push(row);
    }
    c.record("runs", table);
    Ok(())
}

fn scaling(ctx: &mut Context, c: &mut Checks, files: &mut Artifacts) -> Result<()> {
    let path = ctx.path()?.clone();
    let rep: ScalingReport = scaling_study(&ctx.setup, &path, &ctx.cfg.eps_list, &NewtonOptions::default())?;
    files.insert("scaling.csv".into(), rep.to_csv());
    c.require(rep.slope_z_12eps >= SCALING_SLOPE_MIN, || {
        format!("slope of |Z|_(1,2,eps) is {} < {SCALING_SLOPE_MIN}", rep.slope_z_12eps)
    });
    c.record("report", &rep);
    Ok(())
}

fn uniqueness(ctx: &mut Context, c: &mut Checks) -> Result<()> {
    let target = ctx.cfg.uniqueness_eps;
    let eps = ctx
        .cfg
        .eps_list
        .iter()
        .copied()
        .min_by(|a, b| (a - target).abs().total_cmp(&(b - target).abs()))
        .expect("validated nonempty");
    let path = ctx.path()?.clone();
    let mut rng = ctx.seed(3);
    let rep = uniqueness_probe(&ctx.setup, &path, eps, ctx.cfg.perturbations, ctx.cfg.delta0, &NewtonOptions::default(), &mut rng)?;
    c.record("report", &rep);
    Ok(())
}
