//! Constrained problems: an objective F, a constraint H and the sampling data
//! needed to explore Σ = H⁻¹(0).

use std::f64::consts::PI;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{PolynomialSpec, ScalarField};

/// Seed and sample count for random exploration of Σ.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct SamplerConfig {
    pub seed: u64,
    pub count: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            seed: 0x5eed,
            count: 2000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ProblemSetup {
    pub name: String,
    pub f: ScalarField,
    pub h: ScalarField,
    /// Half-width of the band H⁻¹[−κ, κ] in which retraction is allowed.
    pub kappa: f64,
    /// Σ_κ must lie inside the box `[-domain_halfwidth, domain_halfwidth]^m`.
    pub domain_halfwidth: f64,
    pub sampler: SamplerConfig,
    pub m_h_floor: f64,
    /// Starting points for the critical point search.
    pub seeds: Vec<DVector<f64>>,
}

/// Inline problem description accepted in experiment configs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InlineProblem {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(rename = "F")]
    pub f: PolynomialSpec,
    #[serde(rename = "H")]
    pub h: PolynomialSpec,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "default_box")]
    pub domain_halfwidth: f64,
    #[serde(default)]
    pub seeds: Vec<Vec<f64>>,
}

fn default_name() -> String {
    "inline".into()
}
fn default_kappa() -> f64 {
    0.5
}
fn default_box() -> f64 {
    3.0
}

/// Static description of a built-in problem.
#[derive(Clone, Debug, Serialize)]
pub struct BuiltinInfo {
    pub name: &'static str,
    pub dim: usize,
    pub constraint: &'static str,
    pub objective: &'static str,
    pub critical_points: usize,
    pub note: &'static str,
}

pub const BUILTINS: [BuiltinInfo; 3] = [
    BuiltinInfo {
        name: "circle",
        dim: 2,
        constraint: "H = x^2 + y^2 - 1",
        objective: "F = y + 0.1 x^2",
        critical_points: 2,
        note: "two connecting orbits of index difference 1",
    },
    BuiltinInfo {
        name: "ellipse",
        dim: 2,
        constraint: "H = x^2/4 + y^2 - 1",
        objective: "F = y",
        critical_points: 2,
        note: "two connecting orbits of index difference 1",
    },
    BuiltinInfo {
        name: "sphere",
        dim: 3,
        constraint: "H = x^2 + y^2 + z^2 - 1",
        objective: "F = z",
        critical_points: 2,
        note: "index difference 2; Newton-only suites",
    },
];

impl ProblemSetup {
    pub fn new(name: impl Into<String>, f: ScalarField, h: ScalarField) -> Result<Self> {
        if f.dim() != h.dim() {
            return Err(Error::Config(format!(
                "F has dimension {} but H has dimension {}",
                f.dim(),
                h.dim()
            )));
        }
        if f.dim() < 2 {
            return Err(Error::Config("ambient dimension must be at least 2".into()));
        }
        Ok(Self {
            name: name.into(),
            f,
            h,
            kappa: 0.5,
            domain_halfwidth: 3.0,
            sampler: SamplerConfig::default(),
            m_h_floor: 1e-6,
            seeds: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.f.dim()
    }

    pub fn builtin(name: &str) -> Result<Self> {
        let (f, h, seeds) = match name {
            "circle" => (
                ScalarField::from_terms(2, &[(&[0, 1], 1.0), (&[2, 0], 0.1)])?,
                unit_sphere(2)?,
                ring_seeds(1.0, 1.0, 24),
            ),
            "ellipse" => (
                ScalarField::from_terms(2, &[(&[0, 1], 1.0)])?,
                ScalarField::from_terms(2, &[(&[2, 0], 0.25), (&[0, 2], 1.0), (&[0, 0], -1.0)])?,
                ring_seeds(2.0, 1.0, 24),
            ),
            "sphere" => (
                ScalarField::from_terms(3, &[(&[0, 0, 1], 1.0)])?,
                unit_sphere(3)?,
                sphere_seeds(6, 8),
            ),
            other => return Err(Error::Config(format!("unknown built-in problem {other:?}"))),
        };
        let mut setup = Self::new(name, f, h)?;
        setup.seeds = seeds;
        Ok(setup)
    }

    pub fn from_inline(p: &InlineProblem) -> Result<Self> {
        let mut setup = Self::new(
            p.name.clone(),
            ScalarField::from_spec(&p.f)?,
            ScalarField::from_spec(&p.h)?,
        )?;
        if !(p.kappa > 0.0) || !(p.domain_halfwidth > 0.0) {
            return Err(Error::Config("kappa and domain_halfwidth must be positive".into()));
        }
        setup.kappa = p.kappa;
        setup.domain_halfwidth = p.domain_halfwidth;
        for s in &p.seeds {
            if s.len() != setup.dim() {
                return Err(Error::Config(format!("seed {s:?} has wrong dimension")));
            }
            setup.seeds.push(DVector::from_column_slice(s));
        }
        Ok(setup)
    }

    pub fn with_seeds(mut self, seeds: Vec<DVector<f64>>) -> Self {
        self.seeds = seeds;
        self
    }

    pub fn in_box(&self, p: &DVector<f64>) -> bool {
        p.iter().all(|x| x.abs() <= self.domain_halfwidth)
    }

    /// Value of F_H(p, τ) = F(p) + τ H(p).
    pub fn lagrangian(&self, p: &[f64], tau: f64) -> Result<f64> {
        Ok(self.f.eval(p)? + tau * self.h.eval(p)?)
    }
}

/// H = |p|² − 1 in dimension `m`.
pub fn unit_sphere(m: usize) -> Result<ScalarField> {
    let mut terms: Vec<(Vec<u32>, f64)> = (0..m)
        .map(|i| {
            let mut e = vec![0; m];
            e[i] = 2;
            (e, 1.0)
        })
        .collect();
    terms.push((vec![0; m], -1.0));
    let refs: Vec<(&[u32], f64)> = terms.iter().map(|(e, c)| (e.as_slice(), *c)).collect();
    ScalarField::from_terms(m, &refs)
}

fn ring_seeds(a: f64, b: f64, n: usize) -> Vec<DVector<f64>> {
    (0..n)
        .map(|k| {
            let t = 2.0 * PI * (k as f64 + 0.5) / n as f64;
            DVector::from_vec(vec![a * t.cos(), b * t.sin()])
        })
        .collect()
}

fn sphere_seeds(n_lat: usize, n_lon: usize) -> Vec<DVector<f64>> {
    let mut out = vec![
        DVector::from_vec(vec![0.05, 0.02, 1.0]),
        DVector::from_vec(vec![0.05, 0.02, -1.0]),
    ];
    for i in 0..n_lat {
        let th = PI * (i as f64 + 0.5) / n_lat as f64;
        for j in 0..n_lon {
            let ph = 2.0 * PI * j as f64 / n_lon as f64;
            out.push(DVector::from_vec(vec![
                th.sin() * ph.cos(),
                th.sin() * ph.sin(),
                th.cos(),
            ]));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_have_expected_dimensions() {
        for info in BUILTINS.iter() {
            let s = ProblemSetup::builtin(info.name).unwrap();
            assert_eq!(s.dim(), info.dim);
            assert!(!s.seeds.is_empty());
        }
        assert!(ProblemSetup::builtin("torus").is_err());
    }

    #[test]
    fn inline_problem_parses() {
        let p: InlineProblem = serde_json::from_str(
            r#"{"F": {"dim": 2, "monomials": [{"exps": [0, 1], "coef": 1}]},
                "H": {"dim": 2, "monomials": [{"exps": [2, 0], "coef": 1}, {"exps": [0, 2], "coef": 1}, {"exps": [0, 0], "coef": -1}]},
                "seeds": [[0.1, 0.9]]}"#,
        )
        .unwrap();
        let s = ProblemSetup::from_inline(&p).unwrap();
        assert_eq!(s.h.eval(&[1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(s.seeds.len(), 1);
        assert_eq!(s.kappa, 0.5);
    }

    #[test]
    fn mismatched_dimensions_rejected() {
        let f = ScalarField::from_terms(3, &[(&[0, 0, 1], 1.0)]).unwrap();
        assert!(ProblemSetup::new("bad", f, unit_sphere(2).unwrap()).is_err());
    }
}
