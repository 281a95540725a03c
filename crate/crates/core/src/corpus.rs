//! Named Hamiltonian germs with the fixed point of interest at the origin.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::hamflow::{fixed_point_record, FixedPointRecord, FnHamiltonian, Hamiltonian, HamiltonianGerm};

/// Registry entry: a name, a formula and the default parameters.
#[derive(Debug, Clone, Serialize)]
pub struct CorpusEntry {
    pub name: &'static str,
    pub formula: &'static str,
    pub params: &'static [(&'static str, f64)],
    pub dim: usize,
}

const ENTRIES: &[CorpusEntry] = &[
    CorpusEntry { name: "zero", formula: "H = 0", params: &[("box", 1.0)], dim: 2 },
    CorpusEntry {
        name: "rotation",
        formula: "H = -pi*alpha*(x^2 + y^2); counterclockwise rotation by 2*pi*alpha",
        params: &[("alpha", std::f64::consts::FRAC_1_PI), ("box", 1.0)],
        dim: 2,
    },
    CorpusEntry {
        name: "hyperbolic",
        formula: "H = ln(lambda)*x*y; time-one map diag(lambda, 1/lambda)",
        params: &[("lambda", 2.0), ("box", 1.0)],
        dim: 2,
    },
    CorpusEntry {
        name: "negative-hyperbolic",
        formula: "half turn H = pi*(x^2 + y^2)/2, then H = ln(lambda)*x*y; time-one map diag(-lambda, -1/lambda)",
        params: &[("lambda", 2.0), ("box", 1.0)],
        dim: 2,
    },
    CorpusEntry { name: "shear", formula: "H = y^2/2; time-one map (x + y, y)", params: &[("box", 1.0)], dim: 2 },
    CorpusEntry { name: "quartic-max", formula: "H = -(x^4 + y^4)/4", params: &[("box", 2.0)], dim: 2 },
    CorpusEntry { name: "quartic-min", formula: "H = (x^4 + y^4)/4", params: &[("box", 2.0)], dim: 2 },
    CorpusEntry { name: "monkey-saddle", formula: "H = x^3 - 3*x*y^2", params: &[("box", 0.5)], dim: 2 },
    CorpusEntry {
        name: "radial-perturbed-rotation",
        formula: "H = -pi*alpha*rho - beta*max(rho - rho0, 0)^3 with rho = x^2 + y^2",
        params: &[("alpha", 1.0 / 3.0), ("beta", 1.0), ("rho0", 0.01), ("box", 1.0)],
        dim: 2,
    },
    CorpusEntry {
        name: "cosine-well",
        formula: "H = 2 - cos(pi*x/2) + y^2/4",
        params: &[("box", 3.0)],
        dim: 2,
    },
    CorpusEntry {
        name: "product-max-quartic",
        formula: "rotation(alpha) in (x1, y1) plus quartic-max in (x2, y2)",
        params: &[("alpha", 0.1), ("box", 1.0)],
        dim: 4,
    },
    CorpusEntry {
        name: "product-quartic-quartic",
        formula: "quartic-max in (x1, y1) plus quartic-max in (x2, y2)",
        params: &[("box", 1.0)],
        dim: 4,
    },
];

pub fn corpus_list() -> &'static [CorpusEntry] {
    ENTRIES
}

pub fn lookup(name: &str) -> Result<&'static CorpusEntry> {
    ENTRIES.iter().find(|e| e.name == name).ok_or_else(|| Error::UnknownFormula(name.to_string()))
}

/// A built germ. Products keep their factors for the split route.
#[derive(Clone)]
pub struct CorpusGerm {
    pub name: String,
    pub germ: HamiltonianGerm,
    pub origin: Vec<f64>,
    pub factors: Vec<CorpusGerm>,
}

impl CorpusGerm {
    pub fn record(&self) -> Result<FixedPointRecord> {
        fixed_point_record(&self.germ, &self.origin, 0.0)
    }

    /// Factor germs with their records, empty for non-products.
    pub fn factor_records(&self) -> Result<Vec<(HamiltonianGerm, FixedPointRecord)>> {
        self.factors.iter().map(|f| Ok((f.germ.clone(), f.record()?))).collect()
    }
}

/// Builds a germ with the defaults of its entry overridden by `params`.
pub fn build(name: &str, params: &BTreeMap<String, f64>) -> Result<CorpusGerm> {
    let entry = lookup(name)?;
    for key in params.keys() {
        if !entry.params.iter().any(|(k, _)| k == key) {
            return Err(Error::InvalidParameter(format!("{name} has no parameter {key}")));
        }
    }
    let p = |key: &str| {
        params
            .get(key)
            .copied()
            .or_else(|| entry.params.iter().find(|(k, _)| *k == key).map(|(_, v)| *v))
            .expect("parameter declared in registry")
    };
    let half = p("box");
    if half.is_nan() || half <= 0.0 {
        return Err(Error::InvalidParameter("box must be positive".into()));
    }
    let planar = |h: FnHamiltonian| -> Result<CorpusGerm> {
        Ok(CorpusGerm {
            name: name.to_string(),
            germ: HamiltonianGerm::new(name, h, BoxDomain::cube(2, half))?,
            origin: vec![0.0; 2],
            factors: Vec::new(),
        })
    };
    match name {
        "zero" => planar(quadratic(0.0, 0.0, 0.0)),
        "rotation" => {
            let a = -PI * p("alpha");
            planar(quadratic(a, 0.0, a))
        }
        "hyperbolic" => planar(quadratic(0.0, positive(p("lambda"))?.ln() / 2.0, 0.0)),
        "negative-hyperbolic" => {
            let half_turn = HamiltonianGerm::new("half-turn", quadratic(PI / 2.0, 0.0, PI / 2.0), BoxDomain::cube(2, half))?;
            let hyp = HamiltonianGerm::new(
                "hyperbolic",
                quadratic(0.0, positive(p("lambda"))?.ln() / 2.0, 0.0),
                BoxDomain::cube(2, half),
            )?;
            let mut germ = hyp.compose_after(&half_turn)?;
            germ.name = name.to_string();
            Ok(CorpusGerm { name: name.to_string(), germ, origin: vec![0.0; 2], factors: Vec::new() })
        }
        "shear" => planar(quadratic(0.0, 0.0, 0.5)),
        "quartic-max" => planar(quartic(-0.25)),
        "quartic-min" => planar(quartic(0.25)),
        "monkey-saddle" => planar(monkey_saddle()),
        "radial-perturbed-rotation" => planar(radial(p("alpha"), p("beta"), p("rho0"))),
        "cosine-well" => planar(cosine_well()),
        "product-max-quartic" => {
            let mut rot = BTreeMap::new();
            rot.insert("alpha".to_string(), p("alpha"));
            rot.insert("box".to_string(), half);
            let mut q = BTreeMap::new();
            q.insert("box".to_string(), half);
            product(name, build("rotation", &rot)?, build("quartic-max", &q)?, half)
        }
        "product-quartic-quartic" => {
            let mut q = BTreeMap::new();
            q.insert("box".to_string(), half);
            product(name, build("quartic-max", &q)?, build("quartic-max", &q)?, half)
        }
        _ => unreachable!("registry and builder agree"),
    }
}

/// Builds with default parameters.
pub fn build_default(name: &str) -> Result<CorpusGerm> {
    build(name, &BTreeMap::new())
}

fn positive(v: f64) -> Result<f64> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(Error::InvalidParameter(format!("expected a positive value, got {v}")))
    }
}

/// `H = a x² + 2b x y + c y²`.
fn quadratic(a: f64, b: f64, c: f64) -> FnHamiltonian {
    let hess = DMatrix::from_row_slice(2, 2, &[2.0 * a, 2.0 * b, 2.0 * b, 2.0 * c]);
    FnHamiltonian::new(1, move |_, z| a * z[0] * z[0] + 2.0 * b * z[0] * z[1] + c * z[1] * z[1])
        .autonomous()
        .with_gradient(move |_, z| DVector::from_vec(vec![2.0 * (a * z[0] + b * z[1]), 2.0 * (b * z[0] + c * z[1])]))
        .with_hessian(move |_, _| hess.clone())
}

/// `H = s (x⁴ + y⁴)`.
fn quartic(s: f64) -> FnHamiltonian {
    FnHamiltonian::new(1, move |_, z| s * (z[0].powi(4) + z[1].powi(4)))
        .autonomous()
        .with_gradient(move |_, z| DVector::from_vec(vec![4.0 * s * z[0].powi(3), 4.0 * s * z[1].powi(3)]))
        .with_hessian(move |_, z| {
            DMatrix::from_row_slice(2, 2, &[12.0 * s * z[0] * z[0], 0.0, 0.0, 12.0 * s * z[1] * z[1]])
        })
}

fn monkey_saddle() -> FnHamiltonian {
    FnHamiltonian::new(1, |_, z| z[0].powi(3) - 3.0 * z[0] * z[1] * z[1])
        .autonomous()
        .with_gradient(|_, z| DVector::from_vec(vec![3.0 * (z[0] * z[0] - z[1] * z[1]), -6.0 * z[0] * z[1]]))
        .with_hessian(|_, z| DMatrix::from_row_slice(2, 2, &[6.0 * z[0], -6.0 * z[1], -6.0 * z[1], -6.0 * z[0]]))
}

/// `H = g(ρ)`, `g(ρ) = −παρ − β (ρ − ρ₀)₊³`. The flow rotates the circle of
/// radius `r` counterclockwise at rate `2πα + 6β (r² − ρ₀)₊²`.
fn radial(alpha: f64, beta: f64, rho0: f64) -> FnHamiltonian {
    let g = move |rho: f64| -PI * alpha * rho - beta * (rho - rho0).max(0.0).powi(3);
    let g1 = move |rho: f64| -PI * alpha - 3.0 * beta * (rho - rho0).max(0.0).powi(2);
    let g2 = move |rho: f64| -6.0 * beta * (rho - rho0).max(0.0);
    FnHamiltonian::new(1, move |_, z| g(z[0] * z[0] + z[1] * z[1]))
        .autonomous()
        .with_gradient(move |_, z| {
            let d = 2.0 * g1(z[0] * z[0] + z[1] * z[1]);
            DVector::from_vec(vec![d * z[0], d * z[1]])
        })
        .with_hessian(move |_, z| {
            let rho = z[0] * z[0] + z[1] * z[1];
            let (a, b) = (2.0 * g1(rho), 4.0 * g2(rho));
            DMatrix::from_row_slice(
                2,
                2,
                &[a + b * z[0] * z[0], b * z[0] * z[1], b * z[0] * z[1], a + b * z[1] * z[1]],
            )
        })
}

fn cosine_well() -> FnHamiltonian {
    let w = PI / 2.0;
    FnHamiltonian::new(1, move |_, z| 2.0 - (w * z[0]).cos() + 0.25 * z[1] * z[1])
        .autonomous()
        .with_gradient(move |_, z| DVector::from_vec(vec![w * (w * z[0]).sin(), 0.5 * z[1]]))
        .with_hessian(move |_, z| DMatrix::from_row_slice(2, 2, &[w * w * (w * z[0]).cos(), 0.0, 0.0, 0.5]))
}

/// `H(z₁, z₂) = H₁(z₁) + H₂(z₂)` in the `(x…, y…)` layout.
pub struct SplitSum {
    a: Arc<dyn Hamiltonian>,
    b: Arc<dyn Hamiltonian>,
}

impl SplitSum {
    pub fn new(a: Arc<dyn Hamiltonian>, b: Arc<dyn Hamiltonian>) -> Self {
        Self { a, b }
    }

    fn parts(&self, z: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (na, nb) = (self.a.n(), self.b.n());
        let n = na + nb;
        let za = z[..na].iter().chain(&z[n..n + na]).copied().collect();
        let zb = z[na..n].iter().chain(&z[n + na..]).copied().collect();
        (za, zb)
    }

    /// Positions of the factor coordinates in the product layout.
    fn index_maps(&self) -> (Vec<usize>, Vec<usize>) {
        let (na, nb) = (self.a.n(), self.b.n());
        let n = na + nb;
        let ia = (0..na).chain(n..n + na).collect();
        let ib = (na..n).chain(n + na..2 * n).collect();
        (ia, ib)
    }
}

impl Hamiltonian for SplitSum {
    fn n(&self) -> usize {
        self.a.n() + self.b.n()
    }

    fn value(&self, t: f64, z: &[f64]) -> f64 {
        let (za, zb) = self.parts(z);
        self.a.value(t, &za) + self.b.value(t, &zb)
    }

    fn gradient(&self, t: f64, z: &[f64]) -> DVector<f64> {
        let (za, zb) = self.parts(z);
        let (ia, ib) = self.index_maps();
        let mut g = DVector::zeros(z.len());
        for (i, v) in ia.iter().zip(self.a.gradient(t, &za).iter()) {
            g[*i] = *v;
        }
        for (i, v) in ib.iter().zip(self.b.gradient(t, &zb).iter()) {
            g[*i] = *v;
        }
        g
    }

    fn hessian(&self, t: f64, z: &[f64]) -> DMatrix<f64> {
        let (za, zb) = self.parts(z);
        let (ia, ib) = self.index_maps();
        let mut h = DMatrix::zeros(z.len(), z.len());
        for (idx, m) in [(ia, self.a.hessian(t, &za)), (ib, self.b.hessian(t, &zb))] {
            for (r, &i) in idx.iter().enumerate() {
                for (c, &j) in idx.iter().enumerate() {
                    h[(i, j)] = m[(r, c)];
                }
            }
        }
        h
    }

    fn is_autonomous(&self) -> bool {
        self.a.is_autonomous() && self.b.is_autonomous()
    }

    fn breakpoints(&self) -> Vec<f64> {
        let mut b = self.a.breakpoints();
        b.extend(self.b.breakpoints());
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }
}

fn product(name: &str, a: CorpusGerm, b: CorpusGerm, half: f64) -> Result<CorpusGerm> {
    let h = SplitSum::new(a.germ.hamiltonian().clone(), b.germ.hamiltonian().clone());
    let n = h.n();
    Ok(CorpusGerm {
        name: name.to_string(),
        germ: HamiltonianGerm::new(name, h, BoxDomain::cube(2 * n, half))?,
        origin: vec![0.0; 2 * n],
        factors: vec![a, b],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamflow::flow;
    use crate::ode::Tolerances;

    #[test]
    fn registry_lookup() {
        assert!(lookup("quartic-max").is_ok());
        assert!(lookup("shear").is_ok());
        assert!(matches!(lookup("no-such-germ"), Err(Error::UnknownFormula(_))));
        for e in corpus_list() {
            build_default(e.name).unwrap();
        }
        let mut bad = BTreeMap::new();
        bad.insert("gamma".to_string(), 1.0);
        assert!(build("rotation", &bad).is_err());
    }

    #[test]
    fn time_one_maps() {
        let tol = Tolerances::default();
        let shear = build_default("shear").unwrap();
        let z = flow(&shear.germ, &[0.2, 0.3], 0.0, 1.0, tol).unwrap().z;
        assert!((z[0] - 0.5).abs() < 1e-10 && (z[1] - 0.3).abs() < 1e-10);
        let nh = build_default("negative-hyperbolic").unwrap();
        let z = flow(&nh.germ, &[0.1, 0.1], 0.0, 1.0, tol).unwrap().z;
        assert!((z[0] + 0.2).abs() < 1e-9 && (z[1] + 0.05).abs() < 1e-9, "{z:?}");
        let rot = build_default("rotation").unwrap();
        let th = 2.0f64;
        let z = flow(&rot.germ, &[0.1, 0.0], 0.0, 1.0, tol).unwrap().z;
        assert!((z[0] - 0.1 * th.cos()).abs() < 1e-10 && (z[1] - 0.1 * th.sin()).abs() < 1e-10);
    }

    #[test]
    fn product_layout() {
        let p = build_default("product-max-quartic").unwrap();
        let z = [0.1, 0.2, 0.3, 0.4];
        let a = p.factors[0].germ.value(0.0, &[0.1, 0.3]);
        let b = p.factors[1].germ.value(0.0, &[0.2, 0.4]);
        assert!((p.germ.value(0.0, &z) - a - b).abs() < 1e-15);
        let g = p.germ.gradient(0.0, &z);
        assert!((g[1] - (-0.2f64.powi(3))).abs() < 1e-15);
        assert!((g[2] - (-2.0 * PI * 0.1 * 0.3)).abs() < 1e-15);
    }
}
