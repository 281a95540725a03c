//! Hamiltonian germs on boxes of `R^{2n}`: flows, monodromy paths, iteration
//! and composition, fixed points, actions and gap tables.
//!
//! Conventions: `ω = Σ dy_i ∧ dx_i` and `i_X ω = −dH`, so
//! `X_H = (∂H/∂y, −∂H/∂x)`, i.e. `ż = J ∇H` with `J = [[0, I], [−I, 0]]`.
//! A minimum `H = a|z|²/2` rotates clockwise.

use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::ode::{integrate, Tolerances};
use crate::pathindex::{conley_zehnder, mean_index, SymplecticPath};
use crate::symplin::{admissible, standard_j, unipotent_rank, validate_symplectic, SymplecticMatrix};

/// A time-dependent Hamiltonian `H(t, z)`, 1-periodic in `t`.
///
/// Derivatives default to central differences; analytic overrides are
/// preferred.
pub trait Hamiltonian: Send + Sync {
    /// Half the phase-space dimension.
    fn n(&self) -> usize;

    fn value(&self, t: f64, z: &[f64]) -> f64;

    fn gradient(&self, t: f64, z: &[f64]) -> DVector<f64> {
        let h = f64::EPSILON.cbrt() * z.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mut p = z.to_vec();
        DVector::from_fn(z.len(), |i, _| {
            let orig = p[i];
            p[i] = orig + h;
            let fp = self.value(t, &p);
            p[i] = orig - h;
            let fm = self.value(t, &p);
            p[i] = orig;
            (fp - fm) / (2.0 * h)
        })
    }

    fn hessian(&self, t: f64, z: &[f64]) -> DMatrix<f64> {
        let h = f64::EPSILON.cbrt() * z.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let d = z.len();
        let mut m = DMatrix::zeros(d, d);
        let mut p = z.to_vec();
        for j in 0..d {
            let orig = p[j];
            p[j] = orig + h;
            let gp = self.gradient(t, &p);
            p[j] = orig - h;
            let gm = self.gradient(t, &p);
            p[j] = orig;
            m.set_column(j, &((gp - gm) / (2.0 * h)));
        }
        (&m + m.transpose()) * 0.5
    }

    fn is_autonomous(&self) -> bool {
        false
    }

    /// Times in `(0, 1)` where the time dependence is not smooth.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

type ValueFn = dyn Fn(f64, &[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(f64, &[f64]) -> DVector<f64> + Send + Sync;
type HessFn = dyn Fn(f64, &[f64]) -> DMatrix<f64> + Send + Sync;

/// Closure-backed Hamiltonian.
#[derive(Clone)]
pub struct FnHamiltonian {
    n: usize,
    autonomous: bool,
    value: Arc<ValueFn>,
    grad: Option<Arc<GradFn>>,
    hess: Option<Arc<HessFn>>,
}

impl FnHamiltonian {
    pub fn new(n: usize, value: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { n, autonomous: false, value: Arc::new(value), grad: None, hess: None }
    }

    pub fn autonomous(mut self) -> Self {
        self.autonomous = true;
        self
    }

    pub fn with_gradient(mut self, g: impl Fn(f64, &[f64]) -> DVector<f64> + Send + Sync + 'static) -> Self {
        self.grad = Some(Arc::new(g));
        self
    }

    pub fn with_hessian(mut self, h: impl Fn(f64, &[f64]) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        self.hess = Some(Arc::new(h));
        self
    }
}

impl Hamiltonian for FnHamiltonian {
    fn n(&self) -> usize {
        self.n
    }

    fn value(&self, t: f64, z: &[f64]) -> f64 {
        (self.value)(t, z)
    }

    fn gradient(&self, t: f64, z: &[f64]) -> DVector<f64> {
        match &self.grad {
            Some(g) => g(t, z),
            None => {
                let fd = FdView(self);
                Hamiltonian::gradient(&fd, t, z)
            }
        }
    }

    fn hessian(&self, t: f64, z: &[f64]) -> DMatrix<f64> {
        match &self.hess {
            Some(h) => h(t, z),
            None => {
                let fd = FdView(self);
                Hamiltonian::hessian(&fd, t, z)
            }
        }
    }

    fn is_autonomous(&self) -> bool {
        self.autonomous
    }
}

/// Finite-difference view that still uses the analytic gradient if present.
struct FdView<'a>(&'a FnHamiltonian);

impl Hamiltonian for FdView<'_> {
    fn n(&self) -> usize {
        self.0.n
    }
    fn value(&self, t: f64, z: &[f64]) -> f64 {
        (self.0.value)(t, z)
    }
    fn gradient(&self, t: f64, z: &[f64]) -> DVector<f64> {
        match &self.0.grad {
            Some(g) => g(t, z),
            None => {
                let h = f64::EPSILON.cbrt() * z.iter().fold(1.0f64, |m, v| m.max(v.abs()));
                let mut p = z.to_vec();
                DVector::from_fn(z.len(), |i, _| {
                    let orig = p[i];
                    p[i] = orig + h;
                    let fp = (self.0.value)(t, &p);
                    p[i] = orig - h;
                    let fm = (self.0.value)(t, &p);
                    p[i] = orig;
                    (fp - fm) / (2.0 * h)
                })
            }
        }
    }
}

/// `K(t, z) = k H(kt, z)`: the time-one map is `φ_H^k`.
struct Iterated {
    inner: Arc<dyn Hamiltonian>,
    k: usize,
}

impl Hamiltonian for Iterated {
    fn n(&self) -> usize {
        self.inner.n()
    }
    fn value(&self, t: f64, z: &[f64]) -> f64 {
        self.k as f64 * self.inner.value(self.k as f64 * t, z)
    }
    fn gradient(&self, t: f64, z: &[f64]) -> DVector<f64> {
        self.inner.gradient(self.k as f64 * t, z) * self.k as f64
    }
    fn hessian(&self, t: f64, z: &[f64]) -> DMatrix<f64> {
        self.inner.hessian(self.k as f64 * t, z) * self.k as f64
    }
    fn is_autonomous(&self) -> bool {
        self.inner.is_autonomous()
    }
    fn breakpoints(&self) -> Vec<f64> {
        let inner = self.inner.breakpoints();
        let k = self.k as f64;
        let mut out = Vec::new();
        for j in 0..self.k {
            if j > 0 && !self.inner.is_autonomous() {
                out.push(j as f64 / k);
            }
            out.extend(inner.iter().map(|b| (j as f64 + b) / k));
        }
        out
    }
}

/// Time reparametrization `β(s) = s − sin(2πs)/2π` with `β'(0) = β'(1) = 0`.
fn beta(s: f64) -> (f64, f64) {
    (s - (TAU * s).sin() / TAU, 1.0 - (TAU * s).cos())
}

/// `K # H`: first `H` on `[0, 1/2]`, then `K` on `[1/2, 1]`, both
/// reparametrized by `β`.
struct Composed {
    first: Arc<dyn Hamiltonian>,
    second: Arc<dyn Hamiltonian>,
}

impl Composed {
    fn part(&self, t: f64) -> (&dyn Hamiltonian, f64, f64) {
        let tt = t.rem_euclid(1.0);
        if tt < 0.5 {
            let (b, db) = beta(2.0 * tt);
            (self.first.as_ref(), b, 2.0 * db)
        } else {
            let (b, db) = beta(2.0 * tt - 1.0);
            (self.second.as_ref(), b, 2.0 * db)
        }
    }
}

impl Hamiltonian for Composed {
    fn n(&self) -> usize {
        self.first.n()
    }
    fn value(&self, t: f64, z: &[f64]) -> f64 {
        let (h, s, w) = self.part(t);
        w * h.value(s, z)
    }
    fn gradient(&self, t: f64, z: &[f64]) -> DVector<f64> {
        let (h, s, w) = self.part(t);
        h.gradient(s, z) * w
    }
    fn hessian(&self, t: f64, z: &[f64]) -> DMatrix<f64> {
        let (h, s, w) = self.part(t);
        h.hessian(s, z) * w
    }
    fn breakpoints(&self) -> Vec<f64> {
        vec![0.5]
    }
}

/// A 1-periodic Hamiltonian on a box. `period_span = k` marks a germ that
/// represents the `k`-th iteration, realized on `t ∈ [0, 1]`.
#[derive(Clone)]
pub struct HamiltonianGerm {
    pub name: String,
    pub domain: BoxDomain,
    pub period_span: usize,
    h: Arc<dyn Hamiltonian>,
}

impl fmt::Debug for HamiltonianGerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HamiltonianGerm")
            .field("name", &self.name)
            .field("n", &self.n())
            .field("domain", &self.domain)
            .field("period_span", &self.period_span)
            .finish()
    }
}

impl HamiltonianGerm {
    pub fn new(name: impl Into<String>, h: impl Hamiltonian + 'static, domain: BoxDomain) -> Result<Self> {
        Self::from_arc(name, Arc::new(h), domain)
    }

    pub fn from_arc(name: impl Into<String>, h: Arc<dyn Hamiltonian>, domain: BoxDomain) -> Result<Self> {
        if domain.dim() != 2 * h.n() {
            return Err(Error::Dimension(format!(
                "domain has dimension {}, Hamiltonian needs {}",
                domain.dim(),
                2 * h.n()
            )));
        }
        Ok(Self { name: name.into(), domain, period_span: 1, h })
    }

    pub fn n(&self) -> usize {
        self.h.n()
    }

    pub fn hamiltonian(&self) -> &Arc<dyn Hamiltonian> {
        &self.h
    }

    pub fn value(&self, t: f64, z: &[f64]) -> f64 {
        self.h.value(t, z)
    }

    pub fn gradient(&self, t: f64, z: &[f64]) -> DVector<f64> {
        self.h.gradient(t, z)
    }

    pub fn hessian(&self, t: f64, z: &[f64]) -> DMatrix<f64> {
        self.h.hessian(t, z)
    }

    pub fn is_autonomous(&self) -> bool {
        self.h.is_autonomous()
    }

    /// `X_H = J ∇H = (H_y, −H_x)`.
    pub fn vector_field(&self, t: f64, z: &[f64]) -> DVector<f64> {
        let g = self.gradient(t, z);
        let n = self.n();
        DVector::from_fn(2 * n, |i, _| if i < n { g[n + i] } else { -g[i - n] })
    }

    /// Largest `|H(t+1, z) − H(t, z)|` over a deterministic sample set.
    pub fn periodicity_defect(&self) -> f64 {
        let d = self.domain.dim();
        let mut worst: f64 = 0.0;
        for i in 0..16 {
            let t = i as f64 / 16.0;
            let z: Vec<f64> = (0..d)
                .map(|j| {
                    let w = ((i * 7 + j * 3) % 11) as f64 / 10.0;
                    self.domain.lo[j] + w * (self.domain.hi[j] - self.domain.lo[j])
                })
                .collect();
            worst = worst.max((self.value(t + 1.0, &z) - self.value(t, &z)).abs());
        }
        worst
    }

    /// `H^{#k}`, realized as `k H(kt, z)` on `[0, 1]`.
    pub fn iterate(&self, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("iteration k must be positive".into()));
        }
        if k == 1 {
            return Ok(self.clone());
        }
        Ok(Self {
            name: format!("{}#{}", self.name, k),
            domain: self.domain.clone(),
            period_span: self.period_span * k,
            h: Arc::new(Iterated { inner: self.h.clone(), k }),
        })
    }

    /// `K # H` with `K = self`: the time-one map is `φ_K ∘ φ_H`.
    pub fn compose_after(&self, first: &HamiltonianGerm) -> Result<Self> {
        if first.n() != self.n() {
            return Err(Error::Dimension("composed germs differ in dimension".into()));
        }
        Ok(Self {
            name: format!("{}#{}", self.name, first.name),
            domain: self.domain.clone(),
            period_span: 1,
            h: Arc::new(Composed { first: first.h.clone(), second: self.h.clone() }),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowResult {
    pub z: Vec<f64>,
    /// `|H(z1) − H(z0)|` for autonomous germs.
    pub energy_drift: Option<f64>,
}

pub fn flow(germ: &HamiltonianGerm, z0: &[f64], t0: f64, t1: f64, tol: Tolerances) -> Result<FlowResult> {
    if z0.len() != 2 * germ.n() {
        return Err(Error::Dimension("initial point has wrong dimension".into()));
    }
    if !germ.domain.contains(z0) {
        return Err(Error::LeftDomain { t: t0 });
    }
    let bps = germ.h.breakpoints();
    let z = integrate(
        |t, y| germ.vector_field(t, y.as_slice()),
        t0,
        t1,
        DVector::from_column_slice(z0),
        tol,
        &bps,
        |y| germ.domain.contains(y.as_slice()),
    )?;
    let energy_drift = germ
        .is_autonomous()
        .then(|| (germ.value(t1, z.as_slice()) - germ.value(t0, z0)).abs());
    Ok(FlowResult { z: z.as_slice().to_vec(), energy_drift })
}

/// Time-one map `φ(z)` together with `Dφ(z)`.
pub fn flow_with_derivative(
    germ: &HamiltonianGerm,
    z0: &[f64],
    t0: f64,
    t1: f64,
    tol: Tolerances,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let d = 2 * germ.n();
    let mut y0 = DVector::zeros(d + d * d);
    y0.rows_mut(0, d).copy_from_slice(z0);
    for i in 0..d {
        y0[d + i * d + i] = 1.0;
    }
    let (z, phi) = variational_step(germ, y0, t0, t1, tol)?;
    Ok((z, phi))
}

fn variational_step(
    germ: &HamiltonianGerm,
    y0: DVector<f64>,
    t0: f64,
    t1: f64,
    tol: Tolerances,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = germ.n();
    let d = 2 * n;
    let j = standard_j(n);
    let bps = germ.h.breakpoints();
    let y = integrate(
        |t, y| {
            let z = &y.as_slice()[..d];
            let mut out = DVector::zeros(d + d * d);
            out.rows_mut(0, d).copy_from(&germ.vector_field(t, z));
            let a = &j * germ.hessian(t, z);
            let phi = DMatrix::from_column_slice(d, d, &y.as_slice()[d..]);
            let dphi = a * phi;
            out.rows_mut(d, d * d).copy_from_slice(dphi.as_slice());
            out
        },
        t0,
        t1,
        y0,
        tol,
        &bps,
        |y| germ.domain.contains(&y.as_slice()[..d]),
    )?;
    Ok((y.as_slice()[..d].to_vec(), DMatrix::from_column_slice(d, d, &y.as_slice()[d..])))
}

/// Orbit samples on a uniform time grid together with the linearized flow.
#[derive(Debug, Clone)]
pub struct Orbit {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub path: SymplecticPath,
}

pub fn trace_orbit(germ: &HamiltonianGerm, z0: &[f64], segments: usize, tol: Tolerances) -> Result<Orbit> {
    let d = 2 * germ.n();
    let mut y = DVector::zeros(d + d * d);
    y.rows_mut(0, d).copy_from_slice(z0);
    for i in 0..d {
        y[d + i * d + i] = 1.0;
    }
    let mut times = vec![0.0];
    let mut points = vec![z0.to_vec()];
    let mut samples = vec![(0.0, DMatrix::identity(d, d))];
    for s in 0..segments {
        let (t0, t1) = (s as f64 / segments as f64, (s + 1) as f64 / segments as f64);
        let (z, phi) = variational_step(germ, y.clone(), t0, t1, tol)?;
        y.rows_mut(0, d).copy_from_slice(&z);
        y.rows_mut(d, d * d).copy_from_slice(phi.as_slice());
        times.push(t1);
        points.push(z);
        samples.push((t1, phi));
    }
    let path = SymplecticPath::new(germ.n(), samples)?;
    Ok(Orbit { times, points, path })
}

/// Heuristic sample count so that `arg rho` moves less than a quarter turn
/// per segment.
fn monodromy_segments(germ: &HamiltonianGerm, z: &[f64]) -> usize {
    let j = standard_j(germ.n());
    let rate = (0..32)
        .map(|i| (&j * germ.hessian(i as f64 / 32.0, z)).norm())
        .fold(0.0, f64::max);
    (8.0 * rate).ceil().max(64.0) as usize
}

/// Linearized flow along the orbit through `z_fixed`, refined by doubling
/// until its mean index is resolved.
pub fn monodromy(germ: &HamiltonianGerm, z_fixed: &[f64]) -> Result<SymplecticPath> {
    Ok(monodromy_orbit(germ, z_fixed, Tolerances::default())?.path)
}

pub fn monodromy_orbit(germ: &HamiltonianGerm, z_fixed: &[f64], tol: Tolerances) -> Result<Orbit> {
    let mut segments = monodromy_segments(germ, z_fixed);
    loop {
        let orbit = trace_orbit(germ, z_fixed, segments, tol)?;
        match mean_index(&orbit.path) {
            Ok(_) => return Ok(orbit),
            Err(Error::WindingUnresolved { .. }) if segments < 1 << 14 => segments *= 2,
            Err(e) => return Err(e),
        }
    }
}

/// Closed curve samples at increasing times spanning `[0, 1]`; the last
/// point repeats the first. Velocities, if present, make the area term
/// spectrally accurate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledLoop {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub velocities: Option<Vec<Vec<f64>>>,
}

/// `A_H(γ) = −∮ y dx + ∫₀¹ H(t, γ(t)) dt`.
pub fn action(germ: &HamiltonianGerm, lp: &SampledLoop) -> Result<f64> {
    let n = germ.n();
    let m = lp.points.len();
    if m < 2 || lp.times.len() != m {
        return Err(Error::InvalidParameter("loop needs matching times and points".into()));
    }
    let gap = lp.points[0]
        .iter()
        .zip(&lp.points[m - 1])
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if gap > 1e-8 {
        return Err(Error::NotClosed { gap });
    }
    if lp.points.iter().any(|p| !germ.domain.contains(p)) {
        return Err(Error::LeftDomain { t: 0.0 });
    }
    let mut area = 0.0;
    let mut energy = 0.0;
    for i in 0..m - 1 {
        let dt = lp.times[i + 1] - lp.times[i];
        let (p, q) = (&lp.points[i], &lp.points[i + 1]);
        match &lp.velocities {
            Some(v) => {
                let f = |z: &[f64], w: &[f64]| (0..n).map(|j| z[n + j] * w[j]).sum::<f64>();
                area += 0.5 * dt * (f(p, &v[i]) + f(q, &v[i + 1]));
            }
            None => {
                area += (0..n).map(|j| 0.5 * (p[n + j] + q[n + j]) * (q[j] - p[j])).sum::<f64>();
            }
        }
        energy += 0.5 * dt * (germ.value(lp.times[i], p) + germ.value(lp.times[i + 1], q));
    }
    Ok(-area + energy)
}

/// The orbit through a fixed point as a loop with exact velocities.
pub fn orbit_loop(germ: &HamiltonianGerm, orbit: &Orbit) -> SampledLoop {
    let mut points = orbit.points.clone();
    let last = points.len() - 1;
    points[last] = points[0].clone();
    let velocities = orbit
        .times
        .iter()
        .zip(&points)
        .map(|(&t, z)| germ.vector_field(t, z).as_slice().to_vec())
        .collect();
    SampledLoop { times: orbit.times.clone(), points, velocities: Some(velocities) }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Degeneracy {
    Nondegenerate,
    WeaklyDegenerate,
    StronglyDegenerate,
}

impl fmt::Display for Degeneracy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Degeneracy::Nondegenerate => "nondegenerate",
            Degeneracy::WeaklyDegenerate => "weakly_degenerate",
            Degeneracy::StronglyDegenerate => "strongly_degenerate",
        })
    }
}

/// Classification from the dimension of the generalized 1-eigenspace.
pub fn classify(m: &SymplecticMatrix) -> Degeneracy {
    let (ones, _) = unipotent_rank(m.matrix(), 1e-9, 100.0);
    if ones == 0 {
        Degeneracy::Nondegenerate
    } else if ones == m.dim() {
        Degeneracy::StronglyDegenerate
    } else {
        Degeneracy::WeaklyDegenerate
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixedPointRecord {
    pub z: Vec<f64>,
    pub residual: f64,
    pub linearization: SymplecticMatrix,
    pub monodromy: SymplecticPath,
    pub action: f64,
    pub delta: f64,
    pub cz: Option<i64>,
    pub degeneracy: Degeneracy,
}

/// Builds the full record for a known fixed point.
pub fn fixed_point_record(germ: &HamiltonianGerm, z: &[f64], residual: f64) -> Result<FixedPointRecord> {
    let tol = Tolerances::default();
    let orbit = monodromy_orbit(germ, z, tol)?;
    let end = orbit.path.matrices().last().expect("nonempty path").clone();
    let linearization = validate_symplectic(end, 1e-7)?;
    let delta = mean_index(&orbit.path)?;
    let cz = match conley_zehnder(&orbit.path) {
        Ok(v) => Some(v),
        Err(Error::DegenerateEndpoint { .. }) => None,
        Err(e) => return Err(e),
    };
    let action = action(germ, &orbit_loop(germ, &orbit))?;
    let degeneracy = classify(&linearization);
    Ok(FixedPointRecord {
        z: z.to_vec(),
        residual,
        linearization,
        monodromy: orbit.path,
        action,
        delta,
        cz,
        degeneracy,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SearchDiagnostic {
    NonIsolated { z: Vec<f64> },
    NewtonDivergence { seed: Vec<f64>, reason: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixedPointSearch {
    pub records: Vec<FixedPointRecord>,
    pub diagnostics: Vec<SearchDiagnostic>,
}

impl FixedPointSearch {
    pub fn non_isolated(&self) -> bool {
        self.diagnostics.iter().any(|d| matches!(d, SearchDiagnostic::NonIsolated { .. }))
    }
}

/// Outcome of Newton's method from one seed.
#[derive(Debug, Clone)]
pub struct NewtonRun {
    pub z: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Estimated distance to the true fixed point.
    pub error_estimate: f64,
    pub jacobian: DMatrix<f64>,
}

const NEWTON_MAX_ITER: usize = 200;

/// Newton on `φ(z) − z` with an SVD pseudo-inverse and backtracking. Keeps
/// iterating below `newton_tol` until the residual stalls so that slowly
/// converging degenerate points are located precisely.
pub fn newton_fixed_point(germ: &HamiltonianGerm, seed: &[f64], newton_tol: f64) -> Result<NewtonRun> {
    let tol = Tolerances::default();
    newton_on_map(
        |z| flow_with_derivative(germ, z, 0.0, 1.0, tol),
        |z| germ.domain.contains(z),
        seed,
        newton_tol,
    )
}

/// Newton on `f(z) − z` for any map returning its value and derivative.
pub(crate) fn newton_on_map(
    eval: impl Fn(&[f64]) -> Result<(Vec<f64>, DMatrix<f64>)>,
    contains: impl Fn(&[f64]) -> bool,
    seed: &[f64],
    newton_tol: f64,
) -> Result<NewtonRun> {
    let d = seed.len();
    let id = DMatrix::<f64>::identity(d, d);
    let mut z = seed.to_vec();
    let (mut fz, mut jac) = eval(&z)?;
    let residual_of = |fz: &[f64], z: &[f64]| fz.iter().zip(z).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let mut r = residual_of(&fz, &z);
    let mut residuals = vec![r];
    let mut steps: Vec<f64> = Vec::new();
    let floor = newton_tol * 1e-4;
    for _ in 0..NEWTON_MAX_ITER {
        if r <= floor {
            break;
        }
        let a = &jac - &id;
        let f = DVector::from_iterator(d, fz.iter().zip(&z).map(|(a, b)| a - b));
        let svd = a.svd(true, true);
        let cutoff = 1e-14;
        let dz = svd.solve(&(-f), cutoff).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..12 {
            let cand: Vec<f64> = z.iter().zip(dz.iter()).map(|(a, b)| a + lambda * b).collect();
            if contains(&cand) {
                if let Ok((fc, jc)) = eval(&cand) {
                    let rc = residual_of(&fc, &cand);
                    if rc < r {
                        accepted = Some((cand, fc, jc, rc));
                        break;
                    }
                }
            }
            lambda *= 0.5;
        }
        let Some((cand, fc, jc, rc)) = accepted else { break };
        steps.push(lambda * dz.norm());
        let stalled = rc > 0.999 * r;
        z = cand;
        fz = fc;
        jac = jc;
        r = rc;
        residuals.push(r);
        if stalled && r <= newton_tol {
            break;
        }
    }
    let error_estimate = match steps.as_slice() {
        [.., a, b] if *a > 0.0 => {
            let ratio = (b / a).min(0.95);
            b * ratio / (1.0 - ratio)
        }
        [.., b] => *b,
        [] => 0.0,
    };
    Ok(NewtonRun { z, residuals, error_estimate, jacobian: jac })
}

fn residual_at(germ: &HamiltonianGerm, z: &[f64]) -> Option<f64> {
    if !germ.domain.contains(z) {
        return None;
    }
    let r = flow(germ, z, 0.0, 1.0, Tolerances::default()).ok()?;
    Some(r.z.iter().zip(z).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
}

/// A converged point is flagged non-isolated when the residual stays below
/// `10·newton_tol` after moving along the kernel of `Dφ − I`.
fn is_non_isolated(germ: &HamiltonianGerm, run: &NewtonRun, probe: f64, newton_tol: f64) -> bool {
    let d = run.z.len();
    let a = &run.jacobian - DMatrix::<f64>::identity(d, d);
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let (idx, smin) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, s)| (i, *s))
        .expect("nonempty");
    if smin > 1e-6 {
        return false;
    }
    let v: Vec<f64> = v_t.row(idx).iter().copied().collect();
    [probe, -probe].iter().all(|&eps| {
        let q: Vec<f64> = run.z.iter().zip(&v).map(|(a, b)| a + eps * b).collect();
        match residual_at(germ, &q) {
            Some(r) => r <= 10.0 * newton_tol,
            None => false,
        }
    })
}

/// Newton from every node of a `grid_density^{2n}` grid on `region`;
/// converged points are merged, classified and fully recorded.
pub fn find_fixed_points(
    germ: &HamiltonianGerm,
    region: &BoxDomain,
    grid_density: usize,
    newton_tol: f64,
) -> Result<FixedPointSearch> {
    if !germ.domain.contains_box(region) {
        return Err(Error::InvalidParameter("search box must lie inside the germ domain".into()));
    }
    let d = region.dim();
    let g = grid_density.max(1);
    let total = g.pow(d as u32);
    let seeds: Vec<Vec<f64>> = (0..total)
        .map(|mut idx| {
            (0..d)
                .map(|a| {
                    let i = idx % g;
                    idx /= g;
                    if g == 1 {
                        0.5 * (region.lo[a] + region.hi[a])
                    } else {
                        region.lo[a] + (region.hi[a] - region.lo[a]) * i as f64 / (g - 1) as f64
                    }
                })
                .collect()
        })
        .collect();
    let outcomes: Vec<(Vec<f64>, Result<NewtonRun>)> = seeds
        .par_iter()
        .map(|s| (s.clone(), newton_fixed_point(germ, s, newton_tol)))
        .collect();

    let mut diagnostics = Vec::new();
    let mut converged = Vec::new();
    for (seed, out) in outcomes {
        match out {
            Ok(run) if run.residuals.last().copied().unwrap_or(f64::INFINITY) <= newton_tol => {
                if region.contains(&run.z) {
                    converged.push(run);
                }
            }
            Ok(run) => diagnostics.push(SearchDiagnostic::NewtonDivergence {
                seed,
                reason: format!("residual {:.3e}", run.residuals.last().copied().unwrap_or(f64::NAN)),
            }),
            Err(e) => diagnostics.push(SearchDiagnostic::NewtonDivergence { seed, reason: e.to_string() }),
        }
    }
    converged.sort_by(|a, b| a.z.partial_cmp(&b.z).unwrap_or(std::cmp::Ordering::Equal));

    let mut clusters: Vec<Vec<NewtonRun>> = Vec::new();
    for run in converged {
        let hit = clusters.iter_mut().find(|c| {
            c.iter().any(|o| {
                let dist = o.z.iter().zip(&run.z).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                dist <= 10.0 * newton_tol + 4.0 * (o.error_estimate + run.error_estimate)
            })
        });
        match hit {
            Some(c) => c.push(run),
            None => clusters.push(vec![run]),
        }
    }
    let reps: Vec<NewtonRun> = clusters
        .into_iter()
        .map(|c| {
            c.into_iter()
                .min_by(|a, b| {
                    let ra = a.residuals.last().copied().unwrap_or(f64::INFINITY);
                    let rb = b.residuals.last().copied().unwrap_or(f64::INFINITY);
                    ra.partial_cmp(&rb).unwrap()
                })
                .expect("nonempty cluster")
        })
        .collect();

    let probe = 0.05 * region.min_half_width();
    let isolated: Vec<bool> = reps.par_iter().map(|r| !is_non_isolated(germ, r, probe, newton_tol)).collect();
    let mut kept = Vec::new();
    for (run, iso) in reps.into_iter().zip(isolated) {
        if iso {
            kept.push(run);
        } else {
            diagnostics.push(SearchDiagnostic::NonIsolated { z: run.z });
        }
    }
    for i in 0..kept.len() {
        for j in (i + 1)..kept.len() {
            let dist = kept[i].z.iter().zip(&kept[j].z).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            if dist < 100.0 * newton_tol {
                diagnostics.push(SearchDiagnostic::NonIsolated { z: kept[i].z.clone() });
            }
        }
    }
    let records: Vec<Result<FixedPointRecord>> = kept
        .par_iter()
        .map(|r| fixed_point_record(germ, &r.z, r.residuals.last().copied().unwrap_or(0.0)))
        .collect();
    let records = records.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(FixedPointSearch { records, diagnostics })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub orbit_a: usize,
    pub orbit_b: usize,
    pub k: usize,
    pub action_gap: f64,
    pub index_gap: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapTable {
    pub rows: Vec<GapRow>,
}

/// Action, index and action–index gaps of all pairs under the iterations
/// `ks`, with `A_{H^{#k}}(γ^k) = k A_H(γ)` and `Δ_{H^{#k}}(γ^k) = k Δ_H(γ)`.
pub fn gap_table(records: &[FixedPointRecord], ks: &[usize]) -> Result<GapTable> {
    if records.len() < 2 {
        return Err(Error::InvalidParameter("gap table needs at least two records".into()));
    }
    for &k in ks {
        for r in records {
            if !admissible(&r.linearization, k)? {
                return Err(Error::NotAdmissible { k });
            }
        }
    }
    let mut rows = Vec::new();
    for &k in ks {
        for i in 0..records.len() {
            for j in (i + 1)..records.len() {
                let kf = k as f64;
                let action_gap = (kf * records[i].action - kf * records[j].action).abs();
                let index_gap = (kf * records[i].delta - kf * records[j].delta).abs();
                rows.push(GapRow { orbit_a: i, orbit_b: j, k, action_gap, index_gap, gamma: action_gap + index_gap });
            }
        }
    }
    Ok(GapTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symplin::rotation;

    fn quadratic(a: f64) -> HamiltonianGerm {
        let h = FnHamiltonian::new(1, move |_, z| 0.5 * a * (z[0] * z[0] + z[1] * z[1]))
            .autonomous()
            .with_gradient(move |_, z| DVector::from_vec(vec![a * z[0], a * z[1]]))
            .with_hessian(move |_, _| DMatrix::identity(2, 2) * a);
        HamiltonianGerm::new("quadratic", h, BoxDomain::cube(2, 2.0)).unwrap()
    }

    #[test]
    fn minimum_rotates_clockwise() {
        let a = 0.7;
        let r = flow(&quadratic(a), &[1.0, 0.0], 0.0, 1.0, Tolerances::default()).unwrap();
        let expected = rotation(-a) * DVector::from_vec(vec![1.0, 0.0]);
        assert!((r.z[0] - expected[0]).abs() < 1e-11 && (r.z[1] - expected[1]).abs() < 1e-11);
        assert!(r.energy_drift.unwrap() < 1e-10);
    }

    #[test]
    fn fd_derivatives_match_analytic() {
        let h = FnHamiltonian::new(1, |_, z| z[0].powi(3) * z[1] + z[1].sin());
        let z = [0.3, -0.4];
        let g = h.gradient(0.0, &z);
        assert!((g[0] - 3.0 * 0.09 * -0.4).abs() < 1e-9);
        assert!((g[1] - (0.027 + (-0.4f64).cos())).abs() < 1e-9);
        let hs = h.hessian(0.0, &z);
        assert!((hs[(0, 1)] - 0.27).abs() < 1e-5);
    }

    #[test]
    fn monodromy_of_maximum_has_index_one() {
        let p = monodromy(&quadratic(-1.0), &[0.0, 0.0]).unwrap();
        assert!((mean_index(&p).unwrap() - 1.0 / std::f64::consts::PI).abs() < 1e-9);
        assert_eq!(conley_zehnder(&p).unwrap(), 1);
    }

    #[test]
    fn iterate_is_power_of_time_one_map() {
        let g = quadratic(0.9);
        let g3 = g.iterate(3).unwrap();
        assert_eq!(g3.period_span, 3);
        let a = flow(&g3, &[0.5, 0.2], 0.0, 1.0, Tolerances::default()).unwrap();
        let mut z = vec![0.5, 0.2];
        for _ in 0..3 {
            z = flow(&g, &z, 0.0, 1.0, Tolerances::default()).unwrap().z;
        }
        assert!((a.z[0] - z[0]).abs() < 1e-10 && (a.z[1] - z[1]).abs() < 1e-10);
    }

    #[test]
    fn composition_law() {
        let k = quadratic(0.8);
        let shear = FnHamiltonian::new(1, |_, z| 0.5 * z[1] * z[1] + 0.1 * z[0].powi(3));
        let h = HamiltonianGerm::new("h", shear, BoxDomain::cube(2, 2.0)).unwrap();
        let kh = k.compose_after(&h).unwrap();
        for p in [[0.3, 0.1], [-0.2, 0.4]] {
            let a = flow(&kh, &p, 0.0, 1.0, Tolerances::default()).unwrap().z;
            let mid = flow(&h, &p, 0.0, 1.0, Tolerances::default()).unwrap().z;
            let b = flow(&k, &mid, 0.0, 1.0, Tolerances::default()).unwrap().z;
            assert!((a[0] - b[0]).abs() < 1e-8 && (a[1] - b[1]).abs() < 1e-8);
        }
    }

    #[test]
    fn action_conventions() {
        let a = 0.6;
        let g = quadratic(a);
        let constant = SampledLoop { times: vec![0.0, 1.0], points: vec![vec![0.3, 0.4]; 2], velocities: None };
        assert!((action(&g, &constant).unwrap() - 0.5 * a * 0.25).abs() < 1e-14);
        // clockwise unit-speed circle of radius r: −∮ y dx = −π r²
        let r = 0.8;
        let m = 4000;
        let times: Vec<f64> = (0..=m).map(|i| i as f64 / m as f64).collect();
        let points: Vec<Vec<f64>> = times.iter().map(|t| vec![r * (TAU * t).cos(), -r * (TAU * t).sin()]).collect();
        let lp = SampledLoop { times, points, velocities: None };
        let expected = -std::f64::consts::PI * r * r + 0.5 * a * r * r;
        assert!((action(&g, &lp).unwrap() - expected).abs() < 1e-5);
        let open = SampledLoop { times: vec![0.0, 1.0], points: vec![vec![0.0, 0.0], vec![1.0, 0.0]], velocities: None };
        assert!(matches!(action(&g, &open), Err(Error::NotClosed { .. })));
    }

    #[test]
    fn rotation_has_single_fixed_point() {
        let g = quadratic(1.0);
        let s = find_fixed_points(&g, &BoxDomain::cube(2, 1.0), 4, 1e-10).unwrap();
        assert_eq!(s.records.len(), 1);
        assert!(s.records[0].z.iter().all(|v| v.abs() < 1e-9));
        assert_eq!(s.records[0].cz, Some(-1));
        assert_eq!(s.records[0].degeneracy, Degeneracy::Nondegenerate);
    }

    #[test]
    fn zero_hamiltonian_is_non_isolated() {
        let h = FnHamiltonian::new(1, |_, _| 0.0).autonomous();
        let g = HamiltonianGerm::new("zero", h, BoxDomain::cube(2, 1.0)).unwrap();
        let s = find_fixed_points(&g, &BoxDomain::cube(2, 0.5), 3, 1e-10).unwrap();
        assert!(s.records.is_empty());
        assert!(s.non_isolated());
    }
}
