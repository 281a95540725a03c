//! Persistence of isolation under iteration: the discrete zero-mean L¹
//! constant `c(k)`, a periodic-point search, and the contraction
//! certificate that every `k`-periodic orbit near a tangent-to-identity
//! fixed point is a fixed point.

use std::cmp::Ordering;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genfun::GermMap;
use crate::hamflow::newton_on_map;
use crate::symplin::{admissible, validate_symplectic};

/// A `k`-periodic sequence `ξ : Z_k → R^m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteOrbit {
    pub points: Vec<Vec<f64>>,
}

impl DiscreteOrbit {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let m = points.first().map(Vec::len).ok_or_else(|| Error::InvalidParameter("empty orbit".into()))?;
        if points.iter().any(|p| p.len() != m) {
            return Err(Error::Dimension("orbit points differ in dimension".into()));
        }
        Ok(Self { points })
    }

    pub fn k(&self) -> usize {
        self.points.len()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    /// `ξ̇_l = ξ_{l+1} − ξ_l`, indices mod `k`.
    pub fn derivative(&self) -> Self {
        let k = self.k();
        let points = (0..k)
            .map(|l| self.points[(l + 1) % k].iter().zip(&self.points[l]).map(|(a, b)| a - b).collect())
            .collect();
        Self { points }
    }

    /// `Σ ‖ξ_l‖` with Euclidean point norms.
    pub fn l1_norm(&self) -> f64 {
        self.points.iter().map(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt()).sum()
    }

    pub fn mean(&self) -> Vec<f64> {
        let k = self.k() as f64;
        (0..self.dim()).map(|i| self.points.iter().map(|p| p[i]).sum::<f64>() / k).collect()
    }

    pub fn centered(&self) -> Self {
        let mu = self.mean();
        Self { points: self.points.iter().map(|p| p.iter().zip(&mu).map(|(a, b)| a - b).collect()).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CConstant {
    pub k: usize,
    pub value: f64,
    /// A zero-mean sequence attaining `‖ξ‖ = c(k)‖ξ̇‖`.
    pub maximizer: Vec<f64>,
    /// `|‖ξ‖ − c(k)‖ξ̇‖|` at the maximizer.
    pub equality_defect: f64,
}

/// `c(k)`: the largest `‖ξ‖_{L¹}` over zero-mean `ξ` with `‖ξ̇‖_{L¹} ≤ 1`.
///
/// In one dimension `ξ ↦ ξ̇` maps the zero-mean sequences bijectively onto
/// the sequences summing to zero, so the feasible set is a section of the
/// cross-polytope whose vertices are `(e_i − e_j)/2`. The convex objective
/// is maximized at one of them. Projecting onto unit directions shows the
/// constant is the same in every dimension `m`.
pub fn c_constant(k: usize, m: usize) -> Result<CConstant> {
    if k < 2 {
        return Err(Error::InvalidParameter("c(k) needs k >= 2".into()));
    }
    if m == 0 {
        return Err(Error::InvalidParameter("dimension must be positive".into()));
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let mut eta = vec![0.0; k];
            eta[i] = 0.5;
            eta[j] = -0.5;
            let mut xi = vec![0.0; k];
            for l in 1..k {
                xi[l] = xi[l - 1] + eta[l - 1];
            }
            let mean = xi.iter().sum::<f64>() / k as f64;
            xi.iter_mut().for_each(|v| *v -= mean);
            let norm: f64 = xi.iter().map(|v| v.abs()).sum();
            if best.as_ref().is_none_or(|(b, _)| norm > *b) {
                best = Some((norm, xi));
            }
        }
    }
    let (value, maximizer) = best.expect("k >= 2 gives vertices");
    let orbit = DiscreteOrbit::new(maximizer.iter().map(|v| vec![*v]).collect())?;
    let equality_defect = (orbit.l1_norm() - value * orbit.derivative().l1_norm()).abs();
    Ok(CConstant { k, value, maximizer, equality_defect })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub k: usize,
    pub m: usize,
    pub samples: usize,
    pub c: f64,
    pub max_ratio: f64,
    pub violations: usize,
}

/// Samples random zero-mean sequences and records `max ‖ξ‖/‖ξ̇‖`.
pub fn sample_inequality(k: usize, m: usize, samples: usize, seed: u64) -> Result<InequalityCheck> {
    let c = c_constant(k, m)?.value;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((k as u64) << 32) ^ m as u64);
    let mut max_ratio = 0.0f64;
    let mut violations = 0;
    for s in 0..samples {
        // Alternate dense noise with two-level step sequences, which sit
        // near the extremal vertices.
        let points: Vec<Vec<f64>> = if s % 2 == 0 {
            (0..k).map(|_| (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
        } else {
            let len = rng.gen_range(1..k);
            let start = rng.gen_range(0..k);
            let dir: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            (0..k)
                .map(|l| {
                    let on = (l + k - start) % k < len;
                    dir.iter().map(|d| if on { *d } else { 0.0 } + 1e-3 * rng.gen_range(-1.0..1.0)).collect()
                })
                .collect()
        };
        let xi = DiscreteOrbit::new(points)?.centered();
        let dn = xi.derivative().l1_norm();
        if dn == 0.0 {
            continue;
        }
        let ratio = xi.l1_norm() / dn;
        max_ratio = max_ratio.max(ratio);
        if ratio > c * (1.0 + 1e-12) {
            violations += 1;
        }
    }
    Ok(InequalityCheck { k, m, samples, c, max_ratio, violations })
}

/// CSV table `k, c, equality_defect`.
pub fn write_c_table<W: std::io::Write>(ks: &[usize], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["k", "c", "equality_defect"])?;
    for &k in ks {
        let c = c_constant(k, 1)?;
        wr.write_record([k.to_string(), format!("{:.17}", c.value), format!("{:.3e}", c.equality_defect)])?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub struct SearchOptions {
    /// Seeds per axis of the grid covering each ball.
    pub grid: usize,
    pub newton_tol: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self { grid: 17, newton_tol: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicPoint {
    pub z: Vec<f64>,
    pub norm: f64,
    pub residual: f64,
    /// Identified with the fixed point at the origin.
    pub is_origin: bool,
    /// `φ(z) = z` within tolerance.
    pub is_fixed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusResult {
    pub radius: f64,
    pub points: Vec<PeriodicPoint>,
    pub diverged: usize,
}

impl RadiusResult {
    pub fn only_origin(&self) -> bool {
        self.points.iter().all(|p| p.is_origin)
    }

    pub fn non_fixed(&self) -> impl Iterator<Item = &PeriodicPoint> {
        self.points.iter().filter(|p| !p.is_fixed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IsolationConclusion {
    IsolationHolds,
    IsolationFails,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicSearchReport {
    pub k: usize,
    pub admissible: bool,
    pub per_radius: Vec<RadiusResult>,
    pub conclusion: IsolationConclusion,
}

impl PeriodicSearchReport {
    /// `k`-periodic points that are not fixed, over all radii.
    pub fn non_fixed_witnesses(&self) -> usize {
        self.per_radius.iter().map(|r| r.non_fixed().count()).sum()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn ball_seeds(d: usize, radius: f64, g: usize) -> Vec<Vec<f64>> {
    let g = g.max(2);
    let total = g.pow(d as u32);
    (0..total)
        .map(|mut idx| {
            (0..d)
                .map(|_| {
                    let i = idx % g;
                    idx /= g;
                    -radius + 2.0 * radius * i as f64 / (g - 1) as f64
                })
                .collect::<Vec<f64>>()
        })
        .filter(|z| norm(z) <= radius * (1.0 + 1e-12))
        .collect()
}

/// Newton from a grid of seeds in each ball `‖z‖ ≤ r` for fixed points of
/// `φ^k`. Isolation holds iff only the origin is found at the smallest radius.
pub fn periodic_point_search(phi: &GermMap, k: usize, radii: &[f64]) -> Result<PeriodicSearchReport> {
    periodic_point_search_with(phi, k, radii, SearchOptions::default())
}

pub fn periodic_point_search_with(
    phi: &GermMap,
    k: usize,
    radii: &[f64],
    opts: SearchOptions,
) -> Result<PeriodicSearchReport> {
    if radii.is_empty() {
        return Err(Error::InvalidParameter("no radii".into()));
    }
    let d = 2 * phi.n;
    let (_, d0) = phi.eval(&vec![0.0; d])?;
    let is_admissible = admissible(&validate_symplectic(d0, 1e-6)?, k)?;
    let pk = phi.power(k)?;
    let tol = opts.newton_tol;
    let mut sorted: Vec<f64> = radii.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
    let mut per_radius = Vec::new();
    for &r in &sorted {
        let seeds = ball_seeds(d, r, opts.grid);
        let runs: Vec<_> = seeds
            .par_iter()
            .map(|s| newton_on_map(|z| pk.eval(z), |z| phi.domain.contains(z), s, tol))
            .collect();
        let mut diverged = 0;
        let mut found = Vec::new();
        for run in runs {
            match run {
                Ok(run) if run.residuals.last().copied().unwrap_or(f64::INFINITY) <= tol => {
                    if norm(&run.z) <= r * (1.0 + 1e-9) {
                        found.push(run);
                    }
                }
                _ => diverged += 1,
            }
        }
        found.sort_by(|a, b| a.z.partial_cmp(&b.z).unwrap_or(Ordering::Equal));
        let mut reps: Vec<crate::hamflow::NewtonRun> = Vec::new();
        for run in found {
            let dup = reps.iter().any(|o| {
                let dist = norm(&o.z.iter().zip(&run.z).map(|(a, b)| a - b).collect::<Vec<_>>());
                dist <= 10.0 * tol + 4.0 * (o.error_estimate + run.error_estimate)
            });
            if !dup {
                reps.push(run);
            }
        }
        let points = reps
            .par_iter()
            .map(|run| {
                let (p, _) = phi.eval(&run.z)?;
                let step = norm(&p.iter().zip(&run.z).map(|(a, b)| a - b).collect::<Vec<_>>());
                let nz = norm(&run.z);
                Ok(PeriodicPoint {
                    z: run.z.clone(),
                    norm: nz,
                    residual: run.residuals.last().copied().unwrap_or(0.0),
                    is_origin: nz <= 10.0 * tol + 4.0 * run.error_estimate,
                    is_fixed: step <= 10.0 * tol,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        per_radius.push(RadiusResult { radius: r, points, diverged });
    }
    let conclusion = if per_radius.last().expect("nonempty").only_origin() {
        IsolationConclusion::IsolationHolds
    } else {
        IsolationConclusion::IsolationFails
    };
    Ok(PeriodicSearchReport { k, admissible: is_admissible, per_radius, conclusion })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub k: usize,
    pub half_width: f64,
    /// Largest `‖Dφ − I‖₂` over the grid, the Lipschitz constant of `φ − id`.
    pub lipschitz: f64,
    pub threshold: f64,
    pub certified: bool,
    /// When certified: the search found no `k`-periodic point that is not fixed.
    pub cross_check: Option<bool>,
}

/// Certifies that every `k`-periodic orbit in the cube is a fixed point
/// when `φ − id` has Lipschitz constant below `1/c(k)` there.
pub fn contraction_check(phi: &GermMap, k: usize, half_width: f64, resolution: usize) -> Result<ContractionReport> {
    let d = 2 * phi.n;
    let id = DMatrix::<f64>::identity(d, d);
    let (_, d0) = phi.eval(&vec![0.0; d])?;
    let defect = (&d0 - &id).amax();
    if defect > 1e-8 {
        return Err(Error::LinearizationNotIdentity { defect });
    }
    let g = resolution.max(2);
    let nodes: Vec<Vec<f64>> = (0..g.pow(d as u32))
        .map(|mut idx| {
            (0..d)
                .map(|_| {
                    let i = idx % g;
                    idx /= g;
                    -half_width + 2.0 * half_width * i as f64 / (g - 1) as f64
                })
                .collect()
        })
        .collect();
    let lipschitz = nodes
        .par_iter()
        .map(|z| {
            let (_, dz) = phi.eval(z)?;
            Ok((dz - &id).singular_values().max())
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let threshold = 1.0 / c_constant(k, d)?.value;
    let certified = lipschitz < threshold;
    let cross_check = if certified {
        let report = periodic_point_search_with(phi, k, &[half_width], SearchOptions { grid: 9, newton_tol: 1e-10 })?;
        Some(report.non_fixed_witnesses() == 0)
    } else {
        None
    };
    Ok(ContractionReport { k, half_width, lipschitz, threshold, certified, cross_check })
}
