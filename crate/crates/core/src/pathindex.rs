//! Index theory of symplectic paths: mean index, Conley–Zehnder index and the
//! Maslov index of loops.
//!
//! The mean index is the total winding of the Krein-signature angle map
//! [`rho`] divided by π. Orientation: the flow of a nondegenerate maximum with
//! small Hessian rotates counterclockwise and has positive mean index, and its
//! Conley–Zehnder index is `n`.

use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symplin::{
    eigenvalues_snapped, omega_matrix, standard_j, symplectic_defect, unipotent_rank, SymplecticMatrix, C64,
};

/// Endpoint eigenvalues within this distance of 1 make the endpoint degenerate.
pub const DEGENERACY_TOL: f64 = 1e-8;
/// Refinement agreement tolerance on the winding.
pub const WINDING_TOL: f64 = 1e-9;
/// Maximal number of samples for step-doubling refinement.
pub const MAX_SAMPLES: usize = 1 << 20;
/// Largest admissible change of `arg rho` between consecutive samples.
const MAX_ARG_STEP: f64 = PI / 2.0;

const CLUSTER_TOL: f64 = 1e-5;
const CIRCLE_TOL: f64 = 1e-6;

/// A time-sampled path in `Sp(2n)` starting at the identity on `t ∈ [0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticPath {
    n: usize,
    times: Vec<f64>,
    mats: Vec<DMatrix<f64>>,
}

#[derive(Serialize, Deserialize)]
struct SampleRepr {
    t: f64,
    m: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct PathRepr {
    n: usize,
    samples: Vec<SampleRepr>,
}

impl Serialize for SymplecticPath {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PathRepr {
            n: self.n,
            samples: self
                .times
                .iter()
                .zip(&self.mats)
                .map(|(&t, m)| SampleRepr { t, m: crate::symplin::matrix_to_rows(m) })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SymplecticPath {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = PathRepr::deserialize(d)?;
        let mut samples = Vec::with_capacity(repr.samples.len());
        for s in repr.samples {
            let m = crate::symplin::matrix_from_rows(&s.m).map_err(serde::de::Error::custom)?;
            samples.push((s.t, m));
        }
        SymplecticPath::new(repr.n, samples).map_err(serde::de::Error::custom)
    }
}

impl SymplecticPath {
    /// Validates and wraps a list of `(t, M_t)` samples.
    pub fn new(n: usize, samples: Vec<(f64, DMatrix<f64>)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidPath("need at least two samples".into()));
        }
        let (times, mats): (Vec<f64>, Vec<DMatrix<f64>>) = samples.into_iter().unzip();
        if times[0] != 0.0 || (times[times.len() - 1] - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidPath("samples must span [0, 1]".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidPath("times must be strictly increasing".into()));
        }
        for m in &mats {
            if m.nrows() != 2 * n || m.ncols() != 2 * n {
                return Err(Error::Dimension(format!("sample is {}x{}, expected {}", m.nrows(), m.ncols(), 2 * n)));
            }
        }
        let id = DMatrix::<f64>::identity(2 * n, 2 * n);
        if (&mats[0] - &id).amax() > 1e-9 {
            return Err(Error::InvalidPath("path must start at the identity".into()));
        }
        let worst = mats.iter().map(symplectic_defect).fold(0.0, f64::max);
        if worst > 1e-6 {
            return Err(Error::NotSymplectic { defect: worst });
        }
        Ok(Self { n, times, mats })
    }

    /// Samples `f` on a uniform grid with `segments` steps.
    pub fn from_fn(n: usize, segments: usize, f: impl Fn(f64) -> DMatrix<f64>) -> Result<Self> {
        let segments = segments.max(1);
        let samples = (0..=segments)
            .map(|i| {
                let t = i as f64 / segments as f64;
                (t, f(t))
            })
            .collect();
        Self::new(n, samples)
    }

    /// `t ↦ exp(t A)` for a Hamiltonian generator `A = J S`.
    pub fn exponential(generator: &DMatrix<f64>, segments: usize) -> Result<Self> {
        let n = generator.nrows() / 2;
        Self::from_fn(n, segments, |t| (generator * t).exp())
    }

    pub fn constant_identity(n: usize) -> Self {
        let id = DMatrix::identity(2 * n, 2 * n);
        Self { n, times: vec![0.0, 1.0], mats: vec![id.clone(), id] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.mats
    }

    pub fn endpoint(&self) -> SymplecticMatrix {
        SymplecticMatrix::trusted(self.mats[self.mats.len() - 1].clone())
    }

    /// The linearized iterated path: on `[j/k, (j+1)/k]` it is
    /// `M(kt − j) · M(1)^j`.
    pub fn iterate(&self, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("iteration k must be positive".into()));
        }
        let end = &self.mats[self.mats.len() - 1];
        let mut power = DMatrix::identity(2 * self.n, 2 * self.n);
        let mut times = Vec::with_capacity(k * (self.len() - 1) + 1);
        let mut mats = Vec::with_capacity(times.capacity());
        times.push(0.0);
        mats.push(power.clone());
        for j in 0..k {
            for (t, m) in self.times.iter().zip(&self.mats).skip(1) {
                times.push((j as f64 + t) / k as f64);
                mats.push(m * &power);
            }
            power = end * &power;
        }
        let last = times.len() - 1;
        times[last] = 1.0;
        Ok(Self { n: self.n, times, mats })
    }

    /// Pointwise direct sum on the union of the sample times. Both paths are
    /// interpolated linearly between samples, which leaves the winding of
    /// sufficiently fine paths unchanged.
    pub fn direct_sum(&self, other: &SymplecticPath) -> Self {
        let mut times: Vec<f64> = self.times.iter().chain(&other.times).copied().collect();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        times.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
        let mats = times
            .iter()
            .map(|&t| crate::symplin::direct_sum(&self.at(t), &other.at(t)))
            .collect();
        Self { n: self.n + other.n, times, mats }
    }

    /// Pointwise product `L(t) · M(t)` with a loop `L`.
    pub fn act_by_loop(&self, lp: &SymplecticPath) -> Result<Self> {
        if lp.n != self.n {
            return Err(Error::Dimension("loop and path dimensions differ".into()));
        }
        let mut times: Vec<f64> = self.times.iter().chain(&lp.times).copied().collect();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        times.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
        let mats = times.iter().map(|&t| lp.at(t) * self.at(t)).collect();
        Ok(Self { n: self.n, times, mats })
    }

    /// Sample at `t`, interpolated along the symplectic geodesic
    /// `exp(w log(M₁ M₀⁻¹)) M₀` between neighbouring samples.
    pub fn at(&self, t: f64) -> DMatrix<f64> {
        let i = self.times.partition_point(|&s| s <= t);
        if i == 0 {
            return self.mats[0].clone();
        }
        if i >= self.times.len() {
            return self.mats[self.mats.len() - 1].clone();
        }
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let w = (t - t0) / (t1 - t0);
        if w <= 0.0 {
            return self.mats[i - 1].clone();
        }
        match right_log(&self.mats[i - 1], &self.mats[i]) {
            Some(l) => (l * w).exp() * &self.mats[i - 1],
            None => &self.mats[i - 1] * (1.0 - w) + &self.mats[i] * w,
        }
    }
}

/// Eigenvalue data used by [`rho`] and the Conley–Zehnder correction:
/// `(λ, m⁻(λ))` for clusters of non-real eigenvalues on the unit circle, and
/// the number of negative real eigenvalues.
struct KreinData {
    circle: Vec<(C64, usize)>,
    negative_real: usize,
}

fn krein_data(m: &DMatrix<f64>) -> KreinData {
    let dim = m.nrows();
    let n = dim / 2;
    let (ones, _) = unipotent_rank(m, 1e-9, 100.0);
    let ev = eigenvalues_snapped(m, ones);
    let groups = crate::symplin::cluster_values(&ev[ones..], CLUSTER_TOL);
    let omega = omega_matrix(n).map(|v| C64::new(0.0, v));
    let mc = m.map(|v| C64::new(v, 0.0));
    let mut circle = Vec::new();
    let mut negative_real = 0;
    for g in groups {
        let center: C64 = g.iter().sum::<C64>() / g.len() as f64;
        if center.im.abs() <= CIRCLE_TOL {
            if center.re < 0.0 {
                negative_real += g.len();
            }
            continue;
        }
        if (center.norm() - 1.0).abs() > CIRCLE_TOL {
            continue;
        }
        let lambda = center / center.norm();
        let size = g.len();
        let shifted = &mc - DMatrix::<C64>::identity(dim, dim) * lambda;
        let mut p = shifted.clone();
        for _ in 1..size {
            p = &p * &shifted;
        }
        let svd = p.svd(false, true);
        let v_t = svd.v_t.expect("v_t requested");
        // right singular vectors of the `size` smallest singular values
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| svd.singular_values[a].partial_cmp(&svd.singular_values[b]).unwrap());
        let mut basis = DMatrix::<C64>::zeros(dim, size);
        for (c, &idx) in order.iter().take(size).enumerate() {
            basis.set_column(c, &v_t.row(idx).adjoint());
        }
        let form = basis.adjoint() * &omega * &basis;
        let herm = (&form + form.adjoint()) * C64::new(0.5, 0.0);
        let negatives = herm.symmetric_eigenvalues().iter().filter(|&&e| e < 0.0).count();
        circle.push((lambda, negatives));
    }
    KreinData { circle, negative_real }
}

fn rho_raw(m: &DMatrix<f64>) -> C64 {
    let data = krein_data(m);
    let mut value = C64::new(1.0, 0.0);
    for (lambda, neg) in &data.circle {
        value *= lambda.powu(*neg as u32);
    }
    if (data.negative_real / 2) % 2 == 1 {
        value = -value;
    }
    value / value.norm()
}

/// The Krein angle map: product of `λ^{m⁻(λ)}` over non-real eigenvalues on
/// the unit circle, times `(−1)^{N/2}` for the `N` negative real eigenvalues.
pub fn rho(m: &SymplecticMatrix) -> C64 {
    rho_raw(m.matrix())
}

/// Determinant of the complex form `A + iB` of the orthogonal factor
/// `U = [[A, −B], [B, A]]` of the polar decomposition.
pub fn polar_det(m: &DMatrix<f64>) -> C64 {
    let n = m.nrows() / 2;
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("u requested") * svd.v_t.expect("v_t requested");
    let c = DMatrix::<C64>::from_fn(n, n, |i, j| C64::new(u[(i, j)], u[(n + i, j)]));
    let d = c.determinant();
    d / d.norm()
}

fn winding(values: &[C64]) -> (f64, f64) {
    let mut total = 0.0;
    let mut worst: f64 = 0.0;
    for w in values.windows(2) {
        let step = (w[1] / w[0]).arg();
        worst = worst.max(step.abs());
        total += step;
    }
    (total, worst)
}

/// `log(I + E)` by its power series; requires `‖E‖ < 1/2`.
fn log_near_identity(q: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let d = q.nrows();
    let e = q - DMatrix::<f64>::identity(d, d);
    if e.norm() >= 0.5 {
        return None;
    }
    let mut term = e.clone();
    let mut sum = e.clone();
    for k in 2..200 {
        term = &term * &e;
        let add = &term * (if k % 2 == 0 { -1.0 } else { 1.0 } / k as f64);
        sum += &add;
        if add.norm() < 1e-18 {
            break;
        }
    }
    Some(sum)
}

/// `log(b a⁻¹)` for symplectic `a`, when the quotient is near the identity.
fn right_log(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let j = standard_j(a.nrows() / 2);
    let a_inv = -(&j * a.transpose() * &j);
    log_near_identity(&(b * a_inv))
}

const REFINE_DEPTH: usize = 40;

/// Winding of `rho` from `a` to `b` along `t ↦ exp(t L) a` with
/// `L = log(b a⁻¹)`, bisected until every step is below `MAX_ARG_STEP / 2`.
/// The right quotient stays near the identity on iterated paths even when
/// `a` and `b` are badly conditioned.
fn refined_step(a: &DMatrix<f64>, b: &DMatrix<f64>, ra: C64, rb: C64) -> Option<(f64, f64)> {
    let l = right_log(a, b)?;
    fn go(a: &DMatrix<f64>, l: &DMatrix<f64>, t0: f64, t1: f64, r0: C64, r1: C64, depth: usize) -> Option<(f64, f64)> {
        let step = (r1 / r0).arg();
        if step.abs() <= MAX_ARG_STEP / 2.0 {
            return Some((step, step.abs()));
        }
        if depth == 0 {
            return None;
        }
        let tm = 0.5 * (t0 + t1);
        let rm = rho_raw(&((l * tm).exp() * a));
        let (s0, w0) = go(a, l, t0, tm, r0, rm, depth - 1)?;
        let (s1, w1) = go(a, l, tm, t1, rm, r1, depth - 1)?;
        Some((s0 + s1, w0.max(w1)))
    }
    go(a, &l, 0.0, 1.0, ra, rb, REFINE_DEPTH)
}

/// Total winding of `arg rho` over the samples, divided by π, together with
/// the largest single-step angle (also divided by π). Wide steps are
/// bisected along symplectic geodesics between neighbouring samples.
pub fn mean_index_with_uncertainty(path: &SymplecticPath) -> Result<(f64, f64)> {
    let values: Vec<C64> = path.mats.iter().map(rho_raw).collect();
    let mut total = 0.0;
    let mut worst: f64 = 0.0;
    for i in 1..values.len() {
        let step = (values[i] / values[i - 1]).arg();
        if step.abs() <= MAX_ARG_STEP / 2.0 {
            total += step;
            worst = worst.max(step.abs());
            continue;
        }
        let (s, w) = match refined_step(&path.mats[i - 1], &path.mats[i], values[i - 1], values[i]) {
            Some(r) => r,
            None if step.abs() <= MAX_ARG_STEP => (step, step.abs()),
            None => return Err(Error::WindingUnresolved { samples: path.len() }),
        };
        total += s;
        worst = worst.max(w);
    }
    Ok((total / PI, worst / PI))
}

pub fn mean_index(path: &SymplecticPath) -> Result<f64> {
    mean_index_with_uncertainty(path).map(|(d, _)| d)
}

/// Mean index of `t ↦ f(t)` with step doubling from 64 samples until two
/// consecutive refinements agree within [`WINDING_TOL`].
pub fn mean_index_refined(n: usize, f: impl Fn(f64) -> DMatrix<f64>) -> Result<f64> {
    let mut segments = 64;
    let mut previous: Option<f64> = None;
    while segments <= MAX_SAMPLES {
        let path = SymplecticPath::from_fn(n, segments, &f)?;
        if let Ok(delta) = mean_index(&path) {
            if let Some(p) = previous {
                if (p - delta).abs() <= WINDING_TOL {
                    return Ok(delta);
                }
            }
            previous = Some(delta);
        }
        segments *= 2;
    }
    Err(Error::WindingUnresolved { samples: MAX_SAMPLES })
}

/// Endpoint correction: `Σ m⁻(λ) (1 − θ/π)` over non-real unit-circle
/// eigenvalues `λ = e^{iθ}`, `θ ∈ (0, 2π)`.
fn endpoint_correction(m: &DMatrix<f64>) -> f64 {
    krein_data(m)
        .circle
        .iter()
        .map(|(lambda, neg)| {
            let theta = lambda.arg().rem_euclid(TAU);
            *neg as f64 * (1.0 - theta / PI)
        })
        .sum()
}

/// Distance from 1 of the closest endpoint eigenvalue, zero when the
/// generalized 1-eigenspace is nontrivial.
pub fn distance_to_one(m: &DMatrix<f64>) -> f64 {
    let (ones, _) = unipotent_rank(m, 1e-9, 100.0);
    if ones > 0 {
        return 0.0;
    }
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|l| (l - C64::new(1.0, 0.0)).norm())
        .fold(f64::INFINITY, f64::min)
}

pub fn conley_zehnder(path: &SymplecticPath) -> Result<i64> {
    let end = &path.mats[path.mats.len() - 1];
    let distance = distance_to_one(end);
    if distance <= DEGENERACY_TOL {
        return Err(Error::DegenerateEndpoint { distance });
    }
    let delta = mean_index(path)?;
    let value = delta + endpoint_correction(end);
    let rounded = value.round();
    if (value - rounded).abs() > 1e-6 {
        return Err(Error::NonIntegerIndex { value });
    }
    Ok(rounded as i64)
}

/// Winding of the polar determinant of a loop, in full turns.
pub fn maslov_loop(path: &SymplecticPath) -> Result<i64> {
    let end = &path.mats[path.mats.len() - 1];
    let defect = (end - DMatrix::<f64>::identity(end.nrows(), end.ncols())).amax();
    if defect > 1e-8 {
        return Err(Error::NotALoop { defect });
    }
    let values: Vec<C64> = path.mats.iter().map(polar_det).collect();
    let (total, worst) = winding(&values);
    if worst > MAX_ARG_STEP {
        return Err(Error::WindingUnresolved { samples: path.len() });
    }
    let turns = total / TAU;
    let rounded = turns.round();
    if (turns - rounded).abs() > 1e-6 {
        return Err(Error::NonIntegerIndex { value: turns });
    }
    Ok(rounded as i64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexReport {
    pub delta: f64,
    pub cz: Option<i64>,
    pub maslov: Option<i64>,
    pub nondegenerate: bool,
    pub winding_uncertainty: f64,
}

pub fn index_report(path: &SymplecticPath) -> Result<IndexReport> {
    let (delta, uncertainty) = mean_index_with_uncertainty(path)?;
    let cz = match conley_zehnder(path) {
        Ok(v) => Some(v),
        Err(Error::DegenerateEndpoint { .. }) => None,
        Err(e) => return Err(e),
    };
    let maslov = match maslov_loop(path) {
        Ok(v) => Some(v),
        Err(Error::NotALoop { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(IndexReport {
        delta,
        cz,
        maslov,
        nondegenerate: cz.is_some(),
        winding_uncertainty: uncertainty,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symplin::{direct_sum, rotation, validate_symplectic};

    fn rot_path(total: f64, segments: usize) -> SymplecticPath {
        SymplecticPath::from_fn(1, segments, |t| rotation(total * t)).unwrap()
    }

    #[test]
    fn rho_basic_values() {
        let id = validate_symplectic(DMatrix::identity(2, 2), 1e-12).unwrap();
        assert!((rho(&id) - C64::new(1.0, 0.0)).norm() < 1e-12);
        for &t in &[0.4, 1.3, 2.9, -2.0] {
            let r = rho(&validate_symplectic(rotation(t), 1e-12).unwrap());
            assert!((r - C64::from_polar(1.0, t)).norm() < 1e-9, "theta {t}");
        }
        let h = validate_symplectic(DMatrix::from_diagonal(&nalgebra::dvector![2.0, 0.5]), 1e-12).unwrap();
        assert!((rho(&h) - C64::new(1.0, 0.0)).norm() < 1e-12);
        let nh = validate_symplectic(DMatrix::from_diagonal(&nalgebra::dvector![-2.0, -0.5]), 1e-12).unwrap();
        assert!((rho(&nh) + C64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn rotation_path_mean_index() {
        for &alpha in &[0.1, 0.4, 1.3] {
            let d = mean_index(&rot_path(TAU * alpha, 400)).unwrap();
            assert!((d - 2.0 * alpha).abs() < 1e-9);
        }
        assert_eq!(mean_index(&SymplecticPath::constant_identity(1)).unwrap(), 0.0);
    }

    #[test]
    fn conley_zehnder_anchors() {
        assert_eq!(conley_zehnder(&rot_path(1.0, 100)).unwrap(), 1);
        assert_eq!(conley_zehnder(&rot_path(-1.0, 100)).unwrap(), -1);
        let gen = DMatrix::from_diagonal(&nalgebra::dvector![1.0, -1.0]);
        assert_eq!(conley_zehnder(&SymplecticPath::exponential(&gen, 50).unwrap()).unwrap(), 0);
        for &theta in &[7.0, 13.0, 20.0] {
            let expected = 2 * (theta / TAU).floor() as i64 + 1;
            assert_eq!(conley_zehnder(&rot_path(theta, 400)).unwrap(), expected);
        }
        assert!(matches!(
            conley_zehnder(&rot_path(TAU, 100)),
            Err(Error::DegenerateEndpoint { .. })
        ));
    }

    #[test]
    fn maslov_of_rotation_loops() {
        assert_eq!(maslov_loop(&rot_path(TAU, 100)).unwrap(), 1);
        assert_eq!(maslov_loop(&rot_path(2.0 * TAU, 200)).unwrap(), 2);
        assert_eq!(maslov_loop(&rot_path(-TAU, 100)).unwrap(), -1);
        assert_eq!(maslov_loop(&SymplecticPath::constant_identity(2)).unwrap(), 0);
        assert!(matches!(maslov_loop(&rot_path(1.0, 10)), Err(Error::NotALoop { .. })));
    }

    #[test]
    fn shear_path_is_even_and_iterates() {
        let gen = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let p = SymplecticPath::exponential(&gen, 20).unwrap();
        assert!(mean_index(&p).unwrap().abs() < 1e-12);
        // rotate once, then shear: the endpoint is unipotent
        let q = SymplecticPath::from_fn(1, 400, |t| {
            let s = DMatrix::from_row_slice(2, 2, &[1.0, t, 0.0, 1.0]);
            s * rotation(TAU * t)
        })
        .unwrap();
        let d = mean_index(&q).unwrap();
        assert!((d - 2.0).abs() < 1e-6, "{d}");
        let d3 = mean_index(&q.iterate(3).unwrap()).unwrap();
        assert!((d3 - 6.0).abs() < 1e-6, "{d3}");
    }

    #[test]
    fn direct_sums_add() {
        let a = rot_path(1.0, 100);
        let b = SymplecticPath::exponential(&DMatrix::from_diagonal(&nalgebra::dvector![0.5, -0.5]), 30).unwrap();
        let s = a.direct_sum(&b);
        assert!((mean_index(&s).unwrap() - mean_index(&a).unwrap()).abs() < 1e-9);
        let m = direct_sum(&rotation(0.3), &rotation(1.1));
        let r = rho(&validate_symplectic(m, 1e-12).unwrap());
        assert!((r - C64::from_polar(1.0, 1.4)).norm() < 1e-9);
    }

    #[test]
    fn refined_mean_index() {
        let d = mean_index_refined(1, |t| rotation(9.0 * t)).unwrap();
        assert!((d - 9.0 / PI).abs() < 1e-9);
    }

    #[test]
    fn coarse_paths_are_rejected() {
        assert!(matches!(
            mean_index(&rot_path(20.0, 8)),
            Err(Error::WindingUnresolved { .. })
        ));
    }

    #[test]
    fn json_roundtrip() {
        let p = rot_path(1.0, 5);
        let s = serde_json::to_string(&p).unwrap();
        let q: SymplecticPath = serde_json::from_str(&s).unwrap();
        assert_eq!(p.len(), q.len());
        assert!((mean_index(&p).unwrap() - mean_index(&q).unwrap()).abs() < 1e-12);
    }
}
