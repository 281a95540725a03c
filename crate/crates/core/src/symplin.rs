//! Symplectic linear algebra: validation, clustered spectra, admissible and
//! good iterations, and the splitting of a linearization into the generalized
//! 1-eigenspace and its invariant complement.
//!
//! Coordinates are `z = (x_1..x_n, y_1..y_n)` with `ω = Σ dy_i ∧ dx_i`, so
//! `ω(u, v) = uᵀ Ω v` with `Ω = [[0, -I], [I, 0]]` and the symplectic
//! condition reads `Mᵀ J M = J` for `J = [[0, I], [-I, 0]] = Ωᵀ`.

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Default eigenvalue clustering tolerance.
pub const DEFAULT_CLUSTER_TOL: f64 = 1e-8;
/// Default bound on the order of detected roots of unity.
pub const DEFAULT_Q_MAX: u32 = 64;

/// Structure matrix `J = [[0, I], [-I, 0]]` on `R^{2n}`.
pub fn standard_j(n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = 1.0;
        j[(n + i, i)] = -1.0;
    }
    j
}

/// Matrix of the form `ω(u, v) = uᵀ Ω v`.
pub fn omega_matrix(n: usize) -> DMatrix<f64> {
    standard_j(n).transpose()
}

/// `‖Mᵀ J M − J‖_∞` (max-entry norm).
pub fn symplectic_defect(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows() / 2;
    let j = standard_j(n);
    (m.transpose() * &j * m - j).amax()
}

/// A validated real `2n × 2n` matrix with `Mᵀ J M = J` up to `tol_symp`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticMatrix {
    n: usize,
    m: DMatrix<f64>,
    tol_symp: f64,
}

impl SymplecticMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        2 * self.n
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    pub fn tol(&self) -> f64 {
        self.tol_symp
    }

    pub fn identity(n: usize) -> Self {
        Self { n, m: DMatrix::identity(2 * n, 2 * n), tol_symp: 0.0 }
    }

    /// Wraps a matrix known to be symplectic by construction (products and
    /// powers of validated matrices); only the shape is checked.
    pub(crate) fn trusted(m: DMatrix<f64>) -> Self {
        debug_assert!(m.is_square() && m.nrows().is_multiple_of(2));
        let n = m.nrows() / 2;
        let tol_symp = symplectic_defect(&m);
        Self { n, m, tol_symp }
    }

    pub fn pow(&self, k: usize) -> Self {
        Self::trusted(mat_pow(&self.m, k))
    }

    pub fn compose(&self, other: &SymplecticMatrix) -> Self {
        Self::trusted(&self.m * &other.m)
    }

    pub fn inverse(&self) -> Self {
        // M⁻¹ = -J Mᵀ J
        let j = standard_j(self.n);
        Self::trusted(-(&j * self.m.transpose() * &j))
    }

    /// Row-major nested arrays.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(&self.m)
    }
}

impl Serialize for SymplecticMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SymplecticMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let m = matrix_from_rows(&rows).map_err(serde::de::Error::custom)?;
        validate_symplectic(m, 1e-7).map_err(serde::de::Error::custom)
    }
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::Dimension("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

/// Checks shape and the symplectic identity.
pub fn validate_symplectic(m: DMatrix<f64>, tol: f64) -> Result<SymplecticMatrix> {
    if !m.is_square() || !m.nrows().is_multiple_of(2) || m.nrows() == 0 {
        return Err(Error::Dimension(format!(
            "expected a square matrix of even size, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotSymplectic { defect: f64::INFINITY });
    }
    let defect = symplectic_defect(&m);
    let det_defect = (m.determinant() - 1.0).abs();
    if defect > tol || det_defect > tol.max(1e-12) * 10.0 {
        return Err(Error::NotSymplectic { defect: defect.max(det_defect) });
    }
    let n = m.nrows() / 2;
    Ok(SymplecticMatrix { n, m, tol_symp: tol })
}

pub fn mat_pow(m: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let mut result = DMatrix::identity(m.nrows(), m.ncols());
    let mut base = m.clone();
    let mut e = k;
    while e > 0 {
        if e & 1 == 1 {
            result = &result * &base;
        }
        base = &base * &base;
        e >>= 1;
    }
    result
}

/// 2D rotation by `theta` (counterclockwise in the `(x, y)` plane).
pub fn rotation(theta: f64) -> DMatrix<f64> {
    let (s, c) = theta.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
}

/// Direct sum of symplectic blocks written in `(x, y)` block layout: the
/// x-coordinates of every block come first, then all y-coordinates.
pub fn direct_sum(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let na = a.nrows() / 2;
    let nb = b.nrows() / 2;
    let n = na + nb;
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    let map_a = |i: usize| if i < na { i } else { n + (i - na) };
    let map_b = |i: usize| if i < nb { na + i } else { n + na + (i - nb) };
    for i in 0..2 * na {
        for j in 0..2 * na {
            m[(map_a(i), map_a(j))] = a[(i, j)];
        }
    }
    for i in 0..2 * nb {
        for j in 0..2 * nb {
            m[(map_b(i), map_b(j))] = b[(i, j)];
        }
    }
    m
}

/// One cluster of the symmetrized spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenCluster {
    pub re: f64,
    pub im: f64,
    pub multiplicity: usize,
    pub on_unit_circle: bool,
    pub root_of_unity_order: Option<u32>,
}

impl EigenCluster {
    pub fn value(&self) -> C64 {
        C64::new(self.re, self.im)
    }

    pub fn is_one(&self) -> bool {
        self.root_of_unity_order == Some(1)
    }

    pub fn is_negative_real(&self, tol: f64) -> bool {
        self.im.abs() <= tol && self.re < -tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenData {
    pub clusters: Vec<EigenCluster>,
    pub cluster_tol: f64,
    pub q_max: u32,
}

impl EigenData {
    pub fn total_multiplicity(&self) -> usize {
        self.clusters.iter().map(|c| c.multiplicity).sum()
    }

    /// Algebraic multiplicity of the eigenvalue one.
    pub fn one_multiplicity(&self) -> usize {
        self.clusters.iter().filter(|c| c.is_one()).map(|c| c.multiplicity).sum()
    }

    /// Number of `{λ, λ⁻¹}` pairs of negative real eigenvalues.
    pub fn negative_pairs(&self) -> usize {
        let count: usize = self
            .clusters
            .iter()
            .filter(|c| c.is_negative_real(self.cluster_tol))
            .map(|c| c.multiplicity)
            .sum();
        count / 2
    }

    /// Distinct root-of-unity orders `q > 1` among eigenvalues `λ ≠ 1`.
    pub fn forbidden_orders(&self) -> Vec<u32> {
        let mut qs: Vec<u32> = self
            .clusters
            .iter()
            .filter_map(|c| c.root_of_unity_order)
            .filter(|&q| q > 1)
            .collect();
        qs.sort_unstable();
        qs.dedup();
        qs
    }
}

/// Dimension of the generalized 1-eigenspace. The nullity of `(M − I)^j` is
/// computed for `j = 1, 2, …` until it stops growing, each power judged by its
/// singular values relative to `‖M − I‖^j`. Returns `(dim, ambiguous_value)`
/// where `ambiguous_value` is the first relative singular value falling between
/// the zero and nonzero thresholds.
pub(crate) fn unipotent_rank(m: &DMatrix<f64>, zero_tol: f64, band: f64) -> (usize, Option<f64>) {
    let dim = m.nrows();
    let shifted = m - DMatrix::<f64>::identity(dim, dim);
    let base = shifted.norm().max(1.0);
    let mut power = DMatrix::<f64>::identity(dim, dim);
    let mut nullity = 0;
    for j in 1..=dim {
        power = &power * &shifted;
        let scale = base.powi(j as i32);
        let mut zero = 0;
        for &s in power.singular_values().iter() {
            let rel = s / scale;
            if rel <= zero_tol {
                zero += 1;
            } else if rel < zero_tol * band {
                return (zero.max(nullity), Some(rel));
            }
        }
        if zero == nullity {
            break;
        }
        nullity = zero;
    }
    (nullity, None)
}

/// Raw eigenvalues with the generalized 1-eigenspace snapped to exactly one.
/// The snapped values come first.
pub(crate) fn eigenvalues_snapped(m: &DMatrix<f64>, ones: usize) -> Vec<C64> {
    let mut ev: Vec<C64> = m.clone().complex_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| {
        let da = (a - C64::new(1.0, 0.0)).norm();
        let db = (b - C64::new(1.0, 0.0)).norm();
        da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal)
    });
    for v in ev.iter_mut().take(ones) {
        *v = C64::new(1.0, 0.0);
    }
    ev
}

/// Greedy single-linkage clustering of complex values.
pub(crate) fn cluster_values(values: &[C64], tol: f64) -> Vec<Vec<C64>> {
    let mut groups: Vec<Vec<C64>> = Vec::new();
    let mut assigned = vec![false; values.len()];
    for i in 0..values.len() {
        if assigned[i] {
            continue;
        }
        assigned[i] = true;
        let mut group = vec![values[i]];
        let mut frontier = vec![values[i]];
        while let Some(v) = frontier.pop() {
            for j in 0..values.len() {
                if !assigned[j] && (values[j] - v).norm() <= tol {
                    assigned[j] = true;
                    group.push(values[j]);
                    frontier.push(values[j]);
                }
            }
        }
        groups.push(group);
    }
    groups
}

fn mean(values: &[C64]) -> C64 {
    values.iter().sum::<C64>() / values.len() as f64
}

/// Smallest `q ≤ q_max` with `|λ^q − 1| ≤ tol`, together with the snapped
/// root `e^{2πip/q}`.
fn root_of_unity(lambda: C64, tol: f64, q_max: u32) -> Option<(u32, C64)> {
    let theta = lambda.arg();
    for q in 1..=q_max {
        let power = lambda.powu(q);
        if (power - C64::new(1.0, 0.0)).norm() <= tol {
            let p = (theta * q as f64 / std::f64::consts::TAU).round();
            let snapped = C64::from_polar(1.0, std::f64::consts::TAU * p / q as f64);
            return Some((q, snapped));
        }
    }
    None
}

/// Clustered, symmetry-enforced spectrum with root-of-unity annotation.
pub fn spectrum(m: &SymplecticMatrix, cluster_tol: f64, q_max: u32) -> Result<EigenData> {
    let (ones, ambiguous) = unipotent_rank(m.matrix(), 1e-9, 100.0);
    if let Some(value) = ambiguous {
        return Err(Error::ClusterAmbiguous { separation: value });
    }
    let ev = eigenvalues_snapped(m.matrix(), ones);
    let mut clusters = Vec::new();
    if ones > 0 {
        clusters.push(EigenCluster {
            re: 1.0,
            im: 0.0,
            multiplicity: ones,
            on_unit_circle: true,
            root_of_unity_order: Some(1),
        });
    }
    let rest = &ev[ones..];
    let groups = cluster_values(rest, cluster_tol);
    let centers: Vec<C64> = groups.iter().map(|g| mean(g)).collect();
    for i in 0..centers.len() {
        for j in (i + 1)..centers.len() {
            let d = (centers[i] - centers[j]).norm();
            if d <= 2.0 * cluster_tol {
                return Err(Error::ClusterAmbiguous { separation: d });
            }
        }
    }
    for (group, center) in groups.iter().zip(&centers) {
        let mut value = *center;
        if value.im.abs() <= cluster_tol {
            value.im = 0.0;
        }
        let on_circle = (value.norm() - 1.0).abs() <= cluster_tol;
        let mut order = None;
        if on_circle {
            value = value / value.norm();
            if let Some((q, snapped)) = root_of_unity(value, cluster_tol, q_max) {
                // q = 1 is reserved for the exact generalized 1-eigenspace.
                if q > 1 {
                    order = Some(q);
                    value = snapped;
                }
            }
        }
        clusters.push(EigenCluster {
            re: value.re,
            im: value.im,
            multiplicity: group.len(),
            on_unit_circle: on_circle,
            root_of_unity_order: order,
        });
    }
    symmetrize(&mut clusters);
    clusters.sort_by(|a, b| {
        (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(EigenData { clusters, cluster_tol, q_max })
}

/// Enforces `λ ↔ conj(λ)` and `λ ↔ 1/λ` symmetry of the cluster values by
/// averaging each cluster with its partners' images.
fn symmetrize(clusters: &mut [EigenCluster]) {
    let values: Vec<C64> = clusters.iter().map(EigenCluster::value).collect();
    for (i, c) in clusters.iter_mut().enumerate() {
        if c.root_of_unity_order.is_some() {
            continue;
        }
        let v = values[i];
        let partner = |target: C64| {
            values
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .min_by(|a, b| {
                    (a.1 - target).norm().partial_cmp(&(b.1 - target).norm()).unwrap()
                })
                .map(|(_, w)| *w)
        };
        let mut acc = vec![v];
        if v.im != 0.0 {
            if let Some(w) = partner(v.conj()) {
                acc.push(w.conj());
            }
        }
        if !c.on_unit_circle {
            if let Some(w) = partner(C64::new(1.0, 0.0) / v) {
                acc.push(C64::new(1.0, 0.0) / w);
            }
        }
        let avg = mean(&acc);
        c.re = avg.re;
        c.im = if v.im == 0.0 { 0.0 } else { avg.im };
    }
}

/// `λ^k ≠ 1` for every eigenvalue `λ ≠ 1`.
pub fn admissible(m: &SymplecticMatrix, k: usize) -> Result<bool> {
    if k == 0 {
        return Err(Error::InvalidParameter("iteration k must be positive".into()));
    }
    let data = spectrum(m, DEFAULT_CLUSTER_TOL, DEFAULT_Q_MAX)?;
    Ok(admissible_with(&data, k))
}

pub fn admissible_with(data: &EigenData, k: usize) -> bool {
    data.clusters
        .iter()
        .filter(|c| !c.is_one())
        .filter_map(|c| c.root_of_unity_order)
        .all(|q| !k.is_multiple_of(q as usize))
}

/// Negative-real pair parity is preserved from `M` to `M^k`.
pub fn good(m: &SymplecticMatrix, k: usize) -> Result<bool> {
    let data = spectrum(m, DEFAULT_CLUSTER_TOL, DEFAULT_Q_MAX)?;
    good_with(&data, k)
}

pub fn good_with(data: &EigenData, k: usize) -> Result<bool> {
    if k == 0 || !admissible_with(data, k) {
        return Err(Error::NotAdmissible { k });
    }
    let tol = data.cluster_tol;
    let before = data.negative_pairs();
    let count_after: usize = data
        .clusters
        .iter()
        .filter(|c| {
            let p = match c.root_of_unity_order {
                Some(q) => {
                    // exact power of a snapped root of unity
                    let angle = c.value().arg() * k as f64;
                    let steps = (angle * q as f64 / std::f64::consts::TAU).round();
                    C64::from_polar(1.0, std::f64::consts::TAU * steps / q as f64)
                }
                None => c.value().powu(k as u32),
            };
            p.im.abs() <= tol * (k as f64) && p.re < -tol
        })
        .map(|c| c.multiplicity)
        .sum();
    Ok(before % 2 == (count_after / 2) % 2)
}

/// Description of the admissible iterations of a fixed point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetDescription {
    pub forbidden_divisors: Vec<u32>,
    /// `(start, step)` of an arithmetic progression of admissible iterations.
    pub witness_progression: (usize, usize),
    pub verified_up_to: usize,
}

pub fn admissible_set(m: &SymplecticMatrix, q_max: u32, horizon: usize) -> Result<SetDescription> {
    let data = spectrum(m, DEFAULT_CLUSTER_TOL, q_max)?;
    let forbidden = data.forbidden_orders();
    let step: usize = forbidden.iter().map(|&q| q as usize).product();
    let start = if forbidden.is_empty() { 1 } else { 1 + step };
    let mut k = start;
    while k <= horizon {
        if !admissible_with(&data, k) {
            return Err(Error::NotAdmissible { k });
        }
        k += step;
    }
    Ok(SetDescription {
        forbidden_divisors: forbidden,
        witness_progression: (start, step),
        verified_up_to: horizon,
    })
}

/// Complementary invariant projectors: `P_W` onto the generalized
/// 1-eigenspace, `P_V` onto the sum of the other generalized eigenspaces.
#[derive(Debug, Clone)]
pub struct SpectralSplit {
    pub p_v: DMatrix<f64>,
    pub p_w: DMatrix<f64>,
    pub dim_w: usize,
}

pub fn split_spectral(m: &SymplecticMatrix, tol: f64) -> Result<SpectralSplit> {
    let dim = m.dim();
    let id = DMatrix::<f64>::identity(dim, dim);
    let shifted = m.matrix() - &id;
    let scale = shifted.norm().max(1.0).powi(dim as i32);
    let p = mat_pow(&shifted, dim);
    let svd = p.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let mut rank = 0;
    for &s in svd.singular_values.iter() {
        let rel = s / scale;
        if rel > tol && rel < 100.0 * tol {
            return Err(Error::SplitFailed { value: rel });
        }
        if rel >= 100.0 * tol {
            rank += 1;
        }
    }
    // nalgebra sorts singular values in decreasing order.
    let mut basis = DMatrix::<f64>::zeros(dim, dim);
    for c in 0..rank {
        basis.set_column(c, &u.column(c));
    }
    for c in rank..dim {
        basis.set_column(c, &v_t.row(c).transpose());
    }
    let inv = basis
        .clone()
        .try_inverse()
        .ok_or(Error::SplitFailed { value: 0.0 })?;
    let mut sel = DMatrix::<f64>::zeros(dim, dim);
    for c in rank..dim {
        sel[(c, c)] = 1.0;
    }
    let p_w = &basis * sel * &inv;
    let p_v = id - &p_w;
    Ok(SpectralSplit { p_v, p_w, dim_w: dim - rank })
}
