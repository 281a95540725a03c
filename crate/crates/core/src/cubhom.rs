//! Z₂ cubical relative homology of sublevel pairs and local Morse homology.
//!
//! Cells are elementary cubes on the doubled node lattice: a cell has an odd
//! doubled coordinate along each axis in which it extends. A cell belongs to
//! a sublevel set when all of its vertices do.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::genfun::ScalarField;
use crate::ranks::GradedRanks;

/// Cell membership flags for a pair `A ⊆ X` on a node grid.
#[derive(Debug, Clone)]
pub struct CubicalPair {
    /// Nodes per axis.
    pub resolution: Vec<usize>,
    in_x: Vec<bool>,
    in_a: Vec<bool>,
}

impl CubicalPair {
    /// Builds the pair from vertex predicates.
    pub fn from_vertices(resolution: Vec<usize>, in_x: impl Fn(&[usize]) -> bool, in_a: impl Fn(&[usize]) -> bool) -> Self {
        let dims: Vec<usize> = resolution.iter().map(|r| 2 * r - 1).collect();
        let total: usize = dims.iter().product();
        // 0 = outside, 1 = in X only, 2 = in A (hence in X)
        let mut level = vec![0u8; total];
        let mut idx = vec![0usize; dims.len()];
        let mut order: Vec<(usize, usize)> = Vec::with_capacity(total);
        for flat in 0..total {
            decode(flat, &dims, &mut idx);
            let d = idx.iter().filter(|&&c| c % 2 == 1).count();
            order.push((d, flat));
        }
        order.sort_unstable();
        let mut node = vec![0usize; dims.len()];
        for &(d, flat) in &order {
            decode(flat, &dims, &mut idx);
            if d == 0 {
                for (a, &c) in idx.iter().enumerate() {
                    node[a] = c / 2;
                }
                level[flat] = match (in_x(&node), in_a(&node)) {
                    (true, true) => 2,
                    (true, false) => 1,
                    _ => 0,
                };
            } else {
                let a = idx.iter().position(|&c| c % 2 == 1).expect("odd axis");
                let stride: usize = dims[a + 1..].iter().product();
                level[flat] = level[flat - stride].min(level[flat + stride]);
            }
        }
        Self {
            resolution,
            in_x: level.iter().map(|&l| l >= 1).collect(),
            in_a: level.iter().map(|&l| l == 2).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.resolution.len()
    }

    fn doubled(&self) -> Vec<usize> {
        self.resolution.iter().map(|r| 2 * r - 1).collect()
    }

    /// Number of cells of each dimension in `X` and in `A`.
    pub fn cell_counts(&self) -> (Vec<usize>, Vec<usize>) {
        let dims = self.doubled();
        let m = dims.len();
        let mut cx = vec![0; m + 1];
        let mut ca = vec![0; m + 1];
        let mut idx = vec![0; m];
        for flat in 0..self.in_x.len() {
            if self.in_x[flat] {
                decode(flat, &dims, &mut idx);
                let d = idx.iter().filter(|&&c| c % 2 == 1).count();
                cx[d] += 1;
                if self.in_a[flat] {
                    ca[d] += 1;
                }
            }
        }
        (cx, ca)
    }

    /// Closure: every face of a cell of `X` (resp. `A`) is in `X` (resp. `A`).
    pub fn is_closed(&self) -> bool {
        let dims = self.doubled();
        let m = dims.len();
        let mut idx = vec![0; m];
        for flat in 0..self.in_x.len() {
            if !self.in_x[flat] {
                continue;
            }
            decode(flat, &dims, &mut idx);
            for a in 0..m {
                if idx[a] % 2 == 1 {
                    let stride: usize = dims[a + 1..].iter().product();
                    for f in [flat - stride, flat + stride] {
                        if !self.in_x[f] || (self.in_a[flat] && !self.in_a[f]) {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }
}

fn decode(mut flat: usize, dims: &[usize], idx: &mut [usize]) {
    for a in (0..dims.len()).rev() {
        idx[a] = flat % dims[a];
        flat /= dims[a];
    }
}

/// Ranks of `H_*(X, A; Z₂)` by column reduction of the relative boundary
/// matrices, highest dimension first, with clearing.
pub fn relative_homology_z2(pair: &CubicalPair) -> GradedRanks {
    let dims = pair.doubled();
    let m = dims.len();
    // local index of each relative cell within its dimension
    let mut local = vec![u32::MAX; pair.in_x.len()];
    let mut cells: Vec<Vec<usize>> = vec![Vec::new(); m + 1];
    let mut idx = vec![0; m];
    for (flat, slot) in local.iter_mut().enumerate() {
        if pair.in_x[flat] && !pair.in_a[flat] {
            decode(flat, &dims, &mut idx);
            let d = idx.iter().filter(|&&c| c % 2 == 1).count();
            *slot = cells[d].len() as u32;
            cells[d].push(flat);
        }
    }
    let strides: Vec<usize> = (0..m).map(|a| dims[a + 1..].iter().product()).collect();
    let mut rank = vec![0usize; m + 2];
    let mut cleared: Vec<bool> = Vec::new();
    for d in (1..=m).rev() {
        let n_rows = cells[d - 1].len();
        let mut pivot_of_row: Vec<u32> = vec![u32::MAX; n_rows];
        let mut reduced: Vec<Vec<u32>> = Vec::with_capacity(cells[d].len());
        let mut next_cleared = vec![false; n_rows];
        let mut idx = vec![0; m];
        for (j, &flat) in cells[d].iter().enumerate() {
            if cleared.get(j).copied().unwrap_or(false) {
                reduced.push(Vec::new());
                continue;
            }
            decode(flat, &dims, &mut idx);
            let mut col: Vec<u32> = Vec::with_capacity(2 * d);
            for a in 0..m {
                if idx[a] % 2 == 1 {
                    for f in [flat - strides[a], flat + strides[a]] {
                        if local[f] != u32::MAX {
                            col.push(local[f]);
                        }
                    }
                }
            }
            col.sort_unstable();
            while let Some(&low) = col.last() {
                let p = pivot_of_row[low as usize];
                if p == u32::MAX {
                    break;
                }
                col = sym_diff(&col, &reduced[p as usize]);
            }
            if let Some(&low) = col.last() {
                pivot_of_row[low as usize] = j as u32;
                next_cleared[low as usize] = true;
                rank[d] += 1;
            }
            reduced.push(col);
        }
        cleared = next_cleared;
    }
    let mut out = GradedRanks::new();
    for d in 0..=m {
        let betti = cells[d].len() - rank[d] - rank[d + 1];
        out.add(d as i32, betti);
    }
    out
}

fn sym_diff(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Default window: half the smallest gap `c − f` over boundary nodes below
/// `c`, so that the whole lower exit set of the box lies in `A`. Falls back
/// to half the smallest nonzero `|f − c|` on the boundary.
pub fn default_delta(f: &ScalarField, c: f64) -> f64 {
    let mut below = f64::INFINITY;
    let mut any = f64::INFINITY;
    for i in 0..f.len() {
        let idx = f.multi(i);
        let on_boundary = idx.iter().zip(&f.resolution).any(|(&k, &r)| k == 0 || k + 1 == r);
        if !on_boundary {
            continue;
        }
        let gap = c - f.values[i];
        if gap > 0.0 {
            below = below.min(gap);
        }
        if gap.abs() > 0.0 {
            any = any.min(gap.abs());
        }
    }
    if below.is_finite() {
        0.5 * below
    } else if any.is_finite() {
        0.5 * any
    } else {
        1e-12
    }
}

/// Interior grid nodes that are local minima of `‖∇f‖` with `‖∇f‖` below
/// `1e-3 · max ‖∇f‖`, excluding the ball of radius `exclude` about `0`.
fn grid_critical_nodes(f: &ScalarField, exclude: f64) -> Vec<usize> {
    let m = f.dim();
    let norms: Vec<f64> = (0..f.len())
        .into_par_iter()
        .map(|i| f.gradient_at(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let max = norms.iter().fold(0.0f64, |a, &b| a.max(b));
    (0..f.len())
        .filter(|&i| {
            let idx = f.multi(i);
            if idx.iter().zip(&f.resolution).any(|(&k, &r)| k == 0 || k + 1 == r) {
                return false;
            }
            if norms[i] > 1e-3 * max {
                return false;
            }
            let r = f.node(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            if r <= exclude {
                return false;
            }
            (0..m).all(|a| {
                let mut lo = idx.clone();
                lo[a] -= 1;
                let mut hi = idx.clone();
                hi[a] += 1;
                norms[i] <= norms[f.flat(&lo)] && norms[i] <= norms[f.flat(&hi)]
            })
        })
        .collect()
}

/// `({f ≤ c}, {f ≤ c − δ})` on the field's box.
pub fn sublevel_pair(f: &ScalarField, c: f64, delta: f64) -> Result<CubicalPair> {
    if delta <= 0.0 {
        return Err(Error::InvalidParameter("delta must be positive".into()));
    }
    let exclude = 0.25 * f.domain.min_half_width();
    for i in grid_critical_nodes(f, exclude) {
        let v = f.values[i];
        if v >= c - delta && v <= c + delta {
            return Err(Error::CriticalValueInWindow);
        }
    }
    let values = &f.values;
    Ok(CubicalPair::from_vertices(
        f.resolution.clone(),
        |idx| values[f.flat(idx)] <= c,
        |idx| values[f.flat(idx)] <= c - delta,
    ))
}

/// Source of grid samples of one function at any resolution.
pub trait FieldSampler: Send + Sync {
    fn domain(&self) -> &BoxDomain;
    fn sample(&self, resolution: usize) -> Result<ScalarField>;
}

/// Samples a closure.
#[derive(Clone)]
pub struct FnSampler {
    domain: BoxDomain,
    f: SharedFn,
}

type SharedFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

impl FnSampler {
    pub fn new(domain: BoxDomain, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { domain, f: Arc::new(f) }
    }
}

impl FieldSampler for FnSampler {
    fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    fn sample(&self, resolution: usize) -> Result<ScalarField> {
        ScalarField::from_fn(self.domain.clone(), vec![resolution; self.domain.dim()], |z| (self.f)(z))
    }
}

/// A fixed field resampled by multilinear interpolation.
impl FieldSampler for ScalarField {
    fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    fn sample(&self, resolution: usize) -> Result<ScalarField> {
        if self.resolution.iter().all(|&r| r == resolution) {
            return Ok(self.clone());
        }
        ScalarField::from_fn(self.domain.clone(), vec![resolution; self.dim()], |z| {
            self.interpolate(z).unwrap_or(f64::NAN)
        })
    }
}

#[derive(Debug, Clone)]
pub struct MorseParams {
    /// Sublevel window; `None` selects [`default_delta`] per resolution.
    pub delta: Option<f64>,
    /// Increasing node counts per axis; the last two must agree.
    pub resolutions: Vec<usize>,
    /// Shell `(r_in, r_out)` as fractions of the box half-width on which the
    /// gradient must not vanish.
    pub shell: (f64, f64),
}

impl Default for MorseParams {
    fn default() -> Self {
        Self { delta: None, resolutions: vec![41, 61, 81], shell: (0.25, 0.9) }
    }
}

impl MorseParams {
    pub fn with_resolutions(resolutions: Vec<usize>) -> Self {
        Self { resolutions, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorseHomologyReport {
    pub ranks: GradedRanks,
    pub per_resolution: Vec<(usize, GradedRanks)>,
    pub delta: f64,
    pub critical_value: f64,
}

/// Smallest gradient norm on the shell relative to the largest one on the grid.
fn shell_gradient_ratio(f: &ScalarField, shell: (f64, f64)) -> Option<f64> {
    let half = f.domain.min_half_width();
    let (r_in, r_out) = (shell.0 * half, shell.1 * half);
    let mut min = f64::INFINITY;
    let mut max: f64 = 0.0;
    for i in 0..f.len() {
        let g = f.gradient_at(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        max = max.max(g);
        let r = f.node(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        if r >= r_in && r <= r_out {
            min = min.min(g);
        }
    }
    if !min.is_finite() {
        return None;
    }
    Some(if max > 0.0 { min / max } else { 0.0 })
}

/// `f(0)`, read off the node at the origin when there is one so that rounding
/// in node coordinates cannot push the origin out of `{f ≤ c}`.
fn level_at_origin(field: &ScalarField) -> Result<f64> {
    let zero = vec![0.0; field.dim()];
    let node = field.nearest_node(&zero);
    let on_node = node
        .iter()
        .enumerate()
        .all(|(a, &i)| field.coord(a, i).abs() <= 1e-9 * field.spacing(a));
    if on_node {
        return Ok(field.values[field.flat(&node)]);
    }
    field.interpolate(&zero).ok_or_else(|| Error::InvalidParameter("origin outside the box".into()))
}

/// Critical groups `H_*({f ≤ c}, {f ≤ c − δ})` with `c = f(0)`, computed at
/// each resolution and required to agree at the two finest.
pub fn local_morse_homology(f: &dyn FieldSampler, params: &MorseParams) -> Result<MorseHomologyReport> {
    if params.resolutions.is_empty() {
        return Err(Error::InvalidParameter("at least one resolution is required".into()));
    }
    let fields: Vec<ScalarField> = params
        .resolutions
        .par_iter()
        .map(|&r| f.sample(r))
        .collect::<Result<Vec<_>>>()?;
    let finest = fields.last().expect("nonempty");
    match shell_gradient_ratio(finest, params.shell) {
        Some(ratio) if ratio > 1e-9 => {}
        Some(ratio) => {
            return Err(Error::NotIsolated(format!(
                "gradient vanishes on the shell (relative minimum {ratio:.3e})"
            )))
        }
        None => return Err(Error::NotIsolated("shell contains no grid nodes".into())),
    }
    let results: Vec<Result<(GradedRanks, f64, f64)>> = fields
        .par_iter()
        .map(|field| {
            let c = level_at_origin(field)?;
            let delta = params.delta.unwrap_or_else(|| default_delta(field, c));
            let pair = sublevel_pair(field, c, delta)?;
            Ok((relative_homology_z2(&pair), delta, c))
        })
        .collect();
    let mut per_resolution = Vec::new();
    let mut last = None;
    for (r, res) in params.resolutions.iter().zip(results) {
        let (ranks, delta, c) = res?;
        per_resolution.push((*r, ranks.clone()));
        last = Some((ranks, delta, c));
    }
    let (ranks, delta, critical_value) = last.expect("nonempty");
    if per_resolution.len() >= 2 {
        let prev = &per_resolution[per_resolution.len() - 2].1;
        if *prev != ranks {
            return Err(Error::NotStabilized(format!(
                "resolution {} gives {}, resolution {} gives {}",
                per_resolution[per_resolution.len() - 2].0,
                prev,
                per_resolution[per_resolution.len() - 1].0,
                ranks
            )));
        }
    }
    Ok(MorseHomologyReport { ranks, per_resolution, delta, critical_value })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ranks(pairs: &[(i32, usize)]) -> GradedRanks {
        GradedRanks::from_pairs(pairs.iter().copied())
    }

    #[test]
    fn point_disk_and_annulus() {
        let point = CubicalPair::from_vertices(vec![1 + 1, 2], |i| i == [0, 0], |_| false);
        assert_eq!(relative_homology_z2(&point), ranks(&[(0, 1)]));
        let disk = CubicalPair::from_vertices(vec![5, 5], |_| true, |i| i.iter().any(|&k| k == 0 || k == 4));
        assert_eq!(relative_homology_z2(&disk), ranks(&[(2, 1)]));
        // square annulus relative to its outer boundary
        let annulus = CubicalPair::from_vertices(
            vec![7, 7],
            |i| !(i[0] == 3 && i[1] == 3),
            |i| i.iter().any(|&k| k == 0 || k == 6),
        );
        assert!(annulus.is_closed());
        // the outer circle is a deformation retract of the annulus
        assert_eq!(relative_homology_z2(&annulus), GradedRanks::new());
        let both = CubicalPair::from_vertices(
            vec![7, 7],
            |i| !(i[0] == 3 && i[1] == 3),
            |i| i.iter().any(|&k| k == 0 || k == 6) || (2..=4).contains(&i[0]) && (2..=4).contains(&i[1]),
        );
        assert_eq!(relative_homology_z2(&both), ranks(&[(1, 1), (2, 1)]));
        let interval = CubicalPair::from_vertices(vec![5], |_| true, |i| i[0] == 0 || i[0] == 4);
        assert_eq!(relative_homology_z2(&interval), ranks(&[(1, 1)]));
        let circle = CubicalPair::from_vertices(vec![4, 4], |i| i.iter().any(|&k| k == 0 || k == 3), |_| false);
        assert_eq!(relative_homology_z2(&circle), ranks(&[(0, 1), (1, 1)]));
    }

    fn lmh(m: usize, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static, res: Vec<usize>) -> Result<GradedRanks> {
        let s = FnSampler::new(BoxDomain::cube(m, 1.0), f);
        local_morse_homology(&s, &MorseParams::with_resolutions(res)).map(|r| r.ranks)
    }

    #[test]
    fn classical_critical_points() {
        assert_eq!(lmh(2, |z| z[0] * z[0] + z[1] * z[1], vec![21, 31]).unwrap(), ranks(&[(0, 1)]));
        assert_eq!(lmh(2, |z| -(z[0] * z[0] + z[1] * z[1]), vec![21, 31]).unwrap(), ranks(&[(2, 1)]));
        assert_eq!(lmh(2, |z| z[0] * z[1], vec![21, 31]).unwrap(), ranks(&[(1, 1)]));
        assert_eq!(lmh(1, |z| z[0].powi(3), vec![41, 81]).unwrap(), GradedRanks::new());
        assert_eq!(
            lmh(2, |z| z[0].powi(3) - 3.0 * z[0] * z[1] * z[1], vec![41, 61]).unwrap(),
            ranks(&[(1, 2)])
        );
    }

    #[test]
    fn four_dimensional_maximum() {
        let r = lmh(4, |z| -z.iter().map(|v| v * v).sum::<f64>(), vec![7, 9]).unwrap();
        assert_eq!(r, ranks(&[(4, 1)]));
    }

    #[test]
    fn line_of_critical_points_is_rejected() {
        assert!(matches!(lmh(2, |z| z[1] * z[1], vec![21, 31]), Err(Error::NotIsolated(_))));
    }

    #[test]
    fn sublevel_pair_shapes() {
        let f = ScalarField::from_fn(BoxDomain::cube(2, 1.0), vec![11, 11], |z| z[0] * z[1]).unwrap();
        let pair = sublevel_pair(&f, 0.0, 0.05).unwrap();
        assert!(pair.is_closed());
        let (cx, ca) = pair.cell_counts();
        // X: two closed quadrants of 6x6 nodes sharing the origin
        assert_eq!(cx[0], 2 * 36 - 1);
        assert!(ca[0] > 0 && ca[0] < cx[0]);
    }
}
