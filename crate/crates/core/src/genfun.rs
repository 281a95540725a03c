//! Generating functions of near-identity germs with respect to the complement
//! `N₀ = {((x, 0), (0, y))}`.
//!
//! With `ψ(z) = (x-component of φ(z), y)` the function `F` is defined by
//! `φ(z) − z = X_F(ψ(z))` and `F(0) = 0`, where `X_F = (F_y, −F_x)`. For the
//! shear `φ(x, y) = (x + y, y)` this gives `F = y²/2`.

use std::io::{Read, Write};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::hamflow::{flow_with_derivative, HamiltonianGerm};
use crate::ode::Tolerances;
use crate::symplin::{split_spectral, symplectic_defect, SymplecticMatrix};

/// Grid-sampled function on a box with multilinear interpolation. Nodes are
/// stored in row-major order (last axis fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub domain: BoxDomain,
    pub resolution: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct FieldHeader {
    format: String,
    byte_order: String,
    dtype: String,
    domain: BoxDomain,
    resolution: Vec<usize>,
}

const FIELD_MAGIC: &[u8; 4] = b"LFSF";

impl ScalarField {
    pub fn from_fn(domain: BoxDomain, resolution: Vec<usize>, f: impl Fn(&[f64]) -> f64 + Sync) -> Result<Self> {
        let mut field = Self::zeros(domain, resolution)?;
        let values: Vec<f64> = (0..field.len()).into_par_iter().map(|i| f(&field.node(i))).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("field values must be finite".into()));
        }
        field.values = values;
        Ok(field)
    }

    pub fn zeros(domain: BoxDomain, resolution: Vec<usize>) -> Result<Self> {
        if resolution.len() != domain.dim() || resolution.iter().any(|&r| r < 2) {
            return Err(Error::Dimension("resolution must give at least two nodes per axis".into()));
        }
        let len = resolution.iter().product();
        Ok(Self { domain, resolution, values: vec![0.0; len] })
    }

    pub fn dim(&self) -> usize {
        self.resolution.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.domain.hi[axis] - self.domain.lo[axis]) / (self.resolution[axis] - 1) as f64
    }

    pub fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.resolution).fold(0, |acc, (i, r)| acc * r + i)
    }

    pub fn multi(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            idx[a] = flat % self.resolution[a];
            flat /= self.resolution[a];
        }
        idx
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        if i + 1 == self.resolution[axis] {
            self.domain.hi[axis]
        } else {
            self.domain.lo[axis] + i as f64 * self.spacing(axis)
        }
    }

    pub fn node(&self, flat: usize) -> Vec<f64> {
        self.multi(flat).iter().enumerate().map(|(a, &i)| self.coord(a, i)).collect()
    }

    /// Index of the node closest to `z`.
    pub fn nearest_node(&self, z: &[f64]) -> Vec<usize> {
        (0..self.dim())
            .map(|a| {
                let s = ((z[a] - self.domain.lo[a]) / self.spacing(a)).round();
                s.clamp(0.0, (self.resolution[a] - 1) as f64) as usize
            })
            .collect()
    }

    /// Multilinear interpolation; `None` outside the box.
    pub fn interpolate(&self, z: &[f64]) -> Option<f64> {
        if !self.domain.contains(z) {
            return None;
        }
        let d = self.dim();
        let mut base = vec![0usize; d];
        let mut frac = vec![0.0; d];
        for a in 0..d {
            let s = (z[a] - self.domain.lo[a]) / self.spacing(a);
            let i = (s.floor() as usize).min(self.resolution[a] - 2);
            base[a] = i;
            frac[a] = s - i as f64;
        }
        let mut total = 0.0;
        let mut corner = vec![0usize; d];
        for mask in 0..(1usize << d) {
            let mut w = 1.0;
            for a in 0..d {
                let bit = (mask >> a) & 1;
                corner[a] = base[a] + bit;
                w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
            }
            if w != 0.0 {
                total += w * self.values[self.flat(&corner)];
            }
        }
        Some(total)
    }

    /// Finite-difference gradient: central in the interior, one-sided on the
    /// boundary.
    pub fn gradient_at(&self, flat: usize) -> Vec<f64> {
        let idx = self.multi(flat);
        (0..self.dim())
            .map(|a| {
                let h = self.spacing(a);
                let mut lo = idx.clone();
                let mut hi = idx.clone();
                let r = self.resolution[a];
                let span = if idx[a] == 0 {
                    hi[a] += 1;
                    1.0
                } else if idx[a] + 1 == r {
                    lo[a] -= 1;
                    1.0
                } else {
                    lo[a] -= 1;
                    hi[a] += 1;
                    2.0
                };
                (self.values[self.flat(&hi)] - self.values[self.flat(&lo)]) / (span * h)
            })
            .collect()
    }

    /// Largest second difference (entrywise, including mixed) at an interior
    /// node; zero on the boundary.
    pub fn hessian_max_at(&self, flat: usize) -> f64 {
        let idx = self.multi(flat);
        let d = self.dim();
        if (0..d).any(|a| idx[a] == 0 || idx[a] + 1 == self.resolution[a]) {
            return 0.0;
        }
        let at = |shift: &[(usize, isize)]| {
            let mut j = idx.clone();
            for &(a, s) in shift {
                j[a] = (j[a] as isize + s) as usize;
            }
            self.values[self.flat(&j)]
        };
        let f0 = self.values[flat];
        let mut worst: f64 = 0.0;
        for a in 0..d {
            let h = self.spacing(a);
            worst = worst.max(((at(&[(a, 1)]) - 2.0 * f0 + at(&[(a, -1)])) / (h * h)).abs());
            for b in (a + 1)..d {
                let hb = self.spacing(b);
                let m = (at(&[(a, 1), (b, 1)]) - at(&[(a, 1), (b, -1)]) - at(&[(a, -1), (b, 1)])
                    + at(&[(a, -1), (b, -1)]))
                    / (4.0 * h * hb);
                worst = worst.max(m.abs());
            }
        }
        worst
    }

    /// `max(|F|, |∇F|, |D²F|)` over the grid.
    pub fn c2_norm(&self) -> f64 {
        (0..self.len())
            .into_par_iter()
            .map(|i| {
                let g = self.gradient_at(i).iter().map(|v| v * v).sum::<f64>().sqrt();
                self.values[i].abs().max(g).max(self.hessian_max_at(i))
            })
            .reduce(|| 0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Binary format: magic `LFSF`, little-endian `u64` header length, JSON
    /// header, then little-endian `f64` values in node order.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let header = FieldHeader {
            format: "localfloer-scalar-field".into(),
            byte_order: "little_endian".into(),
            dtype: "f64".into(),
            domain: self.domain.clone(),
            resolution: self.resolution.clone(),
        };
        let json = serde_json::to_vec(&header)?;
        w.write_all(FIELD_MAGIC)?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != FIELD_MAGIC {
            return Err(Error::InvalidParameter("not a scalar field file".into()));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
        r.read_exact(&mut json)?;
        let header: FieldHeader = serde_json::from_slice(&json)?;
        let mut field = Self::zeros(header.domain, header.resolution)?;
        let mut buf = [0u8; 8];
        for v in field.values.iter_mut() {
            r.read_exact(&mut buf)?;
            *v = f64::from_le_bytes(buf);
        }
        Ok(field)
    }
}

type MapFn = dyn Fn(&[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> + Send + Sync;

/// A germ of a map at the fixed point `0`, with Jacobian access.
#[derive(Clone)]
pub struct GermMap {
    pub n: usize,
    pub domain: BoxDomain,
    f: Arc<MapFn>,
}

impl std::fmt::Debug for GermMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GermMap").field("n", &self.n).field("domain", &self.domain).finish()
    }
}

impl GermMap {
    /// Checks `φ(0) = 0` and that `Dφ(0)` is symplectic.
    pub fn new(
        n: usize,
        domain: BoxDomain,
        f: impl Fn(&[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> + Send + Sync + 'static,
    ) -> Result<Self> {
        let map = Self::unchecked(n, domain, f);
        map.check_fixed_origin()?;
        Ok(map)
    }

    fn unchecked(
        n: usize,
        domain: BoxDomain,
        f: impl Fn(&[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> + Send + Sync + 'static,
    ) -> Self {
        Self { n, domain, f: Arc::new(f) }
    }

    fn check_fixed_origin(&self) -> Result<()> {
        let zero = vec![0.0; 2 * self.n];
        if !self.domain.contains(&zero) {
            return Err(Error::InvalidParameter("germ domain must contain the origin".into()));
        }
        let (p, d) = self.eval(&zero)?;
        let off = p.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if off > 1e-8 {
            return Err(Error::InvalidParameter(format!("origin is not fixed (offset {off:.3e})")));
        }
        let defect = symplectic_defect(&d);
        if defect > 1e-7 {
            return Err(Error::NotSymplectic { defect });
        }
        Ok(())
    }

    pub fn identity(n: usize, domain: BoxDomain) -> Self {
        let d = 2 * n;
        Self::unchecked(n, domain, move |z| Ok((z.to_vec(), DMatrix::identity(d, d))))
    }

    pub fn linear(m: DMatrix<f64>, domain: BoxDomain) -> Result<Self> {
        let n = m.nrows() / 2;
        Self::new(n, domain, move |z| {
            let v = &m * DVector::from_column_slice(z);
            Ok((v.as_slice().to_vec(), m.clone()))
        })
    }

    /// Time-one map of a germ with a fixed point at the origin.
    pub fn from_germ(germ: &HamiltonianGerm) -> Result<Self> {
        let g = germ.clone();
        Self::new(germ.n(), germ.domain.clone(), move |z| {
            flow_with_derivative(&g, z, 0.0, 1.0, Tolerances::default())
        })
    }

    pub fn eval(&self, z: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        if !self.domain.contains(z) {
            return Err(Error::LeftDomain { t: 0.0 });
        }
        (self.f)(z)
    }

    /// `φ^k` by repeated application with the chain rule.
    pub fn power(&self, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("iteration k must be positive".into()));
        }
        if k == 1 {
            return Ok(self.clone());
        }
        let base = self.clone();
        Ok(Self::unchecked(self.n, self.domain.clone(), move |z| {
            let (mut p, mut d) = base.eval(z)?;
            for _ in 1..k {
                let (q, dq) = base.eval(&p)?;
                d = dq * d;
                p = q;
            }
            Ok((p, d))
        }))
    }

    /// `A⁻¹ ∘ φ ∘ A` on the cube of half-width `half_width` (new coordinates).
    pub fn conjugate(&self, a: &DMatrix<f64>, half_width: f64) -> Result<Self> {
        let inv = a.clone().try_inverse().ok_or_else(|| Error::InvalidParameter("conjugator is singular".into()))?;
        let base = self.clone();
        let a = a.clone();
        Self::new(self.n, BoxDomain::cube(2 * self.n, half_width), move |w| {
            let z = &a * DVector::from_column_slice(w);
            let (p, d) = base.eval(z.as_slice())?;
            let out = &inv * DVector::from_vec(p);
            Ok((out.as_slice().to_vec(), &inv * d * &a))
        })
    }
}

/// Symplectic `A` with `‖A⁻¹ M A − I‖ ≤ eps` for a unipotent `M` in
/// dimension two: rotate the image of `M − I` onto the x-axis, then rescale.
pub fn near_identity_conjugator(m: &SymplecticMatrix, eps: f64) -> Result<DMatrix<f64>> {
    if m.n() != 1 {
        return Err(Error::Dimension("near-identity conjugation is implemented for n = 1".into()));
    }
    let split = split_spectral(m, 1e-9)?;
    if split.dim_w != 2 {
        return Err(Error::HypothesisFailed("linearization is not unipotent".into()));
    }
    let nmat = m.matrix() - DMatrix::<f64>::identity(2, 2);
    if nmat.amax() <= eps {
        return Ok(DMatrix::identity(2, 2));
    }
    let col = if nmat.column(0).norm() >= nmat.column(1).norm() { 0 } else { 1 };
    let u = nmat.column(col).normalize();
    let r = DMatrix::from_row_slice(2, 2, &[u[0], -u[1], u[1], u[0]]);
    let upper = r.transpose() * &nmat * &r;
    let beta = upper[(0, 1)].abs();
    let lambda = (2.0 * beta / eps).sqrt().max(1.0);
    let s = DMatrix::from_diagonal(&nalgebra::dvector![lambda, 1.0 / lambda]);
    Ok(r * s)
}

/// `ψ_k` together with an estimate of the radius on which it is a
/// diffeomorphism.
#[derive(Debug, Clone)]
pub struct Psi {
    pub map: GermMap,
    pub invertibility_radius: f64,
}

/// `ψ_k(z) = (x-component of φ^k(z), y)`.
pub fn psi(phi: &GermMap, k: usize) -> Result<Psi> {
    let pk = phi.power(k)?;
    let n = phi.n;
    let inner = pk.clone();
    let map = GermMap::unchecked(n, phi.domain.clone(), move |z| {
        let (p, d) = inner.eval(z)?;
        let mut out = z.to_vec();
        out[..n].copy_from_slice(&p[..n]);
        let mut jac = DMatrix::identity(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..2 * n {
                jac[(i, j)] = d[(i, j)];
            }
        }
        Ok((out, jac))
    });
    // ψ fixes y, so it is injective on convex sets where the symmetric part
    // of ∂x'/∂x is positive definite; scan growing shells.
    let dim = 2 * n;
    let half = phi.domain.min_half_width();
    let mut radius = 0.0;
    for step in 1..=16 {
        let r = half * step as f64 / 16.0;
        let mut ok = true;
        for s in 0..(4 * dim) {
            let mut z = vec![0.0; dim];
            z[s % dim] = if (s / dim).is_multiple_of(2) { r } else { -r };
            if s >= 2 * dim {
                z[(s + 1) % dim] = 0.5 * r;
            }
            match map.eval(&z) {
                Ok((_, jac)) => {
                    let jx = jac.view((0, 0), (n, n)).into_owned();
                    let sym = (&jx + jx.transpose()) * 0.5;
                    if sym.symmetric_eigenvalues().min() <= 1e-3 {
                        ok = false;
                    }
                }
                Err(_) => ok = false,
            }
        }
        if !ok {
            break;
        }
        radius = r;
    }
    if radius == 0.0 {
        return Err(Error::NotInvertibleOnBox);
    }
    Ok(Psi { map, invertibility_radius: radius })
}

#[derive(Debug, Clone, Copy)]
pub struct GfOptions {
    /// Upper bound on `‖Dφ^k − I‖` on the box.
    pub c1_gate: f64,
    /// Upper bound on the largest plaquette circulation.
    pub closedness_tol: f64,
}

impl Default for GfOptions {
    fn default() -> Self {
        Self { c1_gate: 0.2, closedness_tol: 1e-6 }
    }
}

/// `F_k` on a grid together with its quality measures.
#[derive(Debug, Clone)]
pub struct GeneratingFunction {
    pub k: usize,
    pub field: ScalarField,
    /// `∇F_k` at every node, recovered from `φ^k(z) − z` (`2n` values per node).
    pub gradient: Vec<f64>,
    /// `max ‖Dφ^k − I‖` over the solved preimages.
    pub c1_norm: f64,
    /// Largest circulation of `∇F` around a grid plaquette.
    pub closedness_defect: f64,
    /// Largest mismatch between the sampled `∇F` and finite differences of
    /// the assembled field at interior nodes.
    pub reconstruction_residual: f64,
}

impl GeneratingFunction {
    pub fn gradient_at(&self, flat: usize) -> &[f64] {
        let d = self.field.dim();
        &self.gradient[flat * d..(flat + 1) * d]
    }
}

pub fn generating_function(phi: &GermMap, k: usize, region: &BoxDomain, resolution: usize) -> Result<GeneratingFunction> {
    generating_function_with(phi, k, region, resolution, GfOptions::default())
}

/// Solves `ψ_k(z) = w` at every node, reads off `∇F_k(w) = (−Δ_y, Δ_x)` with
/// `Δ = φ^k(z) − z`, and integrates along axis-ordered grid paths.
pub fn generating_function_with(
    phi: &GermMap,
    k: usize,
    region: &BoxDomain,
    resolution: usize,
    opts: GfOptions,
) -> Result<GeneratingFunction> {
    let n = phi.n;
    let dim = 2 * n;
    if region.dim() != dim {
        return Err(Error::Dimension("box dimension differs from the germ".into()));
    }
    let pk = phi.power(k)?;
    let mut field = ScalarField::zeros(region.clone(), vec![resolution; dim])?;
    let id = DMatrix::<f64>::identity(dim, dim);

    let solved: Vec<Result<(Vec<f64>, f64)>> = (0..field.len())
        .into_par_iter()
        .map(|i| {
            let w = field.node(i);
            let mut x: Vec<f64> = w[..n].to_vec();
            let y = &w[n..];
            for _ in 0..60 {
                let z: Vec<f64> = x.iter().chain(y).copied().collect();
                let (p, d) = pk.eval(&z).map_err(|_| Error::NotInvertibleOnBox)?;
                let res = DVector::from_iterator(n, (0..n).map(|a| p[a] - w[a]));
                let scale = 1e-15 * (1.0 + w.iter().fold(0.0f64, |m, v| m.max(v.abs())));
                if res.amax() <= scale {
                    let c1 = (&d - &id).norm();
                    let delta: Vec<f64> = p.iter().zip(&z).map(|(a, b)| a - b).collect();
                    let mut g = vec![0.0; dim];
                    for a in 0..n {
                        g[a] = -delta[n + a];
                        g[n + a] = delta[a];
                    }
                    return Ok((g, c1));
                }
                let jx = d.view((0, 0), (n, n)).into_owned();
                let step = jx.lu().solve(&res).ok_or(Error::NotInvertibleOnBox)?;
                for a in 0..n {
                    x[a] -= step[a];
                }
            }
            Err(Error::NotInvertibleOnBox)
        })
        .collect();
    let mut gradient = vec![0.0; field.len() * dim];
    let mut c1_norm: f64 = 0.0;
    for (i, s) in solved.into_iter().enumerate() {
        let (g, c1) = s?;
        c1_norm = c1_norm.max(c1);
        gradient[i * dim..(i + 1) * dim].copy_from_slice(&g);
    }
    if c1_norm > opts.c1_gate {
        return Err(Error::NotC1Small { norm: c1_norm });
    }

    // Integrate from the node closest to the origin; each node's parent moves
    // one step toward the root along the highest differing axis.
    let root = field.nearest_node(&vec![0.0; dim]);
    let mut order: Vec<usize> = (0..field.len()).collect();
    let manhattan = |idx: &[usize]| idx.iter().zip(&root).map(|(a, b)| a.abs_diff(*b)).sum::<usize>();
    order.sort_by_key(|&i| manhattan(&field.multi(i)));
    let mut values = vec![0.0; field.len()];
    for &i in order.iter().skip(1) {
        let idx = field.multi(i);
        let axis = (0..dim).rev().find(|&a| idx[a] != root[a]).expect("not the root");
        let mut pidx = idx.clone();
        if idx[axis] > root[axis] {
            pidx[axis] -= 1;
        } else {
            pidx[axis] += 1;
        }
        let p = field.flat(&pidx);
        let dx = field.coord(axis, idx[axis]) - field.coord(axis, pidx[axis]);
        values[i] = values[p] + 0.5 * (gradient[i * dim + axis] + gradient[p * dim + axis]) * dx;
    }
    field.values = values;
    let zero = vec![0.0; dim];
    if let Some(f0) = field.interpolate(&zero) {
        field.values.iter_mut().for_each(|v| *v -= f0);
    }

    let closedness_defect = plaquette_defect(&field, &gradient);
    if closedness_defect > opts.closedness_tol {
        return Err(Error::ClosednessDefect { defect: closedness_defect });
    }
    let reconstruction_residual = (0..field.len())
        .into_par_iter()
        .filter(|&i| {
            let idx = field.multi(i);
            (0..dim).all(|a| idx[a] > 0 && idx[a] + 1 < field.resolution[a])
        })
        .map(|i| {
            let fd = field.gradient_at(i);
            fd.iter()
                .zip(&gradient[i * dim..(i + 1) * dim])
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .reduce(|| 0.0, f64::max);
    Ok(GeneratingFunction { k, field, gradient, c1_norm, closedness_defect, reconstruction_residual })
}

/// Largest trapezoid circulation of the sampled 1-form around unit squares.
fn plaquette_defect(field: &ScalarField, gradient: &[f64]) -> f64 {
    let dim = field.dim();
    (0..field.len())
        .into_par_iter()
        .map(|i| {
            let idx = field.multi(i);
            let mut worst: f64 = 0.0;
            for a in 0..dim {
                if idx[a] + 1 >= field.resolution[a] {
                    continue;
                }
                for b in (a + 1)..dim {
                    if idx[b] + 1 >= field.resolution[b] {
                        continue;
                    }
                    let mut ia = idx.clone();
                    ia[a] += 1;
                    let mut ib = idx.clone();
                    ib[b] += 1;
                    let mut iab = ia.clone();
                    iab[b] += 1;
                    let (p00, p10, p01, p11) = (i, field.flat(&ia), field.flat(&ib), field.flat(&iab));
                    let ha = field.spacing(a);
                    let hb = field.spacing(b);
                    let g = |p: usize, ax: usize| gradient[p * dim + ax];
                    let circ = 0.5 * ha * (g(p00, a) + g(p10, a)) + 0.5 * hb * (g(p10, b) + g(p11, b))
                        - 0.5 * ha * (g(p01, a) + g(p11, a))
                        - 0.5 * hb * (g(p00, b) + g(p01, b));
                    worst = worst.max(circ.abs());
                }
            }
            worst
        })
        .reduce(|| 0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GfPropertyReport {
    pub critical_nodes: Vec<Vec<f64>>,
    pub fixed_nodes: Vec<Vec<f64>>,
    pub sets_match: bool,
    /// `(box half-width, ‖F‖_{C²} / ‖φ^k − id‖_{C¹})` over halving boxes.
    pub c2_ratios: Vec<(f64, f64)>,
    pub ratio_bounded: bool,
    pub flags: Vec<String>,
}

fn hausdorff_within(a: &[Vec<f64>], b: &[Vec<f64>], r: f64) -> bool {
    let dist = |p: &Vec<f64>, q: &Vec<f64>| p.iter().zip(q).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    a.iter().all(|p| b.iter().any(|q| dist(p, q) <= r)) && b.iter().all(|q| a.iter().any(|p| dist(p, q) <= r))
}

/// `‖φ − id‖_{C¹}` over the nodes of a grid.
pub fn c1_distance(phi: &GermMap, region: &BoxDomain, resolution: usize) -> Result<f64> {
    let grid = ScalarField::zeros(region.clone(), vec![resolution; region.dim()])?;
    let dim = region.dim();
    let out: Result<Vec<f64>> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let z = grid.node(i);
            let (p, d) = phi.eval(&z)?;
            let c0 = p.iter().zip(&z).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            Ok(c0.max((d - DMatrix::<f64>::identity(dim, dim)).norm()))
        })
        .collect();
    Ok(out?.into_iter().fold(0.0, f64::max))
}

/// Nodes where the stored `∇F_k` vanishes against the fixed points of `φ^k`, and the
/// ratio `‖F_k‖_{C²} / ‖φ^k − id‖_{C¹}` over four successive halvings of the
/// box.
pub fn gf_property_report(phi: &GermMap, gf: &GeneratingFunction) -> GfPropertyReport {
    let field = &gf.field;
    let dim = field.dim();
    let h = (0..dim).map(|a| field.spacing(a)).fold(0.0, f64::max);
    let tau = 1e-9 + 0.01 * h.powi(3);
    let mut flags = Vec::new();
    let critical_nodes: Vec<Vec<f64>> = (0..field.len())
        .filter(|&i| gf.gradient_at(i).iter().map(|v| v * v).sum::<f64>().sqrt() <= tau)
        .map(|i| field.node(i))
        .collect();
    let pk = phi.power(gf.k);
    let fixed_nodes: Vec<Vec<f64>> = match &pk {
        Ok(pk) => (0..field.len())
            .filter_map(|i| {
                let z = field.node(i);
                let (p, _) = pk.eval(&z).ok()?;
                let r = p.iter().zip(&z).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                (r <= tau).then_some(z)
            })
            .collect(),
        Err(e) => {
            flags.push(format!("iterate unavailable: {e}"));
            Vec::new()
        }
    };
    let sets_match = hausdorff_within(&critical_nodes, &fixed_nodes, h * (dim as f64).sqrt() * 1.001);
    if !sets_match {
        flags.push("critical set and fixed set differ".into());
    }

    let resolution = field.resolution[0];
    let mut c2_ratios = Vec::new();
    for s in 0..5 {
        let region = field.domain.scaled(0.5f64.powi(s));
        let half = region.min_half_width();
        let sub = generating_function_with(
            phi,
            gf.k,
            &region,
            resolution,
            GfOptions { closedness_tol: f64::INFINITY, ..GfOptions::default() },
        );
        let ratio = match (&sub, &pk) {
            (Ok(sub), Ok(pk)) => match c1_distance(pk, &region, resolution) {
                Ok(den) if den > 1e-300 => sub.field.c2_norm() / den,
                Ok(_) => 0.0,
                Err(e) => {
                    flags.push(format!("C1 distance failed at half-width {half}: {e}"));
                    continue;
                }
            },
            (Err(e), _) | (_, Err(e)) => {
                flags.push(format!("generating function failed at half-width {half}: {e}"));
                continue;
            }
        };
        c2_ratios.push((half, ratio));
    }
    let max = c2_ratios.iter().map(|r| r.1).fold(0.0, f64::max);
    let first = c2_ratios.first().map_or(0.0, |r| r.1);
    let ratio_bounded = c2_ratios.len() == 5
        && c2_ratios.iter().all(|r| r.1.is_finite())
        && max <= 10.0 * first.max(1e-12);
    if !ratio_bounded {
        flags.push("C2/C1 ratio not bounded over shrinking boxes".into());
    }
    GfPropertyReport { critical_nodes, fixed_nodes, sets_match, c2_ratios, ratio_bounded, flags }
}

/// Largest `‖(φ^k(z) − z) − k(φ(z) − z)‖ / (‖φ − id‖_{C¹} ‖φ(z) − z‖)` over
/// grid nodes that are not fixed.
pub fn iteration_constant(phi: &GermMap, k: usize, region: &BoxDomain, resolution: usize) -> Result<f64> {
    let pk = phi.power(k)?;
    let c1 = c1_distance(phi, region, resolution)?;
    let grid = ScalarField::zeros(region.clone(), vec![resolution; region.dim()])?;
    let vals: Result<Vec<f64>> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let z = grid.node(i);
            let (p1, _) = phi.eval(&z)?;
            let (pk_z, _) = pk.eval(&z)?;
            let d1: Vec<f64> = p1.iter().zip(&z).map(|(a, b)| a - b).collect();
            let n1 = d1.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n1 <= 1e-14 || c1 <= 1e-300 {
                return Ok(0.0);
            }
            let diff = pk_z
                .iter()
                .zip(&z)
                .zip(&d1)
                .map(|((a, b), c)| (a - b - k as f64 * c).powi(2))
                .sum::<f64>()
                .sqrt();
            Ok(diff / (c1 * n1))
        })
        .collect();
    Ok(vals?.into_iter().fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationScan {
    pub isolated: bool,
    pub min_gradient: f64,
    pub margin: f64,
    pub note: Option<String>,
}

/// Checks that `G_t = t F_k + (1 − t) k F` has no critical points on the
/// shell `r_in ≤ |w| ≤ r_out` for every sampled `t`.
pub fn homotopy_isolation_scan(
    f: &ScalarField,
    f_k: &ScalarField,
    k: usize,
    t_samples: &[f64],
    shell: (f64, f64),
) -> Result<IsolationScan> {
    if f.domain != f_k.domain || f.resolution != f_k.resolution {
        return Err(Error::Dimension("fields must share a grid".into()));
    }
    let nodes: Vec<usize> = (0..f.len())
        .filter(|&i| {
            let r = f.node(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            r >= shell.0 && r <= shell.1
        })
        .collect();
    if nodes.is_empty() {
        return Err(Error::InvalidParameter("shell contains no grid nodes".into()));
    }
    let grads: Vec<(Vec<f64>, Vec<f64>)> = nodes.iter().map(|&i| (f.gradient_at(i), f_k.gradient_at(i))).collect();
    let mut min_gradient = f64::INFINITY;
    let mut max_gradient: f64 = 0.0;
    for &t in t_samples {
        for (g, gk) in &grads {
            let norm = g
                .iter()
                .zip(gk)
                .map(|(a, b)| (t * b + (1.0 - t) * k as f64 * a).powi(2))
                .sum::<f64>()
                .sqrt();
            min_gradient = min_gradient.min(norm);
            max_gradient = max_gradient.max(norm);
        }
    }
    let margin = 1e-14 + 1e-4 * max_gradient;
    let isolated = min_gradient > margin;
    let note = (!isolated).then(|| "NonIsolated: gradient vanishes on the shell".to_string());
    Ok(IsolationScan { isolated, min_gradient, margin, note })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shear() -> GermMap {
        GermMap::linear(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]), BoxDomain::cube(2, 4.0)).unwrap()
    }

    #[test]
    fn field_interpolation_and_io() {
        let f = ScalarField::from_fn(BoxDomain::cube(2, 1.0), vec![5, 7], |z| 2.0 * z[0] - z[1] + 0.5).unwrap();
        assert!((f.interpolate(&[0.33, -0.71]).unwrap() - (0.66 + 0.71 + 0.5)).abs() < 1e-12);
        assert!(f.interpolate(&[2.0, 0.0]).is_none());
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        let g = ScalarField::read_binary(buf.as_slice()).unwrap();
        assert_eq!(f, g);
        let grad = f.gradient_at(f.flat(&[0, 3]));
        assert!((grad[0] - 2.0).abs() < 1e-12 && (grad[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn psi_of_shear_and_identity() {
        let p = psi(&shear(), 1).unwrap();
        let (v, _) = p.map.eval(&[0.3, 0.5]).unwrap();
        assert!((v[0] - 0.8).abs() < 1e-15 && (v[1] - 0.5).abs() < 1e-15);
        let id = psi(&GermMap::identity(1, BoxDomain::cube(2, 1.0)), 3).unwrap();
        let (v, _) = id.map.eval(&[0.3, 0.5]).unwrap();
        assert_eq!(v, vec![0.3, 0.5]);
    }

    #[test]
    fn identity_has_zero_generating_function() {
        let gf = generating_function(&GermMap::identity(1, BoxDomain::cube(2, 1.0)), 1, &BoxDomain::cube(2, 0.5), 9)
            .unwrap();
        assert_eq!(gf.field.max_abs(), 0.0);
    }

    #[test]
    fn shear_generating_function_is_half_y_squared() {
        let s = GermMap::linear(DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]), BoxDomain::cube(2, 4.0)).unwrap();
        let gf = generating_function(&s, 1, &BoxDomain::cube(2, 1.0), 21).unwrap();
        for i in 0..gf.field.len() {
            let w = gf.field.node(i);
            assert!((gf.field.values[i] - 0.05 * w[1] * w[1]).abs() < 1e-12);
        }
        let rep = gf_property_report(&s, &gf);
        assert!(rep.sets_match);
        assert_eq!(rep.critical_nodes.len(), 21);
        assert!(rep.critical_nodes.iter().all(|z| z[1].abs() < 1e-12));
    }

    #[test]
    fn c1_gate_rejects_large_shear() {
        assert!(matches!(
            generating_function(&shear(), 1, &BoxDomain::cube(2, 1.0), 9),
            Err(Error::NotC1Small { .. })
        ));
    }

    #[test]
    fn conjugator_makes_shear_small() {
        let m = crate::symplin::validate_symplectic(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -3.0, 1.0]), 1e-12).unwrap();
        let a = near_identity_conjugator(&m, 0.05).unwrap();
        let c = a.clone().try_inverse().unwrap() * m.matrix() * &a;
        assert!((c - DMatrix::<f64>::identity(2, 2)).amax() <= 0.05 + 1e-12);
        assert!(symplectic_defect(&a) < 1e-12);
    }

    #[test]
    fn homotopy_scan_detects_line_of_critical_points() {
        let s = GermMap::linear(DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]), BoxDomain::cube(2, 4.0)).unwrap();
        let f = generating_function(&s, 1, &BoxDomain::cube(2, 0.5), 21).unwrap();
        let f2 = generating_function(&s, 2, &BoxDomain::cube(2, 0.5), 21).unwrap();
        let scan = homotopy_isolation_scan(&f.field, &f2.field, 2, &[0.0, 0.5, 1.0], (0.1, 0.4)).unwrap();
        assert!(!scan.isolated);
        assert!(scan.note.unwrap().contains("NonIsolated"));
    }
}
