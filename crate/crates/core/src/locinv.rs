//! Local Floer homology of isolated fixed points and its behaviour under
//! iteration.
//!
//! Three routes:
//! * nondegenerate: rank one in the Conley–Zehnder degree;
//! * strongly degenerate: `HF_* = HM_{*+n}(F_k)` for the generating function
//!   `F_k` of the `k`-th iterate, lifted by the even integer `kΔ`;
//! * split: Künneth product of the factors.

use std::f64::consts::{PI, TAU};
use std::fmt;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cubhom::{local_morse_homology, FieldSampler, MorseParams};
use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::genfun::{generating_function_with, near_identity_conjugator, GermMap, GfOptions, ScalarField};
use crate::hamflow::{flow_with_derivative, Degeneracy, FixedPointRecord, HamiltonianGerm};
use crate::ode::Tolerances;
use crate::pathindex::conley_zehnder;
use crate::ranks::GradedRanks;
use crate::symplin::{admissible, good, SymplecticMatrix};

/// Zero test for the mean index of a symplectically degenerate maximum.
pub const DELTA_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftConvention {
    CzAnchor,
    GenfunN0,
    KunnethProduct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Nondegenerate,
    StronglyDegenerate,
    Split,
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Route::Nondegenerate => "nondegenerate",
            Route::StronglyDegenerate => "strongly_degenerate",
            Route::Split => "split",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalFloer {
    pub k: usize,
    pub ranks: GradedRanks,
    pub shift_convention: ShiftConvention,
    /// Mean index of the `k`-th iterate.
    pub delta: f64,
    pub route: Route,
    /// Half-width of the box used for the generating function (route b).
    pub half_width: Option<f64>,
    /// Hypothesis checks and other notes, in order of execution.
    pub log: Vec<String>,
}

impl LocalFloer {
    /// Whether the support lies in `[delta − n, delta + n]`.
    pub fn within_window(&self, n: usize) -> bool {
        self.ranks
            .support()
            .iter()
            .all(|&d| (d as f64 - self.delta).abs() <= n as f64 + 1e-6)
    }
}

#[derive(Debug, Clone)]
pub struct FloerOptions {
    /// Initial half-width of the generating-function box.
    pub half_width: f64,
    /// Node counts per axis; odd so that the origin is a node.
    pub resolutions: Vec<usize>,
    pub gf: GfOptions,
    /// Number of times the box may shrink by 0.7 to pass the C¹ gate.
    pub max_shrinks: usize,
    /// Target `‖A⁻¹ M^k A − I‖` when conjugating a non-identity unipotent
    /// linearization.
    pub conjugation_eps: f64,
}

impl FloerOptions {
    pub fn for_dimension(n: usize) -> Self {
        let resolutions = if n == 1 { vec![21, 31, 41] } else { vec![7, 9] };
        Self { half_width: 0.1, resolutions, gf: GfOptions::default(), max_shrinks: 8, conjugation_eps: 0.02 }
    }
}

/// Time-one map of `germ` recentred at `p`, on the largest cube about `p`
/// inside the domain.
pub fn germ_map_at(germ: &HamiltonianGerm, p: &[f64]) -> Result<GermMap> {
    let half = p
        .iter()
        .zip(germ.domain.lo.iter().zip(&germ.domain.hi))
        .map(|(v, (a, b))| (v - a).min(b - v))
        .fold(f64::INFINITY, f64::min);
    if half <= 0.0 {
        return Err(Error::InvalidParameter("fixed point lies on the domain boundary".into()));
    }
    let g = germ.clone();
    let p = p.to_vec();
    GermMap::new(germ.n(), BoxDomain::cube(p.len(), half), move |w| {
        let z: Vec<f64> = w.iter().zip(&p).map(|(a, b)| a + b).collect();
        let (q, d) = flow_with_derivative(&g, &z, 0.0, 1.0, Tolerances::default())?;
        Ok((q.iter().zip(&p).map(|(a, b)| a - b).collect(), d))
    })
}

/// Samples the generating function of a fixed germ map on a fixed box.
struct GfSampler {
    map: GermMap,
    region: BoxDomain,
    opts: GfOptions,
}

impl FieldSampler for GfSampler {
    fn domain(&self) -> &BoxDomain {
        &self.region
    }

    fn sample(&self, resolution: usize) -> Result<ScalarField> {
        Ok(generating_function_with(&self.map, 1, &self.region, resolution, self.opts)?.field)
    }
}

/// Largest spectral norm of the finite-difference Hessian at interior nodes.
fn max_hessian_norm(f: &ScalarField) -> f64 {
    let m = f.dim();
    (0..f.len())
        .into_par_iter()
        .filter_map(|i| {
            let idx = f.multi(i);
            if (0..m).any(|a| idx[a] == 0 || idx[a] + 1 == f.resolution[a]) {
                return None;
            }
            let at = |shift: &[(usize, isize)]| {
                let mut j = idx.clone();
                for &(a, s) in shift {
                    j[a] = (j[a] as isize + s) as usize;
                }
                f.values[f.flat(&j)]
            };
            let f0 = f.values[i];
            let mut h = DMatrix::<f64>::zeros(m, m);
            for a in 0..m {
                let ha = f.spacing(a);
                h[(a, a)] = (at(&[(a, 1)]) - 2.0 * f0 + at(&[(a, -1)])) / (ha * ha);
                for b in (a + 1)..m {
                    let hb = f.spacing(b);
                    let v = (at(&[(a, 1), (b, 1)]) - at(&[(a, 1), (b, -1)]) - at(&[(a, -1), (b, 1)])
                        + at(&[(a, -1), (b, -1)]))
                        / (4.0 * ha * hb);
                    h[(a, b)] = v;
                    h[(b, a)] = v;
                }
            }
            Some(h.symmetric_eigenvalues().amax())
        })
        .reduce(|| 0.0, f64::max)
}

fn check_admissible(m: &SymplecticMatrix, k: usize) -> Result<()> {
    if admissible(m, k)? {
        Ok(())
    } else {
        Err(Error::NotAdmissible { k })
    }
}

/// Local Floer homology of the `k`-th iterate at the fixed point of `record`.
pub fn local_floer(germ: &HamiltonianGerm, record: &FixedPointRecord, k: usize) -> Result<LocalFloer> {
    local_floer_with(germ, record, k, &FloerOptions::for_dimension(germ.n()))
}

pub fn local_floer_with(
    germ: &HamiltonianGerm,
    record: &FixedPointRecord,
    k: usize,
    opts: &FloerOptions,
) -> Result<LocalFloer> {
    check_admissible(&record.linearization, k)?;
    let n = germ.n();
    let delta = k as f64 * record.delta;
    match record.degeneracy {
        Degeneracy::Nondegenerate => {
            let mu = conley_zehnder(&record.monodromy.iterate(k)?)?;
            Ok(LocalFloer {
                k,
                ranks: GradedRanks::single(mu as i32),
                shift_convention: ShiftConvention::CzAnchor,
                delta,
                route: Route::Nondegenerate,
                half_width: None,
                log: vec![format!("conley-zehnder index of iterate: {mu}")],
            })
        }
        Degeneracy::StronglyDegenerate => strongly_degenerate_route(germ, record, k, delta, n, opts),
        Degeneracy::WeaklyDegenerate => Err(Error::RouteUnavailable(
            "weakly degenerate fixed point without an explicit splitting".into(),
        )),
    }
}

fn strongly_degenerate_route(
    germ: &HamiltonianGerm,
    record: &FixedPointRecord,
    k: usize,
    delta: f64,
    n: usize,
    opts: &FloerOptions,
) -> Result<LocalFloer> {
    let mut log = Vec::new();
    let lift = delta.round();
    if (delta - lift).abs() > 1e-6 || (lift as i64) % 2 != 0 {
        return Err(Error::HypothesisFailed(format!(
            "mean index {delta} of a strongly degenerate iterate is not an even integer"
        )));
    }
    let iterated = germ.iterate(k)?;
    let mut map = germ_map_at(&iterated, &record.z)?;
    let mk = record.linearization.pow(k);
    let dev = (mk.matrix() - DMatrix::<f64>::identity(2 * n, 2 * n)).amax();
    if dev > opts.conjugation_eps {
        let a = near_identity_conjugator(&mk, opts.conjugation_eps)?;
        let norm_a = a.amax() * (2 * n) as f64;
        let half = map.domain.min_half_width() / norm_a;
        map = map.conjugate(&a, half)?;
        log.push(format!("conjugated linearization (deviation {dev:.3e}) by a symplectic scaling"));
    }
    let mut half = opts.half_width.min(0.5 * map.domain.min_half_width());
    let finest = *opts.resolutions.last().ok_or_else(|| Error::InvalidParameter("no resolutions".into()))?;
    let mut attempt = 0;
    let field = loop {
        let region = BoxDomain::cube(2 * n, half);
        match generating_function_with(&map, 1, &region, finest, opts.gf) {
            Ok(gf) => {
                log.push(format!(
                    "generating function on half-width {half:.4}: |Dphi^k - I| = {:.3e}, closedness defect {:.3e}",
                    gf.c1_norm, gf.closedness_defect
                ));
                break gf.field;
            }
            Err(Error::NotC1Small { norm }) if attempt < opts.max_shrinks => {
                // |Dφ − I| grows at least linearly with the box size.
                attempt += 1;
                half *= (0.9 * opts.gf.c1_gate / norm).min(0.7);
            }
            Err(Error::NotInvertibleOnBox | Error::ClosednessDefect { .. } | Error::LeftDomain { .. })
                if attempt < opts.max_shrinks =>
            {
                attempt += 1;
                half *= 0.7;
            }
            Err(e) => return Err(e),
        }
    };
    let hess = max_hessian_norm(&field);
    log.push(format!("max |d2 F_k| on grid = {hess:.3e} (bound 2 pi)"));
    if hess >= TAU {
        return Err(Error::HypothesisFailed(format!("|d2 F_k| = {hess:.3e} is not below 2 pi")));
    }
    let sampler = GfSampler { map, region: BoxDomain::cube(2 * n, half), opts: opts.gf };
    let hm = local_morse_homology(&sampler, &MorseParams::with_resolutions(opts.resolutions.clone()))?;
    log.push(format!("local Morse homology {} (delta {:.3e})", hm.ranks, hm.delta));
    let ranks = hm.ranks.shifted(-(n as i32) + lift as i32);
    Ok(LocalFloer {
        k,
        ranks,
        shift_convention: ShiftConvention::GenfunN0,
        delta,
        route: Route::StronglyDegenerate,
        half_width: Some(half),
        log,
    })
}

/// Künneth product of factor answers.
pub fn local_floer_split(factors: &[(&HamiltonianGerm, &FixedPointRecord)], k: usize) -> Result<LocalFloer> {
    if factors.is_empty() {
        return Err(Error::InvalidParameter("no factors".into()));
    }
    let parts: Vec<LocalFloer> = factors
        .par_iter()
        .map(|(g, r)| local_floer(g, r, k))
        .collect::<Result<Vec<_>>>()?;
    let mut ranks = GradedRanks::single(0);
    let mut delta = 0.0;
    let mut log = Vec::new();
    for (i, p) in parts.iter().enumerate() {
        ranks = ranks.kunneth(&p.ranks);
        delta += p.delta;
        log.push(format!("factor {i}: {} via {}", p.ranks, p.route));
    }
    Ok(LocalFloer { k, ranks, shift_convention: ShiftConvention::KunnethProduct, delta, route: Route::Split, half_width: None, log })
}

/// Graded convolution of ranks over Z₂.
pub fn kunneth(a: &GradedRanks, b: &GradedRanks) -> GradedRanks {
    a.kunneth(b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistenceRow {
    pub k: usize,
    pub admissible: bool,
    pub good: bool,
    pub ranks: GradedRanks,
    pub route: Option<Route>,
    pub s_k: Option<i32>,
    pub s_k_even: Option<bool>,
    /// `|s_k + l − kΔ| ≤ n` for every `l` in the support of the first ranks.
    pub window_ok: Option<bool>,
    /// `|s_k / k − Δ|`.
    pub limit_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistenceReport {
    pub n: usize,
    pub delta: f64,
    pub rows: Vec<PersistenceRow>,
    /// `Δ = 0` and the degree-`n` rank is nonzero, so every `s_k` must vanish.
    pub zero_shift_expected: bool,
}

impl PersistenceReport {
    /// Every check recorded in the rows holds.
    pub fn all_checks_pass(&self) -> bool {
        self.rows.iter().filter(|r| r.admissible).all(|r| {
            r.s_k.is_some()
                && r.window_ok == Some(true)
                && (!r.good || r.s_k_even == Some(true))
                && (!self.zero_shift_expected || r.s_k == Some(0))
        })
    }

    /// CSV with columns `k, admissible, good, support, s_k, even`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["k", "admissible", "good", "support", "s_k", "even"])?;
        for r in &self.rows {
            let support: Vec<String> = r.ranks.iter().map(|(d, k)| format!("{d}:{k}")).collect();
            wr.write_record([
                r.k.to_string(),
                r.admissible.to_string(),
                r.good.to_string(),
                support.join(" "),
                r.s_k.map(|s| s.to_string()).unwrap_or_default(),
                r.s_k_even.map(|s| s.to_string()).unwrap_or_default(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// The shift `s` with `ranks_k = ranks_1` moved up by `s`, if one exists.
pub fn aligning_shift(base: &GradedRanks, ranks_k: &GradedRanks) -> Result<Option<i32>> {
    match (base.min_degree(), ranks_k.min_degree()) {
        (Some(a), Some(b)) => {
            // Finite nonempty supports admit at most one aligning shift.
            let s = b - a;
            Ok((base.shifted(s) == *ranks_k).then_some(s))
        }
        _ => Ok(None),
    }
}

/// Computes local Floer homology for every `k` and checks the persistence
/// laws: a common shift to the `k = 1` answer, even shifts for good `k`,
/// the support window, and vanishing shifts when `Δ = 0` and `HF_n ≠ 0`.
pub fn verify_persistence(germ: &HamiltonianGerm, record: &FixedPointRecord, ks: &[usize]) -> Result<PersistenceReport> {
    verify_persistence_with(ks, germ.n(), record, |k| local_floer(germ, record, k))
}

/// As [`verify_persistence`], for product germs via the split route.
pub fn verify_persistence_split(
    factors: &[(&HamiltonianGerm, &FixedPointRecord)],
    product: &FixedPointRecord,
    ks: &[usize],
) -> Result<PersistenceReport> {
    let n = factors.iter().map(|(g, _)| g.n()).sum();
    verify_persistence_with(ks, n, product, |k| local_floer_split(factors, k))
}

fn verify_persistence_with(
    ks: &[usize],
    n: usize,
    record: &FixedPointRecord,
    compute: impl Fn(usize) -> Result<LocalFloer> + Sync,
) -> Result<PersistenceReport> {
    for &k in ks {
        check_admissible(&record.linearization, k)?;
    }
    let base = compute(1)?;
    let delta = record.delta;
    let zero_shift_expected = delta.abs() <= DELTA_TOL && base.ranks.rank(n as i32) > 0;
    let computed: Vec<(usize, Result<LocalFloer>)> = ks.par_iter().map(|&k| (k, compute(k))).collect();
    let mut rows = Vec::new();
    for (k, lf) in computed {
        let lf = lf?;
        let is_good = good(&record.linearization, k)?;
        let s_k = if base.ranks.is_zero() { None } else { aligning_shift(&base.ranks, &lf.ranks)? };
        let window_ok = s_k.map(|s| {
            base.ranks
                .support()
                .iter()
                .all(|&l| ((s + l) as f64 - k as f64 * delta).abs() <= n as f64 + 1e-6)
        });
        rows.push(PersistenceRow {
            k,
            admissible: true,
            good: is_good,
            ranks: lf.ranks,
            route: Some(lf.route),
            s_k,
            s_k_even: s_k.map(|s| s % 2 == 0),
            window_ok,
            limit_gap: s_k.map(|s| (s as f64 / k as f64 - delta).abs()),
        });
    }
    rows.sort_by_key(|r| r.k);
    Ok(PersistenceReport { n, delta, rows, zero_shift_expected })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdmEvidence {
    pub delta: f64,
    pub hf_n_rank: usize,
    pub strongly_degenerate: bool,
    /// Strong degeneracy together with `HF_n ≠ 0` at an admissible
    /// `k ≥ n + 1`, when computable.
    pub iterate_check: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdmReport {
    pub is_sdm: bool,
    pub evidence: SdmEvidence,
}

/// Symplectically degenerate maximum: `Δ = 0` and `HF_n ≠ 0`.
pub fn detect_sdm(germ: &HamiltonianGerm, record: &FixedPointRecord) -> Result<SdmReport> {
    let n = germ.n();
    let hf = local_floer(germ, record, 1)?;
    let hf_n_rank = hf.ranks.rank(n as i32);
    let strongly_degenerate = record.degeneracy == Degeneracy::StronglyDegenerate;
    let is_sdm = record.delta.abs() <= DELTA_TOL && hf_n_rank >= 1;
    let iterate_check = if strongly_degenerate {
        let k = (n + 1..n + 8).find(|&k| admissible(&record.linearization, k).unwrap_or(false));
        match k {
            Some(k) => match local_floer(germ, record, k) {
                Ok(lf) => Some(lf.ranks.rank(n as i32) >= 1),
                Err(_) => None,
            },
            None => None,
        }
    } else {
        None
    };
    Ok(SdmReport { is_sdm, evidence: SdmEvidence { delta: record.delta, hf_n_rank, strongly_degenerate, iterate_check } })
}

/// Index of the isolated fixed point `0` of `φ^k` in dimension two: the
/// winding number of `φ^k(z) − z` around the circle of the given radius.
pub fn fixed_point_index_2d(phi: &GermMap, k: usize, radius: f64, samples: usize) -> Result<i64> {
    if phi.n != 1 {
        return Err(Error::Dimension("fixed-point index oracle is two-dimensional".into()));
    }
    let pk = phi.power(k)?;
    let vals: Vec<(f64, f64)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let t = TAU * i as f64 / samples as f64;
            let z = [radius * t.cos(), radius * t.sin()];
            let (p, _) = pk.eval(&z)?;
            Ok((p[0] - z[0], p[1] - z[1]))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = 0.0;
    for i in 0..samples {
        let (a, b) = vals[i];
        let (c, d) = vals[(i + 1) % samples];
        let step = (a * d - b * c).atan2(a * c + b * d);
        if step.abs() > PI / 2.0 {
            return Err(Error::WindingUnresolved { samples });
        }
        total += step;
    }
    Ok((total / TAU).round() as i64)
}

/// `(−1)^n χ(HF)`, the value the fixed-point index must take.
pub fn expected_index(lf: &LocalFloer, n: usize) -> i64 {
    let chi = lf.ranks.euler_characteristic();
    if n.is_multiple_of(2) {
        chi
    } else {
        -chi
    }
}
