//! Acceptance run: one PASS/FAIL line per criterion.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::time::Instant;

use nalgebra::DMatrix;

use localfloer_core::corpus::{build, build_default, corpus_list, CorpusGerm};
use localfloer_core::cubhom::{local_morse_homology, FnSampler, MorseParams};
use localfloer_core::genfun::{generating_function, generating_function_with, gf_property_report, GfOptions};
use localfloer_core::isolation::{c_constant, periodic_point_search, sample_inequality, IsolationConclusion};
use localfloer_core::locinv::{detect_sdm, local_floer, local_floer_split, verify_persistence};
use localfloer_core::pathindex::{conley_zehnder, maslov_loop, mean_index};
use localfloer_core::symplin::{admissible, good};
use localfloer_core::{BoxDomain, Degeneracy, Error, GermMap, GradedRanks, LocalFloer, SymplecticPath};

type Outcome = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s(e: Error) -> String {
    e.to_string()
}

fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// Unwrapped angle swept by the first column of a 2×2 path.
fn column_angle(path: &SymplecticPath) -> f64 {
    let mut total = 0.0;
    let mut prev: Option<f64> = None;
    for m in path.matrices() {
        let a = m[(1, 0)].atan2(m[(0, 0)]);
        if let Some(p) = prev {
            let mut d = a - p;
            while d > PI {
                d -= TAU;
            }
            while d < -PI {
                d += TAU;
            }
            total += d;
        }
        prev = Some(a);
    }
    total
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let g = build_default("quartic-max").map_err(e2s)?;
    let rec = g.record().map_err(e2s)?;
    let ks: Vec<usize> = (1..=6).collect();
    let rep = verify_persistence(&g.germ, &rec, &ks).map_err(e2s)?;
    for row in &rep.rows {
        ensure(row.ranks == GradedRanks::single(1), || format!("k = {} ranks {}", row.k, row.ranks))?;
        ensure(row.s_k == Some(0), || format!("k = {} s_k {:?}", row.k, row.s_k))?;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 120.0, || format!("took {secs:.1} s"))?;
    Ok(format!("ranks {{1:1}} and s_k = 0 for k = 1..6 in {secs:.1} s"))
}

#[allow(clippy::approx_constant)]
fn criterion_2() -> Outcome {
    let mut checked = 0;
    for alpha in [0.3183, 0.4142] {
        let g = build("rotation", &params(&[("alpha", alpha)])).map_err(e2s)?;
        let rec = g.record().map_err(e2s)?;
        let ks: Vec<usize> =
            (1..=20).filter(|&k| admissible(&rec.linearization, k).unwrap_or(false)).collect();
        let rep = verify_persistence(&g.germ, &rec, &ks).map_err(e2s)?;
        let mu1 = rep.rows.iter().find(|r| r.k == 1).and_then(|r| r.ranks.min_degree()).ok_or("no k = 1 row")?;
        for row in &rep.rows {
            let s = row.s_k.ok_or_else(|| format!("alpha {alpha} k {} has no shift", row.k))?;
            ensure(s % 2 == 0, || format!("alpha {alpha} k {} odd shift {s}", row.k))?;
            let bound = (1.0 + mu1.abs() as f64) / row.k as f64;
            let gap = (s as f64 / row.k as f64 - rep.delta).abs();
            ensure(gap <= bound + 1e-9, || format!("alpha {alpha} k {} gap {gap} > {bound}", row.k))?;
            // winding oracle: μ = 2⌊θ/2π⌋ + 1 for the swept angle θ
            let path = rec.monodromy.iterate(row.k).map_err(e2s)?;
            let theta = column_angle(&path);
            let oracle = 2 * (theta / TAU).floor() as i64 + 1;
            let cz = conley_zehnder(&path).map_err(e2s)?;
            ensure(cz == oracle, || format!("alpha {alpha} k {}: cz {cz} vs winding {oracle}", row.k))?;
            ensure(row.ranks == GradedRanks::single(cz as i32), || format!("k {} ranks {}", row.k, row.ranks))?;
            checked += 1;
        }
    }
    Ok(format!("{checked} (alpha, k) pairs: even shifts, window bound, exact winding match"))
}

fn criterion_3() -> Outcome {
    let g = build_default("negative-hyperbolic").map_err(e2s)?;
    let rec = g.record().map_err(e2s)?;
    let rep = verify_persistence(&g.germ, &rec, &[1, 2, 3, 5]).map_err(e2s)?;
    let theta = column_angle(&rec.monodromy);
    let mu1 = (theta / PI).round() as i32;
    let mut line = Vec::new();
    for row in &rep.rows {
        let is_good = good(&rec.linearization, row.k).map_err(e2s)?;
        let s = row.s_k.ok_or_else(|| format!("k {} has no shift", row.k))?;
        let oracle = (row.k as i32 - 1) * mu1;
        ensure(s == oracle, || format!("k {}: s_k {s} vs oracle {oracle}", row.k))?;
        match row.k {
            2 => ensure(!is_good && s % 2 != 0, || format!("k = 2 good {is_good} s {s}"))?,
            3 | 5 => ensure(is_good && s % 2 == 0, || format!("k = {} good {is_good} s {s}", row.k))?,
            _ => {}
        }
        line.push(format!("s_{} = {s}", row.k));
    }
    Ok(line.join(", "))
}

fn criterion_4() -> Outcome {
    let g = build_default("radial-perturbed-rotation").map_err(e2s)?;
    let phi = GermMap::from_germ(&g.germ).map_err(e2s)?;
    let radii = [0.3, 0.1, 0.03, 0.01, 3e-3, 1e-3];
    for k in [1, 2, 4, 5] {
        let rep = periodic_point_search(&phi, k, &radii).map_err(e2s)?;
        ensure(rep.admissible, || format!("k = {k} reported inadmissible"))?;
        for r in &rep.per_radius {
            ensure(r.only_origin(), || format!("k = {k} radius {} found {} points", r.radius, r.points.len()))?;
        }
    }
    let a = periodic_point_search(&phi, 3, &radii).map_err(e2s)?;
    let b = periodic_point_search(&phi, 3, &radii).map_err(e2s)?;
    ensure(!a.admissible, || "k = 3 reported admissible".into())?;
    ensure(a.conclusion == IsolationConclusion::IsolationFails, || "k = 3 isolation holds".into())?;
    let witnesses = a.non_fixed_witnesses();
    ensure(witnesses > 0, || "no non-fixed 3-periodic points".into())?;
    for r in &a.per_radius {
        ensure(r.non_fixed().count() > 0, || format!("no witness at radius {}", r.radius))?;
    }
    ensure(a == b, || "repeated search differs".into())?;
    Ok(format!("only the origin for k in {{1,2,4,5}}; {witnesses} non-fixed 3-periodic points, reproducible"))
}

fn criterion_5() -> Outcome {
    let c2 = c_constant(2, 1).map_err(e2s)?;
    ensure(c2.value == 0.5, || format!("c(2) = {}", c2.value))?;
    let mut worst = 0.0f64;
    for k in 2..=12 {
        let c = c_constant(k, 1).map_err(e2s)?;
        ensure(c.equality_defect <= 1e-12, || format!("k {k} equality defect {}", c.equality_defect))?;
        let closed = ((k / 2) * k.div_ceil(2)) as f64 / k as f64;
        ensure((c.value - closed).abs() <= 1e-12, || format!("k {k}: {} vs step-function value {closed}", c.value))?;
        for m in [1, 2] {
            let chk = sample_inequality(k, m, 10_000, 0).map_err(e2s)?;
            ensure(chk.violations == 0, || format!("k {k} m {m}: {} violations", chk.violations))?;
            worst = worst.max(chk.max_ratio / chk.c);
        }
    }
    Ok(format!("c(2) = 1/2; no violations for k <= 12 (largest sampled ratio {worst:.4} of c(k))"))
}

fn all_germs() -> Result<Vec<CorpusGerm>, String> {
    corpus_list().iter().map(|e| build_default(e.name).map_err(e2s)).collect()
}

fn loop_2d() -> Result<SymplecticPath, String> {
    SymplecticPath::from_fn(1, 64, |t| {
        let a = TAU * t;
        DMatrix::from_row_slice(2, 2, &[a.cos(), -a.sin(), a.sin(), a.cos()])
    })
    .map_err(e2s)
}

fn criterion_6() -> Outcome {
    let mut counts = [0usize; 5];
    for g in all_germs()? {
        let rec = g.record().map_err(e2s)?;
        let n = g.germ.n();
        let path = &rec.monodromy;
        // MI1
        for k in 2..=5 {
            let dk = mean_index(&path.iterate(k).map_err(e2s)?).map_err(|e| format!("{} MI1 k {k}: {e}", g.name))?;
            ensure((dk - k as f64 * rec.delta).abs() <= 1e-6, || format!("{} MI1 k {k}: {dk} vs {}", g.name, rec.delta))?;
            counts[0] += 1;
        }
        // MI4
        for k in 1..=5 {
            if !admissible(&rec.linearization, k).map_err(e2s)? {
                continue;
            }
            let pk = path.iterate(k).map_err(e2s)?;
            if let Ok(cz) = conley_zehnder(&pk) {
                let dk = k as f64 * rec.delta;
                let gap = (cz as f64 - dk).abs();
                let strict = pk.endpoint().matrix().clone() - DMatrix::<f64>::identity(2 * n, 2 * n);
                let has_non_one = rec.degeneracy != Degeneracy::StronglyDegenerate || strict.amax() > 1e-6;
                let ok = if has_non_one { gap < n as f64 } else { gap <= n as f64 + 1e-9 };
                ensure(ok, || format!("{} MI4 k {k}: cz {cz} delta {dk}", g.name))?;
                counts[1] += 1;
            }
        }
        // MI5
        if g.factors.len() == 2 {
            let parts: f64 = g.factors.iter().map(|f| f.record().map(|r| r.delta)).sum::<localfloer_core::Result<f64>>().map_err(e2s)?;
            ensure((parts - rec.delta).abs() <= 1e-6, || format!("{} MI5: {parts} vs {}", g.name, rec.delta))?;
            counts[2] += 1;
        }
        // MI7
        let mut lp = loop_2d()?;
        for _ in 1..n {
            lp = lp.direct_sum(&SymplecticPath::constant_identity(1));
        }
        let m = maslov_loop(&lp).map_err(e2s)?;
        let moved = mean_index(&path.act_by_loop(&lp).map_err(e2s)?).map_err(|e| format!("{} MI7: {e}", g.name))?;
        let shift = moved - rec.delta;
        ensure((shift - 2.0 * m as f64).abs() <= 1e-6, || format!("{} MI7: shift {shift} maslov {m}", g.name))?;
        counts[3] += 1;
        // MI8
        if rec.degeneracy == Degeneracy::StronglyDegenerate {
            let even = 2.0 * (rec.delta / 2.0).round();
            ensure((rec.delta - even).abs() <= 1e-6, || format!("{} MI8: delta {}", g.name, rec.delta))?;
            counts[4] += 1;
        }
    }
    Ok(format!("MI1 {} MI4 {} MI5 {} MI7 {} MI8 {} checks", counts[0], counts[1], counts[2], counts[3], counts[4]))
}

/// Critical points of `f + ε⟨a, z⟩` by Newton from a seed grid, counted
/// by Morse index.
fn morse_counts(
    dim: usize,
    grad: &dyn Fn(&[f64]) -> Vec<f64>,
    hess: &dyn Fn(&[f64]) -> DMatrix<f64>,
    radius: f64,
) -> BTreeMap<i32, usize> {
    let g = 21usize;
    let mut found: Vec<Vec<f64>> = Vec::new();
    for mut idx in 0..g.pow(dim as u32) {
        let mut z: Vec<f64> = (0..dim)
            .map(|_| {
                let i = idx % g;
                idx /= g;
                -radius + 2.0 * radius * i as f64 / (g - 1) as f64
            })
            .collect();
        for _ in 0..60 {
            let gr = nalgebra::DVector::from_vec(grad(&z));
            let Some(step) = hess(&z).lu().solve(&gr) else { break };
            z.iter_mut().zip(step.iter()).for_each(|(a, b)| *a -= b);
            if step.norm() < 1e-15 {
                break;
            }
        }
        let ok = grad(&z).iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-12
            && z.iter().map(|v| v * v).sum::<f64>().sqrt() < radius;
        if ok && !found.iter().any(|p| p.iter().zip(&z).all(|(a, b)| (a - b).abs() < 1e-8)) {
            found.push(z);
        }
    }
    let mut counts = BTreeMap::new();
    for z in found {
        let index = hess(&z).symmetric_eigenvalues().iter().filter(|&&l| l < 0.0).count() as i32;
        *counts.entry(index).or_insert(0) += 1;
    }
    counts
}

/// Degree of the gradient at the origin: sign change in 1D, winding in 2D.
fn gradient_degree(dim: usize, grad: &dyn Fn(&[f64]) -> Vec<f64>, r: f64) -> i64 {
    if dim == 1 {
        let s = |v: f64| if v > 0.0 { 1 } else { -1 };
        return (s(grad(&[r])[0]) - s(grad(&[-r])[0])) / 2;
    }
    let n = 720;
    let mut total = 0.0;
    let at = |i: usize| {
        let t = TAU * i as f64 / n as f64;
        let g = grad(&[r * t.cos(), r * t.sin()]);
        g[1].atan2(g[0])
    };
    for i in 0..n {
        let mut d = at(i + 1) - at(i);
        while d > PI {
            d -= TAU;
        }
        while d < -PI {
            d += TAU;
        }
        total += d;
    }
    (total / TAU).round() as i64
}

type Grad = Box<dyn Fn(&[f64]) -> Vec<f64>>;
type Hess = Box<dyn Fn(&[f64]) -> DMatrix<f64>>;

#[allow(clippy::type_complexity)]
fn criterion_7() -> Outcome {
    let eps = 1e-3;
    let cases: Vec<(&str, usize, GradedRanks, Box<dyn Fn(&[f64]) -> f64 + Send + Sync>, Grad, Hess)> = vec![
        (
            "-(x^2+y^2)",
            2,
            GradedRanks::single(2),
            Box::new(|z| -(z[0] * z[0] + z[1] * z[1])),
            Box::new(|z| vec![-2.0 * z[0], -2.0 * z[1]]),
            Box::new(|_| DMatrix::from_row_slice(2, 2, &[-2.0, 0.0, 0.0, -2.0])),
        ),
        (
            "x^3",
            1,
            GradedRanks::new(),
            Box::new(|z| z[0].powi(3)),
            Box::new(|z| vec![3.0 * z[0] * z[0]]),
            Box::new(|z| DMatrix::from_element(1, 1, 6.0 * z[0])),
        ),
        (
            "x^3-3xy^2",
            2,
            GradedRanks::from_pairs([(1, 2)]),
            Box::new(|z| z[0].powi(3) - 3.0 * z[0] * z[1] * z[1]),
            Box::new(|z| vec![3.0 * (z[0] * z[0] - z[1] * z[1]), -6.0 * z[0] * z[1]]),
            Box::new(|z| DMatrix::from_row_slice(2, 2, &[6.0 * z[0], -6.0 * z[1], -6.0 * z[1], -6.0 * z[0]])),
        ),
    ];
    let mut out = Vec::new();
    for (name, dim, expected, f, grad, hess) in cases {
        let res = if dim == 1 { vec![41, 81, 161] } else { vec![21, 31, 41] };
        let rep = local_morse_homology(&FnSampler::new(BoxDomain::cube(dim, 1.0), f), &MorseParams::with_resolutions(res))
            .map_err(e2s)?;
        ensure(rep.ranks == expected, || format!("{name}: {} vs {expected}", rep.ranks))?;
        ensure(rep.per_resolution.iter().all(|(_, r)| *r == expected), || format!("{name} unstable: {:?}", rep.per_resolution))?;
        // generic tilt splits the point into Morse critical points
        let a: Vec<f64> = [0.6, -0.8][..dim].to_vec();
        let a2 = a.clone();
        let tilted = move |z: &[f64]| grad(z).iter().zip(&a2).map(|(g, c)| g + eps * c).collect::<Vec<_>>();
        let counts = morse_counts(dim, &tilted, &hess, 0.5);
        let chi_morse: i64 = counts.iter().map(|(d, c)| if d % 2 == 0 { *c as i64 } else { -(*c as i64) }).sum();
        ensure(chi_morse == rep.ranks.euler_characteristic(), || format!("{name}: Morse counts {counts:?}"))?;
        for (d, r) in rep.ranks.iter() {
            ensure(r <= counts.get(&d).copied().unwrap_or(0), || format!("{name}: Morse inequality at {d}"))?;
        }
        let lacunary = counts.keys().all(|d| !counts.contains_key(&(d + 1)));
        if lacunary {
            let as_ranks = GradedRanks::from_pairs(counts.iter().map(|(d, c)| (*d, *c)));
            ensure(as_ranks == rep.ranks, || format!("{name}: lacunary counts {counts:?}"))?;
        }
        let deg = gradient_degree(dim, &|z| tilted(z).iter().zip(&a).map(|(g, c)| g - eps * c).collect(), 0.3);
        ensure(deg == rep.ranks.euler_characteristic(), || format!("{name}: degree {deg}"))?;
        out.push(format!("{name} -> {}", rep.ranks));
    }
    Ok(out.join("; "))
}

fn criterion_8() -> Outcome {
    let q = build_default("quartic-max").map_err(e2s)?;
    let qr = q.record().map_err(e2s)?;
    ensure(detect_sdm(&q.germ, &qr).map_err(e2s)?.is_sdm, || "quartic maximum not detected".into())?;
    let m = build("rotation", &params(&[("alpha", 0.1)])).map_err(e2s)?;
    ensure(!detect_sdm(&m.germ, &m.record().map_err(e2s)?).map_err(e2s)?.is_sdm, || "nondegenerate maximum flagged".into())?;
    let mn = build_default("quartic-min").map_err(e2s)?;
    ensure(!detect_sdm(&mn.germ, &mn.record().map_err(e2s)?).map_err(e2s)?.is_sdm, || "quartic minimum flagged".into())?;
    for k in 2..=5 {
        let lf: LocalFloer = local_floer(&q.germ, &qr, k).map_err(e2s)?;
        ensure(lf.delta.abs() <= 1e-6 && lf.ranks.rank(1) >= 1, || format!("iterate {k}: delta {} ranks {}", lf.delta, lf.ranks))?;
    }
    Ok("quartic max detected, nondegenerate max and quartic min rejected, closed under k = 2..5".into())
}

fn criterion_9() -> Outcome {
    let shear = GermMap::from_germ(&build_default("shear").map_err(e2s)?.germ).map_err(e2s)?;
    let opts = GfOptions { c1_gate: 1.5, ..GfOptions::default() };
    let region = BoxDomain::cube(2, 0.25);
    let gf = generating_function_with(&shear, 1, &region, 257, opts).map_err(e2s)?;
    let node_err = (0..gf.field.len())
        .map(|i| {
            let z = gf.field.node(i);
            (gf.field.values[i] - 0.5 * z[1] * z[1]).abs()
        })
        .fold(0.0, f64::max);
    let mut interp_err = 0.0f64;
    for i in 0..997 {
        let z = [0.249 * ((i as f64) * 0.7548).sin(), 0.249 * ((i as f64) * 0.5698).cos()];
        let v = gf.field.interpolate(&z).ok_or("interpolation outside box")?;
        interp_err = interp_err.max((v - 0.5 * z[1] * z[1]).abs());
    }
    ensure(node_err.max(interp_err) <= 1e-6, || format!("shear error nodes {node_err:.2e} interp {interp_err:.2e}"))?;

    let mut checked = Vec::new();
    for (name, half, res) in [
        ("zero", 0.5, 21),
        ("shear", 0.25, 21),
        ("quartic-max", 0.1, 21),
        ("quartic-min", 0.1, 21),
        ("monkey-saddle", 0.01, 21),
        ("product-quartic-quartic", 0.1, 7),
    ] {
        let g = build_default(name).map_err(e2s)?;
        let phi = GermMap::from_germ(&g.germ).map_err(e2s)?;
        let o = if name == "shear" { opts } else { GfOptions::default() };
        let region = BoxDomain::cube(2 * g.germ.n(), half);
        let gf = generating_function_with(&phi, 1, &region, res, o).map_err(e2s)?;
        let rep = gf_property_report(&phi, &gf);
        ensure(rep.sets_match, || format!("{name}: critical and fixed sets differ"))?;
        if g.germ.n() == 1 {
            let fine = generating_function_with(&phi, 1, &region, 4 * res - 3, o).map_err(e2s)?;
            ensure(fine.closedness_defect < 1e-8, || format!("{name}: closedness {:.2e}", fine.closedness_defect))?;
        }
        checked.push(name);
    }
    let _ = generating_function;
    Ok(format!("shear error {:.1e}; critical = fixed on {}", node_err.max(interp_err), checked.join(", ")))
}

fn criterion_10() -> Outcome {
    let mut lines = Vec::new();
    for g in all_germs()? {
        let rec = g.record().map_err(e2s)?;
        let mut totals = BTreeMap::new();
        for k in 1..=10 {
            if !admissible(&rec.linearization, k).map_err(e2s)? {
                continue;
            }
            let lf = if g.factors.is_empty() {
                local_floer(&g.germ, &rec, k)
            } else {
                let fr = g.factor_records().map_err(e2s)?;
                let refs: Vec<_> = fr.iter().map(|(a, b)| (a, b)).collect();
                local_floer_split(&refs, k)
            };
            match lf {
                Ok(lf) => {
                    totals.insert(k, lf.ranks.total());
                }
                Err(Error::NotIsolated(_)) if k == 1 => break,
                Err(e) => return Err(format!("{} k {k}: {e}", g.name)),
            }
        }
        if totals.is_empty() {
            lines.push(format!("{}: no route (not isolated)", g.name));
            continue;
        }
        let first = *totals.values().next().expect("nonempty");
        ensure(totals.values().all(|&t| t == first), || format!("{}: totals {totals:?}", g.name))?;
        lines.push(format!("{} {}", g.name, first));
    }
    Ok(lines.join(", "))
}

#[allow(clippy::type_complexity)]
fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("persistence of the quartic maximum", criterion_1),
        ("persistence for rotations", criterion_2),
        ("odd shift at a bad iteration", criterion_3),
        ("isolation under admissible iterations", criterion_4),
        ("discrete L1 constant", criterion_5),
        ("mean index properties on the corpus", criterion_6),
        ("local Morse homology", criterion_7),
        ("degenerate maximum detection", criterion_8),
        ("generating functions", criterion_9),
        ("bounded local Floer rank", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name} ({secs:.1} s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name} ({secs:.1} s): {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
