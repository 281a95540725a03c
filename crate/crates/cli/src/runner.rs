use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use localfloer_core::corpus::{self, CorpusGerm};
use localfloer_core::cubhom::{local_morse_homology, FnSampler, MorseParams};
use localfloer_core::hamflow::{find_fixed_points, gap_table, GapTable};
use localfloer_core::isolation::{
    c_constant, periodic_point_search_with, sample_inequality, write_c_table, IsolationConclusion, SearchOptions,
};
use localfloer_core::locinv::{
    detect_sdm, local_floer, local_floer_split, verify_persistence, verify_persistence_split,
};
use localfloer_core::symplin::{admissible, admissible_set, admissible_with, good_with, spectrum};
use localfloer_core::{BoxDomain, FixedPointRecord, GermMap, PersistenceReport};

use crate::error::CliError;
use crate::scenario::{Scenario, Task};

/// One pass/fail gate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub task: &'static str,
    pub name: String,
    /// Identifier of the property the gate tests.
    pub property: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskError {
    pub task: &'static str,
    pub error: String,
}

/// Machine-readable summary written as `summary.json`.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub schema: u32,
    pub scenario: String,
    pub formula: String,
    pub params: BTreeMap<String, f64>,
    pub seed: u64,
    pub ks: Vec<usize>,
    pub tasks: Vec<Task>,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub failed: Vec<Check>,
    pub errors: Vec<TaskError>,
}

/// Report files that `plots` understands.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", content = "report", rename_all = "snake_case")]
pub enum ReportFile {
    Persistence(PersistenceReport),
    Gaps(GapTable),
}

struct Artifact {
    file: String,
    bytes: Vec<u8>,
}

#[derive(Default)]
struct TaskOutput {
    checks: Vec<Check>,
    artifacts: Vec<Artifact>,
}

impl TaskOutput {
    fn check(&mut self, task: Task, name: impl Into<String>, property: &'static str, passed: bool, detail: String) {
        self.checks.push(Check { task: task.name(), name: name.into(), property, passed, detail });
    }

    fn json(&mut self, file: &str, value: &impl Serialize) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.artifacts.push(Artifact { file: file.into(), bytes });
        Ok(())
    }

    fn raw(&mut self, file: &str, bytes: Vec<u8>) {
        self.artifacts.push(Artifact { file: file.into(), bytes });
    }
}

struct Context<'a> {
    scenario: &'a Scenario,
    germ: CorpusGerm,
    record: FixedPointRecord,
}

impl Context<'_> {
    fn n(&self) -> usize {
        self.germ.germ.n()
    }

    fn admissible_ks(&self) -> Result<(Vec<usize>, Vec<usize>), CliError> {
        let mut yes = Vec::new();
        let mut no = Vec::new();
        for k in self.scenario.ks() {
            if admissible(&self.record.linearization, k)? {
                yes.push(k);
            } else {
                no.push(k);
            }
        }
        Ok((yes, no))
    }
}

/// Runs every task, writes the artifacts and `summary.json` into `out`.
pub fn run(scenario: &Scenario, out: &Path, jobs: Option<usize>) -> Result<Summary, CliError> {
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(j) = jobs {
            b = b.num_threads(j.max(1));
        }
        b.build()?
    };
    let tasks = scenario.task_set();
    let results: Vec<(Task, Result<TaskOutput, CliError>)> = pool.install(|| {
        let germ = corpus::build(&scenario.germ.formula, &scenario.germ.params)?;
        let record = germ.record()?;
        let ctx = Context { scenario, germ, record };
        Ok::<_, CliError>(tasks.par_iter().map(|&t| (t, run_task(&ctx, t))).collect())
    })?;

    std::fs::create_dir_all(out).map_err(CliError::io(format!("creating {}", out.display())))?;
    let mut checks = Vec::new();
    let mut errors = Vec::new();
    for (task, result) in results {
        match result {
            Ok(output) => {
                for a in output.artifacts {
                    let path = out.join(&a.file);
                    std::fs::write(&path, &a.bytes).map_err(CliError::io(format!("writing {}", path.display())))?;
                }
                checks.extend(output.checks);
            }
            Err(e) => errors.push(TaskError { task: task.name(), error: e.to_string() }),
        }
    }
    let failed: Vec<Check> = checks.iter().filter(|c| !c.passed).cloned().collect();
    let summary = Summary {
        schema: crate::scenario::SCHEMA_VERSION,
        scenario: scenario.name.clone(),
        formula: scenario.germ.formula.clone(),
        params: scenario.germ.params.clone(),
        seed: scenario.seed,
        ks: scenario.ks(),
        tasks,
        passed: failed.is_empty() && errors.is_empty(),
        checks,
        failed,
        errors,
    };
    let path = out.join("summary.json");
    let mut bytes = serde_json::to_vec_pretty(&summary)?;
    bytes.push(b'\n');
    std::fs::write(&path, bytes).map_err(CliError::io(format!("writing {}", path.display())))?;
    Ok(summary)
}

fn run_task(ctx: &Context, task: Task) -> Result<TaskOutput, CliError> {
    match task {
        Task::Spectrum => spectrum_task(ctx),
        Task::Persistence => persistence_task(ctx),
        Task::Sdm => sdm_task(ctx),
        Task::Isolation => isolation_task(ctx),
        Task::Gaps => gaps_task(ctx),
        Task::Morse => morse_task(ctx),
    }
}

fn spectrum_task(ctx: &Context) -> Result<TaskOutput, CliError> {
    let tol = &ctx.scenario.tolerances;
    let rec = &ctx.record;
    let data = spectrum(&rec.linearization, tol.cluster_tol, tol.q_max)?;
    let horizon = *ctx.scenario.ks().last().expect("nonempty range");
    let set = admissible_set(&rec.linearization, tol.q_max, horizon);
    let iterations: Vec<_> = ctx
        .scenario
        .ks()
        .into_iter()
        .map(|k| {
            let adm = admissible_with(&data, k);
            let good = if adm { Some(good_with(&data, k)?) } else { None };
            Ok(json!({ "k": k, "admissible": adm, "good": good }))
        })
        .collect::<Result<_, CliError>>()?;

    let mut out = TaskOutput::default();
    let dim = 2 * ctx.n();
    out.check(
        Task::Spectrum,
        "eigenvalue count",
        "spectrum-complete",
        data.total_multiplicity() == dim,
        format!("{} of {dim}", data.total_multiplicity()),
    );
    let paired = data.clusters.iter().all(|c| {
        let inv = num_inverse(c.re, c.im);
        data.clusters
            .iter()
            .any(|d| d.multiplicity == c.multiplicity && (d.re - inv.0).hypot(d.im - inv.1) <= 1e-6)
    });
    out.check(Task::Spectrum, "reciprocal pairing", "spectrum-symplectic-symmetry", paired, String::new());
    out.check(
        Task::Spectrum,
        "admissible progression",
        "admissible-set-infinite",
        set.is_ok(),
        match &set {
            Ok(s) => format!("start {} step {}", s.witness_progression.0, s.witness_progression.1),
            Err(e) => e.to_string(),
        },
    );
    out.json(
        "spectrum.json",
        &json!({
            "linearization": rec.linearization.to_rows(),
            "clusters": data.clusters,
            "forbidden_divisors": data.forbidden_orders(),
            "witness_progression": set.as_ref().ok().map(|s| s.witness_progression),
            "degeneracy": rec.degeneracy,
            "mean_index": rec.delta,
            "conley_zehnder": rec.cz,
            "iterations": iterations,
        }),
    )?;
    Ok(out)
}

fn num_inverse(re: f64, im: f64) -> (f64, f64) {
    let r2 = re * re + im * im;
    (re / r2, -im / r2)
}

fn persistence_task(ctx: &Context) -> Result<TaskOutput, CliError> {
    let (ks, skipped) = ctx.admissible_ks()?;
    let report = if ctx.germ.factors.is_empty() {
        verify_persistence(&ctx.germ.germ, &ctx.record, &ks)?
    } else {
        let factors = ctx.germ.factor_records()?;
        let refs: Vec<_> = factors.iter().map(|(g, r)| (g, r)).collect();
        verify_persistence_split(&refs, &ctx.record, &ks)?
    };
    let mut out = TaskOutput::default();
    let t = Task::Persistence;
    let rows = &report.rows;
    let list = |pred: &dyn Fn(&localfloer_core::locinv::PersistenceRow) -> bool| {
        rows.iter().filter(|r| !pred(r)).map(|r| r.k.to_string()).collect::<Vec<_>>().join(",")
    };
    let bad = list(&|r| r.s_k.is_some());
    out.check(t, "common shift", "persistence-shift", bad.is_empty(), failing("k", &bad));
    let bad = list(&|r| !r.good || r.s_k_even == Some(true));
    out.check(t, "even shift at good iterations", "persistence-even-shift", bad.is_empty(), failing("k", &bad));
    let bad = list(&|r| r.window_ok == Some(true));
    out.check(t, "support window", "persistence-support-window", bad.is_empty(), failing("k", &bad));
    if report.zero_shift_expected {
        let bad = list(&|r| r.s_k == Some(0));
        out.check(t, "zero shift", "persistence-zero-shift", bad.is_empty(), failing("k", &bad));
    }
    if !skipped.is_empty() {
        let s: Vec<String> = skipped.iter().map(|k| k.to_string()).collect();
        out.check(t, "skipped non-admissible iterations", "admissible-iteration", true, format!("k = {}", s.join(",")));
    }
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    out.raw("persistence.csv", csv);
    out.json("persistence.json", &ReportFile::Persistence(report))?;
    Ok(out)
}

fn failing(label: &str, list: &str) -> String {
    if list.is_empty() {
        String::new()
    } else {
        format!("fails at {label} = {list}")
    }
}

fn sdm_task(ctx: &Context) -> Result<TaskOutput, CliError> {
    let report = detect_sdm(&ctx.germ.germ, &ctx.record)?;
    let mut out = TaskOutput::default();
    if report.is_sdm {
        if let Some(ok) = report.evidence.iterate_check {
            out.check(
                Task::Sdm,
                "maximum persists under iteration",
                "sdm-closed-under-iteration",
                ok,
                format!("HF_n rank {}", report.evidence.hf_n_rank),
            );
        }
    }
    out.json("sdm.json", &report)?;
    Ok(out)
}

fn isolation_task(ctx: &Context) -> Result<TaskOutput, CliError> {
    let tol = &ctx.scenario.tolerances;
    let dim = 2 * ctx.n();
    let ks = ctx.scenario.ks();
    let ks2: Vec<usize> = ks.iter().copied().filter(|&k| k >= 2).collect();
    let mut out = TaskOutput::default();
    let t = Task::Isolation;

    let mut inequality = Vec::new();
    for &k in &ks2 {
        let c = sample_inequality(k, dim, tol.samples, ctx.scenario.seed)?;
        out.check(
            t,
            format!("L1 inequality k = {k}"),
            "discrete-l1-inequality",
            c.violations == 0,
            format!("max ratio {:.6} of c = {:.6}", c.max_ratio, c.c),
        );
        inequality.push(c);
    }
    let constants = ks2.iter().map(|&k| c_constant(k, dim)).collect::<Result<Vec<_>, _>>()?;

    let phi = GermMap::from_germ(&ctx.germ.germ)?;
    let opts = SearchOptions { grid: if ctx.n() == 1 { 17 } else { 5 }, newton_tol: tol.newton_tol };
    let searches = ks
        .par_iter()
        .map(|&k| periodic_point_search_with(&phi, k, &tol.isolation_radii, opts))
        .collect::<Result<Vec<_>, _>>()?;
    for rep in &searches {
        if rep.admissible {
            out.check(
                t,
                format!("isolation k = {}", rep.k),
                "isolation-admissible-iterations",
                rep.conclusion == IsolationConclusion::IsolationHolds,
                format!("{} non-fixed periodic points", rep.non_fixed_witnesses()),
            );
        }
    }
    if !ks2.is_empty() {
        let mut csv = Vec::new();
        write_c_table(&ks2, &mut csv)?;
        out.raw("c_table.csv", csv);
    }
    out.json("isolation.json", &json!({ "constants": constants, "inequality": inequality, "searches": searches }))?;
    Ok(out)
}

fn gaps_task(ctx: &Context) -> Result<TaskOutput, CliError> {
    let tol = &ctx.scenario.tolerances;
    let germ = &ctx.germ.germ;
    let search = find_fixed_points(germ, &germ.domain, tol.grid, tol.newton_tol)?;
    let records = &search.records;
    let mut ks = Vec::new();
    for k in ctx.scenario.ks() {
        let mut ok = true;
        for r in records {
            ok &= admissible(&r.linearization, k)?;
        }
        if ok {
            ks.push(k);
        }
    }
    let table = gap_table(records, &ks)?;
    let mut out = TaskOutput::default();
    let mut by_pair: BTreeMap<(usize, usize), Vec<(usize, f64)>> = BTreeMap::new();
    for row in &table.rows {
        by_pair.entry((row.orbit_a, row.orbit_b)).or_default().push((row.k, row.gamma));
    }
    for ((a, b), series) in &by_pair {
        let (k0, g0) = series[0];
        let linear = series
            .iter()
            .all(|&(k, g)| (g * k0 as f64 - g0 * k as f64).abs() <= 1e-9 * (1.0 + g.abs()) * k as f64);
        out.check(
            Task::Gaps,
            format!("linear growth {a}-{b}"),
            "gap-linear-growth",
            linear,
            format!("gamma/k = {:.6}", g0 / k0 as f64),
        );
    }
    let points: Vec<_> = records
        .iter()
        .map(|r| json!({ "z": r.z, "action": r.action, "mean_index": r.delta, "degeneracy": r.degeneracy }))
        .collect();
    let mut csv = csv_writer();
    csv.write_record(["orbit_a", "orbit_b", "k", "action_gap", "index_gap", "gamma"])?;
    for r in &table.rows {
        csv.write_record([
            r.orbit_a.to_string(),
            r.orbit_b.to_string(),
            r.k.to_string(),
            r.action_gap.to_string(),
            r.index_gap.to_string(),
            r.gamma.to_string(),
        ])
        ?;
    }
    out.raw("gaps.csv", csv.into_inner().map_err(|e| CliError::Csv(e.into_error().into()))?);
    out.json("fixed_points.json", &json!({ "points": points, "diagnostics": search.diagnostics }))?;
    out.json("gaps.json", &ReportFile::Gaps(table))?;
    Ok(out)
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::Writer::from_writer(Vec::new())
}

fn morse_task(ctx: &Context) -> Result<TaskOutput, CliError> {
    let germ = ctx.germ.germ.clone();
    let n = ctx.n();
    let half = germ.domain.min_half_width().min(0.5);
    let h = germ.clone();
    let sampler = FnSampler::new(BoxDomain::cube(2 * n, half), move |z| h.value(0.0, z));
    let params = if n == 1 { MorseParams::default() } else { MorseParams::with_resolutions(vec![7, 9]) };
    let report = local_morse_homology(&sampler, &params)?;
    let mut out = TaskOutput::default();

    let hessian_norm = germ.hessian(0.0, &ctx.germ.origin).symmetric_eigenvalues().amax();
    if germ.is_autonomous() && hessian_norm < 2.0 * std::f64::consts::PI {
        let lf = if ctx.germ.factors.is_empty() {
            local_floer(&germ, &ctx.record, 1)?
        } else {
            let factors = ctx.germ.factor_records()?;
            let refs: Vec<_> = factors.iter().map(|(g, r)| (g, r)).collect();
            local_floer_split(&refs, 1)?
        };
        let expected = report.ranks.shifted(-(n as i32));
        out.check(
            Task::Morse,
            "Floer equals shifted Morse",
            "floer-morse-small-autonomous",
            lf.ranks == expected,
            format!("HF {} vs HM shifted {}", lf.ranks, expected),
        );
    }
    out.json("morse.json", &report)?;
    Ok(out)
}
