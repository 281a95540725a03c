use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::CliError;
use crate::runner::ReportFile;

const KNOWN: [&str; 2] = ["persistence.json", "gaps.json"];

/// Expands directories into the report files they contain.
fn collect(paths: &[PathBuf]) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            out.extend(KNOWN.iter().map(|f| p.join(f)).filter(|f| f.is_file()));
        } else {
            out.push(p.clone());
        }
    }
    out
}

/// Writes plot data for every report and returns the written paths.
pub fn emit_plots(paths: &[PathBuf], out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let reports = collect(paths);
    if reports.is_empty() {
        return Err(CliError::MissingReport("no persistence or gap report given".into()));
    }
    std::fs::create_dir_all(out).map_err(CliError::io(format!("creating {}", out.display())))?;
    let mut written = Vec::new();
    for path in reports {
        let text = std::fs::read_to_string(&path).map_err(|_| CliError::MissingReport(path.display().to_string()))?;
        let report: ReportFile = serde_json::from_str(&text).map_err(|_| CliError::UnknownReport(path.clone()))?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
        for (name, body) in render(&report) {
            let target = out.join(format!("{stem}_{name}.dat"));
            std::fs::write(&target, body).map_err(CliError::io(format!("writing {}", target.display())))?;
            written.push(target);
        }
    }
    Ok(written)
}

/// Whitespace-separated columns with a `#` header line.
fn render(report: &ReportFile) -> Vec<(&'static str, String)> {
    match report {
        ReportFile::Persistence(rep) => {
            let mut shift = String::from("# k s_k\n");
            let mut limit = String::from("# k s_k_over_k mean_index\n");
            for row in &rep.rows {
                if let Some(s) = row.s_k {
                    let _ = writeln!(shift, "{} {}", row.k, s);
                    let _ = writeln!(limit, "{} {} {}", row.k, s as f64 / row.k as f64, rep.delta);
                }
            }
            vec![("shift", shift), ("limit", limit)]
        }
        ReportFile::Gaps(table) => {
            let mut pairs: Vec<(usize, usize)> = table.rows.iter().map(|r| (r.orbit_a, r.orbit_b)).collect();
            pairs.sort_unstable();
            pairs.dedup();
            let mut by_k: BTreeMap<usize, BTreeMap<(usize, usize), f64>> = BTreeMap::new();
            for r in &table.rows {
                by_k.entry(r.k).or_default().insert((r.orbit_a, r.orbit_b), r.gamma);
            }
            let mut body = String::from("# k");
            for (a, b) in &pairs {
                let _ = write!(body, " gamma_{a}_{b}");
            }
            body.push('\n');
            for (k, row) in &by_k {
                let _ = write!(body, "{k}");
                for p in &pairs {
                    match row.get(p) {
                        Some(g) => {
                            let _ = write!(body, " {g}");
                        }
                        None => body.push_str(" nan"),
                    }
                }
                body.push('\n');
            }
            vec![("gamma", body)]
        }
    }
}
