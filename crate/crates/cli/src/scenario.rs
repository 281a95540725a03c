use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Deserialize;

use localfloer_core::corpus;
use localfloer_core::symplin::{DEFAULT_CLUSTER_TOL, DEFAULT_Q_MAX};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Deserialize, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Spectrum,
    Persistence,
    Sdm,
    Isolation,
    Gaps,
    Morse,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Spectrum => "spectrum",
            Task::Persistence => "persistence",
            Task::Sdm => "sdm",
            Task::Isolation => "isolation",
            Task::Gaps => "gaps",
            Task::Morse => "morse",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GermSpec {
    pub formula: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub newton_tol: f64,
    pub cluster_tol: f64,
    pub q_max: u32,
    /// Ball radii for the periodic-point search, largest first.
    pub isolation_radii: Vec<f64>,
    /// Seeds per axis for the fixed-point search of the gaps task.
    pub grid: usize,
    /// Samples per `k` for the discrete L¹ inequality.
    pub samples: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            newton_tol: 1e-10,
            cluster_tol: DEFAULT_CLUSTER_TOL,
            q_max: DEFAULT_Q_MAX,
            isolation_radii: vec![0.1, 0.03, 0.01],
            grid: 9,
            samples: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: u32,
    pub name: String,
    pub germ: GermSpec,
    pub tasks: Vec<Task>,
    /// Inclusive `[first, last]` iteration range.
    pub k: [usize; 2],
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputSpec,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1).unwrap_or(1);
            CliError::Parse { line, message: e.message().to_string() }
        })?;
        scenario.validate(text)?;
        Ok(scenario)
    }

    fn validate(&self, text: &str) -> Result<(), CliError> {
        let line_of = |key: &str| {
            text.lines()
                .position(|l| l.trim_start().starts_with(key))
                .map(|i| i + 1)
                .unwrap_or(1)
        };
        if self.schema != SCHEMA_VERSION {
            return Err(CliError::Parse {
                line: line_of("schema"),
                message: format!("unsupported schema {}, expected {SCHEMA_VERSION}", self.schema),
            });
        }
        let [lo, hi] = self.k;
        if lo == 0 || lo > hi {
            return Err(CliError::Parse { line: line_of("k"), message: format!("empty or invalid k range [{lo}, {hi}]") });
        }
        if self.tasks.is_empty() {
            return Err(CliError::Parse { line: line_of("tasks"), message: "task list is empty".into() });
        }
        corpus::lookup(&self.germ.formula)?;
        corpus::build(&self.germ.formula, &self.germ.params)
            .map_err(|e| CliError::Parse { line: line_of("params"), message: e.to_string() })?;
        Ok(())
    }

    pub fn ks(&self) -> Vec<usize> {
        (self.k[0]..=self.k[1]).collect()
    }

    /// Tasks in canonical order without repeats.
    pub fn task_set(&self) -> Vec<Task> {
        let mut t = self.tasks.clone();
        t.sort();
        t.dedup();
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"
schema = 1
name = "demo"
tasks = ["persistence", "spectrum", "persistence"]
k = [1, 4]

[germ]
formula = "rotation"
params = { alpha = 0.25 }
"#;

    #[test]
    fn parses_with_defaults() {
        let s = Scenario::parse(GOOD).unwrap();
        assert_eq!(s.seed, 0);
        assert_eq!(s.ks(), vec![1, 2, 3, 4]);
        assert_eq!(s.task_set(), vec![Task::Spectrum, Task::Persistence]);
        assert_eq!(s.tolerances, Tolerances::default());
    }

    #[test]
    fn unknown_key_reports_its_line() {
        let text = GOOD.replace("k = [1, 4]", "k = [1, 4]\nbogus = 3");
        match Scenario::parse(&text) {
            Err(CliError::Parse { line, .. }) => assert_eq!(line, 6),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_ranges_schema_and_formula() {
        assert!(matches!(Scenario::parse(&GOOD.replace("[1, 4]", "[3, 2]")), Err(CliError::Parse { line: 5, .. })));
        assert!(matches!(Scenario::parse(&GOOD.replace("schema = 1", "schema = 2")), Err(CliError::Parse { line: 2, .. })));
        assert!(matches!(
            Scenario::parse(&GOOD.replace("\"rotation\"", "\"spiral\"")),
            Err(CliError::Core(localfloer_core::Error::UnknownFormula(_)))
        ));
        assert!(matches!(Scenario::parse(&GOOD.replace("alpha", "beta")), Err(CliError::Parse { line: 9, .. })));
    }
}
