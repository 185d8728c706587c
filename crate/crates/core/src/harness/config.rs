//! Experiment configuration, read from TOML.
//!
//! ```toml
//! schema = 1
//! base_seed = 7
//! replications = 20
//! tasks = ["cycles", "detect"]
//! output_dir = "results"
//!
//! [[grid]]
//! lambda = 0.5
//! mu = 0.5
//! d = 3.0
//! n = 500
//! gamma = 1.0        # or p = 500
//!
//! [cycles]
//! indices = [[3, 0], [2, 1], [2, 2]]
//!
//! [detect]
//! k = 3
//! level = 0.05
//! ```
//!
//! Every task table is optional and falls back to the defaults below.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cycles::{CycleIndex, DEFAULT_BUDGET};
use crate::error::{Error, Result};
use crate::lr_expansion::{GaussianShift, TruncationConfig, DEFAULT_MAX_K};
use crate::model::ModelParams;
use crate::oracle::OracleLimits;
use crate::recovery::DELTA_PRIME_INIT;
use crate::saw::{WalkMethod, DEFAULT_PATH_BUDGET};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Cycles,
    Detect,
    Recover,
    Lr,
    Oracle,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Cycles => "cycles",
            Task::Detect => "detect",
            Task::Recover => "recover",
            Task::Lr => "lr",
            Task::Oracle => "oracle",
        }
    }

    pub fn parse(s: &str) -> Result<Task> {
        match s {
            "cycles" => Ok(Task::Cycles),
            "detect" => Ok(Task::Detect),
            "recover" => Ok(Task::Recover),
            "lr" => Ok(Task::Lr),
            "oracle" => Ok(Task::Oracle),
            _ => Err(Error::Config(format!("unknown task '{s}'"))),
        }
    }
}

/// One grid point; exactly one of `gamma` and `p` is given.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPoint {
    pub lambda: f64,
    pub mu: f64,
    pub d: f64,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
}

impl GridPoint {
    pub fn params(&self) -> Result<ModelParams> {
        match (self.gamma, self.p) {
            (Some(g), None) => ModelParams::with_gamma(self.lambda, self.mu, self.d, self.n, g),
            (None, Some(p)) => ModelParams::with_p(self.lambda, self.mu, self.d, self.n, p),
            _ => Err(Error::Config("grid point needs exactly one of 'gamma' and 'p'".into())),
        }
    }
}

/// Signal of an alternative at the same `(d, n, p)` as the grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AltSignal {
    pub lambda: f64,
    pub mu: f64,
}

impl AltSignal {
    pub fn resolve(alt: Option<AltSignal>, base: &ModelParams) -> Result<ModelParams> {
        match alt {
            None => Ok(*base),
            Some(a) => base.with_signal(a.lambda, a.mu),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CyclesKnobs {
    pub indices: Vec<[usize; 2]>,
    pub budget: u64,
}

impl Default for CyclesKnobs {
    fn default() -> Self {
        CyclesKnobs { indices: vec![[3, 0], [2, 1], [2, 2]], budget: DEFAULT_BUDGET }
    }
}

impl CyclesKnobs {
    pub fn cycle_indices(&self) -> Result<Vec<CycleIndex>> {
        self.indices.iter().map(|&[k, l]| CycleIndex::new(k, l)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectKnobs {
    pub k: usize,
    pub level: f64,
    /// Alternative the test is tuned to; the grid point itself when absent.
    pub alt: Option<AltSignal>,
    pub budget: u64,
}

impl Default for DetectKnobs {
    fn default() -> Self {
        DetectKnobs { k: 3, level: 0.05, alt: None, budget: DEFAULT_BUDGET }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecoverKnobs {
    pub method: WalkMethod,
    /// Walk length; the method default when absent.
    pub k: Option<usize>,
    /// Wedge steps; matched to the channel ratio when absent.
    pub l: Option<usize>,
    pub delta_prime_init: f64,
    pub budget: u64,
}

impl Default for RecoverKnobs {
    fn default() -> Self {
        RecoverKnobs {
            method: WalkMethod::WalkMatrix,
            k: None,
            l: None,
            delta_prime_init: DELTA_PRIME_INIT,
            budget: DEFAULT_PATH_BUDGET,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSource {
    /// Draws from the limiting law under the null.
    Limit,
    /// Measured statistics of the sampled instance.
    Instance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LrKnobs {
    #[serde(rename = "K")]
    pub k_max: usize,
    pub source: LrSource,
    pub skip_unit_wedge: bool,
    pub null_mean_shift: bool,
    /// Parameters of the series; the grid point when absent. For the
    /// `instance` source the sampled instance still follows the grid point.
    pub alt: Option<AltSignal>,
    pub budget: u64,
}

impl Default for LrKnobs {
    fn default() -> Self {
        LrKnobs {
            k_max: DEFAULT_MAX_K,
            source: LrSource::Limit,
            skip_unit_wedge: false,
            null_mean_shift: false,
            alt: None,
            budget: DEFAULT_BUDGET,
        }
    }
}

impl LrKnobs {
    pub fn truncation(&self) -> TruncationConfig {
        TruncationConfig {
            skip_unit_wedge: self.skip_unit_wedge,
            shift: if self.null_mean_shift { GaussianShift::NullMean } else { GaussianShift::AltMean },
            ..TruncationConfig::new(self.k_max)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleKnobs {
    pub alt: Option<AltSignal>,
    pub max_n: usize,
}

impl Default for OracleKnobs {
    fn default() -> Self {
        OracleKnobs { alt: None, max_n: OracleLimits::default().max_n }
    }
}

/// Forces a cell to fail; used to check that failures stay isolated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InjectedFailure {
    pub grid: usize,
    pub rep: usize,
    pub task: Task,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub base_seed: u64,
    pub replications: usize,
    pub tasks: Vec<Task>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub grid: Vec<GridPoint>,
    #[serde(default)]
    pub cycles: CyclesKnobs,
    #[serde(default)]
    pub detect: DetectKnobs,
    #[serde(default)]
    pub recover: RecoverKnobs,
    #[serde(default)]
    pub lr: LrKnobs,
    #[serde(default)]
    pub oracle: OracleKnobs,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inject_failure: Vec<InjectedFailure>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

impl ExperimentConfig {
    /// Config with default knobs.
    pub fn new(base_seed: u64, replications: usize, tasks: Vec<Task>, grid: Vec<GridPoint>) -> Self {
        ExperimentConfig {
            schema: SCHEMA_VERSION,
            base_seed,
            replications,
            tasks,
            output_dir: default_output_dir(),
            grid,
            cycles: CyclesKnobs::default(),
            detect: DetectKnobs::default(),
            recover: RecoverKnobs::default(),
            lr: LrKnobs::default(),
            oracle: OracleKnobs::default(),
            inject_failure: Vec::new(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema {} (this build reads schema {SCHEMA_VERSION})",
                self.schema
            )));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.tasks.is_empty() {
            return Err(Error::Config("no tasks selected".into()));
        }
        if self.tasks.iter().collect::<BTreeSet<_>>().len() != self.tasks.len() {
            return Err(Error::Config("tasks must not repeat".into()));
        }
        if self.grid.is_empty() {
            return Err(Error::Config("grid is empty".into()));
        }
        for (i, g) in self.grid.iter().enumerate() {
            g.params().map_err(|e| Error::Config(format!("grid point {i}: {e}")))?;
        }
        self.cycles.cycle_indices().map_err(|e| Error::Config(format!("cycles: {e}")))?;
        if !(self.detect.level > 0.0 && self.detect.level < 1.0) {
            return Err(Error::Config(format!("detect.level must lie in (0, 1), got {}", self.detect.level)));
        }
        if self.lr.k_max == 0 {
            return Err(Error::Config("lr.K must be positive".into()));
        }
        Ok(())
    }

    /// Tasks in canonical order, which is also the row order of results.
    pub fn sorted_tasks(&self) -> Vec<Task> {
        let set: BTreeSet<Task> = self.tasks.iter().copied().collect();
        set.into_iter().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
schema = 1
base_seed = 7
replications = 3
tasks = ["detect", "cycles"]

[[grid]]
lambda = 0.5
mu = 0.5
d = 3.0
n = 100
gamma = 1.0

[[grid]]
lambda = 0.0
mu = 0.0
d = 3.0
n = 100
p = 50

[detect]
k = 2
alt = { lambda = 0.5, mu = 0.8 }

[lr]
K = 4
source = "instance"
"#;

    #[test]
    fn parses_example() {
        let c = ExperimentConfig::from_toml(EXAMPLE).unwrap();
        assert_eq!(c.grid.len(), 2);
        assert_eq!(c.grid[1].params().unwrap().gamma(), 2.0);
        assert_eq!(c.detect.k, 2);
        assert_eq!(c.detect.level, 0.05);
        assert_eq!(c.lr.k_max, 4);
        assert_eq!(c.lr.source, LrSource::Instance);
        assert_eq!(c.sorted_tasks(), vec![Task::Cycles, Task::Detect]);
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            EXAMPLE.replace("schema = 1", "schema = 2"),
            EXAMPLE.replace("replications = 3", "replications = 0"),
            EXAMPLE.replace("gamma = 1.0", "gamma = 1.0\np = 100"),
            EXAMPLE.replace("d = 3.0\nn = 100\np = 50", "d = -1.0\nn = 100\np = 50"),
            EXAMPLE.replace("[detect]", "[detect]\nbogus = 1"),
            EXAMPLE.replace("tasks = [\"detect\", \"cycles\"]", "tasks = [\"detect\", \"detect\"]"),
        ];
        for b in bad {
            assert!(matches!(ExperimentConfig::from_toml(&b), Err(Error::Config(_))), "{b}");
        }
    }
}
