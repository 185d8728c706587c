//! Seeded, parallel execution of an experiment grid.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, OnceLock};

use rayon::prelude::*;

use super::config::{AltSignal, ExperimentConfig, LrSource, Task};
use crate::cycles::{
    detection_test_with_budget, poisson_cycle_test, theoretical_moments, CycleEngine, CycleIndex, Family,
};
use crate::error::{Error, Result};
use crate::lr_expansion::{empirical_loglr_terms, last_term_magnitude, limiting_loglr_terms_h0, total};
use crate::model::{sample_instance, Instance, ModelParams};
use crate::oracle::{exact_log_likelihood_ratio_with, OracleLimits};
use crate::recovery::{weak_recovery_pipeline_with, FitOptions};
use crate::rng::cell_seed;
use crate::saw::{matched_wedges, WalkConfig};

/// Columns shared by every result file, before the task metrics.
pub const KEY_COLUMNS: [&str; 10] = ["grid", "rep", "seed", "task", "lambda", "mu", "d", "gamma", "n", "p"];

/// One `(grid point, replication, task)` outcome. Metric cells are kept
/// formatted so a table read back from disk is identical to the original.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub grid: usize,
    pub rep: usize,
    pub seed: u64,
    pub task: Task,
    pub params: [String; 6],
    pub metrics: Vec<String>,
    pub error: String,
}

impl ResultRow {
    pub fn is_error(&self) -> bool {
        !self.error.is_empty()
    }

    fn record(&self) -> Vec<String> {
        let mut r = vec![self.grid.to_string(), self.rep.to_string(), self.seed.to_string(), self.task.name().to_string()];
        r.extend(self.params.iter().cloned());
        r.extend(self.metrics.iter().cloned());
        r.push(self.error.clone());
        r
    }
}

/// All rows of one task.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub task: Task,
    pub metrics: Vec<String>,
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = KEY_COLUMNS.iter().map(|s| s.to_string()).collect();
        h.extend(self.metrics.iter().cloned());
        h.push("error".into());
        h
    }

    pub fn sort(&mut self) {
        self.rows.sort_by_key(|r| (r.grid, r.rep));
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.metrics.iter().position(|m| m == name)
    }

    /// Numeric values of a metric over rows without errors. Booleans map to
    /// 0/1; empty cells are skipped.
    pub fn values(&self, name: &str) -> Option<Vec<f64>> {
        let c = self.column(name)?;
        Some(self.rows.iter().filter(|r| !r.is_error()).filter_map(|r| parse_cell(&r.metrics[c])).collect())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.header())?;
        for r in &self.rows {
            w.write_record(r.record())?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let header: Vec<String> = rd.headers()?.iter().map(String::from).collect();
        let nk = KEY_COLUMNS.len();
        if header.len() < nk + 1 || header[..nk] != KEY_COLUMNS || header.last().map(String::as_str) != Some("error") {
            return Err(Error::Config("not a result table: unexpected header".into()));
        }
        let metrics = header[nk..header.len() - 1].to_vec();
        let mut rows = Vec::new();
        let mut task = None;
        for rec in rd.records() {
            let rec = rec?;
            let get = |i: usize| rec.get(i).unwrap_or("").to_string();
            let t = Task::parse(&get(3))?;
            match task {
                None => task = Some(t),
                Some(prev) if prev != t => {
                    return Err(Error::Config(format!(
                        "mixed tasks in one table: '{}' and '{}'",
                        prev.name(),
                        t.name()
                    )))
                }
                _ => {}
            }
            let num = |i: usize| -> Result<u64> {
                get(i).parse().map_err(|_| Error::Config(format!("column '{}' is not an integer", KEY_COLUMNS[i])))
            };
            rows.push(ResultRow {
                grid: num(0)? as usize,
                rep: num(1)? as usize,
                seed: num(2)?,
                task: t,
                params: std::array::from_fn(|i| get(4 + i)),
                metrics: (0..metrics.len()).map(|i| get(nk + i)).collect(),
                error: get(header.len() - 1),
            });
        }
        let task = task.ok_or_else(|| Error::Config("result table has no rows".into()))?;
        Ok(ResultTable { task, metrics, rows })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_csv(&fs::read_to_string(path)?)
    }
}

pub fn parse_cell(s: &str) -> Option<f64> {
    match s {
        "" => None,
        "true" => Some(1.0),
        "false" => Some(0.0),
        _ => s.parse().ok(),
    }
}

fn fmt(x: f64) -> String {
    format!("{x:?}")
}

fn param_cells(p: &ModelParams) -> [String; 6] {
    [fmt(p.lambda()), fmt(p.mu()), fmt(p.d()), fmt(p.gamma()), p.n().to_string(), p.p().to_string()]
}

/// Metric columns of `task` under `config`.
pub fn metric_columns(config: &ExperimentConfig, task: Task) -> Vec<String> {
    let v = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
    match task {
        Task::Cycles => config
            .cycles
            .indices
            .iter()
            .flat_map(|[k, l]| [format!("raw_{k}_{l}"), format!("norm_{k}_{l}")])
            .collect(),
        Task::Detect => v(&["test", "statistic", "l_used", "noncentrality", "threshold", "reject"]),
        Task::Recover => v(&["k", "l", "overlap_raw", "overlap_centered", "delta_prime_used", "iterations", "feasible"]),
        Task::Lr => v(&["log_lr", "last_term"]),
        Task::Oracle => v(&["log_lr", "lr"]),
    }
}

/// Normalized value used for cycle statistics of either family.
pub fn normalized_count(params: &ModelParams, index: CycleIndex, raw: f64) -> f64 {
    let m = theoretical_moments(params, index);
    match m.family {
        Family::Poisson => (raw - m.null_mean) / m.null_variance.sqrt(),
        Family::Gaussian => (raw - m.centering) / m.null_variance.sqrt(),
    }
}

fn run_task<'a>(
    config: &ExperimentConfig,
    task: Task,
    params: &ModelParams,
    seed: u64,
    inst: &dyn Fn() -> &'a Instance,
) -> Result<Vec<String>> {
    match task {
        Task::Cycles => {
            let inst = inst();
            let mut engine = CycleEngine::new(inst);
            let mut out = Vec::new();
            for index in config.cycles.cycle_indices()? {
                let raw = engine.raw(index, config.cycles.budget)?;
                out.push(fmt(raw));
                out.push(fmt(normalized_count(params, index, raw)));
            }
            Ok(out)
        }
        Task::Detect => {
            let kn = &config.detect;
            let alt = AltSignal::resolve(kn.alt, params)?;
            let inst = inst();
            if alt.mu() == 0.0 {
                let r = poisson_cycle_test(inst, &alt, kn.k)?;
                Ok(vec!["poisson".into(), fmt(r.count), "0".into(), String::new(), fmt(r.midpoint), r.reject.to_string()])
            } else {
                let r = detection_test_with_budget(inst, &alt, kn.k, kn.level, kn.budget)?;
                Ok(vec![
                    "gaussian".into(),
                    fmt(r.statistic),
                    r.l_used.to_string(),
                    fmt(r.noncentrality),
                    fmt(r.threshold),
                    r.reject.to_string(),
                ])
            }
        }
        Task::Recover => {
            let kn = &config.recover;
            let mut wc = WalkConfig::default_for(params, kn.method)?;
            if let Some(k) = kn.k {
                wc.k = k;
                wc.l = matched_wedges(params, k)?;
            }
            if let Some(l) = kn.l {
                wc.l = l;
            }
            let wc = WalkConfig::new(wc.k, wc.l, kn.method, kn.budget)?;
            let r = weak_recovery_pipeline_with(inst(), &wc, kn.delta_prime_init, seed, FitOptions::default())?;
            let opt = |x: Option<f64>| x.map(fmt).unwrap_or_default();
            Ok(vec![
                wc.k.to_string(),
                wc.l.to_string(),
                opt(r.overlap_raw),
                opt(r.overlap_centered),
                fmt(r.delta_prime_used),
                r.iterations.to_string(),
                r.feasible.to_string(),
            ])
        }
        Task::Lr => {
            let kn = &config.lr;
            let series = AltSignal::resolve(kn.alt, params)?;
            let trunc = kn.truncation();
            let terms = match kn.source {
                LrSource::Limit => limiting_loglr_terms_h0(&series, &trunc, seed)?,
                LrSource::Instance => empirical_loglr_terms(inst(), &series, &trunc, kn.budget)?,
            };
            Ok(vec![fmt(total(&terms)), fmt(last_term_magnitude(&terms))])
        }
        Task::Oracle => {
            let alt = AltSignal::resolve(config.oracle.alt, params)?;
            let lim = OracleLimits { max_n: config.oracle.max_n, ..OracleLimits::default() };
            let v = exact_log_likelihood_ratio_with(inst(), &alt, lim)?;
            Ok(vec![fmt(v), fmt(v.exp())])
        }
    }
}

/// Thread pool size and output location for a run.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; the global pool when absent.
    pub threads: Option<usize>,
    /// Where result files go; nothing is written when absent.
    pub output_dir: Option<PathBuf>,
}

struct PartialSink {
    files: Vec<(Task, Mutex<File>)>,
}

impl PartialSink {
    fn open(dir: &Path, config: &ExperimentConfig) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let mut files = Vec::new();
        for task in config.sorted_tasks() {
            let path = partial_path(dir, task);
            let mut f = OpenOptions::new().create(true).write(true).truncate(true).open(&path)?;
            let t = ResultTable { task, metrics: metric_columns(config, task), rows: Vec::new() };
            f.write_all(t.to_csv()?.as_bytes())?;
            files.push((task, Mutex::new(f)));
        }
        Ok(PartialSink { files })
    }

    fn append(&self, row: &ResultRow) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.write_record(row.record())?;
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        let (_, f) = self.files.iter().find(|(t, _)| *t == row.task).expect("task has a partial file");
        let mut f = f.lock().unwrap_or_else(|e| e.into_inner());
        f.write_all(&bytes)?;
        f.flush()?;
        Ok(())
    }
}

fn partial_path(dir: &Path, task: Task) -> PathBuf {
    dir.join(format!("{}.csv.partial", task.name()))
}

/// Final path of the result file for `task`.
pub fn result_path(dir: &Path, task: Task) -> PathBuf {
    dir.join(format!("{}.csv", task.name()))
}

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = p.downcast_ref::<String>() {
        s.clone()
    } else {
        "unknown panic".into()
    }
}

fn run_cell(config: &ExperimentConfig, tasks: &[Task], grid: usize, rep: usize) -> Vec<ResultRow> {
    let params = config.grid[grid].params().expect("grid validated");
    let seed = cell_seed(config.base_seed, grid, rep);
    let cache: OnceLock<Instance> = OnceLock::new();
    let inst = || cache.get_or_init(|| sample_instance(&params, seed));
    tasks
        .iter()
        .map(|&task| {
            let width = metric_columns(config, task).len();
            let injected = config.inject_failure.iter().any(|f| f.grid == grid && f.rep == rep && f.task == task);
            let outcome = if injected {
                Err("injected failure".to_string())
            } else {
                match catch_unwind(AssertUnwindSafe(|| run_task(config, task, &params, seed, &inst))) {
                    Ok(Ok(m)) => Ok(m),
                    Ok(Err(e)) => Err(e.to_string()),
                    Err(p) => Err(format!("internal error: {}", panic_message(p))),
                }
            };
            let (metrics, error) = match outcome {
                Ok(m) => (m, String::new()),
                Err(e) => (vec![String::new(); width], e),
            };
            ResultRow { grid, rep, seed, task, params: param_cells(&params), metrics, error }
        })
        .collect()
}

/// Runs every `(grid point, replication, task)` cell.
///
/// Cells run in parallel; each samples its own instance from its own seed,
/// so the sorted tables do not depend on scheduling or thread count. Cell
/// failures become rows with an `error` message. When an output directory is
/// given, rows are appended to `<task>.csv.partial` as they finish and the
/// sorted tables are then moved into place as `<task>.csv`.
pub fn run_experiment(config: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<ResultTable>> {
    config.validate()?;
    match opts.threads {
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t.max(1))
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            pool.install(|| run_in_pool(config, opts))
        }
        None => run_in_pool(config, opts),
    }
}

fn run_in_pool(config: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<ResultTable>> {
    let tasks = config.sorted_tasks();
    let sink = match &opts.output_dir {
        Some(dir) => Some(PartialSink::open(dir, config)?),
        None => None,
    };
    let cells: Vec<(usize, usize)> =
        (0..config.grid.len()).flat_map(|g| (0..config.replications).map(move |r| (g, r))).collect();
    let rows: Vec<ResultRow> = cells
        .par_iter()
        .map(|&(g, r)| -> Result<Vec<ResultRow>> {
            let rows = run_cell(config, &tasks, g, r);
            if let Some(s) = &sink {
                for row in &rows {
                    s.append(row)?;
                }
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let mut tables: Vec<ResultTable> = tasks
        .iter()
        .map(|&task| ResultTable {
            task,
            metrics: metric_columns(config, task),
            rows: rows.iter().filter(|r| r.task == task).cloned().collect(),
        })
        .collect();
    for t in &mut tables {
        t.sort();
    }
    if let Some(dir) = &opts.output_dir {
        for t in &tables {
            write_atomic(&result_path(dir, t.task), &t.to_csv()?)?;
            fs::remove_file(partial_path(dir, t.task))?;
        }
    }
    Ok(tables)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{GridPoint, InjectedFailure};

    fn small(tasks: Vec<Task>, reps: usize) -> ExperimentConfig {
        let g = GridPoint { lambda: 0.4, mu: 0.6, d: 2.0, n: 40, gamma: Some(2.0), p: None };
        let mut c = ExperimentConfig::new(11, reps, tasks, vec![g]);
        c.cycles.indices = vec![[3, 0], [2, 1]];
        c.detect.k = 2;
        c
    }

    #[test]
    fn single_cell_single_row() {
        let t = run_experiment(&small(vec![Task::Cycles], 1), &RunOptions::default()).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].rows.len(), 1);
        assert!(!t[0].rows[0].is_error());
        assert_eq!(t[0].metrics, ["raw_3_0", "norm_3_0", "raw_2_1", "norm_2_1"]);
    }

    #[test]
    fn csv_round_trip() {
        let t = run_experiment(&small(vec![Task::Detect], 3), &RunOptions::default()).unwrap();
        let text = t[0].to_csv().unwrap();
        let back = ResultTable::from_csv(&text).unwrap();
        assert_eq!(back, t[0]);
        assert_eq!(back.values("reject").unwrap().len(), 3);
    }

    #[test]
    fn mixed_tasks_rejected_on_read() {
        let t = run_experiment(&small(vec![Task::Detect], 1), &RunOptions::default()).unwrap();
        let text = t[0].to_csv().unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let dup = lines[1].replace(",detect,", ",cycles,");
        lines.push(dup);
        assert!(matches!(ResultTable::from_csv(&lines.join("\n")), Err(Error::Config(_))));
    }

    #[test]
    fn injected_failure_is_isolated() {
        let clean = small(vec![Task::Cycles, Task::Detect], 3);
        let mut bad = clean.clone();
        bad.inject_failure.push(InjectedFailure { grid: 0, rep: 1, task: Task::Cycles });
        let a = run_experiment(&clean, &RunOptions::default()).unwrap();
        let b = run_experiment(&bad, &RunOptions::default()).unwrap();
        for (ta, tb) in a.iter().zip(&b) {
            for (ra, rb) in ta.rows.iter().zip(&tb.rows) {
                if ta.task == Task::Cycles && ra.rep == 1 {
                    assert_eq!(rb.error, "injected failure");
                    assert!(rb.metrics.iter().all(String::is_empty));
                } else {
                    assert_eq!(ra, rb);
                }
            }
        }
    }

    #[test]
    fn task_errors_become_rows() {
        // oracle refuses n = 40
        let t = run_experiment(&small(vec![Task::Oracle], 2), &RunOptions::default()).unwrap();
        assert!(t[0].rows.iter().all(|r| r.error.contains("40")));
    }

    #[test]
    fn files_written_and_partials_removed() {
        let dir = tempfile::tempdir().unwrap();
        let c = small(vec![Task::Cycles, Task::Lr], 2);
        let opts = RunOptions { threads: Some(2), output_dir: Some(dir.path().to_path_buf()) };
        let t = run_experiment(&c, &opts).unwrap();
        for table in &t {
            let text = fs::read_to_string(result_path(dir.path(), table.task)).unwrap();
            assert_eq!(text, table.to_csv().unwrap());
            assert!(!partial_path(dir.path(), table.task).exists());
        }
    }
}
