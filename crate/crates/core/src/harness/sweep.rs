//! λ–μ grids around the threshold `λ² + μ²/γ = 1`.

use super::config::{DetectKnobs, ExperimentConfig, GridPoint, RecoverKnobs, Task};
use super::run::{run_experiment, RunOptions};
use crate::error::{Error, Result};
use crate::stats::{mean, std_err};

/// Quantities held fixed across the sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fixed {
    pub d: f64,
    pub gamma: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub lambdas: Vec<f64>,
    pub mus: Vec<f64>,
    pub fixed: Fixed,
    pub replications: usize,
    /// `Detect` (power) or `Recover` (mean overlap).
    pub task: Task,
    pub base_seed: u64,
    pub detect: DetectKnobs,
    pub recover: RecoverKnobs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    pub mu: f64,
    pub snr: f64,
    pub above_threshold: bool,
    pub metric: &'static str,
    pub mean: f64,
    pub se: f64,
    pub errors: usize,
}

pub const SWEEP_COLUMNS: [&str; 8] = ["lambda", "mu", "snr", "above_threshold", "metric", "mean", "se", "errors"];

impl SweepSpec {
    /// Grid points in row-major order, λ outer.
    pub fn config(&self) -> Result<ExperimentConfig> {
        if !matches!(self.task, Task::Detect | Task::Recover) {
            return Err(Error::Config(format!("sweep supports detect and recover, not {}", self.task.name())));
        }
        let grid = self
            .lambdas
            .iter()
            .flat_map(|&lambda| {
                self.mus.iter().map(move |&mu| GridPoint {
                    lambda,
                    mu,
                    d: self.fixed.d,
                    n: self.fixed.n,
                    gamma: Some(self.fixed.gamma),
                    p: None,
                })
            })
            .collect();
        let mut c = ExperimentConfig::new(self.base_seed, self.replications, vec![self.task], grid);
        c.detect = self.detect;
        c.recover = self.recover;
        c.validate()?;
        Ok(c)
    }
}

/// Runs the sweep. Detection power is tested against each grid point's own
/// alternative unless `detect.alt` is set.
pub fn sweep_phase_diagram(spec: &SweepSpec, threads: Option<usize>) -> Result<Vec<SweepRow>> {
    let config = spec.config()?;
    let tables = run_experiment(&config, &RunOptions { threads, output_dir: None })?;
    let table = &tables[0];
    let metric = if spec.task == Task::Detect { "reject" } else { "overlap_raw" };
    let col = table.column(metric).expect("metric column present");
    let mut out = Vec::new();
    for (g, point) in config.grid.iter().enumerate() {
        let rows: Vec<_> = table.rows.iter().filter(|r| r.grid == g).collect();
        let vals: Vec<f64> = rows
            .iter()
            .filter(|r| !r.is_error())
            .filter_map(|r| super::run::parse_cell(&r.metrics[col]))
            .collect();
        let params = point.params()?;
        let snr = params.snr();
        out.push(SweepRow {
            lambda: point.lambda,
            mu: point.mu,
            snr,
            above_threshold: snr > 1.0,
            metric: if spec.task == Task::Detect { "power" } else { "overlap_raw" },
            mean: if vals.is_empty() { f64::NAN } else { mean(&vals) },
            se: if vals.len() > 1 { std_err(&vals) } else { f64::NAN },
            errors: rows.len() - vals.len(),
        });
    }
    Ok(out)
}

pub fn sweep_to_csv(rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_COLUMNS)?;
    for r in rows {
        w.write_record([
            format!("{:?}", r.lambda),
            format!("{:?}", r.mu),
            format!("{:?}", r.snr),
            r.above_threshold.to_string(),
            r.metric.to_string(),
            format!("{:?}", r.mean),
            format!("{:?}", r.se),
            r.errors.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_order_and_indicator() {
        let spec = SweepSpec {
            lambdas: vec![0.0, 1.2],
            mus: vec![0.5, 1.5],
            fixed: Fixed { d: 3.0, gamma: 1.0, n: 60 },
            replications: 4,
            task: Task::Detect,
            base_seed: 3,
            detect: DetectKnobs { k: 2, ..DetectKnobs::default() },
            recover: RecoverKnobs::default(),
        };
        let rows = sweep_phase_diagram(&spec, Some(1)).unwrap();
        let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.lambda, r.mu)).collect();
        assert_eq!(pairs, [(0.0, 0.5), (0.0, 1.5), (1.2, 0.5), (1.2, 1.5)]);
        let above: Vec<bool> = rows.iter().map(|r| r.above_threshold).collect();
        assert_eq!(above, [false, true, true, true]);
        assert!(rows.iter().all(|r| r.mean >= 0.0 && r.mean <= 1.0 && r.errors == 0));
        let csv = sweep_to_csv(&rows).unwrap();
        assert!(csv.starts_with("lambda,mu,snr,above_threshold,metric,mean,se"));
    }

    #[test]
    fn other_tasks_rejected() {
        let spec = SweepSpec {
            lambdas: vec![0.1],
            mus: vec![0.1],
            fixed: Fixed { d: 3.0, gamma: 1.0, n: 60 },
            replications: 1,
            task: Task::Lr,
            base_seed: 0,
            detect: DetectKnobs::default(),
            recover: RecoverKnobs::default(),
        };
        assert!(matches!(sweep_phase_diagram(&spec, None), Err(Error::Config(_))));
    }
}
