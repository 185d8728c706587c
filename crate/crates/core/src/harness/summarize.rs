//! Per-grid-point summaries of a single-task result table.

use std::collections::BTreeMap;

use super::config::Task;
use super::run::{parse_cell, ResultTable};
use crate::error::Result;
use crate::stats::{dispersion, ks_normal, mean, pearson, quantile, std_err};

/// One summary value, in long format.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRecord {
    pub grid: usize,
    pub params: [String; 6],
    pub metric: String,
    pub stat: String,
    pub value: f64,
}

pub const SUMMARY_COLUMNS: [&str; 10] = ["grid", "lambda", "mu", "d", "gamma", "n", "p", "metric", "stat", "value"];

/// For every grid point: row and error counts, then mean and standard
/// error of each numeric metric, plus task-specific checks:
///
/// - cycles: KS distance to `N(0, 1)` of each `norm_k_l` with `l ≥ 1`,
///   index of dispersion of each `raw_k_0`, and pairwise correlations of
///   the `norm_*` columns;
/// - detect: `reject` mean is the rejection rate;
/// - recover: 10/50/90% quantiles of `overlap_raw`;
/// - lr, oracle: mean of `exp(log_lr)`.
pub fn summarize(table: &ResultTable) -> Result<Vec<SummaryRecord>> {
    let mut by_grid: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, r) in table.rows.iter().enumerate() {
        by_grid.entry(r.grid).or_default().push(i);
    }
    let mut out = Vec::new();
    for (&grid, idx) in &by_grid {
        let rows: Vec<_> = idx.iter().map(|&i| &table.rows[i]).collect();
        let params = rows[0].params.clone();
        let mut push = |metric: &str, stat: &str, value: f64| {
            out.push(SummaryRecord { grid, params: params.clone(), metric: metric.into(), stat: stat.into(), value });
        };
        let ok: Vec<_> = rows.iter().filter(|r| !r.is_error()).collect();
        push("rows", "count", rows.len() as f64);
        push("rows", "errors", (rows.len() - ok.len()) as f64);
        let column = |c: usize| -> Vec<f64> { ok.iter().filter_map(|r| parse_cell(&r.metrics[c])).collect() };
        let numeric: Vec<(usize, &String, Vec<f64>)> = table
            .metrics
            .iter()
            .enumerate()
            .map(|(c, m)| (c, m, column(c)))
            .filter(|(_, _, v)| !v.is_empty())
            .collect();
        for (_, m, v) in &numeric {
            push(m, "mean", mean(v));
            push(m, "se", if v.len() > 1 { std_err(v) } else { f64::NAN });
        }
        match table.task {
            Task::Cycles => {
                for (_, m, v) in &numeric {
                    if let Some(rest) = m.strip_prefix("norm_") {
                        if !rest.ends_with("_0") && v.len() > 1 {
                            push(m, "ks_normal", ks_normal(v, 0.0, 1.0));
                        }
                    } else if m.starts_with("raw_") && m.ends_with("_0") && v.len() > 1 {
                        push(m, "dispersion", dispersion(v));
                    }
                }
                // correlations need aligned rows
                let norms: Vec<usize> = table
                    .metrics
                    .iter()
                    .enumerate()
                    .filter(|(_, m)| m.starts_with("norm_"))
                    .map(|(c, _)| c)
                    .collect();
                let aligned: Vec<Vec<f64>> = ok
                    .iter()
                    .filter_map(|r| norms.iter().map(|&c| parse_cell(&r.metrics[c])).collect::<Option<Vec<f64>>>())
                    .collect();
                if aligned.len() > 2 {
                    for a in 0..norms.len() {
                        for b in a + 1..norms.len() {
                            let x: Vec<f64> = aligned.iter().map(|v| v[a]).collect();
                            let y: Vec<f64> = aligned.iter().map(|v| v[b]).collect();
                            let name = format!("{}~{}", table.metrics[norms[a]], table.metrics[norms[b]]);
                            push(&name, "corr", pearson(&x, &y));
                        }
                    }
                }
            }
            Task::Detect => {
                if let Some((_, _, v)) = numeric.iter().find(|(_, m, _)| *m == "reject") {
                    push("reject", "rate", mean(v));
                }
            }
            Task::Recover => {
                if let Some((_, _, v)) = numeric.iter().find(|(_, m, _)| *m == "overlap_raw") {
                    for q in [0.1, 0.5, 0.9] {
                        push("overlap_raw", &format!("q{}", (q * 100.0) as u32), quantile(v, q));
                    }
                }
            }
            Task::Lr | Task::Oracle => {
                if let Some((_, _, v)) = numeric.iter().find(|(_, m, _)| *m == "log_lr") {
                    let e: Vec<f64> = v.iter().map(|x| x.exp()).collect();
                    push("log_lr", "mean_exp", mean(&e));
                }
            }
        }
    }
    Ok(out)
}

pub fn summary_to_csv(records: &[SummaryRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUMMARY_COLUMNS)?;
    for r in records {
        let mut rec = vec![r.grid.to_string()];
        rec.extend(r.params.iter().cloned());
        rec.push(r.metric.clone());
        rec.push(r.stat.clone());
        rec.push(format!("{:?}", r.value));
        w.write_record(rec)?;
    }
    let bytes = w.into_inner().map_err(|e| crate::Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Looks up one summary value.
pub fn lookup(records: &[SummaryRecord], grid: usize, metric: &str, stat: &str) -> Option<f64> {
    records.iter().find(|r| r.grid == grid && r.metric == metric && r.stat == stat).map(|r| r.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::run::ResultRow;

    fn table(task: Task, metrics: &[&str], rows: &[&[&str]]) -> ResultTable {
        let p: [String; 6] = std::array::from_fn(|i| i.to_string());
        ResultTable {
            task,
            metrics: metrics.iter().map(|s| s.to_string()).collect(),
            rows: rows
                .iter()
                .enumerate()
                .map(|(i, r)| ResultRow {
                    grid: 0,
                    rep: i,
                    seed: i as u64,
                    task,
                    params: p.clone(),
                    metrics: r.iter().map(|s| s.to_string()).collect(),
                    error: String::new(),
                })
                .collect(),
        }
    }

    #[test]
    fn constant_column_has_zero_se() {
        let t = table(Task::Detect, &["statistic", "reject"], &[&["1.5", "true"], &["1.5", "false"], &["1.5", "true"]]);
        let s = summarize(&t).unwrap();
        assert_eq!(lookup(&s, 0, "statistic", "se"), Some(0.0));
        assert!((lookup(&s, 0, "reject", "rate").unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(lookup(&s, 0, "rows", "count"), Some(3.0));
    }

    #[test]
    fn cycle_summaries() {
        let t = table(
            Task::Cycles,
            &["raw_3_0", "norm_3_0", "raw_2_1", "norm_2_1"],
            &[&["1", "-1", "0.5", "0.5"], &["3", "1", "-0.5", "-0.5"], &["2", "0", "0.0", "0.0"]],
        );
        let s = summarize(&t).unwrap();
        assert_eq!(lookup(&s, 0, "raw_3_0", "dispersion"), Some(0.5));
        assert!(lookup(&s, 0, "norm_2_1", "ks_normal").is_some());
        assert!(lookup(&s, 0, "norm_3_0", "ks_normal").is_none());
        assert!((lookup(&s, 0, "norm_3_0~norm_2_1", "corr").unwrap() + 1.0).abs() < 1e-12);
    }
}
