//! Aggregate run summaries into mean ± sample standard deviation per
//! (task, method).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::run::{read_summary, Timing, SUMMARY_FILE, TIMING_FILE};

pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_MD: &str = "report.md";
/// Wall-clock columns live apart from `report.csv`, which is reproducible
/// byte for byte.
pub const REPORT_TIMING_CSV: &str = "report_timing.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub task: String,
    pub method: String,
    pub runs: usize,
    pub successes: usize,
    pub task_loss_mean: f64,
    pub task_loss_std: Option<f64>,
    pub best_loss_mean: f64,
    pub best_loss_std: Option<f64>,
    pub evaluations_per_update: f64,
    #[serde(skip)]
    pub wall_seconds_mean: Option<f64>,
    #[serde(skip)]
    pub wall_seconds_std: Option<f64>,
}

/// Mean and sample standard deviation; the latter needs two samples.
pub fn mean_std(xs: &[f64]) -> (f64, Option<f64>) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = (xs.len() > 1).then(|| (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (mean, std)
}

fn find_summaries(root: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(root)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            find_summaries(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == SUMMARY_FILE) {
            out.push(p);
        }
    }
    Ok(())
}

/// Rows for every run directory below `root`, sorted by task then method.
pub fn collect(root: &Path) -> Result<Vec<ReportRow>> {
    let mut paths = Vec::new();
    find_summaries(root, &mut paths)?;
    if paths.is_empty() {
        return Err(Error::InvalidInput(format!("no {SUMMARY_FILE} below {}", root.display())));
    }
    let mut groups: BTreeMap<(String, String), Vec<(crate::harness::run::RunSummary, Option<f64>)>> = BTreeMap::new();
    for p in &paths {
        let s = read_summary(p)?;
        let wall = fs::read_to_string(p.with_file_name(TIMING_FILE))
            .ok()
            .and_then(|t| serde_json::from_str::<Timing>(&t).ok())
            .map(|t| t.wall_seconds);
        let key = (
            serde_json::to_value(s.task)?.as_str().unwrap_or_default().to_string(),
            serde_json::to_value(s.method)?.as_str().unwrap_or_default().to_string(),
        );
        groups.entry(key).or_default().push((s, wall));
    }
    Ok(groups
        .into_iter()
        .map(|((task, method), runs)| {
            let losses: Vec<f64> = runs.iter().map(|r| r.0.task_loss).collect();
            let best: Vec<f64> = runs.iter().map(|r| r.0.best_so_far).collect();
            let evals: Vec<f64> = runs.iter().map(|r| r.0.evaluations_per_update).collect();
            let walls: Vec<f64> = runs.iter().filter_map(|r| r.1).collect();
            let (task_loss_mean, task_loss_std) = mean_std(&losses);
            let (best_loss_mean, best_loss_std) = mean_std(&best);
            let (wall_seconds_mean, wall_seconds_std) = if walls.is_empty() {
                (None, None)
            } else {
                let (m, s) = mean_std(&walls);
                (Some(m), s)
            };
            ReportRow {
                task,
                method,
                runs: runs.len(),
                successes: runs.iter().filter(|r| r.0.success).count(),
                task_loss_mean,
                task_loss_std,
                best_loss_mean,
                best_loss_std,
                evaluations_per_update: mean_std(&evals).0,
                wall_seconds_mean,
                wall_seconds_std,
            }
        })
        .collect())
}

fn pm(mean: f64, std: Option<f64>) -> String {
    match std {
        Some(s) => format!("{mean:.3e} ± {s:.3e}"),
        None => format!("{mean:.3e}"),
    }
}

pub fn markdown(rows: &[ReportRow]) -> String {
    let mut s = String::from("| task | method | runs | success | task loss | best loss | evals/update | wall [s] |\n");
    s.push_str("|---|---|---|---|---|---|---|---|\n");
    for r in rows {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {}/{} | {} | {} | {:.2} | {} |",
            r.task,
            r.method,
            r.runs,
            r.successes,
            r.runs,
            pm(r.task_loss_mean, r.task_loss_std),
            pm(r.best_loss_mean, r.best_loss_std),
            r.evaluations_per_update,
            r.wall_seconds_mean.map_or("n/a".to_string(), |w| match r.wall_seconds_std {
                Some(s) => format!("{w:.2} ± {s:.2}"),
                None => format!("{w:.2}"),
            })
        );
    }
    s
}

#[derive(Serialize)]
struct TimingRow<'a> {
    task: &'a str,
    method: &'a str,
    runs: usize,
    wall_seconds_mean: Option<f64>,
    wall_seconds_std: Option<f64>,
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let malformed = |e: csv::Error| Error::Malformed {
        path: path.display().to_string(),
        reason: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(malformed)?;
    for r in rows {
        w.serialize(r).map_err(malformed)?;
    }
    w.flush()?;
    Ok(())
}

/// Write `report.csv`, `report_timing.csv`, and `report.md` into `out` for
/// the runs below `root`.
pub fn report(root: &Path, out: &Path) -> Result<Vec<ReportRow>> {
    let rows = collect(root)?;
    fs::create_dir_all(out)?;
    write_csv(&out.join(REPORT_CSV), &rows)?;
    write_csv(
        &out.join(REPORT_TIMING_CSV),
        rows.iter().map(|r| TimingRow {
            task: &r.task,
            method: &r.method,
            runs: r.runs,
            wall_seconds_mean: r.wall_seconds_mean,
            wall_seconds_std: r.wall_seconds_std,
        }),
    )?;
    fs::write(out.join(REPORT_MD), markdown(&rows))?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::Method;
    use crate::harness::run::{write_json, RunSummary};
    use crate::ledger::LedgerCounts;
    use crate::tasks::TaskKind;

    #[test]
    fn sample_std_hand_value() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s.unwrap() - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[7.0]), (7.0, None));
    }

    #[test]
    fn groups_runs_by_task_and_method() {
        let dir = tempfile::tempdir().unwrap();
        let summary = |method, seed, loss| RunSummary {
            task: TaskKind::PointTarget,
            spec: "point_0".into(),
            method,
            seed,
            steps: 10,
            task_loss: loss,
            best_so_far: loss,
            tolerance: 1e-6,
            success: loss <= 1e-6,
            updates: 5,
            evaluations_per_update: 1.0,
            counts: LedgerCounts::default(),
        };
        for (i, (m, l)) in [(Method::Rhc, 1e-7), (Method::Rhc, 3e-7), (Method::Cem, 1e-3)].into_iter().enumerate() {
            let d = dir.path().join(format!("run{i}"));
            fs::create_dir_all(&d).unwrap();
            write_json(&d.join(SUMMARY_FILE), &summary(m, i as u64, l)).unwrap();
        }
        let out = dir.path().join("out");
        let rows = report(dir.path(), &out).unwrap();
        assert_eq!(rows.len(), 2);
        let rhc = rows.iter().find(|r| r.method == "rhc").unwrap();
        assert_eq!((rhc.runs, rhc.successes), (2, 2));
        assert!((rhc.task_loss_mean - 2e-7).abs() < 1e-20);
        assert!(fs::read_to_string(out.join(REPORT_MD)).unwrap().contains("| point_target | rhc | 2 | 2/2 |"));
        assert!(out.join(REPORT_CSV).exists());
        assert!(!fs::read_to_string(out.join(REPORT_CSV)).unwrap().contains("wall"));
        assert!(out.join(REPORT_TIMING_CSV).exists());
    }
}
