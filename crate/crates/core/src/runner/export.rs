//! CSV exports of finished experiments.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dehb::TrajectoryPoint;
use crate::error::{Error, Result};
use crate::landscape::{write_best_response_csv, write_grid_csv, Along};
use crate::metrics::median;

use super::campaign::load_run;
use super::experiment::Experiment;
use super::protocol::IncumbentReport;
use super::sweep::load_sweep;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExportKind {
    IncumbentCurve,
    Landscape,
    Report,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub steps: u64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

/// Median/min/max incumbent fitness across runs at every cumulative-step
/// coordinate where some run's incumbent changed. Rows start once every run
/// has an incumbent.
pub fn combine_curves(curves: &[Vec<TrajectoryPoint>]) -> Result<Vec<CurveRow>> {
    if curves.is_empty() || curves.iter().any(|c| c.is_empty()) {
        return Err(Error::MissingData("every run needs an incumbent trajectory".into()));
    }
    let start = curves.iter().map(|c| c[0].cumulative_steps).max().expect("non-empty");
    let mut coords: Vec<u64> = curves
        .iter()
        .flat_map(|c| c.iter().map(|p| p.cumulative_steps))
        .filter(|&s| s >= start)
        .collect();
    coords.sort_unstable();
    coords.dedup();
    Ok(coords
        .into_iter()
        .map(|steps| {
            let vals: Vec<f64> = curves
                .iter()
                .map(|c| {
                    c.iter()
                        .take_while(|p| p.cumulative_steps <= steps)
                        .last()
                        .expect("coordinate is past every run's first point")
                        .fitness
                })
                .collect();
            CurveRow {
                steps,
                median: median(&vals),
                min: vals.iter().copied().fold(f64::INFINITY, f64::min),
                max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect())
}

pub fn write_curve_csv(rows: &[CurveRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(["steps", "median", "min", "max"])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the requested export into `dir` and returns the files written.
pub fn export(exp: &Experiment, dir: &Path, kind: ExportKind) -> Result<Vec<PathBuf>> {
    match kind {
        ExportKind::IncumbentCurve => {
            let curves = (0..exp.config.protocol.optimization_seeds)
                .map(|k| load_run(exp, dir, k).map(|run| run.outcome().trajectory))
                .collect::<Result<Vec<_>>>()?;
            let rows = combine_curves(&curves)?;
            let path = dir.join("incumbent_curve.csv");
            write_curve_csv(&rows, &path)?;
            Ok(vec![path])
        }
        ExportKind::Landscape => {
            let grid = load_sweep(exp, dir)?;
            let paths = vec![
                dir.join("landscape.csv"),
                dir.join("landscape_best_a.csv"),
                dir.join("landscape_best_b.csv"),
            ];
            write_grid_csv(&grid, &paths[0])?;
            write_best_response_csv(&grid, Along::AxisA, &paths[1])?;
            write_best_response_csv(&grid, Along::AxisB, &paths[2])?;
            Ok(paths)
        }
        ExportKind::Report => {
            let report = IncumbentReport::load(dir)?;
            let path = dir.join("report.csv");
            write_report_csv(&report, &path)?;
            Ok(vec![path])
        }
    }
}

/// One row per (table, optimization seed) plus an `all` row per table.
pub fn write_report_csv(report: &IncumbentReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["table", "optimization_seed", "median", "cv_percent"])?;
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (name, agg) in [
        ("task_score", &report.task_score),
        ("default_shaped_return", &report.default_shaped_return),
    ] {
        for (k, (m, cv)) in agg.run_medians.iter().zip(&agg.run_cvs).enumerate() {
            w.write_record([name.to_string(), k.to_string(), m.to_string(), cell(*cv)])?;
        }
        w.write_record([name.to_string(), "all".into(), agg.median_score.to_string(), cell(agg.median_cv)])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(steps: u64, fitness: f64) -> TrajectoryPoint {
        TrajectoryPoint {
            evaluation: 0,
            cumulative_steps: steps,
            fitness,
        }
    }

    #[test]
    fn single_run_curve_is_degenerate() {
        let rows = combine_curves(&[vec![pt(10, 1.0), pt(30, 2.0)]]).unwrap();
        assert_eq!(rows.len(), 2);
        for r in rows {
            assert_eq!(r.median, r.min);
            assert_eq!(r.max, r.min);
        }
    }

    #[test]
    fn curves_use_step_functions() {
        let a = vec![pt(10, 1.0), pt(40, 3.0)];
        let b = vec![pt(20, 0.0), pt(30, 5.0)];
        let c = vec![pt(5, 2.0)];
        let rows = combine_curves(&[a, b, c]).unwrap();
        let got: Vec<(u64, f64, f64, f64)> = rows.iter().map(|r| (r.steps, r.median, r.min, r.max)).collect();
        assert_eq!(
            got,
            vec![(20, 1.0, 0.0, 2.0), (30, 2.0, 1.0, 5.0), (40, 3.0, 2.0, 5.0)]
        );
        assert!(combine_curves(&[vec![]]).is_err());
    }

    #[test]
    fn curve_csv_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        write_curve_csv(&[CurveRow { steps: 1, median: 0.5, min: 0.0, max: 1.0 }], &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "steps,median,min,max\n1,0.5,0.0,1.0\n");
    }
}
