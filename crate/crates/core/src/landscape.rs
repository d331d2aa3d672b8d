//! Pairwise parameter landscapes: a grid over two parameters with every other
//! parameter frozen, trained at each cell, plus best-response lines.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{mean, std_dev, Direction, StdEstimator};
use crate::space::{ParamKind, ParamSpec, Values};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub spec: ParamSpec,
    pub values: Vec<f64>,
}

impl GridAxis {
    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn resolution(&self) -> usize {
        self.values.len()
    }

    /// Column label: name plus scale kind, e.g. `learning_rate[log]`.
    pub fn header(&self) -> String {
        let scale = match self.spec.kind {
            ParamKind::Continuous { log: true, .. } => "log",
            ParamKind::Continuous { log: false, .. } => "linear",
            ParamKind::Categorical { .. } => "categorical",
        };
        format!("{}[{scale}]", self.spec.name)
    }
}

/// Geometric progression for log specs, arithmetic otherwise; both endpoints exact.
/// Categorical specs use their choice list.
pub fn make_axis(spec: &ParamSpec, resolution: usize) -> Result<GridAxis> {
    if resolution < 2 {
        return Err(Error::domain(&spec.name, format!("resolution {resolution} < 2")));
    }
    let values = match &spec.kind {
        ParamKind::Continuous { lo, hi, log } => {
            if *log && *lo <= 0.0 {
                return Err(Error::domain(&spec.name, "log axis needs lo > 0"));
            }
            let last = (resolution - 1) as f64;
            (0..resolution)
                .map(|i| {
                    if i == 0 {
                        *lo
                    } else if i == resolution - 1 {
                        *hi
                    } else if *log {
                        lo * (hi / lo).powf(i as f64 / last)
                    } else {
                        lo + (hi - lo) * (i as f64 / last)
                    }
                })
                .collect()
        }
        ParamKind::Categorical { choices } => choices.clone(),
    };
    Ok(GridAxis {
        spec: spec.clone(),
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    /// Mean task score over successful seeds (NaN if none succeeded).
    pub mean: f64,
    pub std: f64,
    pub n: usize,
    /// At least one training at this cell failed.
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeGrid {
    pub axis_a: GridAxis,
    pub axis_b: GridAxis,
    /// `cells[i][j]` is `(axis_a.values[i], axis_b.values[j])`.
    pub cells: Vec<Vec<Cell>>,
    pub frozen: Values,
    pub direction: Direction,
}

/// One training run of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub index_a: usize,
    pub index_b: usize,
    pub values: Values,
    pub seed: u64,
    /// Task score of the trained policy; `None` if training failed.
    pub score: Option<f64>,
}

/// Trains at every `(cell, seed)` pair, reporting each run through `on_record`
/// in row-major, seed-minor order.
pub fn sweep<F, J>(
    axis_a: &GridAxis,
    axis_b: &GridAxis,
    frozen: &Values,
    seeds: &[u64],
    direction: Direction,
    evaluate: F,
    mut on_record: J,
) -> Result<LandscapeGrid>
where
    F: Fn(&Values, u64) -> Result<f64> + Sync,
    J: FnMut(&SweepRecord) -> Result<()>,
{
    if axis_a.name() == axis_b.name() {
        return Err(Error::domain(axis_a.name(), "both axes sweep the same parameter"));
    }
    if seeds.is_empty() {
        return Err(Error::domain("seeds", "at least one seed required"));
    }
    let jobs: Vec<(usize, usize, u64)> = (0..axis_a.resolution())
        .flat_map(|i| (0..axis_b.resolution()).flat_map(move |j| seeds.iter().map(move |&s| (i, j, s))))
        .collect();
    let records: Vec<SweepRecord> = jobs
        .par_iter()
        .map(|&(i, j, seed)| {
            let mut values = frozen.clone();
            values.insert(axis_a.name().to_string(), axis_a.values[i]);
            values.insert(axis_b.name().to_string(), axis_b.values[j]);
            let score = evaluate(&values, seed).ok().filter(|s| s.is_finite());
            SweepRecord {
                index_a: i,
                index_b: j,
                values,
                seed,
                score,
            }
        })
        .collect();
    for r in &records {
        on_record(r)?;
    }
    Ok(assemble(axis_a, axis_b, frozen, direction, &records))
}

/// Rebuilds a grid from its run records.
pub fn assemble(
    axis_a: &GridAxis,
    axis_b: &GridAxis,
    frozen: &Values,
    direction: Direction,
    records: &[SweepRecord],
) -> LandscapeGrid {
    let mut scores = vec![vec![(Vec::new(), false); axis_b.resolution()]; axis_a.resolution()];
    for r in records {
        let slot = &mut scores[r.index_a][r.index_b];
        match r.score {
            Some(s) => slot.0.push(s),
            None => slot.1 = true,
        }
    }
    let cells = scores
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|(xs, failed)| Cell {
                    mean: if xs.is_empty() { f64::NAN } else { mean(&xs) },
                    std: if xs.len() < 2 {
                        0.0
                    } else {
                        std_dev(&xs, StdEstimator::Sample)
                    },
                    n: xs.len(),
                    failed: failed || xs.is_empty(),
                })
                .collect()
        })
        .collect();
    LandscapeGrid {
        axis_a: axis_a.clone(),
        axis_b: axis_b.clone(),
        cells,
        frozen: frozen.clone(),
        direction,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Along {
    /// For each value of axis a, the best index on axis b.
    AxisA,
    /// For each value of axis b, the best index on axis a.
    AxisB,
}

impl LandscapeGrid {
    /// Score used for ranking: oriented to maximization, failed cells at `-inf`.
    fn rank_value(&self, i: usize, j: usize) -> f64 {
        let c = &self.cells[i][j];
        if c.failed || !c.mean.is_finite() {
            f64::NEG_INFINITY
        } else {
            self.direction.orient(c.mean)
        }
    }
}

/// Best coordinate per line; ties go to the lower index.
pub fn best_response(grid: &LandscapeGrid, along: Along) -> Vec<usize> {
    let (lines, span) = match along {
        Along::AxisA => (grid.axis_a.resolution(), grid.axis_b.resolution()),
        Along::AxisB => (grid.axis_b.resolution(), grid.axis_a.resolution()),
    };
    (0..lines)
        .map(|line| {
            let value = |k: usize| match along {
                Along::AxisA => grid.rank_value(line, k),
                Along::AxisB => grid.rank_value(k, line),
            };
            let mut best = 0;
            for k in 1..span {
                if value(k) > value(best) {
                    best = k;
                }
            }
            best
        })
        .collect()
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

/// Writes `param_a, param_b, mean, std, n, failed`, one row per cell.
pub fn write_grid_csv(grid: &LandscapeGrid, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        grid.axis_a.header(),
        grid.axis_b.header(),
        "mean".into(),
        "std".into(),
        "n".into(),
        "failed".into(),
    ])?;
    for (i, row) in grid.cells.iter().enumerate() {
        for (j, c) in row.iter().enumerate() {
            w.write_record([
                fmt(grid.axis_a.values[i]),
                fmt(grid.axis_b.values[j]),
                fmt(c.mean),
                fmt(c.std),
                c.n.to_string(),
                c.failed.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes one best-response line: the line coordinate, the best coordinate on
/// the other axis, and its mean score.
pub fn write_best_response_csv(grid: &LandscapeGrid, along: Along, path: &Path) -> Result<()> {
    let (line_axis, other_axis) = match along {
        Along::AxisA => (&grid.axis_a, &grid.axis_b),
        Along::AxisB => (&grid.axis_b, &grid.axis_a),
    };
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        line_axis.header(),
        format!("best_{}", other_axis.header()),
        "mean".into(),
    ])?;
    for (line, best) in best_response(grid, along).into_iter().enumerate() {
        let cell = match along {
            Along::AxisA => &grid.cells[line][best],
            Along::AxisB => &grid.cells[best][line],
        };
        w.write_record([
            fmt(line_axis.values[line]),
            fmt(other_axis.values[best]),
            fmt(cell.mean),
        ])?;
    }
    w.flush()?;
    Ok(())
}
