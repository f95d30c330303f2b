//! Map algebra over the analysis grid: per-epoch score rasters, trends
//! (late minus early), the perception/opinion mismatch overlay, and score
//! distribution summaries.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{CellIndex, GeoPoint, Grid};
use crate::ingest::Channel;
use crate::percept::{bin_score, ScoreBin};

#[derive(Debug, Error)]
pub enum AffectError {
    #[error("rasters are on different grids")]
    GridMismatch,
    #[error("expected a {expected} raster, got {found}")]
    KindMismatch { expected: String, found: String },
    #[error("trend needs two distinct epochs, got {0} twice")]
    SameEpoch(i32),
    #[error("score {score} for record {id:?} is outside [0, 10]")]
    ScoreOutOfRange { id: String, score: f64 },
    #[error("idw needs power > 0 and radius >= 1 (got power {power}, radius {radius})")]
    InvalidSmoothing { power: f64, radius: usize },
    #[error("raster csv line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("raster csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("raster sidecar: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// What a raster's values mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RasterKind {
    /// Mean score per cell, in `[0, 10]`.
    Score { channel: Channel, epoch: i32 },
    /// Late minus early score, in `[-10, 10]`.
    Trend { channel: Channel, early: i32, late: i32 },
    /// Normalized divergence of the two channel trends, in `[0, 1]`.
    Mismatch { early: i32, late: i32 },
}

impl RasterKind {
    pub fn name(&self) -> &'static str {
        match self {
            RasterKind::Score { .. } => "score",
            RasterKind::Trend { .. } => "trend",
            RasterKind::Mismatch { .. } => "mismatch",
        }
    }

    /// Value range the kind guarantees.
    pub fn domain(&self) -> (f64, f64) {
        match self {
            RasterKind::Score { .. } => (0.0, 10.0),
            RasterKind::Trend { .. } => (-10.0, 10.0),
            RasterKind::Mismatch { .. } => (0.0, 1.0),
        }
    }

    /// Short file stem, e.g. `score_perception_2016`.
    pub fn stem(&self) -> String {
        match self {
            RasterKind::Score { channel, epoch } => format!("score_{channel}_{epoch}"),
            RasterKind::Trend { channel, .. } => format!("trend_{channel}"),
            RasterKind::Mismatch { .. } => "mismatch".to_string(),
        }
    }
}

/// Values over a grid in row-major order; `None` is a missing cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub grid: Grid,
    pub kind: RasterKind,
    pub values: Vec<Option<f64>>,
    /// Records behind each cell (for derived rasters, the smaller of the inputs).
    pub support: Vec<u32>,
}

/// Summary of the present cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RasterStats {
    pub cells: usize,
    pub present: usize,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub mean: Option<f64>,
    pub total_support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterSidecar {
    pub grid: Grid,
    #[serde(flatten)]
    pub kind: RasterKind,
    pub stats: RasterStats,
}

impl Raster {
    pub fn empty(grid: Grid, kind: RasterKind) -> Self {
        let n = grid.cell_count();
        Self {
            grid,
            kind,
            values: vec![None; n],
            support: vec![0; n],
        }
    }

    pub fn get(&self, cell: CellIndex) -> Option<f64> {
        self.values[self.grid.linear(cell)]
    }

    pub fn present(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (i, v)))
    }

    pub fn stats(&self) -> RasterStats {
        let mut present = 0usize;
        let mut sum = 0.0;
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for (_, v) in self.present() {
            present += 1;
            sum += v;
            min = min.min(v);
            max = max.max(v);
        }
        let some = |v: f64| (present > 0).then_some(v);
        RasterStats {
            cells: self.values.len(),
            present,
            min: some(min),
            max: some(max),
            mean: some(sum / present.max(1) as f64),
            total_support: self.support.iter().map(|&s| u64::from(s)).sum(),
        }
    }

    pub fn sidecar(&self) -> RasterSidecar {
        RasterSidecar {
            grid: self.grid,
            kind: self.kind,
            stats: self.stats(),
        }
    }

    /// CSV `row,col,value,support`, present cells only, row-major.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), AffectError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(["row", "col", "value", "support"])?;
        for (i, v) in self.present() {
            let cell = self.grid.cell_at(i);
            w.write_record([
                cell.row.to_string(),
                cell.col.to_string(),
                v.to_string(),
                self.support[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_sidecar<W: Write>(&self, mut out: W) -> Result<(), AffectError> {
        serde_json::to_writer_pretty(&mut out, &self.sidecar())?;
        out.write_all(b"\n")?;
        Ok(())
    }

    /// Rebuild a raster from its CSV and JSON sidecar.
    pub fn read<R1: Read, R2: Read>(csv_in: R1, sidecar_in: R2) -> Result<Self, AffectError> {
        let sidecar: RasterSidecar = serde_json::from_reader(sidecar_in)?;
        let mut raster = Raster::empty(sidecar.grid, sidecar.kind);
        let (lo, hi) = sidecar.kind.domain();
        let mut rdr = csv::Reader::from_reader(csv_in);
        for (i, row) in rdr.deserialize().enumerate() {
            let line = i + 2;
            let (row, col, value, support): (usize, usize, f64, u32) = row?;
            if row >= raster.grid.n_rows || col >= raster.grid.n_cols {
                return Err(AffectError::Parse {
                    line,
                    message: format!("cell ({row}, {col}) is off the grid"),
                });
            }
            if !(lo..=hi).contains(&value) {
                return Err(AffectError::Parse {
                    line,
                    message: format!("value {value} outside [{lo}, {hi}]"),
                });
            }
            let idx = raster.grid.linear(CellIndex { row, col });
            raster.values[idx] = Some(value);
            raster.support[idx] = support;
        }
        Ok(raster)
    }
}

/// One scored observation to aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPoint {
    pub id: String,
    pub point: GeoPoint,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AggregateReport {
    pub used: usize,
    pub outside_grid: usize,
}

/// Mean score per cell. Records are summed in ascending id order so the
/// result is independent of input order; records off the grid are counted
/// and skipped.
pub fn aggregate_cells(
    grid: &Grid,
    records: &[ScoredPoint],
    channel: Channel,
    epoch: i32,
) -> Result<(Raster, AggregateReport), AffectError> {
    if let Some(bad) = records.iter().find(|r| !(0.0..=10.0).contains(&r.score)) {
        return Err(AffectError::ScoreOutOfRange {
            id: bad.id.clone(),
            score: bad.score,
        });
    }
    let mut order: Vec<&ScoredPoint> = records.iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));
    let n = grid.cell_count();
    let mut sums = vec![0.0f64; n];
    let mut support = vec![0u32; n];
    let mut report = AggregateReport {
        used: 0,
        outside_grid: 0,
    };
    for rec in order {
        match grid.locate_in(rec.point) {
            Some(i) => {
                sums[i] += rec.score;
                support[i] += 1;
                report.used += 1;
            }
            None => report.outside_grid += 1,
        }
    }
    let values = sums
        .iter()
        .zip(&support)
        .map(|(&s, &c)| (c > 0).then(|| (s / f64::from(c)).clamp(0.0, 10.0)))
        .collect();
    Ok((
        Raster {
            grid: *grid,
            kind: RasterKind::Score { channel, epoch },
            values,
            support,
        },
        report,
    ))
}

/// Missing-cell fill applied to score rasters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Smoothing {
    #[default]
    None,
    /// Inverse-distance weighting from present cells within a Chebyshev
    /// radius (in cells), weights `1 / d^power` on center distance.
    Idw { power: f64, radius: usize },
}

impl Smoothing {
    pub fn validate(&self) -> Result<(), AffectError> {
        match *self {
            Smoothing::None => Ok(()),
            Smoothing::Idw { power, radius } => {
                if power > 0.0 && power.is_finite() && radius >= 1 {
                    Ok(())
                } else {
                    Err(AffectError::InvalidSmoothing { power, radius })
                }
            }
        }
    }
}

/// Fill missing cells; present cells and all support counts are untouched.
/// Only originally present cells act as sources, visited in row-major order.
pub fn smooth(raster: &Raster, method: Smoothing) -> Result<Raster, AffectError> {
    method.validate()?;
    let (power, radius) = match method {
        Smoothing::None => return Ok(raster.clone()),
        Smoothing::Idw { power, radius } => (power, radius),
    };
    let grid = raster.grid;
    let values: Vec<Option<f64>> = (0..grid.cell_count())
        .into_par_iter()
        .map(|i| {
            if raster.values[i].is_some() {
                return raster.values[i];
            }
            let c = grid.cell_at(i);
            let r0 = c.row.saturating_sub(radius);
            let r1 = (c.row + radius).min(grid.n_rows - 1);
            let c0 = c.col.saturating_sub(radius);
            let c1 = (c.col + radius).min(grid.n_cols - 1);
            let mut num = 0.0;
            let mut den = 0.0;
            for row in r0..=r1 {
                for col in c0..=c1 {
                    if let Some(v) = raster.get(CellIndex { row, col }) {
                        let dr = row as f64 - c.row as f64;
                        let dc = col as f64 - c.col as f64;
                        let w = (dr * dr + dc * dc).sqrt().powf(-power);
                        num += w * v;
                        den += w;
                    }
                }
            }
            (den > 0.0).then(|| {
                let (lo, hi) = raster.kind.domain();
                (num / den).clamp(lo, hi)
            })
        })
        .collect();
    Ok(Raster {
        values,
        ..raster.clone()
    })
}

fn check_same_grid(a: &Raster, b: &Raster) -> Result<(), AffectError> {
    if a.grid == b.grid {
        Ok(())
    } else {
        Err(AffectError::GridMismatch)
    }
}

fn kind_error(expected: &str, found: &RasterKind) -> AffectError {
    AffectError::KindMismatch {
        expected: expected.to_string(),
        found: found.name().to_string(),
    }
}

/// Cellwise `late - early`. A cell is present only where both epochs have
/// observed records there; IDW-filled cells never enter a trend.
pub fn trend(late: &Raster, early: &Raster) -> Result<Raster, AffectError> {
    check_same_grid(late, early)?;
    let (channel, late_epoch, early_epoch) = match (late.kind, early.kind) {
        (RasterKind::Score { channel: a, epoch: l }, RasterKind::Score { channel: b, epoch: e }) => {
            if a != b {
                return Err(AffectError::KindMismatch {
                    expected: format!("{a} score"),
                    found: format!("{b} score"),
                });
            }
            (a, l, e)
        }
        (RasterKind::Score { .. }, other) | (other, _) => return Err(kind_error("score", &other)),
    };
    if late_epoch == early_epoch {
        return Err(AffectError::SameEpoch(late_epoch));
    }
    let (values, support): (Vec<Option<f64>>, Vec<u32>) = (0..late.values.len())
        .into_par_iter()
        .map(|i| match (late.values[i], early.values[i]) {
            (Some(l), Some(e)) if late.support[i] > 0 && early.support[i] > 0 => {
                (Some(l - e), late.support[i].min(early.support[i]))
            }
            _ => (None, 0),
        })
        .unzip();
    Ok(Raster {
        grid: late.grid,
        kind: RasterKind::Trend {
            channel,
            early: early_epoch,
            late: late_epoch,
        },
        values,
        support,
    })
}

fn max_abs(r: &Raster) -> f64 {
    r.present().map(|(_, v)| v.abs()).fold(0.0, f64::max)
}

/// Overlay of the perception and opinion trends: each is scaled by its own
/// largest absolute value, and a cell's mismatch is half the absolute
/// difference of the scaled trends.
pub fn mismatch(perception: &Raster, opinion: &Raster) -> Result<Raster, AffectError> {
    check_same_grid(perception, opinion)?;
    let (early, late) = match (perception.kind, opinion.kind) {
        (
            RasterKind::Trend {
                channel: Channel::Perception,
                early,
                late,
            },
            RasterKind::Trend {
                channel: Channel::Opinion,
                ..
            },
        ) => (early, late),
        (RasterKind::Trend { channel: Channel::Perception, .. }, other) => {
            return Err(kind_error("opinion trend", &other))
        }
        (other, _) => return Err(kind_error("perception trend", &other)),
    };
    let scale = |m: f64| if m > 0.0 { 1.0 / m } else { 0.0 };
    let sp = scale(max_abs(perception));
    let so = scale(max_abs(opinion));
    let (values, support): (Vec<Option<f64>>, Vec<u32>) = (0..perception.values.len())
        .into_par_iter()
        .map(|i| match (perception.values[i], opinion.values[i]) {
            (Some(p), Some(o)) => (
                Some(((p * sp - o * so).abs() / 2.0).clamp(0.0, 1.0)),
                perception.support[i].min(opinion.support[i]),
            ),
            _ => (None, 0),
        })
        .unzip();
    Ok(Raster {
        grid: perception.grid,
        kind: RasterKind::Mismatch { early, late },
        values,
        support,
    })
}

/// Score shares per decile bin plus the low (< 2) and high (>= 8) bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreDistribution {
    pub n: usize,
    pub deciles: [f64; ScoreBin::COUNT],
    pub low_share: f64,
    pub high_share: f64,
    /// Set when there were no scores; every share is then 0.
    pub empty: bool,
}

pub const LOW_BAND: f64 = 2.0;
pub const HIGH_BAND: f64 = 8.0;

pub fn score_histogram(scores: &[f64]) -> Result<ScoreDistribution, AffectError> {
    let mut counts = [0usize; ScoreBin::COUNT];
    let mut low = 0usize;
    let mut high = 0usize;
    for &s in scores {
        let bin = bin_score(s).map_err(|_| AffectError::ScoreOutOfRange {
            id: String::new(),
            score: s,
        })?;
        counts[bin.index()] += 1;
        low += usize::from(s < LOW_BAND);
        high += usize::from(s >= HIGH_BAND);
    }
    let n = scores.len();
    let share = |c: usize| if n == 0 { 0.0 } else { c as f64 / n as f64 };
    Ok(ScoreDistribution {
        n,
        deciles: counts.map(share),
        low_share: share(low),
        high_share: share(high),
        empty: n == 0,
    })
}

/// Distribution per (channel, epoch), keyed `"<channel>_<epoch>"`.
pub type DistributionTable = BTreeMap<String, ScoreDistribution>;
