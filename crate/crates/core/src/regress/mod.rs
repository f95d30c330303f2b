//! Cubic least-squares regression of score on element proportion, with the
//! overall-model F-test, run per (epoch, land-use zone, element).

pub mod dist;

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::geo::{Zone, ZoningSet};
use crate::ingest::{Element, PerceptionRecord};

/// Smallest sample the sweep will fit.
pub const MIN_SAMPLES: usize = 5;

/// Relative residual norm below which a power column counts as collinear.
pub const COLLINEARITY_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegressError {
    #[error("x and y lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("insufficient n: {n} samples, need at least {needed}")]
    InsufficientSamples { n: usize, needed: usize },
    #[error("non-finite input value")]
    NonFinite,
    #[error("fewer than 2 distinct x values")]
    DegenerateX,
    #[error("zero variance in y")]
    ZeroVarianceY,
    #[error("r square {0} outside [0, 1)")]
    RSquareOutOfRange(f64),
    #[error("F statistic overflows: r square is 1")]
    FOverflow,
    #[error("degrees of freedom must be at least 1 (df1 {df1}, df2 {df2})")]
    InvalidDf { df1: usize, df2: usize },
    #[error("csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for RegressError {
    fn from(e: csv::Error) -> Self {
        RegressError::Csv(e.to_string())
    }
}

/// A fitted `ŷ = constant + b1·x + b2·x² + b3·x³`, with the model summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CubicFit {
    pub constant: f64,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    /// Standard errors of `[constant, b1, b2, b3]`; 0 for dropped terms.
    pub std_errors: [f64; 4],
    pub r_square: f64,
    /// Infinite for an exact fit.
    pub f_stat: f64,
    pub df1: usize,
    pub df2: usize,
    /// Upper-tail probability of `f_stat`; 0 for an exact fit.
    pub sig: f64,
    pub n: usize,
    /// Powers (2 or 3, possibly 1) eliminated as collinear.
    pub dropped_terms: Vec<usize>,
}

impl CubicFit {
    pub fn coefficients(&self) -> [f64; 4] {
        [self.constant, self.b1, self.b2, self.b3]
    }

    pub fn predict(&self, x: f64) -> f64 {
        eval_cubic(self.coefficients(), x)
    }

    /// Significance in summary-table style: `<.001` or three decimals without
    /// the leading zero.
    pub fn sig_display(&self) -> String {
        sig_display(self.sig)
    }
}

pub fn sig_display(sig: f64) -> String {
    if sig < 0.001 {
        "<.001".to_string()
    } else {
        let s = format!("{sig:.3}");
        s.strip_prefix('0').map(str::to_string).unwrap_or(s)
    }
}

/// Horner evaluation of `c0 + c1 x + c2 x² + c3 x³`.
pub fn eval_cubic(c: [f64; 4], x: f64) -> f64 {
    ((c[3] * x + c[2]) * x + c[1]) * x + c[0]
}

/// `(R²/df1) / ((1-R²)/df2)`.
pub fn f_statistic(r_square: f64, df1: usize, df2: usize) -> Result<f64, RegressError> {
    if df1 == 0 || df2 == 0 {
        return Err(RegressError::InvalidDf { df1, df2 });
    }
    if r_square == 1.0 {
        return Err(RegressError::FOverflow);
    }
    if !(0.0..1.0).contains(&r_square) {
        return Err(RegressError::RSquareOutOfRange(r_square));
    }
    Ok((r_square / df1 as f64) / ((1.0 - r_square) / df2 as f64))
}

/// Upper-tail probability of `F(df1, df2)` at `f`, via `I_x(df2/2, df1/2)`
/// with `x = df2 / (df2 + df1·f)`.
pub fn f_p_value(f: f64, df1: usize, df2: usize) -> f64 {
    dist::f_upper_tail(f, df1 as f64, df2 as f64)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn binomial(n: usize, k: usize) -> f64 {
    const TABLE: [[f64; 4]; 4] = [
        [1.0, 0.0, 0.0, 0.0],
        [1.0, 1.0, 0.0, 0.0],
        [1.0, 2.0, 1.0, 0.0],
        [1.0, 3.0, 3.0, 1.0],
    ];
    TABLE[n][k]
}

/// Ordinary least squares on `[1, x, x², x³]`.
///
/// The design is built on `t = (x - mean) / max|x - mean|` and orthogonalized
/// column by column (modified Gram–Schmidt, two passes). A power whose
/// residual norm falls below [`COLLINEARITY_TOL`] of its own norm is dropped
/// and recorded; the coefficients are then mapped back to the raw `x` scale.
pub fn fit_cubic(xs: &[f64], ys: &[f64]) -> Result<CubicFit, RegressError> {
    let n = xs.len();
    if ys.len() != n {
        return Err(RegressError::LengthMismatch(n, ys.len()));
    }
    if n < MIN_SAMPLES {
        return Err(RegressError::InsufficientSamples { n, needed: MIN_SAMPLES });
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(RegressError::NonFinite);
    }
    let y_mean = ys.iter().sum::<f64>() / n as f64;
    let ss_tot: f64 = ys.iter().map(|y| (y - y_mean).powi(2)).sum();
    if ss_tot <= 0.0 {
        return Err(RegressError::ZeroVarianceY);
    }
    let x_mean = xs.iter().sum::<f64>() / n as f64;
    let x_spread = xs.iter().map(|x| (x - x_mean).abs()).fold(0.0, f64::max);
    if x_spread == 0.0 {
        return Err(RegressError::DegenerateX);
    }
    let ts: Vec<f64> = xs.iter().map(|x| (x - x_mean) / x_spread).collect();

    // Gram–Schmidt over the power columns.
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(4);
    let mut kept: Vec<usize> = Vec::with_capacity(4);
    let mut r = [[0.0f64; 4]; 4];
    let mut dropped = Vec::new();
    for power in 0..4 {
        let mut v: Vec<f64> = ts.iter().map(|t| t.powi(power as i32)).collect();
        let original = dot(&v, &v).sqrt();
        for _pass in 0..2 {
            for (slot, qi) in q.iter().enumerate() {
                let proj = dot(qi, &v);
                r[slot][q.len()] += proj;
                for (vj, qj) in v.iter_mut().zip(qi) {
                    *vj -= proj * qj;
                }
            }
        }
        let norm = dot(&v, &v).sqrt();
        if power > 0 && norm <= COLLINEARITY_TOL * original {
            dropped.push(power);
            for row in r.iter_mut() {
                row[q.len()] = 0.0;
            }
            continue;
        }
        let slot = q.len();
        r[slot][slot] = norm;
        v.iter_mut().for_each(|vj| *vj /= norm);
        q.push(v);
        kept.push(power);
    }
    let k = kept.len();
    let df1 = k - 1;
    if df1 == 0 {
        return Err(RegressError::DegenerateX);
    }
    let df2 = n - df1 - 1;
    if df2 == 0 {
        return Err(RegressError::InsufficientSamples { n, needed: df1 + 2 });
    }

    // R β = Qᵀ y, then R⁻¹ for the covariance.
    let qty: Vec<f64> = q.iter().map(|qi| dot(qi, ys)).collect();
    let mut r_inv = [[0.0f64; 4]; 4];
    for col in 0..k {
        r_inv[col][col] = 1.0 / r[col][col];
        for row in (0..col).rev() {
            let s: f64 = (row + 1..=col).map(|m| r[row][m] * r_inv[m][col]).sum();
            r_inv[row][col] = -s / r[row][row];
        }
    }
    let beta_t: Vec<f64> = (0..k)
        .map(|row| (row..k).map(|m| r_inv[row][m] * qty[m]).sum())
        .collect();

    let ss_res: f64 = ts
        .iter()
        .zip(ys)
        .map(|(t, y)| {
            let fitted: f64 = kept.iter().zip(&beta_t).map(|(p, b)| b * t.powi(*p as i32)).sum();
            (y - fitted).powi(2)
        })
        .sum();
    let r_square = (1.0 - ss_res / ss_tot).clamp(0.0, 1.0);

    // Map t-basis coefficients to raw powers: t^p = s^-p Σ_j C(p,j) x^j (-m)^(p-j).
    let mut to_raw = [[0.0f64; 4]; 4];
    for (slot, &p) in kept.iter().enumerate() {
        let scale = x_spread.powi(-(p as i32));
        for (j, row) in to_raw.iter_mut().enumerate().take(p + 1) {
            row[slot] = scale * binomial(p, j) * (-x_mean).powi((p - j) as i32);
        }
    }
    let mut raw = [0.0f64; 4];
    for (j, out) in raw.iter_mut().enumerate() {
        *out = (0..k).map(|slot| to_raw[j][slot] * beta_t[slot]).sum();
    }

    let sigma2 = ss_res / df2 as f64;
    let mut std_errors = [0.0f64; 4];
    for (j, se) in std_errors.iter_mut().enumerate() {
        // var(raw_j) = σ² ‖(T R⁻¹)_j‖²
        let row: Vec<f64> = (0..k)
            .map(|col| (0..k).map(|slot| to_raw[j][slot] * r_inv[slot][col]).sum())
            .collect();
        *se = (sigma2 * dot(&row, &row)).sqrt();
    }

    let (f_stat, sig) = match f_statistic(r_square, df1, df2) {
        Ok(f) => (f, f_p_value(f, df1, df2)),
        Err(_) => (f64::INFINITY, 0.0),
    };

    Ok(CubicFit {
        constant: raw[0],
        b1: raw[1],
        b2: raw[2],
        b3: raw[3],
        std_errors,
        r_square,
        f_stat,
        df1,
        df2,
        sig,
        n,
        dropped_terms: dropped,
    })
}

/// Thresholds for flagging a fit as reportable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct ReportFilter {
    pub r_square_min: f64,
    pub sig_max: f64,
}

impl Default for ReportFilter {
    fn default() -> Self {
        Self {
            r_square_min: 0.3,
            sig_max: 0.01,
        }
    }
}

impl ReportFilter {
    pub fn passes(&self, fit: &CubicFit) -> bool {
        fit.r_square > self.r_square_min && fit.sig < self.sig_max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionRow {
    pub epoch: i32,
    pub zone: Zone,
    pub element: Element,
    pub fit: CubicFit,
    pub reported: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedCombination {
    pub epoch: i32,
    pub zone: Zone,
    pub element: Element,
    pub n: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RegressionReport {
    pub rows: Vec<RegressionRow>,
    pub skipped: Vec<SkippedCombination>,
}

fn skip_reason(err: &RegressError) -> String {
    match err {
        RegressError::InsufficientSamples { .. } => "insufficient n".to_string(),
        other => other.to_string(),
    }
}

/// Fit every (epoch, zone, element) combination that has records.
///
/// Records are assigned to zones with the smallest-containing-polygon rule
/// (points outside every polygon go to `Unzoned`). An empty `epochs` slice
/// means every epoch present in the data. Rows come out in
/// (epoch, zone, element) order.
pub fn run_zone_element_regressions(
    records: &[PerceptionRecord],
    zones: &ZoningSet,
    epochs: &[i32],
    filter: ReportFilter,
) -> RegressionReport {
    let assigned: Vec<Zone> = records.par_iter().map(|r| zones.assign(r.point)).collect();
    let mut groups: BTreeMap<(i32, Zone), Vec<&PerceptionRecord>> = BTreeMap::new();
    for (rec, zone) in records.iter().zip(assigned) {
        if epochs.is_empty() || epochs.contains(&rec.epoch) {
            groups.entry((rec.epoch, zone)).or_default().push(rec);
        }
    }
    for members in groups.values_mut() {
        members.sort_by(|a, b| a.id.cmp(&b.id));
    }

    let jobs: Vec<(i32, Zone, Element, &Vec<&PerceptionRecord>)> = groups
        .iter()
        .flat_map(|(&(epoch, zone), members)| {
            Element::ALL.into_iter().map(move |element| (epoch, zone, element, members))
        })
        .collect();

    let outcomes: Vec<Result<RegressionRow, SkippedCombination>> = jobs
        .par_iter()
        .map(|&(epoch, zone, element, members)| {
            let xs: Vec<f64> = members.iter().map(|r| r.segments[element.index()]).collect();
            let ys: Vec<f64> = members.iter().map(|r| r.score).collect();
            match fit_cubic(&xs, &ys) {
                Ok(fit) => Ok(RegressionRow {
                    epoch,
                    zone,
                    element,
                    reported: filter.passes(&fit),
                    fit,
                }),
                Err(err) => Err(SkippedCombination {
                    epoch,
                    zone,
                    element,
                    n: members.len(),
                    reason: skip_reason(&err),
                }),
            }
        })
        .collect();

    let mut report = RegressionReport::default();
    for outcome in outcomes {
        match outcome {
            Ok(row) => report.rows.push(row),
            Err(skip) => report.skipped.push(skip),
        }
    }
    report
}

impl RegressionReport {
    pub fn reported(&self) -> impl Iterator<Item = &RegressionRow> {
        self.rows.iter().filter(|r| r.reported)
    }

    /// CSV with the model-summary layout:
    /// `epoch,zone,element,r_square,f,df1,df2,sig,constant,b1,b2,b3,n,reported,dropped_terms`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), RegressError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record([
            "epoch", "zone", "element", "r_square", "f", "df1", "df2", "sig", "constant", "b1",
            "b2", "b3", "n", "reported", "dropped_terms",
        ])?;
        for row in &self.rows {
            let f = &row.fit;
            let dropped: Vec<String> = f.dropped_terms.iter().map(|p| format!("x^{p}")).collect();
            w.write_record([
                row.epoch.to_string(),
                row.zone.to_string(),
                row.element.to_string(),
                f.r_square.to_string(),
                f.f_stat.to_string(),
                f.df1.to_string(),
                f.df2.to_string(),
                f.sig.to_string(),
                f.constant.to_string(),
                f.b1.to_string(),
                f.b2.to_string(),
                f.b3.to_string(),
                f.n.to_string(),
                row.reported.to_string(),
                dropped.join(";"),
            ])?;
        }
        w.flush().map_err(|e| RegressError::Csv(e.to_string()))?;
        Ok(())
    }
}
