//! Questionnaire ratings → per-image training labels, and segment-vector checks.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::Deserialize;
use thiserror::Error;

use crate::ingest::{Segments, SEGMENT_COUNT};
use crate::rng::SeededRng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SegmentError {
    #[error("expected {SEGMENT_COUNT} segment values, got {0}")]
    Arity(usize),
    #[error("segment {index} = {value} is outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("segment proportions sum to {0}, more than 1")]
    SumExceedsOne(f64),
}

#[derive(Debug, Error)]
pub enum PerceptError {
    #[error("score {0} is outside [0, 10]")]
    ScoreOutOfRange(f64),
    #[error("image {0:?} has no ratings")]
    EmptyRatings(String),
    #[error("cannot sample {requested} of {population} records")]
    SampleTooLarge { requested: usize, population: usize },
    #[error("rating sheet: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const NEGATIVE_SLACK: f64 = 1e-9;
const SUM_SLACK: f64 = 1e-6;

/// Check a segment vector. Entries in `[-1e-9, 0)` are clamped to 0; the
/// remainder below 1 belongs to unlisted classes and is left alone.
pub fn validate_segments(v: &[f64]) -> Result<Segments, SegmentError> {
    if v.len() != SEGMENT_COUNT {
        return Err(SegmentError::Arity(v.len()));
    }
    let mut out = [0.0; SEGMENT_COUNT];
    for (index, (&value, slot)) in v.iter().zip(out.iter_mut()).enumerate() {
        if !(-NEGATIVE_SLACK..=1.0).contains(&value) {
            return Err(SegmentError::OutOfRange { index, value });
        }
        *slot = value.max(0.0);
    }
    let sum: f64 = out.iter().sum();
    if sum > 1.0 + SUM_SLACK {
        return Err(SegmentError::SumExceedsOne(sum));
    }
    Ok(out)
}

/// One of the ten score ranges `[i, i+1)`; the last one is closed, `[9, 10]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ScoreBin(u8);

impl ScoreBin {
    pub const COUNT: usize = 10;

    pub fn index(self) -> usize {
        usize::from(self.0)
    }

    pub fn range(self) -> (f64, f64) {
        (f64::from(self.0), f64::from(self.0) + 1.0)
    }
}

pub fn bin_score(score: f64) -> Result<ScoreBin, PerceptError> {
    if !(0.0..=10.0).contains(&score) {
        return Err(PerceptError::ScoreOutOfRange(score));
    }
    Ok(ScoreBin((score.floor() as u8).min(9)))
}

/// Image id → list of `(rater id, score)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RatingSheet {
    pub ratings: BTreeMap<String, Vec<(String, f64)>>,
}

#[derive(Debug, Deserialize)]
struct RatingRow {
    image_id: String,
    rater_id: String,
    score: f64,
}

impl RatingSheet {
    /// Read CSV `image_id,rater_id,score` (with header).
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, PerceptError> {
        let mut sheet = RatingSheet::default();
        for row in csv::Reader::from_reader(reader).deserialize() {
            let row: RatingRow = row?;
            if !(0.0..=10.0).contains(&row.score) {
                return Err(PerceptError::ScoreOutOfRange(row.score));
            }
            sheet
                .ratings
                .entry(row.image_id)
                .or_default()
                .push((row.rater_id, row.score));
        }
        Ok(sheet)
    }
}

/// Mean rating per image. Values are summed in ascending order, so the
/// result does not depend on rater order at all.
pub fn aggregate_ratings(sheet: &RatingSheet) -> Result<BTreeMap<String, f64>, PerceptError> {
    sheet
        .ratings
        .iter()
        .map(|(image, scores)| {
            if scores.is_empty() {
                return Err(PerceptError::EmptyRatings(image.clone()));
            }
            let mut values: Vec<f64> = scores.iter().map(|(_, s)| *s).collect();
            values.sort_by(f64::total_cmp);
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            Ok((image.clone(), mean))
        })
        .collect()
}

/// Write CSV `image_id,mean_score,bin`.
pub fn write_labels<W: Write>(means: &BTreeMap<String, f64>, out: W) -> Result<(), PerceptError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["image_id", "mean_score", "bin"])?;
    for (image, mean) in means {
        let bin = bin_score(*mean)?;
        w.write_record([image.as_str(), &mean.to_string(), &bin.index().to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Uniform sample of `n` ids without replacement, returned sorted.
///
/// The population is sorted first so the result depends only on the id set
/// and the seed. Sampling is a partial Fisher–Yates pass driven by
/// [`SeededRng::below`].
pub fn sample_for_annotation<S: AsRef<str>>(
    ids: &[S],
    n: usize,
    seed: u64,
) -> Result<Vec<String>, PerceptError> {
    if n > ids.len() {
        return Err(PerceptError::SampleTooLarge {
            requested: n,
            population: ids.len(),
        });
    }
    let mut pool: Vec<&str> = ids.iter().map(AsRef::as_ref).collect();
    pool.sort_unstable();
    let mut rng = SeededRng::new(seed);
    for i in 0..n {
        let j = i + rng.below((pool.len() - i) as u64) as usize;
        pool.swap(i, j);
    }
    let mut picked: Vec<String> = pool[..n].iter().map(|s| s.to_string()).collect();
    picked.sort();
    Ok(picked)
}
