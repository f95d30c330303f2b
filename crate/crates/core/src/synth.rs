//! Seeded synthetic scenarios with planted sentiment fields, mismatch
//! hotspots and zone-element regressions, plus the matching answer key.
//!
//! Every record slot `(cell, slot)` exists in both epochs with the same id
//! suffix, segment vector and planted-regression noise; only the epoch noise,
//! the position jitter and the hotspot deltas differ between epochs.
//!
//! Random draws come from xoshiro256** seeded through SplitMix64 (see
//! [`crate::rng`]), one derived stream per purpose.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::geo::{BoundingBox, CellIndex, GeoError, GeoPoint, Grid, ZoneLabel};
use crate::ingest::{opinion_to_line, perception_to_line, Element, OpinionRecord, PerceptionRecord, SEGMENT_COUNT};
use crate::regress::eval_cubic;
use crate::rng::SeededRng;
use crate::textsent::{Lexicon, TextError};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("infeasible scenario: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Smooth base surface `mean + amplitude · sin(·) · cos(·)` with seeded phases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseField {
    pub mean: f64,
    pub amplitude: f64,
}

/// Disk of cells (Euclidean distance in cell units ≤ `radius`) whose scores
/// shift by the given per-epoch deltas (`[early, late]`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hotspot {
    pub center: CellIndex,
    pub radius: f64,
    pub perception_delta: [f64; 2],
    pub opinion_delta: [f64; 2],
}

impl Hotspot {
    pub fn covers(&self, cell: CellIndex) -> bool {
        let dr = cell.row as f64 - self.center.row as f64;
        let dc = cell.col as f64 - self.center.col as f64;
        dr * dr + dc * dc <= self.radius * self.radius
    }
}

/// Inclusive cell rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellRect {
    pub row0: usize,
    pub col0: usize,
    pub row1: usize,
    pub col1: usize,
}

impl CellRect {
    pub fn contains(&self, cell: CellIndex) -> bool {
        (self.row0..=self.row1).contains(&cell.row) && (self.col0..=self.col1).contains(&cell.col)
    }

    pub fn cell_count(&self) -> usize {
        (self.row1 - self.row0 + 1) * (self.col1 - self.col0 + 1)
    }
}

/// Zone whose perception scores follow a cubic in one element's proportion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedRegression {
    pub zone: ZoneLabel,
    pub cells: CellRect,
    pub element: Element,
    pub coefficients: [f64; 4],
    pub sigma: f64,
}

/// A labeled rectangle with no planted structure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtraZone {
    pub zone: ZoneLabel,
    pub cells: CellRect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub seed: u64,
    pub bbox: BoundingBox,
    pub cell_size: f64,
    /// `[early, late]`.
    pub epochs: [i32; 2],
    pub perception_per_cell: usize,
    pub opinion_per_cell: usize,
    /// Standard deviation of independent per-record, per-epoch perception noise.
    pub epoch_noise: f64,
    pub perception_base: BaseField,
    pub opinion_base: BaseField,
    pub hotspots: Vec<Hotspot>,
    pub planted: Vec<PlantedRegression>,
    /// Zone covering the whole bounding box; smaller zones take precedence.
    pub background_zone: ZoneLabel,
    pub extra_zones: Vec<ExtraZone>,
    /// Sentiment words per class.
    pub vocabulary_per_class: usize,
    /// Labeled training documents per class.
    pub training_docs: usize,
    /// Class words per post; two neutral words are added to each.
    pub words_per_post: usize,
}

/// Largest proportion drawn for a record's wide element.
pub const WIDE_SEGMENT_MAX: f64 = 0.6;
/// Largest proportion drawn for every other element.
pub const NARROW_SEGMENT_MAX: f64 = 0.025;

const NEUTRAL_WORDS: [&str; 2] = ["北京", "分享"];
const WORD_CHAR_BASE: u32 = 0x6E00;

impl ScenarioSpec {
    /// The reference scenario: 0.004° cells over the default study region,
    /// about 50k records, three divergent hotspots, one concordant hotspot
    /// and one planted cubic relation.
    pub fn standard(seed: u64) -> Self {
        let cell = |row, col| CellIndex { row, col };
        Self {
            seed,
            bbox: BoundingBox::STUDY_REGION,
            cell_size: 0.004,
            epochs: [2016, 2022],
            perception_per_cell: 24,
            opinion_per_cell: 10,
            epoch_noise: 0.2,
            perception_base: BaseField {
                mean: 5.0,
                amplitude: 2.0,
            },
            opinion_base: BaseField {
                mean: 5.0,
                amplitude: 2.0,
            },
            hotspots: vec![
                Hotspot {
                    center: cell(5, 6),
                    radius: 2.0,
                    perception_delta: [0.0, -2.0],
                    opinion_delta: [0.0, 2.0],
                },
                Hotspot {
                    center: cell(17, 22),
                    radius: 2.0,
                    perception_delta: [0.0, 2.0],
                    opinion_delta: [0.0, -2.0],
                },
                Hotspot {
                    center: cell(19, 4),
                    radius: 1.5,
                    perception_delta: [0.0, -2.0],
                    opinion_delta: [0.0, 1.0],
                },
                Hotspot {
                    center: cell(6, 20),
                    radius: 2.0,
                    perception_delta: [0.0, 2.0],
                    opinion_delta: [0.0, 2.0],
                },
            ],
            planted: vec![PlantedRegression {
                zone: ZoneLabel::Special,
                cells: CellRect {
                    row0: 11,
                    col0: 12,
                    row1: 13,
                    col1: 14,
                },
                element: Element::Building,
                coefficients: [5.8, -7.5, 38.3, -33.5],
                sigma: 0.1,
            }],
            background_zone: ZoneLabel::ResidentialAndPublicInfrastructure,
            extra_zones: vec![
                ExtraZone {
                    zone: ZoneLabel::Green,
                    cells: CellRect {
                        row0: 1,
                        col0: 12,
                        row1: 4,
                        col1: 17,
                    },
                },
                ExtraZone {
                    zone: ZoneLabel::Industry,
                    cells: CellRect {
                        row0: 16,
                        col0: 10,
                        row1: 21,
                        col1: 15,
                    },
                },
            ],
            vocabulary_per_class: 40,
            training_docs: 200,
            words_per_post: 8,
        }
    }

    /// Same scenario with every hotspot made concordant (opinion deltas equal
    /// to perception deltas) and no epoch noise, so the channels never diverge.
    pub fn zero_divergence(mut self) -> Self {
        for h in &mut self.hotspots {
            h.opinion_delta = h.perception_delta;
        }
        self.epoch_noise = 0.0;
        self
    }

    pub fn grid(&self) -> Result<Grid, SynthError> {
        Ok(Grid::new(self.bbox, self.cell_size)?)
    }

    fn validate(&self, grid: &Grid) -> Result<(), SynthError> {
        let invalid = |m: String| Err(SynthError::Invalid(m));
        if self.epochs[0] == self.epochs[1] {
            return invalid(format!("epochs must differ, got {} twice", self.epochs[0]));
        }
        if self.perception_per_cell == 0 || self.opinion_per_cell == 0 {
            return invalid("per-cell record counts must be positive".into());
        }
        if self.vocabulary_per_class == 0 || self.training_docs == 0 || self.words_per_post == 0 {
            return invalid("text generation sizes must be positive".into());
        }
        let chars_needed = 4 * self.vocabulary_per_class as u32;
        if WORD_CHAR_BASE + chars_needed > 0x9FFF {
            return invalid("vocabulary too large".into());
        }
        if !(self.epoch_noise >= 0.0 && self.epoch_noise.is_finite()) {
            return invalid(format!("epoch noise {} must be >= 0", self.epoch_noise));
        }
        for f in [self.perception_base, self.opinion_base] {
            if !(f.amplitude >= 0.0 && f.mean - f.amplitude >= 0.0 && f.mean + f.amplitude <= 10.0) {
                return invalid(format!("base field {f:?} leaves [0, 10]"));
            }
        }
        let in_grid = |r: &CellRect| r.row0 <= r.row1 && r.col0 <= r.col1 && r.row1 < grid.n_rows && r.col1 < grid.n_cols;
        for p in &self.planted {
            if !in_grid(&p.cells) {
                return invalid(format!("planted rectangle {:?} is off the grid", p.cells));
            }
            if !(p.sigma >= 0.0 && p.sigma.is_finite()) {
                return invalid(format!("planted sigma {} must be >= 0", p.sigma));
            }
        }
        for z in &self.extra_zones {
            if !in_grid(&z.cells) {
                return invalid(format!("zone rectangle {:?} is off the grid", z.cells));
            }
        }
        for (i, a) in self.planted.iter().enumerate() {
            for b in &self.planted[i + 1..] {
                if rects_overlap(&a.cells, &b.cells) {
                    return invalid("planted rectangles overlap".into());
                }
            }
        }
        for h in &self.hotspots {
            if h.center.row >= grid.n_rows || h.center.col >= grid.n_cols || !(h.radius >= 0.0) {
                return invalid(format!("hotspot {h:?} is off the grid"));
            }
        }
        for i in 0..grid.cell_count() {
            let cell = grid.cell_at(i);
            let covering: Vec<&Hotspot> = self.hotspots.iter().filter(|h| h.covers(cell)).collect();
            if covering.len() > 1 {
                return Err(SynthError::Infeasible(format!("hotspots overlap at cell {cell:?}")));
            }
            if !covering.is_empty() && self.planted.iter().any(|p| p.cells.contains(cell)) {
                return Err(SynthError::Infeasible(format!("hotspot covers planted cell {cell:?}")));
            }
        }
        Ok(())
    }
}

fn rects_overlap(a: &CellRect, b: &CellRect) -> bool {
    a.row0 <= b.row1 && b.row0 <= a.row1 && a.col0 <= b.col1 && b.col0 <= a.col1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub zone: ZoneLabel,
    pub element: Element,
    pub coefficients: [f64; 4],
    pub sigma: f64,
    pub records_per_epoch: usize,
}

/// Ground truth implied by the spec. Trend and mismatch vectors are
/// row-major over the grid; every cell carries records in both epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerKey {
    pub grid: Grid,
    pub epochs: [i32; 2],
    pub trend_perception: Vec<f64>,
    pub trend_opinion: Vec<f64>,
    pub mismatch: Vec<f64>,
    /// Linear indices of cells with nonzero true mismatch.
    pub hotspot_cells: Vec<usize>,
    pub planted: Vec<PlantedTruth>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub grid: Grid,
    pub perception: Vec<PerceptionRecord>,
    pub opinion: Vec<OpinionRecord>,
    pub zoning: Value,
    pub lexicon: Lexicon,
    pub positive_corpus: Vec<String>,
    pub negative_corpus: Vec<String>,
    pub stopwords: Vec<String>,
    pub answer_key: AnswerKey,
}

/// Stream ids for [`SeededRng::derive`].
mod stream {
    pub const FIELDS: u64 = 1;
    pub const SEGMENTS: u64 = 2;
    pub const EPOCH_NOISE: u64 = 3;
    pub const JITTER: u64 = 5;
    pub const PERMUTATION: u64 = 7;
    pub const POSTS: u64 = 8;
    pub const CORPUS: u64 = 9;
}

fn field(grid: &Grid, base: BaseField, rng: &mut SeededRng) -> Vec<f64> {
    let phase_x = rng.uniform(0.0, std::f64::consts::TAU);
    let phase_y = rng.uniform(0.0, std::f64::consts::TAU);
    (0..grid.cell_count())
        .map(|i| {
            let c = grid.cell_at(i);
            let u = std::f64::consts::TAU * c.col as f64 / grid.n_cols as f64 + phase_x;
            let v = 0.8 * std::f64::consts::TAU * c.row as f64 / grid.n_rows as f64 + phase_y;
            base.mean + base.amplitude * u.sin() * v.cos()
        })
        .collect()
}

// Dyadic values keep cell means and differences exact in floating point.
fn quantize_16(v: f64) -> f64 {
    (v * 16.0).round() / 16.0
}

fn vocabulary(per_class: usize) -> (Vec<String>, Vec<String>) {
    let word = |k: usize| -> String {
        let a = WORD_CHAR_BASE + 2 * k as u32;
        [a, a + 1].iter().map(|&c| char::from_u32(c).expect("CJK code point")).collect()
    };
    let pos = (0..per_class).map(word).collect();
    let neg = (per_class..2 * per_class).map(word).collect();
    (pos, neg)
}

fn compose(words: &[String], n: usize, rng: &mut SeededRng) -> String {
    let mut tokens: Vec<&str> = (0..n).map(|_| words[rng.below(words.len() as u64) as usize].as_str()).collect();
    tokens.extend(NEUTRAL_WORDS);
    rng.shuffle(&mut tokens);
    tokens.concat()
}

fn jitter(grid: &Grid, cell: CellIndex, rng: &mut SeededRng) -> GeoPoint {
    let b = grid.cell_bounds(cell);
    GeoPoint {
        lon: b.west + (0.05 + 0.9 * rng.unit()) * (b.east - b.west),
        lat: b.south + (0.05 + 0.9 * rng.unit()) * (b.north - b.south),
    }
}

fn rect_ring(grid: &Grid, r: &CellRect) -> Value {
    let nw = grid.cell_bounds(CellIndex { row: r.row0, col: r.col0 });
    let se = grid.cell_bounds(CellIndex { row: r.row1, col: r.col1 });
    json!([[
        [nw.west, se.south],
        [se.east, se.south],
        [se.east, nw.north],
        [nw.west, nw.north],
        [nw.west, se.south],
    ]])
}

fn zone_feature(label: ZoneLabel, coordinates: Value) -> Value {
    json!({
        "type": "Feature",
        "properties": { "zone": label.as_str() },
        "geometry": { "type": "Polygon", "coordinates": coordinates },
    })
}

fn normalized(values: &[f64]) -> Vec<f64> {
    let m = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    values.iter().map(|v| if m > 0.0 { v / m } else { 0.0 }).collect()
}

/// Build the scenario. Deterministic in `spec`.
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<Scenario, SynthError> {
    let grid = spec.grid()?;
    spec.validate(&grid)?;
    let n_cells = grid.cell_count();
    let mp = spec.perception_per_cell;
    let mo = spec.opinion_per_cell;

    let mut field_rng = SeededRng::derive(spec.seed, stream::FIELDS);
    let p_base: Vec<f64> = field(&grid, spec.perception_base, &mut field_rng).into_iter().map(quantize_16).collect();
    let o_base: Vec<f64> = field(&grid, spec.opinion_base, &mut field_rng).into_iter().map(f64::round).collect();

    let hotspot_of = |cell: CellIndex| spec.hotspots.iter().find(|h| h.covers(cell));
    let planted_of = |cell: CellIndex| spec.planted.iter().find(|p| p.cells.contains(cell));

    // Per-epoch cell targets: perception score and opinion positive count.
    let mut p_target = [vec![0.0; n_cells], vec![0.0; n_cells]];
    let mut o_positive = [vec![0usize; n_cells], vec![0usize; n_cells]];
    for i in 0..n_cells {
        let cell = grid.cell_at(i);
        let h = hotspot_of(cell);
        for e in 0..2 {
            let dp = h.map_or(0.0, |h| h.perception_delta[e]);
            let doo = h.map_or(0.0, |h| h.opinion_delta[e]);
            let p = p_base[i] + dp;
            if !(0.0..=10.0).contains(&p) {
                return Err(SynthError::Infeasible(format!(
                    "perception score {p} at cell {cell:?} leaves [0, 10]"
                )));
            }
            p_target[e][i] = p;
            let k = ((o_base[i] + doo) * mo as f64 / 10.0).round();
            if !(0.0..=mo as f64).contains(&k) {
                return Err(SynthError::Infeasible(format!(
                    "opinion score {} at cell {cell:?} leaves [0, 10]",
                    o_base[i] + doo
                )));
            }
            o_positive[e][i] = k as usize;
        }
    }

    // Epoch-independent per-slot draws: segments and planted noise.
    let mut seg_rng = SeededRng::derive(spec.seed, stream::SEGMENTS);
    let mut segments = Vec::with_capacity(n_cells * mp);
    let mut planted_noise = Vec::with_capacity(n_cells * mp);
    for i in 0..n_cells {
        let wide = planted_of(grid.cell_at(i)).map_or(Element::Building, |p| p.element);
        for _ in 0..mp {
            let mut s = [0.0; SEGMENT_COUNT];
            for (k, v) in s.iter_mut().enumerate() {
                let hi = if k == wide.index() { WIDE_SEGMENT_MAX } else { NARROW_SEGMENT_MAX };
                *v = hi * seg_rng.unit();
            }
            segments.push(s);
            planted_noise.push(seg_rng.normal());
        }
    }

    let (pos_words, neg_words) = vocabulary(spec.vocabulary_per_class);
    let mut post_rng = SeededRng::derive(spec.seed, stream::POSTS);
    let mut perm_rng = SeededRng::derive(spec.seed, stream::PERMUTATION);
    let mut post_texts = Vec::with_capacity(n_cells * mo);
    let mut ranks = Vec::with_capacity(n_cells * mo);
    for _ in 0..n_cells {
        let mut perm: Vec<usize> = (0..mo).collect();
        perm_rng.shuffle(&mut perm);
        ranks.extend(perm);
        for _ in 0..mo {
            let pos = compose(&pos_words, spec.words_per_post, &mut post_rng);
            let neg = compose(&neg_words, spec.words_per_post, &mut post_rng);
            post_texts.push((pos, neg));
        }
    }

    let mut perception = Vec::with_capacity(2 * n_cells * mp);
    let mut opinion = Vec::with_capacity(2 * n_cells * mo);
    for (e, &epoch) in spec.epochs.iter().enumerate() {
        let mut noise_rng = SeededRng::derive(spec.seed, stream::EPOCH_NOISE + 100 * e as u64);
        let mut jitter_rng = SeededRng::derive(spec.seed, stream::JITTER + 100 * e as u64);
        for i in 0..n_cells {
            let cell = grid.cell_at(i);
            let planted = planted_of(cell);
            for slot in 0..mp {
                let k = i * mp + slot;
                let noise = noise_rng.normal();
                let score = match planted {
                    Some(p) => {
                        eval_cubic(p.coefficients, segments[k][p.element.index()]) + p.sigma * planted_noise[k]
                    }
                    None => p_target[e][i] + spec.epoch_noise * noise,
                };
                perception.push(PerceptionRecord {
                    id: format!("p{epoch}-{i:05}-{slot:02}"),
                    point: jitter(&grid, cell, &mut jitter_rng),
                    epoch,
                    score: score.clamp(0.0, 10.0),
                    segments: segments[k],
                });
            }
            for slot in 0..mo {
                let k = i * mo + slot;
                let (pos, neg) = &post_texts[k];
                let text = if ranks[k] < o_positive[e][i] { pos } else { neg };
                opinion.push(OpinionRecord {
                    id: format!("o{epoch}-{i:05}-{slot:02}"),
                    point: jitter(&grid, cell, &mut jitter_rng),
                    epoch,
                    text: text.clone(),
                    score: None,
                });
            }
        }
    }

    let mut corpus_rng = SeededRng::derive(spec.seed, stream::CORPUS);
    let positive_corpus: Vec<String> = (0..spec.training_docs)
        .map(|_| compose(&pos_words, spec.words_per_post, &mut corpus_rng))
        .collect();
    let negative_corpus: Vec<String> = (0..spec.training_docs)
        .map(|_| compose(&neg_words, spec.words_per_post, &mut corpus_rng))
        .collect();
    let lexicon = Lexicon::new(
        pos_words
            .iter()
            .chain(&neg_words)
            .map(|w| (w.clone(), 10u64))
            .chain(NEUTRAL_WORDS.iter().map(|w| (w.to_string(), 50u64))),
    )?;

    let mut features = vec![zone_feature(
        spec.background_zone,
        json!([[
            [spec.bbox.west, spec.bbox.south],
            [spec.bbox.east, spec.bbox.south],
            [spec.bbox.east, spec.bbox.north],
            [spec.bbox.west, spec.bbox.north],
            [spec.bbox.west, spec.bbox.south],
        ]]),
    )];
    features.extend(spec.planted.iter().map(|p| zone_feature(p.zone, rect_ring(&grid, &p.cells))));
    features.extend(spec.extra_zones.iter().map(|z| zone_feature(z.zone, rect_ring(&grid, &z.cells))));
    let zoning = json!({ "type": "FeatureCollection", "features": features });

    let trend_perception: Vec<f64> = (0..n_cells)
        .map(|i| {
            if planted_of(grid.cell_at(i)).is_some() {
                0.0
            } else {
                p_target[1][i] - p_target[0][i]
            }
        })
        .collect();
    let trend_opinion: Vec<f64> = (0..n_cells)
        .map(|i| (o_positive[1][i] as f64 - o_positive[0][i] as f64) * 10.0 / mo as f64)
        .collect();
    let mismatch: Vec<f64> = normalized(&trend_perception)
        .iter()
        .zip(normalized(&trend_opinion))
        .map(|(p, o)| (p - o).abs() / 2.0)
        .collect();
    let hotspot_cells = (0..n_cells).filter(|&i| mismatch[i] > 1e-12).collect();
    let planted = spec
        .planted
        .iter()
        .map(|p| PlantedTruth {
            zone: p.zone,
            element: p.element,
            coefficients: p.coefficients,
            sigma: p.sigma,
            records_per_epoch: p.cells.cell_count() * mp,
        })
        .collect();

    Ok(Scenario {
        spec: spec.clone(),
        grid,
        perception,
        opinion,
        zoning,
        lexicon,
        positive_corpus,
        negative_corpus,
        stopwords: vec![NEUTRAL_WORDS[1].to_string()],
        answer_key: AnswerKey {
            grid,
            epochs: spec.epochs,
            trend_perception,
            trend_opinion,
            mismatch,
            hotspot_cells,
            planted,
        },
    })
}

/// File names written by [`write_scenario`].
pub mod files {
    pub const PERCEPTION: &str = "perception.jsonl";
    pub const OPINION: &str = "opinion.jsonl";
    pub const ZONING: &str = "zoning.geojson";
    pub const LEXICON: &str = "lexicon.tsv";
    pub const POSITIVE: &str = "positive.txt";
    pub const NEGATIVE: &str = "negative.txt";
    pub const STOPWORDS: &str = "stopwords.txt";
    pub const ANSWER_KEY: &str = "answer_key.json";
    pub const SPEC: &str = "scenario.json";
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), SynthError> {
    fs::write(path, bytes).map_err(|source| SynthError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn lines<I: IntoIterator<Item = String>>(items: I) -> Vec<u8> {
    let mut out = Vec::new();
    for line in items {
        out.extend_from_slice(line.as_bytes());
        out.push(b'\n');
    }
    out
}

fn pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("serializable");
    v.push(b'\n');
    v
}

/// Write the scenario's input files and answer key into `dir`.
pub fn write_scenario(scenario: &Scenario, dir: &Path) -> Result<Vec<PathBuf>, SynthError> {
    fs::create_dir_all(dir).map_err(|source| SynthError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut lexicon = Vec::new();
    scenario
        .lexicon
        .write_to(&mut lexicon)
        .map_err(|source| SynthError::Io {
            path: dir.join(files::LEXICON),
            source,
        })?;
    let outputs: Vec<(&str, Vec<u8>)> = vec![
        (files::PERCEPTION, lines(scenario.perception.iter().map(perception_to_line))),
        (files::OPINION, lines(scenario.opinion.iter().map(opinion_to_line))),
        (files::ZONING, pretty(&scenario.zoning)),
        (files::LEXICON, lexicon),
        (files::POSITIVE, lines(scenario.positive_corpus.iter().cloned())),
        (files::NEGATIVE, lines(scenario.negative_corpus.iter().cloned())),
        (files::STOPWORDS, lines(scenario.stopwords.iter().cloned())),
        (files::ANSWER_KEY, pretty(&scenario.answer_key)),
        (files::SPEC, pretty(&scenario.spec)),
    ];
    let mut written = Vec::new();
    for (name, bytes) in outputs {
        let path = dir.join(name);
        write_file(&path, &bytes)?;
        written.push(path);
    }
    Ok(written)
}
