//! Parsing and bookkeeping for the three input datasets.
//!
//! Perception and opinion records arrive as line-delimited JSON. Every line is
//! either accepted or rejected with a reason; nothing is dropped silently.
//! Zoning arrives as a GeoJSON `FeatureCollection`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{self, BufRead};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::geo::{GeoError, GeoPoint, Grid, ZoneLabel, ZonePolygon, ZoningSet};

/// Number of urban element classes in a segment vector.
pub const SEGMENT_COUNT: usize = 17;

/// Urban element classes, in the fixed positional order of segment vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Element {
    Sky,
    Building,
    Green,
    Road,
    Sidewalk,
    Pedestrian,
    Transportation,
    Waterbody,
    Seating,
    Fence,
    SignAndSymbols,
    SignLighting,
    Pole,
    Bicyclist,
    Pot,
    Animal,
    Trash,
}

impl Element {
    pub const ALL: [Element; SEGMENT_COUNT] = [
        Element::Sky,
        Element::Building,
        Element::Green,
        Element::Road,
        Element::Sidewalk,
        Element::Pedestrian,
        Element::Transportation,
        Element::Waterbody,
        Element::Seating,
        Element::Fence,
        Element::SignAndSymbols,
        Element::SignLighting,
        Element::Pole,
        Element::Bicyclist,
        Element::Pot,
        Element::Animal,
        Element::Trash,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Element::Sky => "sky",
            Element::Building => "building",
            Element::Green => "green",
            Element::Road => "road",
            Element::Sidewalk => "sidewalk",
            Element::Pedestrian => "pedestrian",
            Element::Transportation => "transportation",
            Element::Waterbody => "waterbody",
            Element::Seating => "seating",
            Element::Fence => "fence",
            Element::SignAndSymbols => "sign_and_symbols",
            Element::SignLighting => "sign_lighting",
            Element::Pole => "pole",
            Element::Bicyclist => "bicyclist",
            Element::Pot => "pot",
            Element::Animal => "animal",
            Element::Trash => "trash",
        }
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Element {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl std::str::FromStr for Element {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Element::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| format!("unknown element {s:?}"))
    }
}

impl<'de> Deserialize<'de> for Element {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub type Segments = [f64; SEGMENT_COUNT];

#[derive(Debug, Clone, PartialEq)]
pub struct PerceptionRecord {
    pub id: String,
    pub point: GeoPoint,
    pub epoch: i32,
    pub score: f64,
    pub segments: Segments,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpinionRecord {
    pub id: String,
    pub point: GeoPoint,
    pub epoch: i32,
    pub text: String,
    pub score: Option<f64>,
}

/// Shared view over both record kinds for bookkeeping.
pub trait GeoRecord {
    fn id(&self) -> &str;
    fn point(&self) -> GeoPoint;
    fn epoch(&self) -> i32;
}

impl GeoRecord for PerceptionRecord {
    fn id(&self) -> &str {
        &self.id
    }
    fn point(&self) -> GeoPoint {
        self.point
    }
    fn epoch(&self) -> i32 {
        self.epoch
    }
}

impl GeoRecord for OpinionRecord {
    fn id(&self) -> &str {
        &self.id
    }
    fn point(&self) -> GeoPoint {
        self.point
    }
    fn epoch(&self) -> i32 {
        self.epoch
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PerceptionLine {
    id: String,
    lon: f64,
    lat: f64,
    epoch: i32,
    score: f64,
    segments: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct OpinionLine {
    id: String,
    lon: f64,
    lat: f64,
    epoch: i32,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum RejectReason {
    InvalidUtf8,
    EmptyLine,
    Malformed(String),
    EmptyId,
    DuplicateId,
    CoordinateOutOfRange,
    EpochNotDeclared,
    ScoreOutOfRange,
    SegmentArity,
    SegmentOutOfRange,
    SegmentSumExceedsOne,
    EmptyText,
}

impl RejectReason {
    /// Stable key used when tallying reasons.
    pub fn key(&self) -> &'static str {
        match self {
            RejectReason::InvalidUtf8 => "invalid utf-8",
            RejectReason::EmptyLine => "empty line",
            RejectReason::Malformed(_) => "malformed record",
            RejectReason::EmptyId => "empty id",
            RejectReason::DuplicateId => "duplicate id",
            RejectReason::CoordinateOutOfRange => "coordinate out of range",
            RejectReason::EpochNotDeclared => "epoch not declared",
            RejectReason::ScoreOutOfRange => "score out of range",
            RejectReason::SegmentArity => "segment arity",
            RejectReason::SegmentOutOfRange => "segment out of range",
            RejectReason::SegmentSumExceedsOne => "segment sum exceeds 1",
            RejectReason::EmptyText => "empty text",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::Malformed(detail) => write!(f, "malformed record: {detail}"),
            other => f.write_str(other.key()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rejection {
    /// 1-based line number.
    pub line: usize,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Perception,
    Opinion,
}

impl Channel {
    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Perception => "perception",
            Channel::Opinion => "opinion",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestReport {
    pub channel: Channel,
    pub total_lines: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub rejection_reasons: BTreeMap<&'static str, usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub rejections: Vec<Rejection>,
    pub epoch_counts: BTreeMap<i32, usize>,
    /// Fraction of records inside the grid's bounding box; set by [`dataset_stats`].
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bbox_coverage: Option<f64>,
    /// Records-per-cell → number of cells with that many records (occupied cells only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cell_occupancy: Option<BTreeMap<usize, usize>>,
}

impl IngestReport {
    fn empty(channel: Channel) -> Self {
        Self {
            channel,
            total_lines: 0,
            accepted: 0,
            rejected: 0,
            rejection_reasons: BTreeMap::new(),
            rejections: Vec::new(),
            epoch_counts: BTreeMap::new(),
            bbox_coverage: None,
            cell_occupancy: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("failed to read input: {0}")]
    Io(#[from] io::Error),
    #[error("zoning document is not valid JSON: {0}")]
    ZoningJson(#[source] serde_json::Error),
    #[error("zoning document must be a GeoJSON FeatureCollection")]
    NotFeatureCollection,
    #[error("zoning feature {index}: missing string property \"zone\"")]
    MissingZone { index: usize },
    #[error("zoning feature {index}: {source}")]
    InvalidZone {
        index: usize,
        #[source]
        source: GeoError,
    },
    #[error("zoning feature {index}: geometry type {kind:?} is not Polygon or MultiPolygon")]
    NonPolygonGeometry { index: usize, kind: String },
    #[error("zoning feature {index}: malformed coordinates")]
    MalformedCoordinates { index: usize },
}

/// Which epochs are legal. `None` accepts any epoch.
#[derive(Debug, Clone, Default)]
pub struct EpochSet(Option<BTreeSet<i32>>);

impl EpochSet {
    pub fn any() -> Self {
        Self(None)
    }

    pub fn of(epochs: impl IntoIterator<Item = i32>) -> Self {
        Self(Some(epochs.into_iter().collect()))
    }

    pub fn allows(&self, epoch: i32) -> bool {
        self.0.as_ref().is_none_or(|set| set.contains(&epoch))
    }
}

fn read_raw_lines<R: BufRead>(mut reader: R) -> io::Result<Vec<Vec<u8>>> {
    let mut lines = Vec::new();
    let mut buf = Vec::new();
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        if buf.last() == Some(&b'\n') {
            buf.pop();
            if buf.last() == Some(&b'\r') {
                buf.pop();
            }
        }
        lines.push(buf.clone());
    }
    Ok(lines)
}

fn decode_line(raw: &[u8]) -> Result<&str, RejectReason> {
    let text = std::str::from_utf8(raw).map_err(|_| RejectReason::InvalidUtf8)?;
    if text.trim().is_empty() {
        return Err(RejectReason::EmptyLine);
    }
    Ok(text)
}

fn check_common(id: &str, lon: f64, lat: f64, epoch: i32, epochs: &EpochSet) -> Result<GeoPoint, RejectReason> {
    if id.is_empty() {
        return Err(RejectReason::EmptyId);
    }
    let point = GeoPoint::new(lon, lat).map_err(|_| RejectReason::CoordinateOutOfRange)?;
    if !epochs.allows(epoch) {
        return Err(RejectReason::EpochNotDeclared);
    }
    Ok(point)
}

fn check_score(score: f64) -> Result<f64, RejectReason> {
    if (0.0..=10.0).contains(&score) {
        Ok(score)
    } else {
        Err(RejectReason::ScoreOutOfRange)
    }
}

/// Per-line validation of a perception record.
pub fn parse_perception_line(line: &str, epochs: &EpochSet) -> Result<PerceptionRecord, RejectReason> {
    let raw: PerceptionLine =
        serde_json::from_str(line).map_err(|e| RejectReason::Malformed(e.to_string()))?;
    let point = check_common(&raw.id, raw.lon, raw.lat, raw.epoch, epochs)?;
    let score = check_score(raw.score)?;
    let segments = crate::percept::validate_segments(&raw.segments).map_err(|e| match e {
        crate::percept::SegmentError::Arity(_) => RejectReason::SegmentArity,
        crate::percept::SegmentError::OutOfRange { .. } => RejectReason::SegmentOutOfRange,
        crate::percept::SegmentError::SumExceedsOne(_) => RejectReason::SegmentSumExceedsOne,
    })?;
    Ok(PerceptionRecord {
        id: raw.id,
        point,
        epoch: raw.epoch,
        score,
        segments,
    })
}

/// Per-line validation of an opinion record.
pub fn parse_opinion_line(line: &str, epochs: &EpochSet) -> Result<OpinionRecord, RejectReason> {
    let raw: OpinionLine =
        serde_json::from_str(line).map_err(|e| RejectReason::Malformed(e.to_string()))?;
    let point = check_common(&raw.id, raw.lon, raw.lat, raw.epoch, epochs)?;
    if raw.text.trim().is_empty() {
        return Err(RejectReason::EmptyText);
    }
    let score = raw.score.map(check_score).transpose()?;
    Ok(OpinionRecord {
        id: raw.id,
        point,
        epoch: raw.epoch,
        text: raw.text,
        score,
    })
}

// Lines validate independently (in parallel); duplicate resolution then walks
// the results in input order so the first occurrence always wins.
fn parse_records<T, F>(
    lines: Vec<Vec<u8>>,
    channel: Channel,
    parse: F,
) -> (Vec<T>, IngestReport)
where
    T: GeoRecord + Send,
    F: Fn(&str) -> Result<T, RejectReason> + Sync,
{
    let parsed: Vec<Result<T, RejectReason>> = lines
        .par_iter()
        .map(|raw| decode_line(raw).and_then(&parse))
        .collect();

    let mut report = IngestReport::empty(channel);
    report.total_lines = parsed.len();
    let mut seen: HashSet<String> = HashSet::new();
    let mut records = Vec::new();
    for (i, result) in parsed.into_iter().enumerate() {
        let outcome = result.and_then(|rec| {
            if seen.insert(rec.id().to_string()) {
                Ok(rec)
            } else {
                Err(RejectReason::DuplicateId)
            }
        });
        match outcome {
            Ok(rec) => {
                *report.epoch_counts.entry(rec.epoch()).or_default() += 1;
                records.push(rec);
            }
            Err(reason) => {
                *report.rejection_reasons.entry(reason.key()).or_default() += 1;
                report.rejections.push(Rejection { line: i + 1, reason });
            }
        }
    }
    report.accepted = records.len();
    report.rejected = report.rejections.len();
    (records, report)
}

pub fn parse_perception<R: BufRead>(
    reader: R,
    epochs: &EpochSet,
) -> Result<(Vec<PerceptionRecord>, IngestReport), IngestError> {
    let lines = read_raw_lines(reader)?;
    Ok(parse_records(lines, Channel::Perception, |l| parse_perception_line(l, epochs)))
}

pub fn parse_opinion<R: BufRead>(
    reader: R,
    epochs: &EpochSet,
) -> Result<(Vec<OpinionRecord>, IngestReport), IngestError> {
    let lines = read_raw_lines(reader)?;
    Ok(parse_records(lines, Channel::Opinion, |l| parse_opinion_line(l, epochs)))
}

/// One JSON line for a perception record (no trailing newline).
pub fn perception_to_line(rec: &PerceptionRecord) -> String {
    let line = PerceptionLine {
        id: rec.id.clone(),
        lon: rec.point.lon,
        lat: rec.point.lat,
        epoch: rec.epoch,
        score: rec.score,
        segments: rec.segments.to_vec(),
    };
    serde_json::to_string(&line).expect("finite fields serialize")
}

/// One JSON line for an opinion record (no trailing newline).
pub fn opinion_to_line(rec: &OpinionRecord) -> String {
    let line = OpinionLine {
        id: rec.id.clone(),
        lon: rec.point.lon,
        lat: rec.point.lat,
        epoch: rec.epoch,
        text: rec.text.clone(),
        score: rec.score,
    };
    serde_json::to_string(&line).expect("finite fields serialize")
}

fn parse_position(v: &Value) -> Option<GeoPoint> {
    let pair = v.as_array()?;
    if pair.len() < 2 {
        return None;
    }
    GeoPoint::new(pair[0].as_f64()?, pair[1].as_f64()?).ok()
}

fn parse_rings(v: &Value) -> Option<Vec<Vec<GeoPoint>>> {
    v.as_array()?
        .iter()
        .map(|ring| ring.as_array()?.iter().map(parse_position).collect())
        .collect()
}

/// Parse a GeoJSON FeatureCollection of labeled land-use polygons.
/// A MultiPolygon becomes one [`ZonePolygon`] per part, all sharing the label.
pub fn parse_zoning(document: &str) -> Result<ZoningSet, IngestError> {
    let doc: Value = serde_json::from_str(document).map_err(IngestError::ZoningJson)?;
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(IngestError::NotFeatureCollection);
    }
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or(IngestError::NotFeatureCollection)?;

    let mut polygons = Vec::new();
    for (index, feature) in features.iter().enumerate() {
        let label_text = feature
            .pointer("/properties/zone")
            .and_then(Value::as_str)
            .ok_or(IngestError::MissingZone { index })?;
        let label: ZoneLabel = label_text
            .parse()
            .map_err(|source| IngestError::InvalidZone { index, source })?;
        let geometry = feature.get("geometry").ok_or(IngestError::NonPolygonGeometry {
            index,
            kind: "null".into(),
        })?;
        let kind = geometry.get("type").and_then(Value::as_str).unwrap_or("null");
        let coords = geometry.get("coordinates");
        let parts: Vec<Vec<Vec<GeoPoint>>> = match kind {
            "Polygon" => vec![coords
                .and_then(parse_rings)
                .ok_or(IngestError::MalformedCoordinates { index })?],
            "MultiPolygon" => coords
                .and_then(Value::as_array)
                .and_then(|parts| parts.iter().map(parse_rings).collect())
                .ok_or(IngestError::MalformedCoordinates { index })?,
            other => {
                return Err(IngestError::NonPolygonGeometry {
                    index,
                    kind: other.to_string(),
                })
            }
        };
        for rings in parts {
            let poly = ZonePolygon::new(label, rings)
                .map_err(|source| IngestError::InvalidZone { index, source })?;
            polygons.push(poly);
        }
    }
    Ok(ZoningSet::new(polygons))
}

/// Per-epoch counts, bounding-box coverage and the cell occupancy histogram.
pub fn dataset_stats<R: GeoRecord>(records: &[R], grid: &Grid, channel: Channel) -> IngestReport {
    let mut report = IngestReport::empty(channel);
    report.total_lines = records.len();
    report.accepted = records.len();
    let mut per_cell: BTreeMap<usize, usize> = BTreeMap::new();
    let mut inside = 0usize;
    for rec in records {
        *report.epoch_counts.entry(rec.epoch()).or_default() += 1;
        if let Some(cell) = grid.locate_in(rec.point()) {
            inside += 1;
            *per_cell.entry(cell).or_default() += 1;
        }
    }
    let mut occupancy = BTreeMap::new();
    for count in per_cell.values() {
        *occupancy.entry(*count).or_default() += 1;
    }
    report.bbox_coverage = Some(if records.is_empty() {
        0.0
    } else {
        inside as f64 / records.len() as f64
    });
    report.cell_occupancy = Some(occupancy);
    report
}
