//! Coordinates, the study grid, point-in-polygon and land-use zone assignment.
//!
//! All geometry is planar in degree space. The study region is small enough
//! (about 0.12° on a side) that cell bucketing needs no projection.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("coordinate out of range: lon {lon}, lat {lat}")]
    CoordinateOutOfRange { lon: f64, lat: f64 },
    #[error("degenerate bounding box: west {west}, south {south}, east {east}, north {north}")]
    DegenerateBox {
        west: f64,
        south: f64,
        east: f64,
        north: f64,
    },
    #[error("cell size must be positive and finite, got {0}")]
    InvalidCellSize(f64),
    #[error("ring {ring} has {vertices} distinct vertices, need at least 3")]
    RingTooShort { ring: usize, vertices: usize },
    #[error("outer ring is self-intersecting")]
    SelfIntersecting,
    #[error("polygon area must be positive, got {0}")]
    NonPositiveArea(f64),
    #[error("unknown zone label {label:?}; expected one of: {}", ZoneLabel::ALL.map(|z| z.as_str()).join(", "))]
    UnknownZone { label: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
}

impl GeoPoint {
    pub fn new(lon: f64, lat: f64) -> Result<Self, GeoError> {
        if !(-180.0..=180.0).contains(&lon) || !(-90.0..=90.0).contains(&lat) {
            return Err(GeoError::CoordinateOutOfRange { lon, lat });
        }
        Ok(Self { lon, lat })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub west: f64,
    pub south: f64,
    pub east: f64,
    pub north: f64,
}

impl BoundingBox {
    /// The Beijing Second Ring study region.
    pub const STUDY_REGION: BoundingBox = BoundingBox {
        west: 116.343615,
        south: 39.868876,
        east: 116.460898,
        north: 39.963175,
    };

    pub fn new(west: f64, south: f64, east: f64, north: f64) -> Result<Self, GeoError> {
        let bbox = Self {
            west,
            south,
            east,
            north,
        };
        bbox.validate()?;
        Ok(bbox)
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        let finite = [self.west, self.south, self.east, self.north]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.west >= self.east || self.south >= self.north {
            return Err(GeoError::DegenerateBox {
                west: self.west,
                south: self.south,
                east: self.east,
                north: self.north,
            });
        }
        Ok(())
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        p.lon >= self.west && p.lon <= self.east && p.lat >= self.south && p.lat <= self.north
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellIndex {
    pub row: usize,
    pub col: usize,
}

/// Uniform lon/lat grid over a bounding box. Row 0 is the northernmost band.
///
/// The last row and column may extend past the box when its extent is not a
/// multiple of the cell size; their usable area is clipped to the box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub bbox: BoundingBox,
    pub cell_size: f64,
    pub n_cols: usize,
    pub n_rows: usize,
}

// Absorbs representation error so exact multiples do not gain a sliver cell.
const CELL_COUNT_SLACK: f64 = 1e-9;

pub fn make_grid(bbox: BoundingBox, cell_size: f64) -> Result<Grid, GeoError> {
    Grid::new(bbox, cell_size)
}

impl Grid {
    pub fn new(bbox: BoundingBox, cell_size: f64) -> Result<Self, GeoError> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(GeoError::InvalidCellSize(cell_size));
        }
        bbox.validate()?;
        let count = |extent: f64| ((extent / cell_size - CELL_COUNT_SLACK).ceil() as usize).max(1);
        Ok(Self {
            bbox,
            cell_size,
            n_cols: count(bbox.east - bbox.west),
            n_rows: count(bbox.north - bbox.south),
        })
    }

    pub fn cell_count(&self) -> usize {
        self.n_cols * self.n_rows
    }

    /// Row-major linear index of a cell.
    pub fn linear(&self, cell: CellIndex) -> usize {
        cell.row * self.n_cols + cell.col
    }

    pub fn cell_at(&self, linear: usize) -> CellIndex {
        CellIndex {
            row: linear / self.n_cols,
            col: linear % self.n_cols,
        }
    }

    /// Cell containing `p`, or `None` when `p` lies outside the bounding box.
    /// Points on the east or south edge belong to the last column or row.
    pub fn locate(&self, p: GeoPoint) -> Option<CellIndex> {
        if !self.bbox.contains(p) {
            return None;
        }
        let col = ((p.lon - self.bbox.west) / self.cell_size).floor() as usize;
        let row = ((self.bbox.north - p.lat) / self.cell_size).floor() as usize;
        Some(CellIndex {
            row: row.min(self.n_rows - 1),
            col: col.min(self.n_cols - 1),
        })
    }

    /// Cell extent clipped to the bounding box, as `(west, south, east, north)`.
    pub fn cell_bounds(&self, cell: CellIndex) -> BoundingBox {
        let west = self.bbox.west + cell.col as f64 * self.cell_size;
        let north = self.bbox.north - cell.row as f64 * self.cell_size;
        BoundingBox {
            west,
            south: (north - self.cell_size).max(self.bbox.south),
            east: (west + self.cell_size).min(self.bbox.east),
            north,
        }
    }

    /// Center of the clipped cell extent.
    pub fn cell_center(&self, cell: CellIndex) -> GeoPoint {
        let b = self.cell_bounds(cell);
        GeoPoint {
            lon: 0.5 * (b.west + b.east),
            lat: 0.5 * (b.south + b.north),
        }
    }

    pub fn locate_in(&self, p: GeoPoint) -> Option<usize> {
        self.locate(p).map(|c| self.linear(c))
    }
}

pub fn locate(grid: &Grid, p: GeoPoint) -> Option<CellIndex> {
    grid.locate(p)
}

/// The ten land-use categories used to district the study area.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ZoneLabel {
    ResidentialAndPublicInfrastructure,
    Industry,
    Storage,
    ExternalTransportation,
    RoadAndPlaza,
    Municipality,
    Green,
    Special,
    WaterAndOthers,
    Road,
}

impl ZoneLabel {
    pub const ALL: [ZoneLabel; 10] = [
        ZoneLabel::ResidentialAndPublicInfrastructure,
        ZoneLabel::Industry,
        ZoneLabel::Storage,
        ZoneLabel::ExternalTransportation,
        ZoneLabel::RoadAndPlaza,
        ZoneLabel::Municipality,
        ZoneLabel::Green,
        ZoneLabel::Special,
        ZoneLabel::WaterAndOthers,
        ZoneLabel::Road,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ZoneLabel::ResidentialAndPublicInfrastructure => "Residential and public Infrastructure",
            ZoneLabel::Industry => "Industry",
            ZoneLabel::Storage => "Storage",
            ZoneLabel::ExternalTransportation => "External Transportation",
            ZoneLabel::RoadAndPlaza => "Road and Plaza",
            ZoneLabel::Municipality => "Municipality",
            ZoneLabel::Green => "Green",
            ZoneLabel::Special => "Special",
            ZoneLabel::WaterAndOthers => "Water and Others",
            ZoneLabel::Road => "Road",
        }
    }
}

impl fmt::Display for ZoneLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ZoneLabel {
    type Err = GeoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ZoneLabel::ALL
            .into_iter()
            .find(|z| z.as_str() == s)
            .ok_or_else(|| GeoError::UnknownZone {
                label: s.to_string(),
            })
    }
}

impl Serialize for ZoneLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for ZoneLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Result of zone assignment. Labeled zones sort before `Unzoned`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Zone {
    Labeled(ZoneLabel),
    Unzoned,
}

impl Zone {
    pub fn as_str(self) -> &'static str {
        match self {
            Zone::Labeled(label) => label.as_str(),
            Zone::Unzoned => "Unzoned",
        }
    }
}

impl fmt::Display for Zone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Zone {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

/// A labeled polygon: first ring is the outer boundary, the rest are holes.
/// Rings are stored open (no repeated closing vertex).
#[derive(Debug, Clone, PartialEq)]
pub struct ZonePolygon {
    label: ZoneLabel,
    rings: Vec<Vec<GeoPoint>>,
    area: f64,
    extent: BoundingBox,
}

impl ZonePolygon {
    pub fn new(label: ZoneLabel, rings: Vec<Vec<GeoPoint>>) -> Result<Self, GeoError> {
        let rings: Vec<Vec<GeoPoint>> = rings.into_iter().map(open_ring).collect();
        if rings.is_empty() {
            return Err(GeoError::RingTooShort {
                ring: 0,
                vertices: 0,
            });
        }
        for (i, ring) in rings.iter().enumerate() {
            if ring.len() < 3 {
                return Err(GeoError::RingTooShort {
                    ring: i,
                    vertices: ring.len(),
                });
            }
        }
        if !ring_is_simple(&rings[0]) {
            return Err(GeoError::SelfIntersecting);
        }
        let outer = shoelace(&rings[0]).abs();
        let holes: f64 = rings[1..].iter().map(|r| shoelace(r).abs()).sum();
        let area = outer - holes;
        if !(area > 0.0) {
            return Err(GeoError::NonPositiveArea(area));
        }
        let extent = rings[0].iter().fold(
            BoundingBox {
                west: f64::INFINITY,
                south: f64::INFINITY,
                east: f64::NEG_INFINITY,
                north: f64::NEG_INFINITY,
            },
            |b, p| BoundingBox {
                west: b.west.min(p.lon),
                south: b.south.min(p.lat),
                east: b.east.max(p.lon),
                north: b.north.max(p.lat),
            },
        );
        Ok(Self {
            label,
            rings,
            area,
            extent,
        })
    }

    pub fn label(&self) -> ZoneLabel {
        self.label
    }

    pub fn rings(&self) -> &[Vec<GeoPoint>] {
        &self.rings
    }

    /// Outer-ring area minus hole areas, in squared degrees.
    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        point_in_polygon(p, self)
    }
}

fn open_ring(mut ring: Vec<GeoPoint>) -> Vec<GeoPoint> {
    if ring.len() > 1 && ring.first() == ring.last() {
        ring.pop();
    }
    ring
}

/// Signed shoelace area of an open ring (counter-clockwise positive).
pub fn shoelace(ring: &[GeoPoint]) -> f64 {
    let n = ring.len();
    let twice: f64 = (0..n)
        .map(|i| {
            let a = ring[i];
            let b = ring[(i + 1) % n];
            a.lon * b.lat - b.lon * a.lat
        })
        .sum();
    0.5 * twice
}

fn cross(o: GeoPoint, a: GeoPoint, b: GeoPoint) -> f64 {
    (a.lon - o.lon) * (b.lat - o.lat) - (a.lat - o.lat) * (b.lon - o.lon)
}

fn on_segment(p: GeoPoint, a: GeoPoint, b: GeoPoint) -> bool {
    let scale = ((b.lon - a.lon).abs() + (b.lat - a.lat).abs())
        * ((p.lon - a.lon).abs() + (p.lat - a.lat).abs());
    if cross(a, b, p).abs() > 1e-12 * scale {
        return false;
    }
    p.lon >= a.lon.min(b.lon)
        && p.lon <= a.lon.max(b.lon)
        && p.lat >= a.lat.min(b.lat)
        && p.lat <= a.lat.max(b.lat)
}

fn segments_intersect(a: GeoPoint, b: GeoPoint, c: GeoPoint, d: GeoPoint) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(a, c, d))
        || (d2 == 0.0 && on_segment(b, c, d))
        || (d3 == 0.0 && on_segment(c, a, b))
        || (d4 == 0.0 && on_segment(d, a, b))
}

fn ring_is_simple(ring: &[GeoPoint]) -> bool {
    let n = ring.len();
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        for j in (i + 1)..n {
            // adjacent edges share a vertex by construction
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            let (c, d) = (ring[j], ring[(j + 1) % n]);
            if segments_intersect(a, b, c, d) {
                return false;
            }
        }
    }
    true
}

/// Even–odd ray casting over all rings, so holes are excluded. Points on any
/// ring boundary count as inside.
pub fn point_in_polygon(p: GeoPoint, poly: &ZonePolygon) -> bool {
    let e = poly.extent;
    if p.lon < e.west || p.lon > e.east || p.lat < e.south || p.lat > e.north {
        return false;
    }
    let mut inside = false;
    for ring in &poly.rings {
        let n = ring.len();
        let mut j = n - 1;
        for i in 0..n {
            let (a, b) = (ring[i], ring[j]);
            if on_segment(p, a, b) {
                return true;
            }
            if (a.lat > p.lat) != (b.lat > p.lat) {
                let x = a.lon + (p.lat - a.lat) * (b.lon - a.lon) / (b.lat - a.lat);
                if p.lon < x {
                    inside = !inside;
                }
            }
            j = i;
        }
    }
    inside
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ZoningSet {
    pub polygons: Vec<ZonePolygon>,
}

impl ZoningSet {
    pub fn new(polygons: Vec<ZonePolygon>) -> Self {
        Self { polygons }
    }

    pub fn len(&self) -> usize {
        self.polygons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.polygons.is_empty()
    }

    pub fn assign(&self, p: GeoPoint) -> Zone {
        assign_zone(p, self)
    }
}

/// Label of the smallest-area polygon containing `p`; ties go to the
/// lexicographically smaller label text. `Unzoned` when nothing contains `p`.
pub fn assign_zone(p: GeoPoint, zones: &ZoningSet) -> Zone {
    zones
        .polygons
        .iter()
        .filter(|poly| point_in_polygon(p, poly))
        .min_by(|a, b| {
            a.area
                .partial_cmp(&b.area)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.label.as_str().cmp(b.label.as_str()))
        })
        .map_or(Zone::Unzoned, |poly| Zone::Labeled(poly.label))
}
