//! Color ramps, PPM images and GeoJSON export for rasters.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::affectmap::{Raster, RasterKind};

pub type Rgb = [u8; 3];

/// Color for cells with no value.
pub const MISSING_COLOR: Rgb = [200, 200, 200];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenderError {
    #[error("invalid domain [{0}, {1}]: need finite min < max")]
    InvalidDomain(f64, f64),
    #[error("raster has no cells")]
    EmptyRaster,
    #[error("scale must be at least 1")]
    ZeroScale,
    #[error("ramp needs {expected} anchors, got {found}")]
    AnchorCount { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RampKind {
    Sequential,
    Diverging,
    GrayscaleInverted,
}

/// Anchors at parameter 0 and 1, plus 0.5 for diverging ramps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorRamp {
    pub kind: RampKind,
    pub anchors: Vec<Rgb>,
}

impl ColorRamp {
    /// Light to dark blue: darker is more positive.
    pub fn sequential() -> Self {
        Self {
            kind: RampKind::Sequential,
            anchors: vec![[247, 251, 255], [8, 48, 107]],
        }
    }

    /// Red (decrease) through white to blue (increase).
    pub fn diverging() -> Self {
        Self {
            kind: RampKind::Diverging,
            anchors: vec![[178, 24, 43], [255, 255, 255], [33, 102, 172]],
        }
    }

    /// White to black: blacker is more mismatch.
    pub fn grayscale_inverted() -> Self {
        Self {
            kind: RampKind::GrayscaleInverted,
            anchors: vec![[255, 255, 255], [0, 0, 0]],
        }
    }

    pub fn validate(&self) -> Result<(), RenderError> {
        let expected = match self.kind {
            RampKind::Diverging => 3,
            _ => 2,
        };
        if self.anchors.len() != expected {
            return Err(RenderError::AnchorCount {
                expected,
                found: self.anchors.len(),
            });
        }
        Ok(())
    }

    /// Default ramp for a raster kind.
    pub fn for_kind(kind: &RasterKind) -> Self {
        match kind {
            RasterKind::Score { .. } => Self::sequential(),
            RasterKind::Trend { .. } => Self::diverging(),
            RasterKind::Mismatch { .. } => Self::grayscale_inverted(),
        }
    }
}

fn lerp(a: Rgb, b: Rgb, t: f64) -> Rgb {
    let mut out = [0u8; 3];
    for k in 0..3 {
        let v = f64::from(a[k]) + (f64::from(b[k]) - f64::from(a[k])) * t;
        out[k] = v.round().clamp(0.0, 255.0) as u8;
    }
    out
}

/// Color of `value` on `ramp` over `domain = (min, max)`. The value is
/// clamped to the domain; channels are interpolated linearly and rounded half
/// away from zero. Diverging ramps put the domain midpoint on the middle
/// anchor.
pub fn ramp_color(value: f64, ramp: &ColorRamp, domain: (f64, f64)) -> Result<Rgb, RenderError> {
    let (lo, hi) = domain;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(RenderError::InvalidDomain(lo, hi));
    }
    ramp.validate()?;
    let t = ((value.clamp(lo, hi) - lo) / (hi - lo)).clamp(0.0, 1.0);
    Ok(match ramp.kind {
        RampKind::Diverging => {
            if t <= 0.5 {
                lerp(ramp.anchors[0], ramp.anchors[1], t * 2.0)
            } else {
                lerp(ramp.anchors[1], ramp.anchors[2], t * 2.0 - 1.0)
            }
        }
        _ => lerp(ramp.anchors[0], ramp.anchors[1], t),
    })
}

/// Display domain for a raster: scores `[0, 10]`, mismatch `[0, 1]`, and
/// trends `[-m, m]` with `m` the largest absolute trend (`[-1, 1]` if all 0).
pub fn default_domain(raster: &Raster) -> (f64, f64) {
    match raster.kind {
        RasterKind::Trend { .. } => {
            let m = raster.present().map(|(_, v)| v.abs()).fold(0.0, f64::max);
            if m > 0.0 {
                (-m, m)
            } else {
                (-1.0, 1.0)
            }
        }
        kind => kind.domain(),
    }
}

/// RGB pixels, row-major from north to south.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl RenderedImage {
    /// Binary PPM (P6).
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn pixel(&self, x: usize, y: usize) -> Rgb {
        let i = 3 * (y * self.width + x);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }
}

/// One block of `scale × scale` pixels per cell.
pub fn render_raster(
    raster: &Raster,
    ramp: &ColorRamp,
    domain: (f64, f64),
    scale: usize,
) -> Result<RenderedImage, RenderError> {
    if raster.values.is_empty() {
        return Err(RenderError::EmptyRaster);
    }
    if scale == 0 {
        return Err(RenderError::ZeroScale);
    }
    let colors: Vec<Rgb> = raster
        .values
        .iter()
        .map(|v| match v {
            Some(v) => ramp_color(*v, ramp, domain),
            None => Ok(MISSING_COLOR),
        })
        .collect::<Result<_, _>>()?;
    let grid = raster.grid;
    let width = grid.n_cols * scale;
    let height = grid.n_rows * scale;
    let mut pixels = Vec::with_capacity(width * height * 3);
    for row in 0..grid.n_rows {
        let mut line = Vec::with_capacity(width * 3);
        for col in 0..grid.n_cols {
            let c = colors[row * grid.n_cols + col];
            for _ in 0..scale {
                line.extend_from_slice(&c);
            }
        }
        for _ in 0..scale {
            pixels.extend_from_slice(&line);
        }
    }
    Ok(RenderedImage {
        width,
        height,
        pixels,
    })
}

/// Default ramp, default domain, PPM bytes.
pub fn render_ppm(raster: &Raster, scale: usize) -> Result<Vec<u8>, RenderError> {
    let ramp = ColorRamp::for_kind(&raster.kind);
    Ok(render_raster(raster, &ramp, default_domain(raster), scale)?.to_ppm())
}

/// FeatureCollection with one square polygon per present cell.
pub fn export_geojson(raster: &Raster) -> Value {
    let features: Vec<Value> = raster
        .present()
        .map(|(i, v)| {
            let cell = raster.grid.cell_at(i);
            let b = raster.grid.cell_bounds(cell);
            json!({
                "type": "Feature",
                "properties": {
                    "row": cell.row,
                    "col": cell.col,
                    "value": v,
                    "support": raster.support[i],
                },
                "geometry": {
                    "type": "Polygon",
                    "coordinates": [[
                        [b.west, b.south],
                        [b.east, b.south],
                        [b.east, b.north],
                        [b.west, b.north],
                        [b.west, b.south],
                    ]],
                },
            })
        })
        .collect();
    json!({ "type": "FeatureCollection", "features": features })
}
