//! Straight-corridor road maps and the map-matching constraint.
//!
//! A road is a centerline segment with a half-width. A corrected vehicle
//! position is compatible with the map when it lies inside at least one
//! corridor. [`RoadMap::constraint_likelihood`] grades positions outside every
//! corridor with a Gaussian falloff in the distance to the nearest corridor
//! edge so that particle weights degrade smoothly.

use std::fmt::Write as _;
use std::path::Path;

use crate::{Error, Result, Vec2};

/// Default likelihood falloff outside a corridor, meters.
pub const DEFAULT_SOFTNESS: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct RoadSegment {
    start: Vec2,
    end: Vec2,
    half_width: f64,
}

impl RoadSegment {
    pub fn new(start: Vec2, end: Vec2, half_width: f64) -> Result<Self> {
        if !(start.iter().chain(end.iter()).all(|v| v.is_finite())) {
            return Err(Error::InvalidSegment("non-finite endpoint".into()));
        }
        if (end - start).norm() <= 0.0 {
            return Err(Error::InvalidSegment(format!(
                "zero-length segment at ({}, {})",
                start.x, start.y
            )));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidSegment(format!(
                "half_width must be positive, got {half_width}"
            )));
        }
        Ok(Self {
            start,
            end,
            half_width,
        })
    }

    pub fn start(&self) -> Vec2 {
        self.start
    }

    pub fn end(&self) -> Vec2 {
        self.end
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn length(&self) -> f64 {
        (self.end - self.start).norm()
    }

    /// Heading of the centerline, radians in (-pi, pi].
    pub fn heading(&self) -> f64 {
        let d = self.end - self.start;
        d.y.atan2(d.x)
    }

    /// Distance from `p` to the centerline, clamped to the segment extent.
    pub fn centerline_distance(&self, p: Vec2) -> f64 {
        let d = self.end - self.start;
        let s = ((p - self.start).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
        (p - (self.start + d * s)).norm()
    }

    /// Distance from `p` to the corridor, zero inside.
    pub fn corridor_distance(&self, p: Vec2) -> f64 {
        (self.centerline_distance(p) - self.half_width).max(0.0)
    }

    /// Point at fraction `s` along the centerline with lateral offset `lateral`
    /// (positive to the left of the heading).
    pub fn point_at(&self, s: f64, lateral: f64) -> Vec2 {
        let d = self.end - self.start;
        let n = Vec2::new(-d.y, d.x) / d.norm();
        self.start + d * s + n * lateral
    }

    fn translated(&self, by: Vec2) -> Self {
        Self {
            start: self.start + by,
            end: self.end + by,
            half_width: self.half_width,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoadMap {
    segments: Vec<RoadSegment>,
}

impl RoadMap {
    pub fn new(segments: Vec<RoadSegment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::EmptyMap);
        }
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[RoadSegment] {
        &self.segments
    }

    pub fn point_on_road(&self, p: Vec2) -> bool {
        self.segments
            .iter()
            .any(|s| s.centerline_distance(p) <= s.half_width)
    }

    /// Distance from `p` to the nearest corridor; zero when on the road.
    pub fn distance_to_road(&self, p: Vec2) -> f64 {
        nearest_corridor(self.segments.iter(), p)
    }

    /// Map-matching weight of a corrected position, in `[0, 1]`.
    ///
    /// With `softness == 0` this is the indicator of [`RoadMap::point_on_road`].
    pub fn constraint_likelihood(&self, p: Vec2, softness: f64) -> f64 {
        likelihood_from_distance(self.distance_to_road(p), softness)
    }

    /// Restricts the map to segments whose corridor passes within `radius` of
    /// `center`. Likelihood evaluations for points within `radius - r` of
    /// `center` are unchanged as long as the nearest corridor is closer than
    /// `r`; the filter uses this to avoid scanning the whole map per particle.
    pub fn local(&self, center: Vec2, radius: f64) -> LocalRoads<'_> {
        LocalRoads {
            segments: self
                .segments
                .iter()
                .filter(|s| s.corridor_distance(center) <= radius)
                .collect(),
        }
    }

    /// Length-weighted histogram of undirected headings over `[0, 180)` degrees.
    pub fn road_angle_histogram(&self, bins: usize) -> Result<Vec<f64>> {
        if bins == 0 {
            return Err(Error::InvalidInput("histogram needs at least one bin".into()));
        }
        let mut hist = vec![0.0; bins];
        let width = 180.0 / bins as f64;
        for s in &self.segments {
            let deg = s.heading().to_degrees().rem_euclid(180.0);
            let bin = ((deg / width) as usize).min(bins - 1);
            hist[bin] += s.length();
        }
        Ok(hist)
    }

    pub fn translated(&self, by: Vec2) -> Self {
        Self {
            segments: self.segments.iter().map(|s| s.translated(by)).collect(),
        }
    }

    /// Parses `x1 y1 x2 y2 half_width` rows; `#` starts a comment.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut segments = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            segments.push(parse_segment_row(line).map_err(|m| Error::parse(origin, lineno + 1, m))?);
        }
        if segments.is_empty() {
            return Err(Error::EmptyMap);
        }
        Ok(Self { segments })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# x1 y1 x2 y2 half_width\n");
        for s in &self.segments {
            let _ = writeln!(
                out,
                "{} {} {} {} {}",
                s.start.x, s.start.y, s.end.x, s.end.y, s.half_width
            );
        }
        out
    }
}

pub(crate) fn parse_segment_row(line: &str) -> std::result::Result<RoadSegment, String> {
    let vals = line
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| format!("bad number `{t}`")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if vals.len() != 5 {
        return Err(format!("expected 5 columns, found {}", vals.len()));
    }
    RoadSegment::new(
        Vec2::new(vals[0], vals[1]),
        Vec2::new(vals[2], vals[3]),
        vals[4],
    )
    .map_err(|e| e.to_string())
}

/// Subset of a [`RoadMap`] relevant to one neighborhood.
#[derive(Clone, Debug)]
pub struct LocalRoads<'a> {
    segments: Vec<&'a RoadSegment>,
}

impl LocalRoads<'_> {
    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn constraint_likelihood(&self, p: Vec2, softness: f64) -> f64 {
        likelihood_from_distance(nearest_corridor(self.segments.iter().copied(), p), softness)
    }
}

fn nearest_corridor<'a>(segments: impl Iterator<Item = &'a RoadSegment>, p: Vec2) -> f64 {
    let mut best = f64::INFINITY;
    for s in segments {
        let d = s.corridor_distance(p);
        if d == 0.0 {
            return 0.0;
        }
        best = best.min(d);
    }
    best
}

fn likelihood_from_distance(d: f64, softness: f64) -> f64 {
    if d <= 0.0 {
        1.0
    } else if softness <= 0.0 || !d.is_finite() {
        0.0
    } else {
        (-d * d / (2.0 * softness * softness)).exp()
    }
}
