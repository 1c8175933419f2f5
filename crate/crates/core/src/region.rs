//! Region selection on the gaze plot.
//!
//! Plot points live in the unit disk. [`PlotIndex`] buckets them into a
//! uniform grid over `[-1, 1]^2` and answers rectangle and polygon queries;
//! small plots are scanned linearly. Containment is boundary-inclusive with
//! a tolerance of [`CONTAINMENT_EPSILON`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, FieldError, Result};
use crate::geometry::{project_to_plane, PlanePoint};
use crate::session::{extract_positive_intervals, frame_to_ms, PositiveInterval, Session};

pub const CONTAINMENT_EPSILON: f64 = 1e-12;
pub const DEFAULT_GRID_RESOLUTION: usize = 64;
/// Plots with fewer points than this are scanned linearly.
pub const BRUTE_FORCE_BELOW: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RegionQuery {
    Rectangle {
        u_min: f64,
        u_max: f64,
        v_min: f64,
        v_max: f64,
    },
    Polygon { vertices: Vec<[f64; 2]> },
}

impl RegionQuery {
    pub fn validate(&self) -> Result<()> {
        match self {
            RegionQuery::Rectangle {
                u_min,
                u_max,
                v_min,
                v_max,
            } => {
                let mut errs = Vec::new();
                if [u_min, u_max, v_min, v_max].iter().any(|x| !x.is_finite()) {
                    errs.push(FieldError::new("shape", "rectangle bounds must be finite"));
                }
                if u_min > u_max {
                    errs.push(FieldError::new("u_min", "must not exceed u_max"));
                }
                if v_min > v_max {
                    errs.push(FieldError::new("v_min", "must not exceed v_max"));
                }
                if errs.is_empty() {
                    Ok(())
                } else {
                    Err(Error::Validation(errs))
                }
            }
            RegionQuery::Polygon { vertices } => validate_polygon(vertices),
        }
    }

    /// `(u_min, u_max, v_min, v_max)` of the region.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        match self {
            RegionQuery::Rectangle {
                u_min,
                u_max,
                v_min,
                v_max,
            } => (*u_min, *u_max, *v_min, *v_max),
            RegionQuery::Polygon { vertices } => vertices.iter().fold(
                (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
                |(a, b, c, d), &[u, v]| (a.min(u), b.max(u), c.min(v), d.max(v)),
            ),
        }
    }

    pub fn contains(&self, p: PlanePoint) -> bool {
        match self {
            RegionQuery::Rectangle {
                u_min,
                u_max,
                v_min,
                v_max,
            } => {
                p.u >= u_min - CONTAINMENT_EPSILON
                    && p.u <= u_max + CONTAINMENT_EPSILON
                    && p.v >= v_min - CONTAINMENT_EPSILON
                    && p.v <= v_max + CONTAINMENT_EPSILON
            }
            RegionQuery::Polygon { vertices } => polygon_contains(vertices, p),
        }
    }
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn on_segment(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

fn segments_intersect(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let (o1, o2, o3, o4) = (orient(a, b, c), orient(a, b, d), orient(c, d, a), orient(c, d, b));
    if ((o1 > 0.0 && o2 < 0.0) || (o1 < 0.0 && o2 > 0.0))
        && ((o3 > 0.0 && o4 < 0.0) || (o3 < 0.0 && o4 > 0.0))
    {
        return true;
    }
    (o1 == 0.0 && on_segment(a, b, c))
        || (o2 == 0.0 && on_segment(a, b, d))
        || (o3 == 0.0 && on_segment(c, d, a))
        || (o4 == 0.0 && on_segment(c, d, b))
}

/// At least three finite vertices, no zero-length edges, no crossings or
/// touching between non-adjacent edges, and no folding back along an edge.
fn validate_polygon(vertices: &[[f64; 2]]) -> Result<()> {
    let invalid = |msg: String| Err(Error::invalid("vertices", msg));
    let n = vertices.len();
    if n < 3 {
        return invalid(format!("polygon needs at least 3 vertices, got {n}"));
    }
    if vertices.iter().flatten().any(|x| !x.is_finite()) {
        return invalid("polygon vertices must be finite".into());
    }
    let edge = |i: usize| (vertices[i], vertices[(i + 1) % n]);
    for i in 0..n {
        let (a, b) = edge(i);
        if a == b {
            return invalid(format!("edge {i} has zero length"));
        }
        let (_, c) = edge((i + 1) % n);
        // adjacent edges a-b, b-c must not overlap
        if orient(a, b, c) == 0.0 {
            let dot = (b[0] - a[0]) * (c[0] - b[0]) + (b[1] - a[1]) * (c[1] - b[1]);
            if dot < 0.0 {
                return invalid(format!("edges {i} and {} overlap", (i + 1) % n));
            }
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            let (a, b) = edge(i);
            let (c, d) = edge(j);
            if segments_intersect(a, b, c, d) {
                return invalid(format!("polygon is not simple: edges {i} and {j} intersect"));
            }
        }
    }
    Ok(())
}

fn distance_to_segment(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a[0] + t * dx, a[1] + t * dy);
    ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt()
}

fn polygon_contains(vertices: &[[f64; 2]], p: PlanePoint) -> bool {
    let q = [p.u, p.v];
    let n = vertices.len();
    let mut inside = false;
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        if distance_to_segment(a, b, q) <= CONTAINMENT_EPSILON {
            return true;
        }
        if (a[1] > q[1]) != (b[1] > q[1]) {
            let x = a[0] + (q[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if q[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// One point of the gaze plot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub frame: usize,
    pub u: f64,
    pub v: f64,
    pub face: bool,
}

impl PlotPoint {
    pub fn plane(&self) -> PlanePoint {
        PlanePoint { u: self.u, v: self.v }
    }
}

/// Projects every frame of the session; untrusted frames only on request.
pub fn plot_points(session: &Session, include_untrusted: bool) -> Result<Vec<PlotPoint>> {
    session
        .predictions
        .iter()
        .filter(|p| include_untrusted || p.is_trusted())
        .map(|p| {
            let q = project_to_plane(p.direction()?);
            Ok(PlotPoint {
                frame: p.frame,
                u: q.u,
                v: q.v,
                face: p.face_detected,
            })
        })
        .collect()
}

/// Uniform-grid index over plot points.
#[derive(Debug, Clone)]
pub struct PlotIndex {
    points: Vec<PlotPoint>,
    resolution: usize,
    /// Point indices grouped by cell; cell `c` owns `entries[starts[c]..starts[c + 1]]`.
    starts: Vec<usize>,
    entries: Vec<usize>,
}

impl PlotIndex {
    pub fn new(points: Vec<PlotPoint>) -> Self {
        Self::with_resolution(points, DEFAULT_GRID_RESOLUTION)
    }

    pub fn with_resolution(points: Vec<PlotPoint>, resolution: usize) -> Self {
        let resolution = resolution.max(1);
        let cells = resolution * resolution;
        let cell_of: Vec<usize> = points
            .iter()
            .map(|p| {
                let (cu, cv) = (cell(p.u, resolution), cell(p.v, resolution));
                cv * resolution + cu
            })
            .collect();
        let mut starts = vec![0usize; cells + 1];
        for &c in &cell_of {
            starts[c + 1] += 1;
        }
        for c in 0..cells {
            starts[c + 1] += starts[c];
        }
        let mut fill = starts.clone();
        let mut entries = vec![0usize; points.len()];
        for (i, &c) in cell_of.iter().enumerate() {
            entries[fill[c]] = i;
            fill[c] += 1;
        }
        Self {
            points,
            resolution,
            starts,
            entries,
        }
    }

    pub fn points(&self) -> &[PlotPoint] {
        &self.points
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// Sorted frames whose point lies in the region.
    pub fn query(&self, region: &RegionQuery) -> Vec<usize> {
        if self.points.len() < BRUTE_FORCE_BELOW {
            return self.scan(region);
        }
        self.grid_query(region)
    }

    /// Linear scan over all points.
    pub fn scan(&self, region: &RegionQuery) -> Vec<usize> {
        let mut frames: Vec<usize> = self
            .points
            .iter()
            .filter(|p| region.contains(p.plane()))
            .map(|p| p.frame)
            .collect();
        frames.sort_unstable();
        frames
    }

    /// Grid lookup regardless of plot size.
    pub fn grid_query(&self, region: &RegionQuery) -> Vec<usize> {
        let (u0, u1, v0, v1) = region.bounds();
        let e = CONTAINMENT_EPSILON;
        if u0 - e > 1.0 || u1 + e < -1.0 || v0 - e > 1.0 || v1 + e < -1.0 {
            return Vec::new();
        }
        let r = self.resolution;
        let (cu0, cu1) = (cell(u0 - e, r), cell(u1 + e, r));
        let (cv0, cv1) = (cell(v0 - e, r), cell(v1 + e, r));
        let mut frames = Vec::new();
        for cv in cv0..=cv1 {
            for cu in cu0..=cu1 {
                let c = cv * r + cu;
                for &i in &self.entries[self.starts[c]..self.starts[c + 1]] {
                    let p = self.points[i];
                    if region.contains(p.plane()) {
                        frames.push(p.frame);
                    }
                }
            }
        }
        frames.sort_unstable();
        frames
    }
}

fn cell(x: f64, resolution: usize) -> usize {
    let scaled = ((x + 1.0) / 2.0 * resolution as f64).floor();
    if scaled.is_nan() || scaled < 0.0 {
        0
    } else {
        (scaled as usize).min(resolution - 1)
    }
}

/// Frames selected by a region, as highlight ranges and as times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionQueryResult {
    pub frames: Vec<usize>,
    pub highlight_ranges: Vec<PositiveInterval>,
    /// Half-open `[start_ms, end_ms)` per highlight range.
    pub time_ranges_ms: Vec<[u64; 2]>,
}

pub fn region_query(
    index: &PlotIndex,
    region: &RegionQuery,
    frame_count: usize,
    fps: f64,
) -> Result<RegionQueryResult> {
    region.validate()?;
    let frames = index.query(region);
    let mut member = vec![false; frame_count];
    for &f in &frames {
        if f >= frame_count {
            return Err(Error::domain(format!(
                "plot frame {f} beyond session length {frame_count}"
            )));
        }
        member[f] = true;
    }
    let highlight_ranges = extract_positive_intervals(&member);
    let time_ranges_ms = highlight_ranges
        .iter()
        .map(|iv| [frame_to_ms(iv.start, fps), frame_to_ms(iv.end + 1, fps)])
        .collect();
    Ok(RegionQueryResult {
        frames,
        highlight_ranges,
        time_ranges_ms,
    })
}
