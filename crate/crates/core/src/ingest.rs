//! Trajectory and lane-geometry ingestion, map matching and trail cutting.
//!
//! Trails are fixed windows of [`TRAIL_LEN`] grid points. A lane-change
//! trail ends on the first step whose matched lane differs from the one
//! before it, with all earlier steps in a single lane. Lane-keep trails are
//! non-overlapping constant-lane windows that do not touch a lane-change
//! window of the same vehicle.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, STEP_SECONDS, TRAIL_LEN};

const GRID_TOLERANCE: f64 = 1e-6;

/// Off-road limit as a multiple of the widest lane.
pub const OFF_ROAD_FACTOR: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntentionLabel {
    ChangeLeft,
    ChangeRight,
    Keep,
}

impl IntentionLabel {
    pub const ALL: [IntentionLabel; 3] = [
        IntentionLabel::ChangeLeft,
        IntentionLabel::ChangeRight,
        IntentionLabel::Keep,
    ];

    /// 1-based intention code: 1 = left, 2 = right, 3 = keep.
    pub fn code(self) -> u8 {
        self.index() as u8 + 1
    }

    /// 0-based position in [`IntentionLabel::ALL`].
    pub fn index(self) -> usize {
        match self {
            IntentionLabel::ChangeLeft => 0,
            IntentionLabel::ChangeRight => 1,
            IntentionLabel::Keep => 2,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            IntentionLabel::ChangeLeft => "change_left",
            IntentionLabel::ChangeRight => "change_right",
            IntentionLabel::Keep => "keep",
        }
    }
}

impl fmt::Display for IntentionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for IntentionLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "change_left" | "1" => Ok(IntentionLabel::ChangeLeft),
            "change_right" | "2" => Ok(IntentionLabel::ChangeRight),
            "keep" | "3" => Ok(IntentionLabel::Keep),
            other => Err(Error::Config(format!("unknown intention label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub vehicle_id: String,
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

/// All points of one vehicle, strictly increasing in time.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleTrack {
    pub vehicle_id: String,
    pub points: Vec<TrajectoryPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaneGeometry {
    pub lane_id: i64,
    centerline: Vec<(f64, f64)>,
    pub width: f64,
}

/// Perpendicular-foot projection of a point onto a lane centerline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Arclength of the foot along the centerline.
    pub station: f64,
    /// Signed lateral offset, positive to the left of the travel direction.
    pub offset: f64,
    /// Centerline tangent direction at the foot, radians.
    pub heading: f64,
    /// Euclidean distance to the foot.
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneMatch {
    /// Index into the lane list passed to [`map_match`].
    pub lane: usize,
    pub station: f64,
    pub offset: f64,
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trail {
    pub vehicle_id: String,
    pub points: Vec<TrajectoryPoint>,
    pub matches: Vec<LaneMatch>,
    pub label: IntentionLabel,
}

impl LaneGeometry {
    pub fn new(lane_id: i64, centerline: Vec<(f64, f64)>, width: f64) -> Result<Self> {
        if centerline.len() < 2 {
            return Err(Error::Lane(format!("lane {lane_id} has fewer than 2 points")));
        }
        if !(width > 0.0) {
            return Err(Error::Lane(format!("lane {lane_id} has non-positive width")));
        }
        for pair in centerline.windows(2) {
            if pair[0] == pair[1] {
                return Err(Error::Lane(format!(
                    "lane {lane_id} repeats point ({}, {})",
                    pair[0].0, pair[0].1
                )));
            }
        }
        Ok(Self {
            lane_id,
            centerline,
            width,
        })
    }

    pub fn centerline(&self) -> &[(f64, f64)] {
        &self.centerline
    }

    pub fn project(&self, x: f64, y: f64) -> Projection {
        let mut best: Option<Projection> = None;
        let mut walked = 0.0;
        for seg in self.centerline.windows(2) {
            let (ax, ay) = seg[0];
            let (bx, by) = seg[1];
            let (dx, dy) = (bx - ax, by - ay);
            let len = dx.hypot(dy);
            let (ux, uy) = (dx / len, dy / len);
            let (rx, ry) = (x - ax, y - ay);
            let along = (rx * ux + ry * uy).clamp(0.0, len);
            let (fx, fy) = (ax + ux * along, ay + uy * along);
            let distance = (x - fx).hypot(y - fy);
            let cross = ux * ry - uy * rx;
            let candidate = Projection {
                station: walked + along,
                offset: if cross >= 0.0 { distance } else { -distance },
                heading: uy.atan2(ux),
                distance,
            };
            if best.map_or(true, |b| candidate.distance < b.distance) {
                best = Some(candidate);
            }
            walked += len;
        }
        best.expect("centerline has at least one segment")
    }
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn field<T: FromStr>(record: &csv::StringRecord, index: usize, name: &str) -> Result<T> {
    let raw = record.get(index).ok_or_else(|| Error::Parse {
        line: line_of(record),
        message: format!("missing field {name}"),
    })?;
    raw.trim().parse().map_err(|_| Error::Parse {
        line: line_of(record),
        message: format!("cannot parse {name} from {raw:?}"),
    })
}

fn check_header(reader: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<()> {
    let header = reader.headers()?;
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names != expected {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {}, found {}", expected.join(","), names.join(",")),
        });
    }
    Ok(())
}

fn csv_reader<R: Read>(source: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(source)
}

/// Parse a `vehicle_id,t,x,y` CSV into per-vehicle tracks ordered by id.
pub fn parse_trajectories<R: Read>(source: R) -> Result<Vec<VehicleTrack>> {
    let mut reader = csv_reader(source);
    check_header(&mut reader, &["vehicle_id", "t", "x", "y"])?;
    let mut tracks: BTreeMap<String, Vec<TrajectoryPoint>> = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        if record.len() != 4 {
            return Err(Error::Parse {
                line: line_of(&record),
                message: format!("expected 4 fields, found {}", record.len()),
            });
        }
        let vehicle_id = record[0].trim().to_string();
        let point = TrajectoryPoint {
            t: field(&record, 1, "t")?,
            x: field(&record, 2, "x")?,
            y: field(&record, 3, "y")?,
            vehicle_id: vehicle_id.clone(),
        };
        if !(point.t.is_finite() && point.x.is_finite() && point.y.is_finite()) {
            return Err(Error::Parse {
                line: line_of(&record),
                message: "non-finite value".into(),
            });
        }
        let points = tracks.entry(vehicle_id.clone()).or_default();
        if let Some(prev) = points.last() {
            if point.t <= prev.t {
                return Err(Error::NonMonotoneTime {
                    vehicle: vehicle_id,
                    t: point.t,
                });
            }
        }
        points.push(point);
    }
    Ok(tracks
        .into_iter()
        .map(|(vehicle_id, points)| VehicleTrack { vehicle_id, points })
        .collect())
}

/// Parse a `lane_id,seq,x,y` CSV. Lanes come back ordered by id, each
/// centerline ordered by `seq`.
pub fn parse_lanes<R: Read>(source: R, lane_width: f64) -> Result<Vec<LaneGeometry>> {
    let mut reader = csv_reader(source);
    check_header(&mut reader, &["lane_id", "seq", "x", "y"])?;
    let mut raw: BTreeMap<i64, Vec<(i64, f64, f64)>> = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let lane_id: i64 = field(&record, 0, "lane_id")?;
        let seq: i64 = field(&record, 1, "seq")?;
        let x: f64 = field(&record, 2, "x")?;
        let y: f64 = field(&record, 3, "y")?;
        raw.entry(lane_id).or_default().push((seq, x, y));
    }
    raw.into_iter()
        .map(|(lane_id, mut pts)| {
            pts.sort_by_key(|p| p.0);
            LaneGeometry::new(lane_id, pts.into_iter().map(|(_, x, y)| (x, y)).collect(), lane_width)
        })
        .collect()
}

/// Match a position to the lane with the nearest centerline.
pub fn map_match(x: f64, y: f64, lanes: &[LaneGeometry]) -> Result<LaneMatch> {
    if lanes.is_empty() {
        return Err(Error::Lane("no lanes".into()));
    }
    let limit = OFF_ROAD_FACTOR * lanes.iter().map(|l| l.width).fold(0.0, f64::max);
    let (lane, proj) = lanes
        .iter()
        .map(|l| l.project(x, y))
        .enumerate()
        .fold(None::<(usize, Projection)>, |best, (i, p)| match best {
            Some((_, b)) if b.distance <= p.distance => best,
            _ => Some((i, p)),
        })
        .expect("lanes nonempty");
    if proj.distance > limit {
        return Err(Error::OffRoad {
            x,
            y,
            distance: proj.distance,
            limit,
        });
    }
    Ok(LaneMatch {
        lane,
        station: proj.station,
        offset: proj.offset,
        heading: proj.heading,
    })
}

/// Split a track into maximal runs of on-road points spaced exactly one
/// grid step apart.
fn grid_runs(track: &VehicleTrack, lanes: &[LaneGeometry]) -> Vec<Vec<(TrajectoryPoint, LaneMatch)>> {
    let mut runs = Vec::new();
    let mut current: Vec<(TrajectoryPoint, LaneMatch)> = Vec::new();
    for point in &track.points {
        let Ok(m) = map_match(point.x, point.y, lanes) else {
            if !current.is_empty() {
                runs.push(std::mem::take(&mut current));
            }
            continue;
        };
        if let Some((prev, _)) = current.last() {
            if ((point.t - prev.t) - STEP_SECONDS).abs() > GRID_TOLERANCE {
                runs.push(std::mem::take(&mut current));
            }
        }
        current.push((point.clone(), m));
    }
    if !current.is_empty() {
        runs.push(current);
    }
    runs
}

fn make_trail(run: &[(TrajectoryPoint, LaneMatch)], vehicle_id: &str, label: IntentionLabel) -> Trail {
    Trail {
        vehicle_id: vehicle_id.to_string(),
        points: run.iter().map(|(p, _)| p.clone()).collect(),
        matches: run.iter().map(|(_, m)| *m).collect(),
        label,
    }
}

/// Cut one vehicle's track into labeled trails.
pub fn extract_vehicle_trails(track: &VehicleTrack, lanes: &[LaneGeometry]) -> Vec<Trail> {
    let mut trails = Vec::new();
    for run in grid_runs(track, lanes) {
        let lane = |i: usize| run[i].1.lane;
        let n = run.len();
        let mut covered = vec![false; n];
        let mut changes = Vec::new();
        for end in 1..n {
            if lane(end) == lane(end - 1) || end + 1 < TRAIL_LEN {
                continue;
            }
            let start = end + 1 - TRAIL_LEN;
            if (start..end).any(|i| lane(i) != lane(end - 1)) {
                continue;
            }
            let prev_lane = &lanes[lane(end - 1)];
            let p = &run[end].0;
            let label = if prev_lane.project(p.x, p.y).offset > 0.0 {
                IntentionLabel::ChangeLeft
            } else {
                IntentionLabel::ChangeRight
            };
            covered[start..=end].iter_mut().for_each(|c| *c = true);
            changes.push((start, make_trail(&run[start..=end], &track.vehicle_id, label)));
        }
        let mut keeps = Vec::new();
        let mut start = 0;
        while start + TRAIL_LEN <= n {
            let window = start..start + TRAIL_LEN;
            let constant = window.clone().all(|i| lane(i) == lane(start));
            if constant && !window.clone().any(|i| covered[i]) {
                keeps.push((start, make_trail(&run[window], &track.vehicle_id, IntentionLabel::Keep)));
                start += TRAIL_LEN;
            } else {
                start += 1;
            }
        }
        let mut all: Vec<(usize, Trail)> = changes.into_iter().chain(keeps).collect();
        all.sort_by_key(|(s, _)| *s);
        trails.extend(all.into_iter().map(|(_, t)| t));
    }
    trails
}

/// Cut every track into labeled trails, in track order.
pub fn extract_trails(tracks: &[VehicleTrack], lanes: &[LaneGeometry]) -> Vec<Trail> {
    tracks
        .iter()
        .flat_map(|t| extract_vehicle_trails(t, lanes))
        .collect()
}
