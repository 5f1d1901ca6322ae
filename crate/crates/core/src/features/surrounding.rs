//! Surrounding-vehicle selection in the target's lane frame.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::FeatureSet;
use crate::ingest::{LaneGeometry, LaneMatch, VehicleTrack};
use crate::{Error, Result, STEP_SECONDS};

/// Extents of the eight neighbor regions around the target, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    /// l1: how far behind the target the rear band reaches.
    pub rear: f64,
    /// l2: how far ahead the front band reaches.
    pub front: f64,
    /// l3: half-width of the same-lane band.
    pub same_lane_half_width: f64,
    /// l4: the adjacent bands span `(l3, l3 + 2 * l4]` on either side.
    pub adjacent_band: f64,
    /// Longitudinal half-width of the side-by-side band.
    pub aligned_tolerance: f64,
}

impl Default for RegionSpec {
    fn default() -> Self {
        Self {
            rear: 4.0,
            front: 6.0,
            same_lane_half_width: 1.0,
            adjacent_band: 1.5,
            aligned_tolerance: 2.0,
        }
    }
}

impl RegionSpec {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.rear,
            self.front,
            self.same_lane_half_width,
            self.adjacent_band,
            self.aligned_tolerance,
        ];
        if all.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config("region extents must be positive".into()));
        }
        if self.aligned_tolerance >= self.rear.min(self.front) {
            return Err(Error::Config(
                "aligned tolerance must be smaller than both longitudinal extents".into(),
            ));
        }
        Ok(())
    }

    fn lateral_outer(&self) -> f64 {
        self.same_lane_half_width + 2.0 * self.adjacent_band
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    FrontLeft,
    Left,
    RearLeft,
    Front,
    Rear,
    FrontRight,
    Right,
    RearRight,
}

#[derive(Clone, Copy, PartialEq)]
enum Band {
    Ahead,
    Aligned,
    Behind,
}

#[derive(Clone, Copy, PartialEq)]
enum Side {
    Left,
    Same,
    Right,
}

impl Region {
    pub const ALL: [Region; 8] = [
        Region::FrontLeft,
        Region::Left,
        Region::RearLeft,
        Region::Front,
        Region::Rear,
        Region::FrontRight,
        Region::Right,
        Region::RearRight,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Region::FrontLeft => "front_left",
            Region::Left => "left",
            Region::RearLeft => "rear_left",
            Region::Front => "front",
            Region::Rear => "rear",
            Region::FrontRight => "front_right",
            Region::Right => "right",
            Region::RearRight => "rear_right",
        }
    }

    fn cell(self) -> (Band, Side) {
        match self {
            Region::FrontLeft => (Band::Ahead, Side::Left),
            Region::Left => (Band::Aligned, Side::Left),
            Region::RearLeft => (Band::Behind, Side::Left),
            Region::Front => (Band::Ahead, Side::Same),
            Region::Rear => (Band::Behind, Side::Same),
            Region::FrontRight => (Band::Ahead, Side::Right),
            Region::Right => (Band::Aligned, Side::Right),
            Region::RearRight => (Band::Behind, Side::Right),
        }
    }

    /// Region containing a relative position, if any. The target's own cell
    /// (same lane, side by side) is not a region.
    pub fn classify(spec: &RegionSpec, ds: f64, de: f64) -> Option<Region> {
        let outer = spec.lateral_outer();
        let side = if de > spec.same_lane_half_width && de <= outer {
            Side::Left
        } else if de.abs() <= spec.same_lane_half_width {
            Side::Same
        } else if de < -spec.same_lane_half_width && de >= -outer {
            Side::Right
        } else {
            return None;
        };
        let band = if ds.abs() <= spec.aligned_tolerance {
            Band::Aligned
        } else if ds > 0.0 && ds <= spec.front {
            Band::Ahead
        } else if ds < 0.0 && ds >= -spec.rear {
            Band::Behind
        } else {
            return None;
        };
        Region::ALL.into_iter().find(|r| r.cell() == (band, side))
    }

    /// Feature value used when the region is empty: its outer corner.
    pub fn sentinel(self, spec: &RegionSpec) -> (f64, f64) {
        let (band, side) = self.cell();
        let ds = match band {
            Band::Ahead => spec.front,
            Band::Aligned => 0.0,
            Band::Behind => -spec.rear,
        };
        let de = match side {
            Side::Left => spec.lateral_outer(),
            Side::Same => 0.0,
            Side::Right => -spec.lateral_outer(),
        };
        (ds, de)
    }
}

/// Another vehicle at the same instant, relative to the target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    /// Station difference along the target's lane (positive = ahead).
    pub ds: f64,
    /// Lateral offset difference (positive = left of the target).
    pub de: f64,
    /// Lane relative to the target's lane: +1 left, 0 same, -1 right.
    pub lane_shift: i64,
    pub speed: f64,
}

#[derive(Debug, Clone)]
struct Snapshot {
    vehicle: usize,
    x: f64,
    y: f64,
    speed: f64,
}

/// All vehicles' positions and speeds keyed by grid step.
#[derive(Debug, Clone, Default)]
pub struct TrafficIndex {
    names: Vec<String>,
    by_step: HashMap<i64, Vec<Snapshot>>,
}

fn step_key(t: f64) -> i64 {
    (t / STEP_SECONDS).round() as i64
}

impl TrafficIndex {
    pub fn new(tracks: &[VehicleTrack]) -> Self {
        let mut index = TrafficIndex::default();
        for (vi, track) in tracks.iter().enumerate() {
            index.names.push(track.vehicle_id.clone());
            let pts = &track.points;
            for i in 0..pts.len() {
                let on_grid = |a: usize, b: usize| ((pts[b].t - pts[a].t) - STEP_SECONDS).abs() < 1e-6;
                let speed = if i > 0 && on_grid(i - 1, i) {
                    (pts[i].x - pts[i - 1].x).hypot(pts[i].y - pts[i - 1].y) / STEP_SECONDS
                } else if i + 1 < pts.len() && on_grid(i, i + 1) {
                    (pts[i + 1].x - pts[i].x).hypot(pts[i + 1].y - pts[i].y) / STEP_SECONDS
                } else {
                    0.0
                };
                index.by_step.entry(step_key(pts[i].t)).or_default().push(Snapshot {
                    vehicle: vi,
                    x: pts[i].x,
                    y: pts[i].y,
                    speed,
                });
            }
        }
        index
    }
}

/// Every other vehicle present at time `t`, expressed in the frame of the
/// target's matched lane.
pub fn neighbors_at(
    index: &TrafficIndex,
    target_vehicle: &str,
    t: f64,
    target: &LaneMatch,
    lanes: &[LaneGeometry],
) -> Vec<Neighbor> {
    let lane = &lanes[target.lane];
    index
        .by_step
        .get(&step_key(t))
        .into_iter()
        .flatten()
        .filter(|s| index.names[s.vehicle] != target_vehicle)
        .map(|s| {
            let p = lane.project(s.x, s.y);
            Neighbor {
                ds: p.station - target.station,
                de: p.offset - target.offset,
                lane_shift: (p.offset / lane.width).round() as i64,
                speed: s.speed,
            }
        })
        .collect()
}

/// Nearest neighbor per region, in [`Region::ALL`] order. Values are
/// indices into `neighbors`.
pub fn select_surrounding(neighbors: &[Neighbor], spec: &RegionSpec) -> Vec<(Region, usize)> {
    let mut best: [Option<(usize, f64)>; 8] = [None; 8];
    for (i, n) in neighbors.iter().enumerate() {
        let Some(region) = Region::classify(spec, n.ds, n.de) else {
            continue;
        };
        let slot = Region::ALL.iter().position(|&r| r == region).expect("known region");
        let dist = n.ds.hypot(n.de);
        if best[slot].map_or(true, |(_, d)| dist < d) {
            best[slot] = Some((i, dist));
        }
    }
    Region::ALL
        .into_iter()
        .zip(best)
        .filter_map(|(r, b)| b.map(|(i, _)| (r, i)))
        .collect()
}

fn mean_speed(speeds: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = speeds.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn lane_ratio(neighbors: &[Neighbor], spec: &RegionSpec, shift: i64, target_speed: f64) -> f64 {
    let in_range = |n: &&Neighbor| n.ds.abs() <= spec.front;
    let adjacent = mean_speed(
        neighbors
            .iter()
            .filter(in_range)
            .filter(|n| n.lane_shift == shift)
            .map(|n| n.speed),
    );
    let current = mean_speed(
        neighbors
            .iter()
            .filter(in_range)
            .filter(|n| n.lane_shift == 0)
            .map(|n| n.speed)
            .chain(std::iter::once(target_speed)),
    );
    match (adjacent, current) {
        (Some(a), Some(c)) if c > 0.0 => a / c,
        _ => 1.0,
    }
}

/// Extend base rows (`v` first) with surrounding-traffic features.
pub fn augment(
    base: &[Vec<f64>],
    neighbors: &[Vec<Neighbor>],
    spec: &RegionSpec,
    set: FeatureSet,
) -> Vec<Vec<f64>> {
    debug_assert_eq!(base.len(), neighbors.len());
    base.iter()
        .zip(neighbors)
        .map(|(row, around)| {
            let mut out = row.clone();
            if set.has_relpos() {
                let chosen = select_surrounding(around, spec);
                for region in Region::ALL {
                    let (ds, de) = chosen
                        .iter()
                        .find(|(r, _)| *r == region)
                        .map(|&(_, i)| (around[i].ds, around[i].de))
                        .unwrap_or_else(|| region.sentinel(spec));
                    out.push(ds);
                    out.push(de);
                }
            }
            if set.has_ratio() {
                out.push(lane_ratio(around, spec, 1, row[0]));
                out.push(lane_ratio(around, spec, -1, row[0]));
            }
            out
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn at(ds: f64, de: f64) -> Neighbor {
        Neighbor {
            ds,
            de,
            lane_shift: (de / 3.5).round() as i64,
            speed: 10.0,
        }
    }

    #[test]
    fn front_same_lane_within_l2() {
        let spec = RegionSpec::default();
        assert_eq!(select_surrounding(&[at(5.0, 0.0)], &spec), vec![(Region::Front, 0)]);
    }

    #[test]
    fn beyond_l2_is_ignored() {
        assert!(select_surrounding(&[at(7.0, 0.0)], &RegionSpec::default()).is_empty());
    }

    #[test]
    fn nearest_in_region_wins() {
        let chosen = select_surrounding(&[at(4.0, 0.0), at(3.0, 0.0)], &RegionSpec::default());
        assert_eq!(chosen, vec![(Region::Front, 1)]);
    }

    #[test]
    fn adjacent_lane_vehicle_lands_left() {
        let spec = RegionSpec::default();
        assert_eq!(Region::classify(&spec, 0.5, 3.5), Some(Region::Left));
        assert_eq!(Region::classify(&spec, -3.0, -3.5), Some(Region::RearRight));
        assert_eq!(Region::classify(&spec, 0.0, 0.0), None);
        assert_eq!(Region::classify(&spec, 0.0, 4.5), None);
    }

    #[test]
    fn empty_traffic_gives_sentinels_and_unit_ratios() {
        let spec = RegionSpec::default();
        let rows = augment(&[vec![10.0, 0.0, 1.75, 1.75]], &[vec![]], &spec, FeatureSet::BaseRelposRatio);
        let row = &rows[0];
        assert_eq!(row.len(), 22);
        for (i, region) in Region::ALL.into_iter().enumerate() {
            let (ds, de) = region.sentinel(&spec);
            assert_eq!((row[4 + 2 * i], row[5 + 2 * i]), (ds, de));
        }
        assert_eq!(&row[20..], &[1.0, 1.0]);
        assert_eq!(Region::FrontLeft.sentinel(&spec), (6.0, 4.0));
    }

    #[test]
    fn left_ratio() {
        let spec = RegionSpec::default();
        let around = vec![
            Neighbor { ds: 3.0, de: 3.5, lane_shift: 1, speed: 12.0 },
        ];
        let rows = augment(&[vec![10.0, 0.0, 1.75, 1.75]], &[around], &spec, FeatureSet::BaseRelposRatio);
        assert!((rows[0][20] - 1.2).abs() < 1e-12);
        assert_eq!(rows[0][21], 1.0);
    }

    #[test]
    fn front_vehicle_passes_through() {
        let spec = RegionSpec::default();
        let rows = augment(&[vec![10.0, 0.0, 1.75, 1.75]], &[vec![at(5.0, 0.0)]], &spec, FeatureSet::BaseRelpos);
        let front = Region::ALL.iter().position(|&r| r == Region::Front).unwrap();
        assert_eq!((rows[0][4 + 2 * front], rows[0][5 + 2 * front]), (5.0, 0.0));
    }

    proptest! {
        #[test]
        fn regions_partition(ds in -10.0f64..10.0, de in -6.0f64..6.0) {
            let spec = RegionSpec::default();
            let hits = Region::ALL
                .into_iter()
                .filter(|r| Region::classify(&spec, ds, de) == Some(*r))
                .count();
            prop_assert!(hits <= 1);
        }

        #[test]
        fn no_vehicle_selected_twice(pos in proptest::collection::vec((-8.0f64..8.0, -5.0f64..5.0), 0..20)) {
            let neighbors: Vec<_> = pos.iter().map(|&(s, e)| at(s, e)).collect();
            let chosen = select_surrounding(&neighbors, &RegionSpec::default());
            let mut ids: Vec<_> = chosen.iter().map(|c| c.1).collect();
            ids.sort();
            ids.dedup();
            prop_assert_eq!(ids.len(), chosen.len());
        }
    }
}
