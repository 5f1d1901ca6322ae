//! Per-step mobility features of a target vehicle.
//!
//! The base set is speed `v`, heading `theta` relative to the lane tangent,
//! and the distances `d1`/`d2` to the left/right lane lines. Two optional
//! extensions describe the surrounding traffic: relative positions of the
//! nearest vehicle in each of eight regions, and adjacent/current lane
//! speed ratios.

mod dataset;
mod matrix;
mod surrounding;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ingest::{LaneGeometry, LaneMatch, Trail, TrajectoryPoint};
use crate::{Error, Result, STEP_SECONDS};

pub use dataset::{featurize, FeatureManifest, FeatureTrail, FeaturizedDataset, THETA_REFERENCE};
pub use matrix::{build_matrix, FeatureMatrix, Standardizer};
pub use surrounding::{
    augment, neighbors_at, select_surrounding, Neighbor, Region, RegionSpec, TrafficIndex,
};

pub const BASE_FEATURES: [&str; 4] = ["v", "theta", "d1", "d2"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureSet {
    #[serde(rename = "base")]
    Base,
    #[serde(rename = "base+relpos")]
    BaseRelpos,
    #[serde(rename = "base+relpos+ratio")]
    BaseRelposRatio,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 3] = [FeatureSet::Base, FeatureSet::BaseRelpos, FeatureSet::BaseRelposRatio];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSet::Base => "base",
            FeatureSet::BaseRelpos => "base+relpos",
            FeatureSet::BaseRelposRatio => "base+relpos+ratio",
        }
    }

    pub fn has_relpos(self) -> bool {
        !matches!(self, FeatureSet::Base)
    }

    pub fn has_ratio(self) -> bool {
        matches!(self, FeatureSet::BaseRelposRatio)
    }

    /// Ordered column names for this set.
    pub fn feature_names(self) -> Vec<String> {
        let mut names: Vec<String> = BASE_FEATURES.iter().map(|s| s.to_string()).collect();
        if self.has_relpos() {
            for region in Region::ALL {
                names.push(format!("{}_ds", region.as_str()));
                names.push(format!("{}_de", region.as_str()));
            }
        }
        if self.has_ratio() {
            names.push("ratio_left".into());
            names.push("ratio_right".into());
        }
        names
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.as_str() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown feature set {s:?}")))
    }
}

/// Wrap an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Per-step speed (m/s) and heading relative to the lane tangent (rad).
///
/// Step 1 uses the forward difference. A zero displacement gives zero speed
/// and repeats the previous heading.
pub fn kinematics(points: &[TrajectoryPoint], matches: &[LaneMatch]) -> Vec<(f64, f64)> {
    debug_assert_eq!(points.len(), matches.len());
    let n = points.len();
    let mut out = Vec::with_capacity(n);
    let mut prev_theta = 0.0;
    for i in 0..n {
        let (a, b) = match i {
            0 if n > 1 => (&points[0], &points[1]),
            0 => (&points[0], &points[0]),
            _ => (&points[i - 1], &points[i]),
        };
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let dist = dx.hypot(dy);
        if dist == 0.0 {
            out.push((0.0, prev_theta));
            continue;
        }
        let theta = wrap_angle(dy.atan2(dx) - matches[i].heading);
        prev_theta = theta;
        out.push((dist / STEP_SECONDS, theta));
    }
    out
}

/// Distances to the left (`d1`) and right (`d2`) lane lines at each step.
pub fn lane_offsets(matches: &[LaneMatch], lanes: &[LaneGeometry]) -> Vec<(f64, f64)> {
    matches
        .iter()
        .map(|m| {
            let half = lanes[m.lane].width / 2.0;
            (half - m.offset, half + m.offset)
        })
        .collect()
}

/// `[v, theta, d1, d2]` for every step of a trail.
pub fn base_features(trail: &Trail, lanes: &[LaneGeometry]) -> Vec<Vec<f64>> {
    kinematics(&trail.points, &trail.matches)
        .into_iter()
        .zip(lane_offsets(&trail.matches, lanes))
        .map(|((v, theta), (d1, d2))| vec![v, theta, d1, d2])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::map_match;

    fn lane() -> Vec<LaneGeometry> {
        vec![LaneGeometry::new(0, vec![(-100.0, 0.0), (100.0, 0.0)], 3.5).unwrap()]
    }

    fn pts(xy: &[(f64, f64)]) -> (Vec<TrajectoryPoint>, Vec<LaneMatch>) {
        let lanes = lane();
        let points: Vec<_> = xy
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| TrajectoryPoint {
                vehicle_id: "a".into(),
                t: i as f64 * 0.5,
                x,
                y,
            })
            .collect();
        let matches = points.iter().map(|p| map_match(p.x, p.y, &lanes).unwrap()).collect();
        (points, matches)
    }

    #[test]
    fn speed_and_relative_heading() {
        let (p, m) = pts(&[(0.0, 0.0), (3.0, 4.0)]);
        let k = kinematics(&p, &m);
        for (v, theta) in k {
            assert!((v - 10.0).abs() < 1e-12);
            assert!((theta - 4f64.atan2(3.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn stationary_vehicle() {
        let (p, m) = pts(&[(1.0, 0.5); 5]);
        assert!(kinematics(&p, &m).iter().all(|&(v, t)| v == 0.0 && t == 0.0));
    }

    #[test]
    fn zero_step_repeats_previous_heading() {
        let (p, m) = pts(&[(0.0, 0.0), (1.0, 1.0), (1.0, 1.0)]);
        let k = kinematics(&p, &m);
        assert_eq!(k[2].0, 0.0);
        assert_eq!(k[2].1, k[1].1);
    }

    #[test]
    fn motion_along_tangent_has_zero_heading() {
        let (p, m) = pts(&[(0.0, 1.0), (5.0, 1.0), (11.0, 1.0)]);
        assert!(kinematics(&p, &m).iter().all(|&(_, t)| t == 0.0));
    }

    #[test]
    fn offsets_examples() {
        let lanes = lane();
        for (e, d1, d2) in [(0.0, 1.75, 1.75), (1.0, 0.75, 2.75), (1.75, 0.0, 3.5)] {
            let m = map_match(0.0, e, &lanes).unwrap();
            let d = lane_offsets(&[m], &lanes)[0];
            assert!((d.0 - d1).abs() < 1e-12 && (d.1 - d2).abs() < 1e-12);
        }
    }

    #[test]
    fn wrap_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn feature_names_arity() {
        assert_eq!(FeatureSet::Base.feature_names().len(), 4);
        assert_eq!(FeatureSet::BaseRelpos.feature_names().len(), 20);
        assert_eq!(FeatureSet::BaseRelposRatio.feature_names().len(), 22);
        for set in FeatureSet::ALL {
            assert_eq!(set.as_str().parse::<FeatureSet>().unwrap(), set);
        }
    }
}
