//! Map-match a few vehicles on a straight two-lane road and look at the
//! features of one trail, including the nearest vehicle in each region.

use std::collections::BTreeSet;

use lane_intent::features::{featurize, FeatureSet, RegionSpec};
use lane_intent::ingest::{parse_lanes, parse_trajectories};

const LANES: &str = "lane_id,seq,x,y\n1,0,0,0\n1,1,200,0\n2,0,0,3.5\n2,1,200,3.5\n";

fn trajectories() -> String {
    let mut csv = String::from("vehicle_id,t,x,y\n");
    for i in 0..14 {
        let t = i as f64 * 0.5;
        // ego drifts from lane 1 into lane 2 between steps 6 and 10
        let y = (3.5 * (i as f64 - 6.0) / 4.0).clamp(0.0, 3.5);
        csv += &format!("ego,{t},{},{y}\n", 20.0 + 12.0 * t);
        csv += &format!("lead,{t},{},0\n", 30.0 + 10.0 * t);
        csv += &format!("side,{t},{},3.5\n", 17.0 + 13.0 * t);
    }
    csv
}

fn main() -> lane_intent::Result<()> {
    let lanes = parse_lanes(LANES.as_bytes(), 3.5)?;
    let tracks = parse_trajectories(trajectories().as_bytes())?;
    let targets: BTreeSet<String> = ["ego".to_string()].into();

    let data = featurize(&tracks, &lanes, Some(&targets), FeatureSet::BaseRelposRatio, &RegionSpec::default())?;
    let names = &data.manifest.feature_names;
    for trail in &data.trails {
        println!("{} {} t={:?}", trail.vehicle_id, trail.label, trail.times);
        let last = trail.rows.last().unwrap();
        for (name, value) in names.iter().zip(last) {
            println!("  {name:>16} {value:+.3}");
        }
    }
    Ok(())
}
