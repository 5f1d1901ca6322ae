//! Sweep continuous models over feature sets with several seeds, writing
//! one CSV per cell.
//!
//! ```text
//! cargo run --release --example continuous_pipeline -- /tmp/lane-sweep
//! ```

use std::collections::BTreeSet;
use std::path::PathBuf;

use lane_intent::experiment::{sweep, ExperimentConfig};
use lane_intent::features::{featurize, RegionSpec};
use lane_intent::features::FeatureSet;
use lane_intent::synth::{generate, SynthConfig};

const CONFIG: &str = r#"
characterization = "continuous"
q = 4
m = 2
feature_set = ["base", "base+relpos+ratio"]
seeds = [0, 1]
prediction_times = [0.0, 1.0, 2.0, 3.0]
"#;

fn main() -> lane_intent::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("lane-sweep"));
    let synth = generate(&SynthConfig {
        trails_per_intention: [80; 3],
        seed: 2,
        ..SynthConfig::default()
    })?;
    let targets: BTreeSet<String> = synth.truth.iter().map(|r| r.vehicle_id.clone()).collect();
    // the widest set; each cell selects its own columns
    let data = featurize(
        &synth.tracks,
        &synth.lanes,
        Some(&targets),
        FeatureSet::BaseRelposRatio,
        &RegionSpec::default(),
    )?;

    let overrides = [("out_dir".to_string(), format!("{:?}", out.display().to_string()))];
    let cfg = ExperimentConfig::from_toml(CONFIG, &overrides)?;
    for result in sweep(&cfg, &data)? {
        print!("{:<40}", result.cell.name());
        for &tau in &cfg.prediction_times {
            print!(" {tau:.1}s {:.3}±{:.3}", result.mean(tau), result.std(tau));
        }
        println!();
    }
    println!("results in {}", out.display());
    Ok(())
}
