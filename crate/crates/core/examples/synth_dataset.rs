//! Generate a small synthetic highway and write it as CSV.
//!
//! ```text
//! cargo run --example synth_dataset -- /tmp/lane-data
//! ```

use std::path::PathBuf;

use lane_intent::synth::{generate, SynthConfig};
use lane_intent::IntentionLabel;

fn main() -> lane_intent::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("lane-data"));
    let cfg = SynthConfig {
        trails_per_intention: [20, 20, 20],
        seed: 7,
        ..SynthConfig::default()
    };
    let data = generate(&cfg)?;

    let points: usize = data.tracks.iter().map(|t| t.points.len()).sum();
    println!("{} lanes, {} vehicles, {points} points", data.lanes.len(), data.tracks.len());
    for label in IntentionLabel::ALL {
        let n = data.truth.iter().filter(|r| r.intended_label == label).count();
        println!("  {label}: {n} targets");
    }
    for path in data.write_dir(&out)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
