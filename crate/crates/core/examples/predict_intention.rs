//! Train a bank, save and reload it, then watch the prediction for one
//! lane change evolve as more of the trail becomes visible.

use std::collections::BTreeSet;

use lane_intent::experiment::{train_models, CellConfig};
use lane_intent::features::{featurize, FeatureSet, RegionSpec};
use lane_intent::predictor::{predict, ModelBank};
use lane_intent::synth::{generate, SynthConfig};
use lane_intent::IntentionLabel;

fn main() -> lane_intent::Result<()> {
    let synth = generate(&SynthConfig {
        trails_per_intention: [80; 3],
        seed: 4,
        ..SynthConfig::default()
    })?;
    let targets: BTreeSet<String> = synth.truth.iter().map(|r| r.vehicle_id.clone()).collect();
    let data = featurize(&synth.tracks, &synth.lanes, Some(&targets), FeatureSet::Base, &RegionSpec::default())?;

    let (bank, split) = train_models(&data, &CellConfig::continuous(4, 2, FeatureSet::Base), 0)?;
    let path = std::env::temp_dir().join("lane-intent-bank.json");
    bank.save(&path)?;
    let bank = ModelBank::load(&path)?;
    println!("bank saved to {}", path.display());

    let test = split.test_set();
    let trail = data
        .trails
        .iter()
        .find(|t| t.label == IntentionLabel::ChangeLeft && test.contains(&t.vehicle_id))
        .expect("a held-out left change");
    println!("{} (truth: {})", trail.vehicle_id, trail.label);
    for tau in [3.0, 2.0, 1.0, 0.0] {
        let p = predict(&bank, &data.manifest, trail, tau)?;
        let [l, r, k] = p.log_likelihoods;
        println!(
            "  {tau:.1}s before ({} steps): {:<12} left {l:8.2} right {r:8.2} keep {k:8.2}",
            p.prefix_len, p.label
        );
    }
    Ok(())
}
