//! Synthesize traffic, quantize base features with K-means, train three
//! discrete HMMs and report accuracy versus prediction time.

use std::collections::BTreeSet;

use lane_intent::experiment::{evaluate, train_models, CellConfig};
use lane_intent::features::{featurize, FeatureSet, RegionSpec};
use lane_intent::synth::{generate, SynthConfig};
use lane_intent::IntentionLabel;

fn main() -> lane_intent::Result<()> {
    let synth = generate(&SynthConfig {
        trails_per_intention: [100; 3],
        seed: 1,
        ..SynthConfig::default()
    })?;
    let targets: BTreeSet<String> = synth.truth.iter().map(|r| r.vehicle_id.clone()).collect();
    let data = featurize(&synth.tracks, &synth.lanes, Some(&targets), FeatureSet::Base, &RegionSpec::default())?;
    for label in IntentionLabel::ALL {
        println!("{label}: {} trails", data.count(label));
    }

    let cell = CellConfig::discrete(8, 4, FeatureSet::Base);
    let (bank, split) = train_models(&data, &cell, 0)?;
    println!("{}: {} train / {} test vehicles", cell.name(), split.train_vehicles.len(), split.test_vehicles.len());
    for (label, ll) in bank.metadata.final_log_likelihood.iter() {
        println!("  {label}: {} iterations, final log-likelihood {ll:.1}", bank.metadata.iterations.get(label));
    }

    let grid = [0.0, 1.0, 2.0, 3.0];
    let table = evaluate(&bank, &data, Some(&split.test_set()), &grid)?;
    table.write_csv(std::io::stdout().lock())
}
