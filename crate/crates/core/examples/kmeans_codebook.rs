//! Quantize two-dimensional points with a K-means codebook.

use lane_intent::kmeans::{fit, KMeansConfig, KMeansInit};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> lane_intent::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let noise = Normal::new(0.0, 0.4).unwrap();
    let centers = [(0.0, 0.0), (5.0, 1.0), (2.0, 6.0)];
    let mut data = Array2::zeros((300, 2));
    for (i, mut row) in data.rows_mut().into_iter().enumerate() {
        let (cx, cy) = centers[i % 3];
        row[0] = cx + noise.sample(&mut rng);
        row[1] = cy + noise.sample(&mut rng);
    }

    let cfg = KMeansConfig {
        init: KMeansInit::PlusPlus,
        ..KMeansConfig::new(3, 11)
    };
    let fit = fit(data.view(), &cfg)?;
    println!("converged after {} iterations: {}", fit.iterations, fit.converged);
    println!("objective: {:?}", fit.objective_history);
    for (k, c) in fit.codebook.centroids.rows().into_iter().enumerate() {
        println!("centroid {k}: ({:.2}, {:.2})", c[0], c[1]);
    }
    println!("symbol for (4.8, 1.2): {}", fit.codebook.assign_row(&[4.8, 1.2])?);
    Ok(())
}
