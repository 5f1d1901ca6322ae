//! Fit a two-component univariate Gaussian mixture with EM.

use lane_intent::gmm::fit_univariate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> lane_intent::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let left = Normal::new(-2.0, 0.5).unwrap();
    let right = Normal::new(2.0, 0.5).unwrap();
    let data: Vec<f64> = (0..5000)
        .map(|_| if rng.gen_bool(0.3) { left.sample(&mut rng) } else { right.sample(&mut rng) })
        .collect();

    let fit = fit_univariate(&data, 2, 1, 200, 1e-8)?;
    let m = &fit.mixture;
    println!("{} iterations", fit.iterations);
    for c in 0..2 {
        println!("component {c}: weight {:.3} mean {:+.3} sd {:.3}", m.weights[0][c], m.means[0][c], m.stds[0][c]);
    }
    let first = fit.log_likelihood_history.first().unwrap();
    let last = fit.log_likelihood_history.last().unwrap();
    println!("log-likelihood {first:.1} -> {last:.1}");
    Ok(())
}
