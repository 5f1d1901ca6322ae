//! Score a symbol sequence under a hand-built discrete HMM and inspect the
//! posteriors, the prefix likelihoods and the Viterbi path.

use lane_intent::hmm::{forward_backward, log_likelihood, prefix_log_likelihoods, viterbi, DiscreteHmm};
use ndarray::array;

fn main() -> lane_intent::Result<()> {
    let model = DiscreteHmm::new(
        array![0.6, 0.4],
        array![[0.9, 0.1], [0.2, 0.8]],
        array![[0.7, 0.2, 0.1], [0.1, 0.3, 0.6]],
    )?;
    let obs = vec![0, 0, 1, 2, 2, 2, 1, 0, 0];

    println!("log P(O) = {:.6}", log_likelihood(&model, &obs)?);

    let post = forward_backward(&model, &obs)?;
    println!("P(state 1 | O) per step:");
    for (t, row) in post.eta.rows().into_iter().enumerate() {
        println!("  t={t} symbol={} p={:.3}", obs[t], row[1]);
    }

    let prefixes = prefix_log_likelihoods(&model, &obs)?;
    println!("prefix log-likelihoods: {:?}", prefixes.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>());
    println!("viterbi: {:?}", viterbi(&model, &obs)?);

    // a symbol no state can emit makes the sequence impossible
    let blocked = DiscreteHmm::new(array![1.0], array![[1.0]], array![[1.0, 0.0]])?;
    println!("impossible: {}", log_likelihood(&blocked, &[0, 1])?);
    Ok(())
}
