//! Small probability helpers shared by the estimators.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

/// Maximizes `sum_j counts[j] * ln p[j]` over the simplex with every
/// `p[j] >= floor`. The solution is `p[j] = max(floor, counts[j] / lambda)`;
/// entries that fall below the floor are pinned and the remaining mass is
/// redistributed until no free entry violates it.
pub(crate) fn floored_distribution(counts: &[f64], floor: f64) -> Vec<f64> {
    let n = counts.len();
    debug_assert!(n > 0);
    let floor = floor.min(1.0 / n as f64);
    let mut pinned = vec![false; n];
    loop {
        let n_pinned = pinned.iter().filter(|&&p| p).count();
        let free_mass = 1.0 - n_pinned as f64 * floor;
        let free_total: f64 = counts
            .iter()
            .zip(&pinned)
            .filter(|(_, &p)| !p)
            .map(|(c, _)| c.max(0.0))
            .sum();
        let n_free = n - n_pinned;
        let mut out = vec![floor; n];
        if free_total <= 0.0 || !free_total.is_finite() {
            let share = free_mass / n_free as f64;
            for (o, _) in out.iter_mut().zip(&pinned).filter(|(_, &p)| !p) {
                *o = share;
            }
            return out;
        }
        let ratio = free_mass / free_total;
        let mut changed = false;
        for j in 0..n {
            if pinned[j] {
                continue;
            }
            let v = counts[j].max(0.0) * ratio;
            if v < floor {
                pinned[j] = true;
                changed = true;
            } else {
                out[j] = v;
            }
        }
        if !changed {
            return out;
        }
    }
}

pub(crate) fn log_sum_exp(values: impl IntoIterator<Item = f64>) -> f64 {
    let values: Vec<f64> = values.into_iter().collect();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Draw from a symmetric Dirichlet with concentration `alpha`.
pub(crate) fn dirichlet<R: Rng + ?Sized>(rng: &mut R, n: usize, alpha: f64) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("positive concentration");
    let mut draws: Vec<f64> = (0..n).map(|_| gamma.sample(rng).max(1e-300)).collect();
    let total: f64 = draws.iter().sum();
    for d in &mut draws {
        *d /= total;
    }
    draws
}
