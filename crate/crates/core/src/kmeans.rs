//! Lloyd K-means over feature rows, producing the codebook that turns
//! continuous feature vectors into discrete observation symbols.
//!
//! The objective is the within-cluster sum of squared Euclidean distances.
//! Each iteration assigns rows to their nearest centroid (ties to the lowest
//! index) and moves centroids to the mean of their members; a centroid left
//! without members is moved onto the row farthest from its own centroid.

use std::collections::BTreeSet;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::index::sample;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KMeansInit {
    /// K distinct rows drawn uniformly.
    #[default]
    RandomRows,
    /// k-means++ seeding over distinct rows.
    PlusPlus,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub init: KMeansInit,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iter: 300,
            init: KMeansInit::RandomRows,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    #[serde(with = "crate::serde_arrays::matrix")]
    pub centroids: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub codebook: Codebook,
    pub labels: Vec<usize>,
    /// Objective after each centroid update.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum()
}

impl Codebook {
    pub fn k(&self) -> usize {
        self.centroids.nrows()
    }

    pub fn dim(&self) -> usize {
        self.centroids.ncols()
    }

    fn nearest(&self, row: ArrayView1<f64>) -> usize {
        let mut best = (0, f64::INFINITY);
        for (k, c) in self.centroids.axis_iter(Axis(0)).enumerate() {
            let d = sq_dist(row, c);
            if d < best.1 {
                best = (k, d);
            }
        }
        best.0
    }

    pub fn assign_row(&self, row: &[f64]) -> Result<usize> {
        if row.len() != self.dim() {
            return Err(Error::Arity {
                vehicle: "<row>".into(),
                expected: self.dim(),
                found: row.len(),
            });
        }
        Ok(self.nearest(ArrayView1::from(row)))
    }

    /// Nearest-centroid index of each row.
    pub fn assign(&self, rows: ArrayView2<f64>) -> Result<Vec<usize>> {
        if rows.ncols() != self.dim() {
            return Err(Error::Arity {
                vehicle: "<rows>".into(),
                expected: self.dim(),
                found: rows.ncols(),
            });
        }
        Ok(rows.axis_iter(Axis(0)).map(|r| self.nearest(r)).collect())
    }
}

/// Sum of squared distances from each row to its assigned centroid.
pub fn objective(data: ArrayView2<f64>, centroids: &Array2<f64>, labels: &[usize]) -> f64 {
    data.axis_iter(Axis(0))
        .zip(labels)
        .map(|(row, &k)| sq_dist(row, centroids.row(k)))
        .sum()
}

fn distinct_rows(data: ArrayView2<f64>) -> Vec<usize> {
    let mut seen = BTreeSet::new();
    let mut first = Vec::new();
    for (i, row) in data.axis_iter(Axis(0)).enumerate() {
        let key: Vec<u64> = row.iter().map(|v| (v + 0.0).to_bits()).collect();
        if seen.insert(key) {
            first.push(i);
        }
    }
    first
}

fn initial_centroids(data: ArrayView2<f64>, distinct: &[usize], cfg: &KMeansConfig, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let picks: Vec<usize> = match cfg.init {
        KMeansInit::RandomRows => sample(rng, distinct.len(), cfg.k)
            .into_iter()
            .map(|i| distinct[i])
            .collect(),
        KMeansInit::PlusPlus => {
            let mut picks = vec![distinct[rng.gen_range(0..distinct.len())]];
            let mut d2: Vec<f64> = distinct
                .iter()
                .map(|&i| sq_dist(data.row(i), data.row(picks[0])))
                .collect();
            while picks.len() < cfg.k {
                let total: f64 = d2.iter().sum();
                let mut target = rng.gen::<f64>() * total;
                let mut chosen = d2.iter().rposition(|&d| d > 0.0).expect("distinct rows remain");
                for (j, &d) in d2.iter().enumerate() {
                    if d > 0.0 && target < d {
                        chosen = j;
                        break;
                    }
                    target -= d;
                }
                let row = distinct[chosen];
                picks.push(row);
                for (j, &i) in distinct.iter().enumerate() {
                    d2[j] = d2[j].min(sq_dist(data.row(i), data.row(row)));
                }
            }
            picks
        }
    };
    let mut centroids = Array2::zeros((cfg.k, data.ncols()));
    for (k, &i) in picks.iter().enumerate() {
        centroids.row_mut(k).assign(&data.row(i));
    }
    centroids
}

/// Cluster `data` (one row per observation) into `cfg.k` groups.
pub fn fit(data: ArrayView2<f64>, cfg: &KMeansConfig) -> Result<KMeansFit> {
    let distinct = distinct_rows(data);
    if cfg.k == 0 || cfg.k > distinct.len() {
        return Err(Error::TooFewDistinctRows {
            k: cfg.k,
            distinct: distinct.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut codebook = Codebook {
        centroids: initial_centroids(data, &distinct, cfg, &mut rng),
    };
    let mut labels = codebook.assign(data)?;
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        update_centroids(data, &labels, &mut codebook.centroids);
        history.push(objective(data, &codebook.centroids, &labels));
        let next = codebook.assign(data)?;
        if next == labels {
            converged = true;
            break;
        }
        labels = next;
    }
    if !converged {
        log::warn!("k-means stopped after {iterations} iterations without stabilizing");
    }
    Ok(KMeansFit {
        codebook,
        labels,
        objective_history: history,
        iterations,
        converged,
    })
}

fn update_centroids(data: ArrayView2<f64>, labels: &[usize], centroids: &mut Array2<f64>) {
    let k = centroids.nrows();
    let mut sums = Array2::<f64>::zeros(centroids.raw_dim());
    let mut counts = vec![0usize; k];
    for (row, &c) in data.axis_iter(Axis(0)).zip(labels) {
        sums.row_mut(c).scaled_add(1.0, &row);
        counts[c] += 1;
    }
    let mut used = BTreeSet::new();
    for c in 0..k {
        if counts[c] > 0 {
            let mean = sums.row(c).mapv(|v| v / counts[c] as f64);
            centroids.row_mut(c).assign(&mean);
        }
    }
    for c in (0..k).filter(|&c| counts[c] == 0) {
        let far = data
            .axis_iter(Axis(0))
            .zip(labels)
            .enumerate()
            .filter(|(i, _)| !used.contains(i))
            .map(|(i, (row, &l))| (i, sq_dist(row, centroids.row(l))))
            .fold((0, f64::NEG_INFINITY), |b, x| if x.1 > b.1 { x } else { b })
            .0;
        used.insert(far);
        log::debug!("re-seeding empty cluster {c} at row {far}");
        centroids.row_mut(c).assign(&data.row(far));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn column(values: &[f64]) -> Array2<f64> {
        Array2::from_shape_vec((values.len(), 1), values.to_vec()).unwrap()
    }

    fn sorted_centroids(fit: &KMeansFit) -> Vec<f64> {
        let mut c: Vec<f64> = fit.codebook.centroids.iter().copied().collect();
        c.sort_by(f64::total_cmp);
        c
    }

    /// Best 2-partition of a 1-D set by exhaustive enumeration.
    fn best_two_partition(values: &[f64]) -> (f64, Vec<f64>) {
        let n = values.len();
        let mut best = (f64::INFINITY, vec![]);
        for mask in 1u32..(1 << n) - 1 {
            let (a, b): (Vec<f64>, Vec<f64>) = (0..n).map(|i| (mask >> i & 1 == 1, values[i])).fold(
                (vec![], vec![]),
                |(mut a, mut b), (left, v)| {
                    if left { a.push(v) } else { b.push(v) }
                    (a, b)
                },
            );
            let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
            let (ma, mb) = (mean(&a), mean(&b));
            let j: f64 = a.iter().map(|v| (v - ma).powi(2)).sum::<f64>()
                + b.iter().map(|v| (v - mb).powi(2)).sum::<f64>();
            if j < best.0 {
                let mut c = vec![ma, mb];
                c.sort_by(f64::total_cmp);
                best = (j, c);
            }
        }
        best
    }

    #[test]
    fn separable_points() {
        let fit = fit(column(&[0.0, 0.0, 10.0, 10.0]).view(), &KMeansConfig::new(2, 1)).unwrap();
        assert_eq!(sorted_centroids(&fit), vec![0.0, 10.0]);
        assert_eq!(*fit.objective_history.last().unwrap(), 0.0);
    }

    #[test]
    fn four_point_instance_matches_enumeration() {
        let values = [1.0, 2.0, 9.0, 10.0];
        let (_, oracle) = best_two_partition(&values);
        assert_eq!(oracle, vec![1.5, 9.5]);
        for seed in 0..10 {
            let fit = fit(column(&values).view(), &KMeansConfig::new(2, seed)).unwrap();
            assert_eq!(sorted_centroids(&fit), oracle);
        }
    }

    #[test]
    fn single_cluster_is_column_mean() {
        let data = array![[1.0, 2.0], [3.0, 6.0], [5.0, 1.0]];
        let fit = fit(data.view(), &KMeansConfig::new(1, 7)).unwrap();
        assert_eq!(fit.codebook.centroids.row(0).to_vec(), vec![3.0, 3.0]);
    }

    #[test]
    fn too_many_clusters() {
        let err = fit(column(&[1.0, 1.0, 2.0]).view(), &KMeansConfig::new(3, 0)).unwrap_err();
        assert!(matches!(err, Error::TooFewDistinctRows { k: 3, distinct: 2 }));
    }

    #[test]
    fn assign_exact_and_ties() {
        let cb = Codebook {
            centroids: array![[0.0], [2.0], [5.0]],
        };
        assert_eq!(cb.assign_row(&[5.0]).unwrap(), 2);
        assert_eq!(cb.assign_row(&[1.0]).unwrap(), 0);
        assert!(cb.assign_row(&[1.0, 2.0]).is_err());
        let trail = Array2::from_elem((9, 1), 3.0);
        assert_eq!(cb.assign(trail.view()).unwrap().len(), 9);
    }

    #[test]
    fn plus_plus_runs() {
        let values: Vec<f64> = (0..50).map(|i| (i % 5) as f64 * 10.0 + (i as f64) * 0.01).collect();
        let mut cfg = KMeansConfig::new(5, 3);
        cfg.init = KMeansInit::PlusPlus;
        let fit = fit(column(&values).view(), &cfg).unwrap();
        assert!(fit.converged);
        assert_eq!(fit.codebook.k(), 5);
    }

    proptest! {
        #[test]
        fn objective_never_increases(
            rows in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 8..60),
            k in 1usize..6,
            seed in 0u64..1000,
        ) {
            let data = Array2::from_shape_fn((rows.len(), 2), |(i, j)| if j == 0 { rows[i].0 } else { rows[i].1 });
            let fit = fit(data.view(), &KMeansConfig::new(k, seed)).unwrap();
            for w in fit.objective_history.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0));
            }
            // fixed point: centroid = mean of members
            for c in 0..k {
                let members: Vec<_> = (0..rows.len()).filter(|&i| fit.labels[i] == c).collect();
                if members.is_empty() { continue; }
                for j in 0..2 {
                    let mean = members.iter().map(|&i| data[[i, j]]).sum::<f64>() / members.len() as f64;
                    prop_assert!((fit.codebook.centroids[[c, j]] - mean).abs() < 1e-9);
                }
            }
            // stable assignment at convergence
            prop_assert_eq!(fit.codebook.assign(data.view()).unwrap(), fit.labels.clone());
        }

        #[test]
        fn k_equal_distinct_gives_zero_objective(values in proptest::collection::btree_set(-1000i32..1000, 1..12)) {
            let v: Vec<f64> = values.iter().map(|&x| x as f64).collect();
            let fit = fit(column(&v).view(), &KMeansConfig::new(v.len(), 5)).unwrap();
            prop_assert_eq!(*fit.objective_history.last().unwrap(), 0.0);
        }
    }
}
