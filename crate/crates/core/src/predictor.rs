//! Model bank of three intention HMMs and argmax-likelihood prediction.
//!
//! A prediction made `tau` seconds before the end of a trail sees only the
//! first `T - tau / dt` steps. Ties go to the lowest intention index and are
//! flagged.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::features::{FeatureManifest, FeatureTrail, Standardizer};
use crate::hmm::{self, DiscreteHmm, GmmHmm, TrainingMode};
use crate::kmeans::Codebook;
use crate::{Error, IntentionLabel, Result};

/// One value per intention, in label order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerIntention<T> {
    pub change_left: T,
    pub change_right: T,
    pub keep: T,
}

impl<T> PerIntention<T> {
    pub fn from_fn(mut f: impl FnMut(IntentionLabel) -> T) -> Self {
        Self {
            change_left: f(IntentionLabel::ChangeLeft),
            change_right: f(IntentionLabel::ChangeRight),
            keep: f(IntentionLabel::Keep),
        }
    }

    pub fn try_from_fn<E>(mut f: impl FnMut(IntentionLabel) -> Result<T, E>) -> Result<Self, E> {
        Ok(Self {
            change_left: f(IntentionLabel::ChangeLeft)?,
            change_right: f(IntentionLabel::ChangeRight)?,
            keep: f(IntentionLabel::Keep)?,
        })
    }

    pub fn get(&self, label: IntentionLabel) -> &T {
        match label {
            IntentionLabel::ChangeLeft => &self.change_left,
            IntentionLabel::ChangeRight => &self.change_right,
            IntentionLabel::Keep => &self.keep,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (IntentionLabel, &T)> {
        IntentionLabel::ALL.into_iter().map(move |l| (l, self.get(l)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BankModels {
    Discrete {
        codebook: Codebook,
        models: PerIntention<DiscreteHmm>,
    },
    Continuous {
        components: usize,
        models: PerIntention<GmmHmm>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub states: usize,
    pub mode: Option<TrainingMode>,
    pub iterations: PerIntention<usize>,
    pub final_log_likelihood: PerIntention<f64>,
    pub training_trails: PerIntention<usize>,
}

/// Three intention models sharing one feature manifest and one
/// standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBank {
    pub manifest: FeatureManifest,
    pub standardizer: Standardizer,
    pub models: BankModels,
    pub metadata: TrainingMetadata,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: IntentionLabel,
    /// Indexed by [`IntentionLabel::index`].
    pub log_likelihoods: [f64; 3],
    pub prefix_len: usize,
    pub prediction_time: f64,
    pub tie: bool,
}

/// Number of leading steps visible when predicting `prediction_time`
/// seconds before the end of a `trail_len`-step trail.
pub fn prefix_len(trail_len: usize, step_seconds: f64, prediction_time: f64) -> Result<usize> {
    let steps = prediction_time / step_seconds;
    let rounded = steps.round();
    if !(prediction_time >= 0.0) || (steps - rounded).abs() > 1e-9 || rounded as usize >= trail_len {
        return Err(Error::PredictionTime(prediction_time));
    }
    Ok(trail_len - rounded as usize)
}

/// The first `T - prediction_time / dt` steps of a trail.
pub fn prefix<T>(rows: &[T], step_seconds: f64, prediction_time: f64) -> Result<&[T]> {
    Ok(&rows[..prefix_len(rows.len(), step_seconds, prediction_time)?])
}

/// Argmax with ties to the lowest index. NaN scores count as impossible.
pub fn select_label(log_likelihoods: [f64; 3]) -> Result<(IntentionLabel, bool)> {
    let scores = log_likelihoods.map(|v| if v.is_nan() { f64::NEG_INFINITY } else { v });
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if best == f64::NEG_INFINITY {
        return Err(Error::Unscorable);
    }
    let winners: Vec<usize> = (0..3).filter(|&i| scores[i] == best).collect();
    Ok((IntentionLabel::ALL[winners[0]], winners.len() > 1))
}

impl ModelBank {
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::file(path, e))?;
        serde_json::to_writer_pretty(BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::file(path, e))?;
        let bank: Self = serde_json::from_reader(BufReader::new(file))?;
        bank.validate()?;
        Ok(bank)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.manifest.feature_names.len();
        if self.standardizer.dim() != n {
            return Err(Error::Model("standardizer width differs from the manifest".into()));
        }
        match &self.models {
            BankModels::Discrete { codebook, models } => {
                if codebook.dim() != n {
                    return Err(Error::Model("codebook width differs from the manifest".into()));
                }
                for (label, m) in models.iter() {
                    m.validate()?;
                    if m.n_symbols() != codebook.k() {
                        return Err(Error::Model(format!("{label} model alphabet differs from the codebook")));
                    }
                }
            }
            BankModels::Continuous { models, .. } => {
                for (label, m) in models.iter() {
                    m.validate()?;
                    if m.n_features() != n {
                        return Err(Error::Model(format!("{label} model feature count differs from the manifest")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Error unless a dataset manifest describes the same feature columns
    /// on the same time grid.
    pub fn check_manifest(&self, other: &FeatureManifest) -> Result<()> {
        if other.feature_names != self.manifest.feature_names {
            return Err(Error::Manifest(format!(
                "bank expects [{}], data has [{}]",
                self.manifest.feature_names.join(","),
                other.feature_names.join(",")
            )));
        }
        if (other.step_seconds - self.manifest.step_seconds).abs() > 1e-12
            || other.theta_reference != self.manifest.theta_reference
        {
            return Err(Error::Manifest("time step or heading convention differs".into()));
        }
        Ok(())
    }

    /// Per-intention log-likelihood of every prefix of `rows`; entry `t`
    /// scores the first `t + 1` steps.
    pub fn prefix_scores(&self, rows: &[Vec<f64>]) -> Result<Vec<[f64; 3]>> {
        let standardized: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| {
                if r.len() != self.standardizer.dim() {
                    return Err(Error::Arity {
                        vehicle: "<trail>".into(),
                        expected: self.standardizer.dim(),
                        found: r.len(),
                    });
                }
                Ok(self.standardizer.transform_row(r))
            })
            .collect::<Result<_>>()?;
        let per_model: Vec<Vec<f64>> = match &self.models {
            BankModels::Discrete { codebook, models } => {
                let symbols: Vec<usize> = standardized
                    .iter()
                    .map(|r| codebook.assign_row(r))
                    .collect::<Result<_>>()?;
                IntentionLabel::ALL
                    .iter()
                    .map(|&l| hmm::prefix_log_likelihoods(models.get(l), symbols.as_slice()))
                    .collect::<Result<_>>()?
            }
            BankModels::Continuous { models, .. } => IntentionLabel::ALL
                .iter()
                .map(|&l| hmm::prefix_log_likelihoods(models.get(l), standardized.as_slice()))
                .collect::<Result<_>>()?,
        };
        Ok((0..rows.len())
            .map(|t| [per_model[0][t], per_model[1][t], per_model[2][t]])
            .collect())
    }

    /// Score the visible prefix of `rows` under all three models and pick
    /// the most likely intention.
    pub fn predict_rows(&self, rows: &[Vec<f64>], prediction_time: f64) -> Result<Prediction> {
        let visible = prefix(rows, self.manifest.step_seconds, prediction_time)?;
        let scores = *self.prefix_scores(visible)?.last().expect("prefix is non-empty");
        let (label, tie) = select_label(scores)?;
        Ok(Prediction {
            label,
            log_likelihoods: scores,
            prefix_len: visible.len(),
            prediction_time,
            tie,
        })
    }
}

/// Predict the intention of a featurized trail whose columns follow
/// `manifest`.
pub fn predict(bank: &ModelBank, manifest: &FeatureManifest, trail: &FeatureTrail, prediction_time: f64) -> Result<Prediction> {
    bank.check_manifest(manifest)?;
    bank.predict_rows(&trail.rows, prediction_time)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureSet, RegionSpec};
    use ndarray::{array, Array1, Array2};
    use proptest::prelude::*;

    fn discrete_bank(models: [DiscreteHmm; 3], k: usize) -> ModelBank {
        let mut manifest = FeatureManifest::new(FeatureSet::Base, RegionSpec::default());
        manifest.feature_names = vec!["x".into()];
        manifest.feature_set = None;
        let [a, b, c] = models;
        ModelBank {
            manifest,
            standardizer: Standardizer::identity(1),
            // symbol j is the centroid at x = j
            models: BankModels::Discrete {
                codebook: Codebook {
                    centroids: Array2::from_shape_fn((k, 1), |(j, _)| j as f64),
                },
                models: PerIntention {
                    change_left: a,
                    change_right: b,
                    keep: c,
                },
            },
            metadata: TrainingMetadata {
                seed: 0,
                states: 1,
                mode: None,
                iterations: PerIntention::from_fn(|_| 0),
                final_log_likelihood: PerIntention::from_fn(|_| 0.0),
                training_trails: PerIntention::from_fn(|_| 0),
            },
        }
    }

    fn single_state(emissions: Array1<f64>) -> DiscreteHmm {
        let k = emissions.len();
        DiscreteHmm::new(array![1.0], array![[1.0]], emissions.into_shape_with_order((1, k)).unwrap()).unwrap()
    }

    fn rows(symbols: &[usize]) -> Vec<Vec<f64>> {
        symbols.iter().map(|&s| vec![s as f64]).collect()
    }

    #[test]
    fn prefix_lengths() {
        let trail: Vec<u8> = (0..9).collect();
        assert_eq!(prefix(&trail, 0.5, 0.0).unwrap().len(), 9);
        assert_eq!(prefix(&trail, 0.5, 3.0).unwrap().len(), 3);
        assert_eq!(prefix(&trail, 0.5, 4.0).unwrap().len(), 1);
        assert!(matches!(prefix(&trail, 0.5, 4.5), Err(Error::PredictionTime(_))));
        assert!(matches!(prefix(&trail, 0.5, 0.7), Err(Error::PredictionTime(_))));
        assert!(matches!(prefix(&trail, 0.5, -0.5), Err(Error::PredictionTime(_))));
    }

    #[test]
    fn deterministic_model_dominates() {
        let bank = discrete_bank(
            [
                single_state(array![1.0, 0.0]),
                single_state(array![0.6, 0.4]),
                single_state(array![0.5, 0.5]),
            ],
            2,
        );
        let p = bank.predict_rows(&rows(&[0, 0, 0, 0]), 0.0).unwrap();
        assert_eq!(p.label, IntentionLabel::ChangeLeft);
        assert!(!p.tie);
        assert_eq!(p.log_likelihoods[0], 0.0);
        assert_eq!(p.prefix_len, 4);
    }

    #[test]
    fn identical_models_tie_to_change_left() {
        let m = single_state(array![0.3, 0.7]);
        let bank = discrete_bank([m.clone(), m.clone(), m], 2);
        let p = bank.predict_rows(&rows(&[0, 1, 1]), 0.5).unwrap();
        assert_eq!(p.label, IntentionLabel::ChangeLeft);
        assert!(p.tie);
        assert_eq!(p.prefix_len, 2);
    }

    #[test]
    fn all_impossible_is_unscorable() {
        let m = single_state(array![1.0, 0.0]);
        let bank = discrete_bank([m.clone(), m.clone(), m], 2);
        assert!(matches!(bank.predict_rows(&rows(&[1]), 0.0), Err(Error::Unscorable)));
    }

    #[test]
    fn manifest_mismatch_is_rejected() {
        let m = single_state(array![0.5, 0.5]);
        let bank = discrete_bank([m.clone(), m.clone(), m], 2);
        let other = FeatureManifest::new(FeatureSet::Base, RegionSpec::default());
        let trail = FeatureTrail {
            vehicle_id: "v".into(),
            label: IntentionLabel::Keep,
            times: vec![0.0],
            rows: vec![vec![0.0; 4]],
        };
        assert!(matches!(predict(&bank, &other, &trail, 0.0), Err(Error::Manifest(_))));
    }

    #[test]
    fn bank_round_trips_through_json() {
        let bank = discrete_bank(
            [
                single_state(array![0.2, 0.8]),
                single_state(array![0.6, 0.4]),
                single_state(array![0.5, 0.5]),
            ],
            2,
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.json");
        bank.save(&path).unwrap();
        assert_eq!(ModelBank::load(&path).unwrap(), bank);
    }

    proptest! {
        #[test]
        fn argmax_ignores_common_shift(
            a in -50.0f64..0.0, b in -50.0f64..0.0, c in -50.0f64..0.0, shift in -100.0f64..100.0,
        ) {
            let base = select_label([a, b, c]).unwrap();
            let moved = select_label([a + shift, b + shift, c + shift]).unwrap();
            prop_assert_eq!(base.0, moved.0);
        }

        #[test]
        fn prefix_scores_never_increase(seed in any::<u64>(), symbols in proptest::collection::vec(0usize..3, 1..10)) {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let models = [0, 1, 2].map(|_| {
                let b = crate::prob::dirichlet(&mut rng, 3, 1.0);
                single_state(Array1::from(b))
            });
            let bank = discrete_bank(models, 3);
            let scores = bank.prefix_scores(&rows(&symbols)).unwrap();
            for w in scores.windows(2) {
                for i in 0..3 {
                    prop_assert!(w[1][i] <= w[0][i] + 1e-12);
                }
            }
        }
    }
}
