use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_stochastic, forward_backward, initial_transitions, relative_change, HiddenMarkovModel, Posteriors, PROB_FLOOR};
use crate::gmm::{quantile_split, responsibilities, update_params, FeatureMixture, GmmParams, SIGMA_FLOOR};
use crate::kmeans::{self, KMeansConfig};
use crate::prob::{dirichlet, floored_distribution};
use crate::{Error, Result};

/// HMM whose states emit feature vectors through per-feature Gaussian
/// mixtures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmHmm {
    #[serde(with = "crate::serde_arrays::vector")]
    pub initial: Array1<f64>,
    #[serde(with = "crate::serde_arrays::matrix")]
    pub transitions: Array2<f64>,
    pub mixtures: GmmParams,
}

impl GmmHmm {
    pub fn new(initial: Array1<f64>, transitions: Array2<f64>, mixtures: GmmParams) -> Result<Self> {
        let model = Self {
            initial,
            transitions,
            mixtures,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let q = self.initial.len();
        if q == 0 || self.transitions.dim() != (q, q) || self.mixtures.n_states() != q {
            return Err(Error::Model("inconsistent continuous HMM shapes".into()));
        }
        check_stochastic("initial", self.initial.view().insert_axis(Axis(0)))?;
        check_stochastic("transitions", self.transitions.view())?;
        self.mixtures.validate()
    }

    pub fn n_features(&self) -> usize {
        self.mixtures.n_features()
    }

    pub fn n_components(&self) -> usize {
        self.mixtures.n_components()
    }
}

impl HiddenMarkovModel for GmmHmm {
    type Observation = [Vec<f64>];

    fn n_states(&self) -> usize {
        self.initial.len()
    }

    fn initial(&self) -> ArrayView1<'_, f64> {
        self.initial.view()
    }

    fn transitions(&self) -> ArrayView2<'_, f64> {
        self.transitions.view()
    }

    fn log_emission_table(&self, obs: &[Vec<f64>]) -> Result<Array2<f64>> {
        let n = self.n_features();
        let mut table = Array2::zeros((obs.len(), self.n_states()));
        for (t, row) in obs.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Arity {
                    vehicle: "<sequence>".into(),
                    expected: n,
                    found: row.len(),
                });
            }
            for q in 0..self.n_states() {
                table[[t, q]] = self.mixtures.state_log_density(q, row);
            }
        }
        Ok(table)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuousTrainConfig {
    pub states: usize,
    pub components: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
    pub prob_floor: f64,
    pub sigma_floor: f64,
}

impl ContinuousTrainConfig {
    pub fn new(states: usize, components: usize, seed: u64) -> Self {
        Self {
            states,
            components,
            seed,
            max_iter: 100,
            tol: 1e-6,
            prob_floor: PROB_FLOOR,
            sigma_floor: SIGMA_FLOOR,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ContinuousTraining {
    pub model: GmmHmm,
    pub log_likelihood_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl ContinuousTraining {
    pub fn final_log_likelihood(&self) -> f64 {
        *self.log_likelihood_history.last().expect("history is never empty")
    }
}

/// State means from a K-means split of the rows, then a quantile split of
/// each state's values per feature for the components.
fn initial_mixtures(rows: &Array2<f64>, cfg: &ContinuousTrainConfig) -> Result<GmmParams> {
    let (q, m) = (cfg.states, cfg.components);
    let n = rows.ncols();
    let distinct = {
        let mut keys: Vec<Vec<u64>> = rows
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|v| (v + 0.0).to_bits()).collect())
            .collect();
        keys.sort();
        keys.dedup();
        keys.len()
    };
    let k = q.min(distinct);
    let labels = kmeans::fit(rows.view(), &KMeansConfig::new(k, cfg.seed))?.labels;
    let mut features = Vec::with_capacity(n);
    for f in 0..n {
        let column = rows.column(f);
        let mut mixture = FeatureMixture {
            weights: vec![vec![1.0 / m as f64; m]; q],
            means: vec![vec![0.0; m]; q],
            stds: vec![vec![0.0; m]; q],
        };
        for p in 0..q {
            let cluster = p % k;
            let members: Vec<f64> = labels
                .iter()
                .zip(column.iter())
                .filter(|(&l, _)| l == cluster)
                .map(|(_, &v)| v)
                .collect();
            let split = quantile_split(&members, m, cfg.sigma_floor);
            for (j, (mean, sd)) in split.into_iter().enumerate() {
                // duplicate states (more states than distinct rows) start
                // slightly apart so EM can separate them
                let shift = if p >= k { 0.1 * sd * (p / k) as f64 } else { 0.0 };
                mixture.means[p][j] = mean + shift;
                mixture.stds[p][j] = sd;
            }
        }
        features.push(mixture);
    }
    GmmParams::from_features(features)
}

struct EStep {
    posteriors: Vec<Posteriors>,
    log_likelihood: f64,
}

fn e_step(model: &GmmHmm, sequences: &[Vec<Vec<f64>>]) -> Result<EStep> {
    let posteriors: Vec<Posteriors> = sequences
        .par_iter()
        .map(|s| forward_backward(model, s.as_slice()))
        .collect::<Result<_>>()?;
    let log_likelihood = posteriors.iter().map(|p| p.log_likelihood).sum();
    Ok(EStep {
        posteriors,
        log_likelihood,
    })
}

fn m_step(model: &GmmHmm, sequences: &[Vec<Vec<f64>>], stats: &EStep, columns: &[Vec<f64>], cfg: &ContinuousTrainConfig, iteration: usize) -> GmmHmm {
    let q = model.n_states();
    let mut pi_counts = Array1::<f64>::zeros(q);
    let mut trans_counts = Array2::<f64>::zeros((q, q));
    let total_rows: usize = sequences.iter().map(Vec::len).sum();
    let mut eta_all = Array2::<f64>::zeros((total_rows, q));
    let mut offset = 0;
    for post in &stats.posteriors {
        pi_counts += &post.eta.row(0);
        trans_counts += &post.xi.sum_axis(Axis(0));
        let t_len = post.eta.nrows();
        eta_all.slice_mut(ndarray::s![offset..offset + t_len, ..]).assign(&post.eta);
        offset += t_len;
    }
    let initial = Array1::from(floored_distribution(pi_counts.as_slice().expect("contiguous"), cfg.prob_floor));
    let mut transitions = Array2::zeros((q, q));
    for (i, row) in trans_counts.rows().into_iter().enumerate() {
        transitions
            .row_mut(i)
            .assign(&Array1::from(floored_distribution(&row.to_vec(), cfg.prob_floor)));
    }
    let updated: Vec<FeatureMixture> = columns
        .par_iter()
        .enumerate()
        .map(|(n, column)| {
            let gamma = responsibilities(&model.mixtures, n, eta_all.view(), column);
            let stream = cfg.seed ^ ((iteration as u64) << 32) ^ n as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(stream);
            update_params(&gamma, column, cfg.sigma_floor, &mut rng)
        })
        .collect();
    let mut mixtures = model.mixtures.clone();
    for (n, mixture) in updated.into_iter().enumerate() {
        mixtures.set_feature(n, mixture);
    }
    GmmHmm {
        initial,
        transitions,
        mixtures,
    }
}

/// Fit a Gaussian-mixture HMM to feature sequences of one class.
pub fn train_continuous(sequences: &[Vec<Vec<f64>>], cfg: &ContinuousTrainConfig) -> Result<ContinuousTraining> {
    if sequences.is_empty() {
        return Err(Error::NoSequences);
    }
    if cfg.states == 0 || cfg.components == 0 {
        return Err(Error::Config("state and component counts must be positive".into()));
    }
    let n = sequences[0].first().map_or(0, Vec::len);
    if n == 0 || sequences.iter().any(Vec::is_empty) {
        return Err(Error::Config("empty sequence or zero features".into()));
    }
    if let Some(bad) = sequences.iter().flatten().find(|r| r.len() != n) {
        return Err(Error::Arity {
            vehicle: "<sequence>".into(),
            expected: n,
            found: bad.len(),
        });
    }
    let flat: Vec<f64> = sequences.iter().flatten().flatten().copied().collect();
    let rows = Array2::from_shape_vec((flat.len() / n, n), flat).expect("uniform arity");
    let columns: Vec<Vec<f64>> = rows.columns().into_iter().map(|c| c.to_vec()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e37_79b9));
    let q = cfg.states;
    let initial = Array1::from(floored_distribution(&dirichlet(&mut rng, q, 1.0), cfg.prob_floor));
    let transitions = initial_transitions(&mut rng, q, cfg.prob_floor);
    let mut model = GmmHmm {
        initial,
        transitions,
        mixtures: initial_mixtures(&rows, cfg)?,
    };

    let mut stats = e_step(&model, sequences)?;
    let mut history = vec![stats.log_likelihood];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        model = m_step(&model, sequences, &stats, &columns, cfg, iterations);
        let next = e_step(&model, sequences)?;
        let prev = stats.log_likelihood;
        history.push(next.log_likelihood);
        stats = next;
        if relative_change(prev, stats.log_likelihood) < cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(ContinuousTraining {
        model,
        log_likelihood_history: history,
        iterations,
        converged,
    })
}
