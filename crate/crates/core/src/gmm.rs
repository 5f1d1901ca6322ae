//! Gaussian-mixture emission model for continuous features.
//!
//! Every feature `n` and hidden state `p` owns its own univariate mixture of
//! `M` components. Within a state the features are treated as independent,
//! so a state's emission density is the product of its per-feature
//! mixtures.
//!
//! The component responsibility used for the M-step is the state posterior
//! times the within-state component posterior:
//!
//! ```text
//! gamma[n,p,m,t] = eta_t(p) * w[n,p,m] N(f_n(t) | mu, sigma) / sum_j w[n,p,j] N(f_n(t) | mu_j, sigma_j)
//! ```
//!
//! which makes the weighted mean/variance updates the exact maximizers of
//! the expected complete-data log-likelihood.

use ndarray::{Array3, ArrayView2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::prob::log_sum_exp;
use crate::{Error, Result};

/// Smallest admissible standard deviation (standardized units).
pub const SIGMA_FLOOR: f64 = 1e-3;

/// Components whose total responsibility falls below this are re-seeded.
pub const MIN_RESPONSIBILITY: f64 = 1e-8;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

pub fn log_gauss_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let sd = if sd < SIGMA_FLOOR {
        log::trace!("clamping sigma {sd} to floor");
        SIGMA_FLOOR
    } else {
        sd
    };
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - LN_SQRT_2PI
}

pub fn gauss_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    log_gauss_pdf(x, mean, sd).exp()
}

/// Mixture parameters of one feature across all states, indexed `[p][m]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMixture {
    pub weights: Vec<Vec<f64>>,
    pub means: Vec<Vec<f64>>,
    pub stds: Vec<Vec<f64>>,
}

/// Mixture parameters of all features, indexed `[n][p][m]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmParams {
    pub weights: Vec<Vec<Vec<f64>>>,
    pub means: Vec<Vec<Vec<f64>>>,
    pub stds: Vec<Vec<Vec<f64>>>,
}

impl GmmParams {
    pub fn from_features(features: Vec<FeatureMixture>) -> Result<Self> {
        let mut params = GmmParams {
            weights: Vec::new(),
            means: Vec::new(),
            stds: Vec::new(),
        };
        for f in features {
            params.weights.push(f.weights);
            params.means.push(f.means);
            params.stds.push(f.stds);
        }
        params.validate()?;
        Ok(params)
    }

    pub fn n_features(&self) -> usize {
        self.weights.len()
    }

    pub fn n_states(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn n_components(&self) -> usize {
        self.weights
            .first()
            .and_then(|w| w.first())
            .map_or(0, Vec::len)
    }

    pub fn feature(&self, n: usize) -> FeatureMixture {
        FeatureMixture {
            weights: self.weights[n].clone(),
            means: self.means[n].clone(),
            stds: self.stds[n].clone(),
        }
    }

    pub fn set_feature(&mut self, n: usize, mixture: FeatureMixture) {
        self.weights[n] = mixture.weights;
        self.means[n] = mixture.means;
        self.stds[n] = mixture.stds;
    }

    pub fn validate(&self) -> Result<()> {
        let (nf, q, m) = (self.n_features(), self.n_states(), self.n_components());
        if nf == 0 || q == 0 || m == 0 {
            return Err(Error::Model("mixture with an empty dimension".into()));
        }
        let shaped = |a: &Vec<Vec<Vec<f64>>>| {
            a.len() == nf && a.iter().all(|s| s.len() == q && s.iter().all(|c| c.len() == m))
        };
        if !(shaped(&self.weights) && shaped(&self.means) && shaped(&self.stds)) {
            return Err(Error::Model("ragged mixture parameters".into()));
        }
        for n in 0..nf {
            for p in 0..q {
                let w = &self.weights[n][p];
                if w.iter().any(|&x| !(x >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(Error::Model(format!("weights of feature {n}, state {p} are not a distribution")));
                }
                if self.stds[n][p].iter().any(|&s| !(s >= SIGMA_FLOOR)) {
                    return Err(Error::Model(format!("sigma below floor for feature {n}, state {p}")));
                }
                if self.means[n][p].iter().any(|m| !m.is_finite()) {
                    return Err(Error::Model(format!("non-finite mean for feature {n}, state {p}")));
                }
            }
        }
        Ok(())
    }

    fn component_log_terms(&self, n: usize, p: usize, x: f64) -> impl Iterator<Item = f64> + '_ {
        let w = &self.weights[n][p];
        let mu = &self.means[n][p];
        let sd = &self.stds[n][p];
        (0..w.len()).map(move |m| w[m].ln() + log_gauss_pdf(x, mu[m], sd[m]))
    }

    /// log of `sum_m w N(x | mu, sigma)` for one feature and state.
    pub fn feature_log_density(&self, n: usize, p: usize, x: f64) -> f64 {
        log_sum_exp(self.component_log_terms(n, p, x))
    }

    /// log of the state's emission density for a full feature vector.
    pub fn state_log_density(&self, p: usize, row: &[f64]) -> f64 {
        debug_assert_eq!(row.len(), self.n_features());
        row.iter()
            .enumerate()
            .map(|(n, &x)| self.feature_log_density(n, p, x))
            .sum()
    }

    pub fn state_emission_density(&self, p: usize, row: &[f64]) -> f64 {
        self.state_log_density(p, row).exp()
    }
}

/// Component responsibilities of feature `n`, shaped `(Q, M, T)`.
///
/// `eta` is the `T x Q` state-posterior table; summing the result over
/// states and components gives 1 at every step.
pub fn responsibilities(params: &GmmParams, n: usize, eta: ArrayView2<f64>, column: &[f64]) -> Array3<f64> {
    let (q, m) = (params.n_states(), params.n_components());
    let t_len = column.len();
    debug_assert_eq!(eta.dim(), (t_len, q));
    let mut gamma = Array3::zeros((q, m, t_len));
    for (t, &x) in column.iter().enumerate() {
        for p in 0..q {
            let terms: Vec<f64> = params.component_log_terms(n, p, x).collect();
            let norm = log_sum_exp(terms.iter().copied());
            if !norm.is_finite() {
                log::debug!("component densities underflow for feature {n}, state {p}, step {t}");
                for j in 0..m {
                    gamma[[p, j, t]] = eta[[t, p]] / m as f64;
                }
                continue;
            }
            for (j, term) in terms.iter().enumerate() {
                gamma[[p, j, t]] = eta[[t, p]] * (term - norm).exp();
            }
        }
    }
    gamma
}

fn population_sd(values: &[f64]) -> f64 {
    let n = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Weighted M-step for one feature: responsibility-weighted means and
/// variances, standard EM weights, sigma clamped at `sigma_floor`.
pub fn update_params<R: Rng + ?Sized>(
    gamma: &Array3<f64>,
    column: &[f64],
    sigma_floor: f64,
    rng: &mut R,
) -> FeatureMixture {
    let (q, m, t_len) = gamma.dim();
    debug_assert_eq!(t_len, column.len());
    let mut out = FeatureMixture {
        weights: vec![vec![0.0; m]; q],
        means: vec![vec![0.0; m]; q],
        stds: vec![vec![0.0; m]; q],
    };
    let column_sd = population_sd(column).max(sigma_floor);
    for p in 0..q {
        let totals: Vec<f64> = (0..m)
            .map(|j| (0..t_len).map(|t| gamma[[p, j, t]]).sum())
            .collect();
        let state_total: f64 = totals.iter().sum();
        let mut raw_weights = totals.clone();
        for j in 0..m {
            if totals[j] < MIN_RESPONSIBILITY {
                let pick = column[rng.gen_range(0..t_len)];
                log::debug!("re-seeding starved component {j} of state {p} at {pick}");
                out.means[p][j] = pick;
                out.stds[p][j] = column_sd;
                raw_weights[j] = if state_total > 0.0 { state_total / m as f64 } else { 1.0 };
                continue;
            }
            let mean = (0..t_len).map(|t| gamma[[p, j, t]] * column[t]).sum::<f64>() / totals[j];
            let var = (0..t_len)
                .map(|t| gamma[[p, j, t]] * (column[t] - mean).powi(2))
                .sum::<f64>()
                / totals[j];
            out.means[p][j] = mean;
            out.stds[p][j] = var.sqrt().max(sigma_floor);
        }
        let norm: f64 = raw_weights.iter().sum();
        out.weights[p] = raw_weights.iter().map(|w| w / norm).collect();
    }
    out
}

/// Split sorted values into `parts` contiguous chunks and return each
/// chunk's mean and population standard deviation.
pub(crate) fn quantile_split(values: &[f64], parts: usize, sigma_floor: f64) -> Vec<(f64, f64)> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let overall_mean = sorted.iter().sum::<f64>() / sorted.len().max(1) as f64;
    let overall_sd = population_sd(&sorted).max(sigma_floor);
    (0..parts)
        .map(|i| {
            let lo = i * sorted.len() / parts;
            let hi = (i + 1) * sorted.len() / parts;
            let chunk = &sorted[lo..hi];
            if chunk.is_empty() {
                (overall_mean, overall_sd)
            } else {
                let mean = chunk.iter().sum::<f64>() / chunk.len() as f64;
                (mean, population_sd(chunk).max(sigma_floor).max(overall_sd * 0.1))
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct MixtureFit {
    pub mixture: FeatureMixture,
    /// Data log-likelihood before each M-step, then after the last one.
    pub log_likelihood_history: Vec<f64>,
    pub iterations: usize,
}

fn mixture_log_likelihood(params: &GmmParams, data: &[f64]) -> f64 {
    data.iter().map(|&x| params.feature_log_density(0, 0, x)).sum()
}

/// Plain EM for a univariate `components`-mixture (a single hidden state).
pub fn fit_univariate(data: &[f64], components: usize, seed: u64, max_iter: usize, tol: f64) -> Result<MixtureFit> {
    if data.is_empty() || components == 0 {
        return Err(Error::Config("need data and at least one component".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = quantile_split(data, components, SIGMA_FLOOR);
    let mut params = GmmParams::from_features(vec![FeatureMixture {
        weights: vec![vec![1.0 / components as f64; components]],
        means: vec![init.iter().map(|c| c.0).collect()],
        stds: vec![init.iter().map(|c| c.1).collect()],
    }])?;
    let eta = ndarray::Array2::ones((data.len(), 1));
    let mut history = vec![mixture_log_likelihood(&params, data)];
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let gamma = responsibilities(&params, 0, eta.view(), data);
        params.set_feature(0, update_params(&gamma, data, SIGMA_FLOOR, &mut rng));
        let ll = mixture_log_likelihood(&params, data);
        let prev = *history.last().expect("nonempty");
        history.push(ll);
        if (ll - prev).abs() <= tol * prev.abs().max(1.0) {
            break;
        }
    }
    Ok(MixtureFit {
        mixture: params.feature(0),
        log_likelihood_history: history,
        iterations,
    })
}
