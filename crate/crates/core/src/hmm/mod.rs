//! Hidden Markov models with scaled forward/backward recursions.
//!
//! Emission probabilities enter as a `T x Q` table of log values. Each step
//! subtracts the row maximum before exponentiating and then normalizes the
//! forward variables, so sequences with very small densities (many
//! continuous features) neither underflow nor overflow. The log-likelihood
//! is the sum of the per-step log scale factors.
//!
//! The backward variable is the conditional `P(o_{t+1..T} | s_t = q)`, the
//! state posterior is `alpha_t(q) beta_t(q)` normalized, and the pairwise
//! posterior uses the emission of the destination state at `t + 1`.

mod continuous;
mod discrete;

use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};

use crate::prob::log_sum_exp;
use crate::{Error, Result};

pub use continuous::{train_continuous, ContinuousTrainConfig, ContinuousTraining, GmmHmm};
pub use discrete::{train_discrete, DiscreteHmm, DiscreteTrainConfig, DiscreteTraining, TrainingMode};

/// Floor applied to every probability after an M-step.
pub const PROB_FLOOR: f64 = 1e-6;

/// A model that can turn an observation sequence into log emission values.
pub trait HiddenMarkovModel {
    type Observation: ?Sized;

    fn n_states(&self) -> usize;
    fn initial(&self) -> ArrayView1<'_, f64>;
    fn transitions(&self) -> ArrayView2<'_, f64>;

    /// `T x Q` table of `ln b_q(o_t)`.
    fn log_emission_table(&self, obs: &Self::Observation) -> Result<Array2<f64>>;
}

/// Per-sequence output of the forward/backward pass.
#[derive(Debug, Clone)]
pub struct Posteriors {
    /// Scaled forward variables; each row sums to 1.
    pub alpha: Array2<f64>,
    /// Scaled backward variables.
    pub beta: Array2<f64>,
    /// `ln` of the per-step normalizers; their sum is the log-likelihood.
    pub log_scales: Vec<f64>,
    /// State posteriors, `T x Q`.
    pub eta: Array2<f64>,
    /// Pairwise posteriors, `(T-1) x Q x Q`.
    pub xi: Array3<f64>,
    pub log_likelihood: f64,
}

/// Scaled forward/backward over a precomputed log-emission table.
pub fn posteriors_from_table(
    initial: ArrayView1<f64>,
    transitions: ArrayView2<f64>,
    log_b: ArrayView2<f64>,
) -> Result<Posteriors> {
    let (t_len, q) = log_b.dim();
    if t_len == 0 {
        return Err(Error::Config("empty observation sequence".into()));
    }
    // emissions rescaled by their per-step maximum
    let mut emit = Array2::<f64>::zeros((t_len, q));
    let mut offsets = vec![0.0; t_len];
    for t in 0..t_len {
        let row = log_b.row(t);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::ImpossibleSequence { step: t });
        }
        offsets[t] = max;
        for s in 0..q {
            emit[[t, s]] = (row[s] - max).exp();
        }
    }

    let mut alpha = Array2::<f64>::zeros((t_len, q));
    let mut scales = vec![0.0; t_len];
    for t in 0..t_len {
        for s in 0..q {
            let prior = if t == 0 {
                initial[s]
            } else {
                (0..q).map(|r| alpha[[t - 1, r]] * transitions[[r, s]]).sum()
            };
            alpha[[t, s]] = prior * emit[[t, s]];
        }
        let c: f64 = alpha.row(t).sum();
        if !(c > 0.0) {
            return Err(Error::ImpossibleSequence { step: t });
        }
        alpha.row_mut(t).mapv_inplace(|v| v / c);
        scales[t] = c;
    }

    let mut beta = Array2::<f64>::ones((t_len, q));
    for t in (0..t_len - 1).rev() {
        for s in 0..q {
            beta[[t, s]] = (0..q)
                .map(|r| transitions[[s, r]] * emit[[t + 1, r]] * beta[[t + 1, r]])
                .sum::<f64>()
                / scales[t + 1];
        }
    }

    let mut eta = &alpha * &beta;
    for mut row in eta.axis_iter_mut(Axis(0)) {
        let total = row.sum();
        row.mapv_inplace(|v| v / total);
    }

    let mut xi = Array3::<f64>::zeros((t_len.saturating_sub(1), q, q));
    for t in 0..t_len.saturating_sub(1) {
        let mut total = 0.0;
        for s in 0..q {
            for r in 0..q {
                let v = alpha[[t, s]] * transitions[[s, r]] * emit[[t + 1, r]] * beta[[t + 1, r]];
                xi[[t, s, r]] = v;
                total += v;
            }
        }
        xi.index_axis_mut(Axis(0), t).mapv_inplace(|v| v / total);
    }

    let log_scales: Vec<f64> = scales.iter().zip(&offsets).map(|(c, m)| c.ln() + m).collect();
    let log_likelihood = log_scales.iter().sum();
    Ok(Posteriors {
        alpha,
        beta,
        log_scales,
        eta,
        xi,
        log_likelihood,
    })
}

pub fn forward_backward<H: HiddenMarkovModel>(model: &H, obs: &H::Observation) -> Result<Posteriors> {
    let table = model.log_emission_table(obs)?;
    posteriors_from_table(model.initial(), model.transitions(), table.view())
}

/// `ln P(O | model)`; an impossible sequence scores negative infinity.
pub fn log_likelihood<H: HiddenMarkovModel>(model: &H, obs: &H::Observation) -> Result<f64> {
    match forward_backward(model, obs) {
        Ok(post) => Ok(post.log_likelihood),
        Err(Error::ImpossibleSequence { .. }) => Ok(f64::NEG_INFINITY),
        Err(e) => Err(e),
    }
}

/// `ln P(o_1..o_t | model)` for every prefix length `t = 1..T`, from one
/// scaled forward pass. Steps at and after an impossible observation score
/// negative infinity.
pub fn prefix_log_likelihoods<H: HiddenMarkovModel>(model: &H, obs: &H::Observation) -> Result<Vec<f64>> {
    let log_b = model.log_emission_table(obs)?;
    let (t_len, q) = log_b.dim();
    let (initial, transitions) = (model.initial(), model.transitions());
    let mut out = Vec::with_capacity(t_len);
    let mut alpha = Array1::<f64>::zeros(q);
    let mut total = 0.0;
    for t in 0..t_len {
        let row = log_b.row(t);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let next: Array1<f64> = (0..q)
            .map(|s| {
                let prior = if t == 0 {
                    initial[s]
                } else {
                    (0..q).map(|r| alpha[r] * transitions[[r, s]]).sum()
                };
                prior * (row[s] - max).exp()
            })
            .collect();
        let c = next.sum();
        if !max.is_finite() || !(c > 0.0) {
            out.resize(t_len, f64::NEG_INFINITY);
            return Ok(out);
        }
        alpha = next / c;
        total += c.ln() + max;
        out.push(total);
    }
    Ok(out)
}

/// Forward recursion carried out entirely in log space, without scaling.
pub fn log_forward(initial: ArrayView1<f64>, transitions: ArrayView2<f64>, log_b: ArrayView2<f64>) -> f64 {
    let (t_len, q) = log_b.dim();
    let ln_a = transitions.mapv(f64::ln);
    let mut la: Array1<f64> = (0..q).map(|s| initial[s].ln() + log_b[[0, s]]).collect();
    for t in 1..t_len {
        la = (0..q)
            .map(|s| log_sum_exp((0..q).map(|r| la[r] + ln_a[[r, s]])) + log_b[[t, s]])
            .collect();
    }
    log_sum_exp(la.iter().copied())
}

/// Most likely state path. Diagnostic only; prediction uses likelihoods.
pub fn viterbi<H: HiddenMarkovModel>(model: &H, obs: &H::Observation) -> Result<Vec<usize>> {
    let log_b = model.log_emission_table(obs)?;
    let (t_len, q) = log_b.dim();
    let ln_a = model.transitions().mapv(f64::ln);
    let pi = model.initial();
    let mut score: Vec<f64> = (0..q).map(|s| pi[s].ln() + log_b[[0, s]]).collect();
    let mut back = vec![vec![0usize; q]; t_len];
    for t in 1..t_len {
        let mut next = vec![f64::NEG_INFINITY; q];
        for s in 0..q {
            for r in 0..q {
                let v = score[r] + ln_a[[r, s]];
                if v > next[s] {
                    next[s] = v;
                    back[t][s] = r;
                }
            }
            next[s] += log_b[[t, s]];
        }
        score = next;
    }
    let mut state = (0..q)
        .max_by(|&x, &y| score[x].total_cmp(&score[y]))
        .ok_or(Error::ImpossibleSequence { step: 0 })?;
    let mut path = vec![state; t_len];
    for t in (1..t_len).rev() {
        state = back[t][state];
        path[t - 1] = state;
    }
    Ok(path)
}

/// Transition rows half from a symmetric Dirichlet draw and half on the
/// diagonal. Rows that are all alike make states indistinguishable in time,
/// a fixed point EM leaves only slowly.
pub(crate) fn initial_transitions<R: rand::Rng + ?Sized>(rng: &mut R, q: usize, floor: f64) -> Array2<f64> {
    let mut transitions = Array2::zeros((q, q));
    for i in 0..q {
        let mut row = crate::prob::dirichlet(rng, q, 1.0);
        for v in row.iter_mut() {
            *v *= 0.5;
        }
        row[i] += 0.5;
        transitions
            .row_mut(i)
            .assign(&Array1::from(crate::prob::floored_distribution(&row, floor)));
    }
    transitions
}

pub(crate) fn check_stochastic(name: &str, rows: ArrayView2<f64>) -> Result<()> {
    for (i, row) in rows.axis_iter(Axis(0)).enumerate() {
        if row.iter().any(|&v| !(v >= 0.0)) || (row.sum() - 1.0).abs() > 1e-9 {
            return Err(Error::Model(format!("row {i} of {name} is not a distribution")));
        }
    }
    Ok(())
}

pub(crate) fn relative_change(prev: f64, next: f64) -> f64 {
    (next - prev).abs() / prev.abs().max(1e-300)
}
