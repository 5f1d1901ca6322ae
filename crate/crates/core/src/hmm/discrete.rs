use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_stochastic, forward_backward, initial_transitions, relative_change, HiddenMarkovModel, Posteriors, PROB_FLOOR};
use crate::prob::{dirichlet, floored_distribution};
use crate::{Error, Result};

/// HMM with a finite emission alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteHmm {
    #[serde(with = "crate::serde_arrays::vector")]
    pub initial: Array1<f64>,
    #[serde(with = "crate::serde_arrays::matrix")]
    pub transitions: Array2<f64>,
    /// `Q x K` emission probabilities.
    #[serde(with = "crate::serde_arrays::matrix")]
    pub emissions: Array2<f64>,
}

impl DiscreteHmm {
    pub fn new(initial: Array1<f64>, transitions: Array2<f64>, emissions: Array2<f64>) -> Result<Self> {
        let model = Self {
            initial,
            transitions,
            emissions,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let q = self.initial.len();
        if q == 0 || self.transitions.dim() != (q, q) || self.emissions.nrows() != q || self.emissions.ncols() == 0 {
            return Err(Error::Model("inconsistent discrete HMM shapes".into()));
        }
        check_stochastic("initial", self.initial.view().insert_axis(ndarray::Axis(0)))?;
        check_stochastic("transitions", self.transitions.view())?;
        check_stochastic("emissions", self.emissions.view())
    }

    pub fn n_symbols(&self) -> usize {
        self.emissions.ncols()
    }

    /// Draw a state path and symbol sequence of length `len`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, len: usize) -> (Vec<usize>, Vec<usize>) {
        let draw = |rng: &mut R, row: ArrayView1<f64>| {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            for (i, &p) in row.iter().enumerate() {
                acc += p;
                if u < acc {
                    return i;
                }
            }
            row.len() - 1
        };
        let mut states = Vec::with_capacity(len);
        let mut symbols = Vec::with_capacity(len);
        for t in 0..len {
            let s = if t == 0 {
                draw(rng, self.initial.view())
            } else {
                draw(rng, self.transitions.row(states[t - 1]))
            };
            states.push(s);
            symbols.push(draw(rng, self.emissions.row(s)));
        }
        (states, symbols)
    }
}

impl HiddenMarkovModel for DiscreteHmm {
    type Observation = [usize];

    fn n_states(&self) -> usize {
        self.initial.len()
    }

    fn initial(&self) -> ArrayView1<'_, f64> {
        self.initial.view()
    }

    fn transitions(&self) -> ArrayView2<'_, f64> {
        self.transitions.view()
    }

    fn log_emission_table(&self, obs: &[usize]) -> Result<Array2<f64>> {
        let k = self.n_symbols();
        let mut table = Array2::zeros((obs.len(), self.n_states()));
        for (t, &o) in obs.iter().enumerate() {
            if o >= k {
                return Err(Error::SymbolOutOfRange { symbol: o, alphabet: k });
            }
            for q in 0..self.n_states() {
                table[[t, q]] = self.emissions[[q, o]].ln();
            }
        }
        Ok(table)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingMode {
    /// Multi-sequence Baum-Welch: statistics summed over every sequence
    /// before each re-estimation.
    #[default]
    Pooled,
    /// One pass over the sequences, averaging per-sequence re-estimates.
    #[serde(rename = "paper")]
    Averaged,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteTrainConfig {
    pub states: usize,
    pub symbols: usize,
    pub seed: u64,
    pub mode: TrainingMode,
    pub max_iter: usize,
    pub tol: f64,
    pub prob_floor: f64,
    /// Independent pooled runs from different initial models; the run with
    /// the highest final likelihood is kept.
    pub restarts: usize,
}

impl DiscreteTrainConfig {
    pub fn new(states: usize, symbols: usize, seed: u64) -> Self {
        Self {
            states,
            symbols,
            seed,
            mode: TrainingMode::Pooled,
            max_iter: 100,
            tol: 1e-6,
            prob_floor: PROB_FLOOR,
            restarts: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DiscreteTraining {
    pub model: DiscreteHmm,
    /// Total training log-likelihood of the initial model and after every
    /// re-estimation.
    pub log_likelihood_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl DiscreteTraining {
    pub fn final_log_likelihood(&self) -> f64 {
        *self.log_likelihood_history.last().expect("history is never empty")
    }
}

/// Expected counts accumulated over sequences.
struct Counts {
    initial: Array1<f64>,
    transitions: Array2<f64>,
    emissions: Array2<f64>,
    log_likelihood: f64,
}

impl Counts {
    fn zeros(q: usize, k: usize) -> Self {
        Self {
            initial: Array1::zeros(q),
            transitions: Array2::zeros((q, q)),
            emissions: Array2::zeros((q, k)),
            log_likelihood: 0.0,
        }
    }

    fn add_sequence(&mut self, obs: &[usize], post: &Posteriors) {
        self.initial += &post.eta.row(0);
        self.transitions += &post.xi.sum_axis(ndarray::Axis(0));
        for (t, &o) in obs.iter().enumerate() {
            let mut col = self.emissions.column_mut(o);
            col += &post.eta.row(t);
        }
        self.log_likelihood += post.log_likelihood;
    }

    fn reestimate(&self, floor: f64) -> DiscreteHmm {
        DiscreteHmm {
            initial: Array1::from(floored_distribution(self.initial.as_slice().expect("contiguous"), floor)),
            transitions: floored_rows(&self.transitions, floor),
            emissions: floored_rows(&self.emissions, floor),
        }
    }
}

fn floored_rows(counts: &Array2<f64>, floor: f64) -> Array2<f64> {
    let mut out = Array2::zeros(counts.raw_dim());
    for (i, row) in counts.rows().into_iter().enumerate() {
        let p = floored_distribution(&row.to_vec(), floor);
        out.row_mut(i).assign(&Array1::from(p));
    }
    out
}

fn e_step(model: &DiscreteHmm, sequences: &[Vec<usize>]) -> Result<Counts> {
    let posteriors: Vec<Posteriors> = sequences
        .par_iter()
        .map(|s| forward_backward(model, s.as_slice()))
        .collect::<Result<_>>()?;
    let mut counts = Counts::zeros(model.n_states(), model.n_symbols());
    for (s, post) in sequences.iter().zip(&posteriors) {
        counts.add_sequence(s, post);
    }
    Ok(counts)
}

fn initial_model(sequences: &[Vec<usize>], cfg: &DiscreteTrainConfig, restart: usize) -> DiscreteHmm {
    let (q, k) = (cfg.states, cfg.symbols);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(restart as u64);
    let initial = floored_distribution(&dirichlet(&mut rng, q, 1.0), cfg.prob_floor);
    let transitions = initial_transitions(&mut rng, q, cfg.prob_floor);
    let mut freq = vec![0.0; k];
    for &o in sequences.iter().flatten() {
        freq[o] += 1.0;
    }
    let mut emissions = Array2::zeros((q, k));
    for i in 0..q {
        let perturbed: Vec<f64> = freq
            .iter()
            .map(|f| (f + 1.0) * (1.0 + rng.gen_range(-0.1..0.1)))
            .collect();
        emissions
            .row_mut(i)
            .assign(&Array1::from(floored_distribution(&perturbed, cfg.prob_floor)));
    }
    DiscreteHmm {
        initial: Array1::from(initial),
        transitions,
        emissions,
    }
}

fn validate_input(sequences: &[Vec<usize>], cfg: &DiscreteTrainConfig) -> Result<()> {
    if sequences.is_empty() {
        return Err(Error::NoSequences);
    }
    if cfg.states == 0 || cfg.symbols == 0 {
        return Err(Error::Config("state and symbol counts must be positive".into()));
    }
    if sequences.iter().any(Vec::is_empty) {
        return Err(Error::Config("empty observation sequence".into()));
    }
    if let Some(&o) = sequences.iter().flatten().find(|&&o| o >= cfg.symbols) {
        return Err(Error::SymbolOutOfRange {
            symbol: o,
            alphabet: cfg.symbols,
        });
    }
    Ok(())
}

/// Fit a discrete HMM to integer observation sequences.
pub fn train_discrete(sequences: &[Vec<usize>], cfg: &DiscreteTrainConfig) -> Result<DiscreteTraining> {
    validate_input(sequences, cfg)?;
    match cfg.mode {
        TrainingMode::Pooled => {
            let mut best: Option<DiscreteTraining> = None;
            for restart in 0..cfg.restarts.max(1) {
                let run = train_pooled(sequences, initial_model(sequences, cfg, restart), cfg)?;
                if best
                    .as_ref()
                    .map_or(true, |b| run.final_log_likelihood() > b.final_log_likelihood())
                {
                    best = Some(run);
                }
            }
            Ok(best.expect("at least one run"))
        }
        TrainingMode::Averaged => train_averaged(sequences, initial_model(sequences, cfg, 0), cfg),
    }
}

fn train_pooled(sequences: &[Vec<usize>], mut model: DiscreteHmm, cfg: &DiscreteTrainConfig) -> Result<DiscreteTraining> {
    let mut counts = e_step(&model, sequences)?;
    let mut history = vec![counts.log_likelihood];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        model = counts.reestimate(cfg.prob_floor);
        let next = e_step(&model, sequences)?;
        let prev = counts.log_likelihood;
        history.push(next.log_likelihood);
        counts = next;
        if relative_change(prev, counts.log_likelihood) < cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(DiscreteTraining {
        model,
        log_likelihood_history: history,
        iterations,
        converged,
    })
}

/// Per-sequence re-estimate; rows with no expected visits keep the current
/// model's row.
fn single_sequence_estimate(model: &DiscreteHmm, obs: &[usize], post: &Posteriors) -> (Array1<f64>, Array2<f64>, Array2<f64>) {
    let (q, k) = (model.n_states(), model.n_symbols());
    let t_len = obs.len();
    let mut a = model.transitions.clone();
    let mut b = model.emissions.clone();
    for s in 0..q {
        let leave: f64 = (0..t_len - 1).map(|t| post.eta[[t, s]]).sum();
        if leave > 0.0 {
            for r in 0..q {
                a[[s, r]] = (0..t_len - 1).map(|t| post.xi[[t, s, r]]).sum::<f64>() / leave;
            }
        }
        let occupy: f64 = post.eta.column(s).sum();
        if occupy > 0.0 {
            let mut row = vec![0.0; k];
            for (t, &o) in obs.iter().enumerate() {
                row[o] += post.eta[[t, s]];
            }
            for j in 0..k {
                b[[s, j]] = row[j] / occupy;
            }
        }
    }
    (post.eta.row(0).to_owned(), a, b)
}

fn train_averaged(sequences: &[Vec<usize>], mut model: DiscreteHmm, cfg: &DiscreteTrainConfig) -> Result<DiscreteTraining> {
    let (q, k) = (model.n_states(), model.n_symbols());
    let initial_ll = e_step(&model, sequences)?.log_likelihood;
    let mut avg_pi = Array1::<f64>::zeros(q);
    let mut avg_a = Array2::<f64>::zeros((q, q));
    let mut avg_b = Array2::<f64>::zeros((q, k));
    let mut converged = false;
    let mut iterations = 0;
    for (l, obs) in sequences.iter().enumerate() {
        iterations = l + 1;
        let post = forward_backward(&model, obs.as_slice())?;
        let (pi_l, a_l, b_l) = single_sequence_estimate(&model, obs, &post);
        let w = 1.0 / (l + 1) as f64;
        let step_pi = (&pi_l - &avg_pi) * w;
        let step_a = (&a_l - &avg_a) * w;
        let step_b = (&b_l - &avg_b) * w;
        avg_pi += &step_pi;
        avg_a += &step_a;
        avg_b += &step_b;
        model = DiscreteHmm {
            initial: Array1::from(floored_distribution(avg_pi.as_slice().expect("contiguous"), cfg.prob_floor)),
            transitions: floored_rows(&avg_a, cfg.prob_floor),
            emissions: floored_rows(&avg_b, cfg.prob_floor),
        };
        let moved = step_pi
            .iter()
            .chain(step_a.iter())
            .chain(step_b.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        if l > 0 && moved < cfg.tol {
            converged = true;
            break;
        }
    }
    let final_ll = e_step(&model, sequences)?.log_likelihood;
    Ok(DiscreteTraining {
        model,
        log_likelihood_history: vec![initial_ll, final_ll],
        iterations,
        converged,
    })
}
