//! Train/evaluate/sweep harness.
//!
//! A configuration is a flat TOML table. Sweep axes (`characterization`,
//! `k`, `q`, `m`, `feature_set`) accept a scalar or a list; a sweep runs the
//! Cartesian product of the axes for every seed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use crate::features::{FeatureSet, FeatureTrail, FeaturizedDataset, Standardizer};
use crate::hmm::{train_continuous, train_discrete, ContinuousTrainConfig, DiscreteTrainConfig, TrainingMode};
use crate::kmeans::{self, KMeansConfig};
use crate::predictor::{prefix_len, select_label, BankModels, ModelBank, PerIntention, TrainingMetadata};
use crate::{Error, IntentionLabel, Result};

/// Minimum trails per intention, as a multiple of the state count.
pub const MIN_TRAILS_PER_STATE: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Characterization {
    Discrete,
    Continuous,
}

impl fmt::Display for Characterization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Characterization::Discrete => "discrete",
            Characterization::Continuous => "continuous",
        })
    }
}

impl FromStr for Characterization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "discrete" => Ok(Characterization::Discrete),
            "continuous" => Ok(Characterization::Continuous),
            _ => Err(Error::Config(format!("unknown characterization {s:?}"))),
        }
    }
}

fn one_or_many<'de, D, T>(de: D) -> std::result::Result<Vec<T>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany<T> {
        One(T),
        Many(Vec<T>),
    }
    Ok(match OneOrMany::deserialize(de)? {
        OneOrMany::One(v) => vec![v],
        OneOrMany::Many(v) => v,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(deserialize_with = "one_or_many")]
    pub characterization: Vec<Characterization>,
    /// Codebook sizes (discrete).
    #[serde(deserialize_with = "one_or_many")]
    pub k: Vec<usize>,
    /// Hidden state counts.
    #[serde(deserialize_with = "one_or_many")]
    pub q: Vec<usize>,
    /// Mixture components per feature and state (continuous).
    #[serde(deserialize_with = "one_or_many")]
    pub m: Vec<usize>,
    #[serde(deserialize_with = "one_or_many")]
    pub feature_set: Vec<FeatureSet>,
    pub mode: TrainingMode,
    pub train_fraction: f64,
    pub max_iter: usize,
    #[serde(deserialize_with = "one_or_many")]
    pub prediction_times: Vec<f64>,
    #[serde(deserialize_with = "one_or_many")]
    pub seeds: Vec<u64>,
    pub dataset: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            characterization: vec![Characterization::Discrete],
            k: vec![8],
            q: vec![4],
            m: vec![2],
            feature_set: vec![FeatureSet::Base],
            mode: TrainingMode::Pooled,
            train_fraction: 0.7,
            max_iter: 100,
            prediction_times: (0..=6).map(|i| i as f64 * 0.5).collect(),
            seeds: (0..5).collect(),
            dataset: None,
            out_dir: PathBuf::from("runs"),
        }
    }
}

/// Parse a command-line override into a TOML value: comma-separated items
/// become a list, items that parse as TOML scalars keep their type, and
/// anything else is a string.
fn override_value(raw: &str) -> toml::Value {
    let scalar = |s: &str| {
        let s = s.trim();
        toml::from_str::<toml::Table>(&format!("v = {s}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(s.to_string()))
    };
    if raw.contains(',') {
        toml::Value::Array(raw.split(',').filter(|s| !s.trim().is_empty()).map(scalar).collect())
    } else {
        scalar(raw)
    }
}

impl ExperimentConfig {
    /// Parse TOML text, then apply `key = value` overrides.
    pub fn from_toml(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for (key, value) in overrides {
            table.insert(key.replace('-', "_"), override_value(value));
        }
        let cfg: Self = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::file(p, e))?,
            None => String::new(),
        };
        Self::from_toml(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad("train_fraction must lie strictly between 0 and 1");
        }
        if [&self.k, &self.q, &self.m].iter().any(|axis| axis.is_empty() || axis.contains(&0)) {
            return bad("k, q and m must be non-empty lists of positive integers");
        }
        if self.characterization.is_empty() || self.feature_set.is_empty() {
            return bad("characterization and feature_set must not be empty");
        }
        if self.seeds.is_empty() || self.prediction_times.is_empty() {
            return bad("seeds and prediction_times must not be empty");
        }
        if self.max_iter == 0 {
            return bad("max_iter must be positive");
        }
        Ok(())
    }

    /// Every distinct cell of the axis product. Discrete cells ignore `m`
    /// and continuous cells ignore `k`.
    pub fn cells(&self) -> Vec<CellConfig> {
        let mut out = BTreeSet::new();
        for &characterization in &self.characterization {
            for &feature_set in &self.feature_set {
                for &q in &self.q {
                    let sizes: Vec<usize> = match characterization {
                        Characterization::Discrete => self.k.clone(),
                        Characterization::Continuous => self.m.clone(),
                    };
                    for size in sizes {
                        out.insert(CellKey {
                            characterization,
                            feature_set: feature_set.as_str(),
                            q,
                            size,
                        });
                    }
                }
            }
        }
        out.into_iter()
            .map(|key| CellConfig {
                characterization: key.characterization,
                feature_set: key.feature_set.parse().expect("round-trips"),
                q: key.q,
                k: (key.characterization == Characterization::Discrete).then_some(key.size),
                m: (key.characterization == Characterization::Continuous).then_some(key.size),
                mode: self.mode,
                train_fraction: self.train_fraction,
                max_iter: self.max_iter,
            })
            .collect()
    }

    /// The single cell of a configuration without multi-valued axes.
    pub fn single_cell(&self) -> Result<CellConfig> {
        let cells = self.cells();
        match cells.as_slice() {
            [cell] => Ok(cell.clone()),
            _ => Err(Error::Config(format!(
                "expected one model configuration, the axes describe {}",
                cells.len()
            ))),
        }
    }
}

#[derive(PartialEq, Eq, PartialOrd, Ord)]
struct CellKey {
    characterization: Characterization,
    feature_set: &'static str,
    q: usize,
    size: usize,
}

/// One point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellConfig {
    pub characterization: Characterization,
    pub feature_set: FeatureSet,
    pub q: usize,
    pub k: Option<usize>,
    pub m: Option<usize>,
    pub mode: TrainingMode,
    pub train_fraction: f64,
    pub max_iter: usize,
}

impl CellConfig {
    pub fn discrete(k: usize, q: usize, feature_set: FeatureSet) -> Self {
        Self {
            characterization: Characterization::Discrete,
            feature_set,
            q,
            k: Some(k),
            m: None,
            mode: TrainingMode::Pooled,
            train_fraction: 0.7,
            max_iter: 100,
        }
    }

    pub fn continuous(q: usize, m: usize, feature_set: FeatureSet) -> Self {
        Self {
            characterization: Characterization::Continuous,
            feature_set,
            q,
            k: None,
            m: Some(m),
            mode: TrainingMode::Pooled,
            train_fraction: 0.7,
            max_iter: 100,
        }
    }

    /// File-name-safe identifier, e.g. `discrete_k8_q4_base`.
    pub fn name(&self) -> String {
        let size = match self.characterization {
            Characterization::Discrete => format!("k{}", self.k.unwrap_or(0)),
            Characterization::Continuous => format!("m{}", self.m.unwrap_or(0)),
        };
        let features = self.feature_set.as_str().replace('+', "-");
        format!("{}_{size}_q{}_{features}", self.characterization, self.q)
    }
}

/// Which vehicles were held out for testing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub train_fraction: f64,
    pub train_vehicles: Vec<String>,
    pub test_vehicles: Vec<String>,
    pub test_trails: PerIntention<usize>,
}

impl SplitManifest {
    /// Sidecar path stored next to a bank file.
    pub fn path_for(bank_path: &Path) -> PathBuf {
        let mut name = bank_path.file_stem().unwrap_or_default().to_os_string();
        name.push(".split.json");
        bank_path.with_file_name(name)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::file(path, e))?;
        serde_json::to_writer_pretty(BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::file(path, e))?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }

    pub fn test_set(&self) -> BTreeSet<String> {
        self.test_vehicles.iter().cloned().collect()
    }
}

/// The label a vehicle is stratified under: its first lane change, or Keep.
fn vehicle_label(trails: &[&FeatureTrail]) -> IntentionLabel {
    trails
        .iter()
        .map(|t| t.label)
        .find(|&l| l != IntentionLabel::Keep)
        .unwrap_or(IntentionLabel::Keep)
}

/// Seeded split by vehicle, stratified by intention.
pub fn split_by_vehicle(dataset: &FeaturizedDataset, train_fraction: f64, seed: u64) -> SplitManifest {
    let mut by_vehicle: BTreeMap<&str, Vec<&FeatureTrail>> = BTreeMap::new();
    for t in &dataset.trails {
        by_vehicle.entry(&t.vehicle_id).or_default().push(t);
    }
    let mut groups: [Vec<&str>; 3] = Default::default();
    for (id, trails) in &by_vehicle {
        groups[vehicle_label(trails).index()].push(id);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for group in groups.iter_mut() {
        group.shuffle(&mut rng);
        let n_train = (group.len() as f64 * train_fraction).round() as usize;
        train.extend(group[..n_train].iter().map(|s| s.to_string()));
        test.extend(group[n_train..].iter().map(|s| s.to_string()));
    }
    train.sort();
    test.sort();
    let test_ids: BTreeSet<&str> = test.iter().map(String::as_str).collect();
    let test_trails = PerIntention::from_fn(|label| {
        dataset
            .trails
            .iter()
            .filter(|t| t.label == label && test_ids.contains(t.vehicle_id.as_str()))
            .count()
    });
    SplitManifest {
        seed,
        train_fraction,
        train_vehicles: train,
        test_vehicles: test,
        test_trails,
    }
}

fn stack_rows(trails: &[&FeatureTrail], n: usize) -> Array2<f64> {
    let flat: Vec<f64> = trails.iter().flat_map(|t| t.rows.iter().flatten().copied()).collect();
    Array2::from_shape_vec((flat.len() / n.max(1), n), flat).expect("uniform arity")
}

/// Fit a model bank on the training vehicles of `split`.
pub fn train_bank(dataset: &FeaturizedDataset, cell: &CellConfig, split: &SplitManifest) -> Result<ModelBank> {
    let dataset = dataset.select(&cell.feature_set.feature_names())?;
    let n = dataset.n_features();
    let train_ids: BTreeSet<&str> = split.train_vehicles.iter().map(String::as_str).collect();
    let train: Vec<&FeatureTrail> = dataset
        .trails
        .iter()
        .filter(|t| train_ids.contains(t.vehicle_id.as_str()))
        .collect();
    for label in IntentionLabel::ALL {
        let found = train.iter().filter(|t| t.label == label).count();
        if found == 0 {
            return Err(Error::TooFewTrails {
                label,
                found,
                needed: 1,
            });
        }
    }
    let rows = stack_rows(&train, n);
    let standardizer = Standardizer::fit(&rows);
    let standardized = standardizer.transform(&rows);
    let class_trails = |label: IntentionLabel| -> Vec<&FeatureTrail> { train.iter().copied().filter(|t| t.label == label).collect() };
    let seed = split.seed;

    let (models, iterations, final_ll) = match cell.characterization {
        Characterization::Discrete => {
            let k = cell.k.ok_or_else(|| Error::Config("discrete cell without k".into()))?;
            let codebook = kmeans::fit(standardized.view(), &KMeansConfig::new(k, seed))?.codebook;
            let fits = PerIntention::try_from_fn(|label| {
                let sequences: Vec<Vec<usize>> = class_trails(label)
                    .iter()
                    .map(|t| {
                        t.rows
                            .iter()
                            .map(|r| codebook.assign_row(&standardizer.transform_row(r)))
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<_>>()?;
                let mut cfg = DiscreteTrainConfig::new(cell.q, k, seed.wrapping_add(label.index() as u64));
                cfg.mode = cell.mode;
                cfg.max_iter = cell.max_iter;
                train_discrete(&sequences, &cfg)
            })?;
            let iterations = PerIntention::from_fn(|l| fits.get(l).iterations);
            let final_ll = PerIntention::from_fn(|l| fits.get(l).final_log_likelihood());
            let models = BankModels::Discrete {
                codebook,
                models: PerIntention::from_fn(|l| fits.get(l).model.clone()),
            };
            (models, iterations, final_ll)
        }
        Characterization::Continuous => {
            let m = cell.m.ok_or_else(|| Error::Config("continuous cell without m".into()))?;
            let fits: Vec<_> = IntentionLabel::ALL
                .par_iter()
                .map(|&label| {
                    let sequences: Vec<Vec<Vec<f64>>> = class_trails(label)
                        .iter()
                        .map(|t| t.rows.iter().map(|r| standardizer.transform_row(r)).collect())
                        .collect();
                    let mut cfg = ContinuousTrainConfig::new(cell.q, m, seed.wrapping_add(label.index() as u64));
                    cfg.max_iter = cell.max_iter;
                    train_continuous(&sequences, &cfg)
                })
                .collect::<Result<_>>()?;
            let iterations = PerIntention::from_fn(|l| fits[l.index()].iterations);
            let final_ll = PerIntention::from_fn(|l| fits[l.index()].final_log_likelihood());
            let models = BankModels::Continuous {
                components: m,
                models: PerIntention::from_fn(|l| fits[l.index()].model.clone()),
            };
            (models, iterations, final_ll)
        }
    };

    let bank = ModelBank {
        manifest: dataset.manifest.clone(),
        standardizer,
        models,
        metadata: TrainingMetadata {
            seed,
            states: cell.q,
            mode: (cell.characterization == Characterization::Discrete).then_some(cell.mode),
            iterations,
            final_log_likelihood: final_ll,
            training_trails: PerIntention::from_fn(|l| class_trails(l).len()),
        },
    };
    bank.validate()?;
    Ok(bank)
}

/// Check class sizes, split by vehicle, and train a bank.
pub fn train_models(dataset: &FeaturizedDataset, cell: &CellConfig, seed: u64) -> Result<(ModelBank, SplitManifest)> {
    let needed = cell.q * MIN_TRAILS_PER_STATE;
    for label in IntentionLabel::ALL {
        let found = dataset.count(label);
        if found < needed {
            return Err(Error::TooFewTrails { label, found, needed });
        }
    }
    let split = split_by_vehicle(dataset, cell.train_fraction, seed);
    let bank = train_bank(dataset, cell, &split)?;
    Ok((bank, split))
}

/// Accuracy at one prediction time.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyRow {
    pub prediction_time: f64,
    pub n_correct: usize,
    pub n_total: usize,
    pub correct: PerIntention<usize>,
    pub total: PerIntention<usize>,
}

impl AccuracyRow {
    pub fn accuracy(&self) -> f64 {
        self.n_correct as f64 / self.n_total as f64
    }

    pub fn class_accuracy(&self, label: IntentionLabel) -> Option<f64> {
        let total = *self.total.get(label);
        (total > 0).then(|| *self.correct.get(label) as f64 / total as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyTable {
    pub rows: Vec<AccuracyRow>,
    /// Trails every model scored as impossible; counted as incorrect.
    pub unscorable: usize,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:.6}"))
}

impl AccuracyTable {
    pub const HEADER: [&'static str; 7] = [
        "prediction_time",
        "accuracy",
        "n_correct",
        "n_total",
        "acc_change_left",
        "acc_change_right",
        "acc_keep",
    ];

    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(Self::HEADER)?;
        for r in &self.rows {
            w.write_record([
                format!("{:.1}", r.prediction_time),
                format!("{:.6}", r.accuracy()),
                r.n_correct.to_string(),
                r.n_total.to_string(),
                fmt_opt(r.class_accuracy(IntentionLabel::ChangeLeft)),
                fmt_opt(r.class_accuracy(IntentionLabel::ChangeRight)),
                fmt_opt(r.class_accuracy(IntentionLabel::Keep)),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn at(&self, prediction_time: f64) -> Option<&AccuracyRow> {
        self.rows.iter().find(|r| (r.prediction_time - prediction_time).abs() < 1e-9)
    }
}

/// Accuracy of `bank` on the trails of `test` vehicles (all trails when
/// `None`) at each prediction time.
pub fn evaluate(
    bank: &ModelBank,
    dataset: &FeaturizedDataset,
    test: Option<&BTreeSet<String>>,
    grid: &[f64],
) -> Result<AccuracyTable> {
    let dataset = if dataset.manifest.feature_names == bank.manifest.feature_names {
        dataset.clone()
    } else {
        dataset.select(&bank.manifest.feature_names)?
    };
    bank.check_manifest(&dataset.manifest)?;
    let trails: Vec<&FeatureTrail> = dataset
        .trails
        .iter()
        .filter(|t| test.map_or(true, |ids| ids.contains(&t.vehicle_id)))
        .collect();
    if trails.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let lengths: Vec<usize> = grid
        .iter()
        .map(|&tau| prefix_len(bank.manifest.trail_len, bank.manifest.step_seconds, tau))
        .collect::<Result<_>>()?;
    let scores: Vec<Vec<[f64; 3]>> = trails
        .par_iter()
        .map(|t| bank.prefix_scores(&t.rows))
        .collect::<Result<_>>()?;
    let mut unscorable = 0;
    let rows = grid
        .iter()
        .zip(&lengths)
        .map(|(&tau, &len)| {
            let mut correct = [0usize; 3];
            let mut total = [0usize; 3];
            for (trail, s) in trails.iter().zip(&scores) {
                let i = trail.label.index();
                total[i] += 1;
                match select_label(s[len - 1]) {
                    Ok((label, _)) if label == trail.label => correct[i] += 1,
                    Ok(_) => {}
                    Err(Error::Unscorable) => unscorable += 1,
                    Err(e) => return Err(e),
                }
            }
            Ok(AccuracyRow {
                prediction_time: tau,
                n_correct: correct.iter().sum(),
                n_total: total.iter().sum(),
                correct: PerIntention::from_fn(|l| correct[l.index()]),
                total: PerIntention::from_fn(|l| total[l.index()]),
            })
        })
        .collect::<Result<_>>()?;
    Ok(AccuracyTable { rows, unscorable })
}

/// Per-seed tables of one cell and their mean and standard deviation.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub cell: CellConfig,
    pub seeds: Vec<u64>,
    pub tables: Vec<AccuracyTable>,
}

impl CellResult {
    /// Mean accuracy over seeds at each grid point.
    pub fn mean(&self, prediction_time: f64) -> f64 {
        let values = self.values(prediction_time);
        values.iter().sum::<f64>() / values.len() as f64
    }

    /// Sample standard deviation over seeds; zero for a single seed.
    pub fn std(&self, prediction_time: f64) -> f64 {
        let values = self.values(prediction_time);
        if values.len() < 2 {
            return 0.0;
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
    }

    fn values(&self, prediction_time: f64) -> Vec<f64> {
        self.tables
            .iter()
            .map(|t| t.at(prediction_time).map_or(f64::NAN, AccuracyRow::accuracy))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        let mut header = vec!["prediction_time".to_string(), "mean_accuracy".into(), "std_accuracy".into()];
        header.extend(self.seeds.iter().map(|s| format!("accuracy_seed_{s}")));
        w.write_record(&header)?;
        for row in &self.tables[0].rows {
            let tau = row.prediction_time;
            let mut record = vec![format!("{tau:.1}"), format!("{:.6}", self.mean(tau)), format!("{:.6}", self.std(tau))];
            record.extend(self.values(tau).iter().map(|v| format!("{v:.6}")));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Train and evaluate one cell for each seed.
pub fn run_cell(dataset: &FeaturizedDataset, cell: &CellConfig, seeds: &[u64], grid: &[f64]) -> Result<CellResult> {
    let tables = seeds
        .par_iter()
        .map(|&seed| {
            let (bank, split) = train_models(dataset, cell, seed)?;
            evaluate(&bank, dataset, Some(&split.test_set()), grid)
        })
        .collect::<Result<_>>()?;
    Ok(CellResult {
        cell: cell.clone(),
        seeds: seeds.to_vec(),
        tables,
    })
}

/// Run every cell of `cfg` and write one CSV per cell plus the resolved
/// configuration into `cfg.out_dir`.
pub fn sweep(cfg: &ExperimentConfig, dataset: &FeaturizedDataset) -> Result<Vec<CellResult>> {
    cfg.validate()?;
    let out = &cfg.out_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::file(out, e))?;
    let resolved = out.join("config.resolved.toml");
    std::fs::write(&resolved, cfg.to_toml()).map_err(|e| Error::file(&resolved, e))?;
    let results: Vec<CellResult> = cfg
        .cells()
        .par_iter()
        .map(|cell| run_cell(dataset, cell, &cfg.seeds, &cfg.prediction_times))
        .collect::<Result<_>>()?;
    for r in &results {
        let path = out.join(format!("{}.csv", r.cell.name()));
        let file = File::create(&path).map_err(|e| Error::file(&path, e))?;
        r.write_csv(BufWriter::new(file))?;
        log::info!("wrote {}", path.display());
    }
    Ok(results)
}
