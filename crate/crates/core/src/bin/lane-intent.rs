use std::collections::BTreeSet;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use lane_intent::experiment::{self, ExperimentConfig, SplitManifest};
use lane_intent::features::{featurize, FeatureSet, FeaturizedDataset, RegionSpec};
use lane_intent::ingest::{parse_lanes, parse_trajectories};
use lane_intent::predictor::{predict, ModelBank};
use lane_intent::synth::{self, SynthConfig};
use lane_intent::{Error, Result};

#[derive(Parser)]
#[command(name = "lane-intent", version, about = "Lane-change intention prediction with HMMs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset: trajectories.csv, lanes.csv, truth.csv.
    Synth {
        #[arg(long, default_value = "data")]
        out_dir: PathBuf,
        /// TOML file with generator settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Target vehicles per intention.
        #[arg(long)]
        per_intention: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        density: Option<f64>,
        #[arg(long)]
        no_interaction: bool,
    },
    /// Extract labeled trails and write a featurized CSV plus manifest.
    Featurize {
        #[arg(long)]
        trajectories: PathBuf,
        #[arg(long)]
        lanes: PathBuf,
        #[arg(long, default_value_t = lane_intent::DEFAULT_LANE_WIDTH)]
        lane_width: f64,
        /// Restrict to the vehicles listed in a truth file.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, default_value = "base+relpos+ratio")]
        feature_set: FeatureSet,
        #[arg(long, default_value = "features.csv")]
        out: PathBuf,
    },
    /// Train a model bank and write it with its train/test split.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value = "bank.json")]
        out: PathBuf,
    },
    /// Print `label,logL_1,logL_2,logL_3,prefix_len,tie_flag` per trail.
    Predict {
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        prediction_time: f64,
    },
    /// Accuracy versus prediction time on the held-out vehicles.
    Evaluate {
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Split manifest; defaults to the one saved next to the bank.
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "0,0.5,1,1.5,2,2.5,3")]
        prediction_times: Vec<f64>,
        /// Output CSV; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate every cell of the configured axes over all seeds.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
    },
}

/// Experiment configuration file plus per-key overrides.
#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    characterization: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    q: Option<String>,
    #[arg(long)]
    m: Option<String>,
    #[arg(long)]
    feature_set: Option<String>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    train_fraction: Option<String>,
    #[arg(long)]
    max_iter: Option<String>,
    #[arg(long)]
    prediction_times: Option<String>,
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    out_dir: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let pairs = [
            ("characterization", &self.characterization),
            ("k", &self.k),
            ("q", &self.q),
            ("m", &self.m),
            ("feature_set", &self.feature_set),
            ("mode", &self.mode),
            ("train_fraction", &self.train_fraction),
            ("max_iter", &self.max_iter),
            ("prediction_times", &self.prediction_times),
            ("seeds", &self.seeds),
            ("dataset", &self.dataset),
            ("out_dir", &self.out_dir),
        ];
        let mut overrides: Vec<(String, String)> = pairs
            .iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect();
        // paths and names stay strings even when they look numeric
        for (k, v) in overrides.iter_mut() {
            if matches!(k.as_str(), "dataset" | "out_dir" | "mode" | "characterization") && !v.contains(',') {
                *v = format!("{v:?}");
            }
        }
        ExperimentConfig::load(self.config.as_deref(), &overrides)
    }
}

fn dataset_path(cfg: &ExperimentConfig) -> Result<&Path> {
    cfg.dataset
        .as_deref()
        .ok_or_else(|| Error::Config("no dataset given (set `dataset` or pass --dataset)".into()))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::file(path, e))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            out_dir,
            config,
            seed,
            per_intention,
            noise,
            density,
            no_interaction,
        } => {
            let mut cfg: SynthConfig = match config {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| Error::file(&p, e))?;
                    toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?
                }
                None => SynthConfig::default(),
            };
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.trails_per_intention = per_intention.map_or(cfg.trails_per_intention, |n| [n; 3]);
            cfg.noise = noise.unwrap_or(cfg.noise);
            cfg.density = density.unwrap_or(cfg.density);
            cfg.interacting &= !no_interaction;
            let data = synth::generate(&cfg)?;
            for p in data.write_dir(&out_dir)? {
                println!("{}", p.display());
            }
        }
        Command::Featurize {
            trajectories,
            lanes,
            lane_width,
            truth,
            feature_set,
            out,
        } => {
            let tracks = parse_trajectories(open(&trajectories)?)?;
            let lanes = parse_lanes(open(&lanes)?, lane_width)?;
            let targets: Option<BTreeSet<String>> = match truth {
                Some(p) => Some(synth::read_truth(open(&p)?)?.into_iter().map(|r| r.vehicle_id).collect()),
                None => None,
            };
            let data = featurize(&tracks, &lanes, targets.as_ref(), feature_set, &RegionSpec::default())?;
            data.save(&out)?;
            log::info!("{} trails written to {}", data.trails.len(), out.display());
        }
        Command::Train { config, out } => {
            let cfg = config.resolve()?;
            let cell = cfg.single_cell()?;
            let data = FeaturizedDataset::load(dataset_path(&cfg)?)?;
            let (bank, split) = experiment::train_models(&data, &cell, cfg.seeds[0])?;
            bank.save(&out)?;
            split.save(&SplitManifest::path_for(&out))?;
            println!("{}", out.display());
        }
        Command::Predict {
            bank,
            dataset,
            prediction_time,
        } => {
            let bank = ModelBank::load(&bank)?;
            let data = FeaturizedDataset::load(&dataset)?.select(&bank.manifest.feature_names)?;
            let stdout = io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            for trail in &data.trails {
                match predict(&bank, &data.manifest, trail, prediction_time) {
                    Ok(p) => {
                        let [a, b, c] = p.log_likelihoods;
                        writeln!(w, "{},{a},{b},{c},{},{}", p.label, p.prefix_len, u8::from(p.tie))?;
                    }
                    Err(Error::Unscorable) => {
                        let len = lane_intent::predictor::prefix_len(trail.rows.len(), data.manifest.step_seconds, prediction_time)?;
                        writeln!(w, "unscorable,-inf,-inf,-inf,{len},0")?;
                    }
                    Err(e) => return Err(e),
                }
            }
            w.flush()?;
        }
        Command::Evaluate {
            bank,
            dataset,
            split,
            prediction_times,
            out,
        } => {
            let split_path = split.unwrap_or_else(|| SplitManifest::path_for(&bank));
            let bank = ModelBank::load(&bank)?;
            let data = FeaturizedDataset::load(&dataset)?;
            let test = if split_path.exists() {
                Some(SplitManifest::load(&split_path)?.test_set())
            } else {
                log::warn!("no split manifest at {}; evaluating every trail", split_path.display());
                None
            };
            let table = experiment::evaluate(&bank, &data, test.as_ref(), &prediction_times)?;
            match out {
                Some(p) => table.write_csv(BufWriter::new(File::create(&p).map_err(|e| Error::file(&p, e))?))?,
                None => table.write_csv(io::stdout().lock())?,
            }
        }
        Command::Sweep { config } => {
            let cfg = config.resolve()?;
            let data = FeaturizedDataset::load(dataset_path(&cfg)?)?;
            for r in experiment::sweep(&cfg, &data)? {
                let cells: Vec<String> = cfg
                    .prediction_times
                    .iter()
                    .map(|&t| format!("{t:.1}:{:.3}±{:.3}", r.mean(t), r.std(t)))
                    .collect();
                println!("{} {}", r.cell.name(), cells.join(" "));
            }
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
