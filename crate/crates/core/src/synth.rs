//! Synthetic multi-lane traffic with known intentions.
//!
//! Every target vehicle gets its own scene, nine steps long and separated
//! in time from all other scenes, on a straight road running along +x.
//! Lane ids grow toward +y, which is the left of the travel direction.
//! Lane-change targets follow a logistic lateral profile whose lane-line
//! crossing falls between the eighth and ninth step. Lane-keep targets
//! wobble inside their lane. Surrounding vehicles keep their lanes.
//!
//! With `interacting` set, traffic around a target depends on its
//! intention: a lane changer has a slower leader ahead, an open gap and a
//! faster vehicle in the lane it moves into, and a vehicle alongside on the
//! other side. Lane keepers see symmetric traffic.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::{LaneGeometry, TrajectoryPoint, VehicleTrack};
use crate::{Error, IntentionLabel, Result, STEP_SECONDS, TRAIL_LEN};

/// Seconds between the starts of consecutive scenes.
pub const SCENE_SPACING: f64 = 10.0;

/// Half-length of the road stretch around a target that gets traffic.
const TRAFFIC_REACH: f64 = 30.0;

/// Bound on per-step speed jitter, m/s.
pub const SPEED_JITTER: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub lanes: usize,
    pub lane_width: f64,
    pub road_length: f64,
    /// Target vehicles per intention: change left, change right, keep.
    pub trails_per_intention: [usize; 3],
    pub speed_min: f64,
    pub speed_max: f64,
    /// Seconds for the lateral move to cover 95% of a lane width.
    pub change_duration: f64,
    /// Standard deviation of position noise, m.
    pub noise: f64,
    /// Surrounding vehicles per lane per 100 m.
    pub density: f64,
    pub interacting: bool,
    /// Probability that each intention cue is present around a lane
    /// changer.
    pub cue_probability: f64,
    /// Lateral pre-positioning of lane changers toward the target lane, m.
    pub intent_bias: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            lanes: 3,
            lane_width: crate::DEFAULT_LANE_WIDTH,
            road_length: 500.0,
            trails_per_intention: [200, 200, 200],
            speed_min: 8.0,
            speed_max: 16.0,
            change_duration: 2.5,
            noise: 0.08,
            density: 2.0,
            interacting: true,
            cue_probability: 0.7,
            intent_bias: 0.25,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let window = TRAIL_LEN as f64 * STEP_SECONDS;
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.lanes < 2 {
            return bad("need at least two lanes");
        }
        if !(self.lane_width > 0.0 && self.road_length > 0.0) {
            return bad("lane width and road length must be positive");
        }
        if !(self.speed_min > 0.0 && self.speed_max >= self.speed_min) {
            return bad("speed range must be positive and ordered");
        }
        if !(self.change_duration > 0.0) || self.change_duration >= window {
            return Err(Error::Config(format!(
                "lane-change duration {} s must be positive and shorter than the {window} s window",
                self.change_duration
            )));
        }
        if !(self.noise >= 0.0 && self.density >= 0.0 && self.intent_bias >= 0.0) {
            return bad("noise, density and intent bias must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.cue_probability) {
            return bad("cue probability must lie in [0, 1]");
        }
        let travel = self.speed_max * window + 2.0 * TRAFFIC_REACH + 20.0;
        if self.road_length < travel + 40.0 {
            return Err(Error::Config(format!("road must be at least {} m long", travel + 40.0)));
        }
        Ok(())
    }
}

/// Ground truth for one target vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub vehicle_id: String,
    pub intended_label: IntentionLabel,
    /// Time of the first step in the new lane; lane keepers have none.
    pub crossing_t: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub lanes: Vec<LaneGeometry>,
    pub tracks: Vec<VehicleTrack>,
    pub truth: Vec<TruthRecord>,
}

/// File names written by [`SynthDataset::write_dir`].
pub const TRAJECTORIES_FILE: &str = "trajectories.csv";
pub const LANES_FILE: &str = "lanes.csv";
pub const TRUTH_FILE: &str = "truth.csv";

fn round4(v: f64) -> f64 {
    let r = (v * 1e4).round() / 1e4;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Lateral position relative to the start lane centerline, before noise.
fn change_profile(cfg: &SynthConfig, t: f64, crossing: f64) -> f64 {
    // logistic scale so that 95% of the move takes `change_duration`
    let s = cfg.change_duration / (2.0 * 39f64.ln());
    // midpoint 0.2 s before the ninth step
    let sigma = 1.0 / (1.0 + (-(t - (crossing - 0.2)) / s).exp());
    cfg.intent_bias * (1.0 - sigma) + cfg.lane_width * sigma
}

struct Mover {
    id: String,
    lane: usize,
    x: f64,
    speed: f64,
}

struct Scene {
    tracks: Vec<VehicleTrack>,
    truth: TruthRecord,
}

fn lane_y(cfg: &SynthConfig, lane: usize) -> f64 {
    lane as f64 * cfg.lane_width
}

/// Lane-keeping trajectory: jittered speed and a mean-reverting lateral
/// wobble clamped to `limit`.
fn keep_track(cfg: &SynthConfig, rng: &mut ChaCha8Rng, m: &Mover, t0: f64, limit: f64, noise: &Normal<f64>) -> VehicleTrack {
    let jitter = Normal::new(0.0, SPEED_JITTER / 3.0).expect("finite sd");
    let wobble = Normal::new(0.0, 0.12).expect("finite sd");
    let mut x = m.x;
    let mut e: f64 = rng.gen_range(-0.3..0.3);
    let points = (0..TRAIL_LEN)
        .map(|i| {
            if i > 0 {
                let v = (m.speed + jitter.sample(rng).clamp(-SPEED_JITTER, SPEED_JITTER))
                    .clamp(cfg.speed_min - SPEED_JITTER, cfg.speed_max + SPEED_JITTER);
                x += v * STEP_SECONDS;
                e = (0.7 * e + wobble.sample(rng)).clamp(-limit, limit);
            }
            TrajectoryPoint {
                vehicle_id: m.id.clone(),
                t: t0 + i as f64 * STEP_SECONDS,
                x: round4(x + noise.sample(rng)),
                y: round4(lane_y(cfg, m.lane) + e + noise.sample(rng)),
            }
        })
        .collect();
    VehicleTrack {
        vehicle_id: m.id.clone(),
        points,
    }
}

fn change_track(cfg: &SynthConfig, rng: &mut ChaCha8Rng, m: &Mover, t0: f64, dir: f64, noise: &Normal<f64>) -> VehicleTrack {
    let jitter = Normal::new(0.0, SPEED_JITTER / 3.0).expect("finite sd");
    let crossing = (TRAIL_LEN - 1) as f64 * STEP_SECONDS;
    let mut x = m.x;
    let points = (0..TRAIL_LEN)
        .map(|i| {
            let t = i as f64 * STEP_SECONDS;
            if i > 0 {
                let v = (m.speed + jitter.sample(rng).clamp(-SPEED_JITTER, SPEED_JITTER))
                    .clamp(cfg.speed_min - SPEED_JITTER, cfg.speed_max + SPEED_JITTER);
                x += v * STEP_SECONDS;
            }
            let e = dir * change_profile(cfg, t, crossing);
            TrajectoryPoint {
                vehicle_id: m.id.clone(),
                t: t0 + t,
                x: round4(x + noise.sample(rng)),
                y: round4(lane_y(cfg, m.lane) + e + noise.sample(rng)),
            }
        })
        .collect();
    VehicleTrack {
        vehicle_id: m.id.clone(),
        points,
    }
}

fn scene(cfg: &SynthConfig, k: usize, label: IntentionLabel) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(k as u64 + 1);
    let noise = Normal::new(0.0, cfg.noise).expect("validated sd");
    let t0 = k as f64 * SCENE_SPACING;
    let id = format!("v{k:05}");

    let (lo, hi) = match label {
        IntentionLabel::ChangeLeft => (0, cfg.lanes - 2),
        IntentionLabel::ChangeRight => (1, cfg.lanes - 1),
        IntentionLabel::Keep => (0, cfg.lanes - 1),
    };
    let lane = rng.gen_range(lo..=hi);
    let speed = rng.gen_range(cfg.speed_min..=cfg.speed_max);
    let x0 = rng.gen_range(TRAFFIC_REACH + 10.0..TRAFFIC_REACH + 30.0);
    let target = Mover {
        id: id.clone(),
        lane,
        x: x0,
        speed,
    };
    let dir = match label {
        IntentionLabel::ChangeLeft => 1.0,
        IntentionLabel::ChangeRight => -1.0,
        IntentionLabel::Keep => 0.0,
    };
    let target_track = if label == IntentionLabel::Keep {
        keep_track(cfg, &mut rng, &target, t0, 1.0, &noise)
    } else {
        change_track(cfg, &mut rng, &target, t0, dir, &noise)
    };

    let mut others: Vec<Mover> = Vec::new();
    let mut next_id = 0;
    let mut add = |others: &mut Vec<Mover>, lane: usize, dx: f64, speed: f64| {
        others.push(Mover {
            id: format!("{id}_s{next_id:02}"),
            lane,
            x: x0 + dx,
            speed: speed.clamp(cfg.speed_min, cfg.speed_max),
        });
        next_id += 1;
    };

    // lanes the target enters and the one on its far side
    let entered = (dir != 0.0).then(|| if dir > 0.0 { lane + 1 } else { lane - 1 });
    let far_side = entered.and_then(|e| {
        let other = 2 * lane as i64 - e as i64;
        (0..cfg.lanes as i64).contains(&other).then_some(other as usize)
    });
    let cue = |rng: &mut ChaCha8Rng| cfg.interacting && label != IntentionLabel::Keep && rng.gen_bool(cfg.cue_probability);

    let leader_cue = cue(&mut rng);
    let gap_cue = cue(&mut rng);
    let fast_cue = cue(&mut rng);
    let block_cue = cue(&mut rng);

    if leader_cue {
        add(&mut others, lane, rng.gen_range(5.0..9.0), speed - rng.gen_range(1.5..3.0));
    }
    if let (Some(e), true) = (entered, fast_cue) {
        add(&mut others, e, rng.gen_range(3.0..6.0), speed + rng.gen_range(1.0..3.0));
    }
    if let (Some(f), true) = (far_side, block_cue) {
        add(&mut others, f, rng.gen_range(-1.5..1.5), speed + rng.gen_range(-0.5..0.5));
    }
    if cfg.interacting && label == IntentionLabel::Keep {
        // symmetric side traffic for lane keepers
        for side in [lane.checked_sub(1), (lane + 1 < cfg.lanes).then_some(lane + 1)].into_iter().flatten() {
            if rng.gen_bool(0.5 * cfg.cue_probability) {
                add(&mut others, side, rng.gen_range(-6.0..6.0), speed + rng.gen_range(-1.0..1.0));
            }
        }
    }

    // background traffic, kept clear of the target's own slot
    let expected = cfg.density * 2.0 * TRAFFIC_REACH / 100.0;
    let count = if expected > 0.0 {
        Poisson::new(expected).expect("positive rate")
    } else {
        Poisson::new(1e-9).expect("positive rate")
    };
    for l in 0..cfg.lanes {
        let n = count.sample(&mut rng) as usize;
        for _ in 0..n {
            let dx: f64 = rng.gen_range(-TRAFFIC_REACH..TRAFFIC_REACH);
            let v = speed + rng.gen_range(-1.0..1.0);
            let clear = if l == lane {
                dx.abs() > 12.0
            } else if Some(l) == entered && gap_cue {
                dx.abs() > 10.0
            } else {
                true
            };
            if clear {
                add(&mut others, l, dx, v);
            }
        }
    }

    let mut tracks = vec![target_track];
    for m in &others {
        tracks.push(keep_track(cfg, &mut rng, m, t0, 0.5, &noise));
    }
    Scene {
        tracks,
        truth: TruthRecord {
            vehicle_id: id,
            intended_label: label,
            crossing_t: (label != IntentionLabel::Keep).then(|| t0 + (TRAIL_LEN - 1) as f64 * STEP_SECONDS),
        },
    }
}

/// Generate a dataset; identical configs give identical output.
pub fn generate(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let lanes = (0..cfg.lanes)
        .map(|l| {
            let y = lane_y(cfg, l);
            LaneGeometry::new(l as i64, vec![(0.0, y), (cfg.road_length, y)], cfg.lane_width)
        })
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<IntentionLabel> = IntentionLabel::ALL
        .iter()
        .zip(cfg.trails_per_intention)
        .flat_map(|(&l, n)| std::iter::repeat(l).take(n))
        .collect();
    let scenes: Vec<Scene> = labels
        .par_iter()
        .enumerate()
        .map(|(k, &label)| scene(cfg, k, label))
        .collect();
    let mut tracks = Vec::new();
    let mut truth = Vec::new();
    for s in scenes {
        tracks.extend(s.tracks);
        truth.push(s.truth);
    }
    tracks.sort_by(|a, b| a.vehicle_id.cmp(&b.vehicle_id));
    Ok(SynthDataset { lanes, tracks, truth })
}

#[derive(Serialize, Deserialize)]
struct TruthRow {
    vehicle_id: String,
    intended_label: IntentionLabel,
    crossing_t: Option<f64>,
}

impl SynthDataset {
    pub fn write_trajectories<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["vehicle_id", "t", "x", "y"])?;
        for p in self.tracks.iter().flat_map(|t| &t.points) {
            w.write_record([p.vehicle_id.clone(), p.t.to_string(), p.x.to_string(), p.y.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_lanes<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["lane_id", "seq", "x", "y"])?;
        for lane in &self.lanes {
            for (seq, (x, y)) in lane.centerline().iter().enumerate() {
                w.write_record([lane.lane_id.to_string(), seq.to_string(), x.to_string(), y.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_truth<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        for r in &self.truth {
            w.serialize(TruthRow {
                vehicle_id: r.vehicle_id.clone(),
                intended_label: r.intended_label,
                crossing_t: r.crossing_t,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    /// Write the three CSV files into `dir`, creating it if needed.
    pub fn write_dir(&self, dir: &Path) -> Result<[PathBuf; 3]> {
        std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        let paths = [dir.join(TRAJECTORIES_FILE), dir.join(LANES_FILE), dir.join(TRUTH_FILE)];
        let open = |p: &Path| File::create(p).map(BufWriter::new).map_err(|e| Error::file(p, e));
        self.write_trajectories(open(&paths[0])?)?;
        self.write_lanes(open(&paths[1])?)?;
        self.write_truth(open(&paths[2])?)?;
        Ok(paths)
    }
}

pub fn read_truth<R: Read>(source: R) -> Result<Vec<TruthRecord>> {
    let mut r = csv::Reader::from_reader(source);
    r.deserialize::<TruthRow>()
        .enumerate()
        .map(|(i, row)| {
            let row = row.map_err(|e| Error::Parse {
                line: i as u64 + 2,
                message: e.to_string(),
            })?;
            Ok(TruthRecord {
                vehicle_id: row.vehicle_id,
                intended_label: row.intended_label,
                crossing_t: row.crossing_t,
            })
        })
        .collect()
}
