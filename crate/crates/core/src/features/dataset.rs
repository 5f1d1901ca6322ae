//! Featurized trails and their CSV + manifest persistence.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{augment, base_features, neighbors_at, FeatureSet, RegionSpec, TrafficIndex};
use crate::ingest::{extract_vehicle_trails, LaneGeometry, VehicleTrack};
use crate::{Error, IntentionLabel, Result, STEP_SECONDS, TRAIL_LEN};

/// Heading convention recorded in manifests.
pub const THETA_REFERENCE: &str = "lane_relative";

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTrail {
    pub vehicle_id: String,
    pub label: IntentionLabel,
    pub times: Vec<f64>,
    /// One row per step, columns in manifest order.
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureManifest {
    pub feature_names: Vec<String>,
    pub feature_set: Option<FeatureSet>,
    pub theta_reference: String,
    pub step_seconds: f64,
    pub trail_len: usize,
    pub regions: RegionSpec,
}

impl FeatureManifest {
    pub fn new(set: FeatureSet, regions: RegionSpec) -> Self {
        Self {
            feature_names: set.feature_names(),
            feature_set: Some(set),
            theta_reference: THETA_REFERENCE.into(),
            step_seconds: STEP_SECONDS,
            trail_len: TRAIL_LEN,
            regions,
        }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeaturizedDataset {
    pub manifest: FeatureManifest,
    pub trails: Vec<FeatureTrail>,
}

/// Extract trails of the target vehicles (all vehicles when `targets` is
/// `None`) and compute their features. Every track contributes to the
/// surrounding traffic.
pub fn featurize(
    tracks: &[VehicleTrack],
    lanes: &[LaneGeometry],
    targets: Option<&BTreeSet<String>>,
    set: FeatureSet,
    regions: &RegionSpec,
) -> Result<FeaturizedDataset> {
    regions.validate()?;
    let traffic = (set != FeatureSet::Base).then(|| TrafficIndex::new(tracks));
    let per_vehicle: Vec<Vec<FeatureTrail>> = tracks
        .par_iter()
        .filter(|t| targets.map_or(true, |ids| ids.contains(&t.vehicle_id)))
        .map(|track| {
            extract_vehicle_trails(track, lanes)
                .into_iter()
                .map(|trail| {
                    let base = base_features(&trail, lanes);
                    let rows = match &traffic {
                        None => base,
                        Some(index) => {
                            let around: Vec<_> = trail
                                .points
                                .iter()
                                .zip(&trail.matches)
                                .map(|(p, m)| neighbors_at(index, &trail.vehicle_id, p.t, m, lanes))
                                .collect();
                            augment(&base, &around, regions, set)
                        }
                    };
                    FeatureTrail {
                        vehicle_id: trail.vehicle_id.clone(),
                        label: trail.label,
                        times: trail.points.iter().map(|p| p.t).collect(),
                        rows,
                    }
                })
                .collect()
        })
        .collect();
    Ok(FeaturizedDataset {
        manifest: FeatureManifest::new(set, *regions),
        trails: per_vehicle.into_iter().flatten().collect(),
    })
}

/// `features.csv` -> `features.manifest.json`.
pub fn manifest_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("manifest.json")
}

impl FeaturizedDataset {
    pub fn n_features(&self) -> usize {
        self.manifest.feature_names.len()
    }

    pub fn count(&self, label: IntentionLabel) -> usize {
        self.trails.iter().filter(|t| t.label == label).count()
    }

    /// Keep only the named columns, in the given order.
    pub fn select(&self, names: &[String]) -> Result<FeaturizedDataset> {
        let cols: Vec<usize> = names
            .iter()
            .map(|n| {
                self.manifest
                    .column(n)
                    .ok_or_else(|| Error::Manifest(format!("dataset has no feature {n:?}")))
            })
            .collect::<Result<_>>()?;
        let mut manifest = self.manifest.clone();
        manifest.feature_names = names.to_vec();
        manifest.feature_set = FeatureSet::ALL
            .into_iter()
            .find(|s| s.feature_names() == names);
        let trails = self
            .trails
            .iter()
            .map(|t| FeatureTrail {
                rows: t.rows.iter().map(|r| cols.iter().map(|&c| r[c]).collect()).collect(),
                ..t.clone()
            })
            .collect();
        Ok(FeaturizedDataset { manifest, trails })
    }

    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        let mut header = vec!["vehicle_id".to_string(), "label".into(), "t".into()];
        header.extend(self.manifest.feature_names.iter().cloned());
        w.write_record(&header)?;
        for trail in &self.trails {
            for (t, row) in trail.times.iter().zip(&trail.rows) {
                let mut record = vec![trail.vehicle_id.clone(), trail.label.to_string(), t.to_string()];
                record.extend(row.iter().map(f64::to_string));
                w.write_record(&record)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(source: R, manifest: FeatureManifest) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(source);
        let header = reader.headers()?.clone();
        let expected: Vec<&str> = ["vehicle_id", "label", "t"]
            .into_iter()
            .chain(manifest.feature_names.iter().map(String::as_str))
            .collect();
        if header.iter().collect::<Vec<_>>() != expected {
            return Err(Error::Manifest("CSV header does not match the feature manifest".into()));
        }
        let t_len = manifest.trail_len;
        let mut trails: Vec<FeatureTrail> = Vec::new();
        let mut open: Option<FeatureTrail> = None;
        for record in reader.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            let parse_err = |message: String| Error::Parse { line, message };
            let vehicle_id = record[0].to_string();
            let label: IntentionLabel = record[1]
                .parse()
                .map_err(|_| parse_err(format!("bad label {:?}", &record[1])))?;
            let t: f64 = record[2]
                .parse()
                .map_err(|_| parse_err(format!("bad time {:?}", &record[2])))?;
            let row: Vec<f64> = record
                .iter()
                .skip(3)
                .map(|v| v.parse::<f64>().map_err(|_| parse_err(format!("bad value {v:?}"))))
                .collect::<Result<_>>()?;
            if row.len() != manifest.feature_names.len() {
                return Err(Error::Arity {
                    vehicle: vehicle_id,
                    expected: manifest.feature_names.len(),
                    found: row.len(),
                });
            }
            let continues = open
                .as_ref()
                .is_some_and(|o| o.vehicle_id == vehicle_id && o.label == label && o.rows.len() < t_len);
            if !continues {
                if let Some(done) = open.take() {
                    if done.rows.len() != t_len {
                        return Err(parse_err(format!(
                            "trail of {} has {} rows, expected {t_len}",
                            done.vehicle_id,
                            done.rows.len()
                        )));
                    }
                    trails.push(done);
                }
                open = Some(FeatureTrail {
                    vehicle_id,
                    label,
                    times: Vec::with_capacity(t_len),
                    rows: Vec::with_capacity(t_len),
                });
            }
            let cur = open.as_mut().expect("opened above");
            cur.times.push(t);
            cur.rows.push(row);
        }
        if let Some(done) = open {
            if done.rows.len() != t_len {
                return Err(Error::Manifest(format!(
                    "trailing trail of {} has {} rows, expected {t_len}",
                    done.vehicle_id,
                    done.rows.len()
                )));
            }
            trails.push(done);
        }
        Ok(Self { manifest, trails })
    }

    /// Write the CSV and its sidecar manifest.
    pub fn save(&self, csv_path: &Path) -> Result<()> {
        let file = File::create(csv_path).map_err(|e| Error::file(csv_path, e))?;
        self.write_csv(BufWriter::new(file))?;
        let mpath = manifest_path(csv_path);
        let json = serde_json::to_string_pretty(&self.manifest)?;
        std::fs::write(&mpath, json + "\n").map_err(|e| Error::file(&mpath, e))?;
        Ok(())
    }

    pub fn load(csv_path: &Path) -> Result<Self> {
        let mpath = manifest_path(csv_path);
        let text = std::fs::read_to_string(&mpath).map_err(|e| Error::file(&mpath, e))?;
        let manifest: FeatureManifest = serde_json::from_str(&text)?;
        let file = File::open(csv_path).map_err(|e| Error::file(csv_path, e))?;
        Self::read_csv(BufReader::new(file), manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FeaturizedDataset {
        let manifest = FeatureManifest::new(FeatureSet::Base, RegionSpec::default());
        let mk = |id: &str, label, off: f64| FeatureTrail {
            vehicle_id: id.into(),
            label,
            times: (0..TRAIL_LEN).map(|i| i as f64 * 0.5).collect(),
            rows: (0..TRAIL_LEN).map(|i| vec![off + i as f64, 0.1, 1.75, 1.75]).collect(),
        };
        FeaturizedDataset {
            manifest,
            trails: vec![
                mk("a", IntentionLabel::Keep, 0.0),
                mk("a", IntentionLabel::Keep, 20.0),
                mk("b", IntentionLabel::ChangeLeft, 0.5),
            ],
        }
    }

    #[test]
    fn csv_round_trip() {
        let ds = sample();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("vehicle_id,label,t,v,theta,d1,d2\n"));
        let back = FeaturizedDataset::read_csv(buf.as_slice(), ds.manifest.clone()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn truncated_trail_rejected() {
        let ds = sample();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cut: String = text.lines().take(5).map(|l| format!("{l}\n")).collect();
        assert!(FeaturizedDataset::read_csv(cut.as_bytes(), ds.manifest).is_err());
    }

    #[test]
    fn select_reorders_columns() {
        let ds = sample();
        let sub = ds.select(&["d2".into(), "v".into()]).unwrap();
        assert_eq!(sub.trails[0].rows[3], vec![1.75, 3.0]);
        assert!(sub.manifest.feature_set.is_none());
        assert!(ds.select(&["nope".into()]).is_err());
    }
}
