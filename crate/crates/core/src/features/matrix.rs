use ndarray::{s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::FeatureTrail;
use crate::{Error, Result};

/// Feature rows of L trails stacked vehicle-major: row `l * T + t` is step
/// `t` of trail `l` (both 0-based).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub data: Array2<f64>,
    pub trail_len: usize,
}

impl FeatureMatrix {
    pub fn n_trails(&self) -> usize {
        self.data.nrows() / self.trail_len.max(1)
    }

    pub fn n_features(&self) -> usize {
        self.data.ncols()
    }

    pub fn row_index(&self, trail: usize, step: usize) -> usize {
        trail * self.trail_len + step
    }

    /// (trail, step) that produced row `d`.
    pub fn provenance(&self, d: usize) -> (usize, usize) {
        (d / self.trail_len, d % self.trail_len)
    }

    pub fn trail(&self, l: usize) -> ArrayView2<'_, f64> {
        self.data.slice(s![l * self.trail_len..(l + 1) * self.trail_len, ..])
    }
}

pub fn build_matrix(trails: &[FeatureTrail]) -> Result<FeatureMatrix> {
    let Some(first) = trails.first() else {
        return Ok(FeatureMatrix {
            data: Array2::zeros((0, 0)),
            trail_len: 0,
        });
    };
    let t_len = first.rows.len();
    let n = first.rows.first().map_or(0, Vec::len);
    let mut flat = Vec::with_capacity(trails.len() * t_len * n);
    for trail in trails {
        if trail.rows.len() != t_len {
            return Err(Error::Manifest(format!(
                "vehicle {} has {} steps, expected {t_len}",
                trail.vehicle_id,
                trail.rows.len()
            )));
        }
        for row in &trail.rows {
            if row.len() != n {
                return Err(Error::Arity {
                    vehicle: trail.vehicle_id.clone(),
                    expected: n,
                    found: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
    }
    let data = Array2::from_shape_vec((trails.len() * t_len, n), flat).expect("shape checked");
    Ok(FeatureMatrix {
        data,
        trail_len: t_len,
    })
}

/// Per-column affine map to zero mean and unit variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Population statistics of each column. Constant columns get scale 1.
    pub fn fit(data: &Array2<f64>) -> Self {
        let n = data.nrows().max(1) as f64;
        let mean: Vec<f64> = data.sum_axis(Axis(0)).iter().map(|s| s / n).collect();
        let scale = data
            .axis_iter(Axis(1))
            .zip(&mean)
            .map(|(col, m)| {
                let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
                let sd = var.sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            mean: vec![0.0; n],
            scale: vec![1.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn transform(&self, data: &Array2<f64>) -> Array2<f64> {
        let mut out = data.clone();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.scale[j];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::IntentionLabel;
    use proptest::prelude::*;

    fn trail(id: &str, t: usize, n: usize, base: f64) -> FeatureTrail {
        FeatureTrail {
            vehicle_id: id.into(),
            label: IntentionLabel::Keep,
            times: (0..t).map(|i| i as f64 * 0.5).collect(),
            rows: (0..t)
                .map(|i| (0..n).map(|j| base + (i * n + j) as f64).collect())
                .collect(),
        }
    }

    #[test]
    fn shape_is_tl_by_n() {
        let m = build_matrix(&[trail("a", 9, 4, 0.0), trail("b", 9, 4, 100.0)]).unwrap();
        assert_eq!(m.data.dim(), (18, 4));
        assert_eq!(m.provenance(10), (1, 1));
        assert_eq!(m.row_index(1, 1), 10);
    }

    #[test]
    fn single_trail_is_identity() {
        let t = trail("a", 9, 4, 0.0);
        let m = build_matrix(std::slice::from_ref(&t)).unwrap();
        for (i, row) in t.rows.iter().enumerate() {
            assert_eq!(m.data.row(i).to_vec(), *row);
        }
    }

    #[test]
    fn mixed_arity_names_vehicle() {
        match build_matrix(&[trail("a", 9, 4, 0.0), trail("b", 9, 6, 0.0)]) {
            Err(Error::Arity { vehicle, expected: 4, found: 6 }) => assert_eq!(vehicle, "b"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn standardizer_zero_mean_unit_var() {
        let m = build_matrix(&[trail("a", 9, 3, 0.0), trail("b", 9, 3, 7.0)]).unwrap();
        let st = Standardizer::fit(&m.data);
        let z = st.transform(&m.data);
        for col in z.axis_iter(Axis(1)) {
            let mean = col.mean().unwrap();
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
            assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn split_round_trips(l in 1usize..6, t in 1usize..10, n in 1usize..5) {
            let trails: Vec<_> = (0..l).map(|i| trail(&format!("v{i}"), t, n, i as f64 * 1000.0)).collect();
            let m = build_matrix(&trails).unwrap();
            for (i, tr) in trails.iter().enumerate() {
                let back: Vec<Vec<f64>> = m.trail(i).rows().into_iter().map(|r| r.to_vec()).collect();
                prop_assert_eq!(&back, &tr.rows);
            }
        }
    }
}
