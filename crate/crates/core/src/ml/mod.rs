//! Placement model: optional PCA followed by k-means over bucket contents.

mod kmeans;
mod pca;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use kmeans::{elbow_scan, kmeans_fit, knee_of, sse, ElbowCurve, KMeansFit, KMeansParams};
pub use pca::{pca_fit, PcaModel, PcaTarget};

use crate::bitvec::BitBuffer;
use crate::error::{Error, Result};

/// Row-major matrix of real-valued samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    dim: usize,
    data: Vec<f64>,
}

impl Samples {
    pub fn from_flat(dim: usize, data: Vec<f64>) -> Self {
        assert!(dim > 0 && data.len().is_multiple_of(dim));
        Samples { dim, data }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let dim = rows.first().map_or(1, Vec::len);
        assert!(rows.iter().all(|r| r.len() == dim), "ragged sample rows");
        Samples {
            dim,
            data: rows.into_iter().flatten().collect(),
        }
    }

    /// One 0/1 row per buffer. All buffers must share a width.
    pub fn from_bits<'a, I: IntoIterator<Item = &'a BitBuffer>>(buffers: I) -> Result<Self> {
        let mut dim = 0;
        let mut data = Vec::new();
        for b in buffers {
            if dim == 0 {
                dim = b.width();
            } else if b.width() != dim {
                return Err(Error::WidthMismatch {
                    left: dim,
                    right: b.width(),
                });
            }
            data.extend(b.iter().map(|x| x as u8 as f64));
        }
        if dim == 0 {
            return Err(Error::Config("no samples".into()));
        }
        Ok(Samples { dim, data })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn select(&self, indices: &[usize]) -> Samples {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Samples { dim: self.dim, data }
    }
}

/// Training parameters for the placement model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlConfig {
    pub k: usize,
    pub restarts: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
    /// PCA is applied when the bucket width exceeds this many bits.
    pub pca_threshold: usize,
    pub pca_variance: f64,
    /// Train on a seeded random subset of at most this many buckets.
    pub train_sample_limit: Option<usize>,
}

impl Default for MlConfig {
    fn default() -> Self {
        MlConfig {
            k: 8,
            restarts: 3,
            max_iter: 100,
            tol: 1e-6,
            seed: 42,
            pca_threshold: 4096,
            pca_variance: 0.80,
            train_sample_limit: None,
        }
    }
}

impl MlConfig {
    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn params(&self) -> KMeansParams {
        KMeansParams {
            k: self.k,
            restarts: self.restarts,
            max_iter: self.max_iter,
            tol: self.tol,
            seed: self.seed,
        }
    }
}

/// The samples k-means sees when training on `contents`: the (possibly
/// subsampled) raw bits, projected by a PCA fitted on them when the width
/// exceeds the configured threshold.
pub fn training_features(contents: &[BitBuffer], config: &MlConfig) -> Result<(Samples, Option<PcaModel>)> {
    let Some(first) = contents.first() else {
        return Err(Error::Config("cannot train on an empty data zone".into()));
    };
    let width = first.width();
    let selected: Vec<&BitBuffer> = match config.train_sample_limit {
        Some(limit) if limit < contents.len() => {
            use rand::seq::index::sample;
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed);
            let mut idx = sample(&mut rng, contents.len(), limit).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| &contents[i]).collect()
        }
        _ => contents.iter().collect(),
    };
    let raw = Samples::from_bits(selected)?;
    if width > config.pca_threshold && raw.len() >= 2 {
        let model = pca_fit(&raw, PcaTarget::Variance(config.pca_variance))?;
        Ok((model.transform_all(&raw)?, Some(model)))
    } else {
        Ok((raw, None))
    }
}

/// Learned placement model. Immutable after training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub pca: Option<PcaModel>,
    /// Bucket width in bits the model was trained on.
    pub feature_width: usize,
    /// Training SSE in the (possibly reduced) feature space.
    pub sse: f64,
    pub seed: u64,
}

impl ClusterModel {
    /// Trains on bucket contents per `config`.
    pub fn train(contents: &[BitBuffer], config: &MlConfig) -> Result<ClusterModel> {
        let (features, pca) = training_features(contents, config)?;
        let fit = kmeans_fit(&features, &config.params())?;
        Ok(ClusterModel {
            k: config.k,
            centroids: fit.centroids,
            pca,
            feature_width: contents[0].width(),
            sse: fit.sse,
            seed: config.seed,
        })
    }

    /// Model space coordinates of a bucket.
    pub fn features(&self, value: &BitBuffer) -> Result<Vec<f64>> {
        if value.width() != self.feature_width {
            return Err(Error::DimensionMismatch {
                expected: self.feature_width,
                got: value.width(),
            });
        }
        let raw = value.to_features();
        match &self.pca {
            Some(p) => p.transform(&raw),
            None => Ok(raw),
        }
    }

    pub fn predict(&self, value: &BitBuffer) -> Result<usize> {
        Ok(self.predict_features(&self.features(value)?))
    }

    /// Nearest centroid by squared Euclidean distance; ties to the lowest label.
    pub fn predict_features(&self, x: &[f64]) -> usize {
        kmeans::nearest(&self.centroids, x).0
    }

    /// Labels ordered by increasing centroid distance from `value`.
    pub fn rank(&self, value: &BitBuffer) -> Result<Vec<usize>> {
        let x = self.features(value)?;
        let mut d: Vec<(f64, usize)> = self
            .centroids
            .iter()
            .enumerate()
            .map(|(i, c)| (kmeans::sq_dist(c, &x), i))
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Ok(d.into_iter().map(|(_, i)| i).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: ClusterModel = serde_json::from_str(s)?;
        if m.k == 0 || m.centroids.len() != m.k {
            return Err(Error::Format(format!(
                "model declares k={} with {} centroids",
                m.k,
                m.centroids.len()
            )));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(strs: &[&str]) -> Vec<BitBuffer> {
        strs.iter().map(|s| s.parse().unwrap()).collect()
    }

    const TABLE2: [&str; 6] = ["00000111", "00001011", "00101100", "00111100", "11010000", "01110000"];

    #[test]
    fn worked_example_predictions() {
        let data = rows(&TABLE2);
        let model = ClusterModel::train(&data, &MlConfig::default().with_k(3)).unwrap();
        let label = |s: &str| model.predict(&s.parse().unwrap()).unwrap();
        assert_eq!(label("00001111"), label(TABLE2[0]));
        assert_eq!(label("00001111"), label(TABLE2[1]));
        assert_eq!(label("11110000"), label(TABLE2[4]));
        assert_eq!(label("11110000"), label(TABLE2[5]));
        for (i, c) in model.centroids.iter().enumerate() {
            assert_eq!(model.predict_features(c), i);
        }
        assert!((model.sse - 2.5).abs() < 1e-9);
    }

    #[test]
    fn json_round_trip_and_validation() {
        let model = ClusterModel::train(&rows(&TABLE2), &MlConfig::default().with_k(2)).unwrap();
        let back = ClusterModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(back, model);
        let bad = model.to_json().unwrap().replace("\"k\": 2", "\"k\": 3");
        assert!(ClusterModel::from_json(&bad).is_err());
        assert!(model.predict(&BitBuffer::zeros(16)).is_err());
    }

    #[test]
    fn pca_applied_above_threshold() {
        let mut data = rows(&TABLE2);
        data.extend(rows(&["11111111", "10000001"]));
        let cfg = MlConfig {
            k: 2,
            pca_threshold: 4,
            pca_variance: 0.9,
            ..MlConfig::default()
        };
        let model = ClusterModel::train(&data, &cfg).unwrap();
        let pca = model.pca.as_ref().unwrap();
        assert!(pca.output_dim() < 8);
        assert_eq!(model.centroids[0].len(), pca.output_dim());
        assert!(model.predict(&data[0]).unwrap() < 2);
    }

    #[test]
    fn rank_orders_by_distance() {
        let model = ClusterModel::train(&rows(&TABLE2), &MlConfig::default().with_k(3)).unwrap();
        let v: BitBuffer = "00001111".parse().unwrap();
        let ranked = model.rank(&v).unwrap();
        assert_eq!(ranked[0], model.predict(&v).unwrap());
        assert_eq!(ranked.len(), 3);
    }
}
