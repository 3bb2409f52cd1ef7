//! Principal component analysis by eigendecomposition.
//!
//! The covariance matrix is decomposed directly when the feature count is
//! no larger than the sample count; otherwise the `n x n` Gram matrix is
//! decomposed and its eigenvectors mapped back into feature space, which
//! yields the same non-zero spectrum.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::Samples;
use crate::error::{Error, Result};

/// How many components to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcaTarget {
    Components(usize),
    /// Smallest prefix whose cumulative explained variance reaches the fraction.
    Variance(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Retained components, one unit vector per row, by decreasing variance.
    pub components: Vec<Vec<f64>>,
    /// Variance ratio of each retained component.
    pub explained_variance_ratio: Vec<f64>,
    /// Ratios of the full spectrum, for plotting the cumulative curve.
    #[serde(default)]
    pub full_variance_ratio: Vec<f64>,
}

const RANK_EPS: f64 = 1e-10;

impl PcaModel {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.components.len()
    }

    /// Centered projection onto the retained components.
    pub fn transform(&self, sample: &[f64]) -> Result<Vec<f64>> {
        if sample.len() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                got: sample.len(),
            });
        }
        Ok(self
            .components
            .iter()
            .map(|c| {
                c.iter()
                    .zip(sample.iter().zip(&self.mean))
                    .map(|(ci, (x, m))| ci * (x - m))
                    .sum()
            })
            .collect())
    }

    pub fn inverse_transform(&self, coords: &[f64]) -> Result<Vec<f64>> {
        if coords.len() != self.components.len() {
            return Err(Error::DimensionMismatch {
                expected: self.components.len(),
                got: coords.len(),
            });
        }
        let mut out = self.mean.clone();
        for (c, &w) in self.components.iter().zip(coords) {
            for (o, ci) in out.iter_mut().zip(c) {
                *o += w * ci;
            }
        }
        Ok(out)
    }

    pub fn transform_all(&self, samples: &Samples) -> Result<Samples> {
        let mut data = Vec::with_capacity(samples.len() * self.output_dim());
        for row in samples.rows() {
            data.extend(self.transform(row)?);
        }
        Ok(Samples::from_flat(self.output_dim(), data))
    }
}

pub fn pca_fit(samples: &Samples, target: PcaTarget) -> Result<PcaModel> {
    let n = samples.len();
    let dim = samples.dim();
    if n < 2 {
        return Err(Error::Config("PCA needs at least two samples".into()));
    }
    match target {
        PcaTarget::Components(c) if c == 0 || c > dim => {
            return Err(Error::Config(format!("cannot keep {c} of {dim} components")))
        }
        PcaTarget::Variance(f) if !(f > 0.0 && f <= 1.0) => {
            return Err(Error::Config(format!("variance target {f} not in (0, 1]")))
        }
        _ => {}
    }

    let mut mean = vec![0.0; dim];
    for row in samples.rows() {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, dim, |i, j| samples.row(i)[j] - mean[j]);
    let scale = 1.0 / (n as f64 - 1.0);

    // (eigenvalue, unit component) pairs, unsorted
    let mut spectrum: Vec<(f64, Vec<f64>)> = if dim <= n {
        let cov = centered.transpose() * &centered * scale;
        let eig = SymmetricEigen::new(cov);
        (0..dim)
            .map(|i| {
                let v = eig.eigenvectors.column(i).iter().copied().collect();
                (eig.eigenvalues[i].max(0.0), v)
            })
            .collect()
    } else {
        let ct = centered.transpose();
        let gram = &centered * &ct * scale;
        let eig = SymmetricEigen::new(gram);
        let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        (0..n)
            .filter(|&i| eig.eigenvalues[i] > RANK_EPS * top.max(RANK_EPS))
            .map(|i| {
                let mut v: Vec<f64> = (&ct * eig.eigenvectors.column(i)).iter().copied().collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.iter_mut().for_each(|x| *x /= norm);
                (eig.eigenvalues[i], v)
            })
            .collect()
    };
    spectrum.sort_by(|a, b| b.0.total_cmp(&a.0));

    let total: f64 = spectrum.iter().map(|(l, _)| l).sum();
    if total <= 0.0 || spectrum.is_empty() {
        // all samples identical
        let mut axis = vec![0.0; dim];
        axis[0] = 1.0;
        return Ok(PcaModel {
            mean,
            components: vec![axis],
            explained_variance_ratio: Vec::new(),
            full_variance_ratio: Vec::new(),
        });
    }
    let ratios: Vec<f64> = spectrum.iter().map(|(l, _)| l / total).collect();
    let keep = match target {
        PcaTarget::Components(c) => c.min(spectrum.len()),
        PcaTarget::Variance(f) => {
            let mut cum = 0.0;
            let mut keep = ratios.len();
            for (i, r) in ratios.iter().enumerate() {
                cum += r;
                if cum >= f - 1e-12 {
                    keep = i + 1;
                    break;
                }
            }
            keep
        }
    };
    Ok(PcaModel {
        mean,
        explained_variance_ratio: ratios[..keep].to_vec(),
        full_variance_ratio: ratios,
        components: spectrum.into_iter().take(keep).map(|(_, v)| v).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn samples(rows: &[&[f64]]) -> Samples {
        Samples::from_rows(rows.iter().map(|r| r.to_vec()).collect())
    }

    fn random(n: usize, dim: usize, seed: u64) -> Samples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Samples::from_rows(
            (0..n)
                .map(|_| (0..dim).map(|_| rng.random_range(0..2) as f64).collect())
                .collect(),
        )
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn rank_one_line() {
        let s = samples(&[&[0.0, 0.0], &[1.0, 1.0], &[2.0, 2.0], &[5.0, 5.0]]);
        let m = pca_fit(&s, PcaTarget::Variance(0.99)).unwrap();
        assert_eq!(m.output_dim(), 1);
        assert!((m.explained_variance_ratio[0] - 1.0).abs() < 1e-12);
        let c = &m.components[0];
        assert!((c[0].abs() - 0.5f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn full_rank_round_trip_and_distances() {
        for (n, dim) in [(40, 6), (5, 12)] {
            let s = random(n, dim, 7);
            let m = pca_fit(&s, PcaTarget::Variance(1.0)).unwrap();
            for i in 0..m.output_dim() {
                for j in 0..m.output_dim() {
                    let d = dot(&m.components[i], &m.components[j]);
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((d - want).abs() < 1e-9, "orthonormality {i},{j}: {d}");
                }
            }
            assert!(m.explained_variance_ratio.windows(2).all(|w| w[0] >= w[1] - 1e-15));
            for row in s.rows() {
                let back = m.inverse_transform(&m.transform(row).unwrap()).unwrap();
                for (a, b) in back.iter().zip(row) {
                    assert!((a - b).abs() < 1e-9);
                }
            }
            let (a, b) = (s.row(0), s.row(1));
            let orig: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
            let ta = m.transform(a).unwrap();
            let tb = m.transform(b).unwrap();
            let proj: f64 = ta.iter().zip(&tb).map(|(x, y)| (x - y).powi(2)).sum();
            assert!((orig - proj).abs() < 1e-9);
        }
    }

    #[test]
    fn transform_of_mean_and_component() {
        let s = random(30, 5, 3);
        let m = pca_fit(&s, PcaTarget::Components(3)).unwrap();
        assert!(m.transform(&m.mean).unwrap().iter().all(|x| x.abs() < 1e-12));
        let probe: Vec<f64> = m.mean.iter().zip(&m.components[1]).map(|(a, c)| a + c).collect();
        let t = m.transform(&probe).unwrap();
        assert!((t[0]).abs() < 1e-9 && (t[1] - 1.0).abs() < 1e-9 && t[2].abs() < 1e-9);
        assert!(matches!(m.transform(&[0.0; 4]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn variance_target_picks_smallest_prefix() {
        let s = random(200, 10, 11);
        let m = pca_fit(&s, PcaTarget::Variance(0.8)).unwrap();
        let cum: f64 = m.explained_variance_ratio.iter().sum();
        assert!(cum >= 0.8 - 1e-12);
        let without_last = cum - m.explained_variance_ratio.last().unwrap();
        assert!(without_last < 0.8);
        assert!((m.full_variance_ratio.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_identical_samples() {
        let s = samples(&[&[1.0, 0.0, 1.0], &[1.0, 0.0, 1.0], &[1.0, 0.0, 1.0]]);
        let m = pca_fit(&s, PcaTarget::Variance(0.8)).unwrap();
        assert_eq!(m.output_dim(), 1);
        assert!(m.explained_variance_ratio.is_empty());
        assert_eq!(m.transform(&[1.0, 0.0, 1.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn bad_targets() {
        let s = random(10, 4, 1);
        assert!(pca_fit(&s, PcaTarget::Components(5)).is_err());
        assert!(pca_fit(&s, PcaTarget::Variance(0.0)).is_err());
        assert!(pca_fit(&samples(&[&[1.0]]), PcaTarget::Components(1)).is_err());
    }
}
