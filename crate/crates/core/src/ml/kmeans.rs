//! Lloyd's k-means with k-means++ seeding and Hartigan refinement, best of
//! several restarts.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Samples;
use crate::error::{Error, Result};

/// Assignment runs on the rayon pool above this many distance terms.
const PAR_THRESHOLD: usize = 1 << 16;

/// Minimum second difference, relative to SSE(1), for a knee other than 1.
const KNEE_MIN_RELATIVE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub k: usize,
    pub restarts: usize,
    pub max_iter: usize,
    /// Stop once one Lloyd step improves SSE by less than this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        KMeansParams {
            k: 8,
            restarts: 3,
            max_iter: 100,
            tol: 1e-6,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub centroids: Vec<Vec<f64>>,
    /// Final assignment; equal to nearest-centroid prediction for every sample.
    pub labels: Vec<usize>,
    pub sse: f64,
    /// SSE after seeding and after every (update, assign) step, per restart.
    pub history: Vec<Vec<f64>>,
    pub best_restart: usize,
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `(label, squared distance)` of the nearest centroid; ties to the lowest label.
pub(crate) fn nearest(centroids: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(c, x);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn assign(samples: &Samples, centroids: &[Vec<f64>]) -> Vec<(usize, f64)> {
    let work = samples.len() * centroids.len() * samples.dim();
    if work >= PAR_THRESHOLD {
        (0..samples.len())
            .into_par_iter()
            .map(|i| nearest(centroids, samples.row(i)))
            .collect()
    } else {
        samples.rows().map(|r| nearest(centroids, r)).collect()
    }
}

fn total(assigned: &[(usize, f64)]) -> f64 {
    assigned.iter().map(|a| a.1).sum()
}

pub(crate) fn distinct_rows(samples: &Samples) -> usize {
    samples
        .rows()
        .map(|r| r.iter().map(|x| x.to_bits()).collect::<Vec<u64>>())
        .collect::<HashSet<_>>()
        .len()
}

/// k-means++: first centre uniform, the rest with probability proportional
/// to squared distance from the nearest chosen centre.
fn seed_plus_plus(samples: &Samples, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = samples.len();
    let mut centroids = vec![samples.row(rng.random_range(0..n)).to_vec()];
    let mut d2: Vec<f64> = samples.rows().map(|r| sq_dist(r, &centroids[0])).collect();
    while centroids.len() < k {
        let sum: f64 = d2.iter().sum();
        let pick = if sum > 0.0 {
            let mut target = rng.random::<f64>() * sum;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            // guard against rounding landing on an already-chosen point
            if d2[chosen] == 0.0 {
                chosen = d2.iter().rposition(|&d| d > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = samples.row(pick).to_vec();
        for (i, r) in samples.rows().enumerate() {
            d2[i] = d2[i].min(sq_dist(r, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Means of the assigned points. An empty cluster is reseeded at the point
/// farthest from its own centroid.
fn update(samples: &Samples, assigned: &[(usize, f64)], k: usize) -> Vec<Vec<f64>> {
    let dim = samples.dim();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (row, &(label, _)) in samples.rows().zip(assigned) {
        counts[label] += 1;
        for (s, x) in sums[label].iter_mut().zip(row) {
            *s += x;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            s.iter_mut().for_each(|v| *v /= c as f64);
        }
    }
    let empty: Vec<usize> = (0..k).filter(|&c| counts[c] == 0).collect();
    if !empty.is_empty() {
        let mut far: Vec<(f64, usize)> = samples
            .rows()
            .zip(assigned)
            .enumerate()
            .map(|(i, (row, &(label, _)))| (sq_dist(row, &sums[label]), i))
            .collect();
        far.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for (c, (_, i)) in empty.into_iter().zip(far) {
            sums[c] = samples.row(i).to_vec();
        }
    }
    sums
}

/// One sweep of single-point moves: `x` leaves cluster `a` for `b` when
/// `n_b/(n_b+1)·d(x,c_b) < n_a/(n_a-1)·d(x,c_a)`, which lowers SSE by the
/// difference. Centroids are kept current after each move. Returns whether
/// any point moved.
fn hartigan_sweep(samples: &Samples, labels: &mut [usize], centroids: &mut [Vec<f64>]) -> bool {
    let k = centroids.len();
    let mut counts = vec![0usize; k];
    for &l in labels.iter() {
        counts[l] += 1;
    }
    let mut moved = false;
    for (i, x) in samples.rows().enumerate() {
        let a = labels[i];
        if counts[a] < 2 {
            continue;
        }
        let na = counts[a] as f64;
        let leave = na / (na - 1.0) * sq_dist(x, &centroids[a]);
        let mut best = (a, leave);
        for (b, c) in centroids.iter().enumerate() {
            if b == a {
                continue;
            }
            let nb = counts[b] as f64;
            let join = nb / (nb + 1.0) * sq_dist(x, c);
            if join < best.1 - 1e-12 {
                best = (b, join);
            }
        }
        let b = best.0;
        if b == a {
            continue;
        }
        let nb = counts[b] as f64;
        for (j, &xj) in x.iter().enumerate() {
            centroids[a][j] = (centroids[a][j] * na - xj) / (na - 1.0);
            centroids[b][j] = (centroids[b][j] * nb + xj) / (nb + 1.0);
        }
        counts[a] -= 1;
        counts[b] += 1;
        labels[i] = b;
        moved = true;
    }
    moved
}

/// Lloyd iterations to a fixed point, then Hartigan sweeps to escape it,
/// alternating until neither changes the partition.
fn lloyd(samples: &Samples, params: &KMeansParams, rng: &mut ChaCha8Rng) -> KMeansFit {
    let mut centroids = seed_plus_plus(samples, params.k, rng);
    let mut assigned = assign(samples, &centroids);
    let mut sse = total(&assigned);
    let mut history = vec![sse];
    let mut steps = 0;
    while steps < params.max_iter {
        loop {
            if steps >= params.max_iter {
                break;
            }
            steps += 1;
            let next_centroids = update(samples, &assigned, params.k);
            let next = assign(samples, &next_centroids);
            let next_sse = total(&next);
            history.push(next_sse);
            let changed = next.iter().zip(&assigned).any(|(a, b)| a.0 != b.0);
            let improvement = sse - next_sse;
            centroids = next_centroids;
            assigned = next;
            sse = next_sse;
            if !changed || improvement < params.tol {
                break;
            }
        }
        let mut labels: Vec<usize> = assigned.iter().map(|a| a.0).collect();
        let mut moved_centroids = update(samples, &assigned, params.k);
        if !hartigan_sweep(samples, &mut labels, &mut moved_centroids) {
            break;
        }
        // exact means of the moved partition, then nearest reassignment
        let relabelled: Vec<(usize, f64)> = labels.iter().map(|&l| (l, 0.0)).collect();
        let next_centroids = update(samples, &relabelled, params.k);
        let next = assign(samples, &next_centroids);
        let next_sse = total(&next);
        if next_sse >= sse - params.tol.max(1e-12) {
            break;
        }
        history.push(next_sse);
        centroids = next_centroids;
        assigned = next;
        sse = next_sse;
        steps += 1;
    }
    KMeansFit {
        centroids,
        labels: assigned.into_iter().map(|a| a.0).collect(),
        sse,
        history: vec![history],
        best_restart: 0,
    }
}

/// Best-of-`restarts` Lloyd's algorithm.
pub fn kmeans_fit(samples: &Samples, params: &KMeansParams) -> Result<KMeansFit> {
    if params.k == 0 || params.restarts == 0 {
        return Err(Error::Config("k and restarts must be at least 1".into()));
    }
    let distinct = distinct_rows(samples);
    if params.k > distinct {
        return Err(Error::TooFewDistinct { k: params.k, distinct });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<KMeansFit> = None;
    let mut history = Vec::with_capacity(params.restarts);
    for restart in 0..params.restarts {
        let mut fit = lloyd(samples, params, &mut rng);
        history.append(&mut fit.history);
        if best.as_ref().is_none_or(|b| fit.sse < b.sse) {
            fit.best_restart = restart;
            best = Some(fit);
        }
    }
    let mut best = best.expect("at least one restart");
    best.history = history;
    Ok(best)
}

/// Within-cluster sum of squared distances, each sample assigned to its
/// nearest centroid.
pub fn sse(centroids: &[Vec<f64>], samples: &Samples) -> f64 {
    total(&assign(samples, centroids))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElbowCurve {
    /// `(k, best SSE)` for `k = 1..=k_max`.
    pub points: Vec<(usize, f64)>,
    pub knee: usize,
}

/// SSE for every `k` up to `k_max` (capped by the number of distinct
/// samples) and a suggested knee.
pub fn elbow_scan(samples: &Samples, k_max: usize, params: &KMeansParams) -> Result<ElbowCurve> {
    let k_max = k_max.min(distinct_rows(samples)).max(1);
    let points = (1..=k_max)
        .map(|k| {
            let fit = kmeans_fit(samples, &KMeansParams { k, ..*params })?;
            Ok((k, fit.sse))
        })
        .collect::<Result<Vec<_>>>()?;
    let knee = knee_of(&points);
    Ok(ElbowCurve { points, knee })
}

/// The interior `k` maximising `SSE(k-1) - 2 SSE(k) + SSE(k+1)`. Returns the
/// first `k` when no second difference reaches 5% of the first SSE.
pub fn knee_of(points: &[(usize, f64)]) -> usize {
    let Some(&(first_k, first_sse)) = points.first() else {
        return 1;
    };
    let mut best = (first_k, f64::NEG_INFINITY);
    for w in points.windows(3) {
        let score = w[0].1 - 2.0 * w[1].1 + w[2].1;
        if score > best.1 {
            best = (w[1].0, score);
        }
    }
    if first_sse <= 0.0 || best.1 < KNEE_MIN_RELATIVE * first_sse {
        first_k
    } else {
        best.0
    }
}
