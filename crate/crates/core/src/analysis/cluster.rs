use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::trajectory::TrajectoryMatrix;
use crate::error::{Error, Result};

pub const KMEANS_RESTARTS: usize = 10;
const KMEANS_MAX_ITER: usize = 300;

/// One learning curve: accuracy of a challenge over training steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub uid: String,
    pub steps: Vec<u64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub k: usize,
    /// `(uid, cluster)` sorted by uid; ids are numbered by first appearance.
    pub assignment: Vec<(String, usize)>,
    pub normalization: String,
    pub warnings: Vec<String>,
}

impl ClusterAssignment {
    pub fn get(&self, uid: &str) -> Option<usize> {
        self.assignment
            .binary_search_by(|(u, _)| u.as_str().cmp(uid))
            .ok()
            .map(|i| self.assignment[i].1)
    }
}

/// Linear interpolation onto `grid`, flat outside the curve's own range.
pub fn interpolate(steps: &[u64], values: &[f64], grid: &[u64]) -> Vec<f64> {
    grid.iter()
        .map(|&s| {
            let i = steps.partition_point(|&x| x < s);
            if i == 0 {
                values[0]
            } else if i == steps.len() {
                values[steps.len() - 1]
            } else if steps[i] == s {
                values[i]
            } else {
                let (s0, s1) = (steps[i - 1] as f64, steps[i] as f64);
                let t = (s as f64 - s0) / (s1 - s0);
                values[i - 1] + t * (values[i] - values[i - 1])
            }
        })
        .collect()
}

/// Rescales to [0, 1]; a constant curve becomes all zeros.
pub fn min_max(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        v.iter().map(|x| (x - lo) / (hi - lo)).collect()
    } else {
        vec![0.0; v.len()]
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Rows of the spectral embedding: the `k` eigenvectors of the symmetric
/// normalized Laplacian with smallest eigenvalues, each row scaled to unit
/// length.
fn spectral_embedding(points: &[Vec<f64>], gamma: f64, k: usize) -> Vec<Vec<f64>> {
    let n = points.len();
    let w = DMatrix::from_fn(n, n, |i, j| (-gamma * sq_dist(&points[i], &points[j])).exp());
    let inv_sqrt_deg: Vec<f64> = (0..n).map(|i| 1.0 / w.row(i).sum().sqrt()).collect();
    let lap = DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - inv_sqrt_deg[i] * w[(i, j)] * inv_sqrt_deg[j]
    });
    let eig = SymmetricEigen::new(lap);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    (0..n)
        .map(|i| {
            let row: Vec<f64> = order[..k].iter().map(|&c| eig.eigenvectors[(i, c)]).collect();
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter().map(|x| x / norm).collect()
            } else {
                row
            }
        })
        .collect()
}

fn nearest(p: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(p, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn kmeans_pp_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centers = vec![points[rng.random_range(0..points.len())].clone()];
    while centers.len() < k {
        let d: Vec<f64> = points.iter().map(|p| nearest(p, &centers).1).collect();
        let total: f64 = d.iter().sum();
        let idx = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, di) in d.iter().enumerate() {
                if u < *di {
                    pick = i;
                    break;
                }
                u -= di;
            }
            pick
        } else {
            rng.random_range(0..points.len())
        };
        centers.push(points[idx].clone());
    }
    centers
}

/// Lloyd iterations from k-means++ seeds, best inertia over restarts.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, restarts: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = points[0].len();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..restarts.max(1) {
        let mut centers = kmeans_pp_init(points, k, &mut rng);
        let mut labels = vec![usize::MAX; points.len()];
        for _ in 0..KMEANS_MAX_ITER {
            let next: Vec<usize> = points.iter().map(|p| nearest(p, &centers).0).collect();
            if next == labels {
                break;
            }
            labels = next;
            for (c, center) in centers.iter_mut().enumerate() {
                let members: Vec<&Vec<f64>> = points.iter().zip(&labels).filter(|(_, &l)| l == c).map(|(p, _)| p).collect();
                if members.is_empty() {
                    continue;
                }
                *center = (0..dim)
                    .map(|d| members.iter().map(|p| p[d]).sum::<f64>() / members.len() as f64)
                    .collect();
            }
        }
        let inertia: f64 = points.iter().zip(&labels).map(|(p, &l)| sq_dist(p, &centers[l])).sum();
        if best.as_ref().is_none_or(|(b, _)| inertia < *b) {
            best = Some((inertia, labels));
        }
    }
    best.expect("at least one restart").1
}

fn relabel(labels: &[usize]) -> Vec<usize> {
    let mut map: Vec<(usize, usize)> = Vec::new();
    labels
        .iter()
        .map(|&l| match map.iter().find(|(from, _)| *from == l) {
            Some(&(_, to)) => to,
            None => {
                map.push((l, map.len()));
                map.len() - 1
            }
        })
        .collect()
}

/// Spectral clustering of learning curves on their common step grid.
pub fn cluster_curves(curves: &[Curve], k: usize, seed: u64) -> Result<ClusterAssignment> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if curves.len() <= k && k > 1 {
        return Err(Error::InvalidArgument(format!(
            "{} curves cannot form {k} clusters",
            curves.len()
        )));
    }
    if curves.is_empty() {
        return Err(Error::InvalidArgument("no curves".into()));
    }
    for c in curves {
        if c.steps.len() < 3 || c.steps.len() != c.values.len() {
            return Err(Error::InvalidArgument(format!("curve {} needs at least 3 points", c.uid)));
        }
        if c.steps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(format!("curve {}: steps must increase", c.uid)));
        }
    }
    let mut sorted: Vec<&Curve> = curves.iter().collect();
    sorted.sort_by(|a, b| a.uid.cmp(&b.uid));
    if let Some(w) = sorted.windows(2).find(|w| w[0].uid == w[1].uid) {
        return Err(Error::DuplicateChallenge(w[0].uid.clone()));
    }
    let mut grid: Vec<u64> = sorted.iter().flat_map(|c| c.steps.iter().copied()).collect();
    grid.sort_unstable();
    grid.dedup();
    let points: Vec<Vec<f64>> = sorted
        .iter()
        .map(|c| min_max(&interpolate(&c.steps, &c.values, &grid)))
        .collect();

    let mut warnings = Vec::new();
    let degenerate = points
        .iter()
        .all(|p| p.iter().zip(&points[0]).all(|(a, b)| (a - b).abs() < 1e-9));
    let labels = if k == 1 {
        vec![0; points.len()]
    } else if degenerate {
        let msg = "all curves identical after normalization; returning one cluster".to_string();
        warn!("{msg}");
        warnings.push(msg);
        vec![0; points.len()]
    } else {
        let gamma = 1.0 / grid.len() as f64;
        let embedding = spectral_embedding(&points, gamma, k);
        relabel(&kmeans(&embedding, k, seed, KMEANS_RESTARTS))
    };
    Ok(ClusterAssignment {
        k,
        assignment: sorted.iter().map(|c| c.uid.clone()).zip(labels).collect(),
        normalization: "min_max".into(),
        warnings,
    })
}

pub fn cluster_trajectories(traj: &TrajectoryMatrix, k: usize, seed: u64) -> Result<ClusterAssignment> {
    let curves: Vec<Curve> = traj
        .challenges
        .iter()
        .enumerate()
        .map(|(j, c)| Curve {
            uid: c.uid.clone(),
            steps: traj.steps.clone(),
            values: traj.column(j),
        })
        .collect();
    cluster_curves(&curves, k, seed)
}
