//! Clustering-based decomposition of a suite into simulator-sized sub-suites.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::suite::{FeatureMatrix, TestSuite};

pub const MAX_LLOYD_ITERATIONS: usize = 300;
pub const DEFAULT_MAX_CLUSTER: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct Clustering {
    pub k: usize,
    pub assignment: Vec<usize>,
    pub centroids: Vec<[f64; 3]>,
}

impl Clustering {
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &c in &self.assignment {
            sizes[c] += 1;
        }
        sizes
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == cluster)
            .collect()
    }

    /// Within-cluster sum of squared distances to the cluster means.
    pub fn inertia(&self, features: &FeatureMatrix) -> f64 {
        let means = cluster_means(features, &self.assignment, self.k, &self.centroids);
        features
            .rows
            .iter()
            .zip(&self.assignment)
            .map(|(row, &c)| dist2(row, &means[c]))
            .sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("test_index,cluster\n");
        for (i, c) in self.assignment.iter().enumerate() {
            let _ = writeln!(out, "{i},{c}");
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

#[inline]
fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|c| (a[c] - b[c]).powi(2)).sum()
}

/// Index of the nearest centroid; ties go to the lower index.
fn nearest(point: &[f64; 3], centroids: &[[f64; 3]]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let d = dist2(point, centroid);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

/// Means per cluster; an empty cluster keeps its previous centroid.
fn cluster_means(
    features: &FeatureMatrix,
    assignment: &[usize],
    k: usize,
    previous: &[[f64; 3]],
) -> Vec<[f64; 3]> {
    let mut sums = vec![[0.0; 3]; k];
    let mut counts = vec![0usize; k];
    for (row, &c) in features.rows.iter().zip(assignment) {
        counts[c] += 1;
        for d in 0..3 {
            sums[c][d] += row[d];
        }
    }
    (0..k)
        .map(|c| {
            if counts[c] == 0 {
                previous[c]
            } else {
                let n = counts[c] as f64;
                [sums[c][0] / n, sums[c][1] / n, sums[c][2] / n]
            }
        })
        .collect()
}

fn plus_plus_seeds(features: &FeatureMatrix, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = features.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = features
        .rows
        .iter()
        .map(|r| dist2(r, &features.rows[chosen[0]]))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(i);
                    if target < w {
                        break;
                    }
                    target -= w;
                }
            }
            pick.expect("positive total weight")
        } else {
            // Every remaining point coincides with a seed: take any unused index.
            let unused: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            unused[rng.random_range(0..unused.len())]
        };
        chosen.push(next);
        for (i, row) in features.rows.iter().enumerate() {
            d2[i] = d2[i].min(dist2(row, &features.rows[next]));
        }
    }
    chosen
}

/// k-means++ seeding followed by Lloyd iterations. Empty clusters are dropped
/// from the result, so the returned `k` may be smaller than requested.
pub fn kmeans(features: &FeatureMatrix, k: usize, seed: u64) -> Result<Clustering> {
    let n = features.len();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!(
            "k = {k} must lie in [1, {n}]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<[f64; 3]> = plus_plus_seeds(features, k, &mut rng)
        .into_iter()
        .map(|i| features.rows[i])
        .collect();
    let mut assignment: Vec<usize> = features
        .rows
        .iter()
        .map(|r| nearest(r, &centroids))
        .collect();
    for _ in 0..MAX_LLOYD_ITERATIONS {
        centroids = cluster_means(features, &assignment, k, &centroids);
        let next: Vec<usize> = features
            .rows
            .iter()
            .map(|r| nearest(r, &centroids))
            .collect();
        if next == assignment {
            break;
        }
        assignment = next;
    }
    centroids = cluster_means(features, &assignment, k, &centroids);
    Ok(drop_empty(Clustering {
        k,
        assignment,
        centroids,
    }))
}

fn drop_empty(c: Clustering) -> Clustering {
    let sizes = c.sizes();
    let mut relabel = vec![usize::MAX; c.k];
    let mut centroids = Vec::new();
    for (old, &size) in sizes.iter().enumerate() {
        if size > 0 {
            relabel[old] = centroids.len();
            centroids.push(c.centroids[old]);
        }
    }
    Clustering {
        k: centroids.len(),
        assignment: c.assignment.iter().map(|&a| relabel[a]).collect(),
        centroids,
    }
}

/// Enforces `max_size` by moving the members of each oversized cluster that
/// lie farthest from its centroid (ties: lower test index first) to the
/// nearest centroid that still has room. Centroids are left as they were.
pub fn cap_and_reassign(
    clustering: &Clustering,
    features: &FeatureMatrix,
    max_size: usize,
) -> Result<Clustering> {
    let n = clustering.assignment.len();
    Error::check_len(n, features.len())?;
    if max_size == 0 {
        return Err(Error::InvalidParameter(
            "max cluster size must be >= 1".into(),
        ));
    }
    if clustering.k * max_size < n {
        return Err(Error::InfeasibleCapacity {
            tests: n,
            clusters: clustering.k,
            max_size,
        });
    }
    let mut out = clustering.clone();
    let mut sizes = out.sizes();
    for c in 0..out.k {
        if sizes[c] <= max_size {
            continue;
        }
        let centroid = out.centroids[c];
        let mut members = out.members(c);
        // Stable sort keeps ascending index order among equal distances.
        members.sort_by(|&a, &b| {
            dist2(&features.rows[b], &centroid).total_cmp(&dist2(&features.rows[a], &centroid))
        });
        let excess = sizes[c] - max_size;
        for &test in &members[..excess] {
            let point = &features.rows[test];
            let target = (0..out.k)
                .filter(|&t| t != c && sizes[t] < max_size)
                .min_by(|&a, &b| {
                    dist2(point, &out.centroids[a])
                        .total_cmp(&dist2(point, &out.centroids[b]))
                        .then(a.cmp(&b))
                })
                .expect("capacity check guarantees a target");
            out.assignment[test] = target;
            sizes[c] -= 1;
            sizes[target] += 1;
        }
    }
    Ok(out)
}

/// A cluster of the parent suite as a standalone suite.
#[derive(Clone, Debug, PartialEq)]
pub struct SubSuite {
    pub suite: TestSuite,
    /// `members[local] = parent index`, ascending.
    pub members: Vec<usize>,
}

/// `ceil(n / max_size) + 1`, clamped to `n`.
pub fn default_k(n_tests: usize, max_size: usize) -> usize {
    (n_tests.div_ceil(max_size.max(1)) + 1).min(n_tests).max(1)
}

pub fn cluster_suite(
    suite: &TestSuite,
    k: usize,
    max_size: usize,
    seed: u64,
) -> Result<Clustering> {
    let features = suite.normalize_features();
    if k == 0 || k > suite.n_tests() {
        return Err(Error::InvalidParameter(format!(
            "k = {k} must lie in [1, {}]",
            suite.n_tests()
        )));
    }
    if k * max_size < suite.n_tests() {
        return Err(Error::InfeasibleCapacity {
            tests: suite.n_tests(),
            clusters: k,
            max_size,
        });
    }
    let mut clustering = kmeans(&features, k, seed)?;
    // Duplicate feature rows can empty a cluster; restore capacity with
    // zero-width clusters anchored on existing points so the cap stays feasible.
    while clustering.k * max_size < suite.n_tests() {
        let anchor = clustering.centroids[clustering.k - 1];
        clustering.centroids.push(anchor);
        clustering.k += 1;
    }
    let capped = cap_and_reassign(&clustering, &features, max_size)?;
    Ok(drop_empty(capped))
}

pub fn decompose(suite: &TestSuite, k: usize, max_size: usize, seed: u64) -> Result<Vec<SubSuite>> {
    let clustering = cluster_suite(suite, k, max_size, seed)?;
    split_by(suite, &clustering)
}

pub fn split_by(suite: &TestSuite, clustering: &Clustering) -> Result<Vec<SubSuite>> {
    (0..clustering.k)
        .map(|c| {
            let members = clustering.members(c);
            let sub = suite.restrict(format!("{}#c{c}", suite.name()), &members)?;
            Ok(SubSuite {
                suite: sub,
                members,
            })
        })
        .collect()
}
