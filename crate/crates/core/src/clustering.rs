//! k-means (k-means++ seeding, Lloyd iterations) and the distance/indicator
//! matrices consumed by the membership objective.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    /// K × dim.
    pub centroids: Array2<f64>,
    pub assignment: Vec<usize>,
    /// n × K squared euclidean distances to every centroid.
    pub distances: Array2<f64>,
    /// Within-cluster sum of squares after each Lloyd update.
    pub inertia_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub(crate) fn squared_distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn distance_matrix(points: ArrayView2<f64>, centroids: ArrayView2<f64>) -> Array2<f64> {
    Array2::from_shape_fn((points.nrows(), centroids.nrows()), |(i, k)| {
        squared_distance(points.row(i), centroids.row(k))
    })
}

/// Index of the smallest entry; ties go to the lowest index.
fn argmin(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate().skip(1) {
        if v < row[best] {
            best = k;
        }
    }
    best
}

fn kmeans_plus_plus<R: Rng>(points: ArrayView2<f64>, k: usize, rng: &mut R) -> Array2<f64> {
    let n = points.nrows();
    let mut centroids = Array2::zeros((k, points.ncols()));
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&points.row(first));
    let mut nearest: Vec<f64> = (0..n)
        .map(|i| squared_distance(points.row(i), points.row(first)))
        .collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in nearest.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).assign(&points.row(pick));
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(squared_distance(points.row(i), points.row(pick)));
        }
    }
    centroids
}

/// Reseeds every empty cluster on the point farthest from its own centroid
/// and moves that point into it.
fn repair_empty(
    points: ArrayView2<f64>,
    centroids: &mut Array2<f64>,
    distances: &mut Array2<f64>,
    assignment: &mut [usize],
) {
    let k = centroids.nrows();
    let mut sizes = vec![0usize; k];
    assignment.iter().for_each(|&a| sizes[a] += 1);
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let far = (0..points.nrows())
            .filter(|&i| sizes[assignment[i]] > 1)
            .fold(None::<(usize, f64)>, |best, i| {
                let d = distances[[i, assignment[i]]];
                match best {
                    Some((_, bd)) if bd >= d => best,
                    _ => Some((i, d)),
                }
            });
        let Some((far, _)) = far else { break };
        sizes[assignment[far]] -= 1;
        sizes[empty] = 1;
        assignment[far] = empty;
        centroids.row_mut(empty).assign(&points.row(far));
        for i in 0..points.nrows() {
            distances[[i, empty]] = squared_distance(points.row(i), centroids.row(empty));
        }
    }
}

fn update_centroids(points: ArrayView2<f64>, assignment: &[usize], centroids: &mut Array2<f64>) {
    let k = centroids.nrows();
    let mut sums = Array2::<f64>::zeros(centroids.raw_dim());
    let mut counts = vec![0usize; k];
    for (i, &a) in assignment.iter().enumerate() {
        sums.row_mut(a).scaled_add(1.0, &points.row(i));
        counts[a] += 1;
    }
    for (c, &count) in counts.iter().enumerate() {
        if count > 0 {
            centroids.row_mut(c).assign(&(&sums.row(c) / count as f64));
        }
    }
}

pub fn inertia(points: ArrayView2<f64>, centroids: ArrayView2<f64>, assignment: &[usize]) -> f64 {
    assignment
        .iter()
        .enumerate()
        .map(|(i, &a)| squared_distance(points.row(i), centroids.row(a)))
        .sum()
}

fn assign(distances: &Array2<f64>) -> Vec<usize> {
    distances.axis_iter(Axis(0)).map(argmin).collect()
}

/// Fits k-means on the rows of `points`.
pub fn fit_kmeans<R: Rng>(
    points: ArrayView2<f64>,
    k: usize,
    max_iters: usize,
    rng: &mut R,
) -> Result<ClusterModel> {
    let n = points.nrows();
    if n == 0 {
        return Err(invalid("cannot cluster an empty set"));
    }
    if k == 0 || k > n {
        return Err(invalid(format!("need 1 <= K <= n, got K={k}, n={n}")));
    }
    if max_iters == 0 {
        return Err(invalid("max_iters must be at least 1"));
    }

    let mut centroids = kmeans_plus_plus(points, k, rng);
    let mut distances = distance_matrix(points, centroids.view());
    let mut assignment = assign(&distances);
    repair_empty(points, &mut centroids, &mut distances, &mut assignment);

    let mut inertia_trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        update_centroids(points, &assignment, &mut centroids);
        inertia_trace.push(inertia(points, centroids.view(), &assignment));
        distances = distance_matrix(points, centroids.view());
        let mut next = assign(&distances);
        repair_empty(points, &mut centroids, &mut distances, &mut next);
        if next == assignment {
            converged = true;
            break;
        }
        assignment = next;
    }

    Ok(ClusterModel { centroids, assignment, distances, inertia_trace, iterations, converged })
}

impl ClusterModel {
    pub fn n_samples(&self) -> usize {
        self.assignment.len()
    }

    pub fn n_clusters(&self) -> usize {
        self.centroids.nrows()
    }

    /// One-hot n × K membership matrix.
    pub fn indicator(&self) -> Array2<f64> {
        let mut c = Array2::zeros((self.n_samples(), self.n_clusters()));
        for (i, &a) in self.assignment.iter().enumerate() {
            c[[i, a]] = 1.0;
        }
        c
    }

    /// `(D, C)`: squared distances and cluster indicators, both n × K.
    pub fn matrices(&self) -> (Array2<f64>, Array2<f64>) {
        (self.distances.clone(), self.indicator())
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_clusters()];
        self.assignment.iter().for_each(|&a| sizes[a] += 1);
        sizes
    }

    /// Squared distance of every sample to its own centroid.
    pub fn own_distances(&self) -> Array1<f64> {
        self.assignment
            .iter()
            .enumerate()
            .map(|(i, &a)| self.distances[[i, a]])
            .collect()
    }

    /// Keeps only the listed rows and drops clusters left without members.
    pub fn restrict(&self, rows: &[usize]) -> ClusterModel {
        let mut keep: Vec<usize> = rows.iter().map(|&i| self.assignment[i]).collect();
        keep.sort_unstable();
        keep.dedup();
        let remap = |a: usize| keep.binary_search(&a).expect("kept cluster");
        let centroids = self.centroids.select(Axis(0), &keep);
        let distances = self.distances.select(Axis(0), rows).select(Axis(1), &keep);
        let assignment = rows.iter().map(|&i| remap(self.assignment[i])).collect();
        ClusterModel {
            centroids,
            assignment,
            distances,
            inertia_trace: self.inertia_trace.clone(),
            iterations: self.iterations,
            converged: self.converged,
        }
    }
}
