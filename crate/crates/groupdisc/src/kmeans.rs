//! Lloyd's k-means as a drop-in replacement for the latent class step.
//!
//! Initialisation is greedy farthest-point from a seeded first centre, so
//! restarts differ only in that first pick.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iter: usize,
    pub n_restarts: usize,
    pub seed: u64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansConfig {
            k,
            max_iter: 300,
            n_restarts: 10,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansModel {
    pub k: usize,
    pub centroids: Array2<f64>,
    /// Sum of squared distances to the assigned centroid.
    pub inertia: f64,
    /// Number of centroid updates.
    pub n_iterations: usize,
    pub seed: u64,
    pub restart: usize,
    /// Inertia after the initial assignment and after every update.
    pub inertia_trace: Vec<f64>,
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centre and its squared distance; ties go to the lowest index.
fn nearest(point: ArrayView1<f64>, centroids: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centre) in centroids.rows().into_iter().enumerate() {
        let d = sq_dist(point, centre);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn assign_all(points: ArrayView2<f64>, centroids: &Array2<f64>) -> (Vec<usize>, Vec<f64>) {
    points
        .rows()
        .into_iter()
        .map(|p| nearest(p, centroids))
        .unzip()
}

fn farthest_point_init(points: ArrayView2<f64>, k: usize, first: usize) -> Array2<f64> {
    let (n, d) = points.dim();
    let mut centroids = Array2::zeros((k, d));
    centroids.row_mut(0).assign(&points.row(first));
    let mut min_d: Vec<f64> = (0..n)
        .map(|i| sq_dist(points.row(i), points.row(first)))
        .collect();
    for c in 1..k {
        let mut pick = 0;
        let mut far = f64::NEG_INFINITY;
        for (i, &v) in min_d.iter().enumerate() {
            if v > far {
                far = v;
                pick = i;
            }
        }
        centroids.row_mut(c).assign(&points.row(pick));
        for (i, slot) in min_d.iter_mut().enumerate() {
            *slot = slot.min(sq_dist(points.row(i), points.row(pick)));
        }
    }
    centroids
}

fn run_lloyd(
    points: ArrayView2<f64>,
    k: usize,
    max_iter: usize,
    first: usize,
) -> (Array2<f64>, f64, usize, Vec<f64>) {
    let (n, d) = points.dim();
    let mut centroids = farthest_point_init(points, k, first);
    let (mut labels, mut dists) = assign_all(points, &centroids);
    let mut trace = vec![dists.iter().sum::<f64>()];
    let mut updates = 0;
    for _ in 0..max_iter {
        let mut sums = Array2::<f64>::zeros((k, d));
        let mut counts = vec![0usize; k];
        for (i, &c) in labels.iter().enumerate() {
            let mut row = sums.row_mut(c);
            row += &points.row(i);
            counts[c] += 1;
        }
        let mut taken = vec![false; n];
        for c in 0..k {
            if counts[c] > 0 {
                let mut row = sums.row_mut(c);
                row /= counts[c] as f64;
                centroids.row_mut(c).assign(&row);
            } else {
                // Empty cluster: move it onto the point worst served by its centre.
                let mut pick = None;
                let mut far = f64::NEG_INFINITY;
                for (i, &dist) in dists.iter().enumerate() {
                    if !taken[i] && dist > far {
                        far = dist;
                        pick = Some(i);
                    }
                }
                if let Some(i) = pick {
                    taken[i] = true;
                    centroids.row_mut(c).assign(&points.row(i));
                }
            }
        }
        updates += 1;
        let (new_labels, new_dists) = assign_all(points, &centroids);
        trace.push(new_dists.iter().sum());
        dists = new_dists;
        if new_labels == labels {
            break;
        }
        labels = new_labels;
    }
    let inertia = *trace.last().expect("trace is never empty");
    (centroids, inertia, updates, trace)
}

/// Best of `cfg.n_restarts` Lloyd runs by inertia; ties go to the earlier restart.
pub fn kmeans_fit(points: ArrayView2<f64>, cfg: &KMeansConfig) -> Result<KMeansModel> {
    let n = points.nrows();
    if cfg.k < 1 {
        return Err(Error::config("k must be >= 1"));
    }
    if cfg.k > n {
        return Err(Error::KTooLarge { k: cfg.k, n });
    }
    if cfg.n_restarts < 1 || cfg.max_iter < 1 {
        return Err(Error::config(
            "k-means needs n_restarts >= 1 and max_iter >= 1",
        ));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::config("k-means input must be finite"));
    }
    let mut best: Option<KMeansModel> = None;
    for r in 0..cfg.n_restarts {
        let first = seed::rng(cfg.seed, "kmeans/restart", r as u64).random_range(0..n);
        let (centroids, inertia, n_iterations, inertia_trace) =
            run_lloyd(points, cfg.k, cfg.max_iter, first);
        if best.as_ref().is_none_or(|b| inertia < b.inertia) {
            best = Some(KMeansModel {
                k: cfg.k,
                centroids,
                inertia,
                n_iterations,
                seed: cfg.seed,
                restart: r,
                inertia_trace,
            });
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Nearest centroid for every point; ties go to the lowest index.
pub fn kmeans_assign(model: &KMeansModel, points: ArrayView2<f64>) -> Result<Vec<usize>> {
    if points.ncols() != model.centroids.ncols() {
        return Err(Error::DimensionMismatch {
            expected: model.centroids.ncols(),
            got: points.ncols(),
        });
    }
    Ok(assign_all(points, &model.centroids).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr2, Axis};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_cluster_is_global_mean() {
        let pts = arr2(&[[0.0, 1.0], [2.0, 3.0], [4.0, 2.0]]);
        let m = kmeans_fit(pts.view(), &KMeansConfig::new(1, 0)).unwrap();
        let mean = pts.mean_axis(Axis(0)).unwrap();
        assert_eq!(m.centroids.row(0), mean);
        assert_eq!(m.n_iterations, 1);
    }

    #[test]
    fn separated_clouds_recover_cloud_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut rows = Vec::new();
        for i in 0..60 {
            let off = if i < 30 { 0.0 } else { 50.0 };
            rows.push([off + rng.random::<f64>(), off + rng.random::<f64>()]);
        }
        let pts = Array2::from_shape_vec((60, 2), rows.concat()).unwrap();
        let m = kmeans_fit(pts.view(), &KMeansConfig::new(2, 5)).unwrap();
        let lo = pts.slice(ndarray::s![..30, ..]).mean_axis(Axis(0)).unwrap();
        let hi = pts.slice(ndarray::s![30.., ..]).mean_axis(Axis(0)).unwrap();
        let (a, b) = if m.centroids[[0, 0]] < 25.0 {
            (0, 1)
        } else {
            (1, 0)
        };
        for d in 0..2 {
            assert!((m.centroids[[a, d]] - lo[d]).abs() < 1e-9);
            assert!((m.centroids[[b, d]] - hi[d]).abs() < 1e-9);
        }
        for w in m.inertia_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn too_many_clusters() {
        let pts = arr2(&[[0.0], [1.0]]);
        assert!(matches!(
            kmeans_fit(pts.view(), &KMeansConfig::new(3, 0)),
            Err(Error::KTooLarge { k: 3, n: 2 })
        ));
    }

    #[test]
    fn assignment_ties_and_exact_hits() {
        let model = KMeansModel {
            k: 2,
            centroids: arr2(&[[0.0, 0.0], [2.0, 0.0]]),
            inertia: 0.0,
            n_iterations: 0,
            seed: 0,
            restart: 0,
            inertia_trace: vec![],
        };
        let pts = arr2(&[[2.0, 0.0], [1.0, 5.0], [0.0, 0.0]]);
        assert_eq!(kmeans_assign(&model, pts.view()).unwrap(), vec![1, 0, 0]);
        assert!(kmeans_assign(&model, arr2(&[[1.0]]).view()).is_err());
    }

    #[test]
    fn duplicated_points_keep_k_centroids() {
        let pts = arr2(&[[1.0], [1.0], [1.0], [0.0]]);
        let m = kmeans_fit(pts.view(), &KMeansConfig::new(3, 1)).unwrap();
        assert_eq!(m.centroids.nrows(), 3);
        assert!(m.inertia >= 0.0);
    }
}
