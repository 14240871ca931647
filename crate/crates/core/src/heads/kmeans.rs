use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_NOTA_CLUSTERS: usize = 6;
pub const MAX_NOTA_CLUSTERS: usize = 16;
pub const DEFAULT_KMEANS_ITERS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    /// `k × d`
    pub centroids: Array2<f64>,
    pub assignments: Vec<usize>,
    /// Inertia after each assignment step.
    pub inertia_history: Vec<f64>,
}

impl KMeans {
    pub fn inertia(&self) -> f64 {
        self.inertia_history.last().copied().unwrap_or(0.0)
    }
}

pub(crate) fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid (lowest index on ties) and its squared distance.
fn nearest(point: ArrayView1<f64>, centroids: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.outer_iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_init<R: Rng>(points: ArrayView2<f64>, k: usize, rng: &mut R) -> Array2<f64> {
    let n = points.nrows();
    let mut centroids = Array2::zeros((k, points.ncols()));
    centroids
        .row_mut(0)
        .assign(&points.row(rng.gen_range(0..n)));
    let mut d2: Vec<f64> = points
        .outer_iter()
        .map(|p| sq_dist(p, centroids.row(0)))
        .collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 && total.is_finite() {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centroids.row_mut(c).assign(&points.row(pick));
        for (i, p) in points.outer_iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, centroids.row(c)));
        }
    }
    centroids
}

fn assign(points: ArrayView2<f64>, centroids: &Array2<f64>) -> (Vec<usize>, f64) {
    let mut inertia = 0.0;
    let labels = points
        .outer_iter()
        .map(|p| {
            let (c, d) = nearest(p, centroids);
            inertia += d;
            c
        })
        .collect();
    (labels, inertia)
}

/// Clusters the rows of `points` into `k` groups with k-means++ seeding and
/// Lloyd iterations. Empty clusters keep their previous centroid.
pub fn kmeans_nota(
    points: ArrayView2<f64>,
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<KMeans> {
    if k == 0 || points.nrows() < k {
        return Err(Error::TooFewPoints {
            k,
            points: points.nrows(),
        });
    }
    let mut rng = rng::substream(seed, rng::KMEANS, 0);
    let mut centroids = plus_plus_init(points, k, &mut rng);
    let mut history = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    for _ in 0..max_iters.max(1) {
        let (next, inertia) = assign(points, &centroids);
        history.push(inertia);
        if next == labels {
            break;
        }
        labels = next;
        centroids = update(points, &labels, centroids);
    }
    let (final_labels, inertia) = assign(points, &centroids);
    if final_labels != labels {
        history.push(inertia);
    }
    Ok(KMeans {
        centroids,
        assignments: final_labels,
        inertia_history: history,
    })
}

fn update(points: ArrayView2<f64>, labels: &[usize], mut centroids: Array2<f64>) -> Array2<f64> {
    let k = centroids.nrows();
    let mut sums = Array2::<f64>::zeros(centroids.raw_dim());
    let mut counts = vec![0usize; k];
    for (p, &c) in points.outer_iter().zip(labels) {
        let mut row = sums.row_mut(c);
        row += &p;
        counts[c] += 1;
    }
    for (c, &n) in counts.iter().enumerate() {
        if n > 0 {
            let mean: Array1<f64> = &sums.row(c) / n as f64;
            centroids.row_mut(c).assign(&mean);
        }
    }
    centroids
}

/// Mean of all rows; used as the single-cluster reference.
pub fn column_mean(points: ArrayView2<f64>) -> Option<Array1<f64>> {
    points.mean_axis(Axis(0))
}
