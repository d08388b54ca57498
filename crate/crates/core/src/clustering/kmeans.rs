use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{lexicographic, ClusterConfig, ClusterModel, DimensionSample, InitScheme};
use crate::error::{Error, Result};
use crate::kitti_io::ObjectClass;
use crate::linalg::{dist2, Vec3};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansModel<T> {
    pub class_name: ObjectClass,
    pub n: usize,
    pub centroids: Vec<Vec3<T>>,
    pub assignments: Vec<usize>,
    /// Within-cluster sum of squared distances.
    pub objective: T,
    pub iterations_run: usize,
    /// Objective after every completed Lloyd iteration.
    pub objective_history: Vec<T>,
    pub seed: u64,
}

impl<T: Real> ClusterModel<T> for KMeansModel<T> {
    fn cluster_means(&self) -> &[Vec3<T>] {
        &self.centroids
    }
}

pub(crate) fn validate_inputs<T>(samples: &[DimensionSample<T>], n: usize) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::Argument("no samples to cluster".into()));
    }
    if n == 0 {
        return Err(Error::Argument("cluster count must be at least 1".into()));
    }
    if n > samples.len() {
        return Err(Error::Argument(format!(
            "cluster count {n} exceeds sample count {}",
            samples.len()
        )));
    }
    Ok(())
}

/// Index of the nearest centroid; ties go to the lowest index.
fn nearest<T: Real>(centroids: &[Vec3<T>], x: &Vec3<T>) -> (usize, T) {
    let mut best = 0;
    let mut best_d = dist2(centroids[0], *x);
    for (j, c) in centroids.iter().enumerate().skip(1) {
        let d = dist2(*c, *x);
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    (best, best_d)
}

pub fn kmeans_assign<T: Real>(model: &KMeansModel<T>, x: &DimensionSample<T>) -> usize {
    nearest(&model.centroids, &x.as_vec()).0
}

fn farthest_point_seeds<T: Real>(points: &[Vec3<T>], n: usize) -> Vec<Vec3<T>> {
    let first = (1..points.len()).fold(0, |best, i| {
        if lexicographic(&points[i], &points[best]).is_lt() {
            i
        } else {
            best
        }
    });
    let mut seeds = vec![points[first]];
    let mut min_d: Vec<T> = points.iter().map(|p| dist2(*p, points[first])).collect();
    while seeds.len() < n {
        let mut pick = 0;
        for i in 1..points.len() {
            let better = min_d[i] > min_d[pick]
                || (min_d[i] == min_d[pick] && lexicographic(&points[i], &points[pick]).is_lt());
            if better {
                pick = i;
            }
        }
        let s = points[pick];
        seeds.push(s);
        for (d, p) in min_d.iter_mut().zip(points) {
            *d = d.min(dist2(*p, s));
        }
    }
    seeds
}

fn random_seeds<T: Real>(points: &[Vec3<T>], n: usize, seed: u64) -> Vec<Vec3<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rand::seq::index::sample(&mut rng, points.len(), n)
        .into_iter()
        .map(|i| points[i])
        .collect()
}

fn objective<T: Real>(points: &[Vec3<T>], centroids: &[Vec3<T>], assignments: &[usize]) -> T {
    points
        .iter()
        .zip(assignments)
        .fold(T::zero(), |acc, (p, &a)| acc + dist2(*p, centroids[a]))
}

fn means<T: Real>(points: &[Vec3<T>], assignments: &[usize], previous: &[Vec3<T>]) -> Vec<Vec3<T>> {
    let k = previous.len();
    let mut sums = vec![[T::zero(); 3]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignments) {
        for d in 0..3 {
            sums[a][d] = sums[a][d] + p[d];
        }
        counts[a] += 1;
    }
    (0..k)
        .map(|j| {
            if counts[j] == 0 {
                previous[j]
            } else {
                let c = T::from_count(counts[j]);
                sums[j].map(|s| s / c)
            }
        })
        .collect()
}

/// Moves the sample farthest from its own centroid into each empty cluster.
fn reseed_empty<T: Real>(points: &[Vec3<T>], centroids: &[Vec3<T>], assignments: &mut [usize]) {
    let k = centroids.len();
    let mut counts = vec![0usize; k];
    for &a in assignments.iter() {
        counts[a] += 1;
    }
    for j in 0..k {
        if counts[j] > 0 {
            continue;
        }
        let mut pick: Option<(usize, T)> = None;
        for (i, p) in points.iter().enumerate() {
            if counts[assignments[i]] < 2 {
                continue;
            }
            let d = dist2(*p, centroids[assignments[i]]);
            let better = match pick {
                None => true,
                Some((b, bd)) => d > bd || (d == bd && lexicographic(p, &points[b]).is_lt()),
            };
            if better {
                pick = Some((i, d));
            }
        }
        if let Some((i, _)) = pick {
            counts[assignments[i]] -= 1;
            assignments[i] = j;
            counts[j] = 1;
        }
    }
}

/// Lloyd's algorithm minimizing the within-cluster sum of squares.
///
/// Stops when assignments no longer change, when the relative objective
/// decrease drops below `cfg.tolerance`, or after `cfg.max_iterations`.
pub fn kmeans_fit<T: Real>(samples: &[DimensionSample<T>], n: usize, cfg: &ClusterConfig) -> Result<KMeansModel<T>> {
    validate_inputs(samples, n)?;
    cfg.validate()?;
    let points: Vec<Vec3<T>> = samples.iter().map(DimensionSample::as_vec).collect();
    let mut centroids = match cfg.init {
        InitScheme::FarthestPoint => farthest_point_seeds(&points, n),
        InitScheme::SeededRandom => random_seeds(&points, n, cfg.seed),
    };
    let tol = T::lit(cfg.tolerance);
    let mut assignments: Vec<usize> = Vec::new();
    let mut history: Vec<T> = Vec::new();
    let mut iterations = 0;

    for _ in 0..cfg.max_iterations {
        let mut next: Vec<usize> = points.iter().map(|p| nearest(&centroids, p).0).collect();
        reseed_empty(&points, &centroids, &mut next);
        let next_centroids = means(&points, &next, &centroids);
        let j = objective(&points, &next_centroids, &next);

        if let Some(&prev) = history.last() {
            // Rounding can make a converged update look marginally worse; keep the earlier state.
            if j > prev {
                break;
            }
        }
        let unchanged = next == assignments;
        let prev = history.last().copied();
        assignments = next;
        centroids = next_centroids;
        history.push(j);
        iterations += 1;

        if unchanged {
            break;
        }
        if let Some(prev) = prev {
            let denom = prev.abs().max(T::min_positive_value());
            if (prev - j) / denom < tol {
                break;
            }
        }
    }

    Ok(KMeansModel {
        class_name: samples[0].class_name.clone(),
        n,
        objective: *history.last().expect("at least one iteration"),
        centroids,
        assignments,
        iterations_run: iterations,
        objective_history: history,
        seed: cfg.seed,
    })
}
