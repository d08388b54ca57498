use super::kmeans::{kmeans_fit, validate_inputs};
use super::{ClusterConfig, ClusterModel, DimensionSample};
use crate::error::{Error, Result};
use crate::kitti_io::ObjectClass;
use crate::linalg::{dot3, forward_substitute, sub3, Mat3, Vec3};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel<T> {
    pub class_name: ObjectClass,
    pub n: usize,
    pub weights: Vec<T>,
    pub means: Vec<Vec3<T>>,
    pub covariances: Vec<Mat3<T>>,
    pub log_likelihood: T,
    /// EM iterations (M-steps) performed.
    pub iterations_run: usize,
    /// Log-likelihood of the initial parameters followed by one entry per iteration.
    pub log_likelihood_history: Vec<T>,
    pub seed: u64,
}

impl<T: Real> ClusterModel<T> for GmmModel<T> {
    fn cluster_means(&self) -> &[Vec3<T>] {
        &self.means
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MStepUpdate<T> {
    pub weights: Vec<T>,
    pub means: Vec<Vec3<T>>,
    pub covariances: Vec<Mat3<T>>,
}

/// Log-density evaluator for one Gaussian component.
struct Component<T> {
    log_weight: T,
    mean: Vec3<T>,
    chol: Mat3<T>,
    log_norm: T,
}

impl<T: Real> Component<T> {
    fn new(weight: T, mean: Vec3<T>, cov: &Mat3<T>) -> Result<Self> {
        let chol = cov
            .cholesky()
            .ok_or_else(|| Error::Numeric("covariance is not positive-definite".into()))?;
        let log_det = (0..3).fold(T::zero(), |acc, i| acc + chol.m[i][i].ln()) * T::lit(2.0);
        let two_pi = T::lit(2.0) * T::PI();
        let log_norm = -T::lit(0.5) * (T::lit(3.0) * two_pi.ln() + log_det);
        Ok(Self {
            log_weight: weight.ln(),
            mean,
            chol,
            log_norm,
        })
    }

    fn log_weighted_pdf(&self, x: &Vec3<T>) -> T {
        let y = forward_substitute(&self.chol, sub3(*x, self.mean));
        self.log_weight + self.log_norm - T::lit(0.5) * dot3(y, y)
    }
}

/// Maximum weighted log-density below which a sample counts as underflowed.
const MIN_LOG_DENSITY: f64 = -1.0e6;

fn components<T: Real>(weights: &[T], means: &[Vec3<T>], covs: &[Mat3<T>]) -> Result<Vec<Component<T>>> {
    weights
        .iter()
        .zip(means)
        .zip(covs)
        .map(|((&w, &m), c)| Component::new(w, m, c))
        .collect()
}

/// Normalized responsibilities of one sample plus its log marginal density.
fn responsibilities_row<T: Real>(comps: &[Component<T>], x: &Vec3<T>) -> Result<(Vec<T>, T)> {
    let logs: Vec<T> = comps.iter().map(|c| c.log_weighted_pdf(x)).collect();
    let max = logs.iter().copied().fold(T::neg_infinity(), T::max);
    if !max.is_finite() || max < T::lit(MIN_LOG_DENSITY) {
        return Err(Error::Numeric(format!(
            "all component densities underflow for sample ({}, {}, {})",
            x[0], x[1], x[2]
        )));
    }
    let sum = logs.iter().fold(T::zero(), |acc, &l| acc + (l - max).exp());
    let lse = max + sum.ln();
    let mut row: Vec<T> = logs.iter().map(|&l| (l - lse).exp()).collect();
    // renormalize so the row sums to one at working precision
    let total = row.iter().fold(T::zero(), |a, &b| a + b);
    for r in row.iter_mut() {
        *r = *r / total;
    }
    Ok((row, lse))
}

/// Posterior membership probabilities of `x` under `model`.
pub fn gmm_responsibilities<T: Real>(model: &GmmModel<T>, x: &DimensionSample<T>) -> Result<Vec<T>> {
    let comps = components(&model.weights, &model.means, &model.covariances)?;
    Ok(responsibilities_row(&comps, &x.as_vec())?.0)
}

fn e_step<T: Real>(points: &[Vec3<T>], comps: &[Component<T>]) -> Result<(Vec<Vec<T>>, T)> {
    let mut resp = Vec::with_capacity(points.len());
    let mut ll = T::zero();
    for p in points {
        let (row, lse) = responsibilities_row(comps, p)?;
        ll = ll + lse;
        resp.push(row);
    }
    Ok((resp, ll))
}

/// Weight, mean and covariance updates from row-normalized responsibilities.
/// Covariances are floored to `covariance_floor` on their eigenvalues.
pub fn gmm_m_step<T: Real>(
    samples: &[DimensionSample<T>],
    responsibilities: &[Vec<T>],
    covariance_floor: T,
) -> Result<MStepUpdate<T>> {
    if samples.len() != responsibilities.len() || samples.is_empty() {
        return Err(Error::Argument(format!(
            "{} samples but {} responsibility rows",
            samples.len(),
            responsibilities.len()
        )));
    }
    let points: Vec<Vec3<T>> = samples.iter().map(DimensionSample::as_vec).collect();
    m_step(&points, responsibilities, covariance_floor, 0)
}

fn m_step<T: Real>(points: &[Vec3<T>], resp: &[Vec<T>], floor: T, iteration: usize) -> Result<MStepUpdate<T>> {
    let k = resp[0].len();
    let total = T::from_count(points.len());
    let mut weights = Vec::with_capacity(k);
    let mut means = Vec::with_capacity(k);
    let mut covariances = Vec::with_capacity(k);
    for j in 0..k {
        let nk = resp.iter().fold(T::zero(), |acc, r| acc + r[j]);
        if !(nk >= T::lit(1e-12)) {
            return Err(Error::DegenerateComponent { component: j, iteration });
        }
        let mut mean = [T::zero(); 3];
        for (p, r) in points.iter().zip(resp) {
            for d in 0..3 {
                mean[d] = mean[d] + r[j] * p[d];
            }
        }
        let mean = mean.map(|s| s / nk);
        let mut cov = Mat3::zeros();
        for (p, r) in points.iter().zip(resp) {
            let diff = sub3(*p, mean);
            cov = cov + Mat3::outer(diff, diff).scale(r[j]);
        }
        weights.push(nk / total);
        means.push(mean);
        covariances.push(cov.scale(T::one() / nk).floor_eigenvalues(floor));
    }
    Ok(MStepUpdate {
        weights,
        means,
        covariances,
    })
}

/// Expectation-maximization for a full-covariance mixture, started from
/// the K-means solution with the same configuration.
pub fn gmm_fit<T: Real>(samples: &[DimensionSample<T>], n: usize, cfg: &ClusterConfig) -> Result<GmmModel<T>> {
    validate_inputs(samples, n)?;
    cfg.validate()?;
    let points: Vec<Vec3<T>> = samples.iter().map(DimensionSample::as_vec).collect();
    let floor = T::lit(cfg.covariance_floor);
    let tol = T::lit(cfg.tolerance);

    let km = kmeans_fit(samples, n, cfg)?;
    let hard: Vec<Vec<T>> = km
        .assignments
        .iter()
        .map(|&a| (0..n).map(|j| if j == a { T::one() } else { T::zero() }).collect())
        .collect();
    let mut params = m_step(&points, &hard, floor, 0)?;

    let comps = components(&params.weights, &params.means, &params.covariances)?;
    let (mut resp, mut ll) = e_step(&points, &comps)?;
    let mut history = vec![ll];
    let mut iterations = 0;

    for it in 1..=cfg.max_iterations {
        params = m_step(&points, &resp, floor, it)?;
        let comps = components(&params.weights, &params.means, &params.covariances)?;
        let (next_resp, next_ll) = e_step(&points, &comps)?;
        iterations = it;
        history.push(next_ll);
        let denom = ll.abs().max(T::min_positive_value());
        let rel = (next_ll - ll).abs() / denom;
        resp = next_resp;
        ll = next_ll;
        if rel < tol {
            break;
        }
    }

    Ok(GmmModel {
        class_name: samples[0].class_name.clone(),
        n,
        weights: params.weights,
        means: params.means,
        covariances: params.covariances,
        log_likelihood: ll,
        iterations_run: iterations,
        log_likelihood_history: history,
        seed: cfg.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::super::test_support::samples;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blob(rng: &mut ChaCha8Rng, center: [f64; 3], sigma: f64, m: usize) -> Vec<[f64; 3]> {
        // Box–Muller keeps this oracle free of any distribution crate.
        (0..m)
            .map(|_| {
                center.map(|c| {
                    let u1: f64 = rng.random_range(1e-12..1.0);
                    let u2: f64 = rng.random();
                    c + sigma * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
                })
            })
            .collect()
    }

    fn sample_cov(pts: &[[f64; 3]]) -> ([f64; 3], [[f64; 3]; 3]) {
        let m = pts.len() as f64;
        let mut mean = [0.0; 3];
        for p in pts {
            for d in 0..3 {
                mean[d] += p[d] / m;
            }
        }
        let mut cov = [[0.0; 3]; 3];
        for p in pts {
            for i in 0..3 {
                for j in 0..3 {
                    cov[i][j] += (p[i] - mean[i]) * (p[j] - mean[j]) / m;
                }
            }
        }
        (mean, cov)
    }

    /// Direct multivariate normal density with an explicit 3×3 inverse.
    fn gaussian_pdf(x: [f64; 3], mu: [f64; 3], s: [[f64; 3]; 3]) -> f64 {
        let det = s[0][0] * (s[1][1] * s[2][2] - s[1][2] * s[2][1]) - s[0][1] * (s[1][0] * s[2][2] - s[1][2] * s[2][0])
            + s[0][2] * (s[1][0] * s[2][1] - s[1][1] * s[2][0]);
        let mut inv = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let (a, b) = ((j + 1) % 3, (j + 2) % 3);
                let (c, d) = ((i + 1) % 3, (i + 2) % 3);
                inv[i][j] = (s[a][c] * s[b][d] - s[a][d] * s[b][c]) / det;
            }
        }
        let diff = [x[0] - mu[0], x[1] - mu[1], x[2] - mu[2]];
        let mut q = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                q += diff[i] * inv[i][j] * diff[j];
            }
        }
        (-0.5 * q).exp() / ((2.0 * std::f64::consts::PI).powi(3) * det).sqrt()
    }

    fn model(weights: Vec<f64>, means: Vec<[f64; 3]>, covs: Vec<Mat3<f64>>) -> GmmModel<f64> {
        GmmModel {
            class_name: ObjectClass::Cyclist,
            n: weights.len(),
            weights,
            means,
            covariances: covs,
            log_likelihood: 0.0,
            iterations_run: 0,
            log_likelihood_history: vec![],
            seed: 0,
        }
    }

    #[test]
    fn single_component_responsibility_is_one() {
        let m = model(vec![1.0], vec![[1.0; 3]], vec![Mat3::identity()]);
        assert_eq!(gmm_responsibilities(&m, &samples(&[[3.0, 2.0, 1.0]])[0]).unwrap(), vec![1.0]);
    }

    #[test]
    fn identical_components_split_evenly() {
        let m = model(vec![0.5, 0.5], vec![[1.0; 3]; 2], vec![Mat3::identity(); 2]);
        let g = gmm_responsibilities(&m, &samples(&[[0.3, 2.0, 1.0]])[0]).unwrap();
        assert_eq!(g, vec![0.5, 0.5]);
    }

    #[test]
    fn responsibility_matches_direct_pdf() {
        let s0 = Mat3::from_rows([[0.04, 0.01, 0.0], [0.01, 0.09, 0.0], [0.0, 0.0, 0.02]]);
        let s1 = Mat3::from_rows([[0.05, 0.0, 0.0], [0.0, 0.05, 0.01], [0.0, 0.01, 0.05]]);
        let mu0 = [1.0, 1.7, 0.6];
        let mu1 = [1.6, 1.8, 0.7];
        let m = model(vec![0.3, 0.7], vec![mu0, mu1], vec![s0, s1]);
        for x in [mu0, [1.2, 1.75, 0.62], [1.5, 1.7, 0.7]] {
            let g = gmm_responsibilities(&m, &samples(&[x])[0]).unwrap();
            let p0 = 0.3 * gaussian_pdf(x, mu0, s0.m);
            let p1 = 0.7 * gaussian_pdf(x, mu1, s1.m);
            assert!((g[0] - p0 / (p0 + p1)).abs() < 1e-10, "{} vs {}", g[0], p0 / (p0 + p1));
            assert!((g[0] + g[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn far_sample_is_a_numeric_error() {
        let tiny = Mat3::identity().scale(1e-6);
        let m = model(vec![1.0], vec![[1.0; 3]], vec![tiny]);
        let err = gmm_responsibilities(&m, &samples(&[[300.0, 300.0, 300.0]])[0]).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
        assert!(err.to_string().contains("300"));
    }

    #[test]
    fn m_step_single_component_is_sample_moments() {
        let pts = [[1.0, 2.0, 3.0], [1.5, 1.0, 2.0], [0.5, 2.5, 2.5], [2.0, 1.5, 3.5]];
        let resp = vec![vec![1.0]; 4];
        let up = gmm_m_step(&samples(&pts), &resp, 1e-6).unwrap();
        let (mean, cov) = sample_cov(&pts);
        assert_eq!(up.weights, vec![1.0]);
        for d in 0..3 {
            assert!((up.means[0][d] - mean[d]).abs() < 1e-12);
            for e in 0..3 {
                assert!((up.covariances[0].m[d][e] - cov[d][e]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn m_step_hard_assignments_give_group_means() {
        let pts = [[1.0, 1.0, 1.0], [2.0, 1.0, 1.0], [5.0, 5.0, 5.0], [7.0, 5.0, 6.0]];
        let resp = vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0]];
        let up = gmm_m_step(&samples(&pts), &resp, 1e-6).unwrap();
        assert_eq!(up.means, vec![[1.5, 1.0, 1.0], [6.0, 5.0, 5.5]]);
        assert_eq!(up.weights, vec![0.5, 0.5]);
    }

    #[test]
    fn m_step_matches_weighted_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let pts: Vec<[f64; 3]> = (0..8).map(|_| [rng.random_range(0.5..2.0), rng.random_range(1.0..2.0), rng.random_range(0.3..1.0)]).collect();
        let resp: Vec<Vec<f64>> = (0..8)
            .map(|_| {
                let a: f64 = rng.random_range(0.01..1.0);
                let b: f64 = rng.random_range(0.01..1.0);
                let c: f64 = rng.random_range(0.01..1.0);
                vec![a / (a + b + c), b / (a + b + c), c / (a + b + c)]
            })
            .collect();
        let up = gmm_m_step(&samples(&pts), &resp, 1e-12).unwrap();
        for j in 0..3 {
            let w: Vec<f64> = resp.iter().map(|r| r[j]).collect();
            let nk: f64 = w.iter().sum();
            let mu: Vec<f64> = (0..3).map(|d| pts.iter().zip(&w).map(|(p, wi)| wi * p[d]).sum::<f64>() / nk).collect();
            assert!((up.weights[j] - nk / 8.0).abs() < 1e-10);
            for d in 0..3 {
                assert!((up.means[j][d] - mu[d]).abs() < 1e-10);
                for e in 0..3 {
                    let c: f64 = pts.iter().zip(&w).map(|(p, wi)| wi * (p[d] - mu[d]) * (p[e] - mu[e])).sum::<f64>() / nk;
                    assert!((up.covariances[j].m[d][e] - c).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn m_step_degenerate_component() {
        let pts = [[1.0; 3], [2.0; 3]];
        let resp = vec![vec![1.0, 0.0], vec![1.0, 0.0]];
        let err = gmm_m_step(&samples(&pts), &resp, 1e-6).unwrap_err();
        assert!(matches!(err, Error::DegenerateComponent { component: 1, .. }));
    }

    #[test]
    fn single_component_fit_is_immediate_fixed_point() {
        let pts = [[1.0, 2.0, 3.0], [1.5, 1.0, 2.0], [0.5, 2.5, 2.5], [2.0, 1.5, 3.5], [1.1, 1.9, 2.9]];
        let g = gmm_fit(&samples(&pts), 1, &ClusterConfig::default()).unwrap();
        assert_eq!(g.iterations_run, 1);
        let (mean, cov) = sample_cov(&pts);
        assert_eq!(g.weights, vec![1.0]);
        for d in 0..3 {
            assert!((g.means[0][d] - mean[d]).abs() < 1e-12);
            for e in 0..3 {
                assert!((g.covariances[0].m[d][e] - cov[d][e]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn recovers_two_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = blob(&mut rng, [1.0, 1.0, 1.0], 0.05, 30);
        let b = blob(&mut rng, [4.0, 4.0, 4.0], 0.05, 30);
        let pts: Vec<[f64; 3]> = a.iter().chain(&b).copied().collect();
        let g = gmm_fit(&samples(&pts), 2, &ClusterConfig::default()).unwrap();
        let (ma, _) = sample_cov(&a);
        let (mb, _) = sample_cov(&b);
        let mut means = g.means.clone();
        means.sort_by(|x, y| x[0].partial_cmp(&y[0]).unwrap());
        for d in 0..3 {
            assert!((means[0][d] - ma[d]).abs() < 0.1);
            assert!((means[1][d] - mb[d]).abs() < 0.1);
        }
        assert!((g.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_is_deterministic_and_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pts: Vec<[f64; 3]> = (0..120).map(|_| [rng.random_range(0.5..2.0), rng.random_range(1.0..2.0), rng.random_range(0.3..1.0)]).collect();
        let cfg = ClusterConfig { seed: 5, ..Default::default() };
        let g1 = gmm_fit(&samples(&pts), 3, &cfg).unwrap();
        let g2 = gmm_fit(&samples(&pts), 3, &cfg).unwrap();
        assert_eq!(g1, g2);
        for w in g1.log_likelihood_history.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs());
        }
        for c in &g1.covariances {
            assert!(c.is_symmetric(0.0));
            assert!(c.symmetric_eigen().0[0] >= 1e-6 * (1.0 - 1e-9));
        }
    }
}
