//! Diagonal-covariance Gaussian mixtures: k-means initialization, EM
//! fitting, log-density scoring and ancestral sampling.
//!
//! A [`DiagGmm`] serves both as an enrolled speaker model and as the
//! universal background model. All densities are handled in the log domain;
//! responsibilities are normalized with log-sum-exp so no probability ever
//! underflows to zero on the way to a log.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::binio::{Reader, Writer};
use crate::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone)]
pub struct DiagGmm {
    weights: Array1<f64>,
    means: Array2<f64>,
    variances: Array2<f64>,
    // Derived: ln w_m - 0.5 (D ln 2pi + sum_d ln var_md), and 1 / var.
    log_norm: Array1<f64>,
    precisions: Array2<f64>,
}

impl PartialEq for DiagGmm {
    fn eq(&self, other: &Self) -> bool {
        self.weights == other.weights
            && self.means == other.means
            && self.variances == other.variances
    }
}

impl DiagGmm {
    pub fn new(weights: Array1<f64>, means: Array2<f64>, variances: Array2<f64>) -> Result<Self> {
        let m = weights.len();
        if m == 0 {
            return Err(Error::invalid("mixture needs at least one component"));
        }
        if means.nrows() != m || variances.dim() != means.dim() || means.ncols() == 0 {
            return Err(Error::invalid(format!(
                "inconsistent shapes: {m} weights, means {:?}, variances {:?}",
                means.dim(),
                variances.dim()
            )));
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid(
                "mixture weights must be finite and non-negative",
            ));
        }
        let total = weights.sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("mixture weights sum to {total}")));
        }
        if variances.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid("variances must be finite and positive"));
        }
        if means.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("means must be finite"));
        }
        let d = means.ncols() as f64;
        let log_norm = Array1::from_iter(weights.iter().zip(variances.rows()).map(|(&w, var)| {
            w.ln() - 0.5 * (d * LN_2PI + var.iter().map(|v| v.ln()).sum::<f64>())
        }));
        let precisions = variances.mapv(|v| 1.0 / v);
        Ok(DiagGmm {
            weights,
            means,
            variances,
            log_norm,
            precisions,
        })
    }

    pub fn num_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    pub fn weights(&self) -> ArrayView1<'_, f64> {
        self.weights.view()
    }

    pub fn means(&self) -> ArrayView2<'_, f64> {
        self.means.view()
    }

    pub fn variances(&self) -> ArrayView2<'_, f64> {
        self.variances.view()
    }

    /// Per-component joint log-densities `ln w_m + ln N(x; mu_m, var_m)`.
    fn component_log_densities(&self, x: ArrayView1<'_, f64>, out: &mut [f64]) {
        for (m, slot) in out.iter_mut().enumerate() {
            let mu = self.means.row(m);
            let prec = self.precisions.row(m);
            let mut q = 0.0;
            for d in 0..x.len() {
                let diff = x[d] - mu[d];
                q += diff * diff * prec[d];
            }
            *slot = self.log_norm[m] - 0.5 * q;
        }
    }

    /// `log p(x)` for one feature vector.
    pub fn log_density(&self, x: ArrayView1<'_, f64>) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::invalid(format!(
                "vector of dimension {} scored against a {}-dimensional model",
                x.len(),
                self.dim()
            )));
        }
        let mut buf = vec![0.0; self.num_components()];
        self.component_log_densities(x, &mut buf);
        Ok(log_sum_exp(&buf))
    }

    /// Average per-frame log-likelihood of an utterance.
    pub fn mean_log_likelihood(&self, frames: ArrayView2<'_, f64>) -> Result<f64> {
        if frames.nrows() == 0 {
            return Err(Error::invalid("cannot score an empty feature set"));
        }
        if frames.ncols() != self.dim() {
            return Err(Error::invalid(format!(
                "features of dimension {} scored against a {}-dimensional model",
                frames.ncols(),
                self.dim()
            )));
        }
        let mut buf = vec![0.0; self.num_components()];
        let total: f64 = frames
            .rows()
            .into_iter()
            .map(|x| {
                self.component_log_densities(x, &mut buf);
                log_sum_exp(&buf)
            })
            .sum();
        Ok(total / frames.nrows() as f64)
    }

    /// Draws `count` vectors: a component from the weights, then a point
    /// from that component's Gaussian.
    pub fn sample(&self, count: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pick = WeightedIndex::new(self.weights.iter().copied())
            .expect("weights validated at construction");
        let std = self.variances.mapv(f64::sqrt);
        let mut out = Array2::zeros((count, self.dim()));
        for mut row in out.rows_mut() {
            let m = pick.sample(&mut rng);
            for d in 0..self.dim() {
                let z: f64 = StandardNormal.sample(&mut rng);
                row[d] = self.means[[m, d]] + std[[m, d]] * z;
            }
        }
        out
    }

    /// Model file: magic `OSIDGMM1`, M and D (u32 LE), then weights, means
    /// and variances as row-major f64 LE.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(GMM_MAGIC);
        w.u32(self.num_components() as u32);
        w.u32(self.dim() as u32);
        w.f64s(self.weights.iter());
        w.f64s(self.means.iter());
        w.f64s(self.variances.iter());
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, GMM_MAGIC)?;
        let m = r.u32()? as usize;
        let d = r.u32()? as usize;
        let weights = Array1::from(r.f64s(m)?);
        let means = Array2::from_shape_vec((m, d), r.f64s(m * d)?)
            .map_err(|e| Error::Format(e.to_string()))?;
        let variances = Array2::from_shape_vec((m, d), r.f64s(m * d)?)
            .map_err(|e| Error::Format(e.to_string()))?;
        r.finish()?;
        DiagGmm::new(weights, means, variances).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_bytes()).map_err(|e| Error::from(e).at(path.as_ref()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::from(e).at(path))?;
        Self::from_bytes(&bytes).map_err(|e| e.at(path))
    }
}

const GMM_MAGIC: &[u8; 8] = b"OSIDGMM1";

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Log density of a standard Gaussian evaluated at its mean, per dimension.
pub fn gaussian_peak_log_density(dim: usize) -> f64 {
    -0.5 * dim as f64 * (2.0 * PI).ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmConfig {
    pub max_iterations: usize,
    /// Stop once the relative gain in mean log-likelihood drops below this.
    pub rel_tol: f64,
    pub variance_floor: f64,
    pub kmeans_iterations: usize,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            max_iterations: 100,
            rel_tol: 1e-5,
            variance_floor: 1e-4,
            kmeans_iterations: 20,
            seed: 0,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::invalid("EM needs at least one iteration"));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::invalid("EM relative tolerance must be positive"));
        }
        if !(self.variance_floor > 0.0) {
            return Err(Error::invalid("variance floor must be positive"));
        }
        Ok(())
    }
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: ArrayView1<'_, f64>, centroids: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.rows().into_iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// Lloyd's k-means from `clusters` distinct, randomly chosen data points.
///
/// A cluster that loses all its points is re-seeded at the point lying
/// farthest from its current centroid. Returns the centroids and the final
/// nearest-centroid assignment of every row.
pub fn kmeans_init(
    data: ArrayView2<'_, f64>,
    clusters: usize,
    iterations: usize,
    seed: u64,
) -> Result<(Array2<f64>, Vec<usize>)> {
    let n = data.nrows();
    if clusters == 0 {
        return Err(Error::invalid("k-means needs at least one cluster"));
    }
    if n < clusters {
        return Err(Error::invalid(format!(
            "{n} points cannot seed {clusters} clusters"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, n, clusters);
    let mut centroids = Array2::zeros((clusters, data.ncols()));
    for (k, i) in picks.iter().enumerate() {
        centroids.row_mut(k).assign(&data.row(i));
    }

    let mut assign = vec![usize::MAX; n];
    let mut dist = vec![0.0; n];
    for _ in 0..iterations {
        let mut changed = false;
        for (i, x) in data.rows().into_iter().enumerate() {
            let (k, d) = nearest(x, &centroids);
            changed |= assign[i] != k;
            assign[i] = k;
            dist[i] = d;
        }
        if !changed {
            break;
        }
        let mut sums = Array2::<f64>::zeros(centroids.dim());
        let mut counts = vec![0usize; clusters];
        for (i, x) in data.rows().into_iter().enumerate() {
            sums.row_mut(assign[i]).scaled_add(1.0, &x);
            counts[assign[i]] += 1;
        }
        let mut taken = vec![false; n];
        for k in 0..clusters {
            if counts[k] > 0 {
                let mean = &sums.row(k) / counts[k] as f64;
                centroids.row_mut(k).assign(&mean);
            } else {
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
                    .expect("n >= clusters");
                taken[far] = true;
                dist[far] = 0.0;
                centroids.row_mut(k).assign(&data.row(far));
            }
        }
    }
    for (i, x) in data.rows().into_iter().enumerate() {
        assign[i] = nearest(x, &centroids).0;
    }
    Ok((centroids, assign))
}

/// Output of [`em_fit_traced`].
#[derive(Debug, Clone)]
pub struct EmReport {
    pub model: DiagGmm,
    /// Mean log-likelihood of the data under the initial model and after
    /// every M-step; the last entry belongs to `model`.
    pub trace: Vec<f64>,
    pub converged: bool,
}

/// Fits a diagonal GMM with EM from a k-means start.
pub fn em_fit(data: ArrayView2<'_, f64>, components: usize, cfg: &EmConfig) -> Result<DiagGmm> {
    em_fit_traced(data, components, cfg).map(|r| r.model)
}

pub fn em_fit_traced(
    data: ArrayView2<'_, f64>,
    components: usize,
    cfg: &EmConfig,
) -> Result<EmReport> {
    cfg.validate()?;
    if data.ncols() == 0 {
        return Err(Error::invalid("data has zero dimensions"));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("training data contains non-finite values"));
    }
    let (centroids, assign) = kmeans_init(data, components, cfg.kmeans_iterations, cfg.seed)?;
    let mut model = initial_model(data, centroids, &assign, cfg.variance_floor)?;

    let mut trace = Vec::with_capacity(cfg.max_iterations + 1);
    let mut converged = false;
    for iteration in 0..=cfg.max_iterations {
        let stats = expectation(&model, data);
        let ll = stats.log_likelihood / data.nrows() as f64;
        if let Some(&prev) = trace.last() {
            let gain: f64 = (ll - prev) / f64::abs(prev).max(f64::MIN_POSITIVE);
            trace.push(ll);
            if gain < cfg.rel_tol {
                converged = true;
                break;
            }
        } else {
            trace.push(ll);
        }
        if iteration == cfg.max_iterations {
            break;
        }
        model = maximization(&model, &stats, data.nrows(), cfg.variance_floor)?;
    }
    Ok(EmReport {
        model,
        trace,
        converged,
    })
}

fn initial_model(
    data: ArrayView2<'_, f64>,
    centroids: Array2<f64>,
    assign: &[usize],
    floor: f64,
) -> Result<DiagGmm> {
    let (m, d) = centroids.dim();
    let n = data.nrows() as f64;
    let mut counts = vec![0usize; m];
    let mut var = Array2::<f64>::zeros((m, d));
    for (x, &k) in data.rows().into_iter().zip(assign) {
        counts[k] += 1;
        let diff = &x - &centroids.row(k);
        var.row_mut(k).scaled_add(1.0, &(&diff * &diff));
    }
    let global = data.var_axis(Axis(0), 0.0);
    for k in 0..m {
        if counts[k] > 0 {
            var.row_mut(k).mapv_inplace(|v| v / counts[k] as f64);
        } else {
            var.row_mut(k).assign(&global);
        }
    }
    var.mapv_inplace(|v| v.max(floor));
    let weights = Array1::from_iter(counts.iter().map(|&c| c as f64 / n));
    DiagGmm::new(weights, centroids, var)
}

struct SufficientStats {
    occupancy: Array1<f64>,
    first: Array2<f64>,
    second: Array2<f64>,
    log_likelihood: f64,
}

fn expectation(model: &DiagGmm, data: ArrayView2<'_, f64>) -> SufficientStats {
    let (m, d) = (model.num_components(), model.dim());
    let mut stats = SufficientStats {
        occupancy: Array1::zeros(m),
        first: Array2::zeros((m, d)),
        second: Array2::zeros((m, d)),
        log_likelihood: 0.0,
    };
    let mut buf = vec![0.0; m];
    for x in data.rows() {
        model.component_log_densities(x, &mut buf);
        let total = log_sum_exp(&buf);
        stats.log_likelihood += total;
        for k in 0..m {
            let gamma = (buf[k] - total).exp();
            if gamma == 0.0 {
                continue;
            }
            stats.occupancy[k] += gamma;
            let mut first = stats.first.row_mut(k);
            let mut second = stats.second.row_mut(k);
            for j in 0..d {
                first[j] += gamma * x[j];
                second[j] += gamma * x[j] * x[j];
            }
        }
    }
    stats
}

fn maximization(prev: &DiagGmm, stats: &SufficientStats, n: usize, floor: f64) -> Result<DiagGmm> {
    let (m, d) = (prev.num_components(), prev.dim());
    let mut means = prev.means.clone();
    let mut vars = prev.variances.clone();
    let total: f64 = stats.occupancy.sum();
    for k in 0..m {
        let occ = stats.occupancy[k];
        // A component with no responsibility keeps its shape at zero weight.
        if occ <= f64::MIN_POSITIVE * n as f64 {
            continue;
        }
        for j in 0..d {
            let mu = stats.first[[k, j]] / occ;
            means[[k, j]] = mu;
            vars[[k, j]] = (stats.second[[k, j]] / occ - mu * mu).max(floor);
        }
    }
    let weights = stats.occupancy.mapv(|o| o / total);
    DiagGmm::new(weights, means, vars)
}
