//! Per-edge Gaussian process forecasting of affinities.
//!
//! Each edge's averaged affinity series gets its own GP with a constant
//! mean (the series mean, or zero) and an RBF kernel `σ_f² exp(−(t − t')² / 2ℓ²)`. Only the length-scale is fitted,
//! by maximising the log marginal likelihood. Joint posterior draws over the
//! forecast horizon are assembled into affinity matrices and clustered once
//! per draw.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dominant_set::{cluster, DsConfig};
use crate::error::{Error, Result};
use crate::eval::{group_f1, mean_std, GroupMatchConfig};
use crate::scene::{AffinityMatrix, GroupPartition, PersonId};

/// Averaged affinity of one unordered pair over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSeries {
    pub edge: (PersonId, PersonId),
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl EdgeSeries {
    pub fn new(a: PersonId, b: PersonId, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if a == b {
            return Err(Error::invariant("edge", "a person cannot pair with itself"));
        }
        if times.len() != values.len() {
            return Err(Error::Shape(format!("{} times, {} values", times.len(), values.len())));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invariant("times", "must be strictly increasing"));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invariant("values", format!("{v} not in [0, 1]")));
        }
        Ok(Self {
            edge: (a.min(b), a.max(b)),
            times,
            values,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GprConfig {
    pub signal_variance: f64,
    pub noise_variance: f64,
    pub length_scale_bounds: (f64, f64),
    /// Log-spaced grid used to seed the gradient ascent.
    pub grid_points: usize,
    /// Use the series mean as the prior mean instead of zero.
    pub center_targets: bool,
}

impl Default for GprConfig {
    fn default() -> Self {
        Self {
            signal_variance: 1.0,
            noise_variance: 1e-4,
            length_scale_bounds: (0.1, 100.0),
            grid_points: 64,
            center_targets: true,
        }
    }
}

pub fn rbf(a: f64, b: f64, length_scale: f64, signal_variance: f64) -> f64 {
    let d = (a - b) / length_scale;
    signal_variance * (-0.5 * d * d).exp()
}

fn kernel_matrix(a: &[f64], b: &[f64], length_scale: f64, signal_variance: f64) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| rbf(a[i], b[j], length_scale, signal_variance))
}

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-6;

/// Cholesky factor, retrying with diagonal jitter 1e-10, 1e-9, …, 1e-6.
fn cholesky_with_jitter(m: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let mut jitter = JITTER_START;
    loop {
        let mut j = m.clone();
        for k in 0..j.nrows() {
            j[(k, k)] += jitter;
        }
        if let Some(c) = Cholesky::new(j) {
            return Ok(c);
        }
        if jitter >= JITTER_MAX {
            return Err(Error::NotPositiveDefinite { jitter });
        }
        jitter *= 10.0;
    }
}

/// Log marginal likelihood and its derivative with respect to `ln ℓ`.
pub fn log_marginal_likelihood(
    times: &[f64],
    targets: &[f64],
    length_scale: f64,
    signal_variance: f64,
    noise_variance: f64,
) -> Result<(f64, f64)> {
    let n = times.len();
    let mut k = kernel_matrix(times, times, length_scale, signal_variance);
    for i in 0..n {
        k[(i, i)] += noise_variance;
    }
    let chol = cholesky_with_jitter(k)?;
    let y = DVector::from_column_slice(targets);
    let alpha = chol.solve(&y);
    let l = chol.l_dirty();
    let log_det: f64 = (0..n).map(|i| l[(i, i)].ln()).sum();
    let lml = -0.5 * y.dot(&alpha) - log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

    // ½ tr((ααᵀ − K⁻¹) ∂K/∂lnℓ), with ∂K/∂lnℓ = K_rbf ⊙ (Δt/ℓ)²
    let k_inv = chol.inverse();
    let mut grad = 0.0;
    for i in 0..n {
        for j in 0..n {
            let d = (times[i] - times[j]) / length_scale;
            let dk = rbf(times[i], times[j], length_scale, signal_variance) * d * d;
            grad += (alpha[i] * alpha[j] - k_inv[(i, j)]) * dk;
        }
    }
    Ok((lml, 0.5 * grad))
}

#[derive(Debug, Clone)]
pub struct GprModel {
    pub length_scale: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
    pub log_likelihood: f64,
    /// Constant prior mean.
    pub offset: f64,
    times: Vec<f64>,
    targets: Vec<f64>,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

impl GprModel {
    /// Conditions the GP on the series with a fixed length-scale.
    pub fn with_length_scale(times: &[f64], targets: &[f64], length_scale: f64, cfg: &GprConfig) -> Result<Self> {
        let n = times.len();
        let offset = prior_mean(targets, cfg);
        let centered: Vec<f64> = targets.iter().map(|y| y - offset).collect();
        let mut k = kernel_matrix(times, times, length_scale, cfg.signal_variance);
        for i in 0..n {
            k[(i, i)] += cfg.noise_variance;
        }
        let chol = cholesky_with_jitter(k)?;
        let alpha = chol.solve(&DVector::from_column_slice(&centered));
        let (lml, _) =
            log_marginal_likelihood(times, &centered, length_scale, cfg.signal_variance, cfg.noise_variance)?;
        Ok(Self {
            length_scale,
            signal_variance: cfg.signal_variance,
            noise_variance: cfg.noise_variance,
            log_likelihood: lml,
            offset,
            times: times.to_vec(),
            targets: targets.to_vec(),
            chol,
            alpha,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Posterior mean and covariance of the latent function at `query`.
    pub fn posterior(&self, query: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let k_star = kernel_matrix(&self.times, query, self.length_scale, self.signal_variance);
        let mean = (k_star.transpose() * &self.alpha).add_scalar(self.offset);
        let v = self
            .chol
            .l_dirty()
            .lower_triangle()
            .solve_lower_triangular(&k_star)
            .expect("cholesky factor has a positive diagonal");
        let cov = kernel_matrix(query, query, self.length_scale, self.signal_variance) - v.transpose() * v;
        (mean, cov)
    }

    /// `n_samples × query.len()` joint draws, not clamped.
    pub fn sample_unclamped(&self, query: &[f64], n_samples: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
        let (mean, cov) = self.posterior(query);
        let cov = (&cov + cov.transpose()) * 0.5;
        let l = cholesky_with_jitter(cov)?.unpack();
        let z_len = query.len();
        Ok((0..n_samples)
            .map(|_| {
                let z = DVector::from_fn(z_len, |_, _| StandardNormal.sample(rng));
                (&mean + &l * z).iter().copied().collect()
            })
            .collect())
    }
}

fn prior_mean(targets: &[f64], cfg: &GprConfig) -> f64 {
    if cfg.center_targets && !targets.is_empty() {
        targets.iter().sum::<f64>() / targets.len() as f64
    } else {
        0.0
    }
}

/// Fits the length-scale by multi-start gradient ascent on the log
/// marginal likelihood, in `ln ℓ`, from every local maximum of a
/// log-spaced grid.
pub fn fit_edge_gpr(series: &EdgeSeries, cfg: &GprConfig) -> Result<GprModel> {
    let n = series.times.len();
    if n < 2 {
        return Err(Error::Degenerate(format!(
            "edge {:?} has {n} observations, need 2",
            series.edge
        )));
    }
    let (lo, hi) = cfg.length_scale_bounds;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::invariant("length_scale_bounds", "need 0 < lower < upper"));
    }
    let (ln_lo, ln_hi) = (lo.ln(), hi.ln());
    let offset = prior_mean(&series.values, cfg);
    let centered: Vec<f64> = series.values.iter().map(|y| y - offset).collect();
    let eval = |theta: f64| {
        log_marginal_likelihood(
            &series.times,
            &centered,
            theta.exp(),
            cfg.signal_variance,
            cfg.noise_variance,
        )
        .unwrap_or((f64::NEG_INFINITY, 0.0))
    };

    let g = cfg.grid_points.max(2);
    let grid: Vec<f64> = (0..g)
        .map(|k| ln_lo + (ln_hi - ln_lo) * k as f64 / (g - 1) as f64)
        .collect();
    let values: Vec<f64> = grid.iter().map(|&t| eval(t).0).collect();
    let finite = values.iter().copied().filter(|v| v.is_finite());
    let (vmin, vmax) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !vmax.is_finite() {
        return Err(Error::Degenerate(format!(
            "edge {:?}: likelihood undefined over the bounds",
            series.edge
        )));
    }
    if vmax - vmin <= 1e-12 {
        return GprModel::with_length_scale(&series.times, &series.values, lo, cfg);
    }

    let mut best = (f64::NEG_INFINITY, ln_lo);
    for k in 0..g {
        let left = if k > 0 { values[k - 1] } else { f64::NEG_INFINITY };
        let right = if k + 1 < g { values[k + 1] } else { f64::NEG_INFINITY };
        if values[k] < left || values[k] < right {
            continue;
        }
        let (mut theta, (mut val, mut grad)) = (grid[k], eval(grid[k]));
        let mut step = 0.1 * (ln_hi - ln_lo) / (g - 1) as f64;
        for _ in 0..200 {
            if grad == 0.0 {
                break;
            }
            let cand = (theta + step * grad.signum()).clamp(ln_lo, ln_hi);
            let (cv, cg) = eval(cand);
            if cv > val {
                theta = cand;
                val = cv;
                grad = cg;
                step *= 1.5;
            } else {
                step *= 0.5;
                if step < 1e-10 {
                    break;
                }
            }
        }
        if val > best.0 {
            best = (val, theta);
        }
    }
    GprModel::with_length_scale(&series.times, &series.values, best.1.exp(), cfg)
}

/// Clamped joint posterior draws: `n_samples` rows of `query.len()` values.
pub fn sample_posterior(model: &GprModel, query: &[f64], n_samples: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n_samples == 0 {
        return Err(Error::invariant("n_samples", "must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = model.sample_unclamped(query, n_samples, &mut rng)?;
    draws.iter_mut().flatten().for_each(|v| *v = v.clamp(0.0, 1.0));
    Ok(draws)
}

/// Sub-seed for one edge: independent of the order edges are processed in.
pub fn edge_seed(seed: u64, edge: (PersonId, PersonId)) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((edge.0 as u64) << 32) | edge.1 as u64);
    rand::Rng::random(&mut rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForecastConfig {
    pub horizon: usize,
    pub n_samples: usize,
    pub gpr: GprConfig,
    pub ds: DsConfig,
    pub seed: u64,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            horizon: 10,
            n_samples: 50,
            gpr: GprConfig::default(),
            ds: DsConfig::default(),
            seed: 0,
        }
    }
}

/// Partitions at one horizon step; step 0 is detection on the last
/// observed matrix and holds a single partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonForecast {
    pub horizon: usize,
    pub partitions: Vec<GroupPartition>,
}

fn assemble(person_ids: &[PersonId], series: &[EdgeSeries], value: impl Fn(usize) -> f64) -> Result<AffinityMatrix> {
    let index = |a: PersonId, b: PersonId| series.iter().position(|s| s.edge == (a.min(b), a.max(b)));
    let p = person_ids.len();
    let mut values = vec![0.0; p * p];
    for i in 0..p {
        for j in (i + 1)..p {
            let k = index(person_ids[i], person_ids[j]).ok_or_else(|| {
                Error::invariant("series", format!("missing edge ({}, {})", person_ids[i], person_ids[j]))
            })?;
            let v = value(k);
            values[i * p + j] = v;
            values[j * p + i] = v;
        }
    }
    AffinityMatrix::new(person_ids.to_vec(), values)
}

/// Forecast partitions for horizons `0..=cfg.horizon`, `n_samples` per step.
/// Query times are the last observed time plus `h` steps of `step`.
pub fn forecast_groups(
    person_ids: &[PersonId],
    series: &[EdgeSeries],
    step: f64,
    cfg: &ForecastConfig,
) -> Result<Vec<HorizonForecast>> {
    let last = assemble(person_ids, series, |k| {
        *series[k].values.last().expect("non-empty series")
    })?;
    let mut out = vec![HorizonForecast {
        horizon: 0,
        partitions: vec![cluster(&last, &cfg.ds)?],
    }];
    if cfg.horizon == 0 {
        return Ok(out);
    }
    // Only edges among the listed persons are needed.
    let needed: Vec<usize> = series
        .iter()
        .enumerate()
        .filter(|(_, s)| person_ids.contains(&s.edge.0) && person_ids.contains(&s.edge.1))
        .map(|(k, _)| k)
        .collect();
    let mut draws: Vec<Option<Vec<Vec<f64>>>> = vec![None; series.len()];
    for &k in &needed {
        let s = &series[k];
        let model = fit_edge_gpr(s, &cfg.gpr)?;
        let t_last = *s.times.last().expect("non-empty series");
        let query: Vec<f64> = (1..=cfg.horizon).map(|h| t_last + step * h as f64).collect();
        draws[k] = Some(sample_posterior(
            &model,
            &query,
            cfg.n_samples,
            edge_seed(cfg.seed, s.edge),
        )?);
    }
    for h in 1..=cfg.horizon {
        let partitions = (0..cfg.n_samples)
            .map(|s| {
                let m = assemble(person_ids, series, |k| draws[k].as_ref().expect("fitted")[s][h - 1])?;
                cluster(&m, &cfg.ds)
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(HorizonForecast { horizon: h, partitions });
    }
    Ok(out)
}

/// F1 statistics for one horizon over its sample partitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonScore {
    pub horizon: usize,
    pub mean_f1_thr23: f64,
    pub mean_f1_thr1: f64,
    pub std_f1_thr23: f64,
    pub std_f1_thr1: f64,
    pub n_samples: usize,
}

/// Scores each horizon's partitions against `gt[h]`.
pub fn score_forecast(forecast: &[HorizonForecast], gt: &[GroupPartition]) -> Result<Vec<HorizonScore>> {
    if gt.len() < forecast.len() {
        return Err(Error::Shape(format!(
            "{} ground-truth steps for {} horizons",
            gt.len(),
            forecast.len()
        )));
    }
    Ok(forecast
        .iter()
        .zip(gt)
        .map(|(f, g)| {
            let f23: Vec<f64> = f
                .partitions
                .iter()
                .map(|p| group_f1(p, g, GroupMatchConfig::TWO_THIRDS).f1)
                .collect();
            let f1: Vec<f64> = f
                .partitions
                .iter()
                .map(|p| group_f1(p, g, GroupMatchConfig::FULL).f1)
                .collect();
            let (m23, s23) = mean_std(&f23);
            let (m1, s1) = mean_std(&f1);
            HorizonScore {
                horizon: f.horizon,
                mean_f1_thr23: m23,
                mean_f1_thr1: m1,
                std_f1_thr23: s23,
                std_f1_thr1: s1,
                n_samples: f.partitions.len(),
            }
        })
        .collect())
}
