//! Synthetic aggregate data, cross-validation, and confidence bands.
//!
//! Aggregate outputs are produced the way the estimation problem assumes
//! they arise: many parameter draws from a true distribution, one simulated
//! output path per draw, averaged pointwise, plus measurement noise.
//! Leave-one-out cross-validation scores an estimated distribution by
//! simulating sampled-parameter paths on the held-out episode's input and
//! comparing their mean against the held-out measurement with the
//! normalized root-mean-square error. Bonferroni-corrected Student-t bands
//! quantify the spread of the sampled paths.

use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimator::{
    build_dictionary, estimate, AggregateDataset, RegularizationWeights, SolverOptions,
};
use crate::measures::{DiscreteMeasure, ParameterGrid, ParameterPoint};
use crate::pde_forward::{assemble, discretize, simulate, tau_consistent, Episode, TacSeries};
use crate::rng::{derive_seed, Rng};
use crate::sampler::{metropolis_sample, refine_density, McmcConfig};
use crate::special::{beta_cdf, student_t_upper_quantile};

/// Law of the random parameter pair used to generate synthetic data.
#[derive(Debug, Clone)]
pub enum TrueDistribution {
    /// q1 and q2 independent, each Beta(alpha, beta) on [0, 1].
    BetaProduct { alpha: f64, beta: f64 },
    /// Explicit grid measure; draws land exactly on grid nodes.
    Discrete(DiscreteMeasure),
}

impl TrueDistribution {
    fn validate(&self) -> Result<()> {
        match self {
            TrueDistribution::BetaProduct { alpha, beta } => {
                if !(alpha > &0.0 && beta > &0.0) || !alpha.is_finite() || !beta.is_finite() {
                    return Err(Error::Domain(format!(
                        "Beta parameters must be positive and finite, got ({alpha}, {beta})"
                    )));
                }
                Ok(())
            }
            TrueDistribution::Discrete(_) => Ok(()),
        }
    }

    /// Draws `count` parameter points, consuming the generator serially so
    /// the draw sequence is independent of any surrounding parallelism.
    pub fn sample_points(&self, count: usize, rng: &mut Rng) -> Result<Vec<ParameterPoint>> {
        self.validate()?;
        let mut points = Vec::with_capacity(count);
        match self {
            TrueDistribution::BetaProduct { alpha, beta } => {
                for _ in 0..count {
                    let q1 = rng.beta(*alpha, *beta);
                    let q2 = rng.beta(*alpha, *beta);
                    points.push(ParameterPoint::new(q1, q2)?);
                }
            }
            TrueDistribution::Discrete(measure) => {
                let weights = measure.weights();
                for _ in 0..count {
                    let u = rng.uniform();
                    let mut cum = 0.0;
                    let mut chosen = weights.len() - 1;
                    for (j, &w) in weights.iter().enumerate() {
                        cum += w;
                        if u < cum {
                            chosen = j;
                            break;
                        }
                    }
                    points.push(measure.grid().node(chosen));
                }
            }
        }
        Ok(points)
    }
}

/// Controls for [`simulate_aggregate`].
#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub true_dist: TrueDistribution,
    /// Number of sampled parameter paths averaged into each output.
    pub path_count: usize,
    /// Standard deviation of the additive Gaussian measurement noise.
    pub noise_std: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    fn validate(&self) -> Result<()> {
        self.true_dist.validate()?;
        if self.path_count == 0 {
            return Err(Error::Config("path count must be at least 1".into()));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(Error::Config(format!(
                "noise standard deviation {} must be finite and nonnegative",
                self.noise_std
            )));
        }
        Ok(())
    }
}

/// Simulates aggregate measured outputs for the given episode inputs.
///
/// Parameter draws come from one stream of the master seed; each episode's
/// noise comes from its own derived stream, so outputs do not depend on
/// episode evaluation order. Existing outputs on the input episodes are
/// ignored and replaced.
pub fn simulate_aggregate(
    episodes: &[Episode],
    cfg: &SyntheticConfig,
    n_intervals: usize,
) -> Result<AggregateDataset> {
    cfg.validate()?;
    if episodes.is_empty() {
        return Err(Error::Config("need at least one episode input".into()));
    }
    let tau = episodes[0].tau();
    for ep in episodes {
        if !tau_consistent(ep.tau(), tau) {
            return Err(Error::Config(format!(
                "episode {} has tau={} but the set uses tau={}",
                ep.id(),
                ep.tau(),
                tau
            )));
        }
    }

    let mut param_rng = Rng::new(derive_seed(cfg.seed, 0));
    let params = cfg.true_dist.sample_points(cfg.path_count, &mut param_rng)?;
    let systems = params
        .par_iter()
        .map(|q| discretize(&assemble(*q, n_intervals)?, tau))
        .collect::<Result<Vec<_>>>()?;

    let out_episodes = episodes
        .iter()
        .enumerate()
        .map(|(i, ep)| {
            let clean = Episode::new(ep.id(), tau, ep.input().to_vec(), None)?;
            let paths = systems
                .par_iter()
                .map(|sys| simulate(sys, &clean).map(|t| t.values().to_vec()))
                .collect::<Result<Vec<_>>>()?;
            let mut mean = vec![0.0; ep.len()];
            for path in &paths {
                for (m, v) in mean.iter_mut().zip(path) {
                    *m += v;
                }
            }
            let s = cfg.path_count as f64;
            for m in &mut mean {
                *m /= s;
            }
            if cfg.noise_std > 0.0 {
                let mut noise = Rng::new(derive_seed(cfg.seed, (i + 1) as u64));
                for m in &mut mean {
                    *m += cfg.noise_std * noise.gaussian();
                }
            }
            clean.with_output(mean)
        })
        .collect::<Result<Vec<_>>>()?;
    AggregateDataset::new(out_episodes)
}

/// Single-peak input profile: linear rise into an exponential tail,
/// u(t) = peak_value · (t/peak_time) · exp(1 − t/peak_time), sampled at
/// multiples of `tau`. The value is `peak_value` at `peak_time` and decays
/// toward zero afterwards.
pub fn single_peak_input(
    n_steps: usize,
    tau: f64,
    peak_time: f64,
    peak_value: f64,
) -> Result<Vec<f64>> {
    if n_steps == 0 {
        return Err(Error::Config("input needs at least one step".into()));
    }
    if !(tau > 0.0) || !(peak_time > 0.0) || !(peak_value > 0.0) {
        return Err(Error::Config(format!(
            "tau ({tau}), peak time ({peak_time}) and peak value ({peak_value}) must be positive"
        )));
    }
    Ok((0..n_steps)
        .map(|k| {
            let t = k as f64 * tau;
            peak_value * (t / peak_time) * (1.0 - t / peak_time).exp()
        })
        .collect())
}

/// Grid measure with node-centered cell masses of a product Beta law.
///
/// Cell masses are CDF increments over node-centered cells clipped to the
/// domain, renormalized so they sum to 1 (a truncation when the domain does
/// not cover the full Beta support).
pub fn discretize_beta_product(
    grid: &ParameterGrid,
    alpha: f64,
    beta: f64,
) -> Result<DiscreteMeasure> {
    TrueDistribution::BetaProduct { alpha, beta }.validate()?;
    let axis = |coords: &[f64], lo: f64, hi: f64| -> Result<Vec<f64>> {
        let n = coords.len();
        (0..n)
            .map(|i| {
                let left = if i == 0 { lo } else { (coords[i - 1] + coords[i]) / 2.0 };
                let right = if i == n - 1 { hi } else { (coords[i] + coords[i + 1]) / 2.0 };
                Ok(beta_cdf(alpha, beta, right)? - beta_cdf(alpha, beta, left)?)
            })
            .collect()
    };
    let d = grid.domain();
    let m1 = axis(grid.q1_coords(), d.q1_min(), d.q1_max())?;
    let m2 = axis(grid.q2_coords(), d.q2_min(), d.q2_max())?;
    let mut weights = Vec::with_capacity(grid.len());
    for a in &m1 {
        for b in &m2 {
            weights.push(a * b);
        }
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::Domain(
            "the Beta law puts no mass on the grid domain".into(),
        ));
    }
    for w in &mut weights {
        *w /= total;
    }
    DiscreteMeasure::new(grid.clone(), weights)
}

/// Normalized root-mean-square error between a measured and an estimated
/// series: RMSE divided by the measured range.
pub fn nrmse(measured: &TacSeries, estimated: &TacSeries) -> Result<f64> {
    if measured.len() != estimated.len() {
        return Err(Error::Config(format!(
            "series lengths differ: {} vs {}",
            measured.len(),
            estimated.len()
        )));
    }
    if !tau_consistent(measured.tau(), estimated.tau()) {
        return Err(Error::Config(format!(
            "series sample intervals differ: {} vs {}",
            measured.tau(),
            estimated.tau()
        )));
    }
    let lo = measured.values().iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = measured.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if range <= 0.0 {
        return Err(Error::Domain(
            "measured series is flat; NRMSE is undefined".into(),
        ));
    }
    let n = measured.len() as f64;
    let mse: f64 = measured
        .values()
        .iter()
        .zip(estimated.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    Ok(mse.sqrt() / range)
}

/// One leave-one-out fold's outcome.
#[derive(Debug, Clone)]
pub struct FoldResult {
    pub fold: usize,
    pub episode_id: String,
    /// Held-out prediction error; absent when the fold's estimate did not
    /// converge.
    pub nrmse: Option<f64>,
    pub seconds: f64,
    pub converged: bool,
}

/// Cross-validation summary with the configuration it was run under.
#[derive(Debug, Clone)]
pub struct LoocvReport {
    pub folds: Vec<FoldResult>,
    /// Mean NRMSE over converged folds; absent when no fold converged.
    pub nrmse_mean: Option<f64>,
    pub node_count: usize,
    pub n_intervals: usize,
    pub w1: f64,
    pub w2: f64,
    pub sample_count: usize,
    pub seed: u64,
}

/// Refinement factor applied to estimated measures before sampling inside
/// cross-validation.
const LOOCV_REFINE_FACTOR: usize = 4;
/// Post-burn-in chain states per retained sample. The stride must exceed a
/// few times the reciprocal acceptance rate so retained draws are close to
/// independent even when the estimate concentrates on a few fine cells;
/// chain steps are single density lookups, so the long chain stays cheap.
const LOOCV_THIN: usize = 300;
const LOOCV_BURN_IN: usize = 1000;

/// Leave-one-out cross-validation of the whole estimation pipeline.
///
/// Each fold estimates the measure from all other episodes, draws
/// `sample_count` parameters from the refined estimate, simulates them on
/// the held-out input, and scores the pointwise mean path against the
/// held-out measurement. Folds run in parallel; their sampling seeds derive
/// from the master seed by fold index, so the report does not depend on
/// scheduling. A fold whose estimate hits the iteration cap is flagged and
/// left out of the mean instead of failing the report.
pub fn loocv(
    dataset: &AggregateDataset,
    grid: &ParameterGrid,
    n_intervals: usize,
    reg: RegularizationWeights,
    sample_count: usize,
    seed: u64,
) -> Result<LoocvReport> {
    let m = dataset.episode_count();
    if m < 2 {
        return Err(Error::Config(format!(
            "cross-validation needs at least 2 episodes, got {m}"
        )));
    }
    if sample_count == 0 {
        return Err(Error::Config("sample count must be at least 1".into()));
    }
    let tau = dataset.tau();

    let folds = (0..m)
        .into_par_iter()
        .map(|fold| -> Result<FoldResult> {
            let start = Instant::now();
            let test_ep = &dataset.episodes()[fold];
            let train: Vec<Episode> = dataset
                .episodes()
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != fold)
                .map(|(_, ep)| ep.clone())
                .collect();
            let train_ds = AggregateDataset::new(train)?;
            let dict = build_dictionary(grid, &train_ds, n_intervals)?;
            let est = estimate(&dict, &train_ds, reg, SolverOptions::default())?;
            if !est.converged {
                return Ok(FoldResult {
                    fold,
                    episode_id: test_ep.id().to_string(),
                    nrmse: None,
                    seconds: start.elapsed().as_secs_f64(),
                    converged: false,
                });
            }

            let refined = refine_density(&est.measure, LOOCV_REFINE_FACTOR)?;
            let chain = McmcConfig::new(
                LOOCV_BURN_IN + sample_count * LOOCV_THIN,
                LOOCV_BURN_IN,
                derive_seed(seed, fold as u64),
            )?;
            let (raw, _) = metropolis_sample(&refined, &chain)?;
            let samples = raw.thinned(LOOCV_THIN)?;

            let clean = Episode::new(test_ep.id(), tau, test_ep.input().to_vec(), None)?;
            let paths = samples
                .points()
                .par_iter()
                .map(|q| {
                    let sys = discretize(&assemble(*q, n_intervals)?, tau)?;
                    simulate(&sys, &clean).map(|t| t.values().to_vec())
                })
                .collect::<Result<Vec<_>>>()?;
            let mut mean = vec![0.0; clean.len()];
            for path in &paths {
                for (m, v) in mean.iter_mut().zip(path) {
                    *m += v;
                }
            }
            for v in &mut mean {
                *v /= paths.len() as f64;
            }
            let estimated = TacSeries::new(tau, mean);
            let measured = TacSeries::new(tau, test_ep.output().unwrap().to_vec());
            let score = nrmse(&measured, &estimated)?;
            Ok(FoldResult {
                fold,
                episode_id: test_ep.id().to_string(),
                nrmse: Some(score),
                seconds: start.elapsed().as_secs_f64(),
                converged: true,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let scores: Vec<f64> = folds.iter().filter_map(|f| f.nrmse).collect();
    let nrmse_mean = if scores.is_empty() {
        None
    } else {
        Some(scores.iter().sum::<f64>() / scores.len() as f64)
    };
    Ok(LoocvReport {
        folds,
        nrmse_mean,
        node_count: grid.len(),
        n_intervals,
        w1: reg.w1,
        w2: reg.w2,
        sample_count,
        seed,
    })
}

/// Simultaneous Student-t band around the pointwise mean of sampled paths.
#[derive(Debug, Clone)]
pub struct ConfidenceBand {
    tau: f64,
    means: Vec<f64>,
    half_widths: Vec<f64>,
    alpha: f64,
}

impl ConfidenceBand {
    pub fn tau(&self) -> f64 {
        self.tau
    }
    pub fn means(&self) -> &[f64] {
        &self.means
    }
    pub fn half_widths(&self) -> &[f64] {
        &self.half_widths
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn len(&self) -> usize {
        self.means.len()
    }
    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }
    pub fn lower(&self, k: usize) -> f64 {
        self.means[k] - self.half_widths[k]
    }
    pub fn upper(&self, k: usize) -> f64 {
        self.means[k] + self.half_widths[k]
    }
}

/// Bonferroni-simultaneous band over all time steps: at each step the
/// half-width is t_{S−1, α/(2n)} · s_k / √S across the S paths, with n the
/// series length, so the band covers the whole mean path at level 1 − α.
pub fn confidence_band(paths: &[TacSeries], alpha: f64) -> Result<ConfidenceBand> {
    let s = paths.len();
    if s < 2 {
        return Err(Error::Domain(format!(
            "band needs at least 2 sampled paths, got {s}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha {alpha} must lie in (0, 1)")));
    }
    let n = paths[0].len();
    let tau = paths[0].tau();
    for p in paths {
        if p.len() != n || !tau_consistent(p.tau(), tau) {
            return Err(Error::Config(
                "sampled paths must share length and sample interval".into(),
            ));
        }
    }
    let multiplier = student_t_upper_quantile((s - 1) as f64, alpha / (2.0 * n as f64))?;
    let mut means = Vec::with_capacity(n);
    let mut half_widths = Vec::with_capacity(n);
    let sf = s as f64;
    for k in 0..n {
        // Exactly zero width when every path agrees at this step; the mean
        // of repeated floats can otherwise round away from the common value.
        let first = paths[0].values()[k];
        if paths.iter().all(|p| p.values()[k] == first) {
            means.push(first);
            half_widths.push(0.0);
            continue;
        }
        let mean = paths.iter().map(|p| p.values()[k]).sum::<f64>() / sf;
        let var = paths
            .iter()
            .map(|p| {
                let d = p.values()[k] - mean;
                d * d
            })
            .sum::<f64>()
            / (sf - 1.0);
        means.push(mean);
        half_widths.push(multiplier * var.sqrt() / sf.sqrt());
    }
    Ok(ConfidenceBand { tau, means, half_widths, alpha })
}
