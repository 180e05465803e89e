//! Distribution estimation by simplex-constrained regularized least squares.
//!
//! Given m episodes of aggregate output data and a parameter grid with M
//! nodes, the dictionary holds the simulated output of every node on every
//! episode input. A candidate weight vector p on the probability simplex
//! predicts the aggregate output as the p-weighted combination of dictionary
//! columns; the estimate minimizes
//!
//! ```text
//! J(p) = sum_{i,k} (y_{k,i} - sum_j p_j H_{k,(i,j)})^2
//!      + w1 * sum |p_{j1+1,j2} - p_{j1,j2}|^2
//!      + w2 * sum |p_{j1,j2+1} - p_{j1,j2}|^2
//! ```
//!
//! over the simplex, where the penalty differences run over neighboring grid
//! indices along each parameter axis. The solver is an accelerated projected
//! gradient method with exact sort-based Euclidean projection onto the
//! simplex, backtracking from a power-iteration step-size estimate, and a
//! monotone descent safeguard.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measures::{DiscreteMeasure, ParameterGrid};
use crate::pde_forward::{assemble, discretize, simulate, tau_consistent, Episode};

/// Episodes with measured outputs, padded to a common length.
///
/// Episodes may have different lengths; shorter measured series are extended
/// with zeros (an episode ends once the output has returned to zero, so the
/// padding is data, not filler) and the padded rows participate in the
/// misfit.
#[derive(Debug, Clone)]
pub struct AggregateDataset {
    episodes: Vec<Episode>,
    tau: f64,
    n_steps: usize,
    /// n_steps x m matrix of padded outputs, one column per episode.
    outputs: DMatrix<f64>,
}

impl AggregateDataset {
    pub fn new(episodes: Vec<Episode>) -> Result<Self> {
        if episodes.is_empty() {
            return Err(Error::Config("dataset needs at least one episode".into()));
        }
        let tau = episodes[0].tau();
        let mut n_steps = 0;
        for ep in &episodes {
            if ep.output().is_none() {
                return Err(Error::Config(format!(
                    "episode {} has no measured output",
                    ep.id()
                )));
            }
            if !tau_consistent(ep.tau(), tau) {
                return Err(Error::Config(format!(
                    "episode {} has tau={} but the dataset uses tau={}",
                    ep.id(),
                    ep.tau(),
                    tau
                )));
            }
            n_steps = n_steps.max(ep.len());
        }
        let m = episodes.len();
        let mut outputs = DMatrix::<f64>::zeros(n_steps, m);
        for (i, ep) in episodes.iter().enumerate() {
            for (k, &y) in ep.output().unwrap().iter().enumerate() {
                outputs[(k, i)] = y;
            }
        }
        Ok(Self { episodes, tau, n_steps, outputs })
    }

    pub fn episodes(&self) -> &[Episode] {
        &self.episodes
    }
    pub fn episode_count(&self) -> usize {
        self.episodes.len()
    }
    pub fn tau(&self) -> f64 {
        self.tau
    }
    /// Common padded length n.
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }
    /// Padded n x m output matrix.
    pub fn outputs(&self) -> &DMatrix<f64> {
        &self.outputs
    }
}

/// Simulated outputs of every grid node on every episode input.
#[derive(Debug, Clone)]
pub struct OutputDictionary {
    grid: ParameterGrid,
    n_intervals: usize,
    tau: f64,
    n_steps: usize,
    episode_count: usize,
    /// (n * m) x M design matrix: column j stacks node j's outputs on the m
    /// padded episode inputs, episode by episode.
    design: DMatrix<f64>,
}

/// Simulates the dictionary for `grid` against the dataset's episode inputs,
/// each zero-padded to the dataset length. Nodes are processed in parallel.
pub fn build_dictionary(
    grid: &ParameterGrid,
    dataset: &AggregateDataset,
    n_intervals: usize,
) -> Result<OutputDictionary> {
    let n = dataset.n_steps();
    let m = dataset.episode_count();
    let padded: Vec<Episode> = dataset
        .episodes()
        .iter()
        .map(|ep| ep.zero_padded_input(n))
        .collect::<Result<_>>()?;

    let columns: Vec<DVector<f64>> = (0..grid.len())
        .into_par_iter()
        .map(|j| -> Result<DVector<f64>> {
            let dts = discretize(&assemble(grid.node(j), n_intervals)?, dataset.tau())?;
            let mut col = DVector::<f64>::zeros(n * m);
            for (i, ep) in padded.iter().enumerate() {
                let tac = simulate(&dts, ep)?;
                col.rows_mut(i * n, n).copy_from_slice(tac.values());
            }
            Ok(col)
        })
        .collect::<Result<_>>()?;

    Ok(OutputDictionary {
        grid: grid.clone(),
        n_intervals,
        tau: dataset.tau(),
        n_steps: n,
        episode_count: m,
        design: DMatrix::from_columns(&columns),
    })
}

impl OutputDictionary {
    pub fn grid(&self) -> &ParameterGrid {
        &self.grid
    }
    pub fn n_intervals(&self) -> usize {
        self.n_intervals
    }
    pub fn tau(&self) -> f64 {
        self.tau
    }
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }
    pub fn episode_count(&self) -> usize {
        self.episode_count
    }
    pub fn node_count(&self) -> usize {
        self.grid.len()
    }
    /// Simulated output of grid node `node` on episode `episode`, one value
    /// per padded time step.
    pub fn column(&self, episode: usize, node: usize) -> &[f64] {
        let n = self.n_steps;
        let rows = self.design.nrows();
        let start = node * rows + episode * n;
        &self.design.as_slice()[start..start + n]
    }
}

/// Predicted aggregate output under a candidate measure: an n x m matrix
/// whose column i is the p-weighted combination of node outputs on episode i.
pub fn aggregate_output(dict: &OutputDictionary, measure: &DiscreteMeasure) -> Result<DMatrix<f64>> {
    if measure.grid() != dict.grid() {
        return Err(Error::Config(
            "measure grid does not match the dictionary grid".into(),
        ));
    }
    let p = DVector::from_column_slice(measure.weights());
    let stacked = &dict.design * p;
    Ok(DMatrix::from_column_slice(
        dict.n_steps,
        dict.episode_count,
        stacked.as_slice(),
    ))
}

/// Smoothing weights (w1 along the q1 grid axis, w2 along q2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizationWeights {
    pub w1: f64,
    pub w2: f64,
}

impl RegularizationWeights {
    pub fn new(w1: f64, w2: f64) -> Result<Self> {
        if !(w1 >= 0.0 && w2 >= 0.0) || !w1.is_finite() || !w2.is_finite() {
            return Err(Error::Domain(format!(
                "regularization weights must be finite and nonnegative, got ({w1}, {w2})"
            )));
        }
        Ok(Self { w1, w2 })
    }

    pub fn zero() -> Self {
        Self { w1: 0.0, w2: 0.0 }
    }
}

/// Squared first differences of p along the two grid index axes.
fn penalty_terms(grid: &ParameterGrid, p: &[f64]) -> (f64, f64) {
    let (m1, m2) = (grid.m1(), grid.m2());
    let mut d1 = 0.0;
    let mut d2 = 0.0;
    for i1 in 0..m1 {
        for i2 in 0..m2 {
            let j = i1 * m2 + i2;
            if i1 + 1 < m1 {
                let diff = p[j + m2] - p[j];
                d1 += diff * diff;
            }
            if i2 + 1 < m2 {
                let diff = p[j + 1] - p[j];
                d2 += diff * diff;
            }
        }
    }
    (d1, d2)
}

const SIMPLEX_TOL: f64 = 1e-8;

fn validate_simplex(p: &[f64]) -> Result<()> {
    let mut sum = 0.0;
    for &v in p {
        if !v.is_finite() || v < -SIMPLEX_TOL {
            return Err(Error::Domain(format!("weight {v} is not on the simplex")));
        }
        sum += v;
    }
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::Domain(format!(
            "weights sum to {sum}, not 1 within {SIMPLEX_TOL:e}"
        )));
    }
    Ok(())
}

/// Regularized misfit J(p), evaluated directly from the residuals.
pub fn objective(
    dict: &OutputDictionary,
    dataset: &AggregateDataset,
    p: &[f64],
    reg: RegularizationWeights,
) -> Result<f64> {
    check_dict_dataset(dict, dataset)?;
    if p.len() != dict.node_count() {
        return Err(Error::Config(format!(
            "weight vector has {} entries for a {}-node dictionary",
            p.len(),
            dict.node_count()
        )));
    }
    validate_simplex(p)?;
    let pv = DVector::from_column_slice(p);
    let predicted = &dict.design * pv;
    let mut misfit = 0.0;
    let n = dict.n_steps;
    for i in 0..dict.episode_count {
        for k in 0..n {
            let r = dataset.outputs[(k, i)] - predicted[i * n + k];
            misfit += r * r;
        }
    }
    let (d1, d2) = penalty_terms(&dict.grid, p);
    Ok(misfit + reg.w1 * d1 + reg.w2 * d2)
}

fn check_dict_dataset(dict: &OutputDictionary, dataset: &AggregateDataset) -> Result<()> {
    if dict.n_steps != dataset.n_steps() || dict.episode_count != dataset.episode_count() {
        return Err(Error::Config(format!(
            "dictionary was built for {} episodes of {} steps, dataset has {} of {}",
            dict.episode_count,
            dict.n_steps,
            dataset.episode_count(),
            dataset.n_steps()
        )));
    }
    if !tau_consistent(dict.tau, dataset.tau()) {
        return Err(Error::Config(format!(
            "dictionary tau {} does not match dataset tau {}",
            dict.tau,
            dataset.tau()
        )));
    }
    Ok(())
}

/// Exact Euclidean projection onto the probability simplex (sort-based).
pub(crate) fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (j + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Stopping controls for [`estimate`].
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Convergence threshold on the projected-gradient residual, relative to
    /// the residual at the starting point (floored at 1).
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tolerance: 1e-8, max_iterations: 50_000 }
    }
}

/// Estimation output: the fitted measure plus solver diagnostics.
#[derive(Debug, Clone)]
pub struct EstimateResult {
    pub measure: DiscreteMeasure,
    /// Final value of the regularized objective.
    pub objective: f64,
    /// Frobenius norm of the unregularized output residual.
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Quadratic form of the objective: J(p) = p' G p - 2 b' p + c.
pub(crate) struct QuadraticObjective {
    pub gram: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub constant: f64,
}

impl QuadraticObjective {
    pub(crate) fn build(
        dict: &OutputDictionary,
        dataset: &AggregateDataset,
        reg: RegularizationWeights,
    ) -> Self {
        let m_nodes = dict.node_count();
        let y = DVector::from_column_slice(dataset.outputs().as_slice());
        let mut gram = dict.design.tr_mul(&dict.design);
        // Difference-operator normal matrices along each grid axis.
        let (m1, m2) = (dict.grid.m1(), dict.grid.m2());
        for i1 in 0..m1 {
            for i2 in 0..m2 {
                let j = i1 * m2 + i2;
                if i1 + 1 < m1 {
                    gram[(j, j)] += reg.w1;
                    gram[(j + m2, j + m2)] += reg.w1;
                    gram[(j, j + m2)] -= reg.w1;
                    gram[(j + m2, j)] -= reg.w1;
                }
                if i2 + 1 < m2 {
                    gram[(j, j)] += reg.w2;
                    gram[(j + 1, j + 1)] += reg.w2;
                    gram[(j, j + 1)] -= reg.w2;
                    gram[(j + 1, j)] -= reg.w2;
                }
            }
        }
        let linear = dict.design.tr_mul(&y);
        let constant = y.dot(&y);
        debug_assert_eq!(gram.nrows(), m_nodes);
        Self { gram, linear, constant }
    }

    pub(crate) fn value(&self, p: &DVector<f64>) -> f64 {
        (&self.gram * p).dot(p) - 2.0 * self.linear.dot(p) + self.constant
    }

    pub(crate) fn gradient(&self, p: &DVector<f64>) -> DVector<f64> {
        (&self.gram * p - &self.linear) * 2.0
    }

    /// Power-iteration estimate of the largest Hessian eigenvalue 2 lambda.
    fn hessian_norm_estimate(&self) -> f64 {
        let m = self.gram.nrows();
        let mut v = DVector::from_element(m, 1.0 / (m as f64).sqrt());
        let mut lambda = 0.0;
        for _ in 0..100 {
            let w = &self.gram * &v;
            let norm = w.norm();
            if norm <= f64::MIN_POSITIVE {
                break;
            }
            lambda = norm;
            v = w / norm;
        }
        2.0 * lambda
    }
}

pub(crate) struct SolveOutcome {
    pub weights: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Objective value after every accepted iterate.
    #[cfg_attr(not(test), allow(dead_code))]
    pub trace: Vec<f64>,
}

/// Monotone accelerated projected gradient over the simplex.
pub(crate) fn solve_simplex_qp(quad: &QuadraticObjective, opts: SolverOptions) -> SolveOutcome {
    let m = quad.gram.nrows();
    if m == 1 {
        return SolveOutcome {
            weights: vec![1.0],
            iterations: 0,
            converged: true,
            trace: vec![quad.value(&DVector::from_element(1, 1.0))],
        };
    }

    let project = |v: &DVector<f64>| DVector::from_vec(project_to_simplex(v.as_slice()));
    let residual = |p: &DVector<f64>| -> f64 {
        let moved = project(&(p - quad.gradient(p)));
        (p - moved).norm()
    };

    let mut x = DVector::from_element(m, 1.0 / m as f64);
    let mut fx = quad.value(&x);
    let mut y = x.clone();
    let mut t = 1.0f64;
    let lipschitz = quad.hessian_norm_estimate().max(f64::MIN_POSITIVE);
    let mut step = 1.0 / lipschitz;
    let scale = residual(&x).max(1.0);
    let mut trace = vec![fx];
    let mut converged = residual(&x) <= opts.tolerance * scale;
    let mut iterations = 0;

    // Backtracking step from `base`: halve until the quadratic majorization
    // holds, which bounds J at the new point by J(base).
    let backtrack = |base: &DVector<f64>, f_base: f64, g: &DVector<f64>, step: &mut f64| {
        loop {
            let z = project(&(base - &*g * *step));
            let dz = &z - base;
            let model = f_base + g.dot(&dz) + dz.norm_squared() / (2.0 * *step);
            let fz = quad.value(&z);
            if fz <= model + 1e-12 * (1.0 + f_base.abs()) || *step < 1e-20 / lipschitz {
                return (z, fz);
            }
            *step *= 0.5;
        }
    };

    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        let gy = quad.gradient(&y);
        let fy = quad.value(&y);
        let (mut z, mut fz) = backtrack(&y, fy, &gy, &mut step);
        if fz > fx + 1e-12 * (1.0 + fx.abs()) {
            // The accelerated point overshot; restart the momentum from the
            // last accepted iterate, which restores guaranteed descent.
            let gx = quad.gradient(&x);
            let (zx, fzx) = backtrack(&x, fx, &gx, &mut step);
            z = zx;
            fz = fzx;
            t = 1.0;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &z + (&z - &x) * ((t - 1.0) / t_next);
        x = z;
        fx = fz;
        t = t_next;
        trace.push(fx);
        if residual(&x) <= opts.tolerance * scale {
            converged = true;
        }
    }

    SolveOutcome { weights: x.as_slice().to_vec(), iterations, converged, trace }
}

/// Fits the grid measure to the dataset by accelerated projected gradient.
///
/// Hitting the iteration cap is reported through `converged = false` on the
/// result, not an error.
pub fn estimate(
    dict: &OutputDictionary,
    dataset: &AggregateDataset,
    reg: RegularizationWeights,
    opts: SolverOptions,
) -> Result<EstimateResult> {
    check_dict_dataset(dict, dataset)?;
    let quad = QuadraticObjective::build(dict, dataset, reg);
    let outcome = solve_simplex_qp(&quad, opts);

    let p = DVector::from_column_slice(&outcome.weights);
    let objective = quad.value(&p);
    let predicted = &dict.design * &p;
    let y = DVector::from_column_slice(dataset.outputs().as_slice());
    let residual_norm = (y - predicted).norm();
    let measure = DiscreteMeasure::new(dict.grid.clone(), outcome.weights)?;
    Ok(EstimateResult {
        measure,
        objective,
        residual_norm,
        iterations: outcome.iterations,
        converged: outcome.converged,
    })
}
