//! Discrete probability measures on rectangular parameter grids.
//!
//! The estimation target is a probability measure over the two-component
//! parameter q = (q1, q2). This module provides the grid-supported discrete
//! measures the estimator searches over, their joint CDFs, and a brute-force
//! Prohorov metric for comparing small-support measures in tests and
//! diagnostics.

use crate::error::{Error, Result};

/// A parameter value q = (q1, q2). Both components are finite and
/// nonnegative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParameterPoint {
    pub q1: f64,
    pub q2: f64,
}

impl ParameterPoint {
    pub fn new(q1: f64, q2: f64) -> Result<Self> {
        if !q1.is_finite() || !q2.is_finite() || q1 < 0.0 || q2 < 0.0 {
            return Err(Error::Domain(format!(
                "parameter point ({q1}, {q2}) must be finite and nonnegative"
            )));
        }
        Ok(Self { q1, q2 })
    }
}

/// Rectangle [q1_min, q1_max] x [q2_min, q2_max] of admissible parameters,
/// with the p-metric used to measure distances inside it.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterDomain {
    q1_min: f64,
    q1_max: f64,
    q2_min: f64,
    q2_max: f64,
    metric_order: f64,
}

impl ParameterDomain {
    /// Euclidean-metric domain.
    pub fn new(q1_min: f64, q1_max: f64, q2_min: f64, q2_max: f64) -> Result<Self> {
        Self::with_metric_order(q1_min, q1_max, q2_min, q2_max, 2.0)
    }

    /// Domain with distances measured in the p-metric, p in [1, inf].
    pub fn with_metric_order(
        q1_min: f64,
        q1_max: f64,
        q2_min: f64,
        q2_max: f64,
        metric_order: f64,
    ) -> Result<Self> {
        for v in [q1_min, q1_max, q2_min, q2_max] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Domain(format!(
                    "domain bounds must be finite and nonnegative, got \
                     [{q1_min}, {q1_max}] x [{q2_min}, {q2_max}]"
                )));
            }
        }
        if q1_min >= q1_max || q2_min >= q2_max {
            return Err(Error::Domain(format!(
                "domain bounds must satisfy min < max on both axes, got \
                 [{q1_min}, {q1_max}] x [{q2_min}, {q2_max}]"
            )));
        }
        if !(metric_order >= 1.0) {
            return Err(Error::Domain(format!(
                "metric order must be at least 1, got {metric_order}"
            )));
        }
        Ok(Self {
            q1_min,
            q1_max,
            q2_min,
            q2_max,
            metric_order,
        })
    }

    pub fn q1_min(&self) -> f64 {
        self.q1_min
    }
    pub fn q1_max(&self) -> f64 {
        self.q1_max
    }
    pub fn q2_min(&self) -> f64 {
        self.q2_min
    }
    pub fn q2_max(&self) -> f64 {
        self.q2_max
    }
    pub fn metric_order(&self) -> f64 {
        self.metric_order
    }

    pub fn contains(&self, p: ParameterPoint) -> bool {
        p.q1 >= self.q1_min && p.q1 <= self.q1_max && p.q2 >= self.q2_min && p.q2 <= self.q2_max
    }

    /// Distance between two points in the domain's p-metric.
    pub fn distance(&self, a: ParameterPoint, b: ParameterPoint) -> f64 {
        let d1 = (a.q1 - b.q1).abs();
        let d2 = (a.q2 - b.q2).abs();
        if self.metric_order.is_infinite() {
            d1.max(d2)
        } else if self.metric_order == 2.0 {
            d1.hypot(d2)
        } else if self.metric_order == 1.0 {
            d1 + d2
        } else {
            (d1.powf(self.metric_order) + d2.powf(self.metric_order))
                .powf(1.0 / self.metric_order)
        }
    }
}

/// Uniform m1 x m2 grid of nodes in a domain, ordered row-major with the q1
/// index varying slowest: node j = i1 * m2 + i2.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterGrid {
    domain: ParameterDomain,
    m1: usize,
    m2: usize,
    q1_coords: Vec<f64>,
    q2_coords: Vec<f64>,
}

/// Evenly spaced coordinates including both endpoints; a single-point axis
/// collapses to the interval midpoint.
fn linspace(min: f64, max: f64, m: usize) -> Vec<f64> {
    if m == 1 {
        return vec![0.5 * (min + max)];
    }
    (0..m)
        .map(|i| {
            let t = i as f64 / (m - 1) as f64;
            min * (1.0 - t) + max * t
        })
        .collect()
}

/// Builds the uniform m1 x m2 grid over `domain`.
pub fn make_uniform_grid(domain: &ParameterDomain, m1: usize, m2: usize) -> Result<ParameterGrid> {
    if m1 == 0 || m2 == 0 {
        return Err(Error::Domain(format!(
            "grid dimensions must be positive, got {m1} x {m2}"
        )));
    }
    Ok(ParameterGrid {
        q1_coords: linspace(domain.q1_min, domain.q1_max, m1),
        q2_coords: linspace(domain.q2_min, domain.q2_max, m2),
        domain: domain.clone(),
        m1,
        m2,
    })
}

impl ParameterGrid {
    pub fn domain(&self) -> &ParameterDomain {
        &self.domain
    }
    pub fn m1(&self) -> usize {
        self.m1
    }
    pub fn m2(&self) -> usize {
        self.m2
    }
    /// Total node count M = m1 * m2.
    pub fn len(&self) -> usize {
        self.m1 * self.m2
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn q1_coords(&self) -> &[f64] {
        &self.q1_coords
    }
    pub fn q2_coords(&self) -> &[f64] {
        &self.q2_coords
    }

    /// Flat index of the node at axis indices (i1, i2).
    pub fn index(&self, i1: usize, i2: usize) -> usize {
        debug_assert!(i1 < self.m1 && i2 < self.m2);
        i1 * self.m2 + i2
    }

    /// Axis indices of flat node j.
    pub fn axis_indices(&self, j: usize) -> (usize, usize) {
        debug_assert!(j < self.len());
        (j / self.m2, j % self.m2)
    }

    pub fn node(&self, j: usize) -> ParameterPoint {
        let (i1, i2) = self.axis_indices(j);
        ParameterPoint {
            q1: self.q1_coords[i1],
            q2: self.q2_coords[i2],
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = ParameterPoint> + '_ {
        (0..self.len()).map(|j| self.node(j))
    }
}

/// Sum of weights is accepted as a probability vector when within this of 1.
const WEIGHT_SUM_TOL: f64 = 1e-9;

/// A discrete probability measure P = sum_j p_j delta(q_j) supported on the
/// nodes of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    grid: ParameterGrid,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Wraps a weight vector after validating it lies on the probability
    /// simplex (nonnegative, summing to 1 within 1e-9).
    pub fn new(grid: ParameterGrid, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != grid.len() {
            return Err(Error::Config(format!(
                "weight vector has {} entries but the grid has {} nodes",
                weights.len(),
                grid.len()
            )));
        }
        let mut sum = 0.0;
        for (j, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Domain(format!(
                    "weight {w} at node {j} must be finite and nonnegative"
                )));
            }
            sum += w;
        }
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Domain(format!(
                "weights sum to {sum}, expected 1 within {WEIGHT_SUM_TOL:e}"
            )));
        }
        Ok(Self { grid, weights })
    }

    /// Point mass at grid node j.
    pub fn point_mass(grid: ParameterGrid, j: usize) -> Result<Self> {
        if j >= grid.len() {
            return Err(Error::Domain(format!(
                "node index {j} outside grid of {} nodes",
                grid.len()
            )));
        }
        let mut weights = vec![0.0; grid.len()];
        weights[j] = 1.0;
        Ok(Self { grid, weights })
    }

    /// Uniform measure over all grid nodes.
    pub fn uniform(grid: ParameterGrid) -> Self {
        let m = grid.len();
        Self {
            grid,
            weights: vec![1.0 / m as f64; m],
        }
    }

    pub fn grid(&self) -> &ParameterGrid {
        &self.grid
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Support of the measure: indices of nodes with strictly positive weight.
    pub fn support(&self) -> Vec<usize> {
        (0..self.weights.len())
            .filter(|&j| self.weights[j] > 0.0)
            .collect()
    }

    /// Joint CDF evaluated at every grid node: F(i1, i2) sums the weights of
    /// all nodes with both axis indices at most (i1, i2).
    pub fn cdf(&self) -> Cdf2D {
        let (m1, m2) = (self.grid.m1, self.grid.m2);
        let mut values = vec![0.0; m1 * m2];
        for i1 in 0..m1 {
            let mut row_sum = 0.0;
            for i2 in 0..m2 {
                row_sum += self.weights[i1 * m2 + i2];
                let above = if i1 > 0 { values[(i1 - 1) * m2 + i2] } else { 0.0 };
                values[i1 * m2 + i2] = above + row_sum;
            }
        }
        Cdf2D {
            grid: self.grid.clone(),
            values,
        }
    }
}

/// Joint CDF of a grid-supported measure, stored at every grid node in the
/// same row-major order as the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Cdf2D {
    grid: ParameterGrid,
    values: Vec<f64>,
}

impl Cdf2D {
    pub fn grid(&self) -> &ParameterGrid {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn value(&self, i1: usize, i2: usize) -> f64 {
        self.values[self.grid.index(i1, i2)]
    }

    /// Total mass, the CDF at the top-right corner.
    pub fn total(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Recovers node masses by mixed second differences; exact inverse of
    /// [`DiscreteMeasure::cdf`] up to floating-point cancellation.
    pub fn node_masses(&self) -> Vec<f64> {
        let (m1, m2) = (self.grid.m1, self.grid.m2);
        let f = |i1: isize, i2: isize| -> f64 {
            if i1 < 0 || i2 < 0 {
                0.0
            } else {
                self.values[i1 as usize * m2 + i2 as usize]
            }
        };
        let mut w = vec![0.0; m1 * m2];
        for i1 in 0..m1 {
            for i2 in 0..m2 {
                let (a, b) = (i1 as isize, i2 as isize);
                w[i1 * m2 + i2] = f(a, b) - f(a - 1, b) - f(a, b - 1) + f(a - 1, b - 1);
            }
        }
        w
    }
}

/// Largest combined support size the brute-force Prohorov computation
/// accepts; subset enumeration is exponential in this number.
pub const PROHOROV_MAX_SUPPORT: usize = 20;

/// Prohorov distance between two small-support discrete measures, computed by
/// exhaustive subset enumeration on an epsilon grid.
///
/// Returns the smallest eps in {k * eps_resolution} such that for every
/// subset E of the combined support, P(E) <= Q(E^eps) + eps and
/// Q(E) <= P(E^eps) + eps, where E^eps is the open eps-fattening of E in the
/// domain's metric. The result is capped at 1; quantization makes it an upper
/// bound on the exact distance, within one resolution step.
pub fn prohorov_distance(
    p: &DiscreteMeasure,
    q: &DiscreteMeasure,
    eps_resolution: f64,
) -> Result<f64> {
    if !(eps_resolution > 0.0 && eps_resolution <= 1.0) {
        return Err(Error::Domain(format!(
            "eps_resolution must lie in (0, 1], got {eps_resolution}"
        )));
    }
    if p.grid.domain.metric_order != q.grid.domain.metric_order {
        return Err(Error::Config(format!(
            "measures use different metric orders ({} vs {})",
            p.grid.domain.metric_order, q.grid.domain.metric_order
        )));
    }
    let metric = &p.grid.domain;

    // Combined support, merging coordinate-identical atoms across measures.
    let mut points: Vec<ParameterPoint> = Vec::new();
    let mut wp: Vec<f64> = Vec::new();
    let mut wq: Vec<f64> = Vec::new();
    let mut add = |pt: ParameterPoint, w: f64, first: bool| {
        if let Some(k) = points.iter().position(|&x| x == pt) {
            if first {
                wp[k] += w;
            } else {
                wq[k] += w;
            }
        } else {
            points.push(pt);
            wp.push(if first { w } else { 0.0 });
            wq.push(if first { 0.0 } else { w });
        }
    };
    for j in p.support() {
        add(p.grid.node(j), p.weights[j], true);
    }
    for j in q.support() {
        add(q.grid.node(j), q.weights[j], false);
    }
    let s = points.len();
    if s > PROHOROV_MAX_SUPPORT {
        return Err(Error::Capability(format!(
            "combined support of {s} atoms exceeds the brute-force limit of {PROHOROV_MAX_SUPPORT}"
        )));
    }
    if s == 0 {
        return Ok(0.0);
    }

    let dist: Vec<Vec<f64>> = (0..s)
        .map(|i| (0..s).map(|j| metric.distance(points[i], points[j])).collect())
        .collect();

    // The conditions hold vacuously at eps >= 1, so the grid search stops at
    // the first multiple of the resolution reaching 1.
    let k_max = (1.0 / eps_resolution).ceil() as u64;

    // For one subset, the smallest valid grid index; both conditions are
    // monotone in eps, so binary search applies.
    let mut worst_k = 1u64;
    let mut d_min = vec![0.0f64; s];
    for mask in 1u32..(1 << s) {
        let mut mass_p = 0.0;
        let mut mass_q = 0.0;
        for i in 0..s {
            if mask & (1 << i) != 0 {
                mass_p += wp[i];
                mass_q += wq[i];
            }
        }
        for x in 0..s {
            let mut dm = f64::INFINITY;
            for e in 0..s {
                if mask & (1 << e) != 0 && dist[x][e] < dm {
                    dm = dist[x][e];
                }
            }
            d_min[x] = dm;
        }
        let holds = |k: u64| -> bool {
            let eps = k as f64 * eps_resolution;
            let mut fat_p = 0.0;
            let mut fat_q = 0.0;
            for x in 0..s {
                if d_min[x] < eps {
                    fat_p += wp[x];
                    fat_q += wq[x];
                }
            }
            mass_p <= fat_q + eps && mass_q <= fat_p + eps
        };
        if holds(worst_k) {
            continue;
        }
        let mut lo = worst_k;
        let mut hi = k_max;
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if holds(mid) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        worst_k = lo;
    }
    Ok((worst_k as f64 * eps_resolution).min(1.0))
}
