//! Density refinement and Metropolis sampling for estimated measures.
//!
//! A grid measure from the estimator is coarse; to draw samples from it as
//! if it were continuous, its CDF is interpolated on a finer grid with a
//! tensor-product natural cubic spline, differenced back into node masses,
//! and divided by node cell areas to give a piecewise-constant density.
//! Samples are then drawn with an independence Metropolis chain whose
//! proposals are uniform over the domain rectangle and whose acceptance
//! ratio uses nearest-node density lookup.

use crate::error::{Error, Result};
use crate::measures::{make_uniform_grid, DiscreteMeasure, ParameterGrid, ParameterPoint};
use crate::rng::Rng;

/// Natural cubic spline through strictly increasing knots.
pub(crate) struct CubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Second derivatives at the knots; zero at both ends.
    y2: Vec<f64>,
}

impl CubicSpline {
    pub(crate) fn natural(xs: &[f64], ys: &[f64]) -> Self {
        let n = xs.len();
        assert!(n >= 2 && n == ys.len(), "need matching knots, at least two");
        assert!(
            xs.windows(2).all(|w| w[1] > w[0]),
            "knots must be strictly increasing"
        );
        let mut y2 = vec![0.0; n];
        let mut u = vec![0.0; n];
        for i in 1..n - 1 {
            let sig = (xs[i] - xs[i - 1]) / (xs[i + 1] - xs[i - 1]);
            let p = sig * y2[i - 1] + 2.0;
            y2[i] = (sig - 1.0) / p;
            let slope_hi = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]);
            let slope_lo = (ys[i] - ys[i - 1]) / (xs[i] - xs[i - 1]);
            u[i] = (6.0 * (slope_hi - slope_lo) / (xs[i + 1] - xs[i - 1]) - sig * u[i - 1]) / p;
        }
        for i in (1..n - 1).rev() {
            y2[i] = y2[i] * y2[i + 1] + u[i];
        }
        Self { xs: xs.to_vec(), ys: ys.to_vec(), y2 }
    }

    pub(crate) fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let mut lo = 0;
        let mut hi = n - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.xs[mid] > x {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let h = self.xs[hi] - self.xs[lo];
        let a = (self.xs[hi] - x) / h;
        let b = (x - self.xs[lo]) / h;
        a * self.ys[lo]
            + b * self.ys[hi]
            + ((a * a * a - a) * self.y2[lo] + (b * b * b - b) * self.y2[hi]) * (h * h) / 6.0
    }
}

/// Piecewise-linear interpolation through the same knot layout, used when the
/// grid is too small to support a cubic spline.
fn linear_eval(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if n == 1 {
        return ys[0];
    }
    let mut lo = 0;
    let mut hi = n - 1;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if xs[mid] > x {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let t = (x - xs[lo]) / (xs[hi] - xs[lo]);
    ys[lo] * (1.0 - t) + ys[hi] * t
}

/// Node-centered cell edges along one axis: `edges[k]..edges[k + 1]` is node
/// k's cell, with the outermost cells clipped to the domain extent. Length is
/// `coords.len() + 1`.
fn cell_edges(coords: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let n = coords.len();
    let mut edges = Vec::with_capacity(n + 1);
    edges.push(lo);
    for k in 1..n {
        edges.push((coords[k - 1] + coords[k]) / 2.0);
    }
    edges.push(hi);
    edges
}

/// Piecewise-constant density on a fine uniform grid, carrying both node
/// masses and the densities (mass over node-centered cell area).
#[derive(Debug, Clone)]
pub struct RefinedDensity {
    fine_grid: ParameterGrid,
    masses: Vec<f64>,
    densities: Vec<f64>,
    bilinear_fallback: bool,
}

/// Node-centered cell widths along one axis: half cells at the ends, full
/// cells in the interior; a single-node axis spans the whole extent.
fn cell_widths(coords: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let n = coords.len();
    if n == 1 {
        return vec![hi - lo];
    }
    (0..n)
        .map(|i| {
            let left = if i == 0 { coords[0] } else { (coords[i - 1] + coords[i]) / 2.0 };
            let right = if i == n - 1 {
                coords[n - 1]
            } else {
                (coords[i] + coords[i + 1]) / 2.0
            };
            right - left
        })
        .collect()
}

impl RefinedDensity {
    /// Builds the density from nonnegative node masses, normalizing them.
    pub(crate) fn from_masses(
        fine_grid: ParameterGrid,
        masses: Vec<f64>,
        bilinear_fallback: bool,
    ) -> Result<Self> {
        if masses.len() != fine_grid.len() {
            return Err(Error::Config(format!(
                "{} masses for a {}-node grid",
                masses.len(),
                fine_grid.len()
            )));
        }
        let mut masses = masses;
        let mut sum = 0.0;
        for m in &mut masses {
            if !m.is_finite() || *m < 0.0 {
                return Err(Error::Domain(format!("node mass {m} is not a finite nonnegative value")));
            }
            sum += *m;
        }
        if sum <= 0.0 {
            return Err(Error::Domain("density is identically zero".into()));
        }
        for m in &mut masses {
            *m /= sum;
        }
        let d = fine_grid.domain();
        let w1 = cell_widths(fine_grid.q1_coords(), d.q1_min(), d.q1_max());
        let w2 = cell_widths(fine_grid.q2_coords(), d.q2_min(), d.q2_max());
        let densities = (0..fine_grid.len())
            .map(|j| {
                let (i1, i2) = fine_grid.axis_indices(j);
                masses[j] / (w1[i1] * w2[i2])
            })
            .collect();
        Ok(Self { fine_grid, masses, densities, bilinear_fallback })
    }

    pub fn fine_grid(&self) -> &ParameterGrid {
        &self.fine_grid
    }
    /// Normalized node masses; they sum to 1.
    pub fn node_masses(&self) -> &[f64] {
        &self.masses
    }
    /// Density values per node; the cell-area weighted sum is 1.
    pub fn densities(&self) -> &[f64] {
        &self.densities
    }
    /// True when the coarse grid was too small for cubic interpolation and
    /// bilinear interpolation was used instead.
    pub fn used_bilinear_fallback(&self) -> bool {
        self.bilinear_fallback
    }

    fn nearest_axis_index(coords: &[f64], lo: f64, hi: f64, x: f64) -> Option<usize> {
        if x < lo || x > hi {
            return None;
        }
        let n = coords.len();
        if n == 1 {
            return Some(0);
        }
        let h = (coords[n - 1] - coords[0]) / (n - 1) as f64;
        let idx = ((x - coords[0]) / h).round();
        Some((idx.max(0.0) as usize).min(n - 1))
    }

    /// Density at a point by nearest-node lookup; zero outside the domain.
    pub fn density_at(&self, q1: f64, q2: f64) -> f64 {
        let d = self.fine_grid.domain();
        let i1 = Self::nearest_axis_index(self.fine_grid.q1_coords(), d.q1_min(), d.q1_max(), q1);
        let i2 = Self::nearest_axis_index(self.fine_grid.q2_coords(), d.q2_min(), d.q2_max(), q2);
        match (i1, i2) {
            (Some(i1), Some(i2)) => self.densities[self.fine_grid.index(i1, i2)],
            _ => 0.0,
        }
    }

    /// Mass of an axis-aligned rectangle under the piecewise-constant
    /// density: node masses weighted by the cell overlap fraction.
    pub fn mass_in_rect(&self, q1_lo: f64, q1_hi: f64, q2_lo: f64, q2_hi: f64) -> Result<f64> {
        if !(q1_lo <= q1_hi && q2_lo <= q2_hi) {
            return Err(Error::Domain(format!(
                "rectangle bounds ({q1_lo}, {q1_hi}) x ({q2_lo}, {q2_hi}) are inverted"
            )));
        }
        let d = self.fine_grid.domain();
        let f1 = overlap_fractions(self.fine_grid.q1_coords(), d.q1_min(), d.q1_max(), q1_lo, q1_hi);
        let f2 = overlap_fractions(self.fine_grid.q2_coords(), d.q2_min(), d.q2_max(), q2_lo, q2_hi);
        let mut total = 0.0;
        for (j, &m) in self.masses.iter().enumerate() {
            let (i1, i2) = self.fine_grid.axis_indices(j);
            total += m * f1[i1] * f2[i2];
        }
        Ok(total)
    }
}

/// Fraction of each node-centered cell covered by [lo, hi] along one axis.
fn overlap_fractions(coords: &[f64], axis_lo: f64, axis_hi: f64, lo: f64, hi: f64) -> Vec<f64> {
    let n = coords.len();
    (0..n)
        .map(|i| {
            let left = if n == 1 {
                axis_lo
            } else if i == 0 {
                coords[0]
            } else {
                (coords[i - 1] + coords[i]) / 2.0
            };
            let right = if n == 1 {
                axis_hi
            } else if i == n - 1 {
                coords[n - 1]
            } else {
                (coords[i] + coords[i + 1]) / 2.0
            };
            let width = right - left;
            if width <= 0.0 {
                return 0.0;
            }
            let covered = (hi.min(right) - lo.max(left)).max(0.0);
            covered / width
        })
        .collect()
}

/// Minimum per-axis node count for tensor cubic interpolation; below it the
/// refinement falls back to bilinear interpolation.
const MIN_SPLINE_NODES: usize = 4;

/// Interpolates the measure's CDF on a grid refined `factor` times per axis
/// and differences it back into a normalized piecewise-constant density.
///
/// The interpolated CDF is the one of the piecewise-constant density, whose
/// value at a node is the average of the four inclusive/exclusive corner
/// cumulatives there; fine node masses are mixed differences of that CDF over
/// fine cell edges. With this pairing a node's mass spreads symmetrically
/// across its own cell, so refinement preserves every interior cell's center
/// of mass instead of smearing it toward the grid origin.
///
/// `factor = 1` performs no interpolation: the masses are the measure's
/// weights unchanged. Grids smaller than 4 nodes on either axis use bilinear
/// interpolation, reported through the fallback flag on the result.
pub fn refine_density(measure: &DiscreteMeasure, factor: usize) -> Result<RefinedDensity> {
    if factor == 0 {
        return Err(Error::Domain("refinement factor must be at least 1".into()));
    }
    let grid = measure.grid();
    if factor == 1 {
        return RefinedDensity::from_masses(grid.clone(), measure.weights().to_vec(), false);
    }

    let (m1, m2) = (grid.m1(), grid.m2());
    let fine_m1 = if m1 == 1 { 1 } else { (m1 - 1) * factor + 1 };
    let fine_m2 = if m2 == 1 { 1 } else { (m2 - 1) * factor + 1 };
    let fine_grid = make_uniform_grid(grid.domain(), fine_m1, fine_m2)?;
    let use_spline = m1 >= MIN_SPLINE_NODES && m2 >= MIN_SPLINE_NODES;

    // Knot values at the coarse nodes: the CDF of the piecewise-constant
    // density, i.e. the corner average of the inclusive cumulative sums. A
    // single-node axis is not averaged; its whole cumulative rises across its
    // one cell in the passes below.
    let cdf = measure.cdf();
    let cv = cdf.values();
    let corner = |i1: isize, i2: isize| -> f64 {
        if i1 < 0 || i2 < 0 {
            0.0
        } else {
            cv[i1 as usize * m2 + i2 as usize]
        }
    };
    let s1: &[isize] = if m1 == 1 { &[0] } else { &[0, 1] };
    let s2: &[isize] = if m2 == 1 { &[0] } else { &[0, 1] };
    let mut knots = vec![0.0; m1 * m2];
    for i1 in 0..m1 {
        for i2 in 0..m2 {
            let mut acc = 0.0;
            for &a in s1 {
                for &b in s2 {
                    acc += corner(i1 as isize - a, i2 as isize - b);
                }
            }
            knots[i1 * m2 + i2] = acc / (s1.len() * s2.len()) as f64;
        }
    }

    let x1 = grid.q1_coords();
    let x2 = grid.q2_coords();
    let d = grid.domain();
    let fe1 = cell_edges(fine_grid.q1_coords(), d.q1_min(), d.q1_max());
    let fe2 = cell_edges(fine_grid.q2_coords(), d.q2_min(), d.q2_max());
    let (ne1, ne2) = (fe1.len(), fe2.len());

    // Pass 1: interpolate each coarse q1 row along q2 at the fine cell edges.
    let mut mid = vec![0.0; m1 * ne2];
    for i1 in 0..m1 {
        let row: Vec<f64> = (0..m2).map(|i2| knots[i1 * m2 + i2]).collect();
        if m2 == 1 {
            mid[i1 * ne2] = 0.0;
            mid[i1 * ne2 + 1] = row[0];
        } else if use_spline {
            let s = CubicSpline::natural(x2, &row);
            for (k2, &x) in fe2.iter().enumerate() {
                mid[i1 * ne2 + k2] = s.eval(x);
            }
        } else {
            for (k2, &x) in fe2.iter().enumerate() {
                mid[i1 * ne2 + k2] = linear_eval(x2, &row, x);
            }
        }
    }

    // Pass 2: interpolate each fine-edge column along q1.
    let mut edge_cdf = vec![0.0; ne1 * ne2];
    for k2 in 0..ne2 {
        let col: Vec<f64> = (0..m1).map(|i1| mid[i1 * ne2 + k2]).collect();
        if m1 == 1 {
            edge_cdf[k2] = 0.0;
            edge_cdf[ne2 + k2] = col[0];
        } else if use_spline {
            let s = CubicSpline::natural(x1, &col);
            for (k1, &x) in fe1.iter().enumerate() {
                edge_cdf[k1 * ne2 + k2] = s.eval(x);
            }
        } else {
            for (k1, &x) in fe1.iter().enumerate() {
                edge_cdf[k1 * ne2 + k2] = linear_eval(x1, &col, x);
            }
        }
    }

    // A fine cell's mass is the mixed difference of the interpolated CDF over
    // its four edge corners. Boundary-node mass halves that the centering
    // places outside the domain are dropped here and restored pro rata by the
    // normalization; spline overshoot can produce small negatives, clamped
    // first.
    let mut masses = vec![0.0; fine_m1 * fine_m2];
    for i1 in 0..fine_m1 {
        for i2 in 0..fine_m2 {
            let v = edge_cdf[(i1 + 1) * ne2 + (i2 + 1)] - edge_cdf[i1 * ne2 + (i2 + 1)]
                - edge_cdf[(i1 + 1) * ne2 + i2]
                + edge_cdf[i1 * ne2 + i2];
            masses[i1 * fine_m2 + i2] = v.max(0.0);
        }
    }

    RefinedDensity::from_masses(fine_grid, masses, !use_spline && (m1 > 1 || m2 > 1))
}

/// Chain controls for [`metropolis_sample`].
///
/// Chains of at least 1000 steps are recommended for statistical use.
#[derive(Debug, Clone, Copy)]
pub struct McmcConfig {
    chain_length: usize,
    burn_in: usize,
    seed: u64,
}

impl McmcConfig {
    pub fn new(chain_length: usize, burn_in: usize, seed: u64) -> Result<Self> {
        if chain_length == 0 {
            return Err(Error::Config("chain length must be positive".into()));
        }
        if burn_in >= chain_length {
            return Err(Error::Config(format!(
                "burn-in {burn_in} must be shorter than the chain length {chain_length}"
            )));
        }
        Ok(Self { chain_length, burn_in, seed })
    }

    /// Burn-in fixed at 10% of the chain length.
    pub fn with_default_burn_in(chain_length: usize, seed: u64) -> Result<Self> {
        Self::new(chain_length, chain_length / 10, seed)
    }

    pub fn chain_length(&self) -> usize {
        self.chain_length
    }
    pub fn burn_in(&self) -> usize {
        self.burn_in
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Parameter samples, in chain order for MCMC output.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    points: Vec<ParameterPoint>,
}

impl SampleSet {
    pub fn from_points(points: Vec<ParameterPoint>) -> Self {
        Self { points }
    }

    pub fn points(&self) -> &[ParameterPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Every `stride`-th point, starting from the first.
    pub fn thinned(&self, stride: usize) -> Result<SampleSet> {
        if stride == 0 {
            return Err(Error::Domain("thinning stride must be at least 1".into()));
        }
        Ok(SampleSet {
            points: self.points.iter().copied().step_by(stride).collect(),
        })
    }
}

/// Acceptance bookkeeping for one chain.
#[derive(Debug, Clone, Copy)]
pub struct SamplerReport {
    pub accepted: usize,
    pub chain_length: usize,
    pub acceptance_rate: f64,
}

/// Independence Metropolis chain targeting the refined density.
///
/// Proposals are uniform over the domain rectangle; a proposal q' is
/// accepted with probability min{1, f(q')/f(q)} using nearest-node lookup.
/// The chain starts at the highest-density node, and the state after each of
/// the first `burn_in` steps is discarded, so `chain_length - burn_in`
/// points are returned. Identical config and seed reproduce the sample set
/// bit for bit.
pub fn metropolis_sample(
    density: &RefinedDensity,
    config: &McmcConfig,
) -> Result<(SampleSet, SamplerReport)> {
    let grid = density.fine_grid();
    let d = grid.domain();
    let start = density
        .densities
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(j, _)| j)
        .unwrap();
    let mut f_cur = density.densities[start];
    if f_cur <= 0.0 {
        return Err(Error::Domain("density is identically zero".into()));
    }
    let mut cur = grid.node(start);

    let mut rng = Rng::new(config.seed);
    let mut accepted = 0usize;
    let mut points = Vec::with_capacity(config.chain_length - config.burn_in);
    for step in 0..config.chain_length {
        let c1 = rng.uniform_in(d.q1_min(), d.q1_max());
        let c2 = rng.uniform_in(d.q2_min(), d.q2_max());
        let f_new = density.density_at(c1, c2);
        let u = rng.uniform();
        if u < f_new / f_cur {
            cur = ParameterPoint::new(c1, c2).expect("proposal inside the domain");
            f_cur = f_new;
            accepted += 1;
        }
        if step >= config.burn_in {
            points.push(cur);
        }
    }
    let report = SamplerReport {
        accepted,
        chain_length: config.chain_length,
        acceptance_rate: accepted as f64 / config.chain_length as f64,
    };
    Ok((SampleSet::from_points(points), report))
}
