//! Two-sample goodness-of-fit tests for two-dimensional samples.
//!
//! The main test generalizes the Kolmogorov-Smirnov statistic to the plane
//! following Peacock's construction: at every corner in the Cartesian
//! product of pooled x and pooled y coordinates, and for each of the four
//! quadrant orientations, the empirical quadrant probabilities of the two
//! samples are compared; D is the largest absolute difference. With
//! n̂ = n1·n2/(n1+n2) and Z = √n̂·D, the small-sample corrected statistic is
//! Z_∞ = Z / (1 − 0.53·n̂^(−0.9)) and the approximate two-sided p-value is
//! min{1, 2·exp(−2(Z_∞ − 1/2)²)}.
//!
//! The corner scan is written as two plane sweeps (one per x-side), each
//! O(corners · pooled-y) with integer counts, so the result is exactly the
//! brute-force quadrant enumeration at a fraction of the cost.

use crate::error::{Error, Result};
use crate::sampler::SampleSet;

/// Full K-S test output.
#[derive(Debug, Clone, Copy)]
pub struct KsResult {
    /// Largest quadrant discrepancy over all corners and orientations.
    pub d_stat: f64,
    /// Effective sample size n1·n2/(n1+n2).
    pub n_hat: f64,
    /// √n̂·D.
    pub z_n: f64,
    /// Small-sample corrected statistic.
    pub z_inf: f64,
    /// Approximate two-sided p-value, clamped to [0, 1].
    pub p_value: f64,
}

/// Largest discrepancy over quadrants with the x-condition `x <= corner_x`
/// (counting `y <= corner_y` and `y >= corner_y` quadrants at every corner).
/// Points carry their y-rank in the pooled order; both slices are sorted by
/// x ascending. The `x >= corner_x` side is obtained by calling this with
/// negated x values.
fn sweep_side(
    corner_xs: &[f64],
    p1: &[(f64, usize)],
    p2: &[(f64, usize)],
    n_ranks: usize,
    n1: f64,
    n2: f64,
) -> f64 {
    let mut c1 = vec![0u32; n_ranks];
    let mut c2 = vec![0u32; n_ranks];
    let mut t1 = 0u32;
    let mut t2 = 0u32;
    let mut i1 = 0usize;
    let mut i2 = 0usize;
    let mut best = 0.0f64;
    for &cx in corner_xs {
        while i1 < p1.len() && p1[i1].0 <= cx {
            c1[p1[i1].1] += 1;
            t1 += 1;
            i1 += 1;
        }
        while i2 < p2.len() && p2[i2].0 <= cx {
            c2[p2[i2].1] += 1;
            t2 += 1;
            i2 += 1;
        }
        let mut le1 = 0u32;
        let mut le2 = 0u32;
        for r in 0..n_ranks {
            let below1 = le1;
            let below2 = le2;
            le1 += c1[r];
            le2 += c2[r];
            let d_le = (f64::from(le1) / n1 - f64::from(le2) / n2).abs();
            let d_ge = (f64::from(t1 - below1) / n1 - f64::from(t2 - below2) / n2).abs();
            best = best.max(d_le).max(d_ge);
        }
    }
    best
}

fn sorted_distinct(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.dedup();
    v
}

/// Peacock's two-dimensional two-sample Kolmogorov-Smirnov test.
///
/// Both samples need more than 10 points for the asymptotic correction to
/// apply.
pub fn ks2d2s(sample1: &SampleSet, sample2: &SampleSet) -> Result<KsResult> {
    for (name, s) in [("sample1", sample1), ("sample2", sample2)] {
        if s.len() <= 10 {
            return Err(Error::Domain(format!(
                "{name} has {} points; both samples need more than 10",
                s.len()
            )));
        }
    }
    let a: Vec<(f64, f64)> = sample1.points().iter().map(|p| (p.q1, p.q2)).collect();
    let b: Vec<(f64, f64)> = sample2.points().iter().map(|p| (p.q1, p.q2)).collect();
    let n1 = a.len() as f64;
    let n2 = b.len() as f64;

    let ys = sorted_distinct(a.iter().chain(&b).map(|p| p.1).collect());
    let rank = |y: f64| ys.partition_point(|&v| v < y);
    let with_ranks = |pts: &[(f64, f64)], negate: bool| -> Vec<(f64, usize)> {
        let mut v: Vec<(f64, usize)> = pts
            .iter()
            .map(|&(x, y)| (if negate { -x } else { x }, rank(y)))
            .collect();
        v.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
        v
    };

    let xs = sorted_distinct(a.iter().chain(&b).map(|p| p.0).collect());
    let d_le = sweep_side(
        &xs,
        &with_ranks(&a, false),
        &with_ranks(&b, false),
        ys.len(),
        n1,
        n2,
    );
    let neg_xs = sorted_distinct(xs.iter().map(|&x| -x).collect());
    let d_ge = sweep_side(
        &neg_xs,
        &with_ranks(&a, true),
        &with_ranks(&b, true),
        ys.len(),
        n1,
        n2,
    );
    let d_stat = d_le.max(d_ge);

    let n_hat = n1 * n2 / (n1 + n2);
    let z_n = n_hat.sqrt() * d_stat;
    let denom = 1.0 - 0.53 * n_hat.powf(-0.9);
    if denom <= 0.0 {
        return Err(Error::Numerical(format!(
            "effective sample size {n_hat} makes the small-sample correction denominator nonpositive"
        )));
    }
    let z_inf = z_n / denom;
    let p_value = (2.0 * (-2.0 * (z_inf - 0.5) * (z_inf - 0.5)).exp()).min(1.0);
    Ok(KsResult { d_stat, n_hat, z_n, z_inf, p_value })
}

/// CDF of the Kolmogorov distribution,
/// F(z) = 1 − 2·Σ_{k≥1} (−1)^(k−1)·exp(−2k²z²), truncated when a term drops
/// below 1e-15. F(0) is 0 by convention.
pub fn kolmogorov_cdf(z: f64) -> Result<f64> {
    if !(z >= 0.0) {
        return Err(Error::Domain(format!("Kolmogorov CDF argument {z} must be nonnegative")));
    }
    if z == 0.0 {
        return Ok(0.0);
    }
    // Below 0.05 the value is under 1e-170, far beneath the series
    // truncation level.
    if z < 0.05 {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    let mut k = 1.0f64;
    loop {
        let term = (-2.0 * k * k * z * z).exp();
        if term < 1e-15 {
            break;
        }
        sum += sign * term;
        sign = -sign;
        k += 1.0;
    }
    Ok((1.0 - 2.0 * sum).clamp(0.0, 1.0))
}

/// Pearson chi-square goodness-of-fit outcome.
#[derive(Debug, Clone, Copy)]
pub struct ChiSquareResult {
    pub statistic: f64,
    /// Degrees of freedom after pooling, bins − 1.
    pub dof: f64,
    pub p_value: f64,
    /// Number of bins actually compared after pooling.
    pub pooled_bins: usize,
}

/// Pearson chi-square test of observed counts against expected counts.
///
/// Adjacent bins are pooled until each pooled bin has expected count at
/// least 5, the usual validity rule for the chi-square approximation.
pub fn chi_square_gof(observed: &[u64], expected: &[f64]) -> Result<ChiSquareResult> {
    if observed.len() != expected.len() || observed.is_empty() {
        return Err(Error::Config(format!(
            "observed ({}) and expected ({}) bin counts must match and be nonempty",
            observed.len(),
            expected.len()
        )));
    }
    if expected.iter().any(|&e| !e.is_finite() || e < 0.0) {
        return Err(Error::Domain("expected counts must be finite and nonnegative".into()));
    }

    let mut pooled: Vec<(f64, f64)> = Vec::new();
    let mut acc_obs = 0.0;
    let mut acc_exp = 0.0;
    for (&o, &e) in observed.iter().zip(expected) {
        acc_obs += o as f64;
        acc_exp += e;
        if acc_exp >= 5.0 {
            pooled.push((acc_obs, acc_exp));
            acc_obs = 0.0;
            acc_exp = 0.0;
        }
    }
    if acc_exp > 0.0 || acc_obs > 0.0 {
        match pooled.last_mut() {
            Some(last) => {
                last.0 += acc_obs;
                last.1 += acc_exp;
            }
            None => pooled.push((acc_obs, acc_exp)),
        }
    }
    if pooled.len() < 2 {
        return Err(Error::Domain(
            "fewer than two bins remain after pooling; the test is undefined".into(),
        ));
    }

    let statistic: f64 = pooled
        .iter()
        .map(|&(o, e)| {
            let d = o - e;
            d * d / e
        })
        .sum();
    let dof = (pooled.len() - 1) as f64;
    let p_value = crate::special::chi_square_sf(statistic, dof)?;
    Ok(ChiSquareResult { statistic, dof, p_value, pooled_bins: pooled.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::ParameterPoint;
    use crate::rng::{derive_seed, Rng};
    use approx::assert_relative_eq;
    use rayon::prelude::*;

    fn sample_from(pairs: &[(f64, f64)]) -> SampleSet {
        SampleSet::from_points(
            pairs
                .iter()
                .map(|&(x, y)| ParameterPoint::new(x, y).unwrap())
                .collect(),
        )
    }

    fn uniform_pairs(rng: &mut Rng, n: usize) -> Vec<(f64, f64)> {
        (0..n).map(|_| (rng.uniform(), rng.uniform())).collect()
    }

    /// Brute-force quadrant enumeration: every pooled (x, y) corner, all four
    /// orientations, direct counting.
    fn naive_d(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
        let n1 = a.len() as f64;
        let n2 = b.len() as f64;
        let xs: Vec<f64> = a.iter().chain(b).map(|p| p.0).collect();
        let ys: Vec<f64> = a.iter().chain(b).map(|p| p.1).collect();
        let mut best = 0.0f64;
        for &cx in &xs {
            for &cy in &ys {
                for (fx, fy) in [(false, false), (false, true), (true, false), (true, true)] {
                    let count = |pts: &[(f64, f64)]| -> f64 {
                        pts.iter()
                            .filter(|p| {
                                let okx = if fx { p.0 >= cx } else { p.0 <= cx };
                                let oky = if fy { p.1 >= cy } else { p.1 <= cy };
                                okx && oky
                            })
                            .count() as f64
                    };
                    best = best.max((count(a) / n1 - count(b) / n2).abs());
                }
            }
        }
        best
    }

    #[test]
    fn sweep_matches_naive_enumeration() {
        let results: Vec<(f64, f64)> = (0..20)
            .into_par_iter()
            .map(|trial| {
                let mut r1 = Rng::new(derive_seed(404, trial * 2));
                let mut r2 = Rng::new(derive_seed(404, trial * 2 + 1));
                let a = uniform_pairs(&mut r1, 100);
                let b = uniform_pairs(&mut r2, 100);
                let fast = ks2d2s(&sample_from(&a), &sample_from(&b)).unwrap().d_stat;
                (fast, naive_d(&a, &b))
            })
            .collect();
        for (fast, slow) in results {
            assert!((fast - slow).abs() <= 1e-12, "sweep {fast} vs naive {slow}");
        }
    }

    #[test]
    fn sweep_matches_naive_with_ties() {
        // Duplicated coordinates exercise the tie-handling conventions.
        let mut rng = Rng::new(7070);
        for _ in 0..10 {
            let gridded = |r: &mut Rng, n: usize| -> Vec<(f64, f64)> {
                (0..n)
                    .map(|_| {
                        (
                            (r.uniform() * 8.0).floor() / 8.0,
                            (r.uniform() * 8.0).floor() / 8.0,
                        )
                    })
                    .collect()
            };
            let a = gridded(&mut rng, 40);
            let b = gridded(&mut rng, 60);
            let fast = ks2d2s(&sample_from(&a), &sample_from(&b)).unwrap().d_stat;
            let slow = naive_d(&a, &b);
            assert!((fast - slow).abs() <= 1e-12, "sweep {fast} vs naive {slow}");
        }
    }

    #[test]
    fn identical_samples_give_zero_d_and_unit_p() {
        let mut rng = Rng::new(11);
        let pts = uniform_pairs(&mut rng, 20);
        let s1 = sample_from(&pts);
        let s2 = sample_from(&pts);
        let r = ks2d2s(&s1, &s2).unwrap();
        assert_eq!(r.d_stat, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn disjoint_supports_give_full_discrepancy() {
        let mut rng = Rng::new(13);
        let a: Vec<(f64, f64)> = (0..50)
            .map(|_| (rng.uniform() * 0.1, rng.uniform() * 0.1))
            .collect();
        let b: Vec<(f64, f64)> = (0..50)
            .map(|_| (0.9 + rng.uniform() * 0.1, 0.9 + rng.uniform() * 0.1))
            .collect();
        let r = ks2d2s(&sample_from(&a), &sample_from(&b)).unwrap();
        assert_eq!(r.d_stat, 1.0);
        assert!(r.p_value < 1e-6, "p = {}", r.p_value);
    }

    #[test]
    fn result_is_symmetric_in_the_samples() {
        let mut r1 = Rng::new(21);
        let mut r2 = Rng::new(22);
        let a = sample_from(&uniform_pairs(&mut r1, 60));
        let b = sample_from(&uniform_pairs(&mut r2, 45));
        let ab = ks2d2s(&a, &b).unwrap();
        let ba = ks2d2s(&b, &a).unwrap();
        assert_eq!(ab.d_stat, ba.d_stat);
        assert_eq!(ab.p_value, ba.p_value);
    }

    #[test]
    fn translation_leaves_d_unchanged() {
        let mut r1 = Rng::new(31);
        let mut r2 = Rng::new(32);
        let a = uniform_pairs(&mut r1, 40);
        let b = uniform_pairs(&mut r2, 40);
        let shift = |pts: &[(f64, f64)]| -> Vec<(f64, f64)> {
            pts.iter().map(|&(x, y)| (x + 0.7, y + 1.3)).collect()
        };
        let base = ks2d2s(&sample_from(&a), &sample_from(&b)).unwrap();
        let moved = ks2d2s(&sample_from(&shift(&a)), &sample_from(&shift(&b))).unwrap();
        assert_eq!(base.d_stat, moved.d_stat);
    }

    #[test]
    fn small_samples_are_rejected_by_name() {
        let mut rng = Rng::new(41);
        let small = sample_from(&uniform_pairs(&mut rng, 10));
        let big = sample_from(&uniform_pairs(&mut rng, 30));
        let err = ks2d2s(&small, &big).unwrap_err();
        assert!(err.to_string().contains("sample1"), "message: {err}");
        let err = ks2d2s(&big, &small).unwrap_err();
        assert!(err.to_string().contains("sample2"), "message: {err}");
    }

    #[test]
    fn same_distribution_rejection_rate_is_conservative() {
        let rejections: usize = (0..100)
            .into_par_iter()
            .map(|trial| {
                let mut r1 = Rng::new(derive_seed(9000, trial * 2));
                let mut r2 = Rng::new(derive_seed(9000, trial * 2 + 1));
                let a = sample_from(&uniform_pairs(&mut r1, 500));
                let b = sample_from(&uniform_pairs(&mut r2, 500));
                usize::from(ks2d2s(&a, &b).unwrap().p_value < 0.05)
            })
            .sum();
        assert!(rejections <= 15, "{rejections} of 100 null pairs rejected at 5%");
    }

    #[test]
    fn kolmogorov_cdf_known_values() {
        assert_eq!(kolmogorov_cdf(0.0).unwrap(), 0.0);
        let v = kolmogorov_cdf(1.358).unwrap();
        assert!((v - 0.9501).abs() < 5e-4, "F(1.358) = {v}");
        assert!((kolmogorov_cdf(5.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(kolmogorov_cdf(-0.1).is_err());
    }

    #[test]
    fn kolmogorov_cdf_is_monotone_in_unit_range() {
        let mut last = 0.0;
        for k in 1..=100 {
            let z = k as f64 * 0.05;
            let v = kolmogorov_cdf(z).unwrap();
            assert!((0.0..=1.0).contains(&v));
            assert!(v >= last, "not monotone at z = {z}");
            last = v;
        }
    }

    #[test]
    fn chi_square_gof_matches_direct_statistic() {
        // All expected counts above 5: no pooling, dof = bins - 1.
        let observed = [18u64, 22, 30, 30];
        let expected = [25.0, 25.0, 25.0, 25.0];
        let r = chi_square_gof(&observed, &expected).unwrap();
        let direct = (49.0 + 9.0 + 25.0 + 25.0) / 25.0;
        assert_relative_eq!(r.statistic, direct, epsilon = 1e-12);
        assert_eq!(r.dof, 3.0);
        assert_eq!(r.pooled_bins, 4);
        let sf = crate::special::chi_square_sf(direct, 3.0).unwrap();
        assert_relative_eq!(r.p_value, sf, epsilon = 1e-15);
    }

    #[test]
    fn chi_square_gof_pools_sparse_bins() {
        // Bins of expected 2 pool in adjacent pairs of 4... still below 5,
        // so groups of three merge: 12 bins of 2 -> pooled bins of 6.
        let observed = [2u64; 12];
        let expected = [2.0; 12];
        let r = chi_square_gof(&observed, &expected).unwrap();
        assert_eq!(r.pooled_bins, 4);
        assert_eq!(r.dof, 3.0);
        assert_relative_eq!(r.statistic, 0.0, epsilon = 1e-12);
        assert_relative_eq!(r.p_value, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn chi_square_gof_validates_input() {
        assert!(chi_square_gof(&[1, 2], &[1.0]).is_err());
        assert!(chi_square_gof(&[], &[]).is_err());
        assert!(chi_square_gof(&[1, 2], &[-1.0, 3.0]).is_err());
        // Everything pools into one bin: undefined test.
        assert!(chi_square_gof(&[3, 1], &[3.0, 1.0]).is_err());
    }
}
