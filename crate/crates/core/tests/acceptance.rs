//! Acceptance gate: eleven end-to-end criteria covering the forward model,
//! the estimator, the sampler, the goodness-of-fit tests, and the evaluation
//! pipeline. Each test prints exactly one `acceptance NN <name>: PASS|FAIL`
//! line; tolerances are pinned next to each criterion.

use std::panic::{catch_unwind, resume_unwind, UnwindSafe};
use std::time::Instant;

use tacmix::estimator::{
    build_dictionary, estimate, objective, AggregateDataset, RegularizationWeights,
    SolverOptions,
};
use tacmix::evaluation::{
    discretize_beta_product, loocv, simulate_aggregate, single_peak_input, SyntheticConfig,
    TrueDistribution,
};
use tacmix::gof::{chi_square_gof, kolmogorov_cdf, ks2d2s};
use tacmix::measures::{
    make_uniform_grid, prohorov_distance, DiscreteMeasure, ParameterDomain, ParameterPoint,
};
use tacmix::pde_forward::{assemble, discretize, filter_kernel, simulate, Episode};
use tacmix::rng::{derive_seed, Rng};
use tacmix::sampler::{metropolis_sample, refine_density, McmcConfig, SampleSet};
use tacmix::special::beta_cdf;

/// Runs one criterion body and prints its single pass/fail line.
fn gate(name: &str, body: impl FnOnce() + UnwindSafe) {
    match catch_unwind(body) {
        Ok(()) => println!("acceptance {name}: PASS"),
        Err(e) => {
            println!("acceptance {name}: FAIL");
            resume_unwind(e);
        }
    }
}

fn point(q1: f64, q2: f64) -> ParameterPoint {
    ParameterPoint::new(q1, q2).unwrap()
}

fn unit_domain() -> ParameterDomain {
    ParameterDomain::new(0.0, 1.0, 0.0, 1.0).unwrap()
}

fn peak_episode(id: &str, n: usize, tau: f64, peak_time: f64, peak_value: f64) -> Episode {
    let u = single_peak_input(n, tau, peak_time, peak_value).unwrap();
    Episode::new(id, tau, u, None).unwrap()
}

#[test]
fn c01_forward_model_oracle() {
    const TOL: f64 = 1e-12;
    gate("01 forward-model oracle", || {
        let sys = assemble(point(1.0, 1.0), 1).unwrap();
        let a = sys.generator();
        let expected_a = [[-10.0, 6.0], [8.0, -6.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!(
                    (a[(i, j)] - expected_a[i][j]).abs() <= TOL,
                    "A[({i},{j})] = {} differs from {}",
                    a[(i, j)],
                    expected_a[i][j]
                );
            }
        }
        let b = sys.input_vector();
        let expected_b = [-2.0, 4.0];
        for i in 0..2 {
            assert!(
                (b[i] - expected_b[i]).abs() <= TOL,
                "B[{i}] = {} differs from {}",
                b[i],
                expected_b[i]
            );
        }
    });
}

#[test]
fn c02_steady_state_law() {
    const REL_TOL: f64 = 1e-4;
    const N_INTERVALS: usize = 32;
    gate("02 steady-state law", || {
        let mut rng = Rng::new(2002);
        let tau = 0.5;
        let n = 400;
        let episode = Episode::new("const", tau, vec![1.0; n], None).unwrap();
        for _ in 0..20 {
            let q = point(rng.uniform_in(0.2, 1.0), rng.uniform_in(0.2, 1.0));
            let dts = discretize(&assemble(q, N_INTERVALS).unwrap(), tau).unwrap();
            let tac = simulate(&dts, &episode).unwrap();
            let last = *tac.values().last().unwrap();
            assert!(
                (last - q.q2).abs() <= REL_TOL * q.q2,
                "steady output {last} is not q2={} within {REL_TOL} relative for q=({},{})",
                q.q2,
                q.q1,
                q.q2
            );
        }
    });
}

#[test]
fn c03_convolution_equivalence() {
    const ABS_TOL: f64 = 1e-10;
    const N_INTERVALS: usize = 64;
    gate("03 convolution equivalence", || {
        let mut rng = Rng::new(2003);
        let tau = 0.1;
        let n = 300;
        for _ in 0..10 {
            let q = point(rng.uniform_in(0.2, 1.0), rng.uniform_in(0.2, 1.0));
            let u: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
            let episode = Episode::new("rand", tau, u.clone(), None).unwrap();
            let dts = discretize(&assemble(q, N_INTERVALS).unwrap(), tau).unwrap();
            let direct = simulate(&dts, &episode).unwrap();
            let kernel = filter_kernel(&dts, n);
            let mut worst = 0.0f64;
            for k in 0..n {
                let conv: f64 = (0..=k).map(|j| kernel[k - j] * u[j]).sum();
                worst = worst.max((conv - direct.values()[k]).abs());
            }
            assert!(
                worst <= ABS_TOL,
                "convolution and state recursion differ by {worst}"
            );
        }
    });
}

#[test]
fn c04_galerkin_convergence() {
    const RATIO_LO: f64 = 2.5;
    const RATIO_HI: f64 = 6.0;
    gate("04 galerkin convergence", || {
        let tau = 0.1;
        let episode = peak_episode("peak", 200, tau, 2.0, 1.0);
        let q = point(0.6, 0.8);
        let output = |n_intervals: usize| {
            let dts = discretize(&assemble(q, n_intervals).unwrap(), tau).unwrap();
            simulate(&dts, &episode).unwrap()
        };
        let sup_diff = |n_intervals: usize| {
            let coarse = output(n_intervals);
            let fine = output(2 * n_intervals);
            coarse
                .values()
                .iter()
                .zip(fine.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max)
        };
        let diffs: Vec<f64> = [8usize, 16, 32, 64].iter().map(|&n| sup_diff(n)).collect();
        for w in diffs.windows(2) {
            assert!(
                w[1] < w[0],
                "refinement differences must decrease monotonically, got {diffs:?}"
            );
            let ratio = w[0] / w[1];
            assert!(
                (RATIO_LO..=RATIO_HI).contains(&ratio),
                "successive difference ratio {ratio} outside [{RATIO_LO}, {RATIO_HI}], diffs {diffs:?}"
            );
        }
    });
}

#[test]
fn c05_estimator_oracle() {
    const ENUM_SLACK: f64 = 1e-6;
    const NODE_WEIGHT_MIN: f64 = 0.999;
    gate("05 estimator oracle", || {
        let domain = ParameterDomain::new(0.2, 1.0, 0.2, 1.0).unwrap();
        let tau = 0.1;

        // Exhaustive 0.01-step simplex search must not beat the solver on
        // three-node problems.
        let grid3 = make_uniform_grid(&domain, 3, 1).unwrap();
        let reg = RegularizationWeights::new(1e-3, 1e-4).unwrap();
        for instance in 0..5u64 {
            let mut rng = Rng::new(derive_seed(2005, instance));
            let raw: Vec<f64> = (0..3).map(|_| rng.uniform() + 1e-3).collect();
            let total: f64 = raw.iter().sum();
            let true_w: Vec<f64> = raw.iter().map(|v| v / total).collect();
            let episode = peak_episode("mix", 80, tau, 2.0, 1.0);
            let mut y = vec![0.0; 80];
            for (j, &w) in true_w.iter().enumerate() {
                let dts = discretize(&assemble(grid3.node(j), 16).unwrap(), tau).unwrap();
                for (k, v) in simulate(&dts, &episode).unwrap().values().iter().enumerate() {
                    y[k] += w * v;
                }
            }
            for v in &mut y {
                *v += 1e-3 * rng.gaussian();
            }
            let dataset =
                AggregateDataset::new(vec![episode.with_output(y).unwrap()]).unwrap();
            let dict = build_dictionary(&grid3, &dataset, 16).unwrap();
            let result = estimate(&dict, &dataset, reg, SolverOptions::default()).unwrap();
            assert!(result.converged, "three-node solve must converge");

            let mut best = f64::INFINITY;
            for i in 0..=100usize {
                for j in 0..=(100 - i) {
                    let k = 100 - i - j;
                    let p = [i as f64 / 100.0, j as f64 / 100.0, k as f64 / 100.0];
                    best = best.min(objective(&dict, &dataset, &p, reg).unwrap());
                }
            }
            assert!(
                result.objective <= best + ENUM_SLACK,
                "solver objective {} exceeds enumeration minimum {} + {ENUM_SLACK}",
                result.objective,
                best
            );
        }

        // Noiseless data generated by one grid node must be attributed to it.
        let grid = make_uniform_grid(&domain, 4, 5).unwrap();
        let true_node = grid.index(2, 4);
        let cfg = SyntheticConfig {
            true_dist: TrueDistribution::Discrete(
                DiscreteMeasure::point_mass(grid.clone(), true_node).unwrap(),
            ),
            path_count: 1,
            noise_std: 0.0,
            seed: 2055,
        };
        let episodes = vec![
            peak_episode("a", 100, tau, 2.0, 1.0),
            peak_episode("b", 100, tau, 3.5, 1.4),
        ];
        let dataset = simulate_aggregate(&episodes, &cfg, 16).unwrap();
        let dict = build_dictionary(&grid, &dataset, 16).unwrap();
        let result = estimate(
            &dict,
            &dataset,
            RegularizationWeights::zero(),
            SolverOptions::default(),
        )
        .unwrap();
        assert!(result.converged, "single-node solve must converge");
        let w = result.measure.weights()[true_node];
        assert!(
            w >= NODE_WEIGHT_MIN,
            "true node carries weight {w}, needs at least {NODE_WEIGHT_MIN}"
        );
    });
}

// The estimated output is exactly linear in q2 (the input operator carries
// the only q2 dependence), so aggregate data identifies, per q1 column, the
// weight mass and its first q2-moment and nothing else; the smoothing penalty
// resolves the remaining degrees of freedom toward monotone-decreasing q2
// profiles, while the Beta(2,5) reference rises from zero to its mode. The
// converged minimizer therefore fails the two-sample distribution test no
// matter how informative the episodes are; this gate records that gap
// honestly rather than weakening the comparison. The solver cap is raised so
// the failure is attributable to the model, never to a truncated solve.
#[test]
fn c06_full_pipeline_distribution_recovery() {
    const TRIALS: usize = 20;
    const MEAN_P_MIN: f64 = 0.01;
    const REJECT_LEVEL: f64 = 0.01;
    const REJECT_FRACTION_MAX: f64 = 0.30;
    gate("06 full-pipeline distribution recovery", || {
        let started = Instant::now();
        let grid = make_uniform_grid(&unit_domain(), 20, 20).unwrap();
        let reg = RegularizationWeights::new(2e-3, 5e-5).unwrap();
        let n_intervals = 128;
        let tau = 0.1;
        // Breath-alcohol inputs in percent units; the regularization weights
        // above are calibrated to outputs of this magnitude.
        let episodes = vec![
            peak_episode("a", 150, tau, 1.5, 0.08),
            peak_episode("b", 150, tau, 2.5, 0.10),
            peak_episode("c", 150, tau, 3.5, 0.06),
        ];
        let opts = SolverOptions { tolerance: 1e-8, max_iterations: 200_000 };

        let mut dict = None;
        let mut p_values = Vec::with_capacity(TRIALS);
        for trial in 0..TRIALS as u64 {
            let cfg = SyntheticConfig {
                true_dist: TrueDistribution::BetaProduct { alpha: 2.0, beta: 5.0 },
                path_count: 100,
                noise_std: 1e-3,
                seed: derive_seed(2006, trial),
            };
            let dataset = simulate_aggregate(&episodes, &cfg, n_intervals).unwrap();
            // The dictionary depends only on the inputs and the grid, which
            // are identical across trials.
            if dict.is_none() {
                dict = Some(build_dictionary(&grid, &dataset, n_intervals).unwrap());
            }
            let result = estimate(dict.as_ref().unwrap(), &dataset, reg, opts).unwrap();
            let refined = refine_density(&result.measure, 4).unwrap();
            let chain = McmcConfig::new(1000 + 500 * 10, 1000, derive_seed(2006, 100 + trial))
                .unwrap();
            let (raw, _) = metropolis_sample(&refined, &chain).unwrap();
            let estimated = raw.thinned(10).unwrap();

            let mut rng = Rng::new(derive_seed(2006, 200 + trial));
            let truth = SampleSet::from_points(
                cfg.true_dist.sample_points(500, &mut rng).unwrap(),
            );
            let ks = ks2d2s(&estimated, &truth).unwrap();
            println!(
                "trial {trial:2}: converged={} iterations={} D={:.4} p={:.4}",
                result.converged, result.iterations, ks.d_stat, ks.p_value
            );
            if trial == 0 {
                let w = result.measure.weights();
                let q2_marginal: Vec<String> = (0..grid.m2())
                    .map(|i2| {
                        let mass: f64 = (0..grid.m1()).map(|i1| w[grid.index(i1, i2)]).sum();
                        format!("{mass:.3}")
                    })
                    .collect();
                println!("trial  0 q2 marginal: {}", q2_marginal.join(" "));
            }
            p_values.push(ks.p_value);
        }
        let mean_p = p_values.iter().sum::<f64>() / p_values.len() as f64;
        let rejections = p_values.iter().filter(|&&p| p < REJECT_LEVEL).count();
        let reject_fraction = rejections as f64 / p_values.len() as f64;
        println!(
            "mean_p={mean_p:.4} rejections={rejections}/{TRIALS} elapsed={:.0}s",
            started.elapsed().as_secs_f64()
        );
        assert!(
            mean_p >= MEAN_P_MIN,
            "mean p-value {mean_p} below {MEAN_P_MIN}: aggregate data does not \
             identify the q2 profile beyond its first moment, so the smoothed \
             minimizer cannot reproduce the reference law"
        );
        assert!(
            reject_fraction <= REJECT_FRACTION_MAX,
            "rejected {rejections}/{TRIALS} trials at level {REJECT_LEVEL}, above {REJECT_FRACTION_MAX}"
        );
    });
}

/// Quadrant-enumeration Peacock statistic: the maximum empirical-probability
/// discrepancy over every corner of the pooled coordinate grid and all four
/// closed quadrant orientations.
fn naive_peacock_d(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let mut xs: Vec<f64> = a.iter().chain(b).map(|p| p.0).collect();
    let mut ys: Vec<f64> = a.iter().chain(b).map(|p| p.1).collect();
    xs.sort_by(|u, v| u.partial_cmp(v).unwrap());
    xs.dedup();
    ys.sort_by(|u, v| u.partial_cmp(v).unwrap());
    ys.dedup();
    let frac = |pts: &[(f64, f64)], cx: f64, cy: f64, le_x: bool, le_y: bool| -> f64 {
        let hits = pts
            .iter()
            .filter(|p| {
                (if le_x { p.0 <= cx } else { p.0 >= cx })
                    && (if le_y { p.1 <= cy } else { p.1 >= cy })
            })
            .count();
        hits as f64 / pts.len() as f64
    };
    let mut best = 0.0f64;
    for &cx in &xs {
        for &cy in &ys {
            for le_x in [true, false] {
                for le_y in [true, false] {
                    let d = (frac(a, cx, cy, le_x, le_y) - frac(b, cx, cy, le_x, le_y)).abs();
                    best = best.max(d);
                }
            }
        }
    }
    best
}

#[test]
fn c07_peacock_ks_verification() {
    const D_TOL: f64 = 1e-12;
    const KOLMOGOROV_REF: f64 = 0.9501;
    const KOLMOGOROV_TOL: f64 = 5e-4;
    gate("07 peacock ks verification", || {
        let mut rng = Rng::new(2007);
        for pair in 0..20 {
            let draw = |rng: &mut Rng| -> Vec<(f64, f64)> {
                (0..100)
                    .map(|_| {
                        if pair % 2 == 0 {
                            (rng.uniform(), rng.uniform())
                        } else {
                            (rng.beta(2.0, 5.0), rng.beta(2.0, 5.0))
                        }
                    })
                    .collect()
            };
            let a = draw(&mut rng);
            let b = draw(&mut rng);
            let to_set = |pts: &[(f64, f64)]| {
                SampleSet::from_points(pts.iter().map(|&(x, y)| point(x, y)).collect())
            };
            let fast = ks2d2s(&to_set(&a), &to_set(&b)).unwrap().d_stat;
            let slow = naive_peacock_d(&a, &b);
            assert!(
                (fast - slow).abs() <= D_TOL,
                "plane-sweep D={fast} vs quadrant enumeration D={slow}"
            );
        }

        let f = kolmogorov_cdf(1.358).unwrap();
        assert!(
            (f - KOLMOGOROV_REF).abs() <= KOLMOGOROV_TOL,
            "Kolmogorov cdf at 1.358 is {f}, expected {KOLMOGOROV_REF} within {KOLMOGOROV_TOL}"
        );

        let same: Vec<ParameterPoint> = (0..100)
            .map(|_| point(rng.uniform(), rng.uniform()))
            .collect();
        let s1 = SampleSet::from_points(same.clone());
        let s2 = SampleSet::from_points(same);
        assert_eq!(
            ks2d2s(&s1, &s2).unwrap().p_value,
            1.0,
            "identical samples must give p = 1"
        );

        let lo = SampleSet::from_points(
            (0..50)
                .map(|_| point(rng.uniform_in(0.0, 0.4), rng.uniform_in(0.0, 0.4)))
                .collect(),
        );
        let hi = SampleSet::from_points(
            (0..50)
                .map(|_| point(rng.uniform_in(0.6, 1.0), rng.uniform_in(0.6, 1.0)))
                .collect(),
        );
        let p = ks2d2s(&lo, &hi).unwrap().p_value;
        assert!(p < 1e-6, "disjoint-support samples gave p = {p}");
    });
}

#[test]
fn c08_mcmc_calibration() {
    const RETAINED: usize = 50_000;
    const THIN: usize = 20;
    const BURN_IN: usize = 5_000;
    const BINS: usize = 10;
    const P_MIN: f64 = 0.01;
    gate("08 mcmc calibration", || {
        let grid = make_uniform_grid(&unit_domain(), 20, 20).unwrap();
        let target = discretize_beta_product(&grid, 2.0, 5.0).unwrap();
        let refined = refine_density(&target, 4).unwrap();
        let chain = McmcConfig::new(BURN_IN + RETAINED * THIN, BURN_IN, 2008).unwrap();
        let (raw, report) = metropolis_sample(&refined, &chain).unwrap();
        let samples = raw.thinned(THIN).unwrap();
        assert_eq!(samples.len(), RETAINED);

        let mut observed = vec![0u64; BINS * BINS];
        for p in samples.points() {
            let b1 = ((p.q1 * BINS as f64).floor() as usize).min(BINS - 1);
            let b2 = ((p.q2 * BINS as f64).floor() as usize).min(BINS - 1);
            observed[b1 * BINS + b2] += 1;
        }
        let mut expected_mass = vec![0.0f64; BINS * BINS];
        for b1 in 0..BINS {
            for b2 in 0..BINS {
                let w = 1.0 / BINS as f64;
                expected_mass[b1 * BINS + b2] = refined
                    .mass_in_rect(
                        b1 as f64 * w,
                        (b1 + 1) as f64 * w,
                        b2 as f64 * w,
                        (b2 + 1) as f64 * w,
                    )
                    .unwrap();
            }
        }
        let total: f64 = expected_mass.iter().sum();
        let expected: Vec<f64> = expected_mass
            .iter()
            .map(|m| m / total * RETAINED as f64)
            .collect();
        let result = chi_square_gof(&observed, &expected).unwrap();
        println!(
            "acceptance_rate={:.3} chi2={:.1} dof={} p={:.4}",
            report.acceptance_rate, result.statistic, result.dof, result.p_value
        );
        assert!(
            result.p_value > P_MIN,
            "chi-square p-value {} is at or below {P_MIN}",
            result.p_value
        );
    });
}

#[test]
fn c09_loocv_trend() {
    const SLACK: f64 = 0.01;
    const SAMPLE_COUNT: usize = 100;
    gate("09 loocv trend", || {
        let started = Instant::now();
        let tau = 0.1;
        // Breath-alcohol inputs in percent units, matching the scale the
        // regularization weights are calibrated to.
        let episodes = vec![
            peak_episode("e1", 150, tau, 1.5, 0.09),
            peak_episode("e2", 150, tau, 2.0, 0.12),
            peak_episode("e3", 150, tau, 2.5, 0.07),
            peak_episode("e4", 150, tau, 3.0, 0.10),
            peak_episode("e5", 150, tau, 3.5, 0.08),
            peak_episode("e6", 150, tau, 4.0, 0.11),
        ];
        let cfg = SyntheticConfig {
            true_dist: TrueDistribution::BetaProduct { alpha: 2.0, beta: 5.0 },
            path_count: 100,
            noise_std: 1e-3,
            seed: 2009,
        };
        let dataset = simulate_aggregate(&episodes, &cfg, 128).unwrap();
        let reg = RegularizationWeights::new(2e-3, 5e-5).unwrap();

        let mut means = Vec::new();
        for (m_axis, n_intervals) in [(2usize, 2usize), (4, 4), (8, 32)] {
            let grid = make_uniform_grid(&unit_domain(), m_axis, m_axis).unwrap();
            let report = loocv(&dataset, &grid, n_intervals, reg, SAMPLE_COUNT, 2009).unwrap();
            let mean = report
                .nrmse_mean
                .expect("every ladder rung must have converged folds");
            println!(
                "M={:3} N={:3} nrmse_mean={mean:.4}",
                report.node_count, report.n_intervals
            );
            means.push(mean);
        }
        println!("elapsed={:.0}s", started.elapsed().as_secs_f64());
        for w in means.windows(2) {
            assert!(
                w[1] <= w[0] + SLACK,
                "nrmse_mean rose from {} to {} beyond the {SLACK} slack, ladder {means:?}",
                w[0],
                w[1]
            );
        }
    });
}

// Consistency needs an identifiable truth: the output is exactly linear in
// q2, so per q1 column only the total mass and first q2-moment are
// determined by data, and a measure supported on the q2 = 1 row is the
// unique one matching its own column masses and moments. The truth here
// places a Beta(2,5)-shaped q1 profile on that row. Episode length grows by
// refining the time partition of a fixed physical window, so the misfit sum
// scales with n while the penalty stays fixed, and the estimate tightens
// toward the truth. The 100-path panel is drawn once per seed and shared
// across rungs, so its sampling error is a constant offset in every rung.
#[test]
fn c10_empirical_consistency() {
    const SLACK: f64 = 0.02;
    const WINDOW: f64 = 12.5;
    gate("10 empirical consistency", || {
        let started = Instant::now();
        let n_intervals = 32;
        let grid = make_uniform_grid(&unit_domain(), 10, 10).unwrap();
        let reg = RegularizationWeights::new(2e-3, 5e-5).unwrap();

        let q1_coords = grid.q1_coords().to_vec();
        let m1 = grid.m1();
        let top_row = grid.m2() - 1;
        let mut weights = vec![0.0; grid.len()];
        for i1 in 0..m1 {
            let lo = if i1 == 0 { 0.0 } else { (q1_coords[i1 - 1] + q1_coords[i1]) / 2.0 };
            let hi = if i1 + 1 == m1 {
                1.0
            } else {
                (q1_coords[i1] + q1_coords[i1 + 1]) / 2.0
            };
            weights[grid.index(i1, top_row)] =
                beta_cdf(2.0, 5.0, hi).unwrap() - beta_cdf(2.0, 5.0, lo).unwrap();
        }
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        let truth = DiscreteMeasure::new(grid.clone(), weights).unwrap();
        let truth_cdf = truth.cdf();

        let mut errors = Vec::new();
        for n in [125usize, 250, 500] {
            let tau = WINDOW / n as f64;
            // Breath-alcohol inputs in percent units, matching the scale the
            // regularization weights are calibrated to.
            let episodes = vec![
                peak_episode("a", n, tau, 1.5, 0.09),
                peak_episode("b", n, tau, 2.5, 0.12),
                peak_episode("c", n, tau, 3.5, 0.07),
            ];
            let cfg = SyntheticConfig {
                true_dist: TrueDistribution::Discrete(truth.clone()),
                path_count: 100,
                noise_std: 1e-3,
                seed: 2010,
            };
            let dataset = simulate_aggregate(&episodes, &cfg, n_intervals).unwrap();
            let dict = build_dictionary(&grid, &dataset, n_intervals).unwrap();
            let opts = SolverOptions { tolerance: 1e-8, max_iterations: 200_000 };
            let result = estimate(&dict, &dataset, reg, opts).unwrap();
            let cdf = result.measure.cdf();
            let mut sup = 0.0f64;
            for i1 in 0..grid.m1() {
                for i2 in 0..grid.m2() {
                    sup = sup.max((cdf.value(i1, i2) - truth_cdf.value(i1, i2)).abs());
                }
            }
            println!("n={n:3} sup_cdf_error={sup:.4} converged={}", result.converged);
            errors.push(sup);
        }
        println!("elapsed={:.0}s", started.elapsed().as_secs_f64());
        for w in errors.windows(2) {
            assert!(
                w[1] <= w[0] + SLACK,
                "sup-norm cdf error rose from {} to {} beyond the {SLACK} slack, errors {errors:?}",
                w[0],
                w[1]
            );
        }
    });
}

#[test]
fn c11_prohorov_point_mass_law() {
    const RESOLUTION: f64 = 1e-4;
    gate("11 prohorov point-mass law", || {
        let mut rng = Rng::new(2011);
        for _ in 0..20 {
            let a = point(rng.uniform_in(0.1, 1.5), rng.uniform_in(0.1, 1.5));
            let b = point(rng.uniform_in(0.1, 1.5), rng.uniform_in(0.1, 1.5));
            let delta = |p: ParameterPoint| {
                let domain =
                    ParameterDomain::new(p.q1 - 0.05, p.q1 + 0.05, p.q2 - 0.05, p.q2 + 0.05)
                        .unwrap();
                let grid = make_uniform_grid(&domain, 1, 1).unwrap();
                DiscreteMeasure::point_mass(grid, 0).unwrap()
            };
            let d = ((a.q1 - b.q1).powi(2) + (a.q2 - b.q2).powi(2)).sqrt();
            let expected = d.min(1.0);
            let rho = prohorov_distance(&delta(a), &delta(b), RESOLUTION).unwrap();
            assert!(
                rho >= expected - 1e-12 && rho <= expected + RESOLUTION + 1e-12,
                "prohorov distance {rho} differs from min(d,1)={expected} beyond the {RESOLUTION} resolution"
            );
        }
    });
}
