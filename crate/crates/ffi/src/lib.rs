//! C ABI over the tacmix library: opaque handles, integer status codes, and
//! a thread-local last-error message.
//!
//! Conventions: every fallible call returns [`TacmixStatus`]; `Ok` means all
//! out-parameters were written. On any other status the out-parameters are
//! untouched and [`tacmix_last_error`] describes the failure. Handles are
//! created and released by the matching `_new`/`_free` pair; `_free` accepts
//! null. Panics never cross the boundary; they convert to `NumericalError`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use tacmix::error::Error;
use tacmix::estimator::{
    build_dictionary, estimate, AggregateDataset, RegularizationWeights, SolverOptions,
};
use tacmix::gof::{kolmogorov_cdf, ks2d2s};
use tacmix::measures::{
    make_uniform_grid, prohorov_distance, DiscreteMeasure, ParameterDomain, ParameterGrid,
    ParameterPoint,
};
use tacmix::pde_forward::{assemble, discretize, simulate, Episode};
use tacmix::sampler::{metropolis_sample, refine_density, McmcConfig, SampleSet};

/// Result code of every fallible call in this ABI.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TacmixStatus {
    /// The call succeeded and all out-parameters are valid.
    Ok = 0,
    /// A computation failed to converge or left the representable range.
    NumericalError = 1,
    /// Arguments were malformed: null pointers, bad bounds, or shape errors.
    InvalidInput = 2,
}

/// Uniform rectangular grid of candidate parameter nodes.
pub struct TacmixGrid {
    inner: ParameterGrid,
}

/// Collection of input/output episodes sharing one sampling interval.
pub struct TacmixDataset {
    tau: f64,
    episodes: Vec<Episode>,
}

/// Probability weights on the nodes of a grid.
pub struct TacmixMeasure {
    inner: DiscreteMeasure,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let safe = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(safe).unwrap_or_default();
    });
}

fn fail(status: TacmixStatus, message: &str) -> TacmixStatus {
    set_error(message);
    status
}

fn fail_err(e: &Error) -> TacmixStatus {
    let status = match e {
        Error::Numerical(_) => TacmixStatus::NumericalError,
        _ => TacmixStatus::InvalidInput,
    };
    fail(status, &e.to_string())
}

fn invalid(message: &str) -> TacmixStatus {
    fail(TacmixStatus::InvalidInput, message)
}

/// Runs a body, converting panics into `NumericalError`.
fn guarded(body: impl FnOnce() -> TacmixStatus) -> TacmixStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => fail(
            TacmixStatus::NumericalError,
            "internal panic; the handle state is unchanged",
        ),
    }
}

/// Returns the library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tacmix_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Returns the calling thread's last error message, or an empty string.
///
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tacmix_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Creates a uniform `m1` x `m2` grid on `[q1_min, q1_max] x [q2_min, q2_max]`.
///
/// # Safety
/// `out` must be a valid pointer. On `Ok` it receives a handle to release
/// with [`tacmix_grid_free`].
#[no_mangle]
pub unsafe extern "C" fn tacmix_grid_new(
    q1_min: f64,
    q1_max: f64,
    q2_min: f64,
    q2_max: f64,
    m1: usize,
    m2: usize,
    out: *mut *mut TacmixGrid,
) -> TacmixStatus {
    guarded(|| {
        if out.is_null() {
            return invalid("out is null");
        }
        let domain = match ParameterDomain::new(q1_min, q1_max, q2_min, q2_max) {
            Ok(d) => d,
            Err(e) => return fail_err(&e),
        };
        match make_uniform_grid(&domain, m1, m2) {
            Ok(inner) => {
                out.write(Box::into_raw(Box::new(TacmixGrid { inner })));
                TacmixStatus::Ok
            }
            Err(e) => fail_err(&e),
        }
    })
}

/// Releases a grid handle. Null is ignored.
///
/// # Safety
/// `grid` must be null or a pointer returned by [`tacmix_grid_new`] that has
/// not been freed already.
#[no_mangle]
pub unsafe extern "C" fn tacmix_grid_free(grid: *mut TacmixGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Creates an empty dataset whose episodes are sampled every `tau` time
/// units.
///
/// # Safety
/// `out` must be a valid pointer. On `Ok` it receives a handle to release
/// with [`tacmix_dataset_free`].
#[no_mangle]
pub unsafe extern "C" fn tacmix_dataset_new(
    tau: f64,
    out: *mut *mut TacmixDataset,
) -> TacmixStatus {
    guarded(|| {
        if out.is_null() {
            return invalid("out is null");
        }
        if !(tau.is_finite() && tau > 0.0) {
            return invalid(&format!("tau must be finite and positive, got {tau}"));
        }
        out.write(Box::into_raw(Box::new(TacmixDataset {
            tau,
            episodes: Vec::new(),
        })));
        TacmixStatus::Ok
    })
}

/// Appends one episode with `len` input and measured-output samples.
///
/// # Safety
/// `dataset` must be a live handle; `id` must be a NUL-terminated string;
/// `input` and `output` must point to `len` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn tacmix_dataset_add_episode(
    dataset: *mut TacmixDataset,
    id: *const c_char,
    input: *const f64,
    output: *const f64,
    len: usize,
) -> TacmixStatus {
    guarded(|| {
        if dataset.is_null() || id.is_null() || input.is_null() || output.is_null() {
            return invalid("dataset, id, input, and output must be non-null");
        }
        let ds = &mut *dataset;
        let id = match CStr::from_ptr(id).to_str() {
            Ok(s) => s.to_owned(),
            Err(_) => return invalid("id is not valid UTF-8"),
        };
        let input = slice::from_raw_parts(input, len).to_vec();
        let output = slice::from_raw_parts(output, len).to_vec();
        match Episode::new(id, ds.tau, input, Some(output)) {
            Ok(ep) => {
                ds.episodes.push(ep);
                TacmixStatus::Ok
            }
            Err(e) => fail_err(&e),
        }
    })
}

/// Releases a dataset handle. Null is ignored.
///
/// # Safety
/// `dataset` must be null or a pointer returned by [`tacmix_dataset_new`]
/// that has not been freed already.
#[no_mangle]
pub unsafe extern "C" fn tacmix_dataset_free(dataset: *mut TacmixDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Simulates the forward model for parameters `(q1, q2)` on one input
/// signal, writing one output sample per input sample.
///
/// # Safety
/// `input` must point to `len` readable doubles and `out_values` to `len`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn tacmix_simulate(
    q1: f64,
    q2: f64,
    n_intervals: usize,
    tau: f64,
    input: *const f64,
    len: usize,
    out_values: *mut f64,
) -> TacmixStatus {
    guarded(|| {
        if input.is_null() || out_values.is_null() {
            return invalid("input and out_values must be non-null");
        }
        let q = match ParameterPoint::new(q1, q2) {
            Ok(q) => q,
            Err(e) => return fail_err(&e),
        };
        let u = slice::from_raw_parts(input, len).to_vec();
        let run = || -> Result<Vec<f64>, Error> {
            let episode = Episode::new("ffi", tau, u, None)?;
            let dts = discretize(&assemble(q, n_intervals)?, tau)?;
            Ok(simulate(&dts, &episode)?.values().to_vec())
        };
        match run() {
            Ok(values) => {
                for (k, v) in values.iter().enumerate() {
                    out_values.add(k).write(*v);
                }
                TacmixStatus::Ok
            }
            Err(e) => fail_err(&e),
        }
    })
}

/// Fits node weights to the dataset by regularized least squares on the
/// probability simplex.
///
/// Diagnostics pointers may be null. If the solver stops at its iteration
/// cap, the fitted measure is still returned: with a non-null
/// `out_converged` the call reports `Ok` and writes `false`; with a null
/// `out_converged` it reports `NumericalError` so the caller cannot miss the
/// condition.
///
/// # Safety
/// `dataset` and `grid` must be live handles; `out_measure` must be a valid
/// pointer, and on `Ok` it receives a handle to release with
/// [`tacmix_measure_free`].
#[no_mangle]
pub unsafe extern "C" fn tacmix_estimate(
    dataset: *const TacmixDataset,
    grid: *const TacmixGrid,
    n_intervals: usize,
    w1: f64,
    w2: f64,
    out_measure: *mut *mut TacmixMeasure,
    out_objective: *mut f64,
    out_iterations: *mut usize,
    out_converged: *mut bool,
) -> TacmixStatus {
    guarded(|| {
        if dataset.is_null() || grid.is_null() || out_measure.is_null() {
            return invalid("dataset, grid, and out_measure must be non-null");
        }
        let ds = &*dataset;
        let g = &*grid;
        let run = || -> Result<tacmix::estimator::EstimateResult, Error> {
            let reg = RegularizationWeights::new(w1, w2)?;
            let aggregate = AggregateDataset::new(ds.episodes.clone())?;
            let dict = build_dictionary(&g.inner, &aggregate, n_intervals)?;
            estimate(&dict, &aggregate, reg, SolverOptions::default())
        };
        match run() {
            Ok(result) => {
                if !result.converged && out_converged.is_null() {
                    return fail(
                        TacmixStatus::NumericalError,
                        "estimate stopped at the iteration cap before reaching tolerance",
                    );
                }
                if !out_objective.is_null() {
                    out_objective.write(result.objective);
                }
                if !out_iterations.is_null() {
                    out_iterations.write(result.iterations);
                }
                if !out_converged.is_null() {
                    out_converged.write(result.converged);
                }
                out_measure.write(Box::into_raw(Box::new(TacmixMeasure {
                    inner: result.measure,
                })));
                TacmixStatus::Ok
            }
            Err(e) => fail_err(&e),
        }
    })
}

/// Number of grid nodes carried by a measure; 0 for a null handle.
///
/// # Safety
/// `measure` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tacmix_measure_len(measure: *const TacmixMeasure) -> usize {
    if measure.is_null() {
        0
    } else {
        (*measure).inner.grid().len()
    }
}

/// Reads node `j` of a measure: its coordinates and probability weight.
///
/// # Safety
/// `measure` must be a live handle; `out_q1`, `out_q2`, and `out_weight`
/// must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn tacmix_measure_get(
    measure: *const TacmixMeasure,
    j: usize,
    out_q1: *mut f64,
    out_q2: *mut f64,
    out_weight: *mut f64,
) -> TacmixStatus {
    guarded(|| {
        if measure.is_null() || out_q1.is_null() || out_q2.is_null() || out_weight.is_null() {
            return invalid("measure and all out-pointers must be non-null");
        }
        let m = &(*measure).inner;
        if j >= m.grid().len() {
            return invalid(&format!(
                "node index {j} is out of range for a {}-node grid",
                m.grid().len()
            ));
        }
        let node = m.grid().node(j);
        out_q1.write(node.q1);
        out_q2.write(node.q2);
        out_weight.write(m.weights()[j]);
        TacmixStatus::Ok
    })
}

/// Releases a measure handle. Null is ignored.
///
/// # Safety
/// `measure` must be null or a pointer produced by this library that has
/// not been freed already.
#[no_mangle]
pub unsafe extern "C" fn tacmix_measure_free(measure: *mut TacmixMeasure) {
    if !measure.is_null() {
        drop(Box::from_raw(measure));
    }
}

/// Draws `count` Metropolis samples from the spline-refined density of a
/// measure, writing interleaved `q1,q2` pairs (2 x `count` doubles).
///
/// The chain runs `burn_in + count * thin` steps from the given seed; equal
/// arguments reproduce the samples bit for bit.
///
/// # Safety
/// `measure` must be a live handle and `out_points` must point to
/// `2 * count` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn tacmix_sample(
    measure: *const TacmixMeasure,
    refine_factor: usize,
    count: usize,
    thin: usize,
    burn_in: usize,
    seed: u64,
    out_points: *mut f64,
) -> TacmixStatus {
    guarded(|| {
        if measure.is_null() || out_points.is_null() {
            return invalid("measure and out_points must be non-null");
        }
        if count == 0 || thin == 0 {
            return invalid("count and thin must be at least 1");
        }
        let m = &(*measure).inner;
        let run = || -> Result<SampleSet, Error> {
            let refined = refine_density(m, refine_factor)?;
            let config = McmcConfig::new(burn_in + count * thin, burn_in, seed)?;
            let (raw, _) = metropolis_sample(&refined, &config)?;
            raw.thinned(thin)
        };
        match run() {
            Ok(samples) => {
                for (k, p) in samples.points().iter().enumerate() {
                    out_points.add(2 * k).write(p.q1);
                    out_points.add(2 * k + 1).write(p.q2);
                }
                TacmixStatus::Ok
            }
            Err(e) => fail_err(&e),
        }
    })
}

fn sample_set_from_pairs(pairs: &[f64]) -> Result<SampleSet, Error> {
    let points = pairs
        .chunks_exact(2)
        .map(|c| ParameterPoint::new(c[0], c[1]))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SampleSet::from_points(points))
}

/// Two-sample two-dimensional Kolmogorov-Smirnov test on interleaved
/// `q1,q2` pairs (`a` holds `2 x a_len` doubles, likewise `b`).
///
/// # Safety
/// `a` and `b` must point to `2 x a_len` and `2 x b_len` readable doubles;
/// `out_d` and `out_p` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn tacmix_ks2d2s(
    a: *const f64,
    a_len: usize,
    b: *const f64,
    b_len: usize,
    out_d: *mut f64,
    out_p: *mut f64,
) -> TacmixStatus {
    guarded(|| {
        if a.is_null() || b.is_null() || out_d.is_null() || out_p.is_null() {
            return invalid("samples and out-pointers must be non-null");
        }
        let run = || -> Result<tacmix::gof::KsResult, Error> {
            let sa = sample_set_from_pairs(slice::from_raw_parts(a, 2 * a_len))?;
            let sb = sample_set_from_pairs(slice::from_raw_parts(b, 2 * b_len))?;
            ks2d2s(&sa, &sb)
        };
        match run() {
            Ok(ks) => {
                out_d.write(ks.d_stat);
                out_p.write(ks.p_value);
                TacmixStatus::Ok
            }
            Err(e) => fail_err(&e),
        }
    })
}

/// Kolmogorov distribution CDF at `z`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tacmix_kolmogorov_cdf(z: f64, out: *mut f64) -> TacmixStatus {
    guarded(|| {
        if out.is_null() {
            return invalid("out is null");
        }
        match kolmogorov_cdf(z) {
            Ok(v) => {
                out.write(v);
                TacmixStatus::Ok
            }
            Err(e) => fail_err(&e),
        }
    })
}

/// Prohorov distance between two measures, scanned at `resolution` steps
/// and capped at 1.
///
/// # Safety
/// `p` and `q` must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tacmix_prohorov_distance(
    p: *const TacmixMeasure,
    q: *const TacmixMeasure,
    resolution: f64,
    out: *mut f64,
) -> TacmixStatus {
    guarded(|| {
        if p.is_null() || q.is_null() || out.is_null() {
            return invalid("p, q, and out must be non-null");
        }
        match prohorov_distance(&(*p).inner, &(*q).inner, resolution) {
            Ok(v) => {
                out.write(v);
                TacmixStatus::Ok
            }
            Err(e) => fail_err(&e),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;
    use std::ptr;

    fn last_error_string() -> String {
        unsafe { CStr::from_ptr(tacmix_last_error()) }
            .to_str()
            .unwrap()
            .to_owned()
    }

    #[test]
    fn version_matches_the_package() {
        let v = unsafe { CStr::from_ptr(tacmix_version()) }.to_str().unwrap();
        assert_eq!(v, env!("CARGO_PKG_VERSION"));
    }

    #[test]
    fn null_arguments_are_rejected_with_a_message() {
        let status = unsafe { tacmix_grid_new(0.0, 1.0, 0.0, 1.0, 2, 2, ptr::null_mut()) };
        assert_eq!(status, TacmixStatus::InvalidInput);
        assert_eq!(last_error_string(), "out is null");

        let mut out = ptr::null_mut();
        let status = unsafe { tacmix_grid_new(1.0, 0.0, 0.0, 1.0, 2, 2, &mut out) };
        assert_eq!(status, TacmixStatus::InvalidInput);
        assert!(last_error_string().contains("min < max"));
    }

    #[test]
    fn simulate_writes_one_output_per_input() {
        let input = vec![1.0; 50];
        let mut output = vec![0.0; 50];
        let status = unsafe {
            tacmix_simulate(
                0.6,
                0.8,
                16,
                0.5,
                input.as_ptr(),
                input.len(),
                output.as_mut_ptr(),
            )
        };
        assert_eq!(status, TacmixStatus::Ok);
        // Constant unit input settles at q2.
        assert!((output[49] - 0.8).abs() < 1e-3, "got {}", output[49]);
    }

    #[test]
    fn estimate_and_sample_recover_a_single_node_through_the_abi() {
        let tau = 0.1;
        let n = 80;
        let mut grid = ptr::null_mut();
        let status = unsafe { tacmix_grid_new(0.2, 1.0, 0.2, 1.0, 3, 4, &mut grid) };
        assert_eq!(status, TacmixStatus::Ok);

        // Generate the measured output from one grid node via the ABI's own
        // forward simulation.
        let domain = ParameterDomain::new(0.2, 1.0, 0.2, 1.0).unwrap();
        let rust_grid = make_uniform_grid(&domain, 3, 4).unwrap();
        let true_node = rust_grid.index(1, 3);
        let truth = rust_grid.node(true_node);
        let input: Vec<f64> = (0..n)
            .map(|k| {
                let t = k as f64 * tau;
                (t / 2.0) * (1.0 - t / 2.0).exp()
            })
            .collect();
        let mut output = vec![0.0; n];
        let status = unsafe {
            tacmix_simulate(
                truth.q1,
                truth.q2,
                16,
                tau,
                input.as_ptr(),
                n,
                output.as_mut_ptr(),
            )
        };
        assert_eq!(status, TacmixStatus::Ok);

        let mut dataset = ptr::null_mut();
        assert_eq!(
            unsafe { tacmix_dataset_new(tau, &mut dataset) },
            TacmixStatus::Ok
        );
        let id = CString::new("ep").unwrap();
        let status = unsafe {
            tacmix_dataset_add_episode(dataset, id.as_ptr(), input.as_ptr(), output.as_ptr(), n)
        };
        assert_eq!(status, TacmixStatus::Ok);

        let mut measure = ptr::null_mut();
        let mut objective = f64::NAN;
        let mut iterations = 0usize;
        let mut converged = false;
        let status = unsafe {
            tacmix_estimate(
                dataset,
                grid,
                16,
                0.0,
                0.0,
                &mut measure,
                &mut objective,
                &mut iterations,
                &mut converged,
            )
        };
        assert_eq!(status, TacmixStatus::Ok);
        assert!(converged);
        assert!(objective.is_finite());
        assert!(iterations > 0);
        assert_eq!(unsafe { tacmix_measure_len(measure) }, 12);

        let mut best = (0usize, -1.0f64);
        for j in 0..12 {
            let (mut q1, mut q2, mut w) = (0.0, 0.0, 0.0);
            let status =
                unsafe { tacmix_measure_get(measure, j, &mut q1, &mut q2, &mut w) };
            assert_eq!(status, TacmixStatus::Ok);
            if w > best.1 {
                best = (j, w);
            }
        }
        assert_eq!(best.0, true_node, "largest weight sits on the true node");
        assert!(best.1 > 0.99, "true node weight is {}", best.1);

        let mut points = vec![0.0f64; 2 * 50];
        let status = unsafe {
            tacmix_sample(measure, 4, 50, 10, 500, 42, points.as_mut_ptr())
        };
        assert_eq!(status, TacmixStatus::Ok);
        assert!(points.iter().all(|v| v.is_finite()));
        let mut points2 = vec![0.0f64; 2 * 50];
        let status = unsafe {
            tacmix_sample(measure, 4, 50, 10, 500, 42, points2.as_mut_ptr())
        };
        assert_eq!(status, TacmixStatus::Ok);
        assert_eq!(points, points2, "same seed reproduces samples exactly");

        let mut j_oob = (0.0, 0.0, 0.0);
        let status = unsafe {
            tacmix_measure_get(measure, 12, &mut j_oob.0, &mut j_oob.1, &mut j_oob.2)
        };
        assert_eq!(status, TacmixStatus::InvalidInput);
        assert!(last_error_string().contains("out of range"));

        unsafe {
            tacmix_measure_free(measure);
            tacmix_dataset_free(dataset);
            tacmix_grid_free(grid);
        }
    }

    #[test]
    fn ks_test_and_kolmogorov_cdf_cross_the_boundary() {
        let pairs: Vec<f64> = (0..100)
            .flat_map(|k| {
                let t = k as f64 / 99.0;
                [t, (1.3 * t).fract()]
            })
            .collect();
        let (mut d, mut p) = (f64::NAN, f64::NAN);
        let status = unsafe {
            tacmix_ks2d2s(pairs.as_ptr(), 100, pairs.as_ptr(), 100, &mut d, &mut p)
        };
        assert_eq!(status, TacmixStatus::Ok);
        assert_eq!(d, 0.0);
        assert_eq!(p, 1.0);

        let mut f = f64::NAN;
        assert_eq!(
            unsafe { tacmix_kolmogorov_cdf(1.358, &mut f) },
            TacmixStatus::Ok
        );
        assert!((f - 0.9501).abs() < 5e-4);

        let status = unsafe {
            tacmix_ks2d2s(pairs.as_ptr(), 3, pairs.as_ptr(), 3, &mut d, &mut p)
        };
        assert_eq!(status, TacmixStatus::InvalidInput);
        assert!(last_error_string().contains("more than 10"));
    }

    #[test]
    fn prohorov_distance_between_point_masses_is_the_capped_metric() {
        let make = |q1: f64, q2: f64| -> *mut TacmixMeasure {
            let domain =
                ParameterDomain::new(q1 - 0.01, q1 + 0.01, q2 - 0.01, q2 + 0.01).unwrap();
            let grid = make_uniform_grid(&domain, 1, 1).unwrap();
            Box::into_raw(Box::new(TacmixMeasure {
                inner: DiscreteMeasure::point_mass(grid, 0).unwrap(),
            }))
        };
        let p = make(0.3, 0.4);
        let q = make(0.6, 0.8);
        let mut rho = f64::NAN;
        let status = unsafe { tacmix_prohorov_distance(p, q, 1e-4, &mut rho) };
        assert_eq!(status, TacmixStatus::Ok);
        let d = 0.5f64; // hypot(0.3, 0.4)
        assert!(rho >= d - 1e-12 && rho <= d + 1e-4 + 1e-12, "rho = {rho}");
        unsafe {
            tacmix_measure_free(p);
            tacmix_measure_free(q);
        }
    }
}
