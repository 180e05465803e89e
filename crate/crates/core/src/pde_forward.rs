//! Forward model: Galerkin semi-discretization of the diffusion equation and
//! its zero-order-hold time discretization.
//!
//! The continuous model is a one-dimensional parabolic equation on the unit
//! interval. In weak form, the parameter-dependent bilinear form is
//!
//! ```text
//! a(q; phi, psi) = q1 * int_0^1 phi'(eta) psi'(eta) d(eta) + phi(0) psi(0)
//! ```
//!
//! with scalar input u entering at the deep boundary, <B(q) u, psi> =
//! q2 * u * psi(1), and scalar output C psi = psi(0), the value at the skin
//! surface. Discretizing with linear hat functions on the uniform mesh
//! {0, 1/N, ..., 1} yields mass and stiffness matrices plus a rank-one
//! boundary term at the surface node, and the finite-dimensional generator
//!
//! ```text
//! A = -mass^-1 (q1 * stiffness + boundary),    B = q2 * mass^-1 * e_N,
//! ```
//!
//! realized through the Cholesky factor of the mass matrix rather than an
//! explicit inverse. Sampling with period tau under a zero-order hold gives
//! the discrete-time pair A_hat = exp(A tau), B_hat = int_0^tau exp(A s) B ds,
//! both read off one matrix exponential of the augmented block
//! [[A, B], [0, 0]] * tau.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::measures::ParameterPoint;

/// Galerkin matrices and continuous-time state-space operators for one
/// parameter value.
#[derive(Debug, Clone)]
pub struct GalerkinSystem {
    n_intervals: usize,
    q: ParameterPoint,
    mass: DMatrix<f64>,
    stiffness: DMatrix<f64>,
    boundary: DMatrix<f64>,
    generator: DMatrix<f64>,
    input: DVector<f64>,
}

/// Assembles the hat-function Galerkin system with N uniform mesh intervals
/// at parameter value q.
pub fn assemble(q: ParameterPoint, n_intervals: usize) -> Result<GalerkinSystem> {
    if n_intervals == 0 {
        return Err(Error::Domain("mesh must have at least one interval".into()));
    }
    let n = n_intervals + 1;
    let h = 1.0 / n_intervals as f64;

    let mut mass = DMatrix::<f64>::zeros(n, n);
    let mut stiffness = DMatrix::<f64>::zeros(n, n);
    for e in 0..n_intervals {
        // Element matrices of a linear element of width h.
        mass[(e, e)] += h / 3.0;
        mass[(e, e + 1)] += h / 6.0;
        mass[(e + 1, e)] += h / 6.0;
        mass[(e + 1, e + 1)] += h / 3.0;
        stiffness[(e, e)] += 1.0 / h;
        stiffness[(e, e + 1)] -= 1.0 / h;
        stiffness[(e + 1, e)] -= 1.0 / h;
        stiffness[(e + 1, e + 1)] += 1.0 / h;
    }
    let mut boundary = DMatrix::<f64>::zeros(n, n);
    boundary[(0, 0)] = 1.0;

    let chol = nalgebra::Cholesky::new(mass.clone()).ok_or_else(|| {
        Error::Numerical(format!("mass matrix not positive definite at N={n_intervals}"))
    })?;
    let stiff_total = &stiffness * q.q1 + &boundary;
    let generator = -chol.solve(&stiff_total);
    let mut e_last = DVector::<f64>::zeros(n);
    e_last[n - 1] = 1.0;
    let input = chol.solve(&e_last) * q.q2;

    Ok(GalerkinSystem {
        n_intervals,
        q,
        mass,
        stiffness,
        boundary,
        generator,
        input,
    })
}

impl GalerkinSystem {
    pub fn n_intervals(&self) -> usize {
        self.n_intervals
    }
    pub fn q(&self) -> ParameterPoint {
        self.q
    }
    pub fn mass(&self) -> &DMatrix<f64> {
        &self.mass
    }
    pub fn stiffness(&self) -> &DMatrix<f64> {
        &self.stiffness
    }
    pub fn boundary_term(&self) -> &DMatrix<f64> {
        &self.boundary
    }
    /// Continuous-time generator A.
    pub fn generator(&self) -> &DMatrix<f64> {
        &self.generator
    }
    /// Continuous-time input vector B.
    pub fn input_vector(&self) -> &DVector<f64> {
        &self.input
    }
}

/// Discrete-time system (A_hat, B_hat, C_hat) at sampling period tau.
#[derive(Debug, Clone)]
pub struct DiscreteTimeSystem {
    a_hat: DMatrix<f64>,
    b_hat: DVector<f64>,
    c_hat: DVector<f64>,
    tau: f64,
}

/// Zero-order-hold discretization of an assembled system at period tau.
pub fn discretize(system: &GalerkinSystem, tau: f64) -> Result<DiscreteTimeSystem> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::Domain(format!("sampling period must be positive, got {tau}")));
    }
    let n = system.n_intervals + 1;
    // Augmented block [[A, B], [0, 0]]; its exponential carries exp(A tau) in
    // the top-left block and the B_hat integral in the top-right column.
    let mut aug = DMatrix::<f64>::zeros(n + 1, n + 1);
    aug.view_mut((0, 0), (n, n)).copy_from(&system.generator);
    aug.view_mut((0, n), (n, 1)).copy_from(&system.input);
    let exp = (aug * tau).exp();
    if exp.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "matrix exponential overflowed at q=({}, {}), tau={tau}",
            system.q.q1, system.q.q2
        )));
    }
    let a_hat = exp.view((0, 0), (n, n)).into_owned();
    let b_hat = exp.view((0, n), (n, 1)).column(0).into_owned();
    let mut c_hat = DVector::<f64>::zeros(n);
    c_hat[0] = 1.0;
    Ok(DiscreteTimeSystem { a_hat, b_hat, c_hat, tau })
}

impl DiscreteTimeSystem {
    pub fn a_hat(&self) -> &DMatrix<f64> {
        &self.a_hat
    }
    pub fn b_hat(&self) -> &DVector<f64> {
        &self.b_hat
    }
    /// Output functional: selects the state at the surface node eta = 0.
    pub fn c_hat(&self) -> &DVector<f64> {
        &self.c_hat
    }
    pub fn tau(&self) -> f64 {
        self.tau
    }
    pub fn dim(&self) -> usize {
        self.b_hat.len()
    }
}

/// One drinking episode: a sampled scalar input, and optionally the measured
/// output aligned with it.
///
/// Row k of the series covers the hold interval [k tau, (k+1) tau); u_k is
/// the input held there and y_k, when present, the measurement at the end of
/// that interval. The state starts at zero, so outputs are defined from the
/// first step on and both vectors share one length.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    id: String,
    tau: f64,
    input: Vec<f64>,
    output: Option<Vec<f64>>,
}

impl Episode {
    pub fn new(
        id: impl Into<String>,
        tau: f64,
        input: Vec<f64>,
        output: Option<Vec<f64>>,
    ) -> Result<Self> {
        let id = id.into();
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::Domain(format!(
                "episode {id}: sampling period must be positive, got {tau}"
            )));
        }
        if input.is_empty() {
            return Err(Error::Domain(format!("episode {id}: input series is empty")));
        }
        if input.iter().any(|u| !u.is_finite()) {
            return Err(Error::Domain(format!("episode {id}: input contains non-finite values")));
        }
        if let Some(y) = &output {
            if y.len() != input.len() {
                return Err(Error::Config(format!(
                    "episode {id}: output length {} differs from input length {}",
                    y.len(),
                    input.len()
                )));
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!(
                    "episode {id}: output contains non-finite values"
                )));
            }
        }
        Ok(Self { id, tau, input, output })
    }

    pub fn id(&self) -> &str {
        &self.id
    }
    pub fn tau(&self) -> f64 {
        self.tau
    }
    pub fn input(&self) -> &[f64] {
        &self.input
    }
    pub fn output(&self) -> Option<&[f64]> {
        self.output.as_deref()
    }
    pub fn len(&self) -> usize {
        self.input.len()
    }
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Copy of this episode with the measured output replaced.
    pub fn with_output(&self, output: Vec<f64>) -> Result<Self> {
        Self::new(self.id.clone(), self.tau, self.input.clone(), Some(output))
    }

    /// Copy with the input zero-padded to `len` samples and any output
    /// dropped.
    pub fn zero_padded_input(&self, len: usize) -> Result<Self> {
        let mut input = self.input.clone();
        if len < input.len() {
            return Err(Error::Config(format!(
                "episode {}: cannot pad length {} down to {len}",
                self.id,
                input.len()
            )));
        }
        input.resize(len, 0.0);
        Self::new(self.id.clone(), self.tau, input, None)
    }
}

/// Simulated output series at period tau.
#[derive(Debug, Clone, PartialEq)]
pub struct TacSeries {
    tau: f64,
    values: Vec<f64>,
}

impl TacSeries {
    pub fn new(tau: f64, values: Vec<f64>) -> Self {
        Self { tau, values }
    }
    pub fn tau(&self) -> f64 {
        self.tau
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Relative mismatch allowed between sampling periods that must agree.
pub(crate) const TAU_REL_TOL: f64 = 1e-12;

pub(crate) fn tau_consistent(a: f64, b: f64) -> bool {
    (a - b).abs() <= TAU_REL_TOL * a.abs().max(b.abs())
}

/// Runs the discrete-time system over an episode's input from the zero
/// initial state: x_{k+1} = A_hat x_k + B_hat u_k, y_{k+1} = x_{k+1}[0].
pub fn simulate(system: &DiscreteTimeSystem, episode: &Episode) -> Result<TacSeries> {
    if !tau_consistent(system.tau, episode.tau) {
        return Err(Error::Config(format!(
            "episode {} has tau={} but the system was discretized at tau={}",
            episode.id, episode.tau, system.tau
        )));
    }
    let mut x = DVector::<f64>::zeros(system.dim());
    let mut values = Vec::with_capacity(episode.len());
    for &u in &episode.input {
        x = &system.a_hat * x + &system.b_hat * u;
        values.push(x[0]);
    }
    Ok(TacSeries { tau: system.tau, values })
}

/// First n samples of the impulse response h_k = C A_hat^(k-1) B_hat,
/// k = 1..n. The full output is the causal convolution of h with the input.
pub fn filter_kernel(system: &DiscreteTimeSystem, n: usize) -> Vec<f64> {
    let mut v = system.b_hat.clone();
    let mut h = Vec::with_capacity(n);
    for k in 0..n {
        if k > 0 {
            v = &system.a_hat * v;
        }
        h.push(v[0]);
    }
    h
}
