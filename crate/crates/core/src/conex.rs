//! Constraint-extrapolation primal-dual method for stochastic zeroth-order
//! constrained problems.
//!
//! Each iteration `t`:
//!
//! 1. `s = (1 + theta) l(x_t) - theta l(x_{t-1})`, where `l` is a stochastic
//!    linearization of the constraints built one step earlier,
//! 2. `y_{t+1} = [y_t + s / tau]_+`,
//! 3. `x_{t+1} = prox(G_0 + sum_i y_{t+1,i} G_i, x_t, eta)` with two-point
//!    gradient estimates `G_i` at `x_t`,
//!
//! and the output is the `gamma`-weighted average of `x_1..x_T`.
//!
//! Oracle accounting: every point `x_0..x_T` gets one round consisting of
//! the prox-step gradients (`2(m+1)` calls) and a fresh linearization
//! (`2m` calls), which gives [`ledger_expected_calls`] exactly.
//!
//! [`ledger_expected_calls`]: crate::problem::ledger_expected_calls

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::geometry::{domain_diameter, project_nonneg, prox_step, Geometry};
use crate::problem::{aggregate_constants, OracleLedger, ProblemSpec, SmoothnessConstants};
use crate::rng::{Stream, StreamRng, StreamSet};
use crate::smoothing::{
    gradient_variance_bound, two_point_gradient, value_variance_bound, GradientEstimate,
    SmoothingConfig,
};
use crate::Point;

const SCHEDULE_RTOL: f64 = 1e-12;

/// Per-iteration schedules `gamma_t, theta_t, eta_t, tau_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConexParams {
    gamma: Vec<f64>,
    theta: Vec<f64>,
    eta: Vec<f64>,
    tau: Vec<f64>,
}

impl ConexParams {
    /// Validates the schedule conditions
    /// `gamma_t theta_t = gamma_{t-1}`, `gamma_t tau_t <= gamma_{t-1} tau_{t-1}`
    /// and `gamma_t eta_t <= gamma_{t-1} eta_{t-1}`.
    pub fn new(gamma: Vec<f64>, theta: Vec<f64>, eta: Vec<f64>, tau: Vec<f64>) -> Result<Self> {
        let t = gamma.len();
        if t == 0 {
            return Err(Error::Schedule("at least one iteration is required".into()));
        }
        if theta.len() != t || eta.len() != t || tau.len() != t {
            return Err(Error::Schedule("schedules must have equal length".into()));
        }
        let positive = |v: &[f64]| v.iter().all(|x| x.is_finite() && *x > 0.0);
        if !positive(&gamma) || !positive(&eta) || !positive(&tau) {
            return Err(Error::Schedule("gamma, eta and tau must be positive".into()));
        }
        if !theta.iter().all(|x| x.is_finite() && *x >= 0.0) {
            return Err(Error::Schedule("theta must be non-negative".into()));
        }
        for k in 1..t {
            let tol = SCHEDULE_RTOL * gamma[k - 1].abs().max(1.0);
            if (gamma[k] * theta[k] - gamma[k - 1]).abs() > tol {
                return Err(Error::Schedule(format!(
                    "gamma_t theta_t != gamma_(t-1) at t = {k}"
                )));
            }
            if gamma[k] * tau[k] > gamma[k - 1] * tau[k - 1] * (1.0 + SCHEDULE_RTOL) {
                return Err(Error::Schedule(format!(
                    "gamma_t tau_t > gamma_(t-1) tau_(t-1) at t = {k}"
                )));
            }
            if gamma[k] * eta[k] > gamma[k - 1] * eta[k - 1] * (1.0 + SCHEDULE_RTOL) {
                return Err(Error::Schedule(format!(
                    "gamma_t eta_t > gamma_(t-1) eta_(t-1) at t = {k}"
                )));
            }
        }
        Ok(Self {
            gamma,
            theta,
            eta,
            tau,
        })
    }

    /// `gamma_t = theta_t = 1`, constant `eta_t` and `tau_t`.
    pub fn constant(iterations: usize, eta: f64, tau: f64) -> Self {
        Self {
            gamma: vec![1.0; iterations],
            theta: vec![1.0; iterations],
            eta: vec![eta; iterations],
            tau: vec![tau; iterations],
        }
    }

    pub fn iterations(&self) -> usize {
        self.gamma.len()
    }

    pub fn gamma(&self, t: usize) -> f64 {
        self.gamma[t]
    }

    pub fn theta(&self, t: usize) -> f64 {
        self.theta[t]
    }

    pub fn eta(&self, t: usize) -> f64 {
        self.eta[t]
    }

    pub fn tau(&self, t: usize) -> f64 {
        self.tau[t]
    }

    /// Re-checks all schedule conditions plus `eta_t > L_0 + L_f`.
    pub fn validate(&self, constants: &SmoothnessConstants) -> Result<()> {
        Self::new(
            self.gamma.clone(),
            self.theta.clone(),
            self.eta.clone(),
            self.tau.clone(),
        )?;
        let (_, l_f) = aggregate_constants(constants);
        let floor = constants.grad_lipschitz[0] + l_f;
        if let Some((t, eta)) = self.eta.iter().enumerate().find(|(_, e)| **e <= floor) {
            return Err(Error::Schedule(format!(
                "eta_{t} = {eta} does not exceed L_0 + L_f = {floor}"
            )));
        }
        Ok(())
    }
}

/// Step sizes from the aggregate noise quantities:
///
/// ```text
/// eta = max{ sqrt(2T (H^2 + s0^2 + 48 |s|^2)) / D_X, 6 max{2 M_f, 4 |s|} / D_X }
/// tau = max{ sqrt(96 T) s_xf, 2 D_X max{M_f, 4 |s|} }
/// ```
///
/// with `H = h_star`, `s0^2 = sigma0_sq`, `|s| = sigma_nu_norm`,
/// `s_xf = sigma_xf`. Returns `(eta, tau)` before adding `L_0 + L_f`.
pub fn theorem1_step_sizes(
    iterations: usize,
    d_x: f64,
    h_star: f64,
    sigma0_sq: f64,
    sigma_nu_norm: f64,
    sigma_xf: f64,
    m_f: f64,
) -> (f64, f64) {
    let t = iterations as f64;
    let eta = f64::max(
        (2.0 * t * (h_star * h_star + sigma0_sq + 48.0 * sigma_nu_norm * sigma_nu_norm)).sqrt()
            / d_x,
        6.0 * f64::max(2.0 * m_f, 4.0 * sigma_nu_norm) / d_x,
    );
    let tau = f64::max(
        (96.0 * t).sqrt() * sigma_xf,
        2.0 * d_x * f64::max(m_f, 4.0 * sigma_nu_norm),
    );
    (eta, tau)
}

/// The constant schedule `gamma_t = theta_t = 1`, `eta_t = L_0 + L_f + eta`,
/// `tau_t = tau` with `eta, tau` from [`theorem1_step_sizes`].
///
/// `dual_norm_bound` stands in for the unknown optimal dual norm in
/// `H = L_f D_X ||y*|| / 2`.
pub fn theorem1_schedule(
    constants: &SmoothnessConstants,
    d_x: f64,
    iterations: usize,
    dual_norm_bound: f64,
    config: &SmoothingConfig,
    n: usize,
) -> Result<ConexParams> {
    theorem1_schedule_scaled(constants, d_x, iterations, dual_norm_bound, config, n, 1.0)
}

/// [`theorem1_schedule`] with `eta` and `tau` multiplied by `scale`
/// (`eta_t = L_0 + L_f + scale * eta`). The `sqrt(T)` growth is unchanged.
pub fn theorem1_schedule_scaled(
    constants: &SmoothnessConstants,
    d_x: f64,
    iterations: usize,
    dual_norm_bound: f64,
    config: &SmoothingConfig,
    n: usize,
    scale: f64,
) -> Result<ConexParams> {
    if iterations == 0 {
        return Err(Error::Schedule("at least one iteration is required".into()));
    }
    if !(d_x > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "domain diameter must be positive, got {d_x}"
        )));
    }
    if !(scale > 0.0) || !(dual_norm_bound >= 0.0) {
        return Err(Error::InvalidParameter(
            "scale must be positive and dual_norm_bound non-negative".into(),
        ));
    }
    let m = constants.constraint_count();
    if config.nu.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            actual: config.nu.len(),
        });
    }
    let (m_f, l_f) = aggregate_constants(constants);
    let variance = |i: usize, nu: f64| {
        gradient_variance_bound(
            nu,
            constants.grad_lipschitz[i],
            constants.value_lipschitz[i],
            constants.grad_noise[i],
            n,
            d_x,
        )
    };
    let sigma0_sq = variance(0, config.nu0);
    let sigma_nu_norm = (1..=m)
        .map(|i| variance(i, config.nu[i - 1]))
        .sum::<f64>()
        .sqrt();
    let sigma_f_nu_sq = value_variance_bound(constants, config, n);
    let sigma_xf = (sigma_f_nu_sq + d_x * d_x * sigma_nu_norm * sigma_nu_norm).sqrt();
    let h_star = l_f * d_x * dual_norm_bound / 2.0;
    let (eta, tau) =
        theorem1_step_sizes(iterations, d_x, h_star, sigma0_sq, sigma_nu_norm, sigma_xf, m_f);
    let floor = constants.grad_lipschitz[0] + l_f;
    let params = ConexParams::constant(iterations, floor + scale * eta, scale * tau);
    params.validate(constants)?;
    Ok(params)
}

/// Stochastic affine model of the constraints around `base_point`:
/// `z -> base_values + base_grads^T (z - base_point)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linearization {
    pub base_values: DVector<f64>,
    /// `n x m`, column `i` is the estimate for constraint `i + 1`.
    pub base_grads: DMatrix<f64>,
    pub base_point: Point,
}

impl Linearization {
    pub fn evaluate_at(&self, z: &Point) -> Result<DVector<f64>> {
        check_dim(self.base_point.len(), z.len())?;
        Ok(&self.base_values + self.base_grads.tr_mul(&(z - &self.base_point)))
    }

    pub fn constraint_count(&self) -> usize {
        self.base_values.len()
    }
}

/// Independent random streams of one run.
#[derive(Clone, Debug)]
pub struct ConexStreams {
    noise: Vec<StreamRng>,
    direction: Vec<StreamRng>,
    bar_noise: Vec<StreamRng>,
    bar_direction: Vec<StreamRng>,
}

impl ConexStreams {
    pub fn new(seed: u64, functions: usize) -> Self {
        let set = StreamSet::new(seed);
        let make = |f: fn(usize) -> Stream| (0..functions).map(|i| set.stream(f(i))).collect();
        Self {
            noise: make(Stream::Noise),
            direction: make(Stream::Direction),
            bar_noise: make(Stream::BarNoise),
            bar_direction: make(Stream::BarDirection),
        }
    }
}

/// Draws `(xi_bar_i, u_bar_i)` for every constraint at `x` and returns the
/// linearization. The base value is `F_i(x + nu_i u_bar_i, xi_bar_i)`.
pub fn build_linearization(
    problem: &ProblemSpec,
    x: &Point,
    config: &SmoothingConfig,
    streams: &mut ConexStreams,
    ledger: &mut OracleLedger,
) -> Result<Linearization> {
    problem.domain.require_member(x)?;
    let m = problem.constraint_count();
    let n = problem.dim();
    let mut base_values = DVector::zeros(m);
    let mut base_grads = DMatrix::zeros(n, m);
    for i in 1..=m {
        let est = two_point_gradient(
            &problem.oracles[i],
            i,
            x,
            config.radius(i),
            &mut streams.bar_noise[i],
            &mut streams.bar_direction[i],
            ledger,
        )?;
        base_values[i - 1] = est.value_at_shift;
        base_grads.set_column(i - 1, &est.g);
    }
    Ok(Linearization {
        base_values,
        base_grads,
        base_point: x.clone(),
    })
}

/// `s = (1 + theta) l_curr - theta l_prev`, where `l_curr` is `lin_curr`
/// evaluated at `x_curr` and `l_prev` is `lin_prev` evaluated at `x_prev`.
pub fn extrapolate(
    lin_curr: &Linearization,
    x_curr: &Point,
    lin_prev: &Linearization,
    x_prev: &Point,
    theta: f64,
) -> Result<DVector<f64>> {
    check_dim(lin_curr.constraint_count(), lin_prev.constraint_count())?;
    let curr = lin_curr.evaluate_at(x_curr)?;
    let prev = lin_prev.evaluate_at(x_prev)?;
    Ok(extrapolate_values(&curr, &prev, theta))
}

pub fn extrapolate_values(curr: &DVector<f64>, prev: &DVector<f64>, theta: f64) -> DVector<f64> {
    curr * (1.0 + theta) - prev * theta
}

/// `[y + s / tau]_+`.
pub fn dual_update(y: &DVector<f64>, s: &DVector<f64>, tau: f64) -> Result<DVector<f64>> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "dual step tau must be positive, got {tau}"
        )));
    }
    check_dim(y.len(), s.len())?;
    Ok(project_nonneg(&(y + s / tau)))
}

/// Two-point gradient estimates of `f_0..f_m` at one point.
#[derive(Clone, Debug)]
pub struct GradientRound {
    pub estimates: Vec<GradientEstimate>,
}

impl GradientRound {
    /// `G_0 + sum_i y_i G_i`.
    pub fn lagrangian_direction(&self, y: &DVector<f64>) -> Point {
        let mut v = self.estimates[0].g.clone();
        for (i, est) in self.estimates.iter().enumerate().skip(1) {
            let w = y[i - 1];
            if w != 0.0 {
                v.axpy(w, &est.g, 1.0);
            }
        }
        v
    }
}

/// Fresh `(xi, u)` estimates for every function at `x`: `2(m+1)` calls.
pub fn gradient_round(
    problem: &ProblemSpec,
    x: &Point,
    config: &SmoothingConfig,
    streams: &mut ConexStreams,
    ledger: &mut OracleLedger,
) -> Result<GradientRound> {
    let estimates = problem
        .oracles
        .iter()
        .enumerate()
        .map(|(i, oracle)| {
            two_point_gradient(
                oracle,
                i,
                x,
                config.radius(i),
                &mut streams.noise[i],
                &mut streams.direction[i],
                ledger,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GradientRound { estimates })
}

/// Prox descent step on the stochastic Lagrangian:
/// `prox(G_0 + sum_i y_i G_i, x, eta)`, drawing the gradients at `x`.
pub fn primal_update(
    problem: &ProblemSpec,
    x: &Point,
    y: &DVector<f64>,
    config: &SmoothingConfig,
    eta: f64,
    streams: &mut ConexStreams,
    ledger: &mut OracleLedger,
) -> Result<Point> {
    let round = gradient_round(problem, x, config, streams, ledger)?;
    prox_step(
        &Geometry::Euclidean,
        &problem.domain,
        &round.lagrangian_direction(y),
        x,
        eta,
    )
}

/// Running `gamma`-weighted mean of iterates.
#[derive(Clone, Debug, PartialEq)]
pub struct IterateAverage {
    weighted_sum: Point,
    total_weight: f64,
}

impl IterateAverage {
    pub fn new(n: usize) -> Self {
        Self {
            weighted_sum: DVector::zeros(n),
            total_weight: 0.0,
        }
    }

    pub fn push(&mut self, x: &Point, gamma: f64) -> Result<()> {
        if !(gamma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "averaging weight must be positive, got {gamma}"
            )));
        }
        check_dim(self.weighted_sum.len(), x.len())?;
        self.weighted_sum.axpy(gamma, x, 1.0);
        self.total_weight += gamma;
        Ok(())
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    pub fn mean(&self) -> Result<Point> {
        if self.total_weight <= 0.0 {
            return Err(Error::ZeroWeight);
        }
        Ok(&self.weighted_sum / self.total_weight)
    }
}

/// One trace line, written after iteration `iteration` completes.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    /// Cumulative oracle calls.
    pub oracle_calls: u64,
    /// `f_0` at the running average (noiseless when available, otherwise the
    /// noisy base value `F_0(x_t, xi)`).
    pub objective: f64,
    /// `||[f]_+||_2` at the running average (same convention as `objective`).
    pub violation: f64,
    pub dual_norm: f64,
    pub diverged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    /// `true` when `objective`/`violation` are noiseless diagnostics.
    pub noiseless: bool,
    pub diverged: bool,
    pub x_bar: Point,
}

#[derive(Clone, Debug)]
pub struct ConexOutcome {
    pub x_bar: Point,
    pub trace: RunTrace,
    pub ledger: OracleLedger,
    /// Last dual iterate `y_T`.
    pub dual: DVector<f64>,
    pub diverged: bool,
}

/// Mutable state of a run between iterations.
#[derive(Clone, Debug)]
pub struct ConexState {
    pub t: usize,
    pub x_curr: Point,
    pub x_prev: Point,
    pub y: DVector<f64>,
    /// Linearization based at `x_prev`, evaluated at `x_curr` in the next step.
    pub lin_curr: Linearization,
    /// Linearization based at `x_curr`, for the step after next.
    pub lin_next: Linearization,
    /// `l(x_prev)`, the extrapolation anchor.
    pub prev_value: DVector<f64>,
    pub round: GradientRound,
    pub average: IterateAverage,
    pub ledger: OracleLedger,
    streams: ConexStreams,
}

impl ConexState {
    /// Initialization: `x_{-1} = x_0`, `y_0 = 0`, and the first round at `x_0`
    /// whose linearization also plays the role of the one at `x_{-1}`.
    pub fn start(
        problem: &ProblemSpec,
        config: &SmoothingConfig,
        x0: &Point,
        seed: u64,
    ) -> Result<Self> {
        let m = problem.constraint_count();
        check_dim(m, config.nu.len())?;
        config.validate()?;
        problem.domain.require_member(x0)?;
        let mut streams = ConexStreams::new(seed, m + 1);
        let mut ledger = OracleLedger::new(m + 1);
        let round = gradient_round(problem, x0, config, &mut streams, &mut ledger)?;
        let lin = build_linearization(problem, x0, config, &mut streams, &mut ledger)?;
        let prev_value = lin.base_values.clone();
        Ok(Self {
            t: 0,
            x_curr: x0.clone(),
            x_prev: x0.clone(),
            y: DVector::zeros(m),
            lin_curr: lin.clone(),
            lin_next: lin,
            prev_value,
            round,
            average: IterateAverage::new(problem.dim()),
            ledger,
            streams,
        })
    }

    /// One iteration; returns `x_{t+1}`.
    pub fn step(
        &mut self,
        problem: &ProblemSpec,
        params: &ConexParams,
        config: &SmoothingConfig,
    ) -> Result<()> {
        let t = self.t;
        let curr_value = self.lin_curr.evaluate_at(&self.x_curr)?;
        let s = extrapolate_values(&curr_value, &self.prev_value, params.theta(t));
        let y = dual_update(&self.y, &s, params.tau(t))?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue {
                index: 0,
                value: f64::INFINITY,
                point: self.x_curr.iter().copied().collect(),
            });
        }
        let v = self.round.lagrangian_direction(&y);
        let x_next = prox_step(
            &Geometry::Euclidean,
            &problem.domain,
            &v,
            &self.x_curr,
            params.eta(t),
        )?;
        self.average.push(&x_next, params.gamma(t))?;

        let round = gradient_round(problem, &x_next, config, &mut self.streams, &mut self.ledger)?;
        let lin = build_linearization(problem, &x_next, config, &mut self.streams, &mut self.ledger)?;

        self.prev_value = curr_value;
        self.y = y;
        self.x_prev = std::mem::replace(&mut self.x_curr, x_next);
        self.lin_curr = std::mem::replace(&mut self.lin_next, lin);
        self.round = round;
        self.t += 1;
        Ok(())
    }
}

/// Runs `params.iterations()` steps from `x0` with `y_0 = 0`.
///
/// Non-finite values end the run early with `diverged` set; the remaining
/// trace records carry `NaN` metrics and the divergence flag.
pub fn conex_run(
    problem: &ProblemSpec,
    params: &ConexParams,
    config: &SmoothingConfig,
    x0: &Point,
    seed: u64,
) -> Result<ConexOutcome> {
    params.validate(&problem.constants)?;
    let iterations = params.iterations();
    let noiseless = problem.has_reference();
    let mut records = Vec::with_capacity(iterations);

    let mut state = match ConexState::start(problem, config, x0, seed) {
        Ok(s) => s,
        Err(Error::NonFiniteValue { .. }) => {
            return Ok(diverged_outcome(problem, x0, records, iterations, noiseless, 0));
        }
        Err(e) => return Err(e),
    };

    for t in 0..iterations {
        match state.step(problem, params, config) {
            Ok(()) => {}
            Err(Error::NonFiniteValue { .. }) => {
                let x_bar = state.average.mean().unwrap_or_else(|_| x0.clone());
                let mut out = diverged_outcome(
                    problem,
                    &x_bar,
                    records,
                    iterations,
                    noiseless,
                    state.ledger.total(),
                );
                out.ledger = state.ledger;
                out.dual = state.y;
                return Ok(out);
            }
            Err(e) => return Err(e),
        }
        let avg = state.average.mean()?;
        let (objective, violation) = if noiseless {
            (problem.oracles[0].noiseless(&avg), problem.violation(&avg))
        } else {
            noisy_estimates(&state.round)
        };
        records.push(TraceRecord {
            iteration: t,
            oracle_calls: state.ledger.total(),
            objective,
            violation,
            dual_norm: state.y.norm(),
            diverged: false,
        });
    }

    let x_bar = state.average.mean()?;
    Ok(ConexOutcome {
        trace: RunTrace {
            records,
            noiseless,
            diverged: false,
            x_bar: x_bar.clone(),
        },
        x_bar,
        ledger: state.ledger,
        dual: state.y,
        diverged: false,
    })
}

fn noisy_estimates(round: &GradientRound) -> (f64, f64) {
    let objective = round.estimates[0].value_at_base;
    let violation = round.estimates[1..]
        .iter()
        .map(|e| e.value_at_base.max(0.0).powi(2))
        .sum::<f64>()
        .sqrt();
    (objective, violation)
}

fn diverged_outcome(
    problem: &ProblemSpec,
    x_bar: &Point,
    mut records: Vec<TraceRecord>,
    iterations: usize,
    noiseless: bool,
    calls: u64,
) -> ConexOutcome {
    for t in records.len()..iterations {
        records.push(TraceRecord {
            iteration: t,
            oracle_calls: calls,
            objective: f64::NAN,
            violation: f64::NAN,
            dual_norm: f64::NAN,
            diverged: true,
        });
    }
    let m = problem.constraint_count();
    ConexOutcome {
        x_bar: x_bar.clone(),
        trace: RunTrace {
            records,
            noiseless,
            diverged: true,
            x_bar: x_bar.clone(),
        },
        ledger: OracleLedger::new(m + 1),
        dual: DVector::from_element(m, f64::NAN),
        diverged: true,
    }
}

/// `(D_X, M_X)` of the problem domain under the Euclidean geometry.
pub fn problem_diameters(problem: &ProblemSpec) -> (f64, f64) {
    domain_diameter(&Geometry::Euclidean, &problem.domain)
}
