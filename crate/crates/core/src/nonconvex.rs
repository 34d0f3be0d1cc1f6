//! Proximal-point outer loop for nonconvex constrained problems and KKT
//! residuals.
//!
//! Outer step `k` solves, with the constraint extrapolation method,
//!
//! ```text
//! min f_0(x) + 2 mu_0 W(x, x_{k-1})  s.t.  f_i(x) + 2 mu_i W(x, x_{k-1}) <= 0
//! ```
//!
//! and the output is `x_k` for `k` drawn uniformly from `1..=K`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::conex::{conex_run, problem_diameters, theorem1_schedule_scaled, ConexParams, RunTrace};
use crate::error::{check_dim, Error, Result};
use crate::geometry::{bregman_divergence, Geometry};
use crate::problem::{ProblemSpec, ScalarFunction, SmoothnessConstants, StochasticOracle};
use crate::rng::{derive_seed, Stream, StreamSet};
use crate::smoothing::SmoothingConfig;
use crate::Point;

/// Floor for the default regularization weights.
pub const MU_FLOOR: f64 = 1e-6;

/// Inner step sizes for the regularized subproblems.
#[derive(Clone, Debug, PartialEq)]
pub enum InnerSchedule {
    /// The same explicit schedule for every subproblem.
    Fixed(ConexParams),
    /// The scaled theorem schedule computed from each subproblem's constants.
    Theorem1 {
        iterations: usize,
        dual_norm_bound: f64,
        scale: f64,
    },
}

impl InnerSchedule {
    pub fn iterations(&self) -> usize {
        match self {
            InnerSchedule::Fixed(p) => p.iterations(),
            InnerSchedule::Theorem1 { iterations, .. } => *iterations,
        }
    }

    fn resolve(&self, problem: &ProblemSpec, config: &SmoothingConfig) -> Result<ConexParams> {
        match self {
            InnerSchedule::Fixed(p) => Ok(p.clone()),
            InnerSchedule::Theorem1 {
                iterations,
                dual_norm_bound,
                scale,
            } => {
                let (d_x, _) = problem_diameters(problem);
                theorem1_schedule_scaled(
                    &problem.constants,
                    d_x,
                    *iterations,
                    *dual_norm_bound,
                    config,
                    problem.dim(),
                    *scale,
                )
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProximalConfig {
    pub mu0: f64,
    /// One weight per constraint.
    pub mu: Vec<f64>,
    /// Outer iterations `K`.
    pub outer_iterations: usize,
    pub inner: InnerSchedule,
}

impl ProximalConfig {
    /// `mu_i = max(L_i, MU_FLOOR)` for every function, which makes each
    /// regularized function convex under the Euclidean prox-function.
    pub fn with_default_weights(
        constants: &SmoothnessConstants,
        outer_iterations: usize,
        inner: InnerSchedule,
    ) -> Result<Self> {
        let mu: Vec<f64> = constants
            .grad_lipschitz
            .iter()
            .map(|l| l.max(MU_FLOOR))
            .collect();
        let cfg = Self {
            mu0: mu[0],
            mu: mu[1..].to_vec(),
            outer_iterations,
            inner,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.mu0) || !self.mu.iter().all(|m| ok(*m)) {
            return Err(Error::InvalidParameter(
                "regularization weights must be positive".into(),
            ));
        }
        if self.outer_iterations == 0 {
            return Err(Error::InvalidParameter(
                "at least one outer iteration is required".into(),
            ));
        }
        if self.inner.iterations() == 0 {
            return Err(Error::InvalidParameter(
                "at least one inner iteration is required".into(),
            ));
        }
        Ok(())
    }

    /// Weight of function `i` (objective at index 0).
    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 {
            self.mu0
        } else {
            self.mu[i - 1]
        }
    }
}

/// `f(x) + weight * W(x, center)`.
#[derive(Debug)]
pub struct Regularized {
    inner: Arc<dyn ScalarFunction>,
    center: Point,
    weight: f64,
    geometry: Geometry,
}

impl ScalarFunction for Regularized {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn value(&self, x: &Point) -> f64 {
        let w = bregman_divergence(&self.geometry, x, &self.center).unwrap_or(f64::NAN);
        self.inner.value(x) + self.weight * w
    }

    fn gradient(&self, x: &Point) -> Option<Point> {
        let g = self.inner.gradient(x)?;
        Some(g + self.geometry.divergence_gradient(x, &self.center) * self.weight)
    }

    fn has_reference(&self) -> bool {
        self.inner.has_reference()
    }
}

/// The subproblem at `center`: every oracle gains `2 mu_i W(., center)`,
/// `L_i += 2 mu_i L_omega` and `M_i += 2 mu_i sup_X ||x - center||`.
pub fn regularize(
    problem: &ProblemSpec,
    center: &Point,
    config: &ProximalConfig,
    geom: &Geometry,
) -> Result<ProblemSpec> {
    check_dim(problem.constraint_count(), config.mu.len())?;
    problem.domain.require_member(center)?;
    let spread = problem.domain.farthest_distance(center);
    let mut constants = problem.constants.clone();
    let oracles = problem
        .oracles
        .iter()
        .enumerate()
        .map(|(i, o)| {
            let weight = 2.0 * config.weight(i);
            constants.grad_lipschitz[i] += weight * geom.smoothness();
            constants.value_lipschitz[i] += weight * spread;
            StochasticOracle::new(
                Arc::new(Regularized {
                    inner: o.function.clone(),
                    center: center.clone(),
                    weight,
                    geometry: *geom,
                }),
                o.noise,
            )
        })
        .collect();
    ProblemSpec::new(oracles, problem.domain.clone(), constants)
}

/// Noiseless KKT residuals of `(x, y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct KktReport {
    /// `d(grad f_0 + sum_i y_i grad f_i + N_X(x), 0)`.
    pub stationarity: f64,
    /// `sum_i |y_i f_i(x)|`.
    pub complementarity: f64,
    /// `||[f(x)]_+||_2`.
    pub violation: f64,
    pub dual: DVector<f64>,
}

impl KktReport {
    /// Largest of the three residuals.
    pub fn max_residual(&self) -> f64 {
        self.stationarity.max(self.complementarity).max(self.violation)
    }
}

fn gradients(problem: &ProblemSpec, x: &Point) -> Result<Vec<Point>> {
    problem
        .oracles
        .iter()
        .enumerate()
        .map(|(i, o)| o.function.gradient(x).ok_or(Error::GradientUnavailable(i)))
        .collect()
}

pub fn kkt_residual(problem: &ProblemSpec, x: &Point, y: &DVector<f64>) -> Result<KktReport> {
    check_dim(problem.constraint_count(), y.len())?;
    problem.domain.require_member(x)?;
    let grads = gradients(problem, x)?;
    let mut g = grads[0].clone();
    for (i, gi) in grads.iter().enumerate().skip(1) {
        g.axpy(y[i - 1], gi, 1.0);
    }
    let values = problem.constraint_values(x);
    Ok(KktReport {
        stationarity: problem.domain.normal_cone_residual(x, &g)?.norm(),
        complementarity: y.iter().zip(values.iter()).map(|(a, b)| (a * b).abs()).sum(),
        violation: values.iter().map(|v| v.max(0.0).powi(2)).sum::<f64>().sqrt(),
        dual: y.clone(),
    })
}

const DUAL_ITERATIONS: usize = 1000;

/// Stationarity-minimizing multipliers: `argmin_{y >= 0} d(g_0 + J y + N_X(x), 0)`
/// by accelerated projected gradient with step `1 / ||J||_2^2`.
///
/// Always returns the best iterate found.
pub fn estimate_dual_for_kkt(problem: &ProblemSpec, x: &Point) -> Result<DVector<f64>> {
    problem.domain.require_member(x)?;
    let grads = gradients(problem, x)?;
    let m = problem.constraint_count();
    if m == 0 {
        return Ok(DVector::zeros(0));
    }
    let n = problem.dim();
    let jac = DMatrix::from_fn(n, m, |r, c| grads[c + 1][r]);
    let g0 = &grads[0];
    let residual = |y: &DVector<f64>| -> Result<Point> {
        problem.domain.normal_cone_residual(x, &(g0 + &jac * y))
    };
    let lipschitz = jac.norm_squared().max(f64::MIN_POSITIVE);
    let step = 1.0 / lipschitz;

    let mut best = DVector::zeros(m);
    let mut best_value = residual(&best)?.norm();
    let mut y = best.clone();
    let mut z = best.clone();
    let mut t = 1.0f64;
    for _ in 0..DUAL_ITERATIONS {
        let r = residual(&z)?;
        let y_next = (&z - jac.tr_mul(&r) * step).map(|v| v.max(0.0));
        let value = residual(&y_next)?.norm();
        if value < best_value {
            best_value = value;
            best.copy_from(&y_next);
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = &y_next + (&y_next - &y) * ((t - 1.0) / t_next);
        y = y_next;
        t = t_next;
    }
    Ok(best)
}

/// KKT residuals at `x` with multipliers from [`estimate_dual_for_kkt`].
pub fn kkt_report_at(problem: &ProblemSpec, x: &Point) -> Result<KktReport> {
    let y = estimate_dual_for_kkt(problem, x)?;
    kkt_residual(problem, x, &y)
}

/// KKT residuals at the point `x'` obtained by moving the coordinates of `x`
/// within `delta` of the boundary onto it, with [`estimate_dual_for_kkt`]
/// multipliers. Also returns `||x' - x||`.
///
/// Small residuals here certify that `x` lies within `||x' - x||` of a
/// nearly critical point even when `x` itself sits just inside a face, where
/// the pointwise residual jumps to the full gradient.
pub fn nearby_kkt_report(problem: &ProblemSpec, x: &Point, delta: f64) -> Result<(KktReport, f64)> {
    if !(delta >= 0.0) {
        return Err(Error::InvalidParameter("delta must be >= 0".into()));
    }
    problem.domain.require_member(x)?;
    let snapped = problem.domain.snap_to_faces(x, delta);
    let report = kkt_report_at(problem, &snapped)?;
    Ok((report, (&snapped - x).norm()))
}

#[derive(Clone, Debug)]
pub struct MetaOutcome {
    /// `x_k` for the randomly drawn `k`.
    pub x_hat: Point,
    /// The drawn index, in `1..=K`.
    pub k_hat: usize,
    /// `x_0..x_K`.
    pub iterates: Vec<Point>,
    /// Reports at `x_0..x_K`; empty when gradients are unavailable.
    pub reports: Vec<KktReport>,
    /// `argmin_k` stationarity over `1..=K`, when reports exist.
    pub best_index: Option<usize>,
    pub traces: Vec<RunTrace>,
    pub oracle_calls: u64,
    pub diverged: bool,
}

impl MetaOutcome {
    pub fn best_stationarity(&self) -> Option<f64> {
        self.best_index.map(|k| self.reports[k].stationarity)
    }
}

/// Runs `K` regularized subproblems from `x0`; each inner run starts from
/// the current center. Inner seeds and `k_hat` come from the trial stream.
pub fn meta_run(
    problem: &ProblemSpec,
    prox: &ProximalConfig,
    config: &SmoothingConfig,
    x0: &Point,
    seed: u64,
) -> Result<MetaOutcome> {
    prox.validate()?;
    problem.domain.require_member(x0)?;
    let geom = Geometry::Euclidean;
    let with_reports = gradients(problem, x0).is_ok();
    let mut trial = StreamSet::new(seed).stream(Stream::Trial);

    let mut iterates = vec![x0.clone()];
    let mut reports = Vec::new();
    if with_reports {
        reports.push(kkt_report_at(problem, x0)?);
    }
    let mut traces = Vec::with_capacity(prox.outer_iterations);
    let mut calls = 0;
    let mut diverged = false;
    for k in 1..=prox.outer_iterations {
        let center = iterates[k - 1].clone();
        let sub = regularize(problem, &center, prox, &geom)?;
        let params = prox.inner.resolve(&sub, config)?;
        let inner_seed = derive_seed(seed, trial.random::<u64>());
        let out = conex_run(&sub, &params, config, &center, inner_seed)?;
        calls += out.ledger.total();
        diverged |= out.diverged;
        let next = if out.diverged { center } else { out.x_bar };
        if with_reports {
            reports.push(kkt_report_at(problem, &next)?);
        }
        iterates.push(next);
        traces.push(out.trace);
    }
    let k_hat = trial.random_range(1..=prox.outer_iterations);
    let best_index = (!reports.is_empty()).then(|| {
        (1..reports.len())
            .min_by(|a, b| reports[*a].stationarity.total_cmp(&reports[*b].stationarity))
            .unwrap_or(0)
    });
    Ok(MetaOutcome {
        x_hat: iterates[k_hat].clone(),
        k_hat,
        iterates,
        reports,
        best_index,
        traces,
        oracle_calls: calls,
        diverged,
    })
}

/// Minimum Hessian eigenvalue of `x^T A x + b^T x + c + mu ||x - c'||^2`,
/// namely `lambda_min(2A) + 2 mu`.
pub fn regularized_min_curvature(a: &DMatrix<f64>, mu: f64) -> f64 {
    let sym = (a + a.transpose()) * 0.5;
    let lambda_min = sym.symmetric_eigenvalues().min();
    2.0 * lambda_min + 2.0 * mu
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Domain;
    use crate::problem::{Affine, NoiseModel};
    use crate::rng::StreamSet;
    use rand_distr::{Distribution, StandardNormal};

    fn v(xs: &[f64]) -> Point {
        DVector::from_column_slice(xs)
    }

    #[derive(Debug)]
    struct Quad {
        a: DMatrix<f64>,
        b: Point,
        c: f64,
    }

    impl ScalarFunction for Quad {
        fn dim(&self) -> usize {
            self.b.len()
        }
        fn value(&self, x: &Point) -> f64 {
            x.dot(&(&self.a * x)) + self.b.dot(x) + self.c
        }
        fn gradient(&self, x: &Point) -> Option<Point> {
            Some(&self.a * x * 2.0 + &self.b)
        }
    }

    fn problem(fs: Vec<Arc<dyn ScalarFunction>>, domain: Domain, l: Vec<f64>) -> ProblemSpec {
        let k = fs.len();
        let c = SmoothnessConstants::new(l, vec![1.0; k], vec![0.0; k], vec![0.0; k]).unwrap();
        ProblemSpec::new(
            fs.into_iter()
                .map(|f| StochasticOracle::new(f, NoiseModel::none()))
                .collect(),
            domain,
            c,
        )
        .unwrap()
    }

    fn quad(a: DMatrix<f64>, b: Point, c: f64) -> Arc<dyn ScalarFunction> {
        Arc::new(Quad { a, b, c })
    }

    fn fixed(t: usize, eta: f64, tau: f64) -> InnerSchedule {
        InnerSchedule::Fixed(ConexParams::constant(t, eta, tau))
    }

    #[test]
    fn regularizer_examples() {
        let p = problem(
            vec![Arc::new(Affine::new(v(&[1.0, -1.0]), 0.3))],
            Domain::cube(2, 3.0).unwrap(),
            vec![0.0],
        );
        let center = v(&[0.0, 0.0]);
        let geom = Geometry::Euclidean;
        let tiny = ProximalConfig {
            mu0: 1e-12,
            mu: vec![],
            outer_iterations: 1,
            inner: fixed(1, 1.0, 1.0),
        };
        let r = regularize(&p, &center, &tiny, &geom).unwrap();
        let x = v(&[1.5, -2.0]);
        assert!((r.oracles[0].noiseless(&x) - p.oracles[0].noiseless(&x)).abs() < 1e-9);
        assert_eq!(r.oracles[0].noiseless(&center), p.oracles[0].noiseless(&center));

        let unit = ProximalConfig { mu0: 1.0, ..tiny };
        let r = regularize(&p, &center, &unit, &geom).unwrap();
        let x = v(&[2.0, 0.0]);
        assert!((r.oracles[0].noiseless(&x) - p.oracles[0].noiseless(&x) - 4.0).abs() < 1e-12);
        assert_eq!(r.constants.grad_lipschitz[0], 2.0);
        assert!((r.constants.value_lipschitz[0] - (1.0 + 2.0 * (18f64).sqrt())).abs() < 1e-12);
        assert!(regularize(&p, &v(&[9.0, 0.0]), &unit, &geom).is_err());
    }

    #[test]
    fn regularized_gradient_matches_finite_difference() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, -2.0]);
        let p = problem(
            vec![quad(a, v(&[0.5, -0.1]), 0.0)],
            Domain::cube(2, 1.0).unwrap(),
            vec![4.0],
        );
        let cfg =
            ProximalConfig::with_default_weights(&p.constants, 1, fixed(1, 100.0, 1.0)).unwrap();
        let r = regularize(&p, &v(&[0.2, 0.1]), &cfg, &Geometry::Euclidean).unwrap();
        let x = v(&[-0.3, 0.4]);
        let g = r.oracles[0].function.gradient(&x).unwrap();
        let h = 1e-6;
        for j in 0..2 {
            let mut e = DVector::zeros(2);
            e[j] = h;
            let fd = (r.oracles[0].noiseless(&(&x + &e)) - r.oracles[0].noiseless(&(&x - &e)))
                / (2.0 * h);
            assert!((fd - g[j]).abs() < 1e-6);
        }
    }

    #[test]
    fn default_weights_make_subproblems_convex() {
        let mut rng = StreamSet::new(8).stream(Stream::Aux(0));
        for _ in 0..20 {
            let g = DMatrix::from_fn(6, 6, |_, _| StandardNormal.sample(&mut rng));
            let a: DMatrix<f64> = (&g + g.transpose()) * 0.5;
            let l = 2.0 * a.symmetric_eigenvalues().amax();
            assert!(regularized_min_curvature(&a, l.max(MU_FLOOR)) >= 0.0);
        }
    }

    #[test]
    fn kkt_residual_examples() {
        // f0 = ||x - 0.2||^2 with unconstrained minimizer inside the box
        let target = v(&[0.2, -0.1]);
        let b = -&target * 2.0;
        let f0 = quad(DMatrix::identity(2, 2), b, target.norm_squared());
        let f1 = Arc::new(Affine::new(v(&[1.0, 0.0]), -0.9));
        let p = problem(vec![f0, f1], Domain::cube(2, 1.0).unwrap(), vec![2.0, 0.0]);
        let r = kkt_residual(&p, &target, &v(&[0.0])).unwrap();
        assert!(r.stationarity < 1e-6);
        assert_eq!(r.complementarity, 0.0);
        assert_eq!(r.violation, 0.0);
        let probe = v(&[0.95, 0.0]);
        let r = kkt_residual(&p, &probe, &v(&[0.0])).unwrap();
        assert_eq!(r.complementarity, 0.0);
        assert!((r.violation - 0.05).abs() < 1e-12);
        assert!(kkt_residual(&p, &v(&[2.0, 0.0]), &v(&[0.0])).is_err());
    }

    #[test]
    fn dual_estimate_examples() {
        // grad f0 = -grad f1 at every point
        let f0 = Arc::new(Affine::new(v(&[1.0, 2.0]), 0.0));
        let f1 = Arc::new(Affine::new(v(&[-1.0, -2.0]), 0.0));
        let p = problem(vec![f0, f1], Domain::cube(2, 1.0).unwrap(), vec![0.0, 0.0]);
        let y = estimate_dual_for_kkt(&p, &v(&[0.1, 0.1])).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-6);

        let f0 = Arc::new(Affine::new(v(&[0.0, 0.0]), 1.0));
        let f1 = Arc::new(Affine::new(v(&[3.0, 1.0]), 0.0));
        let p = problem(vec![f0, f1], Domain::cube(2, 1.0).unwrap(), vec![0.0, 0.0]);
        let y = estimate_dual_for_kkt(&p, &v(&[0.0, 0.0])).unwrap();
        assert_eq!(y, v(&[0.0]));
    }

    #[test]
    fn dual_estimate_matches_grid_search() {
        let mut rng = StreamSet::new(21).stream(Stream::Aux(1));
        let n = 4;
        let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };
        for _ in 0..5 {
            let fs: Vec<Arc<dyn ScalarFunction>> = (0..3)
                .map(|_| {
                    Arc::new(Affine::new(DVector::from_fn(n, |_, _| gauss()), 0.0))
                        as Arc<dyn ScalarFunction>
                })
                .collect();
            let p = problem(fs, Domain::cube(n, 1.0).unwrap(), vec![0.0; 3]);
            let x = DVector::from_fn(n, |_, _| 0.5 * gauss().tanh());
            let y = estimate_dual_for_kkt(&p, &x).unwrap();
            let got = kkt_residual(&p, &x, &y).unwrap().stationarity;
            let mut best = f64::INFINITY;
            let steps = 400;
            for a in 0..=steps {
                for b in 0..=steps {
                    let yy = v(&[10.0 * a as f64 / steps as f64, 10.0 * b as f64 / steps as f64]);
                    best = best.min(kkt_residual(&p, &x, &yy).unwrap().stationarity);
                }
            }
            assert!(got <= best + 1e-3, "{got} vs grid {best}");
        }
    }

    #[test]
    fn single_outer_step_is_one_regularized_run() {
        let f0 = quad(DMatrix::identity(1, 1), v(&[-1.0]), 0.0);
        let f1 = Arc::new(Affine::new(v(&[1.0]), -0.2));
        let p = problem(vec![f0, f1], Domain::cube(1, 1.0).unwrap(), vec![2.0, 0.0]);
        let smoothing = SmoothingConfig::uniform(1e-3, 1).unwrap();
        let cfg =
            ProximalConfig::with_default_weights(&p.constants, 1, fixed(300, 20.0, 1.0)).unwrap();
        let x0 = v(&[0.0]);
        let out = meta_run(&p, &cfg, &smoothing, &x0, 5).unwrap();
        assert_eq!(out.k_hat, 1);
        assert_eq!(out.iterates.len(), 2);
        assert_eq!(out.reports.len(), 2);

        let mut trial = StreamSet::new(5).stream(Stream::Trial);
        let inner_seed = derive_seed(5, trial.random::<u64>());
        let sub = regularize(&p, &x0, &cfg, &Geometry::Euclidean).unwrap();
        let direct = conex_run(
            &sub,
            &ConexParams::constant(300, 20.0, 1.0),
            &smoothing,
            &x0,
            inner_seed,
        )
        .unwrap();
        assert_eq!(direct.x_bar, out.x_hat);
    }

    #[test]
    fn meta_run_is_deterministic_and_approaches_a_critical_point() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, -1.5]);
        let l = 2.0 * a.symmetric_eigenvalues().amax();
        let f0 = quad(a, v(&[0.3, 0.2]), 0.0);
        let f1 = quad(DMatrix::identity(2, 2) * 0.5, v(&[0.1, 0.0]), -1.0);
        let p = problem(vec![f0, f1], Domain::cube(2, 1.0).unwrap(), vec![l, 1.0]);
        let smoothing = SmoothingConfig::uniform(1e-3, 1).unwrap();
        let cfg =
            ProximalConfig::with_default_weights(&p.constants, 8, fixed(500, 40.0, 2.0)).unwrap();
        let x0 = v(&[0.0, 0.0]);
        let a1 = meta_run(&p, &cfg, &smoothing, &x0, 77).unwrap();
        let a2 = meta_run(&p, &cfg, &smoothing, &x0, 77).unwrap();
        assert_eq!(a1.k_hat, a2.k_hat);
        assert_eq!(a1.x_hat, a2.x_hat);
        assert_eq!(a1.iterates, a2.iterates);
        let last = a1.iterates.last().unwrap();
        assert!(p.oracles[0].function.value(last) < p.oracles[0].function.value(&x0));
        let (near, moved) = nearby_kkt_report(&p, last, 0.05).unwrap();
        assert!(moved <= 0.05 * 2f64.sqrt());
        assert!(near.stationarity < 0.1 * a1.reports[0].stationarity, "{near:?}");
        assert!(a1.reports.iter().all(|r| r.stationarity >= 0.0
            && r.complementarity >= 0.0
            && r.violation >= 0.0));
    }

    #[test]
    fn nearby_report_snaps_onto_faces() {
        // min -x_1 on [-1, 1]^2: critical exactly on the face x_1 = 1
        let f0 = Arc::new(Affine::new(v(&[-1.0, 0.0]), 0.0));
        let f1 = Arc::new(Affine::new(v(&[0.0, 1.0]), -2.0));
        let p = problem(vec![f0, f1], Domain::cube(2, 1.0).unwrap(), vec![0.0, 0.0]);
        let x = v(&[0.99, 0.3]);
        assert!((kkt_report_at(&p, &x).unwrap().stationarity - 1.0).abs() < 1e-12);
        let (r, moved) = nearby_kkt_report(&p, &x, 0.02).unwrap();
        assert_eq!(r.stationarity, 0.0);
        assert!((moved - 0.01).abs() < 1e-12);
        let (r, moved) = nearby_kkt_report(&p, &x, 0.005).unwrap();
        assert!((r.stationarity - 1.0).abs() < 1e-12);
        assert_eq!(moved, 0.0);
        assert!(nearby_kkt_report(&p, &x, -1.0).is_err());
    }

    #[test]
    fn meta_run_on_convex_problem_tracks_direct_solve() {
        // min (x - 0.8)^2 s.t. x - 0.5 <= 0 on [-1, 1], optimum 0.5
        let f0 = quad(DMatrix::identity(1, 1), v(&[-1.6]), 0.64);
        let f1 = Arc::new(Affine::new(v(&[1.0]), -0.5));
        let p = problem(vec![f0, f1], Domain::cube(1, 1.0).unwrap(), vec![2.0, 0.0]);
        let smoothing = SmoothingConfig::uniform(1e-3, 1).unwrap();
        let budget = 3000;
        let direct = conex_run(
            &p,
            &ConexParams::constant(budget, 20.0, 1.0),
            &smoothing,
            &v(&[0.0]),
            3,
        )
        .unwrap();
        let gap = |x: &Point| (x[0] - 0.8).powi(2) - 0.09 + p.violation(x);
        let prox = ProximalConfig {
            mu0: 1e-3,
            mu: vec![1e-3],
            outer_iterations: 3,
            inner: fixed(budget / 3, 20.0, 1.0),
        };
        let meta = meta_run(&p, &prox, &smoothing, &v(&[0.0]), 3).unwrap();
        let direct_gap = gap(&direct.x_bar).abs();
        let meta_gap = gap(meta.iterates.last().unwrap()).abs();
        assert!(meta_gap <= 2.0 * direct_gap.max(1e-3), "{meta_gap} vs {direct_gap}");
    }
}
