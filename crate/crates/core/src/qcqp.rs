//! Random quadratically constrained quadratic programs, a certified
//! noiseless reference solver and the benchmark metrics.
//!
//! Function `i` is `f_i(x) = x^T A_i x + b_i^T x + c_i`; index 0 is the
//! objective and `1..=m` are the constraints `f_i(x) <= 0`.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, Error, Result};
use crate::geometry::{domain_diameter, Domain, Geometry};
use crate::nonconvex::{kkt_residual, KktReport};
use crate::problem::{
    NoiseModel, ProblemSpec, ScalarFunction, SmoothnessConstants, StochasticOracle,
};
use crate::rng::{Stream, StreamSet};
use crate::smoothing::SmoothingConfig;
use crate::Point;

/// Ridge added to `G^T G / n` in convex instances.
pub const CONVEX_RIDGE: f64 = 1e-3;
/// Tolerance of the positive-semidefiniteness test.
pub const PSD_TOL: f64 = 1e-8;
/// KKT certificate threshold of a reference solution.
pub const KKT_TOL: f64 = 1e-4;
/// Feasibility threshold of a reference solution.
pub const FEAS_TOL: f64 = 1e-6;

const BARRIER_HALVINGS: usize = 40;
const NEWTON_MAX: usize = 200;
const NEWTON_TOL: f64 = 1e-14;
const SNAP_DIST: f64 = 1e-7;
const MULTISTARTS: usize = 32;
/// Largest box dimension for which `M_i` is computed by vertex enumeration.
const VERTEX_ENUM_MAX_DIM: usize = 12;

/// `x^T A x + b^T x + c` with symmetric `A`.
#[derive(Clone, Debug, PartialEq)]
pub struct Quadratic {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: f64,
}

impl Quadratic {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, c: f64) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::InvalidParameter("quadratic form must be square".into()));
        }
        check_dim(a.nrows(), b.len())?;
        let a = (&a + a.transpose()) * 0.5;
        Ok(Self { a, b, c })
    }

    pub fn hessian(&self) -> DMatrix<f64> {
        &self.a * 2.0
    }

    fn eigenvalues(&self) -> DVector<f64> {
        self.a.clone().symmetric_eigenvalues()
    }
}

impl ScalarFunction for Quadratic {
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

#[derive(Clone, Debug, PartialEq)]
pub struct QcqpInstance {
    /// `m + 1` functions, objective first.
    pub functions: Vec<Quadratic>,
    pub convex: bool,
    pub domain: Domain,
}

impl QcqpInstance {
    /// Builds an instance and sets `convex` from the spectra.
    pub fn new(functions: Vec<Quadratic>, domain: Domain) -> Result<Self> {
        if functions.is_empty() {
            return Err(Error::InvalidParameter("an objective is required".into()));
        }
        let n = domain.dim();
        for f in &functions {
            check_dim(n, f.dim())?;
        }
        let convex = functions.iter().all(|f| f.eigenvalues().min() >= -PSD_TOL);
        Ok(Self {
            functions,
            convex,
            domain,
        })
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn constraint_count(&self) -> usize {
        self.functions.len() - 1
    }

    pub fn value(&self, i: usize, x: &Point) -> f64 {
        self.functions[i].value(x)
    }

    pub fn gradient(&self, i: usize, x: &Point) -> Point {
        &self.functions[i].a * x * 2.0 + &self.functions[i].b
    }

    pub fn constraint_values(&self, x: &Point) -> DVector<f64> {
        DVector::from_iterator(
            self.constraint_count(),
            (1..self.functions.len()).map(|i| self.value(i, x)),
        )
    }

    pub fn violation(&self, x: &Point) -> f64 {
        self.constraint_values(x)
            .iter()
            .map(|v| v.max(0.0).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// `L_i = 2 max |lambda(A_i)|`.
    pub fn grad_lipschitz(&self) -> Vec<f64> {
        self.functions
            .iter()
            .map(|f| 2.0 * f.eigenvalues().amax())
            .collect()
    }

    /// Bounds on `sup_X ||2 A_i x + b_i||`: exact over the vertices of small
    /// boxes, `2 ||A_i||_2 M_X + ||b_i||` otherwise.
    pub fn value_lipschitz(&self) -> Vec<f64> {
        let (_, m_x) = domain_diameter(&Geometry::Euclidean, &self.domain);
        self.functions
            .iter()
            .map(|f| match &self.domain {
                Domain::Box { lower, upper } if self.dim() <= VERTEX_ENUM_MAX_DIM => {
                    let n = self.dim();
                    (0u64..1 << n)
                        .map(|mask| {
                            let v = DVector::from_fn(n, |j, _| {
                                if mask >> j & 1 == 1 {
                                    upper[j]
                                } else {
                                    lower[j]
                                }
                            });
                            (&f.a * v * 2.0 + &f.b).norm()
                        })
                        .fold(0.0, f64::max)
                }
                _ => 2.0 * f.eigenvalues().amax() * m_x + f.b.norm(),
            })
            .collect()
    }

    /// Constants for oracles with additive noise of standard deviation
    /// `noise_std`: `sigma_i = 0`, `sigma_{f_i} = noise_std`.
    pub fn constants(&self, noise_std: f64) -> Result<SmoothnessConstants> {
        let k = self.functions.len();
        SmoothnessConstants::new(
            self.grad_lipschitz(),
            self.value_lipschitz(),
            vec![0.0; k],
            vec![noise_std; k],
        )
    }

    /// The instance as a stochastic problem with the same noise on every
    /// oracle.
    pub fn to_problem(&self, noise: NoiseModel) -> Result<ProblemSpec> {
        noise.validate()?;
        let oracles = self
            .functions
            .iter()
            .map(|f| StochasticOracle::new(Arc::new(f.clone()), noise))
            .collect();
        ProblemSpec::new(oracles, self.domain.clone(), self.constants(noise.std_dev())?)
    }

    /// Field-by-field text form; floats carry 17 significant digits and
    /// matrices are row-major, one row per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let n = self.dim();
        let row = |v: &mut String, tag: &str, xs: &mut dyn Iterator<Item = f64>| {
            v.push_str(tag);
            for x in xs {
                let _ = write!(v, " {x:.16e}");
            }
            v.push('\n');
        };
        let _ = writeln!(s, "qcqp");
        let _ = writeln!(s, "n {n}");
        let _ = writeln!(s, "m {}", self.constraint_count());
        let _ = writeln!(s, "convex {}", self.convex);
        match &self.domain {
            Domain::Box { lower, upper } => {
                let _ = writeln!(s, "domain box");
                row(&mut s, "lower", &mut lower.iter().copied());
                row(&mut s, "upper", &mut upper.iter().copied());
            }
            Domain::Ball { center, radius } => {
                let _ = writeln!(s, "domain ball");
                row(&mut s, "center", &mut center.iter().copied());
                row(&mut s, "radius", &mut std::iter::once(*radius));
            }
        }
        for (i, f) in self.functions.iter().enumerate() {
            let _ = writeln!(s, "function {i}");
            row(&mut s, "c", &mut std::iter::once(f.c));
            row(&mut s, "b", &mut f.b.iter().copied());
            for r in 0..n {
                row(&mut s, "a", &mut f.a.row(r).iter().copied());
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let mut next = |tag: &str| -> Result<(usize, Vec<String>)> {
            let (no, line) = lines.next().ok_or(Error::Parse {
                line: 0,
                message: format!("unexpected end of input, expected '{tag}'"),
            })?;
            let mut parts = line.split_whitespace();
            let head = parts.next().unwrap_or_default();
            if head != tag {
                return Err(Error::Parse {
                    line: no,
                    message: format!("expected '{tag}', found '{head}'"),
                });
            }
            Ok((no, parts.map(str::to_owned).collect()))
        };
        fn floats(no: usize, parts: &[String], count: usize) -> Result<Vec<f64>> {
            if parts.len() != count {
                return Err(Error::Parse {
                    line: no,
                    message: format!("expected {count} values, found {}", parts.len()),
                });
            }
            parts
                .iter()
                .map(|p| {
                    p.parse::<f64>().map_err(|e| Error::Parse {
                        line: no,
                        message: format!("bad number '{p}': {e}"),
                    })
                })
                .collect()
        }
        fn int(no: usize, parts: &[String]) -> Result<usize> {
            match parts {
                [v] => v.parse().map_err(|e| Error::Parse {
                    line: no,
                    message: format!("bad integer '{v}': {e}"),
                }),
                _ => Err(Error::Parse {
                    line: no,
                    message: "expected one integer".into(),
                }),
            }
        }

        next("qcqp")?;
        let (no, p) = next("n")?;
        let n = int(no, &p)?;
        let (no, p) = next("m")?;
        let m = int(no, &p)?;
        next("convex")?;
        let (no, p) = next("domain")?;
        let domain = match p.first().map(String::as_str) {
            Some("box") => {
                let (no, p) = next("lower")?;
                let lower = DVector::from_vec(floats(no, &p, n)?);
                let (no, p) = next("upper")?;
                let upper = DVector::from_vec(floats(no, &p, n)?);
                Domain::new_box(lower, upper)?
            }
            Some("ball") => {
                let (no, p) = next("center")?;
                let center = DVector::from_vec(floats(no, &p, n)?);
                let (no, p) = next("radius")?;
                Domain::ball(center, floats(no, &p, 1)?[0])?
            }
            other => {
                return Err(Error::Parse {
                    line: no,
                    message: format!("unknown domain {other:?}"),
                })
            }
        };
        let mut functions = Vec::with_capacity(m + 1);
        for i in 0..=m {
            let (no, p) = next("function")?;
            if int(no, &p)? != i {
                return Err(Error::Parse {
                    line: no,
                    message: format!("expected function {i}"),
                });
            }
            let (no, p) = next("c")?;
            let c = floats(no, &p, 1)?[0];
            let (no, p) = next("b")?;
            let b = DVector::from_vec(floats(no, &p, n)?);
            let mut a = DMatrix::zeros(n, n);
            for r in 0..n {
                let (no, p) = next("a")?;
                for (j, v) in floats(no, &p, n)?.into_iter().enumerate() {
                    a[(r, j)] = v;
                }
            }
            functions.push(Quadratic { a, b, c });
        }
        Self::new(functions, domain)
    }
}

/// Draws an instance on `[-1, 1]^n`.
///
/// Convex: `A_i = G^T G / n + CONVEX_RIDGE I`. Nonconvex: `A_i = (G + G^T) / 2`
/// redrawn until its spectrum straddles zero. `b_i` and `c_0` are standard
/// normal and `c_i = -1` for constraints, so the origin is strictly feasible.
pub fn generate_qcqp(n: usize, m: usize, convex: bool, seed: u64) -> Result<QcqpInstance> {
    if n == 0 {
        return Err(Error::InvalidParameter("dimension must be >= 1".into()));
    }
    if !convex && n < 2 {
        return Err(Error::InvalidParameter(
            "an indefinite quadratic form needs n >= 2".into(),
        ));
    }
    let mut rng = StreamSet::new(seed).stream(Stream::Instance);
    let mut gauss = move || -> f64 { StandardNormal.sample(&mut rng) };
    let mut functions = Vec::with_capacity(m + 1);
    for i in 0..=m {
        let a = loop {
            let g = DMatrix::from_fn(n, n, |_, _| gauss());
            if convex {
                break g.tr_mul(&g) / n as f64 + DMatrix::identity(n, n) * CONVEX_RIDGE;
            }
            let a = (&g + g.transpose()) * 0.5;
            let eig = a.clone().symmetric_eigenvalues();
            if eig.min() < 0.0 && eig.max() > 0.0 {
                break a;
            }
        };
        let b = DVector::from_fn(n, |_, _| gauss());
        let c = if i == 0 { gauss() } else { -1.0 };
        functions.push(Quadratic::new(a, b, c)?);
    }
    QcqpInstance::new(functions, Domain::cube(n, 1.0)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceSolution {
    pub x_star: Point,
    pub f0_star: f64,
    pub y_star: DVector<f64>,
    /// Largest of the stationarity, complementarity and violation residuals.
    pub kkt_residual: f64,
    /// `kkt_residual <= KKT_TOL` and violation `<= FEAS_TOL`.
    pub solved: bool,
}

/// Objective gap and constraint violation of `x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    /// `f_0(x) - f_0^*`, negative for super-optimal infeasible points.
    pub gap: f64,
    pub violation: f64,
}

pub fn metrics(instance: &QcqpInstance, reference: &ReferenceSolution, x: &Point) -> Metrics {
    Metrics {
        gap: instance.value(0, x) - reference.f0_star,
        violation: instance.violation(x),
    }
}

/// Log-barrier function on the interior of the feasible set. With
/// `phase_one` the variable carries an extra slack `s` and the barrier is
/// that of `min s s.t. f_i(x) < s`.
struct Barrier<'a> {
    instance: &'a QcqpInstance,
    mu: f64,
    phase_one: bool,
}

struct BarrierEval {
    value: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

impl Barrier<'_> {
    fn eval(&self, z: &DVector<f64>) -> Option<BarrierEval> {
        let inst = self.instance;
        let n = inst.dim();
        let k = z.len();
        let x = z.rows(0, n).into_owned();
        let mu = self.mu;
        let mut grad = DVector::zeros(k);
        let mut hess = DMatrix::zeros(k, k);
        let mut value;
        if self.phase_one {
            value = z[n];
            grad[n] = 1.0;
        } else {
            let f0 = &inst.functions[0];
            value = f0.value(&x);
            grad.rows_mut(0, n).copy_from(&inst.gradient(0, &x));
            hess.view_mut((0, 0), (n, n)).copy_from(&f0.hessian());
        }
        let slack = if self.phase_one { z[n] } else { 0.0 };
        for (i, f) in inst.functions.iter().enumerate().skip(1) {
            let r = slack - f.value(&x);
            if !(r > 0.0) {
                return None;
            }
            let mut d = DVector::zeros(k);
            d.rows_mut(0, n).copy_from(&inst.gradient(i, &x));
            if self.phase_one {
                d[n] = -1.0;
            }
            // -mu log(r) with grad r = -d
            value -= mu * r.ln();
            grad.axpy(mu / r, &d, 1.0);
            hess.ger(mu / (r * r), &d, &d, 1.0);
            let mut block = hess.view_mut((0, 0), (n, n));
            block += f.hessian() * (mu / r);
        }
        match &inst.domain {
            Domain::Box { lower, upper } => {
                for j in 0..n {
                    let dl = x[j] - lower[j];
                    let du = upper[j] - x[j];
                    if !(dl > 0.0 && du > 0.0) {
                        return None;
                    }
                    value -= mu * (dl.ln() + du.ln());
                    grad[j] += mu * (1.0 / du - 1.0 / dl);
                    hess[(j, j)] += mu * (1.0 / (dl * dl) + 1.0 / (du * du));
                }
            }
            Domain::Ball { center, radius } => {
                let d = &x - center;
                let s = radius * radius - d.norm_squared();
                if !(s > 0.0) {
                    return None;
                }
                value -= mu * s.ln();
                let mut block = hess.view_mut((0, 0), (n, n));
                block.ger(4.0 * mu / (s * s), &d, &d, 1.0);
                for j in 0..n {
                    block[(j, j)] += 2.0 * mu / s;
                }
                grad.rows_mut(0, n).axpy(2.0 * mu / s, &d, 1.0);
            }
        }
        value.is_finite().then_some(BarrierEval { value, grad, hess })
    }
}

/// Newton direction with a diagonal shift until the factorization succeeds.
fn newton_direction(hess: &DMatrix<f64>, grad: &DVector<f64>) -> DVector<f64> {
    let k = grad.len();
    let scale = hess.diagonal().amax().max(1.0);
    let mut shift = 0.0;
    loop {
        let h = hess + DMatrix::identity(k, k) * shift;
        if let Some(ch) = Cholesky::new(h) {
            return -ch.solve(grad);
        }
        shift = if shift == 0.0 { 1e-10 * scale } else { shift * 10.0 };
    }
}

/// Damped Newton centering. Returns the last point and whether the
/// decrement fell below tolerance. Stops early once `stop` holds.
fn center(
    barrier: &Barrier<'_>,
    mut z: DVector<f64>,
    stop: &dyn Fn(&DVector<f64>) -> bool,
) -> (DVector<f64>, bool) {
    let Some(mut cur) = barrier.eval(&z) else {
        return (z, false);
    };
    for _ in 0..NEWTON_MAX {
        let dz = newton_direction(&cur.hess, &cur.grad);
        let slope = cur.grad.dot(&dz);
        if -slope <= NEWTON_TOL * cur.value.abs().max(1.0) {
            return (z, true);
        }
        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-20 {
            let cand = &z + &dz * step;
            if let Some(e) = barrier.eval(&cand) {
                if e.value <= cur.value + 0.25 * step * slope {
                    accepted = Some((cand, e));
                    break;
                }
            }
            step *= 0.5;
        }
        match accepted {
            Some((cand, e)) => {
                z = cand;
                cur = e;
            }
            // no representable progress left
            None => return (z, -slope <= 1e-8 * cur.value.abs().max(1.0)),
        }
        if stop(&z) {
            return (z, true);
        }
    }
    (z, false)
}

/// A point strictly inside the feasible set, searched from `start`
/// (which must lie strictly inside the domain).
fn strictly_feasible(instance: &QcqpInstance, start: &Point) -> Option<Point> {
    let n = instance.dim();
    let worst = instance.constraint_values(start).iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if worst < 0.0 {
        return Some(start.clone());
    }
    let mut z = DVector::zeros(n + 1);
    z.rows_mut(0, n).copy_from(start);
    z[n] = worst + 1.0;
    let strict = |z: &DVector<f64>| {
        let x = z.rows(0, n).into_owned();
        instance.constraint_values(&x).iter().all(|v| *v < 0.0)
    };
    let mut mu = 1.0;
    for _ in 0..=BARRIER_HALVINGS {
        let barrier = Barrier {
            instance,
            mu,
            phase_one: true,
        };
        let (next, _) = center(&barrier, z, &strict);
        z = next;
        if strict(&z) {
            return Some(z.rows(0, n).into_owned());
        }
        mu *= 0.5;
    }
    None
}

fn interior_start(domain: &Domain) -> Point {
    match domain {
        Domain::Box { lower, upper } => (lower + upper) * 0.5,
        Domain::Ball { center, .. } => center.clone(),
    }
}

/// Follows the barrier path from a strictly feasible point; returns the
/// final point and multipliers `y_i = mu / (-f_i(x))`.
fn barrier_path(instance: &QcqpInstance, x0: Point) -> (Point, DVector<f64>) {
    let mut x = x0;
    let mut mu = 1.0;
    let never = |_: &DVector<f64>| false;
    for _ in 0..=BARRIER_HALVINGS {
        let barrier = Barrier {
            instance,
            mu,
            phase_one: false,
        };
        x = center(&barrier, x, &never).0;
        if mu <= 0.5f64.powi(BARRIER_HALVINGS as i32) {
            break;
        }
        mu *= 0.5;
    }
    let y = instance.constraint_values(&x).map(|f| mu / (-f));
    (snap_to_bounds(&instance.domain, &x), y)
}

/// Moves coordinates within `SNAP_DIST` of a box bound onto the bound.
fn snap_to_bounds(domain: &Domain, x: &Point) -> Point {
    match domain {
        Domain::Box { lower, upper } => DVector::from_fn(x.len(), |j, _| {
            if x[j] - lower[j] < SNAP_DIST {
                lower[j]
            } else if upper[j] - x[j] < SNAP_DIST {
                upper[j]
            } else {
                x[j]
            }
        }),
        Domain::Ball { .. } => domain.project(x),
    }
}

/// Least-squares multipliers of the nearly active constraints, with the
/// gradient components absorbed by active domain bounds projected out.
fn polish_duals(instance: &QcqpInstance, x: &Point) -> Option<DVector<f64>> {
    let n = instance.dim();
    let values = instance.constraint_values(x);
    let active: Vec<usize> = (0..values.len()).filter(|&i| values[i] >= -SNAP_DIST).collect();
    let proj = match &instance.domain {
        Domain::Box { lower, upper } => DMatrix::from_diagonal(&DVector::from_fn(n, |j, _| {
            if x[j] <= lower[j] || x[j] >= upper[j] { 0.0 } else { 1.0 }
        })),
        Domain::Ball { center, radius } => {
            let d = x - center;
            let mut p = DMatrix::identity(n, n);
            if d.norm() >= radius - SNAP_DIST {
                let u = d.normalize();
                p -= &u * u.transpose();
            }
            p
        }
    };
    let mut y = DVector::zeros(values.len());
    if active.is_empty() {
        return Some(y);
    }
    let jac = DMatrix::from_fn(n, active.len(), |r, c| instance.gradient(active[c] + 1, x)[r]);
    let rhs = -(&proj * instance.gradient(0, x));
    let sol = (&proj * jac).svd(true, true).solve(&rhs, 1e-12).ok()?;
    for (k, &i) in active.iter().enumerate() {
        y[i] = sol[k].max(0.0);
    }
    Some(y)
}

fn certify(instance: &QcqpInstance, x: Point, y: DVector<f64>) -> Result<ReferenceSolution> {
    let problem = instance.to_problem(NoiseModel::none())?;
    let mut y = y;
    let mut report = kkt_residual(&problem, &x, &y)?;
    if let Some(polished) = polish_duals(instance, &x) {
        let alt = kkt_residual(&problem, &x, &polished)?;
        if alt.max_residual() < report.max_residual() {
            y = polished;
            report = alt;
        }
    }
    let residual = report.max_residual();
    let violation = report.violation;
    Ok(ReferenceSolution {
        f0_star: instance.value(0, &x),
        x_star: x,
        y_star: y,
        kkt_residual: residual,
        solved: residual <= KKT_TOL && violation <= FEAS_TOL,
    })
}

fn solve_from(instance: &QcqpInstance, start: &Point) -> Result<Option<ReferenceSolution>> {
    let Some(x0) = strictly_feasible(instance, start) else {
        return Ok(None);
    };
    let (x, y) = barrier_path(instance, x0);
    certify(instance, x, y).map(Some)
}

/// Noiseless reference solution by a log-barrier path (barrier weight
/// halved 40 times from 1, damped Newton centering), certified by its KKT
/// residual.
///
/// Nonconvex instances use the best certified point over 32 starts; the
/// result is then a stationary point, not a global optimum. An instance with
/// no strictly feasible point found is reported unsolved at the domain
/// center.
pub fn reference_solve(instance: &QcqpInstance) -> Result<ReferenceSolution> {
    let start = interior_start(&instance.domain);
    let mut candidates = Vec::new();
    if let Some(sol) = solve_from(instance, &start)? {
        candidates.push(sol);
    }
    if !instance.convex {
        let mut rng = StreamSet::new(0x5eed).stream(Stream::Aux(0));
        for _ in 1..MULTISTARTS {
            let probe = random_interior(&instance.domain, &mut rng);
            if let Some(sol) = solve_from(instance, &probe)? {
                candidates.push(sol);
            }
        }
    }
    let best = candidates.into_iter().min_by(|a, b| {
        (!a.solved, a.f0_star)
            .partial_cmp(&(!b.solved, b.f0_star))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    match best {
        Some(s) => Ok(s),
        None => {
            let m = instance.constraint_count();
            let mut s = certify(instance, start, DVector::zeros(m))?;
            s.solved = false;
            Ok(s)
        }
    }
}

fn random_interior<R: Rng>(domain: &Domain, rng: &mut R) -> Point {
    match domain {
        Domain::Box { lower, upper } => DVector::from_fn(lower.len(), |j, _| {
            let mid = 0.5 * (lower[j] + upper[j]);
            let half = 0.5 * (upper[j] - lower[j]);
            mid + 0.9 * half * rng.random_range(-1.0..1.0)
        }),
        Domain::Ball { center, radius } => {
            let d = DVector::from_fn(center.len(), |_, _| StandardNormal.sample(rng));
            let r = 0.9 * radius * rng.random::<f64>();
            center + d.normalize() * r
        }
    }
}

/// `L(x, y) = f_0(x) + y^T f(x)`.
pub fn lagrangian(instance: &QcqpInstance, x: &Point, y: &DVector<f64>) -> f64 {
    instance.value(0, x) + y.dot(&instance.constraint_values(x))
}

/// `Q(z, z_bar) = L(x, y_bar) - L(x_bar, y)` for `z = (x, y)`.
pub fn gap_function_q(
    instance: &QcqpInstance,
    x: &Point,
    y: &DVector<f64>,
    x_bar: &Point,
    y_bar: &DVector<f64>,
) -> f64 {
    lagrangian(instance, x, y_bar) - lagrangian(instance, x_bar, y)
}

/// Exact smoothing error of `Q` and its bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothingGapCheck {
    /// `|Q(z, z_bar) - Q_nu(z, z_bar)|`.
    pub lhs: f64,
    /// `nu_0^2 L_0 n + M_X n sqrt(sum_i nu_i^4 L_i^2)`.
    pub rhs: f64,
}

impl SmoothingGapCheck {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs
    }

    pub fn margin(&self) -> f64 {
        self.rhs - self.lhs
    }
}

/// Compares `Q` with its smoothed counterpart. For quadratics
/// `f_{i,nu}(x) = f_i(x) + nu_i^2 tr(A_i)`, so the objective terms cancel and
/// `Q - Q_nu = (y - y_bar)^T d` with `d_i = nu_i^2 tr(A_i)`.
///
/// The bound assumes multipliers of norm at most `M_X`; larger ones are
/// rejected.
pub fn lemma4_gap_diagnostic(
    instance: &QcqpInstance,
    config: &SmoothingConfig,
    x: &Point,
    y: &DVector<f64>,
    x_bar: &Point,
    y_bar: &DVector<f64>,
) -> Result<SmoothingGapCheck> {
    let m = instance.constraint_count();
    check_dim(m, config.nu.len())?;
    check_dim(m, y.len())?;
    check_dim(m, y_bar.len())?;
    check_dim(instance.dim(), x.len())?;
    check_dim(instance.dim(), x_bar.len())?;
    let (_, m_x) = domain_diameter(&Geometry::Euclidean, &instance.domain);
    if y.norm() > m_x || y_bar.norm() > m_x {
        return Err(Error::InvalidParameter(format!(
            "multiplier norms must not exceed M_X = {m_x}"
        )));
    }
    let nu0 = config.nu0;
    let l = instance.grad_lipschitz();
    let n = instance.dim() as f64;
    let d = DVector::from_fn(m, |i, _| config.nu[i].powi(2) * instance.functions[i + 1].a.trace());
    let q = gap_function_q(instance, x, y, x_bar, y_bar);
    let mut smoothed = instance.clone();
    for (i, f) in smoothed.functions.iter_mut().enumerate() {
        let nu = if i == 0 { nu0 } else { config.nu[i - 1] };
        f.c += nu * nu * f.a.trace();
    }
    let q_nu = gap_function_q(&smoothed, x, y, x_bar, y_bar);
    // closed form and direct evaluation agree up to rounding
    debug_assert!(((q - q_nu) - (y - y_bar).dot(&d)).abs() <= 1e-8 * (1.0 + q.abs()));
    let lhs = (q - q_nu).abs();
    let tail = (1..=m)
        .map(|i| config.nu[i - 1].powi(4) * l[i] * l[i])
        .sum::<f64>()
        .sqrt();
    Ok(SmoothingGapCheck {
        lhs,
        rhs: nu0 * nu0 * l[0] * n + m_x * n * tail,
    })
}

/// KKT residuals of `(x, y)` on the noiseless instance.
pub fn instance_kkt(instance: &QcqpInstance, x: &Point, y: &DVector<f64>) -> Result<KktReport> {
    kkt_residual(&instance.to_problem(NoiseModel::none())?, x, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> Point {
        DVector::from_column_slice(xs)
    }

    /// min ||x||^2 s.t. 0.5 - x_1 <= 0 on [-1, 1]^2
    fn half_plane() -> QcqpInstance {
        QcqpInstance::new(
            vec![
                Quadratic::new(DMatrix::identity(2, 2), v(&[0.0, 0.0]), 0.0).unwrap(),
                Quadratic::new(DMatrix::zeros(2, 2), v(&[-1.0, 0.0]), 0.5).unwrap(),
            ],
            Domain::cube(2, 1.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn generated_instances_have_the_promised_structure() {
        for seed in 0..5 {
            let inst = generate_qcqp(6, 3, true, seed).unwrap();
            assert!(inst.convex);
            for f in &inst.functions {
                assert!(f.eigenvalues().min() >= CONVEX_RIDGE - PSD_TOL);
                assert_eq!(f.a, f.a.transpose());
            }
            let origin = DVector::zeros(6);
            assert!(inst.constraint_values(&origin).iter().all(|v| *v == -1.0));

            let inst = generate_qcqp(6, 3, false, seed).unwrap();
            assert!(!inst.convex);
            for f in &inst.functions {
                let e = f.eigenvalues();
                assert!(e.min() < 0.0 && e.max() > 0.0);
            }
        }
        assert_eq!(
            generate_qcqp(5, 2, true, 9).unwrap().to_text(),
            generate_qcqp(5, 2, true, 9).unwrap().to_text()
        );
        assert_ne!(generate_qcqp(5, 2, true, 9).unwrap(), generate_qcqp(5, 2, true, 10).unwrap());
    }

    #[test]
    fn constants_match_finite_differences() {
        let inst = generate_qcqp(5, 2, false, 3).unwrap();
        let mut rng = StreamSet::new(1).stream(Stream::Aux(2));
        let h = 1e-4;
        for _ in 0..20 {
            let x = random_interior(&inst.domain, &mut rng);
            for i in 0..3 {
                let g = inst.gradient(i, &x);
                for j in 0..5 {
                    let mut e = DVector::zeros(5);
                    e[j] = h;
                    let fd = (inst.value(i, &(&x + &e)) - inst.value(i, &(&x - &e))) / (2.0 * h);
                    assert!((fd - g[j]).abs() <= 1e-5);
                }
                assert!(g.norm() <= inst.value_lipschitz()[i] + 1e-12);
            }
        }
    }

    #[test]
    fn value_lipschitz_bound_covers_large_boxes() {
        let inst = generate_qcqp(14, 1, true, 2).unwrap();
        let m = inst.value_lipschitz();
        let mut rng = StreamSet::new(4).stream(Stream::Aux(3));
        for _ in 0..100 {
            let x = DVector::from_fn(14, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 });
            for (i, bound) in m.iter().enumerate() {
                assert!(inst.gradient(i, &x).norm() <= *bound);
            }
        }
    }

    #[test]
    fn text_round_trip_is_exact() {
        let inst = generate_qcqp(4, 2, false, 17).unwrap();
        let text = inst.to_text();
        let back = QcqpInstance::from_text(&text).unwrap();
        assert_eq!(back, inst);
        assert_eq!(back.to_text(), text);
        let err = QcqpInstance::from_text("qcqp\nn 2\nm x\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
    }

    #[test]
    fn reference_for_half_plane_problem() {
        let sol = reference_solve(&half_plane()).unwrap();
        assert!(sol.solved, "{sol:?}");
        assert!((sol.x_star - v(&[0.5, 0.0])).norm() < 1e-6);
        assert!((sol.f0_star - 0.25).abs() < 1e-6);
        assert!((sol.y_star[0] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn inactive_constraint_gives_zero_multiplier() {
        // min ||x - (2, 0.3)||^2 s.t. ||x||^2 - 4 <= 0 on the unit box
        let inst = QcqpInstance::new(
            vec![
                Quadratic::new(DMatrix::identity(2, 2), v(&[-4.0, -0.6]), 4.09).unwrap(),
                Quadratic::new(DMatrix::identity(2, 2), v(&[0.0, 0.0]), -4.0).unwrap(),
            ],
            Domain::cube(2, 1.0).unwrap(),
        )
        .unwrap();
        let sol = reference_solve(&inst).unwrap();
        assert!(sol.solved);
        assert!((sol.x_star - v(&[1.0, 0.3])).norm() < 1e-6);
        assert!(sol.y_star[0] < 1e-6);
    }

    #[test]
    fn reference_solves_random_convex_instances() {
        for seed in 0..5 {
            let inst = generate_qcqp(8, 3, true, seed).unwrap();
            let sol = reference_solve(&inst).unwrap();
            assert!(sol.solved, "seed {seed}: {sol:?}");
            assert!(inst.violation(&sol.x_star) <= FEAS_TOL);
            let m = metrics(&inst, &sol, &sol.x_star);
            assert!(m.gap.abs() <= 1e-6 && m.violation <= 1e-6);
        }
    }

    #[test]
    fn nonconvex_reference_is_stationary() {
        let inst = generate_qcqp(5, 2, false, 4).unwrap();
        let sol = reference_solve(&inst).unwrap();
        assert!(sol.solved, "{sol:?}");
    }

    #[test]
    fn metrics_examples() {
        let inst = half_plane();
        let sol = reference_solve(&inst).unwrap();
        let mut shifted = inst.clone();
        shifted.functions[1].c = 1.0;
        // f_1(-1, 0) = 1 + 1 = 2
        let m = metrics(&shifted, &sol, &v(&[-1.0, 0.0]));
        assert!((m.violation - 2.0).abs() < 1e-12);
        // infeasible and super-optimal: the sign is kept
        let m = metrics(&inst, &sol, &v(&[0.2, 0.0]));
        assert!(m.gap < 0.0 && m.violation > 0.0);
    }

    #[test]
    fn gap_function_examples() {
        let inst = generate_qcqp(4, 2, true, 5).unwrap();
        let sol = reference_solve(&inst).unwrap();
        let x = v(&[0.1, 0.2, -0.3, 0.0]);
        let y = v(&[0.4, 1.0]);
        assert_eq!(gap_function_q(&inst, &x, &y, &x, &y), 0.0);
        let zero = DVector::zeros(2);
        let q = gap_function_q(&inst, &x, &zero, &sol.x_star, &zero);
        assert!((q - (inst.value(0, &x) - inst.value(0, &sol.x_star))).abs() < 1e-12);

        let mut rng = StreamSet::new(6).stream(Stream::Aux(4));
        for _ in 0..1000 {
            let z = random_interior(&inst.domain, &mut rng);
            let w = DVector::from_fn(2, |_, _| 3.0 * rng.random::<f64>());
            let q = gap_function_q(&inst, &z, &w, &sol.x_star, &sol.y_star);
            assert!(q >= -1e-6, "{q}");
        }
    }

    #[test]
    fn smoothing_gap_examples() {
        let inst = generate_qcqp(5, 2, true, 8).unwrap();
        let x = v(&[0.1, 0.0, 0.2, -0.1, 0.3]);
        let y = v(&[0.5, 0.1]);
        let xb = v(&[0.0, 0.4, 0.0, 0.0, 0.1]);
        let yb = v(&[0.0, 1.0]);
        let tiny = SmoothingConfig::new(1e-300, vec![1e-300, 1e-300]).unwrap();
        let r = lemma4_gap_diagnostic(&inst, &tiny, &x, &y, &xb, &yb).unwrap();
        assert_eq!((r.lhs, r.rhs), (0.0, 0.0));

        let cfg = SmoothingConfig::uniform(0.1, 2).unwrap();
        let r = lemma4_gap_diagnostic(&inst, &cfg, &x, &y, &xb, &yb).unwrap();
        assert!(r.holds() && r.margin() > 0.0);
        let d: Vec<f64> = (1..3).map(|i| 0.01 * inst.functions[i].a.trace()).collect();
        let exact = ((y[0] - yb[0]) * d[0] + (y[1] - yb[1]) * d[1]).abs();
        assert!((r.lhs - exact).abs() < 1e-12);

        let mut linear = inst.clone();
        for f in &mut linear.functions {
            f.a.fill(0.0);
        }
        let r = lemma4_gap_diagnostic(&linear, &cfg, &x, &y, &xb, &yb).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert!(r.holds());
        let big = v(&[10.0, 0.0]);
        assert!(lemma4_gap_diagnostic(&inst, &cfg, &x, &big, &xb, &yb).is_err());
    }
}
