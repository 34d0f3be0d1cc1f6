//! Gaussian smoothing: the two-point gradient estimator, the smoothing-radius
//! rule, and closed-form variance/bias bounds for diagnostics.
//!
//! For a radius `nu > 0` the smoothed function is
//! `f_nu(x) = E_u[f(x + nu u)]` with `u ~ N(0, I_n)`, and
//!
//! ```text
//! G(x, xi, u) = (F(x + nu u, xi) - F(x, xi)) / nu * u
//! ```
//!
//! is an unbiased estimate of `grad f_nu(x)`.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::problem::{draw_noisy_pair, OracleLedger, SmoothnessConstants, StochasticOracle};
use crate::Point;

/// Radii are clamped below at this value before dividing by them.
pub const MIN_RADIUS: f64 = 1e-8;

/// Smoothing radii: `nu0` for the objective, `nu[i-1]` for constraint `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothingConfig {
    pub nu0: f64,
    pub nu: Vec<f64>,
}

impl SmoothingConfig {
    pub fn new(nu0: f64, nu: Vec<f64>) -> Result<Self> {
        let config = Self { nu0, nu };
        config.validate()?;
        Ok(config)
    }

    /// Same radius for the objective and all `m` constraints.
    pub fn uniform(nu: f64, m: usize) -> Result<Self> {
        Self::new(nu, vec![nu; m])
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |r: f64| r.is_finite() && r > 0.0;
        if !ok(self.nu0) || !self.nu.iter().all(|r| ok(*r)) {
            return Err(Error::InvalidParameter(format!(
                "smoothing radii must be positive and finite, got nu0={} nu={:?}",
                self.nu0, self.nu
            )));
        }
        Ok(())
    }

    /// Radius of function `index` (0 = objective), with the numerical floor.
    pub fn radius(&self, index: usize) -> f64 {
        let r = if index == 0 {
            self.nu0
        } else {
            self.nu[index - 1]
        };
        r.max(MIN_RADIUS)
    }
}

/// One draw of the two-point estimator.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientEstimate {
    pub g: Point,
    pub direction: Point,
    /// `F(x + nu u, xi)`.
    pub value_at_shift: f64,
    /// `F(x, xi)`.
    pub value_at_base: f64,
    pub radius: f64,
}

/// `n` independent standard-normal coordinates.
pub fn sample_direction<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Point {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Draws `u`, evaluates the shared-noise pair at `(x + nu u, x)` and returns
/// the estimate. Charges 2 calls to `index`.
pub fn two_point_gradient<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    oracle: &StochasticOracle,
    index: usize,
    x: &Point,
    nu: f64,
    noise_rng: &mut R1,
    direction_rng: &mut R2,
    ledger: &mut OracleLedger,
) -> Result<GradientEstimate> {
    if !(nu > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "smoothing radius must be positive, got {nu}"
        )));
    }
    let radius = nu.max(MIN_RADIUS);
    let direction = sample_direction(x.len(), direction_rng);
    let shifted = x + &direction * radius;
    let (value_at_shift, value_at_base) =
        draw_noisy_pair(oracle, index, x, &shifted, noise_rng, ledger)?;
    for (value, point) in [(value_at_shift, &shifted), (value_at_base, x)] {
        if !value.is_finite() {
            return Err(Error::NonFiniteValue {
                index,
                value,
                point: point.iter().copied().collect(),
            });
        }
    }
    let g = &direction * ((value_at_shift - value_at_base) / radius);
    Ok(GradientEstimate {
        g,
        direction,
        value_at_shift,
        value_at_base,
        radius,
    })
}

/// Smoothing radii from the complexity analysis of the constraint
/// extrapolation method.
///
/// ```text
/// nu_0 = min{ 1/sqrt(2 L_0 n sqrt(T)), 2/(n+3)^{3/2}, 1/(L_0 (n+6)^{3/2}) }
/// nu_i = min{ 2/(n+3)^{3/2}, 1/(2 M_i sqrt((n+2) m)), 1/sqrt(L_i n sqrt(m)),
///             1/sqrt(2 L_i n M_X sqrt(T m)), 1/(L_i (n+6)^{3/2} sqrt(m)) }
/// ```
///
/// Terms whose constant is zero are unbounded and drop out of the minimum.
pub fn select_smoothing_parameters(
    constants: &SmoothnessConstants,
    n: usize,
    iterations: usize,
    m_x: f64,
) -> SmoothingConfig {
    let nf = n as f64;
    let t = iterations.max(1) as f64;
    let m = constants.constraint_count();
    let mf = m as f64;
    let shared = 2.0 / (nf + 3.0).powf(1.5);
    let n6 = (nf + 6.0).powf(1.5);

    let l0 = constants.grad_lipschitz[0];
    let nu0 = [
        1.0 / (2.0 * l0 * nf * t.sqrt()).sqrt(),
        shared,
        1.0 / (l0 * n6),
    ]
    .into_iter()
    .fold(f64::INFINITY, f64::min);

    let nu = (1..=m)
        .map(|i| {
            let l = constants.grad_lipschitz[i];
            let mv = constants.value_lipschitz[i];
            [
                shared,
                1.0 / (2.0 * mv * ((nf + 2.0) * mf).sqrt()),
                1.0 / (l * nf * mf.sqrt()).sqrt(),
                1.0 / (2.0 * l * nf * m_x * (t * mf).sqrt()).sqrt(),
                1.0 / (l * n6 * mf.sqrt()),
            ]
            .into_iter()
            .fold(f64::INFINITY, f64::min)
        })
        .collect();
    SmoothingConfig { nu0, nu }
}

/// Bound on `E||G_i - grad f_{i,nu}||^2`:
/// `nu^2 L^2 (n+6)^3 + 10 (n+4) (sigma^2 + B^2)` with
/// `B = nu/2 L (n+3)^{3/2} + L D_X + M`.
pub fn gradient_variance_bound(nu: f64, l: f64, m: f64, sigma: f64, n: usize, d_x: f64) -> f64 {
    let nf = n as f64;
    let b = 0.5 * nu * l * (nf + 3.0).powf(1.5) + l * d_x + m;
    nu * nu * l * l * (nf + 6.0).powi(3) + 10.0 * (nf + 4.0) * (sigma * sigma + b * b)
}

/// Bound on `E||F_nu(x, xi, u) - f_nu(x)||^2` over the constraint vector:
/// `sum_i (4 (n+2) M_i^2 nu_i^2 + L_i^2 nu_i^4 n^2) + 2 sum_i sigma_{f_i}^2`.
pub fn value_variance_bound(
    constants: &SmoothnessConstants,
    config: &SmoothingConfig,
    n: usize,
) -> f64 {
    let nf = n as f64;
    (1..constants.len())
        .map(|i| {
            let nu = config.nu[i - 1];
            let m = constants.value_lipschitz[i];
            let l = constants.grad_lipschitz[i];
            let sf = constants.value_noise[i];
            4.0 * (nf + 2.0) * m * m * nu * nu + l * l * nu.powi(4) * nf * nf + 2.0 * sf * sf
        })
        .sum()
}

/// `|f_nu(x) - f(x)| <= nu^2 L n / 2`.
pub fn smoothing_bias_bound(l: f64, nu: f64, n: usize) -> f64 {
    0.5 * nu * nu * l * n as f64
}
