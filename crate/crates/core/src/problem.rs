//! The constrained stochastic problem: oracles, noise models, constants and
//! oracle-call accounting.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};

use crate::error::{check_dim, Error, Result};
use crate::geometry::Domain;
use crate::Point;

/// A deterministic real function of a point. For oracles this is the mean
/// function `f_i`; solvers never read it directly, only through noisy draws.
pub trait ScalarFunction: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn value(&self, x: &Point) -> f64;

    /// Closed-form gradient, when known. Used only by diagnostics.
    fn gradient(&self, _x: &Point) -> Option<Point> {
        None
    }

    /// Whether `value` is an exact noiseless reference usable for traces.
    fn has_reference(&self) -> bool {
        true
    }
}

/// `x -> <a, x> + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Affine {
    pub slope: Point,
    pub offset: f64,
}

impl Affine {
    pub fn new(slope: Point, offset: f64) -> Self {
        Self { slope, offset }
    }
}

impl ScalarFunction for Affine {
    fn dim(&self) -> usize {
        self.slope.len()
    }

    fn value(&self, x: &Point) -> f64 {
        self.slope.dot(x) + self.offset
    }

    fn gradient(&self, _x: &Point) -> Option<Point> {
        Some(self.slope.clone())
    }
}

/// How the noise of a two-point pair is realized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseCoupling {
    /// Each of the two evaluations receives its own additive draw.
    #[default]
    Independent,
    /// One draw is added to both evaluations, so it cancels in differences.
    Common,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseKind {
    None,
    Gaussian { sigma: f64 },
    /// `scale * t_dof`; `dof > 2` keeps the variance finite.
    StudentT { dof: f64, scale: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub coupling: NoiseCoupling,
}

impl NoiseModel {
    pub fn none() -> Self {
        Self {
            kind: NoiseKind::None,
            coupling: NoiseCoupling::Independent,
        }
    }

    pub fn gaussian(sigma: f64, coupling: NoiseCoupling) -> Result<Self> {
        let model = Self {
            kind: NoiseKind::Gaussian { sigma },
            coupling,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn student_t(dof: f64, scale: f64, coupling: NoiseCoupling) -> Result<Self> {
        let model = Self {
            kind: NoiseKind::StudentT { dof, scale },
            coupling,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            NoiseKind::None => Ok(()),
            NoiseKind::Gaussian { sigma } if sigma.is_finite() && sigma >= 0.0 => Ok(()),
            NoiseKind::Gaussian { sigma } => Err(Error::InvalidParameter(format!(
                "gaussian noise sigma must be finite and non-negative, got {sigma}"
            ))),
            NoiseKind::StudentT { dof, scale }
                if dof > 2.0 && dof.is_finite() && scale.is_finite() && scale >= 0.0 =>
            {
                Ok(())
            }
            NoiseKind::StudentT { dof, scale } => Err(Error::InvalidParameter(format!(
                "student-t noise needs dof > 2 and finite scale >= 0, got dof={dof} scale={scale}"
            ))),
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self.kind, NoiseKind::None)
    }

    /// Standard deviation of one additive draw.
    pub fn std_dev(&self) -> f64 {
        match self.kind {
            NoiseKind::None => 0.0,
            NoiseKind::Gaussian { sigma } => sigma,
            NoiseKind::StudentT { dof, scale } => scale * (dof / (dof - 2.0)).sqrt(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            NoiseKind::None => 0.0,
            NoiseKind::Gaussian { sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                sigma * z
            }
            NoiseKind::StudentT { dof, scale } => {
                // dof validated > 2 at construction
                let t = StudentT::new(dof).expect("validated dof");
                scale * t.sample(rng)
            }
        }
    }
}

/// Noisy value access to one function: `F(x, xi) = f(x) + noise`.
#[derive(Clone, Debug)]
pub struct StochasticOracle {
    pub function: Arc<dyn ScalarFunction>,
    pub noise: NoiseModel,
}

impl StochasticOracle {
    pub fn new(function: Arc<dyn ScalarFunction>, noise: NoiseModel) -> Self {
        Self { function, noise }
    }

    pub fn dim(&self) -> usize {
        self.function.dim()
    }

    /// Noiseless mean value, for diagnostics only.
    pub fn noiseless(&self, x: &Point) -> f64 {
        self.function.value(x)
    }

    /// One noisy evaluation. Does not touch a ledger.
    pub fn sample_value<R: Rng + ?Sized>(&self, x: &Point, rng: &mut R) -> f64 {
        self.function.value(x) + self.noise.sample(rng)
    }
}

/// Lipschitz and noise constants for `f_0..f_m` (index 0 is the objective).
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothnessConstants {
    /// Gradient-Lipschitz constants `L_i`.
    pub grad_lipschitz: Vec<f64>,
    /// Value-Lipschitz constants `M_i`.
    pub value_lipschitz: Vec<f64>,
    /// Gradient-noise bounds `sigma_i`.
    pub grad_noise: Vec<f64>,
    /// Value-noise bounds `sigma_{f_i}`.
    pub value_noise: Vec<f64>,
}

impl SmoothnessConstants {
    pub fn new(
        grad_lipschitz: Vec<f64>,
        value_lipschitz: Vec<f64>,
        grad_noise: Vec<f64>,
        value_noise: Vec<f64>,
    ) -> Result<Self> {
        let c = Self {
            grad_lipschitz,
            value_lipschitz,
            grad_noise,
            value_noise,
        };
        c.validate()?;
        Ok(c)
    }

    /// Number of functions, `m + 1`.
    pub fn len(&self) -> usize {
        self.grad_lipschitz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grad_lipschitz.is_empty()
    }

    pub fn constraint_count(&self) -> usize {
        self.len().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.grad_lipschitz.len();
        if n == 0 {
            return Err(Error::InvalidParameter(
                "constants need at least the objective entry".into(),
            ));
        }
        for (name, v) in [
            ("grad_lipschitz", &self.grad_lipschitz),
            ("value_lipschitz", &self.value_lipschitz),
            ("grad_noise", &self.grad_noise),
            ("value_noise", &self.value_noise),
        ] {
            if v.len() != n {
                return Err(Error::InvalidParameter(format!(
                    "{name} has {} entries, expected {n}",
                    v.len()
                )));
            }
            if let Some(bad) = v.iter().find(|c| !c.is_finite() || **c < 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} entries must be finite and non-negative, got {bad}"
                )));
            }
        }
        Ok(())
    }
}

/// Aggregate constraint constants `(M_f, L_f)`: Euclidean norms of the
/// constraint entries, objective excluded.
pub fn aggregate_constants(constants: &SmoothnessConstants) -> (f64, f64) {
    let norm = |v: &[f64]| v.iter().skip(1).map(|c| c * c).sum::<f64>().sqrt();
    (
        norm(&constants.value_lipschitz),
        norm(&constants.grad_lipschitz),
    )
}

/// Per-function oracle-call counters.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OracleLedger {
    per_function: Vec<u64>,
    total: u64,
}

impl OracleLedger {
    pub fn new(functions: usize) -> Self {
        Self {
            per_function: vec![0; functions],
            total: 0,
        }
    }

    pub fn record(&mut self, index: usize, calls: u64) {
        if index >= self.per_function.len() {
            self.per_function.resize(index + 1, 0);
        }
        self.per_function[index] += calls;
        self.total += calls;
    }

    pub fn calls(&self, index: usize) -> u64 {
        self.per_function.get(index).copied().unwrap_or(0)
    }

    pub fn per_function(&self) -> &[u64] {
        &self.per_function
    }

    pub fn total(&self) -> u64 {
        self.total
    }
}

/// Exact oracle-call count of a constraint-extrapolation run with `m`
/// constraints and `iterations` steps: every round at a point spends 2 calls
/// on the objective gradient and 4 per constraint (gradient plus
/// linearization), and one extra round happens at the starting point.
pub fn ledger_expected_calls(m: usize, iterations: usize) -> u64 {
    (2 + 4 * m as u64) * (iterations as u64 + 1)
}

/// Evaluates `F(x_shifted, xi)` and `F(x, xi)` for one noise realization.
///
/// With [`NoiseCoupling::Common`] the same additive draw enters both values;
/// with [`NoiseCoupling::Independent`] each value gets its own sub-draw
/// (shifted point first). Charges 2 calls to `index` in the ledger.
pub fn draw_noisy_pair<R: Rng + ?Sized>(
    oracle: &StochasticOracle,
    index: usize,
    x: &Point,
    x_shifted: &Point,
    noise_rng: &mut R,
    ledger: &mut OracleLedger,
) -> Result<(f64, f64)> {
    let n = oracle.dim();
    check_dim(n, x.len())?;
    check_dim(n, x_shifted.len())?;
    let (noise_shifted, noise_base) = match oracle.noise.coupling {
        _ if oracle.noise.is_none() => (0.0, 0.0),
        NoiseCoupling::Common => {
            let xi = oracle.noise.sample(noise_rng);
            (xi, xi)
        }
        NoiseCoupling::Independent => {
            let a = oracle.noise.sample(noise_rng);
            let b = oracle.noise.sample(noise_rng);
            (a, b)
        }
    };
    ledger.record(index, 2);
    let shifted = oracle.function.value(x_shifted) + noise_shifted;
    let base = oracle.function.value(x) + noise_base;
    Ok((shifted, base))
}

/// `min f_0(x)` over `x` in the domain subject to `f_i(x) <= 0`.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    /// `m + 1` oracles, objective first.
    pub oracles: Vec<StochasticOracle>,
    pub domain: Domain,
    pub constants: SmoothnessConstants,
}

impl ProblemSpec {
    pub fn new(
        oracles: Vec<StochasticOracle>,
        domain: Domain,
        constants: SmoothnessConstants,
    ) -> Result<Self> {
        if oracles.is_empty() {
            return Err(Error::InvalidParameter(
                "a problem needs at least an objective oracle".into(),
            ));
        }
        constants.validate()?;
        if constants.len() != oracles.len() {
            return Err(Error::InvalidParameter(format!(
                "{} oracles but constants for {} functions",
                oracles.len(),
                constants.len()
            )));
        }
        let n = domain.dim();
        for o in &oracles {
            check_dim(n, o.dim())?;
            o.noise.validate()?;
        }
        Ok(Self {
            oracles,
            domain,
            constants,
        })
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn constraint_count(&self) -> usize {
        self.oracles.len() - 1
    }

    /// True when every oracle carries a noiseless reference function.
    pub fn has_reference(&self) -> bool {
        self.oracles.iter().all(|o| o.function.has_reference())
    }

    /// Noiseless constraint values `f_1(x)..f_m(x)`.
    pub fn constraint_values(&self, x: &Point) -> DVector<f64> {
        DVector::from_iterator(
            self.constraint_count(),
            self.oracles[1..].iter().map(|o| o.noiseless(x)),
        )
    }

    /// Noiseless `||[f(x)]_+||_2`.
    pub fn violation(&self, x: &Point) -> f64 {
        self.oracles[1..]
            .iter()
            .map(|o| o.noiseless(x).max(0.0).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Replaces every oracle's noise model.
    pub fn with_noise(mut self, noise: NoiseModel) -> Result<Self> {
        noise.validate()?;
        for o in &mut self.oracles {
            o.noise = noise;
        }
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Stream, StreamSet};

    fn constants(m: Vec<f64>, l: Vec<f64>) -> SmoothnessConstants {
        let k = m.len();
        SmoothnessConstants::new(l, m, vec![0.0; k], vec![0.0; k]).unwrap()
    }

    #[test]
    fn aggregate_constants_skip_objective() {
        let c = constants(vec![5.0, 3.0, 4.0], vec![1.0, 1.0, 1.0]);
        assert_eq!(aggregate_constants(&c).0, 5.0);
        let c = constants(vec![1.0; 4], vec![1.0, 2.0, 0.0, 0.0]);
        assert_eq!(aggregate_constants(&c).1, 2.0);
        let c = constants(vec![1.0; 5], vec![1.0; 5]);
        assert_eq!(aggregate_constants(&c).0, 2.0);
        let c = constants(vec![3.0], vec![7.0]);
        assert_eq!(aggregate_constants(&c), (0.0, 0.0));
    }

    #[test]
    fn ledger_expected_call_counts() {
        assert_eq!(ledger_expected_calls(1, 10), 66);
        assert_eq!(ledger_expected_calls(0, 5), 12);
        assert_eq!(ledger_expected_calls(3, 1), 28);
    }

    #[test]
    fn ledger_total_is_sum() {
        let mut l = OracleLedger::new(2);
        l.record(0, 2);
        l.record(1, 4);
        l.record(3, 2);
        assert_eq!(l.total(), l.per_function().iter().sum::<u64>());
        assert_eq!(l.calls(2), 0);
    }

    fn x1() -> Arc<dyn ScalarFunction> {
        Arc::new(Affine::new(DVector::from_vec(vec![1.0]), 0.0))
    }

    #[test]
    fn noiseless_pair() {
        let oracle = StochasticOracle::new(x1(), NoiseModel::none());
        let mut rng = StreamSet::new(0).stream(Stream::Noise(0));
        let mut ledger = OracleLedger::new(1);
        let pair = draw_noisy_pair(
            &oracle,
            0,
            &DVector::from_vec(vec![0.0]),
            &DVector::from_vec(vec![1.0]),
            &mut rng,
            &mut ledger,
        )
        .unwrap();
        assert_eq!(pair, (1.0, 0.0));
        assert_eq!(ledger.total(), 2);
    }

    #[test]
    fn common_noise_cancels_in_difference() {
        let noise = NoiseModel::gaussian(0.1, NoiseCoupling::Common).unwrap();
        let oracle = StochasticOracle::new(x1(), noise);
        let mut rng = StreamSet::new(5).stream(Stream::Noise(0));
        let mut ledger = OracleLedger::new(1);
        let x = DVector::from_vec(vec![0.25]);
        let xs = DVector::from_vec(vec![1.25]);
        for _ in 0..10 {
            let (a, b) = draw_noisy_pair(&oracle, 0, &x, &xs, &mut rng, &mut ledger).unwrap();
            assert_ne!(b, 0.25);
            assert!(((a - b) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pair_rejects_dimension_mismatch() {
        let oracle = StochasticOracle::new(x1(), NoiseModel::none());
        let mut rng = StreamSet::new(0).stream(Stream::Noise(0));
        let mut ledger = OracleLedger::new(1);
        let err = draw_noisy_pair(
            &oracle,
            0,
            &DVector::zeros(2),
            &DVector::zeros(1),
            &mut rng,
            &mut ledger,
        );
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
        assert_eq!(ledger.total(), 0);
    }

    #[test]
    fn noiseless_pairs_repeat() {
        let oracle = StochasticOracle::new(x1(), NoiseModel::none());
        let mut ledger = OracleLedger::new(1);
        let x = DVector::from_vec(vec![0.3]);
        let xs = DVector::from_vec(vec![0.7]);
        let mut r1 = StreamSet::new(1).stream(Stream::Noise(0));
        let mut r2 = StreamSet::new(2).stream(Stream::Noise(0));
        let a = draw_noisy_pair(&oracle, 0, &x, &xs, &mut r1, &mut ledger).unwrap();
        let b = draw_noisy_pair(&oracle, 0, &x, &xs, &mut r2, &mut ledger).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pair_first_value_is_unbiased() {
        // 10^4 pairs: mean of F(x_shifted) within 3 standard errors of f(x_shifted).
        let noise = NoiseModel::gaussian(0.5, NoiseCoupling::Independent).unwrap();
        let oracle = StochasticOracle::new(x1(), noise);
        let mut rng = StreamSet::new(17).stream(Stream::Noise(0));
        let mut ledger = OracleLedger::new(1);
        let x = DVector::from_vec(vec![0.0]);
        let xs = DVector::from_vec(vec![2.0]);
        let n = 10_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| draw_noisy_pair(&oracle, 0, &x, &xs, &mut rng, &mut ledger).unwrap().0)
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - 2.0).abs() <= 3.0 * se, "mean {mean} se {se}");
        assert_eq!(ledger.total(), 2 * n as u64);
    }

    #[test]
    fn gaussian_mean_converges() {
        // |mean - f(x)| <= 4 sigma / sqrt(N) at N = 10^5.
        let sigma = 0.3;
        let noise = NoiseModel::gaussian(sigma, NoiseCoupling::Independent).unwrap();
        let oracle = StochasticOracle::new(x1(), noise);
        let mut rng = StreamSet::new(99).stream(Stream::Noise(0));
        let x = DVector::from_vec(vec![-1.5]);
        let n = 100_000;
        let mean = (0..n).map(|_| oracle.sample_value(&x, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean + 1.5).abs() <= 4.0 * sigma / (n as f64).sqrt());
    }

    #[test]
    fn student_t_needs_finite_variance() {
        assert!(NoiseModel::student_t(2.0, 1.0, NoiseCoupling::Independent).is_err());
        let t = NoiseModel::student_t(5.0, 1.0, NoiseCoupling::Independent).unwrap();
        assert!((t.std_dev() - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        let mut rng = StreamSet::new(4).stream(Stream::Aux(0));
        let n = 200_000;
        let mean = (0..n).map(|_| t.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 4.0 * t.std_dev() / (n as f64).sqrt());
    }

    #[test]
    fn negative_constants_rejected() {
        assert!(SmoothnessConstants::new(vec![-1.0], vec![1.0], vec![0.0], vec![0.0]).is_err());
        assert!(SmoothnessConstants::new(vec![1.0, 1.0], vec![1.0], vec![0.0], vec![0.0]).is_err());
    }
}
