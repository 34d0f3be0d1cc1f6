//! Fixtures shared by the benchmarks.

use nalgebra::DVector;
use zoconex::conex::problem_diameters;
use zoconex::problem::{NoiseCoupling, NoiseModel, ProblemSpec};
use zoconex::qcqp::generate_qcqp;
use zoconex::smoothing::{select_smoothing_parameters, SmoothingConfig};

/// A seeded convex QCQP with Gaussian noise, its theorem radii and a start point.
pub fn convex_fixture(n: usize, m: usize) -> (ProblemSpec, SmoothingConfig, DVector<f64>) {
    let inst = generate_qcqp(n, m, true, 42).expect("valid sizes");
    let noise = NoiseModel::gaussian(0.1, NoiseCoupling::Common).expect("valid noise");
    let problem = inst.to_problem(noise).expect("consistent problem");
    let (_, m_x) = problem_diameters(&problem);
    let smoothing = select_smoothing_parameters(&problem.constants, n, 10_000, m_x);
    let x0 = problem.domain.default_start();
    (problem, smoothing, x0)
}

/// Deterministic point with coordinates in `[-1, 1]`.
pub fn probe(n: usize, phase: f64) -> DVector<f64> {
    DVector::from_fn(n, |i, _| (phase + i as f64 * 0.7).sin())
}
