//! Stochastic zeroth-order optimization under stochastic zeroth-order
//! functional constraints.
//!
//! The crate solves problems of the form
//!
//! ```text
//! minimize f_0(x) over x in X   subject to   f_i(x) <= 0,  i = 1..m
//! ```
//!
//! where every `f_i` is observed only through noisy function values and `X`
//! is a known compact convex set with an exact prox-operator. The main pieces:
//!
//! * [`smoothing`]: Gaussian-smoothing two-point gradient estimates and the
//!   smoothing-radius selection rule, plus closed-form variance and bias
//!   bounds usable as diagnostics.
//! * [`conex`]: the constraint-extrapolation primal-dual method (stochastic
//!   linearization of the constraints, extrapolated dual ascent, prox descent,
//!   iterate averaging) and its default parameter schedule.
//! * [`nonconvex`]: a proximal-point outer loop that feeds convexified
//!   subproblems to [`conex`], with KKT-residual evaluation.
//! * [`qcqp`]: random QCQP instances, a certified reference solver and the
//!   benchmark metrics.
//! * [`experiment`]: seeded, replicated experiments writing CSV traces.
//!
//! ```
//! use nalgebra::DVector;
//! use zoconex::prelude::*;
//!
//! // minimize x subject to 0.5 - x <= 0 over [0, 1]
//! let problem = zoconex::experiment::custom_1d_problem(NoiseModel::none());
//! let params = ConexParams::constant(2000, 50.0, 5.0);
//! let config = SmoothingConfig::new(1e-3, vec![1e-3]).unwrap();
//! let out = conex_run(&problem, &params, &config, &DVector::zeros(1), 7).unwrap();
//! assert!((out.x_bar[0] - 0.5).abs() < 0.05);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod conex;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod nonconvex;
pub mod problem;
pub mod qcqp;
pub mod rng;
pub mod smoothing;
pub mod verify;

pub use error::{Error, Result};

/// Point type used throughout the crate.
pub type Point = nalgebra::DVector<f64>;

pub mod prelude {
    pub use crate::conex::{conex_run, theorem1_schedule, ConexOutcome, ConexParams, RunTrace};
    pub use crate::error::{Error, Result};
    pub use crate::geometry::{prox_step, Domain, Geometry};
    pub use crate::nonconvex::{kkt_residual, meta_run, KktReport, ProximalConfig};
    pub use crate::problem::{
        Affine, NoiseCoupling, NoiseKind, NoiseModel, OracleLedger, ProblemSpec, ScalarFunction,
        SmoothnessConstants, StochasticOracle,
    };
    pub use crate::qcqp::{generate_qcqp, reference_solve, QcqpInstance, ReferenceSolution};
    pub use crate::smoothing::{select_smoothing_parameters, two_point_gradient, SmoothingConfig};
    pub use crate::Point;
}
