//! Replicated experiments over the benchmark families, written as CSV.

pub mod config;
pub mod output;
pub mod runner;

use std::sync::Arc;

use nalgebra::DVector;

pub use config::{default_config, ExperimentConfig, Family, ParamMode, PRESETS};
pub use output::{read_summary, read_trace, summarize, SummaryRow, TraceRow};
pub use runner::{checkpoint_grid, run_experiment, run_trials, ExperimentReport, TrialOutcome};

use crate::geometry::Domain;
use crate::problem::{Affine, NoiseModel, ProblemSpec, SmoothnessConstants, StochasticOracle};

/// `min x` over `[0, 1]` subject to `0.5 - x <= 0`; the optimum is 0.5.
pub fn custom_1d_problem(noise: NoiseModel) -> ProblemSpec {
    let one = DVector::from_element(1, 1.0);
    let std = noise.std_dev();
    let oracles = vec![
        StochasticOracle::new(Arc::new(Affine::new(one.clone(), 0.0)), noise),
        StochasticOracle::new(Arc::new(Affine::new(-one, 0.5)), noise),
    ];
    let constants =
        SmoothnessConstants::new(vec![0.0; 2], vec![1.0; 2], vec![0.0; 2], vec![std; 2])
            .expect("constants are valid");
    let domain = Domain::new_box(DVector::zeros(1), DVector::from_element(1, 1.0))
        .expect("unit interval");
    ProblemSpec::new(oracles, domain, constants).expect("consistent problem")
}
