//! Quick invariant and diagnostic checks, runnable from the command line.

use nalgebra::DVector;
use rand::Rng;

use crate::conex::{conex_run, ConexParams};
use crate::experiment::custom_1d_problem;
use crate::geometry::{prox_step, Domain, Geometry};
use crate::nonconvex::{kkt_residual, regularized_min_curvature, ProximalConfig};
use crate::problem::{ledger_expected_calls, NoiseModel};
use crate::qcqp::{
    gap_function_q, generate_qcqp, lemma4_gap_diagnostic, reference_solve, KKT_TOL,
};
use crate::rng::{Stream, StreamSet};
use crate::smoothing::{select_smoothing_parameters, SmoothingConfig};
use crate::conex::problem_diameters;
use crate::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, body: impl FnOnce() -> Result<(bool, String)>) -> CheckOutcome {
    match body() {
        Ok((passed, detail)) => CheckOutcome {
            name,
            passed,
            detail,
        },
        Err(e) => CheckOutcome {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn ledger() -> Result<(bool, String)> {
    let mut worst = String::new();
    let mut ok = true;
    for (m, t) in [(0usize, 5usize), (1, 10), (3, 100)] {
        let inst = generate_qcqp(3, m, true, 1)?;
        let problem = inst.to_problem(NoiseModel::none())?;
        let config = SmoothingConfig::uniform(0.01, m)?;
        let out = conex_run(&problem, &ConexParams::constant(t, 1e3, 1.0), &config, &DVector::zeros(3), 1)?;
        let expected = ledger_expected_calls(m, t);
        ok &= out.ledger.total() == expected;
        worst += &format!("(m={m},T={t}): {} of {expected}; ", out.ledger.total());
    }
    Ok((ok, worst))
}

fn prox_variational_inequality() -> Result<(bool, String)> {
    let mut rng = StreamSet::new(11).stream(Stream::Aux(0));
    let domains = [Domain::cube(4, 1.0)?, Domain::ball(DVector::from_element(4, 0.5), 1.5)?];
    let mut worst = 0.0f64;
    for k in 0..1000 {
        let domain = &domains[k % 2];
        let x_tilde = domain.project(&DVector::from_fn(4, |_, _| rng.random_range(-2.0..2.0)));
        let v = DVector::from_fn(4, |_, _| rng.random_range(-5.0..5.0));
        let eta = rng.random_range(0.1..10.0);
        let x = prox_step(&Geometry::Euclidean, domain, &v, &x_tilde, eta)?;
        let g = &v + (&x - &x_tilde) * eta;
        for _ in 0..4 {
            let z = domain.project(&DVector::from_fn(4, |_, _| rng.random_range(-2.0..2.0)));
            worst = worst.min(g.dot(&(z - &x)));
        }
    }
    Ok((worst >= -1e-9, format!("min <v + eta (x - x~), z - x> = {worst:e}")))
}

fn reference_certificates() -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for seed in 0..5 {
        let sol = reference_solve(&generate_qcqp(8, 2, true, seed)?)?;
        worst = worst.max(sol.kkt_residual);
    }
    Ok((worst <= KKT_TOL, format!("largest KKT residual {worst:e}")))
}

fn saddle_and_smoothing_gap() -> Result<(bool, String)> {
    let inst = generate_qcqp(6, 2, true, 3)?;
    let sol = reference_solve(&inst)?;
    let problem = inst.to_problem(NoiseModel::none())?;
    let (_, m_x) = problem_diameters(&problem);
    let config = select_smoothing_parameters(&problem.constants, 6, 1000, m_x);
    let mut rng = StreamSet::new(5).stream(Stream::Aux(1));
    let mut min_q = f64::INFINITY;
    let mut lemma_ok = true;
    for _ in 0..200 {
        let x = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
        let y = DVector::from_fn(2, |_, _| rng.random_range(0.0..1.0));
        min_q = min_q.min(gap_function_q(&inst, &x, &y, &sol.x_star, &sol.y_star));
        let yb = DVector::from_fn(2, |_, _| rng.random_range(0.0..1.0));
        lemma_ok &= lemma4_gap_diagnostic(&inst, &config, &x, &y, &sol.x_star, &yb)?.holds();
    }
    let kkt = kkt_residual(&problem, &sol.x_star, &sol.y_star)?;
    Ok((
        min_q >= -1e-6 && lemma_ok && kkt.max_residual() <= KKT_TOL,
        format!("min Q = {min_q:e}, smoothing-gap bound holds: {lemma_ok}"),
    ))
}

fn convexified_subproblems() -> Result<(bool, String)> {
    let mut worst = f64::INFINITY;
    for seed in 0..10 {
        let inst = generate_qcqp(10, 2, false, seed)?;
        let constants = inst.constants(0.0)?;
        let prox = ProximalConfig::with_default_weights(
            &constants,
            1,
            crate::nonconvex::InnerSchedule::Fixed(ConexParams::constant(1, 1.0, 1.0)),
        )?;
        for (i, f) in inst.functions.iter().enumerate() {
            worst = worst.min(regularized_min_curvature(&f.a, prox.weight(i)));
        }
    }
    Ok((worst >= 0.0, format!("smallest regularized curvature {worst:e}")))
}

fn one_dimensional_solve() -> Result<(bool, String)> {
    let problem = custom_1d_problem(NoiseModel::none());
    let config = SmoothingConfig::uniform(1e-3, 1)?;
    let out = conex_run(&problem, &ConexParams::constant(5000, 50.0, 5.0), &config, &DVector::zeros(1), 3)?;
    let err = (out.x_bar[0] - 0.5).abs();
    Ok((err <= 0.05, format!("|x_bar - 0.5| = {err:e}")))
}

/// Runs every check; each one is independent of the others.
pub fn run_all() -> Vec<CheckOutcome> {
    vec![
        check("oracle ledger exactness", ledger),
        check("prox variational inequality", prox_variational_inequality),
        check("reference KKT certificates", reference_certificates),
        check("saddle point and smoothing gap", saddle_and_smoothing_gap),
        check("convexified subproblems", convexified_subproblems),
        check("one-dimensional solve", one_dimensional_solve),
    ]
}
