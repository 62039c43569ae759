//! Invariant checks over seeded random channels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{DensityMatrix, ParamVector};
use crate::error::Result;
use crate::estimator::{build_lowered_a, build_povm, raise_index};
use crate::fisher::{classical_fisher, divergent_fisher, pure_input_dominance_check};
use crate::numkit::{self, RealMatrix};
use crate::scenarios::{random_fixture, RandomFixture, SweepConfig};
use crate::spectral::{delta_matrix, diagonalize_output, lambda_matrix, output_shifts, trace_power_check, DeltaVariant};

pub const POSITIVITY_TOL: f64 = 1e-10;
pub const FIRST_ORDER_SLOPE: f64 = 2.0;
pub const FIRST_ORDER_SLOPE_TOL: f64 = 0.15;
/// `‖J^c − J^div‖` may not grow faster than this order.
pub const FISHER_DIFFERENCE_MIN_SLOPE: f64 = -0.2;
/// Fixtures with index below this also run the mixed-input comparison.
pub const DOMINANCE_FIXTURES: u64 = 20;
const ESTIMATOR_SCALE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureOutcome {
    pub seed: u64,
    pub dim: usize,
    pub params: usize,
    pub jumps: usize,
    pub with_hamiltonian: bool,
    pub tpcp: f64,
    pub min_eigenvalue: f64,
    pub first_order_slope: Option<f64>,
    pub trace_power: Option<f64>,
    pub completeness: Option<f64>,
    pub fisher_difference_slope: Option<f64>,
    pub dominance: Option<bool>,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub outcomes: Vec<FixtureOutcome>,
    pub passed: bool,
}

impl SuiteReport {
    pub fn failures(&self) -> impl Iterator<Item = (u64, &str)> {
        self.outcomes
            .iter()
            .flat_map(|o| o.failures.iter().map(move |f| (o.seed, f.as_str())))
    }

    /// Worst value of `f` over fixtures where it applies.
    pub fn worst<F: Fn(&FixtureOutcome) -> Option<f64>>(&self, f: F, largest: bool) -> Option<f64> {
        let vals = self.outcomes.iter().filter_map(f);
        if largest {
            vals.reduce(f64::max)
        } else {
            vals.reduce(f64::min)
        }
    }
}

/// Seeds `first..first + count`, evaluated in parallel and reported in seed order.
pub fn run_random_suite(first: u64, count: u64) -> SuiteReport {
    let outcomes: Vec<FixtureOutcome> = (first..first + count).into_par_iter().map(check_seed).collect();
    let passed = outcomes.iter().all(|o| o.failures.is_empty());
    SuiteReport { outcomes, passed }
}

fn check_seed(seed: u64) -> FixtureOutcome {
    match random_fixture(seed) {
        Ok(fx) => check_fixture(&fx),
        Err(e) => FixtureOutcome {
            seed,
            dim: 0,
            params: 0,
            jumps: 0,
            with_hamiltonian: false,
            tpcp: f64::NAN,
            min_eigenvalue: f64::NAN,
            first_order_slope: None,
            trace_power: None,
            completeness: None,
            fisher_difference_slope: None,
            dominance: None,
            failures: vec![format!("fixture: {e}")],
        },
    }
}

pub fn check_fixture(fx: &RandomFixture) -> FixtureOutcome {
    let d = fx.channel.n_params();
    let mut out = FixtureOutcome {
        seed: fx.seed,
        dim: fx.dim,
        params: d,
        jumps: fx.jump_count(),
        with_hamiltonian: fx.with_hamiltonian,
        tpcp: 0.0,
        min_eigenvalue: f64::INFINITY,
        first_order_slope: None,
        trace_power: None,
        completeness: None,
        fisher_difference_slope: None,
        dominance: None,
        failures: Vec::new(),
    };
    if let Err(e) = run_checks(fx, &mut out) {
        out.failures.push(format!("error: {e}"));
    }
    out
}

fn run_checks(fx: &RandomFixture, out: &mut FixtureOutcome) -> Result<()> {
    let ch = &fx.channel;
    let phi = &fx.input;
    let rho0 = numkit::projector(phi);
    let sweep = SweepConfig::uniform(ch.n_params());
    let first_order: Vec<_> = (0..ch.n_params())
        .map(|mu| ch.derivative_at_zero(mu, &rho0))
        .collect::<Result<_>>()?;

    let mut consistency = Vec::new();
    let mut fisher_diff = Vec::new();
    let mut fisher_diff_floor = 0usize;
    for &s in &sweep.scales {
        let eps = sweep.point(s);
        out.tpcp = out.tpcp.max(ch.tpcp_residual(&eps)?);
        let dev = ch.output_deviation(&rho0, &eps)?;
        let out_rho = &rho0 + &dev;
        let min_eig = *numkit::hermitian_eigendecompose(&out_rho)?.eigenvalues.last().expect("nonempty");
        out.min_eigenvalue = out.min_eigenvalue.min(min_eig);
        let mut linear = dev.clone();
        for (mu, dr) in first_order.iter().enumerate() {
            linear -= dr.map(|z| z * eps[mu]);
        }
        consistency.push((s, linear.norm()));

        if fx.jump_count() < fx.dim {
            let dm = delta_matrix(ch, phi, &eps, DeltaVariant::Leading)?;
            let lm = lambda_matrix(ch, phi, &eps)?;
            let tp = trace_power_check(&dm, &lm, fx.dim - 1);
            out.trace_power = Some(out.trace_power.unwrap_or(0.0).max(tp));
        }

        let spec = diagonalize_output(ch, phi, &eps)?;
        let shifts = output_shifts(ch, &spec)?;
        let jc = classical_fisher(&spec.probs, &spec.prob_gradients())?;
        let jdiv = divergent_fisher(&shifts)?;
        let diff = (&jc.entries - &jdiv.entries).norm();
        if diff <= 1e-12 * jdiv.entries.norm() {
            fisher_diff_floor += 1;
        } else {
            fisher_diff.push((s, diff));
        }

        if s == nearest(&sweep.scales, ESTIMATOR_SCALE) {
            let lowered = build_lowered_a(&spec, &shifts)?;
            let povm = build_povm(&raise_index(&lowered, &jdiv)?)?;
            out.completeness = Some(povm.completeness_residual());
        }
    }

    if out.tpcp > crate::sweep::TPCP_TOL {
        out.failures.push(format!("tpcp residual {:e}", out.tpcp));
    }
    if out.min_eigenvalue < -POSITIVITY_TOL {
        out.failures.push(format!("output eigenvalue {:e}", out.min_eigenvalue));
    }
    let slope = numkit::power_order_fit(&consistency)?.slope;
    out.first_order_slope = Some(slope);
    if (slope - FIRST_ORDER_SLOPE).abs() > FIRST_ORDER_SLOPE_TOL {
        out.failures.push(format!("first-order remainder slope {slope:.3}"));
    }
    if let Some(tp) = out.trace_power {
        if tp > crate::sweep::TRACE_POWER_TOL {
            out.failures.push(format!("trace-power residual {tp:e}"));
        }
    }
    match out.completeness {
        Some(c) if c > crate::sweep::COMPLETENESS_TOL => out.failures.push(format!("POVM completeness {c:e}")),
        None => out.failures.push("estimator not built".into()),
        _ => {}
    }
    if fisher_diff_floor < sweep.scales.len() {
        let slope = numkit::power_order_fit(&fisher_diff)?.slope;
        out.fisher_difference_slope = Some(slope);
        if slope < FISHER_DIFFERENCE_MIN_SLOPE {
            out.failures.push(format!("J^c − J^div grows with order {slope:.3}"));
        }
    }

    if fx.seed < DOMINANCE_FIXTURES {
        let ok = dominance(fx)?;
        out.dominance = Some(ok);
        if !ok {
            out.failures.push("mixed input beats its pure components".into());
        }
    }
    Ok(())
}

fn nearest(scales: &[f64], target: f64) -> f64 {
    *scales
        .iter()
        .min_by(|a, b| (a.ln() - target.ln()).abs().total_cmp(&(b.ln() - target.ln()).abs()))
        .expect("nonempty scales")
}

/// Mixture of the fixture input with a second random state, probed along a random direction.
fn dominance(fx: &RandomFixture) -> Result<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(fx.seed);
    rng.set_stream(1);
    let other = numkit::random_pure_state(&mut rng, fx.dim);
    let w: f64 = rng.random_range(0.2..0.8);
    let rho = numkit::projector(&fx.input).map(|z| z * w) + numkit::projector(&other).map(|z| z * (1.0 - w));
    let rho = DensityMatrix::new(numkit::hermitian_part(&rho))?;
    let d = fx.channel.n_params();
    let u: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let u: Vec<f64> = u.iter().map(|x| x / norm).collect();
    let eps = ParamVector::along(&vec![1.0 / d as f64; d], ESTIMATOR_SCALE)?;
    pure_input_dominance_check(&fx.channel, &rho, &[(w, fx.input.clone()), (1.0 - w, other)], &u, &eps)
}

/// Convenience for reporting: `‖J^c − J^div‖_F` at one scale.
pub fn fisher_difference(fx: &RandomFixture, scale: f64) -> Result<f64> {
    let d = fx.channel.n_params();
    let eps = ParamVector::along(&vec![1.0 / d as f64; d], scale)?;
    let spec = diagonalize_output(&fx.channel, &fx.input, &eps)?;
    let shifts = output_shifts(&fx.channel, &spec)?;
    let jc: RealMatrix = classical_fisher(&spec.probs, &spec.prob_gradients())?.entries;
    Ok((jc - divergent_fisher(&shifts)?.entries).norm())
}
