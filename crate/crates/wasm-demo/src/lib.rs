//! Three browser-facing operations. Each returns a JSON string so the page
//! needs no generated type bindings.

use lownoise::channel::ParamVector;
use lownoise::estimator::{analytic_mse, build_lowered_a, build_povm, cr_gap, raise_index, unbiasedness_residual};
use lownoise::fisher::{divergent_fisher, fisher_inverse, quantum_fisher, real_eigenvalues};
use lownoise::numkit::RealMatrix;
use lownoise::scenarios::{build_scenario, scenario_ancilla_bell, scenario_pauli2, ClosedForms, ScenarioConfig, ScenarioKind};
use lownoise::spectral::diagonalize_output;
use lownoise::sweep::run_sweep;
use lownoise::Result;
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn rows(m: &RealMatrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[derive(Debug, Serialize)]
pub struct PauliView {
    pub fisher: Vec<Vec<f64>>,
    pub bloch_fisher: Vec<Vec<f64>>,
    pub inverse: Vec<Vec<f64>>,
    /// Descending; the second one shrinks linearly with the noise.
    pub inverse_eigenvalues: Vec<f64>,
}

/// Fisher matrix of the qubit σx/σz channel, from the generic pipeline and
/// from the Bloch-vector formula.
pub fn pauli_fisher(e1: f64, e2: f64) -> Result<PauliView> {
    let sc = scenario_pauli2();
    let eps = ParamVector::new(vec![e1, e2])?;
    let spec = diagonalize_output(&sc.channel, &sc.input, &eps)?;
    let fisher = quantum_fisher(&spec, &spec.derivatives);
    let inverse = fisher_inverse(&fisher)?.inverse.unwrap_or_else(|| RealMatrix::zeros(2, 2));
    let Some(ClosedForms::Pauli(forms)) = &sc.closed_forms else {
        unreachable!("pauli scenario carries its closed forms")
    };
    Ok(PauliView {
        fisher: rows(&fisher.entries),
        bloch_fisher: rows(&forms.fisher(&[e1, e2])),
        inverse_eigenvalues: real_eigenvalues(&inverse),
        inverse: rows(&inverse),
    })
}

#[derive(Debug, Serialize)]
pub struct EstimatorView {
    pub mse: Vec<Vec<f64>>,
    pub inverse_fisher: Vec<Vec<f64>>,
    pub gap_norm: f64,
    pub gap_min_eigenvalue: f64,
    pub bias: Vec<f64>,
    pub outcomes: usize,
}

/// Locally unbiased estimator for the ancilla-assisted qubit channel, built
/// at `(e1, e2)` and evaluated at the same point.
pub fn ancilla_estimator(e1: f64, e2: f64) -> Result<EstimatorView> {
    let sc = scenario_ancilla_bell();
    let eps = ParamVector::new(vec![e1, e2])?;
    let spec = diagonalize_output(&sc.channel, &sc.input, &eps)?;
    let shifts = lownoise::spectral::output_shifts(&sc.channel, &spec)?;
    let jdiv = divergent_fisher(&shifts)?;
    let povm = build_povm(&raise_index(&build_lowered_a(&spec, &shifts)?, &jdiv)?)?;
    let v = analytic_mse(&povm, &sc.channel, &sc.input, &eps)?;
    let jinv = fisher_inverse(&quantum_fisher(&spec, &spec.derivatives))?
        .inverse
        .unwrap_or_else(|| RealMatrix::zeros(2, 2));
    let gap = cr_gap(&v.entries, &jinv)?;
    Ok(EstimatorView {
        mse: rows(&v.entries),
        inverse_fisher: rows(&jinv),
        gap_norm: gap.norm,
        gap_min_eigenvalue: gap.min_eigenvalue,
        bias: unbiasedness_residual(&povm, &sc.channel, &sc.input, &eps)?,
        outcomes: povm.merged().elements.len(),
    })
}

#[derive(Debug, Serialize)]
pub struct SweepView {
    pub scenario: String,
    pub scales: Vec<f64>,
    /// Quantity name and fitted power-law order.
    pub slopes: Vec<(String, Option<f64>)>,
    /// Check name, pass, expected pass, detail.
    pub checks: Vec<(String, bool, bool, String)>,
    pub passed: bool,
}

/// Default sweep of a named scenario along `(w, 1 − w)`.
pub fn scenario_sweep(name: &str, weight: f64) -> Result<SweepView> {
    let mut cfg = build_scenario(&ScenarioConfig::named(ScenarioKind::from_name(name)?))?.config;
    cfg.sweep = cfg.sweep.take().map(|s| s.with_direction(&[weight, 1.0 - weight])).transpose()?;
    let r = run_sweep(&build_scenario(&cfg)?)?;
    Ok(SweepView {
        scenario: r.scenario.clone(),
        scales: r.points.iter().map(|p| p.scale).collect(),
        slopes: r.fits.iter().map(|(q, f)| (q.name().to_string(), f.fit.map(|f| f.slope))).collect(),
        checks: r
            .checks
            .iter()
            .map(|c| (c.name.clone(), c.pass, c.expected_pass, c.detail.clone()))
            .collect(),
        passed: r.passed,
    })
}

fn to_js<T: Serialize>(r: Result<T>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = pauliFisher)]
pub fn pauli_fisher_js(e1: f64, e2: f64) -> Result<String, JsError> {
    to_js(pauli_fisher(e1, e2))
}

#[wasm_bindgen(js_name = ancillaEstimator)]
pub fn ancilla_estimator_js(e1: f64, e2: f64) -> Result<String, JsError> {
    to_js(ancilla_estimator(e1, e2))
}

#[wasm_bindgen(js_name = scenarioSweep)]
pub fn scenario_sweep_js(name: &str, weight: f64) -> Result<String, JsError> {
    to_js(scenario_sweep(name, weight))
}
