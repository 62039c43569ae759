use lownoise_wasm::{ancilla_estimator, pauli_fisher, scenario_sweep};

#[test]
fn pauli_pipeline_matches_bloch_form() {
    let v = pauli_fisher(1e-3, 2e-3).unwrap();
    for (a, b) in v.fisher.iter().flatten().zip(v.bloch_fisher.iter().flatten()) {
        assert!((a - b).abs() <= 1e-8 * a.abs().max(1.0), "{a} vs {b}");
    }
    // one inverse eigenvalue stays finite, the other is of the noise order
    assert!(v.inverse_eigenvalues[0] > 1e-2);
    assert!(v.inverse_eigenvalues[1] < 1e-2);
}

#[test]
fn ancilla_estimator_is_efficient() {
    let v = ancilla_estimator(1e-3, 2e-3).unwrap();
    assert!(v.gap_norm <= 1e-12, "{}", v.gap_norm);
    assert!(v.bias.iter().all(|b| b.abs() <= 1e-12));
    assert!((v.mse[0][0] - 1e-3 * (1.0 - 1e-3)).abs() <= 1e-15);
}

#[test]
fn sweeps_run_and_reject_bad_input() {
    let v = scenario_sweep("ancilla-bell", 0.5).unwrap();
    assert!(v.passed);
    assert_eq!(v.scales.len(), 8);
    assert!(scenario_sweep("ancilla-bell", 1.5).is_err());
    assert!(scenario_sweep("nope", 0.5).is_err());
    let json = serde_json::to_string(&scenario_sweep("pauli", 0.3).unwrap()).unwrap();
    assert!(json.contains("bad-direction-bound"));
}
