use lownoise::channel::{DensityMatrix, ParamVector};
use lownoise::estimator::{analytic_mse, build_lowered_a, build_povm, cr_gap, raise_index, sample_measurements, unbiasedness_residual};
use lownoise::fisher::{classical_fisher, divergent_fisher, fisher_inverse, quantum_fisher, real_eigenvalues};
use lownoise::numkit;
use lownoise::scenarios::random_fixture;
use lownoise::spectral::{diagonalize_output, output_shifts};
use proptest::prelude::*;

fn uniform(d: usize, s: f64) -> ParamVector {
    ParamVector::along(&vec![1.0 / d as f64; d], s).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn outputs_are_states(seed in 0u64..10_000, s in 1e-5f64..1e-2) {
        let fx = random_fixture(seed).unwrap();
        let d = fx.channel.n_params();
        let out = fx.channel.apply_channel(&DensityMatrix::pure(&fx.input).unwrap(), &uniform(d, s)).unwrap();
        prop_assert!((out.matrix().trace().re - 1.0).abs() <= 1e-12);
        prop_assert!(numkit::hermitian_residual(out.matrix()) <= 1e-14);
    }

    #[test]
    fn quantum_fisher_dominates_classical(seed in 0u64..10_000, s in 1e-4f64..1e-2) {
        let fx = random_fixture(seed).unwrap();
        let d = fx.channel.n_params();
        let spec = diagonalize_output(&fx.channel, &fx.input, &uniform(d, s)).unwrap();
        let q = quantum_fisher(&spec, &spec.derivatives).entries;
        let c = classical_fisher(&spec.probs, &spec.prob_gradients()).unwrap().entries;
        let min = *real_eigenvalues(&(&q - &c)).last().unwrap();
        prop_assert!(min >= -1e-8 * q.norm(), "min eigenvalue {}", min);
    }

    #[test]
    fn estimator_respects_cramer_rao(seed in 0u64..10_000, s in 1e-4f64..1e-2) {
        let fx = random_fixture(seed).unwrap();
        let d = fx.channel.n_params();
        let eps = uniform(d, s);
        let spec = diagonalize_output(&fx.channel, &fx.input, &eps).unwrap();
        let shifts = output_shifts(&fx.channel, &spec).unwrap();
        let jdiv = divergent_fisher(&shifts).unwrap();
        let povm = build_povm(&raise_index(&build_lowered_a(&spec, &shifts).unwrap(), &jdiv).unwrap()).unwrap();
        prop_assert!(povm.completeness_residual() <= 1e-10);
        let v = analytic_mse(&povm, &fx.channel, &fx.input, &eps).unwrap();
        let jinv = fisher_inverse(&quantum_fisher(&spec, &spec.derivatives)).unwrap().inverse.unwrap();
        let gap = cr_gap(&v.entries, &jinv).unwrap();
        prop_assert!(gap.min_eigenvalue >= -1e-9 * s, "{}", gap.min_eigenvalue);
        // locally unbiased: the bias is second order in the noise scale
        let bias = unbiasedness_residual(&povm, &fx.channel, &fx.input, &eps).unwrap();
        let worst = bias.iter().fold(0.0_f64, |a, b| a.max(*b));
        prop_assert!(worst <= 1e3 * s * s, "bias {} at s {}", worst, s);
    }

    #[test]
    fn ancilla_extension_keeps_trace(seed in 0u64..10_000, s in 1e-5f64..1e-2) {
        let fx = random_fixture(seed).unwrap();
        let ext = fx.channel.ancilla_extend();
        prop_assert!(ext.tpcp_residual(&uniform(ext.n_params(), s)).unwrap() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn sampling_independent_of_workers(seed in 0u64..1000, workers in 2usize..6) {
        let fx = random_fixture(seed).unwrap();
        let d = fx.channel.n_params();
        let eps = uniform(d, 1e-2);
        let spec = diagonalize_output(&fx.channel, &fx.input, &eps).unwrap();
        let shifts = output_shifts(&fx.channel, &spec).unwrap();
        let jdiv = divergent_fisher(&shifts).unwrap();
        let povm = build_povm(&raise_index(&build_lowered_a(&spec, &shifts).unwrap(), &jdiv).unwrap()).unwrap();
        let one = sample_measurements(&povm, &fx.channel, &fx.input, &eps, 200_000, seed, 1).unwrap();
        let many = sample_measurements(&povm, &fx.channel, &fx.input, &eps, 200_000, seed, workers).unwrap();
        prop_assert_eq!(one, many);
    }
}
