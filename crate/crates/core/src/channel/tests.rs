use super::*;
use crate::numkit::{basis_vector, matrix_residual_norm, pauli_x, pauli_y, pauli_z, projector, tensor_vector};
use proptest::prelude::*;
use rand::Rng;

fn pauli_channel() -> LowNoiseChannel {
    LowNoiseChannel::sqrt_completion(2, vec![(0, pauli_x()), (1, pauli_z())], None).unwrap()
}

fn eps(v: &[f64]) -> ParamVector {
    ParamVector::new(v.to_vec()).unwrap()
}

fn bloch(rho: &ComplexMatrix) -> [f64; 3] {
    [
        trace_re(&(pauli_x() * rho)),
        trace_re(&(pauli_y() * rho)),
        trace_re(&(pauli_z() * rho)),
    ]
}

fn trace_re(m: &ComplexMatrix) -> f64 {
    m.trace().re
}

fn bloch_state(r: [f64; 3]) -> DensityMatrix {
    let m = (identity(2) + scale(&pauli_x(), c64(r[0], 0.0)) + scale(&pauli_y(), c64(r[1], 0.0)) + scale(&pauli_z(), c64(r[2], 0.0)))
        / c64(2.0, 0.0);
    DensityMatrix::new(m).unwrap()
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(n, n, |_, _| c64(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
}

fn random_completion(seed: u64, n: usize, with_generators: bool) -> LowNoiseChannel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jumps = vec![(0, random_matrix(&mut rng, n)), (1, random_matrix(&mut rng, n)), (1, random_matrix(&mut rng, n))];
    let generators = with_generators.then(|| vec![hermitian_part(&random_matrix(&mut rng, n)), hermitian_part(&random_matrix(&mut rng, n))]);
    LowNoiseChannel::sqrt_completion(n, jumps, generators).unwrap()
}

fn random_state(seed: u64, n: usize) -> DensityMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DensityMatrix::pure(&random_pure_state(&mut rng, n)).unwrap()
}

#[test]
fn zero_noise_is_identity() {
    let ch = random_completion(1, 3, true);
    let rho = random_state(2, 3);
    let out = ch.apply_channel(&rho, &ParamVector::zeros(2)).unwrap();
    assert!(matrix_residual_norm(out.matrix(), rho.matrix()).unwrap() <= 1e-15);
}

#[test]
fn pauli_bloch_map() {
    let ch = pauli_channel();
    let out = ch.apply_channel(&bloch_state([1.0, 0.0, 0.0]), &eps(&[0.01, 0.02])).unwrap();
    let y = bloch(out.matrix());
    assert!((y[0] - 0.96).abs() <= 1e-14 && y[1].abs() <= 1e-15 && y[2].abs() <= 1e-15, "{y:?}");

    let r = [0.3, -0.5, 0.6];
    let (e1, e2) = (0.013, 0.004);
    let y = bloch(ch.apply_channel(&bloch_state(r), &eps(&[e1, e2])).unwrap().matrix());
    let expected = [(1.0 - 2.0 * e2) * r[0], (1.0 - 2.0 * e1 - 2.0 * e2) * r[1], (1.0 - 2.0 * e1) * r[2]];
    for k in 0..3 {
        assert!((y[k] - expected[k]).abs() <= 1e-14);
    }
}

#[test]
fn ancilla_output_spectrum() {
    let ch = pauli_channel().ancilla_extend();
    let psi = (tensor_vector(&basis_vector(2, 0), &basis_vector(2, 0)) + tensor_vector(&basis_vector(2, 1), &basis_vector(2, 1)))
        .unscale(2f64.sqrt());
    let (e1, e2) = (1e-3, 2e-3);
    let out = ch.apply_channel(&DensityMatrix::pure(&psi).unwrap(), &eps(&[e1, e2])).unwrap();
    let sp = hermitian_eigendecompose(out.matrix()).unwrap();
    let expected = [1.0 - e1 - e2, e2, e1, 0.0];
    for (a, b) in sp.eigenvalues.iter().zip(expected) {
        assert!((a - b).abs() <= 1e-15, "{:?}", sp.eigenvalues);
    }
}

#[test]
fn tpcp_residuals() {
    let ch = pauli_channel();
    for e in [[0.0, 0.0], [0.1, 0.3], [0.5, 0.5 - 1e-9]] {
        assert!(ch.tpcp_residual(&eps(&e)).unwrap() <= 1e-15);
    }
    let ch = random_completion(7, 3, true);
    let margin = ch.validity_margin(&eps(&[1.0, 1.0])).unwrap().unwrap();
    assert!(margin < 1.0);
    for s in [1e-5, 1e-3, 1e-2] {
        assert!(ch.tpcp_residual(&eps(&[s, 2.0 * s])).unwrap() <= 1e-12);
    }
}

#[test]
fn rescaled_kappa_breaks_trace_preservation() {
    let n = 3;
    let jumps = vec![JumpKraus {
        param: 0,
        base: projector(&basis_vector(n, 1)),
        higher: None,
    }];
    let b = IdentityKraus {
        kappa: c64(1.01, 0.0),
        linear: vec![scale(&projector(&basis_vector(n, 1)), c64(0.5, 0.0))],
        higher: None,
    };
    let ch = LowNoiseChannel::explicit_unchecked(n, 1, vec![b.clone()], jumps.clone()).unwrap();
    let r = ch.tpcp_residual(&ParamVector::zeros(1)).unwrap();
    assert!((r - (1.01f64.powi(2) - 1.0) * (n as f64).sqrt()).abs() <= 1e-14);
    assert!(matches!(
        LowNoiseChannel::explicit(n, 1, vec![b], jumps),
        Err(Error::InconsistentKrausData(_))
    ));
}

#[test]
fn identity_limit() {
    assert_eq!(pauli_channel().identity_limit_residual().unwrap(), 0.0);
    let flip = IdentityKraus {
        kappa: c64(0.0, 0.0),
        linear: vec![numkit::zeros(2)],
        higher: Some(Remainder::new(|_| pauli_x())),
    };
    let ch = LowNoiseChannel::explicit_unchecked(2, 1, vec![flip], vec![]).unwrap();
    assert!(ch.identity_limit_residual().unwrap() >= 1.0);
}

#[test]
fn lindblad_derivative_examples() {
    let lowering = ComplexMatrix::from_row_slice(2, 2, &[c64(0., 0.), c64(1., 0.), c64(0., 0.), c64(0., 0.)]);
    let ch = LowNoiseChannel::sqrt_completion(2, vec![(0, lowering)], None).unwrap();
    let ground = projector(&basis_vector(2, 0));
    assert_eq!(ch.derivative_at_zero(0, &ground).unwrap(), numkit::zeros(2));

    let d = pauli_channel().derivative_at_zero(0, &ground).unwrap();
    let expected = ComplexMatrix::from_diagonal(&StateVectorHelper::real(&[-1.0, 1.0]));
    assert!(matrix_residual_norm(&d, &expected).unwrap() <= 1e-15);
}

struct StateVectorHelper;
impl StateVectorHelper {
    fn real(v: &[f64]) -> numkit::StateVector {
        numkit::StateVector::from_iterator(v.len(), v.iter().map(|x| c64(*x, 0.0)))
    }
}

#[test]
fn lindblad_derivative_matches_finite_difference() {
    for (k, ch) in [pauli_channel(), random_completion(3, 3, true), random_completion(4, 4, false)].iter().enumerate() {
        let rho = random_state(10 + k as u64, ch.dim());
        for mu in 0..ch.n_params() {
            let analytic = ch.derivative_at_zero(mu, rho.matrix()).unwrap();
            let fd = ch.finite_difference_derivative(rho.matrix(), mu, &ParamVector::zeros(2), 1e-6).unwrap();
            assert!(matrix_residual_norm(&analytic, &fd).unwrap() <= 1e-8);
            assert!(analytic.trace().norm() <= 1e-12);
            assert!(hermitian_residual(&analytic) <= 1e-12);
        }
    }
}

#[test]
fn analytic_derivative_matches_finite_difference_off_boundary() {
    let ch = random_completion(5, 3, true);
    let rho = random_state(6, 3);
    let e = eps(&[2e-2, 1e-2]);
    let analytic = ch.output_derivatives(rho.matrix(), &e).unwrap();
    for mu in 0..2 {
        let fd = ch.finite_difference_derivative(rho.matrix(), mu, &e, 1e-4).unwrap();
        assert!(matrix_residual_norm(&analytic[mu], &fd).unwrap() <= 1e-7);
    }
    let at_zero = ch.output_derivatives(rho.matrix(), &ParamVector::zeros(2)).unwrap();
    for mu in 0..2 {
        let lindblad = ch.derivative_at_zero(mu, rho.matrix()).unwrap();
        assert!(matrix_residual_norm(&at_zero[mu], &lindblad).unwrap() <= 1e-13);
    }
}

#[test]
fn hamiltonian_parts() {
    let ch = random_completion(8, 3, false);
    for h in ch.hamiltonians() {
        assert!(h.norm() <= 1e-15);
    }
    let ch = random_completion(8, 3, true);
    let g = ch.completion.as_ref().unwrap().generators.clone().unwrap();
    for mu in 0..2 {
        assert!(matrix_residual_norm(&ch.hamiltonian_part(mu).unwrap(), &g[mu]).unwrap() <= 1e-10);
    }
    // first-order expansion of the completed channel reproduces H = G
    let rho = random_state(9, 3);
    let fd = ch.finite_difference_derivative(rho.matrix(), 1, &ParamVector::zeros(2), 1e-6).unwrap();
    assert!(matrix_residual_norm(&fd, &ch.derivative_at_zero(1, rho.matrix()).unwrap()).unwrap() <= 1e-8);
}

#[test]
fn perturbed_linear_part_is_inconsistent() {
    let x = pauli_x();
    let b = IdentityKraus {
        kappa: c64(1.0, 0.0),
        linear: vec![scale(&(x.adjoint() * &x), c64(0.5, 0.0)) + scale(&pauli_x(), c64(1e-3, 0.0))],
        higher: None,
    };
    let jumps = vec![JumpKraus {
        param: 0,
        base: x,
        higher: None,
    }];
    let ch = LowNoiseChannel::explicit_unchecked(2, 1, vec![b.clone()], jumps.clone()).unwrap();
    assert!(matches!(ch.hamiltonian_part(0), Err(Error::InconsistentKrausData(_))));
    assert!(matches!(LowNoiseChannel::explicit(2, 1, vec![b], jumps), Err(Error::InconsistentKrausData(_))));
}

#[test]
fn jump_operator_checks() {
    let x = pauli_x();
    assert!(matches!(
        LowNoiseChannel::sqrt_completion(2, vec![(0, x.clone()), (0, scale(&x, c64(0.0, 2.0)))], None),
        Err(Error::InconsistentKrausData(_))
    ));
    assert!(matches!(
        LowNoiseChannel::sqrt_completion(2, vec![(0, numkit::zeros(2))], None),
        Err(Error::InconsistentKrausData(_))
    ));
    assert!(LowNoiseChannel::sqrt_completion(2, vec![(0, x.clone()), (1, x)], None).is_ok());
}

#[test]
fn ancilla_extension() {
    let ch = random_completion(12, 2, true);
    let ext = ch.ancilla_extend();
    assert_eq!(ext.dim(), 4);
    let e = eps(&[3e-3, 1e-2]);
    assert!((ext.tpcp_residual(&e).unwrap() - ch.tpcp_residual(&e).unwrap()).abs() <= 1e-15);

    let (rho, sigma) = (random_state(13, 2), random_state(14, 2));
    let joint = DensityMatrix::new(tensor_product(rho.matrix(), sigma.matrix())).unwrap();
    let out = ext.apply_channel(&joint, &e).unwrap();
    let expected = tensor_product(ch.apply_channel(&rho, &e).unwrap().matrix(), sigma.matrix());
    assert!(matrix_residual_norm(out.matrix(), &expected).unwrap() <= 1e-14);

    // closures are tensored too
    let b = IdentityKraus {
        kappa: c64(1.0, 0.0),
        linear: vec![scale(&identity(2), c64(0.5, 0.0))],
        higher: Some(Remainder::new(|e: &ParamVector| {
            let s = e[0];
            scale(&identity(2), c64((1.0 - s).sqrt() - 1.0 + 0.5 * s, 0.0))
        })),
    };
    let jumps = vec![JumpKraus {
        param: 0,
        base: pauli_y(),
        higher: None,
    }];
    let ch = LowNoiseChannel::explicit(2, 1, vec![b], jumps).unwrap();
    assert!(ch.config().is_none());
    let ext = ch.ancilla_extend();
    assert!(ext.tpcp_residual(&eps(&[0.2])).unwrap() <= 1e-15);
}

#[test]
fn ancilla_pauli_bell_output() {
    let ext = pauli_channel().ancilla_extend();
    let e00 = tensor_vector(&basis_vector(2, 0), &basis_vector(2, 0));
    let e01 = tensor_vector(&basis_vector(2, 0), &basis_vector(2, 1));
    let e10 = tensor_vector(&basis_vector(2, 1), &basis_vector(2, 0));
    let e11 = tensor_vector(&basis_vector(2, 1), &basis_vector(2, 1));
    let r2 = 2f64.sqrt();
    let psi = (&e00 + &e11).unscale(r2);
    let a = (&e01 + &e10).unscale(r2);
    let b = (&e00 - &e11).unscale(r2);
    let (e1, e2) = (0.01, 0.03);
    let out = ext.apply_channel(&DensityMatrix::pure(&psi).unwrap(), &eps(&[e1, e2])).unwrap();
    let expected = scale(&projector(&psi), c64(1.0 - e1 - e2, 0.0)) + scale(&projector(&a), c64(e1, 0.0)) + scale(&projector(&b), c64(e2, 0.0));
    assert!(matrix_residual_norm(out.matrix(), &expected).unwrap() <= 1e-15);
}

#[test]
fn finite_difference_exact_on_linear_channel() {
    let ch = pauli_channel();
    let rho = random_state(20, 2);
    for h in [1e-3, 1e-4, 1e-6] {
        for mu in 0..2 {
            let fd = ch.finite_difference_derivative(rho.matrix(), mu, &ParamVector::zeros(2), h).unwrap();
            let exact = ch.derivative_at_zero(mu, rho.matrix()).unwrap();
            assert!(matrix_residual_norm(&fd, &exact).unwrap() <= 1e-10);
        }
    }
}

#[test]
fn finite_difference_converges_at_second_order() {
    let ch = random_completion(21, 3, true);
    let rho = random_state(22, 3);
    for e in [eps(&[0.05, 0.04]), ParamVector::zeros(2)] {
        let exact = ch.output_derivatives(rho.matrix(), &e).unwrap();
        let h = 1e-2;
        let coarse = ch.finite_difference_derivative(rho.matrix(), 0, &e, h).unwrap();
        let fine = ch.finite_difference_derivative(rho.matrix(), 0, &e, h / 2.0).unwrap();
        let (err_c, err_f) = (
            matrix_residual_norm(&coarse, &exact[0]).unwrap(),
            matrix_residual_norm(&fine, &exact[0]).unwrap(),
        );
        assert!(err_c >= 3.0 * err_f, "{err_c:e} vs {err_f:e}");
    }
}

#[test]
fn finite_difference_of_constant_map_is_zero() {
    let b = IdentityKraus {
        kappa: c64(1.0, 0.0),
        linear: vec![numkit::zeros(2)],
        higher: None,
    };
    let ch = LowNoiseChannel::explicit_unchecked(2, 1, vec![b], vec![]).unwrap();
    let rho = random_state(23, 2);
    let fd = ch.finite_difference_derivative(rho.matrix(), 0, &eps(&[0.1]), 1e-3).unwrap();
    assert_eq!(fd.norm(), 0.0);
}

#[test]
fn step_too_large_and_validity() {
    let ch = pauli_channel();
    let rho = random_state(24, 2);
    assert!(matches!(
        ch.finite_difference_derivative(rho.matrix(), 0, &eps(&[0.2, 0.3]), 0.6),
        Err(Error::StepTooLarge(_))
    ));
    assert!(matches!(ch.apply_channel(&rho, &eps(&[0.6, 0.6])), Err(Error::TpcpViolation(_))));
    assert!(matches!(ch.apply_channel(&rho, &eps(&[0.1])), Err(Error::DimensionMismatch(_))));
    assert!(ParamVector::new(vec![-1e-3, 0.0]).is_err());
}

#[test]
fn config_round_trip() {
    let ch = random_completion(30, 3, true);
    let text = ch.config().unwrap().to_toml().unwrap();
    let cfg = ChannelConfig::from_toml(&text).unwrap();
    assert_eq!(&cfg, ch.config().unwrap());
    let rebuilt = LowNoiseChannel::from_config(&cfg).unwrap();
    let rho = random_state(31, 3);
    let e = eps(&[1e-3, 4e-3]);
    assert_eq!(
        rebuilt.output_deviation(rho.matrix(), &e).unwrap(),
        ch.output_deviation(rho.matrix(), &e).unwrap()
    );

    let text = r#"
        dim = 2
        params = 1
        builder = "explicit"
        [[identity]]
        kappa = [1.0, 0.0]
        linear = [[[[0.5, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.5, 0.0]]]]
        [[jump]]
        param = 0
        matrix = [[[0.0, 0.0], [1.0, 0.0]], [[1.0, 0.0], [0.0, 0.0]]]
    "#;
    let ch = LowNoiseChannel::from_config(&ChannelConfig::from_toml(text).unwrap()).unwrap();
    assert!(ch.tpcp_residual(&eps(&[0.1])).unwrap() > 0.0);
    assert!(ch.identity_limit_residual().unwrap() == 0.0);
    let bad = text.replace("kappa = [1.0, 0.0]", "kappa = [1.1, 0.0]");
    assert!(matches!(
        LowNoiseChannel::from_config(&ChannelConfig::from_toml(&bad).unwrap()),
        Err(Error::ConfigInvalid(_))
    ));
    assert!(ChannelConfig::from_toml("dim = 2\nparams = 1\nbuilder = \"magic\"").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn trace_and_positivity_preserved(seed in any::<u64>(), n in 2usize..5, s in 1e-5f64..1e-2) {
        let ch = random_completion(seed, n, seed % 2 == 0);
        let rho = random_state(seed.wrapping_add(1), n);
        let out = ch.apply_channel(&rho, &eps(&[s, 0.5 * s])).unwrap();
        prop_assert!((out.matrix().trace().re - 1.0).abs() <= 1e-10);
        let sp = hermitian_eigendecompose(out.matrix()).unwrap();
        prop_assert!(*sp.eigenvalues.last().unwrap() >= -1e-10);
    }

    #[test]
    fn lindblad_generator_traceless_hermitian(seed in any::<u64>(), n in 2usize..5) {
        let ch = random_completion(seed, n, true);
        let rho = random_state(seed ^ 0xabc, n);
        for mu in 0..2 {
            let d = ch.derivative_at_zero(mu, rho.matrix()).unwrap();
            prop_assert!(d.trace().norm() <= 1e-12);
            prop_assert!(hermitian_residual(&d) <= 1e-12);
        }
    }
}
