//! SLD operators and the quantum, classical and divergent Fisher matrices.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::channel::{DensityMatrix, LowNoiseChannel, ParamVector};
use crate::error::{Error, Result};
use crate::numkit::{self, c64, hermitian_eigendecompose, symmetric_inverse, ComplexMatrix, RealMatrix, StateVector};
use crate::spectral::{diagonalize_output, EigenShifts, OutputSpectrum};

/// Pairs with `p_n + p_m` at or below `SUPPORT_RTOL·N` are off the support.
pub const SUPPORT_RTOL: f64 = 1e-12;
/// `fisher_inverse` refuses matrices with `det ≤ SINGULAR_RTOL·‖J‖_F^D`.
pub const SINGULAR_RTOL: f64 = 1e-14;
/// Gate floor on `det·s^D` at every sweep point.
pub const GATE_FLOOR: f64 = 1e-10;
pub const GATE_SLOPE_TOL: f64 = 0.3;

pub fn support_threshold(dim: usize) -> f64 {
    SUPPORT_RTOL * dim as f64
}

/// Symmetric logarithmic derivatives, one per parameter.
#[derive(Debug, Clone)]
pub struct SLDSet {
    pub operators: Vec<ComplexMatrix>,
    pub support_threshold: f64,
    /// Number of `(n, m)` pairs left at zero because `p_n + p_m` was below threshold.
    pub dropped_pairs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FisherKind {
    Quantum,
    Classical,
    Divergent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FisherMatrix {
    pub kind: FisherKind,
    pub entries: RealMatrix,
    pub inverse: Option<RealMatrix>,
    pub condition_number: f64,
}

impl FisherMatrix {
    fn new(kind: FisherKind, entries: RealMatrix) -> Self {
        let entries = (&entries + entries.transpose()).scale(0.5);
        let condition_number = condition_number(&entries);
        Self {
            kind,
            entries,
            inverse: None,
            condition_number,
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn quad(&self, u: &[f64]) -> f64 {
        quad_form(&self.entries, u)
    }
}

pub fn quad_form(m: &RealMatrix, u: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            acc += u[i] * m[(i, j)] * u[j];
        }
    }
    acc
}

fn condition_number(m: &RealMatrix) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let eig = SymmetricEigen::new(m.clone());
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    for v in eig.eigenvalues.iter() {
        lo = lo.min(v.abs());
        hi = hi.max(v.abs());
    }
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Real-symmetric eigenvalues, descending.
pub fn real_eigenvalues(m: &RealMatrix) -> Vec<f64> {
    let mut v: Vec<f64> = SymmetricEigen::new((m + m.transpose()).scale(0.5)).eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// `⟨n|L_μ|m⟩ = 2/(p_n+p_m)·⟨n|∂_μρ|m⟩` on the support, zero elsewhere.
pub fn sld_operators(spec: &OutputSpectrum, drho: &[ComplexMatrix]) -> SLDSet {
    let thr = support_threshold(spec.dim());
    let n = spec.dim();
    let mut dropped = 0;
    let operators = drho
        .iter()
        .enumerate()
        .map(|(mu, d)| {
            let dm = spec.basis.adjoint() * d * &spec.basis;
            let l = ComplexMatrix::from_fn(n, n, |i, j| {
                let s = spec.probs[i] + spec.probs[j];
                if s > thr {
                    dm[(i, j)] * (2.0 / s)
                } else {
                    if mu == 0 {
                        dropped += 1;
                    }
                    c64(0.0, 0.0)
                }
            });
            numkit::hermitian_part(&(&spec.basis * l * spec.basis.adjoint()))
        })
        .collect();
    SLDSet {
        operators,
        support_threshold: thr,
        dropped_pairs: dropped,
    }
}

/// `J_{μν} = Σ_{nm} 2/(p_n+p_m) Re(⟨n|∂_μρ|m⟩⟨m|∂_νρ|n⟩)`
pub fn quantum_fisher(spec: &OutputSpectrum, drho: &[ComplexMatrix]) -> FisherMatrix {
    quantum_fisher_from_parts(&spec.probs, &spec.basis, drho)
}

fn quantum_fisher_from_parts(probs: &[f64], basis: &ComplexMatrix, drho: &[ComplexMatrix]) -> FisherMatrix {
    let thr = support_threshold(probs.len());
    let frames: Vec<ComplexMatrix> = drho.iter().map(|d| basis.adjoint() * d * basis).collect();
    let d = drho.len();
    let n = probs.len();
    let mut j = RealMatrix::zeros(d, d);
    for a in 0..d {
        for b in a..d {
            let mut acc = 0.0;
            for i in 0..n {
                for k in 0..n {
                    let s = probs[i] + probs[k];
                    if s > thr {
                        acc += 2.0 / s * (frames[a][(i, k)] * frames[b][(k, i)]).re;
                    }
                }
            }
            j[(a, b)] = acc;
            j[(b, a)] = acc;
        }
    }
    FisherMatrix::new(FisherKind::Quantum, j)
}

/// `½ Tr[ρ{L_μ, L_ν}]`, the defining form of the quantum Fisher matrix.
pub fn sld_fisher(spec: &OutputSpectrum, slds: &SLDSet) -> RealMatrix {
    let d = slds.operators.len();
    let n = spec.dim();
    let frames: Vec<ComplexMatrix> = slds
        .operators
        .iter()
        .map(|l| spec.basis.adjoint() * l * &spec.basis)
        .collect();
    RealMatrix::from_fn(d, d, |a, b| {
        let mut acc = 0.0;
        for i in 0..n {
            for k in 0..n {
                acc += 0.5 * spec.probs[i] * (frames[a][(i, k)] * frames[b][(k, i)] + frames[b][(i, k)] * frames[a][(k, i)]).re;
            }
        }
        acc
    })
}

/// `J^div_{μν} = Σ_{order-one n} ∂_μδp_n ∂_νδp_n / δp_n`
pub fn divergent_fisher(shifts: &EigenShifts) -> Result<FisherMatrix> {
    let included = shifts.included();
    if included.is_empty() {
        return Err(Error::EmptySum);
    }
    let d = shifts.gradients.len();
    let j = RealMatrix::from_fn(d, d, |a, b| {
        included
            .iter()
            .map(|&n| shifts.gradients[a][n] * shifts.gradients[b][n] / shifts.values[n])
            .sum()
    });
    Ok(FisherMatrix::new(FisherKind::Divergent, j))
}

/// `J^c_{μν} = Σ_n ∂_μp_n ∂_νp_n / p_n`, cross-checked against
/// `4 Σ_n ∂_μ√p_n ∂_ν√p_n`. `dprobs` is `D×N`.
pub fn classical_fisher(probs: &[f64], dprobs: &RealMatrix) -> Result<FisherMatrix> {
    if dprobs.ncols() != probs.len() {
        return Err(Error::DimensionMismatch("gradient columns must match outcomes".into()));
    }
    let thr = support_threshold(probs.len());
    let d = dprobs.nrows();
    let support: Vec<usize> = (0..probs.len()).filter(|&n| probs[n] > thr).collect();
    let ratio_form = RealMatrix::from_fn(d, d, |a, b| {
        support.iter().map(|&n| dprobs[(a, n)] * dprobs[(b, n)] / probs[n]).sum()
    });
    let root = amplitude_gradients(probs, dprobs);
    let root_form = (&root * root.transpose()).scale(4.0);
    let mismatch = (&ratio_form - &root_form).norm();
    if mismatch > 1e-9 * ratio_form.norm().max(1.0) {
        return Err(Error::BadProbabilities(format!(
            "classical Fisher forms disagree by {mismatch:e}"
        )));
    }
    Ok(FisherMatrix::new(FisherKind::Classical, ratio_form))
}

/// `∂_μ√p_n = ∂_μp_n / (2√p_n)` over the support.
fn amplitude_gradients(probs: &[f64], dprobs: &RealMatrix) -> RealMatrix {
    let thr = support_threshold(probs.len());
    let support: Vec<usize> = (0..probs.len()).filter(|&n| probs[n] > thr).collect();
    RealMatrix::from_fn(dprobs.nrows(), support.len(), |mu, k| {
        let n = support[k];
        dprobs[(mu, n)] / (2.0 * probs[n].sqrt())
    })
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    if k > n {
        return out;
    }
    loop {
        out.push(cur.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < n - k + i {
                cur[i] += 1;
                for j in i + 1..k {
                    cur[j] = cur[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// `det[Σ_n ∂_μ√p_n ∂_ν√p_n]` via Cauchy–Binet, `Σ_{|S|=D} det(A_S)²`.
/// The sum is empty, hence exactly zero, when fewer than `D` outcomes are supported.
pub fn nondegeneracy_det(probs: &[f64], dprobs: &RealMatrix) -> f64 {
    let a = amplitude_gradients(probs, dprobs);
    let d = a.nrows();
    if d == 0 {
        return 1.0;
    }
    combinations(a.ncols(), d)
        .into_iter()
        .map(|cols| {
            let sub = RealMatrix::from_fn(d, d, |i, j| a[(i, cols[j])]);
            let det = if d == 2 {
                sub[(0, 0)] * sub[(1, 1)] - sub[(0, 1)] * sub[(1, 0)]
            } else {
                sub.determinant()
            };
            det * det
        })
        .sum()
}

/// Slope-based non-degeneracy verdict over a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NondegeneracyGate {
    pub pass: bool,
    /// Fitted order of `det` in the sweep scale; `None` if a determinant vanished.
    pub slope: Option<f64>,
    pub min_scaled_det: f64,
}

/// Gate over `(scale, det)` samples: `det·s^D ≥ GATE_FLOOR` everywhere and
/// the fitted order equals `−D` within `GATE_SLOPE_TOL`.
pub fn nondegeneracy_gate(samples: &[(f64, f64)], d: usize) -> NondegeneracyGate {
    let min_scaled_det = samples
        .iter()
        .map(|(s, det)| det * s.powi(d as i32))
        .fold(f64::INFINITY, f64::min);
    let slope = numkit::power_order_fit(samples).ok().map(|f| f.slope);
    let pass = min_scaled_det >= GATE_FLOOR && slope.is_some_and(|k| (k + d as f64).abs() <= GATE_SLOPE_TOL);
    NondegeneracyGate {
        pass,
        slope,
        min_scaled_det,
    }
}

pub fn fisher_inverse(fm: &FisherMatrix) -> Result<FisherMatrix> {
    let d = fm.dim();
    let det = fm.entries.determinant();
    let floor = SINGULAR_RTOL * fm.entries.norm().powi(d as i32);
    if det.is_nan() || det <= floor {
        return Err(Error::SingularFisher { det, floor });
    }
    let inv = symmetric_inverse(&fm.entries).ok_or(Error::SingularFisher { det, floor })?;
    Ok(FisherMatrix {
        kind: fm.kind,
        entries: fm.entries.clone(),
        inverse: Some(inv),
        condition_number: fm.condition_number,
    })
}

/// Quantum Fisher matrix of `Γ_ε[ρ]` for an arbitrary (possibly mixed) input.
pub fn mixed_input_fisher(ch: &LowNoiseChannel, rho: &DensityMatrix, eps: &ParamVector) -> Result<FisherMatrix> {
    let (dev, drho) = ch.output_with_derivatives(rho.matrix(), eps)?;
    let out = rho.matrix() + dev;
    let sp = hermitian_eigendecompose(&out)?;
    Ok(quantum_fisher_from_parts(&sp.eigenvalues, &sp.eigenvectors, &drho))
}

/// `u·J[ρ_mixed]·u ≤ max_i u·J[|φ_i⟩⟨φ_i|]·u` up to `1e-8` relative.
pub fn pure_input_dominance_check(
    ch: &LowNoiseChannel,
    rho_mixed: &DensityMatrix,
    decomposition: &[(f64, StateVector)],
    u: &[f64],
    eps: &ParamVector,
) -> Result<bool> {
    let mut rebuilt = ComplexMatrix::zeros(ch.dim(), ch.dim());
    for (w, v) in decomposition {
        rebuilt += numkit::projector(v).map(|z| z * *w);
    }
    let residual = numkit::matrix_residual_norm(&rebuilt, rho_mixed.matrix())?;
    if residual > 1e-10 {
        return Err(Error::InvalidParameter(format!("decomposition residual {residual:e}")));
    }
    let mixed = mixed_input_fisher(ch, rho_mixed, eps)?.quad(u);
    let mut best = f64::NEG_INFINITY;
    for (_, v) in decomposition {
        let spec = diagonalize_output(ch, v, eps)?;
        best = best.max(quantum_fisher(&spec, &spec.derivatives).quad(u));
    }
    Ok(mixed <= best + 1e-8 * best.abs().max(mixed.abs()).max(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{basis_vector, matrix_residual_norm, pauli_x, pauli_y, pauli_z, tensor_vector};
    use crate::spectral::{output_shifts, ShiftOrder};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn eps(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec()).unwrap()
    }

    fn pauli() -> LowNoiseChannel {
        LowNoiseChannel::sqrt_completion(2, vec![(0, pauli_x()), (1, pauli_z())], None).unwrap()
    }

    fn bell() -> (LowNoiseChannel, StateVector) {
        let k = |a, b| tensor_vector(&basis_vector(2, a), &basis_vector(2, b));
        (pauli().ancilla_extend(), (k(0, 0) + k(1, 1)).unscale(2f64.sqrt()))
    }

    fn bloch_input() -> StateVector {
        // Bloch vector (1,1,1)/√3
        let r = 1.0 / 3f64.sqrt();
        let rho = (numkit::identity(2) + (pauli_x() + pauli_y() + pauli_z()).map(|z| z * r)).map(|z| z * 0.5);
        hermitian_eigendecompose(&rho).unwrap().vector(0)
    }

    #[test]
    fn pure_family_sld_is_twice_derivative() {
        // |ψ(θ)⟩ = cos θ|0⟩ + sin θ|1⟩ at θ = 0 realised as a spectrum with p = (1, 0)
        let spec = OutputSpectrum {
            eps: ParamVector::zeros(1),
            probs: vec![1.0, 0.0],
            basis: numkit::identity(2),
            input_state: basis_vector(2, 0),
            deviation: numkit::zeros(2),
            derivatives: vec![pauli_x()],
        };
        let sld = sld_operators(&spec, &spec.derivatives);
        assert!(matrix_residual_norm(&sld.operators[0], &pauli_x().map(|z| z * 2.0)).unwrap() <= 1e-15);
        assert_eq!(sld.dropped_pairs, 1);
        let j = quantum_fisher(&spec, &spec.derivatives);
        assert!((j.entries[(0, 0)] - 4.0).abs() <= 1e-15);
    }

    #[test]
    fn zero_derivatives_give_zero() {
        let (ch, psi) = bell();
        let spec = diagonalize_output(&ch, &psi, &eps(&[1e-3, 2e-3])).unwrap();
        let zero = vec![numkit::zeros(4); 2];
        let sld = sld_operators(&spec, &zero);
        assert!(sld.operators.iter().all(|l| l.norm() == 0.0));
        assert_eq!(quantum_fisher(&spec, &zero).entries.norm(), 0.0);
        let uniform = vec![0.25; 4];
        assert_eq!(classical_fisher(&uniform, &RealMatrix::zeros(2, 4)).unwrap().entries.norm(), 0.0);
    }

    #[test]
    fn pauli_sld_matches_bloch_form() {
        let ch = pauli();
        let phi = bloch_input();
        let r = 1.0 / 3f64.sqrt();
        let (e1, e2) = (2e-3, 5e-3);
        let spec = diagonalize_output(&ch, &phi, &eps(&[e1, e2])).unwrap();
        let sld = sld_operators(&spec, &spec.derivatives);
        let y = [(1.0 - 2.0 * e2) * r, (1.0 - 2.0 * e1 - 2.0 * e2) * r, (1.0 - 2.0 * e1) * r];
        let dy = [[0.0, -2.0 * r, -2.0 * r], [-2.0 * r, -2.0 * r, 0.0]];
        let y2: f64 = y.iter().map(|v| v * v).sum();
        let sig = [pauli_x(), pauli_y(), pauli_z()];
        for mu in 0..2 {
            let dy2: f64 = (0..3).map(|k| 2.0 * y[k] * dy[mu][k]).sum();
            let l0 = -0.5 * dy2 / (1.0 - y2);
            let mut l = numkit::identity(2).map(|z| z * l0);
            for k in 0..3 {
                let lk = dy[mu][k] + 0.5 * dy2 / (1.0 - y2) * y[k];
                l += sig[k].map(|z| z * lk);
            }
            let rel = matrix_residual_norm(&sld.operators[mu], &l).unwrap() / l.norm();
            assert!(rel <= 1e-9, "{rel:e}");
        }
        let direct = quantum_fisher(&spec, &spec.derivatives).entries;
        let via_sld = sld_fisher(&spec, &sld);
        assert!((&direct - via_sld).norm() <= 1e-8 * direct.norm());
    }

    #[test]
    fn bell_fisher_leading_terms() {
        let (ch, psi) = bell();
        let (e1, e2) = (1e-3, 2e-3);
        let spec = diagonalize_output(&ch, &psi, &eps(&[e1, e2])).unwrap();
        let j = quantum_fisher(&spec, &spec.derivatives);
        let bar = e1 + e2;
        assert!((j.entries[(0, 0)] * e1 - 1.0).abs() <= 10.0 * bar);
        assert!((j.entries[(1, 1)] * e2 - 1.0).abs() <= 10.0 * bar);

        let shifts = output_shifts(&ch, &spec).unwrap();
        let jd = divergent_fisher(&shifts).unwrap();
        let expected = RealMatrix::from_row_slice(2, 2, &[1.0 / e1, 0.0, 0.0, 1.0 / e2]);
        assert!((&jd.entries - &expected).norm() <= 1e-9 * expected.norm());
        let inv = fisher_inverse(&j).unwrap().inverse.unwrap();
        let exact = RealMatrix::from_row_slice(2, 2, &[e1 - e1 * e1, -e1 * e2, -e1 * e2, e2 - e2 * e2]);
        assert!((&inv - exact).norm() <= 1e-15);
    }

    #[test]
    fn single_shift_divergent_part() {
        let shifts = EigenShifts {
            values: vec![0.3 * 1e-3],
            orders: vec![ShiftOrder::Order1],
            slopes: vec![Some(1.0)],
            gradients: vec![vec![0.3]],
        };
        let jd = divergent_fisher(&shifts).unwrap();
        assert!((jd.entries[(0, 0)] - 0.3 / 1e-3).abs() <= 1e-9);
        let none = EigenShifts {
            orders: vec![ShiftOrder::HigherOrZero],
            ..shifts
        };
        assert_eq!(divergent_fisher(&none), Err(Error::EmptySum));
    }

    #[test]
    fn bernoulli_classical_fisher() {
        let p = [0.9, 0.1];
        let dp = RealMatrix::from_row_slice(1, 2, &[-1.0, 1.0]);
        let j = classical_fisher(&p, &dp).unwrap();
        assert!((j.entries[(0, 0)] - 1.0 / (0.1 * 0.9)).abs() <= 1e-12);
    }

    #[test]
    fn nondegeneracy_examples() {
        let (ch, psi) = bell();
        let samples: Vec<(f64, f64)> = numkit::geometric_grid(1e-5, 1e-2, 8)
            .into_iter()
            .map(|s| {
                let spec = diagonalize_output(&ch, &psi, &eps(&[0.5 * s, 0.5 * s])).unwrap();
                (s, nondegeneracy_det(&spec.probs, &spec.prob_gradients()))
            })
            .collect();
        let gate = nondegeneracy_gate(&samples, 2);
        assert!(gate.pass, "{gate:?}");

        // two parameters entering identically
        let dup = LowNoiseChannel::sqrt_completion(2, vec![(0, pauli_x()), (1, pauli_x())], None).unwrap();
        let phi = bloch_input();
        let samples: Vec<(f64, f64)> = numkit::geometric_grid(1e-5, 1e-2, 8)
            .into_iter()
            .map(|s| {
                let spec = diagonalize_output(&dup, &phi, &eps(&[0.5 * s, 0.5 * s])).unwrap();
                let det = nondegeneracy_det(&spec.probs, &spec.prob_gradients());
                assert!(det <= 1e-12);
                (s, det)
            })
            .collect();
        assert!(!nondegeneracy_gate(&samples, 2).pass);

        // three parameters on a qubit
        let three = LowNoiseChannel::sqrt_completion(2, vec![(0, pauli_x()), (1, pauli_y()), (2, pauli_z())], None).unwrap();
        let spec = diagonalize_output(&three, &phi, &eps(&[1e-3, 2e-3, 3e-3])).unwrap();
        assert_eq!(nondegeneracy_det(&spec.probs, &spec.prob_gradients()), 0.0);
    }

    #[test]
    fn singular_inverse_rejected() {
        let ch = pauli();
        let phi = bloch_input();
        let spec = diagonalize_output(&ch, &phi, &eps(&[1e-3, 1e-3])).unwrap();
        let shifts = output_shifts(&ch, &spec).unwrap();
        let jd = divergent_fisher(&shifts).unwrap();
        assert!(matches!(fisher_inverse(&jd), Err(Error::SingularFisher { .. })));
        let j = fisher_inverse(&quantum_fisher(&spec, &spec.derivatives)).unwrap();
        let prod = &j.entries * j.inverse.as_ref().unwrap();
        assert!((prod - RealMatrix::identity(2, 2)).norm() <= 1e-8 * j.condition_number);
    }

    #[test]
    fn pure_input_dominance() {
        let ch = pauli();
        let e = eps(&[1e-2, 2e-2]);
        let phi = bloch_input();
        let pure = DensityMatrix::pure(&phi).unwrap();
        assert!(pure_input_dominance_check(&ch, &pure, &[(1.0, phi.clone())], &[1.0, 0.0], &e).unwrap());
        let mixed = DensityMatrix::new(numkit::identity(2).map(|z| z * 0.5)).unwrap();
        let decomposition = vec![(0.5, basis_vector(2, 0)), (0.5, basis_vector(2, 1))];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5 {
            let u = [rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5];
            assert!(pure_input_dominance_check(&ch, &mixed, &decomposition, &u, &e).unwrap());
        }
    }

    #[test]
    fn combination_counts() {
        assert_eq!(combinations(4, 2).len(), 6);
        assert_eq!(combinations(1, 2).len(), 0);
        assert_eq!(combinations(3, 3), vec![vec![0, 1, 2]]);
    }
}
