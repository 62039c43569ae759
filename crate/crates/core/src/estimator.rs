//! Locally unbiased estimator built from the output eigenbasis, its
//! mean-square-error matrix, and a Monte Carlo measurement simulator.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{LowNoiseChannel, ParamVector};
use crate::error::{Error, Result};
use crate::fisher::{fisher_inverse, real_eigenvalues, FisherMatrix};
use crate::numkit::{self, c64, ComplexMatrix, RealMatrix, StateVector};
use crate::spectral::{EigenShifts, OutputSpectrum};

/// Probability-sum slack accepted (and renormalized away) before sampling.
pub const PROBABILITY_TOL: f64 = 1e-8;
/// Shots per independently seeded block in the Monte Carlo sampler.
pub const SHOTS_PER_BLOCK: u64 = 1 << 16;
/// Estimates closer than this (relative) share one merged POVM element.
const MERGE_RTOL: f64 = 1e-10;

/// Commuting observables `A_μ = Σ_n (∂_μδp_n/δp_n)|n⟩⟨n|` and their raised
/// counterparts `A^μ = Σ_ν J^{div,μν} A_ν`.
#[derive(Debug, Clone)]
pub struct AOperatorSet {
    pub lowered: Vec<ComplexMatrix>,
    /// Empty until [`raise_index`] has run.
    pub raised: Vec<ComplexMatrix>,
    pub reference_eps: ParamVector,
    /// Output-basis columns carrying an order-one shift.
    pub included_indices: Vec<usize>,
    pub basis: ComplexMatrix,
    /// `D×N` eigenvalues of `A_μ` on each basis vector.
    pub lowered_coeffs: RealMatrix,
    /// `D×N` eigenvalues of `A^μ`, the estimates `x_n^μ`.
    pub raised_coeffs: Option<RealMatrix>,
}

fn diagonal_operator(basis: &ComplexMatrix, coeffs: impl Fn(usize) -> f64) -> ComplexMatrix {
    let mut scaled = basis.clone();
    for k in 0..basis.ncols() {
        let c = coeffs(k);
        scaled.column_mut(k).apply(|z| *z *= c);
    }
    numkit::hermitian_part(&(scaled * basis.adjoint()))
}

/// `shifts` index `k` belongs to output basis column `k + 1`.
pub fn build_lowered_a(spec: &OutputSpectrum, shifts: &EigenShifts) -> Result<AOperatorSet> {
    let included = shifts.included();
    if included.is_empty() {
        return Err(Error::EmptySum);
    }
    if shifts.values.len() + 1 != spec.dim() {
        return Err(Error::DimensionMismatch("shift count must be N − 1".into()));
    }
    let d = shifts.gradients.len();
    let n = spec.dim();
    let mut coeffs = RealMatrix::zeros(d, n);
    for &k in &included {
        for mu in 0..d {
            coeffs[(mu, k + 1)] = shifts.gradients[mu][k] / shifts.values[k];
        }
    }
    let lowered = (0..d)
        .map(|mu| diagonal_operator(&spec.basis, |k| coeffs[(mu, k)]))
        .collect();
    Ok(AOperatorSet {
        lowered,
        raised: Vec::new(),
        reference_eps: spec.eps.clone(),
        included_indices: included.iter().map(|k| k + 1).collect(),
        basis: spec.basis.clone(),
        lowered_coeffs: coeffs,
        raised_coeffs: None,
    })
}

pub fn raise_index(partial: &AOperatorSet, jdiv: &FisherMatrix) -> Result<AOperatorSet> {
    let inv = match &jdiv.inverse {
        Some(inv) => inv.clone(),
        None => fisher_inverse(jdiv)?.inverse.expect("fisher_inverse populates the inverse"),
    };
    if inv.nrows() != partial.lowered.len() {
        return Err(Error::DimensionMismatch("Fisher matrix and operator count differ".into()));
    }
    let raised_coeffs = &inv * &partial.lowered_coeffs;
    let raised = (0..inv.nrows())
        .map(|mu| diagonal_operator(&partial.basis, |k| raised_coeffs[(mu, k)]))
        .collect();
    Ok(AOperatorSet {
        raised,
        raised_coeffs: Some(raised_coeffs),
        ..partial.clone()
    })
}

/// One outcome: projector onto `span(vectors)` reporting `estimate`.
#[derive(Debug, Clone)]
pub struct PovmElement {
    pub vectors: Vec<StateVector>,
    pub estimate: Vec<f64>,
}

impl PovmElement {
    pub fn projector(&self) -> ComplexMatrix {
        let n = self.vectors[0].len();
        self.vectors
            .iter()
            .fold(ComplexMatrix::zeros(n, n), |acc, v| acc + numkit::projector(v))
    }
}

/// Projective measurement with one element per output eigenvector; the
/// excluded directions (including `|0(ε)⟩`) report the zero estimate.
#[derive(Debug, Clone)]
pub struct EstimatorPOVM {
    pub elements: Vec<PovmElement>,
}

impl EstimatorPOVM {
    pub fn projectors(&self) -> Vec<ComplexMatrix> {
        self.elements.iter().map(PovmElement::projector).collect()
    }

    pub fn estimates(&self) -> Vec<Vec<f64>> {
        self.elements.iter().map(|e| e.estimate.clone()).collect()
    }

    pub fn n_params(&self) -> usize {
        self.elements.first().map_or(0, |e| e.estimate.len())
    }

    /// Elements with equal estimates combined into one.
    pub fn merged(&self) -> EstimatorPOVM {
        let mut out: Vec<PovmElement> = Vec::new();
        for e in &self.elements {
            let scale = e.estimate.iter().fold(0.0_f64, |a, x| a.max(x.abs())).max(1.0);
            match out.iter_mut().find(|o| {
                o.estimate
                    .iter()
                    .zip(&e.estimate)
                    .all(|(a, b)| (a - b).abs() <= MERGE_RTOL * scale)
            }) {
                Some(o) => o.vectors.extend(e.vectors.iter().cloned()),
                None => out.push(e.clone()),
            }
        }
        EstimatorPOVM { elements: out }
    }

    /// `max(‖Σ P − 1‖, max ‖P² − P‖, max_{i≠j} ‖P_i P_j‖)`
    pub fn completeness_residual(&self) -> f64 {
        let ps = self.projectors();
        let n = ps[0].nrows();
        let sum = ps.iter().fold(ComplexMatrix::zeros(n, n), |a, p| a + p);
        let mut worst = (sum - numkit::identity(n)).norm();
        for (i, p) in ps.iter().enumerate() {
            worst = worst.max((p * p - p).norm()).max(numkit::hermitian_residual(p));
            for q in &ps[i + 1..] {
                worst = worst.max((p * q).norm());
            }
        }
        worst
    }

    /// `Tr[P_k ρ(ε)]` for every element, in deviation form.
    pub fn outcome_probabilities(&self, ch: &LowNoiseChannel, phi: &StateVector, eps: &ParamVector) -> Result<Vec<f64>> {
        let dev = ch.output_deviation(&numkit::projector(phi), eps)?;
        Ok(self
            .elements
            .iter()
            .map(|e| {
                e.vectors
                    .iter()
                    .map(|v| phi.dotc(v).norm_sqr() + v.dotc(&(&dev * v)).re)
                    .sum()
            })
            .collect())
    }
}

pub fn build_povm(aset: &AOperatorSet) -> Result<EstimatorPOVM> {
    let coeffs = aset
        .raised_coeffs
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("operators have not been raised".into()))?;
    let d = coeffs.nrows();
    let elements = (0..aset.basis.ncols())
        .map(|k| PovmElement {
            vectors: vec![aset.basis.column(k).into_owned()],
            estimate: (0..d).map(|mu| coeffs[(mu, k)]).collect(),
        })
        .collect();
    Ok(EstimatorPOVM { elements })
}

/// `|Σ_n x_n^μ Tr[P_n ρ(ε_true)] − ε_true^μ|`
pub fn unbiasedness_residual(
    povm: &EstimatorPOVM,
    ch: &LowNoiseChannel,
    phi: &StateVector,
    eps_true: &ParamVector,
) -> Result<Vec<f64>> {
    let q = povm.outcome_probabilities(ch, phi, eps_true)?;
    Ok((0..povm.n_params())
        .map(|mu| {
            let mean: f64 = povm.elements.iter().zip(&q).map(|(e, q)| e.estimate[mu] * q).sum();
            (mean - eps_true[mu]).abs()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MseSource {
    Analytic,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MSEMatrix {
    pub entries: RealMatrix,
    pub source: MseSource,
    pub sample_count: Option<u64>,
    pub standard_error: Option<RealMatrix>,
}

/// `V^{μν} = Σ_n (x_n^μ − ε^μ)(x_n^ν − ε^ν) Tr[P_n ρ(ε_true)]`
pub fn analytic_mse(povm: &EstimatorPOVM, ch: &LowNoiseChannel, phi: &StateVector, eps_true: &ParamVector) -> Result<MSEMatrix> {
    let q = povm.outcome_probabilities(ch, phi, eps_true)?;
    let d = povm.n_params();
    let v = RealMatrix::from_fn(d, d, |a, b| {
        povm.elements
            .iter()
            .zip(&q)
            .map(|(e, q)| (e.estimate[a] - eps_true[a]) * (e.estimate[b] - eps_true[b]) * q)
            .sum()
    });
    Ok(MSEMatrix {
        entries: v,
        source: MseSource::Analytic,
        sample_count: None,
        standard_error: None,
    })
}

/// `½ Tr[ρ{A^μ, A^ν}]` at the reference point.
pub fn anticommutator_form(aset: &AOperatorSet, spec: &OutputSpectrum) -> RealMatrix {
    let rho = spec.rho();
    let d = aset.raised.len();
    RealMatrix::from_fn(d, d, |a, b| {
        let anti = numkit::anticommutator(&aset.raised[a], &aset.raised[b]);
        0.5 * (rho.clone() * anti).trace().re
    })
}

/// `V − J⁻¹` with its smallest eigenvalue (non-negative when the bound holds).
#[derive(Debug, Clone, PartialEq)]
pub struct CramerRaoGap {
    pub gap: RealMatrix,
    pub norm: f64,
    pub min_eigenvalue: f64,
}

pub fn cr_gap(v: &RealMatrix, jinv: &RealMatrix) -> Result<CramerRaoGap> {
    if v.shape() != jinv.shape() {
        return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", v.shape(), jinv.shape())));
    }
    let gap = v - jinv;
    let gap = (&gap + gap.transpose()).scale(0.5);
    let min_eigenvalue = real_eigenvalues(&gap).last().copied().unwrap_or(0.0);
    Ok(CramerRaoGap {
        norm: gap.norm(),
        gap,
        min_eigenvalue,
    })
}

/// Empirical estimator statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloResult {
    pub mse: MSEMatrix,
    pub mean: Vec<f64>,
    pub mean_standard_error: Vec<f64>,
    /// Outcome counts per POVM element.
    pub counts: Vec<u64>,
}

fn checked_probabilities(q: &[f64]) -> Result<Vec<f64>> {
    if let Some(bad) = q.iter().find(|p| !p.is_finite() || **p < -PROBABILITY_TOL) {
        return Err(Error::BadProbabilities(format!("outcome probability {bad:e}")));
    }
    let total: f64 = q.iter().sum();
    if (total - 1.0).abs() > PROBABILITY_TOL {
        return Err(Error::BadProbabilities(format!("probabilities sum to {total}")));
    }
    let clipped: Vec<f64> = q.iter().map(|p| p.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    Ok(clipped.iter().map(|p| p / total).collect())
}

fn sample_block(dist: &WeightedIndex<f64>, seed: u64, block: u64, shots: u64, outcomes: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    let mut counts = vec![0u64; outcomes];
    for _ in 0..shots {
        counts[dist.sample(&mut rng)] += 1;
    }
    counts
}

/// Categorical sampling of the POVM outcomes at `ε_true`.
///
/// Shots are cut into fixed blocks, each with its own ChaCha8 stream derived
/// from `seed`, and only integer counts are merged, so the result does not
/// depend on `workers`.
pub fn sample_measurements(
    povm: &EstimatorPOVM,
    ch: &LowNoiseChannel,
    phi: &StateVector,
    eps_true: &ParamVector,
    shots: u64,
    seed: u64,
    workers: usize,
) -> Result<MonteCarloResult> {
    if shots == 0 {
        return Err(Error::InvalidParameter("shots must be at least 1".into()));
    }
    let q = checked_probabilities(&povm.outcome_probabilities(ch, phi, eps_true)?)?;
    let dist = WeightedIndex::new(&q).map_err(|e| Error::BadProbabilities(e.to_string()))?;
    let blocks = shots.div_ceil(SHOTS_PER_BLOCK);
    let block_shots = |b: u64| SHOTS_PER_BLOCK.min(shots - b * SHOTS_PER_BLOCK);
    let workers = workers.clamp(1, blocks as usize);
    let outcomes = q.len();
    let counts = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let dist = &dist;
                scope.spawn(move || {
                    let mut acc = vec![0u64; outcomes];
                    for b in (w as u64..blocks).step_by(workers) {
                        for (a, c) in acc.iter_mut().zip(sample_block(dist, seed, b, block_shots(b), outcomes)) {
                            *a += c;
                        }
                    }
                    acc
                })
            })
            .collect();
        let mut total = vec![0u64; outcomes];
        for h in handles {
            for (t, c) in total.iter_mut().zip(h.join().expect("sampling worker panicked")) {
                *t += c;
            }
        }
        total
    });
    Ok(statistics_from_counts(povm, eps_true, &counts))
}

fn statistics_from_counts(povm: &EstimatorPOVM, eps_true: &ParamVector, counts: &[u64]) -> MonteCarloResult {
    let d = povm.n_params();
    let total: u64 = counts.iter().sum();
    let s = total as f64;
    let freq: Vec<f64> = counts.iter().map(|c| *c as f64 / s).collect();
    let dev: Vec<Vec<f64>> = povm
        .elements
        .iter()
        .map(|e| (0..d).map(|mu| e.estimate[mu] - eps_true[mu]).collect())
        .collect();
    // sample variance with Bessel's correction; zero for a single shot
    let bessel = if total > 1 { s / (s - 1.0) } else { 0.0 };
    let moment = |f: &dyn Fn(&[f64]) -> f64| -> (f64, f64) {
        let m1: f64 = dev.iter().zip(&freq).map(|(x, w)| f(x) * w).sum();
        let m2: f64 = dev.iter().zip(&freq).map(|(x, w)| f(x).powi(2) * w).sum();
        let var = ((m2 - m1 * m1) * bessel).max(0.0);
        (m1, (var / s).sqrt())
    };
    let mut v = RealMatrix::zeros(d, d);
    let mut se = RealMatrix::zeros(d, d);
    for a in 0..d {
        for b in 0..d {
            let (m, e) = moment(&|x: &[f64]| x[a] * x[b]);
            v[(a, b)] = m;
            se[(a, b)] = e;
        }
    }
    let mut mean = Vec::with_capacity(d);
    let mut mean_se = Vec::with_capacity(d);
    for mu in 0..d {
        let (m, e) = moment(&|x: &[f64]| x[mu]);
        mean.push(m + eps_true[mu]);
        mean_se.push(e);
    }
    MonteCarloResult {
        mse: MSEMatrix {
            entries: v,
            source: MseSource::MonteCarlo,
            sample_count: Some(total),
            standard_error: Some(se),
        },
        mean,
        mean_standard_error: mean_se,
        counts: counts.to_vec(),
    }
}

/// Deliberately wrong estimator for negative controls: keeps the estimates of
/// `povm` but measures in a random orthonormal basis.
pub fn random_basis_povm(povm: &EstimatorPOVM, seed: u64) -> EstimatorPOVM {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = povm.elements[0].vectors[0].len();
    let cols: Vec<StateVector> = (0..n).map(|_| numkit::random_pure_state(&mut rng, n)).collect();
    let q = ComplexMatrix::from_columns(&cols).qr().q();
    EstimatorPOVM {
        elements: povm
            .elements
            .iter()
            .enumerate()
            .map(|(k, e)| PovmElement {
                vectors: vec![q.column(k).into_owned().map(|z| z * c64(1.0, 0.0))],
                estimate: e.estimate.clone(),
            })
            .collect(),
    }
}
