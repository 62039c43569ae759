//! Output-state spectra, the deviation matrix `Δ(ε)` on the complement of the
//! input, and the `K×K` reduction `Λ(ε)` whose spectrum carries the non-zero
//! eigenvalue shifts.

use serde::{Deserialize, Serialize};

use crate::channel::{LowNoiseChannel, ParamVector, TRACE_TOL};
use crate::error::{Error, Result};
use crate::numkit::{
    self, c64, geometric_grid, hermitian_eigendecompose, hermitian_part, power_order_fit, ComplexMatrix,
    RealMatrix, StateVector,
};

/// Relative gap below which eigenvalues are treated as one cluster.
pub const CLUSTER_RTOL: f64 = 1e-9;
pub const CLUSTER_ATOL: f64 = 1e-18;
/// Points on the ray `t·ε`, `t ∈ [1e-3, 1]`, used to classify shifts.
pub const RAY_POINTS: usize = 8;
pub const RAY_MIN: f64 = 1e-3;
/// A shift at or below `ZERO_SHIFT_RTOL·t·‖ε‖₁` anywhere on the ray counts as vanishing.
pub const ZERO_SHIFT_RTOL: f64 = 1e-12;
/// Slopes below this are order one.
pub const ORDER_ONE_MAX_SLOPE: f64 = 1.5;

/// Spectrum of `Γ_ε[|φ⟩⟨φ|]` with its parameter derivatives.
#[derive(Debug, Clone)]
pub struct OutputSpectrum {
    pub eps: ParamVector,
    /// `p_n(ε)`, descending.
    pub probs: Vec<f64>,
    /// Columns `|n(ε)⟩`.
    pub basis: ComplexMatrix,
    pub input_state: StateVector,
    /// `δρ = ρ(ε) − |φ⟩⟨φ|`
    pub deviation: ComplexMatrix,
    /// `∂_μ ρ(ε)`
    pub derivatives: Vec<ComplexMatrix>,
}

impl OutputSpectrum {
    pub fn dim(&self) -> usize {
        self.probs.len()
    }

    pub fn n_params(&self) -> usize {
        self.derivatives.len()
    }

    pub fn vector(&self, n: usize) -> StateVector {
        self.basis.column(n).into_owned()
    }

    pub fn rho(&self) -> ComplexMatrix {
        numkit::projector(&self.input_state) + &self.deviation
    }

    /// `⟨n|∂_μρ|m⟩` as a matrix in the output eigenbasis.
    pub fn derivative_in_basis(&self, mu: usize) -> ComplexMatrix {
        self.basis.adjoint() * &self.derivatives[mu] * &self.basis
    }

    /// `∂_μ p_n = ⟨n|∂_μρ|n⟩`, a `D×N` matrix.
    pub fn prob_gradients(&self) -> RealMatrix {
        let d = self.n_params();
        let mut g = RealMatrix::zeros(d, self.dim());
        for mu in 0..d {
            let dm = self.derivative_in_basis(mu);
            for n in 0..self.dim() {
                g[(mu, n)] = dm[(n, n)].re;
            }
        }
        g
    }

    /// `Tr[P ρ(ε)]` for a projector `|v⟩⟨v|`, in deviation form.
    pub fn weight_of(&self, v: &StateVector) -> f64 {
        self.input_state.dotc(v).norm_sqr() + v.dotc(&(&self.deviation * v)).re
    }
}

fn check_unit(phi: &StateVector) -> Result<()> {
    let norm = phi.norm();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!("input state norm {norm} is not 1")));
    }
    Ok(())
}

fn cluster_ranges(values: &[f64]) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for k in 1..=values.len() {
        let split = k == values.len() || {
            let (a, b) = (values[k - 1], values[k]);
            (a - b).abs() > CLUSTER_RTOL * a.abs().max(b.abs()) + CLUSTER_ATOL
        };
        if split {
            out.push(start..k);
            start = k;
        }
    }
    out
}

fn cluster_weight(mu: usize) -> f64 {
    1.0 / (mu as f64 + 2.0).sqrt()
}

/// Sort `(values, vectors)` descending, then rotate every degenerate cluster
/// onto the eigenbasis of `Σ_μ w_μ ∂_μ` restricted to it, so that the basis
/// varies smoothly along a ray even through exact crossings.
fn sort_and_resolve(
    values: Vec<f64>,
    vectors: ComplexMatrix,
    partials: &[ComplexMatrix],
    refine: impl Fn(&StateVector) -> f64,
) -> Result<(Vec<f64>, ComplexMatrix)> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut vals: Vec<f64> = order.iter().map(|&k| values[k]).collect();
    let mut vecs = ComplexMatrix::zeros(vectors.nrows(), n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &vectors.column(src));
    }
    for range in cluster_ranges(&vals) {
        if range.len() < 2 {
            continue;
        }
        let block = vecs.columns(range.start, range.len()).into_owned();
        let mut w = ComplexMatrix::zeros(range.len(), range.len());
        for (mu, p) in partials.iter().enumerate() {
            w += (block.adjoint() * p * &block).map(|z| z * cluster_weight(mu));
        }
        let sp = hermitian_eigendecompose(&hermitian_part(&w))?;
        let rotated = &block * &sp.eigenvectors;
        for (k, col) in range.clone().enumerate() {
            let v = rotated.column(k).into_owned();
            vals[col] = refine(&v);
            vecs.set_column(col, &v);
        }
    }
    Ok((vals, vecs))
}

fn fix_phases(basis: &mut ComplexMatrix, phi: &StateVector) {
    for k in 0..basis.ncols() {
        let col = basis.column(k).into_owned();
        let overlap = phi.dotc(&col);
        let reference = if overlap.norm() > 1e-13 {
            overlap
        } else {
            let idx = (0..col.len())
                .max_by(|&a, &b| col[a].norm().total_cmp(&col[b].norm()))
                .unwrap_or(0);
            col[idx]
        };
        if reference.norm() > 0.0 {
            let phase = reference.conj() / reference.norm();
            basis.column_mut(k).apply(|z| *z *= phase);
        }
    }
}

/// Eigen-decomposition of the channel output for a pure input.
///
/// Eigenvalues are refined as `|⟨n|φ⟩|² + ⟨n|δρ|n⟩`, which keeps full
/// relative precision on the small ones.
pub fn diagonalize_output(ch: &LowNoiseChannel, phi: &StateVector, eps: &ParamVector) -> Result<OutputSpectrum> {
    check_unit(phi)?;
    if phi.len() != ch.dim() {
        return Err(Error::DimensionMismatch(format!(
            "input has dimension {}, channel {}",
            phi.len(),
            ch.dim()
        )));
    }
    let rho_in = numkit::projector(phi);
    let (deviation, derivatives) = ch.output_with_derivatives(&rho_in, eps)?;
    let tr = deviation.trace().norm();
    if tr > TRACE_TOL {
        return Err(Error::TpcpViolation(format!("output trace deviates by {tr:e}")));
    }
    let rho = &rho_in + &deviation;
    let sp = hermitian_eigendecompose(&rho)?;
    let refine = |v: &StateVector| phi.dotc(v).norm_sqr() + v.dotc(&(&deviation * v)).re;
    let values: Vec<f64> = (0..ch.dim()).map(|k| refine(&sp.vector(k))).collect();
    let (probs, mut basis) = sort_and_resolve(values, sp.eigenvectors, &derivatives, refine)?;
    fix_phases(&mut basis, phi);
    Ok(OutputSpectrum {
        eps: eps.clone(),
        probs,
        basis,
        input_state: phi.clone(),
        deviation,
        derivatives,
    })
}

/// Orthonormal basis of the complement of `φ`: Gram–Schmidt on the standard
/// basis, skipping the basis vector with the largest overlap with `φ`.
pub fn complement_basis(phi: &StateVector) -> ComplexMatrix {
    let n = phi.len();
    let skip = (0..n).max_by(|&a, &b| phi[a].norm().total_cmp(&phi[b].norm())).unwrap_or(0);
    let mut cols: Vec<StateVector> = Vec::with_capacity(n - 1);
    for k in (0..n).filter(|&k| k != skip) {
        let mut v = numkit::basis_vector(n, k);
        for _ in 0..2 {
            v -= phi * phi.dotc(&v);
            for c in &cols {
                v -= c * c.dotc(&v);
            }
        }
        let norm = v.norm();
        cols.push(v.unscale(norm));
    }
    ComplexMatrix::from_columns(&cols)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeltaVariant {
    /// `⟨n(0)|δρ(ε)|n′(0)⟩`
    Full,
    /// `Σ_{μa} ε^μ ⟨n(0)|M_{μa}|φ⟩⟨φ|M_{μa}†|n′(0)⟩`
    Leading,
}

/// `Δ(ε)` on a complement frame of the input.
#[derive(Debug, Clone)]
pub struct DeltaMatrix {
    pub entries: ComplexMatrix,
    pub variant: DeltaVariant,
    /// `N×(N−1)` frame `{|n(0)⟩}`.
    pub frame: ComplexMatrix,
    /// `∂_μ Δ` in the same frame.
    pub partials: Vec<ComplexMatrix>,
}

pub fn delta_matrix(ch: &LowNoiseChannel, phi: &StateVector, eps: &ParamVector, variant: DeltaVariant) -> Result<DeltaMatrix> {
    check_unit(phi)?;
    delta_matrix_in_frame(ch, phi, eps, variant, complement_basis(phi))
}

/// `Δ(ε)` in a caller-supplied orthonormal complement frame.
pub fn delta_matrix_in_frame(
    ch: &LowNoiseChannel,
    phi: &StateVector,
    eps: &ParamVector,
    variant: DeltaVariant,
    frame: ComplexMatrix,
) -> Result<DeltaMatrix> {
    check_unit(phi)?;
    if frame.nrows() != ch.dim() || frame.ncols() + 1 != ch.dim() || phi.len() != ch.dim() {
        return Err(Error::DimensionMismatch("complement frame must be N×(N−1)".into()));
    }
    let (entries, partials) = match variant {
        DeltaVariant::Full => {
            let (dev, ders) = ch.output_with_derivatives(&numkit::projector(phi), eps)?;
            let restrict = |m: &ComplexMatrix| hermitian_part(&(frame.adjoint() * m * &frame));
            (restrict(&dev), ders.iter().map(restrict).collect())
        }
        DeltaVariant::Leading => {
            if eps.len() != ch.n_params() {
                return Err(Error::DimensionMismatch("ε length".into()));
            }
            let m = frame.ncols();
            let mut partials = vec![ComplexMatrix::zeros(m, m); ch.n_params()];
            for c in ch.jump_terms() {
                let w = frame.adjoint() * (&c.base * phi);
                partials[c.param] += &w * w.adjoint();
            }
            let partials: Vec<ComplexMatrix> = partials.iter().map(hermitian_part).collect();
            let mut entries = ComplexMatrix::zeros(m, m);
            for (p, e) in partials.iter().zip(eps.as_slice()) {
                entries += p.map(|z| z * *e);
            }
            (entries, partials)
        }
    };
    Ok(DeltaMatrix {
        entries,
        variant,
        frame,
        partials,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShiftOrder {
    Order1,
    HigherOrZero,
}

/// Eigenvalue shifts `δp_n(ε)` with their gradients and order classes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenShifts {
    pub values: Vec<f64>,
    pub orders: Vec<ShiftOrder>,
    /// Fitted slope along the ray; `None` when the shift vanished somewhere.
    pub slopes: Vec<Option<f64>>,
    /// `∂_μ δp_n`, stored row-major as `D` rows of length `values.len()`.
    pub gradients: Vec<Vec<f64>>,
}

impl EigenShifts {
    pub fn included(&self) -> Vec<usize> {
        (0..self.values.len()).filter(|&n| self.orders[n] == ShiftOrder::Order1).collect()
    }

    pub fn gradient_matrix(&self) -> RealMatrix {
        let d = self.gradients.len();
        RealMatrix::from_fn(d, self.values.len(), |mu, n| self.gradients[mu][n])
    }
}

/// Permutation `p` with `next` column `p[i]` continuing `prev` column `i`,
/// chosen greedily by largest overlap.
pub fn track_by_overlap(prev: &ComplexMatrix, next: &ComplexMatrix) -> Vec<usize> {
    let n = prev.ncols();
    let ov = prev.adjoint() * next;
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            pairs.push((ov[(i, j)].norm_sqr(), i, j));
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut perm = vec![usize::MAX; n];
    let mut used = vec![false; n];
    for (_, i, j) in pairs {
        if perm[i] == usize::MAX && !used[j] {
            perm[i] = j;
            used[j] = true;
        }
    }
    perm
}

/// Classify tracked curves `values[k][n]` sampled at `ts[k]·ε` (last entry `t = 1`).
pub fn classify_curves(ts: &[f64], values: &[Vec<f64>], eps_l1: f64) -> (Vec<ShiftOrder>, Vec<Option<f64>>) {
    let m = values.last().map_or(0, Vec::len);
    let mut orders = Vec::with_capacity(m);
    let mut slopes = Vec::with_capacity(m);
    for n in 0..m {
        let vanishes = ts
            .iter()
            .zip(values)
            .any(|(t, row)| row[n] <= ZERO_SHIFT_RTOL * t * eps_l1);
        if vanishes || eps_l1 == 0.0 {
            orders.push(ShiftOrder::HigherOrZero);
            slopes.push(None);
            continue;
        }
        let pts: Vec<(f64, f64)> = ts.iter().zip(values).map(|(t, row)| (*t, row[n])).collect();
        match power_order_fit(&pts) {
            Ok(fit) => {
                orders.push(if fit.slope < ORDER_ONE_MAX_SLOPE {
                    ShiftOrder::Order1
                } else {
                    ShiftOrder::HigherOrZero
                });
                slopes.push(Some(fit.slope));
            }
            Err(_) => {
                orders.push(ShiftOrder::HigherOrZero);
                slopes.push(None);
            }
        }
    }
    (orders, slopes)
}

pub fn ray_grid() -> Vec<f64> {
    geometric_grid(RAY_MIN, 1.0, RAY_POINTS)
}

/// Follow `sample(t)` (values, vectors) from `t = 1` down the ray and return
/// the curves in the index order of the `t = 1` point, ascending in `t`.
fn track_ray(
    ts: &[f64],
    mut sample: impl FnMut(f64) -> Result<(Vec<f64>, ComplexMatrix)>,
) -> Result<Vec<Vec<f64>>> {
    let mut curves = vec![Vec::new(); ts.len()];
    let (v_top, b_top) = sample(1.0)?;
    let last = ts.len() - 1;
    curves[last] = v_top;
    let mut prev_basis = b_top;
    for k in (0..last).rev() {
        let (vals, basis) = sample(ts[k])?;
        let perm = track_by_overlap(&prev_basis, &basis);
        curves[k] = perm.iter().map(|&j| vals[j]).collect();
        prev_basis = ComplexMatrix::from_columns(&perm.iter().map(|&j| basis.column(j).into_owned()).collect::<Vec<_>>());
    }
    Ok(curves)
}

/// Shifts `δp_n = p_n(ε)`, `n ≥ 1`, of the output spectrum, classified along the ray.
pub fn output_shifts(ch: &LowNoiseChannel, spec: &OutputSpectrum) -> Result<EigenShifts> {
    let ts = ray_grid();
    let phi = &spec.input_state;
    let curves = track_ray(&ts, |t| {
        if t == 1.0 {
            return Ok((spec.probs.clone(), spec.basis.clone()));
        }
        let s = diagonalize_output(ch, phi, &spec.eps.scaled(t))?;
        Ok((s.probs, s.basis))
    })?;
    let small: Vec<Vec<f64>> = curves.iter().map(|row| row[1..].to_vec()).collect();
    let (orders, slopes) = classify_curves(&ts, &small, spec.eps.l1());
    let g = spec.prob_gradients();
    let gradients = (0..spec.n_params()).map(|mu| (1..spec.dim()).map(|n| g[(mu, n)]).collect()).collect();
    Ok(EigenShifts {
        values: spec.probs[1..].to_vec(),
        orders,
        slopes,
        gradients,
    })
}

fn delta_spectrum(dm: &DeltaMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    let sp = hermitian_eigendecompose(&dm.entries)?;
    let values = sp.eigenvalues.clone();
    sort_and_resolve(values, sp.eigenvectors, &dm.partials, |v| v.dotc(&(&dm.entries * v)).re)
}

/// Eigenvalues of `Δ(ε)` classified by following the ray `t·ε`.
pub fn delta_eigenvalues(
    ch: &LowNoiseChannel,
    phi: &StateVector,
    eps: &ParamVector,
    variant: DeltaVariant,
) -> Result<EigenShifts> {
    let frame = complement_basis(phi);
    let top = delta_matrix_in_frame(ch, phi, eps, variant, frame.clone())?;
    let (values, vectors) = delta_spectrum(&top)?;
    let ts = ray_grid();
    let curves = track_ray(&ts, |t| {
        if t == 1.0 {
            return Ok((values.clone(), vectors.clone()));
        }
        delta_spectrum(&delta_matrix_in_frame(ch, phi, &eps.scaled(t), variant, frame.clone())?)
    })?;
    let (orders, slopes) = classify_curves(&ts, &curves, eps.l1());
    let gradients = top
        .partials
        .iter()
        .map(|p| {
            (0..values.len())
                .map(|n| {
                    let v = vectors.column(n).into_owned();
                    v.dotc(&(p * &v)).re
                })
                .collect()
        })
        .collect();
    Ok(EigenShifts {
        values,
        orders,
        slopes,
        gradients,
    })
}

/// `Λ^{μa,νb} = √ε^μ ⟨φ|(M_{μa} − ⟨M_{μa}⟩)†(M_{νb} − ⟨M_{νb}⟩)|φ⟩ √ε^ν`
#[derive(Debug, Clone)]
pub struct LambdaMatrix {
    pub entries: ComplexMatrix,
    /// `(μ, a)` label of each row.
    pub labels: Vec<(usize, usize)>,
    /// Dimension `N` of the underlying system.
    pub system_dim: usize,
}

pub fn lambda_matrix(ch: &LowNoiseChannel, phi: &StateVector, eps: &ParamVector) -> Result<LambdaMatrix> {
    check_unit(phi)?;
    if eps.len() != ch.n_params() {
        return Err(Error::DimensionMismatch("ε length".into()));
    }
    let mut counters = vec![0usize; ch.n_params()];
    let mut labels = Vec::new();
    let centered: Vec<StateVector> = ch
        .jump_terms()
        .iter()
        .map(|c| {
            labels.push((c.param, counters[c.param]));
            counters[c.param] += 1;
            let mphi = &c.base * phi;
            let mean = phi.dotc(&mphi);
            (mphi - phi * mean) * c64(eps[c.param].sqrt(), 0.0)
        })
        .collect();
    let k = centered.len();
    let entries = ComplexMatrix::from_fn(k, k, |i, j| centered[i].dotc(&centered[j]));
    Ok(LambdaMatrix {
        entries: hermitian_part(&entries),
        labels,
        system_dim: ch.dim(),
    })
}

/// Spectrum of `Λ`, descending; valid only for `K ≤ N − 1`.
pub fn reduced_eigenvalues(lm: &LambdaMatrix) -> Result<Vec<f64>> {
    let k = lm.entries.nrows();
    if k + 1 > lm.system_dim {
        return Err(Error::ReductionInvalid { k, n: lm.system_dim });
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    Ok(hermitian_eigendecompose(&lm.entries)?.eigenvalues)
}

/// `max_{k ≤ kmax} |Tr Δ^k − Tr Λ^k|`
pub fn trace_power_check(dm: &DeltaMatrix, lm: &LambdaMatrix, kmax: usize) -> f64 {
    let mut pd = dm.entries.clone();
    let mut pl = lm.entries.clone();
    let mut worst: f64 = 0.0;
    for k in 1..=kmax {
        if k > 1 {
            pd = &pd * &dm.entries;
            pl = &pl * &lm.entries;
        }
        let diff = (pd.trace() - pl.trace()).norm();
        worst = worst.max(diff);
    }
    worst
}
