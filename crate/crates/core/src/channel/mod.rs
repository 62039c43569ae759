//! Low-noise channels `Γ_ε[ρ] = Σ_α B_α ρ B_α† + Σ_μ ε^μ Σ_a C_{μa} ρ C_{μa}†`.
//!
//! Identity-family operators are `B_α = κ_α·1 + E_α(ε)` with `E_α` small, and
//! every evaluation is done on those deviations rather than on `B_α` itself.
//! The output therefore comes back as `δρ = Γ_ε[ρ] − ρ` with full relative
//! precision even when `ε ~ 1e-5`, which the Fisher information needs since it
//! divides by eigenvalues of that size.

mod config;
mod params;

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::{
    matrix_from_config, matrix_to_config, Builder, ChannelConfig, IdentityTermConfig, JumpTermConfig,
    MatrixConfig,
};
pub use params::{DensityMatrix, ParamVector};

use crate::error::{Error, Result};
use crate::numkit::{
    self, c64, hermitian_eigendecompose, hermitian_part, hermitian_residual, identity, random_pure_state,
    tensor_product, ComplexMatrix,
};

/// Smallest eigenvalue allowed for `1 − Σ ε^μ Σ_a M†M` in a sqrt-completed channel.
pub const VALIDITY_MARGIN: f64 = 1e-12;
/// Output trace error beyond which `apply_channel` refuses the point.
pub const TRACE_TOL: f64 = 1e-8;
const IDENTITY_LIMIT_TOL: f64 = 1e-12;
const PROBE_SEED: u64 = 0x1d_0c4a;

pub type RemainderFn = Arc<dyn Fn(&ParamVector) -> ComplexMatrix + Send + Sync>;
pub type RemainderPartialFn = Arc<dyn Fn(&ParamVector, usize) -> ComplexMatrix + Send + Sync>;

/// Kraus contributions beyond the stored linear order, `R(ε) = O(ε²)`.
#[derive(Clone)]
pub struct Remainder {
    value: RemainderFn,
    partial: Option<RemainderPartialFn>,
}

impl Remainder {
    pub fn new(value: impl Fn(&ParamVector) -> ComplexMatrix + Send + Sync + 'static) -> Self {
        Self {
            value: Arc::new(value),
            partial: None,
        }
    }

    /// Supply `∂_μ R` analytically; otherwise a forward difference is used.
    pub fn with_partial(mut self, partial: impl Fn(&ParamVector, usize) -> ComplexMatrix + Send + Sync + 'static) -> Self {
        self.partial = Some(Arc::new(partial));
        self
    }

    pub fn value(&self, eps: &ParamVector) -> ComplexMatrix {
        (self.value)(eps)
    }

    pub fn partial(&self, eps: &ParamVector, mu: usize) -> ComplexMatrix {
        if let Some(p) = &self.partial {
            return p(eps, mu);
        }
        let h = 1e-6;
        let r0 = self.value(eps);
        let r1 = self.value(&eps.shifted(mu, h));
        let r2 = self.value(&eps.shifted(mu, 2.0 * h));
        (r1 * c64(4.0, 0.0) - r0 * c64(3.0, 0.0) - r2) / c64(2.0 * h, 0.0)
    }

    fn tensor_identity(&self, n: usize) -> Self {
        let value = self.value.clone();
        let partial = self.partial.clone();
        let one = identity(n);
        let one_p = one.clone();
        Self {
            value: Arc::new(move |e| tensor_product(&value(e), &one)),
            partial: partial.map(|p| -> RemainderPartialFn { Arc::new(move |e, mu| tensor_product(&p(e, mu), &one_p)) }),
        }
    }
}

impl fmt::Debug for Remainder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Remainder")
            .field("analytic_partial", &self.partial.is_some())
            .finish()
    }
}

/// `B_α(ε) = κ_α·1 − Σ_μ ε^μ N_{μα} + R_α(ε)`
#[derive(Debug, Clone)]
pub struct IdentityKraus {
    pub kappa: Complex64,
    /// `N_{μα}` for each parameter μ.
    pub linear: Vec<ComplexMatrix>,
    pub higher: Option<Remainder>,
}

/// `C_{μa}(ε) = M_{μa} + R_{μa}(ε)`, weighted by `ε^μ` in the channel.
#[derive(Debug, Clone)]
pub struct JumpKraus {
    pub param: usize,
    pub base: ComplexMatrix,
    pub higher: Option<Remainder>,
}

#[derive(Debug, Clone)]
struct SqrtCompletion {
    /// `X_μ = Σ_a M_{μa}†M_{μa}`
    dissipators: Vec<ComplexMatrix>,
    generators: Option<Vec<ComplexMatrix>>,
}

#[derive(Debug, Clone)]
pub struct LowNoiseChannel {
    dim: usize,
    n_params: usize,
    identity_terms: Vec<IdentityKraus>,
    jump_terms: Vec<JumpKraus>,
    completion: Option<SqrtCompletion>,
    hamiltonians: Vec<ComplexMatrix>,
    config: Option<ChannelConfig>,
}

/// Kraus data evaluated at one ε.
struct KrausEval {
    kappa: Vec<Complex64>,
    /// `E_α = B_α − κ_α·1`
    deviation: Vec<ComplexMatrix>,
    jumps: Vec<ComplexMatrix>,
    completion: Option<CompletionFrame>,
}

/// Eigenframes of a sqrt-completed channel at one ε, reused for partials.
struct CompletionFrame {
    sqrt_vecs: ComplexMatrix,
    sqrt_vals: Vec<f64>,
    unitary: Option<(ComplexMatrix, Vec<f64>)>,
    u: ComplexMatrix,
    s: ComplexMatrix,
}

fn scale(m: &ComplexMatrix, z: Complex64) -> ComplexMatrix {
    m.map(|x| x * z)
}

fn diag_in_frame(v: &ComplexMatrix, d: impl Fn(usize) -> Complex64) -> ComplexMatrix {
    let mut scaled = v.clone();
    for k in 0..v.ncols() {
        let z = d(k);
        scaled.column_mut(k).apply(|x| *x *= z);
    }
    scaled * v.adjoint()
}

/// Divided difference of `λ ↦ e^{−iλ}`, stable for close arguments.
fn expi_divided_difference(a: f64, b: f64) -> Complex64 {
    let mean = 0.5 * (a + b);
    let half = 0.5 * (a - b);
    let sinc = if half.abs() < 1e-8 { 1.0 - half * half / 6.0 } else { half.sin() / half };
    Complex64::new(0.0, -1.0) * Complex64::from_polar(1.0, -mean) * sinc
}

impl LowNoiseChannel {
    /// Channel with one identity-family operator
    /// `B(ε) = exp(−iΣ ε^μ G_μ)·sqrt(1 − Σ_μ ε^μ Σ_a M_{μa}†M_{μa})`,
    /// trace preserving for every ε where the square-root argument is positive.
    pub fn sqrt_completion(
        dim: usize,
        jumps: Vec<(usize, ComplexMatrix)>,
        generators: Option<Vec<ComplexMatrix>>,
    ) -> Result<Self> {
        let n_params = jumps.iter().map(|(mu, _)| mu + 1).max().unwrap_or(0);
        let n_params = n_params.max(generators.as_ref().map_or(0, Vec::len));
        Self::sqrt_completion_with_params(dim, n_params, jumps, generators)
    }

    pub fn sqrt_completion_with_params(
        dim: usize,
        n_params: usize,
        jumps: Vec<(usize, ComplexMatrix)>,
        generators: Option<Vec<ComplexMatrix>>,
    ) -> Result<Self> {
        if n_params == 0 {
            return Err(Error::InconsistentKrausData("no parameters".into()));
        }
        if let Some(g) = &generators {
            if g.len() != n_params {
                return Err(Error::InconsistentKrausData(format!(
                    "{} generators for {n_params} parameters",
                    g.len()
                )));
            }
            for gm in g {
                check_square(gm, dim)?;
                let residual = hermitian_residual(gm);
                if residual > 1e-12 * gm.norm().max(1.0) {
                    return Err(Error::NonHermitian { residual });
                }
            }
        }
        let mut dissipators = vec![numkit::zeros(dim); n_params];
        for (mu, m) in &jumps {
            check_square(m, dim)?;
            if *mu >= n_params {
                return Err(Error::InconsistentKrausData(format!("jump parameter {mu} out of range")));
            }
            dissipators[*mu] += m.adjoint() * m;
        }
        let generators = generators.map(|g| g.into_iter().map(|m| hermitian_part(&m)).collect::<Vec<_>>());
        let linear = (0..n_params)
            .map(|mu| {
                let mut n = scale(&dissipators[mu], c64(0.5, 0.0));
                if let Some(g) = &generators {
                    n += scale(&g[mu], c64(0.0, 1.0));
                }
                n
            })
            .collect();
        let config = ChannelConfig {
            dim,
            params: n_params,
            builder: Builder::SqrtCompletion,
            jump: jumps
                .iter()
                .map(|(mu, m)| JumpTermConfig {
                    param: *mu,
                    matrix: matrix_to_config(m),
                })
                .collect(),
            generators: generators
                .as_ref()
                .map(|g| g.iter().map(matrix_to_config).collect())
                .unwrap_or_default(),
            identity: Vec::new(),
        };
        let ch = Self {
            dim,
            n_params,
            identity_terms: vec![IdentityKraus {
                kappa: c64(1.0, 0.0),
                linear,
                higher: None,
            }],
            jump_terms: jumps
                .into_iter()
                .map(|(param, base)| JumpKraus {
                    param,
                    base,
                    higher: None,
                })
                .collect(),
            completion: Some(SqrtCompletion {
                dissipators,
                generators,
            }),
            hamiltonians: Vec::new(),
            config: Some(config),
        };
        ch.finish_checked()
    }

    /// Channel from explicit Kraus data; all low-noise conditions are checked.
    pub fn explicit(
        dim: usize,
        n_params: usize,
        identity_terms: Vec<IdentityKraus>,
        jump_terms: Vec<JumpKraus>,
    ) -> Result<Self> {
        Self::explicit_unchecked(dim, n_params, identity_terms, jump_terms)?.finish_checked()
    }

    /// Explicit Kraus data with only shape checks. Used for fixtures that
    /// deliberately break a low-noise condition.
    pub fn explicit_unchecked(
        dim: usize,
        n_params: usize,
        identity_terms: Vec<IdentityKraus>,
        jump_terms: Vec<JumpKraus>,
    ) -> Result<Self> {
        if n_params == 0 {
            return Err(Error::InconsistentKrausData("no parameters".into()));
        }
        for b in &identity_terms {
            if b.linear.len() != n_params {
                return Err(Error::DimensionMismatch(format!(
                    "identity term has {} linear parts for {n_params} parameters",
                    b.linear.len()
                )));
            }
            for n in &b.linear {
                check_square(n, dim)?;
            }
        }
        for c in &jump_terms {
            check_square(&c.base, dim)?;
            if c.param >= n_params {
                return Err(Error::InconsistentKrausData(format!("jump parameter {} out of range", c.param)));
            }
        }
        let plain = identity_terms.iter().all(|b| b.higher.is_none()) && jump_terms.iter().all(|c| c.higher.is_none());
        let config = plain.then(|| ChannelConfig {
            dim,
            params: n_params,
            builder: Builder::Explicit,
            jump: jump_terms
                .iter()
                .map(|c| JumpTermConfig {
                    param: c.param,
                    matrix: matrix_to_config(&c.base),
                })
                .collect(),
            generators: Vec::new(),
            identity: identity_terms
                .iter()
                .map(|b| IdentityTermConfig {
                    kappa: [b.kappa.re, b.kappa.im],
                    linear: b.linear.iter().map(matrix_to_config).collect(),
                })
                .collect(),
        });
        let mut ch = Self {
            dim,
            n_params,
            identity_terms,
            jump_terms,
            completion: None,
            hamiltonians: Vec::new(),
            config,
        };
        ch.hamiltonians = (0..n_params).map(|mu| hermitian_part(&ch.raw_hamiltonian(mu))).collect();
        Ok(ch)
    }

    pub fn from_config(cfg: &ChannelConfig) -> Result<Self> {
        let dim = cfg.dim;
        if dim == 0 || cfg.params == 0 {
            return Err(Error::ConfigInvalid("dim and params must be positive".into()));
        }
        let jumps = cfg
            .jump
            .iter()
            .map(|j| {
                if j.param >= cfg.params {
                    return Err(Error::ConfigInvalid(format!("jump param {} out of range", j.param)));
                }
                Ok((j.param, matrix_from_config(&j.matrix, dim)?))
            })
            .collect::<Result<Vec<_>>>()?;
        let built = match cfg.builder {
            Builder::SqrtCompletion => {
                if !cfg.identity.is_empty() {
                    return Err(Error::ConfigInvalid("identity terms are derived by sqrt-completion".into()));
                }
                let generators = if cfg.generators.is_empty() {
                    None
                } else {
                    Some(
                        cfg.generators
                            .iter()
                            .map(|g| matrix_from_config(g, dim))
                            .collect::<Result<Vec<_>>>()?,
                    )
                };
                Self::sqrt_completion_with_params(dim, cfg.params, jumps, generators)
            }
            Builder::Explicit => {
                if !cfg.generators.is_empty() {
                    return Err(Error::ConfigInvalid("generators apply to sqrt-completion only".into()));
                }
                let identity_terms = cfg
                    .identity
                    .iter()
                    .map(|b| {
                        Ok(IdentityKraus {
                            kappa: c64(b.kappa[0], b.kappa[1]),
                            linear: b
                                .linear
                                .iter()
                                .map(|m| matrix_from_config(m, dim))
                                .collect::<Result<Vec<_>>>()?,
                            higher: None,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let jump_terms = jumps
                    .into_iter()
                    .map(|(param, base)| JumpKraus {
                        param,
                        base,
                        higher: None,
                    })
                    .collect();
                Self::explicit(dim, cfg.params, identity_terms, jump_terms)
            }
        };
        built.map_err(|e| match e {
            Error::ConfigInvalid(_) => e,
            other => Error::ConfigInvalid(other.to_string()),
        })
    }

    fn finish_checked(mut self) -> Result<Self> {
        let kappa_norm: f64 = self.identity_terms.iter().map(|b| b.kappa.norm_sqr()).sum();
        if (kappa_norm - 1.0).abs() > 1e-12 {
            return Err(Error::InconsistentKrausData(format!("Σ|κ|² = {kappa_norm}")));
        }
        for mu in 0..self.n_params {
            let bases: Vec<&ComplexMatrix> = self.jump_terms.iter().filter(|c| c.param == mu).map(|c| &c.base).collect();
            if bases.is_empty() {
                return Err(Error::InconsistentKrausData(format!("parameter {mu} has no jump operator")));
            }
            for (i, a) in bases.iter().enumerate() {
                if a.norm() == 0.0 {
                    return Err(Error::InconsistentKrausData(format!("jump operator for parameter {mu} vanishes")));
                }
                for b in &bases[..i] {
                    let overlap = a.dotc(b).norm_sqr();
                    if overlap >= (1.0 - 1e-12) * a.norm_squared() * b.norm_squared() {
                        return Err(Error::InconsistentKrausData(format!(
                            "two jump operators for parameter {mu} are proportional"
                        )));
                    }
                }
            }
        }
        self.hamiltonians = (0..self.n_params).map(|mu| self.hamiltonian_part(mu)).collect::<Result<_>>()?;
        let zero = ParamVector::zeros(self.n_params);
        let tpcp = self.tpcp_residual(&zero)?;
        if tpcp > 1e-10 {
            return Err(Error::TpcpViolation(format!("residual {tpcp:e} at ε = 0")));
        }
        let id = self.identity_limit_residual()?;
        if id > IDENTITY_LIMIT_TOL {
            return Err(Error::InconsistentKrausData(format!("channel at ε = 0 is not the identity ({id:e})")));
        }
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn identity_terms(&self) -> &[IdentityKraus] {
        &self.identity_terms
    }

    pub fn jump_terms(&self) -> &[JumpKraus] {
        &self.jump_terms
    }

    /// `K_μ` for each parameter.
    pub fn jumps_per_param(&self) -> Vec<usize> {
        (0..self.n_params)
            .map(|mu| self.jump_terms.iter().filter(|c| c.param == mu).count())
            .collect()
    }

    /// `K = Σ_μ K_μ`
    pub fn jump_count(&self) -> usize {
        self.jump_terms.len()
    }

    pub fn hamiltonians(&self) -> &[ComplexMatrix] {
        &self.hamiltonians
    }

    pub fn is_sqrt_completion(&self) -> bool {
        self.completion.is_some()
    }

    /// Serializable description, absent when the channel carries closures.
    pub fn config(&self) -> Option<&ChannelConfig> {
        self.config.as_ref()
    }

    fn check_eps(&self, eps: &ParamVector) -> Result<()> {
        if eps.len() != self.n_params {
            return Err(Error::DimensionMismatch(format!(
                "ε has {} components, channel has {} parameters",
                eps.len(),
                self.n_params
            )));
        }
        Ok(())
    }

    fn check_rho(&self, rho: &ComplexMatrix) -> Result<()> {
        if rho.nrows() != self.dim || rho.ncols() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "state is {}x{}, channel dimension {}",
                rho.nrows(),
                rho.ncols(),
                self.dim
            )));
        }
        Ok(())
    }

    /// Smallest eigenvalue of `1 − Σ ε^μ X_μ` for sqrt-completed channels.
    pub fn validity_margin(&self, eps: &ParamVector) -> Result<Option<f64>> {
        self.check_eps(eps)?;
        let Some(comp) = &self.completion else { return Ok(None) };
        let x = weighted_sum(&comp.dissipators, eps, self.dim);
        let sp = hermitian_eigendecompose(&x)?;
        Ok(Some(1.0 - sp.eigenvalues[0]))
    }

    fn evaluate(&self, eps: &ParamVector) -> Result<KrausEval> {
        self.check_eps(eps)?;
        let jumps = self
            .jump_terms
            .iter()
            .map(|c| match &c.higher {
                Some(r) => &c.base + r.value(eps),
                None => c.base.clone(),
            })
            .collect();
        if let Some(comp) = &self.completion {
            let (dev, frame) = self.completion_deviation(comp, eps)?;
            return Ok(KrausEval {
                kappa: vec![c64(1.0, 0.0)],
                deviation: vec![dev],
                jumps,
                completion: Some(frame),
            });
        }
        let deviation = self
            .identity_terms
            .iter()
            .map(|b| {
                let mut e = -weighted_sum(&b.linear, eps, self.dim);
                if let Some(r) = &b.higher {
                    e += r.value(eps);
                }
                e
            })
            .collect();
        Ok(KrausEval {
            kappa: self.identity_terms.iter().map(|b| b.kappa).collect(),
            deviation,
            jumps,
            completion: None,
        })
    }

    fn completion_deviation(&self, comp: &SqrtCompletion, eps: &ParamVector) -> Result<(ComplexMatrix, CompletionFrame)> {
        let x = weighted_sum(&comp.dissipators, eps, self.dim);
        let sp = hermitian_eigendecompose(&x)?;
        let margin = 1.0 - sp.eigenvalues[0];
        if margin < VALIDITY_MARGIN {
            return Err(Error::TpcpViolation(format!(
                "1 − Σε X has eigenvalue {margin:e}; ε is outside the validity region"
            )));
        }
        let sqrt_vals: Vec<f64> = sp.eigenvalues.iter().map(|x| (1.0 - x).sqrt()).collect();
        // sqrt(1 − x) − 1 = −x / (1 + sqrt(1 − x)), no cancellation for small x
        let s_dev = diag_in_frame(&sp.eigenvectors, |k| c64(-sp.eigenvalues[k] / (1.0 + sqrt_vals[k]), 0.0));
        let s = &s_dev + identity(self.dim);
        let (dev, unitary, u) = match &comp.generators {
            None => (s_dev, None, identity(self.dim)),
            Some(g) => {
                let gt = weighted_sum(g, eps, self.dim);
                let gs = hermitian_eigendecompose(&gt)?;
                // e^{−iλ} − 1 = −2 sin²(λ/2) − i sin λ
                let u_dev = diag_in_frame(&gs.eigenvectors, |k| {
                    let l = gs.eigenvalues[k];
                    c64(-2.0 * (0.5 * l).sin().powi(2), -l.sin())
                });
                let dev = &u_dev + &s_dev + &u_dev * &s_dev;
                let u = u_dev + identity(self.dim);
                (dev, Some((gs.eigenvectors, gs.eigenvalues)), u)
            }
        };
        Ok((
            dev,
            CompletionFrame {
                sqrt_vecs: sp.eigenvectors,
                sqrt_vals,
                unitary,
                u,
                s,
            },
        ))
    }

    /// `∂_μ E_α` for every identity-family term.
    fn deviation_partials(&self, eps: &ParamVector, ev: &KrausEval, mu: usize) -> Vec<ComplexMatrix> {
        if let (Some(comp), Some(fr)) = (&self.completion, &ev.completion) {
            let q = &fr.sqrt_vecs;
            let xq = q.adjoint() * &comp.dissipators[mu] * q;
            let ds_frame = ComplexMatrix::from_fn(self.dim, self.dim, |i, j| {
                -xq[(i, j)] / (fr.sqrt_vals[i] + fr.sqrt_vals[j])
            });
            let ds = q * ds_frame * q.adjoint();
            let mut de = &fr.u * ds;
            if let (Some(g), Some((w, lambda))) = (&comp.generators, &fr.unitary) {
                let gw = w.adjoint() * &g[mu] * w;
                let du_frame = ComplexMatrix::from_fn(self.dim, self.dim, |i, j| {
                    gw[(i, j)] * expi_divided_difference(lambda[i], lambda[j])
                });
                let du = w * du_frame * w.adjoint();
                de += du * &fr.s;
            }
            return vec![de];
        }
        self.identity_terms
            .iter()
            .map(|b| {
                let mut d = -b.linear[mu].clone();
                if let Some(r) = &b.higher {
                    d += r.partial(eps, mu);
                }
                d
            })
            .collect()
    }

    /// `δρ = Γ_ε[ρ] − ρ`, evaluated without forming `B_α` so that small
    /// outputs keep their relative precision.
    pub fn output_deviation(&self, rho: &ComplexMatrix, eps: &ParamVector) -> Result<ComplexMatrix> {
        self.check_rho(rho)?;
        let ev = self.evaluate(eps)?;
        Ok(self.deviation_from_eval(rho, eps, &ev))
    }

    fn deviation_from_eval(&self, rho: &ComplexMatrix, eps: &ParamVector, ev: &KrausEval) -> ComplexMatrix {
        let kappa_norm: f64 = ev.kappa.iter().map(|k| k.norm_sqr()).sum();
        let mut out = scale(rho, c64(kappa_norm - 1.0, 0.0));
        for (k, e) in ev.kappa.iter().zip(&ev.deviation) {
            let er = e * rho;
            out += scale(&er.adjoint(), *k) + scale(&er, k.conj()) + &er * e.adjoint();
        }
        for (c, cm) in self.jump_terms.iter().zip(&ev.jumps) {
            let w = eps[c.param];
            if w != 0.0 {
                out += scale(&(cm * rho * cm.adjoint()), c64(w, 0.0));
            }
        }
        hermitian_part(&out)
    }

    pub fn apply_channel(&self, rho: &DensityMatrix, eps: &ParamVector) -> Result<DensityMatrix> {
        let dev = self.output_deviation(rho.matrix(), eps)?;
        let tr = dev.trace();
        if tr.norm() > TRACE_TOL {
            return Err(Error::TpcpViolation(format!("output trace deviates by {:e}", tr.norm())));
        }
        Ok(DensityMatrix::from_matrix_unchecked(rho.matrix() + dev))
    }

    /// Analytic `∂_μ Γ_ε[ρ]` for every μ.
    pub fn output_derivatives(&self, rho: &ComplexMatrix, eps: &ParamVector) -> Result<Vec<ComplexMatrix>> {
        self.check_rho(rho)?;
        let ev = self.evaluate(eps)?;
        Ok(self.derivatives_from_eval(rho, eps, &ev))
    }

    /// `δρ` together with all `∂_μρ`, sharing one Kraus evaluation.
    pub fn output_with_derivatives(
        &self,
        rho: &ComplexMatrix,
        eps: &ParamVector,
    ) -> Result<(ComplexMatrix, Vec<ComplexMatrix>)> {
        self.check_rho(rho)?;
        let ev = self.evaluate(eps)?;
        Ok((self.deviation_from_eval(rho, eps, &ev), self.derivatives_from_eval(rho, eps, &ev)))
    }

    fn derivatives_from_eval(&self, rho: &ComplexMatrix, eps: &ParamVector, ev: &KrausEval) -> Vec<ComplexMatrix> {
        let jump_partials: Vec<Vec<Option<ComplexMatrix>>> = (0..self.n_params)
            .map(|mu| {
                self.jump_terms
                    .iter()
                    .map(|c| c.higher.as_ref().map(|r| r.partial(eps, mu)))
                    .collect()
            })
            .collect();
        (0..self.n_params)
            .map(|mu| {
                let partials = self.deviation_partials(eps, ev, mu);
                let mut out = numkit::zeros(self.dim);
                for ((k, e), de) in ev.kappa.iter().zip(&ev.deviation).zip(&partials) {
                    let b_adj = e.adjoint() + scale(&identity(self.dim), k.conj());
                    let term = de * rho * b_adj;
                    out += &term + term.adjoint();
                }
                for (j, (c, cm)) in self.jump_terms.iter().zip(&ev.jumps).enumerate() {
                    if c.param == mu {
                        out += cm * rho * cm.adjoint();
                    }
                    if let Some(dc) = &jump_partials[mu][j] {
                        let w = eps[c.param];
                        if w != 0.0 {
                            let term = dc * rho * cm.adjoint();
                            out += scale(&(&term + term.adjoint()), c64(w, 0.0));
                        }
                    }
                }
                hermitian_part(&out)
            })
            .collect()
    }

    /// `‖Σ_α B_α†B_α + Σ_μ ε^μ Σ_a C_{μa}†C_{μa} − 1‖_F`
    pub fn tpcp_residual(&self, eps: &ParamVector) -> Result<f64> {
        let ev = self.evaluate(eps)?;
        let kappa_norm: f64 = ev.kappa.iter().map(|k| k.norm_sqr()).sum();
        let mut sum = scale(&identity(self.dim), c64(kappa_norm - 1.0, 0.0));
        for (k, e) in ev.kappa.iter().zip(&ev.deviation) {
            sum += scale(e, k.conj()) + scale(&e.adjoint(), *k) + e.adjoint() * e;
        }
        for (c, cm) in self.jump_terms.iter().zip(&ev.jumps) {
            sum += scale(&(cm.adjoint() * cm), c64(eps[c.param], 0.0));
        }
        Ok(sum.norm())
    }

    /// Max of `‖Γ₀[ρ] − ρ‖_F` over basis projectors and `2N` seeded random pure states.
    pub fn identity_limit_residual(&self) -> Result<f64> {
        let zero = ParamVector::zeros(self.n_params);
        let ev = self.evaluate(&zero)?;
        let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
        let mut probes: Vec<ComplexMatrix> = (0..self.dim).map(|k| numkit::projector(&numkit::basis_vector(self.dim, k))).collect();
        probes.extend((0..2 * self.dim).map(|_| numkit::projector(&random_pure_state(&mut rng, self.dim))));
        Ok(probes
            .iter()
            .map(|rho| self.deviation_from_eval(rho, &zero, &ev).norm())
            .fold(0.0, f64::max))
    }

    fn raw_hamiltonian(&self, mu: usize) -> ComplexMatrix {
        let mut h = numkit::zeros(self.dim);
        for b in &self.identity_terms {
            h += scale(&b.linear[mu], b.kappa.conj());
        }
        for c in self.jump_terms.iter().filter(|c| c.param == mu) {
            h -= scale(&(c.base.adjoint() * &c.base), c64(0.5, 0.0));
        }
        scale(&h, c64(0.0, -1.0))
    }

    /// `H_μ = (Σ_α κ_α* N_{μα} − ½ Σ_a M_{μa}†M_{μa}) / i`
    pub fn hamiltonian_part(&self, mu: usize) -> Result<ComplexMatrix> {
        if mu >= self.n_params {
            return Err(Error::InvalidParameter(format!("parameter index {mu} out of range")));
        }
        let h = self.raw_hamiltonian(mu);
        let residual = hermitian_residual(&h);
        if residual > 1e-8 {
            return Err(Error::InconsistentKrausData(format!(
                "first-order part of parameter {mu} is not Hamiltonian (residual {residual:e})"
            )));
        }
        Ok(hermitian_part(&h))
    }

    /// `Σ_a [MρM† − ½{M†M, ρ}] − i[H_μ, ρ]`
    pub fn derivative_at_zero(&self, mu: usize, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.check_rho(rho)?;
        if mu >= self.n_params {
            return Err(Error::InvalidParameter(format!("parameter index {mu} out of range")));
        }
        let mut out = numkit::zeros(self.dim);
        for c in self.jump_terms.iter().filter(|c| c.param == mu) {
            let m = &c.base;
            let mm = m.adjoint() * m;
            out += m * rho * m.adjoint() - scale(&numkit::anticommutator(&mm, rho), c64(0.5, 0.0));
        }
        out -= scale(&numkit::commutator(&self.hamiltonians[mu], rho), c64(0.0, 1.0));
        Ok(hermitian_part(&out))
    }

    /// `Γ_ε ⊗ id` on system plus an ancilla of the same dimension.
    pub fn ancilla_extend(&self) -> LowNoiseChannel {
        let n = self.dim;
        let one = identity(n);
        let ext = |m: &ComplexMatrix| tensor_product(m, &one);
        let identity_terms = self
            .identity_terms
            .iter()
            .map(|b| IdentityKraus {
                kappa: b.kappa,
                linear: b.linear.iter().map(ext).collect(),
                higher: b.higher.as_ref().map(|r| r.tensor_identity(n)),
            })
            .collect();
        let jump_terms = self
            .jump_terms
            .iter()
            .map(|c| JumpKraus {
                param: c.param,
                base: ext(&c.base),
                higher: c.higher.as_ref().map(|r| r.tensor_identity(n)),
            })
            .collect();
        let completion = self.completion.as_ref().map(|comp| SqrtCompletion {
            dissipators: comp.dissipators.iter().map(ext).collect(),
            generators: comp.generators.as_ref().map(|g| g.iter().map(ext).collect()),
        });
        let config = self.config.as_ref().map(|cfg| {
            let ext_cfg = |m: &MatrixConfig| -> MatrixConfig {
                matrix_to_config(&ext(&matrix_from_config(m, n).expect("stored config matches dimension")))
            };
            ChannelConfig {
                dim: n * n,
                params: cfg.params,
                builder: cfg.builder,
                jump: cfg
                    .jump
                    .iter()
                    .map(|j| JumpTermConfig {
                        param: j.param,
                        matrix: ext_cfg(&j.matrix),
                    })
                    .collect(),
                generators: cfg.generators.iter().map(ext_cfg).collect(),
                identity: cfg
                    .identity
                    .iter()
                    .map(|b| IdentityTermConfig {
                        kappa: b.kappa,
                        linear: b.linear.iter().map(ext_cfg).collect(),
                    })
                    .collect(),
            }
        });
        LowNoiseChannel {
            dim: n * n,
            n_params: self.n_params,
            identity_terms,
            jump_terms,
            completion,
            hamiltonians: self.hamiltonians.iter().map(ext).collect(),
            config,
        }
    }

    /// Finite-difference `∂_μ Γ_ε[ρ]`: second-order one-sided stencil when
    /// `ε^μ < h` (the stencil cannot cross zero), central difference otherwise.
    pub fn finite_difference_derivative(
        &self,
        rho: &ComplexMatrix,
        mu: usize,
        eps0: &ParamVector,
        h: f64,
    ) -> Result<ComplexMatrix> {
        self.check_eps(eps0)?;
        if mu >= self.n_params {
            return Err(Error::InvalidParameter(format!("parameter index {mu} out of range")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::StepTooLarge(format!("step {h} must be positive")));
        }
        let probe = |t: f64| -> Result<ComplexMatrix> {
            let mut v = eps0.as_slice().to_vec();
            v[mu] += t;
            let e = ParamVector::new(v)?;
            let dev = self.output_deviation(rho, &e).map_err(|err| match err {
                Error::TpcpViolation(msg) => Error::StepTooLarge(msg),
                other => other,
            })?;
            let tpcp = self.tpcp_residual(&e)?;
            if tpcp > TRACE_TOL {
                return Err(Error::StepTooLarge(format!("TPCP residual {tpcp:e} at probe point")));
            }
            Ok(dev)
        };
        let out = if eps0[mu] < h {
            let (f0, f1, f2) = (probe(0.0)?, probe(h)?, probe(2.0 * h)?);
            (f1 * c64(4.0, 0.0) - f0 * c64(3.0, 0.0) - f2) / c64(2.0 * h, 0.0)
        } else {
            (probe(h)? - probe(-h)?) / c64(2.0 * h, 0.0)
        };
        Ok(hermitian_part(&out))
    }
}

fn check_square(m: &ComplexMatrix, dim: usize) -> Result<()> {
    if m.nrows() != dim || m.ncols() != dim {
        return Err(Error::DimensionMismatch(format!(
            "operator is {}x{}, channel dimension {dim}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

fn weighted_sum(ops: &[ComplexMatrix], eps: &ParamVector, dim: usize) -> ComplexMatrix {
    let mut out = numkit::zeros(dim);
    for (op, w) in ops.iter().zip(eps.as_slice()) {
        if *w != 0.0 {
            out += scale(op, c64(*w, 0.0));
        }
    }
    out
}

#[cfg(test)]
mod tests;
