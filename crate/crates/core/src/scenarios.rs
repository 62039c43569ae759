//! Named scenarios with their closed-form references, the sweep
//! configuration, and a seeded random-channel generator for property checks.

use nalgebra::Matrix2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{matrix_from_config, matrix_to_config, ChannelConfig, MatrixConfig};
use crate::channel::{LowNoiseChannel, ParamVector};
use crate::error::{Error, Result};
use crate::numkit::{self, basis_vector, c64, pauli_x, pauli_z, tensor_vector, ComplexMatrix, RealMatrix, StateVector};

pub const DEFAULT_SCALE_MIN: f64 = 1e-5;
pub const DEFAULT_SCALE_MAX: f64 = 1e-2;
pub const DEFAULT_SCALE_POINTS: usize = 8;
const DIRECTION_SUM_TOL: f64 = 1e-9;
/// Relative size below which a closed-form denominator counts as vanishing.
const DENOMINATOR_RTOL: f64 = 1e-9;

fn default_scales() -> Vec<f64> {
    numkit::geometric_grid(DEFAULT_SCALE_MIN, DEFAULT_SCALE_MAX, DEFAULT_SCALE_POINTS)
}

/// Sweep points `ε = s·n̂` for `s` in `scales`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Positive components summing to one.
    pub direction: Vec<f64>,
    #[serde(default = "default_scales")]
    pub scales: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl SweepConfig {
    pub fn uniform(d: usize) -> Self {
        SweepConfig {
            direction: vec![1.0 / d as f64; d],
            scales: default_scales(),
            seed: 0,
        }
    }

    /// Direction rescaled to unit sum.
    pub fn with_direction(mut self, raw: &[f64]) -> Result<Self> {
        let total: f64 = raw.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::ConfigInvalid(format!("direction {raw:?} has no positive sum")));
        }
        self.direction = raw.iter().map(|x| x / total).collect();
        Ok(self)
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.direction.len() != d {
            return Err(Error::ConfigInvalid(format!(
                "direction has {} components, channel has {d} parameters",
                self.direction.len()
            )));
        }
        if self.direction.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::ConfigInvalid("direction components must be positive".into()));
        }
        let total: f64 = self.direction.iter().sum();
        if (total - 1.0).abs() > DIRECTION_SUM_TOL {
            return Err(Error::ConfigInvalid(format!("direction sums to {total}, expected 1")));
        }
        if self.scales.is_empty() {
            return Err(Error::ConfigInvalid("empty scales list".into()));
        }
        if self.scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::ConfigInvalid("scales must be positive".into()));
        }
        if self.scales.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::ConfigInvalid("scales must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn point(&self, scale: f64) -> ParamVector {
        ParamVector::along(&self.direction, scale).expect("validated direction")
    }
}

/// Two-parameter, three-level dissipative channel with one jump per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ThreeLevelForms {
    /// `δM_{μν} = ⟨φ|(M_μ − ⟨M_μ⟩)†(M_ν − ⟨M_ν⟩)|φ⟩`
    pub delta_m: Matrix2<Complex64>,
}

impl ThreeLevelForms {
    pub fn new(jumps: [&ComplexMatrix; 2], phi: &StateVector) -> Self {
        let w: Vec<StateVector> = jumps
            .iter()
            .map(|m| {
                let mphi = *m * phi;
                let mean = phi.dotc(&mphi);
                mphi - phi * mean
            })
            .collect();
        ThreeLevelForms {
            delta_m: Matrix2::from_fn(|a, b| w[a].dotc(&w[b])),
        }
    }

    fn diag(&self) -> (f64, f64) {
        (self.delta_m[(0, 0)].re, self.delta_m[(1, 1)].re)
    }

    /// `δM₁₂δM₂₁ = |δM₁₂|²`
    pub fn cross(&self) -> f64 {
        (self.delta_m[(0, 1)] * self.delta_m[(1, 0)]).re
    }

    pub fn det(&self) -> f64 {
        let (m11, m22) = self.diag();
        m11 * m22 - self.cross()
    }

    /// `δp_±`, larger first.
    pub fn shifts(&self, eps: &ParamVector) -> (f64, f64) {
        let (m11, m22) = self.diag();
        let (e1, e2) = (eps[0], eps[1]);
        let mean = e1 * m11 + e2 * m22;
        let root = ((e1 * m11 - e2 * m22).powi(2) + 4.0 * e1 * e2 * self.cross()).sqrt();
        (0.5 * (mean + root), 0.5 * (mean - root))
    }

    /// `ε¹δM₁₁ − ε²δM₂₂`, the vanishing denominator along special directions.
    pub fn split(&self, eps: &[f64]) -> f64 {
        let (m11, m22) = self.diag();
        eps[0] * m11 - eps[1] * m22
    }

    pub fn inverse_fisher(&self, eps: &ParamVector) -> RealMatrix {
        let (m11, m22) = self.diag();
        let (e1, e2) = (eps[0], eps[1]);
        let det = self.det();
        let cross = self.cross();
        let denom = det * self.split(eps.as_slice()).powi(2);
        let j11 = (e1.powi(3) * m11 * det + e1 * e1 * e2 * m22 * (3.0 * cross - 2.0 * m11 * m22) + e1 * e2 * e2 * m22.powi(3)) / denom;
        let j22 = (e2.powi(3) * m22 * det + e2 * e2 * e1 * m11 * (3.0 * cross - 2.0 * m11 * m22) + e2 * e1 * e1 * m11.powi(3)) / denom;
        let j12 = -e1 * e2 * cross / det * (e1 * m11 + e2 * m22) / self.split(eps.as_slice()).powi(2);
        RealMatrix::from_row_slice(2, 2, &[j11, j12, j12, j22])
    }
}

/// Qubit Pauli channel `(1−ε¹−ε²)ρ + ε¹σxρσx + ε²σzρσz` on a pure input.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliForms {
    pub bloch_in: [f64; 3],
}

impl PauliForms {
    fn contraction(eps: &[f64]) -> [f64; 3] {
        [1.0 - 2.0 * eps[1], 1.0 - 2.0 * eps[0] - 2.0 * eps[1], 1.0 - 2.0 * eps[0]]
    }

    const CONTRACTION_GRADIENT: [[f64; 3]; 2] = [[0.0, -2.0, -2.0], [-2.0, -2.0, 0.0]];

    pub fn bloch(&self, eps: &[f64]) -> [f64; 3] {
        let a = Self::contraction(eps);
        [0, 1, 2].map(|i| a[i] * self.bloch_in[i])
    }

    /// `∂_μ y⃗`
    pub fn bloch_partials(&self) -> [[f64; 3]; 2] {
        Self::CONTRACTION_GRADIENT.map(|g| [0, 1, 2].map(|i| g[i] * self.bloch_in[i]))
    }

    /// `1 − |y⃗|²` without cancellation, taking `|r⃗| = 1` exactly.
    pub fn purity_deficit(&self, eps: &[f64]) -> f64 {
        let a = Self::contraction(eps);
        let one_minus = [2.0 * eps[1], 2.0 * eps[0] + 2.0 * eps[1], 2.0 * eps[0]];
        (0..3).map(|i| self.bloch_in[i].powi(2) * one_minus[i] * (1.0 + a[i])).sum()
    }

    /// `∂_μ|y⃗|²`
    pub fn norm_gradient(&self, eps: &[f64]) -> [f64; 2] {
        let y = self.bloch(eps);
        self.bloch_partials().map(|d| 2.0 * dot3(&y, &d))
    }

    pub fn fisher(&self, eps: &[f64]) -> RealMatrix {
        let d = self.bloch_partials();
        let g = self.norm_gradient(eps);
        let def = self.purity_deficit(eps);
        RealMatrix::from_fn(2, 2, |a, b| dot3(&d[a], &d[b]) + 0.25 * g[a] * g[b] / def)
    }

    /// Inverse written with `δp = 4(1 − |y⃗|²)`.
    pub fn inverse_fisher(&self, eps: &[f64]) -> RealMatrix {
        let d = self.bloch_partials();
        let g = self.norm_gradient(eps);
        let dp = 4.0 * self.purity_deficit(eps);
        let cross = sub3(&scale3(&d[0], g[1]), &scale3(&d[1], g[0]));
        let gram = dot3(&d[0], &d[0]) * dot3(&d[1], &d[1]) - dot3(&d[0], &d[1]).powi(2);
        let denom = gram + dot3(&cross, &cross) / dp;
        let j11 = (dot3(&d[1], &d[1]) + g[1] * g[1] / dp) / denom;
        let j22 = (dot3(&d[0], &d[0]) + g[0] * g[0] / dp) / denom;
        let j12 = -(dot3(&d[0], &d[1]) + g[0] * g[1] / dp) / denom;
        RealMatrix::from_row_slice(2, 2, &[j11, j12, j12, j22])
    }

    /// `Φ = |∂₂|y⃗|² ∂₁y⃗ − ∂₁|y⃗|² ∂₂y⃗|²` at zero noise.
    pub fn phi_at_zero(&self) -> f64 {
        let d = self.bloch_partials();
        let g = self.norm_gradient(&[0.0, 0.0]);
        let v = sub3(&scale3(&d[0], g[1]), &scale3(&d[1], g[0]));
        dot3(&v, &v)
    }

    /// Rank-one `J⁻¹(0) = Φ⁻¹ (∂₂|y⃗|², −∂₁|y⃗|²)ᵀ(∂₂|y⃗|², −∂₁|y⃗|²)`.
    pub fn inverse_at_zero(&self) -> RealMatrix {
        let g = self.norm_gradient(&[0.0, 0.0]);
        let v = [g[1], -g[0]];
        RealMatrix::from_fn(2, 2, |a, b| v[a] * v[b] / self.phi_at_zero())
    }

    /// Unit vector along the order-one eigendirection of `J⁻¹`.
    pub fn bad_direction(&self) -> [f64; 2] {
        let g = self.norm_gradient(&[0.0, 0.0]);
        let n = g[0].hypot(g[1]);
        [g[1] / n, -g[0] / n]
    }

    /// `L_μ = l₀ + l⃗·σ⃗`
    pub fn sld(&self, eps: &[f64], mu: usize) -> ComplexMatrix {
        let y = self.bloch(eps);
        let g = self.norm_gradient(eps)[mu];
        let def = self.purity_deficit(eps);
        let l0 = -0.5 * g / def;
        let l = [0, 1, 2].map(|i| self.bloch_partials()[mu][i] + 0.5 * g / def * y[i]);
        numkit::identity(2).map(|z| z * l0)
            + pauli_x().map(|z| z * l[0])
            + numkit::pauli_y().map(|z| z * l[1])
            + pauli_z().map(|z| z * l[2])
    }
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn scale3(a: &[f64; 3], s: f64) -> [f64; 3] {
    a.map(|x| x * s)
}

fn sub3(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Ancilla-extended Pauli channel on the maximally entangled input.
#[derive(Debug, Clone, PartialEq)]
pub struct AncillaBellForms;

impl AncillaBellForms {
    fn ket(a: usize, b: usize) -> StateVector {
        tensor_vector(&basis_vector(2, a), &basis_vector(2, b))
    }

    /// `(|00⟩ − |11⟩)/√2, |01⟩, |10⟩`
    pub fn printed_frame(&self) -> ComplexMatrix {
        let r2 = 2f64.sqrt();
        ComplexMatrix::from_columns(&[(Self::ket(0, 0) - Self::ket(1, 1)).unscale(r2), Self::ket(0, 1), Self::ket(1, 0)])
    }

    pub fn printed_delta(&self, eps: &[f64]) -> ComplexMatrix {
        let h = eps[0] / 2.0;
        ComplexMatrix::from_row_slice(3, 3, &[eps[1], 0.0, 0.0, 0.0, h, h, 0.0, h, h].map(|x| c64(x, 0.0)))
    }

    /// `δp₁, δp₂, δp₃`
    pub fn shifts(&self, eps: &[f64]) -> [f64; 3] {
        [eps[1], eps[0], 0.0]
    }

    /// Leading part `diag(ε¹, ε²)` of `J⁻¹`.
    pub fn inverse_leading(&self, eps: &[f64]) -> RealMatrix {
        RealMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(eps))
    }

    /// `diag(1/ε¹, 1/ε²)`
    pub fn fisher_leading(&self, eps: &[f64]) -> RealMatrix {
        RealMatrix::from_diagonal(&nalgebra::DVector::from_iterator(2, eps.iter().map(|e| 1.0 / e)))
    }

    /// `|n(0)⟩⟨n(0)|`, `n = 0..3`.
    pub fn projectors(&self) -> [ComplexMatrix; 4] {
        let r2 = 2f64.sqrt();
        let k = Self::ket;
        [
            (k(0, 0) + k(1, 1)).unscale(r2),
            (k(0, 0) - k(1, 1)).unscale(r2),
            (k(0, 1) + k(1, 0)).unscale(r2),
            (k(0, 1) - k(1, 0)).unscale(r2),
        ]
        .map(|v| numkit::projector(&v))
    }

    /// `det[Σ_n ∂_μ√p_n ∂_ν√p_n]`
    pub fn nondegeneracy_det(&self, eps: &[f64]) -> f64 {
        let p0 = 1.0 - eps[0] - eps[1];
        (1.0 / (p0 * eps[0]) + 1.0 / (p0 * eps[1]) + 1.0 / (eps[0] * eps[1])) / 16.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClosedForms {
    ThreeLevel(ThreeLevelForms),
    Pauli(PauliForms),
    AncillaBell(AncillaBellForms),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    ThreeLevel,
    Pauli,
    AncillaBell,
    Custom,
}

impl ScenarioKind {
    pub const NAMED: [ScenarioKind; 3] = [ScenarioKind::AncillaBell, ScenarioKind::Pauli, ScenarioKind::ThreeLevel];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::ThreeLevel => "three-level",
            ScenarioKind::Pauli => "pauli",
            ScenarioKind::AncillaBell => "ancilla-bell",
            ScenarioKind::Custom => "custom",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            ScenarioKind::ThreeLevel => "N=3, D=2 dissipative channel, one jump per parameter",
            ScenarioKind::Pauli => "qubit σx/σz noise without ancilla (bound not attainable)",
            ScenarioKind::AncillaBell => "qubit σx/σz noise with a maximally entangled ancilla",
            ScenarioKind::Custom => "channel and input read from a config file",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        [ScenarioKind::ThreeLevel, ScenarioKind::Pauli, ScenarioKind::AncillaBell, ScenarioKind::Custom]
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::ConfigInvalid(format!("unknown scenario '{name}'")))
    }
}

/// Quantities tracked across a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quantity {
    /// `‖E[x] − ε‖₂` of the constructed estimator.
    Bias,
    /// `‖V − J⁻¹‖_F`
    InverseGap,
    /// `‖V − (J^div)⁻¹‖_F`
    DivergentGap,
    /// Largest eigenvalue of `J⁻¹`.
    InverseEigMax,
    /// Smallest eigenvalue of `J⁻¹`.
    InverseEigMin,
    /// `‖J⁻¹ − diag(ε)‖_F`
    InverseDeviation,
    /// `u·J⁻¹·u` along the order-one eigendirection.
    BadDirectionBound,
}

impl Quantity {
    pub fn name(self) -> &'static str {
        match self {
            Quantity::Bias => "bias",
            Quantity::InverseGap => "inverse-gap",
            Quantity::DivergentGap => "divergent-gap",
            Quantity::InverseEigMax => "inverse-eig-max",
            Quantity::InverseEigMin => "inverse-eig-min",
            Quantity::InverseDeviation => "inverse-deviation",
            Quantity::BadDirectionBound => "bad-direction-bound",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum OrderTarget {
    Within { order: f64, tol: f64 },
    AtMost { order: f64 },
}

impl OrderTarget {
    pub fn accepts(&self, slope: f64) -> bool {
        match *self {
            OrderTarget::Within { order, tol } => (slope - order).abs() <= tol,
            OrderTarget::AtMost { order } => slope <= order,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderExpectation {
    pub quantity: Quantity,
    pub target: OrderTarget,
    /// The scenario is a negative control for this row.
    #[serde(default)]
    pub expect_failure: bool,
}

impl OrderExpectation {
    fn within(quantity: Quantity, order: f64, tol: f64) -> Self {
        OrderExpectation {
            quantity,
            target: OrderTarget::Within { order, tol },
            expect_failure: false,
        }
    }
}

/// Text form of a scenario; every field but `scenario` falls back to the
/// scenario's defaults.
///
/// ```toml
/// scenario = "three-level"
/// input = [[2.0, 0.0], [1.0, 0.0], [1.0, 0.0]]
///
/// [sweep]
/// direction = [0.5, 0.5]
/// seed = 7
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    /// Input amplitudes as `[re, im]`; normalized on load.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<Vec<[f64; 2]>>,
    /// Three-level only: the two jump operators.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jumps: Option<Vec<MatrixConfig>>,
    /// Pauli only: unit Bloch vector of the input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bloch: Option<[f64; 3]>,
    /// Custom only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<ChannelConfig>,
}

impl ScenarioConfig {
    pub fn named(kind: ScenarioKind) -> Self {
        ScenarioConfig {
            scenario: kind,
            sweep: None,
            input: None,
            jumps: None,
            bloch: None,
            channel: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::ConfigInvalid(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::ConfigInvalid(e.to_string()))
    }

    /// SHA-256 of the TOML form, hex encoded.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub kind: ScenarioKind,
    pub channel: LowNoiseChannel,
    pub input: StateVector,
    pub sweep: SweepConfig,
    pub closed_forms: Option<ClosedForms>,
    pub expected_orders: Vec<OrderExpectation>,
    /// Whether the order-ε bound is expected to be reached by the estimator.
    pub attainable: bool,
    /// Config with every default filled in; its hash identifies the run.
    pub config: ScenarioConfig,
}

impl Scenario {
    pub fn config_hash(&self) -> Result<String> {
        self.config.hash()
    }
}

fn vector_from_config(amps: &[[f64; 2]], dim: usize) -> Result<StateVector> {
    if amps.len() != dim {
        return Err(Error::ConfigInvalid(format!("input has {} amplitudes, channel dimension is {dim}", amps.len())));
    }
    let v = StateVector::from_iterator(dim, amps.iter().map(|[re, im]| c64(*re, *im)));
    let norm = v.norm();
    if !(norm.is_finite() && norm > 0.0) {
        return Err(Error::ConfigInvalid("input vector is zero".into()));
    }
    Ok(v.unscale(norm))
}

fn vector_to_config(v: &StateVector) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

fn attainment_orders() -> Vec<OrderExpectation> {
    vec![
        OrderExpectation::within(Quantity::Bias, 2.0, 0.2),
        OrderExpectation::within(Quantity::InverseGap, 2.0, 0.2),
    ]
}

pub fn default_three_level_jumps() -> [ComplexMatrix; 2] {
    let mut m1 = ComplexMatrix::zeros(3, 3);
    m1[(1, 0)] = c64(1.0, 0.0);
    let mut m2 = ComplexMatrix::zeros(3, 3);
    m2[(1, 0)] = c64(0.5f64.sqrt(), 0.0);
    m2[(2, 0)] = c64(0.5f64.sqrt(), 0.0);
    [m1, m2]
}

/// `(2|0⟩ + |1⟩ + |2⟩)/√6`
pub fn default_three_level_input() -> StateVector {
    StateVector::from_vec(vec![c64(2.0, 0.0), c64(1.0, 0.0), c64(1.0, 0.0)]).unscale(6f64.sqrt())
}

fn three_level(cfg: &ScenarioConfig) -> Result<Scenario> {
    let [m1, m2] = match &cfg.jumps {
        None => default_three_level_jumps(),
        Some(j) if j.len() == 2 => [matrix_from_config(&j[0], 3)?, matrix_from_config(&j[1], 3)?],
        Some(j) => return Err(Error::ConfigInvalid(format!("three-level needs 2 jump matrices, got {}", j.len()))),
    };
    let input = match &cfg.input {
        None => default_three_level_input(),
        Some(a) => vector_from_config(a, 3)?,
    };
    let sweep = cfg.sweep.clone().unwrap_or_else(|| SweepConfig::uniform(2));
    sweep.validate(2)?;
    let forms = ThreeLevelForms::new([&m1, &m2], &input);
    let (m11, m22) = forms.diag();
    let scale = m11.abs().max(m22.abs());
    if forms.det().abs() <= DENOMINATOR_RTOL * scale * scale {
        return Err(Error::ConfigInvalid(format!(
            "δM is singular (det {:e}) for this input and jump pair",
            forms.det()
        )));
    }
    if forms.split(&sweep.direction).abs() <= DENOMINATOR_RTOL * scale {
        return Err(Error::ConfigInvalid(format!(
            "direction {:?} makes n¹δM₁₁ − n²δM₂₂ vanish; choose another direction",
            sweep.direction
        )));
    }
    let channel = LowNoiseChannel::sqrt_completion(3, vec![(0, m1.clone()), (1, m2.clone())], None)
        .map_err(|e| Error::ConfigInvalid(e.to_string()))?;
    let config = ScenarioConfig {
        sweep: Some(sweep.clone()),
        input: Some(vector_to_config(&input)),
        jumps: Some(vec![matrix_to_config(&m1), matrix_to_config(&m2)]),
        ..ScenarioConfig::named(ScenarioKind::ThreeLevel)
    };
    Ok(Scenario {
        name: ScenarioKind::ThreeLevel.name().into(),
        kind: ScenarioKind::ThreeLevel,
        channel,
        input,
        sweep,
        closed_forms: Some(ClosedForms::ThreeLevel(forms)),
        expected_orders: attainment_orders(),
        attainable: true,
        config,
    })
}

pub fn pauli_channel() -> LowNoiseChannel {
    LowNoiseChannel::sqrt_completion(2, vec![(0, pauli_x()), (1, pauli_z())], None).expect("Pauli jumps are valid")
}

/// Pure qubit state with Bloch vector `r`.
pub fn bloch_state(r: [f64; 3]) -> StateVector {
    let theta = r[2].clamp(-1.0, 1.0).acos();
    let azimuth = r[1].atan2(r[0]);
    StateVector::from_vec(vec![
        c64((theta / 2.0).cos(), 0.0),
        Complex64::from_polar((theta / 2.0).sin(), azimuth),
    ])
}

fn pauli(cfg: &ScenarioConfig) -> Result<Scenario> {
    let r = cfg.bloch.unwrap_or([1.0 / 3f64.sqrt(); 3]);
    let norm = dot3(&r, &r).sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::ConfigInvalid(format!("Bloch vector must be a unit vector, |r| = {norm}")));
    }
    if cfg.input.is_some() {
        return Err(Error::ConfigInvalid("pauli input is set through `bloch`".into()));
    }
    let sweep = cfg.sweep.clone().unwrap_or_else(|| SweepConfig::uniform(2));
    sweep.validate(2)?;
    let forms = PauliForms { bloch_in: r };
    if forms.phi_at_zero() <= DENOMINATOR_RTOL {
        return Err(Error::ConfigInvalid(format!("Bloch vector {r:?} gives Φ = 0")));
    }
    let config = ScenarioConfig {
        sweep: Some(sweep.clone()),
        bloch: Some(r),
        ..ScenarioConfig::named(ScenarioKind::Pauli)
    };
    Ok(Scenario {
        name: ScenarioKind::Pauli.name().into(),
        kind: ScenarioKind::Pauli,
        channel: pauli_channel(),
        input: bloch_state(r),
        sweep,
        closed_forms: Some(ClosedForms::Pauli(forms)),
        expected_orders: vec![
            OrderExpectation::within(Quantity::InverseEigMax, 0.0, 0.15),
            OrderExpectation::within(Quantity::InverseEigMin, 1.0, 0.15),
            OrderExpectation {
                quantity: Quantity::BadDirectionBound,
                target: OrderTarget::AtMost { order: 0.3 },
                expect_failure: false,
            },
        ],
        attainable: false,
        config,
    })
}

fn ancilla_bell(cfg: &ScenarioConfig) -> Result<Scenario> {
    if cfg.input.is_some() || cfg.bloch.is_some() || cfg.jumps.is_some() || cfg.channel.is_some() {
        return Err(Error::ConfigInvalid("ancilla-bell only accepts a sweep section".into()));
    }
    let sweep = cfg.sweep.clone().unwrap_or_else(|| SweepConfig::uniform(2));
    sweep.validate(2)?;
    let k = AncillaBellForms::ket;
    let mut expected = attainment_orders();
    expected.push(OrderExpectation::within(Quantity::InverseDeviation, 2.0, 0.2));
    Ok(Scenario {
        name: ScenarioKind::AncillaBell.name().into(),
        kind: ScenarioKind::AncillaBell,
        channel: pauli_channel().ancilla_extend(),
        input: (k(0, 0) + k(1, 1)).unscale(2f64.sqrt()),
        sweep: sweep.clone(),
        closed_forms: Some(ClosedForms::AncillaBell(AncillaBellForms)),
        expected_orders: expected,
        attainable: true,
        config: ScenarioConfig {
            sweep: Some(sweep),
            ..ScenarioConfig::named(ScenarioKind::AncillaBell)
        },
    })
}

fn custom(cfg: &ScenarioConfig) -> Result<Scenario> {
    let ch_cfg = cfg
        .channel
        .as_ref()
        .ok_or_else(|| Error::ConfigInvalid("custom scenario needs a [channel] table".into()))?;
    let channel = LowNoiseChannel::from_config(ch_cfg)?;
    let amps = cfg
        .input
        .as_ref()
        .ok_or_else(|| Error::ConfigInvalid("custom scenario needs an input vector".into()))?;
    let input = vector_from_config(amps, channel.dim())?;
    let sweep = cfg.sweep.clone().unwrap_or_else(|| SweepConfig::uniform(channel.n_params()));
    sweep.validate(channel.n_params())?;
    Ok(Scenario {
        name: ScenarioKind::Custom.name().into(),
        kind: ScenarioKind::Custom,
        channel,
        input: input.clone(),
        sweep: sweep.clone(),
        closed_forms: None,
        expected_orders: attainment_orders(),
        attainable: true,
        config: ScenarioConfig {
            sweep: Some(sweep),
            input: Some(vector_to_config(&input)),
            ..cfg.clone()
        },
    })
}

pub fn build_scenario(cfg: &ScenarioConfig) -> Result<Scenario> {
    match cfg.scenario {
        ScenarioKind::ThreeLevel => three_level(cfg),
        ScenarioKind::Pauli => pauli(cfg),
        ScenarioKind::AncillaBell => ancilla_bell(cfg),
        ScenarioKind::Custom => custom(cfg),
    }
}

pub fn scenario_threelevel() -> Scenario {
    build_scenario(&ScenarioConfig::named(ScenarioKind::ThreeLevel)).expect("default three-level scenario")
}

pub fn scenario_pauli2() -> Scenario {
    build_scenario(&ScenarioConfig::named(ScenarioKind::Pauli)).expect("default Pauli scenario")
}

pub fn scenario_ancilla_bell() -> Scenario {
    build_scenario(&ScenarioConfig::named(ScenarioKind::AncillaBell)).expect("default ancilla scenario")
}

pub const MAX_RANDOM_DIM: usize = 8;

fn gaussian_matrix(rng: &mut ChaCha8Rng, n: usize) -> ComplexMatrix {
    let s = 0.5f64.sqrt();
    ComplexMatrix::from_fn(n, n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c64(re * s, im * s)
    })
}

/// Channel built by sqrt-completion from Gaussian jump operators of unit
/// operator norm, optionally with unit-norm Hermitian generators.
pub fn random_channel(n: usize, d: usize, k_per_param: &[usize], seed: u64, with_hamiltonian: bool) -> Result<LowNoiseChannel> {
    if !(2..=MAX_RANDOM_DIM).contains(&n) {
        return Err(Error::InvalidParameter(format!("dimension {n} outside 2..={MAX_RANDOM_DIM}")));
    }
    if d == 0 || d > n * n - 1 {
        return Err(Error::InvalidParameter(format!("{d} parameters for dimension {n}")));
    }
    if k_per_param.len() != d || k_per_param.contains(&0) {
        return Err(Error::InvalidParameter("every parameter needs at least one jump".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jumps = Vec::new();
    for (mu, &k) in k_per_param.iter().enumerate() {
        for _ in 0..k {
            let m = gaussian_matrix(&mut rng, n);
            let norm = m.singular_values().max();
            jumps.push((mu, m.unscale(norm)));
        }
    }
    let generators = with_hamiltonian.then(|| {
        (0..d)
            .map(|_| {
                let g = numkit::hermitian_part(&gaussian_matrix(&mut rng, n));
                let norm = numkit::operator_norm_hermitian(&g).expect("finite Hermitian matrix");
                g.unscale(norm)
            })
            .collect()
    });
    LowNoiseChannel::sqrt_completion_with_params(n, d, jumps, generators)
}

/// A random channel together with the input it is probed with.
#[derive(Debug, Clone)]
pub struct RandomFixture {
    pub seed: u64,
    pub dim: usize,
    pub k_per_param: Vec<usize>,
    pub with_hamiltonian: bool,
    pub channel: LowNoiseChannel,
    pub input: StateVector,
}

impl RandomFixture {
    pub fn jump_count(&self) -> usize {
        self.k_per_param.iter().sum()
    }
}

/// Fixture shape drawn from `seed`: `N ∈ {2, 3, 4}`, `1 ≤ D ≤ N − 1`,
/// one or two jumps per parameter, Hamiltonian part on odd seeds.
pub fn random_fixture(seed: u64) -> Result<RandomFixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f1c5_u64);
    let dim = rng.random_range(2..=4usize);
    let d = rng.random_range(1..dim);
    let k_per_param: Vec<usize> = (0..d).map(|_| rng.random_range(1..=2usize)).collect();
    let with_hamiltonian = seed % 2 == 1;
    let channel = random_channel(dim, d, &k_per_param, seed, with_hamiltonian)?;
    let input = numkit::random_pure_state(&mut rng, dim);
    Ok(RandomFixture {
        seed,
        dim,
        k_per_param,
        with_hamiltonian,
        channel,
        input,
    })
}
