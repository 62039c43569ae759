//! Text configuration for channels.
//!
//! Matrices are written row by row with each entry as an `[re, im]` pair:
//!
//! ```toml
//! dim = 2
//! params = 1
//! builder = "sqrt-completion"
//!
//! [[jump]]
//! param = 0
//! matrix = [[[0.0, 0.0], [1.0, 0.0]], [[0.0, 0.0], [0.0, 0.0]]]
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{c64, ComplexMatrix};

pub type MatrixConfig = Vec<Vec<[f64; 2]>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Builder {
    /// Identity-family Kraus operators given explicitly, linear in ε.
    Explicit,
    /// Single identity-family operator `exp(−iΣεG)·sqrt(1 − ΣεΣM†M)`.
    SqrtCompletion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpTermConfig {
    /// Zero-based parameter index.
    pub param: usize,
    pub matrix: MatrixConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentityTermConfig {
    pub kappa: [f64; 2],
    /// One matrix per parameter: `B = κ·1 − Σ ε^μ linear[μ]`.
    pub linear: Vec<MatrixConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub dim: usize,
    pub params: usize,
    pub builder: Builder,
    #[serde(default)]
    pub jump: Vec<JumpTermConfig>,
    /// Sqrt-completion only: one Hermitian generator per parameter.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub generators: Vec<MatrixConfig>,
    /// Explicit only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub identity: Vec<IdentityTermConfig>,
}

impl ChannelConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::ConfigInvalid(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::ConfigInvalid(e.to_string()))
    }
}

pub fn matrix_to_config(m: &ComplexMatrix) -> MatrixConfig {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

pub fn matrix_from_config(rows: &MatrixConfig, dim: usize) -> Result<ComplexMatrix> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(Error::ConfigInvalid(format!("expected a {dim}x{dim} matrix")));
    }
    if rows.iter().flatten().flatten().any(|x| !x.is_finite()) {
        return Err(Error::ConfigInvalid("matrix entry is not finite".into()));
    }
    Ok(ComplexMatrix::from_fn(dim, dim, |i, j| c64(rows[i][j][0], rows[i][j][1])))
}
