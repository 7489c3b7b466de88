//! Analytic target distributions.
//!
//! Every density is unnormalized: constants are dropped because the samplers
//! only ever use differences of the Hamiltonian.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::{Error, Result};

/// Default scale of the funnel's neck variable.
pub const DEFAULT_FUNNEL_SCALE: f64 = 3.0;

/// JSON description of a target: `{"kind": .., "dim": .., "params": {..}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetDescriptor {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Map::is_empty")]
    pub params: Map<String, Value>,
}

impl TargetDescriptor {
    pub fn new(kind: impl Into<String>, dim: Option<usize>) -> Self {
        Self {
            kind: kind.into(),
            dim,
            params: Map::new(),
        }
    }

    pub fn with_param(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }
}

#[derive(Debug, Clone)]
pub enum TargetKind {
    /// `log π(q) = -½‖q‖²`.
    StdNormal,
    /// Zero-mean Gaussian with precision `Λ`: `log π(q) = -½ qᵀΛq`.
    MvnPrecision {
        precision: DMatrix<f64>,
        /// Lower Cholesky factor of the precision.
        cholesky: DMatrix<f64>,
    },
    /// Hierarchical funnel: `q₀ ~ N(0, s²)`, `q_i | q₀ ~ N(0, e^{q₀})`.
    Funnel { scale: f64 },
    /// One-dimensional `log π(q) = -|q|^β`.
    BetaFamily { beta: f64 },
}

/// A validated target density over `R^dim`. Immutable once built.
#[derive(Debug, Clone)]
pub struct Target {
    dim: usize,
    kind: TargetKind,
}

impl Target {
    pub fn std_normal(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self {
            dim,
            kind: TargetKind::StdNormal,
        })
    }

    pub fn mvn_precision(precision: DMatrix<f64>) -> Result<Self> {
        let dim = precision.nrows();
        check_dim(dim)?;
        if precision.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: precision.ncols(),
            });
        }
        if precision.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        let scale = precision.amax().max(1.0);
        if (&precision - precision.transpose()).amax() > 1e-12 * scale {
            return Err(Error::NotPositiveDefinite);
        }
        let cholesky = precision
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite)?
            .unpack();
        Ok(Self {
            dim,
            kind: TargetKind::MvnPrecision {
                precision,
                cholesky,
            },
        })
    }

    pub fn funnel(dim: usize, scale: f64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidParameter(format!(
                "funnel needs dim >= 2, got {dim}"
            )));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "funnel scale must be positive, got {scale}"
            )));
        }
        Ok(Self {
            dim,
            kind: TargetKind::Funnel { scale },
        })
    }

    pub fn beta_family(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "beta must be positive, got {beta}"
            )));
        }
        Ok(Self {
            dim: 1,
            kind: TargetKind::BetaFamily { beta },
        })
    }

    /// Builds a target from its JSON descriptor.
    pub fn from_descriptor(desc: &TargetDescriptor) -> Result<Self> {
        let target = match desc.kind.as_str() {
            "std_normal" => {
                let dim = desc
                    .dim
                    .ok_or_else(|| Error::InvalidParameter("std_normal requires `dim`".into()))?;
                Self::std_normal(dim)?
            }
            "mvn_precision" => {
                let rows = desc
                    .params
                    .get("precision")
                    .ok_or_else(|| {
                        Error::InvalidParameter("mvn_precision requires `params.precision`".into())
                    })
                    .and_then(parse_matrix)?;
                Self::mvn_precision(rows)?
            }
            "funnel" => {
                let dim = desc
                    .dim
                    .ok_or_else(|| Error::InvalidParameter("funnel requires `dim`".into()))?;
                let scale = match desc.params.get("scale") {
                    Some(v) => number(v, "scale")?,
                    None => DEFAULT_FUNNEL_SCALE,
                };
                Self::funnel(dim, scale)?
            }
            "beta_family" => {
                let beta = desc
                    .params
                    .get("beta")
                    .ok_or_else(|| {
                        Error::InvalidParameter("beta_family requires `params.beta`".into())
                    })
                    .and_then(|v| number(v, "beta"))?;
                Self::beta_family(beta)?
            }
            other => return Err(Error::UnknownTarget(other.to_string())),
        };
        if let Some(dim) = desc.dim {
            if dim != target.dim {
                return Err(Error::DimensionMismatch {
                    expected: target.dim,
                    found: dim,
                });
            }
        }
        Ok(target)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &TargetKind {
        &self.kind
    }

    /// Covariance of the target when it is Gaussian.
    pub fn covariance(&self) -> Option<DMatrix<f64>> {
        match &self.kind {
            TargetKind::StdNormal => Some(DMatrix::identity(self.dim, self.dim)),
            TargetKind::MvnPrecision { cholesky, .. } => {
                let chol = nalgebra::Cholesky::new(cholesky * cholesky.transpose())?;
                Some(chol.inverse())
            }
            _ => None,
        }
    }

    pub fn log_density(&self, q: &[f64]) -> Result<f64> {
        self.check_point(q)?;
        Ok(match &self.kind {
            TargetKind::StdNormal => -0.5 * q.iter().map(|x| x * x).sum::<f64>(),
            TargetKind::MvnPrecision { precision, .. } => {
                let v = DVector::from_column_slice(q);
                -0.5 * v.dot(&(precision * &v))
            }
            TargetKind::Funnel { scale } => {
                let (neck, rest) = (q[0], &q[1..]);
                funnel_neck_terms(neck, *scale, rest.len()) - 0.5 * funnel_latent_scale(neck, rest)
            }
            TargetKind::BetaFamily { beta } => -q[0].abs().powf(*beta),
        })
    }

    pub fn grad_log_density(&self, q: &[f64]) -> Result<Vec<f64>> {
        self.log_density_and_grad(q).map(|(_, g)| g)
    }

    /// Log density and its gradient from one evaluation.
    pub fn log_density_and_grad(&self, q: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_point(q)?;
        match &self.kind {
            TargetKind::StdNormal => {
                let lp = -0.5 * q.iter().map(|x| x * x).sum::<f64>();
                Ok((lp, q.iter().map(|x| -x).collect()))
            }
            TargetKind::MvnPrecision { precision, .. } => {
                let v = DVector::from_column_slice(q);
                let lv = precision * &v;
                Ok((-0.5 * v.dot(&lv), lv.iter().map(|x| -x).collect()))
            }
            TargetKind::Funnel { scale } => {
                let (neck, rest) = (q[0], &q[1..]);
                let latent = funnel_latent_scale(neck, rest);
                let lp = funnel_neck_terms(neck, *scale, rest.len()) - 0.5 * latent;
                let inv_var = (-neck).exp();
                let mut grad = Vec::with_capacity(self.dim);
                grad.push(-neck / (scale * scale) - 0.5 * rest.len() as f64 + 0.5 * latent);
                grad.extend(rest.iter().map(|x| -x * inv_var));
                Ok((lp, grad))
            }
            TargetKind::BetaFamily { beta } => {
                let x = q[0];
                if x == 0.0 && *beta < 2.0 {
                    return Err(Error::NonDifferentiable(x));
                }
                let lp = -x.abs().powf(*beta);
                let g = if x == 0.0 {
                    0.0
                } else {
                    -beta * x.abs().powf(beta - 1.0) * x.signum()
                };
                Ok((lp, vec![g]))
            }
        }
    }

    fn check_point(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: q.len(),
            });
        }
        if q.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(())
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 {
        return Err(Error::InvalidParameter("dimension must be at least 1".into()));
    }
    Ok(())
}

// -q₀²/(2s²) - n q₀ / 2
fn funnel_neck_terms(neck: f64, scale: f64, n_latent: usize) -> f64 {
    -neck * neck / (2.0 * scale * scale) - 0.5 * n_latent as f64 * neck
}

// e^{-q₀} Σ q_i², evaluated in log space so a zero sum never meets an overflowing exponential.
fn funnel_latent_scale(neck: f64, rest: &[f64]) -> f64 {
    let sum_sq: f64 = rest.iter().map(|x| x * x).sum();
    if sum_sq == 0.0 {
        return 0.0;
    }
    (sum_sq.ln() - neck).exp()
}

fn number(v: &Value, name: &str) -> Result<f64> {
    v.as_f64()
        .ok_or_else(|| Error::InvalidParameter(format!("`{name}` must be a number")))
}

fn parse_matrix(v: &Value) -> Result<DMatrix<f64>> {
    let bad = || Error::InvalidParameter("`precision` must be a square array of numbers".into());
    let rows = v.as_array().ok_or_else(bad)?;
    let n = rows.len();
    let mut data = Vec::with_capacity(n * n);
    for row in rows {
        let row = row.as_array().ok_or_else(bad)?;
        if row.len() != n {
            return Err(bad());
        }
        for x in row {
            data.push(x.as_f64().ok_or_else(bad)?);
        }
    }
    Ok(DMatrix::from_row_slice(n, n, &data))
}
