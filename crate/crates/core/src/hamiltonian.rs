//! Euclidean metrics, Gaussian momenta and the Hamiltonian `H = V + K`.
//!
//! The kinetic energy is `K(p) = ½ pᵀM⁻¹p`. The `½ log|M|` normaliser is
//! omitted because `M` is fixed for the whole of a transition.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::math::dot;
use crate::model::Target;
use crate::{Error, Result};

/// Euclidean metric (mass matrix) `M`.
#[derive(Debug, Clone)]
pub enum Metric {
    Unit { dim: usize },
    Diagonal {
        mass: Vec<f64>,
        inv_mass: Vec<f64>,
        sqrt_mass: Vec<f64>,
    },
    Dense {
        mass: DMatrix<f64>,
        inv_mass: DMatrix<f64>,
        /// `M = L Lᵀ`.
        mass_cholesky: Cholesky<f64, Dyn>,
    },
}

impl Metric {
    pub fn unit(dim: usize) -> Self {
        Metric::Unit { dim }
    }

    /// Diagonal metric from the diagonal of `M`.
    pub fn diagonal(mass: Vec<f64>) -> Result<Self> {
        if mass.is_empty() || mass.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Metric::Diagonal {
            inv_mass: mass.iter().map(|m| 1.0 / m).collect(),
            sqrt_mass: mass.iter().map(|m| m.sqrt()).collect(),
            mass,
        })
    }

    /// Diagonal metric from the diagonal of `M⁻¹`, e.g. estimated variances.
    pub fn from_inverse_diagonal(inv_mass: Vec<f64>) -> Result<Self> {
        if inv_mass.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::NotPositiveDefinite);
        }
        Self::diagonal(inv_mass.iter().map(|v| 1.0 / v).collect())
    }

    pub fn dense(mass: DMatrix<f64>) -> Result<Self> {
        if !mass.is_square() || mass.nrows() == 0 {
            return Err(Error::NotPositiveDefinite);
        }
        let mass_cholesky = Cholesky::new(mass.clone()).ok_or(Error::NotPositiveDefinite)?;
        let inv_mass = mass_cholesky.inverse();
        Ok(Metric::Dense {
            mass,
            inv_mass,
            mass_cholesky,
        })
    }

    /// Dense metric from `M⁻¹`, e.g. an estimated covariance.
    pub fn from_inverse_dense(inv_mass: DMatrix<f64>) -> Result<Self> {
        if !inv_mass.is_square() || inv_mass.nrows() == 0 {
            return Err(Error::NotPositiveDefinite);
        }
        let mass = Cholesky::new(inv_mass.clone())
            .ok_or(Error::NotPositiveDefinite)?
            .inverse();
        // Symmetrise away round-off before factoring again.
        let mass = (&mass + mass.transpose()) * 0.5;
        let mass_cholesky = Cholesky::new(mass.clone()).ok_or(Error::NotPositiveDefinite)?;
        Ok(Metric::Dense {
            mass,
            inv_mass,
            mass_cholesky,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Metric::Unit { dim } => *dim,
            Metric::Diagonal { mass, .. } => mass.len(),
            Metric::Dense { mass, .. } => mass.nrows(),
        }
    }

    /// `log det M⁻¹`.
    pub fn log_det_inverse_mass(&self) -> f64 {
        match self {
            Metric::Unit { .. } => 0.0,
            Metric::Diagonal { inv_mass, .. } => inv_mass.iter().map(|m| m.ln()).sum(),
            Metric::Dense { mass_cholesky, .. } => {
                -2.0 * mass_cholesky.l_dirty().diagonal().iter().map(|l| l.ln()).sum::<f64>()
            }
        }
    }

    pub fn mass_matrix(&self) -> DMatrix<f64> {
        match self {
            Metric::Unit { dim } => DMatrix::identity(*dim, *dim),
            Metric::Diagonal { mass, .. } => DMatrix::from_diagonal(&DVector::from_column_slice(mass)),
            Metric::Dense { mass, .. } => mass.clone(),
        }
    }

    pub fn inverse_mass_matrix(&self) -> DMatrix<f64> {
        match self {
            Metric::Unit { dim } => DMatrix::identity(*dim, *dim),
            Metric::Diagonal { inv_mass, .. } => {
                DMatrix::from_diagonal(&DVector::from_column_slice(inv_mass))
            }
            Metric::Dense { inv_mass, .. } => inv_mass.clone(),
        }
    }

    /// `M x`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        Ok(match self {
            Metric::Unit { .. } => x.to_vec(),
            Metric::Diagonal { mass, .. } => x.iter().zip(mass).map(|(a, m)| a * m).collect(),
            Metric::Dense { mass, .. } => (mass * DVector::from_column_slice(x)).as_slice().to_vec(),
        })
    }

    /// `M⁻¹ x`.
    pub fn apply_inverse(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        Ok(self.apply_inverse_unchecked(x))
    }

    /// The velocity `p♯ = M⁻¹ p`, i.e. `dq/dt = ∂K/∂p`.
    pub fn velocity(&self, p: &[f64]) -> Result<Vec<f64>> {
        self.apply_inverse(p)
    }

    pub fn kinetic_energy(&self, p: &[f64]) -> Result<f64> {
        self.check(p)?;
        Ok(self.kinetic_energy_unchecked(p))
    }

    /// `½ |L⁻¹ p|²` with `M = L Lᵀ`: the kinetic energy from the factored system.
    pub fn kinetic_energy_factored(&self, p: &[f64]) -> Result<f64> {
        self.check(p)?;
        Ok(match self {
            Metric::Unit { .. } => 0.5 * dot(p, p),
            Metric::Diagonal { sqrt_mass, .. } => {
                0.5 * p.iter().zip(sqrt_mass).map(|(a, s)| (a / s).powi(2)).sum::<f64>()
            }
            Metric::Dense { mass_cholesky, .. } => {
                let y = mass_cholesky
                    .l_dirty()
                    .solve_lower_triangular(&DVector::from_column_slice(p))
                    .ok_or(Error::NotPositiveDefinite)?;
                0.5 * y.norm_squared()
            }
        })
    }

    /// Draws `p ~ N(0, M)`.
    pub fn sample_momentum<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..self.dim()).map(|_| rng.sample(StandardNormal)).collect();
        match self {
            Metric::Unit { .. } => z,
            Metric::Diagonal { sqrt_mass, .. } => z.iter().zip(sqrt_mass).map(|(a, s)| a * s).collect(),
            Metric::Dense { mass_cholesky, .. } => {
                (mass_cholesky.l() * DVector::from_vec(z)).as_slice().to_vec()
            }
        }
    }

    pub(crate) fn apply_inverse_unchecked(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Metric::Unit { .. } => x.to_vec(),
            Metric::Diagonal { inv_mass, .. } => x.iter().zip(inv_mass).map(|(a, m)| a * m).collect(),
            Metric::Dense { inv_mass, .. } => {
                (inv_mass * DVector::from_column_slice(x)).as_slice().to_vec()
            }
        }
    }

    pub(crate) fn kinetic_energy_unchecked(&self, p: &[f64]) -> f64 {
        match self {
            Metric::Unit { .. } => 0.5 * dot(p, p),
            Metric::Diagonal { inv_mass, .. } => {
                0.5 * p.iter().zip(inv_mass).map(|(a, m)| a * a * m).sum::<f64>()
            }
            Metric::Dense { .. } => 0.5 * dot(p, &self.apply_inverse_unchecked(p)),
        }
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(())
    }
}

/// A point `z = (q, p)` in phase space with cached potential, gradient and energy.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    /// `V(q) = -log π(q)`.
    pub potential: f64,
    /// `∂V/∂q`.
    pub grad_potential: Vec<f64>,
    /// `H(q, p) = V(q) + K(p)`.
    pub energy: f64,
}

impl PhasePoint {
    pub fn new(target: &Target, metric: &Metric, q: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        if metric.dim() != target.dim() {
            return Err(Error::DimensionMismatch {
                expected: target.dim(),
                found: metric.dim(),
            });
        }
        let kinetic = metric.kinetic_energy(&p)?;
        let (lp, grad) = target.log_density_and_grad(&q)?;
        Ok(Self::from_parts(q, p, -lp, grad.into_iter().map(|g| -g).collect(), kinetic))
    }

    pub fn from_parts(
        q: Vec<f64>,
        p: Vec<f64>,
        potential: f64,
        grad_potential: Vec<f64>,
        kinetic: f64,
    ) -> Self {
        Self {
            q,
            p,
            potential,
            grad_potential,
            energy: potential + kinetic,
        }
    }

    /// Log density of the position, `-V(q)`.
    pub fn log_density(&self) -> f64 {
        -self.potential
    }
}

/// Lifts `q` onto phase space with a fresh momentum draw `p ~ N(0, M)`.
pub fn lift<R: Rng + ?Sized>(
    target: &Target,
    metric: &Metric,
    q: &[f64],
    rng: &mut R,
) -> Result<PhasePoint> {
    if q.len() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: target.dim(),
            found: q.len(),
        });
    }
    let p = metric.sample_momentum(rng);
    let point = PhasePoint::new(target, metric, q.to_vec(), p)
        .map_err(|e| Error::InvalidStart(e.to_string()))?;
    if !point.energy.is_finite() || point.grad_potential.iter().any(|g| !g.is_finite()) {
        return Err(Error::InvalidStart(format!(
            "non-finite log density or gradient at {q:?}"
        )));
    }
    Ok(point)
}
