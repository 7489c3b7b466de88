//! Warm-up adaptation.
//!
//! The step size is tuned by stochastic approximation on `log ε` with iterate
//! averaging (dual averaging) so that the mean acceptance statistic reaches a
//! target. The metric is set from windowed estimates of the target covariance,
//! `M⁻¹ ≈ Cov_π[q]`, shrunk toward a small multiple of the identity.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::hamiltonian::{lift, Metric};
use crate::integrator::{check_divergence, leapfrog, DivergenceConfig};
use crate::model::Target;
use crate::transition::accept_probability;
use crate::{Error, Result};

pub const DEFAULT_TARGET_ACCEPT: f64 = 0.8;

const SMALLEST_PROBE: f64 = 1.0 / (1u64 << 20) as f64;
const LARGEST_PROBE: f64 = (1u64 << 20) as f64;

/// Searches for a step size by doubling or halving from ε = 1 until the
/// acceptance probability of a single leapfrog step from `q0` crosses ½.
///
/// Each probe uses a fresh momentum draw. The returned ε is the last probe on
/// the accepting side: the acceptance at ε is at least ½ and the acceptance at
/// 2ε is below it.
pub fn init_step_size<R: Rng + ?Sized>(
    target: &Target,
    metric: &Metric,
    q0: &[f64],
    rng: &mut R,
) -> Result<f64> {
    init_step_size_traced(target, metric, q0, rng).map(|trace| trace.step_size)
}

/// One probe of the step-size search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub step_size: f64,
    pub accept: f64,
}

#[derive(Debug, Clone)]
pub struct StepSizeSearch {
    pub step_size: f64,
    pub probes: Vec<Probe>,
}

pub fn init_step_size_traced<R: Rng + ?Sized>(
    target: &Target,
    metric: &Metric,
    q0: &[f64],
    rng: &mut R,
) -> Result<StepSizeSearch> {
    let div = DivergenceConfig::default();
    let probe = |eps: f64, rng: &mut R| -> Result<Probe> {
        let z = lift(target, metric, q0, rng)?;
        let next = leapfrog(target, metric, &z, eps);
        let accept = if check_divergence(z.energy, next.energy, &div) {
            0.0
        } else {
            accept_probability(z.energy, next.energy)
        };
        Ok(Probe { step_size: eps, accept })
    };

    let first = probe(1.0, rng)?;
    let mut probes = vec![first];
    let growing = first.accept >= 0.5;
    let mut eps = 1.0;
    loop {
        if growing {
            if eps >= LARGEST_PROBE {
                return Ok(StepSizeSearch { step_size: eps, probes });
            }
            let next = probe(eps * 2.0, rng)?;
            probes.push(next);
            if next.accept < 0.5 {
                return Ok(StepSizeSearch { step_size: eps, probes });
            }
            eps *= 2.0;
        } else {
            if eps <= SMALLEST_PROBE {
                return Err(Error::StepSizeInit(eps));
            }
            eps *= 0.5;
            let next = probe(eps, rng)?;
            probes.push(next);
            if next.accept >= 0.5 {
                return Ok(StepSizeSearch { step_size: eps, probes });
            }
        }
    }
}

/// Dual-averaging state for `log ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSizeAdaptState {
    pub log_eps: f64,
    pub log_eps_bar: f64,
    /// Shrinkage point of the iterates.
    pub mu: f64,
    /// Running average of `target - accept_stat`.
    pub h_bar: f64,
    pub counter: usize,
    pub target_accept: f64,
    pub gamma: f64,
    pub t0: f64,
    pub kappa: f64,
}

impl StepSizeAdaptState {
    /// Starts adaptation at `eps`, shrinking toward it.
    pub fn new(eps: f64, target_accept: f64) -> Self {
        Self {
            log_eps: eps.ln(),
            log_eps_bar: eps.ln(),
            mu: eps.ln(),
            h_bar: 0.0,
            counter: 0,
            target_accept,
            gamma: 0.2,
            t0: 10.0,
            kappa: 0.75,
        }
    }

    /// Restarts from `eps` with the same tuning constants.
    pub fn restart(&mut self, eps: f64) {
        *self = Self {
            target_accept: self.target_accept,
            gamma: self.gamma,
            t0: self.t0,
            kappa: self.kappa,
            ..Self::new(eps, self.target_accept)
        };
    }

    /// Multiplies every iterate and the shrinkage point by `factor`, keeping the
    /// accumulated statistic and the iteration count.
    pub fn rescale(&mut self, factor: f64) {
        let shift = factor.ln();
        self.log_eps += shift;
        self.log_eps_bar += shift;
        self.mu += shift;
    }

    /// Step size to use for the next iteration.
    pub fn current(&self) -> f64 {
        self.log_eps.exp()
    }

    /// Averaged step size, used once adaptation ends.
    pub fn finalize(&self) -> f64 {
        self.log_eps_bar.exp()
    }
}

/// Folds one acceptance statistic into the dual-averaging state.
pub fn update_step_size(state: &mut StepSizeAdaptState, accept_stat: f64) {
    let accept = if accept_stat.is_nan() { 0.0 } else { accept_stat.clamp(0.0, 1.0) };
    state.counter += 1;
    let t = state.counter as f64;
    let eta = 1.0 / (t + state.t0);
    state.h_bar = (1.0 - eta) * state.h_bar + eta * (state.target_accept - accept);
    state.log_eps = state.mu - t.sqrt() / state.gamma * state.h_bar;
    let weight = t.powf(-state.kappa);
    state.log_eps_bar = weight * state.log_eps + (1.0 - weight) * state.log_eps_bar;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricMode {
    Unit,
    #[serde(alias = "diagonal")]
    Diag,
    Dense,
}

/// Weight of the identity term in the shrunk covariance is `SHRINKAGE / (n + SHRINKAGE)`.
const SHRINKAGE: f64 = 5.0;
const SHRINKAGE_TARGET: f64 = 1e-3;

/// One-pass (Welford) accumulator of the mean and (co)variance of positions.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricAdaptState {
    pub mode: MetricMode,
    pub n: usize,
    pub mean: DVector<f64>,
    /// Sum of outer products of deviations; only the diagonal is maintained in
    /// diagonal mode.
    pub m2: DMatrix<f64>,
}

impl MetricAdaptState {
    pub fn new(dim: usize, mode: MetricMode) -> Self {
        Self {
            mode,
            n: 0,
            mean: DVector::zeros(dim),
            m2: DMatrix::zeros(dim, dim),
        }
    }

    pub fn reset(&mut self) {
        *self = Self::new(self.mean.len(), self.mode);
    }

    /// Sample covariance with `n - 1` normalisation; zero for fewer than two points.
    pub fn covariance(&self) -> DMatrix<f64> {
        if self.n < 2 {
            return DMatrix::zeros(self.mean.len(), self.mean.len());
        }
        &self.m2 / (self.n as f64 - 1.0)
    }
}

pub fn update_metric(state: &mut MetricAdaptState, q: &[f64]) {
    let x = DVector::from_column_slice(q);
    state.n += 1;
    let delta = &x - &state.mean;
    state.mean += &delta / state.n as f64;
    let delta_after = &x - &state.mean;
    match state.mode {
        MetricMode::Dense => state.m2 += &delta * delta_after.transpose(),
        _ => {
            for i in 0..q.len() {
                state.m2[(i, i)] += delta[i] * delta_after[i];
            }
        }
    }
}

/// `M⁻¹ = n/(n+5)·Σ̂ + 5/(n+5)·10⁻³·I`; diagonal mode keeps only the diagonal.
pub fn finalize_metric(state: &MetricAdaptState) -> Result<Metric> {
    if state.m2.iter().chain(state.mean.iter()).any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteAccumulator);
    }
    let dim = state.mean.len();
    let n = state.n as f64;
    let keep = n / (n + SHRINKAGE);
    let shrink = SHRINKAGE / (n + SHRINKAGE) * SHRINKAGE_TARGET;
    let cov = state.covariance();
    match state.mode {
        MetricMode::Unit => Ok(Metric::unit(dim)),
        MetricMode::Diag => {
            Metric::from_inverse_diagonal((0..dim).map(|i| keep * cov[(i, i)] + shrink).collect())
        }
        MetricMode::Dense => {
            let mut inv = cov * keep + DMatrix::identity(dim, dim) * shrink;
            inv = (&inv + inv.transpose()) * 0.5;
            Metric::from_inverse_dense(inv)
        }
    }
}

pub const DEFAULT_INIT_BUFFER: usize = 75;
pub const DEFAULT_TERM_BUFFER: usize = 50;
pub const DEFAULT_BASE_WINDOW: usize = 25;

/// Partition of warm-up into a fast initial interval, doubling slow windows
/// for covariance estimation, and a fast terminal interval.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WarmupSchedule {
    pub init_buffer: usize,
    pub windows: Vec<usize>,
    pub term_buffer: usize,
}

impl WarmupSchedule {
    pub fn total(&self) -> usize {
        self.init_buffer + self.windows.iter().sum::<usize>() + self.term_buffer
    }

    /// Iteration indices (exclusive) at which each slow window closes.
    pub fn window_ends(&self) -> Vec<usize> {
        self.windows
            .iter()
            .scan(self.init_buffer, |end, w| {
                *end += w;
                Some(*end)
            })
            .collect()
    }

    pub fn in_slow_window(&self, iteration: usize) -> bool {
        let start = self.init_buffer;
        let end = start + self.windows.iter().sum::<usize>();
        (start..end).contains(&iteration)
    }
}

pub fn plan_warmup(num_warmup: usize) -> Result<WarmupSchedule> {
    if num_warmup < 20 {
        return Err(Error::WarmupTooShort(num_warmup));
    }
    let (init_buffer, term_buffer, base_window) =
        if DEFAULT_INIT_BUFFER + DEFAULT_BASE_WINDOW + DEFAULT_TERM_BUFFER > num_warmup {
            let init = (0.15 * num_warmup as f64) as usize;
            let term = (0.1 * num_warmup as f64) as usize;
            (init, term, num_warmup - init - term)
        } else {
            (DEFAULT_INIT_BUFFER, DEFAULT_TERM_BUFFER, DEFAULT_BASE_WINDOW)
        };

    let slow_total = num_warmup - init_buffer - term_buffer;
    let mut windows = Vec::new();
    let mut used = 0;
    let mut size = base_window;
    while used < slow_total {
        let remaining = slow_total - used;
        // A window absorbs the remainder when the next doubled one would not fit.
        let this = if size + 2 * size > remaining { remaining } else { size };
        windows.push(this);
        used += this;
        size *= 2;
    }
    Ok(WarmupSchedule {
        init_buffer,
        windows,
        term_buffer,
    })
}
