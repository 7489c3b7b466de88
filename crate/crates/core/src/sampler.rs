//! Single-chain driver: warm-up with adaptation followed by the sampling phase.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adapt::{
    finalize_metric, init_step_size, plan_warmup, update_metric, update_step_size, MetricAdaptState,
    MetricMode, StepSizeAdaptState, WarmupSchedule, DEFAULT_TARGET_ACCEPT,
};
use crate::hamiltonian::Metric;
use crate::integrator::{DivergenceConfig, StepSize};
use crate::model::Target;
use crate::transition::{
    dynamic_transition, static_hmc_transition, static_multinomial_transition, Draw,
    DEFAULT_MAX_DEPTH,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SamplerKind {
    StaticHmc { n_steps: usize },
    StaticMultinomial { n_steps: usize },
    Dynamic { max_depth: usize },
}

impl SamplerKind {
    pub fn max_depth(&self) -> Option<usize> {
        match self {
            SamplerKind::Dynamic { max_depth } => Some(*max_depth),
            _ => None,
        }
    }

    pub fn transition<R: Rng + ?Sized>(
        &self,
        target: &Target,
        metric: &Metric,
        q: &[f64],
        eps: StepSize,
        div: &DivergenceConfig,
        rng: &mut R,
    ) -> Result<Draw> {
        match *self {
            SamplerKind::StaticHmc { n_steps } => {
                static_hmc_transition(target, metric, q, eps, n_steps, div, rng)
            }
            SamplerKind::StaticMultinomial { n_steps } => {
                static_multinomial_transition(target, metric, q, eps, n_steps, div, rng)
            }
            SamplerKind::Dynamic { max_depth } => {
                dynamic_transition(target, metric, q, eps, max_depth, div, rng)
            }
        }
    }
}

impl Default for SamplerKind {
    fn default() -> Self {
        SamplerKind::Dynamic {
            max_depth: DEFAULT_MAX_DEPTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSettings {
    pub sampler: SamplerKind,
    pub num_warmup: usize,
    pub num_samples: usize,
    pub metric_mode: MetricMode,
    pub target_accept: f64,
    /// Run step-size and metric adaptation during warm-up.
    pub adapt: bool,
    /// A fixed step size; disables step-size adaptation when set.
    pub step_size: Option<f64>,
    pub divergence: DivergenceConfig,
}

impl Default for ChainSettings {
    fn default() -> Self {
        Self {
            sampler: SamplerKind::default(),
            num_warmup: 1000,
            num_samples: 1000,
            metric_mode: MetricMode::Diag,
            target_accept: DEFAULT_TARGET_ACCEPT,
            adapt: true,
            step_size: None,
            divergence: DivergenceConfig::default(),
        }
    }
}

impl ChainSettings {
    pub fn validate(&self) -> Result<()> {
        if self.num_samples == 0 {
            return Err(Error::InvalidParameter("num_samples must be positive".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "target_accept must lie in (0, 1), got {}",
                self.target_accept
            )));
        }
        if let Some(eps) = self.step_size {
            StepSize::new(eps)?;
        }
        match self.sampler {
            SamplerKind::StaticHmc { n_steps } | SamplerKind::StaticMultinomial { n_steps }
                if n_steps == 0 =>
            {
                Err(Error::InvalidParameter("trajectory length must be at least 1".into()))
            }
            SamplerKind::Dynamic { max_depth: 0 } => {
                Err(Error::InvalidParameter("max_depth must be at least 1".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    /// Post-warm-up draws only.
    pub draws: Vec<Draw>,
    pub step_size: f64,
    pub metric: Metric,
    pub schedule: Option<WarmupSchedule>,
}

/// Runs warm-up then `num_samples` transitions from `init`.
///
/// With adaptation on, the step size is tuned by dual averaging at every
/// warm-up iteration and the metric is re-estimated at the end of each slow
/// window. Dual averaging carries on across metric updates, with its iterates
/// rescaled by the change in the metric's geometric-mean scale,
/// `(det M⁻¹_old / det M⁻¹_new)^{1/2D}`, so the effective step is
/// unchanged. The metric and step size are frozen for the sampling phase.
pub fn run_chain<R: Rng + ?Sized>(
    target: &Target,
    settings: &ChainSettings,
    init: &[f64],
    rng: &mut R,
) -> Result<ChainOutput> {
    settings.validate()?;
    if init.len() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: target.dim(),
            found: init.len(),
        });
    }
    let dim = target.dim();
    let div = settings.divergence;
    let mut metric = Metric::unit(dim);
    let mut q = init.to_vec();

    let adapt_eps = settings.adapt && settings.step_size.is_none() && settings.num_warmup > 0;
    let adapt_metric =
        settings.adapt && settings.metric_mode != MetricMode::Unit && settings.num_warmup > 0;
    let schedule = if adapt_eps || adapt_metric {
        Some(plan_warmup(settings.num_warmup)?)
    } else {
        None
    };

    let eps0 = match settings.step_size {
        Some(eps) => eps,
        None => init_step_size(target, &metric, &q, rng)?,
    };
    let mut dual = StepSizeAdaptState::new(eps0, settings.target_accept);
    let mut accumulator = MetricAdaptState::new(dim, settings.metric_mode);
    let window_ends = schedule.as_ref().map(|s| s.window_ends()).unwrap_or_default();

    let mut eps = eps0;
    for i in 0..settings.num_warmup {
        let draw = settings
            .sampler
            .transition(target, &metric, &q, StepSize::new(eps)?, &div, rng)?;
        q = draw.q;
        if adapt_eps {
            update_step_size(&mut dual, draw.accept_stat);
            eps = dual.current();
        }
        if let (true, Some(s)) = (adapt_metric, schedule.as_ref()) {
            if s.in_slow_window(i) {
                update_metric(&mut accumulator, &q);
            }
            if window_ends.contains(&(i + 1)) {
                let updated = finalize_metric(&accumulator)?;
                accumulator.reset();
                if adapt_eps {
                    let log_ratio = metric.log_det_inverse_mass() - updated.log_det_inverse_mass();
                    dual.rescale((0.5 * log_ratio / dim as f64).exp());
                    eps = dual.current();
                }
                metric = updated;
            }
        }
    }
    if adapt_eps {
        eps = dual.finalize();
    }

    let step = StepSize::new(eps)?;
    let draws = (0..settings.num_samples)
        .map(|_| {
            let draw = settings.sampler.transition(target, &metric, &q, step, &div, rng)?;
            q.clone_from(&draw.q);
            Ok(draw)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ChainOutput {
        draws,
        step_size: eps,
        metric,
        schedule,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::mean;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn only_sampling_draws_are_returned() {
        let t = Target::std_normal(2).unwrap();
        let settings = ChainSettings {
            num_warmup: 150,
            num_samples: 37,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = run_chain(&t, &settings, &[1.0, -1.0], &mut rng).unwrap();
        assert_eq!(out.draws.len(), 37);
        assert!(out.draws.iter().all(|d| d.step_size == out.step_size));
        assert_eq!(out.schedule.unwrap().total(), 150);
    }

    #[test]
    fn fixed_step_size_is_kept() {
        let t = Target::std_normal(1).unwrap();
        let settings = ChainSettings {
            step_size: Some(0.3),
            metric_mode: MetricMode::Unit,
            num_warmup: 10,
            num_samples: 20,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let out = run_chain(&t, &settings, &[0.0], &mut rng).unwrap();
        assert_eq!(out.step_size, 0.3);
        assert!(out.schedule.is_none());
    }

    #[test]
    fn diagonal_adaptation_recovers_scales() {
        let t = Target::mvn_precision(DMatrix::from_diagonal(&nalgebra::dvector![100.0, 1.0])).unwrap();
        let settings = ChainSettings {
            num_warmup: 1000,
            num_samples: 10,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = run_chain(&t, &settings, &[0.0, 0.0], &mut rng).unwrap();
        let inv = out.metric.inverse_mass_matrix();
        assert!((inv[(0, 0)] / 0.01 - 1.0).abs() < 0.2, "{inv}");
        assert!((inv[(1, 1)] - 1.0).abs() < 0.2, "{inv}");
    }

    #[test]
    fn short_adaptive_warmup_is_rejected() {
        let t = Target::std_normal(1).unwrap();
        let settings = ChainSettings {
            num_warmup: 10,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert_eq!(
            run_chain(&t, &settings, &[0.0], &mut rng).unwrap_err(),
            Error::WarmupTooShort(10)
        );
    }

    #[test]
    fn invalid_settings() {
        let t = Target::std_normal(1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for settings in [
            ChainSettings { num_samples: 0, ..Default::default() },
            ChainSettings { target_accept: 1.0, ..Default::default() },
            ChainSettings { sampler: SamplerKind::StaticHmc { n_steps: 0 }, ..Default::default() },
            ChainSettings { sampler: SamplerKind::Dynamic { max_depth: 0 }, ..Default::default() },
        ] {
            assert!(run_chain(&t, &settings, &[0.0], &mut rng).is_err());
        }
        let bad_init = run_chain(&t, &ChainSettings::default(), &[0.0, 1.0], &mut rng);
        assert!(matches!(bad_init, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn dynamic_chain_is_roughly_centred() {
        let t = Target::std_normal(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let out = run_chain(&t, &ChainSettings::default(), &[2.0, -2.0, 1.0], &mut rng).unwrap();
        for k in 0..3 {
            let xs: Vec<f64> = out.draws.iter().map(|d| d.q[k]).collect();
            assert!(mean(&xs).abs() < 0.2);
        }
    }
}
