//! Executes all chains of a run and summarizes them.

use hmc_core::diagnose::{summarize, ChainSet, Report};
use hmc_core::sampler::{run_chain, ChainOutput, ChainSettings};
use hmc_core::Target;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::{ConfigError, Init, RunConfig};

/// Random initial points tried before giving up.
pub const INIT_ATTEMPTS: usize = 100;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("chain {chain}: no initial point with finite density and gradient after {attempts} attempts")]
    Init { chain: usize, attempts: usize },
    #[error("chain {chain}: {source}")]
    Chain {
        chain: usize,
        source: hmc_core::Error,
    },
    #[error("output error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub chains: Vec<ChainOutput>,
    pub set: ChainSet,
    pub report: Report,
}

/// The random stream of chain `chain`: the run seed selects the key and the
/// chain index selects an independent stream.
pub fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

fn usable(target: &Target, q: &[f64]) -> bool {
    match target.log_density_and_grad(q) {
        Ok((lp, grad)) => lp.is_finite() && grad.iter().all(|g| g.is_finite()),
        Err(_) => false,
    }
}

/// Chooses a starting point with finite density and gradient.
pub fn initial_point<R: Rng + ?Sized>(
    target: &Target,
    init: &Init,
    chain: usize,
    rng: &mut R,
) -> Result<Vec<f64>, RunError> {
    match init {
        Init::Point(q) if usable(target, q) => Ok(q.clone()),
        Init::Point(_) => Err(RunError::Init { chain, attempts: 1 }),
        Init::Radius { radius } => {
            for _ in 0..INIT_ATTEMPTS {
                let q: Vec<f64> = (0..target.dim())
                    .map(|_| if *radius > 0.0 { rng.random_range(-radius..=*radius) } else { 0.0 })
                    .collect();
                if usable(target, &q) {
                    return Ok(q);
                }
            }
            Err(RunError::Init {
                chain,
                attempts: INIT_ATTEMPTS,
            })
        }
    }
}

fn run_one(
    target: &Target,
    settings: &ChainSettings,
    config: &RunConfig,
    chain: usize,
) -> Result<ChainOutput, RunError> {
    let mut rng = chain_rng(config.seed, chain);
    let init = initial_point(target, &config.init, chain, &mut rng)?;
    let out = run_chain(target, settings, &init, &mut rng)
        .map_err(|source| RunError::Chain { chain, source })?;
    if !config.quiet {
        let divergent = out.draws.iter().filter(|d| d.divergent).count();
        eprintln!(
            "chain {}: {} warm-up + {} draws, step size {:.4}, {} divergent",
            chain + 1,
            settings.num_warmup,
            out.draws.len(),
            out.step_size,
            divergent
        );
    }
    Ok(out)
}

/// Runs every chain, concurrently unless `config.sequential`, and summarizes
/// the post-warm-up draws once all chains are done.
pub fn run(config: &RunConfig) -> Result<RunOutput, RunError> {
    let target = config.validate()?;
    let settings = config.chain_settings();

    let results: Vec<Result<ChainOutput, RunError>> = if config.sequential {
        (0..config.chains)
            .map(|c| run_one(&target, &settings, config, c))
            .collect()
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..config.chains)
                .map(|c| {
                    let (target, settings) = (&target, &settings);
                    scope.spawn(move || run_one(target, settings, config, c))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("chain thread panicked"))
                .collect()
        })
    };
    let chains = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let set = ChainSet::new(
        chains.iter().map(|c| c.draws.clone()).collect(),
        settings.sampler.max_depth(),
    )
    .map_err(|source| RunError::Chain { chain: 0, source })?;
    let report = summarize(&set);
    Ok(RunOutput { chains, set, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use hmc_core::TargetDescriptor;

    #[test]
    fn streams_differ_between_chains() {
        let a: u64 = chain_rng(7, 0).random();
        let b: u64 = chain_rng(7, 1).random();
        let a2: u64 = chain_rng(7, 0).random();
        assert_ne!(a, b);
        assert_eq!(a, a2);
    }

    #[test]
    fn random_init_stays_in_the_box() {
        let t = Target::std_normal(5).unwrap();
        let mut rng = chain_rng(1, 0);
        let q = initial_point(&t, &Init::Radius { radius: 2.0 }, 0, &mut rng).unwrap();
        assert!(q.iter().all(|x| x.abs() <= 2.0));
    }

    #[test]
    fn unusable_start_fails() {
        // For β < 2 the gradient is undefined at exactly zero.
        let t = Target::beta_family(1.0).unwrap();
        let mut rng = chain_rng(1, 0);
        let err = initial_point(&t, &Init::Radius { radius: 0.0 }, 2, &mut rng).unwrap_err();
        assert!(matches!(err, RunError::Init { chain: 2, attempts: INIT_ATTEMPTS }));
        assert!(initial_point(&t, &Init::Point(vec![0.0]), 0, &mut rng).is_err());
    }

    #[test]
    fn sampling_rows_equal_chains_times_samples() {
        let mut config = RunConfig::new(TargetDescriptor::new("std_normal", Some(2)));
        config.chains = 3;
        config.num_warmup = 100;
        config.num_samples = 50;
        config.quiet = true;
        let out = run(&config).unwrap();
        assert_eq!(out.set.draws().count(), 150);
        assert_eq!(out.report.num_chains, 3);
    }
}
