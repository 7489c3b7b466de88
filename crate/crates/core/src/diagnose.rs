//! Estimator quality and pathology diagnostics over completed chains.

use std::fmt::Write as _;

use serde::Serialize;

use crate::math::{mean, variance};
use crate::transition::Draw;
use crate::{Error, Result};

/// E-BFMI values below this suggest a poorly matched kinetic energy.
pub const E_BFMI_THRESHOLD: f64 = 0.3;
/// Split R-hat values above this are reported.
pub const RHAT_THRESHOLD: f64 = 1.01;

fn validate<C: AsRef<[f64]>>(chains: &[C], min_len: usize) -> Result<usize> {
    let first = chains.first().ok_or(Error::TooFewDraws {
        needed: min_len,
        found: 0,
    })?;
    let n = first.as_ref().len();
    if chains.iter().any(|c| c.as_ref().len() != n) {
        return Err(Error::RaggedChains);
    }
    if n < min_len {
        return Err(Error::TooFewDraws {
            needed: min_len,
            found: n,
        });
    }
    if chains.iter().flat_map(|c| c.as_ref()).any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    Ok(n)
}

/// Biased autocovariance at `lag`: `Σ (x_t - m)(x_{t+lag} - m) / N`.
fn autocovariance(centered: &[f64], lag: usize) -> f64 {
    let n = centered.len();
    centered[..n - lag]
        .iter()
        .zip(&centered[lag..])
        .map(|(a, b)| a * b)
        .sum::<f64>()
        / n as f64
}

/// Effective sample size across one or more equal-length chains.
///
/// Autocorrelations combine the within-chain autocovariances with the
/// between-chain variance; their sum is truncated with the initial
/// monotone sequence over adjacent lag pairs. The result lies in `(0, N·C]`.
pub fn ess<C: AsRef<[f64]>>(chains: &[C]) -> Result<f64> {
    let n = validate(chains, 4)?;
    let n_chains = chains.len();
    let nf = n as f64;

    let centered: Vec<Vec<f64>> = chains
        .iter()
        .map(|c| {
            let m = mean(c.as_ref());
            c.as_ref().iter().map(|x| x - m).collect()
        })
        .collect();
    let chain_means: Vec<f64> = chains.iter().map(|c| mean(c.as_ref())).collect();
    let within = chains.iter().map(|c| variance(c.as_ref())).sum::<f64>() / n_chains as f64;
    let between_over_n = if n_chains > 1 { variance(&chain_means) } else { 0.0 };
    let var_plus = within * (nf - 1.0) / nf + between_over_n;
    if !(within > 0.0) || !(var_plus > 0.0) {
        return Err(Error::ConstantSequence);
    }

    let rho = |lag: usize| -> f64 {
        let mean_acov =
            centered.iter().map(|c| autocovariance(c, lag)).sum::<f64>() / n_chains as f64;
        1.0 - (within - mean_acov) / var_plus
    };

    // Γ_k = ρ_{2k} + ρ_{2k+1}, kept while positive and forced non-increasing.
    let mut pair_sum = 0.0;
    let mut previous = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        let even = if k == 0 { 1.0 } else { rho(2 * k) };
        let gamma = even + rho(2 * k + 1);
        if gamma < 0.0 {
            break;
        }
        let gamma = gamma.min(previous);
        pair_sum += gamma;
        previous = gamma;
        k += 1;
    }

    let total = nf * n_chains as f64;
    let tau = -1.0 + 2.0 * pair_sum;
    if tau <= 0.0 {
        return Ok(total);
    }
    Ok((total / tau).min(total))
}

/// Monte Carlo standard error `sd / √ESS`, with `sd` over all pooled draws.
pub fn mcmc_se<C: AsRef<[f64]>>(chains: &[C]) -> Result<f64> {
    let ess = ess(chains)?;
    let pooled: Vec<f64> = chains.iter().flat_map(|c| c.as_ref().iter().copied()).collect();
    Ok((variance(&pooled) / ess).sqrt())
}

/// Split potential scale reduction over the `2·C` half-chains.
///
/// Odd-length chains drop their middle draw before splitting.
pub fn split_rhat<C: AsRef<[f64]>>(chains: &[C]) -> Result<f64> {
    let n = validate(chains, 4)?;
    let half = n / 2;
    let mut halves: Vec<&[f64]> = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let c = c.as_ref();
        halves.push(&c[..half]);
        halves.push(&c[n - half..]);
    }
    let within = halves.iter().map(|h| variance(h)).sum::<f64>() / halves.len() as f64;
    if !(within > 0.0) {
        return Err(Error::ConstantSequence);
    }
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let nh = half as f64;
    let between = nh * variance(&means);
    Ok((((nh - 1.0) / nh * within + between / nh) / within).sqrt())
}

/// Energy Bayesian fraction of missing information of one chain:
/// `Σ (E_n - E_{n-1})² / Σ (E_n - Ē)²`.
pub fn e_bfmi(energies: &[f64]) -> Result<f64> {
    validate(&[energies], 2)?;
    let m = mean(energies);
    let denom: f64 = energies.iter().map(|e| (e - m).powi(2)).sum();
    if !(denom > 0.0) {
        return Err(Error::ConstantSequence);
    }
    let numer: f64 = energies.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    Ok(numer / denom)
}

pub fn is_low_e_bfmi(value: f64) -> bool {
    value < E_BFMI_THRESHOLD
}

/// Post-warm-up draws of every chain.
#[derive(Debug, Clone, Default)]
pub struct ChainSet {
    pub chains: Vec<Vec<Draw>>,
    /// Tree-depth cap of the dynamic sampler, when it was used.
    pub max_depth: Option<usize>,
}

impl ChainSet {
    pub fn new(chains: Vec<Vec<Draw>>, max_depth: Option<usize>) -> Result<Self> {
        if let Some(first) = chains.first() {
            if chains.iter().any(|c| c.len() != first.len()) {
                return Err(Error::RaggedChains);
            }
        }
        Ok(Self { chains, max_depth })
    }

    pub fn num_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn num_draws(&self) -> usize {
        self.chains.first().map_or(0, |c| c.len())
    }

    pub fn dim(&self) -> usize {
        self.chains
            .first()
            .and_then(|c| c.first())
            .map_or(0, |d| d.q.len())
    }

    /// Per-chain sequences of coordinate `k`.
    pub fn parameter(&self, k: usize) -> Vec<Vec<f64>> {
        self.chains
            .iter()
            .map(|c| c.iter().map(|d| d.q[k]).collect())
            .collect()
    }

    pub fn energies(&self, chain: usize) -> Vec<f64> {
        self.chains[chain].iter().map(|d| d.energy).collect()
    }

    pub fn draws(&self) -> impl Iterator<Item = &Draw> {
        self.chains.iter().flatten()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub ess: Option<f64>,
    pub mcmc_se: Option<f64>,
    pub rhat: Option<f64>,
}

/// Histogram counts of centred energies and of energy transitions on shared bins.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyHistogram {
    pub bin_edges: Vec<f64>,
    /// Counts of `E_n - Ē` (centred per chain).
    pub marginal: Vec<usize>,
    /// Counts of `E_n - E_{n-1}`.
    pub transitions: Vec<usize>,
}

const HISTOGRAM_BINS: usize = 20;

impl EnergyHistogram {
    fn from_chains(chains: &ChainSet) -> Self {
        let mut marginal = Vec::new();
        let mut transitions = Vec::new();
        for c in 0..chains.num_chains() {
            let e = chains.energies(c);
            if e.is_empty() {
                continue;
            }
            let m = mean(&e);
            marginal.extend(e.iter().map(|x| x - m));
            transitions.extend(e.windows(2).map(|w| w[1] - w[0]));
        }
        let values = marginal.iter().chain(&transitions).filter(|x| x.is_finite());
        let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
            (lo.min(*x), hi.max(*x))
        });
        if !lo.is_finite() || !hi.is_finite() {
            return Self {
                bin_edges: Vec::new(),
                marginal: Vec::new(),
                transitions: Vec::new(),
            };
        }
        let width = if hi > lo { (hi - lo) / HISTOGRAM_BINS as f64 } else { 1.0 };
        let bin_edges = (0..=HISTOGRAM_BINS).map(|i| lo + width * i as f64).collect();
        let count = |xs: &[f64]| {
            let mut counts = vec![0; HISTOGRAM_BINS];
            for x in xs.iter().filter(|x| x.is_finite()) {
                let i = (((x - lo) / width) as usize).min(HISTOGRAM_BINS - 1);
                counts[i] += 1;
            }
            counts
        };
        Self {
            bin_edges,
            marginal: count(&marginal),
            transitions: count(&transitions),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub num_chains: usize,
    pub num_draws: usize,
    pub parameters: Vec<ParameterSummary>,
    pub divergences: usize,
    pub max_depth: Option<usize>,
    pub max_depth_saturations: usize,
    pub mean_accept_stat: f64,
    pub e_bfmi: Vec<Option<f64>>,
    pub energy_histogram: EnergyHistogram,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn has_warnings(&self) -> bool {
        !self.warnings.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Fixed-column table followed by the global diagnostics and warnings.
    pub fn to_text(&self) -> String {
        let fmt_opt = |v: Option<f64>, prec: usize| match v {
            Some(x) => format!("{x:.prec$}"),
            None => "NA".to_string(),
        };
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<10} {:>12} {:>12} {:>10} {:>12} {:>8}",
            "param", "mean", "sd", "ess", "mcmc_se", "rhat"
        );
        for p in &self.parameters {
            let _ = writeln!(
                out,
                "{:<10} {:>12.5} {:>12.5} {:>10} {:>12} {:>8}",
                p.name,
                p.mean,
                p.sd,
                fmt_opt(p.ess, 1),
                fmt_opt(p.mcmc_se, 5),
                fmt_opt(p.rhat, 4)
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "chains: {}  draws per chain: {}", self.num_chains, self.num_draws);
        let _ = writeln!(out, "mean accept_stat: {:.4}", self.mean_accept_stat);
        let _ = writeln!(out, "divergent draws: {}", self.divergences);
        if let Some(depth) = self.max_depth {
            let _ = writeln!(out, "draws at max tree depth {}: {}", depth, self.max_depth_saturations);
        }
        let bfmi: Vec<String> = self.e_bfmi.iter().map(|v| fmt_opt(*v, 3)).collect();
        let _ = writeln!(out, "E-BFMI per chain: {}", bfmi.join(" "));
        for w in &self.warnings {
            let _ = writeln!(out, "WARNING: {w}");
        }
        out
    }
}

/// Per-parameter summaries plus divergence, tree-depth and E-BFMI diagnostics.
pub fn summarize(chains: &ChainSet) -> Report {
    let mut warnings = Vec::new();
    let parameters: Vec<ParameterSummary> = (0..chains.dim())
        .map(|k| {
            let per_chain = chains.parameter(k);
            let pooled: Vec<f64> = per_chain.iter().flatten().copied().collect();
            ParameterSummary {
                name: format!("q.{}", k + 1),
                mean: mean(&pooled),
                sd: variance(&pooled).sqrt(),
                ess: ess(&per_chain).ok(),
                mcmc_se: mcmc_se(&per_chain).ok(),
                rhat: split_rhat(&per_chain).ok(),
            }
        })
        .collect();

    let total = chains.num_chains() * chains.num_draws();
    let divergences = chains.draws().filter(|d| d.divergent).count();
    let max_depth_saturations = chains.max_depth.map_or(0, |cap| {
        chains.draws().filter(|d| !d.divergent && d.depth >= cap).count()
    });
    let e_bfmi: Vec<Option<f64>> = (0..chains.num_chains())
        .map(|c| e_bfmi(&chains.energies(c)).ok())
        .collect();
    let mean_accept_stat = if total == 0 {
        f64::NAN
    } else {
        chains.draws().map(|d| d.accept_stat).sum::<f64>() / total as f64
    };

    if divergences > 0 {
        warnings.push(format!(
            "{divergences} of {total} post-warm-up draws ended with a divergence"
        ));
    }
    if max_depth_saturations > 0 {
        warnings.push(format!(
            "{max_depth_saturations} of {total} draws reached the maximum tree depth"
        ));
    }
    for p in &parameters {
        if let Some(r) = p.rhat.filter(|r| *r > RHAT_THRESHOLD) {
            warnings.push(format!("split R-hat of {} is {r:.4} (> {RHAT_THRESHOLD})", p.name));
        }
    }
    for (c, v) in e_bfmi.iter().enumerate() {
        if let Some(v) = v.filter(|v| is_low_e_bfmi(*v)) {
            warnings.push(format!("E-BFMI of chain {} is {v:.3} (< {E_BFMI_THRESHOLD})", c + 1));
        }
    }

    Report {
        num_chains: chains.num_chains(),
        num_draws: chains.num_draws(),
        parameters,
        divergences,
        max_depth: chains.max_depth,
        max_depth_saturations,
        mean_accept_stat,
        e_bfmi,
        energy_histogram: EnergyHistogram::from_chains(chains),
        warnings,
    }
}
