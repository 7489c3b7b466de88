//! Markov transitions built from Hamiltonian trajectories.
//!
//! Every transition lifts the current position onto phase space with a fresh
//! momentum, explores a numerical trajectory, and projects the selected state
//! back to position space.

mod tree;

use rand::Rng;
use serde::Serialize;

use crate::hamiltonian::{lift, Metric, PhasePoint};
use crate::integrator::{
    check_divergence, integrate, Direction, DivergenceConfig, Dynamics, Leapfrog, StepSize,
};
use crate::math::log_sum_exp;
use crate::model::Target;
use crate::{Error, Result};

pub use tree::{
    build_subtree, dynamic_transition, euclidean_u_turn, merge_proposal, new_side_probability,
    sample_dynamic, u_turn, DynamicOutcome, ProposalMode, TreeState, DEFAULT_MAX_DEPTH,
};

/// One iteration of a chain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Draw {
    pub q: Vec<f64>,
    /// `log π(q)`, unnormalized.
    pub log_density: f64,
    /// Hamiltonian of the selected phase-space state.
    pub energy: f64,
    pub accept_stat: f64,
    pub depth: usize,
    pub n_leapfrog: usize,
    pub divergent: bool,
    pub step_size: f64,
}

/// `min(1, exp(H0 - H1))`, zero when `H1` is not finite.
pub fn accept_probability(h0: f64, h1: f64) -> f64 {
    if !h1.is_finite() {
        return 0.0;
    }
    (h0 - h1).exp().min(1.0)
}

/// Metropolis-corrected HMC with a fixed number of leapfrog steps.
///
/// The proposal is the trajectory end point with its momentum negated. The
/// kinetic energy is quadratic, so the flip leaves `H` unchanged and is never
/// materialised.
pub fn static_hmc_transition<R: Rng + ?Sized>(
    target: &Target,
    metric: &Metric,
    q0: &[f64],
    eps: StepSize,
    n_steps: usize,
    div: &DivergenceConfig,
    rng: &mut R,
) -> Result<Draw> {
    check_steps(n_steps)?;
    let z0 = lift(target, metric, q0, rng)?;
    let run = integrate(target, metric, &z0, eps, n_steps, div, false);
    let accept = if run.divergent {
        0.0
    } else {
        accept_probability(z0.energy, run.last.energy)
    };
    let u: f64 = rng.random();
    let chosen = if u < accept { &run.last } else { &z0 };
    Ok(draw_from(chosen, accept, 0, run.n_steps, run.divergent, eps.get()))
}

/// Static trajectory of `n_states` states with multinomial state selection.
pub fn static_multinomial_transition<R: Rng + ?Sized>(
    target: &Target,
    metric: &Metric,
    q0: &[f64],
    eps: StepSize,
    n_states: usize,
    div: &DivergenceConfig,
    rng: &mut R,
) -> Result<Draw> {
    check_steps(n_states)?;
    let z0 = lift(target, metric, q0, rng)?;
    let dynamics = Leapfrog::new(target, metric, eps);
    Ok(sample_static_multinomial(&dynamics, z0, n_states, div, eps.get(), rng))
}

/// Static multinomial sampling over arbitrary dynamics.
///
/// The initial point is placed uniformly at one of the `n_states` slots of the
/// trajectory, which is then grown backward and forward from it; a state is
/// selected with probability `e^{-H} / Σ e^{-H}` progressively as states are
/// generated. A divergence stops the trajectory and the divergent state is
/// never eligible.
pub fn sample_static_multinomial<D: Dynamics, R: Rng + ?Sized>(
    dynamics: &D,
    z0: PhasePoint,
    n_states: usize,
    div: &DivergenceConfig,
    step_size: f64,
    rng: &mut R,
) -> Draw {
    let n_states = n_states.max(1);
    let h0 = z0.energy;
    let backward = rng.random_range(0..n_states);
    let forward = n_states - 1 - backward;

    let mut log_weight = 0.0;
    let mut selected = z0.clone();
    let mut sum_accept = 0.0;
    let mut n_leapfrog = 0;
    let mut divergent = false;

    'sides: for (direction, steps) in [(Direction::Backward, backward), (Direction::Forward, forward)] {
        let mut z = z0.clone();
        for _ in 0..steps {
            z = dynamics.step(&z, direction);
            n_leapfrog += 1;
            if check_divergence(h0, z.energy, div) {
                divergent = true;
                break 'sides;
            }
            sum_accept += accept_probability(h0, z.energy);
            let lw = h0 - z.energy;
            log_weight = log_sum_exp(log_weight, lw);
            if rng.random::<f64>() < (lw - log_weight).exp() {
                selected = z.clone();
            }
        }
    }

    let accept_stat = if n_leapfrog == 0 {
        1.0
    } else {
        sum_accept / n_leapfrog as f64
    };
    draw_from(&selected, accept_stat, 0, n_leapfrog, divergent, step_size)
}

pub(crate) fn draw_from(
    z: &PhasePoint,
    accept_stat: f64,
    depth: usize,
    n_leapfrog: usize,
    divergent: bool,
    step_size: f64,
) -> Draw {
    Draw {
        q: z.q.clone(),
        log_density: z.log_density(),
        energy: z.energy,
        accept_stat,
        depth,
        n_leapfrog,
        divergent,
        step_size,
    }
}

fn check_steps(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter("trajectory length must be at least 1".into()));
    }
    Ok(())
}
