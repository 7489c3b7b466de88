//! Dynamic trajectories by multiplicative expansion.
//!
//! A trajectory of `2^k` states is the leaf set of a perfect ordered binary
//! tree. Each expansion appends a new tree of the same size on a random side;
//! new trees are built recursively with uniform progressive sampling and joined
//! to the existing trajectory with biased progressive sampling. Expansion stops
//! once the whole trajectory makes a U-turn. A new tree that contains a
//! U-turning or divergent sub-tree is discarded entirely, which keeps the
//! trajectory distribution identical from every state it contains.

use rand::Rng;

use crate::hamiltonian::{lift, Metric, PhasePoint};
use crate::integrator::{check_divergence, Direction, DivergenceConfig, Dynamics, Leapfrog, StepSize};
use crate::math::{dot, log_sum_exp};
use crate::model::Target;
use crate::transition::{accept_probability, draw_from, Draw};
use crate::{Error, Result};

pub const DEFAULT_MAX_DEPTH: usize = 10;

/// Summary of a contiguous run of trajectory states.
#[derive(Debug, Clone)]
pub struct TreeState {
    /// Boundary reached by integrating backward in time.
    pub z_minus: PhasePoint,
    /// Boundary reached by integrating forward in time.
    pub z_plus: PhasePoint,
    /// Sum of the momenta of every state.
    pub rho: Vec<f64>,
    /// `log Σ e^{-(H - H0)}` over the states.
    pub log_weight: f64,
    /// State currently selected from this tree.
    pub proposal: PhasePoint,
    pub depth: usize,
    pub terminated: bool,
    pub divergent: bool,
    /// Sum of `min(1, e^{H0 - H})` over states produced by leapfrog steps.
    pub sum_accept_stat: f64,
    pub n_states: usize,
    pub n_leapfrog: usize,
}

impl TreeState {
    /// A single-state tree. `H0` is the energy of the transition's initial point.
    pub fn leaf(z: PhasePoint, h0: f64) -> Self {
        Self {
            rho: z.p.clone(),
            log_weight: h0 - z.energy,
            z_minus: z.clone(),
            z_plus: z.clone(),
            proposal: z,
            depth: 0,
            terminated: false,
            divergent: false,
            sum_accept_stat: 0.0,
            n_states: 1,
            n_leapfrog: 0,
        }
    }

    fn edge(&self, direction: Direction) -> &PhasePoint {
        match direction {
            Direction::Forward => &self.z_plus,
            Direction::Backward => &self.z_minus,
        }
    }
}

/// How the proposal of a merged tree is chosen between its two halves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProposalMode {
    /// New side with probability `w_new / (w_old + w_new)`.
    Uniform,
    /// New side with probability `min(1, w_new / w_old)`.
    Biased,
}

/// Probability of taking the new tree's proposal, from log weights.
pub fn new_side_probability(log_w_old: f64, log_w_new: f64, mode: ProposalMode) -> f64 {
    let old = if log_w_old.is_nan() { f64::NEG_INFINITY } else { log_w_old };
    let new = if log_w_new.is_nan() { f64::NEG_INFINITY } else { log_w_new };
    if new == f64::NEG_INFINITY {
        return 0.0;
    }
    match mode {
        ProposalMode::Uniform => (new - log_sum_exp(old, new)).exp(),
        ProposalMode::Biased => {
            if old == f64::NEG_INFINITY {
                1.0
            } else {
                (new - old).exp().min(1.0)
            }
        }
    }
}

/// Joins `new`, which extends `old` in `direction`, into one tree.
///
/// The termination flag of the result only reflects the inputs; callers decide
/// whether the merged tree itself turns.
pub fn merge_proposal<R: Rng + ?Sized>(
    old: TreeState,
    new: TreeState,
    direction: Direction,
    mode: ProposalMode,
    rng: &mut R,
) -> TreeState {
    let take_new = rng.random::<f64>() < new_side_probability(old.log_weight, new.log_weight, mode);
    let (z_minus, z_plus) = match direction {
        Direction::Forward => (old.z_minus, new.z_plus),
        Direction::Backward => (new.z_minus, old.z_plus),
    };
    TreeState {
        z_minus,
        z_plus,
        rho: old.rho.iter().zip(&new.rho).map(|(a, b)| a + b).collect(),
        log_weight: log_sum_exp(old.log_weight, new.log_weight),
        proposal: if take_new { new.proposal } else { old.proposal },
        depth: old.depth.max(new.depth) + 1,
        terminated: old.terminated || new.terminated,
        divergent: old.divergent || new.divergent,
        sum_accept_stat: old.sum_accept_stat + new.sum_accept_stat,
        n_states: old.n_states + new.n_states,
        n_leapfrog: old.n_leapfrog + new.n_leapfrog,
    }
}

/// Generalized No-U-Turn criterion with `p♯ = M⁻¹p`: the trajectory has turned
/// once either boundary velocity points back across it, `p♯₊·ρ < 0` or
/// `p♯₋·ρ < 0`.
pub fn u_turn(metric: &Metric, tree: &TreeState) -> bool {
    let plus = metric.apply_inverse_unchecked(&tree.z_plus.p);
    let minus = metric.apply_inverse_unchecked(&tree.z_minus.p);
    dot(&plus, &tree.rho) < 0.0 || dot(&minus, &tree.rho) < 0.0
}

/// Position-difference form of the criterion on Euclidean space, with
/// `Δq = q₊ - q₋`: `p₊·Δq < 0` or `p₋·Δq < 0`.
pub fn euclidean_u_turn(z_minus: &PhasePoint, z_plus: &PhasePoint) -> bool {
    let span: Vec<f64> = z_plus.q.iter().zip(&z_minus.q).map(|(a, b)| a - b).collect();
    dot(&z_plus.p, &span) < 0.0 || dot(&z_minus.p, &span) < 0.0
}

/// Builds a tree of `2^depth` new states starting one step beyond `z_edge`.
///
/// Stops early, with `terminated` set, as soon as any sub-tree U-turns or a
/// state diverges; such a tree must not contribute proposals.
pub fn build_subtree<D: Dynamics, R: Rng + ?Sized>(
    dynamics: &D,
    z_edge: &PhasePoint,
    depth: usize,
    direction: Direction,
    h0: f64,
    div: &DivergenceConfig,
    rng: &mut R,
) -> TreeState {
    if depth == 0 {
        let z = dynamics.step(z_edge, direction);
        let divergent = check_divergence(h0, z.energy, div);
        let accept = if divergent { 0.0 } else { accept_probability(h0, z.energy) };
        let mut leaf = TreeState::leaf(z, h0);
        if divergent {
            leaf.log_weight = f64::NEG_INFINITY;
        }
        leaf.divergent = divergent;
        leaf.terminated = divergent;
        leaf.sum_accept_stat = accept;
        leaf.n_leapfrog = 1;
        return leaf;
    }

    let inner = build_subtree(dynamics, z_edge, depth - 1, direction, h0, div, rng);
    if inner.terminated {
        return inner;
    }
    let outer = build_subtree(dynamics, inner.edge(direction), depth - 1, direction, h0, div, rng);
    let mut merged = merge_proposal(inner, outer, direction, ProposalMode::Uniform, rng);
    if !merged.terminated && u_turn(dynamics.metric(), &merged) {
        merged.terminated = true;
    }
    merged
}

/// Result of one dynamic transition.
#[derive(Debug, Clone)]
pub struct DynamicOutcome {
    pub proposal: PhasePoint,
    /// The accepted trajectory; discarded expansions are not part of it.
    pub trajectory: TreeState,
    /// Number of expansions attempted, including a discarded final one.
    pub depth: usize,
    /// Leapfrog steps taken, including those of a discarded expansion.
    pub n_leapfrog: usize,
    pub divergent: bool,
    /// Mean of `min(1, e^{H0 - H})` over every state produced by a leapfrog step.
    pub accept_stat: f64,
}

/// Runs the dynamic sampler from `z0`, drawing expansion directions from
/// `next_direction`.
pub fn sample_dynamic<D, R, F>(
    dynamics: &D,
    z0: PhasePoint,
    max_depth: usize,
    div: &DivergenceConfig,
    rng: &mut R,
    mut next_direction: F,
) -> DynamicOutcome
where
    D: Dynamics,
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> Direction,
{
    let h0 = z0.energy;
    let mut trajectory = TreeState::leaf(z0, h0);
    let mut depth = 0;
    let mut n_leapfrog = 0;
    let mut sum_accept = 0.0;
    let mut divergent = false;

    while depth < max_depth {
        let direction = next_direction(rng);
        let extension = build_subtree(
            dynamics,
            trajectory.edge(direction),
            trajectory.depth,
            direction,
            h0,
            div,
            rng,
        );
        depth += 1;
        n_leapfrog += extension.n_leapfrog;
        sum_accept += extension.sum_accept_stat;
        if extension.terminated {
            divergent = extension.divergent;
            break;
        }
        trajectory = merge_proposal(trajectory, extension, direction, ProposalMode::Biased, rng);
        if u_turn(dynamics.metric(), &trajectory) {
            break;
        }
    }

    DynamicOutcome {
        proposal: trajectory.proposal.clone(),
        trajectory,
        depth,
        n_leapfrog,
        divergent,
        accept_stat: if n_leapfrog == 0 {
            1.0
        } else {
            sum_accept / n_leapfrog as f64
        },
    }
}

/// One transition of the dynamic sampler from position `q0`.
pub fn dynamic_transition<R: Rng + ?Sized>(
    target: &Target,
    metric: &Metric,
    q0: &[f64],
    eps: StepSize,
    max_depth: usize,
    div: &DivergenceConfig,
    rng: &mut R,
) -> Result<Draw> {
    if max_depth == 0 {
        return Err(Error::InvalidParameter("max_depth must be at least 1".into()));
    }
    let z0 = lift(target, metric, q0, rng)?;
    let dynamics = Leapfrog::new(target, metric, eps);
    let outcome = sample_dynamic(&dynamics, z0, max_depth, div, rng, random_direction);
    Ok(draw_from(
        &outcome.proposal,
        outcome.accept_stat,
        outcome.depth,
        outcome.n_leapfrog,
        outcome.divergent,
        eps.get(),
    ))
}

fn random_direction<R: Rng + ?Sized>(rng: &mut R) -> Direction {
    if rng.random::<bool>() {
        Direction::Forward
    } else {
        Direction::Backward
    }
}
