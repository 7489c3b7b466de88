//! Leapfrog integration of Hamilton's equations and divergence detection.

use crate::hamiltonian::{Metric, PhasePoint};
use crate::model::Target;
use crate::{Error, Result};

/// Energy error above which a trajectory is flagged as divergent.
pub const DEFAULT_DIVERGENCE_THRESHOLD: f64 = 1000.0;

/// A positive, finite integrator step size.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct StepSize(f64);

impl StepSize {
    pub fn new(eps: f64) -> Result<Self> {
        if eps > 0.0 && eps.is_finite() {
            Ok(Self(eps))
        } else {
            Err(Error::InvalidParameter(format!(
                "step size must be positive and finite, got {eps}"
            )))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceConfig {
    pub threshold: f64,
}

impl DivergenceConfig {
    pub fn new(threshold: f64) -> Result<Self> {
        if threshold > 0.0 {
            Ok(Self { threshold })
        } else {
            Err(Error::InvalidParameter(format!(
                "divergence threshold must be positive, got {threshold}"
            )))
        }
    }
}

impl Default for DivergenceConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_DIVERGENCE_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }

    pub fn reverse(self) -> Self {
        match self {
            Direction::Forward => Direction::Backward,
            Direction::Backward => Direction::Forward,
        }
    }
}

/// `true` iff the energy rose by more than the threshold or is not finite.
pub fn check_divergence(h0: f64, h: f64, div: &DivergenceConfig) -> bool {
    !h.is_finite() || h - h0 > div.threshold
}

/// One leapfrog step with a signed step size `eps`.
///
/// Reuses the cached gradient of `z`, so exactly one new gradient is evaluated.
/// If the step leaves the domain of finite values the returned point carries
/// an infinite energy, which [`check_divergence`] reports as divergent.
pub fn leapfrog(target: &Target, metric: &Metric, z: &PhasePoint, eps: f64) -> PhasePoint {
    let half = 0.5 * eps;
    let p_half: Vec<f64> = z
        .p
        .iter()
        .zip(&z.grad_potential)
        .map(|(p, g)| p - half * g)
        .collect();
    let velocity = metric.apply_inverse_unchecked(&p_half);
    let q: Vec<f64> = z.q.iter().zip(&velocity).map(|(q, v)| q + eps * v).collect();
    match target.log_density_and_grad(&q) {
        Ok((lp, grad)) => {
            let grad_potential: Vec<f64> = grad.into_iter().map(|g| -g).collect();
            let p: Vec<f64> = p_half
                .iter()
                .zip(&grad_potential)
                .map(|(p, g)| p - half * g)
                .collect();
            let kinetic = metric.kinetic_energy_unchecked(&p);
            let mut point = PhasePoint::from_parts(q, p, -lp, grad_potential, kinetic);
            if !point.energy.is_finite()
                || point.p.iter().chain(&point.grad_potential).any(|x| !x.is_finite())
            {
                point.energy = f64::INFINITY;
            }
            point
        }
        Err(_) => {
            let dim = z.q.len();
            PhasePoint {
                q,
                p: p_half,
                potential: f64::INFINITY,
                grad_potential: vec![f64::NAN; dim],
                energy: f64::INFINITY,
            }
        }
    }
}

pub fn leapfrog_step(
    target: &Target,
    metric: &Metric,
    z: &PhasePoint,
    eps: StepSize,
    direction: Direction,
) -> PhasePoint {
    leapfrog(target, metric, z, direction.sign() * eps.get())
}

#[derive(Debug, Clone)]
pub struct Integration {
    pub last: PhasePoint,
    /// Every state after `z0`, when recording was requested.
    pub states: Option<Vec<PhasePoint>>,
    pub divergent: bool,
    pub n_steps: usize,
}

/// Applies up to `n_steps` leapfrog steps, halting at the first divergence.
pub fn integrate(
    target: &Target,
    metric: &Metric,
    z0: &PhasePoint,
    eps: StepSize,
    n_steps: usize,
    div: &DivergenceConfig,
    record: bool,
) -> Integration {
    let mut states = record.then(|| Vec::with_capacity(n_steps));
    let mut z = z0.clone();
    let mut divergent = false;
    let mut taken = 0;
    for _ in 0..n_steps {
        z = leapfrog_step(target, metric, &z, eps, Direction::Forward);
        taken += 1;
        if let Some(states) = states.as_mut() {
            states.push(z.clone());
        }
        if check_divergence(z0.energy, z.energy, div) {
            divergent = true;
            break;
        }
    }
    Integration {
        last: z,
        states,
        divergent,
        n_steps: taken,
    }
}

/// Moves through phase space one leapfrog step at a time.
///
/// The trajectory samplers are written against this trait so their
/// combinatorics can be exercised with synthetic dynamics.
pub trait Dynamics {
    fn step(&self, z: &PhasePoint, direction: Direction) -> PhasePoint;
    fn metric(&self) -> &Metric;
}

/// Leapfrog dynamics for a target, metric and step size.
#[derive(Debug, Clone, Copy)]
pub struct Leapfrog<'a> {
    pub target: &'a Target,
    pub metric: &'a Metric,
    pub step_size: StepSize,
}

impl<'a> Leapfrog<'a> {
    pub fn new(target: &'a Target, metric: &'a Metric, step_size: StepSize) -> Self {
        Self {
            target,
            metric,
            step_size,
        }
    }
}

impl Dynamics for Leapfrog<'_> {
    fn step(&self, z: &PhasePoint, direction: Direction) -> PhasePoint {
        leapfrog_step(self.target, self.metric, z, self.step_size, direction)
    }

    fn metric(&self) -> &Metric {
        self.metric
    }
}

/// A finite orbit traced in advance, replayed through [`Dynamics`].
///
/// Stepping from a tabulated state returns its tabulated neighbour, so every
/// state of the orbit generates exactly the same trajectories. Useful for
/// checking the trajectory samplers against brute-force enumeration.
#[derive(Debug, Clone)]
pub struct Orbit {
    metric: Metric,
    states: Vec<PhasePoint>,
    origin: usize,
}

impl Orbit {
    /// Traces `reach` steps either side of `z0`.
    pub fn trace<D: Dynamics>(dynamics: &D, z0: PhasePoint, reach: usize) -> Self {
        let mut backward = Vec::with_capacity(reach);
        let mut z = z0.clone();
        for _ in 0..reach {
            z = dynamics.step(&z, Direction::Backward);
            backward.push(z.clone());
        }
        backward.reverse();
        let mut states = backward;
        states.push(z0.clone());
        let mut z = z0;
        for _ in 0..reach {
            z = dynamics.step(&z, Direction::Forward);
            states.push(z.clone());
        }
        Self::from_states(dynamics.metric().clone(), states, reach)
    }

    /// Wraps explicit states; `origin` is the index of offset 0.
    pub fn from_states(metric: Metric, states: Vec<PhasePoint>, origin: usize) -> Self {
        assert!(origin < states.len(), "orbit origin out of range");
        Self {
            metric,
            states,
            origin,
        }
    }

    /// Offsets covered, from most backward to most forward.
    pub fn offsets(&self) -> std::ops::RangeInclusive<isize> {
        let low = -(self.origin as isize);
        low..=(self.states.len() - 1 - self.origin) as isize
    }

    pub fn state(&self, offset: isize) -> &PhasePoint {
        let i = self.origin as isize + offset;
        assert!(
            i >= 0 && (i as usize) < self.states.len(),
            "offset {offset} outside the orbit"
        );
        &self.states[i as usize]
    }

    /// Offset of a state of the orbit, compared bit for bit.
    pub fn offset_of(&self, z: &PhasePoint) -> Option<isize> {
        self.states
            .iter()
            .position(|s| s.q == z.q && s.p == z.p)
            .map(|i| i as isize - self.origin as isize)
    }
}

impl Dynamics for Orbit {
    fn step(&self, z: &PhasePoint, direction: Direction) -> PhasePoint {
        let at = self.offset_of(z).expect("state is not on the orbit");
        let next = match direction {
            Direction::Forward => at + 1,
            Direction::Backward => at - 1,
        };
        self.state(next).clone()
    }

    fn metric(&self) -> &Metric {
        &self.metric
    }
}
