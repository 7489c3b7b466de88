//! Dynamic trajectories checked against brute-force enumeration on tabulated orbits.

use std::collections::HashMap;

use hmc_core::integrator::{Dynamics, Leapfrog, Orbit};
use hmc_core::math::log_sum_exp_slice;
use hmc_core::transition::{build_subtree, sample_dynamic};
use hmc_core::{Direction, DivergenceConfig, Metric, PhasePoint, StepSize, Target};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const MAX_DEPTH: usize = 3;

type Span = (isize, isize);

fn directions(bits: usize) -> Vec<Direction> {
    (0..MAX_DEPTH)
        .map(|k| if bits >> k & 1 == 1 { Direction::Forward } else { Direction::Backward })
        .collect()
}

/// Probability of every final trajectory when starting from `start`.
fn trajectory_law(orbit: &Orbit, start: isize) -> HashMap<Span, f64> {
    let mut law = HashMap::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for bits in 0..1 << MAX_DEPTH {
        let mut dirs = directions(bits).into_iter();
        let outcome = sample_dynamic(
            orbit,
            orbit.state(start).clone(),
            MAX_DEPTH,
            &DivergenceConfig::default(),
            &mut rng,
            |_| dirs.next().unwrap(),
        );
        let span = (
            orbit.offset_of(&outcome.trajectory.z_minus).unwrap(),
            orbit.offset_of(&outcome.trajectory.z_plus).unwrap(),
        );
        *law.entry(span).or_insert(0.0) += 1.0 / (1 << MAX_DEPTH) as f64;
    }
    law
}

fn leapfrog_orbit(target: &Target, metric: &Metric, q: Vec<f64>, p: Vec<f64>, eps: f64) -> Orbit {
    let z0 = PhasePoint::new(target, metric, q, p).unwrap();
    let dynamics = Leapfrog::new(target, metric, StepSize::new(eps).unwrap());
    Orbit::trace(&dynamics, z0, 2 << MAX_DEPTH)
}

fn orbits() -> Vec<Orbit> {
    let std1 = Target::std_normal(1).unwrap();
    let std2 = Target::std_normal(2).unwrap();
    let mvn = Target::mvn_precision(DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0])).unwrap();
    let beta = Target::beta_family(1.0).unwrap();
    let dense = Metric::dense(DMatrix::from_row_slice(2, 2, &[1.5, 0.4, 0.4, 0.8])).unwrap();
    vec![
        leapfrog_orbit(&std1, &Metric::unit(1), vec![1.0], vec![0.3], 0.8),
        leapfrog_orbit(&std1, &Metric::unit(1), vec![-0.4], vec![1.1], 0.45),
        leapfrog_orbit(&std2, &Metric::unit(2), vec![0.5, -1.0], vec![1.2, 0.4], 0.6),
        leapfrog_orbit(&mvn, &dense, vec![0.2, 0.9], vec![-0.7, 0.5], 0.5),
        leapfrog_orbit(&beta, &Metric::unit(1), vec![0.7], vec![-0.6], 0.3),
    ]
}

#[test]
fn every_member_sees_the_same_trajectory_law() {
    let mut lengths = std::collections::BTreeSet::new();
    for orbit in orbits() {
        for (span, p) in trajectory_law(&orbit, 0) {
            lengths.insert(span.1 - span.0 + 1);
            for member in span.0..=span.1 {
                let q = trajectory_law(&orbit, member).get(&span).copied().unwrap_or(0.0);
                assert!((q - p).abs() < 1e-12, "span {span:?}: {p} from 0, {q} from {member}");
            }
        }
    }
    // The cases must exercise early termination as well as the depth cap.
    assert!(lengths.len() > 2, "lengths seen: {lengths:?}");
}

#[test]
fn trajectory_summaries_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for orbit in orbits() {
        let z0 = orbit.state(0).clone();
        for bits in 0..1 << MAX_DEPTH {
            let mut dirs = directions(bits).into_iter();
            let out = sample_dynamic(&orbit, z0.clone(), MAX_DEPTH, &DivergenceConfig::default(), &mut rng, |_| {
                dirs.next().unwrap()
            });
            let tree = &out.trajectory;
            let lo = orbit.offset_of(&tree.z_minus).unwrap();
            let hi = orbit.offset_of(&tree.z_plus).unwrap();
            let states: Vec<&PhasePoint> = (lo..=hi).map(|k| orbit.state(k)).collect();
            let log_w: Vec<f64> = states.iter().map(|s| z0.energy - s.energy).collect();
            assert!((tree.log_weight - log_sum_exp_slice(&log_w)).abs() < 1e-12);
            assert_eq!(tree.n_states, states.len());
            for k in 0..z0.p.len() {
                let rho: f64 = states.iter().map(|s| s.p[k]).sum();
                assert!((tree.rho[k] - rho).abs() < 1e-12);
            }
            assert!(orbit.offset_of(&out.proposal).is_some_and(|k| (lo..=hi).contains(&k)));
        }
    }
}

#[test]
fn subtree_selection_follows_boltzmann_weights() {
    // A stiff direction stepped near its stability limit makes the energies
    // uneven while the slow direction keeps the tree from turning.
    let t = Target::mvn_precision(DMatrix::from_diagonal(&nalgebra::dvector![100.0, 0.01])).unwrap();
    let m = Metric::unit(2);
    let eps = StepSize::new(0.18).unwrap();
    let dynamics = Leapfrog::new(&t, &m, eps);
    let z0 = PhasePoint::new(&t, &m, vec![0.05, 0.0], vec![1.0, 3.0]).unwrap();
    let states: Vec<PhasePoint> = std::iter::successors(Some(z0.clone()), |z| Some(dynamics.step(z, Direction::Forward)))
        .skip(1)
        .take(1 << MAX_DEPTH)
        .collect();
    let log_w: Vec<f64> = states.iter().map(|s| z0.energy - s.energy).collect();
    let norm = log_sum_exp_slice(&log_w);
    let probs: Vec<f64> = log_w.iter().map(|w| (w - norm).exp()).collect();
    let spread = probs.iter().cloned().fold(0.0, f64::max) / probs.iter().cloned().fold(1.0, f64::min);
    assert!(spread > 1.2, "weights too even to be informative: {probs:?}");

    let trials = 100_000;
    let mut counts = vec![0usize; states.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..trials {
        let tree = build_subtree(&dynamics, &z0, MAX_DEPTH, Direction::Forward, z0.energy, &DivergenceConfig::default(), &mut rng);
        assert!(!tree.terminated);
        let k = states.iter().position(|s| s.q == tree.proposal.q).unwrap();
        counts[k] += 1;
    }
    for (count, p) in counts.iter().zip(&probs) {
        let expected = trials as f64 * p;
        let sd = (trials as f64 * p * (1.0 - p)).sqrt();
        assert!((*count as f64 - expected).abs() < 3.0 * sd, "{counts:?} vs {probs:?}");
    }
}

/// Synthetic orbit that never turns, with uneven energies.
fn drifting_orbit(reach: isize) -> Orbit {
    let states = (-reach..=reach)
        .map(|i| {
            let x = i as f64;
            PhasePoint::from_parts(vec![x], vec![1.0], 1.5 * (0.9 * x).sin() + 0.02 * x * x, vec![0.0], 0.5)
        })
        .collect();
    Orbit::from_states(Metric::unit(1), states, reach as usize)
}

#[test]
fn full_transition_is_in_detailed_balance() {
    let orbit = drifting_orbit(16);
    let starts: Vec<isize> = (-5..=5).collect();
    let trials = 200_000;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut kernel: HashMap<(isize, isize), f64> = HashMap::new();
    for &i in &starts {
        for _ in 0..trials {
            let out = sample_dynamic(&orbit, orbit.state(i).clone(), MAX_DEPTH, &DivergenceConfig::default(), &mut rng, |r| {
                if rand::Rng::random::<bool>(r) { Direction::Forward } else { Direction::Backward }
            });
            assert_eq!(out.trajectory.n_states, 1 << MAX_DEPTH);
            let j = orbit.offset_of(&out.proposal).unwrap();
            *kernel.entry((i, j)).or_insert(0.0) += 1.0 / trials as f64;
        }
    }
    let density = |k: isize| (-orbit.state(k).energy).exp();
    let mut compared = 0;
    for &i in &starts {
        for &j in &starts {
            if i >= j {
                continue;
            }
            let kij = kernel.get(&(i, j)).copied().unwrap_or(0.0);
            let kji = kernel.get(&(j, i)).copied().unwrap_or(0.0);
            let var = density(i).powi(2) * kij * (1.0 - kij) / trials as f64
                + density(j).powi(2) * kji * (1.0 - kji) / trials as f64;
            let gap = density(i) * kij - density(j) * kji;
            assert!(gap.abs() <= 4.0 * var.sqrt() + 1e-12, "pair ({i}, {j}): {gap} vs sd {}", var.sqrt());
            compared += usize::from(kij > 0.0);
        }
    }
    assert!(compared > 20);
}
