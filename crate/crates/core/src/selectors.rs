//! Classical baselines and the exhaustive oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::qubo::QuboModel;
use crate::suite::{Selection, TestSuite};

/// Zero costs are treated as this when ranking coverage per cost.
pub const COST_EPSILON: f64 = 1e-9;

/// Largest problem [`exhaustive_min`] will enumerate.
pub const EXHAUSTIVE_MAX_VARS: usize = 20;

fn ratio(gain: usize, cost: f64) -> f64 {
    gain as f64 / if cost > 0.0 { cost } else { COST_EPSILON }
}

/// Picks the candidate with the most newly covered statements per unit cost.
/// Returns `None` when no candidate adds coverage. Ties go to the lower index.
fn best_additional(
    suite: &TestSuite,
    remaining: &[usize],
    covered: &[bool],
) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize, f64)> = None;
    for (pos, &t) in remaining.iter().enumerate() {
        let gain = suite
            .coverage_row(t)
            .iter()
            .zip(covered)
            .filter(|(&hit, &done)| hit && !done)
            .count();
        if gain == 0 {
            continue;
        }
        let r = ratio(gain, suite.costs()[t]);
        match best {
            Some((_, bt, br)) if r < br || (r == br && t > bt) => {}
            _ => best = Some((pos, t, r)),
        }
    }
    best.map(|(pos, t, _)| (pos, t))
}

fn mark(suite: &TestSuite, test: usize, covered: &mut [bool]) {
    for (c, &hit) in covered.iter_mut().zip(suite.coverage_row(test)) {
        *c |= hit;
    }
}

/// Additional Greedy: repeatedly take the test with the best
/// new-coverage-per-cost ratio until nothing adds coverage.
pub fn additional_greedy(suite: &TestSuite) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..suite.n_tests()).collect();
    let mut covered = vec![false; suite.n_stmts()];
    let mut order = Vec::new();
    while let Some((pos, t)) = best_additional(suite, &remaining, &covered) {
        remaining.remove(pos);
        mark(suite, t, &mut covered);
        order.push(t);
    }
    order
}

/// Orders every candidate with the Additional Greedy rule. When coverage
/// saturates the covered set is reset and ranking continues over the rest;
/// candidates that cover nothing at all come last in index order.
pub fn greedy_full_order(suite: &TestSuite, candidates: &[usize]) -> Vec<usize> {
    let mut remaining: Vec<usize> = candidates.to_vec();
    remaining.sort_unstable();
    let mut covered = vec![false; suite.n_stmts()];
    let mut order = Vec::with_capacity(remaining.len());
    while !remaining.is_empty() {
        match best_additional(suite, &remaining, &covered) {
            Some((pos, t)) => {
                remaining.remove(pos);
                mark(suite, t, &mut covered);
                order.push(t);
            }
            None if covered.iter().any(|&c| c) => covered.iter_mut().for_each(|c| *c = false),
            None => {
                order.append(&mut remaining);
            }
        }
    }
    order
}

/// Single-bit-flip Metropolis annealing with a geometric schedule from the
/// largest single-flip |dE| at the random start down to 1e-3 of it.
/// Returns the best state seen.
pub fn simulated_annealing(
    model: &QuboModel,
    sweeps: usize,
    seed: u64,
) -> Result<(Selection, f64)> {
    if sweeps == 0 {
        return Err(Error::InvalidParameter("sweeps must be >= 1".into()));
    }
    let n = model.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
    // field[i] = Q_ii + 2 sum_{j != i} Q_ij x_j; flipping i changes E by
    // +field[i] (0 -> 1) or -field[i] (1 -> 0).
    let mut field: Vec<f64> = (0..n)
        .map(|i| {
            model.get(i, i)
                + 2.0
                    * (0..n)
                        .filter(|&j| j != i && x[j])
                        .map(|j| model.get(i, j))
                        .sum::<f64>()
        })
        .collect();
    let delta = |x: &[bool], field: &[f64], i: usize| if x[i] { -field[i] } else { field[i] };

    let t0 = {
        let m = (0..n)
            .map(|i| delta(&x, &field, i).abs())
            .fold(0.0, f64::max);
        if m > 0.0 {
            m
        } else {
            1.0
        }
    };
    let t_final = 1e-3 * t0;
    let cooling = if sweeps > 1 {
        (t_final / t0).powf(1.0 / (sweeps - 1) as f64)
    } else {
        1.0
    };

    let mut energy = model.energy(&x)?;
    let mut best = (x.clone(), energy);
    let mut temperature = t0;
    for _ in 0..sweeps {
        for i in 0..n {
            let d = delta(&x, &field, i);
            if d <= 0.0 || rng.random::<f64>() < (-d / temperature).exp() {
                let sign = if x[i] { -1.0 } else { 1.0 };
                x[i] = !x[i];
                energy += d;
                for (j, f) in field.iter_mut().enumerate() {
                    if j != i {
                        *f += sign * 2.0 * model.get(j, i);
                    }
                }
                if energy < best.1 {
                    best = (x.clone(), energy);
                }
            }
        }
        temperature *= cooling;
    }
    // Report the exact energy rather than the running sum.
    let selection = Selection::from_bits(best.0);
    let exact = model.energy(selection.as_bits())?;
    Ok((selection, exact))
}

/// Global minimum by Gray-code enumeration with incremental energy updates.
/// Ties (within rounding) go to the smallest index.
pub fn exhaustive_min(model: &QuboModel) -> Result<(Selection, f64)> {
    let n = model.n();
    if n > EXHAUSTIVE_MAX_VARS {
        return Err(Error::InvalidParameter(format!(
            "exhaustive search limited to {EXHAUSTIVE_MAX_VARS} variables, got {n}"
        )));
    }
    let scale: f64 = model.matrix().iter().map(|v| v.abs()).sum::<f64>() + model.offset.abs();
    let tie = 1e-12 * (1.0 + scale);
    let mut x = vec![false; n];
    let mut field: Vec<f64> = model.diagonal();
    let mut energy = model.offset;
    let mut best = (0u64, energy);
    let mut index = 0u64;
    for step in 1u64..(1u64 << n) {
        let i = step.trailing_zeros() as usize;
        let sign = if x[i] { -1.0 } else { 1.0 };
        energy += sign * field[i];
        x[i] = !x[i];
        index ^= 1 << i;
        for (j, f) in field.iter_mut().enumerate() {
            if j != i {
                *f += sign * 2.0 * model.get(j, i);
            }
        }
        if energy < best.1 - tie || (energy <= best.1 + tie && index < best.0) {
            best = (index, energy);
        }
    }
    let selection = Selection::from_index(n, best.0);
    let exact = model.energy(selection.as_bits())?;
    Ok((selection, exact))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qubo::{build_qubo, penalty_upper_bound};
    use crate::suite::synth_suite;
    use proptest::prelude::*;

    fn two_test_model() -> QuboModel {
        let suite = TestSuite::new(
            "shared",
            vec![vec![true], vec![true]],
            vec![2.0, 3.0],
            vec![true, false],
        )
        .unwrap();
        build_qubo(&suite, 0.5, 3.5).unwrap()
    }

    fn brute_min(model: &QuboModel) -> f64 {
        (0..1u64 << model.n())
            .map(|b| {
                model
                    .energy(Selection::from_index(model.n(), b).as_bits())
                    .unwrap()
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn greedy_examples() {
        // t0 covers {s0, s1} at cost 2, t1 covers {s0} at cost 1: both ratio 1.
        let s = TestSuite::new(
            "g",
            vec![vec![true, true], vec![true, false]],
            vec![2.0, 1.0],
            vec![false, false],
        )
        .unwrap();
        assert_eq!(additional_greedy(&s), vec![0]);

        let disjoint = TestSuite::new(
            "d",
            vec![
                vec![true, false, false],
                vec![false, true, false],
                vec![false, false, true],
            ],
            vec![1.0; 3],
            vec![false; 3],
        )
        .unwrap();
        assert_eq!(additional_greedy(&disjoint), vec![0, 1, 2]);

        let dominant = TestSuite::new(
            "one",
            vec![vec![true, false], vec![true, true], vec![false, true]],
            vec![1.0, 1.0, 1.0],
            vec![false; 3],
        )
        .unwrap();
        assert_eq!(additional_greedy(&dominant), vec![1]);
    }

    #[test]
    fn zero_cost_is_epsilon() {
        let s = TestSuite::new(
            "z",
            vec![vec![true, false], vec![false, true]],
            vec![0.0, 5.0],
            vec![false, false],
        )
        .unwrap();
        assert_eq!(additional_greedy(&s), vec![0, 1]);
    }

    #[test]
    fn full_order_resets_and_appends() {
        let s = TestSuite::new(
            "r",
            vec![vec![true, true], vec![true, false], vec![false, false]],
            vec![2.0, 1.0, 1.0],
            vec![false, true, false],
        )
        .unwrap();
        assert_eq!(greedy_full_order(&s, &[0, 1, 2]), vec![0, 1, 2]);
        assert_eq!(greedy_full_order(&s, &[2, 1]), vec![1, 2]);
        assert!(greedy_full_order(&s, &[]).is_empty());
    }

    #[test]
    fn annealing_examples() {
        let m = two_test_model();
        let mut exact = 0;
        for seed in 0..100 {
            let (sel, e) = simulated_annealing(&m, 100, seed).unwrap();
            assert!(e <= -2.0);
            assert_eq!(e, m.energy(sel.as_bits()).unwrap());
            exact += usize::from(e == -3.0);
        }
        assert!(exact >= 95);
        assert_eq!(
            simulated_annealing(&m, 1, 4).unwrap(),
            simulated_annealing(&m, 1, 4).unwrap()
        );
        let (_, e) = simulated_annealing(&QuboModel::zeros(4), 10, 0).unwrap();
        assert_eq!(e, 0.0);
        assert!(simulated_annealing(&m, 0, 0).is_err());
    }

    #[test]
    fn exhaustive_examples() {
        let (sel, e) = exhaustive_min(&two_test_model()).unwrap();
        assert_eq!(sel.to_string(), "01");
        assert_eq!(e, -3.0);
        let (sel, e) = exhaustive_min(&QuboModel::zeros(3)).unwrap();
        assert_eq!((sel.to_string().as_str(), e), ("000", 0.0));
        let sep = QuboModel::from_dense(2, vec![-1.0, 0.0, 0.0, -1.0], 0.0).unwrap();
        let (sel, e) = exhaustive_min(&sep).unwrap();
        assert_eq!((sel.to_string().as_str(), e), ("11", -2.0));
        assert!(exhaustive_min(&QuboModel::zeros(21)).is_err());
    }

    #[test]
    fn greedy_reaches_full_coverage_with_growing_prefixes() {
        for seed in 0..30 {
            let s = synth_suite(25, 40, 0.15, 0.2, seed).unwrap();
            let order = additional_greedy(&s);
            let mut prev = 0;
            for len in 1..=order.len() {
                let o = s
                    .objectives(&Selection::from_indices(25, &order[..len]))
                    .unwrap();
                assert!(o.stmts_covered > prev);
                prev = o.stmts_covered;
            }
            assert_eq!(prev, s.n_stmts());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn exhaustive_matches_brute_force(seed in 0u64..10_000, n in 1usize..=10) {
            let s = synth_suite(n, 8, 0.3, 0.3, seed).unwrap();
            let p = penalty_upper_bound(&s, 0.5).unwrap();
            let m = build_qubo(&s, 0.5, p).unwrap();
            let (_, e) = exhaustive_min(&m).unwrap();
            let b = brute_min(&m);
            prop_assert!((e - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }

        #[test]
        fn annealing_never_beats_exhaustive(seed in 0u64..10_000) {
            let s = synth_suite(12, 10, 0.3, 0.3, seed).unwrap();
            let m = build_qubo(&s, 0.5, penalty_upper_bound(&s, 0.5).unwrap()).unwrap();
            let (_, sa) = simulated_annealing(&m, 50, seed).unwrap();
            let (_, ex) = exhaustive_min(&m).unwrap();
            prop_assert!(sa >= ex - 1e-9 * (1.0 + ex.abs()));
        }
    }
}
