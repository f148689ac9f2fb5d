//! Cross-checks of the direct steady-state solver against independent
//! oracles implemented here in test code: power iteration, closed-form
//! solutions for structured chains, and randomized property sweeps.

use edgepower::{
    expected_power, steady_state, SimRng, TransitionMatrix, RESIDUAL_TOLERANCE,
};
use proptest::prelude::*;

/// Independent oracle: repeatedly apply `v <- vP` from the uniform vector
/// until successive iterates differ by less than `tol` in L-infinity.
///
/// For an irreducible aperiodic chain this converges to the unique
/// stationary distribution at a geometric rate, with no shared code path
/// with the Gaussian-elimination solver under test.
fn power_iteration(matrix: &TransitionMatrix, tol: f64, max_iters: usize) -> Vec<f64> {
    let n = matrix.n();
    let mut v = vec![1.0 / n as f64; n];
    for _ in 0..max_iters {
        let mut next = vec![0.0; n];
        for (i, &vi) in v.iter().enumerate() {
            for (j, next_j) in next.iter_mut().enumerate() {
                *next_j += vi * matrix.get(i, j);
            }
        }
        let diff = v
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        v = next;
        if diff < tol {
            return v;
        }
    }
    panic!("power iteration did not converge to {tol} within {max_iters} iterations");
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0f64, f64::max)
}

fn residual_linf(pi: &[f64], matrix: &TransitionMatrix) -> f64 {
    let n = matrix.n();
    (0..n)
        .map(|j| {
            let image: f64 = (0..n).map(|i| pi[i] * matrix.get(i, j)).sum();
            (image - pi[j]).abs()
        })
        .fold(0.0f64, f64::max)
}

/// Draw a strictly positive row-stochastic 5x5 matrix. Strict positivity
/// guarantees irreducibility and aperiodicity, so both solver and oracle
/// are applicable.
fn random_dense_chain(rng: &mut SimRng) -> TransitionMatrix {
    let rows: Vec<Vec<f64>> = (0..5)
        .map(|_| {
            let raw: Vec<f64> = (0..5).map(|_| 0.01 + rng.uniform_f64()).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / total).collect()
        })
        .collect();
    TransitionMatrix::from_rows(rows).expect("normalized rows are stochastic")
}

#[test]
fn default_chain_agrees_with_power_iteration_to_1e12() {
    let matrix = TransitionMatrix::default_edge_chain();
    let solved = steady_state(&matrix).unwrap();
    let oracle = power_iteration(&matrix, 1e-15, 100_000);
    assert!(
        linf(&solved, &oracle) <= 1e-12,
        "solver vs power iteration L-inf = {:e}",
        linf(&solved, &oracle)
    );
}

#[test]
fn default_chain_matches_exact_rationals() {
    let matrix = TransitionMatrix::default_edge_chain();
    let solved = steady_state(&matrix).unwrap();
    let exact = [5.0 / 89.0, 10.0 / 89.0, 20.0 / 89.0, 28.0 / 89.0, 26.0 / 89.0];
    assert!(linf(&solved, &exact) <= 1e-14);
    assert!(residual_linf(&solved, &matrix) <= RESIDUAL_TOLERANCE);
    let watts = expected_power(&solved, &edgepower::DeviceProfile::default_edge()).unwrap();
    assert!((watts - 636.0 / 89.0).abs() <= 1e-12);
}

#[test]
fn thousand_random_dense_chains_agree_within_1e8() {
    let mut rng = SimRng::seed_from_u64(20_240_601);
    let mut worst = 0.0f64;
    for case in 0..1000 {
        let matrix = random_dense_chain(&mut rng);
        let solved = steady_state(&matrix)
            .unwrap_or_else(|e| panic!("case {case}: solver failed: {e}"));
        let oracle = power_iteration(&matrix, 1e-13, 100_000);
        let gap = linf(&solved, &oracle);
        worst = worst.max(gap);
        assert!(gap <= 1e-8, "case {case}: L-inf gap {gap:e} exceeds 1e-8");
    }
    // Not a requirement, just visibility when running with --nocapture.
    println!("worst solver/power-iteration gap over 1000 chains: {worst:e}");
}

#[test]
fn birth_death_chain_matches_detailed_balance_closed_form() {
    // Nearest-neighbor chain: up-probability 0.3, down-probability 0.2,
    // remainder on the diagonal. Detailed balance gives
    // pi_{i+1} = pi_i * (0.3 / 0.2), i.e. pi_i proportional to 1.5^i.
    let (up, down) = (0.3, 0.2);
    let mut rows = vec![vec![0.0; 5]; 5];
    for (i, row) in rows.iter_mut().enumerate() {
        if i + 1 < 5 {
            row[i + 1] = up;
        }
        if i > 0 {
            row[i - 1] = down;
        }
        row[i] = 1.0 - row.iter().sum::<f64>();
    }
    let matrix = TransitionMatrix::from_rows(rows).unwrap();
    let solved = steady_state(&matrix).unwrap();

    let ratio: f64 = up / down;
    let weights: Vec<f64> = (0..5).map(|i| ratio.powi(i as i32)).collect();
    let total: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.into_iter().map(|w| w / total).collect();
    assert!(linf(&solved, &exact) <= 1e-12);
}

#[test]
fn two_state_chains_match_flip_rate_closed_form() {
    // For P = [[1-a, a], [b, 1-b]] the stationary law is [b, a] / (a + b).
    for &(a, b) in &[(0.5, 0.5), (0.1, 0.9), (0.03, 0.2), (1.0, 1.0), (0.7, 0.01)] {
        let matrix = TransitionMatrix::from_rows(vec![
            vec![1.0 - a, a],
            vec![b, 1.0 - b],
        ])
        .unwrap();
        let solved = steady_state(&matrix).unwrap();
        let exact = [b / (a + b), a / (a + b)];
        assert!(
            linf(&solved, &exact) <= 1e-12,
            "a={a} b={b}: got {:?}",
            &solved[..]
        );
    }
}

/// proptest strategy for strictly positive row-stochastic 5x5 matrices.
fn dense_chain_strategy() -> impl Strategy<Value = TransitionMatrix> {
    prop::collection::vec(prop::collection::vec(0.01f64..1.0, 5), 5).prop_map(|raw| {
        let rows: Vec<Vec<f64>> = raw
            .into_iter()
            .map(|row| {
                let total: f64 = row.iter().sum();
                row.into_iter().map(|x| x / total).collect()
            })
            .collect();
        TransitionMatrix::from_rows(rows).expect("normalized rows are stochastic")
    })
}

proptest! {
    #[test]
    fn solver_output_is_a_distribution_with_tiny_residual(matrix in dense_chain_strategy()) {
        let solved = steady_state(&matrix).unwrap();
        let total: f64 = solved.iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        prop_assert!(solved.iter().all(|&p| (0.0..=1.0).contains(&p)));
        prop_assert!(residual_linf(&solved, &matrix) <= RESIDUAL_TOLERANCE);
    }

    #[test]
    fn perturbed_rows_stay_valid_and_solvable(
        matrix in dense_chain_strategy(),
        row in 0usize..5,
        col in 0usize..5,
        value in 0.0f64..=0.98,
    ) {
        let perturbed = matrix.perturb_row(row, col, value).unwrap();
        perturbed.validate().unwrap();
        let solved = steady_state(&perturbed);
        // A perturbation can in principle disconnect the chain only by
        // zeroing mass, which value > 0 with dense off-entries cannot do.
        prop_assert!(solved.is_ok());
    }
}
