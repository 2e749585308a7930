//! The Selection Process over random permutations and its relatives: exact
//! enumeration, Monte Carlo, the coin-matrix reformulation, record
//! statistics, the square-root block counterexample, and the subtree
//! guessing expectation.
//!
//! Elements are 0-based values 0..n; `p[i][j]` is the probability that
//! element j is accepted if it arrives at step i (conditional on being a new
//! maximum among selections). Column-monotone inputs keep the expected number
//! of selections logarithmic; the block construction shows what breaks
//! without monotonicity.

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::rng::{derive_seed, rng_from_seed, RunRng};
use crate::stats::mean_stderr;
use crate::Result;

/// Cap for exact expectation by permutation enumeration (n! permutations).
pub const EXACT_ENUMERATION_CAP: usize = 7;

/// An n x n acceptance probability matrix with its column-monotonicity flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionInput {
    pub n: usize,
    /// p[i][j]: acceptance probability for element j arriving at step i.
    pub p: Vec<Vec<f64>>,
    /// True iff every column is non-increasing down the steps.
    pub monotone: bool,
}

impl SelectionInput {
    /// Validates shape and ranges and computes the monotone flag.
    pub fn new(p: Vec<Vec<f64>>) -> Result<Self> {
        let n = p.len();
        if n == 0 {
            return Err(Error::Validation("probability matrix is empty".into()));
        }
        for (i, row) in p.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Validation(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                    return Err(Error::Validation(format!(
                        "p[{i}][{j}] = {v} outside [0, 1]"
                    )));
                }
            }
        }
        let monotone = (0..n).all(|j| (0..n - 1).all(|i| p[i][j] >= p[i + 1][j]));
        Ok(SelectionInput { n, p, monotone })
    }

    /// All-ones input: selection degenerates to counting records.
    pub fn all_ones(n: usize) -> Result<Self> {
        Self::new(vec![vec![1.0; n]; n])
    }

    fn check_perm(&self, perm: &[usize]) -> Result<()> {
        if perm.len() != self.n {
            return Err(Error::Validation(format!(
                "permutation has length {}, expected {}",
                perm.len(),
                self.n
            )));
        }
        let mut seen = vec![false; self.n];
        for &v in perm {
            if v >= self.n || seen[v] {
                return Err(Error::Validation(format!(
                    "not a permutation of 0..{}",
                    self.n
                )));
            }
            seen[v] = true;
        }
        Ok(())
    }
}

/// Runs the Selection Process: element `perm[i]` arriving at step i is
/// selected iff it exceeds every previously selected element and a fresh
/// coin with probability p[i][perm[i]] lands 1. The result is strictly
/// increasing by construction.
pub fn run_selection(input: &SelectionInput, perm: &[usize], rng: &mut RunRng) -> Result<Vec<usize>> {
    input.check_perm(perm)?;
    let mut selected = Vec::new();
    let mut current_max: Option<usize> = None;
    for (i, &j) in perm.iter().enumerate() {
        if current_max.is_some_and(|m| j <= m) {
            continue;
        }
        if rng.gen::<f64>() < input.p[i][j] {
            selected.push(j);
            current_max = Some(j);
        }
    }
    Ok(selected)
}

/// Exact expected number of selections, averaging over all n! permutations
/// uniformly. Per permutation the process is a Markov chain over the current
/// maximum, so the expectation is a sum of reach-probability times
/// acceptance probability. Capped at n <= 7.
pub fn expected_selections_exact(input: &SelectionInput) -> Result<f64> {
    let n = input.n;
    if n > EXACT_ENUMERATION_CAP {
        return Err(Error::SizeCap {
            what: "exact selection enumeration",
            got: n,
            cap: EXACT_ENUMERATION_CAP,
        });
    }
    let mut total = 0.0f64;
    let mut permutations = 0usize;
    for perm in (0..n).permutations(n) {
        // state s in 0..=n: probability that the current maximum is s-1
        // (s = 0 means nothing selected yet).
        let mut state = vec![0.0f64; n + 1];
        state[0] = 1.0;
        let mut expected = 0.0f64;
        for (i, &j) in perm.iter().enumerate() {
            let accept = input.p[i][j];
            // Mass with current max < j can select j.
            let reach: f64 = state[..=j].iter().sum();
            expected += reach * accept;
            let moved = reach * accept;
            for s in 0..=j {
                state[s] *= 1.0 - accept;
            }
            state[j + 1] += moved;
        }
        total += expected;
        permutations += 1;
    }
    Ok(total / permutations as f64)
}

/// Monte Carlo estimate of the expected number of selections over uniform
/// permutations and coins. Returns (mean, stderr).
pub fn expected_selections_mc(
    input: &SelectionInput,
    trials: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    let mut counts = Vec::with_capacity(trials);
    let mut perm: Vec<usize> = (0..input.n).collect();
    for trial in 0..trials {
        let mut rng = rng_from_seed(derive_seed(seed, trial as u64));
        perm.shuffle(&mut rng);
        let selected = run_selection(input, &perm, &mut rng)?;
        counts.push(selected.len() as f64);
    }
    Ok(mean_stderr(&counts))
}

/// Histogram of selection-set sizes over Monte Carlo trials; index k holds
/// the number of trials that selected exactly k elements.
pub fn selection_size_histogram(
    input: &SelectionInput,
    trials: usize,
    seed: u64,
    use_coin_matrix: bool,
) -> Result<Vec<u64>> {
    if trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    let mut histogram = vec![0u64; input.n + 1];
    let mut perm: Vec<usize> = (0..input.n).collect();
    for trial in 0..trials {
        let mut rng = rng_from_seed(derive_seed(seed, trial as u64));
        perm.shuffle(&mut rng);
        let selected = if use_coin_matrix {
            coin_matrix_simulate(input, &perm, &mut rng)?
        } else {
            run_selection(input, &perm, &mut rng)?
        };
        histogram[selected.len()] += 1;
    }
    Ok(histogram)
}

/// The block construction that breaks column monotonicity: with b = sqrt(n)
/// blocks, rows of block k carry 1 exactly on the columns of block k. Under
/// a uniform arrival order it forces order sqrt(n) selections.
pub fn gen_block_counterexample(n: usize) -> Result<SelectionInput> {
    let b = (n as f64).sqrt().round() as usize;
    if b * b != n {
        return Err(Error::Config(format!("n = {n} is not a perfect square")));
    }
    let mut p = vec![vec![0.0; n]; n];
    for (i, row) in p.iter_mut().enumerate() {
        let block = i / b;
        for j in block * b..(block + 1) * b {
            row[j] = 1.0;
        }
    }
    let input = SelectionInput::new(p)?;
    debug_assert!(!input.monotone || n == 1);
    Ok(input)
}

/// Number of left-to-right maxima (records) in a permutation.
pub fn prefix_maxima_count(perm: &[usize]) -> usize {
    let mut count = 0;
    let mut best: Option<usize> = None;
    for &v in perm {
        if best.is_none_or(|b| v > b) {
            count += 1;
            best = Some(v);
        }
    }
    count
}

/// Bit matrix realization of a monotone input: row 0 of column j is 1 with
/// probability p[0][j], row i with probability p[i][j]/p[i-1][j] (0/0 is 0),
/// and once a 0 appears the rest of the column is 0. Element j is acceptable
/// at step i iff the column is all-ones through row i.
#[derive(Debug, Clone, PartialEq)]
pub struct CoinMatrix {
    pub bits: Vec<Vec<bool>>,
}

impl CoinMatrix {
    /// Samples a realization for a monotone input.
    pub fn sample(input: &SelectionInput, rng: &mut RunRng) -> Result<Self> {
        if !input.monotone {
            return Err(Error::Config(
                "coin matrix requires column-monotone probabilities".into(),
            ));
        }
        let n = input.n;
        let mut bits = vec![vec![false; n]; n];
        for j in 0..n {
            let mut alive = true;
            for i in 0..n {
                let ratio = if i == 0 {
                    input.p[0][j]
                } else if input.p[i - 1][j] > 0.0 {
                    input.p[i][j] / input.p[i - 1][j]
                } else {
                    0.0
                };
                if alive && rng.gen::<f64>() < ratio {
                    bits[i][j] = true;
                } else {
                    alive = false;
                }
            }
        }
        Ok(CoinMatrix { bits })
    }
}

/// Selection via a sampled [`CoinMatrix`]: element perm[i] is selected iff
/// its column is all-ones through row i and it exceeds every previous
/// selection. Distributionally identical to [`run_selection`].
pub fn coin_matrix_simulate(
    input: &SelectionInput,
    perm: &[usize],
    rng: &mut RunRng,
) -> Result<Vec<usize>> {
    input.check_perm(perm)?;
    let matrix = CoinMatrix::sample(input, rng)?;
    let mut selected = Vec::new();
    let mut current_max: Option<usize> = None;
    for (i, &j) in perm.iter().enumerate() {
        if current_max.is_some_and(|m| j <= m) {
            continue;
        }
        if matrix.bits[i][j] {
            selected.push(j);
            current_max = Some(j);
        }
    }
    Ok(selected)
}

/// Monte Carlo estimate of how far a uniformly guessed downward path agrees
/// with the hidden one. A depth-`depth` binary tree is revealed at its root;
/// the hidden root-to-leaf path and an independent guess each descend
/// depth-1 levels; a trial scores the level of the first disagreement
/// (0 when the guess matches the whole way down). The mean converges to
/// sum_i i/2^i = 2 as depth grows, truncated geometrically at the leaves.
pub fn subtree_guess_expectation(depth: usize, trials: usize, seed: u64) -> Result<f64> {
    if depth < 2 {
        return Err(Error::Config(format!("need depth >= 2, got {depth}")));
    }
    if trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    let levels = depth - 1;
    let mut rng = rng_from_seed(seed);
    let mut total = 0.0f64;
    for _ in 0..trials {
        let mut score = 0usize;
        for level in 1..=levels {
            let actual: bool = rng.gen();
            let guess: bool = rng.gen();
            if actual != guess {
                score = level;
                break;
            }
        }
        total += score as f64;
    }
    Ok(total / trials as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::harmonic;

    #[test]
    fn all_accept_selects_increasing_prefixes_only() {
        let input = SelectionInput::all_ones(3).unwrap();
        let mut rng = rng_from_seed(0);
        assert_eq!(
            run_selection(&input, &[0, 1, 2], &mut rng).unwrap(),
            vec![0, 1, 2]
        );
        assert_eq!(run_selection(&input, &[2, 0, 1], &mut rng).unwrap(), vec![2]);
    }

    #[test]
    fn zero_probabilities_select_nothing() {
        let input = SelectionInput::new(vec![vec![0.0; 3]; 3]).unwrap();
        let mut rng = rng_from_seed(0);
        for perm in [[0usize, 1, 2], [2, 1, 0], [1, 2, 0]] {
            assert!(run_selection(&input, &perm, &mut rng).unwrap().is_empty());
        }
    }

    #[test]
    fn selections_are_strictly_increasing() {
        let mut rng = rng_from_seed(3);
        for n in [2usize, 5, 9] {
            let p: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..n).map(|_| rng.gen::<f64>()).collect())
                .collect();
            let input = SelectionInput::new(p).unwrap();
            let mut perm: Vec<usize> = (0..n).collect();
            for _ in 0..50 {
                perm.shuffle(&mut rng);
                let sel = run_selection(&input, &perm, &mut rng).unwrap();
                assert!(sel.windows(2).all(|w| w[0] < w[1]));
            }
        }
    }

    #[test]
    fn invalid_permutation_is_rejected() {
        let input = SelectionInput::all_ones(3).unwrap();
        let mut rng = rng_from_seed(0);
        assert!(run_selection(&input, &[0, 0, 2], &mut rng).is_err());
        assert!(run_selection(&input, &[0, 1], &mut rng).is_err());
    }

    #[test]
    fn exact_expectation_matches_harmonic_for_all_ones() {
        for n in 1..=EXACT_ENUMERATION_CAP {
            let input = SelectionInput::all_ones(n).unwrap();
            let exact = expected_selections_exact(&input).unwrap();
            assert!(
                (exact - harmonic(n)).abs() < 1e-12,
                "n={n}: {exact} vs {}",
                harmonic(n)
            );
        }
        assert!(expected_selections_exact(&SelectionInput::all_ones(8).unwrap()).is_err());
    }

    #[test]
    fn exact_expectation_of_zero_input_is_zero() {
        let input = SelectionInput::new(vec![vec![0.0; 4]; 4]).unwrap();
        assert_eq!(expected_selections_exact(&input).unwrap(), 0.0);
    }

    #[test]
    fn mc_matches_exact_on_small_inputs() {
        let mut rng = rng_from_seed(0x5E1);
        for n in 3..=5usize {
            // Random monotone input: per-column sorted descending.
            let p: Vec<Vec<f64>> = {
                let mut cols: Vec<Vec<f64>> = (0..n)
                    .map(|_| {
                        let mut c: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
                        c.sort_by(|a, b| b.total_cmp(a));
                        c
                    })
                    .collect();
                (0..n)
                    .map(|i| (0..n).map(|j| std::mem::take(&mut cols[j][i])).collect())
                    .collect()
            };
            let input = SelectionInput::new(p).unwrap();
            assert!(input.monotone);
            let exact = expected_selections_exact(&input).unwrap();
            let (mean, stderr) = expected_selections_mc(&input, 40_000, 7).unwrap();
            assert!(
                (mean - exact).abs() <= 3.0 * stderr.max(1e-4),
                "n={n}: mc {mean} vs exact {exact} (stderr {stderr})"
            );
        }
    }

    #[test]
    fn mc_is_deterministic_per_seed() {
        let input = SelectionInput::all_ones(6).unwrap();
        let a = expected_selections_mc(&input, 500, 9).unwrap();
        let b = expected_selections_mc(&input, 500, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn block_counterexample_layout() {
        let input = gen_block_counterexample(4).unwrap();
        assert!(!input.monotone);
        assert_eq!(input.p[0], vec![1.0, 1.0, 0.0, 0.0]);
        assert_eq!(input.p[1], vec![1.0, 1.0, 0.0, 0.0]);
        assert_eq!(input.p[2], vec![0.0, 0.0, 1.0, 1.0]);
        assert_eq!(input.p[3], vec![0.0, 0.0, 1.0, 1.0]);
        assert!(gen_block_counterexample(5).is_err());
    }

    #[test]
    fn block_counterexample_selects_many() {
        let input = gen_block_counterexample(100).unwrap();
        let (mean, _) = expected_selections_mc(&input, 10_000, 11).unwrap();
        assert!(mean >= 6.0, "block mean {mean} below the sqrt regime");
    }

    #[test]
    fn all_ones_mc_mean_at_n_100_is_harmonic() {
        let input = SelectionInput::all_ones(100).unwrap();
        let (mean, _) = expected_selections_mc(&input, 100_000, 0x64).unwrap();
        assert!(
            (mean - harmonic(100)).abs() < 0.02,
            "mean {mean} vs H_100 = {}",
            harmonic(100)
        );
    }

    /// Regression tripwire for the logarithmic regime: fuzzed monotone
    /// inputs stay under a generous 12 + 2 ln n envelope.
    #[test]
    fn fuzzed_monotone_inputs_stay_logarithmic() {
        for n in [16usize, 64, 256] {
            let envelope = 12.0 + 2.0 * (n as f64).ln();
            for input_seed in 0..5u64 {
                let input = crate::experiment::random_monotone_input(n, 0x3A0 + input_seed);
                let (mean, _) = expected_selections_mc(&input, 2_000, input_seed).unwrap();
                assert!(
                    mean <= envelope,
                    "n={n} seed={input_seed}: mean {mean} above {envelope}"
                );
            }
        }
    }

    #[test]
    fn prefix_maxima_reference_cases() {
        assert_eq!(prefix_maxima_count(&[0, 1, 2]), 3);
        assert_eq!(prefix_maxima_count(&[2, 0, 1]), 1);
        assert_eq!(prefix_maxima_count(&[]), 0);
    }

    #[test]
    fn prefix_maxima_mean_is_harmonic() {
        let mut rng = rng_from_seed(0xAB);
        let n = 100;
        let trials = 100_000;
        let mut perm: Vec<usize> = (0..n).collect();
        let mut counts = Vec::with_capacity(trials);
        for _ in 0..trials {
            perm.shuffle(&mut rng);
            counts.push(prefix_maxima_count(&perm) as f64);
        }
        let (mean, _) = mean_stderr(&counts);
        assert!(
            (mean - harmonic(n)).abs() < 0.02,
            "mean {mean} vs H_100 = {}",
            harmonic(n)
        );
    }

    #[test]
    fn coin_matrix_columns_zero_fill() {
        let mut rng = rng_from_seed(1);
        let p = vec![
            vec![0.9, 0.5, 0.0],
            vec![0.5, 0.25, 0.0],
            vec![0.1, 0.0, 0.0],
        ];
        let input = SelectionInput::new(p).unwrap();
        for _ in 0..200 {
            let m = CoinMatrix::sample(&input, &mut rng).unwrap();
            for j in 0..3 {
                let mut dead = false;
                for i in 0..3 {
                    if dead {
                        assert!(!m.bits[i][j]);
                    }
                    dead |= !m.bits[i][j];
                }
            }
        }
    }

    #[test]
    fn coin_matrix_rejects_non_monotone() {
        let input = gen_block_counterexample(4).unwrap();
        let mut rng = rng_from_seed(0);
        assert!(coin_matrix_simulate(&input, &[0, 1, 2, 3], &mut rng).is_err());
    }

    #[test]
    fn coin_matrix_all_ones_reduces_to_records() {
        let input = SelectionInput::all_ones(5).unwrap();
        let mut rng = rng_from_seed(7);
        let mut perm: Vec<usize> = (0..5).collect();
        for _ in 0..100 {
            perm.shuffle(&mut rng);
            let sel = coin_matrix_simulate(&input, &perm, &mut rng).unwrap();
            assert_eq!(sel.len(), prefix_maxima_count(&perm));
        }
    }

    #[test]
    fn coin_matrix_mean_matches_direct_simulation() {
        let p = vec![
            vec![1.0, 0.8, 0.6, 0.9],
            vec![0.7, 0.8, 0.5, 0.4],
            vec![0.7, 0.2, 0.5, 0.4],
            vec![0.1, 0.2, 0.0, 0.4],
        ];
        let input = SelectionInput::new(p).unwrap();
        assert!(input.monotone);
        let direct = selection_size_histogram(&input, 60_000, 3, false).unwrap();
        let via_matrix = selection_size_histogram(&input, 60_000, 4, true).unwrap();
        let mean = |h: &[u64]| {
            let total: u64 = h.iter().sum();
            h.iter().enumerate().map(|(k, &c)| k as f64 * c as f64).sum::<f64>() / total as f64
        };
        assert!((mean(&direct) - mean(&via_matrix)).abs() < 0.02);
    }

    #[test]
    fn subtree_guess_depth_two_is_half() {
        // One remaining level: the guess disagrees at level 1 with
        // probability 1/2, scoring 1; otherwise 0.
        let mean = subtree_guess_expectation(2, 200_000, 5).unwrap();
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn subtree_guess_is_deterministic() {
        let a = subtree_guess_expectation(10, 1000, 3).unwrap();
        let b = subtree_guess_expectation(10, 1000, 3).unwrap();
        assert_eq!(a, b);
        assert!(subtree_guess_expectation(1, 10, 0).is_err());
    }
}
