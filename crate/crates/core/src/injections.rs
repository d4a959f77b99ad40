//! Sums over injective index assignments,
//! `Σ_{i_1,…,i_J distinct} Π_k f_k(i_k)`.
//!
//! Two evaluators are provided. The subset recursion is exact term by term and
//! costs O(len·2^J·J); the Möbius form rewrites the distinctness constraint as
//! an alternating sum over set partitions σ of the labels,
//! `Σ_σ μ(σ) Π_{B∈σ} Σ_i Π_{k∈B} f_k(i)` with `μ(σ) = Π_B (−1)^{|B|−1}(|B|−1)!`,
//! and costs O(len·2^J + Bell(J)).

use crate::partitions::enumerate_rgs;

/// Largest number of labels accepted by either evaluator.
pub const MAX_LABELS: usize = 12;

/// Subset recursion: `f(k, i)` is the factor of label `k` placed at index `i`.
pub fn injection_sum_dp<F: Fn(usize, usize) -> f64>(len: usize, labels: usize, f: F) -> f64 {
    assert!(labels <= MAX_LABELS);
    let full = (1usize << labels) - 1;
    let mut dp = vec![0.0; full + 1];
    dp[0] = 1.0;
    for i in 0..len {
        for mask in (0..full).rev() {
            let v = dp[mask];
            if v == 0.0 {
                continue;
            }
            for k in 0..labels {
                if mask & (1 << k) == 0 {
                    let x = f(k, i);
                    if x != 0.0 {
                        dp[mask | (1 << k)] += v * x;
                    }
                }
            }
        }
    }
    dp[full]
}

/// Möbius coefficients of all set partitions of `labels` items, each given as
/// the list of its blocks encoded as bitmasks.
pub fn moebius_terms(labels: usize) -> Vec<(f64, Vec<usize>)> {
    assert!(labels <= MAX_LABELS);
    if labels == 0 {
        return vec![(1.0, Vec::new())];
    }
    enumerate_rgs(labels)
        .into_iter()
        .map(|rgs| {
            let nb = rgs.iter().max().unwrap() + 1;
            let mut masks = vec![0usize; nb];
            for (k, &b) in rgs.iter().enumerate() {
                masks[b] |= 1 << k;
            }
            let mut mu = 1.0;
            for &m in &masks {
                let s = m.count_ones() as i32;
                for j in 1..s {
                    mu *= -(j as f64);
                }
            }
            (mu, masks)
        })
        .collect()
}

/// Möbius evaluator given the per-subset sums `subset_sum[mask] = Σ_i Π_{k∈mask} f_k(i)`.
pub fn injection_sum_moebius(terms: &[(f64, Vec<usize>)], subset_sum: &[f64]) -> f64 {
    let mut total = 0.0;
    for (mu, masks) in terms {
        let mut prod = *mu;
        for &m in masks {
            prod *= subset_sum[m];
        }
        total += prod;
    }
    total
}

/// Subset recursion over groups of interchangeable indices. Group `g` holds
/// `count` indices that all carry the factors `factors[k]`, so placing a label
/// set S inside it contributes `(count)_{|S|} Π_{k∈S} factors[k]`. Costs
/// O(groups·3^J) and involves no cancellation.
pub fn injection_sum_grouped(groups: &[(u64, Vec<f64>)], labels: usize) -> f64 {
    assert!(labels <= MAX_LABELS);
    let full = (1usize << labels) - 1;
    let mut dp = vec![0.0; full + 1];
    dp[0] = 1.0;
    let mut prod = vec![1.0; full + 1];
    for (count, factors) in groups {
        debug_assert_eq!(factors.len(), labels);
        if *count == 0 {
            continue;
        }
        for s in 1..=full {
            let low = s.trailing_zeros() as usize;
            prod[s] = prod[s & (s - 1)] * factors[low];
        }
        let mut ff = vec![1.0; labels + 1];
        for j in 1..=labels {
            ff[j] = ff[j - 1] * (*count as f64 - (j - 1) as f64).max(0.0);
        }
        let mut next = dp.clone();
        for mask in 0..full {
            let v = dp[mask];
            if v == 0.0 {
                continue;
            }
            let rest = full & !mask;
            let mut s = rest;
            while s > 0 {
                let c = ff[s.count_ones() as usize];
                if c != 0.0 && prod[s] != 0.0 {
                    next[mask | s] += v * c * prod[s];
                }
                s = (s - 1) & rest;
            }
        }
        dp = next;
    }
    dp[full]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute<F: Fn(usize, usize) -> f64>(len: usize, labels: usize, f: &F) -> f64 {
        fn rec<F: Fn(usize, usize) -> f64>(k: usize, used: &mut Vec<bool>, len: usize, labels: usize, f: &F) -> f64 {
            if k == labels {
                return 1.0;
            }
            let mut s = 0.0;
            for i in 0..len {
                if !used[i] {
                    used[i] = true;
                    s += f(k, i) * rec(k + 1, used, len, labels, f);
                    used[i] = false;
                }
            }
            s
        }
        rec(0, &mut vec![false; len], len, labels, f)
    }

    #[test]
    fn evaluators_agree_with_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let len = rng.random_range(1..7);
            let labels = rng.random_range(0..5);
            let vals: Vec<f64> = (0..len).map(|_| rng.random::<f64>()).collect();
            let exps: Vec<i32> = (0..labels).map(|_| rng.random_range(1..4)).collect();
            let f = |k: usize, i: usize| vals[i].powi(exps[k]);
            let b = brute(len, labels, &f);
            let d = injection_sum_dp(len, labels, f);
            let mut subset = vec![0.0; 1 << labels];
            for (mask, s) in subset.iter_mut().enumerate() {
                *s = (0..len)
                    .map(|i| (0..labels).filter(|k| mask & (1 << k) != 0).map(|k| f(k, i)).product::<f64>())
                    .sum();
            }
            let m = injection_sum_moebius(&moebius_terms(labels), &subset);
            assert!((b - d).abs() < 1e-13, "{} {}", b, d);
            assert!((b - m).abs() < 1e-12, "{} {}", b, m);
        }
    }

    #[test]
    fn grouped_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..50 {
            let ng = rng.random_range(1..4);
            let counts: Vec<u64> = (0..ng).map(|_| rng.random_range(0..4)).collect();
            let vals: Vec<f64> = (0..ng).map(|_| rng.random::<f64>()).collect();
            let labels = rng.random_range(0..5);
            let exps: Vec<i32> = (0..labels).map(|_| rng.random_range(1..4)).collect();
            let flat: Vec<f64> = counts.iter().zip(&vals).flat_map(|(&c, &v)| std::iter::repeat(v).take(c as usize)).collect();
            let b = brute(flat.len(), labels, &|k, i| flat[i].powi(exps[k]));
            let groups: Vec<(u64, Vec<f64>)> =
                counts.iter().zip(&vals).map(|(&c, &v)| (c, exps.iter().map(|&e| v.powi(e)).collect())).collect();
            let g = injection_sum_grouped(&groups, labels);
            assert!((b - g).abs() < 1e-13, "{} {}", b, g);
        }
    }

    #[test]
    fn moebius_coefficients_sum() {
        // Σ_σ μ(σ) over partitions of a J-set is 0 for J ≥ 2
        for j in 2..7 {
            let s: f64 = moebius_terms(j).iter().map(|t| t.0).sum();
            assert_eq!(s, 0.0);
        }
    }
}
