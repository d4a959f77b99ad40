//! Set partitions of `{1..n}`, the coagulation operator, paint-boxes and
//! mass partitions.
//!
//! Internally indices are 0-based; the text encoding (`"1,2,4|3"`) and all
//! external formats are 1-based.

use std::collections::HashMap;
use std::fmt;
use std::hash::Hash;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{ensure, Error, Result};

/// Largest ground set accepted by [`enumerate_partitions`] (Bell(7) = 877).
pub const ENUMERATION_CAP: usize = 7;

/// Tolerance on `sum(weights) <= 1` and on monotonicity of mass partitions.
pub const MASS_TOL: f64 = 1e-12;

/// A partition of `{0..n-1}` with blocks ordered by least element.
///
/// `lookup[i]` is the index of the block containing `i`; because blocks are
/// ordered by least element it is a restricted growth string and serves as the
/// canonical equality witness.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition {
    lookup: Vec<usize>,
    blocks: Vec<Vec<usize>>,
}

impl Partition {
    /// Builds a partition from arbitrary 0-based blocks. Blocks must be
    /// non-empty, disjoint and cover `0..n`.
    pub fn new(n: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        ensure!(n >= 1, Partition, "ground set must be non-empty");
        let mut owner = vec![usize::MAX; n];
        for (k, b) in blocks.iter().enumerate() {
            ensure!(!b.is_empty(), Partition, "empty block");
            for &i in b {
                ensure!(i < n, Partition, "index {} outside 1..{}", i + 1, n);
                ensure!(owner[i] == usize::MAX, Partition, "index {} appears twice", i + 1);
                owner[i] = k;
            }
        }
        ensure!(
            owner.iter().all(|&o| o != usize::MAX),
            Partition,
            "blocks do not cover 1..{}",
            n
        );
        Ok(Self::from_labels(&owner))
    }

    /// Children sharing a label share a block.
    pub fn from_labels<T: Copy + Eq + Hash>(labels: &[T]) -> Self {
        let n = labels.len();
        let mut lookup = Vec::with_capacity(n);
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        if n <= 32 {
            let mut seen: Vec<T> = Vec::with_capacity(n);
            for (i, l) in labels.iter().enumerate() {
                match seen.iter().position(|s| s == l) {
                    Some(k) => {
                        lookup.push(k);
                        blocks[k].push(i);
                    }
                    None => {
                        lookup.push(seen.len());
                        seen.push(*l);
                        blocks.push(vec![i]);
                    }
                }
            }
        } else {
            let mut seen: HashMap<T, usize> = HashMap::with_capacity(n);
            for (i, l) in labels.iter().enumerate() {
                let next = blocks.len();
                let k = *seen.entry(*l).or_insert(next);
                if k == next {
                    blocks.push(Vec::new());
                }
                lookup.push(k);
                blocks[k].push(i);
            }
        }
        Partition { lookup, blocks }
    }

    /// The partition into singletons, 0ₙ.
    pub fn singletons(n: usize) -> Self {
        Partition { lookup: (0..n).collect(), blocks: (0..n).map(|i| vec![i]).collect() }
    }

    /// The one-block partition {1..n}.
    pub fn single_block(n: usize) -> Self {
        Partition { lookup: vec![0; n], blocks: vec![(0..n).collect()] }
    }

    pub fn n(&self) -> usize {
        self.lookup.len()
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// 0-based blocks ordered by least element.
    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    /// Block index of element `i` (0-based).
    pub fn block_of(&self, i: usize) -> usize {
        self.lookup[i]
    }

    pub fn lookup(&self) -> &[usize] {
        &self.lookup
    }

    pub fn is_singletons(&self) -> bool {
        self.blocks.len() == self.lookup.len()
    }

    /// Exactly one block of size two, all others singletons.
    pub fn is_single_pair_merger(&self) -> bool {
        self.blocks.len() + 1 == self.lookup.len()
    }

    /// If exactly one block is non-singleton, its size.
    pub fn simple_merger_size(&self) -> Option<usize> {
        let mut big = self.blocks.iter().filter(|b| b.len() > 1);
        match (big.next(), big.next()) {
            (Some(b), None) => Some(b.len()),
            _ => None,
        }
    }

    /// Block cardinalities, non-increasing.
    pub fn block_sizes_desc(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.blocks.iter().map(Vec::len).collect();
        s.sort_unstable_by(|a, b| b.cmp(a));
        s
    }

    /// Intersects every block with `{1..m}` and drops empties.
    pub fn restrict(&self, m: usize) -> Result<Partition> {
        ensure!(m >= 1 && m <= self.n(), Partition, "cannot restrict a partition of [{}] to [{}]", self.n(), m);
        Ok(Partition::from_labels(&self.lookup[..m]))
    }

    /// Relabels elements: element `i` of the result sits where `perm[i]` sat.
    pub fn permute(&self, perm: &[usize]) -> Partition {
        let labels: Vec<usize> = perm.iter().map(|&p| self.lookup[p]).collect();
        Partition::from_labels(&labels)
    }
}

/// Coag(π, π′): the k-th raw block is the union of the blocks of `pi`
/// indexed by the k-th block of `pi_prime`.
pub fn coagulate(pi: &Partition, pi_prime: &Partition) -> Result<Partition> {
    ensure!(
        pi.num_blocks() <= pi_prime.n(),
        Partition,
        "inadmissible coagulation: {} blocks but pi' is a partition of [{}]",
        pi.num_blocks(),
        pi_prime.n()
    );
    let labels: Vec<usize> = pi.lookup.iter().map(|&b| pi_prime.lookup[b]).collect();
    Ok(Partition::from_labels(&labels))
}

/// Partition of the children by shared parent.
pub fn group_by_parent<T: Copy + Eq + Hash>(parent_of: &[T]) -> Partition {
    Partition::from_labels(parent_of)
}

/// All partitions of `{1..n}` in restricted-growth-string order.
pub fn enumerate_partitions(n: usize) -> Result<Vec<Partition>> {
    ensure!(n >= 1, Cap, "n must be positive");
    ensure!(n <= ENUMERATION_CAP, Cap, "enumeration capped at n <= {}, got {}", ENUMERATION_CAP, n);
    Ok(enumerate_rgs(n).into_iter().map(|rgs| Partition::from_labels(&rgs)).collect())
}

/// Restricted growth strings of length `n`. No cap; callers are responsible
/// for the Bell-number blow-up.
pub(crate) fn enumerate_rgs(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; n];
    fn rec(i: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == cur.len() {
            out.push(cur.clone());
            return;
        }
        for v in 0..=max + 1 {
            cur[i] = v;
            rec(i + 1, max.max(v), cur, out);
        }
    }
    if n == 0 {
        return out;
    }
    rec(1, 0, &mut cur, &mut out);
    out
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, b) in self.blocks.iter().enumerate() {
            if k > 0 {
                f.write_str("|")?;
            }
            for (j, i) in b.iter().enumerate() {
                if j > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{}", i + 1)?;
            }
        }
        Ok(())
    }
}

impl FromStr for Partition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut blocks = Vec::new();
        let mut n = 0;
        for part in s.trim().split('|') {
            let mut b = Vec::new();
            for tok in part.split(',') {
                let i: usize = tok
                    .trim()
                    .parse()
                    .map_err(|_| Error::Partition(format!("bad index {:?} in {:?}", tok, s)))?;
                ensure!(i >= 1, Partition, "indices are 1-based, got 0 in {:?}", s);
                n = n.max(i);
                b.push(i - 1);
            }
            blocks.push(b);
        }
        Partition::new(n, blocks)
    }
}

impl Serialize for Partition {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Partition {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Non-increasing weights with total at most one; the deficit is dust.
#[derive(Clone, Debug, PartialEq)]
pub struct MassPartition {
    weights: Vec<f64>,
}

impl MassPartition {
    /// Validates and normalises. Violations of monotonicity or of the unit
    /// total beyond [`MASS_TOL`] are rejected; smaller ones are clamped.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        let mut w = weights;
        for (i, x) in w.iter().enumerate() {
            ensure!(x.is_finite(), MassPartition, "weight {} is not finite", i + 1);
            ensure!(*x >= -MASS_TOL, MassPartition, "negative weight {}", x);
        }
        for i in 1..w.len() {
            ensure!(
                w[i] <= w[i - 1] + MASS_TOL,
                MassPartition,
                "weights must be non-increasing ({} then {})",
                w[i - 1],
                w[i]
            );
        }
        for i in 0..w.len() {
            w[i] = w[i].max(0.0);
            if i > 0 && w[i] > w[i - 1] {
                w[i] = w[i - 1];
            }
        }
        let total: f64 = w.iter().sum();
        ensure!(total <= 1.0 + MASS_TOL, MassPartition, "weights sum to {} > 1", total);
        if total > 1.0 {
            for x in &mut w {
                *x /= total;
            }
        }
        while w.last() == Some(&0.0) {
            w.pop();
        }
        Ok(MassPartition { weights: w })
    }

    /// Sorts arbitrary non-negative weights first.
    pub fn from_unsorted(mut weights: Vec<f64>) -> Result<Self> {
        weights.sort_by(|a, b| b.total_cmp(a));
        Self::new(weights)
    }

    /// Positive weights, non-increasing.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dust(&self) -> f64 {
        (1.0 - self.weights.iter().sum::<f64>()).max(0.0)
    }

    pub fn sum_sq(&self) -> f64 {
        self.weights.iter().map(|x| x * x).sum()
    }
}

/// Paint-box partition of `{1..n}` directed by `rho`. Weight intervals are
/// laid out from 0; the dust is the suffix `[1 - dust, 1)`.
pub fn paintbox<R: Rng + ?Sized>(rho: &MassPartition, n: usize, rng: &mut R) -> Partition {
    let w = rho.weights();
    let mut cum = Vec::with_capacity(w.len());
    let mut acc = 0.0;
    for x in w {
        acc += x;
        cum.push(acc);
    }
    let labels: Vec<usize> = (0..n)
        .map(|i| {
            let u: f64 = rng.random();
            let k = cum.partition_point(|&c| c <= u);
            if k < w.len() {
                k
            } else {
                // dust: a fresh label per child
                w.len() + i
            }
        })
        .collect();
    Partition::from_labels(&labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(s: &str) -> Partition {
        s.parse().unwrap()
    }

    #[test]
    fn coagulation_examples() {
        assert_eq!(coagulate(&Partition::singletons(4), &p("1,3|2|4")).unwrap(), p("1,3|2|4"));
        assert_eq!(coagulate(&p("1,2|3|4"), &Partition::singletons(3)).unwrap(), p("1,2|3|4"));
        assert_eq!(coagulate(&p("1,2|3|4"), &p("1,3|2")).unwrap(), p("1,2,4|3"));
        assert!(coagulate(&p("1|2|3"), &p("1,2")).is_err());
    }

    #[test]
    fn restriction_examples() {
        assert_eq!(p("1,3|2,4").restrict(2).unwrap(), p("1|2"));
        assert_eq!(Partition::singletons(5).restrict(3).unwrap(), Partition::singletons(3));
        assert_eq!(p("1,2,4|3").restrict(3).unwrap(), p("1,2|3"));
        assert!(p("1|2").restrict(3).is_err());
    }

    #[test]
    fn block_sizes() {
        assert_eq!(Partition::singletons(5).block_sizes_desc(), vec![1; 5]);
        assert_eq!(p("1,2,4|3").block_sizes_desc(), vec![3, 1]);
        assert_eq!(p("1,4|2,5|3").block_sizes_desc(), vec![2, 2, 1]);
    }

    #[test]
    fn grouping() {
        assert_eq!(group_by_parent(&[7, 7, 7]), p("1,2,3"));
        assert_eq!(group_by_parent(&[1, 2, 3]), Partition::singletons(3));
        assert_eq!(group_by_parent(&[5, 2, 5, 9]), p("1,3|2|4"));
        let long: Vec<u32> = (0..100).map(|i| i % 7).collect();
        let g = group_by_parent(&long);
        assert_eq!(g.num_blocks(), 7);
        assert_eq!(g.block_of(99), 99 % 7);
    }

    #[test]
    fn bell_numbers() {
        let bell = [1, 2, 5, 15, 52, 203, 877];
        for (i, &b) in bell.iter().enumerate() {
            let all = enumerate_partitions(i + 1).unwrap();
            assert_eq!(all.len(), b);
            let mut dedup = all.clone();
            dedup.sort();
            dedup.dedup();
            assert_eq!(dedup.len(), b);
        }
        assert!(enumerate_partitions(8).is_err());
        assert_eq!(enumerate_partitions(1).unwrap(), vec![p("1")]);
    }

    #[test]
    fn text_round_trip_and_rejects() {
        for s in ["1", "1,2,4|3", "1|2|3", "1,5|2,3|4"] {
            assert_eq!(p(s).to_string(), s);
        }
        // non-canonical order is normalised
        assert_eq!(p("3|2,1").to_string(), "1,2|3");
        assert!("1,1".parse::<Partition>().is_err());
        assert!("1,3".parse::<Partition>().is_err());
        assert!("0,1".parse::<Partition>().is_err());
    }

    #[test]
    fn mass_partition_validation() {
        assert!(MassPartition::new(vec![0.3, 0.5]).is_err());
        assert!(MassPartition::new(vec![0.7, 0.5]).is_err());
        let m = MassPartition::new(vec![0.5, 0.3]).unwrap();
        assert!((m.dust() - 0.2).abs() < 1e-15);
        let m = MassPartition::new(vec![0.5, 0.5 + 1e-13]).unwrap();
        assert!(m.weights()[1] <= m.weights()[0]);
        assert_eq!(MassPartition::new(vec![0.5, 0.0]).unwrap().weights().len(), 1);
    }

    #[test]
    fn paintbox_degenerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let full = MassPartition::new(vec![1.0]).unwrap();
        let dust = MassPartition::new(vec![]).unwrap();
        for n in 1..8 {
            assert_eq!(paintbox(&full, n, &mut rng), Partition::single_block(n));
            assert_eq!(paintbox(&dust, n, &mut rng), Partition::singletons(n));
        }
    }

    #[test]
    fn paintbox_pair_probability() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for w in [vec![0.5, 0.5], vec![0.5, 0.3], vec![0.2, 0.2, 0.1]] {
            let rho = MassPartition::new(w).unwrap();
            let reps = 1_000_000;
            let hits = (0..reps).filter(|_| paintbox(&rho, 2, &mut rng).num_blocks() == 1).count();
            let ph = hits as f64 / reps as f64;
            let target = rho.sum_sq();
            let se = (target * (1.0 - target) / reps as f64).sqrt();
            assert!((ph - target).abs() < 3.0 * se, "{} vs {}", ph, target);
        }
    }

    #[test]
    fn paintbox_exchangeable() {
        // Relabelled uniforms: the shape law of the permuted partition must
        // match the unpermuted one.
        let rho = MassPartition::new(vec![0.4, 0.25, 0.1]).unwrap();
        let all = enumerate_partitions(4).unwrap();
        let perm = [2, 0, 3, 1];
        let reps = 100_000;
        let mut a = HashMap::new();
        let mut b = HashMap::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..reps {
            *a.entry(paintbox(&rho, 4, &mut rng)).or_insert(0usize) += 1;
            *b.entry(paintbox(&rho, 4, &mut rng).permute(&perm)).or_insert(0usize) += 1;
        }
        for q in &all {
            let pa = *a.get(q).unwrap_or(&0) as f64 / reps as f64;
            let pb = *b.get(q).unwrap_or(&0) as f64 / reps as f64;
            let se = ((pa * (1.0 - pa) + pb * (1.0 - pb)) / reps as f64).sqrt();
            assert!((pa - pb).abs() <= 4.0 * se + 1e-12, "{}: {} vs {}", q, pa, pb);
        }
    }

    #[test]
    fn lattice_consistency_brute_force() {
        // restrict(Coag(pi, pi'), m) == Coag(restrict(pi, m), restrict(pi', |restrict(pi,m)|))
        // when the blocks of pi|m are exactly the first blocks of pi.
        for n in 1..=4 {
            for pi in enumerate_partitions(n).unwrap() {
                for pp in enumerate_partitions(pi.num_blocks()).unwrap() {
                    let c = coagulate(&pi, &pp).unwrap();
                    assert_eq!(c.n(), n);
                    for m in 1..=n {
                        let rp = pi.restrict(m).unwrap();
                        let rpp = pp.restrict(rp.num_blocks()).unwrap();
                        assert_eq!(c.restrict(m).unwrap(), coagulate(&rp, &rpp).unwrap());
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn coag_identities(labels in proptest::collection::vec(0usize..4, 1..9)) {
            let pi = Partition::from_labels(&labels);
            let n = pi.n();
            prop_assert_eq!(coagulate(&Partition::singletons(n), &pi).unwrap(), pi.clone());
            prop_assert_eq!(coagulate(&pi, &Partition::singletons(pi.num_blocks())).unwrap(), pi.clone());
            let sizes = pi.block_sizes_desc();
            prop_assert_eq!(sizes.iter().sum::<usize>(), n);
            prop_assert!(sizes.windows(2).all(|w| w[0] >= w[1]));
            for w in pi.blocks().windows(2) {
                prop_assert!(w[0][0] < w[1][0]);
            }
            let round: Partition = pi.to_string().parse().unwrap();
            prop_assert_eq!(round, pi);
        }

        #[test]
        fn coag_block_count(l1 in proptest::collection::vec(0usize..5, 1..8), seed in 0u64..1000) {
            let pi = Partition::from_labels(&l1);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let l2: Vec<usize> = (0..pi.num_blocks()).map(|_| rng.random_range(0..3)).collect();
            let pp = Partition::from_labels(&l2);
            let c = coagulate(&pi, &pp).unwrap();
            prop_assert_eq!(c.n(), pi.n());
            prop_assert_eq!(c.num_blocks(), pp.num_blocks());
        }
    }
}
