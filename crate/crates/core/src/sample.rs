//! Seeded random generators for property checks, benches and the CLI.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::model::{DeterministicLhv, MixedLhv};
use crate::protocol::{MixedProtocol, ProtocolTree, Randomness};
use crate::rational::{rat, Rational};

/// Click-only strategy with uniformly random tables.
pub fn random_click_lhv<R: Rng>(rng: &mut R, n: usize, k: u32, l: u32) -> DeterministicLhv {
    let tables = (0..n)
        .map(|_| (0..k).map(|_| Some(rng.gen_range(0..l))).collect())
        .collect();
    DeterministicLhv::new(tables)
}

/// Strategy whose entries are silent with probability `silent_pct`/100.
pub fn random_lossy_lhv<R: Rng>(rng: &mut R, n: usize, k: u32, l: u32, silent_pct: u32) -> DeterministicLhv {
    let tables = (0..n)
        .map(|_| {
            (0..k)
                .map(|_| {
                    if rng.gen_range(0..100) < silent_pct {
                        None
                    } else {
                        Some(rng.gen_range(0..l))
                    }
                })
                .collect()
        })
        .collect();
    DeterministicLhv::new(tables)
}

/// Random partition of `0..k` into nonempty blocks.
pub fn random_partition<R: Rng>(rng: &mut R, k: u32) -> Vec<Vec<u32>> {
    let mut xs: Vec<u32> = (0..k).collect();
    xs.shuffle(rng);
    let blocks = rng.gen_range(1..=k as usize);
    let mut out: Vec<Vec<u32>> = vec![Vec::new(); blocks];
    for (i, &x) in xs.iter().enumerate() {
        let b = if i < blocks { i } else { rng.gen_range(0..blocks) };
        out[b].push(x);
    }
    for b in out.iter_mut() {
        b.sort_unstable();
    }
    out
}

/// Protocol tree of depth at most `max_depth` with random speakers and partitions.
pub fn random_tree<R: Rng>(rng: &mut R, n: usize, k: u32, l: u32, max_depth: usize) -> ProtocolTree {
    if max_depth == 0 || rng.gen_bool(0.3) {
        return ProtocolTree::leaf(random_click_lhv(rng, n, k, l));
    }
    let party = rng.gen_range(0..n);
    let edges = random_partition(rng, k)
        .into_iter()
        .map(|block| (block, random_tree(rng, n, k, l, max_depth - 1)))
        .collect();
    ProtocolTree::node(party, edges)
}

/// Random positive weights summing to one.
pub fn random_weights<R: Rng>(rng: &mut R, count: usize) -> Vec<Rational> {
    let raw: Vec<i64> = (0..count).map(|_| rng.gen_range(1..=16)).collect();
    let total: i64 = raw.iter().sum();
    raw.into_iter().map(|w| rat(w, total)).collect()
}

pub fn random_mixed_protocol<R: Rng>(
    rng: &mut R,
    n: usize,
    k: u32,
    l: u32,
    max_depth: usize,
    max_components: usize,
) -> MixedProtocol {
    let count = rng.gen_range(1..=max_components.max(1));
    let trees: Vec<_> = (0..count).map(|_| random_tree(rng, n, k, l, max_depth)).collect();
    let weights = random_weights(rng, count);
    MixedProtocol::new(trees.into_iter().zip(weights).collect(), Randomness::Shared).expect("valid weights")
}

pub fn random_mixed_lhv<R: Rng>(
    rng: &mut R,
    n: usize,
    k: u32,
    l: u32,
    silent_pct: u32,
    max_components: usize,
) -> MixedLhv {
    let count = rng.gen_range(1..=max_components.max(1));
    let lhvs: Vec<_> = (0..count).map(|_| random_lossy_lhv(rng, n, k, l, silent_pct)).collect();
    let weights = random_weights(rng, count);
    MixedLhv::new(lhvs.into_iter().zip(weights).collect()).expect("valid weights")
}

/// Subset of `Z_modulus` with `size` distinct elements, sorted.
pub fn random_set<R: Rng>(rng: &mut R, modulus: u64, size: usize) -> Vec<u64> {
    let mut all: Vec<u64> = (0..modulus).collect();
    let (chosen, _) = all.partial_shuffle(rng, size.min(modulus as usize));
    let mut out = chosen.to_vec();
    out.sort_unstable();
    out
}

/// `count` sets whose sizes are uniform in `2..=modulus`.
pub fn random_sets<R: Rng>(rng: &mut R, modulus: u64, count: usize) -> Vec<Vec<u64>> {
    (0..count)
        .map(|_| {
            let size = rng.gen_range(2..=modulus as usize);
            random_set(rng, modulus, size)
        })
        .collect()
}

pub fn random_pairs<R: Rng>(rng: &mut R, modulus: u64, count: usize) -> Vec<[u64; 2]> {
    (0..count)
        .map(|_| {
            let s = random_set(rng, modulus, 2);
            [s[0], s[1]]
        })
        .collect()
}

/// Multiplicity vector with entries in `0..=max_mult`.
pub fn random_counts<R: Rng>(rng: &mut R, modulus: u64, max_mult: u64) -> Vec<u64> {
    (0..modulus).map(|_| rng.gen_range(0..=max_mult)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn trees_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let t = random_tree(&mut rng, 3, 4, 2, 3);
            t.validate(3, 4, 2).unwrap();
            assert!(t.depth() <= 3);
        }
    }

    #[test]
    fn sets_are_distinct() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for s in random_sets(&mut rng, 8, 100) {
            assert!(s.len() >= 2);
            assert!(s.windows(2).all(|w| w[0] < w[1]));
        }
        for [a, b] in random_pairs(&mut rng, 4, 50) {
            assert!(a < b && b < 4);
        }
    }

    #[test]
    fn same_seed_same_draws() {
        let a = random_mixed_protocol(&mut ChaCha8Rng::seed_from_u64(3), 3, 2, 2, 3, 4);
        let b = random_mixed_protocol(&mut ChaCha8Rng::seed_from_u64(3), 3, 2, 2, 3, 4);
        assert_eq!(a, b);
    }
}
