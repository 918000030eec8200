//! The n-party GHZ scenario with k phase settings per party.
//!
//! Each party holds one qubit of `(|0…0⟩ + |1…1⟩)/√2` and, on input `x`,
//! measures in the basis `(|0⟩ ± e^{iπx/k}|1⟩)/√2`; the `+` vector is
//! reported as output 0. On inputs whose sum is a multiple of `k` the
//! output parity equals bit `log₂ k` of the input sum.

use std::f64::consts::PI;

use num_complex::Complex64;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{all_vectors, CorrelationProblem, DeterministicLhv, Input, Outcome};
use crate::protocol::{ceil_log2, MixedProtocol, ProtocolTree, Randomness};
use crate::rational::{self, Rational};

pub const TOLERANCE: f64 = 1e-12;

/// Default cap on the number of valid inputs a problem may enumerate.
pub const DEFAULT_ENUMERATION_CAP: u128 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GhzInstance {
    n: usize,
    k: u32,
}

impl GhzInstance {
    pub fn new(n: usize, k: u32) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidInstance(format!("need at least 2 parties, got {n}")));
        }
        if k < 2 {
            return Err(Error::InvalidInstance(format!("need at least 2 settings, got {k}")));
        }
        Ok(GhzInstance { n, k })
    }

    /// `k = ⌈n^{1/6}⌉` rounded up to a power of two.
    pub fn with_default_settings(n: usize) -> Result<Self> {
        let root = (n as f64).powf(1.0 / 6.0).ceil().max(2.0) as u32;
        GhzInstance::new(n, root.next_power_of_two())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    /// Bits a party needs to announce its input.
    pub fn input_bits(&self) -> u32 {
        ceil_log2(self.k as usize)
    }

    /// `k^{n-1}`, saturating.
    pub fn valid_count(&self) -> u128 {
        (self.k as u128).checked_pow(self.n as u32 - 1).unwrap_or(u128::MAX)
    }

    /// Modulus `2k` of the input-sum residues that determine validity and `F`.
    /// Subgroup bias machinery assumes a power of two here.
    pub fn sum_modulus(&self) -> u64 {
        if !self.k.is_power_of_two() {
            log::warn!(
                "k = {} is not a power of two; subgroup bias bounds do not apply",
                self.k
            );
        }
        2 * self.k as u64
    }

    fn check_len(&self, x: &[u32]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        if let Some(v) = x.iter().find(|&&v| v >= self.k) {
            return Err(Error::InvalidInput(format!("setting {v} is not below k={}", self.k)));
        }
        Ok(())
    }

    /// The promise: input sum divisible by `k`.
    pub fn is_valid(&self, x: &[u32]) -> Result<bool> {
        self.check_len(x)?;
        Ok(sum(x).is_multiple_of(self.k as u64))
    }

    /// `F(x) = ((Σ x_i) mod 2k) / k` on valid inputs.
    pub fn f_bit(&self, x: &[u32]) -> Result<u32> {
        if !self.is_valid(x)? {
            return Err(Error::InvalidInput(format!("{x:?} violates the promise")));
        }
        let k = self.k as u64;
        Ok(((sum(x) % (2 * k)) / k) as u32)
    }

    /// Ideal conditional distribution: uniform over the `2^{n-1}` outputs whose parity is `F(x)`.
    pub fn target_probability(&self, x: &[u32], a: &[u32]) -> Result<Rational> {
        let f = self.f_bit(x)?;
        check_bits(a, self.n)?;
        if parity(a) == f {
            Ok(rational::ratio_of(&One::one(), &rational::pow2(self.n as u32 - 1)))
        } else {
            Ok(Rational::zero())
        }
    }

    /// Born-rule probability of `a` on input `x`, from the two nonzero amplitudes of the state.
    pub fn quantum_probability(&self, x: &[u32], a: &[u32]) -> Result<f64> {
        self.check_len(x)?;
        check_bits(a, self.n)?;
        let half = std::f64::consts::FRAC_1_SQRT_2;
        // ⟨φ_a(x)|0⟩ = 1/√2 and ⟨φ_a(x)|1⟩ = (-1)^a e^{-iπx/k}/√2 for each party.
        let mut zeros = Complex64::new(1.0, 0.0);
        let mut ones = Complex64::new(1.0, 0.0);
        for (&xi, &ai) in x.iter().zip(a) {
            let sign = if ai == 0 { 1.0 } else { -1.0 };
            zeros *= half;
            ones *= Complex64::from_polar(sign * half, -PI * xi as f64 / self.k as f64);
        }
        let amp = (zeros + ones) * half;
        Ok(amp.norm_sqr())
    }

    /// `(1 + cos(π(Σa − Σx/k))) / 2^n`.
    pub fn quantum_probability_closed_form(&self, x: &[u32], a: &[u32]) -> f64 {
        let theta = PI * (a.iter().sum::<u32>() as f64 - sum(x) as f64 / self.k as f64);
        (1.0 + theta.cos()) / 2f64.powi(self.n as i32)
    }

    /// Valid inputs in lexicographic order.
    pub fn valid_inputs(&self) -> impl Iterator<Item = Input> + '_ {
        let k = self.k as u64;
        all_vectors(self.n - 1, self.k).map(move |mut head| {
            let s = head.iter().map(|&v| v as u64).sum::<u64>() % k;
            head.push(((k - s) % k) as u32);
            head
        })
    }

    /// Uniform distribution over valid inputs with the ideal target.
    pub fn problem(&self, cap: u128) -> Result<CorrelationProblem> {
        let count = self.valid_count();
        if count > cap {
            return Err(Error::ResourceLimit { requested: count, cap });
        }
        let w = rational::ratio_of(&One::one(), &num_bigint::BigUint::from(count));
        let outs: Vec<Vec<u32>> = all_vectors(self.n, 2).collect();
        let p = rational::ratio_of(&One::one(), &rational::pow2(self.n as u32 - 1));
        let mut mu = Vec::with_capacity(count as usize);
        let mut target = Vec::new();
        for x in self.valid_inputs() {
            let f = self.f_bit(&x)?;
            for a in outs.iter().filter(|a| parity(a) == f) {
                target.push((x.clone(), Outcome::clicks(a), p.clone()));
            }
            mu.push((x, w.clone()));
        }
        CorrelationProblem::new(self.n, self.k, 2, mu, target)
    }

    /// Every party announces its input in turn; at the leaf the first party
    /// outputs `F(x)` and the rest output 0 (all zeros when `x` is invalid).
    pub fn broadcast_strategy(&self) -> ProtocolTree {
        self.broadcast_with_pattern(&vec![0; self.n - 1])
    }

    /// Uniform mixture over the `2^{n-1}` parity-consistent output patterns,
    /// which reproduces the target distribution exactly.
    pub fn broadcast_mixture(&self) -> Result<MixedProtocol> {
        let trees = all_vectors(self.n - 1, 2)
            .map(|pattern| self.broadcast_with_pattern(&pattern))
            .collect();
        MixedProtocol::uniform(trees, Randomness::Shared)
    }

    /// Parties `0..n-1` announce; the leaf outputs `pattern` on parties `1..n` and fixes party 0's bit
    /// so the total parity is `F(x)`.
    fn broadcast_with_pattern(&self, pattern: &[u32]) -> ProtocolTree {
        self.broadcast_prefix(self.n, &mut Vec::new(), &|x: &[u32]| {
            let mut out = Vec::with_capacity(self.n);
            let f = self.f_bit(x).unwrap_or(0);
            out.push(f ^ parity(pattern));
            out.extend_from_slice(pattern);
            DeterministicLhv::clicking(&out.iter().map(|&v| vec![v; self.k as usize]).collect::<Vec<_>>())
        })
    }

    /// Tree in which parties `0..announce` reveal their inputs one after another;
    /// `leaf` receives the known prefix (or full input when everyone spoke).
    pub fn broadcast_prefix(
        &self,
        announce: usize,
        known: &mut Vec<u32>,
        leaf: &dyn Fn(&[u32]) -> DeterministicLhv,
    ) -> ProtocolTree {
        if known.len() == announce {
            return ProtocolTree::leaf(leaf(known));
        }
        let party = known.len();
        let edges = (0..self.k)
            .map(|v| {
                known.push(v);
                let child = self.broadcast_prefix(announce, known, leaf);
                known.pop();
                (vec![v], child)
            })
            .collect();
        ProtocolTree::node(party, edges)
    }
}

fn sum(x: &[u32]) -> u64 {
    x.iter().map(|&v| v as u64).sum()
}

pub fn parity(a: &[u32]) -> u32 {
    a.iter().sum::<u32>() % 2
}

fn check_bits(a: &[u32], n: usize) -> Result<()> {
    if a.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: a.len(),
        });
    }
    if a.iter().any(|&v| v > 1) {
        return Err(Error::InvalidInput("outputs must be bits".into()));
    }
    Ok(())
}

/// One row of the target/quantum comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub x: Input,
    pub a: Vec<u32>,
    #[serde(with = "rational::serde_rational")]
    pub target: Rational,
    pub quantum: f64,
    pub closed_form: f64,
    pub deviation: f64,
}

/// Quantum versus ideal probabilities on every valid input and click outcome.
pub fn compare_quantum(inst: &GhzInstance, cap: u128) -> Result<(Vec<ComparisonRow>, f64)> {
    let rows_needed = inst.valid_count().saturating_mul(1u128 << inst.n.min(100));
    if rows_needed > cap {
        return Err(Error::BudgetExceeded {
            requested: rows_needed,
            budget: cap,
        });
    }
    let outs: Vec<Vec<u32>> = all_vectors(inst.n, 2).collect();
    let inputs: Vec<Input> = inst.valid_inputs().collect();
    let blocks = crate::par::map(&inputs, |x| {
        outs.iter()
            .map(|a| {
                let target = inst.target_probability(x, a)?;
                let quantum = inst.quantum_probability(x, a)?;
                let closed_form = inst.quantum_probability_closed_form(x, a);
                let deviation = (quantum - rational::to_f64(&target)).abs();
                Ok(ComparisonRow {
                    x: x.clone(),
                    a: a.clone(),
                    target,
                    quantum,
                    closed_form,
                    deviation,
                })
            })
            .collect::<Result<Vec<_>>>()
    });
    let mut rows = Vec::new();
    for b in blocks {
        rows.extend(b?);
    }
    let max_dev = rows.iter().map(|r| r.deviation).fold(0.0, f64::max);
    Ok((rows, max_dev))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        detection_efficiency, error_probability, evaluate_mixed_lhv, total_variation_error, MixedLhv,
    };
    use crate::protocol::{induced_distribution, to_detector_model};
    use crate::rational::{int, rat};

    fn inst(n: usize, k: u32) -> GhzInstance {
        GhzInstance::new(n, k).unwrap()
    }

    #[test]
    fn instance_bounds() {
        assert!(GhzInstance::new(1, 2).is_err());
        assert!(GhzInstance::new(2, 1).is_err());
        assert_eq!(GhzInstance::with_default_settings(3).unwrap().k(), 2);
        assert_eq!(GhzInstance::with_default_settings(100).unwrap().k(), 4);
    }

    #[test]
    fn promise() {
        assert!(inst(3, 2).is_valid(&[1, 1, 0]).unwrap());
        assert!(!inst(3, 2).is_valid(&[1, 0, 0]).unwrap());
        assert!(inst(4, 4).is_valid(&[1, 1, 1, 1]).unwrap());
        assert!(matches!(inst(3, 2).is_valid(&[1, 0]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn f_bits() {
        assert_eq!(inst(3, 2).f_bit(&[0, 0, 0]).unwrap(), 0);
        assert_eq!(inst(3, 2).f_bit(&[1, 1, 0]).unwrap(), 1);
        assert_eq!(inst(4, 4).f_bit(&[3, 3, 1, 1]).unwrap(), 0);
        assert!(matches!(inst(3, 2).f_bit(&[1, 0, 0]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn target_values() {
        assert_eq!(inst(3, 2).target_probability(&[0, 0, 0], &[0, 0, 0]).unwrap(), rat(1, 4));
        assert_eq!(inst(3, 2).target_probability(&[1, 1, 0], &[0, 0, 0]).unwrap(), int(0));
        assert_eq!(inst(2, 2).target_probability(&[1, 1], &[0, 1]).unwrap(), rat(1, 2));
        assert!(inst(3, 2).target_probability(&[1, 0, 0], &[0, 0, 0]).is_err());
    }

    #[test]
    fn quantum_values() {
        let g = inst(3, 2);
        assert!((g.quantum_probability(&[0, 0, 0], &[0, 0, 0]).unwrap() - 0.25).abs() < TOLERANCE);
        assert!(g.quantum_probability(&[1, 1, 0], &[0, 0, 0]).unwrap().abs() < TOLERANCE);
        assert!((g.quantum_probability(&[1, 0, 0], &[0, 0, 0]).unwrap() - 0.125).abs() < TOLERANCE);
    }

    #[test]
    fn amplitudes_match_closed_form_everywhere() {
        for (n, k) in [(2, 2), (3, 3), (4, 4), (5, 2)] {
            let g = inst(n, k);
            for x in all_vectors(n, k) {
                for a in all_vectors(n, 2) {
                    let q = g.quantum_probability(&x, &a).unwrap();
                    assert!((q - g.quantum_probability_closed_form(&x, &a)).abs() < TOLERANCE);
                }
            }
        }
    }

    #[test]
    fn normalisation_on_all_inputs() {
        for n in 2..=8 {
            let g = inst(n, 3);
            for x in all_vectors(n, 3).step_by(7) {
                let total: f64 = all_vectors(n, 2).map(|a| g.quantum_probability(&x, &a).unwrap()).sum();
                assert!((total - 1.0).abs() < TOLERANCE, "n={n} x={x:?}");
            }
        }
    }

    #[test]
    fn target_support_size() {
        let g = inst(4, 4);
        for x in g.valid_inputs() {
            let support: Vec<_> = all_vectors(4, 2)
                .map(|a| g.target_probability(&x, &a).unwrap())
                .filter(|p| !p.is_zero())
                .collect();
            assert_eq!(support.len(), 8);
            assert!(support.iter().all(|p| *p == rat(1, 8)));
        }
    }

    #[test]
    fn problem_supports() {
        let p = inst(3, 2).problem(DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(p.support_len(), 4);
        assert!(p.support().all(|(_, w)| *w == rat(1, 4)));
        let p = inst(2, 2).problem(DEFAULT_ENUMERATION_CAP).unwrap();
        let d: Vec<_> = p.support().map(|(x, w)| (x.clone(), w.clone())).collect();
        assert_eq!(d, vec![(vec![0, 0], rat(1, 2)), (vec![1, 1], rat(1, 2))]);
        // independent count of sum ≡ 0 (mod 4) over {0..3}^4
        let brute = all_vectors(4, 4).filter(|x| x.iter().sum::<u32>() % 4 == 0).count();
        assert_eq!(brute, 64);
        assert_eq!(inst(4, 4).problem(DEFAULT_ENUMERATION_CAP).unwrap().support_len(), 64);
        assert!(matches!(inst(4, 4).problem(10), Err(Error::ResourceLimit { .. })));
    }

    #[test]
    fn valid_inputs_match_filter() {
        let g = inst(3, 4);
        let fast: Vec<_> = g.valid_inputs().collect();
        let slow: Vec<_> = all_vectors(3, 4).filter(|x| g.is_valid(x).unwrap()).collect();
        assert_eq!(fast, slow);
    }

    #[test]
    fn broadcast_costs_and_walk() {
        assert_eq!(inst(3, 2).broadcast_strategy().cost(), 3);
        assert_eq!(inst(4, 4).broadcast_strategy().cost(), 8);
        let t = inst(3, 2).broadcast_strategy();
        let (leaf, out) = t.execute(&[1, 1, 0]).unwrap();
        assert_eq!(leaf, 0b110);
        assert_eq!(parity(&out.click_values().unwrap()), 1);
    }

    #[test]
    fn broadcast_is_exact() {
        let g = inst(3, 2);
        let p = g.problem(DEFAULT_ENUMERATION_CAP).unwrap();
        let m = MixedProtocol::deterministic(g.broadcast_strategy(), Randomness::Shared);
        let d = induced_distribution(&m, &p).unwrap();
        assert!(error_probability(&d, &p).unwrap().is_zero());
        assert_eq!(detection_efficiency(&d, &p).unwrap().eta_n, int(1));

        let mix = g.broadcast_mixture().unwrap();
        let d = induced_distribution(&mix, &p).unwrap();
        assert!(total_variation_error(&d, &p).unwrap().is_zero());
        for (x, _) in p.support() {
            for (a, q) in p.target_row(x) {
                assert_eq!(&d.prob(x, a), q);
            }
        }
    }

    #[test]
    fn broadcast_as_detector_model() {
        let g = inst(3, 2);
        let p = g.problem(DEFAULT_ENUMERATION_CAP).unwrap();
        let mix = g.broadcast_mixture().unwrap();
        let det: MixedLhv = to_detector_model(&mix).unwrap();
        let d = evaluate_mixed_lhv(&det, &p).unwrap();
        assert_eq!(detection_efficiency(&d, &p).unwrap().eta_n, rat(1, 8));
        assert!(error_probability(&d, &p).unwrap().is_zero());
        assert!(total_variation_error(&d, &p).unwrap().is_zero());
    }
}
