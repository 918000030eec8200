//! Multisets over the cyclic group `Z_T` and their bias with respect to a
//! subgroup, with exact checks of the coin-counting bound, the identical
//! pair lemma, the pair-set lemma and the addition theorem.
//!
//! Multiplicities grow like `2^r`, so everything is kept in big integers and
//! every inequality with a square root is decided by squaring.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{self, Bias, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultisetZ {
    modulus: u64,
    mult: Vec<BigUint>,
}

impl MultisetZ {
    pub fn new(modulus: u64, mult: Vec<BigUint>) -> Result<Self> {
        if modulus == 0 || mult.len() as u64 != modulus {
            return Err(Error::PreconditionViolated(format!(
                "multiplicity vector of length {} for modulus {modulus}",
                mult.len()
            )));
        }
        if mult.iter().all(Zero::is_zero) {
            return Err(Error::PreconditionViolated("multiset is empty".into()));
        }
        Ok(MultisetZ { modulus, mult })
    }

    pub fn from_counts(modulus: u64, counts: &[u64]) -> Result<Self> {
        MultisetZ::new(modulus, counts.iter().map(|&c| BigUint::from(c)).collect())
    }

    /// Indicator multiset of a set of residues (duplicates count twice).
    pub fn from_elements(modulus: u64, elems: &[u64]) -> Result<Self> {
        let mut mult = vec![BigUint::zero(); modulus as usize];
        for &e in elems {
            mult[(e % modulus) as usize] += 1u32;
        }
        MultisetZ::new(modulus, mult)
    }

    pub fn singleton(modulus: u64, d: u64) -> Self {
        MultisetZ::from_elements(modulus, &[d]).expect("nonempty")
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn multiplicities(&self) -> &[BigUint] {
        &self.mult
    }

    pub fn get(&self, x: u64) -> &BigUint {
        &self.mult[(x % self.modulus) as usize]
    }

    pub fn total(&self) -> BigUint {
        self.mult.iter().sum()
    }

    /// `A + {d}`.
    pub fn translate(&self, d: u64) -> MultisetZ {
        let t = self.modulus as usize;
        let shift = (d % self.modulus) as usize;
        let mut mult = vec![BigUint::zero(); t];
        for (x, m) in self.mult.iter().enumerate() {
            mult[(x + shift) % t] = m.clone();
        }
        MultisetZ {
            modulus: self.modulus,
            mult,
        }
    }

    /// In-place `self + set` for a plain set of residues; `O(T·|set|)`.
    pub fn add_set(&mut self, set: &[u64]) {
        let t = self.modulus as usize;
        let mut next = vec![BigUint::zero(); t];
        for &e in set {
            let e = (e % self.modulus) as usize;
            for (x, m) in self.mult.iter().enumerate() {
                if !m.is_zero() {
                    next[(x + e) % t] += m;
                }
            }
        }
        self.mult = next;
    }
}

/// `A + B` as a cyclic convolution.
pub fn multiset_sum(a: &MultisetZ, b: &MultisetZ) -> Result<MultisetZ> {
    if a.modulus != b.modulus {
        return Err(Error::ModulusMismatch(a.modulus, b.modulus));
    }
    let t = a.modulus as usize;
    let mut mult = vec![BigUint::zero(); t];
    for (x, ma) in a.mult.iter().enumerate().filter(|(_, m)| !m.is_zero()) {
        for (y, mb) in b.mult.iter().enumerate().filter(|(_, m)| !m.is_zero()) {
            mult[(x + y) % t] += ma * mb;
        }
    }
    Ok(MultisetZ {
        modulus: a.modulus,
        mult,
    })
}

/// Sum of plain sets by a running multiplicity vector.
pub fn sum_of_sets(modulus: u64, sets: &[Vec<u64>]) -> Result<MultisetZ> {
    let mut acc = MultisetZ::singleton(modulus, 0);
    for s in sets {
        if s.is_empty() {
            return Err(Error::PreconditionViolated("empty summand".into()));
        }
        acc.add_set(s);
    }
    Ok(acc)
}

/// Cyclic subgroup `⟨h⟩` of `Z_T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Subgroup {
    pub modulus: u64,
    pub generator: u64,
}

impl Subgroup {
    pub fn generated_by(modulus: u64, generator: u64) -> Self {
        Subgroup {
            modulus,
            generator: generator % modulus,
        }
    }

    /// `{0, T/2}`.
    pub fn half(modulus: u64) -> Self {
        Subgroup::generated_by(modulus, modulus / 2)
    }

    /// Step between consecutive elements: `gcd(h, T)`.
    pub fn step(&self) -> u64 {
        self.generator.gcd(&self.modulus)
    }

    pub fn order(&self) -> u64 {
        self.modulus / self.step()
    }

    pub fn elements(&self) -> Vec<u64> {
        (0..self.order()).map(|i| i * self.step()).collect()
    }

    pub fn is_trivial(&self) -> bool {
        self.order() == 1
    }
}

/// Smallest `ε` with `μ(x) ≤ (1+ε) μ(x+g)` for all `x` in the support and `g ∈ H`.
pub fn subgroup_bias(a: &MultisetZ, h: &Subgroup) -> Result<Bias> {
    if a.modulus != h.modulus {
        return Err(Error::ModulusMismatch(a.modulus, h.modulus));
    }
    let step = h.step();
    // Within one coset the worst ratio is max/min over the coset.
    let mut worst = Bias::Finite(Rational::zero());
    for start in 0..step {
        let coset: Vec<&BigUint> = (0..h.order()).map(|i| a.get(start + i * step)).collect();
        let hi = coset.iter().max().expect("nonempty coset");
        if hi.is_zero() {
            continue;
        }
        let lo = coset.iter().min().expect("nonempty coset");
        let b = Bias::from_pair(hi, lo);
        if b > worst {
            worst = b;
        }
    }
    Ok(worst)
}

/// Row `C(s, 0..=s)` by the multiplicative recurrence.
pub fn binomial_row(s: u64) -> Vec<BigUint> {
    let mut row = Vec::with_capacity(s as usize + 1);
    let mut c = BigUint::one();
    row.push(c.clone());
    for i in 0..s {
        c = c * (s - i) / (i + 1);
        row.push(c.clone());
    }
    row
}

/// `|f⁻¹(x)| = Σ_i C(s, x + iK)` for `f(a) = (Σ a_i) mod K` on `{0,1}^s`.
pub fn coin_counts(s: u64, k: u64) -> Result<Vec<BigUint>> {
    if s == 0 || k == 0 {
        return Err(Error::PreconditionViolated(format!("need s, K >= 1 (s={s}, K={k})")));
    }
    let mut counts = vec![BigUint::zero(); k as usize];
    for (j, c) in binomial_row(s).into_iter().enumerate() {
        counts[j % k as usize] += c;
    }
    Ok(counts)
}

/// Coin counts for `s = 1, 2, …` by adding one coin at a time.
pub struct CoinSweep {
    s: u64,
    counts: Vec<BigUint>,
}

impl CoinSweep {
    pub fn new(k: u64) -> Self {
        let mut counts = vec![BigUint::zero(); k.max(1) as usize];
        counts[0] = BigUint::one();
        CoinSweep { s: 0, counts }
    }
}

impl Iterator for CoinSweep {
    type Item = (u64, Vec<BigUint>);

    fn next(&mut self) -> Option<Self::Item> {
        let k = self.counts.len();
        let next: Vec<BigUint> = (0..k)
            .map(|x| &self.counts[x] + &self.counts[(x + k - 1) % k])
            .collect();
        self.counts = next;
        self.s += 1;
        Some((self.s, self.counts.clone()))
    }
}

/// Whether `max ≤ (1 + 4K/√s) · min` over the counts.
pub fn coins_bound_holds(counts: &[BigUint], s: u64, k: u64) -> bool {
    let hi = counts.iter().max().expect("nonempty");
    let lo = counts.iter().min().expect("nonempty");
    // (hi - lo) ≤ 4K·lo/√s  ⇔  hi - lo ≤ (4K·lo/s)·√s
    let lhs = rational::from_big(hi) - rational::from_big(lo);
    let coeff = rational::from_big(&(lo * (4 * k))) / rational::int(s as i64);
    rational::le_scaled_sqrt(&lhs, &coeff, &rational::int(s as i64))
}

pub fn check_coins_bound(s: u64, k: u64) -> Result<bool> {
    if s < k * k {
        return Err(Error::PreconditionViolated(format!("s={s} is below K²={}", k * k)));
    }
    Ok(coins_bound_holds(&coin_counts(s, k)?, s, k))
}

/// Checks the coin bound for every `s` in `s_lo..=s_hi`; returns the first failing `s`, if any.
pub fn check_coins_bound_range(k: u64, s_lo: u64, s_hi: u64) -> Result<Option<u64>> {
    if s_lo < k * k {
        return Err(Error::PreconditionViolated(format!("s={s_lo} is below K²={}", k * k)));
    }
    for (s, counts) in CoinSweep::new(k).take(s_hi as usize) {
        if s >= s_lo && !coins_bound_holds(&counts, s, k) {
            return Ok(Some(s));
        }
    }
    Ok(None)
}

/// `({0, b})^{+s}`: mass `C(s, i)` at `i·b`.
pub fn repeated_pair_sum(b: u64, s: u64, modulus: u64) -> Result<MultisetZ> {
    if s == 0 {
        return Err(Error::PreconditionViolated("need s >= 1".into()));
    }
    let mut mult = vec![BigUint::zero(); modulus as usize];
    for (i, c) in binomial_row(s).into_iter().enumerate() {
        mult[((i as u128 * b as u128) % modulus as u128) as usize] += c;
    }
    MultisetZ::new(modulus, mult)
}

/// `bias ≤ c·√(num/den)` decided exactly (`bias ≥ 0`).
fn bias_within(bias: &Bias, coeff: &Rational, radicand: &Rational) -> bool {
    match bias {
        Bias::Infinite => false,
        Bias::Finite(b) => rational::le_scaled_sqrt(b, coeff, radicand),
    }
}

fn require_power_of_two(t: u64) -> Result<()> {
    if t == 0 || !t.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(t));
    }
    Ok(())
}

fn require_count(r: usize, t: u64) -> Result<()> {
    let needed = t.saturating_pow(3);
    if (r as u64) < needed {
        return Err(Error::TooFewSets { got: r, needed });
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Size2Report {
    pub modulus: u64,
    pub sets: usize,
    /// Offset added to each set so that it contains 0.
    pub offsets: Vec<u64>,
    pub subgroup: Subgroup,
    /// Sets equal to `{0, b}` after offsetting.
    pub copies: u64,
    /// Bias of the `copies` identical sets alone, and its bound `4|⟨b⟩|/√copies`.
    pub copies_bias: Bias,
    pub copies_bound: f64,
    pub copies_pass: bool,
    pub bias: Bias,
    /// `4T^{3/2}/√r`, decimal rendering only; the verdict is exact.
    pub bound: f64,
    pub pass: bool,
}

/// Pair-set lemma: for `r ≥ T³` two-element sets there is a nontrivial
/// subgroup `⟨b⟩` w.r.t. which the sum has bias at most `4T^{3/2}/√r`.
pub fn verify_size2_lemma(modulus: u64, sets: &[[u64; 2]]) -> Result<Size2Report> {
    require_power_of_two(modulus)?;
    require_count(sets.len(), modulus)?;
    let t = modulus;
    let mut offsets = Vec::with_capacity(sets.len());
    let mut diffs = vec![0u64; t as usize];
    for &[u, v] in sets {
        let (u, v) = (u % t, v % t);
        if u == v {
            return Err(Error::PreconditionViolated(format!("{{{u}, {v}}} is not a 2-set")));
        }
        // {u, v} + {-u} = {0, v-u}; {u, v} + {-v} = {0, u-v}: keep the smaller difference
        let d1 = (v + t - u) % t;
        let d2 = (u + t - v) % t;
        if d1 <= d2 {
            offsets.push((t - u) % t);
            diffs[d1 as usize] += 1;
        } else {
            offsets.push((t - v) % t);
            diffs[d2 as usize] += 1;
        }
    }
    let (b, copies) = diffs
        .iter()
        .enumerate()
        .skip(1)
        .fold((1u64, 0u64), |best, (d, &c)| if c > best.1 { (d as u64, c) } else { best });
    let subgroup = Subgroup::generated_by(t, b);

    let ident = repeated_pair_sum(b, copies, t)?;
    let copies_bias = subgroup_bias(&ident, &subgroup)?;
    let k = subgroup.order();
    // 4K/√s = (4K/s)·√s
    let copies_coeff = rational::int(4 * k as i64) / rational::int(copies as i64);
    let copies_pass = bias_within(&copies_bias, &copies_coeff, &rational::int(copies as i64));

    let plain: Vec<Vec<u64>> = sets.iter().map(|s| s.to_vec()).collect();
    let total = sum_of_sets(t, &plain)?;
    let bias = subgroup_bias(&total, &subgroup)?;
    let (coeff, radicand) = pair_bound_terms(t, sets.len());
    Ok(Size2Report {
        modulus: t,
        sets: sets.len(),
        offsets,
        subgroup,
        copies,
        copies_bound: 4.0 * k as f64 / (copies as f64).sqrt(),
        copies_bias,
        copies_pass,
        pass: bias_within(&bias, &coeff, &radicand),
        bias,
        bound: 4.0 * (t as f64).powf(1.5) / (sets.len() as f64).sqrt(),
    })
}

/// `4T^{3/2}/√r = (4T/r)·√(T·r)`.
fn pair_bound_terms(t: u64, r: usize) -> (Rational, Rational) {
    let coeff = rational::int(4 * t as i64) / rational::int(r as i64);
    let radicand = rational::int(t as i64) * rational::int(r as i64);
    (coeff, radicand)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdditionReport {
    pub modulus: u64,
    pub sets: usize,
    pub subgroup: Subgroup,
    pub bias: Bias,
    /// `C·T^{3/2}/√r` with `C = 4`, decimal rendering only.
    pub bound: f64,
    pub pass: bool,
}

/// Addition theorem: the sum of `r ≥ T³` sets of size at least two has
/// bias at most `4T^{3/2}/√r` with respect to `{0, T/2}`.
pub fn verify_addition_theorem(modulus: u64, sets: &[Vec<u64>]) -> Result<AdditionReport> {
    require_power_of_two(modulus)?;
    require_count(sets.len(), modulus)?;
    for s in sets {
        let mut distinct: Vec<u64> = s.iter().map(|e| e % modulus).collect();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() < 2 || distinct.len() != s.len() {
            return Err(Error::PreconditionViolated(format!(
                "{s:?} is not a set of at least two residues"
            )));
        }
    }
    let total = sum_of_sets(modulus, sets)?;
    let subgroup = Subgroup::half(modulus);
    let bias = subgroup_bias(&total, &subgroup)?;
    let (coeff, radicand) = pair_bound_terms(modulus, sets.len());
    Ok(AdditionReport {
        modulus,
        sets: sets.len(),
        subgroup,
        pass: bias_within(&bias, &coeff, &radicand),
        bias,
        bound: 4.0 * (modulus as f64).powf(1.5) / (sets.len() as f64).sqrt(),
    })
}
