//! Rectangles `A_1 × ⋯ × A_n` of inputs: exact residue counting, advantage,
//! GHZ bias, the rectangle bound on classical models, and exhaustive scans
//! for the largest high-advantage rectangle.

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ghz::GhzInstance;
use crate::model::{all_vectors, CorrelationProblem, Outcome};
use crate::par;
use crate::rational::{self, Bias, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Rectangle {
    sets: Vec<Vec<u32>>,
}

impl Rectangle {
    /// Sets are sorted and deduplicated; each must be nonempty.
    pub fn new(sets: Vec<Vec<u32>>) -> Result<Self> {
        let mut sets = sets;
        for (i, s) in sets.iter_mut().enumerate() {
            s.sort_unstable();
            s.dedup();
            if s.is_empty() {
                return Err(Error::InvalidInput(format!("party {i} has an empty input set")));
            }
        }
        Ok(Rectangle { sets })
    }

    /// Rectangle from per-party bitmasks over `{0..k-1}`.
    pub fn from_masks(masks: &[u32]) -> Result<Self> {
        Rectangle::new(
            masks
                .iter()
                .map(|&m| (0..32).filter(|b| m >> b & 1 == 1).collect())
                .collect(),
        )
    }

    pub fn full(n: usize, k: u32) -> Self {
        Rectangle {
            sets: vec![(0..k).collect(); n],
        }
    }

    pub fn point(x: &[u32]) -> Self {
        Rectangle {
            sets: x.iter().map(|&v| vec![v]).collect(),
        }
    }

    pub fn sets(&self) -> &[Vec<u32>] {
        &self.sets
    }

    pub fn n(&self) -> usize {
        self.sets.len()
    }

    pub fn size(&self) -> BigUint {
        self.sets.iter().map(|s| BigUint::from(s.len())).product()
    }

    pub fn contains(&self, x: &[u32]) -> bool {
        x.len() == self.sets.len() && self.sets.iter().zip(x).all(|(s, v)| s.binary_search(v).is_ok())
    }

    /// Every point, lexicographic. Test oracle; exponential.
    pub fn points(&self) -> impl Iterator<Item = Vec<u32>> + '_ {
        let radices: Vec<u32> = self.sets.iter().map(|s| s.len() as u32).collect();
        let total: usize = radices.iter().map(|&r| r as usize).product();
        let mut idx = vec![0u32; radices.len()];
        (0..total).map(move |step| {
            if step > 0 {
                for i in (0..idx.len()).rev() {
                    idx[i] += 1;
                    if idx[i] < radices[i] {
                        break;
                    }
                    idx[i] = 0;
                }
            }
            idx.iter().zip(&self.sets).map(|(&j, s)| s[j as usize]).collect()
        })
    }

    fn check_against(&self, n: usize, k: u32) -> Result<()> {
        if self.sets.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: self.sets.len(),
            });
        }
        if self.sets.iter().flatten().any(|&v| v >= k) {
            return Err(Error::InvalidInput(format!("rectangle uses inputs outside 0..{k}")));
        }
        Ok(())
    }
}

/// Count of parties whose set has at least two inputs.
pub fn involvement(r: &Rectangle) -> usize {
    r.sets.iter().filter(|s| s.len() >= 2).count()
}

/// `|R| ≤ k^m` for `m` involved parties.
pub fn size_within_involvement(r: &Rectangle, k: u32) -> bool {
    r.size() <= BigUint::from(k).pow(involvement(r) as u32)
}

/// Counts of `x ∈ R` by `(Σ x_i) mod modulus`, by iterated convolution.
pub fn residue_counts(r: &Rectangle, modulus: u64) -> Vec<BigUint> {
    assert!(modulus >= 1, "modulus must be positive");
    let m = modulus as usize;
    let mut counts = vec![BigUint::zero(); m];
    counts[0] = BigUint::one();
    for set in &r.sets {
        let mut next = vec![BigUint::zero(); m];
        for &v in set {
            let shift = (v as u64 % modulus) as usize;
            for (res, c) in counts.iter().enumerate() {
                if !c.is_zero() {
                    next[(res + shift) % m] += c;
                }
            }
        }
        counts = next;
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RectangleStats {
    #[serde(with = "rational::serde_big")]
    pub size: BigUint,
    pub involvement: usize,
    /// Counts by input sum modulo `2k`.
    #[serde(with = "rational::serde_big_vec")]
    pub counts: Vec<BigUint>,
    /// Valid inputs with `F = 0` and `F = 1`.
    #[serde(with = "rational::serde_big")]
    pub n0: BigUint,
    #[serde(with = "rational::serde_big")]
    pub n1: BigUint,
    /// `None` when the rectangle misses every valid input.
    pub bias: Option<Bias>,
    /// Advantage of outputs with even and odd parity under the uniform valid-input distribution.
    pub advantage_even: Option<crate::rational::Exact>,
    pub advantage_odd: Option<crate::rational::Exact>,
}

impl RectangleStats {
    pub fn valid(&self) -> BigUint {
        &self.n0 + &self.n1
    }

    /// Largest advantage over click outcomes.
    pub fn max_advantage(&self) -> Option<Rational> {
        let v = self.valid();
        if v.is_zero() {
            None
        } else {
            let hi = if self.n0 >= self.n1 { &self.n0 } else { &self.n1 };
            Some(rational::ratio_of(hi, &v))
        }
    }
}

pub fn stats(r: &Rectangle, inst: &GhzInstance) -> Result<RectangleStats> {
    r.check_against(inst.n(), inst.k())?;
    let counts = residue_counts(r, 2 * inst.k() as u64);
    let n0 = counts[0].clone();
    let n1 = counts[inst.k() as usize].clone();
    let valid = &n0 + &n1;
    let (bias, advantage_even, advantage_odd) = if valid.is_zero() {
        (None, None, None)
    } else {
        (
            Some(Bias::from_pair(&n0, &n1)),
            Some(rational::ratio_of(&n0, &valid).into()),
            Some(rational::ratio_of(&n1, &valid).into()),
        )
    };
    Ok(RectangleStats {
        size: r.size(),
        involvement: involvement(r),
        counts,
        n0,
        n1,
        bias,
        advantage_even,
        advantage_odd,
    })
}

/// `μ(R ∩ adm(a)) / μ(R)` for a click outcome `a`.
pub fn advantage(r: &Rectangle, a: &Outcome, problem: &CorrelationProblem) -> Result<Rational> {
    r.check_against(problem.n(), problem.k())?;
    if !a.all_click() {
        return Err(Error::InvalidInput("advantage is only defined for click outcomes".into()));
    }
    let mut weight = Rational::zero();
    let mut admissible = Rational::zero();
    for (x, w) in problem.support().filter(|(x, _)| r.contains(x)) {
        weight += w;
        if !problem.target(x, a).is_zero() {
            admissible += w;
        }
    }
    if weight.is_zero() {
        return Err(Error::EmptyWeight);
    }
    Ok(admissible / weight)
}

/// GHZ bias `max(n0, n1)/min(n0, n1) − 1`.
pub fn bias(r: &Rectangle, inst: &GhzInstance) -> Result<Bias> {
    stats(r, inst)?.bias.ok_or(Error::EmptyIntersection)
}

/// `(1+δ)/(2+δ)`, or 1 for infinite bias.
pub fn advantage_ceiling(b: &Bias) -> Rational {
    match b {
        Bias::Finite(d) => (Rational::one() + d) / (rational::int(2) + d),
        Bias::Infinite => Rational::one(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationReport {
    pub bias: Bias,
    /// Largest advantage over all click outcomes, evaluated on the problem.
    #[serde(with = "rational::serde_rational")]
    pub max_advantage: Rational,
    /// `(1 + bias)/(2 + bias)`.
    #[serde(with = "rational::serde_rational")]
    pub ceiling: Rational,
    pub pass: bool,
}

impl RelationReport {
    /// `bias ≤ δ` exactly when every advantage is at most `(1+δ)/(2+δ)`.
    pub fn equivalence_holds(&self, delta: &Rational) -> bool {
        let lhs = self.bias.le(delta);
        let rhs = self.max_advantage <= advantage_ceiling(&Bias::Finite(delta.clone()));
        lhs == rhs
    }
}

/// Compares the bias with advantages computed generically over all `2^n` click outcomes.
pub fn advantage_bias_relation(
    r: &Rectangle,
    inst: &GhzInstance,
    problem: &CorrelationProblem,
) -> Result<RelationReport> {
    let b = bias(r, inst)?;
    if inst.n() > 20 {
        return Err(Error::BudgetExceeded {
            requested: 1u128 << inst.n(),
            budget: 1 << 20,
        });
    }
    let mut max_advantage = Rational::zero();
    for a in all_vectors(inst.n(), 2) {
        let adv = advantage(r, &Outcome::clicks(&a), problem)?;
        if adv > max_advantage {
            max_advantage = adv;
        }
    }
    let ceiling = advantage_ceiling(&b);
    Ok(RelationReport {
        pass: max_advantage == ceiling,
        bias: b,
        max_advantage,
        ceiling,
    })
}

/// Whether `2^{-c} η^n (1 − ε/(1−δ)) ≤ l^n r`.
pub fn theorem2_check(
    delta: &Rational,
    r_cap: &Rational,
    c: u32,
    eta_n: &Rational,
    eps: &Rational,
    l: u32,
    n: usize,
) -> Result<bool> {
    check_delta(delta)?;
    let lhs = eta_n * (Rational::one() - eps / (Rational::one() - delta))
        / rational::from_big(&rational::pow2(c));
    let rhs = rational::from_big(&BigUint::from(l).pow(n as u32)) * r_cap;
    Ok(lhs <= rhs)
}

/// The same inequality solved for `η^n`: `2^c l^n r / (1 − ε/(1−δ))`.
/// `None` when the error term leaves no constraint.
pub fn eta_n_upper_bound(
    delta: &Rational,
    r_cap: &Rational,
    c: u32,
    eps: &Rational,
    l: u32,
    n: usize,
) -> Result<Option<Rational>> {
    check_delta(delta)?;
    let slack = Rational::one() - eps / (Rational::one() - delta);
    if slack <= Rational::zero() {
        return Ok(None);
    }
    let rhs = rational::from_big(&(BigUint::from(l).pow(n as u32) * rational::pow2(c))) * r_cap;
    Ok(Some(rhs / slack))
}

fn check_delta(delta: &Rational) -> Result<()> {
    if *delta < Rational::zero() || *delta >= Rational::one() {
        return Err(Error::DeltaOutOfRange(delta.to_string()));
    }
    Ok(())
}

/// How rectangles are enumerated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Symmetry {
    /// Every product of nonempty subsets.
    Full,
    /// Per-party sets in nondecreasing mask order: one representative per
    /// orbit of party permutations, which preserve both the promise and `F`.
    Reduced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanOptions {
    pub symmetry: Symmetry,
    /// Largest number of rectangles an exhaustive scan may visit.
    pub budget: u128,
    /// Random rectangles to draw when the exhaustive scan is over budget; 0 disables sampling.
    pub samples: usize,
    pub seed: u64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            symmetry: Symmetry::Reduced,
            budget: 1 << 24,
            samples: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    #[serde(with = "rational::serde_rational")]
    pub delta: Rational,
    /// Largest input weight among rectangles with some advantage `≥ δ`.
    #[serde(with = "rational::serde_rational")]
    pub r_cap: Rational,
    /// `false` when sampled: `r_cap` is then only a lower bound on the true maximum.
    pub exhaustive: bool,
    pub scanned: u128,
    pub qualifying: u128,
    pub witness: Option<Rectangle>,
}

fn binomial_u128(n: u128, r: u128) -> u128 {
    let r = r.min(n.saturating_sub(r));
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// Number of rectangles a scan would visit.
pub fn scan_size(inst: &GhzInstance, symmetry: Symmetry) -> u128 {
    let subsets = (1u128 << inst.k()) - 1;
    let n = inst.n() as u128;
    match symmetry {
        Symmetry::Full => subsets.checked_pow(inst.n() as u32).unwrap_or(u128::MAX),
        Symmetry::Reduced => binomial_u128(subsets + n - 1, n),
    }
}

/// Rectangles visited by an exhaustive scan, as per-party masks.
pub fn enumerate_masks(inst: &GhzInstance, symmetry: Symmetry) -> Vec<Vec<u32>> {
    let k = inst.k();
    let n = inst.n();
    let full = (1u32 << k) - 1;
    match symmetry {
        Symmetry::Full => {
            let all: Vec<u32> = (1..=full).collect();
            let mut out = Vec::new();
            for idx in all_vectors(n, all.len() as u32) {
                out.push(idx.iter().map(|&i| all[i as usize]).collect());
            }
            out
        }
        Symmetry::Reduced => {
            let all: Vec<u32> = (1..=full).collect();
            let mut out = Vec::new();
            multisets(&all, n, 0, &mut Vec::with_capacity(n), &mut |m| out.push(m.to_vec()));
            out
        }
    }
}

fn multisets(reps: &[u32], len: usize, from: usize, cur: &mut Vec<u32>, emit: &mut dyn FnMut(&[u32])) {
    if cur.len() == len {
        emit(cur);
        return;
    }
    for i in from..reps.len() {
        cur.push(reps[i]);
        multisets(reps, len, i, cur, emit);
        cur.pop();
    }
}

/// Scan for several thresholds at once; one result per entry of `deltas`.
pub fn scan_rectangles_grid(inst: &GhzInstance, deltas: &[Rational], opts: &ScanOptions) -> Result<Vec<ScanResult>> {
    for d in deltas {
        if *d < Rational::zero() || *d > Rational::one() {
            return Err(Error::DeltaOutOfRange(d.to_string()));
        }
    }
    let size = scan_size(inst, opts.symmetry);
    let (rects, exhaustive): (Vec<Vec<u32>>, bool) = if size <= opts.budget {
        (enumerate_masks(inst, opts.symmetry), true)
    } else if opts.samples > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let full = (1u32 << inst.k()) - 1;
        let draws = (0..opts.samples)
            .map(|_| (0..inst.n()).map(|_| rng.gen_range(1..=full)).collect())
            .collect();
        (draws, false)
    } else {
        return Err(Error::BudgetExceeded {
            requested: size,
            budget: opts.budget,
        });
    };
    let summaries = par::map(&rects, |masks| {
        let r = Rectangle::from_masks(masks).expect("masks are nonempty");
        let s = stats(&r, inst).expect("masks fit the instance");
        (s.valid(), s.max_advantage())
    });
    let denom = BigUint::from(inst.k()).pow(inst.n() as u32 - 1);
    let mut out = Vec::with_capacity(deltas.len());
    for delta in deltas {
        let mut best: Option<(&BigUint, usize)> = None;
        let mut qualifying = 0u128;
        for (i, (valid, adv)) in summaries.iter().enumerate() {
            let Some(adv) = adv else { continue };
            if adv < delta {
                continue;
            }
            qualifying += 1;
            if best.is_none_or(|(b, _)| valid > b) {
                best = Some((valid, i));
            }
        }
        out.push(ScanResult {
            delta: delta.clone(),
            r_cap: best.map_or_else(Rational::zero, |(v, _)| rational::ratio_of(v, &denom)),
            exhaustive,
            scanned: rects.len() as u128,
            qualifying,
            witness: best.map(|(_, i)| Rectangle::from_masks(&rects[i]).expect("nonempty")),
        });
    }
    Ok(out)
}

/// Largest `μ(R)` over rectangles with some click-outcome advantage at least `delta`.
pub fn scan_rectangles(inst: &GhzInstance, delta: &Rational, opts: &ScanOptions) -> Result<ScanResult> {
    Ok(scan_rectangles_grid(inst, std::slice::from_ref(delta), opts)?.remove(0))
}

/// Per-rectangle statistics for every scanned rectangle (CSV export).
pub fn scan_stats(inst: &GhzInstance, opts: &ScanOptions) -> Result<Vec<(Rectangle, RectangleStats)>> {
    let size = scan_size(inst, opts.symmetry);
    if size > opts.budget {
        return Err(Error::BudgetExceeded {
            requested: size,
            budget: opts.budget,
        });
    }
    let masks = enumerate_masks(inst, opts.symmetry);
    let rows = par::map(&masks, |m| {
        let r = Rectangle::from_masks(m).expect("nonempty");
        let s = stats(&r, inst).expect("fits instance");
        (r, s)
    });
    Ok(rows)
}

/// Uniformly random rectangle with per-party sets drawn among nonempty subsets.
pub fn random_rectangle<R: Rng>(rng: &mut R, n: usize, k: u32) -> Rectangle {
    let full = (1u32 << k) - 1;
    let masks: Vec<u32> = (0..n).map(|_| rng.gen_range(1..=full)).collect();
    Rectangle::from_masks(&masks).expect("nonempty")
}
