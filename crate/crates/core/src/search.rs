//! Optimal classical strategies at small sizes: the minimum error over
//! deterministic click-only strategies, the largest detection efficiency
//! reachable at a given error (an exact LP over lossy strategies), and the
//! communication/efficiency trade-off table for GHZ instances.

use std::collections::BTreeMap;
use std::time::Instant;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ghz::GhzInstance;
use crate::lp::{LinearProgram, LpOutcome, Relation};
use crate::model::{self, all_vectors, CorrelationProblem, DeterministicLhv, Input, MixedLhv};
use crate::par;
use crate::protocol::{self, MixedProtocol, Randomness};
use crate::rational::{self, Exact, Rational};
use crate::rect::{self, ScanOptions, ScanResult};

const CHUNK: u128 = 1024;

/// Number of deterministic strategies: `base^{nk}`, `None` on overflow.
pub fn strategy_count(n: usize, k: u32, base: u32) -> Option<u128> {
    (base as u128).checked_pow(n as u32 * k)
}

/// Strategy at position `index` in lexicographic order over the per-party
/// tables (party 0, input 0 most significant). With `lossy`, digit `l`
/// stands for a detector that does not fire.
pub fn decode_strategy(index: u128, n: usize, k: u32, l: u32, lossy: bool) -> DeterministicLhv {
    let base = if lossy { l + 1 } else { l } as u128;
    let mut digits = vec![0u32; n * k as usize];
    let mut rest = index;
    for d in digits.iter_mut().rev() {
        *d = (rest % base) as u32;
        rest /= base;
    }
    let tables = digits
        .chunks(k as usize)
        .map(|t| t.iter().map(|&v| if v < l { Some(v) } else { None }).collect())
        .collect();
    DeterministicLhv::new(tables)
}

fn check_budget(count: Option<u128>, budget: u128) -> Result<u128> {
    match count {
        Some(c) if c <= budget => Ok(c),
        Some(c) => Err(Error::BudgetExceeded { requested: c, budget }),
        None => Err(Error::BudgetExceeded {
            requested: u128::MAX,
            budget,
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    MinError,
    EtaStar,
}

/// Which efficiency LP to solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LpVariant {
    /// All-click probability equal to `q` on every input.
    #[default]
    InputIndependent,
    /// All-click probability at least `q` on every input.
    Relaxed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub objective: Objective,
    pub n: usize,
    pub k: u32,
    pub l: u32,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub eps_budget: Option<Exact>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub variant: Option<LpVariant>,
    pub optimum: Exact,
    pub optimum_decimal: f64,
    pub witness: MixedLhv,
    /// Strategy index of the witness (first optimum in enumeration order).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub witness_index: Option<String>,
    /// Strategies attaining the optimum.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ties: Option<String>,
    pub tie_break: String,
    pub enumerated: String,
    /// Witness re-evaluated through the model metrics matches the optimum.
    pub verified: bool,
    pub wall_time_ms: f64,
}

struct ChunkBest {
    value: Rational,
    index: u128,
    ties: u128,
}

/// Minimum error over deterministic click-only strategies. Since the error
/// of a click-only mixture is the weighted average of its components, this
/// is also the minimum over all click-only mixtures.
pub fn best_deterministic_error(problem: &CorrelationProblem, budget: u128) -> Result<SearchReport> {
    let start = Instant::now();
    let (n, k, l) = (problem.n(), problem.k(), problem.l());
    let count = check_budget(strategy_count(n, k, l), budget)?;
    let support: Vec<(Input, Rational)> = problem.support().map(|(x, w)| (x.clone(), w.clone())).collect();
    let chunks = count.div_ceil(CHUNK) as usize;
    let bests = par::map_range(chunks, |c| {
        let lo = c as u128 * CHUNK;
        let hi = (lo + CHUNK).min(count);
        let mut best: Option<ChunkBest> = None;
        for idx in lo..hi {
            let lhv = decode_strategy(idx, n, k, l, false);
            let err: Rational = support
                .iter()
                .filter(|(x, _)| problem.is_forbidden(x, &lhv.apply(x)))
                .map(|(_, w)| w)
                .sum();
            match &mut best {
                Some(b) if err == b.value => b.ties += 1,
                Some(b) if err > b.value => {}
                _ => {
                    best = Some(ChunkBest {
                        value: err,
                        index: idx,
                        ties: 1,
                    })
                }
            }
        }
        best
    });
    let mut best: Option<ChunkBest> = None;
    for b in bests.into_iter().flatten() {
        match &mut best {
            Some(cur) if b.value == cur.value => cur.ties += b.ties,
            Some(cur) if b.value > cur.value => {}
            _ => best = Some(b),
        }
    }
    let best = best.ok_or_else(|| Error::InvalidInstance("empty strategy space".into()))?;
    let witness = MixedLhv::deterministic(decode_strategy(best.index, n, k, l, false));
    let d = model::evaluate_mixed_lhv(&witness, problem)?;
    let verified = model::error_probability(&d, problem)? == best.value;
    Ok(SearchReport {
        objective: Objective::MinError,
        n,
        k,
        l,
        eps_budget: None,
        variant: None,
        optimum_decimal: rational::to_f64(&best.value),
        optimum: Exact(best.value),
        witness,
        witness_index: Some(best.index.to_string()),
        ties: Some(best.ties.to_string()),
        tie_break: "first in lexicographic order".into(),
        enumerated: count.to_string(),
        verified,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Largest all-click probability `q` of a lossy mixture whose error is at
/// most `eps_budget`.
pub fn eta_star_lp(
    problem: &CorrelationProblem,
    eps_budget: &Rational,
    variant: LpVariant,
    budget: u128,
) -> Result<SearchReport> {
    let start = Instant::now();
    if *eps_budget < Rational::zero() {
        return Err(Error::Infeasible);
    }
    let (n, k, l) = (problem.n(), problem.k(), problem.l());
    let count = check_budget(strategy_count(n, k, l + 1), budget)?;
    let support: Vec<(Input, Rational)> = problem.support().map(|(x, w)| (x.clone(), w.clone())).collect();
    // Column per strategy: click pattern over the support and weighted wrong mass.
    let columns = par::map_range(count as usize, |idx| {
        let lhv = decode_strategy(idx as u128, n, k, l, true);
        let mut clicks = Vec::with_capacity(support.len());
        let mut wrong = Rational::zero();
        for (x, w) in &support {
            let a = lhv.apply(x);
            let click = a.all_click();
            if click && problem.is_forbidden(x, &a) {
                wrong += w;
            }
            clicks.push(click);
        }
        (clicks, wrong)
    });
    // Strategies with identical columns are interchangeable; keep the first.
    let mut first_of: BTreeMap<(Vec<bool>, Rational), usize> = BTreeMap::new();
    for (idx, col) in columns.into_iter().enumerate() {
        first_of.entry(col).or_insert(idx);
    }
    let mut kept: Vec<(usize, Vec<bool>, Rational)> =
        first_of.into_iter().map(|((c, w), i)| (i, c, w)).collect();
    kept.sort_by_key(|(i, _, _)| *i);

    let vars = kept.len() + 1;
    let q = kept.len();
    let mut objective = vec![Rational::zero(); vars];
    objective[q] = Rational::one();
    let mut lp = LinearProgram::new(objective);
    let mut row = vec![Rational::one(); vars];
    row[q] = Rational::zero();
    lp.add(row, Relation::Eq, Rational::one());
    let click_rel = match variant {
        LpVariant::InputIndependent => Relation::Eq,
        LpVariant::Relaxed => Relation::Ge,
    };
    for xi in 0..support.len() {
        let mut row: Vec<Rational> = kept
            .iter()
            .map(|(_, c, _)| if c[xi] { Rational::one() } else { Rational::zero() })
            .collect();
        row.push(-Rational::one());
        lp.add(row, click_rel, Rational::zero());
    }
    let mut row: Vec<Rational> = kept.iter().map(|(_, _, w)| w.clone()).collect();
    row.push(-eps_budget.clone());
    lp.add(row, Relation::Le, Rational::zero());

    let (x, value) = match lp.solve() {
        LpOutcome::Optimal { x, value, .. } => (x, value),
        LpOutcome::Infeasible => return Err(Error::Infeasible),
        LpOutcome::Unbounded => return Err(Error::InvalidModel("efficiency LP unbounded".into())),
    };
    let components: Vec<(DeterministicLhv, Rational)> = kept
        .iter()
        .zip(&x)
        .filter(|(_, v)| **v > Rational::zero())
        .map(|((i, _, _), v)| (decode_strategy(*i as u128, n, k, l, true), v.clone()))
        .collect();
    let witness = MixedLhv::new(components)?;
    let verified = verify_lp_witness(&witness, problem, &value, eps_budget, variant)?;
    Ok(SearchReport {
        objective: Objective::EtaStar,
        n,
        k,
        l,
        eps_budget: Some(Exact(eps_budget.clone())),
        variant: Some(variant),
        optimum_decimal: rational::to_f64(&value),
        optimum: Exact(value),
        witness,
        witness_index: None,
        ties: None,
        tie_break: "simplex with lowest-index pivoting over strategies in lexicographic order".into(),
        enumerated: count.to_string(),
        verified,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

fn verify_lp_witness(
    witness: &MixedLhv,
    problem: &CorrelationProblem,
    q: &Rational,
    eps_budget: &Rational,
    variant: LpVariant,
) -> Result<bool> {
    let d = model::evaluate_mixed_lhv(witness, problem)?;
    let per_input_ok = problem.support().all(|(x, _)| {
        let click: Rational = d.row(x).filter(|(a, _)| a.all_click()).map(|(_, p)| p).sum();
        match variant {
            LpVariant::InputIndependent => click == *q,
            LpVariant::Relaxed => click >= *q,
        }
    });
    let m = model::metrics(&d, problem)?;
    let error_ok = match &m.error {
        Some(e) => e.0 <= *eps_budget || variant == LpVariant::Relaxed,
        None => true,
    };
    let eff_ok = match variant {
        LpVariant::InputIndependent => m.efficiency.eta_n == *q,
        LpVariant::Relaxed => m.efficiency.eta_n >= *q,
    };
    Ok(per_input_ok && error_ok && eff_ok)
}

/// Settings for [`tradeoff_table`].
#[derive(Debug, Clone)]
pub struct TradeoffOptions {
    pub deltas: Vec<Rational>,
    pub scan: ScanOptions,
    /// Largest strategy count for which the efficiency LP is solved.
    pub lp_budget: u128,
    /// Largest `|D| · 2^{n-1}` for which constructed protocols are also
    /// measured through the model metrics.
    pub measure_cap: u128,
}

impl Default for TradeoffOptions {
    fn default() -> Self {
        TradeoffOptions {
            deltas: vec![
                rational::rat(1, 2),
                rational::rat(5, 8),
                rational::rat(3, 4),
                rational::rat(7, 8),
                rational::rat(15, 16),
            ],
            scan: ScanOptions::default(),
            lp_budget: 10_000,
            measure_cap: 1 << 20,
        }
    }
}

/// Parties `0..announced` broadcast their inputs, the rest answer locally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefixProtocol {
    pub announced: usize,
    pub cost: u32,
    pub error: Exact,
    /// How leaves were optimised: `exhaustive` or `majority`.
    pub leaf_rule: String,
    /// Error and converted all-click probability measured through the model
    /// metrics, when the instance is small enough.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub measured_error: Option<Exact>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub measured_converted_eta_n: Option<Exact>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpPoint {
    pub eps: Exact,
    pub eta_n: Exact,
    pub verified: bool,
}

/// One `(c, ε)` cell. `c` counts bits that are really broadcast; the rest of
/// a constructed protocol's conversation is guessed, which costs a factor 2
/// of all-click probability per guessed bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub c: u32,
    pub eps: Exact,
    pub achievable_eta_n: Exact,
    pub achievable_source: String,
    /// `2^{-c} η^n`: the zero-communication efficiency after guessing the
    /// remaining `c` bits as well.
    pub converted_eta_n: Exact,
    /// `η · 2^{-c/n}`.
    pub achievable_product: f64,
    /// Upper bound on `η^n` from the rectangle bound, capped at 1.
    pub bound_eta_n: Exact,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bound_delta: Option<Exact>,
    pub bound_product: f64,
    /// The bound rests on an exhaustive rectangle scan.
    pub bound_certified: bool,
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffTable {
    pub n: usize,
    pub k: u32,
    pub bits_per_announcement: u32,
    pub seed: u64,
    pub prefixes: Vec<PrefixProtocol>,
    pub lp: Vec<LpPoint>,
    pub scans: Vec<ScanResult>,
    pub rows: Vec<TradeoffRow>,
    pub wall_time_ms: f64,
}

impl TradeoffTable {
    pub fn all_consistent(&self) -> bool {
        self.rows.iter().all(|r| r.consistent)
    }
}

/// Leaf answer for one residue class of the announced sum.
#[derive(Debug, Clone)]
struct LeafPlan {
    /// Output tables of the silent parties.
    tables: Vec<Vec<u32>>,
    flip: u32,
    wrong: BigUint,
    total: BigUint,
}

const EXHAUSTIVE_WORK: u128 = 1 << 20;

/// Multiplicities of `Σ y mod modulus` for `y` uniform in `[k]^m`.
fn sum_counts(m: usize, k: u32, modulus: u64) -> Vec<BigUint> {
    let mut acc = vec![BigUint::zero(); modulus as usize];
    acc[0] = BigUint::one();
    for _ in 0..m {
        let mut next = vec![BigUint::zero(); modulus as usize];
        for (r, c) in acc.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            for v in 0..k as u64 {
                next[((r as u64 + v) % modulus) as usize] += c;
            }
        }
        acc = next;
    }
    acc
}

/// Best answer of `m` silent parties when the announced inputs sum to `s` (mod 2k).
fn plan_leaf(s: u64, m: usize, k: u32) -> (LeafPlan, &'static str) {
    let modulus = 2 * k as u64;
    let tables_count = 1u128.checked_shl(m as u32 * k).unwrap_or(u128::MAX);
    let completions = (k as u128).saturating_pow(m as u32 - 1);
    if tables_count.saturating_mul(completions) <= EXHAUSTIVE_WORK {
        let rows: Vec<(Vec<u32>, u32)> = all_vectors(m, k)
            .filter_map(|y| {
                let t = (s + y.iter().map(|&v| v as u64).sum::<u64>()) % modulus;
                t.is_multiple_of(k as u64).then(|| (y, (t / k as u64) as u32))
            })
            .collect();
        let total = rows.len() as u64;
        let mut best: Option<(u64, u128, u32)> = None;
        for bits in 0..tables_count {
            let wrong = rows
                .iter()
                .filter(|(y, f)| {
                    let p = y
                        .iter()
                        .enumerate()
                        .map(|(i, &v)| ((bits >> (i as u32 * k + v)) & 1) as u32)
                        .sum::<u32>()
                        % 2;
                    p != *f
                })
                .count() as u64;
            let (w, flip) = if total - wrong < wrong { (total - wrong, 1) } else { (wrong, 0) };
            if best.is_none_or(|(bw, _, _)| w < bw) {
                best = Some((w, bits, flip));
            }
        }
        let (w, bits, flip) = best.expect("at least one table");
        let tables = (0..m)
            .map(|i| (0..k).map(|v| ((bits >> (i as u32 * k + v)) & 1) as u32).collect())
            .collect();
        let plan = LeafPlan {
            tables,
            flip,
            wrong: BigUint::from(w),
            total: BigUint::from(total),
        };
        return (plan, "exhaustive");
    }
    let counts = sum_counts(m, k, modulus);
    let zero = &counts[((modulus - s) % modulus) as usize];
    let one = &counts[((modulus + k as u64 - s) % modulus) as usize];
    let (wrong, flip) = if one > zero { (zero.clone(), 1) } else { (one.clone(), 0) };
    let plan = LeafPlan {
        tables: vec![vec![0; k as usize]; m],
        flip,
        wrong,
        total: zero + one,
    };
    (plan, "majority")
}

fn leaf_lhv(plan: &LeafPlan, n: usize, k: u32) -> DeterministicLhv {
    let announced = n - plan.tables.len();
    let mut tables: Vec<Vec<u32>> = vec![vec![0; k as usize]; announced];
    tables.extend(plan.tables.iter().cloned());
    for v in tables[0].iter_mut() {
        *v ^= plan.flip;
    }
    DeterministicLhv::clicking(&tables)
}

/// Best prefix protocol with `announced` speakers and its exact error.
fn prefix_protocol(
    inst: &GhzInstance,
    announced: usize,
    problem: Option<&CorrelationProblem>,
) -> Result<PrefixProtocol> {
    let (n, k) = (inst.n(), inst.k());
    let modulus = 2 * k as u64;
    let m = n - announced;
    let plans: Vec<(LeafPlan, &str)> = (0..modulus).map(|s| plan_leaf(s, m, k)).collect();
    let prefix_counts = sum_counts(announced, k, modulus);
    let mut wrong = BigUint::zero();
    let mut total = BigUint::zero();
    for (c, (p, _)) in prefix_counts.iter().zip(&plans) {
        wrong += c * &p.wrong;
        total += c * &p.total;
    }
    let error = rational::ratio_of(&wrong, &total);
    let cost = announced as u32 * inst.input_bits();
    let (mut measured_error, mut measured_converted_eta_n) = (None, None);
    if let Some(problem) = problem {
        let tree = inst.broadcast_prefix(announced, &mut Vec::new(), &|known: &[u32]| {
            let s = known.iter().map(|&v| v as u64).sum::<u64>() % modulus;
            leaf_lhv(&plans[s as usize].0, n, k)
        });
        let mix = MixedProtocol::deterministic(tree, Randomness::Shared);
        let d = protocol::induced_distribution(&mix, problem)?;
        measured_error = Some(Exact(model::error_probability(&d, problem)?));
        let det = protocol::to_detector_model(&mix)?;
        let dd = model::evaluate_mixed_lhv(&det, problem)?;
        measured_converted_eta_n = Some(Exact(model::detection_efficiency(&dd, problem)?.eta_n));
    }
    Ok(PrefixProtocol {
        announced,
        cost,
        error: Exact(error),
        leaf_rule: plans[0].1.to_string(),
        measured_error,
        measured_converted_eta_n,
    })
}

/// Achievable and rectangle-bound efficiencies on a `(c, ε)` grid.
pub fn tradeoff_table(
    inst: &GhzInstance,
    c_grid: &[u32],
    eps_grid: &[Rational],
    opts: &TradeoffOptions,
) -> Result<TradeoffTable> {
    let start = Instant::now();
    let (n, k) = (inst.n(), inst.k());
    let bits = inst.input_bits();
    // prefix protocols convolve `n` residue vectors of length 2k for each of `n` prefix lengths
    let prefix_work = (n as u128).pow(2).saturating_mul(2 * k as u128);
    if prefix_work > opts.scan.budget {
        return Err(Error::BudgetExceeded {
            requested: prefix_work,
            budget: opts.scan.budget,
        });
    }
    let scans = rect::scan_rectangles_grid(inst, &opts.deltas, &opts.scan)?;

    let outcomes = 1u128.checked_shl(n as u32 - 1).unwrap_or(u128::MAX);
    let problem = if inst.valid_count().saturating_mul(outcomes) <= opts.measure_cap {
        Some(inst.problem(opts.measure_cap)?)
    } else {
        None
    };
    let prefixes = (0..n)
        .map(|j| prefix_protocol(inst, j, problem.as_ref()))
        .collect::<Result<Vec<_>>>()?;

    let lp_feasible = strategy_count(n, k, 3).is_some_and(|c| c <= opts.lp_budget);
    let lp = match (&problem, lp_feasible) {
        (Some(p), true) => eps_grid
            .iter()
            .map(|e| {
                eta_star_lp(p, e, LpVariant::InputIndependent, opts.lp_budget).map(|r| LpPoint {
                    eps: Exact(e.clone()),
                    eta_n: r.optimum,
                    verified: r.verified,
                })
            })
            .collect::<Result<Vec<_>>>()?,
        _ => Vec::new(),
    };

    let mut rows = Vec::new();
    for &c in c_grid {
        let real_speakers = (c / bits.max(1)) as usize;
        for eps in eps_grid {
            let mut best: Option<(Rational, String)> = None;
            let mut offer = |v: Rational, src: String| {
                if best.as_ref().is_none_or(|(b, _)| v > *b) {
                    best = Some((v, src));
                }
            };
            if let Some(pt) = lp.iter().find(|pt| pt.eps.0 == *eps) {
                offer(pt.eta_n.0.clone(), "lp".into());
            }
            for p in prefixes.iter().filter(|p| p.error.0 <= *eps) {
                let real = p.announced.min(real_speakers);
                let guessed = (p.announced - real) as u32 * bits;
                let v = rational::ratio_of(&BigUint::one(), &rational::pow2(guessed));
                offer(v, format!("prefix(announced={}, guessed_bits={guessed})", p.announced));
            }
            let (achievable, source) = best.unwrap_or((Rational::zero(), "none".into()));

            let mut bound = Rational::one();
            let mut bound_delta = None;
            let mut certified = true;
            for s in &scans {
                if let Some(b) = rect::eta_n_upper_bound(&s.delta, &s.r_cap, c, eps, 2, n)? {
                    if b < bound {
                        bound = b;
                        bound_delta = Some(Exact(s.delta.clone()));
                        certified = s.exhaustive;
                    }
                }
            }
            let scale = 2f64.powf(-(c as f64) / n as f64);
            let eta = |v: &Rational| rational::to_f64(v).powf(1.0 / n as f64);
            rows.push(TradeoffRow {
                c,
                eps: Exact(eps.clone()),
                converted_eta_n: Exact(&achievable / rational::from_big(&rational::pow2(c))),
                achievable_product: eta(&achievable) * scale,
                bound_product: eta(&bound) * scale,
                consistent: achievable <= bound,
                achievable_eta_n: Exact(achievable),
                achievable_source: source,
                bound_eta_n: Exact(bound),
                bound_delta,
                bound_certified: certified,
            });
        }
    }
    Ok(TradeoffTable {
        n,
        k,
        bits_per_announcement: bits,
        seed: opts.scan.seed,
        prefixes,
        lp,
        scans,
        rows,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ghz::DEFAULT_ENUMERATION_CAP;
    use crate::model::Outcome;
    use crate::rational::{int, rat};

    fn ghz(n: usize, k: u32) -> (GhzInstance, CorrelationProblem) {
        let g = GhzInstance::new(n, k).unwrap();
        let p = g.problem(DEFAULT_ENUMERATION_CAP).unwrap();
        (g, p)
    }

    /// Straight loop over every table assignment, no chunking or decoding.
    fn min_error_oracle(p: &CorrelationProblem) -> Rational {
        let (n, k) = (p.n(), p.k());
        let mut best: Option<Rational> = None;
        for flat in all_vectors(n * k as usize, p.l()) {
            let err: Rational = p
                .support()
                .filter(|(x, _)| {
                    let a: Vec<u32> = x.iter().enumerate().map(|(i, &xi)| flat[i * k as usize + xi as usize]).collect();
                    p.is_forbidden(x, &Outcome::clicks(&a))
                })
                .map(|(_, w)| w)
                .sum();
            if best.as_ref().is_none_or(|b| err < *b) {
                best = Some(err);
            }
        }
        best.unwrap()
    }

    #[test]
    fn decode_order_is_lexicographic() {
        assert_eq!(decode_strategy(0, 2, 2, 2, false).tables, vec![vec![Some(0), Some(0)]; 2]);
        let last = decode_strategy(1, 2, 2, 2, false);
        assert_eq!(last.tables[1], vec![Some(0), Some(1)]);
        let lossy = decode_strategy(2, 1, 2, 2, true);
        assert_eq!(lossy.tables[0], vec![Some(0), None]);
    }

    #[test]
    fn mermin_figures() {
        let (_, p3) = ghz(3, 2);
        assert_eq!(min_error_oracle(&p3), rat(1, 4));
        let r = best_deterministic_error(&p3, 1 << 20).unwrap();
        assert_eq!(r.optimum.0, rat(1, 4));
        assert!(r.verified);
        assert_eq!(r.enumerated, "64");
        let (_, p2) = ghz(2, 2);
        assert_eq!(min_error_oracle(&p2), int(0));
        let r = best_deterministic_error(&p2, 1 << 20).unwrap();
        assert_eq!(r.optimum.0, int(0));
    }

    #[test]
    fn full_support_target_has_no_error() {
        let xs: Vec<Input> = all_vectors(2, 2).collect();
        let outs: Vec<Outcome> = all_vectors(2, 2).map(|a| Outcome::clicks(&a)).collect();
        let target: Vec<_> = xs
            .iter()
            .flat_map(|x| outs.iter().map(|a| (x.clone(), a.clone(), rat(1, 4))))
            .collect();
        let p = CorrelationProblem::new(2, 2, 2, xs.iter().map(|x| (x.clone(), rat(1, 4))), target).unwrap();
        assert_eq!(best_deterministic_error(&p, 1 << 10).unwrap().optimum.0, int(0));
    }

    #[test]
    fn over_budget() {
        let (_, p) = ghz(3, 2);
        assert!(matches!(
            best_deterministic_error(&p, 10),
            Err(Error::BudgetExceeded { requested: 64, budget: 10 })
        ));
        assert!(matches!(
            eta_star_lp(&p, &int(0), LpVariant::InputIndependent, 100),
            Err(Error::BudgetExceeded { requested: 729, .. })
        ));
    }

    #[test]
    fn lp_examples() {
        let (_, p3) = ghz(3, 2);
        assert_eq!(eta_star_lp(&p3, &int(1), LpVariant::InputIndependent, 1000).unwrap().optimum.0, int(1));
        assert!(matches!(
            eta_star_lp(&p3, &int(-1), LpVariant::InputIndependent, 1000),
            Err(Error::Infeasible)
        ));
        let (_, p2) = ghz(2, 2);
        let r = eta_star_lp(&p2, &int(0), LpVariant::InputIndependent, 1000).unwrap();
        assert_eq!(r.optimum.0, int(1));
        let r = eta_star_lp(&p3, &int(0), LpVariant::InputIndependent, 1000).unwrap();
        assert!(r.verified);
        // one announced bit already gives a zero-error protocol
        assert!(r.optimum.0 >= rat(1, 2));
        assert!(r.optimum.0 < int(1));
    }

    #[test]
    fn lp_monotone_in_budget() {
        let (_, p) = ghz(3, 2);
        let mut prev = int(0);
        for e in [rat(0, 1), rat(1, 16), rat(1, 8), rat(1, 4), rat(1, 2)] {
            let r = eta_star_lp(&p, &e, LpVariant::InputIndependent, 1000).unwrap();
            assert!(r.verified);
            assert!(r.optimum.0 >= prev);
            prev = r.optimum.0;
        }
        assert_eq!(prev, int(1));
    }

    #[test]
    fn relaxed_variant_dominates() {
        let (_, p) = ghz(3, 2);
        let strict = eta_star_lp(&p, &int(0), LpVariant::InputIndependent, 1000).unwrap();
        let relaxed = eta_star_lp(&p, &int(0), LpVariant::Relaxed, 1000).unwrap();
        assert!(relaxed.optimum.0 >= strict.optimum.0);
    }

    #[test]
    fn leaf_plans_match_brute_force() {
        // last party alone always knows F
        for k in [2u32, 4] {
            for s in 0..2 * k as u64 {
                let (plan, rule) = plan_leaf(s, 1, k);
                assert_eq!(rule, "exhaustive");
                assert!(plan.wrong.is_zero());
            }
        }
        // nobody announces at n=3, k=2: Mermin error
        let (plan, _) = plan_leaf(0, 3, 2);
        assert_eq!(rational::ratio_of(&plan.wrong, &plan.total), rat(1, 4));
        // majority rule on a big residual instance
        let (plan, rule) = plan_leaf(0, 12, 2);
        assert_eq!(rule, "majority");
        assert_eq!(plan.total, BigUint::from(1u32 << 11));
    }

    #[test]
    fn prefix_errors_agree_with_measurement() {
        for (n, k) in [(3, 2), (4, 2), (3, 4), (5, 2)] {
            let (g, p) = ghz(n, k);
            for j in 0..n {
                let pp = prefix_protocol(&g, j, Some(&p)).unwrap();
                assert_eq!(pp.measured_error.as_ref().unwrap(), &pp.error, "n={n} k={k} j={j}");
                let conv = pp.measured_converted_eta_n.unwrap().0;
                assert_eq!(conv, rational::ratio_of(&BigUint::one(), &rational::pow2(pp.cost)));
            }
            assert!(prefix_protocol(&g, n - 1, None).unwrap().error.0.is_zero());
        }
    }

    #[test]
    fn tradeoff_small_instance() {
        let g = GhzInstance::new(3, 2).unwrap();
        let eps = vec![int(0), rat(1, 4)];
        let t = tradeoff_table(&g, &[0, 1, 3], &eps, &TradeoffOptions::default()).unwrap();
        assert_eq!(t.rows.len(), 6);
        assert!(t.all_consistent());
        let lp0 = &t.lp[0];
        let row00 = &t.rows[0];
        assert_eq!(row00.achievable_eta_n, lp0.eta_n);
        assert_eq!(row00.achievable_source, "lp");
        // the LP cannot beat converting the one-bit zero-error protocol
        assert_eq!(lp0.eta_n.0, rat(1, 2));
        // c = n⌈log2 k⌉ real bits: nothing left to guess
        let full = t.rows.iter().find(|r| r.c == 3 && r.eps.0.is_zero()).unwrap();
        assert_eq!(full.achievable_eta_n.0, int(1));
        assert_eq!(full.converted_eta_n.0, rat(1, 8));
        // error budget 1/4 needs no communication at all
        let mermin = t.rows.iter().find(|r| r.c == 0 && r.eps.0 == rat(1, 4)).unwrap();
        assert_eq!(mermin.achievable_eta_n.0, int(1));
        let empty = tradeoff_table(&g, &[], &eps, &TradeoffOptions::default()).unwrap();
        assert!(empty.rows.is_empty());
    }
}
