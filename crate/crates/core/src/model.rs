//! Correlation problems, local hidden-variable models and the three
//! imperfection measures: detection efficiency, error probability and
//! total-variation error.
//!
//! All probabilities are exact rationals. A detector that fails to fire is
//! represented by `None` in an [`Outcome`] and by the string `"null-click"`
//! in JSON.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::rational::{self, Exact, Rational};

/// One input per party, each in `0..k`.
pub type Input = Vec<u32>;

pub const NO_CLICK: &str = "null-click";

/// Serde adaptor for a sequence of outputs where `None` is a missing click.
pub mod symbols {
    use super::NO_CLICK;
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Symbol {
        Value(u32),
        Tag(String),
    }

    pub fn serialize<S: Serializer>(v: &[Option<u32>], s: S) -> Result<S::Ok, S::Error> {
        let seq: Vec<Symbol> = v
            .iter()
            .map(|o| match o {
                Some(x) => Symbol::Value(*x),
                None => Symbol::Tag(NO_CLICK.to_string()),
            })
            .collect();
        seq.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Option<u32>>, D::Error> {
        Vec::<Symbol>::deserialize(d)?
            .into_iter()
            .map(|s| match s {
                Symbol::Value(x) => Ok(Some(x)),
                Symbol::Tag(t) if t == NO_CLICK => Ok(None),
                Symbol::Tag(t) => Err(D::Error::custom(format!("unknown output symbol {t:?}"))),
            })
            .collect()
    }
}

/// Joint output of all parties; `None` marks a detector that did not click.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Outcome(pub Vec<Option<u32>>);

impl Outcome {
    pub fn clicks(values: &[u32]) -> Self {
        Outcome(values.iter().map(|&v| Some(v)).collect())
    }

    /// The all-click predicate.
    pub fn all_click(&self) -> bool {
        self.0.iter().all(Option::is_some)
    }

    /// Click values when every detector fired.
    pub fn click_values(&self) -> Option<Vec<u32>> {
        self.0.iter().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            match v {
                Some(x) => write!(f, "{x}")?,
                None => f.write_str("_")?,
            }
        }
        f.write_str(")")
    }
}

impl Serialize for Outcome {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        symbols::serialize(&self.0, s)
    }
}

impl<'de> Deserialize<'de> for Outcome {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        symbols::deserialize(d).map(Outcome)
    }
}

/// Every vector in `{0..base-1}^len`, lexicographic.
pub fn all_vectors(len: usize, base: u32) -> impl Iterator<Item = Vec<u32>> {
    let total = (base as u128).checked_pow(len as u32).unwrap_or(u128::MAX);
    let mut cur = vec![0u32; len];
    let mut emitted: u128 = 0;
    std::iter::from_fn(move || {
        if emitted >= total {
            return None;
        }
        let out = cur.clone();
        emitted += 1;
        for slot in cur.iter_mut().rev() {
            *slot += 1;
            if *slot < base {
                break;
            }
            *slot = 0;
        }
        Some(out)
    })
}

/// An `(n, k, l)` correlation problem: input distribution plus target
/// conditional output distributions on its support.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ProblemWire", into = "ProblemWire")]
pub struct CorrelationProblem {
    n: usize,
    k: u32,
    l: u32,
    mu: BTreeMap<Input, Rational>,
    target: BTreeMap<Input, BTreeMap<Outcome, Rational>>,
}

impl CorrelationProblem {
    /// Builds and validates a problem. Zero weights and zero target entries
    /// are dropped; targets for inputs outside the support are ignored.
    pub fn new(
        n: usize,
        k: u32,
        l: u32,
        mu: impl IntoIterator<Item = (Input, Rational)>,
        target: impl IntoIterator<Item = (Input, Outcome, Rational)>,
    ) -> Result<Self> {
        if n == 0 || k == 0 || l == 0 {
            return Err(Error::InvalidInstance(format!(
                "need n, k, l >= 1 (got n={n}, k={k}, l={l})"
            )));
        }
        let mut weights = BTreeMap::new();
        for (x, w) in mu {
            check_input(&x, n, k)?;
            if w.is_negative() {
                return Err(Error::InvalidInstance(format!("negative weight at {x:?}")));
            }
            if w.is_zero() {
                continue;
            }
            if weights.insert(x.clone(), w).is_some() {
                return Err(Error::InvalidInstance(format!("duplicate weight for {x:?}")));
            }
        }
        let total: Rational = weights.values().sum();
        if !total.is_one() {
            return Err(Error::InvalidInstance(format!("input weights sum to {total}, not 1")));
        }
        let mut tgt: BTreeMap<Input, BTreeMap<Outcome, Rational>> = BTreeMap::new();
        for (x, a, p) in target {
            check_input(&x, n, k)?;
            check_outcome(&a, n, l)?;
            if p.is_negative() {
                return Err(Error::InvalidInstance(format!("negative target at {x:?}, {a}")));
            }
            if p.is_zero() || !weights.contains_key(&x) {
                continue;
            }
            if tgt.entry(x.clone()).or_default().insert(a.clone(), p).is_some() {
                return Err(Error::InvalidInstance(format!("duplicate target for {x:?}, {a}")));
            }
        }
        for x in weights.keys() {
            let s: Rational = tgt.get(x).map(|m| m.values().sum()).unwrap_or_else(Rational::zero);
            if !s.is_one() {
                return Err(Error::InvalidInstance(format!(
                    "target distribution at {x:?} sums to {s}, not 1"
                )));
            }
        }
        Ok(CorrelationProblem {
            n,
            k,
            l,
            mu: weights,
            target: tgt,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn l(&self) -> u32 {
        self.l
    }

    /// Inputs with positive weight, with their weights.
    pub fn support(&self) -> impl Iterator<Item = (&Input, &Rational)> {
        self.mu.iter()
    }

    pub fn support_len(&self) -> usize {
        self.mu.len()
    }

    pub fn weight(&self, x: &[u32]) -> Rational {
        self.mu.get(x).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn target(&self, x: &[u32], a: &Outcome) -> Rational {
        self.target
            .get(x)
            .and_then(|m| m.get(a))
            .cloned()
            .unwrap_or_else(Rational::zero)
    }

    /// Outcomes with nonzero target probability at `x`.
    pub fn target_row(&self, x: &[u32]) -> impl Iterator<Item = (&Outcome, &Rational)> {
        self.target.get(x).into_iter().flat_map(|m| m.iter())
    }

    /// The forbidden-event indicator: an all-click outcome the target never produces.
    pub fn is_forbidden(&self, x: &[u32], a: &Outcome) -> bool {
        a.all_click() && self.target(x, a).is_zero()
    }

    pub fn check_input(&self, x: &[u32]) -> Result<()> {
        check_input(x, self.n, self.k)
    }
}

fn check_input(x: &[u32], n: usize, k: u32) -> Result<()> {
    if x.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: x.len(),
        });
    }
    if let Some(v) = x.iter().find(|&&v| v >= k) {
        return Err(Error::InvalidInput(format!("input value {v} is not below k={k}")));
    }
    Ok(())
}

fn check_outcome(a: &Outcome, n: usize, l: u32) -> Result<()> {
    if a.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: a.len(),
        });
    }
    if let Some(v) = a.0.iter().flatten().find(|&&v| v >= l) {
        return Err(Error::InvalidInput(format!("output value {v} is not below l={l}")));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct WeightEntry {
    x: Input,
    weight: Exact,
}

#[derive(Serialize, Deserialize)]
struct TargetEntry {
    x: Input,
    a: Outcome,
    p: Exact,
}

#[derive(Serialize, Deserialize)]
struct ProblemWire {
    n: usize,
    k: u32,
    l: u32,
    mu: Vec<WeightEntry>,
    target: Vec<TargetEntry>,
}

impl TryFrom<ProblemWire> for CorrelationProblem {
    type Error = Error;

    fn try_from(w: ProblemWire) -> Result<Self> {
        CorrelationProblem::new(
            w.n,
            w.k,
            w.l,
            w.mu.into_iter().map(|e| (e.x, e.weight.0)),
            w.target.into_iter().map(|e| (e.x, e.a, e.p.0)),
        )
    }
}

impl From<CorrelationProblem> for ProblemWire {
    fn from(p: CorrelationProblem) -> Self {
        let target = p
            .target
            .iter()
            .flat_map(|(x, row)| {
                row.iter().map(move |(a, v)| TargetEntry {
                    x: x.clone(),
                    a: a.clone(),
                    p: Exact(v.clone()),
                })
            })
            .collect();
        ProblemWire {
            n: p.n,
            k: p.k,
            l: p.l,
            mu: p
                .mu
                .into_iter()
                .map(|(x, w)| WeightEntry { x, weight: Exact(w) })
                .collect(),
            target,
        }
    }
}

/// Deterministic strategy: party `i` answers `tables[i][x_i]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DeterministicLhv {
    #[serde(with = "table_serde")]
    pub tables: Vec<Vec<Option<u32>>>,
}

mod table_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Row(#[serde(with = "super::symbols")] Vec<Option<u32>>);

    pub fn serialize<S: Serializer>(t: &[Vec<Option<u32>>], s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Row> = t.iter().cloned().map(Row).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<Option<u32>>>, D::Error> {
        Ok(Vec::<Row>::deserialize(d)?.into_iter().map(|r| r.0).collect())
    }
}

impl DeterministicLhv {
    pub fn new(tables: Vec<Vec<Option<u32>>>) -> Self {
        DeterministicLhv { tables }
    }

    /// Every party answers `value` on every input.
    pub fn constant(n: usize, k: u32, value: Option<u32>) -> Self {
        DeterministicLhv {
            tables: vec![vec![value; k as usize]; n],
        }
    }

    /// Click-only strategy from per-party tables.
    pub fn clicking(tables: &[Vec<u32>]) -> Self {
        DeterministicLhv {
            tables: tables
                .iter()
                .map(|t| t.iter().map(|&v| Some(v)).collect())
                .collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.tables.len()
    }

    pub fn validate(&self, n: usize, k: u32, l: u32) -> Result<()> {
        if self.tables.len() != n {
            return Err(Error::ArityMismatch(format!(
                "strategy has {} parties, problem has {n}",
                self.tables.len()
            )));
        }
        for (i, t) in self.tables.iter().enumerate() {
            if t.len() != k as usize {
                return Err(Error::ArityMismatch(format!(
                    "party {i} table covers {} inputs, expected {k}",
                    t.len()
                )));
            }
            if let Some(v) = t.iter().flatten().find(|&&v| v >= l) {
                return Err(Error::ArityMismatch(format!(
                    "party {i} outputs {v}, outside 0..{l}"
                )));
            }
        }
        Ok(())
    }

    pub fn apply(&self, x: &[u32]) -> Outcome {
        Outcome(
            self.tables
                .iter()
                .zip(x)
                .map(|(t, &xi)| t[xi as usize])
                .collect(),
        )
    }

    pub fn is_click_only(&self) -> bool {
        self.tables.iter().flatten().all(Option::is_some)
    }

    /// Per-party preimages of `a`; their product is `{x : apply(x) = a}`.
    pub fn preimage(&self, a: &Outcome) -> Vec<Vec<u32>> {
        self.tables
            .iter()
            .zip(&a.0)
            .map(|(t, ai)| {
                t.iter()
                    .enumerate()
                    .filter(|(_, v)| *v == ai)
                    .map(|(x, _)| x as u32)
                    .collect()
            })
            .collect()
    }
}

/// Convex mixture of deterministic strategies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "MixedWire", into = "MixedWire")]
pub struct MixedLhv {
    components: Vec<(DeterministicLhv, Rational)>,
}

impl MixedLhv {
    pub fn new(components: Vec<(DeterministicLhv, Rational)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidModel("mixture has no components".into()));
        }
        if components.iter().any(|(_, w)| !w.is_positive()) {
            return Err(Error::InvalidModel("mixture weights must be positive".into()));
        }
        let total: Rational = components.iter().map(|(_, w)| w).sum();
        if !total.is_one() {
            return Err(Error::InvalidModel(format!("mixture weights sum to {total}")));
        }
        let n = components[0].0.n();
        if components.iter().any(|(c, _)| c.n() != n) {
            return Err(Error::InvalidModel("components disagree on party count".into()));
        }
        Ok(MixedLhv { components })
    }

    pub fn deterministic(lhv: DeterministicLhv) -> Self {
        MixedLhv {
            components: vec![(lhv, Rational::one())],
        }
    }

    /// Equal-weight mixture.
    pub fn uniform(lhvs: Vec<DeterministicLhv>) -> Result<Self> {
        let w = rational::rat(1, lhvs.len().max(1) as i64);
        MixedLhv::new(lhvs.into_iter().map(|l| (l, w.clone())).collect())
    }

    pub fn components(&self) -> &[(DeterministicLhv, Rational)] {
        &self.components
    }
}

#[derive(Serialize, Deserialize)]
struct ComponentWire {
    lhv: DeterministicLhv,
    weight: Exact,
}

#[derive(Serialize, Deserialize)]
struct MixedWire {
    components: Vec<ComponentWire>,
}

impl TryFrom<MixedWire> for MixedLhv {
    type Error = Error;

    fn try_from(w: MixedWire) -> Result<Self> {
        MixedLhv::new(w.components.into_iter().map(|c| (c.lhv, c.weight.0)).collect())
    }
}

impl From<MixedLhv> for MixedWire {
    fn from(m: MixedLhv) -> Self {
        MixedWire {
            components: m
                .components
                .into_iter()
                .map(|(lhv, w)| ComponentWire { lhv, weight: Exact(w) })
                .collect(),
        }
    }
}

/// Output distribution of a classical model on each supported input.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "DistributionWire", into = "DistributionWire")]
pub struct ModelDistribution {
    probs: BTreeMap<Input, BTreeMap<Outcome, Rational>>,
}

impl ModelDistribution {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `p` to `P(a|x)`.
    pub fn add(&mut self, x: &[u32], a: Outcome, p: &Rational) {
        let slot = self
            .probs
            .entry(x.to_vec())
            .or_default()
            .entry(a)
            .or_insert_with(Rational::zero);
        *slot += p;
    }

    pub fn prob(&self, x: &[u32], a: &Outcome) -> Rational {
        self.probs
            .get(x)
            .and_then(|m| m.get(a))
            .cloned()
            .unwrap_or_else(Rational::zero)
    }

    pub fn row(&self, x: &[u32]) -> impl Iterator<Item = (&Outcome, &Rational)> {
        self.probs.get(x).into_iter().flat_map(|m| m.iter())
    }

    pub fn inputs(&self) -> impl Iterator<Item = &Input> {
        self.probs.keys()
    }

    /// Each row must be a probability distribution.
    pub fn validate(&self) -> Result<()> {
        for (x, row) in &self.probs {
            if row.values().any(Signed::is_negative) {
                return Err(Error::InvalidModel(format!("negative probability at {x:?}")));
            }
            let s: Rational = row.values().sum();
            if !s.is_one() {
                return Err(Error::InvalidModel(format!("row {x:?} sums to {s}")));
            }
        }
        Ok(())
    }

    /// Restricts to all-click outcomes and renormalises each row.
    pub fn click_conditioned(&self) -> ModelDistribution {
        let mut out = ModelDistribution::new();
        for (x, row) in &self.probs {
            let mass: Rational = row
                .iter()
                .filter(|(a, _)| a.all_click())
                .map(|(_, p)| p)
                .sum();
            if mass.is_zero() {
                continue;
            }
            for (a, p) in row.iter().filter(|(a, _)| a.all_click()) {
                if !p.is_zero() {
                    out.add(x, a.clone(), &(p / &mass));
                }
            }
        }
        out
    }

    /// Drops explicit zero entries so that equality is structural.
    pub fn pruned(mut self) -> ModelDistribution {
        for row in self.probs.values_mut() {
            row.retain(|_, p| !p.is_zero());
        }
        self
    }
}

#[derive(Serialize, Deserialize)]
struct DistributionWire {
    probs: Vec<TargetEntry>,
}

impl TryFrom<DistributionWire> for ModelDistribution {
    type Error = Error;

    fn try_from(w: DistributionWire) -> Result<Self> {
        let mut d = ModelDistribution::new();
        for e in w.probs {
            d.add(&e.x, e.a, &e.p.0);
        }
        d.validate()?;
        Ok(d)
    }
}

impl From<ModelDistribution> for DistributionWire {
    fn from(d: ModelDistribution) -> Self {
        DistributionWire {
            probs: d
                .probs
                .into_iter()
                .flat_map(|(x, row)| {
                    row.into_iter().map(move |(a, p)| TargetEntry {
                        x: x.clone(),
                        a,
                        p: Exact(p),
                    })
                })
                .collect(),
        }
    }
}

/// `P(a|x) = Σ` weights of the components with `λ(x) = a`.
pub fn evaluate_mixed_lhv(m: &MixedLhv, problem: &CorrelationProblem) -> Result<ModelDistribution> {
    for (lhv, _) in &m.components {
        lhv.validate(problem.n, problem.k, problem.l)?;
    }
    let mut d = ModelDistribution::new();
    for (x, _) in problem.support() {
        for (lhv, w) in &m.components {
            d.add(x, lhv.apply(x), w);
        }
    }
    Ok(d)
}

/// All-click probability `η^n` (exact) and `η` (its real n-th root).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Efficiency {
    #[serde(with = "rational::serde_rational")]
    pub eta_n: Rational,
    pub eta: f64,
}

impl Efficiency {
    pub fn from_eta_n(eta_n: Rational, n: usize) -> Self {
        let eta = rational::to_f64(&eta_n).powf(1.0 / n as f64);
        Efficiency { eta_n, eta }
    }
}

fn ensure_covers(d: &ModelDistribution, problem: &CorrelationProblem) -> Result<()> {
    match problem.support().find(|(x, _)| !d.probs.contains_key(*x)) {
        Some((x, _)) => Err(Error::InvalidModel(format!(
            "distribution is undefined at supported input {x:?}"
        ))),
        None => Ok(()),
    }
}

pub fn detection_efficiency(d: &ModelDistribution, problem: &CorrelationProblem) -> Result<Efficiency> {
    ensure_covers(d, problem)?;
    let eta_n: Rational = problem
        .support()
        .map(|(x, w)| {
            let click: Rational = d.row(x).filter(|(a, _)| a.all_click()).map(|(_, p)| p).sum();
            w * click
        })
        .sum();
    Ok(Efficiency::from_eta_n(eta_n, problem.n))
}

/// Click-conditioned probability of an outcome the target forbids.
pub fn error_probability(d: &ModelDistribution, problem: &CorrelationProblem) -> Result<Rational> {
    let eff = detection_efficiency(d, problem)?;
    if eff.eta_n.is_zero() {
        return Err(Error::DivisionByZeroEfficiency);
    }
    let wrong: Rational = problem
        .support()
        .map(|(x, w)| {
            let bad: Rational = d
                .row(x)
                .filter(|(a, _)| problem.is_forbidden(x, a))
                .map(|(_, p)| p)
                .sum();
            w * bad
        })
        .sum();
    Ok(wrong / eff.eta_n)
}

/// Click-conditioned L1 distance between the model and the target.
pub fn total_variation_error(d: &ModelDistribution, problem: &CorrelationProblem) -> Result<Rational> {
    let eff = detection_efficiency(d, problem)?;
    if eff.eta_n.is_zero() {
        return Err(Error::DivisionByZeroEfficiency);
    }
    // The target is compared at the same detector efficiency as the model.
    let scale = &eff.eta_n;
    let mut acc = Rational::zero();
    for (x, w) in problem.support() {
        let mut l1 = Rational::zero();
        for (a, p) in d.row(x).filter(|(a, _)| a.all_click()) {
            l1 += (problem.target(x, a) * scale - p).abs();
        }
        // target mass on all-click outcomes the model never produces
        for (a, q) in problem.target_row(x).filter(|(a, _)| a.all_click()) {
            if d.prob(x, a).is_zero() {
                l1 += q * scale;
            }
        }
        acc += w * l1;
    }
    Ok(acc / eff.eta_n)
}

/// All figures of merit in one pass; error measures are `None` when `η^n = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub efficiency: Efficiency,
    pub error: Option<Exact>,
    pub total_variation: Option<Exact>,
}

pub fn metrics(d: &ModelDistribution, problem: &CorrelationProblem) -> Result<Metrics> {
    let efficiency = detection_efficiency(d, problem)?;
    let (error, total_variation) = if efficiency.eta_n.is_zero() {
        (None, None)
    } else {
        (
            Some(Exact(error_probability(d, problem)?)),
            Some(Exact(total_variation_error(d, problem)?)),
        )
    };
    Ok(Metrics {
        efficiency,
        error,
        total_variation,
    })
}
