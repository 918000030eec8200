//! Broadcast communication protocols, their cost, the distributions they
//! induce, and the conversion of a shared-randomness protocol into a
//! zero-communication model with lossy detectors.
//!
//! A protocol is a tree. At an internal node one party announces which
//! block of a partition of `{0..k-1}` its input lies in; every party hears
//! the announcement. Each leaf carries a click-only local strategy.
//!
//! JSON layout (parties and inputs are 0-based):
//!
//! ```text
//! {"node": {"party": 0, "edges": [{"inputs": [0], "child": {...}},
//!                                 {"inputs": [1], "child": {...}}]}}
//! {"leaf": {"tables": [[0, 1], [1, 1]]}}
//! ```

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CorrelationProblem, DeterministicLhv, MixedLhv, ModelDistribution, Outcome};
use crate::par;
use crate::rational::{self, Exact, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub inputs: Vec<u32>,
    pub child: ProtocolTree,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProtocolTree {
    #[serde(rename = "node")]
    Node { party: usize, edges: Vec<Edge> },
    #[serde(rename = "leaf")]
    Leaf(DeterministicLhv),
}

/// `⌈log₂ t⌉`, with `t ≤ 1` costing nothing.
pub fn ceil_log2(t: usize) -> u32 {
    if t <= 1 {
        0
    } else {
        usize::BITS - (t - 1).leading_zeros()
    }
}

/// A leaf together with the per-party inputs consistent with the conversation leading to it.
#[derive(Debug, Clone)]
pub struct Conversation<'a> {
    pub lhv: &'a DeterministicLhv,
    /// `allowed[i][x]`: input `x` of party `i` agrees with every announcement on the path.
    pub allowed: Vec<Vec<bool>>,
    pub bits: u32,
}

impl ProtocolTree {
    pub fn leaf(lhv: DeterministicLhv) -> Self {
        ProtocolTree::Leaf(lhv)
    }

    pub fn node(party: usize, edges: Vec<(Vec<u32>, ProtocolTree)>) -> Self {
        ProtocolTree::Node {
            party,
            edges: edges
                .into_iter()
                .map(|(inputs, child)| Edge { inputs, child })
                .collect(),
        }
    }

    /// Party count and inputs per party, read off the first leaf.
    pub fn shape(&self) -> (usize, u32) {
        match self {
            ProtocolTree::Leaf(l) => (l.n(), l.tables.first().map_or(0, |t| t.len() as u32)),
            ProtocolTree::Node { edges, .. } => edges.first().map_or((0, 0), |e| e.child.shape()),
        }
    }

    pub fn validate(&self, n: usize, k: u32, l: u32) -> Result<()> {
        match self {
            ProtocolTree::Leaf(lhv) => {
                lhv.validate(n, k, l)?;
                if !lhv.is_click_only() {
                    return Err(Error::MalformedTree("leaf strategies must always click".into()));
                }
                Ok(())
            }
            ProtocolTree::Node { party, edges } => {
                if *party >= n {
                    return Err(Error::MalformedTree(format!(
                        "speaker {party} does not exist among {n} parties"
                    )));
                }
                check_partition(edges, k)?;
                edges.iter().try_for_each(|e| e.child.validate(n, k, l))
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            ProtocolTree::Leaf(_) => 1,
            ProtocolTree::Node { edges, .. } => edges.iter().map(|e| e.child.leaf_count()).sum(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            ProtocolTree::Leaf(_) => 0,
            ProtocolTree::Node { edges, .. } => {
                1 + edges.iter().map(|e| e.child.depth()).max().unwrap_or(0)
            }
        }
    }

    /// Worst-case number of broadcast bits over all root-to-leaf paths.
    pub fn cost(&self) -> u32 {
        match self {
            ProtocolTree::Leaf(_) => 0,
            ProtocolTree::Node { edges, .. } => {
                ceil_log2(edges.len()) + edges.iter().map(|e| e.child.cost()).max().unwrap_or(0)
            }
        }
    }

    /// Bits spent on the way to each leaf, in leaf order.
    pub fn leaf_costs(&self) -> Vec<u32> {
        let mut out = Vec::new();
        self.collect_leaf_costs(0, &mut out);
        out
    }

    fn collect_leaf_costs(&self, acc: u32, out: &mut Vec<u32>) {
        match self {
            ProtocolTree::Leaf(_) => out.push(acc),
            ProtocolTree::Node { edges, .. } => {
                let here = acc + ceil_log2(edges.len());
                for e in edges {
                    e.child.collect_leaf_costs(here, out);
                }
            }
        }
    }

    /// Follows the path selected by `x`; returns the leaf index (depth-first order) and the outputs.
    pub fn execute(&self, x: &[u32]) -> Result<(usize, Outcome)> {
        self.walk(x, true)
    }

    /// Outputs on `x` without tracking the leaf index.
    pub fn run(&self, x: &[u32]) -> Result<Outcome> {
        self.walk(x, false).map(|(_, a)| a)
    }

    fn walk(&self, x: &[u32], track_leaf: bool) -> Result<(usize, Outcome)> {
        let mut node = self;
        let mut leaf_id = 0;
        loop {
            match node {
                ProtocolTree::Leaf(lhv) => {
                    if lhv.n() != x.len() {
                        return Err(Error::LengthMismatch {
                            expected: lhv.n(),
                            got: x.len(),
                        });
                    }
                    if let Some((i, _)) = lhv.tables.iter().zip(x).enumerate().find(|(_, (t, &v))| v as usize >= t.len()) {
                        return Err(Error::InvalidInput(format!("input of party {i} out of range")));
                    }
                    return Ok((leaf_id, lhv.apply(x)));
                }
                ProtocolTree::Node { party, edges } => {
                    let xi = *x.get(*party).ok_or_else(|| {
                        Error::MalformedTree(format!("speaker {party} beyond input length {}", x.len()))
                    })?;
                    let mut hits = edges.iter().enumerate().filter(|(_, e)| e.inputs.contains(&xi));
                    let (idx, edge) = match (hits.next(), hits.next()) {
                        (Some(h), None) => h,
                        (None, _) => {
                            return Err(Error::MalformedTree(format!(
                                "no edge covers input {xi} of party {party}"
                            )))
                        }
                        (Some(_), Some(_)) => {
                            return Err(Error::MalformedTree(format!(
                                "input {xi} of party {party} lies in two edges"
                            )))
                        }
                    };
                    if track_leaf {
                        leaf_id += edges[..idx].iter().map(|e| e.child.leaf_count()).sum::<usize>();
                    }
                    node = &edge.child;
                }
            }
        }
    }

    /// Every leaf with the inputs compatible with its conversation.
    pub fn conversations(&self, n: usize, k: u32) -> Vec<Conversation<'_>> {
        let mut out = Vec::new();
        let allowed = vec![vec![true; k as usize]; n];
        self.collect_conversations(allowed, 0, &mut out);
        out
    }

    fn collect_conversations<'a>(&'a self, allowed: Vec<Vec<bool>>, bits: u32, out: &mut Vec<Conversation<'a>>) {
        match self {
            ProtocolTree::Leaf(lhv) => out.push(Conversation { lhv, allowed, bits }),
            ProtocolTree::Node { party, edges } => {
                let bits = bits + ceil_log2(edges.len());
                for e in edges {
                    let mut next = allowed.clone();
                    for (x, ok) in next[*party].iter_mut().enumerate() {
                        *ok &= e.inputs.contains(&(x as u32));
                    }
                    e.child.collect_conversations(next, bits, out);
                }
            }
        }
    }
}

fn check_partition(edges: &[Edge], k: u32) -> Result<()> {
    if edges.is_empty() {
        return Err(Error::MalformedTree("internal node without children".into()));
    }
    let mut seen = vec![false; k as usize];
    for e in edges {
        if e.inputs.is_empty() {
            return Err(Error::MalformedTree("empty edge block".into()));
        }
        for &x in &e.inputs {
            let slot = seen
                .get_mut(x as usize)
                .ok_or_else(|| Error::MalformedTree(format!("edge input {x} outside 0..{k}")))?;
            if *slot {
                return Err(Error::MalformedTree(format!("input {x} appears in two edge blocks")));
            }
            *slot = true;
        }
    }
    if let Some(x) = seen.iter().position(|s| !s) {
        return Err(Error::MalformedTree(format!("input {x} is not covered by any edge")));
    }
    Ok(())
}

/// Source of the randomness a mixed protocol draws on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Randomness {
    Shared,
    Local,
}

/// Probability distribution over deterministic protocols.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "MixedProtocolWire", into = "MixedProtocolWire")]
pub struct MixedProtocol {
    components: Vec<(ProtocolTree, Rational)>,
    flavor: Randomness,
}

impl MixedProtocol {
    pub fn new(components: Vec<(ProtocolTree, Rational)>, flavor: Randomness) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidModel("protocol mixture has no components".into()));
        }
        if components.iter().any(|(_, w)| *w <= Rational::zero()) {
            return Err(Error::InvalidModel("protocol weights must be positive".into()));
        }
        let total: Rational = components.iter().map(|(_, w)| w).sum();
        if !total.is_one() {
            return Err(Error::InvalidModel(format!("protocol weights sum to {total}")));
        }
        Ok(MixedProtocol { components, flavor })
    }

    /// A single tree, valid under either flavor.
    pub fn deterministic(tree: ProtocolTree, flavor: Randomness) -> Self {
        MixedProtocol {
            components: vec![(tree, Rational::one())],
            flavor,
        }
    }

    pub fn uniform(trees: Vec<ProtocolTree>, flavor: Randomness) -> Result<Self> {
        let w = rational::rat(1, trees.len().max(1) as i64);
        MixedProtocol::new(trees.into_iter().map(|t| (t, w.clone())).collect(), flavor)
    }

    pub fn components(&self) -> &[(ProtocolTree, Rational)] {
        &self.components
    }

    pub fn flavor(&self) -> Randomness {
        self.flavor
    }

    /// Worst case over the components.
    pub fn cost(&self) -> u32 {
        self.components.iter().map(|(t, _)| t.cost()).max().unwrap_or(0)
    }
}

#[derive(Serialize, Deserialize)]
struct ProtocolComponentWire {
    tree: ProtocolTree,
    weight: Exact,
}

#[derive(Serialize, Deserialize)]
struct MixedProtocolWire {
    flavor: Randomness,
    components: Vec<ProtocolComponentWire>,
}

impl TryFrom<MixedProtocolWire> for MixedProtocol {
    type Error = Error;

    fn try_from(w: MixedProtocolWire) -> Result<Self> {
        MixedProtocol::new(
            w.components.into_iter().map(|c| (c.tree, c.weight.0)).collect(),
            w.flavor,
        )
    }
}

impl From<MixedProtocol> for MixedProtocolWire {
    fn from(m: MixedProtocol) -> Self {
        MixedProtocolWire {
            flavor: m.flavor,
            components: m
                .components
                .into_iter()
                .map(|(tree, w)| ProtocolComponentWire { tree, weight: Exact(w) })
                .collect(),
        }
    }
}

/// Exact output distribution of the mixture on every supported input.
pub fn induced_distribution(m: &MixedProtocol, problem: &CorrelationProblem) -> Result<ModelDistribution> {
    for (t, _) in &m.components {
        t.validate(problem.n(), problem.k(), problem.l()).map_err(|e| match e {
            Error::ArityMismatch(s) => Error::ArityMismatch(s),
            Error::MalformedTree(s) => Error::MalformedTree(s),
            other => Error::ArityMismatch(other.to_string()),
        })?;
    }
    let inputs: Vec<_> = problem.support().map(|(x, _)| x.clone()).collect();
    let rows = par::map(&inputs, |x| {
        m.components
            .iter()
            .map(|(t, w)| t.run(x).map(|a| (a, w)))
            .collect::<Result<Vec<_>>>()
    });
    let mut d = ModelDistribution::new();
    for (x, row) in inputs.iter().zip(rows) {
        for (a, w) in row? {
            d.add(x, a, w);
        }
    }
    Ok(d)
}

/// Replaces communication by guessing the conversation.
///
/// Every component is expanded into `2^c` equally likely guesses, `c` being
/// the cost of the whole mixture. A guess naming a real leaf makes each party
/// answer with the leaf strategy when its input is compatible with that
/// conversation and stay silent otherwise. Guesses beyond the leaf count
/// never click. Each input lies in exactly one conversation per component,
/// so all detectors fire with probability exactly `2^-c` on every input.
pub fn to_detector_model(m: &MixedProtocol) -> Result<MixedLhv> {
    if m.flavor != Randomness::Shared {
        return Err(Error::FlavorMismatch);
    }
    let (n, k) = m.components[0].0.shape();
    let c = m.cost();
    let guesses = rational::from_big(&rational::pow2(c));
    let mut components = Vec::new();
    let mut silent = Rational::zero();
    for (tree, w) in &m.components {
        let convs = tree.conversations(n, k);
        let per_guess = w / &guesses;
        for conv in &convs {
            let tables = conv
                .lhv
                .tables
                .iter()
                .zip(&conv.allowed)
                .map(|(t, ok)| t.iter().zip(ok).map(|(&v, &ok)| if ok { v } else { None }).collect())
                .collect();
            components.push((DeterministicLhv::new(tables), per_guess.clone()));
        }
        let spare = &guesses - rational::int(convs.len() as i64);
        if spare < Rational::zero() {
            return Err(Error::MalformedTree(format!(
                "{} conversations exceed 2^{c}",
                convs.len()
            )));
        }
        silent += spare * per_guess;
    }
    if silent > Rational::zero() {
        components.push((DeterministicLhv::constant(n, k, None), silent));
    }
    MixedLhv::new(components)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{all_vectors, evaluate_mixed_lhv, Input};
    use crate::rational::rat;

    fn uniform_problem(n: usize, k: u32) -> CorrelationProblem {
        let xs: Vec<Input> = all_vectors(n, k).collect();
        let w = rat(1, xs.len() as i64);
        let outs: Vec<Outcome> = all_vectors(n, 2).map(|a| Outcome::clicks(&a)).collect();
        let p = rat(1, outs.len() as i64);
        let target: Vec<_> = xs
            .iter()
            .flat_map(|x| outs.iter().map(|a| (x.clone(), a.clone(), p.clone())))
            .collect();
        CorrelationProblem::new(n, k, 2, xs.iter().map(|x| (x.clone(), w.clone())), target).unwrap()
    }

    fn const_leaf(n: usize, k: u32, v: u32) -> ProtocolTree {
        ProtocolTree::leaf(DeterministicLhv::constant(n, k, Some(v)))
    }

    #[test]
    fn ceil_log2_values() {
        assert_eq!(ceil_log2(1), 0);
        assert_eq!(ceil_log2(2), 1);
        assert_eq!(ceil_log2(3), 2);
        assert_eq!(ceil_log2(4), 2);
        assert_eq!(ceil_log2(5), 3);
    }

    #[test]
    fn single_leaf_applies_strategy() {
        let lhv = DeterministicLhv::clicking(&[vec![0, 1], vec![1, 0]]);
        let t = ProtocolTree::leaf(lhv.clone());
        assert_eq!(t.cost(), 0);
        assert_eq!(t.execute(&[1, 1]).unwrap(), (0, lhv.apply(&[1, 1])));
    }

    #[test]
    fn depth_one_split_selects_leaf() {
        let t = ProtocolTree::node(0, vec![(vec![0], const_leaf(2, 2, 0)), (vec![1], const_leaf(2, 2, 1))]);
        assert_eq!(t.cost(), 1);
        assert_eq!(t.execute(&[0, 1]).unwrap(), (0, Outcome::clicks(&[0, 0])));
        assert_eq!(t.execute(&[1, 0]).unwrap(), (1, Outcome::clicks(&[1, 1])));
    }

    #[test]
    fn three_children_cost_two_bits() {
        let t = ProtocolTree::node(
            0,
            vec![
                (vec![0], const_leaf(1, 3, 0)),
                (vec![1], const_leaf(1, 3, 1)),
                (vec![2], const_leaf(1, 3, 0)),
            ],
        );
        assert_eq!(t.cost(), 2);
        assert_eq!(t.leaf_costs(), vec![2, 2, 2]);
    }

    #[test]
    fn worst_case_path_cost() {
        let deep = ProtocolTree::node(1, vec![(vec![0], const_leaf(2, 2, 0)), (vec![1], const_leaf(2, 2, 1))]);
        let t = ProtocolTree::node(0, vec![(vec![0], const_leaf(2, 2, 0)), (vec![1], deep)]);
        assert_eq!(t.cost(), 2);
        assert_eq!(t.leaf_costs(), vec![1, 2, 2]);
        assert_eq!(t.execute(&[1, 1]).unwrap().0, 2);
    }

    #[test]
    fn malformed_partitions_are_reported() {
        let overlap = ProtocolTree::node(0, vec![(vec![0, 1], const_leaf(1, 2, 0)), (vec![1], const_leaf(1, 2, 0))]);
        assert!(matches!(overlap.validate(1, 2, 2), Err(Error::MalformedTree(_))));
        assert!(matches!(overlap.execute(&[1]), Err(Error::MalformedTree(_))));
        let gap = ProtocolTree::node(0, vec![(vec![0], const_leaf(1, 2, 0))]);
        assert!(matches!(gap.validate(1, 2, 2), Err(Error::MalformedTree(_))));
        assert!(matches!(gap.execute(&[1]), Err(Error::MalformedTree(_))));
        let silent_leaf = ProtocolTree::leaf(DeterministicLhv::constant(1, 2, None));
        assert!(matches!(silent_leaf.validate(1, 2, 2), Err(Error::MalformedTree(_))));
    }

    #[test]
    fn mixture_averages_leaf_outputs() {
        let p = uniform_problem(2, 2);
        let m = MixedProtocol::uniform(vec![const_leaf(2, 2, 0), const_leaf(2, 2, 1)], Randomness::Shared).unwrap();
        let d = induced_distribution(&m, &p).unwrap();
        for (x, _) in p.support() {
            assert_eq!(d.prob(x, &Outcome::clicks(&[0, 0])), rat(1, 2));
            assert_eq!(d.prob(x, &Outcome::clicks(&[1, 1])), rat(1, 2));
        }
    }

    #[test]
    fn arity_mismatch_detected() {
        let p = uniform_problem(3, 2);
        let m = MixedProtocol::deterministic(const_leaf(2, 2, 0), Randomness::Shared);
        assert!(matches!(induced_distribution(&m, &p), Err(Error::ArityMismatch(_))));
    }

    #[test]
    fn zero_cost_conversion_is_identity() {
        let lhv = DeterministicLhv::clicking(&[vec![0, 1], vec![1, 1]]);
        let m = MixedProtocol::deterministic(ProtocolTree::leaf(lhv.clone()), Randomness::Shared);
        let det = to_detector_model(&m).unwrap();
        assert_eq!(det, MixedLhv::deterministic(lhv));
    }

    #[test]
    fn one_bit_halves_click_probability() {
        let p = uniform_problem(2, 2);
        let t = ProtocolTree::node(0, vec![(vec![0], const_leaf(2, 2, 0)), (vec![1], const_leaf(2, 2, 1))]);
        let m = MixedProtocol::deterministic(t, Randomness::Shared);
        let det = to_detector_model(&m).unwrap();
        let d = evaluate_mixed_lhv(&det, &p).unwrap();
        let eff = crate::model::detection_efficiency(&d, &p).unwrap();
        assert_eq!(eff.eta_n, rat(1, 2));
        assert_eq!(d.click_conditioned(), induced_distribution(&m, &p).unwrap());
    }

    #[test]
    fn padding_keeps_click_probability_uniform() {
        // three leaves, cost 2: one of four guesses never clicks
        let p = uniform_problem(1, 3);
        let t = ProtocolTree::node(
            0,
            vec![
                (vec![0], const_leaf(1, 3, 0)),
                (vec![1], const_leaf(1, 3, 1)),
                (vec![2], const_leaf(1, 3, 0)),
            ],
        );
        let det = to_detector_model(&MixedProtocol::deterministic(t, Randomness::Shared)).unwrap();
        let d = evaluate_mixed_lhv(&det, &p).unwrap();
        for (x, _) in p.support() {
            let click: Rational = d.row(x).filter(|(a, _)| a.all_click()).map(|(_, q)| q).sum();
            assert_eq!(click, rat(1, 4));
        }
    }

    #[test]
    fn local_flavor_cannot_be_converted() {
        let m = MixedProtocol::deterministic(const_leaf(2, 2, 0), Randomness::Local);
        assert_eq!(to_detector_model(&m), Err(Error::FlavorMismatch));
    }

    #[test]
    fn every_input_reaches_one_leaf() {
        let t = ProtocolTree::node(
            2,
            vec![
                (vec![0, 2], ProtocolTree::node(0, vec![(vec![1], const_leaf(3, 3, 0)), (vec![0, 2], const_leaf(3, 3, 1))])),
                (vec![1], const_leaf(3, 3, 1)),
            ],
        );
        t.validate(3, 3, 2).unwrap();
        let mut hits = vec![0usize; t.leaf_count()];
        for x in all_vectors(3, 3) {
            hits[t.execute(&x).unwrap().0] += 1;
        }
        assert_eq!(hits, vec![6, 12, 9]);
    }

    #[test]
    fn tree_json_shape() {
        let t = ProtocolTree::node(0, vec![(vec![0], const_leaf(1, 2, 0)), (vec![1], const_leaf(1, 2, 1))]);
        let v = serde_json::to_value(&t).unwrap();
        assert_eq!(v["node"]["party"], 0);
        assert_eq!(v["node"]["edges"][1]["inputs"][0], 1);
        assert_eq!(v["node"]["edges"][1]["child"]["leaf"]["tables"][0][0], 1);
        let back: ProtocolTree = serde_json::from_value(v).unwrap();
        assert_eq!(back, t);
        let m = MixedProtocol::deterministic(t, Randomness::Shared);
        let back: MixedProtocol = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.cost(), 1);
    }
}
