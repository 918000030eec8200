use std::fs;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context};
use clap::{Args, ValueEnum};
use num_bigint::BigUint;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use nonlocal_core::ghz::{compare_quantum, TOLERANCE};
use nonlocal_core::model::{self, CorrelationProblem, MixedLhv};
use nonlocal_core::protocol::{self, MixedProtocol, Randomness};
use nonlocal_core::rational::{self, Bias, Rational};
use nonlocal_core::rect::{self, ScanOptions, Symmetry};
use nonlocal_core::search::{self, LpVariant, TradeoffOptions};
use nonlocal_core::{sample, zgroup, GhzInstance, Rectangle};

use crate::Common;

#[derive(Debug, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

pub struct Report {
    pub command: &'static str,
    pub parameters: Value,
    pub pass: bool,
    pub body: Value,
    pub table: Table,
}

fn exact(r: &Rational) -> String {
    r.to_string()
}

fn decimal(r: &Rational) -> String {
    format!("{:e}", rational::to_f64(r))
}

fn bias_text(b: &Bias) -> String {
    match b {
        Bias::Finite(r) => exact(r),
        Bias::Infinite => "infinite".into(),
    }
}

fn bias_json(b: &Bias) -> Value {
    json!({"exact": bias_text(b), "decimal": b.to_f64()})
}

fn parse_rationals(text: &str) -> anyhow::Result<Vec<Rational>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| rational::parse(s).ok_or_else(|| anyhow!("not a rational number: {s:?}")))
        .collect()
}

fn parse_ints(text: &str) -> anyhow::Result<Vec<u32>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().with_context(|| format!("not a bit count: {s:?}")))
        .collect()
}

fn read_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Instance flags; `k` defaults to the smallest power of two at least `n^{1/6}`.
#[derive(Args, Debug, Clone)]
pub struct InstanceArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub k: Option<u32>,
}

impl InstanceArgs {
    fn instance(&self) -> anyhow::Result<GhzInstance> {
        Ok(match self.k {
            Some(k) => GhzInstance::new(self.n, k)?,
            None => GhzInstance::with_default_settings(self.n)?,
        })
    }
}

fn problem_for(inst: &GhzInstance, path: &Option<PathBuf>, budget: u128) -> anyhow::Result<CorrelationProblem> {
    match path {
        Some(p) => read_json(p),
        None => Ok(inst.problem(budget)?),
    }
}

#[derive(Args, Debug)]
pub struct QuantumArgs {
    #[command(flatten)]
    pub inst: InstanceArgs,
    /// Also write the ideal correlation problem as JSON.
    #[arg(long)]
    pub problem_out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

pub fn quantum(a: &QuantumArgs) -> anyhow::Result<Report> {
    let inst = a.inst.instance()?;
    let (rows, max_dev) = compare_quantum(&inst, a.common.budget)?;
    if let Some(path) = &a.problem_out {
        let p = inst.problem(a.common.budget)?;
        fs::write(path, serde_json::to_vec_pretty(&p)?).with_context(|| format!("writing {}", path.display()))?;
    }
    let mut table = Table::new(&["x", "a", "target", "target_decimal", "quantum", "closed_form", "deviation"]);
    for r in &rows {
        table.push(vec![
            format!("{:?}", r.x),
            format!("{:?}", r.a),
            exact(&r.target),
            decimal(&r.target),
            format!("{:e}", r.quantum),
            format!("{:e}", r.closed_form),
            format!("{:e}", r.deviation),
        ]);
    }
    Ok(Report {
        command: "quantum",
        parameters: json!({"n": inst.n(), "k": inst.k()}),
        pass: max_dev < TOLERANCE,
        body: json!({
            "valid_inputs": inst.valid_count().to_string(),
            "max_deviation": max_dev,
            "tolerance": TOLERANCE,
            "rows": rows,
        }),
        table,
    })
}

#[derive(Args, Debug)]
pub struct LhvEvalArgs {
    #[command(flatten)]
    pub inst: InstanceArgs,
    /// Mixed model as JSON; a random one is drawn from the seed when absent.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Correlation problem as JSON instead of the GHZ problem.
    #[arg(long)]
    pub problem: Option<PathBuf>,
    /// Percentage of silent table entries in a random model.
    #[arg(long, default_value_t = 20)]
    pub silent_pct: u32,
    #[arg(long, default_value_t = 3)]
    pub components: usize,
    #[command(flatten)]
    pub common: Common,
}

pub fn lhv_eval(a: &LhvEvalArgs) -> anyhow::Result<Report> {
    let inst = a.inst.instance()?;
    let p = problem_for(&inst, &a.problem, a.common.budget)?;
    let m: MixedLhv = match &a.model {
        Some(path) => read_json(path)?,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(a.common.seed);
            sample::random_mixed_lhv(&mut rng, p.n(), p.k(), p.l(), a.silent_pct, a.components)
        }
    };
    let d = model::evaluate_mixed_lhv(&m, &p)?;
    let met = model::metrics(&d, &p)?;
    let dominated = match (&met.error, &met.total_variation) {
        (Some(e), Some(v)) => v.0 >= e.0,
        _ => true,
    };
    let opt = |v: &Option<rational::Exact>| v.as_ref().map_or_else(String::new, |r| exact(&r.0));
    let mut table = Table::new(&["eta_n", "eta", "error", "total_variation"]);
    table.push(vec![
        exact(&met.efficiency.eta_n),
        format!("{}", met.efficiency.eta),
        opt(&met.error),
        opt(&met.total_variation),
    ]);
    Ok(Report {
        command: "lhv-eval",
        parameters: json!({"n": p.n(), "k": p.k(), "l": p.l(), "random_model": a.model.is_none()}),
        pass: dominated,
        body: json!({"model": m, "metrics": met, "variation_dominates_error": dominated}),
        table,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Objective {
    MinError,
    EtaStar,
}

#[derive(Args, Debug)]
pub struct SearchArgs {
    #[command(flatten)]
    pub inst: InstanceArgs,
    #[arg(long, value_enum, default_value_t = Objective::MinError)]
    pub objective: Objective,
    /// Error budget for the efficiency LP.
    #[arg(long, default_value = "0")]
    pub eps: String,
    /// Only require the all-click probability to be at least q on every input.
    #[arg(long)]
    pub relaxed: bool,
    #[arg(long)]
    pub problem: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

pub fn search(a: &SearchArgs) -> anyhow::Result<Report> {
    let inst = a.inst.instance()?;
    let p = problem_for(&inst, &a.problem, a.common.budget)?;
    let report = match a.objective {
        Objective::MinError => search::best_deterministic_error(&p, a.common.budget)?,
        Objective::EtaStar => {
            let eps = rational::parse(&a.eps).ok_or_else(|| anyhow!("not a rational number: {:?}", a.eps))?;
            let variant = if a.relaxed { LpVariant::Relaxed } else { LpVariant::InputIndependent };
            search::eta_star_lp(&p, &eps, variant, a.common.budget)?
        }
    };
    let mut table = Table::new(&["objective", "n", "k", "l", "eps_budget", "optimum", "optimum_decimal", "enumerated", "verified"]);
    table.push(vec![
        format!("{:?}", a.objective),
        p.n().to_string(),
        p.k().to_string(),
        p.l().to_string(),
        report.eps_budget.as_ref().map_or_else(String::new, |e| exact(&e.0)),
        exact(&report.optimum.0),
        decimal(&report.optimum.0),
        report.enumerated.clone(),
        report.verified.to_string(),
    ]);
    Ok(Report {
        command: "search",
        parameters: json!({"n": p.n(), "k": p.k(), "l": p.l()}),
        pass: report.verified,
        body: serde_json::to_value(&report)?,
        table,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SymmetryArg {
    Reduced,
    Full,
}

#[derive(Args, Debug)]
pub struct RectScanArgs {
    #[command(flatten)]
    pub inst: InstanceArgs,
    #[arg(long, default_value = "1/2,3/4,7/8")]
    pub delta_grid: String,
    #[arg(long, value_enum, default_value_t = SymmetryArg::Reduced)]
    pub symmetry: SymmetryArg,
    /// Random rectangles to draw when the exhaustive scan is over budget.
    #[arg(long, default_value_t = 0)]
    pub samples: usize,
    /// Emit per-rectangle statistics instead of one row per threshold.
    #[arg(long)]
    pub stats: bool,
    /// Check the advantage/bias relation on every scanned rectangle.
    #[arg(long)]
    pub check_relation: bool,
    #[command(flatten)]
    pub common: Common,
}

pub fn rect_scan(a: &RectScanArgs) -> anyhow::Result<Report> {
    let inst = a.inst.instance()?;
    let deltas = parse_rationals(&a.delta_grid)?;
    let opts = ScanOptions {
        symmetry: match a.symmetry {
            SymmetryArg::Reduced => Symmetry::Reduced,
            SymmetryArg::Full => Symmetry::Full,
        },
        budget: a.common.budget,
        samples: a.samples,
        seed: a.common.seed,
    };
    let scans = rect::scan_rectangles_grid(&inst, &deltas, &opts)?;
    let mut pass = true;
    let mut body = json!({"seed": a.common.seed, "scans": scans});
    let mut table;
    if a.stats || a.check_relation {
        let all = rect::scan_stats(&inst, &opts)?;
        let minuscule = all.iter().all(|(r, _)| rect::size_within_involvement(r, inst.k()));
        pass &= minuscule;
        body["minuscule_holds"] = json!(minuscule);
        if a.check_relation {
            let p = inst.problem(a.common.budget)?;
            let mut checked = 0u64;
            let mut failures = Vec::new();
            for (r, s) in &all {
                if s.bias.is_none() {
                    continue;
                }
                let rep = rect::advantage_bias_relation(r, &inst, &p)?;
                checked += 1;
                if !rep.pass || !deltas.iter().all(|d| rep.equivalence_holds(d)) {
                    failures.push(r.clone());
                }
            }
            pass &= failures.is_empty();
            body["relation"] = json!({"checked": checked, "failures": failures});
        }
        if a.stats {
            table = Table::new(&["sets", "size", "involvement", "n0", "n1", "bias", "bias_decimal", "max_advantage"]);
            for (r, s) in &all {
                table.push(stats_row(r, s));
            }
        } else {
            table = scan_table(&scans);
        }
    } else {
        table = scan_table(&scans);
    }
    Ok(Report {
        command: "rect-scan",
        parameters: json!({"n": inst.n(), "k": inst.k(), "deltas": deltas.iter().map(exact).collect::<Vec<_>>()}),
        pass,
        body,
        table,
    })
}

fn stats_row(r: &Rectangle, s: &rect::RectangleStats) -> Vec<String> {
    vec![
        serde_json::to_string(r.sets()).unwrap_or_default(),
        s.size.to_string(),
        s.involvement.to_string(),
        s.n0.to_string(),
        s.n1.to_string(),
        s.bias.as_ref().map_or_else(String::new, bias_text),
        s.bias.as_ref().map_or_else(String::new, |b| format!("{:e}", b.to_f64())),
        s.max_advantage().map_or_else(String::new, |v| exact(&v)),
    ]
}

fn scan_table(scans: &[rect::ScanResult]) -> Table {
    let mut t = Table::new(&["delta", "r_cap", "r_cap_decimal", "exhaustive", "scanned", "qualifying", "witness"]);
    for s in scans {
        t.push(vec![
            exact(&s.delta),
            exact(&s.r_cap),
            decimal(&s.r_cap),
            s.exhaustive.to_string(),
            s.scanned.to_string(),
            s.qualifying.to_string(),
            s.witness.as_ref().map_or_else(String::new, |w| serde_json::to_string(w.sets()).unwrap_or_default()),
        ]);
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SetShape {
    /// Sizes uniform in 2..=T.
    Any,
    /// Two-element sets only.
    Pairs,
}

#[derive(Args, Debug)]
pub struct AdditionArgs {
    /// Group order T (a power of two).
    #[arg(long)]
    pub t: u64,
    /// Number of sets (at least T³).
    #[arg(long)]
    pub r: usize,
    #[arg(long, value_enum, default_value_t = SetShape::Any)]
    pub sets: SetShape,
    #[command(flatten)]
    pub common: Common,
}

pub fn addition(a: &AdditionArgs) -> anyhow::Result<Report> {
    if a.t < 2 {
        bail!("T must be at least 2");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.common.seed);
    let mut table = Table::new(&["check", "T", "r", "seed", "bias", "bias_decimal", "bound", "pass"]);
    let (pass, body) = match a.sets {
        SetShape::Any => {
            let sets = sample::random_sets(&mut rng, a.t, a.r);
            let rep = zgroup::verify_addition_theorem(a.t, &sets)?;
            table.push(vec![
                "addition".into(),
                a.t.to_string(),
                a.r.to_string(),
                a.common.seed.to_string(),
                bias_text(&rep.bias),
                format!("{:e}", rep.bias.to_f64()),
                format!("{:e}", rep.bound),
                rep.pass.to_string(),
            ]);
            (rep.pass, json!({"seed": a.common.seed, "bias": bias_json(&rep.bias), "report": rep}))
        }
        SetShape::Pairs => {
            let pairs = sample::random_pairs(&mut rng, a.t, a.r);
            let rep = zgroup::verify_size2_lemma(a.t, &pairs)?;
            for (check, bias, bound, ok) in [
                ("copies", &rep.copies_bias, rep.copies_bound, rep.copies_pass),
                ("pairs", &rep.bias, rep.bound, rep.pass),
            ] {
                table.push(vec![
                    check.into(),
                    a.t.to_string(),
                    a.r.to_string(),
                    a.common.seed.to_string(),
                    bias_text(bias),
                    format!("{:e}", bias.to_f64()),
                    format!("{bound:e}"),
                    ok.to_string(),
                ]);
            }
            let mut report = serde_json::to_value(&rep)?;
            if let Value::Object(m) = &mut report {
                m.remove("offsets");
            }
            (
                rep.pass && rep.copies_pass,
                json!({"seed": a.common.seed, "bias": bias_json(&rep.bias), "copies_bias": bias_json(&rep.copies_bias), "report": report}),
            )
        }
    };
    Ok(Report {
        command: "addition",
        parameters: json!({"t": a.t, "r": a.r, "sets": format!("{:?}", a.sets).to_lowercase()}),
        pass,
        body,
        table,
    })
}

#[derive(Args, Debug)]
pub struct TradeoffArgs {
    #[command(flatten)]
    pub inst: InstanceArgs,
    /// Bits of real broadcast; defaults to multiples of one announcement up to all parties.
    #[arg(long)]
    pub c_grid: Option<String>,
    #[arg(long, default_value = "0,1/8,1/4")]
    pub eps_grid: String,
    #[arg(long, default_value = "1/2,5/8,3/4,7/8,15/16")]
    pub delta_grid: String,
    /// Random rectangles to draw when the exhaustive scan is over budget.
    #[arg(long, default_value_t = 0)]
    pub samples: usize,
    #[command(flatten)]
    pub common: Common,
}

pub fn tradeoff(a: &TradeoffArgs) -> anyhow::Result<Report> {
    let inst = a.inst.instance()?;
    let c_grid = match &a.c_grid {
        Some(text) => parse_ints(text)?,
        None => (0..=inst.n() as u32).map(|j| j * inst.input_bits()).collect(),
    };
    let eps_grid = parse_rationals(&a.eps_grid)?;
    let opts = TradeoffOptions {
        deltas: parse_rationals(&a.delta_grid)?,
        scan: ScanOptions {
            budget: a.common.budget,
            samples: a.samples,
            seed: a.common.seed,
            ..Default::default()
        },
        lp_budget: a.common.budget.min(10_000),
        ..Default::default()
    };
    let t = search::tradeoff_table(&inst, &c_grid, &eps_grid, &opts)?;
    let mut table = Table::new(&[
        "c",
        "eps",
        "achievable_eta_n",
        "achievable_decimal",
        "achievable_source",
        "converted_eta_n",
        "achievable_product",
        "bound_eta_n",
        "bound_decimal",
        "bound_delta",
        "bound_product",
        "bound_certified",
        "consistent",
    ]);
    for r in &t.rows {
        table.push(vec![
            r.c.to_string(),
            exact(&r.eps.0),
            exact(&r.achievable_eta_n.0),
            decimal(&r.achievable_eta_n.0),
            r.achievable_source.clone(),
            exact(&r.converted_eta_n.0),
            format!("{:e}", r.achievable_product),
            exact(&r.bound_eta_n.0),
            decimal(&r.bound_eta_n.0),
            r.bound_delta.as_ref().map_or_else(String::new, |d| exact(&d.0)),
            format!("{:e}", r.bound_product),
            r.bound_certified.to_string(),
            r.consistent.to_string(),
        ]);
    }
    Ok(Report {
        command: "tradeoff",
        parameters: json!({"n": inst.n(), "k": inst.k(), "c_grid": c_grid}),
        pass: t.all_consistent(),
        body: serde_json::to_value(&t)?,
        table,
    })
}

#[derive(Args, Debug)]
pub struct ProtocolRunArgs {
    #[command(flatten)]
    pub inst: InstanceArgs,
    /// Mixed protocol as JSON; a random one is drawn from the seed when absent.
    #[arg(long, conflicts_with = "broadcast")]
    pub protocol: Option<PathBuf>,
    /// Run the exact broadcast mixture.
    #[arg(long)]
    pub broadcast: bool,
    #[arg(long, default_value_t = 3)]
    pub depth: usize,
    #[arg(long, default_value_t = 3)]
    pub components: usize,
    #[arg(long)]
    pub problem: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

pub fn protocol_run(a: &ProtocolRunArgs) -> anyhow::Result<Report> {
    let inst = a.inst.instance()?;
    let p = problem_for(&inst, &a.problem, a.common.budget)?;
    let m: MixedProtocol = if let Some(path) = &a.protocol {
        read_json(path)?
    } else if a.broadcast {
        inst.broadcast_mixture()?
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(a.common.seed);
        sample::random_mixed_protocol(&mut rng, p.n(), p.k(), p.l(), a.depth, a.components)
    };
    if m.flavor() != Randomness::Shared {
        bail!("the detector conversion needs shared randomness");
    }
    let cost = m.cost();
    let d = protocol::induced_distribution(&m, &p)?;
    let direct = model::metrics(&d, &p)?;
    let det = protocol::to_detector_model(&m)?;
    let dd = model::evaluate_mixed_lhv(&det, &p)?;
    let converted = model::metrics(&dd, &p)?;
    let want = rational::ratio_of(&BigUint::from(1u32), &rational::pow2(cost));
    let per_input = p.support().all(|(x, _)| {
        let click: Rational = dd.row(x).filter(|(a, _)| a.all_click()).map(|(_, q)| q).sum();
        click == want
    });
    let same_conditional = dd.click_conditioned().pruned() == d.clone().pruned();
    let pass = per_input && same_conditional && converted.error == direct.error;
    let mut table = Table::new(&["cost", "eta_n", "error", "converted_eta_n", "converted_error", "round_trip"]);
    let opt = |v: &Option<rational::Exact>| v.as_ref().map_or_else(String::new, |r| exact(&r.0));
    table.push(vec![
        cost.to_string(),
        exact(&direct.efficiency.eta_n),
        opt(&direct.error),
        exact(&converted.efficiency.eta_n),
        opt(&converted.error),
        pass.to_string(),
    ]);
    Ok(Report {
        command: "protocol-run",
        parameters: json!({"n": p.n(), "k": p.k(), "source": if a.protocol.is_some() { "file" } else if a.broadcast { "broadcast" } else { "random" }}),
        pass,
        body: json!({
            "seed": a.common.seed,
            "cost": cost,
            "protocol": m,
            "metrics": direct,
            "converted_metrics": converted,
            "checks": {
                "click_probability_is_2^-c_on_every_input": per_input,
                "click_conditioned_matches_protocol": same_conditional,
            }
        }),
        table,
    })
}
