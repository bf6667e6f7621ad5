//! Batches of seeded instances run through every verifiable guarantee.
//!
//! Seeds run in parallel with the `parallel` feature; results are always
//! merged in seed order, so a report depends only on its configuration.

use std::collections::BTreeMap;
use std::time::Instant;

use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::generate::{generate, GenParams, Mode};
use crate::greedy::{run_algorithm2, GreedyState};
use crate::instance::{Allocation, BinId, Instance, Resource};
use crate::matching::{expand_binary, lemma1_violations, run_algorithm1};
use crate::oracle::{competitive_ratio, offline_opt_binary_matching, offline_opt_bruteforce, OracleResult};
use crate::reduction::{verify_lemma3, verify_lemma_lra};
use crate::valuation::{evaluate_z, increment_rho};
use crate::value::{self, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    Theorem1,
    Theorem2,
    Lemma1,
    Lemma2,
    Lemma3,
    Submodularity,
    IncrementConsistency,
    OracleAgreement,
}

impl Check {
    pub const ALL: [Check; 8] = [
        Check::Theorem1,
        Check::Theorem2,
        Check::Lemma1,
        Check::Lemma2,
        Check::Lemma3,
        Check::Submodularity,
        Check::IncrementConsistency,
        Check::OracleAgreement,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::Theorem1 => "theorem1",
            Check::Theorem2 => "theorem2",
            Check::Lemma1 => "lemma1",
            Check::Lemma2 => "lemma2",
            Check::Lemma3 => "lemma3",
            Check::Submodularity => "submodularity",
            Check::IncrementConsistency => "increment-consistency",
            Check::OracleAgreement => "oracle-agreement",
        }
    }

    /// Failures of this check are counterexamples to a property the model
    /// is not claimed to have, so they never fail a campaign.
    pub fn informational(self) -> bool {
        self == Check::Submodularity
    }
}

impl std::str::FromStr for Check {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Check::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Check::ALL.iter().map(|c| c.name()).collect();
            format!("unknown check {s:?} (one of {})", names.join(", "))
        })
    }
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub first_seed: u64,
    pub seeds: u64,
    /// Generator parameters; the seed field is replaced per instance.
    pub params: GenParams,
    /// Modes are cycled by seed: seed `s` uses `modes[s % len]`.
    pub modes: Vec<Mode>,
    pub checks: Vec<Check>,
    pub budget: u64,
    /// Random triples per instance for increment-consistency.
    pub triples: u32,
    /// Random `S ⊆ T` pairs per instance for submodularity.
    pub pairs: u32,
    /// Replace the tie rule by one that overvalues discarding.
    pub mutate: bool,
    /// Fill the runtime column; off by default because it breaks
    /// byte-identical reports.
    pub timing: bool,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            first_seed: 0,
            seeds: 200,
            params: GenParams { packets: 5, max_k: 3, horizon: 6, ..GenParams::default() },
            modes: vec![Mode::Random, Mode::AdversarialLock, Mode::AdversarialBurst],
            checks: Check::ALL.to_vec(),
            budget: crate::oracle::DEFAULT_BUDGET,
            triples: 50,
            pairs: 5,
            mutate: false,
            timing: false,
        }
    }
}

impl CampaignConfig {
    pub fn instance(&self, seed: u64) -> Result<Instance, crate::error::ModelError> {
        let mode = self.modes.get((seed % self.modes.len().max(1) as u64) as usize).copied().unwrap_or(Mode::Random);
        generate(&GenParams { seed, mode, ..self.params.clone() })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// Not applicable or over budget.
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub check: Check,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Row {
    pub seed: u64,
    pub n_packets: usize,
    pub total_subpackets: u32,
    pub horizon: u32,
    pub alg: String,
    pub alg_value: String,
    pub opt_value: String,
    pub ratio: String,
    pub runtime_ms: Option<u128>,
}

pub const CSV_HEADER: &str = "seed,n_packets,total_subpackets,horizon,alg,alg_value,opt_value,ratio,runtime_ms";

impl Row {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.seed,
            self.n_packets,
            self.total_subpackets,
            self.horizon,
            self.alg,
            self.alg_value,
            self.opt_value,
            self.ratio,
            self.runtime_ms.map_or(String::new(), |m| m.to_string())
        )
    }
}

pub fn rows_csv(rows: &[Row]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv());
        out.push('\n');
    }
    out
}

/// Everything needed to rerun a failing check on its own.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Repro {
    pub seed: u64,
    pub check: Check,
    pub detail: String,
    /// File name the driver writes the repro under.
    pub file: String,
    pub command: String,
    pub instance: Instance,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub outcomes: Vec<CheckOutcome>,
    pub rows: Vec<Row>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub pass: u64,
    pub fail: u64,
    pub skipped: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub config: CampaignConfig,
    pub tallies: BTreeMap<Check, Tally>,
    /// Seeds the generator rejected.
    pub generation_errors: Vec<(u64, String)>,
    pub repros: Vec<Repro>,
    pub rows: Vec<Row>,
    #[serde(skip)]
    pub seeds: Vec<SeedResult>,
}

impl CampaignReport {
    /// True when no check that states a guarantee failed.
    pub fn passed(&self) -> bool {
        self.generation_errors.is_empty()
            && self.tallies.iter().all(|(c, t)| c.informational() || t.fail == 0)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&serde_json::to_value(self).expect("report serializes")).expect("prints");
        s.push('\n');
        s
    }

    pub fn csv(&self) -> String {
        rows_csv(&self.rows)
    }

    /// One line per requested check.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for (c, t) in &self.tallies {
            let verdict = if t.fail == 0 {
                "ok"
            } else if c.informational() {
                "counterexamples"
            } else {
                "FAILED"
            };
            out.push_str(&format!("{:<22} pass {:>5}  fail {:>5}  skipped {:>5}  {verdict}\n", c.name(), t.pass, t.fail, t.skipped));
        }
        out
    }
}

fn outcome(check: Check, ok: bool, detail: impl FnOnce() -> String) -> CheckOutcome {
    if ok {
        CheckOutcome { check, status: Status::Pass, detail: None }
    } else {
        CheckOutcome { check, status: Status::Fail, detail: Some(detail()) }
    }
}

fn skipped(check: Check, why: impl Into<String>) -> CheckOutcome {
    CheckOutcome { check, status: Status::Skipped, detail: Some(why.into()) }
}

/// The instance with every packet cut to its first sub-packet.
pub fn binary_projection(inst: &Instance) -> Instance {
    let mut b = inst.clone();
    for p in &mut b.packets {
        p.subpackets = 1;
    }
    b.label = format!("{}-binary", inst.label);
    b
}

/// A random allocation of some of the resources, each to an open bin or
/// discard, respecting sub-packet order.
fn random_allocation(inst: &Instance, res: &[Resource], rng: &mut ChaCha8Rng, p_take: f64) -> Allocation {
    let mut a = Allocation::new();
    let mut floor: BTreeMap<u32, u32> = BTreeMap::new();
    for r in res {
        if !rng.random_bool(p_take) {
            continue;
        }
        let lo = floor.get(&r.r.packet).copied().unwrap_or(r.arrival).max(r.arrival);
        let bins: Vec<BinId> = GreedyState::open_bins(inst, lo);
        let b = bins[rng.random_range(0..bins.len())];
        if let Some(t) = b.lock_time() {
            floor.insert(r.r.packet, t);
        }
        a.insert(r.r, b).expect("fresh");
    }
    a
}

struct Ctx<'a> {
    cfg: &'a CampaignConfig,
    seed: u64,
    inst: &'a Instance,
    rows: Vec<Row>,
    outcomes: Vec<CheckOutcome>,
    omega: Option<Result<OracleResult, String>>,
}

impl Ctx<'_> {
    fn wants(&self, c: Check) -> bool {
        self.cfg.checks.contains(&c)
    }

    fn row(&mut self, alg: &str, alg_value: &Value, opt: &Value, runtime_ms: u128) {
        self.rows.push(Row {
            seed: self.seed,
            n_packets: self.inst.packets.len(),
            total_subpackets: self.inst.total_subpackets(),
            horizon: self.inst.horizon,
            alg: alg.into(),
            alg_value: value::format(alg_value),
            opt_value: value::format(opt),
            ratio: competitive_ratio(alg_value, opt).display(),
            runtime_ms: self.cfg.timing.then_some(runtime_ms),
        });
    }

    fn omega(&mut self) -> Result<OracleResult, String> {
        let (inst, budget) = (self.inst, self.cfg.budget);
        self.omega.get_or_insert_with(|| offline_opt_bruteforce(inst, budget).map_err(|e| e.to_string())).clone()
    }

    fn matching_checks(&mut self) {
        let proj = binary_projection(self.inst);
        let start = Instant::now();
        let e = match expand_binary(&proj) {
            Ok(e) => e,
            Err(err) => {
                for c in [Check::Theorem1, Check::Lemma1] {
                    if self.wants(c) {
                        self.outcomes.push(skipped(c, err.to_string()));
                    }
                }
                return;
            }
        };
        let run = run_algorithm1(&e.graph, &e.arrivals, &e.locks).expect("expansion streams are well-formed");
        let ms = start.elapsed().as_millis();
        let opt = e.offline_opt().weight;
        self.row("matching", &run.weight, &opt, ms);
        if self.wants(Check::Theorem1) {
            let ok = &run.weight * value::int(2) >= opt;
            let (w, o) = (value::format(&run.weight), value::format(&opt));
            self.outcomes.push(outcome(Check::Theorem1, ok, || format!("W_PERM = {w} < W_OPT/2, W_OPT = {o}")));
        }
        if self.wants(Check::Lemma1) {
            let v = lemma1_violations(&run.trace);
            self.outcomes.push(outcome(Check::Lemma1, v.is_empty(), || format!("{} violations, first {:?}", v.len(), v[0])));
        }
    }

    fn greedy_checks(&mut self) {
        let start = Instant::now();
        let g = run_algorithm2(self.inst);
        let ms = start.elapsed().as_millis();
        let needs_opt = self.wants(Check::Theorem2) || self.wants(Check::Lemma2);
        if needs_opt {
            match self.omega() {
                Ok(o) => {
                    self.row("greedy", &g.valuation.total, &o.valuation.total, ms);
                    if self.wants(Check::Theorem2) {
                        let ok = &g.valuation.total * value::int(2) >= o.valuation.total;
                        let (z, zo) = (value::format(&g.valuation.total), value::format(&o.valuation.total));
                        self.outcomes.push(outcome(Check::Theorem2, ok, || format!("Z(G) = {z} < Z(Omega)/2, Z(Omega) = {zo}")));
                    }
                    if self.wants(Check::Lemma2) {
                        let r = verify_lemma_lra(self.inst, &o.allocation, self.cfg.budget).expect("oracle allocation is well-formed");
                        self.outcomes.push(match r.holds() {
                            None => skipped(Check::Lemma2, r.notice.unwrap_or_default()),
                            Some(ok) => outcome(Check::Lemma2, ok, || serde_json::to_string(&r).expect("serializes")),
                        });
                    }
                }
                Err(err) => {
                    for c in [Check::Theorem2, Check::Lemma2] {
                        if self.wants(c) {
                            self.outcomes.push(skipped(c, err.clone()));
                        }
                    }
                }
            }
        }
        if self.wants(Check::Lemma3) {
            let r = verify_lemma3(self.inst, self.cfg.mutate);
            self.outcomes.push(outcome(Check::Lemma3, r.holds(), || serde_json::to_string(&r).expect("serializes")));
        }
    }

    fn oracle_agreement(&mut self) {
        let proj = binary_projection(self.inst);
        let brute = offline_opt_bruteforce(&proj, self.cfg.budget);
        let m = offline_opt_binary_matching(&proj);
        self.outcomes.push(match (brute, m) {
            (Ok(b), Ok(m)) => {
                let mz = evaluate_z(&proj, &m.allocation).expect("well-formed").total;
                let ok = b.valuation.total == m.matching.weight && mz == m.matching.weight;
                outcome(Check::OracleAgreement, ok, || {
                    format!(
                        "brute force {} vs matching {} (allocation worth {})",
                        value::format(&b.valuation.total),
                        value::format(&m.matching.weight),
                        value::format(&mz)
                    )
                })
            }
            (Err(e), _) => skipped(Check::OracleAgreement, e.to_string()),
            (_, Err(e)) => skipped(Check::OracleAgreement, e.to_string()),
        });
    }

    fn rng(&self, salt: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ salt)
    }

    fn increment_consistency(&mut self) {
        let res = self.inst.resources();
        if res.is_empty() {
            self.outcomes.push(skipped(Check::IncrementConsistency, "no resources"));
            return;
        }
        let mut rng = self.rng(1);
        let bins: Vec<BinId> = self.inst.regular_bins().chain([BinId::Discard]).collect();
        let mut bad = None;
        for _ in 0..self.cfg.triples {
            let mut s = random_allocation(self.inst, &res, &mut rng, 0.5);
            let r = res[rng.random_range(0..res.len())].r;
            s.remove(&r);
            let b = bins[rng.random_range(0..bins.len())];
            let rho = increment_rho(self.inst, &s, r, b).expect("well-formed");
            let before = evaluate_z(self.inst, &s).expect("well-formed").total;
            s.insert(r, b).expect("removed above");
            let after = evaluate_z(self.inst, &s).expect("well-formed").total;
            if rho != &after - &before {
                bad = Some(format!("{r} -> {b}: rho = {}, delta Z = {}", value::format(&rho), value::format(&(after - before))));
                break;
            }
        }
        self.outcomes.push(outcome(Check::IncrementConsistency, bad.is_none(), || bad.unwrap_or_default()));
    }

    /// `rho(r, b | S) >= rho(r, b | T)` for random `S ⊆ T`. `Z` is not
    /// submodular in general (delay and deadlines couple a packet's
    /// sub-packets), so failures are reported as counterexamples.
    fn submodularity(&mut self) {
        let res = self.inst.resources();
        if res.len() < 2 {
            self.outcomes.push(skipped(Check::Submodularity, "fewer than two resources"));
            return;
        }
        let mut rng = self.rng(2);
        let mut bad = None;
        for _ in 0..self.cfg.pairs {
            let mut t = random_allocation(self.inst, &res, &mut rng, 0.6);
            let r = res[rng.random_range(0..res.len())];
            t.remove(&r.r);
            let s: Allocation = t.iter().filter(|_| rng.random_bool(0.5)).collect();
            let bins = GreedyState::open_bins(self.inst, r.arrival);
            let b = bins[rng.random_range(0..bins.len())];
            let rs = increment_rho(self.inst, &s, r.r, b).expect("well-formed");
            let rt = increment_rho(self.inst, &t, r.r, b).expect("well-formed");
            if rs < rt {
                bad = Some(format!(
                    "{} -> {b}: rho given S = {} < rho given T = {} with |S| = {}, |T| = {}",
                    r.r,
                    value::format(&rs),
                    value::format(&rt),
                    s.len(),
                    t.len()
                ));
                break;
            }
        }
        self.outcomes.push(outcome(Check::Submodularity, bad.is_none(), || bad.unwrap_or_default()));
    }
}

/// Runs every configured check on one instance.
pub fn run_seed(cfg: &CampaignConfig, seed: u64, inst: &Instance) -> SeedResult {
    let mut ctx = Ctx { cfg, seed, inst, rows: Vec::new(), outcomes: Vec::new(), omega: None };
    if ctx.wants(Check::Theorem1) || ctx.wants(Check::Lemma1) {
        ctx.matching_checks();
    }
    ctx.greedy_checks();
    if ctx.wants(Check::OracleAgreement) {
        ctx.oracle_agreement();
    }
    if ctx.wants(Check::IncrementConsistency) {
        ctx.increment_consistency();
    }
    if ctx.wants(Check::Submodularity) {
        ctx.submodularity();
    }
    let mut outcomes = ctx.outcomes;
    outcomes.sort_by_key(|o| o.check);
    SeedResult { seed, outcomes, rows: ctx.rows }
}

fn repro_command(cfg: &CampaignConfig, check: Check, file: &str) -> String {
    let mut cmd = format!("aqi verify --input {file} --checks {check} --budget {}", cfg.budget);
    if cfg.mutate {
        cmd.push_str(" --mutate");
    }
    cmd
}

fn one(cfg: &CampaignConfig, seed: u64) -> Result<(SeedResult, Instance), (u64, String)> {
    let inst = cfg.instance(seed).map_err(|e| (seed, e.to_string()))?;
    Ok((run_seed(cfg, seed, &inst), inst))
}

#[cfg(feature = "parallel")]
fn run_all(cfg: &CampaignConfig) -> Vec<Result<(SeedResult, Instance), (u64, String)>> {
    use rayon::prelude::*;
    (cfg.first_seed..cfg.first_seed + cfg.seeds).into_par_iter().map(|s| one(cfg, s)).collect()
}

#[cfg(not(feature = "parallel"))]
fn run_all(cfg: &CampaignConfig) -> Vec<Result<(SeedResult, Instance), (u64, String)>> {
    run_all_sequential(cfg)
}

/// The same batch on the calling thread only.
pub fn run_all_sequential(cfg: &CampaignConfig) -> Vec<Result<(SeedResult, Instance), (u64, String)>> {
    (cfg.first_seed..cfg.first_seed + cfg.seeds).map(|s| one(cfg, s)).collect()
}

fn aggregate(cfg: &CampaignConfig, mut results: Vec<Result<(SeedResult, Instance), (u64, String)>>) -> CampaignReport {
    results.sort_by_key(|r| match r {
        Ok((s, _)) => s.seed,
        Err((s, _)) => *s,
    });
    let mut tallies: BTreeMap<Check, Tally> = cfg.checks.iter().map(|&c| (c, Tally::default())).collect();
    let mut generation_errors = Vec::new();
    let mut repros = Vec::new();
    let mut rows = Vec::new();
    let mut seeds = Vec::new();
    for r in results {
        let (sr, inst) = match r {
            Ok(x) => x,
            Err(e) => {
                generation_errors.push(e);
                continue;
            }
        };
        for o in &sr.outcomes {
            let t = tallies.entry(o.check).or_default();
            match o.status {
                Status::Pass => t.pass += 1,
                Status::Skipped => t.skipped += 1,
                Status::Fail => {
                    t.fail += 1;
                    if !o.check.informational() {
                        let file = format!("repro-{}-seed{}.json", o.check, sr.seed);
                        repros.push(Repro {
                            seed: sr.seed,
                            check: o.check,
                            detail: o.detail.clone().unwrap_or_default(),
                            command: repro_command(cfg, o.check, &file),
                            file,
                            instance: inst.clone(),
                        });
                    }
                }
            }
        }
        rows.extend(sr.rows.iter().cloned());
        seeds.push(sr);
    }
    CampaignReport { config: cfg.clone(), tallies, generation_errors, repros, rows, seeds }
}

pub fn run_campaign(cfg: &CampaignConfig) -> CampaignReport {
    aggregate(cfg, run_all(cfg))
}

pub fn run_campaign_sequential(cfg: &CampaignConfig) -> CampaignReport {
    aggregate(cfg, run_all_sequential(cfg))
}

/// Minimum of `alg / opt` over rows of one algorithm, where defined.
pub fn worst_ratio(rows: &[Row], alg: &str) -> Option<String> {
    rows.iter()
        .filter(|r| r.alg == alg)
        .filter_map(|r| Some((value::parse(&r.alg_value).ok()?, value::parse(&r.opt_value).ok()?)))
        .filter(|(_, o)| !o.is_zero())
        .map(|(a, o)| a / o)
        .min()
        .map(|v| value::format(&v))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CampaignConfig {
        CampaignConfig {
            seeds: 12,
            params: GenParams { packets: 4, max_k: 2, horizon: 4, ..GenParams::default() },
            triples: 20,
            pairs: 20,
            ..CampaignConfig::default()
        }
    }

    #[test]
    fn small_campaign_passes() {
        let r = run_campaign(&small());
        assert!(r.passed(), "{}", r.summary());
        assert_eq!(r.tallies[&Check::Lemma3].pass, 12);
        assert!(r.repros.is_empty());
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let cfg = small();
        assert_eq!(run_campaign(&cfg).to_json(), run_campaign_sequential(&cfg).to_json());
        assert_eq!(run_campaign(&cfg).csv(), run_campaign(&cfg).csv());
    }

    #[test]
    fn mutation_is_caught_by_lemma3() {
        let cfg = CampaignConfig { mutate: true, checks: vec![Check::Lemma3], ..small() };
        let r = run_campaign(&cfg);
        assert!(!r.passed());
        assert!(r.tallies[&Check::Lemma3].fail > 0);
        let repro = &r.repros[0];
        assert!(repro.command.contains("--mutate"));
        assert!(!verify_lemma3(&repro.instance, true).holds());
    }

    #[test]
    fn empty_check_set_gives_empty_summary() {
        let cfg = CampaignConfig { checks: vec![], ..small() };
        let r = run_campaign(&cfg);
        assert!(r.tallies.is_empty());
        assert!(r.summary().is_empty());
        assert!(r.passed());
    }

    #[test]
    fn csv_has_fixed_columns() {
        let r = run_campaign(&CampaignConfig { seeds: 2, ..small() });
        let csv = r.csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        for l in lines {
            assert_eq!(l.split(',').count(), 9);
            assert!(l.ends_with(','), "runtime column empty without timing: {l}");
        }
    }

    #[test]
    fn check_names_round_trip() {
        for c in Check::ALL {
            assert_eq!(c.name().parse::<Check>().unwrap(), c);
            assert_eq!(serde_json::to_value(c).unwrap(), c.name());
        }
    }
}
