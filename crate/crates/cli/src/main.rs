use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use aqi_core::adapters::{
    aoi_figure, aoi_multisource, remote_sampling_family, speed_scaling, AoiConfig, Fidelity, Job, SamplingParams,
    SpeedScalingConfig,
};
use aqi_core::campaign::{run_campaign, run_seed, rows_csv, CampaignConfig, Check, Row, Status};
use aqi_core::generate::{generate, GenParams, Mode};
use aqi_core::greedy::run_algorithm2;
use aqi_core::matching::{expand_binary, run_algorithm1};
use aqi_core::oracle::{budget_from_env, competitive_ratio, offline_opt_binary_matching, offline_opt_bruteforce};
use aqi_core::reduction::verify_theorem2_chain;
use aqi_core::value::{self, int, Value};
use aqi_core::{CostFamily, Instance};

#[derive(Parser)]
#[command(name = "aqi", version, about = "Online age-and-quality-of-information scheduling: algorithms, oracles and checks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Oracle search-node budget. Defaults to AQI_BUDGET, then 10^7.
    #[arg(long, global = true)]
    budget: Option<u64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a seeded instance.
    Gen {
        #[command(flatten)]
        gen: GenArgs,
        /// Refuse parameters too large for the exhaustive oracle.
        #[arg(long)]
        exact_oracle: bool,
    },
    /// Run an online algorithm, optionally against the offline optimum.
    Run {
        #[command(flatten)]
        src: Source,
        #[arg(long, value_enum, default_value_t = Algorithm::Greedy)]
        algorithm: Algorithm,
        /// Compare against the exhaustive offline optimum.
        #[arg(long)]
        exact_oracle: bool,
        /// Fail if the optimum cannot be computed within budget.
        #[arg(long)]
        require_opt: bool,
        /// Run the matching algorithm on the instance cut to one sub-packet per packet.
        #[arg(long)]
        project: bool,
        /// Write the step-by-step trace as JSON lines to this file.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Compute the offline optimum.
    Opt {
        #[command(flatten)]
        src: Source,
        #[arg(long, value_enum, default_value_t = OptMethod::Bruteforce)]
        method: OptMethod,
    },
    /// Run the checks on one instance; exits 1 if any fails.
    Verify {
        #[command(flatten)]
        src: Source,
        /// Comma-separated checks; all by default.
        #[arg(long, value_delimiter = ',')]
        checks: Vec<Check>,
        /// Corrupt the tie rule so that discarding looks profitable.
        #[arg(long)]
        mutate: bool,
    },
    /// Run the checks over a range of seeds; exits 1 if any fails.
    Campaign {
        #[command(flatten)]
        gen: GenArgs,
        /// Number of seeds, starting at --seed.
        #[arg(long, default_value_t = 200)]
        seeds: u64,
        /// Comma-separated generator modes, cycled by seed.
        #[arg(long, value_delimiter = ',', default_value = "random,adversarial-lock,adversarial-burst")]
        modes: Vec<Mode>,
        /// Comma-separated checks; all by default.
        #[arg(long, value_delimiter = ',')]
        checks: Vec<Check>,
        /// Corrupt the tie rule; the lemma3 check should then fail.
        #[arg(long)]
        mutate: bool,
        /// Fill the runtime_ms column (makes reports differ between runs).
        #[arg(long)]
        timing: bool,
        /// Random (allocation, resource, bin) triples per seed for increment consistency.
        #[arg(long, default_value_t = 50)]
        triples: u32,
        /// Random S within T pairs per seed for the submodularity spot check.
        #[arg(long, default_value_t = 5)]
        pairs: u32,
        /// Where reproduction files go; defaults to the directory of --out.
        #[arg(long)]
        repro_dir: Option<PathBuf>,
    },
    /// Multi-source age-of-information instance.
    AdaptAoi {
        /// JSON configuration {sources: [{events, value}], horizon, energy}.
        #[arg(long, conflicts_with = "figure")]
        config: Option<PathBuf>,
        /// Use the sawtooth figure's three-event configuration and print its edges.
        #[arg(long)]
        figure: bool,
        /// Event value for --figure.
        #[arg(long, default_value = "10")]
        value: String,
    },
    /// Speed scaling on several servers.
    AdaptSpeedscale {
        /// JSON configuration {jobs, powers, horizon, flow_weight, mandatory}.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Jobs as arrival:size pairs, comma-separated.
        #[arg(long, value_delimiter = ',', default_value = "0:2,1:1")]
        jobs: Vec<String>,
        #[arg(long, default_value_t = 2)]
        servers: u32,
        /// Power exponent: each server uses g(k) = k^exponent.
        #[arg(long, default_value_t = 2)]
        exponent: u32,
        #[arg(long, default_value_t = 3)]
        horizon: u32,
        #[arg(long, default_value = "10")]
        unit_value: String,
        #[arg(long, default_value = "1")]
        flow_weight: String,
        /// Weight jobs so that the optimum transmits everything.
        #[arg(long)]
        mandatory: bool,
    },
    /// Remote-sampling instance family.
    AdaptSampling {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        sources: u32,
        #[arg(long, default_value_t = 2)]
        period: u32,
        #[arg(long, default_value_t = 1)]
        jitter: u32,
        #[arg(long, default_value_t = 5)]
        horizon: u32,
        #[arg(long, default_value_t = 3)]
        max_k: u32,
        /// Fidelity table such as 0,7,10,11; halving fidelity when absent.
        #[arg(long, value_delimiter = ',')]
        fidelity: Vec<i64>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Algorithm {
    Greedy,
    Matching,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OptMethod {
    Bruteforce,
    /// Binary instances only.
    Matching,
}

#[derive(Args, Clone)]
struct GenArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    packets: u32,
    #[arg(long, default_value_t = 3)]
    max_k: u32,
    #[arg(long, default_value_t = 4)]
    horizon: u32,
    #[arg(long, default_value_t = 1)]
    servers: u32,
    #[arg(long, default_value_t = 12)]
    max_value: i64,
    #[arg(long, default_value_t = 3)]
    max_slope: i64,
    #[arg(long, default_value = "random")]
    mode: Mode,
}

impl GenArgs {
    fn params(&self) -> GenParams {
        GenParams {
            packets: self.packets,
            max_k: self.max_k,
            horizon: self.horizon,
            servers: self.servers,
            max_value: self.max_value,
            max_slope: self.max_slope,
            mode: self.mode,
            seed: self.seed,
        }
    }
}

#[derive(Args, Clone)]
struct Source {
    /// Instance JSON; generated from the other flags when absent.
    #[arg(long)]
    input: Option<PathBuf>,
    #[command(flatten)]
    gen: GenArgs,
}

/// A bare instance, or a document carrying one under `instance` (repro
/// files, the AoI figure).
fn parse_input(text: &str) -> Result<Instance, aqi_core::ModelError> {
    if let Ok(serde_json::Value::Object(doc)) = serde_json::from_str::<serde_json::Value>(text) {
        if let (Some(inner), false) = (doc.get("instance"), doc.contains_key("packets")) {
            return Instance::from_json(&inner.to_string());
        }
    }
    Instance::from_json(text)
}

impl Source {
    fn load(&self) -> Result<Instance> {
        match &self.input {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                Ok(parse_input(&text).with_context(|| format!("parsing {}", p.display()))?)
            }
            None => Ok(generate(&self.gen.params())?),
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value prints");
    s.push('\n');
    s
}

fn parse_value(s: &str) -> Result<Value> {
    value::parse(s).map_err(|e| anyhow::anyhow!("bad number {s:?}: {e}"))
}

fn json_only(format: Format, what: &str) -> Result<()> {
    if format == Format::Csv {
        bail!("{what} emits JSON only");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match real_main(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main(cli: Cli) -> Result<ExitCode> {
    let budget = cli.budget.unwrap_or_else(budget_from_env);
    let out = cli.out.as_deref();
    match cli.cmd {
        Cmd::Gen { gen, exact_oracle } => {
            json_only(cli.format, "gen")?;
            let params = gen.params();
            if exact_oracle {
                params.check_desk_scale()?;
            }
            emit(out, &generate(&params)?.to_json())?;
        }
        Cmd::Run { src, algorithm, exact_oracle, require_opt, project, trace } => {
            let mut inst = src.load()?;
            if project {
                inst = aqi_core::campaign::binary_projection(&inst);
            }
            let start = Instant::now();
            let (alg_value, trace_text, name) = match algorithm {
                Algorithm::Greedy => {
                    let run = run_algorithm2(&inst);
                    for w in &run.warnings {
                        eprintln!("warning: {w}");
                    }
                    (run.valuation.total.clone(), run.steps_json_lines(), "greedy")
                }
                Algorithm::Matching => {
                    if !inst.is_binary() {
                        bail!("the matching algorithm needs a binary instance (try --project)");
                    }
                    let e = expand_binary(&inst)?;
                    let run = run_algorithm1(&e.graph, &e.arrivals, &e.locks)?;
                    (run.weight.clone(), run.trace.to_json_lines(), "matching")
                }
            };
            let runtime_ms = start.elapsed().as_millis();
            if let Some(p) = &trace {
                std::fs::write(p, trace_text).with_context(|| format!("writing {}", p.display()))?;
            }
            let (opt, notice) = if exact_oracle || require_opt {
                match offline_opt_bruteforce(&inst, budget) {
                    Ok(o) => (Some(o.valuation.total), None),
                    Err(e) if require_opt => bail!("offline optimum required but not computed: {e}"),
                    Err(e) => (None, Some(e.to_string())),
                }
            } else {
                (None, None)
            };
            let ratio = opt.as_ref().map(|o| competitive_ratio(&alg_value, o));
            match cli.format {
                Format::Csv => {
                    let row = Row {
                        seed: src.gen.seed,
                        n_packets: inst.packets.len(),
                        total_subpackets: inst.total_subpackets(),
                        horizon: inst.horizon,
                        alg: name.into(),
                        alg_value: value::format(&alg_value),
                        opt_value: opt.as_ref().map_or(String::new(), value::format),
                        ratio: ratio.as_ref().map_or(String::new(), |r| r.display()),
                        runtime_ms: Some(runtime_ms),
                    };
                    emit(out, &rows_csv(&[row]))?;
                }
                Format::Json => {
                    let bundle = json!({
                        "instance": inst.label,
                        "algorithm": name,
                        "alg_value": value::to_json(&alg_value),
                        "opt_value": opt.as_ref().map(value::to_json),
                        "ratio": ratio,
                        "notice": notice,
                        "trace": trace.as_ref().map(|p| p.display().to_string()),
                    });
                    emit(out, &pretty(&bundle))?;
                }
            }
        }
        Cmd::Opt { src, method } => {
            json_only(cli.format, "opt")?;
            let inst = src.load()?;
            let doc = match method {
                OptMethod::Bruteforce => {
                    let r = offline_opt_bruteforce(&inst, budget)?;
                    json!({
                        "method": "bruteforce",
                        "value": value::to_json(&r.valuation.total),
                        "allocation": r.allocation.to_json(),
                        "nodes": r.nodes,
                    })
                }
                OptMethod::Matching => {
                    let r = offline_opt_binary_matching(&inst)?;
                    json!({
                        "method": "matching",
                        "value": value::to_json(&r.matching.weight),
                        "allocation": r.allocation.to_json(),
                    })
                }
            };
            emit(out, &pretty(&doc))?;
        }
        Cmd::Verify { src, checks, mutate } => {
            json_only(cli.format, "verify")?;
            let inst = src.load()?;
            let checks = if checks.is_empty() { Check::ALL.to_vec() } else { checks };
            let cfg = CampaignConfig { checks: checks.clone(), budget, mutate, ..CampaignConfig::default() };
            let r = run_seed(&cfg, src.gen.seed, &inst);
            let chain = if checks.contains(&Check::Theorem2) && !mutate {
                verify_theorem2_chain(&inst, budget).ok()
            } else {
                None
            };
            let failed = r.outcomes.iter().any(|o| o.status == Status::Fail && !o.check.informational());
            let doc = json!({ "instance": inst.label, "outcomes": r.outcomes, "rows": r.rows, "chain": chain });
            emit(out, &pretty(&doc))?;
            for o in &r.outcomes {
                eprintln!("{:<22} {:?}", o.check.name(), o.status);
            }
            if failed {
                return Ok(ExitCode::FAILURE);
            }
        }
        Cmd::Campaign { gen, seeds, modes, checks, mutate, timing, triples, pairs, repro_dir } => {
            let cfg = CampaignConfig {
                first_seed: gen.seed,
                seeds,
                params: gen.params(),
                modes,
                checks: if checks.is_empty() { Check::ALL.to_vec() } else { checks },
                budget,
                triples,
                pairs,
                mutate,
                timing,
            };
            let report = run_campaign(&cfg);
            match cli.format {
                Format::Json => emit(out, &report.to_json())?,
                Format::Csv => emit(out, &report.csv())?,
            }
            let dir = repro_dir
                .or_else(|| out.and_then(|p| p.parent()).map(Path::to_path_buf))
                .unwrap_or_else(|| PathBuf::from("."));
            for r in &report.repros {
                std::fs::create_dir_all(&dir)?;
                let doc = json!({ "command": r.command, "check": r.check, "seed": r.seed, "detail": r.detail, "instance": r.instance });
                std::fs::write(dir.join(&r.file), pretty(&doc))?;
                std::fs::write(dir.join(r.file.replace(".json", ".instance.json")), r.instance.to_json())?;
            }
            eprint!("{}", report.summary());
            for (seed, e) in &report.generation_errors {
                eprintln!("seed {seed}: {e}");
            }
            if !report.passed() {
                eprintln!("{} reproduction file(s) in {}", report.repros.len(), dir.display());
                return Ok(ExitCode::FAILURE);
            }
        }
        Cmd::AdaptAoi { config, figure, value: v } => {
            json_only(cli.format, "adapt-aoi")?;
            if figure {
                // t1 = 0, t2 = 1, t = 3, t3 = 4
                let (m, s, e3) = aoi_figure(0, 1, 3, 4, parse_value(&v)?)?;
                let edges: Vec<serde_json::Value> = m
                    .edge_weights(&s, e3)?
                    .into_iter()
                    .map(|(t, w)| json!({ "slot": t, "rho": value::to_json(&w) }))
                    .collect();
                let doc = json!({
                    "config": m.config,
                    "schedule": s.iter().map(|(e, t)| json!({ "source": e.source, "event": e.event, "slot": t })).collect::<Vec<_>>(),
                    "e3_edges": edges,
                    "instance": serde_json::from_str::<serde_json::Value>(&m.instance.to_json())?,
                });
                emit(out, &pretty(&doc))?;
            } else {
                let Some(p) = config else { bail!("adapt-aoi needs --config FILE or --figure") };
                let cfg: AoiConfig = serde_json::from_str(&std::fs::read_to_string(&p)?).with_context(|| format!("parsing {}", p.display()))?;
                emit(out, &aoi_multisource(cfg)?.instance.to_json())?;
            }
        }
        Cmd::AdaptSpeedscale { config, jobs, servers, exponent, horizon, unit_value, flow_weight, mandatory } => {
            json_only(cli.format, "adapt-speedscale")?;
            let cfg = match config {
                Some(p) => serde_json::from_str(&std::fs::read_to_string(&p)?).with_context(|| format!("parsing {}", p.display()))?,
                None => {
                    let unit_value = parse_value(&unit_value)?;
                    let jobs = jobs
                        .iter()
                        .map(|j| {
                            let (a, s) = j.split_once(':').with_context(|| format!("job {j:?} is not arrival:size"))?;
                            Ok(Job { arrival: a.trim().parse()?, size: s.trim().parse()?, unit_value: unit_value.clone() })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    SpeedScalingConfig {
                        jobs,
                        powers: vec![CostFamily::Power { coef: int(1), exponent }; servers as usize],
                        horizon,
                        flow_weight: parse_value(&flow_weight)?,
                        mandatory,
                    }
                }
            };
            emit(out, &speed_scaling(&cfg)?.to_json())?;
        }
        Cmd::AdaptSampling { seed, sources, period, jitter, horizon, max_k, fidelity } => {
            json_only(cli.format, "adapt-sampling")?;
            let fidelity = if fidelity.is_empty() { Fidelity::Halving } else { Fidelity::Table { table: fidelity } };
            let p = SamplingParams { sources, period, jitter, horizon, max_k, fidelity, seed };
            emit(out, &remote_sampling_family(&p)?.to_json())?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
