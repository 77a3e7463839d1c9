//! Command-line front end: experiment configuration, reproducible batch
//! runs, and machine-readable outputs over the `ba-sim` library.

pub mod config;

use std::collections::BTreeSet;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ba_sim::adversary::{validate_locally_consistent, AdversaryStrategy};
use ba_sim::attacks::{
    first_round_attack, pr_agreement_attack, pr_halting_attack, second_round_static_attack,
    AttackGeometry, AttackStage, Regime,
};
use ba_sim::conjecture::{self, EvalMode};
use ba_sim::engine::{run, run_honest, Seed};
use ba_sim::protocols;
use ba_sim::stats::{
    self, audit, first_round_bound, second_round_bound_arbitrary, second_round_bound_pr,
    PrAuditKnobs, Verdict,
};
use ba_sim::trace::write_trace_jsonl;
use ba_sim::{Error, InputVector, ProtocolSpec};

use config::ConfigFile;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_VIOLATED: i32 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "ba-sim",
    about = "Synchronous agreement simulator: locally consistent attacks, halting-bound audits, and the masking-conjecture lab",
    version
)]
pub struct Cli {
    /// Worker threads (default: BA_SIM_WORKERS, else logical cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StageArg {
    FirstRound,
    SecondRoundArb,
    SecondRoundPr,
}

impl StageArg {
    fn to_stage(self) -> AttackStage {
        match self {
            StageArg::FirstRound => AttackStage::FirstRound,
            StageArg::SecondRoundArb => AttackStage::SecondRoundArb,
            StageArg::SecondRoundPr => AttackStage::SecondRoundPr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegimeArg {
    Third,
    Quarter,
}

impl RegimeArg {
    fn to_regime(self) -> Regime {
        match self {
            RegimeArg::Third => Regime::Third,
            RegimeArg::Quarter => Regime::Quarter,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AttackKind {
    FirstRound,
    FirstRoundRushing,
    PivotVariant,
    PivotRandomD,
    SecondRoundStatic,
    PrHalting,
    PrAgreement,
}

#[derive(Args, Debug, Clone)]
pub struct ProtocolArgs {
    /// Catalog protocol name (see list-protocols).
    #[arg(long)]
    pub protocol: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub t: Option<usize>,
    /// Auxiliary builder knob (phase limit for micali-lite).
    #[arg(long)]
    pub aux: Option<usize>,
    /// Truncate the halting budget under test to this q.
    #[arg(long)]
    pub truncate_q: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct GeometryArgs {
    #[arg(long, value_enum)]
    pub stage: Option<StageArg>,
    #[arg(long, value_enum)]
    pub regime: Option<RegimeArg>,
    /// Override pivot-set size (desk-scale geometry).
    #[arg(long)]
    pub k: Option<usize>,
    /// Override cell size (desk-scale geometry).
    #[arg(long)]
    pub ell: Option<usize>,
    #[arg(long)]
    pub eps_t: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub confidence: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Input bits (e.g. 000111000); defaults to the geometry's attack vector.
    #[arg(long)]
    pub inputs: Option<String>,
    /// Output file (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Suppress the timestamp header line for byte-identical output.
    #[arg(long)]
    pub no_timestamp: bool,
    /// Experiment config file; explicit flags override file values.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Enumerate the protocol catalog with documented guarantees.
    ListProtocols {
        #[arg(long)]
        json: bool,
    },
    /// Evaluate a closed-form halting bound.
    Bounds {
        /// One of: first-round, second-round-arb, second-round-pr
        /// (aliases 4.1, 5.1, 5.2).
        #[arg(long)]
        theorem: String,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        t: Option<usize>,
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0.0)]
        beta: f64,
        /// Treat the protocol as public-randomness (first-round err = 0).
        #[arg(long)]
        pr: bool,
        #[arg(long)]
        eps_t: Option<f64>,
        #[arg(long)]
        eps_gamma: Option<f64>,
    },
    /// Honest batch runs, emitting one trace per trial as JSON lines.
    Simulate {
        #[command(flatten)]
        protocol: ProtocolArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run one attack strategy, emitting per-trial outcome rows.
    Attack {
        #[command(flatten)]
        protocol: ProtocolArgs,
        #[command(flatten)]
        geometry: GeometryArgs,
        #[arg(long, value_enum)]
        attack: Option<AttackKind>,
        /// Variant index for pivot-variant.
        #[arg(long)]
        d: Option<usize>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Replay a stage's adversary suite and audit the halting inequality.
    Audit {
        #[command(flatten)]
        protocol: ProtocolArgs,
        #[command(flatten)]
        geometry: GeometryArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Also emit the per-cell breakdown as JSON to stderr-adjacent file.
        #[arg(long)]
        json: bool,
    },
    /// Evaluate the masking-conjecture hypothesis and conclusion.
    Conjecture {
        /// prefix | ball | induced
        #[arg(long)]
        family: String,
        #[arg(long)]
        n: Option<usize>,
        /// Prefix length.
        #[arg(long)]
        k: Option<usize>,
        /// Ball radius.
        #[arg(long)]
        radius: Option<usize>,
        /// Alphabet cardinality.
        #[arg(long, default_value_t = 2)]
        card: u64,
        /// exhaustive | mc
        #[arg(long, default_value = "exhaustive")]
        mode: String,
        /// Induced mode: protocol/t/d and a seed for the setup draw.
        #[arg(long)]
        protocol: Option<String>,
        #[arg(long)]
        t: Option<usize>,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        csv: bool,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run an attack over many seeds and validate local consistency.
    Validate {
        #[command(flatten)]
        protocol: ProtocolArgs,
        #[command(flatten)]
        geometry: GeometryArgs,
        #[arg(long, value_enum)]
        attack: Option<AttackKind>,
        #[arg(long)]
        d: Option<usize>,
        /// Number of seeds to replay.
        #[arg(long, default_value_t = 100)]
        seeds: u64,
        #[command(flatten)]
        run: RunArgs,
    },
}

/// Flat schema shared by config-file-driven commands.
const CONFIG_KEYS: &[&str] = &[
    "protocol",
    "n",
    "t",
    "aux",
    "truncate_q",
    "stage",
    "regime",
    "k",
    "ell",
    "eps_t",
    "sigma",
    "lambda",
    "delta",
    "trials",
    "seed",
    "confidence",
    "inputs",
    "out",
    "workers",
    "attack",
    "d",
    "seeds",
];

fn load_config(path: &Option<PathBuf>) -> Result<ConfigFile, String> {
    match path {
        None => Ok(ConfigFile::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| format!("cannot read config {}: {e}", p.display()))?;
            let cfg = ConfigFile::parse(&text).map_err(|e| e.to_string())?;
            cfg.check_schema(CONFIG_KEYS).map_err(|e| e.to_string())?;
            Ok(cfg)
        }
    }
}

fn resolve<T: std::str::FromStr + Clone>(
    flag: &Option<T>,
    cfg: &ConfigFile,
    key: &str,
) -> Result<Option<T>, String> {
    if let Some(v) = flag {
        return Ok(Some(v.clone()));
    }
    cfg.get_parsed::<T>(key).map_err(|e| e.to_string())
}

fn require<T>(v: Option<T>, what: &str) -> Result<T, String> {
    v.ok_or_else(|| format!("missing required parameter: {what}"))
}

struct Resolved {
    spec: ProtocolSpec,
    protocol_name: String,
    n: usize,
    t: usize,
}

fn resolve_protocol(args: &ProtocolArgs, cfg: &ConfigFile) -> Result<Resolved, String> {
    let name = resolve(&args.protocol, cfg, "protocol")?;
    let name = require(name, "--protocol")?;
    let n = require(resolve(&args.n, cfg, "n")?, "--n")?;
    let t = resolve(&args.t, cfg, "t")?.unwrap_or(0);
    let aux = resolve(&args.aux, cfg, "aux")?.unwrap_or(0);
    let mut spec = protocols::build(&name, n, t, aux).map_err(|e| e.to_string())?;
    if let Some(q) = resolve(&args.truncate_q, cfg, "truncate_q")? {
        spec = spec.truncated(q);
    }
    Ok(Resolved {
        spec,
        protocol_name: name,
        n,
        t,
    })
}

fn resolve_geometry(
    geo: &GeometryArgs,
    cfg: &ConfigFile,
    n: usize,
    t: usize,
) -> Result<AttackGeometry, String> {
    let stage = match (geo.stage, cfg.get("stage")) {
        (Some(s), _) => s.to_stage(),
        (None, Some(s)) => parse_stage(s)?,
        (None, None) => return Err("missing required parameter: --stage".into()),
    };
    let regime = match (geo.regime, cfg.get("regime")) {
        (Some(r), _) => r.to_regime(),
        (None, Some("third")) => Regime::Third,
        (None, Some("quarter")) => Regime::Quarter,
        (None, Some(other)) => return Err(format!("unknown regime '{other}'")),
        (None, None) => {
            // Default: the strongest regime the budget supports, except the
            // arbitrary-protocol second-round stage which is quarter-only.
            if stage == AttackStage::SecondRoundArb || 3 * t < n {
                Regime::Quarter
            } else {
                Regime::Third
            }
        }
    };
    let eps_t = resolve(&geo.eps_t, cfg, "eps_t")?.unwrap_or_else(|| {
        let threshold = match regime {
            Regime::Third => 1.0 / 3.0,
            Regime::Quarter => 0.25,
        };
        (t as f64 / n as f64 - threshold).max(1e-6)
    });
    let k = resolve(&geo.k, cfg, "k")?;
    let ell = resolve(&geo.ell, cfg, "ell")?;
    let geom = match (k, ell) {
        (Some(k), Some(ell)) => AttackGeometry::custom(n, t, regime, stage, k, ell, eps_t),
        (None, None) => AttackGeometry::derive(n, t, regime, stage, eps_t),
        _ => return Err("--k and --ell must be given together".into()),
    };
    geom.map_err(|e| e.to_string())
}

fn parse_stage(s: &str) -> Result<AttackStage, String> {
    match s {
        "first-round" | "4.1" => Ok(AttackStage::FirstRound),
        "second-round-arb" | "5.1" => Ok(AttackStage::SecondRoundArb),
        "second-round-pr" | "5.2" => Ok(AttackStage::SecondRoundPr),
        other => Err(format!("unknown stage '{other}'")),
    }
}

fn build_attack(
    kind: AttackKind,
    spec: &ProtocolSpec,
    geom: &AttackGeometry,
    d: Option<usize>,
    sigma: f64,
    lambda: f64,
    delta: f64,
) -> Result<AdversaryStrategy, Error> {
    match kind {
        AttackKind::FirstRound => first_round_attack(spec, geom, false),
        AttackKind::FirstRoundRushing => first_round_attack(spec, geom, true),
        AttackKind::PivotVariant => {
            ba_sim::attacks::pivot_variant(spec, geom, d.unwrap_or(1), &BTreeSet::new())
        }
        AttackKind::PivotRandomD => ba_sim::attacks::pivot_random_d(spec, geom),
        AttackKind::SecondRoundStatic => second_round_static_attack(spec, geom),
        AttackKind::PrHalting => pr_halting_attack(spec, geom, sigma, lambda, delta),
        AttackKind::PrAgreement => pr_agreement_attack(spec, geom, sigma),
    }
}

fn default_attack_for_stage(stage: AttackStage) -> AttackKind {
    match stage {
        AttackStage::FirstRound => AttackKind::FirstRound,
        AttackStage::SecondRoundArb => AttackKind::SecondRoundStatic,
        AttackStage::SecondRoundPr => AttackKind::PrHalting,
    }
}

struct OutSink {
    file: Option<std::fs::File>,
}

impl OutSink {
    fn open(path: &Option<PathBuf>) -> Result<OutSink, String> {
        match path {
            None => Ok(OutSink { file: None }),
            Some(p) => std::fs::File::create(p)
                .map(|f| OutSink { file: Some(f) })
                .map_err(|e| format!("cannot create {}: {e}", p.display())),
        }
    }

    fn write_all(&mut self, text: &str) -> Result<(), String> {
        match &mut self.file {
            Some(f) => f.write_all(text.as_bytes()).map_err(|e| e.to_string()),
            None => {
                print!("{text}");
                std::io::stdout().flush().map_err(|e| e.to_string())
            }
        }
    }
}

fn timestamp_header(suppress: bool) -> String {
    if suppress {
        String::new()
    } else {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        format!("# generated-at-unix {secs}\n")
    }
}

fn knobs_from(run: &RunArgs, cfg: &ConfigFile) -> Result<PrAuditKnobs, String> {
    let defaults = PrAuditKnobs::default();
    Ok(PrAuditKnobs {
        sigma: resolve(&run.sigma, cfg, "sigma")?.unwrap_or(defaults.sigma),
        lambda: resolve(&run.lambda, cfg, "lambda")?.unwrap_or(defaults.lambda),
        delta: resolve(&run.delta, cfg, "delta")?.unwrap_or(defaults.delta),
    })
}

/// Dispatch a parsed command; returns the process exit code.
pub fn execute(cli: Cli) -> i32 {
    let workers = cli
        .workers
        .or_else(|| {
            std::env::var("BA_SIM_WORKERS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(0); // 0 = rayon default (logical cores)
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot build worker pool: {e}");
            return EXIT_RUNTIME;
        }
    };
    pool.install(|| match dispatch(cli.command) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            EXIT_CONFIG
        }
    })
}

fn dispatch(cmd: Command) -> Result<i32, String> {
    match cmd {
        Command::ListProtocols { json } => {
            let catalog = protocols::catalog();
            if json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&catalog).map_err(|e| e.to_string())?
                );
            } else {
                for e in catalog {
                    println!(
                        "{} {}  alpha={} beta={} q={} gamma={}\n    {}",
                        e.name,
                        e.parameters,
                        e.claimed_alpha,
                        e.claimed_beta,
                        e.claimed_q,
                        e.claimed_gamma,
                        e.notes
                    );
                }
            }
            Ok(EXIT_OK)
        }
        Command::Bounds {
            theorem,
            n,
            t,
            alpha,
            beta,
            pr,
            eps_t,
            eps_gamma,
        } => {
            match parse_stage(&theorem)? {
                AttackStage::FirstRound => {
                    let n = require(n, "--n")?;
                    let t = require(t, "--t")?;
                    let b = first_round_bound(n, t, alpha, beta, pr).map_err(|e| e.to_string())?;
                    println!(
                        "branch={} err={} bound={}{}",
                        b.branch,
                        b.err,
                        b.value,
                        if b.vacuous { " (vacuous)" } else { "" }
                    );
                }
                AttackStage::SecondRoundArb => {
                    let n = require(n, "--n")?;
                    let t = require(t, "--t")?;
                    let b =
                        second_round_bound_arbitrary(n, t, alpha, beta).map_err(|e| e.to_string())?;
                    println!(
                        "w={} bound={}{}",
                        b.w.unwrap_or(0),
                        b.value,
                        if b.vacuous { " (vacuous)" } else { "" }
                    );
                }
                AttackStage::SecondRoundPr => {
                    let eps_t = require(eps_t, "--eps-t")?;
                    let eps_gamma = require(eps_gamma, "--eps-gamma")?;
                    let b = second_round_bound_pr(eps_t, eps_gamma).map_err(|e| e.to_string())?;
                    println!(
                        "beta_threshold={} gamma_third={} gamma_quarter={}{} lambda={} sigma={}",
                        b.beta_threshold,
                        b.gamma_third,
                        b.gamma_quarter,
                        if b.quarter_vacuous { " (vacuous)" } else { "" },
                        b.lambda,
                        b.sigma
                    );
                }
            }
            Ok(EXIT_OK)
        }
        Command::Simulate { protocol, run: r } => {
            let cfg = load_config(&r.config)?;
            let resolved = resolve_protocol(&protocol, &cfg)?;
            let trials = resolve(&r.trials, &cfg, "trials")?.unwrap_or(1);
            let seed = resolve(&r.seed, &cfg, "seed")?.unwrap_or(0);
            let inputs = match resolve(&r.inputs, &cfg, "inputs")? {
                Some(s) => InputVector::parse(&s).map_err(|e| e.to_string())?,
                None => InputVector::uniform(resolved.n, 0),
            };
            let mut buf: Vec<u8> = Vec::new();
            for trial in 0..trials as u64 {
                let trace = run_honest(&resolved.spec, &inputs, Seed::new(seed).trial(trial))
                    .map_err(|e| e.to_string())?;
                write_trace_jsonl(&trace, &mut buf).map_err(|e| e.to_string())?;
            }
            let mut sink = OutSink::open(&r.out)?;
            sink.write_all(std::str::from_utf8(&buf).unwrap_or(""))?;
            Ok(EXIT_OK)
        }
        Command::Attack {
            protocol,
            geometry,
            attack,
            d,
            run: r,
        } => {
            let cfg = load_config(&r.config)?;
            let resolved = resolve_protocol(&protocol, &cfg)?;
            let geom = resolve_geometry(&geometry, &cfg, resolved.n, resolved.t)?;
            let knobs = knobs_from(&r, &cfg)?;
            let kind = attack.unwrap_or_else(|| default_attack_for_stage(geom.stage));
            let strategy = build_attack(
                kind,
                &resolved.spec,
                &geom,
                resolve(&d, &cfg, "d")?,
                knobs.sigma,
                knobs.lambda,
                knobs.delta,
            )
            .map_err(|e| e.to_string())?;
            let trials = resolve(&r.trials, &cfg, "trials")?.unwrap_or(100);
            let seed = resolve(&r.seed, &cfg, "seed")?.unwrap_or(0);
            let inputs = match resolve(&r.inputs, &cfg, "inputs")? {
                Some(s) => InputVector::parse(&s).map_err(|e| e.to_string())?,
                None => geom.from.clone(),
            };
            let mut out = timestamp_header(r.no_timestamp);
            out.push_str("trial,halted_by_q,agreement_violated,validity_violated,honest_outputs\n");
            for trial in 0..trials as u64 {
                let trace = run(&resolved.spec, &inputs, &strategy, Seed::new(seed).trial(trial))
                    .map_err(|e| e.to_string())?;
                let honest = trace.honest_indices();
                let outs: Vec<Option<u8>> = honest.iter().map(|&i| trace.outputs[i]).collect();
                let halted = honest
                    .iter()
                    .all(|&i| matches!(trace.halt_round[i], Some(rr) if rr <= resolved.spec.q));
                let agree_viol = outs.contains(&Some(0)) && outs.contains(&Some(1));
                let unanimous = honest
                    .windows(2)
                    .all(|w| inputs.bits()[w[0]] == inputs.bits()[w[1]]);
                let valid_viol = unanimous
                    && !honest.is_empty()
                    && outs.contains(&Some(1 - inputs.bits()[honest[0]]));
                let mut summary = String::with_capacity(resolved.n);
                for i in 0..resolved.n {
                    if trace.corruption_log[i].is_some() {
                        summary.push('.');
                    } else {
                        summary.push(match trace.outputs[i] {
                            Some(0) => '0',
                            Some(_) => '1',
                            None => '-',
                        });
                    }
                }
                out.push_str(&format!(
                    "{trial},{},{},{},{summary}\n",
                    halted as u8, agree_viol as u8, valid_viol as u8
                ));
            }
            OutSink::open(&r.out)?.write_all(&out)?;
            Ok(EXIT_OK)
        }
        Command::Audit {
            protocol,
            geometry,
            run: r,
            json,
        } => {
            let cfg = load_config(&r.config)?;
            let resolved = resolve_protocol(&protocol, &cfg)?;
            let geom = resolve_geometry(&geometry, &cfg, resolved.n, resolved.t)?;
            let trials = resolve(&r.trials, &cfg, "trials")?.unwrap_or(1_000);
            let seed = resolve(&r.seed, &cfg, "seed")?.unwrap_or(0);
            let confidence = resolve(&r.confidence, &cfg, "confidence")?.unwrap_or(0.99);
            let knobs = knobs_from(&r, &cfg)?;
            let report = audit(&resolved.spec, &geom, trials, seed, confidence, knobs)
                .map_err(|e| e.to_string())?;
            let mut out = timestamp_header(r.no_timestamp);
            if json {
                out.push_str(&serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?);
                out.push('\n');
            } else {
                out.push_str(stats::AuditReport::csv_header());
                out.push('\n');
                out.push_str(&report.csv_row());
                out.push('\n');
            }
            OutSink::open(&r.out)?.write_all(&out)?;
            if report.verdict == Verdict::Violated {
                return Ok(EXIT_VIOLATED);
            }
            Ok(EXIT_OK)
        }
        Command::Conjecture {
            family,
            n,
            k,
            radius,
            card,
            mode,
            protocol,
            t,
            d,
            csv,
            run: r,
        } => {
            let cfg = load_config(&r.config)?;
            let n = require(resolve(&n, &cfg, "n")?, "--n")?;
            let sigma = require(resolve(&r.sigma, &cfg, "sigma")?, "--sigma")?;
            let lambda = resolve(&r.lambda, &cfg, "lambda")?.unwrap_or(0.1);
            let delta = resolve(&r.delta, &cfg, "delta")?.unwrap_or(0.1);
            let trials = resolve(&r.trials, &cfg, "trials")?.unwrap_or(10_000);
            let seed = resolve(&r.seed, &cfg, "seed")?.unwrap_or(0);
            let eval_mode = match mode.as_str() {
                "exhaustive" => EvalMode::Exhaustive,
                "mc" | "monte-carlo" => EvalMode::MonteCarlo { trials, seed },
                other => return Err(format!("unknown mode '{other}'")),
            };
            let pair = match family.as_str() {
                "prefix" => conjecture::prefix_sets(n, require(k, "--k")?, card)
                    .map_err(|e| e.to_string())?,
                "ball" => conjecture::ball_sets(n, require(radius, "--radius")?, card)
                    .map_err(|e| e.to_string())?,
                "induced" => {
                    let name = require(protocol, "--protocol")?;
                    let t = require(t, "--t")?;
                    let d = require(d, "--d")?;
                    let spec = protocols::build(&name, n, t, 0).map_err(|e| e.to_string())?;
                    let geom = resolve_geometry(
                        &GeometryArgs {
                            stage: Some(StageArg::SecondRoundPr),
                            regime: None,
                            k: None,
                            ell: None,
                            eps_t: None,
                        },
                        &cfg,
                        n,
                        t,
                    )
                    .or_else(|_| {
                        // Fall back to the smallest feasible desk geometry.
                        AttackGeometry::custom(
                            n,
                            t,
                            Regime::Quarter,
                            AttackStage::SecondRoundPr,
                            (n - t).div_ceil(3).max(1),
                            1,
                            0.01,
                        )
                        .map_err(|e| e.to_string())
                    })?;
                    let setup = run_honest(&spec, &geom.from, Seed::new(seed))
                        .map_err(|e| e.to_string())?
                        .setup;
                    conjecture::protocol_induced_pair(&spec, &geom, &setup, d)
                        .map_err(|e| e.to_string())?
                }
                other => return Err(format!("unknown family '{other}'")),
            };
            let verdict = conjecture::evaluate(&pair, sigma, lambda, delta, eval_mode)
                .map_err(|e| e.to_string())?;
            let mut out = String::new();
            if csv {
                out.push_str(
                    "family,n,card,sigma,lambda,delta,mode,hyp0_level,hyp0_ok,hyp1_level,hyp1_ok,conclusion,ci,flagged\n",
                );
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{:.8},{},{:.8},{},{:.8},{:.8},{}\n",
                    verdict.family,
                    verdict.n,
                    verdict.card,
                    verdict.sigma,
                    verdict.lambda,
                    verdict.delta,
                    verdict.mode,
                    verdict.hypothesis[0].level,
                    verdict.hypothesis[0].ok as u8,
                    verdict.hypothesis[1].level,
                    verdict.hypothesis[1].ok as u8,
                    verdict.conclusion.point,
                    verdict.conclusion.ci_radius,
                    verdict.flagged as u8
                ));
            } else {
                out.push_str(&serde_json::to_string_pretty(&verdict).map_err(|e| e.to_string())?);
                out.push('\n');
            }
            OutSink::open(&r.out)?.write_all(&out)?;
            Ok(EXIT_OK)
        }
        Command::Validate {
            protocol,
            geometry,
            attack,
            d,
            seeds,
            run: r,
        } => {
            let cfg = load_config(&r.config)?;
            let resolved = resolve_protocol(&protocol, &cfg)?;
            let geom = resolve_geometry(&geometry, &cfg, resolved.n, resolved.t)?;
            let knobs = knobs_from(&r, &cfg)?;
            let kind = attack.unwrap_or_else(|| default_attack_for_stage(geom.stage));
            let strategy = build_attack(
                kind,
                &resolved.spec,
                &geom,
                resolve(&d, &cfg, "d")?,
                knobs.sigma,
                knobs.lambda,
                knobs.delta,
            )
            .map_err(|e| e.to_string())?;
            let seed = resolve(&r.seed, &cfg, "seed")?.unwrap_or(0);
            let inputs = match resolve(&r.inputs, &cfg, "inputs")? {
                Some(s) => InputVector::parse(&s).map_err(|e| e.to_string())?,
                None => geom.from.clone(),
            };
            let mut ok = 0u64;
            let mut failures: Vec<serde_json::Value> = Vec::new();
            for trial in 0..seeds {
                let trace = run(&resolved.spec, &inputs, &strategy, Seed::new(seed).trial(trial))
                    .map_err(|e| e.to_string())?;
                let report = validate_locally_consistent(&trace, &resolved.spec, &strategy)
                    .map_err(|e| e.to_string())?;
                if report.ok {
                    ok += 1;
                } else if failures.len() < 10 {
                    failures.push(serde_json::json!({
                        "trial": trial,
                        "violations": report.violations,
                    }));
                }
            }
            let summary = serde_json::json!({
                "protocol": resolved.protocol_name,
                "attack": strategy.name,
                "seeds": seeds,
                "ok": ok,
                "all_ok": ok == seeds,
                "failures": failures,
            });
            let mut out =
                serde_json::to_string_pretty(&summary).map_err(|e| e.to_string())?;
            out.push('\n');
            OutSink::open(&r.out)?.write_all(&out)?;
            Ok(EXIT_OK)
        }
    }
}
