//! Batch front end for the nomasim experiments.
//!
//! Every subcommand resolves its parameters (flags, then `--config`
//! overrides), runs inside a rayon pool of `--threads` workers and writes
//! either CSV with a `# key: value` manifest header or JSON with a top-level
//! `manifest` object. Data rows depend only on the parameters, never on the
//! thread count.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::{json, Value};

use nomasim_core::bounds::{
    noma_required_total_ebn0, oma_required_total_ebn0, LoadCurveSpec, LoadPoint, PointStatus, RateModel,
};
use nomasim_core::macsim::{analytic_op_single_user, op_curve};
use nomasim_core::phy::{generate_sequence_pool, scma_default_codebook, PoolKind, SequencePool};
use nomasim_core::rng::derive_seed;
use nomasim_core::rx::{link_level_compare, Csi, InterferenceModel, LinkScenario, Receiver, SignatureAssignment, Waveform};
use nomasim_core::sysmodel::{
    overhead_compare, run_aloha_frame, summarize, OverheadConfig, TrafficModel,
};
use nomasim_core::{from_db, Error as CoreError};

pub const EXIT_SELF_CHECK: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_GUARD: i32 = 3;
pub const EXIT_NONCONVERGENCE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "nomasim", version, about = "Grant-free NOMA uplink experiments")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output file (default: standard output).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// JSON object whose keys override the subcommand's flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Required total Eb/N0 versus load for OMA and the NOMA proxy (CSV).
    Bounds(BoundsArgs),
    /// Individual outage probability versus total SNR (CSV).
    Outage(OutageArgs),
    /// Link-level BER/BLER of the spreading or sparse-codebook uplink (CSV).
    Link(LinkArgs),
    /// Slotted-Aloha contention and signaling overhead report (JSON).
    System(SystemArgs),
    /// Print the default overhead profiles as JSON.
    Profiles,
    /// Export a signature pool as JSON.
    Pool(PoolArgs),
}

/// A list of numbers: `a,b,c` or an inclusive range `start:step:stop`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Grid(pub Vec<f64>);

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("{t:?} is not a number"));
        let parts: Vec<&str> = s.split(':').collect();
        let values = match parts.as_slice() {
            [a, step, b] => {
                let (a, step, b) = (num(a)?, num(step)?, num(b)?);
                if !(step > 0.0) || !(b >= a) {
                    return Err(format!("range {s:?} needs step > 0 and stop >= start"));
                }
                let n = ((b - a) / step + 1e-9).floor() as usize;
                if n > 1_000_000 {
                    return Err(format!("range {s:?} has too many points"));
                }
                // k * step rather than accumulation, so 0.02:0.02:0.2 hits 0.2
                (0..=n).map(|k| a + k as f64 * step).collect()
            }
            [_] => s.split(',').map(num).collect::<Result<Vec<_>, _>>()?,
            _ => return Err(format!("{s:?} is neither a list nor start:step:stop")),
        };
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(format!("grid {s:?} must hold finite numbers"));
        }
        Ok(Grid(values))
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsArgs {
    /// Information bits per packet.
    #[arg(long, default_value_t = 100.0)]
    pub k: f64,
    /// Target outage probability.
    #[arg(long, default_value_t = 0.01)]
    pub eps: f64,
    /// Loads to evaluate.
    #[arg(long, default_value = "0.02:0.02:0.2")]
    pub mu_grid: Grid,
    /// Channel uses of the NOMA proxy.
    #[arg(long, default_value_t = 100)]
    pub finite_n: u32,
    #[arg(long, default_value_t = 100_000)]
    pub trials: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutageArgs {
    /// User counts; K=1 is always added.
    #[arg(long = "k-list", alias = "K-list", value_delimiter = ',', default_value = "1,2,4,8,16")]
    pub k_list: Vec<usize>,
    /// Sum rate in bit/s/Hz.
    #[arg(long, default_value_t = 3.0)]
    pub rsum: f64,
    /// Total SNR points in dB.
    #[arg(long, default_value = "0:2:50")]
    pub snr_grid: Grid,
    #[arg(long, default_value_t = 100_000)]
    pub trials: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Compare the K=1 rows with the closed form and fail beyond 3 sigma.
    #[arg(long)]
    #[serde(default)]
    pub self_check: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkArgs {
    #[arg(long, default_value_t = 4)]
    pub users: usize,
    /// Chips per symbol.
    #[arg(long, default_value_t = 4)]
    pub spread_len: usize,
    /// orthogonal, random_qpsk or chirp_like.
    #[arg(long, default_value = "random_qpsk")]
    pub pool: String,
    /// Signatures in the pool (default: one per user).
    #[arg(long)]
    pub pool_size: Option<usize>,
    /// Read the pool from a JSON file instead of generating it.
    #[arg(long)]
    pub pool_file: Option<PathBuf>,
    /// fixed (user k takes signature k) or random (contention).
    #[arg(long, default_value = "fixed")]
    pub assignment: String,
    /// Receivers: mmse, sic, ml.
    #[arg(long, value_delimiter = ',', default_value = "mmse,sic,ml")]
    pub receiver: Vec<String>,
    /// SIC passes.
    #[arg(long, default_value_t = 2)]
    pub sic_rounds: usize,
    /// Per-user Es/N0 points in dB.
    #[arg(long, default_value = "0:2:12")]
    pub snr_grid: Grid,
    /// Bits per user per block.
    #[arg(long, default_value_t = 100)]
    pub payload: usize,
    /// Blocks per SNR point.
    #[arg(long, default_value_t = 2000)]
    pub trials: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Use the 6-user sparse codebook instead of spreading.
    #[arg(long)]
    #[serde(default)]
    pub scma: bool,
    /// Drop noise; receivers keep the nominal noise variance.
    #[arg(long)]
    #[serde(default)]
    pub noiseless: bool,
    /// Unit channel coefficients instead of Rayleigh block fading.
    #[arg(long)]
    #[serde(default)]
    pub no_fading: bool,
    /// perfect or estimated.
    #[arg(long, default_value = "perfect")]
    pub csi: String,
    /// Pilot chips (default: the spreading length).
    #[arg(long)]
    pub pilot_len: Option<usize>,
    #[arg(long, default_value = "orthogonal")]
    pub pilot_kind: String,
    /// Dominant inter-cell interferers (rank of the structured covariance).
    #[arg(long, default_value_t = 0)]
    #[serde(default)]
    pub interferers: usize,
    /// Power of each dominant interferer relative to a user.
    #[arg(long, default_value_t = 1.0)]
    pub interference_power: f64,
    /// Check BER(ml) <= BER(sic) <= BER(mmse) at every SNR (paired, 3 sigma).
    #[arg(long)]
    #[serde(default)]
    pub self_check: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemArgs {
    #[arg(long, default_value_t = 1000)]
    pub devices: u64,
    /// Per-slot activation probability.
    #[arg(long, default_value_t = 0.01)]
    pub pa: f64,
    /// Signature pool size.
    #[arg(long, default_value_t = 64)]
    pub pool: usize,
    #[arg(long, default_value_t = 10_000)]
    pub slots: u64,
    /// Payload bits per packet.
    #[arg(long, default_value_t = 100)]
    pub payload: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// JSON file with `grant_based` and `grant_free` profiles.
    #[arg(long)]
    pub overhead_config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolArgs {
    #[arg(long, default_value_t = 4)]
    pub len: usize,
    #[arg(long, default_value_t = 4)]
    pub size: usize,
    #[arg(long, default_value = "random_qpsk")]
    pub kind: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

/// Flag or configuration mistakes.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Exit code for a failed run.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<UsageError>().is_some() {
        return EXIT_USAGE;
    }
    match err.downcast_ref::<CoreError>() {
        Some(CoreError::Guard(_) | CoreError::Infeasible(_)) => EXIT_GUARD,
        Some(CoreError::NonConvergence(_)) => EXIT_NONCONVERGENCE,
        Some(_) => EXIT_USAGE,
        None => EXIT_USAGE,
    }
}

/// Overlay a JSON object on the flag values. Keys may use `-` or `_`.
fn apply_config<T: Serialize + DeserializeOwned>(args: &T, name: &str, cfg: &Value) -> anyhow::Result<T> {
    let mut base = serde_json::to_value(args)?;
    let obj = cfg.as_object().ok_or_else(|| usage("--config must hold a JSON object"))?;
    let section = match obj.get(name) {
        Some(Value::Object(inner)) => inner,
        _ => obj,
    };
    let target = base.as_object_mut().expect("argument structs serialize to objects");
    for (k, v) in section {
        let key = k.replace('-', "_");
        if !target.contains_key(&key) {
            return Err(usage(format!("unknown key {k:?} in --config for {name}")));
        }
        target.insert(key, v.clone());
    }
    serde_json::from_value(base).map_err(|e| usage(format!("--config: {e}")))
}

/// Rendered result plus an optional self-check failure.
#[derive(Debug)]
pub struct Output {
    pub text: String,
    pub check_failure: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub params: Value,
    pub seed: Option<u64>,
    pub version: String,
    pub threads: usize,
    pub duration_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pool_fingerprint: Option<String>,
}

impl RunManifest {
    fn csv_header(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# subcommand: {}", self.subcommand);
        let _ = writeln!(s, "# params: {}", self.params);
        if let Some(seed) = self.seed {
            let _ = writeln!(s, "# seed: {seed}");
        }
        let _ = writeln!(s, "# version: {}", self.version);
        let _ = writeln!(s, "# threads: {}", self.threads);
        let _ = writeln!(s, "# duration_s: {:.3}", self.duration_s);
        if let Some(fp) = &self.pool_fingerprint {
            let _ = writeln!(s, "# pool_fingerprint: {fp}");
        }
        s
    }
}

/// Nine significant digits, exponent form, locale-free.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.8e}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Parse and run a full command line; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(out) => {
            if let Err(e) = emit(&cli, &out.text) {
                eprintln!("error: {e:#}");
                return EXIT_USAGE;
            }
            match out.check_failure {
                Some(msg) => {
                    eprintln!("self-check failed: {msg}");
                    EXIT_SELF_CHECK
                }
                None => 0,
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

fn emit(cli: &Cli, text: &str) -> anyhow::Result<()> {
    match &cli.out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            use std::io::Write;
            let mut o = std::io::stdout().lock();
            o.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

/// Run a parsed command line and render its output.
pub fn execute(cli: &Cli) -> anyhow::Result<Output> {
    let cfg: Option<Value> = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| usage(format!("reading {}: {e}", p.display())))?;
            Some(serde_json::from_str(&text).map_err(|e| usage(format!("parsing {}: {e}", p.display())))?)
        }
        None => None,
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| anyhow!("thread pool: {e}"))?;
    let threads = pool.current_num_threads();
    let start = Instant::now();
    pool.install(|| {
        let (name, params, seed, body) = match &cli.command {
            Command::Bounds(a) => {
                let a = merged(a, "bounds", &cfg)?;
                let body = cmd_bounds(&a)?;
                ("bounds", serde_json::to_value(&a)?, Some(a.seed), body)
            }
            Command::Outage(a) => {
                let a = merged(a, "outage", &cfg)?;
                let body = cmd_outage(&a)?;
                ("outage", serde_json::to_value(&a)?, Some(a.seed), body)
            }
            Command::Link(a) => {
                let a = merged(a, "link", &cfg)?;
                let body = cmd_link(&a)?;
                ("link", serde_json::to_value(&a)?, Some(a.seed), body)
            }
            Command::System(a) => {
                let a = merged(a, "system", &cfg)?;
                let body = cmd_system(&a)?;
                ("system", serde_json::to_value(&a)?, Some(a.seed), body)
            }
            Command::Profiles => {
                return Ok(Output { text: OverheadConfig::default().to_json_pretty() + "\n", check_failure: None });
            }
            Command::Pool(a) => {
                let a = merged(a, "pool", &cfg)?;
                let kind: PoolKind = a.kind.parse().map_err(|e: CoreError| usage(e.to_string()))?;
                let p = generate_sequence_pool(a.len, a.size, kind, a.seed)?;
                return Ok(Output { text: p.to_json() + "\n", check_failure: None });
            }
        };
        let manifest = RunManifest {
            subcommand: name.into(),
            params,
            seed,
            version: env!("CARGO_PKG_VERSION").into(),
            threads,
            duration_s: start.elapsed().as_secs_f64(),
            pool_fingerprint: body.fingerprint.clone(),
        };
        let text = match body.data {
            Data::Csv(rows) => manifest.csv_header() + &rows,
            Data::Json(mut v) => {
                v.as_object_mut()
                    .expect("reports are objects")
                    .insert("manifest".into(), serde_json::to_value(&manifest)?);
                serde_json::to_string_pretty(&v)? + "\n"
            }
        };
        Ok(Output { text, check_failure: body.check_failure })
    })
}

fn merged<T: Serialize + DeserializeOwned + Clone>(a: &T, name: &str, cfg: &Option<Value>) -> anyhow::Result<T> {
    match cfg {
        Some(c) => apply_config(a, name, c),
        None => Ok(a.clone()),
    }
}

pub enum Data {
    Csv(String),
    Json(Value),
}

pub struct Body {
    pub data: Data,
    pub fingerprint: Option<String>,
    pub check_failure: Option<String>,
}

fn status_flag(p: &LoadPoint, tag: &str, flags: &mut Vec<String>) {
    match p.status {
        PointStatus::Ok => {}
        PointStatus::Infeasible => flags.push(format!("{tag}_infeasible")),
        PointStatus::NotConverged => flags.push(format!("{tag}_not_converged")),
    }
}

pub fn cmd_bounds(a: &BoundsArgs) -> anyhow::Result<Body> {
    let spec = LoadCurveSpec { info_bits: a.k, eps: a.eps, mu_grid: a.mu_grid.0.clone(), finite_n: a.finite_n };
    spec.validate().map_err(|e| usage(e.to_string()))?;
    if a.trials == 0 {
        return Err(usage("--trials must be positive"));
    }
    let mut out = String::from("mu,oma_ebn0_db_asymptotic,oma_ebn0_db_dispersion,noma_ebn0_db,flags\n");
    for &mu in &spec.mu_grid {
        let asym = oma_required_total_ebn0(&spec, mu, RateModel::Asymptotic)?;
        let disp = oma_required_total_ebn0(&spec, mu, RateModel::DispersionCorrected)?;
        let mut flags = Vec::new();
        status_flag(&asym, "oma_asymptotic", &mut flags);
        status_flag(&disp, "oma_dispersion", &mut flags);
        let noma = if spec.users_at(mu) == 0 {
            flags.push("noma_no_users".into());
            None
        } else {
            let seed = derive_seed(a.seed, spec.users_at(mu) as u64);
            let p = noma_required_total_ebn0(&spec, mu, a.trials, seed)?;
            status_flag(&p, "noma", &mut flags);
            p.ebn0_db
        };
        let flags = if flags.is_empty() { "ok".to_string() } else { flags.join(";") };
        let _ = writeln!(
            out,
            "{},{},{},{},{flags}",
            fmt_f64(mu),
            fmt_opt(asym.ebn0_db),
            fmt_opt(disp.ebn0_db),
            fmt_opt(noma)
        );
    }
    Ok(Body { data: Data::Csv(out), fingerprint: None, check_failure: None })
}

pub fn cmd_outage(a: &OutageArgs) -> anyhow::Result<Body> {
    if a.trials == 0 {
        return Err(usage("--trials must be positive"));
    }
    let mut ks = a.k_list.clone();
    if !ks.contains(&1) {
        ks.insert(0, 1);
    }
    let curves = op_curve(&ks, a.rsum, &a.snr_grid.0, a.trials, a.seed)?;
    let mut out = String::from("K,R_sum,snr_dB,p_hat,ci_half_width\n");
    let mut failures = Vec::new();
    for c in &curves {
        for p in &c.points {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                c.users,
                fmt_f64(c.sum_rate),
                fmt_f64(p.x),
                fmt_f64(p.p_hat),
                fmt_f64(p.half_width_95)
            );
            if a.self_check && c.users == 1 {
                let want = analytic_op_single_user(a.rsum, from_db(p.x))?;
                let sigma = (want * (1.0 - want) / p.trials as f64).sqrt();
                if (p.p_hat - want).abs() > 3.0 * sigma {
                    failures.push(format!("K=1 at {} dB: {} vs analytic {}", p.x, p.p_hat, want));
                }
            }
        }
    }
    Ok(Body {
        data: Data::Csv(out),
        fingerprint: None,
        check_failure: (!failures.is_empty()).then(|| failures.join("; ")),
    })
}

fn parse_receivers(a: &LinkArgs) -> anyhow::Result<Vec<Receiver>> {
    let mut out: Vec<Receiver> = Vec::new();
    for name in &a.receiver {
        let r = match name.trim() {
            "mmse" => Receiver::Mmse,
            "sic" => Receiver::Sic { max_rounds: a.sic_rounds },
            "ml" => Receiver::Ml,
            other => return Err(usage(format!("unknown receiver {other:?}; use mmse, sic or ml"))),
        };
        if !out.contains(&r) {
            out.push(r);
        }
    }
    if out.is_empty() {
        return Err(usage("no receiver selected"));
    }
    Ok(out)
}

fn link_pool(a: &LinkArgs) -> anyhow::Result<SequencePool> {
    if let Some(path) = &a.pool_file {
        let text = std::fs::read_to_string(path).map_err(|e| usage(format!("reading {}: {e}", path.display())))?;
        return Ok(SequencePool::from_json(&text)?);
    }
    let kind: PoolKind = a.pool.parse().map_err(|e: CoreError| usage(e.to_string()))?;
    Ok(generate_sequence_pool(a.spread_len, a.pool_size.unwrap_or(a.users), kind, derive_seed(a.seed, 0))?)
}

pub fn cmd_link(a: &LinkArgs) -> anyhow::Result<Body> {
    let receivers = parse_receivers(a)?;
    let assignment = match a.assignment.as_str() {
        "fixed" => SignatureAssignment::Fixed,
        "random" => SignatureAssignment::Random,
        other => return Err(usage(format!("unknown assignment {other:?}; use fixed or random"))),
    };
    let (waveform, chips) = if a.scma {
        let cb = scma_default_codebook(6, 4, 4)?;
        let r = cb.resources;
        (Waveform::Scma { codebook: cb }, r)
    } else {
        let pool = link_pool(a)?;
        let l = pool.length;
        (Waveform::Spreading { pool, assignment }, l)
    };
    let csi = match a.csi.as_str() {
        "perfect" => Csi::Perfect,
        "estimated" => Csi::Estimated {
            pilot_len: a.pilot_len.unwrap_or(chips),
            pilot_kind: a.pilot_kind.parse().map_err(|e: CoreError| usage(e.to_string()))?,
        },
        other => return Err(usage(format!("unknown csi {other:?}; use perfect or estimated"))),
    };
    let interference = if a.interferers > 0 {
        let sigs = generate_sequence_pool(chips, a.interferers, PoolKind::RandomQpsk, derive_seed(a.seed, 2))?;
        Some(InterferenceModel::dominant(&sigs.sequences, a.interference_power, 0.0)?)
    } else {
        None
    };
    let fingerprint = match &waveform {
        Waveform::Spreading { pool, .. } => Some(pool.fingerprint()),
        Waveform::Scma { .. } => None,
    };
    let mut out = String::from("receiver,snr_dB,user,ber,ser,bler\n");
    let mut failures = Vec::new();
    for &snr in &a.snr_grid.0 {
        let sc = LinkScenario {
            users: a.users,
            waveform: waveform.clone(),
            snr_db: snr,
            payload_bits: a.payload,
            csi,
            fading: !a.no_fading,
            noiseless: a.noiseless,
            interference: interference.clone(),
            trials: a.trials,
            seed: a.seed,
        };
        let cmp = link_level_compare(&sc, &receivers)?;
        for r in &cmp.reports {
            for (u, s) in r.users.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{u},{},{},{}",
                    r.receiver,
                    fmt_f64(snr),
                    fmt_f64(s.ber()),
                    fmt_f64(s.ser()),
                    fmt_f64(s.bler())
                );
            }
        }
        if a.self_check {
            let pos = |name: &str| receivers.iter().position(|r| r.name() == name);
            for (better, worse) in [("ml", "sic"), ("sic", "mmse"), ("ml", "mmse")] {
                if let (Some(b), Some(w)) = (pos(better), pos(worse)) {
                    let (diff, sigma) = cmp.symbol_margin(b, w);
                    if diff < -3.0 * sigma {
                        failures.push(format!(
                            "{better} worse than {worse} at {snr} dB: {diff} symbols, sigma {sigma:.1}"
                        ));
                    }
                }
            }
        }
    }
    Ok(Body {
        data: Data::Csv(out),
        fingerprint,
        check_failure: (!failures.is_empty()).then(|| failures.join("; ")),
    })
}

#[derive(Serialize)]
struct OverheadRow {
    payload_bits: u64,
    grant_based_total_bits: u64,
    grant_free_total_bits: u64,
    grant_based_overhead_ratio: f64,
    grant_free_overhead_ratio: f64,
}

pub fn cmd_system(a: &SystemArgs) -> anyhow::Result<Body> {
    let traffic = TrafficModel::new(a.devices, a.pa, a.payload).map_err(|e| usage(e.to_string()))?;
    if a.pool == 0 {
        return Err(usage("--pool must be at least 1"));
    }
    let profiles = match &a.overhead_config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| usage(format!("reading {}: {e}", p.display())))?;
            OverheadConfig::from_json(&text).map_err(|e| usage(e.to_string()))?
        }
        None => OverheadConfig::default(),
    };
    let reports = run_aloha_frame(&traffic, a.pool, a.slots, a.seed)?;
    let summary = summarize(&traffic, a.pool, &reports)?;
    let cmp = overhead_compare(&profiles.grant_based, &profiles.grant_free, a.payload)?;
    let sweep = (1..=8)
        .map(|i| {
            let c = overhead_compare(&profiles.grant_based, &profiles.grant_free, 40 * i)?;
            Ok(OverheadRow {
                payload_bits: 40 * i,
                grant_based_total_bits: c.grant_based.total_bits,
                grant_free_total_bits: c.grant_free.total_bits,
                grant_based_overhead_ratio: c.grant_based.overhead_ratio,
                grant_free_overhead_ratio: c.grant_free.overhead_ratio,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let report = json!({
        "report": {
            "aloha": summary,
            "collision_deviation_sigmas": summary.deviation_sigmas(),
            "overhead": cmp,
            "overhead_sweep": sweep,
            "profiles": profiles,
        }
    });
    Ok(Body { data: Data::Json(report), fingerprint: None, check_failure: None })
}

/// Lines of a CSV output that carry data (everything but the manifest).
pub fn data_rows(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_parse() {
        assert_eq!("1,2.5,3".parse::<Grid>().unwrap().0, vec![1.0, 2.5, 3.0]);
        let g = "0.02:0.02:0.2".parse::<Grid>().unwrap().0;
        assert_eq!(g.len(), 10);
        assert!((g[9] - 0.2).abs() < 1e-15);
        assert_eq!("5".parse::<Grid>().unwrap().0, vec![5.0]);
        assert!("1:0:3".parse::<Grid>().is_err());
        assert!("a,b".parse::<Grid>().is_err());
        assert!("3:1:1".parse::<Grid>().is_err());
    }

    #[test]
    fn floats_have_nine_significant_digits() {
        assert_eq!(fmt_f64(0.0123456789123), "1.23456789e-2");
        assert_eq!(fmt_f64(100.0), "1.00000000e2");
        assert_eq!(fmt_f64(f64::NAN), "nan");
    }

    #[test]
    fn config_overrides_flags() {
        let cli = Cli::try_parse_from(["nomasim", "bounds", "--k", "50"]).unwrap();
        let Command::Bounds(a) = &cli.command else { panic!() };
        let cfg = json!({"k": 80.0, "mu-grid": [0.1]});
        let m = apply_config(a, "bounds", &cfg).unwrap();
        assert_eq!(m.k, 80.0);
        assert_eq!(m.mu_grid.0, vec![0.1]);
        let nested = json!({"bounds": {"eps": 0.1}});
        assert_eq!(apply_config(a, "bounds", &nested).unwrap().eps, 0.1);
        let bad = json!({"nope": 1});
        assert_eq!(exit_code(&apply_config(a, "bounds", &bad).unwrap_err()), EXIT_USAGE);
    }

    #[test]
    fn core_errors_map_to_exit_codes() {
        let g: anyhow::Error = CoreError::Guard("x".into()).into();
        let n: anyhow::Error = CoreError::NonConvergence("x".into()).into();
        let d: anyhow::Error = CoreError::Domain("x".into()).into();
        assert_eq!(exit_code(&g), EXIT_GUARD);
        assert_eq!(exit_code(&n), EXIT_NONCONVERGENCE);
        assert_eq!(exit_code(&d), EXIT_USAGE);
    }
}
