//! Command-line front end: configuration, dispatch and output writing.
//!
//! A run is described by a [`RunConfig`] (JSON or TOML); command-line flags
//! override the file. Outputs are written atomically and depend only on the
//! configuration and the seed.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::coag_measures::{CoagulationMeasure, LambdaMeasure};
use crate::diagnostics::{self, CheckReport, Regime, Verdict, CHECK_NAMES};
use crate::engine::{estimate_cn, estimate_transition, Horizon, Simulation, SimulationSpec, TransitionMethod};
use crate::error::{ensure, Error, Result};
use crate::partitions::{enumerate_partitions, MassPartition};
use crate::pd_analysis::{change_of_param_check, exp_gamma_s_n, pd_conditioned_moments, s_infty_check, u_n};
use crate::population_models::{BottleneckSpec, EtaHat, FSpec, ModelSpec, NuBar, OffspringVector, WeightVector};
use crate::special_fn::{ell_const, em_const, exp_gamma_s_infty, k_const, PdParams};
use crate::stats::EstimateWithError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_FAIL: i32 = 2;
pub const EXIT_INDETERMINATE: i32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    EldonWakeley,
    Bottleneck,
    PdPower,
    Exponential,
    ExplicitWeights,
    ExplicitOffspring,
}

/// F as a finite list of `[k, F(k)]` pairs or a power law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FBlock {
    Finite(Vec<(usize, f64)>),
    Power(PowerLaw),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerLaw {
    pub scale: f64,
    pub exponent: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum NuBarBlock {
    Uniform,
    Dirichlet(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum EtaHatBlock {
    WrightFisher,
    Explicit(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Λ base of the Eldon–Wakeley model, in the measure mini-language.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<String>,
    #[serde(rename = "F", default, skip_serializing_if = "Option::is_none")]
    pub f: Option<FBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_exp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_exp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu_bar: Option<NuBarBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_hat: Option<EtaHatBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offspring: Option<Vec<u64>>,
    /// Number of retained atoms M for the direct exponential-model sampler.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<String>,
    /// Limiting mass partition for `check discrete-limit`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub n_pop: Option<usize>,
    #[serde(rename = "N_list", default, skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicates: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Horizon in coalescent time units.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    /// Horizon in generations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generations: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thin: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_exponent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shapes: Option<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<Regime>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<TransitionMethod>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelBlock>,
    #[serde(default, skip_serializing_if = "is_default")]
    pub limit: LimitBlock,
    #[serde(default, skip_serializing_if = "is_default")]
    pub run: RunBlock,
    #[serde(default, skip_serializing_if = "is_default")]
    pub output: OutputBlock,
}

fn is_default<T: Default + PartialEq>(x: &T) -> bool {
    *x == T::default()
}

/// Parses a JSON or TOML config (JSON if the text starts with `{`) and runs the
/// range checks of the model and limit blocks.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = if text.trim_start().starts_with('{') {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("JSON config: {}", e)))?
    } else {
        toml::from_str(text).map_err(|e| Error::Config(format!("TOML config: {}", e)))?
    };
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(c) = &self.command {
            let known = ["rates", "constants", "simulate", "estimate-cn", "transition", "pd", "check", "plotdata"];
            ensure!(known.contains(&c.as_str()), Config, "unknown command {:?}", c);
        }
        if let Some(m) = &self.model {
            let spec = m.to_spec(self.run.n_pop)?;
            if let ModelSpec::PdPower(p) = spec {
                p.check_theorem_range().map_err(|e| Error::Config(format!("model: {}", e)))?;
            }
        }
        self.limit_measure()?;
        self.limit_rho()?;
        let r = &self.run;
        ensure!(r.replicates != Some(0), Config, "run.replicates must be >= 1");
        ensure!(r.n != Some(0), Config, "run.n must be >= 1");
        ensure!(r.n_pop != Some(0), Config, "run.N must be >= 1");
        if let Some(l) = &r.n_list {
            ensure!(!l.is_empty() && l.iter().all(|&x| x > 0), Config, "run.N_list must be non-empty and positive");
        }
        if let Some(t) = r.t_max {
            ensure!(t >= 0.0 && t.is_finite(), Config, "run.t_max must be non-negative, got {}", t);
        }
        ensure!(
            r.t_max.is_none() || r.generations.is_none(),
            Config,
            "give at most one of run.t_max and run.generations"
        );
        Ok(())
    }

    /// Pretty-printed JSON with keys in declaration order and unset keys omitted.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    fn limit_measure(&self) -> Result<Option<CoagulationMeasure>> {
        self.limit.measure.as_deref().map(str::parse).transpose()
    }

    fn limit_rho(&self) -> Result<Option<MassPartition>> {
        self.limit.rho.clone().map(MassPartition::from_unsorted).transpose()
    }

    fn model_spec(&self) -> Result<ModelSpec> {
        let m = self.model.as_ref().ok_or_else(|| Error::Config("missing model block".into()))?;
        m.to_spec(self.run.n_pop)
    }

    fn seed(&self) -> Result<u64> {
        self.run.seed.ok_or_else(|| Error::Config("run.seed is required for stochastic commands (or pass --seed)".into()))
    }

    fn replicates(&self) -> Result<usize> {
        self.run.replicates.ok_or_else(|| Error::Config("run.replicates is required".into()))
    }

    /// run.N, falling back to the length of an explicit model vector.
    fn n_pop(&self) -> Result<usize> {
        if let Some(n) = self.run.n_pop {
            return Ok(n);
        }
        let from_model = self.model.as_ref().and_then(|m| {
            m.weights.as_ref().map(|w| w.len()).or(m.offspring.as_ref().map(|o| o.len()))
        });
        from_model.ok_or_else(|| Error::Config("run.N is required".into()))
    }

    fn n_list(&self) -> Result<Vec<usize>> {
        match (&self.run.n_list, self.run.n_pop) {
            (Some(l), _) => Ok(l.clone()),
            (None, Some(n)) => Ok(vec![n]),
            (None, None) => self.n_pop().map(|n| vec![n]),
        }
    }

    fn n(&self) -> Result<usize> {
        self.run.n.ok_or_else(|| Error::Config("run.n is required".into()))
    }
}

impl ModelBlock {
    /// Builds and validates the model. Keys that do not belong to `kind` are
    /// rejected.
    pub fn to_spec(&self, n_pop: Option<usize>) -> Result<ModelSpec> {
        let allowed: &[&str] = match self.kind {
            ModelKind::EldonWakeley => &["base", "epsilon"],
            ModelKind::Bottleneck => &["F", "a_exp", "b_exp", "nu_bar", "eta_hat"],
            ModelKind::PdPower => &["alpha", "theta", "gamma"],
            ModelKind::Exponential => &["beta", "kappa", "truncation"],
            ModelKind::ExplicitWeights => &["weights"],
            ModelKind::ExplicitOffspring => &["offspring"],
        };
        let present = [
            ("alpha", self.alpha.is_some()),
            ("theta", self.theta.is_some()),
            ("gamma", self.gamma.is_some()),
            ("beta", self.beta.is_some()),
            ("kappa", self.kappa.is_some()),
            ("epsilon", self.epsilon.is_some()),
            ("base", self.base.is_some()),
            ("F", self.f.is_some()),
            ("a_exp", self.a_exp.is_some()),
            ("b_exp", self.b_exp.is_some()),
            ("nu_bar", self.nu_bar.is_some()),
            ("eta_hat", self.eta_hat.is_some()),
            ("weights", self.weights.is_some()),
            ("offspring", self.offspring.is_some()),
            ("truncation", self.truncation.is_some()),
        ];
        for (k, set) in present {
            ensure!(!set || allowed.contains(&k), Config, "model.{} does not apply to model.kind = {:?}", k, self.kind);
        }
        let need = |v: Option<f64>, k: &str| v.ok_or_else(|| Error::Config(format!("model.{} is required", k)));
        let wrap = |e: Error| Error::Config(format!("model: {}", e));
        let spec = match self.kind {
            ModelKind::EldonWakeley => {
                let base = match self.base.as_deref().unwrap_or("kingman").parse::<CoagulationMeasure>()? {
                    CoagulationMeasure::Lambda(l) => l,
                    CoagulationMeasure::Xi(_) => return Err(Error::Config("model.base must be a Lambda measure".into())),
                };
                ModelSpec::EldonWakeley { base, epsilon: need(self.epsilon, "epsilon")? }
            }
            ModelKind::Bottleneck => {
                let f = match self.f.as_ref().ok_or_else(|| Error::Config("model.F is required".into()))? {
                    FBlock::Finite(v) => FSpec::Finite(v.clone()),
                    FBlock::Power(p) => FSpec::PowerLaw { scale: p.scale, exponent: p.exponent },
                };
                let nu_bar = match self.nu_bar.as_ref().unwrap_or(&NuBarBlock::Uniform) {
                    NuBarBlock::Uniform => NuBar::Uniform,
                    NuBarBlock::Dirichlet(s) => NuBar::Dirichlet { shape: *s },
                };
                let eta_hat = match self.eta_hat.as_ref().unwrap_or(&EtaHatBlock::WrightFisher) {
                    EtaHatBlock::WrightFisher => EtaHat::WrightFisher,
                    EtaHatBlock::Explicit(v) => EtaHat::Explicit(v.clone()),
                };
                ModelSpec::Bottleneck(BottleneckSpec {
                    f,
                    a_exp: need(self.a_exp, "a_exp")?,
                    b_exp: need(self.b_exp, "b_exp")?,
                    nu_bar,
                    eta_hat,
                })
            }
            ModelKind::PdPower => ModelSpec::PdPower(
                PdParams::new(need(self.alpha, "alpha")?, need(self.theta, "theta")?, need(self.gamma, "gamma")?).map_err(wrap)?,
            ),
            ModelKind::Exponential => ModelSpec::Exponential {
                beta: need(self.beta, "beta")?,
                kappa: need(self.kappa, "kappa")?,
                truncation: self.truncation,
            },
            ModelKind::ExplicitWeights => {
                let w = self.weights.clone().ok_or_else(|| Error::Config("model.weights is required".into()))?;
                ModelSpec::ExplicitWeights(WeightVector::new(w).map_err(wrap)?)
            }
            ModelKind::ExplicitOffspring => {
                let o = self.offspring.clone().ok_or_else(|| Error::Config("model.offspring is required".into()))?;
                ModelSpec::ExplicitOffspring(OffspringVector::new(o).map_err(wrap)?)
            }
        };
        spec.validate().map_err(wrap)?;
        if let (Some(n), Some(len)) = (n_pop, self.weights.as_ref().map(Vec::len).or(self.offspring.as_ref().map(Vec::len))) {
            ensure!(n == len, Config, "run.N = {} but the explicit model vector has length {}", n, len);
        }
        Ok(spec)
    }
}

#[derive(Parser, Debug)]
#[command(name = "coalgene", version, about = "Genealogies of asymmetric Cannings and Wright-Fisher models")]
pub struct Cli {
    /// JSON or TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides run.seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: available cores); results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output file (default: stdout).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Coalescent rates of a measure as CSV.
    Rates {
        #[arg(long)]
        measure: Option<String>,
        #[arg(long)]
        n: Option<usize>,
    },
    /// The four PD constants as JSON.
    Constants {
        #[arg(long, allow_hyphen_values = true)]
        alpha: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        theta: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        gamma: Option<f64>,
    },
    /// Genealogy trajectories as CSV.
    Simulate,
    /// c_N estimates as CSV.
    EstimateCn,
    /// One-step transition probabilities out of the singleton partition as CSV.
    Transition,
    /// Stick-breaking checks for PD power weights as CSV.
    Pd {
        #[arg(long, allow_hyphen_values = true)]
        alpha: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        theta: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        gamma: Option<f64>,
        #[arg(long = "N")]
        n_pop: Option<usize>,
        #[arg(long)]
        reps: Option<usize>,
    },
    /// Runs a convergence check and writes its report as JSON.
    Check {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(CHECK_NAMES))]
        name: String,
    },
    /// Runs a check and writes its per-N rows as CSV.
    Plotdata {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(CHECK_NAMES))]
        name: String,
    },
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().filter_or("COALGENE_LOG", "warn")).try_init();
    match run_cli(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e);
            EXIT_ERROR
        }
    }
}

fn read_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
    parse_config(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {}", path.display(), m)),
        other => other,
    })
}

pub fn run_cli(cli: Cli) -> Result<i32> {
    let mut cfg = match &cli.config {
        Some(p) => read_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.run.seed = Some(s);
    }
    if let Some(o) = &cli.out {
        cfg.output.path = Some(o.clone());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {}", e)))?;
    pool.install(|| run(&cli.command, &cfg))
}

/// Executes one command against a validated config and writes its output.
pub fn run(command: &Command, cfg: &RunConfig) -> Result<i32> {
    let (text, code) = match command {
        Command::Rates { measure, n } => (cmd_rates(cfg, measure.as_deref(), *n)?, EXIT_OK),
        Command::Constants { alpha, theta, gamma } => (cmd_constants(cfg, *alpha, *theta, *gamma)?, EXIT_OK),
        Command::Simulate => (cmd_simulate(cfg)?, EXIT_OK),
        Command::EstimateCn => (cmd_estimate_cn(cfg)?, EXIT_OK),
        Command::Transition => (cmd_transition(cfg)?, EXIT_OK),
        Command::Pd { alpha, theta, gamma, n_pop, reps } => (cmd_pd(cfg, *alpha, *theta, *gamma, *n_pop, *reps)?, EXIT_OK),
        Command::Check { name } => {
            let report = run_check(name, cfg)?;
            let mut s = serde_json::to_string_pretty(&report).expect("report serialises");
            s.push('\n');
            (s, verdict_code(report.verdict))
        }
        Command::Plotdata { name } => {
            let report = run_check(name, cfg)?;
            (plotdata_csv(&report), verdict_code(report.verdict))
        }
    };
    emit(cfg.output.path.as_deref(), &text)?;
    Ok(code)
}

pub fn verdict_code(v: Verdict) -> i32 {
    match v {
        Verdict::Pass => EXIT_OK,
        Verdict::Fail => EXIT_FAIL,
        Verdict::Indeterminate => EXIT_INDETERMINATE,
    }
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|source| Error::Io { path: "<stdout>".into(), source })
        }
    }
}

/// Writes to a temporary file in the destination directory, then renames it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |source| Error::Io { path: path.display().to_string(), source };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path.file_name().ok_or_else(|| Error::Config(format!("output path {} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let write = || -> std::io::Result<()> {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        io(e)
    })
}

/// 17 significant digits.
pub fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{:.16e}", x)
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

/// CSV text with a header row; fields containing commas (partitions) are quoted.
struct Csv(csv::Writer<Vec<u8>>);

impl Csv {
    fn new(header: &[&str]) -> Self {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(header).expect("in-memory write");
        Csv(w)
    }

    fn row<I, T>(&mut self, fields: I)
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[u8]>,
    {
        self.0.write_record(fields).expect("in-memory write");
    }

    fn finish(self) -> String {
        String::from_utf8(self.0.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }
}

fn cmd_rates(cfg: &RunConfig, measure: Option<&str>, n: Option<usize>) -> Result<String> {
    let measure: CoagulationMeasure = match measure {
        Some(m) => m.parse()?,
        None => cfg.limit_measure()?.ok_or_else(|| Error::Config("rates needs --measure or limit.measure".into()))?,
    };
    let n = n.or(cfg.run.n).ok_or_else(|| Error::Config("rates needs --n or run.n".into()))?;
    ensure!(n >= 2, Config, "rates need n >= 2, got {}", n);
    match &measure {
        CoagulationMeasure::Lambda(l) => {
            let mut csv = Csv::new(&["n_blocks", "b", "rate"]);
            for nb in 2..=n {
                for b in 2..=nb {
                    csv.row([nb.to_string(), b.to_string(), fmt_num(l.rate(nb, b)?)]);
                }
            }
            Ok(csv.finish())
        }
        CoagulationMeasure::Xi(_) => {
            let mut csv = Csv::new(&["pi_prime", "rate"]);
            for p in enumerate_partitions(n)? {
                if !p.is_singletons() {
                    csv.row([p.to_string(), fmt_num(measure.increment_rate(&p)?)]);
                }
            }
            Ok(csv.finish())
        }
    }
}

fn pd_from(cfg: &RunConfig, alpha: Option<f64>, theta: Option<f64>, gamma: Option<f64>) -> Result<PdParams> {
    let m = cfg.model.as_ref();
    let pick = |flag: Option<f64>, key: fn(&ModelBlock) -> Option<f64>, name: &str| {
        flag.or_else(|| m.and_then(key)).ok_or_else(|| Error::Config(format!("--{} (or model.{}) is required", name, name)))
    };
    let p = PdParams::new(pick(alpha, |b| b.alpha, "alpha")?, pick(theta, |b| b.theta, "theta")?, pick(gamma, |b| b.gamma, "gamma")?)?;
    p.check_theorem_range()?;
    Ok(p)
}

fn cmd_constants(cfg: &RunConfig, alpha: Option<f64>, theta: Option<f64>, gamma: Option<f64>) -> Result<String> {
    let p = pd_from(cfg, alpha, theta, gamma)?;
    let ell = if p.theta < p.alpha { Some(ell_const(&p)?) } else { None };
    let v = json!({
        "alpha": p.alpha,
        "theta": p.theta,
        "gamma": p.gamma,
        "kappa_theta_over_alpha": em_const(p.theta / p.alpha)?,
        "K": k_const(&p)?,
        "ell": ell,
        "E_exp_gamma_S_infty": exp_gamma_s_infty(&p)?,
    });
    Ok(serde_json::to_string_pretty(&v).expect("json") + "\n")
}

fn cmd_simulate(cfg: &RunConfig) -> Result<String> {
    let seed = cfg.seed()?;
    let horizon = match (cfg.run.t_max, cfg.run.generations) {
        (Some(t), None) => Horizon::Rescaled(t),
        (None, Some(g)) => Horizon::Generations(g),
        _ => return Err(Error::Config("simulate needs run.t_max or run.generations".into())),
    };
    let spec = SimulationSpec {
        model: cfg.model_spec()?,
        n_pop: cfg.n_pop()?,
        n: cfg.n()?,
        horizon,
        replicates: cfg.replicates()?,
        seed,
        thin: cfg.run.thin.unwrap_or(false),
    };
    warn_bottleneck(&spec.model, &[spec.n_pop]);
    let trajectories = Simulation::new(&spec)?.run_all()?;
    let mut csv = Csv::new(&["replicate", "generation", "n_blocks", "partition"]);
    for (r, t) in trajectories.iter().enumerate() {
        for (g, p) in &t.steps {
            csv.row([r.to_string(), g.to_string(), p.num_blocks().to_string(), p.to_string()]);
        }
    }
    Ok(csv.finish())
}

fn estimate_row(csv: &mut Csv, quantity: &str, e: &EstimateWithError, seed: u64) {
    csv.row([quantity.to_string(), fmt_num(e.value), fmt_num(e.stderr), e.reps.to_string(), seed.to_string()]);
}

const ESTIMATE_HEADER: [&str; 5] = ["quantity", "value", "stderr", "reps", "seed"];

fn cmd_estimate_cn(cfg: &RunConfig) -> Result<String> {
    let seed = cfg.seed()?;
    let model = cfg.model_spec()?;
    let reps = cfg.replicates()?;
    let mut s = Csv::new(&ESTIMATE_HEADER);
    for n_pop in cfg.n_list()? {
        warn_bottleneck(&model, &[n_pop]);
        let e = estimate_cn(&model, n_pop, reps, crate::rng::derive_seed(seed, n_pop as u64))?;
        estimate_row(&mut s, &format!("c_N formula N={}", n_pop), &e.formula, seed);
        estimate_row(&mut s, &format!("c_N empirical N={}", n_pop), &e.empirical, seed);
        if let Some(t) = e.tilde {
            estimate_row(&mut s, &format!("c~_N N={}", n_pop), &t, seed);
        }
    }
    Ok(s.finish())
}

fn cmd_transition(cfg: &RunConfig) -> Result<String> {
    let seed = cfg.seed()?;
    let model = cfg.model_spec()?;
    let n_pop = cfg.n_pop()?;
    warn_bottleneck(&model, &[n_pop]);
    let method = cfg.run.method.unwrap_or(TransitionMethod::Conditioned);
    let est = estimate_transition(&model, n_pop, cfg.n()?, cfg.replicates()?, seed, method)?;
    let mut s = Csv::new(&ESTIMATE_HEADER);
    for (p, e) in &est {
        estimate_row(&mut s, &format!("P({})", p), e, seed);
    }
    Ok(s.finish())
}

fn cmd_pd(cfg: &RunConfig, alpha: Option<f64>, theta: Option<f64>, gamma: Option<f64>, n_pop: Option<usize>, reps: Option<usize>) -> Result<String> {
    let p = pd_from(cfg, alpha, theta, gamma)?;
    let n_pop = n_pop.or(cfg.run.n_pop).ok_or_else(|| Error::Config("pd needs --N or run.N".into()))?;
    let reps = reps.or(cfg.run.replicates).ok_or_else(|| Error::Config("pd needs --reps or run.replicates".into()))?;
    let seed = cfg.seed()?;
    ensure!(n_pop >= 2 && reps >= 2, Config, "pd needs N >= 2 and reps >= 2");
    let mut csv = Csv::new(&["quantity", "estimate", "stderr", "target", "zscore"]);
    let mut row = |q: &str, e: &EstimateWithError, target: f64| {
        csv.row([q.to_string(), fmt_num(e.value), fmt_num(e.stderr), fmt_num(target), fmt_num(e.zscore(target))]);
    };
    let es = s_infty_check(&p, n_pop, reps, crate::rng::derive_seed(seed, 1))?;
    row("E[exp(gamma S_N)]", &es, exp_gamma_s_n(&p, n_pop));
    row("E[exp(gamma S_N)] vs N=inf", &es, exp_gamma_s_infty(&p)?);
    let cp = change_of_param_check(&p, n_pop, reps, crate::rng::derive_seed(seed, 2))?;
    for r in cp.rows.iter().filter(|r| r.target.is_some()) {
        let e = EstimateWithError { value: r.estimate.unwrap_or(f64::NAN), stderr: r.stderr.unwrap_or(f64::NAN), reps };
        row(&r.quantity, &e, r.target.unwrap_or(f64::NAN));
    }
    if p.theta < p.alpha {
        let m = pd_conditioned_moments(&p, n_pop, &[2.0], reps, crate::rng::derive_seed(seed, 3))?;
        let f = u_n(&p, n_pop).powf(1.0 + p.theta / p.alpha);
        let c = EstimateWithError { value: m.c_n.value * f, stderr: m.c_n.stderr * f, reps };
        row("c_N*u_N^(1+theta/alpha)", &c, (1.0 - p.theta / p.alpha) / ell_const(&p)?);
    }
    Ok(csv.finish())
}

fn plotdata_csv(report: &CheckReport) -> String {
    let mut csv = Csv::new(&["N", "quantity", "estimate", "stderr", "target"]);
    for r in report.rows.iter() {
        if let Some(n) = r.n {
            csv.row([n.to_string(), r.quantity.clone(), fmt_opt(r.estimate), fmt_opt(r.stderr), fmt_opt(r.target)]);
        }
    }
    csv.finish()
}

fn warn_bottleneck(model: &ModelSpec, n_list: &[usize]) {
    if let ModelSpec::Bottleneck(b) = model {
        for &n in n_list {
            let (r1, r2) = b.condition_ratios(n);
            if r1 > 0.1 || r2 > 0.1 {
                log::warn!("bottleneck at N={}: sum F(k)/a_N = {:.3}, b_N/N = {:.3}; the o(.) conditions are not met", n, r1, r2);
            }
        }
    }
}

fn lambda_limit(cfg: &RunConfig) -> Result<LambdaMeasure> {
    match cfg.limit_measure()? {
        Some(CoagulationMeasure::Lambda(l)) => Ok(l),
        Some(CoagulationMeasure::Xi(_)) => Err(Error::Config("this check needs a Lambda limit measure".into())),
        None => Err(Error::Config("limit.measure is required".into())),
    }
}

/// Dispatches `check <name>`; model and limit blocks are echoed into the
/// report parameters.
pub fn run_check(name: &str, cfg: &RunConfig) -> Result<CheckReport> {
    let seed = cfg.seed()?;
    let r = &cfg.run;
    let tol = |d: f64| r.tol.unwrap_or(d);
    let mut report = match name {
        "semigroup" => {
            let limit = cfg.limit_measure()?.ok_or_else(|| Error::Config("limit.measure is required".into()))?;
            let times = r.times.clone().unwrap_or_else(|| vec![1.0]);
            diagnostics::check_semigroup(&cfg.model_spec()?, &limit, cfg.n_pop()?, cfg.n()?, &times, tol(0.02), cfg.replicates()?, seed)?
        }
        "lambda-criterion" => diagnostics::check_lambda_criterion(
            &cfg.model_spec()?,
            &lambda_limit(cfg)?,
            &cfg.n_list()?,
            r.b_max.unwrap_or(4),
            tol(0.1),
            cfg.replicates()?,
            seed,
        )?,
        "kingman-criterion" => diagnostics::check_kingman_criterion(
            &cfg.model_spec()?,
            &cfg.n_list()?,
            r.beta_exponent.unwrap_or(3.0),
            cfg.replicates()?,
            seed,
        )?,
        "xi-functionals" => {
            let shapes = r.shapes.clone().unwrap_or_else(|| vec![vec![2], vec![3], vec![2, 2]]);
            let limit = cfg.limit_measure()?;
            diagnostics::check_xi_functionals(&cfg.model_spec()?, &cfg.n_list()?, &shapes, limit.as_ref(), tol(0.1), cfg.replicates()?, seed)?
        }
        "replacement" => {
            diagnostics::check_replacement_equivalence(&cfg.model_spec()?, &cfg.n_list()?, r.n.unwrap_or(2), cfg.replicates()?, seed)?
        }
        "bottleneck" => {
            let ModelSpec::Bottleneck(spec) = cfg.model_spec()? else {
                return Err(Error::Config("check bottleneck needs model.kind = \"bottleneck\"".into()));
            };
            let regime = r.regime.ok_or_else(|| Error::Config("run.regime is required (i, ii or iii)".into()))?;
            let base = cfg.limit_measure()?.unwrap_or(CoagulationMeasure::Lambda(LambdaMeasure::Kingman));
            let n_list = cfg.n_list()?;
            warn_bottleneck(&ModelSpec::Bottleneck(spec.clone()), &n_list);
            diagnostics::check_bottleneck_regimes(&spec, regime, &base, &n_list, r.n.unwrap_or(2), tol(0.1), cfg.replicates()?, seed)?
        }
        "pd-theorem" => {
            let ModelSpec::PdPower(p) = cfg.model_spec()? else {
                return Err(Error::Config("check pd-theorem needs model.kind = \"pd_power\"".into()));
            };
            diagnostics::check_pd_theorem(&p, &cfg.n_list()?, tol(0.1), cfg.replicates()?, seed)?
        }
        "em-theorem" => {
            let ModelSpec::Exponential { beta, kappa, .. } = cfg.model_spec()? else {
                return Err(Error::Config("check em-theorem needs model.kind = \"exponential\"".into()));
            };
            diagnostics::check_em_theorem(beta, kappa, &cfg.n_list()?, tol(0.15), cfg.replicates()?, seed)?
        }
        "em-equivalence" => {
            let ModelSpec::Exponential { beta, kappa, truncation } = cfg.model_spec()? else {
                return Err(Error::Config("check em-equivalence needs model.kind = \"exponential\"".into()));
            };
            let m = truncation.unwrap_or(10_000);
            let report = diagnostics::check_em_equivalence(beta, kappa, cfg.n_pop()?, m, cfg.replicates()?, seed)?;
            for n in report.notes.iter().filter(|n| n.starts_with("warning")) {
                log::warn!("{}", n);
            }
            report
        }
        "discrete-limit" => {
            let rho = cfg.limit_rho()?.ok_or_else(|| Error::Config("limit.rho is required".into()))?;
            diagnostics::check_discrete_limit(&cfg.model_spec()?, &rho, cfg.n_pop()?, cfg.n()?, tol(1e-9), cfg.replicates()?, seed)?
        }
        other => return Err(Error::Config(format!("unknown check {:?}; expected one of {:?}", other, CHECK_NAMES))),
    };
    if let serde_json::Value::Object(m) = &mut report.params {
        if let Some(model) = &cfg.model {
            m.insert("model".into(), serde_json::to_value(model).expect("model serialises"));
        }
        if !is_default(&cfg.limit) {
            m.insert("limit".into(), serde_json::to_value(&cfg.limit).expect("limit serialises"));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    const KINGMAN_DEMO: &str = r#"{
        "model": {"kind": "explicit_weights", "weights": [0.25, 0.25, 0.25, 0.25]},
        "limit": {"measure": "kingman"},
        "run": {"n": 3, "replicates": 10, "seed": 1, "times": [0.0, 0.5]}
    }"#;

    #[test]
    fn kingman_demo_round_trips() {
        let cfg = parse_config(KINGMAN_DEMO).unwrap();
        let canon = cfg.canonical_json();
        let again = parse_config(&canon).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.canonical_json(), canon);
    }

    #[test]
    fn toml_and_json_agree() {
        let toml_text = r#"
[model]
kind = "explicit_weights"
weights = [0.25, 0.25, 0.25, 0.25]

[limit]
measure = "kingman"

[run]
n = 3
replicates = 10
seed = 1
times = [0.0, 0.5]
"#;
        assert_eq!(parse_config(toml_text).unwrap(), parse_config(KINGMAN_DEMO).unwrap());
    }

    #[test]
    fn gamma_outside_theorem_range_is_rejected() {
        let e = parse_config(r#"{"model": {"kind": "pd_power", "alpha": 0.5, "theta": 0.0, "gamma": 0.2}}"#)
            .unwrap_err()
            .to_string();
        assert!(e.contains("alpha/2 < gamma <= alpha"), "{}", e);
    }

    #[test]
    fn unknown_and_foreign_keys_are_rejected() {
        assert!(parse_config(r#"{"run": {"seeed": 1}}"#).is_err());
        assert!(parse_config(r#"{"model": {"kind": "pd_power", "alpha": 0.5, "theta": 0.0, "gamma": 0.4, "beta": 2}}"#).is_err());
        assert!(parse_config(r#"{"model": {"kind": "exponential", "beta": 1.0, "kappa": 1.0}}"#).is_err());
        assert!(parse_config(r#"{"model": {"kind": "eldon_wakeley", "base": "beta:2,2", "epsilon": 1.5}}"#).is_err());
    }

    #[test]
    fn stochastic_commands_need_a_seed() {
        let mut cfg = parse_config(KINGMAN_DEMO).unwrap();
        cfg.run.seed = None;
        cfg.run.generations = Some(5);
        cfg.output.path = Some(PathBuf::from("/nonexistent/never-written.csv"));
        let e = run(&Command::Simulate, &cfg).unwrap_err().to_string();
        assert!(e.contains("seed"), "{}", e);
    }

    #[test]
    fn number_format_has_17_digits() {
        assert_eq!(fmt_num(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_num(0.1).parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn bottleneck_block_parses() {
        let cfg = parse_config(
            r#"{"model": {"kind": "bottleneck", "F": [[2, 1.0]], "a_exp": 0.5, "b_exp": 0.5, "nu_bar": "uniform", "eta_hat": "wright_fisher"}}"#,
        )
        .unwrap();
        assert!(matches!(cfg.model_spec().unwrap(), ModelSpec::Bottleneck(_)));
        let cfg = parse_config(
            r#"{"model": {"kind": "bottleneck", "F": {"scale": 1.0, "exponent": 2.5}, "a_exp": 0.5, "b_exp": 0.5, "nu_bar": {"dirichlet": 0.5}}}"#,
        )
        .unwrap();
        assert!(matches!(cfg.model_spec().unwrap(), ModelSpec::Bottleneck(_)));
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.csv");
        write_atomic(&p, b"a\n").unwrap();
        write_atomic(&p, b"b\n").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "b\n");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
