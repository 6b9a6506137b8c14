//! Experiment harness: declarative JSON configs, named experiments, gated results and
//! plot-ready CSV series.

pub mod battery;
pub mod experiments;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::markov::QuantumChannel;
use crate::pauli_ham::{HamiltonianFile, HamiltonianSpec, PresetFile};
use crate::spectral::FilterParams;

pub const CODE_HASH: &str = env!("METASTAB_CODE_HASH");

pub const EXIT_OK: i32 = 0;
pub const EXIT_GATE: i32 = 1;
pub const EXIT_SCHEMA: i32 = 2;
pub const EXIT_RESOURCE: i32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    DbCertify,
    EpFi,
    Adb,
    TimeAverage,
    GibbsRecovery,
    MetaRecovery,
    StrongMarkov,
    AreaLaw,
    ClassicalHardDisks,
    ClassicalEpFi,
    IdentitySuite,
}

impl Experiment {
    pub const ALL: [Experiment; 11] = [
        Experiment::DbCertify,
        Experiment::EpFi,
        Experiment::Adb,
        Experiment::TimeAverage,
        Experiment::GibbsRecovery,
        Experiment::MetaRecovery,
        Experiment::StrongMarkov,
        Experiment::AreaLaw,
        Experiment::ClassicalHardDisks,
        Experiment::ClassicalEpFi,
        Experiment::IdentitySuite,
    ];

    pub fn name(self) -> String {
        serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
    }
}

/// Noise applied inside the recovery region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseConfig {
    Identity,
    Erasure,
    Depolarizing { p: f64 },
    Measurement,
    /// Random channel with `rank` Kraus operators drawn from the master seed.
    Random { rank: usize },
}

impl NoiseConfig {
    pub fn build(&self, n: usize, region: &[usize], seed: u64) -> Result<QuantumChannel> {
        match self {
            NoiseConfig::Identity => QuantumChannel::identity(n, region),
            NoiseConfig::Erasure => QuantumChannel::erasure(n, region, None),
            NoiseConfig::Depolarizing { p } => QuantumChannel::depolarizing(n, region, *p),
            NoiseConfig::Measurement => QuantumChannel::measurement(n, region),
            NoiseConfig::Random { rank } => {
                QuantumChannel::random(n, region, *rank, &mut crate::random::component_rng(seed, 900))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    /// Gauss-Legendre nodes in s (doubled once for the convergence gate).
    #[serde(default = "default_s_nodes")]
    pub s_nodes: usize,
    /// Evaluate the ω pair integrals by adaptive quadrature instead of closed forms.
    #[serde(default)]
    pub omega_quadrature: bool,
    /// Largest qubit count for dense superoperators.
    #[serde(default = "default_dense_max")]
    pub dense_max_qubits: usize,
}

fn default_s_nodes() -> usize {
    crate::functionals::DEFAULT_S_NODES
}

fn default_dense_max() -> usize {
    crate::lindblad::DEFAULT_DENSE_MAX_QUBITS
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self { s_nodes: default_s_nodes(), omega_quadrature: false, dense_max_qubits: default_dense_max() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    /// Rows of the lattice (it has 2L columns).
    pub l: usize,
    pub m: Vec<usize>,
    #[serde(default = "yes")]
    pub conditioned: bool,
    /// Site of the left block resampled by the recovery experiment.
    #[serde(default)]
    pub recovery_site: usize,
    /// Sample count for block pairs too large to enumerate.
    #[serde(default = "default_mcmc_samples")]
    pub mcmc_samples: usize,
}

fn yes() -> bool {
    true
}

fn default_mcmc_samples() -> usize {
    20000
}

fn default_beta() -> f64 {
    1.0
}

fn default_eta() -> f64 {
    1.0
}

/// One experiment. Fields left out are filled by [`ExperimentConfig::resolve`], and the
/// resolved form is what every result echoes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub model: Option<HamiltonianFile>,
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Width of the operator Fourier filter; 1/β when absent.
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Jump regions, recovery regions or cuts, depending on the experiment.
    #[serde(default)]
    pub regions: Option<Vec<Vec<usize>>>,
    #[serde(default)]
    pub noise: Option<NoiseConfig>,
    #[serde(default)]
    pub times: Option<Vec<f64>>,
    /// Preparation time for time-averaged metastable states.
    #[serde(default)]
    pub prep_time: Option<f64>,
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default)]
    pub lattice: Option<LatticeConfig>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<String>,
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            model: None,
            beta: 1.0,
            sigma: None,
            eta: 1.0,
            regions: None,
            noise: None,
            times: None,
            prep_time: None,
            samples: None,
            quadrature: QuadratureConfig::default(),
            lattice: None,
            seed: 0,
            output: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn with_model(mut self, model: HamiltonianFile) -> Self {
        self.model = Some(model);
        self
    }

    pub fn preset(name: &str, n: Option<usize>, field: Option<f64>) -> HamiltonianFile {
        HamiltonianFile::Preset(PresetFile { preset: name.to_string(), n, field })
    }

    /// Fills every defaulted field and validates the result.
    pub fn resolve(&self) -> Result<Self> {
        use Experiment::*;
        let mut c = self.clone();
        let quantum = !matches!(c.experiment, ClassicalHardDisks | ClassicalEpFi | IdentitySuite);
        if !(c.beta > 0.0 && c.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be positive, got {}", c.beta)));
        }
        if let Some(s) = c.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("sigma must be positive, got {s}")));
            }
        }
        if !(c.eta > 0.0 && c.eta.is_finite()) {
            return Err(Error::Config(format!("eta must be positive, got {}", c.eta)));
        }
        if c.quadrature.s_nodes == 0 {
            return Err(Error::Config("s_nodes must be positive".into()));
        }
        if quantum && c.model.is_none() {
            let n = if c.experiment == EpFi { 2 } else { 3 };
            c.model = Some(Self::preset("ising_chain", Some(n), Some(1.0)));
        }
        if c.sigma.is_none() && quantum {
            c.sigma = Some(1.0 / c.beta);
        }
        let n = match &c.model {
            Some(m) => Some(m.build().map_err(|e| match e {
                Error::Resource(_) | Error::Config(_) => e,
                other => Error::Config(other.to_string()),
            })?),
            None => None,
        }
        .map(|h| h.n);
        if let Some(n) = n {
            let region_default = match c.experiment {
                DbCertify | EpFi | Adb | TimeAverage => vec![(0..n).collect()],
                GibbsRecovery | MetaRecovery | StrongMarkov => vec![vec![0]],
                AreaLaw => (1..n).map(|k| (0..k).collect()).collect(),
                _ => vec![],
            };
            let regions = c.regions.get_or_insert(region_default);
            for r in regions.iter_mut() {
                r.sort_unstable();
                r.dedup();
                if r.iter().any(|&q| q >= n) {
                    return Err(Error::Config(format!("region {r:?} outside {n} qubits")));
                }
            }
            if c.experiment == AreaLaw && regions.iter().any(|r| r.is_empty() || r.len() == n) {
                return Err(Error::Config("cuts must be proper nonempty subsets".into()));
            }
        }
        let default_times: Option<Vec<f64>> = match c.experiment {
            TimeAverage => Some(vec![10.0, 50.0, 200.0]),
            GibbsRecovery | MetaRecovery | StrongMarkov | AreaLaw => Some(vec![1.0, 10.0, 100.0]),
            ClassicalHardDisks => Some(vec![0.1, 1.0, 10.0, 100.0]),
            _ => None,
        };
        if c.times.is_none() {
            c.times = default_times;
        }
        if let Some(ts) = &c.times {
            if ts.is_empty() || ts.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
                return Err(Error::Config("times must be a nonempty list of positive numbers".into()));
            }
        }
        if matches!(c.experiment, GibbsRecovery | MetaRecovery) && c.noise.is_none() {
            c.noise = Some(NoiseConfig::Erasure);
        }
        if c.experiment == StrongMarkov {
            match c.noise {
                None => c.noise = Some(NoiseConfig::Measurement),
                Some(NoiseConfig::Measurement) => {}
                Some(_) => return Err(Error::Config("strong-markov needs a measurement channel".into())),
            }
        }
        if let Some(NoiseConfig::Depolarizing { p }) = c.noise {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("depolarizing p = {p} outside [0, 1]")));
            }
        }
        if matches!(c.experiment, MetaRecovery | AreaLaw | StrongMarkov) && c.prep_time.is_none() {
            c.prep_time = Some(50.0);
        }
        if let Some(t) = c.prep_time {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config("prep_time must be positive".into()));
            }
        }
        if c.samples.is_none() {
            c.samples = match c.experiment {
                EpFi | Adb => Some(20),
                TimeAverage => Some(5),
                MetaRecovery => Some(3),
                AreaLaw => Some(50),
                ClassicalEpFi => Some(10),
                _ => None,
            };
        }
        if c.experiment == ClassicalHardDisks {
            let lat = c.lattice.get_or_insert(LatticeConfig {
                l: 4,
                m: vec![2, 3, 4],
                conditioned: true,
                recovery_site: 0,
                mcmc_samples: default_mcmc_samples(),
            });
            if lat.m.is_empty() || lat.m.iter().any(|&m| m == 0 || m > lat.l || m * m > 16) {
                return Err(Error::Config("block sizes must satisfy 1 <= m <= L and m² <= 16".into()));
            }
            if lat.m.iter().any(|&m| lat.recovery_site >= m * m) {
                return Err(Error::Config("recovery_site must lie inside every block".into()));
            }
        } else if c.lattice.is_some() {
            return Err(Error::Config("lattice is only used by classical-hard-disks".into()));
        }
        Ok(c)
    }

    pub fn hamiltonian(&self) -> Result<HamiltonianSpec> {
        self.model.as_ref().ok_or_else(|| Error::Config("experiment needs a model".into()))?.build()
    }

    pub fn filter(&self) -> Result<FilterParams> {
        FilterParams::new(self.beta, self.sigma)
    }

    pub fn regions(&self) -> &[Vec<usize>] {
        self.regions.as_deref().unwrap_or(&[])
    }

    pub fn times(&self) -> &[f64] {
        self.times.as_deref().unwrap_or(&[])
    }

    pub fn samples(&self) -> usize {
        self.samples.unwrap_or(1)
    }

    pub fn lindblad_options(&self) -> crate::lindblad::LindbladOptions {
        crate::lindblad::LindbladOptions {
            dense_max_qubits: self.quadrature.dense_max_qubits,
            quadrature_fallback: self.quadrature.omega_quadrature,
            ..Default::default()
        }
    }
}

/// A pass/fail check. Advisory gates report trends and only fail a run under `--strict`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
    pub advisory: bool,
}

/// Plot-ready table written to `series/<name>.csv`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Series {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn push_f64(&mut self, row: &[f64]) {
        self.rows.push(row.iter().map(|v| fmt_f64(*v)).collect());
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }
}

/// Shortest representation that parses back to the same value.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub outputs: BTreeMap<String, Value>,
    pub gates: Vec<Gate>,
    pub series: Vec<Series>,
}

impl Outcome {
    pub fn output(&mut self, key: &str, v: impl Serialize) {
        self.outputs.insert(key.to_string(), serde_json::to_value(v).unwrap_or(Value::Null));
    }

    /// Records `value <= threshold`.
    pub fn at_most(&mut self, name: &str, value: f64, threshold: f64) {
        let pass = value <= threshold;
        self.gates.push(Gate { name: name.into(), value, threshold, pass, advisory: false });
    }

    pub fn check(&mut self, name: &str, pass: bool) {
        self.gates.push(Gate { name: name.into(), value: pass as u8 as f64, threshold: 1.0, pass, advisory: false });
    }

    pub fn advisory(&mut self, name: &str, value: f64, threshold: f64, pass: bool) {
        self.gates.push(Gate { name: name.into(), value, threshold, pass, advisory: true });
    }

    pub fn merge(&mut self, prefix: &str, other: Outcome) {
        for (k, v) in other.outputs {
            self.outputs.insert(format!("{prefix}/{k}"), v);
        }
        for mut g in other.gates {
            g.name = format!("{prefix}/{}", g.name);
            self.gates.push(g);
        }
        for mut s in other.series {
            s.name = format!("{prefix}_{}", s.name);
            self.series.push(s);
        }
    }

    pub fn passed(&self, strict: bool) -> bool {
        self.gates.iter().all(|g| g.pass || (g.advisory && !strict))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub config: ExperimentConfig,
    pub code_hash: String,
    pub outputs: BTreeMap<String, Value>,
    pub gates: Vec<Gate>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub wall_time_s: f64,
    pub threads: usize,
    pub code_hash: String,
}

/// Runs a resolved config.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Outcome> {
    use Experiment::*;
    match cfg.experiment {
        DbCertify => experiments::db_certify(cfg),
        EpFi => experiments::ep_fi(cfg),
        Adb => experiments::adb(cfg),
        TimeAverage => experiments::time_average(cfg),
        GibbsRecovery => experiments::gibbs_recovery(cfg),
        MetaRecovery => experiments::meta_recovery(cfg),
        StrongMarkov => experiments::strong_markov(cfg),
        AreaLaw => experiments::area_law(cfg),
        ClassicalHardDisks => experiments::classical_hard_disks(cfg),
        ClassicalEpFi => experiments::classical_ep_fi(cfg),
        IdentitySuite => Ok(battery::run_suite(battery::SuiteName::Identity, cfg.seed)?.into_outcome()),
    }
}

pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Json(_) => EXIT_SCHEMA,
        Error::Resource(_) => EXIT_RESOURCE,
        _ => EXIT_GATE,
    }
}

fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_outputs(dir: &Path, record_json: &str, meta: &RunMeta, series: &[Series]) -> Result<()> {
    write_atomic(&dir.join("result.json"), record_json.as_bytes())?;
    write_atomic(&dir.join("run_meta.json"), serde_json::to_string_pretty(meta)?.as_bytes())?;
    for s in series {
        write_atomic(&dir.join("series").join(format!("{}.csv", s.name)), s.to_csv().as_bytes())?;
    }
    Ok(())
}

#[derive(Debug, Parser)]
#[command(name = "metastab", version, about = "Metastability experiments for detailed-balanced Lindbladians")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Output directory (defaults to the config's `output`, then `out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for the parallel sections.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Overrides the master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Treat advisory gates as fatal.
    #[arg(long, global = true)]
    pub strict: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one experiment config.
    Run { config: PathBuf },
    /// Run an acceptance battery.
    Suite { name: battery::SuiteName },
}

/// Parses arguments, runs, writes outputs and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_SCHEMA } else { EXIT_OK };
        }
    };
    if let Some(t) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global();
    }
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn execute(cli: &Cli) -> Result<i32> {
    let start = Instant::now();
    match &cli.command {
        Command::Run { config } => {
            let text = fs::read_to_string(config).map_err(|e| Error::Config(format!("{}: {e}", config.display())))?;
            let mut cfg = ExperimentConfig::parse(&text)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let cfg = cfg.resolve()?;
            let dir = cli.out.clone().or_else(|| cfg.output.clone().map(PathBuf::from)).unwrap_or_else(|| "out".into());
            let outcome = run_experiment(&cfg)?;
            let pass = outcome.passed(cli.strict);
            let record = ResultRecord { config: cfg, code_hash: CODE_HASH.into(), outputs: outcome.outputs, gates: outcome.gates, pass };
            let meta = RunMeta { wall_time_s: start.elapsed().as_secs_f64(), threads: rayon::current_num_threads(), code_hash: CODE_HASH.into() };
            write_outputs(&dir, &serde_json::to_string_pretty(&record)?, &meta, &outcome.series)?;
            for g in record.gates.iter().filter(|g| !g.pass) {
                eprintln!("gate failed: {} (value {:e}, threshold {:e}{})", g.name, g.value, g.threshold, if g.advisory { ", advisory" } else { "" });
            }
            Ok(if pass { EXIT_OK } else { EXIT_GATE })
        }
        Command::Suite { name } => {
            let seed = cli.seed.unwrap_or(0);
            let report = battery::run_suite(*name, seed)?;
            let dir = cli.out.clone().unwrap_or_else(|| "out".into());
            let pass = report.passed(cli.strict);
            print!("{}", report.table());
            let meta = RunMeta { wall_time_s: start.elapsed().as_secs_f64(), threads: rayon::current_num_threads(), code_hash: CODE_HASH.into() };
            let mut series = report.series();
            series.push(report.traceability());
            write_outputs(&dir, &serde_json::to_string_pretty(&report)?, &meta, &series)?;
            Ok(if pass { EXIT_OK } else { EXIT_GATE })
        }
    }
}
