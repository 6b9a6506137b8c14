//! Acceptance battery: ten criteria grouped into the identity, inequality and figure suites.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::experiments;
use super::{Experiment, ExperimentConfig, Gate, Outcome, Series, CODE_HASH};
use crate::error::Result;
use crate::functionals::{self, SWeightedFilters};
use crate::lindblad::WeightFunctions;
use crate::linalg::{c, max_abs, CMat};
use crate::pauli_ham::{diagonalize, single_qubit_jump_set, HamiltonianFile};
use crate::quad::{adaptive, Rule};
use crate::random::{component_rng, random_unit_operator};
use crate::spectral::{self, FilterParams, PiecewiseExp};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SuiteName {
    Identity,
    Inequality,
    PaperFigures,
}

impl SuiteName {
    pub fn criteria(self) -> &'static [usize] {
        match self {
            SuiteName::Identity => &[1, 2, 3, 4, 5],
            SuiteName::Inequality => &[6, 7, 8, 9, 10],
            SuiteName::PaperFigures => &[7, 9],
        }
    }
}

/// (id, statement, test that checks it).
pub const CRITERIA: [(usize, &str, &str); 10] = [
    (1, "KMS detailed balance and Gibbs fixed point", "criterion_01_detailed_balance"),
    (2, "entropy production equals Fisher information", "criterion_02_entropy_dissipation"),
    (3, "ADB direct and gradient forms agree", "criterion_03_adb_dual_forms"),
    (4, "filter-function facts", "criterion_04_filter_facts"),
    (5, "operator Fourier transform identities", "criterion_05_operator_ft"),
    (6, "time averaging forces metastability", "criterion_06_time_average"),
    (7, "recovery experiments", "criterion_07_recovery"),
    (8, "free-energy identity and area laws", "criterion_08_area_law"),
    (9, "classical Glauber suite", "criterion_09_classical"),
    (10, "inequality constants stable across seed batches", "criterion_10_inequality_trends"),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub id: usize,
    pub statement: String,
    pub test: String,
    pub gates: Vec<Gate>,
    pub outputs: BTreeMap<String, Value>,
    #[serde(skip)]
    pub series: Vec<Series>,
    pub pass: bool,
}

impl CriterionReport {
    fn from_outcome(id: usize, o: Outcome) -> Self {
        let (_, statement, test) = CRITERIA[id - 1];
        Self {
            id,
            statement: statement.into(),
            test: test.into(),
            pass: o.passed(true),
            gates: o.gates,
            outputs: o.outputs,
            series: o.series,
        }
    }

    /// One line: id, PASS/FAIL, statement, first failing gate if any.
    pub fn line(&self) -> String {
        let status = if self.pass { "PASS" } else { "FAIL" };
        match self.gates.iter().find(|g| !g.pass) {
            Some(g) => format!(
                "criterion {:>2} {status} {} [{}: {:e} > {:e}]",
                self.id, self.statement, g.name, g.value, g.threshold
            ),
            None => format!("criterion {:>2} {status} {} ({} gates)", self.id, self.statement, self.gates.len()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: SuiteName,
    pub seed: u64,
    pub code_hash: String,
    pub criteria: Vec<CriterionReport>,
    pub pass: bool,
}

impl SuiteReport {
    pub fn passed(&self, _strict: bool) -> bool {
        self.pass
    }

    pub fn table(&self) -> String {
        self.criteria.iter().map(|c| c.line() + "\n").collect()
    }

    pub fn traceability(&self) -> Series {
        let mut s = Series::new("traceability", &["criterion", "statement", "test", "status"]);
        for c in &self.criteria {
            s.push(vec![c.id.to_string(), c.statement.clone(), c.test.clone(), if c.pass { "pass" } else { "fail" }.into()]);
        }
        s
    }

    pub fn series(&self) -> Vec<Series> {
        self.criteria
            .iter()
            .flat_map(|c| {
                c.series.iter().map(move |s| Series { name: format!("c{:02}_{}", c.id, s.name), ..s.clone() })
            })
            .collect()
    }

    pub fn into_outcome(self) -> Outcome {
        let mut o = Outcome::default();
        for c in self.criteria {
            let id = c.id;
            let inner = Outcome { outputs: c.outputs, gates: c.gates, series: c.series };
            o.merge(&format!("c{id:02}"), inner);
        }
        o
    }
}

pub fn run_suite(name: SuiteName, seed: u64) -> Result<SuiteReport> {
    let criteria = name.criteria().iter().map(|&k| criterion(k, seed)).collect::<Result<Vec<_>>>()?;
    let pass = criteria.iter().all(|c| c.pass);
    Ok(SuiteReport { suite: name, seed, code_hash: CODE_HASH.into(), criteria, pass })
}

pub fn criterion(id: usize, seed: u64) -> Result<CriterionReport> {
    let o = match id {
        1 => detailed_balance(seed)?,
        2 => per_preset(Experiment::EpFi, seed, &[1.0])?,
        3 => per_preset(Experiment::Adb, seed, &[1.0])?,
        4 => filter_facts()?,
        5 => operator_ft(seed)?,
        6 => experiments::time_average(&cfg(Experiment::TimeAverage, ising3(), 1.0, seed)?)?,
        7 => recovery(seed)?,
        8 => per_preset(Experiment::AreaLaw, seed, &[0.5, 1.0, 2.0])?,
        9 => classical(seed)?,
        10 => inequality_trends(seed)?,
        _ => return Err(crate::error::Error::Invalid(format!("no criterion {id}"))),
    };
    Ok(CriterionReport::from_outcome(id, o))
}

fn ising3() -> HamiltonianFile {
    ExperimentConfig::preset("ising_chain", Some(3), Some(1.0))
}

/// The three reference models: Ising chain, seeded random 2-local, single qubit.
pub fn presets() -> Vec<(&'static str, HamiltonianFile)> {
    vec![
        ("ising3", ising3()),
        ("random2local3", ExperimentConfig::preset("random_2local(7)", Some(3), None)),
        ("single_qubit", ExperimentConfig::preset("single_qubit", None, None)),
    ]
}

fn cfg(e: Experiment, model: HamiltonianFile, beta: f64, seed: u64) -> Result<ExperimentConfig> {
    let mut c = ExperimentConfig::new(e).with_model(model);
    c.beta = beta;
    c.seed = seed;
    c.resolve()
}

fn run(c: &ExperimentConfig) -> Result<Outcome> {
    super::run_experiment(c)
}

fn detailed_balance(seed: u64) -> Result<Outcome> {
    per_preset(Experiment::DbCertify, seed, &[0.5, 1.0, 2.0])
}

fn per_preset(e: Experiment, seed: u64, betas: &[f64]) -> Result<Outcome> {
    let mut o = Outcome::default();
    for (name, model) in presets() {
        if e == Experiment::AreaLaw && name == "single_qubit" {
            continue;
        }
        for &beta in betas {
            o.merge(&format!("{name}_beta{beta}"), run(&cfg(e, model.clone(), beta, seed)?)?);
        }
    }
    Ok(o)
}

fn filter_facts() -> Result<Outcome> {
    let mut o = Outcome::default();
    let (mut h_gamma, mut sup, mut g_half, mut gs_half, mut g_adb) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for beta in [0.5, 1.0, 2.0] {
        let fp = FilterParams::new(beta, None)?;
        let w = WeightFunctions::new(fp);
        let f = SWeightedFilters::new(fp);
        for j in 0..=400 {
            let om = -20.0 + 40.0 * j as f64 / 400.0;
            h_gamma = h_gamma.max((f.h(-0.5, om) - w.gamma(om)).abs());
            for i in 0..=50 {
                sup = sup.max(f.h(-0.5 + i as f64 / 50.0, om));
            }
        }
        let bound = 40.0 * beta;
        let integral = |g: &dyn Fn(f64) -> f64| adaptive(g, -bound, bound, 1e-15, 1e-13);
        g_half = g_half.max((integral(&|t| w.g(t)) - 0.5).abs());
        for s in [-0.45, -0.3, -0.1, 0.0, 0.2, 0.4] {
            gs_half = gs_half.max((integral(&|t| f.g(s, t)) - 0.5).abs());
            let expect = (1.0 - 2.0 * f64::abs(s)) / 4.0;
            g_adb = g_adb.max((integral(&|t| f.g_adb(s, t)) - expect).abs());
        }
    }
    o.at_most("h_minus_half_equals_gamma", h_gamma, 1e-12);
    o.at_most("sup_h_minus_one", sup - 1.0, 1e-14);
    o.at_most("integral_g", g_half, 1e-8);
    o.at_most("integral_g_s", gs_half, 1e-8);
    o.at_most("integral_g_adb_s", g_adb, 1e-8);
    Ok(o)
}

fn operator_ft(seed: u64) -> Result<Outcome> {
    let mut o = Outcome::default();
    let h = crate::pauli_ham::HamiltonianSpec::random_2local(3, 4)?;
    let spec = diagonalize(&h)?;
    let mut rng = component_rng(seed, 800);
    let mut recon = 0.0f64;
    let mut imag = 0.0f64;
    let mut conv = 0.0f64;
    let mut twirl = 0.0f64;
    for _ in 0..3 {
        let a = random_unit_operator(8, &mut rng);
        let d = spectral::bohr_decompose(&a, &spec)?;
        let sigma = 0.6;
        let lo = d.frequencies[0] - 14.0 * sigma;
        let hi = d.frequencies[d.frequencies.len() - 1] + 14.0 * sigma;
        let breaks: Vec<f64> = (0..=40).map(|k| lo + (hi - lo) * k as f64 / 40.0).collect();
        let rule = Rule::composite(40, &breaks);
        let mut acc = CMat::zeros(8, 8);
        for (w, x) in rule.weights.iter().zip(&rule.nodes) {
            acc += d.operator_ft(sigma, *x) * c(*w, 0.0);
        }
        acc /= c((2.0 * sigma * (2.0 * PI).sqrt()).sqrt(), 0.0);
        recon = recon.max(max_abs(&(acc - &a)));
        for &(beta, om, bt) in &[(1.0, -0.7, 0.9), (2.0, 0.4, 0.3), (0.5, 1.5, -0.6)] {
            let fp = FilterParams::new(beta, None)?;
            imag = imag.max(spectral::imaginary_time_conjugate_ft(&d, &spec, fp, om, bt).relative_deviation);
        }
        conv = conv.max(spectral::convolve_ft(&d, 0.5, 0.3, 0.2).relative_deviation);
        twirl = twirl.max(spectral::twirl_ft(&d, 0.7, 0.4, -0.2) / d.components.iter().map(|m| m.norm()).fold(0.0, f64::max).powi(2));
    }
    o.at_most("sum_over_energies_reconstruction", recon, 1e-8);
    o.at_most("imaginary_time_conjugation_relative", imag, 1e-10);
    o.at_most("convolution_relative", conv, 1e-7);
    o.at_most("twirling", twirl, 1e-7);
    let jumps: Vec<CMat> = single_qubit_jump_set(3, &[0, 1, 2]).iter().map(|p| p.to_matrix()).collect();
    let fp = FilterParams::new(1.0, None)?;
    let metro = PiecewiseExp::metropolis(fp);
    let h_half = PiecewiseExp::dirichlet_frequency(fp, 0.0);
    let h_edge = PiecewiseExp::dirichlet_frequency(fp, 0.3);
    let weights: Vec<(&str, Box<dyn Fn(f64) -> f64>, f64)> = vec![
        ("constant", Box::new(|_| 1.0), 1.0),
        ("metropolis", Box::new(move |w| metro.eval(w)), 1.0),
        ("h_0", Box::new(move |w| h_half.eval(w)), 1.0),
        ("h_0.3", Box::new(move |w| h_edge.eval(w)), 1.0),
        ("gaussian", Box::new(|w| (-w * w).exp()), 1.0),
    ];
    let mut all = true;
    for (name, w, sup) in &weights {
        let chk = spectral::parseval_bound_check(&jumps, &spec, fp.sigma, w.as_ref(), *sup)?;
        o.output(&format!("parseval_{name}"), [chk.lhs, chk.rhs]);
        all &= chk.holds();
    }
    o.check("parseval_inequality", all);
    Ok(o)
}

fn recovery(seed: u64) -> Result<Outcome> {
    let mut o = Outcome::default();
    o.merge("gibbs", run(&cfg(Experiment::GibbsRecovery, ising3(), 1.0, seed)?)?);
    o.merge("metastable", run(&cfg(Experiment::MetaRecovery, ising3(), 1.0, seed)?)?);
    Ok(o)
}

fn classical(seed: u64) -> Result<Outcome> {
    let mut o = Outcome::default();
    for beta in [1.0, 2.0] {
        let mut c = ExperimentConfig::new(Experiment::ClassicalEpFi);
        c.beta = beta;
        c.seed = seed;
        o.merge(&format!("ep_fi_beta{beta}"), run(&c.resolve()?)?);
    }
    let mut c = ExperimentConfig::new(Experiment::ClassicalHardDisks);
    c.beta = 2.0;
    c.seed = seed;
    o.merge("hard_disks", run(&c.resolve()?)?);
    Ok(o)
}

/// Ratio of the larger to the smaller of two positive constants.
pub fn spread(a: Option<f64>, b: Option<f64>) -> f64 {
    match (a, b) {
        (Some(a), Some(b)) if a > 0.0 && b > 0.0 => a.max(b) / a.min(b),
        _ => f64::INFINITY,
    }
}

fn inequality_trends(seed: u64) -> Result<Outcome> {
    let mut o = Outcome::default();
    let c = cfg(Experiment::Adb, ising3(), 1.0, seed)?;
    let (_, first) = experiments::adb_records(&c, 0..10)?;
    let (_, second) = experiments::adb_records(&c, 10..20)?;
    let k1 = functionals::fit_stationarity_constant(&first);
    let k2 = functionals::fit_stationarity_constant(&second);
    let f1 = functionals::fit_fisher_constant(&first);
    let f2 = functionals::fit_fisher_constant(&second);
    o.output("stationarity_constant", [k1, k2]);
    o.output("fisher_constant", [f1, f2]);
    o.at_most("stationarity_constant_spread", spread(k1, k2), 2.0);
    o.at_most("fisher_constant_spread", spread(f1, f2), 2.0);
    let mut s = Series::new("inequality_records", &["batch", "adb", "fisher", "fisher_bound", "local_stationarity"]);
    for (b, recs) in [(0, &first), (1, &second)] {
        for r in recs.iter() {
            s.push_f64(&[b as f64, r.adb, r.fisher, r.fisher_bound, r.local_stationarity]);
        }
    }
    o.series.push(s);
    Ok(o)
}
