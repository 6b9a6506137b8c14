//! Named experiments. Each returns its outputs, gates and CSV series.

use rand::Rng;

use super::{fmt_f64, ExperimentConfig, Outcome, Series};
use crate::classical::{self, RateRule, SpinModel};
use crate::error::{Error, Result};
use crate::functionals::{self, adb_vs_fi_report, AdbFiRecord};
use crate::infotheory::{self, Bipartition};
use crate::linalg::{trace_norm, CMat};
use crate::lindblad::{choi_min_eigenvalue, kms_detailed_balance_residual, Lindbladian};
use crate::markov::{self, RecoveryMap};
use crate::pauli_ham::{diagonalize, gibbs_state, single_qubit_jump_set, DensityMatrix, HamiltonianSpec, Spectrum};
use crate::random::{component_rng, random_density, random_unit_operator};

/// Identity-gate tolerance for |FI - EP|.
pub fn ep_fi_tolerance(ep: f64) -> f64 {
    1e-8f64.max(1e-4 * ep.abs())
}

struct Setup {
    h: HamiltonianSpec,
    rho: DensityMatrix,
    labels: Vec<String>,
    generator: Lindbladian,
}

fn setup(cfg: &ExperimentConfig) -> Result<Setup> {
    let h = cfg.hamiltonian()?;
    let spec = diagonalize(&h)?;
    let fp = cfg.filter()?;
    let rho = gibbs_state(&spec, fp.beta)?;
    let region: Vec<usize> = cfg.regions().first().cloned().unwrap_or_else(|| (0..h.n).collect());
    let strings = single_qubit_jump_set(h.n, &region);
    let mats: Vec<CMat> = strings.iter().map(|p| p.to_matrix()).collect();
    let generator = Lindbladian::build(&spec, &mats, fp, cfg.eta, cfg.lindblad_options())?;
    Ok(Setup { labels: strings.iter().map(|p| p.label()).collect(), h, rho, generator })
}

/// Full-generator jumps on every qubit, used to prepare metastable states.
fn full_generator(cfg: &ExperimentConfig, h: &HamiltonianSpec, spec: &Spectrum) -> Result<Lindbladian> {
    let mats: Vec<CMat> = single_qubit_jump_set(h.n, &(0..h.n).collect::<Vec<_>>()).iter().map(|p| p.to_matrix()).collect();
    Lindbladian::build(spec, &mats, cfg.filter()?, cfg.eta, cfg.lindblad_options())
}

/// Time average of a random state under the full generator.
fn prepared_state(cfg: &ExperimentConfig, l: &Lindbladian, component: u64) -> Result<DensityMatrix> {
    let mut rng = component_rng(cfg.seed, component);
    let s0 = random_density(l.dim(), &mut rng);
    l.time_average(&s0, cfg.prep_time.unwrap_or(50.0))
}

pub fn db_certify(cfg: &ExperimentConfig) -> Result<Outcome> {
    let s = setup(cfg)?;
    let mut out = Outcome::default();
    let mut rng = component_rng(cfg.seed, 1);
    let mut table = Series::new("db_certify", &["jump", "kms_residual", "fixed_point_residual"]);
    let (mut worst_kms, mut worst_fix) = (0.0f64, 0.0f64);
    for (label, local) in s.labels.iter().zip(&s.generator.locals) {
        let kms = kms_detailed_balance_residual(&|o| local.apply_adj(o), &s.rho, 8, &mut rng);
        let fix = trace_norm(&local.apply(s.rho.matrix()));
        worst_kms = worst_kms.max(kms);
        worst_fix = worst_fix.max(fix);
        table.push(vec![label.clone(), fmt_f64(kms), fmt_f64(fix)]);
    }
    let full = s.generator.stationarity(s.rho.matrix());
    out.at_most("kms_residual", worst_kms, 1e-8);
    out.at_most("fixed_point_residual", worst_fix, 1e-8);
    out.at_most("full_fixed_point_residual", full, 1e-8);
    if s.generator.dense_allowed() {
        let step = crate::linalg::expm(&(s.generator.superop_e()? * crate::linalg::c(0.05, 0.0)));
        let choi = choi_min_eigenvalue(&step, s.generator.dim())?;
        out.output("choi_min_eigenvalue", choi);
        out.check("completely_positive", choi >= -1e-9);
    }
    out.output("kms_residual_max", worst_kms);
    out.output("fixed_point_residual_max", worst_fix);
    out.output("full_fixed_point_residual", full);
    out.output("qubits", s.h.n);
    out.series.push(table);
    Ok(out)
}

pub fn ep_fi(cfg: &ExperimentConfig) -> Result<Outcome> {
    let s = setup(cfg)?;
    let mut out = Outcome::default();
    let mut table = Series::new("ep_fi", &["state", "jump", "ep", "fisher", "abs_diff"]);
    let (mut worst_excess, mut min_ep, mut quad_fail) = (f64::NEG_INFINITY, f64::INFINITY, 0usize);
    let d = s.generator.dim();
    for k in 0..cfg.samples() {
        let sigma = random_density(d, &mut component_rng(cfg.seed, 100 + k as u64));
        for (label, local) in s.labels.iter().zip(&s.generator.locals) {
            let ep = functionals::entropy_production(local, &sigma)?;
            let fi = match functionals::fisher_information(local, &sigma, cfg.quadrature.s_nodes) {
                Ok(v) => v,
                Err(Error::Quadrature { .. }) => {
                    quad_fail += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let diff = (fi - ep).abs();
            worst_excess = worst_excess.max(diff - ep_fi_tolerance(ep));
            min_ep = min_ep.min(ep);
            table.push(vec![k.to_string(), label.clone(), fmt_f64(ep), fmt_f64(fi), fmt_f64(diff)]);
        }
    }
    out.at_most("fi_minus_ep_over_tolerance", worst_excess, 0.0);
    out.at_most("ep_nonnegative", -min_ep, 1e-10);
    out.at_most("s_quadrature_gate_failures", quad_fail as f64, 0.0);
    out.output("cases", table.rows.len());
    out.series.push(table);
    Ok(out)
}

fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-14 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// ADB in its direct and gradient forms on random states, plus the inequality records.
pub fn adb_records(cfg: &ExperimentConfig, components: std::ops::Range<u64>) -> Result<(Outcome, Vec<AdbFiRecord>)> {
    let s = setup(cfg)?;
    let mut out = Outcome::default();
    let mut table = Series::new("adb", &["state", "jump", "adb", "adb_gradient", "fisher", "local_stationarity"]);
    let mut worst = 0.0f64;
    let mut records = Vec::new();
    let d = s.generator.dim();
    for k in components {
        let sigma = random_density(d, &mut component_rng(cfg.seed, 200 + k));
        for (label, local) in s.labels.iter().zip(&s.generator.locals) {
            let direct = functionals::adb_error(local, &sigma)?;
            let grad = functionals::adb_error_gradient_form(local, &sigma, cfg.quadrature.s_nodes)?;
            worst = worst.max(relative_gap(direct, grad));
            let rec = adb_vs_fi_report(local, &sigma, cfg.quadrature.s_nodes)?;
            table.push(vec![
                k.to_string(),
                label.clone(),
                fmt_f64(direct),
                fmt_f64(grad),
                fmt_f64(rec.fisher),
                fmt_f64(rec.local_stationarity),
            ]);
            records.push(rec);
        }
    }
    let at_rho = s
        .generator
        .locals
        .iter()
        .map(|l| functionals::adb_error(l, &s.rho).map(f64::abs))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    out.at_most("adb_forms_relative_gap", worst, 1e-5);
    out.at_most("adb_at_gibbs", at_rho, 1e-10);
    out.output("stationarity_constant", functionals::fit_stationarity_constant(&records));
    out.output("fisher_constant", functionals::fit_fisher_constant(&records));
    out.series.push(table);
    Ok((out, records))
}

pub fn adb(cfg: &ExperimentConfig) -> Result<Outcome> {
    Ok(adb_records(cfg, 0..cfg.samples() as u64)?.0)
}

pub fn time_average(cfg: &ExperimentConfig) -> Result<Outcome> {
    let s = setup(cfg)?;
    let mut out = Outcome::default();
    let mut table = Series::new("time_average", &["state", "t", "stationarity", "bound"]);
    let mut worst = f64::NEG_INFINITY;
    for k in 0..cfg.samples() {
        let s0 = random_density(s.generator.dim(), &mut component_rng(cfg.seed, 300 + k as u64));
        for &t in cfg.times() {
            let avg = s.generator.time_average(&s0, t)?;
            let eps = s.generator.stationarity(avg.matrix());
            let bound = 2.0 / t + 1e-6;
            worst = worst.max(eps - bound);
            table.push(vec![k.to_string(), fmt_f64(t), fmt_f64(eps), fmt_f64(bound)]);
        }
    }
    out.at_most("stationarity_minus_bound", worst, 0.0);
    out.series.push(table);
    Ok(out)
}

fn recovery_series(name: &str, rows: &[markov::RecoveryResult]) -> Series {
    let mut s = Series::new(name, &["t", "total", "leakage", "mixing"]);
    for r in rows {
        s.push_f64(&[r.t, r.total, r.leakage, r.mixing]);
    }
    s
}

pub fn gibbs_recovery(cfg: &ExperimentConfig) -> Result<Outcome> {
    let h = cfg.hamiltonian()?;
    let spec = diagonalize(&h)?;
    let region = cfg.regions()[0].clone();
    let channel = cfg.noise.as_ref().expect("resolved").build(h.n, &region, cfg.seed)?;
    let rows = markov::gibbs_recovery_experiment(&spec, cfg.filter()?, &region, &channel, cfg.times())?;
    let mut out = Outcome::default();
    let totals: Vec<f64> = rows.iter().map(|r| r.total).collect();
    out.check("error_non_increasing_in_t", markov::is_non_increasing(&totals));
    out.at_most("leakage", rows.iter().map(|r| r.leakage).fold(0.0, f64::max), 1e-8);
    out.output("totals", &totals);
    out.series.push(recovery_series("recovery_gibbs", &rows));
    Ok(out)
}

pub fn meta_recovery(cfg: &ExperimentConfig) -> Result<Outcome> {
    let h = cfg.hamiltonian()?;
    let spec = diagonalize(&h)?;
    let fp = cfg.filter()?;
    let full = full_generator(cfg, &h, &spec)?;
    let region = cfg.regions()[0].clone();
    let channel = cfg.noise.as_ref().expect("resolved").build(h.n, &region, cfg.seed)?;
    let rec = RecoveryMap::new(&spec, fp, &region, cfg.lindblad_options())?;
    let mut out = Outcome::default();
    let mut table = Series::new("recovery_metastable", &["state", "t", "total", "leakage", "mixing", "leakage_bound"]);
    let mut bound_ok = true;
    let mut worst_pairing = f64::NEG_INFINITY;
    let mut summary = Vec::new();
    for k in 0..cfg.samples() {
        let sigma = prepared_state(cfg, &full, 400 + k as u64)?;
        let res = markov::metastable_recovery_experiment(&spec, fp, &sigma, &region, &channel, cfg.times())?;
        bound_ok &= res.leakage_bound_holds;
        for r in &res.rows {
            table.push(vec![
                k.to_string(),
                fmt_f64(r.t),
                fmt_f64(r.total),
                fmt_f64(r.leakage),
                fmt_f64(r.mixing),
                fmt_f64(r.t * res.local_stationarity),
            ]);
        }
        let mut rng = component_rng(cfg.seed, 450 + k as u64);
        for _ in 0..10 {
            let o = random_unit_operator(sigma.dim(), &mut rng);
            for &t in cfg.times() {
                let p = markov::local_stationarity_pairing(&rec, &|x| rec.generator.apply_adj(x), &sigma, &o, t)?;
                worst_pairing = worst_pairing.max(p - (2.0 / t + 1e-6));
            }
        }
        summary.push(serde_json::json!({
            "state": k,
            "eps_meta": full.stationarity(sigma.matrix()),
            "local_stationarity": res.local_stationarity,
            "t_star": res.t_star,
            "min_total": res.min_total,
        }));
    }
    out.check("leakage_within_t_times_local_stationarity", bound_ok);
    out.at_most("local_stationarity_pairing_minus_bound", worst_pairing, 0.0);
    out.output("states", summary);
    out.series.push(table);
    Ok(out)
}

pub fn strong_markov(cfg: &ExperimentConfig) -> Result<Outcome> {
    let h = cfg.hamiltonian()?;
    let spec = diagonalize(&h)?;
    let fp = cfg.filter()?;
    let rho = gibbs_state(&spec, fp.beta)?;
    let full = full_generator(cfg, &h, &spec)?;
    let meta = prepared_state(cfg, &full, 500)?;
    let region = cfg.regions()[0].clone();
    let channel = cfg.noise.as_ref().expect("resolved").build(h.n, &region, cfg.seed)?;
    let rec = RecoveryMap::new(&spec, fp, &region, cfg.lindblad_options())?;
    let mut out = Outcome::default();
    let mut table = Series::new("strong_markov", &["state", "t", "strong", "plain"]);
    let mut ok = true;
    for (name, sigma) in [("gibbs", &rho), ("metastable", &meta)] {
        for &t in cfg.times() {
            let r = markov::strong_markov_report(sigma, &channel, &|x| rec.apply(x, t))?;
            ok &= r.plain <= r.strong + 1e-10;
            table.push(vec![name.into(), fmt_f64(t), fmt_f64(r.strong), fmt_f64(r.plain)]);
        }
    }
    out.check("plain_error_within_strong_error", ok);
    out.series.push(table);
    Ok(out)
}

fn boundary_region(bip: &Bipartition) -> Vec<usize> {
    let mut r: Vec<usize> = bip.boundary.iter().flat_map(|t| t.support()).collect();
    r.sort_unstable();
    r.dedup();
    r
}

pub fn area_law(cfg: &ExperimentConfig) -> Result<Outcome> {
    let h = cfg.hamiltonian()?;
    let spec = diagonalize(&h)?;
    let fp = cfg.filter()?;
    let rho = gibbs_state(&spec, fp.beta)?;
    let cuts = cfg.regions().to_vec();
    let mut out = Outcome::default();
    let gibbs = infotheory::area_law_audit(&rho, &h, fp.beta, &cuts, None)?;
    out.check("gibbs_area_law", gibbs.iter().all(|r| r.pass));
    let bips = cuts.iter().map(|c| Bipartition::new(&h, c)).collect::<Result<Vec<_>>>()?;
    let mut worst = 0.0f64;
    for k in 0..cfg.samples() {
        let sigma = random_density(spec.dim(), &mut component_rng(cfg.seed, 600 + k as u64));
        for bip in &bips {
            worst = worst.max(infotheory::free_energy_decomposition(&sigma, bip, &h, fp.beta)?.residual.abs());
        }
    }
    out.at_most("free_energy_identity_residual", worst, 1e-9);
    let full = full_generator(cfg, &h, &spec)?;
    let meta = prepared_state(cfg, &full, 650)?;
    let errors = bips
        .iter()
        .map(|b| infotheory::measured_markov_error(&spec, fp, &meta, b, &boundary_region(b), cfg.times()))
        .collect::<Result<Vec<_>>>()?;
    let audit = infotheory::area_law_audit(&meta, &h, fp.beta, &cuts, Some(&errors))?;
    out.check("metastable_area_law", audit.iter().all(|r| r.pass));
    out.output("metastable_eps", full.stationarity(meta.matrix()));
    for (name, rows) in [("audit_gibbs", &gibbs), ("audit_metastable", &audit)] {
        let mut buf = Vec::new();
        infotheory::write_audit_csv(rows, &mut buf)?;
        let text = String::from_utf8(buf).map_err(|e| Error::Numeric(e.to_string()))?;
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
        let mut s = Series::new(name, &header);
        for l in lines {
            s.push(l.split(',').map(str::to_string).collect());
        }
        out.series.push(s);
        out.output(name, rows);
    }
    Ok(out)
}

pub fn classical_hard_disks(cfg: &ExperimentConfig) -> Result<Outcome> {
    let lat = cfg.lattice.clone().expect("resolved");
    let beta = cfg.beta;
    let mut out = Outcome::default();
    let mut table = Series::new("hard_disks", &["m", "beta", "per_site_stationarity", "cut_mi"]);
    let mut recovery = Series::new("hard_disks_recovery", &["m", "t", "total", "leakage", "mixing", "ci_low", "ci_high"]);
    let mut per_site = Vec::new();
    let mut worst_mi = 0.0f64;
    let mut reports = Vec::new();
    for &m in &lat.m {
        let r = classical::hard_disks_metastable(lat.l, m, beta, lat.conditioned)?;
        let block = classical::glauber_generator(&SpinModel::square_block(m)?, beta, RateRule::HeatBath)?;
        let enumerated = if lat.conditioned { classical::mi_block_by_enumeration(&block)? } else { 0.0 };
        worst_mi = worst_mi.max((r.cut_mi - r.block_pairs as f64 * enumerated).abs());
        table.push_f64(&[m as f64, beta, r.stationarity_per_site, r.cut_mi]);
        per_site.push(r.stationarity_per_site);
        let model = classical::mirrored_pair_model(m)?;
        let sites = [lat.recovery_site];
        if 2 * m * m <= classical::EXACT_MAX_SITES {
            let chain = classical::glauber_generator(&model, beta, RateRule::HeatBath)?;
            let nu = if lat.conditioned { classical::block_pair_distribution(&block)? } else { chain.pi.clone() };
            let res = classical::classical_recovery_experiment(&chain, &nu, &sites, cfg.times())?;
            for row in &res.rows {
                recovery.push_f64(&[m as f64, row.t, row.total, row.leakage, row.mixing, row.total, row.total]);
            }
            out.at_most(&format!("recovery_m{m}"), res.min_total, 0.05);
            out.output(&format!("recovery_m{m}"), &res);
        } else {
            let sampler = classical::block_pair_sampler(&block)?;
            let window = neighbourhood(m, lat.recovery_site);
            let mut best = f64::INFINITY;
            for &t in cfg.times() {
                let est = classical::mcmc_recovery_estimate(&model, beta, &sampler, &sites, &window, t, lat.mcmc_samples, cfg.seed);
                recovery.push_f64(&[m as f64, t, est.estimate, f64::NAN, f64::NAN, est.ci_low, est.ci_high]);
                best = best.min(est.estimate);
                out.output(&format!("recovery_mcmc_m{m}_t{t}"), &est);
            }
            out.advisory(&format!("recovery_mcmc_m{m}"), best, 0.05, best <= 0.05);
        }
        reports.push(r);
    }
    out.at_most("cut_mi_vs_enumeration", worst_mi, 1e-10);
    let worst_ratio = per_site.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
    if per_site.len() > 1 {
        out.at_most("stationarity_ratio_per_step", worst_ratio, 0.7);
    }
    out.output("reports", &reports);
    out.series.push(table);
    out.series.push(recovery);
    Ok(out)
}

/// Site and its lattice neighbours inside the left block of the pair.
fn neighbourhood(m: usize, site: usize) -> Vec<usize> {
    let (r, c) = (site / m, site % m);
    let mut w = vec![site];
    if r > 0 {
        w.push(site - m);
    }
    if r + 1 < m {
        w.push(site + m);
    }
    if c > 0 {
        w.push(site - 1);
    }
    if c + 1 < m {
        w.push(site + 1);
    }
    w.sort_unstable();
    w
}

pub fn classical_ep_fi(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut rng = component_rng(cfg.seed, 700);
    let fields: Vec<f64> = (0..3).map(|_| rng.random_range(-0.5..0.5)).collect();
    let models = [
        ("single_spin", SpinModel::single_spin(0.4)),
        ("two_spin", SpinModel::new(2, vec![(0, 1, 1.0)], vec![0.0, 0.2])?),
        ("chain3", SpinModel::new(3, vec![(0, 1, 1.0), (1, 2, 0.7)], fields)?),
        ("block2", SpinModel::square_block(2)?),
    ];
    let mut out = Outcome::default();
    let mut table = Series::new("classical_ep_fi", &["model", "rule", "state", "ep", "fisher", "decay_rate"]);
    let (mut worst, mut worst_decay, mut min_ep) = (0.0f64, 0.0f64, f64::INFINITY);
    for (name, model) in &models {
        for rule in [RateRule::HeatBath, RateRule::Metropolis] {
            let chain = classical::glauber_generator(model, cfg.beta, rule)?;
            out.at_most(&format!("detailed_balance_{name}_{rule:?}"), chain.detailed_balance_residual(), 1e-14);
            out.at_most(&format!("stationary_{name}_{rule:?}"), chain.stationarity_error(&chain.pi), 1e-12);
            for k in 0..cfg.samples() {
                let mut r = component_rng(cfg.seed, 710 + k as u64);
                let raw: Vec<f64> = (0..chain.size()).map(|_| r.random::<f64>() + 0.02).collect();
                let z: f64 = raw.iter().sum();
                let nu: Vec<f64> = raw.iter().map(|v| v / z).collect();
                let ep = classical::classical_ep(&chain, &nu)?;
                let fi = classical::classical_fisher(&chain, &nu, cfg.quadrature.s_nodes)?;
                let decay = classical::relative_entropy_decay_rate(&chain, &nu)?;
                worst = worst.max((ep - fi).abs());
                worst_decay = worst_decay.max((decay - 0.5 * ep).abs());
                min_ep = min_ep.min(ep);
                table.push(vec![name.to_string(), format!("{rule:?}"), k.to_string(), fmt_f64(ep), fmt_f64(fi), fmt_f64(decay)]);
            }
        }
    }
    let int_log = [0.1, 1.0, 10.0].iter().map(|&a| {
        let (l, r) = classical::int_log_identity(a, cfg.quadrature.s_nodes);
        (l - r).abs()
    });
    out.at_most("ep_minus_fisher", worst, 1e-8);
    out.at_most("decay_rate_minus_half_ep", worst_decay, 1e-10);
    out.at_most("ep_nonnegative", -min_ep, 0.0);
    out.at_most("int_log_identity", int_log.fold(0.0, f64::max), 1e-10);
    out.series.push(table);
    Ok(out)
}
