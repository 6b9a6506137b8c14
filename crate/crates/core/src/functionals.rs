//! Scalar functionals of metastability: weighted inner products, free energy,
//! relative entropy, entropy production, Fisher information, approximate detailed
//! balance and regularization.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, commutator, op_norm, trace, trace_norm, CMat, HermEig, ZERO};
use crate::lindblad::{Lindbladian, LocalLindbladian, WeightFunctions};
use crate::pauli_ham::DensityMatrix;
use crate::quad::Rule;
use crate::spectral::{BohrGrid, FilterParams, PiecewiseExp};

/// Eigenvalue floor applied inside matrix logarithms.
pub const LOG_FLOOR: f64 = 1e-300;
/// States whose smallest eigenvalue is at or below this are treated as singular.
pub const RANK_TOL: f64 = 1e-14;
/// Relative shift allowed when the s-quadrature node count is doubled.
pub const NODE_DOUBLING_TOL: f64 = 1e-6;
pub const DEFAULT_S_NODES: usize = 64;

/// s-dependent frequency and time filters.
#[derive(Clone, Copy, Debug)]
pub struct SWeightedFilters {
    pub fp: FilterParams,
}

impl SWeightedFilters {
    pub fn new(fp: FilterParams) -> Self {
        Self { fp }
    }

    pub fn h(&self, s: f64, omega: f64) -> f64 {
        PiecewiseExp::dirichlet_frequency(self.fp, s).eval(omega)
    }

    /// g_s(t) = (2/β) cos(πs) cosh(2πt/β) / (cos(2πs) + cosh(4πt/β)), for |s| < 1/2.
    pub fn g(&self, s: f64, t: f64) -> f64 {
        let b = self.fp.beta;
        let u = 2.0 * PI * t / b;
        // cos(2πs) + cosh(2u) = 2 cosh²u - 2 sin²(πs), rearranged to avoid cancellation
        let denom = 2.0 * (u.cosh().powi(2) - (PI * s).sin().powi(2));
        2.0 / b * (PI * s).cos() * u.cosh() / denom
    }

    /// ∫ g_s(t) e^{iνt} dt = cosh(sβν/2)/(2 cosh(βν/4)).
    pub fn g_fourier(&self, s: f64, nu: f64) -> f64 {
        let b = self.fp.beta;
        // ratio of cosh written with exponentials to stay finite for large |ν|
        let x = (s * b * nu / 2.0).abs();
        let y = (b * nu / 4.0).abs();
        0.5 * (x - y).exp() * (1.0 + (-2.0 * x).exp()) / (1.0 + (-2.0 * y).exp())
    }

    /// g^ADB_s(t) = ∫₀^{1/2-|s|} g_u(t) du.
    pub fn g_adb(&self, s: f64, t: f64) -> f64 {
        let r = 0.5 - s.abs();
        if r <= 0.0 {
            return 0.0;
        }
        Rule::legendre(48, 0.0, r).integrate(|u| self.g(u, t))
    }

    /// ∫ g^ADB_s(t) e^{iνt} dt = sinh(rβν/2)/(βν cosh(βν/4)), r = 1/2 - |s|.
    pub fn g_adb_fourier(&self, s: f64, nu: f64) -> f64 {
        let b = self.fp.beta;
        let r = 0.5 - s.abs();
        let x = r * b * nu / 2.0;
        if x.abs() < 1e-6 {
            let y = b * nu / 4.0;
            return r / 2.0 * (1.0 + x * x / 6.0) / y.cosh();
        }
        let (xa, ya) = (x.abs(), (b * nu / 4.0).abs());
        // sinh(x)/cosh(y) = e^{|x|-|y|} (1 - e^{-2|x|})/(1 + e^{-2|y|}) sign(x)
        let ratio = (xa - ya).exp() * (1.0 - (-2.0 * xa).exp()) / (1.0 + (-2.0 * ya).exp());
        ratio * x.signum() / (b * nu)
    }
}

/// Tr[X† w^{1/2+s} Y w^{1/2-s}].
pub fn weighted_inner(x: &CMat, y: &CMat, w: &DensityMatrix, s: f64) -> Result<num_complex::Complex64> {
    if !(-0.5..=0.5).contains(&s) {
        return Err(Error::Invalid(format!("s = {s} outside [-1/2, 1/2]")));
    }
    if w.min_eigenvalue() <= 0.0 {
        return Err(Error::Singular { min_eig: w.min_eigenvalue() });
    }
    let left = w.eig().apply_fn(|v| v.powf(0.5 + s));
    let right = w.eig().apply_fn(|v| v.powf(0.5 - s));
    Ok(trace(&(x.adjoint() * left * y * right)))
}

/// log σ; rejects singular states.
pub fn log_state(sigma: &DensityMatrix) -> Result<CMat> {
    let m = sigma.min_eigenvalue();
    if m <= RANK_TOL {
        return Err(Error::Singular { min_eig: m });
    }
    Ok(sigma.eig().apply_fn(|v| v.max(LOG_FLOOR).ln()))
}

/// von Neumann entropy with 0 log 0 = 0.
pub fn entropy(sigma: &DensityMatrix) -> f64 {
    -sigma.eig().values.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}

/// F(σ) = Tr[Hσ] - S(σ)/β.
pub fn free_energy(sigma: &DensityMatrix, h: &CMat, beta: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(Error::Invalid(format!("free energy needs beta > 0, got {beta}")));
    }
    Ok(trace(&(h * sigma.matrix())).re - entropy(sigma) / beta)
}

/// D(σ‖ρ) = Tr σ(log σ - log ρ); ρ must be full rank.
pub fn relative_entropy(sigma: &DensityMatrix, rho: &DensityMatrix) -> Result<f64> {
    let log_rho = log_state(rho)?;
    let e = sigma.eig();
    let mut cross = ZERO;
    for (k, &v) in e.values.iter().enumerate() {
        if v <= 0.0 {
            continue;
        }
        let col = e.vectors.column(k);
        cross += (col.adjoint() * &log_rho * col)[(0, 0)] * v;
    }
    Ok(-entropy(sigma) - cross.re)
}

/// log σ - log ρ in the energy eigenbasis, with ρ the Gibbs state of the grid.
fn log_ratio_eigen(grid: &BohrGrid, beta: f64, sigma_e: &DensityMatrix) -> Result<CMat> {
    let log_sigma = log_state(sigma_e)?;
    let e = &grid.energies;
    let m = e.iter().cloned().fold(f64::INFINITY, f64::min);
    let log_z = -beta * m + e.iter().map(|x| (-beta * (x - m)).exp()).sum::<f64>().ln();
    let mut out = log_sigma;
    for i in 0..e.len() {
        out[(i, i)] += c(beta * e[i] + log_z, 0.0);
    }
    Ok(out)
}

fn to_eigen_state(grid: &BohrGrid, sigma: &DensityMatrix) -> Result<DensityMatrix> {
    DensityMatrix::new(grid.to_eigen(sigma.matrix()))
}

/// EP_a = -Tr[L_a[σ](log σ - log ρ)].
pub fn entropy_production(local: &LocalLindbladian, sigma: &DensityMatrix) -> Result<f64> {
    let grid = &local.grid;
    let se = to_eigen_state(grid, sigma)?;
    let o = log_ratio_eigen(grid, local.fp.beta, &se)?;
    Ok(-trace(&(local.apply_e(se.matrix()) * o)).re)
}

/// Entropy production of the full generator split into dissipative and Hamiltonian parts.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EntropyProductionBreakdown {
    pub per_jump: Vec<f64>,
    /// η Σ_a EP_a.
    pub dissipative: f64,
    /// -Tr[-i[H,σ](log σ - log ρ)].
    pub hamiltonian: f64,
}

pub fn entropy_production_full(l: &Lindbladian, sigma: &DensityMatrix) -> Result<EntropyProductionBreakdown> {
    let grid = &l.grid;
    let se = to_eigen_state(grid, sigma)?;
    let o = log_ratio_eigen(grid, l.fp.beta, &se)?;
    let per_jump: Vec<f64> = l.locals.iter().map(|loc| -trace(&(loc.apply_e(se.matrix()) * &o)).re).collect();
    let e = &grid.energies;
    let d = e.len();
    let ham = CMat::from_fn(d, d, |i, k| se.matrix()[(i, k)] * c(0.0, -(e[i] - e[k])));
    let hamiltonian = if l.hamiltonian_part { -trace(&(ham * &o)).re } else { 0.0 };
    Ok(EntropyProductionBreakdown { dissipative: l.eta * per_jump.iter().sum::<f64>(), per_jump, hamiltonian })
}

/// Ingredients shared by the gradient-form integrals.
struct GradientData {
    lambdas: Vec<f64>,
    /// rows: nonzero Bohr components p, columns: (k, l) of [A_p, O] in σ's eigenbasis.
    y: CMat,
    freqs: Vec<f64>,
}

fn gradient_data(local: &LocalLindbladian, sigma: &DensityMatrix) -> Result<GradientData> {
    let grid = &local.grid;
    let se = to_eigen_state(grid, sigma)?;
    let o = log_ratio_eigen(grid, local.fp.beta, &se)?;
    let eig: &HermEig = se.eig();
    let w = &eig.vectors;
    let d = grid.dim();
    let comps = grid.eigen_components(local.jump_eigen());
    let mut rows = Vec::new();
    let mut freqs = Vec::new();
    for (p, a) in comps.iter().enumerate() {
        if a.iter().all(|z| *z == ZERO) {
            continue;
        }
        let yp = w.adjoint() * commutator(a, &o) * w;
        rows.push(yp);
        freqs.push(grid.frequencies[p]);
    }
    let mut y = CMat::zeros(rows.len(), d * d);
    for (p, yp) in rows.iter().enumerate() {
        for k in 0..d {
            for l in 0..d {
                y[(p, k * d + l)] = yp[(k, l)];
            }
        }
    }
    Ok(GradientData { lambdas: eig.values.clone(), y, freqs })
}

/// ∫ ds over `intervals` of Σ_kl λ_k^{1/2+s} λ_l^{1/2-s} Σ_pq conj(Y^p_kl) Y^q_kl J_s(ν_p,ν_q) kernel(s, ν_q - ν_p).
fn gradient_integral(
    data: &GradientData,
    fp: FilterParams,
    kernel: &(dyn Fn(f64, f64) -> f64 + Sync),
    intervals: &[(f64, f64)],
    nodes: usize,
) -> f64 {
    let np = data.freqs.len();
    if np == 0 {
        return 0.0;
    }
    let d = data.lambdas.len();
    let lam: Vec<f64> = data.lambdas.iter().map(|&v| v.max(LOG_FLOOR)).collect();
    let mut pts = Vec::new();
    for &(a, b) in intervals {
        let r = Rule::legendre(nodes, a, b);
        pts.extend(r.nodes.into_iter().zip(r.weights));
    }
    pts.par_iter()
        .map(|&(s, wt)| {
            let h = PiecewiseExp::dirichlet_frequency(fp, s);
            let mut m = CMat::zeros(np, np);
            for p in 0..np {
                for q in p..np {
                    let j = h.pair_integral(fp.sigma, data.freqs[p], data.freqs[q]);
                    m[(p, q)] = c(j * kernel(s, data.freqs[q] - data.freqs[p]), 0.0);
                    m[(q, p)] = c(j * kernel(s, data.freqs[p] - data.freqs[q]), 0.0);
                }
            }
            let z = &m * &data.y;
            let mut acc = 0.0;
            for k in 0..d {
                for l in 0..d {
                    let weight = lam[k].powf(0.5 + s) * lam[l].powf(0.5 - s);
                    let col = k * d + l;
                    let mut inner = ZERO;
                    for p in 0..np {
                        inner += data.y[(p, col)].conj() * z[(p, col)];
                    }
                    acc += weight * inner.re;
                }
            }
            wt * acc
        })
        .sum()
}

fn gated(eval: impl Fn(usize) -> f64, nodes: usize) -> Result<f64> {
    let coarse = eval(nodes);
    let fine = eval(2 * nodes);
    let shift = (fine - coarse).abs();
    let scale = fine.abs().max(1e-300);
    if shift > NODE_DOUBLING_TOL * scale && shift > 1e-14 {
        return Err(Error::Quadrature { shift: shift / scale, tol: NODE_DOUBLING_TOL });
    }
    Ok(fine)
}

/// Fisher information FI_a of σ relative to the Gibbs state, by Gauss-Legendre over s with a
/// node-doubling convergence gate.
pub fn fisher_information(local: &LocalLindbladian, sigma: &DensityMatrix, s_nodes: usize) -> Result<f64> {
    let data = gradient_data(local, sigma)?;
    let filters = SWeightedFilters::new(local.fp);
    let kernel = move |s: f64, dlt: f64| filters.g_fourier(s, dlt);
    gated(|n| gradient_integral(&data, local.fp, &kernel, &[(-0.5, 0.5)], n), s_nodes)
}

/// Nonzero Bohr components of the jump (eigenbasis) with their frequencies.
fn components(local: &LocalLindbladian) -> Vec<(usize, CMat)> {
    local
        .grid
        .eigen_components(local.jump_eigen())
        .into_iter()
        .enumerate()
        .filter(|(_, m)| m.iter().any(|z| *z != ZERO))
        .collect()
}

fn adb_direct(local: &LocalLindbladian, sigma: &DensityMatrix, with_time: bool) -> Result<f64> {
    let grid = &local.grid;
    let se = grid.to_eigen(sigma.matrix());
    let sq = HermEig::new(&se)?.apply_fn(|v| v.max(0.0).sqrt());
    let beta = local.fp.beta;
    let wf = WeightFunctions::new(local.fp);
    let comps = components(local);
    let zs: Vec<CMat> = comps
        .iter()
        .map(|(p, a)| a * &sq - &sq * a * c((beta * grid.frequencies[*p] / 2.0).exp(), 0.0))
        .collect();
    let mut total = 0.0;
    for (i, (p, _)) in comps.iter().enumerate() {
        for (j, (q, _)) in comps.iter().enumerate() {
            let mut k = local.rates.get(*p, *q);
            if with_time {
                k *= wf.g_fourier(grid.frequencies[*q] - grid.frequencies[*p]);
            }
            total += k * crate::linalg::hs_inner(&zs[i], &zs[j]).re;
        }
    }
    Ok(total)
}

/// ADB_a = ∫∫ ‖Â(ω,t)√σ - √σ ρ^{-1/2} Â(ω,t) ρ^{1/2}‖₂² γ(ω) g(t) dω dt.
pub fn adb_error(local: &LocalLindbladian, sigma: &DensityMatrix) -> Result<f64> {
    adb_direct(local, sigma, true)
}

/// The same quantity written as an s-integral of commutators with log σ - log ρ.
pub fn adb_error_gradient_form(local: &LocalLindbladian, sigma: &DensityMatrix, s_nodes: usize) -> Result<f64> {
    let data = gradient_data(local, sigma)?;
    let filters = SWeightedFilters::new(local.fp);
    let kernel = move |s: f64, dlt: f64| filters.g_adb_fourier(s, dlt);
    gated(|n| gradient_integral(&data, local.fp, &kernel, &[(-0.5, 0.0), (0.0, 0.5)], n), s_nodes)
}

/// ∫ ‖Â(ω)√σ - √σ ρ^{-1/2} Â(ω) ρ^{1/2}‖₂² γ(ω) dω.
pub fn adb_error_no_time(local: &LocalLindbladian, sigma: &DensityMatrix) -> Result<f64> {
    adb_direct(local, sigma, false)
}

/// σ_δ = (1-δ)σ + δρ.
pub fn regularize(sigma: &DensityMatrix, rho: &DensityMatrix, delta: f64) -> Result<(DensityMatrix, f64)> {
    if !(0.0..=0.5).contains(&delta) {
        return Err(Error::Invalid(format!("regularization delta {delta} outside [0, 1/2]")));
    }
    if delta == 0.0 {
        return Ok((sigma.clone(), 0.0));
    }
    let m = sigma.matrix() * c(1.0 - delta, 0.0) + rho.matrix() * c(delta, 0.0);
    Ok((DensityMatrix::new(m)?, delta))
}

/// Quantities compared by the slow-entropy-production and local-stationarity inequalities.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct AdbFiRecord {
    pub adb: f64,
    pub fisher: f64,
    pub log_ratio_norm: f64,
    /// FI (1 + log(‖log σ - log ρ‖² ‖A‖² / FI)) with the bracket clamped below at 1.
    pub fisher_bound: f64,
    pub local_stationarity: f64,
    pub sqrt_adb: f64,
}

pub fn adb_vs_fi_report(local: &LocalLindbladian, sigma: &DensityMatrix, s_nodes: usize) -> Result<AdbFiRecord> {
    let adb = adb_error(local, sigma)?.max(0.0);
    let fisher = fisher_information(local, sigma, s_nodes)?;
    let grid = &local.grid;
    let se = to_eigen_state(grid, sigma)?;
    let o = log_ratio_eigen(grid, local.fp.beta, &se)?;
    let log_ratio_norm = op_norm(&o);
    let a_norm = op_norm(local.jump());
    let fisher_bound = if fisher > 0.0 {
        let factor = 1.0 + (log_ratio_norm.powi(2) * a_norm.powi(2) / fisher).ln();
        fisher * factor.max(1.0)
    } else {
        0.0
    };
    let local_stationarity = trace_norm(&local.apply_e(se.matrix()));
    Ok(AdbFiRecord { adb, fisher, log_ratio_norm, fisher_bound, local_stationarity, sqrt_adb: adb.sqrt() })
}

/// Largest κ with √ADB_a ≥ κ ‖L_a[σ]‖₁ over the ensemble.
pub fn fit_stationarity_constant(records: &[AdbFiRecord]) -> Option<f64> {
    records
        .iter()
        .filter(|r| r.local_stationarity > 1e-12)
        .map(|r| r.sqrt_adb / r.local_stationarity)
        .min_by(f64::total_cmp)
}

/// Smallest κ' with ADB_a ≤ κ' FI_a (1 + log(...)) over the ensemble.
pub fn fit_fisher_constant(records: &[AdbFiRecord]) -> Option<f64> {
    records
        .iter()
        .filter(|r| r.fisher_bound > 1e-14)
        .map(|r| r.adb / r.fisher_bound)
        .max_by(f64::total_cmp)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MetastabilityReport {
    pub state_id: String,
    pub eps_meta: f64,
    pub ep: Vec<f64>,
    pub fisher: Vec<f64>,
    pub adb: Vec<f64>,
    pub hamiltonian_ep: f64,
    pub free_energy: f64,
    pub relative_entropy: f64,
    pub delta: f64,
}

impl MetastabilityReport {
    pub fn compute(l: &Lindbladian, sigma: &DensityMatrix, state_id: &str, delta: f64, s_nodes: usize) -> Result<Self> {
        let rho = crate::pauli_ham::DensityMatrix::new(l.grid.from_eigen(&crate::linalg::real_diag(
            &crate::pauli_ham::gibbs_weights(&l.grid.energies, l.fp.beta),
        )))?;
        let (sig, delta) = regularize(sigma, &rho, delta)?;
        let ep = entropy_production_full(l, &sig)?;
        let mut fisher = Vec::new();
        let mut adb = Vec::new();
        for loc in &l.locals {
            fisher.push(fisher_information(loc, &sig, s_nodes)?);
            adb.push(adb_error(loc, &sig)?);
        }
        let h = l.grid.from_eigen(&crate::linalg::real_diag(&l.grid.energies));
        Ok(Self {
            state_id: state_id.to_string(),
            eps_meta: l.stationarity(sig.matrix()),
            ep: ep.per_jump,
            fisher,
            adb,
            hamiltonian_ep: ep.hamiltonian,
            free_energy: free_energy(&sig, &h, l.fp.beta)?,
            relative_entropy: relative_entropy(&sig, &rho)?,
            delta,
        })
    }
}

/// One row of a trajectory table.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub eps_meta: f64,
    pub ep: f64,
    pub fisher: f64,
    pub adb: f64,
}

pub fn write_trajectory_csv(rows: &[TrajectoryRow], out: &mut impl Write) -> Result<()> {
    writeln!(out, "t,eps_meta,ep,fisher,adb")?;
    for r in rows {
        writeln!(out, "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}", r.t, r.eps_meta, r.ep, r.fisher, r.adb)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lindblad::{build_full_lindbladian, build_local_lindbladian};
    use crate::linalg::max_abs;
    use crate::pauli_ham::{diagonalize, gibbs_state, single_qubit_jump_set, HamiltonianSpec, Pauli, Term};
    use crate::random::{component_rng, ginibre, random_density};

    fn fp(beta: f64) -> FilterParams {
        FilterParams::new(beta, None).unwrap()
    }

    fn zz_x(n: usize) -> HamiltonianSpec {
        let mut terms = vec![Term::pauli(&format!("ZZ{}", "I".repeat(n - 2)), 1.0).unwrap()];
        terms.push(Term::pauli(&format!("X{}", "I".repeat(n - 1)), 0.4).unwrap());
        HamiltonianSpec::new(n, terms).unwrap()
    }

    #[test]
    fn filter_facts() {
        let f = SWeightedFilters::new(fp(1.3));
        let w = WeightFunctions::new(fp(1.3));
        let mut sup = 0.0f64;
        for i in 0..=100 {
            let s = -0.5 + i as f64 / 100.0;
            for j in 0..=100 {
                let om = -10.0 + 20.0 * j as f64 / 100.0;
                sup = sup.max(f.h(s, om));
                if i == 0 {
                    assert!((f.h(-0.5, om) - w.gamma(om)).abs() <= 1e-12);
                }
            }
        }
        assert!(sup <= 1.0 + 1e-15);
        for &s in &[-0.45, -0.2, 0.0, 0.3] {
            let bound = 40.0 * 1.3;
            let i = crate::quad::adaptive(|t| f.g(s, t), -bound, bound, 1e-14, 1e-12);
            assert!((i - 0.5).abs() < 1e-9, "{s} {i}");
            let ia = crate::quad::adaptive(|t| f.g_adb(s, t), -bound, bound, 1e-14, 1e-12);
            assert!((ia - 0.5 * (0.5 - s.abs())).abs() < 1e-7, "{s} {ia}");
            for &t in &[0.0, 0.4, 3.0] {
                assert!(f.g(s, t) > 0.0 && f.g_adb(s, t) > 0.0);
            }
            for &nu in &[0.0, 1.1, -2.5] {
                let q = crate::quad::adaptive(|t| f.g(s, t) * (nu * t).cos(), -bound, bound, 1e-14, 1e-12);
                assert!((q - f.g_fourier(s, nu)).abs() < 1e-9);
                let qa = crate::quad::adaptive(|t| f.g_adb(s, t) * (nu * t).cos(), -bound, bound, 1e-14, 1e-12);
                assert!((qa - f.g_adb_fourier(s, nu)).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn weighted_inner_examples() {
        let mut rng = component_rng(20, 0);
        let w = random_density(4, &mut rng);
        let id = CMat::identity(4, 4);
        assert!((weighted_inner(&id, &id, &w, 0.3).unwrap() - c(1.0, 0.0)).norm() < 1e-12);
        let x = ginibre(4, &mut rng);
        let y = ginibre(4, &mut rng);
        let gns = trace(&(x.adjoint() * w.matrix() * &y));
        assert!((weighted_inner(&x, &y, &w, 0.5).unwrap() - gns).norm() < 1e-12);
        for _ in 0..20 {
            let x = ginibre(4, &mut rng);
            let nrm = weighted_inner(&x, &x, &w, 0.0).unwrap();
            assert!(nrm.im.abs() < 1e-12 && nrm.re >= 0.0);
            assert!(nrm.re.sqrt() <= op_norm(&x) + 1e-12);
        }
        assert!(weighted_inner(&x, &y, &w, 0.7).is_err());
    }

    #[test]
    fn free_energy_identities() {
        let h = HamiltonianSpec::single_qubit().unwrap();
        let s = diagonalize(&h).unwrap();
        let rho = gibbs_state(&s, 1.0).unwrap();
        let hm = h.assemble_dense().unwrap();
        let up = DensityMatrix::new(crate::linalg::real_diag(&[1.0, 0.0])).unwrap();
        assert!((free_energy(&up, &hm, 1.0).unwrap() - 1.0).abs() < 1e-14);
        assert!(relative_entropy(&rho, &rho).unwrap().abs() < 1e-12);
        let h2 = HamiltonianSpec::random_2local(3, 5).unwrap();
        let s2 = diagonalize(&h2).unwrap();
        let beta = 0.9;
        let rho2 = gibbs_state(&s2, beta).unwrap();
        let hm2 = h2.assemble_dense().unwrap();
        let mut rng = component_rng(21, 0);
        for _ in 0..5 {
            let sig = random_density(8, &mut rng);
            let d = relative_entropy(&sig, &rho2).unwrap();
            assert!(d >= 0.0);
            let lhs = beta * free_energy(&sig, &hm2, beta).unwrap();
            let rhs = d + beta * free_energy(&rho2, &hm2, beta).unwrap();
            assert!((lhs - rhs).abs() < 1e-10);
        }
    }

    #[test]
    fn ep_zero_at_gibbs_and_singular_rejected() {
        let h = zz_x(2);
        let s = diagonalize(&h).unwrap();
        let rho = gibbs_state(&s, 1.0).unwrap();
        let l = build_local_lindbladian(&s, &Pauli::X.matrix().kronecker(&CMat::identity(2, 2)), fp(1.0)).unwrap();
        assert!(entropy_production(&l, &rho).unwrap().abs() < 1e-12);
        assert!(fisher_information(&l, &rho, 64).unwrap().abs() < 1e-12);
        assert!(adb_error(&l, &rho).unwrap().abs() < 1e-10);
        assert!(adb_error_no_time(&l, &rho).unwrap().abs() < 1e-10);
        let pure = DensityMatrix::new(crate::linalg::real_diag(&[1.0, 0.0, 0.0, 0.0])).unwrap();
        assert!(matches!(entropy_production(&l, &pure), Err(Error::Singular { .. })));
    }

    #[test]
    fn ep_equals_fisher_information() {
        let h = zz_x(2);
        let s = diagonalize(&h).unwrap();
        let mut rng = component_rng(22, 0);
        for j in single_qubit_jump_set(2, &[0, 1]) {
            let l = build_local_lindbladian(&s, &j.to_matrix(), fp(1.0)).unwrap();
            let sig = random_density(4, &mut rng);
            let ep = entropy_production(&l, &sig).unwrap();
            let fi = fisher_information(&l, &sig, 64).unwrap();
            assert!(ep >= -1e-10);
            assert!((fi - ep).abs() <= 1e-8f64.max(1e-4 * ep), "{} EP {ep} FI {fi}", j);
        }
    }

    #[test]
    fn ep_matches_finite_difference() {
        let h = zz_x(2);
        let s = diagonalize(&h).unwrap();
        let rho = gibbs_state(&s, 1.0).unwrap();
        let l = build_local_lindbladian(&s, &Pauli::Y.matrix().kronecker(&CMat::identity(2, 2)), fp(1.0)).unwrap();
        let sig = random_density(4, &mut component_rng(23, 0));
        let eps = 1e-6;
        let step = crate::linalg::expm(&(l.superop_e() * c(eps, 0.0)));
        let se = l.grid.to_eigen(sig.matrix());
        let moved = crate::linalg::unvectorize(&(step * crate::linalg::vectorize(&se)), 4);
        let moved = DensityMatrix::new(l.grid.from_eigen(&moved)).unwrap();
        let fd = -(relative_entropy(&moved, &rho).unwrap() - relative_entropy(&sig, &rho).unwrap()) / eps;
        let ep = entropy_production(&l, &sig).unwrap();
        assert!((fd - ep).abs() <= 1e-4 * ep.abs(), "{fd} vs {ep}");
    }

    #[test]
    fn adb_two_forms_agree() {
        let h = zz_x(2);
        let s = diagonalize(&h).unwrap();
        let mut rng = component_rng(24, 0);
        for j in single_qubit_jump_set(2, &[0, 1]) {
            let l = build_local_lindbladian(&s, &j.to_matrix(), fp(1.0)).unwrap();
            let sig = random_density(4, &mut rng);
            let a = adb_error(&l, &sig).unwrap();
            let b = adb_error_gradient_form(&l, &sig, 64).unwrap();
            assert!(a >= 0.0);
            assert!((a - b).abs() <= 1e-5 * a, "{a} vs {b}");
            let nt = adb_error_no_time(&l, &sig).unwrap();
            assert!(nt.is_finite() && nt >= 0.0);
        }
    }

    #[test]
    fn identity_jump_has_no_adb() {
        let s = diagonalize(&zz_x(2)).unwrap();
        let l = build_local_lindbladian(&s, &CMat::identity(4, 4), fp(1.0)).unwrap();
        let sig = random_density(4, &mut component_rng(25, 0));
        assert!(adb_error(&l, &sig).unwrap().abs() < 1e-12);
    }

    #[test]
    fn adb_no_time_two_level_by_hand() {
        // H = Z, A = X, diagonal σ = diag(p, 1-p): two components with ν = ±2.
        let beta = 1.0;
        let s = diagonalize(&HamiltonianSpec::single_qubit().unwrap()).unwrap();
        let l = build_local_lindbladian(&s, &Pauli::X.matrix(), fp(beta)).unwrap();
        let p: f64 = 0.3;
        let sig = DensityMatrix::new(crate::linalg::real_diag(&[p, 1.0 - p])).unwrap();
        let gamma = PiecewiseExp::metropolis(fp(beta));
        // eigenbasis energies ascending: E = (-1, 1); state (1-p) on E=-1, p on E=+1
        let (q0, q1) = ((1.0 - p).sqrt(), p.sqrt());
        // component ν = +2 maps E=-1 -> E=+1, entry (1,0); ν = -2 entry (0,1)
        let up = (q0 - (beta).exp() * q1).powi(2);
        let down = (q1 - (-beta).exp() * q0).powi(2);
        let k = |nu: f64| gamma.pair_integral(1.0, nu, nu);
        let hand = k(2.0) * up + k(-2.0) * down;
        assert!((adb_error_no_time(&l, &sig).unwrap() - hand).abs() < 1e-12);
    }

    #[test]
    fn classical_fisher_matches_enumeration() {
        // diagonal H and σ: the generator restricted to populations is a Markov chain
        let h = HamiltonianSpec::ising_chain(2, 0.0).unwrap();
        let s = diagonalize(&h).unwrap();
        let beta = 1.0;
        let rho = gibbs_state(&s, beta).unwrap();
        let a = crate::pauli_ham::PauliString::parse("XI").unwrap().to_matrix();
        let l = build_local_lindbladian(&s, &a, fp(beta)).unwrap();
        let pops = [0.1, 0.2, 0.3, 0.4];
        let sig = DensityMatrix::new(crate::linalg::real_diag(&pops)).unwrap();
        let pi: Vec<f64> = (0..4).map(|i| rho.matrix()[(i, i)].re).collect();
        let mut q = [[0.0; 4]; 4];
        for (x, row) in q.iter_mut().enumerate() {
            let mut e = CMat::zeros(4, 4);
            e[(x, x)] = c(1.0, 0.0);
            let out = l.apply(&e);
            for (y, v) in row.iter_mut().enumerate() {
                *v = out[(y, y)].re;
            }
        }
        let f: Vec<f64> = (0..4).map(|x| pops[x] / pi[x]).collect();
        let mut fisher = 0.0;
        for x in 0..4 {
            for y in 0..4 {
                if x == y {
                    continue;
                }
                let lr = (f[y] / f[x]).ln();
                let s_int = Rule::legendre(40, 0.0, 1.0).integrate(|s| f[x].powf(1.0 - s) * f[y].powf(s));
                fisher += 0.5 * pi[x] * q[x][y] * s_int * lr * lr;
            }
        }
        let fi = fisher_information(&l, &sig, 64).unwrap();
        assert!((fi - fisher).abs() < 1e-9 * fisher.max(1.0), "{fi} vs {fisher}");
    }

    #[test]
    fn regularize_examples() {
        let s = diagonalize(&zz_x(2)).unwrap();
        let rho = gibbs_state(&s, 1.0).unwrap();
        let sig = random_density(4, &mut component_rng(26, 0));
        let (same, _) = regularize(&sig, &rho, 0.0).unwrap();
        assert_eq!(same.matrix(), sig.matrix());
        assert!(regularize(&sig, &rho, 1.0).is_err());
        let (mid, _) = regularize(&sig, &rho, 0.5).unwrap();
        assert!(max_abs(&(mid.matrix() - (sig.matrix() + rho.matrix()) * c(0.5, 0.0))) < 1e-15);
        let pure = DensityMatrix::new(crate::linalg::real_diag(&[0.0, 1.0, 0.0, 0.0])).unwrap();
        let delta = 1e-3;
        let (sd, _) = regularize(&pure, &rho, delta).unwrap();
        assert!(sd.min_eigenvalue() >= delta * rho.min_eigenvalue() * (1.0 - 1e-9));
        let bound = (1.0 / delta).ln() + op_norm(&log_state(&rho).unwrap());
        assert!(op_norm(&log_state(&sd).unwrap()) <= bound + 1.0);
        let l = build_full_lindbladian(&s, &[Pauli::X.matrix().kronecker(&CMat::identity(2, 2))], fp(1.0), 1.0).unwrap();
        let (sd, _) = regularize(&sig, &rho, 0.2).unwrap();
        let lhs = l.stationarity(sd.matrix());
        assert!((lhs - 0.8 * l.stationarity(sig.matrix())).abs() < 1e-12);
    }

    #[test]
    fn report_examples() {
        let s = diagonalize(&zz_x(2)).unwrap();
        let rho = gibbs_state(&s, 1.0).unwrap();
        let a = Pauli::X.matrix().kronecker(&CMat::identity(2, 2));
        let l = build_local_lindbladian(&s, &a, fp(1.0)).unwrap();
        let at_rho = adb_vs_fi_report(&l, &rho, 64).unwrap();
        assert!(at_rho.adb.abs() < 1e-10 && at_rho.fisher.abs() < 1e-12 && at_rho.local_stationarity < 1e-10);
        let far = DensityMatrix::new(crate::linalg::real_diag(&[0.05, 0.05, 0.1, 0.8])).unwrap();
        let far = DensityMatrix::new(l.grid.from_eigen(&l.grid.to_eigen(far.matrix()))).unwrap();
        let r = adb_vs_fi_report(&l, &far, 64).unwrap();
        assert!(r.adb > 0.0 && r.fisher > 0.0 && r.fisher_bound >= r.fisher && r.local_stationarity > 0.0);
        let full = build_full_lindbladian(&s, &[a], fp(1.0), 1.0).unwrap();
        let rep = MetastabilityReport::compute(&full, &far, "far", 0.0, 64).unwrap();
        assert!(rep.hamiltonian_ep.abs() < 1e-10);
        let mut buf = Vec::new();
        write_trajectory_csv(&[TrajectoryRow { t: 0.0, eps_meta: 1.0, ep: 2.0, fisher: 2.0, adb: 0.5 }], &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("t,eps_meta"));
    }
}
