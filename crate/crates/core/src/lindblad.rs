//! Detailed-balanced Lindbladians built from Gaussian-filtered jumps with the
//! shifted-Metropolis weight, their evolution and time averages, and the
//! Dirichlet form.
//!
//! Everything is assembled in the energy eigenbasis. A jump A with eigenbasis
//! elements A_ij (Bohr frequency ν_ij = E_i - E_j) gives
//!
//! ```text
//! L_a[ρ]_ik = Σ_jl A_ij conj(A_kl) K(ν_ij, ν_kl) ρ_jl - ½{G, ρ}_ik - i[C, ρ]_ik
//! G_jl      = Σ_i conj(A_ij) A_il K(ν_ij, ν_il)
//! C_jl      = (i/2) tanh(β(E_j - E_l)/4) G_jl
//! ```
//!
//! where K(ν₁, ν₂) = ∫ γ(ω) f̂(ω-ν₁) f̂(ω-ν₂) dω is evaluated in closed form.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, hermiticity_defect, trace_norm, unvectorize, vectorize, CMat, CVec, HermEig, ZERO};
use crate::ode::{self, OdeTolerance};
use crate::pauli_ham::{DensityMatrix, HamiltonianSpec, Spectrum};
use crate::quad;
use crate::spectral::{BohrGrid, FilterParams, PiecewiseExp};

/// Largest qubit count for which the explicit 4^n x 4^n superoperator is formed.
pub const DEFAULT_DENSE_MAX_QUBITS: usize = 5;

/// Frequency and time filters of the construction.
#[derive(Clone, Copy, Debug)]
pub struct WeightFunctions {
    pub fp: FilterParams,
}

impl WeightFunctions {
    pub fn new(fp: FilterParams) -> Self {
        Self { fp }
    }

    /// γ(ω) = exp(-β max(ω + βσ²/2, 0)).
    pub fn gamma(&self, omega: f64) -> f64 {
        let b = self.fp.beta;
        (-b * (omega + b * self.fp.sigma * self.fp.sigma / 2.0).max(0.0)).exp()
    }

    /// h(ω) = e^{-σ²β²/8} e^{-|ω|β/2}.
    pub fn h(&self, omega: f64) -> f64 {
        let b = self.fp.beta;
        (-self.fp.sigma * self.fp.sigma * b * b / 8.0 - omega.abs() * b / 2.0).exp()
    }

    /// g(t) = 1/(β cosh(2πt/β)).
    pub fn g(&self, t: f64) -> f64 {
        let b = self.fp.beta;
        1.0 / (b * (2.0 * PI * t / b).cosh())
    }

    /// c(t) = 1/(β sinh(2πt/β)); singular at 0.
    pub fn c(&self, t: f64) -> f64 {
        let b = self.fp.beta;
        1.0 / (b * (2.0 * PI * t / b).sinh())
    }

    /// ∫ g(t) e^{iΔt} dt = 1/(2 cosh(βΔ/4)).
    pub fn g_fourier(&self, delta: f64) -> f64 {
        0.5 / (self.fp.beta * delta / 4.0).cosh()
    }

    /// Imaginary part of the principal value ∫ c(t) e^{iνt} dt, which is (1/2) tanh(βν/4).
    pub fn coherent_fourier(&self, nu: f64) -> f64 {
        0.5 * (self.fp.beta * nu / 4.0).tanh()
    }

    /// The same principal value by symmetric truncation [-T,-ε] ∪ [ε,T] and Richardson
    /// extrapolation in ε. The symmetrised integrand 2 c(t) sin(νt) is regular at 0, so the
    /// truncation error is odd in ε.
    pub fn coherent_fourier_pv(&self, nu: f64) -> f64 {
        let b = self.fp.beta;
        let t_max = 7.0 * b;
        let trunc = |eps: f64| {
            let mut breaks: Vec<f64> = vec![eps];
            let mut x = eps;
            while x < t_max {
                x = (x * 4.0).min(t_max);
                breaks.push(x);
            }
            quad::adaptive_pieces(|t| 2.0 * self.c(t) * (nu * t).sin(), &breaks, 1e-16, 1e-14)
        };
        let eps = 1e-2 * b;
        let (i1, i2, i3) = (trunc(eps), trunc(eps / 2.0), trunc(eps / 4.0));
        let r1 = 2.0 * i2 - i1;
        let r2 = 2.0 * i3 - i2;
        (8.0 * r2 - r1) / 7.0
    }
}

/// Closed-form (or quadrature) table of ∫ w(ω) f̂(ω-ν_p) f̂(ω-ν_q) dω over frequency pairs.
#[derive(Clone, Debug)]
pub struct PairTable {
    pub weight: PiecewiseExp,
    pub sigma: f64,
    pub frequencies: Vec<f64>,
    values: Option<Vec<f64>>,
    by_quadrature: bool,
}

/// Tables with more entries than this are evaluated on the fly.
const PAIR_TABLE_MAX: usize = 1 << 24;

impl PairTable {
    pub fn new(weight: PiecewiseExp, sigma: f64, frequencies: &[f64], by_quadrature: bool) -> Self {
        let n = frequencies.len();
        let mut t = Self { weight, sigma, frequencies: frequencies.to_vec(), values: None, by_quadrature };
        if n * n <= PAIR_TABLE_MAX {
            let vals: Vec<f64> = (0..n * n)
                .into_par_iter()
                .map(|k| {
                    let (p, q) = (k / n, k % n);
                    if q < p {
                        return f64::NAN;
                    }
                    t.compute(p, q)
                })
                .collect();
            let mut vals = vals;
            for p in 0..n {
                for q in 0..p {
                    vals[p * n + q] = vals[q * n + p];
                }
            }
            t.values = Some(vals);
        }
        t
    }

    fn compute(&self, p: usize, q: usize) -> f64 {
        let (a, b) = (self.frequencies[p], self.frequencies[q]);
        if self.by_quadrature {
            self.weight.pair_integral_quadrature(self.sigma, a, b)
        } else {
            self.weight.pair_integral(self.sigma, a, b)
        }
    }

    #[inline]
    pub fn get(&self, p: usize, q: usize) -> f64 {
        match &self.values {
            Some(v) => v[p * self.frequencies.len() + q],
            None => self.compute(p, q),
        }
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    pub fn row(&self, p: usize) -> Option<&[f64]> {
        let n = self.frequencies.len();
        self.values.as_ref().map(|v| &v[p * n..(p + 1) * n])
    }
}

/// One jump's dissipative generator together with its coherent correction.
#[derive(Clone, Debug)]
pub struct LocalLindbladian {
    pub grid: Arc<BohrGrid>,
    pub fp: FilterParams,
    pub rates: Arc<PairTable>,
    jump: CMat,
    jump_e: CMat,
    coherent_e: CMat,
    decay_e: CMat,
}

impl LocalLindbladian {
    pub fn build(grid: Arc<BohrGrid>, rates: Arc<PairTable>, jump: &CMat, fp: FilterParams) -> Result<Self> {
        let d = grid.dim();
        if jump.nrows() != d || jump.ncols() != d {
            return Err(Error::Dimension(format!("jump is {}x{}, expected {d}x{d}", jump.nrows(), jump.ncols())));
        }
        if hermiticity_defect(jump) > 1e-12 {
            return Err(Error::NonHermitian("jump operator".into()));
        }
        let jump_e = grid.to_eigen(jump);
        let mut decay_e = CMat::zeros(d, d);
        for j in 0..d {
            for l in 0..d {
                let mut acc = ZERO;
                for i in 0..d {
                    let a = jump_e[(i, j)];
                    let b = jump_e[(i, l)];
                    if a == ZERO || b == ZERO {
                        continue;
                    }
                    acc += a.conj() * b * rates.get(grid.freq_index(i, j), grid.freq_index(i, l));
                }
                decay_e[(j, l)] = acc;
            }
        }
        let w = WeightFunctions::new(fp);
        let coherent_e = CMat::from_fn(d, d, |j, l| {
            decay_e[(j, l)] * c(0.0, w.coherent_fourier(grid.energies[j] - grid.energies[l]))
        });
        Ok(Self { grid, fp, rates, jump: jump.clone(), jump_e, coherent_e, decay_e })
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn jump(&self) -> &CMat {
        &self.jump
    }

    pub fn jump_eigen(&self) -> &CMat {
        &self.jump_e
    }

    pub fn coherent(&self) -> CMat {
        self.grid.from_eigen(&self.coherent_e)
    }

    pub fn coherent_eigen(&self) -> &CMat {
        &self.coherent_e
    }

    /// ∫ γ Â†Â dω.
    pub fn decay(&self) -> CMat {
        self.grid.from_eigen(&self.decay_e)
    }

    pub fn decay_eigen(&self) -> &CMat {
        &self.decay_e
    }

    fn transition_e(&self, r: &CMat) -> CMat {
        let d = self.dim();
        let a = &self.jump_e;
        let g = &self.grid;
        let nz: Vec<(usize, usize, Complex64)> = (0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .filter(|&(i, j)| a[(i, j)] != ZERO)
            .map(|(i, j)| (i, j, a[(i, j)]))
            .collect();
        let cols: Vec<Vec<Complex64>> = (0..d)
            .into_par_iter()
            .map(|k| {
                let mut col = vec![ZERO; d];
                for &(i, j, aij) in &nz {
                    let pij = g.freq_index(i, j);
                    let mut acc = ZERO;
                    match self.rates.row(pij) {
                        Some(row) => {
                            for l in 0..d {
                                let akl = a[(k, l)];
                                if akl != ZERO {
                                    acc += akl.conj() * row[g.freq_index(k, l)] * r[(j, l)];
                                }
                            }
                        }
                        None => {
                            for l in 0..d {
                                let akl = a[(k, l)];
                                if akl != ZERO {
                                    acc += akl.conj() * self.rates.get(pij, g.freq_index(k, l)) * r[(j, l)];
                                }
                            }
                        }
                    }
                    col[i] += aij * acc;
                }
                col
            })
            .collect();
        CMat::from_fn(d, d, |i, k| cols[k][i])
    }

    fn transition_adj_e(&self, o: &CMat) -> CMat {
        let d = self.dim();
        let a = &self.jump_e;
        let g = &self.grid;
        let mut out = CMat::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                let aij = a[(i, j)];
                if aij == ZERO {
                    continue;
                }
                let pij = g.freq_index(i, j);
                for k in 0..d {
                    let oik = o[(i, k)];
                    if oik == ZERO {
                        continue;
                    }
                    for l in 0..d {
                        let akl = a[(k, l)];
                        if akl != ZERO {
                            out[(j, l)] += aij.conj() * akl * oik * self.rates.get(pij, g.freq_index(k, l));
                        }
                    }
                }
            }
        }
        out
    }

    /// L_a[ρ] with ρ given in the eigenbasis.
    pub fn apply_e(&self, r: &CMat) -> CMat {
        let gr = &self.decay_e * r;
        let rg = r * &self.decay_e;
        let cr = &self.coherent_e * r;
        let rc = r * &self.coherent_e;
        self.transition_e(r) - (gr + rg) * c(0.5, 0.0) - (cr - rc) * c(0.0, 1.0)
    }

    /// L_a†[O] with O in the eigenbasis.
    pub fn apply_adj_e(&self, o: &CMat) -> CMat {
        let go = &self.decay_e * o;
        let og = o * &self.decay_e;
        let co = &self.coherent_e * o;
        let oc = o * &self.coherent_e;
        self.transition_adj_e(o) - (go + og) * c(0.5, 0.0) + (co - oc) * c(0.0, 1.0)
    }

    pub fn apply(&self, r: &CMat) -> CMat {
        self.grid.from_eigen(&self.apply_e(&self.grid.to_eigen(r)))
    }

    pub fn apply_adj(&self, o: &CMat) -> CMat {
        self.grid.from_eigen(&self.apply_adj_e(&self.grid.to_eigen(o)))
    }

    /// Adds `scale` times this generator, as a column-stacking superoperator in the eigenbasis.
    pub fn add_superop_e(&self, s: &mut CMat, scale: f64) {
        let d = self.dim();
        let a = &self.jump_e;
        let g = &self.grid;
        let k = c(scale, 0.0);
        for i in 0..d {
            for j in 0..d {
                let aij = a[(i, j)];
                if aij == ZERO {
                    continue;
                }
                let pij = g.freq_index(i, j);
                for kk in 0..d {
                    for l in 0..d {
                        let akl = a[(kk, l)];
                        if akl != ZERO {
                            s[(i + kk * d, j + l * d)] += k * aij * akl.conj() * self.rates.get(pij, g.freq_index(kk, l));
                        }
                    }
                }
            }
        }
        let half = c(-0.5 * scale, 0.0);
        let mi = c(0.0, -scale);
        for i in 0..d {
            for kk in 0..d {
                let row = i + kk * d;
                for j in 0..d {
                    // (G ρ)_ik and -i(C ρ)_ik pick ρ_jk
                    s[(row, j + kk * d)] += half * self.decay_e[(i, j)] + mi * self.coherent_e[(i, j)];
                    // (ρ G)_ik and +i(ρ C)_ik pick ρ_ij
                    s[(row, i + j * d)] += half * self.decay_e[(j, kk)] - mi * self.coherent_e[(j, kk)];
                }
            }
        }
    }

    pub fn superop_e(&self) -> CMat {
        let d2 = self.dim() * self.dim();
        let mut s = CMat::zeros(d2, d2);
        self.add_superop_e(&mut s, 1.0);
        s
    }
}

/// Options controlling evaluation strategy.
#[derive(Clone, Copy, Debug)]
pub struct LindbladOptions {
    pub dense_max_qubits: usize,
    pub quadrature_fallback: bool,
    pub ode: OdeTolerance,
}

impl Default for LindbladOptions {
    fn default() -> Self {
        Self { dense_max_qubits: DEFAULT_DENSE_MAX_QUBITS, quadrature_fallback: false, ode: OdeTolerance::default() }
    }
}

/// L = -i[H, ·] + η Σ_a L_a (the Hamiltonian part can be switched off for local generators).
#[derive(Clone, Debug)]
pub struct Lindbladian {
    pub grid: Arc<BohrGrid>,
    pub fp: FilterParams,
    pub eta: f64,
    pub locals: Vec<LocalLindbladian>,
    pub hamiltonian_part: bool,
    pub options: LindbladOptions,
    superop: OnceLock<CMat>,
}

/// Builds the single-jump generator L_a.
pub fn build_local_lindbladian(spec: &Spectrum, jump: &CMat, fp: FilterParams) -> Result<LocalLindbladian> {
    let grid = Arc::new(BohrGrid::new(spec));
    let rates = Arc::new(PairTable::new(PiecewiseExp::metropolis(fp), fp.sigma, &grid.frequencies, false));
    LocalLindbladian::build(grid, rates, jump, fp)
}

/// Builds the full generator for a jump list.
pub fn build_full_lindbladian(spec: &Spectrum, jumps: &[CMat], fp: FilterParams, eta: f64) -> Result<Lindbladian> {
    Lindbladian::build(spec, jumps, fp, eta, LindbladOptions::default())
}

impl Lindbladian {
    pub fn build(spec: &Spectrum, jumps: &[CMat], fp: FilterParams, eta: f64, options: LindbladOptions) -> Result<Self> {
        let n = spec.dim().trailing_zeros() as usize;
        if n > crate::pauli_ham::DEFAULT_MAX_SUPEROP_QUBITS.max(options.dense_max_qubits) {
            return Err(Error::Resource(format!("{n} qubits exceeds the superoperator limit")));
        }
        let grid = Arc::new(BohrGrid::new(spec));
        let rates = Arc::new(PairTable::new(
            PiecewiseExp::metropolis(fp),
            fp.sigma,
            &grid.frequencies,
            options.quadrature_fallback,
        ));
        let locals = jumps
            .iter()
            .map(|a| LocalLindbladian::build(grid.clone(), rates.clone(), a, fp))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { grid, fp, eta, locals, hamiltonian_part: true, options, superop: OnceLock::new() })
    }

    pub fn from_hamiltonian(h: &HamiltonianSpec, jumps: &[CMat], fp: FilterParams, eta: f64) -> Result<Self> {
        let spec = crate::pauli_ham::diagonalize(h)?;
        Self::build(&spec, jumps, fp, eta, LindbladOptions::default())
    }

    /// Σ_{a in subset} L_a without the Hamiltonian commutator, η = 1.
    pub fn local_sum(&self, subset: &[usize]) -> Self {
        Self {
            grid: self.grid.clone(),
            fp: self.fp,
            eta: 1.0,
            locals: subset.iter().map(|&k| self.locals[k].clone()).collect(),
            hamiltonian_part: false,
            options: self.options,
            superop: OnceLock::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn qubits(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    pub fn apply_e(&self, r: &CMat) -> CMat {
        let d = self.dim();
        let mut out = CMat::zeros(d, d);
        if self.hamiltonian_part {
            let e = &self.grid.energies;
            out = CMat::from_fn(d, d, |i, k| r[(i, k)] * c(0.0, -(e[i] - e[k])));
        }
        for l in &self.locals {
            out += l.apply_e(r) * c(self.eta, 0.0);
        }
        out
    }

    pub fn apply_adj_e(&self, o: &CMat) -> CMat {
        let d = self.dim();
        let mut out = CMat::zeros(d, d);
        if self.hamiltonian_part {
            let e = &self.grid.energies;
            out = CMat::from_fn(d, d, |i, k| o[(i, k)] * c(0.0, e[i] - e[k]));
        }
        for l in &self.locals {
            out += l.apply_adj_e(o) * c(self.eta, 0.0);
        }
        out
    }

    pub fn apply(&self, r: &CMat) -> CMat {
        self.grid.from_eigen(&self.apply_e(&self.grid.to_eigen(r)))
    }

    pub fn apply_adj(&self, o: &CMat) -> CMat {
        self.grid.from_eigen(&self.apply_adj_e(&self.grid.to_eigen(o)))
    }

    pub fn dense_allowed(&self) -> bool {
        self.qubits() <= self.options.dense_max_qubits
    }

    /// Column-stacking superoperator in the eigenbasis.
    pub fn superop_e(&self) -> Result<&CMat> {
        if !self.dense_allowed() {
            return Err(Error::Resource(format!(
                "dense superoperator needs n <= {}, have {}",
                self.options.dense_max_qubits,
                self.qubits()
            )));
        }
        Ok(self.superop.get_or_init(|| {
            let d = self.dim();
            let mut s = CMat::zeros(d * d, d * d);
            if self.hamiltonian_part {
                let e = &self.grid.energies;
                for i in 0..d {
                    for k in 0..d {
                        s[(i + k * d, i + k * d)] += c(0.0, -(e[i] - e[k]));
                    }
                }
            }
            for l in &self.locals {
                l.add_superop_e(&mut s, self.eta);
            }
            s
        }))
    }

    /// e^{tL}[X] for an arbitrary operator X (computational basis).
    pub fn evolve_operator(&self, x: &CMat, t: f64) -> Result<CMat> {
        if t < 0.0 {
            return Err(Error::Invalid(format!("negative time {t}")));
        }
        let d = self.dim();
        let xe = self.grid.to_eigen(x);
        let out = if self.dense_allowed() {
            let s = self.superop_e()? * c(t, 0.0);
            unvectorize(&(crate::linalg::expm(&s) * vectorize(&xe)), d)
        } else {
            let f = |v: &CVec| vectorize(&self.apply_e(&unvectorize(v, d)));
            let (y, _) = ode::integrate(&f, &vectorize(&xe), t, self.options.ode)?;
            unvectorize(&y, d)
        };
        Ok(self.grid.from_eigen(&out))
    }

    pub fn evolve(&self, sigma: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
        DensityMatrix::new(crate::linalg::hermitian_part(&self.evolve_operator(sigma.matrix(), t)?))
    }

    /// (1/t) ∫₀ᵗ e^{sL}[X] ds, exactly via the augmented exponential when dense,
    /// otherwise by integrating the augmented linear flow.
    pub fn time_average_operator(&self, x: &CMat, t: f64) -> Result<CMat> {
        if t < 0.0 {
            return Err(Error::Invalid(format!("negative time {t}")));
        }
        if t == 0.0 {
            return Ok(x.clone());
        }
        let d = self.dim();
        let xe = self.grid.to_eigen(x);
        let out = if self.dense_allowed() {
            let s = self.superop_e()? * c(t, 0.0);
            unvectorize(&crate::linalg::phi1_apply(&s, &vectorize(&xe)), d)
        } else {
            let d2 = d * d;
            let f = |v: &CVec| {
                let y = unvectorize(&v.rows(0, d2).into_owned(), d);
                let mut out = CVec::zeros(2 * d2);
                out.rows_mut(0, d2).copy_from(&vectorize(&self.apply_e(&y)));
                out.rows_mut(d2, d2).copy_from(&v.rows(0, d2));
                out
            };
            let mut y0 = CVec::zeros(2 * d2);
            y0.rows_mut(0, d2).copy_from(&vectorize(&xe));
            let (y, _) = ode::integrate(&f, &y0, t, self.options.ode)?;
            unvectorize(&(y.rows(d2, d2).into_owned() / c(t, 0.0)), d)
        };
        Ok(self.grid.from_eigen(&out))
    }

    pub fn time_average(&self, sigma: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
        DensityMatrix::new(crate::linalg::hermitian_part(&self.time_average_operator(sigma.matrix(), t)?))
    }

    /// Time average by composite Gauss-Legendre over [0, t], as an independent check.
    pub fn time_average_quadrature(&self, x: &CMat, t: f64, nodes: usize, panels: usize) -> Result<CMat> {
        let breaks: Vec<f64> = (0..=panels).map(|k| t * k as f64 / panels as f64).collect();
        let rule = quad::Rule::composite(nodes, &breaks);
        let mut acc = CMat::zeros(self.dim(), self.dim());
        for (s, w) in rule.nodes.iter().zip(&rule.weights) {
            acc += self.evolve_operator(x, *s)? * c(*w / t, 0.0);
        }
        Ok(acc)
    }

    /// ‖L[ρ]‖₁.
    pub fn stationarity(&self, sigma: &CMat) -> f64 {
        trace_norm(&self.apply(sigma))
    }
}

/// max over random X, Y of |⟨X, L†Y⟩_ρ - ⟨L†X, Y⟩_ρ| / (‖X‖ ‖Y‖) in the KMS inner product.
pub fn kms_detailed_balance_residual(
    apply_adj: &dyn Fn(&CMat) -> CMat,
    rho: &DensityMatrix,
    trials: usize,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let d = rho.dim();
    let sq = rho.eig().apply_fn(|x| x.max(0.0).sqrt());
    let kms = |x: &CMat, y: &CMat| crate::linalg::hs_inner(x, &(&sq * y * &sq));
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let x = crate::random::ginibre(d, rng);
        let y = crate::random::ginibre(d, rng);
        let lhs = kms(&x, &apply_adj(&y));
        let rhs = kms(&apply_adj(&x), &y);
        let scale = crate::linalg::op_norm(&x) * crate::linalg::op_norm(&y);
        worst = worst.max((lhs - rhs).norm() / scale);
    }
    worst
}

/// Smallest eigenvalue of the Choi matrix of a column-stacking superoperator.
pub fn choi_min_eigenvalue(superop: &CMat, d: usize) -> Result<f64> {
    let mut choi = CMat::zeros(d * d, d * d);
    for j in 0..d {
        for l in 0..d {
            let col = j + l * d;
            for i in 0..d {
                for k in 0..d {
                    choi[(j * d + i, l * d + k)] = superop[(i + k * d, col)];
                }
            }
        }
    }
    Ok(HermEig::new(&choi)?.min())
}

/// ∫∫ ⟨[Â(ω,t), X], [Â(ω,t), Y]⟩_w g(t) h(ω) dt dω, reduced to Bohr-pair scalars.
pub fn dirichlet_form(local: &LocalLindbladian, x: &CMat, y: &CMat, w: &DensityMatrix) -> Result<Complex64> {
    if w.min_eigenvalue() <= 0.0 {
        return Err(Error::Singular { min_eig: w.min_eigenvalue() });
    }
    let grid = &local.grid;
    let fp = local.fp;
    let wf = WeightFunctions::new(fp);
    let table = PairTable::new(PiecewiseExp::dirichlet_frequency(fp, 0.0), fp.sigma, &grid.frequencies, false);
    let sq = w.eig().apply_fn(f64::sqrt);
    let comps: Vec<(usize, CMat)> = grid
        .eigen_components(local.jump_eigen())
        .into_iter()
        .enumerate()
        .filter(|(_, m)| m.iter().any(|z| *z != ZERO))
        .map(|(p, m)| (p, grid.from_eigen(&m)))
        .collect();
    let left: Vec<CMat> = comps.iter().map(|(_, a)| crate::linalg::commutator(a, x)).collect();
    let right: Vec<CMat> = comps
        .iter()
        .map(|(_, a)| &sq * crate::linalg::commutator(a, y) * &sq)
        .collect();
    let mut total = ZERO;
    for (pi, (p, _)) in comps.iter().enumerate() {
        for (qi, (q, _)) in comps.iter().enumerate() {
            let k = table.get(*p, *q) * wf.g_fourier(grid.frequencies[*q] - grid.frequencies[*p]);
            total += crate::linalg::hs_inner(&left[pi], &right[qi]) * k;
        }
    }
    Ok(total)
}

/// Serializable snapshot of the coefficient tables of a generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientDump {
    pub version: u32,
    pub beta: f64,
    pub sigma: f64,
    pub eta: f64,
    pub dim: usize,
    pub energies: Vec<f64>,
    pub frequencies: Vec<f64>,
    /// Row-major transition table K(ν_p, ν_q).
    pub rates: Vec<f64>,
    pub jumps: Vec<JumpDump>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpDump {
    /// Row-major eigenbasis matrices as interleaved (re, im) pairs.
    pub jump: Vec<f64>,
    pub coherent: Vec<f64>,
    pub decay: Vec<f64>,
}

/// Binary layout (all little-endian):
///
/// ```text
/// magic   8 bytes  "MSTBCOEF"
/// version u32      currently 1
/// dim     u32
/// nfreq   u32
/// njump   u32
/// beta, sigma, eta         f64 x 3
/// energies                 f64 x dim
/// frequencies              f64 x nfreq
/// rates (row-major)        f64 x nfreq²
/// per jump: jump, coherent, decay, each f64 x 2·dim² (re, im interleaved, row-major)
/// ```
pub const DUMP_MAGIC: &[u8; 8] = b"MSTBCOEF";
pub const DUMP_VERSION: u32 = 1;

fn interleave(m: &CMat) -> Vec<f64> {
    let d = m.nrows();
    let mut v = Vec::with_capacity(2 * d * d);
    for i in 0..d {
        for j in 0..m.ncols() {
            v.push(m[(i, j)].re);
            v.push(m[(i, j)].im);
        }
    }
    v
}

impl CoefficientDump {
    pub fn from_lindbladian(l: &Lindbladian) -> Self {
        let n = l.grid.frequencies.len();
        let rates = l
            .locals
            .first()
            .map(|loc| (0..n * n).map(|k| loc.rates.get(k / n, k % n)).collect())
            .unwrap_or_default();
        Self {
            version: DUMP_VERSION,
            beta: l.fp.beta,
            sigma: l.fp.sigma,
            eta: l.eta,
            dim: l.dim(),
            energies: l.grid.energies.clone(),
            frequencies: l.grid.frequencies.clone(),
            rates,
            jumps: l
                .locals
                .iter()
                .map(|loc| JumpDump {
                    jump: interleave(loc.jump_eigen()),
                    coherent: interleave(loc.coherent_eigen()),
                    decay: interleave(loc.decay_eigen()),
                })
                .collect(),
        }
    }

    pub fn write_binary(&self, out: &mut impl Write) -> Result<()> {
        out.write_all(DUMP_MAGIC)?;
        for v in [self.version, self.dim as u32, self.frequencies.len() as u32, self.jumps.len() as u32] {
            out.write_all(&v.to_le_bytes())?;
        }
        let mut put = |xs: &[f64]| -> Result<()> {
            for x in xs {
                out.write_all(&x.to_le_bytes())?;
            }
            Ok(())
        };
        put(&[self.beta, self.sigma, self.eta])?;
        put(&self.energies)?;
        put(&self.frequencies)?;
        put(&self.rates)?;
        for j in &self.jumps {
            put(&j.jump)?;
            put(&j.coherent)?;
            put(&j.decay)?;
        }
        Ok(())
    }

    pub fn read_binary(input: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != DUMP_MAGIC {
            return Err(Error::Invalid("not a coefficient dump".into()));
        }
        let mut u = || -> Result<u32> {
            let mut b = [0u8; 4];
            input.read_exact(&mut b)?;
            Ok(u32::from_le_bytes(b))
        };
        let version = u()?;
        if version != DUMP_VERSION {
            return Err(Error::Invalid(format!("unsupported dump version {version}")));
        }
        let dim = u()? as usize;
        let nf = u()? as usize;
        let nj = u()? as usize;
        let mut f = |count: usize| -> Result<Vec<f64>> {
            let mut v = Vec::with_capacity(count);
            let mut b = [0u8; 8];
            for _ in 0..count {
                input.read_exact(&mut b)?;
                v.push(f64::from_le_bytes(b));
            }
            Ok(v)
        };
        let head = f(3)?;
        let energies = f(dim)?;
        let frequencies = f(nf)?;
        let rates = f(nf * nf)?;
        let mut jumps = Vec::with_capacity(nj);
        for _ in 0..nj {
            jumps.push(JumpDump { jump: f(2 * dim * dim)?, coherent: f(2 * dim * dim)?, decay: f(2 * dim * dim)? });
        }
        Ok(Self { version, beta: head[0], sigma: head[1], eta: head[2], dim, energies, frequencies, rates, jumps })
    }
}
