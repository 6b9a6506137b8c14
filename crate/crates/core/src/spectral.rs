//! Bohr-frequency calculus: energy-resolved components of operators,
//! Gaussian-filtered operator Fourier transforms and the closed-form scalar
//! integrals every frequency-weighted quadratic form reduces to.

use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::linalg::{c, from_frame, to_frame, CMat, ZERO};
use crate::pauli_ham::{dedup_sorted, Spectrum};

/// Inverse temperature and Gaussian energy width of the operator Fourier transform.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterParams {
    pub beta: f64,
    pub sigma: f64,
}

impl FilterParams {
    /// Width defaults to 1/β.
    pub fn new(beta: f64, sigma: Option<f64>) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::Invalid(format!("inverse temperature {beta} must be positive")));
        }
        let sigma = sigma.unwrap_or(1.0 / beta);
        if !(sigma > 0.0 && sigma <= 1.0 / beta * (1.0 + 1e-12)) {
            return Err(Error::Invalid(format!("gaussian width {sigma} must lie in (0, 1/beta]")));
        }
        Ok(Self { beta, sigma })
    }

    /// No range check; for identities that hold for any width.
    pub fn unchecked(beta: f64, sigma: f64) -> Self {
        Self { beta, sigma }
    }
}

/// Frequency-domain Gaussian filter e^{-ω²/4σ²}/√(σ√(2π)).
pub fn gaussian_filter(sigma: f64, omega: f64) -> f64 {
    (-omega * omega / (4.0 * sigma * sigma)).exp() / (sigma * (2.0 * PI).sqrt()).sqrt()
}

/// Time-domain Gaussian e^{-σ²t²}√(σ√(2/π)).
pub fn gaussian_time_filter(sigma: f64, t: f64) -> f64 {
    (-sigma * sigma * t * t).exp() * (sigma * (2.0 / PI).sqrt()).sqrt()
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// log Φ(x), accurate far into the lower tail.
pub fn log_norm_cdf(x: f64) -> f64 {
    if x > -30.0 {
        norm_cdf(x).ln()
    } else {
        let x2 = x * x;
        let series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
        -0.5 * x2 - 0.5 * (2.0 * PI).ln() - (-x).ln() + series.ln()
    }
}

/// Weight of the form e^{a_lo ω + b_lo} for ω < ω₀ and e^{a_hi ω + b_hi} for ω > ω₀.
#[derive(Clone, Copy, Debug)]
pub struct PiecewiseExp {
    pub split: f64,
    pub lo: (f64, f64),
    pub hi: (f64, f64),
}

impl PiecewiseExp {
    pub fn eval(&self, omega: f64) -> f64 {
        let (a, b) = if omega < self.split { self.lo } else { self.hi };
        (a * omega + b).exp()
    }

    /// Shifted Metropolis weight exp(-β max(ω + βσ²/2, 0)).
    pub fn metropolis(fp: FilterParams) -> Self {
        let shift = fp.beta * fp.sigma * fp.sigma / 2.0;
        Self { split: -shift, lo: (0.0, 0.0), hi: (-fp.beta, -fp.beta * shift) }
    }

    /// h_s(ω) = exp(sβ(2ω - sβσ²)/2) h(ω - sβσ²), h(x) = e^{-σ²β²/8} e^{-β|x|/2}.
    pub fn dirichlet_frequency(fp: FilterParams, s: f64) -> Self {
        let b = fp.beta;
        let s2 = fp.sigma * fp.sigma;
        let w0 = s * b * s2;
        let base = -s * s * b * b * s2 / 2.0 - s2 * b * b / 8.0;
        Self { split: w0, lo: (s * b + b / 2.0, base - b * w0 / 2.0), hi: (s * b - b / 2.0, base + b * w0 / 2.0) }
    }

    /// ∫ f̂_σ(ω-ν₁) f̂_σ(ω-ν₂) w(ω) dω in closed form.
    ///
    /// The Gaussian pair equals e^{-Δ²/8σ²} times the N(ν̄, σ²) density, so each
    /// exponential piece contributes a truncated Gaussian moment generating function.
    pub fn pair_integral(&self, sigma: f64, nu1: f64, nu2: f64) -> f64 {
        let m = 0.5 * (nu1 + nu2);
        let delta = nu1 - nu2;
        let pre = -delta * delta / (8.0 * sigma * sigma);
        let s2 = sigma * sigma;
        let (a, b) = self.hi;
        let up = b + a * m + a * a * s2 / 2.0 + log_norm_cdf((m + a * s2 - self.split) / sigma);
        let (a, b) = self.lo;
        let lo = b + a * m + a * a * s2 / 2.0 + log_norm_cdf((self.split - m - a * s2) / sigma);
        (pre + up).exp() + (pre + lo).exp()
    }

    /// Same integral by adaptive Gauss-Kronrod quadrature, for validation.
    pub fn pair_integral_quadrature(&self, sigma: f64, nu1: f64, nu2: f64) -> f64 {
        let lo = nu1.min(nu2) - 12.0 * sigma;
        let hi = nu1.max(nu2) + 12.0 * sigma;
        let mut breaks = vec![lo];
        if self.split > lo && self.split < hi {
            breaks.push(self.split);
        }
        breaks.push(hi);
        crate::quad::adaptive_pieces(
            |w| gaussian_filter(sigma, w - nu1) * gaussian_filter(sigma, w - nu2) * self.eval(w),
            &breaks,
            1e-300,
            1e-12,
        )
    }
}

/// Energy-resolved components A = Σ_ν A_ν over the Bohr frequencies of H.
#[derive(Clone, Debug)]
pub struct BohrDecomposition {
    pub frequencies: Vec<f64>,
    pub components: Vec<CMat>,
}

impl BohrDecomposition {
    pub fn reconstruct(&self) -> CMat {
        let d = self.components.first().map(|m| m.nrows()).unwrap_or(0);
        self.components.iter().fold(CMat::zeros(d, d), |acc, m| acc + m)
    }

    /// Component at frequency ν, if present.
    pub fn component(&self, nu: f64, tol: f64) -> Option<&CMat> {
        self.frequencies.iter().position(|&f| (f - nu).abs() <= tol).map(|k| &self.components[k])
    }

    /// A(t) = e^{iHt} A e^{-iHt} = Σ e^{iνt} A_ν.
    pub fn heisenberg(&self, t: f64) -> CMat {
        self.weighted(|nu| Complex64::from_polar(1.0, nu * t))
    }

    /// Â(ω) = Σ_ν A_ν f̂_σ(ω - ν).
    pub fn operator_ft(&self, sigma: f64, omega: f64) -> CMat {
        self.weighted(|nu| c(gaussian_filter(sigma, omega - nu), 0.0))
    }

    /// Â(ω, t) = e^{iHt} Â(ω) e^{-iHt}.
    pub fn operator_ft_at(&self, sigma: f64, omega: f64, t: f64) -> CMat {
        self.weighted(|nu| Complex64::from_polar(gaussian_filter(sigma, omega - nu), nu * t))
    }

    pub fn weighted(&self, w: impl Fn(f64) -> Complex64) -> CMat {
        let d = self.components.first().map(|m| m.nrows()).unwrap_or(0);
        let mut out = CMat::zeros(d, d);
        for (nu, m) in self.frequencies.iter().zip(&self.components) {
            out += m * w(*nu);
        }
        out
    }
}

/// A_ν = Σ_{E₂-E₁=ν} P_{E₂} A P_{E₁}.
pub fn bohr_decompose(a: &CMat, spec: &Spectrum) -> Result<BohrDecomposition> {
    let grid = BohrGrid::new(spec);
    grid.decompose(a)
}

/// Eigenbasis bookkeeping: for each matrix element (i, j) of an operator in the
/// energy eigenbasis, the index of its Bohr frequency E_i - E_j in a sorted,
/// de-duplicated list.
#[derive(Clone, Debug)]
pub struct BohrGrid {
    pub energies: Vec<f64>,
    pub basis: CMat,
    pub frequencies: Vec<f64>,
    /// Row-major: index[i * d + j] is the frequency index of E_i - E_j.
    pub index: Vec<usize>,
}

impl BohrGrid {
    pub fn new(spec: &Spectrum) -> Self {
        let d = spec.dim();
        let e = &spec.energies;
        let mut freqs: Vec<f64> = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                freqs.push(e[i] - e[j]);
            }
        }
        freqs.sort_by(f64::total_cmp);
        dedup_sorted(&mut freqs, spec.tolerance);
        for v in freqs.iter_mut() {
            if v.abs() <= spec.tolerance {
                *v = 0.0;
            }
        }
        let lookup = |x: f64| -> usize {
            let p = freqs.partition_point(|&f| f < x);
            let mut best = p.min(freqs.len() - 1);
            if p > 0 && (freqs[p - 1] - x).abs() <= (freqs[best] - x).abs() {
                best = p - 1;
            }
            best
        };
        let mut index = vec![0; d * d];
        for i in 0..d {
            for j in 0..d {
                index[i * d + j] = lookup(e[i] - e[j]);
            }
        }
        Self { energies: e.clone(), basis: spec.basis.clone(), frequencies: freqs, index }
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    #[inline]
    pub fn freq_index(&self, i: usize, j: usize) -> usize {
        self.index[i * self.dim() + j]
    }

    #[inline]
    pub fn nu(&self, i: usize, j: usize) -> f64 {
        self.frequencies[self.freq_index(i, j)]
    }

    pub fn to_eigen(&self, m: &CMat) -> CMat {
        to_frame(m, &self.basis)
    }

    pub fn from_eigen(&self, m: &CMat) -> CMat {
        from_frame(m, &self.basis)
    }

    /// Components in the eigenbasis, one matrix per frequency (all frequencies kept).
    pub fn eigen_components(&self, a_eig: &CMat) -> Vec<CMat> {
        let d = self.dim();
        let mut comps = vec![CMat::zeros(d, d); self.frequencies.len()];
        for i in 0..d {
            for j in 0..d {
                comps[self.freq_index(i, j)][(i, j)] = a_eig[(i, j)];
            }
        }
        comps
    }

    pub fn decompose(&self, a: &CMat) -> Result<BohrDecomposition> {
        if a.nrows() != self.dim() || a.ncols() != self.dim() {
            return Err(Error::Dimension(format!(
                "operator is {}x{}, hamiltonian dimension {}",
                a.nrows(),
                a.ncols(),
                self.dim()
            )));
        }
        let ae = self.to_eigen(a);
        let components = self.eigen_components(&ae).iter().map(|m| self.from_eigen(m)).collect();
        Ok(BohrDecomposition { frequencies: self.frequencies.clone(), components })
    }
}

pub fn heisenberg_evolve(decomp: &BohrDecomposition, t: f64) -> CMat {
    decomp.heisenberg(t)
}

pub fn operator_ft(decomp: &BohrDecomposition, fp: FilterParams, omega: f64) -> CMat {
    decomp.operator_ft(fp.sigma, omega)
}

/// Both sides of e^{β̃H} Â(ω) e^{-β̃H} = e^{β̃ω} Â(ω + 2σ²β̃) e^{σ²β̃²}.
#[derive(Clone, Debug)]
pub struct IdentityCheck {
    pub lhs: CMat,
    pub rhs: CMat,
    pub relative_deviation: f64,
}

impl IdentityCheck {
    fn new(lhs: CMat, rhs: CMat) -> Self {
        let scale = lhs.norm().max(rhs.norm()).max(1e-300);
        let relative_deviation = (&lhs - &rhs).norm() / scale;
        Self { lhs, rhs, relative_deviation }
    }
}

pub fn imaginary_time_conjugate_ft(
    decomp: &BohrDecomposition,
    spec: &Spectrum,
    fp: FilterParams,
    omega: f64,
    beta_t: f64,
) -> IdentityCheck {
    let ahat = decomp.operator_ft(fp.sigma, omega);
    let up = crate::linalg::HermEig { values: spec.energies.clone(), vectors: spec.basis.clone() };
    let e_plus = up.apply_fn(|e| (beta_t * e).exp());
    let e_minus = up.apply_fn(|e| (-beta_t * e).exp());
    let lhs = e_plus * ahat * e_minus;
    let s2 = fp.sigma * fp.sigma;
    let rhs = decomp.operator_ft(fp.sigma, omega + 2.0 * s2 * beta_t) * c((beta_t * omega + s2 * beta_t * beta_t).exp(), 0.0);
    IdentityCheck::new(lhs, rhs)
}

/// Table of (ν₁, ν₂, (A_{ν₁})_{ν₂}) for ν₁ ∈ B(H₁), ν₂ ∈ B(H₂); zero blocks are dropped.
pub fn double_bohr(a: &CMat, spec1: &Spectrum, spec2: &Spectrum) -> Result<Vec<(f64, f64, CMat)>> {
    let outer = bohr_decompose(a, spec1)?;
    let grid2 = BohrGrid::new(spec2);
    let mut table = Vec::new();
    for (nu1, a1) in outer.frequencies.iter().zip(&outer.components) {
        let inner = grid2.decompose(a1)?;
        for (nu2, a12) in inner.frequencies.iter().zip(inner.components) {
            if crate::linalg::max_abs(&a12) > 0.0 {
                table.push((*nu1, *nu2, a12));
            }
        }
    }
    Ok(table)
}

/// Both sides of e^{zH₂}e^{-zH₁} A e^{zH₁}e^{-zH₂} = Σ (A_{ν₁})_{ν₂} e^{z(ν₂-ν₁)}.
pub fn double_bohr_check(a: &CMat, spec1: &Spectrum, spec2: &Spectrum, z: f64) -> Result<IdentityCheck> {
    let table = double_bohr(a, spec1, spec2)?;
    let d = a.nrows();
    let mut rhs = CMat::zeros(d, d);
    for (nu1, nu2, m) in &table {
        rhs += m * c((z * (nu2 - nu1)).exp(), 0.0);
    }
    let ex = |s: &Spectrum, k: f64| {
        crate::linalg::HermEig { values: s.energies.clone(), vectors: s.basis.clone() }.apply_fn(|e| (k * e).exp())
    };
    let lhs = ex(spec2, z) * ex(spec1, -z) * a * ex(spec1, z) * ex(spec2, -z);
    Ok(IdentityCheck::new(lhs, rhs))
}

/// Prefactor making Â_{σ₃}(ω) = k ∫ Â_{σ₁}(ω') f̂_{σ₂}(ω - ω') dω' exact for σ₃² = σ₁² + σ₂².
pub fn convolution_prefactor(sigma1: f64, sigma2: f64) -> f64 {
    let sigma3 = sigma1.hypot(sigma2);
    (sigma3 / (2.0 * (2.0 * PI).sqrt() * sigma1 * sigma2)).sqrt()
}

/// Â_{σ₃}(ω) directly versus the convolution integral done by adaptive quadrature per component.
pub fn convolve_ft(decomp: &BohrDecomposition, sigma1: f64, sigma2: f64, omega: f64) -> IdentityCheck {
    let sigma3 = sigma1.hypot(sigma2);
    let lhs = decomp.operator_ft(sigma3, omega);
    let k = convolution_prefactor(sigma1, sigma2);
    let rhs = decomp.weighted(|nu| {
        let lo = nu.min(omega) - 14.0 * sigma1.max(sigma2);
        let hi = nu.max(omega) + 14.0 * sigma1.max(sigma2);
        let mut breaks = vec![lo, nu.min(omega), nu.max(omega), hi];
        breaks.dedup();
        let v = crate::quad::adaptive_pieces(
            |w| gaussian_filter(sigma1, w - nu) * gaussian_filter(sigma2, omega - w),
            &breaks,
            1e-300,
            1e-13,
        );
        c(k * v, 0.0)
    });
    IdentityCheck::new(lhs, rhs)
}

/// Residual of the twirling identity
/// ∫ Â_{σ₁}(ω,t) ⊗ Â_{σ₁}(ω,t)† f_{σ₂}(t)² dt = ∫ f̂_{σ₄}(ω-ω')² Â_{σ₃}(ω') ⊗ Â_{σ₃}(ω')† dω'
/// with 1/σ₃² = 1/σ₁² + 1/σ₂² and σ₄² = σ₁² - σ₃².
///
/// Both sides are reduced to per-(ν₁, ν₂) scalars multiplying A_{ν₁} ⊗ A_{ν₂}†; the t side by
/// quadrature of the Gaussian time filter, the ω' side by quadrature in frequency. Returns the
/// largest deviation between the two scalar tables weighted by ‖A_{ν₁}‖‖A_{ν₂}‖.
pub fn twirl_ft(decomp: &BohrDecomposition, sigma1: f64, sigma2: f64, omega: f64) -> f64 {
    let sigma3 = 1.0 / (1.0 / (sigma1 * sigma1) + 1.0 / (sigma2 * sigma2)).sqrt();
    let sigma4 = (sigma1 * sigma1 - sigma3 * sigma3).sqrt();
    let live: Vec<(f64, f64)> = decomp
        .frequencies
        .iter()
        .zip(&decomp.components)
        .map(|(&nu, m)| (nu, m.norm()))
        .filter(|(_, n)| *n > 0.0)
        .collect();
    let tmax = 14.0 / sigma2;
    let mut worst = 0.0f64;
    for &(nu1, n1) in &live {
        for &(nu2, n2) in &live {
            let pref = gaussian_filter(sigma1, omega - nu1) * gaussian_filter(sigma1, omega - nu2);
            let dnu = nu1 - nu2;
            let time = crate::quad::adaptive(
                |t| (dnu * t).cos() * gaussian_time_filter(sigma2, t).powi(2),
                -tmax,
                tmax,
                1e-300,
                1e-13,
            );
            let lhs = pref * time;
            let lo = nu1.min(nu2).min(omega) - 14.0 * sigma1;
            let hi = nu1.max(nu2).max(omega) + 14.0 * sigma1;
            let rhs = crate::quad::adaptive(
                |w| {
                    gaussian_filter(sigma4, omega - w).powi(2)
                        * gaussian_filter(sigma3, w - nu1)
                        * gaussian_filter(sigma3, w - nu2)
                },
                lo,
                hi,
                1e-300,
                1e-13,
            );
            worst = worst.max((lhs - rhs).abs() * n1 * n2);
        }
    }
    worst
}

/// Closed-form version of the twirling scalar for one frequency pair; the t-integral of
/// f_{σ₂}² e^{iΔt} is e^{-Δ²/8σ₂²}.
pub fn twirl_pair_closed_form(sigma1: f64, sigma2: f64, omega: f64, nu1: f64, nu2: f64) -> f64 {
    let d = nu1 - nu2;
    gaussian_filter(sigma1, omega - nu1) * gaussian_filter(sigma1, omega - nu2) * (-d * d / (8.0 * sigma2 * sigma2)).exp()
}

/// Result of the operator Parseval inequality ‖Σ_a ∫ γ Â_a†Â_a‖ ≤ sup γ ‖Σ_a A_a†A_a‖.
#[derive(Clone, Copy, Debug)]
pub struct ParsevalCheck {
    pub lhs: f64,
    pub rhs: f64,
}

impl ParsevalCheck {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs * (1.0 + 1e-10) + 1e-12
    }
}

/// Evaluates both sides of the operator Parseval inequality for an arbitrary weight,
/// with the scalar ω-integrals done by adaptive quadrature.
pub fn parseval_bound_check(
    jumps: &[CMat],
    spec: &Spectrum,
    sigma: f64,
    weight: &dyn Fn(f64) -> f64,
    weight_sup: f64,
) -> Result<ParsevalCheck> {
    let grid = BohrGrid::new(spec);
    let d = grid.dim();
    let nf = grid.frequencies.len();
    let mut cache: std::collections::HashMap<(usize, usize), f64> = std::collections::HashMap::new();
    let mut integral = |p: usize, q: usize| -> f64 {
        let key = if p <= q { (p, q) } else { (q, p) };
        *cache.entry(key).or_insert_with(|| {
            let (n1, n2) = (grid.frequencies[key.0], grid.frequencies[key.1]);
            let lo = n1.min(n2) - 12.0 * sigma;
            let hi = n1.max(n2) + 12.0 * sigma;
            let mut breaks: Vec<f64> = (0..=16).map(|k| lo + (hi - lo) * k as f64 / 16.0).collect();
            breaks.dedup();
            crate::quad::adaptive_pieces(
                |w| gaussian_filter(sigma, w - n1) * gaussian_filter(sigma, w - n2) * weight(w),
                &breaks,
                1e-300,
                1e-12,
            )
        })
    };
    let _ = nf;
    let mut lhs_op = CMat::zeros(d, d);
    let mut rhs_op = CMat::zeros(d, d);
    for a in jumps {
        let ae = grid.to_eigen(a);
        for j in 0..d {
            for l in 0..d {
                let mut acc = ZERO;
                for i in 0..d {
                    let w = integral(grid.freq_index(i, j), grid.freq_index(i, l));
                    acc += ae[(i, j)].conj() * ae[(i, l)] * w;
                }
                lhs_op[(j, l)] += acc;
            }
        }
        rhs_op += a.adjoint() * a;
    }
    Ok(ParsevalCheck { lhs: crate::linalg::op_norm(&lhs_op), rhs: weight_sup * crate::linalg::op_norm(&rhs_op) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use crate::pauli_ham::{diagonalize, diagonalize_matrix, HamiltonianSpec, Pauli, PauliString, Term};
    use crate::random::{component_rng, random_hermitian, random_unit_operator};

    fn z_model() -> Spectrum {
        diagonalize(&HamiltonianSpec::single_qubit().unwrap()).unwrap()
    }

    #[test]
    fn commuting_operator_has_only_zero_component() {
        let s = z_model();
        let d = bohr_decompose(&Pauli::Z.matrix(), &s).unwrap();
        for (nu, m) in d.frequencies.iter().zip(&d.components) {
            if *nu != 0.0 {
                assert!(max_abs(m) == 0.0);
            }
        }
    }

    #[test]
    fn x_under_z_by_hand() {
        let s = z_model();
        let d = bohr_decompose(&Pauli::X.matrix(), &s).unwrap();
        // ν = E_i - E_j with E_{|1>} = -1, E_{|0>} = +1: |0><1| raises energy by +2
        let up = d.component(2.0, 1e-12).unwrap();
        let down = d.component(-2.0, 1e-12).unwrap();
        assert!((up[(0, 1)].re - 1.0).abs() < 1e-15 && up[(1, 0)].norm() == 0.0);
        assert!((down[(1, 0)].re - 1.0).abs() < 1e-15);
        assert!(max_abs(&(up + down - Pauli::X.matrix())) < 1e-15);
    }

    #[test]
    fn completeness_and_adjoint_symmetry() {
        let h = HamiltonianSpec::random_2local(3, 2).unwrap();
        let s = diagonalize(&h).unwrap();
        let mut rng = component_rng(3, 0);
        let a = crate::random::ginibre(8, &mut rng);
        let d = bohr_decompose(&a, &s).unwrap();
        assert!(max_abs(&(d.reconstruct() - &a)) < 1e-12 * a.norm());
        let dd = bohr_decompose(&a.adjoint(), &s).unwrap();
        for (nu, m) in d.frequencies.iter().zip(&d.components) {
            let other = dd.component(-nu, 2.0 * s.tolerance).unwrap();
            assert!(max_abs(&(m.adjoint() - other)) < 1e-12);
        }
    }

    #[test]
    fn heisenberg_matches_unitary_conjugation() {
        let s = z_model();
        let d = bohr_decompose(&Pauli::X.matrix(), &s).unwrap();
        assert!(max_abs(&(d.heisenberg(0.0) - Pauli::X.matrix())) < 1e-15);
        let t = PI / 2.0;
        let u = crate::linalg::expm(&(Pauli::Z.matrix() * c(0.0, t)));
        let direct = &u * Pauli::X.matrix() * u.adjoint();
        assert!(max_abs(&(d.heisenberg(t) - &direct)) < 1e-12);
        assert!(max_abs(&(direct + Pauli::X.matrix())) < 1e-12);
    }

    #[test]
    fn heisenberg_random_instance() {
        let h = HamiltonianSpec::random_2local(3, 9).unwrap();
        let hm = h.assemble_dense().unwrap();
        let s = diagonalize(&h).unwrap();
        let a = random_hermitian(8, &mut component_rng(5, 1));
        let d = bohr_decompose(&a, &s).unwrap();
        let u = crate::linalg::expm(&(&hm * c(0.0, 0.37)));
        assert!(max_abs(&(d.heisenberg(0.37) - &u * &a * u.adjoint())) < 1e-10);
    }

    #[test]
    fn ft_of_identity_at_zero() {
        let s = z_model();
        let d = bohr_decompose(&CMat::identity(2, 2), &s).unwrap();
        let sigma = 0.8;
        let v = d.operator_ft(sigma, 0.0);
        let expect = 1.0 / (sigma * (2.0 * PI).sqrt()).sqrt();
        assert!(max_abs(&(v - CMat::identity(2, 2) * c(expect, 0.0))) < 1e-15);
        let far = d.operator_ft(sigma, 2.0 + 20.0 * sigma * 2.0);
        assert!(max_abs(&far) < 1e-80);
    }

    #[test]
    fn sum_over_energies_rule() {
        let h = HamiltonianSpec::random_2local(3, 4).unwrap();
        let s = diagonalize(&h).unwrap();
        let a = random_unit_operator(8, &mut component_rng(2, 2));
        let d = bohr_decompose(&a, &s).unwrap();
        let sigma = 0.6;
        let lo = d.frequencies[0] - 14.0 * sigma;
        let hi = d.frequencies.last().unwrap() + 14.0 * sigma;
        let rule = crate::quad::Rule::composite(40, &(0..=40).map(|k| lo + (hi - lo) * k as f64 / 40.0).collect::<Vec<_>>());
        let mut acc = CMat::zeros(8, 8);
        for (w, x) in rule.weights.iter().zip(&rule.nodes) {
            acc += d.operator_ft(sigma, *x) * c(*w, 0.0);
        }
        acc /= c((2.0 * sigma * (2.0 * PI).sqrt()).sqrt(), 0.0);
        assert!(max_abs(&(acc - a)) < 1e-8);
    }

    #[test]
    fn ft_linearity_and_hermiticity_transport() {
        let h = HamiltonianSpec::ising_chain(2, 0.5).unwrap();
        let s = diagonalize(&h).unwrap();
        let mut rng = component_rng(8, 0);
        let a = random_hermitian(4, &mut rng);
        let b = random_hermitian(4, &mut rng);
        let (x, y) = (c(0.3, -1.0), c(2.0, 0.5));
        let da = bohr_decompose(&a, &s).unwrap();
        let db = bohr_decompose(&b, &s).unwrap();
        let dab = bohr_decompose(&(&a * x + &b * y), &s).unwrap();
        let w = 0.4;
        let lin = dab.operator_ft(0.7, w) - (da.operator_ft(0.7, w) * x + db.operator_ft(0.7, w) * y);
        assert!(max_abs(&lin) < 1e-12);
        assert!(max_abs(&(da.operator_ft(0.7, w).adjoint() - da.operator_ft(0.7, -w))) < 1e-12);
    }

    #[test]
    fn imaginary_time_identity_two_level_and_random() {
        let s = z_model();
        let d = bohr_decompose(&Pauli::X.matrix(), &s).unwrap();
        let fp = FilterParams::new(1.0, None).unwrap();
        let zero = imaginary_time_conjugate_ft(&d, &s, fp, 0.3, 0.0);
        assert!(max_abs(&(zero.lhs - d.operator_ft(1.0, 0.3))) < 1e-15);
        assert!(imaginary_time_conjugate_ft(&d, &s, fp, 0.0, 1.0).relative_deviation < 1e-12);
        let h = HamiltonianSpec::random_2local(3, 1).unwrap();
        let s3 = diagonalize(&h).unwrap();
        let a = random_unit_operator(8, &mut component_rng(4, 4));
        let d3 = bohr_decompose(&a, &s3).unwrap();
        let chk = imaginary_time_conjugate_ft(&d3, &s3, FilterParams::new(2.0, None).unwrap(), -0.7, 0.9);
        assert!(chk.relative_deviation < 1e-10, "{}", chk.relative_deviation);
    }

    #[test]
    fn double_bohr_identity() {
        let h1 = HamiltonianSpec::random_2local(2, 21).unwrap();
        let h2 = HamiltonianSpec::random_2local(2, 22).unwrap();
        let s1 = diagonalize(&h1).unwrap();
        let s2 = diagonalize(&h2).unwrap();
        let a = random_unit_operator(4, &mut component_rng(6, 0));
        assert!(double_bohr_check(&a, &s1, &s2, 0.0).unwrap().relative_deviation < 1e-12);
        assert!(double_bohr_check(&a, &s1, &s2, 0.3).unwrap().relative_deviation < 1e-9);
    }

    #[test]
    fn convolution_identity() {
        let h = HamiltonianSpec::random_2local(2, 3).unwrap();
        let s = diagonalize(&h).unwrap();
        let a = random_unit_operator(4, &mut component_rng(9, 0));
        let d = bohr_decompose(&a, &s).unwrap();
        assert!(convolve_ft(&d, 0.5, 0.3, 0.2).relative_deviation < 1e-7);
        let di = bohr_decompose(&CMat::identity(4, 4), &s).unwrap();
        assert!(convolve_ft(&di, 0.5, 0.3, -0.4).relative_deviation < 1e-9);
        // narrow second filter reproduces the first transform
        let narrow = convolve_ft(&d, 0.5, 0.005, 0.2);
        let direct = d.operator_ft(0.5, 0.2);
        assert!((narrow.rhs - &direct).norm() / direct.norm() < 1e-4);
    }

    #[test]
    fn twirling_identity() {
        let s = z_model();
        let d = bohr_decompose(&Pauli::X.matrix(), &s).unwrap();
        assert!(twirl_ft(&d, 0.8, 0.5, 0.3) < 1e-10);
        let dz = bohr_decompose(&Pauli::Z.matrix(), &s).unwrap();
        assert!(twirl_ft(&dz, 0.8, 0.5, 0.3) < 1e-12);
        let h = HamiltonianSpec::random_2local(3, 5).unwrap();
        let s3 = diagonalize(&h).unwrap();
        let a = random_unit_operator(8, &mut component_rng(1, 7));
        let d3 = bohr_decompose(&a, &s3).unwrap();
        assert!(twirl_ft(&d3, 0.7, 0.4, -0.2) < 1e-8);
        let t = twirl_pair_closed_form(0.7, 0.4, 0.1, 0.5, -0.3);
        assert!(t > 0.0);
    }

    #[test]
    fn closed_form_pair_integrals_match_quadrature() {
        for &(beta, sigma) in &[(1.0, 1.0), (2.0, 0.5), (0.5, 1.5), (2.0, 0.2)] {
            let fp = FilterParams::unchecked(beta, sigma);
            let weights = [
                PiecewiseExp::metropolis(fp),
                PiecewiseExp::dirichlet_frequency(fp, -0.5),
                PiecewiseExp::dirichlet_frequency(fp, 0.0),
                PiecewiseExp::dirichlet_frequency(fp, 0.37),
            ];
            for w in &weights {
                for &(n1, n2) in &[(0.0, 0.0), (2.0, -1.0), (-3.5, -2.0), (4.0, 4.5), (1.2, -1.2)] {
                    let a = w.pair_integral(sigma, n1, n2);
                    let b = w.pair_integral_quadrature(sigma, n1, n2);
                    assert!(((a - b) / b).abs() < 1e-9, "beta {beta} sigma {sigma} nu ({n1},{n2}): {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn log_norm_cdf_tail() {
        for &x in &[-5.0, -20.0, -29.9] {
            assert!((log_norm_cdf(x) - norm_cdf(x).ln()).abs() < 1e-10);
        }
        assert!((log_norm_cdf(-40.0) - (-804.608_442_013_754)).abs() < 1e-6);
    }

    #[test]
    fn parseval_examples() {
        let s = z_model();
        let one = |_: f64| 1.0;
        let chk = parseval_bound_check(&[Pauli::X.matrix()], &s, 1.0, &one, 1.0).unwrap();
        assert!(chk.holds() && chk.lhs <= 1.0 + 1e-10);
        let fp = FilterParams::new(1.0, None).unwrap();
        let m = PiecewiseExp::metropolis(fp);
        let metro = move |w: f64| m.eval(w);
        let chk = parseval_bound_check(&[Pauli::X.matrix()], &s, 1.0, &metro, 1.0).unwrap();
        assert!(chk.holds());
        let h = HamiltonianSpec::new(2, vec![Term::pauli("ZZ", 1.0).unwrap(), Term::pauli("XI", 0.5).unwrap()]).unwrap();
        let s2 = diagonalize(&h).unwrap();
        let jumps: Vec<CMat> = [("XI"), ("YI"), ("IZ")].iter().map(|p| PauliString::parse(p).unwrap().to_matrix()).collect();
        let chk = parseval_bound_check(&jumps, &s2, 1.0, &metro, 1.0).unwrap();
        assert!(chk.holds(), "{chk:?}");
    }

    #[test]
    fn degenerate_spectrum_grid() {
        let s = diagonalize_matrix(&crate::linalg::real_diag(&[1.0, 1.0, -1.0, -1.0])).unwrap();
        let g = BohrGrid::new(&s);
        assert_eq!(g.frequencies, vec![-2.0, 0.0, 2.0]);
    }
}
