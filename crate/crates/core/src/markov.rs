//! Noise channels on a region, the time-averaged local recovery map, recovery
//! experiments, strong-Markov statistics and the commutator form of a channel.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, max_abs, trace, trace_norm, unvectorize, vectorize, CMat, CVec, HermEig, ZERO};
use crate::lindblad::{LindbladOptions, Lindbladian};
use crate::ode;
use crate::pauli_ham::{embed, gibbs_weights, single_qubit_jump_set, DensityMatrix, Pauli, PauliString, Phase, Spectrum};
use crate::spectral::FilterParams;

/// Relative change allowed between consecutive points of a "non-increasing" trend.
pub const PLATEAU_TOL: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ChannelKind {
    Identity,
    Erasure,
    Depolarizing { p: f64 },
    Measurement,
    Custom,
}

/// Channel acting on the qubits of `region` and as the identity elsewhere.
#[derive(Clone, Debug)]
pub struct QuantumChannel {
    pub kind: ChannelKind,
    pub region: Vec<usize>,
    pub n: usize,
    pub local_kraus: Vec<CMat>,
    kraus: Vec<CMat>,
}

/// One measurement outcome: probability and post-measurement state (absent when p = 0).
#[derive(Clone, Debug)]
pub struct Branch {
    pub probability: f64,
    pub state: Option<DensityMatrix>,
}

impl QuantumChannel {
    pub fn new(n: usize, region: &[usize], local_kraus: Vec<CMat>, kind: ChannelKind) -> Result<Self> {
        let mut sorted = region.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != region.len() || region.iter().any(|&q| q >= n) {
            return Err(Error::Invalid(format!("region {region:?} is not a set of distinct qubits below {n}")));
        }
        let da = 1usize << region.len();
        let mut completeness = CMat::zeros(da, da);
        for k in &local_kraus {
            if k.nrows() != da || k.ncols() != da {
                return Err(Error::Dimension(format!("Kraus operator must be {da}x{da}")));
            }
            completeness += k.adjoint() * k;
        }
        if local_kraus.is_empty() || max_abs(&(completeness - CMat::identity(da, da))) > 1e-12 {
            return Err(Error::Invalid("Kraus operators do not sum to the identity".into()));
        }
        let kraus = local_kraus.iter().map(|k| embed(k, region, n)).collect::<Result<Vec<_>>>()?;
        Ok(Self { kind, region: region.to_vec(), n, local_kraus, kraus })
    }

    pub fn identity(n: usize, region: &[usize]) -> Result<Self> {
        let da = 1usize << region.len();
        Self::new(n, region, vec![CMat::identity(da, da)], ChannelKind::Identity)
    }

    /// Replace the region by `tau` (maximally mixed when `None`).
    pub fn erasure(n: usize, region: &[usize], tau: Option<&CMat>) -> Result<Self> {
        let da = 1usize << region.len();
        let tau = match tau {
            Some(t) => DensityMatrix::new(t.clone())?,
            None => DensityMatrix::maximally_mixed(da),
        };
        let e = tau.eig();
        let mut ks = Vec::new();
        for (m, &w) in e.values.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            for j in 0..da {
                let mut k = CMat::zeros(da, da);
                for i in 0..da {
                    k[(i, j)] = e.vectors[(i, m)] * w.sqrt();
                }
                ks.push(k);
            }
        }
        Self::new(n, region, ks, ChannelKind::Erasure)
    }

    /// (1-p)σ + p·(erasure to the maximally mixed state).
    pub fn depolarizing(n: usize, region: &[usize], p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Invalid(format!("depolarizing probability {p} outside [0, 1]")));
        }
        let k = region.len();
        let da = (1usize << k) as f64;
        let mut ks = Vec::new();
        for s in all_pauli_strings(k) {
            let w = if s.weight() == 0 { (1.0 - p + p / (da * da)).sqrt() } else { p.sqrt() / da };
            if w > 0.0 {
                ks.push(s.to_matrix() * c(w, 0.0));
            }
        }
        Self::new(n, region, ks, ChannelKind::Depolarizing { p })
    }

    /// Computational-basis measurement of the region.
    pub fn measurement(n: usize, region: &[usize]) -> Result<Self> {
        let da = 1usize << region.len();
        let ks = (0..da)
            .map(|b| {
                let mut m = CMat::zeros(da, da);
                m[(b, b)] = c(1.0, 0.0);
                m
            })
            .collect();
        Self::new(n, region, ks, ChannelKind::Measurement)
    }

    /// Random channel from a Haar isometry with `rank` Kraus operators.
    pub fn random(n: usize, region: &[usize], rank: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let da = 1usize << region.len();
        let u = crate::random::random_unitary(da * rank.max(1), rng);
        let ks = (0..rank.max(1)).map(|r| u.view((r * da, 0), (da, da)).into_owned()).collect();
        Self::new(n, region, ks, ChannelKind::Custom)
    }

    pub fn kraus(&self) -> &[CMat] {
        &self.kraus
    }

    pub fn apply(&self, sigma: &CMat) -> CMat {
        let d = sigma.nrows();
        let mut out = CMat::zeros(d, d);
        for k in &self.kraus {
            out += k * sigma * k.adjoint();
        }
        out
    }

    pub fn apply_state(&self, sigma: &DensityMatrix) -> Result<DensityMatrix> {
        DensityMatrix::new(self.apply(sigma.matrix()))
    }

    /// Heisenberg picture N†[X] = Σ M† X M.
    pub fn apply_adj(&self, x: &CMat) -> CMat {
        let d = x.nrows();
        let mut out = CMat::zeros(d, d);
        for k in &self.kraus {
            out += k.adjoint() * x * k;
        }
        out
    }

    pub fn branches(&self, sigma: &DensityMatrix) -> Result<Vec<Branch>> {
        self.kraus
            .iter()
            .map(|k| {
                let m = k * sigma.matrix() * k.adjoint();
                let p = trace(&m).re.max(0.0);
                let state = if p > 1e-300 { Some(DensityMatrix::new(m / c(p, 0.0))?) } else { None };
                Ok(Branch { probability: p, state })
            })
            .collect()
    }
}

/// All 4^k Pauli strings on k qubits, identity first.
pub fn all_pauli_strings(k: usize) -> Vec<PauliString> {
    let letters = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];
    (0..1usize << (2 * k))
        .map(|code| PauliString {
            letters: (0..k).map(|q| letters[(code >> (2 * (k - 1 - q))) & 3]).collect(),
            phase: Phase::One,
        })
        .collect()
}

/// Spectral data of the KMS-symmetrised local generator D⁻¹ S D.
#[derive(Clone, Debug)]
struct KmsSpectral {
    scale: Vec<f64>,
    vectors: CMat,
    values: Vec<f64>,
}

/// R_{A,t}[·] = (1/t) ∫₀ᵗ exp(s L_A)[·] ds with L_A the sum of the single-qubit-Pauli
/// local generators on A (no Hamiltonian commutator).
#[derive(Clone, Debug)]
pub struct RecoveryMap {
    pub region: Vec<usize>,
    pub generator: Lindbladian,
    kms: Option<KmsSpectral>,
}

fn phi1(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 + x / 2.0
    } else {
        x.exp_m1() / x
    }
}

impl RecoveryMap {
    pub fn new(spec: &Spectrum, fp: FilterParams, region: &[usize], options: LindbladOptions) -> Result<Self> {
        let n = spec.dim().trailing_zeros() as usize;
        let jumps: Vec<CMat> = single_qubit_jump_set(n, region).iter().map(|p| p.to_matrix()).collect();
        let mut generator = Lindbladian::build(spec, &jumps, fp, 1.0, options)?;
        generator.hamiltonian_part = false;
        let kms = if generator.dense_allowed() && !region.is_empty() {
            Some(Self::symmetrize(&generator)?)
        } else {
            None
        };
        Ok(Self { region: region.to_vec(), generator, kms })
    }

    fn symmetrize(generator: &Lindbladian) -> Result<KmsSpectral> {
        let d = generator.dim();
        let p = gibbs_weights(&generator.grid.energies, generator.fp.beta);
        let scale: Vec<f64> = (0..d * d).map(|idx| (p[idx % d] * p[idx / d]).powf(0.25)).collect();
        let s = generator.superop_e()?;
        let sym = CMat::from_fn(d * d, d * d, |r, col| s[(r, col)] * (scale[col] / scale[r]));
        let defect = crate::linalg::hermiticity_defect(&sym);
        if defect > 1e-8 * (1.0 + max_abs(&sym)) {
            return Err(Error::Numeric(format!("local generator is not KMS-symmetric (defect {defect:e})")));
        }
        let eig = HermEig::new(&sym)?;
        Ok(KmsSpectral { scale, vectors: eig.vectors, values: eig.values })
    }

    fn check_time(t: f64) -> Result<()> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Invalid(format!("recovery time must be positive, got {t}")));
        }
        Ok(())
    }

    fn spectral_apply(&self, k: &KmsSpectral, v: CVec, t: f64, adjoint: bool) -> CVec {
        let mut w = v;
        for (i, z) in w.iter_mut().enumerate() {
            *z *= if adjoint { k.scale[i] } else { 1.0 / k.scale[i] };
        }
        let mut y = k.vectors.adjoint() * w;
        for (i, z) in y.iter_mut().enumerate() {
            *z *= phi1(t * k.values[i]);
        }
        let mut out = &k.vectors * y;
        for (i, z) in out.iter_mut().enumerate() {
            *z *= if adjoint { 1.0 / k.scale[i] } else { k.scale[i] };
        }
        out
    }

    /// R_{A,t}[X] for an arbitrary operator X.
    pub fn apply(&self, x: &CMat, t: f64) -> Result<CMat> {
        Self::check_time(t)?;
        if self.region.is_empty() {
            return Ok(x.clone());
        }
        let d = self.generator.dim();
        let grid = &self.generator.grid;
        match &self.kms {
            Some(k) => {
                let v = self.spectral_apply(k, vectorize(&grid.to_eigen(x)), t, false);
                Ok(grid.from_eigen(&unvectorize(&v, d)))
            }
            None => self.generator.time_average_operator(x, t),
        }
    }

    pub fn apply_state(&self, sigma: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
        DensityMatrix::new(crate::linalg::hermitian_part(&self.apply(sigma.matrix(), t)?))
    }

    /// R†_{A,t}[O] = (1/t) ∫₀ᵗ exp(s L_A†)[O] ds.
    pub fn apply_adj(&self, o: &CMat, t: f64) -> Result<CMat> {
        Self::check_time(t)?;
        if self.region.is_empty() {
            return Ok(o.clone());
        }
        let d = self.generator.dim();
        let grid = &self.generator.grid;
        let oe = grid.to_eigen(o);
        let out = match &self.kms {
            Some(k) => unvectorize(&self.spectral_apply(k, vectorize(&oe), t, true), d),
            None => {
                let d2 = d * d;
                let f = |v: &CVec| {
                    let y = unvectorize(&v.rows(0, d2).into_owned(), d);
                    let mut out = CVec::zeros(2 * d2);
                    out.rows_mut(0, d2).copy_from(&vectorize(&self.generator.apply_adj_e(&y)));
                    out.rows_mut(d2, d2).copy_from(&v.rows(0, d2));
                    out
                };
                let mut y0 = CVec::zeros(2 * d2);
                y0.rows_mut(0, d2).copy_from(&vectorize(&oe));
                let (y, _) = ode::integrate(&f, &y0, t, self.generator.options.ode)?;
                unvectorize(&(y.rows(d2, d2).into_owned() / c(t, 0.0)), d)
            }
        };
        Ok(grid.from_eigen(&out))
    }

    /// ‖L_A[σ]‖₁.
    pub fn local_stationarity(&self, sigma: &CMat) -> f64 {
        trace_norm(&self.generator.apply(sigma))
    }
}

/// |⟨R†O, L†[R†O]⟩_σ| in the KMS inner product of σ, for a chosen generator action L†.
pub fn local_stationarity_pairing(
    recovery: &RecoveryMap,
    generator_adj: &dyn Fn(&CMat) -> CMat,
    sigma: &DensityMatrix,
    o: &CMat,
    t: f64,
) -> Result<f64> {
    let ro = recovery.apply_adj(o, t)?;
    let sq = sigma.eig().apply_fn(|v| v.max(0.0).sqrt());
    let lro = generator_adj(&ro);
    Ok(crate::linalg::hs_inner(&ro, &(&sq * lro * &sq)).norm())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    pub region: Vec<usize>,
    pub t: f64,
    pub total: f64,
    pub leakage: f64,
    pub mixing: f64,
    /// Σ_b ‖R[M_b σ M_b†] - p_b σ‖₁ for measurement channels.
    pub strong: Option<f64>,
    pub per_outcome: Vec<f64>,
}

/// Splits ‖σ - R[N[σ]]‖₁ into leakage ‖σ - R[σ]‖₁ and local mixing ‖R[σ - N[σ]]‖₁.
pub fn recovery_errors(
    recovery: &RecoveryMap,
    sigma: &DensityMatrix,
    channel: &QuantumChannel,
    t: f64,
) -> Result<RecoveryResult> {
    let s = sigma.matrix();
    let noisy = channel.apply(s);
    let total = trace_norm(&(s - recovery.apply(&noisy, t)?));
    let leakage = trace_norm(&(s - recovery.apply(s, t)?));
    let mixing = trace_norm(&recovery.apply(&(s - &noisy), t)?);
    if total > leakage + mixing + 1e-10 {
        return Err(Error::Numeric(format!("triangle split violated: {total} > {leakage} + {mixing}")));
    }
    let (strong, per_outcome) = if channel.kind == ChannelKind::Measurement {
        let r = strong_markov_report(sigma, channel, &|x| recovery.apply(x, t))?;
        (Some(r.strong), r.per_outcome)
    } else {
        (None, Vec::new())
    };
    Ok(RecoveryResult { region: recovery.region.clone(), t, total, leakage, mixing, strong, per_outcome })
}

/// Recovery of the Gibbs state itself over a grid of times.
pub fn gibbs_recovery_experiment(
    spec: &Spectrum,
    fp: FilterParams,
    region: &[usize],
    channel: &QuantumChannel,
    times: &[f64],
) -> Result<Vec<RecoveryResult>> {
    let rho = crate::pauli_ham::gibbs_state(spec, fp.beta)?;
    let rec = RecoveryMap::new(spec, fp, region, LindbladOptions::default())?;
    times.iter().map(|&t| recovery_errors(&rec, &rho, channel, t)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetastableRecovery {
    pub rows: Vec<RecoveryResult>,
    /// ‖L_A[σ]‖₁.
    pub local_stationarity: f64,
    pub t_star: f64,
    pub min_total: f64,
    /// Every row satisfies leakage ≤ t ‖L_A[σ]‖₁ + 1e-8.
    pub leakage_bound_holds: bool,
}

pub fn metastable_recovery_experiment(
    spec: &Spectrum,
    fp: FilterParams,
    sigma: &DensityMatrix,
    region: &[usize],
    channel: &QuantumChannel,
    times: &[f64],
) -> Result<MetastableRecovery> {
    let rec = RecoveryMap::new(spec, fp, region, LindbladOptions::default())?;
    let local = rec.local_stationarity(sigma.matrix());
    let rows = times.iter().map(|&t| recovery_errors(&rec, sigma, channel, t)).collect::<Result<Vec<_>>>()?;
    let best = rows
        .iter()
        .min_by(|a, b| a.total.total_cmp(&b.total))
        .ok_or_else(|| Error::Invalid("empty time grid".into()))?;
    let (t_star, min_total) = (best.t, best.total);
    let leakage_bound_holds = rows.iter().all(|r| r.leakage <= r.t * local + 1e-8);
    Ok(MetastableRecovery { rows, local_stationarity: local, t_star, min_total, leakage_bound_holds })
}

/// Each value is below the previous one or within `PLATEAU_TOL` of it.
pub fn is_non_increasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] <= w[0] * (1.0 + PLATEAU_TOL) + 1e-12)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrongMarkovReport {
    pub strong: f64,
    pub plain: f64,
    pub per_outcome: Vec<f64>,
}

/// Σ_b ‖R[M_b σ M_b†] - p_b σ‖₁ together with the plain error ‖R[N[σ]] - σ‖₁.
pub fn strong_markov_report(
    sigma: &DensityMatrix,
    channel: &QuantumChannel,
    recovery: &dyn Fn(&CMat) -> Result<CMat>,
) -> Result<StrongMarkovReport> {
    let s = sigma.matrix();
    let mut per_outcome = Vec::with_capacity(channel.kraus().len());
    let mut recombined = CMat::zeros(s.nrows(), s.ncols());
    for k in channel.kraus() {
        let m = k * s * k.adjoint();
        let p = trace(&m).re;
        let r = recovery(&m)?;
        per_outcome.push(trace_norm(&(&r - s * c(p, 0.0))));
        recombined += r;
    }
    let strong: f64 = per_outcome.iter().sum();
    let plain = trace_norm(&(recombined - s));
    if plain > strong + 1e-10 {
        return Err(Error::Numeric(format!("plain error {plain} exceeds strong error {strong}")));
    }
    Ok(StrongMarkovReport { strong, plain, per_outcome })
}

/// One term c · left · [A, X] · right with A a single-qubit Pauli on the region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommutatorTerm {
    pub qubit: usize,
    pub pauli: char,
    pub left: String,
    pub right: String,
    pub coeff: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommutatorDecomposition {
    pub n: usize,
    pub terms: Vec<CommutatorTerm>,
}

impl CommutatorDecomposition {
    pub fn reconstruct(&self, x: &CMat) -> Result<CMat> {
        let d = x.nrows();
        let mut out = CMat::zeros(d, d);
        for t in &self.terms {
            let a = PauliString::single(self.n, t.qubit, Pauli::from_char(t.pauli)?).to_matrix();
            let l = PauliString::parse(&t.left)?.to_matrix();
            let r = PauliString::parse(&t.right)?.to_matrix();
            out += l * crate::linalg::commutator(&a, x) * r * c(t.coeff.0, t.coeff.1);
        }
        Ok(out)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.iter().map(|t| Complex64::new(t.coeff.0, t.coeff.1).norm()).fold(0.0, f64::max)
    }
}

fn lift(local: &PauliString, region: &[usize], n: usize) -> PauliString {
    let mut s = PauliString::identity(n);
    for (k, &q) in region.iter().enumerate() {
        s.letters[q] = local.letters[k];
    }
    s.phase = local.phase;
    s
}

fn restrict(s: &PauliString, keep: impl Fn(usize) -> bool) -> PauliString {
    let mut out = PauliString::identity(s.n());
    for (q, &p) in s.letters.iter().enumerate() {
        if keep(q) {
            out.letters[q] = p;
        }
    }
    out
}

/// Writes X - N†[X] = ½ Σ_V ([X, V†]V + V†[V, X]) with every Kraus V expanded in Paulis on
/// the region and every string commutator split into single-qubit commutators.
pub fn channel_commutator_decomposition(channel: &QuantumChannel) -> Result<CommutatorDecomposition> {
    let n = channel.n;
    let k = channel.region.len();
    let da = (1usize << k) as f64;
    let basis = all_pauli_strings(k);
    let mats: Vec<CMat> = basis.iter().map(|s| s.to_matrix()).collect();
    let mut acc: BTreeMap<(usize, char, String, String), Complex64> = BTreeMap::new();
    let mut add = |coef: Complex64, left: PauliString, qubit: usize, letter: Pauli, right: PauliString| {
        let ph = left.phase.to_complex() * right.phase.to_complex();
        *acc.entry((qubit, letter.as_char(), left.label(), right.label())).or_insert(ZERO) += coef * ph;
    };
    for v in &channel.local_kraus {
        let coeffs: Vec<(PauliString, Complex64)> = basis
            .iter()
            .zip(&mats)
            .map(|(s, m)| (lift(s, &channel.region, n), trace(&(m * v)) / c(da, 0.0)))
            .filter(|(_, z)| z.norm() > 1e-15)
            .collect();
        for (s, vs) in &coeffs {
            for (sp, vsp) in &coeffs {
                let w = vs.conj() * vsp * c(0.5, 0.0);
                // [X, S] S' = -Σ_j S_<j [S_j, X] S_>j S'
                for &q in &s.support() {
                    let left = restrict(s, |r| r < q);
                    let right = restrict(s, |r| r > q).mul(sp)?;
                    add(-w, left, q, s.letters[q], right);
                }
                // S [S', X] = Σ_j S S'_<j [S'_j, X] S'_>j
                for &q in &sp.support() {
                    let left = s.mul(&restrict(sp, |r| r < q))?;
                    let right = restrict(sp, |r| r > q);
                    add(w, left, q, sp.letters[q], right);
                }
            }
        }
    }
    let terms = acc
        .into_iter()
        .filter(|(_, z)| z.norm() > 1e-14)
        .map(|((qubit, pauli, left, right), z)| CommutatorTerm { qubit, pauli, left, right, coeff: (z.re, z.im) })
        .collect();
    Ok(CommutatorDecomposition { n, terms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infotheory::partial_trace;
    use crate::linalg::{kron, real_diag};
    use crate::pauli_ham::{diagonalize, gibbs_state, HamiltonianSpec};
    use crate::random::{component_rng, ginibre, random_density};

    fn fp() -> FilterParams {
        FilterParams::new(1.0, None).unwrap()
    }

    #[test]
    fn channel_constructors_are_trace_preserving() {
        let mut rng = component_rng(30, 0);
        let sig = random_density(8, &mut rng);
        for ch in [
            QuantumChannel::identity(3, &[1]).unwrap(),
            QuantumChannel::erasure(3, &[0, 2], None).unwrap(),
            QuantumChannel::depolarizing(3, &[1], 0.3).unwrap(),
            QuantumChannel::measurement(3, &[2]).unwrap(),
            QuantumChannel::random(3, &[0, 1], 3, &mut rng).unwrap(),
        ] {
            let out = ch.apply_state(&sig).unwrap();
            assert!((out.trace() - 1.0).abs() < 1e-12);
            let branches = ch.branches(&sig).unwrap();
            let psum: f64 = branches.iter().map(|b| b.probability).sum();
            assert!((psum - 1.0).abs() < 1e-12);
            let mut recomb = CMat::zeros(8, 8);
            for b in &branches {
                if let Some(s) = &b.state {
                    recomb += s.matrix() * c(b.probability, 0.0);
                }
            }
            assert!(max_abs(&(recomb - out.matrix())) < 1e-12);
        }
        assert!(QuantumChannel::new(2, &[0], vec![CMat::identity(2, 2) * c(2.0, 0.0)], ChannelKind::Custom).is_err());
    }

    #[test]
    fn erasure_replaces_region() {
        let sig = random_density(8, &mut component_rng(31, 0));
        let tau = real_diag(&[0.7, 0.3]);
        let ch = QuantumChannel::erasure(3, &[2], Some(&tau)).unwrap();
        let out = ch.apply(sig.matrix());
        let rest = partial_trace(sig.matrix(), &[0, 1], 3).unwrap();
        assert!(max_abs(&(out - kron(&rest, &tau))) < 1e-12);
    }

    #[test]
    fn z_measurement_on_plus_state() {
        let plus = CMat::from_element(2, 2, c(0.5, 0.0));
        let sig = DensityMatrix::new(kron(&plus, &real_diag(&[1.0, 0.0]))).unwrap();
        let ch = QuantumChannel::measurement(2, &[0]).unwrap();
        let b = ch.branches(&sig).unwrap();
        assert!((b[0].probability - 0.5).abs() < 1e-14 && (b[1].probability - 0.5).abs() < 1e-14);
    }

    #[test]
    fn recovery_fixed_point_and_limits() {
        let s = diagonalize(&HamiltonianSpec::ising_chain(3, 1.0).unwrap()).unwrap();
        let rho = gibbs_state(&s, 1.0).unwrap();
        let rec = RecoveryMap::new(&s, fp(), &[0], LindbladOptions::default()).unwrap();
        for &t in &[0.5, 10.0, 100.0] {
            assert!(max_abs(&(rec.apply(rho.matrix(), t).unwrap() - rho.matrix())) < 1e-8);
        }
        let sig = random_density(8, &mut component_rng(32, 0));
        assert!(max_abs(&(rec.apply(sig.matrix(), 1e-10).unwrap() - sig.matrix())) < 1e-8);
        assert!(rec.apply(sig.matrix(), 0.0).is_err());
        let out = rec.apply_state(&sig, 3.0).unwrap();
        assert!(out.min_eigenvalue() > -1e-10);
    }

    #[test]
    fn spectral_recovery_matches_augmented_exponential_and_duality() {
        let s = diagonalize(&HamiltonianSpec::random_2local(3, 9).unwrap()).unwrap();
        let rec = RecoveryMap::new(&s, fp(), &[1, 2], LindbladOptions::default()).unwrap();
        let mut rng = component_rng(33, 0);
        let x = ginibre(8, &mut rng);
        let o = ginibre(8, &mut rng);
        for &t in &[0.3, 7.0] {
            let a = rec.apply(&x, t).unwrap();
            let b = rec.generator.time_average_operator(&x, t).unwrap();
            assert!(max_abs(&(&a - &b)) < 1e-9);
            let lhs = crate::linalg::hs_inner(&rec.apply_adj(&o, t).unwrap(), &x);
            let rhs = crate::linalg::hs_inner(&o, &a);
            assert!((lhs - rhs).norm() < 1e-9);
        }
        let free = RecoveryMap::new(
            &s,
            fp(),
            &[1, 2],
            LindbladOptions { dense_max_qubits: 0, ode: crate::ode::OdeTolerance { abs: 1e-12, rel: 1e-11 }, ..Default::default() },
        )
        .unwrap();
        assert!(max_abs(&(free.apply_adj(&o, 2.0).unwrap() - rec.apply_adj(&o, 2.0).unwrap())) < 1e-8);
    }

    #[test]
    fn local_stationarity_bound() {
        let s = diagonalize(&HamiltonianSpec::ising_chain(3, 0.7).unwrap()).unwrap();
        let rec = RecoveryMap::new(&s, fp(), &[1], LindbladOptions::default()).unwrap();
        let mut rng = component_rng(34, 0);
        for &t in &[1.0, 5.0, 40.0] {
            for _ in 0..5 {
                let sig = random_density(8, &mut rng);
                let o = crate::random::random_unit_operator(8, &mut rng);
                let v = local_stationarity_pairing(&rec, &|y| rec.generator.apply_adj(y), &sig, &o, t).unwrap();
                assert!(v <= 2.0 / t + 1e-9, "{v} at t = {t}");
            }
        }
    }

    #[test]
    fn gibbs_recovery_edges() {
        let s = diagonalize(&HamiltonianSpec::ising_chain(3, 1.0).unwrap()).unwrap();
        let rho = gibbs_state(&s, 1.0).unwrap();
        let idc = QuantumChannel::identity(3, &[0]).unwrap();
        for r in gibbs_recovery_experiment(&s, fp(), &[0], &idc, &[1.0, 10.0]).unwrap() {
            assert!(r.total < 1e-8 && r.leakage < 1e-8);
        }
        let dep = QuantumChannel::depolarizing(3, &[0], 1.0).unwrap();
        let empty = gibbs_recovery_experiment(&s, fp(), &[], &dep, &[1.0, 10.0]).unwrap();
        let direct = trace_norm(&(rho.matrix() - dep.apply(rho.matrix())));
        for r in empty {
            assert!((r.total - direct).abs() < 1e-12);
        }
        let erase = QuantumChannel::erasure(3, &[0], None).unwrap();
        let rows = gibbs_recovery_experiment(&s, fp(), &[0], &erase, &[1.0, 100.0]).unwrap();
        assert!(rows[1].total < rows[0].total);
    }

    #[test]
    fn strong_markov_identity_recovery() {
        let sig = random_density(4, &mut component_rng(35, 0));
        let ch = QuantumChannel::measurement(2, &[1]).unwrap();
        let r = strong_markov_report(&sig, &ch, &|x| Ok(x.clone())).unwrap();
        let mut expect = 0.0;
        for k in ch.kraus() {
            let m = k * sig.matrix() * k.adjoint();
            let p = trace(&m).re;
            expect += trace_norm(&(m - sig.matrix() * c(p, 0.0)));
        }
        assert!((r.strong - expect).abs() < 1e-12);
        assert!(r.plain <= r.strong + 1e-10);
        // diagonal product state measured in its eigenbasis
        let prod = DensityMatrix::new(real_diag(&[1.0, 0.0, 0.0, 0.0])).unwrap();
        let r = strong_markov_report(&prod, &ch, &|x| Ok(x.clone())).unwrap();
        assert!(r.strong < 1e-14);
    }

    #[test]
    fn commutator_decomposition_reconstructs() {
        let mut rng = component_rng(36, 0);
        let channels = [
            QuantumChannel::identity(2, &[0]).unwrap(),
            QuantumChannel::depolarizing(1, &[0], 0.4).unwrap(),
            QuantumChannel::random(2, &[0, 1], 2, &mut rng).unwrap(),
            QuantumChannel::random(3, &[2, 0], 3, &mut rng).unwrap(),
        ];
        for (idx, ch) in channels.iter().enumerate() {
            let dec = channel_commutator_decomposition(ch).unwrap();
            if idx == 0 {
                assert!(dec.terms.is_empty());
            }
            assert!(dec.max_abs_coeff() <= 16f64.powi(ch.region.len() as i32));
            let d = 1usize << ch.n;
            let probes: Vec<CMat> = if ch.n == 1 {
                [Pauli::X, Pauli::Y, Pauli::Z].iter().map(|p| p.matrix()).collect()
            } else {
                (0..10).map(|_| ginibre(d, &mut rng)).collect()
            };
            for x in probes {
                let lhs = &x - ch.apply_adj(&x);
                assert!(max_abs(&(lhs - dec.reconstruct(&x).unwrap())) < 1e-9);
            }
        }
    }

    #[test]
    fn non_increasing_with_plateau() {
        assert!(is_non_increasing(&[1.0, 0.5, 0.51, 0.2]));
        assert!(!is_non_increasing(&[1.0, 0.5, 0.6]));
    }
}
