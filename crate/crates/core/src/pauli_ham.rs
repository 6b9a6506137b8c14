//! Pauli strings, few-body Hamiltonians, spectra and Gibbs states.
//!
//! Qubit 0 is the most significant bit of a basis index, so the string
//! `"ZX"` is `Z ⊗ X`.

use std::fmt;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, hermiticity_defect, op_norm, CMat, HermEig, ONE, ZERO};

/// Default ceiling on qubit count for state-level work.
pub const DEFAULT_MAX_QUBITS: usize = 10;
/// Ceiling for superoperator-level work.
pub const DEFAULT_MAX_SUPEROP_QUBITS: usize = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn from_char(ch: char) -> Result<Self> {
        match ch {
            'I' | 'i' => Ok(Pauli::I),
            'X' | 'x' => Ok(Pauli::X),
            'Y' | 'y' => Ok(Pauli::Y),
            'Z' | 'z' => Ok(Pauli::Z),
            other => Err(Error::Invalid(format!("unknown Pauli letter {other:?}"))),
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    /// Single-qubit product `self * other = phase * letter`.
    pub fn mul(self, other: Pauli) -> (Phase, Pauli) {
        use Pauli::*;
        match (self, other) {
            (I, p) | (p, I) => (Phase::One, p),
            (X, X) | (Y, Y) | (Z, Z) => (Phase::One, I),
            (X, Y) => (Phase::I, Z),
            (Y, X) => (Phase::MinusI, Z),
            (Y, Z) => (Phase::I, X),
            (Z, Y) => (Phase::MinusI, X),
            (Z, X) => (Phase::I, Y),
            (X, Z) => (Phase::MinusI, Y),
        }
    }

    pub fn matrix(self) -> CMat {
        match self {
            Pauli::I => CMat::identity(2, 2),
            Pauli::X => CMat::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
            Pauli::Y => CMat::from_row_slice(2, 2, &[ZERO, c(0.0, -1.0), c(0.0, 1.0), ZERO]),
            Pauli::Z => CMat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, c(-1.0, 0.0)]),
        }
    }
}

/// Phase in {1, i, -1, -i}, stored as a power of i.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    One,
    I,
    MinusOne,
    MinusI,
}

impl Phase {
    fn power(self) -> u8 {
        match self {
            Phase::One => 0,
            Phase::I => 1,
            Phase::MinusOne => 2,
            Phase::MinusI => 3,
        }
    }

    fn from_power(p: u8) -> Self {
        match p % 4 {
            0 => Phase::One,
            1 => Phase::I,
            2 => Phase::MinusOne,
            _ => Phase::MinusI,
        }
    }

    pub fn mul(self, other: Phase) -> Phase {
        Phase::from_power(self.power() + other.power())
    }

    pub fn conj(self) -> Phase {
        Phase::from_power(4 - self.power())
    }

    pub fn to_complex(self) -> num_complex::Complex64 {
        match self {
            Phase::One => c(1.0, 0.0),
            Phase::I => c(0.0, 1.0),
            Phase::MinusOne => c(-1.0, 0.0),
            Phase::MinusI => c(0.0, -1.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PauliString {
    pub letters: Vec<Pauli>,
    pub phase: Phase,
}

impl PauliString {
    pub fn identity(n: usize) -> Self {
        Self { letters: vec![Pauli::I; n], phase: Phase::One }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let letters = s.chars().map(Pauli::from_char).collect::<Result<Vec<_>>>()?;
        if letters.is_empty() {
            return Err(Error::Invalid("empty Pauli string".into()));
        }
        Ok(Self { letters, phase: Phase::One })
    }

    pub fn single(n: usize, qubit: usize, p: Pauli) -> Self {
        let mut s = Self::identity(n);
        s.letters[qubit] = p;
        s
    }

    pub fn n(&self) -> usize {
        self.letters.len()
    }

    pub fn support(&self) -> Vec<usize> {
        self.letters
            .iter()
            .enumerate()
            .filter(|(_, &p)| p != Pauli::I)
            .map(|(q, _)| q)
            .collect()
    }

    pub fn weight(&self) -> usize {
        self.support().len()
    }

    pub fn is_hermitian(&self) -> bool {
        matches!(self.phase, Phase::One | Phase::MinusOne)
    }

    pub fn mul(&self, other: &PauliString) -> Result<PauliString> {
        if self.n() != other.n() {
            return Err(Error::Dimension(format!("{} vs {} qubits", self.n(), other.n())));
        }
        let mut phase = self.phase.mul(other.phase);
        let letters = self
            .letters
            .iter()
            .zip(&other.letters)
            .map(|(&a, &b)| {
                let (ph, p) = a.mul(b);
                phase = phase.mul(ph);
                p
            })
            .collect();
        Ok(PauliString { letters, phase })
    }

    pub fn dagger(&self) -> PauliString {
        PauliString { letters: self.letters.clone(), phase: self.phase.conj() }
    }

    /// Letters only, without the phase.
    pub fn label(&self) -> String {
        self.letters.iter().map(|p| p.as_char()).collect()
    }

    /// Dense matrix via the bit-flip/sign action P|c> = phase · i^{#Y} (-1)^{|c & z|} |c ^ x>.
    pub fn to_matrix(&self) -> CMat {
        let n = self.n();
        let d = 1usize << n;
        let mut xmask = 0usize;
        let mut zmask = 0usize;
        let mut ny = 0u8;
        for (q, &p) in self.letters.iter().enumerate() {
            let bit = 1usize << (n - 1 - q);
            match p {
                Pauli::I => {}
                Pauli::X => xmask |= bit,
                Pauli::Z => zmask |= bit,
                Pauli::Y => {
                    xmask |= bit;
                    zmask |= bit;
                    ny += 1;
                }
            }
        }
        let base = self.phase.mul(Phase::from_power(ny)).to_complex();
        let mut m = CMat::zeros(d, d);
        for col in 0..d {
            let sign = if (col & zmask).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            m[(col ^ xmask, col)] = base * sign;
        }
        m
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ph = match self.phase {
            Phase::One => "",
            Phase::I => "i",
            Phase::MinusOne => "-",
            Phase::MinusI => "-i",
        };
        write!(f, "{ph}{}", self.label())
    }
}

/// Bit of `qubit` inside a basis index of an `n`-qubit register.
#[inline]
pub fn qubit_bit(index: usize, qubit: usize, n: usize) -> usize {
    (index >> (n - 1 - qubit)) & 1
}

/// Embed an operator acting on `support` (first listed qubit most significant) into n qubits.
pub fn embed(block: &CMat, support: &[usize], n: usize) -> Result<CMat> {
    let k = support.len();
    if block.nrows() != 1 << k || block.ncols() != 1 << k {
        return Err(Error::Dimension(format!(
            "block is {}x{} but support has {k} qubits",
            block.nrows(),
            block.ncols()
        )));
    }
    if support.iter().any(|&q| q >= n) {
        return Err(Error::Dimension(format!("support {support:?} outside {n} qubits")));
    }
    let d = 1usize << n;
    let mut mask = 0usize;
    for &q in support {
        mask |= 1 << (n - 1 - q);
    }
    let local = |idx: usize| support.iter().fold(0usize, |acc, &q| (acc << 1) | qubit_bit(idx, q, n));
    let mut m = CMat::zeros(d, d);
    for r in 0..d {
        let lr = local(r);
        for col in 0..d {
            if (r & !mask) == (col & !mask) {
                m[(r, col)] = block[(lr, local(col))];
            }
        }
    }
    Ok(m)
}

#[derive(Clone, Debug)]
pub enum TermOp {
    Pauli(PauliString),
    Dense { support: Vec<usize>, block: CMat },
}

#[derive(Clone, Debug)]
pub struct Term {
    pub op: TermOp,
    pub coeff: f64,
}

impl Term {
    pub fn pauli(s: &str, coeff: f64) -> Result<Self> {
        Ok(Self { op: TermOp::Pauli(PauliString::parse(s)?), coeff })
    }

    pub fn support(&self) -> Vec<usize> {
        match &self.op {
            TermOp::Pauli(p) => p.support(),
            TermOp::Dense { support, .. } => {
                let mut s = support.clone();
                s.sort_unstable();
                s
            }
        }
    }

    pub fn matrix(&self, n: usize) -> Result<CMat> {
        let m = match &self.op {
            TermOp::Pauli(p) => {
                if p.n() != n {
                    return Err(Error::Dimension(format!("term {p} has {} qubits, model has {n}", p.n())));
                }
                p.to_matrix()
            }
            TermOp::Dense { support, block } => embed(block, support, n)?,
        };
        Ok(m * c(self.coeff, 0.0))
    }

    /// Norm of the local operator (not embedded).
    pub fn local_norm(&self) -> f64 {
        match &self.op {
            TermOp::Pauli(_) => self.coeff.abs(),
            TermOp::Dense { block, .. } => self.coeff.abs() * op_norm(block),
        }
    }
}

/// Few-body Hamiltonian as a list of local terms.
#[derive(Clone, Debug)]
pub struct HamiltonianSpec {
    pub n: usize,
    pub terms: Vec<Term>,
}

impl HamiltonianSpec {
    pub fn new(n: usize, terms: Vec<Term>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Invalid("model needs at least one qubit".into()));
        }
        for t in &terms {
            match &t.op {
                TermOp::Pauli(p) => {
                    if p.n() != n {
                        return Err(Error::Dimension(format!("term {p} has {} qubits, model has {n}", p.n())));
                    }
                    if !p.is_hermitian() {
                        return Err(Error::NonHermitian(format!("term {p}")));
                    }
                }
                TermOp::Dense { support, block } => {
                    if block.nrows() != 1 << support.len() || block.ncols() != block.nrows() {
                        return Err(Error::Dimension("dense block size does not match its support".into()));
                    }
                    if support.iter().any(|&q| q >= n) {
                        return Err(Error::Dimension(format!("support {support:?} outside {n} qubits")));
                    }
                    let mut s = support.clone();
                    s.sort_unstable();
                    s.dedup();
                    if s.len() != support.len() {
                        return Err(Error::Invalid(format!("repeated qubit in support {support:?}")));
                    }
                    if hermiticity_defect(block) > 1e-12 * (1.0 + block.norm()) {
                        return Err(Error::NonHermitian(format!("dense block on {support:?}")));
                    }
                }
            }
            if !t.coeff.is_finite() {
                return Err(Error::Invalid("non-finite coefficient".into()));
            }
            if t.local_norm() > 1.0 + 1e-12 {
                return Err(Error::Invalid(format!("term norm {} exceeds 1", t.local_norm())));
            }
        }
        Ok(Self { n, terms })
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn assemble_dense(&self) -> Result<CMat> {
        self.assemble_dense_with_limit(max_qubits())
    }

    pub fn assemble_dense_with_limit(&self, max_n: usize) -> Result<CMat> {
        if self.n > max_n {
            return Err(Error::Resource(format!("{} qubits exceeds limit {max_n}", self.n)));
        }
        let d = self.dim();
        let mut h = CMat::zeros(d, d);
        for t in &self.terms {
            h += t.matrix(self.n)?;
        }
        Ok(h)
    }

    /// Maximum number of terms (self included) sharing a qubit with any one term.
    pub fn interaction_degree(&self) -> usize {
        let supports: Vec<Vec<usize>> = self.terms.iter().map(|t| t.support()).collect();
        supports
            .iter()
            .map(|a| supports.iter().filter(|b| b.iter().any(|q| a.contains(q))).count().max(1))
            .max()
            .unwrap_or(0)
    }

    /// Terms whose support meets both `region` and its complement.
    pub fn boundary_terms(&self, region: &[usize]) -> Vec<Term> {
        self.terms
            .iter()
            .filter(|t| {
                let s = t.support();
                s.iter().any(|q| region.contains(q)) && s.iter().any(|q| !region.contains(q))
            })
            .cloned()
            .collect()
    }

    /// Transverse-field Ising chain -Σ Z_i Z_{i+1} - field Σ X_i, open boundary.
    pub fn ising_chain(n: usize, field: f64) -> Result<Self> {
        let mut terms = Vec::new();
        for i in 0..n.saturating_sub(1) {
            let mut p = PauliString::identity(n);
            p.letters[i] = Pauli::Z;
            p.letters[i + 1] = Pauli::Z;
            terms.push(Term { op: TermOp::Pauli(p), coeff: -1.0 });
        }
        if field != 0.0 {
            for i in 0..n {
                terms.push(Term { op: TermOp::Pauli(PauliString::single(n, i, Pauli::X)), coeff: -field });
            }
        }
        Self::new(n, terms)
    }

    /// H = Z on one qubit.
    pub fn single_qubit() -> Result<Self> {
        Self::new(1, vec![Term::pauli("Z", 1.0)?])
    }

    /// Nearest-neighbour chain of random dense two-qubit blocks, each scaled to unit norm.
    pub fn random_2local(n: usize, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Invalid("random_2local needs n >= 2".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let paulis = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];
        let mut terms = Vec::new();
        for i in 0..n - 1 {
            let mut block = CMat::zeros(4, 4);
            for a in paulis {
                for b in paulis {
                    if a == Pauli::I && b == Pauli::I {
                        continue;
                    }
                    let w: f64 = rng.random_range(-1.0..1.0);
                    block += a.matrix().kronecker(&b.matrix()) * c(w, 0.0);
                }
            }
            let norm = op_norm(&block);
            block /= c(norm, 0.0);
            terms.push(Term { op: TermOp::Dense { support: vec![i, i + 1], block }, coeff: 1.0 });
        }
        Self::new(n, terms)
    }

    pub fn to_file(&self) -> HamiltonianFile {
        let terms = self
            .terms
            .iter()
            .map(|t| match &t.op {
                TermOp::Pauli(p) => TermFile::Pauli { paulis: p.label(), coeff: t.coeff * p.phase.to_complex().re },
                TermOp::Dense { support, block } => TermFile::Dense {
                    support: support.clone(),
                    re: block.transpose().iter().map(|z| z.re).collect(),
                    im: block.transpose().iter().map(|z| z.im).collect(),
                    coeff: t.coeff,
                },
            })
            .collect();
        HamiltonianFile::Explicit(ExplicitFile { n: self.n, terms })
    }
}

/// Qubit limit from `METASTAB_MAX_QUBITS`, default 10.
pub fn max_qubits() -> usize {
    std::env::var("METASTAB_MAX_QUBITS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(DEFAULT_MAX_QUBITS)
}

/// Serialized Hamiltonian: explicit term list or a named preset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HamiltonianFile {
    Explicit(ExplicitFile),
    Preset(PresetFile),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitFile {
    pub n: usize,
    pub terms: Vec<TermFile>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetFile {
    /// `ising_chain`, `classical_ising_chain`, `single_qubit` or `random_2local(SEED)`.
    pub preset: String,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub field: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TermFile {
    Pauli {
        paulis: String,
        coeff: f64,
    },
    /// Row-major real and imaginary parts of a 2^k x 2^k block.
    Dense {
        support: Vec<usize>,
        re: Vec<f64>,
        im: Vec<f64>,
        coeff: f64,
    },
}

impl HamiltonianFile {
    pub fn build(&self) -> Result<HamiltonianSpec> {
        match self {
            HamiltonianFile::Explicit(ExplicitFile { n, terms }) => {
                let terms = terms
                    .iter()
                    .map(|t| match t {
                        TermFile::Pauli { paulis, coeff } => Term::pauli(paulis, *coeff),
                        TermFile::Dense { support, re, im, coeff } => {
                            let k = 1usize << support.len();
                            if re.len() != k * k || im.len() != k * k {
                                return Err(Error::Dimension("dense block entries do not match support".into()));
                            }
                            let vals: Vec<_> = re.iter().zip(im).map(|(&a, &b)| c(a, b)).collect();
                            Ok(Term {
                                op: TermOp::Dense { support: support.clone(), block: CMat::from_row_slice(k, k, &vals) },
                                coeff: *coeff,
                            })
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                HamiltonianSpec::new(*n, terms)
            }
            HamiltonianFile::Preset(p) => p.build(),
        }
    }
}

impl PresetFile {
    pub fn build(&self) -> Result<HamiltonianSpec> {
        let name = self.preset.trim();
        let need_n = || self.n.ok_or_else(|| Error::Config(format!("preset {name} needs n")));
        if let Some(rest) = name.strip_prefix("random_2local") {
            let seed = rest
                .trim_start_matches('(')
                .trim_end_matches(')')
                .trim()
                .parse::<u64>()
                .map_err(|_| Error::Config(format!("bad seed in preset {name}")))?;
            return HamiltonianSpec::random_2local(need_n()?, seed);
        }
        match name {
            "ising_chain" => HamiltonianSpec::ising_chain(need_n()?, self.field.unwrap_or(1.0)),
            "classical_ising_chain" => HamiltonianSpec::ising_chain(need_n()?, 0.0),
            "single_qubit" => HamiltonianSpec::single_qubit(),
            other => Err(Error::Config(format!("unknown preset {other}"))),
        }
    }
}

/// Full eigendecomposition of a Hamiltonian, with energies grouped into eigenspaces.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub energies: Vec<f64>,
    pub basis: CMat,
    /// Distinct energies and the eigenvector columns spanning each eigenspace.
    pub levels: Vec<(f64, Vec<usize>)>,
    pub bohr_frequencies: Vec<f64>,
    pub tolerance: f64,
}

impl Spectrum {
    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn projector(&self, level: usize) -> CMat {
        let d = self.dim();
        let cols = &self.levels[level].1;
        let mut v = CMat::zeros(d, cols.len());
        for (k, &j) in cols.iter().enumerate() {
            v.set_column(k, &self.basis.column(j));
        }
        &v * v.adjoint()
    }

    pub fn reconstruct(&self) -> CMat {
        let mut h = CMat::zeros(self.dim(), self.dim());
        for (k, (e, _)) in self.levels.iter().enumerate() {
            h += self.projector(k) * c(*e, 0.0);
        }
        h
    }

    pub fn norm(&self) -> f64 {
        self.energies.iter().fold(0.0f64, |m, e| m.max(e.abs()))
    }
}

/// Merge sorted values closer than `tol` into representatives.
pub(crate) fn dedup_sorted(values: &mut Vec<f64>, tol: f64) {
    let mut out: Vec<f64> = Vec::with_capacity(values.len());
    for &v in values.iter() {
        match out.last() {
            Some(&last) if (v - last).abs() <= tol => {}
            _ => out.push(v),
        }
    }
    *values = out;
}

pub fn diagonalize_matrix(h: &CMat) -> Result<Spectrum> {
    if hermiticity_defect(h) > 1e-12 * (1.0 + h.norm()) {
        return Err(Error::NonHermitian("hamiltonian".into()));
    }
    let eig = HermEig::new(h)?;
    let scale = eig.values.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let tol = 1e-9 * scale.max(1e-300);
    let mut levels: Vec<(f64, Vec<usize>)> = Vec::new();
    for (j, &e) in eig.values.iter().enumerate() {
        match levels.last_mut() {
            Some((e0, cols)) if (e - *e0).abs() <= tol => cols.push(j),
            _ => levels.push((e, vec![j])),
        }
    }
    for (e, cols) in levels.iter_mut() {
        *e = cols.iter().map(|&j| eig.values[j]).sum::<f64>() / cols.len() as f64;
    }
    let mut energies = eig.values.clone();
    for (e, cols) in &levels {
        for &j in cols {
            energies[j] = *e;
        }
    }
    let mut bohr: Vec<f64> = Vec::with_capacity(levels.len() * levels.len());
    for (a, _) in &levels {
        for (b, _) in &levels {
            bohr.push(a - b);
        }
    }
    bohr.sort_by(f64::total_cmp);
    dedup_sorted(&mut bohr, tol);
    // keep the set exactly symmetric and exactly containing 0
    for v in bohr.iter_mut() {
        if v.abs() <= tol {
            *v = 0.0;
        }
    }
    Ok(Spectrum { energies, basis: eig.vectors, levels, bohr_frequencies: bohr, tolerance: tol })
}

pub fn diagonalize(h: &HamiltonianSpec) -> Result<Spectrum> {
    diagonalize_matrix(&h.assemble_dense()?)
}

/// Positive semidefinite unit-trace matrix with a lazily computed eigendecomposition.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    matrix: CMat,
    eig: OnceLock<HermEig>,
}

impl DensityMatrix {
    pub const PSD_TOL: f64 = 1e-10;

    pub fn new(matrix: CMat) -> Result<Self> {
        let d = matrix.nrows();
        if d != matrix.ncols() || d == 0 {
            return Err(Error::Dimension("density matrix must be square and nonempty".into()));
        }
        if hermiticity_defect(&matrix) > 1e-9 {
            return Err(Error::NonHermitian("density matrix".into()));
        }
        let dm = Self { matrix: crate::linalg::hermitian_part(&matrix), eig: OnceLock::new() };
        let tr = dm.trace();
        if (tr - 1.0).abs() > 1e-9 {
            return Err(Error::Invalid(format!("trace {tr} != 1")));
        }
        if dm.min_eigenvalue() < -Self::PSD_TOL {
            return Err(Error::Invalid(format!("negative eigenvalue {}", dm.min_eigenvalue())));
        }
        Ok(dm)
    }

    /// Hermitize, clip tiny negative eigenvalues and renormalize. For outputs of numerical maps.
    pub fn from_numeric(matrix: CMat) -> Result<Self> {
        let h = crate::linalg::hermitian_part(&matrix);
        let tr = crate::linalg::trace(&h).re;
        if !(tr.is_finite() && tr > 0.0) {
            return Err(Error::Numeric(format!("state has trace {tr}")));
        }
        Self::new(h / c(tr, 0.0))
    }

    pub fn maximally_mixed(d: usize) -> Self {
        Self { matrix: CMat::identity(d, d) / c(d as f64, 0.0), eig: OnceLock::new() }
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMat {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        crate::linalg::trace(&self.matrix).re
    }

    pub fn eig(&self) -> &HermEig {
        self.eig.get_or_init(|| HermEig::new(&self.matrix).expect("hermitian eigensolver"))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eig().min()
    }

    pub fn is_full_rank(&self, tol: f64) -> bool {
        self.min_eigenvalue() > tol
    }
}

/// ρ = e^{-βH}/Z built from the spectrum.
pub fn gibbs_state(spec: &Spectrum, beta: f64) -> Result<DensityMatrix> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::Invalid(format!("inverse temperature {beta} must be finite and >= 0")));
    }
    let weights = gibbs_weights(&spec.energies, beta);
    let d = spec.dim();
    let mut scaled = spec.basis.clone();
    for j in 0..d {
        for i in 0..d {
            scaled[(i, j)] *= weights[j];
        }
    }
    DensityMatrix::new(&scaled * spec.basis.adjoint())
}

/// Normalized Boltzmann weights, shifted by the ground energy for stability.
pub fn gibbs_weights(energies: &[f64], beta: f64) -> Vec<f64> {
    let e0 = energies.iter().cloned().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = energies.iter().map(|e| (-beta * (e - e0)).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

/// Log partition function log Tr e^{-βH}.
pub fn log_partition(spec: &Spectrum, beta: f64) -> f64 {
    let e0 = spec.energies.iter().cloned().fold(f64::INFINITY, f64::min);
    let z: f64 = spec.energies.iter().map(|e| (-beta * (e - e0)).exp()).sum();
    z.ln() - beta * e0
}

/// {X_q, Y_q, Z_q} for every q in the region, as n-qubit strings.
pub fn single_qubit_jump_set(n: usize, region: &[usize]) -> Vec<PauliString> {
    region
        .iter()
        .flat_map(|&q| [Pauli::X, Pauli::Y, Pauli::Z].into_iter().map(move |p| PauliString::single(n, q, p)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{commutator, max_abs};

    fn diag(v: &[f64]) -> CMat {
        crate::linalg::real_diag(v)
    }

    #[test]
    fn single_z_assembles_to_diag() {
        let h = HamiltonianSpec::new(1, vec![Term::pauli("Z", 1.0).unwrap()]).unwrap();
        assert_eq!(h.assemble_dense().unwrap(), diag(&[1.0, -1.0]));
    }

    #[test]
    fn empty_model_is_zero() {
        let h = HamiltonianSpec::new(2, vec![]).unwrap();
        assert_eq!(h.assemble_dense().unwrap(), CMat::zeros(4, 4));
    }

    #[test]
    fn zz_by_hand() {
        let h = HamiltonianSpec::new(2, vec![Term::pauli("ZZ", 1.0).unwrap()]).unwrap();
        assert_eq!(h.assemble_dense().unwrap(), diag(&[1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn qubit_zero_is_most_significant() {
        let m = PauliString::parse("XI").unwrap().to_matrix();
        // X on qubit 0 maps |00> (index 0) to |10> (index 2)
        assert_eq!(m[(2, 0)], ONE);
        let y = PauliString::parse("Y").unwrap().to_matrix();
        assert_eq!(y, Pauli::Y.matrix());
    }

    #[test]
    fn to_matrix_matches_kronecker() {
        let s = PauliString::parse("XYZ").unwrap();
        let k = Pauli::X.matrix().kronecker(&Pauli::Y.matrix()).kronecker(&Pauli::Z.matrix());
        assert!(max_abs(&(s.to_matrix() - k)) < 1e-15);
    }

    #[test]
    fn product_closure_on_all_two_qubit_pairs() {
        let letters = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];
        let mut all = Vec::new();
        for a in letters {
            for b in letters {
                all.push(PauliString { letters: vec![a, b], phase: Phase::One });
            }
        }
        for p in &all {
            for q in &all {
                let r = p.mul(q).unwrap();
                let direct = p.to_matrix() * q.to_matrix();
                assert!(max_abs(&(r.to_matrix() - direct)) < 1e-15, "{p} * {q}");
            }
            let sq = p.mul(p).unwrap();
            assert_eq!(sq.label(), "II");
            assert_eq!(sq.phase, Phase::One);
        }
    }

    #[test]
    fn spectrum_of_z() {
        let h = HamiltonianSpec::single_qubit().unwrap();
        let s = diagonalize(&h).unwrap();
        assert_eq!(s.energies, vec![-1.0, 1.0]);
        assert_eq!(s.bohr_frequencies, vec![-2.0, 0.0, 2.0]);
    }

    #[test]
    fn spectrum_of_zz_has_doubly_degenerate_levels() {
        let h = HamiltonianSpec::new(2, vec![Term::pauli("ZZ", 1.0).unwrap()]).unwrap();
        let s = diagonalize(&h).unwrap();
        assert_eq!(s.levels.len(), 2);
        assert!(s.levels.iter().all(|(_, cols)| cols.len() == 2));
        assert_eq!(s.bohr_frequencies, vec![-2.0, 0.0, 2.0]);
    }

    #[test]
    fn projectors_complete_and_orthogonal() {
        let h = HamiltonianSpec::random_2local(3, 11).unwrap();
        let s = diagonalize(&h).unwrap();
        let mut sum = CMat::zeros(8, 8);
        for k in 0..s.levels.len() {
            let p = s.projector(k);
            assert!(max_abs(&(&p * &p - &p)) < 1e-12);
            sum += p;
        }
        assert!(max_abs(&(sum - CMat::identity(8, 8))) < 1e-12);
        let hm = h.assemble_dense().unwrap();
        assert!(max_abs(&(s.reconstruct() - &hm)) < 1e-12 * op_norm(&hm));
        assert!(s.bohr_frequencies.contains(&0.0));
        for &v in &s.bohr_frequencies {
            assert!(s.bohr_frequencies.iter().any(|&w| (w + v).abs() <= 2.0 * s.tolerance));
        }
    }

    #[test]
    fn gibbs_two_level_by_hand() {
        let s = diagonalize(&HamiltonianSpec::single_qubit().unwrap()).unwrap();
        let rho = gibbs_state(&s, 1.0).unwrap();
        let e = std::f64::consts::E;
        let z = e + 1.0 / e;
        assert!((rho.matrix()[(0, 0)].re - 1.0 / e / z).abs() < 1e-15);
        assert!((rho.matrix()[(1, 1)].re - e / z).abs() < 1e-15);
    }

    #[test]
    fn gibbs_infinite_temperature_and_ground_limit() {
        let h = HamiltonianSpec::random_2local(2, 5).unwrap();
        let s = diagonalize(&h).unwrap();
        let rho0 = gibbs_state(&s, 0.0).unwrap();
        assert!(max_abs(&(rho0.matrix() - CMat::identity(4, 4) * c(0.25, 0.0))) < 1e-14);
        let cold = gibbs_state(&s, 400.0).unwrap();
        let g = s.basis.column(0).into_owned();
        let proj = &g * g.adjoint();
        assert!(max_abs(&(cold.matrix() - proj)) < 1e-10);
        assert!(gibbs_state(&s, -1.0).is_err());
    }

    #[test]
    fn gibbs_commutes_and_partition_matches_expm() {
        let h = HamiltonianSpec::ising_chain(3, 0.7).unwrap();
        let hm = h.assemble_dense().unwrap();
        let s = diagonalize(&h).unwrap();
        let rho = gibbs_state(&s, 1.3).unwrap();
        assert!(max_abs(&commutator(&hm, rho.matrix())) <= 1e-10 * op_norm(&hm));
        let z_expm = crate::linalg::trace(&crate::linalg::expm(&(hm * c(-1.3, 0.0)))).re;
        let z_spec = log_partition(&s, 1.3).exp();
        assert!(((z_expm - z_spec) / z_spec).abs() < 1e-10);
    }

    #[test]
    fn interaction_degree_examples() {
        let one = HamiltonianSpec::new(2, vec![Term::pauli("ZZ", 1.0).unwrap()]).unwrap();
        assert_eq!(one.interaction_degree(), 1);
        let chain = HamiltonianSpec::ising_chain(5, 0.0).unwrap();
        assert_eq!(chain.interaction_degree(), 3);
        let disjoint =
            HamiltonianSpec::new(4, vec![Term::pauli("ZZII", 1.0).unwrap(), Term::pauli("IIXX", 1.0).unwrap()])
                .unwrap();
        assert_eq!(disjoint.interaction_degree(), 1);
    }

    #[test]
    fn jump_sets() {
        let j = single_qubit_jump_set(2, &[0]);
        let labels: Vec<_> = j.iter().map(|p| p.label()).collect();
        assert_eq!(labels, vec!["XI", "YI", "ZI"]);
        assert!(single_qubit_jump_set(3, &[]).is_empty());
        assert_eq!(single_qubit_jump_set(3, &[0, 1, 2]).len(), 9);
    }

    #[test]
    fn rejects_oversized_and_nonhermitian_terms() {
        assert!(HamiltonianSpec::new(1, vec![Term::pauli("Z", 1.5).unwrap()]).is_err());
        let bad = CMat::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO]);
        let t = Term { op: TermOp::Dense { support: vec![0], block: bad }, coeff: 1.0 };
        assert!(matches!(HamiltonianSpec::new(1, vec![t]), Err(Error::NonHermitian(_))));
    }

    #[test]
    fn dimension_limit_is_enforced() {
        let h = HamiltonianSpec::ising_chain(4, 0.0).unwrap();
        assert!(matches!(h.assemble_dense_with_limit(3), Err(Error::Resource(_))));
    }

    #[test]
    fn json_round_trip_of_presets() {
        let f: HamiltonianFile = serde_json::from_str(r#"{"preset": "random_2local(4)", "n": 3}"#).unwrap();
        let h = f.build().unwrap();
        let back: HamiltonianFile = serde_json::from_str(&serde_json::to_string(&h.to_file()).unwrap()).unwrap();
        let h2 = back.build().unwrap();
        assert!(max_abs(&(h.assemble_dense().unwrap() - h2.assemble_dense().unwrap())) < 1e-15);
        let e: HamiltonianFile =
            serde_json::from_str(r#"{"n": 2, "terms": [{"paulis": "ZZ", "coeff": 0.5}]}"#).unwrap();
        assert_eq!(e.build().unwrap().terms.len(), 1);
    }

    #[test]
    fn embed_matches_kron_for_adjacent_support() {
        let b = Pauli::X.matrix().kronecker(&Pauli::Y.matrix());
        let e = embed(&b, &[1, 2], 3).unwrap();
        let k = Pauli::I.matrix().kronecker(&b);
        assert!(max_abs(&(e - k)) < 1e-15);
        let swapped = embed(&b, &[2, 1], 3).unwrap();
        let k2 = Pauli::I.matrix().kronecker(&Pauli::Y.matrix().kronecker(&Pauli::X.matrix()));
        assert!(max_abs(&(swapped - k2)) < 1e-15);
    }
}
