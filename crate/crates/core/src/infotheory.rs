//! Partial traces, entropies, mutual information across a cut, boundary energy and the
//! area-law audit.

use std::f64::consts::LN_2;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, kron, op_norm, trace, CMat, HermEig};
use crate::pauli_ham::{DensityMatrix, HamiltonianSpec, Term};

/// Eigenvalues at or below this count as zero inside entropies.
pub const ENTROPY_FLOOR: f64 = 1e-14;

fn check_qubits(keep: &[usize], n: usize) -> Result<()> {
    let mut s = keep.to_vec();
    s.sort_unstable();
    s.dedup();
    if s.len() != keep.len() || keep.iter().any(|&q| q >= n) {
        return Err(Error::Invalid(format!("{keep:?} is not a set of distinct qubits below {n}")));
    }
    Ok(())
}

/// Reduced operator on `keep` (ascending qubit order), tracing out the rest.
pub fn partial_trace(m: &CMat, keep: &[usize], n: usize) -> Result<CMat> {
    check_qubits(keep, n)?;
    if m.nrows() != 1 << n || m.ncols() != 1 << n {
        return Err(Error::Dimension(format!("operator is not on {n} qubits")));
    }
    let mut keep = keep.to_vec();
    keep.sort_unstable();
    let rest: Vec<usize> = (0..n).filter(|q| !keep.contains(q)).collect();
    let k = keep.len();
    let compose = |kept: usize, traced: usize| -> usize {
        let mut idx = 0usize;
        for (pos, &q) in keep.iter().enumerate() {
            idx |= ((kept >> (k - 1 - pos)) & 1) << (n - 1 - q);
        }
        for (pos, &q) in rest.iter().enumerate() {
            idx |= ((traced >> (rest.len() - 1 - pos)) & 1) << (n - 1 - q);
        }
        idx
    };
    let dk = 1usize << k;
    let dr = 1usize << rest.len();
    let mut out = CMat::zeros(dk, dk);
    for a in 0..dk {
        for b in 0..dk {
            let mut acc = crate::linalg::ZERO;
            for r in 0..dr {
                acc += m[(compose(a, r), compose(b, r))];
            }
            out[(a, b)] = acc;
        }
    }
    Ok(out)
}

pub fn partial_trace_state(sigma: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix> {
    let n = sigma.dim().trailing_zeros() as usize;
    DensityMatrix::new(partial_trace(sigma.matrix(), keep, n)?)
}

/// Reorders tensor factors: `m` acts on qubits listed in `order` (first most significant);
/// the result acts on 0..n in the standard order.
pub fn permute_qubits(m: &CMat, order: &[usize]) -> Result<CMat> {
    let n = order.len();
    check_qubits(order, n)?;
    let d = 1usize << n;
    let map = |idx: usize| -> usize {
        let mut out = 0usize;
        for (pos, &q) in order.iter().enumerate() {
            out |= ((idx >> (n - 1 - pos)) & 1) << (n - 1 - q);
        }
        out
    };
    let perm: Vec<usize> = (0..d).map(map).collect();
    let mut out = CMat::zeros(d, d);
    for r in 0..d {
        for col in 0..d {
            out[(perm[r], perm[col])] = m[(r, col)];
        }
    }
    Ok(out)
}

/// S(σ) = -Tr σ log σ in nats.
pub fn von_neumann_entropy(sigma: &DensityMatrix) -> f64 {
    entropy_of(sigma.eig())
}

fn entropy_of(e: &HermEig) -> f64 {
    -e.values.iter().filter(|&&v| v > ENTROPY_FLOOR).map(|&v| v * v.ln()).sum::<f64>()
}

/// Region A, its complement and the terms crossing the cut.
#[derive(Clone, Debug)]
pub struct Bipartition {
    pub n: usize,
    pub region: Vec<usize>,
    pub complement: Vec<usize>,
    pub boundary: Vec<Term>,
}

impl Bipartition {
    pub fn new(h: &HamiltonianSpec, region: &[usize]) -> Result<Self> {
        check_qubits(region, h.n)?;
        let mut region = region.to_vec();
        region.sort_unstable();
        let complement = (0..h.n).filter(|q| !region.contains(q)).collect();
        Ok(Self { n: h.n, boundary: h.boundary_terms(&region), region, complement })
    }

    pub fn label(&self) -> String {
        let r: Vec<String> = self.region.iter().map(|q| q.to_string()).collect();
        format!("[{}]", r.join(" "))
    }

    pub fn boundary_operator(&self) -> Result<CMat> {
        let d = 1usize << self.n;
        let mut out = CMat::zeros(d, d);
        for t in &self.boundary {
            out += t.matrix(self.n)?;
        }
        Ok(out)
    }

    /// σ_Ā ⊗ σ_A with factors placed back in the original qubit order.
    pub fn product_of_marginals(&self, sigma: &CMat) -> Result<CMat> {
        if self.region.is_empty() || self.complement.is_empty() {
            return Ok(sigma.clone());
        }
        let a = partial_trace(sigma, &self.region, self.n)?;
        let b = partial_trace(sigma, &self.complement, self.n)?;
        let order: Vec<usize> = self.region.iter().chain(&self.complement).copied().collect();
        permute_qubits(&kron(&a, &b), &order)
    }
}

/// I(A:Ā) = S(σ_A) + S(σ_Ā) - S(σ).
pub fn mutual_information(sigma: &DensityMatrix, bip: &Bipartition) -> Result<f64> {
    if bip.region.is_empty() || bip.complement.is_empty() {
        return Ok(0.0);
    }
    let a = partial_trace_state(sigma, &bip.region)?;
    let b = partial_trace_state(sigma, &bip.complement)?;
    Ok(von_neumann_entropy(&a) + von_neumann_entropy(&b) - von_neumann_entropy(sigma))
}

/// ‖∂H‖.
pub fn boundary_norm(bip: &Bipartition) -> Result<f64> {
    if bip.boundary.is_empty() {
        return Ok(0.0);
    }
    Ok(op_norm(&bip.boundary_operator()?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergyDecomposition {
    /// βF(σ) - βF(σ_Ā ⊗ σ_A).
    pub lhs: f64,
    pub mutual_information: f64,
    /// β Tr[∂H(σ - σ_Ā ⊗ σ_A)].
    pub boundary_energy: f64,
    pub residual: f64,
}

pub fn free_energy_decomposition(
    sigma: &DensityMatrix,
    bip: &Bipartition,
    h: &HamiltonianSpec,
    beta: f64,
) -> Result<FreeEnergyDecomposition> {
    let hm = h.assemble_dense()?;
    let prod = DensityMatrix::new(bip.product_of_marginals(sigma.matrix())?)?;
    let f = |s: &DensityMatrix| -> Result<f64> { Ok(beta * crate::functionals::free_energy(s, &hm, beta)?) };
    let lhs = f(sigma)? - f(&prod)?;
    let mi = mutual_information(sigma, bip)?;
    let boundary_energy = if bip.boundary.is_empty() {
        0.0
    } else {
        beta * trace(&(bip.boundary_operator()? * (sigma.matrix() - prod.matrix()))).re
    };
    Ok(FreeEnergyDecomposition { lhs, mutual_information: mi, boundary_energy, residual: lhs - mi - boundary_energy })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub cut: String,
    pub mi_nats: f64,
    pub mi_bits: f64,
    /// 2β‖∂H‖.
    pub gibbs_bound: f64,
    /// gibbs_bound plus the recovery correction 4ε max(log(1/ε), β‖H‖, n).
    pub bound: f64,
    pub markov_error: Option<f64>,
    pub slack: f64,
    pub pass: bool,
}

/// Per cut: mutual information against 2β‖∂H‖ + 4ε max(log(1/ε), β‖H‖, n).
pub fn area_law_audit(
    sigma: &DensityMatrix,
    h: &HamiltonianSpec,
    beta: f64,
    cuts: &[Vec<usize>],
    markov_errors: Option<&[f64]>,
) -> Result<Vec<AuditRow>> {
    if let Some(e) = markov_errors {
        if e.len() != cuts.len() {
            return Err(Error::Invalid("one recovery error per cut is required".into()));
        }
    }
    let h_norm = if h.terms.is_empty() { 0.0 } else { op_norm(&h.assemble_dense()?) };
    cuts.iter()
        .enumerate()
        .map(|(k, cut)| {
            let bip = Bipartition::new(h, cut)?;
            let mi = mutual_information(sigma, &bip)?;
            let gibbs_bound = 2.0 * beta * boundary_norm(&bip)?;
            let eps = markov_errors.map(|e| e[k]);
            let correction = match eps {
                Some(e) if e > 0.0 => 4.0 * e * (1.0 / e).ln().max(beta * h_norm).max(h.n as f64),
                _ => 0.0,
            };
            let bound = gibbs_bound + correction;
            Ok(AuditRow {
                cut: bip.label(),
                mi_nats: mi,
                mi_bits: mi / LN_2,
                gibbs_bound,
                bound,
                markov_error: eps,
                slack: bound - mi,
                pass: mi <= bound + 1e-10,
            })
        })
        .collect()
}

pub fn write_audit_csv(rows: &[AuditRow], out: &mut impl Write) -> Result<()> {
    writeln!(out, "cut,MI_nats,MI_bits,bound,slack,pass")?;
    for r in rows {
        writeln!(out, "{},{:.17e},{:.17e},{:.17e},{:.17e},{}", r.cut, r.mi_nats, r.mi_bits, r.bound, r.slack, r.pass)?;
    }
    Ok(())
}

/// min over t of ‖R_{region,t}[σ_Ā ⊗ σ_A] - σ‖₁.
pub fn measured_markov_error(
    spec: &crate::pauli_ham::Spectrum,
    fp: crate::spectral::FilterParams,
    sigma: &DensityMatrix,
    bip: &Bipartition,
    recovery_region: &[usize],
    times: &[f64],
) -> Result<f64> {
    let rec = crate::markov::RecoveryMap::new(spec, fp, recovery_region, Default::default())?;
    let prod = bip.product_of_marginals(sigma.matrix())?;
    let mut best = f64::INFINITY;
    for &t in times {
        best = best.min(crate::linalg::trace_norm(&(rec.apply(&prod, t)? - sigma.matrix())));
    }
    Ok(best)
}

/// Bell pair (|00⟩ + |11⟩)/√2 on two qubits.
pub fn bell_state() -> DensityMatrix {
    let mut m = CMat::zeros(4, 4);
    for &(i, j) in &[(0, 0), (0, 3), (3, 0), (3, 3)] {
        m[(i, j)] = c(0.5, 0.0);
    }
    DensityMatrix::new(m).expect("bell state")
}
