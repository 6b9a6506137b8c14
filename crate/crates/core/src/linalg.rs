//! Dense complex matrix helpers shared by the physics modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(d: usize) -> CMat {
    CMat::identity(d, d)
}

pub fn dagger(m: &CMat) -> CMat {
    m.adjoint()
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

pub fn anticommutator(a: &CMat, b: &CMat) -> CMat {
    a * b + b * a
}

pub fn trace(m: &CMat) -> Complex64 {
    m.diagonal().iter().sum()
}

/// Hilbert-Schmidt inner product Tr[A† B].
pub fn hs_inner(a: &CMat, b: &CMat) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * c(0.5, 0.0)
}

/// Largest elementwise deviation from Hermiticity.
pub fn hermiticity_defect(m: &CMat) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Eigen-decomposition of a Hermitian matrix with ascending eigenvalues.
#[derive(Clone, Debug)]
pub struct HermEig {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

impl HermEig {
    pub fn new(m: &CMat) -> Result<Self> {
        let d = m.nrows();
        if d != m.ncols() {
            return Err(Error::Dimension(format!("non-square {}x{}", d, m.ncols())));
        }
        if d == 0 {
            return Ok(Self { values: vec![], vectors: CMat::zeros(0, 0) });
        }
        let sym = hermitian_part(m);
        let eig = nalgebra::SymmetricEigen::try_new(sym, 1e-15, 100_000)
            .ok_or_else(|| Error::Numeric("hermitian eigensolver did not converge".into()))?;
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let mut vectors = CMat::zeros(d, d);
        for (col, &k) in order.iter().enumerate() {
            vectors.set_column(col, &eig.eigenvectors.column(k));
        }
        Ok(Self { values, vectors })
    }

    pub fn apply_fn(&self, f: impl Fn(f64) -> f64) -> CMat {
        let d = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..d {
            let w = f(self.values[j]);
            for i in 0..d {
                scaled[(i, j)] *= w;
            }
        }
        &scaled * self.vectors.adjoint()
    }

    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }
}

/// Schatten-1 norm.
pub fn trace_norm(m: &CMat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    if hermiticity_defect(m) <= 1e-14 * (1.0 + m.norm()) {
        if let Ok(e) = HermEig::new(m) {
            return e.values.iter().map(|x| x.abs()).sum();
        }
    }
    m.clone().singular_values().iter().sum()
}

/// Spectral norm.
pub fn op_norm(m: &CMat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone().singular_values().iter().cloned().fold(0.0, f64::max)
}

/// Column-stacking vectorisation: vec(A)[i + j d] = A[i, j].
pub fn vectorize(m: &CMat) -> CVec {
    CVec::from_column_slice(m.as_slice())
}

pub fn unvectorize(v: &CVec, d: usize) -> CMat {
    CMat::from_column_slice(d, d, v.as_slice())
}

/// exp(A) by nalgebra's scaling-and-squaring Pade scheme.
pub fn expm(m: &CMat) -> CMat {
    m.clone().exp()
}

/// φ₁(M)·v = ∫₀¹ e^{sM} v ds via the augmented exponential exp([[M, v],[0, 0]]).
pub fn phi1_apply(m: &CMat, v: &CVec) -> CVec {
    let n = m.nrows();
    let mut aug = CMat::zeros(n + 1, n + 1);
    aug.view_mut((0, 0), (n, n)).copy_from(m);
    aug.view_mut((0, n), (n, 1)).copy_from(v);
    let e = aug.exp();
    e.view((0, n), (n, 1)).into_owned().column(0).into_owned()
}

pub fn real_diag(values: &[f64]) -> CMat {
    CMat::from_diagonal(&CVec::from_iterator(values.len(), values.iter().map(|&x| c(x, 0.0))))
}

/// Map an operator into the frame with columns `basis`: B† M B.
pub fn to_frame(m: &CMat, basis: &CMat) -> CMat {
    basis.adjoint() * m * basis
}

pub fn from_frame(m: &CMat, basis: &CMat) -> CMat {
    basis * m * basis.adjoint()
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
