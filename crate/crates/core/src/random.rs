//! Seeded random matrices.
//!
//! Per-component generators come from one master seed: the ChaCha key is the
//! master seed and the stream id is the component index, so components never
//! share a keystream regardless of how much each one draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{c, CMat};
use crate::pauli_ham::DensityMatrix;

pub fn component_rng(master: u64, component: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(component);
    rng
}

pub fn ginibre(d: usize, rng: &mut ChaCha8Rng) -> CMat {
    CMat::from_fn(d, d, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        c(re, im)
    })
}

/// Full-rank random state G G† / Tr, G Ginibre.
pub fn random_density(d: usize, rng: &mut ChaCha8Rng) -> DensityMatrix {
    let g = ginibre(d, rng);
    let m = &g * g.adjoint();
    let tr = crate::linalg::trace(&m).re;
    DensityMatrix::new(m / c(tr, 0.0)).expect("ginibre state is a valid density matrix")
}

pub fn random_hermitian(d: usize, rng: &mut ChaCha8Rng) -> CMat {
    let g = ginibre(d, rng);
    (&g + g.adjoint()) * c(0.5, 0.0)
}

/// Random operator rescaled to operator norm one.
pub fn random_unit_operator(d: usize, rng: &mut ChaCha8Rng) -> CMat {
    let g = ginibre(d, rng);
    let n = crate::linalg::op_norm(&g);
    g / c(n, 0.0)
}

/// Haar-like unitary from the QR factor of a Ginibre matrix.
pub fn random_unitary(d: usize, rng: &mut ChaCha8Rng) -> CMat {
    let qr = ginibre(d, rng).qr();
    let q = qr.q();
    let r = qr.r();
    let mut u = q.clone();
    for j in 0..d {
        let z = r[(j, j)];
        let ph = if z.norm() > 0.0 { z / z.norm() } else { c(1.0, 0.0) };
        for i in 0..d {
            u[(i, j)] *= ph;
        }
    }
    u
}
