//! Classical analogue: single-site Glauber dynamics for Ising models, the discrete
//! entropy-production / Fisher identity, likelihood-ratio ADB statistics, local
//! resampling recovery and the block "hard disks" construction.

use std::f64::consts::LN_2;
use std::io::Write;

use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::Rule;

/// Largest site count handled by explicit enumeration.
pub const EXACT_MAX_SITES: usize = 20;
/// State-space size above which sampling is used instead of enumeration.
pub const MCMC_THRESHOLD: usize = 1 << 20;

/// Ising energy E(x) = -Σ J_ij s_i s_j - Σ h_i s_i with s = +1 for bit 0 and -1 for bit 1.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpinModel {
    pub n: usize,
    pub couplings: Vec<(usize, usize, f64)>,
    pub fields: Vec<f64>,
    #[serde(skip)]
    neighbours: Vec<Vec<(usize, f64)>>,
}

#[inline]
pub fn spin(x: u64, site: usize, n: usize) -> f64 {
    if (x >> (n - 1 - site)) & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

#[inline]
fn flip_mask(site: usize, n: usize) -> u64 {
    1u64 << (n - 1 - site)
}

impl SpinModel {
    pub fn new(n: usize, couplings: Vec<(usize, usize, f64)>, fields: Vec<f64>) -> Result<Self> {
        if n == 0 || n > 64 {
            return Err(Error::Invalid(format!("{n} sites outside 1..=64")));
        }
        if fields.len() != n {
            return Err(Error::Dimension(format!("{} fields for {n} sites", fields.len())));
        }
        let mut neighbours = vec![Vec::new(); n];
        for &(i, j, w) in &couplings {
            if i >= n || j >= n || i == j {
                return Err(Error::Invalid(format!("bad coupling ({i}, {j})")));
            }
            neighbours[i].push((j, w));
            neighbours[j].push((i, w));
        }
        Ok(Self { n, couplings, fields, neighbours })
    }

    pub fn single_spin(field: f64) -> Self {
        Self::new(1, vec![], vec![field]).expect("one site")
    }

    /// Open m x m ferromagnet with unit couplings.
    pub fn square_block(m: usize) -> Result<Self> {
        let mut c = Vec::new();
        for r in 0..m {
            for col in 0..m {
                let i = r * m + col;
                if col + 1 < m {
                    c.push((i, i + 1, 1.0));
                }
                if r + 1 < m {
                    c.push((i, i + m, 1.0));
                }
            }
        }
        Self::new(m * m, c, vec![0.0; m * m])
    }

    pub fn energy(&self, x: u64) -> f64 {
        let mut e = 0.0;
        for &(i, j, w) in &self.couplings {
            e -= w * spin(x, i, self.n) * spin(x, j, self.n);
        }
        for (i, h) in self.fields.iter().enumerate() {
            e -= h * spin(x, i, self.n);
        }
        e
    }

    /// E(x with site flipped) - E(x).
    pub fn flip_delta(&self, x: u64, site: usize) -> f64 {
        let s = spin(x, site, self.n);
        let local: f64 = self.neighbours[site].iter().map(|&(j, w)| w * spin(x, j, self.n)).sum::<f64>() + self.fields[site];
        2.0 * s * local
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RateRule {
    #[default]
    HeatBath,
    Metropolis,
}

impl RateRule {
    pub fn rate(self, beta: f64, delta: f64) -> f64 {
        let x = beta * delta;
        match self {
            RateRule::HeatBath => {
                if x > 0.0 {
                    let e = (-x).exp();
                    e / (1.0 + e)
                } else {
                    1.0 / (1.0 + x.exp())
                }
            }
            RateRule::Metropolis => (-x).exp().min(1.0),
        }
    }
}

/// Exact-mode Glauber chain over all 2^n configurations.
#[derive(Clone, Debug)]
pub struct ClassicalChain {
    pub model: SpinModel,
    pub beta: f64,
    pub rule: RateRule,
    pub pi: Vec<f64>,
}

pub fn glauber_generator(model: &SpinModel, beta: f64, rule: RateRule) -> Result<ClassicalChain> {
    if model.n > EXACT_MAX_SITES {
        return Err(Error::Resource(format!("{} sites exceeds the exact-mode limit {EXACT_MAX_SITES}", model.n)));
    }
    let size = 1u64 << model.n;
    let energies: Vec<f64> = (0..size).into_par_iter().map(|x| model.energy(x)).collect();
    let emin = energies.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut pi: Vec<f64> = energies.iter().map(|e| (-beta * (e - emin)).exp()).collect();
    let z: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= z);
    Ok(ClassicalChain { model: model.clone(), beta, rule, pi })
}

impl ClassicalChain {
    pub fn n(&self) -> usize {
        self.model.n
    }

    pub fn size(&self) -> usize {
        self.pi.len()
    }

    #[inline]
    pub fn rate(&self, x: u64, site: usize) -> f64 {
        self.rule.rate(self.beta, self.model.flip_delta(x, site))
    }

    /// (ν L_A)(y) = Σ_x ν(x) Q_A(x, y) for the sites in `sites`.
    pub fn apply_sites(&self, nu: &[f64], sites: &[usize]) -> Vec<f64> {
        let n = self.n();
        let mut out = vec![0.0; nu.len()];
        for (x, &p) in nu.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for &i in sites {
                let r = self.rate(x as u64, i) * p;
                out[x ^ flip_mask(i, n) as usize] += r;
                out[x] -= r;
            }
        }
        out
    }

    pub fn all_sites(&self) -> Vec<usize> {
        (0..self.n()).collect()
    }

    pub fn apply(&self, nu: &[f64]) -> Vec<f64> {
        self.apply_sites(nu, &self.all_sites())
    }

    /// ‖ν L‖₁.
    pub fn stationarity_error(&self, nu: &[f64]) -> f64 {
        self.apply(nu).iter().map(|v| v.abs()).sum()
    }

    /// max over (x, site) of |π(x) P(x→y) - π(y) P(y→x)|.
    pub fn detailed_balance_residual(&self) -> f64 {
        let n = self.n();
        let mut worst = 0.0f64;
        for x in 0..self.size() {
            for i in 0..n {
                let y = x ^ flip_mask(i, n) as usize;
                let a = self.pi[x] * self.rate(x as u64, i);
                let b = self.pi[y] * self.rate(y as u64, i);
                worst = worst.max((a - b).abs());
            }
        }
        worst
    }

    /// Dense generator (rows sum to zero), for small chains.
    pub fn dense_generator(&self, sites: &[usize]) -> Result<DMatrix<f64>> {
        if self.size() > 1 << 12 {
            return Err(Error::Resource("dense classical generator limited to 4096 states".into()));
        }
        let n = self.n();
        let d = self.size();
        let mut q = DMatrix::zeros(d, d);
        for x in 0..d {
            for &i in sites {
                let r = self.rate(x as u64, i);
                q[(x, x ^ flip_mask(i, n) as usize)] += r;
                q[(x, x)] -= r;
            }
        }
        Ok(q)
    }

    /// ν e^{t L_A}, evaluated blockwise: for every configuration outside A the
    /// dynamics is a chain on the 2^|A| configurations of A.
    pub fn evolve_sites(&self, nu: &[f64], sites: &[usize], t: f64) -> Result<Vec<f64>> {
        if t < 0.0 {
            return Err(Error::Invalid(format!("negative time {t}")));
        }
        if sites.is_empty() || t == 0.0 {
            return Ok(nu.to_vec());
        }
        let n = self.n();
        let k = sites.len();
        if k > 12 {
            return Err(Error::Resource("local resampling region limited to 12 sites".into()));
        }
        let amask: u64 = sites.iter().map(|&i| flip_mask(i, n)).fold(0, |a, b| a | b);
        let embed = |rest: u64, local: usize| -> u64 {
            let mut x = rest;
            for (pos, &i) in sites.iter().enumerate() {
                if (local >> (k - 1 - pos)) & 1 == 1 {
                    x |= flip_mask(i, n);
                }
            }
            x
        };
        let da = 1usize << k;
        let rests: Vec<u64> = (0..self.size() as u64).filter(|x| x & amask == 0).collect();
        let pieces: Vec<(u64, Vec<f64>)> = rests
            .par_iter()
            .map(|&rest| {
                let mut q = DMatrix::<f64>::zeros(da, da);
                for a in 0..da {
                    let x = embed(rest, a);
                    for (pos, &i) in sites.iter().enumerate() {
                        let r = self.rate(x, i);
                        let b = a ^ (1 << (k - 1 - pos));
                        q[(a, b)] += r;
                        q[(a, a)] -= r;
                    }
                }
                let e = (q * t).exp();
                let row: Vec<f64> = (0..da).map(|a| nu[embed(rest, a) as usize]).collect();
                let out: Vec<f64> = (0..da).map(|b| (0..da).map(|a| row[a] * e[(a, b)]).sum()).collect();
                (rest, out)
            })
            .collect();
        let mut result = vec![0.0; nu.len()];
        for (rest, out) in pieces {
            for (a, v) in out.into_iter().enumerate() {
                result[embed(rest, a) as usize] = v;
            }
        }
        Ok(result)
    }

    /// ν_Ā ⊗ τ_A with τ uniform on the configurations of A.
    pub fn resample_uniform(&self, nu: &[f64], sites: &[usize]) -> Vec<f64> {
        let n = self.n();
        let amask: u64 = sites.iter().map(|&i| flip_mask(i, n)).fold(0, |a, b| a | b);
        let mut marginal = vec![0.0; nu.len()];
        for (x, &p) in nu.iter().enumerate() {
            marginal[x & !(amask as usize)] += p;
        }
        let share = 1.0 / (1u64 << sites.len()) as f64;
        (0..nu.len()).map(|x| marginal[x & !(amask as usize)] * share).collect()
    }
}

fn check_positive(nu: &[f64]) -> Result<()> {
    if let Some(m) = nu.iter().cloned().reduce(f64::min) {
        if m <= 0.0 {
            return Err(Error::Singular { min_eig: m });
        }
    }
    Ok(())
}

/// EP_P(ν) = Σ_x π(x) Σ_y Q(x,y) (f(y) - f(x)) log(f(y)/f(x)), f = ν/π.
pub fn classical_ep(chain: &ClassicalChain, nu: &[f64]) -> Result<f64> {
    check_positive(nu)?;
    let n = chain.n();
    let f: Vec<f64> = nu.iter().zip(&chain.pi).map(|(a, b)| a / b).collect();
    let mut total = 0.0;
    for x in 0..chain.size() {
        for i in 0..n {
            let y = x ^ flip_mask(i, n) as usize;
            let w = chain.pi[x] * chain.rate(x as u64, i);
            total += w * (f[y] - f[x]) * (f[y] / f[x]).ln();
        }
    }
    Ok(total)
}

/// ∫₀¹ ds Σ_x π(x) Σ_y Q(x,y) f(x)^{1-s} f(y)^s log²(f(y)/f(x)), by Gauss-Legendre in s.
pub fn classical_fisher(chain: &ClassicalChain, nu: &[f64], s_nodes: usize) -> Result<f64> {
    check_positive(nu)?;
    let n = chain.n();
    let rule = Rule::legendre(s_nodes, 0.0, 1.0);
    let f: Vec<f64> = nu.iter().zip(&chain.pi).map(|(a, b)| a / b).collect();
    let mut total = 0.0;
    for x in 0..chain.size() {
        for i in 0..n {
            let y = x ^ flip_mask(i, n) as usize;
            let w = chain.pi[x] * chain.rate(x as u64, i);
            let lr = (f[y] / f[x]).ln();
            total += w * lr * lr * rule.integrate(|s| f[x].powf(1.0 - s) * f[y].powf(s));
        }
    }
    Ok(total)
}

/// -d/dt D(ν e^{tL} ‖ π) at t = 0.
pub fn relative_entropy_decay_rate(chain: &ClassicalChain, nu: &[f64]) -> Result<f64> {
    check_positive(nu)?;
    let dnu = chain.apply(nu);
    Ok(-dnu.iter().zip(nu.iter().zip(&chain.pi)).map(|(d, (a, b))| d * (a / b).ln()).sum::<f64>())
}

/// α - 1 = log α ∫₀¹ α^s ds, returning (lhs, rhs).
pub fn int_log_identity(alpha: f64, nodes: usize) -> (f64, f64) {
    let rhs = alpha.ln() * Rule::legendre(nodes, 0.0, 1.0).integrate(|s| alpha.powf(s));
    (alpha - 1.0, rhs)
}

/// Likelihood-ratio deviations |log(ν(x)π(y)/(ν(y)π(x)))| over single-flip pairs, weighted by ν(x) Q(x,y).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AdbStats {
    pub mean: f64,
    pub max: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassicalAdbReport {
    pub all: AdbStats,
    /// Moves the classifier marks as staying inside a sector.
    pub intra: AdbStats,
    pub crossing: AdbStats,
}

pub fn classical_adb_report(
    chain: &ClassicalChain,
    nu: &[f64],
    same_sector: &dyn Fn(u64, u64) -> bool,
) -> ClassicalAdbReport {
    let n = chain.n();
    let mut acc = [(0.0f64, 0.0f64, 0.0f64); 3];
    for x in 0..chain.size() {
        if nu[x] <= 0.0 {
            continue;
        }
        for i in 0..n {
            let y = x ^ flip_mask(i, n) as usize;
            let w = nu[x] * chain.rate(x as u64, i);
            let dev = if nu[y] > 0.0 {
                ((nu[x] * chain.pi[y]) / (nu[y] * chain.pi[x])).ln().abs()
            } else {
                f64::INFINITY
            };
            let slot = if same_sector(x as u64, y as u64) { 1 } else { 2 };
            for k in [0, slot] {
                let a = &mut acc[k];
                if dev.is_finite() {
                    a.0 += w * dev;
                }
                a.1 = a.1.max(dev);
                a.2 += w;
            }
        }
    }
    let stats = |a: (f64, f64, f64)| AdbStats { mean: if a.2 > 0.0 { a.0 / a.2 } else { 0.0 }, max: a.1, weight: a.2 };
    ClassicalAdbReport { all: stats(acc[0]), intra: stats(acc[1]), crossing: stats(acc[2]) }
}

/// Majority class of a block configuration: 0, 1, or a tie (None) for even sizes.
pub fn majority(x: u64, sites: usize) -> Option<u8> {
    let ones = x.count_ones() as usize;
    if 2 * ones < sites {
        Some(0)
    } else if 2 * ones > sites {
        Some(1)
    } else {
        None
    }
}

/// Gibbs measure of a block conditioned on majority `bit`; ties belong to both conditioning sets.
pub fn conditioned_gibbs(chain: &ClassicalChain, bit: u8) -> Vec<f64> {
    let n = chain.n();
    let mut nu: Vec<f64> = chain
        .pi
        .iter()
        .enumerate()
        .map(|(x, &p)| match majority(x as u64, n) {
            Some(b) if b != bit => 0.0,
            _ => p,
        })
        .collect();
    let z: f64 = nu.iter().sum();
    nu.iter_mut().for_each(|p| *p /= z);
    nu
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardDisksReport {
    pub l: usize,
    pub m: usize,
    pub beta: f64,
    pub conditioned: bool,
    pub block_pairs: usize,
    /// Mass of strict-majority configurations under the conditioned block measure.
    pub q: f64,
    pub mi_block: f64,
    pub cut_mi: f64,
    /// ‖L_b ν_b‖₁ for one block.
    pub stationarity_per_block: f64,
    pub stationarity_per_site: f64,
    /// Triangle-inequality bound Σ_b ‖L_b ν‖₁ over all 2 (L/m)² blocks.
    pub stationarity_total_bound: f64,
}

/// Lattice of L rows and 2L columns split into m x m open ferromagnetic blocks; the block
/// in the right half mirrors the block in the left half through a shared uniformly random
/// majority bit. With `conditioned = false` every block is Gibbs distributed instead.
/// When m does not divide L, the floor(L/m)² block pairs are placed in a corner and the
/// leftover sites carry independent Gibbs spins, which add nothing to either quantity.
pub fn hard_disks_metastable(l: usize, m: usize, beta: f64, conditioned: bool) -> Result<HardDisksReport> {
    if m == 0 || m > l {
        return Err(Error::Invalid(format!("block size {m} must lie in 1..=L = {l}")));
    }
    if m * m > 16 {
        return Err(Error::Resource(format!("exact block enumeration needs m² <= 16, got {}", m * m)));
    }
    let model = SpinModel::square_block(m)?;
    let chain = glauber_generator(&model, beta, RateRule::HeatBath)?;
    let pairs = (l / m) * (l / m);
    let sites = m * m;
    let (q, mi_block, nu) = if conditioned {
        let nu0 = conditioned_gibbs(&chain, 0);
        let q: f64 = nu0.iter().enumerate().filter(|(x, _)| majority(*x as u64, sites) == Some(0)).map(|(_, p)| p).sum();
        (q, q * q * LN_2, nu0)
    } else {
        (0.0, 0.0, chain.pi.clone())
    };
    let per_block = chain.stationarity_error(&nu);
    Ok(HardDisksReport {
        l,
        m,
        beta,
        conditioned,
        block_pairs: pairs,
        q,
        mi_block,
        cut_mi: pairs as f64 * mi_block,
        stationarity_per_block: per_block,
        stationarity_per_site: per_block / sites as f64,
        stationarity_total_bound: 2.0 * pairs as f64 * per_block,
    })
}

/// Joint distribution of one mirrored block pair over 2^{2m²} configurations (left block in
/// the high bits).
pub fn block_pair_distribution(chain: &ClassicalChain) -> Result<Vec<f64>> {
    let k = chain.n();
    if 2 * k > EXACT_MAX_SITES {
        return Err(Error::Resource("block pair too large to enumerate".into()));
    }
    let nu0 = conditioned_gibbs(chain, 0);
    let nu1 = conditioned_gibbs(chain, 1);
    let d = chain.size();
    let mut joint = vec![0.0; d * d];
    for a in 0..d {
        for b in 0..d {
            joint[(a << k) | b] = 0.5 * (nu0[a] * nu0[b] + nu1[a] * nu1[b]);
        }
    }
    Ok(joint)
}

/// Two disconnected copies of the m x m block: the lattice carrying one mirrored pair.
pub fn mirrored_pair_model(m: usize) -> Result<SpinModel> {
    let block = SpinModel::square_block(m)?;
    let k = block.n;
    let mut couplings = block.couplings.clone();
    couplings.extend(block.couplings.iter().map(|&(i, j, w)| (i + k, j + k, w)));
    SpinModel::new(2 * k, couplings, vec![0.0; 2 * k])
}

/// Exact sampler for the mirrored pair measure (left block in the high bits).
pub fn block_pair_sampler(chain: &ClassicalChain) -> Result<impl Fn(&mut ChaCha8Rng) -> u64 + Sync> {
    let k = chain.n();
    let zero = WeightedIndex::new(conditioned_gibbs(chain, 0)).map_err(|e| Error::Numeric(e.to_string()))?;
    let one = WeightedIndex::new(conditioned_gibbs(chain, 1)).map_err(|e| Error::Numeric(e.to_string()))?;
    Ok(move |rng: &mut ChaCha8Rng| {
        let dist = if rng.random::<bool>() { &one } else { &zero };
        let a = dist.sample(rng) as u64;
        let b = dist.sample(rng) as u64;
        (a << k) | b
    })
}

fn shannon(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>()
}

/// I(left : right) of a distribution over 2^{2k} configurations, left block in the high bits.
pub fn split_mutual_information(joint: &[f64], k: usize) -> f64 {
    let d = 1usize << k;
    let mut left = vec![0.0; d];
    let mut right = vec![0.0; d];
    for (x, &p) in joint.iter().enumerate() {
        left[x >> k] += p;
        right[x & (d - 1)] += p;
    }
    shannon(&left) + shannon(&right) - shannon(joint)
}

/// Block mutual information by enumeration: the full joint for small blocks, otherwise the
/// joint of the majority classes, which is a sufficient statistic for the shared bit.
pub fn mi_block_by_enumeration(chain: &ClassicalChain) -> Result<f64> {
    let k = chain.n();
    if 2 * k <= EXACT_MAX_SITES {
        return Ok(split_mutual_information(&block_pair_distribution(chain)?, k));
    }
    let mut class = [[0.0f64; 3]; 2];
    for b in 0..2u8 {
        for (x, p) in conditioned_gibbs(chain, b).iter().enumerate() {
            let c = match majority(x as u64, k) {
                Some(v) => v as usize,
                None => 2,
            };
            class[b as usize][c] += p;
        }
    }
    let mut joint = vec![0.0; 9];
    for c1 in 0..3 {
        for c2 in 0..3 {
            joint[c1 * 3 + c2] = 0.5 * (class[0][c1] * class[0][c2] + class[1][c1] * class[1][c2]);
        }
    }
    let marg: Vec<f64> = (0..3).map(|c| (0..3).map(|c2| joint[c * 3 + c2]).sum()).collect();
    Ok(2.0 * shannon(&marg) - shannon(&joint))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicalRecoveryRow {
    pub t: f64,
    pub total: f64,
    pub leakage: f64,
    pub mixing: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicalRecovery {
    pub sites: Vec<usize>,
    pub rows: Vec<ClassicalRecoveryRow>,
    /// ‖ν L_A‖₁.
    pub local_stationarity: f64,
    pub t_star: f64,
    pub min_total: f64,
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// ‖ν - ν_Ā⊗τ_A e^{tL_A}‖₁ with the leakage / local-mixing split, τ uniform.
pub fn classical_recovery_experiment(
    chain: &ClassicalChain,
    nu: &[f64],
    sites: &[usize],
    times: &[f64],
) -> Result<ClassicalRecovery> {
    let resampled = chain.resample_uniform(nu, sites);
    let diff: Vec<f64> = nu.iter().zip(&resampled).map(|(a, b)| a - b).collect();
    let rows = times
        .iter()
        .map(|&t| {
            let rec = chain.evolve_sites(&resampled, sites, t)?;
            let stay = chain.evolve_sites(nu, sites, t)?;
            let mix = chain.evolve_sites(&diff, sites, t)?;
            Ok(ClassicalRecoveryRow {
                t,
                total: l1(nu, &rec),
                leakage: l1(nu, &stay),
                mixing: mix.iter().map(|v| v.abs()).sum(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = rows.iter().min_by(|a, b| a.total.total_cmp(&b.total)).ok_or_else(|| Error::Invalid("empty time grid".into()))?;
    let local_stationarity = chain.apply_sites(nu, sites).iter().map(|v| v.abs()).sum();
    Ok(ClassicalRecovery { sites: sites.to_vec(), t_star: best.t, min_total: best.total, local_stationarity, rows })
}

/// Continuous-time single-site simulation restricted to `active` sites.
pub fn gillespie(model: &SpinModel, beta: f64, rule: RateRule, x0: u64, active: &[usize], t: f64, rng: &mut ChaCha8Rng) -> u64 {
    let n = model.n;
    let mut x = x0;
    let mut clock = 0.0;
    let mut rates = vec![0.0; active.len()];
    loop {
        let mut total = 0.0;
        for (k, &i) in active.iter().enumerate() {
            rates[k] = rule.rate(beta, model.flip_delta(x, i));
            total += rates[k];
        }
        if total <= 0.0 {
            return x;
        }
        let u: f64 = rng.random::<f64>();
        clock += -(1.0 - u).ln() / total;
        if clock > t {
            return x;
        }
        let mut pick = rng.random::<f64>() * total;
        let mut chosen = active[active.len() - 1];
        for (k, &i) in active.iter().enumerate() {
            if pick < rates[k] {
                chosen = i;
                break;
            }
            pick -= rates[k];
        }
        x ^= flip_mask(chosen, n);
    }
}

/// Sampling estimate of the recovery error restricted to the marginal on `window`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McmcEstimate {
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub samples: usize,
}

fn window_code(x: u64, window: &[usize], n: usize) -> usize {
    window.iter().fold(0usize, |acc, &i| (acc << 1) | ((x >> (n - 1 - i)) & 1) as usize)
}

/// Draws x ~ ν, replaces the sites of A uniformly, runs the A-local dynamics for time t, and
/// compares the window marginal with fresh draws from ν. The 95% interval is a percentile
/// bootstrap over the paired samples.
#[allow(clippy::too_many_arguments)]
pub fn mcmc_recovery_estimate(
    model: &SpinModel,
    beta: f64,
    sampler: &(dyn Fn(&mut ChaCha8Rng) -> u64 + Sync),
    sites: &[usize],
    window: &[usize],
    t: f64,
    samples: usize,
    seed: u64,
) -> McmcEstimate {
    let n = model.n;
    let wd = 1usize << window.len();
    let draws: Vec<(usize, usize)> = (0..samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = crate::random::component_rng(seed, k as u64);
            let reference = sampler(&mut rng);
            let mut x = sampler(&mut rng);
            for &i in sites {
                if rng.random::<bool>() {
                    x ^= flip_mask(i, n);
                }
            }
            let y = gillespie(model, beta, RateRule::HeatBath, x, sites, t, &mut rng);
            (window_code(reference, window, n), window_code(y, window, n))
        })
        .collect();
    let distance = |idx: &mut dyn Iterator<Item = usize>| {
        let mut a = vec![0.0f64; wd];
        let mut b = vec![0.0; wd];
        let mut count = 0.0;
        for k in idx {
            a[draws[k].0] += 1.0;
            b[draws[k].1] += 1.0;
            count += 1.0;
        }
        a.iter().zip(&b).map(|(p, q)| (p - q).abs()).sum::<f64>() / count
    };
    let estimate = distance(&mut (0..samples));
    let mut rng = crate::random::component_rng(seed, u64::MAX);
    let mut boots: Vec<f64> = (0..200)
        .map(|_| {
            let idx: Vec<usize> = (0..samples).map(|_| rng.random_range(0..samples)).collect();
            distance(&mut idx.into_iter())
        })
        .collect();
    boots.sort_by(f64::total_cmp);
    McmcEstimate { estimate, ci_low: boots[5], ci_high: boots[194], samples }
}

/// Sampler for a distribution given by explicit weights over configurations.
pub fn weighted_sampler(weights: &[f64]) -> Result<impl Fn(&mut ChaCha8Rng) -> u64 + Sync> {
    let dist = WeightedIndex::new(weights).map_err(|e| Error::Invalid(format!("bad weights: {e}")))?;
    Ok(move |rng: &mut ChaCha8Rng| dist.sample(rng) as u64)
}

pub fn write_hard_disks_csv(rows: &[HardDisksReport], out: &mut impl Write) -> Result<()> {
    writeln!(out, "m,beta,per_site_stationarity,cut_mi")?;
    for r in rows {
        writeln!(out, "{},{:.17e},{:.17e},{:.17e}", r.m, r.beta, r.stationarity_per_site, r.cut_mi)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::component_rng;

    #[test]
    fn single_spin_ratio() {
        let h = 0.7;
        let beta = 1.3;
        let chain = glauber_generator(&SpinModel::single_spin(h), beta, RateRule::HeatBath).unwrap();
        let up = chain.rate(0, 0);
        let down = chain.rate(1, 0);
        let de = chain.model.energy(1) - chain.model.energy(0);
        assert!((up / down - (-beta * de).exp()).abs() < 1e-14);
        let met = glauber_generator(&SpinModel::single_spin(h), beta, RateRule::Metropolis).unwrap();
        assert!(met.detailed_balance_residual() < 1e-15);
    }

    #[test]
    fn two_spin_ferromagnet_stationary() {
        let model = SpinModel::new(2, vec![(0, 1, 1.0)], vec![0.0, 0.2]).unwrap();
        let chain = glauber_generator(&model, 0.9, RateRule::HeatBath).unwrap();
        let w: Vec<f64> = (0..4u64).map(|x| (-0.9 * model.energy(x)).exp()).collect();
        let z: f64 = w.iter().sum();
        for x in 0..4 {
            assert!((chain.pi[x] - w[x] / z).abs() < 1e-15);
        }
        assert!(chain.stationarity_error(&chain.pi) < 1e-12);
        let q = chain.dense_generator(&chain.all_sites()).unwrap();
        for r in 0..4 {
            assert!(q.row(r).sum().abs() < 1e-14);
        }
        // stationary vector unique: one zero eigenvalue
        let eig = q.transpose().complex_eigenvalues();
        assert_eq!(eig.iter().filter(|z| z.norm() < 1e-10).count(), 1);
    }

    #[test]
    fn disconnected_blocks_factorize() {
        let model = SpinModel::new(4, vec![(0, 1, 1.0), (2, 3, 0.5)], vec![0.1, 0.0, 0.0, -0.3]).unwrap();
        let chain = glauber_generator(&model, 1.0, RateRule::HeatBath).unwrap();
        let a = glauber_generator(&SpinModel::new(2, vec![(0, 1, 1.0)], vec![0.1, 0.0]).unwrap(), 1.0, RateRule::HeatBath).unwrap();
        let b = glauber_generator(&SpinModel::new(2, vec![(0, 1, 0.5)], vec![0.0, -0.3]).unwrap(), 1.0, RateRule::HeatBath).unwrap();
        for x in 0..16 {
            assert!((chain.pi[x] - a.pi[x >> 2] * b.pi[x & 3]).abs() < 1e-15);
        }
    }

    #[test]
    fn ep_fisher_identity() {
        let model = SpinModel::new(3, vec![(0, 1, 1.0), (1, 2, 0.6)], vec![0.2, -0.1, 0.0]).unwrap();
        let chain = glauber_generator(&model, 1.2, RateRule::HeatBath).unwrap();
        assert!(classical_ep(&chain, &chain.pi).unwrap().abs() < 1e-15);
        let mut rng = component_rng(50, 0);
        let mut nu: Vec<f64> = (0..8).map(|_| rng.random::<f64>() + 0.05).collect();
        let z: f64 = nu.iter().sum();
        nu.iter_mut().for_each(|p| *p /= z);
        let ep = classical_ep(&chain, &nu).unwrap();
        let fi = classical_fisher(&chain, &nu, 64).unwrap();
        assert!(ep > 0.0 && (ep - fi).abs() < 1e-8);
        let decay = relative_entropy_decay_rate(&chain, &nu).unwrap();
        assert!((decay - 0.5 * ep).abs() < 1e-12);
    }

    #[test]
    fn two_state_by_hand() {
        // uniform π needs h = 0; the single flip has rate 1/2 in both directions
        let chain = glauber_generator(&SpinModel::single_spin(0.0), 1.0, RateRule::HeatBath).unwrap();
        let nu = [0.9, 0.1];
        let f = [1.8f64, 0.2];
        let hand = 0.5 * 0.5 * (f[1] - f[0]) * (f[1] / f[0]).ln() * 2.0;
        assert!((classical_ep(&chain, &nu).unwrap() - hand).abs() < 1e-14);
        assert!((classical_fisher(&chain, &nu, 64).unwrap() - hand).abs() < 1e-8);
    }

    #[test]
    fn ep_additive_over_blocks() {
        let ma = SpinModel::new(2, vec![(0, 1, 1.0)], vec![0.0, 0.3]).unwrap();
        let mb = SpinModel::new(1, vec![], vec![-0.4]).unwrap();
        let prod = SpinModel::new(3, vec![(0, 1, 1.0)], vec![0.0, 0.3, -0.4]).unwrap();
        let (ca, cb, cp) = (
            glauber_generator(&ma, 1.0, RateRule::HeatBath).unwrap(),
            glauber_generator(&mb, 1.0, RateRule::HeatBath).unwrap(),
            glauber_generator(&prod, 1.0, RateRule::HeatBath).unwrap(),
        );
        let na = [0.1, 0.2, 0.3, 0.4];
        let nb = [0.25, 0.75];
        let np: Vec<f64> = (0..8).map(|x| na[x >> 1] * nb[x & 1]).collect();
        let sum = classical_ep(&ca, &na).unwrap() + classical_ep(&cb, &nb).unwrap();
        assert!((classical_ep(&cp, &np).unwrap() - sum).abs() < 1e-12);
    }

    #[test]
    fn int_log_fact() {
        for &a in &[0.1, 1.0, 10.0] {
            let (l, r) = int_log_identity(a, 64);
            assert!((l - r).abs() < 1e-10);
        }
        assert_eq!(int_log_identity(1.0, 64).1, 0.0);
    }

    #[test]
    fn adb_report_examples() {
        let model = SpinModel::square_block(2).unwrap();
        let chain = glauber_generator(&model, 1.0, RateRule::HeatBath).unwrap();
        let same = |x: u64, y: u64| majority(x, 4) == majority(y, 4) || majority(x, 4).is_none() || majority(y, 4).is_none();
        let r = classical_adb_report(&chain, &chain.pi, &same);
        assert!(r.all.mean.abs() < 1e-14 && r.all.max < 1e-12);
        let nu = conditioned_gibbs(&chain, 0);
        let r = classical_adb_report(&chain, &nu, &|x, y| nu[x as usize] > 0.0 && nu[y as usize] > 0.0);
        assert!(r.intra.max < 1e-12);
        assert!(r.crossing.max.is_infinite() && r.crossing.weight > 0.0);
        let mut rng = component_rng(51, 0);
        let rnd: Vec<f64> = (0..16).map(|_| rng.random::<f64>() + 0.01).collect();
        let z: f64 = rnd.iter().sum();
        let rnd: Vec<f64> = rnd.iter().map(|v| v / z).collect();
        assert!(classical_adb_report(&chain, &rnd, &same).all.mean > 0.0);
    }

    #[test]
    fn hard_disks_zero_temperature() {
        let r = hard_disks_metastable(4, 2, 50.0, true).unwrap();
        assert!((r.mi_block - LN_2).abs() < 1e-12);
        assert!((r.cut_mi - 4.0 * LN_2).abs() < 1e-11);
    }

    #[test]
    fn hard_disks_block_mi_matches_enumeration() {
        for m in [2, 3, 4] {
            let r = hard_disks_metastable(if m == 3 { 3 } else { 4 }, m, 2.0, true).unwrap();
            let chain = glauber_generator(&SpinModel::square_block(m).unwrap(), 2.0, RateRule::HeatBath).unwrap();
            let e = mi_block_by_enumeration(&chain).unwrap();
            assert!((r.mi_block - e).abs() < 1e-12, "m = {m}: {} vs {e}", r.mi_block);
        }
        let un = hard_disks_metastable(4, 2, 2.0, false).unwrap();
        assert!(un.stationarity_per_block < 1e-12 && un.cut_mi == 0.0);
    }

    #[test]
    fn hard_disks_full_lattice_cross_check() {
        // L = 2, m = 2: the 2 x 4 lattice is exactly one mirrored block pair
        let block = glauber_generator(&SpinModel::square_block(2).unwrap(), 2.0, RateRule::HeatBath).unwrap();
        let joint = block_pair_distribution(&block).unwrap();
        let mut couplings = SpinModel::square_block(2).unwrap().couplings;
        couplings.extend(couplings.clone().into_iter().map(|(i, j, w)| (i + 4, j + 4, w)));
        let lattice = SpinModel::new(8, couplings, vec![0.0; 8]).unwrap();
        let full = glauber_generator(&lattice, 2.0, RateRule::HeatBath).unwrap();
        let r = hard_disks_metastable(2, 2, 2.0, true).unwrap();
        assert!((split_mutual_information(&joint, 4) - r.cut_mi).abs() < 1e-12);
        let exact = full.stationarity_error(&joint);
        assert!(exact <= r.stationarity_total_bound + 1e-15 && exact > 0.0);
    }

    #[test]
    fn two_pair_lattice_factorizes() {
        // rows 0-1 of the L = 4 lattice: two mirrored pairs, 16 sites enumerated directly
        let block = glauber_generator(&SpinModel::square_block(2).unwrap(), 2.0, RateRule::HeatBath).unwrap();
        let pair = block_pair_distribution(&block).unwrap();
        let joint: Vec<f64> = (0..1usize << 16)
            .map(|x| {
                // bits: left pair blocks a1 a2 | right pair blocks b1 b2, one pair is (a_k, b_k)
                let (a1, a2, b1, b2) = ((x >> 12) & 15, (x >> 8) & 15, (x >> 4) & 15, x & 15);
                pair[(a1 << 4) | b1] * pair[(a2 << 4) | b2]
            })
            .collect();
        let r = hard_disks_metastable(4, 2, 2.0, true).unwrap();
        let mi = split_mutual_information(&joint, 8);
        assert!((mi - 2.0 * r.mi_block).abs() < 1e-10);
        let mut couplings = Vec::new();
        for b in 0..4 {
            couplings.extend(SpinModel::square_block(2).unwrap().couplings.into_iter().map(|(i, j, w)| (i + 4 * b, j + 4 * b, w)));
        }
        let lattice = glauber_generator(&SpinModel::new(16, couplings, vec![0.0; 16]).unwrap(), 2.0, RateRule::HeatBath).unwrap();
        let exact = lattice.stationarity_error(&joint);
        assert!(exact <= 4.0 * r.stationarity_per_block + 1e-14);
        assert!(exact >= r.stationarity_per_block - 1e-14);
    }

    #[test]
    fn non_dividing_block_uses_floor() {
        let r = hard_disks_metastable(4, 3, 2.0, true).unwrap();
        assert_eq!(r.block_pairs, 1);
        assert!((r.cut_mi - r.mi_block).abs() < 1e-15);
    }

    #[test]
    fn stationarity_decreases_with_block_size() {
        let per_site: Vec<f64> = [2, 3, 4]
            .iter()
            .map(|&m| hard_disks_metastable(4, m, 2.0, true).unwrap().stationarity_per_site)
            .collect();
        assert!(per_site[1] <= 0.7 * per_site[0] && per_site[2] <= 0.7 * per_site[1], "{per_site:?}");
    }

    #[test]
    fn recovery_examples() {
        let block = glauber_generator(&SpinModel::square_block(2).unwrap(), 2.0, RateRule::HeatBath).unwrap();
        let mut couplings = SpinModel::square_block(2).unwrap().couplings;
        couplings.extend(couplings.clone().into_iter().map(|(i, j, w)| (i + 4, j + 4, w)));
        let chain = glauber_generator(&SpinModel::new(8, couplings, vec![0.0; 8]).unwrap(), 2.0, RateRule::HeatBath).unwrap();
        let times = [0.1, 1.0, 10.0, 100.0];
        let gibbs = classical_recovery_experiment(&chain, &chain.pi, &[0], &times).unwrap();
        assert!(gibbs.rows.windows(2).all(|w| w[1].total <= w[0].total + 1e-12));
        assert!(gibbs.rows.last().unwrap().total < 1e-8);
        let nu = block_pair_distribution(&block).unwrap();
        let rec = classical_recovery_experiment(&chain, &nu, &[0], &times).unwrap();
        assert!(rec.min_total <= 0.05, "{rec:?}");
        for r in &rec.rows {
            assert!(r.total <= r.leakage + r.mixing + 1e-12);
            assert!(r.leakage <= r.t * rec.local_stationarity + 1e-12);
        }
        let all: Vec<usize> = (0..8).collect();
        let global = classical_recovery_experiment(&chain, &nu, &all, &[200.0]).unwrap();
        let to_pi = l1(&chain.evolve_sites(&chain.resample_uniform(&nu, &all), &all, 200.0).unwrap(), &chain.pi);
        assert!(to_pi < 1e-6 && global.min_total > 0.1);
    }

    #[test]
    fn evolve_sites_matches_dense() {
        let model = SpinModel::new(3, vec![(0, 1, 1.0), (1, 2, -0.5)], vec![0.3, 0.0, 0.1]).unwrap();
        let chain = glauber_generator(&model, 0.8, RateRule::HeatBath).unwrap();
        let nu = [0.05, 0.1, 0.15, 0.2, 0.1, 0.1, 0.2, 0.1];
        let sites = [0, 2];
        let dense = (chain.dense_generator(&sites).unwrap() * 1.7).exp();
        let row = nalgebra::RowDVector::from_row_slice(&nu) * dense;
        let fast = chain.evolve_sites(&nu, &sites, 1.7).unwrap();
        for x in 0..8 {
            assert!((row[x] - fast[x]).abs() < 1e-13);
        }
    }

    #[test]
    fn mcmc_estimate_brackets_exact() {
        let model = SpinModel::new(3, vec![(0, 1, 1.0), (1, 2, 1.0)], vec![0.0; 3]).unwrap();
        let chain = glauber_generator(&model, 1.0, RateRule::HeatBath).unwrap();
        let mut nu = vec![0.0; 8];
        nu[0] = 0.6;
        nu[7] = 0.3;
        nu[2] = 0.1;
        let t = 0.7;
        let exact = chain.evolve_sites(&chain.resample_uniform(&nu, &[1]), &[1], t).unwrap();
        // window = all sites, so the marginal distance is the full l1 distance
        let truth = l1(&nu, &exact);
        let sampler = weighted_sampler(&nu).unwrap();
        let est = mcmc_recovery_estimate(&model, 1.0, &sampler, &[1], &[0, 1, 2], t, 20000, 3);
        let half_width = (est.ci_high - est.ci_low) / 2.0;
        assert!((est.estimate - truth).abs() < 3.0 * half_width + 0.02, "{est:?} vs {truth}");
    }
}
