//! Binary pairwise Markov random fields on `{0,1}^p`: exact enumeration,
//! samplers, the column-factorized pseudo-likelihood and population curvature.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logistic::{
    logistic_variance, restricted_eig_cone, restricted_eig_sparse, sigmoid, softplus, ConeEigen,
    Extreme, LogisticData,
};
use crate::types::{check_dim, MatrixParam, SparseParam, SparsityPattern};

/// Largest `p` for which the `2^p` table is built.
pub const ENUMERATION_LIMIT: usize = 20;
/// Largest `p` for exact population expectations.
pub const EXPECTATION_LIMIT: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsingModel {
    p: usize,
    theta: DMatrix<f64>,
}

impl IsingModel {
    /// `theta` must be square and symmetric; the diagonal holds node potentials.
    pub fn new(theta: DMatrix<f64>) -> Result<Self> {
        let p = theta.nrows();
        check_dim(p, theta.ncols())?;
        if p == 0 {
            return Err(Error::invalid("theta", "need at least one node"));
        }
        for i in 0..p {
            for j in 0..i {
                if theta[(i, j)] != theta[(j, i)] {
                    return Err(Error::invalid(
                        "theta",
                        format!("not symmetric at ({i}, {j})"),
                    ));
                }
            }
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("theta", "entries must be finite"));
        }
        Ok(Self { p, theta })
    }

    pub fn zeros(p: usize) -> Result<Self> {
        Self::new(DMatrix::zeros(p, p))
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn theta(&self) -> &DMatrix<f64> {
        &self.theta
    }

    pub fn to_param(&self) -> MatrixParam {
        MatrixParam::from_dense(&self.theta).expect("square by construction")
    }

    /// `Σ θⱼⱼxⱼ + Σ_{i<j} θᵢⱼxᵢxⱼ`
    pub fn energy(&self, x: &[u8]) -> f64 {
        let mut e = 0.0;
        for j in 0..self.p {
            if x[j] == 1 {
                e += self.theta[(j, j)];
                for i in 0..j {
                    if x[i] == 1 {
                        e += self.theta[(i, j)];
                    }
                }
            }
        }
        e
    }

    /// Natural parameter of `xⱼ` given the rest: `θⱼⱼ + Σ_{k≠j} θₖⱼxₖ`.
    pub fn local_field(&self, x: &[u8], j: usize) -> f64 {
        let col = self.theta.column(j);
        let mut f = col[j];
        for (k, &xk) in x.iter().enumerate() {
            if k != j && xk == 1 {
                f += col[k];
            }
        }
        f
    }

    /// `P(xⱼ = 1 | x₋ⱼ)`
    pub fn conditional_prob(&self, x: &[u8], j: usize) -> f64 {
        sigmoid(self.local_field(x, j))
    }
}

fn state_bits(bits: u64, p: usize) -> Vec<u8> {
    (0..p).map(|j| (bits >> j & 1) as u8).collect()
}

/// Energies of all `2^p` states indexed by their bit pattern, walked in Gray-code order.
fn state_energies(m: &IsingModel) -> Result<Vec<f64>> {
    let p = m.p;
    if p > ENUMERATION_LIMIT {
        return Err(Error::EnumerationGuard {
            p,
            limit: ENUMERATION_LIMIT,
        });
    }
    let mut out = vec![0.0; 1usize << p];
    let mut x = vec![0u8; p];
    let mut e = 0.0;
    for k in 1u64..1 << p {
        let flip = k.trailing_zeros() as usize;
        let field = m.local_field(&x, flip);
        if x[flip] == 0 {
            e += field;
            x[flip] = 1;
        } else {
            e -= field;
            x[flip] = 0;
        }
        let gray = k ^ (k >> 1);
        out[gray as usize] = e;
    }
    Ok(out)
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|&e| (e - m).exp()).sum::<f64>().ln()
}

/// `log Z_θ` by enumeration of all `2^p` states.
pub fn partition_function(m: &IsingModel) -> Result<f64> {
    Ok(log_sum_exp(&state_energies(m)?))
}

/// `log f_θ(x)`
pub fn ising_log_pmf(m: &IsingModel, x: &[u8]) -> Result<f64> {
    check_dim(m.p, x.len())?;
    if x.iter().any(|&v| v > 1) {
        return Err(Error::invalid("x", "entries must be 0 or 1"));
    }
    Ok(m.energy(x) - partition_function(m)?)
}

/// Log-probabilities of every state, indexed by bit pattern (bit `j` is `xⱼ`).
pub fn state_log_probs(m: &IsingModel) -> Result<Vec<f64>> {
    let e = state_energies(m)?;
    let lz = log_sum_exp(&e);
    Ok(e.into_iter().map(|v| v - lz).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsingData {
    z: DMatrix<f64>,
    theta_star: Option<IsingModel>,
}

impl IsingData {
    pub fn new(z: DMatrix<f64>, theta_star: Option<IsingModel>) -> Result<Self> {
        if z.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::invalid("z", "entries must be 0 or 1"));
        }
        if let Some(m) = &theta_star {
            check_dim(m.p, z.ncols())?;
        }
        Ok(Self { z, theta_star })
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    pub fn p(&self) -> usize {
        self.z.ncols()
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn theta_star(&self) -> Option<&IsingModel> {
        self.theta_star.as_ref()
    }

    fn from_rows(rows: Vec<Vec<u8>>, p: usize, m: &IsingModel) -> Self {
        let n = rows.len();
        let z = DMatrix::from_fn(n, p, |i, j| rows[i][j] as f64);
        Self {
            z,
            theta_star: Some(m.clone()),
        }
    }
}

/// `n` i.i.d. rows by inverse-CDF sampling from the enumerated table.
pub fn sample_ising_exact<R: Rng + ?Sized>(
    m: &IsingModel,
    n: usize,
    rng: &mut R,
) -> Result<IsingData> {
    let lp = state_log_probs(m)?;
    let mut cdf = Vec::with_capacity(lp.len());
    let mut acc = 0.0;
    for v in &lp {
        acc += v.exp();
        cdf.push(acc);
    }
    let total = acc;
    let rows = (0..n)
        .map(|_| {
            let u = rng.random::<f64>() * total;
            let k = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
            state_bits(k as u64, m.p)
        })
        .collect();
    Ok(IsingData::from_rows(rows, m.p, m))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GibbsConfig {
    pub burnin: usize,
    pub thin: usize,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self {
            burnin: 1000,
            thin: 5,
        }
    }
}

/// Single-site heat-bath sampler with systematic scan; one row per `thin` sweeps.
pub fn sample_ising_gibbs<R: Rng + ?Sized>(
    m: &IsingModel,
    n: usize,
    config: GibbsConfig,
    rng: &mut R,
) -> Result<IsingData> {
    if config.thin == 0 {
        return Err(Error::invalid("thin", "must be at least 1"));
    }
    let p = m.p;
    let mut x: Vec<u8> = (0..p).map(|_| rng.random_range(0..2u8)).collect();
    let sweep = |x: &mut Vec<u8>, rng: &mut R| {
        for j in 0..p {
            x[j] = (rng.random::<f64>() < m.conditional_prob(x, j)) as u8;
        }
    };
    for _ in 0..config.burnin {
        sweep(&mut x, rng);
    }
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        for _ in 0..config.thin {
            sweep(&mut x, rng);
        }
        rows.push(x.clone());
    }
    Ok(IsingData::from_rows(rows, p, m))
}

/// Regression of column `j` on `Z⁽ʲ⁾`, the data with column `j` replaced by ones.
pub fn column_design(data: &IsingData, j: usize) -> Result<LogisticData> {
    if j >= data.p() {
        return Err(Error::invalid(
            "j",
            format!("column {j} out of range for p = {}", data.p()),
        ));
    }
    let mut x = data.z.clone();
    x.column_mut(j).fill(1.0);
    let y = data.z.column(j).iter().copied().collect();
    let theta_star = data
        .theta_star
        .as_ref()
        .map(|m| SparseParam::from_dense(m.theta.column(j).as_slice()));
    LogisticData::new(x, y, theta_star)
}

/// Total pseudo-log-likelihood and its per-column terms.
pub fn pseudo_log_likelihood(theta: &MatrixParam, data: &IsingData) -> Result<(f64, Vec<f64>)> {
    let p = data.p();
    check_dim(p, theta.p())?;
    let z = &data.z;
    let per_column: Vec<f64> = (0..p)
        .map(|j| {
            let col = theta.column(j);
            (0..data.n())
                .map(|i| {
                    let mut eta = 0.0;
                    for (&k, &v) in col.active().iter().zip(col.values()) {
                        eta += if k == j { v } else { v * z[(i, k)] };
                    }
                    z[(i, j)] * eta - softplus(eta)
                })
                .sum()
        })
        .collect();
    Ok((per_column.iter().sum(), per_column))
}

/// `𝓗⁽ʲ⁾ = E[g″(⟨θ_{·j}, X₍ⱼ₎⟩) X₍ⱼ₎X₍ⱼ₎′]` under `f_θ`, by enumeration.
pub fn population_fisher(m: &IsingModel, j: usize) -> Result<DMatrix<f64>> {
    let p = m.p;
    if p > EXPECTATION_LIMIT {
        return Err(Error::EnumerationGuard {
            p,
            limit: EXPECTATION_LIMIT,
        });
    }
    if j >= p {
        return Err(Error::invalid(
            "j",
            format!("column {j} out of range for p = {p}"),
        ));
    }
    let lp = state_log_probs(m)?;
    let col = m.theta.column(j);
    let mut h = DMatrix::zeros(p, p);
    let mut xj = vec![0.0; p];
    for (bits, &l) in lp.iter().enumerate() {
        for (k, v) in xj.iter_mut().enumerate() {
            *v = if k == j { 1.0 } else { (bits >> k & 1) as f64 };
        }
        let eta: f64 = col.iter().zip(&xj).map(|(a, b)| a * b).sum();
        let w = l.exp() * logistic_variance(eta);
        for a in 0..p {
            if xj[a] == 0.0 {
                continue;
            }
            for b in 0..=a {
                h[(a, b)] += w * xj[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            h[(b, a)] = h[(a, b)];
        }
    }
    Ok(h)
}

#[derive(Debug, Clone, Serialize)]
pub struct Kappa2 {
    pub s: usize,
    pub sparse_per_column: Vec<f64>,
    pub cone_per_column: Vec<ConeEigen>,
    /// `κ̲₂(s) = minⱼ`
    pub kappa2_sparse: f64,
    /// `κ̲₂ = minⱼ` of the cone estimates
    pub kappa2_cone: f64,
    /// `minⱼ` of the certified lower bounds
    pub kappa2_cone_certificate: f64,
}

/// Restricted smallest eigenvalues of the population Fisher matrices,
/// with column-`j` cones built on the support of `θ_{·j}`.
pub fn kappa2_quantities(m: &IsingModel, s: usize) -> Result<Kappa2> {
    let mut sparse = Vec::with_capacity(m.p);
    let mut cone = Vec::with_capacity(m.p);
    for j in 0..m.p {
        let h = population_fisher(m, j)?;
        sparse.push(restricted_eig_sparse(&h, s, Extreme::Min)?);
        let support = SparsityPattern::from_mask(
            &m.theta
                .column(j)
                .iter()
                .map(|&v| v != 0.0)
                .collect::<Vec<_>>(),
        );
        cone.push(restricted_eig_cone(&h, &support, 7.0)?);
    }
    let min = |v: &mut dyn Iterator<Item = f64>| v.fold(f64::INFINITY, f64::min);
    Ok(Kappa2 {
        s,
        kappa2_sparse: min(&mut sparse.iter().copied()),
        kappa2_cone: min(&mut cone.iter().map(|c| c.estimate)),
        kappa2_cone_certificate: min(&mut cone.iter().map(|c| c.certificate)),
        sparse_per_column: sparse,
        cone_per_column: cone,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsingZeta {
    pub zeta: Vec<f64>,
    pub s_bar_j: Vec<usize>,
    pub s_bar: usize,
}

/// `ζⱼ = s⋆ⱼ + 4/c₄ + (2/c₄)(1 + 128/κ̲₂ + s⋆ⱼ/(64(log p)²) + log(4e)/log p)·s⋆ⱼ`
pub fn zeta_ising_column(s_star_j: usize, c4: f64, p: usize, kappa2_cone: f64) -> Result<f64> {
    if !(kappa2_cone > 0.0) {
        return Err(Error::DegenerateCurvature {
            name: "kappa2",
            value: kappa2_cone,
        });
    }
    if p < 2 {
        return Err(Error::invalid("p", "need p >= 2"));
    }
    if !(c4 > 0.0) {
        return Err(Error::invalid("c4", "must be positive"));
    }
    let s = s_star_j as f64;
    let lp = (p as f64).ln();
    let bracket = if s_star_j == 0 {
        0.0
    } else {
        1.0 + 128.0 / kappa2_cone + s / (64.0 * lp * lp) + (4.0 * std::f64::consts::E).ln() / lp
    };
    Ok(s + 4.0 / c4 + 2.0 / c4 * bracket * s)
}

/// `ζⱼ` for every column, `s̄ⱼ = ⌈s⋆ⱼ + ζⱼ⌉` and `s̄ = maxⱼ s̄ⱼ`.
pub fn zeta_ising(s_star: &[usize], c4: f64, p: usize, kappa2_cone: f64) -> Result<IsingZeta> {
    check_dim(p, s_star.len())?;
    let zeta = s_star
        .iter()
        .map(|&s| zeta_ising_column(s, c4, p, kappa2_cone))
        .collect::<Result<Vec<_>>>()?;
    let s_bar_j: Vec<usize> = s_star
        .iter()
        .zip(&zeta)
        .map(|(&s, z)| (s as f64 + z).ceil() as usize)
        .collect();
    Ok(IsingZeta {
        s_bar: s_bar_j.iter().copied().max().unwrap_or(0),
        zeta,
        s_bar_j,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IsingRadii {
    pub frobenius: f64,
    pub tnorm: f64,
}

/// `M₀/κ̲₂(s̄)·√(Σⱼs̄ⱼ log p/n)` and `M₀/κ̲₂(s̄)·√(s̄ log p/n)`.
pub fn contraction_radii_ising(
    m0: f64,
    kappa_sbar: f64,
    s_bar: &[usize],
    p: usize,
    n: usize,
) -> Result<IsingRadii> {
    if !(kappa_sbar > 0.0) {
        return Err(Error::DegenerateCurvature {
            name: "kappa2(s_bar)",
            value: kappa_sbar,
        });
    }
    if p < 2 || n == 0 {
        return Err(Error::invalid("p, n", "need p >= 2 and n >= 1"));
    }
    check_dim(p, s_bar.len())?;
    let lp = (p as f64).ln();
    let total: usize = s_bar.iter().sum();
    let max = s_bar.iter().copied().max().unwrap_or(0);
    Ok(IsingRadii {
        frobenius: m0 / kappa_sbar * (total as f64 * lp / n as f64).sqrt(),
        tnorm: m0 / kappa_sbar * (max as f64 * lp / n as f64).sqrt(),
    })
}

/// Nonzero count of each column of `θ⋆`, diagonal included.
pub fn column_sparsity(m: &IsingModel) -> Vec<usize> {
    (0..m.p)
        .map(|j| m.theta.column(j).iter().filter(|&&v| v != 0.0).count())
        .collect()
}
