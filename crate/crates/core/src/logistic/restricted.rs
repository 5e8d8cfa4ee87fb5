//! Restricted eigenvalues over sparse vectors and over compatibility cones.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::prior::ln_choose;
use crate::types::{check_dim, SparsityPattern};

/// Largest support count enumerated by [`restricted_eig_sparse`].
pub const SPARSE_ENUMERATION_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extreme {
    Min,
    Max,
}

fn check_square(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::invalid("M", "matrix must be square"));
    }
    Ok(())
}

fn principal_extreme(m: &DMatrix<f64>, idx: &[usize], mode: Extreme) -> f64 {
    if idx.len() == 1 {
        return m[(idx[0], idx[0])];
    }
    let sub = DMatrix::from_fn(idx.len(), idx.len(), |a, b| m[(idx[a], idx[b])]);
    let ev = SymmetricEigen::new(sub).eigenvalues;
    match mode {
        Extreme::Min => ev.min(),
        Extreme::Max => ev.max(),
    }
}

pub fn lambda_min(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

/// Advances `c` to the next increasing `k`-combination below `n` in lexicographic order.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] < n - k + i {
            c[i] += 1;
            for t in i + 1..k {
                c[t] = c[t - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Extremal eigenvalue over all `s × s` principal submatrices.
///
/// With `Min` this is `inf{θ′Mθ/‖θ‖² : 1 ≤ ‖θ‖₀ ≤ s}`, with `Max` the matching
/// sup; restricting to supports of size exactly `s` is enough by interlacing.
pub fn restricted_eig_sparse(m: &DMatrix<f64>, s: usize, mode: Extreme) -> Result<f64> {
    check_square(m)?;
    let d = m.nrows();
    if s == 0 || s > d {
        return Err(Error::invalid(
            "s",
            format!("need 1 <= s <= d = {d}, got {s}"),
        ));
    }
    let count = ln_choose(d, s).exp();
    if count > SPARSE_ENUMERATION_LIMIT * (1.0 + 1e-9) {
        return Err(Error::CombinatorialGuard {
            what: "restricted eigenvalue",
            d,
            s,
            count,
            limit: SPARSE_ENUMERATION_LIMIT,
        });
    }
    let fold = |a: f64, b: f64| match mode {
        Extreme::Min => a.min(b),
        Extreme::Max => a.max(b),
    };
    let init = match mode {
        Extreme::Min => f64::INFINITY,
        Extreme::Max => f64::NEG_INFINITY,
    };
    // split on the first index; min/max reductions are order independent
    let best = (0..=d - s)
        .into_par_iter()
        .map(|first| {
            let mut acc = init;
            let mut idx: Vec<usize> = (first..first + s).collect();
            if s == 1 {
                return principal_extreme(m, &idx, mode);
            }
            loop {
                acc = fold(acc, principal_extreme(m, &idx, mode));
                if !next_combination(&mut idx[1..], d) {
                    break;
                }
            }
            acc
        })
        .reduce(|| init, fold);
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConeEigen {
    /// Smallest Rayleigh quotient found over the cone (`+∞` if the cone is empty).
    pub estimate: f64,
    /// `λ_min(M)`, a valid lower bound for every cone.
    pub certificate: f64,
}

/// Tuning for the cone search.
#[derive(Debug, Clone, Copy)]
pub struct ConeSearch {
    pub restarts: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for ConeSearch {
    fn default() -> Self {
        Self {
            restarts: 32,
            iterations: 400,
            seed: 0x5eed_c0de,
        }
    }
}

/// Euclidean projection of `v` onto the ℓ₁ ball of the given radius.
fn project_l1_ball(v: &mut [f64], radius: f64) {
    let l1: f64 = v.iter().map(|x| x.abs()).sum();
    if l1 <= radius {
        return;
    }
    if radius <= 0.0 {
        v.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (k, &m) in mags.iter().enumerate() {
        cum += m;
        let t = (cum - radius) / (k + 1) as f64;
        if m > t {
            tau = t;
        } else {
            break;
        }
    }
    for x in v.iter_mut() {
        *x = x.signum() * (x.abs() - tau).max(0.0);
    }
}

struct ConeGeometry {
    on: Vec<usize>,
    off: Vec<usize>,
    factor: f64,
}

impl ConeGeometry {
    /// Maps `v` into the cone by shrinking the off-support block, then normalizes.
    fn retract(&self, v: &mut DVector<f64>) -> bool {
        let on_l1: f64 = self.on.iter().map(|&j| v[j].abs()).sum();
        let mut off: Vec<f64> = self.off.iter().map(|&j| v[j]).collect();
        project_l1_ball(&mut off, self.factor * on_l1);
        for (&j, x) in self.off.iter().zip(off) {
            v[j] = x;
        }
        let nrm = v.norm();
        if nrm == 0.0 || !nrm.is_finite() {
            return false;
        }
        *v /= nrm;
        true
    }
}

fn rayleigh(m: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    v.dot(&(m * v))
}

/// `inf θ′Mθ/‖θ‖²` over `θ ≠ 0` with `‖θ·δ⋆ᶜ‖₁ ≤ factor·‖θ·δ⋆‖₁`.
pub fn restricted_eig_cone(
    m: &DMatrix<f64>,
    delta_star: &SparsityPattern,
    factor: f64,
) -> Result<ConeEigen> {
    restricted_eig_cone_with(m, delta_star, factor, ConeSearch::default())
}

/// Projected-gradient Rayleigh minimization over the cone with random restarts.
pub fn restricted_eig_cone_with(
    m: &DMatrix<f64>,
    delta_star: &SparsityPattern,
    factor: f64,
    search: ConeSearch,
) -> Result<ConeEigen> {
    check_square(m)?;
    let d = m.nrows();
    check_dim(d, delta_star.dim())?;
    if !(factor >= 0.0) {
        return Err(Error::invalid("factor", "must be nonnegative"));
    }
    let eig = SymmetricEigen::new(m.clone());
    let certificate = eig.eigenvalues.min();
    if delta_star.is_empty() {
        return Ok(ConeEigen {
            estimate: f64::INFINITY,
            certificate,
        });
    }
    if delta_star.len() == d {
        return Ok(ConeEigen {
            estimate: certificate,
            certificate,
        });
    }
    let geom = ConeGeometry {
        on: delta_star.active().to_vec(),
        off: (0..d).filter(|j| !delta_star.contains(*j)).collect(),
        factor,
    };
    let lmax = eig
        .eigenvalues
        .iter()
        .fold(0.0f64, |a, b| a.max(b.abs()))
        .max(1e-300);
    let mut rng = ChaCha8Rng::seed_from_u64(search.seed);

    let mut starts: Vec<DVector<f64>> = Vec::with_capacity(search.restarts + d);
    // eigenvectors of the smallest eigenvalues, pushed into the cone
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    for &k in order.iter().take(d.min(4)) {
        starts.push(eig.eigenvectors.column(k).into_owned());
    }
    for &j in &geom.on {
        let mut e = DVector::zeros(d);
        e[j] = 1.0;
        starts.push(e);
    }
    for _ in 0..search.restarts {
        starts.push(DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng)));
    }

    let mut best = f64::INFINITY;
    for mut v in starts {
        if !geom.retract(&mut v) {
            continue;
        }
        let mut val = rayleigh(m, &v);
        let mut step = 1.0 / lmax;
        for _ in 0..search.iterations {
            let mv = m * &v;
            let grad = &mv - &v * val;
            if grad.norm() < 1e-14 * lmax {
                break;
            }
            let mut improved = false;
            while step > 1e-12 / lmax {
                let mut cand = &v - &grad * step;
                if geom.retract(&mut cand) {
                    let cv = rayleigh(m, &cand);
                    if cv < val {
                        v = cand;
                        val = cv;
                        improved = true;
                        step *= 1.5;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !improved {
                break;
            }
        }
        best = best.min(val);
    }
    Ok(ConeEigen {
        estimate: best.max(certificate),
        certificate,
    })
}
