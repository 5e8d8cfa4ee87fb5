//! The invariant suite behind `qpost verify`.
//!
//! Every check reports its worst slack: the smallest value of
//! `bound − value` (or the negated error for equalities) over its cases, so
//! a check passes when the worst slack is at least `−tolerance`.

use nalgebra::DMatrix;
use qpost::ising::{population_fisher, state_log_probs, IsingModel};
use qpost::logistic::LogisticData;
use qpost::prior::PriorSpec;
use qpost::theory::{
    event_margin_e0, h_lower_bound, hellinger_transform, laplace_gauss_integral, mills_ratio,
    self_concordance_bounds, Normalization, RateFunction,
};
use qpost::{ConeSpec, Result, SparseParam, SparsityPattern};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub cases: usize,
    pub worst_slack: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub checks: Vec<Check>,
}

struct Slack {
    worst: f64,
    cases: usize,
}

impl Slack {
    fn new() -> Self {
        Self {
            worst: f64::INFINITY,
            cases: 0,
        }
    }

    fn push(&mut self, s: f64) {
        // NaN must fail, so it replaces the running minimum
        self.worst = if s.is_nan() {
            f64::NEG_INFINITY
        } else {
            self.worst.min(s)
        };
        self.cases += 1;
    }

    fn check(self, name: &'static str, tolerance: f64) -> Check {
        Check {
            name,
            passed: self.worst >= -tolerance,
            cases: self.cases,
            worst_slack: self.worst,
            tolerance,
        }
    }
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

/// `z/(1+z²) ≤ 2/(z+√(z²+4)) ≤ (1−Φ(z))/φ(z) ≤ 4/(3z+√(z²+8))` on `[0, 10]`.
pub fn mills_chain() -> Result<Check> {
    let mut s = Slack::new();
    for i in 0..=1000 {
        let m = mills_ratio(i as f64 * 0.01)?;
        s.push(m.lower2 - m.lower1);
        s.push(m.value - m.lower2);
        s.push(m.upper - m.value);
    }
    Ok(s.check("mills_chain", 1e-12))
}

/// Self-concordance sandwich for the logistic log-partition.
pub fn self_concordance(seed: u64, points: usize) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = Slack::new();
    for _ in 0..points {
        let x0 = rng.random_range(-20.0..20.0);
        let u = rng.random_range(-10.0..10.0);
        let b = self_concordance_bounds(x0, u);
        s.push(b.mid - b.lower);
        s.push(b.upper - b.mid);
    }
    Ok(s.check("self_concordance", 1e-12))
}

/// `H(x) = e^{−x} + x − 1 ≥ x²/(2+x)` on `(0, 50]`.
pub fn h_bound() -> Result<Check> {
    let mut s = Slack::new();
    for i in 1..=5000 {
        let (h, lb) = h_lower_bound(i as f64 * 0.01)?;
        s.push(h - lb);
    }
    Ok(s.check("h_lower_bound", 1e-12))
}

/// Composite Simpson rule for `2∫₀^U exp(−(a/2)u² − bu) du` with `U` where
/// the exponent reaches −60.
pub fn laplace_gauss_simpson(a: f64, b: f64, intervals: usize) -> f64 {
    let upper = if a > 0.0 {
        (-b + (b * b + 120.0 * a).sqrt()) / a
    } else {
        60.0 / b
    };
    let h = upper / intervals as f64;
    let f = |u: f64| (-0.5 * a * u * u - b * u).exp();
    let mut acc = f(0.0) + f(upper);
    for i in 1..intervals {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    2.0 * acc * h / 3.0
}

/// Closed form against quadrature (relative error) and against the lower
/// bound `2b/(a + b²)`.
pub fn laplace_gauss(seed: u64, points: usize) -> Result<(Check, Check)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut quad, mut lower) = (Slack::new(), Slack::new());
    for _ in 0..points {
        let a = log_uniform(&mut rng, 1e-2, 1e2);
        let b = log_uniform(&mut rng, 1e-2, 50.0);
        let v = laplace_gauss_integral(a, b)?;
        let q = laplace_gauss_simpson(a, b, 200_000);
        quad.push(-((v - q) / q).abs());
        lower.push((v - 2.0 * b / (a + b * b)) / v);
    }
    Ok((
        quad.check("laplace_gauss_vs_quadrature", 1e-8),
        lower.check("laplace_gauss_lower_bound", 1e-12),
    ))
}

/// `φ_r(a)` from its definition: `r(z)/z` increases in `z`, so the
/// threshold is the root of `r(z)/z = a`, found by bisection. A root beyond
/// `2^200` counts as none.
pub fn phi_by_bisection(r: &RateFunction, a: f64) -> f64 {
    let g = |z: f64| r.tau * z - a * (1.0 + r.b * z);
    let mut hi = 1.0;
    let mut steps = 0;
    while g(hi) <= 0.0 {
        hi *= 2.0;
        steps += 1;
        if steps > 200 {
            return f64::INFINITY;
        }
    }
    let mut lo = 0.0;
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

pub fn phi_closed_form(seed: u64, points: usize) -> Result<(Check, Check)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut agree, mut infinite) = (Slack::new(), Slack::new());
    for _ in 0..points {
        let tau = log_uniform(&mut rng, 0.1, 1e3);
        let b = log_uniform(&mut rng, 1e-3, 10.0);
        let r = RateFunction::new(tau, b)?;
        let a = rng.random_range(0.01..0.99) * tau / b;
        let phi = r.phi(a);
        let bis = phi_by_bisection(&r, a);
        agree.push(-((phi - bis).abs() / phi.max(1.0)));
        let a_big = rng.random_range(1.0..5.0) * tau / b;
        infinite.push(if r.phi(a_big).is_infinite() {
            0.0
        } else {
            -1.0
        });
    }
    Ok((
        agree.check("phi_closed_form_vs_bisection", 1e-9),
        infinite.check("phi_infinite_when_tau_le_ab", 0.0),
    ))
}

/// `r(z) ≥ az` on a dense grid of `z ≥ φ_r(a)` and `r(z) < az` just below.
pub fn phi_definition(seed: u64, points: usize) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = Slack::new();
    for _ in 0..points {
        let r = RateFunction::new(
            log_uniform(&mut rng, 0.1, 1e3),
            log_uniform(&mut rng, 1e-3, 10.0),
        )?;
        let a = rng.random_range(0.01..0.99) * r.tau / r.b;
        let phi = r.phi(a);
        for i in 0..=1000 {
            let z = phi * (1.0 + i as f64 * 0.1);
            s.push((r.eval(z) - a * z) / (a * z).max(1.0));
        }
        let below = 0.99 * phi;
        s.push(if r.eval(below) < a * below { 0.0 } else { -1.0 });
    }
    Ok(s.check("phi_definition_on_grid", 1e-12))
}

/// Analytic gradient against central differences on random data.
pub fn gradient_fd(seed: u64, points: usize) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = Slack::new();
    for _ in 0..points {
        let n = rng.random_range(5..60);
        let d = rng.random_range(1..9);
        let x = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = (0..n)
            .map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 })
            .collect();
        let data = LogisticData::new(x, y, None)?;
        let theta: Vec<f64> = (0..d)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let g = data.grad_log_quasi_likelihood(&SparseParam::from_dense(&theta))?;
        for j in 0..d {
            let h = 1e-5 * theta[j].abs().max(1.0);
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[j] += h;
            tm[j] -= h;
            let fd = (data.log_quasi_likelihood(&SparseParam::from_dense(&tp))?
                - data.log_quasi_likelihood(&SparseParam::from_dense(&tm))?)
                / (2.0 * h);
            s.push(-((fd - g[j]).abs() / g[j].abs().max(1.0)));
        }
    }
    Ok(s.check("gradient_vs_central_difference", 1e-6))
}

/// Beta-binomial ratio bounds and normalization of the pattern weights.
pub fn prior_checks() -> Result<(Check, Check)> {
    let mut h2 = Slack::new();
    for u in [1.5, 2.0, 3.0] {
        for d in [5, 10, 50] {
            let p = PriorSpec::beta_binomial(d, u, 1.0)?;
            h2.push(if p.check_h2().all_pass { 0.0 } else { -1.0 });
        }
    }
    let mut norm = Slack::new();
    for d in 1..=12usize {
        let p = PriorSpec::beta_binomial(d, 2.0, 1.0)?;
        let total: f64 = (0..1u64 << d)
            .map(|bits| {
                p.support_log_weight(&SparsityPattern::from_bits(d, bits))
                    .map(f64::exp)
            })
            .sum::<Result<f64>>()?;
        norm.push(-(total - 1.0).abs());
    }
    Ok((
        h2.check("prior_h2_ratios", 0.0),
        norm.check("prior_pattern_weights_sum_to_one", 1e-12),
    ))
}

/// Ising pmf normalization for `p ≤ 12` and the Fisher matrix at `θ = 0`.
pub fn ising_checks(seed: u64) -> Result<(Check, Check)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sums = Slack::new();
    for p in 2..=12 {
        let mut t = DMatrix::zeros(p, p);
        for i in 0..p {
            for j in i..p {
                let v = 0.7 * rng.sample::<f64, _>(StandardNormal);
                t[(i, j)] = v;
                t[(j, i)] = v;
            }
        }
        let lp = state_log_probs(&IsingModel::new(t)?)?;
        sums.push(-(lp.iter().map(|v| v.exp()).sum::<f64>() - 1.0).abs());
    }
    let h = population_fisher(&IsingModel::zeros(2)?, 0)?;
    let expect = DMatrix::from_row_slice(2, 2, &[0.25, 0.125, 0.125, 0.125]);
    let mut fisher = Slack::new();
    fisher.push(-(h - expect).abs().max());
    Ok((
        sums.check("ising_pmf_sums_to_one", 1e-10),
        fisher.check("ising_fisher_at_zero", 1e-12),
    ))
}

/// `𝓗_{1/2}(p, q) ≤ 1` with equality at `p = q`.
pub fn hellinger(seed: u64, points: usize) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = Slack::new();
    let mass = |rng: &mut ChaCha8Rng, k: usize| {
        let v: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        let t: f64 = v.iter().sum();
        v.into_iter().map(|x| x / t).collect::<Vec<_>>()
    };
    for _ in 0..points {
        let k = rng.random_range(2..10);
        let p = mass(&mut rng, k);
        let q = mass(&mut rng, k);
        s.push(1.0 - hellinger_transform(&p, &q, 0.5)?);
        s.push(-(hellinger_transform(&p, &p, 0.5)? - 1.0).abs());
    }
    Ok(s.check("hellinger_affinity", 1e-12))
}

/// s-sparse ℓ2 margin against the maximum over all size-s supports.
pub fn e0_sparse_margin(seed: u64, points: usize) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = Slack::new();
    for _ in 0..points {
        let d = rng.random_range(1..=12usize);
        let k = rng.random_range(1..=d);
        let g: Vec<f64> = (0..d)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let m = event_margin_e0(&g, &ConeSpec::Sparse { s: k }, Normalization::L2, 1.0)?.margin;
        let brute = (0..1u64 << d)
            .filter(|b| b.count_ones() as usize == k)
            .map(|b| {
                (0..d)
                    .filter(|j| b >> j & 1 == 1)
                    .map(|j| g[j] * g[j])
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0f64, f64::max);
        s.push(-(m - brute).abs());
    }
    Ok(s.check("e0_sparse_l2_vs_enumeration", 1e-12))
}

pub fn run_suite(seed: u64) -> Result<VerifyReport> {
    let (lg_quad, lg_lower) = laplace_gauss(seed ^ 1, 200)?;
    let (phi, phi_inf) = phi_closed_form(seed ^ 2, 100)?;
    let (h2, norm) = prior_checks()?;
    let (pmf, fisher) = ising_checks(seed ^ 3)?;
    let checks = vec![
        mills_chain()?,
        self_concordance(seed ^ 4, 10_000)?,
        h_bound()?,
        lg_quad,
        lg_lower,
        phi,
        phi_inf,
        phi_definition(seed ^ 8, 100)?,
        gradient_fd(seed ^ 5, 100)?,
        h2,
        norm,
        pmf,
        fisher,
        hellinger(seed ^ 6, 200)?,
        e0_sparse_margin(seed ^ 7, 50)?,
    ];
    Ok(VerifyReport {
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        let r = run_suite(1).unwrap();
        for c in &r.checks {
            assert!(c.passed, "{c:?}");
            assert!(c.cases > 0);
        }
    }

    #[test]
    fn simpson_reference_is_itself_accurate() {
        // a → 0 leaves the pure Laplace integral 2/b
        let q = laplace_gauss_simpson(1e-12, 2.0, 200_000);
        assert!((q - 1.0).abs() < 1e-10);
    }

    #[test]
    fn nan_fails_a_check() {
        let mut s = Slack::new();
        s.push(0.0);
        s.push(f64::NAN);
        assert!(!s.check("x", 1.0).passed);
    }

    #[test]
    fn bisection_reference() {
        let r = RateFunction::new(10.0, 2.0).unwrap();
        assert!((phi_by_bisection(&r, 1.0) - 0.125).abs() < 1e-12);
        assert!(phi_by_bisection(&r, 5.0).is_infinite());
    }
}
