//! Spike-and-slab prior: a support-size law `{g_s}` spread uniformly over
//! patterns of each size, and an independent Laplace(ρ) slab on the active
//! coordinates.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{check_dim, SparseParam, SparsityPattern};

/// Distribution of `‖δ‖₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "support_law", rename_all = "snake_case")]
pub enum SupportLaw {
    /// `q ~ Beta(1, d^u)`, `δⱼ | q ~ Bernoulli(q)` i.i.d.
    BetaBinomial { u: f64 },
    /// Explicit `g₀..g_d`.
    Explicit { g: Vec<f64> },
}

/// Constants `(c₁, c₂, c₃, c₄)` bounding consecutive ratios of the support law:
/// `c₁ d^{−c₃} g_{s−1} ≤ g_s ≤ c₂ d^{−c₄} g_{s−1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct H2Constants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

impl H2Constants {
    /// The constants known to hold for the beta-binomial law with parameter `u`.
    pub fn beta_binomial(u: f64) -> Self {
        Self {
            c1: 0.5,
            c2: 1.0,
            c3: u,
            c4: u - 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c1 > 0.0 && self.c2 > 0.0 && self.c4 > 0.0 && self.c3 >= self.c4) {
            return Err(Error::invalid(
                "h2_constants",
                format!(
                    "need c1, c2 > 0 and c3 >= c4 > 0, got ({}, {}, {}, {})",
                    self.c1, self.c2, self.c3, self.c4
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PriorSpec {
    d: usize,
    rho: f64,
    law: SupportLaw,
    h2: H2Constants,
    /// `log g_s`, s = 0..=d
    #[serde(skip)]
    log_g: Vec<f64>,
    /// `log π_δ` for a pattern of size s
    #[serde(skip)]
    log_pi: Vec<f64>,
}

pub(crate) fn ln_choose(d: usize, s: usize) -> f64 {
    if s > d {
        return f64::NEG_INFINITY;
    }
    let k = s.min(d - s);
    if k <= 64 {
        return (1..=k).map(|i| ((d - k + i) as f64 / i as f64).ln()).sum();
    }
    let lg = |x: f64| libm::lgamma(x);
    lg(d as f64 + 1.0) - lg(k as f64 + 1.0) - lg((d - k) as f64 + 1.0)
}

impl PriorSpec {
    pub fn new(d: usize, rho: f64, law: SupportLaw, h2: H2Constants) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("d", "dimension must be at least 1"));
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::invalid(
                "rho",
                format!("must be positive, got {rho}"),
            ));
        }
        h2.validate()?;
        let log_pi: Vec<f64> = match &law {
            SupportLaw::BetaBinomial { u } => {
                if !(*u > 0.0) {
                    return Err(Error::invalid("u", format!("must be positive, got {u}")));
                }
                // π(0) = d^u/(d^u + d), π(s)/π(s−1) = s/(d^u + d − s)
                let big = (d as f64).powf(*u);
                let mut out = Vec::with_capacity(d + 1);
                let mut acc = -(d as f64 / big).ln_1p();
                out.push(acc);
                for s in 1..=d {
                    acc += (s as f64).ln() - (big + (d - s) as f64).ln();
                    out.push(acc);
                }
                out
            }
            SupportLaw::Explicit { g } => {
                check_dim(d + 1, g.len())?;
                if g.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                    return Err(Error::invalid(
                        "g",
                        "entries must be finite and nonnegative",
                    ));
                }
                let total: f64 = g.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::invalid(
                        "g",
                        format!("must sum to 1, sums to {total}"),
                    ));
                }
                g.iter()
                    .enumerate()
                    .map(|(s, &x)| x.ln() - ln_choose(d, s))
                    .collect()
            }
        };
        let log_g = log_pi
            .iter()
            .enumerate()
            .map(|(s, &lp)| lp + ln_choose(d, s))
            .collect();
        Ok(Self {
            d,
            rho,
            law,
            h2,
            log_g,
            log_pi,
        })
    }

    /// Beta-binomial(u) law with its matching H2 constants.
    pub fn beta_binomial(d: usize, u: f64, rho: f64) -> Result<Self> {
        Self::new(
            d,
            rho,
            SupportLaw::BetaBinomial { u },
            H2Constants::beta_binomial(u),
        )
    }

    /// The same law and constants with a different Laplace scale.
    pub fn with_rho(&self, rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::invalid(
                "rho",
                format!("must be positive, got {rho}"),
            ));
        }
        Ok(Self {
            rho,
            ..self.clone()
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn law(&self) -> &SupportLaw {
        &self.law
    }

    pub fn h2(&self) -> H2Constants {
        self.h2
    }

    /// `log g_s`
    pub fn log_size_weight(&self, s: usize) -> f64 {
        self.log_g.get(s).copied().unwrap_or(f64::NEG_INFINITY)
    }

    /// `g_s` for s = 0..=d.
    pub fn size_law(&self) -> Vec<f64> {
        self.log_g.iter().map(|l| l.exp()).collect()
    }

    /// `log π_δ` for a pattern with `s` active coordinates.
    pub fn log_pattern_weight(&self, s: usize) -> f64 {
        self.log_pi.get(s).copied().unwrap_or(f64::NEG_INFINITY)
    }

    /// `log π_δ = log g_{‖δ‖₀} − log C(d, ‖δ‖₀)`; `−∞` marks an impossible support.
    pub fn support_log_weight(&self, delta: &SparsityPattern) -> Result<f64> {
        check_dim(self.d, delta.dim())?;
        Ok(self.log_pattern_weight(delta.len()))
    }

    pub fn is_impossible(&self, s: usize) -> bool {
        self.log_pattern_weight(s) == f64::NEG_INFINITY
    }

    /// Log density of `θ` against `μ_{d,δ(θ)}`:
    /// `log π_δ + ‖δ‖₀ log(ρ/2) − ρ‖θ‖₁`.
    pub fn log_prior_density(&self, theta: &SparseParam) -> Result<f64> {
        check_dim(self.d, theta.dim())?;
        let s = theta.pattern().len();
        let lp = self.log_pattern_weight(s);
        if lp == f64::NEG_INFINITY {
            return Ok(lp);
        }
        let l1: f64 = theta.values().iter().map(|v| v.abs()).sum();
        Ok(lp + s as f64 * (self.rho / 2.0).ln() - self.rho * l1)
    }

    /// Compares every consecutive ratio `g_s/g_{s−1}` with the H2 window.
    pub fn check_h2(&self) -> H2Report {
        let dln = (self.d as f64).ln();
        let h = self.h2;
        let lower = h.c1 * (-h.c3 * dln).exp();
        let upper = h.c2 * (-h.c4 * dln).exp();
        let (log_lower, log_upper) = (lower.ln(), upper.ln());
        const REL_TOL: f64 = 1e-12;
        let mut checks = Vec::with_capacity(self.d);
        for s in 1..=self.d {
            let (prev, cur) = (self.log_g[s - 1], self.log_g[s]);
            let (ratio, pass) = if prev == f64::NEG_INFINITY {
                (f64::NAN, cur == f64::NEG_INFINITY)
            } else {
                let lr = cur - prev;
                (
                    lr.exp(),
                    lr >= log_lower - REL_TOL && lr <= log_upper + REL_TOL,
                )
            };
            checks.push(H2Check {
                s,
                ratio,
                lower,
                upper,
                pass,
            });
        }
        let finite = checks.iter().map(|c| c.ratio).filter(|r| r.is_finite());
        let min_ratio = finite.clone().fold(f64::INFINITY, f64::min);
        let max_ratio = finite.fold(f64::NEG_INFINITY, f64::max);
        H2Report {
            constants: h,
            all_pass: checks.iter().all(|c| c.pass),
            min_ratio,
            max_ratio,
            checks,
        }
    }

    /// Ancestral draw: size from `{g_s}`, uniform pattern of that size,
    /// i.i.d. Laplace(ρ) values.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SparseParam {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut size = self.d;
        for (s, lg) in self.log_g.iter().enumerate() {
            acc += lg.exp();
            if u < acc {
                size = s;
                break;
            }
        }
        // guard against the cumulative sum ending just below 1
        while self.log_g[size] == f64::NEG_INFINITY && size > 0 {
            size -= 1;
        }
        let mut idx = rand::seq::index::sample(rng, self.d, size).into_vec();
        idx.sort_unstable();
        let exp = Exp::new(self.rho).expect("rho validated positive");
        let entries: Vec<(usize, f64)> = idx
            .into_iter()
            .map(|j| {
                let mag = loop {
                    let m: f64 = exp.sample(rng);
                    if m > 0.0 {
                        break m;
                    }
                };
                (j, if rng.random::<bool>() { mag } else { -mag })
            })
            .collect();
        SparseParam::from_entries(self.d, &entries).expect("indices in range")
    }
}

pub fn support_log_weight(spec: &PriorSpec, delta: &SparsityPattern) -> Result<f64> {
    spec.support_log_weight(delta)
}

pub fn check_h2(spec: &PriorSpec) -> H2Report {
    spec.check_h2()
}

pub fn log_prior_density(spec: &PriorSpec, theta: &SparseParam) -> Result<f64> {
    spec.log_prior_density(theta)
}

pub fn sample_prior<R: Rng + ?Sized>(spec: &PriorSpec, rng: &mut R) -> SparseParam {
    spec.sample(rng)
}

#[derive(Debug, Clone, Serialize)]
pub struct H2Check {
    pub s: usize,
    pub ratio: f64,
    pub lower: f64,
    pub upper: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct H2Report {
    pub constants: H2Constants,
    pub all_pass: bool,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub checks: Vec<H2Check>,
}

/// `ρ = 4‖X‖∞ √(n log d)`
pub fn select_rho_logistic(x_inf: f64, n: usize, d: usize) -> Result<f64> {
    if d < 2 {
        return Err(Error::invalid("d", "need d >= 2 so that log d > 0"));
    }
    if n == 0 {
        return Err(Error::invalid("n", "need n >= 1"));
    }
    if !(x_inf > 0.0) {
        return Err(Error::invalid("x_inf", "must be positive"));
    }
    Ok(4.0 * x_inf * (n as f64 * (d as f64).ln()).sqrt())
}

/// `ρ = 24 √(n log p)`
pub fn select_rho_ising(n: usize, p: usize) -> Result<f64> {
    if p < 2 {
        return Err(Error::invalid("p", "need p >= 2 so that log p > 0"));
    }
    if n == 0 {
        return Err(Error::invalid("n", "need n >= 1"));
    }
    Ok(24.0 * (n as f64 * (p as f64).ln()).sqrt())
}
