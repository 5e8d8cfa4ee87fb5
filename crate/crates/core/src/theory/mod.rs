//! Computable pieces of the contraction analysis: rate functions and `φ_r`,
//! the analytic inequalities used along the way, Hellinger transforms,
//! event-set margins and log-scale evaluation of the general bound.

mod report;

pub use report::{
    ising_bound_report, logistic_bound_report, IsingBoundInputs, IsingBoundReport,
    LogisticBoundInputs, LogisticBoundReport,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logistic::{logistic_variance, sigmoid, softplus};
use crate::prior::ln_choose;
use crate::types::ConeSpec;

/// `r(x) = τx²/(1 + bx)`; `b = 0` is the quadratic case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFunction {
    pub tau: f64,
    pub b: f64,
}

impl RateFunction {
    pub fn new(tau: f64, b: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::invalid(
                "tau",
                format!("must be positive, got {tau}"),
            ));
        }
        if !(b >= 0.0 && b.is_finite()) {
            return Err(Error::invalid("b", format!("must be nonnegative, got {b}")));
        }
        Ok(Self { tau, b })
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.tau * x * x / (1.0 + self.b * x)
    }

    /// `φ_r(a) = inf{x > 0 : r(z) ≥ az ∀ z ≥ x}`, `+∞` when no such x exists.
    ///
    /// `r(z)/z = τz/(1 + bz)` increases to `τ/b`, so the infimum is
    /// `a/(τ − ab)` when `τ > ab` and `+∞` otherwise.
    pub fn phi(&self, a: f64) -> f64 {
        if a <= 0.0 {
            return 0.0;
        }
        let gap = self.tau - a * self.b;
        if gap > 0.0 {
            a / gap
        } else {
            f64::INFINITY
        }
    }
}

pub fn rate_eval(r: &RateFunction, x: f64) -> f64 {
    r.eval(x)
}

pub fn phi_r(r: &RateFunction, a: f64) -> f64 {
    r.phi(a)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShiftInfimum {
    /// `inf_{x>0} [r(x) − cx]`
    pub exact_inf: f64,
    /// `−c²/(2τ)`
    pub quadratic_bound: f64,
    /// `−c²/(4√τ √(τ − cb))`, finite only when `τ > cb`
    pub sharp_bound: f64,
    /// `τ ≥ (4/3) b c`
    pub bound_valid: bool,
}

/// Lower bound on `inf_{x>0}[τx²/(1+bx) − cx]` alongside its exact value.
pub fn rate_shift_infimum(r: &RateFunction, c: f64) -> Result<ShiftInfimum> {
    if !(c >= 0.0) {
        return Err(Error::invalid("c", "must be nonnegative"));
    }
    let RateFunction { tau, b } = *r;
    let quadratic_bound = -c * c / (2.0 * tau);
    let bound_valid = tau >= 4.0 / 3.0 * b * c;
    let sharp_bound = if tau > c * b {
        -c * c / (4.0 * tau.sqrt() * (tau - c * b).sqrt())
    } else {
        f64::NEG_INFINITY
    };
    let f = |x: f64| r.eval(x) - c * x;
    let exact_inf = if c == 0.0 {
        0.0
    } else if c * b > tau {
        f64::NEG_INFINITY
    } else if c * b == tau {
        // decreasing towards the asymptote −τ/b²
        -tau / (b * b)
    } else {
        // stationary point: (τ/b)(1 − (1+bx)⁻²) = c, or x = c/(2τ) when b = 0
        let x_star = if b == 0.0 {
            c / (2.0 * tau)
        } else {
            ((1.0 - c * b / tau).powf(-0.5) - 1.0) / b
        };
        golden_section_min(f, 0.0, 2.0 * x_star + f64::MIN_POSITIVE, 200)
    };
    Ok(ShiftInfimum {
        exact_inf,
        quadratic_bound,
        sharp_bound,
        bound_valid,
    })
}

/// Minimum of a unimodal function on `[lo, hi]`.
pub(crate) fn golden_section_min<F: Fn(f64) -> f64>(
    f: F,
    mut lo: f64,
    mut hi: f64,
    iters: usize,
) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..iters {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
        if hi - lo <= f64::EPSILON * hi.abs().max(1e-300) {
            break;
        }
    }
    f1.min(f2).min(f(lo)).min(f(hi))
}

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `1 − Φ(z)`
pub fn normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

/// Mills ratio `(1 − Φ(z))/φ(z)`, accurate for all `z ≥ 0`.
pub fn mills_value(z: f64) -> f64 {
    if z < 8.0 {
        normal_sf(z) / normal_pdf(z)
    } else {
        // continued fraction 1/(z + 1/(z + 2/(z + 3/(z + …))))
        let mut tail = z;
        for k in (1..=120).rev() {
            tail = z + k as f64 / tail;
        }
        1.0 / tail
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MillsRatio {
    pub value: f64,
    /// `z/(1+z²)`
    pub lower1: f64,
    /// `2/(z + √(z²+4))`
    pub lower2: f64,
    /// `4/(3z + √(z²+8))`
    pub upper: f64,
}

pub fn mills_ratio(z: f64) -> Result<MillsRatio> {
    if !(z >= 0.0) {
        return Err(Error::invalid("z", "must be nonnegative"));
    }
    Ok(MillsRatio {
        value: mills_value(z),
        lower1: z / (1.0 + z * z),
        lower2: 2.0 / (z + (z * z + 4.0).sqrt()),
        upper: 4.0 / (3.0 * z + (z * z + 8.0).sqrt()),
    })
}

/// `∫ exp(−(a/2)u² − b|u|) du = (2/√a)·(1 − Φ(b/√a))/φ(b/√a)`, equal to `2/b` at `a = 0`.
pub fn laplace_gauss_integral(a: f64, b: f64) -> Result<f64> {
    if !(a >= 0.0) {
        return Err(Error::invalid("a", "must be nonnegative"));
    }
    if !(b > 0.0) {
        return Err(Error::invalid("b", "must be positive"));
    }
    if a == 0.0 {
        return Ok(2.0 / b);
    }
    let sa = a.sqrt();
    Ok(2.0 / sa * mills_value(b / sa))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SelfConcordance {
    /// `g″(x₀)(e^{−|u|} + |u| − 1)`
    pub lower: f64,
    /// `g(x₀+u) − g(x₀) − g′(x₀)u`
    pub mid: f64,
    /// `g″(x₀)(e^{|u|} − |u| − 1)`
    pub upper: f64,
}

pub fn self_concordance_bounds(x0: f64, u: f64) -> SelfConcordance {
    let w = logistic_variance(x0);
    let a = u.abs();
    SelfConcordance {
        lower: w * ((-a).exp_m1() + a),
        mid: softplus(x0 + u) - softplus(x0) - sigmoid(x0) * u,
        upper: w * (a.exp_m1() - a),
    }
}

/// `(H(x), x²/(2+x))` with `H(x) = e^{−x} + x − 1`.
pub fn h_lower_bound(x: f64) -> Result<(f64, f64)> {
    if !(x >= 0.0) {
        return Err(Error::invalid("x", "must be nonnegative"));
    }
    Ok(((-x).exp_m1() + x, x * x / (2.0 + x)))
}

/// `Σ q₁^α q₂^{1−α}` over a finite space.
pub fn hellinger_transform(q1: &[f64], q2: &[f64], alpha: f64) -> Result<f64> {
    if q1.len() != q2.len() {
        return Err(Error::DimensionMismatch {
            expected: q1.len(),
            got: q2.len(),
        });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid("alpha", "must lie in (0, 1)"));
    }
    if q1.iter().chain(q2).any(|&v| !(v >= 0.0)) {
        return Err(Error::invalid("q", "functions must be nonnegative"));
    }
    Ok(q1
        .iter()
        .zip(q2)
        .map(|(&a, &b)| {
            if a == 0.0 || b == 0.0 {
                0.0
            } else {
                a.powf(alpha) * b.powf(1.0 - alpha)
            }
        })
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    L1,
    L2,
}

impl Normalization {
    fn name(&self) -> &'static str {
        match self {
            Normalization::L1 => "l1",
            Normalization::L2 => "l2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    E0,
    E1Check,
    E1Hat,
}

/// Whether a data set lies in one of the good events, with the measured
/// quantity and the threshold it was compared against.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventMargin {
    pub kind: EventKind,
    pub cone: ConeSpec,
    pub normalization: Option<Normalization>,
    pub margin: f64,
    pub threshold: f64,
    pub member: bool,
}

/// `sup{|⟨grad, u⟩| : u ∈ cone, ‖u‖ = 1}` compared with `λ/2`.
pub fn event_margin_e0(
    grad: &[f64],
    cone: &ConeSpec,
    normalization: Normalization,
    lambda: f64,
) -> Result<EventMargin> {
    if !(lambda > 0.0) {
        return Err(Error::invalid("lambda", "must be positive"));
    }
    let linf = |it: &mut dyn Iterator<Item = f64>| it.fold(0.0f64, |m, v| m.max(v.abs()));
    let margin = match (cone, normalization) {
        (ConeSpec::Full, Normalization::L1) | (ConeSpec::Sparse { .. }, Normalization::L1) => {
            linf(&mut grad.iter().copied())
        }
        (ConeSpec::Full, Normalization::L2) => grad.iter().map(|g| g * g).sum::<f64>().sqrt(),
        (ConeSpec::Sparse { s }, Normalization::L2) => {
            let mut sq: Vec<f64> = grad.iter().map(|g| g * g).collect();
            sq.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap());
            sq.iter().take(*s).sum::<f64>().sqrt()
        }
        (ConeSpec::Pattern { support }, norm) => {
            if support.dim() != grad.len() {
                return Err(Error::DimensionMismatch {
                    expected: support.dim(),
                    got: grad.len(),
                });
            }
            let vals = support.active().iter().map(|&j| grad[j]);
            match norm {
                Normalization::L1 => linf(&mut vals.into_iter()),
                Normalization::L2 => vals.map(|g| g * g).sum::<f64>().sqrt(),
            }
        }
        (c, n) => {
            return Err(Error::UnsupportedMargin {
                cone: c.name().to_string(),
                norm: n.name().to_string(),
            })
        }
    };
    Ok(EventMargin {
        kind: EventKind::E0,
        cone: cone.clone(),
        normalization: Some(normalization),
        margin,
        threshold: lambda / 2.0,
        member: margin <= lambda / 2.0,
    })
}

/// Pointwise check of the upper curvature event at one `θ`:
/// `𝓛_{n,θ} ≤ −r(‖θ − θ⋆‖)/2`.
pub fn event_margin_e1_check(
    cone: &ConeSpec,
    bregman: f64,
    rate: &RateFunction,
    distance: f64,
) -> EventMargin {
    let threshold = -0.5 * rate.eval(distance);
    EventMargin {
        kind: EventKind::E1Check,
        cone: cone.clone(),
        normalization: Some(Normalization::L2),
        margin: bregman,
        threshold,
        member: bregman <= threshold,
    }
}

/// Pointwise check of the lower curvature event at one `θ`:
/// `𝓛_{n,θ} ≥ −(L/2)‖θ − θ⋆‖₂²`.
pub fn event_margin_e1_hat(
    cone: &ConeSpec,
    bregman: f64,
    l_bar: f64,
    distance: f64,
) -> EventMargin {
    let threshold = -0.5 * l_bar * distance * distance;
    EventMargin {
        kind: EventKind::E1Hat,
        cone: cone.clone(),
        normalization: Some(Normalization::L2),
        margin: bregman,
        threshold,
        member: bregman >= threshold,
    }
}

/// `log[C(d, s)·24^s]`, the packing-number cap for `s`-sparse balls.
pub fn packing_bound(d: usize, s: usize) -> Result<f64> {
    if s > d {
        return Err(Error::invalid("s", format!("need s <= d = {d}, got {s}")));
    }
    Ok(ln_choose(d, s) + s as f64 * 24f64.ln())
}

/// `c₀ ≤ √s̄` on `s̄`-sparse cones (Hölder); an upper bound, not the exact supremum.
pub fn c0_sparse_upper(s_bar: usize) -> f64 {
    (s_bar as f64).sqrt()
}

#[derive(Debug, Clone, Serialize)]
pub struct Part1Inputs {
    pub k: usize,
    pub s_star: usize,
    pub d: usize,
    pub rho: f64,
    pub l_bar: f64,
    pub rate: RateFunction,
    pub c2: f64,
    pub c4: f64,
    /// True when the compatibility cone is empty (`s⋆ = 0`).
    pub n_empty: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Part1Bound {
    pub inputs: Part1Inputs,
    /// `𝖺 = −½ inf_{x>0}[r(x) − 4ρ√s⋆ x]`
    pub a: f64,
    /// log of `2e^𝖺 (4 + 4L̄/ρ²)^{s⋆} C(d,s⋆) (4c₂/d^{c₄})^k`
    pub log_value: f64,
    /// `d^{c₄} ≥ 8c₂`
    pub in_regime: bool,
}

/// Log of the sparsity bound `P(‖θ‖₀ ≥ s⋆ + k)` beyond the bad-event probability.
pub fn thm2_part1_rhs(inputs: Part1Inputs) -> Result<Part1Bound> {
    if inputs.d < 1 || !(inputs.rho > 0.0) || !(inputs.l_bar >= 0.0) {
        return Err(Error::invalid("inputs", "need d >= 1, rho > 0, l_bar >= 0"));
    }
    let d = inputs.d as f64;
    let a = if inputs.n_empty {
        0.0
    } else {
        let c = 4.0 * inputs.rho * (inputs.s_star as f64).sqrt();
        -0.5 * rate_shift_infimum(&inputs.rate, c)?.exact_inf
    };
    let s = inputs.s_star as f64;
    let log_value = 2f64.ln()
        + a
        + s * (4.0 + 4.0 * inputs.l_bar / (inputs.rho * inputs.rho)).ln()
        + ln_choose(inputs.d, inputs.s_star)
        + inputs.k as f64 * ((4.0 * inputs.c2).ln() - inputs.c4 * d.ln());
    Ok(Part1Bound {
        in_regime: d.powf(inputs.c4) >= 8.0 * inputs.c2,
        a,
        log_value,
        inputs,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Part2Inputs {
    pub m0: f64,
    pub eps_bar: f64,
    pub rate: RateFunction,
    pub rho: f64,
    pub c0: f64,
    pub s_star: usize,
    pub d: usize,
    pub c1: f64,
    pub c3: f64,
    pub l_bar: f64,
    /// Sparsity level bounding the packing numbers `D_j`.
    pub s_bar: usize,
    pub j_max: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Part2Terms {
    pub inputs: Part2Inputs,
    /// `log Σ_{j ≤ j_max} D_j e^{−r(jM₀ε̄/2)/8}` with `D_j` capped by the packing bound
    pub log_series1: f64,
    /// `log Σ_{j ≤ j_max} e^{−r(jM₀ε̄/2)/8} e^{3ρc₀jM₀ε̄}`
    pub log_series2: f64,
    /// `log[2 C(d,s⋆) (d^{c₃}/c₁)^{s⋆} (1 + ρ²/L̄)^{s⋆}]`
    pub log_prefactor2: f64,
    /// log of the full second term, prefactor included
    pub log_term2: f64,
    /// Set when the summands are not yet decreasing at `j_max`.
    pub series1_tail_unreliable: bool,
    pub series2_tail_unreliable: bool,
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Partial sums of the two series in the contraction bound, in log scale.
pub fn thm2_part2_terms(inputs: Part2Inputs) -> Result<Part2Terms> {
    if !(inputs.m0 > 2.0) {
        return Err(Error::invalid("m0", "must exceed 2"));
    }
    if !(inputs.eps_bar > 0.0 && inputs.eps_bar.is_finite()) {
        return Err(Error::invalid("eps_bar", "must be positive and finite"));
    }
    if inputs.j_max == 0 {
        return Err(Error::invalid("j_max", "must be at least 1"));
    }
    let log_d = packing_bound(inputs.d, inputs.s_bar.min(inputs.d))?;
    let step = inputs.m0 * inputs.eps_bar;
    let (mut s1, mut s2) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let (mut prev1, mut prev2) = (f64::INFINITY, f64::INFINITY);
    let (mut dec1, mut dec2) = (true, true);
    for j in 1..=inputs.j_max {
        let jf = j as f64;
        let decay = -inputs.rate.eval(jf * step / 2.0) / 8.0;
        let t1 = log_d + decay;
        let t2 = decay + 3.0 * inputs.rho * inputs.c0 * jf * step;
        s1 = log_add(s1, t1);
        s2 = log_add(s2, t2);
        dec1 = t1 < prev1;
        dec2 = t2 < prev2;
        prev1 = t1;
        prev2 = t2;
    }
    let d = inputs.d as f64;
    let s = inputs.s_star as f64;
    let log_prefactor2 = 2f64.ln()
        + ln_choose(inputs.d, inputs.s_star)
        + s * (inputs.c3 * d.ln() - inputs.c1.ln())
        + if inputs.s_star == 0 {
            0.0
        } else {
            s * (1.0 + inputs.rho * inputs.rho / inputs.l_bar).ln()
        };
    Ok(Part2Terms {
        log_series1: s1,
        log_series2: s2,
        log_prefactor2,
        log_term2: log_prefactor2 + s2,
        series1_tail_unreliable: !dec1 && inputs.j_max > 1,
        series2_tail_unreliable: !dec2 && inputs.j_max > 1,
        inputs,
    })
}
