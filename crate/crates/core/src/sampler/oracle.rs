use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::summary::{top_supports, EventEstimate, MoveStats, PosteriorSummary, SupportMass};
use super::QuasiLikelihood;
use crate::error::{Error, Result};
use crate::prior::PriorSpec;
use crate::types::{check_dim, SparsityPattern};

pub const MAX_DIM: usize = 6;
pub const MAX_ACTIVE: usize = 4;
const BOUNDARY_LIMIT: f64 = 1e-6;

/// Tensor grid on `[−B, B]^k` for each support: the quasi-likelihood is
/// evaluated at cell midpoints and the slab density is integrated exactly
/// over each cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleGrid {
    pub half_width: f64,
    pub points: usize,
    /// Cap on grid points per support; higher-dimensional supports get
    /// `⌊budget^{1/k}⌋` points per axis when that is below `points`.
    #[serde(default = "default_budget")]
    pub budget: usize,
}

fn default_budget() -> usize {
    20_000_000
}

impl OracleGrid {
    pub fn new(half_width: f64, points: usize) -> Self {
        Self {
            half_width,
            points,
            budget: default_budget(),
        }
    }

    /// `B = 20/ρ`, 201 points per axis.
    pub fn for_rho(rho: f64) -> Self {
        Self::new(20.0 / rho, 201)
    }

    pub fn points_for(&self, k: usize) -> usize {
        if k == 0 {
            return 1;
        }
        let cap = (self.budget as f64).powf(1.0 / k as f64).floor() as usize;
        self.points.min(cap.max(5))
    }
}

/// Running `Σ exp(lᵢ)·(1, θ, |θ|, events, boundary)` with a moving log-shift.
#[derive(Clone)]
struct Acc {
    shift: f64,
    z: f64,
    sum: Vec<f64>,
    sum_abs: Vec<f64>,
    events: Vec<f64>,
    boundary: f64,
}

impl Acc {
    fn new(k: usize, e: usize) -> Self {
        Self {
            shift: f64::NEG_INFINITY,
            z: 0.0,
            sum: vec![0.0; k],
            sum_abs: vec![0.0; k],
            events: vec![0.0; e],
            boundary: 0.0,
        }
    }

    fn rescale(&mut self, new_shift: f64) {
        let f = (self.shift - new_shift).exp();
        self.z *= f;
        self.boundary *= f;
        for v in self
            .sum
            .iter_mut()
            .chain(&mut self.sum_abs)
            .chain(&mut self.events)
        {
            *v *= f;
        }
        self.shift = new_shift;
    }

    fn add(&mut self, l: f64, vals: &[f64], hits: impl Iterator<Item = bool>, boundary: bool) {
        if l == f64::NEG_INFINITY {
            return;
        }
        if l > self.shift {
            self.rescale(l);
        }
        let w = (l - self.shift).exp();
        self.z += w;
        for (i, &v) in vals.iter().enumerate() {
            self.sum[i] += w * v;
            self.sum_abs[i] += w * v.abs();
        }
        for (e, hit) in self.events.iter_mut().zip(hits) {
            if hit {
                *e += w;
            }
        }
        if boundary {
            self.boundary += w;
        }
    }

    fn merge(mut self, mut other: Acc) -> Acc {
        if other.shift == f64::NEG_INFINITY {
            return self;
        }
        if self.shift == f64::NEG_INFINITY {
            return other;
        }
        let s = self.shift.max(other.shift);
        self.rescale(s);
        other.rescale(s);
        self.z += other.z;
        self.boundary += other.boundary;
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.sum_abs.iter_mut().zip(&other.sum_abs) {
            *a += b;
        }
        for (a, b) in self.events.iter_mut().zip(&other.events) {
            *a += b;
        }
        self
    }

    fn log_total(&self) -> f64 {
        self.shift + self.z.ln()
    }
}

/// `log ∫_a^{a+h} (ρ/2)e^{−ρ|t|} dt`, free of cancellation in the tails.
fn log_slab_cell(rho: f64, a: f64, h: f64) -> f64 {
    let b = a + h;
    if a >= 0.0 {
        -rho * a + (-(-rho * h).exp_m1()).ln() - std::f64::consts::LN_2
    } else if b <= 0.0 {
        rho * b + (-(-rho * h).exp_m1()).ln() - std::f64::consts::LN_2
    } else {
        (1.0 - 0.5 * (rho * a).exp() - 0.5 * (-rho * b).exp()).ln()
    }
}

/// Boxed indicator for building event lists at run time.
pub type EventFn = Box<dyn Fn(&[f64]) -> bool + Sync>;

pub type OracleEvent<'a> = (&'a str, &'a (dyn Fn(&[f64]) -> bool + Sync));

fn integrate_support<M: QuasiLikelihood>(
    model: &M,
    rho: f64,
    active: &[usize],
    grid: &OracleGrid,
    events: &[OracleEvent],
) -> Acc {
    let d = model.dim();
    let k = active.len();
    if k == 0 {
        let theta = vec![0.0; d];
        let mut acc = Acc::new(0, events.len());
        let l = model.log_q(&model.state(&theta));
        acc.add(l, &[], events.iter().map(|(_, e)| e(&theta)), false);
        return acc;
    }
    let m = grid.points_for(k);
    let h = 2.0 * grid.half_width / m as f64;
    let mid = |i: usize| -grid.half_width + (i as f64 + 0.5) * h;
    let lw: Vec<f64> = (0..m)
        .map(|i| log_slab_cell(rho, -grid.half_width + i as f64 * h, h))
        .collect();
    let edge = |i: usize| i < 2 || i + 2 >= m;
    let outer = m.pow((k - 1) as u32);
    let inner_axis = active[k - 1];
    // fixed chunking and an ordered merge keep the floating-point sums reproducible
    let chunk = outer.div_ceil(256);
    let visit = |mut acc: Acc, code: usize| {
        let mut theta = vec![0.0; d];
        let mut vals = vec![0.0; k];
        let mut on_edge = false;
        let mut outer_w = 0.0;
        let mut c = code;
        for a in (0..k - 1).rev() {
            let i = c % m;
            c /= m;
            theta[active[a]] = mid(i);
            vals[a] = mid(i);
            on_edge |= edge(i);
            outer_w += lw[i];
        }
        theta[inner_axis] = mid(0);
        let mut state = model.state(&theta);
        for i in 0..m {
            if i > 0 {
                model.shift(&mut state, inner_axis, h);
                theta[inner_axis] = mid(i);
            }
            vals[k - 1] = mid(i);
            let l = model.log_q(&state) + outer_w + lw[i];
            let th = &theta;
            acc.add(
                l,
                &vals,
                events.iter().map(|(_, e)| e(th)),
                on_edge || edge(i),
            );
        }
        acc
    };
    (0..outer.div_ceil(chunk))
        .into_par_iter()
        .map(|c| (c * chunk..((c + 1) * chunk).min(outer)).fold(Acc::new(k, events.len()), visit))
        .collect::<Vec<_>>()
        .into_iter()
        .fold(Acc::new(k, events.len()), Acc::merge)
}

/// Posterior functionals by enumerating every support and integrating the
/// active coordinates on a midpoint grid.
pub fn exact_posterior_oracle<M: QuasiLikelihood>(
    model: &M,
    prior: &PriorSpec,
    grid: OracleGrid,
    events: &[OracleEvent],
) -> Result<PosteriorSummary> {
    let d = model.dim();
    check_dim(d, prior.dim())?;
    if d > MAX_DIM {
        return Err(Error::invalid(
            "d",
            format!("oracle enumerates at most d = {MAX_DIM}, got {d}"),
        ));
    }
    if (MAX_ACTIVE + 1..=d).any(|k| !prior.is_impossible(k)) {
        return Err(Error::invalid(
            "prior",
            format!("oracle integrates at most {MAX_ACTIVE} active coordinates; the support law allows more"),
        ));
    }
    if !(grid.half_width > 0.0) || grid.points < 5 {
        return Err(Error::invalid(
            "grid",
            "need half_width > 0 and at least 5 points",
        ));
    }
    let rho = prior.rho();
    let mut per_support = Vec::new();
    for bits in 0u64..1 << d {
        let pattern = SparsityPattern::from_bits(d, bits);
        let k = pattern.len();
        if prior.is_impossible(k) {
            continue;
        }
        let acc = integrate_support(model, rho, pattern.active(), &grid, events);
        let log_w = prior.log_pattern_weight(k) + acc.log_total();
        per_support.push((pattern, log_w, acc));
    }
    let max = per_support
        .iter()
        .map(|s| s.1)
        .fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = per_support.iter().map(|s| (s.1 - max).exp()).sum();
    let mut incl = vec![0.0; d];
    let mut mean = vec![0.0; d];
    let mut mean_abs = vec![0.0; d];
    let mut hist = vec![0.0; d + 1];
    let mut ev = vec![0.0; events.len()];
    let mut boundary = 0.0;
    let mut masses = Vec::with_capacity(per_support.len());
    for (pattern, log_w, acc) in &per_support {
        let p = (log_w - max).exp() / total;
        hist[pattern.len()] += p;
        boundary += p * acc.boundary / acc.z;
        for (i, &j) in pattern.active().iter().enumerate() {
            incl[j] += p;
            mean[j] += p * acc.sum[i] / acc.z;
            mean_abs[j] += p * acc.sum_abs[i] / acc.z;
        }
        for (e, a) in ev.iter_mut().zip(&acc.events) {
            *e += p * a / acc.z;
        }
        masses.push(SupportMass {
            active: pattern.active().to_vec(),
            probability: p,
        });
    }
    if boundary > BOUNDARY_LIMIT {
        return Err(Error::Truncation {
            fraction: boundary,
            limit: BOUNDARY_LIMIT,
        });
    }
    Ok(PosteriorSummary {
        d,
        exact: true,
        retained: 0,
        inclusion_probs: incl,
        support_size_histogram: hist,
        event_estimates: events
            .iter()
            .zip(ev)
            .map(|((name, _), probability)| {
                (
                    name.to_string(),
                    EventEstimate {
                        probability,
                        se: 0.0,
                    },
                )
            })
            .collect(),
        mean,
        mean_abs,
        top_supports: top_supports(masses),
        acceptance: MoveStats::default(),
        final_rw_scale: f64::NAN,
        draws: Vec::new(),
    })
}
