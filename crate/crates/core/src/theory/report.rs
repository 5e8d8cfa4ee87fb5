use serde::{Deserialize, Serialize};

use super::{
    c0_sparse_upper, thm2_part1_rhs, thm2_part2_terms, Part1Bound, Part1Inputs, Part2Inputs,
    Part2Terms, RateFunction,
};
use crate::error::{Error, Result};
use crate::ising::{contraction_radii_ising, zeta_ising, IsingRadii, IsingZeta};
use crate::logistic::{contraction_radius_logistic, lq_radius, zeta_logistic, Zeta};
use crate::prior::{select_rho_ising, select_rho_logistic, H2Constants};

fn default_m0() -> f64 {
    3.0
}

fn default_j_max() -> usize {
    10_000
}

fn default_k_max() -> usize {
    10
}

/// Inputs to the logistic bound evaluation. Restricted eigenvalues are
/// supplied by the caller (computed or assumed) and echoed in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticBoundInputs {
    pub n: usize,
    pub d: usize,
    pub s_star: usize,
    pub x_inf: f64,
    /// cone restricted eigenvalue `κ̲₁`
    pub kappa1_cone: f64,
    /// `κ̄₁(s⋆)`
    pub kappa_bar_sstar: f64,
    /// `κ̲₁(s̄)`
    pub kappa_sbar: f64,
    pub h2: H2Constants,
    #[serde(default = "default_m0")]
    pub m0: f64,
    /// Prior scale; defaults to the logistic rule `4‖X‖∞√(n log d)`.
    #[serde(default)]
    pub rho: Option<f64>,
    /// Sample-size constant `A`; left symbolic when absent.
    #[serde(default)]
    pub sample_size_constant: Option<f64>,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default = "default_j_max")]
    pub j_max: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleSizeCondition {
    /// `n/A` must exceed this for the bound to apply
    pub coefficient: f64,
    pub constant: Option<f64>,
    pub satisfied: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LogisticBoundReport {
    pub inputs: LogisticBoundInputs,
    pub rho: f64,
    pub zeta: Zeta,
    pub l2_radius: f64,
    pub l1_radius: f64,
    /// `2/d`, the Hoeffding bound on leaving the gradient event
    pub gradient_event_bound: f64,
    /// `L̄ = nκ̄₁(s⋆)/4`
    pub l_bar: f64,
    /// `r(x) = nκ̲₁x²/(1 + 4√s⋆‖X‖∞x)`
    pub sparsity_rate: RateFunction,
    pub sparsity_bounds: Vec<Part1Bound>,
    /// `λ̄ = ρ√s̄`
    pub lambda_bar: f64,
    /// `r(x) = nκ̲₁(s̄)x²/(1 + √s̄‖X‖∞x/2)`
    pub contraction_rate: RateFunction,
    /// `φ_r(2λ̄)`
    pub eps_bar: f64,
    /// `√s̄`, an upper bound on the sign-alignment constant
    pub c0_upper: f64,
    pub contraction_terms: Option<Part2Terms>,
    pub sample_size: SampleSizeCondition,
}

pub fn logistic_bound_report(inputs: LogisticBoundInputs) -> Result<LogisticBoundReport> {
    inputs.h2.validate()?;
    let LogisticBoundInputs {
        n,
        d,
        s_star,
        x_inf,
        kappa1_cone,
        kappa_bar_sstar,
        kappa_sbar,
        h2,
        m0,
        ..
    } = inputs.clone();
    if s_star > d {
        return Err(Error::invalid("s_star", "must not exceed d"));
    }
    let rho = match inputs.rho {
        Some(r) => r,
        None => select_rho_logistic(x_inf, n, d)?,
    };
    let zeta = zeta_logistic(s_star, h2.c4, d, x_inf, kappa1_cone, kappa_bar_sstar)?;
    let s_bar = zeta.s_bar.min(d);
    let l2_radius = contraction_radius_logistic(m0, x_inf, kappa_sbar, zeta.s_bar, d, n)?;
    let l1_radius = lq_radius(1.0, l2_radius, zeta.s_bar)?;
    let nf = n as f64;
    let l_bar = nf * kappa_bar_sstar / 4.0;
    let sparsity_rate = RateFunction::new(nf * kappa1_cone, 4.0 * (s_star as f64).sqrt() * x_inf)?;
    let sparsity_bounds = (0..=inputs.k_max)
        .map(|k| {
            thm2_part1_rhs(Part1Inputs {
                k,
                s_star,
                d,
                rho,
                l_bar,
                rate: sparsity_rate,
                c2: h2.c2,
                c4: h2.c4,
                n_empty: s_star == 0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let sb = zeta.s_bar as f64;
    let lambda_bar = rho * sb.sqrt();
    let contraction_rate = RateFunction::new(nf * kappa_sbar, sb.sqrt() * x_inf / 2.0)?;
    let eps_bar = contraction_rate.phi(2.0 * lambda_bar);
    let c0_upper = c0_sparse_upper(zeta.s_bar);
    let contraction_terms = if eps_bar.is_finite() && eps_bar > 0.0 {
        Some(thm2_part2_terms(Part2Inputs {
            m0,
            eps_bar,
            rate: contraction_rate,
            rho,
            c0: c0_upper,
            s_star,
            d,
            c1: h2.c1,
            c3: h2.c3,
            l_bar,
            s_bar,
            j_max: inputs.j_max,
        })?)
    } else {
        None
    };
    let coefficient = x_inf.powi(4) * (s_star as f64 / kappa1_cone).powi(2) * (d as f64).ln();
    let sample_size = SampleSizeCondition {
        coefficient,
        constant: inputs.sample_size_constant,
        satisfied: inputs.sample_size_constant.map(|a| nf >= a * coefficient),
    };
    Ok(LogisticBoundReport {
        rho,
        zeta,
        l2_radius,
        l1_radius,
        gradient_event_bound: 2.0 / d as f64,
        l_bar,
        sparsity_rate,
        sparsity_bounds,
        lambda_bar,
        contraction_rate,
        eps_bar,
        c0_upper,
        contraction_terms,
        sample_size,
        inputs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsingBoundInputs {
    pub n: usize,
    pub p: usize,
    /// nonzero count of each column of `θ⋆`
    pub s_star: Vec<usize>,
    /// `κ̲₂`
    pub kappa2_cone: f64,
    /// `κ̲₂(s̄)`
    pub kappa2_sbar: f64,
    pub h2: H2Constants,
    #[serde(default = "default_m0")]
    pub m0: f64,
    #[serde(default)]
    pub rho: Option<f64>,
    /// Sample-size constant `A₁`; left symbolic when absent.
    #[serde(default)]
    pub sample_size_constant: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct IsingBoundReport {
    pub inputs: IsingBoundInputs,
    pub rho: f64,
    pub zeta: IsingZeta,
    /// `Σⱼ s̄ⱼ`
    pub s_bar_total: usize,
    pub radii: IsingRadii,
    pub sample_size: SampleSizeCondition,
}

pub fn ising_bound_report(inputs: IsingBoundInputs) -> Result<IsingBoundReport> {
    inputs.h2.validate()?;
    let rho = match inputs.rho {
        Some(r) => r,
        None => select_rho_ising(inputs.n, inputs.p)?,
    };
    let zeta = zeta_ising(&inputs.s_star, inputs.h2.c4, inputs.p, inputs.kappa2_cone)?;
    let radii = contraction_radii_ising(
        inputs.m0,
        inputs.kappa2_sbar,
        &zeta.s_bar_j,
        inputs.p,
        inputs.n,
    )?;
    let total: usize = zeta.s_bar_j.iter().sum();
    let coefficient = (total as f64 / inputs.kappa2_sbar).powi(2) * (inputs.p as f64).ln();
    let sample_size = SampleSizeCondition {
        coefficient,
        constant: inputs.sample_size_constant,
        satisfied: inputs
            .sample_size_constant
            .map(|a| inputs.n as f64 >= a * coefficient),
    };
    Ok(IsingBoundReport {
        rho,
        s_bar_total: total,
        zeta,
        radii,
        sample_size,
        inputs,
    })
}
