//! Desk-scale contraction study: posterior error against `n` on a grid of
//! `(n, d, s⋆)` cells, with replications, and the good-event frequency of
//! the gradient bound.
//!
//! Seeds: cell `c` uses `derive_seed(master, c)`; replication `r` of that
//! cell draws its data from `derive_seed(cell, 2r)` and runs its chain on
//! `derive_seed(cell, 2r + 1)`. Work is spread over the rayon pool and
//! collected in grid order, so the worker count never changes a result.

use qpost::logistic::{generate_design, generate_logistic_data, DesignKind, LogisticData};
use qpost::sampler::{derive_seed, run_chain, ChainConfig};
use qpost::theory::{event_margin_e0, Normalization};
use qpost::{ConeSpec, Error, Result, SparseParam};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::config::{Cell, Init, PriorConfig, RhoContext, RhoRule};

/// `θ⋆` with `s` leading nonzero entries `signal, −signal, signal, …`.
pub fn alternating_theta_star(d: usize, s: usize, signal: f64) -> SparseParam {
    let mut v = vec![0.0; d];
    for (j, x) in v.iter_mut().take(s).enumerate() {
        *x = if j % 2 == 0 { signal } else { -signal };
    }
    SparseParam::from_dense(&v)
}

/// Settings shared by every cell of a study.
#[derive(Debug, Clone)]
pub struct StudySettings {
    pub signal: f64,
    pub design: DesignKind,
    pub rho_scale: f64,
    pub prior: PriorConfig,
    pub init: Init,
    pub k_values: Vec<usize>,
}

pub fn simulate_data(cell: Cell, settings: &StudySettings, seed: u64) -> Result<LogisticData> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let star = alternating_theta_star(cell.d, cell.s_star, settings.signal);
    let x = generate_design(settings.design, cell.n, cell.d, &mut rng);
    generate_logistic_data(&star, x, &mut rng)
}

pub fn cell_rho(cell: Cell, settings: &StudySettings, data: &LogisticData) -> Result<f64> {
    settings.prior.resolve_rho(
        RhoRule::AutoLogistic,
        RhoContext {
            n: cell.n,
            dim: cell.d,
            x_inf: data.x_inf(),
            scale: settings.rho_scale,
        },
    )
}

/// `‖∇ log q(θ⋆)‖∞ ≤ ρ/2`, the full-space good event with the ℓ∞ margin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct E0Outcome {
    pub margin: f64,
    pub threshold: f64,
    pub member: bool,
}

pub fn e0_outcome(data: &LogisticData, rho: f64) -> Result<E0Outcome> {
    let star = data
        .theta_star()
        .ok_or_else(|| Error::invalid("theta_star", "the event needs the generating parameter"))?;
    let grad = data.grad_log_quasi_likelihood(star)?;
    let m = event_margin_e0(&grad, &ConeSpec::Full, Normalization::L1, rho)?;
    Ok(E0Outcome {
        margin: m.margin,
        threshold: m.threshold,
        member: m.member,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Frequency {
    pub count: usize,
    pub total: usize,
    pub fraction: f64,
    /// binomial standard error `√(p(1−p)/N)`
    pub se: f64,
}

impl Frequency {
    pub fn of(count: usize, total: usize) -> Self {
        let p = count as f64 / total as f64;
        Self {
            count,
            total,
            fraction: p,
            se: (p * (1.0 - p) / total as f64).sqrt(),
        }
    }
}

/// Frequency of `Z ∉ E₀` over independent data sets; no sampling involved.
pub fn e0_exceedance(
    cell: Cell,
    settings: &StudySettings,
    replications: usize,
    seed: u64,
) -> Result<Frequency> {
    let misses = (0..replications)
        .into_par_iter()
        .map(|r| {
            let data = simulate_data(cell, settings, derive_seed(seed, r))?;
            let rho = cell_rho(cell, settings, &data)?;
            Ok(!e0_outcome(&data, rho)?.member)
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(Frequency::of(
        misses.iter().filter(|&&m| m).count(),
        replications,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationResult {
    pub data_seed: u64,
    pub chain_seed: u64,
    pub rho: f64,
    /// posterior median of `‖θ − θ⋆‖₂`
    pub posterior_median_error: f64,
    pub posterior_mean_l0: f64,
    /// `P(‖θ‖₀ ≥ s⋆ + k | Z)` for each configured `k`
    pub l0_exceedance: Vec<f64>,
    pub e0: E0Outcome,
    pub within_acceptance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub cell: Cell,
    /// median over replications of the posterior median error
    pub median_error: f64,
    pub mean_l0: f64,
    /// replication average of each `P(‖θ‖₀ ≥ s⋆ + k | Z)`
    pub l0_exceedance: Vec<f64>,
    pub e0_exceedance: Frequency,
    pub replications: Vec<ReplicationResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeFit {
    pub d: usize,
    pub s_star: usize,
    /// `(n, median error)`
    pub points: Vec<(usize, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub se: f64,
    /// 95% Student-t interval on `m − 2` degrees of freedom; infinite when `m = 2`
    pub ci: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateStudyResult {
    pub k_values: Vec<usize>,
    pub cells: Vec<CellResult>,
    pub slopes: Vec<SlopeFit>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

/// Least-squares line through `(log n, log err)`.
pub fn fit_slope(d: usize, s_star: usize, points: Vec<(usize, f64)>) -> Result<SlopeFit> {
    let m = points.len();
    if m < 3 {
        return Err(Error::config(
            "rate_study.n",
            format!("a slope needs at least 3 n values, got {m}"),
        ));
    }
    if let Some(p) = points.iter().find(|p| !(p.1 > 0.0)) {
        return Err(Error::invalid(
            "median_error",
            format!("must be positive to take logs, got {} at n = {}", p.1, p.0),
        ));
    }
    let xs: Vec<f64> = points.iter().map(|p| (p.0 as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mf = m as f64;
    let mx = xs.iter().sum::<f64>() / mf;
    let my = ys.iter().sum::<f64>() / mf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::config("rate_study.n", "n values must differ"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let df = mf - 2.0;
    let se = (sse / df / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| Error::invalid("df", e.to_string()))?
        .inverse_cdf(0.975);
    Ok(SlopeFit {
        d,
        s_star,
        points,
        slope,
        intercept,
        se,
        ci: (slope - t * se, slope + t * se),
    })
}

fn run_replication(
    cell: Cell,
    settings: &StudySettings,
    chain: &ChainConfig,
    cell_seed: u64,
    r: usize,
) -> Result<ReplicationResult> {
    let data_seed = derive_seed(cell_seed, 2 * r);
    let chain_seed = derive_seed(cell_seed, 2 * r + 1);
    let data = simulate_data(cell, settings, data_seed)?;
    let star = data.theta_star().unwrap().clone();
    let rho = cell_rho(cell, settings, &data)?;
    let prior = settings.prior.build(cell.d, rho)?;
    let init = match settings.init {
        Init::Zero => SparseParam::zeros(cell.d),
        Init::Truth => star.clone(),
    };
    let summary = run_chain(
        &data,
        &prior,
        ChainConfig {
            seed: chain_seed,
            ..*chain
        },
        &init,
    )?;
    if summary.draws.is_empty() {
        return Err(Error::NoDraws);
    }
    let errors = summary
        .draws
        .iter()
        .map(|d| Ok(d.theta.sub(&star)?.norms().l2))
        .collect::<Result<Vec<f64>>>()?;
    let probs = summary.support_size_probs();
    let posterior_mean_l0 = probs.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
    let l0_exceedance = settings
        .k_values
        .iter()
        .map(|&k| probs.iter().skip(cell.s_star + k).sum())
        .collect();
    Ok(ReplicationResult {
        data_seed,
        chain_seed,
        rho,
        posterior_median_error: median(errors),
        posterior_mean_l0,
        l0_exceedance,
        e0: e0_outcome(&data, rho)?,
        within_acceptance: summary.acceptance.within.rate(),
    })
}

pub fn rate_study(
    grid: &[Cell],
    settings: &StudySettings,
    chain: &ChainConfig,
    replications: usize,
    seed: u64,
) -> Result<RateStudyResult> {
    if replications == 0 {
        return Err(Error::config("replications", "must be at least 1"));
    }
    let jobs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|c| (0..replications).map(move |r| (c, r)))
        .collect();
    let reps = jobs
        .par_iter()
        .map(|&(c, r)| run_replication(grid[c], settings, chain, derive_seed(seed, c), r))
        .collect::<Result<Vec<_>>>()?;
    let kk = settings.k_values.len();
    let cells: Vec<CellResult> = grid
        .iter()
        .zip(reps.chunks(replications))
        .map(|(&cell, rs)| {
            let nr = rs.len() as f64;
            CellResult {
                cell,
                median_error: median(rs.iter().map(|r| r.posterior_median_error).collect()),
                mean_l0: rs.iter().map(|r| r.posterior_mean_l0).sum::<f64>() / nr,
                l0_exceedance: (0..kk)
                    .map(|i| rs.iter().map(|r| r.l0_exceedance[i]).sum::<f64>() / nr)
                    .collect(),
                e0_exceedance: Frequency::of(rs.iter().filter(|r| !r.e0.member).count(), rs.len()),
                replications: rs.to_vec(),
            }
        })
        .collect();
    let mut groups: Vec<(usize, usize)> = cells.iter().map(|c| (c.cell.d, c.cell.s_star)).collect();
    groups.sort_unstable();
    groups.dedup();
    let mut slopes = Vec::new();
    for (d, s) in groups {
        let mut pts: Vec<(usize, f64)> = cells
            .iter()
            .filter(|c| c.cell.d == d && c.cell.s_star == s)
            .map(|c| (c.cell.n, c.median_error))
            .collect();
        pts.sort_by_key(|p| p.0);
        pts.dedup_by_key(|p| p.0);
        if pts.len() >= 3 {
            slopes.push(fit_slope(d, s, pts)?);
        }
    }
    Ok(RateStudyResult {
        k_values: settings.k_values.clone(),
        cells,
        slopes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_exact_power_law() {
        let pts: Vec<(usize, f64)> = [100usize, 200, 400, 800]
            .iter()
            .map(|&n| (n, 3.0 * (n as f64).powf(-0.5)))
            .collect();
        let f = fit_slope(8, 2, pts).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-10);
        assert!(f.se < 1e-10);
    }

    #[test]
    fn slope_ci_uses_student_t() {
        // residuals ±ε around a line; t(0.975, 1) = 12.706
        let pts = vec![(1usize, 1.0), (10, 1.1), (100, 1.0)];
        let f = fit_slope(4, 1, pts).unwrap();
        let half = f.ci.1 - f.slope;
        assert!((half / f.se - 12.706_204_736).abs() < 1e-6);
        assert!(fit_slope(4, 1, vec![(1, 1.0), (2, 1.0)]).is_err());
    }

    #[test]
    fn alternating_signs() {
        let t = alternating_theta_star(5, 3, 2.0);
        assert_eq!(t.to_dense(), vec![2.0, -2.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn study_is_reproducible_and_order_stable() {
        let settings = StudySettings {
            signal: 1.0,
            design: DesignKind::Rademacher,
            rho_scale: 0.1,
            prior: PriorConfig::default(),
            init: Init::Zero,
            k_values: vec![0, 1],
        };
        let chain = ChainConfig::new(2000, 0);
        let grid = [
            Cell {
                n: 50,
                d: 6,
                s_star: 1,
            },
            Cell {
                n: 100,
                d: 6,
                s_star: 1,
            },
            Cell {
                n: 200,
                d: 6,
                s_star: 1,
            },
        ];
        let a = rate_study(&grid, &settings, &chain, 3, 11).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap();
        let b = pool.install(|| rate_study(&grid, &settings, &chain, 3, 11).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.slopes.len(), 1);
        assert_eq!(a.cells[1].replications.len(), 3);
        assert_eq!(
            a.cells[0].replications[2].data_seed,
            derive_seed(derive_seed(11, 0), 4)
        );
    }
}
