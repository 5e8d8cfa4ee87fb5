use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::summary::{event_probability, Draw, EventEstimate, PosteriorSummary};
use super::{run_chain, Chain, ChainConfig};
use crate::error::{Error, Result};
use crate::ising::{column_design, IsingData};
use crate::prior::PriorSpec;
use crate::types::{check_dim, MatrixParam, SparseParam};

/// Seed of stream `index` under `master`: SplitMix64 applied to
/// `master + (index + 1)·0x9E3779B97F4A7C15`.
pub fn derive_seed(master: u64, index: usize) -> u64 {
    let mut z = master.wrapping_add(
        (index as u64)
            .wrapping_add(1)
            .wrapping_mul(0x9E37_79B9_7F4A_7C15),
    );
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// How to turn the two column estimates `θᵢⱼ`, `θⱼᵢ` of one edge into a single value.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symmetrization {
    /// keep the entry of smaller magnitude
    Min,
    /// keep the entry of larger magnitude
    Max,
    #[default]
    Average,
}

pub fn symmetrize(m: &DMatrix<f64>, rule: Symmetrization) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| {
        let (a, b) = (m[(i, j)], m[(j, i)]);
        match rule {
            Symmetrization::Average => 0.5 * (a + b),
            Symmetrization::Min => {
                if a.abs() <= b.abs() {
                    a
                } else {
                    b
                }
            }
            Symmetrization::Max => {
                if a.abs() >= b.abs() {
                    a
                } else {
                    b
                }
            }
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsingFitConfig {
    pub chain: ChainConfig,
    /// Radii at which `P(‖θ − θ⋆‖ > r)` is estimated, for the Frobenius and
    /// column-max norms, when `θ⋆` is known.
    #[serde(default)]
    pub radii: Vec<f64>,
    #[serde(default)]
    pub symmetrization: Symmetrization,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeSummary {
    pub i: usize,
    pub j: usize,
    /// symmetrized posterior mean
    pub weight: f64,
    /// average of the two column inclusion probabilities
    pub pip: f64,
    /// `P(θᵢⱼ ≠ 0)` from the regression of column `j`
    pub pip_in_j: f64,
    /// `P(θⱼᵢ ≠ 0)` from the regression of column `i`
    pub pip_in_i: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsingFit {
    pub p: usize,
    pub columns: Vec<PosteriorSummary>,
    /// column `j` holds the posterior mean of the column-`j` regression
    pub mean: DMatrix<f64>,
    pub symmetrized: DMatrix<f64>,
    pub edges: Vec<EdgeSummary>,
    pub event_estimates: BTreeMap<String, EventEstimate>,
}

impl IsingFit {
    /// Joint draws: the `t`-th retained draw of every column chain.
    pub fn assembled_draws(&self) -> Vec<MatrixParam> {
        let n = self
            .columns
            .iter()
            .map(|c| c.draws.len())
            .min()
            .unwrap_or(0);
        (0..n)
            .map(|t| {
                MatrixParam::from_columns(
                    self.columns
                        .iter()
                        .map(|c| c.draws[t].theta.clone())
                        .collect(),
                )
                .expect("columns share dimension p")
            })
            .collect()
    }

    fn assemble(
        columns: Vec<PosteriorSummary>,
        data: &IsingData,
        config: &IsingFitConfig,
    ) -> Result<Self> {
        let p = data.p();
        let mean = DMatrix::from_fn(p, p, |i, j| columns[j].mean[i]);
        let symmetrized = symmetrize(&mean, config.symmetrization);
        let mut edges = Vec::with_capacity(p * (p - 1) / 2);
        for i in 0..p {
            for j in i + 1..p {
                let (a, b) = (columns[j].inclusion_probs[i], columns[i].inclusion_probs[j]);
                edges.push(EdgeSummary {
                    i,
                    j,
                    weight: symmetrized[(i, j)],
                    pip: 0.5 * (a + b),
                    pip_in_j: a,
                    pip_in_i: b,
                });
            }
        }
        let mut fit = Self {
            p,
            columns,
            mean,
            symmetrized,
            edges,
            event_estimates: BTreeMap::new(),
        };
        if let Some(star) = data.theta_star() {
            let star = star.to_param();
            let diffs = fit
                .assembled_draws()
                .iter()
                .map(|m| m.sub(&star).map(|d| (d.frobenius(), d.tnorm())))
                .collect::<Result<Vec<_>>>()?;
            for &r in &config.radii {
                let (pf, sf) = event_probability(&diffs, |&(f, _)| f > r)?;
                let (pt, st) = event_probability(&diffs, |&(_, t)| t > r)?;
                fit.event_estimates.insert(
                    format!("frobenius>{r}"),
                    EventEstimate {
                        probability: pf,
                        se: sf,
                    },
                );
                fit.event_estimates.insert(
                    format!("tnorm>{r}"),
                    EventEstimate {
                        probability: pt,
                        se: st,
                    },
                );
            }
        }
        Ok(fit)
    }
}

fn check_prior(data: &IsingData, prior: &PriorSpec, config: &IsingFitConfig) -> Result<()> {
    check_dim(data.p(), prior.dim())?;
    config.chain.validate()?;
    if data.p() < 2 {
        return Err(Error::invalid("p", "need at least two nodes"));
    }
    Ok(())
}

/// One independent chain per column regression (column `j` on `Z⁽ʲ⁾`),
/// seeded with `derive_seed(seed, j)`, then assembled.
pub fn run_ising_columns(
    data: &IsingData,
    prior: &PriorSpec,
    config: &IsingFitConfig,
) -> Result<IsingFit> {
    check_prior(data, prior, config)?;
    let p = data.p();
    let columns = (0..p)
        .into_par_iter()
        .map(|j| {
            let design = column_design(data, j)?;
            let cfg = ChainConfig {
                seed: derive_seed(config.chain.seed, j),
                ..config.chain
            };
            run_chain(&design, prior, cfg, &SparseParam::zeros(p))
        })
        .collect::<Result<Vec<_>>>()?;
    IsingFit::assemble(columns, data, config)
}

/// A single chain on the whole `p × p` parameter that updates one uniformly
/// chosen column per step with one shared random stream. Runs `p` times the
/// configured iterations so each column gets the same expected work.
pub fn run_ising_merged(
    data: &IsingData,
    prior: &PriorSpec,
    config: &IsingFitConfig,
) -> Result<IsingFit> {
    check_prior(data, prior, config)?;
    let p = data.p();
    let cfg = config.chain;
    let designs = (0..p)
        .map(|j| column_design(data, j))
        .collect::<Result<Vec<_>>>()?;
    let zero = SparseParam::zeros(p);
    let mut chains = designs
        .iter()
        .map(|d| Chain::new(d, prior, cfg, &zero))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut draws: Vec<Vec<Draw>> = vec![Vec::new(); p];
    let (total, burnin, thin) = (cfg.iterations * p, cfg.burnin * p, cfg.thin * p);
    for it in 0..total {
        let j = rng.random_range(0..p);
        chains[j].step(&mut rng);
        if it >= burnin && (it - burnin) % thin == 0 {
            for (c, store) in chains.iter().zip(&mut draws) {
                store.push(Draw {
                    iteration: it,
                    theta: c.theta(),
                });
            }
        }
    }
    let columns = chains
        .iter()
        .zip(draws)
        .map(|(c, d)| PosteriorSummary::from_draws(p, d, c.stats(), c.rw_scale()))
        .collect();
    IsingFit::assemble(columns, data, config)
}
