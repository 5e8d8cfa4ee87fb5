//! Trans-dimensional Metropolis–Hastings for spike-and-slab quasi-posteriors,
//! an exact quadrature oracle for small dimensions, and the column-wise
//! driver for Ising pseudo-posteriors.

mod columns;
mod oracle;
mod summary;

pub use columns::{
    derive_seed, run_ising_columns, run_ising_merged, symmetrize, EdgeSummary, IsingFit,
    IsingFitConfig, Symmetrization,
};
pub use oracle::{exact_posterior_oracle, EventFn, OracleEvent, OracleGrid, MAX_ACTIVE, MAX_DIM};
pub use summary::{
    event_probability, Draw, EventEstimate, MoveStats, PosteriorSummary, SupportMass,
};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logistic::LogisticData;
use crate::prior::PriorSpec;
use crate::types::{check_dim, SparseParam};

/// A log quasi-likelihood with an incrementally updatable cache, e.g. the
/// linear predictor of a regression.
pub trait QuasiLikelihood: Sync {
    type State: Clone + Send;

    fn dim(&self) -> usize;
    fn state(&self, theta: &[f64]) -> Self::State;
    fn log_q(&self, state: &Self::State) -> f64;
    /// Update the cache for `θⱼ ← θⱼ + delta`.
    fn shift(&self, state: &mut Self::State, j: usize, delta: f64);
}

impl QuasiLikelihood for LogisticData {
    type State = Vec<f64>;

    fn dim(&self) -> usize {
        self.d()
    }

    fn state(&self, theta: &[f64]) -> Vec<f64> {
        self.linear_predictor(&SparseParam::from_dense(theta))
    }

    fn log_q(&self, eta: &Vec<f64>) -> f64 {
        self.log_likelihood_from_eta(eta)
    }

    fn shift(&self, eta: &mut Vec<f64>, j: usize, delta: f64) {
        for (e, x) in eta.iter_mut().zip(self.column(j)) {
            *e += delta * x;
        }
    }
}

/// `log q ≡ 0`: the chain then targets the prior.
#[derive(Debug, Clone, Copy)]
pub struct FlatLikelihood {
    pub d: usize,
}

impl QuasiLikelihood for FlatLikelihood {
    type State = ();

    fn dim(&self) -> usize {
        self.d
    }

    fn state(&self, _: &[f64]) {}

    fn log_q(&self, _: &()) -> f64 {
        0.0
    }

    fn shift(&self, _: &mut (), _: usize, _: f64) {}
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub iterations: usize,
    #[serde(default)]
    pub burnin: usize,
    #[serde(default = "one")]
    pub thin: usize,
    #[serde(default = "half")]
    pub p_flip: f64,
    #[serde(default = "half")]
    pub rw_scale: f64,
    #[serde(default = "yes")]
    pub adapt: bool,
    pub seed: u64,
}

fn one() -> usize {
    1
}

fn half() -> f64 {
    0.5
}

fn yes() -> bool {
    true
}

impl ChainConfig {
    pub fn new(iterations: usize, seed: u64) -> Self {
        Self {
            iterations,
            burnin: iterations / 10,
            thin: 1,
            p_flip: 0.5,
            rw_scale: 0.5,
            adapt: true,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::invalid("iterations", "must be at least 1"));
        }
        if self.burnin >= self.iterations {
            return Err(Error::invalid("burnin", "must be smaller than iterations"));
        }
        if self.thin == 0 {
            return Err(Error::invalid("thin", "must be at least 1"));
        }
        if !(self.p_flip > 0.0 && self.p_flip < 1.0) {
            return Err(Error::invalid("p_flip", "must lie in (0, 1)"));
        }
        if !(self.rw_scale > 0.0 && self.rw_scale.is_finite()) {
            return Err(Error::invalid("rw_scale", "must be positive"));
        }
        Ok(())
    }
}

/// Log acceptance ratio of a birth (`k → k+1`) or death (`k → k−1`) move with
/// the slab as birth proposal: `log π_{δ'} − log π_δ + log q' − log q`.
pub fn flip_log_ratio(
    prior: &PriorSpec,
    k_from: usize,
    birth: bool,
    log_q_from: f64,
    log_q_to: f64,
) -> f64 {
    let k_to = if birth { k_from + 1 } else { k_from - 1 };
    prior.log_pattern_weight(k_to) - prior.log_pattern_weight(k_from) + log_q_to - log_q_from
}

const LOG_SCALE_RANGE: (f64, f64) = (-13.8, 6.9);

/// One Markov chain on `(δ, θ_δ)`. Flip moves toggle a uniformly chosen
/// coordinate (births draw from the slab); within-model moves perturb all
/// active coordinates with a spherical Gaussian step.
pub struct Chain<'a, M: QuasiLikelihood> {
    model: &'a M,
    prior: &'a PriorSpec,
    config: ChainConfig,
    theta: Vec<f64>,
    active: Vec<usize>,
    state: M::State,
    log_q: f64,
    log_scale: f64,
    within_steps: u64,
    stats: MoveStats,
    slab: Exp<f64>,
}

impl<'a, M: QuasiLikelihood> Chain<'a, M> {
    pub fn new(
        model: &'a M,
        prior: &'a PriorSpec,
        config: ChainConfig,
        init: &SparseParam,
    ) -> Result<Self> {
        config.validate()?;
        check_dim(model.dim(), prior.dim())?;
        check_dim(model.dim(), init.dim())?;
        if prior.is_impossible(init.pattern().len()) {
            return Err(Error::invalid("init", "support size has zero prior mass"));
        }
        let theta = init.to_dense();
        let state = model.state(&theta);
        let log_q = model.log_q(&state);
        if !log_q.is_finite() {
            return Err(Error::NonFiniteInit);
        }
        Ok(Self {
            model,
            prior,
            config,
            active: init.active().to_vec(),
            theta,
            state,
            log_q,
            log_scale: config.rw_scale.ln(),
            within_steps: 0,
            stats: MoveStats::default(),
            slab: Exp::new(prior.rho()).expect("rho validated positive"),
        })
    }

    pub fn theta(&self) -> SparseParam {
        SparseParam::from_dense(&self.theta)
    }

    pub fn log_q(&self) -> f64 {
        self.log_q
    }

    pub fn rw_scale(&self) -> f64 {
        self.log_scale.exp()
    }

    pub fn stats(&self) -> MoveStats {
        self.stats
    }

    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        if rng.random::<f64>() < self.config.p_flip {
            self.flip(rng);
        } else {
            self.within(rng);
        }
    }

    fn flip<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let j = rng.random_range(0..self.theta.len());
        let k = self.active.len();
        let birth = self.theta[j] == 0.0;
        let delta = if birth {
            let v = self.slab.sample(rng);
            if rng.random::<bool>() {
                v
            } else {
                -v
            }
        } else {
            -self.theta[j]
        };
        let mut proposal = self.state.clone();
        self.model.shift(&mut proposal, j, delta);
        let lq = self.model.log_q(&proposal);
        let ratio = flip_log_ratio(self.prior, k, birth, self.log_q, lq);
        let accept = rng.random::<f64>().ln() < ratio && delta != 0.0;
        let counter = if birth {
            &mut self.stats.birth
        } else {
            &mut self.stats.death
        };
        counter.proposed += 1;
        if accept {
            counter.accepted += 1;
            self.state = proposal;
            self.log_q = lq;
            if birth {
                self.theta[j] = delta;
                self.active.push(j);
            } else {
                self.theta[j] = 0.0;
                let pos = self
                    .active
                    .iter()
                    .position(|&a| a == j)
                    .expect("active index");
                self.active.swap_remove(pos);
            }
        }
    }

    fn within<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        if self.active.is_empty() {
            return;
        }
        let sigma = self.log_scale.exp();
        let mut proposal = self.state.clone();
        let mut moves = Vec::with_capacity(self.active.len());
        let mut dl1 = 0.0;
        for &j in &self.active {
            let z: f64 = StandardNormal.sample(rng);
            let old = self.theta[j];
            let new = old + sigma * z;
            dl1 += new.abs() - old.abs();
            self.model.shift(&mut proposal, j, new - old);
            moves.push((j, new));
        }
        let lq = self.model.log_q(&proposal);
        let ratio = lq - self.log_q - self.prior.rho() * dl1;
        let accept = rng.random::<f64>().ln() < ratio && moves.iter().all(|&(_, v)| v != 0.0);
        self.stats.within.proposed += 1;
        if accept {
            self.stats.within.accepted += 1;
            self.state = proposal;
            self.log_q = lq;
            for (j, v) in moves {
                self.theta[j] = v;
            }
        }
        if self.config.adapt {
            self.within_steps += 1;
            let a = if accept { 1.0 } else { 0.0 };
            self.log_scale = (self.log_scale + (a - 0.3) / (self.within_steps as f64).sqrt())
                .clamp(LOG_SCALE_RANGE.0, LOG_SCALE_RANGE.1);
        }
    }
}

/// Run a chain from `init`; draws after burn-in are kept every `thin` iterations.
pub fn run_chain<M: QuasiLikelihood>(
    model: &M,
    prior: &PriorSpec,
    config: ChainConfig,
    init: &SparseParam,
) -> Result<PosteriorSummary> {
    let mut chain = Chain::new(model, prior, config, init)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut draws = Vec::with_capacity((config.iterations - config.burnin) / config.thin + 1);
    for it in 0..config.iterations {
        chain.step(&mut rng);
        if it >= config.burnin && (it - config.burnin).is_multiple_of(config.thin) {
            draws.push(Draw {
                iteration: it,
                theta: chain.theta(),
            });
        }
    }
    Ok(PosteriorSummary::from_draws(
        model.dim(),
        draws,
        chain.stats(),
        chain.rw_scale(),
    ))
}
