use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::types::SparseParam;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Draw {
    pub iteration: usize,
    pub theta: SparseParam,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counter {
    pub proposed: u64,
    pub accepted: u64,
}

impl Counter {
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct MoveStats {
    pub birth: Counter,
    pub death: Counter,
    pub within: Counter,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EventEstimate {
    pub probability: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupportMass {
    pub active: Vec<usize>,
    pub probability: f64,
}

/// Posterior functionals, either Monte Carlo estimates from retained draws
/// (`exact == false`) or quadrature values (`exact == true`, no draws).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosteriorSummary {
    pub d: usize,
    pub exact: bool,
    pub retained: usize,
    pub inclusion_probs: Vec<f64>,
    /// Counts of `‖θ‖₀ = k` among retained draws; probabilities when exact.
    pub support_size_histogram: Vec<f64>,
    pub event_estimates: BTreeMap<String, EventEstimate>,
    pub mean: Vec<f64>,
    pub mean_abs: Vec<f64>,
    /// Most probable supports, at most 20.
    pub top_supports: Vec<SupportMass>,
    pub acceptance: MoveStats,
    pub final_rw_scale: f64,
    #[serde(skip)]
    pub draws: Vec<Draw>,
}

const TOP_SUPPORTS: usize = 20;

pub(crate) fn top_supports(mut masses: Vec<SupportMass>) -> Vec<SupportMass> {
    masses.sort_by(|a, b| {
        b.probability
            .partial_cmp(&a.probability)
            .unwrap()
            .then_with(|| a.active.cmp(&b.active))
    });
    masses.truncate(TOP_SUPPORTS);
    masses
}

impl PosteriorSummary {
    pub fn from_draws(
        d: usize,
        draws: Vec<Draw>,
        acceptance: MoveStats,
        final_rw_scale: f64,
    ) -> Self {
        let n = draws.len();
        let mut incl = vec![0.0; d];
        let mut mean = vec![0.0; d];
        let mut mean_abs = vec![0.0; d];
        let mut hist = vec![0.0; d + 1];
        let mut supports: HashMap<&[usize], usize> = HashMap::new();
        for draw in &draws {
            let t = &draw.theta;
            hist[t.pattern().len()] += 1.0;
            *supports.entry(t.active()).or_default() += 1;
            for (&j, &v) in t.active().iter().zip(t.values()) {
                incl[j] += 1.0;
                mean[j] += v;
                mean_abs[j] += v.abs();
            }
        }
        let scale = if n == 0 { 0.0 } else { 1.0 / n as f64 };
        for v in incl.iter_mut().chain(&mut mean).chain(&mut mean_abs) {
            *v *= scale;
        }
        let masses = supports
            .into_iter()
            .map(|(a, c)| SupportMass {
                active: a.to_vec(),
                probability: c as f64 * scale,
            })
            .collect();
        Self {
            d,
            exact: false,
            retained: n,
            inclusion_probs: incl,
            support_size_histogram: hist,
            event_estimates: BTreeMap::new(),
            mean,
            mean_abs,
            top_supports: top_supports(masses),
            acceptance,
            final_rw_scale,
            draws,
        }
    }

    /// Estimate `P(event)` from the retained draws and record it under `name`.
    pub fn record_event<F: Fn(&SparseParam) -> bool>(
        &mut self,
        name: &str,
        event: F,
    ) -> Result<EventEstimate> {
        let (probability, se) = event_probability(&self.draws, |d| event(&d.theta))?;
        let e = EventEstimate { probability, se };
        self.event_estimates.insert(name.to_string(), e);
        Ok(e)
    }

    /// `P(‖θ‖₀ = k)` for each `k`.
    pub fn support_size_probs(&self) -> Vec<f64> {
        let total: f64 = self.support_size_histogram.iter().sum();
        self.support_size_histogram
            .iter()
            .map(|c| c / total)
            .collect()
    }
}

/// Monte Carlo mean of an indicator with a batch-means standard error
/// (about `√N` batches), so autocorrelated chains are not overconfident.
pub fn event_probability<T, F: Fn(&T) -> bool>(draws: &[T], event: F) -> Result<(f64, f64)> {
    let n = draws.len();
    if n == 0 {
        return Err(Error::NoDraws);
    }
    let hits: Vec<f64> = draws
        .iter()
        .map(|d| if event(d) { 1.0 } else { 0.0 })
        .collect();
    let p = hits.iter().sum::<f64>() / n as f64;
    if p == 0.0 || p == 1.0 {
        return Ok((p, 0.0));
    }
    let batches = (n as f64).sqrt().floor() as usize;
    if batches < 2 {
        return Ok((p, (p * (1.0 - p) / n as f64).sqrt()));
    }
    let size = n / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| hits[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let m = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (batches - 1) as f64;
    let naive = (p * (1.0 - p) / n as f64).sqrt();
    Ok((p, (var / batches as f64).sqrt().max(naive)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn draws(vals: &[&[f64]]) -> Vec<Draw> {
        vals.iter()
            .enumerate()
            .map(|(i, v)| Draw {
                iteration: i,
                theta: SparseParam::from_dense(v),
            })
            .collect()
    }

    #[test]
    fn event_examples() {
        let ds = draws(&[&[1.0, 0.0], &[0.0, 0.0], &[2.0, -1.0]]);
        assert_eq!(event_probability(&ds, |_| true).unwrap(), (1.0, 0.0));
        assert_eq!(
            event_probability(&ds, |d| d.theta.pattern().len() >= 3).unwrap(),
            (0.0, 0.0)
        );
        let empty: Vec<Draw> = vec![];
        assert!(matches!(
            event_probability(&empty, |_| true),
            Err(Error::NoDraws)
        ));
    }

    #[test]
    fn summary_bookkeeping() {
        let ds = draws(&[&[1.0, 0.0], &[0.0, 0.0], &[2.0, -1.0], &[3.0, 0.0]]);
        let s = PosteriorSummary::from_draws(2, ds, MoveStats::default(), 1.0);
        assert_eq!(s.inclusion_probs, vec![0.75, 0.25]);
        assert_eq!(
            s.support_size_histogram.iter().sum::<f64>(),
            s.retained as f64
        );
        assert_eq!(s.support_size_histogram, vec![1.0, 2.0, 1.0]);
        assert_eq!(s.mean, vec![1.5, -0.25]);
        assert_eq!(s.mean_abs, vec![1.5, 0.25]);
        assert_eq!(s.top_supports[0].active, vec![0]);
        assert_eq!(s.top_supports[0].probability, 0.5);
    }

    #[test]
    fn batch_se_matches_binomial_for_independent_draws() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let v: Vec<bool> = (0..40_000).map(|_| rng.random::<f64>() < 0.3).collect();
        let (p, se) = event_probability(&v, |&b| b).unwrap();
        let naive = (p * (1.0 - p) / 40_000.0).sqrt();
        assert!(se >= naive && se < 1.5 * naive);
    }
}
