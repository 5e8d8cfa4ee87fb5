//! Sparse logistic regression: likelihood, gradient, Bregman divergence,
//! curvature matrices and the contraction constants built from them.

mod restricted;

pub use restricted::{
    lambda_min, restricted_eig_cone, restricted_eig_cone_with, restricted_eig_sparse, ConeEigen,
    ConeSearch, Extreme, SPARSE_ENUMERATION_LIMIT,
};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{check_dim, SparseParam};

/// `(g(x), g′(x), g″(x))` for `g(x) = log(1 + eˣ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub g: f64,
    pub g1: f64,
    pub g2: f64,
}

/// `log(1 + eˣ)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `eˣ/(1 + eˣ)`
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `g″(x) = eˣ/(1 + eˣ)²`, evaluated on the decaying side.
#[inline]
pub fn logistic_variance(x: f64) -> f64 {
    let e = (-x.abs()).exp();
    e / ((1.0 + e) * (1.0 + e))
}

pub fn logistic_link(x: f64) -> Link {
    Link {
        g: softplus(x),
        g1: sigmoid(x),
        g2: logistic_variance(x),
    }
}

/// Design matrix, binary responses and optionally the generating parameter.
#[derive(Debug, Clone)]
pub struct LogisticData {
    x: DMatrix<f64>,
    y: Vec<f64>,
    theta_star: Option<SparseParam>,
}

impl LogisticData {
    pub fn new(x: DMatrix<f64>, y: Vec<f64>, theta_star: Option<SparseParam>) -> Result<Self> {
        check_dim(x.nrows(), y.len())?;
        if let Some(bad) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::invalid(
                "y",
                format!("responses must be 0 or 1, found {bad}"),
            ));
        }
        if let Some(t) = &theta_star {
            check_dim(x.ncols(), t.dim())?;
        }
        Ok(Self { x, y, theta_star })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn theta_star(&self) -> Option<&SparseParam> {
        self.theta_star.as_ref()
    }

    pub fn with_theta_star(mut self, theta_star: SparseParam) -> Result<Self> {
        check_dim(self.d(), theta_star.dim())?;
        self.theta_star = Some(theta_star);
        Ok(self)
    }

    /// Column `j` of the design as a contiguous slice.
    #[inline]
    pub fn column(&self, j: usize) -> &[f64] {
        let n = self.n();
        &self.x.as_slice()[j * n..(j + 1) * n]
    }

    /// `‖X‖∞ = max |Xᵢⱼ|`
    pub fn x_inf(&self) -> f64 {
        x_inf(&self.x)
    }

    /// Linear predictor `Xθ`.
    pub fn linear_predictor(&self, theta: &SparseParam) -> Vec<f64> {
        let mut eta = vec![0.0; self.n()];
        for (&j, &v) in theta.active().iter().zip(theta.values()) {
            for (e, x) in eta.iter_mut().zip(self.column(j)) {
                *e += x * v;
            }
        }
        eta
    }

    /// `Σᵢ yᵢηᵢ − g(ηᵢ)` for a given linear predictor.
    #[inline]
    pub fn log_likelihood_from_eta(&self, eta: &[f64]) -> f64 {
        eta.iter()
            .zip(&self.y)
            .map(|(&e, &y)| y * e - softplus(e))
            .sum()
    }

    pub fn log_quasi_likelihood(&self, theta: &SparseParam) -> Result<f64> {
        check_dim(self.d(), theta.dim())?;
        Ok(self.log_likelihood_from_eta(&self.linear_predictor(theta)))
    }

    /// `Σᵢ (yᵢ − g′(⟨xᵢ,θ⟩)) xᵢ`
    pub fn grad_log_quasi_likelihood(&self, theta: &SparseParam) -> Result<Vec<f64>> {
        check_dim(self.d(), theta.dim())?;
        let eta = self.linear_predictor(theta);
        let resid: Vec<f64> = eta
            .iter()
            .zip(&self.y)
            .map(|(&e, &y)| y - sigmoid(e))
            .collect();
        Ok((0..self.d())
            .map(|j| self.column(j).iter().zip(&resid).map(|(x, r)| x * r).sum())
            .collect())
    }

    /// `𝓛_{n,θ} = −Σᵢ [g(⟨xᵢ,θ⟩) − g(⟨xᵢ,θ⋆⟩) − g′(⟨xᵢ,θ⋆⟩)⟨xᵢ,θ−θ⋆⟩]`; data-free.
    pub fn bregman_divergence(&self, theta: &SparseParam, theta_star: &SparseParam) -> Result<f64> {
        check_dim(self.d(), theta.dim())?;
        check_dim(self.d(), theta_star.dim())?;
        let eta = self.linear_predictor(theta);
        let eta0 = self.linear_predictor(theta_star);
        Ok(-eta
            .iter()
            .zip(&eta0)
            .map(|(&e, &e0)| softplus(e) - softplus(e0) - sigmoid(e0) * (e - e0))
            .sum::<f64>())
    }

    /// Weights `Wᵢ = g″(⟨xᵢ,θ⋆⟩)`, the weighted Gram `X′WX/n` and the plain Gram `X′X/n`.
    pub fn curvature_summary(&self) -> Result<CurvatureSummary> {
        let theta_star = self.theta_star.as_ref().ok_or_else(|| {
            Error::invalid("theta_star", "curvature needs the generating parameter")
        })?;
        let w_diag: Vec<f64> = self
            .linear_predictor(theta_star)
            .into_iter()
            .map(logistic_variance)
            .collect();
        let n = self.n() as f64;
        let gram = self.x.tr_mul(&self.x) / n;
        let mut weighted = self.x.clone();
        for (i, w) in w_diag.iter().enumerate() {
            weighted.row_mut(i).scale_mut(*w);
        }
        let mut fisher = self.x.tr_mul(&weighted) / n;
        // exact symmetry
        fisher = (&fisher + fisher.transpose()) * 0.5;
        Ok(CurvatureSummary {
            x_inf: self.x_inf(),
            w_diag,
            fisher,
            gram,
        })
    }
}

pub fn x_inf(x: &DMatrix<f64>) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn log_quasi_likelihood(theta: &SparseParam, data: &LogisticData) -> Result<f64> {
    data.log_quasi_likelihood(theta)
}

pub fn grad_log_quasi_likelihood(theta: &SparseParam, data: &LogisticData) -> Result<Vec<f64>> {
    data.grad_log_quasi_likelihood(theta)
}

pub fn bregman_divergence(
    theta: &SparseParam,
    theta_star: &SparseParam,
    data: &LogisticData,
) -> Result<f64> {
    data.bregman_divergence(theta, theta_star)
}

pub fn curvature_summary(data: &LogisticData) -> Result<CurvatureSummary> {
    data.curvature_summary()
}

#[derive(Debug, Clone)]
pub struct CurvatureSummary {
    pub x_inf: f64,
    pub w_diag: Vec<f64>,
    /// `X′WX/n`
    pub fisher: DMatrix<f64>,
    /// `X′X/n`
    pub gram: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    /// i.i.d. ±1 entries, so `‖X‖∞ = 1`.
    #[default]
    Rademacher,
    /// i.i.d. standard normal entries.
    Gaussian,
}

pub fn generate_design<R: Rng + ?Sized>(
    kind: DesignKind,
    n: usize,
    d: usize,
    rng: &mut R,
) -> DMatrix<f64> {
    match kind {
        DesignKind::Rademacher => {
            DMatrix::from_fn(n, d, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 })
        }
        DesignKind::Gaussian => DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(rng)),
    }
}

/// Draws `yᵢ ~ Bernoulli(g′(⟨xᵢ,θ⋆⟩))` independently.
pub fn generate_logistic_data<R: Rng + ?Sized>(
    theta_star: &SparseParam,
    x: DMatrix<f64>,
    rng: &mut R,
) -> Result<LogisticData> {
    check_dim(x.ncols(), theta_star.dim())?;
    let n = x.nrows();
    let probe = LogisticData::new(x, vec![0.0; n], Some(theta_star.clone()))?;
    let y = probe
        .linear_predictor(theta_star)
        .into_iter()
        .map(|e| {
            if rng.random::<f64>() < sigmoid(e) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    LogisticData::new(probe.x, y, Some(theta_star.clone()))
}

/// ζ and `s̄ = ⌈s⋆ + ζ⌉` for the logistic model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Zeta {
    pub zeta: f64,
    pub s_bar: usize,
}

/// `ζ = s⋆ + 2/c₄ + (2/c₄)(1 + 64‖X‖∞²/κ̲₁ + κ̄(s⋆)/(64‖X‖∞²(log d)²) + log(4e)/log d)·s⋆`
pub fn zeta_logistic(
    s_star: usize,
    c4: f64,
    d: usize,
    x_inf: f64,
    kappa1_cone: f64,
    kappa_bar_sstar: f64,
) -> Result<Zeta> {
    if !(kappa1_cone > 0.0) {
        return Err(Error::DegenerateCurvature {
            name: "kappa1",
            value: kappa1_cone,
        });
    }
    if d < 2 {
        return Err(Error::invalid("d", "need d >= 2"));
    }
    if !(c4 > 0.0) {
        return Err(Error::invalid("c4", "must be positive"));
    }
    let s = s_star as f64;
    let ld = (d as f64).ln();
    let x2 = x_inf * x_inf;
    let bracket = if s_star == 0 {
        0.0
    } else {
        1.0 + 64.0 * x2 / kappa1_cone
            + kappa_bar_sstar / (64.0 * x2 * ld * ld)
            + (4.0 * std::f64::consts::E).ln() / ld
    };
    let zeta = s + 2.0 / c4 + 2.0 / c4 * bracket * s;
    Ok(Zeta {
        zeta,
        s_bar: (s + zeta).ceil() as usize,
    })
}

/// `M₀‖X‖∞/κ̲₁(s̄) · √(s̄ log d / n)`
pub fn contraction_radius_logistic(
    m0: f64,
    x_inf: f64,
    kappa_sbar: f64,
    s_bar: usize,
    d: usize,
    n: usize,
) -> Result<f64> {
    if !(kappa_sbar > 0.0) {
        return Err(Error::DegenerateCurvature {
            name: "kappa1(s_bar)",
            value: kappa_sbar,
        });
    }
    if d < 2 || n == 0 {
        return Err(Error::invalid("d, n", "need d >= 2 and n >= 1"));
    }
    Ok(m0 * x_inf / kappa_sbar * (s_bar as f64 * (d as f64).ln() / n as f64).sqrt())
}

/// Hölder transfer of an ℓ₂ radius to ℓ_q on `s̄`-sparse differences.
pub fn lq_radius(q: f64, l2_radius: f64, s_bar: usize) -> Result<f64> {
    if !(q > 0.0 && q <= 2.0) {
        return Err(Error::invalid("q", format!("must lie in (0, 2], got {q}")));
    }
    Ok(l2_radius * (s_bar as f64).powf(1.0 / q - 0.5))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny(x: f64, y: f64) -> LogisticData {
        LogisticData::new(DMatrix::from_element(1, 1, x), vec![y], None).unwrap()
    }

    #[test]
    fn link_values() {
        let l = logistic_link(0.0);
        assert!((l.g - 2f64.ln()).abs() < 1e-15);
        assert_eq!((l.g1, l.g2), (0.5, 0.25));
        // log(1+e^10) = 10 + log1p(e^-10)
        assert!((logistic_link(10.0).g - 10.000_045_398_899_218).abs() < 1e-12);
        for x in [700.0, -700.0, 40.0, -40.0] {
            let l = logistic_link(x);
            assert!(l.g.is_finite() && l.g1.is_finite() && l.g2.is_finite());
        }
        for k in -400..=400 {
            let x = k as f64 * 0.05;
            let v = logistic_variance(x);
            assert!(v <= 0.25);
            if k != 0 {
                assert!(v < 0.25);
            }
        }
    }

    #[test]
    fn likelihood_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = generate_design(DesignKind::Gaussian, 7, 3, &mut rng);
        let data = LogisticData::new(x, vec![1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0], None).unwrap();
        let v = data.log_quasi_likelihood(&SparseParam::zeros(3)).unwrap();
        assert!((v + 7.0 * 2f64.ln()).abs() < 1e-12);

        let one = tiny(1.0, 1.0);
        let v = one
            .log_quasi_likelihood(&SparseParam::from_dense(&[2.0]))
            .unwrap();
        assert!((v - (2.0 - (1.0 + 2f64.exp()).ln())).abs() < 1e-14);
        assert!((v + 0.126_928).abs() < 1e-6);

        let pos = LogisticData::new(DMatrix::from_element(4, 1, 0.5), vec![1.0; 4], None).unwrap();
        let a = pos
            .log_quasi_likelihood(&SparseParam::from_dense(&[0.3]))
            .unwrap();
        let b = pos
            .log_quasi_likelihood(&SparseParam::from_dense(&[0.6]))
            .unwrap();
        assert!(b > a);
    }

    #[test]
    fn gradient_examples() {
        let data = LogisticData::new(
            DMatrix::from_element(6, 1, 1.0),
            vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0],
            None,
        )
        .unwrap();
        let g = data
            .grad_log_quasi_likelihood(&SparseParam::zeros(1))
            .unwrap();
        assert_eq!(g, vec![0.0]);

        let sat = LogisticData::new(DMatrix::from_element(3, 1, 1.0), vec![1.0; 3], None).unwrap();
        let g = sat
            .grad_log_quasi_likelihood(&SparseParam::from_dense(&[60.0]))
            .unwrap();
        assert!(g[0].abs() < 1e-20);
    }

    #[test]
    fn bregman_examples() {
        let data = tiny(1.0, 0.0);
        let star = SparseParam::from_dense(&[0.0]);
        assert_eq!(data.bregman_divergence(&star, &star).unwrap(), 0.0);
        let v = data
            .bregman_divergence(&SparseParam::from_dense(&[1.0]), &star)
            .unwrap();
        let expected = -(softplus(1.0) - 2f64.ln() - 0.5);
        assert!((v - expected).abs() < 1e-15);
        assert!((v + 0.120_115).abs() < 1e-6);
        // independent of the response
        let v1 = tiny(1.0, 1.0)
            .bregman_divergence(&SparseParam::from_dense(&[1.0]), &star)
            .unwrap();
        assert_eq!(v, v1);
    }

    #[test]
    fn bregman_is_nonpositive() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = generate_design(DesignKind::Gaussian, 20, 5, &mut rng);
        let data = LogisticData::new(x, vec![0.0; 20], None).unwrap();
        for _ in 0..1000 {
            let a: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
            let b: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
            let v = data
                .bregman_divergence(&SparseParam::from_dense(&a), &SparseParam::from_dense(&b))
                .unwrap();
            assert!(v <= 1e-12);
        }
    }

    #[test]
    fn curvature_examples() {
        let data = LogisticData::new(
            DMatrix::from_element(5, 1, 1.0),
            vec![0.0; 5],
            Some(SparseParam::zeros(1)),
        )
        .unwrap();
        let c = data.curvature_summary().unwrap();
        assert!((c.fisher[(0, 0)] - 0.25).abs() < 1e-15);
        assert!(c.w_diag.iter().all(|&w| w == 0.25));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = generate_design(DesignKind::Gaussian, 30, 4, &mut rng);
        let star = SparseParam::from_dense(&[1.0, 0.0, -2.0, 0.0]);
        let data = LogisticData::new(x, vec![0.0; 30], Some(star)).unwrap();
        let c = data.curvature_summary().unwrap();
        assert!(c.w_diag.iter().all(|&w| w > 0.0 && w <= 0.25));
        assert_eq!(c.fisher, c.fisher.transpose());

        let zero = LogisticData::new(data.x().clone(), vec![0.0; 30], Some(SparseParam::zeros(4)))
            .unwrap()
            .curvature_summary()
            .unwrap();
        let expect = data.x().tr_mul(data.x()) / (4.0 * 30.0);
        assert!((zero.fisher - expect).abs().max() < 1e-14);

        assert!(LogisticData::new(data.x().clone(), vec![0.0; 30], None)
            .unwrap()
            .curvature_summary()
            .is_err());
    }

    #[test]
    fn zeta_examples() {
        let z = zeta_logistic(3, 1.0, 1000, 1.0, 0.5, 1.0).unwrap();
        assert!((z.zeta - 781.074_673_651_64).abs() < 1e-8);
        assert_eq!(z.s_bar, 785);
        let z0 = zeta_logistic(0, 2.0, 1000, 1.0, 0.5, 1.0).unwrap();
        assert_eq!(z0.zeta, 1.0);
        let mut prev = f64::INFINITY;
        for k in 1..50 {
            let z = zeta_logistic(3, 1.0, 1000, 1.0, k as f64 * 0.1, 1.0)
                .unwrap()
                .zeta;
            assert!(z < prev);
            prev = z;
        }
        assert!(matches!(
            zeta_logistic(3, 1.0, 1000, 1.0, 0.0, 1.0),
            Err(Error::DegenerateCurvature { .. })
        ));
    }

    #[test]
    fn radius_examples() {
        let r = contraction_radius_logistic(3.0, 1.0, 0.5, 10, 100, 10_000).unwrap();
        assert!((r - 6.0 * (10.0 * 100f64.ln() / 1e4).sqrt()).abs() < 1e-15);
        assert!((r - 0.407_168).abs() < 1e-6);
        let r4 = contraction_radius_logistic(3.0, 1.0, 0.5, 10, 100, 40_000).unwrap();
        assert!((r4 - r / 2.0).abs() < 1e-15);
        let r6 = contraction_radius_logistic(6.0, 1.0, 0.25, 10, 100, 10_000).unwrap();
        assert!((r6 - 4.0 * r).abs() < 1e-14);
    }

    #[test]
    fn lq_examples() {
        assert_eq!(lq_radius(2.0, 0.3, 4).unwrap(), 0.3);
        assert!((lq_radius(1.0, 0.3, 4).unwrap() - 0.6).abs() < 1e-15);
        assert!((lq_radius(0.5, 0.3, 4).unwrap() - 2.4).abs() < 1e-14);
        assert!(lq_radius(0.0, 0.3, 4).is_err());
        assert!(lq_radius(2.5, 0.3, 4).is_err());
    }

    #[test]
    fn data_generation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 10_000;
        let x = generate_design(DesignKind::Rademacher, n, 3, &mut rng);
        assert_eq!(x_inf(&x), 1.0);
        let data = generate_logistic_data(&SparseParam::zeros(3), x.clone(), &mut rng).unwrap();
        let mean = data.y().iter().sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 3.0 * (0.25 / n as f64).sqrt());

        let ones = DMatrix::from_element(200, 1, 1.0);
        let d = generate_logistic_data(&SparseParam::from_dense(&[20.0]), ones, &mut rng).unwrap();
        assert!(d.y().iter().all(|&v| v == 1.0));

        let a = generate_logistic_data(
            &SparseParam::from_dense(&[0.5, -1.0, 0.0]),
            x.clone(),
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        let b = generate_logistic_data(
            &SparseParam::from_dense(&[0.5, -1.0, 0.0]),
            x,
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        assert_eq!(a.y(), b.y());
    }

    #[test]
    fn rejects_bad_responses() {
        assert!(LogisticData::new(DMatrix::zeros(2, 1), vec![0.0, 2.0], None).is_err());
        assert!(LogisticData::new(DMatrix::zeros(2, 1), vec![0.0], None).is_err());
    }
}
