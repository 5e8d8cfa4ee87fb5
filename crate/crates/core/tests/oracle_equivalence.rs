use qpost::logistic::{generate_design, generate_logistic_data, DesignKind};
use qpost::prior::PriorSpec;
use qpost::sampler::{exact_posterior_oracle, run_chain, ChainConfig, OracleEvent, OracleGrid};
use qpost::SparseParam;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn chain_matches_quadrature_oracle_at_d3() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let star = SparseParam::from_dense(&[-1.2, 0.0, 0.0]);
    let x = generate_design(DesignKind::Gaussian, 40, 3, &mut rng);
    let data = generate_logistic_data(&star, x, &mut rng).unwrap();
    let prior = PriorSpec::beta_binomial(3, 2.0, 1.5).unwrap();

    let far = |t: &[f64]| ((t[0] + 1.2).powi(2) + t[1] * t[1] + t[2] * t[2]).sqrt() > 0.8;
    let events: [OracleEvent; 1] = [("far", &far)];
    let oracle =
        exact_posterior_oracle(&data, &prior, OracleGrid::new(10.0, 161), &events).unwrap();
    let mut chain = run_chain(
        &data,
        &prior,
        ChainConfig::new(300_000, 3),
        &SparseParam::zeros(3),
    )
    .unwrap();

    let est = chain.record_event("far", |t| far(&t.to_dense())).unwrap();
    assert!((est.probability - oracle.event_estimates["far"].probability).abs() <= 0.03);
    for j in 0..3 {
        assert!((chain.inclusion_probs[j] - oracle.inclusion_probs[j]).abs() <= 0.03);
        assert!((chain.mean[j] - oracle.mean[j]).abs() <= 0.05);
    }
    let sizes = chain.support_size_probs();
    for (a, b) in sizes.iter().zip(oracle.support_size_probs()) {
        assert!((a - b).abs() <= 0.03);
    }
}
