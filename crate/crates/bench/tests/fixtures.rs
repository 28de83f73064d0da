use poisonlab::numerics::{Cholesky, Rng};
use poisonlab_bench::{fitted_surrogate, gp, mlp, round, spd};

#[test]
fn spd_fixture_factors_without_jitter() {
    let mut rng = Rng::new(1);
    let a = spd(30, &mut rng);
    let c = Cholesky::factor(&a, 30).unwrap();
    assert_eq!(c.jitter(), 0.0);
}

#[test]
fn fixtures_have_requested_shapes() {
    let mut rng = Rng::new(2);
    let g = gp(20, &mut rng);
    assert_eq!(g.len(), 20);
    let (mu, var) = g.posterior(&[0.5; 15]);
    assert!(mu.is_finite() && var > 0.0);
    let r = round(6, 4, &mut rng);
    assert_eq!(r.contexts.len(), 4);
    assert!(r.contexts.iter().all(|x| x.len() == 6));
    let net = mlp(6, &[8, 8], &mut rng);
    assert!(net.forward(&r.contexts[0]).unwrap().iter().all(|v| v.is_finite()));
}

#[test]
fn fitted_surrogate_gives_finite_statistics() {
    let mut rng = Rng::new(3);
    let (_, stats) = fitted_surrogate(4, 3, &mut rng);
    assert_eq!(stats.count(), 100);
    assert!(stats.mean().iter().chain(stats.inverse()).all(|v| v.is_finite()));
}
