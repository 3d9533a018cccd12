mod common;

use common::grad::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tsc_lab::marl::Algorithm;
use tsc_lab::nn::{Adam, DenseNet};

#[test]
fn dense_gradients_match_finite_differences() {
    for spec in [grid_spec(), mixed_spec()] {
        for (name, sizes) in architectures(&spec, 64, 32, 64) {
            let mut total = FdStats::default();
            for seed in 0..10 {
                total.merge(check_dense(&sizes, seed, 30));
            }
            assert!(total.ok(), "{name} {sizes:?}: {total:?}");
        }
    }
}

#[test]
fn mixer_gradients_match_finite_differences() {
    let mut total = FdStats::default();
    for seed in 0..10 {
        total.merge(check_mixer(4, 80, 32, 64, seed, 40));
    }
    assert!(total.ok(), "{total:?}");
}

#[test]
fn td_loss_gradients_match_finite_differences() {
    for alg in [Algorithm::Iql, Algorithm::Vdn, Algorithm::Qmix] {
        for spec in [grid_spec(), mixed_spec()] {
            let mut total = FdStats::default();
            for seed in 0..4 {
                total.merge(check_td_loss(alg, &spec, seed, 25));
            }
            assert!(total.ok(), "{alg}: {total:?}");
        }
    }
}

#[test]
fn a2c_gradients_match_finite_differences() {
    for alg in [Algorithm::Ia2c, Algorithm::Maa2c] {
        for spec in [grid_spec(), mixed_spec()] {
            let mut total = FdStats::default();
            for seed in 0..4 {
                total.merge(check_a2c(alg, &spec, seed, 25));
            }
            assert!(total.ok(), "{alg}: {total:?}");
        }
    }
}

#[test]
fn adam_minimizes_a_quadratic() {
    let mut x = [0.0];
    let mut opt = Adam::new(1);
    for _ in 0..2000 {
        let g = [2.0 * (x[0] - 3.0)];
        opt.update(&mut x, &g, 0.05);
    }
    assert!((x[0] - 3.0).abs() < 0.01, "{}", x[0]);
}

#[test]
fn forward_is_deterministic() {
    let net = DenseNet::new(&[6, 16, 3], &mut ChaCha8Rng::seed_from_u64(1));
    let x = [0.1, 0.5, 0.9, 0.0, 1.0, 0.3];
    assert_eq!(net.forward(&x).unwrap(), net.forward(&x).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn params_round_trip_bit_exactly(seed in any::<u64>(), h in 1usize..20) {
        let net = DenseNet::new(&[5, h, 2], &mut ChaCha8Rng::seed_from_u64(seed));
        let back: DenseNet = serde_json::from_str(&serde_json::to_string(&net).unwrap()).unwrap();
        let same = net.params().iter().zip(back.params()).all(|(a, b)| a.to_bits() == b.to_bits());
        prop_assert!(same);
        prop_assert_eq!(back.sizes(), net.sizes());
    }
}
