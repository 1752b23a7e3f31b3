use learnability::constructions::{build_parity_net, NetParams};
use learnability::experiments::perturb;
use learnability::math::{gaussian_matrix, Matrix, Rng};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matmul_is_associative(seed in any::<u64>(), a in 1usize..6, b in 1usize..6, c in 1usize..6, d in 1usize..6) {
        let mut rng = Rng::new(seed);
        let x = gaussian_matrix(&mut rng, a, b, 1.0);
        let y = gaussian_matrix(&mut rng, b, c, 1.0);
        let z = gaussian_matrix(&mut rng, c, d, 1.0);
        let left = x.matmul(&y).unwrap().matmul(&z).unwrap();
        let right = x.matmul(&y.matmul(&z).unwrap()).unwrap();
        prop_assert!(left.max_abs_diff(&right).unwrap() < 1e-10);
    }

    #[test]
    fn transpose_products_agree(seed in any::<u64>(), a in 1usize..6, b in 1usize..6, c in 1usize..6) {
        let mut rng = Rng::new(seed);
        let x = gaussian_matrix(&mut rng, b, a, 1.0);
        let y = gaussian_matrix(&mut rng, b, c, 1.0);
        let direct = x.t_matmul(&y).unwrap();
        let explicit = x.transpose().matmul(&y).unwrap();
        prop_assert!(direct.max_abs_diff(&explicit).unwrap() < 1e-12);
        let w = gaussian_matrix(&mut rng, c, a, 1.0);
        let direct = x.matmul_t(&w).unwrap();
        let explicit = x.matmul(&w.transpose()).unwrap();
        prop_assert!(direct.max_abs_diff(&explicit).unwrap() < 1e-12);
    }

    #[test]
    fn net_json_round_trips(seed in any::<u64>(), log_n in 1u32..5, scale in 0.0f64..3.0) {
        let net = build_parity_net(1 << log_n, 10.0).unwrap();
        let noisy = perturb(&net, scale, &mut Rng::new(seed));
        let back = NetParams::from_json(&noisy.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, noisy);
    }

    #[test]
    fn flat_round_trip(seed in any::<u64>()) {
        let mut net = build_parity_net(8, 10.0).unwrap();
        let flat: Vec<f64> = (0..net.num_params()).map(|i| (seed.wrapping_add(i as u64) % 97) as f64 - 48.0).collect();
        net.set_flat(&flat).unwrap();
        prop_assert_eq!(net.to_flat(), flat);
    }
}

#[test]
fn matrix_json_rejects_wrong_length() {
    let bad = r#"{"rows":2,"cols":2,"data":[1.0,2.0,3.0]}"#;
    assert!(serde_json::from_str::<Matrix>(bad).is_err());
}
