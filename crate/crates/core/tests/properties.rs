//! Property-based invariants over random inputs.

use proptest::prelude::*;

use csifb::bases::{dct2d_basis, zigzag_order};
use csifb::compression::{draw_measurement_matrix, MeasurementEnsemble};
use csifb::harness::summarize;
use csifb::linalg::{CMatrix, CVector};
use csifb::precoding_metrics::{mmse_precoder, sum_rate, PowerNormalization, PrecoderConfig};
use csifb::quantization::{quantize, rvq_codebook};
use csifb::reconstruction::{modified_omp, modified_omp_error_terms};
use csifb::rng::{complex_gaussian, rng_from_seed};

fn gaussian_vector(n: usize, seed: u64) -> CVector {
    let mut rng = rng_from_seed(seed);
    CVector::from_fn(n, |_, _| complex_gaussian(&mut rng))
}

fn gaussian_matrix(r: usize, c: usize, seed: u64) -> CMatrix {
    let mut rng = rng_from_seed(seed);
    CMatrix::from_fn(r, c, |_, _| complex_gaussian(&mut rng))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn zigzag_is_a_permutation_starting_at_dc(n_r in 1usize..10, n_t in 1usize..10) {
        let mut order = zigzag_order(n_r, n_t);
        prop_assert_eq!(order[0], 0);
        prop_assert_eq!(*order.last().unwrap(), n_r * n_t - 1);
        order.sort_unstable();
        prop_assert_eq!(order, (0..n_r * n_t).collect::<Vec<_>>());
    }

    #[test]
    fn dct_basis_preserves_energy(n_r in 1usize..4, n_t in 1usize..9, seed in any::<u64>()) {
        let basis = dct2d_basis(n_r, n_t).unwrap();
        let h = gaussian_vector(n_r * n_t, seed);
        let s = basis.sparsify(&h).unwrap();
        prop_assert!((s.norm() - h.norm()).abs() <= 1e-10 * h.norm());
        prop_assert!((basis.densify(&s).unwrap() - &h).norm() <= 1e-10 * h.norm());
    }

    #[test]
    fn modified_omp_error_splits_into_leak_and_tail(seed in any::<u64>(), m in 4usize..12, k_p in 1usize..4) {
        let n = 16;
        let basis = dct2d_basis(1, n).unwrap();
        let h = gaussian_vector(n, seed);
        let phi = draw_measurement_matrix(m, n, seed ^ 1, MeasurementEnsemble::Real).unwrap();
        let y = phi.matrix() * &h;
        let err = (&h - modified_omp(&y, phi.matrix(), &basis, k_p).unwrap().h_hat).norm_squared();
        let (leak, tail) = modified_omp_error_terms(&h, phi.matrix(), &basis, k_p).unwrap();
        prop_assert!((err - leak - tail).abs() <= 1e-8 * err);
    }

    #[test]
    fn quantizer_picks_a_nearest_code_vector(seed in any::<u64>(), dim in 1usize..5, bits in 1u32..7) {
        let cb = rvq_codebook(dim, bits, seed, 1.0).unwrap();
        let v = gaussian_vector(dim, seed ^ 2);
        let chosen = (&v - cb.vector(quantize(&v, &cb).unwrap().index)).norm();
        for i in 0..cb.len() {
            prop_assert!(chosen <= (&v - cb.vector(i)).norm() + 1e-12);
        }
    }

    #[test]
    fn precoder_meets_power_constraint_and_rates_are_finite(
        seed in any::<u64>(),
        users in 1usize..5,
        snr_db in -10.0f64..40.0,
        per_column in any::<bool>(),
    ) {
        let h = gaussian_matrix(users, 8, seed);
        let h_hat = &h + gaussian_matrix(users, 8, seed ^ 3) * csifb::linalg::C64::new(0.1, 0.0);
        let mut cfg = PrecoderConfig::new(snr_db, users);
        if per_column {
            cfg.power_normalization = PowerNormalization::PerColumn;
        }
        let w = mmse_precoder(&h_hat, &cfg).unwrap().matrix;
        prop_assert!((w.norm_squared() - users as f64).abs() <= 1e-9 * users as f64);
        let rate = sum_rate(&h, &w, &cfg).unwrap();
        prop_assert!(rate.is_finite() && rate >= 0.0);
    }

    #[test]
    fn stderr_ignores_a_constant_shift(xs in prop::collection::vec(-1e3f64..1e3, 2..40), shift in -1e3f64..1e3) {
        let a = summarize(&xs);
        let shifted: Vec<f64> = xs.iter().map(|x| x + shift).collect();
        let b = summarize(&shifted);
        prop_assert!((b.mean - a.mean - shift).abs() <= 1e-9 * (1.0 + shift.abs() + a.mean.abs()));
        prop_assert!((b.stderr.unwrap() - a.stderr.unwrap()).abs() <= 1e-9 * (1.0 + a.stderr.unwrap()));
    }
}
