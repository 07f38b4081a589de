mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tikzbench::metrics::image::{
    fid, inception_score, kid, matrix_sqrt_psd, poly_kernel, psd_eigen, ssim_gray, FeatureModel, FeatureSet, KidParams,
    PSD_TOLERANCE,
};

fn set(rows: Vec<Vec<f64>>) -> FeatureSet {
    FeatureSet::new(FeatureModel::ClipImage, rows, None).unwrap()
}

fn rows_strategy(max_n: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-5.0f64..5.0, dim), 2..max_n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fid_self_zero_and_symmetric(a in rows_strategy(12, 4), b in rows_strategy(12, 4)) {
        let (a, b) = (set(a), set(b));
        prop_assert!(fid(&a, &a).unwrap().value <= 1e-6);
        let ab = fid(&a, &b).unwrap().value;
        let ba = fid(&b, &a).unwrap().value;
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-9 * ab.max(1.0), "{} vs {}", ab, ba);
    }

    #[test]
    fn fid_gram_route_is_symmetric(a in rows_strategy(6, 9), b in rows_strategy(6, 9)) {
        // fewer samples than dimensions
        let (a, b) = (set(a), set(b));
        let ab = fid(&a, &b).unwrap().value;
        prop_assert!((ab - fid(&b, &a).unwrap().value).abs() <= 1e-9 * ab.max(1.0));
        prop_assert!(fid(&a, &a).unwrap().value <= 1e-6);
    }

    #[test]
    fn psd_sqrt_reconstructs(seed in any::<u64>(), d in 1usize..12) {
        let m = common::random_spd(&mut ChaCha8Rng::seed_from_u64(seed), d);
        let s = matrix_sqrt_psd(&m).unwrap();
        prop_assert!((&s - s.transpose()).norm() <= 1e-9 * s.norm());
        let eig = psd_eigen(&s).unwrap();
        prop_assert!(eig.eigenvalues.iter().all(|&l| l >= -PSD_TOLERANCE * s.norm()));
        prop_assert!((&s * &s - &m).norm() / m.norm() < 1e-6);
    }

    #[test]
    fn inception_score_bounds_and_shift(
        n in 2usize..10,
        k in 2usize..6,
        seed in any::<u64>(),
        shift in -50.0f64..50.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = DMatrix::from_fn(n, k, |_, _| 3.0 * common::normal(&mut rng));
        let is = inception_score(&l, 1).unwrap().value;
        prop_assert!(is >= 1.0 && is <= k as f64 + 1e-9, "IS {} with k {}", is, k);
        let mut shifted = l.clone();
        for (i, mut row) in shifted.row_iter_mut().enumerate() {
            row.add_scalar_mut(shift * (i as f64 + 1.0));
        }
        prop_assert!((inception_score(&shifted, 1).unwrap().value - is).abs() < 1e-9);
    }

    #[test]
    fn ssim_in_range(a in prop::collection::vec(any::<u8>(), 256), b in prop::collection::vec(any::<u8>(), 256)) {
        let ia = image::GrayImage::from_raw(16, 16, a).unwrap();
        let ib = image::GrayImage::from_raw(16, 16, b).unwrap();
        let v = ssim_gray(&ia, &ib).unwrap().value;
        prop_assert!((-1.0..=1.0).contains(&v));
        prop_assert!((ssim_gray(&ia, &ia).unwrap().value - 1.0).abs() < 1e-12);
    }
}

#[test]
fn fid_with_equal_diagonal_covariances_is_mean_gap() {
    // ±sᵢeᵢ pairs have a diagonal sample covariance; shifting keeps it
    let scales = [0.5, 1.0, 2.0, 3.0];
    let mut rows = Vec::new();
    for (i, s) in scales.iter().enumerate() {
        for sign in [1.0, -1.0] {
            let mut r = vec![0.0; scales.len()];
            r[i] = sign * s;
            rows.push(r);
        }
    }
    let delta = [1.0, -2.0, 0.5, 0.25];
    let moved: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().zip(delta).map(|(a, d)| a + d).collect()).collect();
    let want: f64 = delta.iter().map(|d| d * d).sum();
    assert!((fid(&set(rows), &set(moved)).unwrap().value - want).abs() < 1e-4);
}

#[test]
fn kid_three_vectors_exhaustive() {
    let x = vec![vec![1.0, 0.0], vec![0.5, 2.0], vec![-1.0, 1.0]];
    let y = vec![vec![0.0, 1.0], vec![2.0, 2.0], vec![1.0, -1.0]];
    let k = |a: &[f64], b: &[f64]| (a[0] * b[0] / 2.0 + a[1] * b[1] / 2.0 + 1.0).powi(3);
    let mut want = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                want += k(&x[i], &x[j]) + k(&y[i], &y[j]) - k(&x[i], &y[j]) - k(&x[j], &y[i]);
            }
        }
    }
    want /= 6.0;
    let params = KidParams { subsets: 1, subset_size: 3, seed: 0 };
    let got = kid(&set(x), &set(y), &params).unwrap().value;
    assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    assert_eq!(poly_kernel(&[1.0, 1.0], &[1.0, 1.0]), 8.0);
}

#[test]
fn kid_rejects_tiny_sets() {
    let a = set(vec![vec![1.0]]);
    assert!(kid(&a, &a, &KidParams::default()).is_err());
}

#[test]
fn inception_score_fixtures() {
    let l = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
    assert_eq!(inception_score(&l, 1).unwrap().value, 1.0);

    // rows (a, 0) and (0, a): marginal is uniform, KL = p ln 2p + q ln 2q
    let a = 3.0f64;
    let l = DMatrix::from_row_slice(2, 2, &[a, 0.0, 0.0, a]);
    let p = 1.0 / (1.0 + (-a).exp());
    let q = 1.0 - p;
    let want = (p * (2.0 * p).ln() + q * (2.0 * q).ln()).exp();
    assert!((inception_score(&l, 1).unwrap().value - want).abs() < 1e-9);
}

#[test]
fn feature_sets_enforce_model_width() {
    assert!(FeatureSet::new(FeatureModel::InceptionPool3, vec![vec![0.0; 16]; 2], None).is_err());
    assert!(FeatureSet::new(FeatureModel::InceptionPool3, vec![vec![0.0; 2048]; 2], None).is_ok());
    assert!(FeatureSet::new(FeatureModel::ClipImage, vec![vec![f64::NAN; 3]; 2], None).is_err());
}
