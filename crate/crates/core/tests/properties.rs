use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use splk_core::data::Dataset;
use splk_core::gp_full::FullGpModel;
use splk_core::kernel::{kernel_eval, kernel_matrix};
use splk_core::partition::{face_count, make_cuts, infer_domain, pca_rotate, WidthMode};
use splk_core::spgp::{low_rank_cov, PseudoInputSet, SpgpModel};
use splk_core::splk::{fit_splk, SplkOptions};
use splk_core::{FitOptions, KernelParams};

fn points(d: usize, range: std::ops::Range<usize>) -> impl Strategy<Value = DMatrix<f64>> {
    range.prop_flat_map(move |n| {
        prop::collection::vec(0.0f64..10.0, n * d).prop_map(move |v| DMatrix::from_row_slice(n, d, &v))
    })
}

fn params(d: usize) -> impl Strategy<Value = KernelParams> {
    (0.2f64..3.0, prop::collection::vec(0.3f64..4.0, d), 0.01f64..0.5)
        .prop_map(|(s, l, n)| KernelParams::new(s, l, n).unwrap())
}

fn row(x: &DMatrix<f64>, i: usize) -> Vec<f64> {
    x.row(i).iter().copied().collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kernel_scales_with_signal_variance(x in points(2, 2..12), p in params(2), c in 0.1f64..10.0) {
        let scaled = KernelParams::new(c * p.signal_variance(), p.lengthscales(), p.noise_variance()).unwrap();
        let (a, b) = (kernel_matrix(&p, &x, &x).unwrap(), kernel_matrix(&scaled, &x, &x).unwrap());
        prop_assert!((a * c - b).amax() <= 1e-12 * c * p.signal_variance());
    }

    #[test]
    fn gram_with_small_jitter_factors(x in points(3, 2..40), p in params(3)) {
        let mut k = kernel_matrix(&p, &x, &x).unwrap();
        for i in 0..k.nrows() {
            k[(i, i)] += 1e-10 * p.signal_variance();
        }
        prop_assert!(k.cholesky().is_some());
    }

    #[test]
    fn full_gp_mean_is_linear_in_targets(x in points(1, 3..20), seed in 0u64..1000, q in 0.0f64..10.0) {
        let y = DVector::from_fn(x.nrows(), |i, _| ((i as u64 * 7919 + seed) % 97) as f64 / 97.0 - 0.5);
        let p = KernelParams::new(1.0, vec![1.5], 0.1).unwrap();
        let one = FullGpModel::with_params(&Dataset::new(x.clone(), y.clone()).unwrap(), &p, false).unwrap();
        let two = FullGpModel::with_params(&Dataset::new(x, y * 2.0).unwrap(), &p, false).unwrap();
        let (a, b) = (one.predict(&[q]).unwrap().mean, two.predict(&[q]).unwrap().mean);
        prop_assert!((2.0 * a - b).abs() <= 1e-10 * (1.0 + a.abs()));
    }

    #[test]
    fn extra_noiseless_point_never_adds_variance(x in points(1, 2..10), extra in 0.0f64..10.0, q in 0.0f64..10.0) {
        let p = KernelParams::with_jitter(1.0, vec![1.0], 0.0, 1e-6).unwrap();
        let y = DVector::zeros(x.nrows());
        let base = FullGpModel::with_params(&Dataset::new(x.clone(), y).unwrap(), &p, false).unwrap();
        let bigger_x = x.clone().insert_row(x.nrows(), extra);
        let bigger = FullGpModel::with_params(&Dataset::new(bigger_x, DVector::zeros(x.nrows() + 1)).unwrap(), &p, false).unwrap();
        let (v0, v1) = (base.predict(&[q]).unwrap().variance, bigger.predict(&[q]).unwrap().variance);
        prop_assert!(v1 <= v0 + 1e-6, "{} > {}", v1, v0);
    }

    #[test]
    fn sparse_variance_and_residual_bounds(x in points(2, 8..40), p in params(2), m in 1usize..8, q in points(2, 1..10)) {
        let m = m.min(x.nrows());
        let pseudo = PseudoInputSet::random_subset(&x, m, 3).unwrap();
        let kxx = kernel_matrix(&p, &x, &x).unwrap();
        let qxx = low_rank_cov(&p, &pseudo, &x, &x).unwrap();
        for i in 0..x.nrows() {
            prop_assert!(kxx[(i, i)] - qxx[(i, i)] >= -1e-10);
        }
        let y = DVector::from_fn(x.nrows(), |i, _| (i as f64).sin());
        let model = SpgpModel::with_params(&Dataset::new(x, y).unwrap(), &p, pseudo, false).unwrap();
        for i in 0..q.nrows() {
            let v = model.predict(&row(&q, i)).unwrap().variance;
            prop_assert!((0.0..=p.signal_variance() + p.noise_variance()).contains(&v));
        }
    }

    #[test]
    fn kernel_symmetric_and_bounded(a in prop::collection::vec(-5.0f64..5.0, 3), b in prop::collection::vec(-5.0f64..5.0, 3), p in params(3)) {
        let (kab, kba) = (kernel_eval(&p, &a, &b).unwrap(), kernel_eval(&p, &b, &a).unwrap());
        prop_assert_eq!(kab, kba);
        prop_assert!(kab >= 0.0 && kab <= p.signal_variance());
    }

    #[test]
    fn faces_of_codimension_one(d in 1usize..12) {
        prop_assert_eq!(face_count(d, d - 1).unwrap(), 2 * d as u64);
    }

    #[test]
    fn parallel_cuts_give_at_most_two_neighbours(x in points(2, 40..120), s in 1usize..6) {
        let domain = infer_domain(&x).unwrap();
        let spec = make_cuts(&domain, &x, 0, s, WidthMode::EqualCount).unwrap();
        for j in 0..spec.subdomains() {
            let nb = spec.neighbors(j);
            prop_assert!(nb.len() <= 2);
            prop_assert!(nb.iter().all(|&k| k + 1 == j || j + 1 == k));
        }
    }

    #[test]
    fn pca_preserves_distances(x in points(3, 3..30)) {
        let (z, _) = pca_rotate(&x).unwrap();
        for i in 0..x.nrows() {
            for j in 0..i {
                let dx = (x.row(i) - x.row(j)).norm();
                let dz = (z.row(i) - z.row(j)).norm();
                prop_assert!((dx - dz).abs() < 1e-10);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn continuity_at_every_control_point(x in points(2, 60..90), s in 2usize..4, lambda in 1usize..4, seed in 0u64..100) {
        let y: Vec<f64> = (0..x.nrows()).map(|i| (x[(i, 0)] * 0.7).sin() + 0.2 * x[(i, 1)] + ((i as u64 + seed) % 5) as f64 * 0.05).collect();
        let data = Dataset::new(x, DVector::from_vec(y)).unwrap();
        let opts = SplkOptions {
            subdomains: s,
            axis: Some(0),
            fold_density: lambda,
            fit: FitOptions::spgp().with_seed(seed).fixed(),
            ..Default::default()
        };
        let model = fit_splk(&data, Some(&KernelParams::new(1.0, vec![2.0, 2.0], 0.05).unwrap()), &opts).unwrap();
        for (b, bv) in model.boundaries.iter().enumerate() {
            let r = model.boundary_values(b).unwrap();
            for i in 0..bv.points.nrows() {
                let z = row(&bv.points, i);
                let lo = model.predict_from_frame(bv.lower, &z, true).unwrap().mean;
                let hi = model.predict_from_frame(bv.upper, &z, true).unwrap().mean;
                prop_assert!((lo - hi).abs() < 1e-6, "{} vs {}", lo, hi);
                prop_assert!((lo - r[i]).abs() < 1e-6);
            }
        }
    }
}
