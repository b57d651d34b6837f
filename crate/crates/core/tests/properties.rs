use fairgm::linalg::{frob_norm_sq, max_asymmetry, min_eigenvalue};
use fairgm::metrics::{pcee, percent_change, PceeVariant};
use fairgm::models::{binnet_loss, covgraph_grad, glasso_grad};
use fairgm::moo::project_simplex;
use fairgm::synth::{gen_block_covariances, EIGEN_FLOOR};
use fairgm::{
    fit_single, group_stats, solve_subproblem, validate_dataset, FitConfig, Mat, Model, ModelKind,
};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize, lo: f64, hi: f64) -> impl Strategy<Value = Mat> {
    proptest::collection::vec(lo..hi, rows * cols).prop_map(move |v| Mat::from_vec(rows, cols, v))
}

fn symmetric(p: usize, scale: f64) -> impl Strategy<Value = Mat> {
    matrix(p, p, -scale, scale).prop_map(|a| (&a + a.transpose()) * 0.5)
}

fn spd(p: usize) -> impl Strategy<Value = Mat> {
    matrix(p, p, -1.0, 1.0)
        .prop_map(move |a| &a * a.transpose() / p as f64 + Mat::identity(p, p) * 0.5)
}

/// Data with 3 features and labels drawn from 1..=4, every label used at least once.
fn labelled_data() -> impl Strategy<Value = (Mat, Vec<u8>)> {
    (8usize..30).prop_flat_map(|n| {
        (
            matrix(n, 3, -2.0, 2.0),
            proptest::collection::vec(1u8..=4, n),
        )
            .prop_map(|(x, mut l)| {
                for (i, g) in (1..=4u8).enumerate() {
                    l[i] = g;
                }
                (x, l)
            })
    })
}

fn labels(l: &[u8]) -> Vec<String> {
    l.iter().map(|g| g.to_string()).collect()
}

fn permute(m: &Mat, perm: &[usize]) -> Mat {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(perm[i], perm[j])])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pooled_moments_are_size_weighted((x, l) in labelled_data()) {
        let stats = group_stats(&validate_dataset(x.clone(), &labels(&l), false).unwrap());
        let n = x.nrows() as f64;
        let mut combo = Mat::zeros(3, 3);
        for g in &stats.groups {
            combo += &g.cov * (g.n as f64 / n);
        }
        prop_assert!((combo - &stats.pooled.cov).amax() <= 1e-10 * stats.pooled.cov.amax().max(1.0));
        let s = &stats.pooled.cov;
        prop_assert!(max_asymmetry(s) == 0.0);
        prop_assert!(min_eigenvalue(s) >= -1e-10 * s.trace());
    }

    #[test]
    fn relabeling_permutes_group_statistics((x, l) in labelled_data(), shift in 1u8..4) {
        let base = group_stats(&validate_dataset(x.clone(), &labels(&l), false).unwrap());
        // cyclic relabeling g -> (g + shift - 1) % 4 + 1
        let moved: Vec<u8> = l.iter().map(|g| (g + shift - 1) % 4 + 1).collect();
        let other = group_stats(&validate_dataset(x, &labels(&moved), false).unwrap());
        for k in 0..4 {
            let j = (k + shift as usize) % 4;
            prop_assert_eq!(base.groups[k].n, other.groups[j].n);
            prop_assert!((&base.groups[k].cov - &other.groups[j].cov).amax() == 0.0);
        }
        prop_assert!((&base.pooled.cov - &other.pooled.cov).amax() <= 1e-12);
    }

    #[test]
    fn ising_data_must_be_binary(x in matrix(6, 3, 0.0, 1.0)) {
        let l = vec!["a", "a", "a", "b", "b", "b"];
        let rounded = x.map(|v| v.round());
        prop_assert!(validate_dataset(rounded, &l, true).is_ok());
        if x.iter().any(|v| *v != 0.0 && *v != 1.0) {
            prop_assert!(validate_dataset(x, &l, true).is_err());
        }
    }

    #[test]
    fn gaussian_gradients_are_symmetric(theta in spd(5), a in matrix(12, 5, -1.0, 1.0)) {
        let s = a.transpose() * &a / 12.0;
        prop_assert!(max_asymmetry(&glasso_grad(&theta, &s).unwrap()) <= 1e-12);
        prop_assert!(max_asymmetry(&covgraph_grad(&theta, &s, 0.01).unwrap()) <= 1e-12);
    }

    #[test]
    fn binnet_loss_at_zero_is_n_p_log_two(x in matrix(9, 4, 0.0, 1.0)) {
        let x = x.map(|v| v.round());
        let expected = 9.0 * 4.0 * std::f64::consts::LN_2;
        let got = binnet_loss(&Mat::zeros(4, 4), &x).unwrap();
        prop_assert!((got - expected).abs() <= 1e-12 * expected);
    }

    #[test]
    fn pcee_is_permutation_invariant(
        hat in symmetric(6, 1.0),
        truth in symmetric(6, 1.0),
        perm in Just((0..6).collect::<Vec<usize>>()).prop_shuffle(),
        lambda in 0.05f64..0.8,
    ) {
        for variant in [PceeVariant::Absolute, PceeVariant::Literal] {
            let a = pcee(&hat, &truth, lambda, variant).unwrap();
            let b = pcee(&permute(&hat, &perm), &permute(&truth, &perm), lambda, variant).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn percentages_are_antisymmetric(a in 0.1f64..100.0, b in 0.1f64..100.0, flip in any::<bool>()) {
        let (a, b) = if flip { (-a, b) } else { (a, b) };
        let ab = percent_change(a, b).unwrap();
        let ba = percent_change(b, a).unwrap();
        prop_assert!((ab + ba * (b / a)).abs() <= 1e-9 * ab.abs().max(1.0));
    }

    #[test]
    fn simplex_projection_is_nearest(y in proptest::collection::vec(-3.0f64..3.0, 1..7), w in proptest::collection::vec(0.0f64..1.0, 7)) {
        let x = project_simplex(&y);
        prop_assert!((x.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(x.iter().all(|v| *v >= 0.0));
        // any other simplex point is at least as far from y
        let total: f64 = w[..y.len()].iter().sum::<f64>().max(1e-12);
        let z: Vec<f64> = w[..y.len()].iter().map(|v| v / total).collect();
        let dist = |p: &[f64]| p.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        prop_assert!(dist(&x) <= dist(&z) + 1e-12);
    }

    #[test]
    fn subproblem_step_bounds_the_model_decrease(
        theta in symmetric(3, 1.0),
        grads in proptest::collection::vec(symmetric(3, 1.0), 2..5),
        ell in 0.5f64..10.0,
        lambda in 0.0f64..0.5,
    ) {
        let sol = solve_subproblem(&theta, &grads, ell, lambda, None, 500, 1e-12).unwrap();
        let d = &sol.phi_next - &theta;
        prop_assert!((sol.rho.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(sol.gap() <= 1e-8 * sol.varphi.abs().max(1.0));
        // strong convexity of the subproblem: its value is at most -ell/2 ||d||^2
        prop_assert!(sol.varphi <= -0.5 * ell * frob_norm_sq(&d) + 1e-9);
        prop_assert!(max_asymmetry(&sol.phi_next) == 0.0);
    }

    #[test]
    fn ista_never_increases_the_objective(a in matrix(30, 4, -2.0, 2.0), lambda in 0.0f64..0.3) {
        let labels = vec!["1"; 30];
        let stats = group_stats(&validate_dataset(a, &labels, false).unwrap());
        let model = Model::new(ModelKind::GLasso, 0.01);
        let est = fit_single(&model, &stats.pooled, &FitConfig::default().with_lambda(lambda).with_max_iter(300)).unwrap();
        for w in est.trace.windows(2) {
            prop_assert!(w[1].objectives[0] <= w[0].objectives[0] + 1e-10 * w[0].objectives[0].abs().max(1.0));
        }
        prop_assert!(est.is_pd);
        prop_assert!(max_asymmetry(&est.matrix) == 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn block_covariances_respect_the_eigen_floor(seed in any::<u64>()) {
        let truth = gen_block_covariances(20, 4, 3, 1, seed).unwrap();
        for s in &truth.matrices {
            prop_assert!(max_asymmetry(s) <= 1e-12);
            prop_assert!(min_eigenvalue(s) >= EIGEN_FLOOR * (1.0 - 1e-9));
        }
        let again = gen_block_covariances(20, 4, 3, 1, seed).unwrap();
        prop_assert_eq!(truth.matrices, again.matrices);
    }
}
