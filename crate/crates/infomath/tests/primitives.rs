use infomath::{
    cosine_sim, entropy, kl_from_uniform, rate_distortion, rate_distortion_gram, rate_distortion_node, Distribution,
    FeatureMatrix, InfoError,
};
use nalgebra::DMatrix;
use ndarray::{array, Array2};
use netcore::{grad_check, seeded_rng, Tensors};
use proptest::prelude::*;
use rand::Rng;

fn random_features(n: usize, d: usize, seed: u64) -> FeatureMatrix {
    let mut rng = seeded_rng(seed);
    FeatureMatrix::new(Array2::from_shape_fn((n, d), |_| rng.random_range(-1.5..1.5))).unwrap()
}

/// ½·Σ log₂(1 + c·σᵢ) over the eigenvalues of Z Zᵀ.
fn eigen_oracle(z: &FeatureMatrix, eps: f64) -> f64 {
    let (n, d) = (z.n(), z.d());
    let m = DMatrix::from_row_slice(n, d, z.data().as_slice().unwrap());
    let gram = &m * m.transpose();
    let c = d as f64 / (n as f64 * eps * eps);
    let eig = nalgebra::SymmetricEigen::new(gram);
    0.5 * eig.eigenvalues.iter().map(|&s| (1.0 + c * s.max(0.0)).log2()).sum::<f64>()
}

#[test]
fn rate_of_zero_matrix_is_zero() {
    let z = FeatureMatrix::new(Array2::zeros((2, 3))).unwrap();
    assert_eq!(rate_distortion(&z, 1.0).unwrap(), 0.0);
}

#[test]
fn rate_of_single_eps_entry_is_half() {
    for eps in [0.1, 0.5, 1.0, 3.0] {
        let z = FeatureMatrix::new(array![[eps]]).unwrap();
        assert!((rate_distortion(&z, eps).unwrap() - 0.5).abs() < 1e-14);
    }
}

#[test]
fn rate_matches_eigen_oracle_on_seeded_4x3() {
    let z = random_features(4, 3, 42);
    let r = rate_distortion(&z, 0.5).unwrap();
    let o = eigen_oracle(&z, 0.5);
    assert!((r - o).abs() <= 1e-8 * o.abs());
}

#[test]
fn rate_matches_oracle_and_both_gram_forms_on_many_shapes() {
    for s in 0..100u64 {
        let n = 1 + (s % 8) as usize;
        let d = 1 + ((s / 8) % 8) as usize;
        let z = random_features(n, d, 1000 + s);
        let r = rate_distortion(&z, 0.5).unwrap();
        let o = eigen_oracle(&z, 0.5);
        let outer = rate_distortion_gram(&z, 0.5, true).unwrap();
        let inner = rate_distortion_gram(&z, 0.5, false).unwrap();
        assert!((r - o).abs() <= 1e-8 * o.abs().max(1e-300), "seed {s}: {r} vs {o}");
        assert!((outer - inner).abs() <= 1e-8 * outer.abs().max(1e-300), "seed {s}");
        assert!(r >= 0.0);
    }
}

#[test]
fn rate_is_row_permutation_and_rotation_invariant() {
    let z = random_features(5, 4, 3);
    let r = rate_distortion(&z, 0.7).unwrap();
    let mut perm = z.data().clone();
    for (dst, src) in [3usize, 0, 4, 1, 2].iter().enumerate() {
        perm.row_mut(dst).assign(&z.data().row(*src));
    }
    let rp = rate_distortion(&FeatureMatrix::new(perm).unwrap(), 0.7).unwrap();
    assert!((r - rp).abs() < 1e-12);

    // Orthogonal Q from a QR factorization of a random matrix.
    let a = random_features(4, 4, 9);
    let qr = DMatrix::from_row_slice(4, 4, a.data().as_slice().unwrap()).qr();
    let q = qr.q();
    let qn = Array2::from_shape_fn((4, 4), |(i, j)| q[(i, j)]);
    let rot = rate_distortion(&FeatureMatrix::new(z.data().dot(&qn)).unwrap(), 0.7).unwrap();
    assert!((r - rot).abs() < 1e-10);
}

#[test]
fn rate_is_monotone_in_scale() {
    let z = random_features(6, 3, 5);
    let mut prev = -1.0;
    for i in 0..20 {
        let c = i as f64 * 0.25;
        let r = rate_distortion(&FeatureMatrix::new(z.data() * c).unwrap(), 0.5).unwrap();
        assert!(r >= prev);
        prev = r;
    }
}

#[test]
fn rate_gradient_matches_finite_differences() {
    let z = random_features(4, 3, 77);
    let t = Tensors(vec![z.data().clone()]);
    let rep = grad_check(&t, 1e-5, |g, m| {
        let zi = g.leaf(m.0[0].clone());
        let r = rate_distortion_node(g, zi, 0.5).map_err(|e| netcore::NetError::InvalidInput(e.to_string()))?;
        Ok((r, vec![zi]))
    })
    .unwrap();
    assert!(rep.max_rel_error < 1e-4, "{rep:?}");
}

#[test]
fn rate_gradient_matches_closed_form() {
    // d R / d Z = (c / ln 2)·(I + c Z Zᵀ)⁻¹ Z
    let z = random_features(3, 5, 12);
    let eps = 0.5;
    let mut g = netcore::Graph::new();
    let zi = g.leaf(z.data().clone());
    let r = rate_distortion_node(&mut g, zi, eps).unwrap();
    let grad = g.backward(r).get(zi);
    let c = 5.0 / (3.0 * eps * eps);
    let m = DMatrix::from_row_slice(3, 5, z.data().as_slice().unwrap());
    let a = DMatrix::identity(3, 3) + (&m * m.transpose()) * c;
    let expect = a.try_inverse().unwrap() * &m * (c / std::f64::consts::LN_2);
    for i in 0..3 {
        for j in 0..5 {
            assert!((grad[[i, j]] - expect[(i, j)]).abs() < 1e-12);
        }
    }
}

#[test]
fn rate_rejects_bad_inputs() {
    let z = random_features(2, 2, 1);
    assert!(matches!(rate_distortion(&z, 0.0), Err(InfoError::InvalidInput(_))));
    assert!(FeatureMatrix::new(array![[f64::NAN]]).is_err());
    assert!(FeatureMatrix::new(Array2::zeros((0, 3))).is_err());
}

#[test]
fn rate_reports_numerical_failure() {
    let mut g = netcore::Graph::new();
    let z = g.constant(array![[1e200, 1e200]]);
    assert!(rate_distortion_node(&mut g, z, 1e-200).is_err());
}

#[test]
fn kl_examples() {
    assert_eq!(kl_from_uniform(&Distribution::uniform(4).unwrap()).unwrap(), 0.0);
    let one_hot = Distribution::new(vec![0.0, 1.0, 0.0, 0.0]).unwrap();
    assert!((kl_from_uniform(&one_hot).unwrap() - 4f64.ln()).abs() < 1e-15);
    let p = Distribution::new(vec![0.7, 0.3]).unwrap();
    let o = 0.7 * 1.4f64.ln() + 0.3 * 0.6f64.ln();
    assert!((kl_from_uniform(&p).unwrap() - o).abs() < 1e-15);
    assert!(kl_from_uniform(&Distribution::new(vec![1.0]).unwrap()).is_err());
}

#[test]
fn entropy_examples() {
    assert_eq!(entropy(&Distribution::new(vec![0.0, 1.0]).unwrap()).unwrap(), 0.0);
    assert!((entropy(&Distribution::uniform(6).unwrap()).unwrap() - 6f64.ln()).abs() < 1e-14);
    let p = Distribution::new(vec![0.5, 0.25, 0.25]).unwrap();
    let o = -(0.5 * 0.5f64.ln() + 2.0 * 0.25 * 0.25f64.ln());
    assert!((entropy(&p).unwrap() - o).abs() < 1e-15);
    assert!((o - 1.0397).abs() < 5e-5);
}

#[test]
fn distribution_validation() {
    assert!(Distribution::new(vec![0.5, 0.6]).is_err());
    assert!(Distribution::new(vec![-0.1, 1.1]).is_err());
    assert!(Distribution::new(vec![]).is_err());
    assert!(Distribution::new(vec![0.5, 0.5 + 5e-10]).is_ok());
}

#[test]
fn cosine_examples() {
    assert!((cosine_sim(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-15);
    assert_eq!(cosine_sim(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
    assert_eq!(cosine_sim(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 0.0);
    assert!(cosine_sim(&[1.0], &[1.0, 2.0]).is_err());
}

fn simplex(raw: Vec<f64>) -> Distribution {
    let s: f64 = raw.iter().sum();
    Distribution::new(raw.iter().map(|v| v / s).collect()).unwrap_or_else(|_| Distribution::uniform(raw.len()).unwrap())
}

proptest! {
    #[test]
    fn kl_plus_entropy_is_log_k(raw in proptest::collection::vec(0.0f64..1.0, 2..10)) {
        prop_assume!(raw.iter().sum::<f64>() > 1e-6);
        let p = simplex(raw);
        let k = p.k() as f64;
        prop_assert!((kl_from_uniform(&p).unwrap() + entropy(&p).unwrap() - k.ln()).abs() < 1e-9);
    }

    #[test]
    fn cosine_symmetric_and_scale_invariant(
        a in proptest::collection::vec(-5.0f64..5.0, 4),
        b in proptest::collection::vec(-5.0f64..5.0, 4),
        alpha in 0.01f64..100.0,
        beta in 0.01f64..100.0,
    ) {
        let s = cosine_sim(&a, &b).unwrap();
        prop_assert_eq!(s, cosine_sim(&b, &a).unwrap());
        let sa: Vec<f64> = a.iter().map(|v| v * alpha).collect();
        let sb: Vec<f64> = b.iter().map(|v| v * beta).collect();
        prop_assert!((cosine_sim(&sa, &sb).unwrap() - s).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&s));
    }
}
