use ate_d::{
    build_dictionary, kmeans, read_dictionary, recalibrate, recalibration_weights, write_dictionary, AteError, Autoencoder,
    AutoencoderConfig, ConfounderDictionary,
};
use infomath::FeatureMatrix;
use ndarray::{array, Array2};
use netcore::seeded_rng;
use proptest::prelude::*;
use rand::Rng as _;

fn dict(rows: Array2<f64>) -> ConfounderDictionary {
    ConfounderDictionary::new(rows).unwrap()
}

#[test]
fn weight_examples() {
    let d = dict(array![[1.0, 0.0], [0.0, 1.0]]);
    let w = recalibration_weights(&array![[1.0, 0.0]], &d).unwrap();
    assert!((w[0] - 0.5).abs() < 1e-15);

    let orth = dict(array![[0.0, 0.0, 1.0], [0.0, 0.0, -2.0]]);
    assert_eq!(recalibration_weights(&array![[3.0, -1.0, 0.0]], &orth).unwrap(), vec![1.0]);

    let c = array![[0.2, 0.7, 0.1], [0.2, 0.7, 0.1]];
    let w = recalibration_weights(&array![[0.2, 0.7, 0.1]], &dict(c)).unwrap();
    assert!(w[0].abs() < 1e-15);

    assert!(recalibration_weights(&array![[1.0, 0.0, 0.0]], &d).is_err());
}

#[test]
fn recalibrate_scales_each_vector_by_its_weight() {
    let cfg = AutoencoderConfig::default();
    let ae = Autoencoder::new(8, &cfg, 3).unwrap();
    let mut rng = seeded_rng(1);
    let r = Array2::from_shape_fn((4, 8), |_| rng.random_range(-1.0..1.0));
    let d = dict(Array2::from_shape_fn((3, 2), |_| rng.random_range(0.0..1.0)));
    let out = recalibrate(&FeatureMatrix::new(r.clone()).unwrap(), &ae, &d).unwrap();
    let w = recalibration_weights(&ae.encode(&r).unwrap(), &d).unwrap();
    for i in 0..4 {
        for j in 0..8 {
            assert_eq!(out.data()[[i, j]], w[i] * r[[i, j]]);
        }
    }
}

#[test]
fn single_centroid_is_the_mean() {
    let mut rng = seeded_rng(5);
    let pts = Array2::from_shape_fn((200, 3), |_| rng.random_range(-2.0..2.0));
    let c = kmeans(&pts, 1, 0).unwrap();
    let mean = pts.mean_axis(ndarray::Axis(0)).unwrap();
    for j in 0..3 {
        assert!((c[[0, j]] - mean[j]).abs() < 1e-9);
    }
}

#[test]
fn two_blobs_are_recovered() {
    let mut rng = seeded_rng(6);
    let centers = [[-5.0, 2.0], [4.0, -3.0]];
    let pts = Array2::from_shape_fn((400, 2), |(i, j)| centers[i % 2][j] + rng.random_range(-0.5..0.5));
    let c = kmeans(&pts, 2, 9).unwrap();
    for truth in centers {
        let best = (0..2)
            .map(|r| ((c[[r, 0]] - truth[0]).powi(2) + (c[[r, 1]] - truth[1]).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min);
        assert!(best < 0.1, "centroid distance {best}");
    }
    assert_eq!(c, kmeans(&pts, 2, 9).unwrap());
}

#[test]
fn kmeans_rejects_impossible_sizes() {
    let pts = array![[1.0, 1.0], [1.0, 1.0], [2.0, 0.0]];
    assert!(matches!(kmeans(&pts, 3, 0), Err(AteError::InvalidInput(_))));
    assert!(matches!(kmeans(&pts, 0, 0), Err(AteError::InvalidInput(_))));
    assert_eq!(kmeans(&pts, 2, 0).unwrap().nrows(), 2);
}

#[test]
fn dictionary_centroids_lie_in_the_encoded_bounding_box() {
    let ae = Autoencoder::new(8, &AutoencoderConfig::default(), 1).unwrap();
    let mut rng = seeded_rng(2);
    let feats = FeatureMatrix::new(Array2::from_shape_fn((300, 8), |_| rng.random_range(-1.0..1.0))).unwrap();
    let d = build_dictionary(&ae, &feats, 10, 4).unwrap();
    assert_eq!((d.k(), d.latent_dim()), (10, 2));
    let z = ae.encode(feats.data()).unwrap();
    for j in 0..z.ncols() {
        let col = z.column(j);
        let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        assert!(d.centroids().column(j).iter().all(|&c| c >= lo && c <= hi));
    }
    assert_eq!(d, build_dictionary(&ae, &feats, 10, 4).unwrap());
}

#[test]
fn dictionary_file_round_trips_bit_exactly() {
    let mut rng = seeded_rng(3);
    let d = dict(Array2::from_shape_fn((10, 8), |_| rng.random_range(-1.0..1.0) / 3.0));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dict.txt");
    write_dictionary(&path, &d).unwrap();
    let back = read_dictionary(&path).unwrap();
    assert!(back.centroids().iter().zip(d.centroids()).all(|(a, b)| a.to_bits() == b.to_bits()));

    let text = std::fs::read_to_string(&path).unwrap();
    let cut = dir.path().join("cut.txt");
    std::fs::write(&cut, &text[..text.len() * 2 / 3]).unwrap();
    assert!(matches!(read_dictionary(&cut), Err(AteError::Corrupt { .. })));
    let newer = dir.path().join("newer.txt");
    std::fs::write(&newer, text.replacen("format_version 1", "format_version 9", 1)).unwrap();
    assert!(matches!(read_dictionary(&newer), Err(AteError::UnsupportedVersion { found: 9, expected: 1 })));
    assert!(matches!(read_dictionary(&dir.path().join("none.txt")), Err(AteError::Io { .. })));
}

fn mat(rows: usize, cols: usize, lo: f64) -> impl Strategy<Value = Array2<f64>> {
    proptest::collection::vec(lo..1.0f64, rows * cols).prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn weights_lie_in_zero_two(latent in mat(3, 4, -1.0), cents in mat(5, 4, -1.0)) {
        for w in recalibration_weights(&latent, &dict(cents)).unwrap() {
            prop_assert!((0.0..=2.0).contains(&w));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn nonnegative_similarities_give_weights_in_zero_one(latent in mat(3, 4, 0.0), cents in mat(5, 4, 0.0)) {
        for w in recalibration_weights(&latent, &dict(cents)).unwrap() {
            prop_assert!((0.0..=1.0).contains(&w));
        }
    }

    #[test]
    fn positive_centroid_scaling_leaves_weights_unchanged(
        latent in mat(4, 3, -1.0),
        cents in mat(4, 3, -1.0),
        scales in proptest::collection::vec(1e-3f64..1e3, 4),
    ) {
        let mut scaled = cents.clone();
        for (mut row, s) in scaled.rows_mut().into_iter().zip(&scales) {
            row *= *s;
        }
        let a = recalibration_weights(&latent, &dict(cents)).unwrap();
        let b = recalibration_weights(&latent, &dict(scaled)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }
}
