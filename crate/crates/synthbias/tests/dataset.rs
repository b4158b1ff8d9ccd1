use ndarray::Array2;
use netcore::{fit, seeded_rng, Activation, Mlp, TrainConfig};
use proptest::prelude::*;
use synthbias::{
    make_counterfactual, make_dataset, mask_to_spurious, prototypes, read_split, write_split, BiasSpec, Block,
    DatasetBundle, OodMode, Sample, SplitName, SynthError,
};

fn small_spec(seed: u64) -> BiasSpec {
    BiasSpec { n_train: 2000, n_test: 2000, seed, ..BiasSpec::default() }
}

fn all_splits(b: &DatasetBundle) -> impl Iterator<Item = &Sample> {
    b.train.iter().chain(&b.id_test).chain(&b.ood_test).chain(&b.cf_test)
}

#[test]
fn fixed_seed_regenerates_bitwise_identical_bundle() {
    let a = make_dataset(&small_spec(3)).unwrap();
    let b = make_dataset(&small_spec(3)).unwrap();
    let bits = |d: &DatasetBundle| -> Vec<u64> {
        all_splits(d).flat_map(|s| s.q.iter().chain(&s.v)).map(|x| x.to_bits()).collect()
    };
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(a, b);
    assert_ne!(a.train, make_dataset(&small_spec(4)).unwrap().train);
}

#[test]
fn labels_are_the_cross_modal_sum_of_core_attributes() {
    let b = make_dataset(&small_spec(1)).unwrap();
    let k = b.spec.num_classes;
    for s in all_splits(&b) {
        assert_eq!(s.label, (s.core_q + s.core_v) % k);
        assert_eq!(s.q.len(), b.spec.q_dim());
        assert_eq!(s.v.len(), b.spec.v_dim());
        assert!(s.group_id < b.spec.num_groups());
    }
}

/// Nearest prototype row to `x` by dot product.
fn decode(protos: &ndarray::Array2<f64>, x: &[f64]) -> usize {
    (0..protos.nrows())
        .map(|c| (c, protos.row(c).iter().zip(x).map(|(p, v)| p * v).sum::<f64>()))
        .fold((0, f64::NEG_INFINITY), |best, (c, d)| if d > best.1 { (c, d) } else { best })
        .0
}

#[test]
fn spurious_blocks_encode_their_recorded_class() {
    let spec = small_spec(5);
    let b = make_dataset(&spec).unwrap();
    let p = prototypes(&spec);
    let bd = spec.block_dim;
    let n = b.train.len() as f64;
    let mut hits = [0usize; 3];
    for s in &b.train {
        let qs = s.block(Block::QSpur, bd);
        let cross: Vec<f64> = qs.iter().zip(s.block(Block::CrossV, bd)).map(|(a, c)| a + c).collect();
        hits[0] += (decode(&p.q_spur, qs) == s.spur[0]) as usize;
        hits[1] += (decode(&p.v_spur, s.block(Block::VSpur, bd)) == s.spur[1]) as usize;
        hits[2] += (decode(&p.cross, &cross) == s.spur[2]) as usize;
    }
    // The cross-modal half sums two noise draws, so its nearest-prototype
    // decoding is noisier than the single-block channels.
    for (h, floor) in hits.into_iter().zip([0.9, 0.9, 0.7]) {
        assert!(h as f64 / n > floor, "decode rate {}", h as f64 / n);
    }
}

#[test]
fn ood_channel_agreement_is_one_over_k() {
    let b = make_dataset(&BiasSpec { n_test: 4000, ..small_spec(11) }).unwrap();
    let k = b.spec.num_classes as f64;
    let n = b.ood_test.len() as f64;
    let p = 1.0 / k;
    let tol = 3.0 * (p * (1.0 - p) / n).sqrt();
    for c in 0..3 {
        let agree = b.ood_test.iter().filter(|s| s.spur[c] == s.label).count() as f64 / n;
        assert!((agree - p).abs() <= tol, "channel {c}: {agree} vs {p} ± {tol}");
    }
    let prefix_bias = b.ood_test.iter().filter(|s| s.group_id % b.spec.num_bias_classes == s.label).count() as f64 / n;
    assert!((prefix_bias - p).abs() <= tol, "prefix agreement {prefix_bias}");
}

#[test]
fn train_channel_agreement_matches_rho() {
    let spec = BiasSpec { rho_q: 0.9, rho_v: 0.7, rho_cross: 0.5, n_train: 8000, ..small_spec(2) };
    let b = make_dataset(&spec).unwrap();
    let n = b.train.len() as f64;
    for (c, rho) in [spec.rho_q, spec.rho_v, spec.rho_cross].into_iter().enumerate() {
        let agree = b.train.iter().filter(|s| s.spur[c] == s.label).count() as f64 / n;
        let tol = 3.0 * (rho * (1.0 - rho) / n).sqrt();
        assert!((agree - rho).abs() <= tol, "channel {c}: {agree} vs {rho}");
    }
    let prefix = b.train.iter().filter(|s| s.group_id % spec.num_bias_classes == s.label).count() as f64 / n;
    assert!((prefix - spec.rho_q).abs() <= 3.0 * (0.09 / n).sqrt());
}

#[test]
fn anti_mode_never_agrees_with_the_label() {
    let b = make_dataset(&BiasSpec { ood_mode: OodMode::Anti, ..small_spec(8) }).unwrap();
    assert!(b.ood_test.iter().all(|s| s.spur.iter().all(|&c| c != s.label)));
}

#[test]
fn counterfactual_changes_only_the_irrelevant_block() {
    let spec = BiasSpec { n_test: 1000, ..small_spec(6) };
    let b = make_dataset(&spec).unwrap();
    let bd = spec.block_dim;
    assert_eq!(b.cf_test.len(), b.id_test.len());
    let mut total = 0.0;
    for (id, cf) in b.id_test.iter().zip(&b.cf_test) {
        assert_eq!(id.label, cf.label);
        assert_eq!(id.group_id, cf.group_id);
        assert!(id.q.iter().zip(&cf.q).all(|(a, c)| a.to_bits() == c.to_bits()));
        for blk in [Block::VCore, Block::VSpur, Block::CrossV] {
            assert_eq!(id.block(blk, bd), cf.block(blk, bd));
        }
        assert_ne!(id.block(Block::Irrelevant, bd), cf.block(Block::Irrelevant, bd));
        total += cf.block(Block::Irrelevant, bd).iter().sum::<f64>() / bd as f64;
    }
    let n = b.cf_test.len() as f64;
    let mean = total / n;
    assert!((mean - spec.mu_shift).abs() <= 3.0 * spec.noise_sigma / n.sqrt(), "mean {mean}");
}

#[test]
fn id_irrelevant_block_is_centered_noise() {
    let spec = BiasSpec { n_test: 1000, ..small_spec(9) };
    let b = make_dataset(&spec).unwrap();
    let vals: Vec<f64> = b.id_test.iter().flat_map(|s| s.block(Block::Irrelevant, spec.block_dim).to_vec()).collect();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let sd = (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    assert!(mean.abs() < 3.0 * spec.noise_sigma / n.sqrt());
    assert!((sd - spec.noise_sigma).abs() < 0.01);
}

#[test]
fn mask_keeps_only_the_prefix() {
    let b = make_dataset(&small_spec(2)).unwrap();
    let bd = b.spec.block_dim;
    for s in b.id_test.iter().take(50) {
        let m = mask_to_spurious(s, bd);
        assert_eq!(m.block(Block::Prefix, bd), s.block(Block::Prefix, bd));
        assert!(m.q[bd..].iter().all(|&x| x == 0.0));
        assert_eq!(m.v, s.v);
        assert_eq!(m.label, s.label);
        assert_eq!(mask_to_spurious(&m, bd), m);
    }
}

#[test]
fn invalid_specs_name_the_field() {
    let field = |spec: BiasSpec| match make_dataset(&spec) {
        Err(SynthError::InvalidSpec { field, .. }) => field,
        other => panic!("expected invalid spec, got {other:?}"),
    };
    assert_eq!(field(BiasSpec { rho_q: 1.5, ..BiasSpec::default() }), "rho_q");
    assert_eq!(field(BiasSpec { rho_v: 0.05, ..BiasSpec::default() }), "rho_v");
    assert_eq!(field(BiasSpec { num_classes: 1, ..BiasSpec::default() }), "num_classes");
    assert_eq!(field(BiasSpec { block_dim: 7, ..BiasSpec::default() }), "block_dim");
    assert_eq!(field(BiasSpec { noise_sigma: 0.0, ..BiasSpec::default() }), "noise_sigma");
    assert_eq!(field(BiasSpec { mu_shift: 0.0, ..BiasSpec::default() }), "mu_shift");
    assert_eq!(field(BiasSpec { n_train: 3, ..BiasSpec::default() }), "n_train");
    assert!(BiasSpec::default().unbiased().validate().is_ok());
}

#[test]
fn split_files_round_trip_bit_exactly() {
    let spec = BiasSpec { n_train: 64, n_test: 32, ..small_spec(13) };
    let b = make_dataset(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for name in SplitName::ALL {
        let path = dir.path().join(format!("{}.txt", name.as_str()));
        write_split(&path, name, &spec, b.split(name)).unwrap();
        let (n2, s2, samples) = read_split(&path).unwrap();
        assert_eq!(n2, name);
        assert_eq!(s2, spec);
        assert_eq!(samples.len(), b.split(name).len());
        for (a, c) in samples.iter().zip(b.split(name)) {
            assert!(a.q.iter().chain(&a.v).zip(c.q.iter().chain(&c.v)).all(|(x, y)| x.to_bits() == y.to_bits()));
            assert_eq!(a, c);
        }
        let again = dir.path().join("again.txt");
        write_split(&again, n2, &s2, &samples).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
    }
}

#[test]
fn damaged_split_files_are_reported() {
    let spec = BiasSpec { n_train: 16, n_test: 16, ..small_spec(1) };
    let b = make_dataset(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("train.txt");
    write_split(&path, SplitName::Train, &spec, &b.train).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();

    let truncated = dir.path().join("truncated.txt");
    std::fs::write(&truncated, &text[..text.len() / 2]).unwrap();
    assert!(matches!(read_split(&truncated), Err(SynthError::Corrupt { .. })));

    let future = dir.path().join("future.txt");
    std::fs::write(&future, text.replacen("format_version 1", "format_version 2", 1)).unwrap();
    assert!(matches!(read_split(&future), Err(SynthError::UnsupportedVersion { found: 2, expected: 1 })));

    let garbled = dir.path().join("garbled.txt");
    let head = text.trim_end().rsplit_once(' ').unwrap().0;
    std::fs::write(&garbled, format!("{head} not-a-float\n")).unwrap();
    assert!(matches!(read_split(&garbled), Err(SynthError::Corrupt { .. })));

    assert!(matches!(read_split(&dir.path().join("missing.txt")), Err(SynthError::Io { .. })));
}

/// Trains a 2-layer tanh probe on `x → y` and returns (train accuracy, eval accuracy).
fn probe(x: &Array2<f64>, y: &[usize], ex: &Array2<f64>, ey: &[usize], k: usize) -> (f64, f64) {
    let mut rng = seeded_rng(77);
    let mut mlp = Mlp::new(&[x.ncols(), 32, k], &[Activation::Tanh, Activation::Identity], &mut rng).unwrap();
    let cfg = TrainConfig { learning_rate: 1e-2, epochs: 20, batch_size: 64, seed: 5, ..TrainConfig::default() };
    fit(&mut mlp, x.nrows(), &cfg, |g, m, idx| {
        let b = m.bind(g);
        let xb = g.constant(x.select(ndarray::Axis(0), idx));
        let logits = b.forward(g, xb)?;
        let yb: Vec<usize> = idx.iter().map(|&i| y[i]).collect();
        Ok((g.softmax_cross_entropy(logits, &yb)?, b.param_nodes()))
    })
    .unwrap();
    let acc = |x: &Array2<f64>, y: &[usize]| {
        let out = mlp.apply(x).unwrap();
        let hits = out
            .rows()
            .into_iter()
            .zip(y)
            .filter(|(r, &t)| r.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b }).0 == t)
            .count();
        hits as f64 / y.len() as f64
    };
    (acc(x, y), acc(ex, ey))
}

fn block_matrix(samples: &[Sample], blocks: &[Block], bd: usize) -> Array2<f64> {
    Array2::from_shape_fn((samples.len(), blocks.len() * bd), |(i, j)| samples[i].block(blocks[j / bd], bd)[j % bd])
}

#[test]
fn prefix_alone_reads_the_label_at_rho_q() {
    let base = BiasSpec { seed: 21, ..BiasSpec::default() };
    let spec = BiasSpec { rho_q: 0.95, ..base.unbiased() };
    let b = make_dataset(&spec).unwrap();
    let bd = spec.block_dim;
    let x = block_matrix(&b.train, &[Block::Prefix], bd);
    let y: Vec<usize> = b.train.iter().map(|s| s.label).collect();
    let ex = block_matrix(&b.id_test, &[Block::Prefix], bd);
    let ey: Vec<usize> = b.id_test.iter().map(|s| s.label).collect();
    let (train_acc, _) = probe(&x, &y, &ex, &ey, spec.num_classes);
    assert!((train_acc - 0.95).abs() <= 0.02, "prefix probe train accuracy {train_acc}");
}

#[test]
fn single_modality_core_blocks_do_not_predict_the_label() {
    let spec = BiasSpec { seed: 22, ..BiasSpec::default() }.unbiased();
    let b = make_dataset(&spec).unwrap();
    let bd = spec.block_dim;
    let k = spec.num_classes;
    let y: Vec<usize> = b.train.iter().map(|s| s.label).collect();
    let ey: Vec<usize> = b.id_test.iter().map(|s| s.label).collect();
    for blk in [Block::QCore, Block::VCore] {
        let (_, acc) = probe(&block_matrix(&b.train, &[blk], bd), &y, &block_matrix(&b.id_test, &[blk], bd), &ey, k);
        assert!(acc <= 1.0 / k as f64 + 0.05, "{blk:?} probe accuracy {acc}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn counterfactual_preserves_labels_and_q(seed in 0u64..1000, mu in prop_oneof![-3.0f64..-0.1, 0.1f64..3.0]) {
        let spec = BiasSpec { n_train: 8, n_test: 40, seed, mu_shift: mu, ..BiasSpec::default() };
        let b = make_dataset(&spec).unwrap();
        let cf = make_counterfactual(&b.id_test, &spec);
        for (a, c) in b.id_test.iter().zip(&cf) {
            prop_assert_eq!(a.label, c.label);
            prop_assert_eq!(&a.q, &c.q);
        }
    }
}
