use baseline::train_biased;
use metrics::split_accuracy;
use netcore::TrainConfig;
use synthbias::{make_dataset, BiasSpec, Sample, SplitArrays};

#[test]
fn default_spec_baseline_is_biased() {
    let bundle = make_dataset(&BiasSpec::default()).unwrap();
    let out = train_biased(&bundle, &TrainConfig::default()).unwrap();
    assert!(out.train_accuracy >= 0.9, "train accuracy {}", out.train_accuracy);
    assert!(out.id_accuracy - out.ood_accuracy >= 0.15, "id {} ood {}", out.id_accuracy, out.ood_accuracy);
    assert_eq!(out.epoch_losses.len(), TrainConfig::default().epochs);

    // OOD samples whose every spurious channel disagrees with the label.
    let against: Vec<Sample> = bundle.ood_test.iter().filter(|s| s.spur.iter().all(|&c| c != s.label)).cloned().collect();
    assert!(against.len() > 100);
    let acc = split_accuracy(&out.model, &SplitArrays::from_samples(&against)).unwrap();
    assert!(acc < out.id_accuracy, "conflicting-group accuracy {acc} vs id {}", out.id_accuracy);
}

#[test]
fn unbiased_spec_shows_no_gap() {
    let bundle = make_dataset(&BiasSpec::default().unbiased()).unwrap();
    let out = train_biased(&bundle, &TrainConfig::default()).unwrap();
    assert!((out.id_accuracy - out.ood_accuracy).abs() < 0.02, "id {} ood {}", out.id_accuracy, out.ood_accuracy);
}

#[test]
fn training_is_deterministic() {
    let bundle = make_dataset(&BiasSpec { n_train: 300, n_test: 100, ..BiasSpec::default() }).unwrap();
    let cfg = TrainConfig { epochs: 2, ..TrainConfig::default() };
    let a = train_biased(&bundle, &cfg).unwrap();
    let b = train_biased(&bundle, &cfg).unwrap();
    assert_eq!(a, b);
    let c = train_biased(&bundle, &TrainConfig { seed: 1, ..cfg }).unwrap();
    assert_ne!(a.model, c.model);
}
