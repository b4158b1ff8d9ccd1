use baseline::{pool, stack_tokens, BiasedModel, ModelDims, NUM_VIEWS};
use metrics::Classifier;
use ndarray::Axis;
use netcore::{grad_check, Module};
use synthbias::{make_dataset, BiasSpec, DatasetBundle, SplitArrays};

fn bundle() -> DatasetBundle {
    make_dataset(&BiasSpec { n_train: 16, n_test: 24, seed: 9, ..BiasSpec::default() }).unwrap()
}

fn model(spec: &BiasSpec) -> BiasedModel {
    BiasedModel::new(ModelDims::for_spec(spec), 17).unwrap()
}

#[test]
fn predictions_are_distributions() {
    let b = bundle();
    let m = model(&b.spec);
    for s in &b.id_test {
        let p = m.predict(s).unwrap();
        assert!((p.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(p.probs().len(), b.spec.num_classes);
    }
}

#[test]
fn zero_head_predicts_uniform() {
    let b = bundle();
    let mut m = model(&b.spec);
    for t in m.head.tensors_mut() {
        t.fill(0.0);
    }
    let u = 1.0 / b.spec.num_classes as f64;
    for s in &b.id_test {
        assert!(m.predict(s).unwrap().probs().iter().all(|&p| (p - u).abs() < 1e-15));
    }
}

#[test]
fn batch_prediction_equals_per_sample_prediction() {
    let b = bundle();
    let m = model(&b.spec);
    let batch = m.predict_batch(&b.ood_test).unwrap();
    for (s, p) in b.ood_test.iter().zip(&batch) {
        let single = m.predict(s).unwrap();
        for (x, y) in single.probs().iter().zip(p.probs()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn features_have_one_row_per_view_and_are_deterministic() {
    let b = bundle();
    let m = model(&b.spec);
    let s = &b.train[0];
    let f = m.extract_features(s).unwrap();
    assert_eq!(f.data().dim(), (NUM_VIEWS, m.d_f()));
    assert_eq!(f, m.extract_features(s).unwrap());
}

#[test]
fn pooled_features_through_head_reproduce_predict() {
    let b = bundle();
    let m = model(&b.spec);
    for s in b.train.iter().take(8) {
        let f = m.extract_features(s).unwrap();
        let pooled = f.data().mean_axis(Axis(0)).unwrap().insert_axis(Axis(0));
        let logits = m.logits_from_pooled(&pooled).unwrap();
        let arr = SplitArrays::from_samples(std::slice::from_ref(s));
        let direct = m.logits(&arr.q, &arr.v).unwrap();
        for (x, y) in logits.iter().zip(direct.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn stacked_features_interleave_samples_and_views() {
    let b = bundle();
    let m = model(&b.spec);
    let arr = SplitArrays::from_samples(&b.id_test[..5]);
    let tokens = m.backbone.tokens(&arr.q, &arr.v).unwrap();
    let stacked = stack_tokens(&tokens);
    assert_eq!(stacked.nrows(), 5 * NUM_VIEWS);
    for i in 0..5 {
        let f = m.extract_features(&b.id_test[i]).unwrap();
        for t in 0..NUM_VIEWS {
            for j in 0..m.d_f() {
                assert!((stacked[[i * NUM_VIEWS + t, j]] - f.data()[[t, j]]).abs() < 1e-12);
            }
        }
    }
    let pooled = pool(&tokens);
    assert_eq!(pooled, m.backbone.pooled(&arr.q, &arr.v).unwrap());
}

#[test]
fn graph_forward_matches_inference_and_gradients_check() {
    let b = bundle();
    let dims = ModelDims { encoder_hidden: 5, fusion_hidden: 6, d_f: 4, ..ModelDims::for_spec(&b.spec) };
    let m = BiasedModel::new(dims, 3).unwrap();
    let arr = SplitArrays::from_samples(&b.train[..4]);
    let mut g = netcore::Graph::new();
    let (q, v) = (g.constant(arr.q.clone()), g.constant(arr.v.clone()));
    let (logits, leaves) = m.forward_graph(&mut g, q, v).unwrap();
    assert_eq!(leaves.len(), m.tensors().len());
    let direct = Classifier::logits(&m, &arr.q, &arr.v).unwrap();
    for (x, y) in g.value(logits).iter().zip(direct.iter()) {
        assert!((x - y).abs() < 1e-12);
    }
    let report = grad_check(&m, 1e-5, |g, m| {
        let (q, v) = (g.constant(arr.q.clone()), g.constant(arr.v.clone()));
        let (logits, leaves) = m.forward_graph(g, q, v).map_err(|e| netcore::NetError::InvalidInput(e.to_string()))?;
        Ok((g.softmax_cross_entropy(logits, &arr.labels)?, leaves))
    })
    .unwrap();
    assert!(report.passed(1e-4), "{report:?}");
}

#[test]
fn default_widths_give_the_reported_parameter_count() {
    let spec = BiasSpec::default();
    let m = model(&spec);
    let (q, v, e, f, d, k) = (48, 64, 64, 128, 32, 8);
    // enc_q, enc_v, fusion over [a ‖ b ‖ a∘b] then to d_f, and the head.
    let expected = (q * e + e) + (v * e + e) + (3 * e * f + f) + (f * d + d) + (d * k + k);
    assert_eq!(m.param_count(), expected);
    assert_eq!(m.param_count(), 36392);
}

#[test]
fn invalid_widths_are_rejected() {
    let spec = BiasSpec::default();
    assert!(BiasedModel::new(ModelDims { d_f: 0, ..ModelDims::for_spec(&spec) }, 0).is_err());
    assert!(BiasedModel::new(ModelDims { num_classes: 1, ..ModelDims::for_spec(&spec) }, 0).is_err());
}
