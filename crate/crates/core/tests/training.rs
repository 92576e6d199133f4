use noisylab::harness::data::{generate_blobs, generate_openset_pool, BlobSpec, OpenSetKind};
use noisylab::noisegen::{assign_fixed_labels, corrupt_symmetric, TransitionMatrix};
use noisylab::rng;
use noisylab::training::{
    train, write_metrics_csv, AuxLabelMode, Regularizer, TrainConfig, TrainData,
};
use noisylab::LabError;

fn spec() -> BlobSpec {
    BlobSpec {
        k: 3,
        dim: 2,
        separation: 4.0,
        sigma: 1.0,
    }
}

fn small_config() -> TrainConfig {
    let mut c = TrainConfig::default();
    c.hidden = vec![8];
    c.epochs = 4;
    c.train_batch = 32;
    c.aux_batch = 32;
    c.lr.decay_epochs = vec![3];
    c
}

#[test]
fn reruns_are_bitwise_identical() {
    let clean = generate_blobs(&spec(), 150, 0).unwrap();
    let data = corrupt_symmetric(&clean, 0.3, &mut rng::stream(0, "noise")).unwrap();
    let pool = generate_openset_pool(OpenSetKind::Ring, 200, &spec(), 1).unwrap();
    for reg in Regularizer::ALL {
        let mut c = small_config();
        c.regularizer = reg;
        let t = TransitionMatrix::symmetric(3, 0.3);
        let run = || {
            train(
                &c,
                TrainData::new(&data)
                    .with_aux(&pool)
                    .with_test(&clean)
                    .with_transition(&t),
            )
            .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.params, b.params, "{reg}");
        assert_eq!(a.metrics, b.metrics, "{reg}");
    }
}

#[test]
fn zero_eta_matches_standard_training_exactly() {
    let data = generate_blobs(&spec(), 150, 2).unwrap();
    let pool = generate_openset_pool(OpenSetKind::Ring, 100, &spec(), 2).unwrap();
    let standard = train(&small_config(), TrainData::new(&data)).unwrap();
    let mut c = small_config();
    c.regularizer = Regularizer::Odnl;
    c.eta = 0.0;
    let odnl = train(&c, TrainData::new(&data).with_aux(&pool)).unwrap();
    assert_eq!(standard.params, odnl.params);
}

#[test]
fn partial_last_batch_is_used() {
    // 100 rows at batch 32: three full batches and one of four
    let data = generate_blobs(&spec(), 99, 3).unwrap();
    let mut c = small_config();
    c.epochs = 1;
    let out = train(&c, TrainData::new(&data)).unwrap();
    assert_eq!(out.metrics.len(), 1);
    assert!(out.metrics[0].train_loss.is_finite());
}

#[test]
fn metrics_report_subsets_only_when_present() {
    let clean = generate_blobs(&spec(), 150, 4).unwrap();
    let out = train(&small_config(), TrainData::new(&clean)).unwrap();
    let m = out.final_metrics();
    assert!(m.noisy_loss.is_none() && m.aux_loss.is_none() && m.test_acc.is_none());
    assert!(m.clean_loss.is_some());

    let noisy = corrupt_symmetric(&clean, 0.4, &mut rng::stream(4, "noise")).unwrap();
    let pool = generate_openset_pool(OpenSetKind::Ring, 100, &spec(), 4).unwrap();
    let mut c = small_config();
    c.regularizer = Regularizer::Odnl;
    let out = train(&c, TrainData::new(&noisy).with_aux(&pool).with_test(&clean)).unwrap();
    let m = out.final_metrics();
    assert!(m.noisy_loss.is_some() && m.aux_loss.is_some() && m.test_acc.is_some());
}

#[test]
fn divergence_is_reported_with_its_location() {
    let data = generate_blobs(&spec(), 150, 5).unwrap();
    let mut c = small_config();
    c.lr.initial = 1e200;
    c.momentum = 0.0;
    match train(&c, TrainData::new(&data)) {
        Err(LabError::Numeric { context, .. }) => assert!(context.contains("epoch"), "{context}"),
        other => panic!("expected a numeric error, got {other:?}"),
    }
}

#[test]
fn missing_inputs_are_configuration_errors() {
    let data = generate_blobs(&spec(), 150, 6).unwrap();
    let mut c = small_config();
    c.regularizer = Regularizer::Odnl;
    assert!(matches!(
        train(&c, TrainData::new(&data)),
        Err(LabError::Config(_))
    ));
    c.regularizer = Regularizer::ForwardCorrection;
    assert!(matches!(
        train(&c, TrainData::new(&data)),
        Err(LabError::Config(_))
    ));
}

#[test]
fn fixed_labels_are_memorized_but_dynamic_ones_are_not() {
    // in eight dimensions a small net can shatter the pool
    let spec = BlobSpec { dim: 8, ..spec() };
    let data = generate_blobs(&spec, 300, 7).unwrap();
    let pool = generate_openset_pool(OpenSetKind::Ring, 60, &spec, 7).unwrap();
    let fixed_pool = assign_fixed_labels(&pool, 3, &mut rng::stream(7, "fixed")).unwrap();
    let mut c = small_config();
    c.hidden = vec![64, 64];
    c.regularizer = Regularizer::Odnl;
    c.epochs = 150;
    c.aux_batch = 30;
    c.lr.decay_epochs = vec![100];

    c.aux_label_mode = AuxLabelMode::Fixed;
    let fixed = train(&c, TrainData::new(&data).with_aux(&fixed_pool)).unwrap();
    c.aux_label_mode = AuxLabelMode::DynamicPerEpoch;
    let dynamic = train(&c, TrainData::new(&data).with_aux(&pool)).unwrap();

    let ln_k = 3f64.ln();
    let fixed_aux = fixed.final_metrics().aux_loss.unwrap();
    let dynamic_aux = dynamic.final_metrics().aux_loss.unwrap();
    assert!(fixed_aux < 0.5 * ln_k, "fixed {fixed_aux}");
    assert!(dynamic_aux > 0.9 * ln_k, "dynamic {dynamic_aux}");
}

#[test]
fn metrics_csv_layout() {
    let data = generate_blobs(&spec(), 90, 8).unwrap();
    let out = train(&small_config(), TrainData::new(&data).with_test(&data)).unwrap();
    let mut bytes = Vec::new();
    let header = vec![("train.eta".to_string(), "1".to_string())];
    write_metrics_csv(&mut bytes, &header, &out.metrics).unwrap();
    let text = String::from_utf8(bytes).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# train.eta = 1"));
    assert_eq!(
        lines.next(),
        Some("epoch,train_loss,clean_loss,noisy_loss,aux_loss,val_acc,test_acc")
    );
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first.len(), 7);
    assert_eq!(first[0], "0");
    // no noisy rows, no auxiliary pool, no validation split
    assert_eq!((first[3], first[4], first[5]), ("", "", ""));
    assert_eq!(text.lines().count(), 2 + out.metrics.len());
}
