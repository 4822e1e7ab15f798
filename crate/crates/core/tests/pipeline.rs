mod common;

use common::*;
use mauc::kernels::{dispatch, dispatch_fast, KernelPath};
use mauc::reference::{grad_naive, risk_naive};
use mauc::trainer::{train, Batch, TrainConfig};
use mauc::verify::{random_instance, verify, VerifyConfig};
use mauc::{LinearSoftmaxModel, SurrogateSpec};

#[test]
fn every_loss_family_matches_its_oracle() {
    let cfg = VerifyConfig {
        trials: 30,
        max_n: 200,
        seed: 500,
        ..VerifyConfig::default()
    };
    for s in [
        "exp:alpha=0.5",
        "hinge:alpha=0.25",
        "squared:alpha=0.5",
        "logit",
        "qhinge:q=3",
        "genhinge:eps=0.3",
        "distweight:eps=0.5",
        "bernstein:base=exp,alpha=1,K=20",
    ] {
        let report = verify(&s.parse().unwrap(), &cfg).unwrap();
        assert!(report.passed(), "{s}: {:?}", report.failures.first());
    }
}

#[test]
fn forced_naive_path_equals_oracle_bitwise() {
    let (f, idx) = random_instance(&VerifyConfig::default(), 42, false).unwrap();
    let spec = SurrogateSpec::squared(1.0).unwrap();
    let out = dispatch(&f, &idx, &spec, true, true).unwrap();
    assert_eq!(out.path, KernelPath::Naive);
    assert_eq!(out.loss, risk_naive(&f, &idx, &spec).unwrap());
    assert_eq!(out.grad.unwrap(), grad_naive(&f, &idx, &spec).unwrap());
}

#[test]
fn trained_model_round_trips_through_text() {
    let (tr, va, te) = blob_splits(300, 5, &[0.5, 0.3, 0.2], 4.0, 1);
    let cfg = TrainConfig {
        epochs: 30,
        batch: Batch::Size(64),
        ..TrainConfig::default()
    };
    let model = train_pairwise(&tr, &va, "squared", &cfg);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.txt");
    model.save(&path).unwrap();
    let back = LinearSoftmaxModel::load(&path).unwrap();
    assert_eq!(back, model);
    assert_eq!(test_mauc(&back, &te), test_mauc(&model, &te));
}

#[test]
fn minibatch_training_is_deterministic_and_learns() {
    let (tr, va, te) = blob_splits(400, 6, &[0.6, 0.3, 0.1], 4.0, 2);
    let spec = SurrogateSpec::hinge(1.0).unwrap();
    let cfg = TrainConfig {
        epochs: 40,
        batch: Batch::Size(50),
        seed: 9,
        ..TrainConfig::default()
    };
    let (a, ta) = train(&tr, Some(&va), &spec, &cfg).unwrap();
    let (b, tb) = train(&tr, Some(&va), &spec, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(ta, tb);
    assert!(test_mauc(&a, &te) > 0.9);
    let csv = ta.to_csv();
    assert!(csv.starts_with("epoch,risk,val_mauc,lr\n"));
    assert_eq!(csv.lines().count(), 41);
}

#[test]
fn bernstein_training_tracks_its_base_loss() {
    let (tr, va, te) = blob_splits(300, 4, &[0.5, 0.3, 0.2], 4.0, 3);
    let cfg = TrainConfig {
        epochs: 60,
        ..TrainConfig::default()
    };
    let logit = train_pairwise(&tr, &va, "logit:K=12", &cfg);
    assert!(test_mauc(&logit, &te) > 0.9);
    let f = logit.score(te.features()).unwrap();
    let idx = mauc::ClassIndex::from_labels(te.labels(), 3).unwrap();
    let out = dispatch_fast(&f, &idx, &"logit:K=12".parse().unwrap(), false).unwrap();
    assert_eq!(out.path, KernelPath::Bernstein);
}
