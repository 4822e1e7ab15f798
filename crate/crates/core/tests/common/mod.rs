use mauc::dataset::{split_stratified, synth_blobs, ClassIndex, Dataset};
use mauc::metrics::mauc;
use mauc::trainer::{self, TrainConfig};
use mauc::{LinearSoftmaxModel, SurrogateSpec};

pub fn test_mauc(model: &LinearSoftmaxModel, test: &Dataset) -> f64 {
    let idx = ClassIndex::from_labels(test.labels(), test.n_classes()).unwrap();
    mauc(&model.score(test.features()).unwrap(), &idx).unwrap()
}

/// Blob fixture split 0.8 / 0.1 / 0.1.
pub fn blob_splits(n: usize, d: usize, rho: &[f64], separation: f64, seed: u64) -> (Dataset, Dataset, Dataset) {
    let ds = synth_blobs(n, d, rho, separation, seed).unwrap();
    split_stratified(&ds, (0.8, 0.1, 0.1), seed).unwrap()
}

pub fn train_pairwise(train: &Dataset, valid: &Dataset, spec: &str, cfg: &TrainConfig) -> LinearSoftmaxModel {
    let spec: SurrogateSpec = spec.parse().unwrap();
    trainer::train(train, Some(valid), &spec, cfg).unwrap().0
}
