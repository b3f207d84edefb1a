use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DatasetError, FieldDataset};

/// One train/validation partition. Index vectors refer to dataset samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Fold {
    pub index: usize,
    pub train_fields: Vec<String>,
    pub validation_fields: Vec<String>,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// K folds grouped by field: fields are shuffled with `seed` and dealt
/// round-robin, so fold field counts differ by at most one.
pub fn kfold_split(dataset: &FieldDataset, k: usize, seed: u64) -> Result<Vec<Fold>, DatasetError> {
    let n_fields = dataset.fields().len();
    if k < 2 || n_fields < k {
        return Err(DatasetError::TooFewFields { fields: n_fields, k });
    }
    let mut order: Vec<usize> = (0..n_fields).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut fold_of_field = vec![0usize; n_fields];
    for (pos, &f) in order.iter().enumerate() {
        fold_of_field[f] = pos % k;
    }
    let field_pos = |id: &str| {
        dataset
            .fields()
            .binary_search_by(|f| f.as_str().cmp(id))
            .expect("field index covers every sample")
    };
    let sample_fold: Vec<usize> = dataset
        .samples()
        .iter()
        .map(|s| fold_of_field[field_pos(&s.field_id)])
        .collect();

    Ok((0..k)
        .map(|fold| {
            let (validation, train): (Vec<usize>, Vec<usize>) =
                (0..dataset.len()).partition(|&i| sample_fold[i] == fold);
            let mut vf = Vec::new();
            let mut tf = Vec::new();
            for (i, f) in dataset.fields().iter().enumerate() {
                if fold_of_field[i] == fold {
                    vf.push(f.clone());
                } else {
                    tf.push(f.clone());
                }
            }
            Fold {
                index: fold,
                train_fields: tf,
                validation_fields: vf,
                train,
                validation,
            }
        })
        .collect())
}
