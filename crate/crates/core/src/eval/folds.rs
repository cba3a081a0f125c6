//! Repeated k-fold partitions of sample ids.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One (repeat, fold) evaluation cell. Indices are 1-based; id lists are sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub repeat: usize,
    pub fold: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

fn check(n: usize, folds: usize, repeats: usize) -> Result<()> {
    if folds < 2 || n < folds {
        return Err(Error::Config(format!(
            "cannot split {n} samples into {folds} folds"
        )));
    }
    if repeats == 0 {
        return Err(Error::Config("at least one repeat required".into()));
    }
    Ok(())
}

fn repeat_rng(seed: u64, repeat: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(repeat as u64);
    rng
}

fn plans_from_assignment(
    assign: &[usize],
    folds: usize,
    repeat: usize,
    seed: u64,
) -> Vec<FoldPlan> {
    (0..folds)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..assign.len()).partition(|&i| assign[i] == f);
            FoldPlan {
                repeat: repeat + 1,
                fold: f + 1,
                train,
                test,
                seed,
            }
        })
        .collect()
}

/// Seeded shuffle per repeat; the first `n % folds` folds hold one extra sample.
pub fn make_folds(
    n_samples: usize,
    folds: usize,
    repeats: usize,
    seed: u64,
) -> Result<Vec<FoldPlan>> {
    check(n_samples, folds, repeats)?;
    let mut out = Vec::with_capacity(folds * repeats);
    for r in 0..repeats {
        let mut ids: Vec<usize> = (0..n_samples).collect();
        ids.shuffle(&mut repeat_rng(seed, r));
        let mut assign = vec![0; n_samples];
        for (pos, &id) in ids.iter().enumerate() {
            assign[id] = pos % folds;
        }
        out.extend(plans_from_assignment(&assign, folds, r, seed));
    }
    Ok(out)
}

/// Like [`make_folds`], but classes are spread evenly over folds: ids are
/// shuffled within each class, laid out class after class, and dealt to folds
/// in turn. Fold sizes are the same as for [`make_folds`].
pub fn make_stratified_folds(
    labels: &[usize],
    folds: usize,
    repeats: usize,
    seed: u64,
) -> Result<Vec<FoldPlan>> {
    let n = labels.len();
    check(n, folds, repeats)?;
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut out = Vec::with_capacity(folds * repeats);
    for r in 0..repeats {
        let mut rng = repeat_rng(seed, r);
        let mut assign = vec![0; n];
        let mut pos = 0;
        for c in 0..classes {
            let mut ids: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
            ids.shuffle(&mut rng);
            for id in ids {
                assign[id] = pos % folds;
                pos += 1;
            }
        }
        out.extend(plans_from_assignment(&assign, folds, r, seed));
    }
    Ok(out)
}
