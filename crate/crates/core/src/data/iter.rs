use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use super::{EnsembleBatch, ReplayBuffer, TransitionBatch};
use crate::{Error, Result, SeededRng};

/// Epoch-based, without-replacement iteration over a fixed set of rows of a
/// dataset snapshot.
#[derive(Debug, Clone)]
pub struct TransitionIterator {
    data: Arc<TransitionBatch>,
    indices: Vec<usize>,
    batch_size: usize,
    shuffle_each_epoch: bool,
    rng: SeededRng,
}

impl TransitionIterator {
    pub fn new(
        data: Arc<TransitionBatch>,
        indices: Vec<usize>,
        batch_size: usize,
        shuffle_each_epoch: bool,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Empty("transition iterator over zero rows".into()));
        }
        if batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= data.len()) {
            return Err(Error::invalid(format!("index {bad} out of range for {} rows", data.len())));
        }
        Ok(Self {
            data,
            indices,
            batch_size,
            shuffle_each_epoch,
            rng: SeededRng::from_rng(rng),
        })
    }

    /// Iterates every row of `data` in order.
    pub fn over_all(data: Arc<TransitionBatch>, batch_size: usize, shuffle_each_epoch: bool, rng: &mut SeededRng) -> Result<Self> {
        let indices = (0..data.len()).collect();
        Self::new(data, indices, batch_size, shuffle_each_epoch, rng)
    }

    pub fn data(&self) -> &Arc<TransitionBatch> {
        &self.data
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn num_rows(&self) -> usize {
        self.indices.len()
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn shuffle_each_epoch(&self) -> bool {
        self.shuffle_each_epoch
    }

    pub fn num_batches(&self) -> usize {
        self.indices.len().div_ceil(self.batch_size)
    }

    /// Row indices of each batch of the next epoch.
    pub fn epoch_indices(&mut self) -> Vec<Vec<usize>> {
        let mut order = self.indices.clone();
        if self.shuffle_each_epoch {
            order.shuffle(&mut self.rng);
        }
        order.chunks(self.batch_size).map(<[usize]>::to_vec).collect()
    }

    pub fn epoch(&mut self) -> Vec<TransitionBatch> {
        self.epoch_indices().iter().map(|idx| self.data.select(idx)).collect()
    }

    /// All rows of this iterator as a single batch, in index order.
    pub fn full_batch(&self) -> TransitionBatch {
        self.data.select(&self.indices)
    }

    /// Ensemble iterator in which each member trains on its own
    /// with-replacement resample of this iterator's rows.
    pub fn bootstrap(&self, ensemble_size: usize, rng: &mut SeededRng) -> Result<BootstrapIterator> {
        BootstrapIterator::new(
            self.data.clone(),
            &self.indices,
            ensemble_size,
            self.batch_size,
            self.shuffle_each_epoch,
            rng,
        )
    }
}

/// Splits the buffer into train and (optional) validation iterators using a
/// fresh random permutation. Validation receives `floor(ratio * N)` rows; a
/// zero ratio (or one that rounds to zero rows) yields no validation
/// iterator.
pub fn train_val_split(
    buffer: &ReplayBuffer,
    validation_ratio: f64,
    batch_size: usize,
    shuffle_each_epoch: bool,
    rng: &mut SeededRng,
) -> Result<(TransitionIterator, Option<TransitionIterator>)> {
    if buffer.is_empty() {
        return Err(Error::Empty("cannot split an empty replay buffer".into()));
    }
    if !(0.0..1.0).contains(&validation_ratio) {
        return Err(Error::invalid(format!("validation_ratio {validation_ratio} outside [0, 1)")));
    }
    let data = Arc::new(buffer.all());
    let n = data.len();
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let n_val = (validation_ratio * n as f64).floor() as usize;
    let val_idx = perm.split_off(n - n_val);
    let train = TransitionIterator::new(data.clone(), perm, batch_size, shuffle_each_epoch, rng)?;
    let val = if val_idx.is_empty() {
        None
    } else {
        Some(TransitionIterator::new(data, val_idx, batch_size, false, rng)?)
    };
    Ok((train, val))
}

/// Iterator producing batches with a leading ensemble axis.
///
/// Each member's resample is drawn once at construction (size N, with
/// replacement) and stays fixed for the iterator's lifetime.
#[derive(Debug, Clone)]
pub struct BootstrapIterator {
    data: Arc<TransitionBatch>,
    base_indices: Vec<usize>,
    member_indices: Vec<Vec<usize>>,
    batch_size: usize,
    shuffle_each_epoch: bool,
    rng: SeededRng,
}

impl BootstrapIterator {
    pub fn new(
        data: Arc<TransitionBatch>,
        base_indices: &[usize],
        ensemble_size: usize,
        batch_size: usize,
        shuffle_each_epoch: bool,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if ensemble_size == 0 {
            return Err(Error::invalid("ensemble size must be at least 1"));
        }
        if base_indices.is_empty() {
            return Err(Error::Empty("bootstrap over an empty dataset".into()));
        }
        if batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        let n = base_indices.len();
        let member_indices = (0..ensemble_size)
            .map(|_| (0..n).map(|_| base_indices[rng.random_range(0..n)]).collect())
            .collect();
        Ok(Self {
            data,
            base_indices: base_indices.to_vec(),
            member_indices,
            batch_size,
            shuffle_each_epoch,
            rng: SeededRng::from_rng(rng),
        })
    }

    pub fn ensemble_size(&self) -> usize {
        self.member_indices.len()
    }

    pub fn member_indices(&self) -> &[Vec<usize>] {
        &self.member_indices
    }

    /// The rows the resamples were drawn from, without resampling.
    pub fn base_indices(&self) -> &[usize] {
        &self.base_indices
    }

    pub fn base_batch(&self) -> TransitionBatch {
        self.data.select(&self.base_indices)
    }

    pub fn num_batches(&self) -> usize {
        self.member_indices[0].len().div_ceil(self.batch_size)
    }

    /// `result[batch][member]` row indices for the next epoch.
    pub fn epoch_indices(&mut self) -> Vec<Vec<Vec<usize>>> {
        let orders: Vec<Vec<usize>> = self
            .member_indices
            .iter()
            .map(|idx| {
                let mut o = idx.clone();
                if self.shuffle_each_epoch {
                    o.shuffle(&mut self.rng);
                }
                o
            })
            .collect();
        (0..self.num_batches())
            .map(|b| {
                orders
                    .iter()
                    .map(|o| {
                        let end = ((b + 1) * self.batch_size).min(o.len());
                        o[b * self.batch_size..end].to_vec()
                    })
                    .collect()
            })
            .collect()
    }

    pub fn epoch(&mut self) -> Vec<EnsembleBatch> {
        self.epoch_indices()
            .into_iter()
            .map(|members| EnsembleBatch {
                members: members.iter().map(|idx| self.data.select(idx)).collect(),
            })
            .collect()
    }
}
