use crate::error::Result;
use crate::features::{GroupWeights, GroupedSparseVector, SparseVec};

use super::StructuredTask;

/// Views a task as having a single feature group: the concatenation of all
/// of the inner task's groups. Under uniform weighting this is exactly the
/// ordinary (ungrouped) structural SVM.
pub struct MergedGroups<'a, T> {
    inner: &'a T,
    offsets: Vec<usize>,
    dims: Vec<usize>,
    gold: Vec<GroupedSparseVector>,
}

impl<'a, T: StructuredTask> MergedGroups<'a, T> {
    pub fn new(inner: &'a T) -> Self {
        let dims = inner.group_dims();
        let mut offsets = Vec::with_capacity(dims.len());
        let mut total = 0;
        for d in &dims {
            offsets.push(total);
            total += d;
        }
        let mut merged = MergedGroups {
            inner,
            offsets,
            dims,
            gold: Vec::new(),
        };
        merged.gold = (0..inner.num_instances())
            .map(|i| merged.merge(inner.gold_features(i)))
            .collect();
        merged
    }

    fn merge(&self, v: &GroupedSparseVector) -> GroupedSparseVector {
        let pairs = v
            .groups
            .iter()
            .zip(&self.offsets)
            .flat_map(|(g, &off)| g.entries().iter().map(move |&(i, x)| (i + off as u32, x)))
            .collect();
        GroupedSparseVector {
            groups: vec![SparseVec::from_unsorted(pairs)],
        }
    }

    /// Splits single-group weights back into the inner task's groups.
    pub fn split(&self, weights: &GroupWeights) -> GroupWeights {
        let flat = &weights.groups[0];
        GroupWeights {
            groups: self
                .offsets
                .iter()
                .zip(&self.dims)
                .map(|(&off, &d)| flat[off..off + d].to_vec())
                .collect(),
        }
    }
}

impl<T: StructuredTask> StructuredTask for MergedGroups<'_, T> {
    type Output = T::Output;

    fn num_instances(&self) -> usize {
        self.inner.num_instances()
    }

    fn group_dims(&self) -> Vec<usize> {
        vec![self.dims.iter().sum()]
    }

    fn loss_augmented(&self, i: usize, weights: &GroupWeights) -> Result<(T::Output, f64)> {
        self.inner.loss_augmented(i, &self.split(weights))
    }

    fn features(&self, i: usize, output: &T::Output) -> Result<GroupedSparseVector> {
        Ok(self.merge(&self.inner.features(i, output)?))
    }

    fn gold_features(&self, i: usize) -> &GroupedSparseVector {
        &self.gold[i]
    }

    fn loss(&self, i: usize, output: &T::Output) -> Result<f64> {
        self.inner.loss(i, output)
    }
}
