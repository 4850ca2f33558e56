//! Grouped sparse vectors and dense per-group weights.
//!
//! A joint feature vector is a concatenation of one block per template. Each
//! block has its own index space, so an index is only meaningful together
//! with its group.

use std::collections::HashMap;

/// Sparse vector with strictly increasing indices.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseVec {
    entries: Vec<(u32, f64)>,
}

impl SparseVec {
    pub fn new() -> Self {
        SparseVec::default()
    }

    /// Builds a vector from unordered `(index, value)` pairs, summing
    /// duplicates and dropping exact zeros.
    pub fn from_unsorted(mut pairs: Vec<(u32, f64)>) -> Self {
        pairs.sort_by_key(|&(idx, _)| idx);
        let mut entries: Vec<(u32, f64)> = Vec::with_capacity(pairs.len());
        for (idx, value) in pairs {
            match entries.last_mut() {
                Some(last) if last.0 == idx => last.1 += value,
                _ => entries.push((idx, value)),
            }
        }
        entries.retain(|&(_, v)| v != 0.0);
        SparseVec { entries }
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, idx: u32) -> f64 {
        match self.entries.binary_search_by_key(&idx, |&(i, _)| i) {
            Ok(pos) => self.entries[pos].1,
            Err(_) => 0.0,
        }
    }

    pub fn dot(&self, other: &SparseVec) -> f64 {
        let (mut a, mut b) = (self.entries.iter().peekable(), other.entries.iter().peekable());
        let mut sum = 0.0;
        while let (Some(&&(ia, va)), Some(&&(ib, vb))) = (a.peek(), b.peek()) {
            match ia.cmp(&ib) {
                std::cmp::Ordering::Less => {
                    a.next();
                }
                std::cmp::Ordering::Greater => {
                    b.next();
                }
                std::cmp::Ordering::Equal => {
                    sum += va * vb;
                    a.next();
                    b.next();
                }
            }
        }
        sum
    }

    /// Dot product with a dense vector. Indices past the end contribute zero.
    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.entries
            .iter()
            .map(|&(idx, v)| dense.get(idx as usize).map_or(0.0, |w| v * w))
            .sum()
    }

    pub fn squared_norm(&self) -> f64 {
        self.entries.iter().map(|&(_, v)| v * v).sum()
    }

    pub fn scale(&mut self, factor: f64) {
        for entry in &mut self.entries {
            entry.1 *= factor;
        }
        self.entries.retain(|&(_, v)| v != 0.0);
    }

    /// `self - other`.
    pub fn sub(&self, other: &SparseVec) -> SparseVec {
        let mut pairs = self.entries.clone();
        pairs.extend(other.entries.iter().map(|&(i, v)| (i, -v)));
        SparseVec::from_unsorted(pairs)
    }

    pub fn add_scaled_to_dense(&self, factor: f64, dense: &mut [f64]) {
        for &(idx, v) in &self.entries {
            dense[idx as usize] += factor * v;
        }
    }

    pub fn max_index(&self) -> Option<u32> {
        self.entries.last().map(|&(i, _)| i)
    }
}

/// One sparse block per feature group.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GroupedSparseVector {
    pub groups: Vec<SparseVec>,
}

impl GroupedSparseVector {
    pub fn zeros(num_groups: usize) -> Self {
        GroupedSparseVector {
            groups: vec![SparseVec::new(); num_groups],
        }
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    /// Sum of per-group dot products.
    pub fn dot(&self, other: &GroupedSparseVector) -> f64 {
        assert_eq!(self.groups.len(), other.groups.len(), "group count mismatch");
        self.groups
            .iter()
            .zip(&other.groups)
            .map(|(a, b)| a.dot(b))
            .sum()
    }

    pub fn dot_weights(&self, weights: &GroupWeights) -> f64 {
        assert_eq!(self.groups.len(), weights.num_groups(), "group count mismatch");
        self.groups
            .iter()
            .zip(&weights.groups)
            .map(|(g, w)| g.dot_dense(w))
            .sum()
    }

    pub fn sub(&self, other: &GroupedSparseVector) -> GroupedSparseVector {
        assert_eq!(self.groups.len(), other.groups.len(), "group count mismatch");
        GroupedSparseVector {
            groups: self
                .groups
                .iter()
                .zip(&other.groups)
                .map(|(a, b)| a.sub(b))
                .collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.groups.iter().all(SparseVec::is_empty)
    }
}

/// Accumulates grouped sparse contributions before freezing them into a
/// [`GroupedSparseVector`].
#[derive(Clone, Debug)]
pub struct GroupedAccumulator {
    groups: Vec<HashMap<u32, f64>>,
}

impl GroupedAccumulator {
    pub fn new(num_groups: usize) -> Self {
        GroupedAccumulator {
            groups: vec![HashMap::new(); num_groups],
        }
    }

    pub fn add(&mut self, group: usize, idx: u32, value: f64) {
        *self.groups[group].entry(idx).or_insert(0.0) += value;
    }

    pub fn add_vector(&mut self, factor: f64, vector: &GroupedSparseVector) {
        for (group, block) in vector.groups.iter().enumerate() {
            for &(idx, v) in block.entries() {
                self.add(group, idx, factor * v);
            }
        }
    }

    pub fn finish(self) -> GroupedSparseVector {
        GroupedSparseVector {
            groups: self
                .groups
                .into_iter()
                .map(|g| SparseVec::from_unsorted(g.into_iter().collect()))
                .collect(),
        }
    }
}

/// Dense weight block per group.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupWeights {
    pub groups: Vec<Vec<f64>>,
}

impl GroupWeights {
    pub fn zeros(dims: &[usize]) -> Self {
        GroupWeights {
            groups: dims.iter().map(|&d| vec![0.0; d]).collect(),
        }
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }

    pub fn group_norm(&self, group: usize) -> f64 {
        self.groups[group].iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.groups.iter().flatten().all(|w| w.is_finite())
    }

    /// Returns weights with groups reordered so that group `i` of the
    /// result is group `order[i]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> GroupWeights {
        GroupWeights {
            groups: order.iter().map(|&g| self.groups[g].clone()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_unsorted_merges_and_sorts() {
        let v = SparseVec::from_unsorted(vec![(3, 1.0), (1, 2.0), (3, 0.5), (2, 1.0), (2, -1.0)]);
        assert_eq!(v.entries(), &[(1, 2.0), (3, 1.5)]);
    }

    #[test]
    fn grouped_dot_is_sum_of_group_dots() {
        // Both groups use index 0; the values must never mix across groups.
        let a = GroupedSparseVector {
            groups: vec![
                SparseVec::from_unsorted(vec![(0, 2.0)]),
                SparseVec::from_unsorted(vec![(0, 3.0)]),
            ],
        };
        let b = GroupedSparseVector {
            groups: vec![
                SparseVec::from_unsorted(vec![(0, 5.0)]),
                SparseVec::from_unsorted(vec![(0, 7.0)]),
            ],
        };
        assert_eq!(a.dot(&b), 2.0 * 5.0 + 3.0 * 7.0);
        let w = GroupWeights {
            groups: vec![vec![1.0], vec![-1.0]],
        };
        assert_eq!(a.dot_weights(&w), 2.0 - 3.0);
    }

    #[test]
    fn sub_cancels_to_empty() {
        let a = SparseVec::from_unsorted(vec![(4, 1.0), (9, 2.0)]);
        assert!(a.sub(&a).is_empty());
        assert_eq!(a.dot_dense(&[0.0; 5]), 0.0);
    }
}
