//! Linear-chain sequence labeling: joint feature map, Hamming loss and exact
//! (loss-augmented) Viterbi decoding.
//!
//! Observation group `j` holds a `d_j × k` block laid out as
//! `feature_idx * k + label`, so a feature firing at a position contributes
//! only to the row of that position's label. When the template set contains
//! `B`, a trailing `k × k` transition group holds label-pair weights at
//! `prev * k + next`.

use crate::corpus::{SequenceInstance, Token};
use crate::error::{Error, Result};
use crate::features::{GroupWeights, GroupedAccumulator, GroupedSparseVector};
use crate::solver::StructuredTask;
use crate::template::{extract_token_features, index_corpus, FeatureAlphabet, TemplateKind, TemplateSpec};

/// Canonical one-hot encoding of a label among `k`.
pub fn label_indicator(label: usize, k: usize) -> Vec<f64> {
    let mut v = vec![0.0; k];
    v[label] = 1.0;
    v
}

/// Number of positions where the two labelings disagree.
pub fn hamming_loss(gold: &[usize], other: &[usize]) -> Result<f64> {
    if gold.len() != other.len() {
        return Err(Error::LengthMismatch(format!(
            "label sequences of length {} and {}",
            gold.len(),
            other.len()
        )));
    }
    Ok(gold.iter().zip(other).filter(|(a, b)| a != b).count() as f64)
}

/// Templates, frozen alphabets and label count: everything needed to map an
/// observation sequence to grouped features.
#[derive(Clone, Debug)]
pub struct SequenceFeaturizer {
    pub specs: Vec<TemplateSpec>,
    pub alphabets: Vec<FeatureAlphabet>,
    pub num_labels: usize,
}

/// Per-position observation feature hits, one entry per observation group.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenFeatures {
    pub positions: Vec<Vec<Option<u32>>>,
}

impl TokenFeatures {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

impl SequenceFeaturizer {
    /// Indexes `corpus` with `specs`.
    pub fn build(specs: Vec<TemplateSpec>, corpus: &[SequenceInstance], num_labels: usize) -> Self {
        let alphabets = index_corpus(&specs, corpus);
        SequenceFeaturizer {
            specs,
            alphabets,
            num_labels,
        }
    }

    pub fn observation_specs(&self) -> Vec<&TemplateSpec> {
        self.specs.iter().filter(|s| s.kind == TemplateKind::Observation).collect()
    }

    pub fn has_transitions(&self) -> bool {
        self.specs.iter().any(|s| s.kind == TemplateKind::Transition)
    }

    pub fn num_observation_groups(&self) -> usize {
        self.alphabets.len()
    }

    pub fn num_groups(&self) -> usize {
        self.alphabets.len() + usize::from(self.has_transitions())
    }

    pub fn transition_group(&self) -> Option<usize> {
        self.has_transitions().then_some(self.alphabets.len())
    }

    pub fn group_dims(&self) -> Vec<usize> {
        let k = self.num_labels;
        let mut dims: Vec<usize> = self.alphabets.iter().map(|a| a.len() * k).collect();
        if self.has_transitions() {
            dims.push(k * k);
        }
        dims
    }

    /// Template index of each group, the transition group last as `B`.
    pub fn group_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.alphabets.iter().map(|a| a.group.clone()).collect();
        if self.has_transitions() {
            names.push("B".into());
        }
        names
    }

    pub fn token_features(&self, tokens: &[Token]) -> TokenFeatures {
        let specs = self.observation_specs();
        TokenFeatures {
            positions: (0..tokens.len())
                .map(|t| extract_token_features(&specs, &self.alphabets, tokens, t))
                .collect(),
        }
    }

    /// Joint feature vector of an observation sequence and a labeling.
    pub fn joint_feature_map(&self, feats: &TokenFeatures, labels: &[usize]) -> Result<GroupedSparseVector> {
        let k = self.num_labels;
        if labels.len() != feats.len() {
            return Err(Error::LengthMismatch(format!(
                "{} tokens, {} labels",
                feats.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
            return Err(Error::LabelOutOfRange { label: bad, size: k });
        }
        let mut acc = GroupedAccumulator::new(self.num_groups());
        for (hits, &y) in feats.positions.iter().zip(labels) {
            for (group, hit) in hits.iter().enumerate() {
                if let Some(f) = hit {
                    acc.add(group, (*f as usize * k + y) as u32, 1.0);
                }
            }
        }
        if let Some(tg) = self.transition_group() {
            for pair in labels.windows(2) {
                acc.add(tg, (pair[0] * k + pair[1]) as u32, 1.0);
            }
        }
        Ok(acc.finish())
    }
}

/// Node and edge potentials of one sentence under fixed weights.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainPotentials {
    pub num_labels: usize,
    /// `len × k`, row-major.
    pub emission: Vec<f64>,
    /// `k × k`, `prev * k + next`.
    pub transition: Vec<f64>,
}

impl ChainPotentials {
    pub fn len(&self) -> usize {
        self.emission.len() / self.num_labels
    }

    pub fn is_empty(&self) -> bool {
        self.emission.is_empty()
    }

    fn e(&self, t: usize, y: usize) -> f64 {
        self.emission[t * self.num_labels + y]
    }

    fn tr(&self, a: usize, b: usize) -> f64 {
        self.transition[a * self.num_labels + b]
    }

    /// Score of one labeling, accumulated position by position.
    pub fn path_score(&self, labels: &[usize]) -> f64 {
        let mut score = 0.0;
        for (t, &y) in labels.iter().enumerate() {
            score += self.e(t, y);
            if t > 0 {
                score += self.tr(labels[t - 1], y);
            }
        }
        score
    }

    /// Adds 1 to every node potential whose label differs from `gold`.
    pub fn add_hamming(&mut self, gold: &[usize]) {
        let k = self.num_labels;
        for (t, &g) in gold.iter().enumerate() {
            for y in 0..k {
                if y != g {
                    self.emission[t * k + y] += 1.0;
                }
            }
        }
    }

    /// Exact argmax over all labelings, breaking ties toward the
    /// lexicographically smallest sequence.
    ///
    /// A backward pass computes the best suffix score for each label at each
    /// position; the forward pass then commits to the smallest label that
    /// still attains the optimum, which yields the smallest optimal sequence.
    pub fn viterbi(&self) -> (Vec<usize>, f64) {
        let (l, k) = (self.len(), self.num_labels);
        if l == 0 {
            return (Vec::new(), 0.0);
        }
        let mut suffix = vec![0.0; l * k];
        for y in 0..k {
            suffix[(l - 1) * k + y] = self.e(l - 1, y);
        }
        for t in (0..l - 1).rev() {
            for y in 0..k {
                let best = (0..k)
                    .map(|next| self.tr(y, next) + suffix[(t + 1) * k + next])
                    .fold(f64::NEG_INFINITY, f64::max);
                suffix[t * k + y] = self.e(t, y) + best;
            }
        }
        let first_argmax = |values: &mut dyn Iterator<Item = f64>| {
            let mut best = (0, f64::NEG_INFINITY);
            for (y, v) in values.enumerate() {
                if v > best.1 {
                    best = (y, v);
                }
            }
            best
        };
        let (y0, score) = first_argmax(&mut (0..k).map(|y| suffix[y]));
        let mut labels = vec![y0];
        for t in 1..l {
            let prev = labels[t - 1];
            let (y, _) = first_argmax(&mut (0..k).map(|y| self.tr(prev, y) + suffix[t * k + y]));
            labels.push(y);
        }
        (labels, score)
    }
}

/// Weights of a trained or in-training sequence model bound to its
/// featurizer.
pub struct SequenceScorer<'a> {
    pub featurizer: &'a SequenceFeaturizer,
    pub weights: &'a GroupWeights,
}

impl<'a> SequenceScorer<'a> {
    pub fn new(featurizer: &'a SequenceFeaturizer, weights: &'a GroupWeights) -> Result<Self> {
        if weights.dims() != featurizer.group_dims() {
            return Err(Error::InvalidArgument(format!(
                "weight dimensions {:?} do not match featurizer {:?}",
                weights.dims(),
                featurizer.group_dims()
            )));
        }
        Ok(SequenceScorer { featurizer, weights })
    }

    pub fn potentials(&self, feats: &TokenFeatures) -> ChainPotentials {
        let k = self.featurizer.num_labels;
        let mut emission = vec![0.0; feats.len() * k];
        for (t, hits) in feats.positions.iter().enumerate() {
            let row = &mut emission[t * k..(t + 1) * k];
            for (group, hit) in hits.iter().enumerate() {
                if let Some(f) = hit {
                    let block = &self.weights.groups[group][*f as usize * k..(*f as usize + 1) * k];
                    for (e, w) in row.iter_mut().zip(block) {
                        *e += w;
                    }
                }
            }
        }
        let transition = match self.featurizer.transition_group() {
            Some(tg) => self.weights.groups[tg].clone(),
            None => vec![0.0; k * k],
        };
        ChainPotentials {
            num_labels: k,
            emission,
            transition,
        }
    }
}

/// Highest-scoring labeling and its score.
pub fn viterbi_decode(scorer: &SequenceScorer<'_>, feats: &TokenFeatures) -> (Vec<usize>, f64) {
    scorer.potentials(feats).viterbi()
}

/// Most violated labeling: argmax of Hamming loss plus score. Returns the
/// labeling and the augmented objective `Δ(gold, y) + ⟨w, Φ(x, y)⟩`.
pub fn loss_augmented_decode(scorer: &SequenceScorer<'_>, feats: &TokenFeatures, gold: &[usize]) -> (Vec<usize>, f64) {
    let mut potentials = scorer.potentials(feats);
    potentials.add_hamming(gold);
    potentials.viterbi()
}

const BRUTE_FORCE_LIMIT: f64 = 1e6;

/// Exhaustive decoding over all `k^l` labelings, summing weights directly
/// per labeling. Optional `gold` adds Hamming loss. Same tie rule as
/// [`viterbi_decode`].
pub fn brute_force_decode(
    scorer: &SequenceScorer<'_>,
    feats: &TokenFeatures,
    gold: Option<&[usize]>,
) -> Result<(Vec<usize>, f64)> {
    let (l, k) = (feats.len(), scorer.featurizer.num_labels);
    if (k as f64).powi(l as i32) > BRUTE_FORCE_LIMIT {
        return Err(Error::InvalidArgument(format!("{k}^{l} labelings exceed the brute-force limit")));
    }
    let weights = scorer.weights;
    let tg = scorer.featurizer.transition_group();
    let score_of = |labels: &[usize]| {
        let mut s = 0.0;
        for (t, &y) in labels.iter().enumerate() {
            for (group, hit) in feats.positions[t].iter().enumerate() {
                if let Some(f) = hit {
                    s += weights.groups[group][*f as usize * k + y];
                }
            }
            if let (Some(tg), true) = (tg, t > 0) {
                s += weights.groups[tg][labels[t - 1] * k + y];
            }
            if let Some(g) = gold {
                if g[t] != y {
                    s += 1.0;
                }
            }
        }
        s
    };
    // Odometer in lexicographic order; strict comparison keeps the first.
    let mut labels = vec![0; l];
    let mut best = (labels.clone(), score_of(&labels));
    loop {
        let mut pos = l;
        loop {
            if pos == 0 {
                return Ok(best);
            }
            pos -= 1;
            labels[pos] += 1;
            if labels[pos] < k {
                break;
            }
            labels[pos] = 0;
        }
        let s = score_of(&labels);
        if s > best.1 {
            best = (labels.clone(), s);
        }
    }
}

/// Separation oracle over a labeled sequence corpus.
pub struct SequenceTask<'a> {
    featurizer: &'a SequenceFeaturizer,
    features: Vec<TokenFeatures>,
    gold: Vec<Vec<usize>>,
    gold_phi: Vec<GroupedSparseVector>,
}

impl<'a> SequenceTask<'a> {
    pub fn new(featurizer: &'a SequenceFeaturizer, corpus: &[SequenceInstance]) -> Result<Self> {
        let mut features = Vec::with_capacity(corpus.len());
        let mut gold = Vec::with_capacity(corpus.len());
        let mut gold_phi = Vec::with_capacity(corpus.len());
        for (i, instance) in corpus.iter().enumerate() {
            let labels = instance
                .labels
                .clone()
                .ok_or_else(|| Error::InvalidArgument(format!("training sentence {} has no labels", i + 1)))?;
            let feats = featurizer.token_features(&instance.tokens);
            gold_phi.push(featurizer.joint_feature_map(&feats, &labels)?);
            features.push(feats);
            gold.push(labels);
        }
        Ok(SequenceTask {
            featurizer,
            features,
            gold,
            gold_phi,
        })
    }

    pub fn token_features(&self, i: usize) -> &TokenFeatures {
        &self.features[i]
    }

    pub fn gold(&self, i: usize) -> &[usize] {
        &self.gold[i]
    }
}

impl StructuredTask for SequenceTask<'_> {
    type Output = Vec<usize>;

    fn num_instances(&self) -> usize {
        self.gold.len()
    }

    fn group_dims(&self) -> Vec<usize> {
        self.featurizer.group_dims()
    }

    fn loss_augmented(&self, i: usize, weights: &GroupWeights) -> Result<(Vec<usize>, f64)> {
        let scorer = SequenceScorer::new(self.featurizer, weights)?;
        Ok(loss_augmented_decode(&scorer, &self.features[i], &self.gold[i]))
    }

    fn features(&self, i: usize, output: &Vec<usize>) -> Result<GroupedSparseVector> {
        self.featurizer.joint_feature_map(&self.features[i], output)
    }

    fn gold_features(&self, i: usize) -> &GroupedSparseVector {
        &self.gold_phi[i]
    }

    fn loss(&self, i: usize, output: &Vec<usize>) -> Result<f64> {
        hamming_loss(&self.gold[i], output)
    }
}
