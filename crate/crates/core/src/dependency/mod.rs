//! Edge-factored dependency parsing.

mod decode;
mod features;

pub use decode::{
    cle_decode, decode_single_root, decode_tree, eisner_decode, is_projective, DecoderKind, EdgeScoreMatrix,
};
pub use features::{
    distance_bucket, edge_feature_strings, parse_edge_templates, Anchor, EdgeFeatureExtractor, EdgeTemplate,
    FieldSelector, RootedSentence, SentenceEdgeFeatures, DEFAULT_PARSE_TEMPLATES, ROOT_VALUE,
};

use crate::corpus::DependencyInstance;
use crate::error::{Error, Result};
use crate::features::{GroupWeights, GroupedSparseVector};
use crate::solver::StructuredTask;

/// Number of tokens whose head differs from gold.
pub fn parent_loss(gold: &[usize], predicted: &[usize]) -> Result<f64> {
    if gold.len() != predicted.len() {
        return Err(Error::LengthMismatch(format!(
            "gold tree has {} tokens, predicted {}",
            gold.len(),
            predicted.len()
        )));
    }
    Ok(gold.iter().zip(predicted).filter(|(g, p)| g != p).count() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct DecodeOptions {
    pub decoder: DecoderKind,
    pub single_root: bool,
}

impl DecodeOptions {
    pub fn decode(&self, scores: &EdgeScoreMatrix) -> Vec<usize> {
        if self.single_root {
            decode_single_root(scores, self.decoder)
        } else {
            decode_tree(scores, self.decoder)
        }
    }
}

/// Edge scores `⟨w, φ̄(u, v, x)⟩` for one sentence.
pub fn score_edges(cache: &SentenceEdgeFeatures, weights: &GroupWeights) -> EdgeScoreMatrix {
    EdgeScoreMatrix::from_fn(cache.len(), |u, v| {
        cache
            .edge(u, v)
            .iter()
            .zip(&weights.groups)
            .map(|(idx, w)| idx.iter().map(|&i| w[i as usize]).sum::<f64>())
            .sum()
    })
}

/// `argmax_T Δ(T_gold, T) + s(T)` and the value it attains.
pub fn loss_augmented_tree_decode(scores: &EdgeScoreMatrix, gold: &[usize], options: DecodeOptions) -> (Vec<usize>, f64) {
    let mut augmented = scores.clone();
    for (k, &g) in gold.iter().enumerate() {
        let v = k + 1;
        for u in 0..=scores.len() {
            if u != v && u != g {
                augmented.set(u, v, scores.get(u, v) + 1.0);
            }
        }
    }
    let heads = options.decode(&augmented);
    let value = augmented.tree_score(&heads);
    (heads, value)
}

/// Trained parser: extractor plus weights.
#[derive(Clone, Debug)]
pub struct DependencyParser<'a> {
    pub extractor: &'a EdgeFeatureExtractor,
    pub weights: &'a GroupWeights,
    pub options: DecodeOptions,
}

impl DependencyParser<'_> {
    pub fn parse(&self, instance: &DependencyInstance) -> Vec<usize> {
        let cache = self.extractor.sentence_features(&instance.tokens);
        self.options.decode(&score_edges(&cache, self.weights))
    }
}

/// Training corpus with cached edge features for every sentence.
pub struct DependencyTask<'a> {
    extractor: &'a EdgeFeatureExtractor,
    options: DecodeOptions,
    caches: Vec<SentenceEdgeFeatures>,
    gold: Vec<Vec<usize>>,
    gold_phi: Vec<GroupedSparseVector>,
}

impl<'a> DependencyTask<'a> {
    pub fn new(extractor: &'a EdgeFeatureExtractor, corpus: &[DependencyInstance], options: DecodeOptions) -> Result<Self> {
        use rayon::prelude::*;
        let gold = corpus
            .iter()
            .enumerate()
            .map(|(i, inst)| {
                inst.heads
                    .clone()
                    .ok_or_else(|| Error::InvalidArgument(format!("training sentence {} has no heads", i + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        let caches: Vec<_> = corpus.par_iter().map(|inst| extractor.sentence_features(&inst.tokens)).collect();
        let gold_phi = caches
            .iter()
            .zip(&gold)
            .map(|(cache, heads)| extractor.tree_feature_map(cache, heads))
            .collect::<Result<Vec<_>>>()?;
        Ok(DependencyTask {
            extractor,
            options,
            caches,
            gold,
            gold_phi,
        })
    }

    pub fn gold(&self, i: usize) -> &[usize] {
        &self.gold[i]
    }

    pub fn edge_features(&self, i: usize) -> &SentenceEdgeFeatures {
        &self.caches[i]
    }
}

impl StructuredTask for DependencyTask<'_> {
    type Output = Vec<usize>;

    fn num_instances(&self) -> usize {
        self.gold.len()
    }

    fn group_dims(&self) -> Vec<usize> {
        self.extractor.group_dims()
    }

    fn loss_augmented(&self, i: usize, weights: &GroupWeights) -> Result<(Vec<usize>, f64)> {
        let scores = score_edges(&self.caches[i], weights);
        Ok(loss_augmented_tree_decode(&scores, &self.gold[i], self.options))
    }

    fn features(&self, i: usize, output: &Vec<usize>) -> Result<GroupedSparseVector> {
        self.extractor.tree_feature_map(&self.caches[i], output)
    }

    fn gold_features(&self, i: usize) -> &GroupedSparseVector {
        &self.gold_phi[i]
    }

    fn loss(&self, i: usize, output: &Vec<usize>) -> Result<f64> {
        parent_loss(&self.gold[i], output)
    }
}
