//! Edge templates for dependency parsing.
//!
//! Same file syntax as sequence templates, with field selectors in place of
//! `%x` macros:
//!
//! ```text
//! P00:head.FORM/mod.FORM
//! F00:head.POSTAG/head+1.POSTAG/mod-1.POSTAG/mod.POSTAG
//! T00:head.POSTAG/between.POSTAG/mod.POSTAG
//! ```
//!
//! Anchors are `head`, `mod`, `head±1`, `mod±1` and `between`; fields are
//! `FORM`, `LEMMA`, `CPOSTAG` and `POSTAG`. A `between` template emits one
//! feature per distinct value among the words strictly between head and
//! modifier, and nothing for adjacent words. Every feature string carries the
//! attachment direction and the bucketed head–modifier distance.

use std::collections::BTreeSet;

use crate::corpus::{DependencyInstance, Token, CPOSTAG, FORM, LEMMA, POSTAG};
use crate::error::{Error, Result};
use crate::features::{GroupedAccumulator, GroupedSparseVector};
use crate::template::{template_lines, FeatureAlphabet};

pub const ROOT_VALUE: &str = "<root>";

/// Default parse templates: in-between POS trigrams, POS 4-grams around
/// head and modifier, and two-item head/modifier conjunctions.
pub const DEFAULT_PARSE_TEMPLATES: &str = include_str!("../../assets/parse_templates.txt");

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Anchor {
    Head(isize),
    Modifier(isize),
    Between,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FieldSelector {
    pub anchor: Anchor,
    pub column: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeTemplate {
    pub index: String,
    pub selectors: Vec<FieldSelector>,
}

fn parse_selector(text: &str) -> std::result::Result<FieldSelector, String> {
    let (anchor, field) = text
        .split_once('.')
        .ok_or_else(|| format!("malformed selector '{text}', expected anchor.FIELD"))?;
    let column = match field {
        "FORM" => FORM,
        "LEMMA" => LEMMA,
        "CPOSTAG" => CPOSTAG,
        "POSTAG" => POSTAG,
        other => return Err(format!("unknown field '{other}'")),
    };
    let anchor = match anchor {
        "between" => Anchor::Between,
        _ => {
            let (name, offset) = match anchor.find(['+', '-']) {
                Some(pos) => {
                    let offset: isize = anchor[pos..]
                        .parse()
                        .map_err(|_| format!("bad offset in anchor '{anchor}'"))?;
                    (&anchor[..pos], offset)
                }
                None => (anchor, 0),
            };
            match name {
                "head" => Anchor::Head(offset),
                "mod" => Anchor::Modifier(offset),
                other => return Err(format!("unknown anchor '{other}'")),
            }
        }
    };
    Ok(FieldSelector { anchor, column })
}

pub fn parse_edge_templates(source: &str) -> Result<Vec<EdgeTemplate>> {
    template_lines(source)?
        .into_iter()
        .map(|line| {
            let body = line.body.ok_or_else(|| Error::Template {
                line: line.line,
                message: format!("template '{}' has no selectors", line.index),
            })?;
            let selectors = body
                .split('/')
                .map(|s| parse_selector(s.trim()))
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|message| Error::Template {
                    line: line.line,
                    message,
                })?;
            if selectors.iter().filter(|s| s.anchor == Anchor::Between).count() > 1 {
                return Err(Error::Template {
                    line: line.line,
                    message: "at most one 'between' selector per template".into(),
                });
            }
            Ok(EdgeTemplate {
                index: line.index.to_owned(),
                selectors,
            })
        })
        .collect()
}

/// Distance buckets: exact below 5, 5 for [5, 10), 10 from 10 on.
pub fn distance_bucket(distance: usize) -> usize {
    match distance {
        d if d >= 10 => 10,
        d if d >= 5 => 5,
        d => d,
    }
}

/// A sentence with the synthetic root at position 0.
pub struct RootedSentence<'a> {
    tokens: &'a [Token],
}

impl<'a> RootedSentence<'a> {
    pub fn new(tokens: &'a [Token]) -> Self {
        RootedSentence { tokens }
    }

    /// Number of words, excluding the root.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Column value at position `pos` (0 = root), or a boundary sentinel
    /// outside `[0, l]`.
    pub fn value(&self, pos: isize, column: usize) -> std::borrow::Cow<'a, str> {
        let last = self.tokens.len() as isize;
        if pos < 0 {
            format!("_B-{}", -pos).into()
        } else if pos > last {
            format!("_B+{}", pos - last).into()
        } else if pos == 0 {
            ROOT_VALUE.into()
        } else {
            self.tokens[pos as usize - 1].columns[column].as_str().into()
        }
    }
}

/// Feature strings one template emits for the edge `u → v`.
pub fn edge_feature_strings(template: &EdgeTemplate, sentence: &RootedSentence<'_>, u: usize, v: usize) -> Vec<String> {
    let direction = if u < v { 'R' } else { 'L' };
    let bucket = distance_bucket(u.abs_diff(v));
    let prefix = format!("{}:{direction}{bucket}:", template.index);
    let fixed = |between: Option<&str>| {
        let mut out = prefix.clone();
        for (k, sel) in template.selectors.iter().enumerate() {
            if k > 0 {
                out.push('/');
            }
            match sel.anchor {
                Anchor::Head(off) => out.push_str(&sentence.value(u as isize + off, sel.column)),
                Anchor::Modifier(off) => out.push_str(&sentence.value(v as isize + off, sel.column)),
                Anchor::Between => out.push_str(between.expect("between value")),
            }
        }
        out
    };
    match template.selectors.iter().find(|s| s.anchor == Anchor::Between) {
        None => vec![fixed(None)],
        Some(sel) => {
            let (lo, hi) = (u.min(v), u.max(v));
            let values: BTreeSet<_> = (lo + 1..hi).map(|p| sentence.value(p as isize, sel.column)).collect();
            values.iter().map(|b| fixed(Some(b))).collect()
        }
    }
}

/// Edge templates plus their frozen per-group alphabets.
#[derive(Clone, Debug)]
pub struct EdgeFeatureExtractor {
    pub templates: Vec<EdgeTemplate>,
    pub alphabets: Vec<FeatureAlphabet>,
}

/// Per-group feature indices of every candidate edge of one sentence.
#[derive(Clone, Debug)]
pub struct SentenceEdgeFeatures {
    len: usize,
    /// Indexed by `u * (l + 1) + v`; empty for `u == v` and `v == 0`.
    edges: Vec<Vec<Vec<u32>>>,
}

impl SentenceEdgeFeatures {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn edge(&self, u: usize, v: usize) -> &[Vec<u32>] {
        &self.edges[u * (self.len + 1) + v]
    }
}

impl EdgeFeatureExtractor {
    /// Indexes the features of all gold edges in `corpus`, in corpus order.
    pub fn build(templates: Vec<EdgeTemplate>, corpus: &[DependencyInstance]) -> Result<Self> {
        let mut alphabets: Vec<FeatureAlphabet> = templates.iter().map(|t| FeatureAlphabet::new(&t.index)).collect();
        for (i, instance) in corpus.iter().enumerate() {
            let heads = instance
                .heads
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument(format!("training sentence {} has no heads", i + 1)))?;
            let sentence = RootedSentence::new(&instance.tokens);
            for (k, &u) in heads.iter().enumerate() {
                for (template, alphabet) in templates.iter().zip(&mut alphabets) {
                    for feature in edge_feature_strings(template, &sentence, u, k + 1) {
                        alphabet.intern(&feature);
                    }
                }
            }
        }
        for alphabet in &mut alphabets {
            alphabet.freeze();
        }
        Ok(EdgeFeatureExtractor { templates, alphabets })
    }

    pub fn group_dims(&self) -> Vec<usize> {
        self.alphabets.iter().map(FeatureAlphabet::len).collect()
    }

    pub fn group_names(&self) -> Vec<String> {
        self.templates.iter().map(|t| t.index.clone()).collect()
    }

    /// Known feature indices per group for the edge `u → v`.
    pub fn edge_indices(&self, sentence: &RootedSentence<'_>, u: usize, v: usize) -> Vec<Vec<u32>> {
        self.templates
            .iter()
            .zip(&self.alphabets)
            .map(|(template, alphabet)| {
                let mut idx: Vec<u32> = edge_feature_strings(template, sentence, u, v)
                    .iter()
                    .filter_map(|f| alphabet.get(f))
                    .collect();
                idx.sort_unstable();
                idx
            })
            .collect()
    }

    /// Indicator vector `φ̄(u, v, x)`.
    pub fn edge_feature_map(&self, tokens: &[Token], u: usize, v: usize) -> GroupedSparseVector {
        let sentence = RootedSentence::new(tokens);
        let mut acc = GroupedAccumulator::new(self.templates.len());
        for (group, indices) in self.edge_indices(&sentence, u, v).into_iter().enumerate() {
            for idx in indices {
                acc.add(group, idx, 1.0);
            }
        }
        acc.finish()
    }

    pub fn sentence_features(&self, tokens: &[Token]) -> SentenceEdgeFeatures {
        let l = tokens.len();
        let sentence = RootedSentence::new(tokens);
        let mut edges = vec![Vec::new(); (l + 1) * (l + 1)];
        for u in 0..=l {
            for v in 1..=l {
                if u != v {
                    edges[u * (l + 1) + v] = self.edge_indices(&sentence, u, v);
                }
            }
        }
        SentenceEdgeFeatures { len: l, edges }
    }

    /// `Φ(x, T) = Σ_{(u,v) ∈ T} φ̄(u, v, x)` from cached edge features.
    pub fn tree_feature_map(&self, cache: &SentenceEdgeFeatures, heads: &[usize]) -> Result<GroupedSparseVector> {
        crate::corpus::check_tree(heads).map_err(|message| Error::InvalidArgument(format!("invalid tree: {message}")))?;
        if heads.len() != cache.len() {
            return Err(Error::LengthMismatch(format!("{} heads for {} words", heads.len(), cache.len())));
        }
        let mut acc = GroupedAccumulator::new(self.templates.len());
        for (k, &u) in heads.iter().enumerate() {
            for (group, indices) in cache.edge(u, k + 1).iter().enumerate() {
                for &idx in indices {
                    acc.add(group, idx, 1.0);
                }
            }
        }
        Ok(acc.finish())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sentence(words: &[&str]) -> Vec<Token> {
        words.iter().map(|w| Token::new([*w, *w, "X", "X"])).collect()
    }

    #[test]
    fn buckets() {
        let got: Vec<usize> = [1, 2, 3, 4, 5, 7, 9, 10, 12, 40].iter().map(|&d| distance_bucket(d)).collect();
        assert_eq!(got, vec![1, 2, 3, 4, 5, 5, 5, 10, 10, 10]);
    }

    #[test]
    fn parses_selectors() {
        let t = parse_edge_templates("F00:head-1.POSTAG/mod+1.CPOSTAG/between.LEMMA").unwrap();
        assert_eq!(
            t[0].selectors,
            vec![
                FieldSelector { anchor: Anchor::Head(-1), column: POSTAG },
                FieldSelector { anchor: Anchor::Modifier(1), column: CPOSTAG },
                FieldSelector { anchor: Anchor::Between, column: LEMMA },
            ]
        );
        for bad in ["X:head.FOO", "X:tail.FORM", "X:head", "X", "X:between.FORM/between.POSTAG", "X:head+a.FORM"] {
            assert!(parse_edge_templates(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn default_templates_parse() {
        let t = parse_edge_templates(DEFAULT_PARSE_TEMPLATES).unwrap();
        assert!(t.len() >= 10);
    }

    #[test]
    fn adjacent_between_is_empty() {
        let toks = sentence(&["a", "b", "c"]);
        let t = &parse_edge_templates("T:head.POSTAG/between.POSTAG/mod.POSTAG").unwrap()[0];
        let s = RootedSentence::new(&toks);
        assert!(edge_feature_strings(t, &s, 1, 2).is_empty());
        assert_eq!(edge_feature_strings(t, &s, 0, 3), vec!["T:R3:<root>/X/X"]);
    }

    #[test]
    fn between_emits_distinct_values() {
        let toks: Vec<Token> = ["a", "b", "c", "d", "e"]
            .iter()
            .zip(["N", "V", "N", "D", "N"])
            .map(|(w, p)| Token::new([*w, *w, p, p]))
            .collect();
        let t = &parse_edge_templates("T:head.POSTAG/between.POSTAG/mod.POSTAG").unwrap()[0];
        let s = RootedSentence::new(&toks);
        assert_eq!(edge_feature_strings(t, &s, 5, 1), vec!["T:L4:N/D/N", "T:L4:N/N/N", "T:L4:N/V/N"]);
    }

    #[test]
    fn word_pair_fires_on_its_edge_only() {
        let toks = sentence(&["John", "hit", "the", "ball", "with", "the", "bat"]);
        let t = parse_edge_templates("P00:head.FORM/mod.FORM").unwrap();
        let corpus = vec![DependencyInstance {
            tokens: toks.clone(),
            heads: Some(vec![2, 0, 4, 2, 2, 7, 5]),
            extra: Vec::new(),
        }];
        let ex = EdgeFeatureExtractor::build(t, &corpus).unwrap();
        let target = ex.alphabets[0].get("P00:R2:hit/ball").expect("indexed from the gold edge");
        for u in 0..=7 {
            for v in 1..=7 {
                if u == v {
                    continue;
                }
                let phi = ex.edge_feature_map(&toks, u, v);
                assert_eq!(phi.groups[0].get(target) == 1.0, (u, v) == (2, 4), "edge {u}->{v}");
            }
        }
    }

    #[test]
    fn boundary_neighbours() {
        let toks = sentence(&["a"]);
        let s = RootedSentence::new(&toks);
        let t = &parse_edge_templates("F:head-1.FORM/head.FORM/mod.FORM/mod+1.FORM").unwrap()[0];
        assert_eq!(edge_feature_strings(t, &s, 0, 1), vec!["F:R1:_B-1/<root>/a/_B+1"]);
    }
}
