//! Feature templates in the `%x[row,col]` macro language, per-template
//! feature alphabets and token-level observation features.
//!
//! A template file holds one template per line:
//!
//! ```text
//! # comment
//! U00:%x[-1,0]
//! U05:%x[-2,0]/%x[-1,0]/%x[0,0]
//! B
//! ```
//!
//! Each `U` line is an observation template and becomes one feature group.
//! Bigram and trigram templates here combine observations at several
//! relative positions; they are still paired with a single output label. The
//! bare `B` line switches on label-pair transition features.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;

use crate::corpus::{SequenceInstance, Token};
use crate::error::{Error, Result};
use crate::features::{GroupedSparseVector, SparseVec};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TemplateKind {
    Observation,
    Transition,
}

/// `%x[row,col]`: column `col` of the token `row` positions away.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ColumnMacro {
    pub row: isize,
    pub col: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TemplateSpec {
    pub index: String,
    pub kind: TemplateKind,
    pub macros: Vec<ColumnMacro>,
}

/// One non-comment template line split into its index and body. The body is
/// `None` for a bare line without `:`.
#[derive(Clone, Debug)]
pub struct TemplateLine<'a> {
    pub line: usize,
    pub index: &'a str,
    pub body: Option<&'a str>,
}

/// Splits a template file into lines, skipping blanks and `#` comments and
/// rejecting duplicate indices.
pub fn template_lines(source: &str) -> Result<Vec<TemplateLine<'_>>> {
    let mut seen = HashSet::new();
    let mut lines = Vec::new();
    for (k, raw) in source.lines().enumerate() {
        let line = k + 1;
        let text = raw.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let (index, body) = match text.split_once(':') {
            Some((index, body)) => (index.trim(), Some(body.trim())),
            None => (text, None),
        };
        if index.is_empty() {
            return Err(Error::Template {
                line,
                message: "empty template index".into(),
            });
        }
        if !seen.insert(index) {
            return Err(Error::Template {
                line,
                message: format!("duplicate template index '{index}'"),
            });
        }
        lines.push(TemplateLine { line, index, body });
    }
    Ok(lines)
}

fn parse_macro(text: &str) -> std::result::Result<ColumnMacro, String> {
    let inner = text
        .strip_prefix("%x[")
        .and_then(|rest| rest.strip_suffix(']'))
        .ok_or_else(|| format!("malformed macro '{text}', expected %x[row,col]"))?;
    let (row, col) = inner
        .split_once(',')
        .ok_or_else(|| format!("malformed macro '{text}', expected %x[row,col]"))?;
    let row = row
        .trim()
        .parse::<isize>()
        .map_err(|_| format!("row '{}' is not an integer", row.trim()))?;
    let col = col
        .trim()
        .parse::<usize>()
        .map_err(|_| format!("column '{}' is not a non-negative integer", col.trim()))?;
    Ok(ColumnMacro { row, col })
}

/// Parses a sequence template file.
pub fn parse_templates(source: &str) -> Result<Vec<TemplateSpec>> {
    template_lines(source)?
        .into_iter()
        .map(|line| match line.body {
            None if line.index == "B" => Ok(TemplateSpec {
                index: "B".into(),
                kind: TemplateKind::Transition,
                macros: Vec::new(),
            }),
            None => Err(Error::Template {
                line: line.line,
                message: format!("'{}' is neither 'B' nor 'Index:%x[row,col]...'", line.index),
            }),
            Some(body) => {
                if line.index == "B" {
                    return Err(Error::Template {
                        line: line.line,
                        message: "the transition template 'B' takes no macros".into(),
                    });
                }
                let macros = body
                    .split('/')
                    .map(|m| parse_macro(m.trim()))
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|message| Error::Template {
                        line: line.line,
                        message,
                    })?;
                Ok(TemplateSpec {
                    index: line.index.to_owned(),
                    kind: TemplateKind::Observation,
                    macros,
                })
            }
        })
        .collect()
}

/// Checks that every macro column exists in a corpus with `columns`
/// observation columns.
pub fn check_columns(specs: &[TemplateSpec], columns: usize) -> Result<()> {
    for spec in specs {
        if let Some(m) = spec.macros.iter().find(|m| m.col >= columns) {
            return Err(Error::InvalidArgument(format!(
                "template {} reads column {} but the corpus has {columns} observation columns",
                spec.index, m.col
            )));
        }
    }
    Ok(())
}

/// Value of `%x[row,col]` at position `t`, or the boundary sentinel
/// `_B-d` / `_B+d` when the row falls `d` positions past either edge.
pub fn macro_value(tokens: &[Token], t: usize, m: ColumnMacro) -> std::borrow::Cow<'_, str> {
    let pos = t as isize + m.row;
    let l = tokens.len() as isize;
    if pos < 0 {
        format!("_B-{}", -pos).into()
    } else if pos >= l {
        format!("_B+{}", pos - l + 1).into()
    } else {
        tokens[pos as usize].columns[m.col].as_str().into()
    }
}

/// Feature string of an observation template at position `t`.
pub fn instantiate(spec: &TemplateSpec, tokens: &[Token], t: usize) -> String {
    debug_assert_eq!(spec.kind, TemplateKind::Observation);
    let mut out = String::with_capacity(spec.index.len() + 8 * spec.macros.len());
    out.push_str(&spec.index);
    out.push(':');
    for (k, &m) in spec.macros.iter().enumerate() {
        if k > 0 {
            out.push('/');
        }
        out.push_str(&macro_value(tokens, t, m));
    }
    out
}

/// Interning table for the feature strings of one group. Indices are dense
/// and assigned in first-seen order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FeatureAlphabet {
    pub group: String,
    strings: Vec<String>,
    index: HashMap<String, u32>,
    frozen: bool,
}

impl FeatureAlphabet {
    pub fn new(group: impl Into<String>) -> Self {
        FeatureAlphabet {
            group: group.into(),
            ..FeatureAlphabet::default()
        }
    }

    /// Rebuilds a frozen alphabet from strings in index order.
    pub fn from_strings(group: impl Into<String>, strings: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(strings.len());
        for (i, s) in strings.iter().enumerate() {
            if index.insert(s.clone(), i as u32).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate feature string '{s}'")));
            }
        }
        Ok(FeatureAlphabet {
            group: group.into(),
            strings,
            index,
            frozen: true,
        })
    }

    /// Returns the index of `feature`, adding it unless the alphabet is
    /// frozen.
    pub fn intern(&mut self, feature: &str) -> Option<u32> {
        if let Some(&idx) = self.index.get(feature) {
            return Some(idx);
        }
        if self.frozen {
            return None;
        }
        let idx = u32::try_from(self.strings.len()).expect("alphabet exceeds u32 range");
        self.strings.push(feature.to_owned());
        self.index.insert(feature.to_owned(), idx);
        Some(idx)
    }

    pub fn get(&self, feature: &str) -> Option<u32> {
        self.index.get(feature).copied()
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn len(&self) -> usize {
        self.strings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strings.is_empty()
    }

    pub fn strings(&self) -> &[String] {
        &self.strings
    }
}

/// Builds one frozen alphabet per observation template from every feature
/// instantiated anywhere in `corpus`.
pub fn index_corpus(specs: &[TemplateSpec], corpus: &[SequenceInstance]) -> Vec<FeatureAlphabet> {
    let observation: Vec<&TemplateSpec> = specs.iter().filter(|s| s.kind == TemplateKind::Observation).collect();
    // Instantiation is parallel; interning below walks sentences in order so
    // indices follow first-seen order regardless of thread count.
    let instantiated: Vec<Vec<Vec<String>>> = corpus
        .par_iter()
        .map(|inst| {
            observation
                .iter()
                .map(|spec| (0..inst.len()).map(|t| instantiate(spec, &inst.tokens, t)).collect())
                .collect()
        })
        .collect();
    let mut alphabets: Vec<FeatureAlphabet> = observation.iter().map(|s| FeatureAlphabet::new(&s.index)).collect();
    for sentence in &instantiated {
        for (alphabet, features) in alphabets.iter_mut().zip(sentence) {
            for feature in features {
                alphabet.intern(feature);
            }
        }
    }
    for alphabet in &mut alphabets {
        alphabet.freeze();
    }
    alphabets
}

/// Index of each observation group's feature at position `t`, `None` when
/// the feature string was never seen during indexing. `specs` must contain
/// only the observation templates, aligned with `alphabets`.
pub fn extract_token_features(
    specs: &[&TemplateSpec],
    alphabets: &[FeatureAlphabet],
    tokens: &[Token],
    t: usize,
) -> Vec<Option<u32>> {
    specs
        .iter()
        .zip(alphabets)
        .map(|(spec, alphabet)| alphabet.get(&instantiate(spec, tokens, t)))
        .collect()
}

/// Indicator vector form of [`extract_token_features`].
pub fn token_feature_vector(hits: &[Option<u32>]) -> GroupedSparseVector {
    GroupedSparseVector {
        groups: hits
            .iter()
            .map(|hit| match hit {
                Some(idx) => SparseVec::from_unsorted(vec![(*idx, 1.0)]),
                None => SparseVec::new(),
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sentence(words: &[&str]) -> Vec<Token> {
        words.iter().map(|w| Token::new([*w])).collect()
    }

    fn labeled(words: &[&str]) -> SequenceInstance {
        SequenceInstance {
            tokens: sentence(words),
            labels: Some(vec![0; words.len()]),
        }
    }

    #[test]
    fn parses_table_templates() {
        let specs = parse_templates("# seg\nU02:%x[0,0]\nU05:%x[-2,0]/%x[-1,0]/%x[0,0]\n\nB\n").unwrap();
        assert_eq!(specs.len(), 3);
        assert_eq!(specs[0].macros, vec![ColumnMacro { row: 0, col: 0 }]);
        assert_eq!(
            specs[1].macros,
            vec![
                ColumnMacro { row: -2, col: 0 },
                ColumnMacro { row: -1, col: 0 },
                ColumnMacro { row: 0, col: 0 }
            ]
        );
        assert_eq!(specs[2].kind, TemplateKind::Transition);
        assert!(specs[2].macros.is_empty());
    }

    #[test]
    fn rejects_bad_templates() {
        for bad in ["U00:%x[0]", "U00:%x[a,0]", "U00:%x[0,-1]", "U00:%x[0,0]\nU00:%x[1,0]", "U00", "B:%x[0,0]"] {
            assert!(matches!(parse_templates(bad), Err(Error::Template { .. })), "{bad}");
        }
    }

    #[test]
    fn instantiate_with_boundaries() {
        let toks = sentence(&["John", "hit", "ball"]);
        let u01 = &parse_templates("U01:%x[-1,0]").unwrap()[0];
        let u06 = &parse_templates("U06:%x[0,0]/%x[1,0]").unwrap()[0];
        let far = &parse_templates("U09:%x[-2,0]/%x[2,0]").unwrap()[0];
        assert_eq!(instantiate(u01, &toks, 1), "U01:John");
        assert_eq!(instantiate(u01, &toks, 0), "U01:_B-1");
        assert_eq!(instantiate(u06, &toks, 2), "U06:ball/_B+1");
        assert_eq!(instantiate(far, &toks, 1), "U09:_B-1/_B+1");
        assert_eq!(instantiate(far, &toks, 0), "U09:_B-2/ball");
        assert_eq!(instantiate(far, &toks, 2), "U09:John/_B+2");
    }

    #[test]
    fn index_corpus_sizes() {
        let specs = parse_templates("U02:%x[0,0]\nB").unwrap();
        assert_eq!(index_corpus(&specs, &[labeled(&["a"])])[0].len(), 1);

        let one = index_corpus(&specs, &[labeled(&["a", "b"])]);
        let two = index_corpus(&specs, &[labeled(&["a", "b"]), labeled(&["b", "a"])]);
        assert_eq!(one[0].len(), 2);
        assert_eq!(one[0].strings(), two[0].strings());

        let distinct = index_corpus(&specs, &[labeled(&["a", "b", "c"]), labeled(&["d", "e"])]);
        assert_eq!(distinct[0].len(), 5);
        assert!(distinct[0].is_frozen());
    }

    #[test]
    fn frozen_alphabet_does_not_grow() {
        let specs = parse_templates("U00:%x[0,0]\nU01:%x[-1,0]").unwrap();
        let alphabets = index_corpus(&specs, &[labeled(&["a", "b"])]);
        let obs: Vec<&TemplateSpec> = specs.iter().collect();
        let toks = sentence(&["a", "z"]);
        assert_eq!(extract_token_features(&obs, &alphabets, &toks, 0), vec![Some(0), Some(0)]);
        assert_eq!(extract_token_features(&obs, &alphabets, &toks, 1), vec![None, Some(1)]);
        let mut frozen = alphabets[0].clone();
        assert_eq!(frozen.intern("U00:z"), None);
        assert_eq!(frozen.len(), 2);
    }

    #[test]
    fn column_check() {
        let specs = parse_templates("U00:%x[0,1]").unwrap();
        assert!(check_columns(&specs, 2).is_ok());
        assert!(check_columns(&specs, 1).is_err());
    }
}
