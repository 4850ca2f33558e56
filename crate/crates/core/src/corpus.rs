//! Column-token corpora, CoNLL-X treebanks and label encodings.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::error::{Error, Result};

/// Column values of one token. Column 0 is the surface form.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Token {
    pub columns: Vec<String>,
}

impl Token {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Token {
            columns: columns.into_iter().map(Into::into).collect(),
        }
    }

    pub fn form(&self) -> &str {
        &self.columns[0]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceInstance {
    pub tokens: Vec<Token>,
    /// Gold label ids, absent for prediction input.
    pub labels: Option<Vec<usize>>,
}

impl SequenceInstance {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// CoNLL-X fields that are carried through but never interpreted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConllExtra {
    pub feats: String,
    pub deprel: String,
    pub phead: String,
    pub pdeprel: String,
}

impl Default for ConllExtra {
    fn default() -> Self {
        ConllExtra {
            feats: "_".into(),
            deprel: "_".into(),
            phead: "_".into(),
            pdeprel: "_".into(),
        }
    }
}

/// A sentence without the artificial root. Token columns are FORM, LEMMA,
/// CPOSTAG, POSTAG in that order.
#[derive(Clone, Debug, PartialEq)]
pub struct DependencyInstance {
    pub tokens: Vec<Token>,
    /// `heads[v - 1]` is the head of token `v`; 0 denotes the root.
    pub heads: Option<Vec<usize>>,
    pub extra: Vec<ConllExtra>,
}

impl DependencyInstance {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

pub const FORM: usize = 0;
pub const LEMMA: usize = 1;
pub const CPOSTAG: usize = 2;
pub const POSTAG: usize = 3;

/// Checks that `heads` encodes an arborescence rooted at 0: every head is in
/// range, no token heads itself and every token reaches the root.
pub fn check_tree(heads: &[usize]) -> std::result::Result<(), String> {
    let l = heads.len();
    for (i, &h) in heads.iter().enumerate() {
        let v = i + 1;
        if h > l {
            return Err(format!("head {h} of token {v} out of range [0, {l}]"));
        }
        if h == v {
            return Err(format!("token {v} is its own head"));
        }
    }
    // 0 = unvisited, 1 = on current path, 2 = reaches root
    let mut state = vec![0u8; l + 1];
    state[0] = 2;
    for start in 1..=l {
        let mut path = Vec::new();
        let mut v = start;
        while state[v] == 0 {
            state[v] = 1;
            path.push(v);
            v = heads[v - 1];
        }
        if state[v] == 1 {
            return Err(format!("cycle through token {v}"));
        }
        for u in path {
            state[u] = 2;
        }
    }
    Ok(())
}

/// Bidirectional label string ↔ id map in first-seen order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LabelTable {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelTable {
    pub fn new() -> Self {
        LabelTable::default()
    }

    pub fn from_names<S: AsRef<str>>(names: impl IntoIterator<Item = S>) -> Self {
        let mut table = LabelTable::new();
        for name in names {
            table.intern(name.as_ref());
        }
        table
    }

    pub fn intern(&mut self, name: &str) -> usize {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len();
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelScheme {
    /// Word segmentation with B (begin), I (inner) and E (end) per character.
    Bie,
    /// Entity phrases with B-TYPE, I-TYPE and O.
    Bio,
    /// Opaque labels; only token accuracy is meaningful.
    Raw,
}

impl FromStr for LabelScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bie" => Ok(LabelScheme::Bie),
            "bio" => Ok(LabelScheme::Bio),
            "raw" => Ok(LabelScheme::Raw),
            other => Err(Error::InvalidArgument(format!("unknown label scheme '{other}'"))),
        }
    }
}

impl fmt::Display for LabelScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelScheme::Bie => "bie",
            LabelScheme::Bio => "bio",
            LabelScheme::Raw => "raw",
        })
    }
}

/// A labeled span `[start, end)` of token positions, with an entity type for
/// BIO phrases (empty for segmentation words).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub kind: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Clone, Debug)]
pub struct LabelCodec {
    pub scheme: LabelScheme,
    pub table: LabelTable,
}

impl LabelCodec {
    pub fn new(scheme: LabelScheme, table: LabelTable) -> Self {
        LabelCodec { scheme, table }
    }

    fn names<'a>(&'a self, ids: &[usize]) -> Result<Vec<&'a str>> {
        ids.iter()
            .map(|&id| {
                self.table.name(id).ok_or(Error::LabelOutOfRange {
                    label: id,
                    size: self.table.len(),
                })
            })
            .collect()
    }

    /// Decodes label ids into spans according to the scheme. For
    /// [`LabelScheme::Raw`] every token is its own span.
    pub fn decode(&self, ids: &[usize]) -> Result<Vec<Span>> {
        let names = self.names(ids)?;
        Ok(match self.scheme {
            LabelScheme::Bie => bie_segments(&names),
            LabelScheme::Bio => bio_phrases(&names),
            LabelScheme::Raw => names
                .iter()
                .enumerate()
                .map(|(t, n)| Span {
                    kind: (*n).to_owned(),
                    start: t,
                    end: t + 1,
                })
                .collect(),
        })
    }

    /// Encodes a segmentation, given as word lengths, into BIE label ids.
    /// Missing B/I/E entries are added to the table.
    pub fn encode_segmentation(&mut self, word_lengths: &[usize]) -> Vec<usize> {
        let (b, i, e) = (self.table.intern("B"), self.table.intern("I"), self.table.intern("E"));
        let mut ids = Vec::new();
        for &len in word_lengths {
            match len {
                0 => {}
                1 => ids.push(b),
                _ => {
                    ids.push(b);
                    ids.extend(std::iter::repeat_n(i, len - 2));
                    ids.push(e);
                }
            }
        }
        ids
    }
}

/// Segments a B/I/E character tagging into words.
///
/// A word starts at position 0, at every `B` (or `S`), and right after an
/// `E` (or `S`). Anything else continues the current word, so an ill-formed
/// transition such as `I` after `E` starts a new word at that character. The
/// spans always partition `[0, l)`.
pub fn bie_segments(labels: &[&str]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut start = 0;
    for t in 0..labels.len() {
        let opens = t == 0 || matches!(labels[t], "B" | "S") || matches!(labels[t - 1], "E" | "S");
        if opens && t > 0 {
            spans.push(Span {
                kind: String::new(),
                start,
                end: t,
            });
            start = t;
        }
    }
    if !labels.is_empty() {
        spans.push(Span {
            kind: String::new(),
            start,
            end: labels.len(),
        });
    }
    spans
}

/// True when a B/I/E tagging is exactly what [`LabelCodec::encode_segmentation`]
/// produces for some segmentation: `(B | B I* E)*`.
pub fn bie_well_formed(labels: &[&str]) -> bool {
    let mut inside = false;
    for &label in labels {
        match (label, inside) {
            ("B", false) => inside = true,
            ("B", true) => {}
            ("I", true) => {}
            ("E", true) => inside = false,
            _ => return false,
        }
    }
    // A trailing "B" is a one-character word; a trailing "B I" is not closed.
    !inside || labels.last() == Some(&"B")
}

fn split_bio(label: &str) -> (char, &str) {
    if label == "O" {
        return ('O', "");
    }
    match label.split_once('-') {
        Some((prefix, kind)) if prefix == "B" || prefix == "I" => (prefix.chars().next().unwrap(), kind),
        _ => match label {
            "B" => ('B', ""),
            "I" => ('I', ""),
            _ => ('O', ""),
        },
    }
}

/// Extracts typed phrases from a BIO tagging. An `I-X` that does not continue
/// a phrase of type `X` opens a new phrase.
pub fn bio_phrases(labels: &[&str]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut open: Option<(String, usize)> = None;
    for (t, label) in labels.iter().enumerate() {
        let (prefix, kind) = split_bio(label);
        let continues = prefix == 'I' && matches!(&open, Some((k, _)) if k == kind);
        if continues {
            continue;
        }
        if let Some((k, start)) = open.take() {
            spans.push(Span { kind: k, start, end: t });
        }
        if prefix != 'O' {
            open = Some((kind.to_owned(), t));
        }
    }
    if let Some((kind, start)) = open {
        spans.push(Span {
            kind,
            start,
            end: labels.len(),
        });
    }
    spans
}

/// Reads whitespace-separated column sentences. Blank lines separate
/// sentences; every token must have `expected_columns` columns (inferred
/// from the first token when `None`).
pub fn read_column_sentences<R: BufRead>(
    reader: R,
    expected_columns: Option<usize>,
) -> Result<Vec<Vec<Vec<String>>>> {
    let mut sentences = Vec::new();
    let mut current: Vec<Vec<String>> = Vec::new();
    let mut columns = expected_columns;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let fields: Vec<String> = line.split_whitespace().map(str::to_owned).collect();
        if fields.is_empty() {
            if !current.is_empty() {
                sentences.push(std::mem::take(&mut current));
            }
            continue;
        }
        let expected = *columns.get_or_insert(fields.len());
        if fields.len() != expected {
            return Err(Error::Format {
                line: lineno + 1,
                message: format!("expected {expected} columns, found {}", fields.len()),
            });
        }
        current.push(fields);
    }
    if !current.is_empty() {
        sentences.push(current);
    }
    Ok(sentences)
}

/// Reads a labeled sequence corpus. The last of `expected_columns` columns is
/// the gold label; labels are interned into a fresh table in first-seen order.
pub fn read_sequence_corpus<R: BufRead>(
    reader: R,
    expected_columns: usize,
) -> Result<(Vec<SequenceInstance>, LabelTable)> {
    let mut table = LabelTable::new();
    let instances = read_sequence_corpus_into(reader, expected_columns, &mut table)?;
    Ok((instances, table))
}

/// Like [`read_sequence_corpus`], extending an existing label table.
pub fn read_sequence_corpus_into<R: BufRead>(
    reader: R,
    expected_columns: usize,
    table: &mut LabelTable,
) -> Result<Vec<SequenceInstance>> {
    if expected_columns < 2 {
        return Err(Error::InvalidArgument(
            "a labeled corpus needs at least one observation column and a label column".into(),
        ));
    }
    let sentences = read_column_sentences(reader, Some(expected_columns))?;
    Ok(sentences
        .into_iter()
        .map(|rows| {
            let mut tokens = Vec::with_capacity(rows.len());
            let mut labels = Vec::with_capacity(rows.len());
            for mut row in rows {
                let label = row.pop().expect("column count checked");
                labels.push(table.intern(&label));
                tokens.push(Token { columns: row });
            }
            SequenceInstance {
                tokens,
                labels: Some(labels),
            }
        })
        .collect())
}

/// Reads a sequence corpus without a label column.
pub fn read_unlabeled_sequences<R: BufRead>(
    reader: R,
    expected_columns: usize,
) -> Result<Vec<SequenceInstance>> {
    let sentences = read_column_sentences(reader, Some(expected_columns))?;
    Ok(sentences
        .into_iter()
        .map(|rows| SequenceInstance {
            tokens: rows.into_iter().map(|columns| Token { columns }).collect(),
            labels: None,
        })
        .collect())
}

/// Writes instances with single-space separators, the label (when present)
/// as the last column and a blank line after every sentence.
pub fn write_sequence_corpus<W: Write>(
    mut writer: W,
    instances: &[SequenceInstance],
    table: &LabelTable,
) -> Result<()> {
    for instance in instances {
        for (t, token) in instance.tokens.iter().enumerate() {
            writer.write_all(token.columns.join(" ").as_bytes())?;
            if let Some(labels) = &instance.labels {
                let name = table.name(labels[t]).ok_or(Error::LabelOutOfRange {
                    label: labels[t],
                    size: table.len(),
                })?;
                write!(writer, " {name}")?;
            }
            writeln!(writer)?;
        }
        writeln!(writer)?;
    }
    Ok(())
}

/// Reads a CoNLL-X treebank. HEAD may be `_` for every token of a sentence
/// (prediction input); otherwise it must form a tree.
pub fn read_dependency_corpus<R: BufRead>(reader: R) -> Result<Vec<DependencyInstance>> {
    let mut instances = Vec::new();
    let mut rows: Vec<(usize, Vec<String>)> = Vec::new();
    let mut lines = reader.lines();
    let mut lineno = 0;
    loop {
        let line = lines.next().transpose()?;
        lineno += 1;
        match line.as_deref().map(|l| l.trim_end_matches('\r')) {
            Some(line) if !line.trim().is_empty() => {
                let fields: Vec<String> = line.split('\t').map(str::to_owned).collect();
                if fields.len() != 10 {
                    return Err(Error::Format {
                        line: lineno,
                        message: format!("expected 10 tab-separated fields, found {}", fields.len()),
                    });
                }
                if fields.iter().any(String::is_empty) {
                    return Err(Error::Format {
                        line: lineno,
                        message: "empty field (use '_' for missing values)".into(),
                    });
                }
                rows.push((lineno, fields));
            }
            other => {
                if !rows.is_empty() {
                    let sentence = instances.len() + 1;
                    instances.push(conll_sentence(sentence, std::mem::take(&mut rows))?);
                }
                if other.is_none() {
                    break;
                }
            }
        }
    }
    Ok(instances)
}

fn conll_sentence(sentence: usize, rows: Vec<(usize, Vec<String>)>) -> Result<DependencyInstance> {
    let l = rows.len();
    let mut tokens = Vec::with_capacity(l);
    let mut extra = Vec::with_capacity(l);
    let mut heads = Vec::with_capacity(l);
    let mut missing_heads = 0;
    for (k, (lineno, f)) in rows.into_iter().enumerate() {
        let id: usize = f[0].parse().map_err(|_| Error::Format {
            line: lineno,
            message: format!("ID '{}' is not an integer", f[0]),
        })?;
        if id != k + 1 {
            return Err(Error::Format {
                line: lineno,
                message: format!("expected token ID {}, found {id}", k + 1),
            });
        }
        if f[6] == "_" {
            missing_heads += 1;
        } else {
            let head: usize = f[6].parse().map_err(|_| Error::Format {
                line: lineno,
                message: format!("HEAD '{}' is not an integer", f[6]),
            })?;
            if head > l {
                return Err(Error::Format {
                    line: lineno,
                    message: format!("HEAD {head} out of range [0, {l}]"),
                });
            }
            heads.push(head);
        }
        tokens.push(Token {
            columns: vec![f[1].clone(), f[2].clone(), f[3].clone(), f[4].clone()],
        });
        extra.push(ConllExtra {
            feats: f[5].clone(),
            deprel: f[7].clone(),
            phead: f[8].clone(),
            pdeprel: f[9].clone(),
        });
    }
    let heads = match missing_heads {
        0 => {
            check_tree(&heads).map_err(|message| Error::Tree { sentence, message })?;
            Some(heads)
        }
        n if n == l => None,
        _ => {
            return Err(Error::Tree {
                sentence,
                message: "HEAD missing for some but not all tokens".into(),
            })
        }
    };
    Ok(DependencyInstance { tokens, heads, extra })
}

/// Writes CoNLL-X rows. `heads` overrides the instance heads (used for
/// predictions); a missing head is written as `_`.
pub fn write_dependency_corpus<W: Write>(
    mut writer: W,
    instances: &[DependencyInstance],
    heads: Option<&[Vec<usize>]>,
) -> Result<()> {
    for (i, instance) in instances.iter().enumerate() {
        let sentence_heads = match heads {
            Some(all) => Some(&all[i]),
            None => instance.heads.as_ref(),
        };
        for (k, token) in instance.tokens.iter().enumerate() {
            let default_extra = ConllExtra::default();
            let x = instance.extra.get(k).unwrap_or(&default_extra);
            let head = sentence_heads.map_or_else(|| "_".to_owned(), |h| h[k].to_string());
            let c = &token.columns;
            writeln!(
                writer,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                k + 1,
                c[FORM],
                c[LEMMA],
                c[CPOSTAG],
                c[POSTAG],
                x.feats,
                head,
                x.deprel,
                x.phead,
                x.pdeprel
            )?;
        }
        writeln!(writer)?;
    }
    Ok(())
}
