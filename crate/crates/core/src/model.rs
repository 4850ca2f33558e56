//! Trained models and their on-disk container.
//!
//! A model file is a short text header followed by a binary payload:
//!
//! ```text
//! mtl-model 1
//! task=sequence
//! created=1760000000
//! groups=6
//! payload_len=123456
//! payload_sha256=…
//!
//! <payload>
//! ```
//!
//! The first line carries the format version. Everything a decoder needs
//! lives in the payload, which is little-endian and length-prefixed. The
//! checksum covers the payload only, so the `created` field never affects it.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Read, Write};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::corpus::{LabelCodec, LabelScheme, LabelTable};
use crate::dependency::{parse_edge_templates, DecodeOptions, DecoderKind, EdgeFeatureExtractor};
use crate::error::{Error, Result};
use crate::features::GroupWeights;
use crate::sequence::SequenceFeaturizer;
use crate::template::{parse_templates, FeatureAlphabet};

pub const MAGIC: &str = "mtl-model";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskKind {
    Sequence,
    DependencyProjective,
    DependencyNonProjective,
}

impl TaskKind {
    pub fn is_dependency(self) -> bool {
        !matches!(self, TaskKind::Sequence)
    }

    pub fn decoder(self) -> Option<DecoderKind> {
        match self {
            TaskKind::Sequence => None,
            TaskKind::DependencyProjective => Some(DecoderKind::Projective),
            TaskKind::DependencyNonProjective => Some(DecoderKind::NonProjective),
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Sequence => "sequence",
            TaskKind::DependencyProjective => "dependency-projective",
            TaskKind::DependencyNonProjective => "dependency-nonprojective",
        })
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequence" => Ok(TaskKind::Sequence),
            "dependency-projective" => Ok(TaskKind::DependencyProjective),
            "dependency-nonprojective" => Ok(TaskKind::DependencyNonProjective),
            other => Err(Error::Model(format!("unknown task kind '{other}'"))),
        }
    }
}

/// A trained, self-contained model.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub task: TaskKind,
    /// Template file contents, verbatim.
    pub templates: String,
    /// Label names in id order (sequence task only).
    pub labels: Vec<String>,
    pub scheme: LabelScheme,
    /// Number of input columns the templates were checked against.
    pub columns: usize,
    pub single_root: bool,
    pub group_names: Vec<String>,
    /// Feature strings per group, in index order. Empty for the transition
    /// group.
    pub alphabets: Vec<Vec<String>>,
    pub mu: Vec<f64>,
    pub weights: GroupWeights,
    /// Free-form training summary (iterations, final gap, halt reason, ...).
    pub diagnostics: BTreeMap<String, String>,
}

impl Model {
    pub fn from_sequence(
        templates: &str,
        featurizer: &SequenceFeaturizer,
        codec: &LabelCodec,
        columns: usize,
        mu: Vec<f64>,
        weights: GroupWeights,
        diagnostics: BTreeMap<String, String>,
    ) -> Self {
        let mut alphabets: Vec<Vec<String>> = featurizer.alphabets.iter().map(|a| a.strings().to_vec()).collect();
        if featurizer.has_transitions() {
            alphabets.push(Vec::new());
        }
        Model {
            task: TaskKind::Sequence,
            templates: templates.to_owned(),
            labels: codec.table.names().to_vec(),
            scheme: codec.scheme,
            columns,
            single_root: false,
            group_names: featurizer.group_names(),
            alphabets,
            mu,
            weights,
            diagnostics,
        }
    }

    pub fn from_dependency(
        templates: &str,
        extractor: &EdgeFeatureExtractor,
        options: DecodeOptions,
        mu: Vec<f64>,
        weights: GroupWeights,
        diagnostics: BTreeMap<String, String>,
    ) -> Self {
        Model {
            task: match options.decoder {
                DecoderKind::Projective => TaskKind::DependencyProjective,
                DecoderKind::NonProjective => TaskKind::DependencyNonProjective,
            },
            templates: templates.to_owned(),
            labels: Vec::new(),
            scheme: LabelScheme::Raw,
            columns: 4,
            single_root: options.single_root,
            group_names: extractor.group_names(),
            alphabets: extractor.alphabets.iter().map(|a| a.strings().to_vec()).collect(),
            mu,
            weights,
            diagnostics,
        }
    }

    pub fn num_groups(&self) -> usize {
        self.group_names.len()
    }

    pub fn codec(&self) -> LabelCodec {
        LabelCodec {
            scheme: self.scheme,
            table: LabelTable::from_names(&self.labels),
        }
    }

    pub fn sequence_featurizer(&self) -> Result<SequenceFeaturizer> {
        if self.task != TaskKind::Sequence {
            return Err(Error::Model(format!("model is for {}, not sequence labeling", self.task)));
        }
        let specs = parse_templates(&self.templates)?;
        let observation: Vec<_> = specs
            .iter()
            .filter(|s| s.kind == crate::template::TemplateKind::Observation)
            .collect();
        let alphabets = observation
            .iter()
            .zip(&self.alphabets)
            .map(|(spec, strings)| FeatureAlphabet::from_strings(spec.index.clone(), strings.clone()))
            .collect::<Result<Vec<_>>>()?;
        let featurizer = SequenceFeaturizer {
            specs,
            alphabets,
            num_labels: self.labels.len(),
        };
        self.check_dims(&featurizer.group_dims())?;
        Ok(featurizer)
    }

    pub fn edge_extractor(&self) -> Result<EdgeFeatureExtractor> {
        if !self.task.is_dependency() {
            return Err(Error::Model("model is for sequence labeling, not dependency parsing".into()));
        }
        let templates = parse_edge_templates(&self.templates)?;
        let alphabets = templates
            .iter()
            .zip(&self.alphabets)
            .map(|(t, strings)| FeatureAlphabet::from_strings(t.index.clone(), strings.clone()))
            .collect::<Result<Vec<_>>>()?;
        let extractor = EdgeFeatureExtractor { templates, alphabets };
        self.check_dims(&extractor.group_dims())?;
        Ok(extractor)
    }

    pub fn decode_options(&self) -> Result<DecodeOptions> {
        let decoder = self
            .task
            .decoder()
            .ok_or_else(|| Error::Model("model is for sequence labeling, not dependency parsing".into()))?;
        Ok(DecodeOptions {
            decoder,
            single_root: self.single_root,
        })
    }

    fn check_dims(&self, expected: &[usize]) -> Result<()> {
        if self.weights.dims() != expected || self.mu.len() != expected.len() {
            return Err(Error::Model(format!(
                "weight blocks {:?} do not match templates {:?}",
                self.weights.dims(),
                expected
            )));
        }
        Ok(())
    }

    /// Binary payload; identical models give identical bytes.
    pub fn payload(&self) -> Vec<u8> {
        let mut out = Vec::new();
        put_str(&mut out, &self.task.to_string());
        put_str(&mut out, &self.templates);
        put_str(&mut out, &self.scheme.to_string());
        put_u64(&mut out, self.columns as u64);
        out.push(u8::from(self.single_root));
        put_u64(&mut out, self.labels.len() as u64);
        for label in &self.labels {
            put_str(&mut out, label);
        }
        put_u64(&mut out, self.group_names.len() as u64);
        for j in 0..self.group_names.len() {
            put_str(&mut out, &self.group_names[j]);
            put_f64(&mut out, self.mu[j]);
            put_u64(&mut out, self.alphabets[j].len() as u64);
            for s in &self.alphabets[j] {
                put_str(&mut out, s);
            }
            put_u64(&mut out, self.weights.groups[j].len() as u64);
            for &w in &self.weights.groups[j] {
                put_f64(&mut out, w);
            }
        }
        put_u64(&mut out, self.diagnostics.len() as u64);
        for (k, v) in &self.diagnostics {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        out
    }

    pub fn from_payload(bytes: &[u8]) -> Result<Self> {
        let mut r = PayloadReader { bytes, pos: 0 };
        let task: TaskKind = r.string()?.parse()?;
        let templates = r.string()?;
        let scheme: LabelScheme = r.string()?.parse().map_err(|e: Error| Error::Model(e.to_string()))?;
        let columns = r.count()?;
        let single_root = match r.byte()? {
            0 => false,
            1 => true,
            b => return Err(Error::Model(format!("bad flag byte {b}"))),
        };
        let labels = (0..r.count()?).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
        let m = r.count()?;
        let mut group_names = Vec::with_capacity(m);
        let mut mu = Vec::with_capacity(m);
        let mut alphabets = Vec::with_capacity(m);
        let mut groups = Vec::with_capacity(m);
        for _ in 0..m {
            group_names.push(r.string()?);
            mu.push(r.f64()?);
            alphabets.push((0..r.count()?).map(|_| r.string()).collect::<Result<Vec<_>>>()?);
            groups.push((0..r.count()?).map(|_| r.f64()).collect::<Result<Vec<_>>>()?);
        }
        let mut diagnostics = BTreeMap::new();
        for _ in 0..r.count()? {
            let k = r.string()?;
            diagnostics.insert(k, r.string()?);
        }
        if r.pos != bytes.len() {
            return Err(Error::Model(format!("{} trailing payload bytes", bytes.len() - r.pos)));
        }
        Ok(Model {
            task,
            templates,
            labels,
            scheme,
            columns,
            single_root,
            group_names,
            alphabets,
            mu,
            weights: GroupWeights { groups },
            diagnostics,
        })
    }

    /// Hex SHA-256 of the payload.
    pub fn checksum(&self) -> String {
        hex(&Sha256::digest(self.payload()))
    }

    pub fn write_to(&self, mut writer: impl Write, created: u64) -> Result<()> {
        let payload = self.payload();
        let digest = hex(&Sha256::digest(&payload));
        writeln!(writer, "{MAGIC} {FORMAT_VERSION}")?;
        writeln!(writer, "task={}", self.task)?;
        writeln!(writer, "created={created}")?;
        writeln!(writer, "groups={}", self.num_groups())?;
        if !self.labels.is_empty() {
            writeln!(writer, "labels={}", self.labels.len())?;
        }
        for (k, v) in &self.diagnostics {
            writeln!(writer, "diag.{k}={v}")?;
        }
        writeln!(writer, "payload_len={}", payload.len())?;
        writeln!(writer, "payload_sha256={digest}")?;
        writeln!(writer)?;
        writer.write_all(&payload)?;
        writer.flush()?;
        Ok(())
    }

    pub fn read_from(reader: impl Read) -> Result<Self> {
        let mut reader = std::io::BufReader::new(reader);
        let mut line = String::new();
        reader.read_line(&mut line)?;
        let first = line.trim_end();
        let version = first
            .strip_prefix(MAGIC)
            .map(str::trim)
            .ok_or_else(|| Error::Model("not a model file".into()))?;
        match version.parse::<u32>() {
            Ok(FORMAT_VERSION) => {}
            _ => return Err(Error::Model(format!("unsupported model format version '{version}'"))),
        }
        let mut header = BTreeMap::new();
        loop {
            line.clear();
            if reader.read_line(&mut line)? == 0 {
                return Err(Error::Model("truncated header".into()));
            }
            let text = line.trim_end_matches(['\n', '\r']);
            if text.is_empty() {
                break;
            }
            let (k, v) = text
                .split_once('=')
                .ok_or_else(|| Error::Model(format!("malformed header line '{text}'")))?;
            header.insert(k.to_owned(), v.to_owned());
        }
        let len: usize = header
            .get("payload_len")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Model("missing payload_len".into()))?;
        let expected = header
            .get("payload_sha256")
            .ok_or_else(|| Error::Model("missing payload_sha256".into()))?;
        let mut payload = Vec::new();
        reader.read_to_end(&mut payload)?;
        if payload.len() != len {
            return Err(Error::Model(format!("payload is {} bytes, header says {len}", payload.len())));
        }
        if hex(&Sha256::digest(&payload)) != *expected {
            return Err(Error::Model("payload checksum mismatch".into()));
        }
        let model = Model::from_payload(&payload)?;
        if header.get("task").is_some_and(|t| *t != model.task.to_string()) {
            return Err(Error::Model("header task does not match payload".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: &std::path::Path, created: u64) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(file), created)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::read_from(std::fs::File::open(path)?)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u64(out, s.len() as u64);
    out.extend_from_slice(s.as_bytes());
}

struct PayloadReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl PayloadReader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Model("payload truncated".into()))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn byte(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn count(&mut self) -> Result<usize> {
        let n = self.u64()?;
        let remaining = (self.bytes.len() - self.pos) as u64;
        if n > remaining.saturating_mul(8).max(1 << 20) {
            return Err(Error::Model(format!("implausible length {n}")));
        }
        Ok(n as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.count()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Model("invalid UTF-8 in payload".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Model {
        Model {
            task: TaskKind::Sequence,
            templates: "U00:%x[0,0]\nB\n".into(),
            labels: vec!["B".into(), "I".into()],
            scheme: LabelScheme::Bie,
            columns: 1,
            single_root: false,
            group_names: vec!["U00".into(), "B".into()],
            alphabets: vec![vec!["U00:a".into(), "U00:b".into()], Vec::new()],
            mu: vec![0.25, 0.75],
            weights: GroupWeights {
                groups: vec![vec![0.5, -1.0, 2.0, 0.0], vec![1.0, -0.5, 0.25, 3.0]],
            },
            diagnostics: BTreeMap::from([("halt".to_string(), "converged".to_string())]),
        }
    }

    #[test]
    fn round_trip() {
        let m = toy();
        let mut buf = Vec::new();
        m.write_to(&mut buf, 42).unwrap();
        assert!(buf.starts_with(b"mtl-model 1\n"));
        let back = Model::read_from(&buf[..]).unwrap();
        assert_eq!(back, m);
        assert!(back.sequence_featurizer().is_ok());
        assert!(back.edge_extractor().is_err());
    }

    #[test]
    fn timestamp_does_not_change_checksum() {
        let m = toy();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        m.write_to(&mut a, 1).unwrap();
        m.write_to(&mut b, 2).unwrap();
        assert_ne!(a, b);
        let payload = |v: &[u8]| v[v.windows(2).position(|w| w == b"\n\n").unwrap() + 2..].to_vec();
        assert_eq!(payload(&a), payload(&b));
    }

    #[test]
    fn unknown_version_rejected() {
        let mut buf = Vec::new();
        toy().write_to(&mut buf, 0).unwrap();
        let bumped = [b"mtl-model 2".as_slice(), &buf[11..]].concat();
        let err = Model::read_from(&bumped[..]).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
        assert!(Model::read_from(&b"something else\n"[..]).is_err());
    }

    #[test]
    fn corruption_detected() {
        let mut buf = Vec::new();
        toy().write_to(&mut buf, 0).unwrap();
        let last = buf.len() - 1;
        buf[last] ^= 1;
        assert!(Model::read_from(&buf[..]).is_err());
        buf.truncate(buf.len() - 3);
        assert!(Model::read_from(&buf[..]).is_err());
    }
}
