//! Evaluation metrics: token accuracy, segmentation and entity P/R/F1, and
//! unlabeled attachment accuracy / complete-tree rate.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use crate::corpus::{DependencyInstance, LabelCodec, LabelScheme, SequenceInstance, Span};
use crate::error::{Error, Result};

/// Harmonic mean of precision and recall; zero when either is zero.
pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision <= 0.0 || recall <= 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Span-level counts and the derived scores.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Prf {
    pub gold: usize,
    pub predicted: usize,
    pub correct: usize,
}

impl Prf {
    pub fn precision(&self) -> f64 {
        ratio(self.correct, self.predicted)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.correct, self.gold)
    }

    pub fn f1(&self) -> f64 {
        f1(self.precision(), self.recall())
    }

    fn add(&mut self, other: Prf) {
        self.gold += other.gold;
        self.predicted += other.predicted;
        self.correct += other.correct;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentationScores {
    pub words: Prf,
    /// Recall over gold words found in the training vocabulary.
    pub r_iv: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EntityScores {
    pub overall: Prf,
    pub per_type: BTreeMap<String, Prf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceReport {
    pub tokens: usize,
    pub correct_tokens: usize,
    pub segmentation: Option<SegmentationScores>,
    pub entities: Option<EntityScores>,
}

impl SequenceReport {
    pub fn accuracy(&self) -> f64 {
        ratio(self.correct_tokens, self.tokens)
    }

    pub fn key_values(&self) -> Vec<(String, f64)> {
        let mut kv = vec![("accuracy".to_owned(), self.accuracy())];
        if let Some(seg) = &self.segmentation {
            kv.push(("precision".into(), seg.words.precision()));
            kv.push(("recall".into(), seg.words.recall()));
            kv.push(("f1".into(), seg.words.f1()));
            if let Some(riv) = seg.r_iv {
                kv.push(("r_iv".into(), riv));
            }
        }
        if let Some(ent) = &self.entities {
            kv.push(("precision".into(), ent.overall.precision()));
            kv.push(("recall".into(), ent.overall.recall()));
            kv.push(("f1".into(), ent.overall.f1()));
            for (kind, prf) in &ent.per_type {
                kv.push((format!("{kind}.precision"), prf.precision()));
                kv.push((format!("{kind}.recall"), prf.recall()));
                kv.push((format!("{kind}.f1"), prf.f1()));
            }
        }
        kv
    }
}

impl fmt::Display for SequenceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<12} {:>8.4}  ({}/{})", "accuracy", self.accuracy(), self.correct_tokens, self.tokens)?;
        if let Some(seg) = &self.segmentation {
            writeln!(f, "{:<12} {:>8.4}", "precision", seg.words.precision())?;
            writeln!(f, "{:<12} {:>8.4}", "recall", seg.words.recall())?;
            writeln!(f, "{:<12} {:>8.4}", "f1", seg.words.f1())?;
            if let Some(riv) = seg.r_iv {
                writeln!(f, "{:<12} {:>8.4}", "r_iv", riv)?;
            }
        }
        if let Some(ent) = &self.entities {
            writeln!(f, "{:<12} {:>9} {:>9} {:>9}", "type", "precision", "recall", "f1")?;
            for (kind, prf) in &ent.per_type {
                writeln!(f, "{:<12} {:>9.4} {:>9.4} {:>9.4}", kind, prf.precision(), prf.recall(), prf.f1())?;
            }
            let o = &ent.overall;
            writeln!(f, "{:<12} {:>9.4} {:>9.4} {:>9.4}", "overall", o.precision(), o.recall(), o.f1())?;
        }
        Ok(())
    }
}

fn span_text(instance: &SequenceInstance, span: &Span) -> String {
    instance.tokens[span.start..span.end].iter().map(|t| t.form()).collect()
}

/// Gold words of a segmented training corpus, used for R_iv.
pub fn segmentation_vocabulary(corpus: &[SequenceInstance], codec: &LabelCodec) -> Result<HashSet<String>> {
    let mut vocab = HashSet::new();
    for instance in corpus {
        let labels = instance
            .labels
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("vocabulary corpus must be labeled".into()))?;
        for span in codec.decode(labels)? {
            vocab.insert(span_text(instance, &span));
        }
    }
    Ok(vocab)
}

/// Scores predicted label sequences against gold instances.
///
/// Token accuracy is always reported. The BIE scheme adds word-level
/// P/R/F1 (and R_iv when `compute_riv` is set, which needs `vocabulary`); the
/// BIO scheme adds overall and per-type phrase P/R/F1, where a phrase is
/// correct only if both span and type match.
pub fn evaluate_sequence(
    gold: &[SequenceInstance],
    pred: &[Vec<usize>],
    codec: &LabelCodec,
    vocabulary: Option<&HashSet<String>>,
    compute_riv: bool,
) -> Result<SequenceReport> {
    if gold.len() != pred.len() {
        return Err(Error::LengthMismatch(format!(
            "{} gold sentences, {} predicted",
            gold.len(),
            pred.len()
        )));
    }
    if compute_riv && vocabulary.is_none() {
        return Err(Error::InvalidArgument("R_iv requested without a training vocabulary".into()));
    }
    if compute_riv && codec.scheme != LabelScheme::Bie {
        return Err(Error::InvalidArgument("R_iv is only defined for the BIE scheme".into()));
    }

    let mut tokens = 0;
    let mut correct_tokens = 0;
    let mut words = Prf::default();
    let (mut iv_gold, mut iv_correct) = (0usize, 0usize);
    let mut per_type: BTreeMap<String, Prf> = BTreeMap::new();

    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        let gl = g
            .labels
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("gold sentence {} has no labels", i + 1)))?;
        if gl.len() != p.len() {
            return Err(Error::LengthMismatch(format!(
                "sentence {}: {} gold labels, {} predicted",
                i + 1,
                gl.len(),
                p.len()
            )));
        }
        tokens += gl.len();
        correct_tokens += gl.iter().zip(p).filter(|(a, b)| a == b).count();

        if codec.scheme == LabelScheme::Raw {
            continue;
        }
        let gold_spans = codec.decode(gl)?;
        let pred_spans: HashSet<Span> = codec.decode(p)?.into_iter().collect();
        match codec.scheme {
            LabelScheme::Bie => {
                words.gold += gold_spans.len();
                words.predicted += pred_spans.len();
                for span in &gold_spans {
                    let hit = pred_spans.contains(span);
                    words.correct += usize::from(hit);
                    if let (true, Some(vocab)) = (compute_riv, vocabulary) {
                        if vocab.contains(&span_text(g, span)) {
                            iv_gold += 1;
                            iv_correct += usize::from(hit);
                        }
                    }
                }
            }
            LabelScheme::Bio => {
                for span in &gold_spans {
                    let entry = per_type.entry(span.kind.clone()).or_default();
                    entry.gold += 1;
                    entry.correct += usize::from(pred_spans.contains(span));
                }
                for span in &pred_spans {
                    per_type.entry(span.kind.clone()).or_default().predicted += 1;
                }
            }
            LabelScheme::Raw => unreachable!(),
        }
    }

    let segmentation = (codec.scheme == LabelScheme::Bie).then(|| SegmentationScores {
        words,
        r_iv: compute_riv.then(|| ratio(iv_correct, iv_gold)),
    });
    let entities = (codec.scheme == LabelScheme::Bio).then(|| {
        let mut overall = Prf::default();
        for prf in per_type.values() {
            overall.add(*prf);
        }
        EntityScores { overall, per_type }
    });
    Ok(SequenceReport {
        tokens,
        correct_tokens,
        segmentation,
        entities,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DependencyReport {
    pub tokens: usize,
    pub correct_heads: usize,
    pub sentences: usize,
    pub complete_sentences: usize,
}

impl DependencyReport {
    /// Fraction of tokens whose head is correct.
    pub fn accuracy(&self) -> f64 {
        ratio(self.correct_heads, self.tokens)
    }

    /// Fraction of sentences whose tree is entirely correct.
    pub fn complete(&self) -> f64 {
        ratio(self.complete_sentences, self.sentences)
    }

    pub fn key_values(&self) -> Vec<(String, f64)> {
        vec![("accuracy".into(), self.accuracy()), ("complete".into(), self.complete())]
    }
}

impl fmt::Display for DependencyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:>8.4}  ({}/{})", "accuracy", self.accuracy(), self.correct_heads, self.tokens)?;
        writeln!(
            f,
            "{:<10} {:>8.4}  ({}/{})",
            "complete",
            self.complete(),
            self.complete_sentences,
            self.sentences
        )
    }
}

pub fn evaluate_dependency(gold: &[DependencyInstance], pred: &[Vec<usize>]) -> Result<DependencyReport> {
    if gold.len() != pred.len() {
        return Err(Error::LengthMismatch(format!(
            "{} gold sentences, {} predicted",
            gold.len(),
            pred.len()
        )));
    }
    let mut report = DependencyReport {
        tokens: 0,
        correct_heads: 0,
        sentences: gold.len(),
        complete_sentences: 0,
    };
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        let gh = g
            .heads
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("gold sentence {} has no heads", i + 1)))?;
        if gh.len() != p.len() {
            return Err(Error::LengthMismatch(format!(
                "sentence {}: {} gold heads, {} predicted",
                i + 1,
                gh.len(),
                p.len()
            )));
        }
        let correct = gh.iter().zip(p).filter(|(a, b)| a == b).count();
        report.tokens += gh.len();
        report.correct_heads += correct;
        report.complete_sentences += usize::from(correct == gh.len());
    }
    Ok(report)
}
