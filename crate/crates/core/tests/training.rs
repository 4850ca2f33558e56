use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mtl_core::corpus::{check_tree, DependencyInstance, LabelCodec, LabelScheme, LabelTable, SequenceInstance, Token};
use mtl_core::dependency::{
    is_projective, parse_edge_templates, DecodeOptions, DecoderKind, DependencyParser, DependencyTask,
    EdgeFeatureExtractor, DEFAULT_PARSE_TEMPLATES,
};
use mtl_core::eval::evaluate_dependency;
use mtl_core::features::GroupWeights;
use mtl_core::model::Model;
use mtl_core::sequence::{viterbi_decode, SequenceFeaturizer, SequenceScorer, SequenceTask};
use mtl_core::solver::{train, HaltReason, SolverConfig, TrainOutcome};
use mtl_core::template::parse_templates;

const TEMPLATES: [&str; 4] = ["U00:%x[0,0]", "U01:%x[-1,0]", "U02:%x[0,1]", "U03:%x[1,0]/%x[0,0]"];

fn sequences(n: usize, seed: u64) -> Vec<SequenceInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let len = rng.gen_range(3..9);
            let words: Vec<usize> = (0..len).map(|_| rng.gen_range(0..12)).collect();
            let labels = words
                .iter()
                .enumerate()
                .map(|(t, &w)| if t > 0 && words[t - 1] == 0 { 2 } else { w % 2 })
                .collect();
            SequenceInstance {
                tokens: words.iter().map(|w| Token::new([format!("w{w}"), format!("s{}", w % 3)])).collect(),
                labels: Some(labels),
            }
        })
        .collect()
}

fn trees(n: usize, seed: u64) -> Vec<DependencyInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tags = ["N", "V", "D", "A"];
    (0..n)
        .map(|_| {
            let len = rng.gen_range(3..8);
            let heads: Vec<usize> = (1..=len).map(|v| if v == 1 { 0 } else { rng.gen_range(1..v) }).collect();
            let tokens = (1..=len)
                .map(|v| {
                    let depth = std::iter::successors(Some(v), |&u| (u != 0).then(|| heads[u - 1])).count();
                    let tag = tags[depth % tags.len()];
                    Token::new([format!("{tag}{}", v % 3), tag.to_lowercase(), tag.into(), tag.into()])
                })
                .collect();
            DependencyInstance {
                tokens,
                heads: Some(heads),
                extra: Vec::new(),
            }
        })
        .collect()
}

fn train_sequences(templates: &str, corpus: &[SequenceInstance], c: f64) -> (SequenceFeaturizer, TrainOutcome) {
    let featurizer = SequenceFeaturizer::build(parse_templates(templates).unwrap(), corpus, 3);
    let task = SequenceTask::new(&featurizer, corpus).unwrap();
    let config = SolverConfig {
        c,
        epsilon: 0.01,
        ..SolverConfig::default()
    };
    let outcome = train(&task, &config, |_| {}).unwrap();
    (featurizer, outcome)
}

fn accuracy(featurizer: &SequenceFeaturizer, weights: &GroupWeights, corpus: &[SequenceInstance]) -> f64 {
    let scorer = SequenceScorer::new(featurizer, weights).unwrap();
    let (mut hit, mut all) = (0, 0);
    for inst in corpus {
        let (pred, _) = viterbi_decode(&scorer, &featurizer.token_features(&inst.tokens));
        hit += pred.iter().zip(inst.labels.as_ref().unwrap()).filter(|(a, b)| a == b).count();
        all += pred.len();
    }
    hit as f64 / all as f64
}

#[test]
fn sequence_training_learns_the_rule() {
    let corpus = sequences(40, 1);
    let templates = format!("{}\nB\n", TEMPLATES.join("\n"));
    let (featurizer, outcome) = train_sequences(&templates, &corpus, 100.0);
    assert_eq!(outcome.halt, HaltReason::Converged);
    assert!((outcome.mu.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    assert!(outcome.mu.iter().all(|&m| m >= 0.0));
    assert!(accuracy(&featurizer, &outcome.weights, &corpus) > 0.95);
    assert!(accuracy(&featurizer, &outcome.weights, &sequences(40, 2)) > 0.9);
}

#[test]
fn training_is_deterministic() {
    let corpus = sequences(20, 3);
    let templates = TEMPLATES.join("\n");
    let (_, a) = train_sequences(&templates, &corpus, 5.0);
    let (_, b) = train_sequences(&templates, &corpus, 5.0);
    assert_eq!(a.weights, b.weights);
    assert_eq!(a.mu, b.mu);
    assert_eq!(a.trace, b.trace);
}

#[test]
fn template_order_only_permutes_the_solution() {
    let corpus = sequences(20, 4);
    let (_, forward) = train_sequences(&TEMPLATES.join("\n"), &corpus, 5.0);
    let order = [2usize, 0, 3, 1];
    let permuted: Vec<&str> = order.iter().map(|&i| TEMPLATES[i]).collect();
    let (_, shuffled) = train_sequences(&permuted.join("\n"), &corpus, 5.0);
    assert_eq!(forward.iterations(), shuffled.iterations());
    for (k, &i) in order.iter().enumerate() {
        assert!((forward.mu[i] - shuffled.mu[k]).abs() < 1e-6, "{:?} vs {:?}", forward.mu, shuffled.mu);
        let (a, b) = (&forward.weights.groups[i], &shuffled.weights.groups[k]);
        assert!(a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-6));
    }
}

fn train_parser(corpus: &[DependencyInstance], options: DecodeOptions) -> (EdgeFeatureExtractor, TrainOutcome) {
    let extractor =
        EdgeFeatureExtractor::build(parse_edge_templates(DEFAULT_PARSE_TEMPLATES).unwrap(), corpus).unwrap();
    let task = DependencyTask::new(&extractor, corpus, options).unwrap();
    let config = SolverConfig {
        c: 2.0,
        epsilon: 0.05,
        ..SolverConfig::default()
    };
    let outcome = train(&task, &config, |_| {}).unwrap();
    (extractor, outcome)
}

#[test]
fn dependency_training_fits_the_corpus() {
    let corpus = trees(25, 5);
    for decoder in [DecoderKind::Projective, DecoderKind::NonProjective] {
        for single_root in [false, true] {
            let options = DecodeOptions { decoder, single_root };
            let (extractor, outcome) = train_parser(&corpus, options);
            assert_eq!(outcome.halt, HaltReason::Converged);
            let parser = DependencyParser {
                extractor: &extractor,
                weights: &outcome.weights,
                options,
            };
            let predicted: Vec<Vec<usize>> = corpus.iter().map(|s| parser.parse(s)).collect();
            for heads in &predicted {
                assert!(check_tree(heads).is_ok());
                if decoder == DecoderKind::Projective {
                    assert!(is_projective(heads));
                }
                if single_root {
                    assert_eq!(heads.iter().filter(|&&h| h == 0).count(), 1);
                }
            }
            let report = evaluate_dependency(&corpus, &predicted).unwrap();
            assert!(report.accuracy() > 0.8, "{decoder} single_root={single_root}: {report}");
        }
    }
}

#[test]
fn saved_models_decode_identically() {
    let corpus = sequences(15, 6);
    let templates = format!("{}\nB\n", TEMPLATES.join("\n"));
    let (featurizer, outcome) = train_sequences(&templates, &corpus, 5.0);
    let codec = LabelCodec::new(LabelScheme::Raw, LabelTable::from_names(["0", "1", "2"]));
    let model = Model::from_sequence(
        &templates,
        &featurizer,
        &codec,
        2,
        outcome.mu.clone(),
        outcome.weights.clone(),
        BTreeMap::new(),
    );
    let mut buf = Vec::new();
    model.write_to(&mut buf, 0).unwrap();
    let loaded = Model::read_from(&buf[..]).unwrap();
    let f2 = loaded.sequence_featurizer().unwrap();
    let test = sequences(15, 7);
    let s1 = SequenceScorer::new(&featurizer, &outcome.weights).unwrap();
    let s2 = SequenceScorer::new(&f2, &loaded.weights).unwrap();
    for inst in &test {
        let a = viterbi_decode(&s1, &featurizer.token_features(&inst.tokens));
        let b = viterbi_decode(&s2, &f2.token_features(&inst.tokens));
        assert_eq!(a.0, b.0);
        assert_eq!(a.1.to_bits(), b.1.to_bits());
    }

    let corpus = trees(10, 8);
    let options = DecodeOptions {
        decoder: DecoderKind::NonProjective,
        single_root: true,
    };
    let (extractor, outcome) = train_parser(&corpus, options);
    let model = Model::from_dependency(DEFAULT_PARSE_TEMPLATES, &extractor, options, outcome.mu, outcome.weights, BTreeMap::new());
    let mut buf = Vec::new();
    model.write_to(&mut buf, 0).unwrap();
    let loaded = Model::read_from(&buf[..]).unwrap();
    assert_eq!(loaded.decode_options().unwrap(), options);
    let ex2 = loaded.edge_extractor().unwrap();
    let p1 = DependencyParser {
        extractor: &extractor,
        weights: &model.weights,
        options,
    };
    let p2 = DependencyParser {
        extractor: &ex2,
        weights: &loaded.weights,
        options,
    };
    for inst in trees(10, 9) {
        assert_eq!(p1.parse(&inst), p2.parse(&inst));
    }
}
