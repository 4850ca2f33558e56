#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mtl_core::corpus::{DependencyInstance, LabelTable, SequenceInstance, Token};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Five observation templates plus the transition template over a
/// word/shape corpus.
pub const SYNTHETIC_TEMPLATES: &str = "\
U00:%x[0,0]
U01:%x[-1,0]
U02:%x[1,0]
U03:%x[0,1]
U04:%x[-1,1]/%x[0,1]
B
";

/// Three-label corpus: each word has a preferred label, a fraction of tokens
/// follow the previous label instead and a few are random.
pub fn synthetic_sequences(n: usize, seed: u64) -> (Vec<SequenceInstance>, LabelTable) {
    let mut rng = rng(seed);
    let table = LabelTable::from_names(["A", "B", "C"]);
    let corpus = (0..n)
        .map(|_| {
            let len = rng.gen_range(4..=10);
            let mut tokens = Vec::with_capacity(len);
            let mut labels: Vec<usize> = Vec::with_capacity(len);
            for t in 0..len {
                let word = rng.gen_range(0..30usize);
                let roll: f64 = rng.gen();
                let label = if roll < 0.05 {
                    rng.gen_range(0..3)
                } else if roll < 0.2 && t > 0 {
                    (labels[t - 1] + 1) % 3
                } else {
                    word % 3
                };
                tokens.push(Token::new([format!("w{word}"), format!("s{}", word % 5)]));
                labels.push(label);
            }
            SequenceInstance {
                tokens,
                labels: Some(labels),
            }
        })
        .collect();
    (corpus, table)
}

pub const NOISE_TEMPLATES: &str = "U00:%x[0,0]\nU01:%x[0,1]\n";

/// Column 0 determines the label exactly; column 1 is an independent random
/// indicator.
pub fn noise_sequences(n: usize, seed: u64) -> Vec<SequenceInstance> {
    let mut rng = rng(seed);
    (0..n)
        .map(|_| {
            let len = rng.gen_range(3..=8);
            let mut tokens = Vec::with_capacity(len);
            let mut labels = Vec::with_capacity(len);
            for _ in 0..len {
                let word = rng.gen_range(0..9usize);
                let noise = rng.gen_range(0..40usize);
                tokens.push(Token::new([format!("w{word}"), format!("n{noise}")]));
                labels.push(word % 3);
            }
            SequenceInstance {
                tokens,
                labels: Some(labels),
            }
        })
        .collect()
}

/// Random trees where each tag prefers a head tag and a direction.
pub fn synthetic_trees(n: usize, seed: u64) -> Vec<DependencyInstance> {
    let mut rng = rng(seed);
    let tags = ["N", "V", "D", "A", "P"];
    (0..n)
        .map(|_| {
            let len = rng.gen_range(3..=9);
            let heads: Vec<usize> = (1..=len).map(|v| if v == 1 { 0 } else { rng.gen_range(0..v) }).collect();
            let tokens = (1..=len)
                .map(|v| {
                    let tag = tags[(heads[v - 1] + v) % tags.len()];
                    let word = format!("{}{}", tag.to_lowercase(), rng.gen_range(0..4));
                    Token::new([word.clone(), word, tag.to_owned(), tag.to_owned()])
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

pub fn sequence_text(corpus: &[SequenceInstance], table: &LabelTable) -> String {
    let mut buf = Vec::new();
    mtl_core::corpus::write_sequence_corpus(&mut buf, corpus, table).unwrap();
    String::from_utf8(buf).unwrap()
}

pub fn conll_text(corpus: &[DependencyInstance]) -> String {
    let mut buf = Vec::new();
    mtl_core::corpus::write_dependency_corpus(&mut buf, corpus, None).unwrap();
    String::from_utf8(buf).unwrap()
}

/// `max qᵀα − ½ αᵀMα` over `α ≥ 0, Σα ≤ c` by enumerating every support
/// set with the budget constraint active or inactive and solving the
/// stationarity system on it. Returns the best feasible candidate.
pub fn exhaustive_qp(m: &DMatrix<f64>, q: &[f64], c: f64) -> (Vec<f64>, f64) {
    let s = q.len();
    assert!(s <= 20, "exhaustive QP over {s} variables");
    let value = |alpha: &[f64]| {
        let a = DVector::from_column_slice(alpha);
        q.iter().zip(alpha).map(|(x, y)| x * y).sum::<f64>() - 0.5 * (a.transpose() * m * &a)[(0, 0)]
    };
    let mut best = (vec![0.0; s], 0.0);
    for mask in 1u32..(1 << s) {
        let support: Vec<usize> = (0..s).filter(|&i| mask & (1 << i) != 0).collect();
        let k = support.len();
        for budget in [false, true] {
            let dim = k + usize::from(budget);
            let mut a = DMatrix::zeros(dim, dim);
            let mut b = DVector::zeros(dim);
            for (r, &i) in support.iter().enumerate() {
                for (col, &j) in support.iter().enumerate() {
                    a[(r, col)] = m[(i, j)];
                }
                b[r] = q[i];
                if budget {
                    a[(r, k)] = 1.0;
                    a[(k, r)] = 1.0;
                }
            }
            if budget {
                b[k] = c;
            }
            let Some(x) = a.lu().solve(&b) else { continue };
            if !x.iter().all(|v| v.is_finite()) {
                continue;
            }
            if budget && x[k] < -1e-12 {
                continue;
            }
            let mut alpha = vec![0.0; s];
            for (r, &i) in support.iter().enumerate() {
                alpha[i] = x[r];
            }
            if alpha.iter().any(|&v| v < -1e-12) || alpha.iter().sum::<f64>() > c + 1e-12 {
                continue;
            }
            let v = value(&alpha);
            if v > best.1 {
                best = (alpha, v);
            }
        }
    }
    best
}

/// Every head vector over `l` words that forms a tree rooted at 0.
pub fn all_trees(l: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut heads = vec![0usize; l];
    loop {
        if is_tree(&heads) {
            out.push(heads.clone());
        }
        let mut k = 0;
        loop {
            if k == l {
                return out;
            }
            heads[k] += 1;
            if heads[k] <= l {
                break;
            }
            heads[k] = 0;
            k += 1;
        }
    }
}

/// Every token reaches the root by following heads, without self-loops.
pub fn is_tree(heads: &[usize]) -> bool {
    let l = heads.len();
    (1..=l).all(|start| {
        let mut v = start;
        for _ in 0..=l {
            if v == 0 {
                return true;
            }
            let h = heads[v - 1];
            if h == v || h > l {
                return false;
            }
            v = h;
        }
        false
    })
}

pub fn crosses(heads: &[usize]) -> bool {
    let spans: Vec<(usize, usize)> = heads.iter().enumerate().map(|(k, &u)| (u.min(k + 1), u.max(k + 1))).collect();
    spans.iter().any(|&(a, b)| spans.iter().any(|&(c, d)| a < c && c < b && b < d))
}
