//! Maximum spanning tree decoders over edge score matrices.

use crate::error::{Error, Result};

/// Edge scores `s(u, v)` for heads `u ∈ [0, l]` and modifiers `v ∈ [1, l]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeScoreMatrix {
    len: usize,
    data: Vec<f64>,
}

impl EdgeScoreMatrix {
    /// All-zero scores for a sentence of `len` words.
    pub fn zeros(len: usize) -> Self {
        EdgeScoreMatrix {
            len,
            data: vec![0.0; (len + 1) * (len + 1)],
        }
    }

    pub fn from_fn(len: usize, mut score: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(len);
        for u in 0..=len {
            for v in 1..=len {
                if u != v {
                    m.set(u, v, score(u, v));
                }
            }
        }
        m
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.data[u * (self.len + 1) + v]
    }

    pub fn set(&mut self, u: usize, v: usize, value: f64) {
        self.data[u * (self.len + 1) + v] = value;
    }

    /// Sum of edge scores of the tree given by `heads`.
    pub fn tree_score(&self, heads: &[usize]) -> f64 {
        heads.iter().enumerate().map(|(k, &u)| self.get(u, k + 1)).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DecoderKind {
    /// Eisner's algorithm, projective trees only.
    #[default]
    Projective,
    /// Chu-Liu-Edmonds.
    NonProjective,
}

impl std::str::FromStr for DecoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "projective" | "eisner" => Ok(DecoderKind::Projective),
            "nonprojective" | "non-projective" | "cle" => Ok(DecoderKind::NonProjective),
            other => Err(Error::InvalidArgument(format!("unknown decoder '{other}'"))),
        }
    }
}

impl std::fmt::Display for DecoderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DecoderKind::Projective => "projective",
            DecoderKind::NonProjective => "nonprojective",
        })
    }
}

/// True when no two edges cross when drawn above the sentence.
pub fn is_projective(heads: &[usize]) -> bool {
    let spans: Vec<(usize, usize)> = heads
        .iter()
        .enumerate()
        .map(|(k, &u)| (u.min(k + 1), u.max(k + 1)))
        .collect();
    for (i, &(a0, a1)) in spans.iter().enumerate() {
        for &(b0, b1) in &spans[i + 1..] {
            if (a0 < b0 && b0 < a1 && a1 < b1) || (b0 < a0 && a0 < b1 && b1 < a1) {
                return false;
            }
        }
    }
    true
}

#[derive(Clone, Copy)]
enum Item {
    Complete,
    Incomplete,
}

/// Highest-scoring projective tree; split points are taken first-best in
/// ascending order, so ties resolve deterministically.
pub fn eisner_decode(scores: &EdgeScoreMatrix) -> Vec<usize> {
    let n = scores.len() + 1;
    if n == 1 {
        return Vec::new();
    }
    // [s][t][dir]: dir 0 = head at t (left-pointing), 1 = head at s
    let idx = |s: usize, t: usize, d: usize| (s * n + t) * 2 + d;
    let mut complete = vec![f64::NEG_INFINITY; n * n * 2];
    let mut incomplete = vec![f64::NEG_INFINITY; n * n * 2];
    let mut complete_split = vec![0usize; n * n * 2];
    let mut incomplete_split = vec![0usize; n * n * 2];
    for s in 0..n {
        complete[idx(s, s, 0)] = 0.0;
        complete[idx(s, s, 1)] = 0.0;
    }
    for width in 1..n {
        for s in 0..n - width {
            let t = s + width;
            let mut best = f64::NEG_INFINITY;
            let mut arg = s;
            for r in s..t {
                let v = complete[idx(s, r, 1)] + complete[idx(r + 1, t, 0)];
                if v > best {
                    best = v;
                    arg = r;
                }
            }
            let left = if s == 0 { f64::NEG_INFINITY } else { scores.get(t, s) };
            incomplete[idx(s, t, 0)] = best + left;
            incomplete[idx(s, t, 1)] = best + scores.get(s, t);
            incomplete_split[idx(s, t, 0)] = arg;
            incomplete_split[idx(s, t, 1)] = arg;

            let mut best = f64::NEG_INFINITY;
            let mut arg = s;
            for r in s..t {
                let v = complete[idx(s, r, 0)] + incomplete[idx(r, t, 0)];
                if v > best {
                    best = v;
                    arg = r;
                }
            }
            complete[idx(s, t, 0)] = best;
            complete_split[idx(s, t, 0)] = arg;

            let mut best = f64::NEG_INFINITY;
            let mut arg = t;
            for r in s + 1..=t {
                let v = incomplete[idx(s, r, 1)] + complete[idx(r, t, 1)];
                if v > best {
                    best = v;
                    arg = r;
                }
            }
            complete[idx(s, t, 1)] = best;
            complete_split[idx(s, t, 1)] = arg;
        }
    }

    let mut heads = vec![0usize; n - 1];
    let mut stack = vec![(0usize, n - 1, 1usize, Item::Complete)];
    while let Some((s, t, d, item)) = stack.pop() {
        if s == t {
            continue;
        }
        match item {
            Item::Incomplete => {
                if d == 0 {
                    heads[s - 1] = t;
                } else {
                    heads[t - 1] = s;
                }
                let r = incomplete_split[idx(s, t, d)];
                stack.push((s, r, 1, Item::Complete));
                stack.push((r + 1, t, 0, Item::Complete));
            }
            Item::Complete => {
                let r = complete_split[idx(s, t, d)];
                if d == 0 {
                    stack.push((s, r, 0, Item::Complete));
                    stack.push((r, t, 0, Item::Incomplete));
                } else {
                    stack.push((s, r, 1, Item::Incomplete));
                    stack.push((r, t, 1, Item::Complete));
                }
            }
        }
    }
    heads
}

/// Highest-scoring arborescence rooted at 0 (Chu-Liu-Edmonds). Greedy head
/// selection prefers the smaller head index on ties.
pub fn cle_decode(scores: &EdgeScoreMatrix) -> Vec<usize> {
    let n = scores.len() + 1;
    let mut w = vec![vec![f64::NEG_INFINITY; n]; n];
    for (u, row) in w.iter_mut().enumerate() {
        for (v, cell) in row.iter_mut().enumerate().skip(1) {
            if u != v {
                *cell = scores.get(u, v);
            }
        }
    }
    let parents = cle_dense(&w);
    parents[1..].to_vec()
}

/// `w[h][d]` over nodes `0..n` with node 0 the root; returns `parent[d]`.
fn cle_dense(w: &[Vec<f64>]) -> Vec<usize> {
    let n = w.len();
    let mut parent = vec![0usize; n];
    for d in 1..n {
        let mut best = f64::NEG_INFINITY;
        let mut arg = usize::MAX;
        for (h, row) in w.iter().enumerate() {
            if h != d && (arg == usize::MAX || row[d] > best) {
                best = row[d];
                arg = h;
            }
        }
        parent[d] = arg;
    }

    let Some(cycle) = find_cycle(&parent) else {
        return parent;
    };
    let mut in_cycle = vec![false; n];
    for &v in &cycle {
        in_cycle[v] = true;
    }

    // Contracted graph: surviving nodes in order, then the cycle node.
    let outside: Vec<usize> = (0..n).filter(|&v| !in_cycle[v]).collect();
    let m = outside.len() + 1;
    let c = m - 1;
    let mut w2 = vec![vec![f64::NEG_INFINITY; m]; m];
    let mut enter = vec![usize::MAX; m];
    let mut leave = vec![usize::MAX; m];
    for (i, &u) in outside.iter().enumerate() {
        for (j, &v) in outside.iter().enumerate() {
            if u != v && v != 0 {
                w2[i][j] = w[u][v];
            }
        }
        let mut best = f64::NEG_INFINITY;
        for &v in &cycle_sorted(&cycle) {
            let gain = w[u][v] - w[parent[v]][v];
            if enter[i] == usize::MAX || gain > best {
                best = gain;
                enter[i] = v;
            }
        }
        w2[i][c] = best;
        if u != 0 {
            let mut best = f64::NEG_INFINITY;
            for &h in &cycle_sorted(&cycle) {
                if leave[i] == usize::MAX || w[h][u] > best {
                    best = w[h][u];
                    leave[i] = h;
                }
            }
            w2[c][i] = best;
        }
    }

    let sub = cle_dense(&w2);
    let mut result = parent.clone();
    for (i, &v) in outside.iter().enumerate().skip(1) {
        result[v] = if sub[i] == c { leave[i] } else { outside[sub[i]] };
    }
    let entering_from = sub[c];
    let entry = enter[entering_from];
    result[entry] = outside[entering_from];
    result
}

fn cycle_sorted(cycle: &[usize]) -> Vec<usize> {
    let mut c = cycle.to_vec();
    c.sort_unstable();
    c
}

fn find_cycle(parent: &[usize]) -> Option<Vec<usize>> {
    let n = parent.len();
    let mut color = vec![0u8; n];
    color[0] = 2;
    for start in 1..n {
        let mut path = Vec::new();
        let mut v = start;
        while color[v] == 0 {
            color[v] = 1;
            path.push(v);
            v = parent[v];
        }
        if color[v] == 1 {
            let pos = path.iter().position(|&x| x == v).expect("cycle node on path");
            return Some(path[pos..].to_vec());
        }
        for u in path {
            color[u] = 2;
        }
    }
    None
}

pub fn decode_tree(scores: &EdgeScoreMatrix, decoder: DecoderKind) -> Vec<usize> {
    match decoder {
        DecoderKind::Projective => eisner_decode(scores),
        DecoderKind::NonProjective => cle_decode(scores),
    }
}

/// Best tree with exactly one child of the root: one decode per candidate
/// root child, the smallest child winning ties.
pub fn decode_single_root(scores: &EdgeScoreMatrix, decoder: DecoderKind) -> Vec<usize> {
    let l = scores.len();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for child in 1..=l {
        let mut forced = scores.clone();
        for v in 1..=l {
            if v != child {
                forced.set(0, v, f64::NEG_INFINITY);
            }
        }
        let heads = decode_tree(&forced, decoder);
        let value = scores.tree_score(&heads);
        if best.as_ref().is_none_or(|(b, _)| value > *b) {
            best = Some((value, heads));
        }
    }
    best.map(|(_, h)| h).unwrap_or_default()
}
