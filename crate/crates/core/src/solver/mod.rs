//! 1-slack cutting-plane training with learned group weights.
//!
//! Each outer iteration decodes the most violated output for every training
//! instance under the current weights, averages them into one constraint row
//! `(p, q)`, adds the row to the working set and re-solves the restricted
//! dual. Per-group weights are recovered as `w_j = −μ_j Σ_r α_r p_j^r`.
//! Training stops once the empirical risk bound `R_emp` is within ε of the
//! working-set bound `R_s`.

mod merged;
mod subproblem;

use std::fmt;

use log::debug;
use nalgebra::DMatrix;
use rayon::prelude::*;

pub use merged::MergedGroups;
pub use subproblem::{solve_subproblem, SubproblemConfig, SubproblemSolution, SubproblemState};

use crate::error::{Error, Result};
use crate::features::{GroupWeights, GroupedAccumulator, GroupedSparseVector};

/// A training corpus together with its loss-augmented decoder.
pub trait StructuredTask: Sync {
    type Output: Clone + Send + Sync + PartialEq;

    fn num_instances(&self) -> usize;

    /// Dimension of each group's weight block.
    fn group_dims(&self) -> Vec<usize>;

    /// `argmax_y Δ(y_i, y) + ⟨w, Φ(x_i, y)⟩` and the value it attains.
    fn loss_augmented(&self, i: usize, weights: &GroupWeights) -> Result<(Self::Output, f64)>;

    fn features(&self, i: usize, output: &Self::Output) -> Result<GroupedSparseVector>;

    fn gold_features(&self, i: usize) -> &GroupedSparseVector;

    fn loss(&self, i: usize, output: &Self::Output) -> Result<f64>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightingMode {
    /// Group weights μ learned on the simplex.
    Mkl,
    /// μ fixed at 1/m for every group (plain structural SVM).
    Uniform,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub c: f64,
    pub epsilon: f64,
    pub max_iterations: usize,
    pub mode: WeightingMode,
    /// Groups pinned at μ = 1/m in MKL mode.
    pub fixed_groups: Vec<usize>,
    pub subproblem: SubproblemConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            c: 1.0,
            epsilon: 0.5,
            max_iterations: 500,
            mode: WeightingMode::Mkl,
            fixed_groups: Vec::new(),
            subproblem: SubproblemConfig::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self, num_groups: usize) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidArgument(format!("C must be positive, got {}", self.c)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("max_iterations must be at least 1".into()));
        }
        if let Some(&g) = self.fixed_groups.iter().find(|&&g| g >= num_groups) {
            return Err(Error::InvalidArgument(format!("fixed group {g} out of range")));
        }
        Ok(())
    }

    fn pinned_weights(&self, num_groups: usize) -> Vec<Option<f64>> {
        let share = 1.0 / num_groups as f64;
        match self.mode {
            WeightingMode::Uniform => vec![Some(share); num_groups],
            WeightingMode::Mkl => (0..num_groups)
                .map(|g| self.fixed_groups.contains(&g).then_some(share))
                .collect(),
        }
    }
}

/// One cutting plane: `p_j = −(1/n) Σ_i δΦ_j^i(ŷ_i)` and
/// `q = (1/n) Σ_i Δ(y_i, ŷ_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintRow {
    pub p: GroupedSparseVector,
    pub q: f64,
}

impl ConstraintRow {
    /// `q + Σ_j w_jᵀ p_j`: the slack this row demands under `weights`.
    pub fn violation(&self, weights: &GroupWeights) -> f64 {
        self.q + self.p.dot_weights(weights)
    }
}

/// Averages decoded outputs into a constraint row.
pub fn build_constraint_row<T: StructuredTask>(task: &T, outputs: &[T::Output]) -> Result<ConstraintRow> {
    let n = task.num_instances();
    if outputs.len() != n {
        return Err(Error::LengthMismatch(format!("{} outputs for {n} instances", outputs.len())));
    }
    // Sum integer feature counts first and divide once, so that cancelling
    // counts give exact zeros.
    let mut acc = GroupedAccumulator::new(task.group_dims().len());
    let mut loss = 0.0;
    for (i, output) in outputs.iter().enumerate() {
        acc.add_vector(1.0, &task.features(i, output)?);
        acc.add_vector(-1.0, task.gold_features(i));
        loss += task.loss(i, output)?;
    }
    let mut p = acc.finish();
    for group in &mut p.groups {
        group.scale(1.0 / n as f64);
    }
    Ok(ConstraintRow {
        p,
        q: loss / n as f64,
    })
}

/// Working set with incrementally maintained per-group Gram matrices.
#[derive(Clone, Debug)]
pub struct WorkingSet {
    pub rows: Vec<ConstraintRow>,
    gram: Vec<Vec<Vec<f64>>>,
}

impl WorkingSet {
    pub fn new(num_groups: usize) -> Self {
        WorkingSet {
            rows: Vec::new(),
            gram: vec![Vec::new(); num_groups],
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Adds a row unless an identical one is present; returns whether it was
    /// added.
    pub fn push(&mut self, row: ConstraintRow) -> bool {
        if self.rows.contains(&row) {
            return false;
        }
        for (j, gram) in self.gram.iter_mut().enumerate() {
            let new_col: Vec<f64> = self
                .rows
                .iter()
                .map(|r| r.p.groups[j].dot(&row.p.groups[j]))
                .collect();
            for (existing, v) in gram.iter_mut().zip(&new_col) {
                existing.push(*v);
            }
            let mut last = new_col;
            last.push(row.p.groups[j].squared_norm());
            gram.push(last);
        }
        self.rows.push(row);
        true
    }

    pub fn gram(&self, group: usize) -> DMatrix<f64> {
        let s = self.rows.len();
        DMatrix::from_fn(s, s, |r, c| self.gram[group][r][c])
    }

    pub fn subproblem_state(&self, c: f64, fixed: Vec<Option<f64>>) -> SubproblemState {
        SubproblemState {
            gram: (0..self.gram.len()).map(|j| self.gram(j)).collect(),
            q: self.rows.iter().map(|r| r.q).collect(),
            c,
            fixed,
        }
    }

    /// `R_s(w) = max(0, max_r q^r + Σ_j w_jᵀ p_j^r)`; the slack is
    /// non-negative, so an empty working set gives 0.
    pub fn risk_bound(&self, weights: &GroupWeights) -> f64 {
        self.rows.iter().map(|r| r.violation(weights)).fold(0.0, f64::max)
    }
}

/// `w_j = −μ_j Σ_r α_r p_j^r`.
pub fn recover_primal(rows: &[ConstraintRow], alpha: &[f64], mu: &[f64], dims: &[usize]) -> GroupWeights {
    let mut weights = GroupWeights::zeros(dims);
    for (row, &a) in rows.iter().zip(alpha) {
        if a == 0.0 {
            continue;
        }
        for (j, block) in row.p.groups.iter().enumerate() {
            if mu[j] != 0.0 {
                block.add_scaled_to_dense(-mu[j] * a, &mut weights.groups[j]);
            }
        }
    }
    weights
}

/// Primal objective of the restricted problem at `weights`.
///
/// The regularizer is `½ Σ_pinned ‖w_j‖²/μ_j + ½ (Σ_free ‖w_j‖)² / κ` with κ
/// the mass left to free groups; with no pinned groups this is the block
/// `½ (Σ_j ‖w_j‖)²`. The slack is `max(0, max_r q^r + wᵀp^r)`.
pub fn primal_objective(working_set: &WorkingSet, weights: &GroupWeights, pinned: &[Option<f64>], c: f64) -> f64 {
    let mut reg = 0.0;
    let mut free_norm = 0.0;
    let mut kappa = 1.0;
    for (j, pin) in pinned.iter().enumerate() {
        let norm = weights.group_norm(j);
        match pin {
            Some(mu) => {
                kappa -= mu;
                if *mu > 0.0 {
                    reg += 0.5 * norm * norm / mu;
                }
            }
            None => free_norm += norm,
        }
    }
    if kappa > 1e-15 {
        reg += 0.5 * free_norm * free_norm / kappa;
    }
    reg + c * working_set.risk_bound(weights)
}

/// `(R_emp, R_s)` for `weights`, with one oracle pass over the corpus.
pub fn compute_gap<T: StructuredTask>(
    task: &T,
    weights: &GroupWeights,
    working_set: &WorkingSet,
) -> Result<(f64, f64)> {
    let outputs = decode_all(task, weights)?;
    let row = build_constraint_row(task, &outputs)?;
    Ok((row.violation(weights), working_set.risk_bound(weights)))
}

fn decode_all<T: StructuredTask>(task: &T, weights: &GroupWeights) -> Result<Vec<T::Output>> {
    (0..task.num_instances())
        .into_par_iter()
        .map(|i| task.loss_augmented(i, weights).map(|(y, _)| y))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub r_emp: f64,
    pub r_s: f64,
    /// Restricted dual objective after this iteration's solve (`None` when
    /// the iteration stopped before solving).
    pub dual_objective: Option<f64>,
    pub primal_objective: Option<f64>,
    pub working_set: usize,
    pub mu: Vec<f64>,
}

impl IterationRecord {
    pub fn gap(&self) -> f64 {
        self.r_emp - self.r_s
    }
}

impl fmt::Display for IterationRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "iter={} r_emp={:.10e} r_s={:.10e} gap={:.10e}",
            self.iteration,
            self.r_emp,
            self.r_s,
            self.gap()
        )?;
        match (self.dual_objective, self.primal_objective) {
            (Some(d), Some(p)) => write!(f, " dual={d:.10e} primal={p:.10e}")?,
            _ => write!(f, " dual=- primal=-")?,
        }
        write!(f, " ws={} mu=", self.working_set)?;
        for (j, mu) in self.mu.iter().enumerate() {
            if j > 0 {
                f.write_str(",")?;
            }
            write!(f, "{mu:.6}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HaltReason {
    Converged,
    MaxIterations,
}

impl fmt::Display for HaltReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HaltReason::Converged => "converged",
            HaltReason::MaxIterations => "max-iterations",
        })
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub weights: GroupWeights,
    pub mu: Vec<f64>,
    pub alpha: Vec<f64>,
    pub working_set: WorkingSet,
    pub trace: Vec<IterationRecord>,
    pub halt: HaltReason,
}

impl TrainOutcome {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }

    pub fn final_gap(&self) -> f64 {
        self.trace.last().map_or(f64::INFINITY, IterationRecord::gap)
    }

    pub fn final_dual(&self) -> Option<f64> {
        self.trace.iter().rev().find_map(|r| r.dual_objective)
    }
}

/// Runs the cutting-plane trainer. `observer` sees every iteration record as
/// soon as it is complete.
pub fn train<T: StructuredTask>(
    task: &T,
    config: &SolverConfig,
    mut observer: impl FnMut(&IterationRecord),
) -> Result<TrainOutcome> {
    let dims = task.group_dims();
    let m = dims.len();
    if m == 0 {
        return Err(Error::InvalidArgument("no feature groups".into()));
    }
    if task.num_instances() == 0 {
        return Err(Error::InvalidArgument("empty training corpus".into()));
    }
    config.validate(m)?;
    let pinned = config.pinned_weights(m);

    let mut weights = GroupWeights::zeros(&dims);
    let mut mu: Vec<f64> = pinned.iter().map(|p| p.unwrap_or(1.0 / m as f64)).collect();
    let mut alpha = Vec::new();
    let mut working_set = WorkingSet::new(m);
    let mut trace = Vec::new();
    let mut halt = HaltReason::MaxIterations;

    for iteration in 1..=config.max_iterations {
        let outputs = decode_all(task, &weights)?;
        let row = build_constraint_row(task, &outputs)?;
        let r_emp = row.violation(&weights);
        let r_s = working_set.risk_bound(&weights);
        let mut record = IterationRecord {
            iteration,
            r_emp,
            r_s,
            dual_objective: None,
            primal_objective: None,
            working_set: working_set.len(),
            mu: mu.clone(),
        };
        if r_emp - r_s < config.epsilon {
            observer(&record);
            trace.push(record);
            halt = HaltReason::Converged;
            break;
        }
        if !working_set.push(row) {
            debug!("iteration {iteration}: most violated row already in the working set");
        }
        let state = working_set.subproblem_state(config.c, pinned.clone());
        let solution = solve_subproblem(&state, &config.subproblem)?;
        weights = recover_primal(&working_set.rows, &solution.alpha, &solution.mu, &dims);
        if !weights.is_finite() {
            return Err(Error::Numerical(format!("non-finite weights at iteration {iteration}")));
        }
        mu = solution.mu;
        alpha = solution.alpha;
        record.dual_objective = Some(solution.dual_objective);
        record.primal_objective = Some(primal_objective(&working_set, &weights, &pinned, config.c));
        record.working_set = working_set.len();
        record.mu = mu.clone();
        observer(&record);
        trace.push(record);
    }

    Ok(TrainOutcome {
        weights,
        mu,
        alpha,
        working_set,
        trace,
        halt,
    })
}
