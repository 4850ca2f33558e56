//! Restricted dual over the working set:
//!
//! ```text
//! max_{α, θ}  qᵀα − θ    s.t.  ½ αᵀQʲα ≤ θ  for every group j,
//!                              α ≥ 0,  Σ α ≤ C
//! ```
//!
//! The multipliers of the quadratic constraints are the group weights μ,
//! which lie on the simplex. Groups may also be pinned at a fixed μ_j; their
//! quadratic term then moves into the objective as `−½ μ_j αᵀQʲα` and the
//! remaining groups share the leftover mass `κ = 1 − Σ_fixed μ_j`, which
//! scales θ. Pinning every group gives the uniform-weight structural SVM
//! dual, a plain QP.
//!
//! Solved with a log-barrier interior-point method. Newton steps are damped
//! by `1 / (1 + λ)` (λ the Newton decrement) until λ is small, which keeps
//! iterates strictly feasible without function evaluations. At a centered
//! point with barrier parameter t the multiplier of constraint j is
//! `1 / (t · slack_j)`, and those multipliers sum to κ.

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubproblemConfig {
    /// Target bound on the barrier duality gap, relative to `max(1, |objective|)`.
    pub gap_tolerance: f64,
    /// Centering stops once half the squared Newton decrement drops below this.
    pub newton_tolerance: f64,
    pub max_newton_steps: usize,
    /// Growth factor of the barrier parameter between centering rounds.
    pub barrier_growth: f64,
}

impl Default for SubproblemConfig {
    fn default() -> Self {
        SubproblemConfig {
            gap_tolerance: 1e-11,
            newton_tolerance: 1e-14,
            max_newton_steps: 100,
            barrier_growth: 10.0,
        }
    }
}

/// Gram matrices, losses and bounds of the restricted dual.
#[derive(Clone, Debug)]
pub struct SubproblemState {
    /// `Q^j[r, r'] = ⟨p_j^r, p_j^{r'}⟩`, one `s × s` matrix per group.
    pub gram: Vec<DMatrix<f64>>,
    /// `q^r`, one per working-set row.
    pub q: Vec<f64>,
    pub c: f64,
    /// `Some(μ_j)` pins group j; `None` leaves it to the optimizer.
    pub fixed: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubproblemSolution {
    pub alpha: Vec<f64>,
    pub mu: Vec<f64>,
    /// `max_j ½ αᵀQʲα` over the free groups (0 when all are pinned).
    pub theta: f64,
    pub dual_objective: f64,
}

fn quad_form(q: &DMatrix<f64>, alpha: &DVector<f64>) -> f64 {
    0.5 * alpha.dot(&(q * alpha))
}

impl SubproblemState {
    pub fn num_rows(&self) -> usize {
        self.q.len()
    }

    pub fn num_groups(&self) -> usize {
        self.gram.len()
    }

    fn free_groups(&self) -> Vec<usize> {
        (0..self.gram.len()).filter(|&j| self.fixed[j].is_none()).collect()
    }

    fn free_mass(&self) -> f64 {
        1.0 - self.fixed.iter().flatten().sum::<f64>()
    }

    fn fixed_gram(&self) -> DMatrix<f64> {
        let s = self.num_rows();
        let mut m = DMatrix::zeros(s, s);
        for (g, mu) in self.gram.iter().zip(&self.fixed) {
            if let Some(mu) = mu {
                m += g * *mu;
            }
        }
        m
    }

    fn validate(&self) -> Result<()> {
        let s = self.num_rows();
        if s == 0 {
            return Err(Error::InvalidArgument("empty working set".into()));
        }
        if !(self.c > 0.0) {
            return Err(Error::InvalidArgument(format!("C must be positive, got {}", self.c)));
        }
        if self.fixed.len() != self.gram.len() {
            return Err(Error::InvalidArgument("fixed-weight list does not match group count".into()));
        }
        if self.gram.iter().any(|g| g.nrows() != s || g.ncols() != s) {
            return Err(Error::InvalidArgument("Gram matrix size does not match working set".into()));
        }
        let kappa = self.free_mass();
        if kappa < -1e-12 || (kappa > 1e-12 && self.free_groups().is_empty()) {
            return Err(Error::InvalidArgument(format!(
                "pinned group weights leave mass {kappa} for the free groups"
            )));
        }
        Ok(())
    }

    /// Value of the restricted dual at `alpha` (θ taken at its smallest
    /// feasible value). Tiny negative quadratic forms from round-off are
    /// clamped to zero.
    pub fn dual_value(&self, alpha: &[f64]) -> f64 {
        let a = DVector::from_column_slice(alpha);
        let linear: f64 = self.q.iter().zip(alpha).map(|(q, a)| q * a).sum();
        let fixed = quad_form(&self.fixed_gram(), &a).max(0.0);
        let theta = self.theta_at(&a);
        linear - fixed - self.free_mass().max(0.0) * theta
    }

    fn theta_at(&self, alpha: &DVector<f64>) -> f64 {
        self.free_groups()
            .into_iter()
            .map(|j| {
                let v = quad_form(&self.gram[j], alpha);
                if v < -1e-9 * (1.0 + self.gram[j].amax()) {
                    warn!("group {j}: Gram quadratic form {v:e} is negative; clamping to 0");
                }
                v.max(0.0)
            })
            .fold(0.0, f64::max)
    }
}

/// Solves the restricted dual and returns α, μ, θ and the dual objective.
pub fn solve_subproblem(state: &SubproblemState, config: &SubproblemConfig) -> Result<SubproblemSolution> {
    state.validate()?;
    let s = state.num_rows();
    let free = state.free_groups();
    let kappa = state.free_mass().max(0.0);
    let has_theta = !free.is_empty() && kappa > 0.0;
    let n = s + usize::from(has_theta);
    let fixed_gram = state.fixed_gram();
    let q = DVector::from_column_slice(&state.q);
    let c = state.c;
    let num_constraints = (s + 1 + if has_theta { free.len() } else { 0 }) as f64;

    // Strictly feasible start.
    let mut x = DVector::from_element(n, c / (2.0 * s as f64));
    if has_theta {
        let a = x.rows(0, s).into_owned();
        let theta0 = free.iter().map(|&j| quad_form(&state.gram[j], &a)).fold(0.0, f64::max);
        x[s] = theta0 + 1.0 + theta0.abs();
    }

    let objective = |x: &DVector<f64>| -> f64 {
        let a = x.rows(0, s).into_owned();
        let mut v = q.dot(&a) - quad_form(&fixed_gram, &a);
        if has_theta {
            v -= kappa * x[s];
        }
        v
    };

    let mut t = 1.0;
    let mut slacks = vec![0.0; free.len()];
    loop {
        // Centering by damped Newton on
        //   t·(κθ + ½αᵀQ_fα − qᵀα) − Σ log(θ − ½αᵀQʲα) − Σ log α_r − log(C − Σα).
        for _ in 0..config.max_newton_steps {
            let a = x.rows(0, s).into_owned();
            let mut grad = DVector::zeros(n);
            let mut hess = DMatrix::zeros(n, n);

            let qa = &fixed_gram * &a;
            {
                let mut g = grad.rows_mut(0, s);
                g += (&qa - &q) * t;
            }
            {
                let mut h = hess.view_mut((0, 0), (s, s));
                h += &fixed_gram * t;
            }
            if has_theta {
                grad[s] += t * kappa;
                for (k, &j) in free.iter().enumerate() {
                    let qj_a = &state.gram[j] * &a;
                    let slack = x[s] - 0.5 * a.dot(&qj_a);
                    slacks[k] = slack;
                    // ∇slack = (−Qʲα, 1)
                    let mut d = DVector::zeros(n);
                    d.rows_mut(0, s).copy_from(&(-&qj_a));
                    d[s] = 1.0;
                    grad -= &d / slack;
                    hess.ger(1.0 / (slack * slack), &d, &d, 1.0);
                    let mut h = hess.view_mut((0, 0), (s, s));
                    h += &state.gram[j] / slack;
                }
            }
            let budget = c - a.sum();
            for r in 0..s {
                grad[r] += -1.0 / a[r] + 1.0 / budget;
                hess[(r, r)] += 1.0 / (a[r] * a[r]);
                for r2 in 0..s {
                    hess[(r, r2)] += 1.0 / (budget * budget);
                }
            }

            let step = newton_direction(&hess, &grad)?;
            let decrement_sq = -grad.dot(&step);
            if !decrement_sq.is_finite() {
                return Err(Error::Numerical("non-finite Newton decrement in subproblem".into()));
            }
            if decrement_sq / 2.0 <= config.newton_tolerance {
                break;
            }
            let lambda = decrement_sq.max(0.0).sqrt();
            let mut size = if lambda < 0.25 { 1.0 } else { 1.0 / (1.0 + lambda) };
            // The damped step stays inside the Dikin ellipsoid; halving only
            // guards against round-off at the boundary.
            loop {
                let cand = &x + &step * size;
                if strictly_feasible(state, &free, has_theta, &cand, s) {
                    x = cand;
                    break;
                }
                size *= 0.5;
                if size < 1e-16 {
                    break;
                }
            }
            if size < 1e-16 {
                break;
            }
        }

        let gap_bound = num_constraints / t;
        if gap_bound <= config.gap_tolerance * objective(&x).abs().max(1.0) {
            break;
        }
        t *= config.barrier_growth;
        if t > 1e20 {
            break;
        }
    }

    let a = x.rows(0, s).into_owned();
    let alpha: Vec<f64> = a.iter().map(|v| v.max(0.0)).collect();
    let mut mu = vec![0.0; state.num_groups()];
    for (j, fixed) in state.fixed.iter().enumerate() {
        if let Some(m) = fixed {
            mu[j] = *m;
        }
    }
    if has_theta {
        let theta = x[s];
        let raw: Vec<f64> = free
            .iter()
            .map(|&j| 1.0 / (t * (theta - quad_form(&state.gram[j], &a)).max(f64::MIN_POSITIVE)))
            .collect();
        let total: f64 = raw.iter().sum();
        for (&j, r) in free.iter().zip(&raw) {
            mu[j] = if total > 0.0 && total.is_finite() {
                kappa * r / total
            } else {
                kappa / free.len() as f64
            };
        }
        if let Some(polished) = polish_multipliers(state, &free, kappa, &fixed_gram, &a, theta) {
            for (&j, m) in free.iter().zip(polished) {
                mu[j] = m;
            }
        }
    }
    let theta = state.theta_at(&DVector::from_column_slice(&alpha));
    let dual_objective = state.dual_value(&alpha);
    if !dual_objective.is_finite() || alpha.iter().any(|a| !a.is_finite()) {
        return Err(Error::Numerical("subproblem produced non-finite values".into()));
    }
    Ok(SubproblemSolution {
        alpha,
        mu,
        theta,
        dual_objective,
    })
}

/// Re-solves the stationarity conditions for the free-group multipliers on
/// the active rows and groups. `1/(t·slack)` loses digits to cancellation
/// once slacks are tiny, while `Qʲα` stays accurate. Returns `None` when the
/// system has no non-negative solution with a small residual.
fn polish_multipliers(
    state: &SubproblemState,
    free: &[usize],
    kappa: f64,
    fixed_gram: &DMatrix<f64>,
    a: &DVector<f64>,
    theta: f64,
) -> Option<Vec<f64>> {
    let s = a.len();
    let c = state.c;
    let scale = state.q.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let support: Vec<usize> = (0..s).filter(|&r| a[r] > 1e-6 * c.min(1.0)).collect();
    let active: Vec<usize> = free
        .iter()
        .copied()
        .filter(|&j| theta - quad_form(&state.gram[j], a) <= 1e-6 * theta.abs().max(1.0))
        .collect();
    if support.is_empty() || active.is_empty() {
        return None;
    }
    let budget_active = c - a.sum() <= 1e-6 * c;
    let cols = active.len() + usize::from(budget_active);
    let mut m = DMatrix::zeros(support.len() + 1, cols);
    let mut b = DVector::zeros(support.len() + 1);
    let directions: Vec<DVector<f64>> = active.iter().map(|&j| &state.gram[j] * a).collect();
    let fixed = fixed_gram * a;
    for (i, &r) in support.iter().enumerate() {
        for (k, d) in directions.iter().enumerate() {
            m[(i, k)] = d[r];
        }
        if budget_active {
            m[(i, active.len())] = 1.0;
        }
        b[i] = state.q[r] - fixed[r];
    }
    let last = support.len();
    for k in 0..active.len() {
        m[(last, k)] = scale;
    }
    b[last] = scale * kappa;

    let solution = m.clone().svd(true, true).solve(&b, 1e-12 * scale).ok()?;
    let residual = (&m * &solution - &b).amax();
    if !(residual <= 1e-7 * scale) {
        return None;
    }
    let floor = -1e-9 * kappa.max(1e-300);
    if solution.iter().take(active.len()).any(|&v| !(v >= floor)) || (budget_active && solution[active.len()] < -1e-9 * scale) {
        return None;
    }
    let raw: Vec<f64> = active.iter().enumerate().map(|(k, _)| solution[k].max(0.0)).collect();
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let mut out = vec![0.0; free.len()];
    for (&j, v) in active.iter().zip(raw) {
        let k = free.iter().position(|&f| f == j).unwrap();
        out[k] = kappa * v / total;
    }
    Some(out)
}

fn strictly_feasible(state: &SubproblemState, free: &[usize], has_theta: bool, x: &DVector<f64>, s: usize) -> bool {
    let a = x.rows(0, s).into_owned();
    if a.iter().any(|&v| !(v > 0.0)) || !(state.c - a.sum() > 0.0) {
        return false;
    }
    if has_theta {
        let theta = x[s];
        return free.iter().all(|&j| theta - quad_form(&state.gram[j], &a) > 0.0);
    }
    true
}

fn newton_direction(hess: &DMatrix<f64>, grad: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(chol) = hess.clone().cholesky() {
        return Ok(-chol.solve(grad));
    }
    // Barrier Hessians are positive definite; a failed factorization is a
    // conditioning problem, so retry with growing diagonal regularization.
    let scale = hess.diagonal().amax().max(1.0);
    let mut reg = 1e-14 * scale;
    while reg < scale {
        let mut h = hess.clone();
        for i in 0..h.nrows() {
            h[(i, i)] += reg;
        }
        if let Some(chol) = h.cholesky() {
            return Ok(-chol.solve(grad));
        }
        reg *= 100.0;
    }
    Err(Error::Numerical("barrier Hessian is not positive definite".into()))
}
