//! Exact active-set enumeration for very small convex QPs.
//!
//! Solves
//!
//! ```text
//! min  ½ xᵀ H x + gᵀ x + c
//! s.t. lower ≤ x ≤ upper
//!      aᵢᵀ x ≤ bᵢ        (general rows)
//! ```
//!
//! with `H` positive definite. Every combination of bound status
//! (free / at lower / at upper) and subset of general rows is tried; each
//! candidate is the closed-form solution of the equality-constrained KKT
//! system on that working set. A candidate that is primal and dual feasible
//! is the unique optimum. With three variables and one general row this is at
//! most 54 tiny linear solves, which beats any iterative method on latency
//! and has no convergence tolerance to tune.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("hessian is not positive definite")]
    NotConvex,
    #[error("infeasible constraint set")]
    Infeasible,
}

/// One general inequality `normalᵀ x ≤ bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub normal: DVector<f64>,
    pub bound: f64,
}

impl LinearConstraint {
    pub fn new(normal: DVector<f64>, bound: f64) -> Self {
        Self { normal, bound }
    }

    /// `normalᵀ x − bound`; positive means violated.
    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        self.normal.dot(x) - self.bound
    }
}

#[derive(Debug, Clone)]
pub struct SmallQp {
    pub hessian: DMatrix<f64>,
    pub gradient: DVector<f64>,
    pub constant: f64,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    pub rows: Vec<LinearConstraint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundStatus {
    Free,
    AtLower,
    AtUpper,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    /// Per-variable bound status at the optimum.
    pub bounds: Vec<BoundStatus>,
    /// Multipliers of the bound constraints (lower, upper), both ≥ 0.
    pub bound_multipliers: Vec<(f64, f64)>,
    /// Multipliers of the general rows, ≥ 0 and zero for inactive rows.
    pub row_multipliers: Vec<f64>,
    pub kkt_residual: f64,
}

impl QpSolution {
    pub fn row_active(&self, i: usize) -> bool {
        self.row_multipliers[i] > 0.0
    }
}

impl SmallQp {
    pub fn dim(&self) -> usize {
        self.gradient.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) + self.gradient.dot(x) + self.constant
    }

    fn check(&self) -> Result<(), QpError> {
        let n = self.dim();
        if self.hessian.nrows() != n || self.hessian.ncols() != n {
            return Err(QpError::Dimension(format!(
                "hessian {}x{} for {} variables",
                self.hessian.nrows(),
                self.hessian.ncols(),
                n
            )));
        }
        if self.lower.len() != n || self.upper.len() != n {
            return Err(QpError::Dimension("bounds".into()));
        }
        if self.rows.iter().any(|r| r.normal.len() != n) {
            return Err(QpError::Dimension("constraint row".into()));
        }
        if self.hessian.clone().cholesky().is_none() {
            return Err(QpError::NotConvex);
        }
        if (0..n).any(|i| self.lower[i] > self.upper[i]) {
            return Err(QpError::Infeasible);
        }
        Ok(())
    }

    pub fn solve(&self) -> Result<QpSolution, QpError> {
        self.check()?;
        let n = self.dim();
        let p = self.rows.len();
        let scale = 1.0
            + self.gradient.amax()
            + self.lower.amax().min(1e12)
            + self.upper.amax().min(1e12)
            + self.rows.iter().map(|r| r.bound.abs()).fold(0.0, f64::max);
        let feas_tol = 1e-12 * scale;
        let dual_tol = 1e-9 * scale;

        let mut best: Option<QpSolution> = None;
        let mut status = vec![BoundStatus::Free; n];
        let combos = 3usize.pow(n as u32);
        for code in 0..combos {
            let mut c = code;
            let mut skip = false;
            for (i, s) in status.iter_mut().enumerate() {
                *s = match c % 3 {
                    0 => BoundStatus::Free,
                    1 => BoundStatus::AtLower,
                    _ => BoundStatus::AtUpper,
                };
                c /= 3;
                // a collapsed interval is represented only by AtLower
                let degenerate = self.lower[i] == self.upper[i];
                match *s {
                    BoundStatus::AtLower if !self.lower[i].is_finite() => skip = true,
                    BoundStatus::AtUpper if !self.upper[i].is_finite() || degenerate => skip = true,
                    _ => {}
                }
            }
            if skip {
                continue;
            }
            let free: Vec<usize> = (0..n).filter(|&i| status[i] == BoundStatus::Free).collect();
            for subset in 0..(1usize << p) {
                let active: Vec<usize> = (0..p).filter(|&j| subset & (1 << j) != 0).collect();
                if active.len() > free.len() {
                    continue;
                }
                if let Some(cand) = self.candidate(&status, &free, &active, feas_tol, dual_tol) {
                    let better = match &best {
                        None => true,
                        Some(b) => {
                            let tie = 1e-12 * (1.0 + b.objective.abs());
                            cand.objective < b.objective - tie
                                || ((cand.objective - b.objective).abs() <= tie
                                    && lexicographically_smaller(&cand.x, &b.x))
                        }
                    };
                    if better {
                        best = Some(cand);
                    }
                }
            }
        }
        best.ok_or(QpError::Infeasible)
    }

    fn candidate(
        &self,
        status: &[BoundStatus],
        free: &[usize],
        active: &[usize],
        feas_tol: f64,
        dual_tol: f64,
    ) -> Option<QpSolution> {
        let n = self.dim();
        let mut x = DVector::zeros(n);
        for i in 0..n {
            x[i] = match status[i] {
                BoundStatus::AtLower => self.lower[i],
                BoundStatus::AtUpper => self.upper[i],
                BoundStatus::Free => 0.0,
            };
        }
        let nf = free.len();
        let na = active.len();
        let mut lambda = vec![0.0; self.rows.len()];
        if nf > 0 {
            // KKT on the free block: [H_ff A_fᵀ; A_f 0] [x_f; λ] = [−g_f − H_fF x_F; b − A_F x_F]
            let dim = nf + na;
            let mut kkt = DMatrix::zeros(dim, dim);
            let mut rhs = DVector::zeros(dim);
            for (a, &i) in free.iter().enumerate() {
                for (b, &j) in free.iter().enumerate() {
                    kkt[(a, b)] = self.hessian[(i, j)];
                }
                let mut r = -self.gradient[i];
                for j in 0..n {
                    if status[j] != BoundStatus::Free {
                        r -= self.hessian[(i, j)] * x[j];
                    }
                }
                rhs[a] = r;
            }
            for (r, &row) in active.iter().enumerate() {
                let c = &self.rows[row];
                let mut b = c.bound;
                for j in 0..n {
                    if status[j] != BoundStatus::Free {
                        b -= c.normal[j] * x[j];
                    }
                }
                for (a, &i) in free.iter().enumerate() {
                    kkt[(nf + r, a)] = c.normal[i];
                    kkt[(a, nf + r)] = c.normal[i];
                }
                rhs[nf + r] = b;
            }
            let lu = kkt.lu();
            if !lu.is_invertible() {
                return None;
            }
            let sol = lu.solve(&rhs)?;
            if sol.iter().any(|v| !v.is_finite()) {
                return None;
            }
            for (a, &i) in free.iter().enumerate() {
                x[i] = sol[a];
            }
            for (r, &row) in active.iter().enumerate() {
                lambda[row] = sol[nf + r];
            }
        } else if na > 0 {
            return None;
        }

        // primal feasibility
        for i in 0..n {
            if x[i] < self.lower[i] - feas_tol || x[i] > self.upper[i] + feas_tol {
                return None;
            }
        }
        for (j, c) in self.rows.iter().enumerate() {
            let v = c.violation(&x);
            if v > feas_tol * (1.0 + c.normal.amax() * x.amax()) {
                return None;
            }
            if active.contains(&j) && lambda[j] < -dual_tol {
                return None;
            }
        }

        // bound multipliers from stationarity: Hx + g + Aᵀλ − μ_L + μ_U = 0
        let mut grad = &self.hessian * &x + &self.gradient;
        for (j, c) in self.rows.iter().enumerate() {
            grad += &c.normal * lambda[j];
        }
        let mut bound_multipliers = vec![(0.0, 0.0); n];
        let mut stationarity: f64 = 0.0;
        for i in 0..n {
            match status[i] {
                BoundStatus::Free => stationarity = stationarity.max(grad[i].abs()),
                BoundStatus::AtLower => {
                    // a collapsed interval accepts a multiplier of either sign
                    if self.lower[i] == self.upper[i] {
                        bound_multipliers[i] = (grad[i].max(0.0), (-grad[i]).max(0.0));
                        continue;
                    }
                    if grad[i] < -dual_tol {
                        return None;
                    }
                    bound_multipliers[i].0 = grad[i].max(0.0);
                }
                BoundStatus::AtUpper => {
                    if grad[i] > dual_tol {
                        return None;
                    }
                    bound_multipliers[i].1 = (-grad[i]).max(0.0);
                }
            }
        }
        for l in lambda.iter_mut() {
            *l = l.max(0.0);
        }
        // snap to the box so bound constraints hold exactly
        for i in 0..n {
            x[i] = x[i].clamp(self.lower[i], self.upper[i]);
        }

        let mut residual = stationarity;
        for (j, c) in self.rows.iter().enumerate() {
            let v = c.violation(&x);
            residual = residual.max(v.max(0.0));
            residual = residual.max((lambda[j] * v).abs());
        }
        let objective = self.objective(&x);
        Some(QpSolution {
            x,
            objective,
            bounds: status.to_vec(),
            bound_multipliers,
            row_multipliers: lambda,
            kkt_residual: residual,
        })
    }
}

fn lexicographically_smaller(a: &DVector<f64>, b: &DVector<f64>) -> bool {
    for (x, y) in a.iter().zip(b.iter()) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}
