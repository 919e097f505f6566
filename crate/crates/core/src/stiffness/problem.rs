//! One-step stiffness QP:
//!
//! ```text
//! min_k  ½ ( ‖F_ext(k) − F_d‖²_Q + ‖k − k_min‖²_R )
//! s.t.   k_min ≤ k ≤ k_max
//!        −F_max ≤ F_ext(k) ≤ F_max
//!        cᵀ k ≤ b                      (tank, when active)
//! ```
//!
//! `F_ext(k) = a + diag(x̃) k` so the payload rows are single-variable and are
//! folded into the bounds before the active-set solve.

use nalgebra::{DMatrix, DVector};

use super::envelope::{QpWeights, StiffnessEnvelope};
use super::interaction::AffineWrench;
use super::qp::{LinearConstraint, QpError, SmallQp};
use super::StiffnessError;

#[derive(Debug, Clone)]
pub struct StiffnessProblem<'a> {
    pub wrench: &'a AffineWrench,
    pub desired_force: &'a DVector<f64>,
    pub weights: &'a QpWeights,
    pub envelope: &'a StiffnessEnvelope,
    pub tank: Option<&'a LinearConstraint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AxisActivity {
    pub at_k_min: bool,
    pub at_k_max: bool,
    pub payload: bool,
}

#[derive(Debug, Clone)]
pub struct StiffnessSolution {
    pub stiffness: DVector<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub axes: Vec<AxisActivity>,
    pub tank_active: bool,
}

impl StiffnessProblem<'_> {
    pub fn dim(&self) -> usize {
        self.desired_force.len()
    }

    /// Objective evaluated directly from its definition.
    pub fn objective(&self, k: &DVector<f64>) -> f64 {
        let f = self.wrench.eval(k);
        let mut total = 0.0;
        for j in 0..self.dim() {
            let e = f[j] - self.desired_force[j];
            let s = k[j] - self.envelope.k_min[j];
            total += self.weights.q[j] * e * e + self.weights.r[j] * s * s;
        }
        0.5 * total
    }

    /// Largest violation of any constraint at `k` (≤ 0 when feasible).
    pub fn max_violation(&self, k: &DVector<f64>) -> f64 {
        let f = self.wrench.eval(k);
        let mut worst = f64::NEG_INFINITY;
        for j in 0..self.dim() {
            worst = worst
                .max(self.envelope.k_min[j] - k[j])
                .max(k[j] - self.envelope.k_max[j])
                .max(f[j].abs() - self.envelope.f_max[j]);
        }
        if let Some(c) = self.tank {
            worst = worst.max(c.violation(k));
        }
        worst
    }

    fn check_dims(&self) -> Result<(), StiffnessError> {
        let m = self.dim();
        let ok = self.wrench.offset.len() == m
            && self.wrench.slope.len() == m
            && self.weights.q.len() == m
            && self.weights.r.len() == m
            && self.envelope.dim() == m
            && self.tank.map_or(true, |c| c.normal.len() == m);
        if ok {
            Ok(())
        } else {
            Err(StiffnessError::Dimension)
        }
    }
}

/// Per-axis interval from the box intersected with the payload rows.
/// Returns `(lo, hi, lo_from_payload, hi_from_payload)`.
fn axis_interval(
    problem: &StiffnessProblem<'_>,
    j: usize,
) -> Result<(f64, f64, bool, bool), StiffnessError> {
    let a = problem.wrench.offset[j];
    let s = problem.wrench.slope[j];
    let fmax = problem.envelope.f_max[j];
    let mut lo = problem.envelope.k_min[j];
    let mut hi = problem.envelope.k_max[j];
    let (mut lo_p, mut hi_p) = (false, false);
    if s == 0.0 {
        if a.abs() > fmax {
            return Err(StiffnessError::Infeasible { axis: Some(j) });
        }
    } else {
        // −F_max ≤ a + s k ≤ F_max
        let (p_lo, p_hi) = if s > 0.0 {
            ((-fmax - a) / s, (fmax - a) / s)
        } else {
            ((fmax - a) / s, (-fmax - a) / s)
        };
        if p_lo > lo {
            lo = p_lo;
            lo_p = true;
        }
        if p_hi < hi {
            hi = p_hi;
            hi_p = true;
        }
    }
    if lo > hi {
        return Err(StiffnessError::Infeasible { axis: Some(j) });
    }
    Ok((lo, hi, lo_p, hi_p))
}

pub fn solve_stiffness_qp(
    problem: &StiffnessProblem<'_>,
) -> Result<StiffnessSolution, StiffnessError> {
    problem.check_dims()?;
    let m = problem.dim();
    let mut lower = DVector::zeros(m);
    let mut upper = DVector::zeros(m);
    let mut from_payload = vec![(false, false); m];
    for j in 0..m {
        let (lo, hi, lp, hp) = axis_interval(problem, j)?;
        lower[j] = lo;
        upper[j] = hi;
        from_payload[j] = (lp, hp);
    }

    // ½ Q (a + s k − F_d)² + ½ R (k − k_min)²
    let mut h = DVector::zeros(m);
    let mut g = DVector::zeros(m);
    let mut constant = 0.0;
    for j in 0..m {
        let (q, r) = (problem.weights.q[j], problem.weights.r[j]);
        let s = problem.wrench.slope[j];
        let e0 = problem.wrench.offset[j] - problem.desired_force[j];
        let kmin = problem.envelope.k_min[j];
        h[j] = q * s * s + r;
        g[j] = q * s * e0 - r * kmin;
        constant += 0.5 * (q * e0 * e0 + r * kmin * kmin);
    }
    let qp = SmallQp {
        hessian: DMatrix::from_diagonal(&h),
        gradient: g,
        constant,
        lower,
        upper,
        rows: problem.tank.cloned().into_iter().collect(),
    };
    let sol = qp.solve().map_err(|e| match e {
        QpError::Infeasible => StiffnessError::Infeasible { axis: None },
        QpError::NotConvex => StiffnessError::Dimension,
        QpError::Dimension(_) => StiffnessError::Dimension,
    })?;

    let axes = (0..m)
        .map(|j| {
            let (lp, hp) = from_payload[j];
            // by value: an unconstrained optimum can land exactly on a bound
            let tol = 1e-12 * (1.0 + qp.upper[j].abs());
            let at_lo = sol.x[j] <= qp.lower[j] + tol;
            let at_hi = sol.x[j] >= qp.upper[j] - tol;
            AxisActivity {
                at_k_min: at_lo && !lp,
                at_k_max: at_hi && !hp,
                payload: (at_lo && lp) || (at_hi && hp),
            }
        })
        .collect();
    let tank_active = problem.tank.is_some() && sol.row_active(0);
    Ok(StiffnessSolution {
        objective: problem.objective(&sol.x),
        stiffness: sol.x,
        kkt_residual: sol.kkt_residual,
        axes,
        tank_active,
    })
}
