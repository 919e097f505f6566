//! Planar mobile manipulator: one prismatic base joint along `x` carrying a
//! serial chain of revolute links moving in the `x–z` plane. Task
//! coordinates are the tool position `(x, z)`.
//!
//! The base is a virtual admittance (inertia `M_v`, damping `D_v`) that is
//! dynamically decoupled from the arm, so the joint-space inertia is
//! block-diagonal `diag(M_v, M_a(q_a))`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Plant, WholeBodyError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    /// m
    pub length: f64,
    /// kg
    pub mass: f64,
    /// kg·m² about the link's center of mass
    pub inertia: f64,
    /// Center of mass position as a fraction of the length from the proximal joint.
    #[serde(default = "half")]
    pub com: f64,
}

fn half() -> f64 {
    0.5
}

impl Link {
    /// Uniform rod.
    pub fn rod(length: f64, mass: f64) -> Self {
        Self {
            length,
            mass,
            inertia: mass * length * length / 12.0,
            com: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobotModel {
    /// Virtual base inertia `M_v`, kg.
    pub base_inertia: f64,
    /// Virtual base damping `D_v`, N·s/m.
    pub base_damping: f64,
    /// Height of the first arm joint above the floor, m.
    pub shoulder_height: f64,
    pub links: Vec<Link>,
    /// Gravity along −z, m/s².
    pub gravity: f64,
}

impl Default for RobotModel {
    fn default() -> Self {
        Self {
            base_inertia: 40.0,
            base_damping: 200.0,
            shoulder_height: 0.55,
            links: vec![
                Link::rod(0.40, 3.0),
                Link::rod(0.35, 2.0),
                Link::rod(0.15, 1.0),
            ],
            gravity: 9.81,
        }
    }
}

struct Angles {
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl RobotModel {
    pub fn arm_dofs(&self) -> usize {
        self.links.len()
    }

    pub fn validate(&self) -> Result<(), WholeBodyError> {
        if self.links.is_empty() {
            return Err(WholeBodyError::InvalidModel(
                "at least one arm link required".into(),
            ));
        }
        if !(self.base_inertia > 0.0 && self.base_damping > 0.0) {
            return Err(WholeBodyError::InvalidModel(
                "base inertia and damping must be positive".into(),
            ));
        }
        for (i, l) in self.links.iter().enumerate() {
            if !(l.length >= 0.0 && l.mass > 0.0 && l.inertia > 0.0 && (0.0..=1.0).contains(&l.com))
            {
                return Err(WholeBodyError::InvalidModel(format!(
                    "link {i} has non-physical parameters"
                )));
            }
        }
        Ok(())
    }

    fn angles(&self, q: &DVector<f64>) -> Angles {
        let n = self.arm_dofs();
        let mut cos = Vec::with_capacity(n);
        let mut sin = Vec::with_capacity(n);
        let mut phi = 0.0;
        for i in 0..n {
            phi += q[1 + i];
            cos.push(phi.cos());
            sin.push(phi.sin());
        }
        Angles { cos, sin }
    }

    /// Lever of link `l` as seen by the center of mass of link `i` (l ≤ i).
    fn lever(&self, i: usize, l: usize) -> f64 {
        if l < i {
            self.links[l].length
        } else {
            self.links[i].com * self.links[i].length
        }
    }

    /// 2×n_a translational Jacobian of the center of mass of link `i`.
    fn com_jacobian(&self, a: &Angles, i: usize) -> DMatrix<f64> {
        let n = self.arm_dofs();
        let mut j = DMatrix::zeros(2, n);
        for col in 0..=i {
            for l in col..=i {
                let r = self.lever(i, l);
                j[(0, col)] -= r * a.sin[l];
                j[(1, col)] += r * a.cos[l];
            }
        }
        j
    }

    /// ∂J_com,i / ∂θ_k
    fn com_jacobian_derivative(&self, a: &Angles, i: usize, k: usize) -> DMatrix<f64> {
        let n = self.arm_dofs();
        let mut d = DMatrix::zeros(2, n);
        if k > i {
            return d;
        }
        for col in 0..=i {
            for l in col.max(k)..=i {
                let r = self.lever(i, l);
                d[(0, col)] -= r * a.cos[l];
                d[(1, col)] -= r * a.sin[l];
            }
        }
        d
    }

    fn arm_mass_matrix(&self, a: &Angles) -> DMatrix<f64> {
        let n = self.arm_dofs();
        let mut m = DMatrix::zeros(n, n);
        for (i, link) in self.links.iter().enumerate() {
            let j = self.com_jacobian(a, i);
            m += link.mass * j.transpose() * &j;
            for r in 0..=i {
                for c in 0..=i {
                    m[(r, c)] += link.inertia;
                }
            }
        }
        m
    }

    /// ∂M_a/∂θ_k for every k.
    fn arm_mass_derivatives(&self, a: &Angles) -> Vec<DMatrix<f64>> {
        let n = self.arm_dofs();
        (0..n)
            .map(|k| {
                let mut dm = DMatrix::zeros(n, n);
                for (i, link) in self.links.iter().enumerate() {
                    let j = self.com_jacobian(a, i);
                    let dj = self.com_jacobian_derivative(a, i, k);
                    let t = dj.transpose() * &j;
                    dm += link.mass * (&t + t.transpose());
                }
                dm
            })
            .collect()
    }

    /// Arm Coriolis/centrifugal matrix from Christoffel symbols, so that
    /// `Ṁ_a − 2 C_a` is skew-symmetric.
    fn arm_coriolis(&self, a: &Angles, qdot_arm: &[f64]) -> DMatrix<f64> {
        let n = self.arm_dofs();
        let dm = self.arm_mass_derivatives(a);
        let mut c = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += 0.5 * (dm[k][(i, j)] + dm[j][(i, k)] - dm[i][(j, k)]) * qdot_arm[k];
                }
                c[(i, j)] = s;
            }
        }
        c
    }

    fn com_positions(&self, q: &DVector<f64>, a: &Angles) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.arm_dofs());
        let (mut px, mut pz) = (q[0], self.shoulder_height);
        for (i, link) in self.links.iter().enumerate() {
            out.push((
                px + link.com * link.length * a.cos[i],
                pz + link.com * link.length * a.sin[i],
            ));
            px += link.length * a.cos[i];
            pz += link.length * a.sin[i];
        }
        out
    }
}

impl Plant for RobotModel {
    fn name(&self) -> &'static str {
        "planar-xz"
    }

    fn dofs(&self) -> usize {
        1 + self.arm_dofs()
    }

    fn base_dofs(&self) -> usize {
        1
    }

    fn task_dim(&self) -> usize {
        2
    }

    fn forward_kinematics(&self, q: &DVector<f64>) -> DVector<f64> {
        let a = self.angles(q);
        let mut x = q[0];
        let mut z = self.shoulder_height;
        for (i, link) in self.links.iter().enumerate() {
            x += link.length * a.cos[i];
            z += link.length * a.sin[i];
        }
        DVector::from_vec(vec![x, z])
    }

    fn task_jacobian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let a = self.angles(q);
        let n = self.arm_dofs();
        let mut j = DMatrix::zeros(2, 1 + n);
        j[(0, 0)] = 1.0;
        for col in 0..n {
            for l in col..n {
                j[(0, 1 + col)] -= self.links[l].length * a.sin[l];
                j[(1, 1 + col)] += self.links[l].length * a.cos[l];
            }
        }
        j
    }

    fn jacobian_derivative(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> DMatrix<f64> {
        let a = self.angles(q);
        let n = self.arm_dofs();
        let mut jd = DMatrix::zeros(2, 1 + n);
        for k in 0..n {
            let w = qdot[1 + k];
            for col in 0..n {
                for l in col.max(k)..n {
                    jd[(0, 1 + col)] -= self.links[l].length * a.cos[l] * w;
                    jd[(1, 1 + col)] -= self.links[l].length * a.sin[l] * w;
                }
            }
        }
        jd
    }

    fn mass_matrix(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let a = self.angles(q);
        let n = self.dofs();
        let mut m = DMatrix::zeros(n, n);
        m[(0, 0)] = self.base_inertia;
        m.view_mut((1, 1), (n - 1, n - 1))
            .copy_from(&self.arm_mass_matrix(&a));
        m
    }

    fn coriolis_matrix(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> DMatrix<f64> {
        let a = self.angles(q);
        let n = self.dofs();
        let qa: Vec<f64> = qdot.iter().skip(1).copied().collect();
        let mut c = DMatrix::zeros(n, n);
        c[(0, 0)] = self.base_damping;
        c.view_mut((1, 1), (n - 1, n - 1))
            .copy_from(&self.arm_coriolis(&a, &qa));
        c
    }

    fn gravity_torque(&self, q: &DVector<f64>) -> DVector<f64> {
        let a = self.angles(q);
        let n = self.dofs();
        let mut g = DVector::zeros(n);
        for (i, link) in self.links.iter().enumerate() {
            let j = self.com_jacobian(&a, i);
            for col in 0..self.arm_dofs() {
                g[1 + col] += link.mass * self.gravity * j[(1, col)];
            }
        }
        g
    }

    fn potential_energy(&self, q: &DVector<f64>) -> f64 {
        let a = self.angles(q);
        self.com_positions(q, &a)
            .iter()
            .zip(&self.links)
            .map(|((_, z), l)| l.mass * self.gravity * z)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;

    fn model() -> RobotModel {
        RobotModel::default()
    }

    #[test]
    fn straight_arm_jacobian() {
        // all joints zero: links along +x, so ∂x/∂θ = 0 and ∂z/∂θ_j = Σ_{l≥j} L_l
        let m = RobotModel {
            links: vec![Link::rod(0.5, 1.0), Link::rod(0.3, 1.0)],
            ..model()
        };
        let j = m.task_jacobian(&DVector::zeros(3));
        assert_eq!(j[(0, 0)], 1.0);
        assert_eq!(j[(1, 0)], 0.0);
        assert!(j[(0, 1)].abs() < 1e-15 && j[(0, 2)].abs() < 1e-15);
        assert!((j[(1, 1)] - 0.8).abs() < 1e-15);
        assert!((j[(1, 2)] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn zero_length_last_link_has_zero_column() {
        let mut m = model();
        m.links[2].length = 0.0;
        let q = DVector::from_vec(vec![0.1, 0.3, -0.8, 0.4]);
        let j = m.task_jacobian(&q);
        assert_eq!(j.column(3).amax(), 0.0);
    }

    #[test]
    fn no_coriolis_at_rest() {
        let m = model();
        let q = DVector::from_vec(vec![0.0, 0.7, -1.2, 0.5]);
        let c = m.coriolis_matrix(&q, &DVector::zeros(4));
        assert_eq!(max_abs(&c.view((1, 1), (3, 3)).into_owned()), 0.0);
    }

    #[test]
    fn mass_matrix_block_structure() {
        let m = model();
        let q = DVector::from_vec(vec![0.2, 0.7, -1.2, 0.5]);
        let mm = m.mass_matrix(&q);
        assert_eq!(mm[(0, 0)], m.base_inertia);
        for i in 1..4 {
            assert_eq!(mm[(0, i)], 0.0);
            assert_eq!(mm[(i, 0)], 0.0);
        }
    }

    #[test]
    fn gravity_matches_potential_gradient() {
        let m = model();
        let q = DVector::from_vec(vec![0.2, 0.7, -1.2, 0.5]);
        let g = m.gravity_torque(&q);
        let h = 1e-6;
        for i in 0..4 {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[i] += h;
            qm[i] -= h;
            let fd = (m.potential_energy(&qp) - m.potential_energy(&qm)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6, "joint {i}: {fd} vs {}", g[i]);
        }
    }
}
