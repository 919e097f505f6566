use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// Horizontal compliant surface whose normal is the last task axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TableModel {
    /// Nominal surface height, m.
    pub height: f64,
    /// N/m
    pub stiffness: f64,
    /// N·s/m
    pub damping: f64,
    /// Coulomb coefficient.
    pub friction: f64,
    /// N·s/m
    pub viscous_friction: f64,
    /// Sliding speed at which Coulomb friction is ~76% developed, m/s.
    pub slip_velocity: f64,
}

impl Default for TableModel {
    fn default() -> Self {
        Self {
            height: 0.40,
            stiffness: 2e4,
            damping: 200.0,
            friction: 0.4,
            viscous_friction: 10.0,
            slip_velocity: 0.02,
        }
    }
}

impl TableModel {
    pub fn validate(&self) -> Result<(), String> {
        let ok = self.stiffness >= 0.0
            && self.damping >= 0.0
            && self.friction >= 0.0
            && self.viscous_friction >= 0.0
            && self.slip_velocity > 0.0
            && self.height.is_finite();
        if ok {
            Ok(())
        } else {
            Err("table parameters must be non-negative (slip velocity positive)".into())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContactForce {
    /// Force exerted by the table on the end effector, N.
    pub force: DVector<f64>,
    /// Normal component (≥ 0), N.
    pub normal: f64,
    /// m, positive when below the surface
    pub penetration: f64,
}

impl ContactForce {
    pub fn in_contact(&self) -> bool {
        self.normal > 0.0
    }
}

/// Unilateral spring-damper normal force with smooth Coulomb plus viscous
/// friction on the tangential axes, capped at `μ·N`.
///
/// `offset` and `offset_rate` move the surface (table lifting).
pub fn contact_force(
    table: &TableModel,
    x: &DVector<f64>,
    xdot: &DVector<f64>,
    offset: f64,
    offset_rate: f64,
) -> ContactForce {
    let m = x.len();
    let n = m - 1;
    let penetration = table.height + offset - x[n];
    let mut force = DVector::zeros(m);
    if penetration <= 0.0 {
        return ContactForce {
            force,
            normal: 0.0,
            penetration,
        };
    }
    let rate = offset_rate - xdot[n];
    let normal = (table.stiffness * penetration + table.damping * rate).max(0.0);
    force[n] = normal;
    let cap = table.friction * normal;
    if normal > 0.0 {
        for j in 0..n {
            let v = xdot[j];
            let f = cap * (v / table.slip_velocity).tanh() + table.viscous_friction * v;
            force[j] = -f.clamp(-cap, cap);
        }
    }
    ContactForce {
        force,
        normal,
        penetration,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    #[test]
    fn above_surface_no_force() {
        let t = TableModel::default();
        let c = contact_force(&t, &v(&[0.3, t.height + 0.01]), &v(&[0.1, -0.2]), 0.0, 0.0);
        assert_eq!(c.force, v(&[0.0, 0.0]));
        assert!(!c.in_contact());
    }

    #[test]
    fn static_penetration() {
        let t = TableModel::default();
        let c = contact_force(
            &t,
            &v(&[0.3, 0.0, t.height - 0.001]),
            &v(&[0.0, 0.0, 0.0]),
            0.0,
            0.0,
        );
        assert!((c.normal - 20.0).abs() < 1e-9);
        assert_eq!(c.force[0], 0.0);
    }

    #[test]
    fn separating_never_adhesive() {
        let t = TableModel::default();
        let c = contact_force(&t, &v(&[0.3, t.height - 0.0005]), &v(&[0.0, 5.0]), 0.0, 0.0);
        assert_eq!(c.normal, 0.0);
        assert_eq!(c.force, v(&[0.0, 0.0]));
    }

    #[test]
    fn friction_opposes_and_is_capped() {
        let t = TableModel::default();
        let c = contact_force(&t, &v(&[0.3, t.height - 0.001]), &v(&[0.5, 0.0]), 0.0, 0.0);
        assert!((c.force[0] + 0.4 * c.normal).abs() < 1e-9);
        let c = contact_force(
            &t,
            &v(&[0.3, t.height - 0.001]),
            &v(&[-0.001, 0.0]),
            0.0,
            0.0,
        );
        assert!(c.force[0] > 0.0 && c.force[0] < 0.4 * c.normal);
    }

    #[test]
    fn lifted_surface_pushes() {
        let t = TableModel::default();
        let c = contact_force(&t, &v(&[0.3, t.height + 0.01]), &v(&[0.0, 0.0]), 0.011, 0.0);
        assert!((c.normal - 20.0).abs() < 1e-9);
    }
}
