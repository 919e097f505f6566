use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use vic_core::whole_body::{
    cartesian_inertia, dynamically_consistent_inverse, weighted_inverse_dynamics, weighting_matrix,
    GainTable, LocoMode, Plant, RobotModel, DEFAULT_COND_MAX,
};

fn planar() -> RobotModel {
    RobotModel::default()
}

fn joint_state() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (
        prop::collection::vec(-3.0f64..3.0, 4),
        prop::collection::vec(-2.0f64..2.0, 4),
    )
}

fn is_spd(m: &DMatrix<f64>) -> bool {
    (m - m.transpose()).amax() <= 1e-9 * m.amax().max(1.0) && m.clone().cholesky().is_some()
}

/// `q̈` of the unforced plant.
fn acceleration(p: &RobotModel, q: &DVector<f64>, qd: &DVector<f64>) -> DVector<f64> {
    let rhs = -(p.coriolis_matrix(q, qd) * qd) - p.gravity_torque(q);
    p.mass_matrix(q).cholesky().expect("M is SPD").solve(&rhs)
}

fn energy(p: &RobotModel, q: &DVector<f64>, qd: &DVector<f64>) -> f64 {
    0.5 * qd.dot(&(p.mass_matrix(q) * qd)) + p.potential_energy(q)
}

/// Power lost in the base damper.
fn base_dissipation(p: &RobotModel, qd: &DVector<f64>) -> f64 {
    p.base_damping * qd[0] * qd[0]
}

#[test]
fn unforced_energy_balance_over_one_second() {
    let p = planar();
    let mut q = DVector::from_vec(vec![0.0, -0.6, 1.6, 0.6]);
    let mut qd = DVector::from_vec(vec![0.2, 0.5, -0.8, 1.0]);
    let e0 = energy(&p, &q, &qd);
    let mut lost = 0.0;
    let h = 1e-4;
    // RK4 on (q, q̇, dissipated energy)
    for _ in 0..10_000 {
        let f = |q: &DVector<f64>, qd: &DVector<f64>| {
            (
                qd.clone(),
                acceleration(&p, q, qd),
                base_dissipation(&p, qd),
            )
        };
        let (k1q, k1v, k1e) = f(&q, &qd);
        let (k2q, k2v, k2e) = f(&(&q + &k1q * (h / 2.0)), &(&qd + &k1v * (h / 2.0)));
        let (k3q, k3v, k3e) = f(&(&q + &k2q * (h / 2.0)), &(&qd + &k2v * (h / 2.0)));
        let (k4q, k4v, k4e) = f(&(&q + &k3q * h), &(&qd + &k3v * h));
        q += (k1q + k2q * 2.0 + k3q * 2.0 + k4q) * (h / 6.0);
        qd += (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (h / 6.0);
        lost += (k1e + 2.0 * k2e + 2.0 * k3e + k4e) * (h / 6.0);
    }
    let e1 = energy(&p, &q, &qd);
    assert!(
        (e1 - e0 + lost).abs() <= 1e-6,
        "E0 {e0}, E1 {e1}, dissipated {lost}, residual {}",
        e1 - e0 + lost
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn mass_matrix_symmetric_positive_definite((q, _) in joint_state()) {
        let p = planar();
        let m = p.mass_matrix(&DVector::from_vec(q));
        prop_assert!((&m - m.transpose()).amax() <= 1e-12);
        prop_assert!(m.clone().cholesky().is_some());
        prop_assert_eq!(m[(0, 0)], p.base_inertia);
        prop_assert!((1..4).all(|i| m[(0, i)] == 0.0 && m[(i, 0)] == 0.0));
    }

    #[test]
    fn mdot_minus_two_c_is_skew_on_the_arm((q, qd) in joint_state()) {
        let p = planar();
        let (q, qd) = (DVector::from_vec(q), DVector::from_vec(qd));
        let h = 1e-6;
        let mdot = (p.mass_matrix(&(&q + &qd * h)) - p.mass_matrix(&(&q - &qd * h))) / (2.0 * h);
        let n = mdot - p.coriolis_matrix(&q, &qd) * 2.0;
        let arm = n.view((1, 1), (3, 3)).into_owned();
        let sym = (&arm + arm.transpose()).amax();
        prop_assert!(sym <= 1e-6 * (1.0 + arm.amax()), "symmetric part {sym}");
    }

    #[test]
    fn jacobian_matches_finite_differences((q, _) in joint_state()) {
        let p = planar();
        let q = DVector::from_vec(q);
        let j = p.task_jacobian(&q);
        let h = 1e-6;
        for c in 0..4 {
            let mut a = q.clone();
            let mut b = q.clone();
            a[c] += h;
            b[c] -= h;
            let fd = (p.forward_kinematics(&a) - p.forward_kinematics(&b)) / (2.0 * h);
            for r in 0..2 {
                prop_assert!((fd[r] - j[(r, c)]).abs() <= 1e-6 * (1.0 + j[(r, c)].abs()));
            }
        }
    }

    #[test]
    fn null_space_torque_never_changes_task_wrench(
        (q, _) in joint_state(),
        force in prop::collection::vec(-100.0f64..100.0, 2),
        tau0 in prop::collection::vec(-20.0f64..20.0, 4),
        extra in prop::collection::vec(-50.0f64..50.0, 4),
        h_arm in 0.5f64..20.0,
        h_base in 0.5f64..20.0,
    ) {
        let p = planar();
        let q = DVector::from_vec(q);
        let m = p.mass_matrix(&q);
        let j = p.task_jacobian(&q);
        let Ok(lambda) = cartesian_inertia(&m, &j, DEFAULT_COND_MAX) else { return Ok(()) };
        prop_assert!(is_spd(&m) && is_spd(&lambda));
        let h = DVector::from_vec(vec![h_base, h_arm, h_arm, h_arm]);
        let w = weighting_matrix(&h, &m).unwrap();
        prop_assert!(is_spd(&w));
        let force = DVector::from_vec(force);
        let tau0 = DVector::from_vec(tau0);
        let shifted = &tau0 + DVector::from_vec(extra);
        let jbar = dynamically_consistent_inverse(&m, &j, &lambda).unwrap();
        let tol = 1e-9 * (1.0 + force.amax());
        for t0 in [&tau0, &shifted] {
            let Ok(tau) = weighted_inverse_dynamics(&m, &j, &lambda, &w, &force, t0, DEFAULT_COND_MAX) else {
                return Ok(());
            };
            prop_assert!((jbar.transpose() * tau - &force).amax() <= tol);
        }
    }

    #[test]
    fn mode_gains_only_reweight_the_split(
        (q, _) in joint_state(),
        force in prop::collection::vec(-60.0f64..60.0, 2),
    ) {
        let p = planar();
        let q = DVector::from_vec(q);
        let m = p.mass_matrix(&q);
        let j = p.task_jacobian(&q);
        let Ok(lambda) = cartesian_inertia(&m, &j, DEFAULT_COND_MAX) else { return Ok(()) };
        let force = DVector::from_vec(force);
        let table = GainTable::default();
        let mut torques = Vec::new();
        for mode in [LocoMode::Manipulation, LocoMode::Locomotion] {
            let g = table.gains(mode, 1, &q);
            let w = weighting_matrix(&g.h, &m).unwrap();
            let Ok(tau) = weighted_inverse_dynamics(&m, &j, &lambda, &w, &force, &DVector::zeros(4), DEFAULT_COND_MAX) else {
                return Ok(());
            };
            torques.push(tau);
        }
        let jbar = dynamically_consistent_inverse(&m, &j, &lambda).unwrap();
        for tau in &torques {
            prop_assert!((jbar.transpose() * tau - &force).amax() <= 1e-9 * (1.0 + force.amax()));
        }
    }
}

#[test]
fn locomotion_moves_more_through_the_base() {
    // a horizontal push from a bent posture: locomotion weights the base less,
    // so the base takes a larger share of both torque and motion
    let p = planar();
    let q = DVector::from_vec(vec![0.0, -0.6, 1.6, 0.6]);
    let m = p.mass_matrix(&q);
    let j = p.task_jacobian(&q);
    let lambda = cartesian_inertia(&m, &j, DEFAULT_COND_MAX).unwrap();
    let force = DVector::from_vec(vec![20.0, 0.0]);
    let table = GainTable::default();
    let shares = |mode| {
        let g = table.gains(mode, 1, &q);
        let w = weighting_matrix(&g.h, &m).unwrap();
        let tau = weighted_inverse_dynamics(
            &m,
            &j,
            &lambda,
            &w,
            &force,
            &DVector::zeros(4),
            DEFAULT_COND_MAX,
        )
        .unwrap();
        let qdd = m.clone().cholesky().unwrap().solve(&tau);
        let motion = j[(0, 0)] * qdd[0] / (&j * &qdd)[0];
        (tau[0].abs() / tau.norm(), motion)
    };
    let (manip, loco) = (shares(LocoMode::Manipulation), shares(LocoMode::Locomotion));
    assert!(
        loco.0 > manip.0,
        "torque share: locomotion {}, manipulation {}",
        loco.0,
        manip.0
    );
    assert!(
        loco.1 > manip.1,
        "motion share: locomotion {}, manipulation {}",
        loco.1,
        manip.1
    );
}
