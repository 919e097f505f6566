use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use vic_core::admittance::{step_admittance, AdmittanceLevel, AdmittanceParams};
use vic_core::gmm::{Reference, ReferenceFlags, ReferenceSample};
use vic_core::sim::{
    contact_force, run_episode, DisturbanceScript, EpisodeSetup, TableModel, WorldConfig,
};
use vic_core::stiffness::{
    solve_stiffness_qp, tank_step, AffineWrench, QpWeights, StiffnessEnvelope, StiffnessMode,
    StiffnessProblem, TankParams, TankState, VicController, VicParams,
};
use vic_core::whole_body::{GainTable, LocoMode, PlantModel};

fn vec3() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tank_balance_is_exact(
        steps in prop::collection::vec((vec3(), vec3(), prop::collection::vec(0.0f64..800.0, 3)), 1..200),
    ) {
        let d = DVector::from_element(3, 30.0);
        let mut tank = TankState::new(&TankParams::default());
        let start = tank.energy;
        let mut sum = 0.0;
        for (x, v, k) in steps {
            let (x, v, k) = (DVector::from_vec(x) * 0.05, DVector::from_vec(v), DVector::from_vec(k));
            let (next, flow) = tank_step(&tank, &x, &v, &d, &k, 1e-3);
            prop_assert_eq!(next.energy, tank.energy + flow.delta);
            prop_assert!(flow.stored_dissipation >= 0.0);
            if !tank.is_active() {
                prop_assert_eq!(flow.stiffness_power, 0.0);
            }
            sum += flow.delta;
            tank = next;
        }
        prop_assert!((tank.energy - start - sum).abs() <= 1e-9);
    }

    #[test]
    fn os_tank_stays_above_floor_and_clamps_at_it(
        steps in prop::collection::vec((vec3(), vec3(), vec3(), -30.0f64..0.0), 1..400),
    ) {
        let params = VicParams {
            tank: TankParams { epsilon: 0.4, t_max: 5.0, x_t0: 0.95 },
            ..VicParams::table_cleaning(3)
        };
        let k_min = params.envelope.k_min.clone();
        let mut vic = VicController::new(StiffnessMode::Os, params, 1e-3).unwrap();
        for (xd, x, v, fz) in steps {
            let xd = DVector::from_vec(xd) * 0.02;
            let x = DVector::from_vec(x) * 0.02;
            let v = DVector::from_vec(v) * 0.5;
            let fd = DVector::from_vec(vec![0.0, 0.0, fz]);
            let depleted = vic.tank().energy <= vic.tank().epsilon;
            let out = vic.step(&xd, &fd, &x, &v, None).unwrap();
            if depleted {
                prop_assert_eq!(&out.stiffness, &k_min);
            }
            prop_assert!(out.tank.energy >= out.tank.epsilon, "T = {}", out.tank.energy);
            prop_assert!(out.stiffness.iter().zip(k_min.iter()).all(|(k, lo)| k >= lo));
        }
    }

    #[test]
    fn larger_force_weight_never_worsens_force_error(
        slope in 0.001f64..0.05,
        offset in -5.0f64..5.0,
        desired in -40.0f64..40.0,
    ) {
        let wrench = AffineWrench { offset: DVector::from_element(1, offset), slope: DVector::from_element(1, slope) };
        let f_d = DVector::from_element(1, desired);
        let envelope = StiffnessEnvelope::uniform(1, 200.0, 1000.0, 60.0);
        let mut last = f64::INFINITY;
        for q in [0.0, 10.0, 100.0, 1e3, 3.2e3, 1e4, 1e5, 1e6] {
            let weights = QpWeights::uniform(1, q, 1.0);
            let p = StiffnessProblem { wrench: &wrench, desired_force: &f_d, weights: &weights, envelope: &envelope, tank: None };
            let Ok(sol) = solve_stiffness_qp(&p) else { return Ok(()) };
            let err = (wrench.eval(&sol.stiffness)[0] - desired).abs();
            prop_assert!(err <= last + 1e-9, "Q = {q}: error {err} after {last}");
            last = err;
        }
    }

    #[test]
    fn free_admittance_loses_kinetic_energy(
        v0 in vec3(),
        level in prop::sample::select(vec![AdmittanceLevel::Low, AdmittanceLevel::Medium, AdmittanceLevel::High]),
        dt in 1e-4f64..0.01,
    ) {
        let p = AdmittanceParams::level(level, 3);
        let mut x = DVector::zeros(3);
        let mut v = DVector::from_vec(v0);
        let ke = |v: &DVector<f64>| 0.5 * v.iter().zip(p.mass.iter()).map(|(a, m)| m * a * a).sum::<f64>();
        let mut last = ke(&v);
        for _ in 0..200 {
            (x, v) = step_admittance(&x, &v, &DVector::zeros(3), &p, None, dt).unwrap();
            let now = ke(&v);
            prop_assert!(now <= last);
            last = now;
        }
    }

    #[test]
    fn masked_axes_never_move(
        x0 in vec3(),
        v0 in vec3(),
        pushes in prop::collection::vec(vec3(), 1..50),
        mask in prop::collection::vec(any::<bool>(), 3),
    ) {
        let p = AdmittanceParams::level(AdmittanceLevel::High, 3);
        let (x_start, v_start) = (DVector::from_vec(x0), DVector::from_vec(v0));
        let (mut x, mut v) = (x_start.clone(), v_start.clone());
        for l in pushes {
            (x, v) = step_admittance(&x, &v, &(DVector::from_vec(l) * 50.0), &p, Some(&mask), 1e-3).unwrap();
        }
        for j in 0..3 {
            if !mask[j] {
                prop_assert_eq!(x[j].to_bits(), x_start[j].to_bits());
                prop_assert_eq!(v[j].to_bits(), v_start[j].to_bits());
            }
        }
    }

    #[test]
    fn contact_is_unilateral(
        x in vec3(),
        v in vec3(),
        offset in -0.02f64..0.02,
        rate in -0.5f64..0.5,
    ) {
        let table = TableModel::default();
        let x = DVector::from_vec(vec![x[0], x[1], table.height + 0.01 * x[2]]);
        let c = contact_force(&table, &x, &(DVector::from_vec(v) * 2.0), offset, rate);
        prop_assert!(c.normal >= 0.0 && c.force[2] >= 0.0);
        let cap = table.friction * c.normal;
        prop_assert!(c.force[0].abs() <= cap && c.force[1].abs() <= cap);
    }
}

fn point_setup() -> EpisodeSetup {
    EpisodeSetup {
        plant: PlantModel::Point3d(Default::default()),
        table: TableModel::default(),
        world: WorldConfig::default(),
        gains: GainTable::default(),
        loco_mode: LocoMode::Manipulation,
        vic: VicParams::table_cleaning(3),
        initial_posture: vec![0.0; 3],
        safety_window: 0.05,
        force_noise: 0.2,
    }
}

/// Approach, press and slide along x for `seconds`.
fn press_and_slide(seconds: f64) -> Reference {
    let n = (seconds * 1000.0) as usize;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 * 1e-3;
            let z = if t < 0.5 { 0.45 - 0.1 * t } else { 0.385 };
            let x = 0.5 + 0.05 * (t - 0.5).max(0.0);
            let fz = if t < 0.5 { 0.0 } else { -15.0 };
            ReferenceSample {
                t,
                x_d: DVector::from_vec(vec![x, 0.0, z]),
                xdot_d: DVector::zeros(3),
                f_d: DVector::from_vec(vec![0.0, 0.0, fz]),
                output_covariance: DMatrix::identity(9, 9),
            }
        })
        .collect();
    Reference {
        samples,
        flags: ReferenceFlags::default(),
    }
}

#[test]
fn episodes_are_reproducible_and_contact_stays_unilateral() {
    let setup = point_setup();
    let r = press_and_slide(2.0);
    let a = run_episode(
        &setup,
        StiffnessMode::Os,
        &r,
        &DisturbanceScript::none(),
        9,
        "h",
    )
    .unwrap();
    let b = run_episode(
        &setup,
        StiffnessMode::Os,
        &r,
        &DisturbanceScript::none(),
        9,
        "h",
    )
    .unwrap();
    assert_eq!(a, b);
    assert!(a.rows.iter().any(|row| row.normal > 5.0));
    assert!(a.rows.iter().all(|row| row.normal >= 0.0));
    assert!(a.rows.iter().all(|row| row.tank >= a.tank_epsilon));
    let c = run_episode(
        &setup,
        StiffnessMode::Os,
        &r,
        &DisturbanceScript::none(),
        10,
        "h",
    )
    .unwrap();
    assert_ne!(a.rows, c.rows, "seed should reach the force noise");
}

#[test]
fn constant_modes_emit_their_bound() {
    let setup = point_setup();
    let r = press_and_slide(1.0);
    let ls = run_episode(
        &setup,
        StiffnessMode::Ls,
        &r,
        &DisturbanceScript::none(),
        1,
        "h",
    )
    .unwrap();
    let hs = run_episode(
        &setup,
        StiffnessMode::Hs,
        &r,
        &DisturbanceScript::none(),
        1,
        "h",
    )
    .unwrap();
    assert!(ls.rows.iter().all(|row| row.k == vec![200.0; 3]));
    assert!(hs.rows.iter().all(|row| row.k == vec![1000.0; 3]));
}
