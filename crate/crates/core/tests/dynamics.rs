mod common;

use common::*;
use manikin::dynamics::{
    solve_velocity_explicit, solve_velocity_implicit, ImplicitSystem, ImplicitTask, TorqueSource,
    TorqueVector,
};
use manikin::linalg;
use nalgebra::{DMatrix, DVector};

fn scalar_chain(b: f64) -> manikin::Chain {
    planar(&[1.0], 1.0)
        .with_damping(DMatrix::from_element(1, 1, b))
        .unwrap()
}

fn scalar_task(k: f64, bc: f64, dx: f64) -> ImplicitTask<f64> {
    ImplicitTask {
        jacobian: DMatrix::from_element(1, 1, 1.0),
        stiffness: DMatrix::from_element(1, 1, k),
        damping: DMatrix::from_element(1, 1, bc),
        error: DVector::from_element(1, dx),
        desired_velocity: DVector::zeros(1),
    }
}

fn torque(v: &[f64]) -> TorqueVector<f64> {
    TorqueVector::new(DVector::from_column_slice(v), TorqueSource::Task).unwrap()
}

#[test]
fn explicit_rest() {
    let c = planar(&[1.0, 1.0], 1.0);
    let qdot = solve_velocity_explicit(&c, &[torque(&[0.0, 0.0])]).unwrap();
    assert_eq!(qdot, DVector::zeros(2));
}

#[test]
fn explicit_scalar_and_diagonal() {
    let qdot = solve_velocity_explicit(&scalar_chain(2.0), &[torque(&[4.0])]).unwrap();
    assert!((qdot[0] - 2.0).abs() < 1e-15);

    let c = planar(&[1.0, 1.0], 1.0)
        .with_damping(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0])))
        .unwrap();
    let qdot = solve_velocity_explicit(&c, &[torque(&[1.0, 1.0])]).unwrap();
    assert!((qdot - DVector::from_vec(vec![1.0, 0.5])).norm() < 1e-15);
}

#[test]
fn explicit_singular_damping_points_to_implicit_path() {
    let err = solve_velocity_explicit(&scalar_chain(0.0), &[torque(&[1.0])]).unwrap_err();
    assert!(
        matches!(err, manikin::Error::Singular(ref m) if m.contains("implicit")),
        "{err}"
    );
}

#[test]
fn non_finite_torque_rejected() {
    assert!(
        TorqueVector::new(DVector::from_vec(vec![f64::INFINITY]), TorqueSource::Guide).is_err()
    );
}

#[test]
fn implicit_target_reached() {
    let c = planar(&[1.0, 1.0], 1.0);
    let task = ImplicitTask {
        jacobian: random_matrix(&mut rng(1), 6, 2),
        stiffness: DMatrix::identity(6, 6) * 10.0,
        damping: DMatrix::identity(6, 6),
        error: DVector::zeros(6),
        desired_velocity: DVector::zeros(6),
    };
    let r = solve_velocity_implicit(&c, &[task], &DVector::zeros(2)).unwrap();
    assert!(r.solvable);
    assert_eq!(r.qdot, DVector::zeros(2));
}

#[test]
fn implicit_scalar_resolvent() {
    let r = solve_velocity_implicit(
        &scalar_chain(1.0),
        &[scalar_task(1.0, 1.0, 1.0)],
        &DVector::zeros(1),
    )
    .unwrap();
    assert!((r.qdot[0] - 0.5).abs() < 1e-15);
}

#[test]
fn implicit_semidefinite_damping_with_full_rank_task() {
    let r = solve_velocity_implicit(
        &scalar_chain(0.0),
        &[scalar_task(2.0, 1.0, 1.0)],
        &DVector::zeros(1),
    )
    .unwrap();
    assert!(r.solvable);
    assert!((r.qdot[0] - 2.0).abs() < 1e-15);
}

#[test]
fn implicit_reports_singular_system() {
    let mut task = scalar_task(2.0, 1.0, 1.0);
    task.jacobian[(0, 0)] = 0.0;
    let r = solve_velocity_implicit(&scalar_chain(0.0), &[task], &DVector::zeros(1)).unwrap();
    assert!(!r.solvable);
    assert_eq!(r.qdot, DVector::zeros(1));
}

#[test]
fn implicit_converges_to_explicit_as_task_damping_vanishes() {
    let mut r = rng(3);
    let c = random_chain(&mut r, 5, false);
    let jac = random_matrix(&mut r, 6, 5);
    let k = random_spd(&mut r, 6, 1.0, 5.0);
    let err = random_vector(&mut r, 6);
    let task = ImplicitTask {
        jacobian: jac.clone(),
        stiffness: k.clone(),
        damping: DMatrix::identity(6, 6) * 1e-8,
        error: err.clone(),
        desired_velocity: DVector::zeros(6),
    };
    let implicit = solve_velocity_implicit(&c, &[task], &DVector::zeros(5))
        .unwrap()
        .qdot;
    let tau = jac.transpose() * k * err;
    let explicit =
        solve_velocity_explicit(&c, &[TorqueVector::new(tau, TorqueSource::Task).unwrap()])
            .unwrap();
    let rel = (&implicit - &explicit).norm() / explicit.norm();
    assert!(rel < 1e-4, "relative error {rel:e}");
}

#[test]
fn system_matrix_is_symmetric() {
    let mut r = rng(4);
    for _ in 0..50 {
        let n = 3 + r_usize(&mut r, 8);
        let b = random_spd(&mut r, n, 0.1, 4.0);
        let tasks: Vec<_> = (0..3)
            .map(|_| ImplicitTask {
                jacobian: random_matrix(&mut r, 6, n),
                stiffness: random_spd(&mut r, 6, 0.0, 100.0),
                damping: random_spd(&mut r, 6, 0.5, 20.0),
                error: random_vector(&mut r, 6),
                desired_velocity: random_vector(&mut r, 6),
            })
            .collect();
        let sys = ImplicitSystem::assemble(&b, &tasks, &DVector::zeros(n)).unwrap();
        assert!(linalg::asymmetry(&sys.matrix) < 1e-12);
    }
}

fn r_usize(r: &mut impl rand::Rng, n: usize) -> usize {
    use rand::RngExt;
    r.random_range(0..n)
}

#[test]
fn explicit_solve_is_linear() {
    let mut r = rng(6);
    let c = random_chain(&mut r, 6, false);
    let tau = random_vector(&mut r, 6);
    let one = solve_velocity_explicit(
        &c,
        &[TorqueVector::new(tau.clone(), TorqueSource::Task).unwrap()],
    )
    .unwrap();
    let two = solve_velocity_explicit(
        &c,
        &[TorqueVector::new(tau * 2.0, TorqueSource::Task).unwrap()],
    )
    .unwrap();
    assert!((&two - &one * 2.0).norm() / two.norm() < 1e-12);
}
