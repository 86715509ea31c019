mod common;

use std::f64::consts::FRAC_PI_2;

use common::*;
use manikin::chain::{
    self, forward_kinematics, frame_jacobian, integrate, integrate_field, lie, link_tip, retract,
    ChainFile, JointKind, KinematicChain, SimState,
};
use nalgebra::{DMatrix, DVector, Matrix4, Point3, UnitQuaternion, Vector3};

/// Homogeneous transform of a joint, built from Rodrigues' formula.
fn joint_matrix(kind: &JointKind<f64>, q: f64) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    match kind {
        JointKind::Revolute { axis } => {
            let (x, y, z) = (axis.x, axis.y, axis.z);
            let k = nalgebra::Matrix3::new(0.0, -z, y, z, 0.0, -x, -y, x, 0.0);
            let r = nalgebra::Matrix3::identity() + k * q.sin() + k * k * (1.0 - q.cos());
            m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        }
        JointKind::Prismatic { axis } => {
            m[(0, 3)] = axis.x * q;
            m[(1, 3)] = axis.y * q;
            m[(2, 3)] = axis.z * q;
        }
        JointKind::FloatingBase => unreachable!(),
    }
    m
}

fn fk_by_hand(chain: &KinematicChain<f64>, state: &SimState<f64>) -> Vec<Matrix4<f64>> {
    let mut out: Vec<Matrix4<f64>> = Vec::new();
    for (i, (link, joint)) in chain.links().iter().zip(chain.joints()).enumerate() {
        let parent = link
            .parent
            .map(|p| out[p])
            .unwrap_or_else(Matrix4::identity);
        let motion = match &joint.kind {
            JointKind::FloatingBase => state.base.unwrap().to_homogeneous(),
            k => joint_matrix(k, state.joints[chain.coordinate_index(i).unwrap()]),
        };
        out.push(parent * link.origin.to_homogeneous() * motion);
    }
    out
}

/// Central differences of the point pose along each velocity direction.
fn fd_jacobian(
    chain: &KinematicChain<f64>,
    state: &SimState<f64>,
    link: usize,
    p: &Vector3<f64>,
    h: f64,
) -> DMatrix<f64> {
    let n = chain.dof();
    let mut jac = DMatrix::zeros(6, n);
    for k in 0..n {
        let mut e = DVector::zeros(n);
        e[k] = h;
        let plus = forward_kinematics(chain, &retract(chain, state, &e)).unwrap();
        let minus = forward_kinematics(chain, &retract(chain, state, &(-e))).unwrap();
        let dp = (plus[link] * Point3::from(*p)).coords - (minus[link] * Point3::from(*p)).coords;
        let dr = lie::so3_log(&(plus[link].rotation * minus[link].rotation.inverse()));
        for r in 0..3 {
            jac[(r, k)] = dp[r] / (2.0 * h);
            jac[(r + 3, k)] = dr[r] / (2.0 * h);
        }
    }
    jac
}

#[test]
fn planar_two_link_straight_and_quarter_turn() {
    let c = planar(&[1.0, 1.0], 1.0);
    let s = SimState::from_joints(&c, &[0.0, 0.0]).unwrap();
    let tip = link_tip(&c, &forward_kinematics(&c, &s).unwrap(), 1);
    assert!((tip - Vector3::new(2.0, 0.0, 0.0)).norm() < 1e-15);

    let s = SimState::from_joints(&c, &[FRAC_PI_2, 0.0]).unwrap();
    let tip = link_tip(&c, &forward_kinematics(&c, &s).unwrap(), 1);
    assert!((tip - Vector3::new(0.0, 2.0, 0.0)).norm() < 1e-15);
}

#[test]
fn fk_matches_composition_oracle() {
    let mut r = rng(11);
    for _ in 0..50 {
        let c = random_chain(&mut r, 5, false);
        let s = random_state(&mut r, &c);
        let ours = forward_kinematics(&c, &s).unwrap();
        let oracle = fk_by_hand(&c, &s);
        for (a, b) in ours.iter().zip(&oracle) {
            assert!((a.to_homogeneous() - b).abs().max() < 1e-12);
        }
    }
}

#[test]
fn fk_rejects_dimension_mismatch() {
    let c = planar(&[1.0, 1.0], 1.0);
    let mut s = SimState::neutral(&c);
    s.joints = DVector::zeros(3);
    assert!(matches!(
        forward_kinematics(&c, &s),
        Err(manikin::Error::Config(_))
    ));
}

#[test]
fn unit_lever_jacobian() {
    let c = planar(&[1.0], 1.0);
    let s = SimState::neutral(&c);
    let j = frame_jacobian(&c, &s, 0, &Vector3::new(1.0, 0.0, 0.0)).unwrap();
    let expected = DVector::from_vec(vec![0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
    assert!((j.column(0) - expected).norm() < 1e-15);
}

#[test]
fn jacobian_rejects_bad_link() {
    let c = planar(&[1.0], 1.0);
    let s = SimState::neutral(&c);
    assert!(frame_jacobian(&c, &s, 3, &Vector3::zeros()).is_err());
}

#[test]
fn jacobian_matches_finite_differences() {
    let mut r = rng(5);
    for trial in 0..100 {
        let c = random_chain(&mut r, 1 + trial % 7, trial % 3 == 0);
        let s = random_state(&mut r, &c);
        let link = r.random_range(0..c.links().len());
        let p = random_vector(&mut r, 3);
        let p = Vector3::new(p[0], p[1], p[2]);
        let j = frame_jacobian(&c, &s, link, &p).unwrap();
        let fd = fd_jacobian(&c, &s, link, &p, 1e-7);
        let err = (&j - &fd).abs().max();
        assert!(err < 1e-6, "trial {trial}: max error {err:e}");
    }
}

use rand::RngExt;

#[test]
fn null_space_velocities_do_not_move_the_point() {
    let mut r = rng(8);
    let c = random_chain(&mut r, 9, false);
    let s = random_state(&mut r, &c);
    let j = frame_jacobian(&c, &s, 8, &Vector3::new(0.1, 0.2, 0.0)).unwrap();
    // pad to square so the SVD returns a full Vᵀ
    let mut padded = DMatrix::zeros(9, 9);
    padded.rows_mut(0, 6).copy_from(&j);
    let vt = padded.svd(false, true).v_t.unwrap();
    // rows of Vᵀ past the rank span the kernel
    for k in 6..9 {
        let qdot = vt.row(k).transpose();
        assert!((&j * qdot).norm() < 1e-10);
    }
}

#[test]
fn integrate_zero_velocity_only_advances_time() {
    let mut r = rng(2);
    let c = random_chain(&mut r, 4, true);
    let s = random_state(&mut r, &c);
    let next = integrate(&c, &s, &DVector::zeros(c.dof()), 0.01).unwrap();
    assert_eq!(next.joints, s.joints);
    assert_eq!(next.base, s.base);
    assert!((next.t - 0.01).abs() < 1e-18);
}

#[test]
fn integrate_linear_flow_is_exact() {
    let c = planar(&[1.0], 1.0);
    let s = SimState::neutral(&c);
    let next = integrate(&c, &s, &DVector::from_vec(vec![2.0]), 0.1).unwrap();
    assert!((next.joints[0] - 0.2).abs() < 1e-15);
}

#[test]
fn integrate_rejects_non_finite() {
    let c = planar(&[1.0], 1.0);
    let s = SimState::neutral(&c);
    let err = integrate(&c, &s, &DVector::from_vec(vec![f64::NAN]), 0.1).unwrap_err();
    assert!(matches!(err, manikin::Error::Numerical(_)));
}

fn floating_only() -> KinematicChain<f64> {
    let file = ChainFile::from_json(
        r#"{"version": 1, "name": "body",
            "links": [{"name": "base", "joint": {"type": "floating_base"}}],
            "damping": {"uniform": 1.0}}"#,
    )
    .unwrap();
    file.to_chain().unwrap()
}

#[test]
fn floating_base_constant_spin() {
    let c = floating_only();
    let mut s = SimState::neutral(&c);
    let w = DVector::from_vec(vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    for _ in 0..100 {
        s = integrate(&c, &s, &w, 0.01).unwrap();
    }
    let q = s.base.unwrap().rotation;
    let expected = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), 1.0);
    assert!(q.angle_to(&expected) < 1e-9);
    assert!((q.quaternion().norm() - 1.0).abs() < 1e-12);
}

#[test]
fn orientation_norm_drift_over_long_horizon() {
    let c = floating_only();
    let mut s = SimState::neutral(&c);
    let xi = DVector::from_vec(vec![0.3, -0.1, 0.2, 0.7, -1.3, 2.1]);
    let mut worst_step: f64 = 0.0;
    for _ in 0..100_000 {
        let prev = s.base.unwrap().rotation.quaternion().norm();
        s = integrate(&c, &s, &xi, 0.01).unwrap();
        let now = s.base.unwrap().rotation.quaternion().norm();
        worst_step = worst_step.max((now - prev).abs());
    }
    let drift = (s.base.unwrap().rotation.quaternion().norm() - 1.0).abs();
    assert!(worst_step < 1e-12, "per-step drift {worst_step:e}");
    assert!(drift < 1e-9, "total drift {drift:e}");
}

#[test]
fn rkmk4_converges_at_fourth_order() {
    // World spin a plus body spin b: body rate Rᵀa + b, closed form
    // R(t) = exp(t·a) R0 exp(t·b).
    let c = floating_only();
    let a = Vector3::new(0.3, -0.8, 1.1);
    let b = Vector3::new(-0.9, 0.4, 0.6);
    let r0 = UnitQuaternion::from_scaled_axis(Vector3::new(0.4, 0.2, -0.5));
    let mut s0 = SimState::neutral(&c);
    s0.base = Some(nalgebra::Isometry3::from_parts(
        nalgebra::Translation3::identity(),
        r0,
    ));
    let exact = UnitQuaternion::from_scaled_axis(a) * r0 * UnitQuaternion::from_scaled_axis(b);

    let run = |steps: usize| {
        let dt = 1.0 / steps as f64;
        let mut s = s0.clone();
        for _ in 0..steps {
            s = integrate_field(&c, &s, dt, |st| {
                let body = st.base.unwrap().rotation.inverse() * a + b;
                Ok(DVector::from_vec(vec![
                    0.0, 0.0, 0.0, body.x, body.y, body.z,
                ]))
            })
            .unwrap();
        }
        lie::so3_log(&(s.base.unwrap().rotation * exact.inverse())).norm()
    };
    let coarse = run(4);
    let fine = run(8);
    let order = (coarse / fine).log2();
    assert!(order > 3.7, "observed order {order}");
}

#[test]
fn scalar_rk4_on_decay() {
    let c = planar(&[1.0], 1.0);
    let mut s = SimState::from_joints(&c, &[1.0]).unwrap();
    for _ in 0..10 {
        s = integrate_field(&c, &s, 0.1, |st| Ok(-st.joints.clone())).unwrap();
    }
    assert!((s.joints[0] - (-1.0f64).exp()).abs() < 1e-6);
}

#[test]
fn serialization_round_trip_preserves_fk() {
    let mut r = rng(21);
    for _ in 0..10 {
        let c = random_chain(&mut r, 6, true);
        let text = ChainFile::from_chain(&c).to_json();
        let back: KinematicChain<f64> = ChainFile::from_json(&text).unwrap().to_chain().unwrap();
        let s = random_state(&mut r, &c);
        let a = forward_kinematics(&c, &s).unwrap();
        let b = forward_kinematics(&back, &s).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x.to_homogeneous() - y.to_homogeneous()).abs().max() < 1e-12);
        }
    }
}

#[test]
fn chain_file_errors_carry_field_paths() {
    let err = ChainFile::from_json(r#"{"version": 1, "name": "x", "links": [{"name": "a", "joint": {"type": "hinge"}}], "damping": {"uniform": 1}}"#)
        .unwrap_err();
    match err {
        manikin::Error::Schema { path, .. } => {
            assert!(path.starts_with("links[0].joint"), "{path}")
        }
        e => panic!("unexpected {e}"),
    }
    let err = ChainFile::from_json(
        r#"{"version": 7, "name": "x", "links": [], "damping": {"uniform": 1}}"#,
    )
    .unwrap_err();
    assert!(matches!(err, manikin::Error::Schema { .. }));
}

#[test]
fn chain_validation() {
    let bad_damping = ChainFile::from_json(
        r#"{"version": 1, "name": "x",
            "links": [{"name": "a", "joint": {"type": "revolute", "axis": [0,0,1]}},
                      {"name": "b", "parent": "a", "joint": {"type": "revolute", "axis": [0,0,1]}}],
            "damping": {"matrix": [[1, 2], [2, 1]]}}"#,
    )
    .unwrap();
    assert!(bad_damping.to_chain::<f64>().is_err());

    let late_base = ChainFile::from_json(
        r#"{"version": 1, "name": "x",
            "links": [{"name": "a", "joint": {"type": "revolute", "axis": [0,0,1]}},
                      {"name": "b", "parent": "a", "joint": {"type": "floating_base"}}],
            "damping": {"uniform": 1}}"#,
    )
    .unwrap();
    assert!(late_base.to_chain::<f64>().is_err());

    let inverted = ChainFile::from_json(
        r#"{"version": 1, "name": "x",
            "links": [{"name": "a", "joint": {"type": "revolute", "axis": [0,0,1], "limits": [1, -1]}}],
            "damping": {"uniform": 1}}"#,
    )
    .unwrap();
    assert!(inverted.to_chain::<f64>().is_err());
}

#[test]
fn single_precision_chain() {
    let file = ChainFile::from_json(
        r#"{"version": 1, "name": "x",
            "links": [{"name": "a", "length": 1, "joint": {"type": "revolute", "axis": [0,0,1]}},
                      {"name": "b", "parent": "a", "length": 1, "joint": {"type": "revolute", "axis": [0,0,1]}}],
            "damping": {"uniform": 1}}"#,
    )
    .unwrap();
    let c: chain::KinematicChain<f32> = file.to_chain().unwrap();
    let s = SimState::from_joints(&c, &[FRAC_PI_2 as f32, 0.0]).unwrap();
    let tip = link_tip(&c, &forward_kinematics(&c, &s).unwrap(), 1);
    assert!((tip - Vector3::new(0.0f32, 2.0, 0.0)).norm() < 1e-6);
}
