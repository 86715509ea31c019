mod common;

use common::*;
use manikin::chain::{integrate, CollisionProbe, JointSpec, KinematicChain, LinkSpec, SimState};
use manikin::constraints::*;
use manikin::dynamics::TorqueSource;
use manikin::linalg::{eigen_range, SpdSystem};
use manikin::Error;
use nalgebra::{dmatrix, dvector, DMatrix, DVector, Isometry3, Vector3};

fn arm_with_probe(limits: Option<(f64, f64)>) -> KinematicChain<f64> {
    let lengths = [1.0, 0.8, 0.5];
    let links = (0..3usize)
        .map(|i| LinkSpec {
            name: format!("l{i}"),
            parent: i.checked_sub(1),
            origin: if i == 0 {
                Isometry3::translation(0.0, 0.0, 1.0)
            } else {
                Isometry3::translation(lengths[i - 1], 0.0, 0.0)
            },
            length: lengths[i],
        })
        .collect();
    let joints = (0..3)
        .map(|_| {
            let j = JointSpec::revolute(Vector3::y());
            match limits {
                Some((lo, hi)) => j.with_limits(lo, hi),
                None => j,
            }
        })
        .collect();
    let probes = vec![CollisionProbe {
        name: "hand".into(),
        link: 2,
        point: Vector3::new(0.5, 0.0, 0.0),
    }];
    KinematicChain::new("arm", links, joints, DMatrix::identity(3, 3), probes).unwrap()
}

fn table() -> Obstacle<f64> {
    Obstacle::half_space(Vector3::z(), 0.0).unwrap()
}

#[test]
fn far_probe_is_not_returned() {
    let chain = arm_with_probe(None);
    let state = SimState::neutral(&chain);
    assert!(detect_constraints(&chain, &state, &[table()], 0.01)
        .unwrap()
        .is_empty());
}

#[test]
fn near_upper_limit_is_returned() {
    let chain = arm_with_probe(Some((-1.0, 1.0)));
    let state = SimState::from_joints(&chain, &[0.0, 1.0 - 1e-4, 0.0]).unwrap();
    let found = detect_constraints(&chain, &state, &[], 1e-3).unwrap();
    assert_eq!(found.len(), 1);
    assert_eq!(found[0].kind, ConstraintKind::JointLimitUpper(1));
    assert!((found[0].gap - 1e-4).abs() < 1e-15);
    assert_eq!(found[0].row, dvector![0.0, -1.0, 0.0]);
}

#[test]
fn margin_must_be_positive() {
    let chain = arm_with_probe(None);
    assert!(detect_constraints(&chain, &SimState::neutral(&chain), &[], 0.0).is_err());
    assert!(Obstacle::half_space(Vector3::new(0.0, 0.0, 2.0), 0.0).is_err());
    assert!(Obstacle::sphere(Vector3::zeros(), 0.0).is_err());
}

fn gap_of(
    chain: &KinematicChain<f64>,
    state: &SimState<f64>,
    obstacles: &[Obstacle<f64>],
    kind: ConstraintKind,
) -> f64 {
    detect_constraints(chain, state, obstacles, 1e9)
        .unwrap()
        .into_iter()
        .find(|c| c.kind == kind)
        .unwrap()
        .gap
}

#[test]
fn probe_rows_match_finite_differences() {
    let chain = arm_with_probe(Some((-3.0, 3.0)));
    let mut rng = rng(5);
    let obstacles = [
        table(),
        Obstacle::sphere(Vector3::new(0.5, 0.2, 0.3), 0.4).unwrap(),
    ];
    for _ in 0..100 {
        let state = SimState::from_joints(
            &chain,
            &[
                uniform(&mut rng, -1.5, 1.5),
                uniform(&mut rng, -1.5, 1.5),
                uniform(&mut rng, -1.5, 1.5),
            ],
        )
        .unwrap();
        for c in detect_constraints(&chain, &state, &obstacles, 1e9).unwrap() {
            let dir = random_vector(&mut rng, 3);
            let h = 1e-6;
            let plus = integrate(&chain, &state, &dir, h).unwrap();
            let minus = integrate(&chain, &state, &dir, -h)
                .ok()
                .unwrap_or_else(|| integrate(&chain, &state, &(-&dir), h).unwrap());
            let fd = (gap_of(&chain, &plus, &obstacles, c.kind)
                - gap_of(&chain, &minus, &obstacles, c.kind))
                / (2.0 * h);
            assert!(
                (fd - c.row.dot(&dir)).abs() < 1e-6,
                "{:?}: {fd} vs {}",
                c.kind,
                c.row.dot(&dir)
            );
        }
    }
}

#[test]
fn probe_height_is_gap() {
    let chain = arm_with_probe(None);
    let state = SimState::from_joints(&chain, &[0.3, 0.2, 0.1]).unwrap();
    let c = &detect_constraints(&chain, &state, &[table()], 10.0).unwrap()[0];
    let frames = manikin::chain::forward_kinematics(&chain, &state).unwrap();
    let p = frames[2] * nalgebra::Point3::new(0.5, 0.0, 0.0);
    assert!((c.gap - p.z).abs() < 1e-15);
}

#[test]
fn empty_problem_solves_trivially() {
    let system = SpdSystem::new(&DMatrix::<f64>::identity(2, 2), 1e-12).unwrap();
    let p = assemble_lcp(&[], &system, &dvector![1.0, 2.0], 0.01, DEFAULT_BAUMGARTE).unwrap();
    assert!(p.is_empty());
    let s = solve_lcp(&p, LCP_TOLERANCE, LCP_MAX_ITER).unwrap();
    assert_eq!(s.iterations, 0);
    assert!(s.f.is_empty());
}

#[test]
fn single_contact_example() {
    let system = SpdSystem::new(&DMatrix::<f64>::identity(2, 2), 1e-12).unwrap();
    let c = UnilateralConstraint {
        kind: ConstraintKind::PointContact {
            probe: 0,
            obstacle: 0,
        },
        gap: 0.0,
        row: dvector![1.0, 0.0],
    };
    let p = assemble_lcp(
        std::slice::from_ref(&c),
        &system,
        &dvector![-1.0, 0.0],
        0.01,
        DEFAULT_BAUMGARTE,
    )
    .unwrap();
    assert_eq!(p.m, dmatrix![1.0]);
    assert_eq!(p.w, dvector![-1.0]);
    let s = solve_lcp(&p, LCP_TOLERANCE, LCP_MAX_ITER).unwrap();
    assert!((s.f[0] - 1.0).abs() < 1e-12);
    assert!(s.slack[0].abs() < 1e-12);
}

#[test]
fn baumgarte_bias_signs() {
    let system = SpdSystem::new(&DMatrix::<f64>::identity(1, 1), 1e-12).unwrap();
    let mk = |gap| UnilateralConstraint {
        kind: ConstraintKind::JointLimitLower(0),
        gap,
        row: dvector![1.0],
    };
    let open = assemble_lcp(&[mk(0.01)], &system, &dvector![0.0], 0.01, 0.2).unwrap();
    assert!((open.w[0] - (0.01 - CONTACT_SLOP) / 0.01).abs() < 1e-15);
    let touching = assemble_lcp(
        &[mk(CONTACT_SLOP / 2.0)],
        &system,
        &dvector![0.0],
        0.01,
        0.2,
    )
    .unwrap();
    assert_eq!(touching.w[0], 0.0);
    let deep = assemble_lcp(&[mk(-0.01)], &system, &dvector![0.0], 0.01, 0.2).unwrap();
    assert!((deep.w[0] + 0.2).abs() < 1e-15);
    // The solved velocity pushes the penetration out.
    let s = solve_lcp(&deep, LCP_TOLERANCE, LCP_MAX_ITER).unwrap();
    assert!((s.f[0] - 0.2).abs() < 1e-12);
}

#[test]
fn separation_gives_zero_force() {
    let p = LcpProblem {
        m: dmatrix![2.0, 0.5; 0.5, 1.0],
        w: dvector![0.1, 3.0],
    };
    assert_eq!(
        solve_lcp(&p, LCP_TOLERANCE, LCP_MAX_ITER).unwrap().f,
        dvector![0.0, 0.0]
    );
}

#[test]
fn identity_example() {
    let p = LcpProblem {
        m: DMatrix::identity(2, 2),
        w: dvector![-1.0, 2.0],
    };
    let s = solve_lcp(&p, LCP_TOLERANCE, LCP_MAX_ITER).unwrap();
    assert!((&s.f - dvector![1.0, 0.0]).amax() < 1e-12);
}

#[test]
fn assembled_matrices_are_psd() {
    let chain = arm_with_probe(Some((-0.5, 0.5)));
    let mut rng = rng(9);
    let obstacles = [
        table(),
        Obstacle::half_space(Vector3::new(1.0, 0.0, 0.0), 0.2).unwrap(),
    ];
    let mut checked = 0;
    for _ in 0..200 {
        let state = SimState::from_joints(
            &chain,
            &[
                uniform(&mut rng, -0.6, 0.6),
                uniform(&mut rng, -0.6, 0.6),
                uniform(&mut rng, -0.6, 0.6),
            ],
        )
        .unwrap();
        let cs = detect_constraints(&chain, &state, &obstacles, 5.0).unwrap();
        let s = random_spd(&mut rng, 3, 0.1, 5.0);
        let system = SpdSystem::new(&s, 1e-12).unwrap();
        let p = assemble_lcp(
            &cs,
            &system,
            &random_vector(&mut rng, 3),
            0.01,
            DEFAULT_BAUMGARTE,
        )
        .unwrap();
        if p.is_empty() {
            continue;
        }
        checked += 1;
        assert_eq!(p.m, p.m.transpose());
        let (lo, _) = eigen_range(&p.m);
        assert!(lo >= -1e-10, "{lo}");
        let sol = solve_lcp(&p, LCP_TOLERANCE, LCP_MAX_ITER).unwrap();
        assert!(sol.residual < 1e-8);
        assert!(sol.f.iter().all(|&f| f >= -1e-10));
        assert!(sol.slack.iter().all(|&s| s >= -1e-8));
    }
    assert!(checked > 100);
}

#[test]
fn matches_enumeration_oracle() {
    let mut rng = rng(21);
    for trial in 0..1000 {
        let k = 1 + trial % 4;
        let m = random_spd(&mut rng, k, 0.05, 3.0);
        let w = random_vector(&mut rng, k) * 2.0;
        let p = LcpProblem { m, w };
        let pgs = solve_lcp(&p, LCP_TOLERANCE, LCP_MAX_ITER).unwrap();
        let oracle = enumerate_lcp(&p).expect("PD LCP has a solution");
        assert!(
            (&pgs.f - &oracle.f).amax() < 1e-8,
            "trial {trial}: {} vs {}",
            pgs.f,
            oracle.f
        );
        assert!(pgs.residual < 1e-8);
    }
}

#[test]
fn degenerate_psd_problems_solve() {
    let mut rng = rng(4);
    for _ in 0..200 {
        // Redundant rows: four constraints in a 2-D velocity space.
        let jc = random_matrix(&mut rng, 4, 2);
        let m = &jc * jc.transpose();
        let v = random_vector(&mut rng, 2);
        let p = LcpProblem { m, w: &jc * v };
        let s = solve_lcp(&p, LCP_TOLERANCE, LCP_MAX_ITER).unwrap();
        assert!(s.residual < 1e-8);
        assert!(s.f.iter().all(|&f| f >= -1e-10));
        assert!(s.slack.iter().all(|&x| x >= -1e-8));
    }
}

#[test]
fn infeasible_problem_reports_nonconvergence() {
    let p = LcpProblem {
        m: dmatrix![0.0],
        w: dvector![-1.0],
    };
    match solve_lcp(&p, LCP_TOLERANCE, 50) {
        Err(Error::LcpNonConvergence {
            iterations,
            residual,
        }) => {
            assert_eq!(iterations, 50);
            assert!(residual > 0.0);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn torques_are_transpose_map() {
    let c = UnilateralConstraint {
        kind: ConstraintKind::JointLimitLower(0),
        gap: 0.0,
        row: dvector![1.0, 0.0],
    };
    let zero = solve_lcp(
        &LcpProblem {
            m: dmatrix![1.0],
            w: dvector![1.0],
        },
        1e-10,
        10,
    )
    .unwrap();
    assert_eq!(
        constraint_torques(std::slice::from_ref(&c), &zero, 2)
            .unwrap()
            .values,
        dvector![0.0, 0.0]
    );
    let three = solve_lcp(
        &LcpProblem {
            m: dmatrix![1.0],
            w: dvector![-3.0],
        },
        1e-10,
        10,
    )
    .unwrap();
    let t = constraint_torques(&[c], &three, 2).unwrap();
    assert_eq!(t.source, TorqueSource::Constraint);
    assert!((t.values - dvector![3.0, 0.0]).amax() < 1e-12);
}

#[test]
fn pressing_into_table_keeps_probe_above() {
    let chain = arm_with_probe(Some((-2.0, 2.0)));
    let mut state = SimState::from_joints(&chain, &[0.2, 0.1, 0.1]).unwrap();
    let obstacles = [table()];
    let dt = 0.01;
    let push = dvector![3.0, 1.0, 0.5];
    let system = SpdSystem::new(chain.damping(), 1e-12).unwrap();
    let mut touched = false;
    for _ in 0..400 {
        let free = system.solve(&push);
        // Keep pairs that are near now or would be near after a free step.
        let cs: Vec<_> = detect_constraints(&chain, &state, &obstacles, 1e9)
            .unwrap()
            .into_iter()
            .filter(|c| c.gap.min(c.gap + dt * c.row.dot(&free)) < 0.01)
            .collect();
        let p = assemble_lcp(&cs, &system, &free, dt, DEFAULT_BAUMGARTE).unwrap();
        let sol = solve_lcp(&p, LCP_TOLERANCE, LCP_MAX_ITER).unwrap();
        let gamma = constraint_torques(&cs, &sol, 3).unwrap();
        let qdot = system.solve(&(&push + &gamma.values));
        for (c, f) in cs.iter().zip(sol.f.iter()) {
            if (0.0..=CONTACT_SLOP).contains(&c.gap) {
                assert!(
                    f * c.row.dot(&qdot) >= -1e-8,
                    "gap {:e} f {f} rate {:e}",
                    c.gap,
                    c.row.dot(&qdot)
                );
            }
        }
        touched |= sol.f.iter().any(|&f| f > 0.0);
        state = integrate(&chain, &state, &qdot, dt).unwrap();
        let gap = detect_constraints(&chain, &state, &obstacles, 1e9)
            .unwrap()
            .iter()
            .filter(|c| matches!(c.kind, ConstraintKind::PointContact { .. }))
            .map(|c| c.gap)
            .fold(f64::INFINITY, f64::min);
        assert!(gap >= -1e-4, "penetration {gap}");
        assert!(state
            .joints
            .iter()
            .all(|q| (-2.0 - 1e-6..=2.0 + 1e-6).contains(q)));
    }
    assert!(touched);
}

#[test]
fn unused_velocity_dimension_is_rejected() {
    let system = SpdSystem::new(&DMatrix::<f64>::identity(2, 2), 1e-12).unwrap();
    let c = UnilateralConstraint {
        kind: ConstraintKind::JointLimitLower(0),
        gap: 0.0,
        row: dvector![1.0],
    };
    assert!(assemble_lcp(&[c], &system, &DVector::zeros(2), 0.01, 0.2).is_err());
}
