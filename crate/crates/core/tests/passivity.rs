mod common;

use common::*;
use manikin::chain::{JointSpec, KinematicChain, LinkSpec, SimState};
use manikin::control::{build_internal_projection, PosturePotential, TaskFrame};
use manikin::passivity::*;
use manikin::Error;
use nalgebra::{dmatrix, dvector, DMatrix, DVector, Isometry3, Vector3};

fn constant_port(id: &str, power: f64) -> Port<f64> {
    Port::imposed(
        id,
        PortRole::Task,
        dvector![power, 0.0, 0.0, 0.0, 0.0, 0.0],
        dvector![1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    )
}

#[test]
fn zero_wrench_leaves_energy_unchanged() {
    let mut ledger = PassivityLedger::new(1.0).unwrap();
    let mut rng = rng(1);
    for _ in 0..50 {
        let port = Port::imposed(
            "a",
            PortRole::Contact,
            DVector::zeros(6),
            random_vector(&mut rng, 6),
        );
        ledger.record_step(&[port], 0.01).unwrap();
    }
    assert_eq!(ledger.energy("a"), Some(0.0));
    assert_eq!(passivity_verdict(&ledger).total, Verdict::PassiveSoFar);
}

#[test]
fn constant_power_integrates_exactly() {
    let mut ledger = PassivityLedger::new(0.0).unwrap();
    for _ in 0..100 {
        ledger
            .record_step(&[constant_port("p", 2.0)], 0.01)
            .unwrap();
    }
    assert!((ledger.energy("p").unwrap() - 2.0).abs() < 1e-9);
    assert!((ledger.time() - 1.0).abs() < 1e-12);
}

#[test]
fn trapezoid_on_linear_power_is_exact() {
    let mut ledger = PassivityLedger::new(0.0).unwrap();
    let dt = 0.125;
    ledger.record_step(&[constant_port("p", 0.0)], dt).unwrap();
    for k in 1..=8 {
        ledger
            .record_step(&[constant_port("p", k as f64 * dt)], dt)
            .unwrap();
    }
    // ∫₀¹ t dt after the zero-width first sample.
    assert!((ledger.energy("p").unwrap() - 0.5).abs() < 1e-15);
}

#[test]
fn verdict_reports_first_crossing() {
    let mut ledger = PassivityLedger::new(1.0).unwrap();
    for _ in 0..200 {
        ledger
            .record_step(&[constant_port("p", -0.75)], 0.01)
            .unwrap();
    }
    assert!((ledger.total_energy() + 1.5).abs() < 1e-12);
    match passivity_verdict(&ledger).total {
        Verdict::Violated(t) => assert!((t - 1.34).abs() < 1e-9, "t = {t}"),
        v => panic!("expected violation, got {v:?}"),
    }
}

#[test]
fn verdict_violated_at_two_seconds() {
    let mut ledger = PassivityLedger::new(1.0).unwrap();
    for k in 1..=300 {
        let p = if k < 200 { 0.0 } else { -300.0 };
        ledger.record_step(&[constant_port("p", p)], 0.01).unwrap();
        if k == 200 {
            assert!((ledger.total_energy() + 1.5).abs() < 1e-9);
        }
    }
    match passivity_verdict(&ledger).total {
        Verdict::Violated(t) => assert!((t - 2.0).abs() < 1e-9, "t = {t}"),
        v => panic!("expected violation, got {v:?}"),
    }
}

#[test]
fn per_port_and_total_verdicts_differ() {
    let mut ledger = PassivityLedger::new(1.0).unwrap();
    for _ in 0..100 {
        ledger
            .record_step(
                &[constant_port("give", 3.0), constant_port("take", -2.0)],
                0.01,
            )
            .unwrap();
    }
    let verdict = passivity_verdict(&ledger);
    assert_eq!(verdict.total, Verdict::PassiveSoFar);
    let take = verdict
        .per_port
        .iter()
        .find(|(id, _)| id == "take")
        .unwrap();
    assert!(take.1.is_violated());
}

#[test]
fn non_finite_power_is_rejected() {
    let mut ledger = PassivityLedger::new(1.0).unwrap();
    ledger
        .record_step(&[constant_port("p", 1.0)], 0.01)
        .unwrap();
    let err = ledger
        .record_step(&[constant_port("p", f64::NAN)], 0.01)
        .unwrap_err();
    assert!(matches!(err, Error::Numerical(_)));
    assert_eq!(ledger.rejected_samples(), 1);
    assert!((ledger.energy("p").unwrap() - 0.01).abs() < 1e-15);
    assert!(ledger.record_step(&[], 0.0).is_err());
}

#[test]
fn ledger_is_linear_in_recorded_traces() {
    let mut rng = rng(7);
    let trace: Vec<Vec<Port<f64>>> = (0..300)
        .map(|_| {
            // Dyadic values keep every sum exact.
            let q = |r: &mut _| (uniform(r, -64.0, 64.0)).round() / 64.0;
            let w = DVector::from_fn(6, |_, _| q(&mut rng));
            let v = DVector::from_fn(6, |_, _| q(&mut rng));
            vec![
                Port::imposed("a", PortRole::Task, w.clone(), v.clone()),
                Port::imposed("b", PortRole::Guide, -w, v * 2.0),
            ]
        })
        .collect();
    let mut once = PassivityLedger::new(0.0).unwrap();
    for ports in &trace {
        once.record_step(ports, 0.0078125).unwrap();
    }
    // The replay starts a new trapezoidal segment.
    let mut second = PassivityLedger::new(0.0).unwrap();
    for ports in &trace {
        second.record_step(ports, 0.0078125).unwrap();
    }
    second.begin_segment();
    for ports in &trace {
        second.record_step(ports, 0.0078125).unwrap();
    }
    for id in ["a", "b"] {
        assert_eq!(second.energy(id).unwrap(), 2.0 * once.energy(id).unwrap());
    }
}

#[test]
fn history_is_bounded_and_increasing() {
    let mut ledger = PassivityLedger::new(0.0).unwrap().with_history_capacity(16);
    for _ in 0..100 {
        ledger
            .record_step(&[constant_port("p", 1.0)], 0.01)
            .unwrap();
    }
    let h: Vec<_> = ledger.history().copied().collect();
    assert_eq!(h.len(), 16);
    assert!(h.windows(2).all(|w| w[1].0 > w[0].0));
}

#[test]
fn scalar_counterexample() {
    let ce = build_counterexample(&dmatrix![1.0f64], &dmatrix![1.0], &dvector![2.0]).unwrap();
    assert!((ce.w1[0] + 1.0).abs() < 1e-14);
    assert!((ce.predicted_power + 1.0).abs() < 1e-14);
    assert!((ce.two_port_power().unwrap() + 1.0).abs() < 1e-14);
}

#[test]
fn degenerate_seed_is_rejected() {
    let j = dmatrix![1.0, 0.0; 0.0, 0.0];
    let err = build_counterexample(&j, &DMatrix::identity(2, 2), &dvector![0.0, 3.0]).unwrap_err();
    assert!(matches!(err, Error::Construction(_)));
}

#[test]
fn random_counterexamples_satisfy_conditions() {
    let mut rng = rng(11);
    for _ in 0..200 {
        let n = rng_dim(&mut rng);
        let j1 = random_matrix(&mut rng, 6, n);
        let b = random_spd(&mut rng, n, 0.5, 4.0);
        let ce = build_counterexample(&j1, &b, &random_vector(&mut rng, 6)).unwrap();
        let r = ce.residuals().unwrap();
        assert!(r.seed_torque > 1e-6);
        assert!(r.balance < 1e-10, "balance {}", r.balance);
        assert!(r.priority < 1e-10, "priority {}", r.priority);
        assert!(ce.predicted_power < 0.0);
        let power = ce.two_port_power().unwrap();
        assert!((power - ce.predicted_power).abs() < 1e-10 * (1.0 + power.abs()));
    }
}

fn rng_dim(rng: &mut impl rand::Rng) -> usize {
    2 + (uniform(rng, 0.0, 9.999) as usize)
}

fn two_prismatic(b: DMatrix<f64>) -> KinematicChain<f64> {
    let link = |i: usize| LinkSpec {
        name: format!("s{i}"),
        parent: i.checked_sub(1),
        origin: Isometry3::identity(),
        length: 0.0,
    };
    KinematicChain::new(
        "slides",
        vec![link(0), link(1)],
        vec![
            JointSpec::prismatic(Vector3::new(1.0, 0.0, 0.0)),
            JointSpec::prismatic(Vector3::new(0.6, 0.8, 0.0)),
        ],
        b,
        vec![],
    )
    .unwrap()
}

#[test]
fn prismatic_pair_drains_at_predicted_slope() {
    let chain = two_prismatic(DMatrix::identity(2, 2));
    let state = SimState::neutral(&chain);
    let frame = TaskFrame::new(1, Vector3::zeros());
    let j1 = frame.jacobian(
        &chain,
        &manikin::chain::forward_kinematics(&chain, &state).unwrap(),
    );
    let ce = build_counterexample(
        &j1,
        chain.damping(),
        &dvector![1.0, -0.5, 0.3, 0.0, 0.2, 0.0],
    )
    .unwrap();
    let run = simulate_prioritized(
        &chain, &state, &frame, &frame, &ce.w1, &ce.w2, 1.0, 0.01, 1000,
    )
    .unwrap();
    assert!(run.samples.iter().all(|s| s.power < 0.0));
    let slope = run.ledger.total_energy() / 10.0;
    assert!(
        (slope - ce.predicted_power).abs() < 0.02 * ce.predicted_power.abs(),
        "{slope} vs {}",
        ce.predicted_power
    );
    assert!(run.verdict.total.is_violated());
}

#[test]
fn revolute_chain_drains_at_predicted_rate() {
    let chain = planar(&[1.0, 0.7], 1.0);
    let state = SimState::from_joints(&chain, &[0.4, 1.1]).unwrap();
    let frame = TaskFrame::new(1, Vector3::new(0.7, 0.0, 0.0));
    let w2 = dvector![0.8, -0.4, 0.0, 0.0, 0.0, 0.3];
    let w1 = -&w2 * 0.5;
    let run =
        simulate_prioritized(&chain, &state, &frame, &frame, &w1, &w2, 0.01, 0.01, 1000).unwrap();
    assert!(run.samples.iter().all(|s| s.power < 0.0));
    for s in &run.samples {
        assert!((s.power - s.predicted_power).abs() < 1e-10);
    }
    let slope = run.ledger.total_energy() / 10.0;
    let predicted = run.mean_predicted_power();
    assert!((slope - predicted).abs() < 0.02 * predicted.abs());
    assert!(run.verdict.total.is_violated());
}

#[test]
fn leak_cross_term_vanishes_without_internal_gain() {
    let chain = planar(&[1.0, 0.8, 0.6, 0.4], 1.0);
    let state = SimState::from_joints(&chain, &[0.3, -0.5, 0.9, 0.2]).unwrap();
    let potential = PosturePotential::new(
        dvector![1.0, 1.0, -1.0, 0.5],
        DVector::from_element(4, 1.0),
        0.0,
    )
    .unwrap();
    let task = TaskFrame::new(1, Vector3::new(0.8, 0.0, 0.0));
    let contact = TaskFrame::new(3, Vector3::new(0.4, 0.0, 0.0));
    let samples = two_port_internal_leak_demo(
        &chain,
        &state,
        &potential,
        &task,
        &contact,
        &dvector![0.0, -1.0, 0.0, 0.0, 0.0, 0.0],
        0.01,
        100,
    )
    .unwrap();
    assert!(samples.iter().all(|s| s.cross == 0.0));
    assert!(samples.iter().all(|s| (s.power - s.direct).abs() < 1e-12));
}

#[test]
fn leak_cross_term_annihilated_at_coincident_port() {
    let chain = planar(&[1.0, 0.8, 0.6, 0.4], 1.0)
        .with_damping(DMatrix::from_diagonal(&dvector![1.0, 2.0, 3.0, 4.0]))
        .unwrap();
    let state = SimState::from_joints(&chain, &[0.3, -0.5, 0.9, 0.2]).unwrap();
    let potential = PosturePotential::new(
        dvector![1.0, 1.0, -1.0, 0.5],
        DVector::from_element(4, 1.0),
        5.0,
    )
    .unwrap();
    let task = TaskFrame::new(3, Vector3::new(0.4, 0.0, 0.0));
    let samples = two_port_internal_leak_demo(
        &chain,
        &state,
        &potential,
        &task,
        &task,
        &dvector![0.0, -1.0, 0.0, 0.0, 0.0, 0.0],
        0.01,
        200,
    )
    .unwrap();
    assert!(samples.iter().all(|s| s.cross.abs() < 1e-10));
}

#[test]
fn leak_cross_term_is_sign_indefinite() {
    let chain = planar(&[1.0, 0.8, 0.6, 0.4], 1.0);
    let state = SimState::from_joints(&chain, &[0.3, -0.5, 0.9, 0.2]).unwrap();
    let potential = PosturePotential::new(
        dvector![1.0, 1.0, -1.0, 0.5],
        DVector::from_element(4, 1.0),
        5.0,
    )
    .unwrap();
    let task = TaskFrame::new(1, Vector3::new(0.8, 0.0, 0.0));
    let contact = TaskFrame::new(3, Vector3::new(0.4, 0.0, 0.0));
    let mut crosses = Vec::new();
    for w in [
        dvector![0.0, -1.0, 0.0, 0.0, 0.0, 0.0],
        dvector![0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
    ] {
        let samples =
            two_port_internal_leak_demo(&chain, &state, &potential, &task, &contact, &w, 0.01, 1)
                .unwrap();
        let s = samples[0];
        assert!((s.power - s.direct - s.cross).abs() < 1e-12);
        crosses.push(s.cross);
    }
    assert!(crosses.iter().any(|&c| c < -1e-6));

    let mut rng = rng(3);
    let j1 = random_matrix(&mut rng, 3, 7);
    let b = random_spd(&mut rng, 7, 0.5, 3.0);
    let witness = adversarial_leak_search(&j1, &b, 1.0, &mut rng, 64).unwrap();
    assert!(witness.cross < -1e-6, "{}", witness.cross);
    let p = build_internal_projection(&j1, &b).unwrap();
    let recomputed = cross_term(&witness.j2, &witness.w2, &b, &p, &witness.gradient, 1.0).unwrap();
    assert_eq!(recomputed, witness.cross);
    let zero = cross_term(&witness.j2, &witness.w2, &b, &p, &witness.gradient, 0.0).unwrap();
    assert_eq!(zero, 0.0);
}
