#![allow(dead_code)]

use manikin::chain::{lie, JointSpec, KinematicChain, LinkSpec, SimState};
use nalgebra::{DMatrix, DVector, Isometry3, Translation3, Vector3};
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

pub fn random_unit(rng: &mut impl Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            uniform(rng, -1.0, 1.0),
            uniform(rng, -1.0, 1.0),
            uniform(rng, -1.0, 1.0),
        );
        let n = v.norm();
        if n > 0.1 && n < 1.0 {
            return v / n;
        }
    }
}

pub fn random_matrix(rng: &mut impl Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| uniform(rng, -1.0, 1.0))
}

pub fn random_vector(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| uniform(rng, -1.0, 1.0))
}

/// Random symmetric positive-definite matrix with eigenvalues in roughly [lo, hi].
pub fn random_spd(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let q = random_matrix(rng, n, n).qr().q();
    let d = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| uniform(rng, lo, hi)));
    let m = &q * d * q.transpose();
    (&m + m.transpose()) * 0.5
}

/// Planar chain of revolute z joints laid along x.
pub fn planar(lengths: &[f64], damping: f64) -> KinematicChain<f64> {
    let links = lengths
        .iter()
        .enumerate()
        .map(|(i, _)| LinkSpec {
            name: format!("l{i}"),
            parent: i.checked_sub(1),
            origin: if i == 0 {
                Isometry3::identity()
            } else {
                Isometry3::translation(lengths[i - 1], 0.0, 0.0)
            },
            length: lengths[i],
        })
        .collect();
    let joints = lengths
        .iter()
        .map(|_| JointSpec::revolute(Vector3::z()))
        .collect();
    let n = lengths.len();
    KinematicChain::new(
        "planar",
        links,
        joints,
        DMatrix::identity(n, n) * damping,
        vec![],
    )
    .unwrap()
}

/// Random serial/branched chain with mixed joint kinds.
pub fn random_chain(rng: &mut impl Rng, n: usize, floating: bool) -> KinematicChain<f64> {
    let mut links = Vec::new();
    let mut joints = Vec::new();
    if floating {
        links.push(LinkSpec {
            name: "base".into(),
            parent: None,
            origin: Isometry3::identity(),
            length: 0.3,
        });
        joints.push(JointSpec::floating());
    }
    for i in 0..n {
        let k = links.len();
        let parent = if k == 0 {
            None
        } else if k > 2 && rng.random::<f64>() < 0.25 {
            Some(rng.random_range(0..k))
        } else {
            Some(k - 1)
        };
        let origin = Isometry3::from_parts(
            Translation3::new(
                uniform(rng, -0.5, 0.5),
                uniform(rng, -0.5, 0.5),
                uniform(rng, -0.5, 0.5),
            ),
            lie::so3_exp(&(random_unit(rng) * uniform(rng, 0.0, 2.0))),
        );
        links.push(LinkSpec {
            name: format!("link{i}"),
            parent,
            origin,
            length: 0.4,
        });
        let axis = random_unit(rng);
        joints.push(if rng.random::<f64>() < 0.75 {
            JointSpec::revolute(axis)
        } else {
            JointSpec::prismatic(axis)
        });
    }
    let nv = n + if floating { 6 } else { 0 };
    KinematicChain::new(
        "random",
        links,
        joints,
        random_spd(rng, nv, 0.5, 3.0),
        vec![],
    )
    .unwrap()
}

pub fn random_state(rng: &mut impl Rng, chain: &KinematicChain<f64>) -> SimState<f64> {
    let mut s = SimState::neutral(chain);
    for q in s.joints.iter_mut() {
        *q = uniform(rng, -2.0, 2.0);
    }
    if let Some(base) = s.base.as_mut() {
        *base = Isometry3::from_parts(
            Translation3::new(
                uniform(rng, -1.0, 1.0),
                uniform(rng, -1.0, 1.0),
                uniform(rng, -1.0, 1.0),
            ),
            lie::so3_exp(&(random_unit(rng) * uniform(rng, 0.0, 3.0))),
        );
    }
    s
}
