use nalgebra::{DVector, Point3, Unit, Vector3};

use crate::chain::{forward_kinematics, jacobian_from_frames, KinematicChain, SimState};
use crate::{Error, Real, Result};

/// Static environment geometry.
#[derive(Debug, Clone, PartialEq)]
pub enum Obstacle<T: Real> {
    /// Free side is `{p : n·p ≥ offset}`.
    HalfSpace {
        normal: Unit<Vector3<T>>,
        offset: T,
    },
    Sphere {
        center: Vector3<T>,
        radius: T,
    },
}

impl<T: Real> Obstacle<T> {
    pub fn half_space(normal: Vector3<T>, offset: T) -> Result<Self> {
        if (normal.norm() - T::one()).abs() > T::lit(1e-12) {
            return Err(Error::config("half-space normal must have unit norm"));
        }
        Ok(Obstacle::HalfSpace {
            normal: Unit::new_unchecked(normal),
            offset,
        })
    }

    pub fn sphere(center: Vector3<T>, radius: T) -> Result<Self> {
        if !(radius > T::zero()) {
            return Err(Error::config("sphere radius must be positive"));
        }
        Ok(Obstacle::Sphere { center, radius })
    }

    /// Signed distance from `p` and the outward normal at the closest point.
    /// `None` at the centre of a sphere, where the normal is undefined.
    pub fn distance(&self, p: &Vector3<T>) -> Option<(T, Vector3<T>)> {
        match self {
            Obstacle::HalfSpace { normal, offset } => {
                Some((normal.dot(p) - *offset, normal.into_inner()))
            }
            Obstacle::Sphere { center, radius } => {
                let d = p - center;
                let r = d.norm();
                (r > T::lit(1e-12)).then(|| (r - *radius, d / r))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstraintKind {
    /// Link index of the limited joint.
    JointLimitUpper(usize),
    JointLimitLower(usize),
    PointContact {
        probe: usize,
        obstacle: usize,
    },
}

/// `gap ≥ 0` when satisfied; `row · q̇` is the gap rate.
#[derive(Debug, Clone, PartialEq)]
pub struct UnilateralConstraint<T: Real> {
    pub kind: ConstraintKind,
    pub gap: T,
    pub row: DVector<T>,
}

/// Every joint limit and probe/obstacle pair whose gap is below
/// `activation_margin`.
pub fn detect_constraints<T: Real>(
    chain: &KinematicChain<T>,
    state: &SimState<T>,
    obstacles: &[Obstacle<T>],
    activation_margin: T,
) -> Result<Vec<UnilateralConstraint<T>>> {
    if !(activation_margin > T::zero()) {
        return Err(Error::config("activation margin must be positive"));
    }
    state.check(chain)?;
    let n = chain.dof();
    let mut out = Vec::new();

    for (link, joint) in chain.joints().iter().enumerate() {
        let (Some((lo, hi)), Some(ci)) = (joint.limits, chain.coordinate_index(link)) else {
            continue;
        };
        let q = state.joints[ci];
        let col = chain.velocity_offset(link);
        for (kind, gap, sign) in [
            (ConstraintKind::JointLimitLower(link), q - lo, T::one()),
            (ConstraintKind::JointLimitUpper(link), hi - q, -T::one()),
        ] {
            if gap < activation_margin {
                let mut row = DVector::zeros(n);
                row[col] = sign;
                out.push(UnilateralConstraint { kind, gap, row });
            }
        }
    }

    if chain.probes().is_empty() || obstacles.is_empty() {
        return Ok(out);
    }
    let frames = forward_kinematics(chain, state)?;
    for (pi, probe) in chain.probes().iter().enumerate() {
        let p = (frames[probe.link] * Point3::from(probe.point)).coords;
        let mut jac = None;
        for (oi, obstacle) in obstacles.iter().enumerate() {
            let Some((gap, normal)) = obstacle.distance(&p) else {
                continue;
            };
            if gap >= activation_margin {
                continue;
            }
            let jac = jac.get_or_insert_with(|| {
                jacobian_from_frames(chain, &frames, probe.link, &probe.point)
            });
            let row = jac.rows(0, 3).tr_mul(&normal);
            out.push(UnilateralConstraint {
                kind: ConstraintKind::PointContact {
                    probe: pi,
                    obstacle: oi,
                },
                gap,
                row,
            });
        }
    }
    Ok(out)
}
