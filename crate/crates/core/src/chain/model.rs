use nalgebra::{DMatrix, DVector, Isometry3, Unit, Vector3};

use crate::linalg;
use crate::{Error, Real, Result};

/// Motion allowed by the joint that drives a link.
#[derive(Debug, Clone, PartialEq)]
pub enum JointKind<T: Real> {
    Revolute { axis: Unit<Vector3<T>> },
    Prismatic { axis: Unit<Vector3<T>> },
    FloatingBase,
}

impl<T: Real> JointKind<T> {
    /// Number of velocity coordinates.
    pub fn dof(&self) -> usize {
        match self {
            JointKind::Revolute { .. } | JointKind::Prismatic { .. } => 1,
            JointKind::FloatingBase => 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointSpec<T: Real> {
    pub kind: JointKind<T>,
    /// `[q_min, q_max]` in rad (revolute) or m (prismatic).
    pub limits: Option<(T, T)>,
}

impl<T: Real> JointSpec<T> {
    pub fn revolute(axis: Vector3<T>) -> Self {
        Self {
            kind: JointKind::Revolute {
                axis: Unit::new_unchecked(axis),
            },
            limits: None,
        }
    }

    pub fn prismatic(axis: Vector3<T>) -> Self {
        Self {
            kind: JointKind::Prismatic {
                axis: Unit::new_unchecked(axis),
            },
            limits: None,
        }
    }

    pub fn floating() -> Self {
        Self {
            kind: JointKind::FloatingBase,
            limits: None,
        }
    }

    pub fn with_limits(mut self, lo: T, hi: T) -> Self {
        self.limits = Some((lo, hi));
        self
    }
}

/// A rigid link hanging off its parent through `origin`, then its joint.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSpec<T: Real> {
    pub name: String,
    /// `None` attaches the link to the world.
    pub parent: Option<usize>,
    /// Parent link frame → joint frame.
    pub origin: Isometry3<T>,
    /// Extent along the local x axis; the link tip is `(length, 0, 0)`.
    pub length: T,
}

/// Point on a link used as a contact probe.
#[derive(Debug, Clone, PartialEq)]
pub struct CollisionProbe<T: Real> {
    pub name: String,
    pub link: usize,
    pub point: Vector3<T>,
}

/// Immutable articulated skeleton.
///
/// Link `i` is driven by joint `i`. Links are stored in topological order
/// (a parent always precedes its children). Velocities are laid out with the
/// floating base twist first (body frame, linear then angular) followed by
/// one coordinate per 1-DOF joint in link order.
#[derive(Debug, Clone)]
pub struct KinematicChain<T: Real> {
    name: String,
    joints: Vec<JointSpec<T>>,
    links: Vec<LinkSpec<T>>,
    damping: DMatrix<T>,
    probes: Vec<CollisionProbe<T>>,
    // derived
    velocity_offset: Vec<usize>,
    coordinate_index: Vec<Option<usize>>,
    ancestors: Vec<Vec<usize>>,
    nv: usize,
    ncoords: usize,
    floating: bool,
}

impl<T: Real> KinematicChain<T> {
    pub fn new(
        name: impl Into<String>,
        links: Vec<LinkSpec<T>>,
        joints: Vec<JointSpec<T>>,
        damping: DMatrix<T>,
        probes: Vec<CollisionProbe<T>>,
    ) -> Result<Self> {
        if links.is_empty() {
            return Err(Error::config("chain has no links"));
        }
        if links.len() != joints.len() {
            return Err(Error::config(format!(
                "{} links but {} joints",
                links.len(),
                joints.len()
            )));
        }

        let mut velocity_offset = Vec::with_capacity(links.len());
        let mut coordinate_index = Vec::with_capacity(links.len());
        let mut ancestors: Vec<Vec<usize>> = Vec::with_capacity(links.len());
        let mut nv = 0;
        let mut ncoords = 0;
        let mut floating = false;

        for (i, (link, joint)) in links.iter().zip(&joints).enumerate() {
            let mut chain_to_root = match link.parent {
                None => Vec::new(),
                Some(p) if p < i => ancestors[p].clone(),
                Some(p) => {
                    return Err(Error::config(format!(
                        "link {i} ({}) has parent {p}; parents must precede children",
                        link.name
                    )))
                }
            };
            chain_to_root.push(i);
            ancestors.push(chain_to_root);

            match &joint.kind {
                JointKind::Revolute { axis } | JointKind::Prismatic { axis } => {
                    let err = (axis.as_ref().norm() - T::one()).abs();
                    if err > T::lit(1e-12) {
                        return Err(Error::config(format!(
                            "joint {i} axis is not unit length (|n| - 1 = {:e})",
                            err.as_f64()
                        )));
                    }
                    if let Some((lo, hi)) = joint.limits {
                        if lo > hi {
                            return Err(Error::config(format!("joint {i} has q_min > q_max")));
                        }
                    }
                    coordinate_index.push(Some(ncoords));
                    ncoords += 1;
                }
                JointKind::FloatingBase => {
                    if i != 0 || link.parent.is_some() {
                        return Err(Error::config("a floating base must be the root link 0"));
                    }
                    if joint.limits.is_some() {
                        return Err(Error::config("a floating base cannot carry limits"));
                    }
                    floating = true;
                    coordinate_index.push(None);
                }
            }
            velocity_offset.push(nv);
            nv += joint.kind.dof();
        }

        if damping.shape() != (nv, nv) {
            return Err(Error::config(format!(
                "damping is {}x{}, expected {nv}x{nv}",
                damping.nrows(),
                damping.ncols()
            )));
        }
        let asym = linalg::asymmetry(&damping);
        if asym > T::lit(1e-12) {
            return Err(Error::config(format!(
                "damping is not symmetric (max |B - Bᵀ| = {:e})",
                asym.as_f64()
            )));
        }
        let (min_eig, _) = linalg::eigen_range(&damping);
        if min_eig < T::lit(-1e-12) {
            return Err(Error::config(format!(
                "damping has negative eigenvalue {:e}",
                min_eig.as_f64()
            )));
        }
        for probe in &probes {
            if probe.link >= links.len() {
                return Err(Error::config(format!(
                    "probe {} references missing link {}",
                    probe.name, probe.link
                )));
            }
        }

        Ok(Self {
            name: name.into(),
            joints,
            links,
            damping,
            probes,
            velocity_offset,
            coordinate_index,
            ancestors,
            nv,
            ncoords,
            floating,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn joints(&self) -> &[JointSpec<T>] {
        &self.joints
    }

    pub fn links(&self) -> &[LinkSpec<T>] {
        &self.links
    }

    pub fn link_index(&self, name: &str) -> Option<usize> {
        self.links.iter().position(|l| l.name == name)
    }

    /// Joint damping `B_a`.
    pub fn damping(&self) -> &DMatrix<T> {
        &self.damping
    }

    pub fn probes(&self) -> &[CollisionProbe<T>] {
        &self.probes
    }

    /// Velocity dimension (degrees of freedom).
    pub fn dof(&self) -> usize {
        self.nv
    }

    /// Number of scalar joint coordinates (excludes the floating base).
    pub fn coordinate_count(&self) -> usize {
        self.ncoords
    }

    pub fn has_floating_base(&self) -> bool {
        self.floating
    }

    pub fn velocity_offset(&self, link: usize) -> usize {
        self.velocity_offset[link]
    }

    /// Index of the link's scalar coordinate in `SimState::joints`.
    pub fn coordinate_index(&self, link: usize) -> Option<usize> {
        self.coordinate_index[link]
    }

    /// Links from the root down to and including `link`.
    pub fn ancestors(&self, link: usize) -> &[usize] {
        &self.ancestors[link]
    }

    /// Same chain with a different damping matrix.
    pub fn with_damping(&self, damping: DMatrix<T>) -> Result<Self> {
        Self::new(
            self.name.clone(),
            self.links.clone(),
            self.joints.clone(),
            damping,
            self.probes.clone(),
        )
    }

    pub fn check_link(&self, link: usize) -> Result<()> {
        if link < self.links.len() {
            Ok(())
        } else {
            Err(Error::config(format!(
                "link index {link} out of range (chain has {})",
                self.links.len()
            )))
        }
    }
}

/// Generalized coordinates and time.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState<T: Real> {
    /// Floating base pose (unit quaternion + translation), if any.
    pub base: Option<Isometry3<T>>,
    /// Scalar coordinates of the 1-DOF joints, in link order.
    pub joints: DVector<T>,
    pub t: T,
}

impl<T: Real> SimState<T> {
    /// Zero joint coordinates, identity base, `t = 0`.
    pub fn neutral(chain: &KinematicChain<T>) -> Self {
        Self {
            base: chain.has_floating_base().then(Isometry3::identity),
            joints: DVector::zeros(chain.coordinate_count()),
            t: T::zero(),
        }
    }

    pub fn from_joints(chain: &KinematicChain<T>, joints: &[T]) -> Result<Self> {
        let mut s = Self::neutral(chain);
        if joints.len() != s.joints.len() {
            return Err(Error::config(format!(
                "expected {} joint coordinates, got {}",
                s.joints.len(),
                joints.len()
            )));
        }
        s.joints.copy_from_slice(joints);
        Ok(s)
    }

    pub fn check(&self, chain: &KinematicChain<T>) -> Result<()> {
        if self.joints.len() != chain.coordinate_count() {
            return Err(Error::config(format!(
                "state has {} joint coordinates, chain expects {}",
                self.joints.len(),
                chain.coordinate_count()
            )));
        }
        if self.base.is_some() != chain.has_floating_base() {
            return Err(Error::config(
                "floating base presence differs between state and chain",
            ));
        }
        Ok(())
    }
}
