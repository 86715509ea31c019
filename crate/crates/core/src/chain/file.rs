//! JSON chain description.
//!
//! ```json
//! {
//!   "version": 1,
//!   "name": "planar2",
//!   "links": [
//!     { "name": "upper", "length": 1.0, "joint": { "type": "revolute", "axis": [0, 0, 1] } },
//!     { "name": "fore", "parent": "upper", "length": 1.0,
//!       "joint": { "type": "revolute", "axis": [0, 0, 1], "limits": [-2.5, 2.5] } }
//!   ],
//!   "damping": { "diagonal": [1.0, 1.0] },
//!   "collision_points": [ { "name": "hand", "link": "fore", "point": [1, 0, 0] } ]
//! }
//! ```
//!
//! A link without `origin` is attached at its parent's tip `(length, 0, 0)`
//! (or at the world origin for roots). `origin.rotation` is a rotation
//! vector in radians. Axes are normalized on load.

use nalgebra::{DMatrix, Isometry3, Translation3, Vector3};
use serde::{Deserialize, Serialize};

use super::lie;
use super::model::{CollisionProbe, JointKind, JointSpec, KinematicChain, LinkSpec};
use crate::{Error, Real, Result};

pub const CHAIN_FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainFile {
    pub version: u32,
    pub name: String,
    pub links: Vec<LinkFile>,
    pub damping: DampingSpec,
    #[serde(default)]
    pub collision_points: Vec<ProbeFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkFile {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<OriginFile>,
    #[serde(default)]
    pub length: f64,
    pub joint: JointFile,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OriginFile {
    #[serde(default)]
    pub translation: [f64; 3],
    #[serde(default)]
    pub rotation: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum JointFile {
    Revolute {
        axis: [f64; 3],
        #[serde(default, skip_serializing_if = "Option::is_none")]
        limits: Option<[f64; 2]>,
    },
    Prismatic {
        axis: [f64; 3],
        #[serde(default, skip_serializing_if = "Option::is_none")]
        limits: Option<[f64; 2]>,
    },
    FloatingBase,
}

/// Damping matrix given as a scalar times identity, a diagonal, or in full.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DampingSpec {
    Uniform(f64),
    Diagonal(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeFile {
    pub name: String,
    pub link: String,
    pub point: [f64; 3],
}

impl DampingSpec {
    pub fn to_matrix<T: Real>(&self, n: usize) -> Result<DMatrix<T>> {
        match self {
            DampingSpec::Uniform(b) => Ok(DMatrix::identity(n, n) * T::lit(*b)),
            DampingSpec::Diagonal(d) => {
                if d.len() != n {
                    return Err(Error::config(format!(
                        "damping diagonal has {} entries, chain has {n} DOF",
                        d.len()
                    )));
                }
                Ok(DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                    n,
                    d.iter().map(|&x| T::lit(x)),
                )))
            }
            DampingSpec::Matrix(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::config(format!("damping matrix must be {n}x{n}")));
                }
                Ok(DMatrix::from_fn(n, n, |i, j| T::lit(rows[i][j])))
            }
        }
    }
}

fn vec3<T: Real>(a: &[f64; 3]) -> Vector3<T> {
    Vector3::new(T::lit(a[0]), T::lit(a[1]), T::lit(a[2]))
}

fn unit_axis<T: Real>(a: &[f64; 3], link: &str) -> Result<Vector3<T>> {
    let v = Vector3::new(a[0], a[1], a[2]);
    let n = v.norm();
    if !(n > 1e-9) || !n.is_finite() {
        return Err(Error::config(format!(
            "link {link}: joint axis must be non-zero"
        )));
    }
    Ok(vec3(&(v / n).into()))
}

impl ChainFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: ChainFile = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::schema(e.path().to_string(), e.inner().to_string()))?;
        if file.version != CHAIN_FILE_VERSION {
            return Err(Error::schema(
                "version",
                format!(
                    "unsupported chain file version {} (expected {CHAIN_FILE_VERSION})",
                    file.version
                ),
            ));
        }
        Ok(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("chain file serializes")
    }

    pub fn to_chain<T: Real>(&self) -> Result<KinematicChain<T>> {
        let index_of = |name: &str| self.links.iter().position(|l| l.name == name);
        let mut links = Vec::with_capacity(self.links.len());
        let mut joints = Vec::with_capacity(self.links.len());
        let mut nv = 0;
        for (i, lf) in self.links.iter().enumerate() {
            if self.links[..i].iter().any(|l| l.name == lf.name) {
                return Err(Error::config(format!("duplicate link name {}", lf.name)));
            }
            let parent = match &lf.parent {
                Some(p) => Some(index_of(p).ok_or_else(|| {
                    Error::config(format!("link {}: unknown parent {p}", lf.name))
                })?),
                None => None,
            };
            let origin = match (&lf.origin, parent) {
                (Some(o), _) => Isometry3::from_parts(
                    Translation3::from(vec3::<T>(&o.translation)),
                    lie::so3_exp(&vec3::<T>(&o.rotation)),
                ),
                (None, Some(p)) => {
                    Isometry3::translation(T::lit(self.links[p].length), T::zero(), T::zero())
                }
                (None, None) => Isometry3::identity(),
            };
            let joint = match &lf.joint {
                JointFile::Revolute { axis, limits } => {
                    let mut j = JointSpec::revolute(unit_axis(axis, &lf.name)?);
                    j.limits = limits.map(|[lo, hi]| (T::lit(lo), T::lit(hi)));
                    j
                }
                JointFile::Prismatic { axis, limits } => {
                    let mut j = JointSpec::prismatic(unit_axis(axis, &lf.name)?);
                    j.limits = limits.map(|[lo, hi]| (T::lit(lo), T::lit(hi)));
                    j
                }
                JointFile::FloatingBase => JointSpec::floating(),
            };
            nv += joint.kind.dof();
            links.push(LinkSpec {
                name: lf.name.clone(),
                parent,
                origin,
                length: T::lit(lf.length),
            });
            joints.push(joint);
        }
        let probes = self
            .collision_points
            .iter()
            .map(|p| {
                Ok(CollisionProbe {
                    name: p.name.clone(),
                    link: index_of(&p.link).ok_or_else(|| {
                        Error::config(format!("probe {}: unknown link {}", p.name, p.link))
                    })?,
                    point: vec3(&p.point),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        KinematicChain::new(
            self.name.clone(),
            links,
            joints,
            self.damping.to_matrix(nv)?,
            probes,
        )
    }

    /// Serializable description of an existing chain (origins written out
    /// explicitly, damping as a full matrix).
    pub fn from_chain(chain: &KinematicChain<f64>) -> Self {
        let links = chain
            .links()
            .iter()
            .zip(chain.joints())
            .map(|(l, j)| {
                let limits = j.limits.map(|(lo, hi)| [lo, hi]);
                LinkFile {
                    name: l.name.clone(),
                    parent: l.parent.map(|p| chain.links()[p].name.clone()),
                    origin: Some(OriginFile {
                        translation: l.origin.translation.vector.into(),
                        rotation: lie::so3_log(&l.origin.rotation).into(),
                    }),
                    length: l.length,
                    joint: match &j.kind {
                        JointKind::Revolute { axis } => JointFile::Revolute {
                            axis: axis.into_inner().into(),
                            limits,
                        },
                        JointKind::Prismatic { axis } => JointFile::Prismatic {
                            axis: axis.into_inner().into(),
                            limits,
                        },
                        JointKind::FloatingBase => JointFile::FloatingBase,
                    },
                }
            })
            .collect();
        let b = chain.damping();
        Self {
            version: CHAIN_FILE_VERSION,
            name: chain.name().to_string(),
            links,
            damping: DampingSpec::Matrix(
                b.row_iter().map(|r| r.iter().copied().collect()).collect(),
            ),
            collision_points: chain
                .probes()
                .iter()
                .map(|p| ProbeFile {
                    name: p.name.clone(),
                    link: chain.links()[p.link].name.clone(),
                    point: p.point.into(),
                })
                .collect(),
        }
    }
}
