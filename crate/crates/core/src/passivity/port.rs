use nalgebra::{DMatrix, DVector};

use crate::{Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PortRole {
    Task,
    Contact,
    Guide,
    Internal,
}

/// Power interface `(J, W, V)`.
///
/// `jacobian` is absent for ports whose twist is not produced by the
/// manikin's joints (for instance the operator side of a task spring).
#[derive(Debug, Clone, PartialEq)]
pub struct Port<T: Real> {
    pub id: String,
    pub role: PortRole,
    pub jacobian: Option<DMatrix<T>>,
    pub wrench: DVector<T>,
    pub twist: DVector<T>,
}

impl<T: Real> Port<T> {
    /// Port whose twist is measured as `V = J q̇`.
    pub fn measured(
        id: impl Into<String>,
        role: PortRole,
        jacobian: DMatrix<T>,
        wrench: DVector<T>,
        qdot: &DVector<T>,
    ) -> Self {
        let twist = &jacobian * qdot;
        Self {
            id: id.into(),
            role,
            jacobian: Some(jacobian),
            wrench,
            twist,
        }
    }

    /// Port with an externally imposed twist.
    pub fn imposed(
        id: impl Into<String>,
        role: PortRole,
        wrench: DVector<T>,
        twist: DVector<T>,
    ) -> Self {
        Self {
            id: id.into(),
            role,
            jacobian: None,
            wrench,
            twist,
        }
    }

    /// `Wᵀ V`.
    pub fn power(&self) -> T {
        self.wrench.dot(&self.twist)
    }

    /// `‖V − J q̇‖` when the port has a Jacobian.
    pub fn twist_residual(&self, qdot: &DVector<T>) -> Result<Option<T>> {
        Ok(self
            .jacobian
            .as_ref()
            .map(|j| (j * qdot - &self.twist).norm()))
    }
}
