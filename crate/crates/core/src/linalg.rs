//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::{Error, Real, Result};

/// Largest absolute entry of `m − mᵀ`.
pub fn asymmetry<T: Real>(m: &DMatrix<T>) -> T {
    let mut worst = T::zero();
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// `(m + mᵀ) / 2`.
pub fn symmetric_part<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::lit(0.5)
}

/// Smallest and largest eigenvalue of the symmetric part of `m`.
pub fn eigen_range<T: Real>(m: &DMatrix<T>) -> (T, T) {
    if m.is_empty() {
        return (T::zero(), T::zero());
    }
    let eig = SymmetricEigen::new(symmetric_part(m));
    let min = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(T::max_value().unwrap(), T::min);
    let max = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(T::min_value().unwrap(), T::max);
    (min, max)
}

/// Moore–Penrose pseudo-inverse with singular values below
/// `rel_cutoff · σ_max` treated as zero.
pub fn pseudo_inverse<T: Real>(m: &DMatrix<T>, rel_cutoff: T) -> DMatrix<T> {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(c, r);
    }
    let svd = m.clone().svd(true, true);
    let sigma_max = svd.singular_values.iter().copied().fold(T::zero(), T::max);
    if sigma_max <= T::zero() {
        return DMatrix::zeros(c, r);
    }
    let cutoff = rel_cutoff * sigma_max;
    let u = svd.u.as_ref().expect("svd computed with u");
    let v_t = svd.v_t.as_ref().expect("svd computed with v_t");
    let mut out = DMatrix::zeros(c, r);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff {
            // out += v_k · u_kᵀ / s
            let vk = v_t.row(k).transpose();
            let uk = u.column(k);
            out += (vk * uk.transpose()) / s;
        }
    }
    out
}

#[derive(Clone, Debug)]
enum Factor<T: Real> {
    Cholesky(Cholesky<T, Dyn>),
    Eigen(SymmetricEigen<T, Dyn>),
}

/// Factorized symmetric positive-definite system.
///
/// Singularity is judged on the eigenvalue ratio: the system is rejected when
/// `λ_min < rel_tol · λ_max`. Cholesky is used for the solves, with an
/// eigen-decomposition fallback when the factorization breaks down.
#[derive(Clone, Debug)]
pub struct SpdSystem<T: Real> {
    factor: Factor<T>,
    dim: usize,
    condition: T,
}

impl<T: Real> SpdSystem<T> {
    pub fn new(m: &DMatrix<T>, rel_tol: T) -> Result<Self, (Error, T)> {
        let n = m.nrows();
        if n == 0 {
            return Ok(Self {
                factor: Factor::Eigen(SymmetricEigen::new(DMatrix::zeros(0, 0))),
                dim: 0,
                condition: T::one(),
            });
        }
        let eig = SymmetricEigen::new(symmetric_part(m));
        let min = eig
            .eigenvalues
            .iter()
            .copied()
            .fold(T::max_value().unwrap(), T::min);
        let max = eig
            .eigenvalues
            .iter()
            .copied()
            .fold(T::min_value().unwrap(), T::max);
        let condition = if min > T::zero() {
            max / min
        } else {
            T::max_value().unwrap()
        };
        if !(max > T::zero()) || min < rel_tol * max {
            return Err((
                Error::Singular(format!(
                    "system matrix eigenvalues in [{:e}, {:e}]",
                    min.as_f64(),
                    max.as_f64()
                )),
                condition,
            ));
        }
        let factor = match Cholesky::new(m.clone()) {
            Some(chol) => Factor::Cholesky(chol),
            None => Factor::Eigen(eig),
        };
        Ok(Self {
            factor,
            dim: n,
            condition,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `λ_max / λ_min` of the factorized matrix.
    pub fn condition(&self) -> T {
        self.condition
    }

    pub fn solve(&self, b: &DVector<T>) -> DVector<T> {
        match &self.factor {
            Factor::Cholesky(c) => c.solve(b),
            Factor::Eigen(e) => {
                let coeffs = e.eigenvectors.transpose() * b;
                let scaled = coeffs.component_div(&e.eigenvalues);
                &e.eigenvectors * scaled
            }
        }
    }

    pub fn solve_matrix(&self, b: &DMatrix<T>) -> DMatrix<T> {
        match &self.factor {
            Factor::Cholesky(c) => c.solve(b),
            Factor::Eigen(e) => {
                let mut coeffs = e.eigenvectors.transpose() * b;
                for (i, mut row) in coeffs.row_iter_mut().enumerate() {
                    row /= e.eigenvalues[i];
                }
                &e.eigenvectors * coeffs
            }
        }
    }
}
