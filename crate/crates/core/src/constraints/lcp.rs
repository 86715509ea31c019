use nalgebra::{DMatrix, DVector};

use super::UnilateralConstraint;
use crate::dynamics::{TorqueSource, TorqueVector};
use crate::linalg::{self, SpdSystem};
use crate::{Error, Real, Result};

pub const LCP_TOLERANCE: f64 = 1e-10;
pub const LCP_MAX_ITER: usize = 2000;
/// Fraction of a penetration recovered per step.
pub const DEFAULT_BAUMGARTE: f64 = 0.2;
/// Gaps below this are treated as touching.
pub const CONTACT_SLOP: f64 = 1e-7;

/// `find f ≥ 0 with Mf + w ≥ 0 and fᵀ(Mf + w) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LcpProblem<T: Real> {
    pub m: DMatrix<T>,
    pub w: DVector<T>,
}

impl<T: Real> LcpProblem<T> {
    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContactSolution<T: Real> {
    pub f: DVector<T>,
    /// Post-solve gap rates `Mf + w`.
    pub slack: DVector<T>,
    /// `max |fᵢ·slackᵢ|`.
    pub residual: T,
    pub iterations: usize,
}

impl<T: Real> ContactSolution<T> {
    fn evaluate(m: &DMatrix<T>, w: &DVector<T>, f: DVector<T>, iterations: usize) -> Self {
        let slack = m * &f + w;
        let residual = f
            .iter()
            .zip(slack.iter())
            .fold(T::zero(), |acc, (a, b)| acc.max((*a * *b).abs()));
        Self {
            f,
            slack,
            residual,
            iterations,
        }
    }

    /// Largest violation of `f ≥ 0`, `slack ≥ 0` or complementarity, measured
    /// as `|min(fᵢ, slackᵢ)|`.
    pub fn natural_residual(&self) -> T {
        self.f
            .iter()
            .zip(self.slack.iter())
            .fold(T::zero(), |acc, (a, b)| acc.max(a.min(*b).abs()))
    }
}

/// Builds `M = J_c S⁻¹ J_cᵀ` and `w = J_c q̇_free + b`. The bias lets an
/// open gap close down to [`CONTACT_SLOP`] within one step, holds touching
/// pairs (`b = 0`) and pushes out a penetration at rate `γ|g|/dt`.
pub fn assemble_lcp<T: Real>(
    constraints: &[UnilateralConstraint<T>],
    system: &SpdSystem<T>,
    free_velocity: &DVector<T>,
    dt: T,
    baumgarte: T,
) -> Result<LcpProblem<T>> {
    let n = system.dim();
    if free_velocity.len() != n || constraints.iter().any(|c| c.row.len() != n) {
        return Err(Error::config(
            "constraint rows and free velocity must match the system dimension",
        ));
    }
    if !(dt > T::zero()) {
        return Err(Error::config("dt must be positive"));
    }
    let k = constraints.len();
    let jc = DMatrix::from_fn(k, n, |i, j| constraints[i].row[j]);
    let s_inv_jt = system.solve_matrix(&jc.transpose());
    let m = linalg::symmetric_part(&(&jc * s_inv_jt));
    let w = DVector::from_fn(k, |i, _| {
        let g = constraints[i].gap;
        let slop = T::lit(CONTACT_SLOP);
        let bias = if g > slop {
            (g - slop) / dt
        } else if g >= T::zero() {
            T::zero()
        } else {
            baumgarte * g / dt
        };
        constraints[i].row.dot(free_velocity) + bias
    });
    Ok(LcpProblem { m, w })
}

/// Projected Gauss-Seidel with periodic active-set polishing. The polish
/// solves `M_AA f_A = −w_A` on the current support and is kept when it
/// satisfies the LCP, which makes degenerate (PSD, redundant) problems exact.
pub fn solve_lcp<T: Real>(
    problem: &LcpProblem<T>,
    tol: T,
    max_iter: usize,
) -> Result<ContactSolution<T>> {
    let LcpProblem { m, w } = problem;
    let k = w.len();
    if m.shape() != (k, k) {
        return Err(Error::config("LCP matrix and vector sizes differ"));
    }
    if w.iter().chain(m.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite LCP data".into()));
    }
    if w.iter().all(|&v| v >= T::zero()) {
        return Ok(ContactSolution::evaluate(m, w, DVector::zeros(k), 0));
    }
    let scale = T::one() + w.amax();
    let accept = |s: &ContactSolution<T>| s.natural_residual() <= tol * scale;

    let mut f = DVector::zeros(k);
    let mut best: Option<ContactSolution<T>> = None;
    for iter in 1..=max_iter {
        for i in 0..k {
            let d = m[(i, i)];
            if d <= T::lit(1e-14) * (T::one() + m.amax()) {
                continue;
            }
            let r = m.row(i).dot(&f.transpose()) + w[i];
            f[i] = (f[i] - r / d).max(T::zero());
        }
        let current = ContactSolution::evaluate(m, w, f.clone(), iter);
        if accept(&current) {
            return Ok(current);
        }
        if iter == 1 || iter % 10 == 0 {
            if let Some(polished) = polish(m, w, &current, iter) {
                if accept(&polished) {
                    return Ok(polished);
                }
            }
        }
        if best
            .as_ref()
            .is_none_or(|b| current.natural_residual() < b.natural_residual())
        {
            best = Some(current);
        }
    }
    let residual = best.map_or(f64::INFINITY, |b| b.natural_residual().as_f64());
    Err(Error::LcpNonConvergence {
        iterations: max_iter,
        residual,
    })
}

fn polish<T: Real>(
    m: &DMatrix<T>,
    w: &DVector<T>,
    guess: &ContactSolution<T>,
    iter: usize,
) -> Option<ContactSolution<T>> {
    let k = w.len();
    let scale = T::one() + w.amax();
    let eps = T::lit(1e-12) * (T::one() + guess.f.amax());
    // The support of f, then the rows that look binding: on redundant
    // problems the support is not unique and a non-negative fit over the
    // binding rows recovers one.
    let candidates: [Vec<usize>; 2] = [
        (0..k)
            .filter(|&i| guess.f[i] > eps || guess.slack[i] < T::zero())
            .collect(),
        (0..k)
            .filter(|&i| guess.slack[i] < T::lit(1e-6) * scale)
            .collect(),
    ];
    let mut best: Option<ContactSolution<T>> = None;
    for active in candidates {
        let Some(f) = solve_support(m, w, &active) else {
            continue;
        };
        let sol = ContactSolution::evaluate(m, w, f, iter);
        if best
            .as_ref()
            .is_none_or(|b| sol.natural_residual() < b.natural_residual())
        {
            best = Some(sol);
        }
    }
    best
}

/// Solves `M_AA f_A = −w_A` with `f_A ≥ 0` in the least-squares sense and
/// zero elsewhere.
fn solve_support<T: Real>(m: &DMatrix<T>, w: &DVector<T>, active: &[usize]) -> Option<DVector<T>> {
    let k = w.len();
    let mut f = DVector::zeros(k);
    if active.is_empty() {
        return Some(f);
    }
    let a = active.len();
    let maa = DMatrix::from_fn(a, a, |i, j| m[(active[i], active[j])]);
    let wa = DVector::from_fn(a, |i, _| -w[active[i]]);
    let fa = linalg::pseudo_inverse(&maa, T::lit(1e-12)) * &wa;
    let fa = if fa.iter().all(|&v| v >= T::zero()) {
        fa
    } else {
        nnls(&maa, &wa)?
    };
    if fa.iter().any(|v| !v.is_finite()) {
        return None;
    }
    for (i, &idx) in active.iter().enumerate() {
        f[idx] = fa[i].max(T::zero());
    }
    Some(f)
}

/// Lawson-Hanson non-negative least squares `min ‖Ax − b‖, x ≥ 0`.
fn nnls<T: Real>(a: &DMatrix<T>, b: &DVector<T>) -> Option<DVector<T>> {
    let n = a.ncols();
    let tol = T::lit(1e-13) * (T::one() + a.amax() * b.amax());
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let ls = |passive: &[bool]| -> DVector<T> {
        let idx: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
        let sub = DMatrix::from_fn(a.nrows(), idx.len(), |r, c| a[(r, idx[c])]);
        let z = linalg::pseudo_inverse(&sub, T::lit(1e-12)) * b;
        let mut full = DVector::zeros(n);
        for (c, &i) in idx.iter().enumerate() {
            full[i] = z[c];
        }
        full
    };
    for _ in 0..3 * n + 10 {
        let grad = a.tr_mul(&(b - a * &x));
        let Some(j) = (0..n)
            .filter(|&i| !passive[i] && grad[i] > tol)
            .max_by(|&i, &k| grad[i].partial_cmp(&grad[k]).unwrap())
        else {
            return Some(x);
        };
        passive[j] = true;
        loop {
            let z = ls(&passive);
            if (0..n).filter(|&i| passive[i]).all(|i| z[i] > T::zero()) {
                x = z;
                break;
            }
            let mut alpha = T::one();
            for i in (0..n).filter(|&i| passive[i] && z[i] <= T::zero()) {
                let denom = x[i] - z[i];
                if denom > T::zero() {
                    alpha = alpha.min(x[i] / denom);
                }
            }
            x += (&z - &x) * alpha;
            for i in 0..n {
                if passive[i] && x[i] <= tol {
                    passive[i] = false;
                    x[i] = T::zero();
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    None
}

/// Brute-force solution over all `2^m` supports; returns the valid
/// candidate with the smallest natural residual. Exponential, for tests.
pub fn enumerate_lcp<T: Real>(problem: &LcpProblem<T>) -> Option<ContactSolution<T>> {
    let k = problem.len();
    assert!(k <= 16, "enumeration is exponential in the problem size");
    let tol = T::lit(1e-9) * (T::one() + problem.w.amax());
    let mut best: Option<ContactSolution<T>> = None;
    for mask in 0u32..(1 << k) {
        let active: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        let Some(f) = solve_support(&problem.m, &problem.w, &active) else {
            continue;
        };
        let candidate = ContactSolution::evaluate(&problem.m, &problem.w, f, 0);
        if candidate.natural_residual() <= tol
            && best
                .as_ref()
                .is_none_or(|b| candidate.natural_residual() < b.natural_residual())
        {
            best = Some(candidate);
        }
    }
    best
}

/// `Γ_c = J_cᵀ f`.
pub fn constraint_torques<T: Real>(
    constraints: &[UnilateralConstraint<T>],
    solution: &ContactSolution<T>,
    n: usize,
) -> Result<TorqueVector<T>> {
    if solution.f.len() != constraints.len() {
        return Err(Error::config(
            "solution size differs from the number of constraints",
        ));
    }
    let mut gamma = DVector::zeros(n);
    for (c, &f) in constraints.iter().zip(solution.f.iter()) {
        if c.row.len() != n {
            return Err(Error::config("constraint row has the wrong dimension"));
        }
        gamma.axpy(f, &c.row, T::one());
    }
    TorqueVector::new(gamma, TorqueSource::Constraint)
}
