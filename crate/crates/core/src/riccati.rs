//! Continuous-time algebraic Riccati equations of the form
//!
//! ```text
//! AᵀX + XA + XMX + N = 0,    M = Mᵀ,  N = Nᵀ,
//! ```
//!
//! where `M` may be sign-indefinite (game and H∞ type equations). The
//! stabilizing solution (the one with `A + MX` Hurwitz) is read off the
//! stable invariant subspace of the Hamiltonian
//! `H = [[A, M], [−N, −Aᵀ]]` via an ordered real Schur form and then
//! polished by Newton–Kleinman steps.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, RealSchur};

pub use crate::linalg::{is_hurwitz, spectral_radius};

/// Eigenvalues of H whose real part is within this fraction of ‖H‖_F are
/// treated as lying on the imaginary axis.
pub const IMAGINARY_AXIS_TOL: f64 = 1e-9;

/// Upper bound on cond(U₁₁) before the solve is declared unreliable.
pub const MAX_BASIS_CONDITION: f64 = 1e12;

/// Beyond this condition number U₁₁ is treated as singular.
const SINGULAR_BASIS_CONDITION: f64 = 1e15;

const NEWTON_STEPS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct AreProblem {
    pub a: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub n: DMatrix<f64>,
}

impl AreProblem {
    /// Validates shapes and symmetry of `M` and `N`; both are symmetrized.
    pub fn new(a: DMatrix<f64>, m: DMatrix<f64>, n: DMatrix<f64>) -> Result<Self> {
        let dim = a.nrows();
        if !a.is_square() || m.shape() != (dim, dim) || n.shape() != (dim, dim) {
            return Err(Error::DimensionMismatch(format!(
                "ARE blocks must be square and equal-sized: A {:?}, M {:?}, N {:?}",
                a.shape(),
                m.shape(),
                n.shape()
            )));
        }
        // Products like B·E⁻¹·Bᵀ are symmetric only up to round-off.
        for (name, mat) in [("M", &m), ("N", &n)] {
            if !linalg::is_symmetric(mat, 1e-10) {
                return Err(Error::NotSymmetric(format!("ARE {name} block is not symmetric")));
            }
        }
        Ok(Self { a, m: linalg::symmetrize(&m), n: linalg::symmetrize(&n) })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// `AᵀX + XA + XMX + N`.
    pub fn residual(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.a.transpose() * x + x * &self.a + x * &self.m * x + &self.n
    }

    pub fn hamiltonian(&self) -> DMatrix<f64> {
        let k = self.dim();
        let mut h = DMatrix::zeros(2 * k, 2 * k);
        h.view_mut((0, 0), (k, k)).copy_from(&self.a);
        h.view_mut((0, k), (k, k)).copy_from(&self.m);
        h.view_mut((k, 0), (k, k)).copy_from(&(-&self.n));
        h.view_mut((k, k), (k, k)).copy_from(&(-self.a.transpose()));
        h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Definiteness {
    PositiveDefinite,
    PositiveSemidefinite,
    Indefinite,
}

impl Definiteness {
    pub fn of(x: &DMatrix<f64>) -> Self {
        let ev = linalg::sym_eigenvalues(x);
        let scale = ev.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
        let tol = 1e-12 * scale;
        let min = ev.first().copied().unwrap_or(0.0);
        if min > tol {
            Definiteness::PositiveDefinite
        } else if min >= -tol {
            Definiteness::PositiveSemidefinite
        } else {
            Definiteness::Indefinite
        }
    }
}

#[derive(Debug, Clone)]
pub struct AreSolution {
    pub x: DMatrix<f64>,
    /// ‖AᵀX + XA + XMX + N‖_F
    pub residual_norm: f64,
    /// Eigenvalues of `A + M·X`.
    pub closed_loop_eigs: Vec<Complex64>,
    pub definiteness: Definiteness,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Residual contract: `‖R(X)‖_F ≤ tol_residual·(1 + ‖N‖_F)`.
    pub tol_residual: f64,
    pub newton_steps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol_residual: 1e-8, newton_steps: NEWTON_STEPS }
    }
}

/// Stabilizing solution with default options.
pub fn solve_are(problem: &AreProblem) -> Result<AreSolution> {
    solve_are_with(problem, SolverOptions::default())
}

pub fn solve_are_with(problem: &AreProblem, opts: SolverOptions) -> Result<AreSolution> {
    let k = problem.dim();
    if k == 0 {
        return Ok(AreSolution {
            x: DMatrix::zeros(0, 0),
            residual_norm: 0.0,
            closed_loop_eigs: Vec::new(),
            definiteness: Definiteness::PositiveSemidefinite,
        });
    }
    let h = problem.hamiltonian();
    let h_norm = h.norm();
    let axis_tol = IMAGINARY_AXIS_TOL * h_norm.max(f64::MIN_POSITIVE);

    let mut schur = RealSchur::new(&h)?;
    if let Some(l) = schur.eigenvalues().into_iter().find(|l| l.re.abs() <= axis_tol) {
        return Err(Error::NoStabilizingSolution(format!(
            "Hamiltonian eigenvalue {:.3e}{:+.3e}i lies on the imaginary axis",
            l.re, l.im
        )));
    }
    let stable = schur.reorder(|l| l.re < 0.0)?;
    if stable != k {
        return Err(Error::NoStabilizingSolution(format!(
            "Hamiltonian has {stable} stable eigenvalues, expected {k}"
        )));
    }

    let u11 = schur.z.view((0, 0), (k, k)).clone_owned();
    let u21 = schur.z.view((k, 0), (k, k)).clone_owned();
    let sv = u11.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let smin = sv.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if cond > SINGULAR_BASIS_CONDITION {
        return Err(Error::NoStabilizingSolution(format!(
            "stable subspace basis is singular (cond {cond:.3e})"
        )));
    }
    if cond > MAX_BASIS_CONDITION {
        return Err(Error::IllConditioned { cond });
    }
    // X = U21·U11⁻¹  ⇔  U11ᵀ·Xᵀ = U21ᵀ
    let xt = u11
        .transpose()
        .lu()
        .solve(&u21.transpose())
        .ok_or_else(|| Error::NoStabilizingSolution("stable subspace basis is singular".into()))?;
    let mut x = linalg::symmetrize(&xt.transpose());

    let mut res = problem.residual(&x).norm();
    for _ in 0..opts.newton_steps {
        if res == 0.0 {
            break;
        }
        let Some(next) = newton_step(problem, &x) else { break };
        let next_res = problem.residual(&next).norm();
        if !(next_res < res) {
            break;
        }
        x = next;
        res = next_res;
    }

    let bound = opts.tol_residual * (1.0 + problem.n.norm());
    if !(res <= bound) {
        return Err(Error::Numerical(format!(
            "Riccati residual {res:.3e} exceeds {bound:.3e} after refinement"
        )));
    }
    let closed = &problem.a + &problem.m * &x;
    let closed_loop_eigs = linalg::eigenvalues(&closed)?;
    if closed_loop_eigs.iter().any(|l| l.re >= 0.0) {
        return Err(Error::NoStabilizingSolution("A + M·X is not Hurwitz".into()));
    }
    Ok(AreSolution { definiteness: Definiteness::of(&x), x, residual_norm: res, closed_loop_eigs })
}

/// One Newton–Kleinman step in correction form:
/// `(A+MX)ᵀ·δ + δ·(A+MX) = −R(X)`, `X⁺ = X + δ`. Solving for the small
/// correction keeps the Lyapunov error proportional to the residual.
fn newton_step(problem: &AreProblem, x: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let ac = &problem.a + &problem.m * x;
    let delta = linalg::solve_lyapunov(&ac, &-problem.residual(x)).ok()?;
    let next = linalg::symmetrize(&(x + delta));
    next.iter().all(|v| v.is_finite()).then_some(next)
}
