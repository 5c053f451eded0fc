//! Independent oracles shared by the integration tests. Nothing here calls
//! into the crate's Riccati or Lyapunov solvers.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| scale * rng.random_range(-1.0..1.0))
}

/// `L Lᵀ + floor·I`
pub fn random_pd(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> DMatrix<f64> {
    let l = uniform(rng, n, n, 1.0);
    &l * l.transpose() + DMatrix::identity(n, n) * floor
}

/// Solves `FᵀX + XF = C` through the Kronecker form.
pub fn lyapunov_kron(f: &DMatrix<f64>, c: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = f.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let ft = f.transpose();
    let op = eye.kronecker(&ft) + ft.kronecker(&eye);
    let rhs = DMatrix::from_column_slice(n * n, 1, c.as_slice());
    let v = op.lu().solve(&rhs)?;
    let x = DMatrix::from_column_slice(n, n, v.as_slice());
    Some((&x + x.transpose()) * 0.5)
}

/// Spectral abscissa; `None` when the eigenvalue iteration stalls.
pub fn abscissa(m: &DMatrix<f64>) -> Option<f64> {
    nalgebra::Schur::try_new(m.clone(), f64::EPSILON, 100_000).map(|s| s.complex_eigenvalues().iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max))
}

pub fn is_hurwitz(m: &DMatrix<f64>) -> bool {
    abscissa(m).is_some_and(|a| a < 0.0)
}

fn kleinman(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    r_inv: &DMatrix<f64>,
    mut k: DMatrix<f64>,
) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let mut x = DMatrix::zeros(a.nrows(), a.nrows());
    for _ in 0..100 {
        let ak = a - b * &k;
        let next = lyapunov_kron(&ak, &-(q + k.transpose() * r * &k))?;
        let done = (&next - &x).norm() <= 1e-15 * next.norm().max(1.0);
        x = next;
        k = r_inv * b.transpose() * &x;
        if done {
            break;
        }
    }
    Some((x, k))
}

/// Stabilizing solution of the standard LQR Riccati equation by
/// Newton–Kleinman iteration, continued from `A − αI` (where `K = 0`
/// stabilizes) down to `α = 0`. `None` when the result is not stabilizing.
pub fn newton_kleinman(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let r_inv = r.clone().try_inverse()?;
    let eye = DMatrix::<f64>::identity(n, n);
    let mut alpha = a.norm() + 1.0;
    let mut k = DMatrix::zeros(b.ncols(), n);
    for _ in 0..500 {
        let shifted = a - &eye * alpha;
        let (x, next_k) = kleinman(&shifted, b, q, r, &r_inv, k)?;
        k = next_k;
        if alpha == 0.0 {
            return is_hurwitz(&(a - b * &k)).then_some(x);
        }
        let margin = -abscissa(&(&shifted - b * &k))?;
        alpha = if margin > 2.0 * alpha { 0.0 } else { alpha - 0.5 * margin };
    }
    None
}

pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

/// Closed-form solution of the scalar stage-2 problem with blocks
/// `Ā = a`, `B₁ = b1`, `B̃₂ = [0, −1]`, `C̃₁ = c1`, `D̃₁ = d1`, `D̃₂ = [0, 1]`.
#[derive(Debug, Clone, Copy)]
pub struct ScalarStageTwo {
    pub y: f64,
    pub x: f64,
    pub w: f64,
    pub a_aw: f64,
    pub b_aw: f64,
    pub c_aw: f64,
}

pub fn scalar_stage_two(a: f64, b1: f64, c1: f64, d1: f64, q: f64, r: f64, tau: f64) -> ScalarStageTwo {
    let r_tau = q + tau * c1 * c1;
    let g = r + tau * d1 * d1;
    let ups = tau * c1 * d1;
    // filter: 2a·y + (R_τ/τ)·y² = 0, positive root
    let y = -2.0 * a * tau / r_tau;
    // control: m·x² + 2ã·x + n = 0, stabilizing root
    let at = a - b1 * ups / g;
    let m = 1.0 / tau - b1 * b1 / g;
    let n = r_tau - ups * ups / g;
    let x = n / (-at + (at * at - m * n).sqrt());
    let coupling = 1.0 - y * x / tau;
    let w = x / coupling + y * r_tau;
    let c_aw = -(b1 * x + ups) / g;
    let b_aw = -1.0 / coupling;
    let a_aw = a + b1 * c_aw + (1.0 + b_aw) * x / tau;
    ScalarStageTwo { y, x, w, a_aw, b_aw, c_aw }
}
