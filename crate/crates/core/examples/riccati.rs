//! Stabilizing solutions of small algebraic Riccati equations
//! `AᵀX + XA + XMX + N = 0`, including a game-type (indefinite `M`) case.

use awsynth::riccati::{solve_are, AreProblem};
use nalgebra::dmatrix;

fn main() -> awsynth::error::Result<()> {
    // -2x - x² + 1 = 0, stabilizing root √2 - 1
    let scalar = AreProblem::new(dmatrix![-1.0], dmatrix![-1.0], dmatrix![1.0])?;
    let s = solve_are(&scalar)?;
    println!("scalar: X = {:.12} (expected {:.12}), eig {:.6}", s.x[(0, 0)], 2f64.sqrt() - 1.0, s.closed_loop_eigs[0].re);

    // double integrator LQR, Q = I, R = 1
    let a = dmatrix![0.0, 1.0; 0.0, 0.0];
    let lqr = AreProblem::new(a.clone(), -dmatrix![0.0, 0.0; 0.0, 1.0], dmatrix![1.0, 0.0; 0.0, 1.0])?;
    let s = solve_are(&lqr)?;
    println!("double integrator: X = {:.6}residual {:.2e}, {:?}", s.x, s.residual_norm, s.definiteness);

    // disturbance attenuation: M = -B Bᵀ + γ⁻² Bw Bwᵀ
    let m = dmatrix![0.0, 0.0; 0.0, -1.0] + dmatrix![0.25, 0.0; 0.0, 0.0];
    let game = AreProblem::new(a, m, dmatrix![1.0, 0.0; 0.0, 1.0])?;
    match solve_are(&game) {
        Ok(s) => println!("game: X = {:.6}eigs {:?}", s.x, s.closed_loop_eigs),
        Err(e) => println!("game: {e}"),
    }
    Ok(())
}
