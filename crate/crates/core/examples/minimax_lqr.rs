//! Robust state feedback for a mass-spring system whose stiffness is
//! uncertain. The multiplier is chosen to minimize the worst-case cost bound.

use awsynth::minimax_lqr::{optimize_taus, solve_minimax_lqr, InitialCondition, TauSearchConfig, TauVector};
use awsynth::model::{UncertainPlant, UncertaintyChannel, Weights};
use nalgebra::{dmatrix, dvector};

fn main() -> awsynth::error::Result<()> {
    let a = dmatrix![0.0, 1.0; -1.0, -0.2];
    let b = dmatrix![0.0; 1.0];
    // ±30% stiffness: ζ enters the velocity equation, z = 0.3·position
    let ch = UncertaintyChannel::new(dmatrix![0.0; 1.0], dmatrix![0.3, 0.0], dmatrix![0.0]);
    let plant = UncertainPlant::certain(a, b).with_channel(ch);
    let weights = Weights::identity(2, 1);

    let nominal = solve_minimax_lqr(&UncertainPlant::certain(plant.a.clone(), plant.b.clone()), &weights, &TauVector::empty())?;
    println!("nominal gain {:.5}", nominal.gain);

    let x0 = InitialCondition::Known(dvector![1.0, 0.0]);
    let out = optimize_taus(&plant, &weights, &x0, &TauSearchConfig::default())?;
    let best = &out.best;
    let feasible = out.history.iter().filter(|(_, b)| b.is_some()).count();
    println!("{} multiplier evaluations, {feasible} feasible", out.history.len());
    println!("tau = {:.4}, bound = {:.5}", best.taus.as_slice()[0], best.cost_bound);
    println!("robust gain {:.5}closed loop {:?}", best.gain, best.closed_loop_eigs);
    Ok(())
}
