//! Antiwindup synthesis on a scalar loop: sweep the multiplier, show the
//! cost bound blowing up near the feasibility boundary, and print the
//! compensator at the minimizer.

use awsynth::antiwindup_plant::{assemble_closed_loop, build_sector_model};
use awsynth::antiwindup_synth::{check_assumptions, sweep_tau, AwWeights};
use awsynth::minimax_lqr::log_grid;
use awsynth::model::{SaturationSpec, UncertainPlant};
use nalgebra::dmatrix;

fn main() -> awsynth::error::Result<()> {
    let plant = UncertainPlant::certain(dmatrix![0.0], dmatrix![1.0]);
    let sat = SaturationSpec::new(vec![1.0], vec![0.5])?;
    let sector = build_sector_model(&plant.b, &sat)?;
    let aw = assemble_closed_loop(&plant, &sector, &dmatrix![2.0])?;
    let weights = AwWeights::new(dmatrix![1.0], dmatrix![1.0])?;

    let sweep = sweep_tau(&aw, &weights, &log_grid(0.1, 1000.0, 40), None)?;
    for p in &sweep.points {
        match p.w_tau {
            Some(w) => println!("tau {:>10.4}  W {:.6}", p.tau, w),
            None => println!("tau {:>10.4}  infeasible", p.tau),
        }
    }
    let c = &sweep.best;
    println!("best tau {:.5}, W {:.6}, rho(YX) {:.5}", c.certificate.tau, c.certificate.w_tau, c.certificate.rho_yx);
    println!("A_aw {:.5}B_aw {:.5}C_aw {:.5}", c.a_aw, c.b_aw, c.c_aw);
    print!("{}", check_assumptions(&aw, &weights, c.certificate.tau)?.render());
    Ok(())
}
