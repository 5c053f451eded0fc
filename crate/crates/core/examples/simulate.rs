//! Saturated integrator loop driven by a large step, with and without the
//! antiwindup compensator.

use awsynth::antiwindup_plant::{assemble_closed_loop, build_sector_model};
use awsynth::antiwindup_synth::{sweep_tau, AwWeights};
use awsynth::minimax_lqr::log_grid;
use awsynth::model::{SaturationSpec, UncertainPlant};
use awsynth::simulate::{simulate, tracking_metrics, Mode, Reference, SimConfig};
use nalgebra::dmatrix;

fn main() -> awsynth::error::Result<()> {
    let plant = UncertainPlant::certain(dmatrix![0.0], dmatrix![1.0]);
    let sat = SaturationSpec::new(vec![1.0], vec![0.5])?;
    let gain = dmatrix![2.0];
    let sector = build_sector_model(&plant.b, &sat)?;
    let aw = assemble_closed_loop(&plant, &sector, &gain)?;
    let comp = sweep_tau(&aw, &AwWeights::new(dmatrix![1.0], dmatrix![1.0])?, &log_grid(0.1, 1000.0, 40), None)?.best;

    for mode in Mode::ALL {
        let mut cfg = SimConfig::new(mode);
        cfg.t_final = 10.0;
        cfg.references = vec![Reference::step(0, 1.0, 0.9)];
        let trace = simulate(&plant, &gain, Some(&comp), &sat, &cfg)?;
        let m = tracking_metrics(&trace)?;
        println!(
            "{:<13} ISE {:.5}  IAE {:.5}  max|e| {:.4}  duty {:.3}",
            mode.name(),
            m.ise,
            m.iae,
            m.max_abs_error,
            m.saturation_duty
        );
    }
    Ok(())
}
