//! Saturation as a sector-bounded nonlinearity: deadzone, recentred
//! uncertainty and the certified input domain.

use awsynth::antiwindup_plant::{build_sector_model, deadzone, recentered_uncertainty, saturate};
use awsynth::model::SaturationSpec;
use nalgebra::dmatrix;

fn main() -> awsynth::error::Result<()> {
    let sat = SaturationSpec::new(vec![1.0, 2.0], vec![0.5, 0.25])?;
    let sector = build_sector_model(&dmatrix![1.0, 0.0; 0.0, 1.0], &sat)?;
    println!("B_bar = {:.3}G_bar = {:.3}u_bar = {:?}", sector.b_bar, sector.g_bar, sector.u_bar);

    println!("{:>6} {:>8} {:>8} {:>8} {:>8}", "u", "sat", "phi", "w_hat", "bound");
    for k in -6..=6 {
        let u = [k as f64 * 0.5, 0.0];
        let w = recentered_uncertainty(&u, &sat)[0];
        let inside = !sector.outside_domain(&u);
        println!(
            "{:>6.2} {:>8.3} {:>8.3} {:>8.3} {:>8.3}{}",
            u[0],
            saturate(&u, &sat)[0],
            deadzone(&u, &sat)[0],
            w,
            0.25 * u[0].abs(),
            if inside { "" } else { "  outside" }
        );
    }
    Ok(())
}
