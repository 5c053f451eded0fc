//! The full two-stage pipeline on the hypersonic vehicle model: robust
//! state feedback, antiwindup synthesis over the multiplier, and the
//! three-way tracking comparison.
//!
//! `cargo run --release --example ahfv`

use awsynth::cli::{stage_one, stage_two_plant};
use awsynth::antiwindup_synth::sweep_tau;
use awsynth::config::{ahfv_example_config, resolve};
use awsynth::simulate::{simulate, tracking_metrics};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let raw = ahfv_example_config();
    let text = serde_json::to_string_pretty(&raw)?;
    let cfg = resolve(raw, &text)?;

    let s1 = stage_one(&cfg)?;
    println!("stage 1: taus {:?}, bound {:.4}", s1.taus.as_slice(), s1.cost_bound);
    println!("gain {:.4}", s1.gain);

    let aw = stage_two_plant(&cfg, &s1)?;
    let sweep = sweep_tau(&aw, &cfg.stage2_weights, &cfg.raw.stage2.tau_grid.values(), None)?;
    let feasible = sweep.feasible_indices();
    println!(
        "stage 2: {} of {} grid points feasible, tau in [{:.1}, {:.1}]",
        feasible.len(),
        sweep.points.len(),
        sweep.points[feasible[0]].tau,
        sweep.points[*feasible.last().unwrap()].tau
    );
    let cert = &sweep.best.certificate;
    println!("best tau {:.3}, W {:.4}, rho(YX) {:.3}", cert.tau, cert.w_tau, cert.rho_yx);

    let sim = &cfg.raw.simulation;
    for &mode in &sim.modes {
        let trace = simulate(&cfg.plant, &s1.gain, Some(&sweep.best), &cfg.saturation, &sim.for_mode(mode))?;
        let m = tracking_metrics(&trace)?;
        println!("{:<13} ISE {:<12.5e} duty {:.3} diverged {}", mode.name(), m.effective_ise(), m.saturation_duty, m.diverged_at.is_some());
    }
    Ok(())
}
