//! Drives the command-line front end in-process: writes the example
//! configuration, then runs each stage into a temporary directory.

use awsynth::cli::run;

fn main() -> std::io::Result<()> {
    let dir = tempfile::tempdir()?;
    let cfg = dir.path().join("ahfv.json");
    let out = dir.path().join("out");

    let mut text = Vec::new();
    run(["awsynth", "example", "ahfv"], &mut text, &mut std::io::stderr());
    std::fs::write(&cfg, text)?;

    let (c, o) = (cfg.to_str().unwrap(), out.to_str().unwrap());
    for cmd in ["synth-lqr", "synth-aw", "simulate"] {
        let code = run(["awsynth", cmd, "-c", c, "-o", o], &mut std::io::stdout(), &mut std::io::stderr());
        println!("{cmd}: exit {code}");
    }
    println!("{}", std::fs::read_to_string(out.join("metrics.json"))?);
    Ok(())
}
