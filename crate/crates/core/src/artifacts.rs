//! Output artifacts. JSON numbers carry 17 significant digits so that every
//! double survives a round trip; every file is written to a temporary file
//! in the target directory and renamed into place.

use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde_json::{json, Map, Number, Value};

use crate::antiwindup_synth::{AwCompensator, FilterRoute, TauPoint};
use crate::minimax_lqr::MinimaxLqrSolution;
use crate::simulate::{Mode, TrackingMetrics};

/// `x` as a JSON number with 17 significant digits; non-finite values map to null.
pub fn num(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    Value::Number(Number::from_str(&format!("{x:.16e}")).expect("formatted float is a valid JSON number"))
}

pub fn num_array(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|x| num(*x)).collect())
}

pub fn matrix(m: &DMatrix<f64>) -> Value {
    Value::Array((0..m.nrows()).map(|i| Value::Array(m.row(i).iter().map(|x| num(*x)).collect())).collect())
}

fn eigs(ls: &[Complex64]) -> Value {
    Value::Array(ls.iter().map(|l| json!([num(l.re), num(l.im)])).collect())
}

pub fn lqr_solution_json(sol: &MinimaxLqrSolution) -> Value {
    json!({
        "x_tau": matrix(&sol.x_tau),
        "gain": matrix(&sol.gain),
        "taus": num_array(sol.taus.as_slice()),
        "cost_bound": num(sol.cost_bound),
        "residual": num(sol.residual_norm),
        "closed_loop_eigenvalues": eigs(&sol.closed_loop_eigs),
    })
}

pub fn compensator_json(c: &AwCompensator) -> Value {
    let cert = &c.certificate;
    json!({
        "a_aw": matrix(&c.a_aw),
        "b_aw": matrix(&c.b_aw),
        "c_aw": matrix(&c.c_aw),
        "certificate": {
            "tau": num(cert.tau),
            "w_tau": num(cert.w_tau),
            "rho_yx": num(cert.rho_yx),
            "y_inf": matrix(&cert.y_inf),
            "x_inf": matrix(&cert.x_inf),
            "filter_residual": num(cert.filter_residual),
            "filter_bound": num(cert.filter_bound),
            "control_residual": num(cert.control_residual),
            "control_bound": num(cert.control_bound),
            "filter_route": match cert.filter_route {
                FilterRoute::Stabilizing => "stabilizing",
                FilterRoute::InverseDual => "inverse_dual",
            },
        },
    })
}

pub fn metrics_json(runs: &[(Mode, TrackingMetrics)]) -> Value {
    let mut modes = Map::new();
    for (mode, m) in runs {
        modes.insert(
            mode.name().to_string(),
            json!({
                "ise": num(m.ise),
                "iae": num(m.iae),
                "max_abs_error": num(m.max_abs_error),
                "saturation_duty": num(m.saturation_duty),
                "domain_exits": m.domain_exits,
                "diverged": m.diverged_at.is_some(),
                "diverged_at": m.diverged_at.map_or(Value::Null, num),
            }),
        );
    }
    let get = |mode: Mode| runs.iter().find(|(k, _)| *k == mode).map(|(_, m)| m.effective_ise());
    let mut comparison = Map::new();
    if let (Some(sat), Some(aw)) = (get(Mode::Saturated), get(Mode::SaturatedAw)) {
        comparison.insert("ise_saturated_aw_below_saturated".into(), Value::Bool(aw < sat));
    }
    if let (Some(nom), Some(aw)) = (get(Mode::Nominal), get(Mode::SaturatedAw)) {
        comparison.insert("ise_nominal_at_most_saturated_aw".into(), Value::Bool(nom <= aw));
    }
    json!({ "modes": modes, "comparison": comparison })
}

pub fn tau_sweep_csv(points: &[TauPoint]) -> String {
    let mut s = String::from("tau,W_tau,feasible\n");
    for p in points {
        let w = p.w_tau.map_or_else(|| "nan".to_string(), |w| format!("{w:.16e}"));
        s.push_str(&format!("{:.16e},{w},{}\n", p.tau, p.feasible()));
    }
    s
}

/// Writes `bytes` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(std::fs::Permissions::from_mode(0o644))?;
    }
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn write_json(path: &Path, value: &Value) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Reads a matrix written by [`matrix`].
pub fn read_matrix(v: &Value, what: &str) -> Result<DMatrix<f64>, String> {
    let rows = v.as_array().ok_or_else(|| format!("{what} is not an array"))?;
    let parsed: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            r.as_array()
                .ok_or_else(|| format!("{what} row is not an array"))?
                .iter()
                .map(|x| x.as_f64().ok_or_else(|| format!("{what} has a non-numeric entry")))
                .collect()
        })
        .collect::<Result<_, _>>()?;
    crate::config::to_dmatrix(&parsed, what).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            let v = num(x);
            let back: f64 = serde_json::from_str(&v.to_string()).unwrap();
            assert_eq!(back.to_bits(), x.to_bits());
        }
        assert_eq!(num(f64::NAN), Value::Null);
    }

    #[test]
    fn matrix_round_trip() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, -0.1, 3.3, 1e-9, 7.0, 1.0 / 7.0]);
        let text = matrix(&m).to_string();
        let back = read_matrix(&serde_json::from_str(&text).unwrap(), "m").unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
