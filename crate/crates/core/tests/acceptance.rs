//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Tolerances are fixed constants below.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use awsynth::antiwindup_plant::{build_sector_model, deadzone, recentered_uncertainty, saturate, AwSynthesisPlant};
use awsynth::antiwindup_synth::{synthesize_at_tau, sweep_tau, AwCompensator, AwWeights};
use awsynth::cli::{self, stage_one, stage_two_plant};
use awsynth::config::{ahfv_example_config, resolve, ResolvedConfig};
use awsynth::error::Error;
use awsynth::minimax_lqr::{log_grid, solve_minimax_lqr, TauVector};
use awsynth::model::{SaturationSpec, UncertainPlant, Weights};
use awsynth::riccati::{solve_are, AreProblem};
use awsynth::simulate::{simulate, tracking_metrics, Mode};
use common::*;
use nalgebra::{dmatrix, DMatrix, SymmetricEigen};
use rand::Rng;

const ORACLE_REL: f64 = 1e-8;
const RESIDUAL_REL: f64 = 1e-8;
const SCALAR_TOL: f64 = 1e-10;
const REDUCTION_REL: f64 = 1e-8;
const RICCATI_BUDGET: Duration = Duration::from_secs(10);
const SIMULATION_BUDGET: Duration = Duration::from_secs(60);
const MIN_DUTY: f64 = 0.2;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

/// Random standard-LQR instance `(A, B, Q, R)` with its oracle solution.
/// `attainable` is false when even the oracle misses the residual contract:
/// nearly uncontrollable draws whose solution is so large that one ulp of
/// `X` moves the residual past `1e-8·(1 + ‖N‖)`.
struct LqrDraw {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    m: DMatrix<f64>,
    oracle: DMatrix<f64>,
    attainable: bool,
}

fn draw_lqr(r: &mut rand_chacha::ChaCha8Rng, max_n: usize) -> Option<LqrDraw> {
    let n = r.random_range(1..=max_n);
    let k = r.random_range(1..=n.min(3));
    let a = uniform(r, n, n, 1.0);
    let b = uniform(r, n, k, 1.0);
    let q = random_pd(r, n, 0.1);
    let rw = random_pd(r, k, 0.5);
    let oracle = newton_kleinman(&a, &b, &q, &rw)?;
    let m = -(&b * rw.clone().try_inverse().unwrap() * b.transpose());
    let res = (a.transpose() * &oracle + &oracle * &a + &oracle * &m * &oracle + &q).norm();
    let attainable = res <= RESIDUAL_REL * (1.0 + q.norm());
    Some(LqrDraw { a, b, q, r: rw, m, oracle, attainable })
}

fn criterion_1() -> Outcome {
    let mut r = rng(1);
    let (mut solved, mut excluded, mut excluded_wrong) = (0, 0, 0);
    let (mut worst_rel, mut worst_res) = (0.0f64, 0.0f64);
    let mut errors = Vec::new();
    let mut solve_time = Duration::ZERO;
    while solved < 200 {
        let Some(d) = draw_lqr(&mut r, 10) else { continue };
        let problem = AreProblem::new(d.a.clone(), d.m.clone(), d.q.clone()).unwrap();
        let t = Instant::now();
        let sol = solve_are(&problem);
        solve_time += t.elapsed();
        if !d.attainable {
            excluded += 1;
            // no silent wrong answer: either an error or the oracle's solution
            if sol.is_ok_and(|s| rel_err(&s.x, &d.oracle) > 1e-6) {
                excluded_wrong += 1;
            }
            continue;
        }
        match sol {
            Ok(s) => {
                let x = &s.x;
                let res = (d.a.transpose() * x + x * &d.a + x * &d.m * x + &d.q).norm();
                worst_rel = worst_rel.max(rel_err(x, &d.oracle));
                worst_res = worst_res.max(res.max(s.residual_norm) / (1.0 + d.q.norm()));
            }
            Err(e) => errors.push(format!("instance {solved} (n = {}): {e}", d.a.nrows())),
        }
        solved += 1;
    }
    outcome(
        errors.is_empty() && excluded_wrong == 0 && worst_rel <= ORACLE_REL && worst_res <= RESIDUAL_REL && solve_time < RICCATI_BUDGET,
        format!(
            "200 instances, max rel err {worst_rel:.2e} <= {ORACLE_REL:.0e}, max residual/(1+|N|) {worst_res:.2e} <= {RESIDUAL_REL:.0e}, solver errors {}, solve time {:.2}s < 10s; {excluded} further draws excluded because the oracle itself misses the residual bound (solver returned a wrong answer on {excluded_wrong}){}",
            errors.len(),
            solve_time.as_secs_f64(),
            if errors.is_empty() { String::new() } else { format!(" [{}]", errors.join("; ")) }
        ),
    )
}

fn desk() -> AwSynthesisPlant {
    let sector = build_sector_model(&dmatrix![1.0], &SaturationSpec::new(vec![1.0], vec![0.5]).unwrap()).unwrap();
    AwSynthesisPlant::from_blocks(
        dmatrix![-1.5],
        dmatrix![0.75],
        dmatrix![0.0, -1.0],
        dmatrix![0.5],
        dmatrix![0.25],
        dmatrix![0.0, 1.0],
        sector,
    )
    .unwrap()
}

fn desk_weights() -> AwWeights {
    AwWeights::new(dmatrix![1.0], dmatrix![1.0]).unwrap()
}

fn desk_oracle(tau: f64) -> ScalarStageTwo {
    scalar_stage_two(-1.5, 0.75, 0.5, 0.25, 1.0, 1.0, tau)
}

fn criterion_2() -> Outcome {
    let scalar = |a: f64, m: f64, n: f64| solve_are(&AreProblem::new(dmatrix![a], dmatrix![m], dmatrix![n]).unwrap()).map(|s| s.x[(0, 0)]);
    let cases = [
        ("-2x - x^2 + 1 = 0", scalar(-1.0, -1.0, 1.0), 2f64.sqrt() - 1.0),
        ("1 - x^2 = 0", scalar(0.0, -1.0, 1.0), 1.0),
        ("-4x + 3x^2 = 0", scalar(-2.0, 3.0, 0.0), 0.0),
    ];
    let mut errs = Vec::new();
    for (name, got, want) in cases {
        match got {
            Ok(x) if close(x, want, SCALAR_TOL) => {}
            Ok(x) => errs.push(format!("{name}: {x} vs {want}")),
            Err(e) => errs.push(format!("{name}: {e}")),
        }
    }
    let o = desk_oracle(10.0);
    match synthesize_at_tau(&desk(), &desk_weights(), 10.0) {
        Ok(c) => {
            let pairs = [
                ("Y", c.certificate.y_inf[(0, 0)], o.y),
                ("X", c.certificate.x_inf[(0, 0)], o.x),
                ("W", c.certificate.w_tau, o.w),
                ("A_aw", c.a_aw[(0, 0)], o.a_aw),
                ("B_aw", c.b_aw[(0, 0)], o.b_aw),
                ("C_aw", c.c_aw[(0, 0)], o.c_aw),
            ];
            for (name, got, want) in pairs {
                if !close(got, want, SCALAR_TOL) {
                    errs.push(format!("desk {name}: {got} vs {want}"));
                }
            }
        }
        Err(e) => errs.push(format!("desk: {e}")),
    }
    let pass = errs.is_empty();
    outcome(pass, if pass { format!("3 scalar AREs and 6 desk quantities within {SCALAR_TOL:.0e}") } else { errs.join("; ") })
}

fn criterion_3() -> Outcome {
    let mut r = rng(3);
    let (mut done, mut excluded, mut worst) = (0, 0, 0.0f64);
    let mut errors = Vec::new();
    while done < 50 {
        let Some(d) = draw_lqr(&mut r, 6) else { continue };
        if !d.attainable {
            excluded += 1;
            continue;
        }
        let oracle_gain = d.r.clone().try_inverse().unwrap() * d.b.transpose() * &d.oracle;
        let plant = UncertainPlant::certain(d.a, d.b);
        match solve_minimax_lqr(&plant, &Weights::new(d.q, d.r).unwrap(), &TauVector::empty()) {
            Ok(s) => worst = worst.max(rel_err(&s.gain, &oracle_gain)),
            Err(e) => errors.push(format!("instance {done}: {e}")),
        }
        done += 1;
    }
    outcome(
        errors.is_empty() && worst <= REDUCTION_REL,
        format!(
            "50 instances, max rel gain err {worst:.2e} <= {REDUCTION_REL:.0e}, errors {}; {excluded} draws excluded because the oracle misses the residual bound{}",
            errors.len(),
            if errors.is_empty() { String::new() } else { format!(" [{}]", errors.join("; ")) }
        ),
    )
}

/// Exact rounding error of `a + b` (TwoSum).
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn criterion_4() -> Outcome {
    let mut r = rng(4);
    let (mut identity, mut sector, mut recentred, mut domain) = (0usize, 0usize, 0usize, 0usize);
    let (mut in_domain, mut unrepresentable) = (0usize, 0usize);
    let samples = 100_000;
    for i in 0..samples {
        let u_max = r.random_range(0.1..5.0);
        let eps = r.random_range(0.01..0.99);
        let sat = SaturationSpec::new(vec![u_max], vec![eps]).unwrap();
        let u_bar = build_sector_model(&dmatrix![1.0], &sat).unwrap().u_bar[0];
        // ū(1 − ε) ≤ u_max exactly, and ū within two ulps of the naive quotient
        let p = eps * u_bar;
        let p_err = eps.mul_add(u_bar, -p);
        let (diff, diff_err) = two_sum(u_bar, -p);
        let excess = (diff - u_max) + (diff_err - p_err);
        let naive = u_max / (1.0 - eps);
        if excess > 0.0 || u_bar < naive.next_down().next_down() {
            domain += 1;
        }
        let u = match i % 10 {
            0 => [0.0, u_max, -u_max, u_bar, -u_bar][(i / 10) % 5],
            _ => r.random_range(-3.0 * u_bar..3.0 * u_bar),
        };
        let s = saturate(&[u], &sat)[0];
        let phi = deadzone(&[u], &sat)[0];
        let w = recentered_uncertainty(&[u], &sat)[0];
        // u − s exactly equals phi + err
        let (d, err) = two_sum(u, -s);
        if err == 0.0 {
            let (sum, e) = two_sum(s, phi);
            if sum != u || e != 0.0 {
                identity += 1;
            }
        } else {
            // no double equals u − s: phi must be its correctly rounded value
            unrepresentable += 1;
            if phi != d {
                identity += 1;
            }
        }
        if u.abs() <= u_bar {
            in_domain += 1;
            if !(0.0 <= phi * u && phi * u <= eps * u * u) {
                sector += 1;
            }
            if w.abs() > eps / 2.0 * u.abs() {
                recentred += 1;
            }
        }
    }
    outcome(
        identity + sector + recentred + domain == 0,
        format!(
            "{samples} points ({in_domain} with |u| <= u_bar): sat+phi=u violations {identity} ({unrepresentable} points where u - sat(u) is not a double, phi correctly rounded there), sector violations {sector}, |w_hat| bound violations {recentred}, u_bar outside u_max/(1-eps) or loose {domain}"
        ),
    )
}

fn ahfv() -> ResolvedConfig {
    let raw = ahfv_example_config();
    let text = serde_json::to_string_pretty(&raw).unwrap();
    resolve(raw, &text).unwrap()
}

fn min_eig(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new((m + m.transpose()) * 0.5).eigenvalues.min()
}

/// Re-checks a certificate from the defining equations.
fn certificate_errors(plant: &AwSynthesisPlant, w: &AwWeights, c: &AwCompensator) -> Vec<String> {
    let cert = &c.certificate;
    let tau = cert.tau;
    let (y, x) = (&cert.y_inf, &cert.x_inf);
    let (c1, d1, b1, b2, d2, a) = (&plant.c1_tilde, &plant.d1_tilde, &plant.b1, &plant.b2_tilde, &plant.d2_tilde, &plant.a_bar);
    let r_tau = &w.q + c1.transpose() * c1 * tau;
    let g = &w.r + d1.transpose() * d1 * tau;
    let g_inv = g.try_inverse().unwrap();
    let ups = c1.transpose() * d1 * tau;
    let gamma_inv = (d2 * d2.transpose()).try_inverse().unwrap();
    let nz = b2.ncols();
    let n_f = b2 * (DMatrix::identity(nz, nz) - d2.transpose() * &gamma_inv * d2) * b2.transpose();
    let filter = a * y + y * a.transpose() + y * (&r_tau / tau) * y + &n_f;
    let at = a - b1 * &g_inv * ups.transpose();
    let n_c = &r_tau - &ups * &g_inv * ups.transpose();
    let control = x * &at + at.transpose() * x - x * (b1 * &g_inv * b1.transpose() - b2 * b2.transpose() / tau) * x + &n_c;
    let rho = (y * x).complex_eigenvalues().iter().map(|l| l.norm()).fold(0.0, f64::max);

    let mut errs = Vec::new();
    if !(rho < tau) {
        errs.push(format!("rho {rho} >= tau {tau}"));
    }
    if filter.norm() > RESIDUAL_REL * (1.0 + n_f.norm()) {
        errs.push(format!("filter residual {:.2e}", filter.norm()));
    }
    if control.norm() > RESIDUAL_REL * (1.0 + n_c.norm()) {
        errs.push(format!("control residual {:.2e}", control.norm()));
    }
    if !(min_eig(y) > 0.0) {
        errs.push(format!("Y min eig {:.2e}", min_eig(y)));
    }
    if min_eig(x) < -1e-9 * x.norm() {
        errs.push(format!("X min eig {:.2e}", min_eig(x)));
    }
    errs
}

fn criterion_5() -> Outcome {
    let cfg = ahfv();
    let (published, published_tau) = awsynth::ahfv::published_weights();
    if cfg.stage2_weights != published {
        return outcome(false, "example config does not carry the published stage-2 weights");
    }
    let s1 = stage_one(&cfg).unwrap();
    let plant = stage_two_plant(&cfg, &s1).unwrap();
    let grid = log_grid(1.0, 1000.0, 40);
    let sweep = match sweep_tau(&plant, &published, &grid, None) {
        Ok(s) => s,
        Err(e) => return outcome(false, format!("sweep: {e}")),
    };
    let feasible = sweep.feasible_indices();
    let contiguous = feasible.windows(2).all(|w| w[1] == w[0] + 1);
    let ws: Vec<f64> = feasible.iter().map(|&i| sweep.points[i].w_tau.unwrap()).collect();
    let k = (0..ws.len()).min_by(|&i, &j| ws[i].total_cmp(&ws[j])).unwrap();
    let interior = k > 0 && k + 1 < ws.len() && ws[k] < ws[0] && ws[k] < ws[ws.len() - 1];
    let refined = sweep.best.certificate.w_tau <= ws[k];

    let mut cert_errs = certificate_errors(&plant, &published, &sweep.best);
    for &i in &feasible {
        let c = synthesize_at_tau(&plant, &published, grid[i]).unwrap();
        cert_errs.extend(certificate_errors(&plant, &published, &c).into_iter().map(|e| format!("tau {:.3}: {e}", grid[i])));
    }
    let at_published_tau = match synthesize_at_tau(&plant, &published, published_tau) {
        Ok(c) => format!("feasible, W {:.4e}", c.certificate.w_tau),
        Err(e) => format!("not feasible ({})", e.to_string().split(':').next().unwrap_or("")),
    };
    outcome(
        !feasible.is_empty() && contiguous && interior && refined && cert_errs.is_empty(),
        format!(
            "{} of 40 grid points in [1, 1000] feasible (tau {:.1}..{:.1}), interior grid minimum at tau {:.1}, refined tau {:.2} W {:.4e}, {} certificates re-verified{}; tau = {published_tau} is checked for membership only, not optimality: {at_published_tau}",
            feasible.len(),
            grid[feasible[0]],
            grid[*feasible.last().unwrap()],
            grid[feasible[k]],
            sweep.best.certificate.tau,
            sweep.best.certificate.w_tau,
            feasible.len() + 1,
            if cert_errs.is_empty() { String::new() } else { format!(" [{}]", cert_errs.join("; ")) }
        ),
    )
}

fn criterion_6() -> Outcome {
    let cfg = ahfv();
    let s1 = stage_one(&cfg).unwrap();
    let plant = stage_two_plant(&cfg, &s1).unwrap();
    let comp = sweep_tau(&plant, &cfg.stage2_weights, &cfg.raw.stage2.tau_grid.values(), None).unwrap().best;
    let t = Instant::now();
    let mut m = Vec::new();
    for mode in Mode::ALL {
        let trace = simulate(&cfg.plant, &s1.gain, Some(&comp), &cfg.saturation, &cfg.raw.simulation.for_mode(mode)).unwrap();
        m.push(tracking_metrics(&trace).unwrap());
    }
    let elapsed = t.elapsed();
    let (nom, sat, aw) = (&m[0], &m[1], &m[2]);
    let pass = sat.saturation_duty >= MIN_DUTY
        && aw.effective_ise() < sat.effective_ise()
        && nom.effective_ise() <= aw.effective_ise()
        && aw.diverged_at.is_none()
        && aw.max_abs_error.is_finite()
        && elapsed < SIMULATION_BUDGET;
    outcome(
        pass,
        format!(
            "ISE nominal {:.4} <= saturated_aw {:.4} < saturated {:.4e}; saturated duty {:.3} >= {MIN_DUTY}; saturated_aw max|e| {:.3}, diverged {}; 3 modes in {:.2}s < 60s",
            nom.effective_ise(),
            aw.effective_ise(),
            sat.effective_ise(),
            sat.saturation_duty,
            aw.max_abs_error,
            aw.diverged_at.is_some(),
            elapsed.as_secs_f64()
        ),
    )
}

fn run_pipeline(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let cfg = dir.join("ahfv.json");
    let out = dir.join("out");
    let mut text = Vec::new();
    assert_eq!(cli::run(["awsynth", "example", "ahfv"], &mut text, &mut std::io::sink()), 0);
    std::fs::write(&cfg, text).unwrap();
    for cmd in ["synth-lqr", "synth-aw", "simulate"] {
        let code = cli::run(
            ["awsynth", cmd, "-c", cfg.to_str().unwrap(), "-o", out.to_str().unwrap()],
            &mut std::io::sink(),
            &mut std::io::sink(),
        );
        assert_eq!(code, 0, "{cmd}");
    }
    let mut files: Vec<_> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn criterion_7() -> Outcome {
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (a, b) = (run_pipeline(d1.path()), run_pipeline(d2.path()));
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    let differing: Vec<&str> = a.iter().zip(&b).filter(|(x, y)| x != y).map(|(x, _)| x.0.as_str()).collect();

    let plant = desk();
    let grid = log_grid(0.1, 1000.0, 40);
    let serial = sweep_tau(&plant, &desk_weights(), &grid, Some(1)).unwrap();
    let parallel = sweep_tau(&plant, &desk_weights(), &grid, Some(4)).unwrap();
    let bits = |r: &awsynth::antiwindup_synth::TauSweepResult| r.points.iter().map(|p| p.w_tau.map(f64::to_bits)).collect::<Vec<_>>();
    let same_sweep = bits(&serial) == bits(&parallel) && serial.best.certificate.w_tau.to_bits() == parallel.best.certificate.w_tau.to_bits();

    let csvs = names.iter().filter(|n| n.ends_with(".csv")).count();
    outcome(
        a.len() == b.len() && differing.is_empty() && csvs == 4 && same_sweep,
        format!(
            "two end-to-end runs, {} artifacts ({csvs} CSV) byte-identical: {}; sweep with 1 vs 4 threads bit-identical: {same_sweep}",
            a.len(),
            if differing.is_empty() { "yes".to_string() } else { format!("no, {differing:?}") }
        ),
    )
}

fn criterion_8() -> Outcome {
    let plant = desk();
    let w = desk_weights();
    let feasible = |t: f64| synthesize_at_tau(&plant, &w, t).is_ok();
    // boundary by bisection between an infeasible and a feasible multiplier
    let (mut lo, mut hi) = (0.1, 10.0);
    if feasible(lo) || !feasible(hi) {
        return outcome(false, "desk instance does not bracket the boundary on [0.1, 10]");
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let boundary = hi;
    let o = desk_oracle(boundary);
    let oracle_gap = (o.y * o.x / boundary - 1.0).abs();

    let above: Vec<f64> = (1..=9).map(|k| synthesize_at_tau(&plant, &w, boundary * (1.0 + 10f64.powi(-k))).unwrap().certificate.w_tau).collect();
    let monotone = above.windows(2).all(|p| p[1] > p[0]);
    let blows_up = above[8] > 1e6 * above[0].min(1e3);
    let below: Vec<_> = (1..=9).map(|k| synthesize_at_tau(&plant, &w, boundary * (1.0 - 10f64.powi(-k)))).collect();
    let violations = below.iter().filter(|r| matches!(r, Err(Error::SpectralRadiusViolation { .. }))).count();
    outcome(
        monotone && blows_up && violations == below.len() && oracle_gap < 1e-6,
        format!(
            "boundary tau* = {boundary:.10} (closed-form rho/tau - 1 = {oracle_gap:.1e}); W at tau*(1+1e-1..1e-9) rises monotonically {:.4e} -> {:.4e}; SpectralRadiusViolation at {violations}/{} points tau*(1-1e-1..1e-9)",
            above[0],
            above[8],
            below.len()
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("Riccati oracle equivalence", criterion_1),
        ("analytic scalar checks", criterion_2),
        ("reduction to standard LQR", criterion_3),
        ("sector identities", criterion_4),
        ("published weights accepted", criterion_5),
        ("simulation comparison", criterion_6),
        ("determinism", criterion_7),
        ("feasibility boundary", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            outcome(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        if !o.pass {
            failed += 1;
        }
        println!("criterion {} {}: {} ({:.2}s) {}", i + 1, if o.pass { "PASS" } else { "FAIL" }, name, t.elapsed().as_secs_f64(), o.detail);
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
