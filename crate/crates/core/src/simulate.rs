//! Fixed-step closed-loop simulation with actuator saturation.
//!
//! The loop is
//!
//! ```text
//! ẋ    = A·x + B·u_eff + Σ C_j·ζ_j,     ζ_j = Δ_j(t)·(K_j·(x − x_ref) + G_j·u_eff)
//! u    = −G·(x − x_ref(t)) + v
//! ẋ_aw = A_aw·x_aw + B_aw·ŵ(u),         v = C_aw·x_aw
//! ```
//!
//! with `u_eff = u` in nominal mode and `sat(u)` otherwise; the compensator
//! only runs in [`Mode::SaturatedAw`].

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::antiwindup_plant::{certified_bound, recentered_uncertainty, saturate};
use crate::antiwindup_synth::AwCompensator;
use crate::error::{Error, Result};
use crate::model::{SaturationSpec, UncertainPlant};

/// Length of the intervals on which each `Δ_j` is held.
pub const UNCERTAINTY_HOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Nominal,
    Saturated,
    SaturatedAw,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Nominal, Mode::Saturated, Mode::SaturatedAw];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Nominal => "nominal",
            Mode::Saturated => "saturated",
            Mode::SaturatedAw => "saturated_aw",
        }
    }
}

/// Reference for one tracked state. The value is a sum of steps plus an
/// optional ramp; a ramp also sets the reference of `state + 1` to its
/// rate, which is consistent for integrator chains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reference {
    /// Zero-based index of the tracked state.
    pub state: usize,
    /// `(time, increment)` pairs.
    #[serde(default)]
    pub steps: Vec<(f64, f64)>,
    /// `(start time, rate)`.
    #[serde(default)]
    pub ramp: Option<(f64, f64)>,
}

impl Reference {
    /// Square wave between `0` and `amplitude`, switching every `half_period`
    /// from `start` until `end`.
    pub fn square_wave(state: usize, start: f64, half_period: f64, end: f64, amplitude: f64) -> Self {
        let mut steps = Vec::new();
        let mut t = start;
        let mut sign = 1.0;
        while t < end {
            steps.push((t, sign * amplitude));
            sign = -sign;
            t += half_period;
        }
        Self { state, steps, ramp: None }
    }

    pub fn step(state: usize, at: f64, size: f64) -> Self {
        Self { state, steps: vec![(at, size)], ramp: None }
    }

    pub fn value(&self, t: f64) -> f64 {
        let steps: f64 = self.steps.iter().filter(|(s, _)| t >= *s).map(|(_, v)| v).sum();
        let ramp = match self.ramp {
            Some((t0, rate)) if t > t0 => rate * (t - t0),
            _ => 0.0,
        };
        steps + ramp
    }

    pub fn rate(&self, t: f64) -> f64 {
        match self.ramp {
            Some((t0, rate)) if t > t0 => rate,
            _ => 0.0,
        }
    }
}

fn default_t_final() -> f64 {
    100.0
}
fn default_dt() -> f64 {
    1e-3
}
fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub mode: Mode,
    #[serde(default)]
    pub references: Vec<Reference>,
    #[serde(default)]
    pub uncertainty_seed: u64,
    #[serde(default)]
    pub uncertainty_gain: f64,
    /// Initial plant state; zero when absent.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    /// Only every `trace_stride`-th step is written to CSV. Metrics always
    /// use every step.
    #[serde(default = "default_stride")]
    pub trace_stride: usize,
}

impl SimConfig {
    pub fn new(mode: Mode) -> Self {
        Self {
            t_final: default_t_final(),
            dt: default_dt(),
            mode,
            references: Vec::new(),
            uncertainty_seed: 0,
            uncertainty_gain: 0.0,
            x0: None,
            trace_stride: 1,
        }
    }

    pub fn validate(&self, states: usize) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidInput(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.t_final >= self.dt && self.t_final.is_finite()) {
            return Err(Error::InvalidInput(format!("t_final = {} must be at least dt", self.t_final)));
        }
        if !(0.0..=1.0).contains(&self.uncertainty_gain) {
            return Err(Error::InvalidInput(format!("uncertainty_gain = {} must lie in [0, 1]", self.uncertainty_gain)));
        }
        if self.trace_stride == 0 {
            return Err(Error::InvalidInput("trace_stride must be at least 1".into()));
        }
        for r in &self.references {
            if r.state >= states || (r.ramp.is_some() && r.state + 1 >= states) {
                return Err(Error::InvalidInput(format!("reference on state {} is out of range", r.state)));
            }
        }
        if let Some(x0) = &self.x0 {
            if x0.len() != states {
                return Err(Error::DimensionMismatch(format!("x0 has {} entries, expected {states}", x0.len())));
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }
}

/// Piecewise-constant scalar uncertainty gains `Δ_j ∈ [−gain, gain]`.
#[derive(Debug, Clone)]
pub struct UncertaintyRealizer {
    hold: f64,
    /// `deltas[k][j]`: gain of channel `j` on hold interval `k`.
    deltas: Vec<Vec<f64>>,
}

impl UncertaintyRealizer {
    pub fn new(channels: usize, t_final: f64, seed: u64, gain: f64) -> Self {
        let intervals = (t_final / UNCERTAINTY_HOLD).ceil() as usize + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let deltas = (0..intervals)
            .map(|_| {
                (0..channels)
                    .map(|_| if gain > 0.0 { rng.random_range(-gain..=gain) } else { 0.0 })
                    .collect()
            })
            .collect();
        Self { hold: UNCERTAINTY_HOLD, deltas }
    }

    pub fn delta(&self, t: f64, channel: usize) -> f64 {
        let k = ((t / self.hold).floor().max(0.0) as usize).min(self.deltas.len() - 1);
        self.deltas[k].get(channel).copied().unwrap_or(0.0)
    }

    /// `ζ_j = Δ_j(t)·z_j` for every channel.
    pub fn realize(&self, z: &[DVector<f64>], t: f64) -> Vec<DVector<f64>> {
        z.iter().enumerate().map(|(j, zj)| zj * self.delta(t, j)).collect()
    }
}

/// Classical fourth-order Runge–Kutta step of `ẋ = f(t, x)`.
pub fn step_rk4<F: FnMut(f64, &DVector<f64>) -> DVector<f64>>(mut f: F, t: f64, x: &DVector<f64>, dt: f64) -> Result<DVector<f64>> {
    let k1 = f(t, x);
    let k2 = f(t + dt / 2.0, &(x + &k1 * (dt / 2.0)));
    let k3 = f(t + dt / 2.0, &(x + &k2 * (dt / 2.0)));
    let k4 = f(t + dt, &(x + &k3 * dt));
    let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    if next.iter().all(|v| v.is_finite()) {
        Ok(next)
    } else {
        Err(Error::NonFiniteState { t: t + dt })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub mode: Mode,
    pub t: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub u_sat: Vec<DVector<f64>>,
    pub v: Vec<DVector<f64>>,
    /// Reference minus tracked state, one entry per reference.
    pub e: Vec<DVector<f64>>,
    pub domain_exit: Vec<bool>,
    /// Time at which the state stopped being finite.
    pub diverged_at: Option<f64>,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut out: W, stride: usize) -> std::io::Result<()> {
        let stride = stride.max(1);
        let (n, m, k) = (
            self.x.first().map_or(0, |v| v.len()),
            self.u.first().map_or(0, |v| v.len()),
            self.e.first().map_or(0, |v| v.len()),
        );
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend((1..=m).map(|i| format!("u{i}")));
        header.extend((1..=m).map(|i| format!("usat{i}")));
        header.extend((1..=m).map(|i| format!("v{i}")));
        header.extend((1..=k).map(|i| format!("e{i}")));
        header.push("domain_exit".into());
        writeln!(out, "{}", header.join(","))?;
        let mut line = String::new();
        for i in (0..self.len()).step_by(stride) {
            line.clear();
            line.push_str(&format!("{:.16e}", self.t[i]));
            for series in [&self.x[i], &self.u[i], &self.u_sat[i], &self.v[i], &self.e[i]] {
                for v in series.iter() {
                    line.push_str(&format!(",{v:.16e}"));
                }
            }
            line.push_str(if self.domain_exit[i] { ",1" } else { ",0" });
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Simulates one configuration. Divergence truncates the trace and is
/// recorded in [`SimTrace::diverged_at`] rather than returned as an error.
pub fn simulate(
    plant: &UncertainPlant,
    lqr_gain: &DMatrix<f64>,
    compensator: Option<&AwCompensator>,
    sat: &SaturationSpec,
    cfg: &SimConfig,
) -> Result<SimTrace> {
    let (n, m) = (plant.states(), plant.inputs());
    cfg.validate(n)?;
    sat.validate()?;
    if lqr_gain.shape() != (m, n) {
        return Err(Error::DimensionMismatch(format!("gain is {:?}, expected ({m}, {n})", lqr_gain.shape())));
    }
    if sat.channels() != m {
        return Err(Error::DimensionMismatch(format!("{} saturation channels for {m} inputs", sat.channels())));
    }
    let comp = match cfg.mode {
        Mode::SaturatedAw => {
            let c = compensator.ok_or(Error::MissingCompensator)?;
            if c.a_aw.nrows() != n || c.b_aw.ncols() != m || c.c_aw.shape() != (m, n) {
                return Err(Error::DimensionMismatch("compensator does not match the plant".into()));
            }
            Some(c)
        }
        _ => None,
    };
    let k = cfg.references.len();
    let aw_dim = comp.map_or(0, |c| c.order());
    let realizer = UncertaintyRealizer::new(plant.num_channels(), cfg.t_final, cfg.uncertainty_seed, cfg.uncertainty_gain);
    let u_bar: Vec<f64> = sat.u_max.iter().zip(&sat.eps).map(|(u, e)| certified_bound(*u, *e)).collect();

    let x_ref = |t: f64| {
        let mut r = DVector::zeros(n);
        for rf in &cfg.references {
            r[rf.state] += rf.value(t);
            if rf.ramp.is_some() {
                r[rf.state + 1] += rf.rate(t);
            }
        }
        r
    };
    // Control, effective input and compensator output from the full state.
    let controls = |t: f64, s: &DVector<f64>| {
        let x = s.rows(0, n);
        let v = match comp {
            Some(c) => &c.c_aw * s.rows(n, aw_dim),
            None => DVector::zeros(m),
        };
        let u = -(lqr_gain * (x - x_ref(t))) + &v;
        let u_eff = match cfg.mode {
            Mode::Nominal => u.clone(),
            _ => DVector::from_vec(saturate(u.as_slice(), sat)),
        };
        (u, u_eff, v)
    };
    // Δ is held over each integration step at its value at the step start.
    let dynamics = |t_hold: f64| {
        let controls = &controls;
        let realizer = &realizer;
        move |t: f64, s: &DVector<f64>| {
            let (u, u_eff, _) = controls(t, s);
            let x = s.rows(0, n);
            let mut dx = &plant.a * x + &plant.b * &u_eff;
            for (j, ch) in plant.channels.iter().enumerate() {
                let d = realizer.delta(t_hold, j);
                if d != 0.0 {
                    // the model lives in tracking-error coordinates
                    dx += &ch.c * ((&ch.k * (x - x_ref(t)) + &ch.g * &u_eff) * d);
                }
            }
            let mut out = DVector::zeros(n + aw_dim);
            out.rows_mut(0, n).copy_from(&dx);
            if let Some(c) = comp {
                let w_hat = DVector::from_vec(recentered_uncertainty(u.as_slice(), sat));
                out.rows_mut(n, aw_dim).copy_from(&(&c.a_aw * s.rows(n, aw_dim) + &c.b_aw * w_hat));
            }
            out
        }
    };

    let steps = cfg.steps();
    let mut trace = SimTrace {
        mode: cfg.mode,
        t: Vec::with_capacity(steps + 1),
        x: Vec::with_capacity(steps + 1),
        u: Vec::with_capacity(steps + 1),
        u_sat: Vec::with_capacity(steps + 1),
        v: Vec::with_capacity(steps + 1),
        e: Vec::with_capacity(steps + 1),
        domain_exit: Vec::with_capacity(steps + 1),
        diverged_at: None,
    };
    let mut state = DVector::zeros(n + aw_dim);
    if let Some(x0) = &cfg.x0 {
        state.rows_mut(0, n).copy_from_slice(x0);
    }
    let record = |t: f64, s: &DVector<f64>, trace: &mut SimTrace| {
        let (u, _, v) = controls(t, s);
        let x = s.rows(0, n).clone_owned();
        let u_sat = DVector::from_vec(saturate(u.as_slice(), sat));
        let e = DVector::from_iterator(k, cfg.references.iter().map(|r| r.value(t) - x[r.state]));
        trace.domain_exit.push(u.iter().zip(&u_bar).any(|(ui, ub)| ui.abs() > *ub));
        trace.t.push(t);
        trace.x.push(x);
        trace.u.push(u);
        trace.u_sat.push(u_sat);
        trace.v.push(v);
        trace.e.push(e);
    };
    record(0.0, &state, &mut trace);
    for i in 0..steps {
        let t = i as f64 * cfg.dt;
        match step_rk4(dynamics(t), t, &state, cfg.dt) {
            Ok(next) => state = next,
            Err(_) => {
                trace.diverged_at = Some(t + cfg.dt);
                break;
            }
        }
        record((i + 1) as f64 * cfg.dt, &state, &mut trace);
    }
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingMetrics {
    /// `∫ Σ e_i² dt`
    pub ise: f64,
    /// `∫ Σ |e_i| dt`
    pub iae: f64,
    pub max_abs_error: f64,
    /// Fraction of samples with `u ≠ sat(u)`.
    pub saturation_duty: f64,
    pub domain_exits: usize,
    pub diverged_at: Option<f64>,
}

impl TrackingMetrics {
    /// ISE with divergence counted as infinite.
    pub fn effective_ise(&self) -> f64 {
        if self.diverged_at.is_some() {
            f64::INFINITY
        } else {
            self.ise
        }
    }
}

pub fn tracking_metrics(trace: &SimTrace) -> Result<TrackingMetrics> {
    if trace.is_empty() {
        return Err(Error::InvalidInput("empty trace".into()));
    }
    let sq: Vec<f64> = trace.e.iter().map(|e| e.norm_squared()).collect();
    let abs: Vec<f64> = trace.e.iter().map(|e| e.lp_norm(1)).collect();
    let trapz = |f: &[f64]| trace.t.windows(2).zip(f.windows(2)).map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1])).sum::<f64>();
    let saturated = trace.u.iter().zip(&trace.u_sat).filter(|(u, s)| u != s).count();
    Ok(TrackingMetrics {
        ise: trapz(&sq),
        iae: trapz(&abs),
        max_abs_error: trace.e.iter().map(|e| e.amax()).fold(0.0, f64::max),
        saturation_duty: saturated as f64 / trace.len() as f64,
        domain_exits: trace.domain_exit.iter().filter(|b| **b).count(),
        diverged_at: trace.diverged_at,
    })
}
