//! JSON run configuration.
//!
//! Matrices are row-major nested arrays. Unknown keys are rejected, and
//! validation failures point at the line of the offending key.

use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ahfv::{self, AhfvConfig};
use crate::antiwindup_synth::AwWeights;
use crate::error::Error;
use crate::minimax_lqr::{log_grid, TauSearchConfig};
use crate::model::{SaturationSpec, UncertainPlant, UncertaintyChannel, Weights};
use crate::simulate::{Mode, Reference, SimConfig};

pub const CONFIG_VERSION: u32 = 1;

pub type Matrix = Vec<Vec<f64>>;

pub fn to_dmatrix(rows: &Matrix, what: &str) -> Result<DMatrix<f64>, Error> {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::DimensionMismatch(format!("{what}: rows have different lengths")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn from_dmatrix(m: &DMatrix<f64>) -> Matrix {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantSpec {
    Ahfv(AhfvConfig),
    Matrices(MatrixPlant),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixPlant {
    pub a: Matrix,
    pub b: Matrix,
    #[serde(default)]
    pub channels: Vec<ChannelSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub c: Matrix,
    pub k: Matrix,
    pub g: Matrix,
    /// IQC offset; `10⁻²·I` when absent.
    #[serde(default)]
    pub d: Option<Matrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage1Config {
    pub q: Matrix,
    pub r: Matrix,
    /// Fixed multipliers; searched when absent.
    #[serde(default)]
    pub taus: Option<Vec<f64>>,
    /// Known initial state for the cost bound; random (trace) bound when absent.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub search: SearchSettings,
    /// Replaces the synthesized gain in the antiwindup stage.
    #[serde(default)]
    pub gain_override: Option<Matrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSettings {
    pub grid_min: f64,
    pub grid_max: f64,
    pub points_per_dim: usize,
}

impl Default for SearchSettings {
    fn default() -> Self {
        let d = TauSearchConfig::default();
        Self { grid_min: d.grid_min, grid_max: d.grid_max, points_per_dim: d.points_per_dim }
    }
}

impl SearchSettings {
    pub fn to_search_config(&self) -> TauSearchConfig {
        TauSearchConfig { grid_min: self.grid_min, grid_max: self.grid_max, points_per_dim: self.points_per_dim, ..Default::default() }
    }
}

/// Either `{"min", "max", "points"}` (log-spaced) or an explicit list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, try_from = "serde_json::Value")]
pub enum TauGrid {
    Range { min: f64, max: f64, points: usize },
    Values(Vec<f64>),
}

// Untagged enums buffer numbers in a form that arbitrary-precision JSON
// numbers do not survive, so the variant is picked by hand.
impl TryFrom<serde_json::Value> for TauGrid {
    type Error = String;

    fn try_from(v: serde_json::Value) -> Result<Self, String> {
        let num = |x: &serde_json::Value, what: &str| x.as_f64().ok_or_else(|| format!("tau_grid: {what} is not a number"));
        match &v {
            serde_json::Value::Array(xs) => Ok(TauGrid::Values(xs.iter().map(|x| num(x, "entry")).collect::<Result<_, _>>()?)),
            serde_json::Value::Object(m) => {
                if let Some(k) = m.keys().find(|k| !["min", "max", "points"].contains(&k.as_str())) {
                    return Err(format!("tau_grid: unknown field `{k}`"));
                }
                let field = |k: &str| m.get(k).ok_or_else(|| format!("tau_grid: missing field `{k}`"));
                Ok(TauGrid::Range {
                    min: num(field("min")?, "min")?,
                    max: num(field("max")?, "max")?,
                    points: field("points")?.as_u64().ok_or("tau_grid: points is not a non-negative integer")? as usize,
                })
            }
            _ => Err("tau_grid must be an object {min, max, points} or a list of values".into()),
        }
    }
}

impl Default for TauGrid {
    fn default() -> Self {
        TauGrid::Range { min: 0.1, max: 1000.0, points: 40 }
    }
}

impl TauGrid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            TauGrid::Range { min, max, points } => log_grid(*min, *max, *points),
            TauGrid::Values(v) => v.clone(),
        }
    }

    /// Parses `min:max:points`.
    pub fn parse(spec: &str) -> Result<Self, String> {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("grid '{spec}' is not of the form min:max:points"));
        }
        let min: f64 = parts[0].parse().map_err(|_| format!("bad grid minimum '{}'", parts[0]))?;
        let max: f64 = parts[1].parse().map_err(|_| format!("bad grid maximum '{}'", parts[1]))?;
        let points: usize = parts[2].parse().map_err(|_| format!("bad grid size '{}'", parts[2]))?;
        Ok(TauGrid::Range { min, max, points })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelScaling {
    /// Rescale channel `j` by `√τ_j` from stage 1.
    #[default]
    StageOne,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage2Config {
    pub q: Matrix,
    pub r: Matrix,
    #[serde(default)]
    pub tau_grid: TauGrid,
    #[serde(default)]
    pub channel_scaling: ChannelScaling,
}

fn all_modes() -> Vec<Mode> {
    Mode::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default = "all_modes")]
    pub modes: Vec<Mode>,
    pub t_final: f64,
    pub dt: f64,
    #[serde(default)]
    pub references: Vec<Reference>,
    #[serde(default)]
    pub uncertainty_seed: u64,
    #[serde(default)]
    pub uncertainty_gain: f64,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub trace_stride: usize,
}

fn one() -> usize {
    1
}

impl Default for SimulationConfig {
    fn default() -> Self {
        let s = SimConfig::new(Mode::Nominal);
        Self {
            modes: all_modes(),
            t_final: s.t_final,
            dt: s.dt,
            references: Vec::new(),
            uncertainty_seed: 0,
            uncertainty_gain: 0.0,
            x0: None,
            trace_stride: 1,
        }
    }
}

impl SimulationConfig {
    pub fn for_mode(&self, mode: Mode) -> SimConfig {
        SimConfig {
            t_final: self.t_final,
            dt: self.dt,
            mode,
            references: self.references.clone(),
            uncertainty_seed: self.uncertainty_seed,
            uncertainty_gain: self.uncertainty_gain,
            x0: self.x0.clone(),
            trace_stride: self.trace_stride,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub plant: PlantSpec,
    /// Required for matrix plants; example plants carry their own limits.
    #[serde(default)]
    pub saturation: Option<SaturationSpec>,
    pub stage1: Stage1Config,
    pub stage2: Stage2Config,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub output_dir: Option<String>,
}

/// A configuration problem, anchored to a line of the source when possible.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Everything the commands need, built and checked.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub raw: RunConfig,
    pub plant: UncertainPlant,
    pub saturation: SaturationSpec,
    pub stage1_weights: Weights,
    pub stage2_weights: AwWeights,
}

/// 1-based line of the first occurrence of `"key"` in `text`.
pub fn locate_key(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

fn anchored(text: &str, key: &str, err: impl fmt::Display) -> ConfigError {
    ConfigError { line: locate_key(text, key), message: err.to_string() }
}

pub fn parse_config(text: &str) -> Result<ResolvedConfig, ConfigError> {
    let raw: RunConfig = serde_json::from_str(text).map_err(|e| ConfigError { line: Some(e.line()), message: e.to_string() })?;
    resolve(raw, text)
}

pub fn load_config(path: &Path) -> Result<ResolvedConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError { line: None, message: format!("cannot read {}: {e}", path.display()) })?;
    parse_config(&text)
}

/// Validates a parsed configuration. `text` is only used to anchor errors.
pub fn resolve(raw: RunConfig, text: &str) -> Result<ResolvedConfig, ConfigError> {
    if raw.version != CONFIG_VERSION {
        return Err(anchored(text, "version", format!("unsupported config version {} (expected {CONFIG_VERSION})", raw.version)));
    }
    let (plant, saturation) = match (&raw.plant, &raw.saturation) {
        (PlantSpec::Ahfv(cfg), None) => {
            let sat = cfg.saturation().map_err(|e| anchored(text, sat_key(&e), e))?;
            (ahfv::build_ahfv(cfg).map_err(|e| anchored(text, "ahfv", e))?, sat)
        }
        (PlantSpec::Ahfv(_), Some(_)) => {
            return Err(anchored(text, "saturation", "the ahfv example sets u_max and eps itself; remove \"saturation\""));
        }
        (PlantSpec::Matrices(_), None) => return Err(anchored(text, "matrices", "a matrix plant needs a \"saturation\" section")),
        (PlantSpec::Matrices(m), Some(sat)) => {
            sat.validate().map_err(|e| anchored(text, sat_key(&e), e))?;
            (matrix_plant(m).map_err(|e| anchored(text, "matrices", e))?, sat.clone())
        }
    };
    if saturation.channels() != plant.inputs() {
        return Err(anchored(text, "u_max", format!("{} saturation channels for {} inputs", saturation.channels(), plant.inputs())));
    }

    let s1 = &raw.stage1;
    let q1 = to_dmatrix(&s1.q, "stage1.q").map_err(|e| anchored(text, "stage1", e))?;
    let r1 = to_dmatrix(&s1.r, "stage1.r").map_err(|e| anchored(text, "stage1", e))?;
    let stage1_weights = Weights::new(q1, r1).map_err(|e| anchored(text, "stage1", e))?;
    stage1_weights.check_dims(&plant).map_err(|e| anchored(text, "stage1", e))?;
    if let Some(t) = &s1.taus {
        if t.len() != plant.num_channels() || t.iter().any(|v| !(*v > 0.0)) {
            return Err(anchored(text, "taus", format!("need {} positive multipliers", plant.num_channels())));
        }
    }
    if let Some(x0) = &s1.x0 {
        if x0.len() != plant.states() {
            return Err(anchored(text, "x0", format!("x0 has {} entries, expected {}", x0.len(), plant.states())));
        }
    }
    if let Some(g) = &s1.gain_override {
        let g = to_dmatrix(g, "gain_override").map_err(|e| anchored(text, "gain_override", e))?;
        if g.shape() != (plant.inputs(), plant.states()) {
            return Err(anchored(text, "gain_override", format!("gain_override is {:?}, expected ({}, {})", g.shape(), plant.inputs(), plant.states())));
        }
    }
    let s = &s1.search;
    if !(s.grid_min > 0.0 && s.grid_max >= s.grid_min && s.points_per_dim >= 1) {
        return Err(anchored(text, "search", "stage1.search needs 0 < grid_min <= grid_max and points_per_dim >= 1"));
    }

    let s2 = &raw.stage2;
    let q2 = to_dmatrix(&s2.q, "stage2.q").map_err(|e| anchored(text, "stage2", e))?;
    let r2 = to_dmatrix(&s2.r, "stage2.r").map_err(|e| anchored(text, "stage2", e))?;
    let w2 = Weights::new(q2, r2).map_err(|e| anchored(text, "stage2", e))?;
    w2.check_dims(&plant).map_err(|e| anchored(text, "stage2", e))?;
    check_grid(&s2.tau_grid).map_err(|m| anchored(text, "tau_grid", m))?;

    for mode in &raw.simulation.modes {
        raw.simulation.for_mode(*mode).validate(plant.states()).map_err(|e| anchored(text, "simulation", e))?;
    }

    Ok(ResolvedConfig { stage2_weights: w2.into(), raw, plant, saturation, stage1_weights })
}

fn sat_key(e: &Error) -> &'static str {
    match e {
        Error::InvalidSaturation { .. } => "u_max",
        _ => "eps",
    }
}

pub fn check_grid(grid: &TauGrid) -> Result<(), String> {
    match grid {
        TauGrid::Range { min, max, points } => {
            if !(*min > 0.0 && max >= min && *points >= 1) {
                return Err("tau grid needs 0 < min <= max and at least one point".into());
            }
        }
        TauGrid::Values(v) => {
            if v.is_empty() || v.iter().any(|t| !(*t > 0.0)) || v.windows(2).any(|w| !(w[0] < w[1])) {
                return Err("tau grid values must be positive and strictly increasing".into());
            }
        }
    }
    Ok(())
}

fn matrix_plant(m: &MatrixPlant) -> Result<UncertainPlant, Error> {
    let mut plant = UncertainPlant::certain(to_dmatrix(&m.a, "a")?, to_dmatrix(&m.b, "b")?);
    for (j, ch) in m.channels.iter().enumerate() {
        let mut c = UncertaintyChannel::new(
            to_dmatrix(&ch.c, &format!("channel {} c", j + 1))?,
            to_dmatrix(&ch.k, &format!("channel {} k", j + 1))?,
            to_dmatrix(&ch.g, &format!("channel {} g", j + 1))?,
        );
        if let Some(d) = &ch.d {
            c = c.with_offset(to_dmatrix(d, &format!("channel {} d", j + 1))?);
        }
        plant = plant.with_channel(c);
    }
    plant.validate().into_result()?;
    Ok(plant)
}

/// Ready-made configuration for the hypersonic vehicle example.
pub fn ahfv_example_config() -> RunConfig {
    let (w2, _) = ahfv::published_weights();
    let mut q1 = DMatrix::identity(ahfv::STATES, ahfv::STATES);
    for &h in &ahfv::CHAIN_HEADS {
        q1[(h, h)] = 100.0;
    }
    let references = ahfv::CHAIN_HEADS
        .iter()
        .map(|&h| Reference::square_wave(h, 1.0, 2.0, 100.0, 0.235))
        .collect();
    RunConfig {
        version: CONFIG_VERSION,
        plant: PlantSpec::Ahfv(AhfvConfig::default()),
        saturation: None,
        stage1: Stage1Config {
            q: from_dmatrix(&q1),
            r: from_dmatrix(&DMatrix::identity(ahfv::INPUTS, ahfv::INPUTS)),
            taus: None,
            x0: None,
            search: SearchSettings::default(),
            gain_override: None,
        },
        stage2: Stage2Config { q: from_dmatrix(&w2.q), r: from_dmatrix(&w2.r), tau_grid: TauGrid::default(), channel_scaling: ChannelScaling::StageOne },
        simulation: SimulationConfig {
            references,
            uncertainty_seed: 1,
            uncertainty_gain: 1.0,
            trace_stride: 10,
            ..SimulationConfig::default()
        },
        output_dir: None,
    }
}
