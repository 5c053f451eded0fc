//! Linearized air-breathing hypersonic vehicle model: two integrator chains
//! (velocity, order 4; altitude, order 5) driven at their tails, with 24
//! structured uncertainty parameters per channel.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::antiwindup_synth::AwWeights;
use crate::error::{Error, Result};
use crate::model::{SaturationSpec, UncertainPlant, UncertaintyChannel};

pub const STATES: usize = 9;
pub const INPUTS: usize = 2;
pub const PARAMETERS: usize = 24;

/// Multiplier at which the published design was reported.
pub const PUBLISHED_TAU: f64 = 35.0;

/// Tail state of each chain (zero based); the control enters here.
pub const CHAIN_TAILS: [usize; 2] = [3, 8];

/// Head state of each chain: the tracking error.
pub const CHAIN_HEADS: [usize; 2] = [0, 4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AhfvConfig {
    /// Every entry of `K_1`, `K_2`.
    pub uncertainty_magnitude_state: f64,
    /// Every entry of `G_1`, `G_2`.
    pub uncertainty_magnitude_input: f64,
    pub u_max: Vec<f64>,
    pub eps: Vec<f64>,
}

impl Default for AhfvConfig {
    fn default() -> Self {
        Self { uncertainty_magnitude_state: 0.01, uncertainty_magnitude_input: 0.005, u_max: vec![1.0, 1.0], eps: vec![0.5, 0.5] }
    }
}

impl AhfvConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("uncertainty_magnitude_state", self.uncertainty_magnitude_state), ("uncertainty_magnitude_input", self.uncertainty_magnitude_input)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} = {v} must be nonnegative")));
            }
        }
        if self.u_max.len() != INPUTS || self.eps.len() != INPUTS {
            return Err(Error::DimensionMismatch(format!("u_max and eps need {INPUTS} entries")));
        }
        self.saturation().map(|_| ())
    }

    pub fn saturation(&self) -> Result<SaturationSpec> {
        SaturationSpec::new(self.u_max.clone(), self.eps.clone())
    }
}

pub fn chain_matrices() -> (DMatrix<f64>, DMatrix<f64>) {
    let mut a = DMatrix::zeros(STATES, STATES);
    for i in (0..3).chain(4..8) {
        a[(i, i + 1)] = 1.0;
    }
    let mut b = DMatrix::zeros(STATES, INPUTS);
    for (col, &row) in CHAIN_TAILS.iter().enumerate() {
        b[(row, col)] = 1.0;
    }
    (a, b)
}

pub fn build_ahfv(cfg: &AhfvConfig) -> Result<UncertainPlant> {
    cfg.validate()?;
    let (a, b) = chain_matrices();
    let mut plant = UncertainPlant::certain(a, b);
    for &row in &CHAIN_TAILS {
        let mut c = DMatrix::zeros(STATES, PARAMETERS);
        c.row_mut(row).fill(1.0);
        let k = DMatrix::from_element(PARAMETERS, STATES, cfg.uncertainty_magnitude_state);
        let g = DMatrix::from_element(PARAMETERS, INPUTS, cfg.uncertainty_magnitude_input);
        plant = plant.with_channel(UncertaintyChannel::new(c, k, g));
    }
    plant.validate().into_result()?;
    Ok(plant)
}

/// Published stage-2 weights `Q = 1000·I₉`, `R = diag(3, 8)` and the
/// reported multiplier.
pub fn published_weights() -> (AwWeights, f64) {
    let q = DMatrix::identity(STATES, STATES) * 1000.0;
    let r = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 8.0]));
    (AwWeights { q, r }, PUBLISHED_TAU)
}
