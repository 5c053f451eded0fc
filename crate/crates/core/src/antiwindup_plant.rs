//! Saturation as sector-bounded uncertainty, and the augmented plant used
//! for antiwindup synthesis.
//!
//! With deadzone `φ(u) = u − sat(u)` and the recentered signal
//! `ŵ(u) = φ(u) − 𝔈u/2`, the saturated plant reads
//!
//! ```text
//! ẋ = A·x + B̄·u + Σ C_j·ζ_j − B·ŵ,   B̄ = B(I − 𝔈/2)
//! ```
//!
//! and `|ŵ_i| ≤ ε_i·|u_i|/2` holds on the domain `|u_i| ≤ ū_i = u_max,i/(1 − ε_i)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::minimax_lqr::MinimaxLqrSolution;
use crate::model::{SaturationSpec, UncertainPlant};

/// Deadzone `φ_i(u_i)`: zero inside the limits, `sgn(u_i)(|u_i| − u_max,i)` outside.
pub fn deadzone(u: &[f64], sat: &SaturationSpec) -> Vec<f64> {
    u.iter()
        .zip(&sat.u_max)
        .map(|(&ui, &lim)| if ui.abs() <= lim { 0.0 } else { ui - ui.signum() * lim })
        .collect()
}

/// Componentwise clamp to `[−u_max,i, u_max,i]`.
pub fn saturate(u: &[f64], sat: &SaturationSpec) -> Vec<f64> {
    u.iter().zip(&sat.u_max).map(|(&ui, &lim)| ui.clamp(-lim, lim)).collect()
}

/// `ŵ(u) = φ(u) − 𝔈u/2`.
pub fn recentered_uncertainty(u: &[f64], sat: &SaturationSpec) -> Vec<f64> {
    deadzone(u, sat)
        .into_iter()
        .zip(u.iter().zip(&sat.eps))
        .map(|(phi, (&ui, &e))| phi - 0.5 * e * ui)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SectorModel {
    /// `𝔈 = diag(ε_1, …, ε_m)`
    pub eps_matrix: DMatrix<f64>,
    /// `B̄ = B(I − 𝔈/2)`
    pub b_bar: DMatrix<f64>,
    /// `Ḡ = diag(ε_i/2)`
    pub g_bar: DMatrix<f64>,
    /// `ū_i = u_max,i/(1 − ε_i)`
    pub u_bar: Vec<f64>,
}

pub fn build_sector_model(b: &DMatrix<f64>, sat: &SaturationSpec) -> Result<SectorModel> {
    sat.validate()?;
    let m = b.ncols();
    if sat.channels() != m {
        return Err(Error::DimensionMismatch(format!("saturation has {} channels, plant has {m} inputs", sat.channels())));
    }
    let eps = DVector::from_vec(sat.eps.clone());
    let eps_matrix = DMatrix::from_diagonal(&eps);
    let g_bar = DMatrix::from_diagonal(&(&eps * 0.5));
    let b_bar = b * (DMatrix::identity(m, m) - &g_bar);
    let u_bar = sat.u_max.iter().zip(&sat.eps).map(|(u, e)| certified_bound(*u, *e)).collect();
    Ok(SectorModel { eps_matrix, b_bar, g_bar, u_bar })
}

/// `u_max/(1 − ε)` rounded toward zero: the largest double `ū` with
/// `ū(1 − ε) ≤ u_max` in exact arithmetic. Rounding inward keeps the sector
/// inequalities true in floating point on all of `[−ū, ū]`.
pub fn certified_bound(u_max: f64, eps: f64) -> f64 {
    let mut u_bar = u_max / (1.0 - eps);
    // sign of ū(1 − ε) − u_max, computed with one rounding
    let excess = |ub: f64| {
        if eps >= 0.5 {
            ub.mul_add(1.0 - eps, -u_max)
        } else {
            (-eps).mul_add(ub, ub - u_max)
        }
    };
    while excess(u_bar) > 0.0 {
        u_bar = u_bar.next_down();
    }
    u_bar
}

impl SectorModel {
    /// True when some `|u_i|` leaves the certified domain `[−ū_i, ū_i]`.
    pub fn outside_domain(&self, u: &[f64]) -> bool {
        u.iter().zip(&self.u_bar).any(|(ui, ub)| ui.abs() > *ub)
    }
}

/// `K̃ = [K_1; …; K_l; 0]`, `G̃ = [G_1; …; G_l; Ḡ]`.
pub fn stack_uncertainty_outputs(plant: &UncertainPlant, sector: &SectorModel) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (n, m) = (plant.states(), plant.inputs());
    if sector.g_bar.shape() != (m, m) {
        return Err(Error::DimensionMismatch("sector scaling does not match the plant input count".into()));
    }
    let zero = DMatrix::zeros(m, n);
    let mut kb: Vec<&DMatrix<f64>> = plant.channels.iter().map(|c| &c.k).collect();
    kb.push(&zero);
    let mut gb: Vec<&DMatrix<f64>> = plant.channels.iter().map(|c| &c.g).collect();
    gb.push(&sector.g_bar);
    Ok((linalg::vstack(&kb, n)?, linalg::vstack(&gb, m)?))
}

/// The augmented synthesis plant
///
/// ```text
/// ẋ = Ā·x + B₁·v + B̃₂·ζ        ζ = [ζ_1; …; ζ_l; ŵ]
/// z̃ = C̃₁·x + D̃₁·v
/// ỹ = C̃₂·x + D̃₂·ζ  (= ŵ)
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct AwSynthesisPlant {
    pub a_bar: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    pub b2_tilde: DMatrix<f64>,
    pub c1_tilde: DMatrix<f64>,
    pub d1_tilde: DMatrix<f64>,
    pub c2_tilde: DMatrix<f64>,
    pub d2_tilde: DMatrix<f64>,
    pub sector: SectorModel,
}

impl AwSynthesisPlant {
    pub fn states(&self) -> usize {
        self.a_bar.nrows()
    }

    pub fn controls(&self) -> usize {
        self.b1.ncols()
    }

    /// Builds the plant directly from its blocks with `C̃₂ = 0`. Used for
    /// hand-made instances; no stage-1 data are needed.
    pub fn from_blocks(
        a_bar: DMatrix<f64>,
        b1: DMatrix<f64>,
        b2_tilde: DMatrix<f64>,
        c1_tilde: DMatrix<f64>,
        d1_tilde: DMatrix<f64>,
        d2_tilde: DMatrix<f64>,
        sector: SectorModel,
    ) -> Result<Self> {
        let n = a_bar.nrows();
        let m = b1.ncols();
        let ok = a_bar.is_square()
            && b1.nrows() == n
            && b2_tilde.nrows() == n
            && c1_tilde.ncols() == n
            && d1_tilde.nrows() == c1_tilde.nrows()
            && d1_tilde.ncols() == m
            && d2_tilde.ncols() == b2_tilde.ncols();
        if !ok {
            return Err(Error::DimensionMismatch("inconsistent augmented-plant blocks".into()));
        }
        let c2_tilde = DMatrix::zeros(d2_tilde.nrows(), n);
        Ok(Self { a_bar, b1, b2_tilde, c1_tilde, d1_tilde, c2_tilde, d2_tilde, sector })
    }
}

/// Assembles the augmented plant without checking that `Ā` is Hurwitz.
pub fn assemble_unchecked(
    plant: &UncertainPlant,
    sector: &SectorModel,
    lqr_gain: &DMatrix<f64>,
) -> Result<AwSynthesisPlant> {
    let (n, m) = (plant.states(), plant.inputs());
    if lqr_gain.shape() != (m, n) {
        return Err(Error::DimensionMismatch(format!(
            "stage-1 gain is {}x{}, expected {m}x{n}",
            lqr_gain.nrows(),
            lqr_gain.ncols()
        )));
    }
    if sector.b_bar.shape() != (n, m) {
        return Err(Error::DimensionMismatch("sector model does not match the plant".into()));
    }
    let (k_tilde, g_tilde) = stack_uncertainty_outputs(plant, sector)?;
    let a_bar = &plant.a - &sector.b_bar * lqr_gain;
    let b1 = sector.b_bar.clone();
    let minus_b = -&plant.b;
    let mut cols: Vec<&DMatrix<f64>> = plant.channels.iter().map(|c| &c.c).collect();
    cols.push(&minus_b);
    let b2_tilde = linalg::hstack(&cols, n)?;
    // u = −G·x + v  ⇒  z̃ = K̃x + G̃u = (K̃ − G̃G)x + G̃v
    let c1_tilde = &k_tilde - &g_tilde * lqr_gain;
    let d1_tilde = g_tilde;
    let nz = plant.uncertainty_input_dim();
    let mut d2_tilde = DMatrix::zeros(m, nz + m);
    d2_tilde.view_mut((0, nz), (m, m)).fill_with_identity();
    let c2_tilde = DMatrix::zeros(m, n);
    Ok(AwSynthesisPlant { a_bar, b1, b2_tilde, c1_tilde, d1_tilde, c2_tilde, d2_tilde, sector: sector.clone() })
}

/// Assembles the augmented plant and checks that the stage-1 gain
/// stabilizes the sector-scaled loop `A − B̄·G`.
pub fn assemble_closed_loop(plant: &UncertainPlant, sector: &SectorModel, lqr_gain: &DMatrix<f64>) -> Result<AwSynthesisPlant> {
    let aw = assemble_unchecked(plant, sector, lqr_gain)?;
    let abscissa = linalg::spectral_abscissa(&aw.a_bar)?;
    if !(abscissa < 0.0) {
        return Err(Error::NotStabilizing { abscissa });
    }
    Ok(aw)
}

/// Stage-2 plant for a stage-1 solution. Each channel is first rescaled by
/// `√τ_j` (see [`UncertainPlant::rescaled_channels`]); the uncertainty class
/// is unchanged, but the single stage-2 multiplier then starts from the
/// channel balance found in stage 1.
pub fn assemble_from_stage_one(plant: &UncertainPlant, sector: &SectorModel, stage_one: &MinimaxLqrSolution) -> Result<AwSynthesisPlant> {
    let scales: Vec<f64> = stage_one.taus.as_slice().iter().map(|t| t.sqrt()).collect();
    assemble_closed_loop(&plant.rescaled_channels(&scales)?, sector, &stage_one.gain)
}
