//! Uncertain plant, weights and saturation description.
//!
//! The plant is `ẋ = A·x + B·u + Σ C_j·ζ_j`, `z_j = K_j·x + G_j·u`,
//! `y = C̄₂·x + D₂·u`, where each uncertainty pair `(z_j, ζ_j)` obeys an
//! integral quadratic constraint with offset matrix `d_j ≻ 0`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Relative tolerance of the symmetry check on weights and IQC offsets.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Offset used for `d_j` when the caller does not provide one.
pub const DEFAULT_IQC_OFFSET: f64 = 1e-2;

/// One structured uncertainty channel `(C_j, K_j, G_j, d_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyChannel {
    /// n × n_ζ map of the uncertainty input into the state derivative.
    pub c: DMatrix<f64>,
    /// n_q × n state part of the uncertainty output.
    pub k: DMatrix<f64>,
    /// n_q × m input part of the uncertainty output.
    pub g: DMatrix<f64>,
    /// n × n IQC offset.
    pub d: DMatrix<f64>,
}

impl UncertaintyChannel {
    /// Channel with the default IQC offset `d = 10⁻²·I`.
    pub fn new(c: DMatrix<f64>, k: DMatrix<f64>, g: DMatrix<f64>) -> Self {
        let n = c.nrows();
        Self { c, k, g, d: DMatrix::identity(n, n) * DEFAULT_IQC_OFFSET }
    }

    pub fn with_offset(mut self, d: DMatrix<f64>) -> Self {
        self.d = d;
        self
    }

    pub fn output_dim(&self) -> usize {
        self.k.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.c.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UncertainPlant {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub channels: Vec<UncertaintyChannel>,
    /// Measurement map. Kept for completeness; neither synthesis stage reads it.
    pub c2bar: DMatrix<f64>,
    pub d2: DMatrix<f64>,
}

impl UncertainPlant {
    /// Certain plant (no uncertainty channels) with full-state measurement.
    pub fn certain(a: DMatrix<f64>, b: DMatrix<f64>) -> Self {
        let (n, m) = (a.nrows(), b.ncols());
        Self { a, b, channels: Vec::new(), c2bar: DMatrix::identity(n, n), d2: DMatrix::zeros(n, m) }
    }

    pub fn with_channel(mut self, ch: UncertaintyChannel) -> Self {
        self.channels.push(ch);
        self
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    /// Number of uncertainty channels `l`.
    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    /// `Σ_j rows(K_j)`.
    pub fn uncertainty_output_dim(&self) -> usize {
        self.channels.iter().map(|c| c.output_dim()).sum()
    }

    /// `Σ_j cols(C_j)`.
    pub fn uncertainty_input_dim(&self) -> usize {
        self.channels.iter().map(|c| c.input_dim()).sum()
    }

    /// Lists every violated invariant; an empty report means the plant is valid.
    pub fn validate(&self) -> ValidationReport {
        validate_plant(self)
    }

    /// Same uncertainty class written with channel `j` rescaled as
    /// `(C_j/s_j, s_j·K_j, s_j·G_j)`: `‖ζ_j‖ ≤ ‖z_j‖` is invariant under it.
    /// The rescaled signals are `s_j·ζ_j`, `s_j·z_j`, so `d_j` becomes `s_j²·d_j`.
    pub fn rescaled_channels(&self, scales: &[f64]) -> Result<Self> {
        if scales.len() != self.channels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} channel scales for {} channels",
                scales.len(),
                self.channels.len()
            )));
        }
        if let Some(s) = scales.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidInput(format!("channel scale {s} must be positive")));
        }
        let mut out = self.clone();
        for (ch, &s) in out.channels.iter_mut().zip(scales) {
            ch.c /= s;
            ch.k *= s;
            ch.g *= s;
            ch.d *= s * s;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidInput(self.violations.join("; ")))
        }
    }
}

pub fn validate_plant(plant: &UncertainPlant) -> ValidationReport {
    let mut v = Vec::new();
    let n = plant.a.nrows();
    if plant.a.ncols() != n {
        v.push(format!("A is {}x{}, not square", plant.a.nrows(), plant.a.ncols()));
    }
    if plant.b.nrows() != n {
        v.push(format!("B has {} rows, A has {n}", plant.b.nrows()));
    }
    let m = plant.b.ncols();
    if plant.c2bar.ncols() != n {
        v.push(format!("C2bar has {} columns, expected {n}", plant.c2bar.ncols()));
    }
    if plant.d2.nrows() != plant.c2bar.nrows() || plant.d2.ncols() != m {
        v.push(format!(
            "D2 is {}x{}, expected {}x{m}",
            plant.d2.nrows(),
            plant.d2.ncols(),
            plant.c2bar.nrows()
        ));
    }
    let all = plant.a.iter().chain(plant.b.iter());
    if all.into_iter().any(|x| !x.is_finite()) {
        v.push("A or B has a non-finite entry".into());
    }
    for (idx, ch) in plant.channels.iter().enumerate() {
        let j = idx + 1;
        if ch.c.nrows() != n {
            v.push(format!("C_{j} has {} rows, expected {n}", ch.c.nrows()));
        }
        if ch.k.ncols() != n {
            v.push(format!("K_{j} has {} columns, expected {n}", ch.k.ncols()));
        }
        if ch.g.ncols() != m {
            v.push(format!("G_{j} has {} columns, expected {m}", ch.g.ncols()));
        }
        if ch.k.nrows() != ch.g.nrows() {
            v.push(format!("K_{j} has {} rows but G_{j} has {}", ch.k.nrows(), ch.g.nrows()));
        }
        if ch.d.shape() != (n, n) {
            v.push(format!("d_{j} is {}x{}, expected {n}x{n}", ch.d.nrows(), ch.d.ncols()));
        } else if !linalg::is_symmetric(&ch.d, SYMMETRY_TOL) {
            v.push(format!("d_{j} not symmetric"));
        } else if linalg::min_sym_eigenvalue(&ch.d) <= 0.0 {
            v.push(format!("d_{j} not positive definite"));
        }
    }
    ValidationReport { violations: v }
}

/// Symmetric positive definite state and control weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl Weights {
    /// Checks symmetry and definiteness, then symmetrizes both matrices.
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        for (name, m) in [("Q", &q), ("R", &r)] {
            if !m.is_square() {
                return Err(Error::DimensionMismatch(format!("{name} is not square")));
            }
            if !linalg::is_symmetric(m, SYMMETRY_TOL) {
                return Err(Error::NotSymmetric(format!("{name} is not symmetric")));
            }
            let min = linalg::min_sym_eigenvalue(m);
            if min.is_finite() && min <= 0.0 {
                return Err(Error::NotPositiveDefinite { min_eig: min });
            }
        }
        Ok(Self { q: linalg::symmetrize(&q), r: linalg::symmetrize(&r) })
    }

    pub fn identity(n: usize, m: usize) -> Self {
        Self { q: DMatrix::identity(n, n), r: DMatrix::identity(m, m) }
    }

    pub fn check_dims(&self, plant: &UncertainPlant) -> Result<()> {
        let (n, m) = (plant.states(), plant.inputs());
        if self.q.nrows() != n || self.r.nrows() != m {
            return Err(Error::DimensionMismatch(format!(
                "weights are Q {}x{}, R {}x{}; plant has n = {n}, m = {m}",
                self.q.nrows(),
                self.q.ncols(),
                self.r.nrows(),
                self.r.ncols()
            )));
        }
        Ok(())
    }
}

/// Symmetric per-channel saturation limits and sector parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationSpec {
    pub u_max: Vec<f64>,
    pub eps: Vec<f64>,
}

impl SaturationSpec {
    /// Validates `u_max > 0` and `0 < eps < 1` channel by channel.
    pub fn new(u_max: Vec<f64>, eps: Vec<f64>) -> Result<Self> {
        let s = Self { u_max, eps };
        s.validate()?;
        Ok(s)
    }

    /// Uses the default sector parameter 0.5 on every channel.
    pub fn with_default_eps(u_max: Vec<f64>) -> Result<Self> {
        let eps = vec![0.5; u_max.len()];
        Self::new(u_max, eps)
    }

    pub fn channels(&self) -> usize {
        self.u_max.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.u_max.len() != self.eps.len() {
            return Err(Error::DimensionMismatch(format!(
                "saturation has {} limits but {} sector parameters",
                self.u_max.len(),
                self.eps.len()
            )));
        }
        for (i, &u) in self.u_max.iter().enumerate() {
            if !(u > 0.0 && u.is_finite()) {
                return Err(Error::InvalidSaturation { channel: i, u_max: u });
            }
        }
        for (i, &e) in self.eps.iter().enumerate() {
            // eps = 1 would put the domain bound u_max/(1 - eps) at infinity
            if !(e > 0.0 && e < 1.0) {
                return Err(Error::EpsOutOfRange { channel: i, eps: e });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn minimal_certain_plant_is_valid() {
        let p = UncertainPlant::certain(dmatrix![0.0], dmatrix![1.0]);
        assert!(validate_plant(&p).is_valid());
    }

    #[test]
    fn channel_rescaling() {
        let p = UncertainPlant::certain(dmatrix![0.0], dmatrix![1.0])
            .with_channel(UncertaintyChannel::new(dmatrix![2.0], dmatrix![1.0], dmatrix![0.5]));
        let s = p.rescaled_channels(&[2.0]).unwrap();
        assert_eq!(s.channels[0].c[(0, 0)], 1.0);
        assert_eq!(s.channels[0].k[(0, 0)], 2.0);
        assert_eq!(s.channels[0].g[(0, 0)], 1.0);
        assert_eq!(s.channels[0].d[(0, 0)], 0.04);
        assert!(p.rescaled_channels(&[]).is_err());
        assert!(p.rescaled_channels(&[0.0]).is_err());
    }

    #[test]
    fn negative_offset_is_reported() {
        let ch = UncertaintyChannel::new(dmatrix![1.0], dmatrix![0.1], dmatrix![0.0]).with_offset(dmatrix![-1.0]);
        let p = UncertainPlant::certain(dmatrix![0.0], dmatrix![1.0]).with_channel(ch);
        let rep = validate_plant(&p);
        assert!(rep.violations.iter().any(|s| s == "d_1 not positive definite"), "{rep:?}");
    }

    #[test]
    fn dimension_errors_are_reported() {
        let ch = UncertaintyChannel::new(dmatrix![1.0; 0.0], dmatrix![0.1, 0.0, 0.0], dmatrix![0.0, 1.0]);
        let p = UncertainPlant::certain(DMatrix::zeros(2, 2), dmatrix![1.0; 0.0]).with_channel(ch);
        let rep = validate_plant(&p);
        assert!(rep.violations.iter().any(|s| s.starts_with("K_1 has 3 columns")));
        assert!(rep.violations.iter().any(|s| s.starts_with("G_1 has 2 columns")));
    }

    #[test]
    fn validation_is_idempotent() {
        let ch = UncertaintyChannel::new(dmatrix![1.0], dmatrix![0.1], dmatrix![0.0]).with_offset(dmatrix![-1.0]);
        let p = UncertainPlant::certain(dmatrix![0.0], dmatrix![1.0]).with_channel(ch);
        let before = p.clone();
        assert_eq!(validate_plant(&p), validate_plant(&p));
        assert_eq!(p, before);
    }

    #[test]
    fn eps_range_is_strict() {
        assert!(matches!(SaturationSpec::new(vec![1.0], vec![1.0]), Err(Error::EpsOutOfRange { channel: 0, .. })));
        assert!(matches!(SaturationSpec::new(vec![1.0], vec![0.0]), Err(Error::EpsOutOfRange { .. })));
        assert!(matches!(SaturationSpec::new(vec![0.0], vec![0.5]), Err(Error::InvalidSaturation { .. })));
        assert!(SaturationSpec::new(vec![1.0, 2.0], vec![0.5, 0.99]).is_ok());
    }

    #[test]
    fn weights_reject_asymmetric_and_indefinite() {
        assert!(matches!(Weights::new(dmatrix![1.0, 0.1; 0.0, 1.0], dmatrix![1.0]), Err(Error::NotSymmetric(_))));
        assert!(matches!(Weights::new(dmatrix![1.0, 0.0; 0.0, -1.0], dmatrix![1.0]), Err(Error::NotPositiveDefinite { .. })));
        let w = Weights::new(dmatrix![2.0, 1e-14; 0.0, 1.0], dmatrix![1.0]).unwrap();
        assert_eq!(w.q[(0, 1)], w.q[(1, 0)]);
    }
}
