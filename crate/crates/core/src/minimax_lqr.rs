//! Stage 1: minimax LQR state feedback for the uncertain plant.
//!
//! For multipliers `τ_j > 0` the scaled matrices
//!
//! ```text
//! K = [Q^½; 0; √τ₁K₁; …; √τ_lK_l]   G = [0; R^½; √τ₁G₁; …; √τ_lG_l]
//! E = GᵀG = R + Σ τ_j G_jᵀG_j       C = [τ₁^-½C₁ … τ_l^-½C_l]
//! ```
//!
//! enter the game-type Riccati equation
//!
//! ```text
//! (A − BE⁻¹GᵀK)ᵀX + X(A − BE⁻¹GᵀK) + X(CCᵀ − BE⁻¹Bᵀ)X + Kᵀ(I − GE⁻¹Gᵀ)K = 0
//! ```
//!
//! and the control law is `u = −E⁻¹(BᵀX + GᵀK)·x`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{UncertainPlant, Weights};
use crate::optim::{self, NelderMeadOptions};
use crate::riccati::{self, AreProblem, Definiteness};

/// Scaling multipliers `τ₁ … τ_l`, all strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct TauVector(Vec<f64>);

impl TauVector {
    pub fn new(taus: Vec<f64>) -> Result<Self> {
        if let Some((i, t)) = taus.iter().enumerate().find(|(_, t)| !(**t > 0.0 && t.is_finite())) {
            return Err(Error::InvalidInput(format!("tau_{} = {t} must be positive", i + 1)));
        }
        Ok(Self(taus))
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// The stacked matrices `K`, `G`, `E`, `C` for one multiplier vector.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedMatrices {
    pub k: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

pub fn build_scaled_matrices(plant: &UncertainPlant, weights: &Weights, taus: &TauVector) -> Result<StackedMatrices> {
    let (n, m) = (plant.states(), plant.inputs());
    weights.check_dims(plant)?;
    if taus.len() != plant.num_channels() {
        return Err(Error::DimensionMismatch(format!(
            "{} multipliers for {} uncertainty channels",
            taus.len(),
            plant.num_channels()
        )));
    }
    plant.validate().into_result().map_err(|e| Error::DimensionMismatch(e.to_string()))?;

    let q_half = linalg::sym_sqrt(&weights.q);
    let r_half = linalg::sym_sqrt(&weights.r);
    let zero_km = DMatrix::zeros(m, n);
    let zero_gn = DMatrix::zeros(n, m);

    let scaled_k: Vec<DMatrix<f64>> =
        plant.channels.iter().zip(taus.as_slice()).map(|(ch, t)| &ch.k * t.sqrt()).collect();
    let scaled_g: Vec<DMatrix<f64>> =
        plant.channels.iter().zip(taus.as_slice()).map(|(ch, t)| &ch.g * t.sqrt()).collect();
    let scaled_c: Vec<DMatrix<f64>> =
        plant.channels.iter().zip(taus.as_slice()).map(|(ch, t)| &ch.c / t.sqrt()).collect();

    let mut kb: Vec<&DMatrix<f64>> = vec![&q_half, &zero_km];
    kb.extend(scaled_k.iter());
    let mut gb: Vec<&DMatrix<f64>> = vec![&zero_gn, &r_half];
    gb.extend(scaled_g.iter());
    let cb: Vec<&DMatrix<f64>> = scaled_c.iter().collect();

    let k = linalg::vstack(&kb, n)?;
    let g = linalg::vstack(&gb, m)?;
    let c = linalg::hstack(&cb, n)?;

    // E = GᵀG = R + Σ τ_j G_jᵀG_j (the m×m form that makes E⁻¹ well defined)
    let mut e = weights.r.clone();
    for (ch, t) in plant.channels.iter().zip(taus.as_slice()) {
        e += ch.g.transpose() * &ch.g * *t;
    }
    Ok(StackedMatrices { k, g, e: linalg::symmetrize(&e), c })
}

/// How the initial condition enters the cost bound.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    /// Known `x(0) ≠ 0`: bound `x0ᵀX x0 + Σ τ_j x0ᵀd_j x0`.
    Known(DVector<f64>),
    /// Zero-mean unit-covariance `x(0)`: bound `tr(X + Σ τ_j d_j)`.
    Random,
}

#[derive(Debug, Clone)]
pub struct MinimaxLqrSolution {
    pub x_tau: DMatrix<f64>,
    /// State-feedback gain `G_τ` (m × n); the control is `u = −gain·x`.
    pub gain: DMatrix<f64>,
    pub taus: TauVector,
    pub cost_bound: f64,
    pub stacked: StackedMatrices,
    pub residual_norm: f64,
    /// Eigenvalues of `A − B·gain`.
    pub closed_loop_eigs: Vec<num_complex::Complex64>,
}

/// The Riccati problem solved for given multipliers.
pub fn game_riccati_problem(plant: &UncertainPlant, stacked: &StackedMatrices) -> Result<AreProblem> {
    let e_inv = linalg::inverse(&stacked.e, "E")?;
    let gtk = stacked.g.transpose() * &stacked.k;
    let a = &plant.a - &plant.b * &e_inv * &gtk;
    let m = &stacked.c * stacked.c.transpose() - &plant.b * &e_inv * plant.b.transpose();
    let n = stacked.k.transpose() * &stacked.k - gtk.transpose() * &e_inv * &gtk;
    AreProblem::new(a, m, n)
}

/// Solves the game Riccati equation and forms the gain. The cost bound uses
/// the random-initial-condition (trace) convention.
pub fn solve_minimax_lqr(plant: &UncertainPlant, weights: &Weights, taus: &TauVector) -> Result<MinimaxLqrSolution> {
    solve_minimax_lqr_with(plant, weights, taus, &InitialCondition::Random)
}

pub fn solve_minimax_lqr_with(
    plant: &UncertainPlant,
    weights: &Weights,
    taus: &TauVector,
    x0: &InitialCondition,
) -> Result<MinimaxLqrSolution> {
    let stacked = build_scaled_matrices(plant, weights, taus)?;
    let problem = game_riccati_problem(plant, &stacked)?;
    let are = riccati::solve_are(&problem)?;
    if are.definiteness == Definiteness::Indefinite {
        return Err(Error::NotPositiveDefinite { min_eig: linalg::min_sym_eigenvalue(&are.x) });
    }
    let e_inv = linalg::inverse(&stacked.e, "E")?;
    let gain = &e_inv * (plant.b.transpose() * &are.x + stacked.g.transpose() * &stacked.k);
    let closed = &plant.a - &plant.b * &gain;
    let closed_loop_eigs = linalg::eigenvalues(&closed)?;
    if closed_loop_eigs.iter().any(|l| l.re >= 0.0) {
        return Err(Error::NoStabilizingSolution("A − B·G_τ is not Hurwitz".into()));
    }
    let cost_bound = cost_bound_of(&are.x, plant, taus, x0)?;
    Ok(MinimaxLqrSolution {
        x_tau: are.x,
        gain,
        taus: taus.clone(),
        cost_bound,
        stacked,
        residual_norm: are.residual_norm,
        closed_loop_eigs,
    })
}

fn cost_bound_of(x: &DMatrix<f64>, plant: &UncertainPlant, taus: &TauVector, x0: &InitialCondition) -> Result<f64> {
    let mut total = x.clone();
    for (ch, t) in plant.channels.iter().zip(taus.as_slice()) {
        total += &ch.d * *t;
    }
    match x0 {
        InitialCondition::Random => Ok(total.trace()),
        InitialCondition::Known(v) => {
            if v.len() != x.nrows() {
                return Err(Error::DimensionMismatch(format!("x0 has {} entries, expected {}", v.len(), x.nrows())));
            }
            if v.iter().all(|c| *c == 0.0) {
                return Err(Error::ZeroInitialState);
            }
            Ok((v.transpose() * total * v)[(0, 0)])
        }
    }
}

/// Guaranteed cost bound of a solution under the given initial-condition
/// convention.
pub fn lqr_cost_bound(sol: &MinimaxLqrSolution, plant: &UncertainPlant, x0: &InitialCondition) -> Result<f64> {
    cost_bound_of(&sol.x_tau, plant, &sol.taus, x0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauSearchConfig {
    pub grid_min: f64,
    pub grid_max: f64,
    pub points_per_dim: usize,
    /// Number of best grid points used as Nelder–Mead starts.
    pub starts: usize,
    pub max_iter: usize,
}

impl Default for TauSearchConfig {
    fn default() -> Self {
        Self { grid_min: 1e-2, grid_max: 1e3, points_per_dim: 5, starts: 3, max_iter: 300 }
    }
}

#[derive(Debug, Clone)]
pub struct TauSearchOutcome {
    pub best: MinimaxLqrSolution,
    /// Every evaluated multiplier vector with its bound (`None` = infeasible).
    pub history: Vec<(Vec<f64>, Option<f64>)>,
}

/// Minimizes the cost bound over the multipliers: a log-spaced grid gives the
/// starts, Nelder–Mead in `log τ` refines them.
pub fn optimize_taus(
    plant: &UncertainPlant,
    weights: &Weights,
    x0: &InitialCondition,
    cfg: &TauSearchConfig,
) -> Result<TauSearchOutcome> {
    let l = plant.num_channels();
    if l == 0 {
        return Err(Error::InvalidInput("multiplier search needs at least one uncertainty channel".into()));
    }
    if !(cfg.grid_min > 0.0 && cfg.grid_max >= cfg.grid_min && cfg.points_per_dim >= 1) {
        return Err(Error::InvalidInput("multiplier grid must be positive and non-empty".into()));
    }
    let mut history: Vec<(Vec<f64>, Option<f64>)> = Vec::new();
    let mut best: Option<MinimaxLqrSolution> = None;

    let evaluate = |log_tau: &[f64], history: &mut Vec<(Vec<f64>, Option<f64>)>, best: &mut Option<MinimaxLqrSolution>| -> f64 {
        let taus: Vec<f64> = log_tau.iter().map(|v| v.exp()).collect();
        let bound = TauVector::new(taus.clone())
            .and_then(|t| solve_minimax_lqr_with(plant, weights, &t, x0))
            .ok()
            .filter(|s| s.cost_bound.is_finite());
        let value = bound.as_ref().map(|s| s.cost_bound);
        history.push((taus, value));
        if let Some(sol) = bound {
            if best.as_ref().map_or(true, |b| sol.cost_bound < b.cost_bound) {
                *best = Some(sol);
            }
        }
        value.unwrap_or(f64::INFINITY)
    };

    let axis = log_grid(cfg.grid_min, cfg.grid_max, cfg.points_per_dim);
    let total = cfg.points_per_dim.pow(l as u32);
    let mut seeds: Vec<(Vec<f64>, f64)> = Vec::with_capacity(total);
    for idx in 0..total {
        let mut rem = idx;
        let point: Vec<f64> = (0..l)
            .map(|_| {
                let v = axis[rem % cfg.points_per_dim].ln();
                rem /= cfg.points_per_dim;
                v
            })
            .collect();
        let v = evaluate(&point, &mut history, &mut best);
        seeds.push((point, v));
    }
    seeds.retain(|(_, v)| v.is_finite());
    seeds.sort_by(|a, b| a.1.total_cmp(&b.1));

    let nm = NelderMeadOptions { initial_step: 0.5, max_iter: cfg.max_iter, tol: 1e-10 };
    for (start, _) in seeds.iter().take(cfg.starts.max(1)) {
        optim::nelder_mead(|p| evaluate(p, &mut history, &mut best), start, nm);
    }

    match best {
        Some(best) => Ok(TauSearchOutcome { best, history }),
        None => Err(Error::NoFeasibleTau { evaluated: history.len() }),
    }
}

/// `points` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    let mut g: Vec<f64> = (0..points).map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp()).collect();
    g[0] = lo;
    g[points - 1] = hi;
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::UncertaintyChannel;
    use nalgebra::dmatrix;

    #[test]
    fn certain_scalar_blocks() {
        let p = UncertainPlant::certain(dmatrix![0.0], dmatrix![1.0]);
        let s = build_scaled_matrices(&p, &Weights::identity(1, 1), &TauVector::empty()).unwrap();
        assert_eq!(s.k, dmatrix![1.0; 0.0]);
        assert_eq!(s.g, dmatrix![0.0; 1.0]);
        assert_eq!(s.e, dmatrix![1.0]);
        assert_eq!(s.c.shape(), (1, 0));
    }

    #[test]
    fn multiplier_scaling_of_blocks() {
        let ch = UncertaintyChannel::new(dmatrix![0.6], dmatrix![0.3], dmatrix![0.2]);
        let p = UncertainPlant::certain(dmatrix![0.0], dmatrix![1.0]).with_channel(ch);
        let s = build_scaled_matrices(&p, &Weights::identity(1, 1), &TauVector::new(vec![4.0]).unwrap()).unwrap();
        assert_eq!(s.k[(2, 0)], 0.6);
        assert_eq!(s.g[(2, 0)], 0.4);
        assert_eq!(s.c, dmatrix![0.3]);
        assert!((s.e[(0, 0)] - (1.0 + 4.0 * 0.04)).abs() < 1e-15);
    }

    #[test]
    fn scalar_lqr() {
        let p = UncertainPlant::certain(dmatrix![0.0], dmatrix![1.0]);
        let s = solve_minimax_lqr(&p, &Weights::identity(1, 1), &TauVector::empty()).unwrap();
        assert!((s.x_tau[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((s.gain[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stable_plant_without_state_weight_needs_no_control() {
        let p = UncertainPlant::certain(dmatrix![-2.0], dmatrix![1.0]);
        let w = Weights { q: dmatrix![0.0], r: dmatrix![1.0] };
        let s = solve_minimax_lqr(&p, &w, &TauVector::empty()).unwrap();
        assert!(s.x_tau.norm() < 1e-12 && s.gain.norm() < 1e-12);
    }

    #[test]
    fn cost_bound_conventions() {
        let p = UncertainPlant::certain(DMatrix::zeros(2, 2), dmatrix![0.0; 1.0]);
        let mut sol = solve_minimax_lqr(&UncertainPlant::certain(dmatrix![0.0], dmatrix![1.0]), &Weights::identity(1, 1), &TauVector::empty()).unwrap();
        sol.x_tau = DMatrix::identity(2, 2);
        let known = InitialCondition::Known(DVector::from_vec(vec![1.0, 0.0]));
        assert_eq!(lqr_cost_bound(&sol, &p, &known).unwrap(), 1.0);
        assert!(matches!(
            lqr_cost_bound(&sol, &p, &InitialCondition::Known(DVector::zeros(2))),
            Err(Error::ZeroInitialState)
        ));

        let ch = UncertaintyChannel::new(DMatrix::zeros(2, 1), DMatrix::zeros(1, 2), DMatrix::zeros(1, 1))
            .with_offset(DMatrix::identity(2, 2));
        let p1 = p.clone().with_channel(ch);
        sol.taus = TauVector::new(vec![2.0]).unwrap();
        assert_eq!(lqr_cost_bound(&sol, &p1, &InitialCondition::Random).unwrap(), 6.0);

        let ch = UncertaintyChannel::new(dmatrix![0.0], dmatrix![0.0], dmatrix![0.0]).with_offset(dmatrix![0.5]);
        let ps = UncertainPlant::certain(dmatrix![0.0], dmatrix![1.0]).with_channel(ch);
        sol.x_tau = dmatrix![1.0];
        sol.taus = TauVector::new(vec![3.0]).unwrap();
        let b = lqr_cost_bound(&sol, &ps, &InitialCondition::Known(DVector::from_vec(vec![2.0]))).unwrap();
        assert_eq!(b, 10.0);
    }

    #[test]
    fn rejects_nonpositive_tau() {
        assert!(TauVector::new(vec![1.0, 0.0]).is_err());
        assert!(TauVector::new(vec![-1.0]).is_err());
    }
}
