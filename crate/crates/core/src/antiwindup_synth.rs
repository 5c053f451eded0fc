//! Stage 2: minimax LQG synthesis of the antiwindup compensator
//!
//! ```text
//! ẋ_aw = A_aw·x_aw + B_aw·ŵ,    v = C_aw·x_aw
//! ```
//!
//! for the augmented plant of [`crate::antiwindup_plant`]. For a multiplier
//! `τ > 0` two Riccati equations are solved,
//!
//! ```text
//! ĀY + YĀᵀ + Y(τ⁻¹R_τ)Y + B̃₂(I − D̃₂ᵀΓ⁻¹D̃₂)B̃₂ᵀ = 0                       (filter)
//! X(Ā − B₁G_τ⁻¹Υᵀ) + (·)ᵀX − X(B₁G_τ⁻¹B₁ᵀ − τ⁻¹B̃₂B̃₂ᵀ)X + R_τ − ΥG_τ⁻¹Υᵀ = 0  (control)
//! ```
//!
//! with `R_τ = Q + τC̃₁ᵀC̃₁`, `G_τ = R + τD̃₁ᵀD̃₁`, `Υ = τC̃₁ᵀD̃₁`, `Γ = D̃₂D̃₂ᵀ`.
//! A multiplier is feasible when `Y ≻ 0`, `X ⪰ 0` and `ρ(YX) < τ`; among
//! feasible multipliers the cost bound `W_τ` is minimized.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::antiwindup_plant::AwSynthesisPlant;
use crate::error::{Error, Result, RiccatiStage};
use crate::linalg;
use crate::model::{Weights, SYMMETRY_TOL};
use crate::optim;
use crate::riccati::{self, AreProblem, Definiteness};

/// Residual contract shared by both stage-2 Riccati equations.
pub const RESIDUAL_TOL: f64 = 1e-8;

/// Stage-2 state and control weights.
#[derive(Debug, Clone, PartialEq)]
pub struct AwWeights {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl AwWeights {
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        let w = Weights::new(q, r)?;
        Ok(Self { q: w.q, r: w.r })
    }

    /// Weights-derived matrices at one multiplier.
    pub fn at_tau(&self, plant: &AwSynthesisPlant, tau: f64) -> Result<TauTerms> {
        let n = plant.states();
        let m = plant.controls();
        if self.q.shape() != (n, n) || self.r.shape() != (m, m) {
            return Err(Error::DimensionMismatch(format!(
                "stage-2 weights are Q {:?}, R {:?}; plant has n = {n}, m = {m}",
                self.q.shape(),
                self.r.shape()
            )));
        }
        let c1 = &plant.c1_tilde;
        let d1 = &plant.d1_tilde;
        let r_tau = linalg::symmetrize(&(&self.q + c1.transpose() * c1 * tau));
        let g_ctrl = linalg::symmetrize(&(&self.r + d1.transpose() * d1 * tau));
        let upsilon = c1.transpose() * d1 * tau;
        let gamma = linalg::symmetrize(&(&plant.d2_tilde * plant.d2_tilde.transpose()));
        Ok(TauTerms { tau, r_tau, g_ctrl, upsilon, gamma })
    }
}

impl From<Weights> for AwWeights {
    fn from(w: Weights) -> Self {
        Self { q: w.q, r: w.r }
    }
}

#[derive(Debug, Clone)]
pub struct TauTerms {
    pub tau: f64,
    /// `R_τ = Q + τ·C̃₁ᵀC̃₁`
    pub r_tau: DMatrix<f64>,
    /// `G_τ = R + τ·D̃₁ᵀD̃₁` (not to be confused with the stage-1 gain)
    pub g_ctrl: DMatrix<f64>,
    /// `Υ_τ = τ·C̃₁ᵀD̃₁`
    pub upsilon: DMatrix<f64>,
    /// `Γ = D̃₂D̃₂ᵀ`
    pub gamma: DMatrix<f64>,
}

impl TauTerms {
    /// `R_τ − Υ·G_τ⁻¹·Υᵀ`
    pub fn reduced_state_weight(&self) -> Result<DMatrix<f64>> {
        let g_inv = linalg::inverse(&self.g_ctrl, "G_tau")?;
        Ok(linalg::symmetrize(&(&self.r_tau - &self.upsilon * g_inv * self.upsilon.transpose())))
    }
}

/// How the filter solution `Y∞` was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterRoute {
    /// The stabilizing solution is already positive definite.
    Stabilizing,
    /// The stabilizing solution is singular; `Y∞ = P⁻¹` with `P` the
    /// stabilizing solution of `ĀᵀP + PĀ + P·N·P + τ⁻¹R_τ = 0`.
    InverseDual,
}

#[derive(Debug, Clone)]
pub struct Certificate {
    pub y_inf: DMatrix<f64>,
    pub x_inf: DMatrix<f64>,
    pub tau: f64,
    pub rho_yx: f64,
    pub w_tau: f64,
    pub filter_residual: f64,
    pub filter_bound: f64,
    pub control_residual: f64,
    pub control_bound: f64,
    pub filter_route: FilterRoute,
}

#[derive(Debug, Clone)]
pub struct AwCompensator {
    pub a_aw: DMatrix<f64>,
    pub b_aw: DMatrix<f64>,
    pub c_aw: DMatrix<f64>,
    pub certificate: Certificate,
}

impl AwCompensator {
    pub fn order(&self) -> usize {
        self.a_aw.nrows()
    }

    /// Design-point loop with `ŵ = 0`: `[[Ā, B₁C_aw], [0, A_aw]]`.
    pub fn design_point_matrix(&self, plant: &AwSynthesisPlant) -> DMatrix<f64> {
        let n = plant.states();
        let k = self.order();
        let mut m = DMatrix::zeros(n + k, n + k);
        m.view_mut((0, 0), (n, n)).copy_from(&plant.a_bar);
        m.view_mut((0, n), (n, k)).copy_from(&(&plant.b1 * &self.c_aw));
        m.view_mut((n, n), (k, k)).copy_from(&self.a_aw);
        m
    }
}

fn filter_problem(plant: &AwSynthesisPlant, terms: &TauTerms) -> Result<(AreProblem, DMatrix<f64>)> {
    let nz = plant.b2_tilde.ncols();
    let gamma_inv = linalg::inverse(&terms.gamma, "Gamma")?;
    let proj = DMatrix::identity(nz, nz) - plant.d2_tilde.transpose() * &gamma_inv * &plant.d2_tilde;
    let n_term = linalg::symmetrize(&(&plant.b2_tilde * proj * plant.b2_tilde.transpose()));
    let m_term = &terms.r_tau / terms.tau;
    Ok((AreProblem::new(plant.a_bar.transpose(), m_term, n_term.clone())?, n_term))
}

fn solve_filter(plant: &AwSynthesisPlant, terms: &TauTerms) -> Result<(DMatrix<f64>, f64, f64, FilterRoute)> {
    let infeasible = |reason: String| Error::RiccatiInfeasible { which: RiccatiStage::Filter, reason };
    let (problem, n_term) = filter_problem(plant, terms)?;
    let bound = RESIDUAL_TOL * (1.0 + n_term.norm());
    let stab = riccati::solve_are(&problem).map_err(|e| infeasible(e.to_string()))?;
    if stab.definiteness == Definiteness::PositiveDefinite {
        return Ok((stab.x, stab.residual_norm, bound, FilterRoute::Stabilizing));
    }
    if stab.definiteness == Definiteness::Indefinite {
        return Err(infeasible("stabilizing solution is indefinite".into()));
    }
    // Singular stabilizing solution: look for the positive definite one.
    let dual = AreProblem::new(plant.a_bar.clone(), n_term, problem.m.clone())?;
    let p = riccati::solve_are(&dual).map_err(|e| infeasible(format!("dual equation: {e}")))?;
    if p.definiteness != Definiteness::PositiveDefinite {
        return Err(infeasible("no positive definite solution".into()));
    }
    let y = linalg::symmetrize(&linalg::inverse(&p.x, "P")?);
    let res = problem.residual(&y).norm();
    if !(res <= bound) {
        return Err(infeasible(format!("residual {res:.3e} exceeds {bound:.3e}")));
    }
    Ok((y, res, bound, FilterRoute::InverseDual))
}

fn control_problem(plant: &AwSynthesisPlant, terms: &TauTerms) -> Result<AreProblem> {
    let g_inv = linalg::inverse(&terms.g_ctrl, "G_tau")?;
    let a = &plant.a_bar - &plant.b1 * &g_inv * terms.upsilon.transpose();
    let m = -(&plant.b1 * &g_inv * plant.b1.transpose() - &plant.b2_tilde * plant.b2_tilde.transpose() / terms.tau);
    AreProblem::new(a, m, terms.reduced_state_weight()?)
}

/// Compensator and certificate at one multiplier.
pub fn synthesize_at_tau(plant: &AwSynthesisPlant, weights: &AwWeights, tau: f64) -> Result<AwCompensator> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidInput(format!("tau = {tau} must be positive")));
    }
    let terms = weights.at_tau(plant, tau)?;
    let n = plant.states();

    let (y, filter_residual, filter_bound, filter_route) = solve_filter(plant, &terms)?;

    let cproblem = control_problem(plant, &terms)?;
    let control_bound = RESIDUAL_TOL * (1.0 + cproblem.n.norm());
    let ctrl = riccati::solve_are(&cproblem)
        .map_err(|e| Error::RiccatiInfeasible { which: RiccatiStage::Control, reason: e.to_string() })?;
    if ctrl.definiteness == Definiteness::Indefinite {
        return Err(Error::RiccatiInfeasible {
            which: RiccatiStage::Control,
            reason: "stabilizing solution is not nonnegative definite".into(),
        });
    }
    let x = ctrl.x;

    let yx = &y * &x;
    let rho = linalg::spectral_radius(&yx)?;
    if !(rho < tau) {
        return Err(Error::SpectralRadiusViolation { rho, tau });
    }
    let coupling = DMatrix::identity(n, n) - &yx / tau;
    let coupling_inv = linalg::inverse(&coupling, "I - YX/tau")?;

    let gamma_inv = linalg::inverse(&terms.gamma, "Gamma")?;
    let b2d2 = &plant.b2_tilde * plant.d2_tilde.transpose();
    let w_tau = (&b2d2 * &gamma_inv * b2d2.transpose() * &x * &coupling_inv).trace() + (&y * &terms.r_tau).trace();

    let g_inv = linalg::inverse(&terms.g_ctrl, "G_tau")?;
    let c_aw = -(&g_inv * (plant.b1.transpose() * &x + terms.upsilon.transpose()));
    let b_aw = &coupling_inv * &b2d2 * &gamma_inv;
    let a_aw = &plant.a_bar
        + &plant.b1 * &c_aw
        + (&plant.b2_tilde - &b_aw * &plant.d2_tilde) * plant.b2_tilde.transpose() * &x / tau;

    Ok(AwCompensator {
        a_aw,
        b_aw,
        c_aw,
        certificate: Certificate {
            y_inf: y,
            x_inf: x,
            tau,
            rho_yx: rho,
            w_tau,
            filter_residual,
            filter_bound,
            control_residual: ctrl.residual_norm,
            control_bound,
            filter_route,
        },
    })
}

/// One grid point of a multiplier sweep.
#[derive(Debug, Clone)]
pub struct TauPoint {
    pub tau: f64,
    pub w_tau: Option<f64>,
    pub failure: Option<String>,
}

impl TauPoint {
    pub fn feasible(&self) -> bool {
        self.w_tau.is_some()
    }
}

#[derive(Debug, Clone)]
pub struct TauSweepResult {
    pub points: Vec<TauPoint>,
    pub best: AwCompensator,
}

impl TauSweepResult {
    /// Indices of the feasible grid points.
    pub fn feasible_indices(&self) -> Vec<usize> {
        self.points.iter().enumerate().filter(|(_, p)| p.feasible()).map(|(i, _)| i).collect()
    }
}

fn evaluate(plant: &AwSynthesisPlant, weights: &AwWeights, tau: f64) -> TauPoint {
    match synthesize_at_tau(plant, weights, tau) {
        Ok(c) => TauPoint { tau, w_tau: Some(c.certificate.w_tau), failure: None },
        Err(e) => TauPoint { tau, w_tau: None, failure: Some(e.to_string()) },
    }
}

/// Evaluates every grid multiplier, then refines the minimizer by a
/// golden-section search in `log τ` between the neighbours of the best
/// grid point. `threads` caps the parallelism of the grid evaluation;
/// results do not depend on it.
pub fn sweep_tau(plant: &AwSynthesisPlant, weights: &AwWeights, grid: &[f64], threads: Option<usize>) -> Result<TauSweepResult> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("multiplier grid is empty".into()));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) || grid.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::InvalidInput("multiplier grid must be positive and strictly increasing".into()));
    }
    let points: Vec<TauPoint> = match threads {
        Some(1) => grid.iter().map(|&t| evaluate(plant, weights, t)).collect(),
        _ => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads.unwrap_or(0))
                .build()
                .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
            pool.install(|| grid.par_iter().map(|&t| evaluate(plant, weights, t)).collect())
        }
    };

    let best_idx = points
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.w_tau.map(|w| (i, w)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
        .ok_or(Error::NoFeasibleTau { evaluated: points.len() })?;

    let mut best = synthesize_at_tau(plant, weights, grid[best_idx])?;
    if grid.len() > 1 {
        let lo = grid[best_idx.saturating_sub(1)].ln();
        let hi = grid[(best_idx + 1).min(grid.len() - 1)].ln();
        let objective = |lt: f64| synthesize_at_tau(plant, weights, lt.exp()).map(|c| c.certificate.w_tau).unwrap_or(f64::INFINITY);
        // 1e-3 relative in τ ⇔ 1e-3 absolute in log τ
        let (lt, w) = optim::golden_section(objective, lo, hi, 1e-3 / lo.abs().max(hi.abs()).max(1.0));
        if w < best.certificate.w_tau {
            best = synthesize_at_tau(plant, weights, lt.exp())?;
        }
    }
    Ok(TauSweepResult { points, best })
}

/// One numbered item of the stage-2 standing assumptions.
#[derive(Debug, Clone)]
pub struct AssumptionItem {
    pub index: usize,
    pub statement: &'static str,
    pub passed: bool,
    /// Numerical evidence: a norm, eigenvalue or abscissa, depending on the item.
    pub value: f64,
    /// Hard items block synthesis when they fail.
    pub hard: bool,
    pub note: &'static str,
}

#[derive(Debug, Clone)]
pub struct AssumptionReport {
    pub tau: f64,
    pub items: Vec<AssumptionItem>,
}

impl AssumptionReport {
    pub fn hard_failures(&self) -> Vec<usize> {
        self.items.iter().filter(|i| i.hard && !i.passed).map(|i| i.index).collect()
    }

    pub fn item(&self, index: usize) -> Option<&AssumptionItem> {
        self.items.iter().find(|i| i.index == index)
    }

    pub fn render(&self) -> String {
        let mut out = format!("# standing assumptions of the antiwindup synthesis, evaluated at tau = {:.17e}\n", self.tau);
        for it in &self.items {
            out.push_str(&format!(
                "item {}: {} [{}{}] value = {:.17e}",
                it.index,
                it.statement,
                if it.passed { "PASS" } else { "FAIL" },
                if it.hard { ", hard" } else { ", informational" },
                it.value
            ));
            if !it.note.is_empty() {
                out.push_str(&format!(" ({})", it.note));
            }
            out.push('\n');
        }
        out
    }
}

const RANK_TOL: f64 = 1e-10;

/// Evaluates the nine standing assumptions numerically. Nothing is repaired;
/// items the construction itself violates are reported as failed.
pub fn check_assumptions(plant: &AwSynthesisPlant, weights: &AwWeights, tau: f64) -> Result<AssumptionReport> {
    let terms = weights.at_tau(plant, tau)?;
    let n = plant.states();
    let mut items = Vec::with_capacity(9);

    let cross = (plant.c1_tilde.transpose() * &plant.d1_tilde).norm();
    let scale = 1.0 + plant.c1_tilde.norm() * plant.d1_tilde.norm();
    items.push(AssumptionItem {
        index: 1,
        statement: "C1~' D1~ = 0",
        passed: cross <= SYMMETRY_TOL * scale,
        value: cross,
        hard: false,
        note: "cross term is handled through Upsilon",
    });

    let gamma_min = linalg::min_sym_eigenvalue(&terms.gamma);
    items.push(AssumptionItem {
        index: 2,
        statement: "D2~ D2~' > 0",
        passed: gamma_min > 0.0,
        value: gamma_min,
        hard: true,
        note: "",
    });

    let abscissa = linalg::spectral_abscissa(&plant.a_bar)?;
    items.push(AssumptionItem {
        index: 3,
        statement: "A_bar is Hurwitz",
        passed: abscissa < 0.0,
        value: abscissa,
        hard: true,
        note: "",
    });

    let b2_norm = plant.b2_tilde.norm();
    items.push(AssumptionItem {
        index: 4,
        statement: "(A_bar, B2~) stabilizable and B2~ != 0",
        passed: b2_norm > 0.0 && linalg::is_stabilizable(&plant.a_bar, &plant.b2_tilde, RANK_TOL)?,
        value: b2_norm,
        hard: false,
        note: "",
    });

    items.push(AssumptionItem {
        index: 5,
        statement: "(A_bar, B1) stabilizable",
        passed: linalg::is_stabilizable(&plant.a_bar, &plant.b1, RANK_TOL)?,
        value: plant.b1.norm(),
        hard: false,
        note: "B1 used for the undefined B1~",
    });

    let b2d2 = (&plant.b2_tilde * plant.d2_tilde.transpose()).norm();
    items.push(AssumptionItem {
        index: 6,
        statement: "B2~ D2~' = 0",
        passed: b2d2 == 0.0,
        value: b2d2,
        hard: false,
        note: "B2~ D2~' = -B by construction; synthesis proceeds with it",
    });

    let reduced = terms.reduced_state_weight()?;
    let reduced_min = linalg::min_sym_eigenvalue(&reduced);
    let reduced_scale = 1.0 + terms.r_tau.norm();
    items.push(AssumptionItem {
        index: 7,
        statement: "R_tau - Upsilon G_tau^-1 Upsilon' >= 0",
        passed: reduced_min >= -1e-10 * reduced_scale,
        value: reduced_min,
        hard: true,
        note: "",
    });

    let g_inv = linalg::inverse(&terms.g_ctrl, "G_tau")?;
    let a_red = &plant.a_bar - &plant.b1 * &g_inv * terms.upsilon.transpose();
    items.push(AssumptionItem {
        index: 8,
        statement: "(A_bar - B1 G_tau^-1 Upsilon', R_tau - Upsilon G_tau^-1 Upsilon') detectable",
        passed: linalg::is_detectable(&a_red, &reduced, RANK_TOL)?,
        value: linalg::spectral_abscissa(&a_red)?,
        hard: false,
        note: "B1 used for the undefined B1~",
    });

    let nz = plant.b2_tilde.ncols();
    let gamma_inv = linalg::inverse(&terms.gamma, "Gamma")?;
    let proj = DMatrix::identity(nz, nz) - plant.d2_tilde.transpose() * gamma_inv * &plant.d2_tilde;
    let b2_proj = &plant.b2_tilde * proj;
    items.push(AssumptionItem {
        index: 9,
        statement: "(A_bar, B2~ (I - D2~' Gamma^-1 D2~)) stabilizable",
        passed: linalg::is_stabilizable(&plant.a_bar, &b2_proj, RANK_TOL)?,
        value: b2_proj.norm(),
        hard: false,
        note: "Gamma = D2~ D2~'",
    });

    debug_assert_eq!(items.len(), 9);
    let _ = n;
    Ok(AssumptionReport { tau, items })
}
