//! Reference computations kept independent of the main code paths: the
//! analytic free flow, dense quadratures, matrix exponentials, a hand-expanded
//! two-mode system and convergence-order estimation.

use crate::dynamics::{evolve, EvolveOptions, NoObserver, Scheme};
use crate::error::{HfbError, Result};
use crate::linalg::{self, CMat, RMat, C64};
use crate::meanfield::HfbSystem;
use crate::state::{self, HfbState};

/// Hermiticity tolerance accepted for the one-body kernel.
pub const HERMITIAN_TOLERANCE: f64 = 1e-10;

/// `free_flow`: `φ ↦ Uφ`, `γ ↦ UγU^†`, `σ ↦ UσUᵀ` with `U = exp(-ith)`.
pub fn free_flow(state0: &HfbState, t: f64, h_kernel: &CMat) -> Result<HfbState> {
    let n = state0.len();
    if h_kernel.shape() != (n, n) {
        return Err(HfbError::SizeMismatch { expected: n, actual: h_kernel.nrows() });
    }
    let defect = linalg::hermitian_defect(h_kernel);
    let scale = linalg::max_abs(h_kernel).max(1.0);
    if defect > HERMITIAN_TOLERANCE * scale {
        return Err(HfbError::InvalidArgument(format!("one-body kernel not Hermitian (defect {defect:.3e})")));
    }
    let (e, v) = linalg::eigh(&h_kernel.scale(state0.weight));
    let u = linalg::spectral_apply(&e, &v, |x| C64::from_polar(1.0, -t * x));
    Ok(HfbState {
        weight: state0.weight,
        phi: &u * &state0.phi,
        gamma: &u * &state0.gamma * u.adjoint(),
        sigma: &u * &state0.sigma * u.transpose(),
    })
}

/// Taylor/Padé matrix exponential (scaling and squaring).
pub fn matrix_exponential(a: &CMat) -> CMat {
    a.clone().exp()
}

/// `v * ρ` at every node by the O(N²) quadrature `w Σ_j v(x_i - x_j) ρ_j`.
pub fn dense_direct_potential(pair: &RMat, density: &[f64], weight: f64) -> Vec<f64> {
    (0..density.len())
        .map(|i| weight * density.iter().enumerate().map(|(j, r)| pair[(i, j)] * r).sum::<f64>())
        .collect()
}

/// X⁰ distance used by the order studies.
pub fn x0_error(a: &HfbState, b: &HfbState) -> f64 {
    state::x0_distance(a, b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderEstimate {
    pub dts: Vec<f64>,
    pub errors: Vec<f64>,
    /// Least-squares slope of `log err` against `log dt`.
    pub order: f64,
    /// Errors strictly decrease along the sequence of decreasing steps.
    pub monotone: bool,
}

/// Slope of the least-squares line through `(log dt, log err)`.
pub fn fit_order(dts: &[f64], errors: &[f64]) -> f64 {
    let xs: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.max(f64::MIN_POSITIVE).ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Number of refinements of the smallest step used for a self-convergence reference.
pub const REFERENCE_REFINEMENT: f64 = 8.0;

/// `order_study`: final-time X⁰ errors for each step in `dts` against
/// `reference`, or against a run at `min(dts) / 8` when none is given.
pub fn order_study(
    system: &HfbSystem,
    state0: &HfbState,
    t_final: f64,
    scheme: Scheme,
    dts: &[f64],
    reference: Option<&HfbState>,
) -> Result<OrderEstimate> {
    if dts.len() < 3 {
        return Err(HfbError::InsufficientData(format!("order study needs at least 3 steps, got {}", dts.len())));
    }
    let mut sorted = dts.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let run = |dt: f64| -> Result<HfbState> {
        let mut opts = EvolveOptions::new(dt, t_final).with_store_stride(0);
        opts.scheme = scheme;
        Ok(evolve(system, state0, &opts, &mut NoObserver)?.final_state().clone())
    };
    let reference = match reference {
        Some(r) => r.clone(),
        None => run(sorted[sorted.len() - 1] / REFERENCE_REFINEMENT)?,
    };
    let errors: Vec<f64> = sorted.iter().map(|&dt| run(dt).map(|s| x0_error(&s, &reference))).collect::<Result<_>>()?;
    let monotone = errors.windows(2).all(|w| w[1] < w[0]);
    if !monotone {
        log::warn!("order study errors are not monotone: {errors:?}");
    }
    let order = fit_order(&sorted, &errors);
    Ok(OrderEstimate { dts: sorted, errors, order, monotone })
}

pub mod two_mode;

/// `two_mode_fixture`: the reference trajectory of [`two_mode`].
pub fn two_mode_fixture() -> two_mode::Fixture {
    two_mode::generate()
}
