//! HFB right-hand side, RK4 and Picard (mild-solution) integrators, trajectory
//! evolution and the Bogoliubov propagator cross-check.
//!
//! In kernel form, with `h = h(γ^φ)`, `k = k(σ^φ)` and kernel products carrying
//! the weight `w`:
//!
//! ```text
//! i ∂φ = w [h(γ) φ + k φ̄]
//! i ∂γ = w ([h, γ] + k σ^† - σ k^†)
//! i ∂σ = w ([h, σ]₊ + [k, γ]₊) + k,     [A, B]₊ = A Bᵀ + B Aᵀ
//! ```
//!
//! The generalized density matrix then obeys `i ∂Γ = w(𝒜Γ - Γ𝒜^†)` with
//! `𝒜 = [[h, k], [-k̄, -h̄]]`, so `Γ_t = W_t Γ_0 W_t^†` for `i Ẇ = w𝒜 W`, and
//! the free σ flow is `σ_t = U σ_0 Uᵀ` with `U = e^{-ith}` (not `U σ U^†`).

use crate::error::{HfbError, Result};
use crate::linalg::{self, c, CMat, CVec, C64, I};
use crate::meanfield::{hfb_generator, interaction, pairing_k, symplectic_form, HfbSystem};
use crate::observables::{self, DiagnosticsRecord};
use crate::state::{self, HfbState};

/// Time derivative `(dφ, dγ, dσ)`; stored with the state layout.
pub type Tangent = HfbState;

fn anticommutator(a: &CMat, b: &CMat) -> CMat {
    a * b.transpose() + b * a.transpose()
}

/// Full HFB right-hand side `∂_t (φ, γ, σ)`.
pub fn rhs(system: &HfbSystem, state: &HfbState) -> Result<Tangent> {
    system.validate_shape(state)?;
    let w = state.weight;
    let phi_phi = linalg::outer(&state.phi, &state.phi.map(|z| z.conj()));
    let b_gamma = interaction(system, &state.gamma)?;
    let h_gamma = system.one_body() + &b_gamma;
    let h_eff = &h_gamma + interaction(system, &phi_phi)?;
    let k_eff = pairing_k(system.pair(), &state.sigma_phi());
    let phi_bar = state.phi.map(|z| z.conj());

    let dphi = (&h_gamma * &state.phi + &k_eff * phi_bar) * (-I * w);
    let dgamma = (&h_eff * &state.gamma - &state.gamma * &h_eff + &k_eff * state.sigma.adjoint()
        - &state.sigma * k_eff.adjoint())
        * (-I * w);
    let dsigma = ((anticommutator(&h_eff, &state.sigma) + anticommutator(&k_eff, &state.gamma)) * c(w, 0.0) + &k_eff)
        * (-I);
    Ok(HfbState { weight: w, phi: dphi, gamma: dgamma, sigma: dsigma })
}

/// Linear part `-i A ρ` with `Aρ = (hφ, [h, γ], [h, σ]₊ + k[σ])`.
pub fn linear_part(system: &HfbSystem, state: &HfbState) -> Tangent {
    let w = state.weight;
    let h = system.one_body();
    HfbState {
        weight: w,
        phi: (h * &state.phi) * (-I * w),
        gamma: (h * &state.gamma - &state.gamma * h) * (-I * w),
        sigma: (anticommutator(h, &state.sigma) * c(w, 0.0) + pairing_k(system.pair(), &state.sigma)) * (-I),
    }
}

/// Nonlinear part `f(ρ)` (without the `-i`):
///
/// ```text
/// f₁ = b[γ]φ + k[σ + φ⊗φ] φ̄
/// f₂ = [b[γ + |φ⟩⟨φ|], γ] + k[σ + φ⊗φ] σ̄ - σ conj(k[σ + φ⊗φ])
/// f₃ = [b[γ + |φ⟩⟨φ|], σ]₊ + [k[σ + φ⊗φ], γ]₊ + k[φ⊗φ]
/// ```
///
/// The last term of `f₃` is the part of the affine pairing source not already
/// carried by `k[σ]` in the linear part.
pub fn nonlinear_part(system: &HfbSystem, state: &HfbState) -> Result<Tangent> {
    let w = state.weight;
    let phi_phi = linalg::outer(&state.phi, &state.phi.map(|z| z.conj()));
    let phi_tensor = linalg::outer(&state.phi, &state.phi);
    let b_gamma = interaction(system, &state.gamma)?;
    let b_full = &b_gamma + interaction(system, &phi_phi)?;
    let k_full = pairing_k(system.pair(), &(&state.sigma + &phi_tensor));
    let phi_bar = state.phi.map(|z| z.conj());
    let sigma_bar = state.sigma.map(|z| z.conj());
    let k_bar = k_full.map(|z| z.conj());

    let f1 = (&b_gamma * &state.phi + &k_full * phi_bar) * c(w, 0.0);
    let f2 = (&b_full * &state.gamma - &state.gamma * &b_full + &k_full * sigma_bar - &state.sigma * k_bar) * c(w, 0.0);
    let f3 = (anticommutator(&b_full, &state.sigma) + anticommutator(&k_full, &state.gamma)) * c(w, 0.0)
        + pairing_k(system.pair(), &phi_tensor);
    Ok(HfbState { weight: w, phi: f1, gamma: f2, sigma: f3 })
}

/// `rhs_split`: `(-iAρ, -if(ρ))`, summing to [`rhs`] on valid states.
pub fn rhs_split(system: &HfbSystem, state: &HfbState) -> Result<(Tangent, Tangent)> {
    system.validate_shape(state)?;
    let f = nonlinear_part(system, state)?;
    let minus_i_f = HfbState { weight: f.weight, phi: f.phi * (-I), gamma: f.gamma * (-I), sigma: f.sigma * (-I) };
    Ok((linear_part(system, state), minus_i_f))
}

/// One classical RK4 step. Non-finite output aborts with the input as last valid state.
pub fn step_rk4(system: &HfbSystem, state: &HfbState, dt: f64) -> Result<HfbState> {
    if !(dt > 0.0) {
        return Err(HfbError::InvalidArgument(format!("time step {dt} must be positive")));
    }
    let k1 = rhs(system, state)?;
    let k2 = rhs(system, &state.add_scaled(&k1, c(0.5 * dt, 0.0)))?;
    let k3 = rhs(system, &state.add_scaled(&k2, c(0.5 * dt, 0.0)))?;
    let k4 = rhs(system, &state.add_scaled(&k3, c(dt, 0.0)))?;
    let next = state
        .add_scaled(&k1, c(dt / 6.0, 0.0))
        .add_scaled(&k2, c(dt / 3.0, 0.0))
        .add_scaled(&k3, c(dt / 3.0, 0.0))
        .add_scaled(&k4, c(dt / 6.0, 0.0));
    if !next.is_finite() {
        return Err(HfbError::NumericalAbort { t: dt, last_valid: Box::new(state.clone()) });
    }
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Rk4,
}

impl std::str::FromStr for Scheme {
    type Err = HfbError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rk4" => Ok(Scheme::Rk4),
            other => Err(HfbError::InvalidArgument(format!("unknown integrator scheme `{other}`"))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scheme::Rk4 => f.write_str("rk4"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolveOptions {
    pub dt: f64,
    pub t_final: f64,
    pub scheme: Scheme,
    /// Diagnostics every `diagnostic_stride` steps (0 disables them).
    pub diagnostic_stride: usize,
    /// States kept every `store_stride` steps (0 keeps only the endpoints).
    pub store_stride: usize,
}

impl EvolveOptions {
    pub fn new(dt: f64, t_final: f64) -> Self {
        Self { dt, t_final, scheme: Scheme::Rk4, diagnostic_stride: 0, store_stride: 1 }
    }

    pub fn with_diagnostics(mut self, stride: usize) -> Self {
        self.diagnostic_stride = stride;
        self
    }

    pub fn with_store_stride(mut self, stride: usize) -> Self {
        self.store_stride = stride;
        self
    }

    pub fn steps(&self) -> usize {
        if self.t_final <= 0.0 {
            0
        } else {
            (self.t_final / self.dt - 1e-9).ceil() as usize
        }
    }
}

/// Callback at every diagnostic stride. An error aborts the evolution.
pub trait Observer {
    fn observe(&mut self, step: usize, state: &HfbState, record: &DiagnosticsRecord) -> Result<()>;
}

impl<F> Observer for F
where
    F: FnMut(usize, &HfbState, &DiagnosticsRecord) -> Result<()>,
{
    fn observe(&mut self, step: usize, state: &HfbState, record: &DiagnosticsRecord) -> Result<()> {
        self(step, state, record)
    }
}

pub struct NoObserver;

impl Observer for NoObserver {
    fn observe(&mut self, _: usize, _: &HfbState, _: &DiagnosticsRecord) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<HfbState>,
    pub diagnostics: Vec<DiagnosticsRecord>,
}

impl Trajectory {
    pub fn final_state(&self) -> &HfbState {
        self.states.last().expect("trajectory always holds the initial state")
    }
}

/// Spectral radius of `w h`, the fastest free oscillation.
fn characteristic_frequency(system: &HfbSystem) -> f64 {
    let (values, _) = system.one_body_spectrum();
    values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// `evolve`: fixed-step integration to `t_final`, the last step shortened to land on it.
pub fn evolve(
    system: &HfbSystem,
    state0: &HfbState,
    opts: &EvolveOptions,
    observer: &mut dyn Observer,
) -> Result<Trajectory> {
    system.validate_shape(state0)?;
    if !(opts.dt > 0.0) || !(opts.t_final >= 0.0) {
        return Err(HfbError::InvalidArgument(format!(
            "need dt > 0 and T >= 0, got dt = {}, T = {}",
            opts.dt, opts.t_final
        )));
    }
    let freq = characteristic_frequency(system);
    if opts.dt * freq >= 1.0 {
        log::warn!("dt = {} exceeds the characteristic period 1/{freq:.3e}; RK4 may be unstable", opts.dt);
    }
    let steps = opts.steps();
    let mut traj = Trajectory::default();
    let mut current = state0.clone();
    traj.times.push(0.0);
    traj.states.push(current.clone());
    if opts.diagnostic_stride > 0 {
        let rec = observables::record(system, &current, 0.0)?;
        observer.observe(0, &current, &rec)?;
        traj.diagnostics.push(rec);
    }
    for step in 1..=steps {
        let t_prev = (step - 1) as f64 * opts.dt;
        let t = if step == steps { opts.t_final } else { step as f64 * opts.dt };
        current = match opts.scheme {
            Scheme::Rk4 => step_rk4(system, &current, t - t_prev).map_err(|e| match e {
                HfbError::NumericalAbort { last_valid, .. } => HfbError::NumericalAbort { t, last_valid },
                HfbError::CorruptedState(_) => HfbError::NumericalAbort { t, last_valid: Box::new(current.clone()) },
                other => other,
            })?,
        };
        let store = if opts.store_stride == 0 { step == steps } else { step % opts.store_stride == 0 || step == steps };
        if store {
            traj.times.push(t);
            traj.states.push(current.clone());
        }
        if opts.diagnostic_stride > 0 && (step % opts.diagnostic_stride == 0 || step == steps) {
            let rec = observables::record(system, &current, t)?;
            observer.observe(step, &current, &rec)?;
            traj.diagnostics.push(rec);
        }
    }
    Ok(traj)
}

/// The semigroup `G(s) = exp(-isA)` of the linear part.
///
/// `φ` and `γ` blocks use the eigendecomposition of `w h`. The σ block solves
/// `∂σ = -i L σ`, `Lσ = w(hσ + σhᵀ) + v♯σ`, with a truncated Taylor series
/// on sub-steps of length at most `0.5 / ‖L‖`.
#[derive(Debug, Clone)]
pub struct LinearSemigroup {
    weight: f64,
    energies: Vec<f64>,
    modes: CMat,
    h_op: CMat,
    h_op_t: CMat,
    pair: crate::linalg::RMat,
    l_bound: f64,
}

impl LinearSemigroup {
    pub fn new(system: &HfbSystem) -> Self {
        let (energies, modes) = system.one_body_spectrum().clone();
        let h_op = system.one_body().scale(system.weight());
        let spread = energies.iter().fold(0.0_f64, |m, e| m.max(e.abs()));
        let vmax = system.pair().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        Self {
            weight: system.weight(),
            energies,
            modes,
            h_op_t: h_op.transpose(),
            h_op,
            pair: system.pair().clone(),
            l_bound: 2.0 * spread + vmax,
        }
    }

    fn unitary(&self, s: f64) -> CMat {
        linalg::spectral_apply(&self.energies, &self.modes, |e| C64::from_polar(1.0, -s * e))
    }

    fn l_apply(&self, sigma: &CMat) -> CMat {
        &self.h_op * sigma + sigma * &self.h_op_t + linalg::hadamard_real(sigma, &self.pair)
    }

    fn sigma_flow(&self, sigma: &CMat, s: f64) -> CMat {
        let pieces = ((s.abs() * self.l_bound) / 0.5).ceil().max(1.0) as usize;
        let tau = s / pieces as f64;
        let mut out = sigma.clone();
        for _ in 0..pieces {
            let mut term = out.clone();
            let mut acc = out.clone();
            for m in 1..80 {
                term = self.l_apply(&term) * (-I * (tau / m as f64));
                acc += &term;
                if linalg::max_abs(&term) <= 1e-18 * linalg::max_abs(&acc).max(1e-300) {
                    break;
                }
            }
            out = acc;
        }
        out
    }

    pub fn apply(&self, state: &HfbState, s: f64) -> HfbState {
        let u = self.unitary(s);
        HfbState {
            weight: self.weight,
            phi: &u * &state.phi,
            gamma: &u * &state.gamma * u.adjoint(),
            sigma: self.sigma_flow(&state.sigma, s),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PicardResult {
    pub state: HfbState,
    /// Ratio of the last two successive iterate differences.
    pub contraction: f64,
    /// `max_s X⁰(ρ^{(m)}(s) - ρ^{(m-1)}(s))` per iteration.
    pub differences: Vec<f64>,
    pub nodes: usize,
}

/// `picard_mild`: fixed-point iteration of `ρ_t = G(t)ρ₀ - i∫₀ᵗ G(t-s) f(ρ_s) ds`.
///
/// The iterate lives on `M + 1` uniform nodes (`M` even, spacing at most `dt`).
/// The Duhamel integral is accumulated with composite Simpson on node pairs;
/// odd nodes use the same quadratic interpolant integrated over one interval.
pub fn picard_mild(
    system: &HfbSystem,
    state0: &HfbState,
    t: f64,
    dt: f64,
    iterations: usize,
) -> Result<PicardResult> {
    system.validate_shape(state0)?;
    if iterations == 0 {
        return Err(HfbError::InvalidArgument("Picard needs at least one iteration".into()));
    }
    if !(t >= 0.0) || !(dt > 0.0) {
        return Err(HfbError::InvalidArgument(format!("need t >= 0 and dt > 0, got t = {t}, dt = {dt}")));
    }
    let mut m = ((t / dt) - 1e-9).ceil().max(2.0) as usize;
    if m % 2 == 1 {
        m += 1;
    }
    let delta = t / m as f64;
    let semigroup = LinearSemigroup::new(system);
    let free: Vec<HfbState> = (0..=m).map(|i| semigroup.apply(state0, i as f64 * delta)).collect();
    let mut iterate: Vec<HfbState> = vec![state0.clone(); m + 1];
    let mut differences = Vec::with_capacity(iterations);

    let minus_i_f = |s: &HfbState| -> Result<HfbState> {
        let f = nonlinear_part(system, s)?;
        Ok(HfbState { weight: f.weight, phi: f.phi * (-I), gamma: f.gamma * (-I), sigma: f.sigma * (-I) })
    };

    for _ in 0..iterations {
        let forcing: Vec<HfbState> = iterate.iter().map(&minus_i_f).collect::<Result<_>>()?;
        let mut duhamel = vec![HfbState::vacuum(state0.len(), state0.weight); m + 1];
        let mut i = 0;
        while i + 2 <= m {
            let (f0, f1, f2) = (&forcing[i], &forcing[i + 1], &forcing[i + 2]);
            let g1_f0 = semigroup.apply(f0, delta);
            let g2_f0 = semigroup.apply(f0, 2.0 * delta);
            let g1_f1 = semigroup.apply(f1, delta);
            let gm1_f2 = semigroup.apply(f2, -delta);
            let g1_prev = semigroup.apply(&duhamel[i], delta);
            let g2_prev = semigroup.apply(&duhamel[i], 2.0 * delta);

            duhamel[i + 1] = g1_prev
                .add_scaled(&g1_f0, c(5.0 * delta / 12.0, 0.0))
                .add_scaled(f1, c(8.0 * delta / 12.0, 0.0))
                .add_scaled(&gm1_f2, c(-delta / 12.0, 0.0));
            duhamel[i + 2] = g2_prev
                .add_scaled(&g2_f0, c(delta / 3.0, 0.0))
                .add_scaled(&g1_f1, c(4.0 * delta / 3.0, 0.0))
                .add_scaled(f2, c(delta / 3.0, 0.0));
            i += 2;
        }
        let next: Vec<HfbState> = free.iter().zip(&duhamel).map(|(g, d)| g.add_scaled(d, c(1.0, 0.0))).collect();
        let diff = next.iter().zip(&iterate).map(|(a, b)| state::x0_distance(a, b)).fold(0.0, f64::max);
        if !diff.is_finite() {
            return Err(HfbError::NumericalAbort { t, last_valid: Box::new(state0.clone()) });
        }
        differences.push(diff);
        iterate = next;
    }

    let contraction = match differences.as_slice() {
        [.., prev, last] if *prev > 0.0 => last / prev,
        _ => 0.0,
    };
    if contraction >= 1.0 {
        return Err(HfbError::NonContraction { factor: contraction, t });
    }
    Ok(PicardResult { state: iterate.pop().expect("m >= 2"), contraction, differences, nodes: m + 1 })
}

/// Propagators `W_t` at the trajectory stamps.
#[derive(Debug, Clone)]
pub struct BogoliubovPropagator {
    pub times: Vec<f64>,
    pub maps: Vec<CMat>,
}

#[derive(Debug, Clone)]
pub struct BogoliubovReport {
    pub propagator: BogoliubovPropagator,
    /// `max_t ‖W_t J W_t^† - J‖_max`
    pub symplectic_defect: f64,
    /// `max_t ‖Γ_c(t) - W_t Γ_c(0) W_t^†‖_max`
    pub reconstruction_defect: f64,
}

impl BogoliubovReport {
    pub fn is_consistent(&self, symplectic_tol: f64, reconstruction_tol: f64) -> bool {
        self.symplectic_defect < symplectic_tol && self.reconstruction_defect < reconstruction_tol
    }
}

/// Generator convention fixed against the two-mode oracle: `i dW/dt = w𝒜 W`,
/// `Γ_t = W Γ_0 W^†`, `J𝒜J = 𝒜^†`.
pub const PROPAGATOR_CONVENTION: &str = "i dW/dt = w A W; Gamma_t = W Gamma_0 W^dagger; J A J = A^dagger";

/// Cubic Lagrange interpolation of the stamp sequence at `t = (m + s) dt`, `s ∈ [0, 1]`,
/// through the four nearest stamps (clamped at the ends).
fn interpolate(generators: &[CMat], m: usize, s: f64) -> CMat {
    let len = generators.len();
    if len < 4 {
        let next = (m + 1).min(len - 1);
        return generators[m].scale(1.0 - s) + generators[next].scale(s);
    }
    let first = m.saturating_sub(1).min(len - 4);
    let x = (m - first) as f64 + s;
    let mut out = CMat::zeros(generators[0].nrows(), generators[0].ncols());
    for a in 0..4 {
        let mut weight = 1.0;
        for b in 0..4 {
            if a != b {
                weight *= (x - b as f64) / (a as f64 - b as f64);
            }
        }
        out += generators[first + a].scale(weight);
    }
    out
}

/// Integrates `i dW/dt = B(t) W` on the stamp grid with the fourth-order
/// Magnus exponential at the two Gauss points. `B` is interpolated cubically
/// between stamps. Every step is an exact exponential of a `J`-self-adjoint
/// generator, so `W J W^† = J` holds to rounding.
pub fn propagate(generators: &[CMat], dt: f64) -> Vec<CMat> {
    let Some(first) = generators.first() else {
        return Vec::new();
    };
    let dim = first.nrows();
    let mut w = CMat::identity(dim, dim);
    let mut out = vec![w.clone()];
    let offset = 3.0_f64.sqrt() / 6.0;
    for m in 0..generators.len() - 1 {
        let b1 = interpolate(generators, m, 0.5 - offset);
        let b2 = interpolate(generators, m, 0.5 + offset);
        let comm = &b2 * &b1 - &b1 * &b2;
        let x = (&b1 + &b2).scale(0.5 * dt) - comm * (I * (3.0_f64.sqrt() / 12.0 * dt * dt));
        let step = (x * (-I)).exp();
        w = step * w;
        out.push(w.clone());
    }
    out
}

/// `bogoliubov_check` on a trajectory stored at uniform time spacing.
pub fn bogoliubov_check(system: &HfbSystem, trajectory: &Trajectory) -> Result<BogoliubovReport> {
    let times = &trajectory.times;
    if times.len() < 2 {
        return Err(HfbError::InsufficientData("Bogoliubov check needs at least two stamps".into()));
    }
    let dt = times[1] - times[0];
    for pair in times.windows(2) {
        if ((pair[1] - pair[0]) - dt).abs() > 1e-9 * dt.max(1.0) {
            return Err(HfbError::InvalidArgument("Bogoliubov check needs uniformly spaced stamps".into()));
        }
    }
    let generators: Vec<CMat> = trajectory
        .states
        .iter()
        .map(|s| hfb_generator(system, s).map(|g| g.operator_block()))
        .collect::<Result<_>>()?;
    let maps = propagate(&generators, dt);
    let n = system.len();
    let j = symplectic_form(n);
    let gamma0 = state::GeneralizedDensityMatrix::from_state(&trajectory.states[0]).matrix;
    let mut symplectic_defect = 0.0_f64;
    let mut reconstruction_defect = 0.0_f64;
    for (w, s) in maps.iter().zip(&trajectory.states) {
        symplectic_defect = symplectic_defect.max(linalg::max_abs(&(w * &j * w.adjoint() - &j)));
        let gamma_t = state::GeneralizedDensityMatrix::from_state(s).matrix;
        reconstruction_defect = reconstruction_defect.max(linalg::max_abs(&(w * &gamma0 * w.adjoint() - gamma_t)));
    }
    Ok(BogoliubovReport {
        propagator: BogoliubovPropagator { times: times.clone(), maps },
        symplectic_defect,
        reconstruction_defect,
    })
}

/// Convenience for tests and the CLI: `φ ↦ e^{-ith} φ` on a field.
pub fn free_phi(system: &HfbSystem, phi: &CVec, t: f64) -> CVec {
    let (e, u) = system.one_body_spectrum();
    linalg::spectral_apply(e, u, |x| C64::from_polar(1.0, -t * x)) * phi
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{pair_kernel, FieldSpec, TorusGrid};
    use crate::oracle;
    use crate::scenarios as sc;
    use crate::state::{random_valid_state, RandomStateOptions};
    use proptest::prelude::*;

    fn system(n: usize, v: f64) -> HfbSystem {
        let g = TorusGrid::new(1, 2.0 * std::f64::consts::PI, n).unwrap();
        let spec = if v == 0.0 {
            FieldSpec::Constant { value: 0.0 }
        } else {
            FieldSpec::Gaussian { amplitude: v, width: 0.4, center: [0.0; 3] }
        };
        let pot: Vec<f64> = (0..n).map(|i| 0.3 * (g.node(i)[0]).cos()).collect();
        HfbSystem::new(&g, pot, pair_kernel(&g, &spec).unwrap()).unwrap()
    }

    fn random_state(sys: &HfbSystem, seed: u64) -> HfbState {
        let mut rng = sc::rng(seed);
        random_valid_state(sys.grid().unwrap(), &mut rng, &RandomStateOptions { band: 3, ..Default::default() })
    }

    fn coherent(sys: &HfbSystem) -> HfbState {
        let g = sys.grid().unwrap();
        HfbState { phi: sc::packet(g, 1.5).unwrap(), ..HfbState::vacuum(g.len(), g.weight()) }
    }

    #[test]
    fn rhs_examples() {
        let sys = system(8, 0.7);
        let vac = HfbState::vacuum(8, sys.weight());
        let d = rhs(&sys, &vac).unwrap();
        assert_eq!(state::x0_norm(&d), 0.0);

        let free = system(8, 0.0);
        let s = coherent(&free);
        let d = rhs(&free, &s).unwrap();
        let expected = (free.one_body() * &s.phi) * (-I * free.weight());
        assert!(linalg::max_abs_vec(&(d.phi - expected)) < 1e-12);
        assert_eq!(linalg::max_abs(&d.gamma), 0.0);
        assert_eq!(linalg::max_abs(&d.sigma), 0.0);

        // pair creation out of the condensate
        let s = coherent(&sys);
        let d = rhs(&sys, &s).unwrap();
        let source = pairing_k(sys.pair(), &linalg::outer(&s.phi, &s.phi)) * (-I);
        assert!(linalg::max_abs(&source) > 1e-3);
        assert!(linalg::max_abs(&(d.sigma - source)) < 1e-12);
        let (a, f) = rhs_split(&sys, &s).unwrap();
        assert!(rhs(&sys, &s).unwrap().max_entry_difference(&a.add_scaled(&f, c(1.0, 0.0))) < 1e-12);

        assert!(rhs(&sys, &HfbState::vacuum(4, 1.0)).is_err());
    }

    #[test]
    fn split_examples() {
        let sys = system(8, 0.7);
        let (a, f) = rhs_split(&sys, &HfbState::vacuum(8, sys.weight())).unwrap();
        assert_eq!(state::x0_norm(&a) + state::x0_norm(&f), 0.0);
        let free = system(8, 0.0);
        let s = random_state(&free, 3);
        let (a, f) = rhs_split(&free, &s).unwrap();
        assert_eq!(state::x0_norm(&f), 0.0);
        assert!(a.max_entry_difference(&rhs(&free, &s).unwrap()) < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn tangent_structure(seed in any::<u64>()) {
            let sys = system(8, 0.7);
            let s = random_state(&sys, seed);
            let d = rhs(&sys, &s).unwrap();
            prop_assert!(linalg::hermitian_defect(&d.gamma) < 1e-11);
            prop_assert!(linalg::symmetric_defect(&d.sigma) < 1e-11);
        }

        #[test]
        fn split_identity(seed in any::<u64>()) {
            let sys = system(16, 0.5);
            let s = random_state(&sys, seed);
            let (a, f) = rhs_split(&sys, &s).unwrap();
            prop_assert!(rhs(&sys, &s).unwrap().max_entry_difference(&a.add_scaled(&f, c(1.0, 0.0))) < 1e-12);
        }

        #[test]
        fn gauge_equivariance(seed in any::<u64>(), theta in -3.0f64..3.0) {
            let sys = system(8, 0.7);
            let s = random_state(&sys, seed);
            let opts = EvolveOptions::new(1e-3, 0.05).with_store_stride(0);
            let a = evolve(&sys, &state::gauge_transform(&s, theta), &opts, &mut NoObserver).unwrap();
            let b = evolve(&sys, &s, &opts, &mut NoObserver).unwrap();
            prop_assert!(state::x0_distance(a.final_state(), &state::gauge_transform(b.final_state(), theta)) < 1e-8);
        }

        #[test]
        fn rk4_keeps_structure_and_positivity(seed in any::<u64>()) {
            let sys = system(8, 0.7);
            let s = random_state(&sys, seed);
            let opts = EvolveOptions::new(1e-3, 0.2).with_diagnostics(20);
            let traj = evolve(&sys, &s, &opts, &mut NoObserver).unwrap();
            for r in &traj.diagnostics {
                prop_assert!(r.gamma_hermitian_defect < 1e-10 && r.sigma_symmetric_defect < 1e-10);
                prop_assert!(r.gamma_floor >= -1e-8 * (1.0 + r.n_gamma));
            }
        }
    }

    #[test]
    fn rk4_step_examples() {
        let sys = system(8, 0.7);
        let vac = HfbState::vacuum(8, sys.weight());
        assert_eq!(state::x0_norm(&step_rk4(&sys, &vac, 0.01).unwrap()), 0.0);
        assert!(step_rk4(&sys, &vac, 0.0).is_err());

        // local error against e^{-ih dt} shrinks like dt⁵
        let free = system(8, 0.0);
        let s = coherent(&free);
        let err = |dt: f64| {
            let exact = free_phi(&free, &s.phi, dt);
            linalg::max_abs_vec(&(step_rk4(&free, &s, dt).unwrap().phi - exact))
        };
        let ratio = err(0.02) / err(0.01);
        assert!(ratio > 28.0 && ratio < 36.0, "{ratio}");

        let mut bad = s.clone();
        bad.phi[0] = c(f64::NAN, 0.0);
        assert!(matches!(step_rk4(&free, &bad, 0.01), Err(HfbError::NumericalAbort { .. })));
    }

    #[test]
    fn evolve_examples() {
        let sys = system(8, 0.7);
        let s = random_state(&sys, 1);
        let t0 = evolve(&sys, &s, &EvolveOptions::new(1e-3, 0.0), &mut NoObserver).unwrap();
        assert_eq!(t0.states.len(), 1);
        assert_eq!(t0.times, vec![0.0]);

        let opts = EvolveOptions::new(0.01, 0.1).with_diagnostics(3);
        let mut seen = Vec::new();
        let mut obs = |step: usize, _: &HfbState, r: &DiagnosticsRecord| {
            seen.push((step, r.t));
            Ok(())
        };
        let traj = evolve(&sys, &s, &opts, &mut obs).unwrap();
        assert_eq!(seen.iter().map(|x| x.0).collect::<Vec<_>>(), vec![0, 3, 6, 9, 10]);
        assert_eq!(traj.diagnostics.len(), 5);
        assert_eq!(*traj.times.last().unwrap(), 0.1);
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));

        // deterministic
        let again = evolve(&sys, &s, &opts, &mut NoObserver).unwrap();
        assert_eq!(again.final_state(), traj.final_state());

        // the last step is shortened to land on T
        let odd = evolve(&sys, &s, &EvolveOptions::new(0.03, 0.1), &mut NoObserver).unwrap();
        assert_eq!(odd.times.len(), 5);
        assert_eq!(*odd.times.last().unwrap(), 0.1);
    }

    #[test]
    fn evolve_aborts_with_last_valid_state() {
        let sys = system(32, 0.7);
        let s = random_state(&sys, 2);
        match evolve(&sys, &s, &EvolveOptions::new(1.0, 500.0), &mut NoObserver) {
            Err(HfbError::NumericalAbort { t, last_valid }) => {
                assert!(t > 0.0);
                assert!(last_valid.is_finite());
            }
            other => panic!("expected abort, got {:?}", other.map(|t| t.times.len())),
        }
    }

    #[test]
    fn free_flow_matches_rk4() {
        let free = system(16, 0.0);
        let s = random_state(&free, 5);
        let traj = evolve(&free, &s, &EvolveOptions::new(1e-3, 0.3).with_store_stride(0), &mut NoObserver).unwrap();
        let exact = oracle::free_flow(&s, 0.3, free.one_body()).unwrap();
        let err = state::x0_distance(traj.final_state(), &exact);
        assert!(err < 1e-8, "{err}");
        // σ transforms as U σ Uᵀ; the adjoint law fails
        let u_adj = {
            let (e, v) = free.one_body_spectrum();
            let u = linalg::spectral_apply(e, v, |x| C64::from_polar(1.0, -0.3 * x));
            &u * &s.sigma * u.adjoint()
        };
        assert!(linalg::max_abs(&(u_adj - &traj.final_state().sigma)) > 1e-3);
    }

    #[test]
    fn picard_examples() {
        let free = system(8, 0.0);
        let s = random_state(&free, 6);
        let p = picard_mild(&free, &s, 0.2, 0.01, 1).unwrap();
        let exact = oracle::free_flow(&s, 0.2, free.one_body()).unwrap();
        assert!(state::x0_distance(&p.state, &exact) < 1e-12);
        assert_eq!(p.contraction, 0.0);

        let sys = system(8, 0.7);
        let s = random_state(&sys, 7);
        let near = picard_mild(&sys, &s, 1e-7, 1e-7, 3).unwrap();
        assert!(state::x0_distance(&near.state, &s) < 1e-5);
        assert!(picard_mild(&sys, &s, 0.1, 0.01, 0).is_err());

        let p = picard_mild(&sys, &s, 0.05, 1e-3, 8).unwrap();
        assert!(p.contraction < 1.0);
        let rk = evolve(&sys, &s, &EvolveOptions::new(1e-4, 0.05).with_store_stride(0), &mut NoObserver).unwrap();
        assert!(state::x0_distance(&p.state, rk.final_state()) < 1e-6);
    }

    #[test]
    fn picard_reports_non_contraction() {
        let sys = system(8, 40.0);
        let s = random_state(&sys, 8);
        let r = picard_mild(&sys, &s, 2.0, 0.05, 4);
        assert!(matches!(r, Err(HfbError::NonContraction { .. }) | Err(HfbError::NumericalAbort { .. })), "{r:?}");
    }

    #[test]
    fn bogoliubov_free_flow_is_block_diagonal() {
        let free = system(8, 0.0);
        let s = random_state(&free, 9);
        // exact stamps, so only the propagator is under test
        let times: Vec<f64> = (0..=50).map(|m| m as f64 * 0.01).collect();
        let states = times.iter().map(|&t| oracle::free_flow(&s, t, free.one_body()).unwrap()).collect();
        let traj = Trajectory { times, states, diagnostics: vec![] };
        let rep = bogoliubov_check(&free, &traj).unwrap();
        assert!(rep.symplectic_defect < 1e-10);
        assert!(rep.reconstruction_defect < 1e-10, "{}", rep.reconstruction_defect);
        let w = rep.propagator.maps.last().unwrap();
        let (e, v) = free.one_body_spectrum();
        let u = linalg::spectral_apply(e, v, |x| C64::from_polar(1.0, -0.5 * x));
        assert!(linalg::max_abs(&(w.view((0, 0), (8, 8)) - &u)) < 1e-10);
        assert!(linalg::max_abs(&(w.view((8, 8), (8, 8)) - u.map(|z| z.conj()))) < 1e-10);
        assert!(linalg::max_abs(&w.view((0, 8), (8, 8)).into_owned()) < 1e-12);
        assert_eq!(rep.propagator.maps[0], CMat::identity(16, 16));
    }

    #[test]
    fn frozen_generator_matches_exponential() {
        let sys = system(8, 0.7);
        let s = random_state(&sys, 10);
        let a = hfb_generator(&sys, &s).unwrap().operator_block();
        let maps = propagate(&vec![a.clone(); 51], 0.01);
        let exact = oracle::matrix_exponential(&(a * c(0.0, -0.5)));
        assert!(linalg::max_abs(&(maps.last().unwrap() - exact)) < 1e-10);
        let j = symplectic_form(8);
        for w in &maps {
            assert!(linalg::max_abs(&(w * &j * w.adjoint() - &j)) < 1e-10);
        }
    }

    #[test]
    fn bogoliubov_input_checks() {
        let sys = system(8, 0.7);
        let s = random_state(&sys, 11);
        let mut traj = Trajectory { times: vec![0.0], states: vec![s.clone()], diagnostics: vec![] };
        assert!(matches!(bogoliubov_check(&sys, &traj), Err(HfbError::InsufficientData(_))));
        traj.times.extend([0.1, 0.3]);
        traj.states.extend([s.clone(), s]);
        assert!(bogoliubov_check(&sys, &traj).is_err());
    }

    #[test]
    fn interacting_reconstruction() {
        let sys = system(8, 0.7);
        let s = random_state(&sys, 12);
        let traj = evolve(&sys, &s, &EvolveOptions::new(1e-3, 0.3), &mut NoObserver).unwrap();
        let rep = bogoliubov_check(&sys, &traj).unwrap();
        assert!(rep.is_consistent(1e-10, 1e-7), "{} {}", rep.symplectic_defect, rep.reconstruction_defect);
    }

    #[test]
    fn scheme_parsing() {
        assert_eq!("rk4".parse::<Scheme>().unwrap(), Scheme::Rk4);
        assert!("euler".parse::<Scheme>().is_err());
        assert_eq!(Scheme::Rk4.to_string(), "rk4");
    }
}
