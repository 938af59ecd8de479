//! Quasifree states through their truncated expectations `(φ, γ, σ)`.
//!
//! `γ` and `σ` are stored as dense kernel matrices on the grid nodes; see the
//! kernel convention in [`crate::grid`].

use std::f64::consts::PI;

use nalgebra::QR;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{HfbError, Result};
use crate::grid::TorusGrid;
use crate::linalg::{self, c, CMat, CVec, C64};

#[derive(Debug, Clone, PartialEq)]
pub struct HfbState {
    /// Quadrature weight `w` of the grid the kernels live on.
    pub weight: f64,
    pub phi: CVec,
    pub gamma: CMat,
    pub sigma: CMat,
}

impl HfbState {
    pub fn new(weight: f64, phi: CVec, gamma: CMat, sigma: CMat) -> Result<Self> {
        let n = phi.len();
        for (name, m) in [("gamma", &gamma), ("sigma", &sigma)] {
            if m.nrows() != n || m.ncols() != n {
                return Err(HfbError::InvalidArgument(format!(
                    "{name} is {}x{}, expected {n}x{n}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        if !(weight > 0.0) {
            return Err(HfbError::InvalidArgument(format!("weight {weight} must be positive")));
        }
        Ok(Self { weight, phi, gamma, sigma })
    }

    pub fn vacuum(len: usize, weight: f64) -> Self {
        Self { weight, phi: CVec::zeros(len), gamma: CMat::zeros(len, len), sigma: CMat::zeros(len, len) }
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    /// `γ^φ = γ + |φ⟩⟨φ|` as a kernel.
    pub fn gamma_phi(&self) -> CMat {
        &self.gamma + linalg::outer(&self.phi, &self.phi.map(|z| z.conj()))
    }

    /// `σ^φ = σ + |φ⟩⟨φ̄|`, kernel `σ(x,y) + φ(x)φ(y)`.
    pub fn sigma_phi(&self) -> CMat {
        &self.sigma + linalg::outer(&self.phi, &self.phi)
    }

    /// `Tr γ = w Σ_i γ[i][i]` (real part).
    pub fn trace_gamma(&self) -> f64 {
        self.weight * self.gamma.diagonal().iter().map(|z| z.re).sum::<f64>()
    }

    pub fn phi_norm_sqr(&self) -> f64 {
        self.weight * self.phi.iter().map(|z| z.norm_sqr()).sum::<f64>()
    }

    pub fn is_finite(&self) -> bool {
        linalg::all_finite_vec(&self.phi) && linalg::all_finite(&self.gamma) && linalg::all_finite(&self.sigma)
    }

    /// `self + scale * other`, component by component.
    pub fn add_scaled(&self, other: &HfbState, scale: C64) -> HfbState {
        HfbState {
            weight: self.weight,
            phi: &self.phi + other.phi.map(|z| z * scale),
            gamma: &self.gamma + other.gamma.map(|z| z * scale),
            sigma: &self.sigma + other.sigma.map(|z| z * scale),
        }
    }

    pub fn difference(&self, other: &HfbState) -> HfbState {
        HfbState {
            weight: self.weight,
            phi: &self.phi - &other.phi,
            gamma: &self.gamma - &other.gamma,
            sigma: &self.sigma - &other.sigma,
        }
    }

    /// Largest entrywise deviation over all three components.
    pub fn max_entry_difference(&self, other: &HfbState) -> f64 {
        linalg::max_abs_vec(&(&self.phi - &other.phi))
            .max(linalg::max_abs(&(&self.gamma - &other.gamma)))
            .max(linalg::max_abs(&(&self.sigma - &other.sigma)))
    }
}

/// The `2N × 2N` kernel `Γ = [[γ, σ], [σ̄, I/w + γ̄]]`.
#[derive(Debug, Clone)]
pub struct GeneralizedDensityMatrix {
    pub matrix: CMat,
    pub weight: f64,
}

impl GeneralizedDensityMatrix {
    pub fn from_state(state: &HfbState) -> Self {
        Self::from_parts(&state.gamma, &state.sigma, state.weight)
    }

    pub fn from_parts(gamma: &CMat, sigma: &CMat, weight: f64) -> Self {
        let n = gamma.nrows();
        let mut m = CMat::zeros(2 * n, 2 * n);
        m.view_mut((0, 0), (n, n)).copy_from(gamma);
        m.view_mut((0, n), (n, n)).copy_from(sigma);
        m.view_mut((n, 0), (n, n)).copy_from(&sigma.map(|z| z.conj()));
        let lower = gamma.map(|z| z.conj()) + CMat::identity(n, n).scale(1.0 / weight);
        m.view_mut((n, n), (n, n)).copy_from(&lower);
        Self { matrix: m, weight }
    }

    /// Smallest eigenvalue of the operator `wΓ` (Hermitian part), whose
    /// identity block is `I`; independent of the resolution.
    pub fn min_eigenvalue(&self) -> f64 {
        self.weight * linalg::min_eigenvalue(&self.matrix)
    }
}

/// PSD floor used throughout: eigenvalues down to `-1e-10 (1 + Tr γ)` count as non-negative.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Floor for states produced by time stepping, which carry integrator error.
pub const EVOLVED_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct ValidityReport {
    pub gamma_hermitian_defect: f64,
    pub sigma_symmetric_defect: f64,
    pub gamma_min_eigenvalue: f64,
    pub big_gamma_min_eigenvalue: f64,
    pub finite: bool,
    pub tolerance: f64,
    pub trace_gamma: f64,
}

impl ValidityReport {
    pub fn violations(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        if !self.finite {
            out.push(("non-finite entries".to_string(), f64::NAN));
        }
        if self.gamma_hermitian_defect > self.tolerance {
            out.push(("gamma not Hermitian".to_string(), self.gamma_hermitian_defect));
        }
        if self.sigma_symmetric_defect > self.tolerance {
            out.push(("sigma not symmetric".to_string(), self.sigma_symmetric_defect));
        }
        let floor = -self.tolerance * (1.0 + self.trace_gamma.abs());
        if self.gamma_min_eigenvalue < floor {
            out.push(("gamma not positive".to_string(), self.gamma_min_eigenvalue));
        }
        if self.big_gamma_min_eigenvalue < floor {
            out.push(("generalized density matrix not positive".to_string(), self.big_gamma_min_eigenvalue));
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.violations().is_empty()
    }
}

/// `validate`: symmetry defects and eigenvalue floors of `γ` and `Γ`.
pub fn validate(state: &HfbState, tol: f64) -> ValidityReport {
    ValidityReport {
        gamma_hermitian_defect: linalg::hermitian_defect(&state.gamma),
        sigma_symmetric_defect: linalg::symmetric_defect(&state.sigma),
        gamma_min_eigenvalue: state.weight * linalg::min_eigenvalue(&state.gamma),
        big_gamma_min_eigenvalue: GeneralizedDensityMatrix::from_state(state).min_eigenvalue(),
        finite: state.is_finite(),
        tolerance: tol,
        trace_gamma: state.trace_gamma(),
    }
}

/// Pure condensate `(φ, 0, 0)`.
pub fn coherent_state(grid: &TorusGrid, phi: &[C64]) -> Result<HfbState> {
    if phi.len() != grid.len() {
        return Err(HfbError::SizeMismatch { expected: grid.len(), actual: phi.len() });
    }
    let n = phi.len();
    Ok(HfbState {
        weight: grid.weight(),
        phi: CVec::from_column_slice(phi),
        gamma: CMat::zeros(n, n),
        sigma: CMat::zeros(n, n),
    })
}

/// Single-mode squeezing `r_a e^{iθ_a}` applied mode by mode.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SqueezeParams {
    pub r: Vec<f64>,
    pub theta: Vec<f64>,
}

impl SqueezeParams {
    pub fn none() -> Self {
        Self::default()
    }

    fn get(&self, a: usize) -> (f64, f64) {
        (self.r.get(a).copied().unwrap_or(0.0), self.theta.get(a).copied().unwrap_or(0.0))
    }
}

/// Builds `(γ, σ)` kernels from a diagonal mode description.
///
/// `basis` holds orthonormal columns (Euclidean, i.e. operator normalisation).
/// Mode `a` carries thermal occupation `n_a` and is squeezed by the symplectic
/// map `[[cosh r, e^{iθ} sinh r], [e^{-iθ} sinh r, cosh r]]`, which gives
/// `γ_a = n cosh 2r + sinh² r` and `σ_a = e^{iθ} sinh r cosh r (2n + 1)`.
/// Embedding through `U ⊕ Ū` with `U = basis` is itself symplectic.
pub fn mode_state(basis: &CMat, occupations: &[f64], squeeze: &SqueezeParams, weight: f64) -> (CMat, CMat) {
    let k = basis.ncols();
    let mut g = CVec::zeros(k);
    let mut s = CVec::zeros(k);
    for a in 0..k {
        let n = occupations.get(a).copied().unwrap_or(0.0);
        let (r, theta) = squeeze.get(a);
        g[a] = c(n * (2.0 * r).cosh() + r.sinh().powi(2), 0.0);
        s[a] = C64::from_polar(r.sinh() * r.cosh() * (2.0 * n + 1.0), theta);
    }
    let mut bg = basis.clone();
    let mut bs = basis.clone();
    for a in 0..k {
        bg.column_mut(a).iter_mut().for_each(|z| *z *= g[a]);
        bs.column_mut(a).iter_mut().for_each(|z| *z *= s[a]);
    }
    let gamma_op = &bg * basis.adjoint();
    let sigma_op = &bs * basis.transpose();
    let inv_w = 1.0 / weight;
    let gamma = linalg::hermitize(&gamma_op).scale(inv_w);
    let sigma = (&sigma_op + sigma_op.transpose()).scale(0.5 * inv_w);
    (gamma, sigma)
}

/// `squeezed_thermal_state`: thermal `γ = (e^{β(h-μ)} - 1)^{-1}` in the
/// eigenbasis of the one-body kernel `h` (ascending), then squeezed mode by mode.
pub fn squeezed_thermal_state(
    weight: f64,
    phi: CVec,
    h_kernel: &CMat,
    beta: f64,
    mu: f64,
    squeeze: &SqueezeParams,
) -> Result<HfbState> {
    if !(beta > 0.0) {
        return Err(HfbError::InvalidArgument(format!("inverse temperature {beta} must be positive")));
    }
    let scale = linalg::max_abs(h_kernel).max(1.0);
    if linalg::hermitian_defect(h_kernel) > 1e-10 * scale {
        return Err(HfbError::InvalidArgument("one-body kernel is not Hermitian".into()));
    }
    let h_op = h_kernel.scale(weight);
    let (energies, basis) = linalg::eigh(&h_op);
    let mut occupations = Vec::with_capacity(energies.len());
    for &e in &energies {
        let denom = (beta * (e - mu)).exp_m1();
        if !(denom > 0.0) {
            return Err(HfbError::InvalidArgument(format!(
                "mode energy {e} - mu {mu} gives non-positive e^(beta eps) - 1"
            )));
        }
        occupations.push(1.0 / denom);
    }
    let (gamma, sigma) = mode_state(&basis, &occupations, squeeze, weight);
    HfbState::new(weight, phi, gamma, sigma)
}

/// Orthonormal plane waves `e^{ik·x} / √N` with every `|m_a| ≤ band`, as columns.
pub fn plane_wave_basis(grid: &TorusGrid, band: usize) -> CMat {
    let band = band as i64;
    let n = grid.len();
    let modes: Vec<usize> = (0..n)
        .filter(|&i| grid.modes(i).iter().all(|m| m.abs() <= band))
        .collect();
    let norm = 1.0 / (n as f64).sqrt();
    CMat::from_fn(n, modes.len(), |i, col| {
        let x = grid.node(i);
        let k = grid.wavevector(modes[col]);
        C64::from_polar(norm, k[0] * x[0] + k[1] * x[1] + k[2] * x[2])
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomStateOptions {
    /// Largest `|m|` per axis of the plane waves the state is built from.
    pub band: usize,
    /// `‖φ‖` of the condensate.
    pub phi_norm: f64,
    /// Occupations are uniform in `[0, max_occupation)`.
    pub max_occupation: f64,
    /// Squeezing parameters are uniform in `[0, max_squeeze)`.
    pub max_squeeze: f64,
}

impl Default for RandomStateOptions {
    fn default() -> Self {
        Self { band: 2, phi_norm: 1.0, max_occupation: 0.3, max_squeeze: 0.3 }
    }
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Haar-ish random unitary from the QR factor of a complex Gaussian matrix.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, k: usize) -> CMat {
    let g = CMat::from_fn(k, k, |_, _| complex_normal(rng));
    QR::new(g).q()
}

/// Random admissible state band-limited to `|m_a| ≤ band`: random occupations
/// and squeezing on a randomly rotated plane-wave basis, plus a random `φ`.
pub fn random_valid_state<R: Rng + ?Sized>(grid: &TorusGrid, rng: &mut R, opts: &RandomStateOptions) -> HfbState {
    let waves = plane_wave_basis(grid, opts.band);
    let k = waves.ncols();
    let basis = &waves * random_unitary(rng, k);
    let occupations: Vec<f64> = (0..k).map(|_| opts.max_occupation * rng.random::<f64>()).collect();
    let squeeze = SqueezeParams {
        r: (0..k).map(|_| opts.max_squeeze * rng.random::<f64>()).collect(),
        theta: (0..k).map(|_| 2.0 * PI * rng.random::<f64>()).collect(),
    };
    let w = grid.weight();
    let (gamma, sigma) = mode_state(&basis, &occupations, &squeeze, w);
    let coeffs = CVec::from_fn(k, |_, _| complex_normal(rng));
    let mut phi = &waves * coeffs;
    let norm = (w * phi.iter().map(|z| z.norm_sqr()).sum::<f64>()).sqrt();
    if norm > 0.0 {
        phi.scale_mut(opts.phi_norm / norm);
    }
    HfbState { weight: w, phi, gamma, sigma }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XjNorm {
    pub j: u32,
    pub value: f64,
}

/// `‖M^jφ‖ + ‖M^jγM^j‖_tr + ‖M^jσ‖_HS + ‖σM^j‖_HS` in weighted discrete norms.
///
/// `sobolev` is the operator matrix of `M` (not a kernel).
pub fn xj_norm(state: &HfbState, sobolev: &CMat, j: u32) -> Result<XjNorm> {
    if j > 3 {
        return Err(HfbError::InvalidArgument(format!("X^j order {j} not in 0..=3")));
    }
    let n = state.len();
    let mut mj = CMat::identity(n, n);
    for _ in 0..j {
        mj = &mj * sobolev;
    }
    let w = state.weight;
    let phi_part = (w * (&mj * &state.phi).iter().map(|z| z.norm_sqr()).sum::<f64>()).sqrt();
    let gamma_part = w * linalg::nuclear_norm(&(&mj * &state.gamma * &mj));
    let left = w * linalg::frobenius(&(&mj * &state.sigma));
    let right = w * linalg::frobenius(&(&state.sigma * &mj));
    Ok(XjNorm { j, value: phi_part + gamma_part + left + right })
}

/// `‖φ‖ + ‖γ‖_tr + 2‖σ‖_HS`; the metric used for all state comparisons.
pub fn x0_norm(state: &HfbState) -> f64 {
    let w = state.weight;
    w.sqrt() * state.phi.norm() + w * linalg::nuclear_norm(&state.gamma) + 2.0 * w * linalg::frobenius(&state.sigma)
}

pub fn x0_distance(a: &HfbState, b: &HfbState) -> f64 {
    x0_norm(&a.difference(b))
}

/// `(e^{iθ}φ, γ, e^{2iθ}σ)`
pub fn gauge_transform(state: &HfbState, theta: f64) -> HfbState {
    let u = C64::from_polar(1.0, theta);
    let u2 = C64::from_polar(1.0, 2.0 * theta);
    HfbState {
        weight: state.weight,
        phi: state.phi.map(|z| z * u),
        gamma: state.gamma.clone(),
        sigma: state.sigma.map(|z| z * u2),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{sample_field, FieldSpec, MultiplierOperator};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid() -> TorusGrid {
        TorusGrid::new(1, 2.0 * PI, 8).unwrap()
    }

    #[test]
    fn vacuum_is_valid_with_known_floors() {
        let g = grid();
        let s = HfbState::vacuum(g.len(), g.weight());
        let r = validate(&s, 0.0);
        assert!(r.is_valid(), "{:?}", r.violations());
        assert!(r.big_gamma_min_eigenvalue.abs() < 1e-14);
        let eig = linalg::eigvalsh(&GeneralizedDensityMatrix::from_state(&s).matrix);
        assert!((eig[eig.len() - 1] - 1.0 / g.weight()).abs() < 1e-12);
    }

    #[test]
    fn diagonal_gamma_is_valid_and_asymmetric_sigma_is_flagged() {
        let g = grid();
        let n = g.len();
        let mut s = HfbState::vacuum(n, g.weight());
        s.gamma = CMat::identity(n, n);
        assert!(validate(&s, 1e-10).is_valid());

        s.sigma[(0, 1)] = c(0.1, 0.0);
        let r = validate(&s, 1e-10);
        assert!((r.sigma_symmetric_defect - 0.1).abs() < 1e-15);
        assert!(r.violations().iter().any(|(name, _)| name.contains("symmetric")));
    }

    #[test]
    fn coherent_state_examples() {
        let g = grid();
        let zero = coherent_state(&g, &[C64::default(); 8]).unwrap();
        assert_eq!(zero, HfbState::vacuum(8, g.weight()));

        let wave = sample_field(&g, &FieldSpec::PlaneWave { amplitude: 0.5, mode: [2, 0, 0] }).unwrap();
        let s = coherent_state(&g, &wave).unwrap();
        assert!((s.phi_norm_sqr() - 0.25 * 2.0 * PI).abs() < 1e-13);
        assert!(validate(&s, 0.0).is_valid());

        assert!(matches!(coherent_state(&g, &[C64::default(); 3]), Err(HfbError::SizeMismatch { .. })));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let phi: Vec<C64> = (0..8).map(|_| complex_normal(&mut rng)).collect();
        let s = coherent_state(&g, &phi).unwrap();
        assert!(GeneralizedDensityMatrix::from_state(&s).min_eigenvalue() > -1e-12);
    }

    fn free_h(g: &TorusGrid) -> CMat {
        let lap = MultiplierOperator::laplacian(g).to_matrix();
        (-lap + CMat::identity(g.len(), g.len())).scale(1.0 / g.weight())
    }

    #[test]
    fn thermal_examples() {
        let g = grid();
        let h = free_h(&g);
        let cold = squeezed_thermal_state(g.weight(), CVec::zeros(8), &h, 60.0, 0.0, &SqueezeParams::none()).unwrap();
        assert!(linalg::max_abs(&cold.gamma) < 1e-20);

        // lowest mode is the constant with energy 1
        let beta = 0.7;
        let s = squeezed_thermal_state(g.weight(), CVec::zeros(8), &h, beta, 0.0, &SqueezeParams::none()).unwrap();
        let u = CVec::from_element(8, c(1.0 / (8.0f64).sqrt(), 0.0));
        let occ = (u.adjoint() * s.gamma.scale(g.weight()) * &u)[(0, 0)];
        assert!((occ.re - 1.0 / (beta.exp() - 1.0)).abs() < 1e-12);
        assert!(validate(&s, 1e-10).is_valid());
    }

    #[test]
    fn thermal_errors() {
        let g = grid();
        let h = free_h(&g);
        let z = CVec::zeros(8);
        let none = SqueezeParams::none();
        assert!(squeezed_thermal_state(g.weight(), z.clone(), &h, 0.0, 0.0, &none).is_err());
        assert!(squeezed_thermal_state(g.weight(), z.clone(), &h, 1.0, 1.5, &none).is_err());
        let mut bad = h.clone();
        bad[(0, 1)] += c(0.0, 1.0);
        assert!(squeezed_thermal_state(g.weight(), z, &bad, 1.0, 0.0, &none).is_err());
    }

    #[test]
    fn squeezed_thermal_is_admissible() {
        let g = grid();
        let h = free_h(&g);
        let sq = SqueezeParams { r: vec![0.8, 0.4, 0.3, 1.1], theta: vec![0.3, 1.0, -2.0, 0.0] };
        let s = squeezed_thermal_state(g.weight(), CVec::zeros(8), &h, 1.3, 0.2, &sq).unwrap();
        let floor = GeneralizedDensityMatrix::from_state(&s).min_eigenvalue();
        assert!(floor >= -1e-10, "{floor}");
        assert!(linalg::max_abs(&s.sigma) > 0.1);
        assert!(validate(&s, 1e-10).is_valid());
    }

    #[test]
    fn xj_norm_examples() {
        let g = grid();
        let m = MultiplierOperator::sobolev(&g, 1.0).to_matrix();
        let vac = HfbState::vacuum(8, g.weight());
        assert_eq!(xj_norm(&vac, &m, 2).unwrap().value, 0.0);
        assert!(xj_norm(&vac, &m, 4).is_err());

        let amp = 1.0 / (2.0 * PI).sqrt();
        let wave = sample_field(&g, &FieldSpec::PlaneWave { amplitude: amp, mode: [3, 0, 0] }).unwrap();
        let s = coherent_state(&g, &wave).unwrap();
        assert!((xj_norm(&s, &m, 1).unwrap().value - 10f64.sqrt()).abs() < 1e-12);

        // rank-one γ = |u⟩⟨u| contributes ‖M^j u‖²
        let u = sample_field(&g, &FieldSpec::Cosine { amplitude: 0.4, mode: [2, 0, 0] }).unwrap();
        let u = CVec::from_vec(u);
        let mut s = HfbState::vacuum(8, g.weight());
        s.gamma = linalg::outer(&u, &u.map(|z| z.conj()));
        let mu = &m * &m * &u;
        let direct = g.weight() * mu.iter().map(|z| z.norm_sqr()).sum::<f64>();
        assert!((xj_norm(&s, &m, 2).unwrap().value - direct).abs() < 1e-12 * direct);
    }

    #[test]
    fn x0_reduces_to_trace_for_positive_gamma() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = random_valid_state(&g, &mut rng, &RandomStateOptions::default());
        let m = MultiplierOperator::sobolev(&g, 1.0).to_matrix();
        let expected = s.phi_norm_sqr().sqrt() + s.trace_gamma() + 2.0 * g.weight() * linalg::frobenius(&s.sigma);
        assert!((xj_norm(&s, &m, 0).unwrap().value - expected).abs() < 1e-12);
        assert!((x0_norm(&s) - expected).abs() < 1e-12);
    }

    #[test]
    fn gauge_examples() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = random_valid_state(&g, &mut rng, &RandomStateOptions::default());
        assert_eq!(gauge_transform(&s, 0.0), s);
        let pi = gauge_transform(&s, PI);
        assert!(linalg::max_abs_vec(&(&pi.phi + &s.phi)) < 1e-15);
        assert!(linalg::max_abs(&(&pi.sigma - &s.sigma)) < 1e-15);
        let half = gauge_transform(&s, PI / 2.0);
        assert!(linalg::max_abs_vec(&(&half.phi - s.phi.map(|z| z * linalg::I))) < 1e-15);
        assert!(linalg::max_abs(&(&half.sigma + &s.sigma)) < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn random_states_are_valid(seed in any::<u64>(), band in 0usize..4) {
            let g = TorusGrid::new(1, 3.0, 8).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let opts = RandomStateOptions { band, max_squeeze: 0.8, ..Default::default() };
            let s = random_valid_state(&g, &mut rng, &opts);
            let r = validate(&s, 1e-10);
            prop_assert!(r.is_valid(), "{:?}", r.violations());
        }

        #[test]
        fn gamma_floor_sanity_bound(seed in any::<u64>()) {
            let g = TorusGrid::new(1, 3.0, 8).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_valid_state(&g, &mut rng, &RandomStateOptions { band: 3, ..Default::default() });
            let block_floor = linalg::min_eigenvalue(&s.gamma)
                .min(linalg::min_eigenvalue(&(s.gamma.map(|z| z.conj()) + CMat::identity(8, 8).scale(1.0 / g.weight()))));
            let sigma_op = s.sigma.clone().singular_values().max();
            let floor = GeneralizedDensityMatrix::from_state(&s).min_eigenvalue();
            prop_assert!(floor >= g.weight() * (block_floor - sigma_op) - 1e-12);
        }

        #[test]
        fn x0_bounded_by_higher_orders(seed in any::<u64>(), j in 1u32..4) {
            let g = TorusGrid::new(1, 2.0, 8).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_valid_state(&g, &mut rng, &RandomStateOptions { band: 3, ..Default::default() });
            let m = MultiplierOperator::sobolev(&g, 1.0).to_matrix();
            prop_assert!(xj_norm(&s, &m, 0).unwrap().value <= xj_norm(&s, &m, j).unwrap().value + 1e-12);
        }

        #[test]
        fn gauge_composes(seed in any::<u64>(), a in -3.0..3.0f64, b in -3.0..3.0f64) {
            let g = TorusGrid::new(1, 2.0, 4).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_valid_state(&g, &mut rng, &RandomStateOptions::default());
            let two = gauge_transform(&gauge_transform(&s, a), b);
            let one = gauge_transform(&s, a + b);
            prop_assert!(two.max_entry_difference(&one) < 1e-14);
        }
    }
}
