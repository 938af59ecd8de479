//! Mean-field coefficients of the HFB flow: density, direct and exchange
//! terms, `h(γ)`, the pairing field `k(σ)`, and the Bogoliubov block generator.

use std::sync::OnceLock;

use crate::error::{HfbError, Result};
use crate::grid::{MultiplierOperator, PairKernel, TorusGrid};
use crate::linalg::{self, c, CMat, RMat};
use crate::state::HfbState;

/// Everything the right-hand side needs besides the state: the one-body
/// Hamiltonian `h = -Δ + V` as a kernel, the pair potential on node pairs and
/// the Sobolev weight `M` as an operator matrix.
#[derive(Debug, Clone)]
pub struct HfbSystem {
    weight: f64,
    kinetic: CMat,
    potential: Vec<f64>,
    one_body: CMat,
    pair: RMat,
    convolution: Option<PairKernel>,
    grid: Option<TorusGrid>,
    sobolev: CMat,
    spectrum: OnceLock<(Vec<f64>, CMat)>,
}

impl HfbSystem {
    /// Spectral discretisation on a torus grid.
    pub fn new(grid: &TorusGrid, potential: Vec<f64>, pair: PairKernel) -> Result<Self> {
        if potential.len() != grid.len() {
            return Err(HfbError::SizeMismatch { expected: grid.len(), actual: potential.len() });
        }
        if pair.grid() != grid {
            return Err(HfbError::InvalidArgument("pair kernel sampled on a different grid".into()));
        }
        let w = grid.weight();
        let neg_lap = -MultiplierOperator::laplacian(grid).to_matrix();
        let kinetic = linalg::hermitize(&neg_lap).scale(1.0 / w);
        let sobolev = linalg::hermitize(&MultiplierOperator::sobolev(grid, 1.0).to_matrix());
        let mut sys = Self::assemble(w, kinetic, potential, pair.matrix().clone(), sobolev);
        sys.convolution = Some(pair);
        sys.grid = Some(grid.clone());
        Ok(sys)
    }

    /// Grid-free model from explicit kernels; `M` is `√(1 + w·kinetic)`.
    pub fn from_matrices(weight: f64, kinetic: CMat, potential: Vec<f64>, pair: RMat) -> Result<Self> {
        let n = potential.len();
        if kinetic.shape() != (n, n) || pair.shape() != (n, n) {
            return Err(HfbError::InvalidArgument("kernel shapes do not match the potential".into()));
        }
        if !(weight > 0.0) {
            return Err(HfbError::InvalidArgument(format!("weight {weight} must be positive")));
        }
        let sobolev = linalg::hermitian_function(&kinetic.scale(weight), |l| c((1.0 + l).max(0.0).sqrt(), 0.0));
        Ok(Self::assemble(weight, kinetic, potential, pair, sobolev))
    }

    fn assemble(weight: f64, kinetic: CMat, potential: Vec<f64>, pair: RMat, sobolev: CMat) -> Self {
        let mut one_body = kinetic.clone();
        for (i, v) in potential.iter().enumerate() {
            one_body[(i, i)] += c(v / weight, 0.0);
        }
        Self {
            weight,
            kinetic,
            potential,
            one_body,
            pair,
            convolution: None,
            grid: None,
            sobolev,
            spectrum: OnceLock::new(),
        }
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn len(&self) -> usize {
        self.potential.len()
    }

    pub fn is_empty(&self) -> bool {
        self.potential.is_empty()
    }

    pub fn grid(&self) -> Option<&TorusGrid> {
        self.grid.as_ref()
    }

    /// Kernel of `-Δ`.
    pub fn kinetic(&self) -> &CMat {
        &self.kinetic
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    /// Kernel of `h = -Δ + V`.
    pub fn one_body(&self) -> &CMat {
        &self.one_body
    }

    /// `v(x_i - x_j)`
    pub fn pair(&self) -> &RMat {
        &self.pair
    }

    pub fn is_free(&self) -> bool {
        self.pair.iter().all(|&v| v == 0.0)
    }

    /// Operator matrix of `M = √(1 - Δ)`.
    pub fn sobolev(&self) -> &CMat {
        &self.sobolev
    }

    /// Eigenpairs of the operator matrix `w h`, ascending.
    pub fn one_body_spectrum(&self) -> &(Vec<f64>, CMat) {
        self.spectrum.get_or_init(|| linalg::eigh(&self.one_body.scale(self.weight)))
    }

    pub fn validate_shape(&self, state: &HfbState) -> Result<()> {
        if state.len() != self.len() {
            return Err(HfbError::SizeMismatch { expected: self.len(), actual: state.len() });
        }
        Ok(())
    }
}

/// Imaginary parts of a density above this, relative to `1 + max|γ_ij|`,
/// mean the kernel was not Hermitian.
pub const DENSITY_IMAGINARY_LIMIT: f64 = 1e-8;

/// `d(γ)(x_i) = γ[i][i]`
pub fn density(gamma: &CMat) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(gamma.nrows());
    let limit = DENSITY_IMAGINARY_LIMIT * (1.0 + linalg::max_abs(gamma));
    for i in 0..gamma.nrows() {
        let z = gamma[(i, i)];
        if z.im.abs() > limit {
            return Err(HfbError::CorruptedState(format!("density has imaginary part {:e} at node {i}", z.im)));
        }
        out.push(z.re);
    }
    Ok(out)
}

/// `(v * d(γ))(x_i) = w Σ_j v(x_i - x_j) γ[j][j]`, by FFT on a grid.
pub fn direct_potential(system: &HfbSystem, gamma: &CMat) -> Result<Vec<f64>> {
    if gamma.nrows() != system.len() {
        return Err(HfbError::SizeMismatch { expected: system.len(), actual: gamma.nrows() });
    }
    let d = density(gamma)?;
    match &system.convolution {
        Some(pair) => pair.convolve(&d),
        None => {
            let w = system.weight;
            Ok((0..d.len()).map(|i| w * (0..d.len()).map(|j| system.pair[(i, j)] * d[j]).sum::<f64>()).collect())
        }
    }
}

/// `(v ♯ α)(x, y) = v(x - y) α(x, y)`
pub fn exchange(pair: &RMat, alpha: &CMat) -> CMat {
    linalg::hadamard_real(alpha, pair)
}

/// `b[α] = v * d(α) + v ♯ α` as a kernel.
pub fn interaction(system: &HfbSystem, alpha: &CMat) -> Result<CMat> {
    let direct = direct_potential(system, alpha)?;
    let mut b = exchange(&system.pair, alpha);
    let inv_w = 1.0 / system.weight;
    for (i, v) in direct.iter().enumerate() {
        b[(i, i)] += c(v * inv_w, 0.0);
    }
    Ok(b)
}

/// `h(γ) = -Δ + V + v * d(γ) + v ♯ γ`
pub fn mean_field_h(system: &HfbSystem, gamma: &CMat) -> Result<CMat> {
    Ok(system.one_body() + interaction(system, gamma)?)
}

/// `k(σ) = v ♯ σ`
pub fn pairing_k(pair: &RMat, sigma: &CMat) -> CMat {
    exchange(pair, sigma)
}

/// Coefficients of the quadratic HFB Hamiltonian at a state.
#[derive(Debug, Clone)]
pub struct HfbGenerator {
    pub weight: f64,
    /// `h(γ^φ)`
    pub h_eff: CMat,
    /// `k(σ^φ)`
    pub k_eff: CMat,
}

impl HfbGenerator {
    /// `[[h, k], [-k̄, -h̄]]` as a kernel.
    pub fn block(&self) -> CMat {
        let n = self.h_eff.nrows();
        let mut a = CMat::zeros(2 * n, 2 * n);
        a.view_mut((0, 0), (n, n)).copy_from(&self.h_eff);
        a.view_mut((0, n), (n, n)).copy_from(&self.k_eff);
        a.view_mut((n, 0), (n, n)).copy_from(&-self.k_eff.map(|z| z.conj()));
        a.view_mut((n, n), (n, n)).copy_from(&-self.h_eff.map(|z| z.conj()));
        a
    }

    /// Operator matrix `w 𝒜` driving `i dW/dt = w𝒜 W`.
    pub fn operator_block(&self) -> CMat {
        self.block().scale(self.weight)
    }
}

/// `J = diag(I, -I)`
pub fn symplectic_form(n: usize) -> CMat {
    let mut j = CMat::identity(2 * n, 2 * n);
    for i in n..2 * n {
        j[(i, i)] = c(-1.0, 0.0);
    }
    j
}

/// `hfb_generator`: `h(γ^φ)` and `k(σ^φ)`.
pub fn hfb_generator(system: &HfbSystem, state: &HfbState) -> Result<HfbGenerator> {
    system.validate_shape(state)?;
    Ok(HfbGenerator {
        weight: system.weight,
        h_eff: mean_field_h(system, &state.gamma_phi())?,
        k_eff: pairing_k(&system.pair, &state.sigma_phi()),
    })
}

/// `‖M k[σ]‖_HS / (‖Mσ‖_HS + ‖σM‖_HS)`; `sobolev` is the operator matrix of `M`.
pub fn k_estimate_ratio(pair: &RMat, sigma: &CMat, sobolev: &CMat) -> Result<f64> {
    let denom = linalg::frobenius(&(sobolev * sigma)) + linalg::frobenius(&(sigma * sobolev));
    if denom == 0.0 {
        return Err(HfbError::InvalidArgument("k-estimate ratio needs a non-zero sigma".into()));
    }
    // the common factor w of the HS norms cancels
    Ok(linalg::frobenius(&(sobolev * pairing_k(pair, sigma))) / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{pair_kernel, sample_field, sample_real_field, FieldSpec};
    use crate::linalg::{CVec, C64};
    use crate::state::{coherent_state, random_valid_state, RandomStateOptions};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn gaussian() -> FieldSpec {
        FieldSpec::Gaussian { amplitude: 0.5, width: 0.3, center: [0.0; 3] }
    }

    fn system(n: usize, v: &FieldSpec, pot: &FieldSpec) -> HfbSystem {
        let g = TorusGrid::new(1, 2.0 * PI, n).unwrap();
        let pot = sample_real_field(&g, pot).unwrap();
        HfbSystem::new(&g, pot, pair_kernel(&g, v).unwrap()).unwrap()
    }

    fn random_state(sys: &HfbSystem, seed: u64) -> HfbState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let opts = RandomStateOptions { band: 4, ..Default::default() };
        random_valid_state(sys.grid().unwrap(), &mut rng, &opts)
    }

    #[test]
    fn density_examples() {
        assert_eq!(density(&CMat::zeros(4, 4)).unwrap(), vec![0.0; 4]);
        let u = CVec::from_vec(vec![c(1.0, 1.0), c(0.0, 2.0), c(-0.5, 0.0)]);
        let d = density(&linalg::outer(&u, &u.map(|z| z.conj()))).unwrap();
        assert_eq!(d, vec![2.0, 4.0, 0.25]);
        let mut bad = CMat::zeros(2, 2);
        bad[(1, 1)] = c(0.0, 1e-6);
        assert!(matches!(density(&bad), Err(HfbError::CorruptedState(_))));
    }

    #[test]
    fn thermal_density_is_occupation_weighted_mode_sum() {
        let sys = system(8, &gaussian(), &FieldSpec::Constant { value: 1.0 });
        let w = sys.weight();
        let s = crate::state::squeezed_thermal_state(
            w,
            CVec::zeros(8),
            sys.one_body(),
            0.5,
            0.0,
            &crate::state::SqueezeParams::none(),
        )
        .unwrap();
        let (energies, modes) = sys.one_body_spectrum();
        let d = density(&s.gamma).unwrap();
        for i in 0..8 {
            let expected: f64 = (0..8)
                .map(|a| modes[(i, a)].norm_sqr() / (0.5 * energies[a]).exp_m1() / w)
                .sum();
            assert!((d[i] - expected).abs() < 1e-12 * expected.abs().max(1.0));
        }
    }

    #[test]
    fn direct_potential_examples() {
        let sys = system(16, &FieldSpec::Constant { value: 0.8 }, &FieldSpec::Constant { value: 0.0 });
        assert!(direct_potential(&sys, &CMat::zeros(16, 16)).unwrap().iter().all(|&x| x.abs() < 1e-15));
        let s = random_state(&sys, 1);
        let tr = s.trace_gamma();
        for x in direct_potential(&sys, &s.gamma).unwrap() {
            assert!((x - 0.8 * tr).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn direct_potential_fft_matches_quadrature(seed in any::<u64>()) {
            let sys = system(16, &gaussian(), &FieldSpec::Constant { value: 0.0 });
            let s = random_state(&sys, seed);
            let fast = direct_potential(&sys, &s.gamma).unwrap();
            let g = sys.grid().unwrap();
            let w = g.weight();
            for (i, f) in fast.iter().enumerate() {
                // direct O(N²) sum with independently evaluated v(x_i - x_j)
                let xi = g.node(i)[0];
                let dense: f64 = (0..16).map(|j| {
                    let r = xi - g.node(j)[0];
                    let v: f64 = (-3..=3).map(|p| {
                        let y = r + p as f64 * 2.0 * PI;
                        0.5 * (-(y * y) / 0.18).exp()
                    }).sum();
                    w * v * s.gamma[(j, j)].re
                }).sum();
                prop_assert!((f - dense).abs() <= 1e-10 * dense.abs().max(1e-3));
            }
        }

        #[test]
        fn mean_field_preserves_structure(seed in any::<u64>()) {
            let sys = system(16, &gaussian(), &FieldSpec::Cosine { amplitude: 0.3, mode: [1, 0, 0] });
            let s = random_state(&sys, seed);
            let h = mean_field_h(&sys, &s.gamma_phi()).unwrap();
            prop_assert!(linalg::hermitian_defect(&h) < 1e-12);
            let k = pairing_k(sys.pair(), &s.sigma_phi());
            prop_assert!(linalg::symmetric_defect(&k) < 1e-12);
        }

        #[test]
        fn generator_is_bogoliubov_hamiltonian(seed in any::<u64>()) {
            let sys = system(8, &gaussian(), &FieldSpec::Constant { value: 0.2 });
            let s = random_state(&sys, seed);
            let a = hfb_generator(&sys, &s).unwrap().operator_block();
            let j = symplectic_form(8);
            // J 𝒜 J = 𝒜^†, i.e. -i𝒜 is J-skew
            prop_assert!(linalg::max_abs(&(&j * &a * &j - a.adjoint())) < 1e-11);
        }
    }

    #[test]
    fn exchange_examples() {
        let sys = system(8, &FieldSpec::Constant { value: 1.5 }, &FieldSpec::Constant { value: 0.0 });
        assert_eq!(exchange(sys.pair(), &CMat::zeros(8, 8)), CMat::zeros(8, 8));
        let s = random_state(&sys, 2);
        assert!(linalg::max_abs(&(exchange(sys.pair(), &s.gamma) - s.gamma.scale(1.5))) < 1e-15);
        let g = system(8, &gaussian(), &FieldSpec::Constant { value: 0.0 });
        assert!(linalg::symmetric_defect(&pairing_k(g.pair(), &s.sigma)) < 1e-15);
        assert!(linalg::max_abs(&(pairing_k(sys.pair(), &s.sigma) - s.sigma.scale(1.5))) < 1e-15);
    }

    #[test]
    fn mean_field_h_examples() {
        let free = system(8, &FieldSpec::Constant { value: 0.0 }, &FieldSpec::Constant { value: 0.0 });
        let h0 = mean_field_h(&free, &CMat::zeros(8, 8)).unwrap();
        assert!(linalg::max_abs(&(h0 - free.kinetic())) < 1e-15);
        let s = random_state(&free, 3);
        assert_eq!(mean_field_h(&free, &s.gamma).unwrap(), *free.one_body());

        // h(0) on a plane wave equals |k|² + V applied pointwise
        let sys = system(16, &gaussian(), &FieldSpec::Cosine { amplitude: 0.7, mode: [2, 0, 0] });
        let g = sys.grid().unwrap().clone();
        let wave = CVec::from_vec(sample_field(&g, &FieldSpec::PlaneWave { amplitude: 1.0, mode: [3, 0, 0] }).unwrap());
        let hk = mean_field_h(&sys, &CMat::zeros(16, 16)).unwrap();
        let out = hk.scale(g.weight()) * &wave;
        let lap = MultiplierOperator::laplacian(&g).apply(wave.as_slice()).unwrap();
        for i in 0..16 {
            let expected = -lap[i] + wave[i] * sys.potential()[i];
            assert!((out[i] - expected).norm() < 1e-12);
            assert!((out[i] - wave[i] * (9.0 + sys.potential()[i])).norm() < 1e-12);
        }
    }

    #[test]
    fn generator_examples() {
        let sys = system(8, &gaussian(), &FieldSpec::Constant { value: 0.0 });
        let vac = HfbState::vacuum(8, sys.weight());
        let gen = hfb_generator(&sys, &vac).unwrap();
        assert_eq!(gen.h_eff, *sys.one_body());
        assert_eq!(gen.k_eff, CMat::zeros(8, 8));

        // coherent state, assembled entry by entry from the definitions
        let g = sys.grid().unwrap().clone();
        let phi: Vec<C64> = (0..8).map(|i| c((i as f64).cos(), 0.3 * i as f64)).collect();
        let s = coherent_state(&g, &phi).unwrap();
        let gen = hfb_generator(&sys, &s).unwrap();
        let w = g.weight();
        let v = sys.pair();
        for i in 0..8 {
            let conv: f64 = (0..8).map(|j| w * v[(i, j)] * phi[j].norm_sqr()).sum();
            for j in 0..8 {
                let mut h = sys.one_body()[(i, j)] + v[(i, j)] * phi[i] * phi[j].conj();
                if i == j {
                    h += c(conv / w, 0.0);
                }
                assert!((gen.h_eff[(i, j)] - h).norm() < 1e-12);
                assert!((gen.k_eff[(i, j)] - v[(i, j)] * phi[i] * phi[j]).norm() < 1e-12);
            }
        }

        let free = system(8, &FieldSpec::Constant { value: 0.0 }, &FieldSpec::Constant { value: 0.0 });
        let a = hfb_generator(&free, &random_state(&free, 9)).unwrap().block();
        assert_eq!(linalg::max_abs(&a.view((0, 8), (8, 8)).into_owned()), 0.0);
        assert_eq!(linalg::max_abs(&a.view((8, 0), (8, 8)).into_owned()), 0.0);
    }

    #[test]
    fn k_ratio_examples() {
        let sys = system(16, &FieldSpec::Constant { value: -0.6 }, &FieldSpec::Constant { value: 0.0 });
        let s = random_state(&sys, 4);
        let r = k_estimate_ratio(sys.pair(), &s.sigma, sys.sobolev()).unwrap();
        assert!(r <= 0.6 + 1e-14 && r > 0.0);
        assert!(k_estimate_ratio(sys.pair(), &CMat::zeros(16, 16), sys.sobolev()).is_err());

        // rank-one σ = u uᵀ against a direct dense evaluation
        let gs = system(16, &gaussian(), &FieldSpec::Constant { value: 0.0 });
        let g = gs.grid().unwrap();
        let u: Vec<C64> = (0..16).map(|i| c((g.node(i)[0]).sin(), 0.5)).collect();
        let uv = CVec::from_vec(u);
        let sigma = linalg::outer(&uv, &uv);
        let m = gs.sobolev();
        let mut num = 0.0;
        let mut left = 0.0;
        let mut right = 0.0;
        for i in 0..16 {
            for j in 0..16 {
                let mut a = C64::default();
                let mut b = C64::default();
                let mut d = C64::default();
                for k in 0..16 {
                    a += m[(i, k)] * gs.pair()[(k, j)] * sigma[(k, j)];
                    b += m[(i, k)] * sigma[(k, j)];
                    d += sigma[(i, k)] * m[(k, j)];
                }
                num += a.norm_sqr();
                left += b.norm_sqr();
                right += d.norm_sqr();
            }
        }
        let expected = num.sqrt() / (left.sqrt() + right.sqrt());
        let r = k_estimate_ratio(gs.pair(), &sigma, m).unwrap();
        assert!((r - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn grid_free_system_matches_grid_system() {
        let sys = system(8, &gaussian(), &FieldSpec::Cosine { amplitude: 0.3, mode: [1, 0, 0] });
        let bare = HfbSystem::from_matrices(
            sys.weight(),
            sys.kinetic().clone(),
            sys.potential().to_vec(),
            sys.pair().clone(),
        )
        .unwrap();
        assert!(linalg::max_abs(&(bare.sobolev() - sys.sobolev())) < 1e-12);
        let s = random_state(&sys, 8);
        let a = mean_field_h(&sys, &s.gamma).unwrap();
        let b = mean_field_h(&bare, &s.gamma).unwrap();
        assert!(linalg::max_abs(&(a - b)) < 1e-12);
    }
}
