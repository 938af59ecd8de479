//! Reference set-ups shared by the verification suites, the acceptance tests
//! and the command line: a one-dimensional interacting gas with a periodized
//! Gaussian pair potential and its standard initial states.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::PacketSpec;
use crate::error::Result;
use crate::grid::{pair_kernel, FieldSpec, TorusGrid};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{c, CMat, CVec, C64};
use crate::meanfield::k_estimate_ratio;
use crate::meanfield::HfbSystem;
use crate::state::{self, HfbState, RandomStateOptions, SqueezeParams};

pub const LENGTH: f64 = 2.0 * PI;
pub const COUPLING: f64 = 0.5;
pub const WIDTH: f64 = 0.3;
pub const PARTICLES: f64 = 2.0;
/// Condensate: Gaussian packet of this width centred at `L/2`, boosted by two momentum units.
pub const PACKET_WIDTH: f64 = 0.5;
pub const PACKET_MODE: i64 = 2;
pub const THERMAL_BETA: f64 = 1.0;
pub const THERMAL_MU: f64 = -0.5;
/// Squeezing `r` applied to the lowest modes of `h`, in ascending order.
pub const SQUEEZE: [f64; 5] = [0.3, 0.25, 0.2, 0.15, 0.1];

pub fn gaussian_pair() -> FieldSpec {
    FieldSpec::Gaussian { amplitude: COUPLING, width: WIDTH, center: [0.0; 3] }
}

pub fn grid_1d(n: usize) -> Result<TorusGrid> {
    TorusGrid::new(1, LENGTH, n)
}

/// `V = 0`, periodized Gaussian `v`.
pub fn interacting_1d(n: usize) -> Result<HfbSystem> {
    let grid = grid_1d(n)?;
    let v = pair_kernel(&grid, &gaussian_pair())?;
    HfbSystem::new(&grid, vec![0.0; grid.len()], v)
}

/// `V = 0`, `v = 0`.
pub fn free_1d(n: usize) -> Result<HfbSystem> {
    let grid = grid_1d(n)?;
    let v = pair_kernel(&grid, &FieldSpec::Constant { value: 0.0 })?;
    HfbSystem::new(&grid, vec![0.0; grid.len()], v)
}

/// Moving Gaussian packet normalised to `w Σ |φ|² = particles`.
pub fn packet(grid: &TorusGrid, particles: f64) -> Result<CVec> {
    let spec = PacketSpec { particles, width: PACKET_WIDTH, mode: [PACKET_MODE, 0, 0], center: None };
    crate::driver::packet(grid, &spec)
}

/// Pure condensate with `𝒩 = 2`.
pub fn coherent_initial(system: &HfbSystem) -> Result<HfbState> {
    let grid = system.grid().expect("scenario systems live on a grid");
    let phi = packet(grid, PARTICLES)?;
    let phi: Vec<_> = phi.iter().copied().collect();
    state::coherent_state(grid, &phi)
}

/// The same condensate on top of a squeezed thermal cloud of `h`.
pub fn squeezed_thermal_initial(system: &HfbSystem) -> Result<HfbState> {
    let grid = system.grid().expect("scenario systems live on a grid");
    let phi = packet(grid, PARTICLES)?;
    let squeeze = SqueezeParams { r: SQUEEZE.to_vec(), theta: (0..SQUEEZE.len()).map(|a| 0.4 * a as f64).collect() };
    state::squeezed_thermal_state(system.weight(), phi, system.one_body(), THERMAL_BETA, THERMAL_MU, &squeeze)
}

/// Band-limited random valid state from a fixed seed.
pub fn random_initial(grid: &TorusGrid, seed: u64) -> HfbState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    state::random_valid_state(grid, &mut rng, &RandomStateOptions::default())
}

/// Deterministic generator for ensembles.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}


/// Plane-wave cutoff of the pairing functions in the k-estimate ensemble.
pub const ENSEMBLE_BAND: i64 = 3;
pub const ENSEMBLE_SIZE: usize = 50;
pub const ENSEMBLE_SEED: u64 = 20_240_611;

/// Symmetric pairing kernel `σ(x, y) = Σ c_{pq} e^{i(px + qy)}` (symmetrised),
/// `|p|, |q| ≤ ENSEMBLE_BAND`, with coefficients drawn from `rng`. The same
/// draws give the same continuum function on every grid.
pub fn continuum_sigma<R: Rng + ?Sized>(grid: &TorusGrid, rng: &mut R) -> CMat {
    let modes: Vec<i64> = (-ENSEMBLE_BAND..=ENSEMBLE_BAND).collect();
    let k0 = 2.0 * PI / grid.length();
    let mut coeffs = Vec::with_capacity(modes.len() * modes.len());
    for _ in &modes {
        for _ in &modes {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            coeffs.push(c(re, im));
        }
    }
    let n = grid.len();
    let sigma = CMat::from_fn(n, n, |i, j| {
        let (x, y) = (grid.node(i)[0], grid.node(j)[0]);
        let mut acc = C64::default();
        for (a, p) in modes.iter().enumerate() {
            for (b, q) in modes.iter().enumerate() {
                acc += coeffs[a * modes.len() + b] * C64::from_polar(1.0, k0 * (*p as f64 * x + *q as f64 * y));
            }
        }
        acc
    });
    (&sigma + sigma.transpose()).scale(0.5)
}

/// Largest `k_estimate_ratio` over the fixed ensemble on an `n`-point grid.
pub fn k_estimate_sweep(n: usize) -> Result<f64> {
    let system = interacting_1d(n)?;
    let grid = system.grid().expect("scenario systems live on a grid");
    let mut rng = rng(ENSEMBLE_SEED);
    let mut worst = 0.0_f64;
    for _ in 0..ENSEMBLE_SIZE {
        let sigma = continuum_sigma(grid, &mut rng);
        worst = worst.max(k_estimate_ratio(system.pair(), &sigma, system.sobolev())?);
    }
    Ok(worst)
}
