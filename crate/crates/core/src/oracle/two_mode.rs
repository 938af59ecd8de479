//! Two nodes on a circle of length `2π` (weight `π`) with a constant pair
//! potential. The right-hand side is expanded by hand over the index set
//! `{0, 1}` using plain arrays, so it shares no code with the matrix path.

use std::path::Path;

use crate::error::Result;
use crate::linalg::{c, CMat, CVec, RMat, C64, I};
use crate::meanfield::HfbSystem;
use crate::observables::{self, DiagnosticsRecord};
use crate::snapshot::Snapshot;
use crate::state::HfbState;

pub const WEIGHT: f64 = std::f64::consts::PI;
pub const COUPLING: f64 = 0.4;
pub const POTENTIAL: [f64; 2] = [0.3, -0.1];
pub const T_FINAL: f64 = 1.0;
pub const DT: f64 = 1e-6;
/// Steps between stored records.
pub const RECORD_STRIDE: usize = 100_000;

type M2 = [[C64; 2]; 2];
type V2 = [C64; 2];

/// Kernel of `-Δ` on two nodes: the operator has eigenvalues 0 and 1 on
/// the even and odd modes.
pub fn kinetic() -> CMat {
    CMat::from_row_slice(2, 2, &[c(0.5, 0.0), c(-0.5, 0.0), c(-0.5, 0.0), c(0.5, 0.0)]).scale(1.0 / WEIGHT)
}

pub fn system() -> HfbSystem {
    HfbSystem::from_matrices(WEIGHT, kinetic(), POTENTIAL.to_vec(), RMat::from_element(2, 2, COUPLING))
        .expect("two-mode kernels are consistent")
}

pub fn initial_state() -> HfbState {
    let phi = [c(0.8, 0.0), c(0.3, 0.2)];
    let gamma = [[c(0.05, 0.0), c(0.01, 0.005)], [c(0.01, -0.005), c(0.03, 0.0)]];
    let sigma = [[c(0.02, 0.01), c(0.01, 0.0)], [c(0.01, 0.0), c(0.015, -0.005)]];
    from_arrays(&phi, &gamma, &sigma)
}

fn from_arrays(phi: &V2, gamma: &M2, sigma: &M2) -> HfbState {
    HfbState {
        weight: WEIGHT,
        phi: CVec::from_column_slice(phi),
        gamma: CMat::from_fn(2, 2, |i, j| gamma[i][j]),
        sigma: CMat::from_fn(2, 2, |i, j| sigma[i][j]),
    }
}

fn to_arrays(s: &HfbState) -> (V2, M2, M2) {
    let mut g = [[C64::default(); 2]; 2];
    let mut x = [[C64::default(); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            g[i][j] = s.gamma[(i, j)];
            x[i][j] = s.sigma[(i, j)];
        }
    }
    ([s.phi[0], s.phi[1]], g, x)
}

/// Plain-array state `(φ, γ, σ)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Arrays {
    pub phi: V2,
    pub gamma: M2,
    pub sigma: M2,
}

impl Arrays {
    fn axpy(&self, d: &Arrays, s: f64) -> Arrays {
        let mut out = *self;
        for i in 0..2 {
            out.phi[i] += d.phi[i] * s;
            for j in 0..2 {
                out.gamma[i][j] += d.gamma[i][j] * s;
                out.sigma[i][j] += d.sigma[i][j] * s;
            }
        }
        out
    }
}

/// `(dφ, dγ, dσ)` written out entry by entry.
pub fn rhs_arrays(st: &Arrays) -> Arrays {
    let w = WEIGHT;
    let g = COUPLING;
    let (phi, gam, sig) = (st.phi, st.gamma, st.sigma);
    let t = [[0.5 / w, -0.5 / w], [-0.5 / w, 0.5 / w]];
    // densities of γ and of γ + |φ><φ|
    let rho = [gam[0][0].re, gam[1][1].re];
    let rho_full = [rho[0] + phi[0].norm_sqr(), rho[1] + phi[1].norm_sqr()];
    let mut h_g = [[C64::default(); 2]; 2];
    let mut h_f = [[C64::default(); 2]; 2];
    let mut k = [[C64::default(); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let mut base = c(t[i][j], 0.0);
            if i == j {
                base += c(POTENTIAL[i] / w, 0.0);
            }
            // direct term: (v * ρ)(x_i) / w = g (ρ_0 + ρ_1) for constant v
            let direct_g = if i == j { g * (rho[0] + rho[1]) } else { 0.0 };
            let direct_f = if i == j { g * (rho_full[0] + rho_full[1]) } else { 0.0 };
            h_g[i][j] = base + c(direct_g, 0.0) + gam[i][j] * g;
            h_f[i][j] = base + c(direct_f, 0.0) + (gam[i][j] + phi[i] * phi[j].conj()) * g;
            k[i][j] = (sig[i][j] + phi[i] * phi[j]) * g;
        }
    }
    let mut out = Arrays::default();
    for i in 0..2 {
        let mut acc = C64::default();
        for j in 0..2 {
            acc += h_g[i][j] * phi[j] + k[i][j] * phi[j].conj();
        }
        out.phi[i] = -I * w * acc;
    }
    for i in 0..2 {
        for j in 0..2 {
            let mut comm = C64::default();
            let mut anti = C64::default();
            for l in 0..2 {
                // [h, γ] + k σ^† - σ k^†
                comm += h_f[i][l] * gam[l][j] - gam[i][l] * h_f[l][j] + k[i][l] * sig[j][l].conj()
                    - sig[i][l] * k[j][l].conj();
                // h σᵀ + σ hᵀ + k γᵀ + γ kᵀ
                anti += h_f[i][l] * sig[j][l] + sig[i][l] * h_f[j][l] + k[i][l] * gam[j][l] + gam[i][l] * k[j][l];
            }
            out.gamma[i][j] = -I * w * comm;
            out.sigma[i][j] = -I * (w * anti + k[i][j]);
        }
    }
    out
}

/// [`rhs_arrays`] on an [`HfbState`].
pub fn rhs(s: &HfbState) -> HfbState {
    let (phi, gamma, sigma) = to_arrays(s);
    let d = rhs_arrays(&Arrays { phi, gamma, sigma });
    from_arrays(&d.phi, &d.gamma, &d.sigma)
}

fn step(s: &Arrays, dt: f64) -> Arrays {
    let k1 = rhs_arrays(s);
    let k2 = rhs_arrays(&s.axpy(&k1, 0.5 * dt));
    let k3 = rhs_arrays(&s.axpy(&k2, 0.5 * dt));
    let k4 = rhs_arrays(&s.axpy(&k3, dt));
    s.axpy(&k1, dt / 6.0).axpy(&k2, dt / 3.0).axpy(&k3, dt / 3.0).axpy(&k4, dt / 6.0)
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub times: Vec<f64>,
    pub states: Vec<HfbState>,
    pub diagnostics: Vec<DiagnosticsRecord>,
}

/// Brute-force RK4 at `DT` to `T_FINAL`, storing every `RECORD_STRIDE` steps.
pub fn generate() -> Fixture {
    let sys = system();
    let steps = (T_FINAL / DT).round() as usize;
    let s0 = initial_state();
    let (phi, gamma, sigma) = to_arrays(&s0);
    let mut s = Arrays { phi, gamma, sigma };
    let mut fx = Fixture { times: vec![0.0], states: vec![s0], diagnostics: Vec::new() };
    for m in 1..=steps {
        s = step(&s, DT);
        if m % RECORD_STRIDE == 0 {
            fx.times.push(m as f64 * DT);
            fx.states.push(from_arrays(&s.phi, &s.gamma, &s.sigma));
        }
    }
    fx.diagnostics = fx
        .states
        .iter()
        .zip(&fx.times)
        .map(|(st, &t)| observables::record(&sys, st, t).expect("fixture states are valid"))
        .collect();
    fx
}

/// Sources the stored fixture was generated from.
const SOURCES: [&[u8]; 2] = [include_bytes!("two_mode.rs"), include_bytes!("../../examples/two_mode_fixture.rs")];

/// Hex SHA-256 over the generator sources.
pub fn generator_hash() -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for s in SOURCES {
        h.update(s);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub const HASH_FILE: &str = "GENERATOR.sha256";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";

fn state_file(k: usize) -> String {
    format!("state_{k:02}.snap")
}

/// Snapshots (`d = 1`, `n = 2`, `L = 2π`), diagnostics and the generator hash.
pub fn write_fixture(fx: &Fixture, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (k, s) in fx.states.iter().enumerate() {
        Snapshot::new(1, 2, 2.0 * WEIGHT, s.clone())?.write(dir.join(state_file(k)))?;
    }
    let file = std::fs::File::create(dir.join(DIAGNOSTICS_FILE))?;
    observables::write_csv(std::io::BufWriter::new(file), &fx.diagnostics)?;
    std::fs::write(dir.join(HASH_FILE), format!("{}\n", generator_hash()))?;
    Ok(())
}

pub struct StoredFixture {
    pub fixture: Fixture,
    pub hash: String,
}

pub fn read_fixture(dir: &Path) -> Result<StoredFixture> {
    let text = std::fs::read_to_string(dir.join(DIAGNOSTICS_FILE))?;
    let diagnostics = observables::parse_csv(&text)?;
    let states = (0..diagnostics.len())
        .map(|k| Snapshot::read(dir.join(state_file(k))).map(|s| s.state))
        .collect::<Result<Vec<_>>>()?;
    let times = diagnostics.iter().map(|r| r.t).collect();
    let hash = std::fs::read_to_string(dir.join(HASH_FILE))?.trim().to_string();
    Ok(StoredFixture { fixture: Fixture { times, states, diagnostics }, hash })
}
