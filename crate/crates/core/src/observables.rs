//! Conserved and monitored quantities along a trajectory.

use std::io::Write;

use crate::error::{HfbError, Result};
use crate::linalg::{self, CMat};
use crate::meanfield::{interaction, k_estimate_ratio, HfbSystem};
use crate::state::{self, GeneralizedDensityMatrix, HfbState};

/// `𝒩 = Tr γ + ‖φ‖²`
pub fn particle_number(state: &HfbState) -> f64 {
    state.trace_gamma() + state.phi_norm_sqr()
}

/// `Tr(AB)` for kernels: `w² Σ_ik A[i][k] B[k][i]`.
fn trace_product(a: &CMat, b: &CMat, w: f64) -> linalg::C64 {
    let mut s = linalg::C64::default();
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            s += a[(i, k)] * b[(k, i)];
        }
    }
    s * (w * w)
}

/// Energy functional
/// `Tr[h γ^φ + b[|φ⟩⟨φ|] γ + ½ b[γ] γ] + ½ ∬ v(x-y) |σ(x,y) + φ(x)φ(y)|²`.
pub fn energy(system: &HfbSystem, state: &HfbState) -> Result<f64> {
    system.validate_shape(state)?;
    let w = state.weight;
    let phi_phi = linalg::outer(&state.phi, &state.phi.map(|z| z.conj()));
    let mut e = trace_product(system.one_body(), &state.gamma_phi(), w);
    e += trace_product(&interaction(system, &phi_phi)?, &state.gamma, w);
    e += trace_product(&interaction(system, &state.gamma)?, &state.gamma, w) * 0.5;
    let sigma_phi = state.sigma_phi();
    let pair = system.pair();
    let mut pairing = 0.0;
    for i in 0..state.len() {
        for j in 0..state.len() {
            pairing += pair[(i, j)] * sigma_phi[(i, j)].norm_sqr();
        }
    }
    let total = e.re + 0.5 * w * w * pairing;
    if e.im.abs() > 1e-8 * (1.0 + total.abs()) {
        return Err(HfbError::CorruptedState(format!("energy has imaginary part {:e}", e.im)));
    }
    Ok(total)
}

/// Terms of `‖σ‖²_{H¹σ} ≤ 2‖γ‖_{H¹γ}(1 + Tr γ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaBound {
    /// `‖Mσ‖_HS`
    pub left: f64,
    /// `‖σM‖_HS`
    pub right: f64,
    /// `2‖MγM‖_tr (1 + Tr γ)`
    pub rhs: f64,
}

impl SigmaBound {
    /// `rhs - (‖Mσ‖² + ‖σM‖²)`: the form that holds for every admissible state.
    pub fn slack(&self) -> f64 {
        self.rhs - (self.left * self.left + self.right * self.right)
    }

    /// `rhs - (‖Mσ‖ + ‖σM‖)²`. Fails by up to a factor two on pure squeezed states.
    pub fn strong_slack(&self) -> f64 {
        self.rhs - (self.left + self.right).powi(2)
    }
}

pub fn sigma_bound(state: &HfbState, sobolev: &CMat) -> SigmaBound {
    let w = state.weight;
    let left = w * linalg::frobenius(&(sobolev * &state.sigma));
    let right = w * linalg::frobenius(&(&state.sigma * sobolev));
    let h1 = w * linalg::nuclear_norm(&(sobolev * &state.gamma * sobolev));
    SigmaBound { left, right, rhs: 2.0 * h1 * (1.0 + state.trace_gamma()) }
}

/// Slack of the σ-bound, `RHS - LHS` with `LHS = ‖Mσ‖²_HS + ‖σM‖²_HS`.
pub fn sigma_bound_slack(state: &HfbState, sobolev: &CMat) -> f64 {
    sigma_bound(state, sobolev).slack()
}

/// Smallest eigenvalue of the generalized density matrix as an operator.
pub fn gamma_floor(state: &HfbState) -> f64 {
    GeneralizedDensityMatrix::from_state(state).min_eigenvalue()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub n_total: f64,
    pub n_gamma: f64,
    pub n_phi: f64,
    pub energy: f64,
    pub gamma_floor: f64,
    pub sigma_bound_slack: f64,
    pub k_estimate_ratio: f64,
    pub x1_norm: f64,
    pub gamma_hermitian_defect: f64,
    pub sigma_symmetric_defect: f64,
}

pub const CSV_HEADER: [&str; 11] = [
    "t",
    "n_total",
    "n_gamma",
    "n_phi",
    "energy",
    "gamma_floor",
    "sigma_bound_slack",
    "k_estimate_ratio",
    "x1_norm",
    "gamma_hermitian_defect",
    "sigma_symmetric_defect",
];

impl DiagnosticsRecord {
    pub fn values(&self) -> [f64; 11] {
        [
            self.t,
            self.n_total,
            self.n_gamma,
            self.n_phi,
            self.energy,
            self.gamma_floor,
            self.sigma_bound_slack,
            self.k_estimate_ratio,
            self.x1_norm,
            self.gamma_hermitian_defect,
            self.sigma_symmetric_defect,
        ]
    }

    pub fn from_values(v: [f64; 11]) -> Self {
        Self {
            t: v[0],
            n_total: v[1],
            n_gamma: v[2],
            n_phi: v[3],
            energy: v[4],
            gamma_floor: v[5],
            sigma_bound_slack: v[6],
            k_estimate_ratio: v[7],
            x1_norm: v[8],
            gamma_hermitian_defect: v[9],
            sigma_symmetric_defect: v[10],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|x| x.is_finite())
    }
}

/// Snapshot of every monitored quantity. The k-estimate ratio is taken on
/// `σ^φ`, the argument `k` actually sees in the flow (zero for the vacuum).
pub fn record(system: &HfbSystem, state: &HfbState, t: f64) -> Result<DiagnosticsRecord> {
    let sobolev = system.sobolev();
    let n_gamma = state.trace_gamma();
    let n_phi = state.phi_norm_sqr();
    let sigma_phi = state.sigma_phi();
    let k_ratio = if sigma_phi.iter().all(|z| z.norm() == 0.0) {
        0.0
    } else {
        k_estimate_ratio(system.pair(), &sigma_phi, sobolev)?
    };
    Ok(DiagnosticsRecord {
        t,
        n_total: n_gamma + n_phi,
        n_gamma,
        n_phi,
        energy: energy(system, state)?,
        gamma_floor: gamma_floor(state),
        sigma_bound_slack: sigma_bound_slack(state, sobolev),
        k_estimate_ratio: k_ratio,
        x1_norm: state::xj_norm(state, sobolev, 1)?.value,
        gamma_hermitian_defect: linalg::hermitian_defect(&state.gamma),
        sigma_symmetric_defect: linalg::symmetric_defect(&state.sigma),
    })
}

/// 17 significant digits, enough for a lossless `f64` round trip.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_csv<W: Write>(mut out: W, records: &[DiagnosticsRecord]) -> Result<()> {
    writeln!(out, "{}", CSV_HEADER.join(","))?;
    for r in records {
        let row: Vec<String> = r.values().iter().map(|&x| format_float(x)).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn parse_csv(text: &str) -> Result<Vec<DiagnosticsRecord>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| HfbError::InvalidArgument("empty CSV".into()))?;
    if header != CSV_HEADER.join(",") {
        return Err(HfbError::InvalidArgument(format!("unexpected CSV header `{header}`")));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let mut v = [0.0; 11];
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 11 {
                return Err(HfbError::InvalidArgument(format!("CSV row has {} fields", fields.len())));
            }
            for (slot, f) in v.iter_mut().zip(fields) {
                *slot = f.parse().map_err(|_| HfbError::InvalidArgument(format!("bad float `{f}`")))?;
            }
            Ok(DiagnosticsRecord::from_values(v))
        })
        .collect()
}
