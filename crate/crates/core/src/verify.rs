//! Verification suites with machine-readable reports. Each suite runs one or
//! more reference experiments from [`crate::scenarios`] and compares the
//! measured values against fixed thresholds.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::dynamics::{self, bogoliubov_check, evolve, picard_mild, EvolveOptions, Observer, Scheme};
use crate::error::{HfbError, Result};
use crate::linalg;
use crate::meanfield::HfbSystem;
use crate::observables::{self, DiagnosticsRecord};
use crate::oracle;
use crate::scenarios as sc;
use crate::state::{self, HfbState};

pub const FREE_FLOW_SEED: u64 = 11;
pub const SPLIT_SEED: u64 = 23;
pub const SPLIT_SAMPLES: usize = 100;
pub const GAUGE_ANGLE: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<")]
    Below,
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub relation: Relation,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    pub fn below(name: &str, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, relation: Relation::Below, threshold, passed: value < threshold }
    }

    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, relation: Relation::AtMost, threshold, passed: value <= threshold }
    }

    pub fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, relation: Relation::AtLeast, threshold, passed: value >= threshold }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub wall_time_s: f64,
}

impl SuiteReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Conservation,
    Positivity,
    FreeFlow,
    Order,
    Picard,
    Bogoliubov,
    Inequalities,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Conservation,
        Suite::Positivity,
        Suite::FreeFlow,
        Suite::Order,
        Suite::Picard,
        Suite::Bogoliubov,
        Suite::Inequalities,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Conservation => "conservation",
            Suite::Positivity => "positivity",
            Suite::FreeFlow => "free-flow",
            Suite::Order => "order",
            Suite::Picard => "picard",
            Suite::Bogoliubov => "bogoliubov",
            Suite::Inequalities => "inequalities",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = HfbError;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| HfbError::InvalidArgument(format!("unknown suite `{s}`")))
    }
}

/// Extremes of the monitored quantities along a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunStats {
    pub records: Vec<DiagnosticsRecord>,
    pub n_drift: f64,
    pub e_drift: f64,
    pub hermitian_defect: f64,
    pub symmetric_defect: f64,
    /// `min_t min eig Γ_t / (1 + Tr γ_t)`
    pub positivity_margin: f64,
    /// `min_t slack_t / RHS_t` of the σ-bound (`+∞` while the RHS vanishes).
    pub sigma_margin: f64,
    pub final_state: Option<HfbState>,
    pub wall_time: f64,
}

struct StatsObserver<'a> {
    system: &'a HfbSystem,
    stats: RunStats,
}

impl Observer for StatsObserver<'_> {
    fn observe(&mut self, _: usize, state: &HfbState, r: &DiagnosticsRecord) -> Result<()> {
        let s = &mut self.stats;
        if let Some(r0) = s.records.first() {
            s.n_drift = s.n_drift.max(((r.n_total - r0.n_total) / r0.n_total).abs());
            s.e_drift = s.e_drift.max(((r.energy - r0.energy) / r0.energy).abs());
        }
        s.hermitian_defect = s.hermitian_defect.max(r.gamma_hermitian_defect);
        s.symmetric_defect = s.symmetric_defect.max(r.sigma_symmetric_defect);
        s.positivity_margin = s.positivity_margin.min(r.gamma_floor / (1.0 + r.n_gamma));
        let bound = observables::sigma_bound(state, self.system.sobolev());
        if bound.rhs > 0.0 {
            s.sigma_margin = s.sigma_margin.min(bound.slack() / bound.rhs);
        } else if bound.slack() < 0.0 {
            s.sigma_margin = f64::NEG_INFINITY;
        }
        s.records.push(r.clone());
        Ok(())
    }
}

/// Evolves with diagnostics every `stride` steps and collects [`RunStats`].
pub fn run_stats(system: &HfbSystem, state0: &HfbState, dt: f64, t_final: f64, stride: usize) -> Result<RunStats> {
    let started = Instant::now();
    let mut obs = StatsObserver {
        system,
        stats: RunStats { positivity_margin: f64::INFINITY, sigma_margin: f64::INFINITY, ..Default::default() },
    };
    let opts = EvolveOptions::new(dt, t_final).with_diagnostics(stride).with_store_stride(0);
    let traj = evolve(system, state0, &opts, &mut obs)?;
    let mut stats = obs.stats;
    stats.final_state = Some(traj.final_state().clone());
    stats.wall_time = started.elapsed().as_secs_f64();
    Ok(stats)
}

pub const RUN_DT: f64 = 1e-3;
pub const RUN_T: f64 = 1.0;
pub const RUN_N: usize = 32;
pub const RUN_STRIDE: usize = 10;

/// Run 2: coherent condensate in the interacting gas.
pub fn coherent_run(dt: f64) -> Result<RunStats> {
    let system = sc::interacting_1d(RUN_N)?;
    let s0 = sc::coherent_initial(&system)?;
    run_stats(&system, &s0, dt, RUN_T, ((RUN_DT / dt).round() as usize).max(1) * RUN_STRIDE)
}

/// Run 3: the same gas from a squeezed thermal state.
pub fn squeezed_run() -> Result<RunStats> {
    let system = sc::interacting_1d(RUN_N)?;
    let s0 = sc::squeezed_thermal_initial(&system)?;
    run_stats(&system, &s0, RUN_DT, RUN_T, RUN_STRIDE)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Measured {
    pub value: f64,
    pub wall_time: f64,
}

/// X⁰ error of RK4 against the analytic free flow, random state, `n = 32`, `T = 1`.
pub fn free_flow_error() -> Result<Measured> {
    let started = Instant::now();
    let system = sc::free_1d(RUN_N)?;
    let s0 = sc::random_initial(system.grid().expect("grid"), FREE_FLOW_SEED);
    let opts = EvolveOptions::new(RUN_DT, RUN_T).with_store_stride(0);
    let traj = evolve(&system, &s0, &opts, &mut dynamics::NoObserver)?;
    let exact = oracle::free_flow(&s0, RUN_T, system.one_body())?;
    Ok(Measured { value: state::x0_distance(traj.final_state(), &exact), wall_time: started.elapsed().as_secs_f64() })
}

/// `‖evolve(gauge(ρ₀)) - gauge(evolve(ρ₀))‖_X⁰` on run 2 to `T = 0.5`.
pub fn gauge_defect() -> Result<f64> {
    let system = sc::interacting_1d(RUN_N)?;
    let s0 = sc::coherent_initial(&system)?;
    let opts = EvolveOptions::new(RUN_DT, 0.5).with_store_stride(0);
    let a = evolve(&system, &state::gauge_transform(&s0, GAUGE_ANGLE), &opts, &mut dynamics::NoObserver)?;
    let b = evolve(&system, &s0, &opts, &mut dynamics::NoObserver)?;
    Ok(state::x0_distance(a.final_state(), &state::gauge_transform(b.final_state(), GAUGE_ANGLE)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PicardComparison {
    pub error: f64,
    pub contraction: f64,
    pub iterations: usize,
    pub wall_time: f64,
}

pub const PICARD_N: usize = 8;
pub const PICARD_T: f64 = 0.05;
pub const PICARD_NODE_DT: f64 = 1e-3;
pub const PICARD_ITERATIONS: usize = 8;
pub const PICARD_RK4_DT: f64 = 1e-5;

/// Picard iterate against fine-step RK4, squeezed thermal state, `n = 8`, `t = 0.05`.
pub fn picard_comparison() -> Result<PicardComparison> {
    let started = Instant::now();
    let system = sc::interacting_1d(PICARD_N)?;
    let s0 = sc::squeezed_thermal_initial(&system)?;
    let p = picard_mild(&system, &s0, PICARD_T, PICARD_NODE_DT, PICARD_ITERATIONS)?;
    let opts = EvolveOptions::new(PICARD_RK4_DT, PICARD_T).with_store_stride(0);
    let traj = evolve(&system, &s0, &opts, &mut dynamics::NoObserver)?;
    Ok(PicardComparison {
        error: state::x0_distance(&p.state, traj.final_state()),
        contraction: p.contraction,
        iterations: p.differences.len(),
        wall_time: started.elapsed().as_secs_f64(),
    })
}

/// Largest entry of `rhs - (A-part + f-part)` over random valid states, `n = 16`.
pub fn split_defect() -> Result<f64> {
    let system = sc::interacting_1d(16)?;
    let grid = system.grid().expect("grid").clone();
    let mut rng = sc::rng(SPLIT_SEED);
    let opts = state::RandomStateOptions { band: 4, ..Default::default() };
    let mut worst = 0.0_f64;
    for _ in 0..SPLIT_SAMPLES {
        let s = state::random_valid_state(&grid, &mut rng, &opts);
        let full = dynamics::rhs(&system, &s)?;
        let (a, f) = dynamics::rhs_split(&system, &s)?;
        let sum = a.add_scaled(&f, linalg::c(1.0, 0.0));
        worst = worst.max(full.max_entry_difference(&sum));
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BogoliubovDefects {
    pub symplectic: f64,
    pub reconstruction: f64,
}

/// Run 2 on `n = 16` to `T = 0.5`, every step stored.
pub fn bogoliubov_defects() -> Result<BogoliubovDefects> {
    let system = sc::interacting_1d(16)?;
    let s0 = sc::coherent_initial(&system)?;
    let traj = evolve(&system, &s0, &EvolveOptions::new(RUN_DT, 0.5), &mut dynamics::NoObserver)?;
    let report = bogoliubov_check(&system, &traj)?;
    Ok(BogoliubovDefects { symplectic: report.symplectic_defect, reconstruction: report.reconstruction_defect })
}

pub const ORDER_DTS: [f64; 3] = [4e-3, 2e-3, 1e-3];

/// Self-convergence order of RK4 on run 2.
pub fn order_estimate() -> Result<oracle::OrderEstimate> {
    let system = sc::interacting_1d(RUN_N)?;
    let s0 = sc::coherent_initial(&system)?;
    oracle::order_study(&system, &s0, RUN_T, Scheme::Rk4, &ORDER_DTS, None)
}

/// `(max ratio at n = 16, max ratio at n = 64)` over the fixed σ ensemble.
pub fn k_estimate_ratios() -> Result<(f64, f64)> {
    Ok((sc::k_estimate_sweep(16)?, sc::k_estimate_sweep(64)?))
}

pub const SIGMA_ENSEMBLE: usize = 200;

/// Smallest `slack / RHS` of the σ-bound over random admissible states.
pub fn sigma_bound_margin() -> Result<f64> {
    let system = sc::interacting_1d(16)?;
    let grid = system.grid().expect("grid").clone();
    let mut rng = sc::rng(SPLIT_SEED + 1);
    let opts = state::RandomStateOptions { band: 4, max_squeeze: 1.0, ..Default::default() };
    let mut worst = f64::INFINITY;
    for _ in 0..SIGMA_ENSEMBLE {
        let s = state::random_valid_state(&grid, &mut rng, &opts);
        let b = observables::sigma_bound(&s, system.sobolev());
        worst = worst.min(b.slack() / b.rhs);
    }
    Ok(worst)
}

pub fn run_suite(suite: Suite) -> Result<SuiteReport> {
    let started = Instant::now();
    let mut checks = Vec::new();
    match suite {
        Suite::Conservation => {
            let coarse = coherent_run(RUN_DT)?;
            let fine = coherent_run(0.5 * RUN_DT)?;
            checks.push(Check::below("particle_number_drift", coarse.n_drift, 1e-6));
            checks.push(Check::below("energy_drift", coarse.e_drift, 1e-6));
            checks.push(Check::at_least("particle_drift_halving_ratio", coarse.n_drift / fine.n_drift, 10.0));
            checks.push(Check::at_least("energy_drift_halving_ratio", coarse.e_drift / fine.e_drift, 10.0));
            checks.push(Check::below("gamma_hermitian_defect", coarse.hermitian_defect, 1e-10));
            checks.push(Check::below("sigma_symmetric_defect", coarse.symmetric_defect, 1e-10));
            checks.push(Check::below("run_wall_time_s", coarse.wall_time, 60.0));
            checks.push(Check::below("gauge_equivariance_defect", gauge_defect()?, 1e-8));
        }
        Suite::Positivity => {
            let run = squeezed_run()?;
            checks.push(Check::at_least("positivity_margin", run.positivity_margin, -1e-8));
            checks.push(Check::at_least("sigma_bound_margin", run.sigma_margin, -1e-8));
            checks.push(Check::below("gamma_hermitian_defect", run.hermitian_defect, 1e-10));
            checks.push(Check::below("sigma_symmetric_defect", run.symmetric_defect, 1e-10));
        }
        Suite::FreeFlow => {
            let m = free_flow_error()?;
            checks.push(Check::below("x0_error", m.value, 1e-8));
            checks.push(Check::below("wall_time_s", m.wall_time, 10.0));
        }
        Suite::Order => {
            let o = order_estimate()?;
            checks.push(Check::at_least("fitted_order", o.order, 3.5));
            checks.push(Check::at_least("monotone", if o.monotone { 1.0 } else { 0.0 }, 1.0));
        }
        Suite::Picard => {
            let p = picard_comparison()?;
            checks.push(Check::below("x0_error", p.error, 1e-6));
            checks.push(Check::below("contraction_factor", p.contraction, 1.0));
            checks.push(Check::at_least("iterations", p.iterations as f64, 5.0));
            checks.push(Check::below("wall_time_s", p.wall_time, 120.0));
            checks.push(Check::below("split_identity_defect", split_defect()?, 1e-12));
        }
        Suite::Bogoliubov => {
            let b = bogoliubov_defects()?;
            checks.push(Check::below("symplectic_defect", b.symplectic, 1e-8));
            checks.push(Check::below("reconstruction_defect", b.reconstruction, 1e-6));
        }
        Suite::Inequalities => {
            let (small, large) = k_estimate_ratios()?;
            checks.push(Check::at_most("k_ratio_growth", large / small, 1.5));
            checks.push(Check::at_least("sigma_bound_margin", sigma_bound_margin()?, -1e-10));
        }
    }
    let passed = checks.iter().all(|c| c.passed);
    Ok(SuiteReport { suite: suite.name().into(), passed, checks, wall_time_s: started.elapsed().as_secs_f64() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("unknown".parse::<Suite>().is_err());
    }

    #[test]
    fn check_relations() {
        assert!(Check::below("x", 0.5, 1.0).passed);
        assert!(!Check::below("x", 1.0, 1.0).passed);
        assert!(Check::at_least("x", 1.0, 1.0).passed);
        assert!(!Check::at_least("x", f64::NAN, 1.0).passed);
        let json = serde_json::to_value(Check::below("x", 0.5, 1.0)).unwrap();
        assert_eq!(json["relation"], "<");
    }

    #[test]
    fn inequalities_suite_passes() {
        let r = run_suite(Suite::Inequalities).unwrap();
        assert!(r.passed, "{}", r.to_json());
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["suite"], "inequalities");
    }
}
