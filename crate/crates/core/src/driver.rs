//! Batch runs: build the system and initial state from a [`RunConfig`],
//! evolve, and write `diagnostics.csv`, `initial.snap`, `final.snap` and
//! `manifest.txt` into the output directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::config::{InitialSpec, PacketSpec, RunConfig};
use crate::dynamics::{evolve, EvolveOptions, Observer};
use crate::error::{HfbError, Result};
use crate::grid::{pair_kernel, sample_field, sample_real_field, FieldSpec, TorusGrid};
use crate::linalg::CVec;
use crate::meanfield::HfbSystem;
use crate::observables::{self, DiagnosticsRecord};
use crate::oracle;
use crate::snapshot::Snapshot;
use crate::state::{self, HfbState, RandomStateOptions, SqueezeParams};

pub const BUILD_ID: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_INVARIANT: i32 = 4;

/// Process exit status for an error.
pub fn exit_code(err: &HfbError) -> i32 {
    match err {
        HfbError::Config(_)
        | HfbError::InvalidGrid(_)
        | HfbError::UnknownSpec(_)
        | HfbError::OddPairPotential { .. }
        | HfbError::NotReal(_) => EXIT_CONFIG,
        HfbError::NumericalAbort { .. } | HfbError::NonContraction { .. } => EXIT_NUMERICAL,
        HfbError::InvariantViolation(_) => EXIT_INVARIANT,
        _ => EXIT_FAILURE,
    }
}

/// Initial state validity tolerance.
pub const INITIAL_TOLERANCE: f64 = 1e-10;

/// Condensate wave function of a [`PacketSpec`].
pub fn packet(grid: &TorusGrid, p: &PacketSpec) -> Result<CVec> {
    let center = p.center.unwrap_or([0.5 * grid.length(); 3]);
    let env = sample_field(grid, &FieldSpec::Gaussian { amplitude: 1.0, width: p.width, center })?;
    let wave = sample_field(grid, &FieldSpec::PlaneWave { amplitude: 1.0, mode: p.mode })?;
    let mut phi = CVec::from_iterator(grid.len(), env.iter().zip(&wave).map(|(a, b)| a * b));
    let norm = (grid.weight() * phi.iter().map(|z| z.norm_sqr()).sum::<f64>()).sqrt();
    phi.scale_mut(p.particles.sqrt() / norm);
    Ok(phi)
}

pub fn build_system(cfg: &RunConfig) -> Result<HfbSystem> {
    let grid = cfg.build_grid()?;
    let potential = sample_real_field(&grid, &cfg.potential)?;
    let pair = pair_kernel(&grid, &cfg.pair)?;
    HfbSystem::new(&grid, potential, pair)
}

pub fn build_initial(cfg: &RunConfig, system: &HfbSystem, seed: Option<u64>) -> Result<HfbState> {
    let grid = system.grid().expect("configured systems live on a grid");
    let w = grid.weight();
    let n = grid.len();
    let state = match &cfg.initial {
        InitialSpec::Vacuum => HfbState::vacuum(n, w),
        InitialSpec::Coherent(p) => HfbState { phi: packet(grid, p)?, ..HfbState::vacuum(n, w) },
        InitialSpec::SqueezedThermal { packet: p, beta, mu, squeeze, squeeze_phase } => {
            let sq = SqueezeParams { r: squeeze.clone(), theta: squeeze_phase.clone() };
            state::squeezed_thermal_state(w, packet(grid, p)?, system.one_body(), *beta, *mu, &sq)
                .map_err(|e| HfbError::Config(format!("initial state: {e}")))?
        }
        InitialSpec::Snapshot { path } => {
            let snap = Snapshot::read(path)?;
            if (snap.dim, snap.points, snap.length) != (cfg.grid.dim, cfg.grid.points, cfg.grid.length) {
                return Err(HfbError::Config(format!(
                    "snapshot grid (d = {}, n = {}, L = {}) does not match the configured grid",
                    snap.dim, snap.points, snap.length
                )));
            }
            snap.state
        }
        InitialSpec::Random { band, phi_norm, max_occupation, max_squeeze } => {
            let opts = RandomStateOptions {
                band: *band,
                phi_norm: *phi_norm,
                max_occupation: *max_occupation,
                max_squeeze: *max_squeeze,
            };
            let mut rng = crate::scenarios::rng(seed.or(cfg.seed).unwrap_or(0));
            state::random_valid_state(grid, &mut rng, &opts)
        }
    };
    let report = state::validate(&state, INITIAL_TOLERANCE);
    if !report.is_valid() {
        return Err(HfbError::Config(format!("initial state is not admissible: {:?}", report.violations())));
    }
    Ok(state)
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub steps: usize,
    pub records: usize,
    pub final_time: f64,
    /// Largest X⁰ deviation from the analytic free flow, when checked.
    pub free_flow_deviation: Option<f64>,
    pub wall_time: f64,
}

struct RunObserver<'a> {
    records: Vec<DiagnosticsRecord>,
    positivity_tolerance: f64,
    free_flow: Option<(&'a HfbState, &'a HfbSystem)>,
    free_flow_deviation: f64,
}

impl Observer for RunObserver<'_> {
    fn observe(&mut self, _step: usize, state: &HfbState, record: &DiagnosticsRecord) -> Result<()> {
        self.records.push(record.clone());
        if !record.is_finite() {
            return Err(HfbError::NumericalAbort { t: record.t, last_valid: Box::new(state.clone()) });
        }
        let floor = -self.positivity_tolerance * (1.0 + record.n_gamma.abs());
        if record.gamma_floor < floor {
            return Err(HfbError::InvariantViolation(format!(
                "min eig Γ = {:e} below {floor:e} at t = {}",
                record.gamma_floor, record.t
            )));
        }
        if let Some((s0, sys)) = self.free_flow {
            let exact = oracle::free_flow(s0, record.t, sys.one_body())?;
            self.free_flow_deviation = self.free_flow_deviation.max(state::x0_distance(state, &exact));
        }
        Ok(())
    }
}

fn write_diagnostics(dir: &Path, records: &[DiagnosticsRecord]) -> Result<()> {
    let file = fs::File::create(dir.join("diagnostics.csv"))?;
    observables::write_csv(std::io::BufWriter::new(file), records)
}

fn snapshot(cfg: &RunConfig, state: &HfbState) -> Result<Snapshot> {
    Snapshot::new(cfg.grid.dim, cfg.grid.points, cfg.grid.length, state.clone())
}

fn write_manifest(dir: &Path, cfg: &RunConfig, seed: Option<u64>, lines: &[(String, String)]) -> Result<()> {
    let mut text = cfg.serialize()?;
    if cfg.seed.is_none() {
        if let Some(s) = seed {
            text.push_str(&format!("initial.seed = {s}\n"));
        }
    }
    text.push_str(&format!("manifest.build = {BUILD_ID}\n"));
    for (k, v) in lines {
        text.push_str(&format!("manifest.{k} = {v}\n"));
    }
    fs::write(dir.join("manifest.txt"), text)?;
    Ok(())
}

/// `run`: outputs go to `out_dir`, else `output.dir` from the config.
/// `seed` overrides `initial.seed`.
pub fn run(cfg: &RunConfig, out_dir: Option<&Path>, seed: Option<u64>) -> Result<RunSummary> {
    let started = Instant::now();
    let dir = out_dir
        .map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| HfbError::Config("no output directory (use --out or output.dir)".into()))?;
    let system = build_system(cfg)?;
    if cfg.checks.free_flow && !system.is_free() {
        return Err(HfbError::Config("checks.free_flow requires a vanishing pair potential".into()));
    }
    let state0 = build_initial(cfg, &system, seed)?;
    fs::create_dir_all(&dir)?;
    snapshot(cfg, &state0)?.write(dir.join("initial.snap"))?;

    let opts = EvolveOptions {
        dt: cfg.integrator.dt,
        t_final: cfg.integrator.t_final,
        scheme: cfg.integrator.scheme,
        diagnostic_stride: cfg.integrator.diagnostic_stride,
        store_stride: 0,
    };
    let mut observer = RunObserver {
        records: Vec::new(),
        positivity_tolerance: cfg.checks.positivity_tolerance,
        free_flow: cfg.checks.free_flow.then_some((&state0, &system)),
        free_flow_deviation: 0.0,
    };
    let result = evolve(&system, &state0, &opts, &mut observer);
    write_diagnostics(&dir, &observer.records)?;
    let wall = |s: &Instant| format!("{:.3}", s.elapsed().as_secs_f64());
    let traj = match result {
        Ok(t) => t,
        Err(err) => {
            if let HfbError::NumericalAbort { last_valid, .. } = &err {
                snapshot(cfg, last_valid)?.write(dir.join("abort.snap"))?;
            }
            write_manifest(
                &dir,
                cfg,
                seed,
                &[("status".into(), format!("aborted: {err}")), ("wall_time_s".into(), wall(&started))],
            )?;
            return Err(err);
        }
    };
    let final_state = traj.final_state();
    snapshot(cfg, final_state)?.write(dir.join("final.snap"))?;
    let deviation = cfg.checks.free_flow.then_some(observer.free_flow_deviation);
    let mut lines = vec![("steps".to_string(), opts.steps().to_string())];
    if let Some(d) = deviation {
        lines.push(("free_flow_deviation".into(), observables::format_float(d)));
    }
    let violated = deviation.is_some_and(|d| !(d < cfg.checks.free_flow_tolerance));
    lines.push(("status".into(), if violated { "free-flow deviation above tolerance" } else { "ok" }.into()));
    lines.push(("wall_time_s".into(), wall(&started)));
    write_manifest(&dir, cfg, seed, &lines)?;
    if violated {
        return Err(HfbError::InvariantViolation(format!(
            "free-flow deviation {:e} above {:e}",
            observer.free_flow_deviation, cfg.checks.free_flow_tolerance
        )));
    }
    Ok(RunSummary {
        out_dir: dir,
        steps: opts.steps(),
        records: observer.records.len(),
        final_time: *traj.times.last().expect("non-empty"),
        free_flow_deviation: deviation,
        wall_time: started.elapsed().as_secs_f64(),
    })
}
