//! Run configuration: flat `section.key = value` lines, `#` comments.
//!
//! ```text
//! grid.d = 1
//! grid.L = 6.283185307179586
//! grid.n = 32
//! potential.kind = constant
//! potential.value = 0.0
//! pair.kind = gaussian
//! pair.amplitude = 0.5
//! pair.width = 0.3
//! initial.kind = coherent
//! initial.particles = 2.0
//! initial.width = 0.5
//! initial.mode = 2
//! integrator.scheme = rk4
//! integrator.dt = 0.001
//! integrator.T = 1.0
//! integrator.diagnostic_stride = 10
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::dynamics::Scheme;
use crate::error::{HfbError, Result};
use crate::grid::{pair_kernel, FieldSpec, TorusGrid};
use crate::linalg::c;
use crate::state;

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub dim: usize,
    pub length: f64,
    pub points: usize,
}

/// Gaussian packet `a e^{-|x-c|²/2s²} e^{2πi m·x/L}` scaled to hold `particles`.
#[derive(Debug, Clone, PartialEq)]
pub struct PacketSpec {
    pub particles: f64,
    pub width: f64,
    pub mode: [i64; 3],
    /// Defaults to the box centre.
    pub center: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialSpec {
    Vacuum,
    Coherent(PacketSpec),
    SqueezedThermal { packet: PacketSpec, beta: f64, mu: f64, squeeze: Vec<f64>, squeeze_phase: Vec<f64> },
    Snapshot { path: PathBuf },
    Random { band: usize, phi_norm: f64, max_occupation: f64, max_squeeze: f64 },
}

impl InitialSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            InitialSpec::Vacuum => "vacuum",
            InitialSpec::Coherent(_) => "coherent",
            InitialSpec::SqueezedThermal { .. } => "squeezed_thermal",
            InitialSpec::Snapshot { .. } => "snapshot",
            InitialSpec::Random { .. } => "random",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    pub scheme: Scheme,
    pub dt: f64,
    pub t_final: f64,
    pub diagnostic_stride: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checks {
    /// Compare against the analytic free flow at every diagnostic stride (needs `v = 0`).
    pub free_flow: bool,
    pub free_flow_tolerance: f64,
    /// Abort when `min eig Γ < -tol (1 + Tr γ)`.
    pub positivity_tolerance: f64,
}

impl Default for Checks {
    fn default() -> Self {
        Self { free_flow: false, free_flow_tolerance: 1e-8, positivity_tolerance: state::EVOLVED_TOLERANCE }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub potential: FieldSpec,
    pub pair: FieldSpec,
    pub initial: InitialSpec,
    pub seed: Option<u64>,
    pub integrator: IntegratorConfig,
    pub output_dir: Option<PathBuf>,
    pub checks: Checks,
}

struct Fields {
    values: BTreeMap<String, String>,
    used: BTreeSet<String>,
}

fn cfg_err(msg: impl Into<String>) -> HfbError {
    HfbError::Config(msg.into())
}

impl Fields {
    fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| cfg_err(format!("line {}: expected `key = value`", lineno + 1)))?;
            let key = key.trim();
            if key.split('.').count() > 2 || key.is_empty() || key.starts_with('.') || key.ends_with('.') {
                return Err(cfg_err(format!("line {}: malformed key `{key}`", lineno + 1)));
            }
            if values.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(cfg_err(format!("duplicate field `{key}`")));
            }
        }
        Ok(Self { values, used: BTreeSet::new() })
    }

    fn raw(&mut self, key: &str) -> Option<String> {
        let v = self.values.get(key).cloned();
        if v.is_some() {
            self.used.insert(key.to_string());
        }
        v
    }

    fn opt<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| cfg_err(format!("field `{key}`: cannot parse `{v}`"))),
        }
    }

    fn req<T: FromStr>(&mut self, key: &str) -> Result<T> {
        self.opt(key)?.ok_or_else(|| cfg_err(format!("missing field `{key}`")))
    }

    fn list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) if v.trim().is_empty() => Ok(Some(Vec::new())),
            Some(v) => v
                .split(',')
                .map(|x| x.trim().parse().map_err(|_| cfg_err(format!("field `{key}`: cannot parse `{x}`"))))
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    fn triple<T: FromStr + Copy + Default>(&mut self, key: &str) -> Result<Option<[T; 3]>> {
        let Some(v) = self.list::<T>(key)? else {
            return Ok(None);
        };
        if v.is_empty() || v.len() > 3 {
            return Err(cfg_err(format!("field `{key}` needs 1 to 3 components")));
        }
        let mut out = [T::default(); 3];
        out[..v.len()].copy_from_slice(&v);
        Ok(Some(out))
    }

    fn field_spec(&mut self, section: &str) -> Result<FieldSpec> {
        let kind: String = self.req(&format!("{section}.kind"))?;
        let key = |k: &str| format!("{section}.{k}");
        Ok(match kind.as_str() {
            "constant" => FieldSpec::Constant { value: self.req(&key("value"))? },
            "cosine" => FieldSpec::Cosine {
                amplitude: self.req(&key("amplitude"))?,
                mode: self.triple(&key("mode"))?.ok_or_else(|| cfg_err(format!("missing field `{}`", key("mode"))))?,
            },
            "plane_wave" => FieldSpec::PlaneWave {
                amplitude: self.req(&key("amplitude"))?,
                mode: self.triple(&key("mode"))?.ok_or_else(|| cfg_err(format!("missing field `{}`", key("mode"))))?,
            },
            "gaussian" => FieldSpec::Gaussian {
                amplitude: self.req(&key("amplitude"))?,
                width: self.req(&key("width"))?,
                center: self.triple(&key("center"))?.unwrap_or([0.0; 3]),
            },
            "table" => FieldSpec::Table {
                values: self
                    .list::<f64>(&key("values"))?
                    .ok_or_else(|| cfg_err(format!("missing field `{}`", key("values"))))?
                    .into_iter()
                    .map(|x| c(x, 0.0))
                    .collect(),
            },
            other => return Err(cfg_err(format!("field `{}`: unknown kind `{other}`", key("kind")))),
        })
    }

    fn packet(&mut self) -> Result<PacketSpec> {
        Ok(PacketSpec {
            particles: self.req("initial.particles")?,
            width: self.req("initial.width")?,
            mode: self.triple("initial.mode")?.unwrap_or([0; 3]),
            center: self.triple("initial.center")?,
        })
    }

    fn initial(&mut self) -> Result<InitialSpec> {
        let kind: String = self.req("initial.kind")?;
        Ok(match kind.as_str() {
            "vacuum" => InitialSpec::Vacuum,
            "coherent" => InitialSpec::Coherent(self.packet()?),
            "squeezed_thermal" => InitialSpec::SqueezedThermal {
                packet: self.packet()?,
                beta: self.req("initial.beta")?,
                mu: self.req("initial.mu")?,
                squeeze: self.list("initial.squeeze")?.unwrap_or_default(),
                squeeze_phase: self.list("initial.squeeze_phase")?.unwrap_or_default(),
            },
            "snapshot" => InitialSpec::Snapshot { path: PathBuf::from(self.req::<String>("initial.path")?) },
            "random" => InitialSpec::Random {
                band: self.req("initial.band")?,
                phi_norm: self.req("initial.phi_norm")?,
                max_occupation: self.req("initial.max_occupation")?,
                max_squeeze: self.req("initial.max_squeeze")?,
            },
            other => return Err(cfg_err(format!("field `initial.kind`: unknown kind `{other}`"))),
        })
    }

    fn finish(self) -> Result<()> {
        match self.values.keys().find(|k| !self.used.contains(*k)) {
            Some(k) => Err(cfg_err(format!("unknown field `{k}`"))),
            None => Ok(()),
        }
    }
}

fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn fmt_list<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

fn fmt_floats(xs: &[f64]) -> String {
    xs.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(", ")
}

fn write_field_spec(out: &mut String, section: &str, spec: &FieldSpec) -> Result<()> {
    writeln!(out, "{section}.kind = {}", spec.kind()).ok();
    match spec {
        FieldSpec::Constant { value } => writeln!(out, "{section}.value = {}", fmt_f64(*value)),
        FieldSpec::Cosine { amplitude, mode } | FieldSpec::PlaneWave { amplitude, mode } => {
            writeln!(out, "{section}.amplitude = {}", fmt_f64(*amplitude)).ok();
            writeln!(out, "{section}.mode = {}", fmt_list(mode))
        }
        FieldSpec::Gaussian { amplitude, width, center } => {
            writeln!(out, "{section}.amplitude = {}", fmt_f64(*amplitude)).ok();
            writeln!(out, "{section}.width = {}", fmt_f64(*width)).ok();
            writeln!(out, "{section}.center = {}", fmt_floats(center))
        }
        FieldSpec::Table { values } => {
            if values.iter().any(|z| z.im != 0.0) {
                return Err(cfg_err(format!("{section}: complex tables cannot be serialized")));
            }
            let re: Vec<f64> = values.iter().map(|z| z.re).collect();
            writeln!(out, "{section}.values = {}", fmt_floats(&re))
        }
    }
    .ok();
    Ok(())
}

fn write_packet(out: &mut String, p: &PacketSpec) {
    writeln!(out, "initial.particles = {}", fmt_f64(p.particles)).ok();
    writeln!(out, "initial.width = {}", fmt_f64(p.width)).ok();
    writeln!(out, "initial.mode = {}", fmt_list(&p.mode)).ok();
    if let Some(cn) = p.center {
        writeln!(out, "initial.center = {}", fmt_floats(&cn)).ok();
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut f = Fields::parse(text)?;
        let grid = GridConfig { dim: f.req("grid.d")?, length: f.req("grid.L")?, points: f.req("grid.n")? };
        let potential = f.field_spec("potential")?;
        let pair = f.field_spec("pair")?;
        let initial = f.initial()?;
        let seed = f.opt("initial.seed")?;
        let scheme: String = f.opt("integrator.scheme")?.unwrap_or_else(|| "rk4".to_string());
        let integrator = IntegratorConfig {
            scheme: scheme.parse().map_err(|e: HfbError| cfg_err(format!("field `integrator.scheme`: {e}")))?,
            dt: f.req("integrator.dt")?,
            t_final: f.req("integrator.T")?,
            diagnostic_stride: f.req("integrator.diagnostic_stride")?,
        };
        let output_dir = f.opt::<String>("output.dir")?.map(PathBuf::from);
        let defaults = Checks::default();
        let checks = Checks {
            free_flow: f.opt("checks.free_flow")?.unwrap_or(defaults.free_flow),
            free_flow_tolerance: f.opt("checks.free_flow_tolerance")?.unwrap_or(defaults.free_flow_tolerance),
            positivity_tolerance: f.opt("checks.positivity_tolerance")?.unwrap_or(defaults.positivity_tolerance),
        };
        f.finish()?;
        let cfg = Self { grid, potential, pair, initial, seed, integrator, output_dir, checks };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| cfg_err(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Canonical text form; `parse(serialize(c)) == c`.
    pub fn serialize(&self) -> Result<String> {
        let mut out = String::new();
        writeln!(out, "grid.d = {}", self.grid.dim).ok();
        writeln!(out, "grid.L = {}", fmt_f64(self.grid.length)).ok();
        writeln!(out, "grid.n = {}", self.grid.points).ok();
        write_field_spec(&mut out, "potential", &self.potential)?;
        write_field_spec(&mut out, "pair", &self.pair)?;
        writeln!(out, "initial.kind = {}", self.initial.kind()).ok();
        match &self.initial {
            InitialSpec::Vacuum => {}
            InitialSpec::Coherent(p) => write_packet(&mut out, p),
            InitialSpec::SqueezedThermal { packet, beta, mu, squeeze, squeeze_phase } => {
                write_packet(&mut out, packet);
                writeln!(out, "initial.beta = {}", fmt_f64(*beta)).ok();
                writeln!(out, "initial.mu = {}", fmt_f64(*mu)).ok();
                writeln!(out, "initial.squeeze = {}", fmt_floats(squeeze)).ok();
                writeln!(out, "initial.squeeze_phase = {}", fmt_floats(squeeze_phase)).ok();
            }
            InitialSpec::Snapshot { path } => {
                let p = path.to_str().ok_or_else(|| cfg_err("snapshot path is not UTF-8"))?;
                writeln!(out, "initial.path = {p}").ok();
            }
            InitialSpec::Random { band, phi_norm, max_occupation, max_squeeze } => {
                writeln!(out, "initial.band = {band}").ok();
                writeln!(out, "initial.phi_norm = {}", fmt_f64(*phi_norm)).ok();
                writeln!(out, "initial.max_occupation = {}", fmt_f64(*max_occupation)).ok();
                writeln!(out, "initial.max_squeeze = {}", fmt_f64(*max_squeeze)).ok();
            }
        }
        if let Some(seed) = self.seed {
            writeln!(out, "initial.seed = {seed}").ok();
        }
        writeln!(out, "integrator.scheme = {}", self.integrator.scheme).ok();
        writeln!(out, "integrator.dt = {}", fmt_f64(self.integrator.dt)).ok();
        writeln!(out, "integrator.T = {}", fmt_f64(self.integrator.t_final)).ok();
        writeln!(out, "integrator.diagnostic_stride = {}", self.integrator.diagnostic_stride).ok();
        if let Some(dir) = &self.output_dir {
            let d = dir.to_str().ok_or_else(|| cfg_err("output directory is not UTF-8"))?;
            writeln!(out, "output.dir = {d}").ok();
        }
        writeln!(out, "checks.free_flow = {}", self.checks.free_flow).ok();
        writeln!(out, "checks.free_flow_tolerance = {}", fmt_f64(self.checks.free_flow_tolerance)).ok();
        writeln!(out, "checks.positivity_tolerance = {}", fmt_f64(self.checks.positivity_tolerance)).ok();
        Ok(out)
    }

    pub fn build_grid(&self) -> Result<TorusGrid> {
        TorusGrid::new(self.grid.dim, self.grid.length, self.grid.points).map_err(|e| cfg_err(e.to_string()))
    }

    /// Positivity of numeric fields, `dt ≤ T`, a valid grid and an even pair potential.
    pub fn validate(&self) -> Result<()> {
        let grid = self.build_grid()?;
        let positive = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(cfg_err(format!("field `{name}` must be positive, got {x}")))
            }
        };
        positive("integrator.dt", self.integrator.dt)?;
        positive("integrator.T", self.integrator.t_final)?;
        if self.integrator.dt > self.integrator.t_final {
            return Err(cfg_err(format!(
                "integrator.dt = {} exceeds integrator.T = {}",
                self.integrator.dt, self.integrator.t_final
            )));
        }
        if self.integrator.diagnostic_stride == 0 {
            return Err(cfg_err("field `integrator.diagnostic_stride` must be at least 1"));
        }
        positive("checks.free_flow_tolerance", self.checks.free_flow_tolerance)?;
        positive("checks.positivity_tolerance", self.checks.positivity_tolerance)?;
        pair_kernel(&grid, &self.pair).map_err(|e| cfg_err(format!("pair potential: {e}")))?;
        crate::grid::sample_real_field(&grid, &self.potential).map_err(|e| cfg_err(format!("potential: {e}")))?;
        match &self.initial {
            InitialSpec::Coherent(p) | InitialSpec::SqueezedThermal { packet: p, .. } => {
                positive("initial.particles", p.particles)?;
                positive("initial.width", p.width)?;
            }
            InitialSpec::Random { phi_norm, .. } if *phi_norm < 0.0 => {
                return Err(cfg_err("field `initial.phi_norm` must be non-negative"));
            }
            _ => {}
        }
        if let InitialSpec::SqueezedThermal { beta, .. } = &self.initial {
            positive("initial.beta", *beta)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) const SAMPLE: &str = "\
# interacting condensate
grid.d = 1
grid.L = 6.283185307179586
grid.n = 16
potential.kind = constant
potential.value = 0.0
pair.kind = gaussian
pair.amplitude = 0.5
pair.width = 0.3
initial.kind = coherent
initial.particles = 2.0
initial.width = 0.5
initial.mode = 2
integrator.dt = 0.001
integrator.T = 0.01
integrator.diagnostic_stride = 5
";

    #[test]
    fn parses_sample() {
        let c = RunConfig::parse(SAMPLE).unwrap();
        assert_eq!(c.grid, GridConfig { dim: 1, length: std::f64::consts::TAU, points: 16 });
        assert_eq!(c.integrator.scheme, Scheme::Rk4);
        assert_eq!(c.pair, FieldSpec::Gaussian { amplitude: 0.5, width: 0.3, center: [0.0; 3] });
        assert!(matches!(c.initial, InitialSpec::Coherent(PacketSpec { mode: [2, 0, 0], .. })));
        assert_eq!(c.checks, Checks::default());
    }

    #[test]
    fn missing_field_is_named() {
        let text = SAMPLE.replace("grid.n = 16\n", "");
        let err = RunConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains("grid.n"), "{err}");
        let text = SAMPLE.replace("integrator.dt = 0.001\n", "");
        assert!(RunConfig::parse(&text).unwrap_err().to_string().contains("integrator.dt"));
    }

    #[test]
    fn rejects_bad_input() {
        for (from, to) in [
            ("grid.n = 16", "grid.n = 12"),
            ("integrator.dt = 0.001", "integrator.dt = 0.1"),
            ("integrator.dt = 0.001", "integrator.dt = -1"),
            ("pair.width = 0.3", "pair.width = 0.3\npair.center = 0.4"),
            ("pair.width = 0.3", "pair.width = 0.3\npair.extra = 1"),
            ("grid.d = 1", "grid.d = 1\ngrid.d = 2"),
            ("grid.d = 1", "grid.d"),
            ("integrator.dt = 0.001", "integrator.dt = fast"),
            ("initial.kind = coherent", "initial.kind = cat"),
        ] {
            let text = SAMPLE.replace(from, to);
            assert!(matches!(RunConfig::parse(&text), Err(HfbError::Config(_))), "{to}");
        }
    }

    #[test]
    fn round_trip_all_initial_kinds() {
        let kinds = [
            "initial.kind = vacuum\n".to_string(),
            "initial.kind = squeezed_thermal\ninitial.particles = 1.0\ninitial.width = 0.4\ninitial.mode = 1\n\
             initial.center = 1.5\ninitial.beta = 1.0\ninitial.mu = -0.5\ninitial.squeeze = 0.3, 0.2\n\
             initial.squeeze_phase = 0.0, 0.4\n"
                .to_string(),
            "initial.kind = snapshot\ninitial.path = /tmp/x.snap\n".to_string(),
            "initial.kind = random\ninitial.band = 2\ninitial.phi_norm = 1.0\ninitial.max_occupation = 0.3\n\
             initial.max_squeeze = 0.3\ninitial.seed = 9\n"
                .to_string(),
        ];
        for k in kinds {
            let text = SAMPLE
                .replace("initial.kind = coherent\ninitial.particles = 2.0\ninitial.width = 0.5\ninitial.mode = 2\n", &k);
            let c = RunConfig::parse(&text).unwrap();
            let again = RunConfig::parse(&c.serialize().unwrap()).unwrap();
            assert_eq!(c, again);
            assert_eq!(c.serialize().unwrap(), again.serialize().unwrap());
        }
    }

    proptest! {
        #[test]
        fn parse_serialize_parse_is_identity(
            dt in 1e-6f64..1e-2,
            t in 1e-2f64..10.0,
            stride in 1usize..100,
            amp in -2.0f64..2.0,
            width in 0.05f64..2.0,
            particles in 1e-3f64..100.0,
            mode in -4i64..5,
            value in -1e3f64..1e3,
        ) {
            let text = SAMPLE
                .replace("integrator.dt = 0.001", &format!("integrator.dt = {dt:?}"))
                .replace("integrator.T = 0.01", &format!("integrator.T = {t:?}"))
                .replace("integrator.diagnostic_stride = 5", &format!("integrator.diagnostic_stride = {stride}"))
                .replace("pair.amplitude = 0.5", &format!("pair.amplitude = {amp:?}"))
                .replace("pair.width = 0.3", &format!("pair.width = {width:?}"))
                .replace("initial.particles = 2.0", &format!("initial.particles = {particles:?}"))
                .replace("initial.mode = 2", &format!("initial.mode = {mode}"))
                .replace("potential.value = 0.0", &format!("potential.value = {value:?}"));
            let c = RunConfig::parse(&text).unwrap();
            let again = RunConfig::parse(&c.serialize().unwrap()).unwrap();
            prop_assert_eq!(c, again);
        }
    }
}
