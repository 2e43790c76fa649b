//! Experiment configuration: declarative descriptors for systems, measure
//! backends, averaging schedules, region families, observables, and weights,
//! with resolution into the core library's objects.
//!
//! Configs are TOML by default; files ending in `.json` are accepted as an
//! alternative encoding of the same structure. Parsing round-trips: parse →
//! serialize → parse is the identity on the typed configuration, so configs
//! normalize cleanly and diffs stay meaningful.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use ergodiff_core::{
    DynamicalSystem, FolnerSchedule, MeasureModel, Observable, Point, RadiusSchedule,
    SpatialFamily, SystemKind, WeightSequence, WeightSpec,
};

/// Configuration failure: malformed input or a descriptor that does not
/// resolve. Both map to exit code 64.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "configuration error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

impl From<ergodiff_core::Error> for ConfigError {
    fn from(e: ergodiff_core::Error) -> Self {
        ConfigError(format!("descriptor did not resolve: {e}"))
    }
}

type Result<T> = std::result::Result<T, ConfigError>;

/// One experiment: every descriptor needed by any subcommand. Sections not
/// used by the invoked subcommand are permitted and ignored by it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub family: FamilyConfig,
    pub observable: ObservableConfig,
    #[serde(default)]
    pub weights: WeightConfig,
    pub window: WindowConfig,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<CounterexampleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gauge: Option<GaugeConfig>,
    /// Cartesian parameter grid for the `sweep` subcommand: dotted config
    /// paths mapped to the list of values each should take.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<BTreeMap<String, Vec<toml::Value>>>,
}

/// Dynamical system descriptor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "kebab-case")]
pub enum SystemConfig {
    Rotation { alpha: f64 },
    ToralTranslation { alphas: Vec<f64> },
    Doubling,
    Shift { symbols: u8 },
    Trivial { dim: usize },
}

impl SystemConfig {
    pub fn build(&self) -> Result<DynamicalSystem> {
        Ok(match self {
            SystemConfig::Rotation { alpha } => DynamicalSystem::rotation(*alpha),
            SystemConfig::ToralTranslation { alphas } => {
                DynamicalSystem::toral_translation(alphas)?
            }
            SystemConfig::Doubling => DynamicalSystem::doubling(),
            SystemConfig::Shift { symbols } => DynamicalSystem::shift(*symbols)?,
            SystemConfig::Trivial { dim } => DynamicalSystem::trivial(*dim)?,
        })
    }
}

/// Measure backend: deterministic quadrature grid, seeded Monte Carlo, or
/// exact cylinder-weight quadrature on shift spaces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    deny_unknown_fields,
    tag = "kind",
    rename_all = "kebab-case",
    rename_all_fields = "kebab-case"
)]
pub enum ModelConfig {
    Grid {
        n: usize,
    },
    MonteCarlo {
        n: usize,
        seed: u64,
        #[serde(default = "default_word_len")]
        word_len: usize,
    },
    ShiftQuadrature {
        word_len: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        probs: Option<Vec<f64>>,
    },
}

fn default_word_len() -> usize {
    8
}

impl ModelConfig {
    pub fn build(&self, sys: &DynamicalSystem) -> Result<MeasureModel> {
        Ok(match self {
            ModelConfig::Grid { n } => match sys.kind() {
                SystemKind::Rotation { .. } | SystemKind::Doubling => {
                    MeasureModel::circle_grid(*n)?
                }
                SystemKind::ToralTranslation { alphas } => {
                    MeasureModel::torus_grid(alphas.len(), *n)?
                }
                SystemKind::Trivial { dim } => MeasureModel::torus_grid(*dim, *n)?,
                SystemKind::Shift { .. } => {
                    return Err(ConfigError(
                        "model.kind = \"grid\" is not defined on shift spaces; \
                         use \"monte-carlo\" or \"shift-quadrature\""
                            .into(),
                    ))
                }
            },
            ModelConfig::MonteCarlo { n, seed, word_len } => {
                MeasureModel::monte_carlo(sys, *n, *seed, *word_len)?
            }
            ModelConfig::ShiftQuadrature { word_len, probs } => match sys.kind() {
                SystemKind::Shift { symbols } => {
                    MeasureModel::shift_quadrature(*symbols, *word_len, probs.as_deref())?
                }
                _ => {
                    return Err(ConfigError(
                        "model.kind = \"shift-quadrature\" requires a shift system".into(),
                    ))
                }
            },
        })
    }

    /// The seed driving this backend, if it is randomized.
    pub fn seed(&self) -> Option<u64> {
        match self {
            ModelConfig::MonteCarlo { seed, .. } => Some(*seed),
            _ => None,
        }
    }

    /// Applies a command-line seed override to a randomized backend.
    pub fn override_seed(&mut self, seed: u64) -> bool {
        match self {
            ModelConfig::MonteCarlo { seed: s, .. } => {
                *s = seed;
                true
            }
            _ => false,
        }
    }
}

/// Averaging-set schedule descriptor.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "kebab-case")]
pub enum ScheduleConfig {
    #[default]
    Interval,
    Box {
        dim: usize,
    },
    Polynomial {
        coeffs: Vec<f64>,
    },
    Explicit {
        sets: Vec<Vec<i64>>,
    },
}

impl ScheduleConfig {
    pub fn build(&self) -> FolnerSchedule {
        match self {
            ScheduleConfig::Interval => FolnerSchedule::Interval,
            ScheduleConfig::Box { dim } => FolnerSchedule::Box { dim: *dim },
            ScheduleConfig::Polynomial { coeffs } => FolnerSchedule::PolynomialImage {
                coeffs: coeffs.clone(),
            },
            ScheduleConfig::Explicit { sets } => FolnerSchedule::Explicit { sets: sets.clone() },
        }
    }
}

/// Radius schedule for shrinking-ball families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "kebab-case")]
pub enum RadiusConfig {
    Constant { r: f64 },
    PowerLaw { a: f64, s: f64 },
    Geometric { r0: f64, q: f64 },
}

impl RadiusConfig {
    pub fn build(&self) -> RadiusSchedule {
        match self {
            RadiusConfig::Constant { r } => RadiusSchedule::Constant { r: *r },
            RadiusConfig::PowerLaw { a, s } => RadiusSchedule::PowerLaw { a: *a, s: *s },
            RadiusConfig::Geometric { r0, q } => RadiusSchedule::Geometric { r0: *r0, q: *q },
        }
    }
}

/// A base point: torus coordinates for circle/torus systems, or a word of
/// symbol digits (e.g. `"0110"`) for shift systems.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BasePoint {
    Coords(Vec<f64>),
    Word(String),
}

impl BasePoint {
    pub fn build(&self, sys: &DynamicalSystem) -> Result<Point> {
        match (self, sys.kind()) {
            (BasePoint::Coords(c), SystemKind::Shift { .. }) => Err(ConfigError(format!(
                "shift base points are symbol words, not coordinates {c:?}"
            ))),
            (BasePoint::Coords(c), _) => {
                if c.len() == 1 {
                    Ok(Point::circle(c[0]))
                } else {
                    Ok(Point::torus(c))
                }
            }
            (BasePoint::Word(w), SystemKind::Shift { symbols }) => {
                let mut syms = Vec::with_capacity(w.len());
                for ch in w.chars() {
                    let d = ch.to_digit(10).ok_or_else(|| {
                        ConfigError(format!("base word {w:?} has a non-digit symbol {ch:?}"))
                    })?;
                    if d >= u32::from(*symbols) {
                        return Err(ConfigError(format!(
                            "base word symbol {d} outside alphabet of size {symbols}"
                        )));
                    }
                    syms.push(d as u8);
                }
                Ok(Point::word(&syms)?)
            }
            (BasePoint::Word(w), _) => Err(ConfigError(format!(
                "base word {w:?} only makes sense on a shift system"
            ))),
        }
    }

    /// The default base point of a system: the origin, or the all-zeros word.
    pub fn default_for(sys: &DynamicalSystem) -> Self {
        match sys.kind() {
            SystemKind::Shift { .. } => BasePoint::Word("0".into()),
            SystemKind::ToralTranslation { alphas } => {
                BasePoint::Coords(vec![0.0; alphas.len()])
            }
            SystemKind::Trivial { dim } => BasePoint::Coords(vec![0.0; *dim]),
            _ => BasePoint::Coords(vec![0.0]),
        }
    }
}

/// Spatial region family plus the base points to run at.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    deny_unknown_fields,
    tag = "kind",
    rename_all = "kebab-case",
    rename_all_fields = "kebab-case"
)]
pub enum FamilyConfig {
    WholeSpace {
        #[serde(default)]
        base_points: Vec<BasePoint>,
    },
    Balls {
        radius: RadiusConfig,
        #[serde(default)]
        base_points: Vec<BasePoint>,
    },
}

impl Default for FamilyConfig {
    fn default() -> Self {
        FamilyConfig::WholeSpace {
            base_points: Vec::new(),
        }
    }
}

impl FamilyConfig {
    pub fn build(&self) -> SpatialFamily {
        match self {
            FamilyConfig::WholeSpace { .. } => SpatialFamily::WholeSpace,
            FamilyConfig::Balls { radius, .. } => SpatialFamily::Balls {
                schedule: radius.build(),
            },
        }
    }

    /// Resolved base points; defaults to the system's origin when empty.
    pub fn build_base_points(&self, sys: &DynamicalSystem) -> Result<Vec<Point>> {
        let declared = match self {
            FamilyConfig::WholeSpace { base_points } | FamilyConfig::Balls { base_points, .. } => {
                base_points
            }
        };
        if declared.is_empty() {
            return Ok(vec![BasePoint::default_for(sys).build(sys)?]);
        }
        declared.iter().map(|b| b.build(sys)).collect()
    }
}

/// One term of a trigonometric polynomial: coefficient `re + i im` on the
/// character with integer frequency `m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrigTermConfig {
    pub m: i64,
    #[serde(default)]
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

/// Observable shape: the built-in closed-form library. Every member carries
/// its own certified smoothness metadata inside the core library.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ObservableShape {
    Character {
        #[serde(default)]
        axis: usize,
        m: i64,
    },
    Cosine {
        #[serde(default)]
        axis: usize,
        m: i64,
    },
    Sine {
        #[serde(default)]
        axis: usize,
        m: i64,
    },
    Trig {
        #[serde(default)]
        axis: usize,
        terms: Vec<TrigTermConfig>,
    },
    SymbolAt {
        position: i64,
        alphabet: u8,
    },
    Cylinder {
        position: i64,
        symbol: u8,
    },
    Coordinate {
        #[serde(default)]
        axis: usize,
    },
    Constant {
        re: f64,
        #[serde(default)]
        im: f64,
    },
}

/// Observable descriptor: a shape plus an optional additive real constant
/// (`f + offset`), kept separate so sup-norm estimates can track it exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ObservableConfig {
    #[serde(flatten)]
    pub shape: ObservableShape,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub offset: f64,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

impl ObservableConfig {
    pub fn build(&self) -> Result<Observable> {
        let base = match &self.shape {
            ObservableShape::Character { axis, m } => Observable::character(*axis, *m),
            ObservableShape::Cosine { axis, m } => Observable::cosine(*axis, *m),
            ObservableShape::Sine { axis, m } => Observable::sine(*axis, *m),
            ObservableShape::Trig { axis, terms } => {
                let pairs: Vec<(i64, Complex64)> = terms
                    .iter()
                    .map(|t| (t.m, Complex64::new(t.re, t.im)))
                    .collect();
                Observable::trig(*axis, &pairs)
            }
            ObservableShape::SymbolAt { position, alphabet } => {
                Observable::symbol_at(*position, *alphabet)
            }
            ObservableShape::Cylinder { position, symbol } => {
                Observable::cylinder(*position, *symbol)
            }
            ObservableShape::Coordinate { axis } => Observable::coordinate(*axis),
            ObservableShape::Constant { re, im } => {
                Observable::constant(Complex64::new(*re, *im))
            }
        };
        Ok(if self.offset == 0.0 {
            base
        } else {
            base.offset_by(self.offset)
        })
    }
}

/// Weight descriptor for weighted window averages.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "kebab-case")]
pub enum WeightConfig {
    #[default]
    Unit,
    /// `theta^j` with `theta = e^{2 pi i turns}`.
    ThetaTurns {
        turns: f64,
    },
    /// `theta^j` with `theta = re + i im` (must be unimodular).
    Theta {
        re: f64,
        im: f64,
    },
    /// `(-1)^j`.
    Alternating,
}

impl WeightConfig {
    pub fn build(&self) -> Result<WeightSpec> {
        Ok(match self {
            WeightConfig::Unit => WeightSpec::Unit,
            WeightConfig::ThetaTurns { turns } => WeightSpec::theta_turns(*turns),
            WeightConfig::Theta { re, im } => WeightSpec::theta(Complex64::new(*re, *im))?,
            WeightConfig::Alternating => WeightSpec::SequenceWeight {
                seq: WeightSequence::Alternating,
                bound: 1.0,
            },
        })
    }

    /// The underlying declared sequence, for weighted decay diagnostics.
    pub fn sequence(&self) -> Option<WeightSequence> {
        match self {
            WeightConfig::Alternating => Some(WeightSequence::Alternating),
            _ => None,
        }
    }
}

/// Window of averaging-set indices `k`: either a dense `1..=k_max` range or
/// an explicit increasing list of marks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct WindowConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marks: Option<Vec<usize>>,
}

impl WindowConfig {
    pub fn marks(&self) -> Result<Vec<usize>> {
        match (&self.marks, self.k_max) {
            (Some(marks), _) if !marks.is_empty() => Ok(marks.clone()),
            (_, Some(k_max)) if k_max >= 1 => Ok((1..=k_max).collect()),
            _ => Err(ConfigError(
                "window needs k-max >= 1 or a nonempty marks list".into(),
            )),
        }
    }
}

/// Tolerances and verdict thresholds shared by the subcommands.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ToleranceConfig {
    /// Diameter-decay test levels.
    #[serde(default = "default_deltas")]
    pub decay_deltas: Vec<f64>,
    /// Pass threshold for the tail of the offending fractions.
    #[serde(default = "default_decay_threshold")]
    pub decay_threshold: f64,
    /// Extra slack (beyond the quadrature tolerance) allowed in the
    /// dominance verdict `gap <= bound + quad_tol + margin`.
    #[serde(default = "default_margin")]
    pub bound_margin: f64,
    /// Minimum separation between the model mean and the gauge estimate
    /// required before a counterexample construction proceeds.
    #[serde(default = "default_gate")]
    pub gate: f64,
}

fn default_deltas() -> Vec<f64> {
    vec![0.01]
}
fn default_decay_threshold() -> f64 {
    0.05
}
fn default_margin() -> f64 {
    1e-12
}
fn default_gate() -> f64 {
    0.05
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        ToleranceConfig {
            decay_deltas: default_deltas(),
            decay_threshold: default_decay_threshold(),
            bound_margin: default_margin(),
            gate: default_gate(),
        }
    }
}

/// Output locations; the `--out` flag overrides `dir`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    /// Artifact file stem; defaults to the subcommand name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stem: Option<String>,
}

/// Oscillation thresholds for the divergence construction. When `lower` and
/// `upper` are omitted the construction centers them between the model mean
/// and the gauge estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct CounterexampleConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    #[serde(default = "default_shrink")]
    pub shrink: bool,
}

fn default_shrink() -> bool {
    true
}

impl CounterexampleConfig {
    pub fn thresholds(&self) -> Result<Option<(f64, f64)>> {
        match (self.lower, self.upper) {
            (Some(l), Some(u)) => Ok(Some((l, u))),
            (None, None) => Ok(None),
            _ => Err(ConfigError(
                "counterexample thresholds need both lower and upper, or neither".into(),
            )),
        }
    }
}

/// Parameters for the gauge subcommand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct GaugeConfig {
    /// Window length for the sup-norm estimate.
    pub k: usize,
    /// Evaluation grid resolution.
    pub resolution: usize,
    /// Longest period scanned by the periodic-orbit oracle; 0 disables it.
    #[serde(default = "default_orbit_period")]
    pub orbit_period: usize,
    /// When set, also runs the constancy check of the window averages at
    /// this tolerance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub herman_tolerance: Option<f64>,
    /// Also run the unique-ergodicity probe battery.
    #[serde(default)]
    pub ue: bool,
}

fn default_orbit_period() -> usize {
    12
}

impl ExperimentConfig {
    /// Parses a config file; `.json` files are read as JSON, anything else
    /// as TOML. Errors carry the parser's line/field diagnostics.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        if path.extension().and_then(|s| s.to_str()) == Some("json") {
            serde_json::from_str(&text)
                .map_err(|e| ConfigError(format!("{}: {e}", path.display())))
        } else {
            toml::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
        }
    }

    /// Canonical TOML serialization (normalized field order and defaults).
    pub fn canonical_toml(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| ConfigError(format!("cannot serialize config: {e}")))
    }

    /// Expands the `[sweep]` table into the Cartesian grid of patched
    /// configs, in lexicographic order of the sorted parameter paths. Each
    /// returned config has its `sweep` section removed.
    pub fn expand_sweep(&self) -> Result<Vec<(ExperimentConfig, String)>> {
        let Some(sweep) = &self.sweep else {
            return Err(ConfigError(
                "sweep subcommand needs a [sweep] table of parameter lists".into(),
            ));
        };
        if sweep.is_empty() {
            return Err(ConfigError("[sweep] table is empty".into()));
        }
        for (path, values) in sweep {
            if values.is_empty() {
                return Err(ConfigError(format!("sweep path {path:?} has no values")));
            }
        }
        let mut base = self.clone();
        base.sweep = None;
        let doc = toml::Value::try_from(&base)
            .map_err(|e| ConfigError(format!("cannot reserialize config: {e}")))?;
        let paths: Vec<&String> = sweep.keys().collect();
        let mut combos = vec![Vec::new()];
        for path in &paths {
            let mut next = Vec::new();
            for combo in &combos {
                for value in &sweep[*path] {
                    let mut c: Vec<(&str, &toml::Value)> = combo.clone();
                    c.push((path.as_str(), value));
                    next.push(c);
                }
            }
            combos = next;
        }
        let mut out = Vec::with_capacity(combos.len());
        for combo in combos {
            let mut patched = doc.clone();
            let mut label = Vec::new();
            for (path, value) in &combo {
                set_path(&mut patched, path, (*value).clone())?;
                label.push(format!("{path}={}", compact(value)));
            }
            let cfg: ExperimentConfig = patched
                .try_into()
                .map_err(|e| ConfigError(format!("sweep combination is malformed: {e}")))?;
            out.push((cfg, label.join(" ")));
        }
        Ok(out)
    }
}

fn compact(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Assigns `value` at a dotted path like `"family.radius.s"`, creating
/// intermediate tables as needed.
fn set_path(doc: &mut toml::Value, path: &str, value: toml::Value) -> Result<()> {
    let mut cursor = doc;
    let segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(ConfigError(format!("sweep path {path:?} has empty segments")));
    }
    for seg in &segments[..segments.len() - 1] {
        let table = cursor.as_table_mut().ok_or_else(|| {
            ConfigError(format!("sweep path {path:?} descends into a non-table"))
        })?;
        cursor = table
            .entry(seg.to_string())
            .or_insert_with(|| toml::Value::Table(toml::map::Map::new()));
    }
    let table = cursor
        .as_table_mut()
        .ok_or_else(|| ConfigError(format!("sweep path {path:?} descends into a non-table")))?;
    table.insert(segments[segments.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo_toml() -> &'static str {
        r#"
            [system]
            kind = "rotation"
            alpha = 0.6180339887498949

            [model]
            kind = "grid"
            n = 512

            [family]
            kind = "balls"
            base-points = [[0.25]]

            [family.radius]
            kind = "power-law"
            a = 1.0
            s = 2.0

            [observable]
            kind = "character"
            m = 1

            [window]
            k-max = 32
        "#
    }

    #[test]
    fn parse_serialize_parse_is_identity() {
        let parsed: ExperimentConfig = toml::from_str(demo_toml()).unwrap();
        let canon = parsed.canonical_toml().unwrap();
        let reparsed: ExperimentConfig = toml::from_str(&canon).unwrap();
        assert_eq!(parsed, reparsed);
        // And once more through the canonical form: normalization is stable.
        assert_eq!(canon, reparsed.canonical_toml().unwrap());
    }

    #[test]
    fn json_is_an_equivalent_encoding() {
        let parsed: ExperimentConfig = toml::from_str(demo_toml()).unwrap();
        let json = serde_json::to_string(&parsed).unwrap();
        let from_json: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed, from_json);
    }

    #[test]
    fn descriptors_resolve_to_core_objects() {
        let cfg: ExperimentConfig = toml::from_str(demo_toml()).unwrap();
        let sys = cfg.system.build().unwrap();
        let model = cfg.model.build(&sys).unwrap();
        assert_eq!(model.len(), 512);
        let f = cfg.observable.build().unwrap();
        assert!(f.holder().is_some(), "library observables carry certificates");
        let points = cfg.family.build_base_points(&sys).unwrap();
        assert_eq!(points.len(), 1);
        assert_eq!(cfg.window.marks().unwrap().len(), 32);
    }

    #[test]
    fn missing_required_field_is_rejected_with_field_name() {
        let broken = demo_toml().replace("alpha = 0.6180339887498949", "");
        let err = toml::from_str::<ExperimentConfig>(&broken).unwrap_err();
        assert!(err.to_string().contains("alpha"), "diagnostic: {err}");
    }

    #[test]
    fn unknown_section_is_rejected() {
        let broken = format!("{}\n[surprise]\nx = 1\n", demo_toml());
        assert!(toml::from_str::<ExperimentConfig>(&broken).is_err());
    }

    #[test]
    fn shift_base_points_parse_words() {
        let sys = DynamicalSystem::shift(2).unwrap();
        let p = BasePoint::Word("0110".into()).build(&sys).unwrap();
        assert_eq!(p.symbol_at(1).unwrap(), 1);
        assert!(BasePoint::Word("0120".into()).build(&sys).is_err());
        assert!(BasePoint::Coords(vec![0.5]).build(&sys).is_err());
    }

    #[test]
    fn sweep_expands_the_cartesian_grid_in_sorted_order() {
        let mut cfg: ExperimentConfig = toml::from_str(demo_toml()).unwrap();
        let mut sweep = BTreeMap::new();
        sweep.insert(
            "system.alpha".to_string(),
            vec![toml::Value::Float(0.3), toml::Value::Float(0.7)],
        );
        sweep.insert(
            "window.k-max".to_string(),
            vec![toml::Value::Integer(8), toml::Value::Integer(16)],
        );
        cfg.sweep = Some(sweep);
        let combos = cfg.expand_sweep().unwrap();
        assert_eq!(combos.len(), 4);
        // system.alpha sorts before window.k-max, so it is the outer loop.
        let alphas: Vec<f64> = combos
            .iter()
            .map(|(c, _)| match &c.system {
                SystemConfig::Rotation { alpha } => *alpha,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(alphas, vec![0.3, 0.3, 0.7, 0.7]);
        assert!(combos.iter().all(|(c, _)| c.sweep.is_none()));
        assert!(combos[0].1.contains("system.alpha=0.3"));
    }
}
