//! JSON scenarios: parse and validate a configuration, run its named
//! experiments in order and write a report with per-experiment CSV tables.
//!
//! A scenario names a chart, an algebra, a field profile and a cone vertex,
//! plus optional sections for the parametrix, energy balance, lattice
//! evolution, bound checks and the Cartan check. Every section has
//! defaults; [`Tolerances`] holds the pass thresholds.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::bounds::{check_series, BoundForm, BoundSpec, Verdict};
use crate::energy::{balance_cone, energy_balance, BalancePlan, EnergyReport, TimeVector};
use crate::evolution::{CauchyData, Evolution, EvolutionState, History, SpatialMetric, Torus};
use crate::fields::{self, FieldSource, Pointwise};
use crate::geometry::{Flrw, Minkowski, Schwarzschild, SchwarzschildIsotropic, SpacetimeChart, Vec4};
use crate::liegauge::cartan::{cartan_antisymmetry_residual, frame_riemann};
use crate::liegauge::{
    curvature_from_potential, ym_residual, Algebra, CartanPotential, CurvatureOf, DiagonalFrameField, TwoForm,
};
use crate::nullcone::{ConeParams, NullConeBundle, Vertex};
use crate::parametrix::{
    assemble_representation, canonical_seeds, laplacian_forms, solve_transport_many, vertex_limit, Shell,
};
use crate::{Error, Exec, Result};

/// Version of the scenario and report formats this build reads and writes.
pub const SCHEMA_VERSION: u32 = 1;

/// Chart names with their parameters and defaults.
pub const CHARTS: &[(&str, &[(&str, f64)])] = &[
    ("minkowski", &[]),
    ("schwarzschild", &[("mass", 1.0)]),
    ("schwarzschild_isotropic", &[("mass", 1.0)]),
    ("flrw", &[("a0", 1.0), ("t0", 1.0), ("exponent", 0.5)]),
];

/// Parameters accepted by each analytic field profile.
const PROFILE_PARAMS: &[(&str, &[&str])] = &[
    ("zero", &[]),
    ("plane_wave", &["amplitude", "kx", "ky", "kz", "ex", "ey", "ez", "phase"]),
    ("coulomb", &["charge", "mass"]),
    ("gaussian", &["amplitude", "width", "t0", "x0", "y0", "z0"]),
    ("constant_commutator", &["amplitude"]),
];

const VACUUM_CHARTS: &[&str] = &["minkowski", "schwarzschild", "schwarzschild_isotropic"];

/// Build a catalog chart from its name and parameters.
pub fn chart(name: &str, params: &BTreeMap<String, f64>) -> Result<Box<dyn SpacetimeChart>> {
    let Some((_, keys)) = CHARTS.iter().find(|(n, _)| *n == name) else {
        return Err(Error::UnknownCatalogEntry {
            kind: "chart",
            name: name.into(),
            available: CHARTS.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", "),
        });
    };
    let mut errs = Vec::new();
    for k in params.keys() {
        if !keys.iter().any(|(n, _)| n == k) {
            let known: Vec<&str> = keys.iter().map(|(n, _)| *n).collect();
            errs.push(format!("chart.params.{k}: not a parameter of `{name}` (accepts: {})", known.join(", ")));
        }
    }
    let get = |key: &str| -> f64 {
        let default = keys.iter().find(|(n, _)| *n == key).map(|(_, v)| *v).unwrap_or(f64::NAN);
        params.get(key).copied().unwrap_or(default)
    };
    let mut positive = |key: &str| {
        let v = get(key);
        if !(v > 0.0 && v.is_finite()) {
            errs.push(format!("chart.params.{key} = {v}: must be positive"));
        }
        v
    };
    let chart: Box<dyn SpacetimeChart> = match name {
        "minkowski" => Box::new(Minkowski),
        "schwarzschild" => Box::new(Schwarzschild { mass: positive("mass") }),
        "schwarzschild_isotropic" => Box::new(SchwarzschildIsotropic { mass: positive("mass") }),
        _ => {
            let (a0, t0) = (positive("a0"), positive("t0"));
            let exponent = get("exponent");
            if !exponent.is_finite() {
                errs.push(format!("chart.params.exponent = {exponent}: must be finite"));
            }
            Box::new(Flrw { a0, t0, exponent })
        }
    };
    if errs.is_empty() {
        Ok(chart)
    } else {
        Err(Error::Config(errs))
    }
}

/// Everything a scenario can refer to by name.
#[derive(Clone, Debug, Serialize)]
pub struct Catalog {
    pub charts: BTreeMap<String, BTreeMap<String, f64>>,
    pub algebras: Vec<&'static str>,
    pub field_profiles: BTreeMap<String, Vec<&'static str>>,
    pub evolution_profiles: Vec<&'static str>,
    pub spatial_metrics: Vec<&'static str>,
    pub experiments: Vec<&'static str>,
    pub schema_version: u32,
}

pub fn catalog() -> Catalog {
    Catalog {
        charts: CHARTS
            .iter()
            .map(|(n, p)| (n.to_string(), p.iter().map(|(k, v)| (k.to_string(), *v)).collect()))
            .collect(),
        algebras: vec!["u1", "su2", "so31"],
        field_profiles: PROFILE_PARAMS.iter().map(|(n, p)| (n.to_string(), p.to_vec())).collect(),
        evolution_profiles: crate::evolution::PROFILES.to_vec(),
        spatial_metrics: vec!["flat", "conformal"],
        experiments: Experiment::ALL.iter().map(|e| e.name()).collect(),
        schema_version: SCHEMA_VERSION,
    }
}

/// A named experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    /// Optical scalars, shell areas and frame pairings of the vertex cone.
    ConeGeometry,
    /// Transport of the canonical seeds along the vertex cone.
    Transport,
    /// Representation of ⟨J_p, F(p)⟩ from cone and initial-slice data.
    Parametrix,
    /// Lattice evolution diagnostics and/or the cone energy identity.
    EnergyBalance,
    /// Grönwall and Pachpatte envelopes and series checks.
    Bounds,
    /// Curvature of the Levi-Civita connection as an so(3,1) gauge field.
    CartanCheck,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::ConeGeometry,
        Experiment::Transport,
        Experiment::Parametrix,
        Experiment::EnergyBalance,
        Experiment::Bounds,
        Experiment::CartanCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::ConeGeometry => "cone_geometry",
            Experiment::Transport => "transport",
            Experiment::Parametrix => "parametrix",
            Experiment::EnergyBalance => "energy_balance",
            Experiment::Bounds => "bounds",
            Experiment::CartanCheck => "cartan_check",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartConfig {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl Default for ChartConfig {
    fn default() -> Self {
        Self { name: "minkowski".into(), params: BTreeMap::new() }
    }
}

/// A named profile with numeric parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileConfig {
    pub profile: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self { profile: "zero".into(), params: BTreeMap::new() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VertexConfig {
    pub p: Vec4,
    /// Observer at the vertex; the unit normal of the constant-t slice when absent.
    #[serde(default)]
    pub t_p: Option<Vec4>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConeConfig {
    /// Number of ray directions, of the form 2n².
    pub n_dirs: usize,
    pub s_max: f64,
    pub ds: f64,
    /// Optical scalars below s_min_factor·ds take their flat values.
    pub s_min_factor: f64,
    /// Smallest affine parameter included in the optical and area metrics.
    pub s_from: f64,
}

impl Default for ConeConfig {
    fn default() -> Self {
        Self { n_dirs: 128, s_max: 1.0, ds: 1e-3, s_min_factor: 10.0, s_from: 0.1 }
    }
}

/// A cone resolution used in refinement studies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub n_dirs: usize,
    pub ds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParametrixConfig {
    /// Time of the initial slice; one unit before the vertex when absent.
    pub slice_time: Option<f64>,
    /// Proper-time offset of the neighbouring cones.
    pub neighbour_delta: f64,
    /// Resolutions, coarse to fine, for the convergence order.
    pub refinement: Vec<Resolution>,
    /// Vertex time minus slice time of the cuts used for the vertex limit.
    pub vertex_eps: Vec<f64>,
    /// Affine radius of the sphere used for the self-adjointness check.
    pub self_adjoint_radius: f64,
    /// Number of random field pairs in the self-adjointness check.
    pub self_adjoint_samples: usize,
}

impl Default for ParametrixConfig {
    fn default() -> Self {
        Self {
            slice_time: None,
            neighbour_delta: 1e-3,
            refinement: Vec::new(),
            vertex_eps: Vec::new(),
            self_adjoint_radius: 0.5,
            self_adjoint_samples: 3,
        }
    }
}

/// Where the field of an energy balance comes from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergySource {
    /// The scenario's analytic field profile on its chart.
    #[default]
    Field,
    /// A recorded lattice evolution on a flat 3-torus.
    Evolution,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyConfig {
    pub plan: BalancePlan,
    #[serde(default)]
    pub time_vector: TimeVector,
    #[serde(default)]
    pub source: EnergySource,
    /// Cone step sizes, coarse to fine; the cone's ds when empty.
    #[serde(default)]
    pub refinement_ds: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub torus: Torus,
    #[serde(default)]
    pub metric: SpatialMetric,
    /// Overrides the scenario algebra.
    #[serde(default)]
    pub algebra: Option<String>,
    /// Initial data, summed over the listed profiles.
    pub initial: Vec<ProfileConfig>,
    /// Time step; `courant · dx` when absent.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_courant")]
    pub courant: f64,
    /// Exactly one of `steps` and `t_final` is required.
    #[serde(default)]
    pub steps: Option<u64>,
    #[serde(default)]
    pub t_final: Option<f64>,
    /// Diagnostics cadence in steps.
    #[serde(default = "default_every")]
    pub every: u64,
    #[serde(default)]
    pub dissipation: f64,
    /// Snapshot cadence when the evolution feeds an energy balance.
    #[serde(default = "default_history_every")]
    pub history_every: u64,
}

fn default_courant() -> f64 {
    0.25
}

fn default_every() -> u64 {
    10
}

fn default_history_every() -> u64 {
    2
}

/// A bound with an optional measured series to compare against it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub bound: BoundSpec,
    #[serde(default)]
    pub series: Option<Series>,
    #[serde(default = "default_rtol")]
    pub rtol: f64,
}

fn default_rtol() -> f64 {
    1e-9
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CartanConfig {
    /// Evaluation points; the vertex when empty.
    pub points: Vec<Vec4>,
    /// Finite-difference step for the connection derivatives.
    pub h: f64,
}

impl Default for CartanConfig {
    fn default() -> Self {
        Self { points: Vec::new(), h: 1e-2 }
    }
}

/// Pass thresholds. Upper bounds unless noted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// max |s·trχ/2 − 1| on flat cones.
    pub optical: f64,
    /// max |A(s)/(4πs²) − 1| on flat cones.
    pub area_ratio: f64,
    /// Expected exponent of A(s)/(4πs²) − 1 on curved cones, and its band.
    pub area_exponent: f64,
    pub area_exponent_band: f64,
    /// Null-frame pairing residual.
    pub frame: f64,
    /// max |sλ − J_p| where the transport is exact.
    pub transport_seed: f64,
    /// sup |sλ|/|J_p|.
    pub transport_sup: f64,
    /// Relative representation error per seed.
    pub parametrix: f64,
    /// Lower bound on the measured refinement order.
    pub refinement_order: f64,
    /// Relative error of the extrapolated vertex limit.
    pub vertex_limit: f64,
    /// Laplacian integration-by-parts residual on random fields.
    pub self_adjoint: f64,
    /// Relative lattice energy drift without dissipation.
    pub energy_drift: f64,
    /// Growth factor of the constraint residual.
    pub constraint_growth: f64,
    /// Relative energy-identity residual with a Killing time field on flat space.
    pub flat_balance: f64,
    /// Relative energy-identity residual otherwise.
    pub curved_balance: f64,
    /// Cartan curvature against the Riemann tensor, and connection antisymmetry.
    pub cartan: f64,
    /// Yang-Mills residual of the Cartan curvature on vacuum charts.
    pub ym_residual: f64,
    /// Blow-up time of the Riccati reduction against 1/c.
    pub blowup: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            optical: 1e-6,
            area_ratio: 1e-3,
            area_exponent: 2.0,
            area_exponent_band: 0.3,
            frame: 1e-10,
            transport_seed: 1e-10,
            transport_sup: 1.5,
            parametrix: 2e-2,
            refinement_order: 1.0,
            vertex_limit: 1e-2,
            self_adjoint: 1e-8,
            energy_drift: 1e-6,
            constraint_growth: 10.0,
            flat_balance: 1e-3,
            curved_balance: 1e-2,
            cartan: 1e-6,
            ym_residual: 1e-6,
            blowup: 1e-4,
        }
    }
}

/// A parsed and validated scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub chart: ChartConfig,
    #[serde(default = "default_algebra")]
    pub algebra: String,
    #[serde(default)]
    pub field: ProfileConfig,
    #[serde(default)]
    pub vertex: VertexConfig,
    #[serde(default)]
    pub cone: ConeConfig,
    #[serde(default)]
    pub parametrix: ParametrixConfig,
    #[serde(default)]
    pub energy: Option<EnergyConfig>,
    #[serde(default)]
    pub evolution: Option<EvolutionConfig>,
    #[serde(default)]
    pub bounds: Vec<BoundCheck>,
    #[serde(default)]
    pub cartan: CartanConfig,
    #[serde(default)]
    pub experiments: Vec<Experiment>,
    /// Seed of the randomised checks.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub exec: Exec,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Keys ignored outside strict mode.
    #[serde(skip)]
    pub warnings: Vec<String>,
}

fn default_name() -> String {
    "scenario".into()
}

fn default_algebra() -> String {
    "u1".into()
}

/// Parse a JSON scenario. Every semantic violation is listed in one
/// [`Error::Config`]; unknown keys are violations in strict mode and
/// warnings otherwise. Sections with a fixed shape (torus, balance plan,
/// bound specs) always reject unknown keys.
pub fn parse_config(document: &str, strict: bool) -> Result<Scenario> {
    let value: Value =
        serde_json::from_str(document).map_err(|e| Error::Config(vec![format!("not valid JSON: {e}")]))?;
    match value.get("schema_version").map(|v| v.as_u64()) {
        None => return Err(Error::Config(vec!["schema_version: required".into()])),
        Some(Some(v)) if v == SCHEMA_VERSION as u64 => {}
        Some(v) => {
            return Err(Error::Config(vec![format!(
                "schema_version = {}: this build reads version {SCHEMA_VERSION}",
                v.map_or_else(|| value["schema_version"].to_string(), |v| v.to_string())
            )]))
        }
    }
    let mut sc: Scenario = serde_json::from_str(document).map_err(|e| Error::Config(vec![e.to_string()]))?;
    let mut unknown = Vec::new();
    unknown_keys(&value, &serde_json::to_value(&sc)?, "", &mut unknown);
    let mut errs = validate(&sc);
    for key in unknown {
        if strict {
            errs.push(format!("{key}: unknown key"));
        } else {
            sc.warnings.push(format!("{key}: unknown key ignored"));
        }
    }
    if errs.is_empty() {
        Ok(sc)
    } else {
        Err(Error::Config(errs))
    }
}

/// Keys present in `given` but absent from the re-serialised scenario.
fn unknown_keys(given: &Value, known: &Value, path: &str, out: &mut Vec<String>) {
    match (given, known) {
        (Value::Object(g), Value::Object(k)) => {
            for (key, v) in g {
                let p = if path.is_empty() { key.clone() } else { format!("{path}.{key}") };
                match k.get(key) {
                    None => out.push(p),
                    Some(kv) => unknown_keys(v, kv, &p, out),
                }
            }
        }
        (Value::Array(g), Value::Array(k)) => {
            for (i, (a, b)) in g.iter().zip(k).enumerate() {
                unknown_keys(a, b, &format!("{path}[{i}]"), out);
            }
        }
        _ => {}
    }
}

fn positive(errs: &mut Vec<String>, name: &str, v: f64) {
    if !(v > 0.0 && v.is_finite()) {
        errs.push(format!("{name} = {v}: must be positive"));
    }
}

fn config_messages(e: Error, errs: &mut Vec<String>) {
    match e {
        Error::Config(list) => errs.extend(list),
        other => errs.push(other.to_string()),
    }
}

/// All semantic violations of a scenario.
pub fn validate(sc: &Scenario) -> Vec<String> {
    let mut errs = Vec::new();
    let chart = match chart(&sc.chart.name, &sc.chart.params) {
        Ok(c) => Some(c),
        Err(e) => {
            config_messages(e, &mut errs);
            None
        }
    };
    let alg = match Algebra::by_name(&sc.algebra) {
        Ok(a) => Some(a),
        Err(e) => {
            errs.push(format!("algebra: {e}"));
            None
        }
    };
    match PROFILE_PARAMS.iter().find(|(n, _)| *n == sc.field.profile) {
        None => errs.push(format!(
            "field.profile: unknown profile `{}`; available: {}",
            sc.field.profile,
            fields::PROFILES.join(", ")
        )),
        Some((_, keys)) => {
            for k in sc.field.params.keys() {
                if !keys.contains(&k.as_str()) {
                    errs.push(format!(
                        "field.params.{k}: not a parameter of `{}` (accepts: {})",
                        sc.field.profile,
                        keys.join(", ")
                    ));
                }
            }
            if let Some(alg) = &alg {
                if let Err(e) = fields::profile(&sc.field.profile, alg, &sc.field.params) {
                    config_messages(e, &mut errs);
                }
            }
        }
    }
    if let Some(chart) = &chart {
        let v = match sc.vertex.t_p {
            Some(t) => Vertex::new(chart.as_ref(), sc.vertex.p, t),
            None => Vertex::at_rest(chart.as_ref(), sc.vertex.p),
        };
        if let Err(e) = v {
            errs.push(format!("vertex: {e}"));
        }
    }
    let c = &sc.cone;
    if let Err(e) = ConeParams::with_directions(c.n_dirs, c.s_max, c.ds) {
        errs.push(format!("cone.n_dirs: {e}"));
    }
    positive(&mut errs, "cone.s_max", c.s_max);
    positive(&mut errs, "cone.ds", c.ds);
    if !(c.s_min_factor >= 0.0 && c.s_min_factor.is_finite()) {
        errs.push(format!("cone.s_min_factor = {}: must be non-negative", c.s_min_factor));
    }
    if !(c.s_from > 0.0 && c.s_from < c.s_max) {
        errs.push(format!("cone.s_from = {}: must lie in (0, s_max)", c.s_from));
    }
    let has = |e: Experiment| sc.experiments.contains(&e);
    validate_parametrix(sc, &mut errs);
    if let Some(ev) = &sc.evolution {
        validate_evolution(ev, alg.as_ref(), &sc.algebra, sc.exec, &mut errs);
    }
    if let Some(en) = &sc.energy {
        if let Err(e) = en.plan.validate(sc.vertex.p[0]) {
            errs.extend(match e {
                Error::Config(l) => l.into_iter().map(|m| format!("energy.plan: {m}")).collect(),
                other => vec![format!("energy.plan: {other}")],
            });
        }
        for (i, &ds) in en.refinement_ds.iter().enumerate() {
            positive(&mut errs, &format!("energy.refinement_ds[{i}]"), ds);
        }
        if en.source == EnergySource::Evolution {
            match &sc.evolution {
                None => errs.push("energy.source = evolution: needs an `evolution` section".into()),
                Some(ev) if ev.torus.dim != 3 || ev.metric != SpatialMetric::Flat => {
                    errs.push("energy.source = evolution: needs a flat 3-torus evolution".into())
                }
                Some(_) if sc.chart.name != "minkowski" => {
                    errs.push("energy.source = evolution: needs the minkowski chart".into())
                }
                _ => {}
            }
        }
    }
    if has(Experiment::EnergyBalance) && sc.energy.is_none() && sc.evolution.is_none() {
        errs.push("experiments: energy_balance needs an `energy` or `evolution` section".into());
    }
    if has(Experiment::Bounds) && sc.bounds.is_empty() {
        errs.push("experiments: bounds needs at least one entry in `bounds`".into());
    }
    for (i, b) in sc.bounds.iter().enumerate() {
        if let Err(e) = b.bound.validate() {
            errs.extend(match e {
                Error::Config(l) => l.into_iter().map(|m| format!("bounds[{i}].bound: {m}")).collect(),
                other => vec![format!("bounds[{i}].bound: {other}")],
            });
        }
        if let Some(s) = &b.series {
            if s.times.len() != s.values.len() {
                errs.push(format!("bounds[{i}].series: {} times for {} values", s.times.len(), s.values.len()));
            }
            if s.times.iter().any(|&t| t < b.bound.t0 || t > b.bound.t1) {
                errs.push(format!("bounds[{i}].series.times: must lie in [{}, {}]", b.bound.t0, b.bound.t1));
            }
        }
        if !(b.rtol >= 0.0) {
            errs.push(format!("bounds[{i}].rtol = {}: must be non-negative", b.rtol));
        }
    }
    positive(&mut errs, "cartan.h", sc.cartan.h);
    let t = serde_json::to_value(&sc.tolerances).unwrap_or(Value::Null);
    if let Value::Object(m) = t {
        for (k, v) in m {
            if let Some(x) = v.as_f64() {
                positive(&mut errs, &format!("tolerances.{k}"), x);
            }
        }
    }
    errs
}

fn validate_parametrix(sc: &Scenario, errs: &mut Vec<String>) {
    let p = &sc.parametrix;
    let tp = sc.vertex.p[0];
    if let Some(t) = p.slice_time {
        if !(t < tp) {
            errs.push(format!("parametrix.slice_time = {t}: must precede the vertex time {tp}"));
        }
    }
    positive(errs, "parametrix.neighbour_delta", p.neighbour_delta);
    positive(errs, "parametrix.self_adjoint_radius", p.self_adjoint_radius);
    for (i, r) in p.refinement.iter().enumerate() {
        if let Err(e) = ConeParams::with_directions(r.n_dirs, 1.0, r.ds) {
            errs.push(format!("parametrix.refinement[{i}].n_dirs: {e}"));
        }
        positive(errs, &format!("parametrix.refinement[{i}].ds"), r.ds);
    }
    if p.refinement.len() == 1 {
        errs.push("parametrix.refinement: needs at least two resolutions".into());
    }
    for (i, &e) in p.vertex_eps.iter().enumerate() {
        positive(errs, &format!("parametrix.vertex_eps[{i}]"), e);
    }
    if p.vertex_eps.len() == 1 {
        errs.push("parametrix.vertex_eps: needs at least two cuts".into());
    }
}

fn validate_evolution(
    ev: &EvolutionConfig,
    alg: Option<&Algebra>,
    default_alg: &str,
    exec: Exec,
    errs: &mut Vec<String>,
) {
    let alg = match &ev.algebra {
        Some(name) => match Algebra::by_name(name) {
            Ok(a) => Some(a),
            Err(e) => {
                errs.push(format!("evolution.algebra: {e}"));
                None
            }
        },
        None => alg.cloned().or_else(|| Algebra::by_name(default_alg).ok()),
    };
    if let Err(e) = ev.torus.validate() {
        config_messages(e, errs);
        return;
    }
    if ev.initial.is_empty() {
        errs.push("evolution.initial: needs at least one profile".into());
    }
    match (ev.steps, ev.t_final) {
        (Some(_), None) => {}
        (None, Some(t)) => positive(errs, "evolution.t_final", t),
        _ => errs.push("evolution: give exactly one of `steps` and `t_final`".into()),
    }
    if ev.every == 0 {
        errs.push("evolution.every: must be at least 1".into());
    }
    if ev.history_every == 0 {
        errs.push("evolution.history_every: must be at least 1".into());
    }
    if !(ev.dissipation >= 0.0) {
        errs.push(format!("evolution.dissipation = {}: must be non-negative", ev.dissipation));
    }
    if let Some(dt) = ev.dt {
        positive(errs, "evolution.dt", dt);
    }
    positive(errs, "evolution.courant", ev.courant);
    let Some(alg) = alg else { return };
    // the metric check needs only a small grid
    let probe = Torus { n: ev.torus.n.min(16), ..ev.torus };
    match Evolution::new(probe, alg.clone(), ev.metric, exec) {
        Err(e) => errs.push(format!("evolution.metric: {e}")),
        Ok(evo) => {
            for (i, p) in ev.initial.iter().enumerate() {
                if let Err(e) = evo.initial_data(&p.profile, &p.params) {
                    errs.push(format!("evolution.initial[{i}]: {e}"));
                }
            }
            let scale = ev.torus.dx() / probe.dx();
            let limit = evo.cfl_limit() * scale;
            let dt = ev.dt.unwrap_or(ev.courant * ev.torus.dx());
            if dt > limit {
                errs.push(format!("evolution.dt = {dt}: violates the CFL limit {limit}"));
            }
        }
    }
}

/// Whether a report passed, failed its checks, or could not be computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Error,
}

/// A metric compared against an interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub metric: String,
    /// `None` when the measured value is not finite.
    pub value: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub passed: bool,
}

/// Rows of one CSV file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: Experiment,
    pub status: Status,
    pub metrics: BTreeMap<String, f64>,
    /// Metrics of the randomised checks; the only part that depends on the seed.
    pub stochastic: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    /// CSV files written by [`emit`], relative to the output directory.
    pub files: Vec<String>,
    pub notes: Vec<String>,
    pub error: Option<String>,
    #[serde(skip)]
    pub tables: Vec<Table>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub name: String,
    pub code_version: String,
    /// SHA-256 of the scenario without its seed and output directory.
    pub config_hash: String,
    pub seed: u64,
    /// Some experiment raised an error.
    pub partial: bool,
    /// Not partial and every check passed.
    pub passed: bool,
    pub warnings: Vec<String>,
    pub experiments: Vec<ExperimentReport>,
}

impl RunReport {
    pub fn experiment(&self, e: Experiment) -> Option<&ExperimentReport> {
        self.experiments.iter().find(|r| r.experiment == e)
    }
}

/// Hex SHA-256 of the scenario's canonical JSON, seed and output excluded.
pub fn config_hash(sc: &Scenario) -> String {
    let mut c = sc.clone();
    c.seed = 0;
    c.output = None;
    let bytes = serde_json::to_vec(&c).expect("scenario serialises");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Default)]
struct Outcome {
    metrics: BTreeMap<String, f64>,
    stochastic: BTreeMap<String, f64>,
    checks: Vec<Check>,
    tables: Vec<Table>,
    notes: Vec<String>,
}

impl Outcome {
    fn metric(&mut self, name: &str, v: f64) {
        if v.is_finite() {
            self.metrics.insert(name.into(), v);
        } else {
            self.notes.push(format!("{name} is not finite ({v})"));
        }
    }

    fn check(&mut self, name: &str, v: f64, lower: Option<f64>, upper: Option<f64>) {
        self.metric(name, v);
        let passed = v.is_finite() && lower.is_none_or(|l| v >= l) && upper.is_none_or(|u| v <= u);
        self.checks.push(Check { metric: name.into(), value: v.is_finite().then_some(v), lower, upper, passed });
    }

    fn at_most(&mut self, name: &str, v: f64, upper: f64) {
        self.check(name, v, None, Some(upper));
    }

    fn at_least(&mut self, name: &str, v: f64, lower: f64) {
        self.check(name, v, Some(lower), None);
    }
}

struct Context<'a> {
    sc: &'a Scenario,
    chart: &'a dyn SpacetimeChart,
    alg: Algebra,
    field: Box<dyn FieldSource>,
    vertex: Vertex,
    exec: Exec,
    /// The vertex cone, shared by the experiments that use it.
    cone: std::cell::OnceCell<NullConeBundle<'a>>,
}

impl<'a> Context<'a> {
    fn flat(&self) -> bool {
        self.sc.chart.name == "minkowski"
    }

    fn n_theta(&self, n_dirs: usize) -> Result<usize> {
        Ok(ConeParams::with_directions(n_dirs, 1.0, 1.0)?.n_theta)
    }

    fn vertex_cone(&self) -> Result<&NullConeBundle<'a>> {
        if let Some(c) = self.cone.get() {
            return Ok(c);
        }
        let c = NullConeBundle::emanate(self.chart, self.vertex, &self.cone_params()?, self.exec)?;
        Ok(self.cone.get_or_init(|| c))
    }

    fn cone_params(&self) -> Result<ConeParams> {
        let c = &self.sc.cone;
        let mut p = ConeParams::with_directions(c.n_dirs, c.s_max, c.ds)?;
        p.s_min_factor = c.s_min_factor;
        Ok(p)
    }

    /// Cone long enough to cross every slice, cut by each of them.
    fn cone_to_slices(&self, n_dirs: usize, ds: f64, slices: Vec<f64>) -> Result<NullConeBundle<'_>> {
        let n_theta = self.n_theta(n_dirs)?;
        let t_min = slices.iter().copied().fold(f64::INFINITY, f64::min);
        let s_max = NullConeBundle::s_max_for_slice(self.chart, &self.vertex, n_theta.min(6), t_min, self.exec)?;
        let params = ConeParams {
            n_theta,
            n_phi: 2 * n_theta,
            s_max,
            ds,
            s_min_factor: self.sc.cone.s_min_factor,
            slices,
            ..ConeParams::default()
        };
        NullConeBundle::emanate(self.chart, self.vertex, &params, self.exec)
    }
}

/// Execute the scenario's experiments in order. An experiment that raises
/// an error is reported with status `error` and the run continues.
pub fn run(sc: &Scenario) -> Result<RunReport> {
    let chart = chart(&sc.chart.name, &sc.chart.params)?;
    let alg = Algebra::by_name(&sc.algebra)?;
    let field = fields::profile(&sc.field.profile, &alg, &sc.field.params)?;
    let vertex = match sc.vertex.t_p {
        Some(t) => Vertex::new(chart.as_ref(), sc.vertex.p, t)?,
        None => Vertex::at_rest(chart.as_ref(), sc.vertex.p)?,
    };
    let cx = Context { sc, chart: chart.as_ref(), alg, field, vertex, exec: sc.exec, cone: Default::default() };
    let mut experiments = Vec::with_capacity(sc.experiments.len());
    for (i, &e) in sc.experiments.iter().enumerate() {
        let mut out = Outcome::default();
        let result = match e {
            Experiment::ConeGeometry => cone_geometry(&cx, &mut out),
            Experiment::Transport => transport(&cx, &mut out),
            Experiment::Parametrix => parametrix(&cx, &mut out),
            Experiment::EnergyBalance => energy(&cx, &mut out),
            Experiment::Bounds => bounds(&cx, &mut out),
            Experiment::CartanCheck => cartan(&cx, &mut out),
        };
        let status = match &result {
            Err(_) => Status::Error,
            Ok(()) if out.checks.iter().all(|c| c.passed) => Status::Pass,
            Ok(()) => Status::Fail,
        };
        let files = out.tables.iter().map(|t| format!("{i:02}_{}_{}.csv", e.name(), t.name)).collect();
        experiments.push(ExperimentReport {
            experiment: e,
            status,
            metrics: out.metrics,
            stochastic: out.stochastic,
            checks: out.checks,
            files,
            notes: out.notes,
            error: result.err().map(|e| e.to_string()),
            tables: out.tables,
        });
    }
    let partial = experiments.iter().any(|r| r.status == Status::Error);
    Ok(RunReport {
        schema_version: SCHEMA_VERSION,
        name: sc.name.clone(),
        code_version: env!("CARGO_PKG_VERSION").into(),
        config_hash: config_hash(sc),
        seed: sc.seed,
        partial,
        passed: !partial && experiments.iter().all(|r| r.status == Status::Pass),
        warnings: sc.warnings.clone(),
        experiments,
    })
}

/// Least-squares slope of log|y| against log x.
fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let xs: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = y.iter().map(|v| v.abs().ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}

fn cone_geometry(cx: &Context, out: &mut Outcome) -> Result<()> {
    let cfg = &cx.sc.cone;
    let tol = &cx.sc.tolerances;
    let cone = cx.vertex_cone()?;
    if let Some((ray, t)) = cone.first_termination() {
        out.notes.push(format!("ray {ray} stopped at s = {}", t.s()));
    }
    let live = cone.live_shells();
    let rows = cx.exec.map(live.saturating_sub(1), |j| -> Result<[f64; 3]> {
        let k = j + 1;
        let s = cone.shells[k];
        let mut dev = 0.0f64;
        for i in 0..cone.n_rays() {
            let o = cone.optical_scalars(i, k)?;
            dev = dev.max((s * o.tr_chi / 2.0 - 1.0).abs());
        }
        Ok([s, dev, cone.shell_area(k)? / (4.0 * PI * s * s) - 1.0])
    });
    let rows: Vec<[f64; 3]> = rows.into_iter().collect::<Result<_>>()?;
    let mut table = Table::new("shells", &["s", "optical_deviation", "area_ratio_deviation"]);
    let (mut optical, mut area) = (0.0f64, 0.0f64);
    let s_area = cfg.s_max.min(1.0);
    for r in &rows {
        table.rows.push(r.to_vec());
        if r[0] >= cfg.s_from {
            optical = optical.max(r[1]);
            if r[0] <= s_area + 1e-12 {
                area = area.max(r[2].abs());
            }
        }
    }
    out.tables.push(table);
    let frame = cone.max_frame_residual(cx.exec)?;
    out.metric("null_residual", cone.max_null_residual());
    out.metric("area_transport_residual", cone.area_transport_residual()?);
    out.at_most("frame_residual", frame, tol.frame);
    if cx.flat() {
        out.at_most("optical_deviation", optical, tol.optical);
        out.at_most("area_ratio_deviation", area, tol.area_ratio);
    } else {
        out.metric("optical_deviation", optical);
        out.metric("area_ratio_deviation", area);
        // geometric sample of shells across [s_from, min(s_max, 1)]
        let (lo, hi) = (cfg.s_from, s_area);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for j in 0..6 {
            let target = lo * (hi / lo).powf(j as f64 / 5.0);
            if let Some(r) = rows.iter().min_by(|a, b| (a[0] - target).abs().total_cmp(&(b[0] - target).abs())) {
                if xs.last() != Some(&r[0]) && r[2] != 0.0 {
                    xs.push(r[0]);
                    ys.push(r[2]);
                }
            }
        }
        if xs.len() >= 2 {
            let p = loglog_slope(&xs, &ys);
            out.check(
                "area_exponent",
                p,
                Some(tol.area_exponent - tol.area_exponent_band),
                Some(tol.area_exponent + tol.area_exponent_band),
            );
        } else {
            out.notes.push("too few shells for the area-law fit".into());
        }
    }
    Ok(())
}

fn transport(cx: &Context, out: &mut Outcome) -> Result<()> {
    let tol = &cx.sc.tolerances;
    let cone = cx.vertex_cone()?;
    let seeds = canonical_seeds(&cx.alg);
    let fields = solve_transport_many(cone, &Pointwise(cx.field.as_ref()), &cx.alg, &seeds, cx.exec)?;
    let mut table = Table::new("seeds", &["seed", "seed_deviation", "sup_ratio", "norm_law_residual"]);
    let (mut dev, mut sup, mut law) = (0.0f64, 0.0f64, 0.0f64);
    let s_top = cone.shells[cone.live_shells() - 1];
    for (i, tr) in fields.iter().enumerate() {
        let d = tr.max_seed_deviation();
        let r = tr.sup_ratio(cone, &cx.alg, s_top)?;
        let l = tr.norm_law_residual(cone, &cx.alg)?;
        table.rows.push(vec![i as f64, d, r, l]);
        dev = dev.max(d);
        sup = sup.max(r);
        law = law.max(l);
    }
    out.tables.push(table);
    // the weight is exactly the seed on flat cones when brackets vanish
    if cx.flat() && (cx.alg.is_abelian() || cx.sc.field.profile == "zero") {
        out.at_most("seed_deviation", dev, tol.transport_seed);
    } else {
        out.metric("seed_deviation", dev);
    }
    out.at_most("sup_ratio", sup, tol.transport_sup);
    out.metric("norm_law_residual", law);
    out.metric("s_max", s_top);
    out.at_most("frame_residual", cone.max_frame_residual(cx.exec)?, tol.frame);
    Ok(())
}

/// Random polynomial of degree ≤ 4 in the direction, per two-form component.
fn random_polynomial_field(rng: &mut ChaCha8Rng, alg: &Algebra, dirs: &[[f64; 3]]) -> Vec<TwoForm> {
    let monomials: Vec<[i32; 3]> =
        (0..=4).flat_map(|a| (0..=4 - a).flat_map(move |b| (0..=4 - a - b).map(move |c| [a, b, c]))).collect();
    let coeff: Vec<Vec<f64>> =
        (0..6 * alg.dim()).map(|_| monomials.iter().map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    dirs.iter()
        .map(|d| {
            let mut f = TwoForm::ZERO;
            for p in 0..6 {
                for c in 0..alg.dim() {
                    let cf = &coeff[p * alg.dim() + c];
                    f.0[p].0[c] = monomials
                        .iter()
                        .zip(cf)
                        .map(|(m, a)| a * d[0].powi(m[0]) * d[1].powi(m[1]) * d[2].powi(m[2]))
                        .sum();
                }
            }
            f
        })
        .collect()
}

fn parametrix(cx: &Context, out: &mut Outcome) -> Result<()> {
    let cfg = &cx.sc.parametrix;
    let tol = &cx.sc.tolerances;
    let tp = cx.vertex.p[0];
    let slice = cfg.slice_time.unwrap_or(tp - 1.0);
    let seeds = canonical_seeds(&cx.alg);
    let frame = std::cell::Cell::new(0.0f64);
    let worst_error = |n_dirs: usize, ds: f64| -> Result<(Vec<crate::parametrix::RepresentationReport>, f64)> {
        let cone = cx.cone_to_slices(n_dirs, ds, vec![slice])?;
        frame.set(frame.get().max(cone.max_frame_residual(cx.exec)?));
        let nb = cone.neighbours(cfg.neighbour_delta, cx.exec)?;
        let reports = assemble_representation(&cone, &nb, cx.field.as_ref(), &seeds, 0, cx.exec)?;
        let worst = reports.iter().map(|r| r.relative_error).fold(0.0, f64::max);
        Ok((reports, worst))
    };
    let (reports, worst) = worst_error(cx.sc.cone.n_dirs, cx.sc.cone.ds)?;
    let mut table = Table::new(
        "seeds",
        &["seed", "reconstructed", "reference", "relative_error", "laplacian_direct", "laplacian_by_parts"],
    );
    let mut by_parts = 0.0f64;
    for (i, r) in reports.iter().enumerate() {
        table.rows.push(vec![
            i as f64,
            r.reconstructed,
            r.reference,
            r.relative_error,
            r.laplacian_direct,
            r.laplacian_by_parts,
        ]);
        by_parts = by_parts.max((r.laplacian_direct - r.laplacian_by_parts).abs());
        for w in &r.warnings {
            out.notes.push(format!("seed {i}: {w}"));
        }
    }
    out.tables.push(table);
    out.at_most("relative_error", worst, tol.parametrix);
    out.metric("laplacian_form_difference", by_parts);
    out.metric("slice_time", slice);

    if cfg.refinement.len() >= 2 {
        let mut t = Table::new("refinement", &["n_dirs", "ds", "relative_error"]);
        let mut errs = Vec::new();
        for r in &cfg.refinement {
            let (_, w) = worst_error(r.n_dirs, r.ds)?;
            t.rows.push(vec![r.n_dirs as f64, r.ds, w]);
            errs.push(w);
        }
        let mut order = f64::INFINITY;
        for w in 0..errs.len() - 1 {
            let ratio = (cfg.refinement[w + 1].n_dirs as f64 / cfg.refinement[w].n_dirs as f64).sqrt();
            order = order.min((errs[w] / errs[w + 1]).ln() / ratio.ln());
        }
        out.tables.push(t);
        out.at_least("refinement_order", order, tol.refinement_order);
    }

    if cfg.vertex_eps.len() >= 2 {
        let cone =
            cx.cone_to_slices(cx.sc.cone.n_dirs, cx.sc.cone.ds, cfg.vertex_eps.iter().map(|e| tp - e).collect())?;
        frame.set(frame.get().max(cone.max_frame_residual(cx.exec)?));
        let f_p = cx.field.field(&cx.vertex.p);
        let fields = solve_transport_many(&cone, &Pointwise(cx.field.as_ref()), &cx.alg, &seeds, cx.exec)?;
        let slices: Vec<usize> = (0..cfg.vertex_eps.len()).collect();
        let limits =
            fields.iter().map(|tr| vertex_limit(&cone, tr, &cx.alg, &f_p, &slices)).collect::<Result<Vec<_>>>()?;
        let scale = limits.iter().map(|l| l.target.abs()).fold(0.0, f64::max);
        let mut cols = vec!["seed".to_string()];
        cols.extend(cfg.vertex_eps.iter().map(|e| format!("eps_{e}")));
        cols.extend(["extrapolated".into(), "target".into()]);
        let mut t = Table { name: "vertex_limit".into(), columns: cols, rows: Vec::new() };
        let mut err = 0.0f64;
        for (i, l) in limits.iter().enumerate() {
            let mut row = vec![i as f64];
            row.extend(&l.values);
            row.extend([l.extrapolated, l.target]);
            t.rows.push(row);
            if l.target.abs() > 1e-6 * scale {
                err = err.max(l.relative_error());
            }
        }
        out.tables.push(t);
        if scale > 0.0 {
            out.at_most("vertex_limit_error", err, tol.vertex_limit);
        } else {
            out.notes.push("F(p) pairs to zero with every seed; vertex limit not checked".into());
        }
    }

    if cfg.self_adjoint_samples > 0 {
        let params =
            ConeParams { s_max: cfg.self_adjoint_radius, ds: cfg.self_adjoint_radius / 50.0, ..cx.cone_params()? };
        let cone = NullConeBundle::emanate(cx.chart, cx.vertex, &params, cx.exec)?;
        frame.set(frame.get().max(cone.max_frame_residual(cx.exec)?));
        let k = cone.live_shells() - 1;
        let shell = Shell::new(&cone, k, &Pointwise(cx.field.as_ref()))?;
        let dirs: Vec<[f64; 3]> = (0..cone.n_rays()).map(|i| cone.grid.direction(i)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cx.sc.seed);
        let mut worst = 0.0f64;
        for _ in 0..cfg.self_adjoint_samples {
            let lam = random_polynomial_field(&mut rng, &cx.alg, &dirs);
            let f = random_polynomial_field(&mut rng, &cx.alg, &dirs);
            let (direct, by_parts) = laplacian_forms(&cone.grid, &shell, &cx.alg, &lam, &f);
            worst = worst.max((direct - by_parts).abs() / direct.abs().max(1.0));
        }
        out.stochastic.insert("self_adjoint_residual".into(), worst);
        let passed = worst <= tol.self_adjoint;
        out.checks.push(Check {
            metric: "self_adjoint_residual".into(),
            value: worst.is_finite().then_some(worst),
            lower: None,
            upper: Some(tol.self_adjoint),
            passed,
        });
    }
    out.at_most("frame_residual", frame.get(), tol.frame);
    Ok(())
}

fn energy(cx: &Context, out: &mut Outcome) -> Result<()> {
    let mut evolution = None;
    if let Some(ev) = &cx.sc.evolution {
        evolution = Some(lattice_run(cx, ev, out)?);
    }
    let Some(en) = &cx.sc.energy else { return Ok(()) };
    let tol = &cx.sc.tolerances;
    let history;
    let src: &dyn FieldSource = match en.source {
        EnergySource::Field => cx.field.as_ref(),
        EnergySource::Evolution => {
            let (evo, data, dt) = evolution.expect("validated: evolution section present");
            let ev = cx.sc.evolution.as_ref().expect("validated");
            let span = ev.history_every as f64 * dt;
            let count = ((cx.vertex.p[0] + 2.0 * span) / span).ceil() as usize + 1;
            history = History::record(&evo, EvolutionState::new(data, 0.0), dt, ev.history_every, count)?;
            &history
        }
    };
    let n_theta = cx.n_theta(cx.sc.cone.n_dirs)?;
    let levels = if en.refinement_ds.is_empty() { vec![cx.sc.cone.ds] } else { en.refinement_ds.clone() };
    let mut worst = Vec::new();
    let mut rows: Vec<EnergyReport> = Vec::new();
    let mut frame = 0.0f64;
    for &ds in &levels {
        let params = balance_cone(cx.chart, &cx.vertex, &en.plan, n_theta, ds, cx.exec)?;
        let cone = NullConeBundle::emanate(cx.chart, cx.vertex, &params, cx.exec)?;
        frame = frame.max(cone.max_frame_residual(cx.exec)?);
        rows = energy_balance(src, &cone, &en.plan, en.time_vector, cx.exec)?;
        worst.push(rows.iter().map(|r| r.relative_residual()).fold(0.0, f64::max));
    }
    let mut t = Table::new("balance", &["t", "E_t", "flux", "bulk", "residual", "C"]);
    for r in &rows {
        t.rows.push(vec![r.t, r.energy, r.flux, r.bulk, r.residual, r.deformation]);
    }
    out.tables.push(t);
    let e0 = rows.first().map_or(0.0, |r| r.energy_initial);
    let bulk = rows.iter().map(|r| r.bulk.abs()).fold(0.0, f64::max);
    out.metric("energy_initial", e0);
    out.metric("deformation", rows.iter().map(|r| r.deformation).fold(0.0, f64::max));
    let residual = *worst.last().expect("at least one level");
    if cx.flat() && en.time_vector == TimeVector::Coordinate {
        out.at_most("balance_residual", residual, tol.flat_balance);
        out.at_most("bulk", bulk, 0.0);
    } else {
        out.at_most("balance_residual", residual, tol.curved_balance);
        out.metric("bulk", bulk);
    }
    out.at_most("frame_residual", frame, tol.frame);
    if levels.len() >= 2 {
        let mut t = Table::new("refinement", &["ds", "balance_residual"]);
        for (ds, w) in levels.iter().zip(&worst) {
            t.rows.push(vec![*ds, *w]);
        }
        out.tables.push(t);
        let reduction = worst.windows(2).map(|w| w[0] / w[1]).fold(f64::INFINITY, f64::min);
        // strictly decreasing residuals
        out.check("balance_reduction", reduction, Some(1.0 + 1e-12), None);
    }
    Ok(())
}

/// Run the lattice evolution, record its diagnostics, and hand back the
/// discretisation, initial data and time step.
fn lattice_run(cx: &Context, ev: &EvolutionConfig, out: &mut Outcome) -> Result<(Evolution, CauchyData, f64)> {
    let tol = &cx.sc.tolerances;
    let alg = Algebra::by_name(ev.algebra.as_deref().unwrap_or(&cx.sc.algebra))?;
    let evo = Evolution::new(ev.torus, alg, ev.metric, cx.exec)?.with_dissipation(ev.dissipation);
    let mut data = CauchyData::zeros(evo.torus.points());
    for p in &ev.initial {
        let d = evo.initial_data(&p.profile, &p.params)?;
        for (dst, src) in data.a.iter_mut().zip(&d.a).chain(data.e.iter_mut().zip(&d.e)) {
            for i in 0..3 {
                dst[i] += src[i];
            }
        }
    }
    let dt0 = ev.dt.unwrap_or(ev.courant * evo.torus.dx());
    let (dt, steps) = match (ev.steps, ev.t_final) {
        (Some(n), _) => (dt0, n),
        (None, Some(t)) => {
            let n = (t / dt0 - 1e-9).ceil().max(1.0);
            (t / n, n as u64)
        }
        (None, None) => return Err(Error::Config(vec!["evolution: give exactly one of `steps` and `t_final`".into()])),
    };
    let mut diags = Vec::new();
    let last = evo.advance(EvolutionState::new(data.clone(), 0.0), dt, steps, ev.every, |s| {
        diags.push(evo.diagnostics(s));
        Ok(())
    })?;
    if diags.last().map(|d| d.step) != Some(last.step) {
        diags.push(evo.diagnostics(&last));
    }
    let mut t = Table::new("evolution", &["step", "t", "energy", "constraint", "max_field"]);
    for d in &diags {
        t.rows.push(vec![d.step as f64, d.t, d.energy, d.constraint, d.max_field]);
    }
    out.tables.push(t);
    let e0 = diags[0].energy;
    let c0 = diags[0].constraint;
    let drift = diags.iter().map(|d| (d.energy - e0).abs()).fold(0.0, f64::max) / e0;
    let cmax = diags.iter().map(|d| d.constraint).fold(0.0, f64::max);
    let growth = if cmax == 0.0 { 1.0 } else { cmax / c0 };
    out.metric("dt", dt);
    out.metric("steps", steps as f64);
    out.metric("cfl_limit", evo.cfl_limit());
    out.metric("lattice_energy_initial", e0);
    out.metric("constraint_initial", c0);
    out.metric("constraint_max", cmax);
    if ev.dissipation == 0.0 {
        out.at_most("energy_drift", drift, tol.energy_drift);
    } else {
        out.metric("energy_drift", drift);
    }
    out.at_most("constraint_growth", growth, tol.constraint_growth);
    Ok((evo, data, dt))
}

fn bounds(cx: &Context, out: &mut Outcome) -> Result<()> {
    let tol = &cx.sc.tolerances;
    for (i, b) in cx.sc.bounds.iter().enumerate() {
        let env = b.bound.envelope()?;
        let mut t = Table::new(&format!("envelope_{i}"), &["t", "b"]);
        for (x, v) in env.times.iter().zip(&env.values) {
            t.rows.push(vec![*x, *v]);
        }
        out.tables.push(t);
        let last = *env.values.last().expect("non-empty grid");
        if last.is_finite() {
            out.metric(&format!("b{i}_final"), last);
        }
        if let Some(tb) = env.blowup {
            out.metric(&format!("b{i}_blowup"), tb);
        }
        if let BoundForm::Pachpatte { c, single, double } = b.bound.form {
            if double == 0.0 && single > 0.0 && c > 0.0 {
                // Riccati reduction: b = c/(1 − s·c·(t − t0)), blowing up at t0 + 1/(s·c)
                let exact = b.bound.t0 + 1.0 / (single * c);
                let mut dev = 0.0f64;
                for (x, v) in env.times.iter().zip(&env.values) {
                    let r = c / (1.0 - single * c * (x - b.bound.t0));
                    if v.is_finite() && x < &exact {
                        dev = dev.max((v - r).abs() / r);
                    }
                }
                out.metric(&format!("b{i}_riccati_deviation"), dev);
                if exact < b.bound.t1 {
                    let err = env.blowup.map_or(f64::INFINITY, |tb| (tb - exact).abs());
                    out.at_most(&format!("b{i}_blowup_error"), err, tol.blowup);
                }
            }
        }
        if let Some(s) = &b.series {
            let name = format!("b{i}_series_ratio");
            match check_series(&s.times, &s.values, &env, b.rtol)? {
                Verdict::Within { ratio } => out.at_most(&name, ratio, 1.0 + b.rtol),
                Verdict::Violated { t, margin } => {
                    out.notes.push(format!("bound {i} violated at t = {t}"));
                    out.at_most(&name, margin, 1.0 + b.rtol);
                }
            }
        }
    }
    Ok(())
}

fn cartan(cx: &Context, out: &mut Outcome) -> Result<()> {
    let tol = &cx.sc.tolerances;
    let h = cx.sc.cartan.h;
    let chart = cx.chart;
    let so31 = Algebra::so31();
    let frames = DiagonalFrameField { chart };
    let pot = CartanPotential { chart, frames: &frames };
    let points = if cx.sc.cartan.points.is_empty() { vec![cx.vertex.p] } else { cx.sc.cartan.points.clone() };
    let mut t = Table::new(
        "points",
        &["t", "x1", "x2", "x3", "riemann_mismatch", "riemann_scale", "antisymmetry", "ym_residual"],
    );
    let (mut mismatch, mut scale, mut anti, mut ym) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for x in &points {
        let f = curvature_from_potential(&so31, &pot, x, h);
        let r = frame_riemann(chart, &frames, x)?;
        let (mut m, mut sc) = (0.0f64, 0.0f64);
        for p in 0..6 {
            for q in 0..6 {
                m = m.max((f.0[p].0[q] - r[p][q]).abs());
                sc = sc.max(r[p][q].abs());
            }
        }
        let a = cartan_antisymmetry_residual(chart, &frames, x)?;
        let curvature = CurvatureOf { alg: &so31, potential: &pot, h };
        let y = ym_residual(&so31, chart, &pot, &curvature, x, h)?.iter().map(|v| v.max_abs()).fold(0.0, f64::max);
        t.rows.push(vec![x[0], x[1], x[2], x[3], m, sc, a, y]);
        mismatch = mismatch.max(m);
        scale = scale.max(sc);
        anti = anti.max(a);
        ym = ym.max(y);
    }
    out.tables.push(t);
    out.metric("riemann_scale", scale);
    out.at_most("riemann_mismatch", mismatch, tol.cartan);
    out.at_most("antisymmetry", anti, tol.cartan);
    if VACUUM_CHARTS.contains(&cx.sc.chart.name.as_str()) {
        out.at_most("ym_residual", ym, tol.ym_residual);
    } else {
        out.metric("ym_residual", ym);
        out.notes.push("chart is not Ricci flat; ym_residual is reported, not checked".into());
    }
    Ok(())
}

/// Write `report.json` and the experiments' CSV tables into `dir`.
pub fn emit(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for r in &report.experiments {
        for (table, file) in r.tables.iter().zip(&r.files) {
            let path = dir.join(file);
            write_table(table, &path)?;
            written.push(path);
        }
    }
    let path = dir.join("report.json");
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(written)
}

fn write_table(table: &Table, path: &Path) -> Result<()> {
    let io = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other:?}", path.display())),
    };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(&table.columns).map_err(io)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read a report, refusing schema versions this build does not know.
pub fn read_report(path: &Path) -> Result<RunReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: Value = serde_json::from_str(&text)?;
    match value.get("schema_version").and_then(Value::as_u64) {
        Some(v) if v == SCHEMA_VERSION as u64 => Ok(serde_json::from_value(value)?),
        other => Err(Error::Format(format!(
            "{}: report schema version {} is not supported (this build reads {SCHEMA_VERSION})",
            path.display(),
            other.map_or_else(|| "missing".to_string(), |v| v.to_string())
        ))),
    }
}

/// Read and parse a scenario file.
pub fn load_config(path: &Path, strict: bool) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, strict)
}
