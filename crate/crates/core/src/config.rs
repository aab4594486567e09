//! Scenario files (TOML). The full grammar is documented in
//! `configs/README.md`; matrices are row-major nested arrays.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::dynamics::{cwh_system, relative_state_from_elements, CircularOrbit, LtiSystem, RelativeElements, VehicleState};
use crate::error::{Error, Result};
use crate::problem::{position_extraction, ObstacleAvoidance, PairwiseAvoidance, RiskMode, RiskSettings, ScenarioSpec, TargetSet};
use crate::sampling::{read_samples, synth_disturbances, DisturbanceSampleSet, DisturbanceSampler, EmpiricalSampler, GeneratorSpec, ProcessSampler};
use crate::solver::{CcpConfig, ClarabelBackend};

pub const DEFAULT_MU: f64 = 398_600.441_8;

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    horizon: usize,
    system: RawSystem,
    chief: Option<CircularOrbit>,
    vehicles: Vec<RawVehicle>,
    controls: RawControls,
    #[serde(default)]
    targets: Vec<RawTarget>,
    #[serde(default)]
    obstacles: Vec<RawObstacle>,
    #[serde(default)]
    pairwise: Vec<RawPairwise>,
    #[serde(default)]
    thresholds: RawThresholds,
    #[serde(default)]
    risk: RawRisk,
    samples: RawSamples,
    #[serde(default)]
    ccp: CcpConfig,
    #[serde(default)]
    backend: RawBackend,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
enum RawSystem {
    Cwh {
        radius_km: f64,
        #[serde(default = "default_mu")]
        mu: f64,
        dt: f64,
    },
    Matrices {
        a: Rows,
        b: Rows,
        #[serde(default = "one")]
        dt: f64,
    },
}

fn default_mu() -> f64 {
    DEFAULT_MU
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVehicle {
    id: String,
    x0: Option<Vec<f64>>,
    elements: Option<RelativeElements>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawControls {
    bound: Option<f64>,
    lower: Option<Vec<f64>>,
    upper: Option<Vec<f64>>,
    weights: Option<Vec<f64>>,
}

/// `"all"`, a single step, or a list of steps.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Steps {
    Named(String),
    One(usize),
    List(Vec<usize>),
}

impl Default for Steps {
    fn default() -> Self {
        Steps::Named("all".into())
    }
}

impl Steps {
    fn resolve(&self, horizon: usize, field: &str) -> Result<Vec<usize>> {
        let steps = match self {
            Steps::Named(s) if s == "all" => (1..=horizon).collect(),
            Steps::Named(s) => return Err(Error::Config(format!("{field}: unknown step selector `{s}`"))),
            Steps::One(k) => vec![*k],
            Steps::List(ks) => ks.clone(),
        };
        if let Some(k) = steps.iter().find(|k| !(1..=horizon).contains(*k)) {
            return Err(Error::Config(format!("{field}: step {k} outside 1..={horizon}")));
        }
        Ok(steps)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTarget {
    vehicle: String,
    steps: Steps,
    g: Option<Rows>,
    h: Option<Vec<f64>>,
    center: Option<Vec<f64>>,
    half_widths: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObstacle {
    vehicles: Option<Vec<String>>,
    #[serde(default)]
    steps: Steps,
    extraction: Option<Rows>,
    radius: f64,
    position: Option<Vec<f64>>,
    /// One state-space position per step `1..=N`.
    trajectory: Option<Rows>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPairwise {
    vehicles: Option<Vec<String>>,
    #[serde(default)]
    steps: Steps,
    extraction: Option<Rows>,
    radius: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawThresholds {
    alpha: f64,
    beta: f64,
    gamma: f64,
}

impl Default for RawThresholds {
    fn default() -> Self {
        Self { alpha: 0.05, beta: 0.05, gamma: 0.05 }
    }
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct RawRisk {
    mode: RiskMode,
    lambda_max: Option<f64>,
    segments: Option<usize>,
    knots: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSamples {
    count: Option<usize>,
    #[serde(default)]
    seed: u64,
    generator: Option<GeneratorSpec>,
    /// One file per vehicle, relative to the config file.
    csv: Option<Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawBackend {
    name: String,
    tolerance: f64,
    max_iterations: u32,
}

impl Default for RawBackend {
    fn default() -> Self {
        let d = ClarabelBackend::default();
        Self { name: "clarabel".into(), tolerance: d.tolerance, max_iterations: d.max_iterations }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SampleSource {
    Generator(GeneratorSpec),
    Csv(Vec<PathBuf>),
}

/// A parsed, validated scenario file.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub spec: ScenarioSpec,
    pub vehicle_ids: Vec<String>,
    pub source: SampleSource,
    pub sample_count: Option<usize>,
    pub seed: u64,
    pub ccp: CcpConfig,
    pub backend: ClarabelBackend,
    /// SHA-256 of the file bytes, hex encoded.
    pub hash: String,
}

pub fn config_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn matrix(field: &str, rows: &Rows, ncols: Option<usize>) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Err(Error::Config(format!("{field}: matrix has no rows")));
    }
    let width = ncols.unwrap_or(rows[0].len());
    for (i, r) in rows.iter().enumerate() {
        if r.len() != width {
            return Err(Error::Config(format!(
                "{field}: row {} has {} entries, expected {width}",
                i + 1,
                r.len()
            )));
        }
    }
    Ok(DMatrix::from_fn(rows.len(), width, |i, j| rows[i][j]))
}

fn vector(field: &str, v: &[f64], len: usize) -> Result<DVector<f64>> {
    if v.len() != len {
        return Err(Error::Config(format!("{field}: has {} entries, expected {len}", v.len())));
    }
    Ok(DVector::from_column_slice(v))
}

impl ScenarioConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses scenario text; relative CSV paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let cfg = Self::build(raw, base_dir)?;
        Ok(Self { hash: config_hash(text), ..cfg })
    }

    fn build(raw: RawConfig, base_dir: &Path) -> Result<Self> {
        let (system, mu) = match &raw.system {
            RawSystem::Cwh { radius_km, mu, dt } => (
                cwh_system(*radius_km, *mu, *dt).map_err(|e| Error::Config(format!("system: {e}")))?,
                *mu,
            ),
            RawSystem::Matrices { a, b, dt } => {
                let a = matrix("system.a", a, None)?;
                let b = matrix("system.b", b, None)?;
                (LtiSystem::new(a, b, *dt).map_err(|e| Error::Config(format!("system: {e}")))?, DEFAULT_MU)
            }
        };
        let (n, m) = (system.state_dim(), system.input_dim());
        let horizon = raw.horizon;
        if horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }

        let mut ids = Vec::new();
        let mut vehicles = Vec::new();
        for (i, v) in raw.vehicles.iter().enumerate() {
            if ids.contains(&v.id) {
                return Err(Error::Config(format!("vehicles: duplicate id `{}`", v.id)));
            }
            let field = format!("vehicles[{}] ({})", i, v.id);
            let x0 = match (&v.x0, &v.elements) {
                (Some(x0), None) => vector(&format!("{field}.x0"), x0, n)?,
                (None, Some(el)) => {
                    let chief = raw
                        .chief
                        .as_ref()
                        .ok_or_else(|| Error::Config(format!("{field}: orbital elements need a [chief] table")))?;
                    if n != 6 {
                        return Err(Error::Config(format!("{field}: orbital elements need the 6-state cwh system")));
                    }
                    relative_state_from_elements(chief, el, mu)
                }
                _ => return Err(Error::Config(format!("{field}: give exactly one of x0 or elements"))),
            };
            ids.push(v.id.clone());
            vehicles.push(VehicleState { id: i, x0 });
        }
        let index_of = |id: &str, field: &str| {
            ids.iter()
                .position(|v| v == id)
                .ok_or_else(|| Error::Config(format!("{field}: unknown vehicle `{id}`")))
        };
        let select = |list: &Option<Vec<String>>, field: &str| -> Result<Vec<usize>> {
            match list {
                None => Ok((0..ids.len()).collect()),
                Some(l) => l.iter().map(|id| index_of(id, field)).collect(),
            }
        };

        let c = &raw.controls;
        let (lower, upper) = match (c.bound, &c.lower, &c.upper) {
            (Some(b), None, None) => (vec![-b; m], vec![b; m]),
            (None, Some(l), Some(u)) => (
                vector("controls.lower", l, m)?.as_slice().to_vec(),
                vector("controls.upper", u, m)?.as_slice().to_vec(),
            ),
            _ => return Err(Error::Config("controls: give either bound or both lower and upper".into())),
        };
        let weights = match &c.weights {
            Some(w) => vector("controls.weights", w, m)?.as_slice().to_vec(),
            None => vec![1.0; m],
        };

        let mut spec = ScenarioSpec::new(system, horizon, vehicles, 1.0);
        spec.control_lower = lower;
        spec.control_upper = upper;
        spec.control_weights = weights;
        spec.alpha = raw.thresholds.alpha;
        spec.beta = raw.thresholds.beta;
        spec.gamma = raw.thresholds.gamma;
        let defaults = RiskSettings::default();
        spec.risk = RiskSettings {
            mode: raw.risk.mode,
            lambda_max: raw.risk.lambda_max,
            segments: raw.risk.segments.unwrap_or(defaults.segments),
            knots: raw.risk.knots.clone(),
        };

        let default_extraction = position_extraction(3.min(n), n);
        let extraction = |rows: &Option<Rows>, field: &str| match rows {
            Some(r) => matrix(field, r, Some(n)),
            None => Ok(default_extraction.clone()),
        };

        for (i, t) in raw.targets.iter().enumerate() {
            let field = format!("targets[{i}]");
            let vehicle = index_of(&t.vehicle, &field)?;
            for k in t.steps.resolve(horizon, &format!("{field}.steps"))? {
                let set = match (&t.g, &t.h, &t.center, &t.half_widths) {
                    (Some(g), Some(h), None, None) => {
                        let g = matrix(&format!("{field}.g"), g, Some(n))?;
                        let h = vector(&format!("{field}.h"), h, g.nrows())?;
                        TargetSet { vehicle, step: k, g, h }
                    }
                    (None, None, Some(c), Some(w)) => {
                        vector(&format!("{field}.center"), c, n)?;
                        vector(&format!("{field}.half_widths"), w, n)?;
                        TargetSet::from_box(vehicle, k, c, w).map_err(|e| Error::Config(format!("{field}: {e}")))?
                    }
                    _ => return Err(Error::Config(format!("{field}: give either g and h, or center and half_widths"))),
                };
                spec.targets.push(set);
            }
        }

        for (i, o) in raw.obstacles.iter().enumerate() {
            let field = format!("obstacles[{i}]");
            let s = extraction(&o.extraction, &format!("{field}.extraction"))?;
            let steps = o.steps.resolve(horizon, &format!("{field}.steps"))?;
            let traj = match &o.trajectory {
                Some(t) => Some(matrix(&format!("{field}.trajectory"), t, Some(n))?),
                None => None,
            };
            if traj.as_ref().is_some_and(|t| t.nrows() != horizon) {
                return Err(Error::Config(format!("{field}.trajectory: needs one row per step 1..={horizon}")));
            }
            let fixed = match (&o.position, &traj) {
                (Some(p), None) => vector(&format!("{field}.position"), p, n)?,
                (None, _) => DVector::zeros(n),
                (Some(_), Some(_)) => return Err(Error::Config(format!("{field}: give position or trajectory, not both"))),
            };
            for v in select(&o.vehicles, &format!("{field}.vehicles"))? {
                for &k in &steps {
                    let position = traj.as_ref().map_or_else(|| fixed.clone(), |t| t.row(k - 1).transpose());
                    spec.obstacles.push(ObstacleAvoidance {
                        vehicle: v,
                        step: k,
                        extraction: s.clone(),
                        radius: o.radius,
                        position,
                    });
                }
            }
        }

        for (i, p) in raw.pairwise.iter().enumerate() {
            let field = format!("pairwise[{i}]");
            let s = extraction(&p.extraction, &format!("{field}.extraction"))?;
            let steps = p.steps.resolve(horizon, &format!("{field}.steps"))?;
            let members = select(&p.vehicles, &format!("{field}.vehicles"))?;
            for (a_idx, &a) in members.iter().enumerate() {
                for &b in &members[a_idx + 1..] {
                    for &k in &steps {
                        spec.pairwise.push(PairwiseAvoidance {
                            first: a,
                            second: b,
                            step: k,
                            extraction: s.clone(),
                            radius: p.radius,
                        });
                    }
                }
            }
        }

        spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        raw.ccp.validate().map_err(|e| Error::Config(format!("ccp: {e}")))?;

        let source = match (&raw.samples.generator, &raw.samples.csv) {
            (Some(g), None) => {
                g.validate().map_err(|e| Error::Config(format!("samples.generator: {e}")))?;
                if g.dim() != n {
                    return Err(Error::Config(format!("samples.generator: std has {} entries, expected {n}", g.dim())));
                }
                if raw.samples.count.is_none() {
                    return Err(Error::Config("samples.count is required with a generator".into()));
                }
                SampleSource::Generator(g.clone())
            }
            (None, Some(files)) => {
                if files.len() != ids.len() {
                    return Err(Error::Config(format!(
                        "samples.csv: {} files for {} vehicles",
                        files.len(),
                        ids.len()
                    )));
                }
                let paths: Vec<PathBuf> = files.iter().map(|f| base_dir.join(f)).collect();
                if let Some(p) = paths.iter().find(|p| !p.exists()) {
                    return Err(Error::Config(format!("samples.csv: {} does not exist", p.display())));
                }
                SampleSource::Csv(paths)
            }
            _ => return Err(Error::Config("samples: give exactly one of generator or csv".into())),
        };
        if raw.samples.count.is_some_and(|c| c < 2) {
            return Err(Error::Config("samples.count must be at least 2".into()));
        }
        if raw.backend.name != "clarabel" {
            return Err(Error::Config(format!("backend: unknown backend `{}`", raw.backend.name)));
        }

        Ok(Self {
            spec,
            vehicle_ids: ids,
            source,
            sample_count: raw.samples.count,
            seed: raw.samples.seed,
            ccp: raw.ccp,
            backend: ClarabelBackend {
                tolerance: raw.backend.tolerance,
                max_iterations: raw.backend.max_iterations,
            },
            hash: String::new(),
        })
    }

    /// Disturbance samples for every vehicle. `seed` overrides the file's
    /// seed for generated samples.
    pub fn load_samples(&self, seed: Option<u64>) -> Result<Vec<DisturbanceSampleSet>> {
        let (horizon, n) = (self.spec.horizon, self.spec.state_dim());
        match &self.source {
            SampleSource::Generator(g) => {
                let count = self.sample_count.expect("checked at parse time");
                (0..self.spec.vehicle_count())
                    .map(|v| synth_disturbances(g, v, horizon, count, seed.unwrap_or(self.seed)))
                    .collect()
            }
            SampleSource::Csv(paths) => {
                let sets = paths
                    .iter()
                    .enumerate()
                    .map(|(v, p)| read_samples(p, v, horizon, n))
                    .collect::<Result<Vec<_>>>()?;
                if let Some(c) = self.sample_count {
                    if let Some(s) = sets.iter().find(|s| s.sample_count() != c) {
                        return Err(Error::dim(format!(
                            "{} has {} samples, samples.count is {c}",
                            s.provenance(),
                            s.sample_count()
                        )));
                    }
                }
                Ok(sets)
            }
        }
    }

    /// Exact stacked means and covariances; generator sources only.
    pub fn true_moments(&self) -> Result<(Vec<DVector<f64>>, Vec<DMatrix<f64>>)> {
        match &self.source {
            SampleSource::Generator(g) => {
                let nv = self.spec.vehicle_count();
                let h = self.spec.horizon;
                Ok((vec![g.stacked_mean(h); nv], vec![g.stacked_covariance(h); nv]))
            }
            SampleSource::Csv(_) => Err(Error::Config(
                "the Cantelli baseline needs known moments: use a [samples.generator]".into(),
            )),
        }
    }

    /// Fresh-draw samplers for validation: the generator law, or resampling
    /// of the loaded CSV rows when only data is available.
    pub fn samplers(&self, samples: &[DisturbanceSampleSet]) -> Vec<Box<dyn DisturbanceSampler>> {
        match &self.source {
            SampleSource::Generator(g) => (0..self.spec.vehicle_count())
                .map(|_| Box::new(ProcessSampler { spec: g.clone(), horizon: self.spec.horizon }) as Box<dyn DisturbanceSampler>)
                .collect(),
            SampleSource::Csv(_) => samples
                .iter()
                .map(|s| Box::new(EmpiricalSampler { data: s.data().clone() }) as Box<dyn DisturbanceSampler>)
                .collect(),
        }
    }
}
