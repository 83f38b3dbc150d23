//! JSON run configuration.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use ogc_core::brake::{jacobi_metric, BrakeConfig, JacobiDomain, LagrangianData};
use ogc_core::descent::{CriticalTolerances, FlowConfig};
use ogc_core::geometry::{DomainBoundary, LevelSet, MetricField, Potential, Profile, DEFAULT_DELTA0};
use ogc_core::multiplicity::MultistartConfig;
use ogc_core::shooting::ShootConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable that replaces `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "OGC_OUTPUT_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MetricSpec {
    Euclidean,
    RadialConformal {
        profile: Profile,
    },
    PerturbedRadial {
        profile: Profile,
        amplitude: f64,
    },
    /// Rows of a symmetric positive definite matrix.
    Constant {
        matrix: Vec<Vec<f64>>,
    },
}

impl MetricSpec {
    pub fn build(&self, dim: usize) -> Result<MetricField, CliError> {
        Ok(match self {
            MetricSpec::Euclidean => MetricField::euclidean(dim),
            MetricSpec::RadialConformal { profile } => MetricField::radial_conformal(dim, profile.clone()),
            MetricSpec::PerturbedRadial { profile, amplitude } => {
                MetricField::perturbed_radial(dim, profile.clone(), *amplitude)?
            }
            MetricSpec::Constant { matrix } => {
                if matrix.len() != dim || matrix.iter().any(|r| r.len() != dim) {
                    return Err(CliError::Config(format!("constant metric must be {dim}x{dim}")));
                }
                MetricField::constant(DMatrix::from_fn(dim, dim, |i, j| matrix[i][j]))?
            }
        })
    }
}

/// What the domain is.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Problem {
    /// Chords of `metric` in `{domain <= 0}`.
    Geodesic {
        dim: usize,
        metric: MetricSpec,
        #[serde(default = "LevelSet::unit_ball")]
        domain: LevelSet,
        #[serde(default)]
        delta0: Option<f64>,
    },
    /// Chords of the Jacobi metric of `V` at energy `E`, and their brake orbits.
    Lagrangian {
        dim: usize,
        #[serde(default = "euclidean_spec")]
        base_metric: MetricSpec,
        potential: Potential,
        energy: f64,
        /// Defaults to 1% of `E - min V`.
        #[serde(default)]
        margin: Option<f64>,
    },
}

/// Vector data of a level set must match the ambient dimension (empty centers mean the origin).
fn domain_dims(domain: &LevelSet, dim: usize) -> Result<(), CliError> {
    let center_ok = |c: &[f64]| c.is_empty() || c.len() == dim;
    let ok = match domain {
        LevelSet::Sphere { center, .. } => center_ok(center),
        LevelSet::Ellipsoid { semi_axes } => semi_axes.len() == dim,
        LevelSet::Plane { normal, .. } => normal.len() == dim,
        LevelSet::Cylinder { center, axis, .. } => center_ok(center) && axis.len() == dim,
        LevelSet::Quadric { center, linear, quadratic, .. } => {
            center_ok(center)
                && linear.len() == dim
                && quadratic.len() == dim
                && quadratic.iter().all(|r| r.len() == dim)
        }
        LevelSet::Sublevel { .. } => true,
    };
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(format!("domain data must have {dim} coordinates")))
    }
}

fn euclidean_spec() -> MetricSpec {
    MetricSpec::Euclidean
}

impl Problem {
    pub fn dim(&self) -> usize {
        match self {
            Problem::Geodesic { dim, .. } | Problem::Lagrangian { dim, .. } => *dim,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub flow: FlowConfig,
    pub shoot: ShootConfig,
    pub tolerances: CriticalTolerances,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MultistartSettings {
    pub grid: usize,
    pub nodes: usize,
    pub m0_grid: usize,
    pub max_starts: Option<usize>,
    pub flow_iters: usize,
    pub hausdorff_rel: f64,
    pub energy_rel: f64,
}

impl Default for MultistartSettings {
    fn default() -> Self {
        let d = MultistartConfig::default();
        Self {
            grid: d.grid,
            nodes: d.nodes,
            m0_grid: d.m0_grid,
            max_starts: d.max_starts,
            flow_iters: d.flow.max_iters,
            hausdorff_rel: d.hausdorff_rel,
            energy_rel: d.energy_rel,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSettings {
    /// Boundary points per angle coordinate.
    pub grid: usize,
}

impl Default for ScanSettings {
    fn default() -> Self {
        Self { grid: 64 }
    }
}

/// Start of `find-ogc`: boundary directions, projected radially onto the boundary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FindSettings {
    pub start: Vec<f64>,
    /// With an end point the search descends from the chord; without, it shoots from `start`.
    #[serde(default)]
    pub end: Option<Vec<f64>>,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
}

fn default_nodes() -> usize {
    ogc_core::pathspace::DEFAULT_NODES
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstantsSettings {
    pub k0_samples: usize,
    pub m0_grid: usize,
    pub nodes: usize,
    pub random_paths: usize,
}

impl Default for ConstantsSettings {
    fn default() -> Self {
        Self { k0_samples: 512, m0_grid: 16, nodes: 64, random_paths: 200 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransversalitySettings {
    pub lemma_instances: usize,
    pub probe_count: usize,
    pub probe_scale: f64,
}

impl Default for TransversalitySettings {
    fn default() -> Self {
        Self { lemma_instances: 1000, probe_count: 10, probe_scale: 1e-3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub problem: Problem,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub multistart: MultistartSettings,
    #[serde(default)]
    pub scan: ScanSettings,
    #[serde(default)]
    pub find: Option<FindSettings>,
    #[serde(default)]
    pub constants: ConstantsSettings,
    #[serde(default)]
    pub brake: BrakeConfig,
    #[serde(default)]
    pub transversality: TransversalitySettings,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; `None` lets the pool decide.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

fn default_name() -> String {
    "run".into()
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn positive(name: &str, x: f64) -> Result<(), CliError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be positive, got {x}")))
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Output directory after the environment override.
    pub fn output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.output_dir.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let dim = self.problem.dim();
        if dim < 2 {
            return Err(CliError::Config(format!("dim must be at least 2, got {dim}")));
        }
        let t = &self.solver.tolerances;
        for (name, x) in [
            ("tolerances.residual", t.residual),
            ("tolerances.angle", t.angle),
            ("tolerances.speed", t.speed),
            ("tolerances.contact", t.contact),
            ("tolerances.lambda", t.lambda),
            ("tolerances.tangency", t.tangency),
            ("tolerances.c1", t.c1),
            ("flow.tol_crit", self.solver.flow.tol_crit),
            ("flow.max_step", self.solver.flow.max_step),
            ("shoot.step", self.solver.shoot.step),
            ("shoot.max_len", self.solver.shoot.max_len),
            ("shoot.tan_tol", self.solver.shoot.tan_tol),
            ("shoot.orth_tol", self.solver.shoot.orth_tol),
            ("shoot.graze_tol", self.solver.shoot.graze_tol),
            ("multistart.hausdorff_rel", self.multistart.hausdorff_rel),
            ("multistart.energy_rel", self.multistart.energy_rel),
            ("brake.step", self.brake.step),
            ("brake.max_time", self.brake.max_time),
            ("brake.brake_tol", self.brake.brake_tol),
            ("brake.deviation_tol", self.brake.deviation_tol),
            ("brake.energy_tol", self.brake.energy_tol),
            ("brake.shoot_tol", self.brake.shoot_tol),
            ("transversality.probe_scale", self.transversality.probe_scale),
        ] {
            positive(name, x)?;
        }
        if self.workers == Some(0) {
            return Err(CliError::Config("workers must be positive".into()));
        }
        if self.multistart.nodes < 8 || self.constants.nodes < 8 || self.solver.shoot.nodes < 8 {
            return Err(CliError::Config("paths need at least 8 segments".into()));
        }
        if let Problem::Geodesic { delta0: Some(d), .. } = &self.problem {
            positive("delta0", *d)?;
        }
        if let Problem::Geodesic { domain, .. } = &self.problem {
            domain_dims(domain, dim)?;
        }
        if let Problem::Lagrangian { margin: Some(m), .. } = &self.problem {
            positive("margin", *m)?;
        }
        if let Some(f) = &self.find {
            if f.start.len() != dim || f.end.as_ref().is_some_and(|e| e.len() != dim) {
                return Err(CliError::Config(format!("find points must have {dim} coordinates")));
            }
        }
        Ok(())
    }

    pub fn multistart_config(&self) -> MultistartConfig {
        let m = &self.multistart;
        MultistartConfig {
            grid: m.grid,
            nodes: m.nodes,
            m0_grid: m.m0_grid,
            max_starts: m.max_starts,
            flow: FlowConfig { max_iters: m.flow_iters, ..self.solver.flow.clone() },
            shoot: self.solver.shoot.clone(),
            tolerances: self.solver.tolerances,
            hausdorff_rel: m.hausdorff_rel,
            energy_rel: m.energy_rel,
            shot_fallback: false,
        }
    }

    /// Metric and boundary of the problem, with `K0` estimated.
    pub fn setup(&self) -> Result<Setup, CliError> {
        match &self.problem {
            Problem::Geodesic { dim, metric, domain, delta0 } => {
                let metric = metric.build(*dim)?;
                let boundary = DomainBoundary::calibrated(
                    domain.clone(),
                    &metric,
                    delta0.unwrap_or(DEFAULT_DELTA0),
                    self.constants.k0_samples,
                )?;
                Ok(Setup { metric, boundary, lagrangian: None })
            }
            Problem::Lagrangian { dim, base_metric, potential, energy, margin } => {
                let l = LagrangianData::new(base_metric.build(*dim)?, potential.clone(), *energy);
                let domain = jacobi_metric(&l, *margin, self.constants.k0_samples)?;
                Ok(Setup {
                    metric: domain.metric.clone(),
                    boundary: domain.boundary.clone(),
                    lagrangian: Some((l, domain)),
                })
            }
        }
    }
}

pub struct Setup {
    pub metric: MetricField,
    pub boundary: DomainBoundary,
    pub lagrangian: Option<(LagrangianData, JacobiDomain)>,
}

pub(crate) fn vector(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}
