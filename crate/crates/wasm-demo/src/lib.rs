//! wasm-bindgen bindings for the static demo page in `www/`.
//!
//! Points cross the boundary as flat `[x0, y0, x1, y1, ...]` arrays.

use nalgebra::DVector;
use ogc_core::brake::{jacobi_metric, ogc_to_brake, BrakeConfig, LagrangianData};
use ogc_core::geometry::{DomainBoundary, LevelSet, MetricField, Potential, Profile, DEFAULT_DELTA0};
use ogc_core::multiplicity::{multistart, MultistartConfig};
use ogc_core::pathspace::DiscretePath;
use ogc_core::shooting::{ogc_refine, shoot_orthogonal, ShootConfig};
use wasm_bindgen::prelude::*;

const K0_SAMPLES: usize = 256;

fn js_err(e: ogc_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn flat<'a>(points: impl IntoIterator<Item = &'a DVector<f64>>) -> Vec<f64> {
    points.into_iter().flat_map(|p| [p[0], p[1]]).collect()
}

fn direction(angle: f64) -> DVector<f64> {
    DVector::from_vec(vec![angle.cos(), angle.sin()])
}

/// Planar domain with its metric; for brake scenes also the mechanical system.
#[wasm_bindgen]
pub struct Scene {
    metric: MetricField,
    boundary: DomainBoundary,
    lagrangian: Option<LagrangianData>,
    shoot: ShootConfig,
}

#[wasm_bindgen]
impl Scene {
    /// Ellipse with semi-axes `a`, `b` and the metric `f(r)^2 (I + amplitude P(x))`,
    /// `f(r) = 1 + c2 r^2`; `c2 = amplitude = 0` is Euclidean.
    #[wasm_bindgen(constructor)]
    pub fn new(a: f64, b: f64, c2: f64, amplitude: f64) -> Result<Scene, JsError> {
        let profile = Profile::Polynomial { coeffs: vec![1.0, 0.0, c2] };
        let metric = if amplitude != 0.0 {
            MetricField::perturbed_radial(2, profile, amplitude).map_err(js_err)?
        } else if c2 != 0.0 {
            MetricField::radial_conformal(2, profile)
        } else {
            MetricField::euclidean(2)
        };
        let level_set = LevelSet::Ellipsoid { semi_axes: vec![a, b] };
        let boundary = DomainBoundary::calibrated(level_set, &metric, DEFAULT_DELTA0, K0_SAMPLES).map_err(js_err)?;
        Ok(Scene { metric, boundary, lagrangian: None, shoot: ShootConfig::default() })
    }

    /// Jacobi metric of `V = |q|^2 / 2 + epsilon q1^3` at energy `energy`.
    pub fn brake(energy: f64, epsilon: f64) -> Result<Scene, JsError> {
        let l = LagrangianData::new(MetricField::euclidean(2), Potential::Cubic { epsilon }, energy);
        let domain = jacobi_metric(&l, None, K0_SAMPLES).map_err(js_err)?;
        Ok(Scene {
            metric: domain.metric,
            boundary: domain.boundary,
            lagrangian: Some(l),
            shoot: ShootConfig::default(),
        })
    }

    /// `n` boundary points, counterclockwise from the positive x axis.
    pub fn outline(&self, n: usize) -> Result<Vec<f64>, JsError> {
        let pts = (0..n)
            .map(|k| self.boundary.boundary_point(&direction(std::f64::consts::TAU * k as f64 / n as f64)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(js_err)?;
        Ok(flat(&pts))
    }

    /// Geodesic shot inward and orthogonal to the boundary at polar angle `angle`.
    pub fn shoot(&self, angle: f64) -> Result<Shot, JsError> {
        let a = self.boundary.boundary_point(&direction(angle)).map_err(js_err)?;
        let shot = shoot_orthogonal(&self.metric, &self.boundary, &a, &self.shoot).map_err(js_err)?;
        Ok(Shot {
            points: shot.path.as_ref().map(|p| flat(p.nodes())).unwrap_or_default(),
            kind: shot.kind.as_str().to_string(),
            exit_cos: shot.exit_cos,
            length: shot.length,
        })
    }

    /// Distinct OGCs from a multistart over a `grid`-point boundary grid.
    pub fn find_ogcs(&self, grid: usize) -> Result<Chords, JsError> {
        let cfg = MultistartConfig {
            grid,
            m0_grid: grid,
            nodes: 64,
            shot_fallback: self.lagrangian.is_some(),
            ..MultistartConfig::default()
        };
        let report = multistart(&self.metric, &self.boundary, &cfg).map_err(js_err)?;
        let entries = report.catalog.entries.iter().filter(|e| e.verified());
        let (paths, energies) = entries.map(|e| (e.path.clone(), e.energy)).unzip();
        Ok(Chords { paths, energies })
    }

    /// OGC refined from the boundary point at `angle`, with its brake orbit when this is a
    /// brake scene. The orbit is empty for geodesic scenes.
    pub fn refine(&self, angle: f64) -> Result<Refined, JsError> {
        let a = self.boundary.boundary_point(&direction(angle)).map_err(js_err)?;
        let out = ogc_refine(&self.metric, &self.boundary, &a, &self.shoot).map_err(js_err)?;
        let Some(path) = out.path().filter(|_| out.converged) else {
            return Err(JsError::new(&format!("refinement failed: {}", out.message)));
        };
        let (orbit, half_period) = match &self.lagrangian {
            Some(l) => {
                let orbit = ogc_to_brake(l, path, &BrakeConfig::default()).map_err(js_err)?;
                let q: Vec<DVector<f64>> = orbit.q.iter().map(|q| DVector::from_column_slice(q)).collect();
                (flat(&q), orbit.half_period())
            }
            None => (Vec::new(), 0.0),
        };
        Ok(Refined { chord: flat(path.nodes()), residual: out.residual, orbit, half_period })
    }
}

#[wasm_bindgen]
pub struct Shot {
    points: Vec<f64>,
    kind: String,
    exit_cos: f64,
    length: f64,
}

#[wasm_bindgen]
impl Shot {
    #[wasm_bindgen(getter)]
    pub fn points(&self) -> Vec<f64> {
        self.points.clone()
    }

    /// `orthogonal`, `tangent`, `transversal` or `no_return`.
    #[wasm_bindgen(getter)]
    pub fn kind(&self) -> String {
        self.kind.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn exit_cos(&self) -> f64 {
        self.exit_cos
    }

    #[wasm_bindgen(getter)]
    pub fn length(&self) -> f64 {
        self.length
    }
}

#[wasm_bindgen]
pub struct Chords {
    paths: Vec<DiscretePath>,
    energies: Vec<f64>,
}

#[wasm_bindgen]
impl Chords {
    #[wasm_bindgen(getter)]
    pub fn count(&self) -> usize {
        self.paths.len()
    }

    pub fn path(&self, i: usize) -> Vec<f64> {
        self.paths.get(i).map(|p| flat(p.nodes())).unwrap_or_default()
    }

    pub fn energy(&self, i: usize) -> f64 {
        self.energies.get(i).copied().unwrap_or(f64::NAN)
    }
}

#[wasm_bindgen]
pub struct Refined {
    chord: Vec<f64>,
    residual: f64,
    orbit: Vec<f64>,
    half_period: f64,
}

#[wasm_bindgen]
impl Refined {
    #[wasm_bindgen(getter)]
    pub fn chord(&self) -> Vec<f64> {
        self.chord.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn residual(&self) -> f64 {
        self.residual
    }

    #[wasm_bindgen(getter)]
    pub fn orbit(&self) -> Vec<f64> {
        self.orbit.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn half_period(&self) -> f64 {
        self.half_period
    }
}
