//! Constrained steepest descent of the energy and verification of critical curves.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DomainBoundary, MetricField};
use crate::pathspace::{energy, energy_gradient, norm_star, DiscretePath, TangentField};

pub const DEFAULT_TOL_CONTACT: f64 = 1e-6;

/// Admissible variations: tangent to the boundary at the endpoints and not outward-pointing
/// at nodes in the band `phi >= -delta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeSpec {
    pub delta: f64,
    pub endpoint_tol: f64,
}

impl ConeSpec {
    pub fn new(delta: f64, b: &DomainBoundary) -> Result<Self> {
        if !(delta > 0.0 && delta <= b.delta0()) {
            return Err(Error::Config(format!("cone band {delta} must lie in (0, delta0 = {}]", b.delta0())));
        }
        Ok(Self { delta, endpoint_tol: 1e-8 })
    }

    /// The narrowest useful band: only nodes within the contact tolerance are constrained.
    pub fn contact(b: &DomainBoundary) -> Self {
        Self { delta: DEFAULT_TOL_CONTACT.min(b.delta0()), endpoint_tol: 1e-8 }
    }
}

/// Removes the normal part at the endpoints and the outward normal part at band nodes.
pub fn project_to_cone(
    x: &DiscretePath,
    w: &TangentField,
    cone: &ConeSpec,
    b: &DomainBoundary,
    m: &MetricField,
) -> Result<TangentField> {
    if w.len() != x.nodes().len() {
        return Err(Error::Usage(format!("field of length {} on a path with {} nodes", w.len(), x.nodes().len())));
    }
    let n = x.n();
    let mut out = w.clone();
    for (i, (p, v)) in x.nodes().iter().zip(out.vectors_mut()).enumerate() {
        let endpoint = i == 0 || i == n;
        if !endpoint && b.phi(p) < -cone.delta {
            continue;
        }
        let nu = b.normal_unchecked(m, p)?;
        let c = m.inner(p, &nu, v);
        if endpoint || c > 0.0 {
            *v -= nu * c;
        }
    }
    Ok(out)
}

/// Node-wise `g^{-1}` applied to the energy partials: the metric gradient at each node.
fn raised_gradient(m: &MetricField, x: &DiscretePath) -> (TangentField, TangentField) {
    let e = energy_gradient(m, x);
    if m.is_euclidean() {
        return (e.clone(), e);
    }
    let raised = TangentField::new(x.nodes().iter().zip(e.vectors()).map(|(p, v)| m.inverse(p) * v).collect());
    (e, raised)
}

/// Normalized projected negative gradient and its steepness `-dF(x)[V] >= 0`.
pub fn descent_direction(
    x: &DiscretePath,
    cone: &ConeSpec,
    b: &DomainBoundary,
    m: &MetricField,
) -> Result<(TangentField, f64)> {
    let (partials, raised) = raised_gradient(m, x);
    let v = project_to_cone(x, &raised.scaled(-1.0), cone, b, m)?;
    let size = norm_star(&v);
    let scale = 1.0 + energy(m, x);
    if !(size > 1e-14 * scale) {
        return Ok((TangentField::zeros(v.len(), x.dim()), 0.0));
    }
    let v = v.scaled(1.0 / size);
    let steep = -partials.pair(&v);
    Ok((v, steep.max(0.0)))
}

/// Solves `(E + n L) P = W` coordinate-wise, where `E` selects the endpoints and `L` is the
/// path-graph Laplacian: the Riesz representative of `W` in the discrete `H^1` product.
#[allow(clippy::needless_range_loop)]
fn sobolev_smooth(w: &TangentField) -> TangentField {
    let len = w.len();
    let n = (len - 1) as f64;
    let dim = w.vectors()[0].len();
    let mut out = vec![DVector::zeros(dim); len];
    let diag = |i: usize| if i == 0 || i == len - 1 { 1.0 + n } else { 2.0 * n };
    let off = -n;
    let mut c = vec![0.0; len];
    let mut d = vec![0.0; len];
    for k in 0..dim {
        // Thomas algorithm
        c[0] = off / diag(0);
        d[0] = w.vectors()[0][k] / diag(0);
        for i in 1..len {
            let denom = diag(i) - off * c[i - 1];
            c[i] = off / denom;
            d[i] = (w.vectors()[i][k] - off * d[i - 1]) / denom;
        }
        out[len - 1][k] = d[len - 1];
        for i in (0..len - 1).rev() {
            out[i][k] = d[i] - c[i] * out[i + 1][k];
        }
    }
    TangentField::new(out)
}

/// Pulls endpoints onto the boundary and nodes outside the domain back to it.
pub fn feasibility_project(x: &DiscretePath, b: &DomainBoundary, m: &MetricField) -> Result<DiscretePath> {
    let n = x.n();
    let mut nodes = Vec::with_capacity(n + 1);
    for (i, p) in x.nodes().iter().enumerate() {
        let phi = b.phi(p);
        let endpoint = i == 0 || i == n;
        if (endpoint && phi != 0.0) || phi > 0.0 {
            if phi.abs() > b.delta0() {
                return Err(Error::Precondition(format!("node {i} left the band (phi = {phi:e})")));
            }
            nodes.push(b.retract_to_boundary(m, p)?);
        } else {
            nodes.push(p.clone());
        }
    }
    DiscretePath::new(nodes)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub max_iters: usize,
    /// Stop once steepness falls below `tol_crit * (1 + F)`.
    pub tol_crit: f64,
    pub armijo: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    /// Band of the admissible cone; `None` uses the contact tolerance.
    pub cone_delta: Option<f64>,
    /// Precondition the gradient with the discrete `H^1` product.
    pub sobolev: bool,
    /// Cap on step growth after accepted steps.
    pub max_step: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            tol_crit: 1e-7,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 40,
            cone_delta: None,
            sobolev: true,
            max_step: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iter: usize,
    pub energy: f64,
    pub steepness: f64,
    pub step: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowStatus {
    Converged,
    MaxIters,
    /// Backtracking could not find an admissible decrease.
    Stalled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowOutcome {
    pub path: DiscretePath,
    pub trace: Vec<TraceEntry>,
    pub status: FlowStatus,
}

impl FlowOutcome {
    /// Trace as CSV with columns `iter,energy,steepness,step`.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iter,energy,steepness,step\n");
        for t in &self.trace {
            out.push_str(&format!("{},{:.16e},{:.16e},{:.16e}\n", t.iter, t.energy, t.steepness, t.step));
        }
        out
    }
}

/// Search direction used by the flow, with the slope `-dF(x)[P]`.
fn flow_direction(
    x: &DiscretePath,
    cone: &ConeSpec,
    b: &DomainBoundary,
    m: &MetricField,
    cfg: &FlowConfig,
) -> Result<(TangentField, f64, f64)> {
    let (partials, raised) = raised_gradient(m, x);
    let (v, steep) = descent_direction(x, cone, b, m)?;
    if steep == 0.0 || !cfg.sobolev {
        return Ok((v, steep, steep));
    }
    // smooth the admissible part only, so endpoint normal forces do not leak into the interior
    let admissible = project_to_cone(x, &raised.scaled(-1.0), cone, b, m)?;
    let smooth = project_to_cone(x, &sobolev_smooth(&admissible), cone, b, m)?;
    let size = norm_star(&smooth);
    if size > 0.0 {
        let p = smooth.scaled(1.0 / size);
        let slope = -partials.pair(&p);
        if slope > 0.0 {
            return Ok((p, slope, steep));
        }
    }
    Ok((v, steep, steep))
}

/// One backtracking step from `x` with trial step `h`; returns the new path and accepted step.
pub fn descent_step(
    x: &DiscretePath,
    h: f64,
    b: &DomainBoundary,
    m: &MetricField,
    cfg: &FlowConfig,
) -> Result<Option<(DiscretePath, f64, f64)>> {
    let cone = cone_for(cfg, b);
    let (p, slope, steep) = flow_direction(x, &cone, b, m, cfg)?;
    if steep == 0.0 {
        return Ok(None);
    }
    let f0 = energy(m, x);
    let mut h = h;
    for _ in 0..=cfg.max_backtracks {
        if let Ok(candidate) = x.displaced(&p, h).and_then(|y| feasibility_project(&y, b, m)) {
            let f1 = energy(m, &candidate);
            if f1 <= f0 - cfg.armijo * h * slope {
                return Ok(Some((candidate, h, steep)));
            }
        }
        h *= cfg.backtrack;
    }
    Ok(None)
}

fn cone_for(cfg: &FlowConfig, b: &DomainBoundary) -> ConeSpec {
    match cfg.cone_delta {
        Some(delta) => ConeSpec { delta: delta.min(b.delta0()), endpoint_tol: 1e-8 },
        None => ConeSpec::contact(b),
    }
}

/// Steepest descent with backtracking, starting from `x0`.
///
/// The step starts at `1e-2 / (1 + sqrt F)`, doubles after each accepted step up to
/// `max_step`, and halves on rejection.
pub fn flow(x0: &DiscretePath, b: &DomainBoundary, m: &MetricField, cfg: &FlowConfig) -> Result<FlowOutcome> {
    let mut x = x0.clone();
    let mut trace = Vec::new();
    if x.is_constant() {
        trace.push(TraceEntry { iter: 0, energy: 0.0, steepness: 0.0, step: 0.0 });
        return Ok(FlowOutcome { path: x, trace, status: FlowStatus::Converged });
    }
    let cone = cone_for(cfg, b);
    let mut f = energy(m, &x);
    let mut h = 1e-2 / (1.0 + f.sqrt());
    for iter in 0..cfg.max_iters {
        let (_, steep) = descent_direction(&x, &cone, b, m)?;
        trace.push(TraceEntry { iter, energy: f, steepness: steep, step: h });
        if steep < cfg.tol_crit * (1.0 + f) {
            return Ok(FlowOutcome { path: x, trace, status: FlowStatus::Converged });
        }
        match descent_step(&x, h, b, m, cfg)? {
            Some((next, accepted, _)) => {
                x = next;
                f = energy(m, &x);
                h = (2.0 * accepted).min(cfg.max_step);
            }
            None => return Ok(FlowOutcome { path: x, trace, status: FlowStatus::Stalled }),
        }
    }
    let (_, steep) = descent_direction(&x, &cone, b, m)?;
    trace.push(TraceEntry { iter: cfg.max_iters, energy: f, steepness: steep, step: h });
    let status = if steep < cfg.tol_crit * (1.0 + f) { FlowStatus::Converged } else { FlowStatus::MaxIters };
    Ok(FlowOutcome { path: x, trace, status })
}

/// Finite-difference weights for the derivative of order `order` at `z` on nodes `xs` (Fornberg).
pub fn fd_weights(z: f64, xs: &[f64], order: usize) -> Vec<f64> {
    let n = xs.len();
    let mut c = vec![vec![0.0; order + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - z;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[order]).collect()
}

/// Derivative of order `order` with respect to `s` at every node, by 7-point stencils
/// (one-sided near the ends).
pub fn node_derivatives(x: &DiscretePath, order: usize) -> Vec<DVector<f64>> {
    let n = x.n();
    let width = 7.min(n + 1);
    let nf = n as f64;
    (0..=n)
        .map(|i| {
            let start = i.saturating_sub(width / 2).min(n + 1 - width);
            let offsets: Vec<f64> = (start..start + width).map(|j| j as f64 - i as f64).collect();
            let w = fd_weights(0.0, &offsets, order);
            let mut d = DVector::zeros(x.dim());
            for (k, wk) in w.iter().enumerate() {
                d += x.node(start + k) * *wk;
            }
            d * nf.powi(order as i32)
        })
        .collect()
}

/// `lambda_i = g(H^phi x'_i, x'_i) / |grad phi|_g` at nodes with `phi >= -tol_contact`.
pub fn lambda_profile(x: &DiscretePath, b: &DomainBoundary, m: &MetricField, tol_contact: f64) -> Vec<(usize, f64)> {
    let vel = node_derivatives(x, 1);
    lambda_with(x, b, m, tol_contact, &vel)
}

fn lambda_with(
    x: &DiscretePath,
    b: &DomainBoundary,
    m: &MetricField,
    tol_contact: f64,
    vel: &[DVector<f64>],
) -> Vec<(usize, f64)> {
    (1..x.n())
        .filter(|&i| b.phi(x.node(i)) >= -tol_contact)
        .map(|i| {
            let p = x.node(i);
            let h = b.hessian_phi(m, p);
            (i, vel[i].dot(&(h * &vel[i])) / b.grad_norm(m, p))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CriticalTolerances {
    /// On `max |D/ds x'|_g / F`.
    pub residual: f64,
    /// On endpoint angles from the normal, in radians.
    pub angle: f64,
    /// On `max |g(x',x') - mean| / mean`.
    pub speed: f64,
    pub contact: f64,
    pub lambda: f64,
    pub tangency: f64,
    /// On the largest turning angle between consecutive segments.
    pub c1: f64,
}

impl Default for CriticalTolerances {
    fn default() -> Self {
        Self {
            residual: 1e-6,
            angle: 1e-6,
            speed: 1e-6,
            contact: DEFAULT_TOL_CONTACT,
            lambda: 1e-8,
            tangency: 1e-6,
            c1: 0.25,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Constant,
    #[serde(rename = "ogc")]
    Ogc,
    BoundaryCritical,
    NotCritical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalReport {
    pub energy: f64,
    /// Largest `|D/ds x'|_g / F` over nodes off the contact set.
    pub residual_interior: f64,
    pub lambda: Vec<(usize, f64)>,
    pub lambda_max: Option<f64>,
    /// Largest `|g(x',x') - mean| / mean`.
    pub speed_variation: f64,
    pub endpoint_angles: [f64; 2],
    pub max_tangency: f64,
    pub max_turning: f64,
    pub interior_inside: bool,
    pub classification: Classification,
}

impl CriticalReport {
    pub fn is_ogc(&self) -> bool {
        self.classification == Classification::Ogc
    }
}

/// Evaluates the constrained geodesic equations on `x` and classifies it.
pub fn verify_critical(
    x: &DiscretePath,
    b: &DomainBoundary,
    m: &MetricField,
    tol: &CriticalTolerances,
) -> Result<CriticalReport> {
    let f = energy(m, x);
    let n = x.n();
    if x.is_constant() || f <= 1e-14 {
        return Ok(CriticalReport {
            energy: f,
            residual_interior: 0.0,
            lambda: Vec::new(),
            lambda_max: None,
            speed_variation: 0.0,
            endpoint_angles: [0.0, 0.0],
            max_tangency: 0.0,
            max_turning: 0.0,
            interior_inside: false,
            classification: Classification::Constant,
        });
    }
    let vel = node_derivatives(x, 1);
    let acc = node_derivatives(x, 2);

    let lambda = lambda_with(x, b, m, tol.contact, &vel);
    let contact: Vec<usize> = lambda.iter().map(|(i, _)| *i).collect();
    let lambda_max = lambda.iter().map(|(_, l)| *l).reduce(f64::max);
    let interior_inside = (1..n).all(|i| b.phi(x.node(i)) < 0.0);

    let mut residual: f64 = 0.0;
    for i in 1..n {
        if contact.contains(&i) {
            continue;
        }
        let p = x.node(i);
        let gamma = m.christoffel(p)?;
        let cov = &acc[i] + gamma.contract(&vel[i], &vel[i]);
        residual = residual.max(m.norm(p, &cov));
    }
    let residual_interior = residual / f;

    let speeds: Vec<f64> = x.nodes().iter().zip(&vel).map(|(p, v)| m.inner(p, v, v)).collect();
    let mean = speeds.iter().sum::<f64>() / speeds.len() as f64;
    let speed_variation = speeds.iter().map(|s| (s - mean).abs()).fold(0.0, f64::max) / mean;

    let angle_at = |i: usize, inward: bool| -> Result<f64> {
        let p = x.node(i);
        let nu = b.normal_unchecked(m, p)?;
        let v = &vel[i];
        let normal = m.inner(p, &nu, v);
        let tangential = v - &nu * normal;
        let along = if inward { -normal } else { normal };
        Ok(m.norm(p, &tangential).atan2(along))
    };
    let endpoint_angles = [angle_at(0, true)?, angle_at(n, false)?];

    let mut max_tangency: f64 = 0.0;
    for &i in &contact {
        let p = x.node(i);
        let nu = b.normal_unchecked(m, p)?;
        let speed = m.norm(p, &vel[i]).max(f64::MIN_POSITIVE);
        max_tangency = max_tangency.max(m.inner(p, &nu, &vel[i]).abs() / speed);
    }

    let mut max_turning: f64 = 0.0;
    let segs: Vec<DVector<f64>> = x.nodes().windows(2).map(|w| &w[1] - &w[0]).collect();
    for w in segs.windows(2) {
        let (a, c) = (&w[0], &w[1]);
        if a.norm() > 0.0 && c.norm() > 0.0 {
            let cross = (a.norm_squared() * c.norm_squared() - a.dot(c).powi(2)).max(0.0).sqrt();
            max_turning = max_turning.max(cross.atan2(a.dot(c)));
        }
    }

    let smooth = residual_interior < tol.residual
        && speed_variation < tol.speed
        && endpoint_angles.iter().all(|a| *a < tol.angle)
        && max_turning < tol.c1;
    let classification = if smooth && interior_inside && contact.is_empty() {
        Classification::Ogc
    } else if smooth
        && !contact.is_empty()
        && lambda_max.is_some_and(|l| l <= tol.lambda)
        && max_tangency < tol.tangency
    {
        Classification::BoundaryCritical
    } else {
        Classification::NotCritical
    };
    Ok(CriticalReport {
        energy: f,
        residual_interior,
        lambda,
        lambda_max,
        speed_variation,
        endpoint_angles,
        max_tangency,
        max_turning,
        interior_inside,
        classification,
    })
}
