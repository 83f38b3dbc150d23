//! Brake orbits of natural Lagrangian systems via orthogonal chords of the Jacobi metric.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::descent::node_derivatives;
use crate::error::{Error, Result};
use crate::geometry::{sampling, DomainBoundary, LevelSet, MetricField, Potential};
use crate::multiplicity::{boundary_diameter, distinct, multistart, MultistartConfig, MultistartReport};
use crate::ode::{join, rk38_step, rk4_step, split};
use crate::pathspace::DiscretePath;

/// Metric, potential and energy level of `D/dt q' = -grad V(q)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LagrangianData {
    pub metric: MetricField,
    pub potential: Potential,
    pub energy: f64,
}

impl LagrangianData {
    pub fn new(metric: MetricField, potential: Potential, energy: f64) -> Self {
        Self { metric, potential, energy }
    }

    pub fn dim(&self) -> usize {
        self.metric.dim()
    }

    /// `1/2 |q'|_g^2 + V(q) - E`.
    pub fn energy_residual(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> f64 {
        0.5 * self.metric.inner(q, qdot, qdot) + self.potential.value(q) - self.energy
    }

    /// The energy surface `{V = E}` as a level set.
    pub fn level_set(&self) -> LevelSet {
        LevelSet::Sublevel { potential: self.potential.clone(), level: self.energy }
    }

    /// Checks on `samples` directions that `{V <= E}` contains the origin, is star-shaped
    /// about it, and that `|grad V| > 1e-6` where the rays meet `{V = E}`.
    pub fn validate(&self, samples: usize) -> Result<()> {
        let d = self.dim();
        let origin = DVector::zeros(d);
        if !(self.potential.value(&origin) < self.energy) {
            return Err(Error::Config("energy level must exceed the potential at the origin".into()));
        }
        let ls = self.level_set();
        for u in sampling::sphere_samples(samples, d) {
            let t = ls
                .ray_root(&u)
                .ok_or_else(|| Error::Config(format!("sublevel is unbounded along {:?}", u.as_slice())))?;
            for k in 1..8 {
                let inner = &u * (t * k as f64 / 8.0);
                if self.potential.value(&inner) >= self.energy {
                    return Err(Error::Config("sublevel is not star-shaped about the origin".into()));
                }
            }
            let grad = self.potential.gradient(&(&u * t)).norm();
            if !(grad > 1e-6) {
                return Err(Error::Config(format!("energy level is critical along {:?}", u.as_slice())));
            }
        }
        Ok(())
    }

    fn acceleration(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> DVector<f64> {
        let gamma = self.metric.christoffel_unchecked(q);
        -gamma.contract(qdot, qdot) - self.metric.inverse(q) * self.potential.gradient(q)
    }

    fn rhs(&self, y: &DVector<f64>) -> DVector<f64> {
        let (q, v) = split(y);
        join(&v, &self.acceleration(&q, &v))
    }

    /// `dV(q') = d/dt V(q(t))`.
    fn rate(&self, y: &DVector<f64>) -> f64 {
        let (q, v) = split(y);
        self.potential.gradient(&q).dot(&v)
    }
}

/// Jacobi metric `(E - V) g` on the shrunk domain `{V <= E - margin}`.
#[derive(Clone, Debug, PartialEq)]
pub struct JacobiDomain {
    pub metric: MetricField,
    pub boundary: DomainBoundary,
    pub margin: f64,
}

/// Default margin `1e-2 (E - min V)`.
pub fn default_margin(l: &LagrangianData) -> f64 {
    1e-2 * (l.energy - l.potential.well_bottom(l.dim()))
}

/// Builds the Jacobi metric and the boundary `V - (E - margin)`; `delta0` is half the margin
/// so the metric stays positive on the boundary band.
pub fn jacobi_metric(l: &LagrangianData, margin: Option<f64>, k0_samples: usize) -> Result<JacobiDomain> {
    let depth = l.energy - l.potential.well_bottom(l.dim());
    let margin = margin.unwrap_or_else(|| default_margin(l));
    if !(margin > 0.0) {
        return Err(Error::Config(format!("margin must be positive, got {margin}")));
    }
    if margin >= depth {
        return Err(Error::Config(format!("margin {margin} leaves an empty domain (well depth {depth})")));
    }
    l.validate(64)?;
    let metric = MetricField::jacobi(l.metric.clone(), l.potential.clone(), l.energy);
    let level_set = LevelSet::Sublevel { potential: l.potential.clone(), level: l.energy - margin };
    let boundary = DomainBoundary::calibrated(level_set, &metric, 0.5 * margin, k0_samples)?;
    Ok(JacobiDomain { metric, boundary, margin })
}

/// Solution sampled at increasing times, starting and ending at rest on `{V = E}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrakeOrbit {
    pub times: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub qdot: Vec<Vec<f64>>,
    pub energy_residual: Vec<f64>,
}

impl BrakeOrbit {
    pub fn half_period(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0) - self.times.first().copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn state(&self, i: usize) -> (DVector<f64>, DVector<f64>) {
        (DVector::from_column_slice(&self.q[i]), DVector::from_column_slice(&self.qdot[i]))
    }

    /// The same orbit run backwards in time.
    pub fn reversed(&self) -> Self {
        let t_end = self.times.last().copied().unwrap_or(0.0);
        let t0 = self.times.first().copied().unwrap_or(0.0);
        Self {
            times: self.times.iter().rev().map(|t| t0 + t_end - t).collect(),
            q: self.q.iter().rev().cloned().collect(),
            qdot: self.qdot.iter().rev().map(|v| v.iter().map(|x| -x).collect()).collect(),
            energy_residual: self.energy_residual.iter().rev().copied().collect(),
        }
    }

    /// Configuration trace as a path with one node per stored time.
    pub fn path(&self) -> Result<DiscretePath> {
        DiscretePath::new(self.q.iter().map(|p| DVector::from_column_slice(p)).collect())
    }

    /// CSV with columns `t, q..., qdot..., energy_residual`.
    pub fn to_csv(&self) -> String {
        let d = self.q.first().map(|p| p.len()).unwrap_or(0);
        let mut out = String::from("t");
        for k in 0..d {
            let _ = write!(out, ",q{k}");
        }
        for k in 0..d {
            let _ = write!(out, ",qdot{k}");
        }
        out.push_str(",energy_residual\n");
        for i in 0..self.len() {
            let _ = write!(out, "{:.16e}", self.times[i]);
            for x in self.q[i].iter().chain(&self.qdot[i]) {
                let _ = write!(out, ",{x:.16e}");
            }
            let _ = writeln!(out, ",{:.16e}", self.energy_residual[i]);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BrakeConfig {
    /// Integrator step in physical time.
    pub step: f64,
    /// Integration horizon when searching for a brake instant.
    pub max_time: f64,
    pub brake_tol: f64,
    pub deviation_tol: f64,
    /// Relative to `1 + |E|`.
    pub energy_tol: f64,
    /// Residual target of the brake shooting iteration.
    pub shoot_tol: f64,
}

impl Default for BrakeConfig {
    fn default() -> Self {
        Self { step: 1e-3, max_time: 100.0, brake_tol: 1e-6, deviation_tol: 1e-5, energy_tol: 1e-6, shoot_tol: 1e-10 }
    }
}

/// Integrates from `y0` until `V(q(t))` has a local maximum, located by bisection.
/// Returns the event time and state, or `None` within `max_time`.
fn run_to_turn(l: &LagrangianData, y0: &DVector<f64>, cfg: &BrakeConfig) -> Option<(f64, DVector<f64>)> {
    let f = |y: &DVector<f64>| l.rhs(y);
    let mut y = y0.clone();
    let mut t = 0.0;
    let mut rising = l.rate(&y) > 0.0;
    while t < cfg.max_time {
        let next = rk4_step(&f, &y, cfg.step);
        if !next.iter().all(|c| c.is_finite()) {
            return None;
        }
        let next_rate = l.rate(&next);
        if rising && next_rate <= 0.0 {
            let (mut lo, mut hi) = (0.0, cfg.step);
            let mut best = next.clone();
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                let z = rk4_step(&f, &y, mid);
                if l.rate(&z) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                    best = z;
                }
                if hi - lo < 1e-16 {
                    break;
                }
            }
            return Some((t + hi, best));
        }
        rising = rising || next_rate > 0.0;
        y = next;
        t += cfg.step;
    }
    None
}

/// Samples the motion from `y0` on `steps` equal steps up to time `total`.
fn sample_orbit(l: &LagrangianData, y0: &DVector<f64>, total: f64, base_step: f64) -> BrakeOrbit {
    let steps = ((total / base_step).ceil() as usize).max(1);
    let h = total / steps as f64;
    let f = |y: &DVector<f64>| l.rhs(y);
    let mut y = y0.clone();
    let mut orbit = BrakeOrbit { times: Vec::new(), q: Vec::new(), qdot: Vec::new(), energy_residual: Vec::new() };
    for i in 0..=steps {
        let (q, v) = split(&y);
        orbit.times.push(h * i as f64);
        orbit.energy_residual.push(l.energy_residual(&q, &v));
        orbit.q.push(q.iter().copied().collect());
        orbit.qdot.push(v.iter().copied().collect());
        if i < steps {
            y = rk4_step(&f, &y, h);
        }
    }
    orbit
}

/// Point of `{V = E}` on the ray through `u`.
fn energy_surface_point(l: &LagrangianData, u: &DVector<f64>) -> Result<DVector<f64>> {
    let t = l
        .level_set()
        .ray_root(u)
        .ok_or_else(|| Error::Config("energy surface not star-shaped about the origin".into()))?;
    Ok(u * (t / u.norm()))
}

/// Velocity at the first turning point of the motion released at rest from `{V = E}` along `u`.
fn brake_residual(l: &LagrangianData, u: &DVector<f64>, cfg: &BrakeConfig) -> Result<Option<(DVector<f64>, f64)>> {
    let q0 = energy_surface_point(l, u)?;
    let y0 = join(&q0, &DVector::zeros(q0.len()));
    Ok(run_to_turn(l, &y0, cfg).map(|(t, y)| (split(&y).1, t)))
}

/// Gauss-Newton on the release direction so that the motion released at rest
/// comes to rest again.
fn brake_shoot(l: &LagrangianData, u0: &DVector<f64>, cfg: &BrakeConfig) -> Result<(DVector<f64>, f64, f64)> {
    let d = u0.len();
    let mut u = u0 / u0.norm();
    let no_turn = || Error::Numeric("released motion never turns back".into());
    let (mut r, mut t) = brake_residual(l, &u, cfg)?.ok_or_else(no_turn)?;
    for _ in 0..50 {
        if r.norm() < cfg.shoot_tol {
            break;
        }
        // orthonormal tangent basis of the unit sphere at u
        let mut basis: Vec<DVector<f64>> = Vec::new();
        for k in 0..d {
            let mut e = DVector::zeros(d);
            e[k] = 1.0;
            e -= &u * u.dot(&e);
            for b in &basis {
                e -= b * b.dot(&e);
            }
            if e.norm() > 1e-6 && basis.len() < d - 1 {
                basis.push(e.normalize());
            }
        }
        let h = 1e-6;
        let mut jac = DMatrix::zeros(d, d - 1);
        for (j, e) in basis.iter().enumerate() {
            let (rp, _) = brake_residual(l, &(&u + e * h).normalize(), cfg)?.ok_or_else(no_turn)?;
            let (rm, _) = brake_residual(l, &(&u - e * h).normalize(), cfg)?.ok_or_else(no_turn)?;
            jac.set_column(j, &((rp - rm) / (2.0 * h)));
        }
        let step = jac.svd(true, true).solve(&(-&r), 1e-14).map_err(|e| Error::Numeric(e.to_string()))?;
        let mut scale = (0.2 / step.norm()).min(1.0);
        let mut improved = false;
        for _ in 0..20 {
            let mut cand = u.clone();
            for (j, e) in basis.iter().enumerate() {
                cand += e * (scale * step[j]);
            }
            let cand = cand.normalize();
            if let Some((rc, tc)) = brake_residual(l, &cand, cfg)? {
                if rc.norm() < r.norm() {
                    u = cand;
                    r = rc;
                    t = tc;
                    improved = true;
                    break;
                }
            }
            scale *= 0.5;
        }
        if !improved {
            break;
        }
    }
    let q0 = energy_surface_point(l, &u)?;
    Ok((q0, t, r.norm()))
}

/// Converts an OGC of the Jacobi metric into a brake orbit.
///
/// The motion through the OGC midpoint, with speed `sqrt(2 (E - V))` along the chord, is
/// integrated backwards to its turning point; the release point on `{V = E}` found there
/// is then adjusted until the motion released at rest comes to rest again.
pub fn ogc_to_brake(l: &LagrangianData, ogc: &DiscretePath, cfg: &BrakeConfig) -> Result<BrakeOrbit> {
    let n = ogc.n();
    let mid = n / 2;
    let q = ogc.node(mid).clone();
    let depth = l.energy - l.potential.value(&q);
    if !(depth > 0.0) {
        return Err(Error::Precondition("chord midpoint lies outside the sublevel".into()));
    }
    let tangent = node_derivatives(ogc, 1)[mid].clone();
    let speed = (2.0 * depth).sqrt() / l.metric.norm(&q, &tangent);
    let back = join(&q, &(-&tangent * speed));
    let Some((_, turn)) = run_to_turn(l, &back, cfg) else {
        return Err(Error::Precondition("motion through the chord never comes to rest".into()));
    };
    let (qt, vt) = split(&turn);
    if l.metric.norm(&qt, &vt) > 1e-2 * (2.0 * depth).sqrt() {
        return Err(Error::Precondition(format!(
            "motion through the chord turns with speed {:e}; no brake point",
            l.metric.norm(&qt, &vt)
        )));
    }
    let (q0, total, residual) = brake_shoot(l, &qt, cfg)?;
    if residual > cfg.brake_tol {
        return Err(Error::Numeric(format!("brake shooting stalled with terminal speed {residual:e}")));
    }
    Ok(sample_orbit(l, &join(&q0, &DVector::zeros(q0.len())), total, cfg.step))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrakeReport {
    /// Largest distance between the stored orbit and an independent re-integration.
    pub deviation: f64,
    pub energy_residual: f64,
    pub start_speed: f64,
    pub end_speed: f64,
    /// `|V - E|` at the two ends.
    pub end_levels: [f64; 2],
    /// Distance between the orbit run back from its final brake point and the stored orbit.
    pub reflection_deviation: f64,
    pub half_period: f64,
    pub passed: bool,
}

/// Re-integrates the orbit with the 3/8-rule at half the stored step and checks the brake
/// conditions, energy conservation and the reflection symmetry at the final brake point.
pub fn verify_brake(l: &LagrangianData, orbit: &BrakeOrbit, cfg: &BrakeConfig) -> Result<BrakeReport> {
    if orbit.len() < 2 {
        return Err(Error::Usage("orbit needs at least two samples".into()));
    }
    let f = |y: &DVector<f64>| l.rhs(y);
    let rerun = |start: usize, reverse: bool| -> f64 {
        let (q, v) = orbit.state(start);
        let mut y = join(&q, &(if reverse { -v } else { v }));
        let mut dev: f64 = 0.0;
        let idx: Vec<usize> = if reverse { (0..orbit.len()).rev().collect() } else { (0..orbit.len()).collect() };
        for w in idx.windows(2) {
            let h = (orbit.times[w[1]] - orbit.times[w[0]]).abs();
            y = rk38_step(&f, &y, 0.5 * h);
            y = rk38_step(&f, &y, 0.5 * h);
            let target = DVector::from_column_slice(&orbit.q[w[1]]);
            dev = dev.max((split(&y).0 - target).norm());
        }
        dev
    };
    let deviation = rerun(0, false);
    let reflection_deviation = rerun(orbit.len() - 1, true);
    let energy_residual = orbit
        .q
        .iter()
        .zip(&orbit.qdot)
        .map(|(q, v)| l.energy_residual(&DVector::from_column_slice(q), &DVector::from_column_slice(v)).abs())
        .fold(0.0, f64::max);
    let (q0, v0) = orbit.state(0);
    let (q1, v1) = orbit.state(orbit.len() - 1);
    let start_speed = l.metric.norm(&q0, &v0);
    let end_speed = l.metric.norm(&q1, &v1);
    let end_levels = [(l.potential.value(&q0) - l.energy).abs(), (l.potential.value(&q1) - l.energy).abs()];
    let etol = cfg.energy_tol * (1.0 + l.energy.abs());
    let passed = deviation < cfg.deviation_tol
        && reflection_deviation < cfg.deviation_tol
        && energy_residual < etol
        && start_speed < cfg.brake_tol
        && end_speed < cfg.brake_tol
        && end_levels.iter().all(|e| *e < etol);
    Ok(BrakeReport {
        deviation,
        energy_residual,
        start_speed,
        end_speed,
        end_levels,
        reflection_deviation,
        half_period: orbit.half_period(),
        passed,
    })
}

/// Jacobi length of the polygon through the nodes of `x`, by adaptive Simpson quadrature
/// along each segment. The metric varies sharply near the boundary, so a fixed rule is not enough.
pub fn jacobi_length(domain: &JacobiDomain, x: &DiscretePath) -> f64 {
    x.nodes()
        .windows(2)
        .map(|w| {
            let d = &w[1] - &w[0];
            let speed = |t: f64| domain.metric.norm(&(&w[0] + &d * t), &d);
            let (fa, fm, fb) = (speed(0.0), speed(0.5), speed(1.0));
            adaptive_simpson(&speed, 0.0, 1.0, fa, fm, fb, 1e-13, 40)
        })
        .sum()
}

#[allow(clippy::too_many_arguments)]
fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let err = left + right - whole;
    if depth == 0 || err.abs() <= 15.0 * tol {
        left + right + err / 15.0
    } else {
        adaptive_simpson(f, a, m, fa, flm, fm, 0.5 * tol, depth - 1)
            + adaptive_simpson(f, m, b, fm, frm, fb, 0.5 * tol, depth - 1)
    }
}

/// `∫ sqrt(E - V) |q'|_g dt` over the part of the orbit inside `{V <= E - margin}`
/// (trapezoid rule, with linear interpolation at the crossings).
pub fn orbit_jacobi_length(l: &LagrangianData, orbit: &BrakeOrbit, margin: f64) -> f64 {
    let inside = |i: usize| {
        let (q, v) = orbit.state(i);
        let depth = l.energy - l.potential.value(&q);
        let w = depth.max(0.0).sqrt() * l.metric.norm(&q, &v);
        (depth - margin, w)
    };
    let mut total = 0.0;
    for i in 0..orbit.len() - 1 {
        let (s0, w0) = inside(i);
        let (s1, w1) = inside(i + 1);
        let h = orbit.times[i + 1] - orbit.times[i];
        if s0 >= 0.0 && s1 >= 0.0 {
            total += 0.5 * h * (w0 + w1);
        } else if s0 >= 0.0 || s1 >= 0.0 {
            // fraction of the step inside, from the linear crossing
            let theta = s0 / (s0 - s1);
            let wc = w0 + theta * (w1 - w0);
            total += if s0 >= 0.0 { 0.5 * h * theta * (w0 + wc) } else { 0.5 * h * (1.0 - theta) * (wc + w1) };
        }
    }
    total
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrakeEntry {
    pub orbit: BrakeOrbit,
    pub report: BrakeReport,
    pub ogc_energy: f64,
    /// Jacobi length of the OGC and of the orbit inside the shrunk domain.
    pub jacobi_lengths: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrakeCatalog {
    pub entries: Vec<BrakeEntry>,
    pub target: usize,
    /// OGCs whose conversion or verification failed, with the reason.
    pub failures: Vec<(usize, String)>,
    pub ogcs: MultistartReport,
}

impl BrakeCatalog {
    pub fn count(&self) -> usize {
        self.entries.len()
    }

    /// `index,half_period,deviation,energy_residual,start_speed,end_speed,passed`
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("index,half_period,deviation,energy_residual,start_speed,end_speed,passed\n");
        for (i, e) in self.entries.iter().enumerate() {
            let r = &e.report;
            let _ = writeln!(
                out,
                "{i},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
                r.half_period, r.deviation, r.energy_residual, r.start_speed, r.end_speed, r.passed
            );
        }
        out
    }
}

/// Runs the multistart search on the Jacobi domain and converts every cataloged OGC into a
/// verified brake orbit, keeping geometrically distinct ones.
pub fn brake_multiplicity(
    l: &LagrangianData,
    domain: &JacobiDomain,
    multistart_cfg: &MultistartConfig,
    cfg: &BrakeConfig,
) -> Result<BrakeCatalog> {
    // node derivatives cannot resolve the layer where the Jacobi metric degenerates
    let ms_cfg = MultistartConfig { shot_fallback: true, ..multistart_cfg.clone() };
    let ogcs = multistart(&domain.metric, &domain.boundary, &ms_cfg)?;
    let tol = multistart_cfg.hausdorff_rel * boundary_diameter(&domain.boundary)?;
    let job = |e: &crate::multiplicity::CatalogEntry| -> Result<std::result::Result<BrakeEntry, String>> {
        let orbit = match ogc_to_brake(l, &e.path, cfg) {
            Ok(o) => o,
            Err(err) => return Ok(Err(err.to_string())),
        };
        let report = verify_brake(l, &orbit, cfg)?;
        if !report.passed {
            return Ok(Err(format!("verification failed: {report:?}")));
        }
        let lengths = [jacobi_length(domain, &e.path), orbit_jacobi_length(l, &orbit, domain.margin)];
        Ok(Ok(BrakeEntry { orbit, report, ogc_energy: e.energy, jacobi_lengths: lengths }))
    };
    #[cfg(feature = "parallel")]
    let results: Result<Vec<_>> = {
        use rayon::prelude::*;
        ogcs.catalog.entries.par_iter().map(job).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Result<Vec<_>> = ogcs.catalog.entries.iter().map(job).collect();
    let mut entries: Vec<BrakeEntry> = Vec::new();
    let mut paths: Vec<DiscretePath> = Vec::new();
    let mut failures = Vec::new();
    for (i, r) in results?.into_iter().enumerate() {
        match r {
            Ok(entry) => {
                let path = entry.orbit.path()?.resample(128);
                if paths.iter().all(|p| distinct(p, &path, tol)) {
                    paths.push(path);
                    entries.push(entry);
                }
            }
            Err(msg) => failures.push((i, msg)),
        }
    }
    Ok(BrakeCatalog { entries, target: l.dim(), failures, ogcs })
}

/// SVG of the configuration-space traces inside the energy surface, brake points marked.
pub fn render_orbits_svg(l: &LagrangianData, orbits: &[&BrakeOrbit]) -> Result<String> {
    if l.dim() != 2 {
        return Err(Error::Usage("SVG rendering needs a planar configuration space".into()));
    }
    let outline: Vec<DVector<f64>> =
        sampling::direction_grid(256, 2).iter().map(|u| energy_surface_point(l, u)).collect::<Result<_>>()?;
    let r = outline.iter().map(|p| p[0].abs().max(p[1].abs())).fold(0.0, f64::max) * 1.05;
    let size = 512.0;
    let map = |x: f64, y: f64| ((x + r) / (2.0 * r) * size, (r - y) / (2.0 * r) * size);
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" viewBox=\"0 0 {size} {size}\">\n"
    );
    let _ = writeln!(out, "<rect width=\"{size}\" height=\"{size}\" fill=\"white\"/>");
    let pts: Vec<String> = outline
        .iter()
        .map(|p| {
            let (x, y) = map(p[0], p[1]);
            format!("{x:.3},{y:.3}")
        })
        .collect();
    let _ =
        writeln!(out, "<polygon points=\"{}\" fill=\"none\" stroke=\"black\" stroke-width=\"1.5\"/>", pts.join(" "));
    for (k, o) in orbits.iter().enumerate() {
        let hue = (k * 137) % 360;
        let stride = (o.len() / 400).max(1);
        let mut pts: Vec<String> =
            o.q.iter()
                .step_by(stride)
                .map(|p| {
                    let (x, y) = map(p[0], p[1]);
                    format!("{x:.3},{y:.3}")
                })
                .collect();
        let last = o.q.last().expect("nonempty orbit");
        let (lx, ly) = map(last[0], last[1]);
        pts.push(format!("{lx:.3},{ly:.3}"));
        let _ = writeln!(
            out,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"hsl({hue},70%,40%)\" stroke-width=\"1.2\"/>",
            pts.join(" ")
        );
        for p in [&o.q[0], last] {
            let (x, y) = map(p[0], p[1]);
            let _ = writeln!(out, "<circle cx=\"{x:.3}\" cy=\"{y:.3}\" r=\"3\" fill=\"hsl({hue},70%,40%)\"/>");
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn harmonic(dim: usize) -> LagrangianData {
        LagrangianData::new(MetricField::euclidean(dim), Potential::Harmonic, 0.5)
    }

    fn diameter(u: &DVector<f64>, r: f64) -> DiscretePath {
        DiscretePath::from_fn(128, |s| u * (r * (1.0 - 2.0 * s)))
    }

    #[test]
    fn jacobi_metric_examples() {
        let free = LagrangianData::new(MetricField::euclidean(2), Potential::Zero, 1.0);
        let jm = MetricField::jacobi(free.metric.clone(), free.potential.clone(), 1.0);
        let p = v(&[0.3, 0.4]);
        assert_eq!(jm.matrix(&p), DMatrix::identity(2, 2));
        assert!(free.validate(16).is_err());

        let l = harmonic(2);
        let dom = jacobi_metric(&l, Some(0.005), 64).unwrap();
        let g = dom.metric.matrix(&p);
        assert!((g[(0, 0)] - (0.5 - 0.125)).abs() < 1e-15);
        let edge = dom.boundary.boundary_point(&v(&[1.0, 0.0])).unwrap();
        assert!((edge[0] - 0.99f64.sqrt()).abs() < 1e-9);
        assert!(dom.metric.metric_at(&v(&[1.1, 0.0])).is_err());
        assert!(jacobi_metric(&l, Some(0.5), 64).is_err());
        assert!(jacobi_metric(&l, Some(0.0), 64).is_err());
    }

    #[test]
    fn harmonic_brake_orbit_is_cosine() {
        let l = harmonic(2);
        let cfg = BrakeConfig::default();
        let e = v(&[0.6, 0.8]);
        let orbit = ogc_to_brake(&l, &diameter(&e, 0.99f64.sqrt()), &cfg).unwrap();
        assert!((orbit.half_period() - std::f64::consts::PI).abs() < 1e-3);
        let start = DVector::from_column_slice(&orbit.q[0]);
        let dir = &start / start.norm();
        for (t, q) in orbit.times.iter().zip(&orbit.q) {
            let q = DVector::from_column_slice(q);
            assert!((q - &dir * t.cos()).norm() < 1e-5);
        }
        let rep = verify_brake(&l, &orbit, &cfg).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!(rep.energy_residual < 1e-6 && rep.start_speed < 1e-6 && rep.end_speed < 1e-6);
        let rev = verify_brake(&l, &orbit.reversed(), &cfg).unwrap();
        assert!(rev.passed, "{rev:?}");
    }

    #[test]
    fn perturbed_orbit_is_flagged() {
        let l = harmonic(2);
        let cfg = BrakeConfig::default();
        let mut orbit = ogc_to_brake(&l, &diameter(&v(&[1.0, 0.0]), 0.99f64.sqrt()), &cfg).unwrap();
        let mid = orbit.len() / 2;
        orbit.q[mid][1] += 1e-3;
        let rep = verify_brake(&l, &orbit, &cfg).unwrap();
        assert!(!rep.passed && rep.deviation > 1e-5);
    }

    #[test]
    fn free_motion_never_brakes() {
        let l = LagrangianData::new(MetricField::euclidean(2), Potential::Zero, 1.0);
        let cfg = BrakeConfig { max_time: 10.0, ..BrakeConfig::default() };
        assert!(ogc_to_brake(&l, &diameter(&v(&[1.0, 0.0]), 1.0), &cfg).is_err());
    }

    #[test]
    fn maupertuis_lengths_agree() {
        let l = harmonic(2);
        let dom = jacobi_metric(&l, None, 64).unwrap();
        let r = dom.boundary.radial_extent(&v(&[1.0, 0.0])).unwrap();
        let x = DiscretePath::from_fn(2048, |s| v(&[r * (1.0 - 2.0 * s), 0.0]));
        let orbit = ogc_to_brake(&l, &x, &BrakeConfig::default()).unwrap();
        let a = jacobi_length(&dom, &x);
        let b = orbit_jacobi_length(&l, &orbit, dom.margin);
        assert!((a - b).abs() < 1e-4 * a, "{a} {b}");
    }

    #[test]
    fn cubic_orbit_needs_shooting_and_verifies() {
        let l = LagrangianData::new(MetricField::euclidean(2), Potential::Cubic { epsilon: 0.01 }, 0.5);
        let cfg = BrakeConfig::default();
        // the x-axis is invariant, so its chord is an exact brake orbit; the y direction is bent
        let r = 0.99f64.sqrt();
        let bent = diameter(&v(&[0.0, 1.0]), r);
        let orbit = ogc_to_brake(&l, &bent, &cfg).unwrap();
        let rep = verify_brake(&l, &orbit, &cfg).unwrap();
        assert!(rep.passed, "{rep:?}");
    }
}
