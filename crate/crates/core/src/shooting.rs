//! Geodesic integration, orthogonal shooting from the boundary and exit classification.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::descent::CriticalTolerances;
use crate::error::{Error, Result};
use crate::geometry::{sampling, DomainBoundary, MetricField};
use crate::ode::{join, rk4_step, split};
use crate::pathspace::{DiscretePath, BOUNDARY_TOL, DEFAULT_NODES};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShootConfig {
    /// Nominal Euclidean step length of the integrator.
    pub step: f64,
    /// Give up after this much Riemannian length.
    pub max_len: f64,
    pub tan_tol: f64,
    pub orth_tol: f64,
    /// Local maxima of `phi` above `-graze_tol` without a crossing are recorded.
    pub graze_tol: f64,
    /// Trajectories leaving `|x| <= chart_radius` are abandoned.
    pub chart_radius: f64,
    /// Segments of the resampled path.
    pub nodes: usize,
}

impl Default for ShootConfig {
    fn default() -> Self {
        Self {
            step: 1e-3,
            max_len: 100.0,
            tan_tol: 1e-3,
            orth_tol: 1e-6,
            graze_tol: 1e-8,
            chart_radius: 1e3,
            nodes: DEFAULT_NODES,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShotKind {
    Orthogonal,
    Tangent,
    Transversal,
    NoReturn,
}

impl ShotKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ShotKind::Orthogonal => "orthogonal",
            ShotKind::Tangent => "tangent",
            ShotKind::Transversal => "transversal",
            ShotKind::NoReturn => "no_return",
        }
    }
}

/// A local maximum of `phi` along the trajectory that came within `graze_tol` of the boundary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrazeEvent {
    pub length: f64,
    pub point: Vec<f64>,
    pub phi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShotResult {
    pub start: Vec<f64>,
    pub exit: Option<Vec<f64>>,
    /// `g(x', nu) / |x'|_g` at the exit point.
    pub exit_cos: f64,
    pub exit_velocity: Option<Vec<f64>>,
    pub length: f64,
    pub kind: ShotKind,
    pub grazes: Vec<GrazeEvent>,
    pub path: Option<DiscretePath>,
}

/// Sampled geodesic: parameter values and states `(x, x')`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub params: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub left_chart: bool,
}

impl Trajectory {
    pub fn points(&self) -> impl Iterator<Item = DVector<f64>> + '_ {
        self.states.iter().map(|y| split(y).0)
    }
}

struct Geodesic<'a> {
    m: &'a MetricField,
    step: f64,
}

impl Geodesic<'_> {
    fn rhs(&self, y: &DVector<f64>) -> DVector<f64> {
        let (x, v) = split(y);
        let acc = -self.m.christoffel_unchecked(&x).contract(&v, &v);
        join(&v, &acc)
    }

    /// Parameter step covering at most `step` of Euclidean length and a small fraction of
    /// the Euclidean radius of curvature.
    fn step_size(&self, y: &DVector<f64>) -> f64 {
        let (x, v) = split(y);
        let speed = v.norm();
        let acc = self.m.christoffel_unchecked(&x).contract(&v, &v).norm();
        let mut ds = self.step;
        if acc > 0.0 {
            ds = ds.min(0.02 * speed * speed / acc);
        }
        ds / speed
    }

    fn advance(&self, y: &DVector<f64>, h: f64) -> DVector<f64> {
        rk4_step(&|z: &DVector<f64>| self.rhs(z), y, h)
    }
}

fn escaped(y: &DVector<f64>, m: &MetricField, chart_radius: f64) -> bool {
    let (x, v) = split(y);
    !y.iter().all(|c| c.is_finite()) || x.norm() > chart_radius || !(m.inner(&x, &v, &v) > 0.0)
}

/// Integrates the geodesic equation from `(p, v)` until its Riemannian length reaches `max_len`.
pub fn integrate_geodesic(
    m: &MetricField,
    p: &DVector<f64>,
    v: &DVector<f64>,
    step: f64,
    max_len: f64,
) -> Result<Trajectory> {
    m.check_dim(p)?;
    m.christoffel(p)?;
    let speed = m.norm(p, v);
    if !(speed > 0.0) {
        return Err(Error::Precondition("initial velocity must be nonzero".into()));
    }
    let geo = Geodesic { m, step };
    let horizon = max_len / speed;
    let mut params = vec![0.0];
    let mut states = vec![join(p, v)];
    let mut s = 0.0;
    while s < horizon {
        let y = states.last().expect("nonempty");
        let h = geo.step_size(y).min(horizon - s);
        let next = geo.advance(y, h);
        if escaped(&next, m, 1e6) {
            return Ok(Trajectory { params, states, left_chart: true });
        }
        s += h;
        params.push(s);
        states.push(next);
    }
    Ok(Trajectory { params, states, left_chart: false })
}

fn classify(exit_cos: f64, cfg: &ShootConfig) -> ShotKind {
    if exit_cos.abs() < cfg.tan_tol {
        ShotKind::Tangent
    } else if exit_cos > 1.0 - cfg.orth_tol {
        ShotKind::Orthogonal
    } else {
        ShotKind::Transversal
    }
}

/// Shoots from the boundary point `a` along the inward unit normal until the first exit.
pub fn shoot_orthogonal(
    m: &MetricField,
    b: &DomainBoundary,
    a: &DVector<f64>,
    cfg: &ShootConfig,
) -> Result<ShotResult> {
    let phi_a = b.phi(a);
    if phi_a.abs() > BOUNDARY_TOL {
        return Err(Error::Precondition(format!("start point has phi = {phi_a:e}")));
    }
    m.christoffel(a)?;
    let nu = b.unit_normal(m, a)?;
    shoot_from(m, b, a, &(-nu), cfg)
}

/// Integrates from `a` with initial velocity `v0` and reports the first boundary crossing.
pub fn shoot_from(
    m: &MetricField,
    b: &DomainBoundary,
    a: &DVector<f64>,
    v0: &DVector<f64>,
    cfg: &ShootConfig,
) -> Result<ShotResult> {
    let speed = m.norm(a, v0);
    let geo = Geodesic { m, step: cfg.step };
    let horizon = cfg.max_len / speed;
    let mut params = vec![0.0];
    let mut states = vec![join(a, v0)];
    let mut phis = vec![b.phi(a)];
    let mut grazes = Vec::new();
    let no_return = |params: &[f64], grazes: Vec<GrazeEvent>| ShotResult {
        start: a.iter().copied().collect(),
        exit: None,
        exit_cos: f64::NAN,
        exit_velocity: None,
        length: params.last().copied().unwrap_or(0.0) * speed,
        kind: ShotKind::NoReturn,
        grazes,
        path: None,
    };
    loop {
        let s = *params.last().expect("nonempty");
        if s >= horizon {
            return Ok(no_return(&params, grazes));
        }
        let y = states.last().expect("nonempty").clone();
        let h = geo.step_size(&y);
        let next = geo.advance(&y, h);
        if escaped(&next, m, cfg.chart_radius) {
            return Ok(no_return(&params, grazes));
        }
        let phi_prev = *phis.last().expect("nonempty");
        let phi_next = b.phi(&split(&next).0);
        if phi_prev < 0.0 && phi_next >= 0.0 {
            let (theta, exit_state) = locate_crossing(&geo, b, &y, h);
            let s_exit = s + theta * h;
            params.push(s_exit);
            states.push(exit_state);
            break;
        }
        let k = phis.len();
        if k >= 2 {
            let (p0, p1) = (phis[k - 2], phis[k - 1]);
            if p1 > p0 && p1 > phi_next && p1 >= -cfg.graze_tol {
                grazes.push(GrazeEvent {
                    length: s * speed,
                    point: split(&states[k - 1]).0.iter().copied().collect(),
                    phi: p1,
                });
            }
        }
        params.push(s + h);
        states.push(next);
        phis.push(phi_next);
    }

    let exit_state = states.last().expect("nonempty");
    let (xe, ve) = split(exit_state);
    let nu = b.normal_unchecked(m, &xe)?;
    let exit_cos = m.inner(&xe, &ve, &nu) / m.norm(&xe, &ve);
    let s_exit = *params.last().expect("nonempty");
    let path = resample(&geo, &params, &states, cfg.nodes);
    Ok(ShotResult {
        start: a.iter().copied().collect(),
        exit: Some(xe.iter().copied().collect()),
        exit_cos,
        exit_velocity: Some(ve.iter().copied().collect()),
        length: s_exit * speed,
        kind: classify(exit_cos, cfg),
        grazes,
        path: Some(path),
    })
}

/// Bisection on the fraction of the last step at which `phi` changes sign.
fn locate_crossing(geo: &Geodesic, b: &DomainBoundary, y: &DVector<f64>, h: f64) -> (f64, DVector<f64>) {
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut best = (1.0, geo.advance(y, h));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let z = geo.advance(y, mid * h);
        let phi = b.phi(&split(&z).0);
        if phi.abs() < b.phi(&split(&best.1).0).abs() {
            best = (mid, z.clone());
        }
        if phi.abs() <= 1e-14 || hi - lo < 1e-17 {
            break;
        }
        if phi < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    best
}

/// Positions at `n` equal parameter steps, each re-integrated from the nearest stored state.
fn resample(geo: &Geodesic, params: &[f64], states: &[DVector<f64>], n: usize) -> DiscretePath {
    let total = *params.last().expect("nonempty");
    let mut nodes = Vec::with_capacity(n + 1);
    nodes.push(split(&states[0]).0);
    for i in 1..n {
        let s = total * i as f64 / n as f64;
        let k = params.partition_point(|&p| p <= s).saturating_sub(1);
        let y = if s == params[k] { states[k].clone() } else { geo.advance(&states[k], s - params[k]) };
        nodes.push(split(&y).0);
    }
    nodes.push(split(states.last().expect("nonempty")).0);
    DiscretePath::new(nodes).expect("resampled path has n + 1 nodes")
}

/// Integrator-level check of an orthogonal shot, independent of finite differences on the
/// resampled nodes. Used where the boundary layer of the metric is too thin for node
/// derivatives, as for Jacobi metrics near the energy surface.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShotCheck {
    /// Angle between the exit velocity and the outward normal.
    pub exit_angle: f64,
    /// Largest `|g(x',x') - g_0| / g_0` along the stored states.
    pub speed_drift: f64,
    /// Euclidean distance between the exit points at `step` and `step / 2`.
    pub step_deviation: f64,
    pub interior_inside: bool,
    pub passed: bool,
}

/// Re-integrates the orthogonal shot from `a`, measuring speed conservation, exit normality
/// and step dependence. `tol.angle` bounds the exit angle and `tol.speed` the drift; the
/// step deviation must stay below `tol.residual` times the domain scale `scale`.
pub fn verify_shot(
    m: &MetricField,
    b: &DomainBoundary,
    a: &DVector<f64>,
    cfg: &ShootConfig,
    tol: &CriticalTolerances,
    scale: f64,
) -> Result<ShotCheck> {
    let shot = shoot_orthogonal(m, b, a, cfg)?;
    let (Some(exit), Some(path)) = (shot.exit.as_ref(), shot.path.as_ref()) else {
        return Ok(ShotCheck {
            exit_angle: f64::NAN,
            speed_drift: f64::NAN,
            step_deviation: f64::NAN,
            interior_inside: false,
            passed: false,
        });
    };
    let xe = DVector::from_column_slice(exit);
    let ve = DVector::from_column_slice(shot.exit_velocity.as_deref().unwrap_or_default());
    let nu_e = b.normal_unchecked(m, &xe)?;
    let normal = m.inner(&xe, &nu_e, &ve);
    let exit_angle = m.norm(&xe, &(&ve - &nu_e * normal)).atan2(normal);
    let nu = b.unit_normal(m, a)?;
    let traj = integrate_geodesic(m, a, &(-&nu), cfg.step, shot.length)?;
    let mut speed_drift: f64 = 0.0;
    for y in &traj.states {
        let (x, v) = split(y);
        speed_drift = speed_drift.max((m.inner(&x, &v, &v) - 1.0).abs());
    }
    let fine = shoot_orthogonal(m, b, a, &ShootConfig { step: 0.5 * cfg.step, ..cfg.clone() })?;
    let step_deviation = match fine.exit {
        Some(e) => exit.iter().zip(&e).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt(),
        None => f64::INFINITY,
    };
    let n = path.n();
    let interior_inside = (1..n).all(|i| b.phi(path.node(i)) < 0.0);
    let passed = shot.kind == ShotKind::Orthogonal
        && exit_angle < tol.angle
        && speed_drift < tol.speed
        && step_deviation < tol.residual * scale
        && interior_inside
        && !traj.left_chart;
    Ok(ShotCheck { exit_angle, speed_drift, step_deviation, interior_inside, passed })
}

/// Outcome of Gauss-Newton refinement of the start point of an orthogonal shot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineOutcome {
    pub converged: bool,
    pub iterations: usize,
    /// Norm of the tangential part of the unit exit velocity.
    pub residual: f64,
    pub start: Vec<f64>,
    pub shot: Option<ShotResult>,
    pub message: String,
}

impl RefineOutcome {
    pub fn path(&self) -> Option<&DiscretePath> {
        self.shot.as_ref().and_then(|s| s.path.as_ref())
    }
}

/// Orthonormal basis of the tangent space of the unit sphere at `u`.
fn sphere_tangent_basis(u: &DVector<f64>) -> Vec<DVector<f64>> {
    let d = u.len();
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(d - 1);
    let mut order: Vec<usize> = (0..d).collect();
    // start from the coordinate axes least aligned with u
    order.sort_by(|&i, &j| u[i].abs().total_cmp(&u[j].abs()));
    for &k in &order {
        if basis.len() == d - 1 {
            break;
        }
        let mut e = DVector::zeros(d);
        e[k] = 1.0;
        e -= u * u.dot(&e);
        for q in &basis {
            e -= q * q.dot(&e);
        }
        let n = e.norm();
        if n > 1e-8 {
            basis.push(e / n);
        }
    }
    basis
}

/// Tangential part of the unit exit velocity, or `None` without an exit.
fn exit_residual(m: &MetricField, b: &DomainBoundary, shot: &ShotResult) -> Result<Option<DVector<f64>>> {
    let (Some(xe), Some(ve)) = (&shot.exit, &shot.exit_velocity) else {
        return Ok(None);
    };
    let xe = DVector::from_column_slice(xe);
    let ve = DVector::from_column_slice(ve);
    let nu = b.normal_unchecked(m, &xe)?;
    let unit = &ve / m.norm(&xe, &ve);
    let normal = m.inner(&xe, &unit, &nu);
    Ok(Some(unit - nu * normal))
}

/// Moves the start point over the boundary until the orthogonal shot also arrives orthogonally.
pub fn ogc_refine(m: &MetricField, b: &DomainBoundary, a0: &DVector<f64>, cfg: &ShootConfig) -> Result<RefineOutcome> {
    const TOL: f64 = 1e-10;
    const MAX_ITERS: usize = 50;
    const FD: f64 = 1e-6;
    const MAX_TURN: f64 = 0.2;
    let shot_at = |u: &DVector<f64>| -> Result<(DVector<f64>, ShotResult)> {
        let a = b.boundary_point(u)?;
        let shot = shoot_orthogonal(m, b, &a, cfg)?;
        Ok((a, shot))
    };
    let failed = |iterations, residual, start: &DVector<f64>, shot, message: &str| RefineOutcome {
        converged: false,
        iterations,
        residual,
        start: start.iter().copied().collect(),
        shot,
        message: message.to_string(),
    };

    let mut u = a0 / a0.norm();
    let (mut a, mut shot) = shot_at(&u)?;
    let Some(mut r) = exit_residual(m, b, &shot)? else {
        return Ok(failed(0, f64::INFINITY, &a, Some(shot), "initial shot does not return"));
    };
    for iter in 0..=MAX_ITERS {
        let rn = r.norm();
        if rn < TOL {
            return Ok(RefineOutcome {
                converged: true,
                iterations: iter,
                residual: rn,
                start: a.iter().copied().collect(),
                shot: Some(shot),
                message: String::new(),
            });
        }
        if iter == MAX_ITERS {
            break;
        }
        let basis = sphere_tangent_basis(&u);
        let mut jac = DMatrix::zeros(r.len(), basis.len());
        for (j, t) in basis.iter().enumerate() {
            let up = (&u + t * FD).normalize();
            let um = (&u - t * FD).normalize();
            let (Some(rp), Some(rm)) = (exit_residual(m, b, &shot_at(&up)?.1)?, exit_residual(m, b, &shot_at(&um)?.1)?)
            else {
                return Ok(failed(iter, rn, &a, Some(shot), "neighbouring shot does not return"));
            };
            jac.set_column(j, &((rp - rm) / (2.0 * FD)));
        }
        let svd = jac.clone().svd(true, true);
        let smax = svd.singular_values.max();
        if !(smax > 0.0) || svd.singular_values.min() < 1e-12 * smax {
            return Ok(failed(iter, rn, &a, Some(shot), "singular Jacobian"));
        }
        let delta = svd.solve(&(-&r), 1e-14 * smax).map_err(|e| Error::Numeric(e.to_string()))?;
        // trust region on the boundary angle keeps the iteration in the basin of the nearest root
        let mut scale = (MAX_TURN / delta.norm()).min(1.0);
        let mut accepted = false;
        for _ in 0..12 {
            let mut dir = u.clone();
            for (j, t) in basis.iter().enumerate() {
                dir += t * (scale * delta[j]);
            }
            let cand_u = dir.normalize();
            let (cand_a, cand_shot) = shot_at(&cand_u)?;
            if let Some(cand_r) = exit_residual(m, b, &cand_shot)? {
                if cand_r.norm() < rn {
                    u = cand_u;
                    a = cand_a;
                    shot = cand_shot;
                    r = cand_r;
                    accepted = true;
                    break;
                }
            }
            scale *= 0.5;
        }
        if !accepted {
            return Ok(failed(iter, rn, &a, Some(shot), "no decrease along the Gauss-Newton step"));
        }
    }
    let rn = r.norm();
    Ok(failed(MAX_ITERS, rn, &a, Some(shot), "no convergence in 50 iterations"))
}

/// One row of an orthogonal-shot scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub index: usize,
    pub start_angles: Vec<f64>,
    pub exit_angles: Vec<f64>,
    pub exit_cos: f64,
    pub length: f64,
    pub kind: ShotKind,
    pub grazes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub rows: Vec<ScanRow>,
    /// Indices of rows classified as tangent exits.
    pub tangent: Vec<usize>,
    /// Smallest `|exit_cos|` over returning shots.
    pub min_abs_exit_cos: f64,
    pub no_return: usize,
    pub graze_events: usize,
}

impl ScanReport {
    pub fn findings(&self) -> impl Iterator<Item = &ScanRow> {
        self.tangent.iter().map(|&i| &self.rows[i])
    }

    /// CSV of the given rows: start angles, exit angles, `exit_cos`, length, kind, grazes.
    pub fn to_csv<'a>(dim: usize, rows: impl IntoIterator<Item = &'a ScanRow>) -> String {
        let k = if dim == 2 {
            1
        } else if dim == 3 {
            2
        } else {
            dim
        };
        let mut out = String::from("index");
        for j in 0..k {
            let _ = write!(out, ",start_angle_{j}");
        }
        for j in 0..k {
            let _ = write!(out, ",exit_angle_{j}");
        }
        out.push_str(",exit_cos,length,kind,grazes\n");
        for r in rows {
            let _ = write!(out, "{}", r.index);
            for a in r.start_angles.iter().chain(&r.exit_angles) {
                let _ = write!(out, ",{a:.16e}");
            }
            for _ in r.exit_angles.len()..k {
                out.push(',');
            }
            let _ = writeln!(out, ",{:.16e},{:.16e},{},{}", r.exit_cos, r.length, r.kind.as_str(), r.grazes);
        }
        out
    }
}

/// Shoots orthogonally from every point of a boundary grid and collects tangent exits.
pub fn scan_ot_chords(m: &MetricField, b: &DomainBoundary, grid: usize, cfg: &ShootConfig) -> Result<ScanReport> {
    if grid < 16 {
        return Err(Error::Usage(format!("scan grid {grid} below 16 points per boundary coordinate")));
    }
    let dirs = sampling::direction_grid(grid, b.dim());
    let cfg = ShootConfig { nodes: 2, ..cfg.clone() };
    let run = |(index, u): (usize, &DVector<f64>)| -> Result<ScanRow> {
        let a = b.boundary_point(u)?;
        let shot = shoot_orthogonal(m, b, &a, &cfg)?;
        let exit_angles = shot
            .exit
            .as_ref()
            .map(|e| {
                let e = DVector::from_column_slice(e);
                sampling::direction_angles(&(&e / e.norm()))
            })
            .unwrap_or_default();
        Ok(ScanRow {
            index,
            start_angles: sampling::direction_angles(&(&a / a.norm())),
            exit_angles,
            exit_cos: shot.exit_cos,
            length: shot.length,
            kind: shot.kind,
            grazes: shot.grazes.len(),
        })
    };
    #[cfg(feature = "parallel")]
    let rows: Result<Vec<ScanRow>> = {
        use rayon::prelude::*;
        dirs.par_iter().enumerate().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Result<Vec<ScanRow>> = dirs.iter().enumerate().map(run).collect();
    let rows = rows?;
    let tangent = rows.iter().filter(|r| r.kind == ShotKind::Tangent).map(|r| r.index).collect();
    let min_abs_exit_cos =
        rows.iter().filter(|r| r.kind != ShotKind::NoReturn).map(|r| r.exit_cos.abs()).fold(f64::INFINITY, f64::min);
    let no_return = rows.iter().filter(|r| r.kind == ShotKind::NoReturn).count();
    let graze_events = rows.iter().map(|r| r.grazes).sum();
    Ok(ScanReport { rows, tangent, min_abs_exit_cos, no_return, graze_events })
}
