use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::levelset::LevelSet;
use super::metric::MetricField;
use super::sampling;
use crate::error::{Error, Result};

/// Below this `|grad phi|_g` the boundary normal is treated as undefined.
pub const DEGENERATE_GRAD: f64 = 1e-10;

/// Tolerance reached by [`DomainBoundary::retract_to_boundary`].
pub const RETRACT_TOL: f64 = 1e-12;

pub const DEFAULT_DELTA0: f64 = 0.2;

/// Homeomorphism of the closed domain onto the unit ball used to build chords.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChordMap {
    /// Identity; chords are straight segments (convex domains).
    Linear,
    /// `x -> x / rho(x/|x|)` where `rho` is the radial extent of the domain.
    Radial,
}

/// The closed domain `{phi <= 0}` with its constants `delta0` and `K0`.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainBoundary {
    level_set: LevelSet,
    dim: usize,
    delta0: f64,
    k0: f64,
    chord_map: ChordMap,
}

/// Sampled estimate of `K0 = max |grad phi|_g` over the closed domain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct K0Estimate {
    pub raw: f64,
    /// `raw` inflated by 5%.
    pub k0: f64,
    pub samples: usize,
}

impl DomainBoundary {
    /// Boundary with explicitly supplied constants.
    pub fn new(level_set: LevelSet, dim: usize, delta0: f64, k0: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("dimension must be positive".into()));
        }
        if !(delta0 > 0.0 && delta0.is_finite()) {
            return Err(Error::Config(format!("delta0 must be positive, got {delta0}")));
        }
        if !(k0 > 0.0 && k0.is_finite()) {
            return Err(Error::Config(format!("K0 must be positive, got {k0}")));
        }
        let chord_map = match &level_set {
            LevelSet::Sphere { .. } | LevelSet::Ellipsoid { .. } => ChordMap::Linear,
            _ => ChordMap::Radial,
        };
        Ok(Self { level_set, dim, delta0, k0, chord_map })
    }

    /// Estimates `K0` from `samples` points and validates `delta0` on the boundary band.
    pub fn calibrated(level_set: LevelSet, metric: &MetricField, delta0: f64, samples: usize) -> Result<Self> {
        let dim = metric.dim();
        let mut b = Self::new(level_set, dim, delta0, 1.0)?;
        let est = estimate_k0(&b, metric, samples)?;
        b.k0 = est.k0;
        b.validate_band(metric, 64)?;
        Ok(b)
    }

    pub fn level_set(&self) -> &LevelSet {
        &self.level_set
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn delta0(&self) -> f64 {
        self.delta0
    }

    pub fn k0(&self) -> f64 {
        self.k0
    }

    pub fn chord_map(&self) -> ChordMap {
        self.chord_map
    }

    pub fn with_chord_map(mut self, map: ChordMap) -> Self {
        self.chord_map = map;
        self
    }

    pub fn phi(&self, x: &DVector<f64>) -> f64 {
        self.level_set.value(x)
    }

    /// Riemannian gradient `g^{-1} d phi`.
    pub fn grad_phi(&self, m: &MetricField, x: &DVector<f64>) -> DVector<f64> {
        let dphi = self.level_set.gradient(x);
        if m.is_euclidean() {
            dphi
        } else {
            m.inverse(x) * dphi
        }
    }

    /// `|grad phi|_g = sqrt(d phi^T g^{-1} d phi)`
    pub fn grad_norm(&self, m: &MetricField, x: &DVector<f64>) -> f64 {
        let dphi = self.level_set.gradient(x);
        let grad = self.grad_phi(m, x);
        dphi.dot(&grad).max(0.0).sqrt()
    }

    /// Outward unit normal `grad phi / |grad phi|_g` on the band `|phi| <= delta0`.
    pub fn unit_normal(&self, m: &MetricField, p: &DVector<f64>) -> Result<DVector<f64>> {
        let phi = self.phi(p);
        if phi.abs() > self.delta0 * (1.0 + 1e-12) {
            return Err(Error::Precondition(format!("|phi| = {:e} exceeds delta0 = {}", phi.abs(), self.delta0)));
        }
        self.normal_unchecked(m, p)
    }

    /// Unit normal of the level set through `p`, wherever the gradient is nonzero.
    pub fn normal_unchecked(&self, m: &MetricField, p: &DVector<f64>) -> Result<DVector<f64>> {
        let grad = self.grad_phi(m, p);
        let norm = m.norm(p, &grad);
        if !(norm > DEGENERATE_GRAD) {
            return Err(Error::DegenerateBoundary { point: p.iter().copied().collect(), grad_norm: norm });
        }
        Ok(grad / norm)
    }

    /// Riemannian Hessian `d^2 phi - Gamma^k d_k phi`, as a bilinear form.
    pub fn hessian_phi(&self, m: &MetricField, p: &DVector<f64>) -> DMatrix<f64> {
        let mut h = self.level_set.hessian(p);
        if !(m.is_euclidean() || matches!(m.family(), super::metric::MetricFamily::Constant { .. })) {
            let gamma = m.christoffel_unchecked(p);
            let dphi = self.level_set.gradient(p);
            let d = self.dim;
            for i in 0..d {
                for j in 0..d {
                    let mut acc = 0.0;
                    for k in 0..d {
                        acc += gamma.get(k, i, j) * dphi[k];
                    }
                    h[(i, j)] -= acc;
                }
            }
        }
        (&h + h.transpose()) * 0.5
    }

    /// Follows `dx/dt = -phi(p) grad phi / |grad phi|_g^2` for `t in [0,1]`, along which
    /// `phi` decreases linearly to zero, then polishes with Newton steps along the same field.
    pub fn retract_to_boundary(&self, m: &MetricField, p: &DVector<f64>) -> Result<DVector<f64>> {
        let phi0 = self.phi(p);
        if phi0.abs() <= 1e-15 {
            return Ok(p.clone());
        }
        let field = |x: &DVector<f64>| -> Result<DVector<f64>> {
            let grad = self.grad_phi(m, x);
            let n2 = self.level_set.gradient(x).dot(&grad);
            if !(n2 > DEGENERATE_GRAD * DEGENERATE_GRAD) {
                return Err(Error::DegenerateBoundary {
                    point: x.iter().copied().collect(),
                    grad_norm: n2.max(0.0).sqrt(),
                });
            }
            Ok(grad * (-phi0 / n2))
        };
        let steps = 16;
        let h = 1.0 / steps as f64;
        let mut x = p.clone();
        for _ in 0..steps {
            let k1 = field(&x)?;
            let k2 = field(&(&x + &k1 * (0.5 * h)))?;
            let k3 = field(&(&x + &k2 * (0.5 * h)))?;
            let k4 = field(&(&x + &k3 * h))?;
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        for _ in 0..50 {
            let phi = self.phi(&x);
            if phi.abs() <= RETRACT_TOL {
                return Ok(x);
            }
            let grad = self.grad_phi(m, &x);
            let n2 = self.level_set.gradient(&x).dot(&grad);
            if !(n2 > DEGENERATE_GRAD * DEGENERATE_GRAD) {
                return Err(Error::DegenerateBoundary {
                    point: x.iter().copied().collect(),
                    grad_norm: n2.max(0.0).sqrt(),
                });
            }
            x -= grad * (phi / n2);
        }
        Err(Error::Numeric(format!("retraction did not converge from {:?}", p.as_slice())))
    }

    /// Boundary point on the ray from the origin through `direction`.
    pub fn boundary_point(&self, direction: &DVector<f64>) -> Result<DVector<f64>> {
        let n = direction.norm();
        if !(n > 0.0) {
            return Err(Error::Usage("zero direction".into()));
        }
        let t = self
            .level_set
            .ray_root(direction)
            .ok_or_else(|| Error::Config("domain is not star-shaped about the origin".into()))?;
        Ok(direction * (t / n))
    }

    /// Radial extent `rho(u)` of the domain along the unit direction `u`.
    pub fn radial_extent(&self, u: &DVector<f64>) -> Result<f64> {
        self.level_set.ray_root(u).ok_or_else(|| Error::Config("domain is not star-shaped about the origin".into()))
    }

    /// Forward chord map `Psi` into the unit ball.
    pub fn to_unit_ball(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        match self.chord_map {
            ChordMap::Linear => Ok(x.clone()),
            ChordMap::Radial => {
                let r = x.norm();
                if r == 0.0 {
                    return Ok(x.clone());
                }
                Ok(x / self.radial_extent(&(x / r))?)
            }
        }
    }

    /// Inverse chord map `Psi^{-1}`.
    pub fn from_unit_ball(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        match self.chord_map {
            ChordMap::Linear => Ok(y.clone()),
            ChordMap::Radial => {
                let r = y.norm();
                if r == 0.0 {
                    return Ok(y.clone());
                }
                Ok(y * self.radial_extent(&(y / r))?)
            }
        }
    }

    /// Boundary points on a regular grid of directions.
    pub fn boundary_grid(&self, grid: usize) -> Result<Vec<DVector<f64>>> {
        sampling::direction_grid(grid, self.dim).iter().map(|u| self.boundary_point(u)).collect()
    }

    /// Point on the ray through `u` where `phi` equals `level`, found by bisection.
    pub fn ray_level_point(&self, u: &DVector<f64>, level: f64) -> Option<DVector<f64>> {
        let u = u / u.norm();
        let f = |t: f64| self.phi(&(&u * t)) - level;
        if f(0.0) >= 0.0 {
            return None;
        }
        let mut hi = self.radial_extent(&u).ok()?.max(1e-3);
        let mut grow = 0;
        while f(hi) < 0.0 {
            hi *= 1.5;
            grow += 1;
            if grow > 80 {
                return None;
            }
        }
        let mut lo = 0.0;
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(u * (0.5 * (lo + hi)))
    }

    /// Checks metric positivity and a nonvanishing normal on `|phi| <= delta0`.
    pub fn validate_band(&self, m: &MetricField, directions: usize) -> Result<()> {
        let levels = [-1.0, -0.5, 0.0, 0.5, 1.0];
        for u in sampling::sphere_samples(directions, self.dim) {
            for s in levels {
                let Some(p) = self.ray_level_point(&u, s * self.delta0) else {
                    return Err(Error::Config(format!(
                        "band level {} not reached along {:?}",
                        s * self.delta0,
                        u.as_slice()
                    )));
                };
                m.metric_at(&p)?;
                let gn = self.grad_norm(m, &p);
                if !(gn > DEGENERATE_GRAD) {
                    return Err(Error::DegenerateBoundary { point: p.iter().copied().collect(), grad_norm: gn });
                }
            }
        }
        Ok(())
    }

    /// Quasi-uniform samples of the closed domain (first sample is the origin), nested in `count`.
    pub fn interior_samples(&self, count: usize) -> Result<Vec<DVector<f64>>> {
        sampling::ball_samples(count, self.dim)
            .into_iter()
            .map(|y| match self.chord_map {
                ChordMap::Linear => match &self.level_set {
                    LevelSet::Sphere { .. } | LevelSet::Ellipsoid { .. } => self.radial_scale(&y),
                    _ => Ok(y),
                },
                ChordMap::Radial => self.from_unit_ball(&y),
            })
            .collect()
    }

    fn radial_scale(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        let r = y.norm();
        if r == 0.0 {
            return Ok(y.clone());
        }
        Ok(y * self.radial_extent(&(y / r))?)
    }
}

/// `max |grad phi|_g` over `samples` interior points plus as many boundary points, inflated by 5%.
///
/// Sample sets are nested, so the raw value is nondecreasing in `samples`.
pub fn estimate_k0(b: &DomainBoundary, m: &MetricField, samples: usize) -> Result<K0Estimate> {
    let samples = samples.max(1);
    let mut raw: f64 = 0.0;
    for p in b.interior_samples(samples)? {
        raw = raw.max(b.grad_norm(m, &p));
    }
    for u in sampling::sphere_samples(samples, b.dim()) {
        let p = b.boundary_point(&u)?;
        raw = raw.max(b.grad_norm(m, &p));
    }
    Ok(K0Estimate { raw, k0: 1.05 * raw, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::metric::{DerivativeMode, Profile, DEFAULT_FD_STEP};
    use crate::geometry::potential::Potential;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn ball(dim: usize) -> DomainBoundary {
        DomainBoundary::new(LevelSet::unit_ball(), dim, DEFAULT_DELTA0, 1.05).unwrap()
    }

    fn quartic() -> MetricField {
        MetricField::radial_conformal(2, Profile::Polynomial { coeffs: vec![1.0, 0.0, 1.0] })
    }

    #[test]
    fn radial_normal_in_flat_ball() {
        let n = ball(2).unit_normal(&MetricField::euclidean(2), &v(&[1.0, 0.0])).unwrap();
        assert!((n - v(&[1.0, 0.0])).norm() < 1e-15);
    }

    #[test]
    fn conformal_normal_is_rescaled() {
        let m = MetricField::radial_conformal(2, Profile::Polynomial { coeffs: vec![2.0] });
        let p = v(&[0.0, 1.0]);
        let n = ball(2).unit_normal(&m, &p).unwrap();
        // grad = f^-2 e2 = e2/4, |.|_g = 1/2
        assert!((n.clone() - v(&[0.0, 0.5])).norm() < 1e-15);
        assert!((m.norm(&p, &n) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn degenerate_normal_is_an_error() {
        let level_set = LevelSet::Sublevel { potential: Potential::Harmonic, level: 0.01 };
        let b = DomainBoundary::new(level_set, 2, 0.2, 1.0).unwrap();
        let err = b.unit_normal(&MetricField::euclidean(2), &v(&[0.0, 0.0]));
        assert!(matches!(err, Err(Error::DegenerateBoundary { .. })));
    }

    #[test]
    fn retraction_examples() {
        let b = ball(2);
        let e = MetricField::euclidean(2);
        let r = b.retract_to_boundary(&e, &v(&[0.5, 0.0])).unwrap();
        assert!((r - v(&[1.0, 0.0])).norm() < 1e-10);
        let p = v(&[0.6, 0.8]);
        assert!((b.retract_to_boundary(&e, &p).unwrap() - &p).norm() < 1e-10);
    }

    #[test]
    fn retraction_in_conformal_metric_is_radial() {
        // independent oracle: forward Euler with tiny steps on the normalized gradient flow
        let m = quartic();
        let b = ball(2);
        let p = v(&[0.0, 0.95]);
        let r = b.retract_to_boundary(&m, &p).unwrap();
        let mut x = p.clone();
        let phi0 = b.phi(&p);
        let steps = 100_000;
        for _ in 0..steps {
            let grad = b.grad_phi(&m, &x);
            let n2 = b.level_set().gradient(&x).dot(&grad);
            x -= grad * (phi0 / n2 / steps as f64);
        }
        assert!((r.clone() - v(&[0.0, 1.0])).norm() < 1e-10);
        assert!((r - x).norm() < 1e-6);
    }

    #[test]
    fn k0_examples() {
        let e = MetricField::euclidean(2);
        let est = estimate_k0(&ball(2), &e, 200).unwrap();
        assert!((est.raw - 1.0).abs() < 1e-12);
        assert!((est.k0 - 1.05).abs() < 1e-12);

        // |grad phi|_g = 1/f(r) peaks at r = 0; compare with a dense radial sweep
        let m = quartic();
        let est = estimate_k0(&ball(2), &m, 500).unwrap();
        let b = ball(2);
        let dense = (0..=2000).map(|i| b.grad_norm(&m, &v(&[i as f64 / 2000.0 + 1e-9, 0.0]))).fold(0.0, f64::max);
        assert!((est.raw - dense).abs() < 1e-6);
        assert!((est.raw - 1.0).abs() < 1e-6);
    }

    #[test]
    fn k0_is_monotone_under_doubling() {
        let m = MetricField::perturbed_radial(2, Profile::Polynomial { coeffs: vec![1.0, 0.0, 1.0] }, 0.05).unwrap();
        let b = DomainBoundary::new(LevelSet::Ellipsoid { semi_axes: vec![2.0, 1.0] }, 2, 0.2, 1.0).unwrap();
        let mut last = 0.0;
        for s in [8, 16, 32, 64, 128, 256] {
            let raw = estimate_k0(&b, &m, s).unwrap().raw;
            assert!(raw >= last);
            last = raw;
        }
    }

    #[test]
    fn hessian_examples() {
        let b = ball(2);
        let e = MetricField::euclidean(2);
        let h = b.hessian_phi(&e, &v(&[1.0, 0.0]));
        let t = v(&[0.0, 1.0]);
        assert!((t.dot(&(&h * &t)) - 1.0).abs() < 1e-14);
        let plane = DomainBoundary::new(LevelSet::Plane { normal: vec![1.0, 2.0], offset: 0.3 }, 2, 0.2, 1.0).unwrap();
        assert_eq!(plane.hessian_phi(&e, &v(&[0.2, 0.1])), DMatrix::zeros(2, 2));
    }

    #[test]
    fn sublevel_boundary_points() {
        let b = DomainBoundary::new(
            LevelSet::Sublevel { potential: Potential::Cubic { epsilon: 0.01 }, level: 0.495 },
            2,
            0.002,
            1.0,
        )
        .unwrap();
        for u in sampling::sphere_samples(20, 2) {
            let p = b.boundary_point(&u).unwrap();
            assert!(b.phi(&p).abs() < 1e-13);
            let y = b.to_unit_ball(&p).unwrap();
            assert!((y.norm() - 1.0).abs() < 1e-12);
            assert!((b.from_unit_ball(&y).unwrap() - p).norm() < 1e-12);
        }
    }

    #[test]
    fn calibrated_rejects_non_spd_band() {
        let m = MetricField::perturbed_radial(2, Profile::Polynomial { coeffs: vec![1.0] }, -1.5).unwrap();
        assert!(DomainBoundary::calibrated(LevelSet::unit_ball(), &m, 0.2, 16).is_err());
    }

    fn metrics() -> Vec<MetricField> {
        vec![
            MetricField::euclidean(2),
            quartic(),
            MetricField::perturbed_radial(2, Profile::Polynomial { coeffs: vec![1.0, 0.0, 1.0] }, 0.05).unwrap(),
            MetricField::radial_conformal(2, Profile::ExpQuadratic { c: 0.5 })
                .with_derivatives(DerivativeMode::FiniteDifference { step: DEFAULT_FD_STEP }),
        ]
    }

    proptest! {
        #[test]
        fn normal_is_unit_and_orthogonal_to_level_set(angle in 0.0f64..std::f64::consts::TAU, s in -1.0f64..1.0) {
            let b = ball(2);
            let p = v(&[angle.cos(), angle.sin()]) * (1.0 + 0.2 * s);
            let tangent = v(&[-angle.sin(), angle.cos()]);
            for m in metrics() {
                let n = b.unit_normal(&m, &p).unwrap();
                prop_assert!((m.norm(&p, &n) - 1.0).abs() < 1e-10);
                prop_assert!(m.inner(&p, &n, &tangent).abs() < 1e-12);
            }
        }

        #[test]
        fn directional_derivative_matches_gradient(
            angle in 0.0f64..std::f64::consts::TAU, s in 0.0f64..1.0, w0 in -1.0f64..1.0, w1 in -1.0f64..1.0
        ) {
            let b = ball(2);
            let p = v(&[angle.cos(), angle.sin()]) * (0.8 + 0.2 * s);
            let w = v(&[w0, w1]);
            let h = 1e-6;
            let fd = (b.phi(&(&p + &w * h)) - b.phi(&(&p - &w * h))) / (2.0 * h);
            for m in metrics() {
                let g = b.grad_phi(&m, &p);
                prop_assert!((m.inner(&p, &g, &w) - fd).abs() < 1e-6);
            }
        }

        #[test]
        fn hessian_is_symmetric_in_the_band(angle in 0.0f64..std::f64::consts::TAU, s in -1.0f64..1.0) {
            let b = ball(2);
            let p = v(&[angle.cos(), angle.sin()]) * (1.0 + 0.2 * s);
            for m in metrics() {
                let h = b.hessian_phi(&m, &p);
                prop_assert!((&h - h.transpose()).amax() < 1e-8);
            }
        }

        #[test]
        fn flat_ball_is_convex(angle in 0.0f64..std::f64::consts::TAU, a in -1.0f64..1.0) {
            let b = ball(2);
            let p = v(&[angle.cos(), angle.sin()]);
            let u = v(&[-angle.sin(), angle.cos()]) * a;
            let h = b.hessian_phi(&MetricField::euclidean(2), &p);
            prop_assert!(u.dot(&(h * &u)) >= 0.0);
        }
    }
}
