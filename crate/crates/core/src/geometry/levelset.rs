use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::potential::Potential;

/// Scalar function whose zero set is a hypersurface; negative on the inner side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LevelSet {
    /// `|x - c| - r`
    Sphere { center: Vec<f64>, radius: f64 },
    /// `sum (x_i / a_i)^2 - 1`
    Ellipsoid { semi_axes: Vec<f64> },
    /// `<n, x> - offset`
    Plane { normal: Vec<f64>, offset: f64 },
    /// `|P (x - c)| - r` where `P` projects out the (unit) axis direction.
    Cylinder { center: Vec<f64>, axis: Vec<f64>, radius: f64 },
    /// `(x-c)^T Q (x-c) + <l, x-c> + value`
    Quadric { center: Vec<f64>, value: f64, linear: Vec<f64>, quadratic: Vec<Vec<f64>> },
    /// `V(x) - level`
    Sublevel { potential: Potential, level: f64 },
}

fn vec_of(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

impl LevelSet {
    pub fn unit_ball() -> Self {
        LevelSet::Sphere { center: vec![], radius: 1.0 }
    }

    fn offset(&self, center: &[f64], x: &DVector<f64>) -> DVector<f64> {
        if center.is_empty() {
            x.clone()
        } else {
            x - vec_of(center)
        }
    }

    fn unit_axis(axis: &[f64]) -> DVector<f64> {
        let a = vec_of(axis);
        let n = a.norm();
        a / n
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        match self {
            LevelSet::Sphere { center, radius } => self.offset(center, x).norm() - radius,
            LevelSet::Ellipsoid { semi_axes } => {
                x.iter().zip(semi_axes).map(|(xi, a)| (xi / a).powi(2)).sum::<f64>() - 1.0
            }
            LevelSet::Plane { normal, offset } => vec_of(normal).dot(x) - offset,
            LevelSet::Cylinder { center, axis, radius } => {
                let y = self.offset(center, x);
                let a = Self::unit_axis(axis);
                let perp = &y - &a * a.dot(&y);
                perp.norm() - radius
            }
            LevelSet::Quadric { center, value, linear, quadratic } => {
                let y = self.offset(center, x);
                let q = DMatrix::from_fn(y.len(), y.len(), |i, j| quadratic[i][j]);
                y.dot(&(q * &y)) + vec_of(linear).dot(&y) + value
            }
            LevelSet::Sublevel { potential, level } => potential.value(x) - level,
        }
    }

    /// Euclidean gradient.
    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            LevelSet::Sphere { center, .. } => {
                let y = self.offset(center, x);
                let r = y.norm();
                if r == 0.0 {
                    // |grad| extends continuously to the center; pick a direction.
                    let mut e = DVector::zeros(x.len());
                    e[0] = 1.0;
                    e
                } else {
                    y / r
                }
            }
            LevelSet::Ellipsoid { semi_axes } => {
                DVector::from_fn(x.len(), |i, _| 2.0 * x[i] / (semi_axes[i] * semi_axes[i]))
            }
            LevelSet::Plane { normal, .. } => vec_of(normal),
            LevelSet::Cylinder { center, axis, .. } => {
                let y = self.offset(center, x);
                let a = Self::unit_axis(axis);
                let perp = &y - &a * a.dot(&y);
                let r = perp.norm();
                if r == 0.0 {
                    DVector::zeros(x.len())
                } else {
                    perp / r
                }
            }
            LevelSet::Quadric { center, linear, quadratic, .. } => {
                let y = self.offset(center, x);
                let q = DMatrix::from_fn(y.len(), y.len(), |i, j| quadratic[i][j]);
                (&q + q.transpose()) * y + vec_of(linear)
            }
            LevelSet::Sublevel { potential, .. } => potential.gradient(x),
        }
    }

    /// Euclidean Hessian.
    pub fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let d = x.len();
        match self {
            LevelSet::Sphere { center, .. } => {
                let y = self.offset(center, x);
                let r = y.norm();
                if r == 0.0 {
                    return DMatrix::zeros(d, d);
                }
                let u = y / r;
                (DMatrix::identity(d, d) - &u * u.transpose()) / r
            }
            LevelSet::Ellipsoid { semi_axes } => {
                DMatrix::from_fn(d, d, |i, j| if i == j { 2.0 / (semi_axes[i] * semi_axes[i]) } else { 0.0 })
            }
            LevelSet::Plane { .. } => DMatrix::zeros(d, d),
            LevelSet::Cylinder { center, axis, .. } => {
                let y = self.offset(center, x);
                let a = Self::unit_axis(axis);
                let proj = DMatrix::identity(d, d) - &a * a.transpose();
                let perp = &proj * y;
                let r = perp.norm();
                if r == 0.0 {
                    return DMatrix::zeros(d, d);
                }
                let u = perp / r;
                (proj - &u * u.transpose()) / r
            }
            LevelSet::Quadric { quadratic, .. } => {
                let q = DMatrix::from_fn(d, d, |i, j| quadratic[i][j]);
                &q + q.transpose()
            }
            LevelSet::Sublevel { potential, .. } => potential.hessian(x),
        }
    }

    /// Extent of the inner region along the ray `t * direction`, if it is star-shaped about the origin.
    /// Returns `t > 0` with `value(t * direction) = 0`.
    pub fn ray_root(&self, direction: &DVector<f64>) -> Option<f64> {
        let u = direction / direction.norm();
        match self {
            LevelSet::Sphere { center, radius } if center.iter().all(|c| *c == 0.0) => Some(*radius),
            LevelSet::Ellipsoid { semi_axes } => {
                let s: f64 = u.iter().zip(semi_axes).map(|(ui, a)| (ui / a).powi(2)).sum();
                Some(1.0 / s.sqrt())
            }
            _ => {
                let f = |t: f64| self.value(&(&u * t));
                if f(0.0) >= 0.0 {
                    return None;
                }
                let mut hi = 1.0;
                let mut grow = 0;
                while f(hi) < 0.0 {
                    hi *= 2.0;
                    grow += 1;
                    if grow > 60 {
                        return None;
                    }
                }
                let mut lo = 0.0;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if f(mid) < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo < 1e-15 * hi {
                        break;
                    }
                }
                // polish with Newton; the bracket guarantees a nearby root
                let mut t = 0.5 * (lo + hi);
                for _ in 0..3 {
                    let p = &u * t;
                    let slope = self.gradient(&p).dot(&u);
                    if slope.abs() < 1e-300 {
                        break;
                    }
                    let next = t - self.value(&p) / slope;
                    if next.is_finite() && (next - t).abs() < 1e-6 * t {
                        t = next;
                    }
                }
                Some(t)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn fd_gradient(ls: &LevelSet, x: &DVector<f64>) -> DVector<f64> {
        let h = 1e-6;
        DVector::from_fn(x.len(), |i, _| {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            (ls.value(&xp) - ls.value(&xm)) / (2.0 * h)
        })
    }

    fn fd_hessian(ls: &LevelSet, x: &DVector<f64>) -> DMatrix<f64> {
        let h = 1e-5;
        let d = x.len();
        let mut out = DMatrix::zeros(d, d);
        for j in 0..d {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let col = (ls.gradient(&xp) - ls.gradient(&xm)) / (2.0 * h);
            out.set_column(j, &col);
        }
        out
    }

    fn shapes() -> Vec<LevelSet> {
        vec![
            LevelSet::unit_ball(),
            LevelSet::Sphere { center: vec![0.1, -0.2, 0.3], radius: 0.9 },
            LevelSet::Ellipsoid { semi_axes: vec![2.0, 1.0, 0.5] },
            LevelSet::Plane { normal: vec![0.0, 1.0, 0.0], offset: 0.2 },
            LevelSet::Cylinder { center: vec![1.4, 0.0, 0.0], axis: vec![0.0, 1.0, 0.0], radius: 1.0 },
            LevelSet::Quadric {
                center: vec![0.0; 3],
                value: -1.0,
                linear: vec![0.1, 0.0, -0.2],
                quadratic: vec![vec![1.0, 0.2, 0.0], vec![0.2, 2.0, 0.1], vec![0.0, 0.1, 0.5]],
            },
            LevelSet::Sublevel { potential: Potential::Cubic { epsilon: 0.1 }, level: 0.4 },
        ]
    }

    proptest! {
        #[test]
        fn derivatives_match_finite_differences(x0 in -0.8f64..0.8, x1 in -0.8f64..0.8, x2 in 0.2f64..0.8) {
            let x = v(&[x0, x1, x2]);
            for ls in shapes() {
                prop_assert!((ls.gradient(&x) - fd_gradient(&ls, &x)).amax() < 1e-6);
                let h = ls.hessian(&x);
                prop_assert!((&h - fd_hessian(&ls, &x)).amax() < 1e-5);
                prop_assert!((&h - h.transpose()).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn ray_roots_land_on_the_zero_set() {
        let dirs = [v(&[1.0, 0.0]), v(&[0.3, -0.7]), v(&[-1.0, 1.0])];
        let sets = [
            LevelSet::unit_ball(),
            LevelSet::Ellipsoid { semi_axes: vec![2.0, 1.0] },
            LevelSet::Sublevel { potential: Potential::Cubic { epsilon: 0.01 }, level: 0.49 },
        ];
        for ls in &sets {
            for d in &dirs {
                let t = ls.ray_root(d).unwrap();
                let p = d / d.norm() * t;
                assert!(ls.value(&p).abs() < 1e-13, "{ls:?} {d}");
            }
        }
    }
}
