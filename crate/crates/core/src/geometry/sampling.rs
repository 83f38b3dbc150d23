//! Deterministic quasi-uniform samples of spheres and star-shaped domains.

use std::f64::consts::PI;

use nalgebra::DVector;

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while index > 0 {
        out += (index % b) as f64 * f;
        index /= b;
        f *= inv;
    }
    out
}

/// Point `index` of the Halton sequence in `[0,1)^dims`, skipping the origin.
pub fn halton(index: u64, dims: usize) -> Vec<f64> {
    assert!(dims <= PRIMES.len(), "halton sequence limited to {} dims", PRIMES.len());
    (0..dims).map(|k| radical_inverse(index + 1, PRIMES[k])).collect()
}

/// Inverse standard normal CDF (Acklam's rational approximation, ~1e-9 relative).
#[allow(clippy::excessive_precision)]
fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] =
        [-5.447609879822406e1, 1.615858368580409e2, -1.556989798598866e2, 6.680131188771972e1, -1.328068155288572e1];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [7.784695709041462e-3, 3.224671290700398e-1, 2.445134137142996, 3.754408661907416];
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    let lo = 0.02425;
    if p < lo {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - lo {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -normal_quantile(1.0 - p)
    }
}

/// Number of unit-cube coordinates consumed by [`sphere_point`].
pub fn sphere_coords(dim: usize) -> usize {
    if dim <= 3 {
        dim.saturating_sub(1).max(1)
    } else {
        dim
    }
}

/// Maps a point of `[0,1)^sphere_coords(dim)` to the unit sphere `S^(dim-1)`.
pub fn sphere_point(u: &[f64], dim: usize) -> DVector<f64> {
    match dim {
        1 => DVector::from_element(1, if u.first().copied().unwrap_or(0.0) < 0.5 { -1.0 } else { 1.0 }),
        2 => {
            let t = 2.0 * PI * u[0];
            DVector::from_vec(vec![t.cos(), t.sin()])
        }
        3 => {
            let z = 1.0 - 2.0 * u[0];
            let r = (1.0 - z * z).max(0.0).sqrt();
            let t = 2.0 * PI * u[1];
            DVector::from_vec(vec![r * t.cos(), r * t.sin(), z])
        }
        _ => {
            let g = DVector::from_fn(dim, |i, _| normal_quantile(u[i]));
            let n = g.norm();
            g / n
        }
    }
}

/// Quasi-uniform samples of the unit ball, nested in `count`; the first sample is the center.
pub fn ball_samples(count: usize, dim: usize) -> Vec<DVector<f64>> {
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return out;
    }
    out.push(DVector::zeros(dim));
    for k in 1..count {
        let h = halton(k as u64, 1 + sphere_coords(dim));
        let radius = h[0].powf(1.0 / dim as f64);
        let dir = sphere_point(&h[1..], dim);
        out.push(dir * radius);
    }
    out
}

/// Quasi-uniform directions on `S^(dim-1)`, nested in `count`.
pub fn sphere_samples(count: usize, dim: usize) -> Vec<DVector<f64>> {
    (0..count)
        .map(|k| {
            let h = halton(k as u64, sphere_coords(dim));
            sphere_point(&h, dim)
        })
        .collect()
}

/// Regular grid of boundary directions; `grid` points per angle coordinate.
///
/// In dimension 2 these are `grid` equally spaced angles. In dimension 3 the
/// polar/azimuth chart is complemented by a copy rotated to cover its poles.
/// Higher dimensions fall back to `grid^2` Halton directions.
pub fn direction_grid(grid: usize, dim: usize) -> Vec<DVector<f64>> {
    match dim {
        2 => (0..grid)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / grid as f64;
                DVector::from_vec(vec![t.cos(), t.sin()])
            })
            .collect(),
        3 => {
            let mut out: Vec<DVector<f64>> = Vec::with_capacity(2 * grid * grid);
            for chart in 0..2 {
                for j in 0..grid {
                    let theta = PI * (j as f64 + 0.5) / grid as f64;
                    for k in 0..grid {
                        let az = 2.0 * PI * k as f64 / grid as f64;
                        let (a, b, c) = (theta.sin() * az.cos(), theta.sin() * az.sin(), theta.cos());
                        let p = if chart == 0 {
                            DVector::from_vec(vec![a, b, c])
                        } else {
                            DVector::from_vec(vec![c, a, b])
                        };
                        if out.iter().all(|q| (q - &p).norm() > 1e-9) {
                            out.push(p);
                        }
                    }
                }
            }
            out
        }
        _ => sphere_samples(grid * grid, dim),
    }
}

/// Angle coordinates of a unit direction: `[atan2(y, x)]` in 2-D, `[polar, azimuth]` in 3-D.
pub fn direction_angles(u: &DVector<f64>) -> Vec<f64> {
    match u.len() {
        2 => vec![u[1].atan2(u[0])],
        3 => vec![u[2].clamp(-1.0, 1.0).acos(), u[1].atan2(u[0])],
        _ => u.iter().copied().collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radical_inverse_base_two() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(2, 2), 0.25);
        assert_eq!(radical_inverse(3, 2), 0.75);
    }

    #[test]
    fn samples_are_nested_and_inside() {
        for dim in 2..=4 {
            let a = ball_samples(50, dim);
            let b = ball_samples(100, dim);
            assert_eq!(&b[..50], &a[..]);
            assert!(b.iter().all(|p| p.norm() <= 1.0 + 1e-12));
            assert!(sphere_samples(40, dim).iter().all(|u| (u.norm() - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn three_dim_grid_covers_poles() {
        let grid = direction_grid(12, 3);
        assert!(grid.len() > 12 * 12);
        let pole = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        let closest = grid.iter().map(|u| (u - &pole).norm()).fold(f64::INFINITY, f64::min);
        assert!(closest < 0.2);
    }

    #[test]
    fn normal_quantile_symmetry() {
        assert!(normal_quantile(0.5).abs() < 1e-12);
        assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-8);
        assert!((normal_quantile(0.1) + normal_quantile(0.9)).abs() < 1e-12);
    }
}
