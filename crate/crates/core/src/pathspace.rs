//! Discrete curves with endpoints on the boundary, their energy and the chord family.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{sampling, DomainBoundary, MetricField};

pub const DEFAULT_NODES: usize = 128;

/// Tolerance for "on the boundary" and "inside the closed domain".
pub const BOUNDARY_TOL: f64 = 1e-8;

/// Polyline `x_0, ..., x_n` on the uniform grid `s_i = i/n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<Vec<f64>>", try_from = "Vec<Vec<f64>>")]
pub struct DiscretePath {
    nodes: Vec<DVector<f64>>,
}

/// One vector per node of a path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<Vec<f64>>", try_from = "Vec<Vec<f64>>")]
pub struct TangentField {
    vectors: Vec<DVector<f64>>,
}

fn rows(v: &[DVector<f64>]) -> Vec<Vec<f64>> {
    v.iter().map(|x| x.iter().copied().collect()).collect()
}

fn from_rows(rows: Vec<Vec<f64>>) -> Result<Vec<DVector<f64>>> {
    let dim = rows.first().map(|r| r.len()).unwrap_or(0);
    if rows.iter().any(|r| r.len() != dim) {
        return Err(Error::Parse("rows of unequal length".into()));
    }
    Ok(rows.into_iter().map(DVector::from_vec).collect())
}

impl From<DiscretePath> for Vec<Vec<f64>> {
    fn from(p: DiscretePath) -> Self {
        rows(&p.nodes)
    }
}

impl TryFrom<Vec<Vec<f64>>> for DiscretePath {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        DiscretePath::new(from_rows(rows)?)
    }
}

impl From<TangentField> for Vec<Vec<f64>> {
    fn from(v: TangentField) -> Self {
        rows(&v.vectors)
    }
}

impl TryFrom<Vec<Vec<f64>>> for TangentField {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Ok(TangentField { vectors: from_rows(rows)? })
    }
}

impl DiscretePath {
    pub fn new(nodes: Vec<DVector<f64>>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::Usage("a path needs at least two nodes".into()));
        }
        let dim = nodes[0].len();
        if dim == 0 || nodes.iter().any(|x| x.len() != dim) {
            return Err(Error::Usage("path nodes must share a positive dimension".into()));
        }
        Ok(Self { nodes })
    }

    pub fn constant(p: &DVector<f64>, n: usize) -> Self {
        Self { nodes: vec![p.clone(); n + 1] }
    }

    /// Samples `curve(s)` at `s = i/n`.
    pub fn from_fn(n: usize, curve: impl Fn(f64) -> DVector<f64>) -> Self {
        Self { nodes: (0..=n).map(|i| curve(i as f64 / n as f64)).collect() }
    }

    /// Number of segments.
    pub fn n(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.nodes[0].len()
    }

    pub fn nodes(&self) -> &[DVector<f64>] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &DVector<f64> {
        &self.nodes[i]
    }

    pub fn start(&self) -> &DVector<f64> {
        &self.nodes[0]
    }

    pub fn end(&self) -> &DVector<f64> {
        &self.nodes[self.n()]
    }

    pub fn into_nodes(self) -> Vec<DVector<f64>> {
        self.nodes
    }

    pub fn is_constant(&self) -> bool {
        self.nodes.iter().all(|x| x == &self.nodes[0])
    }

    /// `x + h V`, node-wise.
    pub fn displaced(&self, v: &TangentField, h: f64) -> Result<Self> {
        check_len(self, v)?;
        Ok(Self { nodes: self.nodes.iter().zip(&v.vectors).map(|(x, w)| x + w * h).collect() })
    }

    /// Checks the endpoint and containment constraints of the path space.
    pub fn validate(&self, b: &DomainBoundary) -> Result<()> {
        for (i, x) in [(0, self.start()), (self.n(), self.end())] {
            let phi = b.phi(x);
            if phi.abs() > BOUNDARY_TOL {
                return Err(Error::Precondition(format!("endpoint {i} has phi = {phi:e}")));
            }
        }
        if let Some((i, x)) = self.nodes.iter().enumerate().find(|(_, x)| b.phi(x) > BOUNDARY_TOL) {
            return Err(Error::Precondition(format!("node {i} lies outside the domain (phi = {:e})", b.phi(x))));
        }
        Ok(())
    }

    /// Resamples to `n` uniform segments by linear interpolation.
    pub fn resample(&self, n: usize) -> Self {
        let m = self.n();
        Self::from_fn(n, |s| {
            let t = s * m as f64;
            let k = (t.floor() as usize).min(m - 1);
            let w = t - k as f64;
            &self.nodes[k] * (1.0 - w) + &self.nodes[k + 1] * w
        })
    }

    /// One node per line, comma separated, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = (0..self.dim()).map(|k| format!("x{k}")).collect();
        let _ = writeln!(out, "{}", header.join(","));
        for x in &self.nodes {
            let row: Vec<String> = x.iter().map(|v| format!("{v:.16e}")).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut nodes = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('x') || line.starts_with('#') {
                continue;
            }
            let row: std::result::Result<Vec<f64>, _> = line.split(',').map(|t| t.trim().parse::<f64>()).collect();
            let row = row.map_err(|e| Error::Parse(format!("line {}: {e}", ln + 1)))?;
            nodes.push(DVector::from_vec(row));
        }
        Self::new(nodes)
    }
}

impl TangentField {
    pub fn new(vectors: Vec<DVector<f64>>) -> Self {
        Self { vectors }
    }

    pub fn zeros(len: usize, dim: usize) -> Self {
        Self { vectors: vec![DVector::zeros(dim); len] }
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[DVector<f64>] {
        &self.vectors
    }

    pub fn vectors_mut(&mut self) -> &mut [DVector<f64>] {
        &mut self.vectors
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self { vectors: self.vectors.iter().map(|v| v * a).collect() }
    }

    /// Euclidean node-wise pairing `sum_i <self_i, other_i>`.
    pub fn pair(&self, other: &TangentField) -> f64 {
        self.vectors.iter().zip(&other.vectors).map(|(a, b)| a.dot(b)).sum()
    }

    pub fn reversed(&self) -> Self {
        Self { vectors: self.vectors.iter().rev().cloned().collect() }
    }

    pub fn max_norm(&self) -> f64 {
        self.vectors.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

fn check_len(x: &DiscretePath, v: &TangentField) -> Result<()> {
    if v.len() != x.nodes.len() {
        return Err(Error::Usage(format!("field of length {} on a path with {} nodes", v.len(), x.nodes.len())));
    }
    Ok(())
}

fn midpoint(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    (a + b) * 0.5
}

/// Midpoint-rule energy `n * sum_i D_i^T g(mid_i) D_i` with `D_i = x_{i+1} - x_i`.
pub fn energy(m: &MetricField, x: &DiscretePath) -> f64 {
    let n = x.n() as f64;
    let sum: f64 = x
        .nodes
        .windows(2)
        .map(|w| {
            let d = &w[1] - &w[0];
            m.inner(&midpoint(&w[0], &w[1]), &d, &d)
        })
        .sum();
    n * sum
}

/// Energy of the segments between nodes `a` and `b`, i.e. the integral of `g(x', x')` over `[a/n, b/n]`.
pub fn segment_energy(m: &MetricField, x: &DiscretePath, a: usize, b: usize) -> f64 {
    let n = x.n() as f64;
    n * x.nodes[a..=b]
        .windows(2)
        .map(|w| {
            let d = &w[1] - &w[0];
            m.inner(&midpoint(&w[0], &w[1]), &d, &d)
        })
        .sum::<f64>()
}

/// Partial derivatives of the discrete energy with respect to every node coordinate.
///
/// `dF(x)[V] = sum_i <grad_i, V_i>` for every tangent field `V`.
pub fn energy_gradient(m: &MetricField, x: &DiscretePath) -> TangentField {
    let n = x.n() as f64;
    let dim = x.dim();
    let mut out = vec![DVector::zeros(dim); x.nodes.len()];
    if x.is_constant() {
        return TangentField::new(out);
    }
    for (k, w) in x.nodes.windows(2).enumerate() {
        let d = &w[1] - &w[0];
        let mid = midpoint(&w[0], &w[1]);
        let (gd, half_dg) = if m.is_euclidean() {
            (d.clone(), DVector::zeros(dim))
        } else {
            let jet = m.jet(&mid);
            let gd = &jet.g * &d;
            let half = DVector::from_fn(dim, |l, _| 0.5 * d.dot(&(&jet.dg[l] * &d)));
            (gd, half)
        };
        // each endpoint of the segment moves the midpoint by half its displacement
        out[k] += (&half_dg - &gd * 2.0) * n;
        out[k + 1] += (&half_dg + &gd * 2.0) * n;
    }
    TangentField::new(out)
}

/// `max(|d_0|, |d_n|) + (n * sum |d_{i+1} - d_i|^2)^{1/2}` with `d = x2 - x1`.
pub fn dist_star(x1: &DiscretePath, x2: &DiscretePath) -> Result<f64> {
    matched(x1, x2)?;
    let diff: Vec<DVector<f64>> = x1.nodes.iter().zip(&x2.nodes).map(|(a, b)| b - a).collect();
    Ok(star(&diff))
}

/// `max_i |x2_i - x1_i|`
pub fn dist_inf(x1: &DiscretePath, x2: &DiscretePath) -> Result<f64> {
    matched(x1, x2)?;
    Ok(x1.nodes.iter().zip(&x2.nodes).map(|(a, b)| (b - a).norm()).fold(0.0, f64::max))
}

pub fn norm_star(v: &TangentField) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    star(&v.vectors)
}

fn star(d: &[DVector<f64>]) -> f64 {
    let n = (d.len() - 1) as f64;
    let ends = d[0].norm().max(d[d.len() - 1].norm());
    let sq: f64 = d.windows(2).map(|w| (&w[1] - &w[0]).norm_squared()).sum();
    ends + (n * sq).sqrt()
}

fn matched(x1: &DiscretePath, x2: &DiscretePath) -> Result<()> {
    if x1.n() != x2.n() || x1.dim() != x2.dim() {
        return Err(Error::Usage(format!(
            "mismatched discretizations: n = {} vs {}, dim = {} vs {}",
            x1.n(),
            x2.n(),
            x1.dim(),
            x2.dim()
        )));
    }
    Ok(())
}

/// Reversal `x(s) -> x(1 - s)`.
pub fn reverse(x: &DiscretePath) -> DiscretePath {
    DiscretePath { nodes: x.nodes.iter().rev().cloned().collect() }
}

/// Chord from `a` to `b`: `Psi^{-1}((1-s) Psi(a) + s Psi(b))` sampled at `n` segments.
pub fn chord(b: &DomainBoundary, a_pt: &DVector<f64>, b_pt: &DVector<f64>, n: usize) -> Result<DiscretePath> {
    if a_pt == b_pt {
        return Ok(DiscretePath::constant(a_pt, n));
    }
    let ya = b.to_unit_ball(a_pt)?;
    let yb = b.to_unit_ball(b_pt)?;
    let nf = n as f64;
    let mut nodes = Vec::with_capacity(n + 1);
    nodes.push(a_pt.clone());
    for i in 1..n {
        // integer weights keep chord(a, b) and chord(b, a) mirror images bit for bit
        let wa = (n - i) as f64 / nf;
        let wb = i as f64 / nf;
        nodes.push(b.from_unit_ball(&(&ya * wa + &yb * wb))?);
    }
    nodes.push(b_pt.clone());
    DiscretePath::new(nodes)
}

/// Sampled estimate of `M0`, where `M0^2` bounds the energy of the chord family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct M0Estimate {
    /// Largest sampled chord energy.
    pub raw_sq: f64,
    /// `raw_sq` inflated by 5%.
    pub m0_sq: f64,
    pub m0: f64,
    pub pairs: usize,
}

/// Maximum chord energy over all pairs of a boundary grid, inflated by 5%.
///
/// Fails with a consistency error unless `M0 > delta0 / K0`.
pub fn estimate_m0(m: &MetricField, b: &DomainBoundary, grid: usize, n: usize) -> Result<M0Estimate> {
    let est = sample_m0(m, b, grid, n)?;
    let bound = b.delta0() / b.k0();
    if !(est.m0 > bound) {
        return Err(Error::Consistency(format!("M0 = {} does not exceed delta0/K0 = {}", est.m0, bound)));
    }
    Ok(est)
}

/// As [`estimate_m0`], without checking `M0 > delta0 / K0`.
pub fn sample_m0(m: &MetricField, b: &DomainBoundary, grid: usize, n: usize) -> Result<M0Estimate> {
    if grid < 8 {
        return Err(Error::Usage(format!("boundary grid {grid} below 8 samples per angle")));
    }
    let points = b.boundary_grid(grid)?;
    let mut pairs = Vec::new();
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            pairs.push((i, j));
        }
    }
    let eval = |&(i, j): &(usize, usize)| -> Result<f64> { Ok(energy(m, &chord(b, &points[i], &points[j], n)?)) };
    #[cfg(feature = "parallel")]
    let energies: Result<Vec<f64>> = {
        use rayon::prelude::*;
        pairs.par_iter().map(eval).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let energies: Result<Vec<f64>> = pairs.iter().map(eval).collect();
    let raw_sq = energies?.into_iter().fold(0.0, f64::max);
    let m0_sq = 1.05 * raw_sq;
    Ok(M0Estimate { raw_sq, m0_sq, m0: m0_sq.sqrt(), pairs: pairs.len() })
}

/// Outcome of the strip inequality `max |phi| <= K0 sqrt((b-a) * int_a^b g(x',x'))` on a segment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StripReport {
    pub max_abs_phi: f64,
    pub bound: f64,
    pub slack: f64,
    pub holds: bool,
    pub segment_energy: f64,
    /// The segment energy is at most `delta0^2 / K0^2`, so `phi >= -delta0` must follow.
    pub corollary_applies: bool,
    pub min_phi: f64,
    pub corollary_holds: bool,
}

/// Checks the strip inequality on nodes `a_idx..=b_idx`, where node `a_idx` lies on the boundary.
pub fn strip_bound_check(
    b: &DomainBoundary,
    m: &MetricField,
    x: &DiscretePath,
    a_idx: usize,
    b_idx: usize,
) -> Result<StripReport> {
    if a_idx > b_idx || b_idx > x.n() {
        return Err(Error::Usage(format!("bad segment [{a_idx}, {b_idx}] for n = {}", x.n())));
    }
    let phi_a = b.phi(x.node(a_idx));
    if phi_a.abs() > BOUNDARY_TOL {
        return Err(Error::Precondition(format!("segment start has phi = {phi_a:e}")));
    }
    let seg = segment_energy(m, x, a_idx, b_idx);
    let len = (b_idx - a_idx) as f64 / x.n() as f64;
    let bound = b.k0() * (len * seg).sqrt();
    let slack = 1e-8 + 1e-3 * bound;
    let phis: Vec<f64> = x.nodes[a_idx..=b_idx].iter().map(|p| b.phi(p)).collect();
    let max_abs_phi = phis.iter().map(|p| p.abs()).fold(0.0, f64::max);
    let min_phi = phis.iter().copied().fold(f64::INFINITY, f64::min);
    let corollary_applies = seg <= (b.delta0() / b.k0()).powi(2);
    let corollary_holds = !corollary_applies || min_phi >= -b.delta0() - slack;
    Ok(StripReport {
        max_abs_phi,
        bound,
        slack,
        holds: max_abs_phi <= bound + slack,
        segment_energy: seg,
        corollary_applies,
        min_phi,
        corollary_holds,
    })
}

/// Random element of the discrete path space: a chord between random boundary points,
/// bent by a few sine modes, with any node that leaves the domain pushed back radially.
pub fn random_path<R: Rng>(b: &DomainBoundary, n: usize, rng: &mut R) -> Result<DiscretePath> {
    let dim = b.dim();
    let dir = |rng: &mut R| {
        let u: Vec<f64> = (0..sampling::sphere_coords(dim)).map(|_| rng.gen::<f64>()).collect();
        sampling::sphere_point(&u, dim)
    };
    let a = b.boundary_point(&dir(rng))?;
    let e = b.boundary_point(&dir(rng))?;
    let base = chord(b, &a, &e, n)?;
    let modes = 3;
    let amps: Vec<DVector<f64>> =
        (0..modes).map(|k| DVector::from_fn(dim, |_, _| rng.gen_range(-0.5..0.5) / (k + 1) as f64)).collect();
    let mut nodes = base.into_nodes();
    for (i, node) in nodes.iter_mut().enumerate().take(n).skip(1) {
        let s = i as f64 / n as f64;
        for (k, amp) in amps.iter().enumerate() {
            *node += amp * (std::f64::consts::PI * (k + 1) as f64 * s).sin();
        }
        if b.phi(node) > 0.0 {
            *node = b.boundary_point(node)?;
        }
    }
    DiscretePath::new(nodes)
}

/// Tally of strip-inequality checks over random paths.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StripSweep {
    pub paths: usize,
    pub checks: usize,
    pub violations: usize,
    /// Checks where the segment energy was small enough for the corollary to apply.
    pub corollary_checks: usize,
    pub corollary_violations: usize,
    /// Largest `max |phi| / (bound + slack)`; at most 1 when every check holds.
    pub worst_ratio: f64,
}

/// Runs [`strip_bound_check`] on `count` random paths, from both ends, over initial
/// segments of 1/16, 1/8, 1/4, 1/2 and all of the path.
pub fn strip_sweep<R: Rng>(
    b: &DomainBoundary,
    m: &MetricField,
    count: usize,
    n: usize,
    rng: &mut R,
) -> Result<StripSweep> {
    let mut out = StripSweep {
        paths: count,
        checks: 0,
        violations: 0,
        corollary_checks: 0,
        corollary_violations: 0,
        worst_ratio: 0.0,
    };
    let ends: Vec<usize> = [16, 8, 4, 2, 1].iter().map(|d| (n / d).max(1)).collect();
    for _ in 0..count {
        let x = random_path(b, n, rng)?;
        for y in [reverse(&x), x] {
            for &end in &ends {
                let r = strip_bound_check(b, m, &y, 0, end)?;
                out.checks += 1;
                out.violations += usize::from(!r.holds);
                out.corollary_checks += usize::from(r.corollary_applies);
                out.corollary_violations += usize::from(!r.corollary_holds);
                out.worst_ratio = out.worst_ratio.max(r.max_abs_phi / (r.bound + r.slack));
            }
        }
    }
    Ok(out)
}

/// Matrix whose rows are the path nodes.
pub fn node_matrix(x: &DiscretePath) -> DMatrix<f64> {
    DMatrix::from_fn(x.nodes.len(), x.dim(), |i, k| x.nodes[i][k])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{LevelSet, Profile};
    use proptest::prelude::{prop_assert, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn ball(dim: usize) -> DomainBoundary {
        DomainBoundary::new(LevelSet::unit_ball(), dim, 0.2, 1.05).unwrap()
    }

    fn quartic() -> MetricField {
        MetricField::radial_conformal(2, Profile::Polynomial { coeffs: vec![1.0, 0.0, 1.0] })
    }

    fn diameter(n: usize) -> DiscretePath {
        chord(&ball(2), &v(&[-1.0, 0.0]), &v(&[1.0, 0.0]), n).unwrap()
    }

    #[test]
    fn energy_examples() {
        let e = MetricField::euclidean(2);
        for n in [1, 7, 128] {
            assert!((energy(&e, &diameter(n)) - 4.0).abs() < 1e-12);
        }
        assert_eq!(energy(&e, &DiscretePath::constant(&v(&[0.0, 1.0]), 16)), 0.0);
        let semicircle = DiscretePath::from_fn(200, |s| v(&[(PI * s).cos(), (PI * s).sin()]));
        let f = energy(&e, &semicircle);
        assert!((f - PI * PI).abs() / (PI * PI) < 1e-3);
    }

    #[test]
    fn gradient_examples() {
        let e = MetricField::euclidean(2);
        let g = energy_gradient(&e, &diameter(64));
        assert!(g.vectors()[1..64].iter().all(|w| w.amax() < 1e-10));
        let c = energy_gradient(&quartic(), &DiscretePath::constant(&v(&[0.6, 0.8]), 10));
        assert_eq!(c.max_norm(), 0.0);
    }

    fn random_field(rng: &mut ChaCha8Rng, len: usize, dim: usize) -> TangentField {
        TangentField::new((0..len).map(|_| DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0))).collect())
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b = ball(2);
        let metrics = [
            MetricField::euclidean(2),
            quartic(),
            MetricField::perturbed_radial(2, Profile::Polynomial { coeffs: vec![1.0, 0.0, 1.0] }, 0.05).unwrap(),
        ];
        for m in &metrics {
            for _ in 0..50 {
                let x = random_path(&b, 32, &mut rng).unwrap();
                let w = random_field(&mut rng, x.nodes().len(), 2);
                let h = 1e-5;
                let fd =
                    (energy(m, &x.displaced(&w, h).unwrap()) - energy(m, &x.displaced(&w, -h).unwrap())) / (2.0 * h);
                let an = energy_gradient(m, &x).pair(&w);
                assert!((an - fd).abs() <= 1e-5 * an.abs().max(1.0), "{an} vs {fd}");
            }
        }
    }

    #[test]
    fn distance_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = ball(2);
        for _ in 0..100 {
            let x1 = random_path(&b, 40, &mut rng).unwrap();
            let x2 = random_path(&b, 40, &mut rng).unwrap();
            assert!(dist_inf(&x1, &x2).unwrap() <= dist_star(&x1, &x2).unwrap() + 1e-15);
            assert_eq!(dist_star(&x1, &x1).unwrap(), 0.0);
        }
        let x = diameter(20);
        let shifted = DiscretePath::new(x.nodes().iter().map(|p| p + v(&[0.3, 0.0])).collect()).unwrap();
        assert!((dist_inf(&x, &shifted).unwrap() - 0.3).abs() < 1e-15);
        assert!(matches!(dist_star(&x, &diameter(21)), Err(Error::Usage(_))));
    }

    #[test]
    fn reversal_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = ball(2);
        let m = quartic();
        for _ in 0..50 {
            let x = random_path(&b, 64, &mut rng).unwrap();
            assert_eq!(reverse(&reverse(&x)), x);
            let (f, fr) = (energy(&m, &x), energy(&m, &reverse(&x)));
            assert!((f - fr).abs() <= 1e-12 * f.max(1.0));
        }
        let d = diameter(32);
        assert!(dist_inf(&d, &reverse(&d)).unwrap() > 0.0);
    }

    #[test]
    fn chord_examples() {
        let b = ball(2);
        let a = v(&[0.6, 0.8]);
        assert!(chord(&b, &a, &a, 10).unwrap().nodes().iter().all(|p| p == &a));
        let d = diameter(4);
        for (i, p) in d.nodes().iter().enumerate() {
            assert!((p - v(&[-1.0 + 0.5 * i as f64, 0.0])).norm() < 1e-15);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cubic = DomainBoundary::new(
            LevelSet::Sublevel { potential: crate::geometry::Potential::Cubic { epsilon: 0.05 }, level: 0.49 },
            2,
            0.002,
            1.0,
        )
        .unwrap();
        for bd in [&b, &cubic] {
            for _ in 0..50 {
                let p = bd.boundary_point(&v(&[rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])).unwrap();
                let q = bd.boundary_point(&v(&[rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])).unwrap();
                let c = chord(bd, &p, &q, 33).unwrap();
                assert_eq!(reverse(&c), chord(bd, &q, &p, 33).unwrap());
                assert!(c.nodes()[1..33].iter().all(|x| bd.phi(x) < 0.0));
                c.validate(bd).unwrap();
            }
        }
    }

    #[test]
    fn chord_map_is_injective_on_samples() {
        let b = ball(2);
        let pts = b.boundary_grid(12).unwrap();
        let mut chords = Vec::new();
        for p in &pts {
            for q in &pts {
                chords.push(chord(&b, p, q, 16).unwrap());
            }
        }
        for i in 0..chords.len() {
            for j in (i + 1)..chords.len() {
                assert!(dist_inf(&chords[i], &chords[j]).unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn m0_examples() {
        let e = MetricField::euclidean(2);
        let b = ball(2);
        let est = estimate_m0(&e, &b, 16, 32).unwrap();
        assert!((est.raw_sq - 4.0).abs() < 0.04);
        assert!(est.m0 > b.delta0() / b.k0());
        let tiny = DomainBoundary::new(LevelSet::unit_ball(), 2, 0.2, 1e-3).unwrap();
        assert!(matches!(estimate_m0(&e, &tiny, 16, 32), Err(Error::Consistency(_))));
        assert!(estimate_m0(&e, &b, 4, 32).is_err());
    }

    #[test]
    fn strip_examples() {
        let e = MetricField::euclidean(2);
        let b = ball(2);
        let c = DiscretePath::constant(&v(&[1.0, 0.0]), 20);
        let r = strip_bound_check(&b, &e, &c, 0, 20).unwrap();
        assert_eq!((r.max_abs_phi, r.bound), (0.0, 0.0));
        assert!(r.holds);

        let p = v(&[1.0, 0.0]);
        let q = v(&[(0.1f64).cos(), (0.1f64).sin()]);
        let short = chord(&b, &p, &q, 64).unwrap();
        let r = strip_bound_check(&b, &e, &short, 0, 64).unwrap();
        assert!(r.corollary_applies && r.corollary_holds && r.holds);
        assert!(r.min_phi >= -b.delta0());

        let sweep = strip_sweep(&b, &e, 50, 64, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!((sweep.checks, sweep.violations, sweep.corollary_violations), (500, 0, 0));
        assert!(sweep.corollary_checks > 0 && sweep.worst_ratio <= 1.0);

        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200 {
            let x = random_path(&b, 64, &mut rng).unwrap();
            for end in [16, 40, 64] {
                let r = strip_bound_check(&b, &e, &x, 0, end).unwrap();
                assert!(r.holds && r.corollary_holds, "{r:?}");
            }
        }
    }

    #[test]
    fn energy_converges_at_second_order() {
        // curve x(s) = (cos(pi s^2), sin(pi s^2)) * (1 - 0.3 sin(pi s)) in the quartic conformal metric
        let m = quartic();
        let curve = |s: f64| {
            let r = 1.0 - 0.3 * (PI * s).sin();
            v(&[r * (PI * s * s).cos(), r * (PI * s * s).sin()])
        };
        let velocity = |s: f64| {
            let r = 1.0 - 0.3 * (PI * s).sin();
            let dr = -0.3 * PI * (PI * s).cos();
            let t = PI * s * s;
            let dt = 2.0 * PI * s;
            v(&[dr * t.cos() - r * dt * t.sin(), dr * t.sin() + r * dt * t.cos()])
        };
        // reference integral by composite Simpson on the analytic velocity
        let k = 200_000;
        let h = 1.0 / k as f64;
        let integrand = |s: f64| {
            let x = curve(s);
            let w = velocity(s);
            m.inner(&x, &w, &w)
        };
        let mut exact = integrand(0.0) + integrand(1.0);
        for i in 1..k {
            exact += integrand(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        exact *= h / 3.0;
        let errs: Vec<f64> =
            [32, 64, 128, 256].iter().map(|&n| (energy(&m, &DiscretePath::from_fn(n, curve)) - exact).abs()).collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn csv_and_json_round_trip_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_path(&ball(3), 17, &mut rng).unwrap();
        assert_eq!(DiscretePath::from_csv(&x.to_csv()).unwrap(), x);
        let json = serde_json::to_string(&x).unwrap();
        assert_eq!(serde_json::from_str::<DiscretePath>(&json).unwrap(), x);
        assert!(DiscretePath::from_csv("x0,x1\n1.0,abc\n").is_err());
    }

    proptest! {
        #[test]
        fn energy_is_nonnegative_and_reversal_invariant(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_path(&ball(2), 24, &mut rng).unwrap();
            let m = quartic();
            let f = energy(&m, &x);
            prop_assert!(f >= 0.0);
            prop_assert!((f - energy(&m, &reverse(&x))).abs() <= 1e-12 * f.max(1.0));
            prop_assert!(x.validate(&ball(2)).is_ok());
        }
    }
}
