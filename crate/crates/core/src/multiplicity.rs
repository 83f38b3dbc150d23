//! Multistart search for distinct orthogonal geodesic chords, and the endpoint-separating homotopy.

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::descent::{flow, verify_critical, CriticalReport, CriticalTolerances, FlowConfig};
use crate::error::{Error, Result};
use crate::geometry::{sampling, DomainBoundary, LevelSet, MetricField};
use crate::pathspace::{chord, energy, estimate_m0, reverse, DiscretePath, M0Estimate, DEFAULT_NODES};
use crate::shooting::{ogc_refine, verify_shot, ShootConfig, ShotCheck};

fn point_segment_distance(p: &DVector<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let d = b - a;
    let len2 = d.norm_squared();
    let t = if len2 > 0.0 { ((p - a).dot(&d) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p - (a + d * t)).norm()
}

fn directed_hausdorff(from: &DiscretePath, to: &DiscretePath) -> f64 {
    from.nodes()
        .iter()
        .map(|p| to.nodes().windows(2).map(|w| point_segment_distance(p, &w[0], &w[1])).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

/// Symmetric Hausdorff distance between the node sets of two paths, measured against
/// the polylines through the other path's nodes so that differently sampled copies of
/// one curve compare as equal.
pub fn hausdorff(x1: &DiscretePath, x2: &DiscretePath) -> f64 {
    directed_hausdorff(x1, x2).max(directed_hausdorff(x2, x1))
}

/// Whether two chords have different images; `x2` is compared in both orientations.
pub fn distinct(x1: &DiscretePath, x2: &DiscretePath, tol: f64) -> bool {
    let d = hausdorff(x1, x2).min(hausdorff(x1, &reverse(x2)));
    d >= tol
}

/// Representative of `{x, reverse(x)}` whose start point is lexicographically smaller.
pub fn canonical(x: &DiscretePath) -> DiscretePath {
    let lex = x
        .start()
        .iter()
        .zip(x.end().iter())
        .map(|(a, b)| a.total_cmp(b))
        .find(|o| *o != Ordering::Equal)
        .unwrap_or(Ordering::Equal);
    if lex == Ordering::Greater {
        reverse(x)
    } else {
        x.clone()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub path: DiscretePath,
    pub energy: f64,
    pub endpoints: [Vec<f64>; 2],
    pub report: CriticalReport,
    /// Present when the node-level check failed and the entry was accepted on the shot check.
    #[serde(default)]
    pub shot_check: Option<ShotCheck>,
    /// Index of the start pair that produced the entry.
    pub source: usize,
}

impl CatalogEntry {
    pub fn verified(&self) -> bool {
        self.report.is_ogc() || self.shot_check.as_ref().is_some_and(|c| c.passed)
    }
}

/// Pairwise distinct OGCs, one representative per reversal class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OgcCatalog {
    pub entries: Vec<CatalogEntry>,
    pub target: usize,
    /// Absolute Hausdorff tolerance used for deduplication.
    pub tol: f64,
    pub energy_rel_tol: f64,
    /// Duplicates whose energy disagreed with the cataloged copy beyond `energy_rel_tol`.
    pub consistency_violations: usize,
}

impl OgcCatalog {
    pub fn new(target: usize, tol: f64, energy_rel_tol: f64) -> Self {
        Self { entries: Vec::new(), target, tol, energy_rel_tol, consistency_violations: 0 }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Adds a verified OGC unless an entry with the same image exists; returns whether it was added.
    pub fn insert(&mut self, path: &DiscretePath, report: CriticalReport, source: usize) -> bool {
        self.insert_with(path, report, None, source)
    }

    /// As [`OgcCatalog::insert`], recording the shot check the entry was accepted on.
    pub fn insert_with(
        &mut self,
        path: &DiscretePath,
        report: CriticalReport,
        shot_check: Option<ShotCheck>,
        source: usize,
    ) -> bool {
        let path = canonical(path);
        for e in &self.entries {
            if !distinct(&e.path, &path, self.tol) {
                if (e.energy - report.energy).abs() >= self.energy_rel_tol * e.energy.max(report.energy) {
                    self.consistency_violations += 1;
                }
                return false;
            }
        }
        let endpoints = [path.start().iter().copied().collect(), path.end().iter().copied().collect()];
        self.entries.push(CatalogEntry { energy: report.energy, path, endpoints, report, shot_check, source });
        true
    }

    /// Energies in nondecreasing order.
    pub fn spectrum(&self) -> Vec<f64> {
        let mut e: Vec<f64> = self.entries.iter().map(|e| e.energy).collect();
        e.sort_by(f64::total_cmp);
        e
    }

    /// Sorts entries by energy, ties broken by start point.
    pub fn sort(&mut self) {
        self.entries.sort_by(|a, b| {
            a.energy.total_cmp(&b.energy).then_with(|| {
                a.endpoints[0]
                    .iter()
                    .zip(&b.endpoints[0])
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| *o != Ordering::Equal)
                    .unwrap_or(Ordering::Equal)
            })
        });
    }

    /// `index,energy,start angles...,end angles...`
    pub fn summary_csv(&self) -> String {
        let dim = self.entries.first().map(|e| e.path.dim()).unwrap_or(2);
        let k = match dim {
            2 => 1,
            3 => 2,
            d => d,
        };
        let mut out = String::from("index,energy");
        for end in ["start", "end"] {
            for j in 0..k {
                let _ = write!(out, ",{end}_angle_{j}");
            }
        }
        out.push('\n');
        for (i, e) in self.entries.iter().enumerate() {
            let _ = write!(out, "{i},{:.16e}", e.energy);
            for p in &e.endpoints {
                let v = DVector::from_column_slice(p);
                for a in sampling::direction_angles(&(&v / v.norm())) {
                    let _ = write!(out, ",{a:.16e}");
                }
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MultistartConfig {
    /// Boundary grid points per angle coordinate; starts are pairs of grid points.
    pub grid: usize,
    pub nodes: usize,
    /// Grid used for the `M0` estimate.
    pub m0_grid: usize,
    /// Upper bound on the number of starts, taken with a fixed stride through the pair list.
    pub max_starts: Option<usize>,
    pub flow: FlowConfig,
    pub shoot: ShootConfig,
    pub tolerances: CriticalTolerances,
    /// Hausdorff tolerance relative to the domain diameter.
    pub hausdorff_rel: f64,
    pub energy_rel: f64,
    /// Accept refined shots that pass [`verify_shot`] when the node-level check fails.
    #[serde(default)]
    pub shot_fallback: bool,
}

impl Default for MultistartConfig {
    fn default() -> Self {
        Self {
            grid: 16,
            nodes: DEFAULT_NODES,
            m0_grid: 16,
            max_starts: None,
            flow: FlowConfig { max_iters: 100, ..FlowConfig::default() },
            shoot: ShootConfig::default(),
            tolerances: CriticalTolerances::default(),
            hausdorff_rel: 1e-3,
            energy_rel: 1e-4,
            shot_fallback: false,
        }
    }
}

/// Per-start record of the multistart run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StartRecord {
    pub index: usize,
    pub pair: (usize, usize),
    pub chord_energy: f64,
    pub outcome: StartOutcome,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartOutcome {
    /// Chord energy outside `[delta0^2/K0^2, M0^2]`.
    Filtered,
    /// Neither the flow output nor any refinement verified as an OGC.
    Unresolved,
    Added,
    Duplicate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultistartReport {
    pub catalog: OgcCatalog,
    pub m0: M0Estimate,
    pub energy_window: [f64; 2],
    pub starts: Vec<StartRecord>,
}

impl MultistartReport {
    pub fn count(&self) -> usize {
        self.catalog.len()
    }
}

/// Domain diameter estimated from a boundary grid.
pub fn boundary_diameter(b: &DomainBoundary) -> Result<f64> {
    let pts = b.boundary_grid(32)?;
    let mut d: f64 = 0.0;
    for (i, p) in pts.iter().enumerate() {
        for q in &pts[i + 1..] {
            d = d.max((p - q).norm());
        }
    }
    Ok(d)
}

enum Candidate {
    Filtered,
    None,
    Found(DiscretePath, CriticalReport, Option<ShotCheck>),
}

fn resolve_start(
    m: &MetricField,
    b: &DomainBoundary,
    a_pt: &DVector<f64>,
    b_pt: &DVector<f64>,
    window: [f64; 2],
    scale: f64,
    cfg: &MultistartConfig,
) -> Result<(f64, Candidate)> {
    let x0 = chord(b, a_pt, b_pt, cfg.nodes)?;
    let f0 = energy(m, &x0);
    if f0 < window[0] || f0 > window[1] {
        return Ok((f0, Candidate::Filtered));
    }
    let flowed = flow(&x0, b, m, &cfg.flow)?.path;
    let report = verify_critical(&flowed, b, m, &cfg.tolerances)?;
    if report.is_ogc() {
        return Ok((f0, Candidate::Found(flowed, report, None)));
    }
    let shoot = ShootConfig { nodes: cfg.nodes, ..cfg.shoot.clone() };
    for end in [flowed.start(), flowed.end()] {
        let refined = ogc_refine(m, b, end, &shoot)?;
        if !refined.converged {
            continue;
        }
        if let Some(path) = refined.path() {
            let report = verify_critical(path, b, m, &cfg.tolerances)?;
            if report.is_ogc() {
                return Ok((f0, Candidate::Found(path.clone(), report, None)));
            }
            if cfg.shot_fallback {
                let start = DVector::from_column_slice(&refined.start);
                let check = verify_shot(m, b, &start, &shoot, &cfg.tolerances, scale)?;
                if check.passed {
                    return Ok((f0, Candidate::Found(path.clone(), report, Some(check))));
                }
            }
        }
    }
    Ok((f0, Candidate::None))
}

/// Descends from every chord between boundary grid points in the energy window
/// `[delta0^2/K0^2, M0^2]`, sharpens by shooting, and catalogs the distinct OGCs.
///
/// Starts are processed in parallel; insertion follows start order, so the result
/// does not depend on the worker count.
pub fn multistart(m: &MetricField, b: &DomainBoundary, cfg: &MultistartConfig) -> Result<MultistartReport> {
    let m0 = estimate_m0(m, b, cfg.m0_grid, cfg.nodes)?;
    let window = [(b.delta0() / b.k0()).powi(2), m0.m0_sq];
    let points = b.boundary_grid(cfg.grid)?;
    let mut pairs = Vec::new();
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            pairs.push((i, j));
        }
    }
    if let Some(cap) = cfg.max_starts {
        if cap > 0 && pairs.len() > cap {
            let stride = pairs.len() as f64 / cap as f64;
            pairs = (0..cap).map(|k| pairs[(k as f64 * stride) as usize]).collect();
        }
    }
    let scale = boundary_diameter(b)?;
    let job = |&(i, j): &(usize, usize)| resolve_start(m, b, &points[i], &points[j], window, scale, cfg);
    #[cfg(feature = "parallel")]
    let results: Result<Vec<(f64, Candidate)>> = {
        use rayon::prelude::*;
        pairs.par_iter().map(job).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Result<Vec<(f64, Candidate)>> = pairs.iter().map(job).collect();

    let tol = cfg.hausdorff_rel * scale;
    let mut catalog = OgcCatalog::new(b.dim(), tol, cfg.energy_rel);
    let mut starts = Vec::with_capacity(pairs.len());
    for (index, (pair, (chord_energy, cand))) in pairs.iter().zip(results?).enumerate() {
        let outcome = match cand {
            Candidate::Filtered => StartOutcome::Filtered,
            Candidate::None => StartOutcome::Unresolved,
            Candidate::Found(path, report, check) => {
                if catalog.insert_with(&path, report, check, index) {
                    StartOutcome::Added
                } else {
                    StartOutcome::Duplicate
                }
            }
        };
        starts.push(StartRecord { index, pair: *pair, chord_energy, outcome });
    }
    catalog.sort();
    Ok(MultistartReport { catalog, m0, energy_window: window, starts })
}

/// SVG drawing of a planar domain boundary and a set of paths.
pub fn render_svg(b: &DomainBoundary, paths: &[&DiscretePath]) -> Result<String> {
    if b.dim() != 2 {
        return Err(Error::Usage("SVG rendering needs a planar domain".into()));
    }
    let outline = b.boundary_grid(256)?;
    let r = outline.iter().map(|p| p[0].abs().max(p[1].abs())).fold(0.0, f64::max) * 1.05;
    let size = 512.0;
    let map = |p: &DVector<f64>| ((p[0] + r) / (2.0 * r) * size, (r - p[1]) / (2.0 * r) * size);
    let poly = |pts: &mut dyn Iterator<Item = &DVector<f64>>| {
        let mut s = String::new();
        for p in pts {
            let (x, y) = map(p);
            let _ = write!(s, "{x:.3},{y:.3} ");
        }
        s.trim_end().to_string()
    };
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" viewBox=\"0 0 {size} {size}\">\n"
    );
    let _ = writeln!(out, "<rect width=\"{size}\" height=\"{size}\" fill=\"white\"/>");
    let _ = writeln!(
        out,
        "<polygon points=\"{}\" fill=\"none\" stroke=\"black\" stroke-width=\"1.5\"/>",
        poly(&mut outline.iter())
    );
    for (k, x) in paths.iter().enumerate() {
        let hue = (k * 137) % 360;
        let _ = writeln!(
            out,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"hsl({hue},70%,40%)\" stroke-width=\"1.2\"/>",
            poly(&mut x.nodes().iter())
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Homotopy on boundary pairs that pushes `B` away from `A` along the great circle
/// through both until their distance reaches `delta_g`, for a round spherical boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct SeparatingHomotopy {
    center: DVector<f64>,
    radius: f64,
    alpha: f64,
    delta_g: f64,
}

/// Injectivity radius of a round sphere of radius `r` (half its shortest closed geodesic),
/// reduced by 20%.
pub fn round_boundary_delta_g(radius: f64) -> f64 {
    0.8 * PI * radius
}

impl SeparatingHomotopy {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn delta_g(&self) -> f64 {
        self.delta_g
    }

    /// Parameter at which every pair is separated by at least `delta_g`.
    pub fn final_time(&self) -> f64 {
        self.delta_g - self.alpha
    }

    /// Intrinsic distance on the boundary sphere.
    pub fn distance(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        let ua = (a - &self.center) / self.radius;
        let ub = (b - &self.center) / self.radius;
        self.radius * ua.dot(&ub).clamp(-1.0, 1.0).acos()
    }

    /// Position of the moving endpoint at time `tau` for the pair `(a, b)`.
    pub fn eval(&self, tau: f64, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        let d0 = self.distance(a, b);
        if d0 >= self.delta_g || tau <= 0.0 {
            return b.clone();
        }
        let d = d0 + tau.min(self.delta_g - d0);
        let ua = (a - &self.center) / self.radius;
        let ub = (b - &self.center) / self.radius;
        let t = (&ub - &ua * ua.dot(&ub)).normalize();
        let angle = d / self.radius;
        &self.center + (ua * angle.cos() + t * angle.sin()) * self.radius
    }
}

/// Builds the separating homotopy for the pairs `c`, whose minimal distance must be `alpha`.
pub fn separate_endpoints(
    c: &[(DVector<f64>, DVector<f64>)],
    alpha: f64,
    b: &DomainBoundary,
) -> Result<SeparatingHomotopy> {
    let LevelSet::Sphere { center, radius } = b.level_set() else {
        return Err(Error::Usage("endpoint separation is implemented for spherical boundaries".into()));
    };
    let h = SeparatingHomotopy {
        center: if center.is_empty() { DVector::zeros(b.dim()) } else { DVector::from_column_slice(center) },
        radius: *radius,
        alpha,
        delta_g: round_boundary_delta_g(*radius),
    };
    if !(alpha > 0.0) || alpha >= h.delta_g {
        return Err(Error::Precondition(format!("alpha = {alpha} must lie in (0, {}).", h.delta_g)));
    }
    let min = c.iter().map(|(a, e)| h.distance(a, e)).fold(f64::INFINITY, f64::min);
    if !c.is_empty() && min < alpha * (1.0 - 1e-9) {
        return Err(Error::Precondition(format!("pair distance {min} below alpha = {alpha}")));
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Profile;
    use crate::pathspace::random_path;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn ball(dim: usize) -> DomainBoundary {
        DomainBoundary::new(LevelSet::unit_ball(), dim, 0.2, 1.05).unwrap()
    }

    fn diameter(u: &DVector<f64>) -> DiscretePath {
        DiscretePath::from_fn(64, |s| u * (1.0 - 2.0 * s))
    }

    #[test]
    fn distinctness_examples() {
        let x = diameter(&v(&[1.0, 0.0]));
        let y = diameter(&v(&[0.0, 1.0]));
        assert!(!distinct(&x, &reverse(&x), 1e-3));
        assert!(!distinct(&x, &x, 1e-3));
        assert!(distinct(&x, &y, 1e-3));
        assert!((hausdorff(&x, &y) - 1.0).abs() < 1e-12);
        // resampling does not change the image
        assert!(!distinct(&x, &x.resample(97), 1e-3));
    }

    #[test]
    fn catalog_quotients_reversal() {
        let m = MetricField::euclidean(2);
        let b = ball(2);
        let tol = CriticalTolerances::default();
        let mut cat = OgcCatalog::new(2, 2e-3, 1e-4);
        for k in 0..6 {
            let t = k as f64 * 0.5;
            let x = diameter(&v(&[t.cos(), t.sin()]));
            let rep = verify_critical(&x, &b, &m, &tol).unwrap();
            assert!(cat.insert(&x, rep.clone(), k));
            assert!(!cat.insert(&reverse(&x), rep, k));
        }
        assert_eq!(cat.len(), 6);
        assert_eq!(cat.consistency_violations, 0);
        for e in &cat.entries {
            assert_eq!(canonical(&e.path), e.path);
        }
        let s = cat.spectrum();
        assert!(s.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn flat_disk_multistart() {
        let m = MetricField::euclidean(2);
        let b = ball(2);
        let rep = multistart(&m, &b, &MultistartConfig::default()).unwrap();
        assert!(rep.count() >= 2);
        for e in &rep.catalog.entries {
            assert!((e.energy - 4.0).abs() < 1e-3);
            assert!(e.report.endpoint_angles.iter().all(|a| *a < 1e-6));
        }
        let svg = render_svg(&b, &rep.catalog.entries.iter().map(|e| &e.path).collect::<Vec<_>>()).unwrap();
        assert!(svg.starts_with("<svg"));
    }

    #[test]
    fn ellipse_has_two_axis_chords() {
        let m = MetricField::euclidean(2);
        let b = DomainBoundary::new(LevelSet::Ellipsoid { semi_axes: vec![2.0, 1.0] }, 2, 0.2, 1.05).unwrap();
        let cfg = MultistartConfig { grid: 12, ..MultistartConfig::default() };
        let rep = multistart(&m, &b, &cfg).unwrap();
        let s = rep.catalog.spectrum();
        assert_eq!(s.len(), 2, "{s:?}");
        assert!((s[0] - 4.0).abs() < 4e-3 && (s[1] - 16.0).abs() < 16e-3, "{s:?}");
    }

    #[test]
    fn perturbed_metric_has_two_chords() {
        let m = MetricField::perturbed_radial(2, Profile::Polynomial { coeffs: vec![1.0, 0.0, 1.0] }, 0.05).unwrap();
        let b = DomainBoundary::calibrated(LevelSet::unit_ball(), &m, 0.2, 256).unwrap();
        let cfg = MultistartConfig { grid: 8, m0_grid: 8, ..MultistartConfig::default() };
        let rep = multistart(&m, &b, &cfg).unwrap();
        assert!(rep.count() >= 2, "{:?}", rep.catalog.spectrum());
        for e in &rep.catalog.entries {
            assert!(e.report.is_ogc() && e.report.speed_variation < 1e-6);
        }
    }

    #[test]
    fn distinctness_is_consistent_with_energy() {
        let b = ball(2);
        let m = MetricField::euclidean(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x = random_path(&b, 32, &mut rng).unwrap();
            let y = reverse(&x);
            assert!(!distinct(&x, &y, 1e-3));
            assert!((energy(&m, &x) - energy(&m, &y)).abs() < 1e-12 * energy(&m, &x));
        }
    }

    #[test]
    fn separating_homotopy_properties() {
        let b = ball(2);
        let alpha: f64 = 0.3;
        let a = v(&[1.0, 0.0]);
        let near = v(&[alpha.cos(), alpha.sin()]);
        let far = v(&[-1.0, 0.0]);
        let h = separate_endpoints(&[(a.clone(), near.clone()), (a.clone(), far.clone())], alpha, &b).unwrap();
        assert_eq!(h.eval(0.0, &a, &near), near);
        for k in 0..=50 {
            let tau = h.final_time() * k as f64 / 50.0;
            assert_eq!(h.eval(tau, &a, &far), far);
        }
        let mut prev = 0.0;
        for k in 0..=100 {
            let tau = h.final_time() * k as f64 / 100.0;
            let p = h.eval(tau, &a, &near);
            assert!((p.norm() - 1.0).abs() < 1e-12);
            let d = h.distance(&a, &p);
            assert!(d >= prev - 1e-12);
            prev = d;
        }
        assert!(prev >= h.delta_g() - 1e-12);
        assert!(separate_endpoints(&[], 0.0, &b).is_err());
        assert!(separate_endpoints(&[], h.delta_g(), &b).is_err());
        assert!(separate_endpoints(&[(a.clone(), near)], 0.5, &b).is_err());
    }
}
