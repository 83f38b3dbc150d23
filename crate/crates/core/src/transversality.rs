//! Transversality of the normal bundle of one hypersurface and the tangent bundle of another.
//!
//! Signs follow `g(A_v u, u') = -g(alpha(u, u'), v)` with outward normals, so the unit
//! sphere has `alpha(u, u) = -|u|^2 n` and `A_n = Id`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{LevelSet, MetricFamily, MetricField};

/// Relative rank tolerance.
pub const RANK_TOL: f64 = 1e-8;
const MEMBERSHIP_TOL: f64 = 1e-8;

/// Second-order data of the hypersurface `{psi = 0}` at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct HypersurfaceData {
    pub point: DVector<f64>,
    /// Unit outward normal.
    pub normal: DVector<f64>,
    /// `g`-orthonormal basis of the tangent space.
    pub basis: Vec<DVector<f64>>,
    /// Covariant Hessian of `psi`.
    pub hessian: DMatrix<f64>,
    pub grad_norm: f64,
}

impl HypersurfaceData {
    pub fn at(m: &MetricField, s: &LevelSet, p: &DVector<f64>) -> Result<Self> {
        m.check_dim(p)?;
        let value = s.value(p);
        if value.abs() > 1e-10 {
            return Err(Error::Precondition(format!("point is off the hypersurface (psi = {value:e})")));
        }
        let g = m.metric_at(p)?;
        let dpsi = s.gradient(p);
        let grad = m.inverse(p) * &dpsi;
        let grad_norm = grad.dot(&dpsi).max(0.0).sqrt();
        if !(grad_norm > 1e-10) {
            return Err(Error::DegenerateBoundary { point: p.iter().copied().collect(), grad_norm });
        }
        let normal = grad / grad_norm;
        let gamma = m.christoffel(p)?;
        let d = p.len();
        let mut hessian = s.hessian(p);
        for i in 0..d {
            for j in 0..d {
                hessian[(i, j)] -= (0..d).map(|k| gamma.get(k, i, j) * dpsi[k]).sum::<f64>();
            }
        }
        hessian = (&hessian + hessian.transpose()) * 0.5;
        let basis = g_complement(&g, std::slice::from_ref(&normal));
        Ok(Self { point: p.clone(), normal, basis, hessian, grad_norm })
    }

    fn g(&self, m: &MetricField, u: &DVector<f64>, w: &DVector<f64>) -> f64 {
        m.inner(&self.point, u, w)
    }

    /// Normal component `g(u, n)`.
    pub fn normal_part(&self, m: &MetricField, u: &DVector<f64>) -> f64 {
        self.g(m, u, &self.normal)
    }

    pub fn is_tangent(&self, m: &MetricField, u: &DVector<f64>) -> bool {
        self.normal_part(m, u).abs() <= MEMBERSHIP_TOL * m.norm(&self.point, u).max(1.0)
    }

    pub fn is_normal(&self, m: &MetricField, v: &DVector<f64>) -> bool {
        let t = v - &self.normal * self.normal_part(m, v);
        m.norm(&self.point, &t) <= MEMBERSHIP_TOL * m.norm(&self.point, v).max(1.0)
    }

    /// `alpha(u, u') = -Hess psi(u, u') / |grad psi| * n`, without membership checks.
    pub fn alpha(&self, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        &self.normal * (-(u.dot(&(&self.hessian * w))) / self.grad_norm)
    }

    /// Shape operator `A_v` applied to `u`, expanded in the tangent basis.
    pub fn shape_apply(&self, m: &MetricField, v: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(u.len());
        for e in &self.basis {
            out += e * (-self.g(m, &self.alpha(u, e), v));
        }
        out
    }
}

/// `g`-orthonormal basis of the `g`-orthogonal complement of `span(vs)`, from the coordinate axes.
fn g_complement(g: &DMatrix<f64>, vs: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let d = g.nrows();
    let ip = |a: &DVector<f64>, b: &DVector<f64>| a.dot(&(g * b));
    let mut spanned: Vec<DVector<f64>> = Vec::new();
    for v in vs {
        let mut w = v.clone();
        for q in &spanned {
            w -= q * ip(q, &w);
        }
        let n = ip(&w, &w).max(0.0).sqrt();
        if n > 1e-12 {
            spanned.push(w / n);
        }
    }
    let fixed = spanned.len();
    for k in 0..d {
        if spanned.len() == d {
            break;
        }
        let mut w = DVector::zeros(d);
        w[k] = 1.0;
        for _ in 0..2 {
            for q in &spanned {
                w -= q * ip(q, &w);
            }
        }
        let n = ip(&w, &w).max(0.0).sqrt();
        if n > 1e-6 {
            spanned.push(w / n);
        }
    }
    spanned.split_off(fixed)
}

/// Second fundamental form of `s` at `p` on tangent vectors `u`, `w`.
pub fn second_fundamental_form(
    m: &MetricField,
    s: &LevelSet,
    p: &DVector<f64>,
    u: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<DVector<f64>> {
    let h = HypersurfaceData::at(m, s, p)?;
    if !h.is_tangent(m, u) || !h.is_tangent(m, w) {
        return Err(Error::Precondition("arguments must be tangent to the hypersurface".into()));
    }
    Ok(h.alpha(u, w))
}

/// Matrix of the shape operator `A_v` in the `g`-orthonormal tangent basis of [`HypersurfaceData`].
pub fn shape_operator(m: &MetricField, s: &LevelSet, p: &DVector<f64>, v: &DVector<f64>) -> Result<DMatrix<f64>> {
    let h = HypersurfaceData::at(m, s, p)?;
    if !h.is_normal(m, v) {
        return Err(Error::Precondition("v must be normal to the hypersurface".into()));
    }
    let k = h.basis.len();
    Ok(DMatrix::from_fn(k, k, |i, j| -m.inner(p, &h.alpha(&h.basis[i], &h.basis[j]), v)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Transversal,
    NotTransversal,
    /// Within a factor 10 of the rank tolerance.
    Indeterminate,
}

impl Verdict {
    fn from_ratio(ratio: f64) -> Self {
        if ratio > 10.0 * RANK_TOL {
            Verdict::Transversal
        } else if ratio < 0.1 * RANK_TOL {
            Verdict::NotTransversal
        } else {
            Verdict::Indeterminate
        }
    }

    pub fn is_true(self) -> bool {
        self == Verdict::Transversal
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Transversal => "true",
            Verdict::NotTransversal => "false",
            Verdict::Indeterminate => "indeterminate",
        }
    }
}

/// Two hypersurfaces meeting at `p` with `v` normal to the first and tangent to the second.
#[derive(Clone, Debug)]
pub struct TransversalityProblem {
    pub s1: HypersurfaceData,
    pub s2: HypersurfaceData,
    pub v: DVector<f64>,
    /// `g`-orthonormal basis of `T_p S1 ∩ T_p S2`.
    pub intersection: Vec<DVector<f64>>,
}

impl TransversalityProblem {
    pub fn new(m: &MetricField, s1: &LevelSet, s2: &LevelSet, p: &DVector<f64>, v: &DVector<f64>) -> Result<Self> {
        let h1 = HypersurfaceData::at(m, s1, p)?;
        let h2 = HypersurfaceData::at(m, s2, p)?;
        if !(m.norm(p, v) > 0.0) {
            return Err(Error::Precondition("v must be nonzero".into()));
        }
        if !h1.is_normal(m, v) {
            return Err(Error::Precondition("v is not normal to the first hypersurface".into()));
        }
        if !h2.is_tangent(m, v) {
            return Err(Error::Precondition("v is not tangent to the second hypersurface".into()));
        }
        if h1.normal_part(m, &h2.normal).abs() > 1.0 - 1e-8 {
            return Err(Error::Precondition("hypersurfaces are not transversal at p".into()));
        }
        let g = m.metric_at(p)?;
        let intersection = g_complement(&g, &[h1.normal.clone(), h2.normal.clone()]);
        Ok(Self { s1: h1, s2: h2, v: v.clone(), intersection })
    }

    /// Spanning set of `A_v = { A^{S1}_v(w) - alpha^{S2}(w, v) : w in T_p S1 ∩ T_p S2 }`.
    pub fn subspace_av(&self, m: &MetricField) -> Vec<DVector<f64>> {
        self.intersection.iter().map(|w| self.s1.shape_apply(m, &self.v, w) - self.s2.alpha(w, &self.v)).collect()
    }

    /// Branch (a): some spanning vector of `A_v` leaves `T_p S2`; returns the witness.
    pub fn check_fixed(&self, m: &MetricField) -> (Verdict, Option<DVector<f64>>) {
        let span = self.subspace_av(m);
        let p = &self.s1.point;
        let scale = span.iter().map(|a| m.norm(p, a)).fold(0.0, f64::max);
        if span.is_empty() || scale == 0.0 {
            return (Verdict::NotTransversal, None);
        }
        let (best, size) = span
            .iter()
            .map(|a| (a, self.s2.normal_part(m, a).abs()))
            .fold((&span[0], -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        let verdict = Verdict::from_ratio(size / scale);
        let witness = verdict.is_true().then(|| best.clone());
        (verdict, witness)
    }

    /// Branch (b): `alpha^{S2}(v, v) != 0`.
    pub fn check_curvature(&self, m: &MetricField) -> Verdict {
        let p = &self.s1.point;
        let a = self.s2.alpha(&self.v, &self.v);
        let size = m.norm(p, &a) / m.inner(p, &self.v, &self.v);
        if size > 10.0 * RANK_TOL {
            Verdict::Transversal
        } else if size < 0.1 * RANK_TOL {
            Verdict::NotTransversal
        } else {
            Verdict::Indeterminate
        }
    }

    /// Data of the linear-algebra lemma in coordinates: `V1 = T_p S1`, `V2 = T_p S2`,
    /// `Vtilde2 = R v`, `A = A^{S1}_v`, `alpha = alpha^{S2}(., v)`.
    pub fn lemma_instance(&self, m: &MetricField) -> LemmaInstance {
        let cols = |vs: &[DVector<f64>]| DMatrix::from_columns(vs);
        let v1 = cols(&self.s1.basis);
        let v2 = cols(&self.s2.basis);
        let a_img: Vec<DVector<f64>> = self.s1.basis.iter().map(|u| self.s1.shape_apply(m, &self.v, u)).collect();
        let al_img: Vec<DVector<f64>> = self.s2.basis.iter().map(|u| self.s2.alpha(u, &self.v)).collect();
        let a = cols(&a_img) * pinv(&v1);
        let alpha = cols(&al_img) * pinv(&v2);
        LemmaInstance { v1, v2, vtilde2: DMatrix::from_columns(std::slice::from_ref(&self.v)), a, alpha }
    }
}

fn pinv(b: &DMatrix<f64>) -> DMatrix<f64> {
    b.clone().pseudo_inverse(1e-12).expect("pseudo-inverse with nonnegative tolerance")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    A,
    B,
    Both,
    Neither,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::A => "a",
            Branch::B => "b",
            Branch::Both => "a+b",
            Branch::Neither => "none",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedReport {
    pub verdict: Verdict,
    pub witness: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyReport {
    pub verdict: Verdict,
    pub branch: Branch,
    pub fixed: Verdict,
    pub curvature: Verdict,
}

pub fn subspace_av(
    m: &MetricField,
    s1: &LevelSet,
    s2: &LevelSet,
    p: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<Vec<DVector<f64>>> {
    Ok(TransversalityProblem::new(m, s1, s2, p, v)?.subspace_av(m))
}

/// Whether `N(S1)` and `T S2` meet transversally at `v`.
pub fn check_transversal_fixed(
    m: &MetricField,
    s1: &LevelSet,
    s2: &LevelSet,
    p: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<FixedReport> {
    let (verdict, witness) = TransversalityProblem::new(m, s1, s2, p, v)?.check_fixed(m);
    Ok(FixedReport { verdict, witness: witness.map(|w| w.iter().copied().collect()) })
}

/// Whether the normal bundles of the parallel family through `S1` meet `T S2` transversally at `v`.
pub fn check_transversal_family(
    m: &MetricField,
    s1: &LevelSet,
    s2: &LevelSet,
    p: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<FamilyReport> {
    let prob = TransversalityProblem::new(m, s1, s2, p, v)?;
    Ok(family_report(&prob, m))
}

fn family_report(prob: &TransversalityProblem, m: &MetricField) -> FamilyReport {
    let fixed = prob.check_fixed(m).0;
    let curvature = prob.check_curvature(m);
    let branch = match (fixed.is_true(), curvature.is_true()) {
        (true, true) => Branch::Both,
        (true, false) => Branch::A,
        (false, true) => Branch::B,
        (false, false) => Branch::Neither,
    };
    let verdict = if branch != Branch::Neither {
        Verdict::Transversal
    } else if fixed == Verdict::Indeterminate || curvature == Verdict::Indeterminate {
        Verdict::Indeterminate
    } else {
        Verdict::NotTransversal
    };
    FamilyReport { verdict, branch, fixed, curvature }
}

/// Data of the linear-algebra lemma in coordinates of `V = R^d`. Subspaces are column spans;
/// `a` and `alpha` are `d x d` matrices whose restrictions to `V1` and `V2` are the maps.
#[derive(Clone, Debug, PartialEq)]
pub struct LemmaInstance {
    pub v1: DMatrix<f64>,
    pub v2: DMatrix<f64>,
    pub vtilde2: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub alpha: DMatrix<f64>,
}

fn rank(m: &DMatrix<f64>) -> usize {
    if m.ncols() == 0 || m.nrows() == 0 {
        return 0;
    }
    let s = m.clone().singular_values();
    let smax = s.max();
    if !(smax > 0.0) {
        return 0;
    }
    s.iter().filter(|&&x| x > RANK_TOL * smax).count()
}

fn hstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks[0].nrows();
    let cols: Vec<DVector<f64>> = blocks.iter().flat_map(|b| b.column_iter().map(|c| c.into_owned())).collect();
    if cols.is_empty() {
        DMatrix::zeros(rows, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Orthonormal basis of the null space of `m`, from the SVD of `m` padded to a square.
fn null_space(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.ncols();
    let mut sq = DMatrix::zeros(n.max(m.nrows()), n);
    sq.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
    let svd = sq.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let smax = svd.singular_values.max();
    let cols: Vec<DVector<f64>> = (0..svd.singular_values.len())
        .filter(|&i| !(svd.singular_values[i] > RANK_TOL * smax))
        .map(|i| v_t.row(i).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LemmaOutcome {
    /// `A ⊄ V2` by the rank test.
    pub criterion: bool,
    /// `W1 + W2 = V ⊕ V` by the rank of the assembled spanning set.
    pub brute: bool,
}

impl LemmaInstance {
    pub fn dim(&self) -> usize {
        self.v1.nrows()
    }

    fn validate(&self) -> Result<()> {
        let d = self.dim();
        if rank(&hstack(&[&self.v1, &self.v2])) != d {
            return Err(Error::Usage("V1 + V2 must span V".into()));
        }
        if rank(&self.v2) != d - 1 {
            return Err(Error::Usage("V2 must have codimension 1".into()));
        }
        if self.vtilde2.ncols() > 0 && rank(&hstack(&[&self.v2, &self.vtilde2])) != d - 1 {
            return Err(Error::Usage("Vtilde2 must lie in V2".into()));
        }
        Ok(())
    }

    /// Spanning set of `A = { A w - alpha w : w in V1 ∩ V2 }`.
    pub fn subspace_a(&self) -> Vec<DVector<f64>> {
        let k1 = self.v1.ncols();
        let mut neg_v2 = self.v2.clone();
        neg_v2.neg_mut();
        let coeffs = null_space(&hstack(&[&self.v1, &neg_v2]));
        coeffs
            .column_iter()
            .map(|c| {
                let w = &self.v1 * c.rows(0, k1);
                &self.a * &w - &self.alpha * &w
            })
            .collect()
    }

    pub fn check(&self) -> Result<LemmaOutcome> {
        self.validate()?;
        let d = self.dim();
        // normal of the hyperplane V2
        let nu = null_space(&self.v2.transpose());
        let nu = nu.column(0).into_owned();
        let span = self.subspace_a();
        let scale = span.iter().map(|a| a.norm()).fold(0.0, f64::max);
        let criterion = scale > 0.0 && span.iter().any(|a| a.dot(&nu).abs() > RANK_TOL * scale);

        let mut cols: Vec<DVector<f64>> = Vec::new();
        let pair =
            |x: DVector<f64>, y: DVector<f64>| DVector::from_fn(2 * d, |i, _| if i < d { x[i] } else { y[i - d] });
        for u in self.v1.column_iter() {
            let u = u.into_owned();
            cols.push(pair(u.clone(), &self.a * &u));
        }
        for t in self.vtilde2.column_iter() {
            cols.push(pair(DVector::zeros(d), t.into_owned()));
        }
        for u in self.v2.column_iter() {
            let u = u.into_owned();
            cols.push(pair(u.clone(), &self.alpha * &u));
            cols.push(pair(DVector::zeros(d), u));
        }
        let brute = rank(&DMatrix::from_columns(&cols)) == 2 * d;
        Ok(LemmaOutcome { criterion, brute })
    }
}

fn random_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

/// Random lemma instance with `dim V = d`; when `contained`, `alpha` is built so that `A ⊂ V2`.
pub fn random_lemma_instance<R: Rng>(d: usize, contained: bool, rng: &mut R) -> LemmaInstance {
    // V2: complement of a random normal, with an orthonormal basis
    let nu = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0)).normalize();
    let mut q = DMatrix::identity(d, d);
    q.set_column(0, &nu);
    let q = q.qr().q();
    let v2 = q.columns(1, d - 1).into_owned();
    // V1: k1 >= 1 random vectors, the first with a component along nu so that V1 + V2 = V
    let k1 = rng.gen_range(1..=d);
    let mut v1 = random_matrix(d, k1, rng);
    let shift = &nu * (1.0 + rng.gen::<f64>());
    let first = v1.column(0) + shift;
    v1.set_column(0, &first);
    let kt = rng.gen_range(0..d);
    let vtilde2 = &v2 * random_matrix(d - 1, kt, rng);
    let a = &v1 * random_matrix(k1, k1, rng) * pinv(&v1);

    // values of alpha on a basis of V2 that starts with a basis of V1 ∩ V2
    let mut neg_v2 = v2.clone();
    neg_v2.neg_mut();
    let coeffs = null_space(&hstack(&[&v1, &neg_v2]));
    let shared_span: Vec<DVector<f64>> = coeffs.column_iter().map(|c| &v1 * c.rows(0, k1)).collect();
    let shared = shared_span.len();
    // orthonormal completion; picking raw columns of v2 can leave alpha badly conditioned
    let s = if shared > 0 { DMatrix::from_columns(&shared_span).qr().q() } else { DMatrix::zeros(d, 0) };
    let rest = &v2 - &s * (s.transpose() * &v2);
    let u = rest.svd(true, false).u.expect("left singular vectors");
    let mut basis: Vec<DVector<f64>> = s.column_iter().map(|c| c.into_owned()).collect();
    basis.extend(u.column_iter().take(d - 1 - shared).map(|c| c.into_owned()));
    let mut images: Vec<DVector<f64>> = Vec::with_capacity(basis.len());
    for (i, w) in basis.iter().enumerate() {
        if contained && i < shared {
            let r = &v2 * DVector::from_fn(d - 1, |_, _| rng.gen_range(-1.0..1.0));
            images.push(&a * w - r);
        } else {
            images.push(DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0)));
        }
    }
    let b = DMatrix::from_columns(&basis);
    let alpha = DMatrix::from_columns(&images) * pinv(&b);
    LemmaInstance { v1, v2, vtilde2, a, alpha }
}

/// Summary of criterion/brute-force agreement over random instances.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LemmaSweep {
    pub instances: usize,
    pub agreements: usize,
    pub transversal: usize,
}

/// Checks the lemma on `count` random instances with `dim V` in `2..=6`; half are built
/// with `A ⊂ V2`.
pub fn lemma_sweep<R: Rng>(count: usize, rng: &mut R) -> Result<LemmaSweep> {
    let mut agreements = 0;
    let mut transversal = 0;
    for k in 0..count {
        let d = rng.gen_range(2..=6);
        let inst = random_lemma_instance(d, k % 2 == 1, rng);
        let out = inst.check()?;
        if out.criterion == out.brute {
            agreements += 1;
        }
        if out.brute {
            transversal += 1;
        }
    }
    Ok(LemmaSweep { instances: count, agreements, transversal })
}

/// Named demonstration instance.
#[derive(Clone, Debug)]
pub struct DemoInstance {
    pub name: &'static str,
    pub s1: LevelSet,
    pub s2: LevelSet,
    pub p: DVector<f64>,
    pub v: DVector<f64>,
}

/// Unit sphere against the plane `y = 0` at `(1, 0, 0)` with `v = (1, 0, 0)`.
pub fn sphere_plane() -> DemoInstance {
    DemoInstance {
        name: "sphere/plane",
        s1: LevelSet::unit_ball(),
        s2: LevelSet::Plane { normal: vec![0.0, 1.0, 0.0], offset: 0.0 },
        p: DVector::from_vec(vec![1.0, 0.0, 0.0]),
        v: DVector::from_vec(vec![1.0, 0.0, 0.0]),
    }
}

/// Unit sphere against the cylinder `(x - sqrt 2)^2 + z^2 = 1` (axis along `y`) at
/// `p = (1/sqrt 2, 0, 1/sqrt 2)`, with `v = p` running around the circular direction.
pub fn sphere_cylinder() -> DemoInstance {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    DemoInstance {
        name: "sphere/cylinder",
        s1: LevelSet::unit_ball(),
        s2: LevelSet::Cylinder { center: vec![2f64.sqrt(), 0.0, 0.0], axis: vec![0.0, 1.0, 0.0], radius: 1.0 },
        p: DVector::from_vec(vec![h, 0.0, h]),
        v: DVector::from_vec(vec![h, 0.0, h]),
    }
}

/// One line of the demonstration table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoRow {
    pub instance: String,
    pub branch: Branch,
    pub criterion: Verdict,
    pub family: Verdict,
    /// Brute-force rank oracle for the fixed-pair condition.
    pub brute: bool,
}

pub fn demo_row(m: &MetricField, inst: &DemoInstance) -> Result<DemoRow> {
    let prob = TransversalityProblem::new(m, &inst.s1, &inst.s2, &inst.p, &inst.v)?;
    let fam = family_report(&prob, m);
    let brute = prob.lemma_instance(m).check()?.brute;
    Ok(DemoRow {
        instance: inst.name.to_string(),
        branch: fam.branch,
        criterion: fam.fixed,
        family: fam.verdict,
        brute,
    })
}

/// Nearby O-T configuration for a constant metric: `x` on `S1` and a distance `t` such that
/// `q = x + t n(x)` lies on `S2` and the unit normal `n(x)` is tangent to `S2` at `q`.
///
/// Lines are the geodesics of a constant metric, so `q` lies on the parallel surface
/// `S1(t)` and `n(x)` is its normal there. Solved by minimum-norm Newton steps in
/// `(tangent offset of x, t)`, starting from `x = p0`, `t = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct OtPoint {
    pub x: DVector<f64>,
    pub t: f64,
    pub q: DVector<f64>,
    pub v: DVector<f64>,
}

pub fn locate_ot_point(m: &MetricField, s1: &LevelSet, s2: &LevelSet, p0: &DVector<f64>) -> Result<OtPoint> {
    if !matches!(m.family(), MetricFamily::Euclidean | MetricFamily::Constant { .. }) {
        return Err(Error::Usage("O-T point search needs a constant metric".into()));
    }
    let g = m.metric_at(p0)?;
    let basis = g_complement(&g, &[s1.gradient(p0)]);
    let k = basis.len();
    let unpack = |z: &DVector<f64>| -> Option<OtPoint> {
        let mut dir = p0.clone();
        for (j, e) in basis.iter().enumerate() {
            dir += e * z[j];
        }
        let x = &dir * s1.ray_root(&dir)? / dir.norm();
        let dpsi = s1.gradient(&x);
        let grad = m.inverse(&x) * &dpsi;
        let v = &grad / grad.dot(&dpsi).sqrt();
        let t = z[k];
        let q = &x + &v * t;
        Some(OtPoint { x, t, q, v })
    };
    let residual = |z: &DVector<f64>| -> Option<DVector<f64>> {
        let o = unpack(z)?;
        let d2 = s2.gradient(&o.q);
        let n2 = m.inverse(&o.q) * &d2;
        Some(DVector::from_vec(vec![s2.value(&o.q), o.v.dot(&d2) / n2.dot(&d2).sqrt()]))
    };
    let mut z = DVector::zeros(k + 1);
    for _ in 0..50 {
        let r = residual(&z).ok_or_else(|| Error::Numeric("O-T search left the first hypersurface".into()))?;
        if r.norm() < 1e-13 {
            return unpack(&z).ok_or_else(|| Error::Numeric("O-T search left the first hypersurface".into()));
        }
        let h = 1e-7;
        let mut jac = DMatrix::zeros(2, k + 1);
        for j in 0..=k {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[j] += h;
            zm[j] -= h;
            let (Some(rp), Some(rm)) = (residual(&zp), residual(&zm)) else {
                return Err(Error::Numeric("O-T search left the first hypersurface".into()));
            };
            jac.set_column(j, &((rp - rm) / (2.0 * h)));
        }
        z -= pinv(&jac) * r;
    }
    Err(Error::Numeric("O-T point search did not converge".into()))
}

/// Re-evaluates `inst` under `count` random constant metrics `I + scale * P` and counts the
/// metrics that still have a nearby O-T configuration whose normal direction `v` has
/// `alpha^{S2}(v, v) != 0`, i.e. where the family criterion holds through branch (b).
pub fn stability_probe<R: Rng>(inst: &DemoInstance, scale: f64, count: usize, rng: &mut R) -> Result<usize> {
    let d = inst.p.len();
    let mut kept = 0;
    for _ in 0..count {
        let p = random_matrix(d, d, rng);
        let g = DMatrix::identity(d, d) + (&p + p.transpose()) * (0.5 * scale);
        let m = MetricField::constant(g)?;
        let Ok(ot) = locate_ot_point(&m, &inst.s1, &inst.s2, &inst.p) else {
            continue;
        };
        let h2 = HypersurfaceData::at(&m, &inst.s2, &ot.q)?;
        if !h2.is_tangent(&m, &ot.v) || (&ot.q - &inst.p).norm() > 100.0 * scale {
            continue;
        }
        let curvature = m.norm(&ot.q, &h2.alpha(&ot.v, &ot.v)) / m.inner(&ot.q, &ot.v, &ot.v);
        if curvature > 10.0 * RANK_TOL {
            kept += 1;
        }
    }
    Ok(kept)
}
