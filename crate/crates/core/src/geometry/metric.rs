use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::potential::Potential;
use crate::error::{Error, Result};

/// Radial profile `f(r)` of a conformal metric `f(|x|)^2 Id`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    /// `f(r) = sum_k coeffs[k] r^k`
    Polynomial { coeffs: Vec<f64> },
    /// `f(r) = exp(c r^2)`
    ExpQuadratic { c: f64 },
}

impl Profile {
    pub fn value(&self, r: f64) -> f64 {
        match self {
            Profile::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * r + c),
            Profile::ExpQuadratic { c } => (c * r * r).exp(),
        }
    }

    pub fn derivative(&self, r: f64) -> f64 {
        match self {
            Profile::Polynomial { coeffs } => {
                coeffs.iter().enumerate().skip(1).rev().fold(0.0, |acc, (k, c)| acc * r + k as f64 * c)
            }
            Profile::ExpQuadratic { c } => 2.0 * c * r * (c * r * r).exp(),
        }
    }

    /// `f'(r) / r`, continued to `f''(0)` at the origin.
    fn derivative_over_r(&self, r: f64) -> f64 {
        if r > 1e-12 {
            return self.derivative(r) / r;
        }
        match self {
            Profile::Polynomial { coeffs } => 2.0 * coeffs.get(2).copied().unwrap_or(0.0),
            Profile::ExpQuadratic { c } => 2.0 * c,
        }
    }
}

/// How first derivatives of the metric are obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DerivativeMode {
    Analytic,
    /// Central differences with the given step.
    FiniteDifference {
        step: f64,
    },
}

pub const DEFAULT_FD_STEP: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub enum MetricFamily {
    Euclidean,
    RadialConformal {
        profile: Profile,
    },
    /// `f(r)^2 (Id + amplitude * S(x))` with `S(x) = e1 e1^T + x_1 e2 e2^T`.
    PerturbedRadial {
        profile: Profile,
        amplitude: f64,
    },
    Constant {
        matrix: DMatrix<f64>,
    },
    /// Jacobi metric `(E - V(x)) g_base(x)`.
    Jacobi {
        base: Box<MetricField>,
        potential: Potential,
        energy: f64,
    },
}

/// Metric tensor on a chart of `R^N`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricField {
    dim: usize,
    family: MetricFamily,
    derivatives: DerivativeMode,
}

/// Metric value and its first partial derivatives at a point.
#[derive(Clone, Debug)]
pub struct MetricJet {
    pub g: DMatrix<f64>,
    /// `dg[k]` is `d g / d x_k`.
    pub dg: Vec<DMatrix<f64>>,
}

/// Christoffel symbols of the second kind, stored as `gamma[k][i][j]` flattened.
#[derive(Clone, Debug, PartialEq)]
pub struct Christoffel {
    dim: usize,
    data: Vec<f64>,
}

impl Christoffel {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![0.0; dim * dim * dim] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[(k * self.dim + i) * self.dim + j]
    }

    fn set(&mut self, k: usize, i: usize, j: usize, value: f64) {
        let d = self.dim;
        self.data[(k * d + i) * d + j] = value;
    }

    /// `Gamma^k_ij u^i w^j`
    pub fn contract(&self, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        let d = self.dim;
        DVector::from_fn(d, |k, _| {
            let mut acc = 0.0;
            for i in 0..d {
                for j in 0..d {
                    acc += self.get(k, i, j) * u[i] * w[j];
                }
            }
            acc
        })
    }
}

impl MetricField {
    pub fn euclidean(dim: usize) -> Self {
        Self { dim, family: MetricFamily::Euclidean, derivatives: DerivativeMode::Analytic }
    }

    pub fn radial_conformal(dim: usize, profile: Profile) -> Self {
        Self { dim, family: MetricFamily::RadialConformal { profile }, derivatives: DerivativeMode::Analytic }
    }

    pub fn perturbed_radial(dim: usize, profile: Profile, amplitude: f64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Config("perturbed radial metric needs dim >= 2".into()));
        }
        Ok(Self {
            dim,
            family: MetricFamily::PerturbedRadial { profile, amplitude },
            derivatives: DerivativeMode::Analytic,
        })
    }

    pub fn constant(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Config("constant metric must be square".into()));
        }
        let dim = matrix.nrows();
        let sym = (&matrix + matrix.transpose()) * 0.5;
        if sym.clone().cholesky().is_none() {
            return Err(Error::Config("constant metric is not positive definite".into()));
        }
        Ok(Self { dim, family: MetricFamily::Constant { matrix: sym }, derivatives: DerivativeMode::Analytic })
    }

    pub fn jacobi(base: MetricField, potential: Potential, energy: f64) -> Self {
        Self {
            dim: base.dim,
            family: MetricFamily::Jacobi { base: Box::new(base), potential, energy },
            derivatives: DerivativeMode::Analytic,
        }
    }

    pub fn with_derivatives(mut self, mode: DerivativeMode) -> Self {
        self.derivatives = mode;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn family(&self) -> &MetricFamily {
        &self.family
    }

    pub fn derivative_mode(&self) -> DerivativeMode {
        self.derivatives
    }

    pub fn is_euclidean(&self) -> bool {
        matches!(self.family, MetricFamily::Euclidean)
    }

    /// `g(x)` without the positive-definiteness check.
    pub fn matrix(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let d = self.dim;
        match &self.family {
            MetricFamily::Euclidean => DMatrix::identity(d, d),
            MetricFamily::RadialConformal { profile } => {
                let f = profile.value(x.norm());
                DMatrix::identity(d, d) * (f * f)
            }
            MetricFamily::PerturbedRadial { profile, amplitude } => {
                let f = profile.value(x.norm());
                let mut m = DMatrix::identity(d, d);
                m[(0, 0)] += amplitude;
                m[(1, 1)] += amplitude * x[0];
                m * (f * f)
            }
            MetricFamily::Constant { matrix } => matrix.clone(),
            MetricFamily::Jacobi { base, potential, energy } => base.matrix(x) * (energy - potential.value(x)),
        }
    }

    /// `g(x)`, rejecting points where the tensor is not positive definite.
    pub fn metric_at(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(x)?;
        let g = self.matrix(x);
        if g.clone().cholesky().is_none() {
            return Err(Error::Config(format!("metric is not positive definite at {:?}", x.as_slice())));
        }
        Ok(g)
    }

    pub fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Usage(format!("point of dim {} for metric of dim {}", x.len(), self.dim)));
        }
        Ok(())
    }

    pub fn inner(&self, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> f64 {
        match &self.family {
            MetricFamily::Euclidean => u.dot(w),
            _ => u.dot(&(self.matrix(x) * w)),
        }
    }

    pub fn norm(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        self.inner(x, u, u).max(0.0).sqrt()
    }

    pub fn inverse(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let g = self.matrix(x);
        match &self.family {
            MetricFamily::Euclidean => g,
            MetricFamily::RadialConformal { .. } => g.map(|v| if v != 0.0 { 1.0 / v } else { 0.0 }),
            _ => g.try_inverse().unwrap_or_else(|| DMatrix::from_element(self.dim, self.dim, f64::NAN)),
        }
    }

    /// Metric and its first derivatives, analytic or by central differences.
    pub fn jet(&self, x: &DVector<f64>) -> MetricJet {
        match self.derivatives {
            DerivativeMode::Analytic => self.analytic_jet(x),
            DerivativeMode::FiniteDifference { step } => self.fd_jet(x, step),
        }
    }

    fn fd_jet(&self, x: &DVector<f64>, h: f64) -> MetricJet {
        let g = self.matrix(x);
        let dg = (0..self.dim)
            .map(|k| {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += h;
                xm[k] -= h;
                (self.matrix(&xp) - self.matrix(&xm)) / (2.0 * h)
            })
            .collect();
        MetricJet { g, dg }
    }

    fn analytic_jet(&self, x: &DVector<f64>) -> MetricJet {
        let d = self.dim;
        match &self.family {
            MetricFamily::Euclidean | MetricFamily::Constant { .. } => {
                MetricJet { g: self.matrix(x), dg: vec![DMatrix::zeros(d, d); d] }
            }
            MetricFamily::RadialConformal { profile } => {
                let r = x.norm();
                let f = profile.value(r);
                let s = 2.0 * f * profile.derivative_over_r(r);
                let id = DMatrix::<f64>::identity(d, d);
                MetricJet { g: &id * (f * f), dg: (0..d).map(|k| &id * (s * x[k])).collect() }
            }
            MetricFamily::PerturbedRadial { profile, amplitude } => {
                let r = x.norm();
                let f = profile.value(r);
                let s = 2.0 * f * profile.derivative_over_r(r);
                let mut base = DMatrix::identity(d, d);
                base[(0, 0)] += amplitude;
                base[(1, 1)] += amplitude * x[0];
                let dg = (0..d)
                    .map(|k| {
                        let mut m = &base * (s * x[k]);
                        if k == 0 {
                            m[(1, 1)] += f * f * amplitude;
                        }
                        m
                    })
                    .collect();
                MetricJet { g: base * (f * f), dg }
            }
            MetricFamily::Jacobi { base, potential, energy } => {
                let inner = base.jet(x);
                let factor = energy - potential.value(x);
                let grad_v = potential.gradient(x);
                let dg = (0..d).map(|k| &inner.dg[k] * factor - &inner.g * grad_v[k]).collect();
                MetricJet { g: inner.g * factor, dg }
            }
        }
    }

    /// Christoffel symbols of the Levi-Civita connection at `x`.
    pub fn christoffel(&self, x: &DVector<f64>) -> Result<Christoffel> {
        if let DerivativeMode::FiniteDifference { step } = self.derivatives {
            let scale = 1.0 + x.amax();
            if !(step.is_finite() && step > 1e-12 * scale) {
                return Err(Error::Numeric(format!("finite-difference step {step:e} underflows")));
            }
        }
        Ok(self.christoffel_unchecked(x))
    }

    pub(crate) fn christoffel_unchecked(&self, x: &DVector<f64>) -> Christoffel {
        let d = self.dim;
        if matches!(self.family, MetricFamily::Euclidean | MetricFamily::Constant { .. })
            && self.derivatives == DerivativeMode::Analytic
        {
            return Christoffel::zeros(d);
        }
        let jet = self.jet(x);
        let ginv = jet.g.clone().try_inverse().unwrap_or_else(|| DMatrix::from_element(d, d, f64::NAN));
        // first kind: Gamma_{l,ij} = 1/2 (d_i g_lj + d_j g_li - d_l g_ij)
        let mut first = vec![0.0; d * d * d];
        for l in 0..d {
            for i in 0..d {
                for j in i..d {
                    let v = 0.5 * (jet.dg[i][(l, j)] + jet.dg[j][(l, i)] - jet.dg[l][(i, j)]);
                    first[(l * d + i) * d + j] = v;
                    first[(l * d + j) * d + i] = v;
                }
            }
        }
        let mut out = Christoffel::zeros(d);
        for k in 0..d {
            for i in 0..d {
                for j in i..d {
                    let mut acc = 0.0;
                    for l in 0..d {
                        acc += ginv[(k, l)] * first[(l * d + i) * d + j];
                    }
                    out.set(k, i, j, acc);
                    out.set(k, j, i, acc);
                }
            }
        }
        out
    }

    /// Samples `points` and returns a configuration error at the first non-SPD value.
    pub fn validate_on<'a>(&self, points: impl IntoIterator<Item = &'a DVector<f64>>) -> Result<()> {
        for p in points {
            self.metric_at(p)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn euclidean_is_identity() {
        let m = MetricField::euclidean(2);
        assert_eq!(m.metric_at(&v(&[0.3, 0.4])).unwrap(), DMatrix::identity(2, 2));
    }

    #[test]
    fn polynomial_profile_at_unit_radius() {
        let m = MetricField::radial_conformal(2, Profile::Polynomial { coeffs: vec![1.0, 0.0, 1.0] });
        let g = m.metric_at(&v(&[1.0, 0.0])).unwrap();
        assert!((g - DMatrix::identity(2, 2) * 4.0).amax() < 1e-15);
    }

    #[test]
    fn zero_perturbation_matches_radial() {
        let profile = Profile::Polynomial { coeffs: vec![1.0, 0.0, 1.0] };
        let radial = MetricField::radial_conformal(2, profile.clone());
        let perturbed = MetricField::perturbed_radial(2, profile, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let x = v(&[rng.gen_range(-0.7..0.7), rng.gen_range(-0.7..0.7)]);
            assert!((radial.matrix(&x) - perturbed.matrix(&x)).amax() < 1e-15);
            let (a, b) = (radial.christoffel(&x).unwrap(), perturbed.christoffel(&x).unwrap());
            assert!(a.data.iter().zip(&b.data).all(|(p, q)| (p - q).abs() < 1e-14));
        }
    }

    #[test]
    fn non_spd_is_a_configuration_error() {
        let m = MetricField::perturbed_radial(2, Profile::Polynomial { coeffs: vec![1.0] }, -2.0).unwrap();
        assert!(matches!(m.metric_at(&v(&[0.0, 0.0])), Err(Error::Config(_))));
    }

    #[test]
    fn euclidean_christoffel_vanishes() {
        let m = MetricField::euclidean(3);
        let c = m.christoffel(&v(&[0.1, -0.2, 0.3])).unwrap();
        assert!(c.data.iter().all(|&x| x == 0.0));
    }

    // Conformal metric e^{2 sigma} Id: Gamma^k_ij = d_ik s_j + d_jk s_i - d_ij s_k with s = grad sigma.
    fn conformal_oracle(s: &[f64], k: usize, i: usize, j: usize) -> f64 {
        let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        delta(i, k) * s[j] + delta(j, k) * s[i] - delta(i, j) * s[k]
    }

    #[test]
    fn exp_profile_matches_conformal_formula() {
        let m = MetricField::radial_conformal(2, Profile::ExpQuadratic { c: 0.5 });
        let x = v(&[0.5, 0.0]);
        // f = exp(r^2/2) => sigma = r^2/2, grad sigma = x
        let c = m.christoffel(&x).unwrap();
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    assert!((c.get(k, i, j) - conformal_oracle(x.as_slice(), k, i, j)).abs() < 1e-6);
                }
            }
        }
        let fd = m.clone().with_derivatives(DerivativeMode::FiniteDifference { step: DEFAULT_FD_STEP });
        let c_fd = fd.christoffel(&x).unwrap();
        assert!(c.data.iter().zip(&c_fd.data).all(|(p, q)| (p - q).abs() < 1e-8));
    }

    #[test]
    fn christoffel_lower_symmetry_and_fd_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let profile = Profile::Polynomial { coeffs: vec![1.0, 0.0, 1.0] };
        let metrics = [
            MetricField::perturbed_radial(2, profile.clone(), 0.05).unwrap(),
            MetricField::perturbed_radial(3, profile, 0.1).unwrap(),
            MetricField::jacobi(MetricField::euclidean(2), Potential::Cubic { epsilon: 0.01 }, 0.5),
        ];
        for m in &metrics {
            let fd = m.clone().with_derivatives(DerivativeMode::FiniteDifference { step: DEFAULT_FD_STEP });
            for _ in 0..100 {
                let x = DVector::from_fn(m.dim(), |_, _| rng.gen_range(-0.5..0.5));
                let c = m.christoffel(&x).unwrap();
                let c_fd = fd.christoffel(&x).unwrap();
                for k in 0..m.dim() {
                    for i in 0..m.dim() {
                        for j in 0..m.dim() {
                            assert_eq!(c.get(k, i, j), c.get(k, j, i));
                            assert!((c.get(k, i, j) - c_fd.get(k, i, j)).abs() < 1e-8);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn fd_step_underflow_is_reported() {
        let m = MetricField::radial_conformal(2, Profile::ExpQuadratic { c: 0.5 })
            .with_derivatives(DerivativeMode::FiniteDifference { step: 1e-300 });
        assert!(matches!(m.christoffel(&v(&[0.1, 0.1])), Err(Error::Numeric(_))));
    }

    #[test]
    fn jacobi_factor_and_positivity() {
        let base = MetricField::euclidean(2);
        let flat = MetricField::jacobi(base.clone(), Potential::Zero, 1.0);
        assert_eq!(flat.matrix(&v(&[0.2, 0.1])), DMatrix::identity(2, 2));
        let harmonic = MetricField::jacobi(base, Potential::Harmonic, 0.5);
        let x = v(&[0.3, 0.4]);
        let expected = 0.5 - 0.5 * x.norm_squared();
        assert!((harmonic.matrix(&x)[(0, 0)] - expected).abs() < 1e-15);
        assert!(harmonic.metric_at(&v(&[1.2, 0.0])).is_err());
    }
}
