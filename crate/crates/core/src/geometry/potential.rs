use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Potential energy of a natural Lagrangian system, written in chart coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Potential {
    Zero,
    /// `|q|^2 / 2`
    Harmonic,
    /// `|q|^2 / 2 + epsilon * q_1^3`
    Cubic {
        epsilon: f64,
    },
}

impl Potential {
    pub fn value(&self, q: &DVector<f64>) -> f64 {
        match self {
            Potential::Zero => 0.0,
            Potential::Harmonic => 0.5 * q.norm_squared(),
            Potential::Cubic { epsilon } => 0.5 * q.norm_squared() + epsilon * q[0].powi(3),
        }
    }

    pub fn gradient(&self, q: &DVector<f64>) -> DVector<f64> {
        match self {
            Potential::Zero => DVector::zeros(q.len()),
            Potential::Harmonic => q.clone(),
            Potential::Cubic { epsilon } => {
                let mut g = q.clone();
                g[0] += 3.0 * epsilon * q[0] * q[0];
                g
            }
        }
    }

    pub fn hessian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let n = q.len();
        match self {
            Potential::Zero => DMatrix::zeros(n, n),
            Potential::Harmonic => DMatrix::identity(n, n),
            Potential::Cubic { epsilon } => {
                let mut h = DMatrix::identity(n, n);
                h[(0, 0)] += 6.0 * epsilon * q[0];
                h
            }
        }
    }

    /// Value at the chart origin, which every shipped potential uses as its well bottom.
    pub fn well_bottom(&self, dim: usize) -> f64 {
        self.value(&DVector::zeros(dim))
    }
}
