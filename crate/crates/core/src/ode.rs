//! Fixed-step explicit Runge-Kutta steps for autonomous first-order systems.

use nalgebra::DVector;

/// Classical fourth-order step.
pub fn rk4_step<F>(f: &F, y: &DVector<f64>, h: f64) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let k1 = f(y);
    let k2 = f(&(y + &k1 * (0.5 * h)));
    let k3 = f(&(y + &k2 * (0.5 * h)));
    let k4 = f(&(y + &k3 * h));
    y + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0)
}

/// Kutta's 3/8-rule fourth-order step; shares no stages with [`rk4_step`].
pub fn rk38_step<F>(f: &F, y: &DVector<f64>, h: f64) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let k1 = f(y);
    let k2 = f(&(y + &k1 * (h / 3.0)));
    let k3 = f(&(y + &k1 * (-h / 3.0) + &k2 * h));
    let k4 = f(&(y + (&k1 - &k2 + &k3) * h));
    y + (k1 + (k2 + k3) * 3.0 + k4) * (h / 8.0)
}

/// Splits a state `(x, v)` of length `2d` into its halves.
pub fn split(y: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let d = y.len() / 2;
    (y.rows(0, d).into_owned(), y.rows(d, d).into_owned())
}

pub fn join(x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    let d = x.len();
    DVector::from_fn(2 * d, |i, _| if i < d { x[i] } else { v[i - d] })
}
