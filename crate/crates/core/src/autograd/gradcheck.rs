//! Central finite-difference gradient verification.

use super::{AutogradError, Graph, Tensor, Var};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Flat coordinates that were perturbed.
    pub coordinates: Vec<usize>,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub max_rel_error: f64,
    /// Coordinate with the largest relative error.
    pub worst: Option<usize>,
    pub tolerance: f64,
    pub passed: bool,
}

/// `|a - n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

fn evaluate<T, E, F>(f: &F, point: &Tensor<T>, with_grad: bool) -> Result<(f64, Option<Vec<T>>), E>
where
    T: Scalar,
    E: From<AutogradError>,
    F: Fn(&mut Graph<T>, Var) -> Result<Var, E>,
{
    let mut g = Graph::new();
    let x = g.variable(point.clone());
    let loss = f(&mut g, x)?;
    let value = g
        .value(loss)
        .item()
        .ok_or_else(|| AutogradError::NonScalarLoss(g.shape(loss).to_vec()))?
        .as_f64();
    if !with_grad {
        return Ok((value, None));
    }
    g.backward(loss)?;
    let grad = g
        .grad(x)
        .map(<[T]>::to_vec)
        .unwrap_or_else(|| vec![T::zero(); point.numel()]);
    Ok((value, Some(grad)))
}

/// Compares the analytic gradient of the scalar `f` at `point` with central
/// differences of step `h` on the given flat coordinates.
pub fn grad_check_coords<T, E, F>(f: F, point: &Tensor<T>, h: f64, tolerance: f64, coordinates: &[usize]) -> Result<GradCheckReport, E>
where
    T: Scalar,
    E: From<AutogradError>,
    F: Fn(&mut Graph<T>, Var) -> Result<Var, E>,
{
    let (_, grad) = evaluate(&f, point, true)?;
    let grad = grad.expect("requested");
    let mut analytic = Vec::with_capacity(coordinates.len());
    let mut numeric = Vec::with_capacity(coordinates.len());
    let mut max_rel_error = 0.0;
    let mut worst = None;
    for &c in coordinates {
        let mut shifted = point.clone();
        let x0 = shifted.data()[c];
        shifted.data_mut()[c] = x0 + T::of(h);
        let (fp, _) = evaluate(&f, &shifted, false)?;
        shifted.data_mut()[c] = x0 - T::of(h);
        let (fm, _) = evaluate(&f, &shifted, false)?;
        let n = (fp - fm) / (2.0 * h);
        let a = grad[c].as_f64();
        let r = relative_error(a, n);
        if r > max_rel_error || worst.is_none() {
            max_rel_error = r.max(max_rel_error);
            worst = Some(c);
        }
        analytic.push(a);
        numeric.push(n);
    }
    Ok(GradCheckReport {
        coordinates: coordinates.to_vec(),
        analytic,
        numeric,
        max_rel_error,
        worst,
        tolerance,
        passed: max_rel_error < tolerance,
    })
}

/// [`grad_check_coords`] over every coordinate of `point`.
pub fn grad_check<T, E, F>(f: F, point: &Tensor<T>, h: f64, tolerance: f64) -> Result<GradCheckReport, E>
where
    T: Scalar,
    E: From<AutogradError>,
    F: Fn(&mut Graph<T>, Var) -> Result<Var, E>,
{
    let all: Vec<usize> = (0..point.numel()).collect();
    grad_check_coords(f, point, h, tolerance, &all)
}
