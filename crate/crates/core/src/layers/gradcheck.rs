//! Central finite differences and the error measure used to compare them
//! with analytic gradients.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate `i`.
pub fn finite_difference_grad(
    mut f: impl FnMut(&Tensor) -> f64,
    x: &Tensor,
    step: f64,
) -> Result<Tensor> {
    finite_difference_at(&mut f, x, step, &(0..x.len()).collect::<Vec<_>>())
        .map(|vals| Tensor::new(x.shape(), vals).expect("one value per coordinate"))
}

/// Central differences at a subset of coordinates.
pub fn finite_difference_at(
    mut f: impl FnMut(&Tensor) -> f64,
    x: &Tensor,
    step: f64,
    coords: &[usize],
) -> Result<Vec<f64>> {
    if !(step > 0.0) {
        return Err(Error::Parameter(format!(
            "finite-difference step must be > 0, got {step}"
        )));
    }
    let mut probe = x.clone();
    let mut out = Vec::with_capacity(coords.len());
    for &i in coords {
        let orig = probe.as_slice()[i];
        probe.as_mut_slice()[i] = orig + step;
        let plus = f(&probe);
        probe.as_mut_slice()[i] = orig - step;
        let minus = f(&probe);
        probe.as_mut_slice()[i] = orig;
        out.push((plus - minus) / (2.0 * step));
    }
    Ok(out)
}

/// Below this magnitude a gradient counts as vanishing, and differences are
/// measured against this floor instead of the (roundoff-sized) values.
/// Central differences of an O(1) loss at step 1e-5 carry roughly 1e-11 of
/// cancellation noise, so the floor sits well above that and well below
/// any gradient that matters.
pub const GRADIENT_SCALE_FLOOR: f64 = 1e-6;

/// `max|a - b| / max(max|a|, max|b|, GRADIENT_SCALE_FLOOR)`.
///
/// The floor matters for gradients that are zero by construction, such as
/// a convolution bias followed by batchnorm: there the analytic value is
/// pure roundoff (~1e-17) and an unfloored ratio would report 1.
pub fn relative_error(analytic: &Tensor, numeric: &Tensor) -> f64 {
    relative_error_slices(analytic.as_slice(), numeric.as_slice())
}

pub fn relative_error_slices(a: &[f64], b: &[f64]) -> f64 {
    relative_error_with_floor(a, b, GRADIENT_SCALE_FLOOR)
}

/// [`relative_error_slices`] with an explicit floor, for losses whose
/// finite differences are noisier than a single layer's.
pub fn relative_error_with_floor(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len(), "relative_error length mismatch");
    let diff = a
        .iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let scale = a.iter().chain(b).fold(floor, |m, v| m.max(v.abs()));
    diff / scale
}
