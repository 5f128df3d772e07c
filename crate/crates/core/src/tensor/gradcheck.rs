//! Central finite-difference gradient checking.
//!
//! The numeric side only ever calls the forward closure, so it stays
//! independent of the backward implementation it is used to check. Checks run
//! in `f64`; finite differences are unreliable in `f32`.

/// Numeric gradient of `f` at `x` for a subset of coordinates,
/// `(f(x + eps e_i) - f(x - eps e_i)) / (2 eps)`.
pub fn numeric_gradient_at(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x: &[f64],
    coords: &[usize],
    eps: f64,
) -> Vec<f64> {
    let mut work = x.to_vec();
    let mut out = Vec::with_capacity(coords.len());
    for &i in coords {
        let orig = work[i];
        work[i] = orig + eps;
        let fp = f(&work);
        work[i] = orig - eps;
        let fm = f(&work);
        work[i] = orig;
        out.push((fp - fm) / (2.0 * eps));
    }
    out
}

/// Numeric gradient over every coordinate of `x`.
pub fn numeric_gradient(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let coords: Vec<usize> = (0..x.len()).collect();
    numeric_gradient_at(f, x, &coords, eps)
}

/// Worst relative disagreement between two gradient vectors:
/// `max_i |a_i - b_i| / max(1, |a_i|, |b_i|)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch");
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1.0))
        .fold(0.0, f64::max)
}

/// Deterministically spreads `count` probe coordinates over `len` slots.
pub fn probe_coords(len: usize, count: usize) -> Vec<usize> {
    if len <= count {
        return (0..len).collect();
    }
    (0..count).map(|i| i * len / count).collect()
}
