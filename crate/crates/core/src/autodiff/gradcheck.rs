use crate::error::{Error, Result};

/// Compares an analytic gradient against central differences.
///
/// Returns the maximum over the checked coordinates of
/// `|analytic - central| / max(|analytic|, |central|, 1e-12)`. When `coords` is
/// `None` every coordinate is checked.
pub fn gradient_check<F>(mut f: F, point: &[f64], analytic: &[f64], step: f64, coords: Option<&[usize]>) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if analytic.len() != point.len() {
        return Err(Error::shape(
            "gradient_check",
            "gradient length",
            point.len(),
            analytic.len(),
        ));
    }
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    let all: Vec<usize>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = (0..point.len()).collect();
            &all
        }
    };
    let mut x = point.to_vec();
    let mut worst: f64 = 0.0;
    for &i in coords {
        let orig = x[i];
        x[i] = orig + step;
        let fp = f(&x)?;
        x[i] = orig - step;
        let fm = f(&x)?;
        x[i] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite(format!("objective at coordinate {i}")));
        }
        let central = (fp - fm) / (2.0 * step);
        worst = worst.max(relative_error(analytic[i], central));
    }
    Ok(worst)
}

/// Relative error of a directional derivative `<grad, dir>` against the central
/// difference of `f` along `dir`.
pub fn directional_check<F>(mut f: F, point: &[f64], analytic: &[f64], dir: &[f64], step: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let shifted = |s: f64| -> Vec<f64> { point.iter().zip(dir).map(|(p, d)| p + s * d).collect() };
    let fp = f(&shifted(step))?;
    let fm = f(&shifted(-step))?;
    if !fp.is_finite() || !fm.is_finite() {
        return Err(Error::NonFinite("objective along direction".into()));
    }
    let central = (fp - fm) / (2.0 * step);
    let exact: f64 = analytic.iter().zip(dir).map(|(g, d)| g * d).sum();
    Ok(relative_error(exact, central))
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}
