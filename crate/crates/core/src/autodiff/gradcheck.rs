use alloc::vec::Vec;

use crate::{Error, Real, Result};

/// Absolute gradient magnitude below which errors are measured against this
/// floor instead of the gradient itself, so parameters with near-zero
/// gradients do not report huge relative errors from truncation noise.
pub const RELATIVE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub max_rel_error: f64,
    pub mean_rel_error: f64,
    pub worst_index: usize,
    pub passed: bool,
}

/// Relative error with the magnitude floored at [`RELATIVE_FLOOR`].
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
    (analytic - numeric).abs() / scale
}

/// Compares `analytic` against central differences of `f` with the given
/// step, one parameter at a time. Passes iff the max relative error is at
/// most `tol`.
pub fn finite_diff_check<T: Real>(
    mut f: impl FnMut(&[T]) -> Result<T>,
    params: &[T],
    analytic: &[T],
    step: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    if analytic.len() != params.len() {
        return Err(Error::Dimensions(alloc::format!(
            "{} analytic gradients for {} parameters",
            analytic.len(),
            params.len()
        )));
    }
    let mut p = params.to_vec();
    let mut numeric = Vec::with_capacity(params.len());
    let mut rel = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = p[i];
        p[i] = orig + T::of(step);
        let plus = f(&p)?;
        p[i] = orig - T::of(step);
        let minus = f(&p)?;
        p[i] = orig;
        if !plus.is_finite() || !minus.is_finite() || !analytic[i].is_finite() {
            return Err(Error::NonFinite {
                what: "finite-difference objective",
                index: i,
            });
        }
        let n = (plus.as_f64() - minus.as_f64()) / (2.0 * step);
        rel.push(relative_error(analytic[i].as_f64(), n));
        numeric.push(n);
    }
    let (worst_index, max_rel_error) =
        rel.iter()
            .copied()
            .enumerate()
            .fold((0, 0.0), |acc, (i, e)| if e > acc.1 { (i, e) } else { acc });
    let mean_rel_error = if rel.is_empty() {
        0.0
    } else {
        rel.iter().sum::<f64>() / rel.len() as f64
    };
    Ok(GradCheckReport {
        analytic: analytic.iter().map(|a| a.as_f64()).collect(),
        numeric,
        max_rel_error,
        mean_rel_error,
        worst_index,
        passed: max_rel_error <= tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn quadratic_is_exact() {
        let r = finite_diff_check(|p: &[f64]| Ok(p[0] * p[0]), &[3.0], &[6.0], 1e-3, 1e-6).unwrap();
        assert!((r.numeric[0] - 6.0).abs() < 1e-6);
        assert!(r.passed);
    }

    #[test]
    fn constant_has_zero_gradient() {
        let r = finite_diff_check(|_: &[f64]| Ok(4.0), &[1.0, 2.0], &[0.0, 0.0], 1e-3, 1e-9).unwrap();
        assert_eq!(r.numeric, vec![0.0, 0.0]);
        assert!(r.passed);
    }

    #[test]
    fn wrong_gradient_fails() {
        let r = finite_diff_check(|p: &[f64]| Ok(p[0] * p[0]), &[3.0], &[5.0], 1e-3, 1e-4).unwrap();
        assert!(!r.passed);
        assert_eq!(r.worst_index, 0);
    }

    #[test]
    fn non_finite_objective_names_parameter() {
        let err = finite_diff_check(
            |p: &[f64]| Ok(if p[1] > 1.0 { f64::NAN } else { 0.0 }),
            &[0.0, 1.0],
            &[0.0, 0.0],
            1e-3,
            1e-4,
        )
        .unwrap_err();
        assert_eq!(
            err,
            Error::NonFinite {
                what: "finite-difference objective",
                index: 1
            }
        );
    }
}
