use super::{GradSet, ParamSet};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Central-difference gradient check.
///
/// Returns the maximum over all coordinates of
/// `|g_fd - g_an| / max(1e-8, |g_fd| + |g_an|)`.
pub fn finite_diff_check<T, F>(mut loss_fn: F, params: &ParamSet<T>, analytic: &GradSet<T>, eps: T) -> Result<T>
where
    T: Scalar,
    F: FnMut(&ParamSet<T>) -> Result<T>,
{
    params.check_congruent(analytic, "finite_diff_check")?;
    let base = params.flatten();
    let grads = analytic.flatten();
    let floor = T::lit(1e-8);
    let two_eps = eps + eps;
    let mut worst = T::zero();
    let mut probe = base.clone();
    for i in 0..base.len() {
        probe[i] = base[i] + eps;
        let plus = loss_fn(&params.unflatten(&probe)?)?;
        probe[i] = base[i] - eps;
        let minus = loss_fn(&params.unflatten(&probe)?)?;
        probe[i] = base[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numeric(format!("loss at coordinate {i}")));
        }
        let fd = (plus - minus) / two_eps;
        let an = grads[i];
        let rel = (fd - an).abs() / floor.max(fd.abs() + an.abs());
        if rel > worst {
            worst = rel;
        }
    }
    Ok(worst)
}
