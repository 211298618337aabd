use super::{GradSet, ParamSet};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Plain gradient step `w' = w - lr * g`.
pub fn sgd_step<T: Scalar>(params: &ParamSet<T>, grads: &GradSet<T>, lr: T) -> Result<ParamSet<T>> {
    let mut out = params.clone();
    sgd_step_in_place(&mut out, grads, lr)?;
    Ok(out)
}

pub fn sgd_step_in_place<T: Scalar>(params: &mut ParamSet<T>, grads: &GradSet<T>, lr: T) -> Result<()> {
    params.check_congruent(grads, "sgd_step")?;
    if !(lr > T::zero()) {
        return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
    }
    if let Some(name) = grads.first_non_finite() {
        return Err(Error::Divergence { tensor: name.to_string() });
    }
    params.add_scaled(grads, -lr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    fn single(v: f64) -> ParamSet<f64> {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::vector(vec![v]));
        p
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let p = single(1.5);
        assert_eq!(sgd_step(&p, &p.zeros_like(), 0.05).unwrap(), p);
    }

    #[test]
    fn one_step_arithmetic() {
        let p = sgd_step(&single(1.0), &single(2.0), 0.05).unwrap();
        assert!((p.get("w").unwrap().data()[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn steps_compose_additively() {
        let g = single(0.75);
        let twice = sgd_step(&sgd_step(&single(1.0), &g, 0.1).unwrap(), &g, 0.1).unwrap();
        let once = sgd_step(&single(1.0), &g, 0.2).unwrap();
        assert!((twice.get("w").unwrap().data()[0] - once.get("w").unwrap().data()[0]).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_names_tensor() {
        let mut g = single(1.0);
        g.insert("v", Tensor::vector(vec![f64::INFINITY]));
        let mut p = single(1.0);
        p.insert("v", Tensor::vector(vec![0.0]));
        match sgd_step(&p, &g, 0.1) {
            Err(Error::Divergence { tensor }) => assert_eq!(tensor, "v"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
