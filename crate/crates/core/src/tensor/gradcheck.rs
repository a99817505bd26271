use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Symmetric relative error with a floor on the denominator.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares the autodiff gradient of a scalar function against central
/// finite differences and returns the worst component-wise relative error.
///
/// `f` receives a fresh tape and the input registered as a grad-tracking
/// leaf; it must build the same graph on every call.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> Result<Var<'t>>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::invalid(format!("eps {eps} outside [1e-7, 1e-3]")));
    }
    let analytic = {
        let tape = Tape::new();
        let leaf = tape.leaf(x.clone(), true);
        let y = f(&tape, leaf)?;
        tape.backward(y)?;
        tape.grad(leaf)
            .ok_or_else(|| Error::Autodiff("input received no gradient".into()))?
    };
    let eval = |data: Vec<f64>| -> Result<f64> {
        let tape = Tape::new();
        let leaf = tape.leaf(Tensor::new(x.shape().to_vec(), data)?, false);
        let y = f(&tape, leaf)?;
        y.item()
            .ok_or_else(|| Error::Autodiff("function output is not scalar".into()))
    };
    let mut worst: f64 = 0.0;
    for i in 0..x.numel() {
        let mut plus = x.data().to_vec();
        let mut minus = x.data().to_vec();
        plus[i] += eps;
        minus[i] -= eps;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        worst = worst.max(relative_error(analytic.data()[i], numeric));
    }
    Ok(worst)
}
