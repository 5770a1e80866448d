use super::tensor::ParamSet;
use crate::error::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-5;

/// Worst coordinate found by [`grad_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates: usize,
}

/// Compares the analytic gradient returned by `loss_fn` against central
/// differences, coordinate by coordinate. The error of a coordinate is
/// `|a - fd| / (|fd| + 1e-8)`; the maximum over all coordinates is reported.
pub fn grad_check<F>(loss_fn: F, params: &ParamSet, h: f64) -> Result<GradCheckReport>
where
    F: Fn(&ParamSet) -> Result<(f64, ParamSet)>,
{
    let (loss, analytic) = loss_fn(params)?;
    if !loss.is_finite() {
        return Err(Error::NumericalFailure(format!("loss is {loss}")));
    }
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        coordinates: 0,
    };
    let mut probe = params.clone();
    for (name, tensor) in params.iter() {
        let grad = analytic.try_get(name);
        for idx in 0..tensor.len() {
            let orig = tensor.data()[idx];
            probe.get_mut(name).data_mut()[idx] = orig + h;
            let (plus, _) = loss_fn(&probe)?;
            probe.get_mut(name).data_mut()[idx] = orig - h;
            let (minus, _) = loss_fn(&probe)?;
            probe.get_mut(name).data_mut()[idx] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NumericalFailure(format!(
                    "loss not finite when perturbing {name}[{idx}]"
                )));
            }
            let numeric = (plus - minus) / (2.0 * h);
            let a = grad.map_or(0.0, |g| g.data()[idx]);
            let err = (a - numeric).abs() / (numeric.abs() + 1e-8);
            report.coordinates += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_param = name.clone();
                report.worst_index = idx;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
