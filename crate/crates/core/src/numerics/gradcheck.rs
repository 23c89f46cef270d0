//! Central finite-difference validation of analytic gradients.

use super::tensor::{Gradients, ParameterSet};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Parameter name and coordinate of the worst disagreement.
    pub worst: Option<(String, usize)>,
    pub coordinates: usize,
}

/// Compare the analytic gradient returned by `loss` against central
/// differences over every coordinate of every distinct storage slot. The
/// five-point stencil keeps truncation error at `O(ε⁴)`, so a fairly large
/// `ε` (around `1e-2`) can be used and round-off stays small even for tiny
/// gradient entries.
///
/// Relative error is `|g_ad − g_fd| / max(|g_ad|, |g_fd|, 1e-8)`.
pub fn gradient_check<F>(loss: F, params: &ParameterSet, epsilon: f64) -> Result<GradCheckReport>
where
    F: Fn(&ParameterSet) -> Result<(f64, Gradients)>,
{
    let (base, analytic) = loss(params)?;
    if !base.is_finite() {
        return Err(Error::InvalidInput(format!("non-finite loss {base}")));
    }

    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        coordinates: 0,
    };
    for id in params.ids() {
        if !params.tensor(id).requires_grad() {
            continue;
        }
        for k in 0..params.tensor(id).len() {
            let original = params.tensor(id).values()[k];
            let mut at = |offset: f64| -> Result<f64> {
                probe.tensor_mut(id).values_mut()[k] = original + offset;
                let (value, _) = loss(&probe)?;
                if !value.is_finite() {
                    return Err(Error::InvalidInput(format!(
                        "non-finite loss while perturbing `{}`[{k}]",
                        params.primary_name(id)
                    )));
                }
                Ok(value)
            };
            let (p2, p1, m1, m2) = (at(2.0 * epsilon)?, at(epsilon)?, at(-epsilon)?, at(-2.0 * epsilon)?);
            probe.tensor_mut(id).values_mut()[k] = original;

            let numeric = (m2 - p2 + 8.0 * (p1 - m1)) / (12.0 * epsilon);
            let ad = analytic.get(id)[k];
            let denom = ad.abs().max(numeric.abs()).max(1e-8);
            let rel = (ad - numeric).abs() / denom;
            report.coordinates += 1;
            if rel > report.max_relative_error {
                report.max_relative_error = rel;
                report.worst = Some((params.primary_name(id).to_owned(), k));
            }
        }
    }
    Ok(report)
}
