//! Central-difference verification of analytic gradients.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor2D;

/// Default finite-difference step.
pub const DEFAULT_STEP: f64 = 1e-5;

/// A parameter value paired with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientRecord<T> {
    pub id: String,
    pub value: Tensor2D<T>,
    pub gradient: Tensor2D<T>,
}

impl<T: Scalar> GradientRecord<T> {
    /// A record with a zeroed gradient.
    pub fn new(id: impl Into<String>, value: Tensor2D<T>) -> Self {
        let (r, c) = value.shape();
        Self {
            id: id.into(),
            value,
            gradient: Tensor2D::zeros(r, c),
        }
    }

    pub fn with_gradient(
        id: impl Into<String>,
        value: Tensor2D<T>,
        gradient: Tensor2D<T>,
    ) -> Result<Self> {
        if value.shape() != gradient.shape() {
            return Err(Error::Dimension(format!(
                "gradient shape {:?} differs from value shape {:?}",
                gradient.shape(),
                value.shape()
            )));
        }
        Ok(Self {
            id: id.into(),
            value,
            gradient,
        })
    }

    pub fn reset(&mut self) {
        self.gradient.fill(T::zero());
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport<T> {
    pub max_relative_error: T,
    /// Worst relative error per record, in input order.
    pub per_parameter: Vec<(String, T)>,
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error<T: Scalar>(analytic: T, numeric: T) -> T {
    let denom = analytic.abs().max(numeric.abs()).max(T::lit(1e-8));
    (analytic - numeric).abs() / denom
}

/// Compares every gradient element in `records` against the central
/// difference `(L(θ+h) − L(θ−h)) / 2h`.
///
/// `loss` receives the current parameter values, in record order, with one
/// element perturbed at a time. It is evaluated twice at the unperturbed
/// point first; differing results are reported as a determinism error.
pub fn finite_difference_check<T, F>(
    mut loss: F,
    records: &[GradientRecord<T>],
    step: T,
) -> Result<GradCheckReport<T>>
where
    T: Scalar,
    F: FnMut(&[Tensor2D<T>]) -> T,
{
    if !(step > T::zero()) {
        return Err(Error::Argument(format!("step must be positive, got {step}")));
    }
    let mut values: Vec<Tensor2D<T>> = records.iter().map(|r| r.value.clone()).collect();
    let first = loss(&values);
    let second = loss(&values);
    if first != second && !(first.is_nan() && second.is_nan()) {
        return Err(Error::Determinism {
            first: first.as_f64(),
            second: second.as_f64(),
        });
    }

    let two = T::lit(2.0);
    let mut max_err = T::zero();
    let mut per_parameter = Vec::with_capacity(records.len());
    for (k, record) in records.iter().enumerate() {
        let mut worst = T::zero();
        for idx in 0..record.value.len() {
            let orig = values[k].data()[idx];
            values[k].data_mut()[idx] = orig + step;
            let plus = loss(&values);
            values[k].data_mut()[idx] = orig - step;
            let minus = loss(&values);
            values[k].data_mut()[idx] = orig;
            let numeric = (plus - minus) / (two * step);
            let err = relative_error(record.gradient.data()[idx], numeric);
            if err > worst || err.is_nan() {
                worst = err;
            }
        }
        if worst > max_err || worst.is_nan() {
            max_err = worst;
        }
        per_parameter.push((record.id.clone(), worst));
    }
    Ok(GradCheckReport {
        max_relative_error: max_err,
        per_parameter,
    })
}
