//! Jain's fairness index.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FairnessError {
    #[error("no values")]
    Empty,
    #[error("all values are zero")]
    AllZero,
    #[error("value {0} is negative or not finite")]
    BadValue(f64),
}

/// `(sum x)^2 / (n * sum x^2)`. 1 when all values are equal, 1/n when only one is nonzero.
pub fn jain_index(values: &[f64]) -> Result<f64, FairnessError> {
    if values.is_empty() {
        return Err(FairnessError::Empty);
    }
    if let Some(&x) = values.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(FairnessError::BadValue(x));
    }
    let sum: f64 = values.iter().sum();
    let sq: f64 = values.iter().map(|x| x * x).sum();
    if sq == 0.0 {
        return Err(FairnessError::AllZero);
    }
    Ok(sum * sum / (values.len() as f64 * sq))
}
