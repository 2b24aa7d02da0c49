use ndarray::Array1;

use crate::error::{Error, Result};
use crate::num::Scalar;

/// Per-point lower and upper bounds for a batch of inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSet<T> {
    pub lower: Array1<T>,
    pub upper: Array1<T>,
}

impl<T: Scalar> IntervalSet<T> {
    pub fn new(lower: Array1<T>, upper: Array1<T>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        Ok(IntervalSet { lower, upper })
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn widths(&self) -> Array1<T> {
        &self.upper - &self.lower
    }

    /// Closed-interval membership.
    pub fn contains(&self, i: usize, y: T) -> bool {
        self.lower[i] <= y && y <= self.upper[i]
    }

    pub fn is_bounded(&self) -> bool {
        self.lower.iter().chain(self.upper.iter()).all(|v| v.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> IntervalSet<U> {
        IntervalSet {
            lower: self.lower.mapv(|v| U::lit(v.as_f64())),
            upper: self.upper.mapv(|v| U::lit(v.as_f64())),
        }
    }
}
